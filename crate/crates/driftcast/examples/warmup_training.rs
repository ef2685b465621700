//! Offline warm-up: shuffled mini-batch training with early stopping on
//! validation MAE, restoring the best epoch.
//!
//! Run with: `cargo run --release -p driftcast --example warmup_training`

use driftcast::data::{generate_synthetic, split_phases, NormStats, SyntheticSpec};
use driftcast::engine::{validation_mae, warmup_train, windows_in_range, TrainerConfig};
use driftcast::model::{AdaptiveSTNetwork, AdjacencyMatrix, ModelConfig};

fn main() -> driftcast::Result<()> {
    let dataset = generate_synthetic(&SyntheticSpec {
        days: 28,
        ..SyntheticSpec::reference(3)
    })?;
    let adjacency = AdjacencyMatrix::new(dataset.adjacency.clone())?;

    let split = split_phases(dataset.frame.n_steps())?;
    println!(
        "split: train {:?}, val {:?}, online {:?}",
        split.warmup_train, split.warmup_val, split.online
    );

    // statistics come from the training slice only
    let stats = NormStats::fit(&dataset.frame, split.warmup_train.clone())?;
    println!(
        "normalization: mean {:.2}, std {:.2}",
        stats.mean()[0],
        stats.std()[0]
    );

    let mut config = ModelConfig::reference(10, 1);
    config.embed_dim = 16;
    config.st_output_dim = 64;
    let train = windows_in_range(
        &dataset.frame,
        config.look_back,
        config.horizon,
        split.warmup_train,
    );
    let val = windows_in_range(
        &dataset.frame,
        config.look_back,
        config.horizon,
        split.warmup_val,
    );
    println!(
        "{} training windows, {} validation windows",
        train.len(),
        val.len()
    );

    let mut net = AdaptiveSTNetwork::new(config, 11)?;
    let trainer = TrainerConfig {
        max_epochs: 40,
        seed: 11,
        ..TrainerConfig::default()
    };
    let report = warmup_train(&mut net, &adjacency, &train, &val, &stats, &trainer, true)?;
    println!(
        "trained {} epochs; best epoch {} with validation MAE {:.4}",
        report.epochs_run, report.best_epoch, report.best_val_mae
    );
    let first = report.val_history.first().unwrap();
    let last_shown = report
        .val_history
        .iter()
        .take(8)
        .cloned()
        .collect::<Vec<_>>();
    println!("validation trace (first epochs): {last_shown:?}");
    assert!(report.best_val_mae < *first);

    // the restored network reproduces the best validation score exactly
    let check = validation_mae(&net, &adjacency, &val, &stats, true)?;
    assert_eq!(check, report.best_val_mae);
    println!("best-epoch snapshot restored");
    Ok(())
}
