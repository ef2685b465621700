//! Ablation presets side by side on one drifting stream: each preset shares
//! the same warm-up and differs only in its online behavior.
//!
//! Run with: `cargo run --release -p driftcast --example strategy_comparison`

use driftcast::config::{RunConfig, StrategyPreset};
use driftcast::data::{generate_synthetic, SyntheticSpec};
use driftcast::engine::{prepare_run, run_online};
use driftcast::model::AdjacencyMatrix;

fn main() -> driftcast::Result<()> {
    // a shorter stream than the benchmark keeps every preset fast
    let dataset = generate_synthetic(&SyntheticSpec {
        n_locations: 6,
        days: 70,
        interval_minutes: 120,
        ..SyntheticSpec::reference(7)
    })?;
    let adjacency = AdjacencyMatrix::new(dataset.adjacency.clone())?;
    let week = dataset.frame.meta.intervals_per_week();

    let base = RunConfig {
        embed_dim: 16,
        st_output_dim: 64,
        awake_len: Some(week),
        smb_capacity: 100,
        trainer: driftcast::engine::TrainerConfig {
            seed: 7,
            max_epochs: 60,
            ..Default::default()
        },
        ..RunConfig::default()
    };

    // warm-up once per model shape; presets that only change the strategy
    // reuse it
    let shared = prepare_run(
        &dataset.frame,
        &adjacency,
        &base.run_settings(&dataset.frame.meta),
    )?;
    println!(
        "shared warm-up: {} epochs, best validation MAE {:.4}\n",
        shared.warmup.epochs_run, shared.warmup.best_val_mae
    );
    println!(
        "{:<16} {:>10} {:>10} {:>10}",
        "preset", "mae", "rmse", "wmape"
    );

    for preset in StrategyPreset::ALL {
        let mut cfg = base.clone();
        preset.apply(&mut cfg);
        let settings = cfg.run_settings(&dataset.frame.meta);
        // model-shape presets need their own warm-up
        let output = if settings.model == shared.net.config().clone() && cfg.use_adapter {
            run_online(&shared, &dataset.frame, &adjacency, &settings)?
        } else {
            driftcast::engine::run_stream(&dataset.frame, &adjacency, &settings)?
        };
        let r = &output.report.overall;
        println!(
            "{:<16} {:>10.4} {:>10.4} {:>10.4}",
            preset.name(),
            r.mae().unwrap(),
            r.rmse().unwrap(),
            r.wmape().unwrap()
        );
    }
    Ok(())
}
