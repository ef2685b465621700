//! Build the adaptive network, inspect its parameter split, and forecast.
//!
//! Run with: `cargo run -p driftcast --example model_forward`

use driftcast::model::{AdaptiveSTNetwork, AdjacencyMatrix, ModelConfig};
use driftcast::numerics::Tensor;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

fn main() -> driftcast::Result<()> {
    // 8 locations, hourly features, reference dimensions
    let config = ModelConfig::reference(8, 1);
    let net = AdaptiveSTNetwork::new(config.clone(), 42)?;

    let adapter = net.params_adapter();
    let traditional = net.params_traditional();
    println!(
        "parameters: {} adapter tensors ({} entries), {} traditional tensors ({} entries)",
        adapter.len(),
        net.store().entry_count(&adapter),
        traditional.len(),
        net.store().entry_count(&traditional),
    );

    // a ring of sensors
    let n = config.n_locations;
    let mut ring = Tensor::zeros(vec![n, n]);
    for i in 0..n {
        let j = (i + 1) % n;
        ring.data_mut()[i * n + j] = 1.0;
        ring.data_mut()[j * n + i] = 1.0;
    }
    let adjacency = AdjacencyMatrix::new(ring)?;

    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let window = Tensor::from_vec(
        vec![n, config.look_back, 1],
        (0..n * config.look_back)
            .map(|_| rng.random_range(-1.0..1.0))
            .collect(),
    )?;

    let with_adapter = net.predict(&window, &adjacency, true)?;
    let without = net.predict(&window, &adjacency, false)?;
    println!("forecast shape: {:?}", with_adapter.shape());
    // freshly initialized adapters are exact identities
    assert!(with_adapter.bitwise_eq(&without));
    println!("adapter path is an exact identity at initialization");

    println!(
        "first location, first three horizon steps: {:?}",
        &with_adapter.data()[..3]
    );
    Ok(())
}
