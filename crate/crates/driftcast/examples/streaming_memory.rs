//! The streaming memory machinery: placeholder ring buffer, reservoir
//! buffer, and episodic batches.
//!
//! Run with: `cargo run -p driftcast --example streaming_memory`

use driftcast::memory::{MemoryPlaceholder, StreamingMemoryBuffer};
use driftcast::numerics::Tensor;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

fn main() -> driftcast::Result<()> {
    let (look_back, horizon) = (4, 2);
    let mut placeholder = MemoryPlaceholder::new(look_back, horizon, 1, 1);
    let mut buffer = StreamingMemoryBuffer::new(16);
    let mut rng = ChaCha8Rng::seed_from_u64(99);

    // stream 40 observations; the placeholder exposes the newest fully
    // labeled (window, horizon) sample, which we offer to the reservoir
    for t in 0..40 {
        let value = (t as f64 * 0.4).sin() * 10.0 + 20.0;
        placeholder.push(t, &Tensor::from_vec(vec![1, 1], vec![value])?)?;
        if let Some(entry) = placeholder.extract() {
            if t % 10 == 0 {
                println!(
                    "t={t}: extracted sample with window ending at {} and horizon ending at {}",
                    entry.origin_time,
                    entry.origin_time + horizon
                );
            }
            buffer.offer(entry, &mut rng);
        }
    }
    println!(
        "reservoir: {} of {} slots used after {} offers",
        buffer.len(),
        buffer.capacity(),
        buffer.items_seen()
    );

    // episodic batch for one update step
    let batch = buffer.sample(8, &mut rng);
    let mut origins: Vec<usize> = batch.entries.iter().map(|e| e.origin_time).collect();
    origins.sort_unstable();
    println!("episodic batch of {}: origins {:?}", batch.len(), origins);

    // a reset empties everything, as at each hibernate-phase start
    buffer.reset();
    println!(
        "after reset: {} slots, {} offers, sample -> {} entries",
        buffer.len(),
        buffer.items_seen(),
        buffer.sample(8, &mut rng).len()
    );
    Ok(())
}
