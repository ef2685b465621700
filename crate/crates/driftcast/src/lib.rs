//! Streaming spatio-temporal forecasting with online continual learning.
//!
//! `driftcast` forecasts multivariate series over a sensor graph while the
//! data distribution drifts. A gated temporal-convolution / graph-diffusion
//! network is trained offline (warm-up), then kept fresh online by
//! fine-tuning only small per-location adapters on an awake/hibernate
//! schedule, using episodic batches drawn from a reservoir of recent
//! samples that resets every cycle.
//!
//! The crate is a library first; each major capability has a runnable
//! example:
//!
//! ```text
//! examples/
//! ├── autodiff_basics.rs       # tensors, tape, gradients vs finite differences
//! ├── model_forward.rs         # the adaptive network and its parameter split
//! ├── streaming_memory.rs      # placeholder ring, reservoir buffer, episodic draws
//! ├── awake_hibernate.rs       # the phase schedule
//! ├── synthetic_drift.rs       # generating drifting benchmark streams
//! ├── warmup_training.rs       # offline training with early stopping
//! ├── online_adaptation.rs     # full online run: adaptive vs frozen
//! └── strategy_comparison.rs   # ablation presets side by side
//! ```
//!
//! Run one with `cargo run --release -p driftcast --example online_adaptation`.
//!
//! There is also a thin `driftcast` binary wrapping the same library calls:
//! `generate` (synthesize a dataset directory), `run` (warm-up + online
//! stream, writing metrics/run-log/ledger files), `eval` (rescore a stored
//! ledger), and `gradcheck` (finite-difference validation).
//!
//! ## Layout
//!
//! - [`numerics`]: dense f64 tensors and tape-based reverse-mode autodiff
//! - [`model`]: the adaptive ST network (embedding, per-location adapters,
//!   gated TCN + graph diffusion, decoder) and checkpoint files
//! - [`memory`]: observation ring buffer, reservoir-sampled replay buffer,
//!   episodic batches, snapshot files
//! - [`scheduler`]: calendar-aligned awake/hibernate phase clock
//! - [`engine`]: AdamW, warm-up training, the online session, run orchestration
//! - [`data`]: dataset directories, phase splits, z-score normalization,
//!   synthetic drift generator
//! - [`metrics`]: MAE/RMSE/WMAPE, lazy horizon scoring, ledger files
//! - [`config`]: run-config files and strategy presets
//! - [`cli`]: the command surface used by the binary

pub mod cli;
pub mod config;
pub mod data;
pub mod diagnostics;
pub mod engine;
pub mod error;
pub mod memory;
pub mod metrics;
pub mod model;
pub mod numerics;
pub mod scheduler;

pub use error::{Error, Result};

pub mod prelude {
    pub use crate::config::{RunConfig, StrategyPreset};
    pub use crate::data::{
        generate_synthetic, load_dataset, save_dataset, split_phases, NormStats, SeriesFrame,
        SyntheticSpec,
    };
    pub use crate::engine::{
        run_stream, MemoryMode, OnlineSession, RunSettings, StrategyConfig, TrainerConfig,
        UpdateScope,
    };
    pub use crate::memory::{MemoryEntry, MemoryPlaceholder, StreamingMemoryBuffer};
    pub use crate::metrics::{mae, rmse, wmape, MetricReport, PredictionLedger};
    pub use crate::model::{AdaptiveSTNetwork, AdjacencyMatrix, ModelConfig};
    pub use crate::numerics::{Tape, Tensor};
    pub use crate::scheduler::{AHConfig, Phase, PhaseClock};
}
