//! End-to-end orchestration: warm-up training with early stopping, buffer
//! seeding from the validation stream, and the online loop that alternates
//! adapter fine-tuning (awake) with frozen forecasting (hibernate).

mod optim;

pub use optim::AdamW;

use crate::data::{split_phases, NormStats, PhaseSplit, SeriesFrame};
use crate::error::{Error, Result};
use crate::memory::{EpisodicBatch, MemoryEntry, MemoryPlaceholder, StreamingMemoryBuffer};
use crate::metrics::{MetricReport, PredictionLedger, ResolvedPair};
use crate::model::{AdaptiveSTNetwork, AdjacencyMatrix, ModelConfig};
use crate::numerics::{ParamId, Tape, Tensor};
use crate::scheduler::{AHConfig, Phase, PhaseClock};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use std::fmt::Write as _;
use std::ops::Range;
use std::path::Path;
use std::time::Instant;

/// Optimizer and training-loop settings. The reference values are a 1e-3
/// learning rate, patience 10, and at most 150 epochs.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainerConfig {
    pub learning_rate: f64,
    pub max_epochs: usize,
    pub patience: usize,
    pub batch_size: usize,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub seed: u64,
}

impl Default for TrainerConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            max_epochs: 150,
            patience: 10,
            batch_size: 32,
            weight_decay: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            seed: 0,
        }
    }
}

/// Which parameters the online phase may update.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum UpdateScope {
    /// Only the adapter set (the default).
    Adapter,
    /// Every parameter.
    Full,
    /// Nothing: replay the warm-up model frozen.
    None,
}

impl UpdateScope {
    pub fn as_str(&self) -> &'static str {
        match self {
            UpdateScope::Adapter => "adapter",
            UpdateScope::Full => "full",
            UpdateScope::None => "none",
        }
    }
}

/// How the online update batch is assembled.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MemoryMode {
    /// Episodic batch sampled from the cycle-reset reservoir (the default).
    Smu,
    /// Like `Smu`, with the most recent extracted sample appended.
    Smur,
    /// Batch from a never-reset reservoir plus the current sample.
    Er,
    /// No memory-driven updates.
    None,
}

impl MemoryMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            MemoryMode::Smu => "smu",
            MemoryMode::Smur => "smur",
            MemoryMode::Er => "er",
            MemoryMode::None => "none",
        }
    }
}

/// Online learning strategy knobs.
#[derive(Clone, Debug, PartialEq)]
pub struct StrategyConfig {
    pub update_scope: UpdateScope,
    pub hibernate_enabled: bool,
    pub reset_enabled: bool,
    pub memory_mode: MemoryMode,
    pub lambda_override: Option<f64>,
}

impl Default for StrategyConfig {
    fn default() -> Self {
        Self {
            update_scope: UpdateScope::Adapter,
            hibernate_enabled: true,
            reset_enabled: true,
            memory_mode: MemoryMode::Smu,
            lambda_override: None,
        }
    }
}

/// Per-step log row of the online loop.
#[derive(Clone, Debug)]
pub struct RunRecord {
    pub step: usize,
    pub phase: Phase,
    pub forward_count: usize,
    pub backward_count: usize,
    /// Step index of the forecast issued here, if one was available.
    pub prediction_step: Option<usize>,
    /// Batch MAE of the update pass, in normalized units (awake only).
    pub loss: Option<f64>,
    pub wall_time_ms: f64,
}

/// Early-stopping counter: strict improvements reset it, ties do not.
#[derive(Clone, Debug)]
pub struct EarlyStopping {
    patience: usize,
    best: f64,
    best_epoch: usize,
    since_best: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        Self {
            patience,
            best: f64::INFINITY,
            best_epoch: 0,
            since_best: 0,
        }
    }

    /// Record a validation score; returns true when training should stop.
    pub fn observe(&mut self, epoch: usize, score: f64) -> bool {
        if score < self.best {
            self.best = score;
            self.best_epoch = epoch;
            self.since_best = 0;
            false
        } else {
            self.since_best += 1;
            self.since_best >= self.patience
        }
    }

    pub fn best_epoch(&self) -> usize {
        self.best_epoch
    }

    pub fn best_score(&self) -> f64 {
        self.best
    }
}

/// All complete (window, horizon) samples whose spans lie inside `range`.
pub fn windows_in_range(
    frame: &SeriesFrame,
    look_back: usize,
    horizon: usize,
    range: Range<usize>,
) -> Vec<MemoryEntry> {
    let span = look_back + horizon;
    if range.len() < span {
        return Vec::new();
    }
    let n = frame.meta.n_locations;
    let d = frame.meta.n_features;
    let row_len = n * d;
    let data = frame.values.data();
    let mut entries = Vec::with_capacity(range.len() - span + 1);
    for origin in range.start + look_back - 1..range.end - horizon {
        let x_start = origin + 1 - look_back;
        let x = Tensor::from_vec(
            vec![look_back, n, d],
            data[x_start * row_len..(origin + 1) * row_len].to_vec(),
        )
        .expect("window slice");
        let y = Tensor::from_vec(
            vec![horizon, n, d],
            data[(origin + 1) * row_len..(origin + 1 + horizon) * row_len].to_vec(),
        )
        .expect("horizon slice");
        entries.push(MemoryEntry {
            x,
            y,
            origin_time: origin,
        });
    }
    entries
}

/// Normalize a time-major (T, N, d) block and reorder it to the model's
/// location-major layout.
fn to_model_layout(stats: &NormStats, time_major: &Tensor) -> Result<Tensor> {
    stats.normalize(time_major).swap_axes01()
}

/// Record one forward pass for `entry` and return its scalar MAE loss node.
fn entry_loss(
    net: &AdaptiveSTNetwork,
    tape: &mut Tape,
    bound: &crate::model::BoundParams,
    adj: &AdjacencyMatrix,
    stats: &NormStats,
    entry: &MemoryEntry,
    use_adapter: bool,
) -> Result<crate::numerics::Var> {
    let x = tape.constant(to_model_layout(stats, &entry.x)?);
    let target = tape.constant(to_model_layout(stats, &entry.y)?);
    let pred = net.forward(tape, bound, x, adj, use_adapter)?;
    let diff = tape.sub(pred, target)?;
    let abs = tape.abs(diff);
    Ok(tape.mean_all(abs))
}

/// One gradient step on a batch: forward per entry, batch-mean MAE, one
/// backward, one optimizer step over the scope's parameters.
///
/// Returns the batch loss (normalized units), or `None` for an empty batch.
/// Under [`UpdateScope::Adapter`] every traditional parameter is bitwise
/// untouched; under [`UpdateScope::None`] this is a no-op.
pub fn adapt_on_batch(
    net: &mut AdaptiveSTNetwork,
    adj: &AdjacencyMatrix,
    batch: &EpisodicBatch,
    stats: &NormStats,
    optimizer: &mut AdamW,
    scope: UpdateScope,
    use_adapter: bool,
) -> Result<Option<f64>> {
    if batch.is_empty() || scope == UpdateScope::None {
        return Ok(None);
    }
    let ids: Vec<ParamId> = match scope {
        UpdateScope::Adapter => net.params_adapter(),
        UpdateScope::Full => net.store().ids().collect(),
        UpdateScope::None => unreachable!(),
    };
    match scope {
        UpdateScope::Adapter => net.store_mut().set_trainable_exactly(&ids),
        UpdateScope::Full => net.store_mut().set_all_trainable(),
        UpdateScope::None => unreachable!(),
    }

    let mut tape = Tape::new();
    let bound = net.bind(&mut tape);
    let mut losses = Vec::with_capacity(batch.len());
    for entry in &batch.entries {
        losses.push(entry_loss(
            net,
            &mut tape,
            &bound,
            adj,
            stats,
            entry,
            use_adapter,
        )?);
    }
    let stacked = tape.stack0(&losses)?;
    let loss = tape.mean_all(stacked);
    let loss_value = tape.value(loss).item()?;
    tape.backward(loss)?;
    net.store_mut().zero_grad();
    tape.accumulate_param_grads(net.store_mut())?;
    optimizer.step(net.store_mut(), &ids)?;
    Ok(Some(loss_value))
}

/// Warm-up outcome: the restored best epoch and the validation trace.
#[derive(Clone, Debug)]
pub struct WarmupReport {
    pub epochs_run: usize,
    pub best_epoch: usize,
    pub best_val_mae: f64,
    pub val_history: Vec<f64>,
}

/// Mini-batch MAE training over shuffled windows with early stopping on
/// unshuffled validation MAE (original units). Restores the best-epoch
/// parameters before returning.
pub fn warmup_train(
    net: &mut AdaptiveSTNetwork,
    adj: &AdjacencyMatrix,
    train: &[MemoryEntry],
    val: &[MemoryEntry],
    stats: &NormStats,
    cfg: &TrainerConfig,
    use_adapter: bool,
) -> Result<WarmupReport> {
    if train.is_empty() {
        return Err(Error::Config("empty warm-up training set".into()));
    }
    if val.is_empty() {
        return Err(Error::Config("empty warm-up validation set".into()));
    }
    net.store_mut().set_all_trainable();
    let all_ids: Vec<ParamId> = net.store().ids().collect();
    let mut optimizer = AdamW::new(
        net.store(),
        cfg.learning_rate,
        (cfg.beta1, cfg.beta2),
        cfg.epsilon,
        cfg.weight_decay,
    );
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(SHUFFLE_SALT));

    let mut stopper = EarlyStopping::new(cfg.patience);
    let mut best_snapshot = net.store().snapshot();
    let mut val_history = Vec::new();
    let mut epochs_run = 0;

    for epoch in 1..=cfg.max_epochs {
        epochs_run = epoch;
        let mut order: Vec<usize> = (0..train.len()).collect();
        order.shuffle(&mut shuffle_rng);
        for chunk in order.chunks(cfg.batch_size.max(1)) {
            let batch = EpisodicBatch {
                entries: chunk.iter().map(|&i| train[i].clone()).collect(),
            };
            adapt_on_batch(
                net,
                adj,
                &batch,
                stats,
                &mut optimizer,
                UpdateScope::Full,
                use_adapter,
            )?;
        }

        let val_mae = validation_mae(net, adj, val, stats, use_adapter)?;
        val_history.push(val_mae);
        let stop = stopper.observe(epoch, val_mae);
        if stopper.best_epoch() == epoch {
            best_snapshot = net.store().snapshot();
        }
        if stop {
            break;
        }
    }

    net.store_mut().restore(&best_snapshot)?;
    net.store_mut().set_trainable_exactly(&all_ids);
    Ok(WarmupReport {
        epochs_run,
        best_epoch: stopper.best_epoch(),
        best_val_mae: stopper.best_score(),
        val_history,
    })
}

// fixed salts keep the shuffle and online RNG streams independent of each
// other while staying a pure function of the run seed
const SHUFFLE_SALT: u64 = 0x7d5f_21c4_9a3e_0b17;
const SESSION_SALT: u64 = 0x11d3_58a2_64f0_9c3b;

/// Mean absolute error of the network over `entries`, in original units.
pub fn validation_mae(
    net: &AdaptiveSTNetwork,
    adj: &AdjacencyMatrix,
    entries: &[MemoryEntry],
    stats: &NormStats,
    use_adapter: bool,
) -> Result<f64> {
    if entries.is_empty() {
        return Err(Error::Config("no validation samples".into()));
    }
    let mut sum = 0.0;
    let mut count = 0usize;
    for entry in entries {
        let x = to_model_layout(stats, &entry.x)?;
        let pred_norm = net.predict(&x, adj, use_adapter)?;
        let pred = stats.denormalize(&pred_norm);
        let truth = entry.y.swap_axes01()?;
        sum += pred
            .data()
            .iter()
            .zip(truth.data())
            .map(|(p, t)| (p - t).abs())
            .sum::<f64>();
        count += pred.len();
    }
    Ok(sum / count as f64)
}

/// Offer every validation sample to the buffer in temporal order.
pub fn seed_smb(smb: &mut StreamingMemoryBuffer, entries: &[MemoryEntry], rng: &mut impl Rng) {
    for entry in entries {
        smb.offer(entry.clone(), rng);
    }
}

/// Everything the online loop needs, with step-level access for tests and
/// instrumentation. Strictly sequential: feed observations in +1 time order.
pub struct OnlineSession {
    net: AdaptiveSTNetwork,
    adj: AdjacencyMatrix,
    stats: NormStats,
    clock: PhaseClock,
    strategy: StrategyConfig,
    use_adapter: bool,
    em_size: usize,
    mp: MemoryPlaceholder,
    smb: StreamingMemoryBuffer,
    er_buffer: Option<StreamingMemoryBuffer>,
    latest_entry: Option<MemoryEntry>,
    optimizer: AdamW,
    rng: ChaCha8Rng,
    records: Vec<RunRecord>,
}

/// What one online step produced.
#[derive(Clone, Debug)]
pub struct StepOutcome {
    pub phase: Phase,
    /// Denormalized forecast (N, H, d) issued at this step, when at least
    /// `L` observations have been seen.
    pub prediction: Option<Tensor>,
    pub record: RunRecord,
}

impl OnlineSession {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        net: AdaptiveSTNetwork,
        adj: AdjacencyMatrix,
        stats: NormStats,
        clock: PhaseClock,
        strategy: StrategyConfig,
        use_adapter: bool,
        smb_capacity: usize,
        em_size: usize,
        trainer: &TrainerConfig,
    ) -> Self {
        let cfg = net.config();
        let mp =
            MemoryPlaceholder::new(cfg.look_back, cfg.horizon, cfg.n_locations, cfg.n_features);
        let er_buffer = (strategy.memory_mode == MemoryMode::Er)
            .then(|| StreamingMemoryBuffer::new(smb_capacity));
        let optimizer = AdamW::new(
            net.store(),
            trainer.learning_rate,
            (trainer.beta1, trainer.beta2),
            trainer.epsilon,
            trainer.weight_decay,
        );
        let rng = ChaCha8Rng::seed_from_u64(trainer.seed.wrapping_add(SESSION_SALT));
        Self {
            net,
            adj,
            stats,
            clock,
            strategy,
            use_adapter,
            em_size,
            mp,
            smb: StreamingMemoryBuffer::new(smb_capacity),
            er_buffer,
            latest_entry: None,
            optimizer,
            rng,
            records: Vec::new(),
        }
    }

    /// Feed a pre-online observation so forecasts and extraction are warm
    /// from the first online step.
    pub fn prime(&mut self, t: usize, row: &Tensor) -> Result<()> {
        self.mp.push(t, row)
    }

    /// Offer warm-up validation samples to the buffers.
    pub fn seed_from_validation(&mut self, entries: &[MemoryEntry]) {
        seed_smb(&mut self.smb, entries, &mut self.rng);
        if let Some(er) = &mut self.er_buffer {
            seed_smb(er, entries, &mut self.rng);
        }
    }

    pub fn net(&self) -> &AdaptiveSTNetwork {
        &self.net
    }

    pub fn into_net(self) -> AdaptiveSTNetwork {
        self.net
    }

    pub fn smb(&self) -> &StreamingMemoryBuffer {
        &self.smb
    }

    pub fn records(&self) -> &[RunRecord] {
        &self.records
    }

    /// Process the observation for timestep `t`: update memory, run the
    /// phase-appropriate update, then forecast.
    pub fn step(&mut self, t: usize, row: &Tensor) -> Result<StepOutcome> {
        let started = Instant::now();
        self.mp.push(t, row)?;

        let phase = if self.strategy.hibernate_enabled {
            self.clock.phase_at(t)?
        } else {
            Phase::Awake
        };
        if self.strategy.hibernate_enabled
            && self.strategy.reset_enabled
            && self.clock.is_hibernate_start(t)?
        {
            self.smb.reset();
        }

        if let Some(entry) = self.mp.extract() {
            self.smb.offer(entry.clone(), &mut self.rng);
            if let Some(er) = &mut self.er_buffer {
                er.offer(entry.clone(), &mut self.rng);
            }
            self.latest_entry = Some(entry);
        }

        let mut forward_count = 0usize;
        let mut backward_count = 0usize;
        let mut loss = None;
        if phase == Phase::Awake
            && self.strategy.update_scope != UpdateScope::None
            && self.strategy.memory_mode != MemoryMode::None
        {
            let mut batch = match self.strategy.memory_mode {
                MemoryMode::Smu => self.smb.sample(self.em_size, &mut self.rng),
                MemoryMode::Smur => self.smb.sample(self.em_size, &mut self.rng),
                MemoryMode::Er => self
                    .er_buffer
                    .as_ref()
                    .expect("er mode keeps a global buffer")
                    .sample(self.em_size, &mut self.rng),
                MemoryMode::None => EpisodicBatch::default(),
            };
            if matches!(self.strategy.memory_mode, MemoryMode::Smur | MemoryMode::Er) {
                if let Some(latest) = &self.latest_entry {
                    batch.entries.push(latest.clone());
                }
            }
            if let Some(batch_loss) = adapt_on_batch(
                &mut self.net,
                &self.adj,
                &batch,
                &self.stats,
                &mut self.optimizer,
                self.strategy.update_scope,
                self.use_adapter,
            )? {
                forward_count += batch.len();
                backward_count += 1;
                loss = Some(batch_loss);
            }
        }

        let prediction = match self.mp.last_window(self.net.config().look_back) {
            Some(window) => {
                let x = to_model_layout(&self.stats, &window)?;
                let pred_norm = self.net.predict(&x, &self.adj, self.use_adapter)?;
                forward_count += 1;
                Some(self.stats.denormalize(&pred_norm))
            }
            None => None,
        };

        let record = RunRecord {
            step: t,
            phase,
            forward_count,
            backward_count,
            prediction_step: prediction.is_some().then_some(t),
            loss,
            wall_time_ms: started.elapsed().as_secs_f64() * 1e3,
        };
        self.records.push(record.clone());
        Ok(StepOutcome {
            phase,
            prediction,
            record,
        })
    }
}

/// Run-level settings shared by warm-up and the online loop.
#[derive(Clone, Debug)]
pub struct RunSettings {
    pub model: ModelConfig,
    pub trainer: TrainerConfig,
    pub strategy: StrategyConfig,
    pub use_adapter: bool,
    /// Awake phase length; `None` means one week of intervals.
    pub awake_len: Option<usize>,
    pub lambda: f64,
    pub smb_capacity: usize,
    pub em_size: usize,
}

/// Warm-up products that both a run and a paired strategy comparison reuse.
pub struct PreparedRun {
    pub net: AdaptiveSTNetwork,
    pub stats: NormStats,
    pub split: PhaseSplit,
    pub warmup: WarmupReport,
    pub val_entries: Vec<MemoryEntry>,
}

/// Everything a finished run reports.
pub struct RunOutput {
    pub warmup: WarmupReport,
    pub records: Vec<RunRecord>,
    pub report: MetricReport,
    pub pairs: Vec<ResolvedPair>,
    pub net: AdaptiveSTNetwork,
}

/// Split the frame, fit normalization on the training slice only, and train
/// the network to its best validation epoch.
pub fn prepare_run(
    frame: &SeriesFrame,
    adj: &AdjacencyMatrix,
    settings: &RunSettings,
) -> Result<PreparedRun> {
    let cfg = &settings.model;
    if cfg.n_locations != frame.meta.n_locations || cfg.n_features != frame.meta.n_features {
        return Err(Error::Config(format!(
            "model is ({}, {}) locations/features but dataset is ({}, {})",
            cfg.n_locations, cfg.n_features, frame.meta.n_locations, frame.meta.n_features
        )));
    }
    let split = split_phases(frame.n_steps())?;
    let stats = NormStats::fit(frame, split.warmup_train.clone())?;
    let train = windows_in_range(
        frame,
        cfg.look_back,
        cfg.horizon,
        split.warmup_train.clone(),
    );
    let val = windows_in_range(frame, cfg.look_back, cfg.horizon, split.warmup_val.clone());
    let mut net = AdaptiveSTNetwork::new(cfg.clone(), settings.trainer.seed)?;
    let warmup = warmup_train(
        &mut net,
        adj,
        &train,
        &val,
        &stats,
        &settings.trainer,
        settings.use_adapter,
    )?;
    Ok(PreparedRun {
        net,
        stats,
        split,
        warmup,
        val_entries: val,
    })
}

/// Run the online phase from a prepared warm-up (the network is cloned, so
/// one preparation can serve several strategies).
pub fn run_online(
    prepared: &PreparedRun,
    frame: &SeriesFrame,
    adj: &AdjacencyMatrix,
    settings: &RunSettings,
) -> Result<RunOutput> {
    let cfg = &settings.model;
    let online = prepared.split.online.clone();
    let intervals_per_week = frame.meta.intervals_per_week();
    let lambda = settings.strategy.lambda_override.unwrap_or(settings.lambda);
    let clock = PhaseClock::new(AHConfig::new(
        intervals_per_week,
        settings.awake_len.unwrap_or(intervals_per_week),
        lambda,
        online.start,
    )?);

    let mut session = OnlineSession::new(
        prepared.net.clone(),
        adj.clone(),
        prepared.stats.clone(),
        clock,
        settings.strategy.clone(),
        settings.use_adapter,
        settings.smb_capacity,
        settings.em_size,
        &settings.trainer,
    );
    session.seed_from_validation(&prepared.val_entries);

    // prime the placeholder with the warm-up tail so the first online step
    // can both extract and forecast
    let span = cfg.look_back + cfg.horizon;
    let prime_start = online.start.saturating_sub(span - 1);
    for t in prime_start..online.start {
        session.prime(t, &frame.row(t))?;
    }

    let mut ledger = PredictionLedger::new(cfg.horizon);
    for t in online.clone() {
        let row = frame.row(t);
        ledger.observe_truth(t, &row)?;
        let outcome = session.step(t, &row)?;
        if let Some(pred) = outcome.prediction {
            ledger.submit(t, outcome.phase, pred)?;
        }
    }

    let (report, pairs) = ledger.finalize();
    Ok(RunOutput {
        warmup: prepared.warmup.clone(),
        records: session.records().to_vec(),
        report,
        pairs,
        net: session.into_net(),
    })
}

/// Warm-up, seeding, and online loop in one call.
pub fn run_stream(
    frame: &SeriesFrame,
    adj: &AdjacencyMatrix,
    settings: &RunSettings,
) -> Result<RunOutput> {
    let prepared = prepare_run(frame, adj, settings)?;
    run_online(&prepared, frame, adj, settings)
}

/// Line-delimited run log: `step,phase,fwd,bwd,loss` (loss empty on steps
/// without an update pass).
pub fn write_run_log(records: &[RunRecord], path: &Path) -> Result<()> {
    let mut out = String::from("step,phase,fwd,bwd,loss\n");
    for r in records {
        let loss = r.loss.map_or_else(String::new, |l| format!("{l:.16e}"));
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            r.step, r.phase, r.forward_count, r.backward_count, loss
        );
    }
    std::fs::write(path, out)?;
    Ok(())
}
