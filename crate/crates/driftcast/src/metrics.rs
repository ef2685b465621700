//! Forecast metrics (MAE / RMSE / WMAPE), lazy horizon scoring, and the
//! ledger file that lets a run be rescored offline.
//!
//! All metrics are computed in original (denormalized) units. Aggregation
//! order is pinned: accumulators add element errors pair by pair, in
//! resolution order, elements in (location, horizon, feature) order, so an
//! offline recomputation over the stored pairs reproduces the online report
//! bit for bit.

use crate::error::{Error, Result};
use crate::numerics::Tensor;
use crate::scheduler::Phase;
use std::collections::{BTreeMap, VecDeque};
use std::fmt::Write as _;
use std::path::Path;

fn check_shapes(pred: &Tensor, truth: &Tensor) -> Result<()> {
    if pred.shape() != truth.shape() {
        return Err(Error::ShapeMismatch {
            op: "metric",
            lhs: pred.shape().to_vec(),
            rhs: truth.shape().to_vec(),
        });
    }
    Ok(())
}

/// Mean absolute error.
pub fn mae(pred: &Tensor, truth: &Tensor) -> Result<f64> {
    check_shapes(pred, truth)?;
    let sum: f64 = pred
        .data()
        .iter()
        .zip(truth.data())
        .map(|(p, t)| (p - t).abs())
        .sum();
    Ok(sum / pred.len() as f64)
}

/// Root mean squared error.
pub fn rmse(pred: &Tensor, truth: &Tensor) -> Result<f64> {
    check_shapes(pred, truth)?;
    let sum: f64 = pred
        .data()
        .iter()
        .zip(truth.data())
        .map(|(p, t)| (p - t) * (p - t))
        .sum();
    Ok((sum / pred.len() as f64).sqrt())
}

/// Volume-weighted absolute percentage error, `sum|y - y_hat| / sum|y|`.
/// `None` when the truth is all zeros (undefined).
pub fn wmape(pred: &Tensor, truth: &Tensor) -> Result<Option<f64>> {
    check_shapes(pred, truth)?;
    let (err, vol) = pred
        .data()
        .iter()
        .zip(truth.data())
        .fold((0.0, 0.0), |(e, v), (p, t)| {
            (e + (p - t).abs(), v + t.abs())
        });
    if vol > 0.0 {
        Ok(Some(err / vol))
    } else {
        Ok(None)
    }
}

/// Error sums over a set of (prediction, truth) element pairs.
#[derive(Clone, Copy, Debug, Default)]
pub struct MetricAccumulator {
    elements: u64,
    pairs: u64,
    sum_abs_err: f64,
    sum_sq_err: f64,
    sum_abs_truth: f64,
}

impl MetricAccumulator {
    fn add_elements(&mut self, pred: &[f64], truth: &[f64]) {
        for (p, t) in pred.iter().zip(truth) {
            let e = p - t;
            self.sum_abs_err += e.abs();
            self.sum_sq_err += e * e;
            self.sum_abs_truth += t.abs();
        }
        self.elements += pred.len() as u64;
        self.pairs += 1;
    }

    pub fn elements(&self) -> u64 {
        self.elements
    }

    /// Number of (prediction, truth) pairs accumulated.
    pub fn pairs(&self) -> u64 {
        self.pairs
    }

    pub fn mae(&self) -> Option<f64> {
        (self.elements > 0).then(|| self.sum_abs_err / self.elements as f64)
    }

    pub fn rmse(&self) -> Option<f64> {
        (self.elements > 0).then(|| (self.sum_sq_err / self.elements as f64).sqrt())
    }

    pub fn wmape(&self) -> Option<f64> {
        (self.sum_abs_truth > 0.0).then(|| self.sum_abs_err / self.sum_abs_truth)
    }

    fn digest_into(&self, out: &mut Vec<u64>) {
        out.push(self.elements);
        out.push(self.pairs);
        out.push(self.sum_abs_err.to_bits());
        out.push(self.sum_sq_err.to_bits());
        out.push(self.sum_abs_truth.to_bits());
    }
}

/// One scored forecast: issued at `step`, in phase `phase`, with prediction
/// and truth both shaped (N, H, d) in original units.
#[derive(Clone, Debug)]
pub struct ResolvedPair {
    pub step: usize,
    pub phase: Phase,
    pub pred: Tensor,
    pub truth: Tensor,
}

/// Per-run metric aggregation: overall, per horizon step, and per phase.
#[derive(Clone, Debug)]
pub struct MetricReport {
    pub overall: MetricAccumulator,
    pub per_horizon: Vec<MetricAccumulator>,
    pub awake: MetricAccumulator,
    pub hibernate: MetricAccumulator,
    pub unresolved: u64,
    horizon: usize,
}

impl MetricReport {
    pub fn new(horizon: usize) -> Self {
        Self {
            overall: MetricAccumulator::default(),
            per_horizon: vec![MetricAccumulator::default(); horizon],
            awake: MetricAccumulator::default(),
            hibernate: MetricAccumulator::default(),
            unresolved: 0,
            horizon,
        }
    }

    pub fn add(&mut self, pair: &ResolvedPair) {
        let shape = pair.pred.shape();
        let (n, h, d) = (shape[0], shape[1], shape[2]);
        debug_assert_eq!(h, self.horizon);
        self.overall
            .add_elements(pair.pred.data(), pair.truth.data());
        let phase_acc = match pair.phase {
            Phase::Awake => &mut self.awake,
            Phase::Hibernate => &mut self.hibernate,
        };
        phase_acc.add_elements(pair.pred.data(), pair.truth.data());
        for step in 0..h {
            let mut pred_slice = Vec::with_capacity(n * d);
            let mut truth_slice = Vec::with_capacity(n * d);
            for loc in 0..n {
                let base = (loc * h + step) * d;
                pred_slice.extend_from_slice(&pair.pred.data()[base..base + d]);
                truth_slice.extend_from_slice(&pair.truth.data()[base..base + d]);
            }
            self.per_horizon[step].add_elements(&pred_slice, &truth_slice);
        }
    }

    /// Rebuild a report from stored pairs; with the same pair order this is
    /// bitwise identical to the online accumulation.
    pub fn from_pairs(pairs: &[ResolvedPair], horizon: usize, unresolved: u64) -> Self {
        let mut report = Self::new(horizon);
        for pair in pairs {
            report.add(pair);
        }
        report.unresolved = unresolved;
        report
    }

    /// Exact fingerprint of every accumulator (for determinism checks).
    pub fn digest(&self) -> Vec<u64> {
        let mut out = Vec::new();
        self.overall.digest_into(&mut out);
        for acc in &self.per_horizon {
            acc.digest_into(&mut out);
        }
        self.awake.digest_into(&mut out);
        self.hibernate.digest_into(&mut out);
        out.push(self.unresolved);
        out
    }

    /// Human-readable summary block.
    pub fn summary(&self) -> String {
        fn fmt(v: Option<f64>) -> String {
            v.map_or_else(|| "-".into(), |x| format!("{x:.6}"))
        }
        let mut s = String::new();
        let _ = writeln!(
            s,
            "scored {} forecasts ({} unresolved at stream end)",
            self.overall.pairs(),
            self.unresolved
        );
        let _ = writeln!(
            s,
            "overall    mae {}  rmse {}  wmape {}",
            fmt(self.overall.mae()),
            fmt(self.overall.rmse()),
            fmt(self.overall.wmape())
        );
        let _ = writeln!(
            s,
            "awake      mae {}  rmse {}  wmape {}  ({} forecasts)",
            fmt(self.awake.mae()),
            fmt(self.awake.rmse()),
            fmt(self.awake.wmape()),
            self.awake.pairs()
        );
        let _ = writeln!(
            s,
            "hibernate  mae {}  rmse {}  wmape {}  ({} forecasts)",
            fmt(self.hibernate.mae()),
            fmt(self.hibernate.rmse()),
            fmt(self.hibernate.wmape()),
            self.hibernate.pairs()
        );
        for (i, acc) in self.per_horizon.iter().enumerate() {
            let _ = writeln!(
                s,
                "horizon {:>2} mae {}  rmse {}  wmape {}",
                i + 1,
                fmt(acc.mae()),
                fmt(acc.rmse()),
                fmt(acc.wmape())
            );
        }
        s
    }
}

/// Holds issued forecasts until their full horizon has been observed.
///
/// A prediction issued at step `t` covers `t+1 ..= t+H`; it resolves exactly
/// when the observation for `t+H` arrives. Truths must arrive in strict +1
/// order. Each resolved pair is scored once and kept for offline rescoring.
pub struct PredictionLedger {
    horizon: usize,
    pending: BTreeMap<usize, (Phase, Tensor)>,
    ring: VecDeque<(usize, Tensor)>,
    pairs: Vec<ResolvedPair>,
    report: MetricReport,
    last_time: Option<usize>,
}

impl PredictionLedger {
    pub fn new(horizon: usize) -> Self {
        Self {
            horizon,
            pending: BTreeMap::new(),
            ring: VecDeque::with_capacity(horizon),
            pairs: Vec::new(),
            report: MetricReport::new(horizon),
            last_time: None,
        }
    }

    /// Register the forecast issued at step `t` (shape (N, H, d), original
    /// units).
    pub fn submit(&mut self, t: usize, phase: Phase, pred: Tensor) -> Result<()> {
        if pred.shape().len() != 3 || pred.shape()[1] != self.horizon {
            return Err(Error::ShapeMismatch {
                op: "ledger submit",
                lhs: pred.shape().to_vec(),
                rhs: vec![0, self.horizon, 0],
            });
        }
        self.pending.insert(t, (phase, pred));
        Ok(())
    }

    /// Feed the observation for step `t`; resolves the forecast issued at
    /// `t - H` when present.
    pub fn observe_truth(&mut self, t: usize, row: &Tensor) -> Result<()> {
        if let Some(last) = self.last_time {
            if t != last + 1 {
                return Err(Error::Stream(format!(
                    "ledger truths out of order: got {t}, expected {}",
                    last + 1
                )));
            }
        }
        self.last_time = Some(t);
        if self.ring.len() == self.horizon {
            self.ring.pop_front();
        }
        self.ring.push_back((t, row.clone()));

        let Some(issued_at) = t.checked_sub(self.horizon) else {
            return Ok(());
        };
        let Some((phase, pred)) = self.pending.remove(&issued_at) else {
            return Ok(());
        };
        // ring now holds exactly issued_at+1 ..= t
        debug_assert_eq!(self.ring.len(), self.horizon);
        debug_assert_eq!(self.ring.front().map(|(rt, _)| *rt), Some(issued_at + 1));
        let shape = pred.shape();
        let (n, h, d) = (shape[0], shape[1], shape[2]);
        let mut truth = vec![0.0; n * h * d];
        for (step, (_, row)) in self.ring.iter().enumerate() {
            for loc in 0..n {
                for f in 0..d {
                    truth[(loc * h + step) * d + f] = row.data()[loc * d + f];
                }
            }
        }
        let truth = Tensor::from_vec(vec![n, h, d], truth)?;
        let pair = ResolvedPair {
            step: issued_at,
            phase,
            pred,
            truth,
        };
        self.report.add(&pair);
        self.pairs.push(pair);
        Ok(())
    }

    pub fn pairs(&self) -> &[ResolvedPair] {
        &self.pairs
    }

    pub fn pending_count(&self) -> usize {
        self.pending.len()
    }

    /// Final report; trailing unresolved forecasts are counted, not scored.
    pub fn finalize(mut self) -> (MetricReport, Vec<ResolvedPair>) {
        self.report.unresolved = self.pending.len() as u64;
        (self.report, self.pairs)
    }
}

const LEDGER_MAGIC: &str = "driftcast-ledger v1";

/// Write resolved pairs as CSV-ish lines
/// `step,phase,<N*H*d predictions>,<N*H*d truths>` after a header carrying
/// the shape. 17 significant digits keep the rescore lossless.
pub fn save_pairs(pairs: &[ResolvedPair], unresolved: u64, path: &Path) -> Result<()> {
    let mut out = String::new();
    let shape = pairs.first().map(|p| p.pred.shape().to_vec());
    let (n, h, d) = match &shape {
        Some(s) => (s[0], s[1], s[2]),
        None => (0, 0, 0),
    };
    let _ = writeln!(
        out,
        "{LEDGER_MAGIC} n_locations={n} horizon={h} n_features={d} unresolved={unresolved}"
    );
    for p in pairs {
        let _ = write!(out, "{},{}", p.step, p.phase);
        for v in p.pred.data().iter().chain(p.truth.data()) {
            let _ = write!(out, ",{v:.16e}");
        }
        let _ = writeln!(out);
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Read a ledger file back; returns the pairs plus the unresolved count.
pub fn load_pairs(path: &Path) -> Result<(Vec<ResolvedPair>, u64, usize)> {
    let file = path.display().to_string();
    if !path.exists() {
        return Err(Error::MissingFile(file));
    }
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| Error::Parse {
        file: file.clone(),
        detail: "empty ledger".into(),
    })?;
    if !header.starts_with(LEDGER_MAGIC) {
        return Err(Error::Parse {
            file,
            detail: "not a ledger file".into(),
        });
    }
    let mut n = 0usize;
    let mut h = 0usize;
    let mut d = 0usize;
    let mut unresolved = 0u64;
    for field in header.split_whitespace().skip(2) {
        if let Some((k, v)) = field.split_once('=') {
            let parsed: u64 = v.parse().map_err(|_| Error::Parse {
                file: file.clone(),
                detail: format!("bad header field {field}"),
            })?;
            match k {
                "n_locations" => n = parsed as usize,
                "horizon" => h = parsed as usize,
                "n_features" => d = parsed as usize,
                "unresolved" => unresolved = parsed,
                _ => {}
            }
        }
    }
    let block = n * h * d;
    let mut pairs = Vec::new();
    for (lineno, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 2 + 2 * block {
            return Err(Error::Parse {
                file,
                detail: format!(
                    "line {}: {} fields, expected {}",
                    lineno + 2,
                    fields.len(),
                    2 + 2 * block
                ),
            });
        }
        let step: usize = fields[0].parse().map_err(|_| Error::Parse {
            file: file.clone(),
            detail: format!("line {}: bad step", lineno + 2),
        })?;
        let phase = match fields[1] {
            "awake" => Phase::Awake,
            "hibernate" => Phase::Hibernate,
            other => {
                return Err(Error::Parse {
                    file,
                    detail: format!("line {}: unknown phase '{other}'", lineno + 2),
                })
            }
        };
        let mut values = Vec::with_capacity(2 * block);
        for (col, field) in fields[2..].iter().enumerate() {
            values.push(field.parse::<f64>().map_err(|_| Error::Parse {
                file: file.clone(),
                detail: format!("line {}, value {}: non-numeric", lineno + 2, col + 1),
            })?);
        }
        pairs.push(ResolvedPair {
            step,
            phase,
            pred: Tensor::from_vec(vec![n, h, d], values[..block].to_vec())?,
            truth: Tensor::from_vec(vec![n, h, d], values[block..].to_vec())?,
        });
    }
    Ok((pairs, unresolved, h))
}

/// Per-forecast, per-horizon metric lines: `step,phase,horizon,mae,rmse,wmape`
/// (wmape empty when undefined).
pub fn write_metrics_csv(pairs: &[ResolvedPair], path: &Path) -> Result<()> {
    let mut out = String::from("step,phase,horizon,mae,rmse,wmape\n");
    for p in pairs {
        let shape = p.pred.shape();
        let (n, h, d) = (shape[0], shape[1], shape[2]);
        for step in 0..h {
            let mut pred_slice = Vec::with_capacity(n * d);
            let mut truth_slice = Vec::with_capacity(n * d);
            for loc in 0..n {
                let base = (loc * h + step) * d;
                pred_slice.extend_from_slice(&p.pred.data()[base..base + d]);
                truth_slice.extend_from_slice(&p.truth.data()[base..base + d]);
            }
            let ps = Tensor::from_vec(vec![n * d], pred_slice)?;
            let ts = Tensor::from_vec(vec![n * d], truth_slice)?;
            let w = wmape(&ps, &ts)?.map_or_else(String::new, |v| format!("{v:.6}"));
            let _ = writeln!(
                out,
                "{},{},{},{:.6},{:.6},{}",
                p.step,
                p.phase,
                step + 1,
                mae(&ps, &ts)?,
                rmse(&ps, &ts)?,
                w
            );
        }
    }
    std::fs::write(path, out)?;
    Ok(())
}
