//! Dataset ingestion, phase splitting, and z-score normalization.
//!
//! Datasets live in a directory of three files: `meta.txt` (key=value),
//! `series.csv` (T rows by N*d columns, header `loc<i>_f<j>` in
//! location-major order), and `adjacency.csv` (N by N, no header). Floats
//! are written with 17 significant digits so a round trip is lossless.

mod synthetic;

pub use synthetic::{generate_synthetic, SyntheticDataset, SyntheticSpec};

use crate::error::{Error, Result};
use crate::model::AdjacencyMatrix;
use crate::numerics::Tensor;
use std::io::Write as _;
use std::ops::Range;
use std::path::Path;

#[derive(Clone, Debug, PartialEq)]
pub struct DatasetMeta {
    pub n_locations: usize,
    pub n_features: usize,
    pub interval_minutes: usize,
    pub n_steps: usize,
    pub feature_names: Vec<String>,
}

impl DatasetMeta {
    pub fn intervals_per_week(&self) -> usize {
        10080 / self.interval_minutes
    }

    pub fn validate(&self) -> Result<()> {
        if self.interval_minutes == 0 || 10080 % self.interval_minutes != 0 {
            return Err(Error::Config(format!(
                "interval_minutes {} must divide 10080",
                self.interval_minutes
            )));
        }
        if self.n_locations == 0 || self.n_features == 0 || self.n_steps == 0 {
            return Err(Error::Config("empty dataset dimensions".into()));
        }
        if self.feature_names.len() != self.n_features {
            return Err(Error::Config(format!(
                "{} feature names for {} features",
                self.feature_names.len(),
                self.n_features
            )));
        }
        Ok(())
    }
}

/// A full series: values of shape (T, N, d) plus its metadata.
#[derive(Clone, Debug)]
pub struct SeriesFrame {
    pub values: Tensor,
    pub meta: DatasetMeta,
}

impl SeriesFrame {
    pub fn new(values: Tensor, meta: DatasetMeta) -> Result<Self> {
        meta.validate()?;
        let expected = [meta.n_steps, meta.n_locations, meta.n_features];
        if values.shape() != expected {
            return Err(Error::ShapeMismatch {
                op: "series frame",
                lhs: values.shape().to_vec(),
                rhs: expected.to_vec(),
            });
        }
        if !values.is_finite() {
            return Err(Error::Numeric("series contains non-finite values".into()));
        }
        Ok(Self { values, meta })
    }

    pub fn n_steps(&self) -> usize {
        self.meta.n_steps
    }

    /// Observation row at timestep `t`, shape (N, d).
    pub fn row(&self, t: usize) -> Tensor {
        let row_len = self.meta.n_locations * self.meta.n_features;
        Tensor::from_vec(
            vec![self.meta.n_locations, self.meta.n_features],
            self.values.data()[t * row_len..(t + 1) * row_len].to_vec(),
        )
        .expect("row slice")
    }
}

/// Contiguous index ranges for warm-up training, warm-up validation, and the
/// online stream, in a 2:6 warm-up:online split with warm-up further divided
/// 4:1 into train and validation.
#[derive(Clone, Debug, PartialEq)]
pub struct PhaseSplit {
    pub warmup_train: Range<usize>,
    pub warmup_val: Range<usize>,
    pub online: Range<usize>,
}

pub fn split_phases(total_steps: usize) -> Result<PhaseSplit> {
    if total_steps < 8 {
        return Err(Error::Config(format!(
            "need at least 8 timesteps to split phases, got {total_steps}"
        )));
    }
    let warmup = total_steps * 2 / 8;
    let train = warmup * 4 / 5;
    Ok(PhaseSplit {
        warmup_train: 0..train,
        warmup_val: train..warmup,
        online: warmup..total_steps,
    })
}

/// Per-feature z-score statistics, fit on the warm-up training slice only.
#[derive(Clone, Debug, PartialEq)]
pub struct NormStats {
    mean: Vec<f64>,
    std: Vec<f64>,
}

impl NormStats {
    /// Explicit statistics (one mean/std pair per feature).
    pub fn manual(mean: Vec<f64>, std: Vec<f64>) -> Result<Self> {
        if mean.len() != std.len() || mean.is_empty() {
            return Err(Error::Config("mean/std length mismatch".into()));
        }
        if std.iter().any(|&s| !s.is_finite() || s <= 0.0) {
            return Err(Error::Config("std must be positive".into()));
        }
        Ok(Self { mean, std })
    }

    /// Fit over `range` of the frame (all locations pooled per feature).
    /// Constant features fall back to std 1 so normalization stays invertible.
    pub fn fit(frame: &SeriesFrame, range: Range<usize>) -> Result<Self> {
        if range.is_empty() || range.end > frame.n_steps() {
            return Err(Error::Config(format!(
                "invalid normalization range {range:?} for {} steps",
                frame.n_steps()
            )));
        }
        let d = frame.meta.n_features;
        let n = frame.meta.n_locations;
        let count = (range.len() * n) as f64;
        let data = frame.values.data();
        let mut mean = vec![0.0; d];
        for t in range.clone() {
            for loc in 0..n {
                for f in 0..d {
                    mean[f] += data[(t * n + loc) * d + f];
                }
            }
        }
        for m in &mut mean {
            *m /= count;
        }
        let mut var = vec![0.0; d];
        for t in range {
            for loc in 0..n {
                for f in 0..d {
                    let dev = data[(t * n + loc) * d + f] - mean[f];
                    var[f] += dev * dev;
                }
            }
        }
        let std = var
            .iter()
            .map(|v| {
                let s = (v / count).sqrt();
                if s > 0.0 {
                    s
                } else {
                    1.0
                }
            })
            .collect();
        Ok(Self { mean, std })
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn std(&self) -> &[f64] {
        &self.std
    }

    /// `(x - mean) / std` per feature; the feature axis is the last axis.
    pub fn normalize(&self, x: &Tensor) -> Tensor {
        self.map_features(x, |v, m, s| (v - m) / s)
    }

    /// Exact inverse of [`normalize`](Self::normalize).
    pub fn denormalize(&self, x: &Tensor) -> Tensor {
        self.map_features(x, |v, m, s| v * s + m)
    }

    fn map_features(&self, x: &Tensor, f: impl Fn(f64, f64, f64) -> f64) -> Tensor {
        let d = self.mean.len();
        debug_assert_eq!(x.shape().last(), Some(&d), "feature axis mismatch");
        let data = x
            .data()
            .iter()
            .enumerate()
            .map(|(i, &v)| f(v, self.mean[i % d], self.std[i % d]))
            .collect();
        Tensor::from_vec(x.shape().to_vec(), data).expect("shape preserved")
    }
}

fn fmt_float(v: f64) -> String {
    format!("{v:.16e}")
}

/// Write `meta.txt`, `series.csv`, and `adjacency.csv` into `dir`.
pub fn save_dataset(dir: &Path, frame: &SeriesFrame, adjacency: &Tensor) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let meta = &frame.meta;

    let mut meta_out = std::fs::File::create(dir.join("meta.txt"))?;
    writeln!(meta_out, "n_locations={}", meta.n_locations)?;
    writeln!(meta_out, "n_features={}", meta.n_features)?;
    writeln!(meta_out, "interval_minutes={}", meta.interval_minutes)?;
    writeln!(meta_out, "n_steps={}", meta.n_steps)?;
    writeln!(meta_out, "feature_names={}", meta.feature_names.join(","))?;

    let mut series = std::io::BufWriter::new(std::fs::File::create(dir.join("series.csv"))?);
    let header: Vec<String> = (0..meta.n_locations)
        .flat_map(|i| (0..meta.n_features).map(move |j| format!("loc{i}_f{j}")))
        .collect();
    writeln!(series, "{}", header.join(","))?;
    let row_len = meta.n_locations * meta.n_features;
    for t in 0..meta.n_steps {
        let row: Vec<String> = frame.values.data()[t * row_len..(t + 1) * row_len]
            .iter()
            .map(|&v| fmt_float(v))
            .collect();
        writeln!(series, "{}", row.join(","))?;
    }
    series.into_inner().map_err(|e| Error::Io(e.into_error()))?;

    let n = meta.n_locations;
    if adjacency.shape() != [n, n] {
        return Err(Error::ShapeMismatch {
            op: "save adjacency",
            lhs: adjacency.shape().to_vec(),
            rhs: vec![n, n],
        });
    }
    let mut adj = std::io::BufWriter::new(std::fs::File::create(dir.join("adjacency.csv"))?);
    for i in 0..n {
        let row: Vec<String> = adjacency.data()[i * n..(i + 1) * n]
            .iter()
            .map(|&v| fmt_float(v))
            .collect();
        writeln!(adj, "{}", row.join(","))?;
    }
    adj.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    Ok(())
}

/// Load a dataset directory. The adjacency is symmetrized as
/// `(A + A^T) / 2` before normalization.
pub fn load_dataset(dir: &Path) -> Result<(SeriesFrame, AdjacencyMatrix)> {
    let meta = load_meta(&dir.join("meta.txt"))?;
    let values = load_series(&dir.join("series.csv"), &meta)?;
    let raw = load_adjacency(&dir.join("adjacency.csv"), meta.n_locations)?;

    let n = meta.n_locations;
    let mut sym = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            sym[i * n + j] = (raw.data()[i * n + j] + raw.data()[j * n + i]) / 2.0;
        }
    }
    let adjacency = AdjacencyMatrix::new(Tensor::from_vec(vec![n, n], sym)?)?;
    Ok((SeriesFrame::new(values, meta)?, adjacency))
}

fn require(path: &Path) -> Result<String> {
    if !path.exists() {
        return Err(Error::MissingFile(path.display().to_string()));
    }
    Ok(std::fs::read_to_string(path)?)
}

fn load_meta(path: &Path) -> Result<DatasetMeta> {
    let file = path.display().to_string();
    let text = require(path)?;
    let mut n_locations = None;
    let mut n_features = None;
    let mut interval_minutes = None;
    let mut n_steps = None;
    let mut feature_names = None;
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| Error::Parse {
            file: file.clone(),
            detail: format!("line {}: expected key=value", lineno + 1),
        })?;
        let parse_usize = |v: &str| -> Result<usize> {
            v.trim().parse().map_err(|_| Error::Parse {
                file: file.clone(),
                detail: format!("line {}: bad integer '{v}'", lineno + 1),
            })
        };
        match key.trim() {
            "n_locations" => n_locations = Some(parse_usize(value)?),
            "n_features" => n_features = Some(parse_usize(value)?),
            "interval_minutes" => interval_minutes = Some(parse_usize(value)?),
            "n_steps" => n_steps = Some(parse_usize(value)?),
            "feature_names" => {
                feature_names = Some(value.trim().split(',').map(str::to_string).collect())
            }
            other => {
                return Err(Error::Parse {
                    file: file.clone(),
                    detail: format!("line {}: unknown key '{other}'", lineno + 1),
                })
            }
        }
    }
    let missing = |what: &str| Error::Parse {
        file: file.clone(),
        detail: format!("missing key {what}"),
    };
    let meta = DatasetMeta {
        n_locations: n_locations.ok_or_else(|| missing("n_locations"))?,
        n_features: n_features.ok_or_else(|| missing("n_features"))?,
        interval_minutes: interval_minutes.ok_or_else(|| missing("interval_minutes"))?,
        n_steps: n_steps.ok_or_else(|| missing("n_steps"))?,
        feature_names: feature_names.ok_or_else(|| missing("feature_names"))?,
    };
    meta.validate()?;
    Ok(meta)
}

fn load_series(path: &Path, meta: &DatasetMeta) -> Result<Tensor> {
    let file = path.display().to_string();
    let text = require(path)?;
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| Error::Parse {
        file: file.clone(),
        detail: "empty series file".into(),
    })?;
    let expected_header: Vec<String> = (0..meta.n_locations)
        .flat_map(|i| (0..meta.n_features).map(move |j| format!("loc{i}_f{j}")))
        .collect();
    let got: Vec<&str> = header.split(',').collect();
    if got != expected_header {
        let col = got
            .iter()
            .zip(&expected_header)
            .position(|(g, e)| g != e)
            .unwrap_or(got.len().min(expected_header.len()));
        return Err(Error::Parse {
            file,
            detail: format!("header mismatch at column {}", col + 1),
        });
    }

    let row_len = meta.n_locations * meta.n_features;
    let mut data = Vec::with_capacity(meta.n_steps * row_len);
    let mut rows = 0usize;
    for (lineno, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != row_len {
            return Err(Error::Parse {
                file,
                detail: format!(
                    "row {}: {} columns, expected {row_len}",
                    lineno + 2,
                    fields.len()
                ),
            });
        }
        for (col, field) in fields.iter().enumerate() {
            let v: f64 = field.trim().parse().map_err(|_| Error::Parse {
                file: file.clone(),
                detail: format!(
                    "row {}, column {}: non-numeric cell '{field}'",
                    lineno + 2,
                    col + 1
                ),
            })?;
            data.push(v);
        }
        rows += 1;
    }
    if rows != meta.n_steps {
        return Err(Error::Parse {
            file,
            detail: format!("{rows} data rows, meta declares {}", meta.n_steps),
        });
    }
    Tensor::from_vec(vec![meta.n_steps, meta.n_locations, meta.n_features], data)
}

fn load_adjacency(path: &Path, n: usize) -> Result<Tensor> {
    let file = path.display().to_string();
    let text = require(path)?;
    let mut data = Vec::with_capacity(n * n);
    let mut rows = 0usize;
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != n {
            return Err(Error::Parse {
                file,
                detail: format!("row {}: {} columns, expected {n}", lineno + 1, fields.len()),
            });
        }
        for (col, field) in fields.iter().enumerate() {
            let v: f64 = field.trim().parse().map_err(|_| Error::Parse {
                file: file.clone(),
                detail: format!(
                    "row {}, column {}: non-numeric cell '{field}'",
                    lineno + 1,
                    col + 1
                ),
            })?;
            data.push(v);
        }
        rows += 1;
    }
    if rows != n {
        return Err(Error::Parse {
            file,
            detail: format!("{rows} adjacency rows, expected {n}"),
        });
    }
    Tensor::from_vec(vec![n, n], data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn small_frame() -> SeriesFrame {
        let meta = DatasetMeta {
            n_locations: 2,
            n_features: 1,
            interval_minutes: 60,
            n_steps: 3,
            feature_names: vec!["flow".into()],
        };
        let values =
            Tensor::from_vec(vec![3, 2, 1], vec![1.0, 2.0, 3.5, -0.25, 1e-7, 123456.789]).unwrap();
        SeriesFrame::new(values, meta).unwrap()
    }

    #[test]
    fn split_ratios_match_contract() {
        let s = split_phases(800).unwrap();
        assert_eq!(s.warmup_train, 0..160);
        assert_eq!(s.warmup_val, 160..200);
        assert_eq!(s.online, 200..800);

        let tiny = split_phases(8).unwrap();
        assert_eq!(tiny.warmup_train.len() + tiny.warmup_val.len(), 2);
        assert_eq!(tiny.online.len(), 6);

        assert!(split_phases(7).is_err());
    }

    #[test]
    fn split_partitions_the_whole_range() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            let t = rng.random_range(8..5000);
            let s = split_phases(t).unwrap();
            assert_eq!(s.warmup_train.start, 0);
            assert_eq!(s.warmup_train.end, s.warmup_val.start);
            assert_eq!(s.warmup_val.end, s.online.start);
            assert_eq!(s.online.end, t);
        }
    }

    #[test]
    fn normalization_roundtrip_is_identity() {
        let frame = small_frame();
        let stats = NormStats::fit(&frame, 0..3).unwrap();
        let z = stats.normalize(&frame.values);
        let back = stats.denormalize(&z);
        assert!(frame.values.max_abs_diff(&back).unwrap() < 1e-12);
    }

    #[test]
    fn constant_feature_gets_unit_std() {
        let meta = DatasetMeta {
            n_locations: 1,
            n_features: 1,
            interval_minutes: 60,
            n_steps: 4,
            feature_names: vec!["flat".into()],
        };
        let frame =
            SeriesFrame::new(Tensor::from_vec(vec![4, 1, 1], vec![5.0; 4]).unwrap(), meta).unwrap();
        let stats = NormStats::fit(&frame, 0..4).unwrap();
        assert_eq!(stats.std(), &[1.0]);
        let z = stats.normalize(&frame.values);
        assert!(z.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn train_slice_stats_differ_from_full_range_on_drifting_data() {
        // values ramp upward; fitting on the early slice must not see the ramp
        let meta = DatasetMeta {
            n_locations: 1,
            n_features: 1,
            interval_minutes: 60,
            n_steps: 100,
            feature_names: vec!["ramp".into()],
        };
        let values =
            Tensor::from_vec(vec![100, 1, 1], (0..100).map(|t| t as f64).collect()).unwrap();
        let frame = SeriesFrame::new(values, meta).unwrap();
        let train = NormStats::fit(&frame, 0..20).unwrap();
        let full = NormStats::fit(&frame, 0..100).unwrap();
        assert!((train.mean()[0] - 9.5).abs() < 1e-12);
        assert!((full.mean()[0] - 49.5).abs() < 1e-12);
        assert!(train.mean()[0] != full.mean()[0]);
        assert!(train.std()[0] != full.std()[0]);
    }

    #[test]
    fn dataset_roundtrip_is_exact() {
        let frame = small_frame();
        let adjacency = Tensor::from_vec(vec![2, 2], vec![0.0, 0.7, 0.7, 0.0]).unwrap();
        let dir = tempfile::tempdir().unwrap();
        save_dataset(dir.path(), &frame, &adjacency).unwrap();
        let (loaded, adj) = load_dataset(dir.path()).unwrap();
        assert!(loaded.values.bitwise_eq(&frame.values));
        assert_eq!(loaded.meta, frame.meta);
        assert!(adj.raw().bitwise_eq(&adjacency)); // already symmetric
    }

    #[test]
    fn hand_written_fixture_parses_exactly() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(
            dir.path().join("meta.txt"),
            "n_locations=2\nn_features=1\ninterval_minutes=30\nn_steps=3\nfeature_names=speed\n",
        )
        .unwrap();
        std::fs::write(
            dir.path().join("series.csv"),
            "loc0_f0,loc1_f0\n1.5,2.5\n-3.0,4.25\n0.125,9.0\n",
        )
        .unwrap();
        std::fs::write(dir.path().join("adjacency.csv"), "0,1\n1,0\n").unwrap();
        let (frame, adj) = load_dataset(dir.path()).unwrap();
        assert_eq!(frame.values.data(), &[1.5, 2.5, -3.0, 4.25, 0.125, 9.0]);
        assert_eq!(frame.meta.intervals_per_week(), 336);
        // off-diagonal normalized weights: row sums to 1 with the self-loop
        let n = adj.normalized().data();
        assert!((n[0] + n[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn missing_adjacency_is_distinct_error() {
        let frame = small_frame();
        let adjacency = Tensor::zeros(vec![2, 2]);
        let dir = tempfile::tempdir().unwrap();
        save_dataset(dir.path(), &frame, &adjacency).unwrap();
        std::fs::remove_file(dir.path().join("adjacency.csv")).unwrap();
        assert!(matches!(
            load_dataset(dir.path()),
            Err(Error::MissingFile(f)) if f.contains("adjacency.csv")
        ));
    }

    #[test]
    fn malformed_cells_name_row_and_column() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(
            dir.path().join("meta.txt"),
            "n_locations=1\nn_features=1\ninterval_minutes=60\nn_steps=2\nfeature_names=x\n",
        )
        .unwrap();
        std::fs::write(dir.path().join("series.csv"), "loc0_f0\n1.0\noops\n").unwrap();
        std::fs::write(dir.path().join("adjacency.csv"), "0\n").unwrap();
        match load_dataset(dir.path()) {
            Err(Error::Parse { detail, .. }) => {
                assert!(detail.contains("row 3"), "{detail}");
                assert!(detail.contains("column 1"), "{detail}");
            }
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn header_mismatch_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(
            dir.path().join("meta.txt"),
            "n_locations=2\nn_features=1\ninterval_minutes=60\nn_steps=1\nfeature_names=x\n",
        )
        .unwrap();
        std::fs::write(dir.path().join("series.csv"), "loc0_f0,loc0_f1\n1.0,2.0\n").unwrap();
        std::fs::write(dir.path().join("adjacency.csv"), "0,0\n0,0\n").unwrap();
        match load_dataset(dir.path()) {
            Err(Error::Parse { detail, .. }) => assert!(detail.contains("column 2"), "{detail}"),
            other => panic!("expected parse error, got {other:?}"),
        }
    }
}
