//! Streaming memory: the placeholder ring buffer that tracks the last
//! `L + H` observations, the reservoir-sampled buffer of recent training
//! samples, and the episodic batches drawn from it.

use crate::error::{Error, Result};
use crate::numerics::Tensor;
use rand::Rng;
use std::collections::VecDeque;
use std::fmt::Write as _;
use std::path::Path;

/// One training sample extracted from the stream: an input window and the
/// ground-truth horizon that immediately follows it.
///
/// `x` covers timesteps `[origin_time - L + 1, origin_time]` and `y` covers
/// `[origin_time + 1, origin_time + H]`, so the two ranges are contiguous
/// and adjacent. Values are stored raw (unnormalized); normalization is
/// applied at model-input time.
#[derive(Clone, Debug)]
pub struct MemoryEntry {
    /// Input window, shape (L, N, d), time-major.
    pub x: Tensor,
    /// Target horizon, shape (H, N, d), time-major.
    pub y: Tensor,
    /// Timestep of the last observation inside `x`.
    pub origin_time: usize,
}

/// Ring buffer over the most recent `L + H` observations.
///
/// Once full, each push evicts exactly the oldest row, and the newest fully
/// labeled sample can be extracted without revisiting the stream.
#[derive(Clone, Debug)]
pub struct MemoryPlaceholder {
    rows: VecDeque<Tensor>,
    look_back: usize,
    horizon: usize,
    n_locations: usize,
    n_features: usize,
    next_time: Option<usize>,
    seen: usize,
}

impl MemoryPlaceholder {
    pub fn new(look_back: usize, horizon: usize, n_locations: usize, n_features: usize) -> Self {
        Self {
            rows: VecDeque::with_capacity(look_back + horizon),
            look_back,
            horizon,
            n_locations,
            n_features,
            next_time: None,
            seen: 0,
        }
    }

    pub fn capacity(&self) -> usize {
        self.look_back + self.horizon
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Observations pushed so far (including evicted ones).
    pub fn seen(&self) -> usize {
        self.seen
    }

    /// Append the observation for timestep `t`, evicting the oldest row when
    /// full. Timesteps must arrive in strict +1 order.
    pub fn push(&mut self, t: usize, x_t: &Tensor) -> Result<()> {
        if x_t.shape() != [self.n_locations, self.n_features] {
            return Err(Error::ShapeMismatch {
                op: "memory placeholder push",
                lhs: x_t.shape().to_vec(),
                rhs: vec![self.n_locations, self.n_features],
            });
        }
        if let Some(expected) = self.next_time {
            if t != expected {
                return Err(Error::Stream(format!(
                    "out-of-order observation: got t={t}, expected t={expected}"
                )));
            }
        }
        if self.rows.len() == self.capacity() {
            self.rows.pop_front();
        }
        self.rows.push_back(x_t.clone());
        self.next_time = Some(t + 1);
        self.seen += 1;
        Ok(())
    }

    /// The sample whose target horizon became fully observed at the current
    /// step, or `None` before `L + H` observations have arrived.
    pub fn extract(&self) -> Option<MemoryEntry> {
        if self.rows.len() < self.capacity() {
            return None;
        }
        let last_time = self.next_time.expect("non-empty buffer has a clock") - 1;
        let x = self.stack(0, self.look_back);
        let y = self.stack(self.look_back, self.horizon);
        Some(MemoryEntry {
            x,
            y,
            origin_time: last_time - self.horizon,
        })
    }

    /// The newest `len` observations as a (len, N, d) tensor, or `None` if
    /// fewer have been seen.
    pub fn last_window(&self, len: usize) -> Option<Tensor> {
        if self.rows.len() < len {
            return None;
        }
        Some(self.stack(self.rows.len() - len, len))
    }

    fn stack(&self, start: usize, count: usize) -> Tensor {
        let row_len = self.n_locations * self.n_features;
        let mut data = Vec::with_capacity(count * row_len);
        for i in start..start + count {
            data.extend_from_slice(self.rows[i].data());
        }
        Tensor::from_vec(vec![count, self.n_locations, self.n_features], data)
            .expect("stacked placeholder rows")
    }
}

/// Fixed-capacity reservoir of [`MemoryEntry`] maintained with Algorithm R:
/// the n-th offered item is kept with probability `capacity / n`, replacing
/// a uniformly random slot, which leaves every offered item equally likely
/// to be present.
#[derive(Clone, Debug)]
pub struct StreamingMemoryBuffer {
    slots: Vec<MemoryEntry>,
    capacity: usize,
    items_seen: u64,
}

impl StreamingMemoryBuffer {
    pub fn new(capacity: usize) -> Self {
        Self {
            slots: Vec::with_capacity(capacity),
            capacity,
            items_seen: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Offers since construction or the last reset.
    pub fn items_seen(&self) -> u64 {
        self.items_seen
    }

    pub fn entries(&self) -> &[MemoryEntry] {
        &self.slots
    }

    pub fn offer(&mut self, entry: MemoryEntry, rng: &mut impl Rng) {
        self.items_seen += 1;
        if self.slots.len() < self.capacity {
            self.slots.push(entry);
            return;
        }
        let j = rng.random_range(0..self.items_seen);
        if (j as usize) < self.capacity {
            self.slots[j as usize] = entry;
        }
    }

    /// Empty the buffer and restart the offer counter, as done at the start
    /// of each hibernate phase.
    pub fn reset(&mut self) {
        self.slots.clear();
        self.items_seen = 0;
    }

    /// Draw up to `batch_size` entries uniformly without replacement.
    pub fn sample(&self, batch_size: usize, rng: &mut impl Rng) -> EpisodicBatch {
        let k = batch_size.min(self.slots.len());
        let mut indices: Vec<usize> = (0..self.slots.len()).collect();
        for i in 0..k {
            let j = rng.random_range(i..indices.len());
            indices.swap(i, j);
        }
        EpisodicBatch {
            entries: indices[..k]
                .iter()
                .map(|&i| self.slots[i].clone())
                .collect(),
        }
    }
}

/// A small batch drawn from the reservoir for one online update step.
#[derive(Clone, Debug, Default)]
pub struct EpisodicBatch {
    pub entries: Vec<MemoryEntry>,
}

impl EpisodicBatch {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

const SNAPSHOT_MAGIC: &str = "driftcast-smb-snapshot v1";

/// Write the buffer to disk: text manifest then packed little-endian f64
/// values (each entry's x block followed by its y block).
pub fn save_smb_snapshot(smb: &StreamingMemoryBuffer, path: &Path) -> Result<()> {
    let mut manifest = String::new();
    let _ = writeln!(manifest, "{SNAPSHOT_MAGIC}");
    let _ = writeln!(manifest, "capacity {}", smb.capacity);
    let _ = writeln!(manifest, "items_seen {}", smb.items_seen);
    let _ = writeln!(manifest, "entries {}", smb.slots.len());
    let mut blob: Vec<u8> = Vec::new();
    for (i, e) in smb.slots.iter().enumerate() {
        let x_shape = shape_str(e.x.shape());
        let y_shape = shape_str(e.y.shape());
        let _ = writeln!(
            manifest,
            "entry {i} {} {x_shape} {y_shape} {}",
            e.origin_time,
            blob.len()
        );
        for v in e.x.data().iter().chain(e.y.data()) {
            blob.extend_from_slice(&v.to_le_bytes());
        }
    }
    let _ = writeln!(manifest, "data {}", blob.len());
    let mut bytes = manifest.into_bytes();
    bytes.extend_from_slice(&blob);
    std::fs::write(path, bytes)?;
    Ok(())
}

pub fn load_smb_snapshot(path: &Path) -> Result<StreamingMemoryBuffer> {
    let file = path.display().to_string();
    if !path.exists() {
        return Err(Error::MissingFile(file));
    }
    let bytes = std::fs::read(path)?;
    let mut pos = 0usize;
    let mut lines: Vec<String> = Vec::new();
    let mut blob_len = None;
    while pos < bytes.len() {
        let end = bytes[pos..]
            .iter()
            .position(|&b| b == b'\n')
            .map(|o| pos + o)
            .ok_or_else(|| parse_err(&file, "unterminated manifest line"))?;
        let line = std::str::from_utf8(&bytes[pos..end])
            .map_err(|_| parse_err(&file, "manifest is not UTF-8"))?
            .to_string();
        pos = end + 1;
        if let Some(rest) = line.strip_prefix("data ") {
            blob_len = Some(
                rest.trim()
                    .parse::<usize>()
                    .map_err(|_| parse_err(&file, "bad data length"))?,
            );
            break;
        }
        lines.push(line);
    }
    let blob_len = blob_len.ok_or_else(|| parse_err(&file, "missing data section"))?;
    let blob = &bytes[pos..];
    if blob.len() != blob_len {
        return Err(parse_err(&file, "data section length mismatch"));
    }

    let mut iter = lines.iter();
    if iter.next().map(String::as_str) != Some(SNAPSHOT_MAGIC) {
        return Err(parse_err(&file, "not an SMB snapshot"));
    }
    let mut capacity = None;
    let mut items_seen = None;
    let mut declared_entries = None;
    let mut slots = Vec::new();
    for line in iter {
        let mut fields = line.split_whitespace();
        match fields.next() {
            Some("capacity") => capacity = fields.next().and_then(|v| v.parse().ok()),
            Some("items_seen") => items_seen = fields.next().and_then(|v| v.parse().ok()),
            Some("entries") => {
                declared_entries = fields.next().and_then(|v| v.parse::<usize>().ok())
            }
            Some("entry") => {
                let _index: usize = parse_field(&file, fields.next())?;
                let origin_time: usize = parse_field(&file, fields.next())?;
                let x_shape = parse_shape(&file, fields.next())?;
                let y_shape = parse_shape(&file, fields.next())?;
                let offset: usize = parse_field(&file, fields.next())?;
                let x_len: usize = x_shape.iter().product();
                let y_len: usize = y_shape.iter().product();
                let end = offset + (x_len + y_len) * 8;
                if end > blob.len() {
                    return Err(parse_err(&file, "entry overruns data section"));
                }
                let mut values = blob[offset..end]
                    .chunks_exact(8)
                    .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")));
                let x = Tensor::from_vec(x_shape, values.by_ref().take(x_len).collect())?;
                let y = Tensor::from_vec(y_shape, values.collect())?;
                slots.push(MemoryEntry { x, y, origin_time });
            }
            _ => {}
        }
    }
    let capacity = capacity.ok_or_else(|| parse_err(&file, "missing capacity"))?;
    let items_seen = items_seen.ok_or_else(|| parse_err(&file, "missing items_seen"))?;
    if declared_entries != Some(slots.len()) || slots.len() > capacity {
        return Err(parse_err(&file, "entry count mismatch"));
    }
    Ok(StreamingMemoryBuffer {
        slots,
        capacity,
        items_seen,
    })
}

fn shape_str(shape: &[usize]) -> String {
    shape
        .iter()
        .map(|d| d.to_string())
        .collect::<Vec<_>>()
        .join("x")
}

fn parse_field<T: std::str::FromStr>(file: &str, field: Option<&str>) -> Result<T> {
    field
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| parse_err(file, "malformed entry line"))
}

fn parse_shape(file: &str, field: Option<&str>) -> Result<Vec<usize>> {
    field
        .ok_or_else(|| parse_err(file, "missing shape"))?
        .split('x')
        .map(|d| d.parse().map_err(|_| parse_err(file, "bad shape")))
        .collect()
}

fn parse_err(file: &str, detail: &str) -> Error {
    Error::Parse {
        file: file.to_string(),
        detail: detail.to_string(),
    }
}
