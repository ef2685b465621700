//! Parameter checkpoint files: a text manifest (config, then one line per
//! parameter with name, shape, and byte offset) followed by the packed
//! little-endian f64 values.

use super::{AdaptiveSTNetwork, ModelConfig};
use crate::error::{Error, Result};
use std::fmt::Write as _;
use std::path::Path;

const MAGIC: &str = "driftcast-checkpoint v1";

pub fn save_checkpoint(net: &AdaptiveSTNetwork, path: &Path) -> Result<()> {
    let c = net.config();
    let mut manifest = String::new();
    let _ = writeln!(manifest, "{MAGIC}");
    let _ = writeln!(manifest, "n_locations {}", c.n_locations);
    let _ = writeln!(manifest, "look_back {}", c.look_back);
    let _ = writeln!(manifest, "horizon {}", c.horizon);
    let _ = writeln!(manifest, "n_features {}", c.n_features);
    let _ = writeln!(manifest, "embed_dim {}", c.embed_dim);
    let _ = writeln!(manifest, "st_output_dim {}", c.st_output_dim);
    let _ = writeln!(manifest, "adapter_dim {}", c.adapter_dim);
    let _ = writeln!(manifest, "st_blocks {}", c.st_blocks);
    let _ = writeln!(manifest, "diffusion_steps {}", c.diffusion_steps);
    let _ = writeln!(manifest, "kernel_size {}", c.kernel_size);
    let _ = writeln!(manifest, "adapter_shared {}", u8::from(c.adapter_shared));

    let mut blob: Vec<u8> = Vec::new();
    for (_, p) in net.store().iter() {
        let shape = p
            .value
            .shape()
            .iter()
            .map(|d| d.to_string())
            .collect::<Vec<_>>()
            .join("x");
        let _ = writeln!(manifest, "param {} {} {}", p.name, shape, blob.len());
        for v in p.value.data() {
            blob.extend_from_slice(&v.to_le_bytes());
        }
    }
    let _ = writeln!(manifest, "data {}", blob.len());

    let mut bytes = manifest.into_bytes();
    bytes.extend_from_slice(&blob);
    std::fs::write(path, bytes)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<AdaptiveSTNetwork> {
    let file = path.display().to_string();
    if !path.exists() {
        return Err(Error::MissingFile(file));
    }
    let bytes = std::fs::read(path)?;

    // split the text manifest from the binary section at the `data N` line
    let mut pos = 0usize;
    let mut lines: Vec<String> = Vec::new();
    let mut blob_len: Option<usize> = None;
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
                    .parse()
                    .map_err(|_| parse_err(&file, "bad data length"))?,
            );
            break;
        }
        lines.push(line);
    }
    let blob_len = blob_len.ok_or_else(|| parse_err(&file, "missing data section"))?;
    let blob = &bytes[pos..];
    if blob.len() != blob_len {
        return Err(parse_err(
            &file,
            &format!(
                "data section is {} bytes, manifest says {blob_len}",
                blob.len()
            ),
        ));
    }

    let mut iter = lines.iter();
    if iter.next().map(String::as_str) != Some(MAGIC) {
        return Err(parse_err(&file, "not a checkpoint file"));
    }

    let mut keys = std::collections::BTreeMap::new();
    let mut params: Vec<(String, Vec<usize>, usize)> = Vec::new();
    for line in iter {
        let mut fields = line.split_whitespace();
        match fields.next() {
            Some("param") => {
                let name = fields
                    .next()
                    .ok_or_else(|| parse_err(&file, "param line missing name"))?;
                let shape: Vec<usize> = fields
                    .next()
                    .ok_or_else(|| parse_err(&file, "param line missing shape"))?
                    .split('x')
                    .map(|d| d.parse().map_err(|_| parse_err(&file, "bad shape")))
                    .collect::<Result<_>>()?;
                let offset: usize = fields
                    .next()
                    .ok_or_else(|| parse_err(&file, "param line missing offset"))?
                    .parse()
                    .map_err(|_| parse_err(&file, "bad offset"))?;
                params.push((name.to_string(), shape, offset));
            }
            Some(key) => {
                let value: usize = fields
                    .next()
                    .and_then(|v| v.parse().ok())
                    .ok_or_else(|| parse_err(&file, &format!("bad value for {key}")))?;
                keys.insert(key.to_string(), value);
            }
            None => {}
        }
    }

    let fetch = |key: &str| -> Result<usize> {
        keys.get(key)
            .copied()
            .ok_or_else(|| parse_err(&file, &format!("missing config key {key}")))
    };
    let config = ModelConfig {
        n_locations: fetch("n_locations")?,
        look_back: fetch("look_back")?,
        horizon: fetch("horizon")?,
        n_features: fetch("n_features")?,
        embed_dim: fetch("embed_dim")?,
        st_output_dim: fetch("st_output_dim")?,
        adapter_dim: fetch("adapter_dim")?,
        st_blocks: fetch("st_blocks")?,
        diffusion_steps: fetch("diffusion_steps")?,
        kernel_size: fetch("kernel_size")?,
        adapter_shared: fetch("adapter_shared")? != 0,
    };

    let mut net = AdaptiveSTNetwork::new(config, 0)?;
    if params.len() != net.store().len() {
        return Err(parse_err(
            &file,
            &format!(
                "checkpoint has {} parameters, config implies {}",
                params.len(),
                net.store().len()
            ),
        ));
    }
    for (name, shape, offset) in params {
        let id = net
            .store()
            .iter()
            .find(|(_, p)| p.name == name)
            .map(|(id, _)| id)
            .ok_or_else(|| parse_err(&file, &format!("unknown parameter {name}")))?;
        let expected = net.store().get(id).value.shape();
        if expected != shape.as_slice() {
            return Err(Error::ShapeMismatch {
                op: "checkpoint load",
                lhs: shape,
                rhs: expected.to_vec(),
            });
        }
        let count: usize = shape.iter().product();
        let end = offset + count * 8;
        if end > blob.len() {
            return Err(parse_err(
                &file,
                &format!("parameter {name} overruns data section"),
            ));
        }
        let values: Vec<f64> = blob[offset..end]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect();
        net.store_mut().get_mut(id).value = crate::numerics::Tensor::from_vec(shape, values)?;
    }
    Ok(net)
}

fn parse_err(file: &str, detail: &str) -> Error {
    Error::Parse {
        file: file.to_string(),
        detail: detail.to_string(),
    }
}
