//! Run configuration: a flat `key value`/`key=value` text file (UTF-8, `#`
//! comments) covering model dimensions, schedule, trainer, strategy, memory
//! sizes, and dataset paths, plus the named strategy presets.

use crate::data::DatasetMeta;
use crate::engine::{MemoryMode, RunSettings, StrategyConfig, TrainerConfig, UpdateScope};
use crate::error::{Error, Result};
use crate::model::ModelConfig;
use std::path::{Path, PathBuf};

/// Everything a `run` invocation needs. Location and feature counts come
/// from the dataset at load time; all other model dimensions live here.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub dataset_dir: Option<PathBuf>,
    pub output_dir: Option<PathBuf>,
    pub look_back: usize,
    pub horizon: usize,
    pub embed_dim: usize,
    pub st_output_dim: usize,
    pub adapter_dim: usize,
    pub st_blocks: usize,
    pub diffusion_steps: usize,
    pub kernel_size: usize,
    pub use_adapter: bool,
    pub shared_adapter: bool,
    /// Schedule override; defaults to the dataset's intervals per week.
    pub intervals_per_week: Option<usize>,
    /// Awake length override; defaults to intervals per week.
    pub awake_len: Option<usize>,
    pub lambda: f64,
    pub trainer: TrainerConfig,
    pub strategy: StrategyConfig,
    pub smb_capacity: usize,
    pub em_size: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            dataset_dir: None,
            output_dir: None,
            look_back: 12,
            horizon: 12,
            embed_dim: 32,
            st_output_dim: 256,
            adapter_dim: 4,
            st_blocks: 2,
            diffusion_steps: 2,
            kernel_size: 2,
            use_adapter: true,
            shared_adapter: false,
            intervals_per_week: None,
            awake_len: None,
            lambda: 1.0,
            trainer: TrainerConfig::default(),
            strategy: StrategyConfig::default(),
            smb_capacity: 1000,
            em_size: 8,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::MissingFile(path.display().to_string()));
        }
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text, &path.display().to_string())
    }

    pub fn parse(text: &str, file: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .or_else(|| line.split_once(char::is_whitespace))
                .ok_or_else(|| Error::Parse {
                    file: file.to_string(),
                    detail: format!("line {}: expected 'key value'", lineno + 1),
                })?;
            cfg.set(key.trim(), value.trim())
                .map_err(|detail| Error::Parse {
                    file: file.to_string(),
                    detail: format!("line {}: {detail}", lineno + 1),
                })?;
        }
        Ok(cfg)
    }

    fn set(&mut self, key: &str, value: &str) -> std::result::Result<(), String> {
        fn usize_of(v: &str) -> std::result::Result<usize, String> {
            v.parse().map_err(|_| format!("bad integer '{v}'"))
        }
        fn u64_of(v: &str) -> std::result::Result<u64, String> {
            v.parse().map_err(|_| format!("bad integer '{v}'"))
        }
        fn f64_of(v: &str) -> std::result::Result<f64, String> {
            v.parse().map_err(|_| format!("bad number '{v}'"))
        }
        fn bool_of(v: &str) -> std::result::Result<bool, String> {
            match v {
                "true" | "1" | "yes" => Ok(true),
                "false" | "0" | "no" => Ok(false),
                other => Err(format!("bad boolean '{other}'")),
            }
        }
        match key {
            "dataset_dir" => self.dataset_dir = Some(PathBuf::from(value)),
            "output_dir" => self.output_dir = Some(PathBuf::from(value)),
            "look_back" => self.look_back = usize_of(value)?,
            "horizon" => self.horizon = usize_of(value)?,
            "embed_dim" => self.embed_dim = usize_of(value)?,
            "st_output_dim" => self.st_output_dim = usize_of(value)?,
            "adapter_dim" => self.adapter_dim = usize_of(value)?,
            "st_blocks" => self.st_blocks = usize_of(value)?,
            "diffusion_steps" => self.diffusion_steps = usize_of(value)?,
            "kernel_size" => self.kernel_size = usize_of(value)?,
            "use_adapter" => self.use_adapter = bool_of(value)?,
            "shared_adapter" => self.shared_adapter = bool_of(value)?,
            "intervals_per_week" => self.intervals_per_week = Some(usize_of(value)?),
            "awake_len" => self.awake_len = Some(usize_of(value)?),
            "lambda" => self.lambda = f64_of(value)?,
            "learning_rate" => self.trainer.learning_rate = f64_of(value)?,
            "max_epochs" => self.trainer.max_epochs = usize_of(value)?,
            "patience" => self.trainer.patience = usize_of(value)?,
            "batch_size" => self.trainer.batch_size = usize_of(value)?,
            "weight_decay" => self.trainer.weight_decay = f64_of(value)?,
            "beta1" => self.trainer.beta1 = f64_of(value)?,
            "beta2" => self.trainer.beta2 = f64_of(value)?,
            "epsilon" => self.trainer.epsilon = f64_of(value)?,
            "seed" => self.trainer.seed = u64_of(value)?,
            "update_scope" => {
                self.strategy.update_scope = match value {
                    "adapter" => UpdateScope::Adapter,
                    "full" => UpdateScope::Full,
                    "none" => UpdateScope::None,
                    other => return Err(format!("unknown update_scope '{other}'")),
                }
            }
            "hibernate_enabled" => self.strategy.hibernate_enabled = bool_of(value)?,
            "reset_enabled" => self.strategy.reset_enabled = bool_of(value)?,
            "memory_mode" => {
                self.strategy.memory_mode = match value {
                    "smu" => MemoryMode::Smu,
                    "smur" => MemoryMode::Smur,
                    "er" => MemoryMode::Er,
                    "none" => MemoryMode::None,
                    other => return Err(format!("unknown memory_mode '{other}'")),
                }
            }
            "smb_capacity" => self.smb_capacity = usize_of(value)?,
            "em_size" => self.em_size = usize_of(value)?,
            other => return Err(format!("unknown key '{other}'")),
        }
        Ok(())
    }

    /// Model configuration for a dataset of the given width.
    pub fn model_config(&self, n_locations: usize, n_features: usize) -> ModelConfig {
        ModelConfig {
            n_locations,
            look_back: self.look_back,
            horizon: self.horizon,
            n_features,
            embed_dim: self.embed_dim,
            st_output_dim: self.st_output_dim,
            adapter_dim: self.adapter_dim,
            st_blocks: self.st_blocks,
            diffusion_steps: self.diffusion_steps,
            kernel_size: self.kernel_size,
            adapter_shared: self.shared_adapter,
        }
    }

    /// Engine settings for a dataset with the given metadata.
    pub fn run_settings(&self, meta: &DatasetMeta) -> RunSettings {
        let intervals_per_week = self.intervals_per_week.unwrap_or(meta.intervals_per_week());
        RunSettings {
            model: self.model_config(meta.n_locations, meta.n_features),
            trainer: self.trainer.clone(),
            strategy: self.strategy.clone(),
            use_adapter: self.use_adapter,
            awake_len: Some(self.awake_len.unwrap_or(intervals_per_week)),
            lambda: self.lambda,
            smb_capacity: self.smb_capacity,
            em_size: self.em_size,
        }
    }
}

/// Named experiment presets. Each applies the full-strategy baseline first
/// and then changes exactly the knobs that define it.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StrategyPreset {
    /// Adapter-only updates, hibernate + reset, episodic-memory batches.
    Dost,
    /// No online updates at all.
    Frozen,
    /// Update at every online step (no hibernate phases, hence no resets).
    NoHibernate,
    /// Fine-tune every parameter instead of only the adapters.
    Full,
    /// Never-reset replay buffer plus the current sample, updating every step.
    Er,
    /// Like `Er` but keeping the hibernate schedule.
    Erh,
    /// Episodic batches with the most recent sample appended.
    Smur,
    /// Keep the buffer across hibernate starts.
    NoReset,
    /// Drop the adapter path from the model.
    NoVia,
    /// One adapter shared by every location.
    SharedAdapter,
}

impl StrategyPreset {
    pub const ALL: [StrategyPreset; 10] = [
        StrategyPreset::Dost,
        StrategyPreset::Frozen,
        StrategyPreset::NoHibernate,
        StrategyPreset::Full,
        StrategyPreset::Er,
        StrategyPreset::Erh,
        StrategyPreset::Smur,
        StrategyPreset::NoReset,
        StrategyPreset::NoVia,
        StrategyPreset::SharedAdapter,
    ];

    pub fn parse(name: &str) -> Option<Self> {
        Some(match name {
            "dost" => Self::Dost,
            "frozen" => Self::Frozen,
            "no-hibernate" => Self::NoHibernate,
            "full" => Self::Full,
            "er" => Self::Er,
            "erh" => Self::Erh,
            "smur" => Self::Smur,
            "no-reset" => Self::NoReset,
            "no-via" => Self::NoVia,
            "shared-adapter" => Self::SharedAdapter,
            _ => return None,
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Dost => "dost",
            Self::Frozen => "frozen",
            Self::NoHibernate => "no-hibernate",
            Self::Full => "full",
            Self::Er => "er",
            Self::Erh => "erh",
            Self::Smur => "smur",
            Self::NoReset => "no-reset",
            Self::NoVia => "no-via",
            Self::SharedAdapter => "shared-adapter",
        }
    }

    pub fn apply(&self, cfg: &mut RunConfig) {
        cfg.strategy = StrategyConfig::default();
        cfg.use_adapter = true;
        cfg.shared_adapter = false;
        match self {
            Self::Dost => {}
            Self::Frozen => {
                cfg.strategy.update_scope = UpdateScope::None;
                cfg.strategy.memory_mode = MemoryMode::None;
            }
            Self::NoHibernate => cfg.strategy.hibernate_enabled = false,
            Self::Full => cfg.strategy.update_scope = UpdateScope::Full,
            Self::Er => {
                cfg.strategy.memory_mode = MemoryMode::Er;
                cfg.strategy.hibernate_enabled = false;
            }
            Self::Erh => cfg.strategy.memory_mode = MemoryMode::Er,
            Self::Smur => cfg.strategy.memory_mode = MemoryMode::Smur,
            Self::NoReset => cfg.strategy.reset_enabled = false,
            Self::NoVia => cfg.use_adapter = false,
            Self::SharedAdapter => cfg.shared_adapter = true,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_comments_and_both_separators() {
        let text = "\
# reference setup
dataset_dir data/synth
look_back=12
lambda 0.5
memory_mode smur
seed 42         # trailing comment
hibernate_enabled false
";
        let cfg = RunConfig::parse(text, "test.conf").unwrap();
        assert_eq!(cfg.dataset_dir.as_deref(), Some(Path::new("data/synth")));
        assert_eq!(cfg.look_back, 12);
        assert_eq!(cfg.lambda, 0.5);
        assert_eq!(cfg.strategy.memory_mode, MemoryMode::Smur);
        assert_eq!(cfg.trainer.seed, 42);
        assert!(!cfg.strategy.hibernate_enabled);
    }

    #[test]
    fn unknown_key_is_an_error() {
        let err = RunConfig::parse("no_such_key 1\n", "test.conf").unwrap_err();
        assert!(err.to_string().contains("no_such_key"));
    }

    #[test]
    fn defaults_match_reference_values() {
        let cfg = RunConfig::default();
        assert_eq!(cfg.look_back, 12);
        assert_eq!(cfg.horizon, 12);
        assert_eq!(cfg.embed_dim, 32);
        assert_eq!(cfg.st_output_dim, 256);
        assert_eq!(cfg.adapter_dim, 4);
        assert_eq!(cfg.smb_capacity, 1000);
        assert_eq!(cfg.em_size, 8);
        assert_eq!(cfg.lambda, 1.0);
        assert_eq!(cfg.trainer.learning_rate, 1e-3);
        assert_eq!(cfg.trainer.patience, 10);
        assert_eq!(cfg.trainer.max_epochs, 150);
    }

    /// Field-level diff between two configs, ignoring paths.
    fn diff(a: &RunConfig, b: &RunConfig) -> Vec<&'static str> {
        let mut out = Vec::new();
        if a.use_adapter != b.use_adapter {
            out.push("use_adapter");
        }
        if a.shared_adapter != b.shared_adapter {
            out.push("shared_adapter");
        }
        if a.strategy.update_scope != b.strategy.update_scope {
            out.push("update_scope");
        }
        if a.strategy.hibernate_enabled != b.strategy.hibernate_enabled {
            out.push("hibernate_enabled");
        }
        if a.strategy.reset_enabled != b.strategy.reset_enabled {
            out.push("reset_enabled");
        }
        if a.strategy.memory_mode != b.strategy.memory_mode {
            out.push("memory_mode");
        }
        out
    }

    #[test]
    fn presets_change_exactly_the_intended_knobs() {
        let baseline = {
            let mut c = RunConfig::default();
            StrategyPreset::Dost.apply(&mut c);
            c
        };
        let applied = |p: StrategyPreset| {
            let mut c = RunConfig::default();
            p.apply(&mut c);
            c
        };
        assert_eq!(
            diff(&applied(StrategyPreset::NoVia), &baseline),
            ["use_adapter"]
        );
        assert_eq!(
            diff(&applied(StrategyPreset::NoReset), &baseline),
            ["reset_enabled"]
        );
        assert_eq!(
            diff(&applied(StrategyPreset::NoHibernate), &baseline),
            ["hibernate_enabled"]
        );
        assert_eq!(
            diff(&applied(StrategyPreset::Full), &baseline),
            ["update_scope"]
        );
        assert_eq!(
            diff(&applied(StrategyPreset::Smur), &baseline),
            ["memory_mode"]
        );
        assert_eq!(
            diff(&applied(StrategyPreset::SharedAdapter), &baseline),
            ["shared_adapter"]
        );
        assert_eq!(
            diff(&applied(StrategyPreset::Frozen), &baseline),
            ["update_scope", "memory_mode"]
        );
        assert_eq!(
            diff(&applied(StrategyPreset::Erh), &baseline),
            ["memory_mode"]
        );
        assert_eq!(
            diff(&applied(StrategyPreset::Er), &baseline),
            ["hibernate_enabled", "memory_mode"]
        );
    }

    #[test]
    fn preset_names_roundtrip() {
        for preset in StrategyPreset::ALL {
            assert_eq!(StrategyPreset::parse(preset.name()), Some(preset));
        }
        assert_eq!(StrategyPreset::parse("bogus"), None);
    }
}
