//! Flat `key = value` experiment configuration.
//!
//! Blank lines and `#` comments are ignored; unknown or repeated keys are
//! errors. [`ExperimentConfig::to_text`] writes every key in a fixed order,
//! so parsing and re-serializing is stable.

use crate::baselines::CompressorKind;
use crate::error::{Error, Result};
use crate::models::{Generator, LrSchedule, ModelSpec, OptimizerConfig};
use std::collections::{BTreeMap, HashSet};
use std::fmt::Display;
use std::path::PathBuf;
use std::str::FromStr;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ArchitectureKind {
    Mlp,
    TinyCnn,
}

impl ArchitectureKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ArchitectureKind::Mlp => "mlp",
            ArchitectureKind::TinyCnn => "tiny_cnn",
        }
    }
}

impl FromStr for ArchitectureKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "mlp" => Ok(ArchitectureKind::Mlp),
            "tiny_cnn" => Ok(ArchitectureKind::TinyCnn),
            _ => Err(format!("unknown architecture `{s}`, expected mlp or tiny_cnn")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub architecture: ArchitectureKind,
    pub mlp_hidden: Vec<usize>,
    pub cnn_filters: usize,
    pub image_side: usize,
    pub classes: usize,
    pub generator: Generator,
    pub dataset_size: usize,
    pub nodes: usize,
    pub compressor: CompressorKind,
    pub density: f64,
    pub alpha: f64,
    pub patch_size: usize,
    pub dynamic_ratio: bool,
    pub recompute_period: usize,
    pub momentum: f64,
    pub momentum_masking: bool,
    pub warmup_epochs: usize,
    pub learning_rate: f64,
    /// Step decay when true, constant rate otherwise.
    pub lr_step_decay: bool,
    pub lr_decay_factor: f64,
    pub lr_decay_period: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub master_seed: u64,
    pub output_path: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            architecture: ArchitectureKind::TinyCnn,
            mlp_hidden: vec![32, 32],
            cnn_filters: 8,
            image_side: 12,
            classes: 2,
            generator: Generator::ConcentricRings,
            dataset_size: 1000,
            nodes: 4,
            compressor: CompressorKind::RsDgc,
            density: 0.01,
            alpha: crate::nsi::DEFAULT_ALPHA,
            patch_size: 3,
            dynamic_ratio: true,
            recompute_period: 1,
            momentum: 0.9,
            momentum_masking: false,
            warmup_epochs: 0,
            learning_rate: 0.05,
            lr_step_decay: false,
            lr_decay_factor: 0.1,
            lr_decay_period: 10,
            epochs: 30,
            batch_size: 16,
            master_seed: 0,
            output_path: PathBuf::from("out"),
        }
    }
}

/// Every recognized key, in canonical order.
pub const KEYS: &[&str] = &[
    "architecture",
    "mlp_hidden",
    "cnn_filters",
    "image_side",
    "classes",
    "generator",
    "dataset_size",
    "nodes",
    "compressor",
    "density",
    "alpha",
    "patch_size",
    "dynamic_ratio",
    "recompute_period",
    "momentum",
    "momentum_masking",
    "warmup_epochs",
    "learning_rate",
    "lr_schedule",
    "lr_decay_factor",
    "lr_decay_period",
    "epochs",
    "batch_size",
    "master_seed",
    "output_path",
];

fn parse_value<T: FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: Display,
{
    value.parse().map_err(|e: T::Err| Error::Config {
        key: key.to_string(),
        reason: format!("cannot parse `{value}`: {e}"),
    })
}

fn config_err(key: &str, reason: impl Into<String>) -> Error {
    Error::Config {
        key: key.to_string(),
        reason: reason.into(),
    }
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        let mut seen = HashSet::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| config_err(line, format!("line {} is not `key = value`", n + 1)))?;
            let key = key.trim();
            if !seen.insert(key.to_string()) {
                return Err(config_err(key, "given more than once"));
            }
            cfg.set(key, value.trim())?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Sets one key from its text form. Does not re-validate.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "architecture" => self.architecture = parse_value(key, value)?,
            "mlp_hidden" => {
                self.mlp_hidden = value
                    .split(',')
                    .map(|v| parse_value(key, v.trim()))
                    .collect::<Result<_>>()?
            }
            "cnn_filters" => self.cnn_filters = parse_value(key, value)?,
            "image_side" => self.image_side = parse_value(key, value)?,
            "classes" => self.classes = parse_value(key, value)?,
            "generator" => self.generator = parse_value(key, value)?,
            "dataset_size" => self.dataset_size = parse_value(key, value)?,
            "nodes" => self.nodes = parse_value(key, value)?,
            "compressor" => self.compressor = parse_value(key, value)?,
            "density" => self.density = parse_value(key, value)?,
            "alpha" => self.alpha = parse_value(key, value)?,
            "patch_size" => self.patch_size = parse_value(key, value)?,
            "dynamic_ratio" => self.dynamic_ratio = parse_value(key, value)?,
            "recompute_period" => self.recompute_period = parse_value(key, value)?,
            "momentum" => self.momentum = parse_value(key, value)?,
            "momentum_masking" => self.momentum_masking = parse_value(key, value)?,
            "warmup_epochs" => self.warmup_epochs = parse_value(key, value)?,
            "learning_rate" => self.learning_rate = parse_value(key, value)?,
            "lr_schedule" => {
                self.lr_step_decay = match value {
                    "constant" => false,
                    "step" => true,
                    _ => return Err(config_err(key, format!("`{value}` is not constant or step"))),
                }
            }
            "lr_decay_factor" => self.lr_decay_factor = parse_value(key, value)?,
            "lr_decay_period" => self.lr_decay_period = parse_value(key, value)?,
            "epochs" => self.epochs = parse_value(key, value)?,
            "batch_size" => self.batch_size = parse_value(key, value)?,
            "master_seed" => self.master_seed = parse_value(key, value)?,
            "output_path" => self.output_path = PathBuf::from(value),
            _ => return Err(config_err(key, "unknown key")),
        }
        Ok(())
    }
}

impl ExperimentConfig {
    /// Range checks on every field; the first offending key is reported.
    pub fn validate(&self) -> Result<()> {
        let check = |ok: bool, key: &str, reason: &str| if ok { Ok(()) } else { Err(config_err(key, reason)) };
        check(
            !self.mlp_hidden.is_empty() && !self.mlp_hidden.contains(&0),
            "mlp_hidden",
            "widths must be >= 1",
        )?;
        check(self.cnn_filters >= 1, "cnn_filters", "must be >= 1")?;
        check(self.image_side >= 6, "image_side", "must be >= 6")?;
        check(self.classes >= 2, "classes", "must be >= 2")?;
        check(
            self.dataset_size >= self.classes.max(5),
            "dataset_size",
            "too small for the class count",
        )?;
        check(self.nodes >= 1, "nodes", "must be >= 1")?;
        check((0.0..=1.0).contains(&self.density), "density", "must be in [0, 1]")?;
        check(
            !(self.compressor == CompressorKind::RsDgc && self.dynamic_ratio && self.density == 0.0),
            "density",
            "dynamic ratios need a density > 0",
        )?;
        check((0.0..=1.0).contains(&self.alpha), "alpha", "must be in [0, 1]")?;
        check(self.patch_size >= 1, "patch_size", "must be >= 1")?;
        check(self.recompute_period >= 1, "recompute_period", "must be >= 1")?;
        check((0.0..1.0).contains(&self.momentum), "momentum", "must be in [0, 1)")?;
        check(
            self.learning_rate > 0.0 && self.learning_rate.is_finite(),
            "learning_rate",
            "must be > 0",
        )?;
        check(
            self.lr_decay_factor > 0.0 && self.lr_decay_factor <= 1.0,
            "lr_decay_factor",
            "must be in (0, 1]",
        )?;
        check(self.lr_decay_period >= 1, "lr_decay_period", "must be >= 1")?;
        check(self.epochs >= 1, "epochs", "must be >= 1")?;
        check(self.batch_size >= 1, "batch_size", "must be >= 1")?;
        let train = self.dataset_size - (self.dataset_size as f64 * super::TEST_FRACTION).round() as usize;
        check(train >= self.nodes, "nodes", "more nodes than training samples")?;
        Ok(())
    }

    /// Canonical text: every key, fixed order, one per line.
    pub fn to_text(&self) -> String {
        self.to_pairs()
            .into_iter()
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect()
    }

    /// Key/value pairs in canonical order.
    pub fn to_pairs(&self) -> Vec<(&'static str, String)> {
        let hidden: Vec<String> = self.mlp_hidden.iter().map(|h| h.to_string()).collect();
        vec![
            ("architecture", self.architecture.as_str().to_string()),
            ("mlp_hidden", hidden.join(",")),
            ("cnn_filters", self.cnn_filters.to_string()),
            ("image_side", self.image_side.to_string()),
            ("classes", self.classes.to_string()),
            ("generator", self.generator.as_str().to_string()),
            ("dataset_size", self.dataset_size.to_string()),
            ("nodes", self.nodes.to_string()),
            ("compressor", self.compressor.to_string()),
            ("density", self.density.to_string()),
            ("alpha", self.alpha.to_string()),
            ("patch_size", self.patch_size.to_string()),
            ("dynamic_ratio", self.dynamic_ratio.to_string()),
            ("recompute_period", self.recompute_period.to_string()),
            ("momentum", self.momentum.to_string()),
            ("momentum_masking", self.momentum_masking.to_string()),
            ("warmup_epochs", self.warmup_epochs.to_string()),
            ("learning_rate", self.learning_rate.to_string()),
            (
                "lr_schedule",
                if self.lr_step_decay { "step" } else { "constant" }.to_string(),
            ),
            ("lr_decay_factor", self.lr_decay_factor.to_string()),
            ("lr_decay_period", self.lr_decay_period.to_string()),
            ("epochs", self.epochs.to_string()),
            ("batch_size", self.batch_size.to_string()),
            ("master_seed", self.master_seed.to_string()),
            ("output_path", self.output_path.display().to_string()),
        ]
    }

    /// Canonical pairs minus `output_path`, which does not affect results.
    pub fn echo(&self) -> BTreeMap<String, String> {
        self.to_pairs()
            .into_iter()
            .filter(|(k, _)| *k != "output_path")
            .map(|(k, v)| (k.to_string(), v))
            .collect()
    }

    pub fn model_spec(&self) -> Result<ModelSpec> {
        let init_seed = crate::seeds::derive_seed(self.master_seed, super::INIT_STREAM);
        match self.architecture {
            ArchitectureKind::Mlp => ModelSpec::mlp(2, &self.mlp_hidden, self.classes, self.patch_size, init_seed),
            ArchitectureKind::TinyCnn => ModelSpec::tiny_cnn(
                self.cnn_filters,
                self.image_side,
                self.classes,
                self.patch_size,
                init_seed,
            ),
        }
    }

    pub fn optimizer(&self) -> Result<OptimizerConfig> {
        let schedule = if self.lr_step_decay {
            LrSchedule::StepDecay {
                factor: self.lr_decay_factor,
                period_epochs: self.lr_decay_period,
            }
        } else {
            LrSchedule::Constant
        };
        OptimizerConfig::new(self.learning_rate, self.momentum, schedule)
    }
}
