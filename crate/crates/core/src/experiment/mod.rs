//! End-to-end experiments: build data, model and simulator from an
//! [`ExperimentConfig`], train, and emit per-step CSV plus a JSON summary.

mod compare;
mod config;

pub use compare::{compare, ComparisonRow, ComparisonTable};
pub use config::{ArchitectureKind, ExperimentConfig, KEYS};

use crate::error::Result;
use crate::models::{evaluate, make_dataset_with, DatasetSpec, FeatureLayout};
use crate::nsi::NsiConfig;
use crate::ratio::{RatioSchedule, RecomputePolicy};
use crate::seeds::derive_seed;
use crate::sim::{SimConfig, Simulator, StepReport};
use serde::Serialize;
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

/// Share of the generated dataset held out for testing.
pub const TEST_FRACTION: f64 = 0.2;

const INIT_STREAM: u64 = 1;
const DATA_STREAM: u64 = 2;
const SPLIT_STREAM: u64 = 3;
const SIM_STREAM: u64 = 4;

pub const CSV_HEADER: &str = "epoch,step,loss,train_acc,bytes_sent_total,dense_bytes_total,ratio";

/// One CSV row; byte fields are cumulative over all nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRow {
    pub epoch: usize,
    pub step: usize,
    pub loss: f64,
    pub train_acc: f64,
    pub bytes_sent_total: usize,
    pub dense_bytes_total: usize,
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub final_train_acc: f64,
    pub final_test_acc: f64,
    pub cumulative_bytes: usize,
    pub compression_ratio: f64,
    pub config_echo: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentResult {
    pub rows: Vec<StepRow>,
    pub reports: Vec<StepReport>,
    pub schedules: Vec<RatioSchedule>,
    pub summary: Summary,
    /// Dense elements over transmitted elements.
    pub sparsification_ratio: f64,
}

impl ExperimentResult {
    pub fn csv(&self) -> String {
        let mut out = String::from(CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{}",
                r.epoch, r.step, r.loss, r.train_acc, r.bytes_sent_total, r.dense_bytes_total, r.ratio
            );
        }
        out
    }

    pub fn summary_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(&self.summary).expect("summary serializes");
        s.push('\n');
        s
    }

    pub fn schedule_csv(&self) -> String {
        let mut out = String::from("epoch,layer_id,G_l,kept,p_l\n");
        for s in &self.schedules {
            out.push_str(&s.to_csv(false));
        }
        out
    }

    /// Writes `steps.csv`, `summary.json` and, for dynamic runs, `schedule.csv`.
    pub fn write_to(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("steps.csv"), self.csv())?;
        fs::write(dir.join("summary.json"), self.summary_json())?;
        if !self.schedules.is_empty() {
            fs::write(dir.join("schedule.csv"), self.schedule_csv())?;
        }
        Ok(())
    }
}

pub fn sim_config(config: &ExperimentConfig) -> Result<SimConfig> {
    Ok(SimConfig {
        compressor: config.compressor,
        nodes: config.nodes,
        density: config.density,
        nsi: NsiConfig::new(config.alpha, config.patch_size)?,
        dynamic_ratio: config.dynamic_ratio,
        recompute: RecomputePolicy::new(config.recompute_period)?,
        momentum_masking: config.momentum_masking,
        warmup_epochs: config.warmup_epochs,
        batch_size: config.batch_size,
        seed: derive_seed(config.master_seed, SIM_STREAM),
    })
}

pub fn dataset_spec(config: &ExperimentConfig) -> DatasetSpec {
    DatasetSpec {
        generator: config.generator,
        layout: match config.architecture {
            ArchitectureKind::Mlp => FeatureLayout::Points,
            ArchitectureKind::TinyCnn => FeatureLayout::Image {
                side: config.image_side,
            },
        },
        seed: derive_seed(config.master_seed, DATA_STREAM),
        size: config.dataset_size,
        num_classes: config.classes,
    }
}

/// Trains `config.epochs` epochs and evaluates on the held-out split.
pub fn run(config: &ExperimentConfig) -> Result<ExperimentResult> {
    config.validate()?;
    let data = make_dataset_with(dataset_spec(config))?;
    let (train, test) = data.split(TEST_FRACTION, derive_seed(config.master_seed, SPLIT_STREAM));
    let model = config.model_spec()?;
    let mut sim = Simulator::new(model.clone(), config.optimizer()?, sim_config(config)?, &train)?;
    let steps = sim.steps_per_epoch();
    let track_schedule = config.compressor == crate::CompressorKind::RsDgc && config.dynamic_ratio;

    let mut rows = Vec::with_capacity(config.epochs * steps);
    let mut reports = Vec::with_capacity(config.epochs * steps);
    let mut schedules = Vec::new();
    for epoch in 0..config.epochs {
        if let Some(s) = sim.begin_epoch(epoch)? {
            if track_schedule {
                schedules.push(s);
            }
        }
        for _ in 0..steps {
            let report = sim.train_step(epoch)?;
            let ledger = sim.ledger();
            rows.push(StepRow {
                epoch,
                step: report.iteration,
                loss: report.loss,
                train_acc: report.train_acc(),
                bytes_sent_total: ledger.total_bytes(),
                dense_bytes_total: ledger.total_dense_bytes(),
                ratio: ledger.report_ratio()?,
            });
            reports.push(report);
        }
    }

    let (_, train_acc) = evaluate(&model, sim.weights(), &train)?;
    let (_, test_acc) = evaluate(&model, sim.weights(), &test)?;
    let ledger = sim.ledger();
    Ok(ExperimentResult {
        rows,
        reports,
        schedules,
        sparsification_ratio: ledger.sparsification_ratio()?,
        summary: Summary {
            final_train_acc: train_acc,
            final_test_acc: test_acc,
            cumulative_bytes: ledger.total_bytes(),
            compression_ratio: ledger.report_ratio()?,
            config_echo: config.echo(),
        },
    })
}
