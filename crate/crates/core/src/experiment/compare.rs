use super::{run, ExperimentConfig, ExperimentResult};
use crate::baselines::CompressorKind;
use crate::error::{Error, Result};
use std::fmt::Write as _;

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonRow {
    pub method: String,
    pub accuracy: f64,
    /// Accuracy minus the dense run's; `None` when no dense config was given.
    pub accuracy_delta_vs_dense: Option<f64>,
    pub sparsification_ratio: f64,
    pub byte_ratio: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonTable {
    pub rows: Vec<ComparisonRow>,
    pub results: Vec<ExperimentResult>,
}

impl ComparisonTable {
    pub fn csv(&self) -> String {
        let mut out = String::from("method,accuracy,accuracy_delta_vs_dense,sparsification_ratio,byte_ratio\n");
        for r in &self.rows {
            let delta = r.accuracy_delta_vs_dense.map(|d| d.to_string()).unwrap_or_default();
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                r.method, r.accuracy, delta, r.sparsification_ratio, r.byte_ratio
            );
        }
        out
    }
}

/// Canonical config text with the keys a comparison may vary blanked out.
fn fixed_part(cfg: &ExperimentConfig) -> Vec<(&'static str, String)> {
    cfg.to_pairs()
        .into_iter()
        .filter(|(k, _)| !matches!(*k, "compressor" | "density" | "output_path"))
        .collect()
}

/// Runs each config and tabulates accuracy against compression.
pub fn compare(configs: &[ExperimentConfig]) -> Result<ComparisonTable> {
    let Some(first) = configs.first() else {
        return Err(Error::Config {
            key: "config".into(),
            reason: "compare needs at least one config".into(),
        });
    };
    let base = fixed_part(first);
    for cfg in &configs[1..] {
        if let Some((k, _)) = fixed_part(cfg).iter().zip(&base).find(|(a, b)| a != b).map(|(a, _)| a) {
            return Err(Error::Config {
                key: k.to_string(),
                reason: "compared configs may differ only in compressor and density".into(),
            });
        }
    }

    let results = configs.iter().map(run).collect::<Result<Vec<_>>>()?;
    let dense_acc = configs
        .iter()
        .zip(&results)
        .find(|(c, _)| c.compressor == CompressorKind::Dense)
        .map(|(_, r)| r.summary.final_test_acc);
    let mixed_density = configs.iter().any(|c| c.density != first.density);
    let rows = configs
        .iter()
        .zip(&results)
        .map(|(cfg, res)| {
            let acc = res.summary.final_test_acc;
            ComparisonRow {
                method: if mixed_density && cfg.compressor != CompressorKind::Dense {
                    format!("{}@{}", cfg.compressor, cfg.density)
                } else {
                    cfg.compressor.to_string()
                },
                accuracy: acc,
                accuracy_delta_vs_dense: dense_acc.map(|d| acc - d),
                sparsification_ratio: res.sparsification_ratio,
                byte_ratio: res.summary.compression_ratio,
            }
        })
        .collect();
    Ok(ComparisonTable { rows, results })
}
