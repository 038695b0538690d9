//! Neighborhood Statistics Indicator scoring and patch selection.
//!
//! Each patch is scored by `alpha · mean(|g|) + (1 − alpha) · std(g)` over
//! its true element count, and the highest-scoring patches of each layer are
//! transmitted whole.

use crate::error::{Error, Result};
use crate::grad::{
    LayerGradient, ModelGradient, ModelLayout, PatchPartition, SparseLayerGradient, SparseModelGradient,
};
use crate::ratio::RatioSchedule;
use crate::select::{ceil_count, top_k_indices};

pub const DEFAULT_ALPHA: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NsiConfig {
    alpha: f64,
    patch_size: usize,
}

impl NsiConfig {
    pub fn new(alpha: f64, patch_size: usize) -> Result<Self> {
        if !(0.0..=1.0).contains(&alpha) {
            return Err(Error::InvalidArgument(format!("alpha {alpha} outside [0, 1]")));
        }
        if patch_size == 0 {
            return Err(Error::InvalidArgument("patch_size must be >= 1".into()));
        }
        Ok(Self { alpha, patch_size })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn patch_size(&self) -> usize {
        self.patch_size
    }
}

impl Default for NsiConfig {
    fn default() -> Self {
        Self {
            alpha: DEFAULT_ALPHA,
            patch_size: 3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PatchScore {
    pub patch_index: usize,
    pub mean_abs: f64,
    pub std: f64,
    pub nsi: f64,
}

fn check_layer(layer: &LayerGradient, partition: &PatchPartition) -> Result<()> {
    if layer.values().len() != partition.element_count() {
        return Err(Error::ShapeMismatch(format!(
            "layer {} has {} values, partition covers {}",
            layer.spec().layer_id(),
            layer.values().len(),
            partition.element_count()
        )));
    }
    layer.check_finite()
}

pub fn score_patches(layer: &LayerGradient, partition: &PatchPartition, config: &NsiConfig) -> Result<Vec<PatchScore>> {
    check_layer(layer, partition)?;
    let values = layer.values();
    let alpha = config.alpha;
    Ok(partition
        .patches()
        .enumerate()
        .map(|(patch_index, idx)| {
            let n = idx.len() as f64;
            let (sum, sum_abs) = idx
                .iter()
                .fold((0.0, 0.0), |(s, a), &i| (s + values[i], a + values[i].abs()));
            let mean = sum / n;
            let mean_abs = sum_abs / n;
            let var = idx.iter().map(|&i| (values[i] - mean).powi(2)).sum::<f64>() / n;
            let std = var.sqrt();
            PatchScore {
                patch_index,
                mean_abs,
                std,
                nsi: alpha * mean_abs + (1.0 - alpha) * std,
            }
        })
        .collect())
}

/// Number of patches to keep at `density`: `ceil(element_count / p² · density)`,
/// capped at the patch count. Density 1 keeps every patch, including the
/// truncated edge ones the formula would otherwise undercount.
pub fn keep_count(partition: &PatchPartition, density: f64) -> usize {
    let n = partition.num_patches();
    if density <= 0.0 {
        return 0;
    }
    if density >= 1.0 {
        return n;
    }
    let p = partition.spec().patch_size() as f64;
    let equivalent = partition.element_count() as f64 / (p * p);
    ceil_count(equivalent * density).clamp(1, n)
}

fn check_density(density: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&density) {
        return Err(Error::InvalidArgument(format!("density {density} outside [0, 1]")));
    }
    Ok(())
}

/// Keeps the `keep_count` highest-NSI patches, ties to the lower patch index.
pub fn sparsify_layer(
    layer: &LayerGradient,
    partition: &PatchPartition,
    config: &NsiConfig,
    density: f64,
) -> Result<SparseLayerGradient> {
    check_density(density)?;
    let scores: Vec<f64> = score_patches(layer, partition, config)?.iter().map(|s| s.nsi).collect();
    let picked = top_k_indices(&scores, keep_count(partition, density));
    Ok(SparseLayerGradient::gather(layer.values(), partition, &picked))
}

/// NSI sparsifier bound to one model's neighborhood layout.
#[derive(Debug, Clone)]
pub struct NsiCompressor {
    config: NsiConfig,
    layout: ModelLayout,
}

impl NsiCompressor {
    pub fn new(config: NsiConfig, specs: &[crate::grad::LayerSpec]) -> Result<Self> {
        Ok(Self {
            layout: ModelLayout::with_patch_size(specs, config.patch_size)?,
            config,
        })
    }

    pub fn config(&self) -> &NsiConfig {
        &self.config
    }

    pub fn layout(&self) -> &ModelLayout {
        &self.layout
    }

    pub fn compress(
        &self,
        grad: &ModelGradient,
        schedule: &RatioSchedule,
        iteration: usize,
    ) -> Result<SparseModelGradient> {
        if grad.layers().len() != self.layout.len() {
            return Err(Error::ShapeMismatch(format!(
                "gradient has {} layers, layout has {}",
                grad.layers().len(),
                self.layout.len()
            )));
        }
        let layers = grad
            .layers()
            .iter()
            .zip(self.layout.partitions())
            .map(|(layer, part)| {
                let id = layer.spec().layer_id();
                let density = schedule
                    .density(id)
                    .ok_or_else(|| Error::InvalidArgument(format!("schedule has no density for layer {id}")))?;
                sparsify_layer(layer, part, &self.config, density)
            })
            .collect::<Result<_>>()?;
        Ok(SparseModelGradient { layers, iteration })
    }
}

/// One-shot form of [`NsiCompressor::compress`].
pub fn sparsify_model(
    grad: &ModelGradient,
    schedule: &RatioSchedule,
    config: &NsiConfig,
) -> Result<SparseModelGradient> {
    NsiCompressor::new(*config, &grad.specs())?.compress(grad, schedule, 0)
}
