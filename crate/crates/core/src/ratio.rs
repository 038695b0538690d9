//! Layer-wise dynamic keep densities from a global weight-magnitude ranking.
//!
//! All weights of the model are ranked together by `|w|`; the top
//! `round(p · G_total)` survive and each layer's density is its surviving
//! fraction. Layers holding large weights therefore transmit more.

use crate::error::{Error, Result};
use crate::grad::{LayerSpec, ModelWeights};
use crate::select::top_k_indices;
use std::fmt::Write as _;

#[derive(Debug, Clone, PartialEq)]
pub struct LayerDensity {
    pub layer_id: usize,
    /// Weight count `G_l`.
    pub weight_count: usize,
    /// Weights of this layer that survived the global cut.
    pub kept: usize,
    pub density: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RatioSchedule {
    layers: Vec<LayerDensity>,
    global_density: f64,
    computed_at_epoch: usize,
}

impl RatioSchedule {
    /// The same density for every layer (the fixed-ratio ablation).
    pub fn uniform(specs: &[LayerSpec], density: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&density) {
            return Err(Error::InvalidArgument(format!("density {density} outside [0, 1]")));
        }
        let layers = specs
            .iter()
            .map(|s| LayerDensity {
                layer_id: s.layer_id(),
                weight_count: s.element_count(),
                kept: (density * s.element_count() as f64).round() as usize,
                density,
            })
            .collect();
        Ok(Self {
            layers,
            global_density: density,
            computed_at_epoch: 0,
        })
    }

    pub fn density(&self, layer_id: usize) -> Option<f64> {
        self.layers.iter().find(|l| l.layer_id == layer_id).map(|l| l.density)
    }

    pub fn layers(&self) -> &[LayerDensity] {
        &self.layers
    }

    pub fn global_density(&self) -> f64 {
        self.global_density
    }

    pub fn computed_at_epoch(&self) -> usize {
        self.computed_at_epoch
    }

    pub fn total_kept(&self) -> usize {
        self.layers.iter().map(|l| l.kept).sum()
    }

    /// Diagnostic dump, one row per layer: `epoch,layer_id,G_l,kept,p_l`.
    pub fn to_csv(&self, with_header: bool) -> String {
        let mut out = String::new();
        if with_header {
            out.push_str("epoch,layer_id,G_l,kept,p_l\n");
        }
        for l in &self.layers {
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                self.computed_at_epoch, l.layer_id, l.weight_count, l.kept, l.density
            );
        }
        out
    }
}

/// Ranks every weight of the model by magnitude and keeps the top
/// `round(global_density · G_total)`. Ties at the cut go to the lower
/// `(layer, flat index)`.
pub fn compute_schedule(weights: &ModelWeights, global_density: f64, epoch: usize) -> Result<RatioSchedule> {
    if !(global_density > 0.0 && global_density <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "global density {global_density} outside (0, 1]"
        )));
    }
    let total = weights.element_count();
    if total == 0 {
        return Err(Error::EmptyModel);
    }
    weights.check_finite()?;

    let magnitudes: Vec<f64> = weights
        .layers()
        .iter()
        .flat_map(|l| l.values().iter().map(|w| w.abs()))
        .collect();
    let budget = (global_density * total as f64).round() as usize;
    let survivors = top_k_indices(&magnitudes, budget);

    // Survivors are in ascending model-flat order; bucket them by layer.
    let mut kept = vec![0usize; weights.layers().len()];
    let mut layer = 0;
    let mut layer_end = weights.layers()[0].values().len();
    for idx in survivors {
        while idx >= layer_end {
            layer += 1;
            layer_end += weights.layers()[layer].values().len();
        }
        kept[layer] += 1;
    }

    let layers = weights
        .layers()
        .iter()
        .zip(kept)
        .map(|(l, kept)| {
            let g = l.values().len();
            LayerDensity {
                layer_id: l.spec().layer_id(),
                weight_count: g,
                kept,
                density: kept as f64 / g as f64,
            }
        })
        .collect();

    Ok(RatioSchedule {
        layers,
        global_density,
        computed_at_epoch: epoch,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RecomputePolicy {
    period_epochs: usize,
}

impl RecomputePolicy {
    pub fn new(period_epochs: usize) -> Result<Self> {
        if period_epochs == 0 {
            return Err(Error::InvalidArgument("recompute period must be >= 1".into()));
        }
        Ok(Self { period_epochs })
    }

    pub fn period_epochs(&self) -> usize {
        self.period_epochs
    }
}

impl Default for RecomputePolicy {
    fn default() -> Self {
        Self { period_epochs: 1 }
    }
}

pub fn should_recompute(epoch: usize, policy: RecomputePolicy) -> bool {
    epoch.is_multiple_of(policy.period_epochs)
}
