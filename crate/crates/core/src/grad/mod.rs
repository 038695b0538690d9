//! Gradient and weight tensors, neighborhood tiling and the sparse on-wire form.
//!
//! Every tensor is a flat row-major `Vec<f64>` described by a [`LayerSpec`].
//! Compressors never see shapes directly; they work on the 2-D plane exposed
//! by [`LayerSpec::plane`] through a [`PatchPartition`].

mod partition;
mod sparse;
pub mod wire;

pub use partition::{ModelLayout, PatchPartition};
pub use sparse::{densify, densify_with, KeptPatch, SparseLayerGradient, SparseModelGradient};
pub use wire::{wire_size_bytes, EncodingConfig};

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerKind {
    Conv,
    Dense,
    Bias,
}

/// Shape and tiling parameters of one layer.
///
/// Conv shapes are `N × C × Kh × Kw`, dense shapes `rows × cols`, bias shapes
/// a single length. `patch_size` is the side `p` of the square neighborhood.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct LayerSpec {
    layer_id: usize,
    kind: LayerKind,
    shape: Vec<usize>,
    patch_size: usize,
}

impl LayerSpec {
    pub fn new(layer_id: usize, kind: LayerKind, shape: Vec<usize>, patch_size: usize) -> Result<Self> {
        let rank = match kind {
            LayerKind::Conv => 4,
            LayerKind::Dense => 2,
            LayerKind::Bias => 1,
        };
        if shape.len() != rank {
            return Err(Error::InvalidSpec(format!(
                "{kind:?} layer needs {rank} dimensions, got {shape:?}"
            )));
        }
        if shape.contains(&0) {
            return Err(Error::InvalidSpec(format!("zero dimension in {shape:?}")));
        }
        if patch_size == 0 {
            return Err(Error::InvalidSpec("patch_size must be >= 1".into()));
        }
        Ok(Self {
            layer_id,
            kind,
            shape,
            patch_size,
        })
    }

    pub fn conv(
        layer_id: usize,
        filters: usize,
        channels: usize,
        kh: usize,
        kw: usize,
        patch_size: usize,
    ) -> Result<Self> {
        Self::new(layer_id, LayerKind::Conv, vec![filters, channels, kh, kw], patch_size)
    }

    pub fn dense(layer_id: usize, rows: usize, cols: usize, patch_size: usize) -> Result<Self> {
        Self::new(layer_id, LayerKind::Dense, vec![rows, cols], patch_size)
    }

    pub fn bias(layer_id: usize, len: usize, patch_size: usize) -> Result<Self> {
        Self::new(layer_id, LayerKind::Bias, vec![len], patch_size)
    }

    pub fn layer_id(&self) -> usize {
        self.layer_id
    }

    pub fn kind(&self) -> LayerKind {
        self.kind
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn patch_size(&self) -> usize {
        self.patch_size
    }

    pub fn element_count(&self) -> usize {
        self.shape.iter().product()
    }

    /// Same layer, different neighborhood side.
    pub fn with_patch_size(&self, patch_size: usize) -> Result<Self> {
        Self::new(self.layer_id, self.kind, self.shape.clone(), patch_size)
    }

    /// Rows and columns of the 2-D plane the layer is tiled on.
    ///
    /// Conv kernels are stacked vertically, `(N·C·Kh) × Kw`, which is the
    /// identity on row-major storage and puts every `Kh × Kw` kernel in its
    /// own block when `Kh == Kw == p`. Bias vectors are a single row.
    pub fn plane(&self) -> (usize, usize) {
        match self.kind {
            LayerKind::Conv => (self.shape[0] * self.shape[1] * self.shape[2], self.shape[3]),
            LayerKind::Dense => (self.shape[0], self.shape[1]),
            LayerKind::Bias => (1, self.shape[0]),
        }
    }

    /// Height and width of one tile on the plane.
    pub fn tile(&self) -> (usize, usize) {
        let p = self.patch_size;
        match self.kind {
            LayerKind::Bias => (1, p * p),
            _ => (p, p),
        }
    }
}

/// A dense per-layer tensor: gradient, weight, or accumulator buffer.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerTensor {
    spec: LayerSpec,
    values: Vec<f64>,
}

pub type LayerGradient = LayerTensor;

impl LayerTensor {
    /// Rejects wrong lengths and non-finite values.
    pub fn new(spec: LayerSpec, values: Vec<f64>) -> Result<Self> {
        if values.len() != spec.element_count() {
            return Err(Error::ShapeMismatch(format!(
                "layer {} expects {} values, got {}",
                spec.layer_id(),
                spec.element_count(),
                values.len()
            )));
        }
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                layer_id: spec.layer_id(),
                index,
            });
        }
        Ok(Self { spec, values })
    }

    pub fn zeros(spec: LayerSpec) -> Self {
        let n = spec.element_count();
        Self {
            spec,
            values: vec![0.0; n],
        }
    }

    pub fn spec(&self) -> &LayerSpec {
        &self.spec
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Mutable access for in-place updates. Callers must keep values finite.
    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn check_finite(&self) -> Result<()> {
        match self.values.iter().position(|v| !v.is_finite()) {
            Some(index) => Err(Error::NonFinite {
                layer_id: self.spec.layer_id(),
                index,
            }),
            None => Ok(()),
        }
    }
}

/// Ordered per-layer tensors for a whole model.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelTensor {
    layers: Vec<LayerTensor>,
}

/// Per-layer gradients in model order.
pub type ModelGradient = ModelTensor;
/// Per-layer weights; same layout as [`ModelGradient`].
pub type ModelWeights = ModelTensor;

impl ModelTensor {
    pub fn new(layers: Vec<LayerTensor>) -> Self {
        Self { layers }
    }

    pub fn zeros(specs: &[LayerSpec]) -> Self {
        Self {
            layers: specs.iter().cloned().map(LayerTensor::zeros).collect(),
        }
    }

    pub fn layers(&self) -> &[LayerTensor] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [LayerTensor] {
        &mut self.layers
    }

    pub fn specs(&self) -> Vec<LayerSpec> {
        self.layers.iter().map(|l| l.spec.clone()).collect()
    }

    pub fn element_count(&self) -> usize {
        self.layers.iter().map(|l| l.values.len()).sum()
    }

    /// Errors unless `other` has the same number of layers with the same shapes.
    pub fn check_same_shape(&self, other: &ModelTensor) -> Result<()> {
        if self.layers.len() != other.layers.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} layers vs {}",
                self.layers.len(),
                other.layers.len()
            )));
        }
        for (a, b) in self.layers.iter().zip(&other.layers) {
            if a.spec.shape() != b.spec.shape() || a.spec.kind() != b.spec.kind() {
                return Err(Error::ShapeMismatch(format!(
                    "layer {}: {:?} vs {:?}",
                    a.spec.layer_id(),
                    a.spec.shape(),
                    b.spec.shape()
                )));
            }
        }
        Ok(())
    }

    pub fn check_finite(&self) -> Result<()> {
        self.layers.iter().try_for_each(LayerTensor::check_finite)
    }

    /// Bitwise equality of every value, distinguishing `-0.0` from `0.0`.
    pub fn bit_eq(&self, other: &ModelTensor) -> bool {
        self.layers.len() == other.layers.len()
            && self.layers.iter().zip(&other.layers).all(|(a, b)| {
                a.values.len() == b.values.len()
                    && a.values.iter().zip(&b.values).all(|(x, y)| x.to_bits() == y.to_bits())
            })
    }
}
