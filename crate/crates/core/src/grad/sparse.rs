use super::{LayerSpec, LayerTensor, ModelGradient, ModelLayout, PatchPartition};
use crate::error::{Error, Result};

/// One transmitted neighborhood: its index and its values in patch-local order.
#[derive(Debug, Clone, PartialEq)]
pub struct KeptPatch {
    pub patch_index: usize,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SparseLayerGradient {
    pub layer_id: usize,
    pub kept: Vec<KeptPatch>,
}

impl SparseLayerGradient {
    pub fn empty(layer_id: usize) -> Self {
        Self {
            layer_id,
            kept: Vec::new(),
        }
    }

    /// Copies the listed patches out of `values`. `patch_indices` must be
    /// strictly increasing.
    pub fn gather(values: &[f64], partition: &PatchPartition, patch_indices: &[usize]) -> Self {
        debug_assert!(patch_indices.windows(2).all(|w| w[0] < w[1]));
        let kept = patch_indices
            .iter()
            .map(|&k| KeptPatch {
                patch_index: k,
                values: partition.patch(k).iter().map(|&i| values[i]).collect(),
            })
            .collect();
        Self {
            layer_id: partition.spec().layer_id(),
            kept,
        }
    }

    pub fn kept_elements(&self) -> usize {
        self.kept.iter().map(|p| p.values.len()).sum()
    }

    pub fn patch_indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.kept.iter().map(|p| p.patch_index)
    }

    /// Checks ordering, bounds and per-patch lengths against `partition`.
    pub fn validate(&self, partition: &PatchPartition) -> Result<()> {
        let mut prev: Option<usize> = None;
        for patch in &self.kept {
            partition.check_index(patch.patch_index)?;
            if prev.is_some_and(|p| p >= patch.patch_index) {
                return Err(Error::IndexMismatch {
                    layer_id: self.layer_id,
                    patch_index: patch.patch_index,
                    num_patches: partition.num_patches(),
                });
            }
            if patch.values.len() != partition.patch_len(patch.patch_index) {
                return Err(Error::ShapeMismatch(format!(
                    "layer {} patch {}: {} values for {} elements",
                    self.layer_id,
                    patch.patch_index,
                    patch.values.len(),
                    partition.patch_len(patch.patch_index)
                )));
            }
            prev = Some(patch.patch_index);
        }
        Ok(())
    }

    /// Writes kept values into `dest` at their flat positions.
    pub fn scatter_into(&self, dest: &mut [f64], partition: &PatchPartition) -> Result<()> {
        self.validate(partition)?;
        for patch in &self.kept {
            for (&i, &v) in partition.patch(patch.patch_index).iter().zip(&patch.values) {
                dest[i] = v;
            }
        }
        Ok(())
    }
}

/// Per-layer sparse gradients of one node at one iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseModelGradient {
    pub layers: Vec<SparseLayerGradient>,
    pub iteration: usize,
}

impl SparseModelGradient {
    pub fn empty(layout: &ModelLayout, iteration: usize) -> Self {
        Self {
            layers: layout
                .partitions()
                .iter()
                .map(|p| SparseLayerGradient::empty(p.spec().layer_id()))
                .collect(),
            iteration,
        }
    }

    pub fn kept_elements(&self) -> usize {
        self.layers.iter().map(SparseLayerGradient::kept_elements).sum()
    }

    pub fn kept_patches(&self) -> usize {
        self.layers.iter().map(|l| l.kept.len()).sum()
    }

    pub fn validate(&self, layout: &ModelLayout) -> Result<()> {
        if self.layers.len() != layout.len() {
            return Err(Error::ShapeMismatch(format!(
                "sparse gradient has {} layers, model has {}",
                self.layers.len(),
                layout.len()
            )));
        }
        self.layers
            .iter()
            .zip(layout.partitions())
            .try_for_each(|(l, p)| l.validate(p))
    }
}

/// Expands a sparse gradient to dense, tiling each layer with its spec's patch size.
pub fn densify(sparse: &SparseModelGradient, specs: &[LayerSpec]) -> Result<ModelGradient> {
    densify_with(sparse, &ModelLayout::new(specs))
}

/// Expands a sparse gradient to dense with a prebuilt layout; zeros where nothing was kept.
pub fn densify_with(sparse: &SparseModelGradient, layout: &ModelLayout) -> Result<ModelGradient> {
    if sparse.layers.len() != layout.len() {
        return Err(Error::ShapeMismatch(format!(
            "sparse gradient has {} layers, model has {}",
            sparse.layers.len(),
            layout.len()
        )));
    }
    let layers = sparse
        .layers
        .iter()
        .zip(layout.partitions())
        .map(|(layer, part)| {
            let mut dense = LayerTensor::zeros(part.spec().clone());
            layer.scatter_into(dense.values_mut(), part)?;
            Ok(dense)
        })
        .collect::<Result<_>>()?;
    Ok(ModelGradient::new(layers))
}
