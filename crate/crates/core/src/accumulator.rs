//! Momentum-corrected local gradient accumulation.
//!
//! Per node: `u ← m·u + g`, `v ← v + u`; `v` is what gets sparsified. After
//! transmission the sent coordinates of `v` are cleared, and optionally those
//! of `u` as well (momentum factor masking).

use crate::error::{Error, Result};
use crate::grad::{LayerSpec, ModelGradient, ModelLayout, SparseModelGradient};

#[derive(Debug, Clone, PartialEq)]
pub struct AccumulatorState {
    node_id: usize,
    momentum: f64,
    mask_momentum: bool,
    momentum_buf: ModelGradient,
    residual_buf: ModelGradient,
}

impl AccumulatorState {
    pub fn new(node_id: usize, specs: &[LayerSpec], momentum: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&momentum) {
            return Err(Error::InvalidArgument(format!("momentum {momentum} outside [0, 1)")));
        }
        Ok(Self {
            node_id,
            momentum,
            mask_momentum: false,
            momentum_buf: ModelGradient::zeros(specs),
            residual_buf: ModelGradient::zeros(specs),
        })
    }

    /// Also clear the momentum buffer at transmitted coordinates.
    pub fn with_momentum_masking(mut self, enabled: bool) -> Self {
        self.mask_momentum = enabled;
        self
    }

    pub fn node_id(&self) -> usize {
        self.node_id
    }

    pub fn momentum(&self) -> f64 {
        self.momentum
    }

    pub fn momentum_buf(&self) -> &ModelGradient {
        &self.momentum_buf
    }

    pub fn residual_buf(&self) -> &ModelGradient {
        &self.residual_buf
    }

    /// Folds `grad` into both buffers and returns a copy of the residual.
    pub fn accumulate(&mut self, grad: &ModelGradient) -> Result<ModelGradient> {
        self.momentum_buf.check_same_shape(grad)?;
        let m = self.momentum;
        for ((u, v), g) in self
            .momentum_buf
            .layers_mut()
            .iter_mut()
            .zip(self.residual_buf.layers_mut())
            .zip(grad.layers())
        {
            for ((u, v), &g) in u.values_mut().iter_mut().zip(v.values_mut()).zip(g.values()) {
                *u = m * *u + g;
                *v += *u;
            }
        }
        Ok(self.residual_buf.clone())
    }

    /// Clears every element covered by a transmitted patch.
    pub fn commit_transmitted(&mut self, sparse: &SparseModelGradient, layout: &ModelLayout) -> Result<()> {
        sparse.validate(layout)?;
        if layout.len() != self.residual_buf.layers().len() {
            return Err(Error::ShapeMismatch(format!(
                "layout has {} layers, accumulator has {}",
                layout.len(),
                self.residual_buf.layers().len()
            )));
        }
        for (li, (layer, part)) in sparse.layers.iter().zip(layout.partitions()).enumerate() {
            let v = self.residual_buf.layers_mut()[li].values_mut();
            if v.len() != part.element_count() {
                return Err(Error::ShapeMismatch(format!(
                    "layer {li}: partition does not match buffer"
                )));
            }
            for k in layer.patch_indices() {
                for &i in part.patch(k) {
                    v[i] = 0.0;
                }
            }
            if self.mask_momentum {
                let u = self.momentum_buf.layers_mut()[li].values_mut();
                for k in layer.patch_indices() {
                    for &i in part.patch(k) {
                        u[i] = 0.0;
                    }
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grad::{LayerTensor, SparseLayerGradient};

    fn scalar_grad(g: f64) -> ModelGradient {
        ModelGradient::new(vec![
            LayerTensor::new(LayerSpec::bias(0, 1, 1).unwrap(), vec![g]).unwrap()
        ])
    }

    #[test]
    fn recurrence_two_steps() {
        let specs = [LayerSpec::bias(0, 1, 1).unwrap()];
        let mut acc = AccumulatorState::new(0, &specs, 0.9).unwrap();
        let v1 = acc.accumulate(&scalar_grad(1.0)).unwrap();
        assert_eq!(v1.layers()[0].values(), &[1.0]);
        assert_eq!(acc.momentum_buf().layers()[0].values(), &[1.0]);
        let v2 = acc.accumulate(&scalar_grad(1.0)).unwrap();
        assert_eq!(acc.momentum_buf().layers()[0].values(), &[0.9 * 1.0 + 1.0]);
        assert_eq!(v2.layers()[0].values(), &[1.0 + (0.9 * 1.0 + 1.0)]);
        assert!((v2.layers()[0].values()[0] - 2.9).abs() < 1e-15);
    }

    #[test]
    fn zero_momentum_passes_gradient() {
        let specs = [LayerSpec::bias(0, 1, 1).unwrap()];
        let mut acc = AccumulatorState::new(0, &specs, 0.0).unwrap();
        assert_eq!(acc.accumulate(&scalar_grad(-2.5)).unwrap(), scalar_grad(-2.5));
    }

    #[test]
    fn momentum_range() {
        let specs = [LayerSpec::bias(0, 1, 1).unwrap()];
        assert!(AccumulatorState::new(0, &specs, 1.0).is_err());
        assert!(AccumulatorState::new(0, &specs, -0.1).is_err());
    }

    #[test]
    fn shape_mismatch() {
        let specs = [LayerSpec::bias(0, 2, 1).unwrap()];
        let mut acc = AccumulatorState::new(0, &specs, 0.9).unwrap();
        assert!(matches!(
            acc.accumulate(&scalar_grad(1.0)),
            Err(Error::ShapeMismatch(_))
        ));
    }

    fn two_kernel_setup(mask: bool) -> (AccumulatorState, ModelLayout) {
        let specs = vec![LayerSpec::conv(0, 2, 1, 3, 3, 3).unwrap()];
        let mut acc = AccumulatorState::new(0, &specs, 0.5)
            .unwrap()
            .with_momentum_masking(mask);
        let g = ModelGradient::new(vec![LayerTensor::new(
            specs[0].clone(),
            (1..=18).map(f64::from).collect(),
        )
        .unwrap()]);
        acc.accumulate(&g).unwrap();
        (acc, ModelLayout::new(&specs))
    }

    #[test]
    fn commit_one_of_two_kernels() {
        let (mut acc, layout) = two_kernel_setup(true);
        let part = &layout.partitions()[0];
        let v = acc.residual_buf().layers()[0].values().to_vec();
        let sparse = SparseModelGradient {
            layers: vec![SparseLayerGradient::gather(&v, part, &[1])],
            iteration: 0,
        };
        acc.commit_transmitted(&sparse, &layout).unwrap();
        for buf in [acc.residual_buf(), acc.momentum_buf()] {
            let vals = buf.layers()[0].values();
            assert_eq!(vals.iter().filter(|&&x| x == 0.0).count(), 9);
            assert!(vals[9..].iter().all(|&x| x == 0.0));
            assert!(vals[..9].iter().all(|&x| x != 0.0));
        }
    }

    #[test]
    fn commit_everything_and_nothing() {
        let (mut acc, layout) = two_kernel_setup(true);
        let before = acc.clone();
        acc.commit_transmitted(&SparseModelGradient::empty(&layout, 0), &layout)
            .unwrap();
        assert_eq!(acc, before);

        let part = &layout.partitions()[0];
        let v = acc.residual_buf().layers()[0].values().to_vec();
        let all = SparseModelGradient {
            layers: vec![SparseLayerGradient::gather(&v, part, &[0, 1])],
            iteration: 0,
        };
        acc.commit_transmitted(&all, &layout).unwrap();
        assert!(acc.residual_buf().layers()[0].values().iter().all(|&x| x == 0.0));
        assert!(acc.momentum_buf().layers()[0].values().iter().all(|&x| x == 0.0));
        let once = acc.clone();
        acc.commit_transmitted(&all, &layout).unwrap();
        assert_eq!(acc, once);
    }

    #[test]
    fn default_keeps_momentum() {
        let (mut acc, layout) = two_kernel_setup(false);
        let u_before = acc.momentum_buf().clone();
        let part = &layout.partitions()[0];
        let v = acc.residual_buf().layers()[0].values().to_vec();
        let all = SparseModelGradient {
            layers: vec![SparseLayerGradient::gather(&v, part, &[0, 1])],
            iteration: 0,
        };
        acc.commit_transmitted(&all, &layout).unwrap();
        assert!(acc.residual_buf().layers()[0].values().iter().all(|&x| x == 0.0));
        assert_eq!(acc.momentum_buf(), &u_before);
    }

    #[test]
    fn commit_rejects_bad_index() {
        let (mut acc, layout) = two_kernel_setup(false);
        let sparse = SparseModelGradient {
            layers: vec![SparseLayerGradient {
                layer_id: 0,
                kept: vec![crate::grad::KeptPatch {
                    patch_index: 2,
                    values: vec![0.0; 9],
                }],
            }],
            iteration: 0,
        };
        assert!(matches!(
            acc.commit_transmitted(&sparse, &layout),
            Err(Error::IndexMismatch { .. })
        ));
    }
}
