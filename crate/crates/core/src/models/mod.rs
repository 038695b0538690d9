//! Small trainable classifiers with hand-written backpropagation.
//!
//! Two architectures: a ReLU MLP on feature vectors and a one-conv CNN
//! (3×3 valid convolution, ReLU, 2×2 mean pool, dense head) on square
//! single-channel images. Both end in softmax cross-entropy.

pub mod data;
pub mod optim;

pub use data::{make_dataset, make_dataset_with, DatasetShard, DatasetSpec, FeatureLayout, Generator};
pub use optim::{LrSchedule, OptimizerConfig};

use crate::error::{Error, Result};
use crate::grad::{LayerKind, LayerSpec, LayerTensor, ModelGradient, ModelWeights};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const CONV_KERNEL: usize = 3;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Architecture {
    Mlp {
        input_dim: usize,
        hidden: Vec<usize>,
        classes: usize,
    },
    TinyCnn {
        filters: usize,
        side: usize,
        classes: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModelSpec {
    architecture: Architecture,
    layer_specs: Vec<LayerSpec>,
    init_seed: u64,
}

impl ModelSpec {
    pub fn mlp(input_dim: usize, hidden: &[usize], classes: usize, patch_size: usize, init_seed: u64) -> Result<Self> {
        if input_dim == 0 || classes < 2 || hidden.contains(&0) {
            return Err(Error::InvalidArgument(
                "mlp needs nonzero widths and >= 2 classes".into(),
            ));
        }
        let mut widths = vec![input_dim];
        widths.extend_from_slice(hidden);
        widths.push(classes);
        let mut layer_specs = Vec::new();
        for w in widths.windows(2) {
            let id = layer_specs.len();
            layer_specs.push(LayerSpec::dense(id, w[1], w[0], patch_size)?);
            layer_specs.push(LayerSpec::bias(id + 1, w[1], patch_size)?);
        }
        Ok(Self {
            architecture: Architecture::Mlp {
                input_dim,
                hidden: hidden.to_vec(),
                classes,
            },
            layer_specs,
            init_seed,
        })
    }

    pub fn tiny_cnn(filters: usize, side: usize, classes: usize, patch_size: usize, init_seed: u64) -> Result<Self> {
        if filters == 0 || classes < 2 || side < CONV_KERNEL + 1 {
            return Err(Error::InvalidArgument(format!(
                "tiny_cnn needs filters >= 1, classes >= 2, side >= {}",
                CONV_KERNEL + 1
            )));
        }
        let conv_out = side - CONV_KERNEL + 1;
        let pooled = conv_out / 2;
        let layer_specs = vec![
            LayerSpec::conv(0, filters, 1, CONV_KERNEL, CONV_KERNEL, patch_size)?,
            LayerSpec::bias(1, filters, patch_size)?,
            LayerSpec::dense(2, classes, filters * pooled * pooled, patch_size)?,
            LayerSpec::bias(3, classes, patch_size)?,
        ];
        Ok(Self {
            architecture: Architecture::TinyCnn { filters, side, classes },
            layer_specs,
            init_seed,
        })
    }

    pub fn architecture(&self) -> &Architecture {
        &self.architecture
    }

    pub fn layer_specs(&self) -> &[LayerSpec] {
        &self.layer_specs
    }

    pub fn init_seed(&self) -> u64 {
        self.init_seed
    }

    pub fn input_dim(&self) -> usize {
        match &self.architecture {
            Architecture::Mlp { input_dim, .. } => *input_dim,
            Architecture::TinyCnn { side, .. } => side * side,
        }
    }

    pub fn classes(&self) -> usize {
        match &self.architecture {
            Architecture::Mlp { classes, .. } | Architecture::TinyCnn { classes, .. } => *classes,
        }
    }

    /// He-uniform weights, zero biases.
    pub fn init_weights(&self) -> ModelWeights {
        let mut rng = ChaCha8Rng::seed_from_u64(self.init_seed);
        let layers = self
            .layer_specs
            .iter()
            .map(|spec| {
                let fan_in = match spec.kind() {
                    LayerKind::Conv => spec.shape()[1] * spec.shape()[2] * spec.shape()[3],
                    LayerKind::Dense => spec.shape()[1],
                    LayerKind::Bias => return LayerTensor::zeros(spec.clone()),
                };
                let bound = (6.0 / fan_in as f64).sqrt();
                let values = (0..spec.element_count())
                    .map(|_| rng.gen_range(-bound..bound))
                    .collect();
                LayerTensor::new(spec.clone(), values).expect("finite init")
            })
            .collect();
        ModelWeights::new(layers)
    }
}

/// Mean loss, correct-prediction count and mean gradient over one batch.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchResult {
    pub loss: f64,
    pub correct: usize,
    pub grad: ModelGradient,
}

fn check_batch(model: &ModelSpec, weights: &ModelWeights, inputs: &[f64], labels: &[usize]) -> Result<()> {
    if labels.is_empty() {
        return Err(Error::ShapeMismatch("empty batch".into()));
    }
    if inputs.len() != labels.len() * model.input_dim() {
        return Err(Error::ShapeMismatch(format!(
            "{} inputs for {} samples of dim {}",
            inputs.len(),
            labels.len(),
            model.input_dim()
        )));
    }
    if let Some(&l) = labels.iter().find(|&&l| l >= model.classes()) {
        return Err(Error::ShapeMismatch(format!(
            "label {l} >= {} classes",
            model.classes()
        )));
    }
    if weights.specs() != model.layer_specs {
        return Err(Error::ShapeMismatch("weights do not match model layers".into()));
    }
    Ok(())
}

/// Softmax cross-entropy of one sample. Writes `softmax − onehot` scaled by
/// `scale` into `dlogits` and returns `(loss, argmax == label)`.
fn softmax_xent(logits: &[f64], label: usize, scale: f64, dlogits: &mut [f64]) -> (f64, bool) {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = logits.iter().map(|z| (z - max).exp()).sum();
    let log_sum = sum.ln() + max;
    for (d, &z) in dlogits.iter_mut().zip(logits) {
        *d = (z - log_sum).exp() * scale;
    }
    dlogits[label] -= scale;
    let argmax = logits
        .iter()
        .enumerate()
        .fold(0, |best, (i, &z)| if z > logits[best] { i } else { best });
    (log_sum - logits[label], argmax == label)
}

/// `out = W x + b` for a row-major `rows × cols` matrix.
fn affine(w: &[f64], b: &[f64], x: &[f64], out: &mut [f64]) {
    let cols = x.len();
    for (r, o) in out.iter_mut().enumerate() {
        *o = b[r]
            + w[r * cols..(r + 1) * cols]
                .iter()
                .zip(x)
                .map(|(a, b)| a * b)
                .sum::<f64>();
    }
}

/// Accumulates `dW += dz ⊗ x`, `db += dz`; optionally writes `dx = Wᵀ dz`.
fn affine_backward(w: &[f64], x: &[f64], dz: &[f64], dw: &mut [f64], db: &mut [f64], dx: Option<&mut [f64]>) {
    let cols = x.len();
    for (r, &d) in dz.iter().enumerate() {
        db[r] += d;
        for (g, &xi) in dw[r * cols..(r + 1) * cols].iter_mut().zip(x) {
            *g += d * xi;
        }
    }
    if let Some(dx) = dx {
        dx.iter_mut().for_each(|v| *v = 0.0);
        for (r, &d) in dz.iter().enumerate() {
            for (v, &wi) in dx.iter_mut().zip(&w[r * cols..(r + 1) * cols]) {
                *v += wi * d;
            }
        }
    }
}

/// Mean cross-entropy loss and its exact gradient for every layer.
pub fn forward_backward(
    model: &ModelSpec,
    weights: &ModelWeights,
    inputs: &[f64],
    labels: &[usize],
) -> Result<BatchResult> {
    check_batch(model, weights, inputs, labels)?;
    let mut grads: Vec<Vec<f64>> = model.layer_specs.iter().map(|s| vec![0.0; s.element_count()]).collect();
    let w: Vec<&[f64]> = weights.layers().iter().map(LayerTensor::values).collect();
    let scale = 1.0 / labels.len() as f64;
    let dim = model.input_dim();
    let mut loss = 0.0;
    let mut correct = 0;

    match &model.architecture {
        Architecture::Mlp { .. } => {
            let n_layers = w.len() / 2;
            for (x, &label) in inputs.chunks_exact(dim).zip(labels) {
                // acts[i] is the input to dense layer i; pre-activations kept for the ReLU gate.
                let mut acts: Vec<Vec<f64>> = vec![x.to_vec()];
                for i in 0..n_layers {
                    let rows = model.layer_specs[2 * i].shape()[0];
                    let mut z = vec![0.0; rows];
                    affine(w[2 * i], w[2 * i + 1], acts.last().unwrap(), &mut z);
                    if i + 1 < n_layers {
                        z.iter_mut().for_each(|v| *v = v.max(0.0));
                    }
                    acts.push(z);
                }
                let logits = acts.pop().unwrap();
                let mut dz = vec![0.0; logits.len()];
                let (l, ok) = softmax_xent(&logits, label, scale, &mut dz);
                loss += l;
                correct += usize::from(ok);

                for i in (0..n_layers).rev() {
                    let a = &acts[i];
                    let (gw, rest) = grads[2 * i..].split_at_mut(1);
                    let mut da = (i > 0).then(|| vec![0.0; a.len()]);
                    affine_backward(w[2 * i], a, &dz, &mut gw[0], &mut rest[0], da.as_deref_mut());
                    if let Some(mut da) = da {
                        // a = relu(z) > 0 exactly where z > 0.
                        for (d, &av) in da.iter_mut().zip(a) {
                            if av <= 0.0 {
                                *d = 0.0;
                            }
                        }
                        dz = da;
                    }
                }
            }
        }
        Architecture::TinyCnn { filters, side, classes } => {
            let (f_n, side, classes) = (*filters, *side, *classes);
            let k = CONV_KERNEL;
            let out = side - k + 1;
            let pooled = out / 2;
            let feat = f_n * pooled * pooled;
            let mut z = vec![0.0; f_n * out * out];
            let mut p = vec![0.0; feat];
            let mut logits = vec![0.0; classes];
            let mut dlogits = vec![0.0; classes];
            let mut dp = vec![0.0; feat];

            for (x, &label) in inputs.chunks_exact(dim).zip(labels) {
                for f in 0..f_n {
                    let kern = &w[0][f * k * k..(f + 1) * k * k];
                    for i in 0..out {
                        for j in 0..out {
                            let mut s = w[1][f];
                            for ki in 0..k {
                                for kj in 0..k {
                                    s += kern[ki * k + kj] * x[(i + ki) * side + j + kj];
                                }
                            }
                            z[(f * out + i) * out + j] = s;
                        }
                    }
                    for pi in 0..pooled {
                        for pj in 0..pooled {
                            let mut s = 0.0;
                            for di in 0..2 {
                                for dj in 0..2 {
                                    s += z[(f * out + 2 * pi + di) * out + 2 * pj + dj].max(0.0);
                                }
                            }
                            p[(f * pooled + pi) * pooled + pj] = s / 4.0;
                        }
                    }
                }
                affine(w[2], w[3], &p, &mut logits);
                let (l, ok) = softmax_xent(&logits, label, scale, &mut dlogits);
                loss += l;
                correct += usize::from(ok);

                let (head, tail) = grads.split_at_mut(3);
                affine_backward(w[2], &p, &dlogits, &mut head[2], &mut tail[0], Some(&mut dp));
                let (gconv, gbias) = head.split_at_mut(1);
                for f in 0..f_n {
                    for pi in 0..pooled {
                        for pj in 0..pooled {
                            let d = dp[(f * pooled + pi) * pooled + pj] / 4.0;
                            for di in 0..2 {
                                for dj in 0..2 {
                                    let (i, j) = (2 * pi + di, 2 * pj + dj);
                                    if z[(f * out + i) * out + j] <= 0.0 {
                                        continue;
                                    }
                                    gbias[0][f] += d;
                                    for ki in 0..k {
                                        for kj in 0..k {
                                            gconv[0][f * k * k + ki * k + kj] += d * x[(i + ki) * side + j + kj];
                                        }
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
    }

    let grad = ModelGradient::new(
        model
            .layer_specs
            .iter()
            .zip(grads)
            .map(|(s, g)| LayerTensor::new(s.clone(), g))
            .collect::<Result<_>>()?,
    );
    Ok(BatchResult {
        loss: loss * scale,
        correct,
        grad,
    })
}

/// Mean loss and accuracy on a dataset, without gradients.
pub fn evaluate(model: &ModelSpec, weights: &ModelWeights, data: &DatasetShard) -> Result<(f64, f64)> {
    let r = forward_backward(model, weights, &data.inputs, &data.labels)?;
    Ok((r.loss, r.correct as f64 / data.len() as f64))
}
