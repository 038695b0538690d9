//! Reference compressors: element-wise Top-k, Random-k, DGC-style
//! accumulate-then-Top-k, and 1-bit sign quantization.
//!
//! The sparsifiers emit singleton patches (a `p = 1` tiling) so every method
//! shares one wire format and one byte meter.

use crate::accumulator::AccumulatorState;
use crate::error::{Error, Result};
use crate::grad::wire::{put_u32, Reader, LAYER_HEADER_BYTES};
use crate::grad::{
    KeptPatch, LayerGradient, LayerSpec, LayerTensor, ModelGradient, ModelLayout, SparseLayerGradient,
    SparseModelGradient,
};
use crate::select::{ceil_count, top_k_indices};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CompressorKind {
    RsDgc,
    TopK,
    RandomK,
    Dgc,
    Sign1Bit,
    Dense,
}

impl CompressorKind {
    pub const ALL: [CompressorKind; 6] = [
        CompressorKind::RsDgc,
        CompressorKind::TopK,
        CompressorKind::RandomK,
        CompressorKind::Dgc,
        CompressorKind::Sign1Bit,
        CompressorKind::Dense,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            CompressorKind::RsDgc => "rs_dgc",
            CompressorKind::TopK => "top_k",
            CompressorKind::RandomK => "random_k",
            CompressorKind::Dgc => "dgc",
            CompressorKind::Sign1Bit => "sign_1bit",
            CompressorKind::Dense => "dense",
        }
    }

    /// Whether the method keeps a per-node momentum/residual accumulator.
    pub fn uses_accumulator(self) -> bool {
        matches!(self, CompressorKind::RsDgc | CompressorKind::Dgc)
    }
}

impl fmt::Display for CompressorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for CompressorKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        CompressorKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| {
                let names: Vec<_> = CompressorKind::ALL.iter().map(|k| k.as_str()).collect();
                format!("unknown compressor `{s}`, expected one of {}", names.join(", "))
            })
    }
}

fn element_keep(len: usize, density: f64) -> Result<usize> {
    if !(0.0..=1.0).contains(&density) {
        return Err(Error::InvalidArgument(format!("density {density} outside [0, 1]")));
    }
    Ok(if density >= 1.0 {
        len
    } else {
        ceil_count(density * len as f64).min(len)
    })
}

fn singletons(layer: &LayerGradient, indices: &[usize]) -> SparseLayerGradient {
    let values = layer.values();
    SparseLayerGradient {
        layer_id: layer.spec().layer_id(),
        kept: indices
            .iter()
            .map(|&i| KeptPatch {
                patch_index: i,
                values: vec![values[i]],
            })
            .collect(),
    }
}

fn topk_layer(layer: &LayerGradient, density: f64) -> Result<SparseLayerGradient> {
    layer.check_finite()?;
    let k = element_keep(layer.values().len(), density)?;
    let mags: Vec<f64> = layer.values().iter().map(|v| v.abs()).collect();
    Ok(singletons(layer, &top_k_indices(&mags, k)))
}

/// Keeps the `ceil(density · G_l)` largest-magnitude elements of each layer.
pub fn topk_sparsify(grad: &ModelGradient, density: f64) -> Result<SparseModelGradient> {
    let layers = grad
        .layers()
        .iter()
        .map(|l| topk_layer(l, density))
        .collect::<Result<_>>()?;
    Ok(SparseModelGradient { layers, iteration: 0 })
}

/// Keeps `ceil(density · G_l)` uniformly chosen elements of each layer.
pub fn randomk_sparsify(grad: &ModelGradient, density: f64, rng_seed: u64) -> Result<SparseModelGradient> {
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let layers = grad
        .layers()
        .iter()
        .map(|l| {
            let n = l.values().len();
            let k = element_keep(n, density)?;
            let mut picked = rand::seq::index::sample(&mut rng, n, k).into_vec();
            picked.sort_unstable();
            Ok(singletons(l, &picked))
        })
        .collect::<Result<_>>()?;
    Ok(SparseModelGradient { layers, iteration: 0 })
}

/// Momentum-corrected accumulation followed by element-wise Top-k on the
/// residual; transmitted coordinates are committed back into `state`.
pub fn dgc_sparsify(state: &mut AccumulatorState, grad: &ModelGradient, density: f64) -> Result<SparseModelGradient> {
    let residual = state.accumulate(grad)?;
    let sparse = topk_sparsify(&residual, density)?;
    state.commit_transmitted(&sparse, &ModelLayout::elementwise(&grad.specs()))?;
    Ok(sparse)
}

/// One layer as a scale plus packed sign bits (bit set means negative).
#[derive(Debug, Clone, PartialEq)]
pub struct QuantizedLayer {
    pub spec: LayerSpec,
    pub scale: f64,
    pub bits: Vec<u8>,
}

impl QuantizedLayer {
    pub fn bit_count(&self) -> usize {
        self.spec.element_count()
    }

    pub fn is_negative(&self, i: usize) -> bool {
        self.bits[i / 8] >> (i % 8) & 1 == 1
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuantizedModelGradient {
    pub layers: Vec<QuantizedLayer>,
}

/// 1-bit quantization: scale `mean(|g|)`, negatives to −1, everything else to +1.
pub fn sign_quantize(grad: &ModelGradient) -> Result<QuantizedModelGradient> {
    grad.check_finite()?;
    let layers = grad
        .layers()
        .iter()
        .map(|l| {
            let v = l.values();
            let scale = v.iter().map(|x| x.abs()).sum::<f64>() / v.len() as f64;
            let mut bits = vec![0u8; v.len().div_ceil(8)];
            for (i, &x) in v.iter().enumerate() {
                if x < 0.0 {
                    bits[i / 8] |= 1 << (i % 8);
                }
            }
            QuantizedLayer {
                spec: l.spec().clone(),
                scale,
                bits,
            }
        })
        .collect();
    Ok(QuantizedModelGradient { layers })
}

impl QuantizedModelGradient {
    pub fn dequantize(&self) -> ModelGradient {
        ModelGradient::new(
            self.layers
                .iter()
                .map(|q| {
                    let values = (0..q.bit_count())
                        .map(|i| if q.is_negative(i) { -q.scale } else { q.scale })
                        .collect();
                    LayerTensor::new(q.spec.clone(), values).expect("finite scale")
                })
                .collect(),
        )
    }

    /// Header (layer id and bit count) plus the `f32` scale plus packed bits.
    pub fn wire_size_bytes(&self) -> usize {
        self.layers
            .iter()
            .map(|q| LAYER_HEADER_BYTES + 4 + q.bit_count().div_ceil(8))
            .sum()
    }

    /// Per layer: `u32 layer_id`, `f32 scale`, `u32 bit_count`, packed bits.
    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.wire_size_bytes());
        for q in &self.layers {
            put_u32(&mut out, q.spec.layer_id());
            out.extend_from_slice(&(q.scale as f32).to_le_bytes());
            put_u32(&mut out, q.bit_count());
            out.extend_from_slice(&q.bits);
        }
        out
    }

    /// Inverse of [`encode`](Self::encode); the scale comes back rounded through `f32`.
    pub fn decode(bytes: &[u8], specs: &[LayerSpec]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        let mut layers = Vec::with_capacity(specs.len());
        for spec in specs {
            let id = r.u32()? as usize;
            if id != spec.layer_id() {
                return Err(Error::Decode(format!("expected layer {}, found {id}", spec.layer_id())));
            }
            let scale = f64::from(r.f32()?);
            let count = r.u32()? as usize;
            if count != spec.element_count() {
                return Err(Error::Decode(format!(
                    "layer {id}: {count} bits for {} elements",
                    spec.element_count()
                )));
            }
            let bits = r.take(count.div_ceil(8))?.to_vec();
            layers.push(QuantizedLayer {
                spec: spec.clone(),
                scale,
                bits,
            });
        }
        if r.pos != bytes.len() {
            return Err(Error::Decode(format!("{} trailing bytes", bytes.len() - r.pos)));
        }
        Ok(Self { layers })
    }
}
