//! Little-endian wire format used by the communication meter.
//!
//! Sparse layer: `u32 layer_id`, `u32 kept_count`, then per kept patch
//! `u32 patch_index` followed by the patch's values as `f32`.
//! Dense layer: `u32 layer_id`, `u32 value_count`, then every value as `f32`.

use super::{KeptPatch, ModelGradient, ModelLayout, SparseLayerGradient, SparseModelGradient};
use crate::error::{Error, Result};

/// Per-layer header: layer id plus a count, 4 bytes each.
pub const LAYER_HEADER_BYTES: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EncodingConfig {
    pub value_bytes: usize,
    pub index_bytes: usize,
}

impl Default for EncodingConfig {
    fn default() -> Self {
        Self {
            value_bytes: 4,
            index_bytes: 4,
        }
    }
}

pub fn wire_size_bytes(sparse: &SparseModelGradient, encoding: EncodingConfig) -> usize {
    sparse
        .layers
        .iter()
        .map(|layer| {
            LAYER_HEADER_BYTES
                + layer
                    .kept
                    .iter()
                    .map(|p| encoding.index_bytes + p.values.len() * encoding.value_bytes)
                    .sum::<usize>()
        })
        .sum()
}

/// Size of a dense gradient on the wire (headers plus raw values).
pub fn dense_wire_size_bytes(grad: &ModelGradient, encoding: EncodingConfig) -> usize {
    grad.layers()
        .iter()
        .map(|l| LAYER_HEADER_BYTES + l.values().len() * encoding.value_bytes)
        .sum()
}

/// Raw value bytes of a dense gradient, without headers. This is the
/// baseline every compression ratio is measured against.
pub fn dense_value_bytes(element_count: usize, encoding: EncodingConfig) -> usize {
    element_count * encoding.value_bytes
}

pub fn encode_sparse(sparse: &SparseModelGradient) -> Vec<u8> {
    let mut out = Vec::with_capacity(wire_size_bytes(sparse, EncodingConfig::default()));
    for layer in &sparse.layers {
        put_u32(&mut out, layer.layer_id);
        put_u32(&mut out, layer.kept.len());
        for patch in &layer.kept {
            put_u32(&mut out, patch.patch_index);
            for &v in &patch.values {
                out.extend_from_slice(&(v as f32).to_le_bytes());
            }
        }
    }
    out
}

/// Inverse of [`encode_sparse`]. Patch lengths come from `layout`; values
/// come back rounded through `f32`.
pub fn decode_sparse(bytes: &[u8], layout: &ModelLayout, iteration: usize) -> Result<SparseModelGradient> {
    let mut reader = Reader { bytes, pos: 0 };
    let mut layers = Vec::with_capacity(layout.len());
    for part in layout.partitions() {
        let layer_id = reader.u32()? as usize;
        if layer_id != part.spec().layer_id() {
            return Err(Error::Decode(format!(
                "expected layer {}, found {layer_id}",
                part.spec().layer_id()
            )));
        }
        let kept_count = reader.u32()? as usize;
        let mut kept = Vec::with_capacity(kept_count.min(part.num_patches()));
        for _ in 0..kept_count {
            let patch_index = reader.u32()? as usize;
            part.check_index(patch_index)?;
            let values = (0..part.patch_len(patch_index))
                .map(|_| reader.f32().map(f64::from))
                .collect::<Result<_>>()?;
            kept.push(KeptPatch { patch_index, values });
        }
        let layer = SparseLayerGradient { layer_id, kept };
        layer.validate(part)?;
        layers.push(layer);
    }
    if reader.pos != bytes.len() {
        return Err(Error::Decode(format!("{} trailing bytes", bytes.len() - reader.pos)));
    }
    Ok(SparseModelGradient { layers, iteration })
}

pub fn encode_dense(grad: &ModelGradient) -> Vec<u8> {
    let mut out = Vec::with_capacity(dense_wire_size_bytes(grad, EncodingConfig::default()));
    for layer in grad.layers() {
        put_u32(&mut out, layer.spec().layer_id());
        put_u32(&mut out, layer.values().len());
        for &v in layer.values() {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    out
}

pub(crate) fn put_u32(out: &mut Vec<u8>, v: usize) {
    let v = u32::try_from(v).expect("wire field exceeds u32");
    out.extend_from_slice(&v.to_le_bytes());
}

pub(crate) struct Reader<'a> {
    pub bytes: &'a [u8],
    pub pos: usize,
}

impl Reader<'_> {
    pub fn take(&mut self, n: usize) -> Result<&[u8]> {
        let end = self.pos + n;
        if end > self.bytes.len() {
            return Err(Error::Decode(format!("truncated at byte {}", self.pos)));
        }
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    pub fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub fn f32(&mut self) -> Result<f32> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grad::{LayerSpec, PatchPartition};
    use proptest::prelude::*;

    fn specs3() -> Vec<LayerSpec> {
        vec![
            LayerSpec::conv(0, 2, 1, 3, 3, 3).unwrap(),
            LayerSpec::dense(1, 4, 5, 3).unwrap(),
            LayerSpec::bias(2, 4, 3).unwrap(),
        ]
    }

    #[test]
    fn header_floor() {
        let layout = ModelLayout::new(&specs3());
        let empty = SparseModelGradient::empty(&layout, 0);
        assert_eq!(wire_size_bytes(&empty, EncodingConfig::default()), 24);
        assert_eq!(encode_sparse(&empty).len(), 24);
    }

    #[test]
    fn one_kernel_patch() {
        let spec = LayerSpec::conv(0, 1, 1, 3, 3, 3).unwrap();
        let part = PatchPartition::build(&spec);
        let values = [0.5; 9];
        let sparse = SparseModelGradient {
            layers: vec![SparseLayerGradient::gather(&values, &part, &[0])],
            iteration: 0,
        };
        assert_eq!(wire_size_bytes(&sparse, EncodingConfig::default()), 48);
        // Full density costs more than the 36 raw value bytes.
        assert!(48 > dense_value_bytes(9, EncodingConfig::default()));
    }

    #[test]
    fn encoding_config_changes_size() {
        let spec = LayerSpec::conv(0, 1, 1, 3, 3, 3).unwrap();
        let part = PatchPartition::build(&spec);
        let sparse = SparseModelGradient {
            layers: vec![SparseLayerGradient::gather(&[1.0; 9], &part, &[0])],
            iteration: 0,
        };
        let enc = EncodingConfig {
            value_bytes: 2,
            index_bytes: 8,
        };
        assert_eq!(wire_size_bytes(&sparse, enc), 8 + 8 + 18);
    }

    #[test]
    fn layout_of_bytes() {
        let spec = LayerSpec::dense(7, 1, 2, 1).unwrap();
        let part = PatchPartition::build(&spec);
        let sparse = SparseModelGradient {
            layers: vec![SparseLayerGradient::gather(&[0.0, 1.5], &part, &[1])],
            iteration: 0,
        };
        let bytes = encode_sparse(&sparse);
        let mut expected = Vec::new();
        expected.extend_from_slice(&7u32.to_le_bytes());
        expected.extend_from_slice(&1u32.to_le_bytes());
        expected.extend_from_slice(&1u32.to_le_bytes());
        expected.extend_from_slice(&1.5f32.to_le_bytes());
        assert_eq!(bytes, expected);
    }

    #[test]
    fn decode_rejects_truncation() {
        let layout = ModelLayout::new(&specs3());
        let bytes = encode_sparse(&SparseModelGradient::empty(&layout, 0));
        assert!(decode_sparse(&bytes[..20], &layout, 0).is_err());
    }

    proptest! {
        #[test]
        fn encode_decode_and_size_agree(
            seed_vals in proptest::collection::vec(-100.0f32..100.0, 20 + 18 + 4),
            mask in proptest::collection::vec(any::<bool>(), 2 + 4 + 1),
        ) {
            let specs = specs3();
            let layout = ModelLayout::new(&specs);
            let mut offset = 0;
            let mut m = mask.iter();
            let layers = layout.partitions().iter().map(|part| {
                let n = part.element_count();
                let vals: Vec<f64> = seed_vals[offset..offset + n].iter().map(|&v| f64::from(v)).collect();
                offset += n;
                let picks: Vec<usize> = (0..part.num_patches()).filter(|_| *m.next().unwrap()).collect();
                SparseLayerGradient::gather(&vals, part, &picks)
            }).collect();
            let sparse = SparseModelGradient { layers, iteration: 3 };
            let bytes = encode_sparse(&sparse);
            prop_assert_eq!(bytes.len(), wire_size_bytes(&sparse, EncodingConfig::default()));
            let back = decode_sparse(&bytes, &layout, 3).unwrap();
            prop_assert_eq!(back, sparse);
        }

        #[test]
        fn adding_a_patch_grows_wire_size(extra in 0usize..4, base in proptest::collection::btree_set(0usize..4, 0..4)) {
            prop_assume!(!base.contains(&extra));
            let spec = LayerSpec::dense(0, 4, 5, 3).unwrap();
            let part = PatchPartition::build(&spec);
            let vals = vec![1.0; 20];
            let before: Vec<usize> = base.iter().copied().collect();
            let mut after = before.clone();
            after.push(extra);
            after.sort_unstable();
            let size = |idx: &[usize]| wire_size_bytes(
                &SparseModelGradient { layers: vec![SparseLayerGradient::gather(&vals, &part, idx)], iteration: 0 },
                EncodingConfig::default(),
            );
            prop_assert!(size(&after) > size(&before));
        }
    }
}
