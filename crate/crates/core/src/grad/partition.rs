use super::LayerSpec;
use crate::error::{Error, Result};

/// Disjoint tiling of a layer's 2-D plane into neighborhoods.
///
/// Tiles are numbered row-major over the tile grid; inside a tile, flat
/// indices are listed row-major too. Edge tiles are truncated, never padded.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PatchPartition {
    spec: LayerSpec,
    grid_rows: usize,
    grid_cols: usize,
    offsets: Vec<usize>,
    indices: Vec<usize>,
}

impl PatchPartition {
    pub fn build(spec: &LayerSpec) -> Self {
        let (rows, cols) = spec.plane();
        let (tile_h, tile_w) = spec.tile();
        let grid_rows = rows.div_ceil(tile_h);
        let grid_cols = cols.div_ceil(tile_w);

        let mut offsets = Vec::with_capacity(grid_rows * grid_cols + 1);
        let mut indices = Vec::with_capacity(rows * cols);
        offsets.push(0);
        for tr in 0..grid_rows {
            let r_end = ((tr + 1) * tile_h).min(rows);
            for tc in 0..grid_cols {
                let c_end = ((tc + 1) * tile_w).min(cols);
                for r in tr * tile_h..r_end {
                    indices.extend((tc * tile_w..c_end).map(|c| r * cols + c));
                }
                offsets.push(indices.len());
            }
        }

        Self {
            spec: spec.clone(),
            grid_rows,
            grid_cols,
            offsets,
            indices,
        }
    }

    pub fn spec(&self) -> &LayerSpec {
        &self.spec
    }

    pub fn grid(&self) -> (usize, usize) {
        (self.grid_rows, self.grid_cols)
    }

    pub fn num_patches(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn element_count(&self) -> usize {
        self.indices.len()
    }

    /// Flat indices covered by patch `k`, in patch-local order.
    pub fn patch(&self, k: usize) -> &[usize] {
        &self.indices[self.offsets[k]..self.offsets[k + 1]]
    }

    pub fn patch_len(&self, k: usize) -> usize {
        self.offsets[k + 1] - self.offsets[k]
    }

    pub fn patches(&self) -> impl ExactSizeIterator<Item = &[usize]> + '_ {
        self.offsets.windows(2).map(|w| &self.indices[w[0]..w[1]])
    }

    pub(crate) fn check_index(&self, patch_index: usize) -> Result<()> {
        if patch_index >= self.num_patches() {
            return Err(Error::IndexMismatch {
                layer_id: self.spec.layer_id(),
                patch_index,
                num_patches: self.num_patches(),
            });
        }
        Ok(())
    }
}

/// One partition per model layer, in model order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModelLayout {
    partitions: Vec<PatchPartition>,
}

impl ModelLayout {
    /// Tiles every layer with its own `patch_size`.
    pub fn new(specs: &[LayerSpec]) -> Self {
        Self {
            partitions: specs.iter().map(PatchPartition::build).collect(),
        }
    }

    /// Tiles every layer with a common neighborhood side, ignoring the specs' own.
    pub fn with_patch_size(specs: &[LayerSpec], patch_size: usize) -> Result<Self> {
        let partitions = specs
            .iter()
            .map(|s| s.with_patch_size(patch_size).map(|s| PatchPartition::build(&s)))
            .collect::<Result<_>>()?;
        Ok(Self { partitions })
    }

    /// Singleton patches: one per element.
    pub fn elementwise(specs: &[LayerSpec]) -> Self {
        Self::with_patch_size(specs, 1).expect("patch size 1 is always valid")
    }

    pub fn partitions(&self) -> &[PatchPartition] {
        &self.partitions
    }

    pub fn len(&self) -> usize {
        self.partitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.partitions.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn conv_kernels_are_patches() {
        let spec = LayerSpec::conv(0, 2, 1, 3, 3, 3).unwrap();
        let part = PatchPartition::build(&spec);
        assert_eq!(part.num_patches(), 2);
        assert_eq!(part.patch(0), &[0, 1, 2, 3, 4, 5, 6, 7, 8]);
        assert_eq!(part.patch(1), &[9, 10, 11, 12, 13, 14, 15, 16, 17]);
    }

    #[test]
    fn single_element_dense() {
        let part = PatchPartition::build(&LayerSpec::dense(0, 1, 1, 3).unwrap());
        assert_eq!(part.num_patches(), 1);
        assert_eq!(part.patch(0), &[0]);
    }

    #[test]
    fn dense_4x5_edges() {
        let part = PatchPartition::build(&LayerSpec::dense(0, 4, 5, 3).unwrap());
        assert_eq!(part.num_patches(), 4);
        let lens: Vec<_> = (0..4).map(|k| part.patch_len(k)).collect();
        assert_eq!(lens, vec![9, 6, 3, 2]);
        assert_eq!(part.patch(0), &[0, 1, 2, 5, 6, 7, 10, 11, 12]);
        assert_eq!(part.patch(1), &[3, 4, 8, 9, 13, 14]);
        assert_eq!(part.patch(2), &[15, 16, 17]);
        assert_eq!(part.patch(3), &[18, 19]);
    }

    #[test]
    fn bias_runs() {
        let part = PatchPartition::build(&LayerSpec::bias(0, 20, 3).unwrap());
        assert_eq!(part.num_patches(), 3);
        assert_eq!(part.patch_len(2), 2);
        assert_eq!(part.patch(1), &(9..18).collect::<Vec<_>>()[..]);
    }

    fn arb_spec() -> impl Strategy<Value = LayerSpec> {
        prop_oneof![
            (1usize..5, 1usize..4, 1usize..5, 1usize..5, 1usize..5)
                .prop_map(|(n, c, kh, kw, p)| LayerSpec::conv(0, n, c, kh, kw, p).unwrap()),
            (1usize..20, 1usize..20, 1usize..6).prop_map(|(r, c, p)| LayerSpec::dense(0, r, c, p).unwrap()),
            (1usize..50, 1usize..5).prop_map(|(n, p)| LayerSpec::bias(0, n, p).unwrap()),
        ]
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn partition_covers_exactly_once(spec in arb_spec()) {
            let part = PatchPartition::build(&spec);
            let mut seen = vec![0u32; spec.element_count()];
            for patch in part.patches() {
                prop_assert!(!patch.is_empty());
                for &i in patch {
                    seen[i] += 1;
                }
            }
            prop_assert!(seen.iter().all(|&c| c == 1));
            let (rows, cols) = spec.plane();
            let (th, tw) = spec.tile();
            prop_assert_eq!(part.num_patches(), rows.div_ceil(th) * cols.div_ceil(tw));
        }

        #[test]
        fn conv_patch_is_one_kernel(n in 1usize..6, c in 1usize..4, p in 1usize..5) {
            let spec = LayerSpec::conv(0, n, c, p, p, p).unwrap();
            let part = PatchPartition::build(&spec);
            prop_assert_eq!(part.num_patches(), n * c);
            for (k, patch) in part.patches().enumerate() {
                let expected: Vec<usize> = (k * p * p..(k + 1) * p * p).collect();
                prop_assert_eq!(patch, &expected[..]);
            }
        }
    }
}
