//! Synthetic classification data: 2-D point clouds or small rasterized images.

use crate::error::{Error, Result};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Generator {
    GaussianBlobs,
    ConcentricRings,
}

impl Generator {
    pub fn as_str(self) -> &'static str {
        match self {
            Generator::GaussianBlobs => "gaussian_blobs",
            Generator::ConcentricRings => "concentric_rings",
        }
    }
}

impl std::str::FromStr for Generator {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "gaussian_blobs" => Ok(Generator::GaussianBlobs),
            "concentric_rings" => Ok(Generator::ConcentricRings),
            _ => Err(format!(
                "unknown generator `{s}`, expected gaussian_blobs or concentric_rings"
            )),
        }
    }
}

/// How samples are laid out as features.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FeatureLayout {
    /// A 2-D point.
    Points,
    /// A single-channel `side × side` raster.
    Image { side: usize },
}

impl FeatureLayout {
    pub fn dim(self) -> usize {
        match self {
            FeatureLayout::Points => 2,
            FeatureLayout::Image { side } => side * side,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSpec {
    pub generator: Generator,
    pub layout: FeatureLayout,
    pub seed: u64,
    pub size: usize,
    pub num_classes: usize,
}

/// Standardized features plus labels. `inputs` is row-major, `dim` values per sample.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetShard {
    pub spec: DatasetSpec,
    pub dim: usize,
    pub inputs: Vec<f64>,
    pub labels: Vec<usize>,
}

/// Distance between adjacent blob centers, in noise standard deviations.
const BLOB_SEPARATION: f64 = 6.0;
const RING_BASE_RADIUS: f64 = 2.0;
const RING_NOISE: f64 = 0.15;

// Raster parameters, in pixels.
const IMAGE_RING_WIDTH: f64 = 0.6;
const IMAGE_RADIUS_JITTER: f64 = 0.6;
const IMAGE_CENTER_JITTER: f64 = 1.5;
const IMAGE_PIXEL_NOISE: f64 = 0.8;

/// 2-D point dataset.
pub fn make_dataset(generator: Generator, seed: u64, size: usize, num_classes: usize) -> Result<DatasetShard> {
    make_dataset_with(DatasetSpec {
        generator,
        layout: FeatureLayout::Points,
        seed,
        size,
        num_classes,
    })
}

pub fn make_dataset_with(spec: DatasetSpec) -> Result<DatasetShard> {
    if spec.num_classes < 2 || spec.size < spec.num_classes {
        return Err(Error::InvalidArgument(format!(
            "need size >= classes >= 2, got size {} classes {}",
            spec.size, spec.num_classes
        )));
    }
    if let FeatureLayout::Image { side } = spec.layout {
        if side < 6 {
            return Err(Error::InvalidArgument(format!("image side {side} too small")));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let dim = spec.layout.dim();

    let mut labels: Vec<usize> = (0..spec.size).map(|i| i % spec.num_classes).collect();
    labels.shuffle(&mut rng);

    let mut inputs = Vec::with_capacity(spec.size * dim);
    for &label in &labels {
        match spec.layout {
            FeatureLayout::Points => sample_point(&spec, label, &mut rng, &mut inputs),
            FeatureLayout::Image { side } => sample_image(&spec, side, label, &mut rng, &mut inputs),
        }
    }
    standardize(&mut inputs, dim);

    Ok(DatasetShard {
        spec,
        dim,
        inputs,
        labels,
    })
}

fn sample_point(spec: &DatasetSpec, label: usize, rng: &mut ChaCha8Rng, out: &mut Vec<f64>) {
    match spec.generator {
        Generator::GaussianBlobs => {
            let k = spec.num_classes as f64;
            // Adjacent centers on a circle sit BLOB_SEPARATION apart.
            let radius = BLOB_SEPARATION / 2.0 / (PI / k).sin();
            let angle = 2.0 * PI * label as f64 / k;
            out.push(radius * angle.cos() + standard_normal(rng));
            out.push(radius * angle.sin() + standard_normal(rng));
        }
        Generator::ConcentricRings => {
            let r = RING_BASE_RADIUS + label as f64 + RING_NOISE * standard_normal(rng);
            let angle = rng.gen_range(0.0..2.0 * PI);
            out.push(r * angle.cos());
            out.push(r * angle.sin());
        }
    }
}

fn sample_image(spec: &DatasetSpec, side: usize, label: usize, rng: &mut ChaCha8Rng, out: &mut Vec<f64>) {
    let mid = (side as f64 - 1.0) / 2.0;
    let cx = mid + rng.gen_range(-IMAGE_CENTER_JITTER..IMAGE_CENTER_JITTER);
    let cy = mid + rng.gen_range(-IMAGE_CENTER_JITTER..IMAGE_CENTER_JITTER);
    let k = spec.num_classes as f64;
    let (bx, by, radius) = match spec.generator {
        Generator::ConcentricRings => {
            // Radii spread between 1.5 px and just inside the border.
            let max_r = mid - IMAGE_CENTER_JITTER - 0.5;
            let r = 1.5 + (max_r - 1.5) * label as f64 / (k - 1.0);
            (cx, cy, r + IMAGE_RADIUS_JITTER * standard_normal(rng))
        }
        Generator::GaussianBlobs => {
            let angle = 2.0 * PI * label as f64 / k;
            let orbit = side as f64 / 4.0;
            (cx + orbit * angle.cos(), cy + orbit * angle.sin(), 0.0)
        }
    };
    for y in 0..side {
        for x in 0..side {
            let d = ((x as f64 - bx).powi(2) + (y as f64 - by).powi(2)).sqrt();
            let signal = (-(d - radius).powi(2) / (2.0 * IMAGE_RING_WIDTH.powi(2))).exp();
            out.push(signal + IMAGE_PIXEL_NOISE * standard_normal(rng));
        }
    }
}

/// Zero mean, unit variance per feature; constant features are centered only.
fn standardize(inputs: &mut [f64], dim: usize) {
    let n = (inputs.len() / dim) as f64;
    for j in 0..dim {
        let mean = inputs.iter().skip(j).step_by(dim).sum::<f64>() / n;
        let var = inputs
            .iter()
            .skip(j)
            .step_by(dim)
            .map(|v| (v - mean).powi(2))
            .sum::<f64>()
            / n;
        let scale = if var > 0.0 { 1.0 / var.sqrt() } else { 1.0 };
        for v in inputs.iter_mut().skip(j).step_by(dim) {
            *v = (*v - mean) * scale;
        }
    }
}

impl DatasetShard {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn sample(&self, i: usize) -> &[f64] {
        &self.inputs[i * self.dim..(i + 1) * self.dim]
    }

    /// Copies the listed samples, in order, into a new shard.
    pub fn select(&self, indices: &[usize]) -> DatasetShard {
        let mut inputs = Vec::with_capacity(indices.len() * self.dim);
        for &i in indices {
            inputs.extend_from_slice(self.sample(i));
        }
        DatasetShard {
            spec: self.spec.clone(),
            dim: self.dim,
            inputs,
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
        }
    }

    /// Seed-stable train/test split; `test_fraction` of samples go to test.
    pub fn split(&self, test_fraction: f64, seed: u64) -> (DatasetShard, DatasetShard) {
        let mut order: Vec<usize> = (0..self.len()).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let n_test = (self.len() as f64 * test_fraction).round() as usize;
        let (test, train) = order.split_at(n_test);
        (self.select(train), self.select(test))
    }

    /// `n` disjoint contiguous shards; earlier shards get the remainder.
    pub fn shards(&self, n: usize) -> Vec<DatasetShard> {
        let base = self.len() / n;
        let extra = self.len() % n;
        let mut start = 0;
        (0..n)
            .map(|i| {
                let len = base + usize::from(i < extra);
                let idx: Vec<usize> = (start..start + len).collect();
                start += len;
                self.select(&idx)
            })
            .collect()
    }
}

fn standard_normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic() {
        for g in [Generator::GaussianBlobs, Generator::ConcentricRings] {
            let a = make_dataset(g, 7, 101, 3).unwrap();
            let b = make_dataset(g, 7, 101, 3).unwrap();
            assert_eq!(a, b);
            let c = make_dataset(g, 8, 101, 3).unwrap();
            assert_ne!(a.inputs, c.inputs);
        }
    }

    #[test]
    fn balanced_and_standardized() {
        let d = make_dataset_with(DatasetSpec {
            generator: Generator::ConcentricRings,
            layout: FeatureLayout::Image { side: 12 },
            seed: 1,
            size: 301,
            num_classes: 3,
        })
        .unwrap();
        let mut counts = [0usize; 3];
        d.labels.iter().for_each(|&l| counts[l] += 1);
        assert!(counts.iter().max().unwrap() - counts.iter().min().unwrap() <= 1);
        for j in 0..d.dim {
            let col: Vec<f64> = d.inputs.iter().skip(j).step_by(d.dim).copied().collect();
            let mean = col.iter().sum::<f64>() / col.len() as f64;
            let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / col.len() as f64;
            assert!(mean.abs() < 1e-12);
            assert!((var - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn rejects_bad_sizes() {
        assert!(make_dataset(Generator::GaussianBlobs, 0, 1, 2).is_err());
        assert!(make_dataset(Generator::GaussianBlobs, 0, 10, 1).is_err());
    }

    #[test]
    fn split_and_shards_partition_samples() {
        let d = make_dataset(Generator::GaussianBlobs, 3, 103, 2).unwrap();
        let (train, test) = d.split(0.2, 9);
        assert_eq!(test.len(), 21);
        assert_eq!(train.len() + test.len(), 103);
        let shards = train.shards(4);
        assert_eq!(
            shards.iter().map(DatasetShard::len).collect::<Vec<_>>(),
            vec![21, 21, 20, 20]
        );
        let rejoined: Vec<f64> = shards.iter().flat_map(|s| s.inputs.iter().copied()).collect();
        assert_eq!(rejoined, train.inputs);
    }
}
