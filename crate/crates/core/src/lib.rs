//! Neighborhood-statistics gradient compression for data-parallel SGD.
//!
//! The crate provides the compressor itself ([`nsi`]) with its layer-wise
//! dynamic keep densities ([`ratio`]) and momentum-corrected accumulation
//! ([`accumulator`]); reference compressors ([`baselines`]); small models
//! with explicit backpropagation ([`models`]); a deterministic multi-node
//! training simulator with byte-exact communication accounting ([`sim`]);
//! and an experiment runner ([`experiment`]).

pub mod accumulator;
pub mod baselines;
pub mod error;
pub mod experiment;
pub mod grad;
pub mod models;
pub mod nsi;
pub mod ratio;
pub mod seeds;
pub mod select;
pub mod sim;

pub use accumulator::AccumulatorState;
pub use baselines::CompressorKind;
pub use error::{Error, Result};
pub use grad::{
    densify, wire_size_bytes, EncodingConfig, LayerGradient, LayerKind, LayerSpec, LayerTensor, ModelGradient,
    ModelLayout, ModelWeights, PatchPartition, SparseLayerGradient, SparseModelGradient,
};
pub use nsi::{NsiCompressor, NsiConfig};
pub use ratio::{compute_schedule, should_recompute, RatioSchedule, RecomputePolicy};
