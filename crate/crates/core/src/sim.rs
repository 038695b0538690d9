//! Deterministic N-node data-parallel SGD with compressed gradient exchange.
//!
//! Every step each node draws a minibatch from its own shard, computes a
//! gradient, compresses it and "sends" it through the [`CommLedger`]. The
//! payloads are then gathered in node order, densified, summed and divided
//! by N, and every replica applies the same update. Node-local work may run
//! on a thread pool; the reduction order is fixed, so results are
//! bit-identical to a sequential run.

use crate::accumulator::AccumulatorState;
use crate::baselines::{
    dgc_sparsify, randomk_sparsify, sign_quantize, topk_sparsify, CompressorKind, QuantizedModelGradient,
};
use crate::error::{Error, Result};
use crate::grad::wire::{dense_value_bytes, dense_wire_size_bytes};
use crate::grad::{
    densify_with, wire_size_bytes, EncodingConfig, ModelGradient, ModelLayout, ModelWeights, SparseModelGradient,
};
use crate::models::{forward_backward, DatasetShard, ModelSpec, OptimizerConfig};
use crate::nsi::{NsiCompressor, NsiConfig};
use crate::ratio::{compute_schedule, should_recompute, RatioSchedule, RecomputePolicy};
use crate::seeds::derive_seed;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

/// Stream tags for [`derive_seed`].
const BATCH_STREAM: u64 = 0x100;
const RANDOMK_STREAM: u64 = 0x200;

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub compressor: CompressorKind,
    pub nodes: usize,
    /// Global keep density `p`.
    pub density: f64,
    pub nsi: NsiConfig,
    /// Per-layer densities from the weight ranking; otherwise every layer uses `density`.
    pub dynamic_ratio: bool,
    pub recompute: RecomputePolicy,
    pub momentum_masking: bool,
    /// Epochs of exponentially ramped density before reaching `density`. 0 disables.
    pub warmup_epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            compressor: CompressorKind::RsDgc,
            nodes: 4,
            density: 0.01,
            nsi: NsiConfig::default(),
            dynamic_ratio: true,
            recompute: RecomputePolicy::default(),
            momentum_masking: false,
            warmup_epochs: 0,
            batch_size: 16,
            seed: 0,
        }
    }
}

impl SimConfig {
    /// Density in force during `epoch`, including warm-up.
    pub fn density_at(&self, epoch: usize) -> f64 {
        if epoch < self.warmup_epochs {
            self.density.max(0.25f64.powi(epoch as i32 + 1))
        } else {
            self.density
        }
    }
}

pub fn batch_seed(seed: u64, node_id: usize) -> u64 {
    derive_seed(seed, BATCH_STREAM + node_id as u64)
}

/// Draws `batch_size` distinct sample indices (or the whole shard if smaller).
pub fn draw_batch(rng: &mut ChaCha8Rng, shard_len: usize, batch_size: usize) -> Vec<usize> {
    rand::seq::index::sample(rng, shard_len, batch_size.min(shard_len)).into_vec()
}

#[derive(Debug, Clone)]
pub struct NodeState {
    pub node_id: usize,
    pub weights: ModelWeights,
    pub accumulator: AccumulatorState,
    pub shard: DatasetShard,
    pub schedule: RatioSchedule,
    /// Momentum buffer of the global update, for methods without a local accumulator.
    velocity: ModelGradient,
    rng: ChaCha8Rng,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CommRecord {
    pub iteration: usize,
    pub node_id: usize,
    pub bytes_sent: usize,
    pub dense_equivalent_bytes: usize,
    pub values_sent: usize,
    pub dense_values: usize,
}

/// Per-node, per-iteration wire traffic with running totals.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CommLedger {
    records: Vec<CommRecord>,
    total_bytes: usize,
    total_dense_bytes: usize,
    total_values: usize,
    total_dense_values: usize,
}

impl CommLedger {
    pub fn record(&mut self, r: CommRecord) {
        self.total_bytes += r.bytes_sent;
        self.total_dense_bytes += r.dense_equivalent_bytes;
        self.total_values += r.values_sent;
        self.total_dense_values += r.dense_values;
        self.records.push(r);
    }

    pub fn records(&self) -> &[CommRecord] {
        &self.records
    }

    pub fn total_bytes(&self) -> usize {
        self.total_bytes
    }

    pub fn total_dense_bytes(&self) -> usize {
        self.total_dense_bytes
    }

    pub fn total_values(&self) -> usize {
        self.total_values
    }

    pub fn total_dense_values(&self) -> usize {
        self.total_dense_values
    }

    /// Dense-equivalent bytes over bytes actually sent.
    pub fn report_ratio(&self) -> Result<f64> {
        if self.records.is_empty() {
            return Err(Error::EmptyLedger);
        }
        Ok(self.total_dense_bytes as f64 / self.total_bytes as f64)
    }

    /// Dense element count over transmitted element count.
    pub fn sparsification_ratio(&self) -> Result<f64> {
        if self.records.is_empty() {
            return Err(Error::EmptyLedger);
        }
        Ok(self.total_dense_values as f64 / self.total_values as f64)
    }
}

pub fn report_ratio(ledger: &CommLedger) -> Result<f64> {
    ledger.report_ratio()
}

/// What one node puts on the wire in one step.
#[derive(Debug, Clone, PartialEq)]
pub enum Payload {
    Dense(ModelGradient),
    Sparse(SparseModelGradient),
    Quantized(QuantizedModelGradient),
}

impl Payload {
    pub fn wire_size_bytes(&self, encoding: EncodingConfig) -> usize {
        match self {
            Payload::Dense(g) => dense_wire_size_bytes(g, encoding),
            Payload::Sparse(s) => wire_size_bytes(s, encoding),
            Payload::Quantized(q) => q.wire_size_bytes(),
        }
    }

    fn values_sent(&self) -> usize {
        match self {
            Payload::Dense(g) => g.element_count(),
            Payload::Sparse(s) => s.kept_elements(),
            Payload::Quantized(q) => q.layers.iter().map(|l| l.bit_count()).sum(),
        }
    }

    fn to_dense(&self, layout: &ModelLayout) -> Result<ModelGradient> {
        match self {
            Payload::Dense(g) => Ok(g.clone()),
            Payload::Sparse(s) => densify_with(s, layout),
            Payload::Quantized(q) => Ok(q.dequantize()),
        }
    }
}

/// Densifies every node's sparse gradient, sums them in node order and
/// divides by the node count.
pub fn sync(sparse_grads: &[SparseModelGradient], layout: &ModelLayout) -> Result<ModelGradient> {
    let dense = sparse_grads
        .iter()
        .map(|s| densify_with(s, layout))
        .collect::<Result<Vec<_>>>()?;
    average(&dense, layout)
}

fn average(grads: &[ModelGradient], layout: &ModelLayout) -> Result<ModelGradient> {
    if grads.is_empty() {
        return Err(Error::InvalidArgument("sync needs at least one node".into()));
    }
    let specs: Vec<_> = layout.partitions().iter().map(|p| p.spec().clone()).collect();
    let mut acc = ModelGradient::zeros(&specs);
    for g in grads {
        acc.check_same_shape(g)?;
        for (a, l) in acc.layers_mut().iter_mut().zip(g.layers()) {
            for (x, &y) in a.values_mut().iter_mut().zip(l.values()) {
                *x += y;
            }
        }
    }
    let n = grads.len() as f64;
    for a in acc.layers_mut() {
        a.values_mut().iter_mut().for_each(|x| *x /= n);
    }
    Ok(acc)
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepReport {
    pub iteration: usize,
    pub epoch: usize,
    /// Mean of the nodes' minibatch losses.
    pub loss: f64,
    pub correct: usize,
    pub samples: usize,
    /// Bytes sent this step, summed over nodes.
    pub bytes_sent: usize,
    pub dense_bytes: usize,
    /// Transmitted elements per layer, summed over nodes.
    pub kept_elements: Vec<usize>,
    /// Transmitted patches (or singleton elements) per layer, summed over nodes.
    pub kept_patches: Vec<usize>,
}

impl StepReport {
    pub fn train_acc(&self) -> f64 {
        self.correct as f64 / self.samples as f64
    }
}

struct LocalOutcome {
    loss: f64,
    correct: usize,
    samples: usize,
    payload: Payload,
}

pub struct Simulator {
    model: ModelSpec,
    optimizer: OptimizerConfig,
    config: SimConfig,
    nodes: Vec<NodeState>,
    ledger: CommLedger,
    nsi: NsiCompressor,
    elementwise: ModelLayout,
    encoding: EncodingConfig,
    iteration: usize,
    schedule_epoch: Option<usize>,
}

impl Simulator {
    /// Splits `train` into `config.nodes` contiguous shards and gives every
    /// node the same initial weights.
    pub fn new(model: ModelSpec, optimizer: OptimizerConfig, config: SimConfig, train: &DatasetShard) -> Result<Self> {
        if config.nodes == 0 {
            return Err(Error::InvalidArgument("need at least one node".into()));
        }
        if config.batch_size == 0 {
            return Err(Error::InvalidArgument("batch size must be >= 1".into()));
        }
        if !(0.0..=1.0).contains(&config.density)
            || (config.compressor == CompressorKind::RsDgc && config.dynamic_ratio && config.density == 0.0)
        {
            return Err(Error::InvalidArgument(format!(
                "density {} out of range",
                config.density
            )));
        }
        if train.len() < config.nodes {
            return Err(Error::InvalidArgument(format!(
                "{} samples for {} nodes",
                train.len(),
                config.nodes
            )));
        }
        if train.dim != model.input_dim() {
            return Err(Error::ShapeMismatch(format!(
                "dataset dim {} vs model input {}",
                train.dim,
                model.input_dim()
            )));
        }
        let specs = model.layer_specs().to_vec();
        let weights = model.init_weights();
        let schedule = RatioSchedule::uniform(&specs, config.density_at(0))?;
        let nodes = train
            .shards(config.nodes)
            .into_iter()
            .enumerate()
            .map(|(node_id, shard)| {
                Ok(NodeState {
                    node_id,
                    weights: weights.clone(),
                    accumulator: AccumulatorState::new(node_id, &specs, optimizer.momentum())?
                        .with_momentum_masking(config.momentum_masking),
                    shard,
                    schedule: schedule.clone(),
                    velocity: ModelGradient::zeros(&specs),
                    rng: ChaCha8Rng::seed_from_u64(batch_seed(config.seed, node_id)),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            nsi: NsiCompressor::new(config.nsi, &specs)?,
            elementwise: ModelLayout::elementwise(&specs),
            encoding: EncodingConfig::default(),
            model,
            optimizer,
            config,
            nodes,
            ledger: CommLedger::default(),
            iteration: 0,
            schedule_epoch: None,
        })
    }

    pub fn model(&self) -> &ModelSpec {
        &self.model
    }

    pub fn config(&self) -> &SimConfig {
        &self.config
    }

    pub fn nodes(&self) -> &[NodeState] {
        &self.nodes
    }

    pub fn ledger(&self) -> &CommLedger {
        &self.ledger
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    /// Replica weights (all nodes hold identical copies).
    pub fn weights(&self) -> &ModelWeights {
        &self.nodes[0].weights
    }

    pub fn schedule(&self) -> &RatioSchedule {
        &self.nodes[0].schedule
    }

    /// Steps per epoch: one pass over the smallest shard.
    pub fn steps_per_epoch(&self) -> usize {
        let smallest = self.nodes.iter().map(|n| n.shard.len()).min().unwrap_or(0);
        smallest.div_ceil(self.config.batch_size).max(1)
    }

    /// Recomputes per-layer densities when the policy (or warm-up) calls for
    /// it. Returns the schedule now in force if it changed.
    pub fn begin_epoch(&mut self, epoch: usize) -> Result<Option<RatioSchedule>> {
        let density = self.config.density_at(epoch);
        let due = self.schedule_epoch.is_none()
            || should_recompute(epoch, self.config.recompute)
            || self.nodes[0].schedule.global_density() != density;
        if !due || self.schedule_epoch == Some(epoch) {
            return Ok(None);
        }
        let dynamic = self.config.dynamic_ratio && self.config.compressor == CompressorKind::RsDgc;
        let specs = self.model.layer_specs().to_vec();
        for node in &mut self.nodes {
            node.schedule = if dynamic {
                compute_schedule(&node.weights, density, epoch)?
            } else {
                RatioSchedule::uniform(&specs, density)?
            };
        }
        let first = &self.nodes[0].schedule;
        if let Some(other) = self.nodes[1..].iter().find(|n| n.schedule != *first) {
            return Err(Error::ReplicaDivergence(format!(
                "node {} computed a different schedule at epoch {epoch}",
                other.node_id
            )));
        }
        self.schedule_epoch = Some(epoch);
        Ok(Some(first.clone()))
    }

    /// One synchronous data-parallel step.
    pub fn train_step(&mut self, epoch: usize) -> Result<StepReport> {
        if self.schedule_epoch.is_none() {
            self.begin_epoch(epoch)?;
        }
        let t = self.iteration;
        let density = self.config.density_at(epoch);
        let (model, config, nsi) = (&self.model, &self.config, &self.nsi);

        let outcomes: Vec<LocalOutcome> = self
            .nodes
            .par_iter_mut()
            .map(|node| local_step(node, model, config, nsi, density, t))
            .collect::<Result<_>>()?;

        // Barrier: account, gather in node order, apply one update everywhere.
        let dense_values = self
            .model
            .layer_specs()
            .iter()
            .map(|s| s.element_count())
            .sum::<usize>();
        let dense_bytes = dense_value_bytes(dense_values, self.encoding);
        let n_layers = self.model.layer_specs().len();
        let mut kept_elements = vec![0; n_layers];
        let mut kept_patches = vec![0; n_layers];
        let mut bytes_sent = 0;
        for (node_id, out) in outcomes.iter().enumerate() {
            let bytes = out.payload.wire_size_bytes(self.encoding);
            bytes_sent += bytes;
            self.ledger.record(CommRecord {
                iteration: t,
                node_id,
                bytes_sent: bytes,
                dense_equivalent_bytes: dense_bytes,
                values_sent: out.payload.values_sent(),
                dense_values,
            });
            match &out.payload {
                Payload::Sparse(s) => {
                    for (i, l) in s.layers.iter().enumerate() {
                        kept_elements[i] += l.kept_elements();
                        kept_patches[i] += l.kept.len();
                    }
                }
                Payload::Dense(_) | Payload::Quantized(_) => {
                    for (i, s) in self.model.layer_specs().iter().enumerate() {
                        kept_elements[i] += s.element_count();
                        kept_patches[i] += s.element_count();
                    }
                }
            }
        }

        let layout = match self.config.compressor {
            CompressorKind::RsDgc => self.nsi.layout(),
            _ => &self.elementwise,
        };
        let dense = outcomes
            .iter()
            .map(|o| o.payload.to_dense(layout))
            .collect::<Result<Vec<_>>>()?;
        let global = average(&dense, layout)?;

        let lr = self.optimizer.lr_at(epoch);
        let m = self.optimizer.momentum();
        let local_momentum = self.config.compressor.uses_accumulator();
        for node in &mut self.nodes {
            apply_update(node, &global, lr, m, local_momentum);
        }
        let reference = &self.nodes[0].weights;
        if let Some(bad) = self.nodes[1..].iter().find(|n| !n.weights.bit_eq(reference)) {
            return Err(Error::ReplicaDivergence(format!(
                "node {} weights differ at step {t}",
                bad.node_id
            )));
        }

        self.iteration += 1;
        let samples: usize = outcomes.iter().map(|o| o.samples).sum();
        Ok(StepReport {
            iteration: t,
            epoch,
            loss: outcomes.iter().map(|o| o.loss).sum::<f64>() / outcomes.len() as f64,
            correct: outcomes.iter().map(|o| o.correct).sum(),
            samples,
            bytes_sent,
            dense_bytes: dense_bytes * outcomes.len(),
            kept_elements,
            kept_patches,
        })
    }
}

fn local_step(
    node: &mut NodeState,
    model: &ModelSpec,
    config: &SimConfig,
    nsi: &NsiCompressor,
    density: f64,
    t: usize,
) -> Result<LocalOutcome> {
    let idx = draw_batch(&mut node.rng, node.shard.len(), config.batch_size);
    let batch = node.shard.select(&idx);
    let result = match forward_backward(model, &node.weights, &batch.inputs, &batch.labels) {
        Ok(r) if r.loss.is_finite() => r,
        Ok(r) => return Err(Error::DivergedLoss { step: t, loss: r.loss }),
        Err(Error::NonFinite { .. }) => {
            return Err(Error::DivergedLoss {
                step: t,
                loss: f64::NAN,
            })
        }
        Err(e) => return Err(e),
    };
    let grad = result.grad;
    let payload = match config.compressor {
        CompressorKind::Dense => Payload::Dense(grad),
        CompressorKind::TopK => Payload::Sparse(topk_sparsify(&grad, density)?),
        CompressorKind::RandomK => {
            let seed = derive_seed(derive_seed(config.seed, RANDOMK_STREAM + node.node_id as u64), t as u64);
            Payload::Sparse(randomk_sparsify(&grad, density, seed)?)
        }
        CompressorKind::Sign1Bit => Payload::Quantized(sign_quantize(&grad)?),
        CompressorKind::Dgc => Payload::Sparse(dgc_sparsify(&mut node.accumulator, &grad, density)?),
        CompressorKind::RsDgc => {
            let residual = node.accumulator.accumulate(&grad)?;
            let sparse = nsi.compress(&residual, &node.schedule, t)?;
            node.accumulator.commit_transmitted(&sparse, nsi.layout())?;
            Payload::Sparse(sparse)
        }
    };
    let payload = match payload {
        Payload::Sparse(mut s) => {
            s.iteration = t;
            Payload::Sparse(s)
        }
        p => p,
    };
    Ok(LocalOutcome {
        loss: result.loss,
        correct: result.correct,
        samples: batch.len(),
        payload,
    })
}

/// `w ← w − lr·g` when momentum already lives in the node accumulators,
/// otherwise `u ← m·u + g`, `w ← w − lr·u`.
fn apply_update(node: &mut NodeState, global: &ModelGradient, lr: f64, m: f64, local_momentum: bool) {
    for ((w, u), g) in node
        .weights
        .layers_mut()
        .iter_mut()
        .zip(node.velocity.layers_mut())
        .zip(global.layers())
    {
        if local_momentum {
            for (w, &g) in w.values_mut().iter_mut().zip(g.values()) {
                *w -= lr * g;
            }
        } else {
            for ((w, u), &g) in w.values_mut().iter_mut().zip(u.values_mut()).zip(g.values()) {
                *u = m * *u + g;
                *w -= lr * *u;
            }
        }
    }
}
