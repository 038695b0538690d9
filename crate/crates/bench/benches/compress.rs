use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};
use nsgc_core::baselines::topk_sparsify;
use nsgc_core::grad::{LayerSpec, LayerTensor, PatchPartition};
use nsgc_core::nsi::{sparsify_layer, NsiConfig};
use nsgc_core::{compute_schedule, ModelGradient};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn model(rows: usize, cols: usize) -> ModelGradient {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let specs = [
        LayerSpec::conv(0, 64, 32, 3, 3, 3).unwrap(),
        LayerSpec::bias(1, 64, 3).unwrap(),
        LayerSpec::dense(2, rows, cols, 3).unwrap(),
        LayerSpec::bias(3, rows, 3).unwrap(),
    ];
    ModelGradient::new(
        specs
            .iter()
            .map(|s| {
                LayerTensor::new(
                    s.clone(),
                    (0..s.element_count()).map(|_| rng.gen_range(-1.0..1.0)).collect(),
                )
                .unwrap()
            })
            .collect(),
    )
}

fn bench_nsi(c: &mut Criterion) {
    let mut group = c.benchmark_group("sparsify_layer");
    for side in [64, 256, 512] {
        let spec = LayerSpec::dense(0, side, side, 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let layer = LayerTensor::new(
            spec.clone(),
            (0..side * side).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        )
        .unwrap();
        let part = PatchPartition::build(&spec);
        let cfg = NsiConfig::default();
        group.bench_with_input(BenchmarkId::from_parameter(side), &side, |b, _| {
            b.iter(|| sparsify_layer(black_box(&layer), &part, &cfg, 0.001).unwrap())
        });
    }
    group.finish();
}

fn bench_schedule(c: &mut Criterion) {
    let w = model(512, 1024);
    c.bench_function("compute_schedule", |b| {
        b.iter(|| compute_schedule(black_box(&w), 0.001, 0).unwrap())
    });
}

fn bench_topk(c: &mut Criterion) {
    let g = model(512, 1024);
    c.bench_function("topk_sparsify", |b| {
        b.iter(|| topk_sparsify(black_box(&g), 0.001).unwrap())
    });
}

criterion_group!(benches, bench_nsi, bench_schedule, bench_topk);
criterion_main!(benches);
