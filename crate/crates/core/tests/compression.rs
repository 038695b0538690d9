use nsgc_core::baselines::{dgc_sparsify, topk_sparsify};
use nsgc_core::grad::{LayerSpec, LayerTensor, PatchPartition};
use nsgc_core::nsi::{score_patches, sparsify_layer, NsiCompressor, NsiConfig};
use nsgc_core::sim::{report_ratio, CommLedger, CommRecord};
use nsgc_core::{wire_size_bytes, AccumulatorState, EncodingConfig, Error, ModelGradient, RatioSchedule};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn specs() -> Vec<LayerSpec> {
    vec![
        LayerSpec::conv(0, 4, 2, 3, 3, 3).unwrap(),
        LayerSpec::bias(1, 4, 3).unwrap(),
        LayerSpec::dense(2, 5, 11, 3).unwrap(),
        LayerSpec::bias(3, 5, 3).unwrap(),
    ]
}

fn random_grad(rng: &mut ChaCha8Rng, specs: &[LayerSpec]) -> ModelGradient {
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

#[test]
fn alpha_one_ranks_by_mean_magnitude() {
    let spec = LayerSpec::dense(0, 3, 6, 3).unwrap();
    // patch 0 has larger spread, patch 1 larger magnitude
    let mut v = vec![0.0; 18];
    let part = PatchPartition::build(&spec);
    for (j, &i) in part.patch(0).iter().enumerate() {
        v[i] = if j % 2 == 0 { 1.0 } else { -1.0 };
    }
    for &i in part.patch(1) {
        v[i] = 1.5;
    }
    let layer = LayerTensor::new(spec, v).unwrap();
    let pick = |alpha| {
        let got = sparsify_layer(&layer, &part, &NsiConfig::new(alpha, 3).unwrap(), 0.5).unwrap();
        got.patch_indices().collect::<Vec<_>>()
    };
    assert_eq!(pick(1.0), vec![1]);
    assert_eq!(pick(0.0), vec![0]);
}

#[test]
fn constant_patch_has_zero_std() {
    let spec = LayerSpec::dense(0, 3, 3, 3).unwrap();
    let layer = LayerTensor::new(spec.clone(), vec![-2.0; 9]).unwrap();
    let s = score_patches(&layer, &PatchPartition::build(&spec), &NsiConfig::new(0.5, 3).unwrap()).unwrap();
    assert_eq!(s[0].std, 0.0);
    assert_eq!(s[0].mean_abs, 2.0);
    assert_eq!(s[0].nsi, 1.0);
}

#[test]
fn rs_dgc_with_unit_patches_matches_dgc() {
    let specs: Vec<LayerSpec> = specs().iter().map(|s| s.with_patch_size(1).unwrap()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let comp = NsiCompressor::new(NsiConfig::new(1.0, 1).unwrap(), &specs).unwrap();
    for density in [0.01, 0.1, 0.3, 1.0] {
        let schedule = RatioSchedule::uniform(&specs, density).unwrap();
        let mut a = AccumulatorState::new(0, &specs, 0.9).unwrap();
        let mut b = a.clone();
        for t in 0..20 {
            let g = random_grad(&mut rng, &specs);
            let resid = a.accumulate(&g).unwrap();
            let ours = comp.compress(&resid, &schedule, t).unwrap();
            a.commit_transmitted(&ours, comp.layout()).unwrap();
            let theirs = dgc_sparsify(&mut b, &g, density).unwrap();
            assert_eq!(ours.layers, theirs.layers, "density {density} step {t}");
            assert_eq!(a, b);
        }
    }
}

#[test]
fn patch_payload_beats_singletons_on_the_wire() {
    let specs = specs();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let g = random_grad(&mut rng, &specs);
    let comp = NsiCompressor::new(NsiConfig::default(), &specs).unwrap();
    let schedule = RatioSchedule::uniform(&specs, 0.2).unwrap();
    let ours = comp.compress(&g, &schedule, 0).unwrap();
    let topk = topk_sparsify(&g, 0.2).unwrap();
    let enc = EncodingConfig::default();
    let per_value = |s: &nsgc_core::SparseModelGradient| wire_size_bytes(s, enc) as f64 / s.kept_elements() as f64;
    assert!(per_value(&ours) < per_value(&topk));
}

#[test]
fn report_ratio_examples() {
    let mut l = CommLedger::default();
    assert!(matches!(report_ratio(&l), Err(Error::EmptyLedger)));
    for node_id in 0..4 {
        l.record(CommRecord {
            iteration: 0,
            node_id,
            bytes_sent: 48,
            dense_equivalent_bytes: 4800,
            values_sent: 9,
            dense_values: 1200,
        });
    }
    assert_eq!(report_ratio(&l).unwrap(), 100.0);
}

proptest! {
    #[test]
    fn selection_is_scale_covariant(seed in any::<u64>(), scale in 0.01f64..100.0, alpha in 0.0f64..=1.0, density in 0.01f64..=1.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let spec = LayerSpec::dense(0, 9, 12, 3).unwrap();
        let v: Vec<f64> = (0..108).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let part = PatchPartition::build(&spec);
        let cfg = NsiConfig::new(alpha, 3).unwrap();
        let a = sparsify_layer(&LayerTensor::new(spec.clone(), v.clone()).unwrap(), &part, &cfg, density).unwrap();
        let scaled: Vec<f64> = v.iter().map(|x| x * scale).collect();
        let b = sparsify_layer(&LayerTensor::new(spec, scaled).unwrap(), &part, &cfg, density).unwrap();
        prop_assert_eq!(a.patch_indices().collect::<Vec<_>>(), b.patch_indices().collect::<Vec<_>>());
    }

    #[test]
    fn kept_patches_never_exceed_partition(seed in any::<u64>(), density in 0.0f64..=1.0, p in 1usize..=4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let specs: Vec<LayerSpec> = specs().iter().map(|s| s.with_patch_size(p).unwrap()).collect();
        let g = random_grad(&mut rng, &specs);
        let comp = NsiCompressor::new(NsiConfig::new(0.5, p).unwrap(), &specs).unwrap();
        let out = comp.compress(&g, &RatioSchedule::uniform(&specs, density).unwrap(), 0).unwrap();
        prop_assert!(out.validate(comp.layout()).is_ok());
        for (l, part) in out.layers.iter().zip(comp.layout().partitions()) {
            prop_assert!(l.kept.len() <= part.num_patches());
        }
    }
}
