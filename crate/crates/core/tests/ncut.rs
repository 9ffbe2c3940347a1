mod common;

use proptest::prelude::*;
use pseudomask::ncut::{
    bipartition, invert_if_majority, masked_ncut_traced, ncut_cost, separate_components, StopReason,
};
use pseudomask::{
    cosine_similarity, masked_ncut, synth, AffinityMatrix, MaskSource, Matrix, NCutParams, SegmentGraph, Separation,
};
use rand::Rng;

fn chain(labels: Vec<u32>) -> SegmentGraph {
    let n = *labels.iter().max().unwrap();
    SegmentGraph::from_parts(labels, (0..n).map(|s| (s, s + 1)).collect()).unwrap()
}

#[test]
fn cost_of_two_cliques() {
    let (k, eps) = (3usize, 1e-3);
    let mut w = Matrix::filled(2 * k, 2 * k, eps);
    for i in 0..2 * k {
        for j in 0..2 * k {
            if (i < k) == (j < k) {
                w.set(i, j, 1.0);
            }
        }
    }
    let mask: Vec<bool> = (0..2 * k).map(|i| i < k).collect();
    let kk = (k * k) as f64;
    let want = 2.0 * (kk * eps) / (kk + kk * eps);
    let got = ncut_cost(&mask, &w).unwrap();
    assert!((got - want).abs() < 1e-15);
    assert!((got - common::ncut_cost_reference(&mask, &w)).abs() < 1e-15);
    assert!(ncut_cost(&vec![true; 2 * k], &w).is_err());
    assert!(ncut_cost(&[true, false], &w).is_err());
}

#[test]
fn cost_matches_reference_on_random_splits() {
    let mut rng = synth::rng(31);
    for _ in 0..50 {
        let n = rng.gen_range(2..12);
        let w = synth::random_saliency(n, 0.4, 1e-4, &mut rng);
        let mut mask: Vec<bool> = (0..n).map(|_| rng.gen()).collect();
        mask[0] = true;
        mask[n - 1] = false;
        let got = ncut_cost(&mask, &w).unwrap();
        assert!((got - common::ncut_cost_reference(&mask, &w)).abs() < 1e-12);
    }
}

#[test]
fn separation_picks_the_expected_component() {
    // segments 0-1-2-3-4 in a chain, segment 0 spans three vertices
    let seg = chain(vec![0, 0, 0, 1, 2, 3, 4]);
    let m = [true, true, false, true, true];
    let v = [0.6, 0.6, -1.0, 0.9, 0.0];
    let segs = [0, 1, 2, 3, 4];
    let run = |s| separate_components(&m, &v, &segs, &seg, s).unwrap();
    assert_eq!(run(Separation::Max), vec![false, false, false, true, true]);
    assert_eq!(run(Separation::Avg), vec![true, true, false, false, false]);
    assert_eq!(run(Separation::Largest), vec![true, true, false, false, false]);
    assert_eq!(run(Separation::NoSep), m.to_vec());
    assert!(separate_components(&[false; 5], &v, &segs, &seg, Separation::Max).is_err());
}

#[test]
fn separation_names_parse() {
    for (name, want) in [
        ("max", Separation::Max),
        ("avg", Separation::Avg),
        ("largest", Separation::Largest),
        ("none", Separation::NoSep),
    ] {
        assert_eq!(name.parse::<Separation>().unwrap(), want);
    }
    assert!("biggest".parse::<Separation>().is_err());
}

#[test]
fn recovers_planted_clusters() {
    let params = NCutParams {
        min_foreground_segments: 2,
        ..Default::default()
    };
    for seed in 0..20 {
        let scene = synth::planted_clusters(&[6, 9, 4], seed);
        let set = masked_ncut(&cosine_similarity(&scene.features), &scene.segments, &params).unwrap();
        let mut got = set.segment_sets();
        got.sort();
        let mut want = scene.objects.clone();
        want.sort();
        assert_eq!(got, want, "seed {seed}");
        for (i, m) in set.iter().enumerate() {
            assert_eq!(m.source, MaskSource::Ncut(i));
            assert!((m.confidence - 1.0 / (1.0 + i as f64)).abs() < 1e-15);
        }
    }
}

#[test]
fn homogeneous_scene_has_no_instances() {
    let seg = chain((0..12).collect());
    let a = AffinityMatrix::new(Matrix::filled(12, 12, 1.0), pseudomask::features::AffinityKind::RawCosine).unwrap();
    let (set, trace) = masked_ncut_traced(&a, &seg, &NCutParams::default()).unwrap();
    assert!(set.is_empty());
    assert_eq!(trace.stop, StopReason::EmptyForeground);
    assert_eq!(trace.iterations.len(), 1);
    assert!(trace.iterations[0].inverted);
}

#[test]
fn sparse_gate_stops_on_small_foreground() {
    let scene = synth::planted_clusters(&[3, 3], 8);
    let (set, trace) = masked_ncut_traced(
        &cosine_similarity(&scene.features),
        &scene.segments,
        &NCutParams::default(),
    )
    .unwrap();
    assert!(set.is_empty());
    assert_eq!(trace.stop, StopReason::BelowMinForeground);
}

#[test]
fn rejects_bad_input() {
    let scene = synth::planted_clusters(&[3, 3], 1);
    let a = cosine_similarity(&scene.features);
    for p in [
        NCutParams { tau_cut: 1.0, ..Default::default() },
        NCutParams { epsilon: 0.0, ..Default::default() },
        NCutParams { max_instances: 0, ..Default::default() },
        NCutParams { min_foreground_segments: 0, ..Default::default() },
    ] {
        assert!(masked_ncut(&a, &scene.segments, &p).is_err(), "{p:?}");
    }
    let wrong = chain((0..3).collect());
    assert!(masked_ncut(&a, &wrong, &NCutParams::default()).is_err());
}

fn random_case(seed: u64) -> (SegmentGraph, pseudomask::FeatureMatrix) {
    let mut rng = synth::rng(seed);
    if rng.gen_bool(0.5) {
        let n = rng.gen_range(2..30);
        let seg = synth::random_segment_graph(n, rng.gen_range(0..=n), &mut rng);
        (seg, synth::random_features(n, rng.gen_range(2..6), &mut rng))
    } else {
        let k = rng.gen_range(1..4);
        let sizes: Vec<usize> = (0..k).map(|_| rng.gen_range(1..7)).collect();
        let classes: Vec<usize> = (0..k).map(|_| rng.gen_range(0..3)).collect();
        let s = synth::planted_scene(&sizes, &classes, rng.gen());
        (s.segments, s.features)
    }
}

fn separation() -> impl Strategy<Value = Separation> {
    prop_oneof![
        Just(Separation::Max),
        Just(Separation::Avg),
        Just(Separation::Largest),
        Just(Separation::NoSep)
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(96))]

    #[test]
    fn mask_set_invariants(seed in any::<u64>(), tau in 0.05f64..0.95, min_fg in 1usize..4, max_inst in 1usize..8, sep in separation()) {
        let (seg, f) = random_case(seed);
        let params = NCutParams { tau_cut: tau, min_foreground_segments: min_fg, max_instances: max_inst, separation: sep, ..Default::default() };
        let (set, trace) = masked_ncut_traced(&cosine_similarity(&f), &seg, &params).unwrap();
        prop_assert!(set.len() <= max_inst);
        prop_assert_eq!(set.len(), trace.iterations.iter().filter(|t| t.accepted).count());
        for (i, m) in set.iter().enumerate() {
            prop_assert!(m.segment_ids.len() >= min_fg);
            if sep != Separation::NoSep {
                prop_assert!(common::is_connected(&m.segment_ids, &seg));
            }
            for other in &set.masks[i + 1..] {
                prop_assert!(common::set_of(&m.segment_ids).is_disjoint(&common::set_of(&other.segment_ids)));
                prop_assert!(other.confidence < m.confidence);
            }
        }
        for t in &trace.iterations {
            prop_assert!(2 * t.foreground_after_inversion <= t.n_active);
            prop_assert!(t.kept <= t.foreground_after_inversion);
            if let Some(r) = t.residual {
                prop_assert!(r <= 1e-8);
            }
        }
    }

    #[test]
    fn inversion_leaves_a_minority(v in prop::collection::vec(-1.0f64..1.0, 1..40)) {
        let mut v = v;
        let mut m = bipartition(&v);
        let before = m.clone();
        let flipped = invert_if_majority(&mut m, &mut v);
        prop_assert!(2 * m.iter().filter(|&&b| b).count() <= m.len());
        prop_assert_eq!(flipped, m != before);
    }

    #[test]
    fn feature_scale_does_not_matter(seed in any::<u64>(), scale in 0.01f64..100.0) {
        let (seg, f) = random_case(seed);
        let params = NCutParams { min_foreground_segments: 2, ..Default::default() };
        let a = masked_ncut(&cosine_similarity(&f), &seg, &params).unwrap();
        let b = masked_ncut(&cosine_similarity(&f.scaled(scale)), &seg, &params).unwrap();
        prop_assert_eq!(a.segment_sets(), b.segment_sets());
    }

    #[test]
    fn stricter_gate_yields_a_prefix(seed in any::<u64>(), lo in 1usize..4, extra in 1usize..8) {
        let (seg, f) = random_case(seed);
        let a = cosine_similarity(&f);
        let run = |min_fg| masked_ncut(&a, &seg, &NCutParams { min_foreground_segments: min_fg, ..Default::default() }).unwrap();
        let dense = run(lo);
        let sparse = run(lo + extra);
        prop_assert!(sparse.len() <= dense.len());
        prop_assert_eq!(&dense.masks[..sparse.len()], &sparse.masks[..]);
    }
}
