//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each and
//! exits non-zero if any criterion fails.

mod common;

use std::collections::BTreeSet;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::Rng;

use pseudomask::eigen::{generalized_residual, second_smallest_generalized};
use pseudomask::features::Aggregation;
use pseudomask::freemask::{freemask_generate, FreeMaskParams};
use pseudomask::ncut::{bipartition, masked_ncut, masked_ncut_traced, ncut_cost, NCutParams, Separation};
use pseudomask::pipeline::{self, PipelineConfig};
use pseudomask::selftrain::{merge_predictions, MergePolicy};
use pseudomask::{
    aggregate_features, cosine_similarity, evaluate_ap, fuse_similarities, oversegment, synth, GroundTruthSet,
    InstanceMask, MaskSource, OversegParams, PseudoMaskSet, ScoredMask, SegmentGraph,
};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn eigen_correctness() -> Outcome {
    let mut rng = synth::rng(1001);
    let start = Instant::now();
    let (mut worst_res, mut worst_gap) = (0.0f64, 0.0f64);
    for _ in 0..200 {
        let n = rng.gen_range(2..=64);
        let density = rng.gen_range(0.05..0.9);
        let w = synth::random_saliency(n, density, 1e-5, &mut rng);
        let pair = second_smallest_generalized(&w).expect("solve");
        let vnorm = pair.vector.iter().map(|x| x * x).sum::<f64>().sqrt();
        worst_res = worst_res.max(generalized_residual(&w, pair.lambda, &pair.vector) / vnorm);
        let oracle = common::generalized_spectrum(&w)[1].0;
        worst_gap = worst_gap.max((pair.lambda - oracle).abs());
    }
    let elapsed = start.elapsed();
    outcome(
        worst_res <= 1e-8 && worst_gap <= 1e-9 && elapsed < Duration::from_secs(10),
        format!("200 matrices, max relative residual {worst_res:.2e} (<= 1e-8), max |λ - oracle| {worst_gap:.2e} (<= 1e-9), {elapsed:.2?} (< 10 s)"),
    )
}

fn spectral_cut_quality() -> Outcome {
    let mut rng = synth::rng(1002);
    let start = Instant::now();
    let mut worst = 1.0f64;
    let mut over = 0;
    for _ in 0..100 {
        let w = synth::random_saliency(10, 0.5, 1e-5, &mut rng);
        let v = second_smallest_generalized(&w).expect("solve").vector;
        let m = bipartition(&v);
        let ratio = ncut_cost(&m, &w).expect("proper split") / common::exhaustive_min_ncut(&w);
        if ratio > 1.05 {
            over += 1;
        }
        worst = worst.max(ratio);
    }
    let elapsed = start.elapsed();
    outcome(
        worst <= 1.05 && elapsed < Duration::from_secs(30),
        format!("100 random 10-node saliency graphs (edge density 0.5), worst cost ratio {worst:.4} (<= 1.05), {over} graphs above 1.05, {elapsed:.2?} (< 30 s)"),
    )
}

fn sorted_sets(mut sets: Vec<Vec<usize>>) -> Vec<Vec<usize>> {
    sets.sort();
    sets
}

fn cluster_recovery() -> Outcome {
    let mut rng = synth::rng(1003);
    let params = NCutParams {
        tau_cut: 0.65,
        min_foreground_segments: 2,
        max_instances: 20,
        ..Default::default()
    };
    let mut lines = Vec::new();
    let mut pass = true;
    for k in [2usize, 3, 5] {
        let (mut ncut_ok, mut fm_ok, mut gap_ok) = (0, 0, 0);
        for _ in 0..100 {
            let sizes: Vec<usize> = (0..k).map(|_| rng.gen_range(4..=15)).collect();
            let scene = synth::planted_clusters(&sizes, rng.gen());
            let a = cosine_similarity(&scene.features);

            // confirm the threshold sits inside the similarity gap of this scene
            let mut group = vec![usize::MAX; scene.segments.num_segments()];
            for (o, members) in scene.objects.iter().enumerate() {
                members.iter().for_each(|&s| group[s] = o);
            }
            let n = group.len();
            let (mut within, mut between) = (f64::INFINITY, f64::NEG_INFINITY);
            for i in 0..n {
                for j in (i + 1)..n {
                    if group[i] == group[j] {
                        within = within.min(a.get(i, j));
                    } else {
                        between = between.max(a.get(i, j));
                    }
                }
            }
            if between < params.tau_cut && params.tau_cut < within {
                gap_ok += 1;
            }

            let set = masked_ncut(&a, &scene.segments, &params).expect("ncut");
            if sorted_sets(set.segment_sets()) == sorted_sets(scene.objects.clone()) {
                ncut_ok += 1;
            }
            let fm = FreeMaskParams {
                n_seeds: 2 * (k + 1),
                tau_sim: 0.8,
                nms_iou: 0.5,
                max_kept: 20,
            };
            let proposals = freemask_generate(&scene.features, &scene.segments, &fm).expect("freemask");
            let found: BTreeSet<Vec<usize>> = proposals.segment_sets().into_iter().collect();
            if scene.objects.iter().all(|o| found.contains(o)) {
                fm_ok += 1;
            }
        }
        pass &= ncut_ok == 100 && fm_ok >= 95 && gap_ok == 100;
        lines.push(format!("k={k}: ncut {ncut_ok}/100, freemask {fm_ok}/100 (gap holds {gap_ok}/100)"));
    }
    outcome(pass, lines.join("; "))
}

fn mechanics() -> Outcome {
    let mut rng = synth::rng(1004);
    let strategies = [Separation::Max, Separation::Avg, Separation::Largest, Separation::NoSep];
    let mut violations = Vec::new();
    let mut total_masks = 0;
    for trial in 0..1000 {
        let (seg, f) = if trial % 2 == 0 {
            let n = rng.gen_range(2..=40);
            let seg = synth::random_segment_graph(n, rng.gen_range(0..=n), &mut rng);
            (seg, synth::random_features(n, rng.gen_range(2..=8), &mut rng))
        } else {
            let k = rng.gen_range(1..=4);
            let sizes: Vec<usize> = (0..k).map(|_| rng.gen_range(1..=8)).collect();
            let classes: Vec<usize> = (0..k).map(|_| rng.gen_range(0..3)).collect();
            let s = synth::planted_scene(&sizes, &classes, rng.gen());
            (s.segments, s.features)
        };
        let params = NCutParams {
            tau_cut: rng.gen_range(0.05..0.95),
            epsilon: 1e-5,
            max_instances: rng.gen_range(1..=10),
            min_foreground_segments: rng.gen_range(1..=4),
            separation: *strategies.choose(&mut rng).unwrap(),
        };
        let (set, trace) = masked_ncut_traced(&cosine_similarity(&f), &seg, &params).expect("ncut");
        total_masks += set.len();
        for it in &trace.iterations {
            if it.foreground_after_inversion > it.n_active.div_ceil(2) {
                violations.push(format!("trial {trial}: inversion left {} of {}", it.foreground_after_inversion, it.n_active));
            }
            if let Some(r) = it.residual {
                if r > 1e-8 {
                    violations.push(format!("trial {trial}: residual {r:e}"));
                }
            }
        }
        if trace.iterations.len() > params.max_instances || set.len() > params.max_instances {
            violations.push(format!("trial {trial}: ran past max_instances"));
        }
        for (i, m) in set.iter().enumerate() {
            if params.separation != Separation::NoSep && !common::is_connected(&m.segment_ids, &seg) {
                violations.push(format!("trial {trial}: mask {i} disconnected"));
            }
            for other in &set.masks[i + 1..] {
                if !common::set_of(&m.segment_ids).is_disjoint(&common::set_of(&other.segment_ids)) {
                    violations.push(format!("trial {trial}: masks overlap"));
                }
            }
        }
    }
    outcome(
        violations.is_empty(),
        format!(
            "1000 randomized instances, {total_masks} masks emitted, {} violations{}",
            violations.len(),
            violations.first().map(|v| format!(" (first: {v})")).unwrap_or_default()
        ),
    )
}

fn separation_ablation() -> Outcome {
    let mut rng = synth::rng(1005);
    let mut ok = 0;
    for _ in 0..10 {
        let sizes = [rng.gen_range(4..=10), rng.gen_range(4..=10)];
        let scene = synth::planted_scene(&sizes, &[0, 0], rng.gen());
        let a = cosine_similarity(&scene.features);
        let run = |separation| {
            let p = NCutParams {
                min_foreground_segments: 2,
                separation,
                ..Default::default()
            };
            sorted_sets(masked_ncut(&a, &scene.segments, &p).expect("ncut").segment_sets())
        };
        let union: Vec<usize> = scene.objects.concat().into_iter().collect::<BTreeSet<_>>().into_iter().collect();
        if run(Separation::NoSep) == vec![union] && run(Separation::Max) == sorted_sets(scene.objects.clone()) {
            ok += 1;
        }
    }
    outcome(
        ok == 10,
        format!("{ok}/10 scenes: NoSep merges the twin objects into one mask, Max emits one mask per object"),
    )
}

fn sparse_dense_gate() -> Outcome {
    let mut rng = synth::rng(1006);
    let mut ok = 0;
    let (mut dense_total, mut sparse_total) = (0, 0);
    for _ in 0..50 {
        let k = rng.gen_range(1..=6);
        let sizes: Vec<usize> = (0..k).map(|_| rng.gen_range(2..=14)).collect();
        let classes: Vec<usize> = (0..k).map(|_| rng.gen_range(0..4)).collect();
        let scene = synth::planted_scene(&sizes, &classes, rng.gen());
        let a = cosine_similarity(&scene.features);
        let run = |min_fg| {
            let p = NCutParams {
                min_foreground_segments: min_fg,
                ..Default::default()
            };
            masked_ncut(&a, &scene.segments, &p).expect("ncut").segment_sets()
        };
        let (dense, sparse) = (run(2), run(8));
        dense_total += dense.len();
        sparse_total += sparse.len();
        if dense.len() >= sparse.len() {
            ok += 1;
        }
    }
    outcome(
        ok == 50,
        format!("{ok}/50 scenes with min_foreground=2 count >= min_foreground=8 count ({dense_total} vs {sparse_total} masks in total)"),
    )
}

fn ap_oracle() -> Outcome {
    let mut rng = synth::rng(1007);
    let (mut worst, mut perfect_ok, mut empty_ok) = (0.0f64, 0, 0);
    for _ in 0..500 {
        let v = rng.gen_range(10..=60);
        let k = rng.gen_range(1..=5);
        let mut gt: Vec<u64> = (0..v).map(|_| rng.gen_range(0..=k)).collect();
        gt[0] = 1;
        let truth = GroundTruthSet::new(gt.clone());
        let n_pred = rng.gen_range(0..=8);
        let mut preds = Vec::new();
        for _ in 0..n_pred {
            let mut verts: Vec<usize> = if rng.gen_bool(0.6) {
                // perturbed copy of a GT instance
                let id = rng.gen_range(1..=k);
                (0..v).filter(|&x| (gt[x] == id) ^ rng.gen_bool(0.15)).collect()
            } else {
                (0..v).filter(|_| rng.gen_bool(0.3)).collect()
            };
            if verts.is_empty() {
                verts.push(rng.gen_range(0..v));
            }
            let conf = (rng.gen_range(0..=10) as f64) / 10.0;
            preds.push(ScoredMask {
                vertices: verts,
                confidence: conf,
            });
        }
        let r = evaluate_ap(&preds, &truth).expect("evaluate");
        let pairs: Vec<(Vec<usize>, f64)> = preds.iter().map(|p| (p.vertices.clone(), p.confidence)).collect();
        let (b25, b50, bm) = common::brute_force_ap(&pairs, &gt);
        worst = worst.max((r.ap25 - b25).abs()).max((r.ap50 - b50).abs()).max((r.ap_mean - bm).abs());

        let perfect: Vec<ScoredMask> = (0..truth.num_instances())
            .map(|g| ScoredMask {
                vertices: truth.instance_vertices(g),
                confidence: rng.gen(),
            })
            .collect();
        let p = evaluate_ap(&perfect, &truth).expect("evaluate");
        if p.ap25 == 1.0 && p.ap50 == 1.0 && p.ap_mean == 1.0 {
            perfect_ok += 1;
        }
        let e = evaluate_ap(&[], &truth).expect("evaluate");
        if e.ap25 == 0.0 && e.ap50 == 0.0 && e.ap_mean == 0.0 {
            empty_ok += 1;
        }
    }
    outcome(
        worst <= 1e-12 && perfect_ok == 500 && empty_ok == 500,
        format!("500 scenes, max |AP - brute force| {worst:.1e} (<= 1e-12), perfect = 1.0 in {perfect_ok}/500, empty = 0.0 in {empty_ok}/500"),
    )
}

fn merge_policy() -> Outcome {
    let mut rng = synth::rng(1008);
    let mut failures = Vec::new();
    for trial in 0..500 {
        let n = rng.gen_range(6..=30);
        let seg = synth::random_segment_graph(n, 0, &mut rng);
        let mut ids: Vec<usize> = (0..n).collect();
        ids.shuffle(&mut rng);
        let mut existing = PseudoMaskSet::default();
        let mut cursor = 0;
        for i in 0..rng.gen_range(0..=4) {
            let len = rng.gen_range(1..=4);
            if cursor + len > n {
                break;
            }
            existing.masks.push(
                InstanceMask::new(ids[cursor..cursor + len].to_vec(), &seg, 1.0 / (1.0 + i as f64), MaskSource::Ncut(i))
                    .unwrap(),
            );
            cursor += len;
        }
        let candidates: Vec<InstanceMask> = (0..rng.gen_range(0..=12))
            .map(|_| {
                let mut s: Vec<usize> = (0..n).filter(|_| rng.gen_bool(0.25)).collect();
                if s.is_empty() {
                    s.push(rng.gen_range(0..n));
                }
                let conf = (rng.gen_range(0..=8) as f64) / 8.0;
                InstanceMask::new(s, &seg, conf, MaskSource::FreeMask).unwrap()
            })
            .collect();
        let policy = MergePolicy {
            top_k: rng.gen_range(1..=10),
            min_novelty_iou: rng.gen_range(0.0..0.9),
            ..Default::default()
        };
        let out = merge_predictions(&existing, &candidates, &policy, 1).expect("merge");
        if out.masks[..existing.len()] != existing.masks[..] {
            failures.push(format!("trial {trial}: existing masks not preserved"));
        }
        for i in existing.len()..out.len() {
            for j in 0..i {
                let iou = common::jaccard(
                    &common::set_of(&out.masks[i].segment_ids),
                    &common::set_of(&out.masks[j].segment_ids),
                );
                if iou > policy.min_novelty_iou {
                    failures.push(format!("trial {trial}: accepted mask {i} has IoU {iou} with {j}"));
                }
            }
        }
        let again = merge_predictions(&out, &candidates, &policy, 1).expect("merge");
        if again != out {
            failures.push(format!("trial {trial}: second merge changed the set"));
        }
        let reference = common::merge_reference(
            &existing.segment_sets(),
            &candidates.iter().map(|c| (c.segment_ids.clone(), c.confidence)).collect::<Vec<_>>(),
            policy.top_k,
            policy.min_novelty_iou,
        );
        if out.segment_sets() != reference {
            failures.push(format!("trial {trial}: differs from the sequential reference"));
        }
    }
    outcome(
        failures.is_empty(),
        format!(
            "500 merge instances, {} failures{}",
            failures.len(),
            failures.first().map(|f| format!(" (first: {f})")).unwrap_or_default()
        ),
    )
}

fn run_pipeline(data: &std::path::Path, out: &std::path::Path) -> pseudomask::Result<()> {
    let mut cfg = PipelineConfig::default();
    let d = data.display();
    cfg.paths.mesh = Some(format!("{d}/{{scene}}.ply"));
    cfg.paths.features_3d = Some(format!("{d}/{{scene}}.3d.fmat"));
    cfg.paths.features_2d = Some(format!("{d}/{{scene}}.2d.fmat"));
    cfg.paths.gt = Some(format!("{d}/{{scene}}.gt.txt"));
    cfg.paths.output_dir = Some(out.display().to_string());
    cfg.ncut.min_foreground_segments = 2;
    let scenes = vec!["s0".to_string(), "s1".to_string()];
    for s in &scenes {
        pipeline::cmd_oversegment(&cfg, s)?;
        pipeline::cmd_pseudomask(&cfg, s)?;
        pipeline::cmd_export_colored(&cfg, s)?;
    }
    pipeline::cmd_eval(&cfg, &scenes, 1)?;
    Ok(())
}

fn tree_bytes(root: &std::path::Path) -> Vec<(std::path::PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in std::fs::read_dir(&dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                out.push((path.strip_prefix(root).unwrap().to_path_buf(), std::fs::read(&path).unwrap()));
            }
        }
    }
    out.sort();
    out
}

fn determinism_and_scale() -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    for (i, s) in ["s0", "s1"].iter().enumerate() {
        synth::room(90, 5, 0.008, 20 + i as u64).write(&data, s).unwrap();
    }
    let (a, b) = (tmp.path().join("run_a"), tmp.path().join("run_b"));
    run_pipeline(&data, &a).expect("first run");
    run_pipeline(&data, &b).expect("second run");
    let (ta, tb) = (tree_bytes(&a), tree_bytes(&b));
    let identical = ta == tb && !ta.is_empty();

    let mut rng = synth::rng(1009);
    let mut scale_ok = 0;
    let params = NCutParams {
        min_foreground_segments: 2,
        ..Default::default()
    };
    for trial in 0..40 {
        let (seg, f): (SegmentGraph, _) = if trial % 2 == 0 {
            let s = synth::planted_clusters(&[rng.gen_range(3..9), rng.gen_range(3..9), rng.gen_range(3..9)], rng.gen());
            (s.segments, s.features)
        } else {
            let n = rng.gen_range(5..=30);
            (
                synth::random_segment_graph(n, n / 2, &mut rng),
                synth::random_features(n, 6, &mut rng),
            )
        };
        let base = masked_ncut(&cosine_similarity(&f), &seg, &params).unwrap();
        let scaled = masked_ncut(&cosine_similarity(&f.scaled(7.3)), &seg, &params).unwrap();
        if base == scaled {
            scale_ok += 1;
        }
    }
    outcome(
        identical && scale_ok == 40,
        format!(
            "pipeline rerun byte-identical over {} files: {identical}; features x7.3 leave masks unchanged in {scale_ok}/40 scenes",
            ta.len()
        ),
    )
}

fn throughput() -> Outcome {
    let scene = synth::room(317, 16, 0.008, 1010);
    let start = Instant::now();
    let seg = oversegment(&scene.mesh, &OversegParams::default()).expect("oversegment");
    let f3 = aggregate_features(&scene.features_3d, &seg, Aggregation::Mean).unwrap();
    let f2 = aggregate_features(&scene.features_2d, &seg, Aggregation::Mean).unwrap();
    let a = fuse_similarities(&cosine_similarity(&f2), &cosine_similarity(&f3), 0.5).unwrap();
    let params = NCutParams {
        max_instances: 20,
        min_foreground_segments: 2,
        ..Default::default()
    };
    let set = masked_ncut(&a, &seg, &params).expect("ncut");
    let elapsed = start.elapsed();
    outcome(
        scene.mesh.vertex_count() >= 100_000 && seg.num_segments() <= 2000 && elapsed < Duration::from_secs(60),
        format!(
            "{} vertices -> {} segments -> {} masks in {elapsed:.2?} (< 60 s)",
            scene.mesh.vertex_count(),
            seg.num_segments(),
            set.len()
        ),
    )
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() {
    let criteria: [Criterion; 10] = [
        ("eigen correctness", eigen_correctness),
        ("spectral cut quality", spectral_cut_quality),
        ("cluster recovery", cluster_recovery),
        ("masked cut mechanics", mechanics),
        ("separation ablation direction", separation_ablation),
        ("sparse/dense foreground gate", sparse_dense_gate),
        ("AP evaluator oracle equivalence", ap_oracle),
        ("merge policy", merge_policy),
        ("determinism and scale invariance", determinism_and_scale),
        ("throughput", throughput),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            outcome(false, format!("panicked: {msg}"))
        });
        if !result.pass {
            failed += 1;
        }
        println!(
            "{} criterion {:>2} {name}: {} [{:.2?}]",
            if result.pass { "PASS" } else { "FAIL" },
            i + 1,
            result.detail,
            start.elapsed()
        );
    }
    println!("acceptance: {}/{} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
