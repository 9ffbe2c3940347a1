//! Independent reference implementations shared by the integration tests.
//! None of these call into the routines they check.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use nalgebra::{DMatrix, SymmetricEigen};
use pseudomask::{Matrix, SegmentGraph};

/// All generalized eigenpairs of `(D - W) v = λ D v`, ascending, from a dense
/// symmetric decomposition of `D^{-1/2} (D - W) D^{-1/2}`. Vectors are mapped
/// back and normalized to unit length.
pub fn generalized_spectrum(w: &Matrix) -> Vec<(f64, Vec<f64>)> {
    let n = w.rows();
    let d: Vec<f64> = (0..n).map(|i| (0..n).map(|j| w.get(i, j)).sum()).collect();
    let s: Vec<f64> = d.iter().map(|x| 1.0 / x.sqrt()).collect();
    let l = DMatrix::from_fn(n, n, |i, j| {
        let lap = if i == j { d[i] - w.get(i, j) } else { -w.get(i, j) };
        s[i] * lap * s[j]
    });
    let eig = SymmetricEigen::new(l);
    let mut pairs: Vec<(f64, Vec<f64>)> = (0..n)
        .map(|k| {
            let mut v: Vec<f64> = (0..n).map(|i| eig.eigenvectors[(i, k)] * s[i]).collect();
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            v.iter_mut().for_each(|x| *x /= norm);
            (eig.eigenvalues[k], v)
        })
        .collect();
    pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    pairs
}

/// cut/assoc(A) + cut/assoc(B) by explicit double loops.
pub fn ncut_cost_reference(mask: &[bool], w: &Matrix) -> f64 {
    let n = mask.len();
    let mut cut = 0.0;
    let mut assoc_a = 0.0;
    let mut assoc_b = 0.0;
    for i in 0..n {
        for j in 0..n {
            let x = w.get(i, j);
            if mask[i] && !mask[j] {
                cut += x;
            }
            if mask[i] {
                assoc_a += x;
            } else {
                assoc_b += x;
            }
        }
    }
    cut / assoc_a + cut / assoc_b
}

/// Minimum cost over all `2^(n-1) - 1` proper bipartitions.
pub fn exhaustive_min_ncut(w: &Matrix) -> f64 {
    let n = w.rows();
    let mut best = f64::INFINITY;
    // node n-1 always on side B, so each split is visited once
    for bits in 1u32..(1 << (n - 1)) {
        let mask: Vec<bool> = (0..n).map(|i| i < n - 1 && bits >> i & 1 == 1).collect();
        best = best.min(ncut_cost_reference(&mask, w));
    }
    best
}

pub fn set_of(v: &[usize]) -> BTreeSet<usize> {
    v.iter().copied().collect()
}

pub fn jaccard(a: &BTreeSet<usize>, b: &BTreeSet<usize>) -> f64 {
    let inter = a.intersection(b).count();
    let union = a.union(b).count();
    if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    }
}

/// True when `segments` induce a connected subgraph of the segment adjacency.
pub fn is_connected(segments: &[usize], seg: &SegmentGraph) -> bool {
    let members = set_of(segments);
    let Some(&start) = members.iter().next() else {
        return false;
    };
    let mut seen = BTreeSet::from([start]);
    let mut frontier = vec![start];
    while let Some(s) = frontier.pop() {
        for &(a, b) in seg.adjacency() {
            let (a, b) = (a as usize, b as usize);
            let other = if a == s {
                b
            } else if b == s {
                a
            } else {
                continue;
            };
            if members.contains(&other) && seen.insert(other) {
                frontier.push(other);
            }
        }
    }
    seen.len() == members.len()
}

/// `(ap25, ap50, ap_mean)` by brute force: set-based IoU with ignore
/// handling, a selection-sort ranking, and AP written as the mean over GT
/// instances of the best precision reachable at or after each hit.
pub fn brute_force_ap(preds: &[(Vec<usize>, f64)], gt: &[u64]) -> (f64, f64, f64) {
    let mut instances: BTreeMap<u64, BTreeSet<usize>> = BTreeMap::new();
    for (v, &id) in gt.iter().enumerate() {
        if id != 0 {
            instances.entry(id).or_default().insert(v);
        }
    }
    let ignore: BTreeSet<usize> = (0..gt.len()).filter(|&v| gt[v] == 0).collect();
    let gts: Vec<BTreeSet<usize>> = instances.into_values().collect();
    let clean = |s: &BTreeSet<usize>| -> BTreeSet<usize> { s.difference(&ignore).copied().collect() };

    // rank by repeated selection of the highest remaining confidence, earliest first
    let mut remaining: Vec<usize> = (0..preds.len()).collect();
    let mut ranked = Vec::new();
    while !remaining.is_empty() {
        let mut pick = 0;
        for k in 1..remaining.len() {
            if preds[remaining[k]].1 > preds[remaining[pick]].1 {
                pick = k;
            }
        }
        ranked.push(remaining.remove(pick));
    }

    let ap_at = |t: f64| -> f64 {
        let mut used = vec![false; gts.len()];
        let mut hits = Vec::new();
        for &p in &ranked {
            let ps = clean(&set_of(&preds[p].0));
            let mut best: Option<(usize, f64)> = None;
            for (g, gs) in gts.iter().enumerate() {
                if used[g] {
                    continue;
                }
                let iou = jaccard(&ps, &clean(gs));
                if iou >= t && best.is_none_or(|(_, b)| iou > b) {
                    best = Some((g, iou));
                }
            }
            if let Some((g, _)) = best {
                used[g] = true;
            }
            hits.push(best.is_some());
        }
        let mut precision = Vec::new();
        let mut tp = 0;
        for (i, &h) in hits.iter().enumerate() {
            tp += h as usize;
            precision.push(tp as f64 / (i + 1) as f64);
        }
        let mut total = 0.0;
        for i in 0..hits.len() {
            if hits[i] {
                total += precision[i..].iter().cloned().fold(0.0, f64::max);
            }
        }
        total / gts.len() as f64
    };
    let ap25 = ap_at(0.25);
    let ap50 = ap_at(0.5);
    let ap_mean = (0..10).map(|i| ap_at((50 + 5 * i) as f64 / 100.0)).sum::<f64>() / 10.0;
    (ap25, ap50, ap_mean)
}

/// Sequential merge written directly from the policy statement: take the
/// `top_k` most confident (earliest on ties), then accept each in turn when
/// its IoU with every mask held so far is within `bound`.
pub fn merge_reference(
    existing: &[Vec<usize>],
    candidates: &[(Vec<usize>, f64)],
    top_k: usize,
    bound: f64,
) -> Vec<Vec<usize>> {
    let mut pool: Vec<usize> = (0..candidates.len()).collect();
    let mut chosen = Vec::new();
    while chosen.len() < top_k && !pool.is_empty() {
        let mut pick = 0;
        for k in 1..pool.len() {
            if candidates[pool[k]].1 > candidates[pool[pick]].1 {
                pick = k;
            }
        }
        chosen.push(pool.remove(pick));
    }
    let mut out: Vec<BTreeSet<usize>> = existing.iter().map(|m| set_of(m)).collect();
    for c in chosen {
        let cs = set_of(&candidates[c].0);
        if out.iter().all(|m| jaccard(&cs, m) <= bound) {
            out.push(cs);
        }
    }
    out.into_iter().map(|s| s.into_iter().collect()).collect()
}
