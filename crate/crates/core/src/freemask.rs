//! Seed-based mask proposals in feature space.
//!
//! Seeds are drawn by farthest-point sampling over segment features. Each seed
//! claims every segment whose cosine similarity to it reaches `tau_sim`. The
//! resulting regions are scored by mean within-region similarity times their
//! share of mesh vertices and filtered with greedy non-maximum suppression.
//! Unlike the normalized-cut loop, proposals may overlap and need not be
//! connected.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{cosine_similarity, AffinityKind, AffinityMatrix, FeatureMatrix};
use crate::masks::{set_iou, InstanceMask, MaskSource, PseudoMaskSet};
use crate::overseg::SegmentGraph;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FreeMaskParams {
    /// Upper bound on seeds; clamped to the segment count by [`freemask_generate`].
    pub n_seeds: usize,
    pub tau_sim: f64,
    pub nms_iou: f64,
    pub max_kept: usize,
}

impl Default for FreeMaskParams {
    fn default() -> Self {
        FreeMaskParams {
            n_seeds: 32,
            tau_sim: 0.8,
            nms_iou: 0.5,
            max_kept: 20,
        }
    }
}

impl FreeMaskParams {
    pub fn validate(&self) -> Result<()> {
        if self.n_seeds < 1 {
            return Err(Error::param("n_seeds must be >= 1"));
        }
        if !(self.tau_sim > 0.0 && self.tau_sim < 1.0) {
            return Err(Error::param(format!("tau_sim must lie in (0,1), got {}", self.tau_sim)));
        }
        if !(self.nms_iou > 0.0 && self.nms_iou <= 1.0) {
            return Err(Error::param(format!("nms_iou must lie in (0,1], got {}", self.nms_iou)));
        }
        if self.max_kept < 1 {
            return Err(Error::param("max_kept must be >= 1"));
        }
        Ok(())
    }
}

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Farthest-point sampling over the rows of `f`, starting at the row of
/// largest norm. Ties go to the smallest index.
pub fn farthest_point_sampling(f: &FeatureMatrix, n_seeds: usize) -> Result<Vec<usize>> {
    let n = f.num_segments();
    if n_seeds == 0 {
        return Err(Error::param("n_seeds must be >= 1"));
    }
    if n_seeds > n {
        return Err(Error::param(format!("n_seeds {n_seeds} exceeds the {n} available rows")));
    }
    let x = &f.values;
    let mut first = 0;
    let mut best = f64::NEG_INFINITY;
    for i in 0..n {
        let norm2: f64 = x.row(i).iter().map(|v| v * v).sum();
        if norm2 > best {
            best = norm2;
            first = i;
        }
    }

    let mut chosen = vec![false; n];
    let mut mindist = vec![f64::INFINITY; n];
    let mut seeds = Vec::with_capacity(n_seeds);
    let mut next = first;
    loop {
        seeds.push(next);
        chosen[next] = true;
        if seeds.len() == n_seeds {
            break;
        }
        let seed_row = x.row(next);
        for (i, d) in mindist.iter_mut().enumerate() {
            *d = d.min(squared_distance(seed_row, x.row(i)));
        }
        let mut arg = usize::MAX;
        for i in (0..n).filter(|&i| !chosen[i]) {
            if arg == usize::MAX || mindist[i] > mindist[arg] {
                arg = i;
            }
        }
        next = arg;
    }
    Ok(seeds)
}

/// For each seed, the sorted segments with cosine similarity `>= tau_sim` to
/// it. The seed itself is always included.
pub fn salient_regions(a: &AffinityMatrix, seeds: &[usize], tau_sim: f64) -> Vec<Vec<usize>> {
    seeds
        .par_iter()
        .map(|&s| {
            let row = a.values.row(s);
            (0..row.len()).filter(|&j| j == s || row[j] >= tau_sim).collect()
        })
        .collect()
}

/// Mean cosine similarity over all ordered pairs of `mask` (diagonal included)
/// times the fraction of mesh vertices the mask covers.
pub fn maskness_score(mask: &[usize], a: &AffinityMatrix, seg: &SegmentGraph) -> Result<f64> {
    if mask.is_empty() {
        return Err(Error::param("maskness of an empty mask"));
    }
    let mut total = 0.0;
    for &i in mask {
        let row = a.values.row(i);
        total += mask.iter().map(|&j| row[j]).sum::<f64>();
    }
    let mean = total / (mask.len() * mask.len()) as f64;
    let verts: usize = mask.iter().map(|&s| seg.segment_size(s)).sum();
    Ok(mean * verts as f64 / seg.num_vertices() as f64)
}

/// Greedy non-maximum suppression over sorted vertex sets. Returns the indices
/// of the kept masks in descending score order (ties by input order).
pub fn nms(masks: &[Vec<usize>], scores: &[f64], nms_iou: f64, max_kept: usize) -> Vec<usize> {
    assert_eq!(masks.len(), scores.len(), "masks and scores differ in length");
    let mut order: Vec<usize> = (0..masks.len()).collect();
    order.sort_by(|&i, &j| scores[j].total_cmp(&scores[i]));
    let mut kept: Vec<usize> = Vec::new();
    for i in order {
        if kept.len() == max_kept {
            break;
        }
        if kept.iter().all(|&k| set_iou(&masks[i], &masks[k]) < nms_iou) {
            kept.push(i);
        }
    }
    kept
}

/// Seeds, regions, maskness and NMS end to end. Confidences are the maskness
/// scores mapped monotonically onto `(0, 1]` by `(1 + s) / (1 + s_max)`.
pub fn freemask_generate(f: &FeatureMatrix, seg: &SegmentGraph, params: &FreeMaskParams) -> Result<PseudoMaskSet> {
    params.validate()?;
    let n = f.num_segments();
    if n != seg.num_segments() {
        return Err(Error::DimensionMismatch(format!(
            "{n} feature rows for {} segments",
            seg.num_segments()
        )));
    }
    if n == 0 {
        return Err(Error::InvalidData("no segments".into()));
    }
    let a = cosine_similarity(f);
    debug_assert_eq!(a.kind, AffinityKind::RawCosine);
    let seeds = farthest_point_sampling(f, params.n_seeds.min(n))?;
    let regions = salient_regions(&a, &seeds, params.tau_sim);
    let scores = regions
        .iter()
        .map(|r| maskness_score(r, &a, seg))
        .collect::<Result<Vec<_>>>()?;
    let vertex_sets: Vec<Vec<usize>> = regions.par_iter().map(|r| seg.vertices_of(r)).collect();
    let kept = nms(&vertex_sets, &scores, params.nms_iou, params.max_kept);

    let s_max = kept.iter().map(|&i| scores[i]).fold(f64::NEG_INFINITY, f64::max);
    let masks = kept
        .into_iter()
        .map(|i| {
            InstanceMask::new(
                regions[i].clone(),
                seg,
                (1.0 + scores[i]) / (1.0 + s_max),
                MaskSource::FreeMask,
            )
        })
        .collect::<Result<_>>()?;
    Ok(PseudoMaskSet { masks })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::Modality;

    fn chain(n: usize) -> SegmentGraph {
        SegmentGraph::from_parts((0..n as u32).collect(), (1..n as u32).map(|i| (i - 1, i)).collect()).unwrap()
    }

    #[test]
    fn fps_start_and_exhaustion() {
        let f = FeatureMatrix::from_rows(&[[1.0, 0.0], [0.0, 3.0], [2.0, 2.0], [0.1, 0.1]], Modality::Other).unwrap();
        assert_eq!(farthest_point_sampling(&f, 1).unwrap(), vec![1]);
        let mut all = farthest_point_sampling(&f, 4).unwrap();
        all.sort_unstable();
        assert_eq!(all, vec![0, 1, 2, 3]);
        assert!(farthest_point_sampling(&f, 0).is_err());
        assert!(farthest_point_sampling(&f, 5).is_err());
    }

    #[test]
    fn fps_with_duplicate_rows_never_repeats() {
        let f = FeatureMatrix::from_rows(&[[1.0, 1.0]; 5], Modality::Other).unwrap();
        assert_eq!(farthest_point_sampling(&f, 5).unwrap(), vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn orthogonal_regions_are_singletons() {
        let f = FeatureMatrix::from_rows(&[[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]], Modality::Other).unwrap();
        let a = cosine_similarity(&f);
        assert_eq!(salient_regions(&a, &[2, 0], 0.5), vec![vec![2], vec![0]]);
    }

    #[test]
    fn maskness_bounds() {
        let seg = chain(4);
        let f = FeatureMatrix::from_rows(&[[1.0, 2.0]; 4], Modality::Other).unwrap();
        let a = cosine_similarity(&f);
        assert!((maskness_score(&[0, 1, 2, 3], &a, &seg).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(maskness_score(&[2], &a, &seg).unwrap(), 0.25);
        assert!(maskness_score(&[], &a, &seg).is_err());
    }

    #[test]
    fn nms_examples() {
        let m = vec![vec![0, 1, 2], vec![0, 1, 2]];
        assert_eq!(nms(&m, &[0.2, 0.7], 0.5, 10), vec![1]);
        let d = vec![vec![0], vec![1], vec![2]];
        assert_eq!(nms(&d, &[0.1, 0.3, 0.2], 0.5, 10), vec![1, 2, 0]);
        assert_eq!(nms(&d, &[0.1, 0.3, 0.2], 0.5, 2), vec![1, 2]);
    }

    #[test]
    fn homogeneous_scene_gives_one_full_mask() {
        let seg = chain(6);
        let f = FeatureMatrix::from_rows(&[[0.2, 0.9]; 6], Modality::Other).unwrap();
        let params = FreeMaskParams {
            n_seeds: 4,
            ..Default::default()
        };
        let set = freemask_generate(&f, &seg, &params).unwrap();
        assert_eq!(set.segment_sets(), vec![vec![0, 1, 2, 3, 4, 5]]);
        assert_eq!(set.masks[0].confidence, 1.0);
    }
}
