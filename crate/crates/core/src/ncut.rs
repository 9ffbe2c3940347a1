//! Masked normalized cut over segment affinities.
//!
//! Each iteration restricts the affinity matrix to the segments not yet
//! claimed by an accepted mask, thresholds it into a `{ε, 1}` saliency graph,
//! takes the second-smallest generalized eigenvector of `(D - W) v = λ D v`,
//! splits it at its mean, flips the split if the foreground holds more than
//! half of the active segments, keeps one connected component of the
//! foreground and accepts it as a mask. Iteration stops at `max_instances`,
//! when fewer than two segments remain, or at the first candidate with fewer
//! than `min_foreground_segments` segments.

use serde::{Deserialize, Serialize};

use crate::eigen::{self, Eigenpair};
use crate::error::{Error, Result};
use crate::features::{cosine_similarity, threshold_saliency_on, AffinityKind, AffinityMatrix, FeatureMatrix};
use crate::masks::{InstanceMask, MaskSource, PseudoMaskSet};
use crate::matrix::Matrix;
use crate::overseg::SegmentGraph;

/// Which connected component of a disconnected foreground survives.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Separation {
    /// Component holding the largest eigenvector entry.
    #[default]
    Max,
    /// Component with the highest mean eigenvector entry.
    Avg,
    /// Component covering the most vertices.
    Largest,
    /// Keep the whole foreground.
    #[serde(rename = "none")]
    NoSep,
}

impl std::str::FromStr for Separation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "max" => Ok(Separation::Max),
            "avg" => Ok(Separation::Avg),
            "largest" => Ok(Separation::Largest),
            "none" | "nosep" => Ok(Separation::NoSep),
            _ => Err(Error::param(format!("unknown separation '{s}' (max|avg|largest|none)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NCutParams {
    pub tau_cut: f64,
    pub epsilon: f64,
    pub max_instances: usize,
    pub min_foreground_segments: usize,
    pub separation: Separation,
}

impl Default for NCutParams {
    fn default() -> Self {
        NCutParams {
            tau_cut: 0.65,
            epsilon: crate::features::DEFAULT_EPSILON,
            max_instances: 20,
            min_foreground_segments: 8,
            separation: Separation::Max,
        }
    }
}

impl NCutParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau_cut > 0.0 && self.tau_cut < 1.0) {
            return Err(Error::param(format!("tau_cut must lie in (0,1), got {}", self.tau_cut)));
        }
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return Err(Error::param(format!("epsilon must lie in (0,1), got {}", self.epsilon)));
        }
        if self.max_instances < 1 {
            return Err(Error::param("max_instances must be >= 1"));
        }
        if self.min_foreground_segments < 1 {
            return Err(Error::param("min_foreground_segments must be >= 1"));
        }
        Ok(())
    }
}

/// Second-smallest generalized eigenpair of the saliency graph restricted to
/// `active` (indices into `w`).
pub fn second_smallest_generalized_eigvec(w: &AffinityMatrix, active: &[usize]) -> Result<Eigenpair> {
    if active.len() < 2 {
        return Err(Error::param(format!(
            "need at least 2 active segments, got {}",
            active.len()
        )));
    }
    eigen::second_smallest_generalized(&w.values.select(active))
}

/// `m_i = v_i >= mean(v)`.
pub fn bipartition(v: &[f64]) -> Vec<bool> {
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    v.iter().map(|&x| x >= mean).collect()
}

/// Flips `m` and negates `v` when more than half of the entries are
/// foreground. Returns whether it flipped.
pub fn invert_if_majority(m: &mut [bool], v: &mut [f64]) -> bool {
    assert_eq!(m.len(), v.len(), "mask and eigenvector lengths differ");
    let count = m.iter().filter(|&&b| b).count();
    if 2 * count > m.len() {
        m.iter_mut().for_each(|b| *b = !*b);
        v.iter_mut().for_each(|x| *x = -*x);
        true
    } else {
        false
    }
}

/// Connected components of the foreground under segment adjacency, as lists
/// of positions into `segments`, ordered by their first position.
fn foreground_components(m: &[bool], segments: &[usize], seg: &SegmentGraph) -> Vec<Vec<usize>> {
    let mut position = vec![usize::MAX; seg.num_segments()];
    for (p, &s) in segments.iter().enumerate() {
        if m[p] {
            position[s] = p;
        }
    }
    let mut seen = vec![false; segments.len()];
    let mut comps = Vec::new();
    let mut stack = Vec::new();
    for start in 0..segments.len() {
        if !m[start] || seen[start] {
            continue;
        }
        seen[start] = true;
        stack.push(start);
        let mut comp = Vec::new();
        while let Some(p) = stack.pop() {
            comp.push(p);
            for &nb in seg.neighbors(segments[p]) {
                let q = position[nb as usize];
                if q != usize::MAX && !seen[q] {
                    seen[q] = true;
                    stack.push(q);
                }
            }
        }
        comp.sort_unstable();
        comps.push(comp);
    }
    comps
}

/// Restricts foreground `m` (over the segments listed in `segments`) to one
/// connected component chosen by `strategy`.
pub fn separate_components(
    m: &[bool],
    v: &[f64],
    segments: &[usize],
    seg: &SegmentGraph,
    strategy: Separation,
) -> Result<Vec<bool>> {
    if m.len() != v.len() || m.len() != segments.len() {
        return Err(Error::DimensionMismatch(format!(
            "mask {}, eigenvector {}, segments {}",
            m.len(),
            v.len(),
            segments.len()
        )));
    }
    if !m.iter().any(|&b| b) {
        return Err(Error::InvalidData("empty foreground".into()));
    }
    if strategy == Separation::NoSep {
        return Ok(m.to_vec());
    }
    let comps = foreground_components(m, segments, seg);
    if comps.len() == 1 {
        return Ok(m.to_vec());
    }
    let pick = |score: &dyn Fn(&[usize]) -> f64| -> usize {
        let mut best = 0;
        let mut best_score = score(&comps[0]);
        for (i, c) in comps.iter().enumerate().skip(1) {
            let s = score(c);
            if s > best_score {
                best = i;
                best_score = s;
            }
        }
        best
    };
    let chosen = match strategy {
        Separation::Max => {
            let mut arg = usize::MAX;
            for p in (0..m.len()).filter(|&p| m[p]) {
                if arg == usize::MAX || v[p] > v[arg] {
                    arg = p;
                }
            }
            comps.iter().position(|c| c.binary_search(&arg).is_ok()).expect("argmax lies in a component")
        }
        Separation::Avg => pick(&|c| c.iter().map(|&p| v[p]).sum::<f64>() / c.len() as f64),
        Separation::Largest => pick(&|c| c.iter().map(|&p| seg.segment_size(segments[p])).sum::<usize>() as f64),
        Separation::NoSep => unreachable!(),
    };
    let mut out = vec![false; m.len()];
    for &p in &comps[chosen] {
        out[p] = true;
    }
    Ok(out)
}

/// Normalized cut cost `cut(A,B)/assoc(A,V) + cut(A,B)/assoc(B,V)` of the
/// bipartition `mask` / complement.
pub fn ncut_cost(mask: &[bool], w: &Matrix) -> Result<f64> {
    if mask.len() != w.rows() || !w.is_square() {
        return Err(Error::DimensionMismatch(format!(
            "mask of {} for a {}x{} matrix",
            mask.len(),
            w.rows(),
            w.cols()
        )));
    }
    let count = mask.iter().filter(|&&b| b).count();
    if count == 0 || count == mask.len() {
        return Err(Error::param("ncut_cost needs a proper non-empty subset"));
    }
    let (mut cut, mut assoc_a, mut assoc_b) = (0.0, 0.0, 0.0);
    for i in 0..mask.len() {
        let row = w.row(i);
        for (j, &x) in row.iter().enumerate() {
            if mask[i] {
                assoc_a += x;
                if !mask[j] {
                    cut += x;
                }
            } else {
                assoc_b += x;
            }
        }
    }
    Ok(cut / assoc_a + cut / assoc_b)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    MaxInstances,
    TooFewActive,
    EmptyForeground,
    BelowMinForeground,
}

/// Diagnostics for one iteration of [`masked_ncut_traced`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IterationTrace {
    pub iteration: usize,
    pub n_active: usize,
    /// `None` when the saliency graph was uniform and no solve was needed.
    pub lambda: Option<f64>,
    /// `‖(D - W) v - λ D v‖ / ‖v‖` of the solve.
    pub residual: Option<f64>,
    pub foreground_before_inversion: usize,
    pub inverted: bool,
    pub foreground_after_inversion: usize,
    pub kept: usize,
    pub accepted: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NCutTrace {
    pub iterations: Vec<IterationTrace>,
    pub stop: StopReason,
}

fn is_uniform(w: &Matrix) -> bool {
    let first = w.as_slice()[0];
    w.as_slice().iter().all(|&x| x == first)
}

pub fn masked_ncut(affinity: &AffinityMatrix, seg: &SegmentGraph, params: &NCutParams) -> Result<PseudoMaskSet> {
    masked_ncut_traced(affinity, seg, params).map(|(set, _)| set)
}

/// Runs masked normalized cut directly on segment features (cosine affinity).
pub fn masked_ncut_features(f: &FeatureMatrix, seg: &SegmentGraph, params: &NCutParams) -> Result<PseudoMaskSet> {
    masked_ncut(&cosine_similarity(f), seg, params)
}

pub fn masked_ncut_traced(
    affinity: &AffinityMatrix,
    seg: &SegmentGraph,
    params: &NCutParams,
) -> Result<(PseudoMaskSet, NCutTrace)> {
    params.validate()?;
    if affinity.kind != AffinityKind::RawCosine {
        return Err(Error::param("masked_ncut expects a raw cosine affinity"));
    }
    let n = seg.num_segments();
    if n < 2 {
        return Err(Error::InvalidData(format!("need at least 2 segments, got {n}")));
    }
    if affinity.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "{}x{} affinity for {n} segments",
            affinity.len(),
            affinity.len()
        )));
    }

    let mut active: Vec<usize> = (0..n).collect();
    let mut masks = Vec::new();
    let mut iterations = Vec::new();
    let mut stop = StopReason::MaxInstances;

    for iteration in 0..params.max_instances {
        if active.len() < 2 {
            stop = StopReason::TooFewActive;
            break;
        }
        let w = threshold_saliency_on(affinity, &active, params.tau_cut, params.epsilon);
        let (mut v, mut m, lambda, residual) = if is_uniform(&w) {
            // no salient structure: every split is equally good, treat as all-foreground
            let k = active.len();
            (vec![1.0 / (k as f64).sqrt(); k], vec![true; k], None, None)
        } else {
            let pair = eigen::second_smallest_generalized(&w)?;
            let r = eigen::generalized_residual(&w, pair.lambda, &pair.vector);
            let m = bipartition(&pair.vector);
            (pair.vector, m, Some(pair.lambda), Some(r))
        };

        let before = m.iter().filter(|&&b| b).count();
        let inverted = invert_if_majority(&mut m, &mut v);
        let after = m.iter().filter(|&&b| b).count();
        let mut trace = IterationTrace {
            iteration,
            n_active: active.len(),
            lambda,
            residual,
            foreground_before_inversion: before,
            inverted,
            foreground_after_inversion: after,
            kept: 0,
            accepted: false,
        };
        if after == 0 {
            iterations.push(trace);
            stop = StopReason::EmptyForeground;
            break;
        }

        let kept = separate_components(&m, &v, &active, seg, params.separation)?;
        let fg: Vec<usize> = active.iter().zip(&kept).filter(|(_, &k)| k).map(|(&s, _)| s).collect();
        trace.kept = fg.len();
        if fg.len() < params.min_foreground_segments {
            iterations.push(trace);
            stop = StopReason::BelowMinForeground;
            break;
        }
        trace.accepted = true;
        iterations.push(trace);
        masks.push(InstanceMask::new(
            fg,
            seg,
            1.0 / (1.0 + iteration as f64),
            MaskSource::Ncut(iteration),
        )?);
        active = active.into_iter().zip(kept).filter(|(_, k)| !k).map(|(s, _)| s).collect();
    }

    Ok((PseudoMaskSet { masks }, NCutTrace { iterations, stop }))
}
