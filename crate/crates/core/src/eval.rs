//! Class-agnostic average precision over mesh vertices.
//!
//! Predictions are visited in descending confidence (ties keep input order).
//! At each IoU threshold a prediction is a true positive when some unmatched
//! ground-truth instance overlaps it by at least the threshold; the best such
//! instance is consumed. Precision is made non-increasing from the right and
//! integrated over every recall step. Vertices labelled 0 in the ground truth
//! are dropped from both sides of every IoU.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io;
use crate::masks::ScoredMask;

/// Per-vertex instance ids; 0 marks unannotated vertices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroundTruthSet {
    ids: Vec<u64>,
    /// Distinct non-zero ids in ascending order.
    instance_ids: Vec<u64>,
    /// Instance index per vertex, `u32::MAX` for ignored vertices.
    instance_of: Vec<u32>,
    instance_sizes: Vec<usize>,
}

impl GroundTruthSet {
    pub fn new(ids: Vec<u64>) -> Self {
        let mut instance_ids: Vec<u64> = ids.iter().copied().filter(|&i| i != 0).collect();
        instance_ids.sort_unstable();
        instance_ids.dedup();
        let mut instance_sizes = vec![0; instance_ids.len()];
        let instance_of = ids
            .iter()
            .map(|&id| {
                if id == 0 {
                    u32::MAX
                } else {
                    let k = instance_ids.binary_search(&id).expect("id collected above");
                    instance_sizes[k] += 1;
                    k as u32
                }
            })
            .collect();
        GroundTruthSet {
            ids,
            instance_ids,
            instance_of,
            instance_sizes,
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Ok(Self::new(io::read_integer_lines(path)?))
    }

    pub fn num_vertices(&self) -> usize {
        self.ids.len()
    }

    pub fn num_instances(&self) -> usize {
        self.instance_ids.len()
    }

    pub fn ids(&self) -> &[u64] {
        &self.ids
    }

    pub fn instance_ids(&self) -> &[u64] {
        &self.instance_ids
    }

    /// Sorted vertices of instance `k` (an index into [`Self::instance_ids`]).
    pub fn instance_vertices(&self, k: usize) -> Vec<usize> {
        (0..self.ids.len()).filter(|&v| self.instance_of[v] == k as u32).collect()
    }

    pub fn ignored_vertices(&self) -> Vec<usize> {
        (0..self.ids.len()).filter(|&v| self.ids[v] == 0).collect()
    }
}

/// IoU of two vertex sets after removing `ignore` from both; 0 for an empty
/// union. Inputs need not be sorted.
pub fn mask_iou(a: &[usize], b: &[usize], ignore: &[usize]) -> f64 {
    use std::collections::BTreeSet;
    let ignore: BTreeSet<usize> = ignore.iter().copied().collect();
    let a: BTreeSet<usize> = a.iter().copied().filter(|v| !ignore.contains(v)).collect();
    let b: BTreeSet<usize> = b.iter().copied().filter(|v| !ignore.contains(v)).collect();
    let inter = a.intersection(&b).count();
    let union = a.len() + b.len() - inter;
    if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    }
}

/// `[0.50, 0.55, ..., 0.95]`.
pub fn mean_ap_thresholds() -> Vec<f64> {
    (0..10).map(|i| (50 + 5 * i) as f64 / 100.0).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdCurve {
    pub threshold: f64,
    pub ap: f64,
    pub precision: Vec<f64>,
    pub recall: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct APReport {
    pub ap25: f64,
    pub ap50: f64,
    pub ap_mean: f64,
    /// One curve per threshold: 0.25 first, then 0.50 through 0.95.
    pub curves: Vec<ThresholdCurve>,
}

/// IoU of every prediction against every GT instance, `[pred][gt]`.
fn iou_table(preds: &[ScoredMask], gt: &GroundTruthSet) -> Result<Vec<Vec<f64>>> {
    let k = gt.num_instances();
    let mut table = Vec::with_capacity(preds.len());
    let mut inter = vec![0usize; k];
    for (i, p) in preds.iter().enumerate() {
        if p.vertices.is_empty() {
            return Err(Error::InvalidData(format!("prediction {i} has no vertices")));
        }
        if !p.confidence.is_finite() {
            return Err(Error::InvalidData(format!("prediction {i} has non-finite confidence")));
        }
        let mut verts = p.vertices.clone();
        verts.sort_unstable();
        verts.dedup();
        inter.iter_mut().for_each(|x| *x = 0);
        let mut size = 0usize;
        for &v in &verts {
            if v >= gt.num_vertices() {
                return Err(Error::DimensionMismatch(format!(
                    "prediction {i} covers vertex {v} but the ground truth has {} vertices",
                    gt.num_vertices()
                )));
            }
            let inst = gt.instance_of[v];
            if inst != u32::MAX {
                size += 1;
                inter[inst as usize] += 1;
            }
        }
        table.push(
            (0..k)
                .map(|g| {
                    let union = size + gt.instance_sizes[g] - inter[g];
                    if union == 0 {
                        0.0
                    } else {
                        inter[g] as f64 / union as f64
                    }
                })
                .collect(),
        );
    }
    Ok(table)
}

/// True-positive flags at threshold `t` for predictions visited in `order`.
fn match_at(ious: &[Vec<f64>], order: &[usize], n_gt: usize, t: f64) -> Vec<bool> {
    let mut taken = vec![false; n_gt];
    order
        .iter()
        .map(|&p| {
            let mut best: Option<usize> = None;
            for g in 0..n_gt {
                let iou = ious[p][g];
                if !taken[g] && iou >= t && best.is_none_or(|b| iou > ious[p][b]) {
                    best = Some(g);
                }
            }
            if let Some(g) = best {
                taken[g] = true;
            }
            best.is_some()
        })
        .collect()
}

/// All-point interpolated AP of a ranked list of TP flags.
fn integrate(tp: &[bool], n_gt: usize, threshold: f64) -> ThresholdCurve {
    let mut precision = Vec::with_capacity(tp.len());
    let mut recall = Vec::with_capacity(tp.len());
    let mut hits = 0usize;
    for (i, &t) in tp.iter().enumerate() {
        hits += t as usize;
        precision.push(hits as f64 / (i + 1) as f64);
        recall.push(hits as f64 / n_gt as f64);
    }
    let mut envelope = precision.clone();
    for i in (0..envelope.len().saturating_sub(1)).rev() {
        envelope[i] = envelope[i].max(envelope[i + 1]);
    }
    let mut ap = 0.0;
    let mut prev_recall = 0.0;
    for (r, p) in recall.iter().zip(&envelope) {
        ap += (r - prev_recall) * p;
        prev_recall = *r;
    }
    ThresholdCurve {
        threshold,
        ap,
        precision,
        recall,
    }
}

fn report_from(curve_at: impl Fn(f64) -> ThresholdCurve) -> APReport {
    let mut curves = vec![curve_at(0.25)];
    curves.extend(mean_ap_thresholds().into_iter().map(&curve_at));
    let ap_mean = curves[1..].iter().map(|c| c.ap).sum::<f64>() / (curves.len() - 1) as f64;
    APReport {
        ap25: curves[0].ap,
        ap50: curves[1].ap,
        ap_mean,
        curves,
    }
}

fn descending_confidence(confidences: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..confidences.len()).collect();
    order.sort_by(|&i, &j| confidences[j].total_cmp(&confidences[i]));
    order
}

pub fn evaluate_ap(preds: &[ScoredMask], gt: &GroundTruthSet) -> Result<APReport> {
    evaluate_pooled(&[(preds, gt)])
}

/// Matches within each scene, then ranks all predictions of all scenes
/// together against the total GT count.
fn evaluate_pooled(scenes: &[(&[ScoredMask], &GroundTruthSet)]) -> Result<APReport> {
    let n_gt: usize = scenes.iter().map(|(_, g)| g.num_instances()).sum();
    if n_gt == 0 {
        return Err(Error::InvalidData("ground truth has no instances".into()));
    }
    let tables = scenes
        .iter()
        .map(|(p, g)| iou_table(p, g))
        .collect::<Result<Vec<_>>>()?;
    let orders: Vec<Vec<usize>> = scenes
        .iter()
        .map(|(p, _)| descending_confidence(&p.iter().map(|m| m.confidence).collect::<Vec<_>>()))
        .collect();
    // global rank: confidence descending, then scene order, then input order
    let mut global: Vec<(usize, usize)> = Vec::new();
    for (s, (p, _)) in scenes.iter().enumerate() {
        global.extend((0..p.len()).map(|i| (s, i)));
    }
    global.sort_by(|&(sa, ia), &(sb, ib)| scenes[sb].0[ib].confidence.total_cmp(&scenes[sa].0[ia].confidence));

    Ok(report_from(|t| {
        let flags: Vec<Vec<bool>> = scenes
            .iter()
            .enumerate()
            .map(|(s, (_, g))| {
                let mut per_pred = vec![false; orders[s].len()];
                for (&p, tp) in orders[s].iter().zip(match_at(&tables[s], &orders[s], g.num_instances(), t)) {
                    per_pred[p] = tp;
                }
                per_pred
            })
            .collect();
        let ranked: Vec<bool> = global.iter().map(|&(s, i)| flags[s][i]).collect();
        integrate(&ranked, n_gt, t)
    }))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalMode {
    /// One ranking over all scenes' predictions.
    #[default]
    Pooled,
    /// Mean of the per-scene APs.
    PerScene,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneScore {
    pub scene: String,
    pub ap25: f64,
    pub ap50: f64,
    pub ap_mean: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub mode: EvalMode,
    pub ap25: f64,
    pub ap50: f64,
    pub ap_mean: f64,
    pub scenes: Vec<SceneScore>,
    /// Pooled curves; empty in per-scene mode.
    pub curves: Vec<ThresholdCurve>,
}

pub struct SceneInput<'a> {
    pub name: &'a str,
    pub preds: &'a [ScoredMask],
    pub gt: &'a GroundTruthSet,
}

pub fn evaluate_scenes(scenes: &[SceneInput<'_>], mode: EvalMode) -> Result<EvalSummary> {
    let per_scene = scenes
        .iter()
        .map(|s| {
            evaluate_ap(s.preds, s.gt)
                .map(|r| SceneScore {
                    scene: s.name.to_string(),
                    ap25: r.ap25,
                    ap50: r.ap50,
                    ap_mean: r.ap_mean,
                })
                .map_err(|e| Error::InvalidData(format!("scene {}: {e}", s.name)))
        })
        .collect::<Result<Vec<_>>>()?;
    match mode {
        EvalMode::Pooled => {
            let pairs: Vec<(&[ScoredMask], &GroundTruthSet)> = scenes.iter().map(|s| (s.preds, s.gt)).collect();
            let r = evaluate_pooled(&pairs)?;
            Ok(EvalSummary {
                mode,
                ap25: r.ap25,
                ap50: r.ap50,
                ap_mean: r.ap_mean,
                scenes: per_scene,
                curves: r.curves,
            })
        }
        EvalMode::PerScene => {
            if per_scene.is_empty() {
                return Err(Error::InvalidData("no scenes to evaluate".into()));
            }
            let n = per_scene.len() as f64;
            let mean = |f: fn(&SceneScore) -> f64| per_scene.iter().map(f).sum::<f64>() / n;
            Ok(EvalSummary {
                mode,
                ap25: mean(|s| s.ap25),
                ap50: mean(|s| s.ap50),
                ap_mean: mean(|s| s.ap_mean),
                scenes: per_scene,
                curves: Vec::new(),
            })
        }
    }
}

/// Fixed-width text table with one row per scene and an overall row.
pub fn format_table(summary: &EvalSummary) -> String {
    let width = summary
        .scenes
        .iter()
        .map(|s| s.scene.len())
        .chain(std::iter::once("overall".len()))
        .max()
        .unwrap_or(7);
    let mut out = String::new();
    let _ = writeln!(out, "{:<width$}  {:>7}  {:>7}  {:>7}", "scene", "AP@25", "AP@50", "AP");
    let mut row = |name: &str, a: f64, b: f64, c: f64| {
        let _ = writeln!(
            out,
            "{:<width$}  {:>7.2}  {:>7.2}  {:>7.2}",
            name,
            100.0 * a,
            100.0 * b,
            100.0 * c
        );
    };
    for s in &summary.scenes {
        row(&s.scene, s.ap25, s.ap50, s.ap_mean);
    }
    row("overall", summary.ap25, summary.ap50, summary.ap_mean);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pred(v: &[usize], c: f64) -> ScoredMask {
        ScoredMask {
            vertices: v.to_vec(),
            confidence: c,
        }
    }

    #[test]
    fn iou_examples() {
        assert_eq!(mask_iou(&[1, 2], &[2, 1], &[]), 1.0);
        assert_eq!(mask_iou(&[1, 2], &[3], &[]), 0.0);
        assert_eq!(mask_iou(&[1, 2], &[2, 3], &[]), 1.0 / 3.0);
        assert_eq!(mask_iou(&[1, 2], &[2, 3], &[3]), 0.5);
        assert_eq!(mask_iou(&[], &[], &[]), 0.0);
    }

    #[test]
    fn perfect_and_empty() {
        let gt = GroundTruthSet::new(vec![1, 1, 2, 2, 0, 3]);
        let perfect = vec![pred(&[0, 1], 0.2), pred(&[2, 3], 0.9), pred(&[5], 0.5)];
        let r = evaluate_ap(&perfect, &gt).unwrap();
        assert_eq!((r.ap25, r.ap50, r.ap_mean), (1.0, 1.0, 1.0));
        let r = evaluate_ap(&[], &gt).unwrap();
        assert_eq!((r.ap25, r.ap50, r.ap_mean), (0.0, 0.0, 0.0));
    }

    #[test]
    fn ignored_vertices_do_not_count() {
        let gt = GroundTruthSet::new(vec![1, 1, 0, 0]);
        let r = evaluate_ap(&[pred(&[0, 1, 2, 3], 1.0)], &gt).unwrap();
        assert_eq!(r.ap_mean, 1.0);
    }

    #[test]
    fn errors() {
        let gt = GroundTruthSet::new(vec![1, 1]);
        assert!(evaluate_ap(&[pred(&[], 1.0)], &gt).is_err());
        assert!(evaluate_ap(&[pred(&[5], 1.0)], &gt).is_err());
        assert!(evaluate_ap(&[], &GroundTruthSet::new(vec![0, 0])).is_err());
    }

    #[test]
    fn false_positive_first_halves_precision() {
        let gt = GroundTruthSet::new(vec![1, 1, 2, 2]);
        // FP at rank 1, TP at rank 2: recall 0.5 reached at precision 0.5
        let r = evaluate_ap(&[pred(&[0, 2], 0.9), pred(&[0, 1], 0.8)], &gt).unwrap();
        assert_eq!(r.ap50, 0.25);
        assert_eq!(r.ap25, 0.5);
    }

    #[test]
    fn table_has_overall_row() {
        let gt = GroundTruthSet::new(vec![1, 2]);
        let preds = vec![pred(&[0], 1.0)];
        let s = evaluate_scenes(
            &[SceneInput {
                name: "scene0000",
                preds: &preds,
                gt: &gt,
            }],
            EvalMode::Pooled,
        )
        .unwrap();
        let t = format_table(&s);
        assert!(t.lines().last().unwrap().starts_with("overall"));
        assert_eq!(t.lines().count(), 3);
    }
}
