//! Densifying a pseudo-mask set with confident external predictions.
//!
//! The `top_k` most confident candidates are screened in descending
//! confidence order against the growing result set. A candidate enters only if
//! its largest IoU with every mask already present is at most
//! `min_novelty_iou`. Existing masks are never removed.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::masks::{set_iou, InstanceMask, MaskSource, PseudoMaskSet};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IouLevel {
    #[default]
    Segment,
    Vertex,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MergePolicy {
    pub top_k: usize,
    pub min_novelty_iou: f64,
    pub level: IouLevel,
}

impl Default for MergePolicy {
    fn default() -> Self {
        MergePolicy {
            top_k: 50,
            min_novelty_iou: 0.3,
            level: IouLevel::Segment,
        }
    }
}

impl MergePolicy {
    pub fn validate(&self) -> Result<()> {
        if self.top_k < 1 {
            return Err(Error::param("top_k must be >= 1"));
        }
        if !(0.0..1.0).contains(&self.min_novelty_iou) {
            return Err(Error::param(format!(
                "min_novelty_iou must lie in [0,1), got {}",
                self.min_novelty_iou
            )));
        }
        Ok(())
    }
}

pub fn segment_iou(a: &InstanceMask, b: &InstanceMask) -> f64 {
    set_iou(&a.segment_ids, &b.segment_ids)
}

pub fn vertex_iou(a: &InstanceMask, b: &InstanceMask) -> f64 {
    set_iou(&a.vertex_ids, &b.vertex_ids)
}

/// Returns `existing` followed by the accepted candidates, each retagged as
/// `merged(cycle)`.
pub fn merge_predictions(
    existing: &PseudoMaskSet,
    candidates: &[InstanceMask],
    policy: &MergePolicy,
    cycle: usize,
) -> Result<PseudoMaskSet> {
    policy.validate()?;
    if let Some((i, c)) = candidates.iter().enumerate().find(|(_, c)| !c.confidence.is_finite()) {
        return Err(Error::InvalidData(format!(
            "candidate {i} has non-finite confidence {}",
            c.confidence
        )));
    }
    let iou = match policy.level {
        IouLevel::Segment => segment_iou,
        IouLevel::Vertex => vertex_iou,
    };
    let mut order: Vec<usize> = (0..candidates.len()).collect();
    order.sort_by(|&i, &j| candidates[j].confidence.total_cmp(&candidates[i].confidence));
    order.truncate(policy.top_k);

    let mut out = existing.clone();
    for i in order {
        let c = &candidates[i];
        let novel = out.masks.iter().all(|m| iou(c, m) <= policy.min_novelty_iou);
        if novel {
            out.masks.push(InstanceMask {
                source: MaskSource::Merged(cycle),
                ..c.clone()
            });
        }
    }
    Ok(out)
}
