//! Instance masks, mask sets and their on-disk forms.
//!
//! The pseudo-mask JSON holds `{params, masks: [{segment_ids, confidence, source}]}`.
//! Vertex extents are not stored; they are re-derived from the segment graph on
//! load. The benchmark export writes an index file of
//! `relative_mask_path confidence 1` lines plus one `0/1`-per-vertex mask file
//! per instance.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::io;
use crate::overseg::SegmentGraph;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MaskSource {
    /// Extracted by masked normalized cut at the given iteration.
    Ncut(usize),
    FreeMask,
    /// Accepted into the pseudo set during the given densification cycle.
    Merged(usize),
}

impl fmt::Display for MaskSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MaskSource::Ncut(i) => write!(f, "ncut:{i}"),
            MaskSource::FreeMask => f.write_str("freemask"),
            MaskSource::Merged(c) => write!(f, "merged:{c}"),
        }
    }
}

impl FromStr for MaskSource {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidData(format!("unknown mask source '{s}'"));
        if s == "freemask" {
            return Ok(MaskSource::FreeMask);
        }
        let (kind, n) = s.split_once(':').ok_or_else(bad)?;
        let n: usize = n.parse().map_err(|_| bad())?;
        match kind {
            "ncut" => Ok(MaskSource::Ncut(n)),
            "merged" => Ok(MaskSource::Merged(n)),
            _ => Err(bad()),
        }
    }
}

impl Serialize for MaskSource {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for MaskSource {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// `|a ∩ b| / |a ∪ b|` of two sorted, duplicate-free index lists; 0 when both are empty.
pub fn set_iou(a: &[usize], b: &[usize]) -> f64 {
    let (mut i, mut j, mut inter) = (0, 0, 0usize);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                inter += 1;
                i += 1;
                j += 1;
            }
        }
    }
    let union = a.len() + b.len() - inter;
    if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InstanceMask {
    /// Sorted, unique, non-empty.
    pub segment_ids: Vec<usize>,
    /// Sorted union of the member segments' vertices.
    pub vertex_ids: Vec<usize>,
    pub confidence: f64,
    pub source: MaskSource,
}

impl InstanceMask {
    pub fn new(mut segment_ids: Vec<usize>, seg: &SegmentGraph, confidence: f64, source: MaskSource) -> Result<Self> {
        segment_ids.sort_unstable();
        segment_ids.dedup();
        if segment_ids.is_empty() {
            return Err(Error::InvalidData("instance mask has no segments".into()));
        }
        if let Some(&s) = segment_ids.iter().find(|&&s| s >= seg.num_segments()) {
            return Err(Error::InvalidData(format!(
                "mask references segment {s} but the graph has {}",
                seg.num_segments()
            )));
        }
        if !confidence.is_finite() {
            return Err(Error::InvalidData(format!("non-finite mask confidence {confidence}")));
        }
        let vertex_ids = seg.vertices_of(&segment_ids);
        Ok(InstanceMask {
            segment_ids,
            vertex_ids,
            confidence,
            source,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct PseudoMaskSet {
    pub masks: Vec<InstanceMask>,
}

impl PseudoMaskSet {
    pub fn len(&self) -> usize {
        self.masks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.masks.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, InstanceMask> {
        self.masks.iter()
    }

    /// Segment-id sets, for order-free comparisons.
    pub fn segment_sets(&self) -> Vec<Vec<usize>> {
        self.masks.iter().map(|m| m.segment_ids.clone()).collect()
    }

    pub fn to_document(&self, params: serde_json::Value) -> MaskDocument {
        MaskDocument {
            params,
            masks: self
                .masks
                .iter()
                .map(|m| MaskRecord {
                    segment_ids: m.segment_ids.clone(),
                    confidence: m.confidence,
                    source: m.source,
                })
                .collect(),
        }
    }

    pub fn from_document(doc: &MaskDocument, seg: &SegmentGraph) -> Result<Self> {
        let masks = doc
            .masks
            .iter()
            .enumerate()
            .map(|(i, r)| {
                InstanceMask::new(r.segment_ids.clone(), seg, r.confidence, r.source)
                    .map_err(|e| Error::InvalidData(format!("mask {i}: {e}")))
            })
            .collect::<Result<_>>()?;
        Ok(PseudoMaskSet { masks })
    }

    pub fn save_json(&self, path: impl AsRef<Path>, params: serde_json::Value) -> Result<()> {
        let json = serde_json::to_string_pretty(&self.to_document(params)).expect("mask document serializes");
        io::write_atomic(path, json.as_bytes())
    }

    pub fn load_json(path: impl AsRef<Path>, seg: &SegmentGraph) -> Result<Self> {
        let path = path.as_ref();
        let doc = MaskDocument::load(path)?;
        Self::from_document(&doc, seg).map_err(|e| e.with_path(path))
    }

    /// Writes `<dir>/<scene>.txt` and `<dir>/pred_mask/<scene>_NNN.txt`.
    pub fn export_benchmark(&self, dir: impl AsRef<Path>, scene: &str, num_vertices: usize) -> Result<()> {
        let dir = dir.as_ref();
        let mut index = String::new();
        for (i, m) in self.masks.iter().enumerate() {
            let rel = format!("pred_mask/{scene}_{i:03}.txt");
            let mut bits = vec![b'0'; num_vertices];
            for &v in &m.vertex_ids {
                if v >= num_vertices {
                    return Err(Error::DimensionMismatch(format!(
                        "mask {i} covers vertex {v} but the mesh has {num_vertices}"
                    )));
                }
                bits[v] = b'1';
            }
            let mut body = Vec::with_capacity(num_vertices * 2);
            for b in bits {
                body.push(b);
                body.push(b'\n');
            }
            io::write_atomic(dir.join(&rel), &body)?;
            index.push_str(&format!("{rel} {} 1\n", m.confidence));
        }
        io::write_atomic(dir.join(format!("{scene}.txt")), index.as_bytes())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaskRecord {
    pub segment_ids: Vec<usize>,
    pub confidence: f64,
    pub source: MaskSource,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaskDocument {
    #[serde(default)]
    pub params: serde_json::Value,
    pub masks: Vec<MaskRecord>,
}

impl MaskDocument {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        serde_json::from_str(&io::read_to_string(path)?).map_err(|e| Error::format(path, e.to_string()))
    }
}

/// A vertex-level prediction read back from a benchmark export.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredMask {
    pub vertices: Vec<usize>,
    pub confidence: f64,
}

impl From<&InstanceMask> for ScoredMask {
    fn from(m: &InstanceMask) -> Self {
        ScoredMask {
            vertices: m.vertex_ids.clone(),
            confidence: m.confidence,
        }
    }
}

/// Reads an export index file and the mask files it references.
pub fn load_benchmark_export(index: impl AsRef<Path>, num_vertices: usize) -> Result<Vec<ScoredMask>> {
    let index = index.as_ref();
    let base = index.parent().unwrap_or_else(|| Path::new("."));
    let text = io::read_to_string(index)?;
    let mut out = Vec::new();
    for (ln, line) in text.lines().enumerate() {
        let toks: Vec<&str> = line.split_whitespace().collect();
        if toks.is_empty() {
            continue;
        }
        if toks.len() != 3 {
            return Err(Error::format(
                index,
                format!("line {}: expected 'path confidence 1', got '{line}'", ln + 1),
            ));
        }
        let confidence: f64 = toks[1]
            .parse()
            .map_err(|_| Error::format(index, format!("line {}: bad confidence '{}'", ln + 1, toks[1])))?;
        let mask_path = base.join(toks[0]);
        let bits = io::read_integer_lines(&mask_path)?;
        if bits.len() != num_vertices {
            return Err(Error::format(
                &mask_path,
                format!("{} entries for {num_vertices} vertices", bits.len()),
            ));
        }
        let vertices = bits
            .iter()
            .enumerate()
            .filter(|(_, &b)| b != 0)
            .map(|(i, _)| i)
            .collect();
        out.push(ScoredMask { vertices, confidence });
    }
    Ok(out)
}
