//! Per-vertex feature ingestion, per-segment aggregation and affinity matrices.
//!
//! Features arrive as FMAT files: the magic `FMAT`, a `u32` version (1), `u64`
//! rows, `u64` cols, then `rows * cols` little-endian `f32` values, row-major.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io;
use crate::matrix::Matrix;
use crate::overseg::SegmentGraph;

pub const FMAT_MAGIC: &[u8; 4] = b"FMAT";
pub const FMAT_VERSION: u32 = 1;
const FMAT_HEADER_LEN: usize = 4 + 4 + 8 + 8;

/// Default floor value for sub-threshold saliency entries.
pub const DEFAULT_EPSILON: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Modality {
    Geometry3d,
    Color2d,
    Other,
}

/// `V x D` per-vertex features, stored as the `f32` values of the file.
#[derive(Debug, Clone, PartialEq)]
pub struct VertexFeatures {
    rows: usize,
    cols: usize,
    data: Vec<f32>,
    pub modality: Modality,
}

impl VertexFeatures {
    pub fn new(rows: usize, cols: usize, data: Vec<f32>, modality: Modality) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch(format!(
                "{} values for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|x| !x.is_finite()) {
            return Err(Error::InvalidData(format!(
                "non-finite feature at row {}, col {}",
                i / cols.max(1),
                i % cols.max(1)
            )));
        }
        Ok(VertexFeatures {
            rows,
            cols,
            data,
            modality,
        })
    }

    pub fn from_rows(rows: &[Vec<f32>], modality: Modality) -> Result<Self> {
        let cols = rows.first().map(Vec::len).unwrap_or(0);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::DimensionMismatch("ragged feature rows".into()));
        }
        Self::new(rows.len(), cols, rows.concat(), modality)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(FMAT_HEADER_LEN + self.data.len() * 4);
        out.extend_from_slice(FMAT_MAGIC);
        out.extend_from_slice(&FMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.rows as u64).to_le_bytes());
        out.extend_from_slice(&(self.cols as u64).to_le_bytes());
        for x in &self.data {
            out.extend_from_slice(&x.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8], modality: Modality) -> Result<Self> {
        if bytes.len() < FMAT_HEADER_LEN {
            return Err(Error::Fmat(format!("file too short for header ({} bytes)", bytes.len())));
        }
        if &bytes[..4] != FMAT_MAGIC {
            return Err(Error::Fmat("bad magic, expected 'FMAT'".into()));
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
        if version != FMAT_VERSION {
            return Err(Error::Fmat(format!("unsupported version {version}")));
        }
        let rows = u64::from_le_bytes(bytes[8..16].try_into().unwrap());
        let cols = u64::from_le_bytes(bytes[16..24].try_into().unwrap());
        let expected = rows
            .checked_mul(cols)
            .and_then(|n| n.checked_mul(4))
            .ok_or_else(|| Error::Fmat(format!("header dimensions {rows}x{cols} overflow")))?;
        let payload = &bytes[FMAT_HEADER_LEN..];
        if (payload.len() as u64) < expected {
            return Err(Error::Fmat(format!(
                "truncated payload: header declares {rows}x{cols} ({expected} bytes), found {}",
                payload.len()
            )));
        }
        if payload.len() as u64 > expected {
            return Err(Error::Fmat(format!(
                "payload has {} trailing bytes beyond the declared {rows}x{cols}",
                payload.len() as u64 - expected
            )));
        }
        let data: Vec<f32> = payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Self::new(rows as usize, cols as usize, data, modality).map_err(|e| Error::Fmat(e.to_string()))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        io::write_atomic(path, &self.to_bytes())
    }
}

pub fn load_vertex_features(path: impl AsRef<Path>, modality: Modality) -> Result<VertexFeatures> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    VertexFeatures::from_bytes(&bytes, modality).map_err(|e| e.with_path(path))
}

/// `N x D` per-segment features.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub values: Matrix,
    pub modality: Modality,
}

impl FeatureMatrix {
    pub fn new(values: Matrix, modality: Modality) -> Result<Self> {
        if values.as_slice().iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidData("non-finite segment feature".into()));
        }
        Ok(FeatureMatrix { values, modality })
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R], modality: Modality) -> Result<Self> {
        Self::new(Matrix::from_rows(rows), modality)
    }

    pub fn num_segments(&self) -> usize {
        self.values.rows()
    }

    pub fn dim(&self) -> usize {
        self.values.cols()
    }

    pub fn scaled(&self, factor: f64) -> FeatureMatrix {
        FeatureMatrix {
            values: self.values.map(|x| x * factor),
            modality: self.modality,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Aggregation {
    #[default]
    Mean,
    Median,
}

pub fn aggregate_features(vf: &VertexFeatures, seg: &SegmentGraph, how: Aggregation) -> Result<FeatureMatrix> {
    if vf.rows() != seg.num_vertices() {
        return Err(Error::DimensionMismatch(format!(
            "{} feature rows for {} mesh vertices",
            vf.rows(),
            seg.num_vertices()
        )));
    }
    let d = vf.cols();
    let mut out = Matrix::zeros(seg.num_segments(), d);
    for s in 0..seg.num_segments() {
        let verts = seg.segment_vertices(s);
        let row = out.row_mut(s);
        match how {
            Aggregation::Mean => {
                for &v in verts {
                    for (acc, &x) in row.iter_mut().zip(vf.row(v as usize)) {
                        *acc += x as f64;
                    }
                }
                let n = verts.len() as f64;
                row.iter_mut().for_each(|x| *x /= n);
            }
            Aggregation::Median => {
                let mut column = Vec::with_capacity(verts.len());
                for (c, slot) in row.iter_mut().enumerate() {
                    column.clear();
                    column.extend(verts.iter().map(|&v| vf.row(v as usize)[c] as f64));
                    column.sort_by(f64::total_cmp);
                    let m = column.len();
                    *slot = if m % 2 == 1 {
                        column[m / 2]
                    } else {
                        0.5 * (column[m / 2 - 1] + column[m / 2])
                    };
                }
            }
        }
    }
    FeatureMatrix::new(out, vf.modality)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AffinityKind {
    RawCosine,
    Saliency,
}

/// Symmetric `N x N` segment affinities.
#[derive(Debug, Clone, PartialEq)]
pub struct AffinityMatrix {
    pub values: Matrix,
    pub kind: AffinityKind,
}

impl AffinityMatrix {
    pub fn new(values: Matrix, kind: AffinityKind) -> Result<Self> {
        if !values.is_square() {
            return Err(Error::DimensionMismatch(format!(
                "affinity matrix must be square, got {}x{}",
                values.rows(),
                values.cols()
            )));
        }
        if values.max_asymmetry() > 1e-9 {
            return Err(Error::InvalidData("affinity matrix is not symmetric".into()));
        }
        Ok(AffinityMatrix { values, kind })
    }

    pub fn len(&self) -> usize {
        self.values.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.values.rows() == 0
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values.get(i, j)
    }
}

/// Pairwise cosine similarity of the rows of `f`. Zero-norm rows get 0 off the
/// diagonal; the diagonal is always 1.
pub fn cosine_similarity(f: &FeatureMatrix) -> AffinityMatrix {
    let n = f.num_segments();
    let x = &f.values;
    let norms: Vec<f64> = (0..n)
        .map(|i| x.row(i).iter().map(|v| v * v).sum::<f64>().sqrt())
        .collect();
    let mut out = Matrix::zeros(n, n);
    out.as_mut_slice()
        .par_chunks_mut(n.max(1))
        .enumerate()
        .for_each(|(i, row)| {
            for (j, slot) in row.iter_mut().enumerate() {
                *slot = if i == j {
                    1.0
                } else if norms[i] == 0.0 || norms[j] == 0.0 {
                    0.0
                } else {
                    // evaluate on the ordered pair so that (i,j) and (j,i) agree bitwise
                    let (a, b) = if i < j { (i, j) } else { (j, i) };
                    let d: f64 = x.row(a).iter().zip(x.row(b)).map(|(p, q)| p * q).sum();
                    (d / (norms[a] * norms[b])).clamp(-1.0, 1.0)
                };
            }
        });
    AffinityMatrix {
        values: out,
        kind: AffinityKind::RawCosine,
    }
}

/// `w2d * a2d + (1 - w2d) * a3d`.
pub fn fuse_similarities(a2d: &AffinityMatrix, a3d: &AffinityMatrix, w2d: f64) -> Result<AffinityMatrix> {
    if a2d.len() != a3d.len() {
        return Err(Error::DimensionMismatch(format!(
            "cannot fuse {}x{} with {}x{}",
            a2d.len(),
            a2d.len(),
            a3d.len(),
            a3d.len()
        )));
    }
    if a2d.kind != AffinityKind::RawCosine || a3d.kind != AffinityKind::RawCosine {
        return Err(Error::param("fusion expects raw cosine affinities"));
    }
    if !(0.0..=1.0).contains(&w2d) {
        return Err(Error::param(format!("w2d must lie in [0,1], got {w2d}")));
    }
    let values = if w2d == 0.0 {
        a3d.values.clone()
    } else if w2d == 1.0 {
        a2d.values.clone()
    } else {
        let data = a2d
            .values
            .as_slice()
            .iter()
            .zip(a3d.values.as_slice())
            .map(|(&p, &q)| w2d * p + (1.0 - w2d) * q)
            .collect();
        Matrix::from_vec(a2d.len(), a2d.len(), data)
    };
    Ok(AffinityMatrix {
        values,
        kind: AffinityKind::RawCosine,
    })
}

fn check_epsilon(epsilon: f64) -> Result<()> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::param(format!("epsilon must lie in (0,1), got {epsilon}")));
    }
    Ok(())
}

/// Maps entries `>= tau_cut` to 1 and the rest to `epsilon`.
pub fn threshold_saliency(a: &AffinityMatrix, tau_cut: f64, epsilon: f64) -> Result<AffinityMatrix> {
    check_epsilon(epsilon)?;
    Ok(AffinityMatrix {
        values: a.values.map(|x| if x >= tau_cut { 1.0 } else { epsilon }),
        kind: AffinityKind::Saliency,
    })
}

/// Thresholds the principal submatrix of `a` on `active` in one pass.
pub(crate) fn threshold_saliency_on(a: &AffinityMatrix, active: &[usize], tau_cut: f64, epsilon: f64) -> Matrix {
    let n = active.len();
    let mut out = Matrix::zeros(n, n);
    out.as_mut_slice()
        .par_chunks_mut(n.max(1))
        .enumerate()
        .for_each(|(r, row)| {
            let src = a.values.row(active[r]);
            for (slot, &c) in row.iter_mut().zip(active) {
                *slot = if src[c] >= tau_cut { 1.0 } else { epsilon };
            }
        });
    out
}
