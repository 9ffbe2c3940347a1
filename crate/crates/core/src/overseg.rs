//! Geometric oversegmentation of a mesh into contiguous segments.
//!
//! Felzenszwalb-Huttenlocher graph clustering on the vertex graph, with edge
//! weights mixing normal deviation and color distance:
//!
//! ```text
//! w(u, v) = (1 - color_weight) * (1 - n_u . n_v) + color_weight * |c_u - c_v| / sqrt(3)
//! ```
//!
//! Two components merge when the joining edge is no heavier than
//! `min(Int(A) + k/|A|, Int(B) + k/|B|)`, where `Int` is the heaviest edge
//! merged so far inside a component. A final pass folds every component
//! smaller than `min_size` into its lightest neighbor.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io;
use crate::mesh::{dot, vertex_adjacency, EdgeList, TriMesh};
use crate::unionfind::DisjointSets;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OversegParams {
    pub k: f64,
    /// Minimum segment size, in vertices.
    pub min_size: usize,
    pub color_weight: f64,
}

impl Default for OversegParams {
    fn default() -> Self {
        OversegParams {
            k: 0.01,
            min_size: 50,
            color_weight: 0.25,
        }
    }
}

impl OversegParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.k.is_finite() && self.k > 0.0) {
            return Err(Error::param(format!("k must be > 0, got {}", self.k)));
        }
        if self.min_size < 1 {
            return Err(Error::param("min_size must be >= 1"));
        }
        if !(0.0..=1.0).contains(&self.color_weight) {
            return Err(Error::param(format!(
                "color_weight must lie in [0,1], got {}",
                self.color_weight
            )));
        }
        Ok(())
    }
}

/// Partition of mesh vertices into segments, plus the segment adjacency.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SegmentGraph {
    segment_of_vertex: Vec<u32>,
    segment_vertices: Vec<Vec<u32>>,
    adjacency: Vec<(u32, u32)>,
    neighbors: Vec<Vec<u32>>,
}

impl SegmentGraph {
    /// Builds a graph from per-vertex labels and an explicit segment
    /// adjacency. Labels must cover `0..num_segments` densely.
    pub fn from_parts(labels: Vec<u32>, adjacency: Vec<(u32, u32)>) -> Result<Self> {
        let num = labels.iter().map(|&l| l as usize + 1).max().unwrap_or(0);
        let mut segment_vertices = vec![Vec::new(); num];
        for (v, &l) in labels.iter().enumerate() {
            segment_vertices[l as usize].push(v as u32);
        }
        if let Some(empty) = segment_vertices.iter().position(Vec::is_empty) {
            return Err(Error::InvalidData(format!(
                "segment ids are not dense: segment {empty} has no vertices"
            )));
        }
        let mut adj: Vec<(u32, u32)> = Vec::with_capacity(adjacency.len());
        for (a, b) in adjacency {
            if a == b {
                return Err(Error::InvalidData(format!("self-adjacent segment {a}")));
            }
            if a as usize >= num || b as usize >= num {
                return Err(Error::InvalidData(format!(
                    "adjacency ({a},{b}) references a segment >= {num}"
                )));
            }
            adj.push((a.min(b), a.max(b)));
        }
        adj.sort_unstable();
        adj.dedup();
        let mut neighbors = vec![Vec::new(); num];
        for &(a, b) in &adj {
            neighbors[a as usize].push(b);
            neighbors[b as usize].push(a);
        }
        for n in &mut neighbors {
            n.sort_unstable();
        }
        Ok(SegmentGraph {
            segment_of_vertex: labels,
            segment_vertices,
            adjacency: adj,
            neighbors,
        })
    }

    /// Builds a graph from labels, deriving adjacency from mesh edges.
    pub fn from_labels(labels: Vec<u32>, edges: &EdgeList) -> Result<Self> {
        let mut adj = Vec::new();
        for &(u, v) in &edges.edges {
            let (a, b) = (labels[u as usize], labels[v as usize]);
            if a != b {
                adj.push((a.min(b), a.max(b)));
            }
        }
        Self::from_parts(labels, adj)
    }

    pub fn num_segments(&self) -> usize {
        self.segment_vertices.len()
    }

    pub fn num_vertices(&self) -> usize {
        self.segment_of_vertex.len()
    }

    pub fn segment_of_vertex(&self) -> &[u32] {
        &self.segment_of_vertex
    }

    pub fn segment_vertices(&self, segment: usize) -> &[u32] {
        &self.segment_vertices[segment]
    }

    pub fn segment_size(&self, segment: usize) -> usize {
        self.segment_vertices[segment].len()
    }

    /// Unordered segment pairs `(a, b)` with `a < b`, sorted.
    pub fn adjacency(&self) -> &[(u32, u32)] {
        &self.adjacency
    }

    pub fn neighbors(&self, segment: usize) -> &[u32] {
        &self.neighbors[segment]
    }

    /// Sorted union of the vertices of the given segments.
    pub fn vertices_of(&self, segments: &[usize]) -> Vec<usize> {
        let mut out: Vec<usize> = segments
            .iter()
            .flat_map(|&s| self.segment_vertices[s].iter().map(|&v| v as usize))
            .collect();
        out.sort_unstable();
        out
    }

    pub fn write_labels(&self, path: impl AsRef<Path>) -> Result<()> {
        io::write_atomic(
            path,
            io::integer_lines(self.segment_of_vertex.iter().map(|&s| s as u64)).as_bytes(),
        )
    }

    pub fn sidecar(&self, params: &OversegParams) -> SegmentSidecar {
        SegmentSidecar {
            num_segments: self.num_segments(),
            adjacency: self.adjacency.iter().map(|&(a, b)| [a, b]).collect(),
            params: *params,
        }
    }

    /// Writes the per-vertex label file and its JSON sidecar.
    pub fn save(&self, labels: impl AsRef<Path>, sidecar: impl AsRef<Path>, params: &OversegParams) -> Result<()> {
        self.write_labels(labels)?;
        let json = serde_json::to_string_pretty(&self.sidecar(params)).expect("sidecar serializes");
        io::write_atomic(sidecar, json.as_bytes())
    }

    pub fn load(labels: impl AsRef<Path>, sidecar: impl AsRef<Path>) -> Result<Self> {
        let labels_path = labels.as_ref();
        let sidecar_path = sidecar.as_ref();
        let raw = io::read_integer_lines(labels_path)?;
        let labels: Vec<u32> = raw
            .into_iter()
            .map(|v| u32::try_from(v).map_err(|_| Error::format(labels_path, format!("segment id {v} too large"))))
            .collect::<Result<_>>()?;
        let side: SegmentSidecar = serde_json::from_str(&io::read_to_string(sidecar_path)?)
            .map_err(|e| Error::format(sidecar_path, e.to_string()))?;
        let graph = SegmentGraph::from_parts(labels, side.adjacency.iter().map(|p| (p[0], p[1])).collect())
            .map_err(|e| e.with_path(labels_path))?;
        if graph.num_segments() != side.num_segments {
            return Err(Error::format(
                sidecar_path,
                format!(
                    "sidecar declares {} segments, label file has {}",
                    side.num_segments,
                    graph.num_segments()
                ),
            ));
        }
        Ok(graph)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentSidecar {
    pub num_segments: usize,
    pub adjacency: Vec<[u32; 2]>,
    pub params: OversegParams,
}

/// Dissimilarity of two vertices from their normals and colors.
pub fn edge_weight(nu: [f64; 3], nv: [f64; 3], cu: [f64; 3], cv: [f64; 3], color_weight: f64) -> f64 {
    let normal_term = (1.0 - dot(nu, nv)).max(0.0);
    let dc = [cu[0] - cv[0], cu[1] - cv[1], cu[2] - cv[2]];
    let color_term = dot(dc, dc).sqrt() / 3f64.sqrt();
    (1.0 - color_weight) * normal_term + color_weight * color_term
}

struct WeightedEdges {
    edges: Vec<(u32, u32)>,
    weights: Vec<f64>,
}

fn weighted_sorted_edges(mesh: &TriMesh, color_weight: f64) -> Result<WeightedEdges> {
    let adjacency = vertex_adjacency(mesh);
    if adjacency.is_empty() {
        return Err(Error::InvalidData("mesh has no edges".into()));
    }
    let normals = mesh.normals_or_computed();
    let mut order: Vec<(f64, u32, u32)> = adjacency
        .edges
        .iter()
        .map(|&(u, v)| {
            let (ui, vi) = (u as usize, v as usize);
            let w = edge_weight(normals[ui], normals[vi], mesh.colors[ui], mesh.colors[vi], color_weight);
            (w, u, v)
        })
        .collect();
    // ties broken by (min, max) vertex index
    order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    Ok(WeightedEdges {
        edges: order.iter().map(|&(_, u, v)| (u, v)).collect(),
        weights: order.iter().map(|&(w, _, _)| w).collect(),
    })
}

fn felzenszwalb(n: usize, edges: &WeightedEdges, k: f64) -> DisjointSets {
    let mut sets = DisjointSets::new(n);
    let mut internal = vec![0.0f64; n];
    for (&(u, v), &w) in edges.edges.iter().zip(&edges.weights) {
        let a = sets.find(u as usize);
        let b = sets.find(v as usize);
        if a == b {
            continue;
        }
        let ta = internal[a] + k / sets.size_of_root(a) as f64;
        let tb = internal[b] + k / sets.size_of_root(b) as f64;
        if w <= ta.min(tb) {
            let r = sets.union_roots(a, b);
            internal[r] = internal[a].max(internal[b]).max(w);
        }
    }
    sets
}

fn merge_small(sets: &mut DisjointSets, edges: &WeightedEdges, min_size: usize) {
    if min_size <= 1 {
        return;
    }
    for &(u, v) in &edges.edges {
        let a = sets.find(u as usize);
        let b = sets.find(v as usize);
        if a != b && (sets.size_of_root(a) < min_size || sets.size_of_root(b) < min_size) {
            sets.union_roots(a, b);
        }
    }
}

fn into_graph(mut sets: DisjointSets, n: usize, edges: &WeightedEdges) -> SegmentGraph {
    let mut id_of_root = vec![u32::MAX; n];
    let mut next = 0u32;
    let mut labels = Vec::with_capacity(n);
    for v in 0..n {
        let r = sets.find(v);
        if id_of_root[r] == u32::MAX {
            id_of_root[r] = next;
            next += 1;
        }
        labels.push(id_of_root[r]);
    }
    let mut adj = Vec::new();
    for &(u, v) in &edges.edges {
        let (a, b) = (labels[u as usize], labels[v as usize]);
        if a != b {
            adj.push((a.min(b), a.max(b)));
        }
    }
    SegmentGraph::from_parts(labels, adj).expect("labels are dense by construction")
}

pub fn oversegment(mesh: &TriMesh, params: &OversegParams) -> Result<SegmentGraph> {
    params.validate()?;
    let n = mesh.vertex_count();
    let edges = weighted_sorted_edges(mesh, params.color_weight)?;
    let mut sets = felzenszwalb(n, &edges, params.k);
    merge_small(&mut sets, &edges, params.min_size);
    Ok(into_graph(sets, n, &edges))
}

/// Segment count for each requested `min_size`, sharing the clustering pass.
pub fn segment_count_sweep(
    mesh: &TriMesh,
    k: f64,
    color_weight: f64,
    min_sizes: &[usize],
) -> Result<Vec<(usize, usize)>> {
    for &m in min_sizes {
        OversegParams { k, min_size: m, color_weight }.validate()?;
    }
    let n = mesh.vertex_count();
    let edges = weighted_sorted_edges(mesh, color_weight)?;
    let base = felzenszwalb(n, &edges, k);
    Ok(min_sizes
        .iter()
        .map(|&m| {
            let mut sets = base.clone();
            merge_small(&mut sets, &edges, m);
            (m, into_graph(sets, n, &edges).num_segments())
        })
        .collect())
}
