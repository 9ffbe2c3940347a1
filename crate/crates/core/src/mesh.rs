//! Triangle meshes: validation, area-weighted vertex normals and vertex adjacency.
//!
//! PLY reading and writing lives in [`ply`].

pub mod ply;

use crate::error::{Error, Result};

pub type Vec3 = [f64; 3];

/// Color assigned to vertices of meshes that carry none.
pub const DEFAULT_COLOR: Vec3 = [0.5, 0.5, 0.5];

#[derive(Debug, Clone, PartialEq)]
pub struct TriMesh {
    pub positions: Vec<Vec3>,
    /// Per-vertex RGB in `[0, 1]`. Always one entry per vertex.
    pub colors: Vec<Vec3>,
    /// Whether `colors` came from the input or were filled with [`DEFAULT_COLOR`].
    pub has_colors: bool,
    pub normals: Option<Vec<Vec3>>,
    pub faces: Vec<[u32; 3]>,
}

impl TriMesh {
    /// Builds a mesh without colors or normals, validating face indices.
    pub fn new(positions: Vec<Vec3>, faces: Vec<[u32; 3]>) -> Result<Self> {
        let n = positions.len();
        let mesh = TriMesh {
            colors: vec![DEFAULT_COLOR; n],
            has_colors: false,
            normals: None,
            positions,
            faces,
        };
        mesh.validate()?;
        Ok(mesh)
    }

    pub fn with_colors(mut self, colors: Vec<Vec3>) -> Result<Self> {
        if colors.len() != self.positions.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} colors for {} vertices",
                colors.len(),
                self.positions.len()
            )));
        }
        self.colors = colors;
        self.has_colors = true;
        self.validate()?;
        Ok(self)
    }

    pub fn vertex_count(&self) -> usize {
        self.positions.len()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.positions.len();
        for (fi, face) in self.faces.iter().enumerate() {
            for &idx in face {
                if idx as usize >= n {
                    return Err(Error::FaceIndexOutOfRange {
                        face: fi,
                        index: idx as u64,
                        vertex_count: n,
                    });
                }
            }
        }
        if self.colors.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "{} colors for {n} vertices",
                self.colors.len()
            )));
        }
        for (i, c) in self.colors.iter().enumerate() {
            if c.iter().any(|x| !(0.0..=1.0).contains(x)) {
                return Err(Error::InvalidData(format!("vertex {i}: color {c:?} outside [0,1]")));
            }
        }
        if let Some(normals) = &self.normals {
            if normals.len() != n {
                return Err(Error::DimensionMismatch(format!(
                    "{} normals for {n} vertices",
                    normals.len()
                )));
            }
        }
        Ok(())
    }

    /// Returns a copy whose normals are recomputed from the faces.
    pub fn with_computed_normals(&self) -> TriMesh {
        let mut out = self.clone();
        out.normals = Some(compute_vertex_normals(self));
        out
    }

    /// Normals if present, otherwise freshly computed ones.
    pub fn normals_or_computed(&self) -> std::borrow::Cow<'_, [Vec3]> {
        match &self.normals {
            Some(n) => std::borrow::Cow::Borrowed(n.as_slice()),
            None => std::borrow::Cow::Owned(compute_vertex_normals(self)),
        }
    }
}

fn sub(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn cross(a: Vec3, b: Vec3) -> Vec3 {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

pub(crate) fn dot(a: Vec3, b: Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

/// Unit normal of a triangle scaled by twice its area (the raw cross product).
pub fn face_area_normal(mesh: &TriMesh, face: [u32; 3]) -> Vec3 {
    let p0 = mesh.positions[face[0] as usize];
    let p1 = mesh.positions[face[1] as usize];
    let p2 = mesh.positions[face[2] as usize];
    cross(sub(p1, p0), sub(p2, p0))
}

/// Area-weighted vertex normals following face winding. Vertices that touch no
/// face (or only degenerate ones) get the zero vector.
pub fn compute_vertex_normals(mesh: &TriMesh) -> Vec<Vec3> {
    let mut acc = vec![[0.0f64; 3]; mesh.vertex_count()];
    for &face in &mesh.faces {
        let n = face_area_normal(mesh, face);
        for &v in &face {
            let a = &mut acc[v as usize];
            a[0] += n[0];
            a[1] += n[1];
            a[2] += n[2];
        }
    }
    for a in &mut acc {
        let len = dot(*a, *a).sqrt();
        if len > 0.0 && len.is_finite() {
            a.iter_mut().for_each(|x| *x /= len);
        } else {
            *a = [0.0; 3];
        }
    }
    acc
}

/// Unordered unique vertex pairs sharing a face edge, stored as `(min, max)`
/// and sorted.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct EdgeList {
    pub edges: Vec<(u32, u32)>,
}

impl EdgeList {
    pub fn len(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    /// Per-vertex neighbor lists, each sorted ascending.
    pub fn neighbors(&self, vertex_count: usize) -> Vec<Vec<u32>> {
        let mut adj = vec![Vec::new(); vertex_count];
        for &(a, b) in &self.edges {
            adj[a as usize].push(b);
            adj[b as usize].push(a);
        }
        for list in &mut adj {
            list.sort_unstable();
        }
        adj
    }
}

pub fn vertex_adjacency(mesh: &TriMesh) -> EdgeList {
    let mut edges = Vec::with_capacity(mesh.faces.len() * 3);
    for f in &mesh.faces {
        for (a, b) in [(f[0], f[1]), (f[1], f[2]), (f[2], f[0])] {
            if a != b {
                edges.push((a.min(b), a.max(b)));
            }
        }
    }
    edges.sort_unstable();
    edges.dedup();
    EdgeList { edges }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square() -> TriMesh {
        TriMesh::new(
            vec![[0., 0., 0.], [1., 0., 0.], [1., 1., 0.], [0., 1., 0.]],
            vec![[0, 1, 2], [0, 2, 3]],
        )
        .unwrap()
    }

    #[test]
    fn flat_square_normals_point_up() {
        let n = compute_vertex_normals(&square());
        for v in n {
            assert_eq!(v, [0.0, 0.0, 1.0]);
        }
    }

    #[test]
    fn isolated_vertex_gets_zero_normal() {
        let mut m = square();
        m.positions.push([5.0, 5.0, 5.0]);
        m.colors.push(DEFAULT_COLOR);
        let n = compute_vertex_normals(&m);
        assert_eq!(n[4], [0.0; 3]);
    }

    #[test]
    fn adjacency_of_single_triangle() {
        let m = TriMesh::new(vec![[0.; 3], [1., 0., 0.], [0., 1., 0.]], vec![[0, 1, 2]]).unwrap();
        assert_eq!(vertex_adjacency(&m).edges, vec![(0, 1), (0, 2), (1, 2)]);
    }

    #[test]
    fn shared_edge_is_deduplicated() {
        let m = TriMesh::new(
            vec![[0.; 3], [1., 0., 0.], [0., 1., 0.], [1., 1., 0.]],
            vec![[0, 1, 2], [1, 3, 2]],
        )
        .unwrap();
        let e = vertex_adjacency(&m);
        assert_eq!(e.len(), 5);
        assert_eq!(e.edges.iter().filter(|&&p| p == (1, 2)).count(), 1);
    }

    #[test]
    fn out_of_range_face_is_rejected() {
        let err = TriMesh::new(vec![[0.; 3]; 3], vec![[0, 1, 7]]).unwrap_err();
        assert!(matches!(err, Error::FaceIndexOutOfRange { face: 0, index: 7, .. }));
    }
}
