//! Deterministic synthetic scenes for examples, tests and benchmarks.
//!
//! Everything here is seeded, so the same arguments always produce the same
//! data.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::features::{FeatureMatrix, Modality, VertexFeatures};
use crate::matrix::Matrix;
use crate::mesh::{TriMesh, Vec3};
use crate::overseg::SegmentGraph;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Feature dimension of the planted scenes. The last axis is reserved for the
/// background.
pub const CLUSTER_DIM: usize = 16;

/// A segment graph with features whose ground-truth grouping is known.
#[derive(Debug, Clone)]
pub struct ClusterScene {
    pub segments: SegmentGraph,
    pub features: FeatureMatrix,
    /// Sorted segment ids of each planted object, in object order.
    pub objects: Vec<Vec<usize>>,
    /// Sorted segment ids of the background.
    pub background: Vec<usize>,
}

/// Objects with distinct one-hot features over a larger background. See
/// [`planted_scene`].
pub fn planted_clusters(sizes: &[usize], seed: u64) -> ClusterScene {
    let classes: Vec<usize> = (0..sizes.len()).collect();
    planted_scene(sizes, &classes, seed)
}

/// Builds a scene of chain-shaped objects hanging off a chain-shaped
/// background.
///
/// Object `i` has `sizes[i]` segments with features near the one-hot axis
/// `classes[i]` (objects sharing a class are feature-identical up to noise).
/// The background has `1.5 * total + 10` segments near the last axis. Each
/// object touches the background at one segment and no other object. Each
/// segment spans 1 to 4 vertices and segment ids are shuffled.
pub fn planted_scene(sizes: &[usize], classes: &[usize], seed: u64) -> ClusterScene {
    assert_eq!(sizes.len(), classes.len());
    assert!(classes.iter().all(|&c| c < CLUSTER_DIM - 1), "class axis out of range");
    assert!(sizes.iter().all(|&s| s >= 1));
    let mut rng = rng(seed);
    let total: usize = sizes.iter().sum();
    let nb = (3 * total).div_ceil(2) + 10;
    let n = nb + total;

    // group[i] = None for background, Some(object) otherwise, before shuffling
    let mut axis = Vec::with_capacity(n);
    let mut group: Vec<Option<usize>> = Vec::with_capacity(n);
    let mut edges = Vec::new();
    for i in 0..nb {
        axis.push(CLUSTER_DIM - 1);
        group.push(None);
        if i > 0 {
            edges.push((i - 1, i));
        }
    }
    for (o, (&size, &class)) in sizes.iter().zip(classes).enumerate() {
        let start = axis.len();
        for j in 0..size {
            axis.push(class);
            group.push(Some(o));
            if j > 0 {
                edges.push((start + j - 1, start + j));
            }
        }
        edges.push((rng.gen_range(0..nb), start));
    }

    let mut perm: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        perm.swap(i, rng.gen_range(0..=i));
    }
    // perm[old] = new id

    let mut rows = vec![vec![0.0; CLUSTER_DIM]; n];
    for old in 0..n {
        let row = &mut rows[perm[old]];
        for x in row.iter_mut() {
            *x = rng.gen_range(-0.1..0.1);
        }
        row[axis[old]] += 1.0;
    }

    let mut labels = Vec::new();
    let mut vertex_counts = vec![0usize; n];
    for c in vertex_counts.iter_mut() {
        *c = rng.gen_range(1..=4);
    }
    for (s, &c) in vertex_counts.iter().enumerate() {
        labels.extend(std::iter::repeat_n(s as u32, c));
    }
    let adjacency = edges
        .iter()
        .map(|&(a, b)| (perm[a].min(perm[b]) as u32, perm[a].max(perm[b]) as u32))
        .collect();
    let segments = SegmentGraph::from_parts(labels, adjacency).expect("planted scene is valid");

    let mut objects = vec![Vec::new(); sizes.len()];
    let mut background = Vec::new();
    for old in 0..n {
        match group[old] {
            Some(o) => objects[o].push(perm[old]),
            None => background.push(perm[old]),
        }
    }
    objects.iter_mut().for_each(|o| o.sort_unstable());
    background.sort_unstable();

    ClusterScene {
        segments,
        features: FeatureMatrix::from_rows(&rows, Modality::Other).expect("finite"),
        objects,
        background,
    }
}

/// `n x d` matrix of uniform entries in `[-1, 1)`.
pub fn random_features(n: usize, d: usize, rng: &mut impl Rng) -> FeatureMatrix {
    let data = (0..n * d).map(|_| rng.gen_range(-1.0..1.0)).collect();
    FeatureMatrix::new(Matrix::from_vec(n, d, data), Modality::Other).expect("finite")
}

/// Symmetric `{epsilon, 1}` matrix with unit diagonal; each off-diagonal pair
/// is 1 with probability `density`.
pub fn random_saliency(n: usize, density: f64, epsilon: f64, rng: &mut impl Rng) -> Matrix {
    let mut w = Matrix::filled(n, n, epsilon);
    for i in 0..n {
        w.set(i, i, 1.0);
        for j in (i + 1)..n {
            if rng.gen_bool(density) {
                w.set(i, j, 1.0);
                w.set(j, i, 1.0);
            }
        }
    }
    w
}

/// Random connected segment graph: a shuffled spanning path plus extra edges.
pub fn random_segment_graph(n: usize, extra_edges: usize, rng: &mut impl Rng) -> SegmentGraph {
    let mut order: Vec<u32> = (0..n as u32).collect();
    for i in (1..n).rev() {
        order.swap(i, rng.gen_range(0..=i));
    }
    let mut adjacency: Vec<(u32, u32)> = order.windows(2).map(|w| (w[0].min(w[1]), w[0].max(w[1]))).collect();
    if n >= 2 {
        for _ in 0..extra_edges {
            let a = rng.gen_range(0..n as u32);
            let b = rng.gen_range(0..n as u32);
            if a != b {
                adjacency.push((a.min(b), a.max(b)));
            }
        }
    }
    let mut labels = Vec::new();
    for s in 0..n as u32 {
        labels.extend(std::iter::repeat_n(s, rng.gen_range(1..=3)));
    }
    SegmentGraph::from_parts(labels, adjacency).expect("random graph is valid")
}

/// Regular `nx x ny` grid triangulated into `2 (nx-1)(ny-1)` faces, with
/// vertex `(i, j)` at `origin + i * du + j * dv`.
pub fn grid(nx: usize, ny: usize, origin: Vec3, du: Vec3, dv: Vec3) -> TriMesh {
    assert!(nx >= 2 && ny >= 2);
    let mut positions = Vec::with_capacity(nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            let (fi, fj) = (i as f64, j as f64);
            positions.push([
                origin[0] + fi * du[0] + fj * dv[0],
                origin[1] + fi * du[1] + fj * dv[1],
                origin[2] + fi * du[2] + fj * dv[2],
            ]);
        }
    }
    let mut faces = Vec::with_capacity(2 * (nx - 1) * (ny - 1));
    for j in 0..ny - 1 {
        for i in 0..nx - 1 {
            let a = (j * nx + i) as u32;
            let b = a + 1;
            let c = a + nx as u32;
            let d = c + 1;
            faces.push([a, b, d]);
            faces.push([a, d, c]);
        }
    }
    TriMesh::new(positions, faces).expect("grid is valid")
}

/// Concatenates meshes, offsetting face indices. The result has colors when
/// any part has them.
pub fn concat(parts: &[TriMesh]) -> TriMesh {
    let mut positions = Vec::new();
    let mut colors = Vec::new();
    let mut faces = Vec::new();
    for p in parts {
        let off = positions.len() as u32;
        positions.extend_from_slice(&p.positions);
        colors.extend_from_slice(&p.colors);
        faces.extend(p.faces.iter().map(|f| [f[0] + off, f[1] + off, f[2] + off]));
    }
    let mesh = TriMesh::new(positions, faces).expect("parts are valid");
    if parts.iter().any(|p| p.has_colors) {
        mesh.with_colors(colors).expect("colors in range")
    } else {
        mesh
    }
}

fn painted(mesh: TriMesh, color: Vec3) -> TriMesh {
    let n = mesh.vertex_count();
    mesh.with_colors(vec![color; n]).expect("color in range")
}

/// Two parallel, disconnected 10 x 10 plates one meter apart: the lower one
/// red and facing up, the upper one blue and facing down.
pub fn two_plates() -> TriMesh {
    let lower = painted(grid(10, 10, [0.0; 3], [0.1, 0.0, 0.0], [0.0, 0.1, 0.0]), [1.0, 0.0, 0.0]);
    let upper = painted(grid(10, 10, [0.0, 0.0, 1.0], [0.0, 0.1, 0.0], [0.1, 0.0, 0.0]), [0.0, 0.0, 1.0]);
    concat(&[lower, upper])
}

/// 25 x 20 flat grid (500 vertices) split into five vertical colour bands,
/// with a little colour noise.
pub fn five_patch_mesh(seed: u64) -> TriMesh {
    const PALETTE: [Vec3; 5] = [
        [0.9, 0.1, 0.1],
        [0.1, 0.8, 0.1],
        [0.1, 0.2, 0.9],
        [0.9, 0.9, 0.1],
        [0.6, 0.1, 0.7],
    ];
    let mut rng = rng(seed);
    let mesh = grid(25, 20, [0.0; 3], [0.02, 0.0, 0.0], [0.0, 0.02, 0.0]);
    let colors = mesh
        .positions
        .iter()
        .enumerate()
        .map(|(v, _)| {
            let band = (v % 25) / 5;
            PALETTE[band].map(|c: f64| (c + rng.gen_range(-0.03..0.03)).clamp(0.0, 1.0))
        })
        .collect();
    mesh.with_colors(colors).expect("colors in range")
}

/// Random heightfield grid with random colours; `nx, ny >= 2`.
pub fn random_grid_mesh(nx: usize, ny: usize, roughness: f64, rng: &mut impl Rng) -> TriMesh {
    let mut mesh = grid(nx, ny, [0.0; 3], [0.05, 0.0, 0.0], [0.0, 0.05, 0.0]);
    for p in &mut mesh.positions {
        p[2] = rng.gen_range(-roughness..=roughness);
    }
    let colors = (0..mesh.vertex_count())
        .map(|_| [rng.gen_range(0.0..=1.0), rng.gen_range(0.0..=1.0), rng.gen_range(0.0..=1.0)])
        .collect();
    mesh.with_colors(colors).expect("colors in range")
}

/// A floor with smooth bump-shaped objects, plus per-vertex features and
/// instance labels.
#[derive(Debug, Clone)]
pub struct RoomScene {
    pub mesh: TriMesh,
    /// Geometry-like features: one axis per object shape class plus a floor axis.
    pub features_3d: VertexFeatures,
    /// Colour-like features: one axis per object plus a floor axis.
    pub features_2d: VertexFeatures,
    /// Instance id per vertex; 0 on the floor.
    pub gt: Vec<u64>,
}

struct Bump {
    center: [f64; 2],
    radius: f64,
    height: f64,
    class: usize,
}

impl RoomScene {
    /// Writes `<scene>.ply` (binary), `<scene>.3d.fmat`, `<scene>.2d.fmat`
    /// and `<scene>.gt.txt` into `dir`.
    pub fn write(&self, dir: impl AsRef<std::path::Path>, scene: &str) -> crate::error::Result<()> {
        let dir = dir.as_ref();
        crate::mesh::ply::save_ply(
            dir.join(format!("{scene}.ply")),
            &self.mesh,
            crate::mesh::ply::PlyFormat::BinaryLittleEndian,
        )?;
        self.features_3d.save(dir.join(format!("{scene}.3d.fmat")))?;
        self.features_2d.save(dir.join(format!("{scene}.2d.fmat")))?;
        crate::io::write_atomic(
            dir.join(format!("{scene}.gt.txt")),
            crate::io::integer_lines(self.gt.iter().copied()).as_bytes(),
        )
    }
}

/// Builds a `side x side` vertex floor with `n_objects` bumps placed on a
/// jittered lattice. The floor carries height noise of `roughness` meters so
/// that it oversegments into many pieces.
pub fn room(side: usize, n_objects: usize, roughness: f64, seed: u64) -> RoomScene {
    const DIM: usize = 16;
    let mut rng = rng(seed);
    let spacing = 0.02;
    let extent = spacing * (side - 1) as f64;
    let cells = (n_objects as f64).sqrt().ceil().max(1.0) as usize;
    let cell = extent / cells as f64;
    let mut bumps = Vec::with_capacity(n_objects);
    for o in 0..n_objects {
        let (cx, cy) = ((o % cells) as f64 + 0.5, (o / cells) as f64 + 0.5);
        bumps.push(Bump {
            center: [
                cx * cell + rng.gen_range(-0.1..0.1) * cell,
                cy * cell + rng.gen_range(-0.1..0.1) * cell,
            ],
            radius: cell * rng.gen_range(0.25..0.35),
            height: rng.gen_range(0.3..0.8) * cell,
            class: rng.gen_range(0..3),
        });
    }

    let mut mesh = grid(side, side, [0.0; 3], [spacing, 0.0, 0.0], [0.0, spacing, 0.0]);
    let n = mesh.vertex_count();
    let mut gt = vec![0u64; n];
    let mut colors = Vec::with_capacity(n);
    let mut f3 = Vec::with_capacity(n * DIM);
    let mut f2 = Vec::with_capacity(n * DIM);
    for (v, p) in mesh.positions.iter_mut().enumerate() {
        let mut owner = None;
        let mut z = rng.gen_range(-roughness..=roughness);
        for (o, b) in bumps.iter().enumerate() {
            let r2 = (p[0] - b.center[0]).powi(2) + (p[1] - b.center[1]).powi(2);
            if r2 < b.radius * b.radius {
                let t = 1.0 - r2 / (b.radius * b.radius);
                z += b.height * t.sqrt();
                owner = Some(o);
            }
        }
        p[2] = z;
        let (axis3, axis2) = match owner {
            Some(o) => {
                gt[v] = o as u64 + 1;
                (bumps[o].class, 3 + o % (DIM - 4))
            }
            None => (DIM - 1, DIM - 1),
        };
        let shade = match owner {
            Some(o) => [0.2 + 0.6 * ((o * 37) % 11) as f64 / 10.0, 0.3, 0.8 - 0.05 * (o % 10) as f64],
            None => [0.55, 0.5, 0.45],
        };
        colors.push(shade);
        for (block, axis) in [(&mut f3, axis3), (&mut f2, axis2)] {
            for k in 0..DIM {
                let base = if k == axis { 1.0 } else { 0.0 };
                block.push((base + rng.gen_range(-0.15..0.15)) as f32);
            }
        }
    }
    let mesh = mesh.with_colors(colors).expect("colors in range");
    RoomScene {
        mesh,
        features_3d: VertexFeatures::new(n, DIM, f3, Modality::Geometry3d).expect("finite"),
        features_2d: VertexFeatures::new(n, DIM, f2, Modality::Color2d).expect("finite"),
        gt,
    }
}
