use serde::{Deserialize, Serialize};
use std::collections::HashMap;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BoundaryTag {
    Top,
    Bottom,
    Left,
    Right,
    LeftMidlayer,
}

impl BoundaryTag {
    pub const ALL: [BoundaryTag; 5] = [
        BoundaryTag::Top,
        BoundaryTag::Bottom,
        BoundaryTag::Left,
        BoundaryTag::Right,
        BoundaryTag::LeftMidlayer,
    ];
}

/// Triangulation with the edge structure needed for quadratic elements.
///
/// Local P2 numbering on a triangle `[a, b, c]` is `a, b, c, m(ab), m(bc), m(ca)`;
/// `triangle_edges[t]` lists the edges in that order. P2 node `v < n_vertices`
/// is vertex `v`; node `n_vertices + e` is the midpoint of edge `e`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mesh {
    pub vertices: Vec<[f64; 2]>,
    pub triangles: Vec<[usize; 3]>,
    pub edges: Vec<[usize; 2]>,
    pub edge_midpoints: Vec<[f64; 2]>,
    pub triangle_edges: Vec<[usize; 3]>,
    /// Boundary edges and their tag.
    pub boundary: Vec<(usize, BoundaryTag)>,
}

/// Uniform grid of `nx × nz` rectangles on `[0, lx] × [0, lz]`, each split
/// along its lower-left to upper-right diagonal.
pub fn build_structured_mesh(nx: usize, nz: usize, lx: f64, lz: f64) -> Result<Mesh> {
    if nx == 0 || nz == 0 {
        return Err(Error::invalid(format!("mesh needs at least one cell per direction (got {nx}×{nz})")));
    }
    if !(lx > 0.0 && lz > 0.0) {
        return Err(Error::invalid(format!("domain extents must be positive (got {lx}×{lz})")));
    }
    let vid = |i: usize, j: usize| j * (nx + 1) + i;
    let mut vertices = Vec::with_capacity((nx + 1) * (nz + 1));
    for j in 0..=nz {
        for i in 0..=nx {
            vertices.push([lx * i as f64 / nx as f64, lz * j as f64 / nz as f64]);
        }
    }
    let mut triangles = Vec::with_capacity(2 * nx * nz);
    for j in 0..nz {
        for i in 0..nx {
            let (a, b, c, d) = (vid(i, j), vid(i + 1, j), vid(i + 1, j + 1), vid(i, j + 1));
            triangles.push([a, b, c]);
            triangles.push([a, c, d]);
        }
    }
    let mut mesh = Mesh::from_triangles(vertices, triangles)?;
    mesh.boundary = mesh
        .boundary
        .iter()
        .map(|&(e, _)| {
            let [p, q] = mesh.edges[e];
            let (a, b) = (mesh.vertices[p], mesh.vertices[q]);
            let tag = if a[1] == 0.0 && b[1] == 0.0 {
                BoundaryTag::Bottom
            } else if a[1] == lz && b[1] == lz {
                BoundaryTag::Top
            } else if a[0] == 0.0 && b[0] == 0.0 {
                BoundaryTag::Left
            } else {
                BoundaryTag::Right
            };
            (e, tag)
        })
        .collect();
    mesh.validate()?;
    Ok(mesh)
}

impl Mesh {
    /// Builds edge tables from a vertex/triangle list. Boundary edges get a
    /// provisional `Bottom` tag that callers are expected to overwrite.
    pub fn from_triangles(vertices: Vec<[f64; 2]>, triangles: Vec<[usize; 3]>) -> Result<Self> {
        let mut lookup: HashMap<(usize, usize), usize> = HashMap::new();
        let mut edges = Vec::new();
        let mut count = Vec::new();
        let mut triangle_edges = Vec::with_capacity(triangles.len());
        for tri in &triangles {
            if tri.iter().any(|&v| v >= vertices.len()) {
                return Err(Error::invalid("triangle references a missing vertex"));
            }
            let mut te = [0; 3];
            for k in 0..3 {
                let (p, q) = (tri[k], tri[(k + 1) % 3]);
                let key = (p.min(q), p.max(q));
                let e = *lookup.entry(key).or_insert_with(|| {
                    edges.push([key.0, key.1]);
                    count.push(0usize);
                    edges.len() - 1
                });
                count[e] += 1;
                te[k] = e;
            }
            triangle_edges.push(te);
        }
        let edge_midpoints = edges
            .iter()
            .map(|&[p, q]| {
                let (a, b): ([f64; 2], [f64; 2]) = (vertices[p], vertices[q]);
                [0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1])]
            })
            .collect();
        let boundary = count
            .iter()
            .enumerate()
            .filter(|(_, &c)| c == 1)
            .map(|(e, _)| (e, BoundaryTag::Bottom))
            .collect();
        Ok(Self {
            vertices,
            triangles,
            edges,
            edge_midpoints,
            triangle_edges,
            boundary,
        })
    }

    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    /// Vertices plus edge midpoints.
    pub fn n_p2_nodes(&self) -> usize {
        self.vertices.len() + self.edges.len()
    }

    pub fn p2_node_coord(&self, node: usize) -> [f64; 2] {
        if node < self.vertices.len() {
            self.vertices[node]
        } else {
            self.edge_midpoints[node - self.vertices.len()]
        }
    }

    /// Global P2 node indices of triangle `t` in local order.
    pub fn p2_nodes(&self, t: usize) -> [usize; 6] {
        let [a, b, c] = self.triangles[t];
        let [e0, e1, e2] = self.triangle_edges[t];
        let nv = self.vertices.len();
        [a, b, c, nv + e0, nv + e1, nv + e2]
    }

    pub fn triangle_area(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangles[t].map(|v| self.vertices[v]);
        0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]))
    }

    /// Retags `Left` edges whose midpoint lies strictly inside `(z0, z1)`.
    pub fn tag_left_segment(&mut self, z0: f64, z1: f64) {
        for (e, tag) in self.boundary.iter_mut() {
            let z = self.edge_midpoints[*e][1];
            if *tag == BoundaryTag::Left && z > z0 && z < z1 {
                *tag = BoundaryTag::LeftMidlayer;
            }
        }
    }

    /// Edges carrying `tag`.
    pub fn edges_with(&self, tag: BoundaryTag) -> impl Iterator<Item = usize> + '_ {
        self.boundary.iter().filter(move |(_, t)| *t == tag).map(|(e, _)| *e)
    }

    pub fn validate(&self) -> Result<()> {
        for t in 0..self.triangles.len() {
            let area = self.triangle_area(t);
            if !(area > 0.0) {
                return Err(Error::invalid(format!("triangle {t} is not counterclockwise (area {area})")));
            }
        }
        let mut seen = vec![false; self.edges.len()];
        for &(e, _) in &self.boundary {
            if seen[e] {
                return Err(Error::invalid(format!("boundary edge {e} tagged twice")));
            }
            seen[e] = true;
        }
        Ok(())
    }

    /// Index of a triangle containing `p` and its barycentric coordinates.
    pub fn locate(&self, p: [f64; 2]) -> Option<(usize, [f64; 3])> {
        const SLACK: f64 = 1e-10;
        let mut best: Option<(usize, [f64; 3], f64)> = None;
        for t in 0..self.triangles.len() {
            let l = self.barycentric(t, p);
            let worst = l.iter().cloned().fold(f64::INFINITY, f64::min);
            if worst >= -SLACK {
                return Some((t, l));
            }
            if best.as_ref().is_none_or(|b| worst > b.2) {
                best = Some((t, l, worst));
            }
        }
        // Points marginally outside (round-off at the hull) snap to the nearest element.
        best.filter(|b| b.2 > -1e-6).map(|b| (b.0, b.1))
    }

    pub fn barycentric(&self, t: usize, p: [f64; 2]) -> [f64; 3] {
        let [a, b, c] = self.triangles[t].map(|v| self.vertices[v]);
        let det = (b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]);
        let l1 = ((p[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (p[1] - a[1])) / det;
        let l2 = ((b[0] - a[0]) * (p[1] - a[1]) - (p[0] - a[0]) * (b[1] - a[1])) / det;
        [1.0 - l1 - l2, l1, l2]
    }
}
