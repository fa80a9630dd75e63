//! Taylor–Hood (P2 displacement, P1 pressure) block assembly.

use super::element::{p2_edge_values, p2_gradients, p2_values, EDGE_POINTS, EDGE_WEIGHTS, QUAD_POINTS, QUAD_WEIGHTS};
use super::mesh::Mesh;
use super::problem::{geometry, HydBc, MaterialField, MechBc, ProblemDef};
use super::sparse::CsrMatrix;
use crate::error::{Error, Result};

/// Global unknown numbering. Unknowns are ordered by node position (z, then
/// x) so that the coupled matrix has a bandwidth of a few mesh rows.
#[derive(Debug, Clone, PartialEq)]
pub struct DofMap {
    /// `ux[node]`, `uz[node]` for every P2 node.
    pub ux: Vec<usize>,
    pub uz: Vec<usize>,
    /// `p[vertex]`.
    pub p: Vec<usize>,
    pub n_dofs: usize,
}

impl DofMap {
    pub fn new(mesh: &Mesh) -> Self {
        let nn = mesh.n_p2_nodes();
        let nv = mesh.n_vertices();
        // (node, component) with component 0 = ux, 1 = uz, 2 = p.
        let mut items: Vec<(usize, u8)> = (0..nn).flat_map(|n| [(n, 0u8), (n, 1u8)]).collect();
        items.extend((0..nv).map(|v| (v, 2u8)));
        items.sort_by(|a, b| {
            let (pa, pb) = (mesh.p2_node_coord(a.0), mesh.p2_node_coord(b.0));
            pa[1].total_cmp(&pb[1]).then(pa[0].total_cmp(&pb[0])).then(a.1.cmp(&b.1))
        });
        let mut ux = vec![0; nn];
        let mut uz = vec![0; nn];
        let mut p = vec![0; nv];
        for (g, &(n, comp)) in items.iter().enumerate() {
            match comp {
                0 => ux[n] = g,
                1 => uz[n] = g,
                _ => p[n] = g,
            }
        }
        Self {
            ux,
            uz,
            p,
            n_dofs: items.len(),
        }
    }
}

/// Block operators before boundary conditions, in block-local numbering:
/// displacement unknown `2·node + component`, pressure unknown `vertex`.
#[derive(Debug, Clone)]
pub struct BlockOperators {
    /// Elastic stiffness (scaled by the stiffness coefficient).
    pub k: CsrMatrix,
    /// Divergence coupling `B_ij = ∫ ψ_i div φ_j`.
    pub b: CsrMatrix,
    /// Darcy operator `L_ij = ∫ mobility · k ∇ψ_i · ∇ψ_j`.
    pub l: CsrMatrix,
    /// Traction and body-force load on the displacement block.
    pub f: Vec<f64>,
    /// Boundary discharge `Q_i = ∫_Γ ψ_i q̂`.
    pub q: Vec<f64>,
}

pub fn assemble_blocks(problem: &ProblemDef, mat: &MaterialField) -> Result<BlockOperators> {
    let mesh = &problem.mesh;
    if mat.k_qp.len() != mesh.triangles.len() {
        return Err(Error::invalid("material field does not match the mesh"));
    }
    mat.validate()?;
    let nn = mesh.n_p2_nodes();
    let nv = mesh.n_vertices();
    let nu = problem.nu;
    let lame = problem.stiffness * nu / ((1.0 + nu) * (1.0 - 2.0 * nu));
    let shear = problem.stiffness / (2.0 * (1.0 + nu));

    let mut k_trip = Vec::with_capacity(mesh.triangles.len() * 144);
    let mut b_trip = Vec::with_capacity(mesh.triangles.len() * 36);
    let mut l_trip = Vec::with_capacity(mesh.triangles.len() * 9);
    let mut f = vec![0.0; 2 * nn];

    for t in 0..mesh.triangles.len() {
        let geom = geometry(mesh, t);
        let nodes = mesh.p2_nodes(t);
        let verts = mesh.triangles[t];
        let mut ke = [[0.0; 12]; 12];
        let mut be = [[0.0; 12]; 3];
        let mut le = [[0.0; 3]; 3];
        let mut fe = [0.0; 12];
        for (qi, (l, w)) in QUAD_POINTS.iter().zip(QUAD_WEIGHTS).enumerate() {
            let dv = w * geom.area;
            let g = p2_gradients(*l, &geom.grad_l);
            let n2 = p2_values(*l);
            // Local displacement unknown 2a + c.
            for a in 0..6 {
                for c in 0..2 {
                    let i = 2 * a + c;
                    fe[i] += dv * n2[a] * problem.body_force[c];
                    for bnode in 0..6 {
                        for d in 0..2 {
                            let j = 2 * bnode + d;
                            // ε(φ) : Ĉ : ε(φ') for vector shape functions e_c N_a and e_d N_b.
                            let gi = g[a];
                            let gj = g[bnode];
                            let mut v = lame * gi[c] * gj[d] + shear * gi[d] * gj[c];
                            if c == d {
                                v += shear * (gi[0] * gj[0] + gi[1] * gj[1]);
                            }
                            ke[i][j] += dv * v;
                        }
                    }
                }
            }
            for pi in 0..3 {
                for a in 0..6 {
                    for c in 0..2 {
                        be[pi][2 * a + c] += dv * l[pi] * g[a][c];
                    }
                }
                let kq = problem.mobility * mat.k_qp[t][qi];
                for pj in 0..3 {
                    let gl = geom.grad_l;
                    le[pi][pj] += dv * kq * (gl[pi][0] * gl[pj][0] + gl[pi][1] * gl[pj][1]);
                }
            }
        }
        let gdof = |i: usize| 2 * nodes[i / 2] + i % 2;
        for i in 0..12 {
            f[gdof(i)] += fe[i];
            for j in 0..12 {
                k_trip.push((gdof(i), gdof(j), ke[i][j]));
            }
        }
        for pi in 0..3 {
            for j in 0..12 {
                b_trip.push((verts[pi], gdof(j), be[pi][j]));
            }
            for pj in 0..3 {
                l_trip.push((verts[pi], verts[pj], le[pi][pj]));
            }
        }
    }

    let mut q = vec![0.0; nv];
    for &(e, tag) in &mesh.boundary {
        let [pa, pb] = mesh.edges[e];
        let (va, vb) = (mesh.vertices[pa], mesh.vertices[pb]);
        let len = ((vb[0] - va[0]).powi(2) + (vb[1] - va[1]).powi(2)).sqrt();
        let mid = nv + e;
        if let Some(MechBc::Traction(tr)) = problem.mech_bcs.get(&tag) {
            for (s, w) in EDGE_POINTS.iter().zip(EDGE_WEIGHTS) {
                let n = p2_edge_values(*s);
                for (node, nval) in [pa, pb, mid].into_iter().zip(n) {
                    for c in 0..2 {
                        f[2 * node + c] += w * len * nval * tr[c];
                    }
                }
            }
        }
        if let Some(HydBc::Flux(qn)) = problem.hyd_bcs.get(&tag) {
            q[pa] += 0.5 * len * qn;
            q[pb] += 0.5 * len * qn;
        }
    }

    Ok(BlockOperators {
        k: CsrMatrix::from_triplets(2 * nn, 2 * nn, k_trip),
        b: CsrMatrix::from_triplets(nv, 2 * nn, b_trip),
        l: CsrMatrix::from_triplets(nv, nv, l_trip),
        f,
        q,
    })
}

/// Dirichlet data in global numbering: `Some(value)` for constrained unknowns.
/// Displacement constraints apply to the increment and are therefore zero.
pub fn dirichlet_values(problem: &ProblemDef, dofs: &DofMap) -> Vec<Option<f64>> {
    let mesh = &problem.mesh;
    let nv = mesh.n_vertices();
    let mut fixed = vec![None; dofs.n_dofs];
    for &(e, tag) in &mesh.boundary {
        let [pa, pb] = mesh.edges[e];
        let nodes = [pa, pb, nv + e];
        if let Some(bc) = problem.mech_bcs.get(&tag) {
            for &n in &nodes {
                match bc {
                    MechBc::Fixed => {
                        fixed[dofs.ux[n]] = Some(0.0);
                        fixed[dofs.uz[n]] = Some(0.0);
                    }
                    MechBc::RollerX => fixed[dofs.ux[n]] = Some(0.0),
                    MechBc::RollerZ => fixed[dofs.uz[n]] = Some(0.0),
                    MechBc::Traction(_) => {}
                }
            }
        }
        if let Some(HydBc::Pressure(v)) = problem.hyd_bcs.get(&tag) {
            fixed[dofs.p[pa]] = Some(*v);
            fixed[dofs.p[pb]] = Some(*v);
        }
    }
    fixed
}

/// Coupled backward Euler operator `[[K, −Bᵀ], [−B, −(dt/storage) L]]`
/// acting on `(Δu, p_{n+1})` in global numbering, without boundary conditions.
pub fn coupled_matrix(blocks: &BlockOperators, dofs: &DofMap, dt_over_storage: f64) -> CsrMatrix {
    let udof = |i: usize| if i % 2 == 0 { dofs.ux[i / 2] } else { dofs.uz[i / 2] };
    let mut trip = Vec::with_capacity(blocks.k.nnz() + 2 * blocks.b.nnz() + blocks.l.nnz());
    for r in 0..blocks.k.nrows {
        for (c, v) in blocks.k.row(r) {
            trip.push((udof(r), udof(c), v));
        }
    }
    for r in 0..blocks.b.nrows {
        for (c, v) in blocks.b.row(r) {
            trip.push((dofs.p[r], udof(c), -v));
            trip.push((udof(c), dofs.p[r], -v));
        }
    }
    for r in 0..blocks.l.nrows {
        for (c, v) in blocks.l.row(r) {
            trip.push((dofs.p[r], dofs.p[c], -dt_over_storage * v));
        }
    }
    CsrMatrix::from_triplets(dofs.n_dofs, dofs.n_dofs, trip)
}

/// Symmetric elimination: constrained rows and columns are replaced by a
/// scaled identity, and their couplings are returned as a right-hand-side shift
/// `−A[:, D] g_D` together with the diagonal scale used.
pub fn eliminate_dirichlet(a: &CsrMatrix, fixed: &[Option<f64>]) -> (CsrMatrix, Vec<f64>, f64) {
    let n = a.nrows;
    let diag_scale = {
        let (s, c) = (0..n).fold((0.0, 0usize), |(s, c), i| {
            let d = a.get(i, i).abs();
            if d > 0.0 { (s + d, c + 1) } else { (s, c) }
        });
        if c > 0 { s / c as f64 } else { 1.0 }
    };
    let mut shift = vec![0.0; n];
    let mut trip = Vec::with_capacity(a.nnz());
    for r in 0..n {
        if let Some(g) = fixed[r] {
            trip.push((r, r, diag_scale));
            shift[r] = diag_scale * g;
            continue;
        }
        for (c, v) in a.row(r) {
            match fixed[c] {
                Some(g) => {
                    shift[r] -= v * g;
                    // Keep the slot so the pattern (and bandwidth) stays symmetric.
                    trip.push((r, c, 0.0));
                }
                None => trip.push((r, c, v)),
            }
        }
    }
    (CsrMatrix::from_triplets(n, n, trip), shift, diag_scale)
}
