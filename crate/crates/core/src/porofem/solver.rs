use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

use super::assembly::{assemble_blocks, coupled_matrix, dirichlet_values, eliminate_dirichlet, BlockOperators, DofMap};
use super::banded::BandedLu;
use super::element::p2_values;
use super::mesh::Mesh;
use super::problem::{MaterialField, ProblemDef};
use super::sparse::CsrMatrix;
use crate::error::{Error, Result};

/// Backward error above which one round of iterative refinement is applied.
const REFINE_ABOVE: f64 = 1e-13;

/// A primary field component.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Variable {
    #[serde(rename = "u_x")]
    Ux,
    #[serde(rename = "u_z")]
    Uz,
    #[serde(rename = "p")]
    P,
}

impl Variable {
    pub const ALL: [Variable; 3] = [Variable::Ux, Variable::Uz, Variable::P];

    pub fn as_str(self) -> &'static str {
        match self {
            Variable::Ux => "u_x",
            Variable::Uz => "u_z",
            Variable::P => "p",
        }
    }

    /// File-name friendly form, e.g. `uz`.
    pub fn short(self) -> &'static str {
        match self {
            Variable::Ux => "ux",
            Variable::Uz => "uz",
            Variable::P => "p",
        }
    }

    fn slot(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Variable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Variable {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "u_x" | "ux" => Ok(Variable::Ux),
            "u_z" | "uz" => Ok(Variable::Uz),
            "p" => Ok(Variable::P),
            other => Err(Error::invalid(format!("unknown variable '{other}' (expected u_x, u_z or p)"))),
        }
    }
}

/// Spatial output points crossed with output times. Flattened coordinates are
/// time-major: index `it · n_points + ip`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputGrid {
    pub points: Vec<[f64; 2]>,
    pub times: Vec<f64>,
}

impl OutputGrid {
    /// Tensor grid, x fastest.
    pub fn tensor(xs: &[f64], zs: &[f64], times: &[f64]) -> Self {
        let points = zs.iter().flat_map(|&z| xs.iter().map(move |&x| [x, z])).collect();
        Self {
            points,
            times: times.to_vec(),
        }
    }

    pub fn len(&self) -> usize {
        self.points.len() * self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `(x, z, t)` rows in flattened order.
    pub fn coords(&self) -> Vec<[f64; 3]> {
        self.times
            .iter()
            .flat_map(|&t| self.points.iter().map(move |p| [p[0], p[1], t]))
            .collect()
    }
}

/// Nodal state: displacement per P2 node (block layout `2·node + c`) and
/// pressure per vertex.
#[derive(Debug, Clone, PartialEq)]
pub struct NodalState {
    pub u: Vec<f64>,
    pub p: Vec<f64>,
}

impl NodalState {
    fn lerp(a: &NodalState, b: &NodalState, w: f64) -> NodalState {
        let mix = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(x, y)| (1.0 - w) * x + w * y).collect();
        NodalState {
            u: mix(&a.u, &b.u),
            p: mix(&a.p, &b.p),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransientSolution {
    pub grid: OutputGrid,
    /// One state per output time.
    pub states: Vec<NodalState>,
    /// `(u_x, u_z, p)` per flattened output coordinate.
    pub sampled: Vec<[f64; 3]>,
    /// Largest normwise relative residual over all steps.
    pub max_residual: f64,
}

impl TransientSolution {
    /// One dataset row: the sampled component over all output coordinates.
    pub fn row(&self, var: Variable) -> Vec<f64> {
        self.sampled.iter().map(|s| s[var.slot()]).collect()
    }

    /// Value at output time `it`, point `ip`.
    pub fn at(&self, var: Variable, it: usize, ip: usize) -> f64 {
        self.sampled[it * self.grid.points.len() + ip][var.slot()]
    }
}

/// Finite element evaluation at fixed points.
#[derive(Debug, Clone)]
pub struct Sampler {
    entries: Vec<([usize; 6], [f64; 6], [usize; 3], [f64; 3])>,
}

impl Sampler {
    pub fn new(mesh: &Mesh, points: &[[f64; 2]]) -> Result<Self> {
        let entries = points
            .iter()
            .map(|&p| {
                let (t, l) = mesh
                    .locate(p)
                    .ok_or_else(|| Error::invalid(format!("output point ({}, {}) is outside the mesh", p[0], p[1])))?;
                Ok((mesh.p2_nodes(t), p2_values(l), mesh.triangles[t], l))
            })
            .collect::<Result<_>>()?;
        Ok(Self { entries })
    }

    pub fn sample(&self, state: &NodalState) -> Vec<[f64; 3]> {
        self.entries
            .iter()
            .map(|(nodes, n2, verts, n1)| {
                let mut out = [0.0; 3];
                for (node, w) in nodes.iter().zip(n2) {
                    out[0] += w * state.u[2 * node];
                    out[1] += w * state.u[2 * node + 1];
                }
                for (v, w) in verts.iter().zip(n1) {
                    out[2] += w * state.p[*v];
                }
                out
            })
            .collect()
    }
}

/// A factorized poroelastic system for one material field. The matrix does
/// not change between steps, so a single factorization serves the whole run.
pub struct PoroSolver {
    problem: ProblemDef,
    blocks: BlockOperators,
    dofs: DofMap,
    system: CsrMatrix,
    fixed: Vec<Option<f64>>,
    shift: Vec<f64>,
    lu: BandedLu,
    system_norm: f64,
}

impl PoroSolver {
    pub fn new(problem: &ProblemDef, mat: &MaterialField) -> Result<Self> {
        problem.validate()?;
        let blocks = assemble_blocks(problem, mat)?;
        let dofs = DofMap::new(&problem.mesh);
        let full = coupled_matrix(&blocks, &dofs, problem.dt / problem.storage);
        let fixed = dirichlet_values(problem, &dofs);
        let (system, shift, _) = eliminate_dirichlet(&full, &fixed);
        let lu = BandedLu::factor(&system).map_err(|e| {
            let n_fixed = fixed.iter().filter(|f| f.is_some()).count();
            Error::numerical(format!(
                "{e}; {n_fixed} of {} unknowns constrained (check that rigid motions are suppressed)",
                dofs.n_dofs
            ))
        })?;
        let system_norm = (0..system.nrows)
            .map(|r| system.row(r).map(|(_, v)| v.abs()).sum::<f64>())
            .fold(0.0, f64::max);
        Ok(Self {
            problem: problem.clone(),
            blocks,
            dofs,
            system,
            fixed,
            shift,
            lu,
            system_norm,
        })
    }

    pub fn blocks(&self) -> &BlockOperators {
        &self.blocks
    }

    pub fn dofs(&self) -> &DofMap {
        &self.dofs
    }

    fn initial_state(&self) -> NodalState {
        let mesh = &self.problem.mesh;
        let u = match &self.problem.u0 {
            Some(u0) => u0.iter().flat_map(|v| [v[0], v[1]]).collect(),
            None => vec![0.0; 2 * mesh.n_p2_nodes()],
        };
        let p = self.problem.p0.clone().unwrap_or_else(|| vec![0.0; mesh.n_vertices()]);
        NodalState { u, p }
    }

    /// One backward Euler step from `state`; returns the relative residual.
    fn step(&self, state: &mut NodalState) -> Result<f64> {
        let d = &self.dofs;
        let nn = self.problem.mesh.n_p2_nodes();
        let ku = self.blocks.k.mul_vec(&state.u);
        let c = self.problem.dt / self.problem.storage;
        let mut rhs = vec![0.0; d.n_dofs];
        for n in 0..nn {
            rhs[d.ux[n]] = self.blocks.f[2 * n] - ku[2 * n];
            rhs[d.uz[n]] = self.blocks.f[2 * n + 1] - ku[2 * n + 1];
        }
        for (v, &g) in d.p.iter().enumerate() {
            rhs[g] = c * self.blocks.q[v];
        }
        for (i, r) in rhs.iter_mut().enumerate() {
            *r = if self.fixed[i].is_some() { self.shift[i] } else { *r + self.shift[i] };
        }

        let mut x = rhs.clone();
        self.lu.solve_in_place(&mut x);
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Divergence("non-finite values in the solution".into()));
        }
        let mut residual = self.residual(&x, &rhs);
        let mut rel = self.relative_residual(&residual, &x, &rhs);
        if rel > REFINE_ABOVE {
            let mut corr = residual.clone();
            self.lu.solve_in_place(&mut corr);
            x.iter_mut().zip(&corr).for_each(|(xi, ci)| *xi -= ci);
            residual = self.residual(&x, &rhs);
            rel = self.relative_residual(&residual, &x, &rhs);
        }
        for n in 0..nn {
            state.u[2 * n] += x[d.ux[n]];
            state.u[2 * n + 1] += x[d.uz[n]];
        }
        for (v, &g) in d.p.iter().enumerate() {
            state.p[v] = x[g];
        }
        Ok(rel)
    }

    /// Normwise backward error `‖r‖∞ / (‖A‖∞ ‖x‖∞ + ‖b‖∞)`.
    fn relative_residual(&self, residual: &[f64], x: &[f64], rhs: &[f64]) -> f64 {
        let inf = |v: &[f64]| v.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let denom = self.system_norm * inf(x) + inf(rhs);
        if denom > 0.0 {
            inf(residual) / denom
        } else {
            inf(residual)
        }
    }

    fn residual(&self, x: &[f64], rhs: &[f64]) -> Vec<f64> {
        let mut r = self.system.mul_vec(x);
        r.iter_mut().zip(rhs).for_each(|(ri, bi)| *ri -= bi);
        r
    }

    /// March from the initial condition, keeping the states needed at the
    /// output times. Off-step times are linearly interpolated.
    pub fn solve(&self, output: &OutputGrid) -> Result<TransientSolution> {
        let dt = self.problem.dt;
        let mut needed: Vec<(usize, usize, f64)> = Vec::with_capacity(output.times.len());
        for &t in &output.times {
            if !(t >= 0.0) || t > self.problem.t_end + 1e-9 * dt {
                return Err(Error::invalid(format!(
                    "output time {t} outside [0, {}]",
                    self.problem.t_end
                )));
            }
            let s = t / dt;
            let r = s.round();
            if (s - r).abs() < 1e-9 {
                needed.push((r as usize, r as usize, 0.0));
            } else {
                needed.push((s.floor() as usize, s.ceil() as usize, s - s.floor()));
            }
        }
        let last = needed.iter().map(|n| n.1).max().unwrap_or(0);
        let mut keep: Vec<Option<NodalState>> = vec![None; last + 1];
        let mut want = vec![false; last + 1];
        for &(a, b, _) in &needed {
            want[a] = true;
            want[b] = true;
        }

        let mut state = self.initial_state();
        if want[0] {
            keep[0] = Some(state.clone());
        }
        let mut max_residual = 0.0f64;
        for n in 1..=last {
            max_residual = max_residual.max(self.step(&mut state)?);
            if want[n] {
                keep[n] = Some(state.clone());
            }
        }
        let states: Vec<NodalState> = needed
            .iter()
            .map(|&(a, b, w)| {
                let sa = keep[a].as_ref().expect("state recorded");
                if a == b {
                    sa.clone()
                } else {
                    NodalState::lerp(sa, keep[b].as_ref().expect("state recorded"), w)
                }
            })
            .collect();
        let sampler = Sampler::new(&self.problem.mesh, &output.points)?;
        let sampled = states.iter().flat_map(|s| sampler.sample(s)).collect();
        Ok(TransientSolution {
            grid: output.clone(),
            states,
            sampled,
            max_residual,
        })
    }
}

/// Assemble, factorize and march in one call.
pub fn solve_transient(problem: &ProblemDef, mat: &MaterialField, output: &OutputGrid) -> Result<TransientSolution> {
    PoroSolver::new(problem, mat)?.solve(output)
}
