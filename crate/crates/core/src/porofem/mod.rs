//! Two-dimensional plane-strain poroelasticity on triangulated rectangles.
//!
//! Displacement uses quadratic and pressure linear Lagrange elements. Time is
//! discretized by backward Euler on the coupled system, with the matrix
//! factorized once per material field.

mod assembly;
mod banded;
mod element;
mod mesh;
mod problem;
mod solver;
mod sparse;
mod terzaghi;

pub use assembly::{assemble_blocks, coupled_matrix, dirichlet_values, eliminate_dirichlet, BlockOperators, DofMap};
pub use banded::BandedLu;
pub use element::{p1_values, p2_gradients, p2_values, TriGeom};
pub use mesh::{build_structured_mesh, BoundaryTag, Mesh};
pub use problem::{HydBc, MaterialField, MechBc, ProblemDef};
pub use solver::{solve_transient, NodalState, OutputGrid, PoroSolver, Sampler, TransientSolution, Variable};
pub use sparse::CsrMatrix;
pub use terzaghi::{terzaghi_pressure, terzaghi_settlement};

use std::io::Write;

/// Write sampled fields as CSV with columns `x,z,t,u_x,u_z,p`.
pub fn write_fields_csv(sol: &TransientSolution, mut out: impl Write) -> std::io::Result<()> {
    writeln!(out, "x,z,t,u_x,u_z,p")?;
    let np = sol.grid.points.len();
    for (it, &t) in sol.grid.times.iter().enumerate() {
        for (ip, pt) in sol.grid.points.iter().enumerate() {
            let s = sol.sampled[it * np + ip];
            writeln!(out, "{},{},{t},{:e},{:e},{:e}", pt[0], pt[1], s[0], s[1], s[2])?;
        }
    }
    Ok(())
}
