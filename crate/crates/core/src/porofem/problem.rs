use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

use super::element::{TriGeom, QUAD_POINTS};
use super::mesh::{BoundaryTag, Mesh};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MechBc {
    /// Both displacement components zero.
    Fixed,
    /// `u_x = 0`, zero tangential traction.
    RollerX,
    /// `u_z = 0`, zero tangential traction.
    RollerZ,
    /// Prescribed total traction `σ n`.
    Traction([f64; 2]),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HydBc {
    Pressure(f64),
    /// Outward normal discharge `q · n`; zero is an impervious boundary.
    Flux(f64),
}

/// Nondimensional u–p initial–boundary value problem.
///
/// ```text
/// stiffness · div(Ĉ(ν) : ε(u)) − ∇p + b = 0
/// storage · ∂t div u + div q = 0,     q = −mobility · k ∇p
/// ```
///
/// `Ĉ` is the plane-strain stiffness with unit Young's modulus. Boundary loads
/// are held constant for `t > 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemDef {
    pub mesh: Mesh,
    pub nu: f64,
    pub dt: f64,
    pub t_end: f64,
    pub stiffness: f64,
    pub storage: f64,
    pub mobility: f64,
    pub mech_bcs: BTreeMap<BoundaryTag, MechBc>,
    pub hyd_bcs: BTreeMap<BoundaryTag, HydBc>,
    pub body_force: [f64; 2],
    /// Initial displacement per P2 node; zero when absent.
    pub u0: Option<Vec<[f64; 2]>>,
    /// Initial pressure per vertex; zero when absent. Backward Euler never
    /// reads it, but it is reported as the `t = 0` snapshot.
    pub p0: Option<Vec<f64>>,
}

impl ProblemDef {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::invalid(format!("time step must be positive, got {}", self.dt)));
        }
        if !(self.t_end >= 0.0) {
            return Err(Error::invalid(format!("end time must be nonnegative, got {}", self.t_end)));
        }
        if !(self.nu > 0.0 && self.nu < 0.5) {
            return Err(Error::invalid(format!("Poisson's ratio must lie in (0, 0.5), got {}", self.nu)));
        }
        for (name, v) in [("stiffness", self.stiffness), ("storage", self.storage), ("mobility", self.mobility)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::invalid(format!("{name} coefficient must be positive, got {v}")));
            }
        }
        for tag in BoundaryTag::ALL {
            if self.mesh.edges_with(tag).next().is_none() {
                continue;
            }
            if !self.mech_bcs.contains_key(&tag) {
                return Err(Error::invalid(format!("no mechanical condition for boundary {tag:?}")));
            }
            if !self.hyd_bcs.contains_key(&tag) {
                return Err(Error::invalid(format!("no hydraulic condition for boundary {tag:?}")));
            }
        }
        if let Some(u0) = &self.u0 {
            if u0.len() != self.mesh.n_p2_nodes() {
                return Err(Error::invalid("initial displacement has the wrong length"));
            }
        }
        if let Some(p0) = &self.p0 {
            if p0.len() != self.mesh.n_vertices() {
                return Err(Error::invalid("initial pressure has the wrong length"));
            }
        }
        Ok(())
    }

    /// Number of backward Euler steps to reach `t_end`.
    pub fn n_steps(&self) -> usize {
        (self.t_end / self.dt - 1e-9).ceil().max(0.0) as usize
    }
}

/// Permeability at the six quadrature points of every triangle.
#[derive(Debug, Clone, PartialEq)]
pub struct MaterialField {
    pub k_qp: Vec<[f64; 6]>,
}

impl MaterialField {
    pub fn uniform(mesh: &Mesh, k: f64) -> Result<Self> {
        Self::from_fn(mesh, |_, _, _| k)
    }

    /// `k` from a callback receiving the triangle index, the physical point
    /// and its barycentric coordinates.
    pub fn from_fn(mesh: &Mesh, mut f: impl FnMut(usize, [f64; 2], [f64; 3]) -> f64) -> Result<Self> {
        let mut k_qp = Vec::with_capacity(mesh.triangles.len());
        for (t, tri) in mesh.triangles.iter().enumerate() {
            let v = tri.map(|i| mesh.vertices[i]);
            let mut ks = [0.0; 6];
            for (q, l) in QUAD_POINTS.iter().enumerate() {
                let x = [
                    l[0] * v[0][0] + l[1] * v[1][0] + l[2] * v[2][0],
                    l[0] * v[0][1] + l[1] * v[1][1] + l[2] * v[2][1],
                ];
                ks[q] = f(t, x, *l);
            }
            k_qp.push(ks);
        }
        let field = Self { k_qp };
        field.validate()?;
        Ok(field)
    }

    /// `exp` of the linear interpolant of a nodal log-permeability.
    pub fn from_nodal_log(mesh: &Mesh, log_k: &[f64]) -> Result<Self> {
        if log_k.len() != mesh.n_vertices() {
            return Err(Error::invalid(format!(
                "log-permeability has {} values for {} vertices",
                log_k.len(),
                mesh.n_vertices()
            )));
        }
        Self::from_fn(mesh, |t, _, l| {
            let [a, b, c] = mesh.triangles[t];
            (l[0] * log_k[a] + l[1] * log_k[b] + l[2] * log_k[c]).exp()
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.k_qp.iter().flatten().any(|k| !(*k > 0.0) || !k.is_finite()) {
            return Err(Error::invalid("permeability must be positive and finite everywhere"));
        }
        Ok(())
    }
}

pub(crate) fn geometry(mesh: &Mesh, t: usize) -> TriGeom {
    TriGeom::new(mesh.triangles[t].map(|i| mesh.vertices[i]))
}
