//! Gaussian log-permeability fields from a truncated Karhunen–Loève expansion.
//!
//! The covariance eigenproblem is discretized with the Nyström method on a
//! quadrature grid: with `W = diag(w)`, the symmetric matrix `W½ C W½` is
//! diagonalized and the nodal eigenfunctions are `e_j(x_i) = v_ij / √w_i`,
//! which makes them orthonormal in the discrete weighted inner product.

mod lhs;
mod normal;

pub use lhs::{lhs_normal, SampleMatrix, GENERATOR_ID};
pub use normal::{inv_norm_cdf, norm_cdf};

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative cutoff below which eigenvalues are clamped to zero.
pub const EIGEN_CLAMP: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CovarianceKind {
    /// `σ² exp(-[(Δx/l_x)² + (Δz/l_z)²])`
    GaussianAnisotropic2d,
    /// `σ² exp(-(Δx/l_x)²)`, independent of z.
    Gaussian1dHorizontal,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CovarianceSpec {
    pub kind: CovarianceKind,
    pub sigma_kappa: f64,
    pub l_x: f64,
    /// Unused by the horizontal kernel.
    pub l_z: f64,
}

impl CovarianceSpec {
    pub fn anisotropic(sigma_kappa: f64, l_x: f64, l_z: f64) -> Self {
        Self {
            kind: CovarianceKind::GaussianAnisotropic2d,
            sigma_kappa,
            l_x,
            l_z,
        }
    }

    pub fn horizontal(sigma_kappa: f64, l_x: f64) -> Self {
        Self {
            kind: CovarianceKind::Gaussian1dHorizontal,
            sigma_kappa,
            l_x,
            l_z: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma_kappa >= 0.0) || !self.sigma_kappa.is_finite() {
            return Err(Error::invalid(format!("sigma_kappa must be ≥ 0, got {}", self.sigma_kappa)));
        }
        if !(self.l_x > 0.0) || !self.l_x.is_finite() {
            return Err(Error::invalid(format!("l_x must be > 0, got {}", self.l_x)));
        }
        if self.kind == CovarianceKind::GaussianAnisotropic2d && !(self.l_z > 0.0 && self.l_z.is_finite()) {
            return Err(Error::invalid(format!("l_z must be > 0, got {}", self.l_z)));
        }
        Ok(())
    }

    /// Kernel value between two points.
    pub fn eval(&self, a: [f64; 2], b: [f64; 2]) -> f64 {
        let var = self.sigma_kappa * self.sigma_kappa;
        let dx = (a[0] - b[0]) / self.l_x;
        match self.kind {
            CovarianceKind::GaussianAnisotropic2d => {
                let dz = (a[1] - b[1]) / self.l_z;
                var * (-(dx * dx + dz * dz)).exp()
            }
            CovarianceKind::Gaussian1dHorizontal => var * (-(dx * dx)).exp(),
        }
    }
}

/// Quadrature nodes and weights for the Fredholm integral.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadGrid {
    pub points: Vec<[f64; 2]>,
    pub weights: Vec<f64>,
}

fn trapezoid_weights(nodes: &[f64]) -> Vec<f64> {
    let n = nodes.len();
    if n == 1 {
        return vec![1.0];
    }
    let mut w = vec![0.0; n];
    for i in 0..n - 1 {
        let h = 0.5 * (nodes[i + 1] - nodes[i]);
        w[i] += h;
        w[i + 1] += h;
    }
    w
}

impl QuadGrid {
    pub fn new(points: Vec<[f64; 2]>, weights: Vec<f64>) -> Result<Self> {
        let grid = Self { points, weights };
        grid.validate()?;
        Ok(grid)
    }

    /// Tensor-product trapezoidal rule; points ordered x-fastest.
    pub fn trapezoid_2d(xs: &[f64], zs: &[f64]) -> Result<Self> {
        let (wx, wz) = (trapezoid_weights(xs), trapezoid_weights(zs));
        let mut points = Vec::with_capacity(xs.len() * zs.len());
        let mut weights = Vec::with_capacity(xs.len() * zs.len());
        for (j, &z) in zs.iter().enumerate() {
            for (i, &x) in xs.iter().enumerate() {
                points.push([x, z]);
                weights.push(wx[i] * wz[j]);
            }
        }
        Self::new(points, weights)
    }

    /// Trapezoidal rule along x; the z coordinate of every point is `z`.
    pub fn trapezoid_1d(xs: &[f64], z: f64) -> Result<Self> {
        let weights = trapezoid_weights(xs);
        Self::new(xs.iter().map(|&x| [x, z]).collect(), weights)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        if self.points.is_empty() {
            return Err(Error::invalid("quadrature grid is empty"));
        }
        if self.points.len() != self.weights.len() {
            return Err(Error::invalid(format!(
                "{} points but {} weights",
                self.points.len(),
                self.weights.len()
            )));
        }
        if let Some(w) = self.weights.iter().find(|w| !(**w > 0.0) || !w.is_finite()) {
            return Err(Error::invalid(format!("quadrature weight {w} is not positive")));
        }
        Ok(())
    }
}

/// Dense kernel matrix `C_ij = C(x_i, x_j)`.
pub fn covariance_matrix(points: &[[f64; 2]], spec: &CovarianceSpec) -> Result<DMatrix<f64>> {
    spec.validate()?;
    if points.is_empty() {
        return Err(Error::invalid("no points given"));
    }
    if points.iter().any(|p| !p[0].is_finite() || !p[1].is_finite()) {
        return Err(Error::invalid("non-finite coordinate"));
    }
    let n = points.len();
    let mut c = DMatrix::zeros(n, n);
    for j in 0..n {
        for i in j..n {
            let v = spec.eval(points[i], points[j]);
            c[(i, j)] = v;
            c[(j, i)] = v;
        }
    }
    Ok(c)
}

/// Discrete Karhunen–Loève basis: eigenpairs of the covariance operator on a
/// quadrature grid.
#[derive(Debug, Clone, PartialEq)]
pub struct KLBasis {
    /// Descending, clamped to be nonnegative.
    pub eigenvalues: DVector<f64>,
    /// Column `j` holds `e_j(x_i)`.
    pub eigenfunctions: DMatrix<f64>,
    pub mu_kappa: f64,
    pub kappa_star: f64,
}

/// Nyström solution of the homogeneous Fredholm equation.
pub fn kl_decompose(grid: &QuadGrid, spec: &CovarianceSpec, mu_kappa: f64, kappa_star: f64) -> Result<KLBasis> {
    grid.validate()?;
    let n = grid.len();
    let mut a = covariance_matrix(&grid.points, spec)?;
    let sqrt_w: Vec<f64> = grid.weights.iter().map(|w| w.sqrt()).collect();
    for j in 0..n {
        for i in 0..n {
            a[(i, j)] *= sqrt_w[i] * sqrt_w[j];
        }
    }
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::numerical("covariance matrix has non-finite entries"));
    }
    let eig = SymmetricEigen::try_new(a, f64::EPSILON, 0)
        .ok_or_else(|| Error::numerical("symmetric eigensolver did not converge"))?;

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&p, &q| eig.eigenvalues[q].total_cmp(&eig.eigenvalues[p]));
    let lead = eig.eigenvalues[order[0]].max(0.0);

    let mut eigenvalues = DVector::zeros(n);
    let mut eigenfunctions = DMatrix::zeros(n, n);
    for (col, &src) in order.iter().enumerate() {
        let lam = eig.eigenvalues[src];
        eigenvalues[col] = if lam > EIGEN_CLAMP * lead { lam } else { 0.0 };
        let v = eig.eigenvectors.column(src);
        // Largest-magnitude entry is made positive; ties go to the first index.
        let mut pivot = 0;
        for i in 1..n {
            if v[i].abs() > v[pivot].abs() {
                pivot = i;
            }
        }
        let sign = if v[pivot] < 0.0 { -1.0 } else { 1.0 };
        for i in 0..n {
            eigenfunctions[(i, col)] = sign * v[i] / sqrt_w[i];
        }
    }
    Ok(KLBasis {
        eigenvalues,
        eigenfunctions,
        mu_kappa,
        kappa_star,
    })
}

impl KLBasis {
    /// Number of grid points `N_s`, which is also the number of modes stored.
    pub fn n_points(&self) -> usize {
        self.eigenfunctions.nrows()
    }

    /// Modes with a nonzero (unclamped) eigenvalue.
    pub fn n_active(&self) -> usize {
        self.eigenvalues.iter().take_while(|&&l| l > 0.0).count()
    }

    fn check_modes(&self, xi_row: &[f64], m: usize) -> Result<()> {
        if m > self.n_points() {
            return Err(Error::invalid(format!(
                "{m} modes requested but the basis has {}",
                self.n_points()
            )));
        }
        if xi_row.len() < m {
            return Err(Error::invalid(format!(
                "{m} modes requested but only {} coefficients supplied",
                xi_row.len()
            )));
        }
        Ok(())
    }

    /// Zero-mean fluctuation `Σ_{j<m} √λ_j e_j(x_i) ξ_j` at each grid point.
    pub fn fluctuation(&self, xi_row: &[f64], m: usize) -> Result<Vec<f64>> {
        self.check_modes(xi_row, m)?;
        let n = self.n_points();
        let mut g = vec![0.0; n];
        for j in 0..m {
            let lam = self.eigenvalues[j];
            if lam == 0.0 {
                continue;
            }
            let amp = lam.sqrt() * xi_row[j];
            let col = self.eigenfunctions.column(j);
            for (gi, e) in g.iter_mut().zip(col.iter()) {
                *gi += amp * e;
            }
        }
        Ok(g)
    }
}

/// `κ^M(x_i) = μ_κ + Σ_{j≤M} √λ_j e_j(x_i) ξ_j`.
pub fn log_field(basis: &KLBasis, xi_row: &[f64], m: usize) -> Result<Vec<f64>> {
    let mut g = basis.fluctuation(xi_row, m)?;
    g.iter_mut().for_each(|v| *v += basis.mu_kappa);
    Ok(g)
}

/// Nondimensional permeability `k^M(x_i) = exp(κ^M(x_i) − κ*)`.
pub fn permeability_field(basis: &KLBasis, xi_row: &[f64], m: usize) -> Result<Vec<f64>> {
    let kappa = log_field(basis, xi_row, m)?;
    Ok(kappa.into_iter().map(|v| (v - basis.kappa_star).exp()).collect())
}

/// Fraction of the spectrum captured by the leading `m` modes.
pub fn spectral_energy(basis: &KLBasis, m: usize) -> Result<f64> {
    if m > basis.eigenvalues.len() {
        return Err(Error::invalid(format!(
            "{m} modes requested but the basis has {}",
            basis.eigenvalues.len()
        )));
    }
    let total: f64 = basis.eigenvalues.iter().sum();
    if total == 0.0 {
        return Ok(1.0);
    }
    let head: f64 = basis.eigenvalues.iter().take(m).sum();
    Ok((head / total).min(1.0))
}

#[cfg(test)]
mod tests;
