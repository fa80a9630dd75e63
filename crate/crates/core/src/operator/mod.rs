//! Two-step DeepONet: fit a trunk basis and coefficient matrix, orthonormalize
//! the basis by QR, then regress the branch onto the rotated coefficients.
//!
//! The trunk emits `K − 1` features; a constant feature is appended as the
//! last basis column both during the fit and at inference.

mod metrics;

pub use metrics::{mean_predictor_error, relative_test_error, relative_test_error_rooted};

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::neuralnet::{adamw_train, lbfgs_minimize, LbfgsReport, Mlp, OptimizerConfig, TrainLog};
pub use crate::porofem::Variable;

/// Snapshots for one output variable.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainDataset {
    /// `N × M` expansion coefficients.
    pub xi: DMatrix<f64>,
    /// `N × m_y` sampled outputs.
    pub f: DMatrix<f64>,
    /// `m_y` evaluation points `(x, z, t)`.
    pub coords: Vec<[f64; 3]>,
    pub variable: Variable,
}

impl TrainDataset {
    pub fn new(xi: DMatrix<f64>, f: DMatrix<f64>, coords: Vec<[f64; 3]>, variable: Variable) -> Result<Self> {
        let ds = Self { xi, f, coords, variable };
        ds.validate()?;
        Ok(ds)
    }

    pub fn validate(&self) -> Result<()> {
        if self.xi.nrows() != self.f.nrows() {
            return Err(Error::invalid(format!(
                "input has {} rows but output has {}",
                self.xi.nrows(),
                self.f.nrows()
            )));
        }
        if self.f.ncols() != self.coords.len() {
            return Err(Error::invalid(format!(
                "output has {} columns but there are {} coordinates",
                self.f.ncols(),
                self.coords.len()
            )));
        }
        if self.f.nrows() == 0 || self.f.ncols() == 0 {
            return Err(Error::invalid("empty dataset"));
        }
        if self.xi.iter().chain(self.f.iter()).any(|v| !v.is_finite()) {
            return Err(Error::invalid("dataset contains non-finite entries"));
        }
        let mut sorted = self.coords.clone();
        sorted.sort_by(|a, b| a.iter().zip(b).map(|(x, y)| x.total_cmp(y)).find(|o| o.is_ne()).unwrap_or(std::cmp::Ordering::Equal));
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::invalid("duplicate evaluation coordinates"));
        }
        Ok(())
    }

    pub fn n_samples(&self) -> usize {
        self.f.nrows()
    }

    pub fn n_inputs(&self) -> usize {
        self.xi.ncols()
    }

    pub fn n_outputs(&self) -> usize {
        self.f.ncols()
    }

    /// Keep only the first `m` input columns.
    pub fn truncate_inputs(&self, m: usize) -> Result<Self> {
        if m == 0 || m > self.n_inputs() {
            return Err(Error::invalid(format!(
                "cannot keep {m} of {} input columns",
                self.n_inputs()
            )));
        }
        Ok(Self {
            xi: self.xi.columns(0, m).into_owned(),
            ..self.clone()
        })
    }
}

/// How the singular-value cut-off for the numerical rank is read.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "rule", content = "tau")]
pub enum RankThreshold {
    /// `σ_i ≥ τ · σ_1`.
    Relative(f64),
    /// `σ_i ≥ τ · max(N, m_y)`.
    SizeScaled(f64),
}

impl Default for RankThreshold {
    fn default() -> Self {
        RankThreshold::Relative(0.01)
    }
}

/// Numerical rank of `f` under the threshold rule.
pub fn estimate_rank_with(f: &DMatrix<f64>, rule: RankThreshold) -> Result<usize> {
    if f.is_empty() {
        return Err(Error::invalid("empty snapshot matrix"));
    }
    let sv = f.clone().singular_values();
    let s1 = sv.iter().copied().fold(0.0, f64::max);
    if s1 == 0.0 {
        return Ok(0);
    }
    let cut = match rule {
        RankThreshold::Relative(tau) => tau * s1,
        RankThreshold::SizeScaled(tau) => tau * f.nrows().max(f.ncols()) as f64,
    };
    Ok(sv.iter().filter(|&&s| s >= cut).count())
}

/// `#{i : σ_i ≥ τ σ_1}`.
pub fn estimate_rank(f: &DMatrix<f64>, tau: f64) -> Result<usize> {
    estimate_rank_with(f, RankThreshold::Relative(tau))
}

/// Basis size `min(round(multiplier · rank), cap)`.
pub fn choose_k(rank: usize, multiplier: f64, cap: usize) -> Result<usize> {
    if rank == 0 {
        return Err(Error::invalid("numerical rank is zero; the snapshots carry no signal"));
    }
    if !(1.0..=2.0).contains(&multiplier) {
        return Err(Error::invalid(format!("rank multiplier {multiplier} outside [1, 2]")));
    }
    Ok(((multiplier * rank as f64).round() as usize).min(cap).max(1))
}

fn coord_matrix(coords: &[[f64; 3]]) -> DMatrix<f64> {
    DMatrix::from_fn(3, coords.len(), |i, j| coords[j][i])
}

/// Trunk features with the constant column: `m_y × K`.
fn augmented_features(trunk: &Mlp, params: &[f64], coords: &DMatrix<f64>) -> Result<(crate::neuralnet::Tape, DMatrix<f64>)> {
    let tape = trunk.forward_tape_with(params, coords)?;
    let out = tape.output();
    let (k1, m) = out.shape();
    let phi = DMatrix::from_fn(m, k1 + 1, |i, j| if j < k1 { out[(j, i)] } else { 1.0 });
    Ok((tape, phi))
}

#[derive(Debug, Clone)]
pub struct TrunkFit {
    pub trunk: Mlp,
    /// `N × K` coefficients; the last column multiplies the constant basis.
    pub a: DMatrix<f64>,
    pub adam: TrainLog,
    pub lbfgs: Option<LbfgsReport>,
    /// Mean squared misfit at the end of training.
    pub loss: f64,
}

impl TrunkFit {
    pub fn k(&self) -> usize {
        self.a.ncols()
    }

    /// Augmented basis `Φ*` at `coords`.
    pub fn basis_at(&self, coords: &[[f64; 3]]) -> Result<DMatrix<f64>> {
        Ok(augmented_features(&self.trunk, &self.trunk.params, &coord_matrix(coords))?.1)
    }
}

/// Relative singular-value cut-off of the least-squares start for `A`.
pub const LSQ_START_CUTOFF: f64 = 1e-3;

fn split_a(p: &[f64], n_net: usize, n: usize, k: usize) -> DMatrix<f64> {
    DMatrix::from_column_slice(n, k, &p[n_net..n_net + n * k])
}

/// Loss `‖A_b Φᵀ − F_b‖² / (|b| m_y)` over the rows in `rows` and its gradient
/// with respect to the trunk parameters and the selected rows of `A`.
fn trunk_loss(
    trunk: &Mlp,
    p: &[f64],
    n: usize,
    k: usize,
    coords: &DMatrix<f64>,
    f: &DMatrix<f64>,
    rows: &[usize],
    grad: &mut [f64],
) -> Result<f64> {
    let n_net = trunk.n_params();
    let (tape, phi) = augmented_features(trunk, &p[..n_net], coords)?;
    let a = split_a(p, n_net, n, k);
    let m_y = f.ncols();
    let a_b = a.select_rows(rows);
    let mut resid = &a_b * phi.transpose();
    for (bi, &r) in rows.iter().enumerate() {
        for j in 0..m_y {
            resid[(bi, j)] -= f[(r, j)];
        }
    }
    let scale = 1.0 / (rows.len() * m_y) as f64;
    let loss = resid.norm_squared() * scale;
    resid *= 2.0 * scale;
    let ga = &resid * &phi;
    for (bi, &r) in rows.iter().enumerate() {
        for j in 0..k {
            grad[n_net + j * n + r] += ga[(bi, j)];
        }
    }
    // ∂L/∂Φ = Rᵀ A_b; the constant column carries no trainable parameters.
    let gphi = a_b.transpose() * &resid;
    let d_out = gphi.rows(0, k - 1).into_owned();
    trunk.backward_with(&p[..n_net], &tape, &d_out, &mut grad[..n_net]);
    Ok(loss)
}

/// Jointly fit the trunk and the coefficient matrix. `widths` must map the
/// three coordinates to `K − 1` features.
pub fn train_trunk(ds: &TrainDataset, widths: &[usize], opt: &OptimizerConfig) -> Result<TrunkFit> {
    ds.validate()?;
    if widths.first() != Some(&3) {
        return Err(Error::invalid("trunk input width must be 3 (x, z, t)"));
    }
    let k = widths.last().copied().unwrap_or(0) + 1;
    let (n, m_y) = (ds.n_samples(), ds.n_outputs());
    if k > m_y {
        return Err(Error::invalid(format!("basis size {k} exceeds the {m_y} output coordinates")));
    }
    let mut rng = ChaCha20Rng::seed_from_u64(opt.seed);
    let trunk = Mlp::glorot(widths, &mut rng)?;
    let coords = coord_matrix(&ds.coords);

    // Least-squares start for A against the initial features, truncated so
    // that nearly collinear random features do not get huge coefficients.
    let (_, phi0) = augmented_features(&trunk, &trunk.params, &coords)?;
    let svd = phi0.svd(true, true);
    let s1 = svd.singular_values.max();
    let a0t = svd
        .solve(&ds.f.transpose(), LSQ_START_CUTOFF * s1)
        .map_err(|e| Error::numerical(format!("least-squares start failed: {e}")))?;
    let n_net = trunk.n_params();
    let mut p = trunk.params.clone();
    p.extend(a0t.transpose().as_slice());

    let adam = adamw_train(&mut p, n, n_net, opt, |p, rows, g| trunk_loss(&trunk, p, n, k, &coords, &ds.f, rows, g))
        .map_err(divergence_to_failure)?;
    let all: Vec<usize> = (0..n).collect();
    let lbfgs = if opt.lbfgs_max_iter > 0 {
        let r = lbfgs_minimize(|p, g| trunk_loss(&trunk, p, n, k, &coords, &ds.f, &all, g), p.clone(), opt)?;
        p = r.x.clone();
        Some(r)
    } else {
        None
    };
    let mut scratch = vec![0.0; p.len()];
    let loss = trunk_loss(&trunk, &p, n, k, &coords, &ds.f, &all, &mut scratch)?;
    let a = split_a(&p, n_net, n, k);
    p.truncate(n_net);
    Ok(TrunkFit {
        trunk: Mlp::from_params(widths, p)?,
        a,
        adam,
        lbfgs,
        loss,
    })
}

fn divergence_to_failure(e: Error) -> Error {
    match e {
        Error::Divergence(msg) => Error::numerical(format!("training diverged: {msg}")),
        other => other,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OrthoBasis {
    /// `m_y × K` with orthonormal columns.
    pub q: DMatrix<f64>,
    /// `K × K` upper triangular, positive diagonal.
    pub r: DMatrix<f64>,
    /// Branch targets `A Rᵀ`.
    pub b_star: DMatrix<f64>,
}

/// Thin QR `Φ = QR` with a positive diagonal on `R`.
pub fn thin_qr(phi: &DMatrix<f64>) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let (m, k) = phi.shape();
    if k > m {
        return Err(Error::numerical(format!(
            "basis has {k} columns but only {m} rows; reduce K"
        )));
    }
    let qr = phi.clone().qr();
    let mut q = qr.q();
    let mut r = qr.r();
    for j in 0..k {
        if r[(j, j)] < 0.0 {
            r.row_mut(j).neg_mut();
            q.column_mut(j).neg_mut();
        }
    }
    let dmax = (0..k).map(|j| r[(j, j)]).fold(0.0, f64::max);
    let dmin = (0..k).map(|j| r[(j, j)]).fold(f64::INFINITY, f64::min);
    if !(dmin > 1e-10 * dmax) {
        return Err(Error::numerical(format!(
            "learned basis is rank deficient (min/max diagonal of R = {:.2e}); use a smaller K",
            dmin / dmax
        )));
    }
    Ok((q, r))
}

pub fn orthonormalize(fit: &TrunkFit, coords: &[[f64; 3]]) -> Result<OrthoBasis> {
    let phi = fit.basis_at(coords)?;
    let (q, r) = thin_qr(&phi)?;
    let b_star = &fit.a * r.transpose();
    Ok(OrthoBasis { q, r, b_star })
}

fn branch_loss(branch: &Mlp, p: &[f64], x: &DMatrix<f64>, target: &DMatrix<f64>, rows: &[usize], grad: &mut [f64]) -> Result<f64> {
    let xb = x.select_columns(rows);
    let tape = branch.forward_tape_with(p, &xb)?;
    let mut resid = tape.output().clone();
    for (bi, &r) in rows.iter().enumerate() {
        for j in 0..resid.nrows() {
            resid[(j, bi)] -= target[(j, r)];
        }
    }
    let scale = 1.0 / resid.len() as f64;
    let loss = resid.norm_squared() * scale;
    resid *= 2.0 * scale;
    branch.backward_with(p, &tape, &resid, grad);
    Ok(loss)
}

#[derive(Debug, Clone)]
pub struct BranchFit {
    pub branch: Mlp,
    pub adam: TrainLog,
    pub lbfgs: Option<LbfgsReport>,
    pub loss: f64,
}

/// Least-squares output layer with intercept against the hidden features of
/// `x`; a constant target gives zero output weights.
fn fit_output_layer(net: &mut Mlp, x: &DMatrix<f64>, target: &DMatrix<f64>) -> Result<()> {
    let tape = net.forward_tape_with(&net.params, x)?;
    let h = &tape.acts[tape.acts.len() - 2];
    let h_mean = h.column_mean();
    let t_mean = target.column_mean();
    let hc = DMatrix::from_fn(h.ncols(), h.nrows(), |j, i| h[(i, j)] - h_mean[i]);
    let tc = DMatrix::from_fn(target.ncols(), target.nrows(), |j, i| target[(i, j)] - t_mean[i]);
    let svd = hc.svd(true, true);
    let s1 = svd.singular_values.max();
    let w = if s1 > 0.0 {
        svd.solve(&tc, LSQ_START_CUTOFF * s1)
            .map_err(|e| Error::numerical(format!("branch output start failed: {e}")))?
            .transpose()
    } else {
        DMatrix::zeros(target.nrows(), h.nrows())
    };
    let b = &t_mean - &w * &h_mean;
    let (w_off, b_off) = net.layer_offsets(net.n_layers() - 1);
    net.params[w_off..w_off + w.len()].copy_from_slice(w.as_slice());
    net.params[b_off..b_off + b.len()].copy_from_slice(b.as_slice());
    Ok(())
}

/// Regress the branch onto `b_star` (`N × K`) from inputs `xi` (`N × M`).
pub fn train_branch(xi: &DMatrix<f64>, b_star: &DMatrix<f64>, widths: &[usize], opt: &OptimizerConfig) -> Result<BranchFit> {
    if xi.nrows() != b_star.nrows() {
        return Err(Error::invalid("branch inputs and targets have different sample counts"));
    }
    if widths.first() != Some(&xi.ncols()) || widths.last() != Some(&b_star.ncols()) {
        return Err(Error::invalid(format!(
            "branch widths {widths:?} do not map {} inputs to {} outputs",
            xi.ncols(),
            b_star.ncols()
        )));
    }
    let mut rng = ChaCha20Rng::seed_from_u64(opt.seed);
    let mut branch = Mlp::glorot(widths, &mut rng)?;
    let x = xi.transpose();
    let target = b_star.transpose();
    fit_output_layer(&mut branch, &x, &target)?;
    let n = xi.nrows();
    let n_net = branch.n_params();
    let shape = branch.clone();
    let adam = adamw_train(&mut branch.params, n, n_net, opt, |p, rows, g| branch_loss(&shape, p, &x, &target, rows, g))
        .map_err(divergence_to_failure)?;
    let all: Vec<usize> = (0..n).collect();
    let lbfgs = if opt.lbfgs_max_iter > 0 {
        let r = lbfgs_minimize(|p, g| branch_loss(&shape, p, &x, &target, &all, g), branch.params.clone(), opt)?;
        branch.params = r.x.clone();
        Some(r)
    } else {
        None
    };
    let mut scratch = vec![0.0; n_net];
    let loss = branch_loss(&shape, &branch.params, &x, &target, &all, &mut scratch)?;
    branch.validate()?;
    Ok(BranchFit { branch, adam, lbfgs, loss })
}

/// A trained surrogate for one variable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeepONetModel {
    pub variable: Variable,
    pub branch: Mlp,
    pub trunk: Mlp,
    /// `K × K` matrix `R⁻ᵀ` mapping augmented trunk features to the
    /// orthonormal basis.
    pub r_inv_t: Vec<f64>,
    pub k: usize,
    /// Bounding box of the training coordinates, `[min, max]` per axis.
    pub coord_bounds: [[f64; 2]; 3],
}

impl DeepONetModel {
    pub fn n_inputs(&self) -> usize {
        self.branch.input_dim()
    }

    pub fn r_inv_t_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_column_slice(self.k, self.k, &self.r_inv_t)
    }

    pub fn validate(&self) -> Result<()> {
        self.branch.validate()?;
        self.trunk.validate()?;
        if self.branch.output_dim() != self.k || self.trunk.output_dim() + 1 != self.k || self.r_inv_t.len() != self.k * self.k {
            return Err(Error::Incompatible(format!(
                "model shapes disagree: branch → {}, trunk → {} (+1), K = {}",
                self.branch.output_dim(),
                self.trunk.output_dim(),
                self.k
            )));
        }
        Ok(())
    }

    /// Orthonormal basis `Φ_aug R⁻¹` at `coords`: `m × K`.
    pub fn basis(&self, coords: &[[f64; 3]]) -> Result<DMatrix<f64>> {
        let (_, phi) = augmented_features(&self.trunk, &self.trunk.params, &coord_matrix(coords))?;
        Ok(phi * self.r_inv_t_matrix().transpose())
    }

    /// Branch coefficients for each row of `xi`: `N × K`.
    pub fn coefficients(&self, xi: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        Ok(self.branch.forward(&xi.transpose())?.transpose())
    }

    /// Predictions `N × m` for inputs `xi` (`N × M`) at `coords`.
    pub fn predict_batch(&self, xi: &DMatrix<f64>, coords: &[[f64; 3]]) -> Result<DMatrix<f64>> {
        Ok(self.coefficients(xi)? * self.basis(coords)?.transpose())
    }

    pub fn predict(&self, xi: &[f64], y: [f64; 3]) -> Result<f64> {
        let x = DMatrix::from_row_slice(1, xi.len(), xi);
        Ok(self.predict_batch(&x, &[y])?[(0, 0)])
    }

    /// Whether `y` lies outside the training bounding box.
    pub fn is_extrapolation(&self, y: [f64; 3]) -> bool {
        y.iter()
            .zip(&self.coord_bounds)
            .any(|(v, b)| *v < b[0] - 1e-12 || *v > b[1] + 1e-12)
    }
}

fn bounds(coords: &[[f64; 3]]) -> [[f64; 2]; 3] {
    let mut b = [[f64::INFINITY, f64::NEG_INFINITY]; 3];
    for c in coords {
        for d in 0..3 {
            b[d][0] = b[d][0].min(c[d]);
            b[d][1] = b[d][1].max(c[d]);
        }
    }
    b
}

/// Assemble the inference model from the trained pieces.
pub fn assemble_model(variable: Variable, trunk: &TrunkFit, basis: &OrthoBasis, branch: &Mlp, coords: &[[f64; 3]]) -> Result<DeepONetModel> {
    let k = basis.r.nrows();
    let r_inv = basis
        .r
        .clone()
        .solve_upper_triangular(&DMatrix::identity(k, k))
        .ok_or_else(|| Error::numerical("triangular factor is singular"))?;
    let model = DeepONetModel {
        variable,
        branch: branch.clone(),
        trunk: trunk.trunk.clone(),
        r_inv_t: r_inv.transpose().as_slice().to_vec(),
        k,
        coord_bounds: bounds(coords),
    };
    model.validate()?;
    Ok(model)
}

/// Everything produced by the two-step procedure.
#[derive(Debug, Clone)]
pub struct TwoStepResult {
    pub model: DeepONetModel,
    pub trunk: TrunkFit,
    pub basis: OrthoBasis,
    pub branch: BranchFit,
}

/// Trunk fit, QR, branch fit. `branch_hidden` lists the hidden widths only;
/// the input and output widths follow from the data and `trunk_widths`.
pub fn train_two_step(
    ds: &TrainDataset,
    trunk_widths: &[usize],
    branch_hidden: &[usize],
    trunk_opt: &OptimizerConfig,
    branch_opt: &OptimizerConfig,
) -> Result<TwoStepResult> {
    let trunk = train_trunk(ds, trunk_widths, trunk_opt)?;
    let basis = orthonormalize(&trunk, &ds.coords)?;
    let mut widths = vec![ds.n_inputs()];
    widths.extend_from_slice(branch_hidden);
    widths.push(trunk.k());
    let branch = train_branch(&ds.xi, &basis.b_star, &widths, branch_opt)?;
    let model = assemble_model(ds.variable, &trunk, &basis, &branch.branch, &ds.coords)?;
    Ok(TwoStepResult { model, trunk, basis, branch })
}
