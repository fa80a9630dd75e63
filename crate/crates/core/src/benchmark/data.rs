use std::collections::BTreeMap;
use std::ops::Range;
use std::time::Instant;

use nalgebra::DMatrix;
use rayon::prelude::*;

use super::{BenchmarkKind, BenchmarkSpec};
use crate::error::{Error, Result};
use crate::operator::{TrainDataset, Variable};
use crate::porofem::{
    build_structured_mesh, BoundaryTag, HydBc, MaterialField, MechBc, OutputGrid, PoroSolver, ProblemDef, TransientSolution,
};
use crate::randfield::{kl_decompose, lhs_normal, CovarianceKind, KLBasis, QuadGrid, SampleMatrix};

/// Everything derived from a spec that every sample solve shares.
#[derive(Debug, Clone)]
pub struct BenchmarkContext {
    pub spec: BenchmarkSpec,
    pub problem: ProblemDef,
    pub basis: KLBasis,
    /// Grid abscissae of a horizontal expansion.
    pub kl_x: Option<Vec<f64>>,
    pub output: OutputGrid,
    pub coords: Vec<[f64; 3]>,
    pub xi: SampleMatrix,
}

/// Sampled fields of one forward solve, in the order of `spec.variables`.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleOutput {
    pub values: Vec<Vec<f64>>,
    pub seconds: f64,
}

fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect()
}

pub(crate) fn build_problem(spec: &BenchmarkSpec) -> Result<ProblemDef> {
    let coef = spec.coefficients()?;
    let mut mesh = build_structured_mesh(spec.mesh.nx, spec.mesh.nz, spec.domain.lx, spec.domain.lz)?;
    let mut mech = BTreeMap::new();
    let mut hyd = BTreeMap::new();
    mech.insert(BoundaryTag::Bottom, MechBc::Fixed);
    mech.insert(BoundaryTag::Left, MechBc::RollerX);
    mech.insert(BoundaryTag::Right, MechBc::RollerX);
    hyd.insert(BoundaryTag::Top, HydBc::Pressure(0.0));
    for tag in [BoundaryTag::Bottom, BoundaryTag::Left, BoundaryTag::Right] {
        hyd.insert(tag, HydBc::Flux(0.0));
    }
    match spec.kind {
        BenchmarkKind::Consolidation => {
            mech.insert(BoundaryTag::Top, MechBc::Traction([0.0, -coef.load]));
        }
        BenchmarkKind::Subsidence => {
            let layers = spec
                .layers
                .as_ref()
                .ok_or_else(|| Error::invalid("subsidence needs a layered mean field"))?;
            let h = spec.domain.lz;
            mesh.tag_left_segment(layers.middle[0] * h, layers.middle[1] * h);
            mech.insert(BoundaryTag::Top, MechBc::Traction([0.0, 0.0]));
            mech.insert(BoundaryTag::LeftMidlayer, MechBc::RollerX);
            // Extraction: fluid leaves through the left edge of the aquifer.
            hyd.insert(BoundaryTag::LeftMidlayer, HydBc::Flux(coef.load));
        }
    }
    let problem = ProblemDef {
        mesh,
        nu: spec.nu,
        dt: spec.dt,
        t_end: spec.t_end,
        stiffness: coef.stiffness,
        storage: coef.storage,
        mobility: coef.mobility,
        mech_bcs: mech,
        hyd_bcs: hyd,
        body_force: [0.0, 0.0],
        u0: None,
        p0: None,
    };
    problem.validate()?;
    Ok(problem)
}

impl BenchmarkContext {
    pub fn new(spec: &BenchmarkSpec) -> Result<Self> {
        spec.validate().map_err(|e| e.context("spec"))?;
        let problem = build_problem(spec).map_err(|e| e.context("problem setup"))?;
        let kappa_star = spec.scales()?.permeability.ln();
        let (grid, kl_x) = match spec.covariance.kind {
            CovarianceKind::GaussianAnisotropic2d => {
                let xs = linspace(0.0, spec.domain.lx, spec.mesh.nx + 1);
                let zs = linspace(0.0, spec.domain.lz, spec.mesh.nz + 1);
                (QuadGrid::trapezoid_2d(&xs, &zs)?, None)
            }
            CovarianceKind::Gaussian1dHorizontal => {
                let xs = linspace(0.0, spec.domain.lx, spec.n_kl_points());
                (QuadGrid::trapezoid_1d(&xs, 0.5 * spec.domain.lz)?, Some(xs))
            }
        };
        let basis = kl_decompose(&grid, &spec.covariance, spec.physical.mu_kappa, kappa_star)
            .map_err(|e| e.context("expansion"))?;
        let xi = lhs_normal(spec.n_rows(), spec.n_field_modes(), spec.seeds.sample)?;
        let output = OutputGrid::tensor(&spec.output.xs, &spec.output.zs, &spec.output.times);
        let coords = output.coords();
        Ok(Self {
            spec: spec.clone(),
            problem,
            basis,
            kl_x,
            output,
            coords,
            xi,
        })
    }

    /// Nondimensional permeability for expansion coefficients `xi_row`
    /// truncated to `m` modes.
    pub fn material(&self, xi_row: &[f64], m: usize) -> Result<MaterialField> {
        let mesh = &self.problem.mesh;
        let shift = self.basis.mu_kappa - self.basis.kappa_star;
        let fluct = self.basis.fluctuation(xi_row, m)?;
        match &self.kl_x {
            None => {
                let log_k: Vec<f64> = fluct.iter().map(|g| g + shift).collect();
                MaterialField::from_nodal_log(mesh, &log_k)
            }
            Some(xs) => {
                let h = self.spec.domain.lz;
                let layers = self.spec.layers.clone();
                let dx = xs[1] - xs[0];
                let interp = |x: f64| {
                    let s = (x - xs[0]) / dx;
                    let i = (s.floor().max(0.0) as usize).min(xs.len() - 2);
                    let w = s - i as f64;
                    (1.0 - w) * fluct[i] + w * fluct[i + 1]
                };
                MaterialField::from_fn(mesh, |t, x, _| match &layers {
                    Some(l) => {
                        let zc = mesh.triangles[t].iter().map(|&v| mesh.vertices[v][1]).sum::<f64>() / 3.0;
                        if l.in_middle(zc, h) {
                            (shift + interp(x[0])).exp()
                        } else {
                            (shift - l.contrast).exp()
                        }
                    }
                    None => (shift + interp(x[0])).exp(),
                })
            }
        }
    }

    /// Forward solve sampled on an arbitrary output grid.
    pub fn solve_grid(&self, xi_row: &[f64], m: usize, grid: &OutputGrid) -> Result<TransientSolution> {
        let mat = self.material(xi_row, m)?;
        PoroSolver::new(&self.problem, &mat)?.solve(grid)
    }

    pub fn solve_with(&self, xi_row: &[f64], m: usize) -> Result<SampleOutput> {
        let start = Instant::now();
        let sol = self.solve_grid(xi_row, m, &self.output)?;
        let values = self.spec.variables.iter().map(|a| sol.row(a.variable)).collect();
        Ok(SampleOutput {
            values,
            seconds: start.elapsed().as_secs_f64(),
        })
    }

    /// Forward solve of dataset row `i` with all field modes.
    pub fn solve_row(&self, i: usize) -> Result<SampleOutput> {
        self.solve_with(self.xi.row(i), self.spec.n_field_modes())
            .map_err(|e| e.context(format!("sample {i}")))
    }
}

/// Solve rows `rows` on `workers` threads. The result is ordered by row and
/// does not depend on the worker count.
pub fn generate_rows(ctx: &BenchmarkContext, rows: Range<usize>, workers: usize) -> Result<Vec<SampleOutput>> {
    if rows.end > ctx.spec.n_rows() {
        return Err(Error::invalid(format!(
            "rows {rows:?} exceed the {} samples of the design",
            ctx.spec.n_rows()
        )));
    }
    if workers <= 1 {
        return rows.map(|i| ctx.solve_row(i)).collect();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::invalid(format!("cannot start {workers} workers: {e}")))?;
    pool.install(|| rows.into_par_iter().map(|i| ctx.solve_row(i)).collect())
}

/// Snapshot matrices for all variables of a benchmark.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    /// `N × field_modes` expansion coefficients.
    pub xi: DMatrix<f64>,
    /// `N × m_y` per variable.
    pub outputs: Vec<(Variable, DMatrix<f64>)>,
    pub coords: Vec<[f64; 3]>,
    pub n_train: usize,
    /// Wall time of each forward solve.
    pub row_seconds: Vec<f64>,
}

impl Dataset {
    pub fn assemble(ctx: &BenchmarkContext, rows: &[SampleOutput]) -> Result<Self> {
        let spec = &ctx.spec;
        if rows.len() != spec.n_rows() {
            return Err(Error::invalid(format!("{} of {} samples solved", rows.len(), spec.n_rows())));
        }
        let m_y = spec.m_y();
        let outputs = spec
            .variables
            .iter()
            .enumerate()
            .map(|(v, a)| (a.variable, DMatrix::from_fn(rows.len(), m_y, |i, j| rows[i].values[v][j])))
            .collect();
        let xi = DMatrix::from_row_slice(ctx.xi.rows, ctx.xi.cols, &ctx.xi.xi);
        Ok(Self {
            xi,
            outputs,
            coords: ctx.coords.clone(),
            n_train: spec.n_train,
            row_seconds: rows.iter().map(|r| r.seconds).collect(),
        })
    }

    pub fn n_rows(&self) -> usize {
        self.xi.nrows()
    }

    pub fn fem_seconds(&self) -> f64 {
        self.row_seconds.iter().sum()
    }

    pub fn train_fem_seconds(&self) -> f64 {
        self.row_seconds[..self.n_train.min(self.row_seconds.len())].iter().sum()
    }

    pub fn variables(&self) -> Vec<Variable> {
        self.outputs.iter().map(|(v, _)| *v).collect()
    }

    pub fn output(&self, var: Variable) -> Result<&DMatrix<f64>> {
        self.outputs
            .iter()
            .find(|(v, _)| *v == var)
            .map(|(_, f)| f)
            .ok_or_else(|| Error::Incompatible(format!("dataset has no {var} snapshots")))
    }

    fn split(&self, var: Variable, m: usize, rows: Range<usize>) -> Result<TrainDataset> {
        if m == 0 || m > self.xi.ncols() {
            return Err(Error::invalid(format!(
                "M = {m} outside [1, {}] stored expansion modes",
                self.xi.ncols()
            )));
        }
        let f = self.output(var)?;
        let n = rows.len();
        TrainDataset::new(
            self.xi.view((rows.start, 0), (n, m)).into_owned(),
            f.rows(rows.start, n).into_owned(),
            self.coords.clone(),
            var,
        )
    }

    pub fn train_set(&self, var: Variable, m: usize) -> Result<TrainDataset> {
        self.split(var, m, 0..self.n_train)
    }

    pub fn test_set(&self, var: Variable, m: usize) -> Result<TrainDataset> {
        self.split(var, m, self.n_train..self.n_rows())
    }
}

/// Build the full dataset of a spec.
pub fn generate_dataset(spec: &BenchmarkSpec, workers: usize) -> Result<(BenchmarkContext, Dataset)> {
    let ctx = BenchmarkContext::new(spec)?;
    let rows = generate_rows(&ctx, 0..spec.n_rows(), workers)?;
    let ds = Dataset::assemble(&ctx, &rows)?;
    Ok((ctx, ds))
}

#[derive(Debug, Clone, PartialEq)]
pub struct TruncationRow {
    pub m: usize,
    /// Mean over samples of `‖f_full − f_M‖² / ‖f_full‖²`, per variable.
    pub errors: Vec<(Variable, f64)>,
}

/// Response-space truncation error from paired solves with all field modes
/// and with the leading `M`.
pub fn truncation_study(ctx: &BenchmarkContext, m_list: &[usize], n_samples: usize) -> Result<Vec<TruncationRow>> {
    let modes = ctx.spec.n_field_modes();
    if let Some(&m) = m_list.iter().find(|&&m| m == 0 || m > modes) {
        return Err(Error::invalid(format!("truncation order {m} outside [1, {modes}]")));
    }
    if n_samples == 0 || n_samples > ctx.spec.n_rows() {
        return Err(Error::invalid(format!("sample count must lie in [1, {}]", ctx.spec.n_rows())));
    }
    let vars = ctx.spec.variable_list();
    let mut sums = vec![vec![0.0; vars.len()]; m_list.len()];
    for i in 0..n_samples {
        let row = ctx.xi.row(i);
        let full = ctx.solve_with(row, modes)?;
        for (k, &m) in m_list.iter().enumerate() {
            let cut = if m == modes { full.clone() } else { ctx.solve_with(row, m)? };
            for v in 0..vars.len() {
                let num: f64 = full.values[v].iter().zip(&cut.values[v]).map(|(a, b)| (a - b).powi(2)).sum();
                let den: f64 = full.values[v].iter().map(|a| a * a).sum();
                sums[k][v] += if den > 0.0 { num / den } else { 0.0 };
            }
        }
    }
    Ok(m_list
        .iter()
        .zip(sums)
        .map(|(&m, s)| TruncationRow {
            m,
            errors: vars.iter().zip(s).map(|(&v, e)| (v, e / n_samples as f64)).collect(),
        })
        .collect())
}
