//! The consolidation and subsidence benchmarks: problem definitions, dataset
//! generation and the train/evaluate study loop.

mod data;
mod pipeline;

pub use data::{generate_dataset, generate_rows, truncation_study, BenchmarkContext, Dataset, SampleOutput, TruncationRow};
pub use pipeline::{
    basis_size, crossover_count, derive_seed, evaluate, evaluate_model, run_pipeline, sweep_csv, train_variable, ErrorRow,
    PipelineResult, RunReport, SweepEntry, TimingLedger, TrainedVariable,
};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::neuralnet::OptimizerConfig;
use crate::operator::{RankThreshold, Variable};
use crate::randfield::{CovarianceKind, CovarianceSpec};
use crate::scaling::{
    consolidation_scales, equation_coefficients, subsidence_scales, DimensionalParams, EquationCoefficients, Geometry,
    Load, ScaleSet,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BenchmarkKind {
    Consolidation,
    Subsidence,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Profile {
    /// Reduced sizes that run in minutes on one core.
    Desk,
    /// Sizes of the reference study.
    Full,
}

impl std::str::FromStr for Profile {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "desk" => Ok(Profile::Desk),
            "full" => Ok(Profile::Full),
            other => Err(Error::invalid(format!("unknown profile '{other}' (expected desk or full)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Domain {
    pub lx: f64,
    pub lz: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeshSpec {
    pub nx: usize,
    pub nz: usize,
}

/// Output coordinates: tensor grid `xs × zs` at each of `times`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputSpec {
    pub xs: Vec<f64>,
    pub zs: Vec<f64>,
    pub times: Vec<f64>,
}

impl OutputSpec {
    pub fn m_y(&self) -> usize {
        self.xs.len() * self.zs.len() * self.times.len()
    }
}

/// How the basis size `K` is fixed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "rule")]
pub enum BasisSize {
    Fixed { k: usize },
    /// `min(round(multiplier · rank), m_y)` from the training snapshots.
    FromRank { multiplier: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariableArch {
    pub variable: Variable,
    /// Hidden trunk widths; the input is 3 and the output `K − 1`.
    pub trunk_hidden: Vec<usize>,
    pub basis: BasisSize,
    /// Hidden branch widths; the input is `M` and the output `K`.
    pub branch_hidden: Vec<usize>,
}

impl VariableArch {
    /// Largest `K` whose trunk basis can be full rank: the last hidden
    /// layer plus the output bias span at most `width + 1` functions.
    pub fn max_k(&self) -> usize {
        self.trunk_hidden.last().map_or(1, |w| w + 1)
    }

    pub fn trunk_widths(&self, k: usize) -> Vec<usize> {
        let mut w = vec![3];
        w.extend(&self.trunk_hidden);
        w.push(k - 1);
        w
    }

    pub fn branch_widths(&self, m: usize, k: usize) -> Vec<usize> {
        let mut w = vec![m];
        w.extend(&self.branch_hidden);
        w.push(k);
        w
    }
}

/// Three horizontal layers; only the middle one is heterogeneous.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayeredMeanField {
    /// Lower and upper boundary of the middle layer as fractions of the height.
    pub middle: [f64; 2],
    /// Mean log-permeability of the middle layer minus that of the outer layers.
    pub contrast: f64,
}

impl LayeredMeanField {
    pub fn aquifer() -> Self {
        Self {
            middle: [0.3, 0.7],
            contrast: 3.0,
        }
    }

    pub fn mu_middle(&self, mu_outer: f64) -> f64 {
        mu_outer + self.contrast
    }

    pub fn in_middle(&self, z: f64, height: f64) -> bool {
        z > self.middle[0] * height && z < self.middle[1] * height
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Seeds {
    /// Latin hypercube design.
    pub sample: u64,
    /// Network initialization and mini-batch order.
    pub train: u64,
}

/// Complete description of one benchmark study. Serialized as the JSON spec
/// file accepted by the command line tool.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkSpec {
    pub kind: BenchmarkKind,
    pub covariance: CovarianceSpec,
    pub domain: Domain,
    pub mesh: MeshSpec,
    /// Points of the one-dimensional expansion grid along x (horizontal
    /// kernels only). Two-dimensional kernels use the mesh vertices.
    pub kl_points: Option<usize>,
    /// Expansion modes used to build the simulated fields; all grid modes
    /// when absent.
    pub field_modes: Option<usize>,
    pub nu: f64,
    pub dt: f64,
    pub t_end: f64,
    pub output: OutputSpec,
    pub variables: Vec<VariableArch>,
    pub m_candidates: Vec<usize>,
    pub n_train: usize,
    pub n_test: usize,
    pub seeds: Seeds,
    pub rank_threshold: RankThreshold,
    pub layers: Option<LayeredMeanField>,
    pub physical: DimensionalParams,
    pub trunk_opt: OptimizerConfig,
    pub branch_opt: OptimizerConfig,
}

fn steps(from: f64, step: f64, n: usize) -> Vec<f64> {
    // Rounded so that grid values print and compare cleanly.
    (0..n).map(|i| ((from + step * i as f64) * 1e9).round() / 1e9).collect()
}

fn hidden(w: usize, n: usize) -> Vec<usize> {
    vec![w; n]
}

/// Reference consolidation study; see [`BenchmarkSpec::with_profile`] for
/// the reduced variant.
pub fn consolidation_spec(sigma: f64, l_x: f64, l_z: f64) -> BenchmarkSpec {
    BenchmarkSpec {
        kind: BenchmarkKind::Consolidation,
        covariance: CovarianceSpec::anisotropic(sigma, l_x, l_z),
        domain: Domain { lx: 1.0, lz: 1.0 },
        mesh: MeshSpec { nx: 20, nz: 20 },
        kl_points: None,
        field_modes: None,
        nu: 0.4,
        dt: 0.01,
        t_end: 1.0,
        output: OutputSpec {
            xs: steps(0.0, 0.1, 11),
            zs: steps(0.0, 0.1, 11),
            times: steps(0.1, 0.1, 10),
        },
        variables: vec![
            VariableArch {
                variable: Variable::Uz,
                trunk_hidden: hidden(256, 2),
                basis: BasisSize::Fixed { k: 257 },
                branch_hidden: hidden(64, 4),
            },
            VariableArch {
                variable: Variable::P,
                trunk_hidden: hidden(64, 2),
                basis: BasisSize::Fixed { k: 33 },
                branch_hidden: hidden(64, 4),
            },
        ],
        m_candidates: vec![20, 40, 60, 80, 100, 400],
        n_train: 8000,
        n_test: 2000,
        seeds: Seeds { sample: 2024, train: 7 },
        rank_threshold: RankThreshold::default(),
        layers: None,
        physical: DimensionalParams {
            e: 1.0e7,
            nu: 0.4,
            mu_f: 1.0e-3,
            geometry: Geometry::Length { l: 10.0 },
            load: Load::Traction { t0: 1.0e4 },
            mu_kappa: (1.0e-13f64).ln(),
            k_star: 1.0e-13,
        },
        trunk_opt: OptimizerConfig::trunk(),
        branch_opt: OptimizerConfig::branch(),
    }
}

/// Reference subsidence study.
pub fn subsidence_spec(sigma: f64, l_x: f64) -> BenchmarkSpec {
    let layers = LayeredMeanField::aquifer();
    let mu_outer = (1.0e-14f64).ln();
    let mu_mid = layers.mu_middle(mu_outer);
    let arch = |v, k: usize| VariableArch {
        variable: v,
        // Widened last layer so that 128 trunk outputs can be independent.
        trunk_hidden: if k > 65 { vec![64, 64, k - 1] } else { hidden(64, 3) },
        basis: BasisSize::Fixed { k },
        branch_hidden: hidden(64, 4),
    };
    BenchmarkSpec {
        kind: BenchmarkKind::Subsidence,
        covariance: CovarianceSpec::horizontal(sigma, l_x),
        domain: Domain { lx: 1.0, lz: 0.1 },
        mesh: MeshSpec { nx: 40, nz: 10 },
        kl_points: Some(81),
        field_modes: None,
        nu: 0.25,
        dt: 0.01,
        t_end: 1.0,
        output: OutputSpec {
            xs: steps(0.0, 0.05, 21),
            zs: steps(0.0, 0.02, 6),
            times: steps(0.1, 0.1, 10),
        },
        variables: vec![arch(Variable::Ux, 65), arch(Variable::Uz, 65), arch(Variable::P, 129)],
        m_candidates: vec![15, 20, 25, 40, 80],
        n_train: 8000,
        n_test: 2000,
        seeds: Seeds { sample: 2025, train: 11 },
        rank_threshold: RankThreshold::default(),
        layers: Some(layers),
        physical: DimensionalParams {
            e: 1.0e8,
            nu: 0.25,
            mu_f: 1.0e-3,
            geometry: Geometry::Rectangle { w: 1000.0, h: 100.0 },
            load: Load::Discharge { q0: 1.0e-6 },
            mu_kappa: mu_mid,
            k_star: mu_mid.exp(),
        },
        trunk_opt: OptimizerConfig::trunk(),
        branch_opt: OptimizerConfig::branch(),
    }
}

impl BenchmarkSpec {
    /// Shrink to the desk profile: small meshes and sample counts, narrow
    /// networks, `K` from the snapshot rank, and shortened training.
    pub fn with_profile(mut self, profile: Profile) -> Self {
        if profile == Profile::Full {
            return self;
        }
        self.n_train = 400;
        self.n_test = 100;
        match self.kind {
            BenchmarkKind::Consolidation => {
                self.mesh = MeshSpec { nx: 10, nz: 10 };
                self.m_candidates = vec![10, 20, 40, 80];
            }
            BenchmarkKind::Subsidence => {
                self.mesh = MeshSpec { nx: 20, nz: 10 };
                self.m_candidates = vec![10, 15, 20, 25, 40];
            }
        }
        for arch in &mut self.variables {
            arch.trunk_hidden = hidden(64, 2);
            arch.branch_hidden = hidden(64, 2);
            arch.basis = BasisSize::FromRank { multiplier: 1.5 };
        }
        self.trunk_opt.adamw_epochs = 500;
        self.trunk_opt.lbfgs_max_iter = 2000;
        self.branch_opt.adamw_epochs = 500;
        self.branch_opt.lbfgs_max_iter = 0;
        self
    }

    pub fn m_y(&self) -> usize {
        self.output.m_y()
    }

    pub fn n_rows(&self) -> usize {
        self.n_train + self.n_test
    }

    /// Number of expansion grid points.
    pub fn n_kl_points(&self) -> usize {
        match self.covariance.kind {
            CovarianceKind::GaussianAnisotropic2d => (self.mesh.nx + 1) * (self.mesh.nz + 1),
            CovarianceKind::Gaussian1dHorizontal => self.kl_points.unwrap_or(self.mesh.nx + 1),
        }
    }

    pub fn n_field_modes(&self) -> usize {
        self.field_modes.unwrap_or_else(|| self.n_kl_points())
    }

    pub fn arch(&self, var: Variable) -> Result<&VariableArch> {
        self.variables
            .iter()
            .find(|a| a.variable == var)
            .ok_or_else(|| Error::invalid(format!("benchmark does not model {var}")))
    }

    pub fn variable_list(&self) -> Vec<Variable> {
        self.variables.iter().map(|a| a.variable).collect()
    }

    pub fn scales(&self) -> Result<ScaleSet> {
        match self.kind {
            BenchmarkKind::Consolidation => consolidation_scales(&self.physical),
            BenchmarkKind::Subsidence => subsidence_scales(&self.physical),
        }
    }

    pub fn coefficients(&self) -> Result<EquationCoefficients> {
        Ok(equation_coefficients(&self.physical, &self.scales()?))
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("spec serializes");
        hex::encode(Sha256::digest(&bytes))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::invalid(msg));
        self.covariance.validate()?;
        if self.mesh.nx == 0 || self.mesh.nz == 0 {
            return bad("mesh needs at least one cell per direction".into());
        }
        if !(self.domain.lx > 0.0 && self.domain.lz > 0.0) {
            return bad("domain extents must be positive".into());
        }
        if (self.physical.nu - self.nu).abs() > 1e-15 {
            return bad(format!("nu = {} disagrees with the physical nu = {}", self.nu, self.physical.nu));
        }
        if !(self.dt > 0.0) || !(self.t_end >= self.dt) {
            return bad("need 0 < dt <= t_end".into());
        }
        let out = &self.output;
        if out.xs.is_empty() || out.zs.is_empty() || out.times.is_empty() {
            return bad("output grid is empty".into());
        }
        let inside = |v: f64, hi: f64| v >= -1e-12 && v <= hi + 1e-12;
        if !out.xs.iter().all(|&x| inside(x, self.domain.lx)) || !out.zs.iter().all(|&z| inside(z, self.domain.lz)) {
            return bad("output points lie outside the domain".into());
        }
        if !out.times.iter().all(|&t| t > 0.0 && t <= self.t_end + 1e-12) {
            return bad("output times must lie in (0, t_end]".into());
        }
        if self.n_train == 0 || self.n_test == 0 {
            return bad("need at least one training and one test sample".into());
        }
        let n_kl = self.n_kl_points();
        if let CovarianceKind::Gaussian1dHorizontal = self.covariance.kind {
            if n_kl < 2 {
                return bad("the horizontal expansion grid needs at least two points".into());
            }
        } else if self.kl_points.is_some() {
            return bad("kl_points applies to horizontal kernels only".into());
        }
        let modes = self.n_field_modes();
        if modes == 0 || modes > n_kl {
            return bad(format!("field_modes must lie in [1, {n_kl}]"));
        }
        if self.m_candidates.is_empty() || self.m_candidates.iter().any(|&m| m == 0 || m > modes) {
            return bad(format!("truncation orders must lie in [1, {modes}], got {:?}", self.m_candidates));
        }
        if self.variables.is_empty() {
            return bad("no output variables".into());
        }
        for a in &self.variables {
            if self.variables.iter().filter(|b| b.variable == a.variable).count() > 1 {
                return bad(format!("variable {} listed twice", a.variable));
            }
            if a.trunk_hidden.contains(&0) || a.branch_hidden.contains(&0) {
                return bad("hidden widths must be positive".into());
            }
            match a.basis {
                BasisSize::Fixed { k } if k == 0 || k > self.m_y() => {
                    return bad(format!("K = {k} must lie in [1, m_y = {}]", self.m_y()));
                }
                BasisSize::Fixed { k } if k > a.max_k() => {
                    return bad(format!(
                        "K = {k} exceeds {} independent functions of the {} trunk",
                        a.max_k(),
                        a.variable
                    ));
                }
                BasisSize::FromRank { multiplier } if !(1.0..=2.0).contains(&multiplier) => {
                    return bad(format!("rank multiplier {multiplier} outside [1, 2]"));
                }
                _ => {}
            }
        }
        if self.kind == BenchmarkKind::Subsidence && self.layers.is_none() {
            return bad("subsidence needs a layered mean field".into());
        }
        self.trunk_opt.validate()?;
        self.branch_opt.validate()?;
        self.coefficients().map(|_| ())
    }
}
