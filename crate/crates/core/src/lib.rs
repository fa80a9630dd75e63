//! Surrogate modeling of poroelasticity with random permeability fields.
//!
//! The pipeline has four stages, each a module:
//!
//! * [`randfield`] draws log-permeability realizations from a truncated
//!   Karhunen–Loève expansion of a Gaussian covariance kernel.
//! * [`porofem`] solves the nondimensional u–p poroelastic problem with
//!   Taylor–Hood triangles and backward Euler time stepping.
//! * [`neuralnet`] and [`operator`] fit a DeepONet with the two-step
//!   (trunk, QR, branch) procedure.
//! * [`benchmark`] wires the consolidation and subsidence problems together,
//!   and [`store`] persists datasets and checkpoints.
//!
//! [`scaling`] converts between dimensional and nondimensional quantities.

pub mod benchmark;
pub mod error;
pub mod neuralnet;
pub mod operator;
pub mod porofem;
pub mod randfield;
pub mod scaling;
pub mod store;

pub use error::{Error, Result};
pub use porofem::{Mesh, ProblemDef, TransientSolution, Variable};
pub use randfield::{CovarianceKind, CovarianceSpec, KLBasis, QuadGrid, SampleMatrix};
pub use scaling::{DimensionalParams, ScaleSet};
pub use benchmark::{BenchmarkKind, BenchmarkSpec, Dataset, Profile, RunReport};
pub use neuralnet::{Mlp, OptimizerConfig};
pub use operator::{DeepONetModel, TrainDataset};
