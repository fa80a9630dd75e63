//! `porosurf` command line tool: dataset generation, training, evaluation,
//! field export and study reports on top of the `porosurf` library.
//!
//! Exit codes: 0 success, 1 numerical failure, 2 I/O, 3 invalid spec or
//! arguments, 4 corrupt data, 5 incompatible artifacts.

mod commands;
mod svg;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

pub use commands::{
    cmd_eval, cmd_export, cmd_gen_data, cmd_report, cmd_run, cmd_spec, cmd_train, load_spec, merge_json, SpecError,
};
pub use svg::heatmap_svg;

#[derive(Debug, Parser)]
#[command(name = "porosurf", version, about = "Poroelastic DeepONet surrogates")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a built-in benchmark spec as JSON.
    Spec(SpecArgs),
    /// Sample permeability fields and solve the forward problem for each.
    GenData(GenDataArgs),
    /// Two-step training of one variable.
    Train(TrainArgs),
    /// Test errors of a checkpoint; optionally update a study report.
    Eval(EvalArgs),
    /// Surrogate fields at chosen coordinates as CSV and SVG.
    #[command(alias = "predict")]
    ExportFields(ExportArgs),
    /// Summarize study reports; optionally emit a statistics sweep table.
    Report(ReportArgs),
    /// gen-data, then train and eval for every variable and candidate M.
    Run(RunArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum KindArg {
    Consolidation,
    Subsidence,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ProfileArg {
    Desk,
    Full,
}

impl From<ProfileArg> for porosurf::benchmark::Profile {
    fn from(p: ProfileArg) -> Self {
        match p {
            ProfileArg::Desk => Self::Desk,
            ProfileArg::Full => Self::Full,
        }
    }
}

#[derive(Debug, Args)]
pub struct SpecArgs {
    #[arg(value_enum)]
    pub kind: KindArg,
    #[arg(long, default_value_t = 1.5)]
    pub sigma: f64,
    /// Horizontal correlation length; 0.25 for consolidation and 0.125 for
    /// subsidence when omitted.
    #[arg(long)]
    pub lx: Option<f64>,
    /// Vertical correlation length (consolidation only).
    #[arg(long, default_value_t = 0.125)]
    pub lz: f64,
    #[arg(long, value_enum, default_value_t = ProfileArg::Full)]
    pub profile: ProfileArg,
    /// Output file; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Options shared by every command that reads a spec file.
#[derive(Debug, Args, Clone)]
pub struct SpecOptions {
    /// Apply a sizing profile on top of the benchmark file.
    #[arg(long, value_enum)]
    pub profile: Option<ProfileArg>,
    /// JSON object merged into the benchmark definition before validation.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Sampling seed; falls back to POROSURF_SEED.
    #[arg(long, env = "POROSURF_SEED")]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct GenDataArgs {
    pub spec: PathBuf,
    pub out: PathBuf,
    #[command(flatten)]
    pub opts: SpecOptions,
    #[arg(long, default_value_t = 1)]
    pub workers: usize,
    /// Rows solved between progress checkpoints.
    #[arg(long, default_value_t = 32)]
    pub chunk: usize,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    pub dataset: PathBuf,
    #[arg(long)]
    pub variable: porosurf::Variable,
    /// Checkpoint directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Truncation order; the first candidate M when omitted.
    #[arg(long = "M")]
    pub m: Option<usize>,
    /// Basis size as a multiple of the numerical rank.
    #[arg(long = "K-multiplier")]
    pub k_multiplier: Option<f64>,
    /// Fixed basis size.
    #[arg(long = "K", conflicts_with = "k_multiplier")]
    pub k: Option<usize>,
    /// Training seed; falls back to POROSURF_SEED.
    #[arg(long, env = "POROSURF_SEED")]
    pub seed: Option<u64>,
    /// JSON object merged into the dataset spec (e.g. optimizer settings).
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BaselineArg {
    /// Predict zero everywhere.
    Zero,
    /// Predict the mean training row.
    Mean,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    pub model: PathBuf,
    pub dataset: PathBuf,
    /// Evaluate a reference predictor instead of the model.
    #[arg(long, value_enum)]
    pub baseline: Option<BaselineArg>,
    /// Study report directory to create or update.
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Metrics CSV to append to.
    #[arg(long)]
    pub metrics: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    pub model: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Dataset supplying the expansion coefficients and the output grid.
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    /// Dataset row; adds FEM and absolute-error columns.
    #[arg(long)]
    pub row: Option<usize>,
    /// Comma-separated expansion coefficients (at least M).
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub xi: Option<Vec<f64>>,
    /// Output times on the dataset's spatial grid.
    #[arg(long, value_delimiter = ',')]
    pub times: Option<Vec<f64>>,
    /// CSV file of `x,z,t` rows with a header line.
    #[arg(long)]
    pub coords: Option<PathBuf>,
    /// Also write one SVG heatmap per time slice.
    #[arg(long)]
    pub svg: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MetricArg {
    Squared,
    Rooted,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    #[arg(required = true)]
    pub reports: Vec<PathBuf>,
    /// Write the selected-M errors as a (correlation length × σ) table.
    #[arg(long)]
    pub sweep: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = MetricArg::Squared)]
    pub metric: MetricArg,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    pub spec: PathBuf,
    pub out: PathBuf,
    #[command(flatten)]
    pub opts: SpecOptions,
    #[arg(long, default_value_t = 1)]
    pub workers: usize,
}

/// Process exit code for an error chain.
pub fn exit_code(err: &anyhow::Error) -> i32 {
    use porosurf::Error as E;
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<E>() {
            return match e {
                E::Io { .. } => 2,
                E::InvalidInput(_) | E::SingularParameter(_) => 3,
                E::CorruptData(_) | E::Json(_) => 4,
                E::Incompatible(_) => 5,
                E::NumericalFailure(_) | E::Divergence(_) => 1,
            };
        }
        if cause.downcast_ref::<SpecError>().is_some() {
            return 3;
        }
        if cause.downcast_ref::<std::io::Error>().is_some() {
            return 2;
        }
    }
    1
}

pub fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Spec(a) => cmd_spec(&a),
        Command::GenData(a) => cmd_gen_data(&a).map(|_| ()),
        Command::Train(a) => cmd_train(&a),
        Command::Eval(a) => cmd_eval(&a),
        Command::ExportFields(a) => cmd_export(&a),
        Command::Report(a) => cmd_report(&a),
        Command::Run(a) => cmd_run(&a),
    }
}
