use std::fmt::Write as _;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::data::{generate_dataset, BenchmarkContext, Dataset};
use super::{BasisSize, BenchmarkSpec};
use crate::error::{Error, Result};
use crate::neuralnet::OptimizerConfig;
use crate::operator::{
    choose_k, estimate_rank_with, mean_predictor_error, relative_test_error, relative_test_error_rooted,
    train_two_step, DeepONetModel, TwoStepResult, Variable,
};

/// `N_tr · (1 + T_T / T_F)`: simulation count above which training the
/// surrogate costs less than running the solver.
pub fn crossover_count(n_train: usize, t_train: f64, t_fem: f64) -> Result<f64> {
    if !(t_fem > 0.0) || !t_fem.is_finite() {
        return Err(Error::invalid(format!("FEM time must be positive, got {t_fem}")));
    }
    if !(t_train >= 0.0) || !t_train.is_finite() {
        return Err(Error::invalid(format!("training time must be nonnegative, got {t_train}")));
    }
    Ok(n_train as f64 * (1.0 + t_train / t_fem))
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed for one network, fixed by the run seed, variable, `M` and role.
pub fn derive_seed(base: u64, var: Variable, m: usize, role: u64) -> u64 {
    let v = Variable::ALL.iter().position(|&x| x == var).unwrap_or(0) as u64;
    splitmix(splitmix(splitmix(base ^ (v << 56)) ^ m as u64) ^ role)
}

#[derive(Debug, Clone)]
pub struct TrainedVariable {
    pub variable: Variable,
    pub m: usize,
    pub rank: usize,
    pub k: usize,
    pub fit: TwoStepResult,
    pub seconds: f64,
}

/// Basis size for a variable from its training snapshots.
pub fn basis_size(spec: &BenchmarkSpec, ds: &Dataset, var: Variable) -> Result<(usize, usize)> {
    let train = ds.train_set(var, 1)?;
    let rank = estimate_rank_with(&train.f, spec.rank_threshold)?;
    let arch = spec.arch(var)?;
    let k = match arch.basis {
        BasisSize::Fixed { k } => k,
        BasisSize::FromRank { multiplier } => choose_k(rank, multiplier, spec.m_y().min(arch.max_k()))?,
    };
    Ok((rank, k))
}

/// Two-step training of one variable on the first `M` expansion coordinates.
pub fn train_variable(
    spec: &BenchmarkSpec,
    ds: &Dataset,
    var: Variable,
    m: usize,
    k: Option<usize>,
) -> Result<TrainedVariable> {
    let tag = |e: Error| e.context(format!("training {var} with M = {m}"));
    let (rank, k_rule) = basis_size(spec, ds, var).map_err(tag)?;
    let k = k.unwrap_or(k_rule);
    let arch = spec.arch(var)?;
    let cap = spec.m_y().min(arch.max_k());
    if k < 1 || k > cap {
        return Err(Error::invalid(format!("K = {k} must lie in [1, {cap}] for the {var} trunk")));
    }
    let train = ds.train_set(var, m).map_err(tag)?;
    let seeded = |cfg: &OptimizerConfig, role| OptimizerConfig {
        seed: derive_seed(spec.seeds.train, var, m, role),
        ..cfg.clone()
    };
    let start = Instant::now();
    let fit = train_two_step(
        &train,
        &arch.trunk_widths(k),
        &arch.branch_hidden,
        &seeded(&spec.trunk_opt, 1),
        &seeded(&spec.branch_opt, 2),
    )
    .map_err(tag)?;
    Ok(TrainedVariable {
        variable: var,
        m,
        rank,
        k,
        fit,
        seconds: start.elapsed().as_secs_f64(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorRow {
    pub variable: Variable,
    pub m: usize,
    pub k: usize,
    pub rank: usize,
    /// Squared relative Frobenius error on the test split.
    pub test_error: f64,
    pub test_error_rooted: f64,
    pub train_error: f64,
    /// Error of predicting every test row by the mean training row.
    pub baseline_error: f64,
}

/// Errors of one trained model on both splits.
pub fn evaluate(ds: &Dataset, tv: &TrainedVariable) -> Result<ErrorRow> {
    evaluate_model(ds, &tv.fit.model, tv.m, tv.rank)
}

/// Errors of `model` fed with the first `m` expansion coordinates.
pub fn evaluate_model(ds: &Dataset, model: &DeepONetModel, m: usize, rank: usize) -> Result<ErrorRow> {
    let var = model.variable;
    if model.n_inputs() != m {
        return Err(Error::Incompatible(format!("model takes {} inputs, not M = {m}", model.n_inputs())));
    }
    let train = ds.train_set(var, m)?;
    let test = ds.test_set(var, m)?;
    let pred_test = model.predict_batch(&test.xi, &test.coords)?;
    let pred_train = model.predict_batch(&train.xi, &train.coords)?;
    Ok(ErrorRow {
        variable: var,
        m,
        k: model.k,
        rank,
        test_error: relative_test_error(&pred_test, &test.f)?,
        test_error_rooted: relative_test_error_rooted(&pred_test, &test.f)?,
        train_error: relative_test_error(&pred_train, &train.f)?,
        baseline_error: mean_predictor_error(&train.f, &test.f)?,
    })
}

/// Wall-clock accounting; kept apart from the reproducible metrics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingLedger {
    pub n_train: usize,
    /// FEM seconds for the training rows.
    pub fem_seconds: f64,
    /// Training seconds of every model as (variable, M, seconds).
    pub model_seconds: Vec<(Variable, usize, f64)>,
    /// Crossover count of the selected model per variable.
    pub crossover: Vec<(Variable, f64)>,
}

impl TimingLedger {
    pub fn new(
        n_train: usize,
        fem_seconds: f64,
        model_seconds: Vec<(Variable, usize, f64)>,
        selected: &[(Variable, usize)],
    ) -> Result<Self> {
        let mut crossover = Vec::new();
        for &(v, m) in selected {
            if let Some(&(_, _, t)) = model_seconds.iter().find(|(w, n, _)| *w == v && *n == m) {
                crossover.push((v, crossover_count(n_train, t, fem_seconds)?));
            }
        }
        Ok(Self {
            n_train,
            fem_seconds,
            model_seconds,
            crossover,
        })
    }

    pub fn train_seconds(&self, var: Variable, m: usize) -> Option<f64> {
        self.model_seconds.iter().find(|(v, n, _)| *v == var && *n == m).map(|r| r.2)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub spec_hash: String,
    pub rows: Vec<ErrorRow>,
    /// `M` with the lowest test error per variable.
    pub selected: Vec<(Variable, usize)>,
}

impl RunReport {
    pub fn from_rows(spec_hash: String, rows: Vec<ErrorRow>) -> Self {
        let mut selected: Vec<(Variable, usize)> = Vec::new();
        for var in Variable::ALL {
            let best = rows
                .iter()
                .filter(|r| r.variable == var)
                .min_by(|a, b| a.test_error.total_cmp(&b.test_error).then(a.m.cmp(&b.m)));
            if let Some(r) = best {
                selected.push((var, r.m));
            }
        }
        Self {
            spec_hash,
            rows,
            selected,
        }
    }

    pub fn selected_m(&self, var: Variable) -> Option<usize> {
        self.selected.iter().find(|(v, _)| *v == var).map(|&(_, m)| m)
    }

    pub fn row(&self, var: Variable, m: usize) -> Option<&ErrorRow> {
        self.rows.iter().find(|r| r.variable == var && r.m == m)
    }

    pub fn metrics_csv(&self) -> String {
        let mut s = String::from("variable,M,K,rank,test_error,test_error_rooted,train_error,baseline_error,selected\n");
        for r in &self.rows {
            let sel = self.selected_m(r.variable) == Some(r.m);
            let _ = writeln!(
                s,
                "{},{},{},{},{:e},{:e},{:e},{:e},{}",
                r.variable, r.m, r.k, r.rank, r.test_error, r.test_error_rooted, r.train_error, r.baseline_error, sel
            );
        }
        s
    }
}

#[derive(Debug, Clone)]
pub struct PipelineResult {
    pub context: BenchmarkContext,
    pub dataset: Dataset,
    pub models: Vec<TrainedVariable>,
    pub report: RunReport,
    pub timing: TimingLedger,
}

impl PipelineResult {
    pub fn model(&self, var: Variable, m: usize) -> Option<&TrainedVariable> {
        self.models.iter().find(|t| t.variable == var && t.m == m)
    }
}

/// Sample, solve, train every (variable, M) pair and evaluate.
pub fn run_pipeline(spec: &BenchmarkSpec, workers: usize) -> Result<PipelineResult> {
    let (context, dataset) = generate_dataset(spec, workers).map_err(|e| e.context("data generation"))?;
    let mut models = Vec::new();
    let mut rows = Vec::new();
    for var in spec.variable_list() {
        let (rank, k) = basis_size(spec, &dataset, var)?;
        for &m in &spec.m_candidates {
            let tv = train_variable(spec, &dataset, var, m, Some(k))?;
            debug_assert_eq!(tv.rank, rank);
            rows.push(evaluate(&dataset, &tv).map_err(|e| e.context(format!("evaluating {var} with M = {m}")))?);
            models.push(tv);
        }
    }
    let report = RunReport::from_rows(spec.hash(), rows);
    let model_seconds = models.iter().map(|t| (t.variable, t.m, t.seconds)).collect();
    let timing = TimingLedger::new(spec.n_train, dataset.train_fem_seconds(), model_seconds, &report.selected)?;
    Ok(PipelineResult {
        context,
        dataset,
        models,
        report,
        timing,
    })
}

/// One cell of a permeability-statistics sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepEntry {
    pub length: f64,
    pub sigma: f64,
    pub variable: Variable,
    pub error: f64,
}

/// Rows by correlation length, one column per (variable, σ).
pub fn sweep_csv(entries: &[SweepEntry]) -> String {
    let mut lengths: Vec<f64> = entries.iter().map(|e| e.length).collect();
    let mut sigmas: Vec<f64> = entries.iter().map(|e| e.sigma).collect();
    for v in [&mut lengths, &mut sigmas] {
        v.sort_by(f64::total_cmp);
        v.dedup();
    }
    let vars: Vec<Variable> = Variable::ALL
        .into_iter()
        .filter(|v| entries.iter().any(|e| e.variable == *v))
        .collect();
    let mut s = String::from("l");
    for v in &vars {
        for sg in &sigmas {
            let _ = write!(s, ",{v} sigma={sg}");
        }
    }
    s.push('\n');
    for l in &lengths {
        let _ = write!(s, "{l}");
        for v in &vars {
            for sg in &sigmas {
                let cell = entries
                    .iter()
                    .find(|e| e.length == *l && e.sigma == *sg && e.variable == *v)
                    .map_or(String::new(), |e| format!("{:.2e}", e.error));
                let _ = write!(s, ",{cell}");
            }
        }
        s.push('\n');
    }
    s
}
