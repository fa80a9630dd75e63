use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use log::info;
use nalgebra::DMatrix;
use serde_json::Value;

use porosurf::benchmark::{
    consolidation_spec, evaluate_model, generate_rows, subsidence_spec, sweep_csv, train_variable, BasisSize,
    BenchmarkContext, BenchmarkSpec, Dataset, ErrorRow, RunReport, SweepEntry, TimingLedger, TrainedVariable,
};
use porosurf::operator::relative_test_error;
use porosurf::porofem::OutputGrid;
use porosurf::store::{self, LoadedModel, ModelMeta, PartialRows};
use porosurf::{Error, Variable};

use crate::svg::heatmap_svg;
use crate::{
    BaselineArg, EvalArgs, ExportArgs, GenDataArgs, KindArg, MetricArg, ReportArgs, RunArgs, SpecArgs, SpecOptions,
    TrainArgs,
};

/// A spec file that cannot be parsed or fails validation.
#[derive(Debug)]
pub struct SpecError(pub String);

impl std::fmt::Display for SpecError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "invalid spec: {}", self.0)
    }
}

impl std::error::Error for SpecError {}

pub const REPORT: &str = "report.json";
pub const METRICS: &str = "metrics.csv";
pub const LEDGER: &str = "timing.json";
pub const CURVE: &str = "training_curve.csv";

/// Recursive object merge: keys of `patch` replace or extend `base`.
pub fn merge_json(base: &mut Value, patch: &Value) {
    match (base, patch) {
        (Value::Object(b), Value::Object(p)) => {
            for (k, v) in p {
                merge_json(b.entry(k.clone()).or_insert(Value::Null), v);
            }
        }
        (b, p) => *b = p.clone(),
    }
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.display().to_string(),
        source: e,
    }.into())
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::Io {
            path: dir.display().to_string(),
            source: e,
        })?;
    }
    fs::write(path, text).map_err(|e| {
        Error::Io {
            path: path.display().to_string(),
            source: e,
        }
        .into()
    })
}

fn spec_value(spec: &BenchmarkSpec) -> Value {
    serde_json::to_value(spec).expect("spec serializes")
}

fn apply_config(value: &mut Value, config: Option<&Path>) -> Result<()> {
    if let Some(path) = config {
        let patch: Value = serde_json::from_str(&read_text(path)?)
            .map_err(|e| SpecError(format!("{}: {e}", path.display())))?;
        if !patch.is_object() {
            bail!(SpecError(format!("{} must hold a JSON object", path.display())));
        }
        merge_json(value, &patch);
    }
    Ok(())
}

fn parse_spec(value: Value) -> Result<BenchmarkSpec> {
    let spec: BenchmarkSpec = serde_json::from_value(value).map_err(|e| SpecError(e.to_string()))?;
    spec.validate().map_err(|e| SpecError(e.to_string()))?;
    Ok(spec)
}

/// Read a spec file and apply `--config`, `--profile` and `--seed`.
pub fn load_spec(path: &Path, opts: &SpecOptions) -> Result<BenchmarkSpec> {
    let text = read_text(path)?;
    let mut value: Value = serde_json::from_str(&text).map_err(|e| SpecError(format!("{}: {e}", path.display())))?;
    apply_config(&mut value, opts.config.as_deref())?;
    let mut spec: BenchmarkSpec = serde_json::from_value(value).map_err(|e| SpecError(e.to_string()))?;
    if let Some(p) = opts.profile {
        spec = spec.with_profile(p.into());
    }
    if let Some(seed) = opts.seed {
        spec.seeds.sample = seed;
    }
    spec.validate().map_err(|e| SpecError(e.to_string()))?;
    Ok(spec)
}

pub fn cmd_spec(a: &SpecArgs) -> Result<()> {
    let spec = match a.kind {
        KindArg::Consolidation => consolidation_spec(a.sigma, a.lx.unwrap_or(0.25), a.lz),
        KindArg::Subsidence => subsidence_spec(a.sigma, a.lx.unwrap_or(0.125)),
    }
    .with_profile(a.profile.into());
    spec.validate().map_err(|e| SpecError(e.to_string()))?;
    let text = serde_json::to_string_pretty(&spec)? + "\n";
    match &a.out {
        Some(p) => write_text(p, &text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn dataset_is_current(dir: &Path, spec: &BenchmarkSpec) -> bool {
    store::load_dataset(dir).is_ok_and(|(s, _, _)| s.hash() == spec.hash())
}

/// Generate (or resume) a dataset directory.
pub fn gen_data(spec: &BenchmarkSpec, out: &Path, workers: usize, chunk: usize) -> Result<Dataset> {
    if dataset_is_current(out, spec) {
        info!("{} is already complete", out.display());
        return Ok(store::load_dataset(out)?.1);
    }
    let manifest = out.join(store::MANIFEST);
    if manifest.exists() {
        fs::remove_file(&manifest).map_err(|e| Error::Io {
            path: manifest.display().to_string(),
            source: e,
        })?;
    }
    let ctx = BenchmarkContext::new(spec).context("preparing the benchmark")?;
    let (mut log, mut rows) = PartialRows::open(out, &ctx)?;
    if !rows.is_empty() {
        info!("resuming after {} solved rows", rows.len());
    }
    let n = spec.n_rows();
    let chunk = chunk.max(1);
    while rows.len() < n {
        let start = rows.len();
        let end = (start + chunk).min(n);
        let solved = generate_rows(&ctx, start..end, workers).context("data generation")?;
        log.append(&solved)?;
        rows.extend(solved);
        info!("solved {}/{n} rows", rows.len());
    }
    let ds = Dataset::assemble(&ctx, &rows)?;
    store::save_dataset(out, spec, &ds)?;
    Ok(ds)
}

pub fn cmd_gen_data(a: &GenDataArgs) -> Result<Dataset> {
    let spec = load_spec(&a.spec, &a.opts)?;
    let ds = gen_data(&spec, &a.out, a.workers, a.chunk)?;
    println!(
        "wrote {} rows x {} outputs for {:?} to {} ({:.1} s of FEM)",
        ds.n_rows(),
        spec.m_y(),
        spec.variable_list().iter().map(|v| v.as_str()).collect::<Vec<_>>(),
        a.out.display(),
        ds.fem_seconds()
    );
    Ok(ds)
}

fn training_curve(tv: &TrainedVariable) -> String {
    let mut s = String::from("stage,step,loss\n");
    let mut push = |stage: &str, losses: &[f64]| {
        for (i, l) in losses.iter().enumerate() {
            let _ = writeln!(s, "{stage},{i},{l:e}");
        }
    };
    push("trunk-adamw", &tv.fit.trunk.adam.epoch_losses);
    if let Some(r) = &tv.fit.trunk.lbfgs {
        push("trunk-lbfgs", &r.history);
    }
    push("branch-adamw", &tv.fit.branch.adam.epoch_losses);
    if let Some(r) = &tv.fit.branch.lbfgs {
        push("branch-lbfgs", &r.history);
    }
    s
}

/// Train one (variable, M) model and write its checkpoint.
pub fn train_to(
    spec: &BenchmarkSpec,
    ds: &Dataset,
    dataset_hash: &str,
    var: Variable,
    m: usize,
    k: Option<usize>,
    out: &Path,
) -> Result<TrainedVariable> {
    let tv = train_variable(spec, ds, var, m, k)?;
    store::save_model(out, spec, &tv.fit.model, ModelMeta::new(&tv, spec, dataset_hash), tv.seconds)?;
    write_text(&out.join(CURVE), &training_curve(&tv))?;
    Ok(tv)
}

pub fn cmd_train(a: &TrainArgs) -> Result<()> {
    let (spec, ds, man) = store::load_dataset(&a.dataset).with_context(|| format!("loading {}", a.dataset.display()))?;
    let mut value = spec_value(&spec);
    apply_config(&mut value, a.config.as_deref())?;
    let mut spec = parse_spec(value)?;
    if let Some(seed) = a.seed {
        spec.seeds.train = seed;
    }
    if let Some(mult) = a.k_multiplier {
        for arch in &mut spec.variables {
            arch.basis = BasisSize::FromRank { multiplier: mult };
        }
    }
    spec.validate().map_err(|e| SpecError(e.to_string()))?;
    spec.arch(a.variable)?;
    let m = a.m.unwrap_or(spec.m_candidates[0]);
    let tv = train_to(&spec, &ds, &man.spec_hash, a.variable, m, a.k, &a.out)?;
    println!(
        "{}: M = {m}, rank = {}, K = {}, trunk loss {:.3e}, branch loss {:.3e}, {:.1} s -> {}",
        a.variable,
        tv.rank,
        tv.k,
        tv.fit.trunk.loss,
        tv.fit.branch.loss,
        tv.seconds,
        a.out.display()
    );
    Ok(())
}

fn check_compatible(model: &LoadedModel, ds: &Dataset) -> Result<()> {
    let var = model.meta.variable;
    if ds.output(var).is_err() {
        bail!(Error::Incompatible(format!(
            "model predicts {var} but the dataset holds {:?}",
            ds.variables().iter().map(|v| v.as_str()).collect::<Vec<_>>()
        )));
    }
    if model.meta.m > ds.xi.ncols() {
        bail!(Error::Incompatible(format!(
            "model needs M = {} inputs, the dataset stores {}",
            model.meta.m,
            ds.xi.ncols()
        )));
    }
    Ok(())
}

fn append_metrics(path: &Path, line: &str) -> Result<()> {
    const HEADER: &str = "source,variable,M,K,test_error,test_error_rooted,train_error,baseline_error\n";
    let mut text = if path.exists() { read_text(path)? } else { HEADER.to_string() };
    text.push_str(line);
    text.push('\n');
    write_text(path, &text)
}

/// Insert `row` into the report in `dir` and refresh the selection, the
/// ledger and the crossover counts.
pub fn update_report(dir: &Path, ds_spec: &BenchmarkSpec, ds: &Dataset, row: ErrorRow, train_seconds: Option<f64>) -> Result<()> {
    let report_path = dir.join(REPORT);
    let ledger_path = dir.join(LEDGER);
    let mut rows = if report_path.exists() {
        let old: RunReport = store::read_json(&report_path)?;
        if old.spec_hash != ds_spec.hash() {
            bail!(Error::Incompatible(format!("{} belongs to a different dataset", dir.display())));
        }
        old.rows
    } else {
        Vec::new()
    };
    let mut seconds = if ledger_path.exists() {
        store::read_json::<TimingLedger>(&ledger_path)?.model_seconds
    } else {
        Vec::new()
    };
    let (var, m) = (row.variable, row.m);
    rows.retain(|r| !(r.variable == var && r.m == m));
    rows.push(row);
    rows.sort_by_key(|r| (Variable::ALL.iter().position(|v| *v == r.variable), r.m));
    if let Some(t) = train_seconds {
        seconds.retain(|(v, n, _)| !(*v == var && *n == m));
        seconds.push((var, m, t));
    }
    let report = RunReport::from_rows(ds_spec.hash(), rows);
    let fem = ds.train_fem_seconds();
    fs::create_dir_all(dir).map_err(|e| Error::Io {
        path: dir.display().to_string(),
        source: e,
    })?;
    store::write_json(&report_path, &report)?;
    store::write_json(&dir.join(store::SPEC), ds_spec)?;
    write_text(&dir.join(METRICS), &report.metrics_csv())?;
    if fem > 0.0 {
        let ledger = TimingLedger::new(ds.n_train, fem, seconds, &report.selected)?;
        store::write_json(&ledger_path, &ledger)?;
        for (v, c) in &ledger.crossover {
            println!("crossover {v}: {c:.1} simulations");
        }
    }
    Ok(())
}

pub fn cmd_eval(a: &EvalArgs) -> Result<()> {
    let model = store::load_model(&a.model).with_context(|| format!("loading {}", a.model.display()))?;
    let (ds_spec, ds, _) = store::load_dataset(&a.dataset).with_context(|| format!("loading {}", a.dataset.display()))?;
    check_compatible(&model, &ds)?;
    let (var, m) = (model.meta.variable, model.meta.m);
    if let Some(b) = a.baseline {
        let test = ds.test_set(var, m)?;
        let train = ds.train_set(var, m)?;
        let (name, pred) = match b {
            BaselineArg::Zero => ("zero", DMatrix::zeros(test.f.nrows(), test.f.ncols())),
            BaselineArg::Mean => {
                let mean = train.f.row_mean();
                ("mean", DMatrix::from_fn(test.f.nrows(), test.f.ncols(), |_, j| mean[j]))
            }
        };
        let err = relative_test_error(&pred, &test.f)?;
        println!("{var} {name} baseline: test error {err:e}");
        if let Some(p) = &a.metrics {
            append_metrics(p, &format!("{name},{var},{m},,{err:e},{:e},,", err.sqrt()))?;
        }
        return Ok(());
    }
    let row = evaluate_model(&ds, &model.model, m, model.meta.rank)?;
    println!(
        "{var} M = {m} K = {}: test error {:e} (rooted {:e}), train error {:e}, mean-predictor error {:e}",
        row.k, row.test_error, row.test_error_rooted, row.train_error, row.baseline_error
    );
    if let Some(p) = &a.metrics {
        append_metrics(
            p,
            &format!(
                "model,{var},{m},{},{:e},{:e},{:e},{:e}",
                row.k, row.test_error, row.test_error_rooted, row.train_error, row.baseline_error
            ),
        )?;
    }
    if let Some(dir) = &a.report {
        update_report(dir, &ds_spec, &ds, row, model.train_seconds)?;
    }
    Ok(())
}

fn read_coords(path: &Path) -> Result<Vec<[f64; 3]>> {
    let text = read_text(path)?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        let vals: std::result::Result<Vec<f64>, _> = line.split(',').map(|v| v.trim().parse::<f64>()).collect();
        match vals {
            Ok(v) if v.len() == 3 => out.push([v[0], v[1], v[2]]),
            _ => bail!(Error::InvalidInput(format!("{}:{}: expected x,z,t", path.display(), i + 1))),
        }
    }
    Ok(out)
}

fn unique_sorted(vals: impl Iterator<Item = f64>) -> Vec<f64> {
    let mut v: Vec<f64> = vals.collect();
    v.sort_by(f64::total_cmp);
    v.dedup();
    v
}

fn fmt_time(t: f64) -> String {
    format!("{t}").replace('.', "p")
}

pub fn cmd_export(a: &ExportArgs) -> Result<()> {
    let model = store::load_model(&a.model).with_context(|| format!("loading {}", a.model.display()))?;
    let (var, m) = (model.meta.variable, model.meta.m);
    let dataset = match &a.dataset {
        Some(d) => Some(store::load_dataset(d).with_context(|| format!("loading {}", d.display()))?),
        None => None,
    };
    if let Some((_, ds, _)) = &dataset {
        check_compatible(&model, ds)?;
    }
    let grid_spec = dataset.as_ref().map_or(&model.spec, |d| &d.0);
    let coords: Vec<[f64; 3]> = match (&a.coords, &a.times) {
        (Some(path), _) => read_coords(path)?,
        (None, times) => {
            let times = times.clone().unwrap_or_else(|| grid_spec.output.times.clone());
            OutputGrid::tensor(&grid_spec.output.xs, &grid_spec.output.zs, &times).coords()
        }
    };
    let full_xi: Vec<f64> = match (&a.xi, &dataset, a.row) {
        (Some(xi), _, _) => xi.clone(),
        (None, Some((_, ds, _)), Some(r)) if r < ds.n_rows() => ds.xi.row(r).iter().copied().collect(),
        (None, Some((_, ds, _)), Some(r)) => {
            bail!(Error::InvalidInput(format!("row {r} outside the {} dataset rows", ds.n_rows())))
        }
        _ => bail!(Error::InvalidInput("need --xi, or --dataset with --row".into())),
    };
    if full_xi.len() < m {
        bail!(Error::InvalidInput(format!("{} coefficients given, the model needs M = {m}", full_xi.len())));
    }
    let pred: Vec<f64> = if coords.is_empty() {
        Vec::new()
    } else {
        let xi = DMatrix::from_row_slice(1, m, &full_xi[..m]);
        model.model.predict_batch(&xi, &coords)?.row(0).iter().copied().collect()
    };
    // Reference solve of the referenced dataset row on the requested points.
    let fem: Option<Vec<f64>> = match (&dataset, a.row) {
        (Some((spec, ds, _)), Some(r)) if !coords.is_empty() => {
            let ctx = BenchmarkContext::new(spec)?;
            let pts = unique_sorted(coords.iter().map(|c| c[0]))
                .into_iter()
                .flat_map(|x| unique_sorted(coords.iter().map(|c| c[1])).into_iter().map(move |z| [x, z]))
                .filter(|p| coords.iter().any(|c| c[0] == p[0] && c[1] == p[1]))
                .collect::<Vec<_>>();
            let times = unique_sorted(coords.iter().map(|c| c[2]));
            let grid = OutputGrid {
                points: pts.clone(),
                times: times.clone(),
            };
            let sol = ctx.solve_grid(ds.xi.row(r).iter().copied().collect::<Vec<_>>().as_slice(), ds.xi.ncols(), &grid)?;
            Some(
                coords
                    .iter()
                    .map(|c| {
                        let ip = pts.iter().position(|p| p[0] == c[0] && p[1] == c[1]).expect("point listed");
                        let it = times.iter().position(|&t| t == c[2]).expect("time listed");
                        sol.at(var, it, ip)
                    })
                    .collect(),
            )
        }
        _ => None,
    };
    fs::create_dir_all(&a.out).map_err(|e| Error::Io {
        path: a.out.display().to_string(),
        source: e,
    })?;
    let mut csv = String::from(if fem.is_some() { "x,z,t,value,fem,abs_error\n" } else { "x,z,t,value\n" });
    for (i, c) in coords.iter().enumerate() {
        let _ = write!(csv, "{},{},{},{}", c[0], c[1], c[2], pred[i]);
        if let Some(f) = &fem {
            let _ = write!(csv, ",{},{}", f[i], (f[i] - pred[i]).abs());
        }
        csv.push('\n');
    }
    let csv_path = a.out.join(format!("{}_fields.csv", var.short()));
    write_text(&csv_path, &csv)?;
    let times = unique_sorted(coords.iter().map(|c| c[2]));
    if a.svg {
        for &t in &times {
            let slice: Vec<(f64, f64, f64)> = coords
                .iter()
                .zip(&pred)
                .filter(|(c, _)| c[2] == t)
                .map(|(c, &v)| (c[0], c[1], v))
                .collect();
            if let Some(svg) = heatmap_svg(&slice, &format!("{var} at t = {t}")) {
                write_text(&a.out.join(format!("{}_t{}.svg", var.short(), fmt_time(t))), &svg)?;
            }
        }
    }
    println!("{} values at {} times -> {}", coords.len(), times.len(), csv_path.display());
    Ok(())
}

pub fn cmd_report(a: &ReportArgs) -> Result<()> {
    let mut entries = Vec::new();
    for dir in &a.reports {
        let report: RunReport = store::read_json(&dir.join(REPORT))?;
        let spec: BenchmarkSpec = store::read_json(&dir.join(store::SPEC))?;
        println!("{} (spec {})", dir.display(), &report.spec_hash[..12]);
        print!("{}", report.metrics_csv());
        let ledger = dir.join(LEDGER);
        if ledger.exists() {
            let l: TimingLedger = store::read_json(&ledger)?;
            println!("FEM seconds for {} training rows: {:.2}", l.n_train, l.fem_seconds);
            for (v, c) in &l.crossover {
                println!("crossover {v}: {c:.1}");
            }
        }
        for &(var, m) in &report.selected {
            let row = report.row(var, m).expect("selected row exists");
            entries.push(SweepEntry {
                length: spec.covariance.l_x,
                sigma: spec.covariance.sigma_kappa,
                variable: var,
                error: match a.metric {
                    MetricArg::Squared => row.test_error,
                    MetricArg::Rooted => row.test_error_rooted,
                },
            });
        }
    }
    if let Some(path) = &a.sweep {
        write_text(path, &sweep_csv(&entries))?;
        println!("sweep table -> {}", path.display());
    }
    Ok(())
}

pub fn model_dir(out: &Path, var: Variable, m: usize) -> PathBuf {
    out.join("models").join(format!("{}_M{m}", var.short()))
}

pub fn cmd_run(a: &RunArgs) -> Result<()> {
    let spec = load_spec(&a.spec, &a.opts)?;
    let data_dir = a.out.join("dataset");
    let report_dir = a.out.join("report");
    gen_data(&spec, &data_dir, a.workers, 32)?;
    let (ds_spec, ds, man) = store::load_dataset(&data_dir)?;
    for var in spec.variable_list() {
        for &m in &spec.m_candidates {
            let dir = model_dir(&a.out, var, m);
            let tv = train_to(&spec, &ds, &man.spec_hash, var, m, None, &dir)?;
            let row = evaluate_model(&ds, &tv.fit.model, m, tv.rank)?;
            println!("{var} M = {m}: K = {}, test error {:e}, baseline {:e}", tv.k, row.test_error, row.baseline_error);
            update_report(&report_dir, &ds_spec, &ds, row, Some(tv.seconds))?;
        }
    }
    let report: RunReport = store::read_json(&report_dir.join(REPORT))?;
    for (v, m) in &report.selected {
        println!("selected {v}: M = {m}");
    }
    Ok(())
}
