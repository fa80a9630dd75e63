use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_porosurf"));
    c.env_remove("POROSURF_SEED").env("RUST_LOG", "warn");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = run(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn code(args: &[&str]) -> i32 {
    run(args).status.code().unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// A consolidation spec small enough to generate and train in seconds.
fn tiny_spec(dir: &Path, extra: &str) -> PathBuf {
    let spec = dir.join("spec.json");
    ok(&["spec", "consolidation", "--profile", "desk", "--out", s(&spec)]);
    let patch = dir.join("tiny.json");
    fs::write(
        &patch,
        format!(
            r#"{{"mesh": {{"nx": 3, "nz": 3}}, "n_train": 8, "n_test": 3, "dt": 0.1,
               "m_candidates": [3, 5],
               "variables": [
                 {{"variable": "u_z", "trunk_hidden": [10], "basis": {{"rule": "from-rank", "multiplier": 1.5}}, "branch_hidden": [8]}},
                 {{"variable": "p", "trunk_hidden": [10], "basis": {{"rule": "from-rank", "multiplier": 1.5}}, "branch_hidden": [8]}}
               ],
               "trunk_opt": {{"adamw_epochs": 20, "lbfgs_max_iter": 20}},
               "branch_opt": {{"adamw_epochs": 20, "lbfgs_max_iter": 20}} {extra} }}"#
        ),
    )
    .unwrap();
    let out = dir.join("tiny_spec.json");
    let merged = ok(&["spec", "consolidation", "--profile", "desk"]);
    let mut v: serde_json::Value = serde_json::from_str(&merged).unwrap();
    let p: serde_json::Value = serde_json::from_str(&fs::read_to_string(&patch).unwrap()).unwrap();
    porosurf_cli::merge_json(&mut v, &p);
    fs::write(&out, serde_json::to_string_pretty(&v).unwrap()).unwrap();
    out
}

fn gen(spec: &Path, out: &Path, workers: &str) {
    ok(&["gen-data", s(spec), s(out), "--workers", workers]);
}

fn files_equal(a: &Path, b: &Path, names: &[&str]) {
    for n in names {
        assert_eq!(fs::read(a.join(n)).unwrap(), fs::read(b.join(n)).unwrap(), "{n} differs");
    }
}

#[test]
fn gen_data_layout_and_determinism() {
    let t = tempfile::tempdir().unwrap();
    let spec = tiny_spec(t.path(), "");
    let a = t.path().join("a");
    let b = t.path().join("b");
    gen(&spec, &a, "1");
    gen(&spec, &b, "3");
    let names = ["manifest.json", "xi.bin", "f_uz.bin", "f_p.bin", "coords.bin"];
    for n in names {
        assert!(a.join(n).exists(), "{n}");
    }
    files_equal(&a, &b, &names);
    // Rerunning leaves a complete dataset untouched.
    let before = fs::read(a.join("f_p.bin")).unwrap();
    gen(&spec, &a, "2");
    assert_eq!(fs::read(a.join("f_p.bin")).unwrap(), before);
    // 11 rows of 1210 doubles.
    assert_eq!(fs::metadata(a.join("f_uz.bin")).unwrap().len(), 11 * 1210 * 8);
}

#[test]
fn seed_flag_and_environment() {
    let t = tempfile::tempdir().unwrap();
    let spec = tiny_spec(t.path(), "");
    let a = t.path().join("a");
    let b = t.path().join("b");
    let c = t.path().join("c");
    ok(&["gen-data", s(&spec), s(&a), "--seed", "99"]);
    let out = bin().args(["gen-data", s(&spec), s(&b)]).env("POROSURF_SEED", "99").output().unwrap();
    assert!(out.status.success());
    ok(&["gen-data", s(&spec), s(&c)]);
    files_equal(&a, &b, &["xi.bin", "f_uz.bin"]);
    assert_ne!(fs::read(a.join("xi.bin")).unwrap(), fs::read(c.join("xi.bin")).unwrap());
}

#[test]
fn spec_and_io_exit_codes() {
    let t = tempfile::tempdir().unwrap();
    let bad = t.path().join("bad.json");
    fs::write(&bad, "{ not json").unwrap();
    assert_eq!(code(&["gen-data", s(&bad), s(&t.path().join("o"))]), 3);
    let spec = tiny_spec(t.path(), r#", "m_candidates": [5000]"#);
    assert_eq!(code(&["gen-data", s(&spec), s(&t.path().join("o"))]), 3);
    assert_eq!(code(&["gen-data", s(&t.path().join("missing.json")), s(&t.path().join("o"))]), 2);
    let good = tiny_spec(t.path(), "");
    let blocker = t.path().join("file");
    fs::write(&blocker, "x").unwrap();
    assert_eq!(code(&["gen-data", s(&good), s(&blocker.join("sub"))]), 2);
}

#[test]
fn train_eval_export_report() {
    let t = tempfile::tempdir().unwrap();
    let spec = tiny_spec(t.path(), "");
    let data = t.path().join("data");
    gen(&spec, &data, "1");
    let m1 = t.path().join("m1");
    let m2 = t.path().join("m2");
    ok(&["train", s(&data), "--variable", "u_z", "--M", "3", "--seed", "5", "--out", s(&m1)]);
    ok(&["train", s(&data), "--variable", "u_z", "--M", "3", "--seed", "5", "--out", s(&m2)]);
    assert!(m1.join("training_curve.csv").exists());
    let bins: Vec<String> = fs::read_dir(&m1)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .filter(|n| n.ends_with(".bin") || n == "manifest.json")
        .collect();
    assert!(bins.contains(&"r_inv_t.bin".to_string()));
    let names: Vec<&str> = bins.iter().map(String::as_str).collect();
    files_equal(&m1, &m2, &names);

    // Zero predictions have error exactly one.
    let out = ok(&["eval", s(&m1), s(&data), "--baseline", "zero"]);
    assert!(out.contains("test error 1e0"), "{out}");

    let report = t.path().join("report");
    let out = ok(&["eval", s(&m1), s(&data), "--report", s(&report)]);
    assert!(out.contains("crossover u_z"), "{out}");
    for f in ["report.json", "metrics.csv", "timing.json", "spec.json"] {
        assert!(report.join(f).exists(), "{f}");
    }
    let ledger: porosurf::benchmark::TimingLedger =
        serde_json::from_str(&fs::read_to_string(report.join("timing.json")).unwrap()).unwrap();
    let t_t = ledger.train_seconds(porosurf::Variable::Uz, 3).unwrap();
    let again = porosurf::benchmark::crossover_count(ledger.n_train, t_t, ledger.fem_seconds).unwrap();
    assert_eq!(ledger.crossover[0].1, again);
    let metrics = fs::read_to_string(report.join("metrics.csv")).unwrap();
    assert_eq!(metrics.lines().count(), 2);

    let sweep = t.path().join("sweep.csv");
    ok(&["report", s(&report), "--sweep", s(&sweep)]);
    assert!(fs::read_to_string(&sweep).unwrap().starts_with("l,u_z sigma=1.5"));

    // Export at three times with the FEM comparison.
    let exp = t.path().join("exp");
    ok(&[
        "export-fields", s(&m1), "--dataset", s(&data), "--row", "9", "--times", "0.1,0.55,1.0", "--svg", "--out",
        s(&exp),
    ]);
    let csv = fs::read_to_string(exp.join("uz_fields.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), "x,z,t,value,fem,abs_error");
    let rows: Vec<Vec<f64>> = lines.map(|l| l.split(',').map(|v| v.parse().unwrap()).collect()).collect();
    assert_eq!(rows.len(), 121 * 3);
    for r in &rows {
        assert_eq!(r[5], (r[4] - r[3]).abs());
    }
    let mut times: Vec<f64> = rows.iter().map(|r| r[2]).collect();
    times.dedup();
    assert_eq!(times, vec![0.1, 0.55, 1.0]);
    for t in ["0p1", "0p55", "1"] {
        assert!(exp.join(format!("uz_t{t}.svg")).exists(), "{t}");
    }
    // FEM values at stored times match the dataset snapshots.
    let (_, ds, _) = porosurf::store::load_dataset(&data).unwrap();
    let f = ds.output(porosurf::Variable::Uz).unwrap();
    assert!((rows[0][4] - f[(9, 0)]).abs() < 1e-12);

    // Empty coordinate list gives a header-only file.
    let coords = t.path().join("coords.csv");
    fs::write(&coords, "x,z,t\n").unwrap();
    let exp2 = t.path().join("exp2");
    ok(&["predict", s(&m1), "--xi", "0.1,-0.2,0.3", "--coords", s(&coords), "--out", s(&exp2)]);
    assert_eq!(fs::read_to_string(exp2.join("uz_fields.csv")).unwrap(), "x,z,t,value\n");
}

#[test]
fn train_errors_map_to_exit_codes() {
    let t = tempfile::tempdir().unwrap();
    let spec = tiny_spec(t.path(), "");
    let data = t.path().join("data");
    gen(&spec, &data, "1");
    let m = t.path().join("m");
    // More modes than stored.
    assert_eq!(code(&["train", s(&data), "--variable", "p", "--M", "500", "--out", s(&m)]), 3);
    // Variable the benchmark does not model.
    assert_eq!(code(&["train", s(&data), "--variable", "u_x", "--out", s(&m)]), 3);

    // Model needing more modes than a second dataset stores.
    ok(&["train", s(&data), "--variable", "p", "--M", "5", "--out", s(&m)]);
    let few = tiny_spec(t.path(), r#", "field_modes": 4, "m_candidates": [3]"#);
    let data2 = t.path().join("data2");
    gen(&few, &data2, "1");
    assert_eq!(code(&["eval", s(&m), s(&data2)]), 5);
    // A dataset directory is not a model.
    assert_eq!(code(&["eval", s(&data), s(&data2)]), 5);

    // Corrupt snapshot bytes.
    let f = data.join("f_p.bin");
    let mut raw = fs::read(&f).unwrap();
    raw[100] ^= 0x40;
    fs::write(&f, raw).unwrap();
    assert_eq!(code(&["train", s(&data), "--variable", "p", "--out", s(&m)]), 4);
    assert_eq!(code(&["eval", s(&m), s(&data)]), 4);
}

#[test]
fn run_command_is_reproducible() {
    let t = tempfile::tempdir().unwrap();
    let spec = tiny_spec(t.path(), "");
    let a = t.path().join("a");
    let b = t.path().join("b");
    ok(&["run", s(&spec), s(&a)]);
    ok(&["run", s(&spec), s(&b), "--workers", "2"]);
    files_equal(&a.join("report"), &b.join("report"), &["report.json", "metrics.csv"]);
    files_equal(&a.join("models/p_M5"), &b.join("models/p_M5"), &["manifest.json", "branch_w0.bin", "r_inv_t.bin"]);
    let report: porosurf::benchmark::RunReport =
        serde_json::from_str(&fs::read_to_string(a.join("report/report.json")).unwrap()).unwrap();
    assert_eq!(report.rows.len(), 4);
    assert_eq!(report.selected.len(), 2);
}
