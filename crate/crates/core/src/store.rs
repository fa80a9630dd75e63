//! On-disk datasets and model checkpoints.
//!
//! Matrices are raw little-endian `f64`, row-major, without padding, one
//! file per matrix. A JSON manifest lists every matrix with its shape and
//! SHA-256 and records what is needed to reproduce the artifact. Wall-clock
//! timings live in a separate `timing.json` so that manifests and matrices
//! are bitwise reproducible.

use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::{de::DeserializeOwned, Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::benchmark::{derive_seed, BenchmarkContext, BenchmarkSpec, Dataset, SampleOutput, Seeds, TrainedVariable};
use crate::error::{Error, Result};
use crate::neuralnet::{Mlp, OptimizerConfig};
use crate::operator::{DeepONetModel, Variable};
use crate::randfield::GENERATOR_ID;
use crate::scaling::ScaleSet;

pub const FORMAT_VERSION: u32 = 1;
pub const MANIFEST: &str = "manifest.json";
pub const SPEC: &str = "spec.json";
pub const TIMING: &str = "timing.json";
const PARTIAL: &str = "partial.bin";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixDescriptor {
    pub name: String,
    pub file: String,
    pub rows: usize,
    pub cols: usize,
    pub byte_offset: u64,
    pub sha256: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ArtifactKind {
    Dataset,
    Model,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub artifact: ArtifactKind,
    pub spec_hash: String,
    pub seeds: Seeds,
    pub generator: String,
    pub matrices: Vec<MatrixDescriptor>,
    pub scales: ScaleSet,
    pub trunk_opt: OptimizerConfig,
    pub branch_opt: OptimizerConfig,
    /// Dataset rows solved so far.
    pub completed_rows: usize,
    pub variables: Vec<Variable>,
    /// Model checkpoints only.
    pub model: Option<ModelMeta>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelMeta {
    pub variable: Variable,
    pub m: usize,
    pub k: usize,
    pub rank: usize,
    pub trunk_widths: Vec<usize>,
    pub branch_widths: Vec<usize>,
    pub coord_bounds: [[f64; 2]; 3],
    pub trunk_seed: u64,
    pub branch_seed: u64,
    /// Final trunk and branch losses.
    pub trunk_loss: f64,
    pub branch_loss: f64,
    /// Spec hash of the dataset the model was trained on.
    pub dataset_hash: String,
}

impl ModelMeta {
    pub fn new(tv: &TrainedVariable, spec: &BenchmarkSpec, dataset_hash: &str) -> Self {
        let model = &tv.fit.model;
        Self {
            variable: tv.variable,
            m: tv.m,
            k: tv.k,
            rank: tv.rank,
            trunk_widths: model.trunk.widths.clone(),
            branch_widths: model.branch.widths.clone(),
            coord_bounds: model.coord_bounds,
            trunk_seed: derive_seed(spec.seeds.train, tv.variable, tv.m, 1),
            branch_seed: derive_seed(spec.seeds.train, tv.variable, tv.m, 2),
            trunk_loss: tv.fit.trunk.loss,
            branch_loss: tv.fit.branch.loss,
            dataset_hash: dataset_hash.to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Timing {
    /// FEM seconds per dataset row.
    pub row_seconds: Vec<f64>,
    pub train_seconds: Option<f64>,
}

fn io<T>(path: &Path, r: std::io::Result<T>) -> Result<T> {
    r.map_err(|e| Error::io(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    io(path, fs::write(path, text))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = io(path, fs::read_to_string(path))?;
    serde_json::from_str(&text).map_err(|e| Error::CorruptData(format!("{}: {e}", path.display())))
}

fn matrix_bytes(m: &DMatrix<f64>) -> Vec<u8> {
    let mut out = Vec::with_capacity(m.len() * 8);
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            out.extend_from_slice(&m[(i, j)].to_le_bytes());
        }
    }
    out
}

fn sha_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Write `m` to `dir/file` and describe it.
pub fn write_matrix(dir: &Path, name: &str, file: &str, m: &DMatrix<f64>) -> Result<MatrixDescriptor> {
    let bytes = matrix_bytes(m);
    let path = dir.join(file);
    io(&path, fs::write(&path, &bytes))?;
    Ok(MatrixDescriptor {
        name: name.to_string(),
        file: file.to_string(),
        rows: m.nrows(),
        cols: m.ncols(),
        byte_offset: 0,
        sha256: sha_hex(&bytes),
    })
}

/// Read a matrix and check its size and checksum.
pub fn read_matrix(dir: &Path, d: &MatrixDescriptor) -> Result<DMatrix<f64>> {
    let path = dir.join(&d.file);
    let bytes = io(&path, fs::read(&path))?;
    let start = d.byte_offset as usize;
    let len = d.rows * d.cols * 8;
    if bytes.len() < start + len {
        return Err(Error::CorruptData(format!(
            "{}: {} bytes, descriptor needs {}",
            path.display(),
            bytes.len(),
            start + len
        )));
    }
    let body = &bytes[start..start + len];
    if sha_hex(body) != d.sha256 {
        return Err(Error::CorruptData(format!("{}: checksum mismatch", path.display())));
    }
    let vals: Vec<f64> = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect();
    Ok(DMatrix::from_row_slice(d.rows, d.cols, &vals))
}

impl Manifest {
    fn new(spec: &BenchmarkSpec, artifact: ArtifactKind) -> Result<Self> {
        Ok(Self {
            format_version: FORMAT_VERSION,
            artifact,
            spec_hash: spec.hash(),
            seeds: spec.seeds,
            generator: GENERATOR_ID.to_string(),
            matrices: Vec::new(),
            scales: spec.scales()?,
            trunk_opt: spec.trunk_opt.clone(),
            branch_opt: spec.branch_opt.clone(),
            completed_rows: 0,
            variables: spec.variable_list(),
            model: None,
        })
    }

    pub fn matrix(&self, name: &str) -> Result<&MatrixDescriptor> {
        self.matrices
            .iter()
            .find(|d| d.name == name)
            .ok_or_else(|| Error::CorruptData(format!("manifest lists no matrix '{name}'")))
    }

    pub fn load(dir: &Path, expect: ArtifactKind) -> Result<Self> {
        let m: Manifest = read_json(&dir.join(MANIFEST))?;
        if m.format_version != FORMAT_VERSION {
            return Err(Error::Incompatible(format!(
                "format version {} (this build reads {FORMAT_VERSION})",
                m.format_version
            )));
        }
        if m.artifact != expect {
            return Err(Error::Incompatible(format!("{} holds a {:?}, expected a {expect:?}", dir.display(), m.artifact)));
        }
        if m.generator != GENERATOR_ID {
            return Err(Error::Incompatible(format!("sample generator '{}' is not '{GENERATOR_ID}'", m.generator)));
        }
        Ok(m)
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    io(dir, fs::create_dir_all(dir))
}

pub fn dataset_file(var: Variable) -> String {
    format!("f_{}.bin", var.short())
}

/// Write a complete dataset directory.
pub fn save_dataset(dir: &Path, spec: &BenchmarkSpec, ds: &Dataset) -> Result<Manifest> {
    create_dir(dir)?;
    let mut man = Manifest::new(spec, ArtifactKind::Dataset)?;
    man.matrices.push(write_matrix(dir, "xi", "xi.bin", &ds.xi)?);
    for (var, f) in &ds.outputs {
        man.matrices.push(write_matrix(dir, &format!("f_{var}"), &dataset_file(*var), f)?);
    }
    let coords = DMatrix::from_fn(ds.coords.len(), 3, |i, j| ds.coords[i][j]);
    man.matrices.push(write_matrix(dir, "coords", "coords.bin", &coords)?);
    man.completed_rows = ds.n_rows();
    write_json(&dir.join(SPEC), spec)?;
    write_json(
        &dir.join(TIMING),
        &Timing {
            row_seconds: ds.row_seconds.clone(),
            train_seconds: None,
        },
    )?;
    write_json(&dir.join(MANIFEST), &man)?;
    let partial = dir.join(PARTIAL);
    if partial.exists() {
        io(&partial, fs::remove_file(&partial))?;
    }
    Ok(man)
}

/// Load a dataset and the benchmark definition it was generated from.
pub fn load_dataset(dir: &Path) -> Result<(BenchmarkSpec, Dataset, Manifest)> {
    let man = Manifest::load(dir, ArtifactKind::Dataset)?;
    let spec: BenchmarkSpec = read_json(&dir.join(SPEC))?;
    if spec.hash() != man.spec_hash {
        return Err(Error::CorruptData("spec.json does not match the manifest hash".into()));
    }
    if man.completed_rows != spec.n_rows() {
        return Err(Error::CorruptData(format!(
            "dataset is incomplete: {} of {} rows",
            man.completed_rows,
            spec.n_rows()
        )));
    }
    let xi = read_matrix(dir, man.matrix("xi")?)?;
    let mut outputs = Vec::new();
    for &var in &man.variables {
        let f = read_matrix(dir, man.matrix(&format!("f_{var}"))?)?;
        if f.nrows() != xi.nrows() {
            return Err(Error::CorruptData(format!("f_{var} has {} rows, xi has {}", f.nrows(), xi.nrows())));
        }
        outputs.push((var, f));
    }
    let c = read_matrix(dir, man.matrix("coords")?)?;
    if c.ncols() != 3 || outputs.iter().any(|(_, f)| f.ncols() != c.nrows()) {
        return Err(Error::CorruptData("coordinate table does not match the snapshot width".into()));
    }
    let coords = (0..c.nrows()).map(|i| [c[(i, 0)], c[(i, 1)], c[(i, 2)]]).collect();
    let timing: Timing = read_json(&dir.join(TIMING)).unwrap_or_default();
    let n = xi.nrows();
    let row_seconds = if timing.row_seconds.len() == n { timing.row_seconds } else { vec![0.0; n] };
    let ds = Dataset {
        xi,
        outputs,
        coords,
        n_train: spec.n_train,
        row_seconds,
    };
    Ok((spec, ds, man))
}

/// Append-only log of solved rows, so that an interrupted generation can
/// resume. Each record is the row's FEM seconds followed by its values for
/// every variable.
pub struct PartialRows {
    path: PathBuf,
    record: usize,
    file: fs::File,
}

impl PartialRows {
    /// Open the log in `dir` and return the rows already solved. A log left
    /// by a different spec is discarded.
    pub fn open(dir: &Path, ctx: &BenchmarkContext) -> Result<(Self, Vec<SampleOutput>)> {
        create_dir(dir)?;
        let spec = &ctx.spec;
        let hash = spec.hash();
        let spec_path = dir.join(SPEC);
        let same_spec = spec_path.exists()
            && read_json::<BenchmarkSpec>(&spec_path).map(|s| s.hash() == hash).unwrap_or(false);
        let path = dir.join(PARTIAL);
        let n_vars = spec.variables.len();
        let record = 1 + n_vars * spec.m_y();
        let mut done = Vec::new();
        if same_spec && path.exists() {
            let mut bytes = Vec::new();
            io(&path, fs::File::open(&path).and_then(|mut f| f.read_to_end(&mut bytes)))?;
            let whole = bytes.len() / (8 * record);
            let vals: Vec<f64> = bytes[..whole * 8 * record]
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
                .collect();
            for rec in vals.chunks_exact(record).take(spec.n_rows()) {
                let values = rec[1..].chunks_exact(spec.m_y()).map(<[f64]>::to_vec).collect();
                done.push(SampleOutput { values, seconds: rec[0] });
            }
            // Drop a torn trailing record.
            let keep = (done.len() * 8 * record) as u64;
            io(&path, fs::OpenOptions::new().write(true).open(&path).and_then(|f| f.set_len(keep)))?;
        } else {
            write_json(&spec_path, spec)?;
            io(&path, fs::write(&path, []))?;
        }
        let file = io(&path, fs::OpenOptions::new().append(true).open(&path))?;
        Ok((Self { path, record, file }, done))
    }

    pub fn append(&mut self, rows: &[SampleOutput]) -> Result<()> {
        let mut buf = Vec::with_capacity(rows.len() * self.record * 8);
        for r in rows {
            buf.extend_from_slice(&r.seconds.to_le_bytes());
            for v in r.values.iter().flatten() {
                buf.extend_from_slice(&v.to_le_bytes());
            }
        }
        io(&self.path, self.file.write_all(&buf).and_then(|_| self.file.sync_data()))
    }
}

fn layer_matrices(net: &Mlp) -> Vec<(DMatrix<f64>, DMatrix<f64>)> {
    (0..net.n_layers())
        .map(|l| {
            let (w_off, b_off) = net.layer_offsets(l);
            let (n_in, n_out) = (net.widths[l], net.widths[l + 1]);
            let w = DMatrix::from_column_slice(n_out, n_in, &net.params[w_off..w_off + n_out * n_in]);
            let b = DMatrix::from_column_slice(n_out, 1, &net.params[b_off..b_off + n_out]);
            (w, b)
        })
        .collect()
}

fn save_net(dir: &Path, tag: &str, net: &Mlp, out: &mut Vec<MatrixDescriptor>) -> Result<()> {
    for (l, (w, b)) in layer_matrices(net).iter().enumerate() {
        out.push(write_matrix(dir, &format!("{tag}.w{l}"), &format!("{tag}_w{l}.bin"), w)?);
        out.push(write_matrix(dir, &format!("{tag}.b{l}"), &format!("{tag}_b{l}.bin"), b)?);
    }
    Ok(())
}

fn load_net(dir: &Path, tag: &str, widths: &[usize], man: &Manifest) -> Result<Mlp> {
    let mut params = Vec::new();
    for l in 0..widths.len().saturating_sub(1) {
        let w = read_matrix(dir, man.matrix(&format!("{tag}.w{l}"))?)?;
        let b = read_matrix(dir, man.matrix(&format!("{tag}.b{l}"))?)?;
        if w.shape() != (widths[l + 1], widths[l]) || b.shape() != (widths[l + 1], 1) {
            return Err(Error::CorruptData(format!("{tag} layer {l} has the wrong shape")));
        }
        params.extend_from_slice(w.as_slice());
        params.extend_from_slice(b.as_slice());
    }
    Mlp::from_params(widths, params).map_err(|e| Error::CorruptData(e.to_string()))
}

/// Checkpoint a trained model.
pub fn save_model(
    dir: &Path,
    spec: &BenchmarkSpec,
    model: &DeepONetModel,
    meta: ModelMeta,
    train_seconds: f64,
) -> Result<Manifest> {
    create_dir(dir)?;
    let mut man = Manifest::new(spec, ArtifactKind::Model)?;
    man.variables = vec![model.variable];
    save_net(dir, "trunk", &model.trunk, &mut man.matrices)?;
    save_net(dir, "branch", &model.branch, &mut man.matrices)?;
    let r = model.r_inv_t_matrix();
    man.matrices.push(write_matrix(dir, "r_inv_t", "r_inv_t.bin", &r)?);
    man.model = Some(meta);
    write_json(&dir.join(SPEC), spec)?;
    write_json(
        &dir.join(TIMING),
        &Timing {
            row_seconds: Vec::new(),
            train_seconds: Some(train_seconds),
        },
    )?;
    write_json(&dir.join(MANIFEST), &man)?;
    Ok(man)
}

pub struct LoadedModel {
    pub model: DeepONetModel,
    pub meta: ModelMeta,
    pub spec: BenchmarkSpec,
    pub manifest: Manifest,
    pub train_seconds: Option<f64>,
}

pub fn load_model(dir: &Path) -> Result<LoadedModel> {
    let man = Manifest::load(dir, ArtifactKind::Model)?;
    let meta = man
        .model
        .clone()
        .ok_or_else(|| Error::CorruptData("model manifest lacks its metadata".into()))?;
    let spec: BenchmarkSpec = read_json(&dir.join(SPEC))?;
    if spec.hash() != man.spec_hash {
        return Err(Error::CorruptData("spec.json does not match the manifest hash".into()));
    }
    let trunk = load_net(dir, "trunk", &meta.trunk_widths, &man)?;
    let branch = load_net(dir, "branch", &meta.branch_widths, &man)?;
    let r = read_matrix(dir, man.matrix("r_inv_t")?)?;
    if r.shape() != (meta.k, meta.k) {
        return Err(Error::CorruptData("r_inv_t has the wrong shape".into()));
    }
    let model = DeepONetModel {
        variable: meta.variable,
        branch,
        trunk,
        r_inv_t: r.as_slice().to_vec(),
        k: meta.k,
        coord_bounds: meta.coord_bounds,
    };
    model.validate().map_err(|e| Error::CorruptData(e.to_string()))?;
    let timing: Timing = read_json(&dir.join(TIMING)).unwrap_or_default();
    Ok(LoadedModel {
        model,
        meta,
        spec,
        manifest: man,
        train_seconds: timing.train_seconds,
    })
}
