//! Fixtures shared by the benchmarks.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use porosurf::benchmark::{consolidation_spec, BenchmarkContext, MeshSpec, Profile};
use porosurf::neuralnet::Mlp;

/// Desk consolidation context on an `n × n` mesh.
pub fn consolidation_context(n: usize, n_rows: usize) -> BenchmarkContext {
    let mut spec = consolidation_spec(1.5, 0.25, 0.125).with_profile(Profile::Desk);
    spec.mesh = MeshSpec { nx: n, nz: n };
    spec.n_train = n_rows.saturating_sub(1).max(1);
    spec.n_test = 1;
    spec.m_candidates = vec![spec.m_candidates[0].min((n + 1) * (n + 1))];
    BenchmarkContext::new(&spec).expect("benchmark spec is valid")
}

pub fn random_net(widths: &[usize], seed: u64) -> Mlp {
    Mlp::glorot(widths, &mut ChaCha20Rng::seed_from_u64(seed)).expect("valid widths")
}

pub fn random_batch(rows: usize, cols: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    DMatrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
}
