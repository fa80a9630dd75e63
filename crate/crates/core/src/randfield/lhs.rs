use rand::distr::{Distribution, Open01};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use super::normal::inv_norm_cdf;
use crate::error::{Error, Result};

/// Identifier of the random stream used for sampling. Stored in manifests so
/// that other implementations can regenerate identical coefficients.
pub const GENERATOR_ID: &str = "chacha20-lhs-v1";

/// `N × M` standard-normal K–L coefficients, one realization per row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleMatrix {
    pub rows: usize,
    pub cols: usize,
    /// Row-major storage.
    pub xi: Vec<f64>,
    pub seed: u64,
}

impl SampleMatrix {
    pub fn row(&self, i: usize) -> &[f64] {
        &self.xi[i * self.cols..(i + 1) * self.cols]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.xi[i * self.cols + j]
    }
}

/// Latin hypercube design mapped through the standard-normal quantile.
///
/// Column `j` is generated from its own ChaCha20 stream (`seed`, stream `j`):
/// a Fisher–Yates permutation of the `n` strata followed by `n` uniform
/// offsets on (0, 1). Entry `(i, j)` is `Φ⁻¹((π_j(i) + U_ij) / n)`.
pub fn lhs_normal(n: usize, m: usize, seed: u64) -> Result<SampleMatrix> {
    if n == 0 || m == 0 {
        return Err(Error::invalid(format!(
            "LHS needs at least one sample and one dimension (got N={n}, M={m})"
        )));
    }
    let mut xi = vec![0.0; n * m];
    let mut strata: Vec<usize> = (0..n).collect();
    for j in 0..m {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        rng.set_stream(j as u64);
        strata.iter_mut().enumerate().for_each(|(i, s)| *s = i);
        strata.shuffle(&mut rng);
        for (i, &s) in strata.iter().enumerate() {
            let u: f64 = Open01.sample(&mut rng);
            xi[i * m + j] = inv_norm_cdf((s as f64 + u) / n as f64);
        }
    }
    Ok(SampleMatrix {
        rows: n,
        cols: m,
        xi,
        seed,
    })
}
