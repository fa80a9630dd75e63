//! Banded LU factorization with partial pivoting.
//!
//! Row interchanges widen the upper band from `ku` to `ku + kl`. Multipliers
//! are kept per elimination step and applied together with the recorded
//! interchanges during the forward sweep.

use super::sparse::CsrMatrix;
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct BandedLu {
    n: usize,
    kl: usize,
    /// Entries per stored row: columns `i - kl ..= i + ku + kl`.
    width: usize,
    data: Vec<f64>,
    mult: Vec<f64>,
    piv: Vec<usize>,
}

impl BandedLu {
    pub fn factor(a: &CsrMatrix) -> Result<Self> {
        if a.nrows != a.ncols {
            return Err(Error::invalid("banded LU needs a square matrix"));
        }
        let n = a.nrows;
        let bw = a.bandwidth();
        let (kl, ku) = (bw, bw);
        let width = 2 * kl + ku + 1;
        let mut data = vec![0.0; n * width];
        for r in 0..n {
            for (c, v) in a.row(r) {
                data[r * width + c + kl - r] += v;
            }
        }
        let scale = a.max_abs();
        let mut mult = vec![0.0; n * kl.max(1)];
        let mut piv = vec![0; n];
        let at = |i: usize, j: usize| i * width + j + kl - i;
        for k in 0..n {
            let last_row = (k + kl).min(n - 1);
            let last_col = (k + ku + kl).min(n - 1);
            let mut p = k;
            let mut best = data[at(k, k)].abs();
            for i in k + 1..=last_row {
                let v = data[at(i, k)].abs();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            if !(best > scale * 1e-14) {
                return Err(Error::numerical(format!(
                    "matrix is singular to working precision at unknown {k} (pivot {best:e})"
                )));
            }
            piv[k] = p;
            if p != k {
                for j in k..=last_col {
                    data.swap(at(k, j), at(p, j));
                }
            }
            let pivot = data[at(k, k)];
            for i in k + 1..=last_row {
                let l = data[at(i, k)] / pivot;
                mult[k * kl + (i - k - 1)] = l;
                data[at(i, k)] = 0.0;
                if l != 0.0 {
                    for j in k + 1..=last_col {
                        data[at(i, j)] -= l * data[at(k, j)];
                    }
                }
            }
        }
        Ok(Self {
            n,
            kl,
            width,
            data,
            mult,
            piv,
        })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn solve_in_place(&self, b: &mut [f64]) {
        let (n, kl, width) = (self.n, self.kl, self.width);
        let at = |i: usize, j: usize| i * width + j + kl - i;
        for k in 0..n {
            b.swap(k, self.piv[k]);
            let bk = b[k];
            if bk != 0.0 {
                for i in k + 1..=(k + kl).min(n - 1) {
                    b[i] -= self.mult[k * kl + (i - k - 1)] * bk;
                }
            }
        }
        let upper = width - kl - 1;
        for i in (0..n).rev() {
            let mut s = b[i];
            for j in i + 1..=(i + upper).min(n - 1) {
                s -= self.data[at(i, j)] * b[j];
            }
            b[i] = s / self.data[at(i, i)];
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{DMatrix, DVector};
    use rand::{Rng, SeedableRng};

    #[test]
    fn matches_dense_solve_on_random_indefinite_band() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        for &(n, bw) in &[(1usize, 0usize), (5, 1), (40, 3), (120, 9)] {
            let mut trip = Vec::new();
            for i in 0..n {
                for j in i.saturating_sub(bw)..(i + bw + 1).min(n) {
                    // Zero diagonal on every third row forces pivoting.
                    let v = if i == j && i % 3 == 0 { 0.0 } else { rng.random_range(-1.0..1.0) };
                    trip.push((i, j, v));
                }
            }
            if n == 1 {
                trip = vec![(0, 0, 2.0)];
            }
            let a = CsrMatrix::from_triplets(n, n, trip);
            let dense = DMatrix::from_fn(n, n, |i, j| a.get(i, j));
            let b: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let want = dense.clone().lu().solve(&DVector::from_vec(b.clone())).unwrap();
            let lu = BandedLu::factor(&a).unwrap();
            let mut x = b.clone();
            lu.solve_in_place(&mut x);
            for i in 0..n {
                assert!((x[i] - want[i]).abs() < 1e-9 * (1.0 + want[i].abs()), "n={n} i={i}");
            }
        }
    }

    #[test]
    fn singular_matrix_reported() {
        let a = CsrMatrix::from_triplets(2, 2, vec![(0, 0, 1.0), (0, 1, 1.0), (1, 0, 1.0), (1, 1, 1.0)]);
        assert!(matches!(BandedLu::factor(&a), Err(Error::NumericalFailure(_))));
    }
}
