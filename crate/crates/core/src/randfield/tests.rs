use super::*;
use proptest::prelude::*;

fn uniform(n: usize) -> Vec<f64> {
    (0..n).map(|i| i as f64 / (n - 1) as f64).collect()
}

fn baseline_grid() -> QuadGrid {
    QuadGrid::trapezoid_2d(&uniform(21), &uniform(21)).unwrap()
}

fn baseline_spec() -> CovarianceSpec {
    CovarianceSpec::anisotropic(1.5, 0.25, 0.125)
}

#[test]
fn covariance_diagonal_is_variance() {
    let c = covariance_matrix(&[[0.0, 0.0]], &CovarianceSpec::anisotropic(1.5, 0.3, 0.3)).unwrap();
    assert_eq!(c[(0, 0)], 2.25);
}

#[test]
fn covariance_off_diagonal() {
    let c = covariance_matrix(&[[0.0, 0.0], [0.25, 0.0]], &baseline_spec()).unwrap();
    assert!((c[(0, 1)] - 2.25 * (-1.0f64).exp()).abs() < 1e-15);
    assert!((c[(0, 1)] - 0.82773).abs() < 1e-5);
    assert_eq!(c[(0, 1)], c[(1, 0)]);
}

#[test]
fn horizontal_kernel_ignores_depth() {
    let c = covariance_matrix(&[[0.0, 0.0], [0.0, 0.5]], &CovarianceSpec::horizontal(0.7, 0.01)).unwrap();
    assert_eq!(c[(0, 1)], c[(0, 0)]);
    assert!((c[(0, 1)] - 0.49).abs() < 1e-15);
}

#[test]
fn covariance_rejects_bad_input() {
    assert!(covariance_matrix(&[[f64::NAN, 0.0]], &baseline_spec()).is_err());
    assert!(covariance_matrix(&[], &baseline_spec()).is_err());
    assert!(covariance_matrix(&[[0.0, 0.0]], &CovarianceSpec::anisotropic(-1.0, 1.0, 1.0)).is_err());
    assert!(covariance_matrix(&[[0.0, 0.0]], &CovarianceSpec::anisotropic(1.0, 0.0, 1.0)).is_err());
}

#[test]
fn two_point_nystrom_matches_hand_eigendecomposition() {
    let sigma: f64 = 1.5;
    let grid = QuadGrid::new(vec![[0.0, 0.0], [0.25, 0.0]], vec![0.5, 0.5]).unwrap();
    let basis = kl_decompose(&grid, &baseline_spec(), 0.0, 0.0).unwrap();
    let c = (-1.0f64).exp();
    let s2 = sigma * sigma;
    assert!((basis.eigenvalues[0] - 0.5 * s2 * (1.0 + c)).abs() < 1e-12);
    assert!((basis.eigenvalues[1] - 0.5 * s2 * (1.0 - c)).abs() < 1e-12);
    let e = &basis.eigenfunctions;
    assert!((e[(0, 0)] - 1.0).abs() < 1e-12 && (e[(1, 0)] - 1.0).abs() < 1e-12);
    assert!((e[(0, 1)] - 1.0).abs() < 1e-12 && (e[(1, 1)] + 1.0).abs() < 1e-12);
}

#[test]
fn zero_variance_gives_zero_spectrum() {
    let basis = kl_decompose(&baseline_grid(), &CovarianceSpec::anisotropic(0.0, 0.25, 0.125), 0.0, 0.0).unwrap();
    assert!(basis.eigenvalues.iter().all(|&l| l == 0.0));
    assert_eq!(spectral_energy(&basis, 3).unwrap(), 1.0);
    let k = permeability_field(&basis, &vec![1.0; 441], 441).unwrap();
    assert!(k.iter().all(|&v| v == 1.0));
}

#[test]
fn baseline_basis_is_weighted_orthonormal() {
    let grid = baseline_grid();
    let basis = kl_decompose(&grid, &baseline_spec(), 0.0, 0.0).unwrap();
    let e = &basis.eigenfunctions;
    // Direct summation, independent of the eigensolver's own normalization.
    let norm1: f64 = (0..grid.len()).map(|i| grid.weights[i] * e[(i, 0)] * e[(i, 0)]).sum();
    assert!((norm1 - 1.0).abs() < 1e-8);

    let lead = basis.eigenvalues[0];
    let r = basis.eigenvalues.iter().take_while(|&&l| l / lead > 1e-10).count();
    let mut worst = 0.0f64;
    for j in 0..r {
        for k in 0..=j {
            let s: f64 = (0..grid.len()).map(|i| grid.weights[i] * e[(i, j)] * e[(i, k)]).sum();
            let target = if j == k { 1.0 } else { 0.0 };
            worst = worst.max((s - target).abs());
        }
    }
    assert!(worst <= 1e-8, "orthonormality error {worst}");
}

#[test]
fn eigenvalues_sorted_and_nonnegative() {
    let basis = kl_decompose(&baseline_grid(), &baseline_spec(), 0.0, 0.0).unwrap();
    let l = &basis.eigenvalues;
    assert!(l.iter().all(|&v| v >= 0.0));
    for j in 1..l.len() {
        assert!(l[j - 1] >= l[j]);
    }
    assert!(basis.n_active() < l.len(), "Gaussian kernel should be numerically rank deficient");
}

#[test]
fn full_basis_reconstructs_covariance() {
    let grid = baseline_grid();
    let basis = kl_decompose(&grid, &baseline_spec(), 0.0, 0.0).unwrap();
    let c = covariance_matrix(&grid.points, &baseline_spec()).unwrap();
    let e = &basis.eigenfunctions;
    let lam = nalgebra::DMatrix::from_diagonal(&basis.eigenvalues);
    let rebuilt = e * lam * e.transpose();
    let rel = (&rebuilt - &c).norm() / c.norm();
    assert!(rel <= 1e-6, "reconstruction error {rel}");
}

#[test]
fn sign_convention_largest_entry_positive() {
    // The convention applies to the symmetric eigenvectors v = e·√w.
    let grid = baseline_grid();
    let basis = kl_decompose(&grid, &baseline_spec(), 0.0, 0.0).unwrap();
    for j in 0..20 {
        let col: Vec<f64> = (0..grid.len())
            .map(|i| basis.eigenfunctions[(i, j)] * grid.weights[i].sqrt())
            .collect();
        let (imax, _) = col.iter().enumerate().fold((0, 0.0f64), |acc, (i, v)| {
            if v.abs() > acc.1 { (i, v.abs()) } else { acc }
        });
        assert!(col[imax] > 0.0);
    }
}

#[test]
fn spectral_energy_properties() {
    let basis = KLBasis {
        eigenvalues: nalgebra::DVector::from_vec(vec![3.0, 1.0]),
        eigenfunctions: nalgebra::DMatrix::identity(2, 2),
        mu_kappa: 0.0,
        kappa_star: 0.0,
    };
    assert_eq!(spectral_energy(&basis, 1).unwrap(), 0.75);
    assert_eq!(spectral_energy(&basis, 2).unwrap(), 1.0);
    assert!(spectral_energy(&basis, 3).is_err());

    let basis = kl_decompose(&baseline_grid(), &baseline_spec(), 0.0, 0.0).unwrap();
    let e20 = spectral_energy(&basis, 20).unwrap();
    let e40 = spectral_energy(&basis, 40).unwrap();
    assert!(e40 > e20);
    assert!((spectral_energy(&basis, basis.n_points()).unwrap() - 1.0).abs() < 1e-15);
    let mut prev = 0.0;
    for m in 0..=basis.n_points() {
        let e = spectral_energy(&basis, m).unwrap();
        assert!(e >= prev);
        prev = e;
    }
}

#[test]
fn log_field_cases() {
    let basis = kl_decompose(&baseline_grid(), &baseline_spec(), -2.0, 0.0).unwrap();
    let zero = vec![0.0; 10];
    assert!(log_field(&basis, &zero, 10).unwrap().iter().all(|&v| v == -2.0));

    let kappa = log_field(&basis, &[2.0], 1).unwrap();
    let amp = 2.0 * basis.eigenvalues[0].sqrt();
    for (i, v) in kappa.iter().enumerate() {
        assert!((v - (-2.0 + amp * basis.eigenfunctions[(i, 0)])).abs() < 1e-14);
    }
    assert!(log_field(&basis, &[1.0; 442], 442).is_err());
    assert!(log_field(&basis, &[1.0; 3], 4).is_err());
}

#[test]
fn permeability_shift_cases() {
    let basis = kl_decompose(&baseline_grid(), &baseline_spec(), 0.4, 0.4).unwrap();
    assert!(permeability_field(&basis, &[0.0; 5], 5).unwrap().iter().all(|&v| v == 1.0));
    let basis = kl_decompose(&baseline_grid(), &baseline_spec(), 0.4, 0.4 - 2f64.ln()).unwrap();
    assert!(permeability_field(&basis, &[0.0; 5], 5)
        .unwrap()
        .iter()
        .all(|&v| (v - 2.0).abs() < 1e-14));
}

#[test]
fn monte_carlo_pointwise_variance() {
    let grid = baseline_grid();
    let basis = kl_decompose(&grid, &baseline_spec(), 0.0, 0.0).unwrap();
    let n_modes = basis.n_points();
    let samples = lhs_normal(10_000, n_modes, 2024).unwrap();
    let mut sum = vec![0.0; grid.len()];
    let mut sum2 = vec![0.0; grid.len()];
    for r in 0..samples.rows {
        let kappa = log_field(&basis, samples.row(r), n_modes).unwrap();
        for (i, v) in kappa.iter().enumerate() {
            sum[i] += v;
            sum2[i] += v * v;
        }
    }
    let n = samples.rows as f64;
    for i in 0..grid.len() {
        let mean = sum[i] / n;
        let var = (sum2[i] - n * mean * mean) / (n - 1.0);
        assert!((var / 2.25 - 1.0).abs() < 0.05, "point {i}: variance {var}");
    }
}

proptest! {
    #[test]
    fn permeability_is_exp_of_log_field(xi in proptest::collection::vec(-4.0f64..4.0, 12), kstar in -3.0f64..3.0) {
        let grid = QuadGrid::trapezoid_2d(&uniform(5), &uniform(4)).unwrap();
        let basis = kl_decompose(&grid, &CovarianceSpec::anisotropic(1.2, 0.4, 0.3), 0.5, kstar).unwrap();
        let kappa = log_field(&basis, &xi, 12).unwrap();
        let k = permeability_field(&basis, &xi, 12).unwrap();
        for (a, b) in kappa.iter().zip(&k) {
            prop_assert_eq!((a - kstar).exp(), *b);
            prop_assert!(*b > 0.0);
        }
    }
}
