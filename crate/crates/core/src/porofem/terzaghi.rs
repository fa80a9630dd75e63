//! One-dimensional Terzaghi consolidation in nondimensional form: unit load,
//! drainage at `z = 1`, impervious base at `z = 0`, unit consolidation
//! coefficient.

use std::f64::consts::PI;

/// Excess pore pressure from the Fourier series truncated at `n_terms` terms.
pub fn terzaghi_pressure(z: f64, t: f64, n_terms: usize) -> f64 {
    (0..n_terms)
        .map(|m| {
            let k = (2 * m + 1) as f64;
            let a = 0.5 * k * PI;
            4.0 / (PI * k) * (a * (1.0 - z)).sin() * (-a * a * t).exp()
        })
        .sum()
}

/// Average degree of consolidation, equal to the nondimensional settlement.
pub fn terzaghi_settlement(t: f64, n_terms: usize) -> f64 {
    1.0 - (0..n_terms)
        .map(|m| {
            let k = (2 * m + 1) as f64;
            let a = 0.5 * k * PI;
            2.0 / (a * a) * (-a * a * t).exp()
        })
        .sum::<f64>()
}
