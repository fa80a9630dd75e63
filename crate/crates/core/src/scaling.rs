//! Characteristic scales for traction- and flux-driven poroelastic problems.
//!
//! Nondimensional variables are `x̄ = x/s*`, `t̄ = t/T*`, `k̄ = k/k*`,
//! `ū = u/u*`, `p̄ = p/p*`, `σ̄ = σ/t*`, `q̄ = q/q*`. The FEM solver works
//! entirely in barred quantities; [`EquationCoefficients`] carries the
//! groups that remain in the nondimensional equations for a given scale set.

use serde::{Deserialize, Serialize};
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Geometry {
    /// Square or column of side `l`.
    Length { l: f64 },
    /// Rectangle of width `w` and height `h`.
    Rectangle { w: f64, h: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Load {
    Traction { t0: f64 },
    Discharge { q0: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DimensionalParams {
    /// Young's modulus, Pa.
    pub e: f64,
    pub nu: f64,
    /// Fluid viscosity, Pa·s.
    pub mu_f: f64,
    pub geometry: Geometry,
    pub load: Load,
    /// Mean log-permeability, ln m².
    pub mu_kappa: f64,
    /// Reference permeability, m².
    pub k_star: f64,
}

impl DimensionalParams {
    fn validate(&self) -> Result<()> {
        if self.nu == 0.5 {
            return Err(Error::SingularParameter("Poisson's ratio 0.5 makes the skeleton incompressible".into()));
        }
        if !(self.nu > 0.0 && self.nu < 0.5) {
            return Err(Error::invalid(format!("Poisson's ratio must lie in (0, 0.5), got {}", self.nu)));
        }
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::invalid(format!("{name} must be positive, got {v}")))
            }
        };
        positive("E", self.e)?;
        positive("mu_f", self.mu_f)?;
        positive("k_star", self.k_star)?;
        match self.geometry {
            Geometry::Length { l } => positive("L", l)?,
            Geometry::Rectangle { w, h } => {
                positive("W", w)?;
                positive("H", h)?;
            }
        }
        match self.load {
            Load::Traction { t0 } => positive("t0", t0),
            Load::Discharge { q0 } => positive("q0", q0),
        }
    }

    fn length(&self) -> f64 {
        match self.geometry {
            Geometry::Length { l } => l,
            Geometry::Rectangle { w, .. } => w,
        }
    }
}

/// The seven characteristic scales plus the dimensionless constants `A`, `B`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScaleSet {
    pub time: f64,
    pub length: f64,
    pub permeability: f64,
    pub displacement: f64,
    pub pressure: f64,
    pub traction: f64,
    pub discharge: f64,
    pub a: f64,
    pub b: f64,
}

/// Terzaghi consolidation under a surface traction `t0`.
pub fn consolidation_scales(params: &DimensionalParams) -> Result<ScaleSet> {
    params.validate()?;
    let Load::Traction { t0 } = params.load else {
        return Err(Error::invalid("consolidation scaling needs a traction load"));
    };
    let nu = params.nu;
    let l = params.length();
    let k_star = params.mu_kappa.exp();
    let m_v = (1.0 - 2.0 * nu) * (1.0 + nu) / (params.e * (1.0 - nu));
    let c_v = k_star / params.mu_f / m_v;
    let pressure = t0;
    Ok(ScaleSet {
        time: l * l / c_v,
        length: l,
        permeability: k_star,
        displacement: m_v * l * t0,
        pressure,
        traction: t0,
        discharge: k_star * pressure / (params.mu_f * l),
        a: params.e * m_v,
        b: 1.0,
    })
}

/// Confined-aquifer subsidence driven by a prescribed discharge `q0`.
pub fn subsidence_scales(params: &DimensionalParams) -> Result<ScaleSet> {
    params.validate()?;
    let Load::Discharge { q0 } = params.load else {
        return Err(Error::invalid("subsidence scaling needs a discharge load"));
    };
    let Geometry::Rectangle { w, h } = params.geometry else {
        return Err(Error::invalid("subsidence scaling needs width and height"));
    };
    let nu = params.nu;
    let k_star = params.k_star;
    let m_v = 2.0 * (1.0 - 2.0 * nu) * (1.0 + nu) / params.e;
    let c_v = k_star / params.mu_f / m_v;
    let displacement = m_v * params.mu_f * w * h * q0 / k_star;
    let pressure = params.mu_f * w * q0 / k_star;
    Ok(ScaleSet {
        time: (w / h) * w * w / c_v,
        length: w,
        permeability: k_star,
        displacement,
        pressure,
        traction: pressure,
        discharge: q0,
        a: displacement * k_star * params.e / (params.mu_f * w * w * q0),
        b: pressure * k_star / (params.mu_f * w * q0),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LoadingKind {
    Traction,
    Flux,
}

/// Scales from caller-supplied constants `A` and `B`:
///
/// * flux: `u* = A μ_f s*² q̂*/(k* E)`, `p* = B μ_f s* q̂*/k*`
/// * traction: `u* = A s* t̂*/E`, `p* = B t̂*`
///
/// and in both cases `T* = (A/B) μ_f s*²/(k* E)`. Here `k*` is `params.k_star`.
pub fn generic_scales(kind: LoadingKind, a: f64, b: f64, params: &DimensionalParams) -> Result<ScaleSet> {
    params.validate()?;
    if !(a > 0.0 && b > 0.0) {
        return Err(Error::invalid(format!("A and B must be positive (got {a}, {b})")));
    }
    let s = params.length();
    let k = params.k_star;
    let (e, mu) = (params.e, params.mu_f);
    let time = (a / b) * mu * s * s / (k * e);
    match (kind, params.load) {
        (LoadingKind::Flux, Load::Discharge { q0 }) => {
            let pressure = b * mu * s * q0 / k;
            Ok(ScaleSet {
                time,
                length: s,
                permeability: k,
                displacement: a * mu * s * s * q0 / (k * e),
                pressure,
                traction: pressure,
                discharge: q0,
                a,
                b,
            })
        }
        (LoadingKind::Traction, Load::Traction { t0 }) => {
            let pressure = b * t0;
            Ok(ScaleSet {
                time,
                length: s,
                permeability: k,
                displacement: a * s * t0 / e,
                pressure,
                traction: t0,
                discharge: k * pressure / (mu * s),
                a,
                b,
            })
        }
        _ => Err(Error::invalid("loading kind does not match the load in params")),
    }
}

/// Dimensionless groups left in the barred equations
///
/// ```text
/// stiffness · div(Ĉ(ν) : ε(ū)) − ∇p̄ = 0        (Ĉ built with E = 1)
/// storage · ∂t̄ div ū − div(mobility · k̄ ∇p̄) = 0
/// ```
///
/// with boundary traction and discharge scaled by `traction` and `discharge`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EquationCoefficients {
    pub stiffness: f64,
    pub storage: f64,
    pub mobility: f64,
    /// Nondimensional magnitude of the applied load.
    pub load: f64,
}

pub fn equation_coefficients(params: &DimensionalParams, scales: &ScaleSet) -> EquationCoefficients {
    let s = scales;
    // Momentum divided by p*/s*; mass balance divided by k* p*/(μ_f s*²).
    let darcy = s.permeability * s.pressure / (params.mu_f * s.length);
    let load = match params.load {
        Load::Traction { t0 } => t0 / s.pressure,
        Load::Discharge { q0 } => q0 / darcy,
    };
    EquationCoefficients {
        stiffness: params.e * s.displacement / (s.length * s.pressure),
        storage: s.displacement / s.time / darcy,
        mobility: 1.0,
        load,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Quantity {
    Displacement,
    Pressure,
    Traction,
    Discharge,
    Time,
    Length,
    Permeability,
}

impl FromStr for Quantity {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "u" | "u_x" | "u_z" | "displacement" => Quantity::Displacement,
            "p" | "pressure" => Quantity::Pressure,
            "t" | "traction" | "stress" => Quantity::Traction,
            "q" | "discharge" | "flux" => Quantity::Discharge,
            "time" => Quantity::Time,
            "length" | "x" | "z" => Quantity::Length,
            "k" | "permeability" => Quantity::Permeability,
            other => return Err(Error::invalid(format!("unknown quantity '{other}'"))),
        })
    }
}

impl ScaleSet {
    pub fn scale_of(&self, which: Quantity) -> f64 {
        match which {
            Quantity::Displacement => self.displacement,
            Quantity::Pressure => self.pressure,
            Quantity::Traction => self.traction,
            Quantity::Discharge => self.discharge,
            Quantity::Time => self.time,
            Quantity::Length => self.length,
            Quantity::Permeability => self.permeability,
        }
    }
}

pub fn redimensionalize(values: &[f64], scale: &ScaleSet, which: Quantity) -> Vec<f64> {
    let s = scale.scale_of(which);
    values.iter().map(|v| v * s).collect()
}

pub fn nondimensionalize(values: &[f64], scale: &ScaleSet, which: Quantity) -> Vec<f64> {
    let s = scale.scale_of(which);
    values.iter().map(|v| v / s).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn unit_consolidation(nu: f64) -> DimensionalParams {
        DimensionalParams {
            e: 1.0,
            nu,
            mu_f: 1.0,
            geometry: Geometry::Length { l: 1.0 },
            load: Load::Traction { t0: 1.0 },
            mu_kappa: 0.0,
            k_star: 1.0,
        }
    }

    fn unit_subsidence() -> DimensionalParams {
        DimensionalParams {
            e: 1.0,
            nu: 0.25,
            mu_f: 1.0,
            geometry: Geometry::Rectangle { w: 1.0, h: 0.1 },
            load: Load::Discharge { q0: 1.0 },
            mu_kappa: 0.0,
            k_star: 1.0,
        }
    }

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * a.abs().max(b.abs()).max(1e-300)
    }

    #[test]
    fn consolidation_unit_values() {
        let s = consolidation_scales(&unit_consolidation(0.4)).unwrap();
        let m_v = 7.0 / 15.0;
        assert!(close(s.displacement, m_v, 1e-14));
        assert!(close(s.time, 7.0 / 15.0, 1e-14));
        assert!(close(1.0 / (s.time), 15.0 / 7.0, 1e-14)); // c_v with L = 1
        assert_eq!(s.pressure, 1.0);
    }

    #[test]
    fn consolidation_scaling_laws() {
        let base = consolidation_scales(&unit_consolidation(0.4)).unwrap();
        let mut p = unit_consolidation(0.4);
        p.geometry = Geometry::Length { l: 2.0 };
        assert!(close(consolidation_scales(&p).unwrap().time, 4.0 * base.time, 1e-14));
        let mut p = unit_consolidation(0.4);
        p.load = Load::Traction { t0: 2.0 };
        let s = consolidation_scales(&p).unwrap();
        assert!(close(s.displacement, 2.0 * base.displacement, 1e-14));
        assert!(close(s.pressure, 2.0 * base.pressure, 1e-14));
        assert_eq!(s.time, base.time);
    }

    #[test]
    fn singular_poisson_ratio() {
        assert!(matches!(consolidation_scales(&unit_consolidation(0.5)), Err(Error::SingularParameter(_))));
        assert!(matches!(consolidation_scales(&unit_consolidation(0.6)), Err(Error::InvalidInput(_))));
        let mut p = unit_subsidence();
        p.nu = 0.5;
        assert!(matches!(subsidence_scales(&p), Err(Error::SingularParameter(_))));
    }

    #[test]
    fn subsidence_unit_values() {
        let s = subsidence_scales(&unit_subsidence()).unwrap();
        // m_v' = 1.25, c_v' = 0.8
        assert!(close(s.time, 12.5, 1e-14));
        assert!(close(s.displacement / s.pressure, 1.25 * 0.1, 1e-14));
        let mut p = unit_subsidence();
        p.load = Load::Discharge { q0: 2.0 };
        let d = subsidence_scales(&p).unwrap();
        assert!(close(d.displacement, 2.0 * s.displacement, 1e-14));
        assert!(close(d.pressure, 2.0 * s.pressure, 1e-14));
    }

    #[test]
    fn generic_with_equal_constants() {
        let mut p = unit_consolidation(0.3);
        p.e = 3.0;
        p.mu_f = 0.5;
        p.k_star = 2.0;
        p.geometry = Geometry::Length { l: 1.7 };
        let s = generic_scales(LoadingKind::Traction, 0.7, 0.7, &p).unwrap();
        assert!(close(s.time, 0.5 * 1.7 * 1.7 / (2.0 * 3.0), 1e-14));
        assert!(generic_scales(LoadingKind::Traction, 0.0, 1.0, &p).is_err());
        assert!(generic_scales(LoadingKind::Flux, 1.0, 1.0, &p).is_err());
    }

    #[test]
    fn generic_flux_time_is_ratio_for_unit_params() {
        let s = generic_scales(LoadingKind::Flux, 1.25, 0.1, &unit_subsidence()).unwrap();
        assert!(close(s.time, 12.5, 1e-14));
    }

    fn random_params(rng: &mut impl Rng, flux: bool) -> DimensionalParams {
        let mu_kappa: f64 = rng.random_range(-30.0..-20.0);
        DimensionalParams {
            e: rng.random_range(1e6..1e8),
            nu: rng.random_range(0.05..0.45),
            mu_f: rng.random_range(5e-4..2e-3),
            geometry: if flux {
                Geometry::Rectangle {
                    w: rng.random_range(100.0..1000.0),
                    h: rng.random_range(5.0..50.0),
                }
            } else {
                Geometry::Length { l: rng.random_range(1.0..20.0) }
            },
            load: if flux {
                Load::Discharge { q0: rng.random_range(1e-7..1e-5) }
            } else {
                Load::Traction { t0: rng.random_range(1e4..1e5) }
            },
            mu_kappa,
            k_star: if flux { rng.random_range(1e-13..1e-11) } else { mu_kappa.exp() },
        }
    }

    #[test]
    fn benchmark_sets_through_generic_form() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        for _ in 0..3 {
            let p = random_params(&mut rng, false);
            let nu = p.nu;
            let a = (1.0 - 2.0 * nu) * (1.0 + nu) / (1.0 - nu);
            let c = consolidation_scales(&p).unwrap();
            let g = generic_scales(LoadingKind::Traction, a, 1.0, &p).unwrap();
            for (x, y) in [(c.time, g.time), (c.displacement, g.displacement), (c.pressure, g.pressure)] {
                assert!(close(x, y, 1e-12), "{x} vs {y}");
            }

            let p = random_params(&mut rng, true);
            let Geometry::Rectangle { w, h } = p.geometry else { unreachable!() };
            let nu = p.nu;
            let a = 2.0 * (1.0 - 2.0 * nu) * (1.0 + nu) * h / w;
            let s = subsidence_scales(&p).unwrap();
            let g = generic_scales(LoadingKind::Flux, a, 1.0, &p).unwrap();
            assert!(close(s.displacement, g.displacement, 1e-12));
            assert!(close(s.pressure, g.pressure, 1e-12));
            // The aquifer time scale carries an extra (W/H)² relative to the generic form.
            assert!(close(s.time, (w / h).powi(2) * g.time, 1e-12));
            assert!(close(s.a, a, 1e-12) && close(s.b, 1.0, 1e-12));
        }
    }

    #[test]
    fn time_scale_decreases_with_permeability() {
        let mut p = unit_subsidence();
        let mut prev = f64::INFINITY;
        for k in [0.1, 0.5, 1.0, 2.0, 10.0] {
            p.k_star = k;
            let s = subsidence_scales(&p).unwrap();
            assert!(s.time < prev);
            prev = s.time;
            for v in [s.time, s.length, s.permeability, s.displacement, s.pressure, s.traction, s.discharge] {
                assert!(v > 0.0);
            }
        }
    }

    #[test]
    fn redimensionalize_examples() {
        let mut p = unit_consolidation(0.4);
        p.load = Load::Traction { t0: 50e3 };
        p.e = 1e7;
        let s = consolidation_scales(&p).unwrap();
        assert_eq!(redimensionalize(&[1.0], &s, Quantity::Pressure), vec![50e3]);
        let m_v = 0.2 * 1.4 / (0.6 * 1e7);
        assert!(close(redimensionalize(&[1.0], &s, Quantity::Displacement)[0], m_v * 50e3, 1e-14));
        let v = [0.3, -1.7, 2.5e-3];
        for q in ["u", "p", "t", "q", "time", "length", "k"] {
            let q: Quantity = q.parse().unwrap();
            let back = nondimensionalize(&redimensionalize(&v, &s, q), &s, q);
            for (a, b) in v.iter().zip(&back) {
                assert!(close(*a, *b, 4.0 * f64::EPSILON));
            }
        }
        assert!("velocity".parse::<Quantity>().is_err());
    }

    #[test]
    fn consolidation_equations_have_unit_constrained_modulus() {
        let p = unit_consolidation(0.4);
        let s = consolidation_scales(&p).unwrap();
        let c = equation_coefficients(&p, &s);
        let constrained = (1.0 - 0.4) / ((1.0 + 0.4) * (1.0 - 0.8));
        assert!(close(c.stiffness * constrained, 1.0, 1e-14));
        assert!(close(c.storage, 1.0, 1e-14));
        assert!(close(c.load, 1.0, 1e-14));
    }

    #[test]
    fn subsidence_equation_groups() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        let p = random_params(&mut rng, true);
        let Geometry::Rectangle { w, h } = p.geometry else { unreachable!() };
        let s = subsidence_scales(&p).unwrap();
        let c = equation_coefficients(&p, &s);
        let m = 2.0 * (1.0 - 2.0 * p.nu) * (1.0 + p.nu);
        assert!(close(c.stiffness, m * h / w, 1e-12));
        assert!(close(c.storage, (h / w).powi(2), 1e-12));
        assert!(close(c.load, 1.0, 1e-12));
    }
}
