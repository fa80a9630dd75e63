use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::optim::OptimizerConfig;
use crate::error::{Error, Result};

const C1: f64 = 1e-4;
const C2: f64 = 0.9;
const MAX_BRACKET: usize = 25;
const MAX_ZOOM: usize = 30;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LbfgsStatus {
    GradientTolerance,
    ObjectiveTolerance,
    MaxIterations,
    /// No step satisfying the Wolfe conditions was found; the best point so
    /// far is returned.
    LineSearchFailed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LbfgsReport {
    pub x: Vec<f64>,
    pub f: f64,
    pub grad_norm: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub status: LbfgsStatus,
    /// Objective at every accepted iterate, starting with `x0`.
    pub history: Vec<f64>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

struct Objective<F> {
    fg: F,
    evaluations: usize,
}

impl<F: FnMut(&[f64], &mut [f64]) -> Result<f64>> Objective<F> {
    fn eval(&mut self, x: &[f64], g: &mut [f64]) -> Result<f64> {
        self.evaluations += 1;
        g.iter_mut().for_each(|v| *v = 0.0);
        let f = (self.fg)(x, g)?;
        if f.is_finite() && g.iter().all(|v| v.is_finite()) {
            Ok(f)
        } else {
            Ok(f64::INFINITY)
        }
    }
}

struct Trial {
    alpha: f64,
    f: f64,
    dphi: f64,
    x: Vec<f64>,
    g: Vec<f64>,
}

/// Minimize with limited-memory BFGS and a strong Wolfe line search.
/// `fg(x, grad)` returns the objective and writes the gradient into the zeroed
/// `grad`.
pub fn lbfgs_minimize(
    fg: impl FnMut(&[f64], &mut [f64]) -> Result<f64>,
    x0: Vec<f64>,
    cfg: &OptimizerConfig,
) -> Result<LbfgsReport> {
    let mut obj = Objective { fg, evaluations: 0 };
    let n = x0.len();
    let mut x = x0;
    let mut g = vec![0.0; n];
    let mut f = obj.eval(&x, &mut g)?;
    if !f.is_finite() {
        return Err(Error::numerical("objective is not finite at the starting point"));
    }
    let mut history = vec![f];
    let mut pairs: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::with_capacity(cfg.lbfgs_memory);
    let mut status = LbfgsStatus::MaxIterations;
    let mut iterations = 0;

    if norm(&g) <= cfg.lbfgs_tol {
        status = LbfgsStatus::GradientTolerance;
    } else {
        while iterations < cfg.lbfgs_max_iter {
            let mut d = two_loop(&g, &pairs);
            let mut dphi0 = dot(&g, &d);
            if !(dphi0 < 0.0) {
                pairs.clear();
                d = g.iter().map(|v| -v).collect();
                dphi0 = -dot(&g, &g);
            }
            let Some(t) = strong_wolfe(&mut obj, &x, f, &d, dphi0)? else {
                status = LbfgsStatus::LineSearchFailed;
                break;
            };
            iterations += 1;
            let s: Vec<f64> = t.x.iter().zip(&x).map(|(a, b)| a - b).collect();
            let y: Vec<f64> = t.g.iter().zip(&g).map(|(a, b)| a - b).collect();
            let sy = dot(&s, &y);
            if sy > 1e-12 * norm(&s) * norm(&y) && sy > 0.0 {
                if pairs.len() == cfg.lbfgs_memory {
                    pairs.pop_front();
                }
                pairs.push_back((s, y, 1.0 / sy));
            }
            let f_old = f;
            x = t.x;
            g = t.g;
            f = t.f;
            history.push(f);
            if norm(&g) <= cfg.lbfgs_tol {
                status = LbfgsStatus::GradientTolerance;
                break;
            }
            if f_old - f <= cfg.lbfgs_tol * f_old.abs().max(f.abs()) {
                status = LbfgsStatus::ObjectiveTolerance;
                break;
            }
        }
    }
    Ok(LbfgsReport {
        grad_norm: norm(&g),
        x,
        f,
        iterations,
        evaluations: obj.evaluations,
        status,
        history,
    })
}

fn two_loop(g: &[f64], pairs: &VecDeque<(Vec<f64>, Vec<f64>, f64)>) -> Vec<f64> {
    let mut q: Vec<f64> = g.to_vec();
    let mut alphas = vec![0.0; pairs.len()];
    for (i, (s, y, rho)) in pairs.iter().enumerate().rev() {
        let a = rho * dot(s, &q);
        alphas[i] = a;
        q.iter_mut().zip(y).for_each(|(qi, yi)| *qi -= a * yi);
    }
    if let Some((s, y, _)) = pairs.back() {
        let gamma = dot(s, y) / dot(y, y);
        q.iter_mut().for_each(|v| *v *= gamma);
    }
    for (i, (s, y, rho)) in pairs.iter().enumerate() {
        let b = rho * dot(y, &q);
        q.iter_mut().zip(s).for_each(|(qi, si)| *qi += (alphas[i] - b) * si);
    }
    q.iter_mut().for_each(|v| *v = -*v);
    q
}

fn trial<F: FnMut(&[f64], &mut [f64]) -> Result<f64>>(
    obj: &mut Objective<F>,
    x: &[f64],
    d: &[f64],
    alpha: f64,
) -> Result<Trial> {
    let xt: Vec<f64> = x.iter().zip(d).map(|(a, b)| a + alpha * b).collect();
    let mut gt = vec![0.0; x.len()];
    let f = obj.eval(&xt, &mut gt)?;
    Ok(Trial {
        alpha,
        f,
        dphi: dot(&gt, d),
        x: xt,
        g: gt,
    })
}

/// Minimizer of the cubic matching values and slopes at `a` and `b`,
/// safeguarded to the inner part of the interval.
fn cubic_step(a: &Trial, b: &Trial) -> f64 {
    let (lo, hi) = (a.alpha.min(b.alpha), a.alpha.max(b.alpha));
    let margin = 0.1 * (hi - lo);
    let mid = 0.5 * (lo + hi);
    if !(a.f.is_finite() && b.f.is_finite()) {
        return mid;
    }
    let d1 = a.dphi + b.dphi - 3.0 * (a.f - b.f) / (a.alpha - b.alpha);
    let disc = d1 * d1 - a.dphi * b.dphi;
    if !(disc >= 0.0) {
        return mid;
    }
    let d2 = (b.alpha - a.alpha).signum() * disc.sqrt();
    let step = b.alpha - (b.alpha - a.alpha) * (b.dphi + d2 - d1) / (b.dphi - a.dphi + 2.0 * d2);
    if step.is_finite() && step >= lo + margin && step <= hi - margin {
        step
    } else {
        mid
    }
}

fn strong_wolfe<F: FnMut(&[f64], &mut [f64]) -> Result<f64>>(
    obj: &mut Objective<F>,
    x: &[f64],
    f0: f64,
    d: &[f64],
    dphi0: f64,
) -> Result<Option<Trial>> {
    let origin = Trial {
        alpha: 0.0,
        f: f0,
        dphi: dphi0,
        x: x.to_vec(),
        g: Vec::new(),
    };
    let mut prev = origin;
    let mut alpha = 1.0;
    for i in 0..MAX_BRACKET {
        let cur = trial(obj, x, d, alpha)?;
        if cur.f > f0 + C1 * alpha * dphi0 || (i > 0 && cur.f >= prev.f) {
            return zoom(obj, x, f0, d, dphi0, prev, cur);
        }
        if cur.dphi.abs() <= -C2 * dphi0 {
            return Ok(Some(cur));
        }
        if cur.dphi >= 0.0 {
            return zoom(obj, x, f0, d, dphi0, cur, prev);
        }
        alpha *= 2.0;
        prev = cur;
    }
    Ok(None)
}

fn zoom<F: FnMut(&[f64], &mut [f64]) -> Result<f64>>(
    obj: &mut Objective<F>,
    x: &[f64],
    f0: f64,
    d: &[f64],
    dphi0: f64,
    mut lo: Trial,
    mut hi: Trial,
) -> Result<Option<Trial>> {
    for _ in 0..MAX_ZOOM {
        let alpha = cubic_step(&lo, &hi);
        let cur = trial(obj, x, d, alpha)?;
        if cur.f > f0 + C1 * alpha * dphi0 || cur.f >= lo.f {
            hi = cur;
        } else {
            if cur.dphi.abs() <= -C2 * dphi0 {
                return Ok(Some(cur));
            }
            if cur.dphi * (hi.alpha - lo.alpha) >= 0.0 {
                hi = lo;
            }
            lo = cur;
        }
        if (hi.alpha - lo.alpha).abs() <= 1e-16 * lo.alpha.abs().max(1.0) {
            break;
        }
    }
    // Accept a point with sufficient decrease even if the curvature test failed.
    Ok((lo.alpha > 0.0 && lo.f < f0).then_some(lo))
}
