use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// What the learning-rate staircase counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DecayUnit {
    /// Optimizer steps (mini-batches).
    Iteration,
    Epoch,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimizerConfig {
    pub adamw_epochs: usize,
    /// Mini-batch size as a fraction of the sample count.
    pub batch_fraction: f64,
    pub lr0: f64,
    /// Learning-rate multiplier applied every `decay_every` units.
    pub decay_factor: f64,
    pub decay_every: usize,
    pub decay_unit: DecayUnit,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub lbfgs_max_iter: usize,
    pub lbfgs_tol: f64,
    pub lbfgs_memory: usize,
    pub seed: u64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self::trunk()
    }
}

impl OptimizerConfig {
    pub fn trunk() -> Self {
        Self {
            adamw_epochs: 5000,
            batch_fraction: 0.25,
            lr0: 1e-3,
            decay_factor: 0.99,
            decay_every: 100,
            decay_unit: DecayUnit::Iteration,
            weight_decay: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            lbfgs_max_iter: 10_000,
            lbfgs_tol: 1e-10,
            lbfgs_memory: 10,
            seed: 0,
        }
    }

    pub fn branch() -> Self {
        Self {
            decay_factor: 0.98,
            ..Self::trunk()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::invalid(format!("optimizer config: {what}")));
        if !(self.batch_fraction > 0.0 && self.batch_fraction <= 1.0) {
            return bad("batch_fraction must lie in (0, 1]");
        }
        if !(self.lr0 > 0.0 && self.lr0.is_finite()) {
            return bad("lr0 must be positive");
        }
        if !(self.decay_factor > 0.0 && self.decay_factor <= 1.0) {
            return bad("decay_factor must lie in (0, 1]");
        }
        if self.decay_every == 0 || self.lbfgs_memory == 0 {
            return bad("decay_every and lbfgs_memory must be positive");
        }
        if !(self.weight_decay >= 0.0) || !(self.lbfgs_tol >= 0.0) {
            return bad("weight_decay and lbfgs_tol must be non-negative");
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) || !(self.eps > 0.0) {
            return bad("moment coefficients must lie in [0, 1) and eps must be positive");
        }
        Ok(())
    }

    pub fn batch_size(&self, n_samples: usize) -> usize {
        ((n_samples as f64 * self.batch_fraction).round() as usize).clamp(1, n_samples.max(1))
    }
}

/// `lr0 · decay^⌊count / every⌋`.
pub fn staircase_lr(cfg: &OptimizerConfig, count: usize) -> f64 {
    cfg.lr0 * cfg.decay_factor.powi((count / cfg.decay_every) as i32)
}

/// AdamW state with decoupled weight decay on a prefix of the parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamW {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
    /// Only `params[..decayed]` receive weight decay.
    pub decayed: usize,
}

impl AdamW {
    pub fn new(n: usize, decayed: usize) -> Self {
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
            decayed: decayed.min(n),
        }
    }

    pub fn step(&mut self, params: &mut [f64], grads: &[f64], lr: f64, cfg: &OptimizerConfig) {
        assert_eq!(params.len(), self.m.len());
        assert_eq!(grads.len(), self.m.len());
        self.t += 1;
        let (b1, b2) = (cfg.beta1, cfg.beta2);
        let c1 = 1.0 - b1.powi(self.t as i32);
        let c2 = 1.0 - b2.powi(self.t as i32);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = b1 * self.m[i] + (1.0 - b1) * g;
            self.v[i] = b2 * self.v[i] + (1.0 - b2) * g * g;
            if i < self.decayed {
                params[i] -= lr * cfg.weight_decay * params[i];
            }
            let mh = self.m[i] / c1;
            let vh = self.v[i] / c2;
            params[i] -= lr * mh / (vh.sqrt() + cfg.eps);
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    /// Sample-weighted mean loss of each epoch.
    pub epoch_losses: Vec<f64>,
    pub iterations: usize,
}

/// Mini-batch AdamW. `loss(params, batch, grad)` returns the mean loss over
/// `batch` and writes its gradient into the zeroed `grad`. Batches come from
/// a seeded shuffle per epoch; the last short batch is kept.
pub fn adamw_train(
    params: &mut [f64],
    n_samples: usize,
    decayed: usize,
    cfg: &OptimizerConfig,
    mut loss: impl FnMut(&[f64], &[usize], &mut [f64]) -> Result<f64>,
) -> Result<TrainLog> {
    cfg.validate()?;
    if n_samples == 0 {
        return Err(Error::invalid("no training samples"));
    }
    let mut rng = ChaCha20Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..n_samples).collect();
    let bs = cfg.batch_size(n_samples);
    let mut opt = AdamW::new(params.len(), decayed);
    let mut grad = vec![0.0; params.len()];
    let mut log = TrainLog::default();
    for epoch in 0..cfg.adamw_epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for batch in order.chunks(bs) {
            grad.iter_mut().for_each(|g| *g = 0.0);
            let l = loss(params, batch, &mut grad)?;
            if !l.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::Divergence(format!("non-finite loss at epoch {epoch}")));
            }
            total += l * batch.len() as f64;
            let count = match cfg.decay_unit {
                DecayUnit::Iteration => log.iterations,
                DecayUnit::Epoch => epoch,
            };
            opt.step(params, &grad, staircase_lr(cfg, count), cfg);
            log.iterations += 1;
        }
        log.epoch_losses.push(total / n_samples as f64);
        if epoch % 500 == 0 || epoch + 1 == cfg.adamw_epochs {
            log::debug!("adamw epoch {epoch}: loss {:.3e}", total / n_samples as f64);
        }
    }
    Ok(log)
}
