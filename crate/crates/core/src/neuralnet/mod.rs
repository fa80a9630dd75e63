//! Small dense network engine: tanh multilayer perceptrons with hand-written
//! reverse mode, AdamW and L-BFGS.
//!
//! Batches are column-major matrices of shape `features × batch`. Parameters
//! live in one flat vector so the optimizers can treat them as a point in
//! `R^n`. Layer `l` stores its weight matrix (`out × in`, column-major)
//! followed by its bias.

mod lbfgs;
mod optim;

pub use lbfgs::{lbfgs_minimize, LbfgsReport, LbfgsStatus};
pub use optim::{adamw_train, staircase_lr, AdamW, DecayUnit, OptimizerConfig, TrainLog};

use nalgebra::{DMatrix, DMatrixView, DMatrixViewMut};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Fully connected network, tanh on hidden layers, affine output layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub widths: Vec<usize>,
    pub params: Vec<f64>,
}

/// Activations kept from a forward pass for the backward pass.
#[derive(Debug, Clone)]
pub struct Tape {
    /// `acts[0]` is the input, `acts[l]` the output of layer `l`.
    pub acts: Vec<DMatrix<f64>>,
}

impl Tape {
    pub fn output(&self) -> &DMatrix<f64> {
        self.acts.last().expect("tape holds the input at least")
    }
}

pub fn param_count(widths: &[usize]) -> usize {
    widths.windows(2).map(|w| w[1] * w[0] + w[1]).sum()
}

impl Mlp {
    pub fn zeros(widths: &[usize]) -> Result<Self> {
        check_widths(widths)?;
        Ok(Self {
            widths: widths.to_vec(),
            params: vec![0.0; param_count(widths)],
        })
    }

    /// Glorot-uniform weights `U(−a, a)` with `a = √(6 / (fan_in + fan_out))`,
    /// zero biases.
    pub fn glorot(widths: &[usize], rng: &mut impl Rng) -> Result<Self> {
        let mut net = Self::zeros(widths)?;
        let mut off = 0;
        for w in widths.windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
            for p in &mut net.params[off..off + fan_in * fan_out] {
                *p = rng.random_range(-a..a);
            }
            off += fan_in * fan_out + fan_out;
        }
        Ok(net)
    }

    pub fn from_params(widths: &[usize], params: Vec<f64>) -> Result<Self> {
        check_widths(widths)?;
        let net = Self {
            widths: widths.to_vec(),
            params,
        };
        net.validate()?;
        Ok(net)
    }

    pub fn validate(&self) -> Result<()> {
        check_widths(&self.widths)?;
        if self.params.len() != param_count(&self.widths) {
            return Err(Error::invalid(format!(
                "network with widths {:?} needs {} parameters, got {}",
                self.widths,
                param_count(&self.widths),
                self.params.len()
            )));
        }
        if self.params.iter().any(|p| !p.is_finite()) {
            return Err(Error::numerical("network parameters are not finite"));
        }
        Ok(())
    }

    pub fn n_params(&self) -> usize {
        self.params.len()
    }

    pub fn input_dim(&self) -> usize {
        self.widths[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.widths.last().expect("validated widths")
    }

    pub fn n_layers(&self) -> usize {
        self.widths.len() - 1
    }

    /// `(weight_offset, bias_offset)` of layer `l` in the flat vector.
    pub fn layer_offsets(&self, l: usize) -> (usize, usize) {
        let off = param_count(&self.widths[..=l]);
        (off, off + self.widths[l + 1] * self.widths[l])
    }

    pub fn forward(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let mut tape = self.forward_tape_with(&self.params, x)?;
        Ok(tape.acts.pop().expect("non-empty tape"))
    }

    pub fn forward_vec(&self, x: &[f64]) -> Result<Vec<f64>> {
        let out = self.forward(&DMatrix::from_column_slice(x.len(), 1, x))?;
        Ok(out.as_slice().to_vec())
    }

    /// Forward pass with an external parameter vector of this network's shape.
    pub fn forward_tape_with(&self, params: &[f64], x: &DMatrix<f64>) -> Result<Tape> {
        if x.nrows() != self.input_dim() {
            return Err(Error::invalid(format!(
                "input has {} features, network expects {}",
                x.nrows(),
                self.input_dim()
            )));
        }
        if params.len() != param_count(&self.widths) {
            return Err(Error::invalid("parameter vector does not match the network shape"));
        }
        let mut acts = Vec::with_capacity(self.widths.len());
        acts.push(x.clone());
        let last = self.n_layers() - 1;
        for l in 0..self.n_layers() {
            let (wo, bo) = self.layer_offsets(l);
            let (din, dout) = (self.widths[l], self.widths[l + 1]);
            let w = DMatrixView::from_slice(&params[wo..bo], dout, din);
            let b = &params[bo..bo + dout];
            let mut z = w * &acts[l];
            for mut col in z.column_iter_mut() {
                for (v, bi) in col.iter_mut().zip(b) {
                    *v += bi;
                }
            }
            if l != last {
                z.apply(|v| *v = v.tanh());
            }
            acts.push(z);
        }
        Ok(Tape { acts })
    }

    /// Accumulate `∂L/∂θ` into `grad` given `d_out = ∂L/∂output`. Returns
    /// `∂L/∂input`.
    pub fn backward_with(&self, params: &[f64], tape: &Tape, d_out: &DMatrix<f64>, grad: &mut [f64]) -> DMatrix<f64> {
        assert_eq!(grad.len(), params.len());
        assert_eq!(d_out.shape(), tape.output().shape());
        let mut dz = d_out.clone();
        for l in (0..self.n_layers()).rev() {
            let (wo, bo) = self.layer_offsets(l);
            let (din, dout) = (self.widths[l], self.widths[l + 1]);
            let (gw, gb) = grad[wo..bo + dout].split_at_mut(dout * din);
            let mut gw = DMatrixViewMut::from_slice(gw, dout, din);
            gw.gemm(1.0, &dz, &tape.acts[l].transpose(), 1.0);
            for (j, g) in gb.iter_mut().enumerate() {
                *g += dz.row(j).sum();
            }
            let w = DMatrixView::from_slice(&params[wo..bo], dout, din);
            let mut da = w.transpose() * &dz;
            if l > 0 {
                da.zip_apply(&tape.acts[l], |d, a| *d *= 1.0 - a * a);
            }
            dz = da;
        }
        dz
    }

    /// Mean-squared error over all entries against `target` and its gradient.
    pub fn mse_gradient(&self, x: &DMatrix<f64>, target: &DMatrix<f64>) -> Result<(f64, Vec<f64>)> {
        let tape = self.forward_tape_with(&self.params, x)?;
        if target.shape() != tape.output().shape() {
            return Err(Error::invalid("target shape does not match network output"));
        }
        let resid = tape.output() - target;
        let n = resid.len() as f64;
        let loss = resid.norm_squared() / n;
        if !loss.is_finite() {
            return Err(Error::numerical("non-finite loss"));
        }
        let mut grad = vec![0.0; self.n_params()];
        self.backward_with(&self.params, &tape, &(resid * (2.0 / n)), &mut grad);
        Ok((loss, grad))
    }
}

fn check_widths(widths: &[usize]) -> Result<()> {
    // A zero output width is allowed: a trunk with a single constant basis
    // function has no trainable features.
    if widths.len() < 2 || widths[..widths.len() - 1].contains(&0) {
        return Err(Error::invalid(format!(
            "network widths must list at least input and output, hidden widths positive; got {widths:?}"
        )));
    }
    Ok(())
}
