//! First-order update rules: SGD, RMSProp, Adam and Nadam.
//!
//! The rules are applied exactly as tabulated for the framework defaults,
//! elementwise, with `g` the gradient and `t` the step counter *after* it is
//! incremented for the current call (so the first step has `t = 1`):
//!
//! ```text
//! SGD      w <- w - eta * g
//! RMSProp  v <- rho*v + (1-rho)*g^2              w <- w - eta * g / (sqrt(v) + eps)
//! Adam     m <- beta1*m + (1-beta1)*g
//!          v <- beta2*v + (1-beta2)*g^2          w <- w - eta * m / (sqrt(v) + eps)
//! Nadam    m, v as Adam
//!          m_corr = (beta1*m + (1-beta1)*g) / (1 - beta1^t)
//!                                                w <- w - eta * m_corr / (sqrt(v) + eps)
//! ```
//!
//! Adam carries no bias correction and Nadam corrects only the first moment.
//! Setting [`OptimizerConfig::bias_correction`] switches both to the usual
//! framework formulation (`m/(1-beta1^t)`, `v/(1-beta2^t)`).

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Sgd,
    Adam,
    RmsProp,
    Nadam,
}

impl OptimizerKind {
    pub const ALL: [OptimizerKind; 4] = [
        OptimizerKind::Sgd,
        OptimizerKind::Adam,
        OptimizerKind::RmsProp,
        OptimizerKind::Nadam,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            OptimizerKind::Sgd => "sgd",
            OptimizerKind::Adam => "adam",
            OptimizerKind::RmsProp => "rmsprop",
            OptimizerKind::Nadam => "nadam",
        }
    }
}

impl fmt::Display for OptimizerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for OptimizerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "sgd" => Ok(OptimizerKind::Sgd),
            "adam" => Ok(OptimizerKind::Adam),
            "rmsprop" => Ok(OptimizerKind::RmsProp),
            "nadam" => Ok(OptimizerKind::Nadam),
            other => Err(Error::config("optimizer", format!("unknown optimizer {other:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub kind: OptimizerKind,
    pub eta: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub rho: f64,
    pub epsilon: f64,
    pub bias_correction: bool,
}

impl OptimizerConfig {
    /// Framework defaults: learning rate 0.01 for SGD and 0.001 otherwise,
    /// beta1 = 0.9, beta2 = 0.999, rho = 0.9, epsilon = 1e-7.
    pub fn default_for(kind: OptimizerKind) -> Self {
        Self {
            kind,
            eta: match kind {
                OptimizerKind::Sgd => 0.01,
                _ => 0.001,
            },
            beta1: 0.9,
            beta2: 0.999,
            rho: 0.9,
            epsilon: 1e-7,
            bias_correction: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return Err(Error::config("eta", "must be > 0"));
        }
        for (name, v) in [("beta1", self.beta1), ("beta2", self.beta2), ("rho", self.rho)] {
            if !(0.0..1.0).contains(&v) {
                return Err(Error::config(name, format!("{v} not in [0, 1)")));
            }
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::config("epsilon", "must be > 0"));
        }
        Ok(())
    }
}

/// Moment accumulators for one parameter list.
#[derive(Clone, Debug, PartialEq)]
pub struct OptimizerState {
    pub m: Vec<Tensor>,
    pub v: Vec<Tensor>,
    pub t: u64,
}

impl OptimizerState {
    pub fn new<'a>(params: impl IntoIterator<Item = &'a Tensor>) -> Self {
        let m: Vec<Tensor> = params.into_iter().map(|p| Tensor::zeros(p.shape())).collect();
        Self {
            v: m.clone(),
            m,
            t: 0,
        }
    }
}

/// Applies one update in place. Fails without touching `params` or `state`
/// when shapes disagree or any gradient entry is not finite.
pub fn step(
    cfg: &OptimizerConfig,
    state: &mut OptimizerState,
    params: &mut [&mut Tensor],
    grads: &[&Tensor],
) -> Result<()> {
    if params.len() != grads.len() || state.m.len() != params.len() || state.v.len() != params.len() {
        return Err(Error::shape(
            "optimizer step",
            format!("{} parameter tensors", params.len()),
            format!("{} grads, {} m, {} v", grads.len(), state.m.len(), state.v.len()),
        ));
    }
    for (i, (p, g)) in params.iter().zip(grads).enumerate() {
        if p.shape() != g.shape() || state.m[i].shape() != p.shape() || state.v[i].shape() != p.shape() {
            return Err(Error::shape(format!("optimizer step, tensor {i}"), p.shape(), g.shape()));
        }
        if !g.is_finite() {
            return Err(Error::NonFinite(format!("gradient of parameter tensor {i}")));
        }
    }

    state.t += 1;
    let t = state.t as i32;
    let OptimizerConfig {
        kind,
        eta,
        beta1,
        beta2,
        rho,
        epsilon,
        bias_correction,
    } = *cfg;
    let m_scale = 1.0 / (1.0 - beta1.powi(t));
    let v_scale = if bias_correction { 1.0 / (1.0 - beta2.powi(t)) } else { 1.0 };

    for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
        let w = p.data_mut();
        let g = g.data();
        match kind {
            OptimizerKind::Sgd => {
                for (wi, gi) in w.iter_mut().zip(g) {
                    *wi -= eta * gi;
                }
            }
            OptimizerKind::RmsProp => {
                let v = state.v[i].data_mut();
                for ((wi, gi), vi) in w.iter_mut().zip(g).zip(v.iter_mut()) {
                    *vi = rho * *vi + (1.0 - rho) * gi * gi;
                    *wi -= eta * gi / (vi.sqrt() + epsilon);
                }
            }
            OptimizerKind::Adam => {
                let (m, v) = (state.m[i].data_mut(), state.v[i].data_mut());
                for (((wi, gi), mi), vi) in w.iter_mut().zip(g).zip(m.iter_mut()).zip(v.iter_mut()) {
                    *mi = beta1 * *mi + (1.0 - beta1) * gi;
                    *vi = beta2 * *vi + (1.0 - beta2) * gi * gi;
                    if bias_correction {
                        *wi -= eta * (*mi * m_scale) / ((*vi * v_scale).sqrt() + epsilon);
                    } else {
                        *wi -= eta * *mi / (vi.sqrt() + epsilon);
                    }
                }
            }
            OptimizerKind::Nadam => {
                let (m, v) = (state.m[i].data_mut(), state.v[i].data_mut());
                for (((wi, gi), mi), vi) in w.iter_mut().zip(g).zip(m.iter_mut()).zip(v.iter_mut()) {
                    *mi = beta1 * *mi + (1.0 - beta1) * gi;
                    *vi = beta2 * *vi + (1.0 - beta2) * gi * gi;
                    let m_corr = (beta1 * *mi + (1.0 - beta1) * gi) * m_scale;
                    *wi -= eta * m_corr / ((*vi * v_scale).sqrt() + epsilon);
                }
            }
        }
    }
    Ok(())
}
