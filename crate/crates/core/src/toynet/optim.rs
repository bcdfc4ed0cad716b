use serde::{Deserialize, Serialize};

use super::params::{Gradients, ToyNetParams};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Sgd,
    #[default]
    Adam,
}

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPSILON: f64 = 1e-8;

#[derive(Debug, Clone)]
pub struct OptimizerState {
    pub kind: OptimizerKind,
    pub step: u64,
    /// First and second moments, present for Adam.
    moments: Option<(Gradients, Gradients)>,
}

impl OptimizerState {
    pub fn new(kind: OptimizerKind, params: &ToyNetParams) -> Self {
        let moments = (kind == OptimizerKind::Adam).then(|| (params.zeros_like(), params.zeros_like()));
        Self { kind, step: 0, moments }
    }

    pub fn first_moment(&self) -> Option<&Gradients> {
        self.moments.as_ref().map(|(m, _)| m)
    }
}

/// One update of every parameter. SGD: `p -= lr * g`. Adam: bias-corrected
/// moments with beta1 0.9, beta2 0.999, eps 1e-8.
pub fn optimizer_step(params: &mut ToyNetParams, grads: &Gradients, state: &mut OptimizerState, lr: f64) -> Result<()> {
    if grads.dims() != params.dims() {
        return Err(Error::shape("gradient shapes differ from parameters"));
    }
    if !grads.tensors().iter().all(|t| t.iter().all(|v| v.is_finite())) {
        return Err(Error::NonFinite { context: "gradient".into() });
    }
    state.step += 1;
    match &mut state.moments {
        None => {
            for (p, g) in params.tensors_mut().into_iter().zip(grads.tensors()) {
                p.iter_mut().zip(g).for_each(|(p, g)| *p -= lr * g);
            }
        }
        Some((m, v)) => {
            let t = state.step as i32;
            let c1 = 1.0 - ADAM_BETA1.powi(t);
            let c2 = 1.0 - ADAM_BETA2.powi(t);
            let tensors = params.tensors_mut().into_iter().zip(grads.tensors()).zip(m.tensors_mut()).zip(v.tensors_mut());
            for (((p, g), m), v) in tensors {
                for i in 0..p.len() {
                    m[i] = ADAM_BETA1 * m[i] + (1.0 - ADAM_BETA1) * g[i];
                    v[i] = ADAM_BETA2 * v[i] + (1.0 - ADAM_BETA2) * g[i] * g[i];
                    let m_hat = m[i] / c1;
                    let v_hat = v[i] / c2;
                    p[i] -= lr * m_hat / (v_hat.sqrt() + ADAM_EPSILON);
                }
            }
        }
    }
    Ok(())
}

/// Step decay: `base * factor^(milestones reached)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LrSchedule {
    pub base: f64,
    pub milestones: Vec<usize>,
    pub factor: f64,
}

impl Default for LrSchedule {
    fn default() -> Self {
        Self {
            base: 3e-4,
            milestones: vec![20, 40],
            factor: 0.1,
        }
    }
}

impl LrSchedule {
    pub fn validate(&self) -> Result<()> {
        if !self.milestones.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::invalid("lr milestones must be strictly increasing"));
        }
        if !(self.base > 0.0 && self.base.is_finite() && self.factor > 0.0 && self.factor.is_finite()) {
            return Err(Error::invalid("learning rate and decay factor must be positive"));
        }
        Ok(())
    }

    pub fn lr(&self, epoch: usize) -> f64 {
        lr_schedule(epoch, self.base, &self.milestones, self.factor)
    }
}

pub fn lr_schedule(epoch: usize, base: f64, milestones: &[usize], factor: f64) -> f64 {
    let passed = milestones.iter().filter(|&&m| m <= epoch).count();
    base * factor.powi(passed as i32)
}
