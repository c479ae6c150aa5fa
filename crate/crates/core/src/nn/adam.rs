use serde::{Deserialize, Serialize};

use super::mlp::{GradientBundle, Mlp};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.eps > 0.0
            && self.eps.is_finite();
        if !ok {
            return Err(Error::InvalidInput(format!(
                "invalid adam settings {self:?}"
            )));
        }
        Ok(())
    }
}

/// First and second moment estimates plus the step counter.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub m: GradientBundle,
    pub v: GradientBundle,
    pub step: u64,
}

impl AdamState {
    pub fn new(net: &Mlp) -> Self {
        Self {
            m: GradientBundle::zeros_like(net),
            v: GradientBundle::zeros_like(net),
            step: 0,
        }
    }
}

/// One bias-corrected Adam update of `net` in place.
pub fn adam_step(
    net: &mut Mlp,
    grads: &GradientBundle,
    state: &mut AdamState,
    lr: f64,
    cfg: &AdamConfig,
) -> Result<()> {
    if !grads.matches(net) || !state.m.matches(net) || !state.v.matches(net) {
        return Err(Error::Shape(
            "gradient bundle does not match network layout".into(),
        ));
    }
    if !(lr >= 0.0 && lr.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "learning rate must be finite and non-negative, got {lr}"
        )));
    }
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - cfg.beta1.powi(t);
    let c2 = 1.0 - cfg.beta2.powi(t);
    for (((p, g), m), v) in net
        .params_mut()
        .zip(grads.iter())
        .zip(state.m.iter_mut())
        .zip(state.v.iter_mut())
    {
        *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
        *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
        let m_hat = *m / c1;
        let v_hat = *v / c2;
        *p -= lr * m_hat / (v_hat.sqrt() + cfg.eps);
    }
    Ok(())
}
