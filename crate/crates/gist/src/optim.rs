//! Adam optimizer and global-norm gradient clipping.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::global_l2_norm;
use crate::params::ParamSet;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig { lr: 0.0004, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// First/second moment estimates plus the shared step counter.
#[derive(Debug, Clone, Default)]
pub struct AdamState {
    pub t: u64,
    m: BTreeMap<String, Tensor>,
    v: BTreeMap<String, Tensor>,
}

impl AdamState {
    pub fn new() -> Self {
        AdamState::default()
    }
}

/// One Adam update over every parameter that has a gradient entry.
/// Bias-corrected moments; update is lr * m_hat / (sqrt(v_hat) + eps).
pub fn adam_step(
    params: &mut ParamSet,
    grads: &BTreeMap<String, Tensor>,
    state: &mut AdamState,
    cfg: &AdamConfig,
) -> Result<()> {
    if !(cfg.beta1 >= 0.0 && cfg.beta1 < 1.0 && cfg.beta2 >= 0.0 && cfg.beta2 < 1.0) {
        return Err(Error::InvalidArg(format!(
            "adam betas must lie in [0,1), got beta1={} beta2={}",
            cfg.beta1, cfg.beta2
        )));
    }
    if !(cfg.lr.is_finite() && cfg.lr > 0.0) {
        return Err(Error::InvalidArg(format!("adam lr must be positive, got {}", cfg.lr)));
    }
    state.t += 1;
    let bc1 = 1.0 - cfg.beta1.powi(state.t as i32);
    let bc2 = 1.0 - cfg.beta2.powi(state.t as i32);

    for (name, g) in grads {
        let p = params.get_mut(name)?;
        if p.shape != g.shape {
            return Err(Error::ShapeMismatch {
                op: "adam_step".into(),
                detail: format!("param {name}: {:?} vs grad {:?}", p.shape, g.shape),
            });
        }
        let m = state
            .m
            .entry(name.clone())
            .or_insert_with(|| Tensor::zeros(g.shape.clone()));
        let v = state
            .v
            .entry(name.clone())
            .or_insert_with(|| Tensor::zeros(g.shape.clone()));
        for i in 0..g.data.len() {
            let gi = g.data[i];
            m.data[i] = cfg.beta1 * m.data[i] + (1.0 - cfg.beta1) * gi;
            v.data[i] = cfg.beta2 * v.data[i] + (1.0 - cfg.beta2) * gi * gi;
            let m_hat = m.data[i] / bc1;
            let v_hat = v.data[i] / bc2;
            p.data[i] -= cfg.lr * m_hat / (v_hat.sqrt() + cfg.eps);
        }
        p.validate_finite("adam_step")?;
    }
    params.step += 1;
    Ok(())
}

/// Scale all gradients so their global L2 norm does not exceed `max_norm`.
/// Returns the pre-clip norm.
pub fn clip_global_norm(grads: &mut BTreeMap<String, Tensor>, max_norm: f64) -> Result<f64> {
    if !(max_norm.is_finite() && max_norm > 0.0) {
        return Err(Error::InvalidArg(format!("max_norm must be positive, got {max_norm}")));
    }
    let norm = global_l2_norm(grads.values().map(|t| t.data.as_slice()));
    if !norm.is_finite() {
        return Err(Error::NonFinite { op: "clip_global_norm".into(), path: None });
    }
    if norm > max_norm {
        let scale = max_norm / norm;
        for t in grads.values_mut() {
            for x in t.data.iter_mut() {
                *x *= scale;
            }
        }
    }
    Ok(norm)
}
