//! Pure numeric kernels shared by the graph ops and the distillation code.

use crate::error::{Error, Result};

/// Temperature softmax over a vector: softmax(x / t). Max-subtracted for
/// stability; exact for any finite input.
pub fn softmax_t(x: &[f64], t: f64) -> Result<Vec<f64>> {
    if x.is_empty() {
        return Err(Error::EmptyInput("softmax over empty vector".into()));
    }
    if !(t.is_finite() && t > 0.0) {
        return Err(Error::InvalidArg(format!("softmax temperature must be positive and finite, got {t}")));
    }
    let m = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = x.iter().map(|&v| ((v - m) / t).exp()).collect();
    let z: f64 = exps.iter().sum();
    Ok(exps.iter().map(|&e| e / z).collect())
}

/// log softmax(x / t), numerically stable.
pub fn log_softmax_t(x: &[f64], t: f64) -> Result<Vec<f64>> {
    if x.is_empty() {
        return Err(Error::EmptyInput("log-softmax over empty vector".into()));
    }
    if !(t.is_finite() && t > 0.0) {
        return Err(Error::InvalidArg(format!("softmax temperature must be positive and finite, got {t}")));
    }
    let m = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let z: f64 = x.iter().map(|&v| ((v - m) / t).exp()).sum();
    let lz = z.ln();
    Ok(x.iter().map(|&v| (v - m) / t - lz).collect())
}

/// Shannon entropy -sum p ln p in nats; 0 ln 0 = 0.
pub fn entropy(p: &[f64]) -> f64 {
    p.iter().map(|&v| if v > 0.0 { -v * v.ln() } else { 0.0 }).sum()
}

/// Global L2 norm over a set of slices.
pub fn global_l2_norm<'a>(parts: impl Iterator<Item = &'a [f64]>) -> f64 {
    let mut sq = 0.0;
    for p in parts {
        for &v in p {
            sq += v * v;
        }
    }
    sq.sqrt()
}

/// Relative error with an absolute floor, as used by the gradient checks:
/// |a-b| / max(|a|, |b|, floor).
pub fn rel_err(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}
