//! Gist integration: blending a downstream model's context vector with a
//! gist-weighted sum of position representations, and blending a score
//! distribution over positions with the gist weights directly.

use crate::error::{Error, Result};
use crate::graph::{Graph, NodeId};

fn validate_lambda(name: &str, lambda: f64) -> Result<()> {
    if !(lambda.is_finite() && (0.0..=1.0).contains(&lambda)) {
        return Err(Error::InvalidArg(format!("{name} must lie in [0,1], got {lambda}")));
    }
    Ok(())
}

/// v' = (1 - lambda) * v + lambda * sum_i w_i * reps_i.
/// `reps` holds one representation per position, each the length of `v`.
pub fn blend_context(
    v: &[f64],
    weights: &[f64],
    reps: &[Vec<f64>],
    lambda: f64,
) -> Result<Vec<f64>> {
    validate_lambda("context blend weight", lambda)?;
    if weights.len() != reps.len() {
        return Err(Error::ShapeMismatch {
            op: "blend_context".into(),
            detail: format!("{} weights vs {} representations", weights.len(), reps.len()),
        });
    }
    if weights.is_empty() {
        return Err(Error::EmptyInput("context blend over zero positions".into()));
    }
    let mut pooled = vec![0.0; v.len()];
    for (w, r) in weights.iter().zip(reps) {
        if r.len() != v.len() {
            return Err(Error::ShapeMismatch {
                op: "blend_context".into(),
                detail: format!("representation length {} vs context length {}", r.len(), v.len()),
            });
        }
        for (p, x) in pooled.iter_mut().zip(r) {
            *p += w * x;
        }
    }
    Ok(v.iter()
        .zip(&pooled)
        .map(|(vi, pi)| (1.0 - lambda) * vi + lambda * pi)
        .collect())
}

/// r' = (1 - lambda) * r + lambda * g, elementwise over positions. When both
/// inputs are distributions the result is one too.
pub fn blend_scores(r: &[f64], gist: &[f64], lambda: f64) -> Result<Vec<f64>> {
    validate_lambda("score blend weight", lambda)?;
    if r.len() != gist.len() {
        return Err(Error::ShapeMismatch {
            op: "blend_scores".into(),
            detail: format!("score length {} vs gist length {}", r.len(), gist.len()),
        });
    }
    if r.is_empty() {
        return Err(Error::EmptyInput("score blend over zero positions".into()));
    }
    Ok(r.iter().zip(gist).map(|(ri, gi)| (1.0 - lambda) * ri + lambda * gi).collect())
}

/// Graph version of [`blend_context`]: v [dim], weights [m], reps [m, dim].
/// A zero blend weight returns `v` unchanged (the exact baseline path).
pub fn blend_context_node(
    g: &mut Graph,
    v: NodeId,
    weights: NodeId,
    reps: NodeId,
    lambda: f64,
) -> Result<NodeId> {
    validate_lambda("context blend weight", lambda)?;
    if lambda == 0.0 {
        return Ok(v);
    }
    let pooled = g.vecmat(weights, reps)?;
    let scaled_v = g.scale(v, 1.0 - lambda)?;
    let scaled_p = g.scale(pooled, lambda)?;
    g.add(scaled_v, scaled_p)
}

/// Graph version of [`blend_scores`]. A zero blend weight returns `r`
/// unchanged (the exact baseline path).
pub fn blend_scores_node(
    g: &mut Graph,
    r: NodeId,
    gist: NodeId,
    lambda: f64,
) -> Result<NodeId> {
    validate_lambda("score blend weight", lambda)?;
    if lambda == 0.0 {
        return Ok(r);
    }
    let scaled_r = g.scale(r, 1.0 - lambda)?;
    let scaled_g = g.scale(gist, lambda)?;
    g.add(scaled_r, scaled_g)
}
