//! Finite-difference gradient checking for the graph engine.
//!
//! Central differences with step h compared against analytic gradients by
//! relative error with an absolute floor (guards coordinates whose true
//! gradient is near zero, where the relative measure is meaningless).

use rand::Rng;

use crate::error::{Error, Result};
use crate::graph::{Graph, NodeId};
use crate::numeric::rel_err;
use crate::params::ParamSet;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy)]
pub struct FdCheck {
    pub h: f64,
    pub tol: f64,
    pub floor: f64,
}

impl Default for FdCheck {
    fn default() -> Self {
        FdCheck { h: 1e-5, tol: 1e-4, floor: 1e-6 }
    }
}

/// Builder signature for input-gradient checks: receives the graph and one
/// var node per input tensor, returns the scalar loss node.
pub type BuildFn<'a> = &'a dyn Fn(&mut Graph, &[NodeId]) -> Result<NodeId>;

/// Builder signature for parameter-gradient checks: the builder registers
/// parameters out of the given set (via `Graph::param`) and returns the loss.
pub type ParamBuildFn<'a> = &'a dyn Fn(&mut Graph, &ParamSet) -> Result<NodeId>;

fn eval_loss(build: BuildFn, inputs: &[Tensor]) -> Result<f64> {
    let mut g = Graph::new();
    let ids: Vec<NodeId> = inputs
        .iter()
        .map(|t| g.var(t.clone()))
        .collect::<Result<_>>()?;
    let loss = build(&mut g, &ids)?;
    if !g.value(loss).is_scalar() {
        return Err(Error::ShapeMismatch {
            op: "check_inputs".into(),
            detail: "loss must be scalar".into(),
        });
    }
    Ok(g.value(loss).data[0])
}

/// Check d(loss)/d(input) for every coordinate of every input tensor.
pub fn check_inputs(fd: &FdCheck, build: BuildFn, inputs: &[Tensor]) -> Result<()> {
    // Analytic pass.
    let mut g = Graph::new();
    let ids: Vec<NodeId> = inputs
        .iter()
        .map(|t| g.var(t.clone()))
        .collect::<Result<_>>()?;
    let loss = build(&mut g, &ids)?;
    let grads = g.backward(loss)?;

    for (i, t) in inputs.iter().enumerate() {
        let analytic = grads.wrt(ids[i]);
        for j in 0..t.numel() {
            let a = analytic.map(|g| g.data[j]).unwrap_or(0.0);
            let mut plus = inputs.to_vec();
            plus[i].data[j] += fd.h;
            let mut minus = inputs.to_vec();
            minus[i].data[j] -= fd.h;
            let n = (eval_loss(build, &plus)? - eval_loss(build, &minus)?) / (2.0 * fd.h);
            let e = rel_err(a, n, fd.floor);
            if e > fd.tol {
                return Err(Error::InvalidArg(format!(
                    "gradient check failed at input {i} coord {j}: analytic {a:.10e} vs numeric {n:.10e} (rel err {e:.3e})"
                )));
            }
        }
    }
    Ok(())
}

fn eval_param_loss(build: ParamBuildFn, params: &ParamSet) -> Result<f64> {
    let mut g = Graph::new();
    let loss = build(&mut g, params)?;
    if !g.value(loss).is_scalar() {
        return Err(Error::ShapeMismatch {
            op: "check_params".into(),
            detail: "loss must be scalar".into(),
        });
    }
    Ok(g.value(loss).data[0])
}

/// Check d(loss)/d(theta) for every coordinate of every named parameter the
/// builder touches. Used for whole-model gradient verification.
pub fn check_params(fd: &FdCheck, build: ParamBuildFn, params: &ParamSet) -> Result<()> {
    let mut g = Graph::new();
    let loss = build(&mut g, params)?;
    let grads = g.backward(loss)?;
    let pgrads = g.param_grads(&grads);

    for (name, grad) in &pgrads {
        let base = params.get(name)?.clone();
        for j in 0..base.numel() {
            let a = grad.data[j];
            let mut plus = params.clone();
            plus.get_mut(name)?.data[j] += fd.h;
            let mut minus = params.clone();
            minus.get_mut(name)?.data[j] -= fd.h;
            let n = (eval_param_loss(build, &plus)? - eval_param_loss(build, &minus)?) / (2.0 * fd.h);
            let e = rel_err(a, n, fd.floor);
            if e > fd.tol {
                return Err(Error::InvalidArg(format!(
                    "gradient check failed at param {name} coord {j}: analytic {a:.10e} vs numeric {n:.10e} (rel err {e:.3e})"
                )));
            }
        }
    }
    Ok(())
}

/// Random vector with coordinates kept away from relu/max kinks.
fn smooth_vec(n: usize, rng: &mut impl Rng) -> Vec<f64> {
    (0..n)
        .map(|_| {
            let v: f64 = rng.gen_range(-1.0..1.0);
            let s = if v >= 0.0 { 1.0 } else { -1.0 };
            v + 0.25 * s
        })
        .collect()
}

/// Finite-difference sweep over every differentiable op in the engine, one
/// random case per seed per op. Exercised by both the unit suite and the
/// acceptance suite.
pub fn all_op_fd_suite(seeds: u64, fd: &FdCheck) -> Result<()> {
    use crate::rng::seeded;

    for seed in 0..seeds {
        let rng = &mut seeded(seed, "fd-op-suite");
        let m = rng.gen_range(2..5usize);
        let k = rng.gen_range(2..5usize);
        let n = rng.gen_range(2..5usize);

        let vec_a = Tensor::vector(smooth_vec(k, rng));
        let vec_b = Tensor::vector(smooth_vec(k, rng));
        let mat_a = Tensor::matrix(m, k, smooth_vec(m * k, rng))?;
        let mat_b = Tensor::matrix(k, n, smooth_vec(k * n, rng))?;
        let mat_c = Tensor::matrix(n, k, smooth_vec(n * k, rng))?;

        // Weights for scalarizing non-scalar outputs.
        let wl: Vec<f64> = (0..64).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let scalarize = move |g: &mut Graph, out: NodeId| -> Result<NodeId> {
            let shape = g.value(out).shape.clone();
            let numel: usize = shape.iter().product();
            if numel == 1 {
                return Ok(out);
            }
            let w = g.leaf(Tensor { shape, data: wl[..numel].to_vec() })?;
            let prod = g.mul(out, w)?;
            g.sum(prod)
        };

        type Case<'a> = (&'a str, Vec<Tensor>, Box<dyn Fn(&mut Graph, &[NodeId]) -> Result<NodeId>>);
        let cases: Vec<Case> = vec![
            ("add", vec![vec_a.clone(), vec_b.clone()], Box::new(|g, ids| g.add(ids[0], ids[1]))),
            ("sub", vec![vec_a.clone(), vec_b.clone()], Box::new(|g, ids| g.sub(ids[0], ids[1]))),
            ("mul", vec![vec_a.clone(), vec_b.clone()], Box::new(|g, ids| g.mul(ids[0], ids[1]))),
            ("affine", vec![vec_a.clone()], Box::new(|g, ids| g.affine(ids[0], -1.7, 0.3))),
            ("add_row_vec", vec![mat_a.clone(), Tensor::vector(smooth_vec(k, rng))], Box::new(|g, ids| g.add_row_vec(ids[0], ids[1]))),
            ("matmul", vec![mat_a.clone(), mat_b.clone()], Box::new(|g, ids| g.matmul(ids[0], ids[1]))),
            ("matmul_nt", vec![mat_a.clone(), mat_c.clone()], Box::new(|g, ids| g.matmul_nt(ids[0], ids[1]))),
            ("matvec", vec![mat_a.clone(), vec_a.clone()], Box::new(|g, ids| g.matvec(ids[0], ids[1]))),
            ("vecmat", vec![Tensor::vector(smooth_vec(m, rng)), mat_a.clone()], Box::new(|g, ids| g.vecmat(ids[0], ids[1]))),
            ("tanh", vec![vec_a.clone()], Box::new(|g, ids| g.tanh(ids[0]))),
            ("sigmoid", vec![vec_a.clone()], Box::new(|g, ids| g.sigmoid(ids[0]))),
            ("relu", vec![vec_a.clone()], Box::new(|g, ids| g.relu(ids[0]))),
            ("ln", vec![Tensor::vector((0..k).map(|_| rng.gen_range(0.2..2.0)).collect())], Box::new(|g, ids| g.ln(ids[0]))),
            ("concat", vec![vec_a.clone(), vec_b.clone()], Box::new(|g, ids| g.concat(ids))),
            ("slice", vec![vec_a.clone()], Box::new(|g, ids| g.slice(ids[0], 1, 1))),
            ("rows_to_mat", vec![vec_a.clone(), vec_b.clone()], Box::new(|g, ids| g.rows_to_mat(ids))),
            ("softmax", vec![vec_a.clone()], Box::new(|g, ids| g.softmax(ids[0], 1.0))),
            ("softmax_t4", vec![vec_a.clone()], Box::new(|g, ids| g.softmax(ids[0], 4.0))),
            ("log_softmax", vec![vec_a.clone()], Box::new(|g, ids| g.log_softmax(ids[0], 2.0))),
            ("softmax_rows", vec![mat_a.clone()], Box::new(|g, ids| g.softmax_rows(ids[0], 1.0))),
            ("sum", vec![vec_a.clone()], Box::new(|g, ids| g.sum(ids[0]))),
            ("dot", vec![vec_a.clone(), vec_b.clone()], Box::new(|g, ids| g.dot(ids[0], ids[1]))),
            ("sum_n", vec![vec_a.clone(), vec_b.clone(), vec_a.clone()], Box::new(|g, ids| g.sum_n(ids))),
            ("gather", vec![vec_a.clone()], Box::new(|g, ids| g.gather(ids[0], 1))),
            ("scatter_add", vec![vec_a.clone()], Box::new(move |g, ids| {
                let ids_map: Vec<usize> = (0..k).map(|p| p % 3).collect();
                g.scatter_add(ids[0], &ids_map, 4)
            })),
            ("pad_zeros", vec![vec_a.clone()], Box::new(move |g, ids| g.pad_zeros(ids[0], k + 3))),
            ("zero_pad_rows", vec![mat_a.clone()], Box::new(move |g, ids| g.zero_pad_rows(ids[0], m + 2))),
            ("embed", vec![mat_a.clone()], Box::new(move |g, ids| g.embed(ids[0], &[0, m - 1, 0]))),
            ("scale_by", vec![vec_a.clone(), Tensor::scalar(rng.gen_range(0.5..1.5))], Box::new(|g, ids| g.scale_by(ids[0], ids[1]))),
            ("conv_windows", vec![mat_a.clone()], Box::new(|g, ids| g.conv_windows(ids[0], 2))),
            ("row", vec![mat_a.clone()], Box::new(move |g, ids| g.row(ids[0], m - 1))),
            ("max_axis0", vec![Tensor::matrix(m, k, {
                // Spread values so no column has near-ties at the max.
                let mut v = smooth_vec(m * k, rng);
                for (i, x) in v.iter_mut().enumerate() {
                    *x += (i / k) as f64 * 0.5;
                }
                v
            })?], Box::new(|g, ids| g.max_axis0(ids[0]))),
        ];

        for (name, inputs, op_build) in cases {
            let build = |g: &mut Graph, ids: &[NodeId]| -> Result<NodeId> {
                let out = op_build(g, ids)?;
                scalarize(g, out)
            };
            check_inputs(fd, &build, &inputs)
                .map_err(|e| Error::InvalidArg(format!("op {name}, seed {seed}: {e}")))?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_op_passes_finite_difference_over_20_seeds() {
        all_op_fd_suite(20, &FdCheck::default()).unwrap();
    }

    #[test]
    fn check_inputs_catches_a_gradient_mismatch() {
        // relu at exactly 0: analytic gradient is 0, central differences see
        // (h - 0) / 2h = 0.5, so the checker must flag the disagreement.
        let build = |g: &mut Graph, ids: &[NodeId]| -> Result<NodeId> {
            let y = g.relu(ids[0])?;
            g.sum(y)
        };
        let inputs = vec![Tensor::vector(vec![0.0])];
        assert!(check_inputs(&FdCheck::default(), &build, &inputs).is_err());
    }
}
