//! Reverse-mode automatic differentiation over a tape of dense-tensor ops.
//!
//! A `Graph` is rebuilt per example: ops append nodes (values computed
//! eagerly), `backward` replays the tape in reverse and accumulates
//! vector-Jacobian products. Every op validates shapes and rejects
//! non-finite outputs.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::numeric;
use crate::tensor::Tensor;

pub type NodeId = usize;

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    /// k * x + c, elementwise.
    Affine(NodeId, f64),
    /// [m,n] + [n], bias broadcast over rows.
    AddRowVec(NodeId, NodeId),
    /// [m,k] x [k,n] -> [m,n]
    MatMul(NodeId, NodeId),
    /// [m,d] x [n,d]^T -> [m,n]
    MatMulNT(NodeId, NodeId),
    /// [m,k] x [k] -> [m]
    MatVec(NodeId, NodeId),
    /// v^T M: [m] x [m,d] -> [d]
    VecMat(NodeId, NodeId),
    Tanh(NodeId),
    Sigmoid(NodeId),
    Relu(NodeId),
    Ln(NodeId),
    /// Rank-1 concatenation.
    Concat(Vec<NodeId>),
    /// Rank-1 slice (start, len).
    Slice(NodeId, usize, usize),
    /// Stack equal-length vectors as matrix rows.
    RowsToMat(Vec<NodeId>),
    SoftmaxVec(NodeId, f64),
    LogSoftmaxVec(NodeId, f64),
    /// Row-wise softmax of a matrix.
    SoftmaxRows(NodeId, f64),
    SumVec(NodeId),
    Dot(NodeId, NodeId),
    /// n-ary same-shape sum.
    SumN(Vec<NodeId>),
    /// x[i] -> scalar.
    Gather(NodeId, usize),
    /// out[ids[p]] += x[p]; output length fixed.
    ScatterAdd(NodeId, Vec<usize>),
    /// Rank-1 zero-pad to a longer length.
    PadZeros(NodeId),
    /// Rank-2 zero-pad to more rows.
    ZeroPadRows(NodeId),
    /// Row gather from an embedding table: table [V,d], ids -> [len(ids), d].
    Embed(NodeId, Vec<usize>),
    /// Tensor times a scalar node.
    ScaleBy(NodeId, NodeId),
    /// Sliding windows for 1-D convolution: [L,c] -> [L-w+1, c*w].
    ConvWindows(NodeId, usize),
    /// Column-wise max over rows: [m,n] -> [n].
    MaxAxis0(NodeId),
    /// Extract row r of a matrix as a vector.
    Row(NodeId, usize),
}

struct Node {
    value: Tensor,
    op: Op,
    needs_grad: bool,
}

/// Per-node gradients produced by `Graph::backward`.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn wrt(&self, id: NodeId) -> Option<&Tensor> {
        self.grads.get(id).and_then(|g| g.as_ref())
    }
}

#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
    params: BTreeMap<String, NodeId>,
}

impl Graph {
    pub fn new() -> Self {
        Graph::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id].value
    }

    fn push(&mut self, op_name: &str, value: Tensor, op: Op, needs_grad: bool) -> Result<NodeId> {
        value.validate_finite(op_name)?;
        self.nodes.push(Node { value, op, needs_grad });
        Ok(self.nodes.len() - 1)
    }

    fn needs(&self, id: NodeId) -> bool {
        self.nodes[id].needs_grad
    }

    /// Constant leaf; no gradient is tracked for it.
    pub fn leaf(&mut self, value: Tensor) -> Result<NodeId> {
        self.push("leaf", value, Op::Leaf, false)
    }

    /// Differentiable leaf (an input we want gradients for).
    pub fn var(&mut self, value: Tensor) -> Result<NodeId> {
        self.push("var", value, Op::Leaf, true)
    }

    /// Named parameter leaf. Repeated registration of the same name returns
    /// the same node, so a parameter appears once per graph.
    pub fn param(&mut self, name: &str, value: &Tensor) -> Result<NodeId> {
        if let Some(&id) = self.params.get(name) {
            return Ok(id);
        }
        let id = self.push("param", value.clone(), Op::Leaf, true)?;
        self.params.insert(name.to_string(), id);
        Ok(id)
    }

    pub fn param_names(&self) -> impl Iterator<Item = (&String, &NodeId)> {
        self.params.iter()
    }

    fn shape_err(op: &str, detail: String) -> Error {
        Error::ShapeMismatch { op: op.into(), detail }
    }

    fn binary_same_shape(&mut self, op_name: &str, a: NodeId, b: NodeId) -> Result<(Vec<usize>, Vec<f64>, Vec<f64>)> {
        let (ta, tb) = (&self.nodes[a].value, &self.nodes[b].value);
        if ta.shape != tb.shape {
            return Err(Self::shape_err(op_name, format!("{:?} vs {:?}", ta.shape, tb.shape)));
        }
        Ok((ta.shape.clone(), ta.data.clone(), tb.data.clone()))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (shape, da, db) = self.binary_same_shape("add", a, b)?;
        let data = da.iter().zip(&db).map(|(x, y)| x + y).collect();
        let needs = self.needs(a) || self.needs(b);
        self.push("add", Tensor { shape, data }, Op::Add(a, b), needs)
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (shape, da, db) = self.binary_same_shape("sub", a, b)?;
        let data = da.iter().zip(&db).map(|(x, y)| x - y).collect();
        let needs = self.needs(a) || self.needs(b);
        self.push("sub", Tensor { shape, data }, Op::Sub(a, b), needs)
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (shape, da, db) = self.binary_same_shape("mul", a, b)?;
        let data = da.iter().zip(&db).map(|(x, y)| x * y).collect();
        let needs = self.needs(a) || self.needs(b);
        self.push("mul", Tensor { shape, data }, Op::Mul(a, b), needs)
    }

    /// k * x + c elementwise.
    pub fn affine(&mut self, x: NodeId, k: f64, c: f64) -> Result<NodeId> {
        let t = &self.nodes[x].value;
        let data = t.data.iter().map(|v| k * v + c).collect();
        let shape = t.shape.clone();
        let needs = self.needs(x);
        self.push("affine", Tensor { shape, data }, Op::Affine(x, k), needs)
    }

    pub fn scale(&mut self, x: NodeId, k: f64) -> Result<NodeId> {
        self.affine(x, k, 0.0)
    }

    /// 1 - x elementwise.
    pub fn one_minus(&mut self, x: NodeId) -> Result<NodeId> {
        self.affine(x, -1.0, 1.0)
    }

    /// [m,n] + [n] broadcast over rows.
    pub fn add_row_vec(&mut self, m: NodeId, v: NodeId) -> Result<NodeId> {
        let (tm, tv) = (&self.nodes[m].value, &self.nodes[v].value);
        if tm.rank() != 2 || tv.rank() != 1 || tm.shape[1] != tv.shape[0] {
            return Err(Self::shape_err("add_row_vec", format!("{:?} + {:?}", tm.shape, tv.shape)));
        }
        let (rows, cols) = (tm.shape[0], tm.shape[1]);
        let mut data = tm.data.clone();
        for r in 0..rows {
            for c in 0..cols {
                data[r * cols + c] += tv.data[c];
            }
        }
        let needs = self.needs(m) || self.needs(v);
        self.push("add_row_vec", Tensor { shape: vec![rows, cols], data }, Op::AddRowVec(m, v), needs)
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (ta, tb) = (&self.nodes[a].value, &self.nodes[b].value);
        if ta.rank() != 2 || tb.rank() != 2 || ta.shape[1] != tb.shape[0] {
            return Err(Self::shape_err("matmul", format!("{:?} x {:?}", ta.shape, tb.shape)));
        }
        let (m, k, n) = (ta.shape[0], ta.shape[1], tb.shape[1]);
        let mut data = vec![0.0; m * n];
        for i in 0..m {
            let arow = &ta.data[i * k..(i + 1) * k];
            let out = &mut data[i * n..(i + 1) * n];
            for (kk, &av) in arow.iter().enumerate() {
                let brow = &tb.data[kk * n..(kk + 1) * n];
                for (o, &bv) in out.iter_mut().zip(brow) {
                    *o += av * bv;
                }
            }
        }
        let needs = self.needs(a) || self.needs(b);
        self.push("matmul", Tensor { shape: vec![m, n], data }, Op::MatMul(a, b), needs)
    }

    /// a [m,d] times b [n,d] transposed -> [m,n].
    pub fn matmul_nt(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (ta, tb) = (&self.nodes[a].value, &self.nodes[b].value);
        if ta.rank() != 2 || tb.rank() != 2 || ta.shape[1] != tb.shape[1] {
            return Err(Self::shape_err("matmul_nt", format!("{:?} x {:?}^T", ta.shape, tb.shape)));
        }
        let (m, d, n) = (ta.shape[0], ta.shape[1], tb.shape[0]);
        let mut data = vec![0.0; m * n];
        for i in 0..m {
            let arow = &ta.data[i * d..(i + 1) * d];
            for j in 0..n {
                let brow = &tb.data[j * d..(j + 1) * d];
                data[i * n + j] = arow.iter().zip(brow).map(|(x, y)| x * y).sum();
            }
        }
        let needs = self.needs(a) || self.needs(b);
        self.push("matmul_nt", Tensor { shape: vec![m, n], data }, Op::MatMulNT(a, b), needs)
    }

    pub fn matvec(&mut self, a: NodeId, x: NodeId) -> Result<NodeId> {
        let (ta, tx) = (&self.nodes[a].value, &self.nodes[x].value);
        if ta.rank() != 2 || tx.rank() != 1 || ta.shape[1] != tx.shape[0] {
            return Err(Self::shape_err("matvec", format!("{:?} x {:?}", ta.shape, tx.shape)));
        }
        let (m, k) = (ta.shape[0], ta.shape[1]);
        let data: Vec<f64> = (0..m)
            .map(|i| ta.data[i * k..(i + 1) * k].iter().zip(&tx.data).map(|(a, b)| a * b).sum())
            .collect();
        let needs = self.needs(a) || self.needs(x);
        self.push("matvec", Tensor::vector(data), Op::MatVec(a, x), needs)
    }

    /// v^T M: [m] x [m,d] -> [d].
    pub fn vecmat(&mut self, v: NodeId, m: NodeId) -> Result<NodeId> {
        let (tv, tm) = (&self.nodes[v].value, &self.nodes[m].value);
        if tv.rank() != 1 || tm.rank() != 2 || tv.shape[0] != tm.shape[0] {
            return Err(Self::shape_err("vecmat", format!("{:?} x {:?}", tv.shape, tm.shape)));
        }
        let (rows, d) = (tm.shape[0], tm.shape[1]);
        let mut data = vec![0.0; d];
        for r in 0..rows {
            let w = tv.data[r];
            for (o, &x) in data.iter_mut().zip(&tm.data[r * d..(r + 1) * d]) {
                *o += w * x;
            }
        }
        let needs = self.needs(v) || self.needs(m);
        self.push("vecmat", Tensor::vector(data), Op::VecMat(v, m), needs)
    }

    fn unary(&mut self, op_name: &str, x: NodeId, f: impl Fn(f64) -> f64, op: Op) -> Result<NodeId> {
        let t = &self.nodes[x].value;
        let data = t.data.iter().map(|&v| f(v)).collect();
        let shape = t.shape.clone();
        let needs = self.needs(x);
        self.push(op_name, Tensor { shape, data }, op, needs)
    }

    pub fn tanh(&mut self, x: NodeId) -> Result<NodeId> {
        self.unary("tanh", x, f64::tanh, Op::Tanh(x))
    }

    pub fn sigmoid(&mut self, x: NodeId) -> Result<NodeId> {
        self.unary("sigmoid", x, |v| 1.0 / (1.0 + (-v).exp()), Op::Sigmoid(x))
    }

    pub fn relu(&mut self, x: NodeId) -> Result<NodeId> {
        self.unary("relu", x, |v| if v > 0.0 { v } else { 0.0 }, Op::Relu(x))
    }

    /// Natural log; input must be strictly positive or the finite-value
    /// check rejects the node.
    pub fn ln(&mut self, x: NodeId) -> Result<NodeId> {
        self.unary("ln", x, f64::ln, Op::Ln(x))
    }

    pub fn concat(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        if parts.is_empty() {
            return Err(Error::EmptyInput("concat of zero vectors".into()));
        }
        let mut data = Vec::new();
        for &p in parts {
            let t = &self.nodes[p].value;
            if t.rank() != 1 {
                return Err(Self::shape_err("concat", format!("rank-1 parts required, got {:?}", t.shape)));
            }
            data.extend_from_slice(&t.data);
        }
        let needs = parts.iter().any(|&p| self.needs(p));
        self.push("concat", Tensor::vector(data), Op::Concat(parts.to_vec()), needs)
    }

    pub fn slice(&mut self, x: NodeId, start: usize, len: usize) -> Result<NodeId> {
        let t = &self.nodes[x].value;
        if t.rank() != 1 || start + len > t.shape[0] {
            return Err(Self::shape_err("slice", format!("[{start}..{}] of {:?}", start + len, t.shape)));
        }
        let data = t.data[start..start + len].to_vec();
        let needs = self.needs(x);
        self.push("slice", Tensor::vector(data), Op::Slice(x, start, len), needs)
    }

    pub fn rows_to_mat(&mut self, rows: &[NodeId]) -> Result<NodeId> {
        if rows.is_empty() {
            return Err(Error::EmptyInput("rows_to_mat of zero rows".into()));
        }
        let cols = self.nodes[rows[0]].value.numel();
        let mut data = Vec::with_capacity(rows.len() * cols);
        for &r in rows {
            let t = &self.nodes[r].value;
            if t.rank() != 1 || t.shape[0] != cols {
                return Err(Self::shape_err("rows_to_mat", format!("expected [{}], got {:?}", cols, t.shape)));
            }
            data.extend_from_slice(&t.data);
        }
        let needs = rows.iter().any(|&r| self.needs(r));
        self.push(
            "rows_to_mat",
            Tensor { shape: vec![rows.len(), cols], data },
            Op::RowsToMat(rows.to_vec()),
            needs,
        )
    }

    pub fn softmax(&mut self, x: NodeId, temperature: f64) -> Result<NodeId> {
        let t = &self.nodes[x].value;
        if t.rank() != 1 {
            return Err(Self::shape_err("softmax", format!("rank-1 required, got {:?}", t.shape)));
        }
        let data = numeric::softmax_t(&t.data, temperature)?;
        let needs = self.needs(x);
        self.push("softmax", Tensor::vector(data), Op::SoftmaxVec(x, temperature), needs)
    }

    pub fn log_softmax(&mut self, x: NodeId, temperature: f64) -> Result<NodeId> {
        let t = &self.nodes[x].value;
        if t.rank() != 1 {
            return Err(Self::shape_err("log_softmax", format!("rank-1 required, got {:?}", t.shape)));
        }
        let data = numeric::log_softmax_t(&t.data, temperature)?;
        let needs = self.needs(x);
        self.push("log_softmax", Tensor::vector(data), Op::LogSoftmaxVec(x, temperature), needs)
    }

    pub fn softmax_rows(&mut self, x: NodeId, temperature: f64) -> Result<NodeId> {
        let t = &self.nodes[x].value;
        if t.rank() != 2 {
            return Err(Self::shape_err("softmax_rows", format!("rank-2 required, got {:?}", t.shape)));
        }
        let (rows, cols) = (t.shape[0], t.shape[1]);
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            data.extend(numeric::softmax_t(&t.data[r * cols..(r + 1) * cols], temperature)?);
        }
        let needs = self.needs(x);
        self.push("softmax_rows", Tensor { shape: vec![rows, cols], data }, Op::SoftmaxRows(x, temperature), needs)
    }

    pub fn sum(&mut self, x: NodeId) -> Result<NodeId> {
        let t = &self.nodes[x].value;
        let s: f64 = t.data.iter().sum();
        let needs = self.needs(x);
        self.push("sum", Tensor::scalar(s), Op::SumVec(x), needs)
    }

    pub fn dot(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (_, da, db) = self.binary_same_shape("dot", a, b)?;
        let s: f64 = da.iter().zip(&db).map(|(x, y)| x * y).sum();
        let needs = self.needs(a) || self.needs(b);
        self.push("dot", Tensor::scalar(s), Op::Dot(a, b), needs)
    }

    /// Sum of n same-shape tensors.
    pub fn sum_n(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        if parts.is_empty() {
            return Err(Error::EmptyInput("sum_n of zero tensors".into()));
        }
        let shape = self.nodes[parts[0]].value.shape.clone();
        let mut data = vec![0.0; self.nodes[parts[0]].value.numel()];
        for &p in parts {
            let t = &self.nodes[p].value;
            if t.shape != shape {
                return Err(Self::shape_err("sum_n", format!("{:?} vs {:?}", shape, t.shape)));
            }
            for (o, &v) in data.iter_mut().zip(&t.data) {
                *o += v;
            }
        }
        let needs = parts.iter().any(|&p| self.needs(p));
        self.push("sum_n", Tensor { shape, data }, Op::SumN(parts.to_vec()), needs)
    }

    /// Mean of n same-shape tensors.
    pub fn mean_n(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        let s = self.sum_n(parts)?;
        self.scale(s, 1.0 / parts.len() as f64)
    }

    pub fn gather(&mut self, x: NodeId, idx: usize) -> Result<NodeId> {
        let t = &self.nodes[x].value;
        if t.rank() != 1 || idx >= t.shape[0] {
            return Err(Self::shape_err("gather", format!("index {idx} into {:?}", t.shape)));
        }
        let v = t.data[idx];
        let needs = self.needs(x);
        self.push("gather", Tensor::scalar(v), Op::Gather(x, idx), needs)
    }

    /// out[ids[p]] += x[p] for every position p; output has length `size`.
    pub fn scatter_add(&mut self, x: NodeId, ids: &[usize], size: usize) -> Result<NodeId> {
        let t = &self.nodes[x].value;
        if t.rank() != 1 || t.shape[0] != ids.len() {
            return Err(Self::shape_err("scatter_add", format!("{} ids for {:?}", ids.len(), t.shape)));
        }
        if let Some(&bad) = ids.iter().find(|&&i| i >= size) {
            return Err(Error::InvalidArg(format!("scatter_add id {bad} out of range {size}")));
        }
        let mut data = vec![0.0; size];
        for (p, &id) in ids.iter().enumerate() {
            data[id] += t.data[p];
        }
        let needs = self.needs(x);
        self.push("scatter_add", Tensor::vector(data), Op::ScatterAdd(x, ids.to_vec()), needs)
    }

    pub fn pad_zeros(&mut self, x: NodeId, new_len: usize) -> Result<NodeId> {
        let t = &self.nodes[x].value;
        if t.rank() != 1 || new_len < t.shape[0] {
            return Err(Self::shape_err("pad_zeros", format!("{:?} to length {new_len}", t.shape)));
        }
        let mut data = t.data.clone();
        data.resize(new_len, 0.0);
        let needs = self.needs(x);
        self.push("pad_zeros", Tensor::vector(data), Op::PadZeros(x), needs)
    }

    pub fn zero_pad_rows(&mut self, x: NodeId, new_rows: usize) -> Result<NodeId> {
        let t = &self.nodes[x].value;
        if t.rank() != 2 || new_rows < t.shape[0] {
            return Err(Self::shape_err("zero_pad_rows", format!("{:?} to {new_rows} rows", t.shape)));
        }
        let cols = t.shape[1];
        let mut data = t.data.clone();
        data.resize(new_rows * cols, 0.0);
        let needs = self.needs(x);
        self.push("zero_pad_rows", Tensor { shape: vec![new_rows, cols], data }, Op::ZeroPadRows(x), needs)
    }

    /// Gather rows `ids` of an embedding table [V,d] into [len(ids), d].
    pub fn embed(&mut self, table: NodeId, ids: &[usize]) -> Result<NodeId> {
        let t = &self.nodes[table].value;
        if t.rank() != 2 {
            return Err(Self::shape_err("embed", format!("table must be rank-2, got {:?}", t.shape)));
        }
        if ids.is_empty() {
            return Err(Error::EmptyInput("embed of zero ids".into()));
        }
        let (v, d) = (t.shape[0], t.shape[1]);
        if let Some(&bad) = ids.iter().find(|&&i| i >= v) {
            return Err(Error::InvalidArg(format!("embedding id {bad} out of range {v}")));
        }
        let mut data = Vec::with_capacity(ids.len() * d);
        for &id in ids {
            data.extend_from_slice(&t.data[id * d..(id + 1) * d]);
        }
        let needs = self.needs(table);
        self.push("embed", Tensor { shape: vec![ids.len(), d], data }, Op::Embed(table, ids.to_vec()), needs)
    }

    /// Multiply a tensor by a scalar node.
    pub fn scale_by(&mut self, x: NodeId, s: NodeId) -> Result<NodeId> {
        let ts = &self.nodes[s].value;
        if !ts.is_scalar() {
            return Err(Self::shape_err("scale_by", format!("scale factor must be scalar, got {:?}", ts.shape)));
        }
        let k = ts.data[0];
        let t = &self.nodes[x].value;
        let data = t.data.iter().map(|v| k * v).collect();
        let shape = t.shape.clone();
        let needs = self.needs(x) || self.needs(s);
        self.push("scale_by", Tensor { shape, data }, Op::ScaleBy(x, s), needs)
    }

    /// Sliding windows for a width-`w` 1-D convolution over rows of [L,c]:
    /// output row t is the flattened rows t..t+w, shape [L-w+1, c*w].
    pub fn conv_windows(&mut self, x: NodeId, w: usize) -> Result<NodeId> {
        let t = &self.nodes[x].value;
        if t.rank() != 2 || w == 0 || t.shape[0] < w {
            return Err(Self::shape_err("conv_windows", format!("width {w} over {:?}", t.shape)));
        }
        let (l, c) = (t.shape[0], t.shape[1]);
        let tn = l - w + 1;
        let mut data = Vec::with_capacity(tn * c * w);
        for s in 0..tn {
            data.extend_from_slice(&t.data[s * c..(s + w) * c]);
        }
        let needs = self.needs(x);
        self.push("conv_windows", Tensor { shape: vec![tn, c * w], data }, Op::ConvWindows(x, w), needs)
    }

    /// Column-wise maximum over rows: [m,n] -> [n]. Ties resolve to the
    /// earliest row in backward.
    pub fn max_axis0(&mut self, x: NodeId) -> Result<NodeId> {
        let t = &self.nodes[x].value;
        if t.rank() != 2 {
            return Err(Self::shape_err("max_axis0", format!("rank-2 required, got {:?}", t.shape)));
        }
        let (rows, cols) = (t.shape[0], t.shape[1]);
        let mut data = t.data[0..cols].to_vec();
        for r in 1..rows {
            let row = &t.data[r * cols..(r + 1) * cols];
            for (o, &v) in data.iter_mut().zip(row) {
                if v > *o {
                    *o = v;
                }
            }
        }
        let needs = self.needs(x);
        self.push("max_axis0", Tensor::vector(data), Op::MaxAxis0(x), needs)
    }

    /// Extract row `r` of a rank-2 tensor as a rank-1 vector.
    pub fn row(&mut self, x: NodeId, r: usize) -> Result<NodeId> {
        let t = &self.nodes[x].value;
        if t.rank() != 2 || r >= t.shape[0] {
            return Err(Self::shape_err("row", format!("row {r} of {:?}", t.shape)));
        }
        let cols = t.shape[1];
        let data = t.data[r * cols..(r + 1) * cols].to_vec();
        let needs = self.needs(x);
        self.push("row", Tensor::vector(data), Op::Row(x, r), needs)
    }

    /// Reverse-mode sweep from a scalar loss. Returns per-node gradients;
    /// nodes not on a path to the loss keep `None` (treated as zero).
    pub fn backward(&self, loss: NodeId) -> Result<Gradients> {
        let lt = &self.nodes[loss].value;
        if !lt.is_scalar() {
            return Err(Error::ShapeMismatch {
                op: "backward".into(),
                detail: format!("loss must be scalar, got {:?}", lt.shape),
            });
        }
        let mut acc: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        acc[loss] = Some(vec![1.0]);

        for i in (0..=loss).rev() {
            if !self.nodes[i].needs_grad {
                continue;
            }
            let g = match acc[i].take() {
                Some(g) => g,
                None => continue,
            };
            self.apply_vjp(i, &g, &mut acc)?;
            acc[i] = Some(g);
        }

        let mut grads = Vec::with_capacity(self.nodes.len());
        for (i, a) in acc.into_iter().enumerate() {
            match a {
                Some(data) => {
                    if data.iter().any(|v| !v.is_finite()) {
                        return Err(Error::NonFinite {
                            op: "backward".into(),
                            path: Some("NaN encountered during accumulation".into()),
                        });
                    }
                    grads.push(Some(Tensor { shape: self.nodes[i].value.shape.clone(), data }));
                }
                None => grads.push(None),
            }
        }
        Ok(Gradients { grads })
    }

    /// Gradients for all registered parameters; zeros for parameters that
    /// are not on a path to the loss.
    pub fn param_grads(&self, grads: &Gradients) -> BTreeMap<String, Tensor> {
        let mut out = BTreeMap::new();
        for (name, &id) in &self.params {
            let g = match grads.wrt(id) {
                Some(t) => t.clone(),
                None => Tensor::zeros(self.nodes[id].value.shape.clone()),
            };
            out.insert(name.clone(), g);
        }
        out
    }

    fn add_to(acc: &mut [Option<Vec<f64>>], id: NodeId, contrib: impl Iterator<Item = f64>, len: usize) {
        let slot = acc[id].get_or_insert_with(|| vec![0.0; len]);
        for (o, v) in slot.iter_mut().zip(contrib) {
            *o += v;
        }
    }

    fn add_to_indexed(acc: &mut [Option<Vec<f64>>], id: NodeId, len: usize) -> &mut Vec<f64> {
        acc[id].get_or_insert_with(|| vec![0.0; len])
    }

    fn apply_vjp(&self, i: NodeId, g: &[f64], acc: &mut [Option<Vec<f64>>]) -> Result<()> {
        let val = |id: NodeId| &self.nodes[id].value;
        match &self.nodes[i].op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                if self.needs(*a) {
                    Self::add_to(acc, *a, g.iter().cloned(), g.len());
                }
                if self.needs(*b) {
                    Self::add_to(acc, *b, g.iter().cloned(), g.len());
                }
            }
            Op::Sub(a, b) => {
                if self.needs(*a) {
                    Self::add_to(acc, *a, g.iter().cloned(), g.len());
                }
                if self.needs(*b) {
                    Self::add_to(acc, *b, g.iter().map(|v| -v), g.len());
                }
            }
            Op::Mul(a, b) => {
                if self.needs(*a) {
                    let vb = &val(*b).data;
                    Self::add_to(acc, *a, g.iter().zip(vb).map(|(x, y)| x * y), g.len());
                }
                if self.needs(*b) {
                    let va = &val(*a).data;
                    Self::add_to(acc, *b, g.iter().zip(va).map(|(x, y)| x * y), g.len());
                }
            }
            Op::Affine(x, k) => {
                if self.needs(*x) {
                    Self::add_to(acc, *x, g.iter().map(|v| k * v), g.len());
                }
            }
            Op::AddRowVec(m, v) => {
                let (rows, cols) = (val(*m).shape[0], val(*m).shape[1]);
                if self.needs(*m) {
                    Self::add_to(acc, *m, g.iter().cloned(), g.len());
                }
                if self.needs(*v) {
                    let slot = Self::add_to_indexed(acc, *v, cols);
                    for r in 0..rows {
                        for c in 0..cols {
                            slot[c] += g[r * cols + c];
                        }
                    }
                }
            }
            Op::MatMul(a, b) => {
                let (ta, tb) = (val(*a), val(*b));
                let (m, k, n) = (ta.shape[0], ta.shape[1], tb.shape[1]);
                if self.needs(*a) {
                    // dA = G B^T
                    let slot = Self::add_to_indexed(acc, *a, m * k);
                    for i2 in 0..m {
                        for kk in 0..k {
                            let brow = &tb.data[kk * n..(kk + 1) * n];
                            slot[i2 * k + kk] += g[i2 * n..(i2 + 1) * n].iter().zip(brow).map(|(x, y)| x * y).sum::<f64>();
                        }
                    }
                }
                if self.needs(*b) {
                    // dB = A^T G
                    let slot = Self::add_to_indexed(acc, *b, k * n);
                    for kk in 0..k {
                        for i2 in 0..m {
                            let av = ta.data[i2 * k + kk];
                            if av != 0.0 {
                                let grow = &g[i2 * n..(i2 + 1) * n];
                                let srow = &mut slot[kk * n..(kk + 1) * n];
                                for (o, &gv) in srow.iter_mut().zip(grow) {
                                    *o += av * gv;
                                }
                            }
                        }
                    }
                }
            }
            Op::MatMulNT(a, b) => {
                let (ta, tb) = (val(*a), val(*b));
                let (m, d, n) = (ta.shape[0], ta.shape[1], tb.shape[0]);
                if self.needs(*a) {
                    // dA = G B
                    let slot = Self::add_to_indexed(acc, *a, m * d);
                    for i2 in 0..m {
                        for j in 0..n {
                            let gv = g[i2 * n + j];
                            if gv != 0.0 {
                                let brow = &tb.data[j * d..(j + 1) * d];
                                let srow = &mut slot[i2 * d..(i2 + 1) * d];
                                for (o, &bv) in srow.iter_mut().zip(brow) {
                                    *o += gv * bv;
                                }
                            }
                        }
                    }
                }
                if self.needs(*b) {
                    // dB = G^T A
                    let slot = Self::add_to_indexed(acc, *b, n * d);
                    for j in 0..n {
                        for i2 in 0..m {
                            let gv = g[i2 * n + j];
                            if gv != 0.0 {
                                let arow = &ta.data[i2 * d..(i2 + 1) * d];
                                let srow = &mut slot[j * d..(j + 1) * d];
                                for (o, &av) in srow.iter_mut().zip(arow) {
                                    *o += gv * av;
                                }
                            }
                        }
                    }
                }
            }
            Op::MatVec(a, x) => {
                let (ta, tx) = (val(*a), val(*x));
                let (m, k) = (ta.shape[0], ta.shape[1]);
                if self.needs(*a) {
                    let slot = Self::add_to_indexed(acc, *a, m * k);
                    for i2 in 0..m {
                        let gv = g[i2];
                        if gv != 0.0 {
                            let srow = &mut slot[i2 * k..(i2 + 1) * k];
                            for (o, &xv) in srow.iter_mut().zip(&tx.data) {
                                *o += gv * xv;
                            }
                        }
                    }
                }
                if self.needs(*x) {
                    let slot = Self::add_to_indexed(acc, *x, k);
                    for (i2, &gv) in g.iter().enumerate() {
                        if gv != 0.0 {
                            let arow = &ta.data[i2 * k..(i2 + 1) * k];
                            for (o, &av) in slot.iter_mut().zip(arow) {
                                *o += gv * av;
                            }
                        }
                    }
                }
            }
            Op::VecMat(v, m) => {
                let (tv, tm) = (val(*v), val(*m));
                let (rows, d) = (tm.shape[0], tm.shape[1]);
                if self.needs(*v) {
                    let slot = Self::add_to_indexed(acc, *v, rows);
                    for (r, s) in slot.iter_mut().enumerate() {
                        *s += tm.data[r * d..(r + 1) * d].iter().zip(g).map(|(x, y)| x * y).sum::<f64>();
                    }
                }
                if self.needs(*m) {
                    let slot = Self::add_to_indexed(acc, *m, rows * d);
                    for r in 0..rows {
                        let w = tv.data[r];
                        if w != 0.0 {
                            let srow = &mut slot[r * d..(r + 1) * d];
                            for (o, &gv) in srow.iter_mut().zip(g) {
                                *o += w * gv;
                            }
                        }
                    }
                }
            }
            Op::Tanh(x) => {
                if self.needs(*x) {
                    let y = &val(i).data;
                    Self::add_to(acc, *x, g.iter().zip(y).map(|(gv, yv)| gv * (1.0 - yv * yv)), g.len());
                }
            }
            Op::Sigmoid(x) => {
                if self.needs(*x) {
                    let y = &val(i).data;
                    Self::add_to(acc, *x, g.iter().zip(y).map(|(gv, yv)| gv * yv * (1.0 - yv)), g.len());
                }
            }
            Op::Relu(x) => {
                if self.needs(*x) {
                    let xin = &val(*x).data;
                    Self::add_to(acc, *x, g.iter().zip(xin).map(|(gv, &xv)| if xv > 0.0 { *gv } else { 0.0 }), g.len());
                }
            }
            Op::Ln(x) => {
                if self.needs(*x) {
                    let xin = &val(*x).data;
                    Self::add_to(acc, *x, g.iter().zip(xin).map(|(gv, xv)| gv / xv), g.len());
                }
            }
            Op::Concat(parts) => {
                let mut off = 0;
                for &p in parts {
                    let n = val(p).numel();
                    if self.needs(p) {
                        Self::add_to(acc, p, g[off..off + n].iter().cloned(), n);
                    }
                    off += n;
                }
            }
            Op::Slice(x, start, len) => {
                if self.needs(*x) {
                    let n = val(*x).numel();
                    let slot = Self::add_to_indexed(acc, *x, n);
                    for j in 0..*len {
                        slot[start + j] += g[j];
                    }
                }
            }
            Op::RowsToMat(rows) => {
                let cols = val(i).shape[1];
                for (r, &id) in rows.iter().enumerate() {
                    if self.needs(id) {
                        Self::add_to(acc, id, g[r * cols..(r + 1) * cols].iter().cloned(), cols);
                    }
                }
            }
            Op::SoftmaxVec(x, t) => {
                if self.needs(*x) {
                    let y = &val(i).data;
                    let dot: f64 = g.iter().zip(y).map(|(a, b)| a * b).sum();
                    Self::add_to(acc, *x, g.iter().zip(y).map(|(gv, yv)| yv * (gv - dot) / t), g.len());
                }
            }
            Op::LogSoftmaxVec(x, t) => {
                if self.needs(*x) {
                    let y = &val(i).data;
                    let gsum: f64 = g.iter().sum();
                    Self::add_to(acc, *x, g.iter().zip(y).map(|(gv, yv)| (gv - yv.exp() * gsum) / t), g.len());
                }
            }
            Op::SoftmaxRows(x, t) => {
                if self.needs(*x) {
                    let y = val(i);
                    let (rows, cols) = (y.shape[0], y.shape[1]);
                    let slot = Self::add_to_indexed(acc, *x, rows * cols);
                    for r in 0..rows {
                        let yr = &y.data[r * cols..(r + 1) * cols];
                        let gr = &g[r * cols..(r + 1) * cols];
                        let dot: f64 = gr.iter().zip(yr).map(|(a, b)| a * b).sum();
                        for c in 0..cols {
                            slot[r * cols + c] += yr[c] * (gr[c] - dot) / t;
                        }
                    }
                }
            }
            Op::SumVec(x) => {
                if self.needs(*x) {
                    let n = val(*x).numel();
                    Self::add_to(acc, *x, std::iter::repeat_n(g[0], n), n);
                }
            }
            Op::Dot(a, b) => {
                if self.needs(*a) {
                    let vb = &val(*b).data;
                    Self::add_to(acc, *a, vb.iter().map(|v| g[0] * v), vb.len());
                }
                if self.needs(*b) {
                    let va = &val(*a).data;
                    Self::add_to(acc, *b, va.iter().map(|v| g[0] * v), va.len());
                }
            }
            Op::SumN(parts) => {
                for &p in parts {
                    if self.needs(p) {
                        Self::add_to(acc, p, g.iter().cloned(), g.len());
                    }
                }
            }
            Op::Gather(x, idx) => {
                if self.needs(*x) {
                    let n = val(*x).numel();
                    let slot = Self::add_to_indexed(acc, *x, n);
                    slot[*idx] += g[0];
                }
            }
            Op::ScatterAdd(x, ids) => {
                if self.needs(*x) {
                    Self::add_to(acc, *x, ids.iter().map(|&id| g[id]), ids.len());
                }
            }
            Op::PadZeros(x) => {
                if self.needs(*x) {
                    let n = val(*x).numel();
                    Self::add_to(acc, *x, g[..n].iter().cloned(), n);
                }
            }
            Op::ZeroPadRows(x) => {
                if self.needs(*x) {
                    let n = val(*x).numel();
                    Self::add_to(acc, *x, g[..n].iter().cloned(), n);
                }
            }
            Op::Embed(table, ids) => {
                if self.needs(*table) {
                    let t = val(*table);
                    let d = t.shape[1];
                    let slot = Self::add_to_indexed(acc, *table, t.numel());
                    for (p, &id) in ids.iter().enumerate() {
                        let grow = &g[p * d..(p + 1) * d];
                        let srow = &mut slot[id * d..(id + 1) * d];
                        for (o, &gv) in srow.iter_mut().zip(grow) {
                            *o += gv;
                        }
                    }
                }
            }
            Op::ScaleBy(x, s) => {
                let k = val(*s).data[0];
                if self.needs(*x) {
                    Self::add_to(acc, *x, g.iter().map(|v| k * v), g.len());
                }
                if self.needs(*s) {
                    let vx = &val(*x).data;
                    let contrib: f64 = g.iter().zip(vx).map(|(a, b)| a * b).sum();
                    let slot = Self::add_to_indexed(acc, *s, 1);
                    slot[0] += contrib;
                }
            }
            Op::ConvWindows(x, w) => {
                if self.needs(*x) {
                    let t = val(*x);
                    let (l, c) = (t.shape[0], t.shape[1]);
                    let tn = l - w + 1;
                    let slot = Self::add_to_indexed(acc, *x, l * c);
                    for s in 0..tn {
                        for j in 0..*w {
                            for ch in 0..c {
                                slot[(s + j) * c + ch] += g[s * c * w + j * c + ch];
                            }
                        }
                    }
                }
            }
            Op::MaxAxis0(x) => {
                if self.needs(*x) {
                    let t = val(*x);
                    let (rows, cols) = (t.shape[0], t.shape[1]);
                    let slot = Self::add_to_indexed(acc, *x, rows * cols);
                    for c in 0..cols {
                        let mut best = 0;
                        for r in 1..rows {
                            if t.data[r * cols + c] > t.data[best * cols + c] {
                                best = r;
                            }
                        }
                        slot[best * cols + c] += g[c];
                    }
                }
            }
            Op::Row(x, r) => {
                if self.needs(*x) {
                    let t = val(*x);
                    let cols = t.shape[1];
                    let slot = Self::add_to_indexed(acc, *x, t.numel());
                    for (j, &gv) in g.iter().enumerate() {
                        slot[r * cols + j] += gv;
                    }
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_gradient_at_three_is_six() {
        let mut g = Graph::new();
        let x = g.var(Tensor::scalar(3.0)).unwrap();
        let y = g.mul(x, x).unwrap();
        assert_eq!(g.value(y).data[0], 9.0);
        let grads = g.backward(y).unwrap();
        assert!((grads.wrt(x).unwrap().data[0] - 6.0).abs() < 1e-12);
    }

    #[test]
    fn cross_entropy_after_softmax_grad_is_p_minus_t() {
        // loss = -sum t * log_softmax(z); dz = softmax(z) - t.
        let z_data = vec![0.2, -1.3, 0.7];
        let t_data = vec![0.0, 1.0, 0.0];
        let mut g = Graph::new();
        let z = g.var(Tensor::vector(z_data.clone())).unwrap();
        let t = g.leaf(Tensor::vector(t_data.clone())).unwrap();
        let lp = g.log_softmax(z, 1.0).unwrap();
        let ce = g.dot(t, lp).unwrap();
        let loss = g.scale(ce, -1.0).unwrap();
        let grads = g.backward(loss).unwrap();
        let p = numeric::softmax_t(&z_data, 1.0).unwrap();
        let dz = grads.wrt(z).unwrap();
        for i in 0..3 {
            assert!((dz.data[i] - (p[i] - t_data[i])).abs() < 1e-12, "coord {i}");
        }
    }

    #[test]
    fn unused_param_gets_zero_gradient() {
        let mut g = Graph::new();
        let x = g.var(Tensor::scalar(2.0)).unwrap();
        let _unused = g.param("w", &Tensor::vector(vec![1.0, 2.0])).unwrap();
        let y = g.mul(x, x).unwrap();
        let grads = g.backward(y).unwrap();
        let pg = g.param_grads(&grads);
        assert_eq!(pg["w"].data, vec![0.0, 0.0]);
    }

    #[test]
    fn shape_mismatch_is_reported_with_op_name() {
        let mut g = Graph::new();
        let a = g.leaf(Tensor::vector(vec![1.0, 2.0])).unwrap();
        let b = g.leaf(Tensor::vector(vec![1.0, 2.0, 3.0])).unwrap();
        let err = g.add(a, b).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("add"), "{msg}");
    }

    #[test]
    fn nonfinite_forward_is_rejected_with_op_name() {
        let mut g = Graph::new();
        let x = g.leaf(Tensor::scalar(-1.0)).unwrap();
        let err = g.ln(x).unwrap_err();
        assert!(err.to_string().contains("ln"), "{err}");
    }

    #[test]
    fn nan_in_gradient_accumulation_is_reported() {
        // ln at a denormal input is finite forward but 1/x overflows backward.
        let mut g = Graph::new();
        let x = g.var(Tensor::scalar(1e-320)).unwrap();
        let y = g.ln(x).unwrap();
        let z = g.mul(y, y).unwrap(); // keep loss scalar and finite
        let err = g.backward(z).unwrap_err();
        assert!(err.to_string().contains("NaN encountered during accumulation"), "{err}");
    }

    #[test]
    fn param_registered_once_per_graph() {
        let mut g = Graph::new();
        let w = Tensor::vector(vec![1.0, 2.0]);
        let a = g.param("w", &w).unwrap();
        let b = g.param("w", &w).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn matmul_matches_hand_computation() {
        let mut g = Graph::new();
        let a = g.leaf(Tensor::matrix(2, 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap()).unwrap();
        let b = g.leaf(Tensor::matrix(3, 2, vec![7.0, 8.0, 9.0, 10.0, 11.0, 12.0]).unwrap()).unwrap();
        let c = g.matmul(a, b).unwrap();
        assert_eq!(g.value(c).data, vec![58.0, 64.0, 139.0, 154.0]);
    }

    #[test]
    fn scatter_add_accumulates_repeated_ids() {
        let mut g = Graph::new();
        let x = g.leaf(Tensor::vector(vec![0.25, 0.5, 0.25])).unwrap();
        let y = g.scatter_add(x, &[2, 0, 2], 4).unwrap();
        assert_eq!(g.value(y).data, vec![0.5, 0.0, 0.5, 0.0]);
    }

    #[test]
    fn max_axis0_routes_gradient_to_first_max() {
        let mut g = Graph::new();
        let x = g.var(Tensor::matrix(3, 2, vec![5.0, 1.0, 5.0, 3.0, 2.0, 3.0]).unwrap()).unwrap();
        let m = g.max_axis0(x).unwrap();
        assert_eq!(g.value(m).data, vec![5.0, 3.0]);
        let s = g.sum(m).unwrap();
        let grads = g.backward(s).unwrap();
        // Ties in column 0 (rows 0 and 2) and column 1 (rows 1 and 2) go to the earliest row.
        assert_eq!(grads.wrt(x).unwrap().data, vec![1.0, 0.0, 0.0, 1.0, 0.0, 0.0]);
    }

    #[test]
    fn conv_windows_layout() {
        let mut g = Graph::new();
        let x = g.leaf(Tensor::matrix(3, 2, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap()).unwrap();
        let w = g.conv_windows(x, 2).unwrap();
        assert_eq!(g.value(w).shape, vec![2, 4]);
        assert_eq!(g.value(w).data, vec![1.0, 2.0, 3.0, 4.0, 3.0, 4.0, 5.0, 6.0]);
    }
}
