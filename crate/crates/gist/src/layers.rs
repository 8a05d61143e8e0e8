//! Differentiable building blocks: linear maps, LSTM cells and stacks,
//! bidirectional runners, char-CNN, multi-head self-attention, MLPs and
//! dropout. Layers are lightweight descriptors (name prefix + dims); values
//! live in a `ParamSet` and graphs are built per example.

use rand::Rng;

use crate::error::{Error, Result};
use crate::graph::{Graph, NodeId};
use crate::params::{init_matrix, init_vector, ParamSet};
use crate::tensor::Tensor;
use crate::text::vocab::CharVocab;

/// How a declared parameter is filled at init time.
#[derive(Debug, Clone)]
pub enum InitKind {
    /// Uniform in +-1/sqrt(fan_in).
    UniformFanIn(usize),
    Zeros,
    /// LSTM bias layout [i f g o]: zeros with the forget slice set to 1.
    LstmBias { hidden: usize },
    /// Word-embedding matrix; filled by the model (pretrained rows or
    /// uniform) with a zero PAD row.
    WordEmbedding,
}

#[derive(Debug, Clone)]
pub struct ParamDecl {
    pub name: String,
    pub shape: Vec<usize>,
    pub init: InitKind,
}

impl ParamDecl {
    pub fn numel(&self) -> usize {
        self.shape.iter().product()
    }
}

/// Materialize declarations into a ParamSet, in declaration order so the
/// RNG stream is reproducible. `WordEmbedding` entries must be filled by
/// the caller beforehand (they are skipped here if already present).
pub fn materialize(decls: &[ParamDecl], params: &mut ParamSet, rng: &mut impl Rng) -> Result<()> {
    for d in decls {
        match &d.init {
            InitKind::WordEmbedding => {
                if !params.contains(&d.name) {
                    return Err(Error::InvalidArg(format!(
                        "embedding parameter {} must be initialized by the model",
                        d.name
                    )));
                }
            }
            InitKind::UniformFanIn(fan_in) => {
                let t = match d.shape.len() {
                    2 => init_matrix(d.shape[0], d.shape[1], *fan_in, rng),
                    1 => init_vector(d.shape[0], *fan_in, rng),
                    _ => return Err(Error::InvalidArg(format!("bad decl shape {:?}", d.shape))),
                };
                params.insert(d.name.clone(), t)?;
            }
            InitKind::Zeros => {
                params.insert(d.name.clone(), Tensor::zeros(d.shape.clone()))?;
            }
            InitKind::LstmBias { hidden } => {
                let mut t = Tensor::zeros(d.shape.clone());
                for i in *hidden..2 * hidden {
                    t.data[i] = 1.0;
                }
                params.insert(d.name.clone(), t)?;
            }
        }
    }
    Ok(())
}

/// Inverted dropout on a node: multiply by bernoulli(1-rate)/(1-rate).
/// rate 0 is a no-op; only call while training.
pub fn dropout(g: &mut Graph, x: NodeId, rate: f64, rng: &mut impl Rng) -> Result<NodeId> {
    if rate == 0.0 {
        return Ok(x);
    }
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::InvalidArg(format!("dropout rate must be in [0,1), got {rate}")));
    }
    let keep = 1.0 - rate;
    let shape = g.value(x).shape.clone();
    let numel: usize = shape.iter().product();
    let mask: Vec<f64> = (0..numel)
        .map(|_| if rng.gen::<f64>() < keep { 1.0 / keep } else { 0.0 })
        .collect();
    let m = g.leaf(Tensor { shape, data: mask })?;
    g.mul(x, m)
}

// ── Linear ─────────────────────────────────────────────────────────────────

/// y = W x + b with W stored [out, in].
#[derive(Debug, Clone)]
pub struct Linear {
    pub prefix: String,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl Linear {
    pub fn new(prefix: impl Into<String>, in_dim: usize, out_dim: usize) -> Self {
        Linear { prefix: prefix.into(), in_dim, out_dim }
    }

    pub fn decls(&self) -> Vec<ParamDecl> {
        vec![
            ParamDecl {
                name: format!("{}.w", self.prefix),
                shape: vec![self.out_dim, self.in_dim],
                init: InitKind::UniformFanIn(self.in_dim),
            },
            ParamDecl {
                name: format!("{}.b", self.prefix),
                shape: vec![self.out_dim],
                init: InitKind::Zeros,
            },
        ]
    }

    pub fn vec(&self, g: &mut Graph, params: &ParamSet, x: NodeId) -> Result<NodeId> {
        let w = g.param(&format!("{}.w", self.prefix), params.get(&format!("{}.w", self.prefix))?)?;
        let b = g.param(&format!("{}.b", self.prefix), params.get(&format!("{}.b", self.prefix))?)?;
        let wx = g.matvec(w, x)?;
        g.add(wx, b)
    }

    /// Row-wise application: X [m,in] -> [m,out].
    pub fn rows(&self, g: &mut Graph, params: &ParamSet, x: NodeId) -> Result<NodeId> {
        let w = g.param(&format!("{}.w", self.prefix), params.get(&format!("{}.w", self.prefix))?)?;
        let b = g.param(&format!("{}.b", self.prefix), params.get(&format!("{}.b", self.prefix))?)?;
        let xw = g.matmul_nt(x, w)?;
        g.add_row_vec(xw, b)
    }
}

// ── LSTM ───────────────────────────────────────────────────────────────────

/// Standard LSTM cell. Gate pre-activations are stacked [i f g o] in one
/// [4h, in] / [4h, h] pair of weight matrices plus one bias vector; the
/// forget-gate bias initializes to 1.
#[derive(Debug, Clone)]
pub struct LstmCell {
    pub prefix: String,
    pub in_dim: usize,
    pub hidden: usize,
}

impl LstmCell {
    pub fn new(prefix: impl Into<String>, in_dim: usize, hidden: usize) -> Self {
        LstmCell { prefix: prefix.into(), in_dim, hidden }
    }

    pub fn decls(&self) -> Vec<ParamDecl> {
        vec![
            ParamDecl {
                name: format!("{}.w_ih", self.prefix),
                shape: vec![4 * self.hidden, self.in_dim],
                init: InitKind::UniformFanIn(self.in_dim),
            },
            ParamDecl {
                name: format!("{}.w_hh", self.prefix),
                shape: vec![4 * self.hidden, self.hidden],
                init: InitKind::UniformFanIn(self.hidden),
            },
            ParamDecl {
                name: format!("{}.b", self.prefix),
                shape: vec![4 * self.hidden],
                init: InitKind::LstmBias { hidden: self.hidden },
            },
        ]
    }

    /// One step: (x, h, c) -> (h', c').
    pub fn step(
        &self,
        g: &mut Graph,
        params: &ParamSet,
        x: NodeId,
        h: NodeId,
        c: NodeId,
    ) -> Result<(NodeId, NodeId)> {
        let xt = g.value(x);
        if xt.rank() != 1 || xt.shape[0] != self.in_dim {
            return Err(Error::ShapeMismatch {
                op: "lstm_step".into(),
                detail: format!("{} expects input [{}], got {:?}", self.prefix, self.in_dim, xt.shape),
            });
        }
        let hd = self.hidden;
        let w_ih = g.param(&format!("{}.w_ih", self.prefix), params.get(&format!("{}.w_ih", self.prefix))?)?;
        let w_hh = g.param(&format!("{}.w_hh", self.prefix), params.get(&format!("{}.w_hh", self.prefix))?)?;
        let b = g.param(&format!("{}.b", self.prefix), params.get(&format!("{}.b", self.prefix))?)?;

        let zx = g.matvec(w_ih, x)?;
        let zh = g.matvec(w_hh, h)?;
        let zs = g.add(zx, zh)?;
        let z = g.add(zs, b)?;

        let zi = g.slice(z, 0, hd)?;
        let zf = g.slice(z, hd, hd)?;
        let zg = g.slice(z, 2 * hd, hd)?;
        let zo = g.slice(z, 3 * hd, hd)?;

        let i = g.sigmoid(zi)?;
        let f = g.sigmoid(zf)?;
        let gg = g.tanh(zg)?;
        let o = g.sigmoid(zo)?;

        let fc = g.mul(f, c)?;
        let ig = g.mul(i, gg)?;
        let c_next = g.add(fc, ig)?;
        let tc = g.tanh(c_next)?;
        let h_next = g.mul(o, tc)?;
        Ok((h_next, c_next))
    }

    pub fn zero_state(&self, g: &mut Graph) -> Result<(NodeId, NodeId)> {
        let h = g.leaf(Tensor::zeros(vec![self.hidden]))?;
        let c = g.leaf(Tensor::zeros(vec![self.hidden]))?;
        Ok((h, c))
    }
}

/// Unidirectional multi-layer LSTM (the decoder).
#[derive(Debug, Clone)]
pub struct LstmStack {
    pub cells: Vec<LstmCell>,
}

impl LstmStack {
    /// `in_dim` feeds layer 0; deeper layers take the previous hidden.
    pub fn new(prefix: &str, layers: usize, in_dim: usize, hidden: usize) -> Self {
        let cells = (0..layers)
            .map(|l| LstmCell::new(format!("{prefix}.l{l}"), if l == 0 { in_dim } else { hidden }, hidden))
            .collect();
        LstmStack { cells }
    }

    pub fn decls(&self) -> Vec<ParamDecl> {
        self.cells.iter().flat_map(|c| c.decls()).collect()
    }

    /// One step through all layers; updates `state` in place and returns the
    /// top hidden. Dropout applies to each layer's input while training.
    #[allow(clippy::too_many_arguments)]
    pub fn step(
        &self,
        g: &mut Graph,
        params: &ParamSet,
        x: NodeId,
        state: &mut [(NodeId, NodeId)],
        drop_rate: f64,
        training: bool,
        rng: &mut impl Rng,
    ) -> Result<NodeId> {
        if state.len() != self.cells.len() {
            return Err(Error::InvalidArg("decoder state has wrong layer count".into()));
        }
        let mut inp = x;
        for (l, cell) in self.cells.iter().enumerate() {
            let fed = if training { dropout(g, inp, drop_rate, rng)? } else { inp };
            let (h, c) = cell.step(g, params, fed, state[l].0, state[l].1)?;
            state[l] = (h, c);
            inp = h;
        }
        Ok(inp)
    }
}

/// Final states of one bidirectional layer.
#[derive(Debug, Clone, Copy)]
pub struct LayerFinals {
    pub fwd_h: NodeId,
    pub fwd_c: NodeId,
    pub bwd_h: NodeId,
    pub bwd_c: NodeId,
}

pub struct BiLstmOut {
    /// Per-position [2*hidden] outputs of the top layer.
    pub seq: Vec<NodeId>,
    pub finals: Vec<LayerFinals>,
}

/// Multi-layer bidirectional LSTM.
#[derive(Debug, Clone)]
pub struct BiLstm {
    pub layers: Vec<(LstmCell, LstmCell)>,
}

impl BiLstm {
    pub fn new(prefix: &str, layers: usize, in_dim: usize, hidden: usize) -> Self {
        let layers = (0..layers)
            .map(|l| {
                let d = if l == 0 { in_dim } else { 2 * hidden };
                (
                    LstmCell::new(format!("{prefix}.l{l}.f"), d, hidden),
                    LstmCell::new(format!("{prefix}.l{l}.b"), d, hidden),
                )
            })
            .collect();
        BiLstm { layers }
    }

    pub fn decls(&self) -> Vec<ParamDecl> {
        self.layers
            .iter()
            .flat_map(|(f, b)| f.decls().into_iter().chain(b.decls()))
            .collect()
    }

    pub fn out_dim(&self) -> usize {
        2 * self.layers[0].0.hidden
    }

    pub fn forward(
        &self,
        g: &mut Graph,
        params: &ParamSet,
        xs: &[NodeId],
        drop_rate: f64,
        training: bool,
        rng: &mut impl Rng,
    ) -> Result<BiLstmOut> {
        if xs.is_empty() {
            return Err(Error::EmptyInput("BiLSTM over empty sequence".into()));
        }
        let mut inputs: Vec<NodeId> = xs.to_vec();
        let mut finals = Vec::with_capacity(self.layers.len());
        for (fwd, bwd) in &self.layers {
            let fed: Vec<NodeId> = if training {
                inputs
                    .iter()
                    .map(|&x| dropout(g, x, drop_rate, rng))
                    .collect::<Result<_>>()?
            } else {
                inputs.clone()
            };

            let (mut h, mut c) = fwd.zero_state(g)?;
            let mut fwd_seq = Vec::with_capacity(fed.len());
            for &x in &fed {
                let (nh, nc) = fwd.step(g, params, x, h, c)?;
                h = nh;
                c = nc;
                fwd_seq.push(nh);
            }
            let (fwd_h, fwd_c) = (h, c);

            let (mut h, mut c) = bwd.zero_state(g)?;
            let mut bwd_seq = vec![0; fed.len()];
            for (i, &x) in fed.iter().enumerate().rev() {
                let (nh, nc) = bwd.step(g, params, x, h, c)?;
                h = nh;
                c = nc;
                bwd_seq[i] = nh;
            }
            let (bwd_h, bwd_c) = (h, c);

            inputs = fwd_seq
                .iter()
                .zip(&bwd_seq)
                .map(|(&f, &b)| g.concat(&[f, b]))
                .collect::<Result<_>>()?;
            finals.push(LayerFinals { fwd_h, fwd_c, bwd_h, bwd_c });
        }
        Ok(BiLstmOut { seq: inputs, finals })
    }
}

// ── Char-CNN ───────────────────────────────────────────────────────────────

/// Character-level word features: embed characters, slide a width-w 1-D
/// convolution, max-pool over time. Tokens shorter than the width are
/// zero-padded (zero vectors, not a learned pad embedding).
#[derive(Debug, Clone)]
pub struct CharCnn {
    pub prefix: String,
    pub char_dim: usize,
    pub filters: usize,
    pub width: usize,
    pub char_vocab_len: usize,
}

impl CharCnn {
    pub fn decls(&self) -> Vec<ParamDecl> {
        vec![
            ParamDecl {
                name: format!("{}.char_emb", self.prefix),
                shape: vec![self.char_vocab_len, self.char_dim],
                init: InitKind::UniformFanIn(self.char_dim),
            },
            ParamDecl {
                name: format!("{}.conv.w", self.prefix),
                shape: vec![self.filters, self.char_dim * self.width],
                init: InitKind::UniformFanIn(self.char_dim * self.width),
            },
            ParamDecl {
                name: format!("{}.conv.b", self.prefix),
                shape: vec![self.filters],
                init: InitKind::Zeros,
            },
        ]
    }

    /// Features for one token, shape [filters].
    pub fn forward(&self, g: &mut Graph, params: &ParamSet, cv: &CharVocab, token: &str) -> Result<NodeId> {
        let ids = cv.ids(token);
        if ids.is_empty() {
            return Err(Error::EmptyInput("char-CNN over empty token".into()));
        }
        let emb_name = format!("{}.char_emb", self.prefix);
        let table = g.param(&emb_name, params.get(&emb_name)?)?;
        let mut chars = g.embed(table, &ids)?;
        if ids.len() < self.width {
            chars = g.zero_pad_rows(chars, self.width)?;
        }
        let windows = g.conv_windows(chars, self.width)?;
        let w_name = format!("{}.conv.w", self.prefix);
        let b_name = format!("{}.conv.b", self.prefix);
        let w = g.param(&w_name, params.get(&w_name)?)?;
        let b = g.param(&b_name, params.get(&b_name)?)?;
        let conv = g.matmul_nt(windows, w)?;
        let conv = g.add_row_vec(conv, b)?;
        g.max_axis0(conv)
    }
}

// ── MLP ────────────────────────────────────────────────────────────────────

/// Two-layer perceptron with ReLU: W2 relu(W1 x + b1) + b2.
#[derive(Debug, Clone)]
pub struct Mlp2 {
    pub l1: Linear,
    pub l2: Linear,
}

impl Mlp2 {
    pub fn new(prefix: &str, in_dim: usize, hidden: usize, out_dim: usize) -> Self {
        Mlp2 {
            l1: Linear::new(format!("{prefix}.l1"), in_dim, hidden),
            l2: Linear::new(format!("{prefix}.l2"), hidden, out_dim),
        }
    }

    pub fn decls(&self) -> Vec<ParamDecl> {
        let mut d = self.l1.decls();
        d.extend(self.l2.decls());
        d
    }

    pub fn vec(&self, g: &mut Graph, params: &ParamSet, x: NodeId) -> Result<NodeId> {
        let h = self.l1.vec(g, params, x)?;
        let h = g.relu(h)?;
        self.l2.vec(g, params, h)
    }

    /// Row-wise application over [m, in].
    pub fn rows(&self, g: &mut Graph, params: &ParamSet, x: NodeId) -> Result<NodeId> {
        let h = self.l1.rows(g, params, x)?;
        let h = g.relu(h)?;
        self.l2.rows(g, params, h)
    }
}

// ── Multi-head self-attention ──────────────────────────────────────────────

/// Multi-head scaled dot-product self-attention with a residual connection:
/// returns f_sa(U) + U. Projections are per-head weight matrices; the output
/// projection is the per-head block decomposition of the usual concat-W_o.
#[derive(Debug, Clone)]
pub struct SelfAttention {
    pub prefix: String,
    pub dim: usize,
    pub heads: usize,
}

impl SelfAttention {
    pub fn new(prefix: impl Into<String>, dim: usize, heads: usize) -> Result<Self> {
        if heads == 0 || !dim.is_multiple_of(heads) {
            return Err(Error::InvalidArg(format!(
                "head count {heads} must divide model dim {dim}"
            )));
        }
        Ok(SelfAttention { prefix: prefix.into(), dim, heads })
    }

    pub fn head_dim(&self) -> usize {
        self.dim / self.heads
    }

    pub fn decls(&self) -> Vec<ParamDecl> {
        let hd = self.head_dim();
        let mut out = Vec::new();
        for h in 0..self.heads {
            for role in ["w_q", "w_k", "w_v"] {
                out.push(ParamDecl {
                    name: format!("{}.h{h}.{role}", self.prefix),
                    shape: vec![hd, self.dim],
                    init: InitKind::UniformFanIn(self.dim),
                });
            }
            out.push(ParamDecl {
                name: format!("{}.h{h}.w_o", self.prefix),
                shape: vec![self.dim, hd],
                init: InitKind::UniformFanIn(self.dim),
            });
        }
        out
    }

    /// U [m, dim] -> f_sa(U) + U, shape [m, dim].
    pub fn forward(&self, g: &mut Graph, params: &ParamSet, u: NodeId) -> Result<NodeId> {
        let ut = g.value(u);
        if ut.rank() != 2 || ut.shape[1] != self.dim {
            return Err(Error::ShapeMismatch {
                op: "self_attention".into(),
                detail: format!("expected [m, {}], got {:?}", self.dim, ut.shape),
            });
        }
        let hd = self.head_dim();
        let scale = 1.0 / (hd as f64).sqrt();
        let mut projected = Vec::with_capacity(self.heads);
        for h in 0..self.heads {
            let name = |role: &str| format!("{}.h{h}.{role}", self.prefix);
            let wq = g.param(&name("w_q"), params.get(&name("w_q"))?)?;
            let wk = g.param(&name("w_k"), params.get(&name("w_k"))?)?;
            let wv = g.param(&name("w_v"), params.get(&name("w_v"))?)?;
            let wo = g.param(&name("w_o"), params.get(&name("w_o"))?)?;
            let q = g.matmul_nt(u, wq)?; // [m, hd]
            let k = g.matmul_nt(u, wk)?;
            let v = g.matmul_nt(u, wv)?;
            let scores = g.matmul_nt(q, k)?; // [m, m]
            let scores = g.scale(scores, scale)?;
            let att = g.softmax_rows(scores, 1.0)?;
            let mixed = g.matmul(att, v)?; // [m, hd]
            projected.push(g.matmul_nt(mixed, wo)?); // [m, dim]
        }
        let fsa = g.sum_n(&projected)?;
        g.add(fsa, u)
    }
}
