//! Attention-based pointer-generator summarizer: BiLSTM encoder over
//! char-aware word representations, LSTM decoder with additive attention,
//! and a generate/copy mixture over a per-example extended vocabulary.

use std::collections::HashMap;
use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::checkpoint;
use crate::error::{Error, Result};
use crate::graph::{Graph, NodeId};
use crate::layers::{materialize, BiLstm, CharCnn, LayerFinals, Linear, LstmStack, ParamDecl};
use crate::optim::{adam_step, clip_global_norm, AdamConfig, AdamState};
use crate::params::ParamSet;
use crate::rng::seeded;
use crate::tensor::Tensor;
use crate::text::corpus::ArticlePair;
use crate::text::embed::{init_word_embeddings, EmbeddingTable};
use crate::text::vocab::{CharVocab, Vocabulary, EOS, SOS, UNK};

/// Teacher hyperparameters. Defaults are the full-scale settings; desk runs
/// override them from config files.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct TeacherConfig {
    pub word_dim: usize,
    pub char_dim: usize,
    pub char_filters: usize,
    pub char_width: usize,
    pub hidden: usize,
    pub enc_layers: usize,
    pub dec_layers: usize,
    pub att_dim: usize,
    pub dropout: f64,
    pub lr: f64,
    pub clip: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub max_source_len: usize,
    pub max_summary_len: usize,
    pub vocab_size: usize,
}

impl Default for TeacherConfig {
    fn default() -> Self {
        TeacherConfig {
            word_dim: 300,
            char_dim: 25,
            char_filters: 100,
            char_width: 5,
            hidden: 256,
            enc_layers: 2,
            dec_layers: 2,
            att_dim: 512,
            dropout: 0.35,
            lr: 0.0004,
            clip: 2.0,
            batch_size: 16,
            epochs: 10,
            max_source_len: 400,
            max_summary_len: 100,
            vocab_size: 50_000,
        }
    }
}

impl TeacherConfig {
    pub fn validate(&self) -> Result<()> {
        if self.enc_layers == 0 || self.enc_layers != self.dec_layers {
            return Err(Error::Config(format!(
                "encoder layers ({}) must be nonzero and equal decoder layers ({})",
                self.enc_layers, self.dec_layers
            )));
        }
        for (name, v) in [
            ("word_dim", self.word_dim),
            ("char_dim", self.char_dim),
            ("char_filters", self.char_filters),
            ("char_width", self.char_width),
            ("hidden", self.hidden),
            ("att_dim", self.att_dim),
            ("batch_size", self.batch_size),
            ("max_source_len", self.max_source_len),
            ("max_summary_len", self.max_summary_len),
        ] {
            if v == 0 {
                return Err(Error::Config(format!("teacher {name} must be positive")));
            }
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("teacher dropout must be in [0,1), got {}", self.dropout)));
        }
        if self.vocab_size < 5 {
            return Err(Error::Config("teacher vocab_size must be at least 5".into()));
        }
        Ok(())
    }
}

/// Per-example extended vocabulary: base ids stay as-is; source tokens
/// outside the base vocabulary get ids base_len + k in order of first
/// occurrence, so the copy distribution can name them.
#[derive(Debug, Clone)]
pub struct ExtVocab {
    base_len: usize,
    oov: Vec<String>,
    oov_ids: HashMap<String, usize>,
    /// Extended id for each source position.
    pub src_ext_ids: Vec<usize>,
}

impl ExtVocab {
    pub fn build(vocab: &Vocabulary, source: &[String]) -> Self {
        let base_len = vocab.len();
        let mut oov = Vec::new();
        let mut oov_ids = HashMap::new();
        let mut src_ext_ids = Vec::with_capacity(source.len());
        for tok in source {
            let id = vocab.id(tok);
            if id != UNK || vocab.contains(tok) {
                src_ext_ids.push(id);
            } else {
                let next = oov.len();
                let k = *oov_ids.entry(tok.clone()).or_insert_with(|| {
                    oov.push(tok.clone());
                    next
                });
                src_ext_ids.push(base_len + k);
            }
        }
        ExtVocab { base_len, oov, oov_ids, src_ext_ids }
    }

    pub fn len(&self) -> usize {
        self.base_len + self.oov.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn oov_count(&self) -> usize {
        self.oov.len()
    }

    /// Extended id a gold target token should carry: base id if in the base
    /// vocabulary, else the copy id if the token occurs in the source, else
    /// the unknown id.
    pub fn target_id(&self, vocab: &Vocabulary, token: &str) -> usize {
        let id = vocab.id(token);
        if id != UNK || vocab.contains(token) {
            id
        } else if let Some(&k) = self.oov_ids.get(token) {
            self.base_len + k
        } else {
            UNK
        }
    }

    /// Token string for an extended id.
    pub fn token<'a>(&'a self, vocab: &'a Vocabulary, ext_id: usize) -> Result<&'a str> {
        if ext_id < self.base_len {
            vocab.token(ext_id)
        } else {
            self.oov
                .get(ext_id - self.base_len)
                .map(|s| s.as_str())
                .ok_or_else(|| Error::InvalidArg(format!("extended id {ext_id} out of range")))
        }
    }
}

/// Encoder pass over one source: per-position states stacked as a matrix.
pub struct EncoderOut {
    /// [m, 2*hidden] encoder states.
    pub hmat: NodeId,
    pub finals: Vec<LayerFinals>,
    pub len: usize,
}

/// One decoder step's nodes.
pub struct StepOut {
    /// Top decoder hidden state [hidden].
    pub s: NodeId,
    /// Raw attention logits over source positions [m].
    pub d: NodeId,
    /// Normalized attention [m].
    pub a: NodeId,
    /// Context vector [2*hidden].
    pub c: NodeId,
    /// Generation gate, scalar in (0,1).
    pub p_gen: NodeId,
    /// Output distribution over the extended vocabulary.
    pub p: NodeId,
}

#[derive(Debug)]
pub struct Teacher {
    pub cfg: TeacherConfig,
    pub vocab: Vocabulary,
    pub char_vocab: CharVocab,
}

/// Step log record emitted during training.
#[derive(Debug, Serialize)]
struct StepLog<'a> {
    phase: &'a str,
    step: u64,
    epoch: usize,
    loss: f64,
    grad_norm: f64,
}

#[derive(Debug)]
pub struct TrainReport {
    pub steps: u64,
    pub final_loss: f64,
}

impl Teacher {
    pub fn new(cfg: TeacherConfig, vocab: Vocabulary, char_vocab: CharVocab) -> Result<Self> {
        cfg.validate()?;
        Ok(Teacher { cfg, vocab, char_vocab })
    }

    fn word_repr_dim(&self) -> usize {
        self.cfg.word_dim + self.cfg.char_filters
    }

    fn char_cnn(&self) -> CharCnn {
        CharCnn {
            prefix: "cc".into(),
            char_dim: self.cfg.char_dim,
            filters: self.cfg.char_filters,
            width: self.cfg.char_width,
            char_vocab_len: self.char_vocab.len(),
        }
    }

    fn encoder(&self) -> BiLstm {
        BiLstm::new("enc", self.cfg.enc_layers, self.word_repr_dim(), self.cfg.hidden)
    }

    fn decoder(&self) -> LstmStack {
        LstmStack::new("dec", self.cfg.dec_layers, self.cfg.word_dim, self.cfg.hidden)
    }

    fn out_layer(&self) -> Linear {
        Linear::new("out", 3 * self.cfg.hidden, self.vocab.len())
    }

    fn pgen_layer(&self) -> Linear {
        Linear::new("pgen", 3 * self.cfg.hidden + self.cfg.word_dim, 1)
    }

    /// Every parameter the model owns, with shapes and init rules. This is
    /// the single source of truth for initialization and for size audits.
    pub fn param_spec(&self) -> Vec<ParamDecl> {
        use crate::layers::InitKind;
        let h = self.cfg.hidden;
        let mut decls = vec![ParamDecl {
            name: "emb".into(),
            shape: vec![self.vocab.len(), self.cfg.word_dim],
            init: InitKind::WordEmbedding,
        }];
        decls.extend(self.char_cnn().decls());
        decls.extend(self.encoder().decls());
        decls.extend(self.decoder().decls());
        for l in 0..self.cfg.dec_layers {
            decls.extend(Linear::new(format!("bridge.h{l}"), 2 * h, h).decls());
            decls.extend(Linear::new(format!("bridge.c{l}"), 2 * h, h).decls());
        }
        decls.push(ParamDecl {
            name: "att.w_enc".into(),
            shape: vec![self.cfg.att_dim, 2 * h],
            init: InitKind::UniformFanIn(2 * h),
        });
        decls.push(ParamDecl {
            name: "att.w_dec".into(),
            shape: vec![self.cfg.att_dim, h],
            init: InitKind::UniformFanIn(h),
        });
        decls.push(ParamDecl { name: "att.b".into(), shape: vec![self.cfg.att_dim], init: InitKind::Zeros });
        decls.push(ParamDecl {
            name: "att.v".into(),
            shape: vec![self.cfg.att_dim],
            init: InitKind::UniformFanIn(self.cfg.att_dim),
        });
        decls.extend(self.out_layer().decls());
        decls.extend(self.pgen_layer().decls());
        decls
    }

    pub fn param_count(&self) -> usize {
        self.param_spec().iter().map(|d| d.numel()).sum()
    }

    pub fn init_params(
        &self,
        pretrained: Option<&EmbeddingTable>,
        rng: &mut impl Rng,
    ) -> Result<ParamSet> {
        let mut params = ParamSet::new();
        let emb = init_word_embeddings(&self.vocab, self.cfg.word_dim, pretrained, rng)?;
        params.insert("emb", emb)?;
        materialize(&self.param_spec(), &mut params, rng)?;
        Ok(params)
    }

    /// Word representation of one token: embedding row joined with char-CNN
    /// features.
    fn word_repr(
        &self,
        g: &mut Graph,
        params: &ParamSet,
        emb: NodeId,
        token: &str,
    ) -> Result<NodeId> {
        let row = g.row(emb, self.vocab.id(token))?;
        let chars = self.char_cnn().forward(g, params, &self.char_vocab, token)?;
        g.concat(&[row, chars])
    }

    pub fn encode(
        &self,
        g: &mut Graph,
        params: &ParamSet,
        source: &[String],
        training: bool,
        rng: &mut impl Rng,
    ) -> Result<EncoderOut> {
        if source.is_empty() {
            return Err(Error::EmptyInput("cannot encode an empty source".into()));
        }
        let emb = g.param("emb", params.get("emb")?)?;
        let xs: Vec<NodeId> = source
            .iter()
            .map(|t| self.word_repr(g, params, emb, t))
            .collect::<Result<_>>()?;
        let out = self.encoder().forward(g, params, &xs, self.cfg.dropout, training, rng)?;
        let hmat = g.rows_to_mat(&out.seq)?;
        Ok(EncoderOut { hmat, finals: out.finals, len: source.len() })
    }

    /// Decoder initial state: each layer's state maps from the matching
    /// encoder layer's final forward/backward states through a tanh bridge.
    pub fn bridge(
        &self,
        g: &mut Graph,
        params: &ParamSet,
        finals: &[LayerFinals],
    ) -> Result<Vec<(NodeId, NodeId)>> {
        let mut state = Vec::with_capacity(finals.len());
        for (l, f) in finals.iter().enumerate() {
            let hcat = g.concat(&[f.fwd_h, f.bwd_h])?;
            let ccat = g.concat(&[f.fwd_c, f.bwd_c])?;
            let bh = Linear::new(format!("bridge.h{l}"), 2 * self.cfg.hidden, self.cfg.hidden);
            let bc = Linear::new(format!("bridge.c{l}"), 2 * self.cfg.hidden, self.cfg.hidden);
            let h = bh.vec(g, params, hcat)?;
            let h = g.tanh(h)?;
            let c = bc.vec(g, params, ccat)?;
            let c = g.tanh(c)?;
            state.push((h, c));
        }
        Ok(state)
    }

    /// Encoder-side attention projection, computed once per example:
    /// enc_proj = H W_enc^T + b, shape [m, att_dim].
    pub fn attention_enc_proj(&self, g: &mut Graph, params: &ParamSet, hmat: NodeId) -> Result<NodeId> {
        let w_enc = g.param("att.w_enc", params.get("att.w_enc")?)?;
        let b = g.param("att.b", params.get("att.b")?)?;
        let proj = g.matmul_nt(hmat, w_enc)?;
        g.add_row_vec(proj, b)
    }

    /// Additive attention logits and weights for decoder state `s`:
    /// d_i = v . tanh(enc_proj_i + W_dec s), a = softmax(d).
    pub fn attention(
        &self,
        g: &mut Graph,
        params: &ParamSet,
        enc_proj: NodeId,
        s: NodeId,
    ) -> Result<(NodeId, NodeId)> {
        let w_dec = g.param("att.w_dec", params.get("att.w_dec")?)?;
        let v = g.param("att.v", params.get("att.v")?)?;
        let dec_proj = g.matvec(w_dec, s)?;
        let pre = g.add_row_vec(enc_proj, dec_proj)?;
        let t = g.tanh(pre)?;
        let d = g.matvec(t, v)?;
        let a = g.softmax(d, 1.0)?;
        Ok((d, a))
    }

    /// Generate/copy mixture over the extended vocabulary:
    /// P = p_gen * [P_v ; 0] + (1 - p_gen) * scatter(a, source ids).
    /// Every entry is strictly positive because p_gen lies in (0,1) and both
    /// component distributions are softmax outputs.
    pub fn mix_distributions(
        &self,
        g: &mut Graph,
        p_vocab: NodeId,
        att: NodeId,
        p_gen: NodeId,
        ext: &ExtVocab,
    ) -> Result<NodeId> {
        let ext_len = ext.len();
        let padded = g.pad_zeros(p_vocab, ext_len)?;
        let gen_part = g.scale_by(padded, p_gen)?;
        let copy_gate = g.one_minus(p_gen)?;
        let copy_w = g.scale_by(att, copy_gate)?;
        let copy_part = g.scatter_add(copy_w, &ext.src_ext_ids, ext_len)?;
        g.add(gen_part, copy_part)
    }

    /// One decoder step given the previous token's base-vocabulary id.
    #[allow(clippy::too_many_arguments)]
    pub fn decode_step(
        &self,
        g: &mut Graph,
        params: &ParamSet,
        enc: &EncoderOut,
        enc_proj: NodeId,
        state: &mut [(NodeId, NodeId)],
        prev_id: usize,
        ext: &ExtVocab,
        training: bool,
        rng: &mut impl Rng,
    ) -> Result<StepOut> {
        let emb = g.param("emb", params.get("emb")?)?;
        let e_prev = g.row(emb, prev_id)?;
        let s = self
            .decoder()
            .step(g, params, e_prev, state, self.cfg.dropout, training, rng)?;
        let (d, a) = self.attention(g, params, enc_proj, s)?;
        let c = g.vecmat(a, enc.hmat)?;
        let sc = g.concat(&[s, c])?;
        let logits = self.out_layer().vec(g, params, sc)?;
        let p_vocab = g.softmax(logits, 1.0)?;
        let sce = g.concat(&[s, c, e_prev])?;
        let p_gen_pre = self.pgen_layer().vec(g, params, sce)?;
        let p_gen = g.sigmoid(p_gen_pre)?;
        let p = self.mix_distributions(g, p_vocab, a, p_gen, ext)?;
        Ok(StepOut { s, d, a, c, p_gen, p })
    }

    /// Teacher-forced negative log-likelihood of one pair, averaged over
    /// target positions (summary tokens plus end-of-sequence).
    pub fn example_loss(
        &self,
        g: &mut Graph,
        params: &ParamSet,
        pair: &ArticlePair,
        training: bool,
        rng: &mut impl Rng,
    ) -> Result<NodeId> {
        if pair.summary.is_empty() {
            return Err(Error::EmptyInput(format!("pair {} has an empty summary", pair.id)));
        }
        let ext = ExtVocab::build(&self.vocab, &pair.source);
        let enc = self.encode(g, params, &pair.source, training, rng)?;
        let enc_proj = self.attention_enc_proj(g, params, enc.hmat)?;
        let mut state = self.bridge(g, params, &enc.finals)?;

        let mut inputs = vec![SOS];
        inputs.extend(pair.summary.iter().map(|t| self.vocab.id(t)));
        let mut targets: Vec<usize> =
            pair.summary.iter().map(|t| ext.target_id(&self.vocab, t)).collect();
        targets.push(EOS);

        let mut step_terms = Vec::with_capacity(targets.len());
        for (t, &target) in targets.iter().enumerate() {
            let step = self.decode_step(
                g, params, &enc, enc_proj, &mut state, inputs[t], &ext, training, rng,
            )?;
            let p_t = g.gather(step.p, target)?;
            step_terms.push(g.ln(p_t)?);
        }
        let total = g.sum_n(&step_terms)?;
        g.scale(total, -1.0 / targets.len() as f64)
    }

    /// Adam training with gradient accumulation across each batch and
    /// global-norm clipping. Emits one JSONL record per step to `log`, and
    /// the same records to `curve` when given.
    pub fn train(
        &self,
        params: &mut ParamSet,
        pairs: &[ArticlePair],
        seed: u64,
        log: &mut dyn Write,
        mut curve: Option<&mut dyn Write>,
    ) -> Result<TrainReport> {
        if pairs.is_empty() {
            return Err(Error::EmptyInput("no training pairs".into()));
        }
        let mut rng = seeded(seed, "teacher-train");
        let adam_cfg = AdamConfig { lr: self.cfg.lr, ..AdamConfig::default() };
        let mut adam = AdamState::new();
        let mut step: u64 = 0;
        let mut last_loss = f64::NAN;

        for epoch in 0..self.cfg.epochs {
            let mut order: Vec<usize> = (0..pairs.len()).collect();
            order.shuffle(&mut rng);
            for chunk in order.chunks(self.cfg.batch_size) {
                let mut acc: std::collections::BTreeMap<String, Tensor> = Default::default();
                let mut batch_loss = 0.0;
                for &i in chunk {
                    let mut g = Graph::new();
                    let loss = self.example_loss(&mut g, params, &pairs[i], true, &mut rng)?;
                    let lv = g.value(loss).data[0];
                    if !lv.is_finite() {
                        return Err(Error::Diverged {
                            step,
                            msg: format!("non-finite loss on pair {}", pairs[i].id),
                        });
                    }
                    batch_loss += lv;
                    let grads = g.backward(loss)?;
                    for (name, grad) in g.param_grads(&grads) {
                        match acc.get_mut(&name) {
                            Some(t) => {
                                for (av, gv) in t.data.iter_mut().zip(&grad.data) {
                                    *av += gv;
                                }
                            }
                            None => {
                                acc.insert(name, grad);
                            }
                        }
                    }
                }
                let inv = 1.0 / chunk.len() as f64;
                for t in acc.values_mut() {
                    t.data.iter_mut().for_each(|v| *v *= inv);
                }
                let grad_norm = clip_global_norm(&mut acc, self.cfg.clip)?;
                adam_step(params, &acc, &mut adam, &adam_cfg)?;
                step += 1;
                last_loss = batch_loss * inv;
                let rec = StepLog { phase: "teacher", step, epoch, loss: last_loss, grad_norm };
                let line = serde_json::to_string(&rec)?;
                writeln!(log, "{line}").map_err(|e| Error::io("<log>", e))?;
                if let Some(w) = curve.as_deref_mut() {
                    writeln!(w, "{line}").map_err(|e| Error::io("<curve>", e))?;
                }
            }
        }
        Ok(TrainReport { steps: step, final_loss: last_loss })
    }

    /// Attention logit rows for one pair. Teacher-forced mode replays the
    /// gold summary and yields exactly one row per summary token; greedy
    /// mode decodes and records a row per emitted token.
    pub fn record_attention(
        &self,
        params: &ParamSet,
        pair: &ArticlePair,
        greedy: bool,
    ) -> Result<Vec<Vec<f64>>> {
        let mut rng = seeded(0, "teacher-record"); // dropout off; never drawn from
        let mut g = Graph::new();
        let ext = ExtVocab::build(&self.vocab, &pair.source);
        let enc = self.encode(&mut g, params, &pair.source, false, &mut rng)?;
        let enc_proj = self.attention_enc_proj(&mut g, params, enc.hmat)?;
        let mut state = self.bridge(&mut g, params, &enc.finals)?;
        let mut rows = Vec::new();

        if greedy {
            let mut prev = SOS;
            for _ in 0..self.cfg.max_summary_len {
                let step = self.decode_step(
                    &mut g, params, &enc, enc_proj, &mut state, prev, &ext, false, &mut rng,
                )?;
                let ext_id = argmax_lowest(&g.value(step.p).data);
                if ext_id == EOS {
                    break;
                }
                rows.push(g.value(step.d).data.clone());
                prev = if ext_id < self.vocab.len() { ext_id } else { UNK };
            }
        } else {
            if pair.summary.is_empty() {
                return Err(Error::EmptyInput(format!("pair {} has an empty summary", pair.id)));
            }
            let mut inputs = vec![SOS];
            inputs.extend(pair.summary.iter().map(|t| self.vocab.id(t)));
            for &prev in inputs.iter().take(pair.summary.len()) {
                let step = self.decode_step(
                    &mut g, params, &enc, enc_proj, &mut state, prev, &ext, false, &mut rng,
                )?;
                rows.push(g.value(step.d).data.clone());
            }
        }
        Ok(rows)
    }

    /// Greedy decode: argmax at each step (ties break to the lowest id),
    /// copied out-of-vocabulary tokens feed back as the unknown token.
    pub fn greedy_decode(&self, params: &ParamSet, source: &[String]) -> Result<Vec<String>> {
        let mut rng = seeded(0, "teacher-decode"); // dropout off; never drawn from
        let mut g = Graph::new();
        let ext = ExtVocab::build(&self.vocab, source);
        let enc = self.encode(&mut g, params, source, false, &mut rng)?;
        let enc_proj = self.attention_enc_proj(&mut g, params, enc.hmat)?;
        let mut state = self.bridge(&mut g, params, &enc.finals)?;
        let mut out = Vec::new();
        let mut prev = SOS;
        for _ in 0..self.cfg.max_summary_len {
            let step = self.decode_step(
                &mut g, params, &enc, enc_proj, &mut state, prev, &ext, false, &mut rng,
            )?;
            let ext_id = argmax_lowest(&g.value(step.p).data);
            if ext_id == EOS {
                break;
            }
            out.push(ext.token(&self.vocab, ext_id)?.to_string());
            prev = if ext_id < self.vocab.len() { ext_id } else { UNK };
        }
        Ok(out)
    }
}

/// Index of the maximum value; ties resolve to the lowest index.
pub fn argmax_lowest(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate().skip(1) {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// Serialized header stored in a teacher checkpoint's config block.
#[derive(Debug, Serialize, Deserialize)]
struct TeacherHeader {
    kind: String,
    config: TeacherConfig,
    vocab: Vec<String>,
    char_vocab: String,
    seed: u64,
}

/// A teacher plus its trained parameters, as saved to disk.
pub struct TeacherBundle {
    pub teacher: Teacher,
    pub params: ParamSet,
    pub seed: u64,
}

impl TeacherBundle {
    pub fn save(&self, path: &Path) -> Result<()> {
        let header = TeacherHeader {
            kind: "teacher".into(),
            config: self.teacher.cfg.clone(),
            vocab: self.teacher.vocab.token_list().to_vec(),
            char_vocab: self.teacher.char_vocab.char_list(),
            seed: self.seed,
        };
        checkpoint::save(path, &self.params, &serde_json::to_string(&header)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let (params, config) = checkpoint::load(path)?;
        let kind = crate::checkpoint::peek_kind(&config)?;
        if kind != "teacher" {
            return Err(Error::Checkpoint(format!(
                "expected a teacher checkpoint, found kind {kind:?}"
            )));
        }
        let header: TeacherHeader = serde_json::from_str(&config)?;
        let vocab = Vocabulary::from_token_list(header.vocab)?;
        let char_vocab = CharVocab::from_char_list(header.char_vocab.chars().collect());
        let teacher = Teacher::new(header.config, vocab, char_vocab)?;
        Ok(TeacherBundle { teacher, params, seed: header.seed })
    }
}
