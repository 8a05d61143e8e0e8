//! Gist Detector student: char-aware word representations through one
//! BiLSTM layer, multi-head self-attention with a residual connection, a
//! two-layer MLP to per-position scores, and a tempered softmax over
//! positions yielding gist weights.

use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::checkpoint;
use crate::error::{Error, Result};
use crate::graph::{Graph, NodeId};
use crate::layers::{materialize, BiLstm, CharCnn, InitKind, Mlp2, ParamDecl, SelfAttention};
use crate::params::ParamSet;
use crate::text::embed::{init_word_embeddings, EmbeddingTable};
use crate::text::vocab::{CharVocab, Vocabulary};

/// Student hyperparameters. Defaults are the full-scale settings.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct StudentConfig {
    pub word_dim: usize,
    pub char_dim: usize,
    pub char_filters: usize,
    pub char_width: usize,
    pub hidden: usize,
    pub heads: usize,
    pub mlp_hidden: usize,
    pub temperature: f64,
    pub lr: f64,
    pub clip: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub max_len: usize,
    pub vocab_size: usize,
}

impl Default for StudentConfig {
    fn default() -> Self {
        StudentConfig {
            word_dim: 100,
            char_dim: 25,
            char_filters: 50,
            char_width: 5,
            hidden: 128,
            heads: 4,
            mlp_hidden: 64,
            temperature: 4.0,
            lr: 0.0004,
            clip: 2.0,
            batch_size: 16,
            epochs: 10,
            max_len: 400,
            vocab_size: 50_000,
        }
    }
}

impl StudentConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("word_dim", self.word_dim),
            ("char_dim", self.char_dim),
            ("char_filters", self.char_filters),
            ("char_width", self.char_width),
            ("hidden", self.hidden),
            ("mlp_hidden", self.mlp_hidden),
            ("batch_size", self.batch_size),
            ("max_len", self.max_len),
        ] {
            if v == 0 {
                return Err(Error::Config(format!("student {name} must be positive")));
            }
        }
        if self.heads == 0 || !(2 * self.hidden).is_multiple_of(self.heads) {
            return Err(Error::Config(format!(
                "student heads ({}) must divide the attention width ({})",
                self.heads,
                2 * self.hidden
            )));
        }
        if !(self.temperature.is_finite() && self.temperature > 0.0) {
            return Err(Error::Config(format!(
                "student temperature must be positive, got {}",
                self.temperature
            )));
        }
        Ok(())
    }
}

/// Gist weights for one document: a distribution over its positions.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GistWeights {
    pub id: String,
    pub tokens: Vec<String>,
    pub weights: Vec<f64>,
    pub temperature: f64,
}

#[derive(Debug)]
pub struct Student {
    pub cfg: StudentConfig,
    pub vocab: Vocabulary,
    pub char_vocab: CharVocab,
    /// Parameter-name prefix, empty for a standalone student. A host model
    /// that embeds the student (e.g. a classifier) sets this so the
    /// student's tensors share the host's parameter set without colliding.
    prefix: String,
}

impl Student {
    pub fn new(cfg: StudentConfig, vocab: Vocabulary, char_vocab: CharVocab) -> Result<Self> {
        Student::with_prefix(cfg, vocab, char_vocab, "")
    }

    pub fn with_prefix(
        cfg: StudentConfig,
        vocab: Vocabulary,
        char_vocab: CharVocab,
        prefix: &str,
    ) -> Result<Self> {
        cfg.validate()?;
        Ok(Student { cfg, vocab, char_vocab, prefix: prefix.to_string() })
    }

    fn name(&self, base: &str) -> String {
        format!("{}{base}", self.prefix)
    }

    fn word_repr_dim(&self) -> usize {
        self.cfg.word_dim + self.cfg.char_filters
    }

    fn char_cnn(&self) -> CharCnn {
        CharCnn {
            prefix: self.name("cc"),
            char_dim: self.cfg.char_dim,
            filters: self.cfg.char_filters,
            width: self.cfg.char_width,
            char_vocab_len: self.char_vocab.len(),
        }
    }

    fn encoder(&self) -> BiLstm {
        BiLstm::new(&self.name("enc"), 1, self.word_repr_dim(), self.cfg.hidden)
    }

    fn self_attention(&self) -> Result<SelfAttention> {
        SelfAttention::new(self.name("sa"), 2 * self.cfg.hidden, self.cfg.heads)
    }

    fn mlp(&self) -> Mlp2 {
        Mlp2::new(&self.name("mlp"), 2 * self.cfg.hidden, self.cfg.mlp_hidden, 1)
    }

    pub fn param_spec(&self) -> Vec<ParamDecl> {
        let mut decls = vec![ParamDecl {
            name: self.name("emb"),
            shape: vec![self.vocab.len(), self.cfg.word_dim],
            init: InitKind::WordEmbedding,
        }];
        decls.extend(self.char_cnn().decls());
        decls.extend(self.encoder().decls());
        decls.extend(self.self_attention().expect("validated").decls());
        decls.extend(self.mlp().decls());
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
        params.insert(self.name("emb"), emb)?;
        materialize(&self.param_spec(), &mut params, rng)?;
        Ok(params)
    }

    /// Per-position scores for one document, shape [m]. Softmax these at the
    /// model temperature to get gist weights.
    pub fn forward_scores(
        &self,
        g: &mut Graph,
        params: &ParamSet,
        tokens: &[String],
    ) -> Result<NodeId> {
        if tokens.is_empty() {
            return Err(Error::EmptyInput("student forward over an empty document".into()));
        }
        let emb_name = self.name("emb");
        let emb = g.param(&emb_name, params.get(&emb_name)?)?;
        let cnn = self.char_cnn();
        let xs: Vec<NodeId> = tokens
            .iter()
            .map(|t| {
                let row = g.row(emb, self.vocab.id(t))?;
                let chars = cnn.forward(g, params, &self.char_vocab, t)?;
                g.concat(&[row, chars])
            })
            .collect::<Result<_>>()?;
        // Dropout-free: the student trains against fixed soft targets and
        // stays deterministic end to end.
        let mut rng = crate::rng::seeded(0, "student-never-drawn");
        let enc = self.encoder().forward(g, params, &xs, 0.0, false, &mut rng)?;
        let u = g.rows_to_mat(&enc.seq)?;
        let att = self.self_attention()?.forward(g, params, u)?;
        let scores: Vec<NodeId> = (0..tokens.len())
            .map(|i| {
                let r = g.row(att, i)?;
                self.mlp().vec(g, params, r)
            })
            .collect::<Result<_>>()?;
        g.concat(&scores)
    }

    /// Tempered distribution over positions, shape [m].
    pub fn forward_weights(
        &self,
        g: &mut Graph,
        params: &ParamSet,
        tokens: &[String],
    ) -> Result<NodeId> {
        let scores = self.forward_scores(g, params, tokens)?;
        g.softmax(scores, self.cfg.temperature)
    }

    /// Gist weights for one document (inference entry point).
    pub fn gist_forward(
        &self,
        params: &ParamSet,
        id: &str,
        tokens: &[String],
    ) -> Result<GistWeights> {
        let mut g = Graph::new();
        let w = self.forward_weights(&mut g, params, tokens)?;
        Ok(GistWeights {
            id: id.to_string(),
            tokens: tokens.to_vec(),
            weights: g.value(w).data.clone(),
            temperature: self.cfg.temperature,
        })
    }

    /// Gist weights for a batch of documents. Each document is processed at
    /// its true length, so no position ever sees padding mass.
    pub fn gist_batch(
        &self,
        params: &ParamSet,
        docs: &[(String, Vec<String>)],
    ) -> Result<Vec<GistWeights>> {
        docs.iter().map(|(id, toks)| self.gist_forward(params, id, toks)).collect()
    }
}

/// Serialized header stored in a student checkpoint's config block.
#[derive(Debug, Serialize, Deserialize)]
struct StudentHeader {
    kind: String,
    config: StudentConfig,
    vocab: Vec<String>,
    char_vocab: String,
    seed: u64,
}

#[derive(Debug)]
pub struct StudentBundle {
    pub student: Student,
    pub params: ParamSet,
    pub seed: u64,
}

impl StudentBundle {
    pub fn save(&self, path: &Path) -> Result<()> {
        let header = StudentHeader {
            kind: "student".into(),
            config: self.student.cfg.clone(),
            vocab: self.student.vocab.token_list().to_vec(),
            char_vocab: self.student.char_vocab.char_list(),
            seed: self.seed,
        };
        checkpoint::save(path, &self.params, &serde_json::to_string(&header)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let (params, config) = checkpoint::load(path)?;
        let kind = crate::checkpoint::peek_kind(&config)?;
        if kind != "student" {
            return Err(Error::Checkpoint(format!(
                "expected a student checkpoint, found kind {kind:?}"
            )));
        }
        let header: StudentHeader = serde_json::from_str(&config)?;
        let vocab = Vocabulary::from_token_list(header.vocab)?;
        let char_vocab = CharVocab::from_char_list(header.char_vocab.chars().collect());
        let student = Student::new(header.config, vocab, char_vocab)?;
        Ok(StudentBundle { student, params, seed: header.seed })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::check::{check_params, FdCheck};
    use crate::rng::seeded;
    use crate::tensor::Tensor;

    fn tiny_cfg() -> StudentConfig {
        StudentConfig {
            word_dim: 4,
            char_dim: 3,
            char_filters: 3,
            char_width: 2,
            hidden: 3,
            heads: 2,
            mlp_hidden: 4,
            temperature: 4.0,
            max_len: 50,
            vocab_size: 50,
            ..StudentConfig::default()
        }
    }

    fn tiny_student() -> (Student, ParamSet) {
        let corpus = "the cat sat on the mat . a dog ran fast";
        let vocab = Vocabulary::build(corpus.split_whitespace(), 50).unwrap();
        let cv = CharVocab::from_tokens(corpus.split_whitespace());
        let student = Student::new(tiny_cfg(), vocab, cv).unwrap();
        let mut rng = seeded(13, "tiny-student");
        let params = student.init_params(None, &mut rng).unwrap();
        (student, params)
    }

    fn toks(s: &str) -> Vec<String> {
        crate::text::tokenize(s)
    }

    #[test]
    fn weights_form_a_distribution_over_positions() {
        let (student, params) = tiny_student();
        let doc = toks("the cat sat on the mat");
        let gw = student.gist_forward(&params, "d1", &doc).unwrap();
        assert_eq!(gw.weights.len(), 6);
        assert_eq!(gw.temperature, 4.0);
        let sum: f64 = gw.weights.iter().sum();
        assert!((sum - 1.0).abs() < 1e-12);
        assert!(gw.weights.iter().all(|&w| w > 0.0));
    }

    #[test]
    fn unknown_words_still_get_weights() {
        let (student, params) = tiny_student();
        let gw = student.gist_forward(&params, "d", &toks("zebra quark cat")).unwrap();
        assert_eq!(gw.weights.len(), 3);
        assert!((gw.weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn batch_matches_single_document_inference() {
        let (student, params) = tiny_student();
        let docs = vec![
            ("a".to_string(), toks("the cat sat")),
            ("b".to_string(), toks("a dog ran fast")),
        ];
        let batch = student.gist_batch(&params, &docs).unwrap();
        for (i, (id, toks)) in docs.iter().enumerate() {
            let single = student.gist_forward(&params, id, toks).unwrap();
            assert_eq!(batch[i].weights, single.weights);
            assert_eq!(batch[i].id, *id);
        }
    }

    #[test]
    fn distill_loss_gradient_passes_finite_differences() {
        let (student, params) = tiny_student();
        let doc = toks("the cat sat");
        let q = vec![0.6, 0.3, 0.1];
        let fd = FdCheck::default();
        check_params(
            &fd,
            &|g, p| {
                let logits = student.forward_scores(g, p, &doc)?;
                let logp = g.log_softmax(logits, student.cfg.temperature)?;
                let qn = g.leaf(Tensor::vector(q.clone()))?;
                let dot = g.dot(qn, logp)?;
                g.scale(dot, -1.0)
            },
            &params,
        )
        .unwrap();
    }

    #[test]
    fn param_spec_and_materialized_set_agree() {
        let (student, params) = tiny_student();
        assert_eq!(student.param_count(), params.total_count());
        assert_eq!(student.param_spec().len(), params.len());
    }

    #[test]
    fn bundle_roundtrip_preserves_everything() {
        let (student, params) = tiny_student();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("student.ckpt");
        let bundle = StudentBundle { student, params, seed: 7 };
        bundle.save(&path).unwrap();
        let loaded = StudentBundle::load(&path).unwrap();
        assert_eq!(loaded.seed, 7);
        assert_eq!(loaded.student.cfg, bundle.student.cfg);
        assert!(loaded.params.bits_eq(&bundle.params));
    }

    #[test]
    fn teacher_checkpoint_is_rejected_as_student() {
        use crate::teacher::{Teacher, TeacherBundle, TeacherConfig};
        let vocab = Vocabulary::build("a b".split_whitespace(), 50).unwrap();
        let cv = CharVocab::from_tokens("a b".split_whitespace());
        let cfg = TeacherConfig {
            word_dim: 3,
            char_dim: 2,
            char_filters: 2,
            char_width: 2,
            hidden: 2,
            enc_layers: 1,
            dec_layers: 1,
            att_dim: 2,
            dropout: 0.0,
            ..TeacherConfig::default()
        };
        let teacher = Teacher::new(cfg, vocab, cv).unwrap();
        let mut rng = seeded(1, "x");
        let params = teacher.init_params(None, &mut rng).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.ckpt");
        TeacherBundle { teacher, params, seed: 1 }.save(&path).unwrap();
        let err = StudentBundle::load(&path).unwrap_err();
        assert!(err.to_string().contains("teacher"));
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let bad_heads = StudentConfig { heads: 5, hidden: 3, ..tiny_cfg() };
        assert!(bad_heads.validate().is_err());
        let bad_t = StudentConfig { temperature: 0.0, ..tiny_cfg() };
        assert!(bad_t.validate().is_err());
    }
}
