//! Downstream document classifier: word embeddings through a BiLSTM, the
//! final forward/backward states as the context vector, and an MLP head.
//! The gist-augmented variant blends the context vector with the
//! gist-weighted sum of per-position states; the random-initialization
//! ablation keeps the gist architecture but draws fresh parameters.

use std::collections::BTreeSet;
use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::blend::blend_context_node;
use crate::checkpoint;
use crate::error::{Error, Result};
use crate::graph::{Graph, NodeId};
use crate::layers::{materialize, BiLstm, InitKind, Mlp2, ParamDecl};
use crate::optim::{adam_step, clip_global_norm, AdamConfig, AdamState};
use crate::params::ParamSet;
use crate::rng::seeded;
use crate::student::{Student, StudentBundle, StudentConfig};
use crate::teacher::argmax_lowest;
use crate::tensor::Tensor;
use crate::text::corpus::LabeledDoc;
use crate::text::embed::{init_word_embeddings, EmbeddingTable};
use crate::text::vocab::{CharVocab, Vocabulary};

/// Classifier operating mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Plain BiLSTM classifier, no gist input.
    Baseline,
    /// Context blending with a distilled gist detector.
    Gd,
    /// Same gist architecture, randomly initialized parameters.
    Np,
}

impl Mode {
    /// Name used in reports and tables.
    pub fn report_name(self) -> &'static str {
        match self {
            Mode::Baseline => "baseline",
            Mode::Gd => "+GD",
            Mode::Np => "+NP",
        }
    }

    pub fn uses_gist(self) -> bool {
        !matches!(self, Mode::Baseline)
    }
}

impl std::str::FromStr for Mode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "baseline" => Ok(Mode::Baseline),
            "gd" | "+gd" => Ok(Mode::Gd),
            "np" | "+np" => Ok(Mode::Np),
            other => Err(Error::InvalidArg(format!(
                "unknown classifier mode {other:?} (expected baseline, gd, or np)"
            ))),
        }
    }
}

/// Classifier hyperparameters. Defaults are the full-scale settings.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct ClassifierConfig {
    pub word_dim: usize,
    pub hidden: usize,
    pub layers: usize,
    pub mlp_hidden: usize,
    pub dropout: f64,
    pub lr: f64,
    pub clip: f64,
    pub batch_size: usize,
    pub epochs: usize,
    /// Context blend weight. Unset means 0.5 in gist modes; setting it in
    /// baseline mode is an error because there is no gist model to blend.
    pub lambda: Option<f64>,
    /// Keep the embedded gist detector's parameters fixed instead of
    /// fine-tuning them with the classifier.
    pub freeze_gist: bool,
    pub max_len: usize,
    pub vocab_size: usize,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        ClassifierConfig {
            word_dim: 300,
            hidden: 256,
            layers: 2,
            mlp_hidden: 256,
            dropout: 0.35,
            lr: 0.001,
            clip: 2.0,
            batch_size: 16,
            epochs: 6,
            lambda: None,
            freeze_gist: false,
            max_len: 400,
            vocab_size: 50_000,
        }
    }
}

impl ClassifierConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("word_dim", self.word_dim),
            ("hidden", self.hidden),
            ("layers", self.layers),
            ("mlp_hidden", self.mlp_hidden),
            ("batch_size", self.batch_size),
            ("max_len", self.max_len),
        ] {
            if v == 0 {
                return Err(Error::Config(format!("classifier {name} must be positive")));
            }
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!(
                "classifier dropout must be in [0,1), got {}",
                self.dropout
            )));
        }
        if let Some(l) = self.lambda {
            if !(l.is_finite() && (0.0..=1.0).contains(&l)) {
                return Err(Error::Config(format!("blend weight must lie in [0,1], got {l}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug)]
pub struct Classifier {
    pub cfg: ClassifierConfig,
    pub mode: Mode,
    pub vocab: Vocabulary,
    /// Sorted label strings; the index is the class id.
    pub labels: Vec<String>,
    /// Present in gist modes, with parameters under the "gist." prefix.
    pub gist: Option<Student>,
}

/// Per-epoch training metrics.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_accuracy: f64,
    pub dev_accuracy: f64,
}

/// Full metrics report for one training run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainMetrics {
    pub mode: String,
    pub seed: u64,
    pub epochs: Vec<EpochMetrics>,
    pub test_accuracy: f64,
}

const GIST_PREFIX: &str = "gist.";

impl Classifier {
    /// Build a classifier (and its initial parameters) from a training
    /// split. Gist modes require a student bundle: +GD adopts its trained
    /// parameters, +NP keeps only the architecture and draws fresh ones.
    pub fn build(
        cfg: ClassifierConfig,
        mode: Mode,
        train_docs: &[LabeledDoc],
        gist: Option<&StudentBundle>,
        pretrained: Option<&EmbeddingTable>,
        seed: u64,
    ) -> Result<(Classifier, ParamSet)> {
        cfg.validate()?;
        if train_docs.is_empty() {
            return Err(Error::EmptyInput("classifier needs a non-empty training split".into()));
        }
        if cfg.lambda.is_some() && !mode.uses_gist() {
            return Err(Error::Config(
                "blend weight set without a gist model (baseline mode)".into(),
            ));
        }
        if mode.uses_gist() && gist.is_none() {
            return Err(Error::Config(format!(
                "{} mode requires a gist checkpoint",
                mode.report_name()
            )));
        }
        if !mode.uses_gist() && gist.is_some() {
            return Err(Error::Config("baseline mode does not take a gist checkpoint".into()));
        }

        let vocab = Vocabulary::build(
            train_docs.iter().flat_map(|d| d.tokens.iter().map(|t| t.as_str())),
            cfg.vocab_size,
        )?;
        let labels: Vec<String> = train_docs
            .iter()
            .map(|d| d.label.clone())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        if labels.len() < 2 {
            return Err(Error::InvalidArg(format!(
                "training split has {} distinct label(s); need at least 2",
                labels.len()
            )));
        }

        let gist_student = match (mode, gist) {
            (Mode::Baseline, _) => None,
            (_, Some(bundle)) => Some(Student::with_prefix(
                bundle.student.cfg.clone(),
                bundle.student.vocab.clone(),
                bundle.student.char_vocab.clone(),
                GIST_PREFIX,
            )?),
            _ => unreachable!("checked above"),
        };

        let clf = Classifier { cfg, mode, vocab, labels, gist: gist_student };

        let mut rng = seeded(seed, "classifier-init");
        let mut params = ParamSet::new();
        let emb = init_word_embeddings(&clf.vocab, clf.cfg.word_dim, pretrained, &mut rng)?;
        params.insert("emb", emb)?;
        materialize(&clf.own_param_spec(), &mut params, &mut rng)?;

        match (mode, gist) {
            (Mode::Gd, Some(bundle)) => {
                params.merge_prefixed(GIST_PREFIX, &bundle.params)?;
            }
            (Mode::Np, Some(bundle)) => {
                // Fresh parameters for the same architecture.
                let mut np_rng = seeded(seed, "gist-np-init");
                let fresh = bundle.student.init_params(None, &mut np_rng)?;
                params.merge_prefixed(GIST_PREFIX, &fresh)?;
            }
            _ => {}
        }

        Ok((clf, params))
    }

    fn encoder(&self) -> BiLstm {
        BiLstm::new("enc", self.cfg.layers, self.cfg.word_dim, self.cfg.hidden)
    }

    fn mlp(&self) -> Mlp2 {
        Mlp2::new("mlp", 2 * self.cfg.hidden, self.cfg.mlp_hidden, self.labels.len())
    }

    /// Parameter declarations for the classifier itself (the embedded gist
    /// detector accounts for its own).
    fn own_param_spec(&self) -> Vec<ParamDecl> {
        let mut decls = vec![ParamDecl {
            name: "emb".into(),
            shape: vec![self.vocab.len(), self.cfg.word_dim],
            init: InitKind::WordEmbedding,
        }];
        decls.extend(self.encoder().decls());
        decls.extend(self.mlp().decls());
        decls
    }

    /// Effective context blend weight for this mode.
    pub fn effective_lambda(&self) -> f64 {
        if self.mode.uses_gist() {
            self.cfg.lambda.unwrap_or(0.5)
        } else {
            0.0
        }
    }

    pub fn label_index(&self, label: &str) -> Result<usize> {
        self.labels
            .iter()
            .position(|l| l == label)
            .ok_or_else(|| Error::InvalidArg(format!("unknown label {label:?}")))
    }

    /// Per-position BiLSTM outputs q ([m, 2*hidden]) and the context vector
    /// v_c ([2*hidden]) — the concatenated final forward/backward states of
    /// the top layer.
    pub fn context_pipeline(
        &self,
        g: &mut Graph,
        params: &ParamSet,
        tokens: &[String],
        training: bool,
        rng: &mut impl Rng,
    ) -> Result<(NodeId, NodeId)> {
        if tokens.is_empty() {
            return Err(Error::EmptyInput("classifier got an empty document".into()));
        }
        let emb = g.param("emb", params.get("emb")?)?;
        let xs: Vec<NodeId> = tokens
            .iter()
            .map(|t| g.row(emb, self.vocab.id(t)))
            .collect::<Result<_>>()?;
        let enc = self.encoder().forward(g, params, &xs, self.cfg.dropout, training, rng)?;
        let q = g.rows_to_mat(&enc.seq)?;
        let top = enc.finals.last().expect("at least one layer");
        let v_c = g.concat(&[top.fwd_h, top.bwd_h])?;
        Ok((q, v_c))
    }

    /// Class logits for one document. In gist modes the context vector is
    /// blended with the gist-weighted sum of the per-position states; the
    /// gist branch joins the graph unless frozen, in which case its weights
    /// enter as constants.
    pub fn forward_logits(
        &self,
        g: &mut Graph,
        params: &ParamSet,
        tokens: &[String],
        training: bool,
        rng: &mut impl Rng,
    ) -> Result<NodeId> {
        let (q, v_c) = self.context_pipeline(g, params, tokens, training, rng)?;
        let lambda = self.effective_lambda();
        let v = if lambda == 0.0 {
            v_c
        } else {
            let student = self.gist.as_ref().expect("gist modes carry a student");
            let weights = if self.cfg.freeze_gist {
                let standalone = params.extract_prefixed(GIST_PREFIX);
                let gw = student_unprefixed(student)?.gist_forward(&standalone, "", tokens)?;
                g.leaf(Tensor::vector(gw.weights))?
            } else {
                student.forward_weights(g, params, tokens)?
            };
            blend_context_node(g, v_c, weights, q, lambda)?
        };
        self.mlp().vec(g, params, v)
    }

    /// Posterior over labels for one document (evaluation mode).
    pub fn classify(&self, params: &ParamSet, tokens: &[String]) -> Result<Vec<f64>> {
        let mut rng = seeded(0, "classifier-eval"); // dropout off; never drawn from
        let mut g = Graph::new();
        let logits = self.forward_logits(&mut g, params, tokens, false, &mut rng)?;
        let post = g.softmax(logits, 1.0)?;
        Ok(g.value(post).data.clone())
    }

    /// Cross-entropy loss for one labeled document.
    pub fn example_loss(
        &self,
        g: &mut Graph,
        params: &ParamSet,
        doc: &LabeledDoc,
        training: bool,
        rng: &mut impl Rng,
    ) -> Result<NodeId> {
        let idx = self.label_index(&doc.label)?;
        let logits = self.forward_logits(g, params, &doc.tokens, training, rng)?;
        let logp = g.log_softmax(logits, 1.0)?;
        let picked = g.gather(logp, idx)?;
        g.scale(picked, -1.0)
    }

    /// Fraction of documents whose argmax posterior matches the label.
    pub fn accuracy(&self, params: &ParamSet, docs: &[LabeledDoc]) -> Result<f64> {
        if docs.is_empty() {
            return Err(Error::EmptyInput("accuracy over an empty split".into()));
        }
        let mut correct = 0usize;
        for doc in docs {
            let post = self.classify(params, &doc.tokens)?;
            if argmax_lowest(&post) == self.label_index(&doc.label)? {
                correct += 1;
            }
        }
        Ok(correct as f64 / docs.len() as f64)
    }

    fn check_label_cover(&self, split: &str, docs: &[LabeledDoc]) -> Result<()> {
        for doc in docs {
            if !self.labels.iter().any(|l| l == &doc.label) {
                return Err(Error::Config(format!(
                    "label set mismatch between splits: {split} contains {:?}, training labels are {:?}",
                    doc.label, self.labels
                )));
            }
        }
        Ok(())
    }

    /// Adam training with batch gradient accumulation and global-norm
    /// clipping; per-epoch train/dev accuracy, final test accuracy.
    pub fn train(
        &self,
        params: &mut ParamSet,
        train_docs: &[LabeledDoc],
        dev_docs: &[LabeledDoc],
        test_docs: &[LabeledDoc],
        seed: u64,
        log: &mut dyn Write,
    ) -> Result<TrainMetrics> {
        self.check_label_cover("dev", dev_docs)?;
        self.check_label_cover("test", test_docs)?;
        if train_docs.is_empty() {
            return Err(Error::EmptyInput("no training documents".into()));
        }

        let mut rng = seeded(seed, "classifier-train");
        let adam_cfg = AdamConfig { lr: self.cfg.lr, ..AdamConfig::default() };
        let mut adam = AdamState::new();
        let mut step: u64 = 0;
        let mut epochs = Vec::with_capacity(self.cfg.epochs);

        for epoch in 0..self.cfg.epochs {
            let mut order: Vec<usize> = (0..train_docs.len()).collect();
            order.shuffle(&mut rng);
            let mut epoch_loss = 0.0;
            for chunk in order.chunks(self.cfg.batch_size) {
                let mut acc: std::collections::BTreeMap<String, Tensor> = Default::default();
                let mut batch_loss = 0.0;
                for &i in chunk {
                    let mut g = Graph::new();
                    let loss = self.example_loss(&mut g, params, &train_docs[i], true, &mut rng)?;
                    let lv = g.value(loss).data[0];
                    if !lv.is_finite() {
                        return Err(Error::Diverged {
                            step,
                            msg: format!("non-finite loss on document {}", train_docs[i].id),
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
                epoch_loss += batch_loss * inv;
                let line = serde_json::json!({
                    "phase": "classifier",
                    "mode": self.mode.report_name(),
                    "step": step,
                    "epoch": epoch,
                    "loss": batch_loss * inv,
                    "grad_norm": grad_norm,
                });
                writeln!(log, "{line}").map_err(|e| Error::io("<log>", e))?;
            }
            let batches = order.chunks(self.cfg.batch_size).count();
            let em = EpochMetrics {
                epoch,
                train_loss: epoch_loss / batches as f64,
                train_accuracy: self.accuracy(params, train_docs)?,
                dev_accuracy: self.accuracy(params, dev_docs)?,
            };
            writeln!(log, "{}", serde_json::to_string(&em)?).map_err(|e| Error::io("<log>", e))?;
            epochs.push(em);
        }

        Ok(TrainMetrics {
            mode: self.mode.report_name().into(),
            seed,
            epochs,
            test_accuracy: self.accuracy(params, test_docs)?,
        })
    }
}

/// A standalone (unprefixed) view of a prefixed student, for frozen-gist
/// inference outside the training graph.
fn student_unprefixed(s: &Student) -> Result<Student> {
    Student::new(s.cfg.clone(), s.vocab.clone(), s.char_vocab.clone())
}

/// Gist sub-model description stored inside a classifier checkpoint.
#[derive(Debug, Serialize, Deserialize)]
struct GistPart {
    config: StudentConfig,
    vocab: Vec<String>,
    char_vocab: String,
}

#[derive(Debug, Serialize, Deserialize)]
struct ClassifierHeader {
    kind: String,
    config: ClassifierConfig,
    mode: Mode,
    vocab: Vec<String>,
    labels: Vec<String>,
    seed: u64,
    gist: Option<GistPart>,
}

pub struct ClassifierBundle {
    pub classifier: Classifier,
    pub params: ParamSet,
    pub seed: u64,
}

impl ClassifierBundle {
    pub fn save(&self, path: &Path) -> Result<()> {
        let gist = self.classifier.gist.as_ref().map(|s| GistPart {
            config: s.cfg.clone(),
            vocab: s.vocab.token_list().to_vec(),
            char_vocab: s.char_vocab.char_list(),
        });
        let header = ClassifierHeader {
            kind: "classifier".into(),
            config: self.classifier.cfg.clone(),
            mode: self.classifier.mode,
            vocab: self.classifier.vocab.token_list().to_vec(),
            labels: self.classifier.labels.clone(),
            seed: self.seed,
            gist,
        };
        checkpoint::save(path, &self.params, &serde_json::to_string(&header)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let (params, config) = checkpoint::load(path)?;
        let kind = checkpoint::peek_kind(&config)?;
        if kind != "classifier" {
            return Err(Error::Checkpoint(format!(
                "expected a classifier checkpoint, found kind {kind:?}"
            )));
        }
        let header: ClassifierHeader = serde_json::from_str(&config)?;
        let vocab = Vocabulary::from_token_list(header.vocab)?;
        let gist = match header.gist {
            None => None,
            Some(part) => Some(Student::with_prefix(
                part.config,
                Vocabulary::from_token_list(part.vocab)?,
                CharVocab::from_char_list(part.char_vocab.chars().collect()),
                GIST_PREFIX,
            )?),
        };
        if header.mode.uses_gist() != gist.is_some() {
            return Err(Error::Checkpoint(
                "classifier checkpoint mode disagrees with its gist payload".into(),
            ));
        }
        let classifier = Classifier {
            cfg: header.config,
            mode: header.mode,
            vocab,
            labels: header.labels,
            gist,
        };
        classifier.cfg.validate()?;
        Ok(ClassifierBundle { classifier, params, seed: header.seed })
    }
}

/// Summary statistics for one mode across seeds.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModeSummary {
    pub mode: String,
    pub seeds: Vec<u64>,
    pub accuracies: Vec<f64>,
    pub mean_accuracy: f64,
    pub std_accuracy: f64,
}

/// Modes-by-seeds comparison report.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub runs: Vec<TrainMetrics>,
    pub summaries: Vec<ModeSummary>,
}

impl ComparisonReport {
    pub fn summary_for(&self, mode: Mode) -> Option<&ModeSummary> {
        self.summaries.iter().find(|s| s.mode == mode.report_name())
    }

    /// Fixed-width table for terminal output.
    pub fn table(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("{:<10} {:>6} {:>10}\n", "mode", "seed", "test_acc"));
        for run in &self.runs {
            out.push_str(&format!("{:<10} {:>6} {:>10.4}\n", run.mode, run.seed, run.test_accuracy));
        }
        out.push('\n');
        out.push_str(&format!("{:<10} {:>10} {:>10}\n", "mode", "mean", "std"));
        for s in &self.summaries {
            out.push_str(&format!(
                "{:<10} {:>10.4} {:>10.4}\n",
                s.mode, s.mean_accuracy, s.std_accuracy
            ));
        }
        out
    }
}

/// Train every (mode, seed) combination on the same splits and summarize.
#[allow(clippy::too_many_arguments)]
pub fn run_comparison(
    cfg: &ClassifierConfig,
    modes: &[Mode],
    seeds: &[u64],
    train_docs: &[LabeledDoc],
    dev_docs: &[LabeledDoc],
    test_docs: &[LabeledDoc],
    gist: Option<&StudentBundle>,
    log: &mut dyn Write,
) -> Result<ComparisonReport> {
    if modes.is_empty() || seeds.is_empty() {
        return Err(Error::EmptyInput("comparison needs at least one mode and one seed".into()));
    }
    let mut runs = Vec::new();
    let mut summaries = Vec::new();
    for &mode in modes {
        let mut accs = Vec::with_capacity(seeds.len());
        for &seed in seeds {
            let mode_cfg = ClassifierConfig {
                lambda: if mode.uses_gist() { cfg.lambda } else { None },
                ..cfg.clone()
            };
            let gist_for_mode = if mode.uses_gist() { gist } else { None };
            if mode.uses_gist() && gist.is_none() {
                return Err(Error::Config(format!(
                    "{} mode requires a gist checkpoint",
                    mode.report_name()
                )));
            }
            let (clf, mut params) =
                Classifier::build(mode_cfg, mode, train_docs, gist_for_mode, None, seed)?;
            let metrics = clf.train(&mut params, train_docs, dev_docs, test_docs, seed, log)?;
            accs.push(metrics.test_accuracy);
            runs.push(metrics);
        }
        let mean = accs.iter().sum::<f64>() / accs.len() as f64;
        let var = accs.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / accs.len() as f64;
        summaries.push(ModeSummary {
            mode: mode.report_name().into(),
            seeds: seeds.to_vec(),
            accuracies: accs,
            mean_accuracy: mean,
            std_accuracy: var.sqrt(),
        });
    }
    Ok(ComparisonReport { runs, summaries })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::check::{check_params, FdCheck};

    fn toks(s: &str) -> Vec<String> {
        crate::text::tokenize(s)
    }

    fn doc(id: &str, text: &str, label: &str) -> LabeledDoc {
        LabeledDoc { id: id.into(), tokens: toks(text), label: label.into() }
    }

    fn tiny_cfg() -> ClassifierConfig {
        ClassifierConfig {
            word_dim: 4,
            hidden: 3,
            layers: 1,
            mlp_hidden: 5,
            dropout: 0.0,
            lr: 0.01,
            epochs: 3,
            batch_size: 4,
            vocab_size: 100,
            ..ClassifierConfig::default()
        }
    }

    fn tiny_docs() -> Vec<LabeledDoc> {
        vec![
            doc("1", "alpha beta gamma", "pos"),
            doc("2", "delta epsilon zeta", "neg"),
            doc("3", "alpha gamma delta", "pos"),
            doc("4", "zeta epsilon beta", "neg"),
            doc("5", "gamma alpha beta", "pos"),
            doc("6", "epsilon zeta delta", "neg"),
            doc("7", "beta alpha alpha", "pos"),
            doc("8", "delta zeta zeta", "neg"),
        ]
    }

    fn tiny_student_bundle(train_docs: &[LabeledDoc]) -> StudentBundle {
        let vocab = Vocabulary::build(
            train_docs.iter().flat_map(|d| d.tokens.iter().map(|t| t.as_str())),
            100,
        )
        .unwrap();
        let cv = CharVocab::from_tokens(
            train_docs.iter().flat_map(|d| d.tokens.iter().map(|t| t.as_str())),
        );
        let cfg = StudentConfig {
            word_dim: 3,
            char_dim: 2,
            char_filters: 2,
            char_width: 2,
            hidden: 2,
            heads: 2,
            mlp_hidden: 3,
            ..StudentConfig::default()
        };
        let student = Student::new(cfg, vocab, cv).unwrap();
        let mut rng = seeded(21, "clf-test-student");
        let params = student.init_params(None, &mut rng).unwrap();
        StudentBundle { student, params, seed: 21 }
    }

    #[test]
    fn posterior_is_a_distribution() {
        let docs = tiny_docs();
        let (clf, params) =
            Classifier::build(tiny_cfg(), Mode::Baseline, &docs, None, None, 3).unwrap();
        let post = clf.classify(&params, &toks("alpha beta")).unwrap();
        assert_eq!(post.len(), 2);
        assert!((post.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(post.iter().all(|&p| p > 0.0));
    }

    #[test]
    fn single_token_document_context_equals_its_only_state() {
        let docs = tiny_docs();
        let (clf, params) =
            Classifier::build(tiny_cfg(), Mode::Baseline, &docs, None, None, 3).unwrap();
        let mut g = Graph::new();
        let mut rng = seeded(0, "x");
        let (q, v_c) =
            clf.context_pipeline(&mut g, &params, &toks("alpha"), false, &mut rng).unwrap();
        assert_eq!(g.value(q).shape, vec![1, 6]);
        assert_eq!(g.value(q).data, g.value(v_c).data);
    }

    #[test]
    fn lambda_without_gist_model_is_rejected() {
        let cfg = ClassifierConfig { lambda: Some(0.5), ..tiny_cfg() };
        let err = Classifier::build(cfg, Mode::Baseline, &tiny_docs(), None, None, 3).unwrap_err();
        assert!(err.to_string().contains("without a gist model"));
    }

    #[test]
    fn gist_mode_without_checkpoint_is_rejected() {
        let err =
            Classifier::build(tiny_cfg(), Mode::Gd, &tiny_docs(), None, None, 3).unwrap_err();
        assert!(err.to_string().contains("requires a gist checkpoint"));
    }

    #[test]
    fn gd_with_zero_lambda_matches_baseline_exactly() {
        let docs = tiny_docs();
        let bundle = tiny_student_bundle(&docs);
        let (base, base_params) =
            Classifier::build(tiny_cfg(), Mode::Baseline, &docs, None, None, 3).unwrap();
        let cfg = ClassifierConfig { lambda: Some(0.0), ..tiny_cfg() };
        let (gd, gd_params) =
            Classifier::build(cfg, Mode::Gd, &docs, Some(&bundle), None, 3).unwrap();

        let text = toks("alpha beta gamma");
        let a = base.classify(&base_params, &text).unwrap();
        let b = gd.classify(&gd_params, &text).unwrap();
        assert_eq!(a, b, "posteriors must be identical at lambda = 0");

        // Gradients must agree too: same loss graph, bit for bit.
        let d = doc("x", "alpha beta gamma", "pos");
        let grads_of = |clf: &Classifier, params: &ParamSet| {
            let mut g = Graph::new();
            let mut rng = seeded(0, "never");
            let loss = clf.example_loss(&mut g, params, &d, false, &mut rng).unwrap();
            let grads = g.backward(loss).unwrap();
            g.param_grads(&grads)
        };
        let ga = grads_of(&base, &base_params);
        let gb = grads_of(&gd, &gd_params);
        assert_eq!(ga.len(), gb.len(), "gist parameters must not join the graph at lambda = 0");
        for (name, t) in &ga {
            assert!(t.bits_eq(&gb[name]), "gradient for {name} differs");
        }
    }

    #[test]
    fn gd_and_np_share_structure_but_not_parameters() {
        let docs = tiny_docs();
        let bundle = tiny_student_bundle(&docs);
        let (_, gd_params) =
            Classifier::build(tiny_cfg(), Mode::Gd, &docs, Some(&bundle), None, 3).unwrap();
        let (_, np_params) =
            Classifier::build(tiny_cfg(), Mode::Np, &docs, Some(&bundle), None, 3).unwrap();
        assert_eq!(
            gd_params.names().collect::<Vec<_>>(),
            np_params.names().collect::<Vec<_>>()
        );
        let gd_emb = gd_params.get("gist.emb").unwrap();
        let np_emb = np_params.get("gist.emb").unwrap();
        assert_eq!(gd_emb.shape, np_emb.shape);
        assert!(!gd_emb.bits_eq(np_emb), "+NP must reinitialize the gist parameters");
        assert!(gd_emb.bits_eq(bundle.params.get("emb").unwrap()));
    }

    #[test]
    fn joint_gist_gradient_passes_finite_differences() {
        let docs = tiny_docs();
        let bundle = tiny_student_bundle(&docs);
        let (clf, params) =
            Classifier::build(tiny_cfg(), Mode::Gd, &docs, Some(&bundle), None, 3).unwrap();
        let d = doc("x", "alpha zeta", "neg");
        let fd = FdCheck::default();
        check_params(
            &fd,
            &|g, p| {
                let mut rng = seeded(0, "never");
                clf.example_loss(g, p, &d, false, &mut rng)
            },
            &params,
        )
        .unwrap();
    }

    #[test]
    fn frozen_gist_gets_no_gradient() {
        let docs = tiny_docs();
        let bundle = tiny_student_bundle(&docs);
        let cfg = ClassifierConfig { freeze_gist: true, ..tiny_cfg() };
        let (clf, params) =
            Classifier::build(cfg, Mode::Gd, &docs, Some(&bundle), None, 3).unwrap();
        let d = doc("x", "alpha beta", "pos");
        let mut g = Graph::new();
        let mut rng = seeded(0, "never");
        let loss = clf.example_loss(&mut g, &params, &d, false, &mut rng).unwrap();
        let grads = g.backward(loss).unwrap();
        let pg = g.param_grads(&grads);
        assert!(pg.keys().all(|k| !k.starts_with("gist.")));
        assert!(pg.contains_key("emb"));
    }

    #[test]
    fn label_mismatch_between_splits_is_an_error() {
        let docs = tiny_docs();
        let (clf, mut params) =
            Classifier::build(tiny_cfg(), Mode::Baseline, &docs, None, None, 3).unwrap();
        let bad_dev = vec![doc("d", "alpha", "mystery")];
        let mut sink = Vec::new();
        let err = clf
            .train(&mut params, &docs, &bad_dev, &docs, 3, &mut sink)
            .unwrap_err();
        assert!(err.to_string().contains("label set mismatch"));
    }

    #[test]
    fn overfits_the_eight_document_toy_set() {
        let docs = tiny_docs();
        let cfg = ClassifierConfig { epochs: 40, lr: 0.05, ..tiny_cfg() };
        let (clf, mut params) =
            Classifier::build(cfg, Mode::Baseline, &docs, None, None, 5).unwrap();
        let mut sink = Vec::new();
        let metrics = clf.train(&mut params, &docs, &docs, &docs, 5, &mut sink).unwrap();
        assert_eq!(metrics.test_accuracy, 1.0, "toy set should be fully memorized");
        assert_eq!(metrics.epochs.len(), 40);
    }

    #[test]
    fn identical_seeds_give_identical_metrics() {
        let docs = tiny_docs();
        let run = || {
            let cfg = ClassifierConfig { dropout: 0.2, ..tiny_cfg() };
            let (clf, mut params) =
                Classifier::build(cfg, Mode::Baseline, &docs, None, None, 11).unwrap();
            let mut sink = Vec::new();
            let m = clf.train(&mut params, &docs, &docs, &docs, 11, &mut sink).unwrap();
            serde_json::to_string(&m).unwrap()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn bundle_roundtrip_preserves_gist_payload() {
        let docs = tiny_docs();
        let bundle = tiny_student_bundle(&docs);
        let (clf, params) =
            Classifier::build(tiny_cfg(), Mode::Gd, &docs, Some(&bundle), None, 3).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("clf.ckpt");
        ClassifierBundle { classifier: clf, params, seed: 3 }.save(&path).unwrap();
        let loaded = ClassifierBundle::load(&path).unwrap();
        assert_eq!(loaded.classifier.mode, Mode::Gd);
        assert!(loaded.classifier.gist.is_some());
        assert_eq!(loaded.classifier.labels, vec!["neg".to_string(), "pos".to_string()]);
        let text = toks("alpha beta gamma");
        // The reloaded classifier must reproduce posteriors exactly.
        let before = ClassifierBundle::load(&path).unwrap();
        let a = before.classifier.classify(&before.params, &text).unwrap();
        let b = loaded.classifier.classify(&loaded.params, &text).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn comparison_report_summarizes_modes() {
        let docs = tiny_docs();
        let bundle = tiny_student_bundle(&docs);
        let cfg = ClassifierConfig { epochs: 2, ..tiny_cfg() };
        let mut sink = Vec::new();
        let report = run_comparison(
            &cfg,
            &[Mode::Baseline, Mode::Gd],
            &[1, 2],
            &docs,
            &docs,
            &docs,
            Some(&bundle),
            &mut sink,
        )
        .unwrap();
        assert_eq!(report.runs.len(), 4);
        assert_eq!(report.summaries.len(), 2);
        let base = report.summary_for(Mode::Baseline).unwrap();
        assert_eq!(base.accuracies.len(), 2);
        let table = report.table();
        assert!(table.contains("baseline"));
        assert!(table.contains("+GD"));
    }

    #[test]
    fn mode_strings_parse() {
        assert_eq!("baseline".parse::<Mode>().unwrap(), Mode::Baseline);
        assert_eq!("GD".parse::<Mode>().unwrap(), Mode::Gd);
        assert_eq!("+NP".parse::<Mode>().unwrap(), Mode::Np);
        assert!("other".parse::<Mode>().is_err());
    }
}
