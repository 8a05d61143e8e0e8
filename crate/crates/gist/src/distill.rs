//! Distillation of teacher attention into student soft targets: tempered
//! step-averaged attention distributions, the on-disk transfer-set format,
//! and the student training loop against those targets.

use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::numeric::softmax_t;
use crate::optim::{adam_step, clip_global_norm, AdamConfig, AdamState};
use crate::params::ParamSet;
use crate::rng::seeded;
use crate::student::Student;
use crate::teacher::TeacherBundle;
use crate::tensor::Tensor;
use crate::text::corpus::ArticlePair;

/// Soft target over source positions: the arithmetic mean, over decoding
/// steps, of each step's attention logits softened at `temperature`.
pub fn soft_target(rows: &[Vec<f64>], temperature: f64) -> Result<Vec<f64>> {
    if rows.is_empty() {
        return Err(Error::EmptyInput("soft target needs at least one attention row".into()));
    }
    let m = rows[0].len();
    let mut q = vec![0.0; m];
    for row in rows {
        if row.len() != m {
            return Err(Error::ShapeMismatch {
                op: "soft_target".into(),
                detail: format!("attention rows disagree in length: {} vs {m}", row.len()),
            });
        }
        let p = softmax_t(row, temperature)?;
        for (qi, pi) in q.iter_mut().zip(&p) {
            *qi += pi;
        }
    }
    let inv = 1.0 / rows.len() as f64;
    q.iter_mut().for_each(|v| *v *= inv);
    Ok(q)
}

/// Geometric-mean variant: renormalized exp of the mean log probability.
/// Sharper than the arithmetic mean; kept behind a config switch.
pub fn soft_target_geometric(rows: &[Vec<f64>], temperature: f64) -> Result<Vec<f64>> {
    if rows.is_empty() {
        return Err(Error::EmptyInput("soft target needs at least one attention row".into()));
    }
    let m = rows[0].len();
    let mut acc = vec![0.0; m];
    for row in rows {
        if row.len() != m {
            return Err(Error::ShapeMismatch {
                op: "soft_target_geometric".into(),
                detail: format!("attention rows disagree in length: {} vs {m}", row.len()),
            });
        }
        let p = softmax_t(row, temperature)?;
        for (ai, pi) in acc.iter_mut().zip(&p) {
            *ai += pi.ln();
        }
    }
    let inv = 1.0 / rows.len() as f64;
    let mx = acc.iter().cloned().fold(f64::NEG_INFINITY, f64::max) * inv;
    let mut q: Vec<f64> = acc.iter().map(|a| (a * inv - mx).exp()).collect();
    let z: f64 = q.iter().sum();
    q.iter_mut().for_each(|v| *v /= z);
    Ok(q)
}

/// Mean of per-teacher soft targets for the same document.
pub fn ensemble_soft_target(targets: &[Vec<f64>]) -> Result<Vec<f64>> {
    if targets.is_empty() {
        return Err(Error::EmptyInput("ensemble of zero teachers".into()));
    }
    let m = targets[0].len();
    let mut q = vec![0.0; m];
    for t in targets {
        if t.len() != m {
            return Err(Error::ShapeMismatch {
                op: "ensemble_soft_target".into(),
                detail: format!("teacher targets disagree in length: {} vs {m}", t.len()),
            });
        }
        for (qi, ti) in q.iter_mut().zip(t) {
            *qi += ti;
        }
    }
    let inv = 1.0 / targets.len() as f64;
    q.iter_mut().for_each(|v| *v *= inv);
    Ok(q)
}

/// Cross-entropy distillation loss: -sum_i q_i ln p_i.
pub fn distill_loss(q: &[f64], p: &[f64]) -> Result<f64> {
    if q.len() != p.len() {
        return Err(Error::ShapeMismatch {
            op: "distill_loss".into(),
            detail: format!("target length {} vs prediction length {}", q.len(), p.len()),
        });
    }
    let mut loss = 0.0;
    for (&qi, &pi) in q.iter().zip(p) {
        if !(pi.is_finite() && pi > 0.0) {
            return Err(Error::InvalidArg(format!("distill_loss needs positive predictions, got {pi}")));
        }
        if qi != 0.0 {
            loss -= qi * pi.ln();
        }
    }
    Ok(loss)
}

// ── Transfer-set format ────────────────────────────────────────────────────

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RecordMode {
    /// Teacher-forced replay of the gold summary.
    Forced,
    /// Greedy decoding.
    Greedy,
}

pub const TRANSFER_FORMAT: &str = "gd-transfer-v1";

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransferHeader {
    pub format: String,
    /// Checkpoint digests of the teachers that produced this set.
    pub teachers: Vec<String>,
    #[serde(rename = "T")]
    pub t: f64,
    #[serde(rename = "K")]
    pub k: usize,
    pub mode: RecordMode,
    /// Token list of the shared teacher vocabulary, in id order.
    pub vocab: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransferRecord {
    pub id: String,
    /// Source token ids under the header vocabulary.
    pub tokens: Vec<usize>,
    /// Soft target over source positions.
    pub q: Vec<f64>,
    #[serde(rename = "T")]
    pub t: f64,
    #[serde(rename = "K")]
    pub k: usize,
    pub mode: RecordMode,
}

#[derive(Debug, Clone)]
pub struct TransferSet {
    pub header: TransferHeader,
    pub records: Vec<TransferRecord>,
}

/// JSON formatter that writes every float with 17 significant digits, so a
/// round-trip through text reproduces the exact f64.
struct PreciseFormatter;

impl serde_json::ser::Formatter for PreciseFormatter {
    fn write_f64<W>(&mut self, writer: &mut W, value: f64) -> std::io::Result<()>
    where
        W: ?Sized + std::io::Write,
    {
        write!(writer, "{value:.16e}")
    }
}

/// Serialize to a JSON string with full-precision floats.
pub fn to_precise_json<T: Serialize>(value: &T) -> Result<String> {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, PreciseFormatter);
    value.serialize(&mut ser)?;
    Ok(String::from_utf8(buf).expect("serde_json writes UTF-8"))
}

impl TransferSet {
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut out = Vec::new();
        out.extend_from_slice(to_precise_json(&self.header)?.as_bytes());
        out.push(b'\n');
        for rec in &self.records {
            out.extend_from_slice(to_precise_json(rec)?.as_bytes());
            out.push(b'\n');
        }
        std::fs::write(path, out).map_err(|e| Error::io(path.display().to_string(), e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f = std::fs::File::open(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        let mut lines = BufReader::new(f).lines().enumerate();
        let header: TransferHeader = match lines.next() {
            None => return Err(Error::EmptyInput(format!("{} is empty", path.display()))),
            Some((_, line)) => {
                let line = line.map_err(|e| Error::io(path.display().to_string(), e))?;
                serde_json::from_str(&line)
                    .map_err(|e| Error::Parse { line: 1, msg: e.to_string() })?
            }
        };
        if header.format != TRANSFER_FORMAT {
            return Err(Error::Parse {
                line: 1,
                msg: format!("unsupported transfer format {:?}", header.format),
            });
        }
        let mut records = Vec::new();
        for (i, line) in lines {
            let line = line.map_err(|e| Error::io(path.display().to_string(), e))?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: TransferRecord = serde_json::from_str(&line)
                .map_err(|e| Error::Parse { line: i + 1, msg: e.to_string() })?;
            if rec.tokens.is_empty() || rec.tokens.len() != rec.q.len() {
                return Err(Error::Parse {
                    line: i + 1,
                    msg: format!(
                        "record {} has {} tokens but {} target entries",
                        rec.id,
                        rec.tokens.len(),
                        rec.q.len()
                    ),
                });
            }
            if rec.t != header.t || rec.k != header.k || rec.mode != header.mode {
                return Err(Error::Parse {
                    line: i + 1,
                    msg: format!("record {} disagrees with the header settings", rec.id),
                });
            }
            records.push(rec);
        }
        Ok(TransferSet { header, records })
    }
}

/// Replay every teacher over every pair and distill the recorded attention
/// into one soft target per document. All teachers must share a vocabulary.
pub fn build_transfer_set(
    bundles: &[TeacherBundle],
    digests: &[String],
    pairs: &[ArticlePair],
    temperature: f64,
    mode: RecordMode,
    geometric: bool,
) -> Result<TransferSet> {
    if bundles.is_empty() {
        return Err(Error::EmptyInput("transfer set needs at least one teacher".into()));
    }
    if bundles.len() != digests.len() {
        return Err(Error::InvalidArg("one digest per teacher required".into()));
    }
    if pairs.is_empty() {
        return Err(Error::EmptyInput("transfer set needs at least one pair".into()));
    }
    let first = &bundles[0].teacher;
    for b in &bundles[1..] {
        if b.teacher.vocab.token_list() != first.vocab.token_list()
            || b.teacher.char_vocab.char_list() != first.char_vocab.char_list()
        {
            return Err(Error::VocabMismatch(
                "ensemble teachers must share one vocabulary".into(),
            ));
        }
    }

    let k = bundles.len();
    let mut records = Vec::with_capacity(pairs.len());
    for pair in pairs {
        let mut per_teacher = Vec::with_capacity(k);
        for b in bundles {
            let rows =
                b.teacher.record_attention(&b.params, pair, mode == RecordMode::Greedy)?;
            if rows.is_empty() {
                return Err(Error::EmptyInput(format!(
                    "teacher produced no attention rows for pair {}",
                    pair.id
                )));
            }
            let q = if geometric {
                soft_target_geometric(&rows, temperature)?
            } else {
                soft_target(&rows, temperature)?
            };
            per_teacher.push(q);
        }
        let q = ensemble_soft_target(&per_teacher)?;
        records.push(TransferRecord {
            id: pair.id.clone(),
            tokens: first.vocab.ids(&pair.source),
            q,
            t: temperature,
            k,
            mode,
        });
    }

    Ok(TransferSet {
        header: TransferHeader {
            format: TRANSFER_FORMAT.into(),
            teachers: digests.to_vec(),
            t: temperature,
            k,
            mode,
            vocab: first.vocab.token_list().to_vec(),
        },
        records,
    })
}

#[derive(Debug, Serialize)]
struct StepLog<'a> {
    phase: &'a str,
    step: u64,
    epoch: usize,
    loss: f64,
    grad_norm: f64,
}

/// Train the student against a transfer set with Adam, batch gradient
/// accumulation and global-norm clipping. The student's temperature must
/// match the one the targets were built with.
pub fn train_student(
    student: &Student,
    params: &mut ParamSet,
    ts: &TransferSet,
    seed: u64,
    log: &mut dyn Write,
    mut curve: Option<&mut dyn Write>,
) -> Result<crate::teacher::TrainReport> {
    if student.cfg.temperature != ts.header.t {
        return Err(Error::Config(format!(
            "student temperature {} does not match transfer-set temperature {}",
            student.cfg.temperature, ts.header.t
        )));
    }
    if student.vocab.token_list() != ts.header.vocab {
        return Err(Error::VocabMismatch(
            "student vocabulary differs from the transfer-set vocabulary".into(),
        ));
    }
    if ts.records.is_empty() {
        return Err(Error::EmptyInput("transfer set has no records".into()));
    }

    // Decode ids back to token strings once, outside the epoch loop.
    let docs: Vec<(usize, Vec<String>)> = ts
        .records
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let toks: Result<Vec<String>> =
                r.tokens.iter().map(|&id| Ok(student.vocab.token(id)?.to_string())).collect();
            Ok((i, toks?))
        })
        .collect::<Result<_>>()?;

    let mut rng = seeded(seed, "student-train");
    let adam_cfg = AdamConfig { lr: student.cfg.lr, ..AdamConfig::default() };
    let mut adam = AdamState::new();
    let mut step: u64 = 0;
    let mut last_loss = f64::NAN;

    for epoch in 0..student.cfg.epochs {
        let mut order: Vec<usize> = (0..docs.len()).collect();
        order.shuffle(&mut rng);
        for chunk in order.chunks(student.cfg.batch_size) {
            let mut acc: std::collections::BTreeMap<String, Tensor> = Default::default();
            let mut batch_loss = 0.0;
            for &i in chunk {
                let (rec_idx, tokens) = &docs[i];
                let rec = &ts.records[*rec_idx];
                let mut g = Graph::new();
                let logits = student.forward_scores(&mut g, params, tokens)?;
                let logp = g.log_softmax(logits, student.cfg.temperature)?;
                let qn = g.leaf(Tensor::vector(rec.q.clone()))?;
                let dot = g.dot(qn, logp)?;
                let loss = g.scale(dot, -1.0)?;
                let lv = g.value(loss).data[0];
                if !lv.is_finite() {
                    return Err(Error::Diverged {
                        step,
                        msg: format!("non-finite distillation loss on record {}", rec.id),
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
            let grad_norm = clip_global_norm(&mut acc, student.cfg.clip)?;
            adam_step(params, &acc, &mut adam, &adam_cfg)?;
            step += 1;
            last_loss = batch_loss * inv;
            let rec = StepLog { phase: "student", step, epoch, loss: last_loss, grad_norm };
            let line = serde_json::to_string(&rec)?;
            writeln!(log, "{line}").map_err(|e| Error::io("<log>", e))?;
            if let Some(w) = curve.as_deref_mut() {
                writeln!(w, "{line}").map_err(|e| Error::io("<curve>", e))?;
            }
        }
    }
    Ok(crate::teacher::TrainReport { steps: step, final_loss: last_loss })
}

/// Parameter counts for the full-scale default teacher and student over a
/// shared synthetic vocabulary. The whole point of distillation is reach:
/// the student must be the smaller model, and reports surface both numbers.
pub fn full_scale_param_counts() -> Result<(usize, usize)> {
    let tcfg = crate::teacher::TeacherConfig::default();
    let scfg = crate::student::StudentConfig::default();
    let mut tokens: Vec<String> =
        crate::text::vocab::RESERVED.iter().map(|s| s.to_string()).collect();
    tokens.extend((tokens.len()..tcfg.vocab_size).map(|i| format!("w{i}")));
    let vocab = crate::text::vocab::Vocabulary::from_token_list(tokens)?;
    // Stand-in for a realistic character inventory (letters, digits, a few
    // punctuation marks): only the count affects the parameter total.
    let chars: String = ('a'..='z')
        .chain('0'..='9')
        .chain("ABCDEFGHIJKLMNOPQRSTUVWXYZ.,;:!?'-\"()".chars())
        .collect();
    let char_vocab = crate::text::vocab::CharVocab::from_char_list(chars.chars().collect());
    let teacher = crate::teacher::Teacher::new(tcfg, vocab.clone(), char_vocab.clone())?;
    let student = Student::new(scfg, vocab, char_vocab)?;
    Ok((teacher.param_count(), student.param_count()))
}
