//! Pipeline command line: every stage — synthetic data, teacher training,
//! attention recording, transfer-set construction, student distillation,
//! gist inference, classifier training, evaluation, heatmaps — as one
//! subcommand each.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};

use gist::checkpoint::file_sha256;
use gist::classifier::{run_comparison, Classifier, ClassifierBundle, Mode};
use gist::config::{resolve_seed, RunConfig};
use gist::distill::{build_transfer_set, full_scale_param_counts, train_student, TransferSet};
use gist::error::{Error, Result};
use gist::heatmap::{render_html, render_terminal};
use gist::rng::seeded;
use gist::student::{Student, StudentBundle};
use gist::synthetic::{generate, toy_pairs};
use gist::teacher::{Teacher, TeacherBundle};
use gist::text::corpus::{load_docs, load_pairs, write_pairs};
use gist::text::embed::EmbeddingTable;
use gist::text::vocab::{CharVocab, Vocabulary};
use gist::text::tokenize;

#[derive(Parser)]
#[command(
    name = "gist",
    version,
    about = "Attention distillation pipeline: train a pointer-generator summarizer, distill its attention into a gist detector, and plug the gist into downstream classifiers."
)]
struct Cli {
    /// TOML run configuration; omitted sections use defaults.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Override one config value, e.g. --set teacher.epochs=2 (repeatable).
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Global seed; overrides the config file and the GD_SEED variable.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Train the pointer-generator teacher on {"id","source","summary"} JSONL.
    TrainTeacher {
        /// Summarization pairs, one JSON object per line.
        #[arg(long, value_name = "FILE")]
        pairs: PathBuf,
        /// Where to write the teacher checkpoint.
        #[arg(long, value_name = "FILE")]
        out: PathBuf,
        /// Pretrained word embeddings in text format (word v1 v2 ...).
        #[arg(long, value_name = "FILE")]
        embeddings: Option<PathBuf>,
        /// Also write per-step training logs to this JSONL file.
        #[arg(long, value_name = "FILE")]
        curve: Option<PathBuf>,
    },
    /// Replay a teacher over pairs and dump raw attention logit rows.
    RecordAttention {
        #[arg(long, value_name = "FILE")]
        teacher: PathBuf,
        #[arg(long, value_name = "FILE")]
        pairs: PathBuf,
        /// Output JSONL: {"id", "rows": [[logit, ...], ...]} per pair.
        #[arg(long, value_name = "FILE")]
        out: PathBuf,
        /// Decode greedily instead of teacher-forcing the gold summary.
        #[arg(long)]
        greedy: bool,
    },
    /// Distill recorded attention into per-document soft targets.
    BuildTransferSet {
        /// Teacher checkpoint(s); repeat the flag for an ensemble.
        #[arg(long = "teacher", value_name = "FILE", required = true)]
        teachers: Vec<PathBuf>,
        #[arg(long, value_name = "FILE")]
        pairs: PathBuf,
        #[arg(long, value_name = "FILE")]
        out: PathBuf,
    },
    /// Train the gist detector on a transfer set.
    TrainStudent {
        #[arg(long, value_name = "FILE")]
        transfer: PathBuf,
        #[arg(long, value_name = "FILE")]
        out: PathBuf,
        #[arg(long, value_name = "FILE")]
        curve: Option<PathBuf>,
    },
    /// Run a trained gist detector over documents.
    InferGist {
        #[arg(long, value_name = "FILE")]
        student: PathBuf,
        /// Documents as JSONL {"id","text",...}; mutually exclusive with --text.
        #[arg(long, value_name = "FILE", conflicts_with = "text")]
        docs: Option<PathBuf>,
        /// A single document given inline.
        #[arg(long)]
        text: Option<String>,
        /// Output JSONL (stdout when omitted).
        #[arg(long, value_name = "FILE")]
        out: Option<PathBuf>,
    },
    /// Train the downstream classifier (baseline, +GD, or +NP).
    TrainClassifier {
        /// baseline, gd, or np.
        #[arg(long)]
        mode: Mode,
        #[arg(long, value_name = "FILE")]
        train: PathBuf,
        #[arg(long, value_name = "FILE")]
        dev: PathBuf,
        #[arg(long, value_name = "FILE")]
        test: PathBuf,
        /// Gist-detector checkpoint (required for gd and np).
        #[arg(long, value_name = "FILE")]
        gist: Option<PathBuf>,
        #[arg(long, value_name = "FILE")]
        embeddings: Option<PathBuf>,
        #[arg(long, value_name = "FILE")]
        out: PathBuf,
        /// Metrics report JSON (stdout when omitted).
        #[arg(long, value_name = "FILE")]
        metrics: Option<PathBuf>,
    },
    /// Compare classifier modes across seeds and report a table.
    Evaluate {
        #[arg(long, value_name = "FILE")]
        train: PathBuf,
        #[arg(long, value_name = "FILE")]
        dev: PathBuf,
        #[arg(long, value_name = "FILE")]
        test: PathBuf,
        #[arg(long, value_name = "FILE")]
        gist: Option<PathBuf>,
        /// Comma-separated modes.
        #[arg(long, default_value = "baseline,gd,np")]
        modes: String,
        /// Comma-separated seeds.
        #[arg(long, default_value = "1,2,3,4,5")]
        seeds: String,
        /// Full comparison report JSON.
        #[arg(long, value_name = "FILE")]
        out: Option<PathBuf>,
    },
    /// Render a document's gist weights as a shaded heatmap.
    Heatmap {
        #[arg(long, value_name = "FILE")]
        student: PathBuf,
        #[arg(long)]
        text: String,
        /// Emit HTML instead of ANSI terminal shading.
        #[arg(long)]
        html: bool,
        /// Output file (stdout when omitted).
        #[arg(long, value_name = "FILE")]
        out: Option<PathBuf>,
    },
    /// Generate the seeded synthetic keyword-copy corpus.
    GenSynthetic {
        /// Directory for the corpus files.
        #[arg(long, value_name = "DIR")]
        out_dir: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

/// Parse the config file (if any) and apply --set overrides on the raw
/// TOML tree before deserializing, so overrides face the same strict
/// unknown-key checks as file contents.
fn load_config(path: Option<&Path>, sets: &[String]) -> Result<RunConfig> {
    let mut tree: toml::Value = match path {
        None => toml::Value::Table(Default::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| Error::io(p.display().to_string(), e))?;
            toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", p.display())))?
        }
    };
    for spec in sets {
        apply_set(&mut tree, spec)?;
    }
    let cfg: RunConfig =
        tree.try_into().map_err(|e| Error::Config(format!("--set produced an invalid config: {e}")))?;
    cfg.validate()?;
    Ok(cfg)
}

fn apply_set(root: &mut toml::Value, spec: &str) -> Result<()> {
    let (path, raw) = spec
        .split_once('=')
        .ok_or_else(|| Error::InvalidArg(format!("--set expects KEY=VALUE, got {spec:?}")))?;
    // Parse the value as TOML so numbers and booleans keep their types;
    // fall back to a plain string.
    let value = toml::from_str::<toml::Value>(&format!("v = {raw}"))
        .ok()
        .and_then(|v| v.get("v").cloned())
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    let mut node = root;
    let parts: Vec<&str> = path.split('.').collect();
    for part in &parts[..parts.len() - 1] {
        let table = node
            .as_table_mut()
            .ok_or_else(|| Error::InvalidArg(format!("--set path {path:?} crosses a non-table")))?;
        node = table
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(Default::default()));
    }
    let table = node
        .as_table_mut()
        .ok_or_else(|| Error::InvalidArg(format!("--set path {path:?} crosses a non-table")))?;
    table.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

fn subcommand_name(cmd: &Cmd) -> &'static str {
    match cmd {
        Cmd::TrainTeacher { .. } => "train-teacher",
        Cmd::RecordAttention { .. } => "record-attention",
        Cmd::BuildTransferSet { .. } => "build-transfer-set",
        Cmd::TrainStudent { .. } => "train-student",
        Cmd::InferGist { .. } => "infer-gist",
        Cmd::TrainClassifier { .. } => "train-classifier",
        Cmd::Evaluate { .. } => "evaluate",
        Cmd::Heatmap { .. } => "heatmap",
        Cmd::GenSynthetic { .. } => "gen-synthetic",
    }
}

fn writer_for(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir.display().to_string(), e))?;
    }
    Ok(BufWriter::new(
        File::create(path).map_err(|e| Error::io(path.display().to_string(), e))?,
    ))
}

/// Emit `text` to the file when given, to stdout otherwise.
fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => {
            let mut w = writer_for(p)?;
            w.write_all(text.as_bytes()).map_err(|e| Error::io(p.display().to_string(), e))?;
            w.flush().map_err(|e| Error::io(p.display().to_string(), e))
        }
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn load_embeddings(path: Option<&Path>, seed: u64) -> Result<Option<EmbeddingTable>> {
    path.map(|p| EmbeddingTable::load(p, seed)).transpose()
}

/// Minimal reader for inference inputs: JSONL with "id" and a body in
/// either "text" (labeled documents) or "source" (summarization pairs);
/// extra fields are ignored.
fn load_plain_docs(path: &Path, max_len: usize) -> Result<Vec<(String, Vec<String>)>> {
    let text =
        std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let v: serde_json::Value = serde_json::from_str(line)
            .map_err(|e| Error::Parse { line: i + 1, msg: e.to_string() })?;
        let id = v
            .get("id")
            .and_then(|x| x.as_str())
            .ok_or_else(|| Error::Parse { line: i + 1, msg: "missing string field \"id\"".into() })?;
        let body = v
            .get("text")
            .or_else(|| v.get("source"))
            .and_then(|x| x.as_str())
            .ok_or_else(|| Error::Parse {
                line: i + 1,
                msg: "missing string field \"text\" or \"source\"".into(),
            })?;
        let mut tokens = tokenize(body);
        tokens.truncate(max_len);
        if tokens.is_empty() {
            return Err(Error::Parse {
                line: i + 1,
                msg: format!("example {id}: text must tokenize to at least one token"),
            });
        }
        out.push((id.to_string(), tokens));
    }
    if out.is_empty() {
        return Err(Error::EmptyInput(format!("{} holds no documents", path.display())));
    }
    Ok(out)
}

fn run(cli: Cli) -> Result<()> {
    let cfg = load_config(cli.config.as_deref(), &cli.set)?;
    let seed = resolve_seed(cli.seed, &cfg)?;
    let name = subcommand_name(&cli.cmd);
    println!("{}", cfg.resolved_line(seed, name)?);
    let started = Instant::now();

    match cli.cmd {
        Cmd::TrainTeacher { pairs, out, embeddings, curve } => {
            let data = load_pairs(&pairs, cfg.teacher.max_source_len, cfg.teacher.max_summary_len)?;
            let tokens = || {
                data.iter()
                    .flat_map(|p| p.source.iter().chain(p.summary.iter()).map(String::as_str))
            };
            let vocab = Vocabulary::build(tokens(), cfg.teacher.vocab_size)?;
            let char_vocab = CharVocab::from_tokens(tokens());
            let teacher = Teacher::new(cfg.teacher.clone(), vocab, char_vocab)?;
            let pretrained = load_embeddings(embeddings.as_deref(), seed)?;
            let mut rng = seeded(seed, "teacher-init");
            let mut params = teacher.init_params(pretrained.as_ref(), &mut rng)?;
            let mut stdout = std::io::stdout().lock();
            let mut curve_w = curve.as_deref().map(writer_for).transpose()?;
            let report = teacher.train(
                &mut params,
                &data,
                seed,
                &mut stdout,
                curve_w.as_mut().map(|w| w as &mut dyn Write),
            )?;
            drop(stdout);
            if let Some(mut w) = curve_w {
                w.flush().map_err(|e| Error::io("<curve>", e))?;
            }
            TeacherBundle { teacher, params, seed }.save(&out)?;
            println!(
                "trained teacher on {} pairs for {} steps (final loss {:.4}); checkpoint: {}",
                data.len(),
                report.steps,
                report.final_loss,
                out.display()
            );
        }

        Cmd::RecordAttention { teacher, pairs, out, greedy } => {
            let bundle = TeacherBundle::load(&teacher)?;
            let cfgt = &bundle.teacher.cfg;
            let data = load_pairs(&pairs, cfgt.max_source_len, cfgt.max_summary_len)?;
            let mut w = writer_for(&out)?;
            let mut rows_total = 0usize;
            for pair in &data {
                let rows = bundle.teacher.record_attention(&bundle.params, pair, greedy)?;
                rows_total += rows.len();
                let line = serde_json::json!({ "id": pair.id, "rows": rows });
                writeln!(w, "{line}").map_err(|e| Error::io(out.display().to_string(), e))?;
            }
            w.flush().map_err(|e| Error::io(out.display().to_string(), e))?;
            println!(
                "recorded {} attention rows over {} pairs to {}",
                rows_total,
                data.len(),
                out.display()
            );
        }

        Cmd::BuildTransferSet { teachers, pairs, out } => {
            let mut bundles = Vec::with_capacity(teachers.len());
            let mut digests = Vec::with_capacity(teachers.len());
            for p in &teachers {
                digests.push(file_sha256(p)?);
                bundles.push(TeacherBundle::load(p)?);
            }
            let cfgt = &bundles[0].teacher.cfg;
            let data = load_pairs(&pairs, cfgt.max_source_len, cfgt.max_summary_len)?;
            let ts = build_transfer_set(
                &bundles,
                &digests,
                &data,
                cfg.distill.temperature,
                cfg.distill.mode,
                cfg.distill.geometric,
            )?;
            ts.save(&out)?;
            println!(
                "built transfer set: {} documents, {} teacher(s), T={}; wrote {}",
                ts.records.len(),
                ts.header.teachers.len(),
                ts.header.t,
                out.display()
            );
        }

        Cmd::TrainStudent { transfer, out, curve } => {
            let ts = TransferSet::load(&transfer)?;
            let vocab = Vocabulary::from_token_list(ts.header.vocab.clone())?;
            let char_vocab = CharVocab::from_tokens(ts.header.vocab.iter().map(String::as_str));
            let student = Student::new(cfg.student.clone(), vocab, char_vocab)?;
            let mut rng = seeded(seed, "student-init");
            let mut params = student.init_params(None, &mut rng)?;
            let mut stdout = std::io::stdout().lock();
            let mut curve_w = curve.as_deref().map(writer_for).transpose()?;
            let report = train_student(
                &student,
                &mut params,
                &ts,
                seed,
                &mut stdout,
                curve_w.as_mut().map(|w| w as &mut dyn Write),
            )?;
            drop(stdout);
            if let Some(mut w) = curve_w {
                w.flush().map_err(|e| Error::io("<curve>", e))?;
            }
            StudentBundle { student, params, seed }.save(&out)?;
            println!(
                "distilled student over {} documents for {} steps (final loss {:.4}); checkpoint: {}",
                ts.records.len(),
                report.steps,
                report.final_loss,
                out.display()
            );
        }

        Cmd::InferGist { student, docs, text, out } => {
            let bundle = StudentBundle::load(&student)?;
            let inputs: Vec<(String, Vec<String>)> = match (docs, text) {
                (Some(path), None) => load_plain_docs(&path, bundle.student.cfg.max_len)?,
                (None, Some(body)) => {
                    let mut tokens = tokenize(&body);
                    tokens.truncate(bundle.student.cfg.max_len);
                    vec![("text".to_string(), tokens)]
                }
                _ => {
                    return Err(Error::InvalidArg(
                        "provide exactly one of --docs or --text".into(),
                    ))
                }
            };
            let weights = bundle.student.gist_batch(&bundle.params, &inputs)?;
            let mut body = String::new();
            for gw in &weights {
                body.push_str(&serde_json::to_string(gw)?);
                body.push('\n');
            }
            emit(out.as_deref(), &body)?;
        }

        Cmd::TrainClassifier { mode, train, dev, test, gist, embeddings, out, metrics } => {
            let train_docs = load_docs(&train, cfg.classifier.max_len)?;
            let dev_docs = load_docs(&dev, cfg.classifier.max_len)?;
            let test_docs = load_docs(&test, cfg.classifier.max_len)?;
            let gist_bundle = gist.as_deref().map(StudentBundle::load).transpose()?;
            let pretrained = load_embeddings(embeddings.as_deref(), seed)?;
            let (clf, mut params) = Classifier::build(
                cfg.classifier.clone(),
                mode,
                &train_docs,
                gist_bundle.as_ref(),
                pretrained.as_ref(),
                seed,
            )?;
            let mut stdout = std::io::stdout().lock();
            let report =
                clf.train(&mut params, &train_docs, &dev_docs, &test_docs, seed, &mut stdout)?;
            drop(stdout);
            ClassifierBundle { classifier: clf, params, seed }.save(&out)?;
            emit(
                metrics.as_deref(),
                &format!("{}\n", serde_json::to_string_pretty(&report)?),
            )?;
            println!(
                "trained {} classifier; test accuracy {:.4}; checkpoint: {}",
                report.mode, report.test_accuracy, out.display()
            );
        }

        Cmd::Evaluate { train, dev, test, gist, modes, seeds, out } => {
            let train_docs = load_docs(&train, cfg.classifier.max_len)?;
            let dev_docs = load_docs(&dev, cfg.classifier.max_len)?;
            let test_docs = load_docs(&test, cfg.classifier.max_len)?;
            let gist_bundle = gist.as_deref().map(StudentBundle::load).transpose()?;
            let mode_list: Vec<Mode> = modes
                .split(',')
                .map(|m| m.trim().parse())
                .collect::<Result<_>>()?;
            let seed_list: Vec<u64> = seeds
                .split(',')
                .map(|s| {
                    s.trim().parse::<u64>().map_err(|_| {
                        Error::InvalidArg(format!("seeds must be unsigned integers, got {s:?}"))
                    })
                })
                .collect::<Result<_>>()?;
            let mut stdout = std::io::stdout().lock();
            let report = run_comparison(
                &cfg.classifier,
                &mode_list,
                &seed_list,
                &train_docs,
                &dev_docs,
                &test_docs,
                gist_bundle.as_ref(),
                &mut stdout,
            )?;
            drop(stdout);
            print!("{}", report.table());
            let (teacher_n, student_n) = full_scale_param_counts()?;
            println!(
                "full-scale parameter counts: teacher {teacher_n}, student {student_n} ({:.1}% of teacher)",
                100.0 * student_n as f64 / teacher_n as f64
            );
            if let Some(p) = out {
                emit(Some(&p), &format!("{}\n", serde_json::to_string_pretty(&report)?))?;
                println!("wrote comparison report to {}", p.display());
            }
        }

        Cmd::Heatmap { student, text, html, out } => {
            let bundle = StudentBundle::load(&student)?;
            let mut tokens = tokenize(&text);
            tokens.truncate(bundle.student.cfg.max_len);
            let gw = bundle.student.gist_forward(&bundle.params, "text", &tokens)?;
            let rendered = if html {
                render_html(&gw.tokens, &gw.weights)?
            } else {
                render_terminal(&gw.tokens, &gw.weights)?
            };
            emit(out.as_deref(), &rendered)?;
        }

        Cmd::GenSynthetic { out_dir } => {
            let corpus = generate(&cfg.synthetic, seed)?;
            corpus.write(&out_dir)?;
            write_pairs(&out_dir.join("toy-overfit.jsonl"), &toy_pairs(seed))?;
            println!(
                "wrote synthetic corpus to {}: {} summarization train pairs, {} test pairs, {}/{}/{} classification docs, toy overfit set, lexicons.json",
                out_dir.display(),
                corpus.summ_train.len(),
                corpus.summ_test.len(),
                corpus.cls_train.len(),
                corpus.cls_dev.len(),
                corpus.cls_test.len()
            );
        }
    }

    // Timing goes to stderr so artifacts and stdout reports stay
    // byte-reproducible across runs.
    eprintln!(
        "{}",
        serde_json::json!({
            "phase": "timing",
            "subcommand": name,
            "seconds": started.elapsed().as_secs_f64(),
        })
    );
    Ok(())
}
