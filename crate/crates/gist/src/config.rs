//! Run configuration: one TOML file with per-stage sections, strict about
//! unknown keys, plus the global seed resolution chain.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::classifier::ClassifierConfig;
use crate::distill::RecordMode;
use crate::error::{Error, Result};
use crate::student::StudentConfig;
use crate::synthetic::SyntheticConfig;
use crate::teacher::TeacherConfig;

/// Transfer-set construction settings.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct DistillConfig {
    /// Softening temperature applied to recorded attention logits.
    pub temperature: f64,
    /// How decoder inputs are chosen while recording attention.
    pub mode: RecordMode,
    /// Average per-step distributions geometrically instead of
    /// arithmetically (renormalized).
    pub geometric: bool,
}

impl Default for DistillConfig {
    fn default() -> Self {
        DistillConfig { temperature: 4.0, mode: RecordMode::Forced, geometric: false }
    }
}

impl DistillConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.temperature.is_finite() && self.temperature > 0.0) {
            return Err(Error::Config(format!(
                "distillation temperature must be positive and finite, got {}",
                self.temperature
            )));
        }
        Ok(())
    }
}

/// Top-level configuration tree. Every section falls back to its defaults,
/// and unknown keys anywhere are an error.
#[derive(Debug, Clone, Default, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Global seed; later overridden by --seed, and falling back to the
    /// GD_SEED environment variable, then 42.
    pub seed: Option<u64>,
    pub teacher: TeacherConfig,
    pub distill: DistillConfig,
    pub student: StudentConfig,
    pub classifier: ClassifierConfig,
    pub synthetic: SyntheticConfig,
}

impl RunConfig {
    /// Load a TOML file, or defaults when no path is given.
    pub fn load(path: Option<&Path>) -> Result<RunConfig> {
        let cfg = match path {
            None => RunConfig::default(),
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| Error::io(p.display().to_string(), e))?;
                toml::from_str(&text)
                    .map_err(|e| Error::Config(format!("{}: {e}", p.display())))?
            }
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.teacher.validate()?;
        self.distill.validate()?;
        self.student.validate()?;
        self.classifier.validate()?;
        self.synthetic.validate()
    }

    /// The fully resolved configuration as one machine-parseable JSON log
    /// line; every run prints this before doing work.
    pub fn resolved_line(&self, seed: u64, subcommand: &str) -> Result<String> {
        let line = serde_json::json!({
            "phase": "config",
            "subcommand": subcommand,
            "seed": seed,
            "config": self,
        });
        Ok(line.to_string())
    }
}

/// Seed precedence: command-line flag, then config file, then the GD_SEED
/// environment variable, then 42.
pub fn resolve_seed(cli: Option<u64>, cfg: &RunConfig) -> Result<u64> {
    resolve_seed_from(cli, cfg.seed, std::env::var("GD_SEED").ok().as_deref())
}

fn resolve_seed_from(cli: Option<u64>, cfg: Option<u64>, env: Option<&str>) -> Result<u64> {
    if let Some(s) = cli {
        return Ok(s);
    }
    if let Some(s) = cfg {
        return Ok(s);
    }
    if let Some(raw) = env {
        return raw.trim().parse::<u64>().map_err(|_| {
            Error::Config(format!("GD_SEED must be an unsigned integer, got {raw:?}"))
        });
    }
    Ok(42)
}
