//! Pretrained word-embedding tables in the `token v1 ... vd` text format.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::params::init_matrix;
use crate::rng::fnv1a64;
use crate::tensor::Tensor;
use crate::text::vocab::{Vocabulary, PAD};

/// In-memory embedding table. Lookups for out-of-vocabulary tokens return a
/// deterministic per-token random vector in +-0.1, so any two requests for
/// the same token agree, across runs and processes.
#[derive(Debug)]
pub struct EmbeddingTable {
    dim: usize,
    vectors: HashMap<String, Vec<f64>>,
    oov_seed: u64,
}

impl EmbeddingTable {
    pub fn load(path: &Path, oov_seed: u64) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        let mut vectors = HashMap::new();
        let mut dim = 0usize;
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let mut parts = line.split_whitespace();
            let token = parts
                .next()
                .ok_or_else(|| Error::Parse { line: i + 1, msg: "empty embedding line".into() })?;
            let vals: Vec<f64> = parts
                .map(|p| {
                    p.parse::<f64>()
                        .map_err(|e| Error::Parse { line: i + 1, msg: format!("bad float {p:?}: {e}") })
                })
                .collect::<Result<_>>()?;
            if vals.is_empty() {
                return Err(Error::Parse { line: i + 1, msg: format!("token {token:?} has no values") });
            }
            if dim == 0 {
                dim = vals.len();
            } else if vals.len() != dim {
                return Err(Error::Parse {
                    line: i + 1,
                    msg: format!("expected {dim} values, found {}", vals.len()),
                });
            }
            if vectors.insert(token.to_string(), vals).is_some() {
                return Err(Error::Parse { line: i + 1, msg: format!("duplicate token {token:?}") });
            }
        }
        if vectors.is_empty() {
            return Err(Error::EmptyInput(format!("no embeddings in {}", path.display())));
        }
        Ok(EmbeddingTable { dim, vectors, oov_seed })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn contains(&self, token: &str) -> bool {
        self.vectors.contains_key(token)
    }

    /// Vector for a token; OOV tokens get their deterministic random vector.
    pub fn get(&self, token: &str) -> Vec<f64> {
        if let Some(v) = self.vectors.get(token) {
            return v.clone();
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.oov_seed ^ fnv1a64(token.as_bytes()));
        (0..self.dim).map(|_| rng.gen_range(-0.1..0.1)).collect()
    }
}

/// Build a [V, dim] embedding matrix for a vocabulary. Rows come from the
/// pretrained table when one is given (OOV rule included); otherwise they
/// are uniform in +-1/sqrt(dim). The PAD row is always zero.
pub fn init_word_embeddings(
    vocab: &Vocabulary,
    dim: usize,
    pretrained: Option<&EmbeddingTable>,
    rng: &mut impl Rng,
) -> Result<Tensor> {
    if let Some(t) = pretrained {
        if t.dim() != dim {
            return Err(Error::InvalidArg(format!(
                "configured word dim {dim} does not match embedding file dim {}",
                t.dim()
            )));
        }
    }
    let v = vocab.len();
    let mut m = match pretrained {
        Some(table) => {
            let mut data = Vec::with_capacity(v * dim);
            for id in 0..v {
                data.extend(table.get(vocab.token(id)?));
            }
            Tensor::matrix(v, dim, data)?
        }
        None => init_matrix(v, dim, dim, rng),
    };
    for c in 0..dim {
        m.data[PAD * dim + c] = 0.0;
    }
    Ok(m)
}
