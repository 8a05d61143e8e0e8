//! Named parameter collections.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Ordered map of named parameter tensors plus a completed-step counter.
/// The ordering is part of the contract: serialization, gradient clipping
/// and optimizer sweeps all iterate in name order.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ParamSet {
    tensors: BTreeMap<String, Tensor>,
    pub step: u64,
}

impl ParamSet {
    pub fn new() -> Self {
        ParamSet::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, t: Tensor) -> Result<()> {
        let name = name.into();
        if self.tensors.contains_key(&name) {
            return Err(Error::InvalidArg(format!("duplicate parameter name: {name}")));
        }
        self.tensors.insert(name, t);
        Ok(())
    }

    pub fn get(&self, name: &str) -> Result<&Tensor> {
        self.tensors
            .get(name)
            .ok_or_else(|| Error::InvalidArg(format!("unknown parameter: {name}")))
    }

    pub fn get_mut(&mut self, name: &str) -> Result<&mut Tensor> {
        self.tensors
            .get_mut(name)
            .ok_or_else(|| Error::InvalidArg(format!("unknown parameter: {name}")))
    }

    pub fn contains(&self, name: &str) -> bool {
        self.tensors.contains_key(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Tensor)> {
        self.tensors.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&String, &mut Tensor)> {
        self.tensors.iter_mut()
    }

    pub fn names(&self) -> impl Iterator<Item = &String> {
        self.tensors.keys()
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    /// Total scalar parameter count.
    pub fn total_count(&self) -> usize {
        self.tensors.values().map(|t| t.numel()).sum()
    }

    /// Merge another set under a name prefix (used to embed a sub-model's
    /// parameters, e.g. a gist detector inside a classifier).
    pub fn merge_prefixed(&mut self, prefix: &str, other: &ParamSet) -> Result<()> {
        for (name, t) in other.iter() {
            self.insert(format!("{prefix}{name}"), t.clone())?;
        }
        Ok(())
    }

    /// Extract the sub-set under a prefix, stripping it.
    pub fn extract_prefixed(&self, prefix: &str) -> ParamSet {
        let mut out = ParamSet::new();
        for (name, t) in self.iter() {
            if let Some(stripped) = name.strip_prefix(prefix) {
                out.tensors.insert(stripped.to_string(), t.clone());
            }
        }
        out
    }

    pub fn bits_eq(&self, other: &ParamSet) -> bool {
        self.step == other.step
            && self.tensors.len() == other.tensors.len()
            && self
                .tensors
                .iter()
                .zip(other.tensors.iter())
                .all(|((na, ta), (nb, tb))| na == nb && ta.bits_eq(tb))
    }
}

/// Uniform init in +-1/sqrt(fan_in), the convention for every weight matrix
/// in this crate. `fan_in` is the input dimension of the linear map.
pub fn init_matrix(rows: usize, cols: usize, fan_in: usize, rng: &mut impl Rng) -> Tensor {
    let bound = 1.0 / (fan_in as f64).sqrt();
    Tensor::uniform(vec![rows, cols], -bound, bound, rng)
}

pub fn init_vector(len: usize, fan_in: usize, rng: &mut impl Rng) -> Tensor {
    let bound = 1.0 / (fan_in as f64).sqrt();
    Tensor::uniform(vec![len], -bound, bound, rng)
}
