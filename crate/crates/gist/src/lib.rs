//! Gist distillation: a pointer-generator summarization teacher, attention
//! distillation into soft keyword targets, a lightweight gist detector
//! student, and blending of gist weights into a downstream classifier.

pub mod blend;
pub mod check;
pub mod checkpoint;
pub mod classifier;
pub mod config;
pub mod distill;
pub mod error;
pub mod graph;
pub mod heatmap;
pub mod layers;
pub mod numeric;
pub mod optim;
pub mod params;
pub mod rng;
pub mod student;
pub mod synthetic;
pub mod teacher;
pub mod tensor;
pub mod text;

pub use error::{Error, Result};
pub use tensor::Tensor;
