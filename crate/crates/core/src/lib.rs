//! Out-of-distribution detection benchmark: procedural toy problems,
//! unsupervised detectors, synthetic-OOD supervised detectors, sample
//! weighting, metrics and a benchmark runner.

pub mod bench;
pub mod detectors;
pub mod error;
pub mod metrics;
pub mod mlp;
pub mod points;
pub mod rng;
pub mod synthesis;
pub mod toyspace;
pub mod weighting;

pub use error::{OodError, Result};
pub use points::Points;
pub use toyspace::{ToyKind, ToySpec};
