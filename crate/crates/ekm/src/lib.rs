//! Evolving kernel functions by genetic programming for nearest-neighbor
//! classification.
//!
//! The library evolves symmetric kernel expressions with GP, scores them by
//! a margin criterion over a kernel nearest-neighbor rule, and keeps the
//! fitness computation tractable by co-evolving a prototype subset
//! (cooperatively) and a fitness-case subset (competitively) alongside the
//! kernels. A cross-validation harness, a tuned Euclidean k-NN baseline,
//! and model persistence round out the experiment tooling.
//!
//! Everything downstream of a seed is deterministic: identical inputs and
//! seeds produce identical traces, models, and report files, with or
//! without parallel execution.

pub mod baseline;
pub mod coevo;
pub mod data;
pub mod error;
pub mod experiment;
pub mod fitness;
pub mod gp;
pub mod kernel;
pub mod model;
pub mod report;
pub mod seeds;
pub mod stats;

pub use error::{EkmError, Result};
