//! Quality-aware face template pooling and 1:N identification evaluation.
//!
//! Per-medium embeddings are pooled into one template per subject and
//! domain with average, detection-quality, feature-norm (max or min-max
//! normalized) or sparsemax weighting. Pooled probes are matched against
//! gallery templates by cosine similarity and scored with closed-set CMC
//! and open-set FNIR at a target FPIR. A seeded generator produces
//! multi-domain synthetic data with known ground truth.

pub mod bank;
pub mod cli;
pub mod error;
pub mod evaluation;
pub mod manifest;
pub mod margins;
pub mod numerics;
pub mod pooling;
pub mod protocol;
pub mod report;
pub mod synthgen;

pub use error::{Error, Result};
