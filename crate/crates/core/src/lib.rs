//! Balanced data collection without disclosing sensitive group membership.
//!
//! The pipeline: learn a decision-tree proxy over non-sensitive features
//! whose leaves induce conditional distributions over sensitive groups,
//! project the target distribution onto the convex hull of those
//! distributions, derive per-leaf acceptance probabilities, and
//! rejection-sample new candidates so the collected set is balanced.
//!
//! Modules map onto the stages:
//! - [`dataset`]: labeled datasets, encoding, train/test splits.
//! - [`geometry`]: hull projection and the per-split progress test.
//! - [`csc`]: the paired-regression cost-sensitive oracle.
//! - [`splitter`]: the Lagrangian game that learns one splitting function.
//! - [`tree`]: growing the proxy tree and exact leaf-membership weights.
//! - [`sampler`]: acceptance-probability plans and rejection sampling.
//! - [`metrics`]: disclosivity/imbalance audits and generalization bounds.
//! - [`baselines`]: direct group classifiers for comparison curves.
//! - [`harness`]: reproducible sweep experiments with CSV/JSON outputs.
//!
//! Data-parallel inner loops (candidate-split evaluation, sweep cells) run
//! on rayon when the default `parallel` feature is enabled and fall back to
//! sequential iteration otherwise.

pub mod baselines;
pub mod csc;
pub mod dataset;
pub mod error;
pub mod geometry;
pub mod harness;
mod lp;
pub mod metrics;
pub mod par;
pub mod sampler;
pub mod splitter;
pub mod synth;
pub mod tree;

pub use error::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;
