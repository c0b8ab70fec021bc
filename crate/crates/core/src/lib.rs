//! Batch (offline) reinforcement learning over clustered tabular states.
//!
//! The crate covers the full path from logged episodic data to an evaluated
//! policy:
//!
//! - [`data`] — trajectory data model, CSV/JSONL ingestion, term aggregation,
//!   and synthetic ground-truth MDP generators used as test oracles.
//! - [`discretize`] — X-means and OPTICS clustering of continuous state
//!   features into discrete state ids, plus PCA projection for reports.
//! - [`mdp`] — empirical tabular MDP, behavior-policy estimation, model-based
//!   reward/value predictions, and exact dynamic-programming oracles.
//! - [`qnet`] — a from-scratch dueling two-stream MLP over one-hot states with
//!   an Adam optimizer and hand-derived gradients.
//! - [`trainer`] — offline dueling double Q-learning on a fixed transition
//!   batch with periodic target sync and in-training OPE scoring.
//! - [`ope`] — importance ratios, off-policy j-step returns, WDR, and the
//!   SWDR / MAGIC weighted doubly-robust estimators.

pub mod data;
pub mod discretize;
pub mod error;
pub mod mdp;
pub mod ope;
pub mod qnet;
pub mod trainer;

pub use error::{Error, ErrorClass, Result};

/// Argmax with ties broken toward the lowest index.
///
/// Every argmax in the crate (greedy policies, double-Q action selection,
/// cluster assignment) routes through this so tie-breaking is uniform.
pub(crate) fn argmax_tie_lowest(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}
