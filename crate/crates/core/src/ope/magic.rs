//! The MAGIC estimator and its SWDR restriction.
//!
//! MAGIC blends the off-policy j-step returns over a finite length set with
//! simplex weights minimizing an approximate MSE: a covariance term built
//! from per-trajectory contributions and a bias term measured against a
//! percentile bootstrap interval around WDR. SWDR is the same pipeline with
//! the length set restricted to the WDR endpoint.

use ndarray::Array2;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::simplex::simplex_minimize;
use super::{
    build_j_set, contribution, importance_ratios, per_trajectory_terms, ImportanceTable,
    OpeInputs, PerTrajectoryTerms, ReturnLength,
};
use crate::error::{Error, Result};

/// How the sorted bootstrap estimates are indexed for the interval.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BootstrapIndexing {
    /// 5th / 95th percentile of the k resample estimates.
    Percentile,
    /// Index the k-vector at floor(0.05 n) and ceil(0.5 n) where n is the
    /// trajectory count (clamped into range).
    PaperLiteral,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MagicConfig {
    /// Finite return lengths to consider; the model and WDR endpoints are
    /// always added.
    pub j_steps: Vec<usize>,
    /// Bootstrap resample count (at least 20).
    pub bootstrap_k: usize,
    pub seed: u64,
    pub indexing: BootstrapIndexing,
}

impl Default for MagicConfig {
    fn default() -> Self {
        MagicConfig {
            j_steps: vec![0, 1, 2, 4, 8, 16],
            bootstrap_k: 200,
            seed: 0,
            indexing: BootstrapIndexing::Percentile,
        }
    }
}

/// Everything a MAGIC run produces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MagicResult {
    pub estimate: f64,
    /// Simplex weights, aligned with `returns`.
    pub x: Vec<f64>,
    pub returns: Vec<(ReturnLength, f64)>,
    pub lower: f64,
    pub upper: f64,
    pub bias: Vec<f64>,
    pub covariance: Array2<f64>,
    pub wdr: f64,
}

/// `n / (n - 1)` scaled outer-product covariance of the per-trajectory
/// contribution rows (one row per return length, one column per trajectory).
pub fn covariance_matrix(contributions: &Array2<f64>) -> Result<Array2<f64>> {
    let (d, n) = contributions.dim();
    if n < 2 {
        return Err(Error::InsufficientData(
            "covariance needs at least two trajectories".to_string(),
        ));
    }
    let means: Vec<f64> = (0..d).map(|i| contributions.row(i).sum() / n as f64).collect();
    let scale = n as f64 / (n as f64 - 1.0);
    let mut omega = Array2::zeros((d, d));
    for i in 0..d {
        for j in i..d {
            let mut acc = 0.0;
            for k in 0..n {
                acc += (contributions[[i, k]] - means[i]) * (contributions[[j, k]] - means[j]);
            }
            let v = scale * acc;
            omega[[i, j]] = v;
            omega[[j, i]] = v;
        }
    }
    Ok(omega)
}

/// Distance of each return outside the bootstrap interval (zero inside).
pub fn bias_vector(returns: &[f64], lower: f64, upper: f64) -> Vec<f64> {
    returns
        .iter()
        .map(|&g| {
            if g > upper {
                g - upper
            } else if g < lower {
                g - lower
            } else {
                0.0
            }
        })
        .collect()
}

/// WDR of one with-replacement resample (weights renormalized within the
/// resample).
fn resample_wdr(
    selection: &[usize],
    imp: &ImportanceTable,
    terms: &PerTrajectoryTerms,
) -> f64 {
    let n = selection.len();
    let t_max = imp.t_max;
    let mut denom = vec![0.0; t_max];
    let mut num_rwq = vec![0.0; t_max];
    let mut num_v = vec![0.0; t_max]; // at t, pairs rho(., t-1) with v(., t)
    let mut v0_sum = 0.0;
    for &i in selection {
        let len = imp.lengths[i];
        v0_sum += terms.v[i][0];
        for t in 0..t_max {
            denom[t] += imp.rho[[i, t]];
            if t < len {
                num_rwq[t] += imp.rho[[i, t]] * terms.rw_q[i][t];
                if t >= 1 {
                    num_v[t] += imp.rho[[i, t - 1]] * terms.v[i][t];
                }
            }
        }
    }
    let mut acc = v0_sum / n as f64;
    for t in 0..t_max {
        if denom[t] > 0.0 {
            acc += num_rwq[t] / denom[t];
        }
        if t >= 1 && denom[t - 1] > 0.0 {
            acc += num_v[t] / denom[t - 1];
        }
    }
    acc
}

fn interval_from_resamples(
    wdr_estimate: f64,
    mut resamples: Vec<f64>,
    n_trajectories: usize,
    indexing: BootstrapIndexing,
) -> (f64, f64, Vec<f64>) {
    let k = resamples.len();
    resamples.sort_unstable_by(f64::total_cmp);
    let (lo_idx, hi_idx) = match indexing {
        BootstrapIndexing::Percentile => (
            ((0.05 * k as f64).floor() as usize).min(k - 1),
            ((0.95 * k as f64).ceil() as usize).min(k - 1),
        ),
        BootstrapIndexing::PaperLiteral => (
            ((0.05 * n_trajectories as f64).floor() as usize).min(k - 1),
            ((0.5 * n_trajectories as f64).ceil() as usize).min(k - 1),
        ),
    };
    let lower = wdr_estimate.min(resamples[lo_idx]);
    let upper = wdr_estimate.max(resamples[hi_idx]);
    (lower, upper, resamples)
}

fn bootstrap_internal(
    inputs: &OpeInputs,
    imp: &ImportanceTable,
    terms: &PerTrajectoryTerms,
    wdr_estimate: f64,
    k: usize,
    seed: u64,
    indexing: BootstrapIndexing,
) -> Result<(f64, f64, Vec<f64>)> {
    if k < 20 {
        return Err(Error::Config(format!(
            "bootstrap needs at least 20 resamples, got {k}"
        )));
    }
    let n = inputs.dataset.n();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut estimates = Vec::with_capacity(k);
    let mut selection = vec![0usize; n];
    for _ in 0..k {
        for slot in &mut selection {
            *slot = rng.gen_range(0..n);
        }
        estimates.push(resample_wdr(&selection, imp, terms));
    }
    Ok(interval_from_resamples(wdr_estimate, estimates, n, indexing))
}

/// Percentile bootstrap interval for WDR over `k` with-replacement
/// resamples of the trajectory set. The interval is forced to contain
/// `WDR(D)`; the sorted resample estimates are returned alongside.
pub fn bootstrap_interval(
    inputs: &OpeInputs,
    k: usize,
    seed: u64,
    indexing: BootstrapIndexing,
) -> Result<(f64, f64, Vec<f64>)> {
    let imp = importance_ratios(inputs.dataset, inputs.pi_e, inputs.pi_b)?;
    let terms = per_trajectory_terms(inputs.dataset, inputs.values, inputs.gamma);
    let n = inputs.dataset.n();
    let wdr_estimate: f64 = (0..n)
        .map(|t| contribution(t, ReturnLength::Infinite, &imp, &terms))
        .sum();
    bootstrap_internal(inputs, &imp, &terms, wdr_estimate, k, seed, indexing)
}

/// Run MAGIC over the configured return-length set.
pub fn magic(inputs: &OpeInputs, cfg: &MagicConfig) -> Result<MagicResult> {
    let imp = importance_ratios(inputs.dataset, inputs.pi_e, inputs.pi_b)?;
    let terms = per_trajectory_terms(inputs.dataset, inputs.values, inputs.gamma);
    let j_set = build_j_set(&cfg.j_steps, imp.t_max);
    magic_with(inputs, cfg, &imp, &terms, &j_set)
}

fn magic_with(
    inputs: &OpeInputs,
    cfg: &MagicConfig,
    imp: &ImportanceTable,
    terms: &PerTrajectoryTerms,
    j_set: &[ReturnLength],
) -> Result<MagicResult> {
    let n = inputs.dataset.n();
    let d = j_set.len();
    let mut contributions = Array2::zeros((d, n));
    for (row, &j) in j_set.iter().enumerate() {
        for k in 0..n {
            contributions[[row, k]] = contribution(k, j, imp, terms);
        }
    }
    let g: Vec<f64> = (0..d).map(|row| contributions.row(row).sum()).collect();
    let wdr_estimate = g[j_set
        .iter()
        .position(|j| *j == ReturnLength::Infinite)
        .expect("infinite endpoint always included")];

    let omega = covariance_matrix(&contributions)?;
    let (lower, upper, _) = bootstrap_internal(
        inputs,
        imp,
        terms,
        wdr_estimate,
        cfg.bootstrap_k,
        cfg.seed,
        cfg.indexing,
    )?;
    let bias = bias_vector(&g, lower, upper);
    let mut blend = omega.clone();
    for i in 0..d {
        for j in 0..d {
            blend[[i, j]] += bias[i] * bias[j];
        }
    }
    let x = simplex_minimize(&blend)?;
    let estimate = x.iter().zip(&g).map(|(xi, gi)| xi * gi).sum();
    debug_assert!(lower <= wdr_estimate && wdr_estimate <= upper);
    Ok(MagicResult {
        estimate,
        x,
        returns: j_set.iter().copied().zip(g).collect(),
        lower,
        upper,
        bias,
        covariance: omega,
        wdr: wdr_estimate,
    })
}

/// SWDR: MAGIC with the length set restricted to the WDR endpoint. By
/// default the model endpoint is still included (the always-include rule);
/// `strict_infinite` drops it so the estimate is exactly WDR.
pub fn swdr(inputs: &OpeInputs, cfg: &MagicConfig, strict_infinite: bool) -> Result<MagicResult> {
    let imp = importance_ratios(inputs.dataset, inputs.pi_e, inputs.pi_b)?;
    let terms = per_trajectory_terms(inputs.dataset, inputs.values, inputs.gamma);
    let j_set = if strict_infinite {
        vec![ReturnLength::Infinite]
    } else {
        vec![ReturnLength::Model, ReturnLength::Infinite]
    };
    magic_with(inputs, cfg, &imp, &terms, &j_set)
}
