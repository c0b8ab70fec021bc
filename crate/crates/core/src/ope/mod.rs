//! Off-policy evaluation.
//!
//! Everything here estimates the discounted value of an evaluation policy
//! from trajectories logged under a behavior policy: per-step importance
//! ratios with self-normalized weights, the off-policy j-step returns that
//! blend importance-weighted real rewards with model completions, the WDR
//! endpoint, and the SWDR / MAGIC estimators built on top.
//!
//! Conventions shared by all of it:
//! - Trajectories are padded with an absorbing state: after termination the
//!   per-step ratio is 1 (cumulative products freeze), rewards are 0, and
//!   model values are 0.
//! - The step "-1" weight is `w(i, -1) = 1/n`.
//! - Ratio products run in log space to dodge underflow on long episodes.

mod magic;
mod simplex;

pub use magic::{
    bias_vector, bootstrap_interval, covariance_matrix, magic, swdr, BootstrapIndexing,
    MagicConfig, MagicResult,
};
pub use simplex::{project_to_simplex, simplex_minimize};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::data::DiscreteDataset;
use crate::error::{Error, Result};
use crate::mdp::{ModelValues, PolicyTable};

/// Everything the estimators need, borrowed together.
#[derive(Clone, Copy)]
pub struct OpeInputs<'a> {
    pub dataset: &'a DiscreteDataset,
    pub pi_e: &'a PolicyTable,
    pub pi_b: &'a PolicyTable,
    /// Model values computed for `pi_e`.
    pub values: &'a ModelValues,
    pub gamma: f64,
}

/// A return length `j`: pure model (`-1`), a finite prefix, or the full
/// weighted doubly-robust return (`infinity`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReturnLength {
    Model,
    Steps(usize),
    Infinite,
}

impl std::fmt::Display for ReturnLength {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ReturnLength::Model => write!(f, "-1"),
            ReturnLength::Steps(j) => write!(f, "{j}"),
            ReturnLength::Infinite => write!(f, "inf"),
        }
    }
}

/// Cumulative importance ratios and their per-step self-normalized weights,
/// one row per trajectory, padded out to the longest horizon.
#[derive(Debug, Clone, PartialEq)]
pub struct ImportanceTable {
    /// `rho[(i, t)]`: product of the first `t + 1` per-step ratios of
    /// trajectory `i` (frozen after the trajectory ends).
    pub rho: Array2<f64>,
    /// `w[(i, t)] = rho[(i, t)] / sum_i' rho[(i', t)]`; all-zero columns
    /// stay zero.
    pub w: Array2<f64>,
    pub t_max: usize,
    pub lengths: Vec<usize>,
}

impl ImportanceTable {
    /// Weight at step `t - 1`, with the `w(i, -1) = 1/n` convention.
    pub fn w_prev(&self, i: usize, t: usize) -> f64 {
        if t == 0 {
            1.0 / self.rho.nrows() as f64
        } else {
            self.w[[i, t - 1]]
        }
    }
}

/// Cumulative per-step importance ratios of every trajectory under
/// `pi_e / pi_b`, self-normalized per step across trajectories.
pub fn importance_ratios(
    dataset: &DiscreteDataset,
    pi_e: &PolicyTable,
    pi_b: &PolicyTable,
) -> Result<ImportanceTable> {
    let n = dataset.n();
    let t_max = dataset.max_len();
    let mut rho = Array2::zeros((n, t_max));
    let mut lengths = Vec::with_capacity(n);
    for (i, traj) in dataset.trajectories().iter().enumerate() {
        let mut log_rho = 0.0f64;
        let mut prev = 1.0f64;
        for (t, tr) in traj.transitions().iter().enumerate() {
            let (s, a) = (tr.state, tr.action.index());
            if s >= pi_b.n_states() || a >= pi_b.n_actions() {
                return Err(Error::StateOutOfRange {
                    id: s.max(a),
                    n_states: pi_b.n_states(),
                });
            }
            let pb = pi_b.prob(s, a);
            if pb <= 0.0 {
                return Err(Error::UnsupportedAction { state: s, action: a });
            }
            let ratio = pi_e.prob(s, a) / pb;
            log_rho += ratio.ln();
            let cur = log_rho.exp();
            debug_assert!(
                (cur - prev * ratio).abs() <= 1e-9 * cur.max(prev * ratio).max(1.0),
                "cumulative ratio diverged from its product structure"
            );
            prev = cur;
            rho[[i, t]] = cur;
        }
        // Freeze after termination: the absorbing state's ratio is 1.
        for t in traj.len()..t_max {
            rho[[i, t]] = prev;
        }
        lengths.push(traj.len());
    }
    let mut w = Array2::zeros((n, t_max));
    for t in 0..t_max {
        let denom: f64 = (0..n).map(|i| rho[[i, t]]).sum();
        if denom > 0.0 {
            for i in 0..n {
                w[[i, t]] = rho[[i, t]] / denom;
            }
        }
    }
    Ok(ImportanceTable {
        rho,
        w,
        t_max,
        lengths,
    })
}

/// Per-trajectory pieces of the j-step return, precomputed once:
/// `rw_q[i][t] = gamma^t (R_t - q_hat(S_t, A_t))` and
/// `v[i][t] = gamma^t v_hat(S_t)` over the real steps of trajectory `i`.
#[derive(Debug, Clone)]
pub(crate) struct PerTrajectoryTerms {
    pub rw_q: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
}

pub(crate) fn per_trajectory_terms(
    dataset: &DiscreteDataset,
    values: &ModelValues,
    gamma: f64,
) -> PerTrajectoryTerms {
    let mut rw_q = Vec::with_capacity(dataset.n());
    let mut v = Vec::with_capacity(dataset.n());
    for traj in dataset.trajectories() {
        let mut rq = Vec::with_capacity(traj.len());
        let mut vv = Vec::with_capacity(traj.len());
        let mut discount = 1.0;
        for tr in traj.transitions() {
            let q = values.q_at(tr.state, tr.action.index());
            rq.push(discount * (tr.reward - q));
            vv.push(discount * values.v_at(tr.state));
            discount *= gamma;
        }
        rw_q.push(rq);
        v.push(vv);
    }
    PerTrajectoryTerms { rw_q, v }
}

/// Trajectory `k`'s contribution to `g^(j)(D)`; contributions sum to the
/// estimate, which is what the covariance approximation needs.
pub(crate) fn contribution(
    k: usize,
    j: ReturnLength,
    imp: &ImportanceTable,
    terms: &PerTrajectoryTerms,
) -> f64 {
    let n = imp.rho.nrows() as f64;
    let len = imp.lengths[k];
    match j {
        ReturnLength::Model => terms.v[k][0] / n,
        ReturnLength::Steps(_) | ReturnLength::Infinite => {
            let j_eff = match j {
                ReturnLength::Steps(j) => j.min(imp.t_max.saturating_sub(1)),
                _ => imp.t_max - 1,
            };
            let top = j_eff.min(len - 1);
            let mut acc = 0.0;
            for t in 0..=top {
                acc += imp.w[[k, t]] * terms.rw_q[k][t];
                acc += imp.w_prev(k, t) * terms.v[k][t];
            }
            // Boundary completion gamma^{j+1} w_j v_hat(S_{j+1}); zero once
            // the trajectory has entered the absorbing state.
            if j_eff + 1 <= len - 1 {
                acc += imp.w[[k, j_eff]] * terms.v[k][j_eff + 1];
            }
            acc
        }
    }
}

/// The off-policy j-step return `g^(j)(D)`: importance-weighted real rewards
/// through step `j` with doubly-robust control variates, completed by the
/// model beyond `j`. `Model` is the pure model estimate at the empirical
/// start distribution; `Infinite` is WDR.
pub fn j_step_return(
    j: ReturnLength,
    dataset: &DiscreteDataset,
    imp: &ImportanceTable,
    values: &ModelValues,
    gamma: f64,
) -> f64 {
    let terms = per_trajectory_terms(dataset, values, gamma);
    (0..dataset.n()).map(|k| contribution(k, j, imp, &terms)).sum()
}

/// The weighted doubly-robust estimator `WDR(D) = g^(infinity)(D)`.
pub fn wdr(
    dataset: &DiscreteDataset,
    imp: &ImportanceTable,
    values: &ModelValues,
    gamma: f64,
) -> f64 {
    j_step_return(ReturnLength::Infinite, dataset, imp, values, gamma)
}

/// All requested return lengths evaluated on one dataset. `Model` and
/// `Infinite` are always present; finite lengths at or beyond the horizon
/// collapse into `Infinite` and are dropped.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JStepReturns {
    pub returns: Vec<(ReturnLength, f64)>,
}

impl JStepReturns {
    pub fn get(&self, j: ReturnLength) -> Option<f64> {
        self.returns.iter().find(|(k, _)| *k == j).map(|(_, v)| *v)
    }

    /// The pure model endpoint g(-1).
    pub fn model_endpoint(&self) -> f64 {
        self.get(ReturnLength::Model).expect("Model always present")
    }

    /// The WDR endpoint g(infinity).
    pub fn wdr_endpoint(&self) -> f64 {
        self.get(ReturnLength::Infinite).expect("Infinite always present")
    }
}

/// Normalize the requested lengths: always include `Model` and `Infinite`,
/// drop finite lengths that already cover the full horizon, sort, dedup.
pub fn build_j_set(finite_steps: &[usize], t_max: usize) -> Vec<ReturnLength> {
    let mut set = vec![ReturnLength::Model, ReturnLength::Infinite];
    for &j in finite_steps {
        if t_max > 0 && j < t_max - 1 {
            set.push(ReturnLength::Steps(j));
        }
    }
    set.sort_unstable();
    set.dedup();
    set
}

/// Estimate normalized by the logged policy's empirical mean discounted
/// return: 1.0 means parity with the logged behavior.
pub fn ope_score(estimate: f64, dataset: &DiscreteDataset, gamma: f64) -> Result<f64> {
    let behavior = dataset.mean_discounted_return(gamma);
    if behavior.abs() < 1e-300 {
        return Err(Error::UndefinedScore(
            "logged mean return is zero".to_string(),
        ));
    }
    Ok(estimate / behavior)
}

/// What to count action occurrences for.
#[derive(Debug, Clone, Copy)]
pub enum FrequencySource<'a> {
    /// Count a policy's greedy action at every visited state occurrence.
    Policy(&'a PolicyTable),
    /// Count the actions actually logged.
    Logged,
}

/// Per-action occurrence counts over the evaluation dataset; the counts sum
/// to the number of evaluated steps.
pub fn action_frequencies(
    source: FrequencySource,
    dataset: &DiscreteDataset,
    n_actions: usize,
) -> Result<Vec<u64>> {
    let mut counts = vec![0u64; n_actions];
    let greedy = match source {
        FrequencySource::Policy(pi) => Some(pi.greedy_actions()),
        FrequencySource::Logged => None,
    };
    for traj in dataset.trajectories() {
        for tr in traj.transitions() {
            let a = match &greedy {
                Some(g) => {
                    let s = tr.state;
                    *g.get(s).ok_or(Error::StateOutOfRange {
                        id: s,
                        n_states: g.len(),
                    })?
                }
                None => tr.action.index(),
            };
            if a >= n_actions {
                return Err(Error::Config(format!(
                    "action id {a} out of range (n_actions = {n_actions})"
                )));
            }
            counts[a] += 1;
        }
    }
    Ok(counts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{ActionId, Dataset, Trajectory, Transition};
    use crate::mdp::TabularMdp;

    fn two_state_dataset() -> DiscreteDataset {
        let t1 = Trajectory::new(vec![
            Transition::new(0usize, ActionId(0), 1, false, false),
            Transition::new(1usize, ActionId(1), 1, true, true),
        ])
        .unwrap();
        let t2 = Trajectory::new(vec![
            Transition::new(0usize, ActionId(1), 1, false, false),
            Transition::new(1usize, ActionId(0), 1, true, false),
        ])
        .unwrap();
        Dataset::new(vec![t1, t2]).unwrap()
    }

    #[test]
    fn identical_policies_unit_ratios() {
        let ds = two_state_dataset();
        let pi = PolicyTable::uniform(2, 2);
        let imp = importance_ratios(&ds, &pi, &pi).unwrap();
        for i in 0..2 {
            for t in 0..2 {
                assert!((imp.rho[[i, t]] - 1.0).abs() < 1e-12);
                assert!((imp.w[[i, t]] - 0.5).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn single_trajectory_weights_are_one() {
        let t = Trajectory::new(vec![Transition::new(0usize, ActionId(0), 0, true, false)]).unwrap();
        let ds = Dataset::new(vec![t]).unwrap();
        let pi_e = PolicyTable::from_rows(&[vec![0.9, 0.1]]).unwrap();
        let pi_b = PolicyTable::from_rows(&[vec![0.4, 0.6]]).unwrap();
        let imp = importance_ratios(&ds, &pi_e, &pi_b).unwrap();
        assert!((imp.w[[0, 0]] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn hand_computed_ratio_products() {
        let ds = two_state_dataset();
        let pi_e = PolicyTable::from_rows(&[vec![0.8, 0.2], vec![0.3, 0.7]]).unwrap();
        let pi_b = PolicyTable::from_rows(&[vec![0.5, 0.5], vec![0.6, 0.4]]).unwrap();
        let imp = importance_ratios(&ds, &pi_e, &pi_b).unwrap();
        // Trajectory 1: (s0, a0) then (s1, a1): 0.8/0.5, then * 0.7/0.4.
        assert!((imp.rho[[0, 0]] - 1.6).abs() < 1e-12);
        assert!((imp.rho[[0, 1]] - 1.6 * 1.75).abs() < 1e-12);
        // Trajectory 2: (s0, a1) then (s1, a0): 0.2/0.5, then * 0.3/0.6.
        assert!((imp.rho[[1, 0]] - 0.4).abs() < 1e-12);
        assert!((imp.rho[[1, 1]] - 0.2).abs() < 1e-12);
        // Weights renormalize each column.
        assert!((imp.w[[0, 0]] - 1.6 / 2.0).abs() < 1e-12);
        assert!((imp.w[[0, 1]] - 2.8 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn zero_behavior_probability_is_reported() {
        let ds = two_state_dataset();
        let pi_e = PolicyTable::uniform(2, 2);
        let pi_b = PolicyTable::from_rows(&[vec![1.0, 0.0], vec![0.5, 0.5]]).unwrap();
        match importance_ratios(&ds, &pi_e, &pi_b) {
            Err(Error::UnsupportedAction { state: 0, action: 1 }) => {}
            other => panic!("expected unsupported action, got {other:?}"),
        }
    }

    #[test]
    fn model_endpoint_is_start_value_average() {
        let ds = two_state_dataset();
        let pi = PolicyTable::uniform(2, 2);
        let mdp = TabularMdp::fit(&ds, 2, 2, 0.9, 8).unwrap();
        let mv = mdp.model_values(&pi);
        let imp = importance_ratios(&ds, &pi, &pi).unwrap();
        let g_model = j_step_return(ReturnLength::Model, &ds, &imp, &mv, 0.9);
        let expect = 0.5 * (mv.v_at(0) + mv.v_at(0));
        assert!((g_model - expect).abs() < 1e-12);
    }

    #[test]
    fn infinite_matches_longest_finite() {
        let ds = two_state_dataset();
        let pi = PolicyTable::uniform(2, 2);
        let mdp = TabularMdp::fit(&ds, 2, 2, 0.9, 8).unwrap();
        let mv = mdp.model_values(&pi);
        let imp = importance_ratios(&ds, &pi, &pi).unwrap();
        let g_inf = j_step_return(ReturnLength::Infinite, &ds, &imp, &mv, 0.9);
        let g_t = j_step_return(ReturnLength::Steps(imp.t_max), &ds, &imp, &mv, 0.9);
        assert!((g_inf - g_t).abs() < 1e-15);
        assert!((g_inf - wdr(&ds, &imp, &mv, 0.9)).abs() < 1e-15);
    }

    #[test]
    fn j_set_always_has_endpoints() {
        let set = build_j_set(&[0, 1, 2, 4, 8, 16], 5);
        assert_eq!(set[0], ReturnLength::Model);
        assert_eq!(*set.last().unwrap(), ReturnLength::Infinite);
        // 4, 8, 16 reach past t_max - 1 = 4 and collapse into Infinite.
        assert_eq!(
            set,
            vec![
                ReturnLength::Model,
                ReturnLength::Steps(0),
                ReturnLength::Steps(1),
                ReturnLength::Steps(2),
                ReturnLength::Infinite
            ]
        );
    }

    #[test]
    fn score_normalizes_by_behavior_return() {
        let ds = two_state_dataset();
        let behavior = ds.mean_discounted_return(0.9);
        assert!((ope_score(behavior, &ds, 0.9).unwrap() - 1.0).abs() < 1e-12);
        assert!((ope_score(1.5 * behavior, &ds, 0.9).unwrap() - 1.5).abs() < 1e-12);
    }

    #[test]
    fn score_undefined_for_zero_behavior() {
        let t = Trajectory::new(vec![Transition::new(0usize, ActionId(0), 0, true, false)]).unwrap();
        let ds = Dataset::new(vec![t]).unwrap();
        assert!(matches!(
            ope_score(0.3, &ds, 0.9),
            Err(Error::UndefinedScore(_))
        ));
    }

    #[test]
    fn action_frequency_counts() {
        let ds = two_state_dataset();
        // Constant policy: everything lands on action 1.
        let pi = PolicyTable::from_rows(&[vec![0.0, 1.0], vec![0.0, 1.0]]).unwrap();
        let counts = action_frequencies(FrequencySource::Policy(&pi), &ds, 2).unwrap();
        assert_eq!(counts, vec![0, 4]);
        // Logged counts sum to m.
        let logged = action_frequencies(FrequencySource::Logged, &ds, 2).unwrap();
        assert_eq!(logged.iter().sum::<u64>(), ds.m() as u64);
        assert_eq!(logged, vec![2, 2]);
    }
}
