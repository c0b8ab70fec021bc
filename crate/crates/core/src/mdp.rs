//! Empirical tabular MDP and model-based value predictions.
//!
//! The model adds one absorbing terminal state at index `n_states`: every
//! logged terminal transition routes there, the absorbing state self-loops
//! with reward 0, and model values of the absorbing state are 0. Estimators
//! treat the state visited after an episode's terminal transition as
//! absorbing.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use ndarray::{Array1, Array2, Array3};
use serde::{Deserialize, Serialize};

use crate::data::{DiscreteDataset, SyntheticMdpSpec};
use crate::error::{Error, Result};
use crate::argmax_tie_lowest;

const ROW_SUM_TOL: f64 = 1e-9;

/// A stochastic policy over discrete states: `probs[(s, a)]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyTable {
    probs: Array2<f64>,
}

impl PolicyTable {
    pub fn new(probs: Array2<f64>) -> Result<Self> {
        for (s, row) in probs.outer_iter().enumerate() {
            let sum: f64 = row.sum();
            if (sum - 1.0).abs() > ROW_SUM_TOL {
                return Err(Error::Config(format!(
                    "policy row {s} sums to {sum}, expected 1"
                )));
            }
            if row.iter().any(|p| *p < 0.0 || !p.is_finite()) {
                return Err(Error::Config(format!("policy row {s} has invalid entries")));
            }
        }
        Ok(PolicyTable { probs })
    }

    pub fn uniform(n_states: usize, n_actions: usize) -> Self {
        PolicyTable {
            probs: Array2::from_elem((n_states, n_actions), 1.0 / n_actions as f64),
        }
    }

    /// Deterministic policy from per-state action choices.
    pub fn greedy_from_actions(actions: &[usize], n_actions: usize) -> Self {
        let mut probs = Array2::zeros((actions.len(), n_actions));
        for (s, &a) in actions.iter().enumerate() {
            probs[[s, a]] = 1.0;
        }
        PolicyTable { probs }
    }

    pub fn n_states(&self) -> usize {
        self.probs.nrows()
    }

    pub fn n_actions(&self) -> usize {
        self.probs.ncols()
    }

    pub fn prob(&self, s: usize, a: usize) -> f64 {
        self.probs[[s, a]]
    }

    pub fn probs(&self) -> &Array2<f64> {
        &self.probs
    }

    /// Greedy action per state, ties to the lowest action id.
    pub fn greedy_actions(&self) -> Vec<usize> {
        self.probs
            .outer_iter()
            .map(|row| argmax_tie_lowest(row.as_slice().expect("contiguous row")))
            .collect()
    }

    /// Row-wise convex mixture `lambda * self + (1 - lambda) * other`.
    pub fn mix(&self, other: &PolicyTable, lambda: f64) -> Result<PolicyTable> {
        if self.probs.dim() != other.probs.dim() {
            return Err(Error::Config("policy shapes differ".to_string()));
        }
        PolicyTable::new(&self.probs * lambda + &other.probs * (1.0 - lambda))
    }

    /// From a synthetic spec's behavior table.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<PolicyTable> {
        let n_states = rows.len();
        let n_actions = rows.first().map(Vec::len).unwrap_or(0);
        let mut probs = Array2::zeros((n_states, n_actions));
        for (s, row) in rows.iter().enumerate() {
            if row.len() != n_actions {
                return Err(Error::Config("ragged policy rows".to_string()));
            }
            for (a, p) in row.iter().enumerate() {
                probs[[s, a]] = *p;
            }
        }
        PolicyTable::new(probs)
    }
}

/// Empirical MDP fitted from a discrete dataset (counts kept for audit).
#[derive(Debug, Clone, PartialEq)]
pub struct TabularMdp {
    n_states: usize,
    n_actions: usize,
    /// Visit counts per (s, a, next) with next in `0..=n_states`
    /// (`n_states` = absorbing terminal).
    counts: Array3<u64>,
    /// Row-normalized transition estimate; unobserved (s, a) rows fall back
    /// to uniform over all `n_states + 1` successors with zero reward.
    p_hat: Array3<f64>,
    /// Mean immediate reward per (s, a); 0 where unobserved.
    r_hat: Array2<f64>,
    gamma: f64,
    horizon: usize,
}

/// Model-based value predictions for one target policy.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelValues {
    v: Array1<f64>,
    q: Array2<f64>,
    gamma: f64,
    horizon: usize,
}

impl ModelValues {
    /// v-hat of a state; the absorbing terminal (any id >= n_states) is 0.
    pub fn v_at(&self, s: usize) -> f64 {
        if s < self.v.len() {
            self.v[s]
        } else {
            0.0
        }
    }

    /// q-hat of a pair; absorbing states are 0.
    pub fn q_at(&self, s: usize, a: usize) -> f64 {
        if s < self.q.nrows() {
            self.q[[s, a]]
        } else {
            0.0
        }
    }

    pub fn v(&self) -> &Array1<f64> {
        &self.v
    }

    pub fn q(&self) -> &Array2<f64> {
        &self.q
    }
}

impl TabularMdp {
    /// Count-based fit. Terminal transitions route to the absorbing state;
    /// rewards are empirical means per (s, a).
    pub fn fit(
        dataset: &DiscreteDataset,
        n_states: usize,
        n_actions: usize,
        gamma: f64,
        horizon: usize,
    ) -> Result<Self> {
        if dataset.m() == 0 {
            return Err(Error::InsufficientData("no transitions to fit".to_string()));
        }
        validate_gamma_horizon(gamma, horizon)?;
        let mut counts = Array3::<u64>::zeros((n_states, n_actions, n_states + 1));
        let mut r_sum = Array2::<f64>::zeros((n_states, n_actions));
        for traj in dataset.trajectories() {
            for tr in traj.transitions() {
                let s = tr.state;
                let a = tr.action.index();
                if s >= n_states {
                    return Err(Error::StateOutOfRange { id: s, n_states });
                }
                if !tr.terminal && tr.next_state >= n_states {
                    return Err(Error::StateOutOfRange { id: tr.next_state, n_states });
                }
                if a >= n_actions {
                    return Err(Error::Config(format!(
                        "action id {a} out of range (n_actions = {n_actions})"
                    )));
                }
                let next = if tr.terminal { n_states } else { tr.next_state };
                counts[[s, a, next]] += 1;
                r_sum[[s, a]] += tr.reward;
            }
        }
        let mut p_hat = Array3::<f64>::zeros((n_states, n_actions, n_states + 1));
        let mut r_hat = Array2::<f64>::zeros((n_states, n_actions));
        for s in 0..n_states {
            for a in 0..n_actions {
                let total: u64 = (0..=n_states).map(|n| counts[[s, a, n]]).sum();
                if total == 0 {
                    let u = 1.0 / (n_states + 1) as f64;
                    for n in 0..=n_states {
                        p_hat[[s, a, n]] = u;
                    }
                } else {
                    for n in 0..=n_states {
                        p_hat[[s, a, n]] = counts[[s, a, n]] as f64 / total as f64;
                    }
                    r_hat[[s, a]] = r_sum[[s, a]] / total as f64;
                }
            }
        }
        Ok(TabularMdp {
            n_states,
            n_actions,
            counts,
            p_hat,
            r_hat,
            gamma,
            horizon,
        })
    }

    /// Exact model built from a known kernel: next-state mass into terminal
    /// outcome states routes to the absorbing column, and the expected
    /// immediate reward is the probability of entering a success state.
    pub fn from_spec(spec: &SyntheticMdpSpec, gamma: f64, horizon: usize) -> Result<Self> {
        spec.validate()?;
        validate_gamma_horizon(gamma, horizon)?;
        let n_states = spec.n_states;
        let n_actions = spec.n_actions;
        let mut p_hat = Array3::<f64>::zeros((n_states, n_actions, n_states + 1));
        let mut r_hat = Array2::<f64>::zeros((n_states, n_actions));
        for s in 0..n_states {
            for a in 0..n_actions {
                if spec.is_terminal(s) {
                    p_hat[[s, a, n_states]] = 1.0;
                    continue;
                }
                for next in 0..n_states {
                    let p = spec.transition_kernel[s][a][next];
                    if spec.is_terminal(next) {
                        p_hat[[s, a, n_states]] += p;
                        if spec.is_success(next) {
                            r_hat[[s, a]] += p;
                        }
                    } else {
                        p_hat[[s, a, next]] += p;
                    }
                }
            }
        }
        Ok(TabularMdp {
            n_states,
            n_actions,
            counts: Array3::zeros((n_states, n_actions, n_states + 1)),
            p_hat,
            r_hat,
            gamma,
            horizon,
        })
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn p_hat(&self) -> &Array3<f64> {
        &self.p_hat
    }

    pub fn r_hat(&self) -> &Array2<f64> {
        &self.r_hat
    }

    pub fn counts(&self) -> &Array3<u64> {
        &self.counts
    }

    /// Expected reward `t` steps after taking `a` in `s` and then following
    /// `pi`, by exact matrix recursion on the fitted kernel. `t` beyond the
    /// model horizon truncates to 0.
    pub fn predict_reward(&self, pi: &PolicyTable, s: usize, a: usize, t: usize) -> f64 {
        if t > self.horizon {
            return 0.0;
        }
        let mut cur = self.r_hat.clone();
        for _ in 0..t {
            cur = self.push_forward(pi, &cur);
        }
        cur[[s, a]]
    }

    /// One step of the reward recursion:
    /// `next[(s, a)] = sum_s' P(s'|s,a) sum_a' pi(a'|s') cur[(s', a')]`,
    /// with the absorbing successor contributing 0.
    fn push_forward(&self, pi: &PolicyTable, cur: &Array2<f64>) -> Array2<f64> {
        let state_value: Vec<f64> = (0..self.n_states)
            .map(|s| (0..self.n_actions).map(|a| pi.prob(s, a) * cur[[s, a]]).sum())
            .collect();
        let mut next = Array2::zeros((self.n_states, self.n_actions));
        for s in 0..self.n_states {
            for a in 0..self.n_actions {
                let mut acc = 0.0;
                for sp in 0..self.n_states {
                    acc += self.p_hat[[s, a, sp]] * state_value[sp];
                }
                next[[s, a]] = acc;
            }
        }
        next
    }

    /// Horizon-truncated model values:
    /// `q(s,a) = sum_{t=0..=horizon} gamma^t r_hat(s,a,t)` and
    /// `v(s) = sum_a pi(a|s) q(s,a)`.
    pub fn model_values(&self, pi: &PolicyTable) -> ModelValues {
        let mut q = Array2::<f64>::zeros((self.n_states, self.n_actions));
        let mut cur = self.r_hat.clone();
        let mut discount = 1.0;
        for t in 0..=self.horizon {
            q.scaled_add(discount, &cur);
            if t < self.horizon {
                cur = self.push_forward(pi, &cur);
                discount *= self.gamma;
            }
        }
        let v = Array1::from_iter((0..self.n_states).map(|s| {
            (0..self.n_actions).map(|a| pi.prob(s, a) * q[[s, a]]).sum()
        }));
        ModelValues {
            v,
            q,
            gamma: self.gamma,
            horizon: self.horizon,
        }
    }

    /// Infinite-horizon optimal action values by value iteration (the
    /// absorbing state has value 0, so iteration contracts at rate gamma).
    pub fn optimal_q(&self) -> Array2<f64> {
        let mut q = Array2::<f64>::zeros((self.n_states, self.n_actions));
        for _ in 0..10_000 {
            let v: Vec<f64> = (0..self.n_states)
                .map(|s| {
                    (0..self.n_actions)
                        .map(|a| q[[s, a]])
                        .fold(f64::NEG_INFINITY, f64::max)
                })
                .collect();
            let mut next = self.r_hat.clone();
            let mut delta: f64 = 0.0;
            for s in 0..self.n_states {
                for a in 0..self.n_actions {
                    let mut acc = 0.0;
                    for sp in 0..self.n_states {
                        acc += self.p_hat[[s, a, sp]] * v[sp];
                    }
                    next[[s, a]] += self.gamma * acc;
                    delta = delta.max((next[[s, a]] - q[[s, a]]).abs());
                }
            }
            q = next;
            if delta < 1e-12 {
                break;
            }
        }
        q
    }

    /// Greedy policy of [`TabularMdp::optimal_q`], ties to the lowest action.
    pub fn optimal_policy(&self) -> PolicyTable {
        let q = self.optimal_q();
        let actions: Vec<usize> = q
            .outer_iter()
            .map(|row| argmax_tie_lowest(row.as_slice().expect("contiguous row")))
            .collect();
        PolicyTable::greedy_from_actions(&actions, self.n_actions)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let file = MdpFile {
            format: MDP_FORMAT.to_string(),
            version: MDP_VERSION,
            n_states: self.n_states,
            n_actions: self.n_actions,
            gamma: self.gamma,
            horizon: self.horizon,
            counts: self
                .counts
                .outer_iter()
                .map(|sa| sa.outer_iter().map(|row| row.to_vec()).collect())
                .collect(),
            p_hat: self
                .p_hat
                .outer_iter()
                .map(|sa| sa.outer_iter().map(|row| row.to_vec()).collect())
                .collect(),
            r_hat: self.r_hat.outer_iter().map(|row| row.to_vec()).collect(),
        };
        let w = BufWriter::new(File::create(path.as_ref())?);
        serde_json::to_writer(w, &file)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let r = BufReader::new(File::open(path.as_ref())?);
        let file: MdpFile = serde_json::from_reader(r)?;
        if file.format != MDP_FORMAT || file.version != MDP_VERSION {
            return Err(Error::Format(format!(
                "unsupported mdp file {}/{}",
                file.format, file.version
            )));
        }
        let (s, a) = (file.n_states, file.n_actions);
        let mut counts = Array3::zeros((s, a, s + 1));
        let mut p_hat = Array3::zeros((s, a, s + 1));
        let mut r_hat = Array2::zeros((s, a));
        for i in 0..s {
            for j in 0..a {
                for k in 0..=s {
                    counts[[i, j, k]] = file.counts[i][j][k];
                    p_hat[[i, j, k]] = file.p_hat[i][j][k];
                }
                r_hat[[i, j]] = file.r_hat[i][j];
            }
        }
        Ok(TabularMdp {
            n_states: s,
            n_actions: a,
            counts,
            p_hat,
            r_hat,
            gamma: file.gamma,
            horizon: file.horizon,
        })
    }
}

const MDP_FORMAT: &str = "tabular-mdp";
const MDP_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct MdpFile {
    format: String,
    version: u32,
    n_states: usize,
    n_actions: usize,
    gamma: f64,
    horizon: usize,
    counts: Vec<Vec<Vec<u64>>>,
    p_hat: Vec<Vec<Vec<f64>>>,
    r_hat: Vec<Vec<f64>>,
}

fn validate_gamma_horizon(gamma: f64, horizon: usize) -> Result<()> {
    if !(0.0..=1.0).contains(&gamma) {
        return Err(Error::Config(format!("gamma must lie in [0, 1], got {gamma}")));
    }
    if gamma >= 1.0 && horizon == usize::MAX {
        return Err(Error::Config(
            "undiscounted values need a finite horizon".to_string(),
        ));
    }
    Ok(())
}

/// Laplace-smoothed behavior-policy estimate:
/// `pi(a|s) = (count(s,a) + alpha) / (count(s) + alpha * A)`.
/// Strictly positive for `alpha > 0`; unvisited states are uniform.
pub fn estimate_behavior_policy(
    dataset: &DiscreteDataset,
    n_states: usize,
    n_actions: usize,
    alpha: f64,
) -> Result<PolicyTable> {
    if alpha <= 0.0 {
        return Err(Error::Config(format!("alpha must be positive, got {alpha}")));
    }
    let mut counts = Array2::<f64>::zeros((n_states, n_actions));
    for traj in dataset.trajectories() {
        for tr in traj.transitions() {
            if tr.state >= n_states {
                return Err(Error::StateOutOfRange { id: tr.state, n_states });
            }
            if tr.action.index() >= n_actions {
                return Err(Error::Config(format!(
                    "action id {} out of range (n_actions = {n_actions})",
                    tr.action.index()
                )));
            }
            counts[[tr.state, tr.action.index()]] += 1.0;
        }
    }
    let mut probs = Array2::<f64>::zeros((n_states, n_actions));
    for s in 0..n_states {
        let total: f64 = counts.row(s).sum();
        let denom = total + alpha * n_actions as f64;
        for a in 0..n_actions {
            probs[[s, a]] = (counts[[s, a]] + alpha) / denom;
        }
    }
    PolicyTable::new(probs)
}

/// Exact finite-horizon discounted value of `pi` under the TRUE kernel,
/// averaged over the start distribution. Backward induction mirrors the
/// rollout semantics: episodes stop on terminal entry or after `horizon`
/// transitions, and the sparse reward (1 on entering a success state) is
/// earned on the entering transition.
pub fn exact_policy_value(
    spec: &SyntheticMdpSpec,
    pi: &PolicyTable,
    gamma: f64,
    horizon: usize,
) -> Result<f64> {
    let v = exact_state_values(spec, pi, gamma, horizon)?;
    Ok(spec
        .start_dist
        .iter()
        .enumerate()
        .map(|(s, p)| p * v[s])
        .sum())
}

/// Epsilon-greedy softening of the optimal stationary policy of the TRUE
/// kernel: value iteration on [`TabularMdp::from_spec`], then `1 - eps` on
/// the greedy action plus `eps / A` spread everywhere. A convenient fixed
/// evaluation policy for benchmarks.
pub fn optimal_epsilon_greedy(
    spec: &SyntheticMdpSpec,
    gamma: f64,
    horizon: usize,
    epsilon: f64,
) -> Result<PolicyTable> {
    if !(0.0..=1.0).contains(&epsilon) {
        return Err(Error::Config(format!(
            "epsilon must lie in [0, 1], got {epsilon}"
        )));
    }
    let model = TabularMdp::from_spec(spec, gamma, horizon)?;
    let greedy = model.optimal_policy();
    let uniform = PolicyTable::uniform(spec.n_states, spec.n_actions);
    greedy.mix(&uniform, 1.0 - epsilon)
}

/// Per-state values behind [`exact_policy_value`]; index `s` holds the value
/// of starting in `s` with the full horizon remaining.
pub fn exact_state_values(
    spec: &SyntheticMdpSpec,
    pi: &PolicyTable,
    gamma: f64,
    horizon: usize,
) -> Result<Vec<f64>> {
    spec.validate()?;
    if pi.n_states() != spec.n_states || pi.n_actions() != spec.n_actions {
        return Err(Error::Config(
            "policy shape does not match the synthetic spec".to_string(),
        ));
    }
    let mut v = vec![0.0; spec.n_states];
    for _ in 0..horizon {
        let mut next = vec![0.0; spec.n_states];
        for s in 0..spec.n_states {
            if spec.is_terminal(s) {
                continue;
            }
            let mut acc = 0.0;
            for a in 0..spec.n_actions {
                let pa = pi.prob(s, a);
                if pa == 0.0 {
                    continue;
                }
                let mut step = 0.0;
                for sp in 0..spec.n_states {
                    let p = spec.transition_kernel[s][a][sp];
                    if p == 0.0 {
                        continue;
                    }
                    let r = if spec.is_success(sp) { 1.0 } else { 0.0 };
                    let cont = if spec.is_terminal(sp) { 0.0 } else { v[sp] };
                    step += p * (r + gamma * cont);
                }
                acc += pa * step;
            }
            next[s] = acc;
        }
        v = next;
    }
    Ok(v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_synthetic, standard_test_mdp, ActionId, Dataset, Trajectory, Transition};

    fn chain_dataset() -> DiscreteDataset {
        // Deterministic logged chain 0 -> 1 -> terminal success.
        let t = Trajectory::new(vec![
            Transition::new(0usize, ActionId(0), 1, false, false),
            Transition::new(1usize, ActionId(0), 1, true, true),
        ])
        .unwrap();
        Dataset::new(vec![t]).unwrap()
    }

    #[test]
    fn fit_counts_deterministic_chain() {
        let mdp = TabularMdp::fit(&chain_dataset(), 2, 1, 0.9, 10).unwrap();
        assert_eq!(mdp.p_hat()[[0, 0, 1]], 1.0);
        // Terminal transition routes to the absorbing column.
        assert_eq!(mdp.p_hat()[[1, 0, 2]], 1.0);
        assert_eq!(mdp.r_hat()[[1, 0]], 1.0);
        assert_eq!(mdp.r_hat()[[0, 0]], 0.0);
    }

    #[test]
    fn unobserved_pair_gets_uniform_fallback() {
        let mdp = TabularMdp::fit(&chain_dataset(), 3, 2, 0.9, 10).unwrap();
        // (2, 1) never observed: uniform over 4 successors, zero reward.
        for n in 0..=3 {
            assert!((mdp.p_hat()[[2, 1, n]] - 0.25).abs() < 1e-12);
        }
        assert_eq!(mdp.r_hat()[[2, 1]], 0.0);
    }

    #[test]
    fn fit_recovers_known_kernel() {
        // Well-mixed 4-state chain so every (s, a) is visited thousands of
        // times at 100k+ transitions.
        let kernel = vec![
            vec![vec![0.3, 0.3, 0.3, 0.1], vec![0.1, 0.4, 0.4, 0.1]],
            vec![vec![0.25, 0.25, 0.4, 0.1], vec![0.4, 0.2, 0.3, 0.1]],
            vec![vec![0.5, 0.2, 0.2, 0.1], vec![0.2, 0.3, 0.4, 0.1]],
            vec![vec![0.0, 0.0, 0.0, 1.0], vec![0.0, 0.0, 0.0, 1.0]],
        ];
        let spec = SyntheticMdpSpec {
            n_states: 4,
            n_actions: 2,
            horizon_max: 30,
            transition_kernel: kernel,
            success_states: vec![3],
            failure_states: vec![],
            start_dist: vec![0.4, 0.3, 0.3, 0.0],
            behavior_policy: vec![vec![0.5, 0.5]; 4],
            seed: 42,
        };
        let ds = generate_synthetic(&spec, 12_000).unwrap();
        assert!(ds.m() > 100_000);
        let mdp = TabularMdp::fit(&ds, 4, 2, 0.99, 30).unwrap();
        // Compare visited rows to the true kernel with terminal mass folded
        // into the absorbing column.
        let truth = TabularMdp::from_spec(&spec, 0.99, 30).unwrap();
        let mut worst = 0.0_f64;
        for s in 0..3 {
            for a in 0..2 {
                let l1: f64 = (0..=4)
                    .map(|n| (mdp.p_hat()[[s, a, n]] - truth.p_hat()[[s, a, n]]).abs())
                    .sum();
                worst = worst.max(l1);
            }
        }
        assert!(worst < 0.05, "max row L1 error {worst}");
    }

    #[test]
    fn behavior_estimate_matches_frequencies() {
        // State 0 logs actions {0, 0, 1}; alpha -> 0 approaches (2/3, 1/3).
        let t = |a: usize| {
            Trajectory::new(vec![Transition::new(0usize, ActionId(a), 0, true, false)]).unwrap()
        };
        let ds = Dataset::new(vec![t(0), t(0), t(1)]).unwrap();
        let pi = estimate_behavior_policy(&ds, 1, 2, 1e-9).unwrap();
        assert!((pi.prob(0, 0) - 2.0 / 3.0).abs() < 1e-6);
        assert!((pi.prob(0, 1) - 1.0 / 3.0).abs() < 1e-6);
        // Unvisited state rows are uniform.
        let pi = estimate_behavior_policy(&ds, 2, 2, 0.5).unwrap();
        assert!((pi.prob(1, 0) - 0.5).abs() < 1e-12);
        assert!(pi.prob(0, 1) > 0.0);
    }

    #[test]
    fn predict_reward_base_and_absorbing() {
        let spec = standard_test_mdp(1);
        let mdp = TabularMdp::from_spec(&spec, 0.99, 15).unwrap();
        let pi = PolicyTable::uniform(8, 3);
        for (s, a) in [(0, 0), (3, 2), (5, 1)] {
            assert_eq!(mdp.predict_reward(&pi, s, a, 0), mdp.r_hat()[[s, a]]);
        }
        // Terminal rows route straight to absorbing: zero reward at any t.
        for t in 0..5 {
            assert_eq!(mdp.predict_reward(&pi, 6, 0, t), 0.0);
            assert_eq!(mdp.predict_reward(&pi, 7, 0, t), 0.0);
        }
        // Beyond the horizon the prediction truncates to zero.
        assert_eq!(mdp.predict_reward(&pi, 0, 1, 16), 0.0);
    }

    #[test]
    fn predict_reward_matches_hand_computed_chain() {
        // Three states: 0 -> 1 -> 2(success terminal), single action,
        // P(1|0) = 0.5 (else stay), P(2|1) = 1.
        let spec = SyntheticMdpSpec {
            n_states: 3,
            n_actions: 1,
            horizon_max: 10,
            transition_kernel: vec![
                vec![vec![0.5, 0.5, 0.0]],
                vec![vec![0.0, 0.0, 1.0]],
                vec![vec![0.0, 0.0, 1.0]],
            ],
            success_states: vec![2],
            failure_states: vec![],
            start_dist: vec![1.0, 0.0, 0.0],
            behavior_policy: vec![vec![1.0]; 3],
            seed: 0,
        };
        let mdp = TabularMdp::from_spec(&spec, 0.9, 10).unwrap();
        let pi = PolicyTable::uniform(3, 1);
        // r(0, 0, t): reward earned exactly when the chain jumps 1 -> 2 at
        // step t; P(at 0 for t steps then 0->1 then 1->2).
        assert!((mdp.predict_reward(&pi, 0, 0, 0) - 0.0).abs() < 1e-12);
        assert!((mdp.predict_reward(&pi, 0, 0, 1) - 0.5).abs() < 1e-12);
        assert!((mdp.predict_reward(&pi, 0, 0, 2) - 0.25).abs() < 1e-12);
        assert!((mdp.predict_reward(&pi, 1, 0, 0) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn model_values_gamma_zero_is_r_hat() {
        let spec = standard_test_mdp(1);
        let mdp = TabularMdp::from_spec(&spec, 0.0, 10).unwrap();
        let pi = PolicyTable::uniform(8, 3);
        let mv = mdp.model_values(&pi);
        for s in 0..8 {
            for a in 0..3 {
                assert!((mv.q_at(s, a) - mdp.r_hat()[[s, a]]).abs() < 1e-12);
            }
        }
        // Absorbing value is zero by definition.
        assert_eq!(mv.v_at(8), 0.0);
    }

    #[test]
    fn single_step_success_value_is_one() {
        let spec = SyntheticMdpSpec {
            n_states: 2,
            n_actions: 1,
            horizon_max: 5,
            transition_kernel: vec![vec![vec![0.0, 1.0]], vec![vec![0.0, 1.0]]],
            success_states: vec![1],
            failure_states: vec![],
            start_dist: vec![1.0, 0.0],
            behavior_policy: vec![vec![1.0]; 2],
            seed: 0,
        };
        let pi = PolicyTable::uniform(2, 1);
        let v = exact_policy_value(&spec, &pi, 0.99, 5).unwrap();
        assert!((v - 1.0).abs() < 1e-12);
    }

    #[test]
    fn symmetric_actions_match_deterministic_value() {
        // Two actions with identical rows: uniform policy equals either
        // deterministic policy.
        let mut spec = standard_test_mdp(2);
        spec.n_actions = 2;
        spec.transition_kernel = spec
            .transition_kernel
            .into_iter()
            .map(|rows| vec![rows[1].clone(), rows[1].clone()])
            .collect();
        spec.behavior_policy = vec![vec![0.5, 0.5]; 8];
        spec.validate().unwrap();
        let uniform = PolicyTable::uniform(8, 2);
        let det = PolicyTable::greedy_from_actions(&[0; 8], 2);
        let vu = exact_policy_value(&spec, &uniform, 0.99, 10).unwrap();
        let vd = exact_policy_value(&spec, &det, 0.99, 10).unwrap();
        assert!((vu - vd).abs() < 1e-12);
    }

    #[test]
    fn mdp_file_round_trip() {
        let mdp = TabularMdp::fit(&chain_dataset(), 2, 1, 0.9, 10).unwrap();
        let f = tempfile::NamedTempFile::new().unwrap();
        mdp.save(f.path()).unwrap();
        let back = TabularMdp::load(f.path()).unwrap();
        assert_eq!(mdp, back);
    }
}
