//! Synthetic ground-truth MDPs.
//!
//! These generators exist so estimators can be checked against exact
//! dynamic-programming values: the transition kernel, behavior policy, and
//! start distribution are all known, and episodes are rolled out exactly as
//! the data model expects (sparse terminal reward, truncation at
//! `horizon_max`).

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::data::{
    ActionId, Dataset, DiscreteDataset, FeatureDataset, StateFeatures, Trajectory, Transition,
    STATE_FEATURE_DIM,
};
use crate::error::{Error, Result};

const ROW_SUM_TOL: f64 = 1e-9;

/// Full description of a synthetic MDP: kernel, terminal outcome sets,
/// start distribution, logging (behavior) policy, and rollout horizon.
///
/// Episodes terminate on entering a success or failure state, or by
/// truncation after `horizon_max` transitions; the truncating transition is
/// flagged terminal with `success = false`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticMdpSpec {
    pub n_states: usize,
    pub n_actions: usize,
    pub horizon_max: usize,
    /// `transition_kernel[s][a][s']`, each row a distribution.
    pub transition_kernel: Vec<Vec<Vec<f64>>>,
    pub success_states: Vec<usize>,
    pub failure_states: Vec<usize>,
    /// Start-state distribution; must put no mass on terminal states.
    pub start_dist: Vec<f64>,
    /// `behavior_policy[s][a]`, strictly positive rows.
    pub behavior_policy: Vec<Vec<f64>>,
    pub seed: u64,
}

impl SyntheticMdpSpec {
    pub fn validate(&self) -> Result<()> {
        let cfg = |msg: String| Err(Error::Config(msg));
        if self.n_states == 0 || self.n_actions == 0 {
            return cfg("n_states and n_actions must be positive".to_string());
        }
        if self.horizon_max < 1 {
            return cfg("horizon_max must be at least 1".to_string());
        }
        for s in self.success_states.iter().chain(&self.failure_states) {
            if *s >= self.n_states {
                return cfg(format!("terminal state {s} out of range"));
            }
        }
        if self
            .success_states
            .iter()
            .any(|s| self.failure_states.contains(s))
        {
            return cfg("success and failure state sets overlap".to_string());
        }
        if self.transition_kernel.len() != self.n_states {
            return cfg("transition kernel must have one entry per state".to_string());
        }
        for (s, per_action) in self.transition_kernel.iter().enumerate() {
            if per_action.len() != self.n_actions {
                return cfg(format!("state {s}: kernel must have one row per action"));
            }
            for (a, row) in per_action.iter().enumerate() {
                if row.len() != self.n_states {
                    return cfg(format!("kernel row ({s},{a}) has wrong length"));
                }
                if row.iter().any(|p| !p.is_finite() || *p < 0.0) {
                    return cfg(format!("kernel row ({s},{a}) has invalid entries"));
                }
                let sum: f64 = row.iter().sum();
                if (sum - 1.0).abs() > ROW_SUM_TOL {
                    return cfg(format!("kernel row ({s},{a}) sums to {sum}, expected 1"));
                }
            }
        }
        if self.behavior_policy.len() != self.n_states {
            return cfg("behavior policy must have one row per state".to_string());
        }
        for (s, row) in self.behavior_policy.iter().enumerate() {
            if row.len() != self.n_actions {
                return cfg(format!("behavior row {s} has wrong length"));
            }
            if row.iter().any(|p| !p.is_finite() || *p <= 0.0) {
                return cfg(format!("behavior row {s} must be strictly positive"));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > ROW_SUM_TOL {
                return cfg(format!("behavior row {s} sums to {sum}, expected 1"));
            }
        }
        if self.start_dist.len() != self.n_states {
            return cfg("start distribution has wrong length".to_string());
        }
        let sum: f64 = self.start_dist.iter().sum();
        if (sum - 1.0).abs() > ROW_SUM_TOL {
            return cfg(format!("start distribution sums to {sum}, expected 1"));
        }
        for (s, p) in self.start_dist.iter().enumerate() {
            if *p < 0.0 || !p.is_finite() {
                return cfg(format!("start probability of state {s} is invalid"));
            }
            if *p > 0.0 && self.is_terminal(s) {
                return cfg(format!("start distribution puts mass on terminal state {s}"));
            }
        }
        Ok(())
    }

    pub fn is_success(&self, s: usize) -> bool {
        self.success_states.contains(&s)
    }

    pub fn is_terminal(&self, s: usize) -> bool {
        self.success_states.contains(&s) || self.failure_states.contains(&s)
    }
}

fn sample_categorical(rng: &mut ChaCha8Rng, probs: &[f64]) -> usize {
    let draw: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if draw < acc {
            return i;
        }
    }
    probs.len() - 1 // guard against rounding at the top of the cdf
}

/// Roll out one episode; shared by the discrete and feature generators.
fn rollout(spec: &SyntheticMdpSpec, rng: &mut ChaCha8Rng) -> Vec<(usize, usize, usize, bool, bool)> {
    let mut steps = Vec::new();
    let mut s = sample_categorical(rng, &spec.start_dist);
    for step in 0..spec.horizon_max {
        let a = sample_categorical(rng, &spec.behavior_policy[s]);
        let next = sample_categorical(rng, &spec.transition_kernel[s][a]);
        let truncated = step + 1 == spec.horizon_max;
        let terminal = spec.is_terminal(next) || truncated;
        let success = spec.is_success(next);
        steps.push((s, a, next, terminal, success));
        if terminal {
            break;
        }
        s = next;
    }
    steps
}

/// Sample a discrete-state dataset by rolling out the behavior policy.
/// Reproducible: the spec's seed fully determines the output.
pub fn generate_synthetic(spec: &SyntheticMdpSpec, n_trajectories: usize) -> Result<DiscreteDataset> {
    spec.validate()?;
    if n_trajectories < 1 {
        return Err(Error::Config("n_trajectories must be at least 1".to_string()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut trajectories = Vec::with_capacity(n_trajectories);
    for _ in 0..n_trajectories {
        let transitions = rollout(spec, &mut rng)
            .into_iter()
            .map(|(s, a, next, terminal, success)| {
                Transition::new(s, ActionId(a), next, terminal, success)
            })
            .collect();
        trajectories.push(Trajectory::new(transitions)?);
    }
    Dataset::new(trajectories)
}

/// Per-state Gaussian feature emission: visiting state `s` observes a fresh
/// draw from `N(means[s], stds[s]^2)` per dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureEmission {
    /// `means[s][d]` for every state (including terminal states, whose
    /// emissions only ever appear as the dangling next-state of a terminal
    /// transition).
    pub means: Vec<[f64; STATE_FEATURE_DIM]>,
    pub stds: Vec<[f64; STATE_FEATURE_DIM]>,
}

impl FeatureEmission {
    fn sample(&self, s: usize, rng: &mut ChaCha8Rng) -> Result<StateFeatures> {
        let mut v = [0.0; STATE_FEATURE_DIM];
        for d in 0..STATE_FEATURE_DIM {
            let std = self.stds[s][d];
            v[d] = if std > 0.0 {
                let normal = Normal::new(self.means[s][d], std)
                    .map_err(|e| Error::Config(format!("bad emission std: {e}")))?;
                normal.sample(rng)
            } else {
                self.means[s][d]
            };
            // Emission noise may dip below zero on nonnegative components;
            // clamp rather than resample to keep the draw count fixed.
            if matches!(d, 4 | 6 | 8 | 9) && v[d] < 0.0 {
                v[d] = 0.0;
            }
        }
        StateFeatures::new(v)
    }
}

/// Sample a feature-state dataset together with its aligned latent discrete
/// twin (same episodes, same steps). The twin is what an oracle that knows
/// the generating kernel can evaluate exactly.
pub fn generate_synthetic_features(
    spec: &SyntheticMdpSpec,
    emission: &FeatureEmission,
    n_trajectories: usize,
) -> Result<(FeatureDataset, DiscreteDataset)> {
    spec.validate()?;
    if emission.means.len() != spec.n_states || emission.stds.len() != spec.n_states {
        return Err(Error::Config(
            "emission tables must have one row per state".to_string(),
        ));
    }
    if n_trajectories < 1 {
        return Err(Error::Config("n_trajectories must be at least 1".to_string()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut feature_trajs = Vec::with_capacity(n_trajectories);
    let mut latent_trajs = Vec::with_capacity(n_trajectories);
    for _ in 0..n_trajectories {
        let steps = rollout(spec, &mut rng);
        // Emit one observation per visited state instance so that chained
        // transitions share the exact same feature vector.
        let mut observed: Vec<StateFeatures> = Vec::with_capacity(steps.len() + 1);
        observed.push(emission.sample(steps[0].0, &mut rng)?);
        for &(_, _, next, _, _) in &steps {
            observed.push(emission.sample(next, &mut rng)?);
        }
        let mut f_transitions = Vec::with_capacity(steps.len());
        let mut l_transitions = Vec::with_capacity(steps.len());
        for (t, &(s, a, next, terminal, success)) in steps.iter().enumerate() {
            f_transitions.push(Transition::new(
                observed[t],
                ActionId(a),
                observed[t + 1],
                terminal,
                success,
            ));
            l_transitions.push(Transition::new(s, ActionId(a), next, terminal, success));
        }
        feature_trajs.push(Trajectory::new(f_transitions)?);
        latent_trajs.push(Trajectory::new(l_transitions)?);
    }
    Ok((
        Dataset::new(feature_trajs)?,
        Dataset::new(latent_trajs)?,
    ))
}

/// The fixed 8-state / 3-action / horizon-10 MDP used throughout the test
/// and benchmark suites. States 0..=5 form a progress chain, 6 is the
/// failure outcome, 7 the success outcome. Action 0 coasts, action 1 pushes
/// steadily toward success, action 2 jumps two steps at a higher failure
/// risk. The behavior policy leans on coasting; episodes mostly resolve well
/// before the horizon.
pub fn standard_test_mdp(seed: u64) -> SyntheticMdpSpec {
    const FAIL: usize = 6;
    const SUCC: usize = 7;
    let n_states = 8;
    let n_actions = 3;
    let mut kernel = vec![vec![vec![0.0; n_states]; n_actions]; n_states];
    for s in 0..6 {
        let up = if s == 5 { SUCC } else { s + 1 };
        let down = s.saturating_sub(1);
        let jump = if s + 2 >= 6 { SUCC } else { s + 2 };
        kernel[s][0][s] += 0.42;
        kernel[s][0][down] += 0.15;
        kernel[s][0][up] += 0.35;
        kernel[s][0][FAIL] += 0.08;

        kernel[s][1][up] += 0.55;
        kernel[s][1][jump] += 0.25;
        kernel[s][1][s] += 0.05;
        kernel[s][1][down] += 0.05;
        kernel[s][1][FAIL] += 0.10;

        kernel[s][2][jump] += 0.40;
        kernel[s][2][up] += 0.20;
        kernel[s][2][s] += 0.05;
        kernel[s][2][FAIL] += 0.35;
    }
    for s in [FAIL, SUCC] {
        for a in 0..n_actions {
            kernel[s][a][s] = 1.0;
        }
    }
    let mut start_dist = vec![0.0; n_states];
    for s in 1..4 {
        start_dist[s] = 1.0 / 3.0;
    }
    SyntheticMdpSpec {
        n_states,
        n_actions,
        horizon_max: 10,
        transition_kernel: kernel,
        success_states: vec![SUCC],
        failure_states: vec![FAIL],
        start_dist,
        behavior_policy: vec![vec![0.35, 0.45, 0.20]; n_states],
        seed,
    }
}

/// A student-like benchmark: a latent 8-state progress MDP with 10 actions
/// (2 study-plan options x 5 aid types) whose visited states are observed
/// only through noisy 10-dimensional term features.
#[derive(Debug, Clone)]
pub struct StudentBenchmark {
    pub spec: SyntheticMdpSpec,
    pub emission: FeatureEmission,
}

/// Build the student-like benchmark. For latent state `s` the effective aid
/// type is `s % 5`; pairing it with a study plan raises the advance
/// probability further. The behavior policy spreads over all actions but
/// favors one mediocre action, so better behavior is present in the log yet
/// underused.
pub fn student_benchmark(seed: u64) -> StudentBenchmark {
    const FAIL: usize = 6;
    const SUCC: usize = 7;
    let n_states = 8;
    let n_actions = 10;
    let mut kernel = vec![vec![vec![0.0; n_states]; n_actions]; n_states];
    for s in 0..6 {
        let up = if s == 5 { SUCC } else { s + 1 };
        let down = s.saturating_sub(1);
        for a in 0..n_actions {
            let plan = a >= 5;
            let right_aid = a % 5 == s % 5;
            let p_up = 0.10 + 0.55 * f64::from(right_aid as u8) + 0.15 * f64::from(plan as u8);
            let p_fail =
                (0.25 - 0.20 * f64::from(right_aid as u8) - 0.05 * f64::from(plan as u8)).max(0.0);
            let p_down = 0.10;
            let p_stay = (1.0 - p_up - p_fail - p_down).max(0.0);
            kernel[s][a][up] += p_up;
            kernel[s][a][FAIL] += p_fail;
            kernel[s][a][down] += p_down;
            kernel[s][a][s] += p_stay;
        }
    }
    for s in [FAIL, SUCC] {
        for a in 0..n_actions {
            kernel[s][a][s] = 1.0;
        }
    }
    // 0.55 mass spread uniformly, 0.45 concentrated on action 1
    // (no plan, aid type 1).
    let mut behavior_row = vec![0.055; n_actions];
    behavior_row[1] += 0.45;
    let mut start_dist = vec![0.0; n_states];
    for s in 0..3 {
        start_dist[s] = 1.0 / 3.0;
    }
    let spec = SyntheticMdpSpec {
        n_states,
        n_actions,
        horizon_max: 12,
        transition_kernel: kernel,
        success_states: vec![SUCC],
        failure_states: vec![FAIL],
        start_dist,
        behavior_policy: vec![behavior_row; n_states],
        seed,
    };

    // Every informative dimension varies across latent states with a
    // comparable spread-to-noise ratio, so standardized blobs stay close to
    // the identical-spherical shape the BIC split test models.
    let mut means = Vec::with_capacity(n_states);
    let mut stds = Vec::with_capacity(n_states);
    for s in 0..n_states {
        let sf = s as f64;
        means.push([
            3000.0,           // total program hours (program constant)
            8.0,              // suggested terms
            14.0,             // maximum terms
            4.0 + 0.8 * sf,   // grade mean rises with standing
            0.8 + 0.12 * sf,  // grade spread widens slightly
            40.0 + 4.0 * sf,  // course-hours mean
            3.0 + 0.8 * sf,   // course-hours spread
            10.0 - 1.2 * sf,  // absences fall with standing
            1.0 + 0.25 * sf,  // absence spread
            3.0 + 0.4 * sf,   // completed courses
        ]);
        stds.push([0.0, 0.0, 0.0, 0.15, 0.025, 0.8, 0.15, 0.25, 0.05, 0.08]);
    }
    StudentBenchmark {
        spec,
        emission: FeatureEmission { means, stds },
    }
}
