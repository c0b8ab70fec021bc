//! Episodic trajectory data model.
//!
//! Logged data is a set of trajectories, one per episode; each step is a
//! `(state, action, reward, next_state, terminal, success)` transition.
//! Rewards follow the sparse rule: 1 exactly on a terminal transition into a
//! successful outcome, 0 everywhere else.
//!
//! States come in two representations: continuous 10-dimensional feature
//! vectors ([`StateFeatures`], before discretization) and discrete cluster
//! ids (`usize`). All containers are generic over the representation;
//! [`FeatureDataset`] and [`DiscreteDataset`] are the two instantiations the
//! rest of the crate works with.

mod aggregate;
mod csv_io;
mod jsonl;
mod synthetic;

pub use aggregate::{aggregate_term, CourseRecord, ProgramInfo};
pub use csv_io::{
    load_csv, save_term_csv, CsvSchema, LoadedDataset, StateColumns, DEFAULT_FEATURE_COLUMNS,
};
pub use jsonl::{load_jsonl, save_jsonl, StateRepr};
pub use synthetic::{
    generate_synthetic, generate_synthetic_features, standard_test_mdp, student_benchmark,
    FeatureEmission, StudentBenchmark, SyntheticMdpSpec,
};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of continuous state features per term.
pub const STATE_FEATURE_DIM: usize = 10;

/// One aggregated academic term, in fixed order: total program hours,
/// suggested terms, maximum allowed terms, grade mean, grade std,
/// course-hours mean, course-hours std, absence mean, absence std,
/// completed-course count.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StateFeatures(pub [f64; STATE_FEATURE_DIM]);

impl StateFeatures {
    /// Indices of components that must be nonnegative (standard deviations
    /// and the completed-course count).
    const NONNEG: [usize; 4] = [4, 6, 8, 9];

    pub fn new(values: [f64; STATE_FEATURE_DIM]) -> Result<Self> {
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Config(format!("state feature {i} is not finite")));
        }
        for i in Self::NONNEG {
            if values[i] < 0.0 {
                return Err(Error::Config(format!(
                    "state feature {i} must be nonnegative, got {}",
                    values[i]
                )));
            }
        }
        Ok(StateFeatures(values))
    }

    pub fn values(&self) -> &[f64; STATE_FEATURE_DIM] {
        &self.0
    }
}

/// Discrete action index.
///
/// The student action space is the cross product of a study-plan flag (2
/// options) and an aid type (5 options), laid out as
/// `index = plan_flag * 5 + aid_type`, 10 actions total. Generic MDP code
/// treats the index as opaque; range checks happen wherever an action count
/// is known.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ActionId(pub usize);

/// Number of aid types in the student action layout.
pub const AID_TYPES: usize = 5;
/// Total actions in the student action layout (2 plan options x 5 aid types).
pub const STUDENT_ACTIONS: usize = 10;

impl ActionId {
    /// Compose a student action from its two factors.
    pub fn from_parts(plan: bool, aid_type: usize) -> Result<Self> {
        if aid_type >= AID_TYPES {
            return Err(Error::Config(format!(
                "aid type {aid_type} out of range (expected < {AID_TYPES})"
            )));
        }
        Ok(ActionId(usize::from(plan) * AID_TYPES + aid_type))
    }

    pub fn index(&self) -> usize {
        self.0
    }

    /// Study-plan flag under the student 2x5 layout.
    pub fn plan(&self) -> bool {
        self.0 / AID_TYPES > 0
    }

    /// Aid type under the student 2x5 layout.
    pub fn aid_type(&self) -> usize {
        self.0 % AID_TYPES
    }
}

/// One logged step. `success` is only meaningful on terminal transitions;
/// the reward is derived from it (`reward = 1` iff `terminal && success`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transition<S> {
    pub state: S,
    pub action: ActionId,
    pub reward: f64,
    pub next_state: S,
    pub terminal: bool,
    pub success: bool,
}

impl<S> Transition<S> {
    pub fn new(state: S, action: ActionId, next_state: S, terminal: bool, success: bool) -> Self {
        let reward = if terminal && success { 1.0 } else { 0.0 };
        Transition {
            state,
            action,
            reward,
            next_state,
            terminal,
            success,
        }
    }
}

/// One episode: a nonempty transition sequence whose last (and only last)
/// transition is terminal, chained so each `next_state` equals the following
/// `state`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "TrajectoryRepr<S>", into = "TrajectoryRepr<S>")]
#[serde(bound(
    serialize = "S: Serialize + Clone",
    deserialize = "S: Deserialize<'de> + PartialEq + Clone"
))]
pub struct Trajectory<S: PartialEq + Clone> {
    transitions: Vec<Transition<S>>,
}

#[derive(Serialize, Deserialize)]
struct TrajectoryRepr<S> {
    transitions: Vec<Transition<S>>,
}

impl<S: PartialEq + Clone> TryFrom<TrajectoryRepr<S>> for Trajectory<S> {
    type Error = Error;
    fn try_from(repr: TrajectoryRepr<S>) -> Result<Self> {
        Trajectory::new(repr.transitions)
    }
}

impl<S: PartialEq + Clone> From<Trajectory<S>> for TrajectoryRepr<S> {
    fn from(t: Trajectory<S>) -> Self {
        TrajectoryRepr {
            transitions: t.transitions,
        }
    }
}

impl<S: PartialEq + Clone> Trajectory<S> {
    pub fn new(transitions: Vec<Transition<S>>) -> Result<Self> {
        let invalid = |reason: &str| Error::MalformedEpisode {
            episode: "<unnamed>".to_string(),
            reason: reason.to_string(),
        };
        if transitions.is_empty() {
            return Err(invalid("no transitions"));
        }
        let last = transitions.len() - 1;
        for (t, tr) in transitions.iter().enumerate() {
            if tr.terminal != (t == last) {
                return Err(invalid(if tr.terminal {
                    "terminal transition before the end of the episode"
                } else {
                    "last transition is not terminal"
                }));
            }
            if tr.success && !tr.terminal {
                return Err(invalid("success flag on a non-terminal transition"));
            }
            let expected = if tr.terminal && tr.success { 1.0 } else { 0.0 };
            if tr.reward != expected {
                return Err(invalid("reward violates the sparse reward rule"));
            }
            if t < last && transitions[t + 1].state != tr.next_state {
                return Err(invalid("next_state does not chain to the following state"));
            }
        }
        Ok(Trajectory { transitions })
    }

    pub fn len(&self) -> usize {
        self.transitions.len()
    }

    pub fn is_empty(&self) -> bool {
        false // invariant: at least one transition
    }

    pub fn transitions(&self) -> &[Transition<S>] {
        &self.transitions
    }

    /// Whether the episode ended in the successful outcome.
    pub fn success(&self) -> bool {
        self.transitions[self.transitions.len() - 1].success
    }

    /// Discounted return sum_t gamma^t r_t.
    pub fn discounted_return(&self, gamma: f64) -> f64 {
        let mut acc = 0.0;
        let mut g = 1.0;
        for tr in &self.transitions {
            acc += g * tr.reward;
            g *= gamma;
        }
        acc
    }
}

/// A batch of logged trajectories.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(
    serialize = "S: Serialize + Clone",
    deserialize = "S: Deserialize<'de> + PartialEq + Clone"
))]
pub struct Dataset<S: PartialEq + Clone> {
    trajectories: Vec<Trajectory<S>>,
}

pub type FeatureDataset = Dataset<StateFeatures>;
pub type DiscreteDataset = Dataset<usize>;

impl<S: PartialEq + Clone> Dataset<S> {
    pub fn new(trajectories: Vec<Trajectory<S>>) -> Result<Self> {
        if trajectories.is_empty() {
            return Err(Error::InsufficientData(
                "a dataset must contain at least one trajectory".to_string(),
            ));
        }
        Ok(Dataset { trajectories })
    }

    /// Number of trajectories.
    pub fn n(&self) -> usize {
        self.trajectories.len()
    }

    /// Total number of transitions.
    pub fn m(&self) -> usize {
        self.trajectories.iter().map(Trajectory::len).sum()
    }

    pub fn trajectories(&self) -> &[Trajectory<S>] {
        &self.trajectories
    }

    /// Length of the longest trajectory.
    pub fn max_len(&self) -> usize {
        self.trajectories.iter().map(Trajectory::len).max().unwrap_or(0)
    }

    /// Empirical mean discounted return of the logged episodes.
    pub fn mean_discounted_return(&self, gamma: f64) -> f64 {
        let total: f64 = self
            .trajectories
            .iter()
            .map(|t| t.discounted_return(gamma))
            .sum();
        total / self.trajectories.len() as f64
    }

    /// Trajectory-level split into `(train, eval)`; the eval side receives
    /// `round(n * eval_fraction)` trajectories, clamped so both sides stay
    /// nonempty. Deterministic in `seed`; the union is the input and the
    /// parts are disjoint.
    pub fn split(&self, eval_fraction: f64, seed: u64) -> Result<(Dataset<S>, Dataset<S>)> {
        if !(eval_fraction > 0.0 && eval_fraction < 1.0) {
            return Err(Error::Config(format!(
                "eval_fraction must lie in (0, 1), got {eval_fraction}"
            )));
        }
        let n = self.trajectories.len();
        if n < 2 {
            return Err(Error::InsufficientData(
                "need at least two trajectories to split".to_string(),
            ));
        }
        let n_eval = ((n as f64 * eval_fraction).round() as usize).clamp(1, n - 1);
        let mut indices: Vec<usize> = (0..n).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        indices.shuffle(&mut rng);
        let mut eval_idx: Vec<usize> = indices[..n_eval].to_vec();
        let mut train_idx: Vec<usize> = indices[n_eval..].to_vec();
        // Preserve original episode order inside each part.
        eval_idx.sort_unstable();
        train_idx.sort_unstable();
        let pick = |idx: &[usize]| {
            Dataset::new(idx.iter().map(|&i| self.trajectories[i].clone()).collect())
        };
        Ok((pick(&train_idx)?, pick(&eval_idx)?))
    }
}

impl FeatureDataset {
    /// Stack every visited state (the `state` field of each transition) into
    /// an `m x 10` matrix, in trajectory order.
    pub fn state_matrix(&self) -> ndarray::Array2<f64> {
        let m = self.m();
        let mut out = ndarray::Array2::zeros((m, STATE_FEATURE_DIM));
        let mut row = 0;
        for traj in &self.trajectories {
            for tr in traj.transitions() {
                for (j, v) in tr.state.values().iter().enumerate() {
                    out[[row, j]] = *v;
                }
                row += 1;
            }
        }
        out
    }

    /// Map every state through a discretizer, producing the discrete twin of
    /// this dataset.
    pub fn discretize(&self, model: &crate::discretize::ClusterModel) -> Result<DiscreteDataset> {
        let trajectories = self
            .trajectories
            .iter()
            .map(|traj| {
                let transitions = traj
                    .transitions()
                    .iter()
                    .map(|tr| Transition {
                        state: model.assign_state(&tr.state),
                        action: tr.action,
                        reward: tr.reward,
                        next_state: model.assign_state(&tr.next_state),
                        terminal: tr.terminal,
                        success: tr.success,
                    })
                    .collect();
                Trajectory::new(transitions)
            })
            .collect::<Result<Vec<_>>>()?;
        Dataset::new(trajectories)
    }
}

impl DiscreteDataset {
    /// Largest state id appearing anywhere (including next states).
    pub fn max_state_id(&self) -> usize {
        self.trajectories
            .iter()
            .flat_map(|t| t.transitions())
            .map(|tr| tr.state.max(tr.next_state))
            .max()
            .unwrap_or(0)
    }

    /// Largest action id appearing anywhere.
    pub fn max_action_id(&self) -> usize {
        self.trajectories
            .iter()
            .flat_map(|t| t.transitions())
            .map(|tr| tr.action.index())
            .max()
            .unwrap_or(0)
    }
}
