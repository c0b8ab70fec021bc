//! Offline dueling double Q-learning on a fixed transition batch.
//!
//! The loop never touches an environment: every step samples a minibatch
//! uniformly with replacement from the flattened transition set, regresses
//! the online network onto double-Q targets, and soft-syncs the target
//! network every `sync_every` steps. Off-policy evaluation of the softened
//! greedy policy runs at a configurable cadence and lands in the log.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;
use std::time::Instant;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{DiscreteDataset, Transition};
use crate::error::{Error, Result};
use crate::mdp::{PolicyTable, TabularMdp};
use crate::ope::{magic, swdr, MagicConfig, OpeInputs};
use crate::qnet::{AdamState, BatchItem, DuelingQNet, NetDims, PolicyMode};
use crate::argmax_tie_lowest;

/// Which network selects the argmax action and which evaluates it in the
/// double-Q target.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DoubleQMode {
    /// Select on the online network, evaluate on the target network
    /// (standard double Q-learning; the default).
    OnlineSelect,
    /// Select on the target network, evaluate on the online network.
    TargetSelect,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub minibatch: usize,
    /// Target update rate tau.
    pub tau: f64,
    /// Target sync cadence in steps; `None` means one epoch's worth.
    pub sync_every: Option<usize>,
    pub gamma: f64,
    pub learning_rate: f64,
    pub lr_decay: f64,
    pub seed: u64,
    /// OPE cadence in steps; `None` means once per epoch.
    pub ope_eval_every: Option<usize>,
    pub double_q: DoubleQMode,
    /// Apply the gradient step only on sync steps instead of every step
    /// (the literal batched cadence; off by default).
    pub literal_gradient_cadence: bool,
    pub shared_units: usize,
    pub stream_units: usize,
    /// Epsilon used to soften the greedy policy for in-training OPE.
    pub epsilon_eval: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 25,
            minibatch: 512,
            tau: 0.1,
            sync_every: None,
            gamma: 0.99,
            learning_rate: 0.01,
            lr_decay: 0.999,
            seed: 0,
            ope_eval_every: None,
            double_q: DoubleQMode::OnlineSelect,
            literal_gradient_cadence: false,
            shared_units: 128,
            stream_units: 32,
            epsilon_eval: 0.05,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let cfg = |m: String| Err(Error::Config(m));
        if self.epochs < 1 {
            return cfg("epochs must be at least 1".to_string());
        }
        if self.minibatch < 1 {
            return cfg("minibatch must be at least 1".to_string());
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return cfg(format!("tau must lie in (0, 1], got {}", self.tau));
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return cfg(format!("gamma must lie in [0, 1], got {}", self.gamma));
        }
        if self.learning_rate <= 0.0 || self.lr_decay <= 0.0 || self.lr_decay > 1.0 {
            return cfg("learning rate must be positive and decay in (0, 1]".to_string());
        }
        if !(0.0..=1.0).contains(&self.epsilon_eval) {
            return cfg(format!(
                "epsilon_eval must lie in [0, 1], got {}",
                self.epsilon_eval
            ));
        }
        if self.shared_units < 1 || self.stream_units < 1 {
            return cfg("layer widths must be positive".to_string());
        }
        Ok(())
    }
}

/// One OPE evaluation during training.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OpeEvalPoint {
    pub step: u64,
    pub swdr: f64,
    pub magic: f64,
    /// Estimates normalized by the evaluation dataset's logged mean return;
    /// absent when that return is zero.
    pub swdr_score: Option<f64>,
    pub magic_score: Option<f64>,
}

/// Training history. Wall-clock timings are measurement-only: they stay out
/// of serialized logs so identical runs produce identical files.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainLog {
    pub losses: Vec<f64>,
    pub evals: Vec<OpeEvalPoint>,
    #[serde(skip)]
    pub epoch_seconds: Vec<f64>,
}

/// Everything OPE needs during training. The model and behavior policy are
/// fitted once (on the training split) and reused at every eval point; the
/// evaluation policy is rebuilt from the current network.
pub struct OpeContext {
    pub eval_dataset: DiscreteDataset,
    pub mdp: TabularMdp,
    pub pi_b: PolicyTable,
    pub config: MagicConfig,
    pub swdr_strict_infinite: bool,
}

/// Double-Q regression targets for a minibatch: `y = r` on terminal
/// transitions, otherwise `y = r + gamma * Q_eval(s', a*)` with `a*` chosen
/// per the configured network-role assignment (argmax ties to the lowest
/// action id).
pub fn build_targets(
    batch: &[&Transition<usize>],
    net: &DuelingQNet,
    gamma: f64,
    mode: DoubleQMode,
) -> Result<Vec<f64>> {
    let next_states: Vec<usize> = batch.iter().map(|tr| tr.next_state).collect();
    let q_online = net.forward(&next_states, false)?;
    let q_target = net.forward(&next_states, true)?;
    let (select, eval) = match mode {
        DoubleQMode::OnlineSelect => (&q_online, &q_target),
        DoubleQMode::TargetSelect => (&q_target, &q_online),
    };
    Ok(batch
        .iter()
        .enumerate()
        .map(|(i, tr)| {
            if tr.terminal {
                tr.reward
            } else {
                let row = select.row(i);
                let a_star = argmax_tie_lowest(row.as_slice().expect("contiguous row"));
                tr.reward + gamma * eval[[i, a_star]]
            }
        })
        .collect())
}

/// Complete trainer state; checkpointing this (RNG included) makes a resumed
/// run bit-identical to an uninterrupted one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainerState {
    pub net: DuelingQNet,
    pub adam: AdamState,
    pub rng: ChaCha8Rng,
    pub epochs_done: usize,
    pub step: u64,
    pub config: TrainConfig,
    pub log: TrainLog,
    pub n_states: usize,
    pub n_actions: usize,
}

const CHECKPOINT_FORMAT: &str = "qnet-checkpoint";
const CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct CheckpointFile {
    format: String,
    version: u32,
    state: TrainerState,
}

impl TrainerState {
    pub fn init(n_states: usize, n_actions: usize, config: &TrainConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let dims = NetDims {
            n_states,
            n_actions,
            shared: config.shared_units,
            stream: config.stream_units,
        };
        let net = DuelingQNet::init_with(dims, &mut rng);
        let adam = AdamState::new(dims.n_params(), config.learning_rate, config.lr_decay);
        Ok(TrainerState {
            net,
            adam,
            rng,
            epochs_done: 0,
            step: 0,
            config: config.clone(),
            log: TrainLog::default(),
            n_states,
            n_actions,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let w = BufWriter::new(File::create(path.as_ref())?);
        serde_json::to_writer(
            w,
            &CheckpointFile {
                format: CHECKPOINT_FORMAT.to_string(),
                version: CHECKPOINT_VERSION,
                state: self.clone(),
            },
        )?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let r = BufReader::new(File::open(path.as_ref())?);
        let file: CheckpointFile = serde_json::from_reader(r)?;
        if file.format != CHECKPOINT_FORMAT || file.version != CHECKPOINT_VERSION {
            return Err(Error::Format(format!(
                "unsupported checkpoint file {}/{}",
                file.format, file.version
            )));
        }
        Ok(file.state)
    }
}

/// Train from scratch for `config.epochs` epochs (one epoch is
/// `ceil(m / minibatch)` gradient steps).
pub fn train(
    dataset: &DiscreteDataset,
    n_states: usize,
    n_actions: usize,
    config: &TrainConfig,
    ope: Option<&OpeContext>,
) -> Result<(DuelingQNet, TrainLog)> {
    let mut state = TrainerState::init(n_states, n_actions, config)?;
    train_epochs(&mut state, dataset, ope, config.epochs)?;
    Ok((state.net, state.log))
}

/// Advance a (possibly checkpointed) trainer state until `target_epochs`
/// epochs are done. Calling this in any interrupted/resumed pattern yields
/// the same final state as one uninterrupted run.
pub fn train_epochs(
    state: &mut TrainerState,
    dataset: &DiscreteDataset,
    ope: Option<&OpeContext>,
    target_epochs: usize,
) -> Result<()> {
    let transitions: Vec<&Transition<usize>> = dataset
        .trajectories()
        .iter()
        .flat_map(|t| t.transitions())
        .collect();
    let m = transitions.len();
    if m == 0 {
        return Err(Error::InsufficientData("no transitions to train on".to_string()));
    }
    for tr in &transitions {
        if tr.state >= state.n_states || (!tr.terminal && tr.next_state >= state.n_states) {
            return Err(Error::StateOutOfRange {
                id: tr.state.max(tr.next_state),
                n_states: state.n_states,
            });
        }
        if tr.action.index() >= state.n_actions {
            return Err(Error::Config(format!(
                "action id {} out of range (n_actions = {})",
                tr.action.index(),
                state.n_actions
            )));
        }
    }
    if !transitions.iter().any(|t| t.terminal) {
        log::warn!("dataset has no terminal transitions; bootstrapped values may diverge");
    }
    let config = state.config.clone();
    let steps_per_epoch = m.div_ceil(config.minibatch);
    let sync_every = config.sync_every.unwrap_or(steps_per_epoch).max(1);
    let ope_every = config.ope_eval_every.unwrap_or(steps_per_epoch).max(1);

    // Terminal next-states may dangle past the trained id range (the
    // terminal branch of the target never reads them); remap for forward.
    let sanitize = |tr: &Transition<usize>| Transition {
        next_state: if tr.terminal { tr.state } else { tr.next_state },
        ..tr.clone()
    };

    while state.epochs_done < target_epochs {
        let epoch_start = Instant::now();
        for _ in 0..steps_per_epoch {
            state.step += 1;
            let batch: Vec<Transition<usize>> = (0..config.minibatch)
                .map(|_| sanitize(transitions[state.rng.gen_range(0..m)]))
                .collect();
            let batch_refs: Vec<&Transition<usize>> = batch.iter().collect();
            let targets = build_targets(&batch_refs, &state.net, config.gamma, config.double_q)?;
            let items: Vec<BatchItem> = batch
                .iter()
                .zip(&targets)
                .map(|(tr, &y)| BatchItem {
                    state: tr.state,
                    action: tr.action.index(),
                    target: y,
                })
                .collect();
            let (loss, grad) = state.net.loss_and_grad(state.net.theta(), &items);
            state.log.losses.push(loss);
            let apply_now = !config.literal_gradient_cadence || state.step % sync_every as u64 == 0;
            if apply_now {
                state.adam.step(state.net.theta_mut(), &grad);
            }
            if state.step % sync_every as u64 == 0 {
                state.net.target_sync(config.tau)?;
            }
            if let Some(ctx) = ope {
                if state.step % ope_every as u64 == 0 {
                    let point = evaluate_ope(&state.net, ctx, &config, state.step)?;
                    state.log.evals.push(point);
                }
            }
        }
        state.adam.end_epoch();
        state.epochs_done += 1;
        state.log.epoch_seconds.push(epoch_start.elapsed().as_secs_f64());
    }
    Ok(())
}

fn evaluate_ope(
    net: &DuelingQNet,
    ctx: &OpeContext,
    config: &TrainConfig,
    step: u64,
) -> Result<OpeEvalPoint> {
    let pi_e = net.to_policy(PolicyMode::Epsilon(config.epsilon_eval))?;
    let values = ctx.mdp.model_values(&pi_e);
    let inputs = OpeInputs {
        dataset: &ctx.eval_dataset,
        pi_e: &pi_e,
        pi_b: &ctx.pi_b,
        values: &values,
        gamma: config.gamma,
    };
    // Derive a fresh bootstrap seed per eval point, deterministically.
    let cfg = MagicConfig {
        seed: ctx.config.seed.wrapping_add(step),
        ..ctx.config.clone()
    };
    let swdr_res = swdr(&inputs, &cfg, ctx.swdr_strict_infinite)?;
    let magic_res = magic(&inputs, &cfg)?;
    let behavior = ctx.eval_dataset.mean_discounted_return(config.gamma);
    let score = |est: f64| {
        if behavior.abs() < 1e-300 {
            None
        } else {
            Some(est / behavior)
        }
    };
    Ok(OpeEvalPoint {
        step,
        swdr: swdr_res.estimate,
        magic: magic_res.estimate,
        swdr_score: score(swdr_res.estimate),
        magic_score: score(magic_res.estimate),
    })
}
