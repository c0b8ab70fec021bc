//! Shared fixtures for the integration suites: random MDP instances and
//! small independent oracles (kept free of the code paths they check).

use batchrl::data::SyntheticMdpSpec;
use batchrl::mdp::{PolicyTable, TabularMdp};
use ndarray::Array2;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Random MDP with one success and one failure state, strictly positive
/// behavior policy, uniform start over transient states.
pub fn random_spec(n_states: usize, n_actions: usize, horizon_max: usize, seed: u64) -> SyntheticMdpSpec {
    assert!(n_states >= 3);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let succ = n_states - 1;
    let fail = n_states - 2;
    let mut kernel = vec![vec![vec![0.0; n_states]; n_actions]; n_states];
    for (s, per_action) in kernel.iter_mut().enumerate() {
        for row in per_action.iter_mut() {
            if s == succ || s == fail {
                row[s] = 1.0;
                continue;
            }
            let mut total = 0.0;
            for p in row.iter_mut() {
                *p = rng.gen_range(0.05..1.0);
                total += *p;
            }
            for p in row.iter_mut() {
                *p /= total;
            }
        }
    }
    let transient = n_states - 2;
    let mut start_dist = vec![0.0; n_states];
    for p in start_dist.iter_mut().take(transient) {
        *p = 1.0 / transient as f64;
    }
    let behavior_policy = (0..n_states)
        .map(|_| {
            let mut row: Vec<f64> = (0..n_actions).map(|_| rng.gen_range(0.2..1.0)).collect();
            let total: f64 = row.iter().sum();
            row.iter_mut().for_each(|p| *p /= total);
            row
        })
        .collect();
    SyntheticMdpSpec {
        n_states,
        n_actions,
        horizon_max,
        transition_kernel: kernel,
        success_states: vec![succ],
        failure_states: vec![fail],
        start_dist,
        behavior_policy,
        seed,
    }
}

/// Random strictly-positive policy table.
pub fn random_policy(n_states: usize, n_actions: usize, seed: u64) -> PolicyTable {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut probs = Array2::zeros((n_states, n_actions));
    for s in 0..n_states {
        let mut total = 0.0;
        for a in 0..n_actions {
            let v = rng.gen_range(0.1..1.0);
            probs[[s, a]] = v;
            total += v;
        }
        for a in 0..n_actions {
            probs[[s, a]] /= total;
        }
    }
    PolicyTable::new(probs).unwrap()
}

/// Independent truncated policy evaluation by backward induction on the
/// fitted model: `q_h = r_hat + gamma * P_hat (pi . q_{h-1})`, `q_0 = r_hat`.
/// Checks the forward reward-recursion route in `model_values`.
pub fn bellman_backward_q(mdp: &TabularMdp, pi: &PolicyTable) -> Array2<f64> {
    let (s_n, a_n) = (mdp.n_states(), mdp.n_actions());
    let mut q = mdp.r_hat().clone();
    for _ in 0..mdp.horizon() {
        let v: Vec<f64> = (0..s_n)
            .map(|s| (0..a_n).map(|a| pi.prob(s, a) * q[[s, a]]).sum())
            .collect();
        let mut next = mdp.r_hat().clone();
        for s in 0..s_n {
            for a in 0..a_n {
                let mut acc = 0.0;
                for sp in 0..s_n {
                    acc += mdp.p_hat()[[s, a, sp]] * v[sp];
                }
                next[[s, a]] += mdp.gamma() * acc;
            }
        }
        q = next;
    }
    q
}

/// Monte Carlo rollouts of a policy on the TRUE kernel (independent of the
/// library's generator); returns (mean discounted return, standard error).
pub fn monte_carlo_value(
    spec: &SyntheticMdpSpec,
    pi: &PolicyTable,
    gamma: f64,
    episodes: usize,
    seed: u64,
) -> (f64, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sample = |probs: &[f64], rng: &mut ChaCha8Rng| -> usize {
        let draw: f64 = rng.gen();
        let mut acc = 0.0;
        for (i, p) in probs.iter().enumerate() {
            acc += p;
            if draw < acc {
                return i;
            }
        }
        probs.len() - 1
    };
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    for _ in 0..episodes {
        let mut s = sample(&spec.start_dist, &mut rng);
        let mut ret = 0.0;
        let mut discount = 1.0;
        for _ in 0..spec.horizon_max {
            let row: Vec<f64> = (0..spec.n_actions).map(|a| pi.prob(s, a)).collect();
            let a = sample(&row, &mut rng);
            let next = sample(&spec.transition_kernel[s][a], &mut rng);
            if spec.is_success(next) {
                ret += discount;
            }
            discount *= gamma;
            if spec.is_terminal(next) {
                break;
            }
            s = next;
        }
        sum += ret;
        sum_sq += ret * ret;
    }
    let n = episodes as f64;
    let mean = sum / n;
    let var = (sum_sq / n - mean * mean).max(0.0);
    (mean, (var / n).sqrt())
}
