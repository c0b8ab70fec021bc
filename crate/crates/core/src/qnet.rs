//! Dueling two-stream MLP over one-hot discrete states.
//!
//! Architecture: shared rectified layer, then parallel value and advantage
//! streams (one rectified hidden layer each); the heads combine as
//! `Q(s, a) = V(s) + A(s, a) - mean_a' A(s, a')`. Parameters live in one
//! flat vector so the analytic gradient can be checked against finite
//! differences coordinate by coordinate.
//!
//! Since inputs are one-hot, the shared layer's pre-activation for state `s`
//! is just column `s` of its weight matrix plus the bias; forward and
//! backward passes exploit that instead of materializing the one-hot.

use ndarray::Array2;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::argmax_tie_lowest;
use crate::error::{Error, Result};
use crate::mdp::PolicyTable;

/// Layer sizes. The default shared width is 128 with 32-unit streams.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetDims {
    pub n_states: usize,
    pub n_actions: usize,
    pub shared: usize,
    pub stream: usize,
}

impl NetDims {
    pub fn new(n_states: usize, n_actions: usize) -> Self {
        NetDims {
            n_states,
            n_actions,
            shared: 128,
            stream: 32,
        }
    }

    pub fn n_params(&self) -> usize {
        let NetDims {
            n_states: s,
            n_actions: a,
            shared: h,
            stream: u,
        } = *self;
        h * s + h          // shared layer
            + u * h + u    // value hidden
            + u + 1        // value head
            + u * h + u    // advantage hidden
            + a * u + a    // advantage head
    }
}

/// Offsets of each parameter block inside the flat vector.
#[derive(Debug, Clone, Copy)]
struct Layout {
    w1: usize,
    b1: usize,
    wv1: usize,
    bv1: usize,
    wv2: usize,
    bv2: usize,
    wa1: usize,
    ba1: usize,
    wa2: usize,
    ba2: usize,
}

impl Layout {
    fn of(d: &NetDims) -> Layout {
        let (s, a, h, u) = (d.n_states, d.n_actions, d.shared, d.stream);
        let w1 = 0;
        let b1 = w1 + h * s;
        let wv1 = b1 + h;
        let bv1 = wv1 + u * h;
        let wv2 = bv1 + u;
        let bv2 = wv2 + u;
        let wa1 = bv2 + 1;
        let ba1 = wa1 + u * h;
        let wa2 = ba1 + u;
        let ba2 = wa2 + a * u;
        Layout {
            w1,
            b1,
            wv1,
            bv1,
            wv2,
            bv2,
            wa1,
            ba1,
            wa2,
            ba2,
        }
    }
}

/// One training example: state, taken action, regression target.
#[derive(Debug, Clone, Copy)]
pub struct BatchItem {
    pub state: usize,
    pub action: usize,
    pub target: f64,
}

/// Policy derivations from a Q table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyMode {
    Greedy,
    Epsilon(f64),
    Softmax(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DuelingQNet {
    dims: NetDims,
    theta: Vec<f64>,
    target: Vec<f64>,
}

impl DuelingQNet {
    /// Seeded uniform fan-in initialization (`U(-1/sqrt(fan_in), +)`);
    /// biases start at zero and the target copy starts equal to theta.
    pub fn new(dims: NetDims, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self::init_with(dims, &mut rng)
    }

    pub fn init_with(dims: NetDims, rng: &mut ChaCha8Rng) -> Self {
        let l = Layout::of(&dims);
        let mut theta = vec![0.0; dims.n_params()];
        let mut fill = |from: usize, count: usize, fan_in: usize, rng: &mut ChaCha8Rng| {
            let bound = 1.0 / (fan_in as f64).sqrt();
            for v in &mut theta[from..from + count] {
                *v = rng.gen_range(-bound..bound);
            }
        };
        fill(l.w1, dims.shared * dims.n_states, dims.n_states, rng);
        fill(l.wv1, dims.stream * dims.shared, dims.shared, rng);
        fill(l.wv2, dims.stream, dims.stream, rng);
        fill(l.wa1, dims.stream * dims.shared, dims.shared, rng);
        fill(l.wa2, dims.n_actions * dims.stream, dims.stream, rng);
        let target = theta.clone();
        DuelingQNet {
            dims,
            theta,
            target,
        }
    }

    /// All-zero parameters (Q identically 0); mostly for tests.
    pub fn zeros(dims: NetDims) -> Self {
        let n = dims.n_params();
        DuelingQNet {
            dims,
            theta: vec![0.0; n],
            target: vec![0.0; n],
        }
    }

    pub fn dims(&self) -> &NetDims {
        &self.dims
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn theta_mut(&mut self) -> &mut Vec<f64> {
        &mut self.theta
    }

    pub fn target_params(&self) -> &[f64] {
        &self.target
    }

    /// Q row for one state under an explicit parameter vector.
    fn q_row(&self, params: &[f64], state: usize) -> Vec<f64> {
        let d = &self.dims;
        let l = Layout::of(d);
        let (h, u, a) = (d.shared, d.stream, d.n_actions);
        // Shared layer on a one-hot input: column `state` of w1 plus bias.
        let mut hid = vec![0.0; h];
        for i in 0..h {
            hid[i] = (params[l.w1 + i * d.n_states + state] + params[l.b1 + i]).max(0.0);
        }
        let mut hv = vec![0.0; u];
        let mut ha = vec![0.0; u];
        for j in 0..u {
            let mut zv = params[l.bv1 + j];
            let mut za = params[l.ba1 + j];
            for i in 0..h {
                zv += params[l.wv1 + j * h + i] * hid[i];
                za += params[l.wa1 + j * h + i] * hid[i];
            }
            hv[j] = zv.max(0.0);
            ha[j] = za.max(0.0);
        }
        let mut value = params[l.bv2];
        for j in 0..u {
            value += params[l.wv2 + j] * hv[j];
        }
        let mut adv = vec![0.0; a];
        for k in 0..a {
            let mut z = params[l.ba2 + k];
            for j in 0..u {
                z += params[l.wa2 + k * u + j] * ha[j];
            }
            adv[k] = z;
        }
        let mean_adv = adv.iter().sum::<f64>() / a as f64;
        adv.iter().map(|&ak| value + ak - mean_adv).collect()
    }

    /// Batched Q values from either the online or the target parameters.
    pub fn forward(&self, states: &[usize], use_target: bool) -> Result<Array2<f64>> {
        let params = if use_target { &self.target } else { &self.theta };
        self.q_values(params, states)
    }

    /// Batched Q values as a pure function of an explicit parameter vector.
    pub fn q_values(&self, params: &[f64], states: &[usize]) -> Result<Array2<f64>> {
        let mut out = Array2::zeros((states.len(), self.dims.n_actions));
        for (r, &s) in states.iter().enumerate() {
            if s >= self.dims.n_states {
                return Err(Error::StateOutOfRange {
                    id: s,
                    n_states: self.dims.n_states,
                });
            }
            let row = self.q_row(params, s);
            for (c, v) in row.into_iter().enumerate() {
                out[[r, c]] = v;
            }
        }
        Ok(out)
    }

    /// Mean squared error over the minibatch and its gradient with respect
    /// to `params` (targets are constants). States/actions must be in range.
    pub fn loss_and_grad(&self, params: &[f64], batch: &[BatchItem]) -> (f64, Vec<f64>) {
        let d = &self.dims;
        let l = Layout::of(d);
        let (h, u, a) = (d.shared, d.stream, d.n_actions);
        assert!(!batch.is_empty(), "empty minibatch");
        let scale = 1.0 / batch.len() as f64;
        let mut loss = 0.0;
        let mut grad = vec![0.0; params.len()];

        for item in batch {
            let s = item.state;
            assert!(s < d.n_states && item.action < a, "batch item out of range");
            // Forward, keeping pre-activations for the backward pass.
            let mut z1 = vec![0.0; h];
            let mut hid = vec![0.0; h];
            for i in 0..h {
                z1[i] = params[l.w1 + i * d.n_states + s] + params[l.b1 + i];
                hid[i] = z1[i].max(0.0);
            }
            let mut zv = vec![0.0; u];
            let mut hv = vec![0.0; u];
            let mut za = vec![0.0; u];
            let mut ha = vec![0.0; u];
            for j in 0..u {
                let mut av = params[l.bv1 + j];
                let mut aa = params[l.ba1 + j];
                for i in 0..h {
                    av += params[l.wv1 + j * h + i] * hid[i];
                    aa += params[l.wa1 + j * h + i] * hid[i];
                }
                zv[j] = av;
                hv[j] = av.max(0.0);
                za[j] = aa;
                ha[j] = aa.max(0.0);
            }
            let mut value = params[l.bv2];
            for j in 0..u {
                value += params[l.wv2 + j] * hv[j];
            }
            let mut adv = vec![0.0; a];
            for k in 0..a {
                let mut z = params[l.ba2 + k];
                for j in 0..u {
                    z += params[l.wa2 + k * u + j] * ha[j];
                }
                adv[k] = z;
            }
            let mean_adv = adv.iter().sum::<f64>() / a as f64;
            let q = value + adv[item.action] - mean_adv;

            let err = q - item.target;
            loss += scale * err * err;
            let g = 2.0 * scale * err; // dL/dQ(s, a_taken)

            // Heads: dQ/dV = 1; dQ/dA_k = [k = a_taken] - 1/A.
            let g_v = g;
            let mut d_hv = vec![0.0; u];
            grad[l.bv2] += g_v;
            for j in 0..u {
                grad[l.wv2 + j] += g_v * hv[j];
                d_hv[j] = g_v * params[l.wv2 + j];
            }
            let mut d_ha = vec![0.0; u];
            for k in 0..a {
                let g_a = g * (if k == item.action { 1.0 } else { 0.0 } - 1.0 / a as f64);
                grad[l.ba2 + k] += g_a;
                for j in 0..u {
                    grad[l.wa2 + k * u + j] += g_a * ha[j];
                    d_ha[j] += g_a * params[l.wa2 + k * u + j];
                }
            }
            // Stream hidden layers.
            let mut d_hid = vec![0.0; h];
            for j in 0..u {
                let dv = if zv[j] > 0.0 { d_hv[j] } else { 0.0 };
                let da = if za[j] > 0.0 { d_ha[j] } else { 0.0 };
                grad[l.bv1 + j] += dv;
                grad[l.ba1 + j] += da;
                for i in 0..h {
                    grad[l.wv1 + j * h + i] += dv * hid[i];
                    grad[l.wa1 + j * h + i] += da * hid[i];
                    d_hid[i] += dv * params[l.wv1 + j * h + i] + da * params[l.wa1 + j * h + i];
                }
            }
            // Shared layer; only column `s` of w1 receives gradient.
            for i in 0..h {
                let dz = if z1[i] > 0.0 { d_hid[i] } else { 0.0 };
                grad[l.b1 + i] += dz;
                grad[l.w1 + i * d.n_states + s] += dz;
            }
        }
        (loss, grad)
    }

    /// Soft target update `target <- tau * theta + (1 - tau) * target`.
    pub fn target_sync(&mut self, tau: f64) -> Result<()> {
        if !(tau > 0.0 && tau <= 1.0) {
            return Err(Error::Config(format!("tau must lie in (0, 1], got {tau}")));
        }
        for (t, &o) in self.target.iter_mut().zip(&self.theta) {
            *t = tau * o + (1.0 - tau) * *t;
        }
        Ok(())
    }

    /// Tabulate the online Q values into a policy over every state.
    pub fn to_policy(&self, mode: PolicyMode) -> Result<PolicyTable> {
        let (s, a) = (self.dims.n_states, self.dims.n_actions);
        match mode {
            PolicyMode::Epsilon(e) if !(0.0..=1.0).contains(&e) => {
                return Err(Error::Config(format!("epsilon must lie in [0, 1], got {e}")));
            }
            PolicyMode::Softmax(t) if t <= 0.0 => {
                return Err(Error::Config(format!("temperature must be positive, got {t}")));
            }
            _ => {}
        }
        let mut probs = Array2::zeros((s, a));
        for state in 0..s {
            let q = self.q_row(&self.theta, state);
            match mode {
                PolicyMode::Greedy => {
                    probs[[state, argmax_tie_lowest(&q)]] = 1.0;
                }
                PolicyMode::Epsilon(e) => {
                    let best = argmax_tie_lowest(&q);
                    for k in 0..a {
                        probs[[state, k]] = e / a as f64;
                    }
                    probs[[state, best]] += 1.0 - e;
                }
                PolicyMode::Softmax(temp) => {
                    let hot = argmax_tie_lowest(&q);
                    let mx = q[hot];
                    let weights: Vec<f64> = q.iter().map(|&v| ((v - mx) / temp).exp()).collect();
                    let z: f64 = weights.iter().sum();
                    for k in 0..a {
                        probs[[state, k]] = weights[k] / z;
                    }
                }
            }
        }
        PolicyTable::new(probs)
    }
}

/// Adam with bias correction and a per-epoch learning-rate decay multiplier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
    pub learning_rate: f64,
    pub lr_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamState {
    pub fn new(n_params: usize, learning_rate: f64, lr_decay: f64) -> Self {
        AdamState {
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
            t: 0,
            learning_rate,
            lr_decay,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.t
    }

    /// One bias-corrected update of `theta` in place.
    pub fn step(&mut self, theta: &mut [f64], grad: &[f64]) {
        assert_eq!(theta.len(), self.m.len());
        assert_eq!(grad.len(), self.m.len());
        self.t += 1;
        let b1t = 1.0 - self.beta1.powi(self.t as i32);
        let b2t = 1.0 - self.beta2.powi(self.t as i32);
        for i in 0..theta.len() {
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * grad[i];
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * grad[i] * grad[i];
            let m_hat = self.m[i] / b1t;
            let v_hat = self.v[i] / b2t;
            theta[i] -= self.learning_rate * m_hat / (v_hat.sqrt() + self.epsilon);
        }
    }

    /// Apply the per-epoch learning-rate decay.
    pub fn end_epoch(&mut self) {
        self.learning_rate *= self.lr_decay;
    }
}
