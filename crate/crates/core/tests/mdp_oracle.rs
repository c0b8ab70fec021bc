//! Model-value and DP-oracle cross-checks.

mod common;

use batchrl::data::{generate_synthetic, standard_test_mdp};
use batchrl::mdp::{
    estimate_behavior_policy, exact_policy_value, optimal_epsilon_greedy, PolicyTable, TabularMdp,
};
use common::{bellman_backward_q, monte_carlo_value, random_policy, random_spec};

#[test]
fn model_values_match_backward_induction() {
    for seed in 0..6u64 {
        let spec = random_spec(8, 3, 12, 100 + seed);
        let mdp = TabularMdp::from_spec(&spec, 0.95, 15).unwrap();
        let pi = random_policy(8, 3, 200 + seed);
        let mv = mdp.model_values(&pi);
        let q_oracle = bellman_backward_q(&mdp, &pi);
        for s in 0..8 {
            for a in 0..3 {
                assert!(
                    (mv.q_at(s, a) - q_oracle[[s, a]]).abs() < 1e-10,
                    "q({s},{a}) {} vs oracle {}",
                    mv.q_at(s, a),
                    q_oracle[[s, a]]
                );
            }
            let v_oracle: f64 = (0..3).map(|a| pi.prob(s, a) * q_oracle[[s, a]]).sum();
            assert!((mv.v_at(s) - v_oracle).abs() < 1e-10);
        }
    }
}

#[test]
fn model_values_match_summed_reward_predictions() {
    let spec = random_spec(6, 2, 10, 17);
    let mdp = TabularMdp::from_spec(&spec, 0.9, 8).unwrap();
    let pi = random_policy(6, 2, 18);
    let mv = mdp.model_values(&pi);
    for s in 0..6 {
        for a in 0..2 {
            let summed: f64 = (0..=8)
                .map(|t| 0.9f64.powi(t as i32) * mdp.predict_reward(&pi, s, a, t))
                .sum();
            assert!((mv.q_at(s, a) - summed).abs() < 1e-12);
        }
    }
}

#[test]
fn exact_value_matches_monte_carlo() {
    let spec = random_spec(6, 2, 12, 31);
    let pi = random_policy(6, 2, 32);
    let exact = exact_policy_value(&spec, &pi, 0.99, spec.horizon_max).unwrap();
    let (mc, se) = monte_carlo_value(&spec, &pi, 0.99, 1_000_000, 33);
    assert!(
        (exact - mc).abs() < 3.0 * se.max(1e-6),
        "exact {exact} vs mc {mc} (se {se})"
    );
}

#[test]
fn generator_return_mean_matches_dp_value() {
    let spec = standard_test_mdp(77);
    let ds = generate_synthetic(&spec, 50_000).unwrap();
    let pi_b = PolicyTable::from_rows(&spec.behavior_policy).unwrap();
    let exact = exact_policy_value(&spec, &pi_b, 0.99, spec.horizon_max).unwrap();
    let returns: Vec<f64> = ds
        .trajectories()
        .iter()
        .map(|t| t.discounted_return(0.99))
        .collect();
    let n = returns.len() as f64;
    let mean = returns.iter().sum::<f64>() / n;
    let var = returns.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / (n - 1.0);
    let se = (var / n).sqrt();
    assert!(
        (mean - exact).abs() < 3.0 * se,
        "empirical {mean} vs exact {exact} (se {se})"
    );
}

#[test]
fn generator_visitation_matches_forward_occupancy() {
    // Forward occupancy oracle: d_{t+1}(s') = sum_s d_t(s) sum_a pi(a|s) P(s'|s,a)
    // over transient states; expected visits are the sums across time.
    let spec = standard_test_mdp(91);
    let n = 50_000usize;
    let ds = generate_synthetic(&spec, n).unwrap();
    let pi_b = &spec.behavior_policy;

    let transient: Vec<usize> = (0..spec.n_states).filter(|&s| !spec.is_terminal(s)).collect();
    let mut d = spec.start_dist.clone();
    let mut expected = vec![0.0; spec.n_states];
    for _ in 0..spec.horizon_max {
        for &s in &transient {
            expected[s] += d[s];
        }
        let mut next = vec![0.0; spec.n_states];
        for &s in &transient {
            if d[s] == 0.0 {
                continue;
            }
            for a in 0..spec.n_actions {
                let pa = pi_b[s][a];
                for (sp, &p) in spec.transition_kernel[s][a].iter().enumerate() {
                    if !spec.is_terminal(sp) {
                        next[sp] += d[s] * pa * p;
                    }
                }
            }
        }
        d = next;
    }

    let mut observed = vec![0usize; spec.n_states];
    for traj in ds.trajectories() {
        for tr in traj.transitions() {
            observed[tr.state] += 1;
        }
    }
    // Start states are an exact multinomial draw: chi-square against the
    // start distribution (df = 2, 1% critical value 9.21).
    let mut start_counts = vec![0usize; spec.n_states];
    for traj in ds.trajectories() {
        start_counts[traj.transitions()[0].state] += 1;
    }
    let mut chi2 = 0.0;
    for s in 0..spec.n_states {
        let e = spec.start_dist[s] * n as f64;
        if e > 0.0 {
            let o = start_counts[s] as f64;
            chi2 += (o - e) * (o - e) / e;
        }
    }
    assert!(chi2 < 9.21, "start-state chi-square {chi2}");

    // Total visit counts track the occupancy expectation within 3%.
    for &s in &transient {
        let e = expected[s] * n as f64;
        if e > 500.0 {
            let rel = (observed[s] as f64 - e).abs() / e;
            assert!(rel < 0.03, "state {s}: observed {} expected {e}", observed[s]);
        }
    }
}

#[test]
fn reward_prediction_is_linear_in_policy_mixtures() {
    let spec = random_spec(7, 3, 10, 55);
    let mdp = TabularMdp::from_spec(&spec, 0.9, 10).unwrap();
    let p1 = random_policy(7, 3, 56);
    let p2 = random_policy(7, 3, 57);
    for lambda in [0.0, 0.3, 0.7, 1.0] {
        let mixed = p1.mix(&p2, lambda).unwrap();
        for s in 0..5 {
            for a in 0..3 {
                let lhs = mdp.predict_reward(&mixed, s, a, 1);
                let rhs = lambda * mdp.predict_reward(&p1, s, a, 1)
                    + (1.0 - lambda) * mdp.predict_reward(&p2, s, a, 1);
                assert!((lhs - rhs).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn behavior_estimate_converges_to_true_policy() {
    let spec = standard_test_mdp(13);
    let ds = generate_synthetic(&spec, 40_000).unwrap();
    let pi_b = estimate_behavior_policy(&ds, 8, 3, 0.5).unwrap();
    for s in 0..6 {
        for a in 0..3 {
            assert!(
                (pi_b.prob(s, a) - spec.behavior_policy[s][a]).abs() < 0.02,
                "pi_b({s},{a}) = {}",
                pi_b.prob(s, a)
            );
        }
    }
}

#[test]
fn optimal_epsilon_greedy_beats_behavior() {
    let spec = standard_test_mdp(3);
    let pi_e = optimal_epsilon_greedy(&spec, 0.99, 20, 0.2).unwrap();
    let pi_b = PolicyTable::from_rows(&spec.behavior_policy).unwrap();
    let ve = exact_policy_value(&spec, &pi_e, 0.99, spec.horizon_max).unwrap();
    let vb = exact_policy_value(&spec, &pi_b, 0.99, spec.horizon_max).unwrap();
    assert!(ve > vb + 0.05, "pi_e {ve} vs pi_b {vb}");
}
