use batchrl::data::{generate_synthetic, standard_test_mdp, SyntheticMdpSpec};
use batchrl::mdp::{estimate_behavior_policy, exact_policy_value, PolicyTable, TabularMdp};
use batchrl::ope::{magic, swdr, MagicConfig, OpeInputs};

fn pi_e_eps(spec: &SyntheticMdpSpec, gamma: f64, horizon: usize, eps: f64) -> PolicyTable {
    let true_mdp = TabularMdp::from_spec(spec, gamma, horizon).unwrap();
    let q_star = true_mdp.optimal_q();
    let greedy: Vec<usize> = (0..spec.n_states).map(|s| {
        let row: Vec<f64> = (0..spec.n_actions).map(|a| q_star[[s, a]]).collect();
        row.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap().0
    }).collect();
    PolicyTable::greedy_from_actions(&greedy, spec.n_actions)
        .mix(&PolicyTable::uniform(spec.n_states, spec.n_actions), 1.0 - eps).unwrap()
}

fn run(start_lo: usize, eps: f64, behavior: [f64; 3]) {
    let gamma = 0.99;
    let base = |seed: u64| {
        let mut spec = standard_test_mdp(0);
        spec.start_dist = vec![0.0; 8];
        for s in start_lo..start_lo + 3 { spec.start_dist[s] = 1.0 / 3.0; }
        spec.behavior_policy = vec![behavior.to_vec(); 8];
        spec.seed = seed;
        spec
    };
    // truncation + model bias at 50k
    let spec = base(555);
    let ds = generate_synthetic(&spec, 50_000).unwrap();
    let trunc = ds.trajectories().iter().filter(|t| {
        let last = &t.transitions()[t.len() - 1];
        !spec.is_terminal(last.next_state)
    }).count() as f64 / 50_000.0;

    let mut c1_worst: f64 = 0.0;
    for seed in 0..6u64 {
        let spec = base(4000 + seed);
        let ds = generate_synthetic(&spec, 10_000).unwrap();
        let horizon = 2 * ds.max_len();
        let mdp = TabularMdp::fit(&ds, 8, 3, gamma, horizon).unwrap();
        let pi_e = pi_e_eps(&spec, gamma, horizon, eps);
        let pi_b = estimate_behavior_policy(&ds, 8, 3, 0.5).unwrap();
        let exact = exact_policy_value(&spec, &pi_e, gamma, spec.horizon_max).unwrap();
        let values = mdp.model_values(&pi_e);
        let inputs = OpeInputs { dataset: &ds, pi_e: &pi_e, pi_b: &pi_b, values: &values, gamma };
        let cfg = MagicConfig { seed: spec.seed, ..MagicConfig::default() };
        let s = swdr(&inputs, &cfg, false).unwrap();
        let m = magic(&inputs, &cfg).unwrap();
        c1_worst = c1_worst.max((s.estimate - exact).abs() / exact).max((m.estimate - exact).abs() / exact);
    }
    print!("start {start_lo} eps {eps} pb {behavior:?}: trunc {trunc:.4} c1_worst {c1_worst:.4} | trend");
    for n in [1000usize, 4000, 16000] {
        let mut se = vec![];
        let mut me = vec![];
        for seed in 0..10u64 {
            let spec = base(1000 + seed);
            let ds = generate_synthetic(&spec, n).unwrap();
            let horizon = 2 * ds.max_len();
            let mdp = TabularMdp::fit(&ds, 8, 3, gamma, horizon).unwrap();
            let pi_e = pi_e_eps(&spec, gamma, horizon, eps);
            let pi_b = estimate_behavior_policy(&ds, 8, 3, 0.5).unwrap();
            let exact = exact_policy_value(&spec, &pi_e, gamma, spec.horizon_max).unwrap();
            let values = mdp.model_values(&pi_e);
            let inputs = OpeInputs { dataset: &ds, pi_e: &pi_e, pi_b: &pi_b, values: &values, gamma };
            let cfg = MagicConfig { seed: spec.seed, ..MagicConfig::default() };
            se.push((swdr(&inputs, &cfg, false).unwrap().estimate - exact).abs());
            me.push((magic(&inputs, &cfg).unwrap().estimate - exact).abs());
        }
        let med = |v: &mut Vec<f64>| { v.sort_by(f64::total_cmp); (v[4] + v[5]) / 2.0 };
        print!("  n{n}: s {:.5} m {:.5}", med(&mut se), med(&mut me));
    }
    println!();
}

fn main() {
    run(1, 0.2, [0.35, 0.45, 0.20]);
    run(1, 0.15, [0.45, 0.35, 0.20]);
    run(2, 0.15, [0.45, 0.35, 0.20]);
    run(1, 0.15, [0.55, 0.30, 0.15]);
    run(2, 0.2, [0.55, 0.30, 0.15]);
}
