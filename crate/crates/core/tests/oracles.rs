//! Library results against independently computed references: enumeration,
//! Monte Carlo, quadrature and goodness-of-fit.

use nalgebra::{DMatrix, DVector};
use qedlab_core::coupled::{coupled_step, CoupledState, Coupling};
use qedlab_core::mdp::{policy_return, value_iteration, Backup, CategoricalPolicy, FiniteMdp, QTable};
use qedlab_core::replay::ReplayBuffer;
use qedlab_core::rng_from_seed;
use qedlab_core::toy::{prefill_buffer, Activation, BimodalBanditEnv, SquashedGaussianActor};
use rand::Rng;

/// `Q*` by exhaustive search over deterministic policies, each evaluated by a linear solve.
fn brute_force_q_star(mdp: &FiniteMdp) -> Vec<f64> {
    let (ns, na, g) = (mdp.num_states(), mdp.num_actions(), mdp.discount());
    let mut best_v = vec![f64::NEG_INFINITY; ns];
    for code in 0..na.pow(ns as u32) {
        let actions: Vec<usize> = (0..ns).map(|s| code / na.pow(s as u32) % na).collect();
        let a = DMatrix::from_fn(ns, ns, |i, j| f64::from(u8::from(i == j)) - g * mdp.transition_row(i, actions[i])[j]);
        let r = DVector::from_fn(ns, |i, _| mdp.reward(i, actions[i]));
        let v = a.lu().solve(&r).expect("I − γP is invertible");
        for s in 0..ns {
            best_v[s] = best_v[s].max(v[s]);
        }
    }
    let mut q = Vec::with_capacity(ns * na);
    for s in 0..ns {
        for a in 0..na {
            let next: f64 = mdp.transition_row(s, a).iter().zip(&best_v).map(|(p, v)| p * v).sum();
            q.push(mdp.reward(s, a) + g * next);
        }
    }
    q
}

#[test]
fn hard_value_iteration_matches_policy_enumeration() {
    for seed in 0..5 {
        let mdp = FiniteMdp::random(4, 3, 0.9, &mut rng_from_seed(seed)).unwrap();
        let vi = value_iteration(&mdp, Backup::Hard, 1e-12, 100_000).unwrap();
        let oracle = brute_force_q_star(&mdp);
        for (x, y) in vi.q.values().iter().zip(&oracle) {
            assert!((x - y).abs() < 1e-8, "{x} vs {y}");
        }
    }
}

#[test]
fn policy_return_matches_monte_carlo() {
    let mut rng = rng_from_seed(7);
    let mdp = FiniteMdp::random(5, 3, 0.8, &mut rng).unwrap();
    let rows: Vec<Vec<f64>> = (0..5)
        .map(|_| {
            let w: Vec<f64> = (0..3).map(|_| rng.random::<f64>() + 0.1).collect();
            let z: f64 = w.iter().sum();
            w.iter().map(|x| x / z).collect()
        })
        .collect();
    let policy = CategoricalPolicy::from_rows(rows).unwrap();
    let init = [0.2; 5];
    let exact = policy_return(&mdp, &policy, &init).unwrap();

    let episodes = 40_000;
    let horizon = 120; // 0.8^120 ≈ 2.5e-12
    let mut returns = Vec::with_capacity(episodes);
    for _ in 0..episodes {
        let mut s = rng.random_range(0..5);
        let (mut g, mut total) = (1.0, 0.0);
        for _ in 0..horizon {
            let a = policy.sample_action(s, &mut rng);
            total += g * mdp.reward(s, a);
            g *= mdp.discount();
            s = mdp.sample_next_state(s, a, &mut rng);
        }
        returns.push(total);
    }
    let mean = returns.iter().sum::<f64>() / episodes as f64;
    let var = returns.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (episodes - 1) as f64;
    let se = (var / episodes as f64).sqrt();
    assert!((mean - exact).abs() < 4.0 * se, "MC {mean} ± {se} vs exact {exact}");
}

#[test]
fn coupled_errors_stay_below_independently_evaluated_bound() {
    let mut checked = 0;
    for seed in 0..100u64 {
        let mut rng = rng_from_seed(10_000 + seed);
        let discount = if seed % 2 == 0 { 0.9 } else { 0.95 };
        let mdp = FiniteMdp::random(4, 3, discount, &mut rng).unwrap();
        let q_star = brute_force_q_star(&mdp);
        let kappa = 0.1 + 4.9 * rng.random::<f64>();
        let alpha_min = 0.01;
        let coupling = Coupling::new(kappa, alpha_min).unwrap();
        let q1 = QTable::random_uniform(4, 3, -10.0, 10.0, &mut rng);
        let q2 = QTable::random_uniform(4, 3, -10.0, 10.0, &mut rng);
        let sup = |q: &QTable| q.values().iter().zip(&q_star).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        let e0 = [sup(&q1), sup(&q2)];
        let delta0 = q1.values().iter().zip(q2.values()).map(|(a, b)| (a - b).abs()).fold(0.0f64, f64::max);
        let mut state = CoupledState::new(q1, q2).unwrap();
        let ln_a = 3f64.ln();
        for t in 1..=150 {
            state = coupled_step(&state, &mdp, coupling).unwrap().0;
            let gt = discount.powi(t);
            for (i, q) in [state.q1(), state.q2()].into_iter().enumerate() {
                let bound = gt * e0[i] + discount * alpha_min * ln_a * (1.0 - gt) / (1.0 - discount) + delta0 * ln_a * t as f64 * gt / kappa;
                let err = sup(q);
                assert!(err <= bound + 1e-9, "seed {seed} run {i} t {t}: error {err} above bound {bound}");
            }
        }
        checked += 1;
    }
    assert_eq!(checked, 100);
}

#[test]
fn prefill_actions_pass_a_uniformity_test() {
    let env = BimodalBanditEnv::default();
    let mut buffer = ReplayBuffer::new(20_000).unwrap();
    prefill_buffer(&mut buffer, &env, 20_000, -3.0, 0.0, &mut rng_from_seed(3)).unwrap();
    let bins = 10;
    let mut counts = vec![0usize; bins];
    for tr in buffer.iter() {
        assert!(tr.action > -3.0 && tr.action < 0.0);
        counts[((tr.action + 3.0) / 3.0 * bins as f64) as usize] += 1;
    }
    let expected = 20_000.0 / bins as f64;
    let chi2: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
    // 99.9% quantile of χ² with 9 degrees of freedom.
    assert!(chi2 < 27.877, "χ² = {chi2}, counts {counts:?}");
}

#[test]
fn squashed_density_integrates_to_one_and_matches_quadrature_mean() {
    let actor = SquashedGaussianActor::new(&[16, 16], Activation::Tanh, &mut rng_from_seed(11)).unwrap();
    for t in 0..2 {
        let state = BimodalBanditEnv::features(t);
        // Midpoint rule in action space, avoiding the open bounds.
        let n = 400_000;
        let width = 10.0 / n as f64;
        let (mut mass, mut first_moment) = (0.0, 0.0);
        for i in 0..n {
            let a = -5.0 + (i as f64 + 0.5) * width;
            let p = actor.squashed_log_prob(&state, a).unwrap().exp();
            mass += p * width;
            first_moment += a * p * width;
        }
        assert!((mass - 1.0).abs() < 1e-4, "mass {mass}");
        let mean = actor.mean_action(&state).unwrap();
        assert!((first_moment - mean).abs() < 1e-3, "{first_moment} vs {mean}");
    }
}
