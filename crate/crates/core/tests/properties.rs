//! Invariants of the discrete theory and the statistics, checked over random inputs.

use proptest::prelude::*;
use qedlab_core::coupled::{boltzmann_kl_pair, coupled_step, disagreement_temperature, CoupledState, Coupling};
use qedlab_core::mdp::{boltzmann_policy, hard_bellman, soft_bellman, FiniteMdp, QTable, TemperatureField};
use qedlab_core::metrics::{expectile, iqm, symmetric_kl_diag_gaussian, DiagGaussian};
use qedlab_core::qed::{alpha_qed, QedConfig};
use qedlab_core::rng_from_seed;

fn row_pair(max_actions: usize) -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (2..=max_actions).prop_flat_map(|n| (prop::collection::vec(-50.0..50.0f64, n), prop::collection::vec(-50.0..50.0f64, n)))
}

proptest! {
    #[test]
    fn shared_temperature_bounds_pairwise_kl((q1, q2) in row_pair(16), log_kappa in -4.0..3.0f64) {
        let kappa = log_kappa.exp();
        let alpha = disagreement_temperature(&q1, &q2, kappa, 1e-3).unwrap();
        let (fwd, rev) = boltzmann_kl_pair(&q1, &q2, alpha).unwrap();
        prop_assert!(alpha >= 1e-3);
        prop_assert!(fwd >= -1e-12 && rev >= -1e-12);
        prop_assert!(fwd <= 2.0 * kappa + 1e-9, "forward KL {fwd} above 2κ = {}", 2.0 * kappa);
        prop_assert!(rev <= 2.0 * kappa + 1e-9, "reverse KL {rev} above 2κ = {}", 2.0 * kappa);
    }

    #[test]
    fn boltzmann_is_a_distribution(row in prop::collection::vec(-1e3..1e3f64, 1..12), log_alpha in -8.0..4.0f64) {
        let p = boltzmann_policy(&row, log_alpha.exp()).unwrap();
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!(p.iter().all(|&x| (0.0..=1.0).contains(&x)));
    }

    #[test]
    fn soft_backup_sandwich_and_contraction(seed in 0u64..10_000, alpha in 1e-3..2.0f64, discount in 0.5..0.99f64) {
        let mut rng = rng_from_seed(seed);
        let mdp = FiniteMdp::random(6, 4, discount, &mut rng).unwrap();
        let q1 = QTable::random_uniform(6, 4, -10.0, 10.0, &mut rng);
        let q2 = QTable::random_uniform(6, 4, -10.0, 10.0, &mut rng);
        let temps = TemperatureField::constant(6, alpha).unwrap();
        let hard = hard_bellman(&mdp, &q1).unwrap();
        let soft1 = soft_bellman(&mdp, &q1, &temps).unwrap();
        let soft2 = soft_bellman(&mdp, &q2, &temps).unwrap();
        let slack = discount * alpha * 4f64.ln();
        for (h, s) in hard.values().iter().zip(soft1.values()) {
            prop_assert!(*s >= *h - 1e-9 && *s <= *h + slack + 1e-9);
        }
        let before = q1.sup_distance(&q2).unwrap();
        let after = soft1.sup_distance(&soft2).unwrap();
        prop_assert!(after <= discount * before + 1e-9);
    }

    #[test]
    fn coupled_step_contracts_disagreement(seed in 0u64..10_000, kappa in 0.05..5.0f64) {
        let mut rng = rng_from_seed(seed);
        let mdp = FiniteMdp::random(5, 3, 0.9, &mut rng).unwrap();
        let q1 = QTable::random_uniform(5, 3, -10.0, 10.0, &mut rng);
        let q2 = QTable::random_uniform(5, 3, -10.0, 10.0, &mut rng);
        let state = CoupledState::new(q1, q2).unwrap();
        let (next, diag) = coupled_step(&state, &mdp, Coupling::new(kappa, 0.01).unwrap()).unwrap();
        prop_assert!(next.disagreement() <= 0.9 * state.disagreement() + 1e-9);
        for s in 0..5 {
            prop_assert!(diag.kl_symmetric[s] <= 2.0 * kappa + 1e-9);
        }
    }

    #[test]
    fn expectile_is_bounded_and_monotone(xs in prop::collection::vec(-100.0..100.0f64, 1..40), t1 in 0.01..0.99f64, t2 in 0.01..0.99f64) {
        let (lo_tau, hi_tau) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
        let lo = expectile(&xs, lo_tau).unwrap();
        let hi = expectile(&xs, hi_tau).unwrap();
        let min = xs.iter().copied().fold(f64::INFINITY, f64::min);
        let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(lo >= min - 1e-9 && hi <= max + 1e-9);
        prop_assert!(lo <= hi + 1e-9);
    }

    #[test]
    fn qed_temperature_is_clipped_and_monotone(d1 in 0.0..100.0f64, d2 in 0.0..100.0f64, k in 0.01..10.0f64) {
        let cfg = QedConfig::with_k(k);
        let a1 = alpha_qed(d1.min(d2), &cfg, 1e-3).unwrap();
        let a2 = alpha_qed(d1.max(d2), &cfg, 1e-3).unwrap();
        prop_assert!(a1 <= a2);
        prop_assert!(a1 >= 1e-3 && a2 <= cfg.alpha_max);
    }

    #[test]
    fn gaussian_symmetric_kl_is_symmetric_and_non_negative(
        m1 in prop::collection::vec(-5.0..5.0f64, 3),
        m2 in prop::collection::vec(-5.0..5.0f64, 3),
        s1 in prop::collection::vec(-2.0..1.0f64, 3),
        s2 in prop::collection::vec(-2.0..1.0f64, 3),
    ) {
        let a = DiagGaussian::new(m1, s1).unwrap();
        let b = DiagGaussian::new(m2, s2).unwrap();
        let ab = symmetric_kl_diag_gaussian(&a, &b).unwrap();
        let ba = symmetric_kl_diag_gaussian(&b, &a).unwrap();
        prop_assert!(ab >= 0.0);
        prop_assert!((ab - ba).abs() <= 1e-12 * ab.max(1.0));
    }

    #[test]
    fn iqm_lies_within_the_middle_half(xs in prop::collection::vec(-1e3..1e3f64, 4..60)) {
        let mut sorted = xs.clone();
        sorted.sort_by(f64::total_cmp);
        let v = iqm(&xs).unwrap();
        prop_assert!(v >= sorted[0] - 1e-9 && v <= sorted[sorted.len() - 1] + 1e-9);
    }
}
