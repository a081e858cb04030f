use crate::error::{invalid, Result};

/// Absolute bisection tolerance for expectiles.
pub const EXPECTILE_TOL: f64 = 1e-10;

/// The `τ`-expectile of `samples`.
///
/// Solves `τ Σ_{x>m} (x − m) = (1 − τ) Σ_{x≤m} (m − x)` by bisection on
/// `[min, max]`; the residual is piecewise linear and strictly decreasing.
pub fn expectile(samples: &[f64], tau: f64) -> Result<f64> {
    if samples.is_empty() {
        return invalid("expectile of an empty sample");
    }
    let weights = vec![1.0; samples.len()];
    weighted_expectile(samples, &weights, tau)
}

/// Expectile of a weighted sample, e.g. actions weighted by policy mass.
pub fn weighted_expectile(samples: &[f64], weights: &[f64], tau: f64) -> Result<f64> {
    if samples.is_empty() {
        return invalid("expectile of an empty sample");
    }
    if samples.len() != weights.len() {
        return invalid("samples and weights differ in length");
    }
    if !(tau > 0.0 && tau < 1.0) {
        return invalid(format!("expectile level must lie in (0, 1), got {tau}"));
    }
    if samples.iter().any(|x| !x.is_finite()) {
        return invalid("expectile samples must be finite");
    }
    if weights.iter().any(|w| !w.is_finite() || *w < 0.0) || weights.iter().all(|w| *w == 0.0) {
        return invalid("expectile weights must be non-negative with positive total");
    }
    let residual = |m: f64| -> f64 {
        let (mut above, mut below) = (0.0, 0.0);
        for (x, w) in samples.iter().zip(weights) {
            if *x > m {
                above += w * (x - m);
            } else {
                below += w * (m - x);
            }
        }
        tau * above - (1.0 - tau) * below
    };
    let support = samples.iter().zip(weights).filter(|(_, w)| **w > 0.0).map(|(x, _)| *x);
    let (mut lo, mut hi) = support.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| {
        (lo.min(x), hi.max(x))
    });
    while hi - lo > EXPECTILE_TOL {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if residual(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn closed_form_cases() {
        assert!((expectile(&[0.0, 1.0], 0.9).unwrap() - 0.9).abs() < 1e-9);
        assert_eq!(expectile(&[2.5; 7], 0.9).unwrap(), 2.5);
        let xs = [1.0, 4.0, -2.0, 3.5, 0.25];
        let mean = xs.iter().sum::<f64>() / xs.len() as f64;
        assert!((expectile(&xs, 0.5).unwrap() - mean).abs() < 1e-9);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(expectile(&[], 0.5).is_err());
        assert!(expectile(&[1.0], 0.0).is_err());
        assert!(expectile(&[1.0], 1.0).is_err());
        assert!(weighted_expectile(&[1.0, 2.0], &[0.0, 0.0], 0.5).is_err());
    }

    #[test]
    fn weighted_matches_repeated_samples() {
        let w = weighted_expectile(&[0.0, 1.0], &[3.0, 1.0], 0.8).unwrap();
        let r = expectile(&[0.0, 0.0, 0.0, 1.0], 0.8).unwrap();
        assert!((w - r).abs() < 1e-9);
    }

    proptest! {
        #[test]
        fn monotone_in_level(xs in prop::collection::vec(-10.0f64..10.0, 1..40), t1 in 0.01f64..0.99, t2 in 0.01f64..0.99) {
            let (lo, hi) = if t1 < t2 { (t1, t2) } else { (t2, t1) };
            prop_assert!(expectile(&xs, lo).unwrap() <= expectile(&xs, hi).unwrap() + 2.0 * EXPECTILE_TOL);
        }

        #[test]
        fn translation_equivariant(xs in prop::collection::vec(-10.0f64..10.0, 1..40), c in -50.0f64..50.0, tau in 0.01f64..0.99) {
            let shifted: Vec<f64> = xs.iter().map(|x| x + c).collect();
            let lhs = expectile(&shifted, tau).unwrap();
            let rhs = expectile(&xs, tau).unwrap() + c;
            prop_assert!((lhs - rhs).abs() < 1e-9);
        }

        #[test]
        fn lies_within_sample_range(xs in prop::collection::vec(-10.0f64..10.0, 1..40), tau in 0.01f64..0.99) {
            let m = expectile(&xs, tau).unwrap();
            let lo = xs.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(m >= lo && m <= hi);
        }
    }
}
