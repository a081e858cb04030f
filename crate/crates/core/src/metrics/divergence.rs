use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Lower clamp applied to every actor log standard deviation.
pub const LOG_STD_MIN: f64 = -20.0;
/// Upper clamp applied to every actor log standard deviation.
pub const LOG_STD_MAX: f64 = 5.0;

const DIST_TOL: f64 = 1e-9;

fn check_categorical(p: &[f64], name: &str) -> Result<()> {
    if p.is_empty() || p.iter().any(|x| !x.is_finite() || *x < 0.0) {
        return invalid(format!("{name} is not a probability vector"));
    }
    let sum: f64 = p.iter().sum();
    if (sum - 1.0).abs() > DIST_TOL {
        return invalid(format!("{name} sums to {sum}"));
    }
    Ok(())
}

/// `KL(p ‖ q) = Σ p log(p/q)` with `0 log 0 = 0`.
///
/// Returns `+∞` when `q` puts zero mass where `p` does not.
pub fn kl_categorical(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return invalid(format!("distributions have lengths {} and {}", p.len(), q.len()));
    }
    check_categorical(p, "p")?;
    check_categorical(q, "q")?;
    let mut total = 0.0;
    for (pi, qi) in p.iter().zip(q) {
        if *pi == 0.0 {
            continue;
        }
        if *qi == 0.0 {
            return Ok(f64::INFINITY);
        }
        total += pi * (pi / qi).ln();
    }
    // Rounding can leave a tiny negative sum for nearly equal inputs.
    Ok(total.max(0.0))
}

/// `½ [KL(p ‖ q) + KL(q ‖ p)]`.
pub fn symmetric_kl_categorical(p: &[f64], q: &[f64]) -> Result<f64> {
    Ok(0.5 * (kl_categorical(p, q)? + kl_categorical(q, p)?))
}

/// Diagonal Gaussian given by its mean and log standard deviation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagGaussian {
    mean: Vec<f64>,
    log_std: Vec<f64>,
}

impl DiagGaussian {
    /// Log standard deviations are clamped into `[LOG_STD_MIN, LOG_STD_MAX]`.
    pub fn new(mean: Vec<f64>, log_std: Vec<f64>) -> Result<Self> {
        if mean.len() != log_std.len() || mean.is_empty() {
            return invalid("mean and log_std must be non-empty and of equal length");
        }
        if mean.iter().chain(&log_std).any(|x| !x.is_finite()) {
            return invalid("Gaussian parameters must be finite");
        }
        let log_std = log_std.into_iter().map(|l| l.clamp(LOG_STD_MIN, LOG_STD_MAX)).collect();
        Ok(Self { mean, log_std })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn log_std(&self) -> &[f64] {
        &self.log_std
    }

    /// Log density at `x`.
    pub fn log_density(&self, x: &[f64]) -> f64 {
        let half_log_2pi = 0.5 * (2.0 * std::f64::consts::PI).ln();
        self.mean
            .iter()
            .zip(&self.log_std)
            .zip(x)
            .map(|((m, ls), xi)| {
                let z = (xi - m) / ls.exp();
                -0.5 * z * z - ls - half_log_2pi
            })
            .sum()
    }
}

/// Closed-form `KL(a ‖ b)` summed over dimensions.
pub fn kl_diag_gaussian(a: &DiagGaussian, b: &DiagGaussian) -> Result<f64> {
    if a.dim() != b.dim() {
        return invalid(format!("Gaussian dimensions differ: {} vs {}", a.dim(), b.dim()));
    }
    let mut total = 0.0;
    for i in 0..a.dim() {
        let var_a = (2.0 * a.log_std[i]).exp();
        let var_b = (2.0 * b.log_std[i]).exp();
        let diff = a.mean[i] - b.mean[i];
        total += b.log_std[i] - a.log_std[i] + (var_a + diff * diff) / (2.0 * var_b) - 0.5;
    }
    Ok(total.max(0.0))
}

/// `½ [KL(a ‖ b) + KL(b ‖ a)]`.
pub fn symmetric_kl_diag_gaussian(a: &DiagGaussian, b: &DiagGaussian) -> Result<f64> {
    Ok(0.5 * (kl_diag_gaussian(a, b)? + kl_diag_gaussian(b, a)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng_from_seed;
    use proptest::prelude::*;
    use rand::Rng;

    #[test]
    fn categorical_basics() {
        let p = [0.2, 0.3, 0.5];
        assert_eq!(kl_categorical(&p, &p).unwrap(), 0.0);
        let kl = kl_categorical(&[1.0, 0.0], &[0.5, 0.5]).unwrap();
        assert!((kl - std::f64::consts::LN_2).abs() < 1e-12);
        assert_eq!(kl_categorical(&[0.5, 0.5], &[1.0, 0.0]).unwrap(), f64::INFINITY);
        assert!(kl_categorical(&[0.5, 0.6], &[0.5, 0.5]).is_err());
        assert!(kl_categorical(&[0.5, 0.5], &[1.0]).is_err());
        assert!(kl_categorical(&[-0.5, 1.5], &[0.5, 0.5]).is_err());
    }

    #[test]
    fn gibbs_inequality() {
        let mut rng = rng_from_seed(1);
        for _ in 0..1000 {
            let n = rng.random_range(2..10);
            let mut p: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
            let mut q: Vec<f64> = (0..n).map(|_| rng.random::<f64>() + 1e-3).collect();
            let (sp, sq): (f64, f64) = (p.iter().sum(), q.iter().sum());
            p.iter_mut().for_each(|x| *x /= sp);
            q.iter_mut().for_each(|x| *x /= sq);
            assert!(kl_categorical(&p, &q).unwrap() >= 0.0);
            let sym = symmetric_kl_categorical(&p, &q).unwrap();
            assert_eq!(sym, symmetric_kl_categorical(&q, &p).unwrap());
            let mean = 0.5 * (kl_categorical(&p, &q).unwrap() + kl_categorical(&q, &p).unwrap());
            assert!((sym - mean).abs() < 1e-12);
        }
    }

    #[test]
    fn gaussian_closed_form() {
        let a = DiagGaussian::new(vec![0.0], vec![0.0]).unwrap();
        let b = DiagGaussian::new(vec![1.0], vec![0.0]).unwrap();
        assert_eq!(kl_diag_gaussian(&a, &a).unwrap(), 0.0);
        assert!((kl_diag_gaussian(&a, &b).unwrap() - 0.5).abs() < 1e-12);
        let c = DiagGaussian::new(vec![0.0, 0.0], vec![0.0, 0.0]).unwrap();
        assert!(kl_diag_gaussian(&a, &c).is_err());
    }

    #[test]
    fn gaussian_clamps_log_std() {
        let g = DiagGaussian::new(vec![0.0, 0.0], vec![-50.0, 9.0]).unwrap();
        assert_eq!(g.log_std(), &[LOG_STD_MIN, LOG_STD_MAX]);
        assert!(DiagGaussian::new(vec![f64::NAN], vec![0.0]).is_err());
    }

    fn gaussian_pair() -> impl Strategy<Value = (Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>)> {
        (1usize..6).prop_flat_map(|d| {
            (
                prop::collection::vec(-3.0f64..3.0, d),
                prop::collection::vec(-2.0f64..2.0, d),
                prop::collection::vec(-3.0f64..3.0, d),
                prop::collection::vec(-2.0f64..2.0, d),
            )
        })
    }

    proptest! {
        #[test]
        fn gaussian_symmetric_kl_permutation_invariant((ma, la, mb, lb) in gaussian_pair(), rot in 0usize..6) {
            let a = DiagGaussian::new(ma.clone(), la.clone()).unwrap();
            let b = DiagGaussian::new(mb.clone(), lb.clone()).unwrap();
            let d = ma.len();
            let perm = |v: &Vec<f64>| -> Vec<f64> { (0..d).map(|i| v[(i + rot) % d]).collect() };
            let ap = DiagGaussian::new(perm(&ma), perm(&la)).unwrap();
            let bp = DiagGaussian::new(perm(&mb), perm(&lb)).unwrap();
            let sym = symmetric_kl_diag_gaussian(&a, &b).unwrap();
            let sym_p = symmetric_kl_diag_gaussian(&ap, &bp).unwrap();
            prop_assert!((sym - sym_p).abs() <= 1e-12 * (1.0 + sym.abs()));
            prop_assert!(sym >= 0.0);
            prop_assert_eq!(sym, symmetric_kl_diag_gaussian(&b, &a).unwrap());
        }
    }
}
