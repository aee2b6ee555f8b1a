use std::f64::consts::PI;

use crate::error::{Error, Result};

/// `ln Σ exp(v_i)` with max-subtraction.
pub fn log_sum_exp(v: &[f64]) -> Result<f64> {
    if v.is_empty() {
        return Err(Error::domain("log_sum_exp of an empty vector"));
    }
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY || max == f64::INFINITY {
        return Ok(max);
    }
    let sum: f64 = v.iter().map(|&x| (x - max).exp()).sum();
    Ok(max + sum.ln())
}

/// Log-density of `N(x | mu, var·I)` including the normalising constant.
pub fn gaussian_log_density(x: &[f64], mu: &[f64], var: f64) -> Result<f64> {
    if x.len() != mu.len() {
        return Err(Error::shape(format!(
            "gaussian density: x has {} entries, mean has {}",
            x.len(),
            mu.len()
        )));
    }
    if !(var > 0.0) {
        return Err(Error::domain(format!("gaussian variance must be positive, got {var}")));
    }
    let d = x.len() as f64;
    let sq: f64 = x.iter().zip(mu).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok(-0.5 * d * (2.0 * PI * var).ln() - sq / (2.0 * var))
}

/// Log-density of a Gaussian with diagonal covariance `diag(var)`.
pub fn diag_gaussian_log_density(x: &[f64], mu: &[f64], var: &[f64]) -> Result<f64> {
    if x.len() != mu.len() || x.len() != var.len() {
        return Err(Error::shape("diagonal gaussian density: length mismatch"));
    }
    let mut acc = 0.0;
    for ((&xi, &mi), &vi) in x.iter().zip(mu).zip(var) {
        if !(vi > 0.0) {
            return Err(Error::domain(format!("gaussian variance must be positive, got {vi}")));
        }
        acc += -0.5 * (2.0 * PI * vi).ln() - (xi - mi) * (xi - mi) / (2.0 * vi);
    }
    Ok(acc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Rng;
    use proptest::prelude::*;

    const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

    #[test]
    fn lse_single_zero() {
        assert_eq!(log_sum_exp(&[0.0]).unwrap(), 0.0);
    }

    #[test]
    fn lse_large_equal_entries() {
        let v = log_sum_exp(&[1000.0, 1000.0]).unwrap();
        assert!((v - (1000.0 + std::f64::consts::LN_2)).abs() < 1e-12);
    }

    #[test]
    fn lse_known_value() {
        // ln(1 + e + e^2), summed by hand in extended precision
        let v = log_sum_exp(&[0.0, 1.0, 2.0]).unwrap();
        assert!((v - 2.407_605_964_444_380).abs() < 1e-12, "{v}");
    }

    #[test]
    fn lse_empty_is_domain_error() {
        assert!(matches!(log_sum_exp(&[]), Err(Error::Domain(_))));
    }

    #[test]
    fn gaussian_at_mean() {
        let v = gaussian_log_density(&[0.3], &[0.3], 1.0).unwrap();
        assert!((v + HALF_LN_2PI).abs() < 1e-15);
        let w = gaussian_log_density(&[1.0], &[0.0], 1.0).unwrap();
        assert!((w + HALF_LN_2PI + 0.5).abs() < 1e-15);
    }

    #[test]
    fn gaussian_term_by_term() {
        let mut rng = Rng::new(5, 5);
        let x = rng.standard_normal_vec(3);
        let mu = rng.standard_normal_vec(3);
        let var = 0.7;
        let mut oracle = 0.0;
        for i in 0..3 {
            oracle += -0.5 * (2.0 * PI * var).ln() - (x[i] - mu[i]).powi(2) / (2.0 * var);
        }
        let v = gaussian_log_density(&x, &mu, var).unwrap();
        assert!((v - oracle).abs() < 1e-12);
        let dv = diag_gaussian_log_density(&x, &mu, &[var; 3]).unwrap();
        assert!((dv - oracle).abs() < 1e-12);
    }

    #[test]
    fn gaussian_rejects_bad_variance() {
        assert!(matches!(gaussian_log_density(&[0.0], &[0.0], 0.0), Err(Error::Domain(_))));
        assert!(matches!(gaussian_log_density(&[0.0], &[0.0], -1.0), Err(Error::Domain(_))));
    }

    #[test]
    fn gaussian_integrates_to_one() {
        for &sigma in &[0.3, 1.0, 2.5] {
            let var = sigma * sigma;
            let n = 20_000;
            let (lo, hi) = (-8.0 * sigma, 8.0 * sigma);
            let h = (hi - lo) / n as f64;
            let f = |x: f64| gaussian_log_density(&[x], &[0.0], var).unwrap().exp();
            let mut s = 0.5 * (f(lo) + f(hi));
            for i in 1..n {
                s += f(lo + i as f64 * h);
            }
            assert!((s * h - 1.0).abs() < 1e-6, "sigma {sigma}: {}", s * h);
        }
    }

    proptest! {
        #[test]
        fn lse_bounds(v in proptest::collection::vec(-700.0f64..700.0, 1..40)) {
            let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let l = log_sum_exp(&v).unwrap();
            prop_assert!(l >= max);
            prop_assert!(l <= max + (v.len() as f64).ln() + 1e-12);
        }
    }
}
