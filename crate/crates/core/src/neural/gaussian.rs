//! Diagonal Gaussian densities and divergences.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

fn check_std<T: Scalar>(std: &[T]) -> Result<()> {
    match std.iter().find(|s| !(**s > T::zero())) {
        Some(s) => Err(Error::NonPositiveStd(s.to_f64_lossy())),
        None => Ok(()),
    }
}

fn check_len(expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::DimensionMismatch { expected, got });
    }
    Ok(())
}

/// Log-density of `action` under `N(mean, diag(std²))`.
pub fn gaussian_log_prob<T: Scalar>(mean: &[T], std: &[T], action: &[T]) -> Result<T> {
    check_len(mean.len(), std.len())?;
    check_len(mean.len(), action.len())?;
    check_std(std)?;
    let half_ln_2pi = T::lit(0.5) * (T::TAU()).ln();
    Ok(mean
        .iter()
        .zip(std)
        .zip(action)
        .fold(T::zero(), |acc, ((&m, &s), &a)| {
            let z = (a - m) / s;
            acc - T::lit(0.5) * z * z - s.ln() - half_ln_2pi
        }))
}

/// Same density parameterized by `log_std`; also returns
/// `(∂/∂mean, ∂/∂log_std)`.
pub fn log_prob_with_grad<T: Scalar>(mean: &[T], log_std: &[T], action: &[T]) -> (T, Vec<T>, Vec<T>) {
    let half_ln_2pi = T::lit(0.5) * (T::TAU()).ln();
    let n = mean.len();
    let mut lp = T::zero();
    let mut dm = Vec::with_capacity(n);
    let mut ds = Vec::with_capacity(n);
    for i in 0..n {
        let inv = (-log_std[i]).exp();
        let z = (action[i] - mean[i]) * inv;
        lp = lp - T::lit(0.5) * z * z - log_std[i] - half_ln_2pi;
        dm.push(z * inv);
        ds.push(z * z - T::one());
    }
    (lp, dm, ds)
}

/// `KL(N(mean1, std1²) ‖ N(mean2, std2²))`, summed over dimensions.
pub fn gaussian_kl<T: Scalar>(mean1: &[T], std1: &[T], mean2: &[T], std2: &[T]) -> Result<T> {
    check_len(mean1.len(), std1.len())?;
    check_len(mean1.len(), mean2.len())?;
    check_len(mean1.len(), std2.len())?;
    check_std(std1)?;
    check_std(std2)?;
    let mut kl = T::zero();
    for i in 0..mean1.len() {
        let (s1, s2) = (std1[i], std2[i]);
        let dm = mean1[i] - mean2[i];
        kl = kl + (s2 / s1).ln() + (s1 * s1 + dm * dm) / (T::lit(2.0) * s2 * s2) - T::lit(0.5);
    }
    // rounding can leave a tiny negative value at equality
    Ok(kl.max(T::zero()))
}

/// KL with the first argument parameterized by `log_std1`; returns the value
/// and `(∂/∂mean1, ∂/∂log_std1)`.
pub fn kl_with_grad<T: Scalar>(
    mean1: &[T],
    log_std1: &[T],
    mean2: &[T],
    log_std2: &[T],
) -> (T, Vec<T>, Vec<T>) {
    let n = mean1.len();
    let mut kl = T::zero();
    let mut dm = Vec::with_capacity(n);
    let mut ds = Vec::with_capacity(n);
    for i in 0..n {
        let var2 = (log_std2[i] + log_std2[i]).exp();
        let ratio = (log_std1[i] + log_std1[i]).exp() / var2;
        let d = mean1[i] - mean2[i];
        kl = kl + log_std2[i] - log_std1[i] + T::lit(0.5) * (ratio + d * d / var2) - T::lit(0.5);
        dm.push(d / var2);
        ds.push(ratio - T::one());
    }
    (kl, dm, ds)
}
