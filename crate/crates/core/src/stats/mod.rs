//! Statistics kernel: descriptive statistics, two-sample t-tests, one-way
//! ANOVA and the distribution functions behind their p-values.
//!
//! Everything here is generic over [`Real`](crate::scalar::Real) so the same
//! code runs in `f32` and `f64`.

mod anova;
mod dist;
mod special;
mod ttest;

pub use anova::{one_way_anova, AnovaResult};
pub use dist::{f_cdf, f_sf, t_cdf, t_quantile, t_two_tailed_p};
pub use special::{ln_beta, ln_gamma, regularized_incomplete_beta, CF_TOLERANCE, MAX_CF_ITER};
pub use ttest::{t_test_pooled, t_test_welch, TTestResult};

use crate::scalar::Real;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StatsError {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("continued fraction failed to converge within {iterations} iterations")]
    NoConvergence { iterations: usize },
    #[error("insufficient data: {0}")]
    InsufficientData(String),
}

pub fn mean<T: Real>(xs: &[T]) -> Option<T> {
    if xs.is_empty() {
        return None;
    }
    Some(xs.iter().copied().sum::<T>() / T::from_count(xs.len()))
}

/// Sum of squared deviations from the sample mean (two-pass).
pub fn sum_sq_dev<T: Real>(xs: &[T]) -> T {
    match mean(xs) {
        None => T::zero(),
        Some(m) => xs.iter().map(|&x| (x - m) * (x - m)).sum(),
    }
}

/// Unbiased sample variance (n − 1 denominator).
pub fn sample_variance<T: Real>(xs: &[T]) -> Option<T> {
    if xs.len() < 2 {
        return None;
    }
    Some(sum_sq_dev(xs) / T::from_count(xs.len() - 1))
}

pub fn sample_std<T: Real>(xs: &[T]) -> Option<T> {
    sample_variance(xs).map(|v| v.sqrt())
}
