use serde::{Deserialize, Serialize};

use super::{mean, sample_variance, sum_sq_dev, t_two_tailed_p, StatsError};
use crate::scalar::Real;

/// Outcome of a two-sample t-test. `t` is signed as `mean_a − mean_b`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TTestResult<T> {
    pub mean_a: T,
    pub mean_b: T,
    pub t: T,
    pub df: T,
    /// Two-tailed p-value.
    pub p: T,
    pub n_a: usize,
    pub n_b: usize,
    /// Set when the pooled variance is zero and the statistic is not finite
    /// or was defined by convention.
    pub degenerate: bool,
}

fn require_two<T: Real>(a: &[T], b: &[T]) -> Result<(), StatsError> {
    if a.len() < 2 || b.len() < 2 {
        return Err(StatsError::InsufficientData(format!(
            "t-test needs at least two values per sample (got {} and {})",
            a.len(),
            b.len()
        )));
    }
    Ok(())
}

fn degenerate<T: Real>(ma: T, mb: T, df: T, na: usize, nb: usize) -> TTestResult<T> {
    let (t, p) = if ma == mb {
        (T::zero(), T::one())
    } else if ma > mb {
        (T::infinity(), T::zero())
    } else {
        (T::neg_infinity(), T::zero())
    };
    TTestResult { mean_a: ma, mean_b: mb, t, df, p, n_a: na, n_b: nb, degenerate: true }
}

/// Student's two-sample t-test with pooled variance, df = n_a + n_b − 2.
pub fn t_test_pooled<T: Real>(a: &[T], b: &[T]) -> Result<TTestResult<T>, StatsError> {
    require_two(a, b)?;
    let (na, nb) = (a.len(), b.len());
    let ma = mean(a).unwrap_or_else(T::zero);
    let mb = mean(b).unwrap_or_else(T::zero);
    let df = T::from_count(na + nb - 2);
    let pooled = (sum_sq_dev(a) + sum_sq_dev(b)) / df;
    if pooled <= T::zero() {
        return Ok(degenerate(ma, mb, df, na, nb));
    }
    let se = (pooled * (T::one() / T::from_count(na) + T::one() / T::from_count(nb))).sqrt();
    let t = (ma - mb) / se;
    let p = t_two_tailed_p(t, df)?;
    Ok(TTestResult { mean_a: ma, mean_b: mb, t, df, p, n_a: na, n_b: nb, degenerate: false })
}

/// Welch's unequal-variance t-test with Welch–Satterthwaite df.
pub fn t_test_welch<T: Real>(a: &[T], b: &[T]) -> Result<TTestResult<T>, StatsError> {
    require_two(a, b)?;
    let (na, nb) = (a.len(), b.len());
    let ma = mean(a).unwrap_or_else(T::zero);
    let mb = mean(b).unwrap_or_else(T::zero);
    let va = sample_variance(a).unwrap_or_else(T::zero) / T::from_count(na);
    let vb = sample_variance(b).unwrap_or_else(T::zero) / T::from_count(nb);
    let se2 = va + vb;
    if se2 <= T::zero() {
        return Ok(degenerate(ma, mb, T::from_count(na + nb - 2), na, nb));
    }
    let df = se2 * se2
        / (va * va / T::from_count(na - 1) + vb * vb / T::from_count(nb - 1));
    let t = (ma - mb) / se2.sqrt();
    let p = t_two_tailed_p(t, df)?;
    Ok(TTestResult { mean_a: ma, mean_b: mb, t, df, p, n_a: na, n_b: nb, degenerate: false })
}
