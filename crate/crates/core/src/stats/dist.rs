//! Student t and Fisher F distribution functions.

// Negated comparisons below reject NaN along with out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use super::special::regularized_incomplete_beta;
use super::StatsError;
use crate::scalar::Real;

fn check_df<T: Real>(df: T, name: &str) -> Result<(), StatsError> {
    if !(df > T::zero()) || df.is_infinite() {
        return Err(StatsError::Domain(format!("{name} must be positive and finite, got {df}")));
    }
    Ok(())
}

/// P(T ≤ t) for Student's t with `df` degrees of freedom.
pub fn t_cdf<T: Real>(t: T, df: T) -> Result<T, StatsError> {
    check_df(df, "df")?;
    if t.is_nan() {
        return Err(StatsError::Domain("t statistic is NaN".into()));
    }
    if t.is_infinite() {
        return Ok(if t > T::zero() { T::one() } else { T::zero() });
    }
    let half = T::lit(0.5);
    let tail = half * regularized_incomplete_beta(df / (df + t * t), df * half, half)?;
    Ok(if t > T::zero() { T::one() - tail } else { tail })
}

/// Two-tailed p-value P(|T| ≥ |t|), computed directly from the tail
/// integral so small p-values keep their precision.
pub fn t_two_tailed_p<T: Real>(t: T, df: T) -> Result<T, StatsError> {
    check_df(df, "df")?;
    if t.is_nan() {
        return Err(StatsError::Domain("t statistic is NaN".into()));
    }
    if t.is_infinite() {
        return Ok(T::zero());
    }
    let half = T::lit(0.5);
    regularized_incomplete_beta(df / (df + t * t), df * half, half)
}

/// P(F ≤ f) for the F distribution with (`d1`, `d2`) degrees of freedom.
pub fn f_cdf<T: Real>(f: T, d1: T, d2: T) -> Result<T, StatsError> {
    check_df(d1, "d1")?;
    check_df(d2, "d2")?;
    if !(f >= T::zero()) {
        return Err(StatsError::Domain(format!("F statistic must be non-negative, got {f}")));
    }
    if f.is_infinite() {
        return Ok(T::one());
    }
    let half = T::lit(0.5);
    regularized_incomplete_beta(d1 * f / (d1 * f + d2), d1 * half, d2 * half)
}

/// Upper tail P(F ≥ f).
pub fn f_sf<T: Real>(f: T, d1: T, d2: T) -> Result<T, StatsError> {
    check_df(d1, "d1")?;
    check_df(d2, "d2")?;
    if !(f >= T::zero()) {
        return Err(StatsError::Domain(format!("F statistic must be non-negative, got {f}")));
    }
    if f.is_infinite() {
        return Ok(T::zero());
    }
    let half = T::lit(0.5);
    regularized_incomplete_beta(d2 / (d2 + d1 * f), d2 * half, d1 * half)
}

/// Inverse of [`t_cdf`] by bisection; used for interval whiskers.
pub fn t_quantile<T: Real>(p: T, df: T) -> Result<T, StatsError> {
    check_df(df, "df")?;
    if !(p > T::zero() && p < T::one()) {
        return Err(StatsError::Domain(format!("quantile level must lie in (0, 1), got {p}")));
    }
    let two = T::lit(2.0);
    let mut hi = T::one();
    while t_cdf(hi, df)? < p {
        hi = hi * two;
    }
    let mut lo = -T::one();
    while t_cdf(lo, df)? > p {
        lo = lo * two;
    }
    for _ in 0..200 {
        let mid = (lo + hi) / two;
        if t_cdf(mid, df)? < p {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= T::epsilon() * (T::one() + mid.abs()) {
            break;
        }
    }
    Ok((lo + hi) / two)
}
