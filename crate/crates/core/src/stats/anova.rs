use serde::{Deserialize, Serialize};

use super::{f_sf, StatsError};
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnovaResult<T> {
    pub f: T,
    pub df_between: usize,
    pub df_within: usize,
    pub p: T,
    /// Mean square within groups, SSW / df_within.
    pub mse: T,
    pub ss_between: T,
    pub ss_within: T,
    pub degenerate: bool,
}

/// One-way between-groups ANOVA.
pub fn one_way_anova<T: Real, G: AsRef<[T]>>(groups: &[G]) -> Result<AnovaResult<T>, StatsError> {
    let k = groups.len();
    if k < 2 {
        return Err(StatsError::InsufficientData(format!("ANOVA needs at least two groups, got {k}")));
    }
    if let Some(i) = groups.iter().position(|g| g.as_ref().is_empty()) {
        return Err(StatsError::InsufficientData(format!("ANOVA group {i} is empty")));
    }
    let n: usize = groups.iter().map(|g| g.as_ref().len()).sum();
    if n <= k {
        return Err(StatsError::InsufficientData(format!(
            "ANOVA needs more observations than groups ({n} observations, {k} groups)"
        )));
    }

    let grand = groups.iter().flat_map(|g| g.as_ref().iter().copied()).sum::<T>() / T::from_count(n);
    let mut ssb = T::zero();
    let mut ssw = T::zero();
    for g in groups {
        let g = g.as_ref();
        let m = g.iter().copied().sum::<T>() / T::from_count(g.len());
        ssb = ssb + T::from_count(g.len()) * (m - grand) * (m - grand);
        ssw = ssw + g.iter().map(|&x| (x - m) * (x - m)).sum::<T>();
    }

    let df_between = k - 1;
    let df_within = n - k;
    let msb = ssb / T::from_count(df_between);
    let mse = ssw / T::from_count(df_within);

    if mse <= T::zero() {
        let (f, p) = if ssb > T::zero() {
            (T::infinity(), T::zero())
        } else {
            (T::zero(), T::one())
        };
        return Ok(AnovaResult {
            f,
            df_between,
            df_within,
            p,
            mse,
            ss_between: ssb,
            ss_within: ssw,
            degenerate: true,
        });
    }

    let f = msb / mse;
    let p = f_sf(f, T::from_count(df_between), T::from_count(df_within))?;
    Ok(AnovaResult {
        f,
        df_between,
        df_within,
        p,
        mse,
        ss_between: ssb,
        ss_within: ssw,
        degenerate: false,
    })
}
