//! Log-gamma, log-beta and the regularized incomplete beta function.

// Negated comparisons below reject NaN along with out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use super::StatsError;
use crate::scalar::Real;

/// Continued-fraction iteration cap.
pub const MAX_CF_ITER: usize = 300;

/// Convergence tolerance on the Lentz update factor. Scalars coarser than
/// this (f32) fall back to their own epsilon.
pub const CF_TOLERANCE: f64 = 1e-12;

const LANCZOS_G: f64 = 7.0;
const LANCZOS_COEF: [f64; 9] = [
    0.999_999_999_999_809_9,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_1,
    -176.615_029_162_140_6,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_572e-6,
    1.505_632_735_149_311_6e-7,
];

/// Natural log of the gamma function for `x > 0` (Lanczos, g = 7).
pub fn ln_gamma<T: Real>(x: T) -> T {
    let half = T::lit(0.5);
    if x < half {
        // reflection: Γ(x)Γ(1−x) = π / sin(πx)
        let pi = T::lit(std::f64::consts::PI);
        return (pi / (pi * x).sin().abs()).ln() - ln_gamma(T::one() - x);
    }
    let x = x - T::one();
    let mut acc = T::lit(LANCZOS_COEF[0]);
    for (i, &c) in LANCZOS_COEF.iter().enumerate().skip(1) {
        acc = acc + T::lit(c) / (x + T::from_count(i));
    }
    let t = x + T::lit(LANCZOS_G) + half;
    T::lit(0.5 * (2.0 * std::f64::consts::PI).ln()) + (x + half) * t.ln() - t + acc.ln()
}

/// ln B(a, b).
pub fn ln_beta<T: Real>(a: T, b: T) -> T {
    ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b)
}

/// Regularized incomplete beta function I_x(a, b).
///
/// Evaluated by the modified Lentz continued fraction, switching to
/// `1 − I_{1−x}(b, a)` when `x > (a + 1) / (a + b + 2)`.
pub fn regularized_incomplete_beta<T: Real>(x: T, a: T, b: T) -> Result<T, StatsError> {
    if !(a > T::zero()) || !(b > T::zero()) {
        return Err(StatsError::Domain(format!(
            "incomplete beta shape parameters must be positive (a={a}, b={b})"
        )));
    }
    if !(x >= T::zero() && x <= T::one()) {
        return Err(StatsError::Domain(format!(
            "incomplete beta argument must lie in [0, 1] (x={x})"
        )));
    }
    if x == T::zero() {
        return Ok(T::zero());
    }
    if x == T::one() {
        return Ok(T::one());
    }

    let two = T::lit(2.0);
    let value = if x > (a + T::one()) / (a + b + two) {
        T::one() - beta_fraction(T::one() - x, b, a)?
    } else {
        beta_fraction(x, a, b)?
    };
    Ok(value.max(T::zero()).min(T::one()))
}

fn beta_fraction<T: Real>(x: T, a: T, b: T) -> Result<T, StatsError> {
    let one = T::one();
    let two = T::lit(2.0);
    let tiny = T::lit(1e-30);
    let tol = T::lit(CF_TOLERANCE).max(T::epsilon());

    let ln_prefix = a * x.ln() + b * (one - x).ln() - ln_beta(a, b);
    let prefix = ln_prefix.exp() / a;

    let qab = a + b;
    let qap = a + one;
    let qam = a - one;

    let clamp_tiny = |v: T| if v.abs() < tiny { tiny } else { v };

    let mut c = one;
    let mut d = one / clamp_tiny(one - qab * x / qap);
    let mut h = d;

    for m in 1..=MAX_CF_ITER {
        let mf = T::from_count(m);
        let m2 = two * mf;

        let even = mf * (b - mf) * x / ((qam + m2) * (a + m2));
        d = one / clamp_tiny(one + even * d);
        c = clamp_tiny(one + even / c);
        h = h * d * c;

        let odd = -(a + mf) * (qab + mf) * x / ((a + m2) * (qap + m2));
        d = one / clamp_tiny(one + odd * d);
        c = clamp_tiny(one + odd / c);
        let delta = d * c;
        h = h * delta;

        if (delta - one).abs() < tol {
            return Ok(prefix * h);
        }
    }

    Err(StatsError::NoConvergence {
        iterations: MAX_CF_ITER,
    })
}
