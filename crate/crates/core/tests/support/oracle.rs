//! Reference t and F distribution functions by direct numerical
//! integration of the densities. Shares no code with the library: log-gamma
//! is a shifted Stirling series and the integrator is adaptive Simpson.

use std::f64::consts::PI;

/// ln Γ(x) for x > 0: recurse up to x >= 10, then Stirling with five
/// correction terms.
pub fn lgamma(mut x: f64) -> f64 {
    let mut shift = 0.0;
    while x < 10.0 {
        shift -= x.ln();
        x += 1.0;
    }
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    let series = inv
        * (1.0 / 12.0
            - inv2 * (1.0 / 360.0 - inv2 * (1.0 / 1260.0 - inv2 * (1.0 / 1680.0 - inv2 * (1.0 / 1188.0)))));
    shift + (x - 0.5) * x.ln() - x + 0.5 * (2.0 * PI).ln() + series
}

#[allow(clippy::too_many_arguments)]
fn simpson_step<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
    let m = 0.5 * (a + b);
    let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
    let (flm, frm) = (f(lm), f(rm));
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        return left + right + delta / 15.0;
    }
    simpson_step(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1)
        + simpson_step(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
}

pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    // split into panels so narrow peaks are not missed by the first probe
    let panels = 64;
    let h = (b - a) / panels as f64;
    (0..panels)
        .map(|i| {
            let (lo, hi) = (a + i as f64 * h, a + (i + 1) as f64 * h);
            let (fa, fm, fb) = (f(lo), f(0.5 * (lo + hi)), f(hi));
            let whole = (hi - lo) / 6.0 * (fa + 4.0 * fm + fb);
            simpson_step(&f, lo, hi, fa, fm, fb, whole, tol / panels as f64, 40)
        })
        .sum()
}

pub fn t_pdf(x: f64, df: f64) -> f64 {
    let ln_c = lgamma((df + 1.0) / 2.0) - lgamma(df / 2.0) - 0.5 * (df * PI).ln();
    (ln_c - (df + 1.0) / 2.0 * (1.0 + x * x / df).ln()).exp()
}

pub fn t_cdf(t: f64, df: f64) -> f64 {
    let half = integrate(|x| t_pdf(x, df), 0.0, t.abs(), 1e-12);
    if t >= 0.0 {
        0.5 + half
    } else {
        0.5 - half
    }
}

pub fn f_pdf(x: f64, d1: f64, d2: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    let ln_b = lgamma(d1 / 2.0) + lgamma(d2 / 2.0) - lgamma((d1 + d2) / 2.0);
    let ln = 0.5 * d1 * (d1 / d2).ln() + (0.5 * d1 - 1.0) * x.ln() - 0.5 * (d1 + d2) * (1.0 + d1 * x / d2).ln() - ln_b;
    ln.exp()
}

/// Integrates in u = sqrt(x) so the d1 = 1 singularity at zero vanishes.
pub fn f_cdf(f: f64, d1: f64, d2: f64) -> f64 {
    integrate(|u| if u == 0.0 && d1 < 2.0 { transformed_at_zero(d1, d2) } else { 2.0 * u * f_pdf(u * u, d1, d2) }, 0.0, f.sqrt(), 1e-12)
}

fn transformed_at_zero(d1: f64, d2: f64) -> f64 {
    // limit of 2u * pdf(u^2) as u -> 0 for d1 = 1
    let ln_b = lgamma(d1 / 2.0) + lgamma(d2 / 2.0) - lgamma((d1 + d2) / 2.0);
    2.0 * (0.5 * d1 * (d1 / d2).ln() - ln_b).exp()
}
