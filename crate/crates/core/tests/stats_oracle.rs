//! Distribution functions checked against direct numerical integration of
//! the densities.

use cogfx_core::stats::{f_cdf, one_way_anova, t_cdf, t_test_pooled};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[path = "support/oracle.rs"]
mod oracle;

#[test]
fn oracle_lgamma_known_values() {
    // Γ(1/2) = √π, Γ(5) = 24, Γ(1) = 1
    assert!((oracle::lgamma(0.5) - std::f64::consts::PI.sqrt().ln()).abs() < 1e-13);
    assert!((oracle::lgamma(5.0) - 24f64.ln()).abs() < 1e-13);
    assert!((oracle::lgamma(1.0)).abs() < 1e-13);
}

#[test]
fn oracle_cauchy_closed_form() {
    // df = 1 is Cauchy: F(t) = 1/2 + atan(t)/π
    for t in [-5.0, -1.0, 0.3, 2.0, 5.0] {
        let exact = 0.5 + f64::atan(t) / std::f64::consts::PI;
        assert!((oracle::t_cdf(t, 1.0) - exact).abs() < 1e-10, "{t}");
    }
}

#[test]
fn t_cdf_matches_oracle_on_grid() {
    let mut worst: f64 = 0.0;
    for df in [1.0, 2.0, 5.0, 10.0, 100.0, 1000.0] {
        for k in 0..=40 {
            let t = -5.0 + 0.25 * f64::from(k);
            let got: f64 = t_cdf(t, df).unwrap();
            let want = oracle::t_cdf(t, df);
            let err = (got - want).abs();
            worst = worst.max(err);
            assert!(err < 1e-6, "t={t} df={df}: {got} vs {want}");
        }
    }
    eprintln!("t_cdf worst abs error {worst:.2e}");
}

#[test]
fn f_cdf_matches_oracle_on_grid() {
    let dfs = [1.0, 5.0, 50.0, 946.0];
    let mut worst: f64 = 0.0;
    for &d1 in &dfs {
        for &d2 in &dfs {
            for k in 0..=40 {
                let f = 0.25 * f64::from(k);
                let got: f64 = f_cdf(f, d1, d2).unwrap();
                let want = oracle::f_cdf(f, d1, d2);
                let err = (got - want).abs();
                worst = worst.max(err);
                assert!(err < 1e-6, "F={f} d=({d1},{d2}): {got} vs {want}");
            }
        }
    }
    eprintln!("f_cdf worst abs error {worst:.2e}");
}

#[test]
fn f_equals_t_squared_on_random_data() {
    let mut rng = ChaCha8Rng::seed_from_u64(20240);
    for _ in 0..100 {
        let na = rng.random_range(2..40);
        let nb = rng.random_range(2..40);
        let shift: f64 = rng.random_range(-1.0..1.0);
        let a: Vec<f64> = (0..na).map(|_| rng.random_range(0.0..1.0)).collect();
        let b: Vec<f64> = (0..nb).map(|_| rng.random_range(0.0..1.0) + shift).collect();
        let t = t_test_pooled(&a, &b).unwrap();
        let f = one_way_anova(&[a.as_slice(), b.as_slice()]).unwrap();
        let rel = (f.f - t.t * t.t).abs() / f.f.max(1e-300);
        assert!(rel < 1e-9, "F {} vs t^2 {}", f.f, t.t * t.t);
        assert!((f.p - t.p).abs() < 1e-9);
    }
}

#[test]
fn f32_path_tracks_f64() {
    for (t, df) in [(-2.0f32, 5.0f32), (0.5, 100.0), (3.0, 10.0)] {
        let single = t_cdf(t, df).unwrap();
        let double = t_cdf(f64::from(t), f64::from(df)).unwrap();
        assert!((f64::from(single) - double).abs() < 1e-5);
    }
}
