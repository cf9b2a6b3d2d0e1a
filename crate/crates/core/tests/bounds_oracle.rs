//! Bound formulas against 256-bit evaluations of the same closed forms, plus
//! monotonicity in each input.

mod common;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use mixkd::bounds::*;

use common::oracle::*;

#[test]
fn hoeffding_matches_high_precision() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..100 {
        let m = rng.random_range(0.1..10.0);
        let g = rng.random_range(1.0..1e6f64).floor();
        let delta = rng.random_range(1e-6..0.999);
        let n = rng.random_range(1..1_000_000u64);
        let got = hoeffding_gap_bound(m, g, delta, n).unwrap();
        let want = oracle_hoeffding(m, g, delta, n);
        assert!(rel(got, want) < TOL, "m={m} g={g} delta={delta} n={n}: {got} vs {want}");
    }
}

#[test]
fn thm1_matches_high_precision() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..100 {
        let m = rng.random_range(0.1..5.0);
        let g = rng.random_range(1.0..1e6f64).floor();
        let delta = rng.random_range(1e-6..0.999);
        let eps = rng.random_range(0.01..1.0);
        let tri = rng.random_range(0.0..0.9) * eps;
        // keep the result away from zero so relative error is meaningful
        let a = 0.5 * oracle_thm1(m, g, delta, 0.0, eps, tri) * rng.random_range(0.0..1.0);
        let got = thm1_threshold(m, g, delta, a, eps, tri).unwrap();
        let want = oracle_thm1(m, g, delta, a, eps, tri);
        assert!(rel(got, want) < TOL, "{got} vs {want}");
        assert_eq!(thm1_required_b(m, g, delta, a, eps, tri).unwrap(), want.ceil() as u64);
    }
}

#[test]
fn thm2_matches_high_precision() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..100 {
        let m = rng.random_range(0.1..5.0);
        let delta = rng.random_range(1e-6..0.999);
        let eps = rng.random_range(0.05..1.0);
        let tri = rng.random_range(0.0..0.4) * eps;
        let l: f64 = rng.random_range(0.0..3.0);
        let r = rng.random_range(0.0..0.4) * eps / (2.0 * l.max(1e-3));
        let a = 0.5 * oracle_thm2(m, delta, 0.0, eps, tri, l, r) * rng.random_range(0.0..1.0);
        let got = thm2_threshold(m, delta, a, eps, tri, l, r).unwrap();
        let want = oracle_thm2(m, delta, a, eps, tri, l, r);
        assert!(rel(got, want) < TOL, "{got} vs {want}");
        assert_eq!(thm2_required_b(m, delta, a, eps, tri, l, r).unwrap(), want.ceil() as u64);
    }
}

#[test]
fn thm3_matches_high_precision() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..100 {
        let delta = rng.random_range(1e-6..0.999);
        let eps = rng.random_range(0.05..1.0);
        let tri = rng.random_range(0.0..0.5) * eps;
        let margin2: f64 = (eps - tri) * (eps - tri);
        let logc: f64 = rng.random_range(0.0..5.0);
        // a large enough for both the minimum and a positive denominator
        let a = (16.0 / margin2).max(64.0 * logc / margin2) * rng.random_range(1.5..20.0);
        let got = thm3_threshold(delta, a, eps, tri, logc).unwrap();
        let want = oracle_thm3(delta, a, eps, tri, logc);
        assert!(rel(got, want) < TOL, "{got} vs {want}");
        let r = thm3_required_b(delta, a, eps, tri, logc).unwrap();
        assert_eq!(r.required_b, want.ceil() as u64);
        assert_eq!(r.gamma, ((a + r.required_b as f64) / a).floor() as u64);
    }
}

#[test]
fn monotonicity_grids() {
    let deltas = [0.5, 0.1, 0.05, 0.01, 0.001];
    let epss = [0.05, 0.1, 0.2, 0.4];
    let gs = [1.0, 10.0, 100.0, 1e4];
    let as_ = [0.0, 10.0, 100.0, 1000.0];
    let tris = [0.0, 0.01, 0.02, 0.04];
    let non_increasing = |v: &[f64]| v.windows(2).all(|w| w[1] <= w[0]);
    let non_decreasing = |v: &[f64]| v.windows(2).all(|w| w[1] >= w[0]);

    for &g in &gs {
        for &eps in &epss {
            // smaller δ demands more samples
            let v: Vec<f64> = deltas.iter().map(|&d| thm1_threshold(1.0, g, d, 0.0, eps, 0.0).unwrap()).collect();
            assert!(non_decreasing(&v), "{v:?}");
            let v: Vec<f64> = deltas.iter().map(|&d| hoeffding_gap_bound(1.0, g, d, 100).unwrap()).collect();
            assert!(non_decreasing(&v), "{v:?}");
        }
    }
    for &d in &deltas {
        let v: Vec<f64> = epss.iter().map(|&e| thm1_threshold(1.0, 64.0, d, 0.0, e, 0.0).unwrap()).collect();
        assert!(non_increasing(&v), "{v:?}");
        let v: Vec<f64> = gs.iter().map(|&g| thm1_threshold(1.0, g, d, 0.0, 0.1, 0.0).unwrap()).collect();
        assert!(non_decreasing(&v), "{v:?}");
        let v: Vec<f64> = as_.iter().map(|&a| thm1_threshold(1.0, 64.0, d, a, 0.1, 0.0).unwrap()).collect();
        assert!(non_increasing(&v), "{v:?}");
        let v: Vec<f64> = tris.iter().map(|&t| thm1_threshold(1.0, 64.0, d, 0.0, 0.1, t).unwrap()).collect();
        assert!(non_decreasing(&v), "{v:?}");
        let v: Vec<f64> = [0.0, 0.01, 0.02, 0.03]
            .iter()
            .map(|&r| thm2_threshold(1.0, d, 0.0, 0.2, 0.0, 1.0, r).unwrap())
            .collect();
        assert!(non_decreasing(&v), "{v:?}");
        let v: Vec<f64> = [0.0, 0.1, 0.5, 1.0]
            .iter()
            .map(|&c| thm3_threshold(d, 5000.0, 0.5, 0.0, c).unwrap())
            .collect();
        assert!(non_decreasing(&v), "{v:?}");
        let v: Vec<f64> = [100.0, 1000.0, 1e4, 1e5].iter().map(|&n| hoeffding_gap_bound(1.0, 64.0, d, n as u64).unwrap()).collect();
        assert!(non_increasing(&v), "{v:?}");
    }
}

#[test]
fn vacuous_inputs_are_errors() {
    assert!(thm1_required_b(1.0, 64.0, 0.0, 0.0, 0.1, 0.0).is_err());
    assert!(thm1_required_b(1.0, 64.0, 1.5, 0.0, 0.1, 0.0).is_err());
    assert!(thm1_required_b(1.0, 64.0, 0.1, 0.0, 0.1, 0.2).is_err());
    assert!(thm2_required_b(1.0, 0.1, 0.0, 0.1, 0.0, 1.0, 0.05).is_err());
    assert!(thm3_required_b(0.1, 10.0, 0.5, 0.0, 10.0).is_err());
    assert!(hoeffding_gap_bound(0.0, 64.0, 0.1, 10).is_err());
}

proptest! {
    #[test]
    fn required_b_is_nonnegative_and_covers_threshold(
        m in 0.1f64..5.0,
        g in 1.0f64..1e5,
        delta in 1e-4f64..1.0,
        a in 0.0f64..1e5,
        eps in 0.01f64..1.0,
        frac in 0.0f64..0.99,
    ) {
        let tri = frac * eps;
        let t = thm1_threshold(m, g, delta, a, eps, tri).unwrap();
        let b = thm1_required_b(m, g, delta, a, eps, tri).unwrap();
        prop_assert!(b as f64 >= t);
        prop_assert!(b == 0 || (b as f64) < t + 1.0);
    }

    #[test]
    fn hoeffding_shrinks_with_sample_size(n in 1u64..1_000_000, g in 1.0f64..1e4, delta in 1e-4f64..1.0) {
        let small = hoeffding_gap_bound(1.0, g, delta, n).unwrap();
        let large = hoeffding_gap_bound(1.0, g, delta, 4 * n).unwrap();
        prop_assert!((large - small / 2.0).abs() <= 1e-12 * small.max(1e-300));
    }
}
