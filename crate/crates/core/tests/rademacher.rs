//! The Monte-Carlo Rademacher estimate of a fixed finite class should shrink
//! like 1/√n.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use mixkd::bounds::{rademacher_mc_estimate, Testbed};

fn estimate(testbed: &Testbed, n: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // average over several samples to smooth out the draw of the points
    let reps = 10;
    (0..reps)
        .map(|_| {
            let sample: Vec<usize> = (0..n).map(|_| testbed.draw(&mut rng)).collect();
            rademacher_mc_estimate(&testbed.loss_matrix(&sample), 400, &mut rng).unwrap()
        })
        .sum::<f64>()
        / reps as f64
}

#[test]
fn rademacher_scales_as_inverse_sqrt_n() {
    let tb = Testbed::new(10, 64, 3).unwrap();
    let r100 = estimate(&tb, 100, 1);
    let r400 = estimate(&tb, 400, 2);
    let r1600 = estimate(&tb, 1600, 3);
    // each 4× in n should halve the estimate
    for (small, large) in [(r100, r400), (r400, r1600)] {
        let ratio = small / large;
        assert!((ratio - 2.0).abs() <= 0.5, "ratio {ratio} ({small} vs {large})");
    }
}

#[test]
fn rademacher_of_single_hypothesis_is_near_zero() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let row: Vec<f64> = (0..500).map(|_| rng.random_range(0.0..1.0)).collect();
    let est = rademacher_mc_estimate(&[row], 2000, &mut rng).unwrap();
    assert!(est.abs() < 0.01, "{est}");
}
