//! Checks the finite-class generalization bound on an enumerable testbed and
//! compares gaps with and without mixup points.
//!
//! Usage: cargo run --release --example empirical_bound [repetitions]

use mixkd::bounds::{empirical_gap_experiment, thm1_required_b, Testbed};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> anyhow::Result<()> {
    let reps: usize = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(20);
    let (a, delta, alpha) = (200, 0.1, 0.4);
    let testbed = Testbed::new(10, 64, 7)?;
    let best = testbed.best_hypothesis();
    println!("best hypothesis risk {:.4}", testbed.population_risk[best]);

    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let plain = empirical_gap_experiment(&testbed, a, 0, 2000, delta, 0.0, alpha, &mut rng)?;
    println!(
        "no mixup: bound {:.4}, coverage {:.4} over {} trials, eps_p surrogate {:.4}",
        plain.bound_value, plain.coverage_fraction, plain.trials, plain.eps_p_surrogate
    );

    let triangle = testbed.shift_triangle(alpha, 200_000, &mut rng)?;
    let b = thm1_required_b(1.0, 64.0, delta, a as f64, plain.eps_p_surrogate, triangle)?;
    println!("shift term {triangle:.4}, required b {b}");

    let mut wins = 0;
    for _ in 0..reps {
        let r = empirical_gap_experiment(&testbed, a, b as usize, 50, delta, triangle, alpha, &mut rng)?;
        if r.eps_star_surrogate <= r.eps_p_surrogate {
            wins += 1;
        }
    }
    println!("augmented surrogate <= plain surrogate in {wins}/{reps} repetitions");
    Ok(())
}
