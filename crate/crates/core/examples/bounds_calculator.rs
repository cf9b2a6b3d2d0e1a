//! Sample-size thresholds for a few settings, including one where the
//! capacity-based requirement is vacuous.

use mixkd::bounds::{hoeffding_gap_bound, thm1_required_b, thm2_required_b, thm3_required_b};

fn main() -> anyhow::Result<()> {
    for n in [100u64, 1_000, 10_000] {
        println!("hoeffding |G|=1024 delta=0.05 n={n}: {:.4}", hoeffding_gap_bound(1.0, 1024.0, 0.05, n)?);
    }
    for (eps, tri) in [(0.1, 0.0), (0.1, 0.05), (0.05, 0.0)] {
        let b = thm1_required_b(1.0, 1024.0, 0.05, 500.0, eps, tri)?;
        println!("finite class: eps_p={eps} shift={tri} a=500 -> b >= {b}");
    }
    let b = thm2_required_b(1.0, 0.05, 500.0, 0.2, 0.02, 1.0, 0.03)?;
    println!("lipschitz: eps_p=0.2 shift=0.02 L=1 R=0.03 a=500 -> b >= {b}");
    let r = thm3_required_b(0.05, 5_000.0, 0.5, 0.1, 0.5)?;
    println!(
        "capacity: eps_p=0.5 shift=0.1 logC=0.5 a=5000 -> b >= {}, a >= {}, gamma {}",
        r.required_b, r.required_a_min, r.gamma
    );
    match thm3_required_b(0.05, 50.0, 0.5, 0.1, 0.5) {
        Ok(r) => println!("unexpected: {r:?}"),
        Err(e) => println!("capacity with a=50: {e}"),
    }
    Ok(())
}
