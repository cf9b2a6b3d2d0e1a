//! Sample-size thresholds for augmented training and an exactly enumerable
//! testbed for checking the finite-class gap bound.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

mod testbed;

pub use testbed::{empirical_gap_experiment, quantile, BoundReport, Testbed, MAX_BITS};

/// Inputs shared by the calculators; fields unused by a given bound are ignored.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundInput {
    /// Upper bound on the loss.
    pub m: f64,
    pub delta: f64,
    pub g_cardinality: f64,
    /// Number of original samples.
    pub a: f64,
    pub epsilon_p: f64,
    /// Shift term between original and augmented distributions.
    pub triangle: f64,
    pub lipschitz: f64,
    pub rademacher: f64,
    pub log_capacity: f64,
}

impl Default for BoundInput {
    fn default() -> Self {
        Self {
            m: 1.0,
            delta: 0.05,
            g_cardinality: 1.0,
            a: 0.0,
            epsilon_p: 0.1,
            triangle: 0.0,
            lipschitz: 1.0,
            rademacher: 0.0,
            log_capacity: 0.0,
        }
    }
}

fn check_common(m: f64, delta: f64, a: f64) -> Result<()> {
    if !(m > 0.0 && m.is_finite()) {
        return Err(Error::Vacuous(format!("loss bound M must be positive, got {m}")));
    }
    if !(delta > 0.0 && delta <= 1.0) {
        return Err(Error::Vacuous(format!("delta must lie in (0, 1], got {delta}")));
    }
    if !(a >= 0.0 && a.is_finite()) {
        return Err(Error::Vacuous(format!("sample count a must be nonnegative, got {a}")));
    }
    Ok(())
}

/// Converts a real threshold to a sample count, clamped at zero.
fn count(b: f64) -> Result<u64> {
    if !b.is_finite() || b >= u64::MAX as f64 {
        return Err(Error::Vacuous(format!("required sample count {b} is not representable")));
    }
    Ok(b.ceil().max(0.0) as u64)
}

/// `M·√(log(|G|/δ) / (2n))`
pub fn hoeffding_gap_bound(m: f64, g_cardinality: f64, delta: f64, n: u64) -> Result<f64> {
    check_common(m, delta, 0.0)?;
    if n == 0 {
        return Err(Error::Vacuous("sample size must be at least 1".into()));
    }
    if !(g_cardinality >= 1.0) {
        return Err(Error::Vacuous(format!("|G| must be at least 1, got {g_cardinality}")));
    }
    Ok(m * ((g_cardinality / delta).ln() / (2.0 * n as f64)).sqrt())
}

/// Real-valued form of [`thm1_required_b`] before rounding.
pub fn thm1_threshold(m: f64, g_cardinality: f64, delta: f64, a: f64, epsilon_p: f64, triangle: f64) -> Result<f64> {
    check_common(m, delta, a)?;
    if !(g_cardinality >= 1.0) {
        return Err(Error::Vacuous(format!("|G| must be at least 1, got {g_cardinality}")));
    }
    let margin = epsilon_p - triangle;
    if !(margin > 0.0) {
        return Err(Error::Vacuous(format!(
            "epsilon_p {epsilon_p} must exceed the shift term {triangle}"
        )));
    }
    Ok(m * m * (g_cardinality / delta).ln() / (2.0 * margin * margin) - a)
}

/// Augmented samples needed for the finite-class case:
/// `⌈M²·log(|G|/δ) / (2(ε_p − Δ)²) − a⌉`, at least 0.
pub fn thm1_required_b(m: f64, g_cardinality: f64, delta: f64, a: f64, epsilon_p: f64, triangle: f64) -> Result<u64> {
    count(thm1_threshold(m, g_cardinality, delta, a, epsilon_p, triangle)?)
}

/// Real-valued form of [`thm2_required_b`] before rounding.
#[allow(clippy::too_many_arguments)]
pub fn thm2_threshold(m: f64, delta: f64, a: f64, epsilon_p: f64, triangle: f64, lipschitz: f64, rademacher: f64) -> Result<f64> {
    check_common(m, delta, a)?;
    if !(lipschitz >= 0.0 && rademacher >= 0.0) {
        return Err(Error::Vacuous("Lipschitz constant and Rademacher complexity must be nonnegative".into()));
    }
    let margin = epsilon_p - triangle - 2.0 * lipschitz * rademacher;
    if !(margin > 0.0) {
        return Err(Error::Vacuous(format!(
            "epsilon_p {epsilon_p} must exceed triangle + 2·L·R = {}",
            triangle + 2.0 * lipschitz * rademacher
        )));
    }
    Ok(m * m * (1.0 / delta).ln() / (2.0 * margin * margin) - a)
}

/// Augmented samples needed when the loss is Lipschitz:
/// `⌈M²·log(1/δ) / (2(ε_p − Δ − 2L·R)²) − a⌉`, at least 0.
pub fn thm2_required_b(m: f64, delta: f64, a: f64, epsilon_p: f64, triangle: f64, lipschitz: f64, rademacher: f64) -> Result<u64> {
    count(thm2_threshold(m, delta, a, epsilon_p, triangle, lipschitz, rademacher)?)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Thm3Requirement {
    pub required_b: u64,
    /// `⌈16 / (ε_p − Δ)²⌉`
    pub required_a_min: u64,
    /// Block count `⌊(a + b)/a⌋` at `b = required_b`.
    pub gamma: u64,
}

/// `⌈16 / (ε_p − Δ)²⌉`, the smallest original sample count for the
/// capacity-based case.
pub fn thm3_required_a_min(epsilon_p: f64, triangle: f64) -> Result<u64> {
    let margin = epsilon_p - triangle;
    if !(margin > 0.0) {
        return Err(Error::Vacuous(format!(
            "epsilon_p {epsilon_p} must exceed the shift term {triangle}"
        )));
    }
    count(16.0 / (margin * margin))
}

/// Real-valued `64·log(4/δ) / ((ε_p − Δ)² − 64·logC/a)`.
pub fn thm3_threshold(delta: f64, a: f64, epsilon_p: f64, triangle: f64, log_capacity: f64) -> Result<f64> {
    check_common(1.0, delta, a)?;
    let margin = epsilon_p - triangle;
    let mut problems = Vec::new();
    if !(margin > 0.0) {
        problems.push(format!("epsilon_p {epsilon_p} must exceed the shift term {triangle}"));
    }
    if !(log_capacity >= 0.0) {
        problems.push(format!("log capacity must be nonnegative, got {log_capacity}"));
    }
    let denom = margin * margin - 64.0 * log_capacity / a;
    if !(denom > 0.0) {
        problems.push(format!(
            "(epsilon_p - triangle)^2 = {} must exceed 64·logC/a = {}",
            margin * margin,
            64.0 * log_capacity / a
        ));
    }
    if margin > 0.0 && a < 16.0 / (margin * margin) {
        problems.push(format!("a = {a} is below the minimum {}", 16.0 / (margin * margin)));
    }
    if !problems.is_empty() {
        return Err(Error::Vacuous(problems.join("; ")));
    }
    Ok(64.0 * (4.0 / delta).ln() / denom)
}

/// Both thresholds of the capacity-based case. Every violated precondition
/// is listed in the error.
pub fn thm3_required_b(delta: f64, a: f64, epsilon_p: f64, triangle: f64, log_capacity: f64) -> Result<Thm3Requirement> {
    let b = count(thm3_threshold(delta, a, epsilon_p, triangle, log_capacity)?)?;
    let a_min = thm3_required_a_min(epsilon_p, triangle)?;
    Ok(Thm3Requirement {
        required_b: b,
        required_a_min: a_min,
        gamma: ((a + b as f64) / a).floor() as u64,
    })
}

/// Monte-Carlo estimate of `E_σ[max_g (1/n) Σᵢ σᵢ·loss[g][i]]` with
/// Rademacher signs. `losses` holds one row per hypothesis over a common sample.
pub fn rademacher_mc_estimate(losses: &[Vec<f64>], trials: usize, rng: &mut impl Rng) -> Result<f64> {
    let n = losses.first().map_or(0, Vec::len);
    if losses.is_empty() || n == 0 {
        return Err(Error::Vacuous("empty hypothesis class or sample".into()));
    }
    if losses.iter().any(|r| r.len() != n) {
        return Err(Error::Data("loss rows differ in length".into()));
    }
    if trials == 0 {
        return Err(Error::Config("trials must be positive".into()));
    }
    let mut sigma = vec![0.0; n];
    let mut total = 0.0;
    for _ in 0..trials {
        for s in sigma.iter_mut() {
            *s = if rng.random::<bool>() { 1.0 } else { -1.0 };
        }
        let best = losses
            .iter()
            .map(|row| row.iter().zip(&sigma).map(|(l, s)| l * s).sum::<f64>())
            .fold(f64::NEG_INFINITY, f64::max);
        total += best / n as f64;
    }
    Ok(total / trials as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn hoeffding_closed_forms() {
        assert_eq!(hoeffding_gap_bound(1.0, 1.0, 1.0, 10).unwrap(), 0.0);
        let v = hoeffding_gap_bound(1.0, 1.0, (-2f64).exp(), 2).unwrap();
        assert!((v - 0.5f64.sqrt()).abs() < 1e-15);
        assert!(hoeffding_gap_bound(1.0, 1.0, 0.1, 0).is_err());
    }

    #[test]
    fn thm1_clamps_and_rejects_vacuous() {
        assert_eq!(thm1_required_b(1.0, 1024.0, 0.05, 1e9, 0.1, 0.0).unwrap(), 0);
        assert!(thm1_required_b(1.0, 2.0, 0.05, 0.0, 0.1, 0.1).is_err());
        let b = thm1_required_b(1.0, 1024.0, 0.05, 0.0, 0.1, 0.0).unwrap();
        assert_eq!(b, (20480f64.ln() / 0.02).ceil() as u64);
    }

    #[test]
    fn thm2_reduces_to_finite_shape_without_complexity() {
        let b = thm2_required_b(1.0, 0.05, 3.0, 0.2, 0.05, 7.0, 0.0).unwrap();
        let expect = ((1.0f64 / 0.05).ln() / (2.0 * 0.15f64.powi(2)) - 3.0).ceil() as u64;
        assert_eq!(b, expect);
        assert!(thm2_required_b(1.0, 0.05, 0.0, 0.2, 0.0, 1.0, 0.1).is_err());
    }

    #[test]
    fn thm3_reductions() {
        // log(4/δ) = 2, so b = 128/(ε−Δ)²
        let delta = 4.0 * (-2f64).exp();
        let b = thm3_threshold(delta, 100.0, 0.5, 0.0, 0.0).unwrap();
        assert!((b - 512.0).abs() < 1e-9);
        let r = thm3_required_b(delta, 100.0, 0.5, 0.0, 0.0).unwrap();
        assert!((512..=513).contains(&r.required_b));
        assert_eq!(r.required_a_min, 64);
        assert_eq!(r.gamma, 6);
        assert_eq!(thm3_required_a_min(0.5, 0.0).unwrap(), 64);
        let err = thm3_required_b(0.05, 10.0, 0.5, 0.0, 2.0).unwrap_err().to_string();
        assert!(err.contains("64·logC/a") && err.contains("below the minimum"), "{err}");
    }

    #[test]
    fn rademacher_of_zero_loss_singleton_is_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(rademacher_mc_estimate(&[vec![0.0; 20]], 50, &mut rng).unwrap(), 0.0);
        assert!(rademacher_mc_estimate(&[], 5, &mut rng).is_err());
        let est = rademacher_mc_estimate(&[vec![0.0; 30], vec![1.0; 30]], 200, &mut rng).unwrap();
        assert!(est >= 0.0);
    }
}
