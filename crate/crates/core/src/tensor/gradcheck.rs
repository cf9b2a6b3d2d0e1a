use super::{Tape, Tensor, Var};
use crate::error::{Error, Result};

/// Gradient magnitudes below this are compared in absolute terms.
pub const REL_ERR_FLOOR: f64 = 1e-6;

/// Outcome of comparing tape gradients against central differences.
#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub analytic: Vec<f64>,
    pub numeric: Vec<f64>,
    /// Largest `|analytic − numeric| / max(|analytic|, |numeric|, REL_ERR_FLOOR)`.
    pub max_rel_err: f64,
    pub worst_index: usize,
    pub tol: f64,
    pub passed: bool,
}

/// Checks `d f / d x` from the tape against `(f(x+h) − f(x−h)) / 2h` for every
/// coordinate of `x`. `f` must be deterministic and return a scalar.
pub fn finite_diff_check<F>(mut f: F, x: &Tensor, h: f64, tol: f64) -> Result<GradCheckReport>
where
    F: FnMut(&mut Tape, Var) -> Result<Var>,
{
    if h <= 0.0 {
        return Err(Error::Config("finite-difference step must be positive".into()));
    }
    let mut tape = Tape::new();
    let xv = tape.param(x.clone());
    let out = f(&mut tape, xv)?;
    tape.backward(out)?;
    let analytic = tape
        .grad(xv)
        .map(|g| g.data().to_vec())
        .unwrap_or_else(|| vec![0.0; x.numel()]);

    let mut eval = |probe: Tensor| -> Result<f64> {
        let mut tape = Tape::new();
        let v = tape.constant(probe);
        let out = f(&mut tape, v)?;
        Ok(tape.value(out).item())
    };
    let mut numeric = Vec::with_capacity(x.numel());
    for i in 0..x.numel() {
        let mut plus = x.clone();
        plus.data_mut()[i] += h;
        let mut minus = x.clone();
        minus.data_mut()[i] -= h;
        numeric.push((eval(plus)? - eval(minus)?) / (2.0 * h));
    }

    let (worst_index, max_rel_err) = analytic
        .iter()
        .zip(&numeric)
        .map(|(a, n)| (a - n).abs() / a.abs().max(n.abs()).max(REL_ERR_FLOOR))
        .enumerate()
        .fold((0, 0.0), |best, (i, e)| if e > best.1 { (i, e) } else { best });
    Ok(GradCheckReport {
        analytic,
        numeric,
        max_rel_err,
        worst_index,
        tol,
        passed: max_rel_err <= tol,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_is_exact() {
        let x = Tensor::from_vec(vec![3.0]).unwrap();
        let r = finite_diff_check(
            |tape, v| {
                let sq = tape.mul(v, v)?;
                tape.sum(sq)
            },
            &x,
            1e-4,
            1e-7,
        )
        .unwrap();
        assert!((r.analytic[0] - 6.0).abs() < 1e-12);
        assert!((r.numeric[0] - 6.0).abs() < 1e-7);
        assert!(r.passed);
    }

    #[test]
    fn rejects_nonpositive_step() {
        let x = Tensor::scalar(1.0);
        assert!(finite_diff_check(|t, v| t.sum(v), &x, 0.0, 1e-4).is_err());
    }
}
