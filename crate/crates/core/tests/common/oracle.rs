//! High-precision evaluations of the bound closed forms.

use dashu_float::ops::SquareRoot;
use dashu_float::round::mode::HalfEven;
use dashu_float::FBig;

pub type Big = FBig<HalfEven, 2>;

pub fn big(x: f64) -> Big {
    Big::try_from(x).unwrap().with_precision(256).value()
}

pub fn f(x: &Big) -> f64 {
    x.to_f64().value()
}

pub fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}

pub const TOL: f64 = 1e-12;

pub fn oracle_hoeffding(m: f64, g: f64, delta: f64, n: u64) -> f64 {
    let inner = (big(g) / big(delta)).ln() / (big(2.0) * big(n as f64));
    f(&(big(m) * inner.sqrt()))
}

pub fn oracle_thm1(m: f64, g: f64, delta: f64, a: f64, eps: f64, tri: f64) -> f64 {
    let margin = big(eps) - big(tri);
    f(&(big(m) * big(m) * (big(g) / big(delta)).ln() / (big(2.0) * &margin * &margin) - big(a)))
}

pub fn oracle_thm2(m: f64, delta: f64, a: f64, eps: f64, tri: f64, l: f64, r: f64) -> f64 {
    let margin = big(eps) - big(tri) - big(2.0) * big(l) * big(r);
    f(&(big(m) * big(m) * (big(1.0) / big(delta)).ln() / (big(2.0) * &margin * &margin) - big(a)))
}

pub fn oracle_thm3(delta: f64, a: f64, eps: f64, tri: f64, logc: f64) -> f64 {
    let margin = big(eps) - big(tri);
    let denom = &margin * &margin - big(64.0) * big(logc) / big(a);
    f(&(big(64.0) * (big(4.0) / big(delta)).ln() / denom))
}

