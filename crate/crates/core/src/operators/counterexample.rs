//! The sequence `x^N = (1, -N 1_{[-1/N, 0]})` for `a0 = 0`, `a1 = 0`.
//!
//! `x0^N = 1` for every `N` while `|x^N|_{-1}^2 ~ 1/(3N)`, so `|x0| <= C |x|_{-1}`
//! has no finite `C`. `Ã^{-1} x^N` is integrated exactly:
//! first component `-(1/mu) g(mu/N)`, `g(t) = 1 - (1 - e^{-t})/t`, and
//! `|second|^2 = (N^2/mu^3) f(mu/N)`, `f(e) = int_0^e (1 - e^{-s})^2 ds`.

use serde::Serialize;

use super::OperatorPack;
use crate::error::{Error, Result};

fn g_fn(t: f64) -> f64 {
    if t < 1e-2 {
        // t/2 - t^2/6 + t^3/24 - t^4/120 + ...
        let mut term = t / 2.0;
        let mut sum = 0.0;
        for k in 1..12 {
            sum += term;
            term *= -t / (k as f64 + 2.0);
        }
        sum
    } else {
        1.0 + (-t).exp_m1() / t
    }
}

fn f_fn(e: f64) -> f64 {
    if e < 0.1 {
        // (1 - e^{-s})^2 = sum_{k>=2} (-1)^k (2^k - 2) s^k / k!
        let mut sum = 0.0;
        let mut fact = 2.0;
        let mut pow = e * e * e;
        for k in 2..25 {
            let c = if k % 2 == 0 { 1.0 } else { -1.0 } * (2f64.powi(k) - 2.0) / fact;
            sum += c * pow / (k as f64 + 1.0);
            fact *= k as f64 + 1.0;
            pow *= e;
        }
        sum
    } else {
        e + 2.0 * (-e).exp_m1() - 0.5 * (-2.0 * e).exp_m1()
    }
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct CounterexampleValue {
    pub n: u64,
    pub x0_norm: f64,
    pub minus_one_sq: f64,
    /// `|x^N|_{-1}^2 / (1/(3N))`.
    pub ratio: f64,
    /// `|x0^N| / |x^N|_{-1}`.
    pub witness: f64,
}

/// Exact value for one `N` (requires `d >= 1/N`).
pub fn counterexample_value(mu: f64, d: f64, n: u64) -> Result<CounterexampleValue> {
    if n < 10 {
        return Err(Error::NOutOfRange { n: n as usize, max: usize::MAX });
    }
    let nf = n as f64;
    if d < 1.0 / nf {
        return Err(Error::Config(format!("support 1/{n} exceeds delay {d}")));
    }
    if !(mu > 0.0) {
        return Err(Error::Config(format!("shift must be positive, got {mu}")));
    }
    let x0 = g_fn(mu / nf) / mu;
    let second = nf * nf / (mu * mu * mu) * f_fn(mu / nf);
    let m1 = x0 * x0 + second;
    Ok(CounterexampleValue {
        n,
        x0_norm: 1.0,
        minus_one_sq: m1,
        ratio: m1 * 3.0 * nf,
        witness: 1.0 / m1.sqrt(),
    })
}

/// Evaluates the sequence for a pack with `n = 1`, `a0 = 0`, `a1 = 0`.
pub fn counterexample_sequence(pack: &OperatorPack, ns: &[u64]) -> Result<Vec<CounterexampleValue>> {
    if pack.n != 1 {
        return Err(Error::DimensionMismatch {
            what: "counterexample state dimension",
            expected: 1,
            got: pack.n,
        });
    }
    if pack.a0[(0, 0)] != 0.0 || !pack.a1.is_zero() {
        return Err(Error::Config("counterexample needs a0 = 0 and a1 = 0".into()));
    }
    ns.iter()
        .map(|n| counterexample_value(pack.mu, pack.grid.delay(), *n))
        .collect()
}
