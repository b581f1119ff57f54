//! The preparation-time law with density `(2/3)(1 + sin x) e^{-x}`.
//!
//! It has a rational Laplace transform but is not phase-type, and serves as
//! the reference case throughout the tests, benches and the CLI examples.

use crate::dists::{DistSpec, KernelDecomposition};
use crate::symfun::{ExpPolyTrig, Term, Trig};

/// `P[B > x] = e^{-x}(2 + sin x + cos x)/3`.
pub fn damped_sine_tail() -> ExpPolyTrig {
    ExpPolyTrig::new([
        Term::exp(2.0 / 3.0, -1.0),
        Term::new(1.0 / 3.0, 0, -1.0, Trig::Sin, 1.0),
        Term::new(1.0 / 3.0, 0, -1.0, Trig::Cos, 1.0),
    ])
}

pub fn damped_sine_b() -> DistSpec {
    DistSpec::ExpPolyTrigTail {
        tail: damped_sine_tail(),
    }
}

/// Same law given through its transform `(2/3)(s²+3s+3)/((s+1)(s²+2s+2))`.
pub fn damped_sine_b_rational() -> DistSpec {
    DistSpec::RationalLt {
        numer: vec![2.0, 2.0, 2.0 / 3.0],
        denom: vec![2.0, 4.0, 3.0, 1.0],
    }
}

fn e(c: f64) -> ExpPolyTrig {
    ExpPolyTrig::exp(c, -1.0)
}

fn es(c: f64) -> ExpPolyTrig {
    ExpPolyTrig::from_term(Term::new(c, 0, -1.0, Trig::Sin, 1.0))
}

fn ec(c: f64) -> ExpPolyTrig {
    ExpPolyTrig::from_term(Term::new(c, 0, -1.0, Trig::Cos, 1.0))
}

/// The five-pair split of `P[B > x + y]` whose linear system has the
/// rational-in-μ solution checked by the golden tests.
pub fn five_pair_decomposition() -> KernelDecomposition {
    let third = 1.0 / 3.0;
    let g = vec![e(2.0 / 3.0), es(1.0), ec(third), ec(1.0), es(1.0)];
    let h = vec![e(1.0), ec(third), es(1.0), ec(third), es(-third)];
    KernelDecomposition::new(g, h, &damped_sine_tail()).expect("valid decomposition")
}

/// Solution of the five-pair system as rational functions of `μ`:
/// `(π₀, [c₁, …, c₅])`.
pub fn five_pair_solution(mu: f64) -> (f64, [f64; 5]) {
    let den = 10800.0 + 27000.0 * mu + 22353.0 * mu.powi(2) + 7940.0 * mu.powi(3);
    let pi0 = (10800.0 + 16200.0 * mu + 9753.0 * mu.powi(2) + 2542.0 * mu.powi(3)) / den;
    let c1 = (5760.0 * mu + 6612.0 * mu.powi(2) + 2663.0 * mu.powi(3)) / den;
    let c2 = (4680.0 * mu + 5301.0 * mu.powi(2) + 2066.0 * mu.powi(3)) / (3.0 * den);
    let c3 = (2340.0 * mu + 2778.0 * mu.powi(2) + 1176.0 * mu.powi(3)) / den;
    (pi0, [c1, c2, c3, c2, -c3 / 3.0])
}

/// Closed-form waiting-time distribution for this `B` and `A ~ Exp(μ)`.
pub fn waiting_time_cdf(mu: f64, x: f64) -> f64 {
    let den = 10800.0 + 27000.0 * mu + 22353.0 * mu.powi(2) + 7940.0 * mu.powi(3);
    let bracket = 5.0 * (720.0 + 744.0 * mu + 347.0 * mu * mu)
        + 4.0 * (450.0 + 645.0 * mu + 241.0 * mu * mu) * x.cos()
        + 2.0 * mu * (255.0 + 286.0 * mu) * x.sin();
    1.0 - 2.0 * mu * (-x).exp() / den * bracket
}
