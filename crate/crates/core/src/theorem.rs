//! Closed-form equilibrium law of `W` for exponential service times and a
//! separable preparation-time tail.
//!
//! With `A ~ Exp(μ)` and `P[B > x + y] = Σ g_i(x) h_i(y)`, the law of `W` is
//!
//! ```text
//! P[W > x] = ∫₀^∞ e^{-μu} (μπ₀ P[B > x+u] + μ Σ c_i g_i(x+u)) du
//! ```
//!
//! where `(π₀, c_1, …, c_n)` solve an `(n+1)`-dimensional linear system.
//! Every coefficient of that system is an integral of
//! exponential-polynomial-trigonometric functions and is computed exactly.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dists::{decompose_kernel, DistError, DistSpec, KernelDecomposition};
use crate::symfun::{ExpPolyTrig, SymError};

/// Relative singular-value threshold below which `Σ` is rank deficient.
pub const RANK_EPS: f64 = 1e-10;
const PI0_SLACK: f64 = 1e-10;
const VALIDATION_TOL: f64 = 1e-8;
const VALIDATION_POINTS: usize = 20;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TheoremError {
    #[error("hypothesis violated: {0}")]
    Hypothesis(String),
    #[error("service time must be exponential for the closed form")]
    NotExponential,
    #[error("solution fails validation: {0}")]
    Validation(String),
    #[error("π₀ = {0} lies outside [0, 1]")]
    Pi0OutOfRange(f64),
    #[error(transparent)]
    Dist(#[from] DistError),
    #[error(transparent)]
    Sym(#[from] SymError),
}

/// The linear system for `(π₀, c_1, …, c_n)`. Row 0 is the normalization
/// `P[W = 0] + P[W > 0] = 1`; row `i` defines `c_i = ∫ h_i f_W`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemSigma {
    pub mu: f64,
    pub matrix: Vec<Vec<f64>>,
    pub rhs: Vec<f64>,
    pub b_tail: ExpPolyTrig,
    pub kernel: KernelDecomposition,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SigmaSolution {
    pub pi0: f64,
    pub c: Vec<f64>,
    pub rank: usize,
    pub residual_norm: f64,
    pub condition_number: f64,
}

/// `x ↦ f(x) - μ ∫_x^∞ e^{-μ(s-x)} f(s) ds`.
fn reduced(f: &ExpPolyTrig, mu: f64) -> Result<ExpPolyTrig, SymError> {
    Ok(f.sub(&f.tail_integral(mu)?.scale(mu)))
}

pub fn build_sigma(mu: f64, dec: &KernelDecomposition, b_tail: &ExpPolyTrig) -> Result<SystemSigma, TheoremError> {
    if !(mu.is_finite() && mu > 0.0) {
        return Err(TheoremError::Hypothesis(format!("service rate μ = {mu}")));
    }
    if b_tail.is_zero() || dec.is_empty() {
        return Err(TheoremError::Hypothesis(
            "degenerate preparation time (empty tail)".into(),
        ));
    }
    let n = dec.len();
    let mut matrix = vec![vec![0.0; n + 1]; n + 1];
    let mut rhs = vec![0.0; n + 1];

    matrix[0][0] = 1.0 + mu * b_tail.laplace(mu)?;
    for j in 0..n {
        matrix[0][j + 1] = mu * dec.g[j].laplace(mu)?;
    }
    rhs[0] = 1.0;

    let b_red = reduced(b_tail, mu)?;
    let g_red = dec.g.iter().map(|g| reduced(g, mu)).collect::<Result<Vec<_>, _>>()?;
    for i in 0..n {
        let h = &dec.h[i];
        matrix[i + 1][0] = -mu * h.multiply(&b_red).integral_0_inf()?;
        for j in 0..n {
            let delta = if i == j { 1.0 } else { 0.0 };
            matrix[i + 1][j + 1] = delta - mu * h.multiply(&g_red[j]).integral_0_inf()?;
        }
    }
    if matrix.iter().flatten().any(|v| !v.is_finite()) {
        return Err(TheoremError::Hypothesis("non-finite system coefficient".into()));
    }
    Ok(SystemSigma {
        mu,
        matrix,
        rhs,
        b_tail: b_tail.clone(),
        kernel: dec.clone(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearSolution {
    pub x: Vec<f64>,
    pub rank: usize,
    pub residual_norm: f64,
    pub condition_number: f64,
}

/// LU when the matrix has full numerical rank, otherwise the minimum-norm
/// least-squares solution through the SVD pseudo-inverse.
pub fn solve_linear(matrix: &[Vec<f64>], rhs: &[f64]) -> Result<LinearSolution, TheoremError> {
    let n = rhs.len();
    let m = DMatrix::from_fn(n, n, |i, j| matrix[i][j]);
    let b = DVector::from_column_slice(rhs);

    let svd = m.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    let cutoff = RANK_EPS * smax;
    let rank = svd.singular_values.iter().filter(|&&s| s > cutoff).count();
    let x = if rank == n {
        m.clone()
            .lu()
            .solve(&b)
            .ok_or_else(|| TheoremError::Validation("LU factorization is singular".into()))?
    } else {
        svd.solve(&b, cutoff)
            .map_err(|e| TheoremError::Validation(e.to_string()))?
    };
    let residual_norm = (&m * &x - &b).norm();
    if residual_norm > 1e-9 * (1.0 + b.norm()) {
        return Err(TheoremError::Validation(format!("system residual {residual_norm:e}")));
    }
    Ok(LinearSolution {
        x: x.iter().copied().collect(),
        rank,
        residual_norm,
        condition_number: if smin > 0.0 { smax / smin } else { f64::INFINITY },
    })
}

/// Solves `Σ`, falling back to the minimum-norm least-squares solution when
/// it is rank deficient, and certifies the induced law of `W` against the
/// integral equation it must satisfy.
pub fn solve_sigma(sys: &SystemSigma) -> Result<(SigmaSolution, ClosedFormW), TheoremError> {
    let lin = solve_linear(&sys.matrix, &sys.rhs)?;
    let x = lin.x;
    let residual_norm = lin.residual_norm;
    let pi0 = x[0];
    if !(-PI0_SLACK..=1.0 + PI0_SLACK).contains(&pi0) {
        return Err(TheoremError::Pi0OutOfRange(pi0));
    }
    let sol = SigmaSolution {
        pi0,
        c: x.iter().skip(1).copied().collect(),
        rank: lin.rank,
        residual_norm,
        condition_number: lin.condition_number,
    };
    let w = ClosedFormW::new(sys, &sol)?;

    let at0 = w.cdf(0.0);
    if (at0 - pi0).abs() > VALIDATION_TOL {
        return Err(TheoremError::Validation(format!("F_W(0) = {at0} but π₀ = {pi0}")));
    }
    let worst = w.equation_residual(VALIDATION_POINTS)?;
    if worst > VALIDATION_TOL {
        return Err(TheoremError::Validation(format!(
            "integral equation residual {worst:e} exceeds {VALIDATION_TOL:e}"
        )));
    }
    Ok((sol, w))
}

/// Closed-form distribution of `W`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClosedFormW {
    pub mu: f64,
    pub pi0: f64,
    pub c: Vec<f64>,
    pub b_tail: ExpPolyTrig,
    pub g: Vec<ExpPolyTrig>,
    /// `P[W > x]` for `x ≥ 0`.
    pub complement: ExpPolyTrig,
    /// Density of `W` on `(0, ∞)`.
    pub density: ExpPolyTrig,
}

impl ClosedFormW {
    pub fn new(sys: &SystemSigma, sol: &SigmaSolution) -> Result<Self, TheoremError> {
        let mu = sys.mu;
        // μπ₀ P[B > ·] + μ Σ c_i g_i
        let mut source = sys.b_tail.scale(mu * sol.pi0);
        for (c, g) in sol.c.iter().zip(&sys.kernel.g) {
            source = source.add(&g.scale(mu * c));
        }
        // The u-substituted form avoids the unbounded e^{μx} prefactor.
        let complement = source.tail_integral(mu)?;
        let density = source.sub(&complement.scale(mu));
        Ok(ClosedFormW {
            mu,
            pi0: sol.pi0,
            c: sol.c.clone(),
            b_tail: sys.b_tail.clone(),
            g: sys.kernel.g.clone(),
            complement,
            density,
        })
    }

    /// `P[W ≤ x]`.
    pub fn cdf(&self, x: f64) -> f64 {
        if x < 0.0 {
            0.0
        } else {
            1.0 - self.complement.eval(x)
        }
    }

    /// `P[W > x]`.
    pub fn tail(&self, x: f64) -> f64 {
        if x < 0.0 {
            1.0
        } else {
            self.complement.eval(x)
        }
    }

    /// Density on `(0, ∞)` from the first-order equation
    /// `f = μF + μπ₀ P[B > ·] + μ Σ c_i g_i - μ`.
    pub fn pdf(&self, x: f64) -> f64 {
        let mut v = self.mu * self.cdf(x) + self.mu * self.pi0 * self.b_tail.eval(x) - self.mu;
        for (c, g) in self.c.iter().zip(&self.g) {
            v += self.mu * c * g.eval(x);
        }
        v
    }

    /// `E[e^{-sW}]`.
    pub fn laplace(&self, s: f64) -> Result<f64, TheoremError> {
        Ok(self.pi0 + self.density.laplace(s)?)
    }

    /// Largest deviation, over `points` abscissae, between `F_W(x)` and
    ///
    /// ```text
    /// π₀ ∫ P[B ≤ x+z] dF_A(z) + ∫_{0+} ∫ P[B ≤ x+y+z] dF_A(z) dF_W(y)
    /// ```
    ///
    /// evaluated exactly in the algebra.
    pub fn equation_residual(&self, points: usize) -> Result<f64, TheoremError> {
        let mu = self.mu;
        let b_shift = self.b_tail.tail_integral(mu)?;
        let mass = self.density.integral_0_inf()?;
        let cross: Vec<(ExpPolyTrig, f64)> = b_shift
            .expand_sum_arg()
            .into_iter()
            .map(|(gx, hy)| Ok((gx, self.density.multiply(&hy).integral_0_inf()?)))
            .collect::<Result<_, SymError>>()?;
        let mut worst: f64 = 0.0;
        for k in 0..points {
            let x = 0.5 * k as f64;
            let atom = self.pi0 * (1.0 - mu * b_shift.eval(x));
            let inner: f64 = cross.iter().map(|(gx, w)| gx.eval(x) * w).sum();
            let rhs = atom + mass - mu * inner;
            worst = worst.max((self.cdf(x) - rhs).abs());
        }
        Ok(worst)
    }
}

/// Full pipeline: decompose the tail of `B`, assemble and solve the system.
pub fn closed_form(a: &DistSpec, b: &DistSpec) -> Result<(SystemSigma, SigmaSolution, ClosedFormW), TheoremError> {
    let mu = match a {
        DistSpec::Exponential { rate } => *rate,
        _ => return Err(TheoremError::NotExponential),
    };
    let (dec, tail) = decompose_kernel(b)?;
    let sys = build_sigma(mu, &dec, &tail)?;
    let (sol, w) = solve_sigma(&sys)?;
    Ok((sys, sol, w))
}

#[cfg(test)]
#[allow(clippy::needless_range_loop)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::quad;

    fn five_pair_system(mu: f64) -> SystemSigma {
        build_sigma(mu, &fixtures::five_pair_decomposition(), &fixtures::damped_sine_tail()).unwrap()
    }

    #[test]
    fn exponential_b_reduces_to_two_by_two() {
        for (lambda, mu) in [(1.0, 1.0), (0.7, 2.0), (3.0, 0.5)] {
            let b = DistSpec::Exponential { rate: lambda };
            let (sys, sol, _) = closed_form(&DistSpec::Exponential { rate: mu }, &b).unwrap();
            assert_eq!(sys.rhs.len(), 2);
            let pi0 = 1.0 / (1.0 + mu / (lambda + mu) + mu * mu / ((lambda + mu) * (2.0 * lambda + mu)));
            assert!((sol.pi0 - pi0).abs() < 1e-13);
            assert!((sol.c[0] - mu * pi0 / (2.0 * lambda + mu)).abs() < 1e-13);
        }
        let e1 = DistSpec::Exponential { rate: 1.0 };
        let (_, sol, _) = closed_form(&e1, &e1).unwrap();
        assert!((sol.pi0 - 0.6).abs() < 1e-14);
    }

    #[test]
    fn five_pair_coefficients_match_hand_system() {
        // row-by-row comparison with the explicit rational coefficients at μ = 2
        let mu: f64 = 2.0;
        let sys = five_pair_system(mu);
        let q = 2.0 + 2.0 * mu + mu * mu;
        let r0 = [
            1.0 + mu * (6.0 + 7.0 * mu + 3.0 * mu * mu) / (3.0 * (1.0 + mu) * q),
            mu * 2.0 / (3.0 * (1.0 + mu)),
            mu / q,
            mu * (1.0 + mu) / (3.0 * q),
            mu * (1.0 + mu) / q,
            mu / q,
        ];
        // c1 row: c1 - μπ0(...) - μ/15 (5c1/(1+μ) + (6c2+4c3+12c4+6c5 - 3μ(c2-c3-3c4+c5))/q) = 0
        let r1 = [
            -mu * (1.0 / (3.0 + 3.0 * mu) + (6.0 + 2.0 * mu) / (15.0 * q)),
            1.0 - mu / 15.0 * 5.0 / (1.0 + mu),
            -mu / 15.0 * (6.0 - 3.0 * mu) / q,
            -mu / 15.0 * (4.0 + 3.0 * mu) / q,
            -mu / 15.0 * (12.0 + 9.0 * mu) / q,
            -mu / 15.0 * (6.0 - 3.0 * mu) / q,
        ];
        let cubic = 2.0 + 4.0 * mu + 3.0 * mu * mu + mu.powi(3);
        let r3 = [
            -mu * (26.0 + 31.0 * mu + 13.0 * mu * mu) / (60.0 * cubic),
            -mu / 60.0 * 8.0 / (1.0 + mu),
            -mu / 60.0 * 15.0 / q,
            1.0 - mu / 60.0 * 5.0 * (1.0 + mu) / q,
            -mu / 60.0 * 15.0 * (1.0 + mu) / q,
            -mu / 60.0 * 15.0 / q,
        ];
        for (row, want) in [(0, r0), (1, r1), (3, r3)] {
            for j in 0..6 {
                assert!(
                    (sys.matrix[row][j] - want[j]).abs() < 1e-12,
                    "row {row} col {j}: {} vs {}",
                    sys.matrix[row][j],
                    want[j]
                );
            }
        }
    }

    #[test]
    fn system_entries_match_quadrature() {
        let mu = 1.3;
        let sys = five_pair_system(mu);
        let dec = fixtures::five_pair_decomposition();
        let b = fixtures::damped_sine_tail();
        let q = |f: &dyn Fn(f64) -> f64| {
            quad::integrate(f, 0.0, 60.0, &[1.0, 3.0, 10.0], 1e-14, 1e-13)
                .unwrap()
                .value
        };
        let shifted = |f: &ExpPolyTrig, x: f64| q(&|u: f64| (-mu * u).exp() * f.eval(x + u));
        for i in 0..dec.len() {
            let h = &dec.h[i];
            let want = -mu
                * quad::integrate(
                    |x| h.eval(x) * (b.eval(x) - mu * shifted(&b, x)),
                    0.0,
                    40.0,
                    &[1.0, 5.0],
                    1e-13,
                    1e-12,
                )
                .unwrap()
                .value;
            assert!((sys.matrix[i + 1][0] - want).abs() < 1e-8);
        }
        let l0 = 1.0 + mu * q(&|x: f64| (-mu * x).exp() * b.eval(x));
        assert!((sys.matrix[0][0] - l0).abs() < 1e-10);
    }

    #[test]
    fn five_pair_solution_matches_rational_functions() {
        for mu in [0.5, 1.0, 2.0, 5.0] {
            let (sol, _) = solve_sigma(&five_pair_system(mu)).unwrap();
            let (pi0, c) = fixtures::five_pair_solution(mu);
            assert!((sol.pi0 - pi0).abs() <= 1e-10 * pi0.abs());
            for i in 0..5 {
                assert!((sol.c[i] - c[i]).abs() <= 1e-10 * c[i].abs(), "mu={mu} c{}", i + 1);
            }
            assert!((sol.c[1] - sol.c[3]).abs() < 1e-12);
            assert!((sol.c[2] + 3.0 * sol.c[4]).abs() < 1e-12);
        }
        let (sol, _) = solve_sigma(&five_pair_system(2.0)).unwrap();
        assert!((sol.pi0 - 102548.0 / 217732.0).abs() < 1e-12);
        assert!((sol.c[0] - 59272.0 / 217732.0).abs() < 1e-12);
    }

    #[test]
    fn cdf_matches_explicit_formula() {
        let (_, w) = solve_sigma(&five_pair_system(2.0)).unwrap();
        for k in 0..=12 {
            let x = 0.5 * k as f64;
            assert!((w.cdf(x) - fixtures::waiting_time_cdf(2.0, x)).abs() < 1e-10);
        }
        assert!((w.cdf(0.0) - 102548.0 / 217732.0).abs() < 1e-10);
        assert!((w.cdf(60.0) - 1.0).abs() < 1e-15);
        assert_eq!(w.cdf(-1.0), 0.0);
    }

    #[test]
    fn pdf_properties() {
        let (sol, w) = solve_sigma(&five_pair_system(2.0)).unwrap();
        let mass = quad::integrate(|x| w.pdf(x), 0.0, 60.0, &[2.0, 10.0], 1e-14, 1e-13).unwrap();
        assert!((mass.value - (1.0 - sol.pi0)).abs() < 1e-8);
        for k in 1..40 {
            let x = 0.2 * k as f64;
            assert!(w.pdf(x) > -1e-9);
            let h = 1e-5;
            let fd = (w.cdf(x + h) - w.cdf(x - h)) / (2.0 * h);
            assert!((fd - w.pdf(x)).abs() < 1e-6);
            assert!((w.pdf(x) - w.density.eval(x)).abs() < 1e-12);
        }
        let dec = fixtures::five_pair_decomposition();
        for (i, h) in dec.h.iter().enumerate() {
            let ci = quad::integrate(|y| h.eval(y) * w.pdf(y), 0.0, 60.0, &[2.0, 10.0], 1e-14, 1e-13)
                .unwrap()
                .value;
            assert!((ci - sol.c[i]).abs() < 1e-8);
        }
    }

    #[test]
    fn automatic_and_hand_decompositions_agree() {
        for mu in [0.5, 2.0, 5.0] {
            let (_, _, auto) = closed_form(&DistSpec::Exponential { rate: mu }, &fixtures::damped_sine_b()).unwrap();
            let (_, hand) = solve_sigma(&five_pair_system(mu)).unwrap();
            for k in 0..40 {
                let x = 0.25 * k as f64;
                assert!((auto.cdf(x) - hand.cdf(x)).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn duplicated_pair_splits_weight_evenly() {
        let b = ExpPolyTrig::exp(1.0, -1.0);
        let half = b.scale(0.5);
        let dec = KernelDecomposition::new(vec![half.clone(), half], vec![b.clone(), b.clone()], &b).unwrap();
        let sys = build_sigma(1.0, &dec, &b).unwrap();
        let (sol, w) = solve_sigma(&sys).unwrap();
        assert_eq!(sol.rank, 3);
        assert!((sol.pi0 - 0.6).abs() < 1e-12);
        assert!((sol.c[0] - sol.c[1]).abs() < 1e-12);
        let e1 = DistSpec::Exponential { rate: 1.0 };
        let (_, _, direct) = closed_form(&e1, &e1).unwrap();
        for k in 0..20 {
            let x = 0.3 * k as f64;
            assert!((w.cdf(x) - direct.cdf(x)).abs() < 1e-12);
        }
    }

    #[test]
    fn singular_matrix_gets_minimum_norm_solution() {
        let m = vec![vec![1.0, 1.0, 0.0], vec![2.0, 2.0, 0.0], vec![0.0, 0.0, 3.0]];
        let lin = solve_linear(&m, &[2.0, 4.0, 3.0]).unwrap();
        assert_eq!(lin.rank, 2);
        assert!((lin.x[0] - 1.0).abs() < 1e-12 && (lin.x[1] - 1.0).abs() < 1e-12);
        assert!((lin.x[2] - 1.0).abs() < 1e-12);
        assert!(lin.condition_number.is_infinite() || lin.condition_number > 1e12);
        // inconsistent right-hand side
        assert!(solve_linear(&m, &[2.0, 5.0, 3.0]).is_err());
        let full = solve_linear(&[vec![2.0, 1.0], vec![1.0, 3.0]], &[3.0, 4.0]).unwrap();
        assert_eq!(full.rank, 2);
        assert!((full.x[0] - 1.0).abs() < 1e-14 && (full.x[1] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn degenerate_inputs_are_rejected() {
        let b = ExpPolyTrig::exp(1.0, -1.0);
        let dec = KernelDecomposition::new(vec![b.clone()], vec![b.clone()], &b).unwrap();
        assert!(matches!(
            build_sigma(1.0, &dec, &ExpPolyTrig::zero()),
            Err(TheoremError::Hypothesis(_))
        ));
        assert!(matches!(
            closed_form(
                &DistSpec::Exponential { rate: 1.0 },
                &DistSpec::Deterministic { value: 0.0 }
            ),
            Err(TheoremError::Dist(DistError::NotContinuous))
        ));
        assert_eq!(
            closed_form(
                &DistSpec::Deterministic { value: 1.0 },
                &DistSpec::Exponential { rate: 1.0 }
            )
            .unwrap_err(),
            TheoremError::NotExponential
        );
    }

    #[test]
    fn normalization_row_is_total_probability() {
        for mu in [0.5, 2.0] {
            let sys = five_pair_system(mu);
            let (sol, w) = solve_sigma(&sys).unwrap();
            let p_pos = quad::integrate(|x| w.pdf(x), 0.0, 60.0, &[2.0], 1e-14, 1e-13)
                .unwrap()
                .value;
            assert!((sol.pi0 + p_pos - 1.0).abs() < 1e-10);
        }
    }
}
