//! Exponential-polynomial-trigonometric functions.
//!
//! A value of [`ExpPolyTrig`] is a finite sum of terms
//!
//! ```text
//! c · x^k · e^{a x} · {1 | sin(b x) | cos(b x)}
//! ```
//!
//! The set is closed under products, shifts of the argument, and the
//! integral transforms needed to assemble the closed-form waiting-time
//! solution, so every coefficient of that system is computed exactly rather
//! than by quadrature.

use std::fmt;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Coefficients below this magnitude are dropped during canonicalization.
pub const COEFF_EPS: f64 = 1e-14;

/// Tolerance used when deciding whether two rates or frequencies coincide.
const KEY_EPS: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SymError {
    #[error("integral diverges: term with rate {rate} needs s > {rate} (got s = {s})")]
    Divergent { rate: f64, s: f64 },
    #[error("tail integral requires strictly negative rates, found rate {0}")]
    NonNegativeRate(f64),
    #[error("shift parameter must be positive, got {0}")]
    NonPositiveShift(f64),
}

/// Trigonometric factor of a term.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Trig {
    None,
    Sin,
    Cos,
}

/// One summand `coeff · x^power · e^{rate x} · trig(freq x)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Term {
    pub coeff: f64,
    pub power: u32,
    pub rate: f64,
    pub trig: Trig,
    #[serde(default)]
    pub freq: f64,
}

impl Term {
    pub fn new(coeff: f64, power: u32, rate: f64, trig: Trig, freq: f64) -> Self {
        Term {
            coeff,
            power,
            rate,
            trig,
            freq,
        }
    }

    pub fn exp(coeff: f64, rate: f64) -> Self {
        Term::new(coeff, 0, rate, Trig::None, 0.0)
    }

    pub fn eval(&self, x: f64) -> f64 {
        let poly = if self.power == 0 {
            1.0
        } else {
            x.powi(self.power as i32)
        };
        let trig = match self.trig {
            Trig::None => 1.0,
            Trig::Sin => (self.freq * x).sin(),
            Trig::Cos => (self.freq * x).cos(),
        };
        self.coeff * poly * (self.rate * x).exp() * trig
    }

    /// Brings the term to canonical form, or returns `None` if it vanishes.
    ///
    /// Frequencies are made nonnegative, zero-frequency sines vanish and
    /// zero-frequency cosines become plain exponentials.
    fn canonical(mut self) -> Option<Term> {
        if self.coeff.abs() < COEFF_EPS {
            return None;
        }
        match self.trig {
            Trig::None => self.freq = 0.0,
            Trig::Sin | Trig::Cos if self.freq == 0.0 => {
                if self.trig == Trig::Sin {
                    return None;
                }
                self.trig = Trig::None;
            }
            Trig::Sin => {
                if self.freq < 0.0 {
                    self.freq = -self.freq;
                    self.coeff = -self.coeff;
                }
            }
            Trig::Cos => self.freq = self.freq.abs(),
        }
        Some(self)
    }

    fn same_key(&self, other: &Term) -> bool {
        self.power == other.power
            && self.trig == other.trig
            && close(self.rate, other.rate)
            && close(self.freq, other.freq)
    }

    /// Complex exponent `rate + i·freq` of the term.
    fn exponent(&self) -> Complex64 {
        Complex64::new(self.rate, self.freq)
    }
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= KEY_EPS * (1.0 + a.abs().max(b.abs()))
}

fn factorial(n: u32) -> f64 {
    (1..=n).fold(1.0, |acc, k| acc * k as f64)
}

fn binomial(n: u32, k: u32) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Builds the real term `coeff · x^power · e^{rate x} · Re/Im(z e^{i freq x})`
/// pair for a complex amplitude `z` attached to `trig`.
///
/// `Re(z e^{ibx})` for a cosine term and `Im(z e^{ibx})` for a sine term.
fn push_rotated(out: &mut Vec<Term>, coeff: f64, power: u32, rate: f64, trig: Trig, freq: f64, z: Complex64) {
    match trig {
        Trig::None => out.push(Term::new(coeff * z.re, power, rate, Trig::None, 0.0)),
        Trig::Cos => {
            out.push(Term::new(coeff * z.re, power, rate, Trig::Cos, freq));
            out.push(Term::new(-coeff * z.im, power, rate, Trig::Sin, freq));
        }
        Trig::Sin => {
            out.push(Term::new(coeff * z.re, power, rate, Trig::Sin, freq));
            out.push(Term::new(coeff * z.im, power, rate, Trig::Cos, freq));
        }
    }
}

/// Picks the part of a complex number matching a trig factor.
fn project(trig: Trig, z: Complex64) -> f64 {
    match trig {
        Trig::None | Trig::Cos => z.re,
        Trig::Sin => z.im,
    }
}

/// A finite sum of [`Term`]s. The empty sum is the zero function.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(from = "Vec<Term>", into = "Vec<Term>")]
pub struct ExpPolyTrig {
    terms: Vec<Term>,
}

impl ExpPolyTrig {
    pub fn zero() -> Self {
        ExpPolyTrig { terms: Vec::new() }
    }

    /// Builds a canonical function from arbitrary terms.
    pub fn new(terms: impl IntoIterator<Item = Term>) -> Self {
        let mut merged: Vec<Term> = Vec::new();
        for t in terms {
            let t = match t.canonical() {
                Some(t) => t,
                None => continue,
            };
            match merged.iter_mut().find(|m| m.same_key(&t)) {
                Some(m) => m.coeff += t.coeff,
                None => merged.push(t),
            }
        }
        merged.retain(|t| t.coeff.abs() >= COEFF_EPS);
        merged.sort_by(|a, b| {
            (a.trig, a.power)
                .cmp(&(b.trig, b.power))
                .then(b.rate.total_cmp(&a.rate))
                .then(a.freq.total_cmp(&b.freq))
        });
        ExpPolyTrig { terms: merged }
    }

    pub fn from_term(term: Term) -> Self {
        ExpPolyTrig::new([term])
    }

    /// `coeff · e^{rate x}`.
    pub fn exp(coeff: f64, rate: f64) -> Self {
        ExpPolyTrig::from_term(Term::exp(coeff, rate))
    }

    pub fn terms(&self) -> &[Term] {
        &self.terms
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.terms.iter().map(|t| t.eval(x)).sum()
    }

    /// Largest exponential rate among the terms, or `None` for zero.
    pub fn max_rate(&self) -> Option<f64> {
        self.terms.iter().map(|t| t.rate).reduce(f64::max)
    }

    pub fn scale(&self, k: f64) -> Self {
        ExpPolyTrig::new(self.terms.iter().map(|t| Term {
            coeff: t.coeff * k,
            ..*t
        }))
    }

    pub fn add(&self, other: &ExpPolyTrig) -> Self {
        ExpPolyTrig::new(self.terms.iter().chain(other.terms.iter()).copied())
    }

    pub fn sub(&self, other: &ExpPolyTrig) -> Self {
        self.add(&other.scale(-1.0))
    }

    /// Exact product; trig products are reduced with product-to-sum identities.
    pub fn multiply(&self, other: &ExpPolyTrig) -> Self {
        let mut out = Vec::with_capacity(2 * self.terms.len() * other.terms.len());
        for a in &self.terms {
            for b in &other.terms {
                let coeff = a.coeff * b.coeff;
                let power = a.power + b.power;
                let rate = a.rate + b.rate;
                let (fa, fb) = (a.freq, b.freq);
                let mut push = |c: f64, trig: Trig, freq: f64| out.push(Term::new(c, power, rate, trig, freq));
                match (a.trig, b.trig) {
                    (Trig::None, t) => push(coeff, t, fb),
                    (t, Trig::None) => push(coeff, t, fa),
                    (Trig::Sin, Trig::Sin) => {
                        push(0.5 * coeff, Trig::Cos, fa - fb);
                        push(-0.5 * coeff, Trig::Cos, fa + fb);
                    }
                    (Trig::Cos, Trig::Cos) => {
                        push(0.5 * coeff, Trig::Cos, fa - fb);
                        push(0.5 * coeff, Trig::Cos, fa + fb);
                    }
                    (Trig::Sin, Trig::Cos) => {
                        push(0.5 * coeff, Trig::Sin, fa + fb);
                        push(0.5 * coeff, Trig::Sin, fa - fb);
                    }
                    (Trig::Cos, Trig::Sin) => {
                        push(0.5 * coeff, Trig::Sin, fa + fb);
                        push(0.5 * coeff, Trig::Sin, fb - fa);
                    }
                }
            }
        }
        ExpPolyTrig::new(out)
    }

    /// Exact derivative.
    pub fn derivative(&self) -> Self {
        let mut out = Vec::new();
        for t in &self.terms {
            if t.power > 0 {
                out.push(Term {
                    coeff: t.coeff * t.power as f64,
                    power: t.power - 1,
                    ..*t
                });
            }
            // d/dx e^{(a+ib)x} = (a+ib) e^{(a+ib)x}
            push_rotated(&mut out, t.coeff, t.power, t.rate, t.trig, t.freq, t.exponent());
        }
        ExpPolyTrig::new(out)
    }

    /// `∫₀^∞ e^{-s x} f(x) dx`, term by term in closed form.
    pub fn laplace(&self, s: f64) -> Result<f64, SymError> {
        let mut total = 0.0;
        for t in &self.terms {
            if !(s > t.rate) {
                return Err(SymError::Divergent { rate: t.rate, s });
            }
            // ∫ x^k e^{-(s - a - ib) x} dx = k! / (s - a - ib)^{k+1}
            let p = Complex64::new(s, 0.0) - t.exponent();
            let value = factorial(t.power) / p.powu(t.power + 1);
            total += t.coeff * project(t.trig, value);
        }
        Ok(total)
    }

    /// `∫₀^∞ f(x) dx`. Every rate must be strictly negative.
    pub fn integral_0_inf(&self) -> Result<f64, SymError> {
        if let Some(t) = self.terms.iter().find(|t| t.rate >= 0.0) {
            return Err(SymError::NonNegativeRate(t.rate));
        }
        self.laplace(0.0)
    }

    /// The function `x ↦ ∫_x^∞ e^{-μ(s-x)} f(s) ds`.
    pub fn tail_integral(&self, mu: f64) -> Result<ExpPolyTrig, SymError> {
        if !(mu > 0.0) {
            return Err(SymError::NonPositiveShift(mu));
        }
        self.shifted_tail(mu)
    }

    /// `x ↦ ∫₀^∞ e^{-μu} f(x+u) du` for any `μ ≥ 0`; with `μ = 0` this is
    /// the plain upper tail `∫_x^∞ f`.
    pub(crate) fn shifted_tail(&self, mu: f64) -> Result<ExpPolyTrig, SymError> {
        if let Some(t) = self.terms.iter().find(|t| t.rate >= 0.0) {
            return Err(SymError::NonNegativeRate(t.rate));
        }
        let mut out = Vec::new();
        for t in &self.terms {
            // (x+u)^k e^{z(x+u)} integrated against e^{-μu}:
            // e^{zx} Σ_j C(k,j) x^{k-j} j!/(μ - z)^{j+1}
            let p = Complex64::new(mu, 0.0) - t.exponent();
            for j in 0..=t.power {
                let amp = binomial(t.power, j) * factorial(j) / p.powu(j + 1);
                push_rotated(&mut out, t.coeff, t.power - j, t.rate, t.trig, t.freq, amp);
            }
        }
        Ok(ExpPolyTrig::new(out))
    }

    /// Separates `f(x+y)` into pairs with `Σ g_i(x) h_i(y) = f(x+y)`.
    ///
    /// Each `h_i` is a single unit-coefficient term; pairs sharing the same
    /// `h_i` are merged by summing their `g_i`.
    pub fn expand_sum_arg(&self) -> Vec<(ExpPolyTrig, ExpPolyTrig)> {
        let mut pairs: Vec<(Vec<Term>, Term)> = Vec::new();
        let mut push = |g: Term, h: Term| {
            let h = match h.canonical() {
                Some(h) => h,
                None => return,
            };
            // canonicalization of h may flip the sign of a sine
            let g = Term {
                coeff: g.coeff * h.coeff,
                ..g
            };
            let h = Term { coeff: 1.0, ..h };
            match pairs.iter_mut().find(|(_, hh)| hh.same_key(&h)) {
                Some((gs, _)) => gs.push(g),
                None => pairs.push((vec![g], h)),
            }
        };
        for t in &self.terms {
            for j in 0..=t.power {
                let c = t.coeff * binomial(t.power, j);
                let xp = j;
                let yp = t.power - j;
                let gx = |trig: Trig, k: f64| Term::new(c * k, xp, t.rate, trig, t.freq);
                let hy = |trig: Trig| Term::new(1.0, yp, t.rate, trig, t.freq);
                match t.trig {
                    Trig::None => push(gx(Trig::None, 1.0), hy(Trig::None)),
                    Trig::Sin => {
                        // sin(bx + by) = sin bx cos by + cos bx sin by
                        push(gx(Trig::Sin, 1.0), hy(Trig::Cos));
                        push(gx(Trig::Cos, 1.0), hy(Trig::Sin));
                    }
                    Trig::Cos => {
                        // cos(bx + by) = cos bx cos by - sin bx sin by
                        push(gx(Trig::Cos, 1.0), hy(Trig::Cos));
                        push(gx(Trig::Sin, -1.0), hy(Trig::Sin));
                    }
                }
            }
        }
        pairs
            .into_iter()
            .map(|(g, h)| (ExpPolyTrig::new(g), ExpPolyTrig::from_term(h)))
            .filter(|(g, _)| !g.is_zero())
            .collect()
    }
}

impl From<Vec<Term>> for ExpPolyTrig {
    fn from(terms: Vec<Term>) -> Self {
        ExpPolyTrig::new(terms)
    }
}

impl From<ExpPolyTrig> for Vec<Term> {
    fn from(f: ExpPolyTrig) -> Self {
        f.terms
    }
}

impl fmt::Display for ExpPolyTrig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        for (i, t) in self.terms.iter().enumerate() {
            if i > 0 {
                write!(f, " + ")?;
            }
            write!(f, "{}", t.coeff)?;
            match t.power {
                0 => {}
                1 => write!(f, "·x")?,
                k => write!(f, "·x^{k}")?,
            }
            if t.rate != 0.0 {
                write!(f, "·e^({}x)", t.rate)?;
            }
            match t.trig {
                Trig::None => {}
                Trig::Sin => write!(f, "·sin({}x)", t.freq)?,
                Trig::Cos => write!(f, "·cos({}x)", t.freq)?,
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn damped_sine_tail() -> ExpPolyTrig {
        ExpPolyTrig::new([
            Term::exp(2.0 / 3.0, -1.0),
            Term::new(1.0 / 3.0, 0, -1.0, Trig::Sin, 1.0),
            Term::new(1.0 / 3.0, 0, -1.0, Trig::Cos, 1.0),
        ])
    }

    /// Composite Simpson on [a, b]; independent of the closed forms.
    fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
        let n = n + n % 2;
        let h = (b - a) / n as f64;
        let mut s = f(a) + f(b);
        for i in 1..n {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            s += w * f(a + i as f64 * h);
        }
        s * h / 3.0
    }

    #[test]
    fn eval_examples() {
        assert_eq!(ExpPolyTrig::zero().eval(5.0), 0.0);
        assert!((ExpPolyTrig::exp(2.0 / 3.0, -1.0).eval(0.0) - 2.0 / 3.0).abs() < 1e-15);
        assert!((damped_sine_tail().eval(0.0) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn canonical_form_merges_and_normalizes() {
        let f = ExpPolyTrig::new([
            Term::exp(1.0, -1.0),
            Term::exp(2.0, -1.0),
            Term::new(1.0, 0, -1.0, Trig::Sin, -2.0),
            Term::new(5.0, 0, -3.0, Trig::Sin, 0.0),
            Term::new(4.0, 0, -3.0, Trig::Cos, 0.0),
            Term::exp(1e-16, -7.0),
        ]);
        assert_eq!(f.terms().len(), 3);
        let sin = f.terms().iter().find(|t| t.trig == Trig::Sin).unwrap();
        assert_eq!(sin.freq, 2.0);
        assert_eq!(sin.coeff, -1.0);
        assert!(f.terms().iter().all(|t| t.trig != Trig::None || t.freq == 0.0));
    }

    #[test]
    fn multiply_examples() {
        let e = ExpPolyTrig::exp(1.0, -1.0);
        assert!(e.multiply(&ExpPolyTrig::zero()).is_zero());
        assert_eq!(e.multiply(&e), ExpPolyTrig::exp(1.0, -2.0));

        let s = ExpPolyTrig::from_term(Term::new(1.0, 0, -1.0, Trig::Sin, 1.0));
        let sq = s.multiply(&s);
        let expected = ExpPolyTrig::new([Term::exp(0.5, -2.0), Term::new(-0.5, 0, -2.0, Trig::Cos, 2.0)]);
        assert_eq!(sq, expected);
        for i in 0..20 {
            let x = 0.37 * i as f64;
            let direct = s.eval(x) * s.eval(x);
            assert!((sq.eval(x) - direct).abs() < 1e-14);
        }
    }

    #[test]
    fn laplace_examples() {
        let s_fn = ExpPolyTrig::from_term(Term::new(1.0, 0, -1.0, Trig::Sin, 1.0));
        for s in [0.0, 0.5, 2.0, 7.0] {
            let want = 1.0 / (s * s + 2.0 * s + 2.0);
            assert!((s_fn.laplace(s).unwrap() - want).abs() < 1e-15);
            let g1 = ExpPolyTrig::exp(2.0 / 3.0, -1.0);
            assert!((g1.laplace(s).unwrap() - 2.0 / (3.0 * (1.0 + s))).abs() < 1e-15);
        }
        let beta = |s: f64| (6.0 + 7.0 * s + 3.0 * s * s) / (3.0 * (1.0 + s) * (2.0 + 2.0 * s + s * s));
        assert!((beta(2.0) - 16.0 / 45.0).abs() < 1e-15);
        assert!((damped_sine_tail().laplace(2.0).unwrap() - 16.0 / 45.0).abs() < 1e-15);
        assert!(matches!(
            ExpPolyTrig::exp(1.0, 1.0).laplace(0.5),
            Err(SymError::Divergent { .. })
        ));
    }

    #[test]
    fn laplace_of_polynomial_terms() {
        // ∫ x² e^{-3x} e^{-x} dx = 2/4³
        let f = ExpPolyTrig::from_term(Term::new(1.0, 2, -3.0, Trig::None, 0.0));
        assert!((f.laplace(1.0).unwrap() - 2.0 / 64.0).abs() < 1e-15);
    }

    #[test]
    fn tail_integral_examples() {
        let e = ExpPolyTrig::exp(1.0, -1.0);
        for mu in [0.5, 1.0, 3.0] {
            let ti = e.tail_integral(mu).unwrap();
            assert_eq!(ti, ExpPolyTrig::exp(1.0 / (1.0 + mu), -1.0));
        }
        assert!(ExpPolyTrig::zero().tail_integral(2.0).unwrap().is_zero());

        let s_fn = ExpPolyTrig::from_term(Term::new(1.0, 0, -1.0, Trig::Sin, 1.0));
        let ti = s_fn.tail_integral(2.0).unwrap();
        assert!((ti.eval(0.0) - 0.1).abs() < 1e-15);
        let oracle = simpson(|s| (-2.0 * s).exp() * s_fn.eval(s), 0.0, 40.0, 20_000);
        assert!((oracle - 0.1).abs() < 1e-10);

        assert_eq!(
            ExpPolyTrig::exp(1.0, 0.0).tail_integral(1.0),
            Err(SymError::NonNegativeRate(0.0))
        );
        assert_eq!(e.tail_integral(0.0), Err(SymError::NonPositiveShift(0.0)));
    }

    #[test]
    fn tail_integral_matches_quadrature_at_interior_points() {
        let f = ExpPolyTrig::new([
            Term::new(1.5, 2, -0.7, Trig::Cos, 1.3),
            Term::new(-0.4, 1, -1.1, Trig::Sin, 0.5),
            Term::exp(0.9, -2.0),
        ]);
        let mu = 1.7;
        let ti = f.tail_integral(mu).unwrap();
        for x in [0.0, 0.3, 1.0, 2.5, 4.0] {
            let oracle = simpson(|u| (-mu * u).exp() * f.eval(x + u), 0.0, 60.0, 60_000);
            assert!((ti.eval(x) - oracle).abs() < 1e-9, "x={x}: {} vs {oracle}", ti.eval(x));
        }
    }

    #[test]
    fn expand_sum_arg_examples() {
        let e = ExpPolyTrig::exp(1.0, -1.0);
        let pairs = e.expand_sum_arg();
        assert_eq!(pairs, vec![(e.clone(), e.clone())]);

        let xe = ExpPolyTrig::from_term(Term::new(1.0, 1, -1.0, Trig::None, 0.0));
        let pairs = xe.expand_sum_arg();
        assert_eq!(pairs.len(), 2);
        assert!(pairs.contains(&(xe.clone(), e.clone())));
        assert!(pairs.contains(&(e.clone(), xe.clone())));

        let tail = damped_sine_tail();
        let pairs = tail.expand_sum_arg();
        for i in 0..6 {
            for j in 0..6 {
                let (x, y) = (0.8 * i as f64, 0.9 * j as f64);
                let sum: f64 = pairs.iter().map(|(g, h)| g.eval(x) * h.eval(y)).sum();
                assert!((sum - tail.eval(x + y)).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn integral_0_inf_examples() {
        assert!((ExpPolyTrig::exp(1.0, -1.0).integral_0_inf().unwrap() - 1.0).abs() < 1e-15);
        assert!((ExpPolyTrig::exp(1.0, -2.0).integral_0_inf().unwrap() - 0.5).abs() < 1e-15);
        // e^{-2x}(1 - cos 2x)/2
        let f = ExpPolyTrig::new([Term::exp(0.5, -2.0), Term::new(-0.5, 0, -2.0, Trig::Cos, 2.0)]);
        let oracle = simpson(|x| f.eval(x), 0.0, 30.0, 30_000);
        assert!((f.integral_0_inf().unwrap() - oracle).abs() < 1e-10);
        assert!((f.integral_0_inf().unwrap() - 0.125).abs() < 1e-15);
        assert!(ExpPolyTrig::exp(1.0, 0.0).integral_0_inf().is_err());
    }

    #[test]
    fn derivative_matches_finite_difference() {
        let f = ExpPolyTrig::new([
            Term::new(1.5, 2, -0.7, Trig::Cos, 1.3),
            Term::new(-0.4, 1, -1.1, Trig::Sin, 0.5),
            Term::exp(0.9, -2.0),
        ]);
        let d = f.derivative();
        for x in [0.2, 1.0, 3.0] {
            let h = 1e-5;
            let fd = (f.eval(x + h) - f.eval(x - h)) / (2.0 * h);
            assert!((d.eval(x) - fd).abs() < 1e-8);
        }
    }

    #[test]
    fn serializes_as_term_list() {
        let f = ExpPolyTrig::from_term(Term::new(0.5, 1, -1.0, Trig::Sin, 2.0));
        let json = serde_json::to_string(&f).unwrap();
        assert_eq!(json, r#"[{"coeff":0.5,"power":1,"rate":-1.0,"trig":"sin","freq":2.0}]"#);
        let back: ExpPolyTrig = serde_json::from_str(&json).unwrap();
        assert_eq!(back, f);
    }
}
