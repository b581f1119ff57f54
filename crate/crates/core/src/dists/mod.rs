//! Service- and preparation-time distributions.
//!
//! A [`DistSpec`] is the declarative, serializable description; [`Dist`] is
//! its validated form with any derived closed forms (reconstructed
//! densities, tails) computed once.

mod kernel;
pub mod rational;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::quad::{self, QuadError};
use crate::symfun::{ExpPolyTrig, SymError};

pub use kernel::KernelDecomposition;
pub use rational::{cdf_from_lt, density_from_lt, residues, ResidueExpansion, RootBlock};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DistError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("rational transform needs deg(numer) < deg(denom), got {numer} and {denom}")]
    Degree { numer: usize, denom: usize },
    #[error("root finding failed: {0}")]
    RootFinding(String),
    #[error("denominator root {re} + {im}i does not have negative real part")]
    UnstableRoot { re: f64, im: f64 },
    #[error("reconstructed density integrates to {0}, not 1")]
    NotNormalized(f64),
    #[error("not a valid tail function: {0}")]
    NotATail(String),
    #[error("inverse-cdf sampling failed for u = {0}")]
    InverseCdf(f64),
    #[error("invalid kernel decomposition: {0}")]
    Kernel(String),
    #[error("distribution function of B is not continuous")]
    NotContinuous,
    #[error("operation not supported for this distribution: {0}")]
    Unsupported(&'static str),
    #[error(transparent)]
    Sym(#[from] SymError),
    #[error(transparent)]
    Quad(#[from] QuadError),
}

/// Declarative description of a nonnegative random variable.
///
/// Polynomial coefficients of `RationalLt` are in ascending powers of `s`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DistSpec {
    Exponential {
        rate: f64,
    },
    Deterministic {
        value: f64,
    },
    Uniform {
        lo: f64,
        hi: f64,
    },
    RationalLt {
        numer: Vec<f64>,
        denom: Vec<f64>,
    },
    ExpPolyTrigTail {
        tail: ExpPolyTrig,
    },
    /// Tail `e^{-x^p}`.
    WeibullTail {
        p: u32,
    },
}

impl DistSpec {
    pub fn compile(&self) -> Result<Dist, DistError> {
        Dist::new(self.clone())
    }
}

#[derive(Debug, Clone)]
enum Law {
    Exponential(f64),
    Deterministic(f64),
    Uniform(f64, f64),
    /// Continuous law with an exponential-polynomial-trigonometric tail.
    Smooth {
        tail: ExpPolyTrig,
        density: ExpPolyTrig,
    },
    Weibull(u32),
}

/// A validated distribution.
#[derive(Debug, Clone)]
pub struct Dist {
    spec: DistSpec,
    law: Law,
}

const QUAD_ABS: f64 = 1e-14;
const QUAD_REL: f64 = 1e-11;
/// Tail mass ignored when truncating integrals against a density.
const TRUNCATION_MASS: f64 = 1e-17;

fn validate_tail(tail: &ExpPolyTrig) -> Result<(), DistError> {
    if let Some(t) = tail.terms().iter().find(|t| t.rate >= 0.0) {
        return Err(DistError::NotATail(format!(
            "term with rate {} does not vanish at ∞",
            t.rate
        )));
    }
    let at0 = tail.eval(0.0);
    if (at0 - 1.0).abs() > 1e-10 {
        return Err(DistError::NotATail(format!("tail at 0 is {at0}, not 1")));
    }
    let mut prev = at0;
    for i in 1..=3000 {
        let v = tail.eval(i as f64 * 0.01);
        if v > prev + 1e-12 {
            return Err(DistError::NotATail(format!("increases near x = {}", i as f64 * 0.01)));
        }
        prev = v;
    }
    Ok(())
}

impl Dist {
    pub fn new(spec: DistSpec) -> Result<Self, DistError> {
        let law = match &spec {
            DistSpec::Exponential { rate } => {
                if !(rate.is_finite() && *rate > 0.0) {
                    return Err(DistError::InvalidParameter(format!("exponential rate {rate}")));
                }
                Law::Exponential(*rate)
            }
            DistSpec::Deterministic { value } => {
                if !(value.is_finite() && *value >= 0.0) {
                    return Err(DistError::InvalidParameter(format!("deterministic value {value}")));
                }
                Law::Deterministic(*value)
            }
            DistSpec::Uniform { lo, hi } => {
                if !(lo.is_finite() && hi.is_finite() && 0.0 <= *lo && lo < hi) {
                    return Err(DistError::InvalidParameter(format!("uniform bounds [{lo}, {hi}]")));
                }
                Law::Uniform(*lo, *hi)
            }
            DistSpec::RationalLt { numer, denom } => {
                let exp = residues(numer, denom)?;
                let density = density_from_lt(&exp)?;
                let mass = density.integral_0_inf()?;
                if (mass - 1.0).abs() > 1e-9 {
                    return Err(DistError::NotNormalized(mass));
                }
                let tail = density.shifted_tail(0.0)?;
                validate_tail(&tail)?;
                Law::Smooth { tail, density }
            }
            DistSpec::ExpPolyTrigTail { tail } => {
                validate_tail(tail)?;
                Law::Smooth {
                    tail: tail.clone(),
                    density: tail.derivative().scale(-1.0),
                }
            }
            DistSpec::WeibullTail { p } => {
                if *p < 2 {
                    return Err(DistError::InvalidParameter(format!(
                        "weibull exponent {p} must exceed 1"
                    )));
                }
                Law::Weibull(*p)
            }
        };
        Ok(Dist { spec, law })
    }

    pub fn spec(&self) -> &DistSpec {
        &self.spec
    }

    pub fn is_deterministic(&self) -> bool {
        matches!(self.law, Law::Deterministic(_))
    }

    /// `P[Y > x]`.
    pub fn tail(&self, x: f64) -> f64 {
        if x < 0.0 {
            return 1.0;
        }
        match &self.law {
            Law::Exponential(rate) => (-rate * x).exp(),
            Law::Deterministic(d) => {
                if x < *d {
                    1.0
                } else {
                    0.0
                }
            }
            Law::Uniform(lo, hi) => ((hi - x) / (hi - lo)).clamp(0.0, 1.0),
            Law::Smooth { tail, .. } => tail.eval(x).clamp(0.0, 1.0),
            Law::Weibull(p) => (-x.powi(*p as i32)).exp(),
        }
    }

    /// `P[Y ≤ x]`; zero for `x < 0`.
    pub fn cdf(&self, x: f64) -> f64 {
        if x < 0.0 {
            0.0
        } else {
            1.0 - self.tail(x)
        }
    }

    /// `P[Y < t]` (left limit of the cdf).
    pub fn prob_less(&self, t: f64) -> f64 {
        match self.law {
            Law::Deterministic(d) => {
                if d < t {
                    1.0
                } else {
                    0.0
                }
            }
            _ => {
                if t <= 0.0 {
                    0.0
                } else {
                    self.cdf(t)
                }
            }
        }
    }

    /// Density on `(0, ∞)`; `None` for the deterministic law.
    pub fn density(&self, x: f64) -> Option<f64> {
        if x < 0.0 {
            return Some(0.0);
        }
        Some(match &self.law {
            Law::Exponential(rate) => rate * (-rate * x).exp(),
            Law::Deterministic(_) => return None,
            Law::Uniform(lo, hi) => {
                if x >= *lo && x <= *hi {
                    1.0 / (hi - lo)
                } else {
                    0.0
                }
            }
            Law::Smooth { density, .. } => density.eval(x),
            Law::Weibull(p) => {
                let p = *p as i32;
                p as f64 * x.powi(p - 1) * (-x.powi(p)).exp()
            }
        })
    }

    pub fn mean(&self) -> f64 {
        match &self.law {
            Law::Exponential(rate) => 1.0 / rate,
            Law::Deterministic(d) => *d,
            Law::Uniform(lo, hi) => 0.5 * (lo + hi),
            Law::Smooth { tail, .. } => tail.integral_0_inf().expect("validated tail"),
            Law::Weibull(p) => statrs::function::gamma::gamma(1.0 + 1.0 / *p as f64),
        }
    }

    /// The tail as an exact exponential-polynomial-trigonometric function,
    /// when it has one.
    pub fn tail_fn(&self) -> Option<ExpPolyTrig> {
        match &self.law {
            Law::Exponential(rate) => Some(ExpPolyTrig::exp(1.0, -rate)),
            Law::Smooth { tail, .. } => Some(tail.clone()),
            _ => None,
        }
    }

    /// Points where the distribution function has a kink or jump.
    fn kinks(&self) -> Vec<f64> {
        match self.law {
            Law::Deterministic(d) => vec![d],
            Law::Uniform(lo, hi) => vec![lo, hi],
            _ => Vec::new(),
        }
    }

    /// Smallest `x` (up to a factor of two) with `P[Y > x] < mass`.
    pub fn upper_quantile(&self, mass: f64) -> f64 {
        match self.law {
            Law::Deterministic(d) => return d,
            Law::Uniform(_, hi) => return hi,
            _ => {}
        }
        let mut x = self.mean().max(1e-3);
        while self.tail(x) >= mass && x < 1e8 {
            x *= 2.0;
        }
        x
    }

    /// `E[g(Y)]`; `breaks` are points where `g` is not smooth.
    pub fn expect<F: Fn(f64) -> f64>(&self, g: F, breaks: &[f64]) -> Result<f64, DistError> {
        match self.law {
            Law::Deterministic(d) => Ok(g(d)),
            Law::Uniform(lo, hi) => {
                let r = quad::integrate(&g, lo, hi, breaks, QUAD_ABS, QUAD_REL)?;
                Ok(r.value / (hi - lo))
            }
            _ => {
                let upper = self.upper_quantile(TRUNCATION_MASS);
                let mut pts = breaks.to_vec();
                // resolve the bulk of the density before the long tail
                let m = self.mean();
                pts.extend([0.5 * m, m, 2.0 * m, 4.0 * m, 8.0 * m]);
                let r = quad::integrate(
                    |z| g(z) * self.density(z).unwrap_or(0.0),
                    0.0,
                    upper,
                    &pts,
                    QUAD_ABS,
                    QUAD_REL,
                )?;
                Ok(r.value)
            }
        }
    }

    /// Draws one variate; deterministic given the generator state.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<f64, DistError> {
        // u in (0, 1]
        let u = 1.0 - rng.random::<f64>();
        Ok(match &self.law {
            Law::Exponential(rate) => -u.ln() / rate,
            Law::Deterministic(d) => *d,
            Law::Uniform(lo, hi) => lo + (hi - lo) * (1.0 - u),
            Law::Weibull(p) => (-u.ln()).powf(1.0 / *p as f64),
            Law::Smooth { tail, density } => invert_tail(tail, density, u)?,
        })
    }
}

/// Solves `tail(x) = u` by Newton steps safeguarded with bisection.
fn invert_tail(tail: &ExpPolyTrig, density: &ExpPolyTrig, u: f64) -> Result<f64, DistError> {
    if u >= 1.0 {
        return Ok(0.0);
    }
    let mut lo = 0.0;
    let mut hi = 1.0;
    while tail.eval(hi) > u {
        lo = hi;
        hi *= 2.0;
        if hi > 1e6 {
            return Err(DistError::InverseCdf(u));
        }
    }
    let mut x = 0.5 * (lo + hi);
    for _ in 0..200 {
        let r = tail.eval(x) - u;
        if r > 0.0 {
            lo = x;
        } else {
            hi = x;
        }
        if hi - lo <= 1e-12 * (1.0 + x) || r == 0.0 {
            return Ok(x);
        }
        let d = density.eval(x);
        let newton = x + r / d;
        x = if d > 0.0 && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
    }
    if hi - lo <= 1e-9 * (1.0 + x) {
        Ok(x)
    } else {
        Err(DistError::InverseCdf(u))
    }
}

/// The law of `X = B - A` for independent `A`, `B`.
#[derive(Debug, Clone)]
pub struct Difference {
    a: Dist,
    b: Dist,
    /// `(μ, x ↦ ∫₀^∞ e^{-μz} P[B > x+z] dz)` when `A ~ Exp(μ)` and the tail of
    /// `B` is exponential-polynomial-trigonometric.
    exact: Option<(f64, ExpPolyTrig)>,
}

impl Difference {
    pub fn new(a: Dist, b: Dist) -> Result<Self, DistError> {
        let exact = match (&a.law, b.tail_fn()) {
            (Law::Exponential(mu), Some(tb)) => Some((*mu, tb.tail_integral(*mu)?)),
            _ => None,
        };
        Ok(Difference { a, b, exact })
    }

    pub fn a(&self) -> &Dist {
        &self.a
    }

    pub fn b(&self) -> &Dist {
        &self.b
    }

    /// True when [`Difference::tail`] is evaluated in closed form.
    pub fn is_exact(&self) -> bool {
        self.exact.is_some() || self.a.is_deterministic() || self.b.is_deterministic()
    }

    /// `P[B - A > x] = ∫ P[B > x + z] dF_A(z)`.
    pub fn tail(&self, x: f64) -> Result<f64, DistError> {
        if let Law::Deterministic(bv) = self.b.law {
            return Ok(self.a.prob_less(bv - x));
        }
        if let Law::Deterministic(d) = self.a.law {
            return Ok(self.b.tail(x + d));
        }
        if let Some((mu, ti)) = &self.exact {
            return Ok(if x >= 0.0 {
                mu * ti.eval(x)
            } else {
                // B > x + z holds surely while z < -x
                let e = (mu * x).exp();
                (1.0 - e) + e * mu * ti.eval(0.0)
            });
        }
        let mut breaks = vec![-x];
        breaks.extend(self.b.kinks().iter().map(|k| k - x));
        let v = self.a.expect(|z| self.b.tail(x + z), &breaks)?;
        Ok(v.clamp(0.0, 1.0))
    }

    /// `P[B - A < 0]`, the probability that the server does not wait.
    pub fn prob_negative(&self) -> Result<f64, DistError> {
        if let Law::Deterministic(d) = self.a.law {
            return Ok(self.b.prob_less(d));
        }
        if let Law::Deterministic(bv) = self.b.law {
            return Ok(self.a.tail(bv));
        }
        let breaks = self.b.kinks();
        let v = self.a.expect(|z| self.b.prob_less(z), &breaks)?;
        Ok(v.clamp(0.0, 1.0))
    }
}

/// `P[B - A > x]`.
pub fn x_tail(a: &DistSpec, b: &DistSpec, x: f64) -> Result<f64, DistError> {
    Difference::new(a.compile()?, b.compile()?)?.tail(x)
}

/// Splits the tail of `B` into a finite sum of products.
pub fn decompose_kernel(spec: &DistSpec) -> Result<(KernelDecomposition, ExpPolyTrig), DistError> {
    let dist = spec.compile()?;
    let tail = match &dist.law {
        Law::Deterministic(_) => return Err(DistError::NotContinuous),
        Law::Exponential(_) | Law::Smooth { .. } => dist.tail_fn().expect("closed-form tail"),
        Law::Uniform(..) => return Err(DistError::Unsupported("uniform tail is not separable")),
        Law::Weibull(_) => return Err(DistError::Unsupported("weibull tail is not separable")),
    };
    let (g, h) = tail.expand_sum_arg().into_iter().unzip();
    Ok((KernelDecomposition::new(g, h, &tail)?, tail))
}
