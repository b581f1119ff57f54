use serde::{Deserialize, Serialize};

use super::DistError;
use crate::symfun::ExpPolyTrig;

/// A separable representation `Σ g_i(x) h_i(y) = P[B > x + y]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelDecomposition {
    pub g: Vec<ExpPolyTrig>,
    pub h: Vec<ExpPolyTrig>,
}

/// Grid used to verify the product identity.
const CHECK_GRID: usize = 20;
const CHECK_STEP: f64 = 0.35;
const CHECK_TOL: f64 = 1e-10;

impl KernelDecomposition {
    /// Validates the pairs against `tail` and the integrability conditions
    /// (every `g_i` integrable, every `h_i` bounded on the half line).
    pub fn new(g: Vec<ExpPolyTrig>, h: Vec<ExpPolyTrig>, tail: &ExpPolyTrig) -> Result<Self, DistError> {
        if g.len() != h.len() {
            return Err(DistError::Kernel(format!(
                "{} g-functions but {} h-functions",
                g.len(),
                h.len()
            )));
        }
        if g.is_empty() {
            return Err(DistError::Kernel("empty decomposition".into()));
        }
        for (i, gi) in g.iter().enumerate() {
            if gi.is_zero() {
                continue;
            }
            if let Some(t) = gi.terms().iter().find(|t| t.rate >= 0.0) {
                return Err(DistError::Kernel(format!(
                    "g_{} has rate {} and is not integrable on (0, ∞)",
                    i + 1,
                    t.rate
                )));
            }
        }
        for (i, hi) in h.iter().enumerate() {
            if let Some(t) = hi
                .terms()
                .iter()
                .find(|t| t.rate > 0.0 || (t.rate == 0.0 && t.power > 0))
            {
                return Err(DistError::Kernel(format!(
                    "h_{} contains x^{}·e^({}x) and is unbounded",
                    i + 1,
                    t.power,
                    t.rate
                )));
            }
        }
        let dec = KernelDecomposition { g, h };
        let worst = dec.identity_error(tail);
        if worst > CHECK_TOL {
            return Err(DistError::Kernel(format!(
                "Σ g_i(x)h_i(y) differs from the tail at x+y by {worst:e}"
            )));
        }
        Ok(dec)
    }

    pub fn len(&self) -> usize {
        self.g.len()
    }

    pub fn is_empty(&self) -> bool {
        self.g.is_empty()
    }

    pub fn eval(&self, x: f64, y: f64) -> f64 {
        self.g.iter().zip(&self.h).map(|(g, h)| g.eval(x) * h.eval(y)).sum()
    }

    /// Largest deviation `|Σ g_i(x)h_i(y) - tail(x+y)|` on the check grid.
    pub fn identity_error(&self, tail: &ExpPolyTrig) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..CHECK_GRID {
            for j in 0..CHECK_GRID {
                let (x, y) = (i as f64 * CHECK_STEP, j as f64 * CHECK_STEP);
                worst = worst.max((self.eval(x, y) - tail.eval(x + y)).abs());
            }
        }
        worst
    }
}
