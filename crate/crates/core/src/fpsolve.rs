//! Grid iteration of `(TF)(x) = 1 - ∫_x^∞ F(y - x) dF_X(y)`.
//!
//! `T` is a sup-norm contraction with factor `ρ = P[X > 0]`, so successive
//! iterates converge geometrically to the distribution function of `W`.
//! Only `x ≥ 0` is represented: `F(x) = 0` below zero, and `(TF)(x)` for
//! `x ≥ 0` involves `F` and the tail of `X` on `[0, ∞)` only.

use rayon::prelude::*;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dists::{Difference, DistError, DistSpec};

pub const DEFAULT_TOL: f64 = 1e-8;
pub const MAX_ITERATIONS: usize = 10_000;
/// `x_max` is the first point where `P[X > x]` drops below this.
pub const TRUNCATION_MASS: f64 = 1e-9;
const X_MAX_MEAN_CAP: f64 = 50.0;
/// Above this many nodes the correlation in `map_t` goes through an FFT.
const FFT_THRESHOLD: usize = 256;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FpError {
    #[error("invalid grid: {0}")]
    Grid(String),
    #[error("grid mismatch: {0} vs {1} nodes")]
    GridMismatch(usize, usize),
    #[error("P[X > 0] = {0} ≥ 1: T is not a contraction; use the simulator instead")]
    NonContraction(f64),
    #[error("no convergence after {iterations} iterations (last step {last_step:e})")]
    NoConvergence { iterations: usize, last_step: f64 },
    #[error("the two functions coincide")]
    ZeroDenominator,
    #[error("tolerance must be positive, got {0}")]
    Tolerance(f64),
    #[error(transparent)]
    Dist(#[from] DistError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub x_max: f64,
    pub n_points: usize,
}

impl Grid {
    pub fn new(x_max: f64, n_points: usize) -> Result<Self, FpError> {
        if !(x_max.is_finite() && x_max > 0.0) {
            return Err(FpError::Grid(format!("x_max = {x_max}")));
        }
        if n_points < 2 {
            return Err(FpError::Grid(format!("{n_points} nodes")));
        }
        Ok(Grid { x_max, n_points })
    }

    pub fn h(&self) -> f64 {
        self.x_max / (self.n_points - 1) as f64
    }

    pub fn node(&self, i: usize) -> f64 {
        if i + 1 == self.n_points {
            self.x_max
        } else {
            i as f64 * self.h()
        }
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.n_points).map(|i| self.node(i)).collect()
    }
}

/// A function sampled on a [`Grid`], linearly interpolated between nodes and
/// held constant beyond `x_max`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridFun {
    pub grid: Grid,
    pub values: Vec<f64>,
}

impl GridFun {
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self, FpError> {
        if values.len() != grid.n_points {
            return Err(FpError::GridMismatch(grid.n_points, values.len()));
        }
        Ok(GridFun { grid, values })
    }

    pub fn constant(grid: Grid, c: f64) -> Self {
        GridFun {
            grid,
            values: vec![c; grid.n_points],
        }
    }

    pub fn from_fn(grid: Grid, f: impl Fn(f64) -> f64) -> Self {
        GridFun {
            grid,
            values: grid.nodes().into_iter().map(f).collect(),
        }
    }

    pub fn eval(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return self.values[0];
        }
        let h = self.grid.h();
        let pos = x / h;
        let i = pos.floor() as usize;
        if i + 1 >= self.grid.n_points {
            return self.values[self.grid.n_points - 1];
        }
        let w = pos - i as f64;
        self.values[i] * (1.0 - w) + self.values[i + 1] * w
    }

    pub fn sup_distance(&self, other: &GridFun) -> Result<f64, FpError> {
        check_grids(&self.grid, &other.grid)?;
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max))
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("x,F\n");
        for (x, v) in self.grid.nodes().iter().zip(&self.values) {
            out.push_str(&format!("{x:.16e},{v:.16e}\n"));
        }
        out
    }
}

fn check_grids(a: &Grid, b: &Grid) -> Result<(), FpError> {
    if a.n_points != b.n_points || (a.x_max - b.x_max).abs() > 1e-12 * a.x_max {
        return Err(FpError::GridMismatch(a.n_points, b.n_points));
    }
    Ok(())
}

/// `P[X > x]` at the grid nodes and the contraction factor `ρ = P[X > 0]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct XRep {
    pub grid: Grid,
    pub tail: Vec<f64>,
    pub rho: f64,
}

impl XRep {
    pub fn from_tail(grid: Grid, tail: Vec<f64>) -> Result<Self, FpError> {
        if tail.len() != grid.n_points {
            return Err(FpError::GridMismatch(grid.n_points, tail.len()));
        }
        // enforce monotonicity against round-off in the quadrature route
        let mut tail = tail;
        for i in 1..tail.len() {
            tail[i] = tail[i].min(tail[i - 1]).max(0.0);
        }
        let rho = tail[0];
        Ok(XRep { grid, tail, rho })
    }
}

/// Smallest `x` with `P[X > x] < 1e-9`, capped at 50 times the mean of `B`.
pub fn default_x_max(a: &DistSpec, b: &DistSpec) -> Result<f64, FpError> {
    let diff = Difference::new(a.compile()?, b.compile()?)?;
    let mean_b = diff.b().mean();
    let cap = if mean_b > 0.0 { X_MAX_MEAN_CAP * mean_b } else { 1.0 };
    if diff.tail(0.0)? < TRUNCATION_MASS {
        return Ok(cap.min(1.0));
    }
    let mut hi = cap.clamp(1e-3, 1.0);
    while diff.tail(hi)? >= TRUNCATION_MASS {
        if hi >= cap {
            return Ok(cap);
        }
        hi = (2.0 * hi).min(cap);
    }
    let mut lo = 0.0;
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if diff.tail(mid)? < TRUNCATION_MASS {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

pub fn build_x_rep(a: &DistSpec, b: &DistSpec, grid: Grid) -> Result<XRep, FpError> {
    let diff = Difference::new(a.compile()?, b.compile()?)?;
    let tail = grid
        .nodes()
        .par_iter()
        .map(|&x| diff.tail(x))
        .collect::<Result<Vec<_>, _>>()?;
    let mut rep = XRep::from_tail(grid, tail)?;
    // the mass at 0⁺: the tail is right-continuous, so tail(0) = P[X > 0]
    rep.rho = rep.tail[0];
    Ok(rep)
}

/// One application of `T`. The mass of `X` on each cell
/// `(x_{i+j}, x_{i+j+1}]` is the tail difference; `F` is taken at the cell
/// midpoint. Mass beyond `x_max` meets `F` at its lower end.
pub fn map_t(f: &GridFun, x: &XRep) -> Result<GridFun, FpError> {
    check_grids(&f.grid, &x.grid)?;
    let n = f.grid.n_points;
    let corr = if n > FFT_THRESHOLD {
        correlate_fft(f, x)
    } else {
        correlate_direct(f, x)
    };
    let last = x.tail[n - 1];
    let values = (0..n)
        .map(|i| {
            let v = 1.0 - corr[i] - last * f.values[n - 1 - i];
            if v.is_finite() {
                v
            } else {
                v.clamp(-f64::MAX, f64::MAX)
            }
        })
        .collect();
    Ok(GridFun { grid: f.grid, values })
}

/// `S_i = Σ_j d_{i+j} m_j` with cell masses `d` and midpoint values `m`.
fn cells(f: &GridFun, x: &XRep) -> (Vec<f64>, Vec<f64>) {
    let d: Vec<f64> = x.tail.windows(2).map(|w| w[0] - w[1]).collect();
    let m: Vec<f64> = f.values.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
    (d, m)
}

pub(crate) fn correlate_direct(f: &GridFun, x: &XRep) -> Vec<f64> {
    let (d, m) = cells(f, x);
    let c = d.len();
    (0..=c)
        .into_par_iter()
        .map(|i| (0..c - i.min(c)).map(|j| d[i + j] * m[j]).sum())
        .collect()
}

pub(crate) fn correlate_fft(f: &GridFun, x: &XRep) -> Vec<f64> {
    let (d, m) = cells(f, x);
    let c = d.len();
    let len = (2 * c).next_power_of_two().max(2);
    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(len);
    let inv = planner.plan_fft_inverse(len);
    let mut pd: Vec<Complex<f64>> = (0..len)
        .map(|k| Complex::new(if k < c { d[k] } else { 0.0 }, 0.0))
        .collect();
    // reversed midpoint values turn correlation into convolution
    let mut pm: Vec<Complex<f64>> = (0..len)
        .map(|k| Complex::new(if k < c { m[c - 1 - k] } else { 0.0 }, 0.0))
        .collect();
    fwd.process(&mut pd);
    fwd.process(&mut pm);
    for (a, b) in pd.iter_mut().zip(&pm) {
        *a *= b;
    }
    inv.process(&mut pd);
    let scale = 1.0 / len as f64;
    let mut out: Vec<f64> = (0..c).map(|i| pd[i + c - 1].re * scale).collect();
    out.push(0.0);
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub step: f64,
    pub a_priori_bound: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixedPoint {
    pub f: GridFun,
    pub iterations: usize,
    /// `ρ^k ‖f₁ - f₀‖ / (1 - ρ)`.
    pub error_bound: f64,
    /// `ρ ‖f_k - f_{k-1}‖ / (1 - ρ)`.
    pub a_posteriori_bound: f64,
    pub log: Vec<IterationRecord>,
}

/// Iterates `T` from `f0` until the successive step is at most
/// `tol (1 - ρ)/ρ`, which bounds the distance to the fixed point by `tol`.
pub fn solve(x: &XRep, f0: &GridFun, tol: f64) -> Result<FixedPoint, FpError> {
    if !(tol > 0.0 && tol.is_finite()) {
        return Err(FpError::Tolerance(tol));
    }
    let rho = x.rho;
    if rho >= 1.0 {
        return Err(FpError::NonContraction(rho));
    }
    let threshold = if rho > 0.0 {
        tol * (1.0 - rho) / rho
    } else {
        f64::INFINITY
    };
    let mut f = f0.clone();
    let mut first_step = None;
    let mut log = Vec::new();
    for k in 1..=MAX_ITERATIONS {
        let next = map_t(&f, x)?;
        let step = next.sup_distance(&f)?;
        let d1 = *first_step.get_or_insert(step);
        let a_priori = rho.powi(k as i32) * d1 / (1.0 - rho);
        log.push(IterationRecord {
            iteration: k,
            step,
            a_priori_bound: a_priori,
        });
        f = next;
        if step <= threshold {
            log::debug!("fixed point after {k} iterations, step {step:e}");
            return Ok(FixedPoint {
                f,
                iterations: k,
                error_bound: a_priori,
                a_posteriori_bound: rho * step / (1.0 - rho),
                log,
            });
        }
    }
    Err(FpError::NoConvergence {
        iterations: MAX_ITERATIONS,
        last_step: log.last().map_or(f64::NAN, |r| r.step),
    })
}

/// `‖T f₁ - T f₂‖ / ‖f₁ - f₂‖`, never above `ρ` for the discretized `T`.
pub fn contraction_check(f1: &GridFun, f2: &GridFun, x: &XRep) -> Result<f64, FpError> {
    let den = f1.sup_distance(f2)?;
    if den == 0.0 {
        return Err(FpError::ZeroDenominator);
    }
    Ok(map_t(f1, x)?.sup_distance(&map_t(f2, x)?)? / den)
}
