//! Rational Laplace transforms: roots, partial fractions, and inversion to
//! exponential-polynomial-trigonometric densities and tails.
//!
//! Polynomials are stored as coefficient vectors in ascending powers of `s`.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::DistError;
use crate::symfun::{ExpPolyTrig, Term, Trig};

/// Roots whose imaginary part is below this (relative) are taken as real.
const REAL_EPS: f64 = 1e-10;
/// Raw eigenvalues closer than this (relative) are candidates for one
/// repeated root; a cluster is accepted only if it passes the derivative test.
const CLUSTER_EPS: f64 = 1e-4;
/// Final merge threshold on polished roots.
const MERGE_EPS: f64 = 1e-8;

/// One distinct root (or conjugate pair, stored with `im > 0`) of the
/// denominator together with its partial-fraction coefficients
/// `c_1 … c_m` of `1/(s-q)^1 … 1/(s-q)^m`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RootBlock {
    pub re: f64,
    pub im: f64,
    pub multiplicity: usize,
    /// `(re, im)` of each `c_j`, `j = 1..=multiplicity`.
    pub residues: Vec<(f64, f64)>,
}

impl RootBlock {
    pub fn root(&self) -> Complex64 {
        Complex64::new(self.re, self.im)
    }

    pub fn is_real(&self) -> bool {
        self.im == 0.0
    }

    fn residue(&self, j: usize) -> Complex64 {
        let (re, im) = self.residues[j];
        Complex64::new(re, im)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidueExpansion {
    pub blocks: Vec<RootBlock>,
}

impl ResidueExpansion {
    /// Total number of roots counted with multiplicity (conjugates included).
    pub fn degree(&self) -> usize {
        self.blocks
            .iter()
            .map(|b| {
                if b.is_real() {
                    b.multiplicity
                } else {
                    2 * b.multiplicity
                }
            })
            .sum()
    }

    /// Evaluates `Σ c_j / (s - q)^j` (plus conjugates) at complex `s`.
    pub fn eval(&self, s: Complex64) -> Complex64 {
        let mut total = Complex64::new(0.0, 0.0);
        for b in &self.blocks {
            let q = b.root();
            for j in 0..b.multiplicity {
                total += b.residue(j) / (s - q).powu(j as u32 + 1);
                if !b.is_real() {
                    total += b.residue(j).conj() / (s - q.conj()).powu(j as u32 + 1);
                }
            }
        }
        total
    }
}

pub(crate) fn degree(p: &[f64]) -> Option<usize> {
    p.iter().rposition(|&c| c != 0.0)
}

fn horner(p: &[Complex64], s: Complex64) -> Complex64 {
    p.iter().rev().fold(Complex64::new(0.0, 0.0), |acc, &c| acc * s + c)
}

fn derivative(p: &[Complex64]) -> Vec<Complex64> {
    p.iter().enumerate().skip(1).map(|(k, &c)| c * k as f64).collect()
}

/// Coefficients of `p(q + t)` in ascending powers of `t`.
fn taylor_shift(p: &[Complex64], q: Complex64) -> Vec<Complex64> {
    let mut c = p.to_vec();
    let n = c.len();
    // repeated synthetic division by (s - q)
    for i in 0..n {
        for k in (i..n - 1).rev() {
            let upper = c[k + 1];
            c[k] += q * upper;
        }
    }
    c
}

/// Newton iteration on `p` starting at `z`; keeps the best iterate.
fn polish(p: &[Complex64], z: Complex64) -> Complex64 {
    let dp = derivative(p);
    let mut best = z;
    let mut best_res = horner(p, z).norm();
    let mut z = z;
    for _ in 0..50 {
        let d = horner(&dp, z);
        if d.norm() == 0.0 {
            break;
        }
        let step = horner(p, z) / d;
        z -= step;
        let res = horner(p, z).norm();
        if res < best_res {
            best = z;
            best_res = res;
        }
        if step.norm() <= 1e-16 * (1.0 + z.norm()) {
            break;
        }
    }
    best
}

/// Distinct roots with multiplicities, conjugate pairs reduced to the
/// member with positive imaginary part.
pub(crate) fn roots(denom: &[f64]) -> Result<Vec<(Complex64, usize)>, DistError> {
    let n = degree(denom).ok_or(DistError::Degree { numer: 0, denom: 0 })?;
    if n == 0 {
        return Ok(Vec::new());
    }
    let lead = denom[n];
    let mut companion = DMatrix::<f64>::zeros(n, n);
    for i in 1..n {
        companion[(i, i - 1)] = 1.0;
    }
    for i in 0..n {
        companion[(i, n - 1)] = -denom[i] / lead;
    }
    let eig = companion
        .complex_eigenvalues()
        .iter()
        .copied()
        .collect::<Vec<Complex64>>();
    if eig.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(DistError::RootFinding("non-finite eigenvalue".into()));
    }

    let poly: Vec<Complex64> = denom[..=n].iter().map(|&c| Complex64::new(c, 0.0)).collect();

    // cluster raw eigenvalues
    let mut clusters: Vec<Vec<Complex64>> = Vec::new();
    for z in eig {
        match clusters
            .iter_mut()
            .find(|c| c.iter().any(|w| (w - z).norm() <= CLUSTER_EPS * (1.0 + z.norm())))
        {
            Some(c) => c.push(z),
            None => clusters.push(vec![z]),
        }
    }

    let mut out: Vec<(Complex64, usize)> = Vec::new();
    for cluster in clusters {
        let m = cluster.len();
        let mean = cluster.iter().sum::<Complex64>() / m as f64;
        // a root of multiplicity m is a simple root of p^{(m-1)}
        let mut dp = poly.clone();
        for _ in 1..m {
            dp = derivative(&dp);
        }
        let root = polish(&dp, mean);
        let scale: f64 = poly.iter().map(|c| c.norm()).fold(0.0, f64::max);
        let mut dk = poly.clone();
        let mut genuine = true;
        for k in 0..m - 1 {
            let fact: f64 = (1..=k).map(|i| i as f64).product();
            if horner(&dk, root).norm() / fact > 1e-6 * scale {
                genuine = false;
            }
            dk = derivative(&dk);
        }
        if genuine {
            out.push((root, m));
        } else {
            out.extend(cluster.into_iter().map(|z| (polish(&poly, z), 1)));
        }
    }

    // merge polished neighbours and snap near-real roots
    let mut merged: Vec<(Complex64, usize)> = Vec::new();
    for (z, m) in out {
        let z = if z.im.abs() <= REAL_EPS * (1.0 + z.norm()) {
            Complex64::new(z.re, 0.0)
        } else {
            z
        };
        match merged
            .iter_mut()
            .find(|(w, _)| (*w - z).norm() <= MERGE_EPS * (1.0 + z.norm()))
        {
            Some((_, mm)) => *mm += m,
            None => merged.push((z, m)),
        }
    }

    let mut result: Vec<(Complex64, usize)> = merged.into_iter().filter(|(z, _)| z.im >= 0.0).collect();
    result.sort_by(|a, b| b.0.re.total_cmp(&a.0.re).then(a.0.im.total_cmp(&b.0.im)));
    let counted: usize = result.iter().map(|(z, m)| if z.im == 0.0 { *m } else { 2 * m }).sum();
    if counted != n {
        return Err(DistError::RootFinding(format!(
            "recovered {counted} roots of a degree-{n} denominator"
        )));
    }
    Ok(result)
}

/// Partial-fraction expansion of `numer/denom`.
///
/// For a root `q` of multiplicity `m`, `(s-q)^m P(s)/Q(s) = P(s)/D(s)` with
/// `D(q+t) = Q(q+t)/t^m`. Its Taylor coefficients in `t`, obtained by
/// exact power-series division, give `c_j` as the coefficient of `t^{m-j}`.
pub fn residues(numer: &[f64], denom: &[f64]) -> Result<ResidueExpansion, DistError> {
    let dq = degree(denom).ok_or(DistError::Degree { numer: 0, denom: 0 })?;
    let dp = degree(numer).unwrap_or(0);
    if dq == 0 || dp >= dq {
        return Err(DistError::Degree { numer: dp, denom: dq });
    }
    let p: Vec<Complex64> = numer[..=dp].iter().map(|&c| Complex64::new(c, 0.0)).collect();
    let q: Vec<Complex64> = denom[..=dq].iter().map(|&c| Complex64::new(c, 0.0)).collect();

    let mut blocks = Vec::new();
    for (root, m) in roots(denom)? {
        let p_shift = taylor_shift(&p, root);
        let q_shift = taylor_shift(&q, root);
        let d: Vec<Complex64> = q_shift[m..].to_vec();
        if d[0].norm() == 0.0 {
            return Err(DistError::RootFinding("deflated denominator vanishes at root".into()));
        }
        // series of P/D up to t^{m-1}
        let mut series = vec![Complex64::new(0.0, 0.0); m];
        for k in 0..m {
            let mut acc = p_shift.get(k).copied().unwrap_or_default();
            for i in 1..=k.min(d.len() - 1) {
                acc -= d[i] * series[k - i];
            }
            series[k] = acc / d[0];
        }
        let residues = (1..=m)
            .map(|j| {
                let c = series[m - j];
                if root.im == 0.0 {
                    (c.re, 0.0)
                } else {
                    (c.re, c.im)
                }
            })
            .collect();
        blocks.push(RootBlock {
            re: root.re,
            im: root.im,
            multiplicity: m,
            residues,
        });
    }
    Ok(ResidueExpansion { blocks })
}

fn check_stable(exp: &ResidueExpansion) -> Result<(), DistError> {
    match exp.blocks.iter().find(|b| b.re >= 0.0) {
        Some(b) => Err(DistError::UnstableRoot { re: b.re, im: b.im }),
        None => Ok(()),
    }
}

/// Inverse transform: `f(x) = Σ_i Σ_j c^i_j x^{j-1}/(j-1)! e^{q_i x}`, with
/// conjugate pairs folded into real sine/cosine terms.
pub fn density_from_lt(exp: &ResidueExpansion) -> Result<ExpPolyTrig, DistError> {
    check_stable(exp)?;
    let mut terms = Vec::new();
    for b in &exp.blocks {
        let mut fact = 1.0;
        for j in 0..b.multiplicity {
            if j > 0 {
                fact *= j as f64;
            }
            let c = b.residue(j);
            let power = j as u32;
            if b.is_real() {
                terms.push(Term::new(c.re / fact, power, b.re, Trig::None, 0.0));
            } else {
                // c e^{(a+ib)x} + conj = 2 e^{ax} (Re c cos bx - Im c sin bx)
                terms.push(Term::new(2.0 * c.re / fact, power, b.re, Trig::Cos, b.im));
                terms.push(Term::new(-2.0 * c.im / fact, power, b.re, Trig::Sin, b.im));
            }
        }
    }
    let f = ExpPolyTrig::new(terms);
    let grid_min = (0..=400).map(|i| f.eval(i as f64 * 0.05)).fold(f64::INFINITY, f64::min);
    if grid_min < -1e-9 {
        log::warn!("inverted transform is negative ({grid_min:e}) on [0, 20]; not a density");
    }
    Ok(f)
}

/// Tail `1 - F(x) = ∫_x^∞ f` of the inverted transform, in closed form.
pub fn cdf_from_lt(exp: &ResidueExpansion) -> Result<ExpPolyTrig, DistError> {
    let density = density_from_lt(exp)?;
    Ok(density.shifted_tail(0.0)?)
}
