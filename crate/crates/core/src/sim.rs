//! Monte-Carlo simulation of `W_{n+1} = max(0, B_{n+1} - A_n - W_n)`.
//!
//! Replications use independent streams of one ChaCha8 generator and run in
//! parallel; results are gathered in replication order, so a configuration
//! and seed always reproduce the same summary bit for bit. Visits of `W` to
//! zero are regeneration points and give cycle-based confidence intervals.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dists::{Difference, Dist, DistError, DistSpec};

/// Normal quantile used for the reported half-widths (95%).
pub const Z95: f64 = 1.959_963_984_540_054;
pub const DEFAULT_ECDF_POINTS: usize = 201;
const MIN_BURN_IN: usize = 1000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(
        "P[B - A < 0] = {0}: W need not settle (e.g. a period-2 orbit); \
         set allow_nonnegative_x to simulate anyway"
    )]
    StabilityGate(f64),
    #[error("X is deterministic")]
    DeterministicX,
    #[error("precondition failed: {0}")]
    Precondition(String),
    #[error("no complete regeneration cycle was observed")]
    NoCycles,
    #[error(transparent)]
    Dist(#[from] DistError),
}

/// `max(0, b - a - w)`, with an exact zero whenever the argument is not positive.
#[inline]
pub fn step(w: f64, b: f64, a: f64) -> f64 {
    let v = b - a - w;
    if v > 0.0 {
        v
    } else {
        0.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub a: DistSpec,
    pub b: DistSpec,
    pub n_steps: usize,
    #[serde(default = "one")]
    pub n_replications: usize,
    #[serde(default)]
    pub w1: f64,
    /// Defaults to 1% of `n_steps`, at least 1000 (but at most half the run).
    #[serde(default)]
    pub burn_in: Option<usize>,
    #[serde(default)]
    pub seed: u64,
    /// Simulate even when `P[X < 0] = 0`, where `W` may never regenerate.
    #[serde(default)]
    pub allow_nonnegative_x: bool,
    #[serde(default = "default_ecdf_points")]
    pub ecdf_points: usize,
}

fn one() -> usize {
    1
}

fn default_ecdf_points() -> usize {
    DEFAULT_ECDF_POINTS
}

impl SimConfig {
    pub fn new(a: DistSpec, b: DistSpec, n_steps: usize, seed: u64) -> Self {
        SimConfig {
            a,
            b,
            n_steps,
            n_replications: 1,
            w1: 0.0,
            burn_in: None,
            seed,
            allow_nonnegative_x: false,
            ecdf_points: DEFAULT_ECDF_POINTS,
        }
    }

    pub fn effective_burn_in(&self) -> usize {
        self.burn_in
            .unwrap_or_else(|| (self.n_steps / 100).max(MIN_BURN_IN).min(self.n_steps / 2))
    }

    fn validate(&self) -> Result<(), SimError> {
        if self.n_steps == 0 || self.n_replications == 0 {
            return Err(SimError::Config("n_steps and n_replications must be positive".into()));
        }
        if !(self.w1.is_finite() && self.w1 >= 0.0) {
            return Err(SimError::Config(format!("initial waiting time {}", self.w1)));
        }
        if self.effective_burn_in() >= self.n_steps {
            return Err(SimError::Config(format!(
                "burn-in {} is not below n_steps {}",
                self.effective_burn_in(),
                self.n_steps
            )));
        }
        if self.ecdf_points < 2 {
            return Err(SimError::Config("ecdf needs at least two points".into()));
        }
        Ok(())
    }
}

/// Generator for replication `stream` of a run seeded with `seed`.
pub fn replication_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Post-burn-in waiting times of one replication.
pub fn simulate_path(
    a: &Dist,
    b: &Dist,
    w1: f64,
    n_steps: usize,
    burn_in: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<f64>, SimError> {
    let mut out = Vec::with_capacity(n_steps - burn_in);
    let mut w = w1;
    for n in 1..=n_steps {
        if n > burn_in {
            out.push(w);
        }
        if n < n_steps {
            let an = a.sample(rng)?;
            let bn = b.sample(rng)?;
            w = step(w, bn, an);
        }
    }
    Ok(out)
}

/// A ratio estimate `ΣY/ΣL` over regeneration cycles with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RatioEstimate {
    pub value: f64,
    pub std_error: f64,
    pub half_width: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalSummary {
    pub config: SimConfig,
    pub burn_in: usize,
    pub n_samples: usize,
    /// `(x, F̂_W(x))` on an even grid from 0 to the largest sample.
    pub ecdf: Vec<(f64, f64)>,
    pub pi0_hat: f64,
    pub pi0: RatioEstimate,
    pub mean_w: RatioEstimate,
    /// Steps between successive visits to zero, pooled over replications.
    pub cycle_lengths: Vec<u64>,
    pub replications: usize,
    pub seed: u64,
    /// Stream index of each replication's generator.
    pub replication_streams: Vec<u64>,
    #[serde(skip)]
    pub sorted_samples: Vec<f64>,
}

impl EmpiricalSummary {
    /// `F̂_W(x)`, or `None` when the samples were not retained.
    pub fn ecdf_at(&self, x: f64) -> Option<f64> {
        if self.sorted_samples.is_empty() {
            return None;
        }
        let k = self.sorted_samples.partition_point(|&s| s <= x);
        Some(k as f64 / self.sorted_samples.len() as f64)
    }

    /// Kolmogorov distance to a law with an atom at zero and a continuous
    /// part elsewhere.
    pub fn ks_distance(&self, cdf: impl Fn(f64) -> f64) -> f64 {
        ks_distance_sorted(&self.sorted_samples, cdf)
    }

    pub fn ecdf_csv(&self) -> String {
        let mut out = String::from("x,F\n");
        for (x, f) in &self.ecdf {
            out.push_str(&format!("{x:.16e},{f:.16e}\n"));
        }
        out
    }
}

pub fn ks_distance_sorted(sorted: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let n = sorted.len() as f64;
    let mut worst: f64 = 0.0;
    let mut i = 0;
    while i < sorted.len() {
        let v = sorted[i];
        let mut j = i;
        while j < sorted.len() && sorted[j] == v {
            j += 1;
        }
        let left = if v <= 0.0 { 0.0 } else { cdf(v) };
        let f = cdf(v);
        worst = worst.max((i as f64 / n - left).abs()).max((j as f64 / n - f).abs());
        i = j;
    }
    worst
}

/// Two-sample Kolmogorov–Smirnov statistic of sorted samples.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> f64 {
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut worst: f64 = 0.0;
    while i < a.len() && j < b.len() {
        let v = a[i].min(b[j]);
        while i < a.len() && a[i] <= v {
            i += 1;
        }
        while j < b.len() && b[j] <= v {
            j += 1;
        }
        worst = worst.max((i as f64 / na - j as f64 / nb).abs());
    }
    worst
}

/// `(length, Σ W)` of each complete regeneration cycle of a path.
fn cycles(path: &[f64]) -> Vec<(u64, f64)> {
    let zeros: Vec<usize> = path
        .iter()
        .enumerate()
        .filter(|(_, &w)| w == 0.0)
        .map(|(i, _)| i)
        .collect();
    zeros
        .windows(2)
        .map(|z| ((z[1] - z[0]) as u64, path[z[0]..z[1]].iter().sum()))
        .collect()
}

/// Ratio estimator `ΣY/ΣL` with the usual delta-method standard error.
fn ratio(y: &[f64], l: &[f64]) -> RatioEstimate {
    let k = y.len() as f64;
    let sy: f64 = y.iter().sum();
    let sl: f64 = l.iter().sum();
    let r = sy / sl;
    let se = if y.len() > 1 {
        let var: f64 = y.iter().zip(l).map(|(yi, li)| (yi - r * li).powi(2)).sum::<f64>() / (k - 1.0);
        let lbar = sl / k;
        (var / k).sqrt() / lbar
    } else {
        f64::INFINITY
    };
    RatioEstimate {
        value: r,
        std_error: se,
        half_width: Z95 * se,
    }
}

pub fn simulate(config: &SimConfig) -> Result<EmpiricalSummary, SimError> {
    config.validate()?;
    let a = config.a.compile()?;
    let b = config.b.compile()?;
    if !config.allow_nonnegative_x {
        let p_neg = Difference::new(a.clone(), b.clone())?.prob_negative()?;
        if p_neg <= 0.0 {
            return Err(SimError::StabilityGate(p_neg));
        }
    }
    let burn_in = config.effective_burn_in();
    let streams: Vec<u64> = (0..config.n_replications as u64).collect();
    let paths = streams
        .par_iter()
        .map(|&s| {
            let mut rng = replication_rng(config.seed, s);
            simulate_path(&a, &b, config.w1, config.n_steps, burn_in, &mut rng)
        })
        .collect::<Result<Vec<_>, _>>()?;

    let mut cycle_lengths = Vec::new();
    let mut ys_zero = Vec::new();
    let mut ys_sum = Vec::new();
    let mut ls = Vec::new();
    for path in &paths {
        for (len, sum) in cycles(path) {
            cycle_lengths.push(len);
            ys_zero.push(1.0);
            ys_sum.push(sum);
            ls.push(len as f64);
        }
    }

    let mut sorted: Vec<f64> = paths.into_iter().flatten().collect();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let zeros = sorted.partition_point(|&w| w <= 0.0);
    let pi0_hat = zeros as f64 / n as f64;
    let mean_all = sorted.iter().sum::<f64>() / n as f64;

    let (pi0, mean_w) = if ls.is_empty() {
        let none = |v| RatioEstimate {
            value: v,
            std_error: f64::INFINITY,
            half_width: f64::INFINITY,
        };
        (none(pi0_hat), none(mean_all))
    } else {
        let mut pi0 = ratio(&ys_zero, &ls);
        let mut mean_w = ratio(&ys_sum, &ls);
        // report the all-sample point estimates with the cycle-based errors
        pi0.value = pi0_hat;
        mean_w.value = mean_all;
        (pi0, mean_w)
    };

    let x_hi = sorted[n - 1];
    let m = config.ecdf_points;
    let ecdf = (0..m)
        .map(|i| {
            let x = if x_hi > 0.0 {
                x_hi * i as f64 / (m - 1) as f64
            } else {
                i as f64 / (m - 1) as f64
            };
            let x = if i + 1 == m && x_hi > 0.0 { x_hi } else { x };
            (x, sorted.partition_point(|&s| s <= x) as f64 / n as f64)
        })
        .collect();

    Ok(EmpiricalSummary {
        config: config.clone(),
        burn_in,
        n_samples: n,
        ecdf,
        pi0_hat,
        pi0,
        mean_w,
        cycle_lengths,
        replications: config.n_replications,
        seed: config.seed,
        replication_streams: streams,
        sorted_samples: sorted,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CycleBoundRow {
    pub n: u32,
    pub empirical: f64,
    pub bound: f64,
    pub slack: f64,
    pub violated: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CycleBoundReport {
    pub p_x_pos: f64,
    pub n_cycles: usize,
    pub rows: Vec<CycleBoundRow>,
    pub violations: Vec<u32>,
}

pub const CYCLE_BOUND_RANGE: std::ops::RangeInclusive<u32> = 1..=10;

/// Compares `P̂[cycle > n]` with `P[X > 0]^n` plus three binomial standard
/// errors for `n = 1, …, 10`.
pub fn cycle_bound_check(summary: &EmpiricalSummary, p_x_pos: f64) -> Result<CycleBoundReport, SimError> {
    let k = summary.cycle_lengths.len();
    if k == 0 {
        return Err(SimError::NoCycles);
    }
    let mut rows = Vec::new();
    let mut violations = Vec::new();
    for n in CYCLE_BOUND_RANGE {
        let exceed = summary.cycle_lengths.iter().filter(|&&l| l > n as u64).count();
        let p = exceed as f64 / k as f64;
        let slack = 3.0 * (p * (1.0 - p) / k as f64).sqrt();
        let bound = p_x_pos.powi(n as i32);
        let violated = p > bound + slack;
        if violated {
            violations.push(n);
        }
        rows.push(CycleBoundRow {
            n,
            empirical: p,
            bound,
            slack,
            violated,
        });
    }
    Ok(CycleBoundReport {
        p_x_pos,
        n_cycles: k,
        rows,
        violations,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HittingProbeConfig {
    pub x: DistSpec,
    pub epsilon: f64,
    pub n: usize,
    pub replications: usize,
    pub seed: u64,
    /// Largest `k` in the tail curve.
    pub k_max: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HittingProbeReport {
    pub epsilon: f64,
    pub n: usize,
    /// `P[X ≥ (n+1)ε]^n · P[X ≤ nε]^{n+1}`.
    pub q: f64,
    /// Fraction of inspected windows on which the event occurred.
    pub q_hat: f64,
    pub replications: usize,
    /// `k = 0, …, k_max`.
    pub k: Vec<usize>,
    /// `P̂[τ ≥ (2n+1)k]`.
    pub tail: Vec<f64>,
    /// `(2n+1)(1-q)^k`, capped at 1.
    pub bound: Vec<f64>,
    pub slack: Vec<f64>,
    pub tail_violations: Vec<usize>,
    pub occurrences: u64,
    /// Occurrences at which `W` was not zero `2n` steps later.
    pub pathwise_failures: u64,
    pub pass: bool,
}

/// Probes the hitting time of the window event
/// `{X_i ≤ nε, X_{i+1} ≥ (n+1)ε, …, X_{i+2n} ≤ nε}` for nonnegative `X`.
/// Index `i` runs from 2; `W` is simulated alongside to confirm that
/// `W_{i+2n} = 0` whenever the event occurs.
pub fn hitting_probe(cfg: &HittingProbeConfig) -> Result<HittingProbeReport, SimError> {
    let x = cfg.x.compile()?;
    if x.is_deterministic() {
        return Err(SimError::DeterministicX);
    }
    if !(cfg.epsilon > 0.0 && cfg.epsilon.is_finite()) || cfg.n == 0 || cfg.replications == 0 || cfg.k_max == 0 {
        return Err(SimError::Config("ε, n, replications and k_max must be positive".into()));
    }
    let (n, eps) = (cfg.n, cfg.epsilon);
    let lo_level = n as f64 * eps;
    let hi_level = (n + 1) as f64 * eps;
    let p_hi = 1.0 - x.prob_less(hi_level);
    let p_lo = x.cdf(lo_level);
    if p_hi <= 0.0 || p_lo <= 0.0 {
        return Err(SimError::Precondition(format!(
            "P[X ≥ {hi_level}] = {p_hi}, P[X ≤ {lo_level}] = {p_lo}"
        )));
    }
    let q = p_hi.powi(n as i32) * p_lo.powi(n as i32 + 1);
    let span = 2 * n + 1;
    // need X_ℓ for ℓ up to (2n+1)k_max - 1 + 2n
    let last = span * cfg.k_max + 2 * n;

    struct Rep {
        tau: Option<usize>,
        windows: u64,
        occurrences: u64,
        failures: u64,
    }
    let reps = (0..cfg.replications as u64)
        .into_par_iter()
        .map(|s| {
            let mut rng = replication_rng(cfg.seed, s);
            // xs[ℓ] = X_ℓ, ws[ℓ] = W_ℓ with W_1 = 0
            let mut xs = vec![0.0; last + 1];
            let mut ws = vec![0.0; last + 1];
            for l in 2..=last {
                xs[l] = x.sample(&mut rng)?;
                ws[l] = step(ws[l - 1], xs[l], 0.0);
            }
            let mut r = Rep {
                tau: None,
                windows: 0,
                occurrences: 0,
                failures: 0,
            };
            for i in 2..=last - 2 * n {
                r.windows += 1;
                let hit = (0..=2 * n).all(|j| {
                    if j % 2 == 0 {
                        xs[i + j] <= lo_level
                    } else {
                        xs[i + j] >= hi_level
                    }
                });
                if hit {
                    r.occurrences += 1;
                    r.tau.get_or_insert(i);
                    if ws[i + 2 * n] != 0.0 {
                        r.failures += 1;
                    }
                }
            }
            Ok(r)
        })
        .collect::<Result<Vec<Rep>, SimError>>()?;

    let total = cfg.replications as f64;
    let mut report = HittingProbeReport {
        epsilon: eps,
        n,
        q,
        q_hat: reps.iter().map(|r| r.occurrences).sum::<u64>() as f64
            / reps.iter().map(|r| r.windows).sum::<u64>() as f64,
        replications: cfg.replications,
        k: (0..=cfg.k_max).collect(),
        tail: Vec::new(),
        bound: Vec::new(),
        slack: Vec::new(),
        tail_violations: Vec::new(),
        occurrences: reps.iter().map(|r| r.occurrences).sum(),
        pathwise_failures: reps.iter().map(|r| r.failures).sum(),
        pass: false,
    };
    for k in 0..=cfg.k_max {
        let threshold = span * k;
        let count = reps.iter().filter(|r| r.tau.is_none_or(|t| t >= threshold)).count();
        let p = count as f64 / total;
        let bound = (span as f64 * (1.0 - q).powi(k as i32)).min(1.0);
        let slack = 3.0 * (p * (1.0 - p) / total).sqrt();
        if p > bound + slack {
            report.tail_violations.push(k);
        }
        report.tail.push(p);
        report.bound.push(bound);
        report.slack.push(slack);
    }
    report.pass = report.tail_violations.is_empty() && report.pathwise_failures == 0;
    Ok(report)
}
