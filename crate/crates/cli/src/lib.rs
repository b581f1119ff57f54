//! Batch front end: one JSON config in, a JSON report and plot-ready CSV
//! curves out.

pub mod config;

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;
use std::time::Instant;

use anyhow::Context;
use lindley_core::fpsolve::{self, build_x_rep, default_x_max, map_t, FixedPoint, Grid, GridFun};
use lindley_core::sim::{cycle_bound_check, hitting_probe, simulate, EmpiricalSummary, HittingProbeConfig, SimConfig};
use lindley_core::tails::{
    self, breiman_check, classify, default_probes, rapidvar_check, regvar_check, weibull_x_tail_check, TailRegime,
    WaitingLaw,
};
use lindley_core::{closed_form, x_tail, ClosedFormW, DistSpec};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

pub use config::{Command, RunConfig};

/// Grids beyond this many nodes are refused rather than allocated.
const MAX_GRID_POINTS: usize = 20_000_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairDistance {
    pub first: String,
    pub second: String,
    pub sup_distance: f64,
    pub threshold: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub command: Command,
    pub config: RunConfig,
    pub engines: BTreeMap<String, Value>,
    /// Engines that could not run, with the reason.
    pub excluded: BTreeMap<String, String>,
    pub cross_validation: Vec<PairDistance>,
    pub checks: Vec<Check>,
    pub failures: Vec<String>,
    pub pass: bool,
    pub timings_ms: BTreeMap<String, f64>,
}

impl Report {
    fn new(command: Command, config: &RunConfig) -> Self {
        Report {
            command,
            config: config.clone(),
            engines: BTreeMap::new(),
            excluded: BTreeMap::new(),
            cross_validation: Vec::new(),
            checks: Vec::new(),
            failures: Vec::new(),
            pass: false,
            timings_ms: BTreeMap::new(),
        }
    }

    fn check(&mut self, name: &str, pass: bool, detail: impl Into<String>) {
        self.checks.push(Check {
            name: name.into(),
            pass,
            detail: detail.into(),
        });
    }

    fn finish(&mut self) {
        self.failures = self.checks.iter().filter(|c| !c.pass).map(|c| c.name.clone()).collect();
        self.pass = self.failures.is_empty();
    }

    /// Pretty JSON with sorted keys. Non-finite numbers become `null`.
    pub fn to_json(&self) -> String {
        let value = serde_json::to_value(self).expect("report is serializable");
        let mut s = serde_json::to_string_pretty(&value).expect("value is serializable");
        s.push('\n');
        s
    }
}

/// A report plus the CSV files that accompany it.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub report: Report,
    pub files: Vec<(String, String)>,
}

fn timed<T>(report: &mut Report, name: &str, f: impl FnOnce() -> T) -> T {
    let start = Instant::now();
    let out = f();
    report
        .timings_ms
        .insert(name.into(), start.elapsed().as_secs_f64() * 1e3);
    out
}

fn sim_config(cfg: &RunConfig) -> SimConfig {
    let p = &cfg.simulate;
    SimConfig {
        a: cfg.a.clone(),
        b: cfg.b.clone(),
        n_steps: p.n_steps,
        n_replications: p.n_replications,
        w1: p.w1,
        burn_in: p.burn_in,
        seed: p.seed,
        allow_nonnegative_x: p.allow_nonnegative_x,
        ecdf_points: p.ecdf_points,
    }
}

/// The summary without the raw cycle list, which is replaced by a histogram.
fn summary_json(s: &EmpiricalSummary) -> Value {
    let mut hist: BTreeMap<u64, u64> = BTreeMap::new();
    for &l in &s.cycle_lengths {
        *hist.entry(l).or_default() += 1;
    }
    let mut v = serde_json::to_value(s).expect("summary is serializable");
    let obj = v.as_object_mut().expect("object");
    obj.remove("cycle_lengths");
    obj.remove("config");
    obj.insert("n_cycles".into(), json!(s.cycle_lengths.len()));
    obj.insert(
        "cycle_length_histogram".into(),
        json!(hist.into_iter().map(|(l, c)| [l, c]).collect::<Vec<_>>()),
    );
    v
}

fn curve_csv(points: &[(f64, f64)], header: &str) -> String {
    let mut out = format!("{header}\n");
    for (x, y) in points {
        out.push_str(&format!("{x:.16e},{y:.16e}\n"));
    }
    out
}

fn theorem_engine(cfg: &RunConfig) -> anyhow::Result<(Value, ClosedFormW)> {
    let (sys, sol, w) = closed_form(&cfg.a, &cfg.b)?;
    let value = json!({
        "pi0": sol.pi0,
        "c": sol.c,
        "rank": sol.rank,
        "residual_norm": sol.residual_norm,
        "condition_number": sol.condition_number,
        "sigma": { "matrix": sys.matrix, "rhs": sys.rhs },
        "kernel_pairs": sys.kernel.len(),
        "complement": w.complement,
        "density": w.density,
    });
    Ok((value, w))
}

fn fpsolve_grid(cfg: &RunConfig) -> anyhow::Result<Grid> {
    let x_max = match cfg.iterate.x_max {
        Some(x) => x,
        None => default_x_max(&cfg.a, &cfg.b)?,
    };
    let n = (x_max / cfg.iterate.h).ceil() as usize + 1;
    if n > MAX_GRID_POINTS {
        anyhow::bail!("grid of {n} points requested (x_max {x_max}, h {})", cfg.iterate.h);
    }
    Ok(Grid::new((n - 1) as f64 * cfg.iterate.h, n.max(2))?)
}

fn fpsolve_engine(cfg: &RunConfig) -> anyhow::Result<(Value, FixedPoint, f64)> {
    let grid = fpsolve_grid(cfg)?;
    let x = build_x_rep(&cfg.a, &cfg.b, grid)?;
    let fp = fpsolve::solve(&x, &GridFun::constant(grid, 0.0), cfg.iterate.tol)?;
    let residual = map_t(&fp.f, &x)?.sup_distance(&fp.f)?;
    let value = json!({
        "x_max": grid.x_max,
        "n_points": grid.n_points,
        "h": grid.h(),
        "rho": x.rho,
        "tol": cfg.iterate.tol,
        "iterations": fp.iterations,
        "error_bound": fp.error_bound,
        "a_posteriori_bound": fp.a_posteriori_bound,
        "fixed_point_residual": residual,
        "f_at_zero": fp.f.values[0],
        "log": fp.log,
    });
    Ok((value, fp, residual))
}

pub fn run(command: Command, cfg: &RunConfig) -> Outcome {
    let mut report = Report::new(command, cfg);
    let mut files = Vec::new();
    match command {
        Command::Solve => run_solve(cfg, &mut report, &mut files),
        Command::Iterate => run_iterate(cfg, &mut report, &mut files),
        Command::Simulate => run_simulate(cfg, &mut report, &mut files),
        Command::Tail => run_tail(cfg, &mut report, &mut files),
        Command::Compare => run_compare(cfg, &mut report, &mut files),
    }
    report.finish();
    Outcome { report, files }
}

fn run_solve(cfg: &RunConfig, report: &mut Report, files: &mut Vec<(String, String)>) {
    match timed(report, "theorem", || theorem_engine(cfg)) {
        Ok((value, w)) => {
            report.engines.insert("theorem".into(), value);
            let grid = Grid::new(cfg.solve.curve_x_max, cfg.solve.curve_points).expect("validated grid");
            let curve = GridFun::from_fn(grid, |x| w.cdf(x));
            let gap = (w.cdf(0.0) - w.pi0).abs();
            report.check("cdf_at_zero_is_pi0", gap <= 1e-10, format!("|F_W(0) - π₀| = {gap:e}"));
            let monotone = curve.values.windows(2).all(|p| p[1] >= p[0] - 1e-12);
            report.check("curve_monotone", monotone, "F_W nondecreasing on the output grid");
            files.push(("fw_curve.csv".into(), curve.to_csv()));
            report.check("theorem", true, format!("π₀ = {}", w.pi0));
        }
        Err(e) => report.check("theorem", false, e.to_string()),
    }
}

fn run_iterate(cfg: &RunConfig, report: &mut Report, files: &mut Vec<(String, String)>) {
    match timed(report, "fpsolve", || fpsolve_engine(cfg)) {
        Ok((value, fp, residual)) => {
            report.engines.insert("fpsolve".into(), value);
            let tol = cfg.iterate.tol;
            report.check(
                "fixed_point_residual",
                residual <= 2.0 * tol,
                format!("‖TF − F‖ = {residual:e} (limit {:e})", 2.0 * tol),
            );
            report.check("fpsolve", true, format!("{} iterations", fp.iterations));
            files.push(("fw_curve.csv".into(), fp.f.to_csv()));
        }
        Err(e) => report.check("fpsolve", false, e.to_string()),
    }
}

fn run_simulate(cfg: &RunConfig, report: &mut Report, files: &mut Vec<(String, String)>) {
    let sc = sim_config(cfg);
    match timed(report, "simulation", || simulate(&sc)) {
        Ok(summary) => {
            report.engines.insert("simulation".into(), summary_json(&summary));
            files.push(("ecdf.csv".into(), summary.ecdf_csv()));
            files.push(("fw_curve.csv".into(), summary.ecdf_csv()));
            report.check("simulation", true, format!("π̂₀ = {}", summary.pi0_hat));
            match x_tail(&cfg.a, &cfg.b, 0.0) {
                Ok(p) => match cycle_bound_check(&summary, p) {
                    Ok(cb) => {
                        report.check(
                            "cycle_bound",
                            cb.violations.is_empty(),
                            format!("P[X>0] = {p}; violations at n = {:?}", cb.violations),
                        );
                        report
                            .engines
                            .insert("cycle_bound".into(), serde_json::to_value(&cb).expect("serializable"));
                    }
                    Err(e) => report.check("cycle_bound", false, e.to_string()),
                },
                Err(e) => report.check("cycle_bound", false, e.to_string()),
            }
        }
        Err(e) => report.check("simulation", false, e.to_string()),
    }
    if let Some(h) = &cfg.simulate.hitting {
        let hc = HittingProbeConfig {
            x: h.x.clone(),
            epsilon: h.epsilon,
            n: h.n,
            replications: h.replications,
            seed: cfg.simulate.seed,
            k_max: h.k_max,
        };
        match timed(report, "hitting_probe", || hitting_probe(&hc)) {
            Ok(r) => {
                report.check(
                    "hitting_probe",
                    r.pass,
                    format!(
                        "q = {}; tail violations at k = {:?}; {} of {} occurrences without a zero",
                        r.q, r.tail_violations, r.pathwise_failures, r.occurrences
                    ),
                );
                report
                    .engines
                    .insert("hitting_probe".into(), serde_json::to_value(&r).expect("serializable"));
            }
            Err(e) => report.check("hitting_probe", false, e.to_string()),
        }
    }
}

fn probes_for(cfg: &RunConfig) -> anyhow::Result<Vec<f64>> {
    Ok(match &cfg.tail.probes {
        Some(p) => p.clone(),
        None => default_probes(&cfg.a, &cfg.b, cfg.tail.probe_count)?,
    })
}

fn run_tail(cfg: &RunConfig, report: &mut Report, files: &mut Vec<(String, String)>) {
    let regime = match classify(&cfg.b) {
        Ok(r) => r,
        Err(e) => return report.check("classify", false, e.to_string()),
    };
    report
        .engines
        .insert("regime".into(), serde_json::to_value(regime).expect("serializable"));
    let probes = match probes_for(cfg) {
        Ok(p) => p,
        Err(e) => return report.check("probes", false, e.to_string()),
    };
    let band = cfg.tail.band;
    let mut push =
        |report: &mut Report, name: &str, r: Result<tails::TailReport, tails::TailError>, curve: bool| match r {
            Ok(t) => {
                report.check(
                    name,
                    t.pass,
                    match (t.ratios.last(), t.probes.last()) {
                        (Some(r), Some(x)) => format!(
                            "ratio {r:.6} at x = {x} (band ±{band}); monotone approach: {}",
                            t.monotone
                        ),
                        _ => "no probes".into(),
                    },
                );
                if curve {
                    files.push(("ratio_curve.csv".into(), t.ratio_csv()));
                }
                report
                    .engines
                    .insert(name.into(), serde_json::to_value(&t).expect("serializable"));
            }
            Err(e) => report.check(name, false, e.to_string()),
        };
    match regime {
        TailRegime::RegularlyVarying { kappa } => {
            let closed = timed(report, "theorem", || theorem_engine(cfg));
            match closed {
                Ok((_, w)) => {
                    let r = timed(report, "regvar", || {
                        regvar_check(WaitingLaw::Closed(&w), &cfg.a, &cfg.b, kappa, &probes, band)
                    });
                    push(report, "regvar", r, true);
                }
                Err(e) => {
                    report.excluded.insert("theorem".into(), e.to_string());
                    report.check("regvar", false, format!("no closed-form law of W: {e}"));
                }
            }
            let r = breiman_check(&cfg.a, &cfg.b, kappa, &probes, band);
            push(report, "breiman", r, false);
        }
        TailRegime::RapidlyVarying => {
            let summary = timed(report, "simulation", || simulate(&sim_config(cfg)));
            match summary {
                Ok(s) => {
                    let r = rapidvar_check(WaitingLaw::Empirical(&s), &cfg.a, &cfg.b, &probes, band);
                    push(report, "rapidvar", r, false);
                }
                Err(e) => report.check("rapidvar", false, e.to_string()),
            }
            if let (DistSpec::Exponential { rate }, DistSpec::WeibullTail { p }) = (&cfg.a, &cfg.b) {
                let r = weibull_x_tail_check(*rate, *p, &probes, band);
                push(report, "weibull_x_tail", r, true);
            }
        }
    }
}

fn run_compare(cfg: &RunConfig, report: &mut Report, files: &mut Vec<(String, String)>) {
    type Cdf<'a> = Box<dyn Fn(f64) -> f64 + 'a>;
    let theorem = timed(report, "theorem", || theorem_engine(cfg));
    let fixed = timed(report, "fpsolve", || fpsolve_engine(cfg));
    let summary = timed(report, "simulation", || simulate(&sim_config(cfg)));

    let mut engines: Vec<(&str, Cdf)> = Vec::new();
    match &theorem {
        Ok((v, w)) => {
            report.engines.insert("theorem".into(), v.clone());
            engines.push(("theorem", Box::new(move |x| w.cdf(x))));
        }
        Err(e) => {
            report
                .excluded
                .insert("theorem".into(), format!("hypotheses rejected: {e}"));
        }
    }
    let mut x_end = cfg.solve.curve_x_max;
    match &fixed {
        Ok((v, fp, _)) => {
            report.engines.insert("fpsolve".into(), v.clone());
            x_end = fp.f.grid.x_max;
            engines.push(("fpsolve", Box::new(move |x| fp.f.eval(x))));
        }
        Err(e) => {
            report.excluded.insert("fpsolve".into(), e.to_string());
        }
    }
    match &summary {
        Ok(s) => {
            report.engines.insert("simulation".into(), summary_json(s));
            files.push(("ecdf.csv".into(), s.ecdf_csv()));
            engines.push(("simulation", Box::new(move |x| s.ecdf_at(x).unwrap_or(f64::NAN))));
        }
        Err(e) => {
            report.excluded.insert("simulation".into(), e.to_string());
        }
    }

    let n = cfg.compare.points;
    let xs: Vec<f64> = (0..n).map(|i| x_end * i as f64 / (n - 1) as f64).collect();
    let values: Vec<Vec<f64>> = engines
        .iter()
        .map(|(_, f)| xs.iter().map(|&x| f(x)).collect())
        .collect();
    for i in 0..engines.len() {
        for j in i + 1..engines.len() {
            let d = values[i]
                .iter()
                .zip(&values[j])
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            let pass = d <= cfg.compare.threshold;
            report.check(
                &format!("agreement_{}_{}", engines[i].0, engines[j].0),
                pass,
                format!("sup distance {d:e} (threshold {})", cfg.compare.threshold),
            );
            report.cross_validation.push(PairDistance {
                first: engines[i].0.into(),
                second: engines[j].0.into(),
                sup_distance: d,
                threshold: cfg.compare.threshold,
                pass,
            });
        }
    }
    report.check(
        "engines_available",
        engines.len() >= 2,
        format!(
            "{} engine(s) ran; excluded: {:?}",
            engines.len(),
            report.excluded.keys().collect::<Vec<_>>()
        ),
    );
    if let Some((_, reference)) = values.iter().zip(&engines).next().map(|(v, e)| (e.0, v)) {
        let pts: Vec<(f64, f64)> = xs.iter().copied().zip(reference.iter().copied()).collect();
        files.push(("fw_curve.csv".into(), curve_csv(&pts, "x,F")));
    }
}

/// Writes each file through a temporary in the same directory and a rename.
pub fn write_atomic(dir: &Path, name: &str, contents: &str) -> anyhow::Result<()> {
    let mut tmp =
        tempfile::NamedTempFile::new_in(dir).with_context(|| format!("creating a file in {}", dir.display()))?;
    tmp.write_all(contents.as_bytes())?;
    tmp.as_file().sync_all()?;
    tmp.persist(dir.join(name)).with_context(|| format!("writing {name}"))?;
    Ok(())
}

pub fn write_outcome(dir: &Path, outcome: &Outcome) -> anyhow::Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    for (name, contents) in &outcome.files {
        write_atomic(dir, name, contents)?;
    }
    write_atomic(dir, "report.json", &outcome.report.to_json())
}
