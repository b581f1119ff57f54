//! Acceptance suite: one test per criterion, each printing a single
//! `PASS`/`FAIL` line (written straight to stderr so it shows without
//! `--nocapture`).

use std::io::Write;
use std::time::{Duration, Instant};

use lindley_core::fixtures;
use lindley_core::fpsolve::{self, build_x_rep, contraction_check, default_x_max, Grid, GridFun};
use lindley_core::sim::{cycle_bound_check, hitting_probe, simulate, HittingProbeConfig, SimConfig};
use lindley_core::tails::{breiman_factor, regvar_check, weibull_x_tail_check, WaitingLaw};
use lindley_core::{build_sigma, closed_form, decompose_kernel, quad, solve_sigma, DistSpec, ExpPolyTrig, Term, Trig};

const MU: f64 = 2.0;
const PI0_AT_2: f64 = 102548.0 / 217732.0;
const SIM_SEED: u64 = 20_240_601;

fn verdict(id: &str, pass: bool, detail: String) {
    let line = format!("criterion {id}: {} — {detail}\n", if pass { "PASS" } else { "FAIL" });
    std::io::stderr().write_all(line.as_bytes()).unwrap();
    assert!(pass, "criterion {id} failed: {detail}");
}

fn exp(rate: f64) -> DistSpec {
    DistSpec::Exponential { rate }
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}

#[test]
fn criterion_01_golden_solution() {
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    for mu in [0.5, 1.0, 2.0, 5.0] {
        let sys = build_sigma(mu, &fixtures::five_pair_decomposition(), &fixtures::damped_sine_tail()).unwrap();
        let (sol, _) = solve_sigma(&sys).unwrap();
        let (pi0, c) = fixtures::five_pair_solution(mu);
        worst = worst.max(rel(sol.pi0, pi0));
        for (got, want) in sol.c.iter().zip(c) {
            worst = worst.max(rel(*got, want));
        }
    }
    let sys = build_sigma(MU, &fixtures::five_pair_decomposition(), &fixtures::damped_sine_tail()).unwrap();
    let (sol, _) = solve_sigma(&sys).unwrap();
    let elapsed = start.elapsed();
    let pass = worst <= 1e-10 && rel(sol.pi0, PI0_AT_2) <= 1e-10 && elapsed < Duration::from_secs(1);
    verdict(
        "1",
        pass,
        format!(
            "max relative error {worst:.2e} over μ ∈ {{0.5,1,2,5}}; π₀(2) = {:.6} (102548/217732 = {PI0_AT_2:.6}); {elapsed:.2?}",
            sol.pi0
        ),
    );
}

#[test]
fn criterion_02_curve() {
    let start = Instant::now();
    let (_, _, w) = closed_form(&exp(MU), &fixtures::damped_sine_b()).unwrap();
    let worst = (0..50)
        .map(|k| {
            let x = 10.0 * k as f64 / 49.0;
            (w.cdf(x) - fixtures::waiting_time_cdf(MU, x)).abs()
        })
        .fold(0.0, f64::max);
    let curve = GridFun::from_fn(Grid::new(10.0, 201).unwrap(), |x| w.cdf(x));
    let csv = curve.to_csv();
    let parsed: Vec<(f64, f64)> = csv
        .lines()
        .skip(1)
        .map(|l| {
            let (x, f) = l.split_once(',').unwrap();
            (x.parse().unwrap(), f.parse().unwrap())
        })
        .collect();
    let monotone = parsed.windows(2).all(|p| p[1].1 >= p[0].1);
    let first = parsed[0].1;
    let last = parsed.last().unwrap().1;
    let elapsed = start.elapsed();
    let pass = worst <= 1e-10
        && csv.starts_with("x,F\n")
        && monotone
        && (first - 0.470983).abs() < 5e-7
        && (1.0 - last) < 1e-3
        && elapsed < Duration::from_secs(1);
    verdict(
        "2",
        pass,
        format!("max |F_W − explicit formula| {worst:.2e} at 50 points; CSV monotone from {first:.6} to {last:.6}; {elapsed:.2?}"),
    );
}

#[test]
fn criterion_03_internal_consistency() {
    let (_, sol, w) = closed_form(&exp(MU), &fixtures::damped_sine_b()).unwrap();
    let gap = (w.cdf(0.0) - sol.pi0).abs();
    let pass = gap <= 1e-10 && (sol.pi0 - 0.470983).abs() < 5e-7;
    verdict(
        "3",
        pass,
        format!("F_W(0) = {:.12}, π₀ = {:.12}, gap {gap:.2e}", w.cdf(0.0), sol.pi0),
    );
}

#[test]
fn criterion_04_three_engines() {
    let start = Instant::now();
    let a = exp(MU);
    let b = fixtures::damped_sine_b();
    let (_, _, w) = closed_form(&a, &b).unwrap();

    let x_max = default_x_max(&a, &b).unwrap();
    let n = (x_max / 1e-3).ceil() as usize + 1;
    let grid = Grid::new((n - 1) as f64 * 1e-3, n).unwrap();
    let x = build_x_rep(&a, &b, grid).unwrap();
    let fp = fpsolve::solve(&x, &GridFun::constant(grid, 0.0), 1e-6).unwrap();
    let d_fp =
        fp.f.values
            .iter()
            .zip(grid.nodes())
            .map(|(f, t)| (f - w.cdf(t)).abs())
            .fold(0.0, f64::max);

    let summary = simulate(&SimConfig::new(a, b, 1_000_000, SIM_SEED)).unwrap();
    let d_sim = summary.ks_distance(|t| w.cdf(t));
    let elapsed = start.elapsed();
    let pass = d_fp <= 1e-4 && d_sim <= 0.005 && elapsed < Duration::from_secs(30);
    verdict(
        "4",
        pass,
        format!(
            "sup|F_fp − F_W| = {d_fp:.2e} (h = 1e-3, {} iterations); sup|F̂_sim − F_W| = {d_sim:.2e} (10⁶ steps); {elapsed:.2?}",
            fp.iterations
        ),
    );
}

#[test]
fn criterion_05_contraction() {
    use rand::Rng;
    let start = Instant::now();
    let x = build_x_rep(&exp(MU), &fixtures::damped_sine_b(), Grid::new(20.0, 2001).unwrap()).unwrap();
    let mut rng = lindley_core::sim::replication_rng(5, 0);
    let mut worst: f64 = 0.0;
    for pair in 0..100 {
        let scale = rng.random_range(0.1..10.0);
        let f: Vec<f64> = (0..2001).map(|_| rng.random_range(-scale..scale)).collect();
        // every other pair differs by a near-constant shift, the extremal case
        let g: Vec<f64> = if pair % 2 == 0 {
            (0..2001).map(|_| rng.random_range(-scale..scale)).collect()
        } else {
            let c = rng.random_range(-scale..scale);
            f.iter()
                .map(|v| v + c + rng.random_range(-1e-3..1e-3) * scale)
                .collect()
        };
        let r = contraction_check(&GridFun::new(x.grid, f).unwrap(), &GridFun::new(x.grid, g).unwrap(), &x).unwrap();
        worst = worst.max(r);
    }
    let elapsed = start.elapsed();
    let pass = worst <= 32.0 / 45.0 + 1e-3 && (x.rho - 32.0 / 45.0).abs() < 1e-14 && elapsed < Duration::from_secs(5);
    verdict(
        "5",
        pass,
        format!(
            "largest ratio {worst:.6} vs P[X>0] = 32/45 = {:.6}; {elapsed:.2?}",
            32.0 / 45.0
        ),
    );
}

#[test]
fn criterion_06_cycle_bound() {
    let summary = simulate(&SimConfig::new(exp(MU), fixtures::damped_sine_b(), 1_000_000, SIM_SEED)).unwrap();
    let report = cycle_bound_check(&summary, 32.0 / 45.0).unwrap();
    let tightest = report
        .rows
        .iter()
        .map(|r| r.bound + r.slack - r.empirical)
        .fold(f64::INFINITY, f64::min);
    verdict(
        "6",
        report.violations.is_empty(),
        format!(
            "{} cycles; violations at n = {:?}; smallest margin {tightest:.4}",
            report.n_cycles, report.violations
        ),
    );
}

#[test]
fn criterion_07_hitting_time() {
    let start = Instant::now();
    let report = hitting_probe(&HittingProbeConfig {
        x: DistSpec::Uniform { lo: 0.0, hi: 2.0 },
        epsilon: 0.5,
        n: 1,
        replications: 20_000,
        seed: SIM_SEED,
        k_max: 20,
    })
    .unwrap();
    let elapsed = start.elapsed();
    let tail_ok = (1..=20).all(|k| report.tail[k] <= report.bound[k] + report.slack[k]);
    let pass = (report.q - 1.0 / 32.0).abs() < 1e-15
        && tail_ok
        && report.occurrences > 0
        && report.pathwise_failures == 0
        && elapsed < Duration::from_secs(10);
    verdict(
        "7",
        pass,
        format!(
            "q = {} (q̂ = {:.5}); tail bound held for k = 1..20: {tail_ok}; {} occurrences, {} without W_{{i+2n}} = 0; {elapsed:.2?}",
            report.q, report.q_hat, report.occurrences, report.pathwise_failures
        ),
    );
}

#[test]
fn criterion_08_exponential_cross_check() {
    let a = exp(1.0);
    let b = exp(1.0);
    let (_, sol, w) = closed_form(&a, &b).unwrap();
    // hand-derived 2×2 system: π₀ = 1/(1 + μ/(λ+μ) + μ²/((λ+μ)(2λ+μ))) with λ = μ = 1
    let hand: f64 = 1.0 / (1.0 + 0.5 + 1.0 / 6.0);
    let summary = simulate(&SimConfig::new(a.clone(), b.clone(), 1_000_000, SIM_SEED)).unwrap();
    let z = (summary.pi0_hat - sol.pi0).abs() / summary.pi0.std_error;

    let x_max = default_x_max(&a, &b).unwrap();
    let n = (x_max / 1e-3).ceil() as usize + 1;
    let grid = Grid::new((n - 1) as f64 * 1e-3, n).unwrap();
    let fp = fpsolve::solve(&build_x_rep(&a, &b, grid).unwrap(), &GridFun::constant(grid, 0.0), 1e-6).unwrap();
    let d_fp =
        fp.f.values
            .iter()
            .zip(grid.nodes())
            .map(|(f, t)| (f - w.cdf(t)).abs())
            .fold(0.0, f64::max);

    let pass = (sol.pi0 - 0.6).abs() < 1e-14 && (hand - 0.6).abs() < 1e-15 && z <= 3.0 && d_fp <= 1e-4;
    verdict(
        "8",
        pass,
        format!(
            "π₀ = {:.15}; simulation {:.5} ± {:.5} ({z:.2} SE); fpsolve F(0) = {:.6}, sup gap {d_fp:.2e}",
            sol.pi0, summary.pi0_hat, summary.pi0.std_error, fp.f.values[0]
        ),
    );
}

#[test]
fn criterion_09a_regular_variation() {
    let a = exp(MU);
    let b = fixtures::damped_sine_b();
    let (_, _, w) = closed_form(&a, &b).unwrap();
    let probes: Vec<f64> = (1..=15).map(f64::from).collect();
    let report = regvar_check(WaitingLaw::Closed(&w), &a, &b, 1.0, &probes, 0.05).unwrap();
    let at15 = *report.ratios.last().unwrap();
    verdict(
        "9a",
        (at15 - 1.0).abs() <= 0.05,
        format!(
            "P[W>x]/(P[X>x]E[e^(-W)]) at x = 15 is {at15:.4} (E[e^(-W)] = {:.5}); ratios over x = 1..15 range {:.3}..{:.3}",
            report.factor.unwrap(),
            report.ratios.iter().copied().fold(f64::INFINITY, f64::min),
            report.ratios.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        ),
    );
}

#[test]
fn criterion_09b_breiman_factor() {
    let mut worst: f64 = 0.0;
    for mu in [0.5, 1.0, 2.0, 5.0] {
        for kappa in [0.0, 0.5, 1.0, 3.0] {
            worst = worst.max((breiman_factor(&exp(mu), kappa).unwrap() - mu / (mu + kappa)).abs());
        }
    }
    verdict(
        "9b",
        worst <= 1e-10,
        format!("max |E[e^(-κA)] − μ/(μ+κ)| = {worst:.2e}"),
    );
}

#[test]
fn criterion_09c_weibull() {
    let probes: Vec<f64> = (0..=6).map(|k| 5.0 + 0.5 * k as f64).collect();
    let report = weibull_x_tail_check(1.0, 2, &probes, 0.04).unwrap();
    let at5 = report.ratios[0];
    let at8 = *report.ratios.last().unwrap();
    verdict(
        "9c",
        (at5 - 1.0).abs() <= 0.10 && report.monotone,
        format!(
            "P[X>x]·2x·e^(x²) = {at5:.5} at x = 5, {at8:.5} at x = 8; monotone: {}",
            report.monotone
        ),
    );
}

#[test]
fn criterion_10_property_suites() {
    // symfun: closure and transforms against quadrature
    let f = ExpPolyTrig::new([
        Term::new(1.3, 2, -0.7, Trig::Cos, 1.4),
        Term::new(-0.4, 0, -1.1, Trig::Sin, 0.3),
        Term::new(0.9, 1, -2.0, Trig::None, 0.0),
    ]);
    let g = fixtures::damped_sine_tail();
    let q = |h: &dyn Fn(f64) -> f64| {
        quad::integrate(h, 0.0, 80.0, &[1.0, 5.0, 20.0], 1e-14, 1e-12)
            .unwrap()
            .value
    };
    let fg = f.multiply(&g);
    let mut sym: f64 = 0.0;
    for s in [0.0, 0.5, 2.0] {
        sym = sym.max((fg.laplace(s).unwrap() - q(&|x| (-s * x).exp() * f.eval(x) * g.eval(x))).abs());
    }
    sym = sym.max((f.tail_integral(1.5).unwrap().eval(0.7) - q(&|u| (-1.5 * u).exp() * f.eval(0.7 + u))).abs());

    // kernel decompositions reproduce the tail at x + y
    let hand = fixtures::five_pair_decomposition().identity_error(&g);
    let (auto, tail) = decompose_kernel(&fixtures::damped_sine_b()).unwrap();
    let kernel = hand.max(auto.identity_error(&tail));

    // the law of W does not depend on the decomposition
    let sys = build_sigma(MU, &fixtures::five_pair_decomposition(), &g).unwrap();
    let (sol, by_hand) = solve_sigma(&sys).unwrap();
    let (_, _, by_auto) = closed_form(&exp(MU), &fixtures::damped_sine_b()).unwrap();
    let (_, _, by_lt) = closed_form(&exp(MU), &fixtures::damped_sine_b_rational()).unwrap();
    let invariance = (0..200)
        .map(|k| {
            let x = 0.05 * k as f64;
            (by_hand.cdf(x) - by_auto.cdf(x))
                .abs()
                .max((by_hand.cdf(x) - by_lt.cdf(x)).abs())
        })
        .fold(0.0, f64::max);

    // P[W = 0] + P[W > 0] = 1
    let normalization = (sol.pi0 + by_hand.density.integral_0_inf().unwrap() - 1.0).abs();

    let pass = sym <= 1e-8 && kernel <= 1e-10 && invariance <= 1e-9 && normalization <= 1e-10;
    verdict(
        "10",
        pass,
        format!(
            "algebra vs quadrature {sym:.1e}; kernel identity {kernel:.1e}; decomposition invariance {invariance:.1e}; normalization {normalization:.1e}"
        ),
    );
}
