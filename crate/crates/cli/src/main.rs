use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use lindley_alt_cli::{run, write_outcome, Command, RunConfig};

/// Steady-state waiting time of W = max(0, B - A - W): simulation, fixed-point
/// iteration, closed form and tail checks.
#[derive(Debug, Parser)]
#[command(name = "lindley-alt", version)]
struct Args {
    command: Command,
    /// JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory (default: `out_dir` from the config, else `./out`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides the simulation seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    quiet: bool,
}

/// Exit status for unreadable or invalid configurations.
const EXIT_CONFIG: u8 = 2;
/// Exit status when the run completed but at least one check failed.
const EXIT_CHECKS: u8 = 1;

fn threads_from_env() -> anyhow::Result<()> {
    if let Ok(v) = std::env::var("LINDLEY_ALT_THREADS") {
        let n: usize = v
            .parse()
            .map_err(|_| anyhow::anyhow!("LINDLEY_ALT_THREADS must be a positive integer, got {v:?}"))?;
        if n == 0 {
            anyhow::bail!("LINDLEY_ALT_THREADS must be positive");
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let args = Args::parse();
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(if args.quiet {
        "error"
    } else {
        "warn"
    }))
    .init();

    let prepared = threads_from_env().and_then(|_| {
        let mut cfg = RunConfig::load(&args.config)?;
        if let Some(seed) = args.seed {
            cfg.simulate.seed = seed;
        }
        cfg.validate(args.command)?;
        Ok(cfg)
    });
    let cfg = match prepared {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(EXIT_CONFIG);
        }
    };

    let outcome = run(args.command, &cfg);
    let dir = args
        .out
        .or_else(|| cfg.out_dir.clone())
        .unwrap_or_else(|| PathBuf::from("out"));
    if let Err(e) = write_outcome(&dir, &outcome) {
        eprintln!("error: {e:#}");
        return ExitCode::from(EXIT_CONFIG);
    }

    let report = &outcome.report;
    if !args.quiet {
        for c in &report.checks {
            println!("{} {}: {}", if c.pass { "PASS" } else { "FAIL" }, c.name, c.detail);
        }
        for (engine, why) in &report.excluded {
            println!("excluded {engine}: {why}");
        }
        println!("report written to {}", dir.join("report.json").display());
    }
    if report.pass {
        ExitCode::SUCCESS
    } else {
        eprintln!("{}", serde_json::json!({ "failures": report.failures }));
        ExitCode::from(EXIT_CHECKS)
    }
}
