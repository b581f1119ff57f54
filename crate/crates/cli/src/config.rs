use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::ValueEnum;
use lindley_core::DistSpec;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    Simulate,
    Iterate,
    Solve,
    Tail,
    Compare,
}

/// A run, read from a single JSON document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Optional; must agree with the command given on the command line.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub command: Option<Command>,
    pub a: DistSpec,
    pub b: DistSpec,
    #[serde(default)]
    pub simulate: SimulateParams,
    #[serde(default)]
    pub iterate: IterateParams,
    #[serde(default)]
    pub solve: SolveParams,
    #[serde(default)]
    pub tail: TailParams,
    #[serde(default)]
    pub compare: CompareParams,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateParams {
    pub n_steps: usize,
    pub n_replications: usize,
    pub w1: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub burn_in: Option<usize>,
    pub seed: u64,
    pub allow_nonnegative_x: bool,
    pub ecdf_points: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub hitting: Option<HittingParams>,
}

impl Default for SimulateParams {
    fn default() -> Self {
        SimulateParams {
            n_steps: 1_000_000,
            n_replications: 1,
            w1: 0.0,
            burn_in: None,
            seed: 0,
            allow_nonnegative_x: false,
            ecdf_points: 201,
            hitting: None,
        }
    }
}

/// Hitting-time probe for a nonnegative `X`, given directly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HittingParams {
    pub x: DistSpec,
    pub epsilon: f64,
    pub n: usize,
    #[serde(default = "default_hitting_reps")]
    pub replications: usize,
    #[serde(default = "default_k_max")]
    pub k_max: usize,
}

fn default_hitting_reps() -> usize {
    10_000
}

fn default_k_max() -> usize {
    20
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IterateParams {
    /// Defaults to the point where `P[X > x]` drops below `1e-9`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub x_max: Option<f64>,
    pub h: f64,
    pub tol: f64,
}

impl Default for IterateParams {
    fn default() -> Self {
        IterateParams {
            x_max: None,
            h: 1e-3,
            tol: lindley_core::fpsolve::DEFAULT_TOL,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolveParams {
    pub curve_x_max: f64,
    pub curve_points: usize,
}

impl Default for SolveParams {
    fn default() -> Self {
        SolveParams {
            curve_x_max: 10.0,
            curve_points: 201,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TailParams {
    /// Defaults to points where `P[X > x]` is log-spaced in `[1e-12, 1e-3]`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub probes: Option<Vec<f64>>,
    pub probe_count: usize,
    pub band: f64,
}

impl Default for TailParams {
    fn default() -> Self {
        TailParams {
            probes: None,
            probe_count: 8,
            band: lindley_core::tails::DEFAULT_BAND,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CompareParams {
    pub threshold: f64,
    pub points: usize,
}

impl Default for CompareParams {
    fn default() -> Self {
        CompareParams {
            threshold: 0.01,
            points: 2001,
        }
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> anyhow::Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let inner = e.into_inner();
            anyhow::anyhow!(
                "config error at line {}, column {} (field `{}`): {}",
                inner.line(),
                inner.column(),
                path,
                inner
            )
        })
    }

    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::parse(&text)
    }

    /// Checks the command and positive sizes before any engine runs.
    pub fn validate(&self, command: Command) -> anyhow::Result<()> {
        if let Some(c) = self.command {
            if c != command {
                bail!("config is for `{c:?}` but `{command:?}` was requested");
            }
        }
        if !(self.iterate.h > 0.0 && self.iterate.tol > 0.0) {
            bail!("iterate.h and iterate.tol must be positive");
        }
        if self.solve.curve_points < 2 || self.compare.points < 2 {
            bail!("curves need at least two points");
        }
        if self.compare.threshold.is_nan() || self.compare.threshold <= 0.0 {
            bail!("compare.threshold must be positive");
        }
        Ok(())
    }
}
