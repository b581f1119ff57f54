//! Steady-state waiting-time analysis for the alternating-service recursion
//! `W_{n+1} = max(0, B_{n+1} - A_n - W_n)`.
//!
//! Four routes compute or check the equilibrium law of `W`:
//!
//! * [`sim`]: seeded Monte-Carlo simulation with regenerative statistics;
//! * [`fpsolve`]: grid iteration of the sup-norm contraction
//!   `(TF)(x) = 1 - ∫_x^∞ F(y - x) dF_X(y)`;
//! * [`theorem`]: the closed form for exponential `A` and separable tails of
//!   `B`, assembled exactly in the [`symfun`] algebra;
//! * [`tails`]: tail asymptotics of `W` in terms of the tail of `X = B - A`.

// `!(a > b)` deliberately treats NaN as failing the comparison.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dists;
pub mod fixtures;
pub mod fpsolve;
pub mod quad;
pub mod sim;
pub mod symfun;
pub mod tails;
pub mod theorem;

pub use dists::{decompose_kernel, x_tail, Difference, Dist, DistError, DistSpec, KernelDecomposition};
pub use fpsolve::{build_x_rep, contraction_check, map_t, FixedPoint, FpError, Grid, GridFun, XRep};
pub use sim::{
    cycle_bound_check, hitting_probe, simulate, step, CycleBoundReport, EmpiricalSummary, HittingProbeConfig,
    HittingProbeReport, SimConfig, SimError,
};
pub use symfun::{ExpPolyTrig, SymError, Term, Trig};
pub use tails::{classify, TailError, TailRegime, TailReport, WaitingLaw};
pub use theorem::{
    build_sigma, closed_form, solve_linear, solve_sigma, ClosedFormW, SigmaSolution, SystemSigma, TheoremError,
};
