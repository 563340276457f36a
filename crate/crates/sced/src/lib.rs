//! Storage-concerned economic dispatch over a DC network, built around the
//! convex relaxation of the charge/discharge complementarity constraint.
//!
//! The crate solves the relaxed dispatch problem as a convex QP with full
//! dual extraction, evaluates two LMP-based exactness conditions on the
//! duals, certifies (or refutes) exactness against an exact mode-enumeration
//! oracle, and runs an a-priori checking procedure on forecasted LMPs,
//! including estimation of the storage energy capacity needed to keep the
//! relaxation exact.
//!
//! Module layout:
//! - [`network`]: grid/horizon data model, case files, shift factors,
//!   storage energy dynamics.
//! - [`formulation`]: assembly of the relaxed problem (and mode-restricted
//!   variants) as a tagged standard-form QP.
//! - [`solver`]: primal-dual interior-point QP solver with multiplier
//!   extraction and KKT residual reporting.
//! - [`exactness`]: LMPs from duals, the two exactness conditions, the
//!   prior-work baseline, and the certification verdict.
//! - [`oracle`]: exact solution of the non-convex problem by branch and
//!   bound over charge/discharge mode maps.
//! - [`planner`]: a-priori checks from LMP forecasts and storage capacity
//!   estimation.
//! - [`report`] / [`cli`]: run reports and the command-line front end.

pub mod cli;
pub mod exactness;
pub mod formulation;
pub mod network;
pub mod oracle;
pub mod planner;
pub mod report;
pub mod solver;

#[cfg(test)]
pub(crate) mod testutil;

pub use exactness::{ExactnessReport, Verdict};
pub use formulation::{MultiplierTag, QpProblem, VarKind, VariableIndex};
pub use network::{Generator, GsfMatrix, Line, NetworkCase, Storage};
pub use oracle::OracleResult;
pub use planner::{CapacityEstimate, LmpForecast, PlanVerdict};
pub use solver::{Solution, SolverSettings, SolverStatus};
