//! Semidefinite programming: problem description, backends and export.

pub mod admm;
pub mod clarabel;
pub mod conic;
pub mod problem;
pub mod sdpa;

use serde::Serialize;

pub use problem::{ConstraintResiduals, PsdConstraint, SdpProblem, VarId, VarKind};

use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SdpStatus {
    Optimal,
    Infeasible,
    Unbounded,
    MaxIterations,
    NumericalFailure,
}

impl std::fmt::Display for SdpStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            SdpStatus::Optimal => "optimal",
            SdpStatus::Infeasible => "infeasible",
            SdpStatus::Unbounded => "unbounded",
            SdpStatus::MaxIterations => "max_iterations",
            SdpStatus::NumericalFailure => "numerical_failure",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveOptions {
    pub tol_feas: f64,
    pub tol_gap: f64,
    pub max_iter: u32,
    pub verbose: bool,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions { tol_feas: 1e-8, tol_gap: 1e-8, max_iter: 200, verbose: false }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SdpSolution {
    pub status: SdpStatus,
    pub x: Vec<f64>,
    pub objective_value: f64,
    /// Recomputed on the original problem at `x`.
    pub residuals: ConstraintResiduals,
    /// `|primal - dual| / max(1, |primal|)` where the backend reports a dual.
    pub gap: Option<f64>,
    pub iterations: u32,
    pub message: String,
}

pub trait SdpBackend: Sync {
    fn name(&self) -> &'static str;
    fn solve(&self, problem: &SdpProblem, opts: &SolveOptions) -> Result<SdpSolution>;
}

/// Solves with the default interior-point backend.
pub fn solve(problem: &SdpProblem, opts: &SolveOptions) -> Result<SdpSolution> {
    clarabel::ClarabelBackend::default().solve(problem, opts)
}
