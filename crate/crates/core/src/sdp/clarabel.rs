//! Interior-point backend.

use clarabel::algebra::CscMatrix;
use clarabel::solver::{
    DefaultSettingsBuilder, DefaultSolver, IPSolver, NonnegativeConeT, PSDTriangleConeT, SecondOrderConeT,
    SolverStatus, SupportedConeT, ZeroConeT,
};

use super::conic::{Cone, ConicForm};
use super::{SdpBackend, SdpProblem, SdpSolution, SdpStatus, SolveOptions};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy)]
pub struct ClarabelBackend {
    pub scale_psd: bool,
}

impl Default for ClarabelBackend {
    fn default() -> Self {
        ClarabelBackend { scale_psd: true }
    }
}

fn cone(c: &Cone) -> SupportedConeT<f64> {
    match *c {
        Cone::Zero(k) => ZeroConeT(k),
        Cone::SecondOrder(k) => SecondOrderConeT(k),
        Cone::Psd(n) => PSDTriangleConeT(n),
    }
}

impl SdpBackend for ClarabelBackend {
    fn name(&self) -> &'static str {
        "clarabel"
    }

    /// On a numerical failure, retries with tighter internal tolerances and
    /// then with the other block scaling; the first optimal attempt wins.
    fn solve(&self, problem: &SdpProblem, opts: &SolveOptions) -> Result<SdpSolution> {
        problem.validate()?;
        let attempts = [(self.scale_psd, 1.0), (self.scale_psd, 1e-2), (!self.scale_psd, 1.0), (!self.scale_psd, 1e-2)];
        let mut first: Option<SdpSolution> = None;
        for (scale_psd, tighten) in attempts {
            let sol = self.attempt(problem, opts, scale_psd, tighten)?;
            if sol.status != SdpStatus::NumericalFailure {
                return Ok(sol);
            }
            first.get_or_insert(sol);
        }
        Ok(first.expect("at least one attempt"))
    }
}

impl ClarabelBackend {
    fn attempt(&self, problem: &SdpProblem, opts: &SolveOptions, scale_psd: bool, tighten: f64) -> Result<SdpSolution> {
        let form = ConicForm::from_problem(problem, scale_psd);
        let n = form.num_vars;
        let p = CscMatrix::<f64>::zeros((n, n));
        let (rows, (cols, vals)): (Vec<usize>, (Vec<usize>, Vec<f64>)) =
            form.a.iter().map(|&(i, j, v)| (i, (j, v))).unzip();
        let a = CscMatrix::new_from_triplets(form.num_rows, n, rows, cols, vals);
        let mut cones: Vec<SupportedConeT<f64>> = form.cones.iter().map(cone).collect();
        if cones.is_empty() {
            cones.push(NonnegativeConeT(0));
        }
        let settings = DefaultSettingsBuilder::default()
            .max_iter(opts.max_iter)
            .tol_feas(opts.tol_feas * tighten)
            .tol_gap_abs(opts.tol_gap * tighten)
            .tol_gap_rel(opts.tol_gap * tighten)
            .verbose(opts.verbose)
            .build()
            .map_err(|e| Error::Solver(format!("settings: {e}")))?;
        let mut solver = DefaultSolver::new(&p, &form.c, &a, &form.b, &cones, settings)
            .map_err(|e| Error::Solver(format!("setup: {e:?}")))?;
        solver.solve();
        let sol = &solver.solution;
        let x = sol.x.clone();
        let residuals = problem.residuals(&x);
        let (mut status, mut message) = match sol.status {
            SolverStatus::Solved => (SdpStatus::Optimal, String::new()),
            SolverStatus::AlmostSolved => (SdpStatus::Optimal, "reduced accuracy".to_string()),
            SolverStatus::PrimalInfeasible | SolverStatus::AlmostPrimalInfeasible => {
                (SdpStatus::Infeasible, String::new())
            }
            SolverStatus::DualInfeasible | SolverStatus::AlmostDualInfeasible => {
                (SdpStatus::Unbounded, String::new())
            }
            SolverStatus::MaxIterations | SolverStatus::MaxTime => (SdpStatus::MaxIterations, String::new()),
            other => (SdpStatus::NumericalFailure, format!("{other:?}")),
        };
        let objective_value = problem.objective_value(&x);
        let gap = (sol.obj_val.is_finite() && sol.obj_val_dual.is_finite())
            .then(|| (sol.obj_val - sol.obj_val_dual).abs() / sol.obj_val.abs().max(1.0));
        if status == SdpStatus::Optimal {
            let feas_ok = residuals.equality <= opts.tol_feas && residuals.psd <= opts.tol_feas;
            if !feas_ok || !objective_value.is_finite() {
                message = format!(
                    "solver reported {:?} but residuals are equality {:.2e}, psd {:.2e}",
                    sol.status, residuals.equality, residuals.psd
                );
                status = SdpStatus::NumericalFailure;
            }
        }
        Ok(SdpSolution {
            status,
            x,
            objective_value,
            residuals,
            gap,
            iterations: sol.iterations,
            message,
        })
    }
}
