#![allow(non_snake_case)]

use std::path::{Path, PathBuf};

use serde::Serialize;

use lqioc::config::{rows_from_matrix, ConfigFile};
use lqioc::error::{Error, Result};
use lqioc::estimator::{self, error_metrics, EstimatorOptions, ErrorMetrics};
use lqioc::exec::Execution;
use lqioc::experiments::{emit_report, run_benchmark, BenchmarkPlan, PlanFile};
use lqioc::forward::{
    feasibility_check, feasibility_check_lmi, riccati_backward, rollout_feedback, stacked_qp_oracle,
    FeasibilityReport, OracleOutcome, Verdict,
};
use lqioc::model::{check_assumptions, AssumptionReport};
use lqioc::sdp::{sdpa, ConstraintResiduals, SolveOptions};
use lqioc::simulate::{draw_initial_state, Dataset, Simulator};

use crate::{BenchArgs, CheckArgs, EstimateArgs, OracleArgs, SimulateArgs};

fn print_json<T: Serialize>(v: &T) -> Result<()> {
    let s = serde_json::to_string_pretty(v).map_err(|e| Error::Parse(e.to_string()))?;
    println!("{s}");
    Ok(())
}

fn write_json<T: Serialize>(v: &T, path: &Path) -> Result<()> {
    let mut s = serde_json::to_string_pretty(v).map_err(|e| Error::Parse(e.to_string()))?;
    s.push('\n');
    std::fs::write(path, s).map_err(|e| Error::io(path, e))
}

fn relative_to(config: &Path, p: &str) -> PathBuf {
    let p = Path::new(p);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        config.parent().unwrap_or(Path::new(".")).join(p)
    }
}

#[derive(Serialize)]
struct CheckOutput {
    assumptions: AssumptionReport,
    feasibility: FeasibilityReport,
    feasibility_lmi: FeasibilityReport,
    rfrak_positive_definite: bool,
}

pub fn check(a: &CheckArgs) -> Result<u8> {
    let cfg = ConfigFile::load(&a.config)?;
    let sc = cfg.scenario()?;
    let sol = riccati_backward(&sc.system, &sc.cost, sc.nu())?;
    let out = CheckOutput {
        assumptions: check_assumptions(&sc.system, &sc.horizon, &sc.init)?,
        feasibility: feasibility_check(&sol),
        feasibility_lmi: feasibility_check_lmi(&sol),
        rfrak_positive_definite: sol.Rfrak.iter().all(|r| r.clone().cholesky().is_some()),
    };
    print_json(&out)?;
    Ok(match out.feasibility.verdict {
        Verdict::Feasible => 0,
        Verdict::Infeasible => 2,
        Verdict::Marginal => 3,
    })
}

pub fn simulate(a: &SimulateArgs, exec: Execution) -> Result<u8> {
    let cfg = ConfigFile::load(&a.config)?;
    let sc = cfg.scenario()?;
    let out = match (&a.out, &cfg.io.out) {
        (Some(p), _) => p.clone(),
        (None, Some(p)) => relative_to(&a.config, p),
        (None, None) => return Err(Error::validation("out", "no output path given (--out or io.out)")),
    };
    let seed = a.seed.unwrap_or(cfg.seed);
    let mut ds = Simulator::new(&sc)?.generate(a.trials, seed, exec);
    if a.strip_truth || cfg.io.strip_truth {
        ds.strip_truth();
    }
    ds.save(&out)?;
    eprintln!("wrote {} trials to {}", ds.trials(), out.display());
    Ok(0)
}

#[derive(Serialize)]
struct EstimationOutput {
    status: String,
    backend: &'static str,
    trials: usize,
    objective_value: f64,
    lower_bound_gap: Option<f64>,
    bound_active: bool,
    iterations: u32,
    residuals: ResidualsOut,
    Q: Vec<Vec<f64>>,
    q: Vec<f64>,
    /// Errors against the cost in the configuration.
    error_vs_config: ErrorMetrics,
    digest_matches: bool,
}

#[derive(Serialize)]
struct ResidualsOut {
    equality: f64,
    psd: f64,
    norm: f64,
}

impl From<ConstraintResiduals> for ResidualsOut {
    fn from(r: ConstraintResiduals) -> Self {
        ResidualsOut { equality: r.equality, psd: r.psd, norm: r.norm }
    }
}

pub fn estimate(a: &EstimateArgs, exec: Execution) -> Result<u8> {
    let cfg = ConfigFile::load(&a.config)?;
    let sc = cfg.scenario()?;
    let data = match (&a.data, &cfg.io.data) {
        (Some(p), _) => p.clone(),
        (None, Some(p)) => relative_to(&a.config, p),
        (None, None) => return Err(Error::validation("data", "no dataset given (--data or io.data)")),
    };
    let ds = Dataset::load(&data)?;
    let digest_matches = ds.meta.config_digest == lqioc::config::scenario_digest(&sc);
    if !digest_matches {
        eprintln!("warning: dataset was generated from a different scenario configuration");
    }
    let phi = if a.no_bounds || !cfg.estimator.bounds { None } else { Some(a.phi.unwrap_or(cfg.estimator.phi)) };
    let opts = EstimatorOptions {
        phi,
        psd_value_matrices: cfg.estimator.psd_value_matrices,
        solve: SolveOptions {
            tol_feas: cfg.estimator.tol_feas,
            tol_gap: cfg.estimator.tol_gap,
            max_iter: cfg.estimator.max_iter,
            verbose: false,
        },
        exec,
    };
    if let Some(path) = &a.dump_sdp {
        let (prob, _) = estimator::build_problem(&ds, &sc.system, &opts)?;
        sdpa::write_sdpa(&prob.sdp, path)?;
    }
    let est = estimator::estimate(&ds, &sc.system, &opts)?;
    let out = EstimationOutput {
        status: est.status.to_string(),
        backend: est.backend,
        trials: ds.trials(),
        objective_value: est.objective_value,
        lower_bound_gap: est.lower_bound_gap,
        bound_active: est.bound_active,
        iterations: est.iterations,
        residuals: est.residuals.into(),
        Q: rows_from_matrix(&est.blocks.Q),
        q: est.blocks.q.iter().copied().collect(),
        error_vs_config: error_metrics(&est.blocks.Q, &est.blocks.q, &sc.cost),
        digest_matches,
    };
    match &a.out {
        Some(p) => write_json(&out, p)?,
        None => print_json(&out)?,
    }
    Ok(0)
}

pub fn bench(a: &BenchArgs, exec: Execution) -> Result<u8> {
    let mut plan = match &a.plan {
        Some(p) => PlanFile::load(p)?,
        None => BenchmarkPlan::desk_scale(),
    };
    if a.paper_scale {
        let paper = BenchmarkPlan::paper_scale();
        plan.batches = paper.batches;
        plan.group_sizes = paper.group_sizes;
    }
    let report = run_benchmark(&plan, exec)?;
    let files = emit_report(&report, &a.out_dir)?;
    eprintln!(
        "wrote {}, {} and {}",
        files.cells.display(),
        files.aggregate.display(),
        files.summary.display()
    );
    if let Some(f) = report.slope_mean_Q {
        eprintln!("mean rel_err_Q slope {:.4} (r2 {:.3})", f.slope, f.r2);
    }
    Ok(0)
}

#[derive(Serialize)]
struct OracleOutput {
    samples: usize,
    horizon: usize,
    max_control_deviation: f64,
    max_cost_deviation: f64,
    max_deviation: f64,
    unbounded: bool,
}

pub fn oracle(a: &OracleArgs) -> Result<u8> {
    let cfg = ConfigFile::load(&a.config)?;
    let sc = cfg.scenario()?;
    let sys = sc.system.noiseless();
    let nu = sc.nu();
    let sol = riccati_backward(&sys, &sc.cost, nu)?;
    let seed = a.seed.unwrap_or(cfg.seed);
    let law = sc.init.law_for(nu);
    let mut out = OracleOutput {
        samples: a.samples,
        horizon: nu,
        max_control_deviation: 0.0,
        max_cost_deviation: 0.0,
        max_deviation: 0.0,
        unbounded: false,
    };
    for i in 0..a.samples {
        let x_bar = draw_initial_state(law, seed, i as u64);
        match stacked_qp_oracle(&sys, &sc.cost, &x_bar, nu)? {
            OracleOutcome::UnboundedBelow { .. } => {
                out.unbounded = true;
                out.max_deviation = f64::INFINITY;
            }
            OracleOutcome::Minimizer { controls, cost_value } => {
                let roll = rollout_feedback(&sol, &x_bar, nu)?;
                for (u, v) in roll.controls.iter().zip(&controls) {
                    let dev = (u - v).norm() / v.norm().max(1.0);
                    out.max_control_deviation = out.max_control_deviation.max(dev);
                }
                let dev = (roll.cost - cost_value).abs() / cost_value.abs().max(1.0);
                out.max_cost_deviation = out.max_cost_deviation.max(dev);
            }
        }
    }
    if !out.unbounded {
        out.max_deviation = out.max_control_deviation.max(out.max_cost_deviation);
    }
    print_json(&out)?;
    Ok(if out.max_deviation <= 1e-6 { 0 } else { 2 })
}
