//! Pursuit-evasion convergence study: nested-group estimation over seeded
//! batches, error statistics per group size and log-log rate fits.
#![allow(non_snake_case)]

use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::config::{ConfigFile, EstimatorDoc};
use crate::error::{Error, Result};
use crate::estimator::{error_metrics, estimate, EstimatorOptions};
use crate::exec::Execution;
use crate::model::{CostParams, HorizonDistribution, InitialStateDistribution, Scenario, SystemModel};
use crate::simulate::Simulator;

pub const PURSUIT_EVASION_PHI: f64 = 1e6;
pub const DESK_GROUP_SIZES: [usize; 6] = [250, 500, 1000, 2000, 4000, 8000];
pub const SLOPE_WINDOW: (f64, f64) = (-0.7, -0.3);

/// Relative pursuer/evader dynamics sampled at `Δt = 0.1` with the evader
/// pushing at `[-1, -1]`.
pub fn pursuit_evasion_scenario() -> Scenario {
    let sys = SystemModel::new(
        DMatrix::identity(2, 2),
        DMatrix::identity(2, 2) * 0.1,
        DVector::from_vec(vec![-0.1, -0.1]),
        DMatrix::from_row_slice(2, 2, &[1.04, 0.68, 0.68, 1.00]) * 1e-2,
        DMatrix::from_row_slice(2, 2, &[2.33, -2.25, -2.25, 2.18]) * 1e-2,
    )
    .expect("pursuit-evasion system is valid");
    let cost = CostParams::with_identity_r(DMatrix::identity(2, 2) * -0.1, DVector::zeros(2), 2)
        .expect("pursuit-evasion cost is valid");
    Scenario::new(
        sys,
        cost,
        HorizonDistribution::uniform(20).expect("uniform horizon"),
        InitialStateDistribution::standard_gaussian(2),
    )
    .expect("pursuit-evasion scenario is valid")
}

pub fn pursuit_evasion_config() -> ConfigFile {
    let est = EstimatorDoc { phi: PURSUIT_EVASION_PHI, ..EstimatorDoc::default() };
    ConfigFile::from_scenario(&pursuit_evasion_scenario(), 0, est)
}

#[derive(Debug, Clone)]
pub struct BenchmarkPlan {
    pub batches: usize,
    pub group_sizes: Vec<usize>,
    pub scenario: Scenario,
    pub seed_base: u64,
    pub estimator: EstimatorOptions,
}

impl BenchmarkPlan {
    pub fn desk_scale() -> Self {
        BenchmarkPlan {
            batches: 10,
            group_sizes: DESK_GROUP_SIZES.to_vec(),
            scenario: pursuit_evasion_scenario(),
            seed_base: 2024,
            estimator: EstimatorOptions { phi: Some(PURSUIT_EVASION_PHI), ..EstimatorOptions::default() },
        }
    }

    /// 100 batches, `M = 100, 200, …, 50 000`.
    pub fn paper_scale() -> Self {
        BenchmarkPlan { batches: 100, group_sizes: (1..=500).map(|k| 100 * k).collect(), ..Self::desk_scale() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batches == 0 {
            return Err(Error::validation("plan.batches", "must be positive"));
        }
        if self.group_sizes.is_empty() || self.group_sizes[0] == 0 {
            return Err(Error::validation("plan.group_sizes", "must be non-empty and positive"));
        }
        if self.group_sizes.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::validation("plan.group_sizes", "must be strictly increasing"));
        }
        Ok(())
    }

    pub fn batch_seed(&self, batch: usize) -> u64 {
        self.seed_base ^ batch as u64
    }

    pub fn trials_per_batch(&self) -> usize {
        *self.group_sizes.last().unwrap_or(&0)
    }
}

/// On-disk plan. `scenario` names a config file, resolved relative to the
/// plan; the pursuit-evasion scenario is used when it is absent.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanFile {
    #[serde(default = "default_batches")]
    pub batches: usize,
    #[serde(default = "default_groups")]
    pub group_sizes: Vec<usize>,
    #[serde(default = "default_seed_base")]
    pub seed_base: u64,
    #[serde(default)]
    pub scenario: Option<PathBuf>,
    #[serde(default = "default_phi")]
    pub phi: f64,
    #[serde(default = "default_true")]
    pub bounds: bool,
}

fn default_batches() -> usize {
    10
}
fn default_groups() -> Vec<usize> {
    DESK_GROUP_SIZES.to_vec()
}
fn default_seed_base() -> u64 {
    2024
}
fn default_phi() -> f64 {
    PURSUIT_EVASION_PHI
}
fn default_true() -> bool {
    true
}

impl PlanFile {
    pub fn load(path: impl AsRef<Path>) -> Result<BenchmarkPlan> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let file: PlanFile = toml::from_str(&text).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        file.into_plan(base)
    }

    pub fn into_plan(self, base: &Path) -> Result<BenchmarkPlan> {
        let (scenario, mut estimator) = match &self.scenario {
            Some(p) => {
                let cfg = ConfigFile::load(base.join(p))?;
                let opts = EstimatorOptions {
                    solve: crate::sdp::SolveOptions {
                        tol_feas: cfg.estimator.tol_feas,
                        tol_gap: cfg.estimator.tol_gap,
                        max_iter: cfg.estimator.max_iter,
                        verbose: false,
                    },
                    psd_value_matrices: cfg.estimator.psd_value_matrices,
                    ..EstimatorOptions::default()
                };
                (cfg.scenario()?, opts)
            }
            None => (pursuit_evasion_scenario(), EstimatorOptions::default()),
        };
        estimator.phi = self.bounds.then_some(self.phi);
        let plan = BenchmarkPlan {
            batches: self.batches,
            group_sizes: self.group_sizes,
            scenario,
            seed_base: self.seed_base,
            estimator,
        };
        plan.validate()?;
        Ok(plan)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Cell {
    pub batch: usize,
    pub M: usize,
    /// `optimal`, or the error that made the cell unusable.
    pub status: String,
    pub rel_err_Q: Option<f64>,
    pub rel_err_q: Option<f64>,
    pub bound_active: bool,
    /// Ids of the trials that entered the cell: `first..=last`.
    pub first_trial: u64,
    pub last_trial: u64,
}

impl Cell {
    pub fn ok(&self) -> bool {
        self.rel_err_Q.is_some()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AggregateRow {
    pub M: usize,
    pub mean_rel_err_Q: Option<f64>,
    /// Sample standard deviation; undefined with fewer than two usable cells.
    pub std_rel_err_Q: Option<f64>,
    pub mean_rel_err_q: Option<f64>,
    pub std_rel_err_q: Option<f64>,
    pub n_ok: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LogLogFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchmarkReport {
    pub batches: usize,
    pub group_sizes: Vec<usize>,
    pub seed_base: u64,
    pub cells: Vec<Cell>,
    pub aggregate: Vec<AggregateRow>,
    pub slope_mean_Q: Option<LogLogFit>,
    pub slope_std_Q: Option<LogLogFit>,
    pub slope_mean_q: Option<LogLogFit>,
    pub slope_std_q: Option<LogLogFit>,
    /// `(batch, M)` of cells excluded from the statistics.
    pub dropped: Vec<(usize, usize)>,
    pub std_undefined: bool,
    /// The true `q` is below the relative-error floor.
    pub q_floored: bool,
}

/// Ordinary least squares on `(log10 M, log10 value)`.
pub fn loglog_fit(points: &[(f64, f64)]) -> Result<LogLogFit> {
    if points.len() < 2 {
        return Err(Error::validation("points", "need at least two points"));
    }
    if let Some(i) = points.iter().position(|&(m, v)| !(m > 0.0 && v > 0.0 && m.is_finite() && v.is_finite())) {
        return Err(Error::validation(format!("points[{i}]"), "coordinates must be positive and finite"));
    }
    let xs: Vec<f64> = points.iter().map(|p| p.0.log10()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1.log10()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::validation("points", "abscissae are all equal"));
    }
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = xs.iter().zip(&ys).map(|(x, y)| (y - intercept - slope * x).powi(2)).sum();
    let ss_tot: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let r2 = if ss_tot == 0.0 { 1.0 } else { 1.0 - ss_res / ss_tot };
    Ok(LogLogFit { slope, intercept, r2 })
}

/// Runs the listed batches in the given order; cells come back sorted by
/// `(batch, M)`.
pub fn run_batches(plan: &BenchmarkPlan, order: &[usize], exec: Execution) -> Result<Vec<Cell>> {
    plan.validate()?;
    let sim = Simulator::new(&plan.scenario)?;
    let truth = &plan.scenario.cost;
    let mut opts = plan.estimator;
    opts.exec = Execution::Sequential;
    let mut cells = Vec::with_capacity(order.len() * plan.group_sizes.len());
    for &batch in order {
        if batch >= plan.batches {
            return Err(Error::IndexOutOfRange { t: batch, lo: 0, hi: plan.batches - 1 });
        }
        let mut ds = sim.generate(plan.trials_per_batch(), plan.batch_seed(batch), exec);
        ds.strip_truth();
        let batch_cells = exec.map_indexed(plan.group_sizes.len(), |k| {
            let m = plan.group_sizes[k];
            let sub = ds.prefix(m);
            let (first_trial, last_trial) = (sub.records[0].trial_id, sub.records[m - 1].trial_id);
            match estimate(&sub, &plan.scenario.system, &opts) {
                Ok(est) => {
                    let em = error_metrics(&est.blocks.Q, &est.blocks.q, truth);
                    Cell {
                        batch,
                        M: m,
                        status: "optimal".into(),
                        rel_err_Q: Some(em.rel_err_Q),
                        rel_err_q: Some(em.rel_err_q),
                        bound_active: est.bound_active,
                        first_trial,
                        last_trial,
                    }
                }
                Err(e) => Cell {
                    batch,
                    M: m,
                    status: e.to_string(),
                    rel_err_Q: None,
                    rel_err_q: None,
                    bound_active: false,
                    first_trial,
                    last_trial,
                },
            }
        });
        cells.extend(batch_cells);
    }
    cells.sort_by_key(|c| (c.batch, c.M));
    Ok(cells)
}

pub fn run_benchmark(plan: &BenchmarkPlan, exec: Execution) -> Result<BenchmarkReport> {
    let order: Vec<usize> = (0..plan.batches).collect();
    let cells = run_batches(plan, &order, exec)?;
    Ok(summarize(plan, cells))
}

fn mean_std(v: &[f64]) -> (Option<f64>, Option<f64>) {
    if v.is_empty() {
        return (None, None);
    }
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let std = (v.len() >= 2).then(|| (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt());
    (Some(mean), std)
}

fn fit_column(rows: &[AggregateRow], f: impl Fn(&AggregateRow) -> Option<f64>) -> Option<LogLogFit> {
    let pts: Vec<(f64, f64)> = rows.iter().filter_map(|r| f(r).map(|v| (r.M as f64, v))).collect();
    loglog_fit(&pts).ok()
}

pub fn summarize(plan: &BenchmarkPlan, cells: Vec<Cell>) -> BenchmarkReport {
    let aggregate: Vec<AggregateRow> = plan
        .group_sizes
        .iter()
        .map(|&m| {
            let ok: Vec<&Cell> = cells.iter().filter(|c| c.M == m && c.ok()).collect();
            let eq: Vec<f64> = ok.iter().filter_map(|c| c.rel_err_Q).collect();
            let ev: Vec<f64> = ok.iter().filter_map(|c| c.rel_err_q).collect();
            let (mean_rel_err_Q, std_rel_err_Q) = mean_std(&eq);
            let (mean_rel_err_q, std_rel_err_q) = mean_std(&ev);
            AggregateRow { M: m, mean_rel_err_Q, std_rel_err_Q, mean_rel_err_q, std_rel_err_q, n_ok: ok.len() }
        })
        .collect();
    let dropped = cells.iter().filter(|c| !c.ok()).map(|c| (c.batch, c.M)).collect();
    BenchmarkReport {
        batches: plan.batches,
        group_sizes: plan.group_sizes.clone(),
        seed_base: plan.seed_base,
        slope_mean_Q: fit_column(&aggregate, |r| r.mean_rel_err_Q),
        slope_std_Q: fit_column(&aggregate, |r| r.std_rel_err_Q),
        slope_mean_q: fit_column(&aggregate, |r| r.mean_rel_err_q),
        slope_std_q: fit_column(&aggregate, |r| r.std_rel_err_q),
        std_undefined: aggregate.iter().any(|r| r.n_ok > 0 && r.std_rel_err_Q.is_none()),
        q_floored: plan.scenario.cost.q.norm() < crate::estimator::REL_ERR_FLOOR,
        aggregate,
        dropped,
        cells,
    }
}

impl BenchmarkReport {
    pub fn empty() -> Self {
        BenchmarkReport {
            batches: 0,
            group_sizes: Vec::new(),
            seed_base: 0,
            cells: Vec::new(),
            aggregate: Vec::new(),
            slope_mean_Q: None,
            slope_std_Q: None,
            slope_mean_q: None,
            slope_std_q: None,
            dropped: Vec::new(),
            std_undefined: false,
            q_floored: false,
        }
    }

    /// `(non-increasing pairs, total pairs)` of consecutive mean `rel_err_Q`.
    pub fn monotone_pairs(&self) -> (usize, usize) {
        let means: Vec<f64> = self.aggregate.iter().filter_map(|r| r.mean_rel_err_Q).collect();
        let total = means.len().saturating_sub(1);
        (means.windows(2).filter(|w| w[1] <= w[0]).count(), total)
    }

    pub fn trend_ok(&self) -> bool {
        let (ok, total) = self.monotone_pairs();
        total > 0 && ok + 1 >= total
    }

    pub fn slope_in_window(&self) -> bool {
        self.slope_mean_Q.is_some_and(|f| f.slope >= SLOPE_WINDOW.0 && f.slope <= SLOPE_WINDOW.1)
    }
}

#[derive(Serialize)]
struct Summary<'a> {
    batches: usize,
    group_sizes: &'a [usize],
    seed_base: u64,
    cells: usize,
    cells_ok: usize,
    dropped: &'a [(usize, usize)],
    slope_mean_rel_err_Q: Option<LogLogFit>,
    slope_std_rel_err_Q: Option<LogLogFit>,
    slope_mean_rel_err_q: Option<LogLogFit>,
    slope_std_rel_err_q: Option<LogLogFit>,
    monotone_pairs: usize,
    total_pairs: usize,
    trend_pass: bool,
    slope_window: [f64; 2],
    slope_pass: bool,
    std_undefined: bool,
    q_floored: bool,
    bound_active_cells: usize,
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

#[derive(Debug, Clone)]
pub struct ReportFiles {
    pub cells: PathBuf,
    pub aggregate: PathBuf,
    pub summary: PathBuf,
}

pub fn emit_report(report: &BenchmarkReport, dir: impl AsRef<Path>) -> Result<ReportFiles> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let files = ReportFiles {
        cells: dir.join("cells.csv"),
        aggregate: dir.join("aggregate.csv"),
        summary: dir.join("summary.json"),
    };
    let csv_err = |p: &Path| {
        let p = p.to_path_buf();
        move |e: csv::Error| Error::Parse(format!("{}: {e}", p.display()))
    };

    let mut w = csv::Writer::from_path(&files.cells).map_err(csv_err(&files.cells))?;
    w.write_record(["batch", "M", "status", "rel_err_Q", "rel_err_q", "bound_active", "first_trial", "last_trial"])
        .map_err(csv_err(&files.cells))?;
    for c in &report.cells {
        w.write_record([
            c.batch.to_string(),
            c.M.to_string(),
            c.status.clone(),
            fmt_opt(c.rel_err_Q),
            fmt_opt(c.rel_err_q),
            c.bound_active.to_string(),
            c.first_trial.to_string(),
            c.last_trial.to_string(),
        ])
        .map_err(csv_err(&files.cells))?;
    }
    w.flush().map_err(|e| Error::io(&files.cells, e))?;

    let mut w = csv::Writer::from_path(&files.aggregate).map_err(csv_err(&files.aggregate))?;
    w.write_record(["M", "mean_rel_err_Q", "std_rel_err_Q", "mean_rel_err_q", "std_rel_err_q", "n_ok"])
        .map_err(csv_err(&files.aggregate))?;
    for r in &report.aggregate {
        w.write_record([
            r.M.to_string(),
            fmt_opt(r.mean_rel_err_Q),
            fmt_opt(r.std_rel_err_Q),
            fmt_opt(r.mean_rel_err_q),
            fmt_opt(r.std_rel_err_q),
            r.n_ok.to_string(),
        ])
        .map_err(csv_err(&files.aggregate))?;
    }
    w.flush().map_err(|e| Error::io(&files.aggregate, e))?;

    let (monotone_pairs, total_pairs) = report.monotone_pairs();
    let summary = Summary {
        batches: report.batches,
        group_sizes: &report.group_sizes,
        seed_base: report.seed_base,
        cells: report.cells.len(),
        cells_ok: report.cells.iter().filter(|c| c.ok()).count(),
        dropped: &report.dropped,
        slope_mean_rel_err_Q: report.slope_mean_Q,
        slope_std_rel_err_Q: report.slope_std_Q,
        slope_mean_rel_err_q: report.slope_mean_q,
        slope_std_rel_err_q: report.slope_std_q,
        monotone_pairs,
        total_pairs,
        trend_pass: report.trend_ok(),
        slope_window: [SLOPE_WINDOW.0, SLOPE_WINDOW.1],
        slope_pass: report.slope_in_window(),
        std_undefined: report.std_undefined,
        q_floored: report.q_floored,
        bound_active_cells: report.cells.iter().filter(|c| c.bound_active).count(),
    };
    let mut text = serde_json::to_string_pretty(&summary).map_err(|e| Error::Parse(e.to_string()))?;
    text.push('\n');
    std::fs::write(&files.summary, text).map_err(|e| Error::io(&files.summary, e))?;
    Ok(files)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forward::{feasibility_check, riccati_backward, Verdict};

    #[test]
    fn scenario_constants() {
        let sc = pursuit_evasion_scenario();
        assert_eq!(sc.system.sigma_v[(0, 1)], -2.25e-2);
        assert_eq!(sc.system.d, DVector::from_vec(vec![-0.1, -0.1]));
        assert_eq!(sc.nu(), 20);
        let sol = riccati_backward(&sc.system, &sc.cost, 20).unwrap();
        assert_eq!(feasibility_check(&sol).verdict, Verdict::Feasible);
    }

    #[test]
    fn exact_power_law_slope() {
        let f = loglog_fit(&[(100.0, 0.1), (400.0, 0.05)]).unwrap();
        assert!((f.slope + 0.5).abs() < 1e-12);
        let f = loglog_fit(&[(100.0, 1.0), (1000.0, 1.0)]).unwrap();
        assert_eq!(f.slope, 0.0);
    }

    #[test]
    fn nonpositive_value_is_rejected_with_index() {
        let err = loglog_fit(&[(100.0, 0.1), (200.0, 0.0)]).unwrap_err();
        assert!(matches!(err, Error::Validation { ref field, .. } if field == "points[1]"));
    }

    #[test]
    fn unsorted_groups_are_rejected() {
        let plan = BenchmarkPlan { group_sizes: vec![500, 250], ..BenchmarkPlan::desk_scale() };
        assert!(plan.validate().is_err());
    }

    #[test]
    fn single_cell_report_flags_undefined_std() {
        let plan = BenchmarkPlan { batches: 1, group_sizes: vec![10], ..BenchmarkPlan::desk_scale() };
        let rep = run_benchmark(&plan, Execution::Sequential).unwrap();
        assert_eq!(rep.cells.len(), 1);
        assert!(rep.std_undefined || rep.aggregate[0].n_ok == 0);
        assert_eq!(rep.aggregate[0].std_rel_err_Q, None);
    }

    #[test]
    fn empty_report_writes_headers_only() {
        let dir = tempfile::tempdir().unwrap();
        let files = emit_report(&BenchmarkReport::empty(), dir.path()).unwrap();
        let agg = std::fs::read_to_string(files.aggregate).unwrap();
        assert_eq!(agg, "M,mean_rel_err_Q,std_rel_err_Q,mean_rel_err_q,std_rel_err_q,n_ok\n");
        assert_eq!(std::fs::read_to_string(files.cells).unwrap().lines().count(), 1);
    }
}
