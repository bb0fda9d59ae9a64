use lqioc::exec::Execution;
use lqioc::experiments::*;

fn small_plan() -> BenchmarkPlan {
    BenchmarkPlan { batches: 3, group_sizes: vec![60, 120, 240], ..BenchmarkPlan::desk_scale() }
}

#[test]
fn group_sizes_nest_inside_each_batch() {
    let cells = run_batches(&small_plan(), &[0, 1, 2], Execution::Parallel).unwrap();
    assert_eq!(cells.len(), 9);
    for c in &cells {
        assert_eq!((c.first_trial, c.last_trial), (0, c.M as u64 - 1));
    }
}

#[test]
fn batches_do_not_depend_on_their_order() {
    let plan = small_plan();
    let forward = run_batches(&plan, &[0, 1, 2], Execution::Sequential).unwrap();
    let shuffled = run_batches(&plan, &[2, 0, 1], Execution::ParallelWith { workers: 3 }).unwrap();
    assert_eq!(forward, shuffled);
    let alone = run_batches(&plan, &[1], Execution::Sequential).unwrap();
    assert_eq!(alone[..], forward[3..6]);
}

#[test]
fn batch_out_of_range_is_an_error() {
    assert!(run_batches(&small_plan(), &[3], Execution::Sequential).is_err());
}

#[test]
fn report_files_are_reproducible() {
    let report = run_benchmark(&small_plan(), Execution::Parallel).unwrap();
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let fa = emit_report(&report, a.path()).unwrap();
    let fb = emit_report(&report, b.path()).unwrap();
    for (x, y) in [(&fa.cells, &fb.cells), (&fa.aggregate, &fb.aggregate), (&fa.summary, &fb.summary)] {
        assert_eq!(std::fs::read(x).unwrap(), std::fs::read(y).unwrap());
    }
    let agg = std::fs::read_to_string(&fa.aggregate).unwrap();
    assert_eq!(agg.lines().next().unwrap(), "M,mean_rel_err_Q,std_rel_err_Q,mean_rel_err_q,std_rel_err_q,n_ok");
    assert_eq!(agg.lines().count(), 4);
}

#[test]
fn loglog_fit_recovers_a_power_law() {
    let pts: Vec<(f64, f64)> = [250.0, 1000.0, 4000.0].iter().map(|&m: &f64| (m, 3.0 * m.powf(-0.5))).collect();
    let fit = loglog_fit(&pts).unwrap();
    assert!((fit.slope + 0.5).abs() < 1e-12);
    assert!((fit.r2 - 1.0).abs() < 1e-12);
    assert!(loglog_fit(&pts[..1]).is_err());
}

#[test]
fn single_batch_leaves_std_undefined() {
    let plan = BenchmarkPlan { batches: 1, group_sizes: vec![100, 200], ..BenchmarkPlan::desk_scale() };
    let report = run_benchmark(&plan, Execution::Parallel).unwrap();
    assert!(report.std_undefined);
    assert!(report.aggregate.iter().all(|r| r.std_rel_err_Q.is_none()));
}
