use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

use lqioc::estimator::{assemble_constraints, estimate_with, EstimatorOptions, IocBlocks};
use lqioc::exec::Execution;
use lqioc::forward::riccati_backward;
use lqioc::instances::{self, random_feasible_instance};
use lqioc::model::{CostParams, HorizonDistribution, InitialStateDistribution, Scenario, SystemModel};
use lqioc::sdp::admm::AdmmBackend;
use lqioc::sdp::clarabel::ClarabelBackend;
use lqioc::sdp::sdpa::to_sdpa;
use lqioc::sdp::{PsdConstraint, SdpBackend, SdpProblem, SdpStatus, SolveOptions};
use lqioc::simulate::generate_dataset;

fn backends() -> Vec<Box<dyn SdpBackend>> {
    vec![Box::new(ClarabelBackend::default()), Box::new(AdmmBackend::default())]
}

fn scalar_psd(sign: f64, bound: Option<f64>) -> SdpProblem {
    let mut p = SdpProblem::new();
    let s = p.add_scalar("p");
    let mut c = PsdConstraint::new("p >= 0", 1);
    c.add_scalar(&p, 0, s, 1.0);
    p.add_psd(c);
    p.add_objective_scalar(s, sign);
    if let Some(r) = bound {
        let e = p.norm_entries(s, 1.0);
        p.add_norm_bound("|p|", e, r);
    }
    p
}

#[test]
fn smallest_psd_scalar_is_zero() {
    for b in backends() {
        let sol = b.solve(&scalar_psd(1.0, None), &SolveOptions::default()).unwrap();
        assert_eq!(sol.status, SdpStatus::Optimal, "{}", b.name());
        assert!(sol.objective_value.abs() < 1e-6, "{}: {}", b.name(), sol.objective_value);
    }
}

#[test]
fn norm_bound_caps_the_optimum() {
    for b in backends() {
        let sol = b.solve(&scalar_psd(-1.0, Some(5.0)), &SolveOptions::default()).unwrap();
        assert_eq!(sol.status, SdpStatus::Optimal, "{}", b.name());
        assert!((sol.x[0] - 5.0).abs() < 1e-5, "{}: {}", b.name(), sol.x[0]);
    }
}

#[test]
fn infeasible_and_unbounded_are_reported() {
    let mut p = scalar_psd(1.0, None);
    p.add_equality(vec![(0, 1.0)], -1.0);
    let sol = ClarabelBackend::default().solve(&p, &SolveOptions::default()).unwrap();
    assert_eq!(sol.status, SdpStatus::Infeasible);

    let sol = ClarabelBackend::default().solve(&scalar_psd(-1.0, None), &SolveOptions::default()).unwrap();
    assert_eq!(sol.status, SdpStatus::Unbounded);
}

#[test]
fn admm_agrees_with_clarabel_on_a_small_estimate() {
    let one = DMatrix::from_element(1, 1, 1.0);
    let sys = SystemModel::new(one.clone(), one.clone(), DVector::zeros(1), DMatrix::zeros(1, 1), DMatrix::zeros(1, 1)).unwrap();
    let cost = CostParams::with_identity_r(one, DVector::from_element(1, 0.5), 1).unwrap();
    let sc = Scenario::new(sys, cost, HorizonDistribution::uniform(3).unwrap(), InitialStateDistribution::standard_gaussian(1)).unwrap();
    let ds = generate_dataset(&sc, 200, 9, Execution::Sequential).unwrap();
    let opts = EstimatorOptions { phi: Some(1e3), ..EstimatorOptions::default() };
    let a = estimate_with(&ds, &sc.system, &opts, &ClarabelBackend::default()).unwrap();
    let admm_opts = EstimatorOptions { solve: SolveOptions { tol_feas: 1e-9, tol_gap: 1e-9, ..SolveOptions::default() }, ..opts };
    let b = estimate_with(&ds, &sc.system, &admm_opts, &AdmmBackend::default()).unwrap();
    assert!((a.blocks.Q[(0, 0)] - b.blocks.Q[(0, 0)]).abs() < 1e-3, "{} vs {}", a.blocks.Q, b.blocks.Q);
    assert!((a.blocks.q[0] - b.blocks.q[0]).abs() < 1e-3);
    assert!((a.objective_value - b.objective_value).abs() < 1e-4 * (1.0 + a.objective_value.abs()));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn true_parameters_are_feasible(seed in any::<u64>()) {
        let mut rng = instances::rng(seed);
        let inst = random_feasible_instance(&mut rng, 3, 2, 7, 1e-3);
        let sol = riccati_backward(&inst.system, &inst.cost, inst.nu).unwrap();
        let prob = assemble_constraints(&inst.system, inst.nu, &EstimatorOptions { phi: None, ..Default::default() }).unwrap();
        let x = prob.pack(&IocBlocks::from_riccati(&sol));
        let res = prob.sdp.residuals(&x);
        prop_assert!(res.equality <= 1e-12);
        prop_assert!(res.psd <= 1e-8, "psd residual {}", res.psd);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn positive_objective_scaling_keeps_the_argmin(seed in any::<u64>(), c in 0.1f64..50.0) {
        let mut rng = instances::rng(seed);
        let inst = random_feasible_instance(&mut rng, 2, 1, 4, 1e-2);
        let sc = Scenario::new(inst.system.clone(), inst.cost.clone(), HorizonDistribution::uniform(inst.nu).unwrap(), InitialStateDistribution::standard_gaussian(inst.system.n())).unwrap();
        let ds = generate_dataset(&sc, 300, seed, Execution::Sequential).unwrap();
        let (mut prob, _) = lqioc::estimator::build_problem(&ds, &sc.system, &EstimatorOptions::default()).unwrap();
        let base = ClarabelBackend::default().solve(&prob.sdp, &SolveOptions::default()).unwrap();
        let unscaled = prob.sdp.clone();
        for v in prob.sdp.objective.iter_mut() {
            *v *= c;
        }
        let scaled = ClarabelBackend::default().solve(&prob.sdp, &SolveOptions::default()).unwrap();
        prop_assume!(base.status == SdpStatus::Optimal && scaled.status == SdpStatus::Optimal);
        let tol = 1e-6 * (1.0 + base.objective_value.abs());
        prop_assert!((scaled.objective_value - c * base.objective_value).abs() <= c * tol);
        // The minimizer set need not be a point.
        prop_assert!((unscaled.objective_value(&scaled.x) - base.objective_value).abs() <= tol);
    }
}

#[test]
fn sdpa_dump_is_well_formed() {
    let mut rng = instances::rng(4);
    let inst = random_feasible_instance(&mut rng, 2, 1, 3, 1e-2);
    let prob = assemble_constraints(&inst.system, inst.nu, &EstimatorOptions::default()).unwrap();
    let text = to_sdpa(&prob.sdp);
    let body: Vec<&str> = text.lines().filter(|l| !l.starts_with('"') && !l.starts_with('*')).collect();
    let m: usize = body[0].trim().parse().unwrap();
    assert_eq!(m, prob.sdp.num_vars);
    let nblocks: usize = body[1].trim().parse().unwrap();
    let sizes: Vec<i64> = body[2].split_whitespace().map(|s| s.trim_matches(|c| c == ',' || c == '{' || c == '}').parse().unwrap()).collect();
    assert_eq!(sizes.len(), nblocks);
    assert_eq!(body[3].split_whitespace().count(), m);
    for line in &body[4..] {
        let f: Vec<&str> = line.split_whitespace().collect();
        assert_eq!(f.len(), 5, "{line}");
        let (mat, blk, i, j): (usize, usize, usize, usize) = (f[0].parse().unwrap(), f[1].parse().unwrap(), f[2].parse().unwrap(), f[3].parse().unwrap());
        assert!(mat <= m && blk >= 1 && blk <= nblocks && i <= j);
        let size = sizes[blk - 1].unsigned_abs() as usize;
        assert!(j <= size);
        if sizes[blk - 1] < 0 {
            assert_eq!(i, j);
        }
        f[4].parse::<f64>().unwrap();
    }
}
