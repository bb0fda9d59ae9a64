use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

use lqioc::forward::*;
use lqioc::instances::{self, random_feasible_instance, random_instance};
use lqioc::linalg::frobenius;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn feasibility_survives_shorter_horizons(seed in any::<u64>()) {
        let mut rng = instances::rng(seed);
        let inst = random_instance(&mut rng, 3, 2, 8, -2.0, 1.5);
        let sol = riccati_backward(&inst.system, &inst.cost, inst.nu).unwrap();
        let rep = feasibility_check(&sol);
        prop_assume!(rep.verdict == Verdict::Feasible);
        for n in 2..=inst.nu {
            let start = inst.nu - n + 1;
            let tail: Vec<_> = rep.margins.iter().filter(|m| m.t >= start).collect();
            prop_assert_eq!(tail.len(), n - 1);
            let short = riccati_backward(&inst.system, &inst.cost, n).unwrap();
            prop_assert!(feasibility_check(&short).feasible, "horizon {} infeasible", n);
        }
    }

    #[test]
    fn schur_complement_of_h_vanishes(seed in any::<u64>()) {
        let mut rng = instances::rng(seed);
        let inst = random_feasible_instance(&mut rng, 3, 2, 8, 1e-3);
        let sol = riccati_backward(&inst.system, &inst.cost, inst.nu).unwrap();
        for (t, r) in schur_residual(&sol).into_iter().enumerate() {
            let scale = frobenius(&h_block(&sol, t + 1)).max(1.0);
            prop_assert!(r <= 1e-9 * scale, "t = {}: {} vs scale {}", t + 1, r, scale);
        }
    }

    #[test]
    fn kernel_term_is_inert_when_rfrak_is_definite(seed in any::<u64>(), l0 in -1e3f64..1e3, l1 in -1e3f64..1e3) {
        let mut rng = instances::rng(seed);
        let inst = random_feasible_instance(&mut rng, 3, 2, 6, 1e-2);
        let sol = riccati_backward(&inst.system, &inst.cost, inst.nu).unwrap();
        let m = inst.system.m();
        let lam = DVector::from_iterator(m, [l0, l1].into_iter().take(m));
        let x = instances::gaussian_vector(&mut rng, inst.system.n());
        for t in 1..inst.nu {
            let base = optimal_control(&sol, &x, t, None).unwrap();
            let shifted = optimal_control(&sol, &x, t, Some(&lam)).unwrap();
            prop_assert!((shifted - base).norm() <= 1e-12 * lam.norm().max(1.0));
        }
    }

    #[test]
    fn process_noise_only_moves_gamma(seed in any::<u64>(), s in 0.01f64..2.0) {
        let mut rng = instances::rng(seed);
        let inst = random_instance(&mut rng, 3, 2, 8, -1.0, 1.5);
        let mut noisy = inst.system.clone();
        noisy.sigma_w = instances::random_symmetric(&mut rng, noisy.n(), 0.0, s);
        let a = riccati_backward(&inst.system, &inst.cost, inst.nu).unwrap();
        let b = riccati_backward(&noisy, &inst.cost, inst.nu).unwrap();
        prop_assert_eq!(&a.P, &b.P);
        prop_assert_eq!(&a.eta, &b.eta);
        prop_assert_eq!(&a.Sfrak, &b.Sfrak);
        prop_assert_eq!(&a.Rfrak, &b.Rfrak);
        prop_assert_eq!(&a.g, &b.g);
        prop_assert!(a.gamma[0] != b.gamma[0]);
    }

    #[test]
    fn riccati_and_lmi_tests_agree(seed in any::<u64>()) {
        let mut rng = instances::rng(seed);
        let inst = random_instance(&mut rng, 3, 2, 6, -3.0, 1.5);
        let sol = riccati_backward(&inst.system, &inst.cost, inst.nu).unwrap();
        let (a, b) = (feasibility_check(&sol), feasibility_check_lmi(&sol));
        prop_assume!(a.verdict != Verdict::Marginal && b.verdict != Verdict::Marginal);
        prop_assert_eq!(a.verdict, b.verdict);
    }

    #[test]
    fn feedback_rollout_matches_stacked_qp(seed in any::<u64>()) {
        let mut rng = instances::rng(seed);
        let inst = random_feasible_instance(&mut rng, 3, 2, 8, 1e-2);
        let sol = riccati_backward(&inst.system, &inst.cost, inst.nu).unwrap();
        let x = instances::gaussian_vector(&mut rng, inst.system.n());
        let roll = rollout_feedback(&sol, &x, inst.nu).unwrap();
        let OracleOutcome::Minimizer { controls, cost_value } =
            stacked_qp_oracle(&inst.system, &inst.cost, &x, inst.nu).unwrap()
        else {
            return Err(TestCaseError::fail("oracle reported unbounded on a feasible instance"));
        };
        for (u, v) in roll.controls.iter().zip(&controls) {
            prop_assert!((u - v).norm() <= 1e-6 * v.norm().max(1.0));
        }
        let value = value_function(&sol, &x, 1).unwrap();
        prop_assert!((value - cost_value).abs() <= 1e-6 * cost_value.abs().max(1.0));
    }
}

#[test]
fn kernel_violation_and_psd_violation_examples() {
    let one = DMatrix::from_element(1, 1, 1.0);
    let sys = lqioc::model::SystemModel::new(one.clone(), one.clone(), DVector::zeros(1), DMatrix::zeros(1, 1), DMatrix::zeros(1, 1)).unwrap();
    let cost = |q: f64| lqioc::model::CostParams::with_identity_r(DMatrix::from_element(1, 1, q), DVector::zeros(1), 1).unwrap();

    let rep = feasibility_check(&riccati_backward(&sys, &cost(-1.0), 2).unwrap());
    assert!(!rep.feasible);
    assert_eq!(rep.violation_kind, Some(ViolationKind::KernelContainment));

    let sol = riccati_backward(&sys, &cost(-2.0), 2).unwrap();
    let rep = feasibility_check(&sol);
    assert_eq!((rep.first_violation_t, rep.violation_kind), (Some(1), Some(ViolationKind::Psd)));
    let x = DVector::from_element(1, 1.0);
    assert!(matches!(stacked_qp_oracle(&sys, &cost(-2.0), &x, 2).unwrap(), OracleOutcome::UnboundedBelow { .. }));
    assert!(closed_loop(&sol).is_err());
}
