//! Forward problem: generalized Riccati recursion with pseudo-inverses, the two
//! equivalent solvability tests (PSD + kernel containment, and the block LMI
//! with its rank condition), the optimal feedback law, value function,
//! closed-loop matrices and a brute-force stacked-QP oracle.
//!
//! Time indices are 1-based throughout: `t = 1..=ν` for `P`, `η`, `γ` and
//! `t = 1..=ν-1` for the per-step quantities `𝔯R`, `𝔖`, `g`, `ξ`.
#![allow(non_snake_case)]

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{frobenius, min_eigenvalue, numerical_rank_with, pinv, singular_values, symmetrize};
use crate::model::{CostParams, SystemModel, Tolerances};

#[derive(Debug, Clone, PartialEq)]
pub struct RiccatiSolution {
    pub nu: usize,
    pub P: Vec<DMatrix<f64>>,
    pub eta: Vec<DVector<f64>>,
    pub gamma: Vec<f64>,
    /// `𝔯R_t = BᵀP_{t+1}B + R`.
    pub Rfrak: Vec<DMatrix<f64>>,
    /// `𝔖_t = BᵀP_{t+1}A`.
    pub Sfrak: Vec<DMatrix<f64>>,
    /// `g_t = Bᵀη_{t+1} + BᵀP_{t+1}d`.
    pub g: Vec<DVector<f64>>,
    /// `ξ_t = g_tᵀ 𝔯R_t† g_t`.
    pub xi: Vec<f64>,
    pub system: SystemModel,
    pub cost: CostParams,
}

impl RiccatiSolution {
    pub fn p(&self, t: usize) -> &DMatrix<f64> {
        &self.P[t - 1]
    }

    pub fn eta(&self, t: usize) -> &DVector<f64> {
        &self.eta[t - 1]
    }

    pub fn gamma(&self, t: usize) -> f64 {
        self.gamma[t - 1]
    }

    pub fn rfrak(&self, t: usize) -> &DMatrix<f64> {
        &self.Rfrak[t - 1]
    }

    pub fn sfrak(&self, t: usize) -> &DMatrix<f64> {
        &self.Sfrak[t - 1]
    }

    pub fn g(&self, t: usize) -> &DVector<f64> {
        &self.g[t - 1]
    }

    pub fn xi(&self, t: usize) -> f64 {
        self.xi[t - 1]
    }

    fn check_step(&self, t: usize) -> Result<()> {
        if t == 0 || t >= self.nu {
            return Err(Error::IndexOutOfRange { t, lo: 1, hi: self.nu - 1 });
        }
        Ok(())
    }
}

pub fn riccati_backward(sys: &SystemModel, cost: &CostParams, nu: usize) -> Result<RiccatiSolution> {
    sys.validate()?;
    cost.check_against(sys)?;
    if nu < 2 {
        return Err(Error::validation("nu", "horizon must be at least 2"));
    }
    let (A, B, d) = (&sys.A, &sys.B, &sys.d);
    let n = sys.n();
    let m = sys.m();

    let mut P = vec![DMatrix::zeros(n, n); nu];
    let mut eta = vec![DVector::zeros(n); nu];
    let mut gamma = vec![0.0; nu];
    let mut Rfrak = vec![DMatrix::zeros(m, m); nu - 1];
    let mut Sfrak = vec![DMatrix::zeros(m, n); nu - 1];
    let mut g = vec![DVector::zeros(m); nu - 1];
    let mut xi = vec![0.0; nu - 1];

    P[nu - 1] = cost.Q.clone();
    eta[nu - 1] = cost.q.clone();

    let Bt = B.transpose();
    let At = A.transpose();
    for t in (1..nu).rev() {
        let k = t - 1;
        let p_next = &P[k + 1];
        let eta_next = &eta[k + 1];
        let pb = p_next * B;
        let r = symmetrize(&(&Bt * &pb + &cost.R));
        let s = &Bt * p_next * A;
        let p_d = p_next * d;
        let gt = &Bt * eta_next + &Bt * &p_d;
        let r_pinv = pinv(&r);

        let p_t = &At * p_next * A + &cost.Q - s.transpose() * &r_pinv * &s;
        let gain = &r_pinv * &s;
        let a_cl = A - B * &gain;
        let eta_t = a_cl.transpose() * (eta_next + &p_d) + &cost.q;
        let xi_t = (gt.transpose() * &r_pinv * &gt)[(0, 0)];
        let gamma_t = gamma[k + 1] - 0.5 * xi_t
            + 0.5 * d.dot(&p_d)
            + eta_next.dot(d)
            + 0.5 * (p_next * &sys.sigma_w).trace();

        P[k] = symmetrize(&p_t);
        eta[k] = eta_t;
        gamma[k] = gamma_t;
        Rfrak[k] = r;
        Sfrak[k] = s;
        g[k] = gt;
        xi[k] = xi_t;
    }

    Ok(RiccatiSolution {
        nu,
        P,
        eta,
        gamma,
        Rfrak,
        Sfrak,
        g,
        xi,
        system: sys.clone(),
        cost: cost.clone(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ViolationKind {
    Psd,
    KernelContainment,
    Rank,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    Feasible,
    Infeasible,
    /// The verdict flips when the tolerances are scaled by 10 or 1/10.
    Marginal,
}

/// Per-step margins. For the Riccati test `psd_margin` is
/// `λ_min(𝔯R_t)/max(1, ‖𝔯R_t‖_F)` and `residual` the relative kernel-containment
/// residual; for the LMI test they are the normalized `λ_min(H_t)` and the rank
/// gap `rank(H_t) - rank(𝔯R_t)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepMargin {
    pub t: usize,
    pub min_eig: f64,
    pub psd_margin: f64,
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FeasibilityReport {
    pub feasible: bool,
    pub verdict: Verdict,
    pub first_violation_t: Option<usize>,
    pub violation_kind: Option<ViolationKind>,
    pub margins: Vec<StepMargin>,
}

fn classify<F>(margins: &[StepMargin], tol: &Tolerances, violation: F) -> FeasibilityReport
where
    F: Fn(&StepMargin, &Tolerances) -> Option<ViolationKind>,
{
    // Backward order: the largest violated t is reported first.
    let first = margins
        .iter()
        .rev()
        .find_map(|sm| violation(sm, tol).map(|k| (sm.t, k)));
    let feasible = first.is_none();
    let flips = [tol.scaled(10.0), tol.scaled(0.1)]
        .iter()
        .any(|alt| margins.iter().all(|sm| violation(sm, alt).is_none()) != feasible);
    let verdict = match (feasible, flips) {
        (_, true) => Verdict::Marginal,
        (true, false) => Verdict::Feasible,
        (false, false) => Verdict::Infeasible,
    };
    FeasibilityReport {
        feasible,
        verdict,
        first_violation_t: first.map(|f| f.0),
        violation_kind: first.map(|f| f.1),
        margins: margins.to_vec(),
    }
}

pub fn feasibility_check(sol: &RiccatiSolution) -> FeasibilityReport {
    feasibility_check_with(sol, &Tolerances::default())
}

/// Condition (9): `𝔯R_t ⪰ 0` and `ker 𝔯R_t ⊂ ker 𝔖_tᵀ ∩ ker g_tᵀ` for every step.
pub fn feasibility_check_with(sol: &RiccatiSolution, tol: &Tolerances) -> FeasibilityReport {
    let margins: Vec<StepMargin> = (1..sol.nu)
        .map(|t| {
            let r = sol.rfrak(t);
            let m = r.nrows();
            let n = sol.sfrak(t).ncols();
            let min_eig = min_eigenvalue(r);
            let psd_margin = min_eig / frobenius(r).max(1.0);
            let mut sg = DMatrix::zeros(m, n + 1);
            sg.view_mut((0, 0), (m, n)).copy_from(sol.sfrak(t));
            sg.view_mut((0, n), (m, 1)).copy_from(sol.g(t));
            let proj = DMatrix::identity(m, m) - r * pinv(r);
            let residual = frobenius(&(proj * &sg)) / frobenius(&sg).max(1.0);
            StepMargin { t, min_eig, psd_margin, residual }
        })
        .collect();
    classify(&margins, tol, |sm, tol| {
        if sm.psd_margin < -tol.psd {
            Some(ViolationKind::Psd)
        } else if sm.residual > tol.ker {
            Some(ViolationKind::KernelContainment)
        } else {
            None
        }
    })
}

/// `H_t` of the block LMI, assembled from a Riccati solution (with
/// `ξ_t = g_tᵀ𝔯R_t†g_t`). Layout `[[𝔯R, 𝔖, g], [𝔖ᵀ, AᵀP_{t+1}A + Q - P_t, β], [gᵀ, βᵀ, ξ]]`.
pub fn h_blocks(sol: &RiccatiSolution) -> Vec<DMatrix<f64>> {
    (1..sol.nu).map(|t| h_block(sol, t)).collect()
}

pub fn h_block(sol: &RiccatiSolution, t: usize) -> DMatrix<f64> {
    let sys = &sol.system;
    let (A, d) = (&sys.A, &sys.d);
    let n = sys.n();
    let m = sys.m();
    let p_next = sol.p(t + 1);
    let beta = &sol.cost.q + A.transpose() * p_next * d + A.transpose() * sol.eta(t + 1) - sol.eta(t);
    let mid = A.transpose() * p_next * A + &sol.cost.Q - sol.p(t);
    let dim = m + n + 1;
    let mut h = DMatrix::zeros(dim, dim);
    h.view_mut((0, 0), (m, m)).copy_from(sol.rfrak(t));
    h.view_mut((0, m), (m, n)).copy_from(sol.sfrak(t));
    h.view_mut((m, 0), (n, m)).copy_from(&sol.sfrak(t).transpose());
    h.view_mut((0, m + n), (m, 1)).copy_from(sol.g(t));
    h.view_mut((m + n, 0), (1, m)).copy_from(&sol.g(t).transpose());
    h.view_mut((m, m), (n, n)).copy_from(&mid);
    h.view_mut((m, m + n), (n, 1)).copy_from(&beta);
    h.view_mut((m + n, m), (1, n)).copy_from(&beta.transpose());
    h[(m + n, m + n)] = sol.xi(t);
    symmetrize(&h)
}

pub fn feasibility_check_lmi(sol: &RiccatiSolution) -> FeasibilityReport {
    feasibility_check_lmi_with(sol, &Tolerances::default())
}

/// Condition (10): `H_t ⪰ 0` and `rank H_t = rank 𝔯R_t` for every step.
pub fn feasibility_check_lmi_with(sol: &RiccatiSolution, tol: &Tolerances) -> FeasibilityReport {
    struct Lmi {
        h: DMatrix<f64>,
        r: DMatrix<f64>,
    }
    let blocks: Vec<Lmi> = (1..sol.nu)
        .map(|t| Lmi { h: h_block(sol, t), r: sol.rfrak(t).clone() })
        .collect();
    let margins: Vec<StepMargin> = blocks
        .iter()
        .enumerate()
        .map(|(k, b)| {
            let min_eig = min_eigenvalue(&b.h);
            StepMargin {
                t: k + 1,
                min_eig,
                psd_margin: min_eig / frobenius(&b.h).max(1.0),
                residual: 0.0,
            }
        })
        .collect();
    // Rank depends on the cutoff, so it is recomputed for each tolerance scale.
    let rank_gap = |k: usize, rank_tol: f64| -> usize {
        let rh = numerical_rank_with(&blocks[k].h, rank_tol);
        let rr = numerical_rank_with(&blocks[k].r, rank_tol);
        rh.saturating_sub(rr) + rr.saturating_sub(rh)
    };
    let mut report = classify(&margins, tol, |sm, tol| {
        if sm.psd_margin < -tol.psd {
            Some(ViolationKind::Psd)
        } else if rank_gap(sm.t - 1, tol.rank) != 0 {
            Some(ViolationKind::Rank)
        } else {
            None
        }
    });
    for sm in &mut report.margins {
        sm.residual = rank_gap(sm.t - 1, tol.rank) as f64;
    }
    report
}

/// `‖H_t \ 𝔯R_t‖_F` per step, the generalized Schur complement formed with `𝔯R_t†`.
pub fn schur_residual(sol: &RiccatiSolution) -> Vec<f64> {
    let m = sol.system.m();
    let n = sol.system.n();
    (1..sol.nu)
        .map(|t| {
            let h = h_block(sol, t);
            let r = h.view((0, 0), (m, m)).clone_owned();
            let off = h.view((0, m), (m, n + 1)).clone_owned();
            let lower = h.view((m, m), (n + 1, n + 1)).clone_owned();
            let schur = lower - off.transpose() * pinv(&r) * off;
            frobenius(&schur)
        })
        .collect()
}

/// `u = -𝔯R_t†(𝔖_t x + g_t) + (I - 𝔯R_t†𝔯R_t) λ`, with `λ = 0` when omitted.
pub fn optimal_control(
    sol: &RiccatiSolution,
    x: &DVector<f64>,
    t: usize,
    lambda: Option<&DVector<f64>>,
) -> Result<DVector<f64>> {
    sol.check_step(t)?;
    let r = sol.rfrak(t);
    let r_pinv = pinv(r);
    let mut u = -(&r_pinv * (sol.sfrak(t) * x + sol.g(t)));
    if let Some(l) = lambda {
        let m = r.nrows();
        if l.len() != m {
            return Err(Error::validation("lambda", format!("expected {m} entries, got {}", l.len())));
        }
        let proj = DMatrix::identity(m, m) - &r_pinv * r;
        u += proj * l;
    }
    Ok(u)
}

/// `V_t(x) = ½xᵀP_t x + η_tᵀx + γ_t` for `t = 1..=ν`.
pub fn value_function(sol: &RiccatiSolution, x: &DVector<f64>, t: usize) -> Result<f64> {
    if t == 0 || t > sol.nu {
        return Err(Error::IndexOutOfRange { t, lo: 1, hi: sol.nu });
    }
    Ok(0.5 * x.dot(&(sol.p(t) * x)) + sol.eta(t).dot(x) + sol.gamma(t))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClosedLoop {
    /// `A - B 𝔯R_t⁻¹ 𝔖_t`.
    pub Acl: Vec<DMatrix<f64>>,
    /// `[[A_cl(t), d - B 𝔯R_t⁻¹ g_t], [0ᵀ, 1]]`.
    pub Acl_tilde: Vec<DMatrix<f64>>,
    pub min_singular_acl: Vec<f64>,
    pub min_singular_tilde: Vec<f64>,
    pub invertible: bool,
}

pub fn closed_loop(sol: &RiccatiSolution) -> Result<ClosedLoop> {
    let tol = Tolerances::default();
    let sys = &sol.system;
    let n = sys.n();
    let mut out = ClosedLoop {
        Acl: Vec::with_capacity(sol.nu - 1),
        Acl_tilde: Vec::with_capacity(sol.nu - 1),
        min_singular_acl: Vec::new(),
        min_singular_tilde: Vec::new(),
        invertible: true,
    };
    for t in 1..sol.nu {
        let r = sol.rfrak(t);
        let chol = r.clone().cholesky().filter(|_| min_eigenvalue(r) > tol.psd * frobenius(r).max(1.0));
        let Some(chol) = chol else {
            return Err(Error::Infeasible(format!(
                "𝔯R_{t} is not positive definite; run the feasibility check (closed loop needs 𝔯R_t ≻ 0)"
            )));
        };
        let gain = chol.solve(sol.sfrak(t));
        let offset = chol.solve(sol.g(t));
        let acl = &sys.A - &sys.B * gain;
        let mut tilde = DMatrix::zeros(n + 1, n + 1);
        tilde.view_mut((0, 0), (n, n)).copy_from(&acl);
        let top_right = &sys.d - &sys.B * offset;
        tilde.view_mut((0, n), (n, 1)).copy_from(&top_right);
        tilde[(n, n)] = 1.0;
        let sa = singular_values(&acl);
        let st = singular_values(&tilde);
        let ok = |sv: &DVector<f64>| sv.min() > tol.rank * sv.max();
        out.invertible &= ok(&sa) && ok(&st);
        out.min_singular_acl.push(sa.min());
        out.min_singular_tilde.push(st.min());
        out.Acl.push(acl);
        out.Acl_tilde.push(tilde);
    }
    Ok(out)
}

/// Deterministic trajectory of the feedback law from `x_bar` over the last
/// `horizon - 1` steps.
#[derive(Debug, Clone, PartialEq)]
pub struct Rollout {
    pub states: Vec<DVector<f64>>,
    pub controls: Vec<DVector<f64>>,
    pub cost: f64,
}

pub fn rollout_feedback(sol: &RiccatiSolution, x_bar: &DVector<f64>, horizon: usize) -> Result<Rollout> {
    if horizon < 2 || horizon > sol.nu {
        return Err(Error::IndexOutOfRange { t: horizon, lo: 2, hi: sol.nu });
    }
    let sys = &sol.system;
    let cost = &sol.cost;
    let start = sol.nu - horizon + 1;
    let stage = |x: &DVector<f64>| 0.5 * x.dot(&(&cost.Q * x)) + cost.q.dot(x);
    let mut x = x_bar.clone();
    let mut states = vec![x.clone()];
    let mut controls = Vec::with_capacity(horizon - 1);
    let mut total = 0.0;
    for t in start..sol.nu {
        let u = optimal_control(sol, &x, t, None)?;
        total += stage(&x) + 0.5 * u.dot(&(&cost.R * &u));
        x = &sys.A * &x + &sys.B * &u + &sys.d;
        states.push(x.clone());
        controls.push(u);
    }
    total += stage(&x);
    Ok(Rollout { states, controls, cost: total })
}

#[derive(Debug, Clone, PartialEq)]
pub enum OracleOutcome {
    Minimizer { controls: Vec<DVector<f64>>, cost_value: f64 },
    UnboundedBelow { min_eig: f64, range_residual: f64 },
}

/// Minimizes the deterministic finite-horizon cost over the stacked control
/// vector directly; noise covariances are ignored.
///
/// States are eliminated through the dynamics, giving `½UᵀHU + hᵀU + c`; the
/// minimizer is `-H†h`. The problem is unbounded below when `H` has a negative
/// eigenvalue or `h` leaves the range of `H`.
pub fn stacked_qp_oracle(
    sys: &SystemModel,
    cost: &CostParams,
    x_bar: &DVector<f64>,
    horizon: usize,
) -> Result<OracleOutcome> {
    sys.validate()?;
    cost.check_against(sys)?;
    if horizon < 2 {
        return Err(Error::validation("horizon", "must be at least 2"));
    }
    let tol = Tolerances::default();
    let n = sys.n();
    let m = sys.m();
    let steps = horizon - 1;
    let (ns, nc) = (n * horizon, m * steps);

    let mut phi = DMatrix::zeros(ns, n);
    let mut gamma = DMatrix::zeros(ns, nc);
    let mut offset = DVector::zeros(ns);
    let mut a_pow = DMatrix::identity(n, n);
    for k in 0..horizon {
        phi.view_mut((k * n, 0), (n, n)).copy_from(&a_pow);
        a_pow = &sys.A * a_pow;
    }
    for k in 1..horizon {
        let prev_off = offset.rows(( k - 1) * n, n).clone_owned();
        let off = &sys.A * prev_off + &sys.d;
        offset.rows_mut(k * n, n).copy_from(&off);
        for j in 0..k {
            let block = if j + 1 == k {
                sys.B.clone()
            } else {
                &sys.A * gamma.view(((k - 1) * n, j * m), (n, m))
            };
            gamma.view_mut((k * n, j * m), (n, m)).copy_from(&block);
        }
    }
    let mut q_big = DMatrix::zeros(ns, ns);
    let mut q_lin = DVector::zeros(ns);
    for k in 0..horizon {
        q_big.view_mut((k * n, k * n), (n, n)).copy_from(&cost.Q);
        q_lin.rows_mut(k * n, n).copy_from(&cost.q);
    }
    let mut r_big = DMatrix::zeros(nc, nc);
    for j in 0..steps {
        r_big.view_mut((j * m, j * m), (m, m)).copy_from(&cost.R);
    }

    let z = &phi * x_bar + &offset;
    let hess = symmetrize(&(gamma.transpose() * &q_big * &gamma + r_big));
    let lin = gamma.transpose() * (&q_big * &z + &q_lin);
    let constant = 0.5 * z.dot(&(&q_big * &z)) + q_lin.dot(&z);

    let min_eig = min_eigenvalue(&hess);
    let scale = frobenius(&hess).max(1.0);
    let h_pinv = pinv(&hess);
    let range_residual = (&lin - &hess * (&h_pinv * &lin)).norm() / lin.norm().max(1.0);
    if min_eig < -tol.psd * scale || range_residual > tol.ker {
        return Ok(OracleOutcome::UnboundedBelow { min_eig, range_residual });
    }
    let u = -(&h_pinv * &lin);
    let value = constant + 0.5 * u.dot(&(&hess * &u)) + lin.dot(&u);
    let controls = (0..steps).map(|j| u.rows(j * m, m).clone_owned()).collect();
    Ok(OracleOutcome::Minimizer { controls, cost_value: value })
}
