//! Inverse optimal control: recover `(Q, q)` from observed trajectories by
//! minimizing the empirical objective over the cone of parameters whose
//! H-blocks are positive semidefinite.
#![allow(non_snake_case)]

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::forward::RiccatiSolution;
use crate::model::{CostParams, SystemModel};
use crate::sdp::clarabel::ClarabelBackend;
use crate::sdp::{ConstraintResiduals, PsdConstraint, SdpBackend, SdpProblem, SdpStatus, SolveOptions, VarId};
use crate::simulate::{Dataset, TrajectoryRecord};

const CHUNK: usize = 1024;
pub const REL_ERR_FLOOR: f64 = 1e-12;

/// Value-function parameters `(Q, q, P_t, η_t, ξ_t)`. `P` and `eta` hold
/// `t = 1..=ν`, `xi` holds `t = 1..ν-1`, all 0-indexed.
#[derive(Debug, Clone, PartialEq)]
pub struct IocBlocks {
    pub Q: DMatrix<f64>,
    pub q: DVector<f64>,
    pub P: Vec<DMatrix<f64>>,
    pub eta: Vec<DVector<f64>>,
    pub xi: Vec<f64>,
}

impl IocBlocks {
    pub fn from_riccati(sol: &RiccatiSolution) -> Self {
        IocBlocks {
            Q: sol.cost.Q.clone(),
            q: sol.cost.q.clone(),
            P: sol.P.clone(),
            eta: sol.eta.clone(),
            xi: sol.xi.clone(),
        }
    }
}

/// Linear functional `Ψ_E(θ) = ⟨C_Q, Q⟩ + c_qᵀq + Σ_t ⟨C_P_t, P_t⟩ + c_η_tᵀη_t + c_ξ_t ξ_t`.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalObjective {
    pub nu: usize,
    pub trials: usize,
    pub cQ: DMatrix<f64>,
    pub cq: DVector<f64>,
    pub cP: Vec<DMatrix<f64>>,
    pub ceta: Vec<DVector<f64>>,
    pub cxi: Vec<f64>,
    /// Always zero: the data-independent terms cancel.
    pub constant: f64,
}

impl EmpiricalObjective {
    fn zeros(n: usize, nu: usize) -> Self {
        EmpiricalObjective {
            nu,
            trials: 0,
            cQ: DMatrix::zeros(n, n),
            cq: DVector::zeros(n),
            cP: vec![DMatrix::zeros(n, n); nu],
            ceta: vec![DVector::zeros(n); nu],
            cxi: vec![0.0; nu - 1],
            constant: 0.0,
        }
    }

    fn add_trial(&mut self, sys: &SystemModel, r: &TrajectoryRecord) {
        let nu = self.nu;
        let s = r.start(nu);
        let y = &r.y;
        let half_ddT = &sys.d * sys.d.transpose() * 0.5;
        let half_sw = &sys.sigma_w * 0.5;
        let half_sv = &sys.sigma_v * 0.5;

        let yn = &y[nu - 1];
        self.cP[nu - 1] += yn * yn.transpose() * 0.5 - &half_sv;
        self.ceta[nu - 1] += yn;
        let ys = &y[s - 1];
        self.cP[s - 1] += &half_sv - ys * ys.transpose() * 0.5;
        self.ceta[s - 1] -= ys;
        for t in s..nu {
            let yt = &y[t - 1];
            self.cxi[t - 1] += 0.5;
            self.cP[t] -= &half_ddT + &half_sw;
            self.ceta[t] -= &sys.d;
            self.cQ += yt * yt.transpose() * 0.5 - &half_sv;
            self.cq += yt;
        }
        self.trials += 1;
    }

    fn merge(&mut self, other: &EmpiricalObjective) {
        self.cQ += &other.cQ;
        self.cq += &other.cq;
        for (a, b) in self.cP.iter_mut().zip(&other.cP) {
            *a += b;
        }
        for (a, b) in self.ceta.iter_mut().zip(&other.ceta) {
            *a += b;
        }
        for (a, b) in self.cxi.iter_mut().zip(&other.cxi) {
            *a += b;
        }
        self.trials += other.trials;
    }

    fn divide(&mut self, d: f64) {
        self.cQ /= d;
        self.cq /= d;
        self.cP.iter_mut().for_each(|m| *m /= d);
        self.ceta.iter_mut().for_each(|v| *v /= d);
        self.cxi.iter_mut().for_each(|v| *v /= d);
    }

    /// Sums trials in fixed-size chunks and combines chunks in order, so
    /// the result does not depend on `exec`.
    pub fn from_dataset(ds: &Dataset, sys: &SystemModel, exec: Execution) -> Result<Self> {
        check_dataset(ds, sys)?;
        let nu = ds.meta.nu;
        let n = sys.n();
        let chunks = ds.records.len().div_ceil(CHUNK);
        let partials = exec.map_indexed(chunks, |c| {
            let mut acc = EmpiricalObjective::zeros(n, nu);
            let end = ((c + 1) * CHUNK).min(ds.records.len());
            for r in &ds.records[c * CHUNK..end] {
                acc.add_trial(sys, r);
            }
            acc
        });
        let mut total = EmpiricalObjective::zeros(n, nu);
        for p in &partials {
            total.merge(p);
        }
        total.divide(ds.records.len() as f64);
        Ok(total)
    }

    pub fn evaluate(&self, b: &IocBlocks) -> f64 {
        let ip = |a: &DMatrix<f64>, b: &DMatrix<f64>| a.component_mul(b).sum();
        let mut v = ip(&self.cQ, &b.Q) + self.cq.dot(&b.q);
        for t in 0..self.nu {
            v += ip(&self.cP[t], &b.P[t]) + self.ceta[t].dot(&b.eta[t]);
        }
        v + self.cxi.iter().zip(&b.xi).map(|(c, x)| c * x).sum::<f64>() + self.constant
    }
}

fn check_dataset(ds: &Dataset, sys: &SystemModel) -> Result<()> {
    if ds.records.is_empty() {
        return Err(Error::validation("dataset", "no trials"));
    }
    if ds.meta.n != sys.n() || ds.meta.m != sys.m() {
        return Err(Error::validation(
            "dataset",
            format!("dimensions (n={}, m={}) differ from the system (n={}, m={})", ds.meta.n, ds.meta.m, sys.n(), sys.m()),
        ));
    }
    if ds.meta.nu < 2 {
        return Err(Error::validation("dataset.nu", "longest horizon must be at least 2"));
    }
    ds.validate()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimatorOptions {
    /// Norm-ball radius; `None` drops the bounds.
    pub phi: Option<f64>,
    pub psd_value_matrices: bool,
    pub solve: SolveOptions,
    pub exec: Execution,
}

impl Default for EstimatorOptions {
    fn default() -> Self {
        EstimatorOptions { phi: Some(1e6), psd_value_matrices: false, solve: SolveOptions::default(), exec: Execution::default() }
    }
}

#[derive(Debug, Clone)]
pub struct IocProblem {
    pub sdp: SdpProblem,
    pub nu: usize,
    pub Q: VarId,
    pub q: VarId,
    pub P: Vec<VarId>,
    pub eta: Vec<VarId>,
    pub xi: Vec<VarId>,
}

/// Variables, equalities `P_ν = Q`, `η_ν = q`, the H-block cones and the
/// optional norm bounds. The objective is left at zero.
pub fn assemble_constraints(sys: &SystemModel, nu: usize, opts: &EstimatorOptions) -> Result<IocProblem> {
    sys.validate()?;
    if nu < 2 {
        return Err(Error::validation("nu", "longest horizon must be at least 2"));
    }
    let (n, m) = (sys.n(), sys.m());
    let mut p = SdpProblem::new();
    let Q = p.add_symmetric("Q", n);
    let q = p.add_vector("q", n);
    let P: Vec<VarId> = (1..=nu).map(|t| p.add_symmetric(format!("P_{t}"), n)).collect();
    let eta: Vec<VarId> = (1..=nu).map(|t| p.add_vector(format!("eta_{t}"), n)).collect();
    let xi: Vec<VarId> = (1..nu).map(|t| p.add_scalar(format!("xi_{t}"))).collect();

    p.equate_blocks(P[nu - 1], Q);
    p.equate_blocks(eta[nu - 1], q);

    let (A, B) = (&sys.A, &sys.B);
    let d = DMatrix::from_column_slice(n, 1, sys.d.as_slice());
    let In = DMatrix::identity(n, n);
    let (r1, r2) = (m, m + n);
    for t in 1..nu {
        let (pt, pn) = (P[t - 1], P[t]);
        let (et, en) = (eta[t - 1], eta[t]);
        let mut h = PsdConstraint::new(format!("H_{t}"), m + n + 1);
        h.add_constant(0, 0, &DMatrix::identity(m, m));
        h.add_sym_congruence(&p, 0, 0, pn, B, B, 1.0);
        h.add_sym_congruence(&p, 0, r1, pn, B, A, 1.0);
        h.add_vec_map(&p, 0, r2, en, &B.transpose(), 1.0);
        h.add_sym_congruence(&p, 0, r2, pn, B, &d, 1.0);
        h.add_sym_congruence(&p, r1, r1, pn, A, A, 1.0);
        h.add_sym(&p, r1, Q, 1.0);
        h.add_sym(&p, r1, pt, -1.0);
        h.add_vec_map(&p, r1, r2, q, &In, 1.0);
        h.add_sym_congruence(&p, r1, r2, pn, A, &d, 1.0);
        h.add_vec_map(&p, r1, r2, en, &A.transpose(), 1.0);
        h.add_vec_map(&p, r1, r2, et, &In, -1.0);
        h.add_scalar(&p, r2, xi[t - 1], 1.0);
        p.add_psd(h);
    }

    if opts.psd_value_matrices {
        for (t, &pt) in P.iter().enumerate() {
            let mut c = PsdConstraint::new(format!("P_{}", t + 1), n);
            c.add_sym(&p, 0, pt, 1.0);
            p.add_psd(c);
        }
    }

    if let Some(phi) = opts.phi {
        if !(phi.is_finite() && phi > 0.0) {
            return Err(Error::validation("phi", "must be positive and finite"));
        }
        let mut g = p.norm_entries(Q, 1.0);
        g.extend(p.norm_entries(q, std::f64::consts::SQRT_2));
        p.add_norm_bound("G", g, phi);
        for t in 0..nu {
            let e = p.norm_entries(P[t], 1.0);
            p.add_norm_bound(format!("P_{}", t + 1), e, phi);
            let e = p.norm_entries(eta[t], 1.0);
            p.add_norm_bound(format!("eta_{}", t + 1), e, phi);
        }
        for (t, &x) in xi.iter().enumerate() {
            let e = p.norm_entries(x, 1.0);
            p.add_norm_bound(format!("xi_{}", t + 1), e, phi);
        }
    }

    Ok(IocProblem { sdp: p, nu, Q, q, P, eta, xi })
}

impl IocProblem {
    pub fn set_objective(&mut self, obj: &EmpiricalObjective) {
        let p = &mut self.sdp;
        p.objective.iter_mut().for_each(|c| *c = 0.0);
        p.add_objective_sym(self.Q, &obj.cQ);
        p.add_objective_vec(self.q, &obj.cq);
        for t in 0..self.nu {
            p.add_objective_sym(self.P[t], &obj.cP[t]);
            p.add_objective_vec(self.eta[t], &obj.ceta[t]);
        }
        for (t, &x) in self.xi.iter().enumerate() {
            p.add_objective_scalar(x, obj.cxi[t]);
        }
    }

    pub fn blocks(&self, x: &[f64]) -> IocBlocks {
        let p = &self.sdp;
        IocBlocks {
            Q: p.extract_sym(x, self.Q),
            q: p.extract_vec(x, self.q),
            P: self.P.iter().map(|&v| p.extract_sym(x, v)).collect(),
            eta: self.eta.iter().map(|&v| p.extract_vec(x, v)).collect(),
            xi: self.xi.iter().map(|&v| p.extract_scalar(x, v)).collect(),
        }
    }

    /// Packs blocks into a variable vector.
    pub fn pack(&self, b: &IocBlocks) -> Vec<f64> {
        let p = &self.sdp;
        let mut x = vec![0.0; p.num_vars];
        let put_sym = |id: VarId, m: &DMatrix<f64>, x: &mut Vec<f64>| {
            for i in 0..m.nrows() {
                for j in i..m.ncols() {
                    x[p.sym_index(id, i, j)] = 0.5 * (m[(i, j)] + m[(j, i)]);
                }
            }
        };
        put_sym(self.Q, &b.Q, &mut x);
        for (t, &id) in self.P.iter().enumerate() {
            put_sym(id, &b.P[t], &mut x);
        }
        for i in 0..b.q.len() {
            x[p.vec_index(self.q, i)] = b.q[i];
        }
        for (t, &id) in self.eta.iter().enumerate() {
            for i in 0..b.eta[t].len() {
                x[p.vec_index(id, i)] = b.eta[t][i];
            }
        }
        for (t, &id) in self.xi.iter().enumerate() {
            x[p.scalar_index(id)] = b.xi[t];
        }
        x
    }
}

pub fn build_problem(ds: &Dataset, sys: &SystemModel, opts: &EstimatorOptions) -> Result<(IocProblem, EmpiricalObjective)> {
    let obj = EmpiricalObjective::from_dataset(ds, sys, opts.exec)?;
    let mut prob = assemble_constraints(sys, ds.meta.nu, opts)?;
    prob.set_objective(&obj);
    Ok((prob, obj))
}

#[derive(Debug, Clone)]
pub struct Estimate {
    pub blocks: IocBlocks,
    pub status: SdpStatus,
    pub objective_value: f64,
    /// `Ψ̂ + (1/M) Σ ½‖u‖²`, available when true controls are in the data.
    pub lower_bound_gap: Option<f64>,
    /// Some norm bound is within `1e-6` relative of its radius.
    pub bound_active: bool,
    pub residuals: ConstraintResiduals,
    pub iterations: u32,
    pub backend: &'static str,
}

impl Estimate {
    pub fn cost(&self) -> (&DMatrix<f64>, &DVector<f64>) {
        (&self.blocks.Q, &self.blocks.q)
    }
}

pub fn estimate(ds: &Dataset, sys: &SystemModel, opts: &EstimatorOptions) -> Result<Estimate> {
    estimate_with(ds, sys, opts, &ClarabelBackend::default())
}

pub fn estimate_with(
    ds: &Dataset,
    sys: &SystemModel,
    opts: &EstimatorOptions,
    backend: &dyn SdpBackend,
) -> Result<Estimate> {
    let (prob, _) = build_problem(ds, sys, opts)?;
    let sol = backend.solve(&prob.sdp, &opts.solve)?;
    if sol.status != SdpStatus::Optimal {
        let mut msg = format!("{} returned {} after {} iterations", backend.name(), sol.status, sol.iterations);
        if !sol.message.is_empty() {
            msg.push_str(": ");
            msg.push_str(&sol.message);
        }
        return Err(Error::Solver(msg));
    }
    let lower_bound_gap = ds.has_truth().then(|| {
        let energy: f64 = ds
            .records
            .iter()
            .map(|r| r.u.as_ref().map_or(0.0, |u| u.iter().map(|v| 0.5 * v.norm_squared()).sum()))
            .sum();
        sol.objective_value + energy / ds.records.len() as f64
    });
    let bound_active = prob.sdp.norm_bounds.iter().any(|b| b.value(&sol.x) >= b.radius * (1.0 - 1e-6));
    Ok(Estimate {
        blocks: prob.blocks(&sol.x),
        status: sol.status,
        objective_value: sol.objective_value,
        lower_bound_gap,
        bound_active,
        residuals: sol.residuals,
        iterations: sol.iterations,
        backend: backend.name(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ErrorMetrics {
    pub rel_err_Q: f64,
    pub rel_err_q: f64,
    /// The true `Q` or `q` had norm below the floor, so the error is
    /// relative to the floor.
    pub floored: bool,
}

pub fn error_metrics(Q_hat: &DMatrix<f64>, q_hat: &DVector<f64>, truth: &CostParams) -> ErrorMetrics {
    let nq = crate::linalg::frobenius(&truth.Q);
    let nv = truth.q.norm();
    ErrorMetrics {
        rel_err_Q: crate::linalg::frobenius(&(Q_hat - &truth.Q)) / nq.max(REL_ERR_FLOOR),
        rel_err_q: (q_hat - &truth.q).norm() / nv.max(REL_ERR_FLOOR),
        floored: nq < REL_ERR_FLOOR || nv < REL_ERR_FLOOR,
    }
}
