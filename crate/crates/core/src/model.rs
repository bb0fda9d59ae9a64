//! Problem data: dynamics, noise, cost, horizon and initial-state laws, and the
//! standing-assumption checks run before any forward or inverse computation.
#![allow(non_snake_case)]

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{self, min_eigenvalue, numerical_rank_with};

/// Numerical tolerances shared by the assumption checks and the forward solver.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    /// Relative rank cutoff, scaled by `sigma_max * max(dim)`.
    pub rank: f64,
    /// Relative PSD cutoff, scaled by `max(1, ‖·‖_F)`.
    pub psd: f64,
    /// Relative kernel-containment cutoff, scaled by `max(1, ‖[S, g]‖_F)`.
    pub ker: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            rank: 1e-10,
            psd: 1e-10,
            ker: 1e-8,
        }
    }
}

impl Tolerances {
    pub fn scaled(&self, factor: f64) -> Self {
        Tolerances {
            rank: self.rank * factor,
            psd: self.psd * factor,
            ker: self.ker * factor,
        }
    }
}

fn check_psd(field: &str, m: &DMatrix<f64>, n: usize, tol: f64) -> Result<()> {
    if m.shape() != (n, n) {
        return Err(Error::validation(
            field,
            format!("expected {n}x{n}, got {}x{}", m.nrows(), m.ncols()),
        ));
    }
    if !linalg::is_symmetric(m, 1e-12) {
        return Err(Error::validation(field, "matrix is not symmetric"));
    }
    let lmin = min_eigenvalue(m);
    if lmin < -tol * linalg::frobenius(m) {
        return Err(Error::validation(
            field,
            format!("matrix is not positive semidefinite (min eigenvalue {lmin:e})"),
        ));
    }
    Ok(())
}

/// Linear dynamics `x⁺ = A x + B u + d + w` observed as `y = x + v`.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemModel {
    pub A: DMatrix<f64>,
    pub B: DMatrix<f64>,
    pub d: DVector<f64>,
    pub sigma_w: DMatrix<f64>,
    pub sigma_v: DMatrix<f64>,
}

impl SystemModel {
    pub fn new(
        A: DMatrix<f64>,
        B: DMatrix<f64>,
        d: DVector<f64>,
        sigma_w: DMatrix<f64>,
        sigma_v: DMatrix<f64>,
    ) -> Result<Self> {
        let sys = SystemModel {
            A,
            B,
            d,
            sigma_w,
            sigma_v,
        };
        sys.validate()?;
        Ok(sys)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.A.nrows();
        if n == 0 || !self.A.is_square() {
            return Err(Error::validation(
                "system.A",
                format!("must be square and nonempty, got {}x{}", self.A.nrows(), self.A.ncols()),
            ));
        }
        if self.B.nrows() != n || self.B.ncols() == 0 {
            return Err(Error::validation(
                "system.B",
                format!("expected {n} rows and at least one column, got {}x{}", self.B.nrows(), self.B.ncols()),
            ));
        }
        if self.d.len() != n {
            return Err(Error::validation(
                "system.d",
                format!("expected {n} entries, got {}", self.d.len()),
            ));
        }
        let tol = Tolerances::default().psd;
        check_psd("system.sigma_w", &self.sigma_w, n, tol)?;
        check_psd("system.sigma_v", &self.sigma_v, n, tol)?;
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.A.nrows()
    }

    pub fn m(&self) -> usize {
        self.B.ncols()
    }

    /// Copy of the system with both noise covariances set to zero.
    pub fn noiseless(&self) -> Self {
        let n = self.n();
        SystemModel {
            sigma_w: DMatrix::zeros(n, n),
            sigma_v: DMatrix::zeros(n, n),
            ..self.clone()
        }
    }
}

/// Stage cost `½xᵀQx + qᵀx + ½uᵀRu`; `Q` may be indefinite.
#[derive(Debug, Clone, PartialEq)]
pub struct CostParams {
    pub Q: DMatrix<f64>,
    pub q: DVector<f64>,
    pub R: DMatrix<f64>,
}

impl CostParams {
    pub fn new(Q: DMatrix<f64>, q: DVector<f64>, R: DMatrix<f64>) -> Result<Self> {
        let c = CostParams { Q, q, R };
        if !c.Q.is_square() || !linalg::is_symmetric(&c.Q, 1e-12) {
            return Err(Error::validation("cost.Q", "must be square and symmetric"));
        }
        if c.q.len() != c.Q.nrows() {
            return Err(Error::validation(
                "cost.q",
                format!("expected {} entries, got {}", c.Q.nrows(), c.q.len()),
            ));
        }
        if !c.R.is_square() || !linalg::is_symmetric(&c.R, 1e-12) {
            return Err(Error::validation("cost.R", "must be square and symmetric"));
        }
        Ok(c)
    }

    /// Cost with `R = I`, the normalization used by the inverse problem.
    pub fn with_identity_r(Q: DMatrix<f64>, q: DVector<f64>, m: usize) -> Result<Self> {
        Self::new(Q, q, DMatrix::identity(m, m))
    }

    pub fn zero(n: usize, m: usize) -> Self {
        CostParams {
            Q: DMatrix::zeros(n, n),
            q: DVector::zeros(n),
            R: DMatrix::identity(m, m),
        }
    }

    pub fn check_against(&self, sys: &SystemModel) -> Result<()> {
        if self.Q.nrows() != sys.n() {
            return Err(Error::validation(
                "cost.Q",
                format!("expected {n}x{n} to match the state dimension", n = sys.n()),
            ));
        }
        if self.R.nrows() != sys.m() {
            return Err(Error::validation(
                "cost.R",
                format!("expected {m}x{m} to match the input dimension", m = sys.m()),
            ));
        }
        Ok(())
    }

    pub fn has_identity_r(&self) -> bool {
        let m = self.R.nrows();
        (&self.R - DMatrix::<f64>::identity(m, m)).norm() <= 1e-12
    }
}

/// Law of the planning horizon `N ∈ {2, …, ν}`.
#[derive(Debug, Clone, PartialEq)]
pub struct HorizonDistribution {
    nu: usize,
    probs: Vec<f64>,
}

impl HorizonDistribution {
    /// `probs[k]` is `P(N = k + 2)`.
    pub fn new(nu: usize, probs: Vec<f64>) -> Result<Self> {
        if nu < 2 {
            return Err(Error::validation("horizon.nu", "must be at least 2"));
        }
        if probs.len() != nu - 1 {
            return Err(Error::validation(
                "horizon.probs",
                format!("expected {} entries for N = 2..={nu}, got {}", nu - 1, probs.len()),
            ));
        }
        if let Some(k) = probs.iter().position(|p| !p.is_finite() || *p < 0.0) {
            return Err(Error::validation(
                "horizon.probs",
                format!("entry for N = {} is negative or not finite", k + 2),
            ));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::validation(
                "horizon.probs",
                format!("probabilities sum to {total}, expected 1"),
            ));
        }
        Ok(HorizonDistribution { nu, probs })
    }

    pub fn uniform(nu: usize) -> Result<Self> {
        if nu < 2 {
            return Err(Error::validation("horizon.nu", "must be at least 2"));
        }
        let k = nu - 1;
        Self::new(nu, vec![1.0 / k as f64; k])
    }

    /// Point mass on the longest horizon.
    pub fn longest_only(nu: usize) -> Result<Self> {
        if nu < 2 {
            return Err(Error::validation("horizon.nu", "must be at least 2"));
        }
        let mut probs = vec![0.0; nu - 1];
        probs[nu - 2] = 1.0;
        Self::new(nu, probs)
    }

    pub fn nu(&self) -> usize {
        self.nu
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn prob(&self, horizon: usize) -> f64 {
        if horizon < 2 || horizon > self.nu {
            0.0
        } else {
            self.probs[horizon - 2]
        }
    }

    pub fn support(&self) -> impl Iterator<Item = usize> + '_ {
        (2..=self.nu).filter(|&h| self.prob(h) > 0.0)
    }

    /// Inverse-CDF draw from a uniform variate in `[0, 1)`.
    pub fn sample_with(&self, u: f64) -> usize {
        let mut acc = 0.0;
        for (k, p) in self.probs.iter().enumerate() {
            acc += p;
            if u < acc && *p > 0.0 {
                return k + 2;
            }
        }
        self.support().last().unwrap_or(self.nu)
    }
}

/// A Gaussian law with strictly positive definite covariance.
#[derive(Debug, Clone, PartialEq)]
pub struct Gaussian {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum InitialLaw {
    Gaussian(Gaussian),
    Mixture(Vec<(f64, Gaussian)>),
}

impl InitialLaw {
    pub fn gaussian(mean: DVector<f64>, cov: DMatrix<f64>) -> Self {
        InitialLaw::Gaussian(Gaussian { mean, cov })
    }

    pub fn components(&self) -> Vec<(f64, &Gaussian)> {
        match self {
            InitialLaw::Gaussian(g) => vec![(1.0, g)],
            InitialLaw::Mixture(cs) => cs.iter().map(|(w, g)| (*w, g)).collect(),
        }
    }

    fn validate(&self, field: &str, n: Option<usize>) -> Result<()> {
        let comps = self.components();
        if comps.is_empty() {
            return Err(Error::validation(field, "mixture has no components"));
        }
        if let InitialLaw::Mixture(cs) = self {
            if cs.iter().any(|(w, _)| !w.is_finite() || *w <= 0.0) {
                return Err(Error::validation(field, "mixture weights must be positive"));
            }
            let total: f64 = cs.iter().map(|(w, _)| w).sum();
            if (total - 1.0).abs() > 1e-12 {
                return Err(Error::validation(field, format!("mixture weights sum to {total}")));
            }
        }
        let dim = n.unwrap_or(comps[0].1.mean.len());
        for (_, g) in comps {
            if g.mean.len() != dim || g.cov.shape() != (dim, dim) {
                return Err(Error::validation(field, format!("component dimension differs from {dim}")));
            }
            if !linalg::is_symmetric(&g.cov, 1e-12) {
                return Err(Error::validation(field, "covariance is not symmetric"));
            }
            if !is_strictly_pd(&g.cov) {
                return Err(Error::validation(
                    field,
                    "covariance must be strictly positive definite",
                ));
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.components()[0].1.mean.len()
    }
}

fn is_strictly_pd(cov: &DMatrix<f64>) -> bool {
    let tol = Tolerances::default().psd;
    min_eigenvalue(cov) > tol * linalg::frobenius(cov).max(f64::MIN_POSITIVE)
}

/// Law of the initial state, optionally overridden per horizon realization.
#[derive(Debug, Clone, PartialEq)]
pub struct InitialStateDistribution {
    default: InitialLaw,
    per_horizon: BTreeMap<usize, InitialLaw>,
}

impl InitialStateDistribution {
    pub fn new(default: InitialLaw) -> Result<Self> {
        Self::with_overrides(default, BTreeMap::new())
    }

    pub fn with_overrides(default: InitialLaw, per_horizon: BTreeMap<usize, InitialLaw>) -> Result<Self> {
        default.validate("initial_state", None)?;
        let n = default.dim();
        for (h, law) in &per_horizon {
            law.validate(&format!("initial_state.override[{h}]"), Some(n))?;
        }
        Ok(InitialStateDistribution { default, per_horizon })
    }

    pub fn standard_gaussian(n: usize) -> Self {
        InitialStateDistribution {
            default: InitialLaw::gaussian(DVector::zeros(n), DMatrix::identity(n, n)),
            per_horizon: BTreeMap::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.default.dim()
    }

    pub fn law_for(&self, horizon: usize) -> &InitialLaw {
        self.per_horizon.get(&horizon).unwrap_or(&self.default)
    }

    pub fn default_law(&self) -> &InitialLaw {
        &self.default
    }

    pub fn overrides(&self) -> &BTreeMap<usize, InitialLaw> {
        &self.per_horizon
    }

    fn all_laws(&self) -> impl Iterator<Item = &InitialLaw> {
        std::iter::once(&self.default).chain(self.per_horizon.values())
    }
}

/// Full data of one forward/inverse problem instance.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub system: SystemModel,
    pub cost: CostParams,
    pub horizon: HorizonDistribution,
    pub init: InitialStateDistribution,
}

impl Scenario {
    pub fn new(
        system: SystemModel,
        cost: CostParams,
        horizon: HorizonDistribution,
        init: InitialStateDistribution,
    ) -> Result<Self> {
        system.validate()?;
        cost.check_against(&system)?;
        if init.dim() != system.n() {
            return Err(Error::validation(
                "initial_state",
                format!("dimension {} differs from state dimension {}", init.dim(), system.n()),
            ));
        }
        Ok(Scenario {
            system,
            cost,
            horizon,
            init,
        })
    }

    pub fn nu(&self) -> usize {
        self.horizon.nu()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize)]
pub struct AssumptionReport {
    pub controllable: bool,
    pub a_invertible: bool,
    pub b_full_column_rank: bool,
    pub horizon_ok: bool,
    pub excitation_ok: bool,
    pub details: Vec<String>,
}

impl AssumptionReport {
    pub fn all_hold(&self) -> bool {
        self.controllable && self.a_invertible && self.b_full_column_rank && self.horizon_ok && self.excitation_ok
    }
}

/// `[B, AB, …, A^{n-1}B]`.
pub fn controllability_matrix(A: &DMatrix<f64>, B: &DMatrix<f64>) -> DMatrix<f64> {
    let n = A.nrows();
    let m = B.ncols();
    let mut out = DMatrix::zeros(n, n * m);
    let mut block = B.clone();
    for k in 0..n {
        out.view_mut((0, k * m), (n, m)).copy_from(&block);
        block = A * &block;
    }
    out
}

pub fn check_assumptions(
    sys: &SystemModel,
    horizon: &HorizonDistribution,
    init: &InitialStateDistribution,
) -> Result<AssumptionReport> {
    check_assumptions_with(sys, horizon, init, &Tolerances::default())
}

pub fn check_assumptions_with(
    sys: &SystemModel,
    horizon: &HorizonDistribution,
    init: &InitialStateDistribution,
    tol: &Tolerances,
) -> Result<AssumptionReport> {
    sys.validate()?;
    let n = sys.n();
    let m = sys.m();
    if init.dim() != n {
        return Err(Error::validation(
            "initial_state",
            format!("dimension {} differs from state dimension {n}", init.dim()),
        ));
    }
    let mut details = Vec::new();

    let ctrb_rank = numerical_rank_with(&controllability_matrix(&sys.A, &sys.B), tol.rank);
    let controllable = ctrb_rank == n;
    if !controllable {
        details.push(format!("controllability matrix has rank {ctrb_rank} < {n}"));
    }

    let a_rank = numerical_rank_with(&sys.A, tol.rank);
    let a_invertible = a_rank == n;
    if !a_invertible {
        details.push(format!("A is numerically singular (rank {a_rank} < {n})"));
    }

    let b_rank = numerical_rank_with(&sys.B, tol.rank);
    let b_full_column_rank = b_rank == m;
    if !b_full_column_rank {
        details.push(format!("B has rank {b_rank} < {m} columns"));
    }

    let nu = horizon.nu();
    let mut horizon_ok = true;
    if nu < n + 1 {
        horizon_ok = false;
        details.push(format!("nu = {nu} is below n + 1 = {}", n + 1));
    }
    if horizon.prob(nu) <= 0.0 {
        horizon_ok = false;
        details.push(format!("P(N = {nu}) must be positive"));
    }

    let mut excitation_ok = true;
    for law in init.all_laws() {
        for (_, g) in law.components() {
            if !is_strictly_pd(&g.cov) {
                excitation_ok = false;
                details.push("an initial-state covariance is not strictly positive definite".into());
            }
        }
    }
    for h in init.overrides().keys() {
        if *h < 2 || *h > nu {
            details.push(format!("initial-state override for horizon {h} is outside 2..={nu} and unused"));
        }
    }

    Ok(AssumptionReport {
        controllable,
        a_invertible,
        b_full_column_rank,
        horizon_ok,
        excitation_ok,
        details,
    })
}

/// Affine augmentation `Ã = [[A, d], [0ᵀ, 1]]`, `B̃ = [[B], [0ᵀ]]`.
pub fn build_extended_system(sys: &SystemModel) -> (DMatrix<f64>, DMatrix<f64>) {
    let n = sys.n();
    let m = sys.m();
    let mut a_tilde = DMatrix::zeros(n + 1, n + 1);
    a_tilde.view_mut((0, 0), (n, n)).copy_from(&sys.A);
    a_tilde.view_mut((0, n), (n, 1)).copy_from(&sys.d);
    a_tilde[(n, n)] = 1.0;
    let mut b_tilde = DMatrix::zeros(n + 1, m);
    b_tilde.view_mut((0, 0), (n, m)).copy_from(&sys.B);
    (a_tilde, b_tilde)
}
