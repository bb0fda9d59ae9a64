//! Seeded random problem instances for cross-checks and benchmarks.
#![allow(non_snake_case)]

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::forward::riccati_backward;
use crate::linalg::{min_eigenvalue, numerical_rank};
use crate::model::{controllability_matrix, CostParams, SystemModel};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| rng.sample(StandardNormal))
}

pub fn gaussian_vector(rng: &mut ChaCha8Rng, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.sample(StandardNormal))
}

/// Symmetric matrix with eigenvalues drawn uniformly from `[lo, hi]` and a
/// random orthonormal eigenbasis.
pub fn random_symmetric(rng: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64) -> DMatrix<f64> {
    let q = gaussian_matrix(rng, n, n).qr().q();
    let eig = DVector::from_fn(n, |_, _| rng.random_range(lo..=hi));
    &q * DMatrix::from_diagonal(&eig) * q.transpose()
}

/// Noiseless system with invertible `A`, full-column-rank `B` and `(A, B)`
/// controllable.
pub fn random_system(rng: &mut ChaCha8Rng, n: usize, m: usize) -> SystemModel {
    loop {
        let A = DMatrix::identity(n, n) + gaussian_matrix(rng, n, n) * 0.3;
        let B = gaussian_matrix(rng, n, m) * 0.7;
        let d = gaussian_vector(rng, n) * 0.2;
        if A.determinant().abs() < 0.2 || numerical_rank(&B) < m {
            continue;
        }
        if numerical_rank(&controllability_matrix(&A, &B)) < n {
            continue;
        }
        return SystemModel::new(A, B, d, DMatrix::zeros(n, n), DMatrix::zeros(n, n))
            .expect("generated system is valid");
    }
}

/// `Q` with eigenvalues in `[lo, hi]`, Gaussian `q`, `R = I`.
pub fn random_cost(rng: &mut ChaCha8Rng, n: usize, m: usize, lo: f64, hi: f64) -> CostParams {
    let Q = random_symmetric(rng, n, lo, hi);
    let q = gaussian_vector(rng, n) * 0.5;
    CostParams::with_identity_r(Q, q, m).expect("generated cost is valid")
}

/// Smallest `λ_min(𝔯R_t)` over the horizon.
pub fn rfrak_margin(sys: &SystemModel, cost: &CostParams, nu: usize) -> f64 {
    riccati_backward(sys, cost, nu)
        .map(|sol| sol.Rfrak.iter().map(min_eigenvalue).fold(f64::INFINITY, f64::min))
        .unwrap_or(f64::NEG_INFINITY)
}

#[derive(Debug, Clone)]
pub struct Instance {
    pub system: SystemModel,
    pub cost: CostParams,
    pub nu: usize,
}

/// Rejection-samples a problem whose every `𝔯R_t` has `λ_min ≥ margin`,
/// with `n ≤ max_n`, `m ≤ min(n, max_m)` and `2 ≤ ν ≤ max_nu`. `Q` may be
/// indefinite.
pub fn random_feasible_instance(rng: &mut ChaCha8Rng, max_n: usize, max_m: usize, max_nu: usize, margin: f64) -> Instance {
    loop {
        let n = rng.random_range(1..=max_n);
        let m = rng.random_range(1..=max_m.min(n));
        let nu = rng.random_range(2..=max_nu);
        let system = random_system(rng, n, m);
        let cost = random_cost(rng, n, m, -1.0, 1.5);
        if rfrak_margin(&system, &cost, nu) >= margin {
            return Instance { system, cost, nu };
        }
    }
}

/// Instance with `Q` eigenvalues in `[lo, hi]` and no feasibility filter.
pub fn random_instance(rng: &mut ChaCha8Rng, max_n: usize, max_m: usize, max_nu: usize, lo: f64, hi: f64) -> Instance {
    let n = rng.random_range(1..=max_n);
    let m = rng.random_range(1..=max_m.min(n));
    let nu = rng.random_range(2..=max_nu);
    let system = random_system(rng, n, m);
    let cost = random_cost(rng, n, m, lo, hi);
    Instance { system, cost, nu }
}
