//! Dense operator-splitting backend for small instances. Used to cross-check
//! the interior-point backend; it is not tuned for speed.

use nalgebra::{DMatrix, DVector};

use super::conic::{smat, svec, Cone, ConicForm};
use super::{SdpBackend, SdpProblem, SdpSolution, SdpStatus, SolveOptions};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy)]
pub struct AdmmBackend {
    pub rho: f64,
    pub sigma: f64,
    /// Iteration cap; `SolveOptions::max_iter` is ignored since splitting
    /// methods need far more iterations than interior-point ones.
    pub max_iter: u32,
    pub max_vars: usize,
}

impl Default for AdmmBackend {
    fn default() -> Self {
        AdmmBackend { rho: 1.0, sigma: 1e-6, max_iter: 200_000, max_vars: 2_000 }
    }
}

fn project_soc(v: &mut [f64]) {
    let t = v[0];
    let norm = v[1..].iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm <= t {
        return;
    }
    if norm <= -t {
        v.iter_mut().for_each(|x| *x = 0.0);
        return;
    }
    let a = 0.5 * (t + norm);
    v[0] = a;
    let s = a / norm;
    v[1..].iter_mut().for_each(|x| *x *= s);
}

fn project_psd(v: &mut [f64], n: usize) {
    let m = smat(v, n);
    let eig = m.symmetric_eigen();
    let clamped = eig.eigenvalues.map(|l| l.max(0.0));
    let p = &eig.eigenvectors * DMatrix::from_diagonal(&clamped) * eig.eigenvectors.transpose();
    v.copy_from_slice(&svec(&p));
}

fn project(cones: &[Cone], v: &mut DVector<f64>) {
    let mut row = 0;
    for c in cones {
        let k = c.rows();
        let seg = &mut v.as_mut_slice()[row..row + k];
        match *c {
            Cone::Zero(_) => seg.iter_mut().for_each(|x| *x = 0.0),
            Cone::SecondOrder(_) => project_soc(seg),
            Cone::Psd(n) => project_psd(seg, n),
        }
        row += k;
    }
}

impl SdpBackend for AdmmBackend {
    fn name(&self) -> &'static str {
        "admm"
    }

    fn solve(&self, problem: &SdpProblem, opts: &SolveOptions) -> Result<SdpSolution> {
        problem.validate()?;
        if problem.num_vars > self.max_vars {
            return Err(Error::Solver(format!(
                "admm backend handles at most {} variables, problem has {}",
                self.max_vars, problem.num_vars
            )));
        }
        let form = ConicForm::from_problem(problem, true);
        let a = form.dense_a();
        let b = DVector::from_vec(form.b.clone());
        let c = DVector::from_vec(form.c.clone());
        let nv = form.num_vars;
        let (rho, sigma) = (self.rho, self.sigma);

        let kkt = a.transpose() * &a * rho + DMatrix::identity(nv, nv) * sigma;
        let chol = kkt
            .cholesky()
            .ok_or_else(|| Error::Solver("admm: normal matrix is not positive definite".into()))?;

        let mut x = DVector::zeros(nv);
        let mut s = DVector::zeros(form.num_rows);
        project(&form.cones, &mut s);
        let mut u = DVector::zeros(form.num_rows);
        let bnorm = b.norm().max(1.0);
        let cnorm = c.norm().max(1.0);

        let mut status = SdpStatus::MaxIterations;
        let mut iterations = 0;
        for k in 1..=self.max_iter {
            iterations = k;
            let rhs = &x * sigma - &c - a.transpose() * ((&s - &b + &u) * rho);
            x = chol.solve(&rhs);
            let ax = &a * &x;
            let mut s_new = &b - &ax - &u;
            project(&form.cones, &mut s_new);
            let r_prim = (&ax + &s_new - &b).norm();
            let r_dual = rho * (a.transpose() * (&s_new - &s)).norm();
            u += &ax + &s_new - &b;
            s = s_new;
            if k % 10 == 0 {
                if !x.iter().all(|v| v.is_finite()) {
                    status = SdpStatus::NumericalFailure;
                    break;
                }
                if r_prim <= opts.tol_feas * bnorm && r_dual <= opts.tol_feas * cnorm {
                    status = SdpStatus::Optimal;
                    break;
                }
            }
        }

        let xs: Vec<f64> = x.iter().copied().collect();
        let duals = &u * rho;
        let dual_obj = -(b.dot(&duals));
        let objective_value = problem.objective_value(&xs);
        Ok(SdpSolution {
            status,
            residuals: problem.residuals(&xs),
            gap: Some((objective_value - dual_obj).abs() / objective_value.abs().max(1.0)),
            objective_value,
            x: xs,
            iterations,
            message: String::new(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn soc_projection_lands_on_the_boundary() {
        let mut v = [1.0, 3.0, 4.0];
        project_soc(&mut v);
        assert!((v[0] - 3.0).abs() < 1e-12);
        assert!(((v[1] * v[1] + v[2] * v[2]).sqrt() - 3.0).abs() < 1e-12);
    }

    #[test]
    fn psd_projection_clamps_negative_eigenvalues() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        let mut v = svec(&m);
        project_psd(&mut v, 2);
        let p = smat(&v, 2);
        assert!((p - DMatrix::from_element(2, 2, 1.5)).norm() < 1e-12);
    }
}
