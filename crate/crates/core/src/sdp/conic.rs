//! Lowering to the standard conic form `min cᵀx  s.t.  Ax + s = b, s ∈ K`.
//!
//! Row order: equalities (zero cone), norm bounds (second-order cones), then
//! PSD constraints in scaled upper-triangular column-major vectorization.

use std::f64::consts::SQRT_2;

use nalgebra::DMatrix;

use super::problem::SdpProblem;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Cone {
    Zero(usize),
    SecondOrder(usize),
    /// Side length of the matrix; occupies `n(n+1)/2` rows.
    Psd(usize),
}

impl Cone {
    pub fn rows(&self) -> usize {
        match *self {
            Cone::Zero(k) | Cone::SecondOrder(k) => k,
            Cone::Psd(n) => n * (n + 1) / 2,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ConicForm {
    pub num_vars: usize,
    pub num_rows: usize,
    /// `(row, col, value)`; duplicates are summed.
    pub a: Vec<(usize, usize, f64)>,
    pub b: Vec<f64>,
    pub c: Vec<f64>,
    pub cones: Vec<Cone>,
}

pub fn svec_index(i: usize, j: usize) -> usize {
    let (i, j) = if i <= j { (i, j) } else { (j, i) };
    j * (j + 1) / 2 + i
}

pub fn svec(m: &DMatrix<f64>) -> Vec<f64> {
    let n = m.nrows();
    let mut out = vec![0.0; n * (n + 1) / 2];
    for j in 0..n {
        for i in 0..=j {
            out[svec_index(i, j)] = if i == j { m[(i, i)] } else { SQRT_2 * m[(i, j)] };
        }
    }
    out
}

pub fn smat(v: &[f64], n: usize) -> DMatrix<f64> {
    DMatrix::from_fn(n, n, |i, j| {
        let x = v[svec_index(i, j)];
        if i == j {
            x
        } else {
            x / SQRT_2
        }
    })
}

impl ConicForm {
    /// When `scale_psd` is set each PSD block is divided by `max(1, ‖C‖_F)`.
    pub fn from_problem(p: &SdpProblem, scale_psd: bool) -> Self {
        let mut a = Vec::new();
        let mut b = Vec::new();
        let mut cones = Vec::new();

        if !p.equalities.is_empty() {
            for e in &p.equalities {
                let row = b.len();
                a.extend(e.coeffs.iter().map(|&(k, v)| (row, k, v)));
                b.push(e.rhs);
            }
            cones.push(Cone::Zero(p.equalities.len()));
        }

        for nb in &p.norm_bounds {
            let row = b.len();
            b.push(nb.radius);
            for (i, &(k, w)) in nb.entries.iter().enumerate() {
                a.push((row + 1 + i, k, -w));
                b.push(0.0);
            }
            cones.push(Cone::SecondOrder(1 + nb.entries.len()));
        }

        for c in &p.psd {
            let row = b.len();
            let scale = if scale_psd { 1.0 / crate::linalg::frobenius(&c.constant).max(1.0) } else { 1.0 };
            b.extend(svec(&c.constant).into_iter().map(|v| v * scale));
            for (&(i, j, k), &v) in &c.terms {
                let w = if i == j { v } else { SQRT_2 * v };
                a.push((row + svec_index(i, j), k, -w * scale));
            }
            cones.push(Cone::Psd(c.dim));
        }

        ConicForm { num_vars: p.num_vars, num_rows: b.len(), a, b, c: p.objective.clone(), cones }
    }

    pub fn dense_a(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.num_rows, self.num_vars);
        for &(i, j, v) in &self.a {
            m[(i, j)] += v;
        }
        m
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn svec_preserves_inner_products() {
        let x = DMatrix::from_row_slice(3, 3, &[2.0, 0.5, -1.0, 0.5, 1.0, 0.3, -1.0, 0.3, 4.0]);
        let y = DMatrix::from_row_slice(3, 3, &[1.0, -0.2, 0.0, -0.2, 3.0, 1.5, 0.0, 1.5, -2.0]);
        let ip: f64 = svec(&x).iter().zip(svec(&y)).map(|(a, b)| a * b).sum();
        assert!((ip - x.component_mul(&y).sum()).abs() < 1e-12);
        assert!((smat(&svec(&x), 3) - x).norm() < 1e-14);
    }
}
