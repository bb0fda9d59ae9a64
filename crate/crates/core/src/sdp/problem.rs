//! Linear objective over symmetric-matrix, vector and scalar variable blocks,
//! with linear equalities, affine PSD constraints and Euclidean norm bounds.
//!
//! A symmetric `n×n` block is stored as its upper triangle, row-major over
//! `i ≤ j`, one scalar per entry.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{frobenius, min_eigenvalue};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VarKind {
    Symmetric(usize),
    Vector(usize),
    Scalar,
}

impl VarKind {
    pub fn len(&self) -> usize {
        match *self {
            VarKind::Symmetric(n) => n * (n + 1) / 2,
            VarKind::Vector(n) => n,
            VarKind::Scalar => 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct VarId(pub usize);

#[derive(Debug, Clone, PartialEq)]
pub struct VarBlock {
    pub name: String,
    pub kind: VarKind,
    pub offset: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearEquality {
    pub coeffs: Vec<(usize, f64)>,
    pub rhs: f64,
}

/// `M(x) = C + Σ_k x_k F_k ⪰ 0`, stored as the upper-triangle entries of each
/// `F_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct PsdConstraint {
    pub label: String,
    pub dim: usize,
    pub constant: DMatrix<f64>,
    /// `(row, col, var) -> coefficient`, `row ≤ col`.
    pub terms: BTreeMap<(usize, usize, usize), f64>,
}

/// `‖(w_i x_{k_i})_i‖₂ ≤ radius`.
#[derive(Debug, Clone, PartialEq)]
pub struct NormBound {
    pub label: String,
    pub entries: Vec<(usize, f64)>,
    pub radius: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SdpProblem {
    pub blocks: Vec<VarBlock>,
    pub num_vars: usize,
    pub objective: Vec<f64>,
    pub equalities: Vec<LinearEquality>,
    pub psd: Vec<PsdConstraint>,
    pub norm_bounds: Vec<NormBound>,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ConstraintResiduals {
    /// `max |aᵀx - b| / (1 + |b|)`.
    pub equality: f64,
    /// `max(0, -λ_min(M(x))) / max(1, ‖C‖_F)` over PSD constraints.
    pub psd: f64,
    /// `max(0, ‖·‖ - radius) / max(1, radius)` over norm bounds.
    pub norm: f64,
}

impl ConstraintResiduals {
    pub fn max(&self) -> f64 {
        self.equality.max(self.psd).max(self.norm)
    }
}

impl SdpProblem {
    pub fn new() -> Self {
        Self::default()
    }

    fn add_block(&mut self, name: impl Into<String>, kind: VarKind) -> VarId {
        let id = VarId(self.blocks.len());
        self.blocks.push(VarBlock { name: name.into(), kind, offset: self.num_vars });
        self.num_vars += kind.len();
        self.objective.resize(self.num_vars, 0.0);
        id
    }

    pub fn add_symmetric(&mut self, name: impl Into<String>, n: usize) -> VarId {
        self.add_block(name, VarKind::Symmetric(n))
    }

    pub fn add_vector(&mut self, name: impl Into<String>, n: usize) -> VarId {
        self.add_block(name, VarKind::Vector(n))
    }

    pub fn add_scalar(&mut self, name: impl Into<String>) -> VarId {
        self.add_block(name, VarKind::Scalar)
    }

    pub fn block(&self, id: VarId) -> &VarBlock {
        &self.blocks[id.0]
    }

    fn sym_dim(&self, id: VarId) -> usize {
        match self.block(id).kind {
            VarKind::Symmetric(n) => n,
            k => panic!("block {} is {k:?}, not symmetric", self.block(id).name),
        }
    }

    fn vec_dim(&self, id: VarId) -> usize {
        match self.block(id).kind {
            VarKind::Vector(n) => n,
            k => panic!("block {} is {k:?}, not a vector", self.block(id).name),
        }
    }

    /// Index of entry `(i, j)` of a symmetric block, in either order.
    pub fn sym_index(&self, id: VarId, i: usize, j: usize) -> usize {
        let n = self.sym_dim(id);
        let (i, j) = if i <= j { (i, j) } else { (j, i) };
        assert!(j < n);
        self.block(id).offset + i * n - i * (i + 1) / 2 + j
    }

    pub fn vec_index(&self, id: VarId, i: usize) -> usize {
        assert!(i < self.vec_dim(id));
        self.block(id).offset + i
    }

    pub fn scalar_index(&self, id: VarId) -> usize {
        assert_eq!(self.block(id).kind, VarKind::Scalar);
        self.block(id).offset
    }

    /// Adds `⟨C, X⟩` to the objective.
    pub fn add_objective_sym(&mut self, id: VarId, c: &DMatrix<f64>) {
        let n = self.sym_dim(id);
        assert_eq!(c.shape(), (n, n));
        for i in 0..n {
            for j in i..n {
                let k = self.sym_index(id, i, j);
                self.objective[k] += if i == j { c[(i, i)] } else { c[(i, j)] + c[(j, i)] };
            }
        }
    }

    pub fn add_objective_vec(&mut self, id: VarId, c: &DVector<f64>) {
        for i in 0..self.vec_dim(id) {
            let k = self.vec_index(id, i);
            self.objective[k] += c[i];
        }
    }

    pub fn add_objective_scalar(&mut self, id: VarId, c: f64) {
        let k = self.scalar_index(id);
        self.objective[k] += c;
    }

    pub fn add_equality(&mut self, coeffs: Vec<(usize, f64)>, rhs: f64) {
        self.equalities.push(LinearEquality { coeffs, rhs });
    }

    /// Entrywise `a = b` for two blocks of the same kind.
    pub fn equate_blocks(&mut self, a: VarId, b: VarId) {
        let (ka, kb) = (self.block(a).kind, self.block(b).kind);
        assert_eq!(ka, kb, "blocks must have the same kind");
        let (oa, ob) = (self.block(a).offset, self.block(b).offset);
        for i in 0..ka.len() {
            self.add_equality(vec![(oa + i, 1.0), (ob + i, -1.0)], 0.0);
        }
    }

    pub fn add_psd(&mut self, c: PsdConstraint) {
        self.psd.push(c);
    }

    pub fn add_norm_bound(&mut self, label: impl Into<String>, entries: Vec<(usize, f64)>, radius: f64) {
        self.norm_bounds.push(NormBound { label: label.into(), entries, radius });
    }

    /// Entries of a block weighted so that their 2-norm is the block's
    /// Frobenius/Euclidean norm, scaled by `weight`.
    pub fn norm_entries(&self, id: VarId, weight: f64) -> Vec<(usize, f64)> {
        match self.block(id).kind {
            VarKind::Symmetric(n) => {
                let mut out = Vec::with_capacity(n * (n + 1) / 2);
                for i in 0..n {
                    for j in i..n {
                        let w = if i == j { weight } else { weight * std::f64::consts::SQRT_2 };
                        out.push((self.sym_index(id, i, j), w));
                    }
                }
                out
            }
            VarKind::Vector(n) => (0..n).map(|i| (self.vec_index(id, i), weight)).collect(),
            VarKind::Scalar => vec![(self.scalar_index(id), weight)],
        }
    }

    pub fn extract_sym(&self, x: &[f64], id: VarId) -> DMatrix<f64> {
        let n = self.sym_dim(id);
        DMatrix::from_fn(n, n, |i, j| x[self.sym_index(id, i, j)])
    }

    pub fn extract_vec(&self, x: &[f64], id: VarId) -> DVector<f64> {
        let n = self.vec_dim(id);
        DVector::from_fn(n, |i, _| x[self.vec_index(id, i)])
    }

    pub fn extract_scalar(&self, x: &[f64], id: VarId) -> f64 {
        x[self.scalar_index(id)]
    }

    pub fn objective_value(&self, x: &[f64]) -> f64 {
        self.objective.iter().zip(x).map(|(c, v)| c * v).sum()
    }

    pub fn residuals(&self, x: &[f64]) -> ConstraintResiduals {
        let equality = self
            .equalities
            .iter()
            .map(|e| {
                let lhs: f64 = e.coeffs.iter().map(|&(k, a)| a * x[k]).sum();
                (lhs - e.rhs).abs() / (1.0 + e.rhs.abs())
            })
            .fold(0.0, f64::max);
        let psd = self
            .psd
            .iter()
            .map(|c| {
                let h = c.evaluate(x);
                (-min_eigenvalue(&h)).max(0.0) / frobenius(&c.constant).max(frobenius(&h)).max(1.0)
            })
            .fold(0.0, f64::max);
        let norm = self
            .norm_bounds
            .iter()
            .map(|b| (b.value(x) - b.radius).max(0.0) / b.radius.max(1.0))
            .fold(0.0, f64::max);
        ConstraintResiduals { equality, psd, norm }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |what: String| Err(Error::validation("sdp", what));
        if self.objective.iter().any(|v| !v.is_finite()) {
            return bad("objective has non-finite coefficients".into());
        }
        for e in &self.equalities {
            if e.coeffs.iter().any(|&(k, a)| k >= self.num_vars || !a.is_finite()) || !e.rhs.is_finite() {
                return bad("malformed equality".into());
            }
        }
        for c in &self.psd {
            if c.constant.shape() != (c.dim, c.dim) || c.constant.iter().any(|v| !v.is_finite()) {
                return bad(format!("PSD constraint {} has a malformed constant", c.label));
            }
            if c.terms.iter().any(|(&(i, j, k), v)| i > j || j >= c.dim || k >= self.num_vars || !v.is_finite()) {
                return bad(format!("PSD constraint {} has malformed terms", c.label));
            }
        }
        for b in &self.norm_bounds {
            if !(b.radius.is_finite() && b.radius > 0.0) || b.entries.iter().any(|&(k, _)| k >= self.num_vars) {
                return bad(format!("norm bound {} is malformed", b.label));
            }
        }
        Ok(())
    }
}

impl NormBound {
    pub fn value(&self, x: &[f64]) -> f64 {
        self.entries.iter().map(|&(k, w)| (w * x[k]).powi(2)).sum::<f64>().sqrt()
    }
}

impl PsdConstraint {
    pub fn new(label: impl Into<String>, dim: usize) -> Self {
        PsdConstraint { label: label.into(), dim, constant: DMatrix::zeros(dim, dim), terms: BTreeMap::new() }
    }

    fn add_term(&mut self, i: usize, j: usize, var: usize, coef: f64) {
        if coef == 0.0 {
            return;
        }
        let key = if i <= j { (i, j, var) } else { (j, i, var) };
        *self.terms.entry(key).or_insert(0.0) += coef;
    }

    /// Writes into the block at `(r0, c0)`. Blocks must sit on the diagonal
    /// (`r0 == c0`, symmetric contribution) or strictly above it.
    fn place(&self, r0: usize, c0: usize, rows: usize, cols: usize) -> bool {
        assert!(r0 + rows <= self.dim && c0 + cols <= self.dim);
        if r0 == c0 {
            assert_eq!(rows, cols, "diagonal blocks are square");
            true
        } else {
            assert!(r0 + rows <= c0, "off-diagonal blocks must lie above the diagonal");
            false
        }
    }

    pub fn add_constant(&mut self, r0: usize, c0: usize, m: &DMatrix<f64>) {
        let diag = self.place(r0, c0, m.nrows(), m.ncols());
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                self.constant[(r0 + i, c0 + j)] += m[(i, j)];
                if !diag {
                    self.constant[(c0 + j, r0 + i)] += m[(i, j)];
                }
            }
        }
    }

    /// Adds `coef · Lᵀ X R` for a symmetric block `X`.
    pub fn add_sym_congruence(
        &mut self,
        p: &SdpProblem,
        r0: usize,
        c0: usize,
        x: VarId,
        l: &DMatrix<f64>,
        r: &DMatrix<f64>,
        coef: f64,
    ) {
        let n = p.sym_dim(x);
        assert_eq!(l.nrows(), n);
        assert_eq!(r.nrows(), n);
        let diag = self.place(r0, c0, l.ncols(), r.ncols());
        for a in 0..l.ncols() {
            let b_start = if diag { a } else { 0 };
            for b in b_start..r.ncols() {
                for i in 0..n {
                    for j in 0..n {
                        // entry (a, b) of Lᵀ E_ij R where X = Σ x_ij E_ij symmetric
                        let c = coef * l[(i, a)] * r[(j, b)];
                        if c != 0.0 {
                            self.add_term(r0 + a, c0 + b, p.sym_index(x, i, j), c);
                        }
                    }
                }
            }
        }
    }

    /// Adds `coef · X` on a diagonal block.
    pub fn add_sym(&mut self, p: &SdpProblem, r0: usize, x: VarId, coef: f64) {
        let n = p.sym_dim(x);
        let id = DMatrix::identity(n, n);
        self.add_sym_congruence(p, r0, r0, x, &id, &id, coef);
    }

    /// Adds `coef · L v` as a column block for a vector block `v`.
    pub fn add_vec_map(&mut self, p: &SdpProblem, r0: usize, c0: usize, v: VarId, l: &DMatrix<f64>, coef: f64) {
        let n = p.vec_dim(v);
        assert_eq!(l.ncols(), n);
        self.place(r0, c0, l.nrows(), 1);
        for a in 0..l.nrows() {
            for i in 0..n {
                self.add_term(r0 + a, c0, p.vec_index(v, i), coef * l[(a, i)]);
            }
        }
    }

    pub fn add_scalar(&mut self, p: &SdpProblem, r0: usize, s: VarId, coef: f64) {
        self.add_term(r0, r0, p.scalar_index(s), coef);
    }

    pub fn evaluate(&self, x: &[f64]) -> DMatrix<f64> {
        let mut m = self.constant.clone();
        for (&(i, j, k), &c) in &self.terms {
            m[(i, j)] += c * x[k];
            if i != j {
                m[(j, i)] += c * x[k];
            }
        }
        m
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sym_indices_are_a_bijection() {
        let mut p = SdpProblem::new();
        p.add_scalar("s");
        let x = p.add_symmetric("X", 4);
        let mut seen: Vec<usize> = (0..4).flat_map(|i| (i..4).map(move |j| (i, j))).map(|(i, j)| p.sym_index(x, i, j)).collect();
        seen.sort();
        assert_eq!(seen, (1..11).collect::<Vec<_>>());
        assert_eq!(p.sym_index(x, 3, 1), p.sym_index(x, 1, 3));
    }

    #[test]
    fn congruence_evaluates_like_dense_products() {
        let mut p = SdpProblem::new();
        let x = p.add_symmetric("X", 2);
        let v = p.add_vector("v", 2);
        let l = DMatrix::from_row_slice(2, 1, &[0.5, -1.0]);
        let r = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 0.0, 3.0]);
        let mut c = PsdConstraint::new("c", 4);
        c.add_sym_congruence(&p, 0, 0, x, &l, &l, 2.0);
        c.add_sym_congruence(&p, 0, 1, x, &l, &r, 1.0);
        c.add_sym(&p, 1, x, -1.0);
        c.add_vec_map(&p, 0, 3, v, &DMatrix::from_row_slice(1, 2, &[1.0, 1.0]), 1.0);
        let vals = [1.0, 0.3, -2.0, 0.7, 0.1];
        let xm = p.extract_sym(&vals, x);
        let vv = p.extract_vec(&vals, v);
        let m = c.evaluate(&vals);
        let top = l.transpose() * &xm * &l * 2.0;
        assert!((m[(0, 0)] - top[(0, 0)]).abs() < 1e-14);
        let off = l.transpose() * &xm * &r;
        assert!((m.view((0, 1), (1, 2)) - &off).norm() < 1e-14);
        assert!((m.view((1, 0), (2, 1)) - off.transpose()).norm() < 1e-14);
        assert!((m.view((1, 1), (2, 2)) + &xm).norm() < 1e-14);
        assert!((m[(0, 3)] - vv.sum()).abs() < 1e-14);
    }

    #[test]
    fn frobenius_entries() {
        let mut p = SdpProblem::new();
        let x = p.add_symmetric("X", 3);
        let vals: Vec<f64> = (0..6).map(|k| k as f64 - 2.5).collect();
        let b = NormBound { label: "b".into(), entries: p.norm_entries(x, 1.0), radius: 1.0 };
        assert!((b.value(&vals) - frobenius(&p.extract_sym(&vals, x))).abs() < 1e-12);
    }
}
