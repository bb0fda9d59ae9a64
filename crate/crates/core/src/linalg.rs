//! Dense linear-algebra helpers shared by the forward solver, the simulator and
//! the estimator.

use nalgebra::{DMatrix, DVector};

/// Singular values at or below `PINV_CUTOFF * sigma_max` are treated as zero.
pub const PINV_CUTOFF: f64 = 1e-10;

/// Relative factor of the numerical-rank cutoff, multiplied by `sigma_max * max(rows, cols)`.
pub const RANK_CUTOFF: f64 = 1e-10;

pub fn frobenius(m: &DMatrix<f64>) -> f64 {
    m.norm()
}

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Eigendecomposition of `[[0, M], [Mᵀ, 0]]`, whose eigenvalues are `±σ_i`
/// plus zeros.
fn jordan_wielandt(m: &DMatrix<f64>) -> nalgebra::SymmetricEigen<f64, nalgebra::Dyn> {
    let (r, c) = m.shape();
    let mut jw = DMatrix::zeros(r + c, r + c);
    jw.view_mut((0, r), (r, c)).copy_from(m);
    jw.view_mut((r, 0), (c, r)).copy_from(&m.transpose());
    jw.symmetric_eigen()
}

/// Singular values in decreasing order.
pub fn singular_values(m: &DMatrix<f64>) -> DVector<f64> {
    let k = m.nrows().min(m.ncols());
    if k == 0 {
        return DVector::zeros(0);
    }
    let mut ev: Vec<f64> = jordan_wielandt(m).eigenvalues.iter().copied().collect();
    ev.sort_by(|a, b| b.total_cmp(a));
    DVector::from_iterator(k, ev.into_iter().take(k).map(|v| v.max(0.0)))
}

/// Moore–Penrose pseudo-inverse with a relative singular-value cutoff.
pub fn pinv_with_cutoff(m: &DMatrix<f64>, rel_cutoff: f64) -> DMatrix<f64> {
    let (rows, cols) = m.shape();
    if rows == 0 || cols == 0 {
        return DMatrix::zeros(cols, rows);
    }
    let eig = jordan_wielandt(m);
    let sigma_max = eig.eigenvalues.max();
    let cutoff = rel_cutoff * sigma_max;
    let mut out = DMatrix::zeros(cols, rows);
    for (i, &s) in eig.eigenvalues.iter().enumerate() {
        if s > cutoff && s > 0.0 {
            let w = eig.eigenvectors.column(i);
            let a = w.rows(0, rows);
            let b = w.rows(rows, cols);
            out += (b * a.transpose()) * (2.0 / s);
        }
    }
    out
}

pub fn pinv(m: &DMatrix<f64>) -> DMatrix<f64> {
    pinv_with_cutoff(m, PINV_CUTOFF)
}

/// Numerical rank: number of singular values above `rel * sigma_max * max(rows, cols)`.
pub fn numerical_rank_with(m: &DMatrix<f64>, rel: f64) -> usize {
    let sv = singular_values(m);
    if sv.is_empty() {
        return 0;
    }
    let sigma_max = sv.max();
    if sigma_max == 0.0 {
        return 0;
    }
    let (rows, cols) = m.shape();
    let cutoff = rel * sigma_max * rows.max(cols) as f64;
    sv.iter().filter(|&&s| s > cutoff).count()
}

pub fn numerical_rank(m: &DMatrix<f64>) -> usize {
    numerical_rank_with(m, RANK_CUTOFF)
}

/// Smallest eigenvalue of the symmetric part of `m`.
pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    symmetrize(m).symmetric_eigenvalues().min()
}

pub fn is_symmetric(m: &DMatrix<f64>, rel_tol: f64) -> bool {
    m.is_square() && (m - m.transpose()).norm() <= rel_tol * m.norm().max(1.0)
}

/// Symmetric factor `L` with `L Lᵀ = Σ` for a PSD `Σ`.
///
/// Factorizes through the eigendecomposition so singular covariances are
/// supported; a singular nonzero `Σ` gets a diagonal jitter of
/// `1e-12 * tr(Σ) / n` first. A zero matrix yields a zero factor.
pub fn psd_factor(sigma: &DMatrix<f64>) -> DMatrix<f64> {
    let n = sigma.nrows();
    let sym = symmetrize(sigma);
    if sym.iter().all(|&v| v == 0.0) {
        return DMatrix::zeros(n, n);
    }
    let eig = sym.clone().symmetric_eigen();
    let lmin = eig.eigenvalues.min();
    let lmax = eig.eigenvalues.max();
    let eig = if lmin <= 1e-14 * lmax.abs().max(f64::MIN_POSITIVE) {
        let jitter = 1e-12 * sym.trace() / n as f64;
        (sym + DMatrix::identity(n, n) * jitter).symmetric_eigen()
    } else {
        eig
    };
    let mut factor = eig.eigenvectors.clone();
    for (j, &l) in eig.eigenvalues.iter().enumerate() {
        let s = l.max(0.0).sqrt();
        factor.column_mut(j).scale_mut(s);
    }
    factor
}
