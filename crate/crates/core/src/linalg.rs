//! Small dense linear-algebra helpers shared by the estimators.

use nalgebra::{Cholesky, DMatrix, Dyn, SymmetricEigen};

use crate::error::{Error, Result};

/// Smallest admissible squared Cholesky pivot relative to the largest diagonal entry.
const PIVOT_RTOL: f64 = 1e-14;

/// Cholesky factorization that also rejects numerically singular matrices.
pub fn cholesky(m: &DMatrix<f64>, what: &str) -> Result<Cholesky<f64, Dyn>> {
    if !m.is_square() {
        return Err(Error::dims(format!("{what} is {}x{}, expected square", m.nrows(), m.ncols())));
    }
    let max_diag = m.diagonal().iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !(max_diag > 0.0) || !max_diag.is_finite() {
        return Err(Error::NotPositiveDefinite(format!("{what} has no positive diagonal")));
    }
    let chol =
        m.clone().cholesky().ok_or_else(|| Error::NotPositiveDefinite(format!("{what}: factorization failed")))?;
    let min_pivot = chol.l_dirty().diagonal().iter().map(|d| d * d).fold(f64::INFINITY, f64::min);
    if !(min_pivot > PIVOT_RTOL * max_diag) {
        return Err(Error::NotPositiveDefinite(format!(
            "{what}: pivot {min_pivot:e} below {:e}",
            PIVOT_RTOL * max_diag
        )));
    }
    Ok(chol)
}

/// log|A| from the Cholesky factor of A.
pub fn log_det(chol: &Cholesky<f64, Dyn>) -> f64 {
    2.0 * chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>()
}

pub fn is_symmetric(m: &DMatrix<f64>, rel_tol: f64) -> bool {
    if !m.is_square() {
        return false;
    }
    let scale = m.iter().fold(0.0_f64, |acc, v| acc.max(v.abs())).max(f64::MIN_POSITIVE);
    let n = m.nrows();
    (0..n).all(|i| (0..i).all(|j| (m[(i, j)] - m[(j, i)]).abs() <= rel_tol * scale))
}

pub fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in 0..i {
            let avg = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = avg;
            m[(j, i)] = avg;
        }
    }
}

/// Project a symmetric matrix onto the set with every eigenvalue in `[lo, hi]`.
///
/// Returns the input unchanged (bitwise) when its spectrum already lies in range.
pub fn clamp_eigenvalues(m: &DMatrix<f64>, lo: f64, hi: f64) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(m.clone());
    if eig.eigenvalues.iter().all(|&e| e >= lo && e <= hi) {
        return m.clone();
    }
    let clamped = eig.eigenvalues.map(|e| if e.is_nan() { lo } else { e.clamp(lo, hi) });
    let q = &eig.eigenvectors;
    let mut out = q * DMatrix::from_diagonal(&clamped) * q.transpose();
    symmetrize(&mut out);
    out
}

pub fn eigenvalues(m: &DMatrix<f64>) -> Vec<f64> {
    SymmetricEigen::new(m.clone()).eigenvalues.iter().cloned().collect()
}

/// Singular values in decreasing order.
pub fn singular_values(m: &DMatrix<f64>) -> Vec<f64> {
    let mut s: Vec<f64> = m.clone().singular_values().iter().cloned().collect();
    s.sort_by(|a, b| b.total_cmp(a));
    s
}

/// Child seed for an independent random stream, via the SplitMix64 finalizer.
pub fn derive_seed(base: u64, stream: u64) -> u64 {
    let mut z = base ^ stream.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
