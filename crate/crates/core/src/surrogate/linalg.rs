use nalgebra::{Cholesky, DMatrix, Dyn, SymmetricEigen};

use crate::error::{Error, Result};

/// Relative jitter ladder tried before giving up on a factorization.
pub const JITTER_LADDER: [f64; 6] = [0.0, 1e-10, 1e-9, 1e-8, 1e-6, 1e-4];

/// Cholesky of `a + jitter * scale * I`, escalating jitter along
/// [`JITTER_LADDER`] starting at `min_jitter`. Returns the factor and the
/// absolute jitter used.
pub fn cholesky_jittered(a: &DMatrix<f64>, min_jitter: f64) -> Result<(Cholesky<f64, Dyn>, f64)> {
    let n = a.nrows();
    let scale = (0..n).map(|i| a[(i, i)].abs()).fold(0.0, f64::max).max(1e-300);
    let mut ladder: Vec<f64> = JITTER_LADDER.iter().copied().filter(|&j| j >= min_jitter).collect();
    if ladder.is_empty() {
        ladder.push(min_jitter);
    }
    for j in ladder {
        let mut m = a.clone();
        for i in 0..n {
            m[(i, i)] += j * scale;
        }
        if let Some(c) = Cholesky::new(m) {
            if c.l_dirty().diagonal().iter().all(|v| v.is_finite() && *v > 0.0) {
                return Ok((c, j * scale));
            }
        }
    }
    Err(Error::Fit(format!("matrix of size {n} is not positive definite even with jitter")))
}

/// A factor `S` with `S S^T = a` for a symmetric PSD matrix. Tries
/// Cholesky with small jitter, then falls back to a clipped eigen
/// decomposition.
pub fn psd_factor(a: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    if n == 0 {
        return DMatrix::zeros(0, 0);
    }
    let sym = (a + a.transpose()) * 0.5;
    let scale = (0..n).map(|i| sym[(i, i)].abs()).fold(0.0, f64::max).max(1e-300);
    for j in [0.0, 1e-12, 1e-10] {
        let mut m = sym.clone();
        for i in 0..n {
            m[(i, i)] += j * scale;
        }
        if let Some(c) = Cholesky::new(m) {
            return c.l();
        }
    }
    let eig = SymmetricEigen::new(sym);
    let mut v = eig.eigenvectors;
    for (k, lam) in eig.eigenvalues.iter().enumerate() {
        let s = lam.max(0.0).sqrt();
        v.column_mut(k).scale_mut(s);
    }
    v
}

/// `log det` from a Cholesky factor.
pub fn log_det(c: &Cholesky<f64, Dyn>) -> f64 {
    2.0 * c.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>()
}
