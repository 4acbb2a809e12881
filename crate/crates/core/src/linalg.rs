//! Dense linear-algebra contracts used by the surrogates.
//!
//! Thin wrappers over `nalgebra`: Cholesky for symmetric positive-definite
//! systems (with diagonal jitter escalation), LU for general square systems,
//! and least squares via SVD.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};

pub type Chol = Cholesky<f64, Dyn>;

/// Factorizes a symmetric positive-definite matrix.
pub fn cholesky(a: DMatrix<f64>) -> Result<Chol> {
    Cholesky::new(a).ok_or_else(|| Error::Numeric("matrix is not positive definite".into()))
}

/// Factorizes `a + jitter * I`, multiplying the jitter by ten on failure
/// until `max_jitter` is exceeded. Returns the factor and the jitter used.
pub fn cholesky_with_jitter(a: &DMatrix<f64>, jitter: f64, max_jitter: f64) -> Result<(Chol, f64)> {
    let mut nugget = jitter;
    loop {
        let mut m = a.clone();
        for i in 0..m.nrows() {
            m[(i, i)] += nugget;
        }
        if let Some(c) = Cholesky::new(m) {
            return Ok((c, nugget));
        }
        nugget *= 10.0;
        if nugget > max_jitter * (1.0 + 1e-12) {
            return Err(Error::Numeric(format!(
                "kernel matrix stayed singular up to jitter {max_jitter:e}"
            )));
        }
    }
}

/// Solves `a x = b` for symmetric positive-definite `a`.
pub fn spd_solve(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    Ok(cholesky(a.clone())?.solve(b))
}

/// Solves a general square system by LU with partial pivoting.
pub fn solve(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    a.clone()
        .lu()
        .solve(b)
        .ok_or_else(|| Error::Numeric("singular linear system".into()))
}

/// Minimum-norm least-squares solution and the numerical rank of `a`.
pub fn lstsq(a: &DMatrix<f64>, b: &DVector<f64>, rcond: f64) -> Result<(DVector<f64>, usize)> {
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let eps = rcond * smax.max(f64::MIN_POSITIVE);
    let rank = svd.singular_values.iter().filter(|&&s| s > eps).count();
    let x = svd.solve(b, eps).map_err(|e| Error::Numeric(e.to_string()))?;
    Ok((x, rank))
}

/// Eigen-decomposition of a symmetric matrix, eigenpairs sorted by
/// descending eigenvalue. Eigenvectors are the columns of the returned matrix.
pub fn symmetric_eigen_desc(a: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let sym = (a + a.transpose()) * 0.5;
    let eig = sym.symmetric_eigen();
    let n = eig.eigenvalues.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
    let values = DVector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
    let mut vectors = DMatrix::zeros(n, n);
    for (k, &i) in order.iter().enumerate() {
        vectors.set_column(k, &eig.eigenvectors.column(i));
    }
    (values, vectors)
}
