//! Thin wrappers over `faer` for the handful of dense factorizations the crate needs.

use faer::prelude::*;
use faer::Side;

use crate::error::{Error, Result};

/// Thin singular value decomposition `A = U diag(s) Vᵀ`, singular values non-increasing.
#[derive(Debug, Clone)]
pub struct ThinSvd {
    pub u: Mat<f64>,
    pub s: Vec<f64>,
    pub v: Mat<f64>,
}

impl ThinSvd {
    pub fn new(a: MatRef<'_, f64>) -> Result<Self> {
        let svd = a
            .thin_svd()
            .map_err(|e| Error::LinearAlgebra(format!("svd did not converge: {e:?}")))?;
        let s = svd.S().column_vector().iter().copied().collect();
        Ok(ThinSvd {
            u: svd.U().to_owned(),
            s,
            v: svd.V().to_owned(),
        })
    }

    /// Number of singular values above `rel_tol * s_max`.
    pub fn rank(&self, rel_tol: f64) -> usize {
        let smax = self.s.first().copied().unwrap_or(0.0);
        self.s.iter().take_while(|&&s| s > rel_tol * smax && s > 0.0).count()
    }

    /// Minimum-norm least-squares solution of `A X = B` keeping the leading `k` singular triplets.
    pub fn solve_truncated(&self, b: MatRef<'_, f64>, k: usize) -> Mat<f64> {
        let k = k.min(self.s.len());
        let uk = self.u.get(.., ..k);
        let vk = self.v.get(.., ..k);
        let mut coef = uk.transpose() * b;
        for i in 0..k {
            let inv = 1.0 / self.s[i];
            for j in 0..coef.ncols() {
                coef[(i, j)] *= inv;
            }
        }
        vk * coef
    }
}

/// Eigenvalues of a symmetric matrix in non-decreasing order.
pub fn symmetric_eigenvalues(a: MatRef<'_, f64>) -> Result<Vec<f64>> {
    a.self_adjoint_eigenvalues(Side::Lower)
        .map_err(|e| Error::LinearAlgebra(format!("eigendecomposition failed: {e:?}")))
}

/// Solves `A X = B` for symmetric positive-definite `A` by Cholesky factorization.
pub fn cholesky_solve(a: MatRef<'_, f64>, b: MatRef<'_, f64>) -> Result<Mat<f64>> {
    let llt = a
        .llt(Side::Lower)
        .map_err(|e| Error::LinearAlgebra(format!("matrix is not positive definite: {e:?}")))?;
    Ok(llt.solve(b))
}

/// Least squares `min ‖A x − b‖₂` via SVD; fails when `A` has numerical rank below its column count.
pub fn lstsq_full_rank(a: MatRef<'_, f64>, b: &[f64], rel_tol: f64) -> Result<Vec<f64>> {
    let svd = ThinSvd::new(a)?;
    let rank = svd.rank(rel_tol);
    if rank < a.ncols() {
        return Err(Error::RankDeficient(format!(
            "design of {} columns has numerical rank {rank}",
            a.ncols()
        )));
    }
    let rhs = Mat::from_fn(b.len(), 1, |i, _| b[i]);
    let x = svd.solve_truncated(rhs.as_ref(), rank);
    Ok((0..x.nrows()).map(|i| x[(i, 0)]).collect())
}

pub(crate) fn mat_vec(a: MatRef<'_, f64>, x: &[f64]) -> Vec<f64> {
    debug_assert_eq!(a.ncols(), x.len());
    let mut out = vec![0.0; a.nrows()];
    for (j, &xj) in x.iter().enumerate() {
        if xj == 0.0 {
            continue;
        }
        let col = a.col(j);
        for (o, &aij) in out.iter_mut().zip(col.iter()) {
            *o += aij * xj;
        }
    }
    out
}

pub(crate) fn mat_t_vec(a: MatRef<'_, f64>, y: &[f64]) -> Vec<f64> {
    debug_assert_eq!(a.nrows(), y.len());
    (0..a.ncols())
        .map(|j| a.col(j).iter().zip(y).map(|(aij, yi)| aij * yi).sum())
        .collect()
}
