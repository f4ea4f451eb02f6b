//! Discretized integral operators and their adjoints.

use std::sync::Arc;

use faer::{Mat, MatRef};

use crate::error::{Error, Result};
use crate::grid::{Grid, GridFunction};
use crate::linalg;

/// Matrix form of an integral operator from functions on `domain` to functions on `range`.
///
/// The matrix already contains the domain quadrature weights, so
/// `(Qf)(xᵢ) = Σₖ M[i,k]·f(tₖ)`. The adjoint with respect to the two weighted
/// inner products is `W_d⁻¹ Mᵀ W_r` and is exact by construction.
#[derive(Debug, Clone)]
pub struct DiscreteOperator {
    domain: Arc<Grid>,
    range: Arc<Grid>,
    matrix: Mat<f64>,
}

impl DiscreteOperator {
    /// `M[i,k] = w_k·g(xᵢ, tₖ)` for a kernel `g(x, t)`.
    pub fn from_kernel(domain: Arc<Grid>, range: Arc<Grid>, g: impl Fn(f64, f64) -> f64) -> Self {
        let (t, w) = (domain.nodes(), domain.weights());
        let x = range.nodes();
        let matrix = Mat::from_fn(x.len(), t.len(), |i, k| w[k] * g(x[i], t[k]));
        DiscreteOperator { domain, range, matrix }
    }

    /// Identity map of a grid onto itself.
    pub fn identity(grid: Arc<Grid>) -> Self {
        let n = grid.n_nodes();
        DiscreteOperator {
            domain: Arc::clone(&grid),
            range: grid,
            matrix: Mat::from_fn(n, n, |i, k| if i == k { 1.0 } else { 0.0 }),
        }
    }

    /// Wraps an explicit matrix of shape `range × domain`.
    pub fn from_matrix(domain: Arc<Grid>, range: Arc<Grid>, matrix: Mat<f64>) -> Result<Self> {
        if matrix.nrows() != range.n_nodes() || matrix.ncols() != domain.n_nodes() {
            return Err(Error::DimensionMismatch {
                expected: range.n_nodes() * domain.n_nodes(),
                found: matrix.nrows() * matrix.ncols(),
                context: "operator matrix must be range_nodes x domain_nodes",
            });
        }
        Ok(DiscreteOperator { domain, range, matrix })
    }

    pub fn domain_grid(&self) -> &Arc<Grid> {
        &self.domain
    }

    pub fn range_grid(&self) -> &Arc<Grid> {
        &self.range
    }

    pub fn matrix(&self) -> MatRef<'_, f64> {
        self.matrix.as_ref()
    }

    /// Matrix of the adjoint, shape `domain × range`.
    pub fn adjoint_matrix(&self) -> Mat<f64> {
        let (wd, wr) = (self.domain.weights(), self.range.weights());
        Mat::from_fn(self.domain.n_nodes(), self.range.n_nodes(), |k, i| {
            self.matrix[(i, k)] * wr[i] / wd[k]
        })
    }

    pub fn apply(&self, f: &GridFunction) -> Result<GridFunction> {
        if !f.grid().same_as(&self.domain) {
            return Err(Error::GridMismatch("apply: argument is not on the operator's domain grid".into()));
        }
        let v = linalg::mat_vec(self.matrix.as_ref(), f.values());
        GridFunction::new(Arc::clone(&self.range), v)
    }

    pub fn adjoint_apply(&self, u: &GridFunction) -> Result<GridFunction> {
        if !u.grid().same_as(&self.range) {
            return Err(Error::GridMismatch("adjoint_apply: argument is not on the operator's range grid".into()));
        }
        let wu: Vec<f64> = u.values().iter().zip(self.range.weights()).map(|(v, w)| v * w).collect();
        let mut v = linalg::mat_t_vec(self.matrix.as_ref(), &wu);
        for (vk, wk) in v.iter_mut().zip(self.domain.weights()) {
            *vk /= wk;
        }
        GridFunction::new(Arc::clone(&self.domain), v)
    }

    /// Rows of the matrix linearly interpolated to the points `x`: the map `f ↦ (Qf)(x)`.
    pub fn rows_at(&self, x: &[f64]) -> Mat<f64> {
        let nodes = self.range.nodes();
        let n = nodes.len();
        let mut out = Mat::<f64>::zeros(x.len(), self.domain.n_nodes());
        for (r, &xr) in x.iter().enumerate() {
            let (i0, i1, s) = bracket(nodes, xr);
            for k in 0..self.domain.n_nodes() {
                let v0 = self.matrix[(i0, k)];
                let v1 = if i1 < n { self.matrix[(i1, k)] } else { v0 };
                out[(r, k)] = v0 + s * (v1 - v0);
            }
        }
        out
    }
}

/// Index pair and fraction for linear interpolation at `x`, clamped to the node range.
pub(crate) fn bracket(nodes: &[f64], x: f64) -> (usize, usize, f64) {
    let n = nodes.len();
    if n == 1 || x <= nodes[0] {
        return (0, 0, 0.0);
    }
    if x >= nodes[n - 1] {
        return (n - 1, n - 1, 0.0);
    }
    let i = nodes.partition_point(|&t| t <= x) - 1;
    (i, i + 1, (x - nodes[i]) / (nodes[i + 1] - nodes[i]))
}
