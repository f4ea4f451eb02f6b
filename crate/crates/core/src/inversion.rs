//! Inverse images `ψ_j` with `Q*ψ_j = φ_j`, Tikhonov approximations and penalty weights `ν_j`.

use std::sync::Arc;

use faer::{Mat, MatRef};

use crate::dictionary::Dictionary;
use crate::error::{Error, Result};
use crate::forward::MixtureKernel;
use crate::grid::{inner_product, Grid, GridFunction};
use crate::linalg::{self, ThinSvd};
use crate::operator::DiscreteOperator;

/// Default relative cut-off for singular values of the adjoint.
pub const DEFAULT_SVD_TOL: f64 = 1e-10;
/// Columns whose residual exceeds this are reported as violating the existence assumption.
pub const RESIDUAL_REPORT: f64 = 1e-6;

/// How the inverse images were obtained.
#[derive(Debug, Clone, PartialEq)]
pub enum InversionMethod {
    Exact,
    /// Tikhonov parameter per column; 0 marks a column that kept its exact solution.
    Tikhonov(Vec<f64>),
}

/// One inverse image per dictionary column, on the operator's range grid.
#[derive(Debug, Clone)]
pub struct InverseImages {
    psi: Vec<GridFunction>,
    matrix: Mat<f64>,
    residuals: Vec<f64>,
    method: InversionMethod,
}

impl InverseImages {
    fn from_columns(psi: Vec<GridFunction>, residuals: Vec<f64>, method: InversionMethod) -> Self {
        let n = psi.first().map_or(0, |g| g.values().len());
        let matrix = Mat::from_fn(n, psi.len(), |i, j| psi[j].values()[i]);
        InverseImages {
            psi,
            matrix,
            residuals,
            method,
        }
    }

    /// Wraps precomputed inverse images, e.g. read back from CSV.
    pub fn new(psi: Vec<GridFunction>, residuals: Vec<f64>, method: InversionMethod) -> Result<Self> {
        let first = psi.first().ok_or(Error::Empty("inverse images"))?;
        for g in &psi {
            crate::grid::check_same(first, g)?;
        }
        if residuals.len() != psi.len() {
            return Err(Error::DimensionMismatch {
                expected: psi.len(),
                found: residuals.len(),
                context: "residuals",
            });
        }
        Ok(Self::from_columns(psi, residuals, method))
    }

    pub fn p(&self) -> usize {
        self.psi.len()
    }

    pub fn psi(&self) -> &[GridFunction] {
        &self.psi
    }

    /// `range_nodes × p` matrix of node values.
    pub fn matrix(&self) -> MatRef<'_, f64> {
        self.matrix.as_ref()
    }

    pub fn residuals(&self) -> &[f64] {
        &self.residuals
    }

    pub fn method(&self) -> &InversionMethod {
        &self.method
    }

    pub fn grid(&self) -> &Arc<Grid> {
        self.psi[0].grid()
    }

    /// Columns whose residual exceeds [`RESIDUAL_REPORT`].
    pub fn violations(&self) -> Vec<usize> {
        (0..self.p()).filter(|&j| !(self.residuals[j] <= RESIDUAL_REPORT)).collect()
    }

    /// Column values linearly interpolated at the points `x`, shape `x.len() × p`.
    pub fn values_at(&self, x: &[f64]) -> Mat<f64> {
        let nodes = self.grid().nodes();
        let mut out = Mat::<f64>::zeros(x.len(), self.p());
        for (r, &xr) in x.iter().enumerate() {
            let (i0, i1, s) = crate::operator::bracket(nodes, xr);
            for j in 0..self.p() {
                let (v0, v1) = (self.matrix[(i0, j)], self.matrix[(i1, j)]);
                out[(r, j)] = v0 + s * (v1 - v0);
            }
        }
        out
    }
}

/// Singular value decomposition of the weighted adjoint, reused for every column.
///
/// With `A = W_d^{1/2} Q* W_r^{−1/2}`, the system `Q*ψ = φ` becomes `A z = W_d^{1/2} φ`
/// for `z = W_r^{1/2} ψ`, so minimum-norm solutions in `z` are minimum-norm in `L²`.
#[derive(Debug, Clone)]
pub struct AdjointSvd {
    op: DiscreteOperator,
    svd: ThinSvd,
    rank: usize,
    svd_tol: f64,
}

impl AdjointSvd {
    pub fn new(q: &DiscreteOperator, svd_tol: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&svd_tol) {
            return Err(Error::param("svd_tol", format!("must lie in [0, 1), got {svd_tol}")));
        }
        let (wd, wr) = (q.domain_grid().weights(), q.range_grid().weights());
        let m = q.matrix();
        let a = Mat::from_fn(wd.len(), wr.len(), |k, i| m[(i, k)] * wr[i].sqrt() / wd[k].sqrt());
        let svd = ThinSvd::new(a.as_ref())?;
        let rank = svd.rank(svd_tol);
        log::debug!("adjoint svd: {} of {} singular values kept", rank, svd.s.len());
        Ok(AdjointSvd {
            op: q.clone(),
            svd,
            rank,
            svd_tol,
        })
    }

    pub fn operator(&self) -> &DiscreteOperator {
        &self.op
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn singular_values(&self) -> &[f64] {
        &self.svd.s
    }

    pub fn svd_tol(&self) -> f64 {
        self.svd_tol
    }

    fn check_dictionary(&self, d: &Dictionary) -> Result<()> {
        if !d.grid().same_as(self.op.domain_grid()) {
            return Err(Error::GridMismatch("dictionary grid differs from the operator's domain grid".into()));
        }
        Ok(())
    }

    /// Spectral filter applied to `W_d^{1/2} φ` for each column; returns `ψ` on the range grid.
    fn filtered(&self, d: &Dictionary, filter: impl Fn(f64) -> f64) -> Mat<f64> {
        let wd = self.op.domain_grid().weights();
        let wr = self.op.range_grid().weights();
        let pm = d.matrix();
        let rhs = Mat::from_fn(pm.nrows(), pm.ncols(), |k, j| wd[k].sqrt() * pm[(k, j)]);
        let r = self.rank;
        let uk = self.svd.u.get(.., ..r);
        let mut coef = uk.transpose() * &rhs;
        for i in 0..r {
            let f = filter(self.svd.s[i]);
            for j in 0..coef.ncols() {
                coef[(i, j)] *= f;
            }
        }
        let z = self.svd.v.get(.., ..r) * &coef;
        Mat::from_fn(z.nrows(), z.ncols(), |i, j| z[(i, j)] / wr[i].sqrt())
    }

    fn package(&self, d: &Dictionary, psi: Mat<f64>, method: InversionMethod) -> Result<InverseImages> {
        let range = self.op.range_grid();
        let mut cols = Vec::with_capacity(d.p());
        let mut residuals = Vec::with_capacity(d.p());
        for j in 0..d.p() {
            let g = GridFunction::new(Arc::clone(range), psi.col_as_slice(j).to_vec())?;
            let back = self.op.adjoint_apply(&g)?;
            residuals.push(back.sub(&d.columns()[j])?.norm2());
            cols.push(g);
        }
        let inv = InverseImages::from_columns(cols, residuals, method);
        let bad = inv.violations();
        if !bad.is_empty() {
            log::warn!(
                "{} of {} columns have inverse-image residual above {RESIDUAL_REPORT:e}",
                bad.len(),
                d.p()
            );
        }
        Ok(inv)
    }

    /// Truncated-SVD minimum-norm solutions of `Q*ψ_j = φ_j`.
    pub fn invert(&self, d: &Dictionary) -> Result<InverseImages> {
        self.check_dictionary(d)?;
        let psi = self.filtered(d, |s| 1.0 / s);
        self.package(d, psi, InversionMethod::Exact)
    }

    /// Tikhonov images `(QQ* + δI)^{−1} Q φ_j` for a common `δ`, evaluated spectrally.
    pub fn invert_tikhonov(&self, d: &Dictionary, delta: f64) -> Result<InverseImages> {
        check_delta(delta)?;
        self.check_dictionary(d)?;
        let psi = self.filtered(d, |s| s / (s * s + delta));
        self.package(d, psi, InversionMethod::Tikhonov(vec![delta; d.p()]))
    }
}

/// Minimum-norm inverse images of every dictionary column.
pub fn invert_exact(q: &DiscreteOperator, d: &Dictionary, svd_tol: f64) -> Result<InverseImages> {
    AdjointSvd::new(q, svd_tol)?.invert(d)
}

fn check_delta(delta: f64) -> Result<()> {
    if !(delta > 0.0 && delta.is_finite()) {
        return Err(Error::param("delta", format!("must be positive, got {delta}")));
    }
    Ok(())
}

/// Solves `(QQ* + δI) ψ = Qφ` by Cholesky factorization of its symmetrized form.
pub fn invert_tikhonov(q: &DiscreteOperator, phi: &GridFunction, delta: f64) -> Result<GridFunction> {
    check_delta(delta)?;
    if !phi.grid().same_as(q.domain_grid()) {
        return Err(Error::GridMismatch("phi must live on the operator's domain grid".into()));
    }
    let (wd, wr) = (q.domain_grid().weights(), q.range_grid().weights());
    let m = q.matrix();
    // B = W_r^{1/2} M W_d^{−1/2}; system (B Bᵀ + δI) z = W_r^{1/2} M φ with ψ = W_r^{−1/2} z.
    let b = Mat::from_fn(m.nrows(), m.ncols(), |i, k| wr[i].sqrt() * m[(i, k)] / wd[k].sqrt());
    let mut s = &b * b.transpose();
    for i in 0..s.nrows() {
        s[(i, i)] += delta;
    }
    let mphi = linalg::mat_vec(m, phi.values());
    let rhs = Mat::from_fn(m.nrows(), 1, |i, _| wr[i].sqrt() * mphi[i]);
    let z = linalg::cholesky_solve(s.as_ref(), rhs.as_ref())?;
    GridFunction::new(
        Arc::clone(q.range_grid()),
        (0..z.nrows()).map(|i| z[(i, 0)] / wr[i].sqrt()).collect(),
    )
}

/// Picks `δ` minimizing `ε‖ψ_δ‖² + ⟨q_est, ψ_δ − ψ⟩²` over `delta_grid`.
///
/// The reference `ψ` is the exact inverse image when its residual is acceptable,
/// otherwise the member for the smallest `δ`. Returns the minimizer and the curve.
pub fn select_delta(
    q: &DiscreteOperator,
    phi: &GridFunction,
    q_est: &GridFunction,
    eps: f64,
    delta_grid: &[f64],
) -> Result<(f64, Vec<f64>)> {
    if delta_grid.is_empty() {
        return Err(Error::Empty("delta grid"));
    }
    if !(eps >= 0.0 && eps.is_finite()) {
        return Err(Error::param("eps", format!("must be non-negative, got {eps}")));
    }
    for &d in delta_grid {
        check_delta(d)?;
    }
    let members = delta_grid
        .iter()
        .map(|&d| invert_tikhonov(q, phi, d))
        .collect::<Result<Vec<_>>>()?;
    let exact = {
        let svd = AdjointSvd::new(q, DEFAULT_SVD_TOL)?;
        let single = Dictionary::from_columns(vec![crate::dictionary::Label { l: 0, b: 1.0 }], vec![phi.clone()])?;
        // from_columns renormalizes; undo so the reference solves the original system.
        let scale = phi.norm2();
        let inv = svd.invert(&single)?;
        (inv.residuals()[0] * scale <= RESIDUAL_REPORT).then(|| inv.psi()[0].scaled(scale))
    };
    let reference = match exact {
        Some(psi) => psi,
        None => {
            let imin = (0..delta_grid.len())
                .min_by(|&a, &b| delta_grid[a].total_cmp(&delta_grid[b]))
                .expect("nonempty");
            members[imin].clone()
        }
    };
    let mut curve = Vec::with_capacity(members.len());
    for m in &members {
        let bias = inner_product(q_est, &m.sub(&reference)?)?;
        curve.push(eps * m.norm2().powi(2) + bias * bias);
    }
    let best = (0..curve.len()).fold(0, |b, k| if curve[k] < curve[b] { k } else { b });
    Ok((delta_grid[best], curve))
}

/// Replaces columns whose exact residual is unacceptable by Tikhonov images with a selected `δ`.
pub fn invert_with_fallback(
    svd: &AdjointSvd,
    d: &Dictionary,
    q_est: &GridFunction,
    eps: f64,
    delta_grid: &[f64],
) -> Result<InverseImages> {
    let exact = svd.invert(d)?;
    let bad = exact.violations();
    if bad.is_empty() {
        return Ok(exact);
    }
    let mut psi = exact.psi.clone();
    let mut residuals = exact.residuals.clone();
    let mut deltas = vec![0.0; d.p()];
    for j in bad {
        let (delta, _) = select_delta(svd.operator(), &d.columns()[j], q_est, eps, delta_grid)?;
        let single = d.subset(&[j])?;
        let t = svd.invert_tikhonov(&single, delta)?;
        psi[j] = t.psi[0].clone();
        residuals[j] = t.residuals[0];
        deltas[j] = delta;
    }
    Ok(InverseImages::from_columns(psi, residuals, InversionMethod::Tikhonov(deltas)))
}

/// Which variance proxy the weights represent.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WeightKind {
    WhiteNoise,
    Observational,
    MixtureSup,
    MixtureVarBound,
}

/// Model-specific inputs for [`weights`].
#[derive(Debug, Clone, Copy)]
pub enum WeightModel<'a> {
    /// `ν_j = ‖ψ_j‖₂`.
    WhiteNoise,
    /// `ν_j² = (T²/n) Σᵢ ψ_j²(xᵢ)` over the observation nodes.
    Observational(&'a Grid),
    /// `ν_j = max |ψ_j|`.
    MixtureSup,
    /// `ν_j² = max_x ∫ g(y|x) ψ_j²(y) dy`.
    MixtureVarBound(&'a MixtureKernel),
}

/// Positive penalty weights, one per dictionary column.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightVector {
    pub nu: Vec<f64>,
    pub kind: WeightKind,
}

impl WeightVector {
    pub fn new(nu: Vec<f64>, kind: WeightKind) -> Result<Self> {
        for (index, &value) in nu.iter().enumerate() {
            if !(value > 0.0 && value.is_finite()) {
                return Err(Error::DegenerateWeight { index, value });
            }
        }
        Ok(WeightVector { nu, kind })
    }

    pub fn ones(p: usize) -> Self {
        WeightVector {
            nu: vec![1.0; p],
            kind: WeightKind::WhiteNoise,
        }
    }

    pub fn len(&self) -> usize {
        self.nu.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nu.is_empty()
    }
}

/// Penalty weights for the chosen observation model.
pub fn weights(inv: &InverseImages, model: WeightModel<'_>) -> Result<WeightVector> {
    let (nu, kind) = match model {
        WeightModel::WhiteNoise => (inv.psi.iter().map(GridFunction::interpolant_norm2).collect(), WeightKind::WhiteNoise),
        WeightModel::Observational(obs) => {
            let vals = inv.values_at(obs.nodes());
            let (t, n) = (obs.length(), obs.n_nodes() as f64);
            let nu = (0..inv.p())
                .map(|j| {
                    let s: f64 = vals.col_as_slice(j).iter().map(|v| v * v).sum();
                    (t * t / n * s).sqrt()
                })
                .collect();
            (nu, WeightKind::Observational)
        }
        WeightModel::MixtureSup => (inv.psi.iter().map(GridFunction::sup_norm).collect(), WeightKind::MixtureSup),
        WeightModel::MixtureVarBound(kernel) => {
            if !inv.grid().same_as(kernel.y_grid()) {
                return Err(Error::GridMismatch("inverse images must live on the kernel's y grid".into()));
            }
            let wy = kernel.y_grid().weights();
            let table = kernel.table();
            let nu = (0..inv.p())
                .map(|j| {
                    let psi = inv.psi[j].values();
                    (0..table.ncols())
                        .map(|k| (0..table.nrows()).map(|i| wy[i] * table[(i, k)] * psi[i] * psi[i]).sum::<f64>())
                        .fold(0.0, f64::max)
                        .sqrt()
                })
                .collect();
            (nu, WeightKind::MixtureVarBound)
        }
    };
    WeightVector::new(nu, kind)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dictionary::{Dictionary, Label};
    use crate::forward::{laplace_operator, staggered_grids, LaplaceKernel};

    fn laplace(cells: usize) -> DiscreteOperator {
        let (d, r) = staggered_grids(10.0, cells).unwrap();
        laplace_operator(&LaplaceKernel::exponential(10.0).unwrap(), d, r).unwrap()
    }

    #[test]
    fn identity_operator_returns_columns() {
        let g = Arc::new(Grid::uniform(0.0, 5.0, 101).unwrap());
        let q = DiscreteOperator::identity(g.clone());
        let d = Dictionary::from_labels(vec![Label { l: 0, b: 1.0 }, Label { l: 2, b: 0.7 }], &g).unwrap();
        let inv = invert_exact(&q, &d, DEFAULT_SVD_TOL).unwrap();
        for j in 0..2 {
            let diff = inv.psi()[j].sub(&d.columns()[j]).unwrap();
            assert!(diff.sup_norm() < 1e-12);
            assert!(inv.residuals()[j] < 1e-12);
        }
    }

    #[test]
    fn laplace_inverse_images_match_analytic() {
        let q = laplace(400);
        let d = Dictionary::from_labels(vec![Label { l: 0, b: 1.0 }, Label { l: 2, b: 1.5 }], q.domain_grid()).unwrap();
        let inv = invert_exact(&q, &d, DEFAULT_SVD_TOL).unwrap();
        assert!(inv.residuals().iter().all(|&r| r < 1e-10));
        let r = q.range_grid();
        for (i, &z) in r.nodes().iter().enumerate() {
            if z > 9.0 {
                break;
            }
            let phi0 = d.columns()[0].eval(z);
            assert!((inv.psi()[0].values()[i] - 2.0 * phi0).abs() < 3e-2);
            if z >= 0.5 {
                let phi2 = d.columns()[1].eval(z);
                let want = phi2 * (1.0 + 1.5 - 2.0 / z);
                assert!((inv.psi()[1].values()[i] - want).abs() < 3e-2, "z={z}");
            }
        }
    }

    #[test]
    fn tikhonov_identity_scaling() {
        let g = Arc::new(Grid::uniform(0.0, 1.0, 21).unwrap());
        let q = DiscreteOperator::identity(g.clone());
        let phi = g.sample(|x| x.sin());
        let psi = invert_tikhonov(&q, &phi, 0.25).unwrap();
        for (a, b) in psi.values().iter().zip(phi.values()) {
            assert!((a - b / 1.25).abs() < 1e-14);
        }
        let zero = invert_tikhonov(&q, &GridFunction::zeros(g.clone()), 0.1).unwrap();
        assert!(zero.values().iter().all(|&v| v == 0.0));
        assert!(invert_tikhonov(&q, &phi, 0.0).is_err());
    }

    #[test]
    fn tikhonov_converges_to_exact() {
        let q = laplace(100);
        let d = Dictionary::from_labels(vec![Label { l: 1, b: 1.0 }], q.domain_grid()).unwrap();
        let phi = &d.columns()[0];
        let mut last = f64::INFINITY;
        for k in 0..7 {
            let delta = 10f64.powi(-k);
            let psi = invert_tikhonov(&q, phi, delta).unwrap();
            let res = q.adjoint_apply(&psi).unwrap().sub(phi).unwrap().norm2();
            assert!(res < last, "delta={delta}");
            last = res;
        }
    }

    #[test]
    fn spectral_and_cholesky_tikhonov_agree() {
        let q = laplace(80);
        let d = Dictionary::from_labels(vec![Label { l: 1, b: 0.8 }], q.domain_grid()).unwrap();
        let svd = AdjointSvd::new(&q, DEFAULT_SVD_TOL).unwrap();
        for delta in [1e-1, 1e-3] {
            let a = svd.invert_tikhonov(&d, delta).unwrap();
            let b = invert_tikhonov(&q, &d.columns()[0], delta).unwrap();
            let diff = a.psi()[0].sub(&b).unwrap();
            assert!(diff.norm2() < 1e-8 * (1.0 + b.norm2()));
        }
    }

    #[test]
    fn select_delta_identity_closed_form() {
        let g = Arc::new(Grid::uniform(0.0, 1.0, 51).unwrap());
        let q = DiscreteOperator::identity(g.clone());
        let phi = g.sample(|x| (std::f64::consts::PI * x).sin()).normalized().unwrap();
        let q_est = phi.clone();
        let grid: Vec<f64> = (0..30).map(|k| 10f64.powf(-5.0 + 5.0 * k as f64 / 29.0)).collect();
        let (d, curve) = select_delta(&q, &phi, &q_est, 0.01, &grid).unwrap();
        let nearest = grid
            .iter()
            .copied()
            .min_by(|a, b| (a.ln() - 0.01f64.ln()).abs().total_cmp(&(b.ln() - 0.01f64.ln()).abs()))
            .unwrap();
        assert_eq!(d, nearest);
        assert_eq!(curve.len(), 30);
        let (d0, _) = select_delta(&q, &phi, &q_est, 0.0, &grid).unwrap();
        assert_eq!(d0, grid[0]);
        let orth = GridFunction::zeros(g.clone());
        let (dv, _) = select_delta(&q, &phi, &orth, 0.01, &grid).unwrap();
        assert_eq!(dv, grid[29]);
    }

    #[test]
    fn weight_models() {
        let r = Arc::new(Grid::right_end(0.0, 10.0, 200).unwrap());
        let psi = vec![r.sample(|_| -0.3)];
        let inv = InverseImages::new(psi, vec![0.0], InversionMethod::Exact).unwrap();
        let obs = Grid::right_end(0.0, 10.0, 32).unwrap();
        let nu = weights(&inv, WeightModel::Observational(&obs)).unwrap();
        assert!((nu.nu[0] - 3.0).abs() < 1e-12);
        let wn = weights(&inv, WeightModel::WhiteNoise).unwrap();
        assert_eq!(wn.nu[0], inv.psi()[0].interpolant_norm2());

        let dec = InverseImages::new(vec![r.sample(|x| (-x).exp())], vec![0.0], InversionMethod::Exact).unwrap();
        let sup = weights(&dec, WeightModel::MixtureSup).unwrap();
        assert_eq!(sup.nu[0], dec.psi()[0].values()[0]);

        let zero = InverseImages::new(vec![GridFunction::zeros(r)], vec![0.0], InversionMethod::Exact).unwrap();
        assert!(matches!(weights(&zero, WeightModel::WhiteNoise), Err(Error::DegenerateWeight { .. })));
    }

    #[test]
    fn white_noise_nu_is_one_plus_b() {
        let q = laplace(500);
        let d = Dictionary::from_labels(vec![Label { l: 0, b: 0.5 }, Label { l: 0, b: 2.0 }], q.domain_grid()).unwrap();
        let inv = invert_exact(&q, &d, DEFAULT_SVD_TOL).unwrap();
        let nu = weights(&inv, WeightModel::WhiteNoise).unwrap();
        for (j, b) in [0.5, 2.0].into_iter().enumerate() {
            assert!((nu.nu[j] - (1.0 + b)).abs() < 5e-3, "{}", nu.nu[j]);
        }
    }
}
