//! Comparison estimators: truncated SVD, Laguerre-Galerkin, and the projection estimate of `q`.

use std::sync::Arc;

use faer::Mat;

use crate::dictionary::laguerre_function_value;
use crate::error::{Error, Result};
use crate::grid::{Grid, GridFunction};
use crate::linalg::{self, ThinSvd};
use crate::operator::DiscreteOperator;

/// Relative singular-value floor below which a direction counts as unidentifiable.
pub const RANK_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BaselineMethod {
    Svd,
    LaguerreGalerkin,
}

/// A baseline reconstruction of `f` and the tuning index that produced it.
#[derive(Debug, Clone)]
pub struct BaselineEstimate {
    pub method: BaselineMethod,
    pub k_used: usize,
    pub f_hat: GridFunction,
    pub error_vs_truth: Option<f64>,
}

fn check_obs(y: &[f64], obs_grid: &Grid) -> Result<()> {
    if y.len() != obs_grid.n_nodes() {
        return Err(Error::DimensionMismatch {
            expected: obs_grid.n_nodes(),
            found: y.len(),
            context: "observations vs observation grid",
        });
    }
    Ok(())
}

/// Singular system of `f ↦ ((Qf)(x₁), …, (Qf)(xₙ))` in `L²` coordinates, reusable across data sets.
#[derive(Debug, Clone)]
pub struct SvdBaseline {
    domain: Arc<Grid>,
    n_obs: usize,
    svd: ThinSvd,
}

impl SvdBaseline {
    pub fn new(q: &DiscreteOperator, obs_grid: &Grid) -> Result<Self> {
        let rows = q.rows_at(obs_grid.nodes());
        let w = q.domain_grid().weights();
        let a = Mat::from_fn(rows.nrows(), rows.ncols(), |i, k| rows[(i, k)] / w[k].sqrt());
        Ok(SvdBaseline {
            domain: Arc::clone(q.domain_grid()),
            n_obs: obs_grid.n_nodes(),
            svd: ThinSvd::new(a.as_ref())?,
        })
    }

    /// Numerical rank at [`RANK_TOL`].
    pub fn rank(&self) -> usize {
        self.svd.rank(RANK_TOL)
    }

    pub fn singular_values(&self) -> &[f64] {
        &self.svd.s
    }

    /// `f̂ = Σ_{k≤K} λ_k⁻¹ ⟨y, e_k⟩ v_k`.
    pub fn estimate(&self, y: &[f64], k: usize) -> Result<BaselineEstimate> {
        if y.len() != self.n_obs {
            return Err(Error::DimensionMismatch {
                expected: self.n_obs,
                found: y.len(),
                context: "observations",
            });
        }
        if k > self.rank() {
            return Err(Error::RankDeficient(format!("K = {k} exceeds the numerical rank {}", self.rank())));
        }
        let b = Mat::from_fn(y.len(), 1, |i, _| y[i]);
        let z = self.svd.solve_truncated(b.as_ref(), k);
        let w = self.domain.weights();
        let values = (0..z.nrows()).map(|i| z[(i, 0)] / w[i].sqrt()).collect();
        Ok(BaselineEstimate {
            method: BaselineMethod::Svd,
            k_used: k,
            f_hat: GridFunction::new(Arc::clone(&self.domain), values)?,
            error_vs_truth: None,
        })
    }
}

/// Truncated-SVD estimate of `f` from observations at the nodes of `obs_grid`.
pub fn svd_estimator(q: &DiscreteOperator, y: &[f64], obs_grid: &Grid, k: usize) -> Result<BaselineEstimate> {
    check_obs(y, obs_grid)?;
    SvdBaseline::new(q, obs_grid)?.estimate(y, k)
}

/// Laguerre basis, its image under `Q` at the observation nodes, ready for least-squares fits.
#[derive(Debug, Clone)]
pub struct LaguerreBaseline {
    domain: Arc<Grid>,
    basis: Mat<f64>,
    design: Mat<f64>,
}

impl LaguerreBaseline {
    /// Precomputes `L_k(·; a)` and `Q L_k` at the observations for `k < k_max`.
    pub fn new(q: &DiscreteOperator, obs_grid: &Grid, a: f64, k_max: usize) -> Result<Self> {
        if !(a > 0.0 && a.is_finite()) {
            return Err(Error::param("a", format!("Laguerre scale must be positive, got {a}")));
        }
        if k_max < 1 {
            return Err(Error::param("K", "need at least one basis function"));
        }
        let t = q.domain_grid().nodes();
        let basis = Mat::from_fn(t.len(), k_max, |i, k| laguerre_function_value(k, a, t[i]));
        let design = q.rows_at(obs_grid.nodes()) * &basis;
        Ok(LaguerreBaseline {
            domain: Arc::clone(q.domain_grid()),
            basis,
            design,
        })
    }

    pub fn k_max(&self) -> usize {
        self.basis.ncols()
    }

    /// Least-squares fit with the first `k` functions.
    pub fn estimate(&self, y: &[f64], k: usize) -> Result<BaselineEstimate> {
        if k < 1 || k > self.k_max() {
            return Err(Error::param("K", format!("need 1 <= K <= {}, got {k}", self.k_max())));
        }
        if y.len() != self.design.nrows() {
            return Err(Error::DimensionMismatch {
                expected: self.design.nrows(),
                found: y.len(),
                context: "observations",
            });
        }
        if k > y.len() {
            return Err(Error::RankDeficient(format!("K = {k} exceeds the number of observations {}", y.len())));
        }
        let c = linalg::lstsq_full_rank(self.design.get(.., ..k), y, RANK_TOL)?;
        let values = linalg::mat_vec(self.basis.get(.., ..k), &c);
        Ok(BaselineEstimate {
            method: BaselineMethod::LaguerreGalerkin,
            k_used: k,
            f_hat: GridFunction::new(Arc::clone(&self.domain), values)?,
            error_vs_truth: None,
        })
    }
}

/// Laguerre-Galerkin estimate with `K` basis functions.
pub fn laguerre_galerkin_estimator(
    q: &DiscreteOperator,
    y: &[f64],
    obs_grid: &Grid,
    a: f64,
    k: usize,
) -> Result<BaselineEstimate> {
    check_obs(y, obs_grid)?;
    LaguerreBaseline::new(q, obs_grid, a, k)?.estimate(y, k)
}

/// Runs `family` at every `K` in `ks` and keeps the one closest to the truth under `metric`.
pub fn oracle_tune<F, M>(mut family: F, f_true: &GridFunction, ks: impl IntoIterator<Item = usize>, metric: M) -> Result<(usize, f64)>
where
    F: FnMut(usize) -> Result<BaselineEstimate>,
    M: Fn(&GridFunction, &GridFunction) -> Result<f64>,
{
    let mut best: Option<(usize, f64)> = None;
    let mut last_err = None;
    for k in ks {
        match family(k) {
            Ok(est) => {
                let e = metric(&est.f_hat, f_true)?;
                if best.is_none_or(|(_, b)| e < b) {
                    best = Some((k, e));
                }
            }
            Err(e) => last_err = Some(e),
        }
    }
    match (best, last_err) {
        (Some(b), _) => Ok(b),
        (None, Some(e)) => Err(e),
        (None, None) => Err(Error::Empty("K range")),
    }
}

/// Least-squares Laguerre projection of observations, evaluated on `range`.
#[derive(Debug, Clone)]
pub struct QHat {
    pub k_used: usize,
    pub values: GridFunction,
    /// SURE criterion per tried `K` (index `K − 1`), NaN where the fit was rank deficient.
    pub criterion: Vec<f64>,
}

/// Projects `y` onto `span{L_k(·; a)}_{k<K}`; with `k = None`, `K` minimizes `‖res‖² + 2σ²K/n` over `1..=n`.
pub fn project_q_hat(
    y: &[f64],
    obs_grid: &Grid,
    a: f64,
    k: Option<usize>,
    sigma: f64,
    range: &Arc<Grid>,
) -> Result<QHat> {
    check_obs(y, obs_grid)?;
    if !(a > 0.0 && a.is_finite()) {
        return Err(Error::param("a", format!("Laguerre scale must be positive, got {a}")));
    }
    let n = y.len();
    let k_hi = k.unwrap_or(n);
    if k_hi < 1 || k_hi > n {
        return Err(Error::param("K", format!("need 1 <= K <= n = {n}, got {k_hi}")));
    }
    let x = obs_grid.nodes();
    let design = Mat::from_fn(n, k_hi, |i, j| laguerre_function_value(j, a, x[i]));
    let fit = |kk: usize| -> Result<Vec<f64>> { linalg::lstsq_full_rank(design.get(.., ..kk), y, RANK_TOL) };
    let (k_used, coef, criterion) = match k {
        Some(kk) => (kk, fit(kk)?, Vec::new()),
        None => {
            let pen = 2.0 * sigma * sigma / n as f64;
            let mut crit = vec![f64::NAN; n];
            let mut best: Option<(usize, Vec<f64>, f64)> = None;
            for kk in 1..=n {
                let Ok(c) = fit(kk) else { continue };
                let fitted = linalg::mat_vec(design.get(.., ..kk), &c);
                let rss: f64 = fitted.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
                let v = rss + pen * kk as f64;
                crit[kk - 1] = v;
                if best.as_ref().is_none_or(|b| v < b.2) {
                    best = Some((kk, c, v));
                }
            }
            let (kk, c, _) = best.ok_or_else(|| Error::RankDeficient("no Laguerre projection is full rank".into()))?;
            (kk, c, crit)
        }
    };
    let values = range.sample(|t| (0..k_used).map(|j| coef[j] * laguerre_function_value(j, a, t)).sum());
    Ok(QHat {
        k_used,
        values,
        criterion,
    })
}
