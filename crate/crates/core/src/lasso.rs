//! Weighted Lasso: objective, coordinate-descent solver, regularization paths and penalty selection.

use faer::Mat;

use crate::dictionary::{Dictionary, GramMatrix};
use crate::error::{Error, Result};
use crate::grid::GridFunction;
use crate::inversion::WeightVector;
use crate::linalg;
use crate::operator::DiscreteOperator;

/// Default KKT tolerance.
pub const DEFAULT_TOL: f64 = 1e-8;
/// Default sweep budget.
pub const DEFAULT_MAX_ITER: usize = 100_000;

/// `min_t tᵀΦt − 2tᵀβ̂ + α Σ_j ν_j |t_j|`.
#[derive(Debug, Clone, Copy)]
pub struct WeightedLassoProblem<'a> {
    pub gram: &'a GramMatrix,
    pub beta_hat: &'a [f64],
    pub nu: &'a [f64],
    pub alpha: f64,
}

impl<'a> WeightedLassoProblem<'a> {
    pub fn new(gram: &'a GramMatrix, beta_hat: &'a [f64], nu: &'a WeightVector, alpha: f64) -> Result<Self> {
        Self::from_slices(gram, beta_hat, &nu.nu, alpha)
    }

    pub fn from_slices(gram: &'a GramMatrix, beta_hat: &'a [f64], nu: &'a [f64], alpha: f64) -> Result<Self> {
        let p = gram.p();
        for (len, context) in [(beta_hat.len(), "beta_hat"), (nu.len(), "nu")] {
            if len != p {
                return Err(Error::DimensionMismatch {
                    expected: p,
                    found: len,
                    context,
                });
            }
        }
        if !(alpha >= 0.0 && alpha.is_finite()) {
            return Err(Error::param("alpha", format!("must be non-negative, got {alpha}")));
        }
        for (index, &value) in nu.iter().enumerate() {
            if !(value > 0.0 && value.is_finite()) {
                return Err(Error::DegenerateWeight { index, value });
            }
        }
        for j in 0..p {
            if !(gram.get(j, j) > 0.0) {
                return Err(Error::param("gram", format!("diagonal entry {j} is not positive")));
            }
        }
        Ok(WeightedLassoProblem {
            gram,
            beta_hat,
            nu,
            alpha,
        })
    }

    pub fn p(&self) -> usize {
        self.beta_hat.len()
    }

    pub fn with_alpha(self, alpha: f64) -> Self {
        WeightedLassoProblem { alpha, ..self }
    }
}

/// Objective value at `t`.
pub fn objective(prob: &WeightedLassoProblem<'_>, t: &[f64]) -> f64 {
    let g = gram_times(prob.gram, t);
    objective_with(prob, t, &g)
}

fn objective_with(prob: &WeightedLassoProblem<'_>, t: &[f64], g: &[f64]) -> f64 {
    let mut v = 0.0;
    for j in 0..t.len() {
        v += t[j] * g[j] - 2.0 * t[j] * prob.beta_hat[j] + prob.alpha * prob.nu[j] * t[j].abs();
    }
    v
}

fn gram_times(gram: &GramMatrix, t: &[f64]) -> Vec<f64> {
    linalg::mat_vec(gram.entries(), t)
}

/// KKT violation of `t` given `g = Φt`.
fn kkt_with(prob: &WeightedLassoProblem<'_>, t: &[f64], g: &[f64]) -> f64 {
    let mut worst = 0.0f64;
    for j in 0..t.len() {
        let grad = 2.0 * (g[j] - prob.beta_hat[j]);
        let pen = prob.alpha * prob.nu[j];
        let v = if t[j] != 0.0 {
            (grad + pen * t[j].signum()).abs()
        } else {
            (grad.abs() - pen).max(0.0)
        };
        worst = worst.max(v);
    }
    worst
}

/// KKT violation recomputed from scratch.
pub fn kkt_residual(prob: &WeightedLassoProblem<'_>, t: &[f64]) -> f64 {
    kkt_with(prob, t, &gram_times(prob.gram, t))
}

/// `S(x, λ) = sign(x)·max(|x| − λ, 0)`.
pub fn soft_threshold(x: f64, lambda: f64) -> f64 {
    if x > lambda {
        x - lambda
    } else if x < -lambda {
        x + lambda
    } else {
        0.0
    }
}

/// Solver controls.
#[derive(Debug, Clone, Copy)]
pub struct SolverOptions {
    pub tol: f64,
    pub max_iter: usize,
    /// Record the objective after every sweep and accepted active-set step.
    pub trace: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            tol: DEFAULT_TOL,
            max_iter: DEFAULT_MAX_ITER,
            trace: false,
        }
    }
}

/// Result of one weighted-Lasso solve.
#[derive(Debug, Clone, PartialEq)]
pub struct LassoSolution {
    pub alpha: f64,
    pub t_hat: Vec<f64>,
    pub active_set: Vec<usize>,
    pub kkt_residual: f64,
    /// Coordinate sweeps performed (full or active-set).
    pub iterations: usize,
    pub objective_value: f64,
    pub converged: bool,
    /// Objective values when tracing was requested.
    pub trace: Vec<f64>,
}

impl LassoSolution {
    /// Number of nonzero coefficients.
    pub fn support_size(&self) -> usize {
        self.active_set.len()
    }

    /// Turns a non-converged solution into an error.
    pub fn into_result(self) -> Result<Self> {
        if self.converged {
            Ok(self)
        } else {
            Err(Error::NotConverged {
                iterations: self.iterations,
                kkt_residual: self.kkt_residual,
            })
        }
    }
}

struct State<'p, 'a> {
    prob: &'p WeightedLassoProblem<'a>,
    t: Vec<f64>,
    g: Vec<f64>,
}

impl State<'_, '_> {
    fn update(&mut self, j: usize) -> f64 {
        let phi = self.prob.gram.entries();
        let d = phi[(j, j)];
        let r = self.prob.beta_hat[j] - (self.g[j] - d * self.t[j]);
        let new = soft_threshold(r, 0.5 * self.prob.alpha * self.prob.nu[j]) / d;
        let delta = new - self.t[j];
        if delta != 0.0 {
            self.t[j] = new;
            for (gi, &c) in self.g.iter_mut().zip(phi.col(j).iter()) {
                *gi += delta * c;
            }
        }
        delta.abs()
    }

    fn sweep(&mut self, idx: impl Iterator<Item = usize>) -> f64 {
        idx.fold(0.0, |m, j| m.max(self.update(j)))
    }

    fn active(&self) -> Vec<usize> {
        (0..self.t.len()).filter(|&j| self.t[j] != 0.0).collect()
    }

    fn refresh(&mut self) {
        self.g = gram_times(self.prob.gram, &self.t);
    }

    /// Moves toward the minimizer of the objective restricted to the current sign pattern.
    ///
    /// Takes the full step when the sign pattern survives; otherwise stops where the
    /// first coefficient reaches zero and drops it.
    fn active_step(&mut self, active: &[usize]) -> Step {
        if active.is_empty() {
            return Step::Failed;
        }
        let prob = self.prob;
        let sub = prob.gram.submatrix(active);
        let rhs = Mat::from_fn(active.len(), 1, |a, _| {
            let j = active[a];
            prob.beta_hat[j] - 0.5 * prob.alpha * prob.nu[j] * self.t[j].signum()
        });
        let Ok(sol) = linalg::cholesky_solve(sub.as_ref(), rhs.as_ref()) else {
            return Step::Failed;
        };
        let mut step = 1.0f64;
        let mut blocker = None;
        for (a, &j) in active.iter().enumerate() {
            let (cur, target) = (self.t[j], sol[(a, 0)]);
            if !target.is_finite() {
                return Step::Failed;
            }
            if target.signum() != cur.signum() || target == 0.0 {
                let s = cur / (cur - target);
                if s < step {
                    step = s;
                    blocker = Some(j);
                }
            }
        }
        for (a, &j) in active.iter().enumerate() {
            self.t[j] += step * (sol[(a, 0)] - self.t[j]);
        }
        if let Some(j) = blocker {
            self.t[j] = 0.0;
        }
        self.refresh();
        if blocker.is_none() {
            Step::Full
        } else {
            Step::Partial
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Step {
    Full,
    Partial,
    Failed,
}

/// Coordinate descent with active-set acceleration.
///
/// Each sweep applies `t_j ← S(β̂_j − Σ_{k≠j} Φ_{jk} t_k, αν_j/2)/Φ_{jj}`. Between sweeps the
/// solver solves the smooth problem restricted to the current support and sign pattern, which
/// removes the slow convergence caused by nearly collinear columns. It stops once the KKT
/// residual is below `tol`.
pub fn solve(prob: &WeightedLassoProblem<'_>, opts: SolverOptions, warm_start: Option<&[f64]>) -> LassoSolution {
    let p = prob.p();
    let t0 = match warm_start {
        Some(w) if w.len() == p => w.to_vec(),
        _ => vec![0.0; p],
    };
    let mut st = State {
        prob,
        g: gram_times(prob.gram, &t0),
        t: t0,
    };
    let mut trace = Vec::new();
    let mut iterations = 0;
    let mut converged = false;
    let record = |st: &State<'_, '_>, trace: &mut Vec<f64>| {
        if opts.trace {
            trace.push(objective_with(prob, &st.t, &st.g));
        }
    };
    if kkt_with(prob, &st.t, &st.g) <= opts.tol {
        converged = true;
    }
    while !converged && iterations < opts.max_iter {
        let change = st.sweep(0..p);
        iterations += 1;
        record(&st, &mut trace);
        // Inner loop on the support: coordinate sweeps interleaved with restricted solves.
        let mut inner = 0;
        loop {
            let active = st.active();
            if active.is_empty() {
                break;
            }
            let before = objective_with(prob, &st.t, &st.g);
            let saved = (st.t.clone(), st.g.clone());
            let step = st.active_step(&active);
            if step != Step::Failed {
                if objective_with(prob, &st.t, &st.g) > before + 1e-14 * (1.0 + before.abs()) {
                    st.t = saved.0;
                    st.g = saved.1;
                } else {
                    record(&st, &mut trace);
                    if step == Step::Full {
                        break;
                    }
                    continue;
                }
            }
            if iterations >= opts.max_iter {
                break;
            }
            let c = st.sweep(active.iter().copied());
            iterations += 1;
            inner += 1;
            record(&st, &mut trace);
            if c <= opts.tol || inner > 50 {
                break;
            }
        }
        st.refresh();
        let kkt = kkt_with(prob, &st.t, &st.g);
        if kkt <= opts.tol || (change <= opts.tol * 1e-3 && kkt <= opts.tol) {
            converged = true;
        }
    }
    st.refresh();
    let kkt = kkt_with(prob, &st.t, &st.g);
    LassoSolution {
        alpha: prob.alpha,
        active_set: st.active(),
        kkt_residual: kkt,
        iterations,
        objective_value: objective_with(prob, &st.t, &st.g),
        converged: kkt <= opts.tol,
        t_hat: st.t,
        trace,
    }
}

/// Smallest `α` for which `t = 0` satisfies the KKT conditions: `max_j 2|β̂_j|/ν_j`.
pub fn alpha_max(beta_hat: &[f64], nu: &[f64]) -> f64 {
    beta_hat.iter().zip(nu).fold(0.0, |m, (b, n)| m.max(2.0 * b.abs() / n))
}

/// Solutions at `α_k = α_max·k/N`, `k = 1..N`.
#[derive(Debug, Clone)]
pub struct LassoPath {
    pub alpha_max: f64,
    pub solutions: Vec<LassoSolution>,
}

impl LassoPath {
    pub fn len(&self) -> usize {
        self.solutions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.solutions.is_empty()
    }

    pub fn all_converged(&self) -> bool {
        self.solutions.iter().all(|s| s.converged)
    }
}

/// Warm-started path over `N` equispaced penalties, solved from `α_max` downward.
pub fn path(prob: &WeightedLassoProblem<'_>, n_alpha: usize, opts: SolverOptions) -> Result<LassoPath> {
    if n_alpha < 1 {
        return Err(Error::param("N", "path needs at least one point"));
    }
    let amax = alpha_max(prob.beta_hat, prob.nu);
    let mut out: Vec<LassoSolution> = Vec::with_capacity(n_alpha);
    let mut warm = vec![0.0; prob.p()];
    for k in (1..=n_alpha).rev() {
        let alpha = amax * k as f64 / n_alpha as f64;
        let sol = solve(&prob.with_alpha(alpha), opts, Some(&warm));
        if !sol.converged {
            log::warn!("path point k = {k} did not converge (kkt {:e})", sol.kkt_residual);
        }
        warm.clone_from(&sol.t_hat);
        out.push(sol);
    }
    out.reverse();
    Ok(LassoPath {
        alpha_max: amax,
        solutions: out,
    })
}

/// Index (0-based, so path point `k = index + 1`) minimizing `‖f_t̂ − f_true‖₂`, and that error.
pub fn select_alpha_oracle(path: &LassoPath, f_true: &GridFunction, d: &Dictionary) -> Result<(usize, f64)> {
    let errors = oracle_errors(path, f_true, d)?;
    let best = (0..errors.len()).fold(0, |b, k| if errors[k] < errors[b] { k } else { b });
    Ok((best, errors[best]))
}

/// `‖f_t̂(α_k) − f_true‖₂` for every path point.
pub fn oracle_errors(path: &LassoPath, f_true: &GridFunction, d: &Dictionary) -> Result<Vec<f64>> {
    if path.is_empty() {
        return Err(Error::Empty("lasso path"));
    }
    path.solutions
        .iter()
        .map(|s| Ok(d.combine(&s.t_hat)?.sub(f_true)?.norm2()))
        .collect()
}

/// Precomputed `Q φ_j` for cross-validation against an estimate of `q`.
#[derive(Debug, Clone)]
pub struct CvCriterion {
    range: std::sync::Arc<crate::grid::Grid>,
    qphi: Mat<f64>,
}

impl CvCriterion {
    pub fn new(q: &DiscreteOperator, d: &Dictionary) -> Result<Self> {
        if !d.grid().same_as(q.domain_grid()) {
            return Err(Error::GridMismatch("dictionary must live on the operator's domain grid".into()));
        }
        Ok(CvCriterion {
            range: q.range_grid().clone(),
            qphi: q.matrix() * d.matrix(),
        })
    }

    /// `‖Q f_t̂(α_k) − q̂‖₂² + 2σ²n⁻¹ p̂_k` for every path point.
    ///
    /// The misfit is the range-grid quadrature scaled by `n / |range|`, i.e. the
    /// squared Euclidean norm over `n` evenly spread observation points, which is
    /// the scale the `2σ²/n` noise term refers to.
    pub fn values(&self, path: &LassoPath, q_hat: &GridFunction, sigma: f64, n: usize) -> Result<Vec<f64>> {
        if path.is_empty() {
            return Err(Error::Empty("lasso path"));
        }
        if !q_hat.grid().same_as(&self.range) {
            return Err(Error::GridMismatch("q_hat must live on the operator's range grid".into()));
        }
        if n == 0 {
            return Err(Error::param("n", "must be positive"));
        }
        let w = self.range.weights();
        let scale = n as f64 / w.iter().sum::<f64>();
        let pen = 2.0 * sigma * sigma / n as f64;
        Ok(path
            .solutions
            .iter()
            .map(|s| {
                let fit = linalg::mat_vec(self.qphi.as_ref(), &s.t_hat);
                let misfit: f64 = fit
                    .iter()
                    .zip(q_hat.values())
                    .zip(w)
                    .map(|((a, b), w)| w * (a - b) * (a - b))
                    .sum();
                scale * misfit + pen * s.support_size() as f64
            })
            .collect())
    }

    /// Minimizer of [`CvCriterion::values`], ties going to the largest index.
    pub fn select(&self, path: &LassoPath, q_hat: &GridFunction, sigma: f64, n: usize) -> Result<usize> {
        let v = self.values(path, q_hat, sigma, n)?;
        Ok((0..v.len()).fold(0, |b, k| if v[k] <= v[b] { k } else { b }))
    }
}

/// Cross-validated path index (0-based); see [`CvCriterion`].
pub fn select_alpha_cv(
    path: &LassoPath,
    q: &DiscreteOperator,
    q_hat: &GridFunction,
    sigma: f64,
    n: usize,
    d: &Dictionary,
) -> Result<usize> {
    CvCriterion::new(q, d)?.select(path, q_hat, sigma, n)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gram_from(rows: &[&[f64]]) -> GramMatrix {
        let p = rows.len();
        GramMatrix::new(Mat::from_fn(p, p, |i, j| rows[i][j])).unwrap()
    }

    #[test]
    fn objective_examples() {
        let g = gram_from(&[&[1.0]]);
        let prob = WeightedLassoProblem::from_slices(&g, &[1.0], &[1.0], 1.0).unwrap();
        assert_eq!(objective(&prob, &[0.0]), 0.0);
        assert!((objective(&prob, &[0.5]) + 0.25).abs() < 1e-15);
        let at_zero_alpha = objective(&prob.with_alpha(0.0), &[0.5]);
        assert!((at_zero_alpha + 0.5 - objective(&prob, &[0.5])).abs() < 1e-15);
    }

    #[test]
    fn scalar_solve() {
        let g = gram_from(&[&[1.0]]);
        let prob = WeightedLassoProblem::from_slices(&g, &[1.0], &[1.0], 1.0).unwrap();
        let s = solve(&prob, SolverOptions::default(), None);
        assert!(s.converged);
        assert!((s.t_hat[0] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn orthonormal_soft_threshold() {
        let g = GramMatrix::identity(2);
        let prob = WeightedLassoProblem::from_slices(&g, &[1.0, 0.2], &[1.0, 1.0], 1.0).unwrap();
        let s = solve(&prob, SolverOptions::default(), None);
        assert_eq!(s.t_hat, vec![0.5, 0.0]);
        assert_eq!(s.active_set, vec![0]);
    }

    #[test]
    fn alpha_max_examples() {
        assert_eq!(alpha_max(&[0.0, 0.0], &[1.0, 2.0]), 0.0);
        assert_eq!(alpha_max(&[1.0, -2.0], &[1.0, 4.0]), 2.0);
        let g = gram_from(&[&[1.0, 0.3], &[0.3, 1.0]]);
        let beta = [1.0, -2.0];
        let nu = [1.0, 4.0];
        let a = alpha_max(&beta, &nu) * 1.0001;
        let prob = WeightedLassoProblem::from_slices(&g, &beta, &nu, a).unwrap();
        let s = solve(&prob, SolverOptions::default(), None);
        assert!(s.t_hat.iter().all(|&t| t == 0.0));
    }

    #[test]
    fn coherent_pair_converges() {
        let g = gram_from(&[&[1.0, 0.9997], &[0.9997, 1.0]]);
        let prob = WeightedLassoProblem::from_slices(&g, &[1.0, 0.999], &[1.0, 1.2], 0.01).unwrap();
        let s = solve(&prob, SolverOptions::default(), None);
        assert!(s.converged, "kkt {}", s.kkt_residual);
        assert!(s.kkt_residual <= 1e-8);
    }

    #[test]
    fn path_ends_at_zero_and_supports_shrink() {
        let g = GramMatrix::identity(4);
        let beta = [1.0, -0.5, 0.25, 2.0];
        let nu = [1.0, 1.0, 2.0, 1.0];
        let prob = WeightedLassoProblem::from_slices(&g, &beta, &nu, 0.0).unwrap();
        let path = path(&prob, 20, SolverOptions::default()).unwrap();
        assert_eq!(path.len(), 20);
        assert!(path.solutions[19].t_hat.iter().all(|&t| t == 0.0));
        for w in path.solutions.windows(2) {
            assert!(w[0].support_size() >= w[1].support_size());
        }
    }

    #[test]
    fn non_convergence_is_explicit() {
        let g = gram_from(&[&[1.0, 0.99], &[0.99, 1.0]]);
        let prob = WeightedLassoProblem::from_slices(&g, &[1.0, 0.5], &[1.0, 1.0], 0.01).unwrap();
        let opts = SolverOptions {
            max_iter: 0,
            ..SolverOptions::default()
        };
        let s = solve(&prob, opts, None);
        assert!(!s.converged);
        assert!(matches!(s.into_result(), Err(Error::NotConverged { .. })));
    }
}
