//! Forward models: Laplace convolution, test functions, observation noise and mixtures.

use std::fmt;
use std::sync::Arc;

use faer::{Mat, MatRef};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Grid, GridFunction};
use crate::operator::DiscreteOperator;

/// Seeded generator used for every random draw in the crate.
pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;
type CondDensity = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;

/// Kernel `g` of the Laplace convolution `q(x) = ∫₀ˣ g(x − t) f(t) dt` on `[0, T]`.
#[derive(Clone)]
pub struct LaplaceKernel {
    g: ScalarFn,
    t_max: f64,
}

impl fmt::Debug for LaplaceKernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("LaplaceKernel").field("t_max", &self.t_max).finish_non_exhaustive()
    }
}

impl LaplaceKernel {
    pub fn new(t_max: f64, g: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Result<Self> {
        if !(t_max > 0.0 && t_max.is_finite()) {
            return Err(Error::param("T", format!("must be positive, got {t_max}")));
        }
        Ok(LaplaceKernel { g: Arc::new(g), t_max })
    }

    /// `g(x) = e^{−x}`.
    pub fn exponential(t_max: f64) -> Result<Self> {
        Self::new(t_max, |x| (-x).exp())
    }

    /// Kernel looked up from `(x, g)` pairs by linear interpolation.
    pub fn tabulated(t_max: f64, x: Vec<f64>, g: Vec<f64>) -> Result<Self> {
        let grid = Grid::from_parts(
            x.first().copied().unwrap_or(0.0).min(0.0),
            x.last().copied().unwrap_or(t_max).max(t_max),
            x.clone(),
            vec![1.0; x.len()],
        )?;
        if g.len() != x.len() {
            return Err(Error::DimensionMismatch {
                expected: x.len(),
                found: g.len(),
                context: "tabulated kernel values",
            });
        }
        Self::new(t_max, move |s| grid.interpolate(&g, s))
    }

    pub fn eval(&self, x: f64) -> f64 {
        (self.g)(x)
    }

    pub fn t_max(&self) -> f64 {
        self.t_max
    }
}

/// Domain grid of cell midpoints and range grid of cell right ends on `[0, T]`.
///
/// With this pair the discrete Volterra adjoint is triangular with a nonzero diagonal,
/// so inverse images exist exactly.
pub fn staggered_grids(t_max: f64, cells: usize) -> Result<(Arc<Grid>, Arc<Grid>)> {
    Ok((
        Arc::new(Grid::midpoint(0.0, t_max, cells)?),
        Arc::new(Grid::right_end(0.0, t_max, cells)?),
    ))
}

/// Quadrature matrix of `f ↦ ∫₀ˣ g(x − t) f(t) dt`, keeping only nodes with `t ≤ x`.
pub fn laplace_operator(kernel: &LaplaceKernel, domain: Arc<Grid>, range: Arc<Grid>) -> Result<DiscreteOperator> {
    let tm = kernel.t_max() * (1.0 + 1e-12);
    for g in [&domain, &range] {
        if g.a() < 0.0 || g.b() > tm {
            return Err(Error::GridMismatch(format!(
                "grid [{}, {}] leaves the kernel interval [0, {}]",
                g.a(),
                g.b(),
                kernel.t_max()
            )));
        }
    }
    let k = kernel.clone();
    Ok(DiscreteOperator::from_kernel(domain, range, move |x, t| {
        if t <= x + 1e-12 {
            k.eval(x - t)
        } else {
            0.0
        }
    }))
}

/// The three test functions plus user-supplied shapes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TestFunctionId {
    F1,
    F2,
    F3,
    Custom,
}

impl TestFunctionId {
    pub fn name(self) -> &'static str {
        match self {
            TestFunctionId::F1 => "f1",
            TestFunctionId::F2 => "f2",
            TestFunctionId::F3 => "f3",
            TestFunctionId::Custom => "custom",
        }
    }

    /// Unnormalized shape.
    pub fn shape(self, x: f64) -> Option<f64> {
        match self {
            TestFunctionId::F1 => Some((-x / 2.0).exp()),
            TestFunctionId::F2 => Some(x * x * (-x).exp()),
            TestFunctionId::F3 => Some(x.powi(4) * (-4.0 * x).exp()),
            TestFunctionId::Custom => None,
        }
    }
}

/// Unit-norm function used as ground truth.
#[derive(Debug, Clone)]
pub struct TestFunction {
    pub id: TestFunctionId,
    pub values: GridFunction,
}

/// Samples f1, f2 or f3 on `grid`, normalized to unit grid norm.
pub fn test_function(id: TestFunctionId, grid: &Arc<Grid>) -> Result<TestFunction> {
    if id == TestFunctionId::Custom {
        return Err(Error::param("id", "custom test functions need explicit values; use TestFunction::custom"));
    }
    let values = grid.sample(|x| id.shape(x).unwrap_or(0.0)).normalized()?;
    Ok(TestFunction { id, values })
}

impl TestFunction {
    pub fn custom(values: GridFunction) -> Result<Self> {
        Ok(TestFunction {
            id: TestFunctionId::Custom,
            values: values.normalized()?,
        })
    }
}

/// `yᵢ = (Qf)(xᵢ) + n^{−1/2} σ ξᵢ` at the observation nodes, with `ξ` drawn from `rng`.
pub fn generate_observations_with<R: Rng + ?Sized>(
    f: &GridFunction,
    q: &DiscreteOperator,
    sigma: f64,
    obs_grid: &Grid,
    rng: &mut R,
) -> Result<Vec<f64>> {
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(Error::param("sigma", format!("must be non-negative, got {sigma}")));
    }
    let qf = q.apply(f)?;
    let n = obs_grid.n_nodes();
    let scale = sigma / (n as f64).sqrt();
    Ok(obs_grid
        .nodes()
        .iter()
        .map(|&x| {
            let xi: f64 = rng.sample(StandardNormal);
            qf.eval(x) + scale * xi
        })
        .collect())
}

/// [`generate_observations_with`] using a fresh generator seeded by `seed`.
pub fn generate_observations(
    f: &TestFunction,
    q: &DiscreteOperator,
    sigma: f64,
    obs_grid: &Grid,
    seed: u64,
) -> Result<Vec<f64>> {
    generate_observations_with(&f.values, q, sigma, obs_grid, &mut rng_from_seed(seed))
}

/// White-noise data `y = Qf + √ε·η` on the range grid, with node noise variance `ε/wᵢ`.
///
/// With this scaling `⟨η, g⟩` has variance `‖g‖₂²` for every grid function `g`.
pub fn white_noise_observation<R: Rng + ?Sized>(
    f: &GridFunction,
    q: &DiscreteOperator,
    eps: f64,
    rng: &mut R,
) -> Result<GridFunction> {
    if !(eps >= 0.0 && eps.is_finite()) {
        return Err(Error::param("eps", format!("must be non-negative, got {eps}")));
    }
    let mut y = q.apply(f)?;
    let w = q.range_grid().weights().to_vec();
    for (v, wi) in y.values_mut().iter_mut().zip(w) {
        let xi: f64 = rng.sample(StandardNormal);
        *v += (eps / wi).sqrt() * xi;
    }
    Ok(y)
}

/// Conditional density `g(y | x)` tabulated on an `x` grid and a `y` grid.
///
/// Each column (fixed `x`) is rescaled so that its `y` quadrature is exactly 1.
#[derive(Clone)]
pub struct MixtureKernel {
    x_grid: Arc<Grid>,
    y_grid: Arc<Grid>,
    table: Mat<f64>,
    g_cond: Option<CondDensity>,
}

impl fmt::Debug for MixtureKernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("MixtureKernel")
            .field("x_nodes", &self.x_grid.n_nodes())
            .field("y_nodes", &self.y_grid.n_nodes())
            .finish_non_exhaustive()
    }
}

impl MixtureKernel {
    pub fn new(
        x_grid: Arc<Grid>,
        y_grid: Arc<Grid>,
        g_cond: impl Fn(f64, f64) -> f64 + Send + Sync + 'static,
    ) -> Result<Self> {
        let table = Mat::from_fn(y_grid.n_nodes(), x_grid.n_nodes(), |i, k| {
            g_cond(y_grid.nodes()[i], x_grid.nodes()[k])
        });
        let mut kern = Self::from_table(x_grid, y_grid, table)?;
        kern.g_cond = Some(Arc::new(g_cond));
        Ok(kern)
    }

    /// Kernel from a `y_nodes × x_nodes` table of non-negative values.
    pub fn from_table(x_grid: Arc<Grid>, y_grid: Arc<Grid>, mut table: Mat<f64>) -> Result<Self> {
        if table.nrows() != y_grid.n_nodes() || table.ncols() != x_grid.n_nodes() {
            return Err(Error::DimensionMismatch {
                expected: y_grid.n_nodes() * x_grid.n_nodes(),
                found: table.nrows() * table.ncols(),
                context: "mixture kernel table must be y_nodes x x_nodes",
            });
        }
        let wy = y_grid.weights();
        for k in 0..table.ncols() {
            let mut mass = 0.0;
            for i in 0..table.nrows() {
                let v = table[(i, k)];
                if !(v >= 0.0 && v.is_finite()) {
                    return Err(Error::InvalidDensity(format!("g(y|x) = {v} at y index {i}, x index {k}")));
                }
                mass += wy[i] * v;
            }
            if mass <= 0.0 {
                return Err(Error::InvalidDensity(format!("column {k} has zero mass")));
            }
            for i in 0..table.nrows() {
                table[(i, k)] /= mass;
            }
        }
        Ok(MixtureKernel {
            x_grid,
            y_grid,
            table,
            g_cond: None,
        })
    }

    /// `g(y|x) = e^{−y/x}/x` with `x` on 250 cells of `[0.5, 3]` and `y` on 1500 cells of `[0, 30]`.
    pub fn exponential_demo() -> Result<Self> {
        let x = Arc::new(Grid::midpoint(0.5, 3.0, 250)?);
        let y = Arc::new(Grid::midpoint(0.0, 30.0, 1500)?);
        Self::new(x, y, |y, x| (-y / x).exp() / x)
    }

    pub fn x_grid(&self) -> &Arc<Grid> {
        &self.x_grid
    }

    pub fn y_grid(&self) -> &Arc<Grid> {
        &self.y_grid
    }

    /// Normalized table, rows indexed by `y`, columns by `x`.
    pub fn table(&self) -> MatRef<'_, f64> {
        self.table.as_ref()
    }

    /// Unnormalized analytic density, when the kernel was built from one.
    pub fn density(&self, y: f64, x: f64) -> Option<f64> {
        self.g_cond.as_ref().map(|g| g(y, x))
    }

    /// The mixing operator `f ↦ q(y) = ∫ g(y|x) f(x) dx` from the `x` grid to the `y` grid.
    pub fn operator(&self) -> DiscreteOperator {
        let w = self.x_grid.weights();
        let m = Mat::from_fn(self.table.nrows(), self.table.ncols(), |i, k| self.table[(i, k)] * w[k]);
        DiscreteOperator::from_matrix(Arc::clone(&self.x_grid), Arc::clone(&self.y_grid), m)
            .expect("table shape checked at construction")
    }
}

fn cumulative(mass: impl Iterator<Item = f64>) -> Vec<f64> {
    let mut acc = 0.0;
    let mut c: Vec<f64> = mass
        .map(|m| {
            acc += m;
            acc
        })
        .collect();
    let total = acc;
    for v in &mut c {
        *v /= total;
    }
    c
}

fn draw_index<R: Rng + ?Sized>(cdf: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    cdf.partition_point(|&c| c <= u).min(cdf.len() - 1)
}

/// Draws `Xᵢ ~ f_true` and then `Yᵢ ~ g(·|Xᵢ)`, both by inverse CDF over grid nodes.
pub fn sample_mixture_with<R: Rng + ?Sized>(
    f_true: &GridFunction,
    kernel: &MixtureKernel,
    n: usize,
    rng: &mut R,
) -> Result<Vec<f64>> {
    if !f_true.grid().same_as(&kernel.x_grid) {
        return Err(Error::GridMismatch("mixing density must live on the kernel's x grid".into()));
    }
    let w = kernel.x_grid.weights();
    let vals = f_true.values();
    let scale = vals.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if let Some(v) = vals.iter().find(|&&v| v < -1e-10 * scale) {
        return Err(Error::InvalidDensity(format!("mixing density takes the negative value {v}")));
    }
    let mass: f64 = vals.iter().zip(w).map(|(v, w)| v.max(0.0) * w).sum();
    if !(mass > 0.0) {
        return Err(Error::InvalidDensity("mixing density has no mass".into()));
    }
    if (mass - 1.0).abs() > 1e-6 {
        log::warn!("mixing density integrates to {mass}, renormalizing");
    }
    let x_cdf = cumulative(vals.iter().zip(w).map(|(v, w)| v.max(0.0) * w));
    let wy = kernel.y_grid.weights();
    let y_nodes = kernel.y_grid.nodes();
    let mut col_cdf: Vec<Option<Vec<f64>>> = vec![None; kernel.x_grid.n_nodes()];
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let k = draw_index(&x_cdf, rng);
        let cdf = col_cdf[k].get_or_insert_with(|| {
            cumulative((0..kernel.table.nrows()).map(|i| kernel.table[(i, k)] * wy[i]))
        });
        out.push(y_nodes[draw_index(cdf, rng)]);
    }
    Ok(out)
}

/// [`sample_mixture_with`] using a fresh generator seeded by `seed`.
pub fn sample_mixture(f_true: &GridFunction, kernel: &MixtureKernel, n: usize, seed: u64) -> Result<Vec<f64>> {
    sample_mixture_with(f_true, kernel, n, &mut rng_from_seed(seed))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn setup(cells: usize) -> DiscreteOperator {
        let (d, r) = staggered_grids(10.0, cells).unwrap();
        laplace_operator(&LaplaceKernel::exponential(10.0).unwrap(), d, r).unwrap()
    }

    #[test]
    fn laplace_of_exponential() {
        let q = setup(2000);
        let f = q.domain_grid().sample(|t| (-t).exp());
        let qf = q.apply(&f).unwrap();
        for (x, v) in q.range_grid().nodes().iter().zip(qf.values()) {
            assert!((v - x * (-x).exp()).abs() < 1e-4);
        }
        let zero = q.apply(&GridFunction::zeros(q.domain_grid().clone())).unwrap();
        assert!(zero.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn laplace_matrix_is_causal() {
        let q = setup(100);
        let (x, t) = (q.range_grid().nodes(), q.domain_grid().nodes());
        for i in 0..100 {
            for k in 0..100 {
                if t[k] > x[i] {
                    assert_eq!(q.matrix()[(i, k)], 0.0);
                }
            }
        }
    }

    #[test]
    fn test_functions() {
        let g = Arc::new(Grid::uniform(0.0, 10.0, 2001).unwrap());
        let f1 = test_function(TestFunctionId::F1, &g).unwrap();
        assert!((f1.values.values()[0] - 1.0).abs() < 1e-4);
        let f2 = test_function(TestFunctionId::F2, &g).unwrap();
        assert_eq!(f2.values.values()[0], 0.0);
        for id in [TestFunctionId::F1, TestFunctionId::F2, TestFunctionId::F3] {
            assert!((test_function(id, &g).unwrap().values.norm2() - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn noiseless_observations_interpolate_q() {
        let q = setup(400);
        let f = test_function(TestFunctionId::F2, q.domain_grid()).unwrap();
        let obs = Grid::right_end(0.0, 10.0, 32).unwrap();
        let y = generate_observations(&f, &q, 0.0, &obs, 7).unwrap();
        let qf = q.apply(&f.values).unwrap();
        for (yi, x) in y.iter().zip(obs.nodes()) {
            assert_eq!(*yi, qf.eval(*x));
        }
        let a = generate_observations(&f, &q, 0.5, &obs, 7).unwrap();
        let b = generate_observations(&f, &q, 0.5, &obs, 7).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn observation_noise_variance() {
        let q = setup(200);
        let f = test_function(TestFunctionId::F1, q.domain_grid()).unwrap();
        let obs = Grid::right_end(0.0, 10.0, 64).unwrap();
        let clean = generate_observations(&f, &q, 0.0, &obs, 0).unwrap();
        let mut rng = rng_from_seed(11);
        let (mut s, mut count) = (0.0, 0usize);
        for _ in 0..10_000 {
            let y = generate_observations_with(&f.values, &q, 1.0, &obs, &mut rng).unwrap();
            s += y.iter().zip(&clean).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
            count += y.len();
        }
        let var = s / count as f64;
        assert!((var * 64.0 - 1.0).abs() < 0.05);
    }

    #[test]
    fn point_mass_channel_returns_x() {
        let g = Arc::new(Grid::midpoint(0.0, 1.0, 20).unwrap());
        let table = Mat::from_fn(20, 20, |i, k| if i == k { 1.0 } else { 0.0 });
        let kern = MixtureKernel::from_table(g.clone(), g.clone(), table).unwrap();
        let f = g.sample(|x| 2.0 * x);
        // Y equals the X node drawn; with the same seed the X draws are the
        // first uniform of each pair, so compare against the x-marginal support.
        let y = sample_mixture(&f, &kern, 500, 3).unwrap();
        assert!(y.iter().all(|v| g.nodes().contains(v)));
        let mut rng = rng_from_seed(3);
        let cdf = cumulative(f.values().iter().zip(g.weights()).map(|(v, w)| v * w));
        for yi in &y {
            let k = draw_index(&cdf, &mut rng);
            let _ = draw_index(&[1.0], &mut rng);
            assert_eq!(*yi, g.nodes()[k]);
        }
    }

    #[test]
    fn mixture_kernel_columns_are_densities() {
        let k = MixtureKernel::exponential_demo().unwrap();
        let wy = k.y_grid().weights();
        for c in 0..k.table().ncols() {
            let m: f64 = (0..k.table().nrows()).map(|i| wy[i] * k.table()[(i, c)]).sum();
            assert!((m - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn mixture_rejects_negative_density() {
        let k = MixtureKernel::exponential_demo().unwrap();
        let f = k.x_grid().sample(|x| x - 1.0);
        assert!(matches!(sample_mixture(&f, &k, 10, 0), Err(Error::InvalidDensity(_))));
    }
}
