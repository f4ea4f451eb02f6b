//! Quadrature grids and functions sampled on them.

use std::sync::Arc;

use crate::error::{Error, Result};

/// Nodes and quadrature weights on an interval `[a, b]`.
///
/// Several rules are available. [`Grid::uniform`] is the composite trapezoid
/// rule with nodes at both endpoints; [`Grid::midpoint`] and [`Grid::right_end`]
/// place one node per cell and are used as a staggered pair for Volterra
/// operators.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    a: f64,
    b: f64,
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

fn check_interval(a: f64, b: f64) -> Result<()> {
    if !(a.is_finite() && b.is_finite()) {
        return Err(Error::param("a, b", "interval endpoints must be finite"));
    }
    if b <= a {
        return Err(Error::param("b", format!("need b > a, got a = {a}, b = {b}")));
    }
    Ok(())
}

impl Grid {
    /// Composite trapezoid rule with `n_nodes` equispaced nodes including both endpoints.
    pub fn uniform(a: f64, b: f64, n_nodes: usize) -> Result<Self> {
        check_interval(a, b)?;
        if n_nodes < 2 {
            return Err(Error::param("n_nodes", format!("need at least 2 nodes, got {n_nodes}")));
        }
        let h = (b - a) / (n_nodes - 1) as f64;
        let nodes = (0..n_nodes)
            .map(|i| if i == n_nodes - 1 { b } else { a + i as f64 * h })
            .collect();
        let mut weights = vec![h; n_nodes];
        weights[0] = 0.5 * h;
        weights[n_nodes - 1] = 0.5 * h;
        Ok(Grid { a, b, nodes, weights })
    }

    /// Composite Simpson rule; `n_nodes` must be odd and at least 3.
    pub fn simpson(a: f64, b: f64, n_nodes: usize) -> Result<Self> {
        check_interval(a, b)?;
        if n_nodes < 3 || n_nodes % 2 == 0 {
            return Err(Error::param("n_nodes", format!("Simpson needs an odd count >= 3, got {n_nodes}")));
        }
        let mut g = Grid::uniform(a, b, n_nodes)?;
        let h = (b - a) / (n_nodes - 1) as f64;
        for (i, w) in g.weights.iter_mut().enumerate() {
            let c = if i == 0 || i == n_nodes - 1 {
                1.0
            } else if i % 2 == 1 {
                4.0
            } else {
                2.0
            };
            *w = c * h / 3.0;
        }
        Ok(g)
    }

    /// One node at the centre of each of `cells` equal cells.
    pub fn midpoint(a: f64, b: f64, cells: usize) -> Result<Self> {
        Self::cellwise(a, b, cells, 0.5)
    }

    /// One node at the right end of each of `cells` equal cells, so the last node is `b`.
    pub fn right_end(a: f64, b: f64, cells: usize) -> Result<Self> {
        Self::cellwise(a, b, cells, 1.0)
    }

    fn cellwise(a: f64, b: f64, cells: usize, offset: f64) -> Result<Self> {
        check_interval(a, b)?;
        if cells < 1 {
            return Err(Error::param("cells", "need at least one cell"));
        }
        let h = (b - a) / cells as f64;
        let nodes = (0..cells).map(|k| a + (k as f64 + offset) * h).collect();
        Ok(Grid {
            a,
            b,
            nodes,
            weights: vec![h; cells],
        })
    }

    /// Arbitrary nodes and weights; nodes must be strictly increasing inside `[a, b]`.
    pub fn from_parts(a: f64, b: f64, nodes: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        check_interval(a, b)?;
        if nodes.is_empty() {
            return Err(Error::Empty("grid nodes"));
        }
        if nodes.len() != weights.len() {
            return Err(Error::DimensionMismatch {
                expected: nodes.len(),
                found: weights.len(),
                context: "grid weights",
            });
        }
        if nodes.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::param("nodes", "must be strictly increasing"));
        }
        if nodes[0] < a || nodes[nodes.len() - 1] > b {
            return Err(Error::param("nodes", "must lie inside [a, b]"));
        }
        if let Some(w) = weights.iter().find(|w| !(**w > 0.0 && w.is_finite())) {
            return Err(Error::param("weights", format!("must be positive and finite, found {w}")));
        }
        Ok(Grid { a, b, nodes, weights })
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn b(&self) -> f64 {
        self.b
    }

    /// Interval length `b − a`.
    pub fn length(&self) -> f64 {
        self.b - self.a
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Samples `f` at every node.
    pub fn sample(self: &Arc<Self>, f: impl Fn(f64) -> f64) -> GridFunction {
        GridFunction {
            values: self.nodes.iter().map(|&x| f(x)).collect(),
            grid: Arc::clone(self),
        }
    }

    /// Quadrature of `values` against the grid weights.
    pub fn integrate(&self, values: &[f64]) -> f64 {
        self.weights.iter().zip(values).map(|(w, v)| w * v).sum()
    }

    /// Linear interpolation of node data at `x`, constant continuation outside the node range.
    pub fn interpolate(&self, values: &[f64], x: f64) -> f64 {
        let n = self.nodes.len();
        if n == 1 || x <= self.nodes[0] {
            return values[0];
        }
        if x >= self.nodes[n - 1] {
            return values[n - 1];
        }
        let i = self.nodes.partition_point(|&t| t <= x) - 1;
        let (x0, x1) = (self.nodes[i], self.nodes[i + 1]);
        let s = (x - x0) / (x1 - x0);
        values[i] + s * (values[i + 1] - values[i])
    }

    pub(crate) fn same_as(self: &Arc<Self>, other: &Arc<Self>) -> bool {
        Arc::ptr_eq(self, other) || **self == **other
    }
}

/// Trapezoid grid on `[a, b]`; shorthand for [`Grid::uniform`].
pub fn make_uniform_grid(a: f64, b: f64, n_nodes: usize) -> Result<Grid> {
    Grid::uniform(a, b, n_nodes)
}

/// Values of a function at the nodes of a shared grid.
#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction {
    grid: Arc<Grid>,
    values: Vec<f64>,
}

impl GridFunction {
    pub fn new(grid: Arc<Grid>, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.n_nodes() {
            return Err(Error::DimensionMismatch {
                expected: grid.n_nodes(),
                found: values.len(),
                context: "grid function values",
            });
        }
        Ok(GridFunction { grid, values })
    }

    pub fn zeros(grid: Arc<Grid>) -> Self {
        let n = grid.n_nodes();
        GridFunction { grid, values: vec![0.0; n] }
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn norm2(&self) -> f64 {
        self.grid
            .weights
            .iter()
            .zip(&self.values)
            .map(|(w, v)| w * v * v)
            .sum::<f64>()
            .sqrt()
    }

    /// Exact `L²(a, b)` norm of the piecewise-linear interpolant used by [`GridFunction::eval`].
    ///
    /// Second-order accurate on one-node-per-cell grids, where [`GridFunction::norm2`] is first order.
    pub fn interpolant_norm2(&self) -> f64 {
        let (x, v) = (&self.grid.nodes, &self.values);
        let n = v.len();
        let mut s = (x[0] - self.grid.a) * v[0] * v[0] + (self.grid.b - x[n - 1]) * v[n - 1] * v[n - 1];
        for i in 1..n {
            let (u, w) = (v[i - 1], v[i]);
            s += (x[i] - x[i - 1]) / 3.0 * (u * u + u * w + w * w);
        }
        s.sqrt()
    }

    /// Largest absolute node value.
    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Value at an arbitrary point by linear interpolation.
    pub fn eval(&self, x: f64) -> f64 {
        self.grid.interpolate(&self.values, x)
    }

    pub fn scaled(&self, c: f64) -> Self {
        GridFunction {
            grid: Arc::clone(&self.grid),
            values: self.values.iter().map(|v| c * v).collect(),
        }
    }

    /// Rescales to unit norm; fails on the zero function.
    pub fn normalized(&self) -> Result<Self> {
        let n = self.norm2();
        if !(n > 0.0 && n.is_finite()) {
            return Err(Error::param("f", format!("cannot normalize a function of norm {n}")));
        }
        Ok(self.scaled(1.0 / n))
    }

    /// Pointwise `self − other` on a shared grid.
    pub fn sub(&self, other: &GridFunction) -> Result<Self> {
        check_same(self, other)?;
        Ok(GridFunction {
            grid: Arc::clone(&self.grid),
            values: self.values.iter().zip(&other.values).map(|(a, b)| a - b).collect(),
        })
    }
}

pub(crate) fn check_same(f: &GridFunction, g: &GridFunction) -> Result<()> {
    if f.grid.same_as(&g.grid) {
        Ok(())
    } else {
        Err(Error::GridMismatch(format!(
            "functions live on different grids ({} vs {} nodes on [{}, {}] vs [{}, {}])",
            f.grid.n_nodes(),
            g.grid.n_nodes(),
            f.grid.a,
            f.grid.b,
            g.grid.a,
            g.grid.b
        )))
    }
}

/// Quadrature inner product `Σ wᵢ f(xᵢ) g(xᵢ)`.
pub fn inner_product(f: &GridFunction, g: &GridFunction) -> Result<f64> {
    check_same(f, g)?;
    Ok(f
        .grid
        .weights
        .iter()
        .zip(f.values.iter().zip(&g.values))
        .map(|(w, (a, b))| w * a * b)
        .sum())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_eleven_nodes() {
        let g = make_uniform_grid(0.0, 10.0, 11).unwrap();
        assert_eq!(g.nodes(), &[0.0, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0, 10.0]);
        assert_eq!(g.weights()[0], 0.5);
        assert_eq!(g.weights()[10], 0.5);
        assert!(g.weights()[1..10].iter().all(|&w| w == 1.0));
    }

    #[test]
    fn uniform_two_nodes() {
        let g = make_uniform_grid(0.0, 1.0, 2).unwrap();
        assert_eq!(g.nodes(), &[0.0, 1.0]);
        assert_eq!(g.weights(), &[0.5, 0.5]);
    }

    #[test]
    fn uniform_fine_weight_sum() {
        let g = make_uniform_grid(0.0, 10.0, 2001).unwrap();
        assert!((g.nodes()[1] - 0.005).abs() < 1e-15);
        let s: f64 = g.weights().iter().sum();
        assert!((s - 10.0).abs() <= 1e-12 * 10.0);
    }

    #[test]
    fn rejects_bad_intervals() {
        assert!(make_uniform_grid(1.0, 1.0, 5).is_err());
        assert!(make_uniform_grid(2.0, 1.0, 5).is_err());
        assert!(make_uniform_grid(0.0, 1.0, 1).is_err());
        assert!(Grid::simpson(0.0, 1.0, 4).is_err());
    }

    #[test]
    fn cellwise_grids_have_full_mass() {
        for g in [Grid::midpoint(0.0, 10.0, 2000).unwrap(), Grid::right_end(0.0, 10.0, 2000).unwrap()] {
            let s: f64 = g.weights().iter().sum();
            assert!((s - 10.0).abs() < 1e-12);
        }
        let r = Grid::right_end(0.0, 10.0, 64).unwrap();
        assert_eq!(r.nodes()[63], 10.0);
        assert!((r.nodes()[0] - 10.0 / 64.0).abs() < 1e-15);
    }

    #[test]
    fn interpolant_norm_is_exact_for_linear() {
        let g = Arc::new(Grid::right_end(0.0, 2.0, 4).unwrap());
        let f = g.sample(|x| x);
        // Constant 0.5 on [0, 0.5], then the identity on [0.5, 2].
        let want = (0.125f64 + (8.0 - 0.125) / 3.0).sqrt();
        assert!((f.interpolant_norm2() - want).abs() < 1e-14);
        let e = Arc::new(Grid::right_end(0.0, 10.0, 2000).unwrap()).sample(|x| (-x).exp());
        let exact = ((1.0 - (-20f64).exp()) / 2.0).sqrt();
        assert!((e.interpolant_norm2() - exact).abs() < 1e-4);
        assert!((e.norm2() - exact).abs() > 1e-3);
    }

    #[test]
    fn inner_product_examples() {
        let g = Arc::new(make_uniform_grid(0.0, 10.0, 101).unwrap());
        let zero = GridFunction::zeros(g.clone());
        let one = g.sample(|_| 1.0);
        assert_eq!(inner_product(&zero, &one).unwrap(), 0.0);
        assert!((inner_product(&one, &one).unwrap() - 10.0).abs() < 1e-12);

        let g = Arc::new(make_uniform_grid(0.0, 1.0, 2001).unwrap());
        let t = g.sample(|x| x);
        assert!((inner_product(&t, &t).unwrap() - 1.0 / 3.0).abs() < 1e-5);
    }

    #[test]
    fn inner_product_rejects_mismatch() {
        let g1 = Arc::new(make_uniform_grid(0.0, 1.0, 11).unwrap());
        let g2 = Arc::new(make_uniform_grid(0.0, 1.0, 12).unwrap());
        assert!(inner_product(&g1.sample(|x| x), &g2.sample(|x| x)).is_err());
    }

    #[test]
    fn simpson_integrates_cubics() {
        let g = Grid::simpson(0.0, 2.0, 5).unwrap();
        let v: Vec<f64> = g.nodes().iter().map(|x| x * x * x).collect();
        assert!((g.integrate(&v) - 4.0).abs() < 1e-13);
    }

    #[test]
    fn interpolation_is_linear_between_nodes() {
        let g = make_uniform_grid(0.0, 1.0, 3).unwrap();
        let v = [0.0, 1.0, 4.0];
        assert_eq!(g.interpolate(&v, 0.25), 0.5);
        assert_eq!(g.interpolate(&v, 0.75), 2.5);
        assert_eq!(g.interpolate(&v, -1.0), 0.0);
        assert_eq!(g.interpolate(&v, 2.0), 4.0);
    }
}
