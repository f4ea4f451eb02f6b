//! Laguerre-monomial dictionaries, their Gram matrices and coherence bounds.

use std::sync::Arc;

use faer::{Mat, MatRef};

use crate::error::{Error, Result};
use crate::grid::{Grid, GridFunction};

/// Largest monomial degree accepted; `(2l)!` stays far from the log-space limits below it.
pub const MAX_DEGREE: usize = 80;

/// Dictionary label: monomial degree `l` and exponential rate `b`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Label {
    pub l: usize,
    pub b: f64,
}

fn ln_factorial(n: usize) -> f64 {
    (1..=n).map(|k| (k as f64).ln()).sum()
}

fn check_label(l: usize, b: f64) -> Result<()> {
    if !(b > 0.0 && b.is_finite()) {
        return Err(Error::param("b", format!("rate must be positive, got {b}")));
    }
    if l > MAX_DEGREE {
        return Err(Error::param("l", format!("degree {l} exceeds the limit {MAX_DEGREE}")));
    }
    Ok(())
}

/// `e^{−bz} z^l (2b)^{l+1/2} / √((2l)!)`, unit norm on `(0, ∞)`.
pub fn laguerre_monomial_value(l: usize, b: f64, z: f64) -> f64 {
    if z <= 0.0 {
        return if l == 0 { (2.0 * b).sqrt() } else { 0.0 };
    }
    let ln = -b * z + l as f64 * z.ln() + (l as f64 + 0.5) * (2.0 * b).ln() - 0.5 * ln_factorial(2 * l);
    ln.exp()
}

/// Samples φ_{l,b} on `grid` and rescales it to unit grid norm.
pub fn laguerre_monomial(l: usize, b: f64, grid: &Arc<Grid>) -> Result<GridFunction> {
    check_label(l, b)?;
    grid.sample(|z| laguerre_monomial_value(l, b, z)).normalized()
}

/// `L_k(t; a) = √(2a) e^{−at} Σ_{j≤k} (−1)^j C(k,j) (2at)^j / j!`, evaluated by the Laguerre recurrence.
pub fn laguerre_function_value(k: usize, a: f64, t: f64) -> f64 {
    let x = 2.0 * a * t;
    let (mut prev, mut cur) = (1.0, 1.0 - x);
    let poly = if k == 0 {
        1.0
    } else {
        for j in 1..k {
            let next = ((2 * j + 1) as f64 - x) * cur / (j + 1) as f64 - j as f64 * prev / (j + 1) as f64;
            prev = cur;
            cur = next;
        }
        cur
    };
    (2.0 * a).sqrt() * (-a * t).exp() * poly
}

/// Laguerre function `L_k(·; a)` sampled on `grid` (no renormalization).
pub fn laguerre_function(k: usize, a: f64, grid: &Arc<Grid>) -> Result<GridFunction> {
    if !(a > 0.0 && a.is_finite()) {
        return Err(Error::param("a", format!("Laguerre scale must be positive, got {a}")));
    }
    Ok(grid.sample(|t| laguerre_function_value(k, a, t)))
}

/// Unit-norm dictionary columns sampled on a common grid.
#[derive(Debug, Clone)]
pub struct Dictionary {
    grid: Arc<Grid>,
    labels: Vec<Label>,
    columns: Vec<GridFunction>,
    matrix: Mat<f64>,
    truncation: Vec<f64>,
}

impl Dictionary {
    /// Builds one column per label; labels must be distinct.
    pub fn from_labels(labels: Vec<Label>, grid: &Arc<Grid>) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::Empty("dictionary labels"));
        }
        for (i, a) in labels.iter().enumerate() {
            if labels[..i].iter().any(|b| b == a) {
                return Err(Error::LabelRange(format!("duplicate label (l = {}, b = {})", a.l, a.b)));
            }
        }
        let columns = labels
            .iter()
            .map(|lb| laguerre_monomial(lb.l, lb.b, grid))
            .collect::<Result<Vec<_>>>()?;
        let truncation = labels
            .iter()
            .map(|lb| upper_gamma_regularized(2 * lb.l + 1, 2.0 * lb.b * grid.b()))
            .collect();
        Ok(Self::assemble(Arc::clone(grid), labels, columns, truncation))
    }

    /// Wraps externally supplied columns; each is renormalized to unit norm.
    pub fn from_columns(labels: Vec<Label>, columns: Vec<GridFunction>) -> Result<Self> {
        if labels.len() != columns.len() {
            return Err(Error::DimensionMismatch {
                expected: labels.len(),
                found: columns.len(),
                context: "dictionary columns vs labels",
            });
        }
        let first = columns.first().ok_or(Error::Empty("dictionary columns"))?;
        let grid = Arc::clone(first.grid());
        let columns = columns
            .iter()
            .map(|c| {
                crate::grid::check_same(first, c)?;
                c.normalized()
            })
            .collect::<Result<Vec<_>>>()?;
        let truncation = vec![f64::NAN; labels.len()];
        Ok(Self::assemble(grid, labels, columns, truncation))
    }

    fn assemble(grid: Arc<Grid>, labels: Vec<Label>, columns: Vec<GridFunction>, truncation: Vec<f64>) -> Self {
        let matrix = Mat::from_fn(grid.n_nodes(), columns.len(), |i, j| columns[j].values()[i]);
        Dictionary {
            grid,
            labels,
            columns,
            matrix,
            truncation,
        }
    }

    pub fn p(&self) -> usize {
        self.labels.len()
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn labels(&self) -> &[Label] {
        &self.labels
    }

    pub fn columns(&self) -> &[GridFunction] {
        &self.columns
    }

    /// Columns as an `n_nodes × p` matrix.
    pub fn matrix(&self) -> MatRef<'_, f64> {
        self.matrix.as_ref()
    }

    /// Analytic mass `∫_b^∞ φ²` each column loses to the finite interval (NaN for imported columns).
    pub fn truncation_mass(&self) -> &[f64] {
        &self.truncation
    }

    /// Index of a label, matching `b` to 1e-9.
    pub fn index_of(&self, l: usize, b: f64) -> Option<usize> {
        self.labels.iter().position(|lb| lb.l == l && (lb.b - b).abs() < 1e-9)
    }

    /// Restriction to a subset of columns, in the given order.
    pub fn subset(&self, idx: &[usize]) -> Result<Self> {
        if let Some(&bad) = idx.iter().find(|&&j| j >= self.p()) {
            return Err(Error::LabelRange(format!("column {bad} out of range for p = {}", self.p())));
        }
        let labels = idx.iter().map(|&j| self.labels[j]).collect();
        let columns = idx.iter().map(|&j| self.columns[j].clone()).collect();
        let truncation = idx.iter().map(|&j| self.truncation[j]).collect();
        Ok(Self::assemble(Arc::clone(&self.grid), labels, columns, truncation))
    }

    /// `f_t = Σ_j t_j φ_j`.
    pub fn combine(&self, t: &[f64]) -> Result<GridFunction> {
        if t.len() != self.p() {
            return Err(Error::DimensionMismatch {
                expected: self.p(),
                found: t.len(),
                context: "coefficient vector",
            });
        }
        let mut v = vec![0.0; self.grid.n_nodes()];
        for (j, &tj) in t.iter().enumerate() {
            if tj != 0.0 {
                for (vi, ci) in v.iter_mut().zip(self.columns[j].values()) {
                    *vi += tj * ci;
                }
            }
        }
        GridFunction::new(Arc::clone(&self.grid), v)
    }
}

/// `Q(n, x) = e^{−x} Σ_{k<n} x^k/k!`, the regularized upper incomplete gamma for integer `n`.
fn upper_gamma_regularized(n: usize, x: f64) -> f64 {
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..n {
        term *= x / k as f64;
        sum += term;
    }
    (sum.ln() - x).exp()
}

/// Labels `(l, k·b_step)` for `l < p1` and `1 ≤ k ≤ p2`, ordered by `l` then `k`.
pub fn dictionary_labels(p1: usize, p2: usize, b_step: f64) -> Result<Vec<Label>> {
    if p1 < 1 || p2 < 1 {
        return Err(Error::param("p1, p2", "both must be at least 1"));
    }
    if !(b_step > 0.0 && b_step.is_finite()) {
        return Err(Error::param("b_step", format!("must be positive, got {b_step}")));
    }
    Ok((0..p1)
        .flat_map(|l| (1..=p2).map(move |k| Label { l, b: k as f64 * b_step }))
        .collect())
}

/// The `p1·p2` Laguerre-monomial dictionary on `grid`.
pub fn build_dictionary(p1: usize, p2: usize, b_step: f64, grid: &Arc<Grid>) -> Result<Dictionary> {
    Dictionary::from_labels(dictionary_labels(p1, p2, b_step)?, grid)
}

/// Symmetric Gram matrix of a dictionary.
#[derive(Debug, Clone)]
pub struct GramMatrix {
    entries: Mat<f64>,
}

impl GramMatrix {
    /// Validates squareness and symmetry (to 1e-10 relative).
    pub fn new(entries: Mat<f64>) -> Result<Self> {
        let p = entries.nrows();
        if entries.ncols() != p {
            return Err(Error::DimensionMismatch {
                expected: p,
                found: entries.ncols(),
                context: "Gram matrix must be square",
            });
        }
        if p == 0 {
            return Err(Error::Empty("Gram matrix"));
        }
        for i in 0..p {
            for j in 0..i {
                let (a, b) = (entries[(i, j)], entries[(j, i)]);
                if !a.is_finite() || (a - b).abs() > 1e-10 * (1.0 + a.abs()) {
                    return Err(Error::param("gram", format!("not symmetric at ({i}, {j}): {a} vs {b}")));
                }
            }
        }
        Ok(GramMatrix { entries })
    }

    pub fn identity(p: usize) -> Self {
        GramMatrix {
            entries: Mat::from_fn(p, p, |i, j| if i == j { 1.0 } else { 0.0 }),
        }
    }

    pub fn p(&self) -> usize {
        self.entries.nrows()
    }

    pub fn entries(&self) -> MatRef<'_, f64> {
        self.entries.as_ref()
    }

    pub fn get(&self, j: usize, k: usize) -> f64 {
        self.entries[(j, k)]
    }

    /// Principal submatrix on `idx`.
    pub fn submatrix(&self, idx: &[usize]) -> Mat<f64> {
        Mat::from_fn(idx.len(), idx.len(), |a, b| self.entries[(idx[a], idx[b])])
    }
}

/// `Φ_{jk} = ⟨φ_j, φ_k⟩` by grid quadrature.
pub fn gram(d: &Dictionary) -> GramMatrix {
    let w = d.grid.weights();
    let wp = Mat::from_fn(d.matrix.nrows(), d.p(), |i, j| w[i] * d.matrix[(i, j)]);
    let raw = d.matrix.transpose() * &wp;
    let p = d.p();
    let entries = Mat::from_fn(p, p, |i, j| if i == j { raw[(i, i)] } else { 0.5 * (raw[(i, j)] + raw[(j, i)]) });
    GramMatrix { entries }
}

/// Exact `⟨φ_{l1,b1}, φ_{l2,b2}⟩` over `(0, ∞)`, computed in log space.
pub fn gram_closed_form(l1: usize, l2: usize, b1: f64, b2: f64) -> Result<f64> {
    check_label(l1, b1)?;
    check_label(l2, b2)?;
    let ln_r1 = 2.0 * ln_factorial(l1 + l2) - ln_factorial(2 * l1) - ln_factorial(2 * l2);
    let s = (2 * l1 + 2 * l2 + 2) as f64;
    let ln_r2 = s * 2f64.ln() + (2 * l1 + 1) as f64 * b1.ln() + (2 * l2 + 1) as f64 * b2.ln() - s * (b1 + b2).ln();
    Ok((0.5 * (ln_r1 + ln_r2)).exp())
}

/// Upper bound `exp{−(2l_k+1)/2 · (|log(b_j/b_k)| − log 4)}` on `|Φ_{jk}|`, valid for `l_j ≤ l_k`, `b_j ≥ b_k`.
pub fn coherence_bound(lj: usize, lk: usize, bj: f64, bk: f64) -> Result<f64> {
    check_label(lj, bj)?;
    check_label(lk, bk)?;
    if lj > lk || bj < bk {
        return Err(Error::param(
            "orientation",
            format!("need lj <= lk and bj >= bk, got lj = {lj}, lk = {lk}, bj = {bj}, bk = {bk}"),
        ));
    }
    let e = (2 * lk + 1) as f64 / 2.0;
    Ok((-e * ((bj / bk).ln().abs() - 4f64.ln())).exp())
}
