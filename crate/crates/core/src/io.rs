//! CSV import and export for dictionaries, inverse images, coefficients, paths and Gram matrices.

use std::io::{Read, Write};
use std::sync::Arc;

use faer::Mat;

use crate::dictionary::{Dictionary, GramMatrix, Label};
use crate::error::{Error, Result};
use crate::grid::{Grid, GridFunction};
use crate::inversion::{InverseImages, InversionMethod, WeightVector};
use crate::lasso::LassoPath;
use crate::operator::DiscreteOperator;

fn label_header(lb: &Label) -> String {
    format!("{},{}", lb.l, lb.b)
}

fn parse_label(s: &str) -> Result<Label> {
    let (l, b) = s
        .split_once(',')
        .ok_or_else(|| Error::Csv { path: None, message: format!("label `{s}` is not of the form `l,b`") })?;
    let l = l.trim().parse().map_err(|_| Error::Csv { path: None, message: format!("bad degree in `{s}`") })?;
    let b = b.trim().parse().map_err(|_| Error::Csv { path: None, message: format!("bad rate in `{s}`") })?;
    Ok(Label { l, b })
}

fn num(s: &str) -> Result<f64> {
    s.trim()
        .parse()
        .map_err(|_| Error::Csv { path: None, message: format!("`{s}` is not a number") })
}

fn write_columns<W: Write>(w: W, x: &Grid, labels: &[Label], cols: &[&[f64]]) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    let mut header = vec!["x".to_string(), "weight".to_string()];
    header.extend(labels.iter().map(label_header));
    wr.write_record(&header)?;
    for i in 0..x.n_nodes() {
        let mut row = vec![x.nodes()[i].to_string(), x.weights()[i].to_string()];
        row.extend(cols.iter().map(|c| c[i].to_string()));
        wr.write_record(&row)?;
    }
    wr.flush()?;
    Ok(())
}

/// Grid, labels and column values from a `x,weight,"l,b",…` table.
fn read_columns<R: Read>(r: R) -> Result<(Grid, Vec<Label>, Vec<Vec<f64>>)> {
    let mut rd = csv::Reader::from_reader(r);
    let header = rd.headers()?.clone();
    if header.len() < 3 || &header[0] != "x" || &header[1] != "weight" {
        return Err(Error::Csv { path: None, message: "expected header `x,weight,<l,b>...`".into() });
    }
    let labels = header.iter().skip(2).map(parse_label).collect::<Result<Vec<_>>>()?;
    let (mut x, mut w) = (Vec::new(), Vec::new());
    let mut cols = vec![Vec::new(); labels.len()];
    for rec in rd.records() {
        let rec = rec?;
        x.push(num(&rec[0])?);
        w.push(num(&rec[1])?);
        for (j, c) in cols.iter_mut().enumerate() {
            c.push(num(&rec[j + 2])?);
        }
    }
    if x.is_empty() {
        return Err(Error::Empty("csv rows"));
    }
    Ok((stored_grid(x, w)?, labels, cols))
}

fn round12(v: f64) -> f64 {
    if v == 0.0 {
        return 0.0;
    }
    let scale = 10f64.powi(11 - v.abs().log10().floor() as i32);
    (v * scale).round() / scale
}

/// Significant decimal digits in the shortest representation of `v`.
fn digits(v: f64) -> usize {
    let s = format!("{:e}", v.abs());
    let mantissa = s.split('e').next().unwrap_or("");
    mantissa.chars().filter(char::is_ascii_digit).count()
}

/// Rebuilds a stored grid. Grids from the standard constructors come back exactly.
/// Midpoint and right-end grids share nodes and weights on intervals shifted by half
/// a cell, so the candidate with the shortest endpoints wins. Anything else keeps
/// its nodes and weights with the interval reaching half a weight beyond the outer nodes.
fn stored_grid(x: Vec<f64>, w: Vec<f64>) -> Result<Grid> {
    let n = x.len();
    let (x0, xn, w0, wn) = (x[0], x[n - 1], w[0], w[n - 1]);
    let close = |g: &Grid| {
        let tol = 1e-12 * (1.0 + xn.abs());
        g.n_nodes() == n
            && g.nodes().iter().zip(&x).all(|(p, q)| (p - q).abs() <= tol)
            && g.weights().iter().zip(&w).all(|(p, q)| (p - q).abs() <= tol)
    };
    let candidates = [
        Grid::midpoint(round12(x0 - 0.5 * w0), round12(xn + 0.5 * wn), n),
        Grid::right_end(round12(x0 - w0), round12(xn), n),
        Grid::uniform(round12(x0), round12(xn), n),
        Grid::simpson(round12(x0), round12(xn), n),
    ];
    if let Some(g) = candidates
        .into_iter()
        .flatten()
        .filter(|g| close(g))
        .min_by_key(|g| digits(g.a()) + digits(g.b()))
    {
        return Ok(g);
    }
    Grid::from_parts(x0 - 0.5 * w0, xn + 0.5 * wn, x, w)
}

/// Dictionary columns, one per `"l,b"` header, with the node and weight columns first.
pub fn write_dictionary<W: Write>(w: W, d: &Dictionary) -> Result<()> {
    let cols: Vec<&[f64]> = d.columns().iter().map(GridFunction::values).collect();
    write_columns(w, d.grid(), d.labels(), &cols)
}

/// Reads back [`write_dictionary`] output; columns are renormalized on the stored weights.
pub fn read_dictionary<R: Read>(r: R) -> Result<Dictionary> {
    let (grid, labels, cols) = read_columns(r)?;
    let grid = Arc::new(grid);
    let cols = cols
        .into_iter()
        .map(|c| GridFunction::new(Arc::clone(&grid), c))
        .collect::<Result<Vec<_>>>()?;
    Dictionary::from_columns(labels, cols)
}

/// Inverse images as a matrix, one column per dictionary label.
pub fn write_inverse_images<W: Write>(w: W, inv: &InverseImages, labels: &[Label]) -> Result<()> {
    if labels.len() != inv.p() {
        return Err(Error::DimensionMismatch { expected: inv.p(), found: labels.len(), context: "labels" });
    }
    let cols: Vec<&[f64]> = inv.psi().iter().map(GridFunction::values).collect();
    write_columns(w, inv.grid(), labels, &cols)
}

pub fn read_inverse_images<R: Read>(r: R) -> Result<(Vec<Label>, InverseImages)> {
    let (grid, labels, cols) = read_columns(r)?;
    let grid = Arc::new(grid);
    let psi = cols
        .into_iter()
        .map(|c| GridFunction::new(Arc::clone(&grid), c))
        .collect::<Result<Vec<_>>>()?;
    let n = psi.len();
    Ok((labels, InverseImages::new(psi, vec![f64::NAN; n], InversionMethod::Exact)?))
}

/// `j,l,b,residual,nu` per column.
pub fn write_residual_report<W: Write>(w: W, inv: &InverseImages, labels: &[Label], nu: &WeightVector) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["j", "l", "b", "residual", "nu"])?;
    for j in 0..inv.p() {
        wr.write_record([
            j.to_string(),
            labels[j].l.to_string(),
            labels[j].b.to_string(),
            inv.residuals()[j].to_string(),
            nu.nu[j].to_string(),
        ])?;
    }
    wr.flush()?;
    Ok(())
}

/// `j,l,b,beta_hat,nu` per column.
pub fn write_beta<W: Write>(w: W, labels: &[Label], beta_hat: &[f64], nu: &[f64]) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["j", "l", "b", "beta_hat", "nu"])?;
    for j in 0..labels.len() {
        wr.write_record([
            j.to_string(),
            labels[j].l.to_string(),
            labels[j].b.to_string(),
            beta_hat[j].to_string(),
            nu[j].to_string(),
        ])?;
    }
    wr.flush()?;
    Ok(())
}

/// Returns `(labels, beta_hat, nu)`.
pub fn read_beta<R: Read>(r: R) -> Result<(Vec<Label>, Vec<f64>, Vec<f64>)> {
    let mut rd = csv::Reader::from_reader(r);
    let (mut labels, mut beta, mut nu) = (Vec::new(), Vec::new(), Vec::new());
    for rec in rd.records() {
        let rec = rec?;
        let l = rec[1].trim().parse().map_err(|_| Error::Csv { path: None, message: format!("bad degree `{}`", &rec[1]) })?;
        labels.push(Label { l, b: num(&rec[2])? });
        beta.push(num(&rec[3])?);
        nu.push(num(&rec[4])?);
    }
    Ok((labels, beta, nu))
}

/// `k,alpha,p_hat,objective,kkt_residual,converged,error`; the error column is empty without a truth.
pub fn write_path<W: Write>(w: W, path: &LassoPath, errors: Option<&[f64]>) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["k", "alpha", "p_hat", "objective", "kkt_residual", "converged", "error"])?;
    for (k, s) in path.solutions.iter().enumerate() {
        wr.write_record([
            (k + 1).to_string(),
            s.alpha.to_string(),
            s.support_size().to_string(),
            s.objective_value.to_string(),
            s.kkt_residual.to_string(),
            s.converged.to_string(),
            errors.map_or(String::new(), |e| e[k].to_string()),
        ])?;
    }
    wr.flush()?;
    Ok(())
}

/// Headerless square matrix.
pub fn write_gram<W: Write>(w: W, g: &GramMatrix) -> Result<()> {
    let mut wr = csv::WriterBuilder::new().has_headers(false).from_writer(w);
    for i in 0..g.p() {
        wr.write_record((0..g.p()).map(|j| g.get(i, j).to_string()))?;
    }
    wr.flush()?;
    Ok(())
}

pub fn read_gram<R: Read>(r: R) -> Result<GramMatrix> {
    let mut rd = csv::ReaderBuilder::new().has_headers(false).from_reader(r);
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for rec in rd.records() {
        rows.push(rec?.iter().map(num).collect::<Result<Vec<_>>>()?);
    }
    let p = rows.len();
    if let Some(bad) = rows.iter().find(|r| r.len() != p) {
        return Err(Error::DimensionMismatch { expected: p, found: bad.len(), context: "Gram CSV must be square" });
    }
    GramMatrix::new(Mat::from_fn(p, p, |i, j| rows[i][j]))
}

/// Two-column `x,y` observations.
pub fn read_xy<R: Read>(r: R) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut rd = csv::Reader::from_reader(r);
    let header = rd.headers()?.clone();
    let ix = header.iter().position(|h| h.trim() == "x");
    let iy = header.iter().position(|h| h.trim() == "y");
    let (Some(ix), Some(iy)) = (ix, iy) else {
        return Err(Error::Csv { path: None, message: "expected columns `x` and `y`".into() });
    };
    let (mut x, mut y) = (Vec::new(), Vec::new());
    for rec in rd.records() {
        let rec = rec?;
        x.push(num(&rec[ix])?);
        y.push(num(&rec[iy])?);
    }
    Ok((x, y))
}

/// Named columns of equal length, written side by side.
pub fn write_table<W: Write>(w: W, header: &[&str], cols: &[&[f64]]) -> Result<()> {
    let n = cols.first().map_or(0, |c| c.len());
    if header.len() != cols.len() || cols.iter().any(|c| c.len() != n) {
        return Err(Error::DimensionMismatch { expected: header.len(), found: cols.len(), context: "table columns" });
    }
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(header)?;
    for i in 0..n {
        wr.write_record(cols.iter().map(|c| c[i].to_string()))?;
    }
    wr.flush()?;
    Ok(())
}

/// Kernel `g(x, t)` from `x,t,g` rows covering a tensor grid.
#[derive(Debug, Clone)]
pub struct KernelTable {
    x: Vec<f64>,
    t: Vec<f64>,
    g: Mat<f64>,
}

impl KernelTable {
    pub fn read<R: Read>(r: R) -> Result<Self> {
        let mut rd = csv::Reader::from_reader(r);
        let mut rows = Vec::new();
        for rec in rd.records() {
            let rec = rec?;
            rows.push((num(&rec[0])?, num(&rec[1])?, num(&rec[2])?));
        }
        let uniq = |mut v: Vec<f64>| {
            v.sort_by(f64::total_cmp);
            v.dedup();
            v
        };
        let x = uniq(rows.iter().map(|r| r.0).collect());
        let t = uniq(rows.iter().map(|r| r.1).collect());
        if x.is_empty() || t.is_empty() {
            return Err(Error::Empty("kernel table"));
        }
        let mut g = Mat::<f64>::from_fn(x.len(), t.len(), |_, _| f64::NAN);
        for (xi, ti, gi) in rows {
            let i = x.partition_point(|&v| v < xi);
            let k = t.partition_point(|&v| v < ti);
            g[(i, k)] = gi;
        }
        if (0..x.len()).any(|i| (0..t.len()).any(|k| g[(i, k)].is_nan())) {
            return Err(Error::Csv { path: None, message: "kernel table does not cover a full x-by-t grid".into() });
        }
        Ok(KernelTable { x, t, g })
    }

    /// Bilinear interpolation, constant outside the table.
    pub fn eval(&self, x: f64, t: f64) -> f64 {
        let (i0, i1, s) = crate::operator::bracket(&self.x, x);
        let (k0, k1, r) = crate::operator::bracket(&self.t, t);
        let a = self.g[(i0, k0)] + r * (self.g[(i0, k1)] - self.g[(i0, k0)]);
        let b = self.g[(i1, k0)] + r * (self.g[(i1, k1)] - self.g[(i1, k0)]);
        a + s * (b - a)
    }

    /// Operator with kernel values interpolated onto the given grids.
    pub fn operator(&self, domain: Arc<Grid>, range: Arc<Grid>) -> DiscreteOperator {
        DiscreteOperator::from_kernel(domain, range, |x, t| self.eval(x, t))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dictionary::{build_dictionary, gram};

    #[test]
    fn dictionary_round_trip() {
        let g = Arc::new(Grid::midpoint(0.0, 10.0, 50).unwrap());
        let d = build_dictionary(2, 3, 0.5, &g).unwrap();
        let mut buf = Vec::new();
        write_dictionary(&mut buf, &d).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("x,weight,\"0,0.5\""));
        let back = read_dictionary(&buf[..]).unwrap();
        assert_eq!(back.labels(), d.labels());
        for j in 0..d.p() {
            for (a, b) in back.columns()[j].values().iter().zip(d.columns()[j].values()) {
                assert!((a - b).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn stored_grids_come_back_equal() {
        let grids = [
            Grid::midpoint(0.0, 10.0, 2000).unwrap(),
            Grid::right_end(0.0, 10.0, 2000).unwrap(),
            Grid::uniform(-1.5, 60.0, 12001).unwrap(),
            Grid::simpson(0.0, 100.0, 10001).unwrap(),
        ];
        for g in grids {
            let g = Arc::new(g);
            let d = build_dictionary(1, 1, 1.0, &g).unwrap();
            let mut buf = Vec::new();
            write_dictionary(&mut buf, &d).unwrap();
            let back = read_dictionary(&buf[..]).unwrap();
            assert_eq!(**back.grid(), *g);
        }
        let odd = stored_grid(vec![0.0, 1.0, 3.0], vec![0.5, 1.5, 1.0]).unwrap();
        assert_eq!((odd.a(), odd.b()), (-0.25, 3.5));
    }

    #[test]
    fn gram_round_trip() {
        let g = Arc::new(Grid::midpoint(0.0, 10.0, 50).unwrap());
        let phi = gram(&build_dictionary(2, 2, 0.5, &g).unwrap());
        let mut buf = Vec::new();
        write_gram(&mut buf, &phi).unwrap();
        let back = read_gram(&buf[..]).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                assert_eq!(back.get(i, j), phi.get(i, j));
            }
        }
        assert!(read_gram("1,0\n0\n".as_bytes()).is_err());
    }

    #[test]
    fn beta_round_trip() {
        let labels = vec![Label { l: 0, b: 0.1 }, Label { l: 3, b: 2.5 }];
        let mut buf = Vec::new();
        write_beta(&mut buf, &labels, &[0.5, -1.25], &[1.0, 3.0]).unwrap();
        let (l, b, n) = read_beta(&buf[..]).unwrap();
        assert_eq!((l, b, n), (labels, vec![0.5, -1.25], vec![1.0, 3.0]));
    }

    #[test]
    fn xy_reader() {
        let (x, y) = read_xy("x,y\n0.5,1\n1.0,2\n".as_bytes()).unwrap();
        assert_eq!((x, y), (vec![0.5, 1.0], vec![1.0, 2.0]));
        assert!(read_xy("a,b\n1,2\n".as_bytes()).is_err());
    }

    #[test]
    fn kernel_table_bilinear() {
        let text = "x,t,g\n0,0,0\n0,1,1\n1,0,2\n1,1,3\n";
        let k = KernelTable::read(text.as_bytes()).unwrap();
        assert!((k.eval(0.5, 0.5) - 1.5).abs() < 1e-15);
        assert!(KernelTable::read("x,t,g\n0,0,1\n1,1,1\n".as_bytes()).is_err());
    }
}
