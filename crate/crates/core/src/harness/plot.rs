//! Flat CSV files for external plotting of one replicate.

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use crate::error::Result;
use crate::io::write_table;

use super::config::ExperimentConfig;
use super::replicate::run_replicate;
use super::setup::{CellContext, LaplaceSetup};

/// Paths written by [`emit_plot_data`].
#[derive(Debug, Clone)]
pub struct PlotFiles {
    /// `x, f_true, <method>…` on the domain grid.
    pub estimates: PathBuf,
    /// `x, q_true` on the range grid.
    pub q: PathBuf,
    /// `x, y` at the observation points.
    pub y: PathBuf,
}

/// Reruns replicate `index` and writes truth, data and every requested estimate into `dir`.
///
/// Methods that failed on this replicate get a column of NaN.
pub fn emit_plot_data(
    setup: &LaplaceSetup,
    ctx: &CellContext,
    cfg: &ExperimentConfig,
    index: usize,
    dir: &Path,
) -> Result<PlotFiles> {
    std::fs::create_dir_all(dir)?;
    let rep = run_replicate(setup, ctx, cfg, index, true)?;
    let stem = format!("{}_sigma{}_n{}_rep{}", cfg.test_function.name(), cfg.sigma, cfg.n_obs, index);
    let f = &ctx.truth.values;
    let nan = vec![f64::NAN; f.values().len()];

    let mut header = vec!["x", "f_true"];
    let mut cols: Vec<&[f64]> = vec![f.grid().nodes(), f.values()];
    for m in &cfg.methods {
        header.push(m.name());
        let col = match rep.outcomes.get(m) {
            Some(Ok(o)) => o.f_hat.as_ref().map_or(&nan[..], |g| g.values()),
            _ => &nan[..],
        };
        cols.push(col);
    }
    let files = PlotFiles {
        estimates: dir.join(format!("{stem}_estimates.csv")),
        q: dir.join(format!("{stem}_q.csv")),
        y: dir.join(format!("{stem}_y.csv")),
    };
    write_table(BufWriter::new(File::create(&files.estimates)?), &header, &cols)?;
    let q = setup.op.apply(f)?;
    write_table(BufWriter::new(File::create(&files.q)?), &["x", "q_true"], &[q.grid().nodes(), q.values()])?;
    write_table(BufWriter::new(File::create(&files.y)?), &["x", "y"], &[ctx.obs.nodes(), &rep.y])?;
    Ok(files)
}
