//! Monte Carlo cells and the summary table.

use std::io::Write;

use rayon::prelude::*;

use crate::error::{Error, Result};

use super::config::{ExperimentConfig, Method};
use super::replicate::{run_replicate, ReplicateResult};
use super::setup::{CellContext, SetupCache};

/// Header of the summary CSV.
pub const TABLE_HEADER: [&str; 10] =
    ["test_function", "sigma", "n", "method", "mean", "std", "replicates", "failures", "std_flag", "metric"];

/// Header of the per-replicate CSV.
pub const REPLICATE_HEADER: [&str; 9] =
    ["test_function", "sigma", "n", "replicate", "seed", "method", "error", "tuning", "status"];

/// Mean and spread of one method's error over the successful replicates.
#[derive(Debug, Clone)]
pub struct MethodStats {
    pub method: Method,
    pub mean: f64,
    /// Sample standard deviation (divisor `R − 1`); zero for a single replicate.
    pub std: f64,
    pub replicates: usize,
    pub failures: usize,
    /// Set when the spread exceeds the mean.
    pub std_flag: bool,
}

impl MethodStats {
    fn from_errors(method: Method, errors: &[f64], failures: usize) -> Self {
        let r = errors.len();
        let mean = if r == 0 { f64::NAN } else { errors.iter().sum::<f64>() / r as f64 };
        let std = if r < 2 {
            if r == 0 { f64::NAN } else { 0.0 }
        } else {
            (errors.iter().map(|e| (e - mean) * (e - mean)).sum::<f64>() / (r - 1) as f64).sqrt()
        };
        MethodStats {
            method,
            mean,
            std,
            replicates: r,
            failures,
            std_flag: std > mean,
        }
    }
}

/// A finished cell.
#[derive(Debug, Clone)]
pub struct CellReport {
    pub config: ExperimentConfig,
    pub stats: Vec<MethodStats>,
    pub replicates: Vec<ReplicateResult>,
}

impl CellReport {
    pub fn stats_for(&self, m: Method) -> Option<&MethodStats> {
        self.stats.iter().find(|s| s.method == m)
    }
}

/// Runs every replicate of `cfg` in parallel on the current rayon pool.
pub fn run_cell(cache: &SetupCache, cfg: &ExperimentConfig) -> Result<CellReport> {
    cfg.validate()?;
    let setup = cache.get(cfg)?;
    let ctx = CellContext::new(&setup, cfg)?;
    let replicates = (0..cfg.replicates)
        .into_par_iter()
        .map(|i| run_replicate(&setup, &ctx, cfg, i, false))
        .collect::<Result<Vec<_>>>()?;
    let stats = cfg
        .methods
        .iter()
        .map(|&m| {
            let errors: Vec<f64> = replicates.iter().filter_map(|r| r.error(m)).collect();
            MethodStats::from_errors(m, &errors, replicates.len() - errors.len())
        })
        .collect();
    let unconverged = replicates.iter().filter(|r| !r.path_converged).count();
    if unconverged > 0 {
        log::warn!("{unconverged} replicates had unconverged path points");
    }
    Ok(CellReport {
        config: cfg.clone(),
        stats,
        replicates,
    })
}

/// Runs the cells in order, sharing setups between cells with equal grids and dictionaries.
pub fn run_table(cache: &SetupCache, cfgs: &[ExperimentConfig]) -> Result<Vec<CellReport>> {
    if cfgs.is_empty() {
        return Err(Error::Empty("config list"));
    }
    cfgs.iter()
        .map(|c| {
            log::info!("cell {} sigma={} n={}", c.test_function.name(), c.sigma, c.n_obs);
            run_cell(cache, c)
        })
        .collect()
}

/// Summary rows, one per cell and method.
pub fn write_table_csv<W: Write>(w: W, reports: &[CellReport]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(TABLE_HEADER)?;
    for r in reports {
        let c = &r.config;
        for s in &r.stats {
            out.write_record([
                c.test_function.name().to_string(),
                c.sigma.to_string(),
                c.n_obs.to_string(),
                s.method.name().to_string(),
                format!("{:.6e}", s.mean),
                format!("{:.6e}", s.std),
                s.replicates.to_string(),
                s.failures.to_string(),
                s.std_flag.to_string(),
                "rms".to_string(),
            ])?;
        }
    }
    out.flush()?;
    Ok(())
}

/// Per-replicate rows, one per replicate and method.
pub fn write_replicates_csv<W: Write>(w: W, reports: &[CellReport]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(REPLICATE_HEADER)?;
    for r in reports {
        let c = &r.config;
        for rep in &r.replicates {
            for (m, o) in &rep.outcomes {
                let (error, tuning, status) = match o {
                    Ok(o) => (format!("{:.6e}", o.error), o.tuning.to_string(), "ok".to_string()),
                    Err(e) => (String::new(), String::new(), format!("failed: {e}")),
                };
                out.write_record([
                    c.test_function.name().to_string(),
                    c.sigma.to_string(),
                    c.n_obs.to_string(),
                    rep.index.to_string(),
                    rep.seed.to_string(),
                    m.name().to_string(),
                    error,
                    tuning,
                    status,
                ])?;
            }
        }
    }
    out.flush()?;
    Ok(())
}
