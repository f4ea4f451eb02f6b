//! Simulation harness: configs, cached setups, replicates, tables and the mixture study.

pub mod config;
pub mod mixture;
pub mod plot;
pub mod replicate;
pub mod setup;
pub mod solve;
pub mod table;

pub use config::{load_dir, table1_cells, ExperimentConfig, Method};
pub use replicate::{run_replicate, ReplicateResult};
pub use setup::{CellContext, LaplaceSetup, SetupCache};
pub use table::{run_cell, run_table, CellReport, MethodStats};

use crate::error::Result;
use crate::grid::{check_same, GridFunction};

/// Root mean square of `f_hat − f_true` over the grid nodes.
pub fn rms_error(f_hat: &GridFunction, f_true: &GridFunction) -> Result<f64> {
    check_same(f_hat, f_true)?;
    let n = f_hat.values().len() as f64;
    let ss: f64 = f_hat.values().iter().zip(f_true.values()).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok((ss / n).sqrt())
}
