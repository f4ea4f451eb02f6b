//! Fitting one observed data set: path, cross-validated choice and reconstruction.

use crate::baselines::project_q_hat;
use crate::error::{Error, Result};
use crate::estimation::{beta_hat_observational, BetaEstimate};
use crate::grid::{Grid, GridFunction};
use crate::inversion::{weights, WeightModel, WeightVector};
use crate::lasso::{self, LassoPath, SolverOptions, WeightedLassoProblem};

use super::config::ExperimentConfig;
use super::setup::LaplaceSetup;

#[derive(Debug, Clone)]
pub struct DatasetFit {
    pub obs: Grid,
    pub beta: BetaEstimate,
    pub nu: WeightVector,
    pub path: LassoPath,
    /// 0-based path index chosen by cross-validation.
    pub cv_index: usize,
    pub f_hat: GridFunction,
}

/// Observation grid for arbitrary increasing points in `(0, T]`, each weighted `T/n`.
pub fn observation_grid(x: &[f64], t_max: f64) -> Result<Grid> {
    if x.is_empty() {
        return Err(Error::Empty("observations"));
    }
    let w = vec![t_max / x.len() as f64; x.len()];
    Grid::from_parts(0.0, t_max, x.to_vec(), w)
}

/// Runs the lasso path on `(x, y)` and reconstructs `f` at the cross-validated penalty.
pub fn fit_dataset(setup: &LaplaceSetup, cfg: &ExperimentConfig, x: &[f64], y: &[f64], sigma: f64) -> Result<DatasetFit> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            found: y.len(),
            context: "x and y columns",
        });
    }
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(Error::param("sigma", format!("must be non-negative, got {sigma}")));
    }
    let obs = observation_grid(x, setup.key.t_max)?;
    let nu = weights(&setup.inverse, WeightModel::Observational(&obs))?;
    let beta = beta_hat_observational(y, &obs, &setup.inverse)?;
    let prob = WeightedLassoProblem::new(&setup.gram, &beta.beta_hat, &nu, 0.0)?;
    let path = lasso::path(&prob, cfg.alpha_grid_n, SolverOptions::default())?;
    let q_hat = project_q_hat(y, &obs, cfg.laguerre_a, None, sigma, setup.op.range_grid())?;
    let cv_index = setup.cv.select(&path, &q_hat.values, sigma, y.len())?;
    let f_hat = setup.dictionary.combine(&path.solutions[cv_index].t_hat)?;
    Ok(DatasetFit {
        obs,
        beta,
        nu,
        path,
        cv_index,
        f_hat,
    })
}
