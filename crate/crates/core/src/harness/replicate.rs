//! One simulated data set and every requested estimator on it.

use std::collections::BTreeMap;

use crate::baselines::{oracle_tune, project_q_hat};
use crate::error::Result;
use crate::estimation::beta_hat_observational;
use crate::forward::{generate_observations_with, rng_from_seed};
use crate::grid::GridFunction;
use crate::lasso::{self, SolverOptions, WeightedLassoProblem};

use super::config::{ExperimentConfig, Method};
use super::rms_error;
use super::setup::{CellContext, LaplaceSetup};

/// Outcome of one method on one replicate.
#[derive(Debug, Clone)]
pub struct MethodOutcome {
    pub error: f64,
    /// Path index for the Lasso variants (1-based `k`), cutoff `K` for the baselines.
    pub tuning: usize,
    pub f_hat: Option<GridFunction>,
}

/// Errors of every method on the replicate seeded with `base_seed + index`.
#[derive(Debug, Clone)]
pub struct ReplicateResult {
    pub index: usize,
    pub seed: u64,
    pub outcomes: BTreeMap<Method, std::result::Result<MethodOutcome, String>>,
    /// Whether every point of the Lasso path met the KKT tolerance.
    pub path_converged: bool,
    pub y: Vec<f64>,
}

impl ReplicateResult {
    pub fn error(&self, m: Method) -> Option<f64> {
        self.outcomes.get(&m).and_then(|o| o.as_ref().ok()).map(|o| o.error)
    }
}

/// Runs replicate `index`; keeps the reconstructions when `keep_estimates` is set.
pub fn run_replicate(
    setup: &LaplaceSetup,
    ctx: &CellContext,
    cfg: &ExperimentConfig,
    index: usize,
    keep_estimates: bool,
) -> Result<ReplicateResult> {
    let seed = cfg.base_seed.wrapping_add(index as u64);
    let mut rng = rng_from_seed(seed);
    let f = &ctx.truth.values;
    let y = generate_observations_with(f, &setup.op, cfg.sigma, &ctx.obs, &mut rng)?;
    let keep = |g: GridFunction| keep_estimates.then_some(g);

    let mut outcomes = BTreeMap::new();
    let mut path_converged = true;
    if cfg.has(Method::LassoOpt) || cfg.has(Method::LassoCv) {
        let beta = beta_hat_observational(&y, &ctx.obs, &setup.inverse)?;
        let prob = WeightedLassoProblem::new(&setup.gram, &beta.beta_hat, &ctx.nu, 0.0)?;
        let path = lasso::path(&prob, cfg.alpha_grid_n, SolverOptions::default())?;
        path_converged = path.all_converged();
        let estimates = path
            .solutions
            .iter()
            .map(|s| setup.dictionary.combine(&s.t_hat))
            .collect::<Result<Vec<_>>>()?;
        let errors = estimates.iter().map(|g| rms_error(g, f)).collect::<Result<Vec<_>>>()?;
        if cfg.has(Method::LassoOpt) {
            let k = (0..errors.len()).fold(0, |b, k| if errors[k] < errors[b] { k } else { b });
            outcomes.insert(
                Method::LassoOpt,
                Ok(MethodOutcome {
                    error: errors[k],
                    tuning: k + 1,
                    f_hat: keep(estimates[k].clone()),
                }),
            );
        }
        if cfg.has(Method::LassoCv) {
            let cv = project_q_hat(&y, &ctx.obs, cfg.laguerre_a, None, cfg.sigma, setup.op.range_grid())
                .and_then(|qh| setup.cv.select(&path, &qh.values, cfg.sigma, cfg.n_obs));
            let out = cv.map(|k| MethodOutcome {
                error: errors[k],
                tuning: k + 1,
                f_hat: keep(estimates[k].clone()),
            });
            outcomes.insert(Method::LassoCv, out.map_err(|e| e.to_string()));
        }
    }
    if let Some(svd) = &ctx.svd {
        let out = oracle_tune(|k| svd.estimate(&y, k), f, 1..=svd.rank(), rms_error).and_then(|(k, error)| {
            Ok(MethodOutcome {
                error,
                tuning: k,
                f_hat: if keep_estimates { Some(svd.estimate(&y, k)?.f_hat) } else { None },
            })
        });
        outcomes.insert(Method::Svd, out.map_err(|e| e.to_string()));
    }
    if let Some(lag) = &ctx.laguerre {
        let out = oracle_tune(|k| lag.estimate(&y, k), f, 1..=lag.k_max(), rms_error).and_then(|(k, error)| {
            Ok(MethodOutcome {
                error,
                tuning: k,
                f_hat: if keep_estimates { Some(lag.estimate(&y, k)?.f_hat) } else { None },
            })
        });
        outcomes.insert(Method::LaguerreGalerkin, out.map_err(|e| e.to_string()));
    }
    Ok(ReplicateResult {
        index,
        seed,
        outcomes,
        path_converged,
        y,
    })
}
