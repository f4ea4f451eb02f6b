//! Shared, expensive state: operator, dictionary, Gram matrix and inverse images.

use std::path::Path;
use std::sync::{Arc, Mutex};

use crate::baselines::{LaguerreBaseline, SvdBaseline};
use crate::dictionary::{build_dictionary, gram, Dictionary, GramMatrix};
use crate::error::Result;
use crate::forward::{laplace_operator, staggered_grids, test_function, LaplaceKernel, TestFunction};
use crate::grid::Grid;
use crate::inversion::{weights, AdjointSvd, InverseImages, WeightModel, WeightVector};
use crate::io::KernelTable;
use crate::lasso::CvCriterion;
use crate::operator::DiscreteOperator;

use super::config::{ExperimentConfig, Method};

/// Fields of a config that determine the shared setup.
#[derive(Debug, Clone, PartialEq)]
pub struct SetupKey {
    pub t_max: f64,
    pub cells: usize,
    pub p1: usize,
    pub p2: usize,
    pub b_step: f64,
    pub svd_tol: f64,
    pub kernel: String,
}

impl SetupKey {
    pub fn of(cfg: &ExperimentConfig) -> Self {
        SetupKey {
            t_max: cfg.t_max,
            cells: cfg.cells(),
            p1: cfg.p1,
            p2: cfg.p2,
            b_step: cfg.b_step,
            svd_tol: cfg.svd_tol,
            kernel: cfg.kernel.clone(),
        }
    }
}

/// Operator on staggered grids plus the dictionary and its inverse images.
#[derive(Debug)]
pub struct LaplaceSetup {
    pub key: SetupKey,
    pub op: DiscreteOperator,
    pub dictionary: Dictionary,
    pub gram: GramMatrix,
    pub inverse: InverseImages,
    pub cv: CvCriterion,
}

impl LaplaceSetup {
    pub fn build(cfg: &ExperimentConfig) -> Result<Self> {
        let key = SetupKey::of(cfg);
        let (domain, range) = staggered_grids(key.t_max, key.cells)?;
        let op = if key.kernel == "exponential" {
            laplace_operator(&LaplaceKernel::exponential(key.t_max)?, domain, range)?
        } else {
            let file = std::fs::File::open(Path::new(&key.kernel))?;
            KernelTable::read(file)?.operator(domain, range)
        };
        let dictionary = build_dictionary(key.p1, key.p2, key.b_step, op.domain_grid())?;
        let gram = gram(&dictionary);
        let inverse = AdjointSvd::new(&op, key.svd_tol)?.invert(&dictionary)?;
        let cv = CvCriterion::new(&op, &dictionary)?;
        Ok(LaplaceSetup {
            key,
            op,
            dictionary,
            gram,
            inverse,
            cv,
        })
    }
}

/// Builds each distinct setup once.
#[derive(Debug, Default)]
pub struct SetupCache {
    entries: Mutex<Vec<Arc<LaplaceSetup>>>,
}

impl SetupCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, cfg: &ExperimentConfig) -> Result<Arc<LaplaceSetup>> {
        let key = SetupKey::of(cfg);
        let mut entries = self.entries.lock().expect("setup cache poisoned");
        if let Some(s) = entries.iter().find(|s| s.key == key) {
            return Ok(Arc::clone(s));
        }
        log::info!("building setup: {} cells, p = {}", key.cells, key.p1 * key.p2);
        let s = Arc::new(LaplaceSetup::build(cfg)?);
        entries.push(Arc::clone(&s));
        Ok(s)
    }
}

/// Per-cell state: observation grid, weights, truth and baseline factorizations.
#[derive(Debug)]
pub struct CellContext {
    pub obs: Grid,
    pub nu: WeightVector,
    pub truth: TestFunction,
    pub svd: Option<SvdBaseline>,
    pub laguerre: Option<LaguerreBaseline>,
}

impl CellContext {
    pub fn new(setup: &LaplaceSetup, cfg: &ExperimentConfig) -> Result<Self> {
        let obs = Grid::right_end(0.0, cfg.t_max, cfg.n_obs)?;
        let nu = weights(&setup.inverse, WeightModel::Observational(&obs))?;
        let truth = test_function(cfg.test_function, setup.op.domain_grid())?;
        let svd = if cfg.has(Method::Svd) {
            Some(SvdBaseline::new(&setup.op, &obs)?)
        } else {
            None
        };
        let laguerre = if cfg.has(Method::LaguerreGalerkin) {
            Some(LaguerreBaseline::new(&setup.op, &obs, cfg.laguerre_a, cfg.laguerre_k_max.min(cfg.n_obs - 1).max(1))?)
        } else {
            None
        };
        Ok(CellContext {
            obs,
            nu,
            truth,
            svd,
            laguerre,
        })
    }
}
