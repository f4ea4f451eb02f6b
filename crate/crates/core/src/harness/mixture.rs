//! Density deconvolution study: a mixture sample, the lasso at the theoretical penalty, and the 𝒩₀ gate.

use serde::{Deserialize, Serialize};

use crate::dictionary::{dictionary_labels, gram, Dictionary, GramMatrix};
use crate::error::{Error, Result};
use crate::estimation::{beta_hat_mixture, theoretical_alpha, PenaltyModel};
use crate::forward::{rng_from_seed, sample_mixture_with, MixtureKernel};
use crate::grid::GridFunction;
use crate::inversion::{weights, AdjointSvd, InverseImages, WeightModel, WeightVector};
use crate::lasso::{self, SolverOptions, WeightedLassoProblem};

/// One term `weight·φ_{l,b}` of the true mixing density before normalization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Component {
    pub l: usize,
    pub b: f64,
    pub weight: f64,
}

/// ν choice for the mixture model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MixtureWeights {
    Sup,
    VarBound,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MixtureConfig {
    pub n_values: Vec<usize>,
    pub seeds: usize,
    pub base_seed: u64,
    pub p1: usize,
    pub p2: usize,
    pub b_step: f64,
    pub components: Vec<Component>,
    pub tau: f64,
    pub mu: f64,
    pub weights: MixtureWeights,
    pub svd_tol: f64,
}

impl Default for MixtureConfig {
    fn default() -> Self {
        MixtureConfig {
            n_values: vec![500, 5000],
            seeds: 50,
            base_seed: 1000,
            p1: 2,
            p2: 10,
            b_step: 0.4,
            components: vec![
                Component { l: 0, b: 0.8, weight: 0.5 },
                Component { l: 1, b: 2.0, weight: 0.5 },
            ],
            tau: 1.0,
            mu: 3.0,
            weights: MixtureWeights::Sup,
            svd_tol: 1e-10,
        }
    }
}

/// `𝒩₀ = (16/9)(τ+1) log p`.
pub fn n0_threshold(tau: f64, p: usize) -> f64 {
    16.0 / 9.0 * (tau + 1.0) * (p as f64).ln()
}

/// Rejects sample sizes below `𝒩₀`.
pub fn mixture_gate(n: usize, tau: f64, p: usize) -> Result<()> {
    let required = n0_threshold(tau, p);
    if (n as f64) < required {
        return Err(Error::SampleSizeGate { n, required });
    }
    Ok(())
}

/// Kernel, dictionary on the kernel's `x` grid, inverse images on its `y` grid, and the truth.
#[derive(Debug)]
pub struct MixtureSetup {
    pub config: MixtureConfig,
    pub kernel: MixtureKernel,
    pub dictionary: Dictionary,
    pub gram: GramMatrix,
    pub inverse: InverseImages,
    pub nu: WeightVector,
    /// True mixing density, integrating to one.
    pub f_true: GridFunction,
}

impl MixtureSetup {
    pub fn new(config: MixtureConfig, kernel: MixtureKernel) -> Result<Self> {
        if config.components.is_empty() {
            return Err(Error::Empty("mixture components"));
        }
        let labels = dictionary_labels(config.p1, config.p2, config.b_step)?;
        let dictionary = Dictionary::from_labels(labels, kernel.x_grid())?;
        let op = kernel.operator();
        let inverse = AdjointSvd::new(&op, config.svd_tol)?.invert(&dictionary)?;
        let nu = match config.weights {
            MixtureWeights::Sup => weights(&inverse, WeightModel::MixtureSup)?,
            MixtureWeights::VarBound => weights(&inverse, WeightModel::MixtureVarBound(&kernel))?,
        };
        let mut theta = vec![0.0; dictionary.p()];
        for c in &config.components {
            let j = dictionary
                .index_of(c.l, c.b)
                .ok_or_else(|| Error::param("components", format!("({}, {}) is not in the dictionary", c.l, c.b)))?;
            theta[j] += c.weight;
        }
        let f = dictionary.combine(&theta)?;
        let mass = f.grid().integrate(f.values());
        if !(mass > 0.0) {
            return Err(Error::InvalidDensity(format!("mixture integrates to {mass}")));
        }
        let f_true = f.scaled(1.0 / mass);
        Ok(MixtureSetup {
            gram: gram(&dictionary),
            config,
            kernel,
            dictionary,
            inverse,
            nu,
            f_true,
        })
    }

    /// `L²` error of the lasso estimate at the theoretical penalty from `samples`.
    pub fn estimate_error(&self, samples: &[f64]) -> Result<f64> {
        let n = samples.len();
        mixture_gate(n, self.config.tau, self.dictionary.p())?;
        let beta = beta_hat_mixture(samples, &self.inverse)?;
        let pen = theoretical_alpha(PenaltyModel::Mixture { n }, self.config.tau, self.config.mu, self.dictionary.p())?;
        let prob = WeightedLassoProblem::new(&self.gram, &beta.beta_hat, &self.nu, pen.alpha)?;
        let sol = lasso::solve(&prob, SolverOptions::default(), None).into_result()?;
        Ok(self.dictionary.combine(&sol.t_hat)?.sub(&self.f_true)?.norm2())
    }
}

/// Errors per seed (rows) and sample size (columns); each seed draws its samples in `n_values` order.
#[derive(Debug, Clone)]
pub struct MixtureReport {
    pub n_values: Vec<usize>,
    pub errors: Vec<Vec<f64>>,
}

impl MixtureReport {
    /// Seeds whose error strictly decreases along `n_values`.
    pub fn decreasing(&self) -> usize {
        self.errors.iter().filter(|e| e.windows(2).all(|w| w[1] < w[0])).count()
    }
}

/// Runs every seed; sample sizes below `𝒩₀` are rejected before any inversion.
pub fn run_mixture_study(config: MixtureConfig, kernel: MixtureKernel) -> Result<MixtureReport> {
    let p = config.p1 * config.p2;
    for &n in &config.n_values {
        mixture_gate(n, config.tau, p)?;
    }
    let setup = MixtureSetup::new(config, kernel)?;
    let cfg = &setup.config;
    let errors = (0..cfg.seeds)
        .map(|s| {
            let mut rng = rng_from_seed(cfg.base_seed.wrapping_add(s as u64));
            cfg.n_values
                .iter()
                .map(|&n| setup.estimate_error(&sample_mixture_with(&setup.f_true, &setup.kernel, n, &mut rng)?))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(MixtureReport {
        n_values: cfg.n_values.clone(),
        errors,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gate_threshold() {
        assert!((n0_threshold(1.0, 400) - 21.30).abs() < 5e-3);
        assert!(matches!(mixture_gate(21, 1.0, 400), Err(Error::SampleSizeGate { n: 21, .. })));
        assert!(mixture_gate(22, 1.0, 400).is_ok());
    }

    #[test]
    fn gate_fires_before_any_work() {
        let kernel = MixtureKernel::exponential_demo().unwrap();
        let cfg = MixtureConfig {
            n_values: vec![5],
            ..MixtureConfig::default()
        };
        assert!(matches!(run_mixture_study(cfg, kernel), Err(Error::SampleSizeGate { .. })));
    }
}
