//! Experiment configuration read from flat TOML files.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forward::TestFunctionId;

/// Estimators a simulation cell can run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    LassoOpt,
    LassoCv,
    Svd,
    LaguerreGalerkin,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::LassoOpt, Method::LassoCv, Method::Svd, Method::LaguerreGalerkin];

    pub fn name(self) -> &'static str {
        match self {
            Method::LassoOpt => "lasso_opt",
            Method::LassoCv => "lasso_cv",
            Method::Svd => "svd",
            Method::LaguerreGalerkin => "laguerre_galerkin",
        }
    }
}

fn d_t() -> f64 {
    10.0
}
fn d_fine() -> usize {
    2001
}
fn d_p1() -> usize {
    10
}
fn d_p2() -> usize {
    40
}
fn d_bstep() -> f64 {
    0.1
}
fn d_reps() -> usize {
    50
}
fn d_n_alpha() -> usize {
    200
}
fn d_tau() -> f64 {
    1.0
}
fn d_mu() -> f64 {
    3.0
}
fn d_methods() -> Vec<Method> {
    Method::ALL.to_vec()
}
fn d_lag_a() -> f64 {
    0.5
}
fn d_lag_k() -> usize {
    40
}
fn d_svd_tol() -> f64 {
    1e-10
}
fn d_kernel() -> String {
    "exponential".into()
}

/// One simulation cell: test function, noise level, sample size and estimator settings.
///
/// `fine_nodes` counts grid points including both ends of `[0, T]`, so the analysis
/// grids have `fine_nodes − 1` cells.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub test_function: TestFunctionId,
    pub sigma: f64,
    pub n_obs: usize,
    #[serde(rename = "T", default = "d_t")]
    pub t_max: f64,
    #[serde(default = "d_fine")]
    pub fine_nodes: usize,
    #[serde(default = "d_p1")]
    pub p1: usize,
    #[serde(default = "d_p2")]
    pub p2: usize,
    #[serde(default = "d_bstep")]
    pub b_step: f64,
    #[serde(default = "d_reps")]
    pub replicates: usize,
    #[serde(default)]
    pub base_seed: u64,
    #[serde(rename = "alpha_grid_N", default = "d_n_alpha")]
    pub alpha_grid_n: usize,
    #[serde(default = "d_tau")]
    pub tau: f64,
    #[serde(default = "d_mu")]
    pub mu: f64,
    #[serde(default = "d_methods")]
    pub methods: Vec<Method>,
    #[serde(default = "d_lag_a")]
    pub laguerre_a: f64,
    #[serde(default = "d_lag_k")]
    pub laguerre_k_max: usize,
    #[serde(default = "d_svd_tol")]
    pub svd_tol: f64,
    /// `exponential`, or a path to an `x,t,g` kernel table relative to the config file.
    #[serde(default = "d_kernel")]
    pub kernel: String,
}

impl ExperimentConfig {
    /// Default settings for one cell.
    pub fn cell(test_function: TestFunctionId, sigma: f64, n_obs: usize) -> Self {
        ExperimentConfig {
            test_function,
            sigma,
            n_obs,
            t_max: d_t(),
            fine_nodes: d_fine(),
            p1: d_p1(),
            p2: d_p2(),
            b_step: d_bstep(),
            replicates: d_reps(),
            base_seed: 0,
            alpha_grid_n: d_n_alpha(),
            tau: d_tau(),
            mu: d_mu(),
            methods: d_methods(),
            laguerre_a: d_lag_a(),
            laguerre_k_max: d_lag_k(),
            svd_tol: d_svd_tol(),
            kernel: d_kernel(),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let mut cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.methods.sort();
        cfg.methods.dedup();
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut cfg = Self::from_toml(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })?;
        if cfg.kernel != "exponential" {
            let rel = Path::new(&cfg.kernel);
            if rel.is_relative() {
                if let Some(dir) = path.parent() {
                    cfg.kernel = dir.join(rel).to_string_lossy().into_owned();
                }
            }
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |name: &str, why: &str| Err(Error::Config(format!("`{name}` {why}")));
        if self.test_function == TestFunctionId::Custom {
            return bad("test_function", "must be f1, f2 or f3");
        }
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return bad("sigma", "must be non-negative");
        }
        if self.n_obs < 2 {
            return bad("n_obs", "must be at least 2");
        }
        if !(self.t_max > 0.0 && self.t_max.is_finite()) {
            return bad("T", "must be positive");
        }
        if self.fine_nodes < 3 {
            return bad("fine_nodes", "must be at least 3");
        }
        if self.p1 < 1 || self.p2 < 1 {
            return bad("p1/p2", "must be at least 1");
        }
        if !(self.b_step > 0.0 && self.b_step.is_finite()) {
            return bad("b_step", "must be positive");
        }
        if self.replicates < 1 {
            return bad("replicates", "must be at least 1");
        }
        if self.alpha_grid_n < 1 {
            return bad("alpha_grid_N", "must be at least 1");
        }
        if !(self.tau > 0.0) {
            return bad("tau", "must be positive");
        }
        if !(self.mu > 1.0) {
            return bad("mu", "must exceed 1");
        }
        if !(self.laguerre_a > 0.0) {
            return bad("laguerre_a", "must be positive");
        }
        if self.laguerre_k_max < 1 {
            return bad("laguerre_k_max", "must be at least 1");
        }
        if !(self.svd_tol >= 0.0 && self.svd_tol < 1.0) {
            return bad("svd_tol", "must lie in [0, 1)");
        }
        Ok(())
    }

    pub fn has(&self, m: Method) -> bool {
        self.methods.contains(&m)
    }

    /// Analysis cells on `[0, T]`.
    pub fn cells(&self) -> usize {
        self.fine_nodes - 1
    }
}

/// The eighteen cells of the reference table: three functions, σ ∈ {0.25, 0.5, 1}, n ∈ {64, 32}.
pub fn table1_cells() -> Vec<ExperimentConfig> {
    let mut out = Vec::new();
    for f in [TestFunctionId::F1, TestFunctionId::F2, TestFunctionId::F3] {
        for n in [64, 32] {
            for sigma in [0.25, 0.5, 1.0] {
                out.push(ExperimentConfig::cell(f, sigma, n));
            }
        }
    }
    out
}

/// Loads every `*.toml` in a directory, sorted by file name.
pub fn load_dir(dir: &Path) -> Result<Vec<ExperimentConfig>> {
    let mut paths: Vec<_> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "toml"))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(Error::Config(format!("no .toml files in {}", dir.display())));
    }
    paths.iter().map(|p| ExperimentConfig::load(p)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_takes_defaults() {
        let cfg = ExperimentConfig::from_toml("test_function = \"f2\"\nsigma = 0.5\nn_obs = 64\n").unwrap();
        assert_eq!(cfg, ExperimentConfig::cell(TestFunctionId::F2, 0.5, 64));
        assert_eq!(cfg.cells(), 2000);
    }

    #[test]
    fn round_trip_and_rejections() {
        let cfg = ExperimentConfig::cell(TestFunctionId::F3, 1.0, 32);
        assert_eq!(ExperimentConfig::from_toml(&cfg.to_toml()).unwrap(), cfg);
        assert!(ExperimentConfig::from_toml("test_function = \"f2\"\nsigma = 0.5\nn_obs = 64\nbogus = 1\n").is_err());
        assert!(ExperimentConfig::from_toml("test_function = \"f2\"\nsigma = 0.5\nn_obs = 64\nmu = 1.0\n").is_err());
        assert!(ExperimentConfig::from_toml("test_function = \"f9\"\nsigma = 0.5\nn_obs = 64\n").is_err());
    }

    #[test]
    fn eighteen_cells() {
        assert_eq!(table1_cells().len(), 18);
    }
}
