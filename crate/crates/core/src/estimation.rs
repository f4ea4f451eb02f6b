//! Coefficient estimates `β̂_j` under the three observation models, and theoretical penalties.

use crate::error::{Error, Result};
use crate::grid::{Grid, GridFunction};
use crate::inversion::InverseImages;
use crate::linalg;

/// Observation model behind an estimate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ObservationModel {
    WhiteNoise,
    Observational,
    Mixture,
}

/// Estimated inner products `β̂_j ≈ ⟨f, φ_j⟩`.
#[derive(Debug, Clone, PartialEq)]
pub struct BetaEstimate {
    pub beta_hat: Vec<f64>,
    pub model: ObservationModel,
    /// Noise scale when it is known from the data alone (`1/n` for mixtures).
    pub noise_scale: Option<f64>,
    /// Mixture samples moved onto the edge of the truncated domain.
    pub clamped: usize,
}

/// `β̂_j = ⟨y, ψ_j⟩` for data observed on the range grid.
pub fn beta_hat_white_noise(y_fine: &GridFunction, inv: &InverseImages) -> Result<BetaEstimate> {
    if !y_fine.grid().same_as(inv.grid()) {
        return Err(Error::GridMismatch("data must live on the inverse images' grid".into()));
    }
    let wy: Vec<f64> = y_fine
        .values()
        .iter()
        .zip(y_fine.grid().weights())
        .map(|(v, w)| v * w)
        .collect();
    Ok(BetaEstimate {
        beta_hat: linalg::mat_t_vec(inv.matrix(), &wy),
        model: ObservationModel::WhiteNoise,
        noise_scale: None,
        clamped: 0,
    })
}

/// `β̂_j = Σᵢ yᵢ ψ_j(xᵢ) Δxᵢ`, with `ψ_j` interpolated linearly at the observation nodes.
pub fn beta_hat_observational(y: &[f64], obs_grid: &Grid, inv: &InverseImages) -> Result<BetaEstimate> {
    if y.len() != obs_grid.n_nodes() {
        return Err(Error::DimensionMismatch {
            expected: obs_grid.n_nodes(),
            found: y.len(),
            context: "observations vs observation grid",
        });
    }
    let g = inv.grid();
    let (lo, hi) = (g.a(), g.b());
    if let Some(x) = obs_grid.nodes().iter().find(|&&x| x < lo - 1e-12 || x > hi + 1e-12) {
        return Err(Error::GridMismatch(format!(
            "observation node {x} lies outside the inverse-image domain [{lo}, {hi}]"
        )));
    }
    let vals = inv.values_at(obs_grid.nodes());
    let wy: Vec<f64> = y.iter().zip(obs_grid.weights()).map(|(v, w)| v * w).collect();
    Ok(BetaEstimate {
        beta_hat: linalg::mat_t_vec(vals.as_ref(), &wy),
        model: ObservationModel::Observational,
        noise_scale: None,
        clamped: 0,
    })
}

/// `β̂_j = n⁻¹ Σᵢ ψ_j(Yᵢ)`; samples outside the grid interval are clamped to its edge.
pub fn beta_hat_mixture(samples: &[f64], inv: &InverseImages) -> Result<BetaEstimate> {
    if samples.is_empty() {
        return Err(Error::Empty("mixture sample"));
    }
    let g = inv.grid();
    let (lo, hi) = (g.a(), g.b());
    let mut clamped = 0;
    let ys: Vec<f64> = samples
        .iter()
        .map(|&y| {
            if y < lo || y > hi {
                clamped += 1;
            }
            y.clamp(lo, hi)
        })
        .collect();
    if clamped > 0 {
        log::warn!("{clamped} mixture samples clamped to [{lo}, {hi}]");
    }
    let vals = inv.values_at(&ys);
    let n = samples.len() as f64;
    let beta_hat = (0..inv.p()).map(|j| vals.col_as_slice(j).iter().sum::<f64>() / n).collect();
    Ok(BetaEstimate {
        beta_hat,
        model: ObservationModel::Mixture,
        noise_scale: Some(1.0 / n),
        clamped,
    })
}

/// Model parameters entering the theoretical penalty.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PenaltyModel {
    /// Noise level `ε` of the white-noise model.
    WhiteNoise { eps: f64 },
    /// Noise `σ`, sample size `n`, spacing factor `ϑ ≥ 1`.
    Observational { sigma: f64, n: usize, spacing_factor: f64 },
    /// Sample size `n` of a mixture sample.
    Mixture { n: usize },
}

/// Penalty levels `α₀` and `α = α₀(μ+1)/(μ−1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PenaltyConfig {
    pub tau: f64,
    pub mu: f64,
    pub model: ObservationModel,
    pub spacing_factor: f64,
    pub alpha0: f64,
    pub alpha: f64,
    /// Concentration constant `K₀`, when it has a closed form.
    pub k0: Option<f64>,
}

/// Theoretical penalty for `p` dictionary elements.
pub fn theoretical_alpha(model: PenaltyModel, tau: f64, mu: f64, p: usize) -> Result<PenaltyConfig> {
    if !(mu > 1.0 && mu.is_finite()) {
        return Err(Error::param("mu", format!("must exceed 1, got {mu}")));
    }
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(Error::param("tau", format!("must be positive, got {tau}")));
    }
    if p < 2 {
        return Err(Error::param("p", "need at least two dictionary elements"));
    }
    let lp = (p as f64).ln();
    let (kind, theta, alpha0, k0) = match model {
        PenaltyModel::WhiteNoise { eps } => {
            if !(eps > 0.0 && eps.is_finite()) {
                return Err(Error::param("eps", format!("must be positive, got {eps}")));
            }
            (ObservationModel::WhiteNoise, 1.0, (2.0 * eps * (tau + 1.0) * lp).sqrt(), Some(2.0))
        }
        PenaltyModel::Observational { sigma, n, spacing_factor } => {
            if !(sigma > 0.0 && sigma.is_finite()) {
                return Err(Error::param("sigma", format!("must be positive, got {sigma}")));
            }
            if n == 0 {
                return Err(Error::param("n", "must be positive"));
            }
            if !(spacing_factor >= 1.0 && spacing_factor.is_finite()) {
                return Err(Error::param("spacing_factor", format!("must be at least 1, got {spacing_factor}")));
            }
            let a0 = 2.0 * spacing_factor * sigma / (n as f64).sqrt() * (2.0 * (tau + 1.0) * lp).sqrt();
            (ObservationModel::Observational, spacing_factor, a0, Some(8.0 * spacing_factor * spacing_factor))
        }
        PenaltyModel::Mixture { n } => {
            if n == 0 {
                return Err(Error::param("n", "must be positive"));
            }
            let a0 = 2.0 / (n as f64).sqrt() * ((tau + 1.0) * lp).sqrt();
            (ObservationModel::Mixture, 1.0, a0, None)
        }
    };
    Ok(PenaltyConfig {
        tau,
        mu,
        model: kind,
        spacing_factor: theta,
        alpha0,
        alpha: alpha0 * (mu + 1.0) / (mu - 1.0),
        k0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::inversion::InversionMethod;
    use std::sync::Arc;

    fn const_images(c: f64) -> InverseImages {
        let g = Arc::new(Grid::uniform(0.0, 10.0, 101).unwrap());
        InverseImages::new(vec![g.sample(|_| c)], vec![0.0], InversionMethod::Exact).unwrap()
    }

    #[test]
    fn zero_data_gives_zero_beta() {
        let inv = const_images(2.0);
        let y = GridFunction::zeros(inv.grid().clone());
        assert_eq!(beta_hat_white_noise(&y, &inv).unwrap().beta_hat, vec![0.0]);
        let obs = Grid::right_end(0.0, 10.0, 16).unwrap();
        assert_eq!(beta_hat_observational(&[0.0; 16], &obs, &inv).unwrap().beta_hat, vec![0.0]);
    }

    #[test]
    fn riemann_sum_of_constant() {
        let inv = const_images(1.0);
        let obs = Grid::right_end(0.0, 10.0, 32).unwrap();
        let b = beta_hat_observational(&[1.0; 32], &obs, &inv).unwrap();
        assert!((b.beta_hat[0] - 10.0).abs() < 1e-12);
        assert!(beta_hat_observational(&[1.0; 31], &obs, &inv).is_err());
        let wide = Grid::right_end(0.0, 12.0, 32).unwrap();
        assert!(beta_hat_observational(&[1.0; 32], &wide, &inv).is_err());
    }

    #[test]
    fn mixture_estimates() {
        let inv = const_images(0.7);
        let b = beta_hat_mixture(&[0.1, 3.0, 9.9, 42.0], &inv).unwrap();
        assert!((b.beta_hat[0] - 0.7).abs() < 1e-15);
        assert_eq!(b.clamped, 1);
        let g = inv.grid().clone();
        let lin = InverseImages::new(vec![g.sample(|x| x * x)], vec![0.0], InversionMethod::Exact).unwrap();
        let one = beta_hat_mixture(&[2.0], &lin).unwrap();
        assert!((one.beta_hat[0] - 4.0).abs() < 1e-12);
        assert!(beta_hat_mixture(&[], &lin).is_err());
    }

    #[test]
    fn alpha_examples() {
        let w = theoretical_alpha(PenaltyModel::WhiteNoise { eps: 0.01 }, 1.0, 3.0, 400).unwrap();
        assert!((w.alpha0 - 0.48955).abs() < 1e-5);
        assert!((w.alpha - 2.0 * w.alpha0).abs() < 1e-15);
        let o = theoretical_alpha(
            PenaltyModel::Observational { sigma: 1.0, n: 64, spacing_factor: 1.0 },
            1.0,
            3.0,
            400,
        )
        .unwrap();
        assert!((o.alpha0 - 1.22387).abs() < 1e-5);
        assert_eq!(o.k0, Some(8.0));
        assert!(theoretical_alpha(PenaltyModel::Mixture { n: 10 }, 1.0, 1.0, 400).is_err());
    }
}
