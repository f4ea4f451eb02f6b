//! Restricted eigenvalues, coherence, compatibility constants and sample-size thresholds.

use faer::Mat;
use rand_distr::{Distribution, StandardNormal};
use rand::Rng;

use crate::dictionary::GramMatrix;
use crate::error::{Error, Result};
use crate::forward::rng_from_seed;
use crate::grid::GridFunction;
use crate::inversion::{InverseImages, WeightVector};
use crate::linalg;

/// Largest number of supports [`restricted_eigs`] will enumerate.
pub const ENUMERATION_LIMIT: u128 = 1_000_000;

fn binomial(p: usize, m: usize) -> u128 {
    let m = m.min(p - m);
    (0..m).fold(1u128, |acc, i| acc * (p - i) as u128 / (i + 1) as u128)
}

/// Calls `f` on every increasing `m`-subset of `0..p`.
fn for_each_support(p: usize, m: usize, mut f: impl FnMut(&[usize])) {
    let mut idx: Vec<usize> = (0..m).collect();
    loop {
        f(&idx);
        let mut i = m;
        while i > 0 && idx[i - 1] == p - m + i - 1 {
            i -= 1;
        }
        if i == 0 {
            return;
        }
        idx[i - 1] += 1;
        for k in i..m {
            idx[k] = idx[k - 1] + 1;
        }
    }
}

fn sub_eigs(phi: &GramMatrix, idx: &[usize]) -> Result<(f64, f64)> {
    match idx.len() {
        1 => {
            let d = phi.get(idx[0], idx[0]);
            Ok((d, d))
        }
        2 => {
            let (a, b, c) = (phi.get(idx[0], idx[0]), phi.get(idx[1], idx[1]), phi.get(idx[0], idx[1]));
            let mean = 0.5 * (a + b);
            let rad = (0.25 * (a - b) * (a - b) + c * c).sqrt();
            Ok((mean - rad, mean + rad))
        }
        _ => {
            let ev = linalg::symmetric_eigenvalues(phi.submatrix(idx).as_ref())?;
            Ok((ev[0], ev[ev.len() - 1]))
        }
    }
}

/// Extreme eigenvalues over all principal submatrices of order `m`.
///
/// By eigenvalue interlacing these are also the extremes over orders `≤ m`.
pub fn restricted_eigs(phi: &GramMatrix, m: usize) -> Result<(f64, f64)> {
    let p = phi.p();
    if m < 1 || m > p {
        return Err(Error::param("m", format!("need 1 <= m <= p = {p}, got {m}")));
    }
    let count = binomial(p, m);
    if count > ENUMERATION_LIMIT {
        return Err(Error::EnumerationGuard {
            p,
            m,
            count,
            limit: ENUMERATION_LIMIT,
        });
    }
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    let mut failure = None;
    for_each_support(p, m, |idx| match sub_eigs(phi, idx) {
        Ok((a, b)) => {
            lo = lo.min(a);
            hi = hi.max(b);
        }
        Err(e) => failure = Some(e),
    });
    match failure {
        Some(e) => Err(e),
        None => Ok((lo, hi)),
    }
}

/// Mutual coherence `max_{j≠k} |Φ_{jk}|`.
pub fn max_offdiag(phi: &GramMatrix) -> Result<f64> {
    let p = phi.p();
    if p < 2 {
        return Err(Error::param("gram", "coherence needs p >= 2"));
    }
    let mut m = 0.0f64;
    for j in 0..p {
        for k in 0..j {
            m = m.max(phi.get(j, k).abs());
        }
    }
    Ok(m)
}

/// The two incoherence conditions: `λ_min(s+m) > c₀λ_max(m)` and `ϱ < 1/(s(2c₀+1))`.
pub fn check_incoherence(phi: &GramMatrix, s: usize, m: usize, c0: f64) -> Result<(bool, bool)> {
    let p = phi.p();
    if s < 1 || 2 * s > p {
        return Err(Error::param("s", format!("need 1 <= s <= p/2 = {}, got {s}", p / 2)));
    }
    if m < s || s + m > p {
        return Err(Error::param("m", format!("need s <= m and s + m <= p, got s = {s}, m = {m}")));
    }
    let (lmin, _) = restricted_eigs(phi, s + m)?;
    let (_, lmax) = restricted_eigs(phi, m)?;
    let rho = max_offdiag(phi)?;
    Ok((lmin > c0 * lmax, rho < 1.0 / (s as f64 * (2.0 * c0 + 1.0))))
}

/// Which incoherence condition produced a compatibility constant.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CompatBranch {
    RestrictedEigen,
    Coherence,
    NoBound,
}

/// Lower bound `ϑ(s,m)` on the compatibility constant with `C₀ = μ·C_ups`; 0 when neither condition holds.
pub fn compatibility_bound(phi: &GramMatrix, s: usize, m: usize, mu: f64, c_ups: f64) -> Result<(f64, CompatBranch)> {
    let c0 = mu * c_ups;
    let (a2a, a2b) = check_incoherence(phi, s, m, c0)?;
    if a2a {
        let (lmin, _) = restricted_eigs(phi, s + m)?;
        let (_, lmax) = restricted_eigs(phi, m)?;
        let r = 1.0 - c0 * (s as f64 * lmax).sqrt() / (m as f64 * lmin).sqrt();
        Ok((lmin * r * r, CompatBranch::RestrictedEigen))
    } else if a2b {
        Ok((1.0 - 1.0 / (s as f64 * (2.0 * c0 + 1.0)), CompatBranch::Coherence))
    } else {
        Ok((0.0, CompatBranch::NoBound))
    }
}

fn check_subset(p: usize, j: &[usize]) -> Result<Vec<bool>> {
    let mut mask = vec![false; p];
    for &k in j {
        if k >= p {
            return Err(Error::LabelRange(format!("index {k} out of range for p = {p}")));
        }
        mask[k] = true;
    }
    Ok(mask)
}

/// Sampled upper estimate of `κ²(μ, J)`.
///
/// Each direction draws `d_J` and `d_{Jᶜ}` from standard normals, then rescales `d_{Jᶜ}`
/// by a uniform fraction of the largest factor keeping `d` in the cone
/// `‖(Υd)_{Jᶜ}‖₁ ≤ μ‖(Υd)_J‖₁`. The result is a minimum over sampled directions, so it can
/// only overestimate the true constant.
pub fn kappa2_estimate(phi: &GramMatrix, nu: &WeightVector, mu: f64, j: &[usize], n_dirs: usize, seed: u64) -> Result<f64> {
    let p = phi.p();
    if nu.len() != p {
        return Err(Error::DimensionMismatch {
            expected: p,
            found: nu.len(),
            context: "weights vs Gram",
        });
    }
    if j.is_empty() {
        return Err(Error::Empty("support J"));
    }
    if !(mu > 1.0) {
        return Err(Error::param("mu", format!("must exceed 1, got {mu}")));
    }
    let mask = check_subset(p, j)?;
    let trace: f64 = j.iter().map(|&k| nu.nu[k] * nu.nu[k]).sum();
    if !(trace > 0.0) {
        return Err(Error::DegenerateWeight { index: j[0], value: 0.0 });
    }
    let mut rng = rng_from_seed(seed);
    let entries = phi.entries();
    let mut best = f64::INFINITY;
    let mut d = vec![0.0; p];
    for _ in 0..n_dirs {
        for v in d.iter_mut() {
            *v = StandardNormal.sample(&mut rng);
        }
        let u: f64 = rng.random();
        let (mut in_j, mut out_j) = (0.0, 0.0);
        for k in 0..p {
            let a = (nu.nu[k] * d[k]).abs();
            if mask[k] {
                in_j += a;
            } else {
                out_j += a;
            }
        }
        if in_j == 0.0 {
            continue;
        }
        let scale = if out_j > 0.0 { u * mu * in_j / out_j } else { 0.0 };
        for k in 0..p {
            if !mask[k] {
                d[k] *= scale;
            }
        }
        let mut quad = 0.0;
        for a in 0..p {
            let col = entries.col(a);
            let mut s = 0.0;
            for (b, &c) in col.iter().enumerate() {
                s += c * d[b];
            }
            quad += d[a] * s;
        }
        best = best.min(quad * trace / (in_j * in_j));
    }
    Ok(best)
}

/// `κ₀ = max_{j'} Σ_{j≠j'} |Φ_{jj'}|`; when `κ₀ < 1`, `λ_min(Φ) ≥ 1 − κ₀`.
pub fn check_diag_dominance(phi: &GramMatrix) -> f64 {
    let p = phi.p();
    (0..p)
        .map(|c| (0..p).filter(|&r| r != c).map(|r| phi.get(r, c).abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Smallest `C_ups` with `max_{j∈J, j'∉J} ν_j/ν_{j'} ≤ C_ups`.
pub fn weight_balance(nu: &WeightVector, j: &[usize]) -> Result<f64> {
    let p = nu.len();
    let mask = check_subset(p, j)?;
    let inside = mask.iter().filter(|&&m| m).count();
    if inside == 0 || inside == p {
        return Err(Error::param("J", "must be a proper nonempty subset"));
    }
    let hi = (0..p).filter(|&k| mask[k]).map(|k| nu.nu[k]).fold(0.0, f64::max);
    let lo = (0..p).filter(|&k| !mask[k]).map(|k| nu.nu[k]).fold(f64::INFINITY, f64::min);
    Ok(hi / lo)
}

fn max_abs_derivative(x: &[f64], v: &[f64]) -> f64 {
    let n = x.len();
    if n < 2 {
        return 0.0;
    }
    let mut m = 0.0f64;
    for i in 0..n {
        let (a, b) = (i.saturating_sub(1), (i + 1).min(n - 1));
        m = m.max(((v[b] - v[a]) / (x[b] - x[a])).abs());
    }
    m
}

/// `ℵ = max_j ν_j⁻¹ max_x |(q ψ_j)′(x)|` with finite-difference derivatives.
pub fn compute_aleph(q: &GridFunction, inv: &InverseImages, nu: &WeightVector) -> Result<f64> {
    if !q.grid().same_as(inv.grid()) {
        return Err(Error::GridMismatch("q and the inverse images must share a grid".into()));
    }
    if nu.len() != inv.p() {
        return Err(Error::DimensionMismatch {
            expected: inv.p(),
            found: nu.len(),
            context: "weights vs inverse images",
        });
    }
    let x = q.grid().nodes();
    let mut aleph = 0.0f64;
    for (j, psi) in inv.psi().iter().enumerate() {
        let nj = nu.nu[j];
        if !(nj > 0.0) {
            return Err(Error::DegenerateWeight { index: j, value: nj });
        }
        let prod: Vec<f64> = q.values().iter().zip(psi.values()).map(|(a, b)| a * b).collect();
        aleph = aleph.max(max_abs_derivative(x, &prod) / nj);
    }
    Ok(aleph)
}

/// Sample sizes above which the observational (`𝒩`) and mixture (`𝒩₀`) theorems apply.
pub fn sample_size_thresholds(t_max: f64, aleph: f64, sigma: f64, tau: f64, p: usize, spacing_factor: f64) -> Result<(f64, f64)> {
    for (name, v) in [("T", t_max), ("sigma", sigma), ("tau", tau), ("spacing_factor", spacing_factor)] {
        if !(v > 0.0 && v.is_finite()) {
            return Err(Error::param(name, format!("must be positive, got {v}")));
        }
    }
    if !(aleph >= 0.0) {
        return Err(Error::param("aleph", "must be non-negative"));
    }
    if p < 2 {
        return Err(Error::param("p", "need p >= 2"));
    }
    let lp = (tau + 1.0) * (p as f64).ln();
    let k0 = 8.0 * spacing_factor * spacing_factor;
    Ok((t_max.powi(4) * aleph * aleph / (4.0 * k0 * sigma * sigma * lp), 16.0 / 9.0 * lp))
}

/// Everything the `diagnose` command reports.
#[derive(Debug, Clone, PartialEq)]
pub struct CompatibilityReport {
    pub s: usize,
    pub m: usize,
    pub mu: f64,
    pub c_ups: f64,
    pub lambda_min_sm: f64,
    pub lambda_max_m: f64,
    pub rho: f64,
    pub a2a_holds: bool,
    pub a2b_holds: bool,
    pub theta_sm: f64,
    pub kappa0: f64,
    pub kappa2_estimate: Option<f64>,
}

/// Optional Monte-Carlo part of a report.
#[derive(Debug, Clone)]
pub struct KappaRequest<'a> {
    pub nu: &'a WeightVector,
    pub support: &'a [usize],
    pub n_dirs: usize,
    pub seed: u64,
}

pub fn compatibility_report(
    phi: &GramMatrix,
    s: usize,
    m: usize,
    mu: f64,
    c_ups: f64,
    kappa: Option<KappaRequest<'_>>,
) -> Result<CompatibilityReport> {
    let (a2a, a2b) = check_incoherence(phi, s, m, mu * c_ups)?;
    let (theta, _) = compatibility_bound(phi, s, m, mu, c_ups)?;
    let kappa2_estimate = match kappa {
        Some(k) => Some(kappa2_estimate(phi, k.nu, mu, k.support, k.n_dirs, k.seed)?),
        None => None,
    };
    Ok(CompatibilityReport {
        s,
        m,
        mu,
        c_ups,
        lambda_min_sm: restricted_eigs(phi, s + m)?.0,
        lambda_max_m: restricted_eigs(phi, m)?.1,
        rho: max_offdiag(phi)?,
        a2a_holds: a2a,
        a2b_holds: a2b,
        theta_sm: theta,
        kappa0: check_diag_dominance(phi),
        kappa2_estimate,
    })
}

impl CompatibilityReport {
    /// Flat `key=value` lines.
    pub fn to_key_value(&self) -> String {
        let k2 = self.kappa2_estimate.map_or("na".to_string(), |v| format!("{v}"));
        format!(
            "s={}\nm={}\nmu={}\nc_ups={}\nlambda_min_sm={}\nlambda_max_m={}\nrho={}\na2a_holds={}\na2b_holds={}\ntheta_sm={}\nkappa0={}\nkappa2_estimate={}\n",
            self.s,
            self.m,
            self.mu,
            self.c_ups,
            self.lambda_min_sm,
            self.lambda_max_m,
            self.rho,
            self.a2a_holds,
            self.a2b_holds,
            self.theta_sm,
            self.kappa0,
            k2
        )
    }
}

/// Constant-correlation Gram matrix `(1−r)I + r11ᵀ`.
pub fn equicorrelated(p: usize, r: f64) -> GramMatrix {
    GramMatrix::new(Mat::from_fn(p, p, |i, j| if i == j { 1.0 } else { r })).expect("symmetric by construction")
}
