//! Exact photon-number distributions from normal parameters: closed-form
//! f_n, closed-form p_0, and the cumulant chain back to probabilities.

use serde::{Deserialize, Serialize};

use crate::error::{GcError, Result};
use crate::moments::f_to_relative_probs_dd;
use crate::numeric::Dd;
use crate::state::{
    extract_normal_parameters, to_modified, GaussianStateSpec, ModifiedNormalParameters,
    NormalParameters, SCHEMA_VERSION, TOL_DISTINCT_DEFAULT,
};

/// Largest max-photon count the exact chain supports (bounded by the
/// integer binomial table).
pub const MAX_PHOTON_CAP: usize = 124;

fn default_schema() -> u32 {
    SCHEMA_VERSION
}

fn is_zero(v: &usize) -> bool {
    *v == 0
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PhotonDistribution {
    #[serde(default = "default_schema")]
    pub schema_version: u32,
    pub mode_count: usize,
    pub max_photons: usize,
    /// p_0..p_N
    pub probabilities: Vec<f64>,
    /// bins where a tiny negative value (> -1e-12) was clamped to zero
    #[serde(default, skip_serializing_if = "is_zero")]
    pub clamped_bins: usize,
    /// present on empirical distributions, for downstream weighting
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sample_count: Option<u64>,
}

/// f_n = sum_k [ (m_k/2) lambda'_k^n + n c'_k lambda'_k^{n+1} ] for n = 1..n_max.
pub fn f_from_parameters(mp: &ModifiedNormalParameters, n_max: usize) -> Result<Vec<f64>> {
    Ok(f_from_parameters_dd(mp, n_max)?
        .iter()
        .map(|d| d.to_f64())
        .collect())
}

pub(crate) fn f_from_parameters_dd(
    mp: &ModifiedNormalParameters,
    n_max: usize,
) -> Result<Vec<Dd>> {
    let h = mp.lambda_prime.len();
    if mp.c_prime.len() != h || mp.multiplicities.len() != h || h == 0 {
        return Err(GcError::DimensionMismatch(
            "modified parameter arrays must share a nonzero length".into(),
        ));
    }
    for &lp in &mp.lambda_prime {
        if !(0.0 < lp && lp < 1.0) {
            return Err(GcError::LambdaPrimeOutOfRange(lp));
        }
    }
    let x: Vec<Dd> = mp.lambda_prime.iter().map(|&v| Dd::from_f64(v)).collect();
    let half_m: Vec<Dd> = mp
        .multiplicities
        .iter()
        .map(|&m| Dd::from_f64(m as f64).ldexp(-1))
        .collect();
    let cp: Vec<Dd> = mp.c_prime.iter().map(|&v| Dd::from_f64(v)).collect();
    // running powers: pow[k] = x_k^n, with the displaced term n c' x^{n+1}
    let mut pow = x.clone();
    let mut out = Vec::with_capacity(n_max);
    for n in 1..=n_max {
        let mut acc = Dd::ZERO;
        for k in 0..h {
            let therm = half_m[k].mul(pow[k]);
            let disp = cp[k].mul(pow[k]).mul(x[k]).scale(n as f64);
            acc = acc.add(therm).add(disp);
        }
        out.push(acc);
        for k in 0..h {
            pow[k] = pow[k].mul(x[k]);
        }
    }
    Ok(out)
}

/// p_0 = prod_k (2/(lambda_k+1))^{m_k/2} exp(-c_k^2/(lambda_k+1)).
pub fn p0_from_parameters(np: &NormalParameters) -> Result<f64> {
    np.validate()?;
    let mut logp0 = 0.0f64;
    for ((&l, &m), &c) in np
        .eigenvalues
        .iter()
        .zip(&np.multiplicities)
        .zip(&np.displacement_norms)
    {
        logp0 += 0.5 * m as f64 * (2.0 / (l + 1.0)).ln() - c * c / (l + 1.0);
    }
    Ok(logp0.exp())
}

/// Mean and variance of the total photon number.
pub fn photon_mean_var(np: &NormalParameters) -> (f64, f64) {
    let mut mean = 0.0;
    let mut var = 0.0;
    for ((&l, &m), &c) in np
        .eigenvalues
        .iter()
        .zip(&np.multiplicities)
        .zip(&np.displacement_norms)
    {
        mean += m as f64 * (l - 1.0) / 4.0 + c * c / 2.0;
        var += m as f64 * (l * l - 1.0) / 8.0 + l * c * c / 2.0;
    }
    (mean, var.max(0.0))
}

/// Tail rule: N = ceil(mean + 10 stddev) + 8, floored at 8S+1.
pub fn tail_cutoff(np: &NormalParameters) -> Result<usize> {
    let (mean, var) = photon_mean_var(np);
    let n = (mean + 10.0 * var.sqrt()).ceil() as usize + 8;
    let n = n.max(8 * np.mode_count + 1);
    if n > MAX_PHOTON_CAP {
        return Err(GcError::Overflow(format!(
            "tail rule wants N = {n} > {MAX_PHOTON_CAP}; state too energetic for the exact chain"
        )));
    }
    Ok(n)
}

/// Exact distribution p_0..p_N through the scaled cumulant chain.
pub fn forward_distribution(np: &NormalParameters, n: usize) -> Result<PhotonDistribution> {
    np.validate()?;
    if n == 0 {
        return Err(GcError::DimensionMismatch("N must be >= 1".into()));
    }
    if n > MAX_PHOTON_CAP {
        return Err(GcError::Overflow(format!("N = {n} > {MAX_PHOTON_CAP}")));
    }
    let mp = to_modified(np)?;
    let f = f_from_parameters_dd(&mp, n)?;
    let pt = f_to_relative_probs_dd(&f, np.mode_count)?;
    let p0 = p0_from_parameters(np)?;
    if p0 <= 0.0 || !p0.is_finite() {
        return Err(GcError::NumericalInstability(format!("p_0 = {p0}")));
    }
    let mut probs = Vec::with_capacity(n + 1);
    probs.push(p0);
    let mut clamped = 0usize;
    for (i, q) in pt.iter().enumerate() {
        let p = p0 * q.to_f64();
        if !p.is_finite() {
            return Err(GcError::NumericalInstability(format!(
                "p_{} is not finite",
                i + 1
            )));
        }
        if p < -1e-12 {
            return Err(GcError::NumericalInstability(format!(
                "p_{} = {p} below the clamp tolerance",
                i + 1
            )));
        }
        if p < 0.0 {
            clamped += 1;
            probs.push(0.0);
        } else {
            probs.push(p);
        }
    }
    let total: f64 = probs.iter().sum();
    if total > 1.0 + 1e-9 {
        return Err(GcError::NumericalInstability(format!(
            "total probability {total} exceeds 1"
        )));
    }
    Ok(PhotonDistribution {
        schema_version: SCHEMA_VERSION,
        mode_count: np.mode_count,
        max_photons: n,
        probabilities: probs,
        clamped_bins: clamped,
        sample_count: None,
    })
}

/// Extract normal parameters from a covariance/displacement spec, then run
/// the forward chain. Orthogonally equivalent specs give identical output.
pub fn forward_from_spec(spec: &GaussianStateSpec, n: usize) -> Result<PhotonDistribution> {
    let np = extract_normal_parameters(spec, TOL_DISTINCT_DEFAULT)?;
    forward_distribution(&np, n)
}
