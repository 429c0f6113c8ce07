//! Monte Carlo oracle and photon-count simulation.
//!
//! `mc_probability` estimates p_n as a plain Gaussian expectation of the
//! projector polynomial, sharing no code path with the cumulant-chain
//! forward engine; it is the independent check. `sample_counts` simulates
//! a counting experiment: inverse-CDF draws from the exact distribution,
//! then binomial detector loss.

use std::collections::BTreeMap;
use std::thread;

use nalgebra::DVector;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{GcError, Result};
use crate::forward::{forward_distribution, tail_cutoff, PhotonDistribution};
use crate::kernel::projector_polynomial;
use crate::state::{
    validate_state, GaussianStateSpec, NormalParameters, ValidationMode, SCHEMA_VERSION,
};

pub const MIN_MC_SAMPLES: u64 = 10_000;
/// Work always splits into this many RNG streams regardless of the worker
/// count, so results are bit-identical under any GAUSS_COUNTER_THREADS.
const SHARD_COUNT: usize = 16;

fn default_schema() -> u32 {
    SCHEMA_VERSION
}

/// One simulated counting run: seed, detector efficiency, and the histogram
/// of observed totals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRun {
    #[serde(default = "default_schema")]
    pub schema_version: u32,
    pub seed: u64,
    pub sample_count: u64,
    pub efficiency: f64,
    pub counts: BTreeMap<u32, u64>,
}

pub(crate) fn worker_count() -> usize {
    std::env::var("GAUSS_COUNTER_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&v| v >= 1)
        .unwrap_or_else(|| {
            thread::available_parallelism()
                .map(|n| n.get())
                .unwrap_or(1)
        })
        .min(SHARD_COUNT)
}

/// Estimate p_n = E[(2pi)^S e^{-|r|^2} P_n(|r|^2)] under r ~ N(d, Gamma/2).
/// Returns (estimate, standard error); deterministic given the seed.
pub fn mc_probability(
    spec: &GaussianStateSpec,
    n: usize,
    samples: u64,
    seed: u64,
) -> Result<(f64, f64)> {
    validate_state(spec, ValidationMode::Mathematical)?;
    if samples < MIN_MC_SAMPLES {
        return Err(GcError::InvalidInput(format!(
            "need at least {MIN_MC_SAMPLES} samples, got {samples}"
        )));
    }
    let s = spec.mode_count;
    let dim = 2 * s;
    let half = spec.covariance.scale(0.5);
    let eig = nalgebra::SymmetricEigen::new(half.clone());
    let mut factor = eig.eigenvectors.clone();
    for j in 0..dim {
        let root = eig.eigenvalues[j].max(0.0).sqrt();
        factor.column_mut(j).scale_mut(root);
    }
    let defect = (&factor * factor.transpose() - &half).norm();
    if defect > 1e-10 {
        return Err(GcError::NumericalInstability(format!(
            "covariance factorization residual {defect:.2e}"
        )));
    }
    let poly = projector_polynomial(s, n)?;
    let scale = (2.0 * std::f64::consts::PI).powi(s as i32);

    let mut shard_sizes = [0u64; SHARD_COUNT];
    for (i, sz) in shard_sizes.iter_mut().enumerate() {
        *sz = samples / SHARD_COUNT as u64 + u64::from((i as u64) < samples % SHARD_COUNT as u64);
    }
    let workers = worker_count();
    let mut partials = vec![(0.0f64, 0.0f64); SHARD_COUNT];
    thread::scope(|scope| {
        let factor = &factor;
        let d = &spec.displacement;
        let poly = &poly;
        let shard_sizes = &shard_sizes;
        let mut handles = Vec::with_capacity(workers);
        for w in 0..workers {
            handles.push(scope.spawn(move || {
                let mut out = Vec::new();
                let mut shard = w;
                while shard < SHARD_COUNT {
                    let mut rng = ChaCha8Rng::seed_from_u64(seed);
                    rng.set_stream(1 + shard as u64);
                    let mut z = DVector::zeros(dim);
                    let mut r = DVector::zeros(dim);
                    let mut sum = 0.0f64;
                    let mut sumsq = 0.0f64;
                    for _ in 0..shard_sizes[shard] {
                        for zi in z.iter_mut() {
                            *zi = rng.sample::<f64, _>(StandardNormal);
                        }
                        r.copy_from(d);
                        r.gemv(1.0, factor, &z, 1.0);
                        let r2 = r.norm_squared();
                        let weight = scale * (-r2).exp() * poly.eval(r2);
                        sum += weight;
                        sumsq += weight * weight;
                    }
                    out.push((shard, sum, sumsq));
                    shard += workers;
                }
                out
            }));
        }
        for h in handles {
            for (i, sum, sumsq) in h.join().expect("mc shard panicked") {
                partials[i] = (sum, sumsq);
            }
        }
    });
    let count = samples as f64;
    let total: f64 = partials.iter().map(|p| p.0).sum();
    let total_sq: f64 = partials.iter().map(|p| p.1).sum();
    let mean = total / count;
    let var = ((total_sq - count * mean * mean) / (count - 1.0)).max(0.0);
    Ok((mean, (var / count).sqrt()))
}

/// Simulate `samples` photon-count measurements: inverse-CDF over the exact
/// forward distribution (tail mass folded into the last bin), then, for
/// efficiency below one, each photon survives independently with
/// probability eta.
pub fn sample_counts(
    np: &NormalParameters,
    samples: u64,
    efficiency: f64,
    seed: u64,
) -> Result<SampleRun> {
    if !(efficiency > 0.0 && efficiency <= 1.0) {
        return Err(GcError::InvalidInput(format!(
            "efficiency must lie in (0, 1], got {efficiency}"
        )));
    }
    if samples == 0 {
        return Err(GcError::EmptyRun);
    }
    let n_max = tail_cutoff(np)?;
    let dist = forward_distribution(np, n_max)?;
    let mut cdf = Vec::with_capacity(dist.probabilities.len());
    let mut acc = 0.0f64;
    for &p in &dist.probabilities {
        acc += p;
        cdf.push(acc);
    }
    if let Some(last) = cdf.last_mut() {
        *last = 1.0;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut counts: BTreeMap<u32, u64> = BTreeMap::new();
    for _ in 0..samples {
        let u: f64 = rng.random();
        let mut n = cdf.partition_point(|&c| c < u) as u32;
        if efficiency < 1.0 && n > 0 {
            let thin = Binomial::new(n as u64, efficiency)
                .map_err(|e| GcError::InvalidInput(e.to_string()))?;
            n = thin.sample(&mut rng) as u32;
        }
        *counts.entry(n).or_insert(0) += 1;
    }
    Ok(SampleRun {
        schema_version: SCHEMA_VERSION,
        seed,
        sample_count: samples,
        efficiency,
        counts,
    })
}

/// Relative frequencies for n = 0..n_max; sums to at most 1. The result
/// carries the sample count for downstream weighting.
pub fn empirical_distribution(
    run: &SampleRun,
    s: usize,
    n_max: usize,
) -> Result<PhotonDistribution> {
    let total: u64 = run.counts.values().sum();
    if run.sample_count == 0 || total == 0 {
        return Err(GcError::EmptyRun);
    }
    if total != run.sample_count {
        return Err(GcError::InvalidInput(format!(
            "histogram sums to {total}, sample_count says {}",
            run.sample_count
        )));
    }
    let probabilities: Vec<f64> = (0..=n_max)
        .map(|n| run.counts.get(&(n as u32)).copied().unwrap_or(0) as f64 / total as f64)
        .collect();
    Ok(PhotonDistribution {
        schema_version: SCHEMA_VERSION,
        mode_count: s,
        max_photons: n_max,
        probabilities,
        clamped_bins: 0,
        sample_count: Some(run.sample_count),
    })
}
