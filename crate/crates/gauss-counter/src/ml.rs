//! Maximum-likelihood fitting of normal parameters to count data.
//!
//! The structure hypothesis (multiplicity pattern, which eigenspaces carry
//! displacement) is fixed per fit; callers scan hypotheses and compare
//! likelihoods. Bounded parameters map to an unconstrained vector through
//! nested logistic intervals: lambda_1 ranges over (lambda_min, lambda_max)
//! and each following eigenvalue over (lambda_min, previous), which keeps
//! the spectrum strictly decreasing for every input; displacements are
//! logistic in (0, c_max).

use std::thread;

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::Normal;
use serde::{Deserialize, Serialize};

use crate::error::{GcError, Result};
use crate::forward::forward_distribution;
use crate::inverse::{find_minimal_polynomial, roots_with_multiplicity, solve_weights};
use crate::moments::probabilities_to_f;
use crate::numeric::comp_sum;
use crate::oracle::{empirical_distribution, worker_count, SampleRun};
use crate::state::{NormalParameters, SCHEMA_VERSION};

fn default_schema() -> u32 {
    SCHEMA_VERSION
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitConfig {
    #[serde(default = "default_schema")]
    pub schema_version: u32,
    pub mode_count: usize,
    /// likelihood uses bins 0..max_photons plus one overflow bin
    pub max_photons: usize,
    pub multiplicities: Vec<u32>,
    /// which eigenspaces have a free displacement norm
    pub displaced: Vec<bool>,
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub c_max: f64,
    pub max_iters: usize,
    pub restarts: usize,
    pub seed: u64,
}

impl FitConfig {
    pub fn new(s: usize, multiplicities: Vec<u32>, displaced: Vec<bool>) -> FitConfig {
        FitConfig {
            schema_version: SCHEMA_VERSION,
            mode_count: s,
            max_photons: 8 * s,
            multiplicities,
            displaced,
            lambda_min: 0.05,
            lambda_max: 50.0,
            c_max: 6.0,
            max_iters: 600,
            restarts: 8,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.mode_count == 0 {
            return Err(GcError::InvalidInput("mode count must be >= 1".into()));
        }
        if self.multiplicities.iter().sum::<u32>() as usize != 2 * self.mode_count {
            return Err(GcError::StructureMismatch(format!(
                "multiplicities sum to {}, need {}",
                self.multiplicities.iter().sum::<u32>(),
                2 * self.mode_count
            )));
        }
        if self.multiplicities.is_empty() || self.multiplicities.iter().any(|&m| m == 0) {
            return Err(GcError::StructureMismatch(
                "each multiplicity must be >= 1".into(),
            ));
        }
        if self.displaced.len() != self.multiplicities.len() {
            return Err(GcError::StructureMismatch(format!(
                "{} displacement flags for {} eigenvalues",
                self.displaced.len(),
                self.multiplicities.len()
            )));
        }
        let bounds_ok = self.lambda_min.is_finite()
            && self.lambda_max.is_finite()
            && self.c_max.is_finite()
            && self.lambda_min > 0.0
            && self.lambda_min < self.lambda_max
            && self.c_max > 0.0;
        if !bounds_ok {
            return Err(GcError::InvalidInput("fit bounds must be finite and ordered".into()));
        }
        if self.max_photons < 8 * self.mode_count {
            return Err(GcError::InvalidInput(format!(
                "max_photons {} below the informative range {}",
                self.max_photons,
                8 * self.mode_count
            )));
        }
        Ok(())
    }

    fn dim(&self) -> usize {
        self.multiplicities.len() + self.displaced.iter().filter(|&&d| d).count()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitResult {
    #[serde(default = "default_schema")]
    pub schema_version: u32,
    pub parameters: NormalParameters,
    pub nll: f64,
    /// best objective value of each restart, in restart order
    pub restart_nlls: Vec<f64>,
    /// running minimum over restarts; non-increasing
    pub trace: Vec<f64>,
    pub converged: bool,
}

fn sigmoid(u: f64) -> f64 {
    1.0 / (1.0 + (-u).exp())
}

fn logit(p: f64) -> f64 {
    let p = p.clamp(1e-12, 1.0 - 1e-12);
    (p / (1.0 - p)).ln()
}

fn params_from_vec(config: &FitConfig, u: &[f64]) -> Option<NormalParameters> {
    let h = config.multiplicities.len();
    let mut lam = Vec::with_capacity(h);
    let mut hi = config.lambda_max;
    for &uk in u.iter().take(h) {
        let v = config.lambda_min + (hi - config.lambda_min) * sigmoid(uk);
        lam.push(v);
        hi = v;
    }
    let mut c = vec![0.0f64; h];
    let mut j = h;
    for k in 0..h {
        if config.displaced[k] {
            c[k] = config.c_max * sigmoid(u[j]);
            j += 1;
        }
    }
    NormalParameters::new(lam, config.multiplicities.clone(), c).ok()
}

fn vec_from_params(config: &FitConfig, np: &NormalParameters) -> Vec<f64> {
    let h = config.multiplicities.len();
    let mut u = Vec::with_capacity(config.dim());
    let mut hi = config.lambda_max;
    for k in 0..h {
        let lam = np.eigenvalues.get(k).copied().unwrap_or(config.lambda_min);
        let span = (hi - config.lambda_min).max(1e-12);
        u.push(logit((lam - config.lambda_min) / span));
        hi = lam.clamp(config.lambda_min, config.lambda_max);
    }
    for k in 0..h {
        if config.displaced[k] {
            let c = np.displacement_norms.get(k).copied().unwrap_or(0.0);
            u.push(logit(c / config.c_max));
        }
    }
    u
}

/// Multinomial negative log-likelihood over bins 0..max_photons plus an
/// overflow bin at 1 - sum p_n. Bins with zero observed count contribute
/// nothing; any failure to evaluate the model maps to +inf so the
/// optimizer simply rejects the point.
pub fn negative_log_likelihood(np: &NormalParameters, run: &SampleRun, config: &FitConfig) -> f64 {
    let dist = match forward_distribution(np, config.max_photons) {
        Ok(d) => d,
        Err(_) => return f64::INFINITY,
    };
    let p = &dist.probabilities;
    let covered: f64 = p.iter().sum();
    let p_over = (1.0 - covered).max(0.0);
    let mut terms = Vec::with_capacity(run.counts.len() + 1);
    let mut over_count = 0u64;
    for (&n, &cnt) in &run.counts {
        if cnt == 0 {
            continue;
        }
        if (n as usize) < p.len() {
            let pn = p[n as usize];
            if pn <= 0.0 {
                return f64::INFINITY;
            }
            terms.push(-(cnt as f64) * pn.ln());
        } else {
            over_count += cnt;
        }
    }
    if over_count > 0 {
        if p_over <= 0.0 {
            return f64::INFINITY;
        }
        terms.push(-(over_count as f64) * p_over.ln());
    }
    comp_sum(&terms)
}

/// Standard Nelder-Mead simplex with reflection 1, expansion 2,
/// contraction 1/2, shrink 1/2. Returns (argmin, min, converged).
fn nelder_mead<F: FnMut(&[f64]) -> f64>(
    f: &mut F,
    x0: &[f64],
    max_iters: usize,
) -> (Vec<f64>, f64, bool) {
    let dim = x0.len();
    let mut simplex: Vec<(f64, Vec<f64>)> = Vec::with_capacity(dim + 1);
    simplex.push((f(x0), x0.to_vec()));
    for i in 0..dim {
        let mut x = x0.to_vec();
        x[i] += 0.5;
        simplex.push((f(&x), x));
    }
    let mut converged = false;
    for _ in 0..max_iters {
        simplex.sort_by(|a, b| a.0.total_cmp(&b.0));
        let best = simplex[0].0;
        let worst = simplex[dim].0;
        let diameter = simplex[1..]
            .iter()
            .flat_map(|(_, x)| {
                x.iter()
                    .zip(&simplex[0].1)
                    .map(|(a, b)| (a - b).abs())
            })
            .fold(0.0f64, f64::max);
        if (worst - best).abs() <= 1e-12 * (1.0 + best.abs()) && diameter <= 1e-9 {
            converged = true;
            break;
        }
        let centroid: Vec<f64> = (0..dim)
            .map(|i| simplex[..dim].iter().map(|(_, x)| x[i]).sum::<f64>() / dim as f64)
            .collect();
        let xh = simplex[dim].1.clone();
        let reflect: Vec<f64> = centroid
            .iter()
            .zip(&xh)
            .map(|(c, h)| c + (c - h))
            .collect();
        let fr = f(&reflect);
        if fr < simplex[0].0 {
            let expand: Vec<f64> = centroid
                .iter()
                .zip(&xh)
                .map(|(c, h)| c + 2.0 * (c - h))
                .collect();
            let fe = f(&expand);
            simplex[dim] = if fe < fr { (fe, expand) } else { (fr, reflect) };
        } else if fr < simplex[dim - 1].0 {
            simplex[dim] = (fr, reflect);
        } else {
            let contract: Vec<f64> = if fr < simplex[dim].0 {
                centroid
                    .iter()
                    .zip(&reflect)
                    .map(|(c, r)| c + 0.5 * (r - c))
                    .collect()
            } else {
                centroid
                    .iter()
                    .zip(&xh)
                    .map(|(c, h)| c + 0.5 * (h - c))
                    .collect()
            };
            let fc = f(&contract);
            if fc < simplex[dim].0.min(fr) {
                simplex[dim] = (fc, contract);
            } else {
                let anchor = simplex[0].1.clone();
                for entry in simplex.iter_mut().skip(1) {
                    let x: Vec<f64> = entry
                        .1
                        .iter()
                        .zip(&anchor)
                        .map(|(v, a)| a + 0.5 * (v - a))
                        .collect();
                    *entry = (f(&x), x);
                }
            }
        }
    }
    simplex.sort_by(|a, b| a.0.total_cmp(&b.0));
    let (fb, xb) = simplex.swap_remove(0);
    (xb, fb, converged)
}

/// Warm start from the exact-inversion pipeline run leniently on the
/// empirical frequencies (Hankel scan, root clustering, weight solve).
/// Used when the recovered multiplicity pattern matches the hypothesis;
/// count noise or a structure mismatch simply drops the warm start.
fn warm_start(run: &SampleRun, config: &FitConfig) -> Option<Vec<f64>> {
    let s = config.mode_count;
    let emp = empirical_distribution(run, s, 8 * s).ok()?;
    let f = probabilities_to_f(&emp.probabilities, s, 8 * s).ok()?;
    let q = find_minimal_polynomial(&f, s, 1e-2).ok()?;
    let roots = roots_with_multiplicity(&q, 1e-2).ok()?;
    let (m_raw, disp) = solve_weights(&f, &roots, f64::INFINITY).ok()?;
    let m_int: Vec<u32> = m_raw
        .iter()
        .map(|&v| v.round().max(0.0) as u32)
        .collect();
    if m_int != config.multiplicities {
        return None;
    }
    let lam: Vec<f64> = roots.iter().map(|&(lp, _)| lp / (1.0 - lp)).collect();
    let mut c = vec![0.0f64; roots.len()];
    let doubles: Vec<usize> = (0..roots.len()).filter(|&k| roots[k].1 == 2).collect();
    for (j, &idx) in doubles.iter().enumerate() {
        c[idx] = (1.0 + lam[idx]) * disp[j].max(0.0).sqrt();
    }
    let np = NormalParameters::new(lam, m_int, c).ok()?;
    Some(vec_from_params(config, &np))
}

/// Derivative-free maximum-likelihood fit from multiple restarts; restart 0
/// is seeded from exact inversion when that succeeds with the hypothesized
/// structure. Deterministic given config and run.
pub fn fit(run: &SampleRun, config: &FitConfig) -> Result<FitResult> {
    config.validate()?;
    if run.sample_count == 0 || run.counts.is_empty() {
        return Err(GcError::EmptyRun);
    }
    let dim = config.dim();
    let restarts = config.restarts.max(1);
    let mut starts: Vec<Vec<f64>> = Vec::with_capacity(restarts);
    let warm = warm_start(run, config);
    for i in 0..restarts {
        if i == 0 {
            if let Some(w) = &warm {
                starts.push(w.clone());
                continue;
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rng.set_stream(1000 + i as u64);
        let normal = Normal::new(0.0f64, 1.5).unwrap();
        starts.push((0..dim).map(|_| normal.sample(&mut rng)).collect());
    }
    let workers = worker_count().min(restarts);
    let mut outcomes: Vec<Option<(Vec<f64>, f64, bool)>> = vec![None; restarts];
    thread::scope(|scope| {
        let starts = &starts;
        let mut handles = Vec::with_capacity(workers);
        for w in 0..workers {
            handles.push(scope.spawn(move || {
                let mut out = Vec::new();
                let mut i = w;
                while i < starts.len() {
                    let mut obj = |u: &[f64]| match params_from_vec(config, u) {
                        Some(np) => negative_log_likelihood(&np, run, config),
                        None => f64::INFINITY,
                    };
                    out.push((i, nelder_mead(&mut obj, &starts[i], config.max_iters)));
                    i += workers;
                }
                out
            }));
        }
        for h in handles {
            for (i, r) in h.join().expect("fit restart panicked") {
                outcomes[i] = Some(r);
            }
        }
    });
    let mut restart_nlls = Vec::with_capacity(restarts);
    let mut trace = Vec::with_capacity(restarts);
    let mut best_idx = 0usize;
    let mut best_nll = f64::INFINITY;
    for (i, o) in outcomes.iter().enumerate() {
        let (_, nll, _) = o.as_ref().expect("restart outcome missing");
        restart_nlls.push(*nll);
        if *nll < best_nll {
            best_nll = *nll;
            best_idx = i;
        }
        trace.push(best_nll);
    }
    let (u_best, nll, converged) = outcomes[best_idx].clone().unwrap();
    let parameters = params_from_vec(config, &u_best).ok_or_else(|| {
        GcError::NoViableStructure("no restart reached a valid parameter point".into())
    })?;
    if !nll.is_finite() {
        return Err(GcError::NoViableStructure(
            "objective infinite at every restart".into(),
        ));
    }
    Ok(FitResult {
        schema_version: SCHEMA_VERSION,
        parameters,
        nll,
        restart_nlls,
        trace,
        converged,
    })
}
