//! gauss-counter: photon-number statistics of Gaussian states.
//!
//! JSON in, JSON out; stdin/stdout by default so subcommands compose in
//! pipelines (`forward | invert`). Every output embeds the crate version
//! and schema_version. Errors go to stderr as machine-readable JSON.

use std::io::{Read, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use gauss_counter::error::{GcError, Result};
use gauss_counter::forward::{forward_distribution, tail_cutoff, PhotonDistribution};
use gauss_counter::inverse::{
    find_minimal_polynomial, invert_distribution, roots_with_multiplicity, InversionOptions,
};
use gauss_counter::ml::{fit, FitConfig};
use gauss_counter::moments::probabilities_to_f;
use gauss_counter::oracle::sample_counts;
use gauss_counter::state::{extract_normal_parameters, TOL_DISTINCT_DEFAULT};
use gauss_counter::{GaussianStateSpec, NormalParameters, SampleRun};

const VERSION: &str = env!("CARGO_PKG_VERSION");

const EXIT_HELP: &str = "Exit codes:\n  \
    0  success\n  \
    2  validation error (bad input, unphysical state, structure mismatch)\n  \
    3  numerical error (instability, no viable inversion)\n  \
    4  round-trip deviation above --tol";

#[derive(Parser)]
#[command(
    name = "gauss-counter",
    version,
    about = "Total photon-number distributions of Gaussian states and their inversion",
    after_help = EXIT_HELP
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct IoArgs {
    /// input file (default: stdin)
    #[arg(short, long)]
    input: Option<PathBuf>,
    /// output file (default: stdout)
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct InvertTols {
    /// Hankel rank-deficiency threshold (sigma_min/sigma_max)
    #[arg(long, default_value_t = 1e-8)]
    tol_rank: f64,
    /// relative root-clustering tolerance
    #[arg(long, default_value_t = 1e-5)]
    tol_root: f64,
    /// relative residual bound for the weight solve
    #[arg(long, default_value_t = 1e-9)]
    tol_res: f64,
}

impl InvertTols {
    fn options(&self) -> InversionOptions {
        InversionOptions {
            tol_rank: self.tol_rank,
            tol_root: self.tol_root,
            tol_res: self.tol_res,
            ..InversionOptions::default()
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Exact photon-number distribution of a state (spec or normal parameters)
    Forward {
        #[command(flatten)]
        io: IoArgs,
        /// largest photon number (default: automatic tail cutoff)
        #[arg(long)]
        max_photons: Option<usize>,
    },
    /// Recover normal parameters from a photon-number distribution
    Invert {
        #[command(flatten)]
        io: IoArgs,
        #[command(flatten)]
        tols: InvertTols,
    },
    /// Simulate photon-count measurements with detector loss
    Sample {
        #[command(flatten)]
        io: IoArgs,
        #[arg(long, default_value_t = 100_000)]
        samples: u64,
        /// detector efficiency in (0, 1]
        #[arg(long, default_value_t = 1.0)]
        efficiency: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Maximum-likelihood fit of normal parameters to a sample run
    Fit {
        #[command(flatten)]
        io: IoArgs,
        #[arg(long)]
        mode_count: usize,
        /// comma-separated multiplicity pattern, e.g. 2,2
        #[arg(long)]
        multiplicities: String,
        /// comma-separated 0/1 flags marking displaced eigenspaces
        #[arg(long)]
        displaced: Option<String>,
        #[arg(long)]
        max_photons: Option<usize>,
        #[arg(long, default_value_t = 0.05)]
        lambda_min: f64,
        #[arg(long, default_value_t = 50.0)]
        lambda_max: f64,
        #[arg(long, default_value_t = 6.0)]
        c_max: f64,
        #[arg(long, default_value_t = 600)]
        max_iters: usize,
        #[arg(long, default_value_t = 8)]
        restarts: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Forward 8S+1 probabilities, invert, compare; exit 4 above --tol
    Roundtrip {
        #[command(flatten)]
        io: IoArgs,
        #[command(flatten)]
        tols: InvertTols,
        /// maximum allowed parameter deviation
        #[arg(long, default_value_t = 1e-6)]
        tol: f64,
        /// relative noise injected into the probabilities before inversion
        #[arg(long, default_value_t = 0.0)]
        perturb: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Hankel scan diagnostics: f sequence, rank ratios, kernel, roots
    DebugKernel {
        #[command(flatten)]
        io: IoArgs,
        #[command(flatten)]
        tols: InvertTols,
    },
}

fn read_input(io: &IoArgs) -> Result<String> {
    let mut text = String::new();
    match &io.input {
        Some(path) => {
            text = std::fs::read_to_string(path)
                .map_err(|e| GcError::InvalidInput(format!("{}: {e}", path.display())))?;
        }
        None => {
            std::io::stdin()
                .read_to_string(&mut text)
                .map_err(|e| GcError::InvalidInput(format!("stdin: {e}")))?;
        }
    }
    Ok(text)
}

fn write_output(io: &IoArgs, value: &Value) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| GcError::InvalidInput(e.to_string()))?;
    text.push('\n');
    match &io.output {
        Some(path) => std::fs::write(path, text)
            .map_err(|e| GcError::InvalidInput(format!("{}: {e}", path.display()))),
        None => std::io::stdout()
            .write_all(text.as_bytes())
            .map_err(|e| GcError::InvalidInput(format!("stdout: {e}"))),
    }
}

fn with_version(mut value: Value) -> Value {
    if let Some(obj) = value.as_object_mut() {
        obj.insert("version".into(), json!(VERSION));
    }
    value
}

fn to_value<T: serde::Serialize>(v: &T) -> Result<Value> {
    serde_json::to_value(v).map_err(|e| GcError::InvalidInput(e.to_string()))
}

fn parse_json(text: &str) -> Result<Value> {
    serde_json::from_str(text).map_err(|e| GcError::InvalidInput(format!("JSON parse: {e}")))
}

/// Accept either a covariance/displacement spec or ready normal parameters.
fn parse_state(text: &str) -> Result<NormalParameters> {
    let v = parse_json(text)?;
    if v.get("covariance").is_some() {
        let spec: GaussianStateSpec =
            serde_json::from_value(v).map_err(|e| GcError::InvalidInput(e.to_string()))?;
        extract_normal_parameters(&spec, TOL_DISTINCT_DEFAULT)
    } else {
        let np: NormalParameters =
            serde_json::from_value(v).map_err(|e| GcError::InvalidInput(e.to_string()))?;
        np.validate()?;
        Ok(np)
    }
}

fn parse_u32_list(text: &str, what: &str) -> Result<Vec<u32>> {
    text.split(',')
        .map(|t| {
            t.trim()
                .parse::<u32>()
                .map_err(|e| GcError::InvalidInput(format!("{what}: {e}")))
        })
        .collect()
}

fn run_forward(io: &IoArgs, max_photons: Option<usize>) -> Result<u8> {
    let np = parse_state(&read_input(io)?)?;
    let n = match max_photons {
        Some(n) => n,
        None => tail_cutoff(&np)?,
    };
    let dist = forward_distribution(&np, n)?;
    write_output(io, &with_version(to_value(&dist)?))?;
    Ok(0)
}

fn run_invert(io: &IoArgs, tols: &InvertTols) -> Result<u8> {
    let dist: PhotonDistribution = serde_json::from_str(&read_input(io)?)
        .map_err(|e| GcError::InvalidInput(format!("JSON parse: {e}")))?;
    let report = invert_distribution(&dist.probabilities, dist.mode_count, &tols.options())?;
    write_output(io, &with_version(to_value(&report)?))?;
    Ok(0)
}

fn run_sample(io: &IoArgs, samples: u64, efficiency: f64, seed: u64) -> Result<u8> {
    let np = parse_state(&read_input(io)?)?;
    let run = sample_counts(&np, samples, efficiency, seed)?;
    write_output(io, &with_version(to_value(&run)?))?;
    Ok(0)
}

#[allow(clippy::too_many_arguments)]
fn run_fit(
    io: &IoArgs,
    mode_count: usize,
    multiplicities: &str,
    displaced: &Option<String>,
    max_photons: Option<usize>,
    lambda_min: f64,
    lambda_max: f64,
    c_max: f64,
    max_iters: usize,
    restarts: usize,
    seed: u64,
) -> Result<u8> {
    let run: SampleRun = serde_json::from_str(&read_input(io)?)
        .map_err(|e| GcError::InvalidInput(format!("JSON parse: {e}")))?;
    let m = parse_u32_list(multiplicities, "multiplicities")?;
    let disp = match displaced {
        Some(text) => parse_u32_list(text, "displaced")?
            .into_iter()
            .map(|v| v != 0)
            .collect(),
        None => vec![false; m.len()],
    };
    let mut config = FitConfig::new(mode_count, m, disp);
    if let Some(n) = max_photons {
        config.max_photons = n;
    }
    config.lambda_min = lambda_min;
    config.lambda_max = lambda_max;
    config.c_max = c_max;
    config.max_iters = max_iters;
    config.restarts = restarts;
    config.seed = seed;
    let result = fit(&run, &config)?;
    write_output(io, &with_version(to_value(&result)?))?;
    Ok(0)
}

/// Largest of relative eigenvalue error and absolute displacement error;
/// infinite on any structure mismatch.
fn parameter_deviation(truth: &NormalParameters, found: &NormalParameters) -> f64 {
    if truth.multiplicities != found.multiplicities {
        return f64::INFINITY;
    }
    let mut dev = 0.0f64;
    for (a, b) in truth.eigenvalues.iter().zip(&found.eigenvalues) {
        dev = dev.max((a - b).abs() / a.abs());
    }
    for (a, b) in truth
        .displacement_norms
        .iter()
        .zip(&found.displacement_norms)
    {
        dev = dev.max((a - b).abs());
    }
    dev
}

fn run_roundtrip(io: &IoArgs, tols: &InvertTols, tol: f64, perturb: f64, seed: u64) -> Result<u8> {
    let np = parse_state(&read_input(io)?)?;
    let s = np.mode_count;
    let dist = forward_distribution(&np, 8 * s)?;
    let mut probs = dist.probabilities.clone();
    if perturb > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for p in probs.iter_mut() {
            let u: f64 = rng.random::<f64>() * 2.0 - 1.0;
            *p *= 1.0 + perturb * u;
        }
    }
    let report = match invert_distribution(&probs, s, &tols.options()) {
        Ok(r) => r,
        Err(e) => {
            let out = json!({
                "schema_version": 1,
                "original": to_value(&np)?,
                "max_deviation": Value::Null,
                "tol": tol,
                "passed": false,
                "error": {"error": e.code(), "message": e.to_string()},
            });
            write_output(io, &with_version(out))?;
            return Ok(4);
        }
    };
    let deviation = parameter_deviation(&np, &report.parameters);
    let passed = deviation < tol;
    let out = json!({
        "schema_version": 1,
        "original": to_value(&np)?,
        "report": to_value(&report)?,
        "max_deviation": deviation,
        "tol": tol,
        "passed": passed,
    });
    write_output(io, &with_version(out))?;
    Ok(if passed { 0 } else { 4 })
}

fn run_debug_kernel(io: &IoArgs, tols: &InvertTols) -> Result<u8> {
    let text = read_input(io)?;
    let v = parse_json(&text)?;
    let (probs, s) = if v.get("probabilities").is_some() {
        let dist: PhotonDistribution =
            serde_json::from_value(v).map_err(|e| GcError::InvalidInput(e.to_string()))?;
        (dist.probabilities, dist.mode_count)
    } else {
        let np = parse_state(&text)?;
        let dist = forward_distribution(&np, 8 * np.mode_count)?;
        (dist.probabilities, np.mode_count)
    };
    let f = probabilities_to_f(&probs, s, 8 * s)?;
    let ratios: Vec<f64> = (1..=4 * s)
        .map(|k| {
            let rows = 4 * s;
            let a = nalgebra::DMatrix::from_fn(rows, k + 1, |r, l| f[4 * s + r - l]);
            let svd = a.svd(false, false);
            let sv = &svd.singular_values;
            sv.min() / sv.max().max(f64::MIN_POSITIVE)
        })
        .collect();
    let kernel = find_minimal_polynomial(&f, s, tols.tol_rank);
    let out = match kernel {
        Ok(q) => {
            let roots = roots_with_multiplicity(&q, tols.tol_root);
            json!({
                "schema_version": 1,
                "mode_count": s,
                "f": f,
                "hankel_ratios": ratios,
                "degree": q.degree(),
                "minimal_polynomial": q.coefficients,
                "annihilation_residual": q.residual,
                "roots": match roots {
                    Ok(r) => json!(r.iter().map(|&(lp, m)| json!({
                        "lambda_prime": lp,
                        "lambda": lp / (1.0 - lp),
                        "multiplicity": m,
                    })).collect::<Vec<_>>()),
                    Err(e) => json!({"error": e.code(), "message": e.to_string()}),
                },
            })
        }
        Err(e) => json!({
            "schema_version": 1,
            "mode_count": s,
            "f": f,
            "hankel_ratios": ratios,
            "kernel_error": {"error": e.code(), "message": e.to_string()},
        }),
    };
    write_output(io, &with_version(out))?;
    Ok(0)
}

fn dispatch(cli: &Cli) -> Result<u8> {
    match &cli.command {
        Command::Forward { io, max_photons } => run_forward(io, *max_photons),
        Command::Invert { io, tols } => run_invert(io, tols),
        Command::Sample {
            io,
            samples,
            efficiency,
            seed,
        } => run_sample(io, *samples, *efficiency, *seed),
        Command::Fit {
            io,
            mode_count,
            multiplicities,
            displaced,
            max_photons,
            lambda_min,
            lambda_max,
            c_max,
            max_iters,
            restarts,
            seed,
        } => run_fit(
            io,
            *mode_count,
            multiplicities,
            displaced,
            *max_photons,
            *lambda_min,
            *lambda_max,
            *c_max,
            *max_iters,
            *restarts,
            *seed,
        ),
        Command::Roundtrip {
            io,
            tols,
            tol,
            perturb,
            seed,
        } => run_roundtrip(io, tols, *tol, *perturb, *seed),
        Command::DebugKernel { io, tols } => run_debug_kernel(io, tols),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            let payload = json!({
                "schema_version": 1,
                "version": VERSION,
                "error": e.code(),
                "message": e.to_string(),
            });
            eprintln!("{payload}");
            ExitCode::from(if e.is_validation() { 2 } else { 3 })
        }
    }
}
