//! Error taxonomy shared by the whole crate.
//!
//! Every failure carries a stable machine-readable `code()`; the CLI maps
//! errors onto its exit-code contract (2 = validation, 3 = numerical).

use thiserror::Error;

#[derive(Debug, Error)]
pub enum GcError {
    #[error("matrix/vector dimensions inconsistent with mode count: {0}")]
    DimensionMismatch(String),
    #[error("covariance matrix not symmetric (max |G_kl - G_lk| = {defect:.3e})")]
    NotSymmetric { defect: f64 },
    #[error("covariance matrix not positive definite (min eigenvalue {min_eig:.3e})")]
    NotPositiveDefinite { min_eig: f64 },
    #[error("state unphysical (min symplectic eigenvalue {min_symp:.6} < 1)")]
    Unphysical { min_symp: f64 },
    #[error("eigenvalue cluster structure unstable near tol_distinct (gap {gap:.3e} vs tol {tol:.3e})")]
    ClusterAmbiguity { gap: f64, tol: f64 },
    #[error("lambda' = {0} outside (0,1); unphysical inversion result upstream")]
    LambdaPrimeOutOfRange(f64),
    #[error("spectrum length must be even, got {0}")]
    OddLength(usize),
    #[error("p_0 must be positive, got {0}")]
    ZeroP0(f64),
    #[error("non-finite value in input")]
    NonFiniteInput,
    #[error("binomial/polynomial coefficient exceeds supported range ({0})")]
    Overflow(String),
    #[error("non-finite intermediate in forward chain ({0})")]
    NumericalInstability(String),
    #[error("no rank-deficient Hankel matrix for k <= 4S (inconsistent or noisy input)")]
    NoKernelFound,
    #[error("rank deficiency ambiguous between degrees {k_low} and {k_high}")]
    RankAmbiguity { k_low: usize, k_high: usize },
    #[error("polynomial root with |imag|/|real| = {0:.3e} above tolerance")]
    ComplexRoot(f64),
    #[error("recovered lambda' = {0} outside (0,1)")]
    RootOutOfRange(f64),
    #[error("Hermite system ill-conditioned (residual {residual:.3e} > {tol:.3e})")]
    IllConditioned { residual: f64, tol: f64 },
    #[error("negative weight {0:.3e} in Hermite solve")]
    NegativeWeight(f64),
    #[error("multiplicity rounding failed (max |m_raw - round| = {delta:.3}, sum = {sum})")]
    MultiplicityRoundingFailed { delta: f64, sum: i64 },
    #[error("no viable structure: {0}")]
    NoViableStructure(String),
    #[error("sample run contains no counts")]
    EmptyRun,
    #[error("structure hypothesis contradicts mode count: {0}")]
    StructureMismatch(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
}

impl GcError {
    /// Stable machine-readable error code, embedded in CLI error JSON.
    pub fn code(&self) -> &'static str {
        match self {
            GcError::DimensionMismatch(_) => "DimensionMismatch",
            GcError::NotSymmetric { .. } => "NotSymmetric",
            GcError::NotPositiveDefinite { .. } => "NotPositiveDefinite",
            GcError::Unphysical { .. } => "Unphysical",
            GcError::ClusterAmbiguity { .. } => "ClusterAmbiguity",
            GcError::LambdaPrimeOutOfRange(_) => "LambdaPrimeOutOfRange",
            GcError::OddLength(_) => "OddLength",
            GcError::ZeroP0(_) => "ZeroP0",
            GcError::NonFiniteInput => "NonFiniteInput",
            GcError::Overflow(_) => "Overflow",
            GcError::NumericalInstability(_) => "NumericalInstability",
            GcError::NoKernelFound => "NoKernelFound",
            GcError::RankAmbiguity { .. } => "RankAmbiguity",
            GcError::ComplexRoot(_) => "ComplexRoot",
            GcError::RootOutOfRange(_) => "RootOutOfRange",
            GcError::IllConditioned { .. } => "IllConditioned",
            GcError::NegativeWeight(_) => "NegativeWeight",
            GcError::MultiplicityRoundingFailed { .. } => "MultiplicityRoundingFailed",
            GcError::NoViableStructure(_) => "NoViableStructure",
            GcError::EmptyRun => "EmptyRun",
            GcError::StructureMismatch(_) => "StructureMismatch",
            GcError::InvalidInput(_) => "InvalidInput",
        }
    }

    /// True for input/validation failures (CLI exit 2); false means a
    /// numerical failure (CLI exit 3).
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            GcError::DimensionMismatch(_)
                | GcError::NotSymmetric { .. }
                | GcError::NotPositiveDefinite { .. }
                | GcError::Unphysical { .. }
                | GcError::OddLength(_)
                | GcError::ZeroP0(_)
                | GcError::NonFiniteInput
                | GcError::EmptyRun
                | GcError::StructureMismatch(_)
                | GcError::InvalidInput(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, GcError>;
