//! Gaussian state representations and parameter extraction.
//!
//! A state is specified by a covariance matrix and displacement vector in
//! dimensionless quadrature units (vacuum = identity, quadrature ordering
//! (q1, p1, ..., qS, pS)). A total-photon counter resolves only the *normal
//! parameters*: the distinct eigenvalues of the covariance with their
//! multiplicities, and the norm of the displacement projected into each
//! eigenspace.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{GcError, Result};

pub const SCHEMA_VERSION: u32 = 1;
pub const TOL_SYM: f64 = 1e-10;
pub const TOL_DISTINCT_DEFAULT: f64 = 1e-8;

fn default_schema() -> u32 {
    SCHEMA_VERSION
}

/// Covariance + displacement, the physical input.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "SpecJson", into = "SpecJson")]
pub struct GaussianStateSpec {
    pub mode_count: usize,
    pub covariance: DMatrix<f64>,
    pub displacement: DVector<f64>,
}

#[derive(Serialize, Deserialize)]
struct SpecJson {
    #[serde(default = "default_schema")]
    schema_version: u32,
    mode_count: usize,
    covariance: Vec<Vec<f64>>,
    displacement: Vec<f64>,
}

impl TryFrom<SpecJson> for GaussianStateSpec {
    type Error = GcError;
    fn try_from(j: SpecJson) -> Result<GaussianStateSpec> {
        let dim = 2 * j.mode_count;
        if j.covariance.len() != dim || j.covariance.iter().any(|r| r.len() != dim) {
            return Err(GcError::DimensionMismatch(format!(
                "covariance must be {dim}x{dim}"
            )));
        }
        if j.displacement.len() != dim {
            return Err(GcError::DimensionMismatch(format!(
                "displacement must have length {dim}"
            )));
        }
        let g = DMatrix::from_fn(dim, dim, |r, c| j.covariance[r][c]);
        Ok(GaussianStateSpec {
            mode_count: j.mode_count,
            covariance: g,
            displacement: DVector::from_vec(j.displacement),
        })
    }
}

impl From<GaussianStateSpec> for SpecJson {
    fn from(s: GaussianStateSpec) -> SpecJson {
        let dim = 2 * s.mode_count;
        SpecJson {
            schema_version: SCHEMA_VERSION,
            mode_count: s.mode_count,
            covariance: (0..dim)
                .map(|r| (0..dim).map(|c| s.covariance[(r, c)]).collect())
                .collect(),
            displacement: s.displacement.iter().copied().collect(),
        }
    }
}

/// The invariant a total-photon counter sees: distinct eigenvalues
/// (decreasing), multiplicities, per-eigenspace displacement norms.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct NormalParameters {
    #[serde(default = "default_schema")]
    pub schema_version: u32,
    pub mode_count: usize,
    pub eigenvalues: Vec<f64>,
    pub multiplicities: Vec<u32>,
    pub displacement_norms: Vec<f64>,
}

impl NormalParameters {
    pub fn new(eigenvalues: Vec<f64>, multiplicities: Vec<u32>, displacement_norms: Vec<f64>) -> Result<NormalParameters> {
        let msum: u32 = multiplicities.iter().sum();
        if msum == 0 || msum % 2 != 0 {
            return Err(GcError::DimensionMismatch(format!(
                "multiplicities must sum to 2S, got {msum}"
            )));
        }
        let np = NormalParameters {
            schema_version: SCHEMA_VERSION,
            mode_count: (msum / 2) as usize,
            eigenvalues,
            multiplicities,
            displacement_norms,
        };
        np.validate()?;
        Ok(np)
    }

    pub fn validate(&self) -> Result<()> {
        let h = self.eigenvalues.len();
        if self.multiplicities.len() != h || self.displacement_norms.len() != h || h == 0 {
            return Err(GcError::DimensionMismatch(
                "eigenvalues, multiplicities, displacement_norms must share a nonzero length".into(),
            ));
        }
        if self
            .eigenvalues
            .iter()
            .chain(self.displacement_norms.iter())
            .any(|v| !v.is_finite())
        {
            return Err(GcError::NonFiniteInput);
        }
        if self.eigenvalues.iter().any(|&l| l <= 0.0) {
            return Err(GcError::InvalidInput("eigenvalues must be positive".into()));
        }
        for w in self.eigenvalues.windows(2) {
            if w[0] <= w[1] {
                return Err(GcError::InvalidInput(
                    "eigenvalues must be strictly decreasing".into(),
                ));
            }
        }
        if self.multiplicities.iter().any(|&m| m == 0) {
            return Err(GcError::InvalidInput("multiplicities must be >= 1".into()));
        }
        let msum: u32 = self.multiplicities.iter().sum();
        if msum as usize != 2 * self.mode_count {
            return Err(GcError::DimensionMismatch(format!(
                "sum of multiplicities {} != 2S = {}",
                msum,
                2 * self.mode_count
            )));
        }
        if self.displacement_norms.iter().any(|&c| c < 0.0) {
            return Err(GcError::InvalidInput(
                "displacement norms must be non-negative".into(),
            ));
        }
        Ok(())
    }
}

/// lambda' = lambda/(1+lambda) in (0,1), c' = (c/lambda)^2.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModifiedNormalParameters {
    pub lambda_prime: Vec<f64>,
    pub c_prime: Vec<f64>,
    pub multiplicities: Vec<u32>,
}

/// Thermal/squeezing readout of a sorted spectrum.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CanonicalParameters {
    pub thermal: Vec<f64>,
    pub squeezing: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ValidationMode {
    Mathematical,
    Physical,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ValidationReport {
    pub symmetry_defect: f64,
    pub min_eigenvalue: f64,
    pub min_symplectic: f64,
    pub passes: bool,
}

fn symmetrized(g: &DMatrix<f64>) -> DMatrix<f64> {
    (g + g.transpose()) * 0.5
}

/// Symplectic eigenvalues of a positive-definite covariance: the moduli of
/// the eigenvalues of Omega*Gamma, which come in pairs +-i*s.
pub fn symplectic_eigenvalues(g: &DMatrix<f64>) -> Vec<f64> {
    let dim = g.nrows();
    let s = dim / 2;
    let mut omega = DMatrix::<f64>::zeros(dim, dim);
    for k in 0..s {
        omega[(2 * k, 2 * k + 1)] = 1.0;
        omega[(2 * k + 1, 2 * k)] = -1.0;
    }
    let m = omega * g;
    let eig = m.complex_eigenvalues();
    let mut mods: Vec<f64> = eig.iter().map(|z| z.norm()).collect();
    mods.sort_by(|a, b| a.partial_cmp(b).unwrap());
    (0..s).map(|k| 0.5 * (mods[2 * k] + mods[2 * k + 1])).collect()
}

/// Check dimensions, symmetry, positive definiteness, and (in physical mode)
/// the uncertainty bound on the symplectic spectrum.
pub fn validate_state(spec: &GaussianStateSpec, mode: ValidationMode) -> Result<ValidationReport> {
    let dim = 2 * spec.mode_count;
    if spec.mode_count == 0
        || spec.covariance.nrows() != dim
        || spec.covariance.ncols() != dim
        || spec.displacement.len() != dim
    {
        return Err(GcError::DimensionMismatch(format!(
            "expected {dim}x{dim} covariance and length-{dim} displacement"
        )));
    }
    if spec
        .covariance
        .iter()
        .chain(spec.displacement.iter())
        .any(|v| !v.is_finite())
    {
        return Err(GcError::NonFiniteInput);
    }
    let defect = (&spec.covariance - spec.covariance.transpose()).amax();
    if defect > TOL_SYM {
        return Err(GcError::NotSymmetric { defect });
    }
    let sym = symmetrized(&spec.covariance);
    let eig = sym.clone().symmetric_eigen();
    let min_eig = eig.eigenvalues.min();
    if min_eig <= 0.0 {
        return Err(GcError::NotPositiveDefinite { min_eig });
    }
    let symp = symplectic_eigenvalues(&sym);
    let min_symp = symp.iter().cloned().fold(f64::INFINITY, f64::min);
    if mode == ValidationMode::Physical && min_symp < 1.0 - 1e-9 {
        return Err(GcError::Unphysical { min_symp });
    }
    Ok(ValidationReport {
        symmetry_defect: defect,
        min_eigenvalue: min_eig,
        min_symplectic: min_symp,
        passes: true,
    })
}

/// Diagonalize, cluster the spectrum at `tol_distinct` relative gap, and
/// project the displacement onto each eigenspace.
pub fn extract_normal_parameters(
    spec: &GaussianStateSpec,
    tol_distinct: f64,
) -> Result<NormalParameters> {
    validate_state(spec, ValidationMode::Mathematical)?;
    let sym = symmetrized(&spec.covariance);
    let eig = sym.symmetric_eigen();
    let dim = 2 * spec.mode_count;
    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].partial_cmp(&eig.eigenvalues[a]).unwrap());
    let vals: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();

    // Transitive closure over adjacent relative gaps. A gap within a factor
    // 2 of the threshold means the clustering flips under small tolerance
    // perturbations, which callers must resolve explicitly.
    let mut clusters: Vec<Vec<usize>> = vec![vec![0]];
    for i in 1..dim {
        let gap = (vals[i - 1] - vals[i]) / vals[i - 1].max(vals[i]);
        if gap > 0.5 * tol_distinct && gap < 2.0 * tol_distinct {
            return Err(GcError::ClusterAmbiguity { gap, tol: tol_distinct });
        }
        if gap <= tol_distinct {
            clusters.last_mut().unwrap().push(i);
        } else {
            clusters.push(vec![i]);
        }
    }

    let mut lam = Vec::with_capacity(clusters.len());
    let mut mult = Vec::with_capacity(clusters.len());
    let mut cnorm = Vec::with_capacity(clusters.len());
    for cl in &clusters {
        let mean = cl.iter().map(|&i| vals[i]).sum::<f64>() / cl.len() as f64;
        lam.push(mean);
        mult.push(cl.len() as u32);
        let mut s2 = 0.0;
        for &i in cl {
            let v = eig.eigenvectors.column(order[i]);
            let proj = v.dot(&spec.displacement);
            s2 += proj * proj;
        }
        cnorm.push(s2.sqrt());
    }
    NormalParameters::new(lam, mult, cnorm)
}

/// lambda -> lambda/(1+lambda), c -> (c/lambda)^2.
pub fn to_modified(np: &NormalParameters) -> Result<ModifiedNormalParameters> {
    np.validate()?;
    let lambda_prime: Vec<f64> = np.eigenvalues.iter().map(|&l| l / (1.0 + l)).collect();
    let c_prime: Vec<f64> = np
        .eigenvalues
        .iter()
        .zip(&np.displacement_norms)
        .map(|(&l, &c)| (c / l) * (c / l))
        .collect();
    Ok(ModifiedNormalParameters {
        lambda_prime,
        c_prime,
        multiplicities: np.multiplicities.clone(),
    })
}

/// Inverse of `to_modified`.
pub fn from_modified(mp: &ModifiedNormalParameters) -> Result<NormalParameters> {
    let mut lam = Vec::with_capacity(mp.lambda_prime.len());
    for &lp in &mp.lambda_prime {
        if !(0.0 < lp && lp < 1.0) {
            return Err(GcError::LambdaPrimeOutOfRange(lp));
        }
        lam.push(lp / (1.0 - lp));
    }
    let c: Vec<f64> = lam
        .iter()
        .zip(&mp.c_prime)
        .map(|(&l, &cp)| l * cp.max(0.0).sqrt())
        .collect();
    NormalParameters::new(lam, mp.multiplicities.clone(), c)
}

/// Pair the sorted spectrum largest-with-smallest:
/// tau_k = sqrt(g_k * g_{2S+1-k}), xi_k = log(g_k / g_{2S+1-k}) / 4.
///
/// The xi normalization matches the squeezed-vacuum covariance convention
/// diag(e^{2xi}, e^{-2xi}): a pure single-mode state squeezed by xi has
/// spectrum {e^{2xi}, e^{-2xi}} and reads back as (tau, xi) = (1, xi).
pub fn canonical_parameters(spectrum: &[f64]) -> Result<CanonicalParameters> {
    let n = spectrum.len();
    if n % 2 != 0 || n == 0 {
        return Err(GcError::OddLength(n));
    }
    if spectrum.iter().any(|v| !v.is_finite() || *v <= 0.0) {
        return Err(GcError::NonFiniteInput);
    }
    for w in spectrum.windows(2) {
        if w[0] < w[1] {
            return Err(GcError::InvalidInput(
                "spectrum must be sorted non-increasing".into(),
            ));
        }
    }
    let s = n / 2;
    let mut thermal = Vec::with_capacity(s);
    let mut squeezing = Vec::with_capacity(s);
    for k in 0..s {
        let hi = spectrum[k];
        let lo = spectrum[n - 1 - k];
        thermal.push((hi * lo).sqrt());
        squeezing.push(0.25 * (hi / lo).ln());
    }
    Ok(CanonicalParameters { thermal, squeezing })
}

/// Expand clustered normal parameters back to the full 2S-length spectrum,
/// sorted non-increasing.
pub fn full_spectrum(np: &NormalParameters) -> Vec<f64> {
    let mut out = Vec::with_capacity(2 * np.mode_count);
    for (l, m) in np.eigenvalues.iter().zip(&np.multiplicities) {
        for _ in 0..*m {
            out.push(*l);
        }
    }
    out
}
