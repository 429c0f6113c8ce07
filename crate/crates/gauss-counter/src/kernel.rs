//! Wigner polynomials of the n-photon projector and the triangular map
//! between photon-number probabilities and moments of r².
//!
//! The total-photon-number projector onto n photons has Wigner function
//! e^{-r²}·P_n(r²) where P_n is a degree-n polynomial (a scaled Laguerre
//! polynomial). Integrating it against a Gaussian state links the
//! probabilities p_n to the moments of r² under the tilted distribution W'
//! through an affine lower-triangular system.

use nalgebra::{DMatrix, DVector};

use crate::error::{GcError, Result};
use crate::numeric::{BinomTable, Dd};

/// P_n(x) = Σ_l a_l x^l with a_l = (-1)^{n+l}·2^l·binom(n+S-1, l+S-1)/(π^S·l!).
#[derive(Debug, Clone)]
pub struct ProjectorPolynomial {
    pub mode_count: usize,
    pub photon_number: usize,
    pub coefficients: Vec<f64>,
}

impl ProjectorPolynomial {
    /// Horner evaluation at x = r².
    pub fn eval(&self, x: f64) -> f64 {
        let mut acc = 0.0f64;
        for &a in self.coefficients.iter().rev() {
            acc = acc.mul_add(x, a);
        }
        acc
    }
}

/// Build P_n by the term-ratio recursion
/// a_l / a_{l-1} = -2(n-l+1)/(l(l+S-1)), seeded at
/// a_0 = (-1)^n·binom(n+S-1, S-1)/π^S. The ratio factors are small
/// rationals, so no factorial is ever formed.
pub fn projector_polynomial(s: usize, n: usize) -> Result<ProjectorPolynomial> {
    if s == 0 {
        return Err(GcError::DimensionMismatch("mode count must be >= 1".into()));
    }
    let pi_s = std::f64::consts::PI.powi(s as i32);
    let mut a0 = 1.0;
    for j in 0..s - 1 {
        a0 *= (n + s - 1 - j) as f64 / (s - 1 - j) as f64;
    }
    a0 /= pi_s;
    if n % 2 == 1 {
        a0 = -a0;
    }
    let mut coeff = Vec::with_capacity(n + 1);
    coeff.push(a0);
    for l in 1..=n {
        let ratio = -2.0 * (n - l + 1) as f64 / (l * (l + s - 1)) as f64;
        let next = coeff[l - 1] * ratio;
        if !next.is_finite() {
            return Err(GcError::Overflow(format!(
                "projector coefficient a_{l} overflows at S={s}, n={n}"
            )));
        }
        coeff.push(next);
    }
    Ok(ProjectorPolynomial {
        mode_count: s,
        photon_number: n,
        coefficients: coeff,
    })
}

/// Affine system p_k/p_0 = b_k + Σ_{l=1}^{k} M_{kl}·μ_l.
#[derive(Debug, Clone)]
pub struct MomentProbabilityMap {
    pub mode_count: usize,
    pub size: usize,
    pub matrix: DMatrix<f64>,
    pub offset: DVector<f64>,
}

/// M_{kl} = (-1)^{k+l}·(2^l/l!)·binom(k+S-1, l+S-1) for k >= l >= 1,
/// b_k = (-1)^k·binom(k+S-1, S-1).
pub fn moment_probability_map(s: usize, n: usize) -> Result<MomentProbabilityMap> {
    if s == 0 || n == 0 {
        return Err(GcError::DimensionMismatch(
            "moment map needs S >= 1 and size >= 1".into(),
        ));
    }
    let binom = BinomTable::shared();
    let mut m = DMatrix::<f64>::zeros(n, n);
    let mut b = DVector::<f64>::zeros(n);
    // 2^l/l! built multiplicatively; bounded by 2 so never overflows.
    let mut pow_fact = vec![0.0f64; n + 1];
    pow_fact[0] = 1.0;
    for l in 1..=n {
        pow_fact[l] = pow_fact[l - 1] * 2.0 / l as f64;
    }
    for k in 1..=n {
        let bk = binom.get_f64(k + s - 1, s - 1)?;
        b[k - 1] = if k % 2 == 0 { bk } else { -bk };
        for l in 1..=k {
            let c = binom.get_f64(k + s - 1, l + s - 1)?;
            let sign = if (k + l) % 2 == 0 { 1.0 } else { -1.0 };
            m[(k - 1, l - 1)] = sign * pow_fact[l] * c;
        }
    }
    Ok(MomentProbabilityMap {
        mode_count: s,
        size: n,
        matrix: m,
        offset: b,
    })
}

// 2^l/l! as double-double, built by exact-in, rounded-mul recursion.
fn scale_factors_dd(n: usize) -> Vec<Dd> {
    let mut out = Vec::with_capacity(n + 1);
    out.push(Dd::ONE);
    for l in 1..=n {
        out.push(out[l - 1].ldexp(1).div(Dd::from_f64(l as f64)));
    }
    out
}

/// Invert the affine system by forward substitution:
/// μ_k = (p_k/p_0 - b_k - Σ_{l<k} M_{kl}·μ_l) / M_{kk}.
///
/// Internally works on the scaled variables μ̃_l = (2^l/l!)·μ_l, where the
/// system has unit diagonal and pure-binomial coefficients; double-double
/// arithmetic keeps the alternating cancellations below f64 resolution even
/// at k = 24. The tiny diagonal 2^k/k! of the raw system would otherwise
/// amplify rounding noise beyond any useful accuracy.
pub fn probabilities_to_moments(p: &[f64], s: usize, n: usize) -> Result<Vec<f64>> {
    if p.len() < n + 1 {
        return Err(GcError::DimensionMismatch(format!(
            "need {} probabilities, got {}",
            n + 1,
            p.len()
        )));
    }
    if p.iter().take(n + 1).any(|v| !v.is_finite()) {
        return Err(GcError::NonFiniteInput);
    }
    if p[0] <= 0.0 {
        return Err(GcError::ZeroP0(p[0]));
    }
    let binom = BinomTable::shared();
    let p0 = Dd::from_f64(p[0]);
    let mut mt = Vec::with_capacity(n + 1);
    mt.push(Dd::ONE);
    for k in 1..=n {
        let mut acc = Dd::from_f64(p[k]).div(p0);
        for l in 0..k {
            let b = binom.get_dd(k + s - 1, l + s - 1)?;
            let term = b.mul(mt[l]);
            acc = if (k + l) % 2 == 0 { acc.sub(term) } else { acc.add(term) };
        }
        mt.push(acc);
    }
    let sf = scale_factors_dd(n);
    let mut mu = Vec::with_capacity(n);
    for k in 1..=n {
        let v = mt[k].div(sf[k]).to_f64();
        if !v.is_finite() {
            return Err(GcError::NumericalInstability(format!(
                "moment mu_{k} not finite"
            )));
        }
        mu.push(v);
    }
    Ok(mu)
}

/// Forward direction of the affine map, mainly for tests and the forward
/// engine: given moments, produce relative probabilities p_k/p_0.
pub fn moments_to_relative_probabilities(mu: &[f64], s: usize) -> Result<Vec<f64>> {
    if s == 0 {
        return Err(GcError::DimensionMismatch("mode count must be >= 1".into()));
    }
    if mu.iter().any(|v| !v.is_finite()) {
        return Err(GcError::NonFiniteInput);
    }
    let n = mu.len();
    let binom = BinomTable::shared();
    let sf = scale_factors_dd(n);
    let mt: Vec<Dd> = std::iter::once(Dd::ONE)
        .chain((1..=n).map(|l| sf[l].scale(mu[l - 1])))
        .collect();
    let mut out = Vec::with_capacity(n);
    for k in 1..=n {
        let mut acc = Dd::ZERO;
        for l in 0..=k {
            let b = binom.get_dd(k + s - 1, l + s - 1)?;
            let term = b.mul(mt[l]);
            acc = if (k + l) % 2 == 0 { acc.add(term) } else { acc.sub(term) };
        }
        out.push(acc.to_f64());
    }
    Ok(out)
}
