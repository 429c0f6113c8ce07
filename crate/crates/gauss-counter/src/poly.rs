//! Real-coefficient polynomial root finding: companion-matrix eigenvalues
//! refined by a few Newton steps. Sized for the low-degree (<= ~12)
//! annihilator polynomials the inversion produces.

use nalgebra::{Complex, DMatrix};

use crate::error::{GcError, Result};

pub type C64 = Complex<f64>;

/// Horner evaluation of p and p' at z; coefficients highest degree first.
pub fn eval_with_derivative(coeffs: &[f64], z: C64) -> (C64, C64) {
    let mut p = C64::new(0.0, 0.0);
    let mut dp = C64::new(0.0, 0.0);
    for &c in coeffs {
        dp = dp * z + p;
        p = p * z + C64::new(c, 0.0);
    }
    (p, dp)
}

/// Backward error of a claimed root: |p(z)| relative to the evaluation
/// magnitude sum(|c_i| |z|^i).
pub fn backward_error(coeffs: &[f64], z: C64) -> f64 {
    let (p, _) = eval_with_derivative(coeffs, z);
    let mut scale = 0.0f64;
    let az = z.norm();
    for &c in coeffs {
        scale = scale * az + c.abs();
    }
    p.norm() / scale.max(f64::MIN_POSITIVE)
}

/// All complex roots of sum_i coeffs[i] z^(n-i) (highest degree first, like
/// the usual convention for companion-matrix solvers).
pub fn poly_roots_desc(coeffs: &[f64]) -> Result<Vec<C64>> {
    if coeffs.iter().any(|c| !c.is_finite()) {
        return Err(GcError::NonFiniteInput);
    }
    let amax = coeffs.iter().fold(0.0f64, |a, c| a.max(c.abs()));
    if amax == 0.0 {
        return Err(GcError::InvalidInput("zero polynomial".into()));
    }
    // strip negligible leading coefficients
    let start = coeffs
        .iter()
        .position(|c| c.abs() > 1e-300 * amax)
        .unwrap();
    let mut cs: Vec<f64> = coeffs[start..].to_vec();
    // roots at zero from trailing zeros
    let mut zero_roots = 0usize;
    while cs.len() > 1 && cs[cs.len() - 1] == 0.0 {
        cs.pop();
        zero_roots += 1;
    }
    let n = cs.len() - 1;
    let mut roots: Vec<C64> = Vec::with_capacity(n + zero_roots);
    if n == 1 {
        roots.push(C64::new(-cs[1] / cs[0], 0.0));
    } else if n >= 2 {
        let lead = cs[0];
        let mut comp = DMatrix::<f64>::zeros(n, n);
        for j in 0..n {
            comp[(0, j)] = -cs[j + 1] / lead;
        }
        for i in 1..n {
            comp[(i, i - 1)] = 1.0;
        }
        let eig = comp.complex_eigenvalues();
        roots.extend(eig.iter().copied());
        // Newton polish against the original polynomial
        for r in roots.iter_mut() {
            let mut z = *r;
            let mut best = z;
            let mut best_p = eval_with_derivative(&cs, z).0.norm();
            for _ in 0..6 {
                let (p, dp) = eval_with_derivative(&cs, z);
                if dp.norm() <= 1e-300 {
                    break;
                }
                z -= p / dp;
                let pn = eval_with_derivative(&cs, z).0.norm();
                if pn < best_p {
                    best_p = pn;
                    best = z;
                } else {
                    break;
                }
            }
            *r = best;
        }
    }
    for _ in 0..zero_roots {
        roots.push(C64::new(0.0, 0.0));
    }
    Ok(roots)
}
