//! Conversions between moments of r², cumulants, and the normalized
//! coefficients f_n = kappa_n/(n-1)! that drive the inversion algebra.
//!
//! Two parallel implementations live here. The public f64 functions follow
//! the raw recursions directly. The internal chain used by the forward and
//! inverse engines works in a scaled basis (mu~_l = 2^l mu_l/l!,
//! kappa~_n = 2^n kappa_n/n!) with double-double arithmetic: the scaled
//! recursions keep every intermediate O(1)-bounded for states in the domain,
//! and the extra precision holds the probability->f round trip at the 1e-9
//! relative level even at n = 24.

use crate::error::{GcError, Result};
use crate::numeric::{comp_sum, BinomTable, Dd};

fn factorial_f64(n: usize) -> Result<f64> {
    if n <= 33 {
        let mut acc: u128 = 1;
        for k in 2..=n as u128 {
            acc *= k;
        }
        Ok(acc as f64)
    } else {
        let mut acc = 1.0f64;
        for k in 2..=n {
            acc *= k as f64;
            if !acc.is_finite() {
                return Err(GcError::Overflow(format!("{n}! exceeds f64 range")));
            }
        }
        Ok(acc)
    }
}

/// kappa_n = mu_n - sum_{k=1}^{n-1} binom(n-1, k-1) kappa_k mu_{n-k},
/// f_n = kappa_n/(n-1)!.
pub fn moments_to_f(mu: &[f64]) -> Result<Vec<f64>> {
    if mu.iter().any(|v| !v.is_finite()) {
        return Err(GcError::NonFiniteInput);
    }
    let n = mu.len();
    let binom = BinomTable::shared();
    let mut kappa = Vec::with_capacity(n);
    let mut f = Vec::with_capacity(n);
    for i in 1..=n {
        let mut terms = Vec::with_capacity(i);
        terms.push(mu[i - 1]);
        for k in 1..i {
            terms.push(-binom.get_f64(i - 1, k - 1)? * kappa[k - 1] * mu[i - k - 1]);
        }
        let kap = comp_sum(&terms);
        kappa.push(kap);
        f.push(kap / factorial_f64(i - 1)?);
    }
    Ok(f)
}

/// Exact inverse recursion: kappa_n = (n-1)! f_n, then
/// mu_n = kappa_n + sum_{k=1}^{n-1} binom(n-1, k-1) kappa_k mu_{n-k}.
pub fn f_to_moments(f: &[f64]) -> Result<Vec<f64>> {
    if f.iter().any(|v| !v.is_finite()) {
        return Err(GcError::NonFiniteInput);
    }
    let n = f.len();
    let binom = BinomTable::shared();
    let mut kappa = Vec::with_capacity(n);
    let mut mu = Vec::with_capacity(n);
    for i in 1..=n {
        kappa.push(f[i - 1] * factorial_f64(i - 1)?);
        let mut terms = Vec::with_capacity(i);
        terms.push(kappa[i - 1]);
        for k in 1..i {
            terms.push(binom.get_f64(i - 1, k - 1)? * kappa[k - 1] * mu[i - k - 1]);
        }
        mu.push(comp_sum(&terms));
    }
    Ok(mu)
}

/// Scaled-basis chain, forward direction: f_1..f_N (double-double) to the
/// relative probabilities p~_k = p_k/p_0 for k = 1..N.
pub(crate) fn f_to_relative_probs_dd(f: &[Dd], s: usize) -> Result<Vec<Dd>> {
    let n = f.len();
    let binom = BinomTable::shared();
    // kappa~_n = 2^n f_n / n
    let mut kt = Vec::with_capacity(n + 1);
    kt.push(Dd::ZERO);
    for i in 1..=n {
        kt.push(f[i - 1].ldexp(i as i32).div(Dd::from_f64(i as f64)));
    }
    // mu~_n = kappa~_n + (1/n) sum_{k=1}^{n-1} k kappa~_k mu~_{n-k}
    let mut mt = Vec::with_capacity(n + 1);
    mt.push(Dd::ONE);
    for i in 1..=n {
        let mut acc = Dd::ZERO;
        for k in 1..i {
            acc = acc.add(kt[k].scale(k as f64).mul(mt[i - k]));
        }
        mt.push(kt[i].add(acc.div(Dd::from_f64(i as f64))));
    }
    // p~_k = sum_{l=0}^{k} (-1)^{k+l} binom(k+S-1, l+S-1) mu~_l
    let mut pt = Vec::with_capacity(n);
    for k in 1..=n {
        let mut acc = Dd::ZERO;
        for l in 0..=k {
            let b = binom.get_dd(k + s - 1, l + s - 1)?;
            let term = b.mul(mt[l]);
            acc = if (k + l) % 2 == 0 { acc.add(term) } else { acc.sub(term) };
        }
        pt.push(acc);
    }
    Ok(pt)
}

/// Scaled-basis chain, inverse direction: relative probabilities
/// p~_1..p~_n to f_1..f_n, all double-double.
pub(crate) fn relative_probs_to_f_dd(pt: &[Dd], s: usize) -> Result<Vec<Dd>> {
    let n = pt.len();
    let binom = BinomTable::shared();
    // forward substitution on the unit-diagonal alternating system
    let mut mt = Vec::with_capacity(n + 1);
    mt.push(Dd::ONE);
    for k in 1..=n {
        let mut acc = pt[k - 1];
        for l in 0..k {
            let b = binom.get_dd(k + s - 1, l + s - 1)?;
            let term = b.mul(mt[l]);
            acc = if (k + l) % 2 == 0 { acc.sub(term) } else { acc.add(term) };
        }
        mt.push(acc);
    }
    // kappa~_n = mu~_n - (1/n) sum_{k=1}^{n-1} k kappa~_k mu~_{n-k}
    let mut kt: Vec<Dd> = Vec::with_capacity(n + 1);
    kt.push(Dd::ZERO);
    for i in 1..=n {
        let mut acc = Dd::ZERO;
        for k in 1..i {
            acc = acc.add(kt[k].scale(k as f64).mul(mt[i - k]));
        }
        kt.push(mt[i].sub(acc.div(Dd::from_f64(i as f64))));
    }
    // f_n = n kappa~_n / 2^n
    Ok((1..=n).map(|i| kt[i].scale(i as f64).ldexp(-(i as i32))).collect())
}

/// p_0..p_n -> f_1..f_{n_max} through the scaled double-double chain.
pub fn probabilities_to_f(p: &[f64], s: usize, n_max: usize) -> Result<Vec<f64>> {
    if s == 0 || n_max == 0 {
        return Err(GcError::DimensionMismatch(
            "need S >= 1 and n_max >= 1".into(),
        ));
    }
    if p.len() < n_max + 1 {
        return Err(GcError::DimensionMismatch(format!(
            "need {} probabilities, got {}",
            n_max + 1,
            p.len()
        )));
    }
    if p.iter().take(n_max + 1).any(|v| !v.is_finite()) {
        return Err(GcError::NonFiniteInput);
    }
    if p[0] <= 0.0 {
        return Err(GcError::ZeroP0(p[0]));
    }
    let p0 = Dd::from_f64(p[0]);
    let pt: Vec<Dd> = (1..=n_max).map(|k| Dd::from_f64(p[k]).div(p0)).collect();
    let f = relative_probs_to_f_dd(&pt, s)?;
    let out: Vec<f64> = f.iter().map(|d| d.to_f64()).collect();
    if out.iter().any(|v| !v.is_finite()) {
        return Err(GcError::NumericalInstability(
            "cumulant chain produced non-finite f".into(),
        ));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn thermal_moments_to_f() {
        let f = moments_to_f(&[0.75, 1.125]).unwrap();
        assert!((f[0] - 0.75).abs() < 1e-15);
        assert!((f[1] - 0.5625).abs() < 1e-15);
    }

    #[test]
    fn vacuum_moments_to_f() {
        let f = moments_to_f(&[0.5, 0.5]).unwrap();
        assert!((f[0] - 0.5).abs() < 1e-15);
        assert!((f[1] - 0.25).abs() < 1e-15);
    }

    #[test]
    fn thermal_third_order() {
        // mu_k = theta^k 2^k k!/2^k for exponential r^2 with theta = 3/4:
        // mu_3 = 6 theta^3 = 81/32; f_3 = theta^3 = 27/64.
        let f = moments_to_f(&[0.75, 1.125, 81.0 / 32.0]).unwrap();
        assert!((f[2] - 27.0 / 64.0).abs() < 1e-15);
    }

    #[test]
    fn f_to_moments_examples() {
        let mu = f_to_moments(&[0.5, 0.25]).unwrap();
        assert!((mu[0] - 0.5).abs() < 1e-15);
        assert!((mu[1] - 0.5).abs() < 1e-15);
        let mu = f_to_moments(&[0.75, 0.5625]).unwrap();
        assert!((mu[1] - 1.125).abs() < 1e-15);
        let mu = f_to_moments(&[0.37]).unwrap();
        assert_eq!(mu, vec![0.37]);
    }

    #[test]
    fn bijectivity_random() {
        use rand::prelude::*;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..50 {
            let n = rng.random_range(1..=24);
            let f: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let mu = f_to_moments(&f).unwrap();
            let back = moments_to_f(&mu).unwrap();
            for (a, b) in f.iter().zip(&back) {
                assert!((a - b).abs() < 1e-10 * a.abs().max(1.0));
            }
        }
    }

    #[test]
    fn probabilities_to_f_thermal() {
        let p: Vec<f64> = (0..=8).map(|n| 0.5f64.powi(n + 1)).collect();
        let f = probabilities_to_f(&p, 1, 8).unwrap();
        for (i, &fi) in f.iter().enumerate() {
            let want = 0.75f64.powi(i as i32 + 1);
            assert!((fi - want).abs() < 1e-12 * want, "n={} got {} want {}", i + 1, fi, want);
        }
    }

    #[test]
    fn probabilities_to_f_coherent() {
        let e = std::f64::consts::E;
        let mut p = Vec::new();
        let mut fact = 1.0;
        for n in 0..=8 {
            if n > 0 {
                fact *= n as f64;
            }
            p.push(1.0 / (e * fact));
        }
        let f = probabilities_to_f(&p, 1, 8).unwrap();
        for (i, &fi) in f.iter().enumerate() {
            let n = i + 1;
            let want = (1.0 + n as f64) * 0.5f64.powi(n as i32);
            assert!((fi - want).abs() < 1e-12 * want.max(1e-3));
        }
    }

    #[test]
    fn probabilities_to_f_vacuum() {
        let mut p = vec![0.0; 9];
        p[0] = 1.0;
        let f = probabilities_to_f(&p, 1, 8).unwrap();
        for (i, &fi) in f.iter().enumerate() {
            let want = 0.5f64.powi(i as i32 + 1);
            assert!((fi - want).abs() < 1e-13);
        }
    }

    #[test]
    fn dd_chain_round_trip() {
        use rand::prelude::*;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for s in 1..=3usize {
            let n = 8 * s;
            let f: Vec<Dd> = (0..n)
                .map(|i| Dd::from_f64(rng.random_range(0.01..0.9) * 0.8f64.powi(i as i32)))
                .collect();
            let pt = f_to_relative_probs_dd(&f, s).unwrap();
            let back = relative_probs_to_f_dd(&pt, s).unwrap();
            for (a, b) in f.iter().zip(&back) {
                let diff = (a.to_f64() - b.to_f64()).abs();
                assert!(diff < 1e-14 * a.to_f64().abs().max(1e-6));
            }
        }
    }

    #[test]
    fn zero_p0_propagates() {
        let p = vec![0.0, 1.0];
        assert!(matches!(probabilities_to_f(&p, 1, 1), Err(GcError::ZeroP0(_))));
    }

    #[test]
    fn non_finite_rejected() {
        assert!(matches!(moments_to_f(&[f64::NAN]), Err(GcError::NonFiniteInput)));
        assert!(matches!(f_to_moments(&[f64::INFINITY]), Err(GcError::NonFiniteInput)));
    }
}
