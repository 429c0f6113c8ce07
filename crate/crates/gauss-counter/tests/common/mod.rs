//! Shared generators for the integration suites.

use nalgebra::{DMatrix, DVector};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use gauss_counter::{GaussianStateSpec, NormalParameters};

/// Random physical normal parameters: a random composition of 2S into
/// multiplicities, eigenvalues in [0.3, 5] with pairwise relative gaps of
/// at least 0.05, displacement zero with probability 0.3 and otherwise in
/// [0.1, 2]. Spectra failing the largest-smallest pairing physicality test
/// (tau >= 1) are redrawn.
pub fn rand_physical(s: usize, rng: &mut ChaCha8Rng) -> NormalParameters {
    let two_s = 2 * s as u32;
    loop {
        let mut parts: Vec<u32> = Vec::new();
        let mut rem = two_s;
        while rem > 0 {
            let q = rng.random_range(1..=rem);
            parts.push(q);
            rem -= q;
        }
        let h = parts.len();
        for _ in 0..300 {
            let mut lams: Vec<f64> = (0..h).map(|_| rng.random_range(0.3..5.0)).collect();
            lams.sort_by(|a, b| b.partial_cmp(a).unwrap());
            if lams.windows(2).any(|w| (w[0] - w[1]) / w[0] < 0.05) {
                continue;
            }
            let mut spectrum: Vec<f64> = Vec::with_capacity(two_s as usize);
            for (lam, &m) in lams.iter().zip(&parts) {
                for _ in 0..m {
                    spectrum.push(*lam);
                }
            }
            spectrum.sort_by(|a, b| b.partial_cmp(a).unwrap());
            let n = spectrum.len();
            let physical = (0..n).all(|i| spectrum[i] * spectrum[n - 1 - i] >= 1.0);
            if physical {
                let cs: Vec<f64> = (0..h)
                    .map(|_| {
                        if rng.random::<f64>() < 0.3 {
                            0.0
                        } else {
                            rng.random_range(0.1..2.0)
                        }
                    })
                    .collect();
                return NormalParameters::new(lams, parts, cs).unwrap();
            }
            break;
        }
    }
}

/// Haar-distributed orthogonal matrix: QR of a Gaussian matrix with the
/// R-diagonal sign fix.
pub fn haar_orthogonal(dim: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let a = DMatrix::from_fn(dim, dim, |_, _| rng.sample::<f64, _>(StandardNormal));
    let qr = a.qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..dim {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

/// Diagonal covariance realization of the parameters, displacement aligned
/// with the first coordinate of each eigenspace.
pub fn spec_from_params(np: &NormalParameters) -> GaussianStateSpec {
    let dim = 2 * np.mode_count;
    let mut diag = Vec::with_capacity(dim);
    let mut disp = Vec::with_capacity(dim);
    for (k, &m) in np.multiplicities.iter().enumerate() {
        for j in 0..m {
            diag.push(np.eigenvalues[k]);
            disp.push(if j == 0 { np.displacement_norms[k] } else { 0.0 });
        }
    }
    GaussianStateSpec {
        mode_count: np.mode_count,
        covariance: DMatrix::from_diagonal(&DVector::from_vec(diag)),
        displacement: DVector::from_vec(disp),
    }
}

/// Constructed degenerate cases: repeated eigenvalues (m > 2), zero
/// displacements, displacement on a single eigenspace.
pub fn degenerate_suite() -> Vec<(usize, NormalParameters)> {
    let cases: Vec<(usize, Vec<f64>, Vec<u32>, Vec<f64>)> = vec![
        (1, vec![2.0], vec![2], vec![0.0]),
        (1, vec![2.0], vec![2], vec![1.3]),
        (1, vec![1.6, 0.7], vec![1, 1], vec![0.9, 0.0]),
        (2, vec![1.8, 0.7], vec![2, 2], vec![0.0, 0.9]),
        (2, vec![3.0], vec![4], vec![0.0]),
        (2, vec![3.0], vec![4], vec![1.1]),
        (2, vec![2.5, 0.8], vec![2, 2], vec![0.0, 0.0]),
        (2, vec![2.5, 0.8], vec![2, 2], vec![1.2, 0.7]),
        (2, vec![4.0, 1.5, 0.6], vec![2, 1, 1], vec![0.0, 1.0, 0.0]),
        (3, vec![2.0], vec![6], vec![0.0]),
        (3, vec![2.0], vec![6], vec![1.5]),
        (3, vec![3.5, 1.2], vec![4, 2], vec![0.0, 0.0]),
        (3, vec![3.5, 1.2], vec![3, 3], vec![0.9, 1.4]),
        (3, vec![4.2, 2.0, 0.9], vec![2, 2, 2], vec![0.0, 0.0, 0.0]),
        (3, vec![4.2, 2.0, 0.9], vec![2, 2, 2], vec![1.1, 0.0, 0.8]),
        (3, vec![3.0, 1.0, 0.5], vec![4, 1, 1], vec![0.0, 1.2, 0.6]),
    ];
    cases
        .into_iter()
        .map(|(s, lam, m, c)| (s, NormalParameters::new(lam, m, c).unwrap()))
        .collect()
}
