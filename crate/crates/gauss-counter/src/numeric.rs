//! Numeric kernels: double-double arithmetic, compensated summation,
//! exact binomial coefficients, and a small non-negative least squares
//! solver.
//!
//! The moment/cumulant recursions cancel catastrophically in plain f64 when
//! the probability tail decays fast; running them in double-double (~31
//! significant digits) keeps every f64-rounded output entry faithful to the
//! exact value. `Dd` implements the classic error-free transformations
//! (Dekker's two-product via FMA, Knuth's two-sum).

use nalgebra::{DMatrix, DVector};

use crate::error::{GcError, Result};

/// Double-double value: `hi + lo` with |lo| <= ulp(hi)/2.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dd {
    pub hi: f64,
    pub lo: f64,
}

#[inline]
fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

#[inline]
fn quick_two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    (s, b - (s - a))
}

#[inline]
fn two_prod(a: f64, b: f64) -> (f64, f64) {
    let p = a * b;
    (p, a.mul_add(b, -p))
}

impl Dd {
    pub const ZERO: Dd = Dd { hi: 0.0, lo: 0.0 };
    pub const ONE: Dd = Dd { hi: 1.0, lo: 0.0 };

    #[inline]
    pub fn from_f64(x: f64) -> Dd {
        Dd { hi: x, lo: 0.0 }
    }

    /// Nearest double-double to a u128 (exact below 2^106).
    pub fn from_u128(x: u128) -> Dd {
        let hi = x as f64;
        // Remainder fits i128 because hi captures the top 53 bits.
        let r = x.wrapping_sub(hi as u128) as i128;
        Dd::renorm(hi, r as f64)
    }

    #[inline]
    fn renorm(hi: f64, lo: f64) -> Dd {
        let (s, e) = quick_two_sum(hi, lo);
        Dd { hi: s, lo: e }
    }

    #[inline]
    pub fn to_f64(self) -> f64 {
        self.hi + self.lo
    }

    #[inline]
    pub fn add(self, b: Dd) -> Dd {
        let (s1, s2) = two_sum(self.hi, b.hi);
        let (t1, t2) = two_sum(self.lo, b.lo);
        let s2 = s2 + t1;
        let (s1, s2) = quick_two_sum(s1, s2);
        let s2 = s2 + t2;
        let (s1, s2) = quick_two_sum(s1, s2);
        Dd { hi: s1, lo: s2 }
    }

    #[inline]
    pub fn sub(self, b: Dd) -> Dd {
        self.add(b.neg())
    }

    #[inline]
    pub fn neg(self) -> Dd {
        Dd { hi: -self.hi, lo: -self.lo }
    }

    #[inline]
    pub fn mul(self, b: Dd) -> Dd {
        let (p1, p2) = two_prod(self.hi, b.hi);
        let p2 = p2 + self.hi * b.lo + self.lo * b.hi;
        Dd::renorm(p1, p2)
    }

    pub fn div(self, b: Dd) -> Dd {
        let q1 = self.hi / b.hi;
        let r = self.sub(b.mul(Dd::from_f64(q1)));
        let q2 = r.hi / b.hi;
        let r = r.sub(b.mul(Dd::from_f64(q2)));
        let q3 = r.hi / b.hi;
        let (hi, lo) = quick_two_sum(q1, q2);
        Dd { hi, lo }.add(Dd::from_f64(q3))
    }

    /// Exact scaling by a power of two.
    #[inline]
    pub fn ldexp(self, n: i32) -> Dd {
        let s = (n as f64).exp2();
        Dd { hi: self.hi * s, lo: self.lo * s }
    }

    #[inline]
    pub fn scale(self, s: f64) -> Dd {
        self.mul(Dd::from_f64(s))
    }
}

/// Neumaier-compensated sum of an f64 slice.
pub fn comp_sum(xs: &[f64]) -> f64 {
    let mut s = 0.0;
    let mut c = 0.0;
    for &x in xs {
        let t = s + x;
        if s.abs() >= x.abs() {
            c += (s - t) + x;
        } else {
            c += (x - t) + s;
        }
        s = t;
    }
    s + c
}

/// Largest Pascal row that fits u128 without overflow.
pub const BINOM_MAX_N: usize = 130;

/// Pascal-triangle binomial table, rows 0..=BINOM_MAX_N, exact in u128.
pub struct BinomTable {
    rows: Vec<Vec<u128>>,
}

impl BinomTable {
    pub fn new(max_n: usize) -> BinomTable {
        let max_n = max_n.min(BINOM_MAX_N);
        let mut rows: Vec<Vec<u128>> = Vec::with_capacity(max_n + 1);
        rows.push(vec![1]);
        for n in 1..=max_n {
            let prev = &rows[n - 1];
            let mut row = vec![1u128; n + 1];
            for k in 1..n {
                row[k] = prev[k - 1] + prev[k];
            }
            rows.push(row);
        }
        BinomTable { rows }
    }

    /// Process-wide table at full size.
    pub fn shared() -> &'static BinomTable {
        static TABLE: std::sync::OnceLock<BinomTable> = std::sync::OnceLock::new();
        TABLE.get_or_init(|| BinomTable::new(BINOM_MAX_N))
    }

    #[inline]
    pub fn max_n(&self) -> usize {
        self.rows.len() - 1
    }

    #[inline]
    pub fn get(&self, n: usize, k: usize) -> Result<u128> {
        if n > self.max_n() {
            return Err(GcError::Overflow(format!(
                "binomial row {n} exceeds the exact table (max {})",
                self.max_n()
            )));
        }
        if k > n {
            return Ok(0);
        }
        Ok(self.rows[n][k])
    }

    #[inline]
    pub fn get_dd(&self, n: usize, k: usize) -> Result<Dd> {
        Ok(Dd::from_u128(self.get(n, k)?))
    }

    #[inline]
    pub fn get_f64(&self, n: usize, k: usize) -> Result<f64> {
        Ok(self.get(n, k)? as f64)
    }
}

/// Lawson-Hanson active-set non-negative least squares:
/// argmin ||A x - b|| subject to x >= 0. Sized for the small systems the
/// inversion engine produces (columns <= ~12).
pub fn nnls(a: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    let n = a.ncols();
    let mut x = DVector::<f64>::zeros(n);
    if n == 0 {
        return x;
    }
    let mut passive = vec![false; n];
    let scale = a.amax().max(1e-300);
    let tol = 1e-13 * scale * b.amax().max(1e-300);
    let max_outer = 3 * n + 10;

    let solve_passive = |passive: &[bool]| -> Option<DVector<f64>> {
        let cols: Vec<usize> = (0..n).filter(|&j| passive[j]).collect();
        if cols.is_empty() {
            return Some(DVector::zeros(0));
        }
        let ap = a.select_columns(cols.iter());
        ap.svd(true, true).solve(b, 1e-14 * scale).ok()
    };

    for _ in 0..max_outer {
        let resid = b - a * &x;
        let w = a.transpose() * resid;
        let mut best: Option<(usize, f64)> = None;
        for j in 0..n {
            if !passive[j] && w[j] > tol {
                if best.map_or(true, |(_, v)| w[j] > v) {
                    best = Some((j, w[j]));
                }
            }
        }
        let Some((jstar, _)) = best else { break };
        passive[jstar] = true;

        for _ in 0..max_outer {
            let Some(z) = solve_passive(&passive) else {
                passive[jstar] = false;
                return x;
            };
            let cols: Vec<usize> = (0..n).filter(|&j| passive[j]).collect();
            if cols.iter().enumerate().all(|(i, _)| z[i] > 0.0) {
                for (i, &j) in cols.iter().enumerate() {
                    x[j] = z[i];
                }
                break;
            }
            let mut alpha = f64::INFINITY;
            for (i, &j) in cols.iter().enumerate() {
                if z[i] <= 0.0 {
                    let denom = x[j] - z[i];
                    if denom > 0.0 {
                        alpha = alpha.min(x[j] / denom);
                    }
                }
            }
            if !alpha.is_finite() {
                alpha = 0.0;
            }
            for (i, &j) in cols.iter().enumerate() {
                x[j] += alpha * (z[i] - x[j]);
            }
            for j in 0..n {
                if passive[j] && x[j] <= 1e-300 {
                    x[j] = 0.0;
                    passive[j] = false;
                }
            }
        }
    }
    x
}
