//! Banded LU factorization with partial pivoting.
//!
//! Row `r` stores columns `r - kl ..= r + kl + ku`; the extra `kl`
//! super-diagonals hold fill-in from row interchanges.

use thiserror::Error;

use super::sparse::CsrMatrix;
use crate::scalar::Scalar;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FactorError {
    #[error("matrix is singular to working precision at column {0}")]
    Singular(usize),
    #[error("matrix must be square, got {0}x{1}")]
    NotSquare(usize, usize),
}

#[derive(Debug, Clone)]
pub struct BandedLu<T> {
    n: usize,
    kl: usize,
    ku: usize,
    width: usize,
    band: Vec<T>,
    pivots: Vec<usize>,
}

impl<T: Scalar> BandedLu<T> {
    /// Factors `alpha * I + beta * m`.
    pub fn factor_shifted(m: &CsrMatrix<T>, alpha: T, beta: T) -> Result<Self, FactorError> {
        if m.nrows() != m.ncols() {
            return Err(FactorError::NotSquare(m.nrows(), m.ncols()));
        }
        let n = m.nrows();
        let (kl, ku) = m.bandwidths();
        let width = 2 * kl + ku + 1;
        let mut band = vec![T::zero(); n * width];
        for (r, c, v) in m.iter() {
            band[r * width + c + kl - r] += beta * v;
        }
        for r in 0..n {
            band[r * width + kl] += alpha;
        }
        let mut lu = Self { n, kl, ku, width, band, pivots: vec![0; n] };
        lu.eliminate()?;
        Ok(lu)
    }

    pub fn factor(m: &CsrMatrix<T>) -> Result<Self, FactorError> {
        Self::factor_shifted(m, T::zero(), T::one())
    }

    #[inline]
    fn at(&self, r: usize, c: usize) -> usize {
        r * self.width + c + self.kl - r
    }

    fn eliminate(&mut self) -> Result<(), FactorError> {
        let (n, kl, ku) = (self.n, self.kl, self.ku);
        let scale = self.band.iter().fold(T::zero(), |m, &v| if v.abs() > m { v.abs() } else { m });
        let tiny = scale * T::epsilon() * T::of_usize(n.max(1));
        for c in 0..n {
            let last_row = (c + kl).min(n - 1);
            let mut p = c;
            let mut best = self.band[self.at(c, c)].abs();
            for r in c + 1..=last_row {
                let a = self.band[self.at(r, c)].abs();
                if a > best {
                    best = a;
                    p = r;
                }
            }
            if !(best > tiny) {
                return Err(FactorError::Singular(c));
            }
            self.pivots[c] = p;
            let last_col = (c + kl + ku).min(n - 1);
            if p != c {
                for col in c..=last_col {
                    let (a, b) = (self.at(c, col), self.at(p, col));
                    self.band.swap(a, b);
                }
            }
            let pivot = self.band[self.at(c, c)];
            for r in c + 1..=last_row {
                let ir = self.at(r, c);
                let l = self.band[ir] / pivot;
                self.band[ir] = l;
                if l == T::zero() {
                    continue;
                }
                let (row_c, row_r) = (c * self.width, r * self.width);
                for col in c + 1..=last_col {
                    let u = self.band[row_c + col + kl - c];
                    self.band[row_r + col + kl - r] -= l * u;
                }
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn solve_in_place(&self, b: &mut [T]) {
        let (n, kl, ku) = (self.n, self.kl, self.ku);
        assert_eq!(b.len(), n);
        for c in 0..n {
            let p = self.pivots[c];
            if p != c {
                b.swap(c, p);
            }
            let bc = b[c];
            if bc != T::zero() {
                for r in c + 1..=(c + kl).min(n - 1) {
                    b[r] -= self.band[self.at(r, c)] * bc;
                }
            }
        }
        for r in (0..n).rev() {
            let mut s = b[r];
            for col in r + 1..=(r + kl + ku).min(n - 1) {
                s -= self.band[self.at(r, col)] * b[col];
            }
            b[r] = s / self.band[self.at(r, r)];
        }
    }

    pub fn solve(&self, b: &[T]) -> Vec<T> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        x
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_banded(n: usize, kl: usize, ku: usize, seed: u64) -> CsrMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut t = Vec::new();
        for r in 0..n {
            for c in r.saturating_sub(kl)..=(r + ku).min(n - 1) {
                // weak diagonal forces pivoting
                let v: f64 = rng.gen_range(-1.0..1.0);
                t.push((r, c, if r == c { 0.01 * v } else { v }));
            }
        }
        CsrMatrix::from_triplets(n, n, t)
    }

    #[test]
    fn solves_random_banded_systems() {
        for (seed, &(n, kl, ku)) in [(40, 3, 2), (57, 5, 5), (10, 1, 4), (6, 5, 5)].iter().enumerate() {
            let m = random_banded(n, kl, ku, seed as u64);
            let x: Vec<f64> = (0..n).map(|i| (i as f64 * 0.7).sin()).collect();
            let b = m.mul_vec(&x);
            let lu = BandedLu::factor(&m).unwrap();
            let y = lu.solve(&b);
            let err = x.iter().zip(&y).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            assert!(err < 1e-9, "n={n} kl={kl} ku={ku}: {err}");
        }
    }

    #[test]
    fn shifted_factorization() {
        let m = random_banded(30, 2, 2, 9);
        let lu = BandedLu::factor_shifted(&m, 3.0, -0.5).unwrap();
        let x = vec![1.0; 30];
        let b: Vec<f64> = m.mul_vec(&x).iter().zip(&x).map(|(mx, x)| 3.0 * x - 0.5 * mx).collect();
        let y = lu.solve(&b);
        assert!(y.iter().all(|v| (v - 1.0).abs() < 1e-10));
    }

    #[test]
    fn singular_detected() {
        let m = CsrMatrix::from_triplets(3, 3, vec![(0, 0, 1.0), (1, 0, 1.0), (2, 2, 1.0)]);
        assert_eq!(BandedLu::factor(&m).unwrap_err(), FactorError::Singular(1));
    }
}
