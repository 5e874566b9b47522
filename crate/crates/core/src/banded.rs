//! Banded matrices and LU factorization with partial pivoting.
//!
//! Storage follows the LAPACK `gbtrf` layout idea (room for `kl` extra
//! super-diagonals of fill-in) but row-major: row `i` keeps columns
//! `i - kl ..= i + ku + kl`.

use std::ops::{Add, Div, Mul, Neg, Sub};

use num_complex::Complex64;

use crate::error::{LabError, Result};

pub trait Scalar:
    Copy
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + PartialEq
    + std::fmt::Debug
    + Send
    + Sync
{
    fn zero() -> Self;
    fn one() -> Self;
    fn modulus(self) -> f64;
    fn from_real(x: f64) -> Self;
}

impl Scalar for f64 {
    fn zero() -> Self {
        0.0
    }
    fn one() -> Self {
        1.0
    }
    fn modulus(self) -> f64 {
        self.abs()
    }
    fn from_real(x: f64) -> Self {
        x
    }
}

impl Scalar for Complex64 {
    fn zero() -> Self {
        Complex64::new(0.0, 0.0)
    }
    fn one() -> Self {
        Complex64::new(1.0, 0.0)
    }
    fn modulus(self) -> f64 {
        self.norm()
    }
    fn from_real(x: f64) -> Self {
        Complex64::new(x, 0.0)
    }
}

#[derive(Debug, Clone)]
pub struct Banded<T> {
    n: usize,
    kl: usize,
    ku: usize,
    width: usize,
    data: Vec<T>,
}

impl<T: Scalar> Banded<T> {
    pub fn zeros(n: usize, kl: usize, ku: usize) -> Self {
        let width = 2 * kl + ku + 1;
        Self {
            n,
            kl,
            ku,
            width,
            data: vec![T::zero(); n * width],
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn lower(&self) -> usize {
        self.kl
    }

    pub fn upper(&self) -> usize {
        self.ku
    }

    #[inline]
    fn slot(&self, i: usize, j: usize) -> usize {
        // column j sits at offset j + kl - i within row i
        i * self.width + (j + self.kl - i)
    }

    pub fn in_band(&self, i: usize, j: usize) -> bool {
        j + self.kl >= i && j <= i + self.ku
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        if self.in_band(i, j) {
            self.data[self.slot(i, j)]
        } else {
            T::zero()
        }
    }

    pub fn set(&mut self, i: usize, j: usize, v: T) {
        assert!(self.in_band(i, j), "({i},{j}) outside band");
        let s = self.slot(i, j);
        self.data[s] = v;
    }

    pub fn add_to(&mut self, i: usize, j: usize, v: T) {
        assert!(self.in_band(i, j), "({i},{j}) outside band");
        let s = self.slot(i, j);
        self.data[s] = self.data[s] + v;
    }

    pub fn matvec(&self, x: &[T]) -> Vec<T> {
        assert_eq!(x.len(), self.n);
        let mut y = vec![T::zero(); self.n];
        for (i, yi) in y.iter_mut().enumerate() {
            let lo = i.saturating_sub(self.kl);
            let hi = (i + self.ku).min(self.n - 1);
            let mut acc = T::zero();
            for (j, xj) in x.iter().enumerate().take(hi + 1).skip(lo) {
                acc = acc + self.data[self.slot(i, j)] * *xj;
            }
            *yi = acc;
        }
        y
    }

    /// Product of two banded matrices; bandwidths add.
    pub fn matmul(&self, other: &Banded<T>) -> Banded<T> {
        assert_eq!(self.n, other.n);
        let n = self.n;
        let mut out = Banded::zeros(n, self.kl + other.kl, self.ku + other.ku);
        for i in 0..n {
            let lo = i.saturating_sub(self.kl);
            let hi = (i + self.ku).min(n - 1);
            for k in lo..=hi {
                let a = self.get(i, k);
                if a == T::zero() {
                    continue;
                }
                let lo2 = k.saturating_sub(other.kl);
                let hi2 = (k + other.ku).min(n - 1);
                for j in lo2..=hi2 {
                    out.add_to(i, j, a * other.get(k, j));
                }
            }
        }
        out
    }

    pub fn to_dense(&self) -> Vec<Vec<T>> {
        (0..self.n)
            .map(|i| (0..self.n).map(|j| self.get(i, j)).collect())
            .collect()
    }

    /// Max-abs-row-sum norm.
    pub fn norm_inf(&self) -> f64 {
        (0..self.n)
            .map(|i| {
                let lo = i.saturating_sub(self.kl);
                let hi = (i + self.ku).min(self.n - 1);
                (lo..=hi).map(|j| self.get(i, j).modulus()).sum::<f64>()
            })
            .fold(0.0, f64::max)
    }

    /// LU factorization with partial pivoting, consuming the matrix.
    pub fn factor(mut self) -> Result<BandedLu<T>> {
        let n = self.n;
        let kl = self.kl;
        let reach = self.ku + self.kl;
        let mut piv = vec![0usize; n];
        for i in 0..n {
            let last_row = (i + kl).min(n - 1);
            let mut p = i;
            let mut best = self.data[self.slot(i, i)].modulus();
            for r in (i + 1)..=last_row {
                let v = self.data[self.slot(r, i)].modulus();
                if v > best {
                    best = v;
                    p = r;
                }
            }
            if best == 0.0 || !best.is_finite() {
                return Err(LabError::Singular(i));
            }
            piv[i] = p;
            let last_col = (i + reach).min(n - 1);
            if p != i {
                for j in i..=last_col {
                    let a = self.slot(i, j);
                    let b = self.slot(p, j);
                    self.data.swap(a, b);
                }
            }
            let pivot = self.data[self.slot(i, i)];
            for r in (i + 1)..=last_row {
                let s = self.slot(r, i);
                let l = self.data[s] / pivot;
                self.data[s] = l;
                if l == T::zero() {
                    continue;
                }
                for j in (i + 1)..=last_col {
                    let src = self.data[self.slot(i, j)];
                    let dst = self.slot(r, j);
                    self.data[dst] = self.data[dst] - l * src;
                }
            }
        }
        Ok(BandedLu { lu: self, piv })
    }
}

impl Banded<f64> {
    /// Complex copy `a * self + b * I`.
    pub fn to_complex_shifted(&self, a: Complex64, b: Complex64) -> Banded<Complex64> {
        let mut out = Banded::zeros(self.n, self.kl, self.ku);
        for i in 0..self.n {
            let lo = i.saturating_sub(self.kl);
            let hi = (i + self.ku).min(self.n - 1);
            for j in lo..=hi {
                let mut v = a * self.get(i, j);
                if i == j {
                    v += b;
                }
                out.set(i, j, v);
            }
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct BandedLu<T> {
    lu: Banded<T>,
    piv: Vec<usize>,
}

impl<T: Scalar> BandedLu<T> {
    pub fn dim(&self) -> usize {
        self.lu.n
    }

    pub fn solve_in_place(&self, b: &mut [T]) {
        let n = self.lu.n;
        assert_eq!(b.len(), n);
        let kl = self.lu.kl;
        let reach = self.lu.ku + self.lu.kl;
        for i in 0..n {
            let p = self.piv[i];
            if p != i {
                b.swap(i, p);
            }
            let bi = b[i];
            for r in (i + 1)..=(i + kl).min(n - 1) {
                b[r] = b[r] - self.lu.data[self.lu.slot(r, i)] * bi;
            }
        }
        for i in (0..n).rev() {
            let mut acc = b[i];
            for j in (i + 1)..=(i + reach).min(n - 1) {
                acc = acc - self.lu.data[self.lu.slot(i, j)] * b[j];
            }
            b[i] = acc / self.lu.data[self.lu.slot(i, i)];
        }
    }

    pub fn solve(&self, b: &[T]) -> Vec<T> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        x
    }

    /// Ratio of the largest to the smallest pivot modulus; a cheap
    /// stand-in for the condition number.
    pub fn pivot_ratio(&self) -> f64 {
        let mut lo = f64::INFINITY;
        let mut hi = 0.0f64;
        for i in 0..self.lu.n {
            let v = self.lu.data[self.lu.slot(i, i)].modulus();
            lo = lo.min(v);
            hi = hi.max(v);
        }
        hi / lo
    }
}
