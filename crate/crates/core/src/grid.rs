//! Uniform radial grid on `[0, r_max]`, 3D radial quadrature, the radial
//! Laplacian and the norm functionals.
//!
//! Operators work on `F = r u` at the interior nodes `1..n-1`. In that
//! variable the radial Laplacian is `F''/r`, the regularity condition at the
//! origin becomes `F(0) = 0` and the Dirichlet condition at `r_max` becomes
//! `F(r_max) = 0`. Both are imposed by odd reflection, so the discrete second
//! derivative is a symmetric negative definite band matrix and every inner
//! product reduces to a plain sum `4πh Σ F_i G_i`.

use std::ops::{Add, Mul, Neg, Sub};
use std::sync::Arc;

use num_complex::Complex64;
use rand::Rng;
use serde::Serialize;

use crate::banded::Banded;
use crate::error::{LabError, Result};

const FOUR_PI: f64 = 4.0 * std::f64::consts::PI;

/// Central second-derivative weights `c_0..c_p` (unscaled).
fn second_derivative_weights(order: usize) -> Option<Vec<f64>> {
    Some(match order {
        2 => vec![-2.0, 1.0],
        4 => vec![-5.0 / 2.0, 4.0 / 3.0, -1.0 / 12.0],
        6 => vec![-49.0 / 18.0, 3.0 / 2.0, -3.0 / 20.0, 1.0 / 90.0],
        8 => vec![-205.0 / 72.0, 8.0 / 5.0, -1.0 / 5.0, 8.0 / 315.0, -1.0 / 560.0],
        _ => return None,
    })
}

/// Central first-derivative weights `d_1..d_p` (antisymmetric, unscaled).
fn first_derivative_weights(order: usize) -> Option<Vec<f64>> {
    Some(match order {
        2 => vec![1.0 / 2.0],
        4 => vec![2.0 / 3.0, -1.0 / 12.0],
        6 => vec![3.0 / 4.0, -3.0 / 20.0, 1.0 / 60.0],
        8 => vec![4.0 / 5.0, -1.0 / 5.0, 4.0 / 105.0, -1.0 / 280.0],
        _ => return None,
    })
}

pub const DEFAULT_ORDER: usize = 8;

#[derive(Debug, Clone)]
pub struct RadialGrid {
    n_points: usize,
    r_max: f64,
    spacing: f64,
    order: usize,
    nodes: Vec<f64>,
    weights: Vec<f64>,
    quad: Vec<f64>,
    ip: Vec<f64>,
    c2: Vec<f64>,
    c1: Vec<f64>,
}

impl PartialEq for RadialGrid {
    fn eq(&self, other: &Self) -> bool {
        self.n_points == other.n_points && self.r_max == other.r_max && self.order == other.order
    }
}

impl RadialGrid {
    pub fn new(n_points: usize, r_max: f64) -> Result<Arc<Self>> {
        Self::with_order(n_points, r_max, DEFAULT_ORDER)
    }

    /// Grid whose derivative stencils have the given even accuracy order
    /// (2, 4, 6 or 8). Order 2 is the classical three-point Laplacian.
    pub fn with_order(n_points: usize, r_max: f64, order: usize) -> Result<Arc<Self>> {
        if !(r_max > 0.0 && r_max.is_finite()) {
            return Err(LabError::InvalidGrid(format!("r_max must be positive, got {r_max}")));
        }
        let c2 = second_derivative_weights(order)
            .ok_or_else(|| LabError::InvalidGrid(format!("unsupported stencil order {order}")))?;
        let c1 = first_derivative_weights(order).expect("orders agree");
        if n_points < 16.max(2 * order + 2) {
            return Err(LabError::InvalidGrid(format!("n_points = {n_points} is too small")));
        }
        let h = r_max / (n_points - 1) as f64;
        let mut nodes: Vec<f64> = (0..n_points).map(|i| i as f64 * h).collect();
        nodes[n_points - 1] = r_max;

        // Trapezoid, with a fourth-order Gregory closure at r_max. No closure
        // is needed at the origin: r² f(r) is even there for smooth radial f.
        let mut weights = vec![h; n_points];
        weights[0] = 0.5 * h;
        weights[n_points - 1] = 3.0 / 8.0 * h;
        weights[n_points - 2] = 7.0 / 6.0 * h;
        weights[n_points - 3] = 23.0 / 24.0 * h;

        let quad = nodes
            .iter()
            .zip(&weights)
            .map(|(r, w)| FOUR_PI * w * r * r)
            .collect();
        let mut ip: Vec<f64> = nodes.iter().map(|r| FOUR_PI * h * r * r).collect();
        ip[n_points - 1] = 0.0;

        let c2 = c2.into_iter().map(|c| c / (h * h)).collect();
        let c1 = c1.into_iter().map(|c| c / h).collect();
        Ok(Arc::new(Self {
            n_points,
            r_max,
            spacing: h,
            order,
            nodes,
            weights,
            quad,
            ip,
            c2,
            c1,
        }))
    }

    pub fn n_points(&self) -> usize {
        self.n_points
    }

    pub fn r_max(&self) -> f64 {
        self.r_max
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    /// One-dimensional quadrature weights; the 3D measure is `4π w_i r_i²`.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Number of unknowns in the interior representation.
    pub fn interior_len(&self) -> usize {
        self.n_points - 2
    }

    /// Weights `4π h r_i²` defining the discrete L² inner product. They agree
    /// with the quadrature weights away from `r_max`.
    pub fn inner_weights(&self) -> &[f64] {
        &self.ip
    }

    /// `4π Σ w_i r_i² f_i`.
    pub fn integrate(&self, integrand: &[f64]) -> Result<f64> {
        if integrand.len() != self.n_points {
            return Err(LabError::GridMismatch(format!(
                "integrand has {} samples, grid has {}",
                integrand.len(),
                self.n_points
            )));
        }
        Ok(self.quad.iter().zip(integrand).map(|(w, f)| w * f).sum())
    }

    /// `4π Σ h r_i² f_i` over nodes below `r_max`.
    pub fn inner_sum(&self, integrand: &[f64]) -> f64 {
        debug_assert_eq!(integrand.len(), self.n_points);
        self.ip.iter().zip(integrand).map(|(w, f)| w * f).sum()
    }

    /// Padded node values of an interior `F`, odd about 0 and `r_max`.
    fn padded(&self, f: &[f64]) -> Vec<f64> {
        let p = self.c2.len() - 1;
        let last = self.n_points - 1;
        let mut out = vec![0.0; self.n_points + 2 * p];
        out[p + 1..p + last].copy_from_slice(f);
        for k in 1..=p {
            out[p - k] = -out[p + k];
            out[p + last + k] = -out[p + last - k];
        }
        out
    }

    /// Discrete `F''` for interior `F`.
    pub fn d2(&self, f: &[f64]) -> Vec<f64> {
        let m = self.interior_len();
        assert_eq!(f.len(), m, "interior vector length");
        let pad = self.padded(f);
        let p = self.c2.len() - 1;
        let c = &self.c2;
        (1..=m)
            .map(|i| {
                let j = i + p;
                let mut acc = c[0] * pad[j];
                for k in 1..=p {
                    acc += c[k] * (pad[j + k] + pad[j - k]);
                }
                acc
            })
            .collect()
    }

    /// Discrete `F'` at every node `0..n` for interior `F`.
    pub fn d1_nodes(&self, f: &[f64]) -> Vec<f64> {
        let pad = self.padded(f);
        let p = self.c2.len() - 1;
        let d = &self.c1;
        (0..self.n_points)
            .map(|i| {
                let j = i + p;
                let mut acc = 0.0;
                for k in 1..=d.len() {
                    acc += d[k - 1] * (pad[j + k] - pad[j - k]);
                }
                acc
            })
            .collect()
    }

    /// The symmetric band matrix of `d2`.
    pub fn d2_matrix(&self) -> Banded<f64> {
        let m = self.interior_len();
        let p = self.c2.len() - 1;
        let last = self.n_points - 1;
        let coef = |k: usize| if k <= p { self.c2[k] } else { 0.0 };
        let mut a = Banded::zeros(m, p, p);
        for i in 0..m {
            let ni = i + 1;
            for j in i.saturating_sub(p)..=(i + p).min(m - 1) {
                let nj = j + 1;
                let v = coef(ni.abs_diff(nj)) - coef(ni + nj) - coef(2 * last - ni - nj);
                a.set(i, j, v);
            }
        }
        a
    }

    /// Discrete `f''(0)` of an even function from its node values.
    fn second_derivative_at_origin(&self, f: &[f64]) -> f64 {
        let mut acc = self.c2[0] * f[0];
        for (k, c) in self.c2.iter().enumerate().skip(1) {
            acc += 2.0 * c * f[k];
        }
        acc
    }

    /// Interior `F = r u` from node values.
    pub fn to_interior(&self, u: &[f64]) -> Vec<f64> {
        (1..self.n_points - 1).map(|i| self.nodes[i] * u[i]).collect()
    }

    /// Node values from interior `F`; the origin value is `F'(0)` and the
    /// boundary value is 0.
    pub fn from_interior(&self, f: &[f64]) -> Vec<f64> {
        let mut u = vec![0.0; self.n_points];
        for i in 1..self.n_points - 1 {
            u[i] = f[i - 1] / self.nodes[i];
        }
        let mut d0 = 0.0;
        for (k, d) in self.c1.iter().enumerate() {
            d0 += 2.0 * d * f.get(k).copied().unwrap_or(0.0);
        }
        u[0] = d0;
        u
    }

    /// Radial Laplacian of real node values.
    pub fn laplacian_real(&self, u: &[f64]) -> Vec<f64> {
        let f = self.to_interior(u);
        let d2f = self.d2(&f);
        let mut out = vec![0.0; self.n_points];
        out[0] = 3.0 * self.second_derivative_at_origin(u);
        for i in 1..self.n_points - 1 {
            out[i] = d2f[i - 1] / self.nodes[i];
        }
        out
    }

    /// `∂_r u` of real node values (zero at the origin).
    pub fn radial_derivative_real(&self, u: &[f64]) -> Vec<f64> {
        let f = self.to_interior(u);
        let df = self.d1_nodes(&f);
        let mut out = vec![0.0; self.n_points];
        for i in 1..self.n_points {
            let fi = if i < self.n_points - 1 { f[i - 1] } else { 0.0 };
            out[i] = (df[i] - fi / self.nodes[i]) / self.nodes[i];
        }
        out
    }

    /// `∫ ∇a·∇b` for real node values via the discrete Dirichlet form.
    pub fn gradient_dot_real(&self, a: &[f64], b: &[f64]) -> f64 {
        let fa = self.to_interior(a);
        let fb = self.to_interior(b);
        let d2b = self.d2(&fb);
        -FOUR_PI * self.spacing * fa.iter().zip(&d2b).map(|(x, y)| x * y).sum::<f64>()
    }

    /// `∫ a b` with the inner-product weights.
    pub fn dot_real(&self, a: &[f64], b: &[f64]) -> f64 {
        self.ip.iter().zip(a.iter().zip(b)).map(|(w, (x, y))| w * x * y).sum()
    }

    /// Value at an arbitrary radius by 8-point Lagrange interpolation; even
    /// continuation through the origin, zero beyond `r_max`.
    pub fn interpolate(&self, u: &[f64], r: f64) -> f64 {
        let r = r.abs();
        if r >= self.r_max {
            return 0.0;
        }
        let h = self.spacing;
        let last = self.n_points as isize - 1;
        let x = r / h;
        let base = x.floor() as isize;
        let sample = |j: isize| -> f64 {
            let j = j.abs();
            if j > last {
                // odd about r_max, consistent with the Dirichlet closure
                let m = 2 * last - j;
                if m < 0 {
                    0.0
                } else {
                    -u[m as usize]
                }
            } else {
                u[j as usize]
            }
        };
        let start = base - 3;
        let mut acc = 0.0;
        for a in 0..8 {
            let ja = start + a;
            if (x - ja as f64).abs() < 1e-14 {
                return sample(ja);
            }
            let mut l = 1.0;
            for b in 0..8 {
                if a != b {
                    let jb = start + b;
                    l *= (x - jb as f64) / (ja - jb) as f64;
                }
            }
            acc += l * sample(ja);
        }
        acc
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Norms {
    pub l2sq: f64,
    pub l4_4: f64,
    pub grad_l2sq: f64,
    pub h1sq: f64,
}

/// Complex radial samples `re + i im` on a grid.
#[derive(Debug, Clone)]
pub struct RadialField {
    grid: Arc<RadialGrid>,
    re: Vec<f64>,
    im: Vec<f64>,
}

impl RadialField {
    pub fn new(grid: Arc<RadialGrid>, re: Vec<f64>, im: Vec<f64>) -> Result<Self> {
        let n = grid.n_points();
        if re.len() != n || im.len() != n {
            return Err(LabError::GridMismatch(format!(
                "field has {}/{} samples, grid has {n}",
                re.len(),
                im.len()
            )));
        }
        Ok(Self { grid, re, im })
    }

    pub fn zeros(grid: &Arc<RadialGrid>) -> Self {
        let n = grid.n_points();
        Self {
            grid: grid.clone(),
            re: vec![0.0; n],
            im: vec![0.0; n],
        }
    }

    pub fn real(grid: &Arc<RadialGrid>, re: Vec<f64>) -> Result<Self> {
        let n = grid.n_points();
        Self::new(grid.clone(), re, vec![0.0; n])
    }

    pub fn from_fn(grid: &Arc<RadialGrid>, f: impl Fn(f64) -> Complex64) -> Self {
        let (re, im) = grid.nodes().iter().map(|&r| {
            let z = f(r);
            (z.re, z.im)
        }).unzip();
        Self {
            grid: grid.clone(),
            re,
            im,
        }
    }

    pub fn from_real_fn(grid: &Arc<RadialGrid>, f: impl Fn(f64) -> f64) -> Self {
        Self::from_fn(grid, |r| Complex64::new(f(r), 0.0))
    }

    /// Field from interior `F = r u` vectors.
    pub fn from_interior(grid: &Arc<RadialGrid>, f_re: &[f64], f_im: &[f64]) -> Self {
        Self {
            grid: grid.clone(),
            re: grid.from_interior(f_re),
            im: grid.from_interior(f_im),
        }
    }

    pub fn grid(&self) -> &Arc<RadialGrid> {
        &self.grid
    }

    pub fn re(&self) -> &[f64] {
        &self.re
    }

    pub fn im(&self) -> &[f64] {
        &self.im
    }

    pub fn into_parts(self) -> (Vec<f64>, Vec<f64>) {
        (self.re, self.im)
    }

    pub fn value(&self, i: usize) -> Complex64 {
        Complex64::new(self.re[i], self.im[i])
    }

    pub fn len(&self) -> usize {
        self.re.len()
    }

    pub fn is_empty(&self) -> bool {
        self.re.is_empty()
    }

    pub fn interior_re(&self) -> Vec<f64> {
        self.grid.to_interior(&self.re)
    }

    pub fn interior_im(&self) -> Vec<f64> {
        self.grid.to_interior(&self.im)
    }

    pub fn same_grid(&self, other: &RadialField) -> Result<()> {
        self.same_grid_as(&other.grid)
    }

    pub fn same_grid_as(&self, grid: &Arc<RadialGrid>) -> Result<()> {
        if Arc::ptr_eq(&self.grid, grid) || *self.grid == **grid {
            Ok(())
        } else {
            Err(LabError::GridMismatch(format!(
                "fields on grids ({}, {}) and ({}, {})",
                self.grid.n_points(),
                self.grid.r_max(),
                grid.n_points(),
                grid.r_max()
            )))
        }
    }

    pub fn map(&self, f: impl Fn(Complex64) -> Complex64) -> Self {
        Self::from_samples(&self.grid, (0..self.len()).map(|i| f(self.value(i))))
    }

    /// Pointwise `f(r, u(r))`.
    pub fn map_with_r(&self, f: impl Fn(f64, Complex64) -> Complex64) -> Self {
        let nodes = self.grid.nodes();
        Self::from_samples(&self.grid, (0..self.len()).map(|i| f(nodes[i], self.value(i))))
    }

    fn from_samples(grid: &Arc<RadialGrid>, it: impl Iterator<Item = Complex64>) -> Self {
        let (re, im) = it.map(|z| (z.re, z.im)).unzip();
        Self {
            grid: grid.clone(),
            re,
            im,
        }
    }

    pub fn conj(&self) -> Self {
        Self {
            grid: self.grid.clone(),
            re: self.re.clone(),
            im: self.im.iter().map(|x| -x).collect(),
        }
    }

    pub fn scale(&self, c: Complex64) -> Self {
        self.map(|z| z * c)
    }

    /// `self + c·other`.
    pub fn axpy(&self, c: Complex64, other: &RadialField) -> Self {
        assert!(self.same_grid(other).is_ok(), "grid mismatch");
        let mut out = self.clone();
        for i in 0..self.len() {
            let z = other.value(i) * c;
            out.re[i] += z.re;
            out.im[i] += z.im;
        }
        out
    }

    pub fn real_part(&self) -> Self {
        Self {
            grid: self.grid.clone(),
            re: self.re.clone(),
            im: vec![0.0; self.len()],
        }
    }

    pub fn imag_part(&self) -> Self {
        Self {
            grid: self.grid.clone(),
            re: self.im.clone(),
            im: vec![0.0; self.len()],
        }
    }

    pub fn modulus_sq(&self) -> Vec<f64> {
        self.re.iter().zip(&self.im).map(|(a, b)| a * a + b * b).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.re.iter().chain(&self.im).all(|x| x.is_finite())
    }

    /// `∫ f` over the ball of radius `r_max`.
    pub fn integral(&self) -> Complex64 {
        let g = &self.grid;
        Complex64::new(
            g.integrate(&self.re).expect("own grid"),
            g.integrate(&self.im).expect("own grid"),
        )
    }

    pub fn laplacian(&self) -> Self {
        Self {
            grid: self.grid.clone(),
            re: self.grid.laplacian_real(&self.re),
            im: self.grid.laplacian_real(&self.im),
        }
    }

    pub fn radial_derivative(&self) -> Self {
        Self {
            grid: self.grid.clone(),
            re: self.grid.radial_derivative_real(&self.re),
            im: self.grid.radial_derivative_real(&self.im),
        }
    }

    /// `Re ∫ a b̄`.
    pub fn dot(&self, other: &RadialField) -> f64 {
        let g = &self.grid;
        g.dot_real(&self.re, &other.re) + g.dot_real(&self.im, &other.im)
    }

    /// `∫ a b̄` (complex).
    pub fn inner(&self, other: &RadialField) -> Complex64 {
        let g = &self.grid;
        Complex64::new(
            g.dot_real(&self.re, &other.re) + g.dot_real(&self.im, &other.im),
            g.dot_real(&self.im, &other.re) - g.dot_real(&self.re, &other.im),
        )
    }

    /// `Re ∫ ∇a·∇b̄`.
    pub fn grad_dot(&self, other: &RadialField) -> f64 {
        let g = &self.grid;
        g.gradient_dot_real(&self.re, &other.re) + g.gradient_dot_real(&self.im, &other.im)
    }

    /// Real H¹ inner product.
    pub fn h1_dot(&self, other: &RadialField) -> f64 {
        self.dot(other) + self.grad_dot(other)
    }

    pub fn l2sq(&self) -> f64 {
        self.dot(self)
    }

    pub fn l2(&self) -> f64 {
        self.l2sq().sqrt()
    }

    pub fn grad_sq(&self) -> f64 {
        self.grad_dot(self)
    }

    pub fn h1sq(&self) -> f64 {
        self.l2sq() + self.grad_sq()
    }

    pub fn h1(&self) -> f64 {
        self.h1sq().sqrt()
    }

    pub fn l4_4(&self) -> f64 {
        let m: Vec<f64> = self.modulus_sq().into_iter().map(|x| x * x).collect();
        self.grid.inner_sum(&m)
    }

    pub fn norms(&self) -> Norms {
        let l2sq = self.l2sq();
        let grad_l2sq = self.grad_sq();
        Norms {
            l2sq,
            l4_4: self.l4_4(),
            grad_l2sq,
            h1sq: l2sq + grad_l2sq,
        }
    }

    /// `P[u] = Im ∫ ū ∇u`, identically zero for radial fields.
    pub fn momentum(&self) -> [f64; 3] {
        [0.0; 3]
    }

    /// Evaluate at an arbitrary radius.
    pub fn sample(&self, r: f64) -> Complex64 {
        Complex64::new(
            self.grid.interpolate(&self.re, r),
            self.grid.interpolate(&self.im, r),
        )
    }

    /// Transfer to another grid by interpolation.
    pub fn resample(&self, grid: &Arc<RadialGrid>) -> Self {
        Self::from_fn(grid, |r| self.sample(r))
    }
}

impl Add for &RadialField {
    type Output = RadialField;
    fn add(self, rhs: &RadialField) -> RadialField {
        self.axpy(Complex64::new(1.0, 0.0), rhs)
    }
}

impl Sub for &RadialField {
    type Output = RadialField;
    fn sub(self, rhs: &RadialField) -> RadialField {
        self.axpy(Complex64::new(-1.0, 0.0), rhs)
    }
}

impl Neg for &RadialField {
    type Output = RadialField;
    fn neg(self) -> RadialField {
        self.scale(Complex64::new(-1.0, 0.0))
    }
}

impl Mul<f64> for &RadialField {
    type Output = RadialField;
    fn mul(self, rhs: f64) -> RadialField {
        self.scale(Complex64::new(rhs, 0.0))
    }
}

impl Mul<Complex64> for &RadialField {
    type Output = RadialField;
    fn mul(self, rhs: Complex64) -> RadialField {
        self.scale(rhs)
    }
}

/// `∫ f` for a field; mismatched grids are rejected by [`RadialGrid::integrate`].
pub fn integrate(grid: &RadialGrid, integrand: &[f64]) -> Result<f64> {
    grid.integrate(integrand)
}

/// Random smooth radial field: a short sum of Gaussians with random complex
/// amplitudes and a mild quadratic phase.
pub fn random_smooth_field<R: Rng>(grid: &Arc<RadialGrid>, rng: &mut R, complex: bool) -> RadialField {
    let terms = rng.gen_range(1..=3);
    let mut spec = Vec::with_capacity(terms);
    for _ in 0..terms {
        let amp = Complex64::new(
            rng.gen_range(-1.0..1.0),
            if complex { rng.gen_range(-1.0..1.0) } else { 0.0 },
        );
        let width = rng.gen_range(0.4..2.5);
        let center = rng.gen_range(0.0..2.0);
        let chirp = if complex { rng.gen_range(-0.2..0.2) } else { 0.0 };
        spec.push((amp, width, center, chirp));
    }
    RadialField::from_fn(grid, |r| {
        spec.iter()
            .map(|&(a, w, c, k): &(Complex64, f64, f64, f64)| {
                // symmetric bump pair keeps the field even through r = 0
                let g = (-((r - c) / w).powi(2)).exp() + (-((r + c) / w).powi(2)).exp();
                a * g * Complex64::from_polar(1.0, k * r * r)
            })
            .sum()
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn nodes_and_ball_volume() {
        let g = RadialGrid::new(1001, 10.0).unwrap();
        assert_eq!(g.nodes()[0], 0.0);
        assert_eq!(*g.nodes().last().unwrap(), 10.0);
        assert!(g.nodes().windows(2).all(|w| w[1] > w[0]));
        assert!(g.weights().iter().all(|&w| w >= 0.0));
        let ones = vec![1.0; g.n_points()];
        let vol = g.integrate(&ones).unwrap();
        let exact = 4.0 / 3.0 * PI * 1000.0;
        assert!(((vol - exact) / exact).abs() < 1e-10, "{vol} vs {exact}");
    }

    #[test]
    fn gaussian_integral() {
        let g = RadialGrid::new(2049, 12.0).unwrap();
        let f: Vec<f64> = g.nodes().iter().map(|r| (-r * r).exp()).collect();
        let v = g.integrate(&f).unwrap();
        assert!((v / PI.powf(1.5) - 1.0).abs() < 1e-8);
        assert_eq!(g.integrate(&vec![0.0; g.n_points()]).unwrap(), 0.0);
    }

    #[test]
    fn integrate_rejects_wrong_length() {
        let g = RadialGrid::new(64, 20.0).unwrap();
        assert!(matches!(g.integrate(&[1.0; 10]), Err(LabError::GridMismatch(_))));
    }

    #[test]
    fn laplacian_of_gaussian() {
        for order in [2, 8] {
            let g = RadialGrid::with_order(2049, 20.0, order).unwrap();
            let u = RadialField::from_real_fn(&g, |r| (-r * r / 2.0).exp());
            let lap = u.laplacian();
            let h2 = g.spacing().powi(2);
            let err = g
                .nodes()
                .iter()
                .zip(lap.re())
                .map(|(r, l)| (l - (r * r - 3.0) * (-r * r / 2.0).exp()).abs())
                .fold(0.0, f64::max);
            assert!(err < 5.0 * h2, "order {order}: {err}");
        }
    }

    #[test]
    fn second_order_origin_stencil() {
        let g = RadialGrid::with_order(101, 20.0, 2).unwrap();
        let u: Vec<f64> = g.nodes().iter().map(|r| (-r * r).exp()).collect();
        let lap = g.laplacian_real(&u);
        let h = g.spacing();
        assert!((lap[0] - 6.0 * (u[1] - u[0]) / (h * h)).abs() < 1e-9);
    }

    #[test]
    fn constant_has_zero_laplacian_in_the_bulk() {
        let g = RadialGrid::new(1025, 20.0).unwrap();
        let lap = g.laplacian_real(&vec![2.0; g.n_points()]);
        assert!(lap[..900].iter().all(|x| x.abs() < 1e-8));
    }

    #[test]
    fn ball_eigenfunction() {
        let r_max = 20.0;
        let k = PI / r_max;
        let g = RadialGrid::with_order(1025, r_max, 2).unwrap();
        let f = |r: f64| if r == 0.0 { k } else { (k * r).sin() / r };
        let u = RadialField::from_real_fn(&g, f);
        let lap = u.laplacian();
        let err = g
            .nodes()
            .iter()
            .zip(lap.re())
            .take(g.n_points() - 1)
            .map(|(r, l)| (l + k * k * f(*r)).abs())
            .fold(0.0, f64::max);
        assert!(err < g.spacing().powi(2), "{err}");
    }

    #[test]
    fn laplacian_error_drops_fourfold_at_second_order() {
        let err = |n: usize| {
            let g = RadialGrid::with_order(n, 16.0, 2).unwrap();
            let u: Vec<f64> = g.nodes().iter().map(|r| (-r * r / 2.0).exp()).collect();
            g.laplacian_real(&u)
                .iter()
                .zip(g.nodes())
                .map(|(l, r)| (l - (r * r - 3.0) * (-r * r / 2.0).exp()).abs())
                .fold(0.0, f64::max)
        };
        let ratio = err(513) / err(1025);
        assert!((ratio - 4.0).abs() < 0.3, "{ratio}");
    }

    #[test]
    fn d2_matrix_matches_operator_and_is_symmetric() {
        let g = RadialGrid::new(64, 20.0).unwrap();
        let a = g.d2_matrix();
        let m = g.interior_len();
        for i in 0..m {
            for j in 0..m {
                assert_eq!(a.get(i, j), a.get(j, i));
            }
        }
        let f: Vec<f64> = (0..m).map(|i| ((i * 7 % 13) as f64).sin()).collect();
        let x = a.matvec(&f);
        let y = g.d2(&f);
        for (p, q) in x.iter().zip(&y) {
            assert!((p - q).abs() < 1e-9 * p.abs().max(1.0));
        }
    }

    #[test]
    fn gaussian_norms() {
        let g = RadialGrid::new(2049, 20.0).unwrap();
        let u = RadialField::from_real_fn(&g, |r| (-r * r / 2.0).exp());
        let n = u.norms();
        assert!((n.l2sq / PI.powf(1.5) - 1.0).abs() < 1e-8);
        // ∫|∇u|² = 4π ∫ r⁴ e^{-r²} = 3π^{3/2}/2
        assert!((n.grad_l2sq / (1.5 * PI.powf(1.5)) - 1.0).abs() < 1e-8);
        // ∫u⁴ = π^{3/2}/2^{3/2}
        assert!((n.l4_4 / (PI.powf(1.5) / 2f64.powf(1.5)) - 1.0).abs() < 1e-8);
        assert_eq!(n.h1sq, n.l2sq + n.grad_l2sq);
        let z = RadialField::zeros(&g).norms();
        assert_eq!((z.l2sq, z.l4_4, z.grad_l2sq, z.h1sq), (0.0, 0.0, 0.0, 0.0));
    }

    #[test]
    fn dirichlet_gradient_matches_derivative_quadrature() {
        let g = RadialGrid::new(2049, 20.0).unwrap();
        let u = RadialField::from_real_fn(&g, |r| (1.0 + r * r).recip() * (-r).exp());
        let du = u.radial_derivative();
        let direct = du.l2sq();
        assert!((direct / u.grad_sq() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn momentum_vanishes() {
        let g = RadialGrid::new(128, 20.0).unwrap();
        let u = RadialField::from_fn(&g, |r| Complex64::new(0.0, (-r).exp()));
        assert_eq!(u.momentum(), [0.0; 3]);
    }

    #[test]
    fn interpolation_is_accurate_and_exact_at_nodes() {
        let g = RadialGrid::new(1025, 20.0).unwrap();
        let u = RadialField::from_real_fn(&g, |r| (-r * r / 3.0).exp());
        assert_eq!(u.sample(g.nodes()[17]).re, u.re()[17]);
        for r in [0.0, 0.013, 0.5, 2.345, 7.77] {
            assert!((u.sample(r).re - (-r * r / 3.0f64).exp()).abs() < 1e-10);
        }
        assert_eq!(u.sample(25.0).re, 0.0);
    }

    #[test]
    fn interior_round_trip() {
        let g = RadialGrid::new(513, 20.0).unwrap();
        let u = RadialField::from_real_fn(&g, |r| (-r * r).exp());
        let back = g.from_interior(&u.interior_re());
        assert!((back[0] - 1.0).abs() < 1e-8);
        for i in 1..g.n_points() - 1 {
            assert!((back[i] - u.re()[i]).abs() < 1e-14);
        }
    }
}
