//! Sine-collocation discretization of radial operators on `[0, R]`.
//!
//! Unknowns are `F = r u` at `r_j = jR/(n+1)`; `F''` is exact on the sine
//! basis, which builds in `F(0) = F(R) = 0`.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};

use crate::dp45;

pub struct SineGrid {
    pub n: usize,
    pub r_max: f64,
    pub nodes: Vec<f64>,
    pub d2: DMatrix<f64>,
}

impl SineGrid {
    pub fn new(n: usize, r_max: f64) -> Self {
        let nodes: Vec<f64> = (1..=n).map(|j| j as f64 * r_max / (n + 1) as f64).collect();
        let s = DMatrix::from_fn(n, n, |j, k| ((j + 1) as f64 * (k + 1) as f64 * PI / (n + 1) as f64).sin());
        let lam = DVector::from_fn(n, |k, _| -((k + 1) as f64 * PI / r_max).powi(2));
        let d2 = (&s * DMatrix::from_diagonal(&lam) * &s) * (2.0 / (n + 1) as f64);
        Self { n, r_max, nodes, d2 }
    }
}

/// Ground state `F = rQ` at the collocation nodes: shooting seed, then Newton
/// on `F'' - F + F³/r² = 0`.
pub fn ground_state(grid: &SineGrid, q0: f64, rtol: f64) -> DVector<f64> {
    let shot = dp45::shoot(q0, &grid.nodes, rtol);
    let mut f = DVector::zeros(grid.n);
    let mut last = (1.0, 1.0);
    for j in 0..grid.n {
        let r = grid.nodes[j];
        let q = match shot.samples.get(j) {
            Some((_, y)) if y[0] > 1e-6 => {
                last = (r, y[0]);
                y[0]
            }
            _ => last.1 * last.0 * (last.0 - r).exp() / r,
        };
        f[j] = r * q;
    }
    let r2 = DVector::from_iterator(grid.n, grid.nodes.iter().map(|r| r * r));
    for _ in 0..30 {
        let g = &grid.d2 * &f - &f + f.zip_map(&r2, |x, s| x * x * x / s);
        let jac = &grid.d2 - DMatrix::identity(grid.n, grid.n)
            + DMatrix::from_diagonal(&f.zip_map(&r2, |x, s| 3.0 * x * x / s));
        let dx = jac.lu().solve(&g).expect("nonsingular Newton matrix");
        f -= &dx;
        if dx.amax() < 1e-14 * f.amax() {
            break;
        }
    }
    f
}

/// `(L₊, L₋)` in the `F` variables.
pub fn linearized(grid: &SineGrid, f: &DVector<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
    let q2 = DVector::from_iterator(grid.n, f.iter().zip(&grid.nodes).map(|(x, r)| (x / r).powi(2)));
    let base = -&grid.d2 + DMatrix::identity(grid.n, grid.n);
    let lp = &base - DMatrix::from_diagonal(&(q2.clone() * 3.0));
    let lm = base - DMatrix::from_diagonal(&q2);
    (lp, lm)
}

/// Largest real eigenvalue of `[[0, -L₋], [L₊, 0]]` by a dense solve.
pub fn block_growth_rate(lp: &DMatrix<f64>, lm: &DMatrix<f64>) -> f64 {
    let n = lp.nrows();
    let mut m = DMatrix::zeros(2 * n, 2 * n);
    m.view_mut((0, n), (n, n)).copy_from(&(-lm));
    m.view_mut((n, 0), (n, n)).copy_from(lp);
    let eig = m.complex_eigenvalues();
    eig.iter()
        .filter(|z| z.im.abs() <= 1e-8 * z.norm().max(1.0))
        .map(|z| z.re)
        .fold(f64::NEG_INFINITY, f64::max)
}
