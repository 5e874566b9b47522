//! Linearized operators `L₊ = -Δ + 1 - 3Q²`, `L₋ = -Δ + 1 - Q²`, the block
//! operator `𝓛 = [[0, -L₋], [L₊, 0]]`, its real eigenpair `±e₀`, the
//! quadratic form `Φ` with its bilinear form `B`, coercivity minima and the
//! spectral mode projection.

use std::sync::Arc;

use log::debug;
use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::banded::{Banded, BandedLu};
use crate::error::{LabError, Result};
use crate::grid::{RadialField, RadialGrid};
use crate::ground_state::GroundState;

const FOUR_PI: f64 = 4.0 * std::f64::consts::PI;

/// Grid size of the dense pre-solve that seeds the eigenvalue and counts
/// negative eigenvalues of `L₋L₊`.
const COARSE_POINTS: usize = 385;

#[derive(Debug, Clone)]
pub struct LinearizedPair {
    grid: Arc<RadialGrid>,
    q: RadialField,
    /// Interior `rQ`.
    fq: Vec<f64>,
    /// Interior `Q²`.
    q2: Vec<f64>,
    d2: Banded<f64>,
}

impl LinearizedPair {
    pub fn assemble(gs: &GroundState) -> Self {
        let grid = gs.grid().clone();
        let fq = gs.q.interior_re();
        let q2 = gs.q.re()[1..grid.n_points() - 1].iter().map(|q| q * q).collect();
        Self {
            d2: grid.d2_matrix(),
            q: gs.q.clone(),
            fq,
            q2,
            grid,
        }
    }

    pub fn grid(&self) -> &Arc<RadialGrid> {
        &self.grid
    }

    pub fn q(&self) -> &RadialField {
        &self.q
    }

    /// Discrete L² inner product of interior vectors.
    pub fn dot(&self, a: &[f64], b: &[f64]) -> f64 {
        FOUR_PI * self.grid.spacing() * a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>()
    }

    fn apply(&self, f: &[f64], c: f64) -> Vec<f64> {
        let d2f = self.grid.d2(f);
        f.iter()
            .zip(&d2f)
            .zip(&self.q2)
            .map(|((x, d), q2)| -d + x - c * q2 * x)
            .collect()
    }

    /// `L₊` on interior `F = r h`.
    pub fn l_plus_interior(&self, f: &[f64]) -> Vec<f64> {
        self.apply(f, 3.0)
    }

    pub fn l_minus_interior(&self, f: &[f64]) -> Vec<f64> {
        self.apply(f, 1.0)
    }

    /// `L₊` on real node values.
    pub fn l_plus(&self, u: &[f64]) -> Vec<f64> {
        self.grid.from_interior(&self.l_plus_interior(&self.grid.to_interior(u)))
    }

    pub fn l_minus(&self, u: &[f64]) -> Vec<f64> {
        self.grid.from_interior(&self.l_minus_interior(&self.grid.to_interior(u)))
    }

    fn operator_matrix(&self, c: f64) -> Banded<f64> {
        let mut a = self.d2.clone();
        let m = self.q2.len();
        let p = a.upper();
        for i in 0..m {
            for j in i.saturating_sub(p)..=(i + p).min(m - 1) {
                let v = -a.get(i, j);
                a.set(i, j, v);
            }
            a.add_to(i, i, 1.0 - c * self.q2[i]);
        }
        a
    }

    pub fn l_plus_matrix(&self) -> Banded<f64> {
        self.operator_matrix(3.0)
    }

    pub fn l_minus_matrix(&self) -> Banded<f64> {
        self.operator_matrix(1.0)
    }

    /// `𝓛 - s` on interleaved `(h₁, h₂)` interior unknowns.
    pub fn block_matrix(&self, shift: f64) -> Banded<f64> {
        let lp = self.l_plus_matrix();
        let lm = self.l_minus_matrix();
        let m = self.q2.len();
        let p = lp.upper();
        let w = 2 * p + 1;
        let mut a = Banded::zeros(2 * m, w, w);
        for i in 0..m {
            a.set(2 * i, 2 * i, -shift);
            a.set(2 * i + 1, 2 * i + 1, -shift);
            for j in i.saturating_sub(p)..=(i + p).min(m - 1) {
                a.set(2 * i, 2 * j + 1, -lm.get(i, j));
                a.set(2 * i + 1, 2 * j, lp.get(i, j));
            }
        }
        a
    }

    /// `𝓛h = -L₋h₂ + i L₊h₁`.
    pub fn apply_block(&self, h: &RadialField) -> RadialField {
        let g = &self.grid;
        let re: Vec<f64> = self.l_minus_interior(&h.interior_im()).iter().map(|x| -x).collect();
        let im = self.l_plus_interior(&h.interior_re());
        RadialField::from_interior(g, &re, &im)
    }
}

/// `B(g, h) = ½∫(L₊g₁)h₁ + ½∫(L₋g₂)h₂`.
pub fn bilinear(g: &RadialField, h: &RadialField, lp: &LinearizedPair) -> f64 {
    let lg1 = lp.l_plus_interior(&g.interior_re());
    let lg2 = lp.l_minus_interior(&g.interior_im());
    0.5 * lp.dot(&lg1, &h.interior_re()) + 0.5 * lp.dot(&lg2, &h.interior_im())
}

/// `Φ(h) = ½∫|h|² + ½∫|∇h|² - ½∫Q²(3h₁² + h₂²)`.
pub fn phi(h: &RadialField, lp: &LinearizedPair) -> f64 {
    let q2 = lp.q.modulus_sq();
    let pot: Vec<f64> = q2
        .iter()
        .zip(h.re().iter().zip(h.im()))
        .map(|(q2, (a, b))| q2 * (3.0 * a * a + b * b))
        .collect();
    0.5 * h.l2sq() + 0.5 * h.grad_sq() - 0.5 * lp.grid.inner_sum(&pot)
}

#[derive(Debug, Clone, Serialize)]
pub struct ConstraintForm {
    pub value: f64,
    /// `ΔE + ΔM/2`, the exact difference `Φ(h) - value` in the continuum.
    pub constraint_violation: f64,
}

/// `∫Q|h|²h₁ + ¼∫|h|⁴`, equal to `Φ(h)` when `Q + h` has the mass and
/// energy of `Q`.
pub fn phi_from_constraints(h: &RadialField, gs: &GroundState, rel_tol: f64) -> Result<ConstraintForm> {
    h.same_grid(&gs.q)?;
    let u = &gs.q + h;
    let de = crate::ground_state::energy(&u) - gs.energy;
    let dm = crate::ground_state::mass(&u) - gs.mass;
    if de.abs() > rel_tol * gs.energy.abs() || dm.abs() > rel_tol * gs.mass {
        return Err(LabError::Precondition(format!(
            "Q + h is off the threshold: ΔE = {de:.3e}, ΔM = {dm:.3e}"
        )));
    }
    let g = gs.grid();
    let vals: Vec<f64> = (0..h.len())
        .map(|i| {
            let m2 = h.re()[i].powi(2) + h.im()[i].powi(2);
            gs.q.re()[i] * m2 * h.re()[i] + 0.25 * m2 * m2
        })
        .collect();
    Ok(ConstraintForm {
        value: g.inner_sum(&vals),
        constraint_violation: de + 0.5 * dm,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum MinusConvention {
    /// `𝒴₋ = -conj(𝒴₊)`, forced by `B(𝒴₊, conj 𝒴₊) < 0`.
    NegatedConjugate,
}

#[derive(Debug, Clone)]
pub struct SpectralData {
    pub e0: f64,
    pub y1: RadialField,
    pub y2: RadialField,
    /// `B(𝒴₊, conj 𝒴₊)` for the L²-unit eigenfunction, before scaling.
    pub b_norm: f64,
    /// Whether the sign flip `∫∇Q·∇𝒴₁ > 0` was applied.
    pub sign_flipped: bool,
    pub convention: MinusConvention,
    /// Estimate from the coarse dense solve.
    pub coarse_e0: f64,
    /// Smallest positive eigenvalue of the coarse `L₋L₊` besides the kernel.
    pub spectral_floor: f64,
    pub residual_plus: f64,
    pub residual_minus: f64,
}

impl SpectralData {
    pub fn y_plus(&self) -> RadialField {
        RadialField::new(self.y1.grid().clone(), self.y1.re().to_vec(), self.y2.re().to_vec())
            .expect("same grid")
    }

    pub fn y_minus(&self) -> RadialField {
        let y1: Vec<f64> = self.y1.re().iter().map(|x| -x).collect();
        RadialField::new(self.y1.grid().clone(), y1, self.y2.re().to_vec()).expect("same grid")
    }

    pub fn residuals(&self) -> (f64, f64) {
        (self.residual_plus, self.residual_minus)
    }
}

fn dense(a: &Banded<f64>) -> DMatrix<f64> {
    let n = a.dim();
    let mut m = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in i.saturating_sub(a.lower())..=(i + a.upper()).min(n - 1) {
            m[(i, j)] = a.get(i, j);
        }
    }
    m
}

/// Negative eigenvalues of `L₋L₊` on a coarse copy of the problem, plus the
/// smallest eigenvalue above the kernel.
fn coarse_spectrum(lp: &LinearizedPair) -> Result<(Vec<f64>, f64)> {
    let g = &lp.grid;
    let coarse = if g.n_points() <= COARSE_POINTS {
        lp.clone()
    } else {
        let cg = RadialGrid::with_order(COARSE_POINTS, g.r_max(), g.order())?;
        let q = lp.q.resample(&cg);
        let fq = q.interior_re();
        let q2 = q.re()[1..cg.n_points() - 1].iter().map(|x| x * x).collect();
        LinearizedPair {
            d2: cg.d2_matrix(),
            q,
            fq,
            q2,
            grid: cg,
        }
    };
    let prod = dense(&coarse.l_minus_matrix()) * dense(&coarse.l_plus_matrix());
    let eig = prod.complex_eigenvalues();
    let scale = eig.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let mut negative = Vec::new();
    let mut floor = f64::INFINITY;
    for z in eig.iter() {
        if z.im.abs() > 1e-8 * scale {
            continue;
        }
        if z.re < -1e-8 * scale.sqrt() {
            negative.push(z.re);
        } else if z.re > 1e-6 {
            floor = floor.min(z.re);
        }
    }
    Ok((negative, floor))
}

fn interleave(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).flat_map(|(x, y)| [*x, *y]).collect()
}

fn deinterleave(x: &[f64]) -> (Vec<f64>, Vec<f64>) {
    (x.iter().step_by(2).copied().collect(), x.iter().skip(1).step_by(2).copied().collect())
}

/// Rayleigh-quotient inverse iteration on the interleaved block system.
fn refine_eigenpair(lp: &LinearizedPair, guess: f64) -> Result<(f64, Vec<f64>, Vec<f64>)> {
    let mut shift = guess;
    let mut x = interleave(&lp.fq, &lp.fq);
    let block = |s: f64| -> Result<BandedLu<f64>> {
        let lu = lp.block_matrix(s).factor().map_err(|_| LabError::Resolvent {
            shift: s,
            condition: f64::INFINITY,
        })?;
        Ok(lu)
    };
    for outer in 0..4 {
        let lu = block(shift)?;
        for _ in 0..3 {
            x = lu.solve(&x);
            let n = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            x.iter_mut().for_each(|v| *v /= n);
        }
        let (y1, y2) = deinterleave(&x);
        let l1 = lp.l_plus_interior(&y1);
        let l2 = lp.l_minus_interior(&y2);
        // Rayleigh quotient of 𝓛 on the current iterate
        let num: f64 = y1.iter().zip(&l2).map(|(a, b)| -a * b).sum::<f64>()
            + y2.iter().zip(&l1).map(|(a, b)| a * b).sum::<f64>();
        let den: f64 = x.iter().map(|v| v * v).sum();
        let next = num / den;
        debug!("eigen refinement {outer}: e0 = {next:.15}");
        let done = (next - shift).abs() < 1e-14 * next.abs();
        shift = next;
        if done && outer > 0 {
            break;
        }
    }
    let (y1, y2) = deinterleave(&x);
    Ok((shift, y1, y2))
}

/// The growth rate `e₀` and its eigenfunction, normalized by
/// `B(𝒴₊, 𝒴₋) = 1` with `𝒴₋ = -conj(𝒴₊)` and `∫∇Q·∇𝒴₁ > 0`.
pub fn solve_eigenpair(lp: &LinearizedPair) -> Result<SpectralData> {
    let (negative, floor) = coarse_spectrum(lp)?;
    match negative.len() {
        0 => return Err(LabError::Spectral("L₋L₊ has no negative eigenvalue".into())),
        1 => {}
        count => return Err(LabError::NonsimpleSpectrum { count }),
    }
    let coarse_e0 = (-negative[0]).sqrt();
    let (e0, mut y1, mut y2) = refine_eigenpair(lp, coarse_e0)?;
    if !(e0 > 0.0) {
        return Err(LabError::Spectral(format!("refined eigenvalue {e0} is not positive")));
    }

    // unit L² norm, then record B(𝒴₊, conj 𝒴₊) = e₀(y₁, y₂)
    let n = (lp.dot(&y1, &y1) + lp.dot(&y2, &y2)).sqrt();
    y1.iter_mut().chain(y2.iter_mut()).for_each(|v| *v /= n);
    // B(𝒴₊, conj 𝒴₊) = ½(L₊y₁, y₁) - ½(L₋y₂, y₂)
    let b_conj = 0.5 * lp.dot(&lp.l_plus_interior(&y1), &y1) - 0.5 * lp.dot(&lp.l_minus_interior(&y2), &y2);
    if !(b_conj < 0.0) {
        return Err(LabError::Spectral(format!(
            "B(Y+, conj Y+) = {b_conj:.3e} is not negative"
        )));
    }
    let s = 1.0 / (-b_conj).sqrt();
    y1.iter_mut().chain(y2.iter_mut()).for_each(|v| *v *= s);

    let grad_dot = -lp.dot(&lp.grid.d2(&lp.fq), &y1);
    let sign_flipped = grad_dot < 0.0;
    if sign_flipped {
        y1.iter_mut().chain(y2.iter_mut()).for_each(|v| *v = -*v);
    }

    let l1 = lp.l_plus_interior(&y1);
    let l2 = lp.l_minus_interior(&y2);
    let norm = lp.dot(&y1, &y1).sqrt() + lp.dot(&y2, &y2).sqrt();
    let r_plus: Vec<f64> = l1.iter().zip(&y2).map(|(a, b)| a - e0 * b).collect();
    let r_minus: Vec<f64> = l2.iter().zip(&y1).map(|(a, b)| a + e0 * b).collect();
    let residual_plus = lp.dot(&r_plus, &r_plus).sqrt() / norm;
    let residual_minus = lp.dot(&r_minus, &r_minus).sqrt() / norm;
    for (what, value) in [("L+Y1 - e0 Y2", residual_plus), ("L-Y2 + e0 Y1", residual_minus)] {
        if value > 1e-8 {
            return Err(LabError::Accuracy {
                what: what.into(),
                value,
                bound: 1e-8,
            });
        }
    }
    let g = &lp.grid;
    let zero = vec![0.0; y1.len()];
    Ok(SpectralData {
        e0,
        y1: RadialField::from_interior(g, &y1, &zero),
        y2: RadialField::from_interior(g, &y2, &zero),
        b_norm: b_conj,
        sign_flipped,
        convention: MinusConvention::NegatedConjugate,
        coarse_e0,
        spectral_floor: floor,
        residual_plus,
        residual_minus,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Constraints {
    /// No orthogonality conditions.
    None,
    /// `∫Qh₂ = 0`, `∫ΔQ h₁ = 0`.
    GPerp,
    /// `∫Qh₂ = 0`, `∫𝒴₁h₂ = 0`, `∫𝒴₂h₁ = 0`.
    GPerpPrime,
}

#[derive(Debug, Clone, Serialize)]
pub struct CoercivityReport {
    pub constraints: Constraints,
    /// `min Φ(h)/‖h‖²_{H¹}` over the constrained radial space.
    pub minimum: f64,
    /// Minimum of `Φ₁(h₁)/‖h₁‖²_{H¹}` (the `L₊` part).
    pub plus_part: f64,
    /// Minimum of `Φ₂(h₂)/‖h₂‖²_{H¹}` (the `L₋` part).
    pub minus_part: f64,
    pub positive: bool,
}

/// Largest `ρ = ⟨Q²x, x⟩/⟨(1 - D₂)x, x⟩` on `{x : Cᵀx = 0}` by constrained
/// subspace iteration with Rayleigh–Ritz.
fn max_potential_ratio(lp: &LinearizedPair, constraints: &[Vec<f64>]) -> Result<f64> {
    let m = lp.q2.len();
    let mut bmat = lp.d2.clone();
    let p = bmat.upper();
    for i in 0..m {
        for j in i.saturating_sub(p)..=(i + p).min(m - 1) {
            let v = -bmat.get(i, j);
            bmat.set(i, j, v);
        }
        bmat.add_to(i, i, 1.0);
    }
    let bsolve = bmat.clone().factor()?;
    let k = constraints.len();
    let w: Vec<Vec<f64>> = constraints.iter().map(|c| bsolve.solve(c)).collect();
    let mut s = DMatrix::zeros(k, k);
    for i in 0..k {
        for j in 0..k {
            s[(i, j)] = constraints[i].iter().zip(&w[j]).map(|(a, b)| a * b).sum::<f64>();
        }
    }
    let s_inv = if k > 0 {
        s.try_inverse()
            .ok_or_else(|| LabError::Degenerate("dependent constraint vectors".into()))?
    } else {
        DMatrix::zeros(0, 0)
    };
    let op = |x: &[f64]| -> Vec<f64> {
        let ax: Vec<f64> = x.iter().zip(&lp.q2).map(|(a, q)| a * q).collect();
        let mut y = bsolve.solve(&ax);
        if k > 0 {
            let cy: Vec<f64> = constraints
                .iter()
                .map(|c| c.iter().zip(&y).map(|(a, b)| a * b).sum())
                .collect();
            for i in 0..k {
                let coef: f64 = (0..k).map(|j| s_inv[(i, j)] * cy[j]).sum();
                for (yy, ww) in y.iter_mut().zip(&w[i]) {
                    *yy -= coef * ww;
                }
            }
        }
        y
    };
    let block = 8.min(m);
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut x: Vec<Vec<f64>> = (0..block)
        .map(|_| op(&(0..m).map(|_| rng.gen_range(-1.0..1.0)).collect::<Vec<f64>>()))
        .collect();
    let mut last = f64::NAN;
    for _ in 0..400 {
        x = x.iter().map(|v| op(v)).collect();
        // Rayleigh–Ritz on span(x)
        let bx: Vec<Vec<f64>> = x.iter().map(|v| bmat.matvec(v)).collect();
        let ax: Vec<Vec<f64>> = x
            .iter()
            .map(|v| v.iter().zip(&lp.q2).map(|(a, q)| a * q).collect())
            .collect();
        let gram = |u: &[Vec<f64>]| {
            DMatrix::from_fn(block, block, |i, j| x[i].iter().zip(&u[j]).map(|(a, b)| a * b).sum::<f64>())
        };
        let (ga, gb) = (gram(&ax), gram(&bx));
        let gb = (&gb + gb.transpose()) * 0.5;
        let chol = gb
            .cholesky()
            .ok_or_else(|| LabError::Spectral("Ritz basis lost rank".into()))?;
        let linv = chol.l().try_inverse().expect("triangular");
        let c = &linv * ((&ga + ga.transpose()) * 0.5) * linv.transpose();
        let eig = SymmetricEigen::new(c);
        let mut order: Vec<usize> = (0..block).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].partial_cmp(&eig.eigenvalues[a]).unwrap());
        let vecs = linv.transpose() * &eig.eigenvectors;
        x = order
            .iter()
            .map(|&col| {
                let mut v = vec![0.0; m];
                for (r, xr) in x.iter().enumerate() {
                    let c = vecs[(r, col)];
                    for (vi, xi) in v.iter_mut().zip(xr) {
                        *vi += c * xi;
                    }
                }
                v
            })
            .collect();
        let top = eig.eigenvalues[order[0]];
        if (top - last).abs() <= 1e-13 * top.abs() {
            return Ok(top);
        }
        last = top;
    }
    Ok(last)
}

/// Minimum of `Φ(h)/‖h‖²_{H¹}` over radial `h` with the given constraints.
pub fn coercivity_minimum(lp: &LinearizedPair, sd: &SpectralData, which: Constraints) -> Result<CoercivityReport> {
    let d2q = lp.grid.d2(&lp.fq);
    let (c_plus, c_minus): (Vec<Vec<f64>>, Vec<Vec<f64>>) = match which {
        Constraints::None => (vec![], vec![]),
        Constraints::GPerp => (vec![d2q], vec![lp.fq.clone()]),
        Constraints::GPerpPrime => (
            vec![sd.y2.interior_re()],
            vec![lp.fq.clone(), sd.y1.interior_re()],
        ),
    };
    let plus_part = 0.5 * (1.0 - 3.0 * max_potential_ratio(lp, &c_plus)?);
    let minus_part = 0.5 * (1.0 - max_potential_ratio(lp, &c_minus)?);
    let minimum = plus_part.min(minus_part);
    Ok(CoercivityReport {
        constraints: which,
        minimum,
        plus_part,
        minus_part,
        positive: minimum > 0.0,
    })
}

#[derive(Debug, Clone)]
pub struct ModeProjection {
    pub alpha_plus: f64,
    pub alpha_minus: f64,
    pub beta0: f64,
    pub v_perp: RadialField,
}

/// `v = α₊𝒴₊ + α₋𝒴₋ + β₀Q₀ + v⊥` with `Q₀ = iQ/‖Q‖₂`.
pub fn project_modes(v: &RadialField, sd: &SpectralData, lp: &LinearizedPair, gs: &GroundState) -> Result<ModeProjection> {
    v.same_grid(&gs.q)?;
    let yp = sd.y_plus();
    let ym = sd.y_minus();
    let alpha_plus = bilinear(v, &ym, lp);
    let alpha_minus = bilinear(v, &yp, lp);
    let q0 = gs.q.scale(Complex64::new(0.0, 1.0 / gs.mass.sqrt()));
    let beta0 = v.dot(&q0) - alpha_plus * yp.dot(&q0) - alpha_minus * ym.dot(&q0);
    let v_perp = v
        .axpy(Complex64::new(-alpha_plus, 0.0), &yp)
        .axpy(Complex64::new(-alpha_minus, 0.0), &ym)
        .axpy(Complex64::new(-beta0, 0.0), &q0);
    Ok(ModeProjection {
        alpha_plus,
        alpha_minus,
        beta0,
        v_perp,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct ModeResiduals {
    pub t: Vec<f64>,
    pub alpha_plus: Vec<f64>,
    pub alpha_minus: Vec<f64>,
    /// `α₋' - e₀α₋`.
    pub residual_minus: Vec<f64>,
    /// `α₊' + e₀α₊`.
    pub residual_plus: Vec<f64>,
    /// `dΦ(v)/dt`.
    pub dphi_dt: Vec<f64>,
}

/// Three-point derivative on a possibly nonuniform mesh at the middle node.
fn fd_mid(t: [f64; 3], y: [f64; 3]) -> f64 {
    let (h1, h2) = (t[1] - t[0], t[2] - t[1]);
    (-h2 / (h1 * (h1 + h2))) * y[0] + ((h2 - h1) / (h1 * h2)) * y[1] + (h1 / (h2 * (h1 + h2))) * y[2]
}

/// Residuals of the mode ODEs along samples `(t, v(t))`, at interior samples.
pub fn mode_ode_residuals(
    samples: &[(f64, RadialField)],
    sd: &SpectralData,
    lp: &LinearizedPair,
    gs: &GroundState,
) -> Result<ModeResiduals> {
    if samples.len() < 3 {
        return Err(LabError::InsufficientData(format!(
            "{} samples; need at least 3",
            samples.len()
        )));
    }
    let mut ap = Vec::with_capacity(samples.len());
    let mut am = Vec::with_capacity(samples.len());
    let mut ph = Vec::with_capacity(samples.len());
    for (_, v) in samples {
        let pr = project_modes(v, sd, lp, gs)?;
        ap.push(pr.alpha_plus);
        am.push(pr.alpha_minus);
        ph.push(phi(v, lp));
    }
    let mut out = ModeResiduals {
        t: vec![],
        alpha_plus: vec![],
        alpha_minus: vec![],
        residual_minus: vec![],
        residual_plus: vec![],
        dphi_dt: vec![],
    };
    for i in 1..samples.len() - 1 {
        let t = [samples[i - 1].0, samples[i].0, samples[i + 1].0];
        let dap = fd_mid(t, [ap[i - 1], ap[i], ap[i + 1]]);
        let dam = fd_mid(t, [am[i - 1], am[i], am[i + 1]]);
        out.t.push(t[1]);
        out.alpha_plus.push(ap[i]);
        out.alpha_minus.push(am[i]);
        out.residual_minus.push(dam - sd.e0 * am[i]);
        out.residual_plus.push(dap + sd.e0 * ap[i]);
        out.dphi_dt.push(fd_mid(t, [ph[i - 1], ph[i], ph[i + 1]]));
    }
    Ok(out)
}

/// `I(u) = ‖∇u‖³‖u‖/(‖∇Q‖³‖Q‖) - ‖u‖₄⁴/‖Q‖₄⁴`, nonnegative by the sharp
/// Gagliardo–Nirenberg inequality.
pub fn gn_deficit(u: &RadialField, gs: &GroundState) -> f64 {
    let n = u.norms();
    n.grad_l2sq.powf(1.5) * n.l2sq.sqrt() / (gs.grad_sq.powf(1.5) * gs.mass.sqrt()) - n.l4_4 / gs.l4_4
}

/// Second-order coefficient of `α ↦ I(Q + αh)` for `h` with `∫∇Q·∇h₁ = 0`:
/// `Φ(h)/M - (∫Qh₁)²/(2M²)`.
pub fn gn_quadratic_coefficient(h: &RadialField, lp: &LinearizedPair, gs: &GroundState) -> f64 {
    let qh = gs.q.dot(&h.real_part());
    phi(h, lp) / gs.mass - qh * qh / (2.0 * gs.mass * gs.mass)
}

/// Removes the `Q` component of `h₁` in the `∫∇Q·∇` pairing.
pub fn gradient_orthogonalize(h: &RadialField, gs: &GroundState) -> RadialField {
    let c = h.real_part().grad_dot(&gs.q) / gs.grad_sq;
    h.axpy(Complex64::new(-c, 0.0), &gs.q)
}

#[derive(Debug, Clone, Serialize)]
pub struct GagliardoReport {
    pub samples: usize,
    /// Smallest `M·coefficient/‖h‖²_{H¹}` over the samples.
    pub min_normalized: f64,
    pub all_nonnegative: bool,
}

pub fn gagliardo_quadratic_check(lp: &LinearizedPair, gs: &GroundState, samples: &[RadialField]) -> GagliardoReport {
    let mut min_normalized = f64::INFINITY;
    for h in samples {
        let h = gradient_orthogonalize(h, gs);
        let c = gn_quadratic_coefficient(&h, lp, gs) * gs.mass / h.h1sq();
        min_normalized = min_normalized.min(c);
    }
    GagliardoReport {
        samples: samples.len(),
        min_normalized,
        all_nonnegative: min_normalized >= -1e-8,
    }
}
