//! Approximate special solutions `𝒱ₖ = Σ e^{-je₀t} 𝒵ⱼ` of
//! `∂ₜv + 𝓛v = R(v)`, built by resolvent recursion from `𝒵₁ = A𝒴₊`.

use std::sync::Arc;

use log::warn;
use num_complex::Complex64;
use serde::Serialize;

use crate::error::{LabError, Result};
use crate::evolve::{exp_rate_fit, RateFit};
use crate::grid::{RadialField, RadialGrid};
use crate::ground_state::{energy, mass, GroundState};
use crate::linearized::{LinearizedPair, SpectralData};

#[derive(Debug, Clone, Copy)]
pub struct ProfileOptions {
    pub max_order: usize,
    /// Pivot-ratio bound on the resolvent factorization.
    pub condition_limit: f64,
}

impl Default for ProfileOptions {
    fn default() -> Self {
        Self {
            max_order: 6,
            condition_limit: 1e12,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ProfileExpansion {
    pub a_param: f64,
    pub order: usize,
    /// `𝒵₁ … 𝒵ₖ`.
    pub z: Vec<RadialField>,
    pub e0: f64,
    /// Pivot ratios of the resolvent factorizations for `j = 2..k`.
    pub conditions: Vec<f64>,
    grid: Arc<RadialGrid>,
}

fn values(f: &RadialField) -> Vec<Complex64> {
    (0..f.len()).map(|i| f.value(i)).collect()
}

fn field(grid: &Arc<RadialGrid>, v: &[Complex64]) -> RadialField {
    RadialField::new(grid.clone(), v.iter().map(|z| z.re).collect(), v.iter().map(|z| z.im).collect())
        .expect("length matches grid")
}

/// `R(h) = iQ(2|h|² + h²) + i|h|²h`, pointwise.
pub fn nonlinearity(h: &RadialField, q: &RadialField) -> RadialField {
    let i = Complex64::i();
    let v: Vec<Complex64> = (0..h.len())
        .map(|k| {
            let z = h.value(k);
            let qk = q.re()[k];
            let m2 = z.norm_sqr();
            i * (qk * (2.0 * m2 + z * z) + m2 * z)
        })
        .collect();
    field(h.grid(), &v)
}

/// Coefficient of `e^{-je₀t}` in `R(Σ e^{-ae₀t}𝒵ₐ)` given `𝒵₁ … 𝒵_{j-1}`.
fn r_coefficient(z: &[Vec<Complex64>], q: &[f64], j: usize) -> Vec<Complex64> {
    let n = q.len();
    let i = Complex64::i();
    let mut out = vec![Complex64::new(0.0, 0.0); n];
    for a in 1..j {
        let b = j - a;
        if b > z.len() || a > z.len() {
            continue;
        }
        let (za, zb) = (&z[a - 1], &z[b - 1]);
        for k in 0..n {
            out[k] += i * q[k] * (2.0 * za[k] * zb[k].conj() + za[k] * zb[k]);
        }
    }
    for a in 1..j {
        for b in 1..j - a {
            let c = j - a - b;
            if a > z.len() || b > z.len() || c > z.len() {
                continue;
            }
            let (za, zb, zc) = (&z[a - 1], &z[b - 1], &z[c - 1]);
            for k in 0..n {
                out[k] += i * za[k] * zb[k].conj() * zc[k];
            }
        }
    }
    out
}

/// Solves `(𝓛 - s)x = f` on the interleaved real block system.
pub fn solve_resolvent(lp: &LinearizedPair, s: f64, rhs: &RadialField, condition_limit: f64) -> Result<(RadialField, f64)> {
    let lu = lp
        .block_matrix(s)
        .factor()
        .map_err(|_| LabError::Resolvent {
            shift: s,
            condition: f64::INFINITY,
        })?;
    let condition = lu.pivot_ratio();
    if !(condition <= condition_limit) {
        return Err(LabError::Resolvent { shift: s, condition });
    }
    let (fr, fi) = (rhs.interior_re(), rhs.interior_im());
    let mut x: Vec<f64> = fr.iter().zip(&fi).flat_map(|(a, b)| [*a, *b]).collect();
    lu.solve_in_place(&mut x);
    let x1: Vec<f64> = x.iter().step_by(2).copied().collect();
    let x2: Vec<f64> = x.iter().skip(1).step_by(2).copied().collect();
    Ok((RadialField::from_interior(lp.grid(), &x1, &x2), condition))
}

pub fn build_profiles(a: f64, k: usize, sd: &SpectralData, lp: &LinearizedPair, gs: &GroundState) -> Result<ProfileExpansion> {
    build_profiles_with(a, k, sd, lp, gs, &ProfileOptions::default())
}

pub fn build_profiles_with(
    a: f64,
    k: usize,
    sd: &SpectralData,
    lp: &LinearizedPair,
    gs: &GroundState,
    opts: &ProfileOptions,
) -> Result<ProfileExpansion> {
    if k == 0 {
        return Err(LabError::Precondition("expansion order must be at least 1".into()));
    }
    if k > opts.max_order {
        return Err(LabError::OrderTooHigh {
            order: k,
            cap: opts.max_order,
        });
    }
    let grid = gs.grid().clone();
    let z1 = sd.y_plus().scale(Complex64::new(a, 0.0));
    let mut zs = vec![values(&z1)];
    let mut z = vec![z1];
    let mut conditions = Vec::new();
    for j in 2..=k {
        let s = j as f64 * sd.e0;
        // only 0 and ±e₀ are discrete real eigenvalues
        if (s - sd.e0).abs() < 1e-6 {
            return Err(LabError::Resolvent {
                shift: s,
                condition: f64::INFINITY,
            });
        }
        let rhs = field(&grid, &r_coefficient(&zs, gs.q.re(), j));
        let (zj, cond) = solve_resolvent(lp, s, &rhs, opts.condition_limit)?;
        conditions.push(cond);
        zs.push(values(&zj));
        z.push(zj);
    }
    Ok(ProfileExpansion {
        a_param: a,
        order: k,
        z,
        e0: sd.e0,
        conditions,
        grid,
    })
}

impl ProfileExpansion {
    pub fn grid(&self) -> &Arc<RadialGrid> {
        &self.grid
    }
}

/// `𝒱ₖ(t) = Σⱼ e^{-je₀t}𝒵ⱼ`.
pub fn evaluate_v(pe: &ProfileExpansion, t: f64) -> RadialField {
    let mut v = RadialField::zeros(&pe.grid);
    for (j, zj) in pe.z.iter().enumerate() {
        let w = (-((j + 1) as f64) * pe.e0 * t).exp();
        v = v.axpy(Complex64::new(w, 0.0), zj);
    }
    v
}

/// `∂ₜ𝒱ₖ(t)`, analytic.
pub fn evaluate_dv(pe: &ProfileExpansion, t: f64) -> RadialField {
    let mut v = RadialField::zeros(&pe.grid);
    for (j, zj) in pe.z.iter().enumerate() {
        let jj = (j + 1) as f64;
        let w = -jj * pe.e0 * (-jj * pe.e0 * t).exp();
        v = v.axpy(Complex64::new(w, 0.0), zj);
    }
    v
}

/// `Q + 𝒱ₖ(t₀)` in the profile frame.
pub fn approximate_initial_data(pe: &ProfileExpansion, t0: f64, gs: &GroundState) -> RadialField {
    let v = evaluate_v(pe, t0);
    if v.h1() >= 0.1 * gs.q.h1() {
        warn!(
            "profile perturbation at t0 = {t0} has H1 norm {:.3e}, not small against Q",
            v.h1()
        );
    }
    &gs.q + &v
}

/// `‖∂ₜ𝒱ₖ + 𝓛𝒱ₖ - R(𝒱ₖ)‖₂`.
pub fn pde_residual(pe: &ProfileExpansion, t: f64, gs: &GroundState, lp: &LinearizedPair) -> f64 {
    let v = evaluate_v(pe, t);
    let r = &(&evaluate_dv(pe, t) + &lp.apply_block(&v)) - &nonlinearity(&v, &gs.q);
    r.l2()
}

/// `t₁ = -t₀ - log(A)/e₀`, so that `e^{-e₀(t₀+t₁)} = A`.
pub fn time_shift_relation(a: f64, t0: f64, e0: f64) -> Result<f64> {
    if !(a > 0.0) {
        return Err(LabError::Domain(format!("A = {a} must be positive")));
    }
    Ok(-t0 - a.ln() / e0)
}

/// Time at which `|A|e^{-e₀t} = size`.
pub fn time_for_size(a: f64, size: f64, e0: f64) -> f64 {
    (a.abs() / size).ln() / e0
}

#[derive(Debug, Clone, Serialize)]
pub struct ResidualLadder {
    pub order: usize,
    pub fit: RateFit,
    /// `-(k+1)e₀`.
    pub expected: f64,
    pub relative_error: f64,
}

/// Decay rate of `pde_residual` over the window where `|A|e^{-e₀t}` runs
/// from `size_hi` down to `size_hi/10`.
pub fn residual_ladder(pe: &ProfileExpansion, gs: &GroundState, lp: &LinearizedPair, size_hi: f64, samples: usize) -> Result<ResidualLadder> {
    let t_a = time_for_size(pe.a_param, size_hi, pe.e0);
    let t_b = time_for_size(pe.a_param, size_hi / 10.0, pe.e0);
    let series: Vec<(f64, f64)> = (0..samples)
        .map(|i| {
            let t = t_a + (t_b - t_a) * i as f64 / (samples - 1) as f64;
            (t, pde_residual(pe, t, gs, lp))
        })
        .collect();
    let fit = exp_rate_fit(&series, None)?;
    let expected = -((pe.order + 1) as f64) * pe.e0;
    Ok(ResidualLadder {
        order: pe.order,
        relative_error: (fit.rate - expected).abs() / expected.abs(),
        fit,
        expected,
    })
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct MassEnergyDeviation {
    pub mass: f64,
    pub energy: f64,
    pub grad_deficit: f64,
}

/// `M[Q+𝒱ₖ(t₀)] - M[Q]`, `E[...] - E[Q]` and `∫|∇(Q+𝒱ₖ)|² - ∫|∇Q|²`.
pub fn mass_energy_deviation(pe: &ProfileExpansion, t0: f64, gs: &GroundState) -> MassEnergyDeviation {
    let u = &gs.q + &evaluate_v(pe, t0);
    MassEnergyDeviation {
        mass: mass(&u) - gs.mass,
        energy: energy(&u) - gs.energy,
        grad_deficit: u.grad_sq() - gs.grad_sq,
    }
}
