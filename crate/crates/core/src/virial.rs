//! Variance, localized variance and the virial identities for radial
//! fields, plus the Cauchy–Schwarz type bound on `Im ∫(∇φ·∇f)f̄`.

use std::sync::{Arc, OnceLock};

use log::warn;
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::Serialize;

use crate::error::{LabError, Result};
use crate::evolve::{exp_rate_fit, EvolutionTrace, RateFit};
use crate::grid::{RadialField, RadialGrid};
use crate::ground_state::{energy, mass, GroundState};

/// `Im(ū ∂ᵣu)` at every node.
fn current(u: &RadialField) -> Vec<f64> {
    let g = u.grid();
    let dre = g.radial_derivative_real(u.re());
    let dim = g.radial_derivative_real(u.im());
    (0..u.len()).map(|i| u.re()[i] * dim[i] - u.im()[i] * dre[i]).collect()
}

/// `|∂ᵣu|²` at every node.
fn radial_gradient_sq(u: &RadialField) -> Vec<f64> {
    let g = u.grid();
    let dre = g.radial_derivative_real(u.re());
    let dim = g.radial_derivative_real(u.im());
    dre.iter().zip(&dim).map(|(a, b)| a * a + b * b).collect()
}

/// `∫|x|²|u|²`.
pub fn variance(u: &RadialField) -> f64 {
    let g = u.grid();
    let m = u.modulus_sq();
    let w: Vec<f64> = m.iter().zip(g.nodes()).map(|(v, r)| r * r * v).collect();
    let total = g.inner_sum(&w);
    let cut = 0.9 * g.r_max();
    let tail: Vec<f64> = w.iter().zip(g.nodes()).map(|(v, r)| if *r > cut { *v } else { 0.0 }).collect();
    let t = g.inner_sum(&tail);
    if t > 1e-6 * total.abs() {
        warn!("variance not resolved: {:.2e} of it lies beyond r = {cut}", t / total);
    }
    total
}

/// `y' = 4 Im ∫ ū x·∇u`.
pub fn variance_rate(u: &RadialField) -> f64 {
    let g = u.grid();
    let j = current(u);
    let w: Vec<f64> = j.iter().zip(g.nodes()).map(|(v, r)| r * v).collect();
    4.0 * g.inner_sum(&w)
}

/// Derivatives matched at both ends of the bridge.
const SMOOTHNESS: usize = 5;
const BRIDGE_LEN: usize = 2 * SMOOTHNESS + 2;

/// Polynomial bridge on `[1, 2]` from `r²` down to 0, matching derivatives
/// up to order 5 at both ends, in powers of `s = r - 1`. This keeps `Δ²φ`
/// continuously differentiable, which the quadrature of `A_R` needs.
fn bridge() -> &'static [f64; BRIDGE_LEN] {
    static C: OnceLock<[f64; BRIDGE_LEN]> = OnceLock::new();
    C.get_or_init(|| {
        let fact = |k: usize| (1..=k).product::<usize>() as f64;
        let n = BRIDGE_LEN;
        let mut a = DMatrix::<f64>::zeros(n, n);
        let mut b = DVector::<f64>::zeros(n);
        let m = SMOOTHNESS + 1;
        for k in 0..m {
            a[(k, k)] = fact(k);
            b[k] = [1.0, 2.0, 2.0].get(k).copied().unwrap_or(0.0);
            for j in k..n {
                a[(m + k, j)] = fact(j) / fact(j - k);
            }
        }
        let x = a.lu().solve(&b).expect("bridge system is regular");
        let mut out = [0.0; BRIDGE_LEN];
        out.copy_from_slice(x.as_slice());
        out
    })
}

/// `[φ, φ', φ'', φ''', φ'''']` at radius `r`.
pub fn cutoff_derivatives(r: f64) -> [f64; 5] {
    let r = r.abs();
    if r <= 1.0 {
        return [r * r, 2.0 * r, 2.0, 0.0, 0.0];
    }
    if r >= 2.0 {
        return [0.0; 5];
    }
    let s = r - 1.0;
    let c = bridge();
    let mut out = [0.0; 5];
    for (d, o) in out.iter_mut().enumerate() {
        *o = (d..BRIDGE_LEN)
            .map(|j| {
                let falling: f64 = (0..d).map(|i| (j - i) as f64).product();
                c[j] * falling * s.powi((j - d) as i32)
            })
            .sum();
    }
    out
}

/// `Δφ` and `Δ²φ` of the radial cutoff.
pub fn cutoff_laplacians(r: f64) -> (f64, f64) {
    let r = r.abs();
    if r <= 1.0 {
        return (6.0, 0.0);
    }
    if r >= 2.0 {
        return (0.0, 0.0);
    }
    let [_, p1, p2, p3, p4] = cutoff_derivatives(r);
    let lap = p2 + 2.0 * p1 / r;
    let lap_d1 = p3 + 2.0 * p2 / r - 2.0 * p1 / (r * r);
    let lap_d2 = p4 + 2.0 * p3 / r - 4.0 * p2 / (r * r) + 4.0 * p1 / (r * r * r);
    (lap, lap_d2 + 2.0 * lap_d1 / r)
}

/// `φ(·/R)` and its derivatives sampled on a grid.
#[derive(Debug, Clone)]
pub struct CutoffProfile {
    pub radius_scale: f64,
    pub phi: Vec<f64>,
    /// `φ'(r/R)`.
    pub phi_first: Vec<f64>,
    pub phi_second: Vec<f64>,
    pub phi_laplacian: Vec<f64>,
    pub phi_bilaplacian: Vec<f64>,
    grid: Arc<RadialGrid>,
}

impl CutoffProfile {
    pub fn new(grid: &Arc<RadialGrid>, radius_scale: f64) -> Result<Self> {
        if !(radius_scale > 0.0) {
            return Err(LabError::Precondition(format!("cutoff scale {radius_scale} must be positive")));
        }
        if 2.0 * radius_scale > grid.r_max() {
            return Err(LabError::CutoffUnresolved {
                two_r: 2.0 * radius_scale,
                r_max: grid.r_max(),
            });
        }
        let n = grid.n_points();
        let mut c = Self {
            radius_scale,
            phi: Vec::with_capacity(n),
            phi_first: Vec::with_capacity(n),
            phi_second: Vec::with_capacity(n),
            phi_laplacian: Vec::with_capacity(n),
            phi_bilaplacian: Vec::with_capacity(n),
            grid: grid.clone(),
        };
        for r in grid.nodes() {
            let x = r / radius_scale;
            let d = cutoff_derivatives(x);
            let (lap, bilap) = cutoff_laplacians(x);
            c.phi.push(d[0]);
            c.phi_first.push(d[1]);
            c.phi_second.push(d[2]);
            c.phi_laplacian.push(lap);
            c.phi_bilaplacian.push(bilap);
        }
        Ok(c)
    }

    pub fn grid(&self) -> &Arc<RadialGrid> {
        &self.grid
    }

    /// Largest `φ''` of the bridge (sampled finely, independent of the grid).
    pub fn max_phi_second() -> f64 {
        (0..=20000)
            .map(|k| cutoff_derivatives(1.0 + k as f64 / 20000.0)[2])
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min_phi() -> f64 {
        (0..=20000)
            .map(|k| cutoff_derivatives(1.0 + k as f64 / 20000.0)[0])
            .fold(f64::INFINITY, f64::min)
    }
}

/// `∫R²φ(x/R)|u|²`.
pub fn localized_variance(u: &RadialField, c: &CutoffProfile) -> Result<f64> {
    u.same_grid_as(c.grid())?;
    let r2 = c.radius_scale * c.radius_scale;
    let w: Vec<f64> = u.modulus_sq().iter().zip(&c.phi).map(|(m, p)| r2 * p * m).collect();
    Ok(u.grid().inner_sum(&w))
}

/// `y'_R = 2R Im ∫ ū ∇φ(x/R)·∇u`.
pub fn localized_rate(u: &RadialField, c: &CutoffProfile) -> Result<f64> {
    u.same_grid_as(c.grid())?;
    let j = current(u);
    let w: Vec<f64> = j.iter().zip(&c.phi_first).map(|(v, p)| p * v).collect();
    Ok(2.0 * c.radius_scale * u.grid().inner_sum(&w))
}

/// `A_R(u) = 4∫(φ''-2)|∂ᵣu|² - ∫(Δφ-6)|u|⁴ - R⁻²∫Δ²φ|u|²`, all at `x/R`.
pub fn localized_remainder(u: &RadialField, c: &CutoffProfile) -> Result<f64> {
    u.same_grid_as(c.grid())?;
    let g = u.grid();
    let grad = radial_gradient_sq(u);
    let m = u.modulus_sq();
    let r2 = c.radius_scale * c.radius_scale;
    let w: Vec<f64> = (0..u.len())
        .map(|i| {
            4.0 * (c.phi_second[i] - 2.0) * grad[i]
                - (c.phi_laplacian[i] - 6.0) * m[i] * m[i]
                - c.phi_bilaplacian[i] * m[i] / r2
        })
        .collect();
    Ok(g.inner_sum(&w))
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct VirialPoint {
    pub t: f64,
    pub y: f64,
    pub y_rate: f64,
    /// Five-point difference of `y'`.
    pub y_rate_fd_accel: f64,
    /// `4(∫|∇Q|² - ∫|∇u|²)`.
    pub minus4delta: f64,
    pub a_r: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct VirialReport {
    pub applicable: bool,
    pub reason: Option<String>,
    pub radius_scale: Option<f64>,
    /// Largest `|FD(y') - rhs| / |rhs|` over the interior samples.
    pub max_mismatch: f64,
    pub points: Vec<VirialPoint>,
}

impl VirialReport {
    fn not_applicable(reason: String) -> Self {
        Self {
            applicable: false,
            reason: Some(reason),
            radius_scale: None,
            max_mismatch: f64::NAN,
            points: Vec::new(),
        }
    }
}

/// Relative tolerance on `M = M[Q]`, `E = E[Q]` for the identities.
const THRESHOLD_TOL: f64 = 1e-6;

fn threshold_reason(u: &RadialField, gs: &GroundState, supercritical: bool) -> Option<String> {
    let dm = (mass(u) - gs.mass).abs() / gs.mass;
    let de = (energy(u) - gs.energy).abs() / gs.energy.abs();
    if dm > THRESHOLD_TOL || de > THRESHOLD_TOL {
        return Some(format!("data off threshold: mass {dm:.2e}, energy {de:.2e}"));
    }
    if supercritical && u.grad_sq() <= gs.grad_sq {
        return Some("data is not supercritical".into());
    }
    None
}

/// Snapshots with a uniform spacing, at least five of them.
fn uniform_snapshots(trace: &EvolutionTrace) -> std::result::Result<f64, String> {
    let s = &trace.snapshots;
    if s.len() < 5 {
        return Err(format!("{} snapshots; need at least 5", s.len()));
    }
    let step = s[1].0 - s[0].0;
    let uniform = s.windows(2).all(|w| ((w[1].0 - w[0].0) - step).abs() <= 1e-9 * step.abs());
    if !uniform {
        return Err("snapshots are not evenly spaced".into());
    }
    Ok(step)
}

fn identity_report(
    trace: &EvolutionTrace,
    gs: &GroundState,
    cutoff: Option<&CutoffProfile>,
    supercritical: bool,
) -> Result<VirialReport> {
    let step = match uniform_snapshots(trace) {
        Ok(s) => s,
        Err(reason) => return Ok(VirialReport::not_applicable(reason)),
    };
    if let Some(reason) = threshold_reason(&trace.snapshots[0].1, gs, supercritical) {
        return Ok(VirialReport::not_applicable(reason));
    }
    let mut pts = Vec::with_capacity(trace.snapshots.len());
    for (t, u) in &trace.snapshots {
        let (y, y_rate, a_r) = match cutoff {
            Some(c) => (
                localized_variance(u, c)?,
                localized_rate(u, c)?,
                Some(localized_remainder(u, c)?),
            ),
            None => (variance(u), variance_rate(u), None),
        };
        pts.push(VirialPoint {
            t: *t,
            y,
            y_rate,
            y_rate_fd_accel: f64::NAN,
            minus4delta: 4.0 * (gs.grad_sq - u.grad_sq()),
            a_r,
        });
    }
    let mut worst = 0.0f64;
    for k in 2..pts.len() - 2 {
        let d = &pts;
        let fd = (-d[k + 2].y_rate + 8.0 * d[k + 1].y_rate - 8.0 * d[k - 1].y_rate + d[k - 2].y_rate) / (12.0 * step);
        pts[k].y_rate_fd_accel = fd;
        let rhs = pts[k].minus4delta + pts[k].a_r.unwrap_or(0.0);
        let scale = pts[k].minus4delta.abs().max(pts[k].a_r.unwrap_or(0.0).abs());
        worst = worst.max((fd - rhs).abs() / scale);
    }
    Ok(VirialReport {
        applicable: true,
        reason: None,
        radius_scale: cutoff.map(|c| c.radius_scale),
        max_mismatch: worst,
        points: pts,
    })
}

/// `y'' = -4δ` along a supercritical threshold trace, from evenly spaced
/// snapshots.
pub fn virial_identity_check(trace: &EvolutionTrace, gs: &GroundState) -> Result<VirialReport> {
    identity_report(trace, gs, None, true)
}

/// `y_R'' = 4(∫|∇Q|² - ∫|∇u|²) + A_R` along a threshold trace.
pub fn localized_identity_check(trace: &EvolutionTrace, gs: &GroundState, radius_scale: f64) -> Result<VirialReport> {
    let c = CutoffProfile::new(trace.grid(), radius_scale)?;
    identity_report(trace, gs, Some(&c), false)
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct CauchySchwarzReport {
    /// `|Im ∫ 2r(∂ᵣf) f̄|²`.
    pub lhs: f64,
    /// `δ(f)²·∫4r²|f|²`.
    pub rhs_factor: f64,
    /// `lhs/rhs_factor`; 0 when both vanish.
    pub ratio: f64,
    pub delta: f64,
}

pub fn cauchy_schwarz_check(f: &RadialField, gs: &GroundState) -> Result<CauchySchwarzReport> {
    f.same_grid(&gs.q)?;
    let dm = (mass(f) - gs.mass).abs() / gs.mass;
    let de = (energy(f) - gs.energy).abs() / gs.energy.abs();
    if dm > THRESHOLD_TOL || de > THRESHOLD_TOL {
        return Err(LabError::Precondition(format!(
            "f is off threshold: mass {dm:.2e}, energy {de:.2e}"
        )));
    }
    let im = 0.5 * variance_rate(f);
    let lhs = im * im;
    let delta = (gs.grad_sq - f.grad_sq()).abs();
    let rhs_factor = delta * delta * 4.0 * variance(f);
    let ratio = if lhs == 0.0 { 0.0 } else { lhs / rhs_factor };
    Ok(CauchySchwarzReport {
        lhs,
        rhs_factor,
        ratio,
        delta,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Branch {
    /// `ν < 1`: spread out, `‖∇f‖ < ‖∇Q‖` for small λ.
    Sub,
    /// `ν > 1`.
    Super,
}

/// `e^{iλr²}·cQ(ν·)` with `c` fixing the mass and `ν` on the chosen side of
/// 1 fixing `E = E[Q]`.
pub fn phase_family(gs: &GroundState, lambda: f64, branch: Branch) -> Result<RadialField> {
    let g = gs.grid();
    let build = |nu: f64| -> RadialField {
        let base = gs.scaled(1.0, nu);
        let c = (gs.mass / mass(&base)).sqrt();
        let chirp = RadialField::from_fn(g, |r| Complex64::from_polar(c, lambda * r * r));
        let re: Vec<f64> = (0..base.len()).map(|i| chirp.value(i).re * base.re()[i]).collect();
        let im: Vec<f64> = (0..base.len()).map(|i| chirp.value(i).im * base.re()[i]).collect();
        RadialField::new(g.clone(), re, im).expect("same grid")
    };
    let excess = |nu: f64| energy(&build(nu)) - gs.energy;
    if lambda == 0.0 {
        return Ok(gs.q.clone());
    }
    let (mut lo, mut hi) = match branch {
        Branch::Super => {
            let mut hi = 1.0;
            loop {
                hi += 0.05;
                if excess(hi) < 0.0 {
                    break (hi - 0.05, hi);
                }
                if hi > 3.0 {
                    return Err(LabError::Preparation(format!("no super branch for lambda = {lambda}")));
                }
            }
        }
        Branch::Sub => {
            let mut lo = 1.0;
            loop {
                lo -= 0.01;
                if excess(lo) < 0.0 {
                    break (lo, lo + 0.01);
                }
                if lo < 0.3 {
                    return Err(LabError::Preparation(format!("no sub branch for lambda = {lambda}")));
                }
            }
        }
    };
    // sign at `lo` differs between the branches; track it
    let s_lo = excess(lo).signum();
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if excess(mid).signum() == s_lo {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-15 {
            break;
        }
    }
    Ok(build(0.5 * (lo + hi)))
}

#[derive(Debug, Clone, Serialize)]
pub struct CauchySchwarzSweep {
    pub lambdas: Vec<f64>,
    pub reports: Vec<CauchySchwarzReport>,
    pub max_ratio: f64,
    /// Slope of `log lhs` against `log δ` over the half of the samples with
    /// the smallest δ.
    pub order: Option<RateFit>,
}

/// `λ = ±0.1·2^{-k}`, `k = 0..7`.
pub fn default_lambdas() -> Vec<f64> {
    (0..8)
        .flat_map(|k| {
            let l = 0.1 * 0.5f64.powi(k);
            [-l, l]
        })
        .collect()
}

pub fn cauchy_schwarz_sweep(gs: &GroundState, lambdas: &[f64], branch: Branch) -> Result<CauchySchwarzSweep> {
    let mut reports = Vec::with_capacity(lambdas.len());
    for &l in lambdas {
        reports.push(cauchy_schwarz_check(&phase_family(gs, l, branch)?, gs)?);
    }
    let max_ratio = reports.iter().map(|r| r.ratio).fold(0.0, f64::max);
    let mut small: Vec<&CauchySchwarzReport> = reports.iter().filter(|r| r.lhs > 0.0 && r.delta > 0.0).collect();
    small.sort_by(|a, b| a.delta.total_cmp(&b.delta));
    small.truncate(small.len().div_ceil(2));
    let pts: Vec<(f64, f64)> = small.iter().map(|r| (r.delta.ln(), r.lhs)).collect();
    Ok(CauchySchwarzSweep {
        lambdas: lambdas.to_vec(),
        reports,
        max_ratio,
        order: exp_rate_fit(&pts, None).ok(),
    })
}
