//! Crank–Nicolson integration of `i∂ₜu + Δu + |u|²u = 0` on
//! radial fields, with conservation monitoring and blow-up detection.

use std::sync::Arc;

use log::warn;
use num_complex::Complex64;
use serde::Serialize;

use crate::banded::{Banded, BandedLu};
use crate::error::{LabError, Result};
use crate::grid::{RadialField, RadialGrid};
use crate::ground_state::GroundState;
use crate::linearized::{project_modes, LinearizedPair, SpectralData};

const FOUR_PI: f64 = 4.0 * std::f64::consts::PI;

#[derive(Debug, Clone)]
pub struct EvolveOptions {
    pub record_stride: usize,
    /// Blow-up when `‖∇u‖₂ > blowup_factor·‖∇Q‖₂`.
    pub blowup_factor: f64,
    /// Snapshot at the first step reaching each of these times.
    pub snapshot_times: Vec<f64>,
    /// Snapshot every this many recorded samples.
    pub snapshot_stride: Option<usize>,
    /// Warn when `|dt| > cfl_safety·spacing²`.
    pub cfl_safety: f64,
    pub mass_budget: f64,
    pub energy_budget: f64,
    /// Fixed-point iterations allowed per implicit step.
    pub max_iter: usize,
    /// Times the step may be halved when the implicit solve stalls.
    pub max_halvings: usize,
}

impl Default for EvolveOptions {
    fn default() -> Self {
        Self {
            record_stride: 10,
            blowup_factor: 10.0,
            snapshot_times: Vec::new(),
            snapshot_stride: None,
            cfl_safety: 10.0,
            mass_budget: 1e-8,
            energy_budget: 1e-7,
            max_iter: 60,
            max_halvings: 16,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BlowupReason {
    GradExplosion,
    Nan,
    /// The implicit step stopped converging.
    SolverStall,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct Blowup {
    pub detected_at: f64,
    pub reason: BlowupReason,
    /// `‖∇u‖₂/‖∇Q‖₂` at detection.
    pub grad_ratio: f64,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct ModeSample {
    pub t: f64,
    pub alpha_plus: f64,
    pub alpha_minus: f64,
    pub beta0: f64,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct ModulationSample {
    pub t: f64,
    pub theta: f64,
    pub alpha: f64,
    pub h_h1: f64,
}

#[derive(Debug, Clone)]
pub struct EvolutionTrace {
    pub times: Vec<f64>,
    pub mass_series: Vec<f64>,
    pub energy_series: Vec<f64>,
    /// `∫|∇u|²`.
    pub grad_series: Vec<f64>,
    pub delta_series: Vec<f64>,
    /// `∫|u|⁴`.
    pub pot_series: Vec<f64>,
    pub blowup: Option<Blowup>,
    pub snapshots: Vec<(f64, RadialField)>,
    pub modulation_series: Option<Vec<ModulationSample>>,
    pub mode_series: Option<Vec<ModeSample>>,
    pub dt: f64,
    /// Smallest step used after halvings.
    pub min_step: f64,
    pub steps: usize,
    /// Drift over budget.
    pub flagged: bool,
    grid: Arc<RadialGrid>,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct Drift {
    pub mass: f64,
    pub energy: f64,
}

impl EvolutionTrace {
    pub fn grid(&self) -> &Arc<RadialGrid> {
        &self.grid
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn final_time(&self) -> f64 {
        *self.times.last().expect("trace has the initial sample")
    }

    /// Largest relative deviation from the initial value, divided by the
    /// elapsed time floored at 1.
    pub fn drift(&self) -> Drift {
        let rate = |s: &[f64]| {
            let s0 = s[0];
            let scale = s0.abs().max(f64::MIN_POSITIVE);
            s.iter()
                .zip(&self.times)
                .map(|(v, t)| (v - s0).abs() / scale / (t - self.times[0]).abs().max(1.0))
                .fold(0.0, f64::max)
        };
        Drift {
            mass: rate(&self.mass_series),
            energy: rate(&self.energy_series),
        }
    }

    /// Snapshot nearest to `t`.
    pub fn snapshot_near(&self, t: f64) -> Option<&(f64, RadialField)> {
        self.snapshots
            .iter()
            .min_by(|a, b| (a.0 - t).abs().partial_cmp(&(b.0 - t).abs()).unwrap())
    }

    /// Mode projections of `v = e^{-it}u - Q` at every snapshot.
    pub fn attach_modes(&mut self, sd: &SpectralData, lp: &LinearizedPair, gs: &GroundState) -> Result<()> {
        let mut out = Vec::with_capacity(self.snapshots.len());
        for (t, u) in &self.snapshots {
            let v = &u.scale(Complex64::from_polar(1.0, -t)) - &gs.q;
            let p = project_modes(&v, sd, lp, gs)?;
            out.push(ModeSample {
                t: *t,
                alpha_plus: p.alpha_plus,
                alpha_minus: p.alpha_minus,
                beta0: p.beta0,
            });
        }
        self.mode_series = Some(out);
        Ok(())
    }

    /// `(t, v(t) = e^{-it}u - Q)` at the snapshots.
    pub fn perturbations(&self, gs: &GroundState) -> Vec<(f64, RadialField)> {
        self.snapshots
            .iter()
            .map(|(t, u)| (*t, &u.scale(Complex64::from_polar(1.0, -t)) - &gs.q))
            .collect()
    }

    /// Rebuild a trace from stored snapshots; the series are sampled at the
    /// snapshot times only.
    pub fn from_snapshots(snapshots: Vec<(f64, RadialField)>, gs: &GroundState, dt: f64) -> Result<Self> {
        let Some((_, first)) = snapshots.first() else {
            return Err(LabError::InsufficientData("no snapshots".into()));
        };
        let grid = first.grid().clone();
        for (_, u) in &snapshots {
            u.same_grid(&gs.q)?;
        }
        let mut trace = EvolutionTrace {
            times: vec![],
            mass_series: vec![],
            energy_series: vec![],
            grad_series: vec![],
            delta_series: vec![],
            pot_series: vec![],
            blowup: None,
            snapshots: vec![],
            modulation_series: None,
            mode_series: None,
            dt,
            min_step: dt.abs(),
            steps: 0,
            flagged: false,
            grid,
        };
        for (t, u) in &snapshots {
            let (m, g, p) = (u.l2sq(), u.grad_sq(), u.l4_4());
            trace.times.push(*t);
            trace.mass_series.push(m);
            trace.grad_series.push(g);
            trace.pot_series.push(p);
            trace.energy_series.push(0.5 * g - 0.25 * p);
            trace.delta_series.push((gs.grad_sq - g).abs());
        }
        trace.snapshots = snapshots;
        Ok(trace)
    }
}

/// One step of the Crank–Nicolson scheme with the averaged nonlinearity
/// `½(|uⁿ⁺¹|² + |uⁿ|²)·½(uⁿ⁺¹ + uⁿ)`, on the interior unknowns `F = r u`.
/// It conserves the discrete mass and energy and keeps the discrete ground
/// state an exact relative equilibrium.
struct Stepper {
    grid: Arc<RadialGrid>,
    implicit: BandedLu<Complex64>,
    explicit: Banded<Complex64>,
    inv_r2: Vec<f64>,
    dt: f64,
    max_iter: usize,
}

impl Stepper {
    fn new(grid: &Arc<RadialGrid>, dt: f64, max_iter: usize) -> Result<Self> {
        let d2 = grid.d2_matrix();
        let one = Complex64::new(1.0, 0.0);
        let implicit = d2.to_complex_shifted(Complex64::new(0.0, -0.5 * dt), one).factor()?;
        let explicit = d2.to_complex_shifted(Complex64::new(0.0, 0.5 * dt), one);
        let inv_r2 = grid.nodes()[1..grid.n_points() - 1].iter().map(|r| 1.0 / (r * r)).collect();
        Ok(Self {
            grid: grid.clone(),
            implicit,
            explicit,
            inv_r2,
            dt,
            max_iter,
        })
    }

    /// Advances `f` in place; `guess` seeds the fixed-point iteration.
    /// Returns false if the iteration did not converge.
    fn step(&self, f: &mut Vec<Complex64>, guess: Option<&[Complex64]>) -> bool {
        let base = self.explicit.matvec(f);
        let mut g: Vec<Complex64> = guess.map_or_else(|| f.clone(), |x| x.to_vec());
        let coef = Complex64::new(0.0, 0.5 * self.dt);
        let scale = f.iter().fold(0.0f64, |m, z| m.max(z.norm())).max(f64::MIN_POSITIVE);
        for _ in 0..self.max_iter {
            let mut rhs = base.clone();
            for k in 0..f.len() {
                let m = 0.5 * (g[k].norm_sqr() + f[k].norm_sqr()) * self.inv_r2[k];
                rhs[k] += coef * m * (g[k] + f[k]);
            }
            self.implicit.solve_in_place(&mut rhs);
            let change = rhs.iter().zip(&g).fold(0.0f64, |m, (a, b)| m.max((a - b).norm()));
            if !change.is_finite() || rhs.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
                return false;
            }
            g = rhs;
            if change <= 1e-14 * scale {
                *f = g;
                return true;
            }
        }
        false
    }

    /// `(M, ∫|∇u|², ∫|u|⁴)`.
    fn functionals(&self, f: &[Complex64]) -> (f64, f64, f64) {
        let w = FOUR_PI * self.grid.spacing();
        let re: Vec<f64> = f.iter().map(|z| z.re).collect();
        let im: Vec<f64> = f.iter().map(|z| z.im).collect();
        let (d2r, d2i) = (self.grid.d2(&re), self.grid.d2(&im));
        let mut m = 0.0;
        let mut g = 0.0;
        let mut p = 0.0;
        for k in 0..f.len() {
            let a = f[k].norm_sqr();
            m += a;
            g -= re[k] * d2r[k] + im[k] * d2i[k];
            p += a * a * self.inv_r2[k];
        }
        (w * m, w * g, w * p)
    }
}

/// Integrates from `t0` to `t1`; `dt` carries the direction and is adjusted
/// so that a whole number of steps fits.
pub fn integrate(u0: &RadialField, t0: f64, t1: f64, dt: f64, gs: &GroundState, opts: &EvolveOptions) -> Result<EvolutionTrace> {
    u0.same_grid(&gs.q)?;
    let span = t1 - t0;
    if dt == 0.0 || !dt.is_finite() || (span != 0.0 && span.signum() != dt.signum()) {
        return Err(LabError::Precondition(format!(
            "time step {dt} does not point from {t0} to {t1}"
        )));
    }
    if opts.record_stride == 0 {
        return Err(LabError::Precondition("record_stride must be positive".into()));
    }
    let grid = u0.grid().clone();
    let steps = (span / dt).round().max(if span == 0.0 { 0.0 } else { 1.0 }) as usize;
    let dt = if steps > 0 { span / steps as f64 } else { dt };
    let h = grid.spacing();
    if dt.abs() > opts.cfl_safety * h * h {
        warn!("dt = {dt:.3e} exceeds {} * spacing^2 = {:.3e}", opts.cfl_safety, opts.cfl_safety * h * h);
    }
    let mut stepper = Stepper::new(&grid, dt, opts.max_iter)?;
    let mut f: Vec<Complex64> = u0
        .interior_re()
        .into_iter()
        .zip(u0.interior_im())
        .map(|(a, b)| Complex64::new(a, b))
        .collect();

    let grad_q = gs.grad_sq.sqrt();
    let mut trace = EvolutionTrace {
        times: vec![],
        mass_series: vec![],
        energy_series: vec![],
        grad_series: vec![],
        delta_series: vec![],
        pot_series: vec![],
        blowup: None,
        snapshots: vec![],
        modulation_series: None,
        mode_series: None,
        dt,
        min_step: dt.abs(),
        steps: 0,
        flagged: false,
        grid: grid.clone(),
    };
    let mut pending: Vec<f64> = opts.snapshot_times.clone();
    // order so the next due time is last
    pending.sort_by(|a, b| (b - t0).abs().partial_cmp(&(a - t0).abs()).unwrap());

    let to_field = |f: &[Complex64]| {
        let re: Vec<f64> = f.iter().map(|z| z.re).collect();
        let im: Vec<f64> = f.iter().map(|z| z.im).collect();
        RadialField::from_interior(&grid, &re, &im)
    };
    let record = |trace: &mut EvolutionTrace, t: f64, f: &[Complex64], vals: (f64, f64, f64), force_snap: bool| {
        let (m, g, p) = vals;
        let n = trace.times.len();
        trace.times.push(t);
        trace.mass_series.push(m);
        trace.grad_series.push(g);
        trace.pot_series.push(p);
        trace.energy_series.push(0.5 * g - 0.25 * p);
        trace.delta_series.push((gs.grad_sq - g).abs());
        let by_stride = opts.snapshot_stride.is_some_and(|s| n % s == 0);
        if by_stride || force_snap {
            trace.snapshots.push((t, to_field(f)));
        }
    };

    let due = |pending: &mut Vec<f64>, t: f64| -> bool {
        let mut hit = false;
        while let Some(&s) = pending.last() {
            if (t - s) * dt.signum() >= -1e-12 * dt.abs() {
                pending.pop();
                hit = true;
            } else {
                break;
            }
        }
        hit
    };

    let snap0 = due(&mut pending, t0);
    record(&mut trace, t0, &f, stepper.functionals(&f), snap0);
    let mut prev: Option<Vec<Complex64>> = None;
    let mut cur = dt;
    let mut t = t0;
    let mut k = 0usize;
    let (mut seg_start, mut seg_k) = (t0, 0usize);
    let min_step = dt.abs() * 0.5f64.powi(opts.max_halvings as i32);
    while (t1 - t) * dt.signum() > 0.5 * cur.abs() {
        // linear extrapolation seeds the fixed point
        let guess: Option<Vec<Complex64>> = prev
            .as_ref()
            .map(|p| f.iter().zip(p).map(|(a, b)| 2.0 * a - b).collect());
        let before = f.clone();
        if !stepper.step(&mut f, guess.as_deref()) {
            f = before;
            prev = None;
            if 0.5 * cur.abs() < min_step {
                let vals = stepper.functionals(&f);
                trace.blowup = Some(Blowup {
                    detected_at: t,
                    reason: BlowupReason::SolverStall,
                    grad_ratio: vals.1.max(0.0).sqrt() / grad_q,
                });
                break;
            }
            cur *= 0.5;
            seg_start = t;
            seg_k = 0;
            trace.min_step = trace.min_step.min(cur.abs());
            stepper = Stepper::new(&grid, cur, opts.max_iter)?;
            continue;
        }
        prev = Some(before);
        k += 1;
        seg_k += 1;
        t = seg_start + seg_k as f64 * cur;
        if ((t1 - t) * dt.signum()) < 0.5 * cur.abs() {
            t = t1;
        }
        trace.steps = k;
        let vals = stepper.functionals(&f);
        if !vals.0.is_finite() || !vals.1.is_finite() || !vals.2.is_finite() {
            trace.blowup = Some(Blowup {
                detected_at: t,
                reason: BlowupReason::Nan,
                grad_ratio: f64::NAN,
            });
            break;
        }
        let ratio = vals.1.max(0.0).sqrt() / grad_q;
        let exploded = ratio > opts.blowup_factor;
        let snap = due(&mut pending, t);
        let last = (t1 - t) * dt.signum() <= 0.5 * cur.abs();
        if k % opts.record_stride == 0 || last || exploded || snap {
            record(&mut trace, t, &f, vals, snap);
        }
        if exploded {
            trace.blowup = Some(Blowup {
                detected_at: t,
                reason: BlowupReason::GradExplosion,
                grad_ratio: ratio,
            });
            break;
        }
    }
    let d = trace.drift();
    trace.flagged = d.mass > opts.mass_budget || d.energy > opts.energy_budget;
    if trace.flagged {
        warn!("conservation drift over budget: mass {:.2e}, energy {:.2e}", d.mass, d.energy);
    }
    Ok(trace)
}

#[derive(Debug, Clone, Serialize)]
pub struct SeparationVerdict {
    pub invariant_held: bool,
    pub first_violation: Option<f64>,
    /// Sign of `‖∇u‖₂ - ‖∇Q‖₂` above the floor: -1, 0 (on threshold) or 1.
    pub side: i8,
}

/// Constant sign of `‖∇u(t)‖₂ - ‖∇Q‖₂` wherever it exceeds `floor`.
pub fn gradient_separation_monitor(trace: &EvolutionTrace, gs: &GroundState, floor: f64) -> SeparationVerdict {
    let gq = gs.grad_sq.sqrt();
    let mut side = 0i8;
    let mut first_violation = None;
    for (t, g) in trace.times.iter().zip(&trace.grad_series) {
        let d = g.max(0.0).sqrt() - gq;
        if d.abs() <= floor {
            continue;
        }
        let s = if d > 0.0 { 1 } else { -1 };
        if side == 0 {
            side = s;
        } else if s != side && first_violation.is_none() {
            first_violation = Some(*t);
        }
    }
    SeparationVerdict {
        invariant_held: first_violation.is_none(),
        first_violation,
        side,
    }
}

/// Default floor for [`gradient_separation_monitor`].
pub fn separation_floor(gs: &GroundState) -> f64 {
    1e-6 * gs.grad_sq.sqrt()
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct OrbitDistance {
    pub dist_h1: f64,
    pub theta_star: f64,
}

/// `min_θ ‖u - e^{i(t+θ)}Q‖_{H¹}`; the minimizer is the phase of the H¹
/// pairing of `u` with `Q`.
pub fn distance_to_orbit(u: &RadialField, t: f64, gs: &GroundState) -> OrbitDistance {
    let q = &gs.q;
    let c = Complex64::new(u.real_part().h1_dot(q), u.imag_part().h1_dot(q));
    let phase = if c.norm() > 0.0 { c.arg() } else { t };
    let diff = u - &q.scale(Complex64::from_polar(1.0, phase));
    let pi = std::f64::consts::PI;
    OrbitDistance {
        dist_h1: diff.h1(),
        theta_star: (phase - t + pi).rem_euclid(2.0 * pi) - pi,
    }
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct RateFit {
    pub rate: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub samples: usize,
}

/// Least-squares slope of `log(value)` against `t` over the window.
pub fn exp_rate_fit(series: &[(f64, f64)], window: Option<(f64, f64)>) -> Result<RateFit> {
    let pts: Vec<(f64, f64)> = series
        .iter()
        .copied()
        .filter(|(t, _)| window.is_none_or(|(a, b)| *t >= a.min(b) && *t <= a.max(b)))
        .collect();
    if pts.len() < 8 {
        return Err(LabError::InsufficientData(format!(
            "{} samples in window; need at least 8",
            pts.len()
        )));
    }
    if let Some((t, v)) = pts.iter().find(|(_, v)| !(*v > 0.0)) {
        return Err(LabError::Domain(format!("nonpositive value {v} at t = {t}")));
    }
    let n = pts.len() as f64;
    let mt = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1.ln()).sum::<f64>() / n;
    let (mut stt, mut sty, mut syy) = (0.0, 0.0, 0.0);
    for (t, v) in &pts {
        let (dt, dy) = (t - mt, v.ln() - my);
        stt += dt * dt;
        sty += dt * dy;
        syy += dy * dy;
    }
    if stt == 0.0 {
        return Err(LabError::Degenerate("all samples share one time".into()));
    }
    let rate = sty / stt;
    let r_squared = if syy == 0.0 { 1.0 } else { sty * sty / (stt * syy) };
    Ok(RateFit {
        rate,
        intercept: my - rate * mt,
        r_squared,
        samples: pts.len(),
    })
}
