//! Modulation frame `e^{-iθ-it}u = (1+α)Q + h` with
//! `Im ∫Q·e^{-iθ-it}u = 0` and `∫∇Q·∇h₁ = 0`. Radial only, so there is
//! no translation parameter.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{LabError, Result};
use crate::evolve::{EvolutionTrace, ModulationSample};
use crate::grid::RadialField;
use crate::ground_state::{delta, GroundState};

#[derive(Debug, Clone)]
pub struct ModulationFrame {
    pub t: f64,
    pub theta: f64,
    pub alpha: f64,
    pub h: RadialField,
    pub delta: f64,
    /// `δ < δ₀`.
    pub valid: bool,
}

impl ModulationFrame {
    pub fn h_h1(&self) -> f64 {
        self.h.h1()
    }

    /// `|∫Q h₁|`.
    pub fn q_projection(&self, gs: &GroundState) -> f64 {
        self.h.dot(&gs.q).abs()
    }
}

/// `0.1·∫|∇Q|²`.
pub fn default_delta0(gs: &GroundState) -> f64 {
    0.1 * gs.grad_sq
}

fn wrap(x: f64) -> f64 {
    let y = (x + PI).rem_euclid(2.0 * PI) - PI;
    if y == -PI {
        PI
    } else {
        y
    }
}

/// The phase condition `Im(e^{-iφ}∫Qu) = 0` has the roots `arg∫Qu` and
/// `arg∫Qu + π`; the first is the one with positive real projection.
pub fn fit_frame(u: &RadialField, t: f64, gs: &GroundState, delta0: f64) -> Result<ModulationFrame> {
    u.same_grid(&gs.q)?;
    let q = &gs.q;
    let c = Complex64::new(u.real_part().dot(q), u.imag_part().dot(q));
    if !(c.norm() > 1e-12 * u.l2() * q.l2()) {
        return Err(LabError::Degenerate(
            "field has no projection on Q; the phase is undefined".into(),
        ));
    }
    let phase = c.arg();
    let w = u.scale(Complex64::from_polar(1.0, -phase));
    let alpha = w.grad_dot(q) / gs.grad_sq - 1.0;
    let h = w.axpy(Complex64::new(-(1.0 + alpha), 0.0), q);
    let d = delta(u, gs);
    Ok(ModulationFrame {
        t,
        theta: wrap(phase - t),
        alpha,
        h,
        delta: d,
        valid: d < delta0,
    })
}

/// Frames at every snapshot, with θ unwrapped onto a continuous branch.
pub fn frame_series(trace: &EvolutionTrace, gs: &GroundState, delta0: f64) -> Result<Vec<ModulationFrame>> {
    let mut frames = trace
        .snapshots
        .par_iter()
        .map(|(t, u)| fit_frame(u, *t, gs, delta0))
        .collect::<Result<Vec<_>>>()?;
    for k in 1..frames.len() {
        let prev = frames[k - 1].theta;
        let th = frames[k].theta;
        frames[k].theta = prev + wrap(th - prev);
    }
    Ok(frames)
}

pub fn modulation_samples(frames: &[ModulationFrame]) -> Vec<ModulationSample> {
    frames
        .iter()
        .map(|f| ModulationSample {
            t: f.t,
            theta: f.theta,
            alpha: f.alpha,
            h_h1: f.h_h1(),
        })
        .collect()
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct Bracket {
    pub min: f64,
    pub max: f64,
}

impl Bracket {
    fn of(v: impl Iterator<Item = f64>) -> Option<Self> {
        let mut out: Option<Self> = None;
        for x in v {
            let b = out.get_or_insert(Self { min: x, max: x });
            b.min = b.min.min(x);
            b.max = b.max.max(x);
        }
        out
    }

    pub fn is_bounded(&self) -> bool {
        self.min > 0.0 && self.max.is_finite()
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ComparabilityReport {
    pub valid_frames: usize,
    /// Frames with δ above the floor, the ones the ratios use.
    pub used_frames: usize,
    pub alpha_ratio: Option<Bracket>,
    pub h_ratio: Option<Bracket>,
    pub q_ratio: Option<Bracket>,
    /// Every valid frame sat below the floor.
    pub ill_conditioned: bool,
}

impl ComparabilityReport {
    pub fn bounded(&self) -> bool {
        [self.alpha_ratio, self.h_ratio, self.q_ratio]
            .iter()
            .all(|b| b.is_some_and(|b| b.is_bounded()))
    }
}

/// Brackets of `|α|/δ`, `‖h‖_{H¹}/δ` and `|∫Qh₁|/δ` over the valid frames
/// with `δ > floor`.
pub fn comparability_report(frames: &[ModulationFrame], gs: &GroundState, floor: f64) -> Result<ComparabilityReport> {
    let valid: Vec<&ModulationFrame> = frames.iter().filter(|f| f.valid).collect();
    if valid.len() < 5 {
        return Err(LabError::InsufficientData(format!(
            "{} valid frames; need at least 5",
            valid.len()
        )));
    }
    let used: Vec<&&ModulationFrame> = valid.iter().filter(|f| f.delta > floor).collect();
    Ok(ComparabilityReport {
        valid_frames: valid.len(),
        used_frames: used.len(),
        alpha_ratio: Bracket::of(used.iter().map(|f| f.alpha.abs() / f.delta)),
        h_ratio: Bracket::of(used.iter().map(|f| f.h_h1() / f.delta)),
        q_ratio: Bracket::of(used.iter().map(|f| f.q_projection(gs) / f.delta)),
        ill_conditioned: used.is_empty(),
    })
}

/// `1/(2∫|∇Q|²)`, the small-δ limit of `|α|/δ`.
pub fn alpha_delta_limit(gs: &GroundState) -> f64 {
    0.5 / gs.grad_sq
}

/// `(t, |θ'|/δ)` by centered differences over consecutive valid frames
/// with `δ > floor`.
pub fn theta_rate_ratios(frames: &[ModulationFrame], floor: f64) -> Vec<(f64, f64)> {
    frames
        .windows(3)
        .filter(|w| w.iter().all(|f| f.valid && f.delta > floor))
        .map(|w| {
            let d = (w[2].theta - w[0].theta) / (w[2].t - w[0].t);
            (w[1].t, d.abs() / w[1].delta)
        })
        .collect()
}
