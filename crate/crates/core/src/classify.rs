//! Threshold data, forward/backward runs and verdicts.
//!
//! Scattering is only certified by proxy: collapse of `∫|u|⁴` with bounded
//! `H¹` norm and `δ` bounded below over a finite horizon.

use std::collections::BTreeMap;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::evolve::{
    distance_to_orbit, exp_rate_fit, gradient_separation_monitor, integrate, separation_floor, EvolutionTrace,
    EvolveOptions, SeparationVerdict,
};
use crate::grid::{random_smooth_field, RadialField};
use crate::ground_state::{energy, mass, GroundState};
use crate::linearized::{LinearizedPair, SpectralData};
use crate::profiles::{approximate_initial_data, build_profiles};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DataKind {
    /// `e^{it₀}(Q + 𝒱ₖᴬ(t₀))`.
    Profile { a: f64, k: usize, t0: f64 },
    /// `e^{iθ}Q`.
    ScaledOrbit { theta: f64 },
    /// `Q` plus a seeded smooth perturbation of relative `H¹` size `size`,
    /// moved back onto `M = M[Q]`, `E = E[Q]`.
    Perturbed {
        seed: u64,
        #[serde(default = "default_perturbation")]
        size: f64,
    },
}

fn default_perturbation() -> f64 {
    1e-2
}

pub fn prepare_threshold_data(
    kind: &DataKind,
    gs: &GroundState,
    sd: &SpectralData,
    lp: &LinearizedPair,
) -> Result<RadialField> {
    prepare_threshold_data_with(kind, gs, sd, lp, 1e-12)
}

/// As [`prepare_threshold_data`], with the `(M, E)` tolerance of the Newton
/// restoration.
pub fn prepare_threshold_data_with(
    kind: &DataKind,
    gs: &GroundState,
    sd: &SpectralData,
    lp: &LinearizedPair,
    newton_tol: f64,
) -> Result<RadialField> {
    match *kind {
        DataKind::Profile { a, k, t0 } => {
            let pe = build_profiles(a, k, sd, lp, gs)?;
            Ok(approximate_initial_data(&pe, t0, gs).scale(Complex64::from_polar(1.0, t0)))
        }
        DataKind::ScaledOrbit { theta } => Ok(gs.q.scale(Complex64::from_polar(1.0, theta))),
        DataKind::Perturbed { seed, size } => {
            if !(size > 0.0 && size < 0.5) {
                return Err(LabError::Precondition(format!(
                    "perturbation size {size} outside (0, 0.5)"
                )));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let h = random_smooth_field(gs.grid(), &mut rng, true);
            let w = gs.q.axpy(Complex64::new(size * gs.q.h1() / h.h1(), 0.0), &h);
            restore_threshold(&w, gs, newton_tol)
        }
    }
}

/// `μ w(ν ·)` with `M = M[Q]` and `E = E[Q]`.
///
/// On the mass-preserving branch `μ² = ν³M[Q]/M[w]` the energy is the cubic
/// `aν² - bν³`, whose maximum is at least `E[Q]` by the sharp
/// Gagliardo–Nirenberg inequality. The root nearest `ν = 1` seeds a Newton
/// polish on the discrete fields.
pub fn restore_threshold(w: &RadialField, gs: &GroundState, tol: f64) -> Result<RadialField> {
    w.same_grid(&gs.q)?;
    let (m0, g0, p0) = (w.l2sq(), w.grad_sq(), w.l4_4());
    if !(m0 > 0.0 && p0 > 0.0) {
        return Err(LabError::Preparation("data has no mass or no potential energy".into()));
    }
    let a = 0.5 * gs.mass / m0 * g0;
    let b = 0.25 * (gs.mass / m0).powi(2) * p0;
    let e = |nu: f64| a * nu * nu - b * nu.powi(3);
    let peak = 2.0 * a / (3.0 * b);
    if e(peak) < gs.energy {
        return Err(LabError::Preparation(format!(
            "energy maximum {:.6e} below the threshold {:.6e}",
            e(peak),
            gs.energy
        )));
    }
    let bisect = |mut lo: f64, mut hi: f64| {
        let rising = e(lo) < e(hi);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if (e(mid) < gs.energy) == rising {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    };
    let low = bisect(0.0, peak);
    let mut hi = 2.0 * peak;
    while e(hi) > gs.energy {
        hi *= 2.0;
    }
    let high = bisect(peak, hi);
    let mut nu = if (low - 1.0).abs() <= (high - 1.0).abs() { low } else { high };
    let mut mu = (nu.powi(3) * gs.mass / m0).sqrt();

    let g = w.grid().clone();
    let build = |mu: f64, nu: f64| RadialField::from_fn(&g, |r| mu * w.sample(nu * r));
    for _ in 0..30 {
        let u = build(mu, nu);
        let (m, gr, p) = (u.l2sq(), u.grad_sq(), u.l4_4());
        let fm = m / gs.mass - 1.0;
        let fe = (0.5 * gr - 0.25 * p) / gs.energy - 1.0;
        if fm.abs() < tol && fe.abs() < tol {
            return Ok(u);
        }
        // derivatives in (log μ, log ν) of the scaling laws
        let j = [
            [2.0 * m / gs.mass, -3.0 * m / gs.mass],
            [(gr - p) / gs.energy, (-0.5 * gr + 0.75 * p) / gs.energy],
        ];
        let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
        if det == 0.0 || !det.is_finite() {
            break;
        }
        let dl_mu = (-fm * j[1][1] + fe * j[0][1]) / det;
        let dl_nu = (-fe * j[0][0] + fm * j[1][0]) / det;
        mu *= dl_mu.exp();
        nu *= dl_nu.exp();
    }
    Err(LabError::Preparation("Newton on (M, E) did not converge".into()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Subcritical,
    Critical,
    Supercritical,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    ConvergesToQOrbit,
    ScatterProxy,
    Blowup,
    Undetermined,
}

#[derive(Debug, Clone, Serialize)]
pub struct Verdict {
    pub side: Side,
    pub forward: Outcome,
    pub backward: Outcome,
    pub rates: BTreeMap<String, f64>,
    pub evidence: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct ClassifyOptions {
    pub dt: f64,
    pub horizon_fwd: f64,
    pub horizon_bwd: f64,
    /// Spacing of the snapshots used for orbit distances.
    pub sample_every: f64,
    pub e0: f64,
    pub evolve: EvolveOptions,
    /// Relative tolerance on `M E = M[Q] E[Q]`.
    pub threshold_tol: f64,
    /// Converging needs a fitted rate at most `-converge_fraction·e₀`.
    pub converge_fraction: f64,
    pub min_r_squared: f64,
    /// Required drop of `∫|u|⁴` for the scattering proxy.
    pub pot_collapse: f64,
    /// `‖u‖_{H¹}` may grow at most by this factor under the proxy.
    pub h1_growth: f64,
    /// `δ` must stay above this fraction of `∫|∇Q|²` over the second half.
    pub delta_floor: f64,
    /// On-orbit tolerance for critical data, relative to `‖Q‖_{H¹}`.
    pub orbit_tol: f64,
    /// Critical data is judged for `|t|` up to this window; beyond it the
    /// unstable mode has amplified step errors by more than `e^{e₀·window}`.
    pub orbit_window: f64,
}

impl ClassifyOptions {
    /// Forward horizon `8/e₀`; backward horizon 4, which the scattering
    /// proxy needs to see the collapse of `∫|u|⁴`.
    pub fn new(e0: f64, dt: f64) -> Self {
        Self {
            dt,
            horizon_fwd: 8.0 / e0,
            horizon_bwd: 4.0,
            sample_every: 0.01,
            e0,
            evolve: EvolveOptions::default(),
            threshold_tol: 1e-6,
            converge_fraction: 0.8,
            min_r_squared: 0.99,
            pot_collapse: 100.0,
            h1_growth: 2.0,
            delta_floor: 0.1,
            orbit_tol: 1e-6,
            orbit_window: 8.0 / e0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Classification {
    pub verdict: Verdict,
    pub forward: EvolutionTrace,
    pub backward: EvolutionTrace,
    pub separation_fwd: SeparationVerdict,
    pub separation_bwd: SeparationVerdict,
}

pub fn side_of(u: &RadialField, gs: &GroundState) -> Side {
    let (gu, gq) = (u.grad_sq().sqrt(), gs.grad_sq.sqrt());
    if (gu - gq).abs() <= separation_floor(gs) {
        return Side::Critical;
    }
    if gu * u.l2() > gq * gs.mass.sqrt() {
        Side::Supercritical
    } else {
        Side::Subcritical
    }
}

fn run(u0: &RadialField, horizon: f64, sign: f64, gs: &GroundState, opts: &ClassifyOptions) -> Result<EvolutionTrace> {
    let n = (horizon / opts.sample_every).round().max(1.0) as usize;
    let mut eo = opts.evolve.clone();
    eo.snapshot_times = (0..=n).map(|k| sign * horizon * k as f64 / n as f64).collect();
    integrate(u0, 0.0, sign * horizon, sign * opts.dt.abs(), gs, &eo)
}

fn distances(trace: &EvolutionTrace, gs: &GroundState) -> Vec<(f64, f64)> {
    trace
        .snapshots
        .iter()
        .map(|(t, u)| (*t, distance_to_orbit(u, *t, gs).dist_h1))
        .collect()
}

fn decide(
    trace: &EvolutionTrace,
    gs: &GroundState,
    opts: &ClassifyOptions,
    tag: &str,
    rates: &mut BTreeMap<String, f64>,
) -> Outcome {
    if let Some(b) = trace.blowup {
        rates.insert(format!("{tag}_blowup_time"), b.detected_at);
        return Outcome::Blowup;
    }
    let horizon = (trace.final_time() - trace.times[0]).abs();

    // decay up to the numerical floor, which must come late in the run
    let d = distances(trace, gs);
    if let Some(imin) = d
        .iter()
        .enumerate()
        .min_by(|a, b| a.1 .1.partial_cmp(&b.1 .1).unwrap())
        .map(|(i, _)| i)
    {
        let reach = (d[imin].0 - d[0].0).abs();
        if reach >= 0.5 * horizon {
            let series: Vec<(f64, f64)> = d[..=imin].iter().map(|(t, v)| (t.abs(), *v)).collect();
            if let Ok(fit) = exp_rate_fit(&series, None) {
                rates.insert(format!("{tag}_distance_rate"), fit.rate);
                rates.insert(format!("{tag}_distance_r2"), fit.r_squared);
                if fit.rate <= -opts.converge_fraction * opts.e0 && fit.r_squared > opts.min_r_squared {
                    return Outcome::ConvergesToQOrbit;
                }
            }
        }
    }

    let pot0 = trace.pot_series[0];
    let pot_end = *trace.pot_series.last().unwrap();
    let collapse = pot0 / pot_end;
    rates.insert(format!("{tag}_pot_collapse"), collapse);
    let h1sq0 = trace.mass_series[0] + trace.grad_series[0];
    let h1_max = trace
        .mass_series
        .iter()
        .zip(&trace.grad_series)
        .map(|(m, g)| m + g)
        .fold(0.0, f64::max);
    let growth = (h1_max / h1sq0).sqrt();
    rates.insert(format!("{tag}_h1_growth"), growth);
    let half = trace.times.len() / 2;
    let delta_min = trace.delta_series[half..].iter().copied().fold(f64::INFINITY, f64::min);
    rates.insert(format!("{tag}_late_delta_min"), delta_min / gs.grad_sq);
    if collapse >= opts.pot_collapse && growth <= opts.h1_growth && delta_min >= opts.delta_floor * gs.grad_sq {
        return Outcome::ScatterProxy;
    }
    Outcome::Undetermined
}

pub fn classify_trajectory(u0: &RadialField, gs: &GroundState, opts: &ClassifyOptions) -> Result<Classification> {
    u0.same_grid(&gs.q)?;
    let me = mass(u0) * energy(u0);
    let me_q = gs.mass * gs.energy;
    if !((me - me_q).abs() <= opts.threshold_tol * me_q.abs()) {
        return Err(LabError::Precondition(format!(
            "M E = {me:.10e} is off the threshold {me_q:.10e}"
        )));
    }
    let side = side_of(u0, gs);
    let (forward, backward) = rayon::join(
        || run(u0, opts.horizon_fwd, 1.0, gs, opts),
        || run(u0, opts.horizon_bwd, -1.0, gs, opts),
    );
    let (forward, backward) = (forward?, backward?);
    let floor = separation_floor(gs);
    let separation_fwd = gradient_separation_monitor(&forward, gs, floor);
    let separation_bwd = gradient_separation_monitor(&backward, gs, floor);

    let mut rates = BTreeMap::new();
    let (fwd, bwd) = if side == Side::Critical {
        let tol = opts.orbit_tol * gs.q.h1();
        let mut outcome = |tr: &EvolutionTrace, tag: &str| {
            let d = distances(tr, gs);
            let worst = d
                .iter()
                .filter(|p| p.0.abs() <= opts.orbit_window * (1.0 + 1e-12))
                .map(|p| p.1)
                .fold(0.0, f64::max);
            rates.insert(format!("{tag}_max_distance"), worst);
            rates.insert(format!("{tag}_end_distance"), d.last().map_or(0.0, |p| p.1));
            if tr.blowup.is_none() && worst <= tol {
                Outcome::ConvergesToQOrbit
            } else {
                Outcome::Undetermined
            }
        };
        (outcome(&forward, "fwd"), outcome(&backward, "bwd"))
    } else {
        (
            decide(&forward, gs, opts, "fwd", &mut rates),
            decide(&backward, gs, opts, "bwd", &mut rates),
        )
    };
    Ok(Classification {
        verdict: Verdict {
            side,
            forward: fwd,
            backward: bwd,
            rates,
            evidence: Vec::new(),
        },
        forward,
        backward,
        separation_fwd,
        separation_bwd,
    })
}

/// Shift `s` with `U^a(t) = e^{-is}U^{a_ref}(t + s)`, from
/// `𝒱^A(t) = 𝒱¹(t - log(A)/e₀)`.
pub fn profile_shift(a: f64, a_ref: f64, e0: f64) -> Result<f64> {
    if !(a * a_ref > 0.0) {
        return Err(LabError::Domain(format!(
            "amplitudes {a} and {a_ref} are not of one sign; no shift relates them"
        )));
    }
    Ok((a_ref / a).ln() / e0)
}

#[derive(Debug, Clone, Serialize)]
pub struct UniquenessReport {
    pub shift: f64,
    /// `(t, ‖u_A(t) - e^{-is}u_B(t+s)‖_{H¹})` over the overlap.
    pub series: Vec<(f64, f64)>,
    pub sup: f64,
    /// Relative to `‖Q‖_{H¹}`.
    pub sup_relative: f64,
    pub decay_rate: Option<f64>,
}

impl UniquenessReport {
    pub fn aligned(&self, tol: f64) -> bool {
        self.sup_relative <= tol
    }
}

/// Compares `u_A(t)` with `e^{-is}u_B(t+s)` at the snapshots of `a` whose
/// shifted time is also a snapshot of `b`. Traces with a common step use the
/// discrete orbit frequency in the phase.
pub fn uniqueness_probe(
    a: &EvolutionTrace,
    b: &EvolutionTrace,
    shift: f64,
    gs: &GroundState,
) -> Result<UniquenessReport> {
    if a.grid() != b.grid() {
        return Err(LabError::GridMismatch("traces live on different grids".into()));
    }
    // the scheme's ground state turns at (2/dt)·atan(dt/2), not 1
    let omega = if a.dt == b.dt && a.dt != 0.0 {
        (2.0 / a.dt) * (0.5 * a.dt).atan()
    } else {
        1.0
    };
    let phase = Complex64::from_polar(1.0, -omega * shift);
    let mut series = Vec::new();
    for (t, u) in &a.snapshots {
        let target = t + shift;
        if let Some((tb, ub)) = b.snapshot_near(target) {
            if (tb - target).abs() <= 1e-9 * (1.0 + target.abs()) {
                series.push((*t, (u - &ub.scale(phase)).h1()));
            }
        }
    }
    if series.len() < 2 {
        return Err(LabError::InsufficientData(format!(
            "{} matched snapshots in the overlap window",
            series.len()
        )));
    }
    let sup = series.iter().map(|p| p.1).fold(0.0, f64::max);
    let decay_rate = if series.iter().all(|p| p.1 > 0.0) {
        exp_rate_fit(&series, None).ok().map(|f| f.rate)
    } else {
        None
    };
    Ok(UniquenessReport {
        shift,
        sup,
        sup_relative: sup / gs.q.h1(),
        series,
        decay_rate,
    })
}
