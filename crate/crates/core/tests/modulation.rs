mod common;

use std::f64::consts::PI;
use std::sync::OnceLock;

use common::{coarse_setup, setup, Setup};
use nls_radial::evolve::*;
use nls_radial::modulation::*;
use nls_radial::profiles::{approximate_initial_data, build_profiles};
use nls_radial::{LabError, RadialField};
use num_complex::Complex64;
use proptest::prelude::*;

fn small() -> &'static Setup {
    static S: OnceLock<Setup> = OnceLock::new();
    S.get_or_init(|| setup(512))
}

fn orbit_point(s: &Setup, t: f64, theta: f64, scale: f64) -> RadialField {
    s.gs.q.scale(Complex64::from_polar(1.0 + scale, t + theta))
}

#[test]
fn exact_orbit_point() {
    let s = small();
    let f = fit_frame(&orbit_point(s, 0.25, 0.7, 0.0), 0.25, &s.gs, default_delta0(&s.gs)).unwrap();
    assert!((f.theta - 0.7).abs() < 1e-10);
    assert!(f.alpha.abs() < 1e-10);
    assert!(f.h.h1() < 1e-10);
    assert!(f.valid);
}

#[test]
fn pure_scaling_direction() {
    let s = small();
    let f = fit_frame(&orbit_point(s, 0.0, 0.0, 0.01), 0.0, &s.gs, default_delta0(&s.gs)).unwrap();
    assert!(f.theta.abs() < 1e-10);
    assert!((f.alpha - 0.01).abs() < 1e-10);
    assert!(f.h.h1() < 1e-10);
}

#[test]
fn orthogonality_of_generic_frame() {
    let s = small();
    let q = &s.gs.q;
    let u = RadialField::from_fn(q.grid(), |r| Complex64::new(1.1 * (-r * r / 3.0).exp(), 0.3 * (-r).exp()))
        .scale(Complex64::from_polar(1.0, 0.4));
    let f = fit_frame(&u, 0.1, &s.gs, default_delta0(&s.gs)).unwrap();
    let w = u.scale(Complex64::from_polar(1.0, -(f.theta + 0.1)));
    let phase_cond = w.imag_part().dot(q);
    assert!(phase_cond.abs() < 1e-8 * u.l2() * q.l2());
    assert!(w.real_part().dot(q) > 0.0);
    assert!(f.h.real_part().grad_dot(q).abs() < 1e-8 * q.grad_sq());
}

#[test]
fn degenerate_input() {
    let s = small();
    let z = RadialField::zeros(s.gs.grid());
    assert!(matches!(fit_frame(&z, 0.0, &s.gs, 1.0), Err(LabError::Degenerate(_))));
}

#[test]
fn orbit_trace_frames() {
    let s = small();
    let opts = EvolveOptions {
        snapshot_stride: Some(1),
        ..Default::default()
    };
    let u0 = s.gs.q.scale(Complex64::from_polar(1.0, 3.0));
    let tr = integrate(&u0, 0.0, 1.0, 1e-3, &s.gs, &opts).unwrap();
    let frames = frame_series(&tr, &s.gs, default_delta0(&s.gs)).unwrap();
    assert!(frames.len() > 50);
    for f in &frames {
        assert!((f.theta - 3.0).abs() < 1e-6, "{}", f.theta);
        assert!(f.alpha.abs() < 1e-8);
    }
    // all frames sit on the orbit, below any sensible floor
    let r = comparability_report(&frames, &s.gs, 1e-8).unwrap();
    assert!(r.ill_conditioned);
    assert!(r.alpha_ratio.is_none());
}

#[test]
fn too_few_frames() {
    let s = small();
    let frames: Vec<_> = (0..4)
        .map(|k| fit_frame(&orbit_point(s, 0.0, 0.1, 0.01 * k as f64), 0.0, &s.gs, 1.0).unwrap())
        .collect();
    assert!(matches!(
        comparability_report(&frames, &s.gs, 0.0),
        Err(LabError::InsufficientData(_))
    ));
}

#[test]
fn small_alpha_law_on_scaling_family() {
    let s = small();
    let lim = alpha_delta_limit(&s.gs);
    let mut prev = f64::INFINITY;
    for a in [1e-2, 1e-3, 1e-4] {
        let f = fit_frame(&orbit_point(s, 0.0, 0.0, -a), 0.0, &s.gs, 1.0).unwrap();
        let err = (f.alpha.abs() / f.delta / lim - 1.0).abs();
        assert!(err < prev);
        prev = err;
    }
    assert!(prev < 1e-3);
}

#[test]
fn minus_side_run_brackets() {
    let s = coarse_setup();
    let e0 = s.sd.e0;
    let pe = build_profiles(-0.01, 5, &s.sd, &s.lp, &s.gs).unwrap();
    let u0 = approximate_initial_data(&pe, 0.0, &s.gs);
    let opts = EvolveOptions {
        snapshot_stride: Some(2),
        ..Default::default()
    };
    let tr = integrate(&u0, 0.0, 8.0 / e0, 5e-4, &s.gs, &opts).unwrap();
    let frames = frame_series(&tr, &s.gs, default_delta0(&s.gs)).unwrap();
    let floor = 1e-9 * s.gs.grad_sq;
    let r = comparability_report(&frames, &s.gs, floor).unwrap();
    assert!(r.bounded(), "{r:?}");
    let a = r.alpha_ratio.unwrap();
    let lim = alpha_delta_limit(&s.gs);
    assert!((a.max / lim - 1.0).abs() < 0.05 && (a.min / lim - 1.0).abs() < 0.05, "{a:?}");

    // θ settles exponentially
    let series: Vec<(f64, f64)> = frames.iter().map(|f| (f.t, f.theta.abs())).collect();
    let fit = exp_rate_fit(&series, None).unwrap();
    assert!(fit.rate < 0.0);

    let ratios = theta_rate_ratios(&frames, floor);
    assert!(ratios.iter().all(|(_, x)| x.is_finite() && *x < 1.0));

    // continuity after unwrapping
    assert!(frames.windows(2).all(|w| (w[1].theta - w[0].theta).abs() < PI / 4.0));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn recovers_random_phase(theta in -PI..PI, t in -2.0f64..2.0) {
        let s = small();
        let f = fit_frame(&orbit_point(s, t, theta, 0.0), t, &s.gs, 1.0).unwrap();
        let d = (f.theta - theta + PI).rem_euclid(2.0 * PI) - PI;
        prop_assert!(d.abs() < 1e-10);
        prop_assert!(f.alpha.abs() < 1e-10);
    }

    #[test]
    fn recovers_synthetic_pair(theta in -3.0f64..3.0, alpha in -0.05f64..0.05) {
        let s = small();
        let f = fit_frame(&orbit_point(s, 0.5, theta, alpha), 0.5, &s.gs, 1.0).unwrap();
        let d = (f.theta - theta + PI).rem_euclid(2.0 * PI) - PI;
        prop_assert!(d.abs() < 1e-10);
        prop_assert!((f.alpha - alpha).abs() < 1e-10);
    }
}
