//! Adaptive Dormand–Prince 5(4) shooting for `Q'' + 2Q'/r - Q + Q³ = 0`.

use std::f64::consts::PI;

/// State `(Q, Q', 4π∫_0^r Q² s² ds)`.
pub type State = [f64; 3];

fn f(r: f64, y: &State) -> State {
    let (q, p) = (y[0], y[1]);
    [p, -2.0 / r * p + q - q * q * q, 4.0 * PI * r * r * q * q]
}

const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const B5: [f64; 7] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
const B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

/// One attempted step; returns the 5th-order solution and an error estimate.
fn step(r: f64, y: &State, h: f64) -> (State, f64) {
    let mut k = [[0.0; 3]; 7];
    for s in 0..7 {
        let mut ys = *y;
        for (j, kj) in k.iter().enumerate().take(s) {
            for c in 0..3 {
                ys[c] += h * A[s][j] * kj[c];
            }
        }
        k[s] = f(r + C[s] * h, &ys);
    }
    let mut y5 = *y;
    let mut err = 0.0f64;
    for c in 0..3 {
        let mut d5 = 0.0;
        let mut d4 = 0.0;
        for s in 0..7 {
            d5 += B5[s] * k[s][c];
            d4 += B4[s] * k[s][c];
        }
        y5[c] += h * d5;
        // only Q and Q' drive the step size
        if c < 2 {
            let scale = 1e-300 + y[c].abs().max(y5[c].abs());
            err = err.max((h * (d5 - d4)).abs() / scale);
        }
    }
    (y5, err)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fate {
    Crossed,
    TurnedUp,
    Survived,
}

/// Solution of the regular initial value problem with `Q(0) = a`, sampled at
/// `checkpoints` until an event terminates it.
#[derive(Debug, Clone)]
pub struct Shot {
    pub fate: Fate,
    pub samples: Vec<(f64, State)>,
}

pub fn shoot(a: f64, checkpoints: &[f64], rtol: f64) -> Shot {
    // leave the singular point with the two-term series
    let r0 = 1e-4;
    let c2 = (a - a * a * a) / 6.0;
    let mut r = r0;
    let mut y = [a + c2 * r0 * r0, 2.0 * c2 * r0, 4.0 * PI * a * a * r0.powi(3) / 3.0];
    let mut h: f64 = 1e-4;
    let mut samples = Vec::with_capacity(checkpoints.len());
    for &target in checkpoints {
        while r < target {
            let hh = h.min(target - r);
            let (y_new, err) = step(r, &y, hh);
            if err <= rtol {
                r += hh;
                y = y_new;
                if y[0] <= 0.0 {
                    return Shot { fate: Fate::Crossed, samples };
                }
                if y[1] > 0.0 {
                    return Shot { fate: Fate::TurnedUp, samples };
                }
            }
            let factor = 0.9 * (rtol / err.max(1e-300)).powf(0.2);
            h = hh * factor.clamp(0.2, 5.0);
        }
        samples.push((r, y));
    }
    Shot { fate: Fate::Survived, samples }
}

#[derive(Debug, Clone)]
pub struct GroundStateOracle {
    pub q0: f64,
    pub mass: f64,
    pub match_radius: f64,
    pub tail_coefficient: f64,
}

/// Bisection on the initial height, then the mass from the bracket mean
/// plus the analytic `c e^{-r}/r` tail.
pub fn ground_state(rtol: f64) -> GroundStateOracle {
    let checkpoints: Vec<f64> = (1..=120).map(|i| i as f64 * 0.25).collect();
    let too_small = |s: &Shot| s.fate != Fate::Crossed;
    let (mut lo, mut hi) = (1.0f64, 10.0f64);
    let mut s_lo = shoot(lo, &checkpoints, rtol);
    let mut s_hi = shoot(hi, &checkpoints, rtol);
    assert!(too_small(&s_lo) && !too_small(&s_hi), "bracket");
    loop {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let s = shoot(mid, &checkpoints, rtol);
        if too_small(&s) {
            lo = mid;
            s_lo = s;
        } else {
            hi = mid;
            s_hi = s;
        }
    }
    // last checkpoint where the bracket trajectories still agree to 1e-8
    let n = s_lo.samples.len().min(s_hi.samples.len());
    let mut k = 0;
    for i in 0..n {
        let (ql, qh) = (s_lo.samples[i].1[0], s_hi.samples[i].1[0]);
        if (ql - qh).abs() > 1e-8 * 0.5 * (ql + qh) {
            break;
        }
        k = i;
    }
    let (r, yl) = s_lo.samples[k];
    let yh = s_hi.samples[k].1;
    let q = 0.5 * (yl[0] + yh[0]);
    let m = 0.5 * (yl[2] + yh[2]);
    let c = q * r * r.exp();
    let tail = 2.0 * PI * c * c * (-2.0 * r).exp();
    GroundStateOracle {
        q0: 0.5 * (lo + hi),
        mass: m + tail,
        match_radius: r,
        tail_coefficient: c,
    }
}
