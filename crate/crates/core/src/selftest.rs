//! Fast invariant checks on a built lab: ground-state identities, the
//! eigenpair and coercivity.

use serde::Serialize;

use crate::config::Lab;
use crate::linearized::{coercivity_minimum, phi, Constraints};
use crate::report::GoldenConstants;

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    /// `value < bound` passes, or `value > bound` when `above` is set.
    pub bound: f64,
    pub above: bool,
    pub pass: bool,
}

impl Check {
    fn below(name: &str, value: f64, bound: f64) -> Self {
        Self {
            name: name.into(),
            value,
            bound,
            above: false,
            pass: value < bound,
        }
    }

    fn over(name: &str, value: f64, bound: f64) -> Self {
        Self {
            name: name.into(),
            value,
            bound,
            above: true,
            pass: value > bound,
        }
    }
}

pub fn run_selftest(lab: &Lab, golden: Option<&GoldenConstants>, eig_tol: f64) -> Vec<Check> {
    let (gs, lp, sd) = (&lab.gs, &lab.lp, &lab.sd);
    let g = gs.grid();
    let mut out = Vec::new();

    let (d4, d2) = gs.pohozhaev_defects();
    out.push(Check::below("pohozhaev |Q|_4^4/|Q|_2^2 - 4", d4.abs(), 1e-6));
    out.push(Check::below("pohozhaev |grad Q|^2/|Q|_2^2 - 3", d2.abs(), 1e-6));
    let phi_q = phi(&gs.q, lp);
    out.push(Check::below(
        "Phi(Q) + 4M, relative",
        (phi_q + 4.0 * gs.mass).abs() / (4.0 * gs.mass),
        1e-6,
    ));

    let q = gs.q.re();
    let h = g.spacing();
    let bound = 10.0 * h * h * gs.mass.sqrt();
    let norm = |v: &[f64]| g.dot_real(v, v).sqrt();
    out.push(Check::below("|L- Q|", norm(&lp.l_minus(q)), bound));
    let lpq: Vec<f64> = lp.l_plus(q).iter().zip(q).map(|(a, q)| a + 2.0 * q * q * q).collect();
    out.push(Check::below("|L+ Q + 2Q^3|", norm(&lpq), bound));
    let qt = gs.q_tilde();
    let lpqt: Vec<f64> = lp.l_plus(qt.re()).iter().zip(q).map(|(a, q)| a + 2.0 * q).collect();
    out.push(Check::below("|L+ Qt + 2Q|", norm(&lpqt), bound));

    let (rp, rm) = sd.residuals();
    out.push(Check::below("eigen residual L+y1 - e0 y2", rp, eig_tol));
    out.push(Check::below("eigen residual L-y2 + e0 y1", rm, eig_tol));
    let dq = gs.laplacian();
    let pairing = dq.dot(&sd.y1).abs() / (dq.l2() * sd.y1.l2());
    out.push(Check::over("|int Lap Q y1|, normalized", pairing, 1e-3));

    if let Some(gc) = golden {
        out.push(Check::below("e0 vs oracle, relative", (sd.e0 - gc.e0).abs() / gc.e0, 1e-4));
        out.push(Check::below("q0 vs oracle, relative", (gs.q0 - gc.q0).abs() / gc.q0, 1e-6));
        out.push(Check::below("M[Q] vs oracle, relative", (gs.mass - gc.m_q).abs() / gc.m_q, 1e-6));
    }

    for (name, which) in [("coercivity on G_perp", Constraints::GPerp), ("coercivity on G'_perp", Constraints::GPerpPrime)] {
        let v = coercivity_minimum(lp, sd, which).map_or(f64::NAN, |r| r.minimum);
        out.push(Check::over(name, v, 0.0));
    }
    let free = coercivity_minimum(lp, sd, Constraints::None).map_or(f64::NAN, |r| r.minimum);
    out.push(Check::below("unconstrained Phi minimum", free, 0.0));
    out
}

pub fn format_table(checks: &[Check]) -> String {
    let width = checks.iter().map(|c| c.name.len()).max().unwrap_or(0);
    let mut s = String::new();
    for c in checks {
        s.push_str(&format!(
            "{}  {:<width$}  {:>12.4e} {} {:.1e}\n",
            if c.pass { "PASS" } else { "FAIL" },
            c.name,
            c.value,
            if c.above { ">" } else { "<" },
            c.bound,
        ));
    }
    s
}
