mod common;

use common::{coarse_setup, default_setup, golden, setup};
use nalgebra::{DMatrix, SymmetricEigen};
use nls_radial::grid::random_smooth_field;
use nls_radial::linearized::*;
use nls_radial::RadialField;
use num_complex::Complex64;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn l2(v: &[f64], s: &common::Setup) -> f64 {
    s.gs.grid().dot_real(v, v).sqrt()
}

#[test]
fn operator_identities() {
    let s = default_setup();
    let q = s.gs.q.re();
    let h = s.gs.grid().spacing();
    let bound = 10.0 * h * h * s.gs.mass.sqrt();

    let lmq = s.lp.l_minus(q);
    assert!(l2(&lmq, s) < bound, "L-Q {}", l2(&lmq, s));

    let lpq: Vec<f64> = s.lp.l_plus(q).iter().zip(q).map(|(a, q)| a + 2.0 * q * q * q).collect();
    assert!(l2(&lpq, s) < bound, "L+Q {}", l2(&lpq, s));

    let qt = s.gs.q_tilde();
    let lpqt: Vec<f64> = s.lp.l_plus(qt.re()).iter().zip(q).map(|(a, q)| a + 2.0 * q).collect();
    assert!(l2(&lpqt, s) < bound, "L+Qt {}", l2(&lpqt, s));
}

#[test]
fn phi_special_values() {
    let s = default_setup();
    let m = s.gs.mass;
    let phi_q = phi(&s.gs.q, &s.lp);
    assert!((phi_q + 4.0 * m).abs() / (4.0 * m) < 1e-6, "{phi_q}");
    let iq = s.gs.q.scale(Complex64::i());
    assert!(phi(&iq, &s.lp).abs() < 1e-8 * m);
    let yp = s.sd.y_plus();
    assert!(phi(&yp, &s.lp).abs() < 1e-8 * yp.h1sq());
    assert!(phi(&s.sd.y_minus(), &s.lp).abs() < 1e-8 * yp.h1sq());
}

#[test]
fn eigenpair_against_golden_and_refinement() {
    let fine = default_setup();
    let coarse = coarse_setup();
    let e0 = golden("e0");
    assert!((fine.sd.e0 - e0).abs() / e0 < 1e-4, "{} vs {e0}", fine.sd.e0);
    assert!((fine.sd.e0 - coarse.sd.e0).abs() / e0 < 1e-4);
    let (rp, rm) = fine.sd.residuals();
    assert!(rp < 1e-8 && rm < 1e-8);
    assert_eq!(fine.sd.convention, MinusConvention::NegatedConjugate);
    assert!(fine.sd.b_norm < 0.0);
    assert!(fine.sd.spectral_floor > 0.5);
}

#[test]
fn eigenfunction_conventions() {
    let s = default_setup();
    let yp = s.sd.y_plus();
    let ym = s.sd.y_minus();
    assert!((bilinear(&yp, &ym, &s.lp) - 1.0).abs() < 1e-10);
    assert!(bilinear(&yp, &yp, &s.lp).abs() < 1e-8 * yp.h1sq());
    assert!(s.gs.q.grad_dot(&s.sd.y1) > 0.0);
    let dq = s.gs.laplacian();
    let pairing = dq.dot(&s.sd.y1);
    assert!(pairing.abs() > 1e-3 * dq.l2() * s.sd.y1.l2(), "{pairing}");
}

#[test]
fn phi_from_constraints_on_phase_rotation() {
    let s = default_setup();
    assert_eq!(phi_from_constraints(&RadialField::zeros(s.gs.grid()), &s.gs, 1e-8).unwrap().value, 0.0);
    for theta in [0.1, 0.7, 2.0, 3.0] {
        let h = &s.gs.q.scale(Complex64::from_polar(1.0, theta)) - &s.gs.q;
        let c = phi_from_constraints(&h, &s.gs, 1e-8).unwrap();
        let direct = phi(&h, &s.lp);
        assert!((c.value - direct).abs() < 1e-8 * direct.abs(), "{theta}: {} vs {direct}", c.value);
    }
    let off = s.gs.q.scale(Complex64::new(0.01, 0.0));
    assert!(phi_from_constraints(&off, &s.gs, 1e-8).is_err());
}

#[test]
fn project_modes_examples() {
    let s = default_setup();
    let yp = s.sd.y_plus();
    let p = project_modes(&yp, &s.sd, &s.lp, &s.gs).unwrap();
    assert!((p.alpha_plus - 1.0).abs() < 1e-8 && p.alpha_minus.abs() < 1e-8);
    assert!(p.v_perp.h1() < 1e-8 * yp.h1());

    let iq = s.gs.q.scale(Complex64::i());
    let p = project_modes(&iq, &s.sd, &s.lp, &s.gs).unwrap();
    assert!((p.beta0 - s.gs.mass.sqrt()).abs() < 1e-8 * s.gs.mass.sqrt());
    assert!(p.alpha_plus.abs() < 1e-7 && p.alpha_minus.abs() < 1e-7);
}

#[test]
fn mode_residuals_vanish_on_eigenmodes() {
    let s = default_setup();
    let e0 = s.sd.e0;
    let dt = 1e-3;
    let decay: Vec<(f64, RadialField)> = (0..6)
        .map(|k| {
            let t = k as f64 * dt;
            (t, s.sd.y_plus().scale(Complex64::new((-e0 * t).exp(), 0.0)))
        })
        .collect();
    let r = mode_ode_residuals(&decay, &s.sd, &s.lp, &s.gs).unwrap();
    assert_eq!(r.t.len(), 4);
    for (a, res) in r.alpha_plus.iter().zip(&r.residual_plus) {
        assert!(res.abs() < 1e-4 * a.abs(), "{res}");
    }
    assert!(r.residual_minus.iter().all(|x| x.abs() < 1e-8));
    assert!(r.dphi_dt.iter().all(|x| x.abs() < 1e-6));

    let grow: Vec<(f64, RadialField)> = (0..5)
        .map(|k| {
            let t = k as f64 * dt;
            (t, s.sd.y_minus().scale(Complex64::new((e0 * t).exp(), 0.0)))
        })
        .collect();
    let r = mode_ode_residuals(&grow, &s.sd, &s.lp, &s.gs).unwrap();
    assert!(r.alpha_minus.windows(2).all(|w| w[1] > w[0]));
    for (a, res) in r.alpha_minus.iter().zip(&r.residual_minus) {
        assert!(res.abs() < 1e-4 * a.abs());
    }
    assert!(mode_ode_residuals(&grow[..2], &s.sd, &s.lp, &s.gs).is_err());
}

#[test]
fn gagliardo_check() {
    let s = default_setup();
    let iq = s.gs.q.scale(Complex64::i());
    assert!(gn_quadratic_coefficient(&iq, &s.lp, &s.gs).abs() < 1e-8);

    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let samples: Vec<RadialField> = (0..100).map(|_| random_smooth_field(s.gs.grid(), &mut rng, true)).collect();
    let report = gagliardo_quadratic_check(&s.lp, &s.gs, &samples);
    assert_eq!(report.samples, 100);
    assert!(report.all_nonnegative, "{}", report.min_normalized);

    // the dilation direction is tangent to the family μQ(ν·), on which I ≡ 0
    let qt = gradient_orthogonalize(&s.gs.q_tilde(), &s.gs);
    let c = gn_quadratic_coefficient(&qt, &s.lp, &s.gs) * s.gs.mass / qt.h1sq();
    assert!(c.abs() < 1e-6, "{c}");
}

#[test]
fn gagliardo_coefficient_matches_second_difference() {
    let s = default_setup();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..3 {
        let h = gradient_orthogonalize(&random_smooth_field(s.gs.grid(), &mut rng, true), &s.gs);
        let a = 1e-3;
        let plus = gn_deficit(&s.gs.q.axpy(Complex64::new(a, 0.0), &h), &s.gs);
        let minus = gn_deficit(&s.gs.q.axpy(Complex64::new(-a, 0.0), &h), &s.gs);
        let zero = gn_deficit(&s.gs.q, &s.gs);
        let fd = (plus - 2.0 * zero + minus) / (2.0 * a * a);
        let c = gn_quadratic_coefficient(&h, &s.lp, &s.gs);
        assert!((fd - c).abs() < 1e-4 * (1.0 + c.abs()) * h.h1sq(), "{fd} vs {c}");
    }
}

/// Dense constrained minimization of Φ₁ and Φ₂ over the null space of the
/// constraints, on a small grid.
fn dense_coercivity(s: &common::Setup, which: Constraints) -> f64 {
    let g = s.gs.grid();
    let m = g.interior_len();
    let dense = |b: nls_radial::banded::Banded<f64>| DMatrix::from_fn(m, m, |i, j| b.get(i, j));
    let d2 = dense(g.d2_matrix());
    let stiff = DMatrix::identity(m, m) - &d2;
    let fq = s.gs.q.interior_re();
    let d2q = &d2 * nalgebra::DVector::from_vec(fq.clone());
    let (cp, cm): (Vec<Vec<f64>>, Vec<Vec<f64>>) = match which {
        Constraints::None => (vec![], vec![]),
        Constraints::GPerp => (vec![d2q.as_slice().to_vec()], vec![fq.clone()]),
        Constraints::GPerpPrime => (vec![s.sd.y2.interior_re()], vec![fq.clone(), s.sd.y1.interior_re()]),
    };
    let part = |op: DMatrix<f64>, cons: &[Vec<f64>]| -> f64 {
        let mut basis = DMatrix::identity(m, m);
        if !cons.is_empty() {
            let c = DMatrix::from_fn(m, cons.len(), |i, j| cons[j][i]);
            let proj = DMatrix::identity(m, m) - &c * (c.transpose() * &c).try_inverse().unwrap() * c.transpose();
            let e = SymmetricEigen::new(proj);
            let cols: Vec<_> = (0..m).filter(|&k| e.eigenvalues[k] > 0.5).map(|k| e.eigenvectors.column(k).into_owned()).collect();
            basis = DMatrix::from_columns(&cols);
        }
        let a = basis.transpose() * op * &basis;
        let b = basis.transpose() * &stiff * &basis;
        let l = b.cholesky().unwrap().l();
        let li = l.try_inverse().unwrap();
        let c = &li * a * li.transpose();
        SymmetricEigen::new((&c + c.transpose()) * 0.5).eigenvalues.min()
    };
    let q2: Vec<f64> = s.gs.q.re()[1..m + 1].iter().map(|q| q * q).collect();
    let lp = &stiff - DMatrix::from_diagonal(&nalgebra::DVector::from_fn(m, |i, _| 3.0 * q2[i]));
    let lm = &stiff - DMatrix::from_diagonal(&nalgebra::DVector::from_fn(m, |i, _| q2[i]));
    (0.5 * part(lp, &cp)).min(0.5 * part(lm, &cm))
}

#[test]
fn coercivity_matches_dense_oracle() {
    let s = setup(512);
    for which in [Constraints::None, Constraints::GPerp, Constraints::GPerpPrime] {
        let ours = coercivity_minimum(&s.lp, &s.sd, which).unwrap().minimum;
        let oracle = dense_coercivity(&s, which);
        assert!((ours - oracle).abs() < 1e-8 * (1.0 + oracle.abs()), "{which:?}: {ours} vs {oracle}");
    }
}

#[test]
fn coercivity_signs_and_refinement() {
    let fine = default_setup();
    let coarse = coarse_setup();
    for which in [Constraints::GPerp, Constraints::GPerpPrime] {
        let a = coercivity_minimum(&fine.lp, &fine.sd, which).unwrap();
        let b = coercivity_minimum(&coarse.lp, &coarse.sd, which).unwrap();
        assert!(a.positive && b.positive);
        assert!((a.minimum - b.minimum).abs() < 0.05 * a.minimum);
    }
    let free = coercivity_minimum(&fine.lp, &fine.sd, Constraints::None).unwrap();
    assert!(free.minimum < 0.0 && !free.positive);
}

fn field(seed: u64, complex: bool) -> RadialField {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    random_smooth_field(coarse_setup().gs.grid(), &mut rng, complex)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn operators_are_symmetric(a in any::<u64>(), b in any::<u64>()) {
        let s = coarse_setup();
        let (f, g) = (field(a, false), field(b, false));
        let gr = s.gs.grid();
        for op in [LinearizedPair::l_plus, LinearizedPair::l_minus] {
            let lhs = gr.dot_real(&op(&s.lp, f.re()), g.re());
            let rhs = gr.dot_real(f.re(), &op(&s.lp, g.re()));
            prop_assert!((lhs - rhs).abs() < 1e-10 * f.h1() * g.h1());
        }
    }

    #[test]
    fn bilinear_is_symmetric_and_kills_iq(a in any::<u64>(), b in any::<u64>()) {
        let s = coarse_setup();
        let (g, h) = (field(a, true), field(b, true));
        prop_assert!((bilinear(&g, &h, &s.lp) - bilinear(&h, &g, &s.lp)).abs() < 1e-10 * g.h1() * h.h1());
        prop_assert!((bilinear(&h, &h, &s.lp) - phi(&h, &s.lp)).abs() < 1e-10 * h.h1sq());
        let iq = s.gs.q.scale(Complex64::i());
        prop_assert!(bilinear(&iq, &h, &s.lp).abs() < 1e-8 * h.h1sq().max(1.0));
    }

    #[test]
    fn block_operator_is_b_antisymmetric(a in any::<u64>(), b in any::<u64>()) {
        let s = coarse_setup();
        let (g, h) = (field(a, true), field(b, true));
        let lhs = bilinear(&g, &s.lp.apply_block(&h), &s.lp) + bilinear(&s.lp.apply_block(&g), &h, &s.lp);
        prop_assert!(lhs.abs() < 1e-8 * g.h1() * h.h1());
    }

    #[test]
    fn mode_projection_reconstructs(a in any::<u64>()) {
        let s = coarse_setup();
        let v = field(a, true);
        let p = project_modes(&v, &s.sd, &s.lp, &s.gs).unwrap();
        let q0 = s.gs.q.scale(Complex64::new(0.0, 1.0 / s.gs.mass.sqrt()));
        let back = p.v_perp
            .axpy(Complex64::new(p.alpha_plus, 0.0), &s.sd.y_plus())
            .axpy(Complex64::new(p.alpha_minus, 0.0), &s.sd.y_minus())
            .axpy(Complex64::new(p.beta0, 0.0), &q0);
        prop_assert!((&back - &v).h1() < 1e-10 * v.h1());
        let scale = v.h1sq().max(1.0);
        prop_assert!(bilinear(&s.sd.y_plus(), &p.v_perp, &s.lp).abs() < 1e-8 * scale);
        prop_assert!(bilinear(&s.sd.y_minus(), &p.v_perp, &s.lp).abs() < 1e-8 * scale);
        prop_assert!(q0.dot(&p.v_perp).abs() < 1e-8 * scale);
    }
}
