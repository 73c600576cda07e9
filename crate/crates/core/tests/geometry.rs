mod common;

use proptest::prelude::*;
use wavemap::geometry::*;
use wavemap::Error;

fn osc(n: usize, s: SProfile) -> WarpedSpacetime {
    WarpedSpacetime::new(n, s, AProfile::Osc { mu: 0.1, omega: 1.0 }, LapseProfile::One).unwrap()
}

#[test]
fn christoffel_de_sitter_at_zero() {
    let c = christoffels(&WarpedSpacetime::de_sitter(3), 0.0).unwrap();
    assert_eq!(c.gamma_000, -1.0);
    assert_eq!(c.gamma_0ij, [[0.0; 2]; 2]);
    assert_eq!(c.gamma_j_i0, [[0.0; 2]; 2]);
    assert_eq!(c.gamma_spatial, [[[0.0; 2]; 2]; 2]);
}

#[test]
fn christoffel_static_vanishes() {
    for t in [0.0, 1.3, 7.0] {
        let c = christoffels(&WarpedSpacetime::static_flat(3), t).unwrap();
        assert_eq!(c.gamma_000, 0.0);
        assert_eq!(c.gamma_0ij, [[0.0; 2]; 2]);
        assert_eq!(c.gamma_j_i0, [[0.0; 2]; 2]);
    }
}

#[test]
fn christoffel_oscillating_scale() {
    let c = christoffels(&osc(3, SProfile::Const(1.0)), 0.0).unwrap();
    for i in 0..2 {
        for j in 0..2 {
            let want = if i == j { 0.1 } else { 0.0 };
            assert!((c.gamma_0ij[i][j] - want).abs() < 1e-15);
        }
    }
}

#[test]
fn second_fundamental_form_examples() {
    assert_eq!(second_fundamental_form(&WarpedSpacetime::de_sitter(3), 2.0).unwrap(), [[0.0; 2]; 2]);
    let exp_a = WarpedSpacetime { n: 3, s: SProfile::Const(1.0), a: AProfile::Exp { rate: 1.0 }, lapse: LapseProfile::One };
    let ii = second_fundamental_form(&exp_a, 0.0).unwrap();
    assert_eq!(ii, [[-1.0, 0.0], [0.0, -1.0]]);
    let ii = second_fundamental_form(&osc(3, SProfile::Exp { lambda: 1.0 }), 0.0).unwrap();
    assert!((ii[0][0] + 0.1).abs() < 1e-15 && (ii[1][1] + 0.1).abs() < 1e-15);
    assert_eq!(ii[0][1], 0.0);
}

#[test]
fn scalar_curvature_flat_is_zero() {
    assert_eq!(curvature(&WarpedSpacetime::static_flat(3), 0.5, &[]).unwrap().scal, 0.0);
}

#[test]
fn scalar_curvature_matches_fd_oracle() {
    let cases = [
        (WarpedSpacetime::de_sitter(2), 0.0),
        (osc(2, SProfile::Exp { lambda: 1.0 }), 0.4),
        (osc(3, SProfile::Exp { lambda: 0.5 }), 0.7),
        (osc(3, SProfile::Power { p: 2.0 }), 1.1),
    ];
    for (st, t) in cases {
        let got = curvature(&st, t, &[]).unwrap().scal;
        let want = common::fd_scalar_curvature(&st, t);
        let closed = st.scalar_curvature_closed(t);
        let scale = want.abs().max(1e-3);
        assert!((got - want).abs() <= 1e-8 * scale.max(1.0), "{st:?}: {got} vs {want}");
        assert!((got - closed).abs() <= 1e-12 * scale.max(1.0), "{got} vs closed {closed}");
    }
}

#[test]
fn phi_integral_examples() {
    let ci = conformal_factor_integrals(&WarpedSpacetime::de_sitter(2), 50.0).unwrap();
    assert!((ci.phi - 1.0).abs() <= 1e-8);
    assert_eq!(ci.f_integral, 0.0);
    assert!(!ci.warning);

    let st = WarpedSpacetime::new(3, SProfile::Power { p: 1.0 }, AProfile::Const(1.0), LapseProfile::One).unwrap();
    let ci = conformal_factor_integrals(&st, 1e4).unwrap();
    assert!((ci.f_integral - 1.0).abs() < 1e-3);
    assert!((ci.f_integral - ci.f_closed_form.unwrap()).abs() < 1e-9);

    let st = WarpedSpacetime::static_flat(3);
    let a = conformal_factor_integrals(&st, 10.0).unwrap();
    let b = conformal_factor_integrals(&st, 20.0).unwrap();
    assert!(a.warning && b.warning);
    assert!((a.phi - 10.0).abs() < 1e-10 && (b.phi - 20.0).abs() < 1e-10);
}

#[test]
fn rejects_invalid_profiles() {
    let bad = [
        WarpedSpacetime::new(4, SProfile::Const(1.0), AProfile::Const(1.0), LapseProfile::One),
        WarpedSpacetime::new(3, SProfile::Const(-1.0), AProfile::Const(1.0), LapseProfile::One),
        WarpedSpacetime::new(3, SProfile::Exp { lambda: -1.0 }, AProfile::Const(1.0), LapseProfile::One),
        WarpedSpacetime::new(3, SProfile::Const(1.0), AProfile::Osc { mu: 1.0, omega: 1.0 }, LapseProfile::One),
        WarpedSpacetime::new(3, SProfile::Const(1.0), AProfile::Const(1.0), LapseProfile::Cos { beta: 1.5 }),
    ];
    for b in bad {
        assert!(matches!(b, Err(Error::Domain(_))), "{b:?}");
    }
    assert!(conformal_factor_integrals(&WarpedSpacetime::de_sitter(3), 0.0).is_err());
}

#[test]
fn quadrature_is_accurate() {
    let v = integrate(|t| t.cos(), 0.0, 3.0, 1e-12);
    assert!((v - 3f64.sin()).abs() < 1e-11);
    let v = integrate(|t| (-t).exp(), 0.0, 200.0, 1e-12);
    assert!((v - 1.0).abs() < 1e-11);
}

proptest! {
    #[test]
    fn power_law_phi_closed_form(p in 1.2f64..3.0, t_end in 1.0f64..40.0) {
        let st = WarpedSpacetime::new(2, SProfile::Power { p }, AProfile::Const(1.0), LapseProfile::One).unwrap();
        let ci = conformal_factor_integrals(&st, t_end).unwrap();
        let want = (1.0 - (1.0 + t_end).powf(1.0 - p)) / (p - 1.0);
        prop_assert!((ci.phi - want).abs() < 1e-9);
    }

    #[test]
    fn riemann_antisymmetry(t in 0.0f64..3.0, lambda in 0.0f64..1.5, mu in -0.5f64..0.5) {
        let st = WarpedSpacetime::new(3, SProfile::Exp { lambda }, AProfile::Osc { mu, omega: 1.3 }, LapseProfile::One).unwrap();
        let r = curvature(&st, t, &[]).unwrap().riemann;
        for a in 0..3 { for b in 0..3 { for m in 0..3 { for n in 0..3 {
            prop_assert!((r[a][b][m][n] + r[a][b][n][m]).abs() < 1e-12);
        }}}}
        prop_assert!((curvature(&st, t, &[]).unwrap().scal - st.scalar_curvature_closed(t)).abs() < 1e-10);
    }
}
