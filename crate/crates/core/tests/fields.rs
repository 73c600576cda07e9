mod common;

use proptest::prelude::*;
use std::f64::consts::PI;
use wavemap::fields::*;
use wavemap::geometry::*;
use wavemap::linalg::{c, C64, M, V2};
use wavemap::target::*;

fn max_err(npts: usize) -> f64 {
    let g = Grid::new(1, npts).unwrap();
    let f: Vec<f64> = (0..g.len()).map(|p| g.coords(p)[0].sin()).collect();
    let d = fd_partial(&f, &g, 0, FdOrder::Four);
    (0..g.len()).map(|p| (d[p] - g.coords(p)[0].cos()).abs()).fold(0.0, f64::max)
}

#[test]
fn stencil_order_on_sine() {
    let (e1, e2) = (max_err(64), max_err(128));
    assert!(e1 < 1e-5);
    assert!((e1 / e2).log2() >= 3.9, "order {}", (e1 / e2).log2());
}

#[test]
fn stencil_kills_constants() {
    let g = Grid::new(2, 16).unwrap();
    let f = vec![3.25f64; g.len()];
    for dir in 0..2 {
        for order in [FdOrder::Two, FdOrder::Four] {
            assert!(fd_partial(&f, &g, dir, order).iter().all(|v| v.abs() < 1e-13));
        }
    }
}

#[test]
fn stencil_symbol_on_exponential() {
    let g = Grid::new(1, 64).unwrap();
    let f: Vec<C64> = (0..g.len()).map(|p| c(0.0, 3.0 * g.coords(p)[0]).exp()).collect();
    let d = fd_partial(&f, &g, 0, FdOrder::Four);
    let lambda = d[5] / (c(0.0, 1.0) * f[5]);
    for p in 0..g.len() {
        assert!((d[p] - c(0.0, 1.0) * lambda * f[p]).norm() < 1e-12);
    }
    assert!(lambda.im.abs() < 1e-12);
    let h = g.dx;
    assert!((lambda.re - 3.0).abs() <= 3f64.powi(5) * h.powi(4) / 30.0 * 1.01);
    assert!((lambda.re - 3.0).abs() > 0.0);
}

#[test]
fn second_direction_stencil() {
    let g = Grid::new(2, 32).unwrap();
    let f: Vec<f64> = (0..g.len()).map(|p| (2.0 * g.coords(p)[1]).sin() + g.coords(p)[0].cos()).collect();
    let d = fd_partial(&f, &g, 1, FdOrder::Four);
    for p in 0..g.len() {
        assert!((d[p] - 2.0 * (2.0 * g.coords(p)[1]).cos()).abs() < 2e-3);
    }
}

#[test]
fn integral_examples() {
    let g = Grid::new(1, 32).unwrap();
    let one = vec![1.0; g.len()];
    let st2 = WarpedSpacetime::static_flat(2);
    assert!((l2_integral(&one, &g, &st2, 0.0) - 2.0 * PI).abs() < 1e-12);
    let g2 = Grid::new(2, 16).unwrap();
    let st3 = WarpedSpacetime::new(3, SProfile::Const(1.0), AProfile::Const(2.0), LapseProfile::One).unwrap();
    let one2 = vec![1.0; g2.len()];
    assert!((l2_integral(&one2, &g2, &st3, 0.0) - 4.0 * PI * PI * 4.0).abs() < 1e-10);
    let s2: Vec<f64> = (0..g.len()).map(|p| g.coords(p)[0].sin().powi(2)).collect();
    assert!((l2_integral(&s2, &g, &st2, 0.0) - PI).abs() < 1e-12);
}

#[test]
fn grid_validation() {
    assert!(Grid::new(1, 63).is_err());
    assert!(Grid::new(1, 6).is_err());
    assert!(Grid::new(3, 16).is_err());
    assert!(FdOrder::from_int(3).is_err());
    assert_eq!(FdOrder::from_int(4).unwrap().as_int(), 4);
}

#[test]
fn constant_map_state() {
    let g = Grid::new(2, 8).unwrap();
    let s = FieldState::constant_map(&g, [1.0, 0.0], 0.5);
    assert_eq!(s.phi.len(), 64);
    assert_eq!(s.max_abs_psi(), 0.0);
    assert!(s.check_finite().is_ok());
    assert_eq!(s.max_chart_distance(&TargetChart::warped(WarpFamily::Sinh)), 0.0);
}

fn smooth_map(g: &Grid, amp: f64, y0: V2) -> Vec<V2> {
    (0..g.len())
        .map(|p| {
            let x = g.coords(p);
            [y0[0] + amp * (x[0].sin() + 0.5 * (x[1] + 0.3).cos()), y0[1] + amp * (2.0 * x[0] + x[1]).cos()]
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn discrete_integration_by_parts(seed in 0u64..1000, order in 0usize..2) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let g = Grid::new(1, 16).unwrap();
        let order = if order == 0 { FdOrder::Two } else { FdOrder::Four };
        let u: Vec<f64> = (0..g.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let v: Vec<f64> = (0..g.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let du = fd_partial(&u, &g, 0, order);
        let dv = fd_partial(&v, &g, 0, order);
        let lhs: f64 = du.iter().zip(&v).map(|(a, b)| a * b).sum();
        let rhs: f64 = u.iter().zip(&dv).map(|(a, b)| a * b).sum();
        prop_assert!((lhs + rhs).abs() < 1e-12);
    }

    #[test]
    fn twisted_derivative_is_metric_compatible(seed in 0u64..1000, kind in 0usize..3) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let chart = [TargetChart::sphere(), TargetChart::warped(WarpFamily::Cubic { c: 1.0 }), TargetChart::flat()][kind];
        let g = Grid::new(2, 8).unwrap();
        let phi = smooth_map(&g, 0.3, [1.0, 0.2]);
        let pb = Pullback::new(&g, &chart, &phi, FdOrder::Four).unwrap();
        let u: Vec<V2> = (0..g.len()).map(|_| [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)]).collect();
        let v: Vec<V2> = (0..g.len()).map(|_| [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)]).collect();
        let pair = |a: &[V2], b: &[V2]| -> f64 {
            (0..a.len()).map(|p| {
                let gg = &pb.geo[p].g;
                let mut s = 0.0;
                for i in 0..M { for j in 0..M { s += gg[i][j] * a[p][i] * b[p][j]; } }
                s
            }).sum()
        };
        for i in 0..2 {
            let du = pb.twisted_d(&u, i);
            let dv = pb.twisted_d(&v, i);
            let s = pair(&du, &v) + pair(&u, &dv);
            prop_assert!(s.abs() < 1e-11, "skew defect {}", s);
        }
    }
}

#[test]
fn twisted_derivative_approximates_covariant_derivative() {
    // Parallel transport check: D_i v for v = d_i phi converges to the
    // pullback connection applied analytically.
    let chart = TargetChart::sphere();
    let mut errs = vec![];
    for npts in [16usize, 32] {
        let g = Grid::new(1, npts).unwrap();
        let phi: Vec<V2> = (0..g.len()).map(|p| { let x = g.coords(p)[0]; [0.4 * x.sin(), 0.3 * x.cos()] }).collect();
        let v: Vec<V2> = (0..g.len()).map(|p| { let x = g.coords(p)[0]; [x.cos(), (2.0 * x).sin()] }).collect();
        let pb = Pullback::new(&g, &chart, &phi, FdOrder::Four).unwrap();
        let d = pb.twisted_d(&v, 0);
        let mut e = 0.0f64;
        for p in 0..g.len() {
            let x = g.coords(p)[0];
            let dphi = [0.4 * x.cos(), -0.3 * x.sin()];
            let dv = [-x.sin(), 2.0 * (2.0 * x).cos()];
            let geo = target_geometry(&chart, &phi[p]).unwrap();
            let a = geo.connection_matrix(&dphi);
            let want = [dv[0] + a[0][0] * v[p][0] + a[0][1] * v[p][1], dv[1] + a[1][0] * v[p][0] + a[1][1] * v[p][1]];
            e = e.max((d[p][0] - want[0]).abs()).max((d[p][1] - want[1]).abs());
        }
        errs.push(e);
    }
    assert!((errs[0] / errs[1]).log2() > 3.5, "{errs:?}");
}

#[test]
fn map_laplacian_is_energy_gradient() {
    // L phi = G^-1 dE/dphi for E = 1/2 sum_p G(d phi, d phi) dx.
    let chart = TargetChart::sphere();
    let g = Grid::new(1, 16).unwrap();
    let phi = smooth_map(&g, 0.4, [0.1, -0.2]);
    let energy = |phi: &[V2]| -> f64 {
        let pb = Pullback::new(&g, &chart, phi, FdOrder::Four).unwrap();
        (0..g.len()).map(|p| 0.5 * gnorm_density(&pb.geo[p], &pb.dphi[0][p])).sum()
    };
    let pb = Pullback::new(&g, &chart, &phi, FdOrder::Four).unwrap();
    let lap = pb.map_laplacian();
    for p in [0usize, 5, 11] {
        for k in 0..M {
            let grad = common::d4(|e| { let mut q = phi.clone(); q[p][k] += e; energy(&q) }, 0.0, 1e-3);
            let gl = pb.geo[p].g[k][0] * lap[p][0] + pb.geo[p].g[k][1] * lap[p][1];
            assert!((grad - gl).abs() < 1e-8, "{grad} vs {gl}");
        }
    }
}
