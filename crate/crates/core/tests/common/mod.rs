#![allow(dead_code)]

use wavemap::geometry::WarpedSpacetime;
use wavemap::linalg::{c, Sp, VSp, C64, M, M2, V2};
use wavemap::target::TargetChart;

/// Fourth-order central difference of a scalar function.
pub fn d4<F: Fn(f64) -> f64>(f: F, x: f64, h: f64) -> f64 {
    (8.0 * (f(x + h) - f(x - h)) - (f(x + 2.0 * h) - f(x - 2.0 * h))) / (12.0 * h)
}

/// Christoffel symbols of a chart metric from finite differences of `G`.
pub fn fd_target_christoffel(chart: &TargetChart, y: &V2, h: f64) -> [[[f64; M]; M]; M] {
    let g = chart.metric(y).unwrap();
    let gi = inv(&g);
    let mut dg = [[[0.0; M]; M]; M];
    for m in 0..M {
        for i in 0..M {
            for j in 0..M {
                dg[m][i][j] = d4(
                    |e| {
                        let mut z = *y;
                        z[m] += e;
                        chart.metric(&z).unwrap()[i][j]
                    },
                    0.0,
                    h,
                );
            }
        }
    }
    let mut gam = [[[0.0; M]; M]; M];
    for i in 0..M {
        for j in 0..M {
            for k in 0..M {
                let mut v = 0.0;
                for l in 0..M {
                    v += 0.5 * gi[i][l] * (dg[j][l][k] + dg[k][l][j] - dg[l][j][k]);
                }
                gam[i][j][k] = v;
            }
        }
    }
    gam
}

/// `R^I_JKL` with `R(d_K, d_L) d_J = R^I_JKL d_I`, by finite differences of
/// the FD Christoffel symbols.
pub fn fd_target_riemann(chart: &TargetChart, y: &V2) -> [[[[f64; M]; M]; M]; M] {
    let h = 1e-3;
    let gam = fd_target_christoffel(chart, y, h);
    let mut dgam = [[[[0.0; M]; M]; M]; M];
    for m in 0..M {
        let at = |e: f64| {
            let mut z = *y;
            z[m] += e;
            fd_target_christoffel(chart, &z, h)
        };
        let (p1, m1, p2, m2) = (at(h), at(-h), at(2.0 * h), at(-2.0 * h));
        for i in 0..M {
            for j in 0..M {
                for k in 0..M {
                    dgam[m][i][j][k] = (8.0 * (p1[i][j][k] - m1[i][j][k]) - (p2[i][j][k] - m2[i][j][k])) / (12.0 * h);
                }
            }
        }
    }
    let mut r = [[[[0.0; M]; M]; M]; M];
    for i in 0..M {
        for j in 0..M {
            for k in 0..M {
                for l in 0..M {
                    let mut v = dgam[k][i][l][j] - dgam[l][i][k][j];
                    for p in 0..M {
                        v += gam[i][k][p] * gam[p][l][j] - gam[i][l][p] * gam[p][k][j];
                    }
                    r[i][j][k][l] = v;
                }
            }
        }
    }
    r
}

pub fn inv(g: &M2) -> M2 {
    let det = g[0][0] * g[1][1] - g[0][1] * g[1][0];
    [[g[1][1] / det, -g[0][1] / det], [-g[1][0] / det, g[0][0] / det]]
}

/// Scalar curvature of `h` from finite differences of its diagonal
/// components in `t`, by the coordinate Riemann formula.
pub fn fd_scalar_curvature(st: &WarpedSpacetime, t: f64) -> f64 {
    let dim = st.n;
    let h = 1e-3;
    let metric = |t: f64| st.metric_diag(t);
    let gamma = |t: f64| {
        let g = metric(t);
        let dg: Vec<f64> = (0..dim).map(|a| d4(|u| metric(u)[a], t, h)).collect();
        // Gamma^a_bc for diagonal metric depending on t only.
        let mut gam = [[[0.0; 3]; 3]; 3];
        for a in 0..dim {
            for b in 0..dim {
                for cc in 0..dim {
                    let mut v = 0.0;
                    // 1/2 g^aa (d_b g_ac + d_c g_ab - d_a g_bc)
                    if b == 0 && a == cc {
                        v += dg[a];
                    }
                    if cc == 0 && a == b {
                        v += dg[a];
                    }
                    if a == 0 && b == cc {
                        v -= dg[b];
                    }
                    gam[a][b][cc] = 0.5 * v / g[a];
                }
            }
        }
        gam
    };
    let g0 = gamma(t);
    let step = |e: f64| gamma(t + e);
    let (p1, m1, p2, m2) = (step(h), step(-h), step(2.0 * h), step(-2.0 * h));
    let dt = |a: usize, b: usize, cc: usize| {
        (8.0 * (p1[a][b][cc] - m1[a][b][cc]) - (p2[a][b][cc] - m2[a][b][cc])) / (12.0 * h)
    };
    let g = metric(t);
    let mut scal = 0.0;
    for b in 0..dim {
        // Ric_bb = R^a_bab
        let mut ric = 0.0;
        for a in 0..dim {
            // R^a_bcd = d_c G^a_db - d_d G^a_cb + G^a_ce G^e_db - G^a_de G^e_cb, c = a, d = b
            let mut v = 0.0;
            if a == 0 {
                v += dt(a, b, b);
            }
            if b == 0 {
                v -= dt(a, a, b);
            }
            for e in 0..dim {
                v += g0[a][a][e] * g0[e][b][b] - g0[a][b][e] * g0[e][a][b];
            }
            ric += v;
        }
        scal += ric / g[b];
    }
    scal
}

pub fn rand_sp(rng: &mut impl rand::Rng) -> Sp {
    [c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)), c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))]
}

pub fn rand_vsp(rng: &mut impl rand::Rng) -> VSp {
    [rand_sp(rng), rand_sp(rng)]
}

pub fn cmax(a: C64, b: C64) -> f64 {
    (a - b).norm()
}
