//! Randomized numerical checks of the structural identities behind the
//! evolution system, independent of the integrator.
//!
//! Test fields are closed-form functions of `(t, x)`. Time derivatives of
//! composite discrete quantities are taken by 7-point central differences in
//! time with step [`TIME_STEP`]; spatial operators are the production ones.
//! A check passes if its residual is `<= 1e-10` or if the residual decreases
//! under one grid doubling with slope `>= order - 0.2`.

use crate::dynamics::{bilinear, contract_endo, tmat_apply, tmat_scale, Model};
use crate::error::Result;
use crate::fields::{fd_partial, FdOrder, Grid, Pullback};
use crate::geometry::{curvature, AProfile, LapseProfile, SProfile, WarpedSpacetime};
use crate::linalg::{c, mat_apply, mat_mul, mat_scale, mat_vsp, Lin, Mat2c, VSp, M, V2, ZERO_C};
use crate::spin::{dirac_spatial, dirac_with, SpinConnection, SpinFrame};
use crate::target::{quartic_contraction, sharp_gradient_from, target_geometry, TargetChart, WarpFamily};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub const TIME_STEP: f64 = 1e-2;
pub const EXACT_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub id: String,
    pub residual: f64,
    pub slope: Option<f64>,
    pub order: Option<usize>,
    pub pass: bool,
}

impl CheckResult {
    /// Verdict from residuals on a grid and its doubling.
    pub fn from_refinement(id: &str, coarse: f64, fine: f64, order: usize) -> Self {
        let slope = if coarse > 0.0 && fine > 0.0 { Some((coarse / fine).log2()) } else { None };
        let pass = fine <= EXACT_TOL || slope.is_some_and(|s| s >= order as f64 - 0.2);
        CheckResult { id: id.into(), residual: fine, slope, order: Some(order), pass }
    }

    pub fn exact(id: &str, residual: f64, tol: f64) -> Self {
        CheckResult { id: id.into(), residual, slope: None, order: None, pass: residual <= tol }
    }
}

/// `f'(t)` from samples at `t + k h`, `k = -3..=3`, sixth order.
pub fn time_derivative<T: Lin, F>(f: F, t: f64, h: f64) -> Result<Vec<T>>
where
    F: Fn(f64) -> Result<Vec<T>>,
{
    const W: [f64; 3] = [45.0, -9.0, 1.0];
    let mut out: Option<Vec<T>> = None;
    for (k, w) in W.iter().enumerate() {
        let step = (k + 1) as f64 * h;
        let p = f(t + step)?;
        let m = f(t - step)?;
        let term: Vec<T> = p.iter().zip(&m).map(|(a, b)| a.sub(*b).scale(w / (60.0 * h))).collect();
        out = Some(match out {
            None => term,
            Some(o) => o.iter().zip(&term).map(|(a, b)| a.add(*b)).collect(),
        });
    }
    Ok(out.unwrap_or_default())
}

/// `sum_k A_k cos(k.x + w_k t) + B_k sin(k.x + w_k t)`.
#[derive(Debug, Clone)]
pub struct AnalyticField<T: Lin> {
    pub modes: Vec<([i32; 2], f64, T, T)>,
}

impl<T: Lin> AnalyticField<T> {
    pub fn eval(&self, t: f64, x: &[f64; 2]) -> T {
        let mut v = T::zero();
        for (k, w, a, b) in &self.modes {
            let ph = k[0] as f64 * x[0] + k[1] as f64 * x[1] + w * t;
            v = v.axpy(ph.cos(), *a).axpy(ph.sin(), *b);
        }
        v
    }

    pub fn dt(&self, t: f64, x: &[f64; 2]) -> T {
        let mut v = T::zero();
        for (k, w, a, b) in &self.modes {
            let ph = k[0] as f64 * x[0] + k[1] as f64 * x[1] + w * t;
            v = v.axpy(-w * ph.sin(), *a).axpy(w * ph.cos(), *b);
        }
        v
    }

    pub fn sample(&self, grid: &Grid, t: f64) -> Vec<T> {
        (0..grid.len()).map(|p| self.eval(t, &grid.coords(p))).collect()
    }

    pub fn sample_dt(&self, grid: &Grid, t: f64) -> Vec<T> {
        (0..grid.len()).map(|p| self.dt(t, &grid.coords(p))).collect()
    }

    fn random(d: usize, cutoff: i32, amp: f64, rng: &mut ChaCha8Rng, draw: fn(&mut ChaCha8Rng) -> T) -> Self {
        let mut modes = Vec::new();
        let k1r = if d == 1 { 0..=0 } else { -cutoff..=cutoff };
        for k0 in 0..=cutoff {
            for k1 in k1r.clone() {
                if k0 == 0 && k1 <= 0 && !(k1 == 0 && d == 1) {
                    continue;
                }
                let k = [k0, k1];
                let w = rng.gen_range(-1.0..1.0);
                let decay = amp / (1.0 + (k0 * k0 + k1 * k1) as f64);
                modes.push((k, w, draw(rng).scale(decay), draw(rng).scale(decay)));
            }
        }
        AnalyticField { modes }
    }
}

fn draw_v2(rng: &mut ChaCha8Rng) -> V2 {
    [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)]
}

fn draw_vsp(rng: &mut ChaCha8Rng) -> VSp {
    let mut v = VSp::zero();
    for s in v.iter_mut() {
        for z in s.iter_mut() {
            *z = c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        }
    }
    v
}

/// A background, a target and analytic time families `phi`, `psi`, `xi`.
#[derive(Debug, Clone)]
pub struct TestFamily {
    pub st: WarpedSpacetime,
    pub chart: TargetChart,
    pub order: FdOrder,
    pub phi: AnalyticField<V2>,
    pub psi: AnalyticField<VSp>,
    /// Auxiliary vector field along `phi` (or the components of a 1-form).
    pub xi: Vec<AnalyticField<V2>>,
}

impl TestFamily {
    pub fn random(st: WarpedSpacetime, chart: TargetChart, order: FdOrder, seed: u64, amp_phi: f64, amp_psi: f64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = st.spatial_dim();
        let phi = AnalyticField::random(d, 2, amp_phi, &mut rng, draw_v2);
        let psi = AnalyticField::random(d, 2, amp_psi, &mut rng, draw_vsp);
        let xi = (0..d).map(|_| AnalyticField::random(d, 2, 1.0, &mut rng, draw_v2)).collect();
        TestFamily { st, chart, order, phi, psi, xi }
    }

    pub fn phi_at(&self, grid: &Grid, t: f64) -> Vec<V2> {
        let y0 = self.chart.base_point();
        self.phi.sample(grid, t).iter().map(|v| [y0[0] + v[0], y0[1] + v[1]]).collect()
    }

    fn pullback(&self, grid: &Grid, t: f64) -> Result<Pullback> {
        Pullback::new(grid, &self.chart, &self.phi_at(grid, t), self.order)
    }

    /// `nabla_t v = d_t v + Gamma(pi) v` for a vector(-spinor) field `v(t)`.
    fn nabla_t<X: Lin, F>(&self, grid: &Grid, v: F, t: f64) -> Result<Vec<[X; M]>>
    where
        F: Fn(f64) -> Result<Vec<[X; M]>>,
    {
        let dv = time_derivative(&v, t, TIME_STEP)?;
        let v0 = v(t)?;
        let pb = self.pullback(grid, t)?;
        let pi = self.phi.sample_dt(grid, t);
        Ok((0..grid.len())
            .map(|p| dv[p].add(mat_apply(&pb.geo[p].connection_matrix(&pi[p]), &v0[p])))
            .collect())
    }
}

fn rel_l2<X: Lin>(diff: &[X], scale: &[X]) -> f64 {
    let n: f64 = diff.iter().map(|v| v.norm_sqr()).sum();
    let d: f64 = scale.iter().map(|v| v.norm_sqr()).sum();
    (n / d.max(1e-300)).sqrt()
}

fn sub_fields<X: Lin>(a: &[X], b: &[X]) -> Vec<X> {
    a.iter().zip(b).map(|(x, y)| x.sub(*y)).collect()
}

/// Coordinate Clifford factors `h^{ab} d_b .`.
fn clifford_coord(frame: &SpinFrame, s: f64, a: f64, d: usize) -> Vec<Mat2c> {
    let mut out = vec![mat_scale(&frame.gamma[0], c(-s, 0.0))];
    for i in 0..d {
        out.push(mat_scale(&frame.gamma[1 + i], c(1.0 / a, 0.0)));
    }
    out
}

// ---------------------------------------------------------------------------
// Weitzenboeck

/// Relative residual of `D^2 psi - (box psi + scal/4 psi + W psi)` at `t`.
pub fn weitzenboeck_residual(fam: &TestFamily, npts: usize, twisted: bool, t: f64) -> Result<f64> {
    let d = fam.st.spatial_dim();
    let grid = Grid::new(d, npts)?;
    let frame = SpinFrame::new(fam.st.n)?;
    let psi_at = |u: f64| Ok(fam.psi.sample(&grid, u));
    let nt_psi = |u: f64| fam.nabla_t(&grid, psi_at, u);
    let dirac_at = |u: f64| -> Result<Vec<VSp>> {
        let pb = fam.pullback(&grid, u)?;
        let conn = SpinConnection::at(&frame, &fam.st, u)?;
        let bg = fam.st.background(u)?;
        Ok(dirac_with(&pb, &frame, &conn, &bg, &fam.psi.sample(&grid, u), &nt_psi(u)?))
    };
    let eta = dirac_at(t)?;
    let nt_eta = fam.nabla_t(&grid, dirac_at, t)?;
    let pb = fam.pullback(&grid, t)?;
    let conn = SpinConnection::at(&frame, &fam.st, t)?;
    let bg = fam.st.background(t)?;
    let lhs = dirac_with(&pb, &frame, &conn, &bg, &eta, &nt_eta);

    let psi = fam.psi.sample(&grid, t);
    let nt = nt_psi(t)?;
    let ntnt = fam.nabla_t(&grid, nt_psi, t)?;
    let lap = pb.spinor_laplacian(&psi, &conn.omega);
    let pi = fam.phi.sample_dt(&grid, t);
    let gam = clifford_coord(&frame, bg.s, bg.a, d);
    let rhs: Vec<VSp> = (0..grid.len())
        .map(|p| {
            let mut v = ntnt[p]
                .scale(bg.s * bg.s)
                .add(nt[p].scale(bg.s * bg.ds + 0.5 * bg.s * bg.s * bg.tr_gdot))
                .sub(lap[p].scale(1.0 / (bg.a * bg.a)))
                .add(psi[p].scale(bg.scal / 4.0));
            if twisted {
                let xs: Vec<V2> = (0..=d).map(|a| if a == 0 { pi[p] } else { pb.dphi[a - 1][p] }).collect();
                for a in 0..=d {
                    for b in (a + 1)..=d {
                        let r = pb.geo[p].curvature_endo(&xs[a], &xs[b]);
                        v = v.add(mat_vsp(&mat_mul(&gam[a], &gam[b]), &mat_apply(&r, &psi[p])));
                    }
                }
            }
            v
        })
        .collect();
    Ok(rel_l2(&sub_fields(&lhs, &rhs), &lhs))
}

pub fn check_weitzenboeck(fam: &TestFamily, npts: usize, twisted: bool) -> Result<CheckResult> {
    let t = 0.3;
    let r1 = weitzenboeck_residual(fam, npts, twisted, t)?;
    let r2 = weitzenboeck_residual(fam, 2 * npts, twisted, t)?;
    let id = if twisted { "weitzenboeck" } else { "weitzenboeck_untwisted" };
    Ok(CheckResult::from_refinement(id, r1, r2, fam.order.as_int()))
}

// ---------------------------------------------------------------------------
// Conformal covariance

/// Time-independent conformal factor `w(x)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Factor {
    Const(f64),
    /// `1 + amp cos x^1`.
    Cos(f64),
}

impl Factor {
    fn eval(&self, x: &[f64; 2]) -> f64 {
        match *self {
            Factor::Const(c) => c,
            Factor::Cos(a) => 1.0 + a * x[0].cos(),
        }
    }
}

/// Dirac operator of `-H_0^2 dt^2 + sum H_i^2 dx_i^2` on untwisted spinors:
/// `sum_a eps_a gamma_a H_a^-1 (d_a + 1/2 d_a ln(prod H / H_a))`. `hfun`
/// returns the scale factors per grid point.
pub fn diagonal_dirac<H, P>(grid: &Grid, order: FdOrder, frame: &SpinFrame, hfun: H, psi: P, t: f64) -> Result<Vec<VSp>>
where
    H: Fn(f64) -> Vec<[f64; 3]>,
    P: Fn(f64) -> Vec<VSp>,
{
    let d = grid.d;
    let log_ratio = |u: f64, a: usize| -> Vec<f64> {
        hfun(u)
            .iter()
            .map(|h| (0..=d).filter(|&b| b != a).map(|b| h[b].ln()).sum::<f64>())
            .collect()
    };
    let h = hfun(t);
    let p0 = psi(t);
    let dpsi_t = time_derivative(|u| Ok(psi(u)), t, TIME_STEP)?;
    let dl_t = time_derivative(|u| Ok(log_ratio(u, 0)), t, TIME_STEP)?;
    let mut out: Vec<VSp> = (0..grid.len())
        .map(|p| {
            let v = dpsi_t[p].add(p0[p].scale(0.5 * dl_t[p]));
            frame.clifford_vsp(0, &v).scale(-1.0 / h[p][0])
        })
        .collect();
    for i in 0..d {
        let dpsi = fd_partial(&p0, grid, i, order);
        let dl = fd_partial(&log_ratio(t, i + 1), grid, i, order);
        for p in 0..grid.len() {
            let v = dpsi[p].add(p0[p].scale(0.5 * dl[p]));
            out[p] = out[p].add(frame.clifford_vsp(1 + i, &v).scale(1.0 / h[p][1 + i]));
        }
    }
    Ok(out)
}

/// Relative residual of `D_bar(w^{-(n-1)/2} psi) = w^{-(n+1)/2} D psi` for
/// `h_bar = w^2 h`.
pub fn conformal_residual(fam: &TestFamily, factor: Factor, npts: usize, t: f64) -> Result<f64> {
    let n = fam.st.n;
    let grid = Grid::new(n - 1, npts)?;
    let frame = SpinFrame::new(n)?;
    let w: Vec<f64> = (0..grid.len()).map(|p| factor.eval(&grid.coords(p))).collect();
    let h_of = |u: f64| -> Vec<[f64; 3]> {
        let s = fam.st.s.jet(u).v;
        let a = fam.st.a.jet(u).v;
        vec![[1.0 / s, a, a]; grid.len()]
    };
    let hbar_of = |u: f64| -> Vec<[f64; 3]> { h_of(u).iter().zip(&w).map(|(h, f)| [f * h[0], f * h[1], f * h[2]]).collect() };
    let e_in = -((n - 1) as f64) / 2.0;
    let e_out = -((n + 1) as f64) / 2.0;
    let psi_bar = |u: f64| -> Vec<VSp> { fam.psi.sample(&grid, u).iter().zip(&w).map(|(v, f)| v.scale(f.powf(e_in))).collect() };
    let lhs = diagonal_dirac(&grid, fam.order, &frame, hbar_of, psi_bar, t)?;
    let rhs: Vec<VSp> = diagonal_dirac(&grid, fam.order, &frame, h_of, |u| fam.psi.sample(&grid, u), t)?
        .iter()
        .zip(&w)
        .map(|(v, f)| v.scale(f.powf(e_out)))
        .collect();
    Ok(rel_l2(&sub_fields(&lhs, &rhs), &lhs))
}

pub fn check_conformal_covariance(fam: &TestFamily, factor: Factor, npts: usize) -> Result<CheckResult> {
    let r1 = conformal_residual(fam, factor, npts, 0.2)?;
    let r2 = conformal_residual(fam, factor, 2 * npts, 0.2)?;
    Ok(CheckResult::from_refinement("conformal_covariance", r1, r2, fam.order.as_int()))
}

// ---------------------------------------------------------------------------
// Commutators

/// Spin curvature `R^S(X,Y) = 1/4 sum eps_a eps_b h(R(X,Y) e_a, e_b) gamma_a gamma_b`
/// for coordinate directions `X = d_mu`, `Y = d_nu`, from the coordinate
/// Riemann tensor.
pub fn spin_curvature(st: &WarpedSpacetime, frame: &SpinFrame, t: f64, mu: usize, nu: usize) -> Result<Mat2c> {
    let cd = curvature(st, t, &[])?;
    let hd = st.metric_diag(t);
    let s = st.s.jet(t).v;
    let a = st.a.jet(t).v;
    let scale = |b: usize| if b == 0 { s } else { 1.0 / a };
    let n = st.n;
    let mut out = [[ZERO_C; 2]; 2];
    for al in 0..n {
        for be in 0..n {
            // h(R(d_mu,d_nu) e_al, e_be) = scale_al scale_be h_{be be} R^be_{al mu nu}
            let v = scale(al) * scale(be) * hd[be] * cd.riemann[be][al][mu][nu];
            let eps = frame.eta(al) * frame.eta(be);
            let g = mat_mul(&frame.gamma[al], &frame.gamma[be]);
            out = crate::linalg::mat_add(&out, &mat_scale(&g, c(0.25 * eps * v, 0.0)));
        }
    }
    Ok(out)
}

/// Residuals of the four commutator identities: map `k = 0`, 1-form `k = 1`,
/// spinor `k = 0`, and `[D*D, D] phi`.
pub fn commutator_residuals(fam: &TestFamily, npts: usize, t: f64) -> Result<[f64; 4]> {
    let d = fam.st.spatial_dim();
    let grid = Grid::new(d, npts)?;
    let frame = SpinFrame::new(fam.st.n)?;
    let bg = fam.st.background(t)?;
    let h = bg.da / bg.a;
    let pb = fam.pullback(&grid, t)?;
    let pi = fam.phi.sample_dt(&grid, t);
    let pi_ext = fam.phi.sample_dt(&grid, t);

    // map, k = 0: nabla_t(d_i phi) - h d_i phi - D_i pi = -h d_i phi
    let mut num = 0.0;
    let mut den = 0.0;
    for i in 0..d {
        let dphi_at = |u: f64| -> Result<Vec<V2>> { Ok(fam.pullback(&grid, u)?.dphi[i].clone()) };
        let nt = fam.nabla_t(&grid, dphi_at, t)?;
        let dpi = pb.twisted_d(&pi_ext, i);
        for p in 0..grid.len() {
            let lhs = nt[p].sub(pb.dphi[i][p].scale(h)).sub(dpi[p]);
            let rhs = pb.dphi[i][p].scale(-h);
            num += lhs.sub(rhs).norm_sqr();
            den += nt[p].norm_sqr() + rhs.norm_sqr();
        }
    }
    let r_map0 = (num / den.max(1e-300)).sqrt();

    // 1-form, k = 1: [nabla_t, D_i] xi_j - h D_i xi_j = R(pi, d_i phi) xi_j - h D_i xi_j
    let (mut num, mut den) = (0.0, 0.0);
    for i in 0..d {
        for j in 0..d {
            let xi_at = |u: f64| Ok(fam.xi[j].sample(&grid, u));
            let dxi_at = |u: f64| -> Result<Vec<V2>> { Ok(fam.pullback(&grid, u)?.twisted_d(&fam.xi[j].sample(&grid, u), i)) };
            let nt_dxi = fam.nabla_t(&grid, dxi_at, t)?;
            let nt_xi = fam.nabla_t(&grid, xi_at, t)?;
            let xi = fam.xi[j].sample(&grid, t);
            let dxi = pb.twisted_d(&xi, i);
            // (nabla_t D xi)(d_i, d_j) = nabla_t(D_i xi_j) - 2h D_i xi_j
            // (D nabla_t xi)(d_i, d_j) = D_i(nabla_t xi_j - h xi_j)
            let d_nt = pb.twisted_d(&nt_xi, i);
            for p in 0..grid.len() {
                let lhs = nt_dxi[p].sub(dxi[p].scale(2.0 * h)).sub(d_nt[p].sub(dxi[p].scale(h)));
                let r = pb.geo[p].curvature_endo(&pi[p], &pb.dphi[i][p]);
                let rhs = mat_apply(&r, &xi[p]).sub(dxi[p].scale(h));
                num += lhs.sub(rhs).norm_sqr();
                den += nt_dxi[p].norm_sqr() + rhs.norm_sqr();
            }
        }
    }
    let r_form1 = (num / den.max(1e-300)).sqrt();

    // spinor, k = 0: nabla_t(D_i psi) - h D_i psi - D_i nabla_t psi
    //   = R^S(d_t, d_i) psi + R^P(pi, d_i phi) psi - h D_i psi
    let (mut num, mut den) = (0.0, 0.0);
    let conn = SpinConnection::at(&frame, &fam.st, t)?;
    let psi = fam.psi.sample(&grid, t);
    let nt_psi = fam.nabla_t(&grid, |u| Ok(fam.psi.sample(&grid, u)), t)?;
    for i in 0..d {
        let dpsi_at = |u: f64| -> Result<Vec<VSp>> {
            let c = SpinConnection::at(&frame, &fam.st, u)?;
            Ok(fam.pullback(&grid, u)?.spinor_d(&fam.psi.sample(&grid, u), i, &c.omega[i]))
        };
        let nt_d = fam.nabla_t(&grid, dpsi_at, t)?;
        let dpsi = pb.spinor_d(&psi, i, &conn.omega[i]);
        let d_nt = pb.spinor_d(&nt_psi, i, &conn.omega[i]);
        let rs = spin_curvature(&fam.st, &frame, t, 0, 1 + i)?;
        for p in 0..grid.len() {
            let lhs = nt_d[p].sub(dpsi[p].scale(h)).sub(d_nt[p]);
            let r = pb.geo[p].curvature_endo(&pi[p], &pb.dphi[i][p]);
            let rhs = mat_vsp(&rs, &psi[p]).add(mat_apply(&r, &psi[p])).sub(dpsi[p].scale(h));
            num += lhs.sub(rhs).norm_sqr();
            den += nt_d[p].norm_sqr() + rhs.norm_sqr();
        }
    }
    let r_spin0 = (num / den.max(1e-300)).sqrt();

    // [D*D, D] phi (d_j) = a^-2 sum_i R(d_j phi, d_i phi) d_i phi, with
    // D*D = -a^-2 sum_i D_i D_i applied slotwise.
    let ainv2 = 1.0 / (bg.a * bg.a);
    let dd_phi = {
        let mut acc = vec![[0.0; M]; grid.len()];
        for i in 0..d {
            let v = pb.twisted_d(&pb.dphi[i], i);
            acc.iter_mut().zip(&v).for_each(|(a, b)| *a = a.sub(b.scale(ainv2)));
        }
        acc
    };
    let (mut num, mut den) = (0.0, 0.0);
    for j in 0..d {
        let mut dd_dphi = vec![[0.0; M]; grid.len()];
        for i in 0..d {
            let v = pb.twisted_d(&pb.twisted_d(&pb.dphi[j], i), i);
            dd_dphi.iter_mut().zip(&v).for_each(|(a, b)| *a = a.sub(b.scale(ainv2)));
        }
        let d_dd = pb.twisted_d(&dd_phi, j);
        for p in 0..grid.len() {
            let lhs = dd_dphi[p].sub(d_dd[p]);
            let mut rhs = [0.0; M];
            for i in 0..d {
                let r = pb.geo[p].curvature_endo(&pb.dphi[j][p], &pb.dphi[i][p]);
                rhs = rhs.add(mat_apply(&r, &pb.dphi[i][p]).scale(ainv2));
            }
            num += lhs.sub(rhs).norm_sqr();
            den += dd_dphi[p].norm_sqr() + rhs.norm_sqr();
        }
    }
    let r_dd = (num / den.max(1e-300)).sqrt();
    Ok([r_map0, r_form1, r_spin0, r_dd])
}

pub const COMMUTATOR_IDS: [&str; 4] = ["commutator_map_k0", "commutator_form_k1", "commutator_spinor_k0", "commutator_dstar_d"];

pub fn check_commutators(fam: &TestFamily, npts: usize) -> Result<Vec<CheckResult>> {
    let t = 0.4;
    let r1 = commutator_residuals(fam, npts, t)?;
    let r2 = commutator_residuals(fam, 2 * npts, t)?;
    Ok((0..4)
        .map(|k| CheckResult::from_refinement(COMMUTATOR_IDS[k], r1[k], r2[k], fam.order.as_int()))
        .collect())
}

// ---------------------------------------------------------------------------
// Product rule

/// Max pointwise residual of `d_t <D^k xi, D^k eta> = <nabla_t D^k xi, D^k eta> + <D^k xi, nabla_t D^k eta>`
/// with the left side by a centered difference of step `h`. `xi = xi[0]`,
/// `eta = xi[1 mod d]`, pullback metric and `g_t` on the form slot.
pub fn product_rule_residual(fam: &TestFamily, npts: usize, k: usize, h: f64, t: f64) -> Result<f64> {
    let d = fam.st.spatial_dim();
    let grid = Grid::new(d, npts)?;
    let eta_idx = if d > 1 { 1 } else { 0 };
    // D^k of a vector field, k <= 1, direction 0 only; returns (value, form weight a^{-2k})
    let dk = |u: f64, which: usize| -> Result<Vec<V2>> {
        let v = if which == 0 {
            fam.xi[0].sample(&grid, u)
        } else {
            let base = fam.xi[eta_idx].sample(&grid, u);
            base.iter().map(|x| [x[1], -x[0] + 0.3 * x[1]]).collect()
        };
        if k == 0 {
            Ok(v)
        } else {
            Ok(fam.pullback(&grid, u)?.twisted_d(&v, 0))
        }
    };
    let pairing = |u: f64| -> Result<Vec<f64>> {
        let pb = fam.pullback(&grid, u)?;
        let a2k = fam.st.a.jet(u).v.powi(-2 * k as i32);
        let x = dk(u, 0)?;
        let y = dk(u, 1)?;
        Ok((0..grid.len()).map(|p| a2k * crate::linalg::gdot(&pb.geo[p].g, &x[p], &y[p])).collect())
    };
    let lp = pairing(t + h)?;
    let lm = pairing(t - h)?;
    let lhs: Vec<f64> = lp.iter().zip(&lm).map(|(a, b)| (a - b) / (2.0 * h)).collect();
    let pb = fam.pullback(&grid, t)?;
    let bg = fam.st.background(t)?;
    let a2k = bg.a.powi(-2 * k as i32);
    let x = dk(t, 0)?;
    let y = dk(t, 1)?;
    // nabla_t of a form slot: nabla_t(v(d_i)) - (a'/a) v(d_i)
    let corr = k as f64 * bg.da / bg.a;
    let ntx: Vec<V2> = fam
        .nabla_t(&grid, |u| dk(u, 0), t)?
        .iter()
        .zip(&x)
        .map(|(n, v)| n.sub(v.scale(corr)))
        .collect();
    let nty: Vec<V2> = fam
        .nabla_t(&grid, |u| dk(u, 1), t)?
        .iter()
        .zip(&y)
        .map(|(n, v)| n.sub(v.scale(corr)))
        .collect();
    let mut worst = 0.0f64;
    let mut scale = 0.0f64;
    for p in 0..grid.len() {
        // <., .>_{g_t} on one form slot also differentiates g^ii = a^-2: this
        // is absorbed by the form correction above.
        let g = &pb.geo[p].g;
        let rhs = a2k * (crate::linalg::gdot(g, &ntx[p], &y[p]) + crate::linalg::gdot(g, &x[p], &nty[p]));
        worst = worst.max((lhs[p] - rhs).abs());
        scale = scale.max(rhs.abs()).max(lhs[p].abs());
    }
    Ok(worst / scale.max(1e-300))
}

pub fn check_product_rule(fam: &TestFamily, npts: usize, k: usize) -> Result<CheckResult> {
    let h = 0.02;
    let r1 = product_rule_residual(fam, npts, k, h, 0.3)?;
    let r2 = product_rule_residual(fam, npts, k, h / 2.0, 0.3)?;
    Ok(CheckResult::from_refinement(&format!("product_rule_k{k}"), r1, r2, 2))
}

// ---------------------------------------------------------------------------
// Variational consistency

/// Outcome of the three directional-derivative comparisons.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VariationalReport {
    /// Spinor directions on the full slice action (sphere target).
    pub spinor: f64,
    /// Map directions on the Dirichlet part (sphere target, `psi = 0`).
    pub map: f64,
    /// Map directions with parallel spinor on the quartic potential (warped target).
    pub quartic: f64,
}

impl VariationalReport {
    pub fn max(&self) -> f64 {
        self.spinor.max(self.map).max(self.quartic)
    }
}

fn random_vsp_field(n: usize, rng: &mut ChaCha8Rng) -> Vec<VSp> {
    (0..n).map(|_| draw_vsp(rng)).collect()
}

/// Slice action on a static background (`s`, `a`, `N` constant):
/// `1/2 sum vol [ (Ns)^{n-2} a^-2 |d phi|^2 + Re <psi, i D_Sigma psi> - 1/6 c' Q ]`.
fn slice_action(model: &Model, phi: &[V2], psi: &[VSp], quartic_coef: f64) -> Result<f64> {
    let grid = &model.grid;
    let pb = Pullback::new(grid, &model.chart, phi, model.order)?;
    let bg = model.st.background(0.0)?;
    let conn = SpinConnection::at(&model.frame, &model.st, 0.0)?;
    let (nn, _, _) = model.st.lapse.eval(0.0);
    let ns = nn * bg.s;
    let n = model.st.n as f64;
    let cp = ns.powf(2.0 - n);
    let vol = bg.a.powi(grid.d as i32) * grid.cell();
    let dpsi = dirac_spatial(&pb, &model.frame, &conn, &bg, psi);
    let mut total = 0.0;
    for p in 0..grid.len() {
        let geo = &pb.geo[p];
        let mut dir = 0.0;
        for i in 0..grid.d {
            dir += crate::linalg::gdot(&geo.g, &pb.dphi[i][p], &pb.dphi[i][p]);
        }
        let mut dirac = ZERO_C;
        for i in 0..M {
            for j in 0..M {
                let idp = dpsi[p][j].map(|z| z * c(0.0, 1.0));
                dirac += geo.g[i][j] * model.frame.pair(&psi[p][i], &idp);
            }
        }
        let q = quartic_contraction(geo, &bilinear(&model.frame, &psi[p]));
        total += 0.5 * vol * (ns.powf(n - 2.0) * dir / (bg.a * bg.a) + dirac.re - quartic_coef * cp * q);
    }
    Ok(total)
}

fn five_point<F: Fn(f64) -> Result<f64>>(f: F, l: f64) -> Result<f64> {
    Ok((-f(2.0 * l)? + 8.0 * f(l)? - 8.0 * f(-l)? + f(-2.0 * l)?) / (12.0 * l))
}

fn rel_mismatch(fd: f64, el: f64) -> f64 {
    (fd - el).abs() / fd.abs().max(el.abs()).max(1e-300)
}

/// Runs the three comparisons on `ndirs` random directions each. `el_coef`
/// is the coefficient of `c' R(psi,psi) psi` in the spinor Euler-Lagrange
/// expression (`1/3` is the correct value); the action always uses `1/6`.
pub fn variational_report(seed: u64, npts: usize, ndirs: usize, el_coef: f64) -> Result<VariationalReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let st = WarpedSpacetime::new(2, SProfile::Const(1.0), AProfile::Const(1.0), LapseProfile::One)?;
    let model = Model::new(st, TargetChart::sphere(), npts, FdOrder::Four)?;
    let grid = model.grid;
    let fam = TestFamily::random(st, model.chart, model.order, seed, 0.6, 0.4);
    let phi = fam.phi_at(&grid, 0.0);
    let psi = fam.psi.sample(&grid, 0.0);
    let vol = grid.cell();

    // (a) spinor directions
    let state = crate::fields::FieldState { t: 0.0, phi: phi.clone(), pi: vec![[0.0; M]; grid.len()], psi: psi.clone(), chi: vec![VSp::zero(); grid.len()] };
    let res = model.dirac_residual_field(&state)?;
    let pb = Pullback::new(&grid, &model.chart, &phi, model.order)?;
    // EL = i D psi - el_coef c' R(psi,psi) psi; residual field has coefficient 1/3
    let el: Vec<VSp> = (0..grid.len())
        .map(|p| {
            let e = contract_endo(&pb.geo[p].riem_up(), &bilinear(&model.frame, &psi[p]));
            res[p].add(tmat_apply(&tmat_scale(&e, 1.0 / 3.0 - el_coef), &psi[p]))
        })
        .collect();
    let mut worst_a = 0.0f64;
    for _ in 0..ndirs {
        let xi = random_vsp_field(grid.len(), &mut rng);
        let f = |l: f64| {
            let moved: Vec<VSp> = psi.iter().zip(&xi).map(|(a, b)| a.axpy(l, *b)).collect();
            slice_action(&model, &phi, &moved, 1.0 / 6.0)
        };
        let fd = five_point(f, 1e-3)?;
        let mut pred = 0.0;
        for p in 0..grid.len() {
            for i in 0..M {
                for j in 0..M {
                    pred += vol * pb.geo[p].g[i][j] * model.frame.pair(&xi[p][i], &el[p][j]).re;
                }
            }
        }
        worst_a = worst_a.max(rel_mismatch(fd, pred));
    }

    // (b) map directions, psi = 0
    let zero = vec![VSp::zero(); grid.len()];
    let lap = pb.map_laplacian();
    let mut worst_b = 0.0f64;
    for _ in 0..ndirs {
        let eta: Vec<V2> = (0..grid.len()).map(|_| draw_v2(&mut rng)).collect();
        let f = |l: f64| {
            let moved: Vec<V2> = phi.iter().zip(&eta).map(|(a, b)| a.axpy(l, *b)).collect();
            slice_action(&model, &moved, &zero, 1.0 / 6.0)
        };
        let fd = five_point(f, 1e-4)?;
        let pred: f64 = (0..grid.len()).map(|p| vol * crate::linalg::gdot(&pb.geo[p].g, &lap[p], &eta[p])).sum();
        worst_b = worst_b.max(rel_mismatch(fd, pred));
    }

    // (c) quartic potential under map variations with a parallel spinor, warped target
    let chart = TargetChart::warped(WarpFamily::Cubic { c: 1.0 });
    let wfam = TestFamily::random(st, chart, model.order, seed ^ 0x5eed, 0.2, 0.5);
    let wphi = wfam.phi_at(&grid, 0.0);
    let wpsi = wfam.psi.sample(&grid, 0.0);
    let frame = SpinFrame::new(2)?;
    let potential = |ph: &[V2], ps: &[VSp]| -> Result<f64> {
        let mut v = 0.0;
        for p in 0..grid.len() {
            let geo = target_geometry(&chart, &ph[p])?;
            v += -0.5 * vol / 6.0 * quartic_contraction(&geo, &bilinear(&frame, &ps[p]));
        }
        Ok(v)
    };
    let mut worst_c = 0.0f64;
    for _ in 0..ndirs {
        let eta: Vec<V2> = (0..grid.len()).map(|_| draw_v2(&mut rng).scale(0.3)).collect();
        let f = |l: f64| -> Result<f64> {
            let moved: Vec<V2> = wphi.iter().zip(&eta).map(|(a, b)| a.axpy(l, *b)).collect();
            let mut ps = wpsi.clone();
            for p in 0..grid.len() {
                let geo = target_geometry(&chart, &wphi[p])?;
                let a = geo.connection_matrix(&eta[p]);
                ps[p] = ps[p].sub(mat_apply(&a, &wpsi[p]).scale(l));
            }
            potential(&moved, &ps)
        };
        // the transport is first order only; use the symmetric 2-point rule
        // at two steps and Richardson-extrapolate
        let d1 = (f(1e-4)? - f(-1e-4)?) / 2e-4;
        let d2 = (f(2e-4)? - f(-2e-4)?) / 4e-4;
        let fd = (4.0 * d1 - d2) / 3.0;
        let mut pred = 0.0;
        for p in 0..grid.len() {
            let geo = target_geometry(&chart, &wphi[p])?;
            let sharp = sharp_gradient_from(&geo, &bilinear(&frame, &wpsi[p]));
            pred += -vol / 12.0 * crate::linalg::gdot(&geo.g, &sharp, &eta[p]);
        }
        worst_c = worst_c.max(rel_mismatch(fd, pred));
    }
    Ok(VariationalReport { spinor: worst_a, map: worst_b, quartic: worst_c })
}

pub fn check_variational_consistency(seed: u64, npts: usize, ndirs: usize) -> Result<CheckResult> {
    let r = variational_report(seed, npts, ndirs, 1.0 / 3.0)?;
    Ok(CheckResult::exact("variational_consistency", r.max(), 1e-6))
}

/// The same comparison with the spinor coefficient mis-coded as `1/6`; a
/// correct harness reports a failing result here.
pub fn check_variational_mutation(seed: u64, npts: usize, ndirs: usize) -> Result<CheckResult> {
    let r = variational_report(seed, npts, ndirs, 1.0 / 6.0)?;
    Ok(CheckResult::exact("variational_mutation_1_6", r.spinor, 1e-6))
}

// ---------------------------------------------------------------------------
// Battery

fn tag(mut r: CheckResult, suffix: &str) -> CheckResult {
    r.id = format!("{}/{}", r.id, suffix);
    r
}

/// Full identity battery at default sizes. Deterministic per seed.
pub fn run_battery(seed: u64) -> Result<Vec<CheckResult>> {
    let o = FdOrder::Four;
    let flat_static = WarpedSpacetime::static_flat(3);
    let desitter = WarpedSpacetime::de_sitter(3);
    let osc = WarpedSpacetime::new(3, SProfile::Exp { lambda: 0.5 }, AProfile::Osc { mu: 0.1, omega: 1.0 }, LapseProfile::One)?;
    let osc2 = WarpedSpacetime::new(2, SProfile::Exp { lambda: 0.5 }, AProfile::Osc { mu: 0.1, omega: 1.0 }, LapseProfile::One)?;
    type Job = Box<dyn Fn() -> Result<Vec<CheckResult>> + Send + Sync>;
    let jobs: Vec<Job> = vec![
        Box::new(move || {
            let f = TestFamily::random(flat_static, TargetChart::flat(), o, seed, 0.3, 1.0);
            Ok(vec![tag(check_weitzenboeck(&f, 16, true)?, "flat_static")])
        }),
        Box::new(move || {
            let f = TestFamily::random(desitter, TargetChart::flat(), FdOrder::Two, seed, 0.3, 1.0);
            Ok(vec![tag(check_weitzenboeck(&f, 16, true)?, "desitter_flat_target")])
        }),
        Box::new(move || {
            let f = TestFamily::random(osc, TargetChart::sphere(), o, seed, 0.2, 1.0);
            Ok(vec![tag(check_weitzenboeck(&f, 32, true)?, "sphere")])
        }),
        Box::new(move || {
            let f = TestFamily::random(desitter, TargetChart::flat(), o, seed, 0.3, 1.0);
            Ok(vec![
                tag(check_conformal_covariance(&f, Factor::Const(2.5), 16)?, "const"),
                tag(check_conformal_covariance(&f, Factor::Cos(0.3), 32)?, "cos"),
            ])
        }),
        Box::new(move || {
            let f = TestFamily::random(osc, TargetChart::sphere(), o, seed, 0.2, 1.0);
            Ok(check_commutators(&f, 32)?.into_iter().map(|r| tag(r, "sphere")).collect())
        }),
        Box::new(move || {
            let f = TestFamily::random(osc2, TargetChart::sphere(), o, seed, 0.4, 1.0);
            Ok(vec![
                tag(check_product_rule(&f, 32, 0)?, "sphere"),
                tag(check_product_rule(&f, 32, 1)?, "sphere"),
            ])
        }),
    ];
    let out: Result<Vec<Vec<CheckResult>>> = jobs.par_iter().map(|j| j()).collect();
    Ok(out?.into_iter().flatten().collect())
}

