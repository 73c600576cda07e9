//! Right-hand sides of the rescaled second-order system, RK4 time stepping,
//! small random initial data and the Dirac constraint monitor.
//!
//! The map equation, with `c' = (Ns)^{2-n}` and `G^a = h^{ab} d_b .` the
//! coordinate Clifford factors (`G^0 = -s gamma_0`, `G^i = a^-1 gamma_i`):
//!
//! ```text
//! s^2 nabla_t pi = -s s' pi - 1/2 s^2 tr(g') pi - D*D phi
//!                  + (n-2) [ -s s' pi - s^2 (N_t/N) pi + a^-2 N^-1 d_i N d_i phi ]
//!                  - 1/2 c' R^I_JKL <psi^K, i G^a psi^L> d_a phi^J
//!                  + 1/12 c'^2 G^IJ nabla_J R_KLMN <psi^K,psi^M> <psi^L,psi^N>
//! ```
//!
//! The spinor equation, with `E = 1/3 c' R(psi,psi)`:
//!
//! ```text
//! s^2 nabla_t chi = -s s' chi - 1/2 s^2 tr(g') chi - D*D psi - scal/4 psi
//!                   - sum_{a<b} G^a G^b R(d_a phi, d_b phi) psi
//!                   - i sum_a G^a (nabla_a E) psi - E^2 psi
//! ```

use crate::error::{Error, Result};
use crate::fields::{gnorm_density, l2_integral, FdOrder, FieldState, Grid, Pullback};
use crate::geometry::{Background, WarpedSpacetime};
use crate::linalg::{c, lower, mat_apply, mat_mul, mat_scale, mat_sp, mat_vsp, Lin, Mat2c, Sp, VSp, C64, I_C, M, M2, V2, ZERO_C};
use crate::spin::{SpinConnection, SpinFrame};
use crate::target::{sharp_gradient_from, TargetChart, TargetGeometry};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Sign convention for the two constraint-derived terms of the spinor equation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SourceSign {
    /// `- i G^a (nabla_a E) psi - E^2 psi`, obtained by squaring `i D psi = E psi`.
    Derived,
    /// Both signs flipped.
    Flipped,
}

/// Vector-spinor-valued matrix on the target index.
pub type TMat = [[C64; M]; M];

#[derive(Debug, Clone)]
pub struct Model {
    pub st: WarpedSpacetime,
    pub chart: TargetChart,
    pub frame: SpinFrame,
    pub grid: Grid,
    pub order: FdOrder,
    pub cfl: f64,
    pub sign: SourceSign,
}

/// Individual terms of the map right-hand side (before division by `s^2`).
#[derive(Debug, Clone, Default)]
pub struct MapTerms {
    pub damping: Vec<V2>,
    pub trace: Vec<V2>,
    pub laplacian: Vec<V2>,
    pub lapse: Vec<V2>,
    pub spinor_coupling: Vec<V2>,
    pub sharp: Vec<V2>,
}

/// Individual terms of the spinor right-hand side (before division by `s^2`).
#[derive(Debug, Clone, Default)]
pub struct SpinorTerms {
    pub damping: Vec<VSp>,
    pub trace: Vec<VSp>,
    pub laplacian: Vec<VSp>,
    pub scal: Vec<VSp>,
    pub twist: Vec<VSp>,
    /// Part of the `nabla E` term from derivatives of `(Ns)^{2-n}`.
    pub grad_e_conformal: Vec<VSp>,
    /// Part from `nabla R`.
    pub grad_e_curvature: Vec<VSp>,
    /// Part from derivatives of the bilinear `<psi,psi>`.
    pub grad_e_spinor: Vec<VSp>,
    pub quartic: Vec<VSp>,
}

#[derive(Debug, Clone)]
pub struct RhsOutput {
    /// Coordinate second derivative `d_t^2 phi^I`.
    pub d2phi: Vec<V2>,
    /// `nabla_t^2 psi^I`.
    pub d2psi: Vec<VSp>,
}

/// Pointwise background data on a slice.
#[derive(Debug, Clone)]
struct Slice {
    bg: Background,
    pb: Pullback,
    conn: SpinConnection,
    /// `(c', d_t c', d_1 c')` per point.
    cprime: Vec<[f64; 3]>,
    /// `(N, N_t, d_1 N)` per point.
    lapse: Vec<(f64, f64, f64)>,
}

impl Model {
    pub fn new(st: WarpedSpacetime, chart: TargetChart, npts: usize, order: FdOrder) -> Result<Self> {
        let grid = Grid::new(st.spatial_dim(), npts)?;
        let frame = SpinFrame::new(st.n)?;
        Ok(Model { st, chart, frame, grid, order, cfl: 0.4, sign: SourceSign::Derived })
    }

    /// Minimal admissible regularity `r > (n-1)/2`.
    pub fn regularity(&self) -> usize {
        if self.st.n == 2 {
            1
        } else {
            2
        }
    }

    fn slice(&self, state: &FieldState) -> Result<Slice> {
        state.check_chart(&self.chart)?;
        let pb = Pullback::new(&self.grid, &self.chart, &state.phi, self.order)?;
        self.slice_with(state.t, pb)
    }

    fn slice_with(&self, t: f64, pb: Pullback) -> Result<Slice> {
        let bg = self.st.background(t)?;
        let conn = SpinConnection::at(&self.frame, &self.st, t)?;
        let n = self.st.n as f64;
        let sj = self.st.s.jet(t);
        let mut cprime = Vec::with_capacity(self.grid.len());
        let mut lapse = Vec::with_capacity(self.grid.len());
        for p in 0..self.grid.len() {
            let x = self.grid.coords(p);
            let (nn, nt, nx) = self.st.lapse.eval(x[0]);
            let ns = nn * sj.v;
            let cp = ns.powf(2.0 - n);
            cprime.push([cp, (2.0 - n) * cp * (nt / nn + sj.d1 / sj.v), (2.0 - n) * cp * nx / nn]);
            lapse.push((nn, nt, nx));
        }
        Ok(Slice { bg, pb, conn, cprime, lapse })
    }

    /// Coordinate Clifford factor `G^a = h^{ab} d_b .` for `a = 0..n`.
    fn clifford_coord(&self, bg: &Background) -> Vec<Mat2c> {
        let mut out = vec![mat_scale(&self.frame.gamma[0], c(-bg.s, 0.0))];
        for i in 0..self.grid.d {
            out.push(mat_scale(&self.frame.gamma[1 + i], c(1.0 / bg.a, 0.0)));
        }
        out
    }

    /// All terms of the map equation right-hand side.
    pub fn map_terms(&self, state: &FieldState) -> Result<MapTerms> {
        let sl = self.slice(state)?;
        Ok(self.map_terms_with(state, &sl))
    }

    fn map_terms_with(&self, state: &FieldState, sl: &Slice) -> MapTerms {
        let bg = &sl.bg;
        let n = self.st.n;
        let nm2 = n as f64 - 2.0;
        let lap = sl.pb.map_laplacian();
        let gam = self.clifford_coord(bg);
        let ainv2 = 1.0 / (bg.a * bg.a);
        let rows: Vec<[V2; 6]> = (0..self.grid.len())
            .into_par_iter()
            .map(|p| {
                let geo = &sl.pb.geo[p];
                let pi = state.pi[p];
                let damping = pi.scale(-bg.s * bg.ds);
                let trace = pi.scale(-0.5 * bg.s * bg.s * bg.tr_gdot);
                let laplacian = lap[p].scale(-ainv2);
                let (nn, nt, nx) = sl.lapse[p];
                let lapse = if n == 2 {
                    [0.0; M]
                } else {
                    pi.scale(-bg.s * bg.ds - bg.s * bg.s * nt / nn)
                        .add(sl.pb.dphi[0][p].scale(ainv2 * nx / nn))
                        .scale(nm2)
                };
                let psi = &state.psi[p];
                let cp = sl.cprime[p][0];
                let mut coupling = [0.0; M];
                if psi.norm_sqr() > 0.0 {
                    let riem_up = geo.riem_up();
                    for (alpha, g) in gam.iter().enumerate() {
                        let x = if alpha == 0 { pi } else { sl.pb.dphi[alpha - 1][p] };
                        let ig = mat_scale(g, I_C);
                        let mut cb = [[ZERO_C; M]; M];
                        for k in 0..M {
                            let gl: Vec<Sp> = (0..M).map(|l| mat_sp(&ig, &psi[l])).collect();
                            for l in 0..M {
                                cb[k][l] = self.frame.pair(&psi[k], &gl[l]);
                            }
                        }
                        for (i, ci) in coupling.iter_mut().enumerate() {
                            let mut v = ZERO_C;
                            for j in 0..M {
                                for k in 0..M {
                                    for l in 0..M {
                                        v += riem_up[i][j][k][l] * cb[k][l] * x[j];
                                    }
                                }
                            }
                            *ci += -0.5 * cp * v.re;
                        }
                    }
                }
                let sharp = if psi.norm_sqr() > 0.0 {
                    sharp_gradient_from(geo, &bilinear(&self.frame, psi)).scale(cp * cp / 12.0)
                } else {
                    [0.0; M]
                };
                [damping, trace, laplacian, lapse, coupling, sharp]
            })
            .collect();
        let col = |k: usize| rows.iter().map(|r| r[k]).collect::<Vec<V2>>();
        MapTerms {
            damping: col(0),
            trace: col(1),
            laplacian: col(2),
            lapse: col(3),
            spinor_coupling: col(4),
            sharp: col(5),
        }
    }

    /// All terms of the spinor equation right-hand side.
    pub fn spinor_terms(&self, state: &FieldState) -> Result<SpinorTerms> {
        let sl = self.slice(state)?;
        Ok(self.spinor_terms_with(state, &sl))
    }

    fn spinor_terms_with(&self, state: &FieldState, sl: &Slice) -> SpinorTerms {
        let bg = &sl.bg;
        let d = self.grid.d;
        let ainv2 = 1.0 / (bg.a * bg.a);
        let dpsi: Vec<Vec<VSp>> = (0..d).map(|i| sl.pb.spinor_d(&state.psi, i, &sl.conn.omega[i])).collect();
        let mut lap = vec![VSp::zero(); self.grid.len()];
        for i in 0..d {
            let dd = sl.pb.spinor_d(&dpsi[i], i, &sl.conn.omega[i]);
            lap.iter_mut().zip(&dd).for_each(|(l, v)| *l = l.add(*v));
        }
        let gam = self.clifford_coord(bg);
        let sgn = match self.sign {
            SourceSign::Derived => -1.0,
            SourceSign::Flipped => 1.0,
        };
        let rows: Vec<[VSp; 9]> = (0..self.grid.len())
            .into_par_iter()
            .map(|p| {
                let geo = &sl.pb.geo[p];
                let psi = &state.psi[p];
                let chi = &state.chi[p];
                let damping = chi.scale(-bg.s * bg.ds);
                let trace = chi.scale(-0.5 * bg.s * bg.s * bg.tr_gdot);
                let laplacian = lap[p].scale(ainv2);
                let scal = psi.scale(-bg.scal / 4.0);
                let z = VSp::zero();
                if psi.norm_sqr() == 0.0 && chi.norm_sqr() == 0.0 {
                    return [damping, trace, laplacian, scal, z, z, z, z, z];
                }
                let xs: Vec<V2> = (0..=d).map(|a| if a == 0 { state.pi[p] } else { sl.pb.dphi[a - 1][p] }).collect();
                let mut twist = VSp::zero();
                for a in 0..=d {
                    for b in (a + 1)..=d {
                        let r = geo.curvature_endo(&xs[a], &xs[b]);
                        let gg = mat_mul(&gam[a], &gam[b]);
                        twist = twist.sub(mat_vsp(&gg, &mat_apply(&r, psi)));
                    }
                }
                let [cp, cpt, cpx] = sl.cprime[p];
                let dcp = [cpt, cpx, 0.0];
                let bl = bilinear(&self.frame, psi);
                let riem_up = geo.riem_up();
                let e = contract_endo(&riem_up, &bl);
                let mut g_conf = VSp::zero();
                let mut g_curv = VSp::zero();
                let mut g_psi = VSp::zero();
                for a in 0..=d {
                    let ga = mat_scale(&gam[a], c(0.0, sgn));
                    let nab = if a == 0 { chi } else { &dpsi[a - 1][p] };
                    if dcp[a] != 0.0 {
                        let ea = tmat_scale(&e, dcp[a] / 3.0);
                        g_conf = g_conf.add(mat_vsp(&ga, &tmat_apply(&ea, psi)));
                    }
                    if !geo.parallel_curvature {
                        let gr = grad_riem_up(geo, &xs[a]);
                        let ea = tmat_scale(&contract_endo(&gr, &bl), cp / 3.0);
                        g_curv = g_curv.add(mat_vsp(&ga, &tmat_apply(&ea, psi)));
                    }
                    let dbl = bilinear_derivative(&self.frame, psi, nab);
                    let ea = tmat_scale(&contract_endo(&riem_up, &dbl), cp / 3.0);
                    g_psi = g_psi.add(mat_vsp(&ga, &tmat_apply(&ea, psi)));
                }
                let e3 = tmat_scale(&e, cp / 3.0);
                let quartic = tmat_apply(&e3, &tmat_apply(&e3, psi)).scale(sgn);
                [damping, trace, laplacian, scal, twist, g_conf, g_curv, g_psi, quartic]
            })
            .collect();
        let col = |k: usize| rows.iter().map(|r| r[k]).collect::<Vec<VSp>>();
        SpinorTerms {
            damping: col(0),
            trace: col(1),
            laplacian: col(2),
            scal: col(3),
            twist: col(4),
            grad_e_conformal: col(5),
            grad_e_curvature: col(6),
            grad_e_spinor: col(7),
            quartic: col(8),
        }
    }

    fn combine(&self, bg: &Background, mt: &MapTerms, stt: &SpinorTerms, state: &FieldState, pb: &Pullback) -> RhsOutput {
        let inv = 1.0 / (bg.s * bg.s);
        let d2phi = (0..self.grid.len())
            .into_par_iter()
            .map(|p| {
                let cov = mt.damping[p]
                    .add(mt.trace[p])
                    .add(mt.laplacian[p])
                    .add(mt.lapse[p])
                    .add(mt.spinor_coupling[p])
                    .add(mt.sharp[p])
                    .scale(inv);
                let pi = state.pi[p];
                let a = pb.geo[p].connection_matrix(&pi);
                cov.sub(mat_apply(&a, &pi))
            })
            .collect();
        let d2psi = (0..self.grid.len())
            .into_par_iter()
            .map(|p| {
                stt.damping[p]
                    .add(stt.trace[p])
                    .add(stt.laplacian[p])
                    .add(stt.scal[p])
                    .add(stt.twist[p])
                    .add(stt.grad_e_conformal[p])
                    .add(stt.grad_e_curvature[p])
                    .add(stt.grad_e_spinor[p])
                    .add(stt.quartic[p])
                    .scale(inv)
            })
            .collect();
        RhsOutput { d2phi, d2psi }
    }

    fn rhs_all(&self, state: &FieldState) -> Result<(RhsOutput, Pullback)> {
        let sl = self.slice(state)?;
        let mt = self.map_terms_with(state, &sl);
        let stt = self.spinor_terms_with(state, &sl);
        let out = self.combine(&sl.bg, &mt, &stt, state, &sl.pb);
        if !out.d2phi.iter().all(|v| v.is_finite()) || !out.d2psi.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("rhs"));
        }
        Ok((out, sl.pb))
    }

    /// Coordinate second time derivative of the map.
    pub fn rhs_map(&self, state: &FieldState) -> Result<Vec<V2>> {
        Ok(self.rhs_all(state)?.0.d2phi)
    }

    /// Second covariant time derivative of the vector spinor.
    pub fn rhs_spinor(&self, state: &FieldState) -> Result<Vec<VSp>> {
        Ok(self.rhs_all(state)?.0.d2psi)
    }

    pub fn rhs(&self, state: &FieldState) -> Result<RhsOutput> {
        Ok(self.rhs_all(state)?.0)
    }

    /// `E psi` with `E = 1/3 c' R(psi,psi)`, pointwise.
    fn constraint_source(&self, sl: &Slice, psi: &[VSp]) -> Vec<VSp> {
        (0..psi.len())
            .into_par_iter()
            .map(|p| {
                let geo = &sl.pb.geo[p];
                if psi[p].norm_sqr() == 0.0 {
                    return VSp::zero();
                }
                let e = contract_endo(&geo.riem_up(), &bilinear(&self.frame, &psi[p]));
                tmat_apply(&tmat_scale(&e, sl.cprime[p][0] / 3.0), &psi[p])
            })
            .collect()
    }

    /// `chi` making `i D psi = 1/3 c' R(psi,psi) psi` hold on the slice:
    /// `chi = s^-1 gamma_0 (S + i E psi)` with `S` the spatial Dirac part.
    pub fn dirac_compatible_chi(&self, phi: &[V2], psi: &[VSp], t: f64) -> Result<Vec<VSp>> {
        let pb = Pullback::new(&self.grid, &self.chart, phi, self.order)?;
        let sl = self.slice_with(t, pb)?;
        let spatial = crate::spin::dirac_spatial(&sl.pb, &self.frame, &sl.conn, &sl.bg, psi);
        Ok(self.chi_from_spatial(&sl, psi, &spatial))
    }

    fn chi_from_spatial(&self, sl: &Slice, psi: &[VSp], spatial: &[VSp]) -> Vec<VSp> {
        let src = self.constraint_source(sl, psi);
        spatial
            .par_iter()
            .zip(&src)
            .map(|(s, e)| self.frame.clifford_vsp(0, &s.add(e.cscale_i())).scale(1.0 / sl.bg.s))
            .collect()
    }

    /// Pointwise `i D psi - 1/3 c' R(psi,psi) psi`.
    pub fn dirac_residual_field(&self, state: &FieldState) -> Result<Vec<VSp>> {
        let sl = self.slice(state)?;
        let dp = crate::spin::dirac_with(&sl.pb, &self.frame, &sl.conn, &sl.bg, &state.psi, &state.chi);
        let src = self.constraint_source(&sl, &state.psi);
        Ok(dp.iter().zip(&src).map(|(d, e)| d.cscale_i().sub(*e)).collect())
    }

    /// `||i D psi - E psi||_{L^2} / (||psi||_{H^1} + floor)`.
    pub fn dirac_residual(&self, state: &FieldState) -> Result<f64> {
        let sl = self.slice(state)?;
        let dp = crate::spin::dirac_with(&sl.pb, &self.frame, &sl.conn, &sl.bg, &state.psi, &state.chi);
        let src = self.constraint_source(&sl, &state.psi);
        let res: Vec<f64> = (0..dp.len())
            .map(|p| gnorm_density(&sl.pb.geo[p], &dp[p].cscale_i().sub(src[p])))
            .collect();
        let num = l2_integral(&res, &self.grid, &self.st, state.t).sqrt();
        let mut h1: Vec<f64> = (0..dp.len()).map(|p| gnorm_density(&sl.pb.geo[p], &state.psi[p])).collect();
        let ainv2 = 1.0 / (sl.bg.a * sl.bg.a);
        for i in 0..self.grid.d {
            let di = sl.pb.spinor_d(&state.psi, i, &sl.conn.omega[i]);
            for p in 0..dp.len() {
                h1[p] += ainv2 * gnorm_density(&sl.pb.geo[p], &di[p]);
            }
        }
        let den = l2_integral(&h1, &self.grid, &self.st, state.t).sqrt();
        Ok(num / (den + 1e-300))
    }

    /// Time derivative of the first-order state `(phi, pi, psi, chi)` in
    /// coordinate components.
    pub fn time_derivative(&self, state: &FieldState) -> Result<StateRate> {
        let (rhs, pb) = self.rhs_all(state)?;
        let n = self.grid.len();
        let mut dpsi = Vec::with_capacity(n);
        let mut dchi = Vec::with_capacity(n);
        for p in 0..n {
            let a = pb.geo[p].connection_matrix(&state.pi[p]);
            dpsi.push(state.chi[p].sub(mat_apply(&a, &state.psi[p])));
            dchi.push(rhs.d2psi[p].sub(mat_apply(&a, &state.chi[p])));
        }
        Ok(StateRate { phi: state.pi.clone(), pi: rhs.d2phi, psi: dpsi, chi: dchi })
    }

    /// Largest stable step at time `t`: `cfl * s a dx`, minimised over the
    /// step for oscillating `a`.
    pub fn cfl_limit(&self, t: f64, dt: f64) -> f64 {
        let sa = |t: f64| self.st.s.jet(t).v * self.st.a.jet(t).v;
        let m = sa(t).min(sa(t + 0.5 * dt)).min(sa(t + dt));
        self.cfl * m * self.grid.dx
    }

    pub fn step_rk4(&self, state: &FieldState, dt: f64) -> Result<FieldState> {
        let limit = self.cfl_limit(state.t, dt);
        if dt > limit * (1.0 + 1e-12) {
            return Err(Error::Cfl { dt, limit });
        }
        let k1 = self.time_derivative(state)?;
        let s2 = k1.advance(state, 0.5 * dt);
        let k2 = self.time_derivative(&s2)?;
        let s3 = k2.advance(state, 0.5 * dt);
        let k3 = self.time_derivative(&s3)?;
        let s4 = k3.advance(state, dt);
        let k4 = self.time_derivative(&s4)?;
        let n = state.phi.len();
        let w = dt / 6.0;
        let comb = |a: &[V2], b: &[V2], c: &[V2], d: &[V2], x: &[V2]| -> Vec<V2> {
            (0..n).map(|p| x[p].add(a[p].add(b[p].scale(2.0)).add(c[p].scale(2.0)).add(d[p]).scale(w))).collect()
        };
        let combs = |a: &[VSp], b: &[VSp], c: &[VSp], d: &[VSp], x: &[VSp]| -> Vec<VSp> {
            (0..n).map(|p| x[p].add(a[p].add(b[p].scale(2.0)).add(c[p].scale(2.0)).add(d[p]).scale(w))).collect()
        };
        let next = FieldState {
            t: state.t + dt,
            phi: comb(&k1.phi, &k2.phi, &k3.phi, &k4.phi, &state.phi),
            pi: comb(&k1.pi, &k2.pi, &k3.pi, &k4.pi, &state.pi),
            psi: combs(&k1.psi, &k2.psi, &k3.psi, &k4.psi, &state.psi),
            chi: combs(&k1.chi, &k2.chi, &k3.chi, &k4.chi, &state.chi),
        };
        next.check_finite()?;
        next.check_chart(&self.chart)?;
        Ok(next)
    }

    /// Step size used by `evolve`: `min(cfl s a dx, dt_max, remaining)`.
    pub fn next_dt(&self, t: f64, t_end: f64, dt_max: f64) -> f64 {
        let guess = (self.cfl * self.st.s.jet(t).v * self.st.a.jet(t).v * self.grid.dx).min(dt_max);
        let dt = self.cfl_limit(t, guess).min(guess).min(t_end - t);
        dt.max(0.0)
    }

    /// Integrate to `t_end`, calling `monitor` after every accepted step.
    pub fn evolve<F>(&self, mut state: FieldState, t_end: f64, dt_max: f64, mut monitor: F) -> Result<FieldState>
    where
        F: FnMut(&FieldState, usize) -> Result<()>,
    {
        let mut step = 0;
        while t_end - state.t > 1e-12 * t_end.abs().max(1.0) {
            let dt = self.next_dt(state.t, t_end, dt_max);
            state = self.step_rk4(&state, dt)?;
            step += 1;
            monitor(&state, step)?;
        }
        Ok(state)
    }
}

/// Rates of the first-order state.
#[derive(Debug, Clone)]
pub struct StateRate {
    pub phi: Vec<V2>,
    pub pi: Vec<V2>,
    pub psi: Vec<VSp>,
    pub chi: Vec<VSp>,
}

impl StateRate {
    fn advance(&self, s: &FieldState, h: f64) -> FieldState {
        FieldState {
            t: s.t + h,
            phi: s.phi.iter().zip(&self.phi).map(|(x, d)| x.axpy(h, *d)).collect(),
            pi: s.pi.iter().zip(&self.pi).map(|(x, d)| x.axpy(h, *d)).collect(),
            psi: s.psi.iter().zip(&self.psi).map(|(x, d)| x.axpy(h, *d)).collect(),
            chi: s.chi.iter().zip(&self.chi).map(|(x, d)| x.axpy(h, *d)).collect(),
        }
    }
}

trait TimesI {
    fn cscale_i(&self) -> Self;
}

impl TimesI for VSp {
    fn cscale_i(&self) -> Self {
        let mut r = *self;
        for s in r.iter_mut() {
            for z in s.iter_mut() {
                *z *= I_C;
            }
        }
        r
    }
}

/// Table `b[K][L] = <psi^K, psi^L>` (indefinite pairing), hermitian.
pub fn bilinear(frame: &SpinFrame, psi: &VSp) -> TMat {
    let mut b = [[ZERO_C; M]; M];
    for k in 0..M {
        for l in 0..M {
            b[k][l] = frame.pair(&psi[k], &psi[l]);
        }
    }
    b
}

/// `<u^K, psi^L> + <psi^K, u^L>`.
pub fn bilinear_derivative(frame: &SpinFrame, psi: &VSp, u: &VSp) -> TMat {
    let mut b = [[ZERO_C; M]; M];
    for k in 0..M {
        for l in 0..M {
            b[k][l] = frame.pair(&u[k], &psi[l]) + frame.pair(&psi[k], &u[l]);
        }
    }
    b
}

/// `E^I_K = T^I_JKL b[J][L]`.
pub fn contract_endo(t: &[[[[f64; M]; M]; M]; M], b: &TMat) -> TMat {
    let mut e = [[ZERO_C; M]; M];
    for i in 0..M {
        for k in 0..M {
            let mut v = ZERO_C;
            for j in 0..M {
                for l in 0..M {
                    v += t[i][j][k][l] * b[j][l];
                }
            }
            e[i][k] = v;
        }
    }
    e
}

/// `Z^M nabla_M R^I_JKL`.
pub fn grad_riem_up(geo: &TargetGeometry, z: &V2) -> [[[[f64; M]; M]; M]; M] {
    let mut r = [[[[0.0; M]; M]; M]; M];
    for i in 0..M {
        for j in 0..M {
            for k in 0..M {
                for l in 0..M {
                    let mut v = 0.0;
                    for m in 0..M {
                        for q in 0..M {
                            v += z[m] * geo.ginv[i][q] * geo.grad_riem[m][q][j][k][l];
                        }
                    }
                    r[i][j][k][l] = v;
                }
            }
        }
    }
    r
}

pub fn tmat_apply(e: &TMat, v: &VSp) -> VSp {
    let mut r = VSp::zero();
    for i in 0..M {
        for k in 0..M {
            for s in 0..2 {
                r[i][s] += e[i][k] * v[k][s];
            }
        }
    }
    r
}

pub fn tmat_scale(e: &TMat, a: f64) -> TMat {
    let mut r = *e;
    for row in r.iter_mut() {
        for z in row.iter_mut() {
            *z *= a;
        }
    }
    r
}

/// How `chi` is chosen for initial data.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ChiMode {
    /// Discrete Dirac constraint holds to round-off.
    Discrete,
    /// Built from exact spatial derivatives of the Fourier data, so the
    /// discrete constraint residual is at truncation level.
    Continuum,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InitSpec {
    pub epsilon: f64,
    pub seed: u64,
    pub mode_cutoff: usize,
    pub spinor: bool,
    pub chi_mode: ChiMode,
}

impl Default for InitSpec {
    fn default() -> Self {
        InitSpec { epsilon: 1e-2, seed: 1, mode_cutoff: 3, spinor: true, chi_mode: ChiMode::Discrete }
    }
}

/// Real trigonometric series `sum c_k cos(k.x) + d_k sin(k.x)`.
#[derive(Debug, Clone)]
pub struct Fourier<T: Lin> {
    pub modes: Vec<([i32; 2], T, T)>,
}

impl<T: Lin> Fourier<T> {
    pub fn eval(&self, x: &[f64; 2]) -> T {
        let mut v = T::zero();
        for (k, a, b) in &self.modes {
            let ph = k[0] as f64 * x[0] + k[1] as f64 * x[1];
            v = v.axpy(ph.cos(), *a).axpy(ph.sin(), *b);
        }
        v
    }

    pub fn deriv(&self, x: &[f64; 2], dir: usize) -> T {
        let mut v = T::zero();
        for (k, a, b) in &self.modes {
            let ph = k[0] as f64 * x[0] + k[1] as f64 * x[1];
            let kd = k[dir] as f64;
            v = v.axpy(-kd * ph.sin(), *a).axpy(kd * ph.cos(), *b);
        }
        v
    }

    pub fn sample(&self, grid: &Grid) -> Vec<T> {
        (0..grid.len()).map(|p| self.eval(&grid.coords(p))).collect()
    }

    pub fn sample_deriv(&self, grid: &Grid, dir: usize) -> Vec<T> {
        (0..grid.len()).map(|p| self.deriv(&grid.coords(p), dir)).collect()
    }
}

fn wave_vectors(d: usize, cutoff: usize, with_zero: bool) -> Vec<[i32; 2]> {
    let c = cutoff as i32;
    let mut ks = Vec::new();
    if d == 1 {
        for k in 0..=c {
            ks.push([k, 0]);
        }
    } else {
        for k0 in 0..=c {
            for k1 in -c..=c {
                if k0 > 0 || k1 >= 0 {
                    ks.push([k0, k1]);
                }
            }
        }
    }
    ks.retain(|k| with_zero || k != &[0, 0]);
    ks
}

fn random_v2(rng: &mut ChaCha8Rng) -> V2 {
    [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)]
}

fn random_vsp(rng: &mut ChaCha8Rng) -> VSp {
    let mut v = VSp::zero();
    for s in v.iter_mut() {
        for z in s.iter_mut() {
            *z = c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        }
    }
    v
}

fn random_series<T: Lin>(ks: &[[i32; 2]], rng: &mut ChaCha8Rng, draw: fn(&mut ChaCha8Rng) -> T) -> Fourier<T> {
    let modes = ks
        .iter()
        .map(|k| {
            let w = 1.0 / (1.0 + (k[0] * k[0] + k[1] * k[1]) as f64);
            let a = draw(rng).scale(w);
            let b = if k == &[0, 0] { T::zero() } else { draw(rng).scale(w) };
            (*k, a, b)
        })
        .collect();
    Fourier { modes }
}

fn scale_series<T: Lin>(f: &Fourier<T>, l: f64) -> Fourier<T> {
    Fourier { modes: f.modes.iter().map(|(k, a, b)| (*k, a.scale(l), b.scale(l))).collect() }
}

/// Unit-amplitude random profiles for the initial data.
#[derive(Debug, Clone)]
pub struct InitialProfiles {
    pub phi: Fourier<V2>,
    pub pi: Fourier<V2>,
    pub psi: Fourier<VSp>,
}

impl InitialProfiles {
    pub fn random(d: usize, spec: &InitSpec) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let kphi = wave_vectors(d, spec.mode_cutoff, false);
        let kall = wave_vectors(d, spec.mode_cutoff, true);
        let phi = random_series(&kphi, &mut rng, random_v2);
        let pi = random_series(&kall, &mut rng, random_v2);
        let mut psi = random_series(&kall, &mut rng, random_vsp);
        if !spec.spinor {
            psi = scale_series(&psi, 0.0);
        }
        InitialProfiles { phi, pi, psi }
    }
}

impl Model {
    /// State `phi = y0 + l Phi`, `pi = l Pi`, `psi = l Psi` with `chi` from the
    /// Dirac constraint.
    pub fn state_from_profiles(&self, prof: &InitialProfiles, l: f64, mode: ChiMode, t: f64) -> Result<FieldState> {
        let y0 = self.chart.base_point();
        let phi: Vec<V2> = prof.phi.sample(&self.grid).iter().map(|v| [y0[0] + l * v[0], y0[1] + l * v[1]]).collect();
        let pi: Vec<V2> = prof.pi.sample(&self.grid).iter().map(|v| v.scale(l)).collect();
        let psi: Vec<VSp> = prof.psi.sample(&self.grid).iter().map(|v| v.scale(l)).collect();
        let mut state = FieldState { t, phi, pi, psi, chi: vec![VSp::zero(); self.grid.len()] };
        state.check_chart(&self.chart)?;
        state.chi = match mode {
            ChiMode::Discrete => self.dirac_compatible_chi(&state.phi, &state.psi, t)?,
            ChiMode::Continuum => {
                let d = self.grid.d;
                let dphi: Vec<Vec<V2>> = (0..d)
                    .map(|i| prof.phi.sample_deriv(&self.grid, i).iter().map(|v| v.scale(l)).collect())
                    .collect();
                let pb = Pullback::with_differential(&self.grid, &self.chart, &state.phi, dphi, self.order)?;
                let sl = self.slice_with(t, pb)?;
                let mut spatial = vec![VSp::zero(); self.grid.len()];
                for i in 0..d {
                    let dpsi = prof.psi.sample_deriv(&self.grid, i);
                    for p in 0..self.grid.len() {
                        let cov = dpsi[p]
                            .scale(l)
                            .add(mat_apply(&sl.pb.conn[i][p], &state.psi[p]))
                            .add(mat_vsp(&sl.conn.omega[i], &state.psi[p]));
                        spatial[p] = spatial[p].add(self.frame.clifford_vsp(1 + i, &cov).scale(1.0 / sl.bg.a));
                    }
                }
                self.chi_from_spatial(&sl, &state.psi, &spatial)
            }
        };
        Ok(state)
    }

    /// `||phi - y0||_{H^{r+1}} + ||pi||_{H^r} + ||psi||_{H^r}` with covariant
    /// derivatives; the `l = 0` term of the map norm is Euclidean in the chart.
    pub fn initial_norm(&self, state: &FieldState) -> Result<f64> {
        let r = self.regularity();
        let pb = Pullback::new(&self.grid, &self.chart, &state.phi, self.order)?;
        let conn = SpinConnection::at(&self.frame, &self.st, state.t)?;
        let a2 = self.st.a.jet(state.t).v.powi(2);
        let y0 = self.chart.base_point();
        let int = |dens: Vec<f64>| l2_integral(&dens, &self.grid, &self.st, state.t);

        let dev: Vec<f64> = state.phi.iter().map(|y| (y[0] - y0[0]).powi(2) + (y[1] - y0[1]).powi(2)).collect();
        let mut phi_sq = int(dev);
        let mut forms: Vec<Vec<V2>> = pb.dphi.clone();
        for l in 1..=(r + 1) {
            phi_sq += a2.powi(-(l as i32)) * forms_norm_sq(&pb, &forms, &int);
            if l <= r {
                forms = pb.d_forms(&forms, None);
            }
        }
        let mut pi_sq = 0.0;
        let mut forms = vec![state.pi.clone()];
        for l in 0..=r {
            pi_sq += a2.powi(-(l as i32)) * forms_norm_sq(&pb, &forms, &int);
            if l < r {
                forms = pb.d_forms(&forms, None);
            }
        }
        let mut psi_sq = 0.0;
        let mut forms = vec![state.psi.clone()];
        for l in 0..=r {
            psi_sq += a2.powi(-(l as i32)) * forms_norm_sq(&pb, &forms, &int);
            if l < r {
                forms = pb.d_forms(&forms, Some(&conn.omega));
            }
        }
        Ok(phi_sq.sqrt() + pi_sq.sqrt() + psi_sq.sqrt())
    }

    /// Random Fourier data scaled so that `initial_norm = epsilon / 2`.
    pub fn make_initial_data(&self, spec: &InitSpec) -> Result<FieldState> {
        if spec.epsilon < 0.0 || !spec.epsilon.is_finite() {
            return Err(Error::Validation(format!("init.epsilon must be positive, got {}", spec.epsilon)));
        }
        if spec.epsilon == 0.0 {
            return Ok(FieldState::constant_map(&self.grid, self.chart.base_point(), 0.0));
        }
        let prof = InitialProfiles::random(self.grid.d, spec);
        let target = 0.5 * spec.epsilon;
        let norm_at = |l: f64| -> Result<f64> {
            let s = self.state_from_profiles(&prof, l, ChiMode::Discrete, 0.0)?;
            self.initial_norm(&s)
        };
        let probe = 1e-8;
        let slope = norm_at(probe)? / probe;
        if !(slope > 0.0) {
            return Err(Error::Validation("initial profiles have zero norm".into()));
        }
        let mut l0 = probe;
        let mut f0 = norm_at(l0)? - target;
        let mut l1 = target / slope;
        let mut f1 = norm_at(l1)? - target;
        let mut iters = 0;
        while f1.abs() > 1e-14 * target && iters < 60 {
            let denom = f1 - f0;
            if denom == 0.0 {
                break;
            }
            let l2 = l1 - f1 * (l1 - l0) / denom;
            l0 = l1;
            f0 = f1;
            l1 = l2;
            f1 = norm_at(l1)? - target;
            iters += 1;
        }
        if f1.abs() > 1e-12 * target {
            return Err(Error::Validation(format!("could not normalise initial data, residual {f1:e}")));
        }
        self.state_from_profiles(&prof, l1, spec.chi_mode, 0.0)
    }
}

/// `sum_components int |comp|_G^2`.
fn forms_norm_sq<X: Lin + crate::fields::GInner>(pb: &Pullback, forms: &[Vec<[X; M]>], int: &dyn Fn(Vec<f64>) -> f64) -> f64 {
    forms
        .iter()
        .map(|f| int(f.iter().zip(&pb.geo).map(|(v, g)| gnorm_density(g, v)).collect()))
        .sum()
}

/// `G`-weighted real inner product of two target vectors.
pub fn gpair(g: &M2, u: &V2, v: &V2) -> f64 {
    let lu = lower(g, u);
    lu[0] * v[0] + lu[1] * v[1]
}
