//! Periodic grid on `[0, 2pi)^{n-1}`, centered differences, covariant spatial
//! derivatives on pullback and twisted bundles, and discrete integrals.

use crate::error::{Error, Result};
use crate::geometry::WarpedSpacetime;
use crate::linalg::{inv2, lower, mat_apply, mat_t_apply, mat_vsp, Lin, Mat2c, M, M2, V2, VSp};
use crate::target::{target_geometry, TargetChart, TargetGeometry};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FdOrder {
    Two,
    Four,
}

impl FdOrder {
    pub fn from_int(p: usize) -> Result<Self> {
        match p {
            2 => Ok(FdOrder::Two),
            4 => Ok(FdOrder::Four),
            _ => Err(Error::Validation(format!("grid.fd_order must be 2 or 4, got {p}"))),
        }
    }

    pub fn as_int(&self) -> usize {
        match self {
            FdOrder::Two => 2,
            FdOrder::Four => 4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    /// Number of spatial dimensions, `n - 1`.
    pub d: usize,
    pub npts: usize,
    pub dx: f64,
}

impl Grid {
    pub fn new(d: usize, npts: usize) -> Result<Self> {
        if npts < 8 {
            return Err(Error::Validation(format!("grid.npts must be >= 8, got {npts}")));
        }
        if npts % 2 != 0 {
            return Err(Error::Validation("grid.npts must be even".into()));
        }
        if d != 1 && d != 2 {
            return Err(Error::Validation(format!("spatial dimension must be 1 or 2, got {d}")));
        }
        Ok(Grid { d, npts, dx: 2.0 * PI / npts as f64 })
    }

    pub fn len(&self) -> usize {
        self.npts.pow(self.d as u32)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Coordinates of point `p`; unused directions are 0.
    pub fn coords(&self, p: usize) -> [f64; 2] {
        let i0 = p % self.npts;
        let i1 = p / self.npts;
        [i0 as f64 * self.dx, i1 as f64 * self.dx]
    }

    /// Index of the point `k` steps from `p` along `dir`, periodically wrapped.
    #[inline]
    pub fn shift(&self, p: usize, dir: usize, k: isize) -> usize {
        let n = self.npts as isize;
        if dir == 0 {
            let i0 = (p % self.npts) as isize;
            let base = p - i0 as usize;
            base + (i0 + k).rem_euclid(n) as usize
        } else {
            let i0 = p % self.npts;
            let i1 = (p / self.npts) as isize;
            i0 + self.npts * (i1 + k).rem_euclid(n) as usize
        }
    }

    /// Cell volume `dx^{n-1}` in coordinates.
    pub fn cell(&self) -> f64 {
        self.dx.powi(self.d as i32)
    }
}

/// Centered periodic difference approximating `partial_dir`.
pub fn fd_partial<T: Lin>(f: &[T], grid: &Grid, dir: usize, order: FdOrder) -> Vec<T> {
    let h = grid.dx;
    (0..f.len())
        .into_par_iter()
        .map(|p| fd_at(f, grid, dir, order, p, h))
        .collect()
}

#[inline]
fn fd_at<T: Lin>(f: &[T], grid: &Grid, dir: usize, order: FdOrder, p: usize, h: f64) -> T {
    match order {
        FdOrder::Two => {
            let a = f[grid.shift(p, dir, 1)];
            let b = f[grid.shift(p, dir, -1)];
            a.sub(b).scale(0.5 / h)
        }
        FdOrder::Four => {
            let p1 = f[grid.shift(p, dir, 1)];
            let m1 = f[grid.shift(p, dir, -1)];
            let p2 = f[grid.shift(p, dir, 2)];
            let m2 = f[grid.shift(p, dir, -2)];
            p1.sub(m1).scale(8.0).sub(p2.sub(m2)).scale(1.0 / (12.0 * h))
        }
    }
}

/// Evolved state on one time slice.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldState {
    pub t: f64,
    /// Chart coordinates `phi^I`.
    pub phi: Vec<V2>,
    /// `partial_t phi^I`.
    pub pi: Vec<V2>,
    /// Vector spinor `psi^I`.
    pub psi: Vec<VSp>,
    /// `nabla_t psi^I`.
    pub chi: Vec<VSp>,
}

impl FieldState {
    pub fn constant_map(grid: &Grid, y0: V2, t: f64) -> Self {
        let n = grid.len();
        FieldState {
            t,
            phi: vec![y0; n],
            pi: vec![[0.0; M]; n],
            psi: vec![VSp::zero(); n],
            chi: vec![VSp::zero(); n],
        }
    }

    pub fn check_finite(&self) -> Result<()> {
        if !self.phi.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("phi"));
        }
        if !self.pi.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("pi"));
        }
        if !self.psi.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("psi"));
        }
        if !self.chi.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("chi"));
        }
        Ok(())
    }

    pub fn check_chart(&self, chart: &TargetChart) -> Result<()> {
        for y in &self.phi {
            if !chart.admissible(y) {
                return Err(Error::ChartExit { y0: y[0], y1: y[1] });
            }
        }
        Ok(())
    }

    pub fn max_chart_distance(&self, chart: &TargetChart) -> f64 {
        self.phi.iter().map(|y| chart.chart_distance(y)).fold(0.0, f64::max)
    }

    pub fn max_abs_psi(&self) -> f64 {
        self.psi
            .iter()
            .chain(self.chi.iter())
            .flat_map(|v| v.iter().flat_map(|s| s.iter().map(|z| z.norm())))
            .fold(0.0, f64::max)
    }
}

/// Target data pulled back along a map: pointwise geometry, the coordinate
/// differential `partial_i phi` and the connection matrices
/// `A_i = Gamma^I_JK partial_i phi^J`.
#[derive(Debug, Clone)]
pub struct Pullback {
    pub grid: Grid,
    pub order: FdOrder,
    pub geo: Vec<TargetGeometry>,
    pub dphi: Vec<Vec<V2>>,
    pub conn: Vec<Vec<M2>>,
}

impl Pullback {
    pub fn new(grid: &Grid, chart: &TargetChart, phi: &[V2], order: FdOrder) -> Result<Self> {
        let geo: Result<Vec<TargetGeometry>> = phi.par_iter().map(|y| target_geometry(chart, y)).collect();
        let geo = geo?;
        let dphi: Vec<Vec<V2>> = (0..grid.d).map(|i| fd_partial(phi, grid, i, order)).collect();
        let conn = dphi
            .iter()
            .map(|dp| geo.iter().zip(dp).map(|(g, u)| g.connection_matrix(u)).collect())
            .collect();
        Ok(Pullback { grid: *grid, order, geo, dphi, conn })
    }

    /// Same as `new` but with externally supplied `partial_i phi` (for example
    /// exact derivatives of analytic data).
    pub fn with_differential(
        grid: &Grid,
        chart: &TargetChart,
        phi: &[V2],
        dphi: Vec<Vec<V2>>,
        order: FdOrder,
    ) -> Result<Self> {
        let geo: Result<Vec<TargetGeometry>> = phi.par_iter().map(|y| target_geometry(chart, y)).collect();
        let geo = geo?;
        let conn = dphi
            .iter()
            .map(|dp| geo.iter().zip(dp).map(|(g, u)| g.connection_matrix(u)).collect())
            .collect();
        Ok(Pullback { grid: *grid, order, geo, dphi, conn })
    }

    /// Pullback covariant derivative `D_i` of a section of `phi^*TP` (tensored
    /// with `X`), in skew-adjoint form
    /// `1/2 [ d v + A v + G^-1 d(G v) - G^-1 A^T G v ]`,
    /// which is exactly antisymmetric for the `G`-weighted discrete pairing and
    /// consistent with `d v + A v` at stencil order.
    pub fn twisted_d<X: Lin>(&self, v: &[[X; M]], i: usize) -> Vec<[X; M]> {
        let dv = fd_partial(v, &self.grid, i, self.order);
        let gv: Vec<[X; M]> = v.par_iter().zip(&self.geo).map(|(x, g)| lower(&g.g, x)).collect();
        let dgv = fd_partial(&gv, &self.grid, i, self.order);
        (0..v.len())
            .into_par_iter()
            .map(|p| {
                let geo = &self.geo[p];
                let a = &self.conn[i][p];
                let t1 = dv[p].add(mat_apply(a, &v[p]));
                let t2 = mat_apply(&geo.ginv, &dgv[p]);
                let t3 = mat_apply(&geo.ginv, &mat_t_apply(a, &gv[p]));
                t1.add(t2).sub(t3).scale(0.5)
            })
            .collect()
    }

    /// Spinor covariant derivative `D_i psi = (pullback part) + omega_i psi`.
    pub fn spinor_d(&self, psi: &[VSp], i: usize, omega_i: &Mat2c) -> Vec<VSp> {
        let mut d = self.twisted_d(psi, i);
        d.par_iter_mut().zip(psi).for_each(|(dp, p)| *dp = dp.add(mat_vsp(omega_i, p)));
        d
    }

    /// Sum over directions of the flat part of `D^*D phi` for the map:
    /// `G^IJ [ 1/2 d_J G_KL d_i phi^K d_i phi^L - d_i (G_JK d_i phi^K) ]`.
    ///
    /// This is the exact gradient of `1/2 sum G(d_i phi, d_i phi)`, so the
    /// semi-discrete wave map is Hamiltonian on static backgrounds. Multiply
    /// by `g^ii = a^-2` to obtain `D^*D phi`.
    pub fn map_laplacian(&self) -> Vec<V2> {
        let n = self.geo.len();
        let mut out = vec![[0.0; M]; n];
        for i in 0..self.grid.d {
            let w = &self.dphi[i];
            let gw: Vec<V2> = w.iter().zip(&self.geo).map(|(x, g)| lower(&g.g, x)).collect();
            let dgw = fd_partial(&gw, &self.grid, i, self.order);
            out.par_iter_mut().enumerate().for_each(|(p, o)| {
                let geo = &self.geo[p];
                let dg = geo.metric_derivative();
                let mut low = [0.0; M];
                for j in 0..M {
                    let mut q = 0.0;
                    for k in 0..M {
                        for l in 0..M {
                            q += dg[j][k][l] * w[p][k] * w[p][l];
                        }
                    }
                    low[j] = 0.5 * q - dgw[p][j];
                }
                let up = mat_apply(&geo.ginv, &low);
                o[0] += up[0];
                o[1] += up[1];
            });
        }
        out
    }

    /// `sum_i D_i D_i psi` with the spinor covariant derivative; `D^*D psi` is
    /// `-a^-2` times this.
    pub fn spinor_laplacian(&self, psi: &[VSp], omega: &[Mat2c]) -> Vec<VSp> {
        let mut out = vec![VSp::zero(); psi.len()];
        for i in 0..self.grid.d {
            let d1 = self.spinor_d(psi, i, &omega[i]);
            let d2 = self.spinor_d(&d1, i, &omega[i]);
            out.par_iter_mut().zip(&d2).for_each(|(o, v)| *o = o.add(*v));
        }
        out
    }

    /// `D_i` applied to every component of a form-valued section.
    pub fn d_forms<X: Lin>(&self, comps: &[Vec<[X; M]>], omega: Option<&[Mat2c]>) -> Vec<Vec<[X; M]>>
    where
        [X; M]: SpinAct,
    {
        let mut out = Vec::with_capacity(comps.len() * self.grid.d);
        for i in 0..self.grid.d {
            for c in comps {
                let mut d = self.twisted_d(c, i);
                if let Some(om) = omega {
                    d.par_iter_mut().zip(c).for_each(|(dp, v)| *dp = dp.add(v.spin_act(&om[i])));
                }
                out.push(d);
            }
        }
        out
    }
}

/// Action of a spinor matrix on a twisted value; trivial for real vectors.
pub trait SpinAct: Sized {
    fn spin_act(&self, m: &Mat2c) -> Self;
}

impl SpinAct for V2 {
    fn spin_act(&self, _m: &Mat2c) -> Self {
        [0.0; M]
    }
}

impl SpinAct for VSp {
    fn spin_act(&self, m: &Mat2c) -> Self {
        mat_vsp(m, self)
    }
}

/// `sum_points density a^{n-1} dx^{n-1}`.
pub fn l2_integral(density: &[f64], grid: &Grid, st: &WarpedSpacetime, t: f64) -> f64 {
    let a = st.a.jet(t).v;
    let w = a.powi(grid.d as i32) * grid.cell();
    density.iter().sum::<f64>() * w
}

/// `G`-weighted positive density `G_IJ (v^I)^dagger v^J` or `G_IJ v^I v^J`.
pub fn gnorm_density<X: Lin>(geo: &TargetGeometry, v: &[X; M]) -> f64
where
    X: GInner,
{
    let mut s = 0.0;
    for i in 0..M {
        for j in 0..M {
            s += geo.g[i][j] * v[i].re_inner(&v[j]);
        }
    }
    s
}

/// Real part of the positive inner product of two twist components.
pub trait GInner {
    fn re_inner(&self, o: &Self) -> f64;
}

impl GInner for f64 {
    fn re_inner(&self, o: &Self) -> f64 {
        self * o
    }
}

impl GInner for crate::linalg::Sp {
    fn re_inner(&self, o: &Self) -> f64 {
        crate::linalg::herm(self, o).re
    }
}

/// Inverse metric helper reused by tests.
pub fn metric_inverse(g: &M2) -> M2 {
    inv2(g)
}
