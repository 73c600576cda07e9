//! Clifford algebra for signature `(-,+,...,+)`, spinor pairings, the spin
//! connection of the warped background and the twisted Dirac operator.
//!
//! Frame: `e_0 = s d_t`, `e_i = a^-1 d_i`. Gammas `gamma_0 = sigma_1`,
//! `gamma_1 = i sigma_2`, `gamma_2 = i sigma_3`, `beta = gamma_0`. With these,
//! the positive product `<psi, gamma_0 xi>` is plain `psi^dagger xi`.

use crate::error::{Error, Result};
use crate::fields::Pullback;
use crate::geometry::{second_fundamental_form, Background, WarpedSpacetime};
use crate::linalg::{
    c, herm, mat_add, mat_adjoint, mat_identity, mat_max_abs, mat_mul, mat_scale, mat_sp, mat_vsp, Lin, Mat2c, Sp,
    VSp, C64, M, ZERO_C,
};
use rayon::prelude::*;

#[derive(Debug, Clone, PartialEq)]
pub struct SpinFrame {
    pub n: usize,
    pub gamma: Vec<Mat2c>,
    pub beta: Mat2c,
}

fn gamma_table() -> [Mat2c; 3] {
    let one = c(1.0, 0.0);
    [
        [[ZERO_C, one], [one, ZERO_C]],
        [[ZERO_C, one], [-one, ZERO_C]],
        [[c(0.0, 1.0), ZERO_C], [ZERO_C, c(0.0, -1.0)]],
    ]
}

impl SpinFrame {
    pub fn new(n: usize) -> Result<Self> {
        if n != 2 && n != 3 {
            return Err(Error::Validation(format!("spacetime dimension must be 2 or 3, got {n}")));
        }
        let g = gamma_table();
        Ok(SpinFrame { n, gamma: g[..n].to_vec(), beta: g[0] })
    }

    /// Diagonal of `eta`.
    pub fn eta(&self, alpha: usize) -> f64 {
        if alpha == 0 {
            -1.0
        } else {
            1.0
        }
    }

    pub fn clifford(&self, alpha: usize, psi: &Sp) -> Result<Sp> {
        let g = self
            .gamma
            .get(alpha)
            .ok_or_else(|| Error::Index(format!("frame index {alpha} out of range for n = {}", self.n)))?;
        Ok(mat_sp(g, psi))
    }

    #[inline]
    pub fn clifford_vsp(&self, alpha: usize, psi: &VSp) -> VSp {
        mat_vsp(&self.gamma[alpha], psi)
    }

    /// Indefinite pairing `(beta psi)^dagger xi`.
    #[inline]
    pub fn pair(&self, psi: &Sp, xi: &Sp) -> C64 {
        herm(&mat_sp(&self.beta, psi), xi)
    }

    /// Positive product `<psi, gamma_0 xi>`.
    #[inline]
    pub fn pos_pair(&self, psi: &Sp, xi: &Sp) -> C64 {
        self.pair(psi, &mat_sp(&self.gamma[0], xi))
    }

    /// `max |gamma_a gamma_b + gamma_b gamma_a + 2 eta_ab|`.
    pub fn clifford_defect(&self) -> f64 {
        let mut worst = 0.0f64;
        for a in 0..self.n {
            for b in 0..self.n {
                let mut m = mat_add(&mat_mul(&self.gamma[a], &self.gamma[b]), &mat_mul(&self.gamma[b], &self.gamma[a]));
                if a == b {
                    m = mat_add(&m, &mat_scale(&mat_identity(), c(2.0 * self.eta(a), 0.0)));
                }
                worst = worst.max(mat_max_abs(&m));
            }
        }
        worst
    }

    /// `max |beta gamma_a - (beta gamma_a)^dagger|`; zero iff Clifford
    /// multiplication is symmetric for the indefinite pairing.
    pub fn compatibility_defect(&self) -> f64 {
        let mut worst = mat_max_abs(&mat_add(&self.beta, &mat_scale(&mat_adjoint(&self.beta), c(-1.0, 0.0))));
        for g in &self.gamma {
            let bg = mat_mul(&self.beta, g);
            worst = worst.max(mat_max_abs(&mat_add(&bg, &mat_scale(&mat_adjoint(&bg), c(-1.0, 0.0)))));
        }
        worst
    }

    /// Smallest eigenvalue of the hermitian matrix `beta gamma_0`.
    pub fn positivity_margin(&self) -> f64 {
        let m = mat_mul(&self.beta, &self.gamma[0]);
        let (a, d, b) = (m[0][0].re, m[1][1].re, m[0][1]);
        let tr = a + d;
        let det = a * d - b.norm_sqr();
        0.5 * (tr - (tr * tr - 4.0 * det).max(0.0).sqrt())
    }
}

/// Connection coefficients on coordinate directions: `nabla_{d_mu} psi =
/// d_mu psi + omega_mu psi`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpinConnection {
    pub omega_t: Mat2c,
    pub omega: Vec<Mat2c>,
}

impl SpinConnection {
    /// `omega_{d_i} = 1/2 II(d_i, e_j) gamma_0 gamma_j` with `II = -s a a' delta`,
    /// i.e. `-1/2 s a' gamma_0 gamma_i`. `omega_t = 0` because the frame is
    /// parallel along `d_t`.
    pub fn at(frame: &SpinFrame, st: &WarpedSpacetime, t: f64) -> Result<Self> {
        let ii = second_fundamental_form(st, t)?;
        let a = st.a.jet(t).v;
        let d = st.spatial_dim();
        let mut omega = Vec::with_capacity(d);
        for i in 0..d {
            let mut w = [[ZERO_C; 2]; 2];
            for j in 0..d {
                let coef = 0.5 * ii[i][j] / a;
                if coef != 0.0 {
                    let g0j = mat_mul(&frame.gamma[0], &frame.gamma[1 + j]);
                    w = mat_add(&w, &mat_scale(&g0j, c(coef, 0.0)));
                }
            }
            omega.push(w);
        }
        Ok(SpinConnection { omega_t: [[ZERO_C; 2]; 2], omega })
    }

    /// Defect of `[omega_mu, gamma_b] = sum_a w^a_{mu b} gamma_a`, where
    /// `nabla_{d_mu} e_b = w^a_{mu b} e_a` is computed from the coordinate
    /// Christoffels. This is the condition that pins the sign of omega.
    pub fn clifford_compatibility_defect(&self, frame: &SpinFrame, st: &WarpedSpacetime, t: f64) -> Result<f64> {
        let bg = st.background(t)?;
        let chr = crate::geometry::christoffels(st, t)?;
        let n = st.n;
        // frame vectors in coordinates: e_0 = s d_t, e_i = a^-1 d_i
        let scale = |b: usize| if b == 0 { bg.s } else { 1.0 / bg.a };
        let inv_scale = |a: usize| if a == 0 { 1.0 / bg.s } else { bg.a };
        let gamma_full = |rho: usize, mu: usize, nu: usize| -> f64 {
            // coordinate Gamma^rho_{mu nu}
            match (rho, mu, nu) {
                (0, 0, 0) => chr.gamma_000,
                (0, i, j) if i > 0 && j > 0 => chr.gamma_0ij[i - 1][j - 1],
                (j, i, 0) if j > 0 && i > 0 => chr.gamma_j_i0[j - 1][i - 1],
                (j, 0, i) if j > 0 && i > 0 => chr.gamma_j_i0[j - 1][i - 1],
                _ => 0.0,
            }
        };
        let mut worst = 0.0f64;
        for mu in 0..n {
            let om = if mu == 0 { self.omega_t } else { self.omega[mu - 1] };
            for b in 0..n {
                // nabla_mu (scale_b d_b) = d_mu(scale_b) d_b + scale_b Gamma^rho_{mu b} d_rho
                let dscale = if mu == 0 {
                    if b == 0 {
                        bg.ds
                    } else {
                        -bg.da / (bg.a * bg.a)
                    }
                } else {
                    0.0
                };
                let mut rhs = [[ZERO_C; 2]; 2];
                for a in 0..n {
                    let mut coord = scale(b) * gamma_full(a, mu, b);
                    if a == b {
                        coord += dscale;
                    }
                    let w = coord * inv_scale(a);
                    rhs = mat_add(&rhs, &mat_scale(&frame.gamma[a], c(w, 0.0)));
                }
                let lhs = mat_add(&mat_mul(&om, &frame.gamma[b]), &mat_scale(&mat_mul(&frame.gamma[b], &om), c(-1.0, 0.0)));
                worst = worst.max(mat_max_abs(&mat_add(&lhs, &mat_scale(&rhs, c(-1.0, 0.0)))));
            }
        }
        Ok(worst)
    }
}

/// Twisted Dirac operator on a slice:
/// `D psi = -s gamma_0 chi + a^-1 sum_i gamma_i D_i psi`, with `chi = nabla_t psi`
/// supplied by the caller.
pub fn dirac_with(pb: &Pullback, frame: &SpinFrame, conn: &SpinConnection, bg: &Background, psi: &[VSp], chi: &[VSp]) -> Vec<VSp> {
    let mut out: Vec<VSp> = chi.par_iter().map(|x| frame.clifford_vsp(0, x).scale(-bg.s)).collect();
    for i in 0..pb.grid.d {
        let di = pb.spinor_d(psi, i, &conn.omega[i]);
        out.par_iter_mut()
            .zip(&di)
            .for_each(|(o, d)| *o = o.add(frame.clifford_vsp(1 + i, d).scale(1.0 / bg.a)));
    }
    out
}

/// Spatial part `a^-1 sum_i gamma_i D_i psi` only.
pub fn dirac_spatial(pb: &Pullback, frame: &SpinFrame, conn: &SpinConnection, bg: &Background, psi: &[VSp]) -> Vec<VSp> {
    let zero = vec![VSp::zero(); psi.len()];
    dirac_with(pb, frame, conn, bg, psi, &zero)
}

/// Field-level Dirac operator; builds the pullback data from `phi`.
pub fn dirac(
    grid: &crate::fields::Grid,
    order: crate::fields::FdOrder,
    st: &WarpedSpacetime,
    chart: &crate::target::TargetChart,
    frame: &SpinFrame,
    state: &crate::fields::FieldState,
) -> Result<Vec<VSp>> {
    state.check_chart(chart)?;
    let pb = Pullback::new(grid, chart, &state.phi, order)?;
    let conn = SpinConnection::at(frame, st, state.t)?;
    let bg = st.background(state.t)?;
    Ok(dirac_with(&pb, frame, &conn, &bg, &state.psi, &state.chi))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RescaleDirection {
    ToConformal,
    FromConformal,
}

/// Multiply pointwise by `(Ns)^{(1-n)/2}` (to conformal) or its inverse.
pub fn conformal_rescale(psi: &[VSp], ns: &[f64], n: usize, dir: RescaleDirection) -> Result<Vec<VSp>> {
    if psi.len() != ns.len() {
        return Err(Error::Validation("conformal factor and spinor field differ in length".into()));
    }
    let e = (1.0 - n as f64) / 2.0;
    let e = match dir {
        RescaleDirection::ToConformal => e,
        RescaleDirection::FromConformal => -e,
    };
    psi.iter()
        .zip(ns)
        .map(|(p, &f)| {
            if !(f > 0.0) {
                return Err(Error::Domain(format!("conformal factor {f} is not positive")));
            }
            Ok(p.scale(f.powf(e)))
        })
        .collect()
}

/// `sum_points Re (positive product)` of two vector spinor fields.
pub fn pos_inner(frame: &SpinFrame, u: &[VSp], v: &[VSp]) -> C64 {
    u.iter()
        .zip(v)
        .map(|(a, b)| (0..M).map(|k| frame.pos_pair(&a[k], &b[k])).sum::<C64>())
        .sum()
}
