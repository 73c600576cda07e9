//! Energies `E_k` of the map and the vector spinor, the total energy `F_r`,
//! and the empirical Gronwall bound `F(t) <= F(0) exp(C Phi(t))`.

use crate::dynamics::Model;
use crate::error::{Error, Result};
use crate::fields::{gnorm_density, l2_integral, FieldState, GInner, Pullback};
use crate::geometry::{integrate, phi_integrand, WarpedSpacetime, QUAD_TOL};
use crate::linalg::{Lin, M};
use crate::spin::SpinConnection;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyReport {
    pub t: f64,
    pub e_map: Vec<f64>,
    pub e_spin: Vec<f64>,
    pub psi_l2: f64,
    pub f_map: f64,
    pub f_spin: f64,
    pub f_total: f64,
    pub dirac_res: f64,
    /// `F(0) exp(C Phi(t))`, filled in by [`annotate`].
    pub bound_value: f64,
    pub bound_ok: bool,
}

fn int_forms<X: Lin + GInner>(model: &Model, pb: &Pullback, forms: &[Vec<[X; M]>], t: f64) -> f64 {
    forms
        .iter()
        .map(|f| {
            let dens: Vec<f64> = f.iter().zip(&pb.geo).map(|(v, g)| gnorm_density(g, v)).collect();
            l2_integral(&dens, &model.grid, &model.st, t)
        })
        .sum()
}

/// `E_k(phi)` for `k = 0..=kmax`.
pub fn map_energies(model: &Model, state: &FieldState, pb: &Pullback, kmax: usize) -> Result<Vec<f64>> {
    let bg = model.st.background(state.t)?;
    let a2 = bg.a * bg.a;
    let mut out = Vec::with_capacity(kmax + 1);
    let mut dpi = vec![state.pi.clone()];
    let mut ddphi = pb.dphi.clone();
    for k in 0..=kmax {
        let kin = bg.s * bg.s * a2.powi(-(k as i32)) * int_forms(model, pb, &dpi, state.t);
        let pot = a2.powi(-(k as i32 + 1)) * int_forms(model, pb, &ddphi, state.t);
        out.push(kin + pot);
        if k < kmax {
            dpi = pb.d_forms(&dpi, None);
            ddphi = pb.d_forms(&ddphi, None);
        }
    }
    Ok(out)
}

/// `E_k(psi)` for `k = 0..=kmax`, with the positive product.
pub fn spinor_energies(model: &Model, state: &FieldState, pb: &Pullback, kmax: usize) -> Result<Vec<f64>> {
    let bg = model.st.background(state.t)?;
    let conn = SpinConnection::at(&model.frame, &model.st, state.t)?;
    let a2 = bg.a * bg.a;
    let mut out = Vec::with_capacity(kmax + 1);
    let mut dchi = vec![state.chi.clone()];
    let mut dpsi = pb.d_forms(&[state.psi.clone()], Some(&conn.omega));
    for k in 0..=kmax {
        let kin = bg.s * bg.s * a2.powi(-(k as i32)) * int_forms(model, pb, &dchi, state.t);
        let pot = a2.powi(-(k as i32 + 1)) * int_forms(model, pb, &dpsi, state.t);
        out.push(kin + pot);
        if k < kmax {
            dchi = pb.d_forms(&dchi, Some(&conn.omega));
            dpsi = pb.d_forms(&dpsi, Some(&conn.omega));
        }
    }
    Ok(out)
}

pub fn energy_map(model: &Model, state: &FieldState, k: usize) -> Result<f64> {
    let pb = Pullback::new(&model.grid, &model.chart, &state.phi, model.order)?;
    Ok(map_energies(model, state, &pb, k)?[k])
}

pub fn energy_spinor(model: &Model, state: &FieldState, k: usize) -> Result<f64> {
    let pb = Pullback::new(&model.grid, &model.chart, &state.phi, model.order)?;
    Ok(spinor_energies(model, state, &pb, k)?[k])
}

/// Pointwise spinor energy density at `k = 0`; nonnegative by construction.
pub fn spinor_density0(model: &Model, state: &FieldState) -> Result<Vec<f64>> {
    let pb = Pullback::new(&model.grid, &model.chart, &state.phi, model.order)?;
    let bg = model.st.background(state.t)?;
    let conn = SpinConnection::at(&model.frame, &model.st, state.t)?;
    let mut dens: Vec<f64> = state.chi.iter().zip(&pb.geo).map(|(v, g)| bg.s * bg.s * gnorm_density(g, v)).collect();
    for i in 0..model.grid.d {
        let di = pb.spinor_d(&state.psi, i, &conn.omega[i]);
        for (p, d) in dens.iter_mut().enumerate() {
            *d += gnorm_density(&pb.geo[p], &di[p]) / (bg.a * bg.a);
        }
    }
    Ok(dens)
}

pub fn psi_l2(model: &Model, state: &FieldState, pb: &Pullback) -> f64 {
    let dens: Vec<f64> = state.psi.iter().zip(&pb.geo).map(|(v, g)| gnorm_density(g, v)).collect();
    l2_integral(&dens, &model.grid, &model.st, state.t)
}

/// `F_r = sum_{k<=r} E_k(phi) + sum_{k<=r-1} E_k(psi) + ||psi||^2`.
pub fn total_energy(model: &Model, state: &FieldState, r: usize) -> Result<EnergyReport> {
    if r == 0 {
        return Err(Error::Validation("r must be at least 1".into()));
    }
    let pb = Pullback::new(&model.grid, &model.chart, &state.phi, model.order)?;
    let e_map = map_energies(model, state, &pb, r)?;
    let e_spin = spinor_energies(model, state, &pb, r - 1)?;
    let l2 = psi_l2(model, state, &pb);
    let f_map: f64 = e_map.iter().sum();
    let f_spin = e_spin.iter().sum::<f64>() + l2;
    Ok(EnergyReport {
        t: state.t,
        e_map,
        e_spin,
        psi_l2: l2,
        f_map,
        f_spin,
        f_total: f_map + f_spin,
        dirac_res: model.dirac_residual(state)?,
        bound_value: f64::NAN,
        bound_ok: false,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GronwallStatus {
    Pass,
    Fail,
    /// `int s^-1` diverges; the bound is reported but not judged.
    OutsideHypotheses,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GronwallVerdict {
    pub c_hat: f64,
    pub max_ratio: f64,
    /// `Phi(t)` at each sample.
    pub phi: Vec<f64>,
    pub bounds: Vec<f64>,
    pub fit_until: f64,
    pub status: GronwallStatus,
}

impl GronwallVerdict {
    pub fn passed(&self) -> bool {
        self.status == GronwallStatus::Pass
    }
}

/// Fit `C` on `t <= fit_until` (default: first 10% of the horizon) and check
/// `F(t) <= 2 F(0) exp(C Phi(t))` on every sample.
pub fn gronwall_check(series: &[(f64, f64)], st: &WarpedSpacetime, fit_until: Option<f64>) -> Result<GronwallVerdict> {
    let (t0, f0) = *series.first().ok_or_else(|| Error::Validation("empty energy series".into()))?;
    if f0 > 1.0 {
        return Err(Error::Refused(format!("F_r(0) = {f0} exceeds 1, outside the small-data regime")));
    }
    let t_end = series.last().map(|x| x.0).unwrap_or(t0);
    let fit_until = fit_until.unwrap_or(t0 + 0.1 * (t_end - t0));
    let mut phi = Vec::with_capacity(series.len());
    let mut acc = 0.0;
    phi.push(0.0);
    for w in series.windows(2) {
        acc += integrate(|t| phi_integrand(st, t), w[0].0, w[1].0, QUAD_TOL);
        phi.push(acc);
    }
    let mut c_hat = 0.0f64;
    for (j, w) in series.windows(2).enumerate() {
        if w[1].0 > fit_until + 1e-12 {
            break;
        }
        let (ta, fa) = w[0];
        let (tb, fb) = w[1];
        let dphi = phi[j + 1] - phi[j];
        let fm = 0.5 * (fa + fb);
        if fm > 0.0 && dphi > 0.0 && tb > ta {
            c_hat = c_hat.max((fb - fa) / (dphi * fm));
        }
    }
    let bounds: Vec<f64> = phi.iter().map(|p| f0 * (c_hat * p).exp()).collect();
    let max_ratio = series
        .iter()
        .zip(&bounds)
        .map(|((_, f), b)| if *b > 0.0 { f / b } else if *f > 0.0 { f64::INFINITY } else { 0.0 })
        .fold(0.0, f64::max);
    let status = if !st.s.inverse_integrable() {
        GronwallStatus::OutsideHypotheses
    } else if max_ratio <= 2.0 {
        GronwallStatus::Pass
    } else {
        GronwallStatus::Fail
    };
    Ok(GronwallVerdict { c_hat, max_ratio, phi, bounds, fit_until, status })
}

/// Copy the fitted bound into each report.
pub fn annotate(reports: &mut [EnergyReport], verdict: &GronwallVerdict) {
    for (r, b) in reports.iter_mut().zip(&verdict.bounds) {
        r.bound_value = *b;
        r.bound_ok = r.f_total <= 2.0 * b;
    }
}
