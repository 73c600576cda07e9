//! Warped-product background `h = -s(t)^-2 dt^2 + a(t)^2 delta` on
//! `R x T^{n-1}` with lapse `N(t, x)`.
//!
//! Every profile carries hand-coded derivatives, so Christoffel symbols and
//! curvature are exact up to round-off.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Family for the conformal factor `s(t)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum SProfile {
    /// `s = c`.
    Const(f64),
    /// `s = e^{lambda t}`.
    Exp { lambda: f64 },
    /// `s = (1 + t)^p`.
    Power { p: f64 },
}

/// Family for the scale factor `a(t)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum AProfile {
    Const(f64),
    /// `a = 1 + mu sin(omega t)`, `|mu| < 1`.
    Osc { mu: f64, omega: f64 },
    /// `a = e^{rate t}`. Unbounded; only for identity tests.
    Exp { rate: f64 },
}

/// Family for the lapse `N`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum LapseProfile {
    One,
    /// `N = 1 + beta cos(x^1)`, `|beta| < 1`.
    Cos { beta: f64 },
}

/// Value and first three derivatives of a profile at one time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Jet {
    pub v: f64,
    pub d1: f64,
    pub d2: f64,
    pub d3: f64,
}

impl SProfile {
    pub fn jet(&self, t: f64) -> Jet {
        match *self {
            SProfile::Const(c) => Jet { v: c, d1: 0.0, d2: 0.0, d3: 0.0 },
            SProfile::Exp { lambda } => {
                let e = (lambda * t).exp();
                Jet { v: e, d1: lambda * e, d2: lambda * lambda * e, d3: lambda.powi(3) * e }
            }
            SProfile::Power { p } => {
                let u = 1.0 + t;
                Jet {
                    v: u.powf(p),
                    d1: p * u.powf(p - 1.0),
                    d2: p * (p - 1.0) * u.powf(p - 2.0),
                    d3: p * (p - 1.0) * (p - 2.0) * u.powf(p - 3.0),
                }
            }
        }
    }

    /// Whether `int_0^inf s^-1 dt` is finite, decided from the family parameters.
    pub fn inverse_integrable(&self) -> bool {
        match *self {
            SProfile::Const(_) => false,
            SProfile::Exp { lambda } => lambda > 0.0,
            SProfile::Power { p } => p > 1.0,
        }
    }
}

impl AProfile {
    pub fn jet(&self, t: f64) -> Jet {
        match *self {
            AProfile::Const(a) => Jet { v: a, d1: 0.0, d2: 0.0, d3: 0.0 },
            AProfile::Osc { mu, omega } => {
                let (sn, cs) = (omega * t).sin_cos();
                Jet {
                    v: 1.0 + mu * sn,
                    d1: mu * omega * cs,
                    d2: -mu * omega * omega * sn,
                    d3: -mu * omega.powi(3) * cs,
                }
            }
            AProfile::Exp { rate } => {
                let e = (rate * t).exp();
                Jet { v: e, d1: rate * e, d2: rate * rate * e, d3: rate.powi(3) * e }
            }
        }
    }
}

impl LapseProfile {
    /// `(N, partial_t N, partial_1 N)` at a spatial point. The families are
    /// time independent.
    pub fn eval(&self, x1: f64) -> (f64, f64, f64) {
        match *self {
            LapseProfile::One => (1.0, 0.0, 0.0),
            LapseProfile::Cos { beta } => (1.0 + beta * x1.cos(), 0.0, -beta * x1.sin()),
        }
    }

    pub fn bounds(&self) -> (f64, f64) {
        match *self {
            LapseProfile::One => (1.0, 1.0),
            LapseProfile::Cos { beta } => (1.0 - beta.abs(), 1.0 + beta.abs()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WarpedSpacetime {
    /// Spacetime dimension, 2 or 3.
    pub n: usize,
    pub s: SProfile,
    pub a: AProfile,
    pub lapse: LapseProfile,
}

/// Scalars of the background at one time, used by the kernels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Background {
    pub t: f64,
    pub s: f64,
    pub ds: f64,
    pub a: f64,
    pub da: f64,
    /// `tr_g gdot = (n-1) 2 a'/a`.
    pub tr_gdot: f64,
    pub scal: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChristoffelData {
    pub gamma_000: f64,
    /// `Gamma^0_ij`, only the leading `(n-1) x (n-1)` block is used.
    pub gamma_0ij: [[f64; 2]; 2],
    /// `Gamma^j_{i0}` indexed `[j][i]`.
    pub gamma_j_i0: [[f64; 2]; 2],
    /// `Gamma^k_ij` of the slice metric, `[k][i][j]`.
    pub gamma_spatial: [[[f64; 2]; 2]; 2],
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvatureData {
    /// `R^rho_{sigma mu nu}` as `riemann[rho][sigma][mu][nu]`, coordinates `(t, x^1, x^2)`.
    pub riemann: [[[[f64; 3]; 3]; 3]; 3],
    pub scal: f64,
    pub ricci_spatial: [[f64; 2]; 2],
}

impl WarpedSpacetime {
    pub fn new(n: usize, s: SProfile, a: AProfile, lapse: LapseProfile) -> Result<Self> {
        let st = WarpedSpacetime { n, s, a, lapse };
        st.validate_params()?;
        Ok(st)
    }

    /// Minkowski-type static background `s = a = N = 1`.
    pub fn static_flat(n: usize) -> Self {
        WarpedSpacetime { n, s: SProfile::Const(1.0), a: AProfile::Const(1.0), lapse: LapseProfile::One }
    }

    pub fn de_sitter(n: usize) -> Self {
        WarpedSpacetime { n, s: SProfile::Exp { lambda: 1.0 }, a: AProfile::Const(1.0), lapse: LapseProfile::One }
    }

    pub fn spatial_dim(&self) -> usize {
        self.n - 1
    }

    fn validate_params(&self) -> Result<()> {
        if self.n != 2 && self.n != 3 {
            return Err(Error::Domain(format!("n must be 2 or 3, got {}", self.n)));
        }
        match self.s {
            SProfile::Const(c) if c <= 0.0 => return Err(Error::Domain("s must be positive".into())),
            SProfile::Exp { lambda } if lambda < 0.0 => {
                return Err(Error::Domain("s.lambda must be >= 0 (s nondecreasing)".into()))
            }
            SProfile::Power { p } if p < 0.0 => {
                return Err(Error::Domain("s.p must be >= 0 (s nondecreasing)".into()))
            }
            _ => {}
        }
        match self.a {
            AProfile::Const(a) if a <= 0.0 => return Err(Error::Domain("a must be positive".into())),
            AProfile::Osc { mu, .. } if mu.abs() >= 1.0 => {
                return Err(Error::Domain("|a.mu| must be < 1".into()))
            }
            _ => {}
        }
        if let LapseProfile::Cos { beta } = self.lapse {
            if beta.abs() >= 1.0 {
                return Err(Error::Domain("|N.beta| must be < 1".into()));
            }
        }
        Ok(())
    }

    /// Check the pointwise hypotheses (`s > 0`, `s' >= 0`, `a > 0`) on `[0, t_end]`
    /// at `samples` points.
    pub fn validate_horizon(&self, t_end: f64, samples: usize) -> Result<()> {
        self.validate_params()?;
        for k in 0..=samples {
            let t = t_end * k as f64 / samples.max(1) as f64;
            let s = self.s.jet(t);
            if !(s.v > 0.0) {
                return Err(Error::Domain(format!("s({t}) = {} is not positive", s.v)));
            }
            if s.d1 < 0.0 {
                return Err(Error::Domain(format!("s is decreasing at t = {t}")));
            }
            if !(self.a.jet(t).v > 0.0) {
                return Err(Error::Domain(format!("a({t}) is not positive")));
            }
        }
        Ok(())
    }

    fn s_checked(&self, t: f64) -> Result<Jet> {
        let s = self.s.jet(t);
        if !(s.v > 0.0) || !s.v.is_finite() {
            return Err(Error::Domain(format!("s({t}) = {} is not positive", s.v)));
        }
        Ok(s)
    }

    pub fn background(&self, t: f64) -> Result<Background> {
        let s = self.s_checked(t)?;
        let a = self.a.jet(t);
        Ok(Background {
            t,
            s: s.v,
            ds: s.d1,
            a: a.v,
            da: a.d1,
            tr_gdot: (self.n - 1) as f64 * 2.0 * a.d1 / a.v,
            scal: curvature(self, t, &[])?.scal,
        })
    }

    /// `(Ns)` and its coordinate derivatives `(partial_t, partial_1)` at `(t, x^1)`.
    pub fn conformal_factor(&self, t: f64, x1: f64) -> (f64, f64, f64) {
        let s = self.s.jet(t);
        let (n, nt, nx) = self.lapse.eval(x1);
        (n * s.v, nt * s.v + n * s.d1, nx * s.v)
    }

    /// Closed-form scalar curvature of the scaled-flat torus, as a cross-check
    /// of the Riemann contraction.
    pub fn scalar_curvature_closed(&self, t: f64) -> f64 {
        let s = self.s.jet(t);
        let a = self.a.jet(t);
        let d = (self.n - 1) as f64;
        let h = a.d1 / a.v;
        2.0 * d * s.v * (s.d1 * a.d1 + s.v * a.d2) / a.v + d * (d - 1.0) * s.v * s.v * h * h
    }

    /// Full coordinate Christoffel symbols `Gamma^rho_{mu nu}` and their time
    /// derivatives, indexed `[rho][mu][nu]`.
    fn full_christoffels(&self, t: f64) -> Result<([[[f64; 3]; 3]; 3], [[[f64; 3]; 3]; 3])> {
        let s = self.s_checked(t)?;
        let a = self.a.jet(t);
        let d = self.n - 1;
        let mut g = [[[0.0; 3]; 3]; 3];
        let mut dg = [[[0.0; 3]; 3]; 3];
        g[0][0][0] = -s.d1 / s.v;
        dg[0][0][0] = -(s.d2 * s.v - s.d1 * s.d1) / (s.v * s.v);
        // gdot_ij = 2 a a' delta_ij, Gamma^0_ij = s^2 a a' delta_ij
        let g0 = s.v * s.v * a.v * a.d1;
        let dg0 = 2.0 * s.v * s.d1 * a.v * a.d1 + s.v * s.v * (a.d1 * a.d1 + a.v * a.d2);
        let h = a.d1 / a.v;
        let dh = (a.d2 * a.v - a.d1 * a.d1) / (a.v * a.v);
        for i in 1..=d {
            g[0][i][i] = g0;
            dg[0][i][i] = dg0;
            g[i][i][0] = h;
            g[i][0][i] = h;
            dg[i][i][0] = dh;
            dg[i][0][i] = dh;
        }
        Ok((g, dg))
    }

    /// Inverse metric diagonal `(h^00, h^11, h^22)`.
    pub fn inverse_metric_diag(&self, t: f64) -> [f64; 3] {
        let s = self.s.jet(t).v;
        let a = self.a.jet(t).v;
        let mut r = [-s * s, 1.0 / (a * a), 1.0 / (a * a)];
        if self.n == 2 {
            r[2] = 0.0;
        }
        r
    }

    /// Metric diagonal `(h_00, h_11, h_22)`.
    pub fn metric_diag(&self, t: f64) -> [f64; 3] {
        let s = self.s.jet(t).v;
        let a = self.a.jet(t).v;
        let mut r = [-1.0 / (s * s), a * a, a * a];
        if self.n == 2 {
            r[2] = 0.0;
        }
        r
    }
}

pub fn christoffels(st: &WarpedSpacetime, t: f64) -> Result<ChristoffelData> {
    let (g, _) = st.full_christoffels(t)?;
    let mut out = ChristoffelData {
        gamma_000: g[0][0][0],
        gamma_0ij: [[0.0; 2]; 2],
        gamma_j_i0: [[0.0; 2]; 2],
        gamma_spatial: [[[0.0; 2]; 2]; 2],
    };
    let d = st.n - 1;
    for i in 0..d {
        for j in 0..d {
            out.gamma_0ij[i][j] = g[0][i + 1][j + 1];
            out.gamma_j_i0[j][i] = g[j + 1][i + 1][0];
        }
    }
    Ok(out)
}

/// `II = -(s/2) gdot`, coordinate components `II_ij`.
pub fn second_fundamental_form(st: &WarpedSpacetime, t: f64) -> Result<[[f64; 2]; 2]> {
    let s = st.s_checked(t)?;
    let a = st.a.jet(t);
    let mut ii = [[0.0; 2]; 2];
    for (i, row) in ii.iter_mut().enumerate().take(st.n - 1) {
        row[i] = -0.5 * s.v * 2.0 * a.v * a.d1;
    }
    Ok(ii)
}

/// Coordinate Riemann tensor from the Christoffel symbols and their exact time
/// derivatives. The background is spatially homogeneous, so `x` only enters
/// through the signature of the call.
pub fn curvature(st: &WarpedSpacetime, t: f64, _x: &[f64]) -> Result<CurvatureData> {
    let (g, dg) = st.full_christoffels(t)?;
    let dim = st.n;
    let mut r = [[[[0.0; 3]; 3]; 3]; 3];
    for rho in 0..dim {
        for sig in 0..dim {
            for mu in 0..dim {
                for nu in 0..dim {
                    // only partial_t is nonzero
                    let mut v = 0.0;
                    if mu == 0 {
                        v += dg[rho][nu][sig];
                    }
                    if nu == 0 {
                        v -= dg[rho][mu][sig];
                    }
                    for lam in 0..dim {
                        v += g[rho][mu][lam] * g[lam][nu][sig] - g[rho][nu][lam] * g[lam][mu][sig];
                    }
                    r[rho][sig][mu][nu] = v;
                }
            }
        }
    }
    let hinv = st.inverse_metric_diag(t);
    let mut scal = 0.0;
    for sig in 0..dim {
        let mut ric = 0.0;
        for rho in 0..dim {
            ric += r[rho][sig][rho][sig];
        }
        scal += hinv[sig] * ric;
    }
    Ok(CurvatureData { riemann: r, scal, ricci_spatial: [[0.0; 2]; 2] })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConformalIntegrals {
    /// `Phi = int_0^T (s^-1 + f) dt`.
    pub phi: f64,
    /// `int_0^T f dt` with `f = (n-2) s^{1-n} s'`.
    pub f_integral: f64,
    /// `s(0)^{2-n} - s(T)^{2-n}` for `n > 2`.
    pub f_closed_form: Option<f64>,
    pub s_inv_integral: f64,
    /// Set when `int s^-1` does not converge: the run is outside the theorem's
    /// hypotheses.
    pub warning: bool,
}

/// Integrand `s^-1 + f` of `Phi`.
pub fn phi_integrand(st: &WarpedSpacetime, t: f64) -> f64 {
    s_inv(st, t) + f_density(st, t)
}

fn s_inv(st: &WarpedSpacetime, t: f64) -> f64 {
    1.0 / st.s.jet(t).v
}

pub fn f_density(st: &WarpedSpacetime, t: f64) -> f64 {
    if st.n == 2 {
        return 0.0;
    }
    let s = st.s.jet(t);
    (st.n as f64 - 2.0) * s.v.powi(1 - st.n as i32) * s.d1
}

pub const QUAD_TOL: f64 = 1e-10;

pub fn conformal_factor_integrals(st: &WarpedSpacetime, t_end: f64) -> Result<ConformalIntegrals> {
    if !(t_end > 0.0) {
        return Err(Error::Domain("horizon must be positive".into()));
    }
    st.s_checked(t_end)?;
    let s_inv_integral = integrate(|t| s_inv(st, t), 0.0, t_end, QUAD_TOL / 2.0);
    let f_integral = integrate(|t| f_density(st, t), 0.0, t_end, QUAD_TOL / 2.0);
    let f_closed_form = if st.n > 2 {
        let e = 2 - st.n as i32;
        Some(st.s.jet(0.0).v.powi(e) - st.s.jet(t_end).v.powi(e))
    } else {
        None
    };
    Ok(ConformalIntegrals {
        phi: s_inv_integral + f_integral,
        f_integral,
        f_closed_form,
        s_inv_integral,
        warning: !st.s.inverse_integrable(),
    })
}

/// Adaptive Simpson quadrature with absolute tolerance `tol` on `[a, b]`.
///
/// The interval is first cut at geometrically growing breakpoints so that
/// integrands concentrated near `t = 0` on very long horizons are resolved.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> f64 {
    if b <= a {
        return 0.0;
    }
    let mut cuts = vec![a];
    let mut x = a;
    while x < b {
        let w = (x - a).max(0.5);
        x = (x + w).min(b);
        cuts.push(x);
    }
    let nseg = (cuts.len() - 1) as f64;
    let mut total = 0.0;
    for w in cuts.windows(2) {
        let (l, r) = (w[0], w[1]);
        let m = 0.5 * (l + r);
        let (fl, fm, fr) = (f(l), f(m), f(r));
        let whole = (r - l) / 6.0 * (fl + 4.0 * fm + fr);
        total += simpson_rec(&f, l, r, fl, fm, fr, whole, tol / nseg, 48);
    }
    total
}

#[allow(clippy::too_many_arguments)]
fn simpson_rec<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    let m = 0.5 * (a + b);
    let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
    let (flm, frm) = (f(lm), f(rm));
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        return left + right + delta / 15.0;
    }
    simpson_rec(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1)
        + simpson_rec(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
}
