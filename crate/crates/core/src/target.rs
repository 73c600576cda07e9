//! Chart-based Riemannian surfaces `(P, G)`: flat plane, unit sphere in
//! stereographic coordinates, and warped surfaces `dr^2 + f(r)^2 dtheta^2`.
//!
//! Curvature convention: `R(X,Y)Z = R^I_{JKL} X^K Y^L Z^J d_I`, fixed so that
//! on the unit sphere `R(X,Y)Y = X` for orthonormal `X, Y`. All three targets
//! have constant or radially varying Gauss curvature `K`, so
//! `R_IJKL = K (G_IK G_JL - G_IL G_JK)` and `nabla_M R_IJKL = d_M K (...)`.

use crate::error::{Error, Result};
use crate::linalg::{inv2, C64, M, M2, V2};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum WarpFamily {
    /// `f = sinh r`, the hyperbolic plane.
    Sinh,
    /// `f = r + c r^3`.
    Cubic { c: f64 },
}

impl WarpFamily {
    /// `(f, f', f'', f''')`.
    pub fn jet(&self, r: f64) -> [f64; 4] {
        match *self {
            WarpFamily::Sinh => {
                let (sh, ch) = (r.sinh(), r.cosh());
                [sh, ch, sh, ch]
            }
            WarpFamily::Cubic { c } => [r + c * r.powi(3), 1.0 + 3.0 * c * r * r, 6.0 * c * r, 6.0 * c],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum TargetKind {
    Flat,
    SphereStereographic,
    WarpedSurface(WarpFamily),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TargetChart {
    pub kind: TargetKind,
    pub chart_radius: f64,
}

pub type Gamma3 = [[[f64; M]; M]; M];
pub type Riem4 = [[[[f64; M]; M]; M]; M];
pub type GradRiem = [[[[[f64; M]; M]; M]; M]; M];

/// Pointwise target data at a chart point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TargetGeometry {
    pub g: M2,
    pub ginv: M2,
    /// `Gamma^I_JK` as `gamma[I][J][K]`.
    pub gamma: Gamma3,
    /// Lowered `R_IJKL`.
    pub riem: Riem4,
    /// `nabla_J R_KLMN` as `grad_riem[J][K][L][M][N]`.
    pub grad_riem: GradRiem,
    /// Gauss curvature.
    pub gauss: f64,
    /// Whether `nabla R` vanishes identically for this target.
    pub parallel_curvature: bool,
}

impl TargetChart {
    pub fn flat() -> Self {
        TargetChart { kind: TargetKind::Flat, chart_radius: 10.0 }
    }

    pub fn sphere() -> Self {
        TargetChart { kind: TargetKind::SphereStereographic, chart_radius: 10.0 }
    }

    pub fn warped(f: WarpFamily) -> Self {
        TargetChart { kind: TargetKind::WarpedSurface(f), chart_radius: 10.0 }
    }

    /// Reference point `y_0` around which small data is placed.
    pub fn base_point(&self) -> V2 {
        match self.kind {
            TargetKind::WarpedSurface(_) => [1.0, 0.0],
            _ => [0.0, 0.0],
        }
    }

    /// Distance from the chart origin used for the chart-exit test.
    pub fn chart_distance(&self, y: &V2) -> f64 {
        let b = self.base_point();
        ((y[0] - b[0]).powi(2) + (y[1] - b[1]).powi(2)).sqrt()
    }

    pub fn admissible(&self, y: &V2) -> bool {
        if !(y[0].is_finite() && y[1].is_finite()) {
            return false;
        }
        if self.chart_distance(y) >= self.chart_radius {
            return false;
        }
        match self.kind {
            TargetKind::WarpedSurface(f) => y[0] > 0.0 && f.jet(y[0])[0] > 0.0,
            _ => true,
        }
    }

    fn check(&self, y: &V2) -> Result<()> {
        if self.admissible(y) {
            Ok(())
        } else {
            Err(Error::ChartExit { y0: y[0], y1: y[1] })
        }
    }

    pub fn metric(&self, y: &V2) -> Result<M2> {
        self.check(y)?;
        Ok(self.metric_unchecked(y))
    }

    fn metric_unchecked(&self, y: &V2) -> M2 {
        match self.kind {
            TargetKind::Flat => [[1.0, 0.0], [0.0, 1.0]],
            TargetKind::SphereStereographic => {
                let rho = 4.0 / (1.0 + y[0] * y[0] + y[1] * y[1]).powi(2);
                [[rho, 0.0], [0.0, rho]]
            }
            TargetKind::WarpedSurface(f) => {
                let fr = f.jet(y[0])[0];
                [[1.0, 0.0], [0.0, fr * fr]]
            }
        }
    }
}

fn constant_curvature_tensor(g: &M2, k: f64) -> Riem4 {
    let mut r = [[[[0.0; M]; M]; M]; M];
    for i in 0..M {
        for j in 0..M {
            for kk in 0..M {
                for l in 0..M {
                    r[i][j][kk][l] = k * (g[i][kk] * g[j][l] - g[i][l] * g[j][kk]);
                }
            }
        }
    }
    r
}

/// Metric, Christoffels, curvature and covariant derivative of curvature at `y`.
pub fn target_geometry(chart: &TargetChart, y: &V2) -> Result<TargetGeometry> {
    chart.check(y)?;
    let g = chart.metric_unchecked(y);
    let ginv = inv2(&g);
    let mut gamma = [[[0.0; M]; M]; M];
    let mut grad_riem = [[[[[0.0; M]; M]; M]; M]; M];
    let (gauss, parallel) = match chart.kind {
        TargetKind::Flat => (0.0, true),
        TargetKind::SphereStereographic => {
            let q = 1.0 + y[0] * y[0] + y[1] * y[1];
            // log of the conformal factor sqrt(rho): sigma = ln 2 - ln q
            let ds = [-2.0 * y[0] / q, -2.0 * y[1] / q];
            for i in 0..M {
                for j in 0..M {
                    for k in 0..M {
                        let mut v = 0.0;
                        if i == k {
                            v += ds[j];
                        }
                        if i == j {
                            v += ds[k];
                        }
                        if j == k {
                            v -= ds[i];
                        }
                        gamma[i][j][k] = v;
                    }
                }
            }
            (1.0, true)
        }
        TargetKind::WarpedSurface(fam) => {
            let [f, f1, f2, f3] = fam.jet(y[0]);
            gamma[0][1][1] = -f * f1;
            gamma[1][0][1] = f1 / f;
            gamma[1][1][0] = f1 / f;
            let k = -f2 / f;
            let dk = -(f3 * f - f2 * f1) / (f * f);
            let unit = constant_curvature_tensor(&g, 1.0);
            for a in 0..M {
                for b in 0..M {
                    for c in 0..M {
                        for d in 0..M {
                            grad_riem[0][a][b][c][d] = dk * unit[a][b][c][d];
                        }
                    }
                }
            }
            (k, false)
        }
    };
    Ok(TargetGeometry {
        g,
        ginv,
        gamma,
        riem: constant_curvature_tensor(&g, gauss),
        grad_riem,
        gauss,
        parallel_curvature: parallel,
    })
}

impl TargetGeometry {
    /// Mixed components `R^I_JKL`.
    pub fn riem_up(&self) -> Riem4 {
        let mut r = [[[[0.0; M]; M]; M]; M];
        for i in 0..M {
            for j in 0..M {
                for k in 0..M {
                    for l in 0..M {
                        let mut v = 0.0;
                        for p in 0..M {
                            v += self.ginv[i][p] * self.riem[p][j][k][l];
                        }
                        r[i][j][k][l] = v;
                    }
                }
            }
        }
        r
    }

    /// Endomorphism `R(X,Y)^I_J = R^I_JKL X^K Y^L`.
    pub fn curvature_endo(&self, x: &V2, y: &V2) -> M2 {
        // R^I_JKL X^K Y^L = K (delta^I_K G_JL - delta^I_L G_JK) X^K Y^L
        let k = self.gauss;
        let gy = [self.g[0][0] * y[0] + self.g[0][1] * y[1], self.g[1][0] * y[0] + self.g[1][1] * y[1]];
        let gx = [self.g[0][0] * x[0] + self.g[0][1] * x[1], self.g[1][0] * x[0] + self.g[1][1] * x[1]];
        let mut e = [[0.0; M]; M];
        for i in 0..M {
            for j in 0..M {
                e[i][j] = k * (x[i] * gy[j] - y[i] * gx[j]);
            }
        }
        e
    }

    /// `(nabla_Z R)(X,Y)` as an endomorphism: `Z^M nabla_M R^I_JKL X^K Y^L`.
    pub fn grad_curvature_endo(&self, z: &V2, x: &V2, y: &V2) -> M2 {
        let mut e = [[0.0; M]; M];
        if self.parallel_curvature {
            return e;
        }
        for i in 0..M {
            for j in 0..M {
                let mut v = 0.0;
                for m in 0..M {
                    for p in 0..M {
                        for k in 0..M {
                            for l in 0..M {
                                v += z[m] * self.ginv[i][p] * self.grad_riem[m][p][j][k][l] * x[k] * y[l];
                            }
                        }
                    }
                }
                e[i][j] = v;
            }
        }
        e
    }

    /// `Gamma^I_JK u^J`, as a matrix acting on the `K` slot.
    pub fn connection_matrix(&self, u: &V2) -> M2 {
        let mut a = [[0.0; M]; M];
        for i in 0..M {
            for k in 0..M {
                a[i][k] = self.gamma[i][0][k] * u[0] + self.gamma[i][1][k] * u[1];
            }
        }
        a
    }

    /// `d_M G_IJ = Gamma_IMJ + Gamma_JMI` as `[M][I][J]`.
    pub fn metric_derivative(&self) -> [[[f64; M]; M]; M] {
        let mut low = [[[0.0; M]; M]; M];
        for i in 0..M {
            for j in 0..M {
                for k in 0..M {
                    low[i][j][k] = self.g[i][0] * self.gamma[0][j][k] + self.g[i][1] * self.gamma[1][j][k];
                }
            }
        }
        let mut d = [[[0.0; M]; M]; M];
        for m in 0..M {
            for i in 0..M {
                for j in 0..M {
                    d[m][i][j] = low[i][m][j] + low[j][m][i];
                }
            }
        }
        d
    }
}

/// `R(X,Y)Z` with the sphere normalisation `R(X,Y)Y = X`.
pub fn curvature_operator(chart: &TargetChart, y: &V2, x: &V2, yv: &V2, z: &V2) -> Result<V2> {
    let geo = target_geometry(chart, y)?;
    let e = geo.curvature_endo(x, yv);
    Ok([e[0][0] * z[0] + e[0][1] * z[1], e[1][0] * z[0] + e[1][1] * z[1]])
}

/// `G^IJ nabla_J R_KLMN <psi^K,psi^M> <psi^L,psi^N>` for a hermitian table
/// `b[K][M] = <psi^K, psi^M>`. The contraction is real.
pub fn sharp_gradient_term(chart: &TargetChart, y: &V2, b: &[[C64; M]; M]) -> Result<V2> {
    let geo = target_geometry(chart, y)?;
    Ok(sharp_gradient_from(&geo, b))
}

pub fn sharp_gradient_from(geo: &TargetGeometry, b: &[[C64; M]; M]) -> V2 {
    if geo.parallel_curvature {
        return [0.0; M];
    }
    let mut low = [C64::new(0.0, 0.0); M];
    let mut scale = 0.0f64;
    for (j, lj) in low.iter_mut().enumerate() {
        for k in 0..M {
            for l in 0..M {
                for m in 0..M {
                    for n in 0..M {
                        let term = geo.grad_riem[j][k][l][m][n] * b[k][m] * b[l][n];
                        scale += term.norm();
                        *lj += term;
                    }
                }
            }
        }
    }
    debug_assert!(low.iter().all(|z| z.im.abs() <= 1e-12 * (1.0 + scale)));
    let mut out = [0.0; M];
    for (i, o) in out.iter_mut().enumerate() {
        *o = geo.ginv[i][0] * low[0].re + geo.ginv[i][1] * low[1].re;
    }
    out
}

/// `<psi, R(psi,psi) psi> = R_IJKL <psi^I,psi^K> <psi^J,psi^L>`, real.
pub fn quartic_contraction(geo: &TargetGeometry, b: &[[C64; M]; M]) -> f64 {
    let mut q = C64::new(0.0, 0.0);
    for i in 0..M {
        for j in 0..M {
            for k in 0..M {
                for l in 0..M {
                    q += geo.riem[i][j][k][l] * b[i][k] * b[j][l];
                }
            }
        }
    }
    q.re
}
