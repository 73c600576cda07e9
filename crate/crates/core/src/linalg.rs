//! Small fixed-size linear algebra used in the per-point kernels.

use num_complex::Complex64;

pub type C64 = Complex64;
/// Target dimension. All targets in this crate are surfaces.
pub const M: usize = 2;

pub type V2 = [f64; M];
pub type M2 = [[f64; M]; M];
/// Two-component spinor.
pub type Sp = [C64; 2];
/// Vector spinor `psi^I`, outer index is the target index.
pub type VSp = [Sp; M];
/// Complex 2x2 matrix acting on spinors.
pub type Mat2c = [[C64; 2]; 2];

pub const ZERO_C: C64 = C64::new(0.0, 0.0);
pub const I_C: C64 = C64::new(0.0, 1.0);

/// Linear space operations over any field value stored on the grid.
pub trait Lin: Copy + Send + Sync + 'static {
    fn zero() -> Self;
    fn add(self, o: Self) -> Self;
    fn scale(self, a: f64) -> Self;
    fn norm_sqr(&self) -> f64;
    fn is_finite(&self) -> bool;

    fn sub(self, o: Self) -> Self {
        self.add(o.scale(-1.0))
    }
    fn axpy(self, a: f64, x: Self) -> Self {
        self.add(x.scale(a))
    }
}

impl Lin for f64 {
    fn zero() -> Self {
        0.0
    }
    fn add(self, o: Self) -> Self {
        self + o
    }
    fn scale(self, a: f64) -> Self {
        self * a
    }
    fn norm_sqr(&self) -> f64 {
        self * self
    }
    fn is_finite(&self) -> bool {
        f64::is_finite(*self)
    }
}

impl Lin for C64 {
    fn zero() -> Self {
        ZERO_C
    }
    fn add(self, o: Self) -> Self {
        self + o
    }
    fn scale(self, a: f64) -> Self {
        self * a
    }
    fn norm_sqr(&self) -> f64 {
        Complex64::norm_sqr(self)
    }
    fn is_finite(&self) -> bool {
        self.re.is_finite() && self.im.is_finite()
    }
}

impl<X: Lin, const K: usize> Lin for [X; K] {
    fn zero() -> Self {
        [X::zero(); K]
    }
    fn add(self, o: Self) -> Self {
        let mut r = self;
        for k in 0..K {
            r[k] = self[k].add(o[k]);
        }
        r
    }
    fn scale(self, a: f64) -> Self {
        let mut r = self;
        for v in r.iter_mut() {
            *v = v.scale(a);
        }
        r
    }
    fn norm_sqr(&self) -> f64 {
        self.iter().map(|v| v.norm_sqr()).sum()
    }
    fn is_finite(&self) -> bool {
        self.iter().all(|v| v.is_finite())
    }
}

/// Values that can be multiplied by a complex scalar (spinor-valued data).
pub trait CScale: Lin {
    fn cscale(self, z: C64) -> Self;
}

impl CScale for C64 {
    fn cscale(self, z: C64) -> Self {
        self * z
    }
}

impl<X: CScale, const K: usize> CScale for [X; K] {
    fn cscale(self, z: C64) -> Self {
        let mut r = self;
        for v in r.iter_mut() {
            *v = v.cscale(z);
        }
        r
    }
}

/// Lower the target index: `(G v)_I = G_IJ v^J`.
#[inline]
pub fn lower<X: Lin>(g: &M2, v: &[X; M]) -> [X; M] {
    let mut r = [X::zero(); M];
    for i in 0..M {
        for j in 0..M {
            r[i] = r[i].axpy(g[i][j], v[j]);
        }
    }
    r
}

/// `A v` with `A` a real 2x2 matrix on the target index.
#[inline]
pub fn mat_apply<X: Lin>(a: &M2, v: &[X; M]) -> [X; M] {
    lower(a, v)
}

/// `A^T v`.
#[inline]
pub fn mat_t_apply<X: Lin>(a: &M2, v: &[X; M]) -> [X; M] {
    let mut r = [X::zero(); M];
    for i in 0..M {
        for j in 0..M {
            r[i] = r[i].axpy(a[j][i], v[j]);
        }
    }
    r
}

pub fn inv2(g: &M2) -> M2 {
    let det = g[0][0] * g[1][1] - g[0][1] * g[1][0];
    [
        [g[1][1] / det, -g[0][1] / det],
        [-g[1][0] / det, g[0][0] / det],
    ]
}

#[inline]
pub fn gdot(g: &M2, u: &V2, v: &V2) -> f64 {
    let mut s = 0.0;
    for i in 0..M {
        for j in 0..M {
            s += g[i][j] * u[i] * v[j];
        }
    }
    s
}

// ---------------------------------------------------------------------------
// complex 2x2 matrices and spinors

pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

#[inline]
pub fn mat_sp(m: &Mat2c, v: &Sp) -> Sp {
    [
        m[0][0] * v[0] + m[0][1] * v[1],
        m[1][0] * v[0] + m[1][1] * v[1],
    ]
}

/// Apply a spinor matrix to every target component of a vector spinor.
#[inline]
pub fn mat_vsp(m: &Mat2c, v: &VSp) -> VSp {
    let mut r = [[ZERO_C; 2]; M];
    for i in 0..M {
        r[i] = mat_sp(m, &v[i]);
    }
    r
}

pub fn mat_mul(a: &Mat2c, b: &Mat2c) -> Mat2c {
    let mut r = [[ZERO_C; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            for k in 0..2 {
                r[i][j] += a[i][k] * b[k][j];
            }
        }
    }
    r
}

pub fn mat_add(a: &Mat2c, b: &Mat2c) -> Mat2c {
    let mut r = *a;
    for i in 0..2 {
        for j in 0..2 {
            r[i][j] += b[i][j];
        }
    }
    r
}

pub fn mat_scale(a: &Mat2c, z: C64) -> Mat2c {
    let mut r = *a;
    for row in r.iter_mut() {
        for v in row.iter_mut() {
            *v *= z;
        }
    }
    r
}

pub fn mat_adjoint(a: &Mat2c) -> Mat2c {
    [[a[0][0].conj(), a[1][0].conj()], [a[0][1].conj(), a[1][1].conj()]]
}

pub fn mat_identity() -> Mat2c {
    [[c(1.0, 0.0), ZERO_C], [ZERO_C, c(1.0, 0.0)]]
}

pub fn mat_max_abs(a: &Mat2c) -> f64 {
    a.iter().flatten().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Hermitian form `u^dagger v`.
#[inline]
pub fn herm(u: &Sp, v: &Sp) -> C64 {
    u[0].conj() * v[0] + u[1].conj() * v[1]
}
