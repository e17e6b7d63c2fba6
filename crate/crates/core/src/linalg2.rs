//! Two-dimensional real vectors and matrices, plus the planar angle helpers
//! the rest of the crate is built on.

use std::f64::consts::PI;
use std::ops::{Add, Mul, Neg, Sub};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("matrix has a real spectrum (trace^2 = {trace_sq} >= 4 det = {four_det})")]
    RealSpectrum { trace_sq: f64, four_det: f64 },
    #[error("zero vector has no direction")]
    ZeroVector,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const E1: Vec2 = Vec2 { x: 1.0, y: 0.0 };
    pub const E2: Vec2 = Vec2 { x: 0.0, y: 1.0 };

    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    /// Unit vector at `angle` radians from the positive x-axis.
    pub fn from_angle(angle: f64) -> Self {
        let (s, c) = angle.sin_cos();
        Self { x: c, y: s }
    }

    pub fn dot(self, other: Vec2) -> f64 {
        self.x * other.x + self.y * other.y
    }

    /// z-component of the 3D cross product.
    pub fn cross(self, other: Vec2) -> f64 {
        self.x * other.y - self.y * other.x
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn norm_sq(self) -> f64 {
        self.dot(self)
    }

    /// Polar angle in (-pi, pi].
    pub fn angle(self) -> f64 {
        self.y.atan2(self.x)
    }

    pub fn scale(self, s: f64) -> Self {
        Self { x: self.x * s, y: self.y * s }
    }

    pub fn normalized(self) -> Result<Self, LinalgError> {
        let n = self.norm();
        if n == 0.0 || !n.is_finite() {
            return Err(LinalgError::ZeroVector);
        }
        Ok(self.scale(1.0 / n))
    }

    /// Counter-clockwise quarter turn.
    pub fn perp(self) -> Self {
        Self { x: -self.y, y: self.x }
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

impl Add for Vec2 {
    type Output = Vec2;
    fn add(self, rhs: Vec2) -> Vec2 {
        Vec2::new(self.x + rhs.x, self.y + rhs.y)
    }
}

impl Sub for Vec2 {
    type Output = Vec2;
    fn sub(self, rhs: Vec2) -> Vec2 {
        Vec2::new(self.x - rhs.x, self.y - rhs.y)
    }
}

impl Neg for Vec2 {
    type Output = Vec2;
    fn neg(self) -> Vec2 {
        Vec2::new(-self.x, -self.y)
    }
}

/// Row-major 2x2 matrix `[[a, b], [c, d]]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Mat2 {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
}

impl Mat2 {
    pub const IDENTITY: Mat2 = Mat2 { a: 1.0, b: 0.0, c: 0.0, d: 1.0 };
    pub const ZERO: Mat2 = Mat2 { a: 0.0, b: 0.0, c: 0.0, d: 0.0 };
    /// Projection onto the second coordinate, `[[0, 0], [0, 1]]`.
    pub const E22: Mat2 = Mat2 { a: 0.0, b: 0.0, c: 0.0, d: 1.0 };

    pub const fn new(a: f64, b: f64, c: f64, d: f64) -> Self {
        Self { a, b, c, d }
    }

    pub fn from_cols(c0: Vec2, c1: Vec2) -> Self {
        Self::new(c0.x, c1.x, c0.y, c1.y)
    }

    pub fn col(&self, j: usize) -> Vec2 {
        match j {
            0 => Vec2::new(self.a, self.c),
            1 => Vec2::new(self.b, self.d),
            _ => panic!("Mat2 column index {j} out of range"),
        }
    }

    pub fn row(&self, i: usize) -> Vec2 {
        match i {
            0 => Vec2::new(self.a, self.b),
            1 => Vec2::new(self.c, self.d),
            _ => panic!("Mat2 row index {i} out of range"),
        }
    }

    pub fn det(&self) -> f64 {
        self.a * self.d - self.b * self.c
    }

    pub fn trace(&self) -> f64 {
        self.a + self.d
    }

    pub fn transpose(&self) -> Self {
        Self::new(self.a, self.c, self.b, self.d)
    }

    pub fn inverse(&self) -> Option<Self> {
        let det = self.det();
        if det == 0.0 || !det.is_finite() {
            return None;
        }
        let r = 1.0 / det;
        Some(Self::new(self.d * r, -self.b * r, -self.c * r, self.a * r))
    }

    pub fn scale(&self, s: f64) -> Self {
        Self::new(self.a * s, self.b * s, self.c * s, self.d * s)
    }

    /// Frobenius norm.
    pub fn norm(&self) -> f64 {
        (self.a * self.a + self.b * self.b + self.c * self.c + self.d * self.d).sqrt()
    }

    /// Largest and smallest singular values, in that order.
    pub fn singular_values(&self) -> (f64, f64) {
        // sigma_max^2 + sigma_min^2 = ||A||_F^2 and sigma_max * sigma_min = |det A|.
        let f2 = self.a * self.a + self.b * self.b + self.c * self.c + self.d * self.d;
        let det = self.det().abs();
        let disc = ((f2 - 2.0 * det) * (f2 + 2.0 * det)).max(0.0).sqrt();
        let s_max = (0.5 * (f2 + disc)).sqrt();
        let s_min = if s_max > 0.0 { det / s_max } else { 0.0 };
        (s_max, s_min)
    }

    /// Spectral-norm condition number; infinite for singular matrices.
    pub fn condition_number(&self) -> f64 {
        let (hi, lo) = self.singular_values();
        if lo == 0.0 {
            f64::INFINITY
        } else {
            hi / lo
        }
    }

    /// Outer product `u v^T`.
    pub fn outer(u: Vec2, v: Vec2) -> Self {
        Self::new(u.x * v.x, u.x * v.y, u.y * v.x, u.y * v.y)
    }

    pub fn is_finite(&self) -> bool {
        self.a.is_finite() && self.b.is_finite() && self.c.is_finite() && self.d.is_finite()
    }
}

impl Mul for Mat2 {
    type Output = Mat2;
    fn mul(self, r: Mat2) -> Mat2 {
        Mat2::new(
            self.a * r.a + self.b * r.c,
            self.a * r.b + self.b * r.d,
            self.c * r.a + self.d * r.c,
            self.c * r.b + self.d * r.d,
        )
    }
}

impl Mul<Vec2> for Mat2 {
    type Output = Vec2;
    fn mul(self, v: Vec2) -> Vec2 {
        Vec2::new(self.a * v.x + self.b * v.y, self.c * v.x + self.d * v.y)
    }
}

impl Add for Mat2 {
    type Output = Mat2;
    fn add(self, r: Mat2) -> Mat2 {
        Mat2::new(self.a + r.a, self.b + r.b, self.c + r.c, self.d + r.d)
    }
}

impl Sub for Mat2 {
    type Output = Mat2;
    fn sub(self, r: Mat2) -> Mat2 {
        Mat2::new(self.a - r.a, self.b - r.b, self.c - r.c, self.d - r.d)
    }
}

/// Rotation by `theta` radians: `[[cos, -sin], [sin, cos]]`.
pub fn rotation(theta: f64) -> Mat2 {
    let (s, c) = theta.sin_cos();
    Mat2::new(c, -s, s, c)
}

/// An eigenvalue on the upper branch together with one of its eigenvectors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ComplexEigPair {
    pub eigenvalue: Complex64,
    pub eigenvector: [Complex64; 2],
}

impl ComplexEigPair {
    /// Real and imaginary parts of the eigenvector as real 2-vectors.
    pub fn re_im(&self) -> (Vec2, Vec2) {
        let [v0, v1] = self.eigenvector;
        (Vec2::new(v0.re, v1.re), Vec2::new(v0.im, v1.im))
    }

    /// `||m v - mu v||` for the stored pair.
    pub fn residual(&self, m: &Mat2) -> f64 {
        let [v0, v1] = self.eigenvector;
        let mu = self.eigenvalue;
        let r0 = v0 * m.a + v1 * m.b - mu * v0;
        let r1 = v0 * m.c + v1 * m.d - mu * v1;
        (r0.norm_sqr() + r1.norm_sqr()).sqrt()
    }
}

/// Eigenvalue with positive imaginary part of a real matrix with a
/// complex-conjugate spectrum, and an eigenvector for it.
pub fn complex_eig(m: &Mat2) -> Result<ComplexEigPair, LinalgError> {
    let tr = m.trace();
    let det = m.det();
    let half = 0.5 * tr;
    let gap = det - half * half;
    if !(gap > 0.0) {
        return Err(LinalgError::RealSpectrum { trace_sq: tr * tr, four_det: 4.0 * det });
    }
    let mu = Complex64::new(half, gap.sqrt());

    // (m - mu) v = 0. Either row gives a null vector; take the better scaled one.
    let from_row0 = [Complex64::new(m.b, 0.0), mu - m.a];
    let from_row1 = [mu - m.d, Complex64::new(m.c, 0.0)];
    let n0 = from_row0[0].norm_sqr() + from_row0[1].norm_sqr();
    let n1 = from_row1[0].norm_sqr() + from_row1[1].norm_sqr();
    let v = if n0 >= n1 { from_row0 } else { from_row1 };
    let n = n0.max(n1).sqrt();
    Ok(ComplexEigPair { eigenvalue: mu, eigenvector: [v[0] / n, v[1] / n] })
}

/// Unsigned angle in [0, pi] between the directions of `u` and `v`.
pub fn angular_distance(u: Vec2, v: Vec2) -> Result<f64, LinalgError> {
    if u.norm() == 0.0 || v.norm() == 0.0 {
        return Err(LinalgError::ZeroVector);
    }
    Ok(u.cross(v).abs().atan2(u.dot(v)))
}

/// Reduces an angle to [0, 2 pi).
pub fn wrap_two_pi(angle: f64) -> f64 {
    let r = angle.rem_euclid(2.0 * PI);
    if r >= 2.0 * PI {
        0.0
    } else {
        r
    }
}

/// Reduces an angle to (-pi, pi].
pub fn wrap_pi(angle: f64) -> f64 {
    let r = wrap_two_pi(angle);
    if r > PI {
        r - 2.0 * PI
    } else {
        r
    }
}
