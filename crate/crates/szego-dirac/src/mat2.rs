//! Dense 2x2 complex matrices.

use num_complex::Complex64 as C64;
use std::ops::{Add, Mul, Sub};

/// Row-major 2x2 complex matrix `[[m[0], m[1]], [m[2], m[3]]]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Mat2(pub [C64; 4]);

impl Mat2 {
    pub const fn new(a: C64, b: C64, c: C64, d: C64) -> Self {
        Mat2([a, b, c, d])
    }

    pub fn real(a: f64, b: f64, c: f64, d: f64) -> Self {
        Mat2([a.into(), b.into(), c.into(), d.into()])
    }

    pub fn identity() -> Self {
        Self::real(1.0, 0.0, 0.0, 1.0)
    }

    pub fn zero() -> Self {
        Self::real(0.0, 0.0, 0.0, 0.0)
    }

    /// The symplectic unit `[[0, -1], [1, 0]]`.
    pub fn j() -> Self {
        Self::real(0.0, -1.0, 1.0, 0.0)
    }

    pub fn det(&self) -> C64 {
        self.0[0] * self.0[3] - self.0[1] * self.0[2]
    }

    pub fn trace(&self) -> C64 {
        self.0[0] + self.0[3]
    }

    pub fn adjoint(&self) -> Self {
        Mat2([self.0[0].conj(), self.0[2].conj(), self.0[1].conj(), self.0[3].conj()])
    }

    pub fn transpose(&self) -> Self {
        Mat2([self.0[0], self.0[2], self.0[1], self.0[3]])
    }

    pub fn scale(&self, s: C64) -> Self {
        Mat2(self.0.map(|v| v * s))
    }

    pub fn inverse(&self) -> Option<Self> {
        let d = self.det();
        if d.norm() == 0.0 {
            return None;
        }
        Some(Mat2([self.0[3] / d, -self.0[1] / d, -self.0[2] / d, self.0[0] / d]))
    }

    pub fn apply(&self, v: [C64; 2]) -> [C64; 2] {
        [self.0[0] * v[0] + self.0[1] * v[1], self.0[2] * v[0] + self.0[3] * v[1]]
    }

    pub fn frobenius(&self) -> f64 {
        self.0.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Spectral (operator 2-) norm.
    pub fn op_norm(&self) -> f64 {
        let f2 = self.0.iter().map(|v| v.norm_sqr()).sum::<f64>();
        let d = self.det().norm();
        let disc = (f2 * f2 - 4.0 * d * d).max(0.0).sqrt();
        (0.5 * (f2 + disc)).sqrt()
    }

    /// Smallest singular value.
    pub fn min_singular(&self) -> f64 {
        let s = self.op_norm();
        if s == 0.0 {
            0.0
        } else {
            self.det().norm() / s
        }
    }
}

impl Mul for Mat2 {
    type Output = Mat2;
    fn mul(self, o: Mat2) -> Mat2 {
        let a = &self.0;
        let b = &o.0;
        Mat2([
            a[0] * b[0] + a[1] * b[2],
            a[0] * b[1] + a[1] * b[3],
            a[2] * b[0] + a[3] * b[2],
            a[2] * b[1] + a[3] * b[3],
        ])
    }
}

impl Add for Mat2 {
    type Output = Mat2;
    fn add(self, o: Mat2) -> Mat2 {
        Mat2([self.0[0] + o.0[0], self.0[1] + o.0[1], self.0[2] + o.0[2], self.0[3] + o.0[3]])
    }
}

impl Sub for Mat2 {
    type Output = Mat2;
    fn sub(self, o: Mat2) -> Mat2 {
        Mat2([self.0[0] - o.0[0], self.0[1] - o.0[1], self.0[2] - o.0[2], self.0[3] - o.0[3]])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn op_norm_of_diagonal() {
        let m = Mat2::real(3.0, 0.0, 0.0, -0.5);
        assert_relative_eq!(m.op_norm(), 3.0, epsilon = 1e-14);
        assert_relative_eq!(m.min_singular(), 0.5, epsilon = 1e-14);
    }

    #[test]
    fn inverse_roundtrip() {
        let m = Mat2::new(C64::new(1.0, 2.0), C64::new(0.5, 0.0), C64::new(-1.0, 1.0), C64::new(2.0, -0.3));
        let p = m * m.inverse().unwrap();
        assert!((p - Mat2::identity()).frobenius() < 1e-14);
    }

    #[test]
    fn j_squares_to_minus_identity() {
        let j = Mat2::j();
        assert!((j * j + Mat2::identity()).frobenius() == 0.0);
    }
}
