//! Small fixed-size linear algebra in f64.
//!
//! Matrices are row-major everywhere in this crate: `m[r][c]`, and
//! `mat * vec` treats `vec` as a column vector.

pub mod camera;
pub mod sh;

pub use camera::Camera;

use std::ops::{Add, AddAssign, Div, Mul, Neg, Sub, SubAssign};

/// Points below this camera-space depth count as behind the camera.
pub const Z_NEAR: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const ZERO: Vec2 = Vec2 { x: 0.0, y: 0.0 };

    pub const fn new(x: f64, y: f64) -> Self {
        Vec2 { x, y }
    }

    pub fn dot(self, o: Vec2) -> f64 {
        self.x * o.x + self.y * o.y
    }

    pub fn norm(self) -> f64 {
        self.dot(self).sqrt()
    }
}

impl Add for Vec2 {
    type Output = Vec2;
    fn add(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x + o.x, self.y + o.y)
    }
}

impl Sub for Vec2 {
    type Output = Vec2;
    fn sub(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x - o.x, self.y - o.y)
    }
}

impl Mul<f64> for Vec2 {
    type Output = Vec2;
    fn mul(self, s: f64) -> Vec2 {
        Vec2::new(self.x * s, self.y * s)
    }
}

impl AddAssign for Vec2 {
    fn add_assign(&mut self, o: Vec2) {
        self.x += o.x;
        self.y += o.y;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Vec3 {
    pub const ZERO: Vec3 = Vec3 { x: 0.0, y: 0.0, z: 0.0 };

    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Vec3 { x, y, z }
    }

    pub const fn splat(v: f64) -> Self {
        Vec3 { x: v, y: v, z: v }
    }

    pub fn dot(self, o: Vec3) -> f64 {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    pub fn cross(self, o: Vec3) -> Vec3 {
        Vec3::new(
            self.y * o.z - self.z * o.y,
            self.z * o.x - self.x * o.z,
            self.x * o.y - self.y * o.x,
        )
    }

    pub fn norm_sq(self) -> f64 {
        self.dot(self)
    }

    pub fn norm(self) -> f64 {
        self.dot(self).sqrt()
    }

    /// Unit vector; returns `None` when the norm is not safely invertible.
    pub fn normalized(self) -> Option<Vec3> {
        let n = self.norm();
        if n > 1e-12 {
            Some(self * (1.0 / n))
        } else {
            None
        }
    }

    pub fn min_component(self) -> f64 {
        self.x.min(self.y).min(self.z)
    }

    pub fn max_component(self) -> f64 {
        self.x.max(self.y).max(self.z)
    }

    pub fn get(self, i: usize) -> f64 {
        match i {
            0 => self.x,
            1 => self.y,
            2 => self.z,
            _ => panic!("Vec3 index {i} out of range"),
        }
    }

    pub fn set(&mut self, i: usize, v: f64) {
        match i {
            0 => self.x = v,
            1 => self.y = v,
            2 => self.z = v,
            _ => panic!("Vec3 index {i} out of range"),
        }
    }

    pub fn map(self, f: impl Fn(f64) -> f64) -> Vec3 {
        Vec3::new(f(self.x), f(self.y), f(self.z))
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }
}

impl Add for Vec3 {
    type Output = Vec3;
    fn add(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl Sub for Vec3 {
    type Output = Vec3;
    fn sub(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl Neg for Vec3 {
    type Output = Vec3;
    fn neg(self) -> Vec3 {
        Vec3::new(-self.x, -self.y, -self.z)
    }
}

impl Mul<f64> for Vec3 {
    type Output = Vec3;
    fn mul(self, s: f64) -> Vec3 {
        Vec3::new(self.x * s, self.y * s, self.z * s)
    }
}

impl Div<f64> for Vec3 {
    type Output = Vec3;
    fn div(self, s: f64) -> Vec3 {
        Vec3::new(self.x / s, self.y / s, self.z / s)
    }
}

impl AddAssign for Vec3 {
    fn add_assign(&mut self, o: Vec3) {
        self.x += o.x;
        self.y += o.y;
        self.z += o.z;
    }
}

impl SubAssign for Vec3 {
    fn sub_assign(&mut self, o: Vec3) {
        self.x -= o.x;
        self.y -= o.y;
        self.z -= o.z;
    }
}

/// Row-major 2x2 matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mat2 {
    pub m: [[f64; 2]; 2],
}

impl Mat2 {
    pub const fn new(m00: f64, m01: f64, m10: f64, m11: f64) -> Self {
        Mat2 { m: [[m00, m01], [m10, m11]] }
    }

    pub const fn identity() -> Self {
        Mat2::new(1.0, 0.0, 0.0, 1.0)
    }

    pub const fn zero() -> Self {
        Mat2::new(0.0, 0.0, 0.0, 0.0)
    }

    pub fn det(self) -> f64 {
        self.m[0][0] * self.m[1][1] - self.m[0][1] * self.m[1][0]
    }

    pub fn trace(self) -> f64 {
        self.m[0][0] + self.m[1][1]
    }

    /// Inverse; `None` when |det| is below 1e-14.
    pub fn inverse(self) -> Option<Mat2> {
        let d = self.det();
        if d.abs() < 1e-14 {
            return None;
        }
        let inv = 1.0 / d;
        Some(Mat2::new(
            self.m[1][1] * inv,
            -self.m[0][1] * inv,
            -self.m[1][0] * inv,
            self.m[0][0] * inv,
        ))
    }

    /// Eigenvalues of a symmetric 2x2, largest first.
    pub fn sym_eigenvalues(self) -> (f64, f64) {
        let half_tr = 0.5 * self.trace();
        let disc = (half_tr * half_tr - self.det()).max(0.0).sqrt();
        (half_tr + disc, half_tr - disc)
    }

    pub fn mul_vec(self, v: Vec2) -> Vec2 {
        Vec2::new(
            self.m[0][0] * v.x + self.m[0][1] * v.y,
            self.m[1][0] * v.x + self.m[1][1] * v.y,
        )
    }

    pub fn mul_mat(self, o: Mat2) -> Mat2 {
        Mat2::new(
            self.m[0][0] * o.m[0][0] + self.m[0][1] * o.m[1][0],
            self.m[0][0] * o.m[0][1] + self.m[0][1] * o.m[1][1],
            self.m[1][0] * o.m[0][0] + self.m[1][1] * o.m[1][0],
            self.m[1][0] * o.m[0][1] + self.m[1][1] * o.m[1][1],
        )
    }

    pub fn scale(self, s: f64) -> Mat2 {
        Mat2::new(self.m[0][0] * s, self.m[0][1] * s, self.m[1][0] * s, self.m[1][1] * s)
    }

    pub fn is_finite(self) -> bool {
        self.m.iter().flatten().all(|v| v.is_finite())
    }
}

impl Add for Mat2 {
    type Output = Mat2;
    fn add(self, o: Mat2) -> Mat2 {
        Mat2::new(
            self.m[0][0] + o.m[0][0],
            self.m[0][1] + o.m[0][1],
            self.m[1][0] + o.m[1][0],
            self.m[1][1] + o.m[1][1],
        )
    }
}

/// Row-major 3x3 matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mat3 {
    pub m: [[f64; 3]; 3],
}

impl Mat3 {
    pub const fn from_rows(r0: [f64; 3], r1: [f64; 3], r2: [f64; 3]) -> Self {
        Mat3 { m: [r0, r1, r2] }
    }

    pub const fn identity() -> Self {
        Mat3::from_rows([1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0])
    }

    pub const fn zero() -> Self {
        Mat3::from_rows([0.0; 3], [0.0; 3], [0.0; 3])
    }

    pub fn diagonal(d: Vec3) -> Self {
        Mat3::from_rows([d.x, 0.0, 0.0], [0.0, d.y, 0.0], [0.0, 0.0, d.z])
    }

    pub fn transpose(self) -> Mat3 {
        let m = self.m;
        Mat3::from_rows(
            [m[0][0], m[1][0], m[2][0]],
            [m[0][1], m[1][1], m[2][1]],
            [m[0][2], m[1][2], m[2][2]],
        )
    }

    pub fn row(self, r: usize) -> Vec3 {
        Vec3::new(self.m[r][0], self.m[r][1], self.m[r][2])
    }

    pub fn col(self, c: usize) -> Vec3 {
        Vec3::new(self.m[0][c], self.m[1][c], self.m[2][c])
    }

    pub fn mul_vec(self, v: Vec3) -> Vec3 {
        Vec3::new(self.row(0).dot(v), self.row(1).dot(v), self.row(2).dot(v))
    }

    pub fn mul_mat(self, o: Mat3) -> Mat3 {
        let mut r = [[0.0; 3]; 3];
        for (i, row) in r.iter_mut().enumerate() {
            for (j, cell) in row.iter_mut().enumerate() {
                *cell = self.row(i).dot(o.col(j));
            }
        }
        Mat3 { m: r }
    }

    /// a * b^T
    pub fn outer(a: Vec3, b: Vec3) -> Mat3 {
        Mat3::from_rows(
            [a.x * b.x, a.x * b.y, a.x * b.z],
            [a.y * b.x, a.y * b.y, a.y * b.z],
            [a.z * b.x, a.z * b.y, a.z * b.z],
        )
    }

    pub fn det(self) -> f64 {
        self.row(0).dot(self.row(1).cross(self.row(2)))
    }

    pub fn scale(self, s: f64) -> Mat3 {
        let mut m = self.m;
        for row in &mut m {
            for v in row {
                *v *= s;
            }
        }
        Mat3 { m }
    }

    pub fn is_finite(self) -> bool {
        self.m.iter().flatten().all(|v| v.is_finite())
    }

    /// Max |R R^T - I| entry; 0 for a perfect rotation.
    pub fn orthonormality_error(self) -> f64 {
        let g = self.mul_mat(self.transpose());
        let mut e: f64 = 0.0;
        for i in 0..3 {
            for j in 0..3 {
                let want = if i == j { 1.0 } else { 0.0 };
                e = e.max((g.m[i][j] - want).abs());
            }
        }
        e
    }
}

impl Add for Mat3 {
    type Output = Mat3;
    fn add(self, o: Mat3) -> Mat3 {
        let mut m = self.m;
        for i in 0..3 {
            for j in 0..3 {
                m[i][j] += o.m[i][j];
            }
        }
        Mat3 { m }
    }
}

/// Rotation quaternion, scalar part first. Kept near unit length by the
/// trainer; activation normalizes before use so gradients stay exact.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quat {
    pub w: f64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Quat {
    pub const IDENTITY: Quat = Quat { w: 1.0, x: 0.0, y: 0.0, z: 0.0 };

    pub const fn new(w: f64, x: f64, y: f64, z: f64) -> Self {
        Quat { w, x, y, z }
    }

    pub fn norm(self) -> f64 {
        (self.w * self.w + self.x * self.x + self.y * self.y + self.z * self.z).sqrt()
    }

    pub fn normalized(self) -> Quat {
        let n = self.norm();
        assert!(n > 1e-12, "cannot normalize near-zero quaternion");
        Quat::new(self.w / n, self.x / n, self.y / n, self.z / n)
    }

    /// Rotation taking unit vector `from` to unit vector `to`.
    pub fn from_to(from: Vec3, to: Vec3) -> Quat {
        let c = from.cross(to);
        let d = from.dot(to);
        if d < -1.0 + 1e-12 {
            // Antipodal: rotate half a turn around any axis orthogonal to `from`.
            let axis = if from.x.abs() < 0.9 {
                from.cross(Vec3::new(1.0, 0.0, 0.0))
            } else {
                from.cross(Vec3::new(0.0, 1.0, 0.0))
            }
            .normalized()
            .expect("orthogonal axis");
            return Quat::new(0.0, axis.x, axis.y, axis.z);
        }
        Quat::new(1.0 + d, c.x, c.y, c.z).normalized()
    }

    pub fn from_axis_angle(axis: Vec3, angle: f64) -> Quat {
        let a = axis.normalized().expect("rotation axis must be nonzero");
        let (s, c) = (0.5 * angle).sin_cos();
        Quat::new(c, a.x * s, a.y * s, a.z * s)
    }

    pub fn is_finite(self) -> bool {
        self.w.is_finite() && self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    /// Hamilton product; R(a.mul_quat(b)) == R(a) R(b).
    pub fn mul_quat(self, o: Quat) -> Quat {
        Quat::new(
            self.w * o.w - self.x * o.x - self.y * o.y - self.z * o.z,
            self.w * o.x + self.x * o.w + self.y * o.z - self.z * o.y,
            self.w * o.y - self.x * o.z + self.y * o.w + self.z * o.x,
            self.w * o.z + self.x * o.y - self.y * o.x + self.z * o.w,
        )
    }
}

/// Rotation matrix of a unit quaternion. R(q) == R(-q).
pub fn quat_to_rotmat(q: Quat) -> Mat3 {
    let Quat { w, x, y, z } = q;
    Mat3::from_rows(
        [
            1.0 - 2.0 * (y * y + z * z),
            2.0 * (x * y - w * z),
            2.0 * (x * z + w * y),
        ],
        [
            2.0 * (x * y + w * z),
            1.0 - 2.0 * (x * x + z * z),
            2.0 * (y * z - w * x),
        ],
        [
            2.0 * (x * z - w * y),
            2.0 * (y * z + w * x),
            1.0 - 2.0 * (x * x + y * y),
        ],
    )
}

/// Partial derivatives of `quat_to_rotmat` w.r.t. (w, x, y, z) at a unit q.
pub fn quat_to_rotmat_jacobian(q: Quat) -> [Mat3; 4] {
    let Quat { w, x, y, z } = q;
    let dw = Mat3::from_rows([0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]).scale(2.0);
    let dx = Mat3::from_rows([0.0, y, z], [y, -2.0 * x, -w], [z, w, -2.0 * x]).scale(2.0);
    let dy = Mat3::from_rows([-2.0 * y, x, w], [x, 0.0, z], [-w, z, -2.0 * y]).scale(2.0);
    let dz = Mat3::from_rows([-2.0 * z, -w, x], [w, -2.0 * z, y], [x, y, 0.0]).scale(2.0);
    [dw, dx, dy, dz]
}

pub fn sigmoid(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

/// Inverse of `sigmoid`; input must lie strictly in (0, 1).
pub fn logit(p: f64) -> f64 {
    assert!(p > 0.0 && p < 1.0, "logit domain is (0, 1), got {p}");
    (p / (1.0 - p)).ln()
}
