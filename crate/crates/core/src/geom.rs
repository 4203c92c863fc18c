//! Vector and quaternion algebra shared by the whole pipeline.
//!
//! World frame is right-handed with +Z up; gravity points along -Z. Euler
//! angles use the intrinsic Z-Y-X (yaw, pitch, roll) convention, in degrees.
//! Quaternions are stored `(w, x, y, z)` and map body coordinates into the
//! world frame.

use std::ops::{Add, AddAssign, Div, Mul, Neg, Sub, SubAssign};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Vec3 {
    pub const ZERO: Vec3 = Vec3::new(0.0, 0.0, 0.0);
    pub const X: Vec3 = Vec3::new(1.0, 0.0, 0.0);
    pub const Y: Vec3 = Vec3::new(0.0, 1.0, 0.0);
    pub const Z: Vec3 = Vec3::new(0.0, 0.0, 1.0);

    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
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

    pub fn norm(self) -> f64 {
        self.dot(self).sqrt()
    }

    /// Unit vector in the same direction, or `None` for a (near) zero vector.
    pub fn normalized(self) -> Option<Vec3> {
        let n = self.norm();
        if n > 1e-300 && n.is_finite() {
            Some(self / n)
        } else {
            None
        }
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    pub fn from_array(a: [f64; 3]) -> Self {
        Self::new(a[0], a[1], a[2])
    }
}

impl Add for Vec3 {
    type Output = Vec3;
    fn add(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl AddAssign for Vec3 {
    fn add_assign(&mut self, o: Vec3) {
        *self = *self + o;
    }
}

impl Sub for Vec3 {
    type Output = Vec3;
    fn sub(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl SubAssign for Vec3 {
    fn sub_assign(&mut self, o: Vec3) {
        *self = *self - o;
    }
}

impl Mul<f64> for Vec3 {
    type Output = Vec3;
    fn mul(self, s: f64) -> Vec3 {
        Vec3::new(self.x * s, self.y * s, self.z * s)
    }
}

impl Mul<Vec3> for f64 {
    type Output = Vec3;
    fn mul(self, v: Vec3) -> Vec3 {
        v * self
    }
}

impl Div<f64> for Vec3 {
    type Output = Vec3;
    fn div(self, s: f64) -> Vec3 {
        Vec3::new(self.x / s, self.y / s, self.z / s)
    }
}

impl Neg for Vec3 {
    type Output = Vec3;
    fn neg(self) -> Vec3 {
        Vec3::new(-self.x, -self.y, -self.z)
    }
}

/// Unit quaternion `(w, x, y, z)`. Every constructor renormalizes, so the
/// norm stays within 1e-6 of one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(into = "[f64; 4]", try_from = "[f64; 4]")]
pub struct UnitQuat {
    w: f64,
    x: f64,
    y: f64,
    z: f64,
}

impl From<UnitQuat> for [f64; 4] {
    fn from(q: UnitQuat) -> Self {
        q.to_array()
    }
}

impl TryFrom<[f64; 4]> for UnitQuat {
    type Error = Error;
    fn try_from(a: [f64; 4]) -> Result<Self> {
        UnitQuat::from_components(a[0], a[1], a[2], a[3])
    }
}

impl Default for UnitQuat {
    fn default() -> Self {
        Self::IDENTITY
    }
}

impl UnitQuat {
    pub const IDENTITY: UnitQuat = UnitQuat {
        w: 1.0,
        x: 0.0,
        y: 0.0,
        z: 0.0,
    };

    /// Normalizes arbitrary components. Fails on zero or non-finite input.
    pub fn from_components(w: f64, x: f64, y: f64, z: f64) -> Result<Self> {
        let n = (w * w + x * x + y * y + z * z).sqrt();
        if !(n.is_finite() && n > 1e-12) {
            return Err(Error::DegenerateQuaternion);
        }
        Ok(Self {
            w: w / n,
            x: x / n,
            y: y / n,
            z: z / n,
        })
    }

    fn renormalized(w: f64, x: f64, y: f64, z: f64) -> Self {
        let n = (w * w + x * x + y * y + z * z).sqrt();
        Self {
            w: w / n,
            x: x / n,
            y: y / n,
            z: z / n,
        }
    }

    pub fn w(&self) -> f64 {
        self.w
    }
    pub fn x(&self) -> f64 {
        self.x
    }
    pub fn y(&self) -> f64 {
        self.y
    }
    pub fn z(&self) -> f64 {
        self.z
    }

    pub fn to_array(self) -> [f64; 4] {
        [self.w, self.x, self.y, self.z]
    }

    pub fn norm(self) -> f64 {
        (self.w * self.w + self.x * self.x + self.y * self.y + self.z * self.z).sqrt()
    }

    /// Rotation of `angle_deg` about `axis` (right-hand rule).
    pub fn from_axis_angle(axis: Vec3, angle_deg: f64) -> Result<Self> {
        let a = axis.normalized().ok_or(Error::DegenerateVector)?;
        let half = angle_deg.to_radians() * 0.5;
        let s = half.sin();
        Ok(Self::renormalized(half.cos(), a.x * s, a.y * s, a.z * s))
    }

    /// Exponential map of a rotation vector given in radians.
    pub fn from_rotation_vector(rv: Vec3) -> Self {
        let theta = rv.norm();
        if theta < 1e-8 {
            // second-order series keeps the map smooth near zero
            let h = rv * 0.5;
            return Self::renormalized(1.0 - theta * theta / 8.0, h.x, h.y, h.z);
        }
        let half = 0.5 * theta;
        let s = half.sin() / theta;
        Self::renormalized(half.cos(), rv.x * s, rv.y * s, rv.z * s)
    }

    /// Logarithm map: the rotation vector (radians) with angle in [0, pi].
    pub fn to_rotation_vector(self) -> Vec3 {
        let (w, v) = if self.w < 0.0 {
            (-self.w, Vec3::new(-self.x, -self.y, -self.z))
        } else {
            (self.w, Vec3::new(self.x, self.y, self.z))
        };
        let s = v.norm();
        if s < 1e-12 {
            return v * 2.0;
        }
        let angle = 2.0 * s.atan2(w);
        v * (angle / s)
    }

    pub fn conjugate(self) -> Self {
        Self {
            w: self.w,
            x: -self.x,
            y: -self.y,
            z: -self.z,
        }
    }

    pub fn inverse(self) -> Self {
        self.conjugate()
    }

    pub fn rotate_vector(self, v: Vec3) -> Vec3 {
        let u = Vec3::new(self.x, self.y, self.z);
        let t = u.cross(v) * 2.0;
        v + t * self.w + u.cross(t)
    }

    /// Row-major rotation matrix; columns are the body axes in world frame.
    pub fn to_matrix(self) -> [[f64; 3]; 3] {
        let (w, x, y, z) = (self.w, self.x, self.y, self.z);
        [
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
        ]
    }

    /// Quaternion from a proper rotation matrix (row-major).
    pub fn from_matrix(m: [[f64; 3]; 3]) -> Result<Self> {
        let trace = m[0][0] + m[1][1] + m[2][2];
        let (w, x, y, z) = if trace > 0.0 {
            let s = (trace + 1.0).sqrt() * 2.0;
            (
                0.25 * s,
                (m[2][1] - m[1][2]) / s,
                (m[0][2] - m[2][0]) / s,
                (m[1][0] - m[0][1]) / s,
            )
        } else if m[0][0] > m[1][1] && m[0][0] > m[2][2] {
            let s = (1.0 + m[0][0] - m[1][1] - m[2][2]).sqrt() * 2.0;
            (
                (m[2][1] - m[1][2]) / s,
                0.25 * s,
                (m[0][1] + m[1][0]) / s,
                (m[0][2] + m[2][0]) / s,
            )
        } else if m[1][1] > m[2][2] {
            let s = (1.0 + m[1][1] - m[0][0] - m[2][2]).sqrt() * 2.0;
            (
                (m[0][2] - m[2][0]) / s,
                (m[0][1] + m[1][0]) / s,
                0.25 * s,
                (m[1][2] + m[2][1]) / s,
            )
        } else {
            let s = (1.0 + m[2][2] - m[0][0] - m[1][1]).sqrt() * 2.0;
            (
                (m[1][0] - m[0][1]) / s,
                (m[0][2] + m[2][0]) / s,
                (m[1][2] + m[2][1]) / s,
                0.25 * s,
            )
        };
        let q = Self::from_components(w, x, y, z)?;
        Ok(q.canonical())
    }

    /// Same rotation with a nonnegative scalar part.
    pub fn canonical(self) -> Self {
        if self.w < 0.0 {
            Self {
                w: -self.w,
                x: -self.x,
                y: -self.y,
                z: -self.z,
            }
        } else {
            self
        }
    }

    /// Geodesic angle between two orientations, degrees in [0, 180].
    pub fn angle_to(self, other: UnitQuat) -> f64 {
        let d = (self.conjugate() * other).to_rotation_vector();
        d.norm().to_degrees()
    }

    /// Spherical interpolation, `t` in [0, 1].
    pub fn slerp(self, other: UnitQuat, t: f64) -> UnitQuat {
        let d = (self.conjugate() * other).to_rotation_vector();
        self * UnitQuat::from_rotation_vector(d * t)
    }

    pub fn x_axis(self) -> Vec3 {
        self.rotate_vector(Vec3::X)
    }
    pub fn y_axis(self) -> Vec3 {
        self.rotate_vector(Vec3::Y)
    }
    pub fn z_axis(self) -> Vec3 {
        self.rotate_vector(Vec3::Z)
    }
}

impl Mul for UnitQuat {
    type Output = UnitQuat;
    /// Hamilton product: `(a * b).rotate(v) == a.rotate(b.rotate(v))`.
    fn mul(self, o: UnitQuat) -> UnitQuat {
        let (a, b) = (self, o);
        UnitQuat::renormalized(
            a.w * b.w - a.x * b.x - a.y * b.y - a.z * b.z,
            a.w * b.x + a.x * b.w + a.y * b.z - a.z * b.y,
            a.w * b.y - a.x * b.z + a.y * b.w + a.z * b.x,
            a.w * b.z + a.x * b.y - a.y * b.x + a.z * b.w,
        )
    }
}

pub fn rotate_vector(q: UnitQuat, v: Vec3) -> Vec3 {
    q.rotate_vector(v)
}

/// Advances `q` by the body-frame rotation `omega_dps * dt` and renormalizes.
/// A constant rate over the step is integrated exactly.
pub fn integrate_gyro(q: UnitQuat, omega_dps: Vec3, dt: f64) -> UnitQuat {
    let rv = omega_dps * (dt * std::f64::consts::PI / 180.0);
    q * UnitQuat::from_rotation_vector(rv)
}

/// Intrinsic Z-Y-X angles in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct EulerAngles {
    pub yaw: f64,
    pub pitch: f64,
    pub roll: f64,
}

impl EulerAngles {
    pub fn new(yaw: f64, pitch: f64, roll: f64) -> Self {
        Self { yaw, pitch, roll }
    }
}

fn wrap_half_open(deg: f64) -> f64 {
    // (-180, 180]
    if deg <= -180.0 {
        deg + 360.0
    } else {
        deg
    }
}

/// Decomposes `q` into yaw-pitch-roll. At |pitch| = 90 deg the yaw/roll split
/// is degenerate and roll is reported as zero.
pub fn to_euler(q: UnitQuat) -> EulerAngles {
    let m = q.to_matrix();
    let sp = (-m[2][0]).clamp(-1.0, 1.0);
    if sp.abs() > 1.0 - 1e-12 {
        let pitch = 90.0_f64.copysign(sp);
        let yaw = (-m[0][1]).atan2(m[1][1]).to_degrees();
        return EulerAngles::new(wrap_half_open(yaw), pitch, 0.0);
    }
    let pitch = sp.asin().to_degrees();
    let yaw = m[1][0].atan2(m[0][0]).to_degrees();
    let roll = m[2][1].atan2(m[2][2]).to_degrees();
    EulerAngles::new(wrap_half_open(yaw), pitch, wrap_half_open(roll))
}

pub fn from_euler(e: EulerAngles) -> UnitQuat {
    let h = |deg: f64| (deg.to_radians() * 0.5).sin_cos();
    let (sy, cy) = h(e.yaw);
    let (sp, cp) = h(e.pitch);
    let (sr, cr) = h(e.roll);
    UnitQuat::renormalized(
        cy * cp * cr + sy * sp * sr,
        cy * cp * sr - sy * sp * cr,
        cy * sp * cr + sy * cp * sr,
        sy * cp * cr - cy * sp * sr,
    )
}

/// Angle between two directions in degrees, in [0, 180].
pub fn angle_between(a: Vec3, b: Vec3) -> Result<f64> {
    let a = a.normalized().ok_or(Error::DegenerateVector)?;
    let b = b.normalized().ok_or(Error::DegenerateVector)?;
    Ok(a.cross(b).norm().atan2(a.dot(b)).to_degrees())
}

/// Orthonormal frame of a touch plane: in-plane axes `u`, `v` and normal
/// `n = u x v`, anchored at `origin` (mm).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlaneBasis {
    pub u: Vec3,
    pub v: Vec3,
    pub n: Vec3,
    pub origin: Vec3,
}

impl Default for PlaneBasis {
    fn default() -> Self {
        Self::from_quat(UnitQuat::IDENTITY, Vec3::ZERO)
    }
}

impl PlaneBasis {
    /// Body axes of `q` expressed in world coordinates.
    pub fn from_quat(q: UnitQuat, origin: Vec3) -> Self {
        let m = q.to_matrix();
        Self {
            u: Vec3::new(m[0][0], m[1][0], m[2][0]),
            v: Vec3::new(m[0][1], m[1][1], m[2][1]),
            n: Vec3::new(m[0][2], m[1][2], m[2][2]),
            origin,
        }
    }

    /// Largest deviation from orthonormality and from `n = u x v`.
    pub fn orthonormality_error(&self) -> f64 {
        let checks = [
            self.u.dot(self.u) - 1.0,
            self.v.dot(self.v) - 1.0,
            self.n.dot(self.n) - 1.0,
            self.u.dot(self.v),
            self.u.dot(self.n),
            self.v.dot(self.n),
        ];
        let cross_err = (self.u.cross(self.v) - self.n).norm();
        checks.iter().fold(cross_err, |m, c| m.max(c.abs()))
    }
}
