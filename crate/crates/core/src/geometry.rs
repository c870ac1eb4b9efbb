//! Pinhole camera model and rigid camera-to-world poses.
//!
//! Conventions used throughout the crate:
//! - Poses map camera coordinates to world coordinates, so the translation of a
//!   pose is the camera center.
//! - Pixel coordinates are continuous `(column, row)` with the origin at the
//!   center of the top-left pixel. Pixel `(c, r)` of a raster covers
//!   `[c - 0.5, c + 0.5] x [r - 0.5, r + 0.5]`.
//! - Depth is the z coordinate in the camera frame, not the ray length.

use nalgebra::{Matrix3, Rotation3, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A 3D point or direction in scene units.
pub type Point3 = Vector3<f64>;

/// Below this rotation angle the exp/log coefficients switch to Taylor series.
pub const SMALL_ANGLE: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pixel {
    pub x: f64,
    pub y: f64,
}

impl Pixel {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
}

impl CameraIntrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, width: usize, height: usize) -> Result<Self> {
        let k = Self {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
        };
        k.validate()?;
        Ok(k)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.fx.is_finite()
            && self.fy.is_finite()
            && self.fx > 0.0
            && self.fy > 0.0
            && self.cx >= 0.0
            && self.cx < self.width as f64
            && self.cy >= 0.0
            && self.cy < self.height as f64;
        if ok {
            Ok(())
        } else {
            Err(Error::Domain(format!("invalid intrinsics {self:?}")))
        }
    }

    /// Whether `u` lies inside the span of pixel centers, where bilinear lookups are defined.
    pub fn contains(&self, u: Pixel) -> bool {
        u.is_finite()
            && u.x >= 0.0
            && u.y >= 0.0
            && u.x <= (self.width - 1) as f64
            && u.y <= (self.height - 1) as f64
    }

    /// Camera-frame direction with unit z through pixel `u`.
    #[inline]
    pub fn ray(&self, u: Pixel) -> Point3 {
        Vector3::new((u.x - self.cx) / self.fx, (u.y - self.cy) / self.fy, 1.0)
    }
}

/// Lifts pixel `u` at depth `d` into the camera frame.
pub fn backproject(u: Pixel, d: f64, k: &CameraIntrinsics) -> Result<Point3> {
    if !(d > 0.0) || !d.is_finite() {
        return Err(Error::Domain(format!("depth must be positive, got {d}")));
    }
    if !u.is_finite() {
        return Err(Error::Domain(format!("non-finite pixel {u:?}")));
    }
    Ok(k.ray(u) * d)
}

pub fn project(p: &Point3, k: &CameraIntrinsics) -> Result<Pixel> {
    if !(p.z > 0.0) {
        return Err(Error::BehindCamera { z: p.z });
    }
    Ok(Pixel::new(
        k.fx * p.x / p.z + k.cx,
        k.fy * p.y / p.z + k.cy,
    ))
}

pub fn to_world(p_cam: &Point3, pose: &PoseSE3) -> Point3 {
    pose.transform_point(p_cam)
}

pub fn camera_center(pose: &PoseSE3) -> Point3 {
    pose.translation
}

/// Rigid camera-to-world transform.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoseSE3 {
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

impl Default for PoseSE3 {
    fn default() -> Self {
        Self::identity()
    }
}

impl PoseSE3 {
    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    /// Builds a pose after checking that `rotation` is a proper rotation to 1e-9.
    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self> {
        let pose = Self {
            rotation,
            translation,
        };
        if !pose.is_valid(1e-9) {
            return Err(Error::Domain("rotation is not orthonormal with det +1".into()));
        }
        Ok(pose)
    }

    pub fn is_valid(&self, tol: f64) -> bool {
        let r = &self.rotation;
        r.iter().all(|v| v.is_finite())
            && self.translation.iter().all(|v| v.is_finite())
            && (r.transpose() * r - Matrix3::identity()).amax() <= tol
            && (r.determinant() - 1.0).abs() <= tol
    }

    pub fn from_quaternion(q: &UnitQuaternion<f64>, translation: Vector3<f64>) -> Self {
        Self {
            rotation: q.to_rotation_matrix().into_inner(),
            translation,
        }
    }

    pub fn quaternion(&self) -> UnitQuaternion<f64> {
        UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(self.rotation))
    }

    #[inline]
    pub fn transform_point(&self, p: &Point3) -> Point3 {
        self.rotation * p + self.translation
    }

    /// `self * other`: applies `other` first.
    pub fn compose(&self, other: &PoseSE3) -> PoseSE3 {
        PoseSE3 {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    pub fn inverse(&self) -> PoseSE3 {
        let rt = self.rotation.transpose();
        PoseSE3 {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }
}

/// Tangent vector of SE(3): rotation part `omega` (axis times angle) and translation part `v`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct TangentSE3 {
    pub omega: Vector3<f64>,
    pub v: Vector3<f64>,
}

impl TangentSE3 {
    pub fn new(omega: Vector3<f64>, v: Vector3<f64>) -> Self {
        Self { omega, v }
    }

    pub fn zero() -> Self {
        Self::default()
    }

    /// Builds from `[omega, v]` as laid out in gradient vectors.
    pub fn from_slice(s: &[f64]) -> Self {
        Self {
            omega: Vector3::new(s[0], s[1], s[2]),
            v: Vector3::new(s[3], s[4], s[5]),
        }
    }
}

pub fn hat(w: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -w.z, w.y, w.z, 0.0, -w.x, -w.y, w.x, 0.0)
}

fn vee(m: &Matrix3<f64>) -> Vector3<f64> {
    Vector3::new(m[(2, 1)], m[(0, 2)], m[(1, 0)])
}

/// Rodrigues coefficients `(sin t / t, (1 - cos t) / t^2, (t - sin t) / t^3)`.
fn exp_coefficients(theta: f64) -> (f64, f64, f64) {
    if theta < SMALL_ANGLE {
        let t2 = theta * theta;
        (1.0 - t2 / 6.0, 0.5 - t2 / 24.0, 1.0 / 6.0 - t2 / 120.0)
    } else {
        let (s, c) = theta.sin_cos();
        let t2 = theta * theta;
        (s / theta, (1.0 - c) / t2, (theta - s) / (t2 * theta))
    }
}

pub fn so3_exp(omega: &Vector3<f64>) -> Matrix3<f64> {
    let (a, b, _) = exp_coefficients(omega.norm());
    let w = hat(omega);
    Matrix3::identity() + w * a + w * w * b
}

pub fn se3_exp(xi: &TangentSE3) -> PoseSE3 {
    let (a, b, c) = exp_coefficients(xi.omega.norm());
    let w = hat(&xi.omega);
    let w2 = w * w;
    let rotation = Matrix3::identity() + w * a + w2 * b;
    let v = Matrix3::identity() + w * b + w2 * c;
    PoseSE3 {
        rotation,
        translation: v * xi.v,
    }
}

pub fn so3_log(r: &Matrix3<f64>) -> Vector3<f64> {
    let cos = ((r.trace() - 1.0) * 0.5).clamp(-1.0, 1.0);
    let theta = cos.acos();
    let skew = vee(&(r - r.transpose())); // 2 sin(theta) * axis
    if theta < 1e-4 {
        // sin(t)/t ~ 1 - t^2/6
        return skew * (0.5 * (1.0 + theta * theta / 6.0));
    }
    if theta < std::f64::consts::PI - 1e-4 {
        return skew * (theta / (2.0 * theta.sin()));
    }
    // Near pi the antisymmetric part vanishes; recover the axis from the symmetric part.
    let b = (1.0 - cos) / (theta * theta);
    let sym = (r + r.transpose()) * 0.5;
    let outer = (sym - Matrix3::identity()) / b + Matrix3::identity() * (theta * theta);
    let col = (0..3)
        .max_by(|&i, &j| outer[(i, i)].total_cmp(&outer[(j, j)]))
        .unwrap_or(0);
    let mut axis: Vector3<f64> = outer.column(col).into_owned();
    axis /= axis.norm();
    if axis.dot(&skew) < 0.0 {
        axis = -axis;
    }
    axis * theta
}

pub fn se3_log(pose: &PoseSE3) -> TangentSE3 {
    let omega = so3_log(&pose.rotation);
    let theta = omega.norm();
    let w = hat(&omega);
    let coeff = if theta < 1e-4 {
        1.0 / 12.0 + theta * theta / 720.0
    } else {
        let (s, c) = theta.sin_cos();
        (1.0 - theta * s / (2.0 * (1.0 - c))) / (theta * theta)
    };
    let v_inv = Matrix3::identity() - w * 0.5 + w * w * coeff;
    TangentSE3 {
        omega,
        v: v_inv * pose.translation,
    }
}

/// Left perturbation `exp(delta) * pose`, the retraction used by the optimizer.
pub fn retract_left(delta: &TangentSE3, pose: &PoseSE3) -> PoseSE3 {
    se3_exp(delta).compose(pose)
}

/// Angle of a rotation matrix in radians.
pub fn rotation_angle(r: &Matrix3<f64>) -> f64 {
    so3_log(r).norm()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use std::f64::consts::{FRAC_PI_2, PI};

    fn k_vga() -> CameraIntrinsics {
        CameraIntrinsics::new(500.0, 500.0, 320.0, 240.0, 640, 480).unwrap()
    }

    #[test]
    fn backproject_examples() {
        let k1 = CameraIntrinsics::new(1.0, 1.0, 0.0, 0.0, 4, 4).unwrap();
        assert_eq!(backproject(Pixel::new(0.0, 0.0), 1.0, &k1).unwrap(), Vector3::new(0.0, 0.0, 1.0));
        let k2 = CameraIntrinsics::new(2.0, 2.0, 1.0, 1.0, 4, 4).unwrap();
        assert_eq!(backproject(Pixel::new(1.0, 1.0), 5.0, &k2).unwrap(), Vector3::new(0.0, 0.0, 5.0));
        let p = backproject(Pixel::new(420.0, 240.0), 2.0, &k_vga()).unwrap();
        assert_relative_eq!(p, Vector3::new(0.4, 0.0, 2.0), epsilon = 1e-15);
    }

    #[test]
    fn backproject_rejects_bad_depth() {
        let k = k_vga();
        assert!(matches!(backproject(Pixel::new(1.0, 1.0), 0.0, &k), Err(Error::Domain(_))));
        assert!(backproject(Pixel::new(1.0, 1.0), -2.0, &k).is_err());
        assert!(backproject(Pixel::new(f64::NAN, 1.0), 1.0, &k).is_err());
    }

    #[test]
    fn project_examples() {
        let k = k_vga();
        let u = project(&Vector3::new(0.0, 0.0, 3.0), &k).unwrap();
        assert_eq!(u, Pixel::new(320.0, 240.0));
        let u = project(&Vector3::new(0.4, 0.0, 2.0), &k).unwrap();
        assert_relative_eq!(u.x, 420.0, epsilon = 1e-12);
        assert_eq!(u.y, 240.0);
        assert!(matches!(
            project(&Vector3::new(0.0, 0.0, -1.0), &k),
            Err(Error::BehindCamera { .. })
        ));
        assert!(project(&Vector3::new(1.0, 0.0, 0.0), &k).is_err());
    }

    #[test]
    fn intrinsics_validation() {
        assert!(CameraIntrinsics::new(0.0, 1.0, 0.0, 0.0, 2, 2).is_err());
        assert!(CameraIntrinsics::new(1.0, 1.0, 2.0, 0.0, 2, 2).is_err());
        assert!(CameraIntrinsics::new(1.0, 1.0, 1.9, 1.0, 2, 2).is_ok());
    }

    #[test]
    fn to_world_examples() {
        let p = Vector3::new(1.0, 2.0, 3.0);
        assert_eq!(to_world(&p, &PoseSE3::identity()), p);
        let shifted = PoseSE3::new(Matrix3::identity(), Vector3::new(0.0, 0.0, 10.0)).unwrap();
        assert_eq!(to_world(&Vector3::new(0.0, 0.0, 1.0), &shifted), Vector3::new(0.0, 0.0, 11.0));
        let rz = se3_exp(&TangentSE3::new(Vector3::new(0.0, 0.0, FRAC_PI_2), Vector3::zeros()));
        assert_relative_eq!(to_world(&Vector3::x(), &rz), Vector3::y(), epsilon = 1e-15);
    }

    #[test]
    fn exp_log_examples() {
        assert_eq!(se3_exp(&TangentSE3::zero()), PoseSE3::identity());
        let log = se3_log(&PoseSE3::identity());
        assert_eq!(log.omega, Vector3::zeros());
        assert_eq!(log.v, Vector3::zeros());

        let rz = se3_exp(&TangentSE3::new(Vector3::new(0.0, 0.0, FRAC_PI_2), Vector3::zeros()));
        assert_relative_eq!(rz.rotation * Vector3::x(), Vector3::y(), epsilon = 1e-15);
        assert_eq!(rz.translation, Vector3::zeros());
        let back = se3_log(&rz);
        assert_relative_eq!(back.omega, Vector3::new(0.0, 0.0, FRAC_PI_2), epsilon = 1e-15);
    }

    #[test]
    fn camera_center_is_translation() {
        assert_eq!(camera_center(&PoseSE3::identity()), Vector3::zeros());
        let t = Vector3::new(1.0, 2.0, 3.0);
        let a = PoseSE3::new(Matrix3::identity(), t).unwrap();
        let b = PoseSE3::new(so3_exp(&Vector3::new(0.3, -0.2, 1.0)), t).unwrap();
        assert_eq!(camera_center(&a), t);
        assert_eq!(camera_center(&b), t);
    }

    #[test]
    fn log_near_pi() {
        for axis in [Vector3::x(), Vector3::new(1.0, 1.0, 0.0).normalize(), Vector3::new(0.2, -0.5, 0.9).normalize()] {
            for theta in [PI, PI - 1e-6, PI - 1e-3] {
                let r = so3_exp(&(axis * theta));
                let w = so3_log(&r);
                assert_relative_eq!(so3_exp(&w), r, epsilon = 1e-9);
                assert!(w.norm() <= PI + 1e-12);
            }
        }
    }

    #[test]
    fn small_angle_branch_is_continuous() {
        let w = Vector3::new(3e-9, -4e-9, 1e-9);
        let v = Vector3::new(1.0, 2.0, 3.0);
        let below = se3_exp(&TangentSE3::new(w, v));
        let above = se3_exp(&TangentSE3::new(w * 10.0, v));
        assert!(below.is_valid(1e-12));
        assert_relative_eq!(below.translation, v, epsilon = 1e-8);
        assert_relative_eq!(above.translation, v, epsilon = 1e-7);
        let back = se3_log(&below);
        assert_relative_eq!(back.omega, w, epsilon = 1e-20);
    }

    fn vec3(range: f64) -> impl Strategy<Value = Vector3<f64>> {
        prop::array::uniform3(-range..range).prop_map(|a| Vector3::new(a[0], a[1], a[2]))
    }

    proptest! {
        #[test]
        fn project_inverts_backproject(x in 0.0..640.0f64, y in 0.0..480.0f64, logd in -3.0..3.0f64) {
            let k = k_vga();
            let u = Pixel::new(x, y);
            let d = 10f64.powf(logd);
            let p = backproject(u, d, &k).unwrap();
            let back = project(&p, &k).unwrap();
            prop_assert!((back.x - x).abs() < 1e-9 && (back.y - y).abs() < 1e-9);
        }

        #[test]
        fn backproject_is_homogeneous(x in 0.0..640.0f64, y in 0.0..480.0f64, d in 0.01..100.0f64, s in 0.01..100.0f64) {
            let k = k_vga();
            let u = Pixel::new(x, y);
            let scaled = backproject(u, s * d, &k).unwrap();
            let expected = k.ray(u) * (s * d);
            prop_assert_eq!(scaled, expected);
            let rel = (scaled - backproject(u, d, &k).unwrap() * s).norm() / scaled.norm();
            prop_assert!(rel < 1e-15);
        }

        #[test]
        fn exp_is_a_proper_rotation(w in vec3(10.0), v in vec3(10.0)) {
            let pose = se3_exp(&TangentSE3::new(w, v));
            prop_assert!(pose.is_valid(1e-9));
        }

        #[test]
        fn log_inverts_exp(dir in vec3(1.0), theta in 0.0..(PI - 0.1), v in vec3(5.0)) {
            prop_assume!(dir.norm() > 1e-3);
            let w = dir.normalize() * theta;
            let back = se3_log(&se3_exp(&TangentSE3::new(w, v)));
            prop_assert!((back.omega - w).amax() < 1e-9);
            prop_assert!((back.v - v).amax() < 1e-9);
        }

        #[test]
        fn exp_inverts_log(dir in vec3(1.0), theta in 0.0..=PI, t in vec3(5.0)) {
            prop_assume!(dir.norm() > 1e-3);
            let r = so3_exp(&(dir.normalize() * theta));
            let pose = PoseSE3 { rotation: r, translation: t };
            let back = se3_exp(&se3_log(&pose));
            prop_assert!((back.rotation - pose.rotation).amax() < 1e-9);
            prop_assert!((back.translation - pose.translation).amax() < 1e-9);
        }
    }
}
