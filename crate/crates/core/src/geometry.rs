//! Rigid-body transforms on SO(3)/SE(3) and the rectified stereo camera model.
//!
//! Rotations are stored as plain 3×3 matrices. Composition re-projects onto
//! SO(3) (polar decomposition) whenever the orthonormality residual exceeds
//! [`ORTHONORMALITY_TOLERANCE`], so long chains of poses never drift off the
//! group.
//!
//! Conventions used throughout the crate:
//! - angles are radians; degrees only appear at report boundaries;
//! - camera frames follow the KITTI layout (x right, y down, z forward);
//! - a [`Pose`] acts on points as `x' = R·x + t`.

use std::f64::consts::PI;
use std::fmt;
use std::ops::Mul;

use nalgebra::{Matrix3, Matrix4, Vector2, Vector3};
use thiserror::Error;

/// Largest tolerated entry of `RᵀR − I` before a rotation is re-orthonormalized.
pub const ORTHONORMALITY_TOLERANCE: f64 = 1e-9;

/// Smallest stereo disparity (pixels) accepted for triangulation.
pub const DISPARITY_MIN: f64 = 0.5;

/// Below this angle `so3_exp`/`so3_log` switch to Taylor expansions.
const SMALL_ANGLE: f64 = 1e-8;

/// Within this distance of π the logarithm recovers the axis from the
/// symmetric part of the rotation instead of the skew part.
const NEAR_PI: f64 = 1e-4;

/// Rotation midpoints closer than this to a half turn are treated as ambiguous.
pub const HALF_TURN_MARGIN: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("point is behind the camera (z = {z})")]
    BehindCamera { z: f64 },
    #[error("disparity {disparity:.4} px is not above the minimum of {min} px")]
    UnreliableDepth { disparity: f64, min: f64 },
    #[error("rotations are separated by a half turn ({angle:.9} rad); midpoint is ambiguous")]
    DegenerateFusion { angle: f64 },
    #[error("invalid stereo rig: {0}")]
    InvalidRig(String),
}

/// Skew-symmetric matrix `[v]×` with `[v]× w = v × w`.
pub fn hat(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Inverse of [`hat`] applied to the skew part of `m`.
fn vee_skew(m: &Matrix3<f64>) -> Vector3<f64> {
    Vector3::new(
        0.5 * (m[(2, 1)] - m[(1, 2)]),
        0.5 * (m[(0, 2)] - m[(2, 0)]),
        0.5 * (m[(1, 0)] - m[(0, 1)]),
    )
}

/// An element of SO(3).
#[derive(Clone, Copy, PartialEq)]
pub struct Rotation(Matrix3<f64>);

impl Rotation {
    pub fn identity() -> Self {
        Self(Matrix3::identity())
    }

    /// Wraps `m` if it is within tolerance of SO(3), otherwise projects it onto
    /// the nearest rotation. Returns `None` for matrices with non-positive
    /// determinant, which have no meaningful nearest rotation.
    pub fn from_matrix(m: Matrix3<f64>) -> Option<Self> {
        if !m.iter().all(|v| v.is_finite()) || m.determinant() <= 0.0 {
            return None;
        }
        let r = Self(m);
        if r.orthonormality_residual() > ORTHONORMALITY_TOLERANCE {
            Some(Self(nearest_rotation(&m)))
        } else {
            Some(r)
        }
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.0
    }

    pub fn transpose(&self) -> Self {
        Self(self.0.transpose())
    }

    /// Rotation about the x axis by `angle` radians.
    pub fn rx(angle: f64) -> Self {
        so3_exp(&Vector3::new(angle, 0.0, 0.0))
    }

    pub fn ry(angle: f64) -> Self {
        so3_exp(&Vector3::new(0.0, angle, 0.0))
    }

    pub fn rz(angle: f64) -> Self {
        so3_exp(&Vector3::new(0.0, 0.0, angle))
    }

    /// Largest absolute entry of `RᵀR − I`.
    pub fn orthonormality_residual(&self) -> f64 {
        (self.0.transpose() * self.0 - Matrix3::identity()).amax()
    }

    /// Rotation angle in `[0, π]`.
    pub fn angle(&self) -> f64 {
        so3_log(self).norm()
    }

    /// Geodesic distance on SO(3): the angle of `selfᵀ·other`.
    pub fn geodesic_distance(&self, other: &Rotation) -> f64 {
        (self.transpose() * *other).angle()
    }

    pub fn rotate(&self, v: &Vector3<f64>) -> Vector3<f64> {
        self.0 * v
    }
}

impl Mul for Rotation {
    type Output = Rotation;

    fn mul(self, rhs: Rotation) -> Rotation {
        let r = Rotation(self.0 * rhs.0);
        if r.orthonormality_residual() > ORTHONORMALITY_TOLERANCE {
            Rotation(nearest_rotation(&r.0))
        } else {
            r
        }
    }
}

impl fmt::Debug for Rotation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let w = so3_log(self);
        write!(f, "Rotation(axis_angle: [{:.6}, {:.6}, {:.6}])", w.x, w.y, w.z)
    }
}

/// Nearest rotation in the Frobenius sense (`U·Vᵀ` from the SVD, with the
/// sign of the last singular direction flipped if needed).
fn nearest_rotation(m: &Matrix3<f64>) -> Matrix3<f64> {
    let svd = m.svd(true, true);
    let u = svd.u.expect("svd computes u");
    let v_t = svd.v_t.expect("svd computes v_t");
    let mut r = u * v_t;
    if r.determinant() < 0.0 {
        let mut u = u;
        u.column_mut(2).neg_mut();
        r = u * v_t;
    }
    r
}

/// Exponential map `so(3) → SO(3)` (Rodrigues' formula).
pub fn so3_exp(axis_angle: &Vector3<f64>) -> Rotation {
    let theta2 = axis_angle.norm_squared();
    let theta = theta2.sqrt();
    let k = hat(axis_angle);
    let (a, b) = if theta < SMALL_ANGLE {
        (1.0 - theta2 / 6.0, 0.5 - theta2 / 24.0)
    } else {
        (theta.sin() / theta, (1.0 - theta.cos()) / theta2)
    };
    Rotation(Matrix3::identity() + k * a + k * k * b)
}

/// Principal logarithm `SO(3) → so(3)`; the result has norm in `[0, π]`.
///
/// At exactly π the axis sign is ambiguous; it is fixed so that the first
/// nonzero component is positive.
pub fn so3_log(r: &Rotation) -> Vector3<f64> {
    let m = &r.0;
    let skew = vee_skew(m);
    let sin_theta = skew.norm();
    let cos_theta = ((m.trace() - 1.0) * 0.5).clamp(-1.0, 1.0);
    let theta = sin_theta.atan2(cos_theta);

    if theta < SMALL_ANGLE {
        return skew * (1.0 + theta * theta / 6.0);
    }
    if PI - theta > NEAR_PI {
        return skew * (theta / sin_theta);
    }

    // Near a half turn: (S − cosθ·I)/(1 − cosθ) = a·aᵀ with S the symmetric part.
    let sym = (m + m.transpose()) * 0.5;
    let aat = (sym - Matrix3::identity() * cos_theta) / (1.0 - cos_theta);
    let diag = aat.diagonal();
    let col = diag.imax();
    let mut axis: Vector3<f64> = aat.column(col).into_owned();
    axis /= axis.norm();

    // The skew part carries sinθ·a; use it for the sign while it is resolvable.
    if sin_theta > 1e-12 {
        if axis.dot(&skew) < 0.0 {
            axis = -axis;
        }
    } else if let Some(first) = axis.iter().find(|c| c.abs() > 1e-12) {
        if *first < 0.0 {
            axis = -axis;
        }
    }
    axis * theta
}

/// Geodesic midpoint `a·exp(½·log(aᵀb))`, i.e. `a·(aᵀb)^{1/2}`.
///
/// Fails when the two rotations are (numerically) a half turn apart, where the
/// square root is not unique.
pub fn rotation_midpoint(a: &Rotation, b: &Rotation) -> Result<Rotation, GeometryError> {
    let delta = so3_log(&(a.transpose() * *b));
    let angle = delta.norm();
    if angle >= PI - HALF_TURN_MARGIN {
        return Err(GeometryError::DegenerateFusion { angle });
    }
    Ok(*a * so3_exp(&(delta * 0.5)))
}

/// A rigid transform acting on points as `x' = R·x + t`.
#[derive(Clone, Copy, PartialEq)]
pub struct Pose {
    pub rotation: Rotation,
    pub translation: Vector3<f64>,
}

impl Pose {
    pub fn new(rotation: Rotation, translation: Vector3<f64>) -> Self {
        Self { rotation, translation }
    }

    pub fn identity() -> Self {
        Self::new(Rotation::identity(), Vector3::zeros())
    }

    pub fn from_translation(x: f64, y: f64, z: f64) -> Self {
        Self::new(Rotation::identity(), Vector3::new(x, y, z))
    }

    pub fn from_rotation(rotation: Rotation) -> Self {
        Self::new(rotation, Vector3::zeros())
    }

    /// `self ∘ other`: applies `other` first, then `self`.
    pub fn compose(&self, other: &Pose) -> Pose {
        Pose {
            rotation: self.rotation * other.rotation,
            translation: self.rotation.rotate(&other.translation) + self.translation,
        }
    }

    pub fn inverse(&self) -> Pose {
        let r_t = self.rotation.transpose();
        Pose {
            rotation: r_t,
            translation: -r_t.rotate(&self.translation),
        }
    }

    pub fn transform_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation.rotate(p) + self.translation
    }

    pub fn to_matrix(&self) -> Matrix4<f64> {
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(self.rotation.matrix());
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.translation);
        m
    }

    /// Rotation angle (rad) and translation norm (m) of this transform.
    pub fn magnitude(&self) -> (f64, f64) {
        (self.rotation.angle(), self.translation.norm())
    }
}

impl Mul for Pose {
    type Output = Pose;

    fn mul(self, rhs: Pose) -> Pose {
        self.compose(&rhs)
    }
}

impl fmt::Debug for Pose {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let t = &self.translation;
        write!(
            f,
            "Pose {{ {:?}, t: [{:.6}, {:.6}, {:.6}] }}",
            self.rotation, t.x, t.y, t.z
        )
    }
}

/// Fuses the forward motion with the inverted backward motion: geodesic
/// midpoint of the rotations, arithmetic mean of the translations.
pub fn fuse_motions(forward: &Pose, backward_inverted: &Pose) -> Result<Pose, GeometryError> {
    let rotation = rotation_midpoint(&forward.rotation, &backward_inverted.rotation)?;
    let translation = (forward.translation + backward_inverted.translation) * 0.5;
    Ok(Pose::new(rotation, translation))
}

/// A 3D point expressed in some camera frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Landmark {
    pub position: Vector3<f64>,
}

impl Landmark {
    pub fn new(x: f64, y: f64, z: f64) -> Self {
        Self {
            position: Vector3::new(x, y, z),
        }
    }
}

/// Which camera of the rectified pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Eye {
    Left,
    Right,
}

/// Calibration of a rectified stereo pair with identical intrinsics. The right
/// camera sits `baseline` metres along +x of the left camera.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StereoRig {
    pub focal: f64,
    pub cu: f64,
    pub cv: f64,
    pub baseline: f64,
    pub width: u32,
    pub height: u32,
}

impl StereoRig {
    pub fn new(
        focal: f64,
        principal_point: (f64, f64),
        baseline: f64,
        image_size: (u32, u32),
    ) -> Result<Self, GeometryError> {
        let (cu, cv) = principal_point;
        let (width, height) = image_size;
        if !(focal > 0.0 && focal.is_finite()) {
            return Err(GeometryError::InvalidRig(format!("focal must be > 0, got {focal}")));
        }
        if !(baseline > 0.0 && baseline.is_finite()) {
            return Err(GeometryError::InvalidRig(format!(
                "baseline must be > 0, got {baseline}"
            )));
        }
        if !(cu >= 0.0 && cu <= width as f64 && cv >= 0.0 && cv <= height as f64) {
            return Err(GeometryError::InvalidRig(format!(
                "principal point ({cu}, {cv}) outside {width}x{height} image"
            )));
        }
        Ok(Self {
            focal,
            cu,
            cv,
            baseline,
            width,
            height,
        })
    }

    /// KITTI sequence 00 grayscale calibration, rounded.
    pub fn kitti_like() -> Self {
        Self {
            focal: 718.856,
            cu: 607.1928,
            cv: 185.2157,
            baseline: 0.537_165_7,
            width: 1241,
            height: 376,
        }
    }

    /// `f·b`, the disparity-depth product.
    pub fn focal_baseline(&self) -> f64 {
        self.focal * self.baseline
    }

    pub fn contains(&self, p: &Vector2<f64>) -> bool {
        p.x >= 0.0 && p.y >= 0.0 && p.x <= (self.width - 1) as f64 && p.y <= (self.height - 1) as f64
    }

    /// Projection into one camera. No depth check; see [`project_stereo`].
    #[inline]
    pub fn project_eye(&self, x: &Vector3<f64>, eye: Eye) -> Vector2<f64> {
        let inv_z = 1.0 / x.z;
        let px = match eye {
            Eye::Left => x.x,
            Eye::Right => x.x - self.baseline,
        };
        Vector2::new(self.focal * px * inv_z + self.cu, self.focal * x.y * inv_z + self.cv)
    }
}

/// Projects a point given in the left-camera frame into both images.
pub fn project_stereo(rig: &StereoRig, x: &Landmark) -> Result<(Vector2<f64>, Vector2<f64>), GeometryError> {
    let p = &x.position;
    if p.z.is_nan() || p.z <= 0.0 {
        return Err(GeometryError::BehindCamera { z: p.z });
    }
    Ok((rig.project_eye(p, Eye::Left), rig.project_eye(p, Eye::Right)))
}

/// Recovers the left-camera-frame point from a rectified stereo observation.
pub fn triangulate(rig: &StereoRig, left: &Vector2<f64>, right: &Vector2<f64>) -> Result<Landmark, GeometryError> {
    let disparity = left.x - right.x;
    if disparity.is_nan() || disparity <= DISPARITY_MIN {
        return Err(GeometryError::UnreliableDepth {
            disparity,
            min: DISPARITY_MIN,
        });
    }
    let z = rig.focal_baseline() / disparity;
    Ok(Landmark::new(
        (left.x - rig.cu) * z / rig.focal,
        (left.y - rig.cv) * z / rig.focal,
        z,
    ))
}
