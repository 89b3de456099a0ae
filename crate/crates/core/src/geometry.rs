//! Pinhole camera model with world-to-camera poses, as stored in COLMAP
//! text reconstructions: `pixel = K (R X + t) / z`. No lens distortion.

use nalgebra::{Point3, Quaternion, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{ImageSpace, Pixel};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("point lies on the camera plane (depth {0:e})")]
    DegenerateProjection(f64),
    #[error("quaternion ({w}, {x}, {y}, {z}) cannot be normalized")]
    BadQuaternion { w: f64, x: f64, y: f64, z: f64 },
    #[error("invalid intrinsics: focal lengths must be positive and finite")]
    BadIntrinsics,
}

/// Tolerance on quaternion norm before it is re-normalized.
const UNIT_TOLERANCE: f64 = 1e-12;
const MIN_DEPTH: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
}

impl CameraIntrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64) -> Result<Self, GeometryError> {
        if !(fx > 0.0 && fy > 0.0 && fx.is_finite() && fy.is_finite())
            || !cx.is_finite()
            || !cy.is_finite()
        {
            return Err(GeometryError::BadIntrinsics);
        }
        Ok(Self { fx, fy, cx, cy })
    }
}

/// World-to-camera rigid transform.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraPose {
    pub rotation: UnitQuaternion<f64>,
    pub translation: Vector3<f64>,
}

impl CameraPose {
    pub fn identity() -> Self {
        Self {
            rotation: UnitQuaternion::identity(),
            translation: Vector3::zeros(),
        }
    }

    /// Builds a pose from raw quaternion coefficients. Coefficients already
    /// within 1e-12 of unit norm are kept bit-for-bit; others are normalized.
    pub fn from_wxyz(
        w: f64,
        x: f64,
        y: f64,
        z: f64,
        translation: Vector3<f64>,
    ) -> Result<Self, GeometryError> {
        let q = Quaternion::new(w, x, y, z);
        let norm = q.norm();
        if !norm.is_finite() || norm < 1e-6 || !translation.iter().all(|v| v.is_finite()) {
            return Err(GeometryError::BadQuaternion { w, x, y, z });
        }
        let rotation = if (norm - 1.0).abs() <= UNIT_TOLERANCE {
            UnitQuaternion::new_unchecked(q)
        } else {
            UnitQuaternion::from_quaternion(q)
        };
        Ok(Self {
            rotation,
            translation,
        })
    }

    /// `(w, x, y, z)` coefficients of the rotation.
    pub fn wxyz(&self) -> [f64; 4] {
        let q = self.rotation.quaternion();
        [q.w, q.i, q.j, q.k]
    }

    pub fn transform(&self, world: &Point3<f64>) -> Point3<f64> {
        Point3::from(self.rotation * world.coords + self.translation)
    }

    /// Camera center in world coordinates, `-Rᵀ t`.
    pub fn center(&self) -> Point3<f64> {
        Point3::from(-(self.rotation.inverse() * self.translation))
    }
}

/// A reconstructed 3D point with its COLMAP quality statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenePoint3D {
    pub point_id: u64,
    pub position: Point3<f64>,
    /// Mean reprojection error in pixels.
    pub reprojection_error: f64,
    /// `(image_id, point2d_index)` observations.
    pub track: Vec<(u32, u32)>,
    pub color: Option<[u8; 3]>,
}

impl ScenePoint3D {
    /// Number of images the point was observed in.
    pub fn track_length(&self) -> usize {
        self.track.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Projection {
    pub pixel: Pixel,
    pub depth: f64,
    pub in_view: bool,
}

pub fn project(
    world: &Point3<f64>,
    pose: &CameraPose,
    intr: &CameraIntrinsics,
    space: &ImageSpace,
) -> Result<Projection, GeometryError> {
    let cam = pose.transform(world);
    let depth = cam.z;
    if depth.abs() < MIN_DEPTH {
        return Err(GeometryError::DegenerateProjection(depth));
    }
    let pixel = Pixel::new(
        intr.fx * cam.x / depth + intr.cx,
        intr.fy * cam.y / depth + intr.cy,
    );
    Ok(Projection {
        pixel,
        depth,
        in_view: depth > 0.0 && space.contains(pixel),
    })
}

/// Inverse of [`project`] for a known depth.
pub fn unproject(
    pixel: Pixel,
    depth: f64,
    pose: &CameraPose,
    intr: &CameraIntrinsics,
) -> Point3<f64> {
    let cam = Vector3::new(
        (pixel.x - intr.cx) / intr.fx * depth,
        (pixel.y - intr.cy) / intr.fy * depth,
        depth,
    );
    Point3::from(pose.rotation.inverse() * (cam - pose.translation))
}

pub fn reprojection_error(
    observed: Pixel,
    world: &Point3<f64>,
    pose: &CameraPose,
    intr: &CameraIntrinsics,
    space: &ImageSpace,
) -> Result<f64, GeometryError> {
    Ok(observed.distance(&project(world, pose, intr, space)?.pixel))
}

/// Angle of the relative rotation between two orientations, in radians.
pub fn geodesic_angle(a: &UnitQuaternion<f64>, b: &UnitQuaternion<f64>) -> f64 {
    let dot = a.quaternion().dot(b.quaternion()).abs().min(1.0);
    2.0 * dot.acos()
}

/// Camera-center displacement plus weighted rotation angle between two poses.
pub fn motion_magnitude(a: &CameraPose, b: &CameraPose, rotation_weight: f64) -> f64 {
    (a.center() - b.center()).norm() + rotation_weight * geodesic_angle(&a.rotation, &b.rotation)
}

fn median(mut v: Vec<f64>) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    })
}

/// Median per-step translation over median per-step rotation of a pose
/// sequence, which puts both motion terms on the same scale. Falls back to
/// 1.0 when the sequence never rotates.
pub fn default_rotation_weight(poses: &[CameraPose]) -> f64 {
    let steps = poses.windows(2);
    let translation = median(
        steps
            .clone()
            .map(|w| (w[0].center() - w[1].center()).norm())
            .collect(),
    );
    let rotation = median(
        steps
            .map(|w| geodesic_angle(&w[0].rotation, &w[1].rotation))
            .collect(),
    );
    match (translation, rotation) {
        (Some(t), Some(r)) if r > 0.0 && t > 0.0 => t / r,
        _ => 1.0,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_2;

    #[test]
    fn optical_axis_projects_to_principal_point() {
        let intr = CameraIntrinsics::new(1.0, 1.0, 0.0, 0.0).unwrap();
        let space = ImageSpace::new(4, 4).unwrap();
        let p = project(
            &Point3::new(0.0, 0.0, 1.0),
            &CameraPose::identity(),
            &intr,
            &space,
        )
        .unwrap();
        assert_eq!(p.pixel, Pixel::new(0.0, 0.0));
        assert_eq!(p.depth, 1.0);
        assert!(p.in_view);
    }

    #[test]
    fn behind_camera_is_not_in_view() {
        let intr = CameraIntrinsics::new(100.0, 100.0, 50.0, 50.0).unwrap();
        let space = ImageSpace::new(100, 100).unwrap();
        let p = project(
            &Point3::new(0.0, 0.0, -2.0),
            &CameraPose::identity(),
            &intr,
            &space,
        )
        .unwrap();
        assert!(p.depth < 0.0);
        assert!(!p.in_view);
        assert!(space.contains(p.pixel));
    }

    #[test]
    fn camera_plane_is_degenerate() {
        let intr = CameraIntrinsics::new(1.0, 1.0, 0.0, 0.0).unwrap();
        let space = ImageSpace::new(4, 4).unwrap();
        assert!(matches!(
            project(
                &Point3::new(1.0, 0.0, 0.0),
                &CameraPose::identity(),
                &intr,
                &space
            ),
            Err(GeometryError::DegenerateProjection(_))
        ));
    }

    #[test]
    fn reprojection_error_three_four_five() {
        let intr = CameraIntrinsics::new(100.0, 100.0, 50.0, 50.0).unwrap();
        let space = ImageSpace::new(100, 100).unwrap();
        let x = Point3::new(0.1, -0.2, 2.0);
        let pose = CameraPose::identity();
        let at = project(&x, &pose, &intr, &space).unwrap().pixel;
        assert_eq!(
            reprojection_error(at, &x, &pose, &intr, &space).unwrap(),
            0.0
        );
        let off = Pixel::new(at.x + 3.0, at.y + 4.0);
        let e = reprojection_error(off, &x, &pose, &intr, &space).unwrap();
        assert!((e - 5.0).abs() < 1e-12);
    }

    #[test]
    fn motion_examples() {
        let a = CameraPose::identity();
        assert_eq!(motion_magnitude(&a, &a, 3.0), 0.0);
        let b = CameraPose {
            translation: Vector3::new(0.5, 0.0, 0.0),
            ..a
        };
        assert!((motion_magnitude(&a, &b, 7.0) - 0.5).abs() < 1e-15);
        // 90 degrees about z: q = (cos 45°, 0, 0, sin 45°), |<q_a, q_b>| = cos 45°.
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let c = CameraPose::from_wxyz(h, 0.0, 0.0, h, Vector3::zeros()).unwrap();
        assert!((motion_magnitude(&a, &c, 1.0) - FRAC_PI_2).abs() < 1e-12);
    }

    #[test]
    fn quaternion_sign_does_not_matter() {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let a = CameraPose::from_wxyz(h, h, 0.0, 0.0, Vector3::zeros()).unwrap();
        let b = CameraPose::from_wxyz(-h, -h, 0.0, 0.0, Vector3::zeros()).unwrap();
        assert!(motion_magnitude(&a, &b, 1.0).abs() < 1e-7);
    }

    #[test]
    fn near_unit_quaternions_are_kept_verbatim() {
        let w = 0.1f64;
        let x = (1.0 - w * w).sqrt();
        let pose = CameraPose::from_wxyz(w, x, 0.0, 0.0, Vector3::zeros()).unwrap();
        assert_eq!(pose.wxyz(), [w, x, 0.0, 0.0]);
        let pose = CameraPose::from_wxyz(2.0, 0.0, 0.0, 0.0, Vector3::zeros()).unwrap();
        assert_eq!(pose.wxyz(), [1.0, 0.0, 0.0, 0.0]);
        assert!(CameraPose::from_wxyz(0.0, 0.0, 0.0, 0.0, Vector3::zeros()).is_err());
        assert!(CameraPose::from_wxyz(f64::NAN, 0.0, 0.0, 1.0, Vector3::zeros()).is_err());
    }

    #[test]
    fn default_weight_balances_medians() {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let poses = vec![
            CameraPose::identity(),
            CameraPose::from_wxyz(h, 0.0, 0.0, h, Vector3::new(2.0, 0.0, 0.0)).unwrap(),
        ];
        let w = default_rotation_weight(&poses);
        let step = (poses[0].center() - poses[1].center()).norm();
        assert!((w - step / FRAC_PI_2).abs() < 1e-12);
        assert_eq!(default_rotation_weight(&poses[..1]), 1.0);
    }
}
