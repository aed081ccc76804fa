//! Poses, the pinhole camera, boxes, and the three axis-aligned world planes
//! that plane tracking operates on.

mod boxes;
mod camera;
pub(crate) mod pose;

pub use boxes::{iou_2d, transform_box, Box2D, Box3D};
pub use camera::{CameraIntrinsics, ImageSize};
pub use pose::PoseSE3;

use nalgebra::{Vector2, Vector3};
use thiserror::Error;

use crate::labels::ClassId;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("invalid depth {0}: depth must be positive and finite")]
    InvalidDepth(f64),
    #[error("matrix is not a proper rotation (orthonormality error {ortho_err:e}, det {det})")]
    InvalidRotation { ortho_err: f64, det: f64 },
    #[error("quaternion has zero or non-finite norm")]
    InvalidQuaternion,
    #[error("camera intrinsics require fx > 0, fy > 0 and depth_scale > 0")]
    InvalidIntrinsics,
}

/// One of the three axis-aligned world coordinate planes.
///
/// Each plane keeps two world axes in a fixed order: `XOy -> (x, y)`,
/// `YOz -> (y, z)` and `ZOx -> (z, x)`. Fusion relies on this ordering.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Plane {
    XOy,
    YOz,
    ZOx,
}

impl Plane {
    /// Planes in tie-break order.
    pub const ALL: [Plane; 3] = [Plane::XOy, Plane::YOz, Plane::ZOx];

    /// World axis indices mapped to the plane's first and second coordinate.
    pub const fn axes(self) -> (usize, usize) {
        match self {
            Plane::XOy => (0, 1),
            Plane::YOz => (1, 2),
            Plane::ZOx => (2, 0),
        }
    }

    /// The world axis this plane drops.
    pub const fn dropped_axis(self) -> usize {
        match self {
            Plane::XOy => 2,
            Plane::YOz => 0,
            Plane::ZOx => 1,
        }
    }

    pub const fn index(self) -> usize {
        self as usize
    }

    /// The plane that keeps exactly the two given world axes, in any order.
    pub fn containing(a: usize, b: usize) -> Option<Plane> {
        Plane::ALL.into_iter().find(|p| {
            let (u, v) = p.axes();
            (u == a && v == b) || (u == b && v == a)
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            Plane::XOy => "xOy",
            Plane::YOz => "yOz",
            Plane::ZOx => "zOx",
        }
    }
}

/// Drops the axis not in `plane`. Corners stay ordered.
pub fn project_to_plane(b: &Box3D, plane: Plane) -> Box2D {
    let (u, v) = plane.axes();
    Box2D {
        min: Vector2::new(b.p1[u], b.p1[v]),
        max: Vector2::new(b.p2[u], b.p2[v]),
    }
}

/// A keyframe detector output.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Detection2D {
    pub label: ClassId,
    pub score: f64,
    /// Pixel box.
    pub bbox: Box2D,
    /// Depth at the box center, meters.
    pub center_depth: f64,
}

/// How far a lifted box extends behind the detected surface along the
/// camera's optical axis.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum DepthExtent {
    /// Use the smaller of the lifted face's width and height.
    #[default]
    MinFace,
    /// A fixed thickness in meters. Zero gives a flat box.
    Fixed(f64),
}

impl DepthExtent {
    fn thickness(self, width: f64, height: f64) -> f64 {
        match self {
            DepthExtent::MinFace => width.min(height),
            DepthExtent::Fixed(d) => d.max(0.0),
        }
    }
}

/// Lifts a detection into a world-frame box using [`DepthExtent::MinFace`].
pub fn lift_detection(
    d: &Detection2D,
    pose_cw: &PoseSE3,
    k: &CameraIntrinsics,
) -> Result<Box3D, GeometryError> {
    lift_detection_with(d, pose_cw, k, DepthExtent::default())
}

/// Backprojects the two pixel corners of the detection at its center depth,
/// extends the resulting face away from the camera by `extent`, and maps the
/// camera-frame box into the world frame.
pub fn lift_detection_with(
    d: &Detection2D,
    pose_cw: &PoseSE3,
    k: &CameraIntrinsics,
    extent: DepthExtent,
) -> Result<Box3D, GeometryError> {
    let z = d.center_depth;
    if !z.is_finite() || z <= 0.0 {
        return Err(GeometryError::InvalidDepth(z));
    }
    let a = k.backproject_metric(d.bbox.min.x, d.bbox.min.y, z);
    let b = k.backproject_metric(d.bbox.max.x, d.bbox.max.y, z);
    let thickness = extent.thickness((b.x - a.x).abs(), (b.y - a.y).abs());
    let far = Vector3::new(b.x, b.y, z + thickness);
    let camera_box = Box3D::from_corners(a, far, d.label);
    Ok(transform_box(&pose_cw.inverse(), &camera_box))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::FRAC_PI_2;

    fn sample_box() -> Box3D {
        Box3D::from_corners(Vector3::zeros(), Vector3::new(1.0, 2.0, 3.0), ClassId::PERSON)
    }

    #[test]
    fn plane_projection_examples() {
        let b = sample_box();
        assert_eq!(project_to_plane(&b, Plane::XOy), Box2D::new(0.0, 0.0, 1.0, 2.0));
        assert_eq!(project_to_plane(&b, Plane::YOz), Box2D::new(0.0, 0.0, 2.0, 3.0));
        assert_eq!(project_to_plane(&b, Plane::ZOx), Box2D::new(0.0, 0.0, 3.0, 1.0));
    }

    #[test]
    fn planes_drop_one_axis_each() {
        for p in Plane::ALL {
            let (u, v) = p.axes();
            let d = p.dropped_axis();
            let mut all = [u, v, d];
            all.sort();
            assert_eq!(all, [0, 1, 2]);
            assert_eq!(Plane::containing(v, u), Some(p));
        }
        assert_eq!(Plane::containing(1, 1), None);
    }

    fn full_frame_detection(depth: f64) -> Detection2D {
        Detection2D {
            label: ClassId::PERSON,
            score: 0.9,
            bbox: Box2D::new(-0.5, -0.5, 639.5, 479.5),
            center_depth: depth,
        }
    }

    #[test]
    fn lift_identity_pose_keeps_camera_box() {
        let k = CameraIntrinsics::tum_default();
        let d = full_frame_detection(1.0);
        let w = lift_detection_with(&d, &PoseSE3::identity(), &k, DepthExtent::Fixed(0.0)).unwrap();
        let a = k.backproject(-0.5, -0.5, 5000.0).unwrap();
        let b = k.backproject(639.5, 479.5, 5000.0).unwrap();
        assert_eq!(w.p1, a);
        assert_eq!(w.p2, b);
        assert_eq!(w.label, ClassId::PERSON);
        assert_eq!(w.volume(), 0.0);
    }

    #[test]
    fn lift_min_face_extent() {
        let k = CameraIntrinsics::tum_default();
        let d = full_frame_detection(1.0);
        let w = lift_detection(&d, &PoseSE3::identity(), &k).unwrap();
        let e = w.extent();
        assert!((e.z - e.x.min(e.y)).abs() < 1e-15);
        assert_eq!(w.p1.z, 1.0);
    }

    #[test]
    fn lift_pure_translation_offsets_box() {
        let k = CameraIntrinsics::tum_default();
        let d = full_frame_detection(2.0);
        let cam = lift_detection(&d, &PoseSE3::identity(), &k).unwrap();
        // pose_cw = translate(-t) means the camera sits at +t in the world.
        let pose_cw = PoseSE3::from_translation(-1.0, 0.5, -2.0);
        let world = lift_detection(&d, &pose_cw, &k).unwrap();
        let t = Vector3::new(1.0, -0.5, 2.0);
        assert!((world.p1 - (cam.p1 + t)).norm() < 1e-12);
        assert!((world.p2 - (cam.p2 + t)).norm() < 1e-12);
    }

    #[test]
    fn lift_matches_two_step_oracle() {
        let k = CameraIntrinsics::tum_default();
        let d = Detection2D {
            label: ClassId::CAR,
            score: 0.7,
            bbox: Box2D::new(100.0, 80.0, 220.0, 400.0),
            center_depth: 1.83,
        };
        let pose_cw = PoseSE3::from_translation(0.3, -0.2, 1.0).compose(&PoseSE3::rot_y(FRAC_PI_2));
        let lifted = lift_detection_with(&d, &pose_cw, &k, DepthExtent::Fixed(0.4)).unwrap();

        let raw = d.center_depth * k.depth_scale;
        let a = k.backproject(100.0, 80.0, raw).unwrap();
        let mut b = k.backproject(220.0, 400.0, raw).unwrap();
        b.z += 0.4;
        let oracle = transform_box(&pose_cw.inverse(), &Box3D::from_corners(a, b, ClassId::CAR));
        assert!(lifted.max_corner_diff(&oracle) < 1e-12);
        assert_eq!(lifted.label, ClassId::CAR);
    }

    #[test]
    fn lift_rejects_bad_depth() {
        let k = CameraIntrinsics::tum_default();
        let d = full_frame_detection(0.0);
        assert!(matches!(
            lift_detection(&d, &PoseSE3::identity(), &k),
            Err(GeometryError::InvalidDepth(_))
        ));
    }

    #[test]
    fn degenerate_pixel_box_lifts_to_zero_volume() {
        let k = CameraIntrinsics::tum_default();
        let d = Detection2D {
            label: ClassId::PERSON,
            score: 0.5,
            bbox: Box2D::new(10.0, 10.0, 10.0, 10.0),
            center_depth: 1.0,
        };
        let b = lift_detection(&d, &PoseSE3::identity(), &k).unwrap();
        assert_eq!(b.volume(), 0.0);
    }

    proptest! {
        #[test]
        fn plane_areas_multiply_to_volume_squared(lo in prop::array::uniform3(-5.0f64..5.0),
                                                  ext in prop::array::uniform3(0.01f64..3.0)) {
            let lo = Vector3::from(lo);
            let b = Box3D::from_corners(lo, lo + Vector3::from(ext), ClassId::PERSON);
            let prod: f64 = Plane::ALL.iter().map(|p| project_to_plane(&b, *p).area()).product();
            let v2 = b.volume().powi(2);
            prop_assert!((prod - v2).abs() <= 1e-9 * v2.max(1.0));
        }
    }
}
