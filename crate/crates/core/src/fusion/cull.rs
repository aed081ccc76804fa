use nalgebra::{Vector2, Vector3};

use super::PredictionResult;
use crate::geometry::{Box2D, Box3D, CameraIntrinsics};

/// Corners closer than this are pushed onto this plane before projection.
const NEAR_PLANE: f64 = 1e-3;

/// Pixel-axis-aligned hull of the eight projected corners of a camera-frame
/// box, or `None` when the whole box lies behind the camera.
pub fn pixel_hull(camera_box: &Box3D, k: &CameraIntrinsics) -> Option<Box2D> {
    if camera_box.p2.z <= 0.0 {
        return None;
    }
    let mut lo = Vector2::repeat(f64::INFINITY);
    let mut hi = Vector2::repeat(f64::NEG_INFINITY);
    for c in camera_box.corners() {
        let c = Vector3::new(c.x, c.y, c.z.max(NEAR_PLANE));
        let px = k.project(&c)?;
        lo = lo.inf(&px);
        hi = hi.sup(&px);
    }
    Some(Box2D { min: lo, max: hi })
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct CullResult {
    pub kept: Vec<Vector2<f64>>,
    pub removed: Vec<Vector2<f64>>,
}

/// Pixel regions covered by the predicted boxes, inflated by `margin`.
pub fn cull_regions(pred: &PredictionResult, k: &CameraIntrinsics, margin: f64) -> Vec<Box2D> {
    pred.boxes_camera
        .iter()
        .filter_map(|b| pixel_hull(b, k))
        .map(|r| r.inflate(margin))
        .collect()
}

/// Splits keypoints into those outside every predicted movable box and
/// those inside at least one.
pub fn cull_keypoints(
    points: &[Vector2<f64>],
    pred: &PredictionResult,
    k: &CameraIntrinsics,
    margin: f64,
) -> CullResult {
    let regions = cull_regions(pred, k, margin);
    let mut out = CullResult::default();
    for p in points {
        if regions.iter().any(|r| r.contains(p)) {
            out.removed.push(*p);
        } else {
            out.kept.push(*p);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::PoseSE3;
    use crate::labels::ClassId;
    use proptest::prelude::*;

    fn k() -> CameraIntrinsics {
        CameraIntrinsics::tum_default()
    }

    fn pred_with(boxes: Vec<Box3D>) -> PredictionResult {
        PredictionResult::new(0.0, boxes, &PoseSE3::identity())
    }

    /// Flat camera box at depth `z` whose hull is exactly the pixel rectangle.
    fn box_over_pixels(u0: f64, v0: f64, u1: f64, v1: f64, z: f64) -> Box3D {
        let k = k();
        let a = k.backproject_metric(u0, v0, z);
        let b = k.backproject_metric(u1, v1, z);
        Box3D::from_corners(a, b, ClassId::PERSON)
    }

    #[test]
    fn no_boxes_keeps_everything() {
        let pts = vec![Vector2::new(10.0, 10.0), Vector2::new(300.0, 200.0)];
        let r = cull_keypoints(&pts, &pred_with(vec![]), &k(), 0.0);
        assert_eq!(r.kept, pts);
        assert!(r.removed.is_empty());
    }

    #[test]
    fn full_image_box_removes_everything() {
        let b = box_over_pixels(-1.0, -1.0, 641.0, 481.0, 1.0);
        let pts: Vec<_> = (0..20)
            .map(|i| Vector2::new(i as f64 * 31.0, i as f64 * 23.0))
            .collect();
        let r = cull_keypoints(&pts, &pred_with(vec![b]), &k(), 0.0);
        assert!(r.kept.is_empty());
        assert_eq!(r.removed.len(), pts.len());
    }

    #[test]
    fn direct_containment() {
        let b = box_over_pixels(100.0, 100.0, 200.0, 200.0, 2.0);
        let hull = pixel_hull(&b, &k()).unwrap();
        assert!((hull.min - Vector2::new(100.0, 100.0)).norm() < 1e-9);
        assert!((hull.max - Vector2::new(200.0, 200.0)).norm() < 1e-9);
        let pts = vec![Vector2::new(150.0, 150.0), Vector2::new(300.0, 300.0)];
        let r = cull_keypoints(&pts, &pred_with(vec![b]), &k(), 0.0);
        assert_eq!(r.removed, vec![Vector2::new(150.0, 150.0)]);
        assert_eq!(r.kept, vec![Vector2::new(300.0, 300.0)]);
    }

    #[test]
    fn boxes_behind_camera_are_skipped() {
        let b = Box3D::from_corners(
            Vector3::new(-1.0, -1.0, -3.0),
            Vector3::new(1.0, 1.0, -1.0),
            ClassId::PERSON,
        );
        assert!(pixel_hull(&b, &k()).is_none());
        let r = cull_keypoints(&[Vector2::new(319.5, 239.5)], &pred_with(vec![b]), &k(), 0.0);
        assert_eq!(r.kept.len(), 1);
    }

    proptest! {
        #[test]
        fn partition_and_margin_monotonicity(
            pts in prop::collection::vec((0.0f64..640.0, 0.0f64..480.0), 0..200),
            u0 in 0.0f64..500.0, v0 in 0.0f64..400.0, w in 1.0f64..200.0, h in 1.0f64..200.0,
            m1 in 0.0f64..20.0, dm in 0.0f64..20.0)
        {
            let pts: Vec<_> = pts.into_iter().map(|(u, v)| Vector2::new(u, v)).collect();
            let pred = pred_with(vec![box_over_pixels(u0, v0, u0 + w, v0 + h, 1.5)]);
            let a = cull_keypoints(&pts, &pred, &k(), m1);
            let b = cull_keypoints(&pts, &pred, &k(), m1 + dm);
            prop_assert_eq!(a.kept.len() + a.removed.len(), pts.len());
            prop_assert!(b.removed.len() >= a.removed.len());
            for p in &a.removed {
                prop_assert!(b.removed.contains(p));
            }
        }
    }
}
