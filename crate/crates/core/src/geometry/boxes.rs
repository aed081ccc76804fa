use nalgebra::{Vector2, Vector3};

use super::PoseSE3;
use crate::labels::ClassId;

/// Axis-aligned rectangle in some planar coordinate system.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Box2D {
    pub min: Vector2<f64>,
    pub max: Vector2<f64>,
}

impl Box2D {
    /// Builds a rectangle from two arbitrary corners.
    pub fn from_corners(a: Vector2<f64>, b: Vector2<f64>) -> Self {
        Self {
            min: a.inf(&b),
            max: a.sup(&b),
        }
    }

    pub fn new(min_x: f64, min_y: f64, max_x: f64, max_y: f64) -> Self {
        Self::from_corners(Vector2::new(min_x, min_y), Vector2::new(max_x, max_y))
    }

    pub fn width(&self) -> f64 {
        self.max.x - self.min.x
    }

    pub fn height(&self) -> f64 {
        self.max.y - self.min.y
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn center(&self) -> Vector2<f64> {
        (self.min + self.max) * 0.5
    }

    /// Inclusive containment test.
    pub fn contains(&self, p: &Vector2<f64>) -> bool {
        p.x >= self.min.x && p.x <= self.max.x && p.y >= self.min.y && p.y <= self.max.y
    }

    pub fn inflate(&self, margin: f64) -> Self {
        let m = Vector2::repeat(margin);
        Self {
            min: self.min - m,
            max: self.max + m,
        }
    }

    pub fn intersection_area(&self, other: &Box2D) -> f64 {
        let w = (self.max.x.min(other.max.x) - self.min.x.max(other.min.x)).max(0.0);
        let h = (self.max.y.min(other.max.y) - self.min.y.max(other.min.y)).max(0.0);
        w * h
    }

    /// Intersection over union; zero when the union has no area.
    pub fn iou(&self, other: &Box2D) -> f64 {
        let inter = self.intersection_area(other);
        let union = self.area() + other.area() - inter;
        if union <= 0.0 {
            return 0.0;
        }
        (inter / union).clamp(0.0, 1.0)
    }
}

/// Free-function form of [`Box2D::iou`].
pub fn iou_2d(a: &Box2D, b: &Box2D) -> f64 {
    a.iou(b)
}

/// World-frame axis-aligned box stored as its min and max corners.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Box3D {
    pub p1: Vector3<f64>,
    pub p2: Vector3<f64>,
    pub label: ClassId,
    pub track_id: Option<u64>,
}

impl Box3D {
    /// Builds a box from two arbitrary corners, ordering them componentwise.
    pub fn from_corners(a: Vector3<f64>, b: Vector3<f64>, label: ClassId) -> Self {
        Self {
            p1: a.inf(&b),
            p2: a.sup(&b),
            label,
            track_id: None,
        }
    }

    pub fn with_track_id(mut self, id: Option<u64>) -> Self {
        self.track_id = id;
        self
    }

    /// Tight box around a point set. Panics on an empty iterator.
    pub fn hull<'a>(points: impl IntoIterator<Item = &'a Vector3<f64>>, label: ClassId) -> Self {
        let mut it = points.into_iter();
        let first = *it.next().expect("hull of an empty point set");
        let (lo, hi) = it.fold((first, first), |(lo, hi), p| (lo.inf(p), hi.sup(p)));
        Self::from_corners(lo, hi, label)
    }

    pub fn extent(&self) -> Vector3<f64> {
        self.p2 - self.p1
    }

    pub fn center(&self) -> Vector3<f64> {
        (self.p1 + self.p2) * 0.5
    }

    pub fn volume(&self) -> f64 {
        let e = self.extent();
        e.x * e.y * e.z
    }

    /// The eight corners, bit `i` of the index selecting `p2` on axis `i`.
    pub fn corners(&self) -> [Vector3<f64>; 8] {
        std::array::from_fn(|i| {
            Vector3::new(
                if i & 1 == 0 { self.p1.x } else { self.p2.x },
                if i & 2 == 0 { self.p1.y } else { self.p2.y },
                if i & 4 == 0 { self.p1.z } else { self.p2.z },
            )
        })
    }

    /// Inclusive containment test.
    pub fn contains(&self, p: &Vector3<f64>) -> bool {
        (0..3).all(|i| p[i] >= self.p1[i] && p[i] <= self.p2[i])
    }

    pub fn inflate(&self, margin: f64) -> Self {
        let m = Vector3::repeat(margin);
        Self {
            p1: self.p1 - m,
            p2: self.p2 + m,
            ..*self
        }
    }

    pub fn translate(&self, offset: &Vector3<f64>) -> Self {
        Self {
            p1: self.p1 + offset,
            p2: self.p2 + offset,
            ..*self
        }
    }

    pub fn intersection_volume(&self, other: &Box3D) -> f64 {
        (0..3)
            .map(|i| (self.p2[i].min(other.p2[i]) - self.p1[i].max(other.p1[i])).max(0.0))
            .product()
    }

    pub fn iou(&self, other: &Box3D) -> f64 {
        let inter = self.intersection_volume(other);
        let union = self.volume() + other.volume() - inter;
        if union <= 0.0 {
            return 0.0;
        }
        (inter / union).clamp(0.0, 1.0)
    }

    /// Largest coordinate difference between corresponding corners.
    pub fn max_corner_diff(&self, other: &Box3D) -> f64 {
        (self.p1 - other.p1)
            .abs()
            .max()
            .max((self.p2 - other.p2).abs().max())
    }
}

/// Applies `pose` to both corners and re-normalizes to an axis-aligned box.
///
/// Only the two stored corners are transformed, so under rotation the result
/// spans the transformed diagonal rather than the full rotated volume.
pub fn transform_box(pose: &PoseSE3, b: &Box3D) -> Box3D {
    let a = pose.transform_point(&b.p1);
    let c = pose.transform_point(&b.p2);
    Box3D {
        p1: a.inf(&c),
        p2: a.sup(&c),
        label: b.label,
        track_id: b.track_id,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::FRAC_PI_2;

    fn unit() -> Box3D {
        Box3D::from_corners(Vector3::zeros(), Vector3::repeat(1.0), ClassId::PERSON)
    }

    #[test]
    fn construction_normalizes() {
        let b = Box3D::from_corners(Vector3::new(1.0, 0.0, 5.0), Vector3::new(0.0, 2.0, 3.0), ClassId::CAR);
        assert_eq!(b.p1, Vector3::new(0.0, 0.0, 3.0));
        assert_eq!(b.p2, Vector3::new(1.0, 2.0, 5.0));
        let r = Box2D::new(3.0, 1.0, 0.0, 2.0);
        assert_eq!(r.min, Vector2::new(0.0, 1.0));
        assert_eq!(r.max, Vector2::new(3.0, 2.0));
    }

    #[test]
    fn transform_identity_and_translation() {
        let b = unit().with_track_id(Some(4));
        assert_eq!(transform_box(&PoseSE3::identity(), &b), b);
        let t = transform_box(&PoseSE3::from_translation(0.0, 0.0, 1.0), &b);
        assert_eq!(t.p1, Vector3::new(0.0, 0.0, 1.0));
        assert_eq!(t.p2, Vector3::new(1.0, 1.0, 2.0));
        assert_eq!(t.track_id, Some(4));
        assert_eq!(t.label, ClassId::PERSON);
    }

    #[test]
    fn transform_rotation_renormalizes() {
        let b = Box3D::from_corners(Vector3::zeros(), Vector3::new(1.0, 2.0, 0.0), ClassId::PERSON);
        let t = transform_box(&PoseSE3::rot_z(FRAC_PI_2), &b);
        assert!((t.p1 - Vector3::new(-2.0, 0.0, 0.0)).norm() < 1e-12);
        assert!((t.p2 - Vector3::new(0.0, 1.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn iou_examples() {
        let a = Box2D::new(0.0, 0.0, 1.0, 1.0);
        assert_eq!(a.iou(&a), 1.0);
        assert_eq!(a.iou(&Box2D::new(2.0, 2.0, 3.0, 3.0)), 0.0);
        let b = Box2D::new(0.5, 0.0, 1.5, 1.0);
        assert!((iou_2d(&a, &b) - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn degenerate_boxes_have_zero_iou() {
        let p = Box2D::new(1.0, 1.0, 1.0, 1.0);
        assert_eq!(p.iou(&p), 0.0);
        let line = Box2D::new(0.0, 0.0, 1.0, 0.0);
        assert_eq!(line.iou(&Box2D::new(0.0, 0.0, 1.0, 1.0)), 0.0);
    }

    #[test]
    fn inclusive_containment() {
        let b = unit();
        assert!(b.contains(&Vector3::new(1.0, 0.5, 0.0)));
        assert!(!b.contains(&Vector3::new(1.0 + 1e-12, 0.5, 0.0)));
    }

    #[test]
    fn iou_3d_half_overlap() {
        let a = unit();
        let b = a.translate(&Vector3::new(0.5, 0.0, 0.0));
        assert!((a.iou(&b) - 1.0 / 3.0).abs() < 1e-15);
    }

    fn arb_box2() -> impl Strategy<Value = Box2D> {
        (-5.0f64..5.0, -5.0f64..5.0, 0.01f64..4.0, 0.01f64..4.0)
            .prop_map(|(x, y, w, h)| Box2D::new(x, y, x + w, y + h))
    }

    proptest! {
        #[test]
        fn iou_symmetric_and_bounded(a in arb_box2(), b in arb_box2()) {
            let ab = a.iou(&b);
            prop_assert_eq!(ab, b.iou(&a));
            prop_assert!((0.0..=1.0).contains(&ab));
            prop_assert!((a.iou(&a) - 1.0).abs() < 1e-12);
            if a != b {
                prop_assert!(ab < 1.0);
            }
        }

        #[test]
        fn transform_box_matches_corner_transform(p in super::super::pose::tests::arb_pose(),
                                                  lo in prop::array::uniform3(-3.0f64..3.0),
                                                  ext in prop::array::uniform3(0.0f64..2.0)) {
            let lo = Vector3::from(lo);
            let b = Box3D::from_corners(lo, lo + Vector3::from(ext), ClassId::CAR);
            let t = transform_box(&p, &b);
            let a = p.transform_point(&b.p1);
            let c = p.transform_point(&b.p2);
            for i in 0..3 {
                prop_assert_eq!(t.p1[i], a[i].min(c[i]));
                prop_assert_eq!(t.p2[i], a[i].max(c[i]));
            }
            prop_assert!((0..3).all(|i| t.p1[i] <= t.p2[i]));
        }
    }
}
