use std::collections::BTreeMap;

use crate::geometry::{project_to_plane, Box2D, Box3D, Plane};
use crate::tracker::PlaneBox;

/// What the engine remembers from keyframes for completing plane boxes.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LatestInfo {
    /// Lifted boxes of the most recent keyframe.
    pub boxes: Vec<Box3D>,
    /// Per plane, the lifted box each track was last associated with.
    pub per_track: [BTreeMap<u64, Box3D>; 3],
}

impl LatestInfo {
    /// The latest 3D box for a track on `plane`: its own association when
    /// known, otherwise the latest-keyframe box overlapping `rect` most.
    pub fn lookup(&self, plane: Plane, track_id: u64, rect: &Box2D) -> Option<&Box3D> {
        if let Some(b) = self.per_track[plane.index()].get(&track_id) {
            return Some(b);
        }
        let mut best: Option<(&Box3D, f64)> = None;
        for b in &self.boxes {
            let iou = project_to_plane(b, plane).iou(rect);
            if iou > 0.0 && best.is_none_or(|(_, v)| iou > v) {
                best = Some((b, iou));
            }
        }
        best.map(|(b, _)| b)
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct FusedBoxes {
    pub boxes: Vec<Box3D>,
    /// Primary-plane boxes with no way to recover their third coordinate.
    pub dropped: usize,
    pub primary: Option<Plane>,
}

/// The plane with the most boxes; ties go to the earlier plane in
/// [`Plane::ALL`].
pub fn primary_plane(per_plane: &[Vec<PlaneBox>; 3]) -> Plane {
    let mut best = Plane::XOy;
    for p in Plane::ALL {
        if per_plane[p.index()].len() > per_plane[best.index()].len() {
            best = p;
        }
    }
    best
}

fn set_axis(lo: &mut nalgebra::Vector3<f64>, hi: &mut nalgebra::Vector3<f64>, axis: usize, min: f64, max: f64) {
    lo[axis] = min;
    hi[axis] = max;
}

/// Rebuilds 3D boxes from three independently tracked plane projections.
///
/// The plane carrying the most boxes is primary; its boxes supply two world
/// coordinates. Boxes of the two secondary planes are completed with the
/// coordinate they lack from `latest`, then each primary box copies the
/// remaining coordinate range from the secondary box that overlaps it most in
/// the primary plane. Output boxes carry the primary track id.
pub fn fuse_planes(per_plane: &[Vec<PlaneBox>; 3], latest: &LatestInfo) -> FusedBoxes {
    let primary = primary_plane(per_plane);
    let (a_axis, b_axis) = primary.axes();
    let c_axis = primary.dropped_axis();

    let mut candidates: Vec<Box3D> = Vec::new();
    for plane in Plane::ALL.into_iter().filter(|p| *p != primary) {
        let (u, v) = plane.axes();
        let missing = plane.dropped_axis();
        for pb in &per_plane[plane.index()] {
            let Some(prev) = latest.lookup(plane, pb.track_id, &pb.rect) else {
                continue;
            };
            let mut lo = prev.p1;
            let mut hi = prev.p2;
            set_axis(&mut lo, &mut hi, u, pb.rect.min.x, pb.rect.max.x);
            set_axis(&mut lo, &mut hi, v, pb.rect.min.y, pb.rect.max.y);
            lo[missing] = prev.p1[missing];
            hi[missing] = prev.p2[missing];
            candidates.push(Box3D {
                p1: lo,
                p2: hi,
                label: pb.label,
                track_id: Some(pb.track_id),
            });
        }
    }

    let mut out = FusedBoxes {
        primary: Some(primary),
        ..Default::default()
    };
    for pb in &per_plane[primary.index()] {
        let mut best: Option<(&Box3D, f64)> = None;
        for cand in &candidates {
            let iou = pb.rect.iou(&project_to_plane(cand, primary));
            if iou > 0.0 && best.is_none_or(|(_, v)| iou > v) {
                best = Some((cand, iou));
            }
        }
        let c_range = match best {
            Some((cand, _)) => Some((cand.p1[c_axis], cand.p2[c_axis])),
            None => latest
                .lookup(primary, pb.track_id, &pb.rect)
                .map(|b| (b.p1[c_axis], b.p2[c_axis])),
        };
        let Some((c_min, c_max)) = c_range else {
            out.dropped += 1;
            continue;
        };
        let mut lo = nalgebra::Vector3::zeros();
        let mut hi = nalgebra::Vector3::zeros();
        set_axis(&mut lo, &mut hi, a_axis, pb.rect.min.x, pb.rect.max.x);
        set_axis(&mut lo, &mut hi, b_axis, pb.rect.min.y, pb.rect.max.y);
        set_axis(&mut lo, &mut hi, c_axis, c_min, c_max);
        out.boxes.push(Box3D {
            p1: lo,
            p2: hi,
            label: pb.label,
            track_id: Some(pb.track_id),
        });
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::labels::ClassId;
    use nalgebra::Vector3;

    fn cube(lo: [f64; 3], size: [f64; 3]) -> Box3D {
        let lo = Vector3::from(lo);
        Box3D::from_corners(lo, lo + Vector3::from(size), ClassId::PERSON)
    }

    /// Plane boxes for `boxes`, using the index as track id on every plane,
    /// plus a `LatestInfo` linking each track to its box.
    fn setup(boxes: &[Box3D]) -> ([Vec<PlaneBox>; 3], LatestInfo) {
        let mut latest = LatestInfo {
            boxes: boxes.to_vec(),
            ..Default::default()
        };
        let per_plane = Plane::ALL.map(|p| {
            boxes
                .iter()
                .enumerate()
                .map(|(i, b)| {
                    latest.per_track[p.index()].insert(i as u64, *b);
                    PlaneBox {
                        track_id: i as u64,
                        label: b.label,
                        rect: project_to_plane(b, p),
                    }
                })
                .collect::<Vec<_>>()
        });
        (per_plane, latest)
    }

    #[test]
    fn single_box_round_trip() {
        let b = cube([0.2, -0.4, 2.0], [0.5, 1.7, 0.3]);
        let (pp, latest) = setup(&[b]);
        let fused = fuse_planes(&pp, &latest);
        assert_eq!(fused.boxes.len(), 1);
        assert_eq!(fused.boxes[0].p1, b.p1);
        assert_eq!(fused.boxes[0].p2, b.p2);
        assert_eq!(fused.primary, Some(Plane::XOy));
    }

    #[test]
    fn separated_objects_do_not_cross() {
        let a = cube([0.0, 0.0, 0.0], [1.0, 1.0, 1.0]);
        let b = cube([3.0, 3.0, 3.0], [0.5, 2.0, 1.5]);
        for p in Plane::ALL {
            assert_eq!(project_to_plane(&a, p).iou(&project_to_plane(&b, p)), 0.0);
        }
        let (pp, latest) = setup(&[a, b]);
        let fused = fuse_planes(&pp, &latest);
        assert_eq!(fused.boxes.len(), 2);
        assert_eq!(fused.boxes[0].max_corner_diff(&a), 0.0);
        assert_eq!(fused.boxes[1].max_corner_diff(&b), 0.0);
    }

    #[test]
    fn primary_tie_break() {
        let pb = |id| PlaneBox {
            track_id: id,
            label: ClassId::PERSON,
            rect: Box2D::new(0.0, 0.0, 1.0, 1.0),
        };
        let three = vec![pb(0), pb(1), pb(2)];
        let two = vec![pb(0), pb(1)];
        assert_eq!(primary_plane(&[three.clone(), two.clone(), three.clone()]), Plane::XOy);
        assert_eq!(primary_plane(&[two.clone(), three.clone(), three.clone()]), Plane::YOz);
        assert_eq!(primary_plane(&[two.clone(), two.clone(), three]), Plane::ZOx);
        assert_eq!(primary_plane(&[vec![], vec![], vec![]]), Plane::XOy);
    }

    #[test]
    fn non_xoy_primary_recovers_x() {
        // yOz has two boxes, the others one: yOz becomes primary and x comes
        // from the secondaries.
        let a = cube([0.0, 0.0, 0.0], [1.0, 1.0, 1.0]);
        let b = cube([3.0, 3.0, 3.0], [1.0, 1.0, 1.0]);
        let (mut pp, latest) = setup(&[a, b]);
        pp[Plane::XOy.index()].pop();
        pp[Plane::ZOx.index()].pop();
        let fused = fuse_planes(&pp, &latest);
        assert_eq!(fused.primary, Some(Plane::YOz));
        assert_eq!(fused.boxes.len(), 2);
        assert_eq!(fused.boxes[0].max_corner_diff(&a), 0.0);
        // b's x comes from the latest-info fallback of its own yOz track
        assert_eq!(fused.boxes[1].max_corner_diff(&b), 0.0);
    }

    #[test]
    fn missing_everything_drops_box() {
        let a = cube([0.0, 0.0, 0.0], [1.0, 1.0, 1.0]);
        let (mut pp, _) = setup(&[a]);
        pp[1].clear();
        pp[2].clear();
        let fused = fuse_planes(&pp, &LatestInfo::default());
        assert!(fused.boxes.is_empty());
        assert_eq!(fused.dropped, 1);
    }

    #[test]
    fn empty_input() {
        let fused = fuse_planes(&[vec![], vec![], vec![]], &LatestInfo::default());
        assert!(fused.boxes.is_empty());
        assert_eq!(fused.dropped, 0);
    }

    #[test]
    fn lookup_falls_back_to_iou() {
        let a = cube([0.0, 0.0, 0.0], [1.0, 1.0, 1.0]);
        let b = cube([5.0, 0.0, 0.0], [1.0, 1.0, 1.0]);
        let latest = LatestInfo {
            boxes: vec![a, b],
            ..Default::default()
        };
        let rect = Box2D::new(5.1, 0.1, 6.1, 1.1);
        assert_eq!(latest.lookup(Plane::XOy, 42, &rect), Some(&b));
        let far = Box2D::new(50.0, 0.0, 51.0, 1.0);
        assert_eq!(latest.lookup(Plane::XOy, 42, &far), None);
    }
}
