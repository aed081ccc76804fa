use std::collections::BTreeSet;
use std::fmt;

use nalgebra::Vector3;

use super::render::{render_frame, ObjectRef};
use super::SyntheticScene;
use crate::geometry::Box3D;
use crate::labels::ClassId;
use crate::octree::{OccupancyOctree, VoxelKey};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EvalOptions {
    /// Pixel stride used when the map was built.
    pub stride: u32,
    /// Frames that were inserted into the map: every n-th, starting at 0.
    pub keyframe_every: usize,
}

impl EvalOptions {
    pub fn for_scene(scene: &SyntheticScene) -> Self {
        Self {
            stride: 2,
            keyframe_every: scene.keyframe_every,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct MapReport {
    pub occupied: usize,
    /// Occupied voxels overlapping a movable object's swept region.
    pub swept_occupied: usize,
    pub swept_fraction: f64,
    /// Static-surface voxels seen by the inserted frames.
    pub static_visible: usize,
    pub static_occupied: usize,
    pub static_coverage: f64,
    /// Occupied voxels carrying a label.
    pub labeled: usize,
    pub label_correct: usize,
    pub label_accuracy: f64,
}

fn ratio(a: usize, b: usize) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

impl fmt::Display for MapReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "occupied={}", self.occupied)?;
        writeln!(f, "swept_occupied={}", self.swept_occupied)?;
        writeln!(f, "swept_fraction={:.6}", self.swept_fraction)?;
        writeln!(f, "static_visible={}", self.static_visible)?;
        writeln!(f, "static_occupied={}", self.static_occupied)?;
        writeln!(f, "static_coverage={:.6}", self.static_coverage)?;
        writeln!(f, "labeled={}", self.labeled)?;
        writeln!(f, "label_correct={}", self.label_correct)?;
        writeln!(f, "label_accuracy={:.6}", self.label_accuracy)
    }
}

/// Boxes of every movable object at every frame time.
pub fn swept_region(scene: &SyntheticScene) -> Vec<Box3D> {
    (0..scene.frame_count())
        .flat_map(|i| (0..scene.movables.len()).map(move |j| scene.movable_box(j, scene.frame_offset(i))))
        .collect()
}

/// The voxel's cube. Only its extent is used; the label is arbitrary.
fn voxel_box(key: VoxelKey, size: f64) -> Box3D {
    let lo = Vector3::new(key.x as f64, key.y as f64, key.z as f64) * size;
    Box3D::from_corners(lo, lo + Vector3::repeat(size), ClassId::PERSON)
}

/// Scores a map against the scene it was built from.
///
/// A voxel belongs to an object when its cube overlaps the object's box with
/// positive volume. The visible static surface is recomputed with the same
/// depth quantization, pixel stride and frame selection the pipeline uses.
pub fn eval_map(map: &OccupancyOctree, scene: &SyntheticScene, opts: EvalOptions) -> MapReport {
    let size = map.config().voxel_size;
    let swept = swept_region(scene);
    let labeled_statics: Vec<(ClassId, Box3D)> = scene
        .statics
        .iter()
        .filter_map(|s| s.label.map(|l| (l, s.bbox())))
        .collect();

    let mut r = MapReport::default();
    for v in map.occupied_leaves() {
        r.occupied += 1;
        let cube = voxel_box(v.key, size);
        let overlaps = |b: &Box3D| cube.intersection_volume(b) > 0.0;
        if swept.iter().any(overlaps) {
            r.swept_occupied += 1;
        }
        if let Some(label) = v.majority_label() {
            r.labeled += 1;
            let correct = labeled_statics.iter().any(|(l, b)| *l == label && overlaps(b))
                || swept.iter().any(|b| b.label == label && overlaps(b));
            r.label_correct += usize::from(correct);
        }
    }

    let mut visible = BTreeSet::new();
    let stride = opts.stride.max(1) as usize;
    let k = &scene.intrinsics;
    for i in (0..scene.frame_count()).filter(|&i| opts.keyframe_every > 0 && i.is_multiple_of(opts.keyframe_every)) {
        let frame = render_frame(scene, i);
        let pose_wc = frame.pose_cw.inverse();
        let (w, h) = frame.depth.dimensions();
        for v in (0..h).step_by(stride) {
            for u in (0..w).step_by(stride) {
                if !matches!(frame.hit(u, v), Some(ObjectRef::Static(_))) {
                    continue;
                }
                let raw = frame.depth.get_pixel(u, v).0[0] as f64;
                let Ok(pc) = k.backproject(u as f64, v as f64, raw) else {
                    continue;
                };
                if let Ok(key) = map.key_for(&pose_wc.transform_point(&pc)) {
                    visible.insert(key);
                }
            }
        }
    }
    r.static_visible = visible.len();
    r.static_occupied = visible.iter().filter(|k| map.is_key_occupied(**k)).count();

    r.swept_fraction = ratio(r.swept_occupied, r.occupied);
    r.static_coverage = ratio(r.static_occupied, r.static_visible);
    r.label_accuracy = ratio(r.label_correct, r.labeled);
    r
}
