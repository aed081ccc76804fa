use std::fmt::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::render::{render_frame, ObjectRef, RenderedFrame};
use super::{DetectorModel, SyntheticScene};
use crate::dataset::{write_camera, write_trajectory, DatasetError, Trajectory};
use crate::fusion::pixel_hull;
use crate::geometry::{transform_box, Box2D, Box3D, Detection2D};
use crate::labels::ClassId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct DatasetSummary {
    pub frames: usize,
    /// Frames with at least one detection.
    pub detection_frames: usize,
    pub detections: usize,
}

/// Objects a detector can report: every movable object and every labeled
/// static slab, with their world boxes at `offset`.
fn detectable(scene: &SyntheticScene, offset: f64) -> Vec<(ObjectRef, ClassId, Box3D)> {
    let statics = scene
        .statics
        .iter()
        .enumerate()
        .filter_map(|(i, s)| s.label.map(|l| (ObjectRef::Static(i), l, s.bbox())));
    let movables = (0..scene.movables.len()).map(|i| {
        let b = scene.movable_box(i, offset);
        (ObjectRef::Movable(i), b.label, b)
    });
    statics.chain(movables).collect()
}

/// Detections for one rendered frame.
///
/// An object is reported when its whole box is in front of the camera, its
/// pixel hull overlaps the image, and the pixel at the hull center sees the
/// object itself. The center depth is read from the rendered depth image.
pub fn detect(
    scene: &SyntheticScene,
    i: usize,
    frame: &RenderedFrame,
    noise: Option<(&mut ChaCha8Rng, Normal<f64>, f64)>,
) -> Vec<Detection2D> {
    let k = &scene.intrinsics;
    let (w, h) = (frame.depth.width(), frame.depth.height());
    let image = Box2D::new(0.0, 0.0, (w - 1) as f64, (h - 1) as f64);
    let mut noise = noise;
    let mut out = Vec::new();
    for (object, label, world) in detectable(scene, scene.frame_offset(i)) {
        let cam = transform_box(&frame.pose_cw, &world);
        if cam.p1.z <= 0.0 {
            continue;
        }
        let Some(mut hull) = pixel_hull(&cam, k) else {
            continue;
        };
        if let Some((rng, normal, drop)) = noise.as_mut() {
            if rng.random::<f64>() < *drop {
                continue;
            }
            let mut j = || normal.sample(*rng);
            let (a, b, c, d) = (j(), j(), j(), j());
            hull = Box2D::from_corners(hull.min + nalgebra::Vector2::new(a, b), hull.max + nalgebra::Vector2::new(c, d));
        }
        if hull.intersection_area(&image) <= 0.0 {
            continue;
        }
        let c = hull.center();
        let (u, v) = (c.x.round(), c.y.round());
        if u < 0.0 || v < 0.0 || u >= w as f64 || v >= h as f64 {
            continue;
        }
        let (u, v) = (u as u32, v as u32);
        if frame.hit(u, v) != Some(object) {
            continue;
        }
        out.push(Detection2D {
            label,
            score: 1.0,
            bbox: hull,
            center_depth: frame.depth.get_pixel(u, v).0[0] as f64 / k.depth_scale,
        });
    }
    out
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> DatasetError + '_ {
    move |source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn write_text(path: &Path, text: &str) -> Result<(), DatasetError> {
    std::fs::write(path, text).map_err(io_err(path))
}

/// Renders the scene into a TUM-layout directory.
///
/// Writes `rgb/`, `depth/` (16-bit PNG), `rgb.txt`, `depth.txt`,
/// `groundtruth.txt`, `camera.txt`, `detections.txt`, `boxes_gt.txt`
/// (`timestamp object_id label x1 y1 z1 x2 y2 z2` per movable object and
/// frame) and `scene.json`.
pub fn generate_synthetic(scene: &SyntheticScene, out_dir: &Path) -> Result<DatasetSummary, DatasetError> {
    for sub in ["rgb", "depth"] {
        let d = out_dir.join(sub);
        std::fs::create_dir_all(&d).map_err(io_err(&d))?;
    }
    let mut rng_state = match scene.detector {
        DetectorModel::Perfect => None,
        DetectorModel::Jittered {
            sigma_px,
            drop_probability,
            seed,
        } => Some((
            ChaCha8Rng::seed_from_u64(seed),
            Normal::new(0.0, sigma_px.max(0.0)).expect("finite sigma"),
            drop_probability,
        )),
    };

    let mut rgb_index = String::from("# color images\n# timestamp filename\n");
    let mut depth_index = String::from("# depth images\n# timestamp filename\n");
    let mut dets = String::from("# timestamp label score xmin ymin xmax ymax center_depth\n");
    let mut gt_boxes = String::from("# timestamp object_id label x1 y1 z1 x2 y2 z2\n");
    let mut poses = Vec::new();
    let mut summary = DatasetSummary::default();

    for i in 0..scene.frame_count() {
        let t = scene.frame_time(i);
        let frame = render_frame(scene, i);
        let name = format!("{t:.6}.png");
        for (sub, index) in [("rgb", &mut rgb_index), ("depth", &mut depth_index)] {
            let _ = writeln!(index, "{t:.6} {sub}/{name}");
        }
        let rgb_path = out_dir.join("rgb").join(&name);
        frame
            .rgb
            .save(&rgb_path)
            .map_err(|e| io_err(&rgb_path)(std::io::Error::other(e)))?;
        let depth_path = out_dir.join("depth").join(&name);
        frame
            .depth
            .save(&depth_path)
            .map_err(|e| io_err(&depth_path)(std::io::Error::other(e)))?;
        poses.push((t, frame.pose_cw));

        if scene.is_keyframe(i) {
            let noise = rng_state.as_mut().map(|(r, n, d)| (r, *n, *d));
            let found = detect(scene, i, &frame, noise);
            summary.detection_frames += usize::from(!found.is_empty());
            summary.detections += found.len();
            for d in found {
                let _ = writeln!(
                    dets,
                    "{t:.6} {} {} {} {} {} {} {}",
                    d.label, d.score, d.bbox.min.x, d.bbox.min.y, d.bbox.max.x, d.bbox.max.y, d.center_depth
                );
            }
        }
        for j in 0..scene.movables.len() {
            let b = scene.movable_box(j, scene.frame_offset(i));
            let _ = writeln!(
                gt_boxes,
                "{t:.6} {j} {} {:.6} {:.6} {:.6} {:.6} {:.6} {:.6}",
                b.label, b.p1.x, b.p1.y, b.p1.z, b.p2.x, b.p2.y, b.p2.z
            );
        }
        summary.frames += 1;
    }

    write_text(&out_dir.join("rgb.txt"), &rgb_index)?;
    write_text(&out_dir.join("depth.txt"), &depth_index)?;
    write_text(&out_dir.join("detections.txt"), &dets)?;
    write_text(&out_dir.join("boxes_gt.txt"), &gt_boxes)?;
    write_trajectory(&Trajectory::new(poses), &out_dir.join("groundtruth.txt"))?;
    write_camera(&scene.intrinsics, &out_dir.join("camera.txt"))?;
    let json = serde_json::to_string_pretty(scene).expect("scene serializes");
    write_text(&out_dir.join("scene.json"), &json)?;
    Ok(summary)
}
