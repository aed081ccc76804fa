use image::{Luma, Rgb, RgbImage};
use nalgebra::Vector3;

use super::SyntheticScene;
use crate::geometry::{Box3D, PoseSE3};
use crate::octree::DepthImage;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ObjectRef {
    Static(usize),
    Movable(usize),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hit {
    /// Ray parameter at the hit. For rays built as `R_wc * (x, y, 1)` this
    /// is the camera-frame depth.
    pub t: f64,
    pub object: ObjectRef,
}

/// Entry parameter of the ray `o + t * d` into `b`, for hits in front of the
/// origin. Origins inside the box do not count as hits.
fn ray_box(o: &Vector3<f64>, d: &Vector3<f64>, b: &Box3D) -> Option<f64> {
    let mut t0 = f64::NEG_INFINITY;
    let mut t1 = f64::INFINITY;
    for i in 0..3 {
        if d[i] == 0.0 {
            if o[i] < b.p1[i] || o[i] > b.p2[i] {
                return None;
            }
            continue;
        }
        let a = (b.p1[i] - o[i]) / d[i];
        let c = (b.p2[i] - o[i]) / d[i];
        t0 = t0.max(a.min(c));
        t1 = t1.min(a.max(c));
    }
    (t0 <= t1 && t0 > 0.0).then_some(t0)
}

/// Nearest object hit along a world-frame ray at `offset` seconds into the
/// scene. Ties go to static objects, then to lower indices.
pub fn raycast(scene: &SyntheticScene, offset: f64, origin: &Vector3<f64>, dir: &Vector3<f64>) -> Option<Hit> {
    let statics = scene
        .statics
        .iter()
        .enumerate()
        .map(|(i, s)| (s.bbox(), ObjectRef::Static(i)));
    let movables = (0..scene.movables.len()).map(|i| (scene.movable_box(i, offset), ObjectRef::Movable(i)));
    let mut best: Option<Hit> = None;
    for (b, object) in statics.chain(movables) {
        if let Some(t) = ray_box(origin, dir, &b) {
            if best.is_none_or(|h| t < h.t) {
                best = Some(Hit { t, object });
            }
        }
    }
    best
}

#[derive(Debug, Clone)]
pub struct RenderedFrame {
    pub pose_cw: PoseSE3,
    /// Raw depth, `depth_scale` units per meter; 0 where nothing is hit.
    pub depth: DepthImage,
    pub rgb: RgbImage,
    /// Row-major object ids; `None` where the depth is 0.
    pub hits: Vec<Option<ObjectRef>>,
}

impl RenderedFrame {
    pub fn hit(&self, u: u32, v: u32) -> Option<ObjectRef> {
        self.hits[(v * self.depth.width() + u) as usize]
    }
}

/// Renders frame `i` by casting one ray through every integer pixel.
pub fn render_frame(scene: &SyntheticScene, i: usize) -> RenderedFrame {
    let offset = scene.frame_offset(i);
    let pose_cw = scene.camera_pose(offset);
    let pose_wc = pose_cw.inverse();
    let origin = *pose_wc.translation();
    let k = &scene.intrinsics;
    let (w, h) = (scene.image.width, scene.image.height);
    let mut depth = DepthImage::new(w, h);
    let mut rgb = RgbImage::new(w, h);
    let mut hits = vec![None; (w * h) as usize];
    for v in 0..h {
        for u in 0..w {
            let dc = Vector3::new((u as f64 - k.cx) / k.fx, (v as f64 - k.cy) / k.fy, 1.0);
            let dir = pose_wc.rotation() * dc;
            let Some(hit) = raycast(scene, offset, &origin, &dir) else {
                continue;
            };
            let raw = (hit.t * k.depth_scale).round();
            if !(1.0..=u16::MAX as f64).contains(&raw) {
                continue;
            }
            depth.put_pixel(u, v, Luma([raw as u16]));
            let color = match hit.object {
                ObjectRef::Static(j) => scene.statics[j].color,
                ObjectRef::Movable(j) => scene.movables[j].color,
            };
            rgb.put_pixel(u, v, Rgb(color));
            hits[(v * w + u) as usize] = Some(hit.object);
        }
    }
    RenderedFrame {
        pose_cw,
        depth,
        rgb,
        hits,
    }
}

#[cfg(test)]
mod tests {
    use super::super::{DetectorModel, MovableObject, StaticSlab, Waypoint};
    use super::*;
    use crate::geometry::{CameraIntrinsics, ImageSize};
    use crate::labels::ClassId;

    fn cube_scene() -> SyntheticScene {
        SyntheticScene {
            image: ImageSize { width: 64, height: 48 },
            intrinsics: CameraIntrinsics {
                fx: 50.0,
                fy: 50.0,
                cx: 32.0,
                cy: 24.0,
                depth_scale: 5000.0,
            },
            fps: 10.0,
            duration: 1.0,
            start_time: 0.0,
            statics: vec![],
            movables: vec![MovableObject {
                label: ClassId::PERSON,
                size: [1.0, 1.0, 1.0],
                color: [1, 2, 3],
                path: vec![Waypoint {
                    t: 0.0,
                    position: [0.0, 0.0, 2.5],
                }],
            }],
            camera: vec![],
            detector: DetectorModel::Perfect,
            keyframe_every: 1,
        }
    }

    #[test]
    fn unit_cube_two_meters_ahead() {
        let scene = cube_scene();
        let f = render_frame(&scene, 0);
        assert_eq!(f.depth.get_pixel(32, 24).0[0], 10000);
        assert_eq!(f.hit(32, 24), Some(ObjectRef::Movable(0)));
        assert_eq!(f.rgb.get_pixel(32, 24).0, [1, 2, 3]);
        // The front face spans +-0.5 m at 2 m: +-12.5 px around the center.
        assert_eq!(f.hit(32 + 12, 24), Some(ObjectRef::Movable(0)));
        assert_eq!(f.hit(32 + 13, 24), None);
        assert_eq!(f.depth.get_pixel(0, 0).0[0], 0);
    }

    #[test]
    fn nearest_surface_wins() {
        let mut scene = cube_scene();
        scene.statics.push(StaticSlab {
            min: [-5.0, -5.0, 4.0],
            max: [5.0, 5.0, 4.5],
            color: [9, 9, 9],
            label: None,
        });
        let f = render_frame(&scene, 0);
        assert_eq!(f.depth.get_pixel(32, 24).0[0], 10000);
        assert_eq!(f.hit(0, 0), Some(ObjectRef::Static(0)));
        // corner ray: z = 4 along a direction with unit z component
        assert_eq!(f.depth.get_pixel(0, 0).0[0], 20000);
    }

    #[test]
    fn ray_box_cases() {
        let b = Box3D::from_corners(Vector3::new(-1.0, -1.0, 2.0), Vector3::new(1.0, 1.0, 3.0), ClassId::PERSON);
        let o = Vector3::zeros();
        assert_eq!(ray_box(&o, &Vector3::z(), &b), Some(2.0));
        assert_eq!(ray_box(&o, &-Vector3::z(), &b), None);
        assert_eq!(ray_box(&Vector3::new(0.0, 0.0, 2.5), &Vector3::z(), &b), None);
        assert_eq!(ray_box(&Vector3::new(5.0, 0.0, 0.0), &Vector3::z(), &b), None);
        assert_eq!(ray_box(&o, &Vector3::new(0.5, 0.0, 1.0), &b), Some(2.0));
    }
}
