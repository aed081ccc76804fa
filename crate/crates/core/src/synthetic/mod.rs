//! Synthetic RGB-D scenes with known geometry.
//!
//! A scene is a set of static axis-aligned slabs, movable boxes following
//! piecewise-linear paths, and a camera path. [`render_frame`] ray casts it
//! into depth, color and per-pixel object ids. The same ray caster backs both
//! the dataset generator and the map evaluator.

mod eval;
mod generate;
mod render;

pub use eval::{eval_map, swept_region, EvalOptions, MapReport};
pub use generate::{generate_synthetic, DatasetSummary};
pub use render::{raycast, render_frame, Hit, ObjectRef, RenderedFrame};

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::geometry::{Box3D, CameraIntrinsics, ImageSize, PoseSE3};
use crate::labels::ClassId;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StaticSlab {
    pub min: [f64; 3],
    pub max: [f64; 3],
    pub color: [u8; 3],
    /// Class reported by the detector for this slab, if any.
    #[serde(default)]
    pub label: Option<ClassId>,
}

impl StaticSlab {
    /// The slab as a box. Unlabeled slabs get class 0, which callers should
    /// ignore.
    pub fn bbox(&self) -> Box3D {
        Box3D::from_corners(
            Vector3::from(self.min),
            Vector3::from(self.max),
            self.label.unwrap_or(ClassId::from_index(0).expect("class 0 exists")),
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Waypoint {
    /// Seconds since the scene start.
    pub t: f64,
    pub position: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MovableObject {
    pub label: ClassId,
    /// Box edge lengths along x, y, z.
    pub size: [f64; 3],
    pub color: [u8; 3],
    /// Path of the box center.
    pub path: Vec<Waypoint>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraWaypoint {
    pub t: f64,
    /// Camera center in the world frame.
    pub position: [f64; 3],
    /// Rotation about the world y axis, radians.
    #[serde(default)]
    pub yaw: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum DetectorModel {
    /// Exact pixel hulls of the projected boxes.
    Perfect,
    /// Hull corners perturbed by Gaussian pixel noise; each detection is
    /// dropped with probability `drop_probability`.
    Jittered {
        sigma_px: f64,
        drop_probability: f64,
        seed: u64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticScene {
    pub image: ImageSize,
    pub intrinsics: CameraIntrinsics,
    pub fps: f64,
    /// Seconds.
    pub duration: f64,
    /// Timestamp of the first frame.
    pub start_time: f64,
    pub statics: Vec<StaticSlab>,
    pub movables: Vec<MovableObject>,
    pub camera: Vec<CameraWaypoint>,
    pub detector: DetectorModel,
    /// The detector runs on every n-th frame, starting with the first.
    pub keyframe_every: usize,
}

/// Linear interpolation through `(t, value)` knots, held constant outside.
fn interpolate<const N: usize>(knots: impl Iterator<Item = (f64, [f64; N])> + Clone, t: f64) -> [f64; N] {
    let mut prev: Option<(f64, [f64; N])> = None;
    for (tk, vk) in knots.clone() {
        if t <= tk {
            return match prev {
                None => vk,
                Some((tp, vp)) if tk > tp => {
                    let a = (t - tp) / (tk - tp);
                    std::array::from_fn(|i| vp[i] + a * (vk[i] - vp[i]))
                }
                Some(_) => vk,
            };
        }
        prev = Some((tk, vk));
    }
    prev.map(|p| p.1).unwrap_or([0.0; N])
}

impl SyntheticScene {
    /// One person-sized box drifting sideways at 0.1 m/s in front of a back
    /// wall, with a static chair off to the side and a slowly panning camera.
    ///
    /// Front faces sit at voxel-center depths of the default 5 cm grid, and
    /// the person straddles the optical axis for the whole run so only its
    /// front face is ever visible.
    pub fn moving_box() -> Self {
        Self {
            image: ImageSize {
                width: 320,
                height: 240,
            },
            intrinsics: CameraIntrinsics {
                fx: 262.5,
                fy: 262.5,
                cx: 159.5,
                cy: 119.5,
                depth_scale: 5000.0,
            },
            fps: 30.0,
            duration: 3.0,
            start_time: 1000.0,
            statics: vec![
                StaticSlab {
                    min: [-4.0, -3.0, 4.025],
                    max: [4.0, 3.0, 4.3],
                    color: [200, 200, 190],
                    label: None,
                },
                StaticSlab {
                    min: [1.0, 0.1, 3.025],
                    max: [1.5, 0.7, 3.5],
                    color: [120, 80, 40],
                    label: Some(ClassId::CHAIR),
                },
            ],
            movables: vec![MovableObject {
                label: ClassId::PERSON,
                size: [0.6, 1.2, 0.6],
                color: [220, 60, 60],
                path: vec![
                    Waypoint {
                        t: 0.0,
                        position: [-0.15, -0.1, 2.325],
                    },
                    Waypoint {
                        t: 3.0,
                        position: [0.15, -0.1, 2.325],
                    },
                ],
            }],
            camera: vec![
                CameraWaypoint {
                    t: 0.0,
                    position: [0.0, 0.0, 0.0],
                    yaw: 0.0,
                },
                CameraWaypoint {
                    t: 3.0,
                    position: [0.06, 0.0, 0.0],
                    yaw: 0.0,
                },
            ],
            detector: DetectorModel::Perfect,
            keyframe_every: 5,
        }
    }

    pub fn frame_count(&self) -> usize {
        (self.duration * self.fps).round() as usize
    }

    /// Seconds since the scene start of frame `i`.
    pub fn frame_offset(&self, i: usize) -> f64 {
        i as f64 / self.fps
    }

    /// Absolute timestamp of frame `i`, rounded to the microsecond precision
    /// used in the dataset files.
    pub fn frame_time(&self, i: usize) -> f64 {
        ((self.start_time + self.frame_offset(i)) * 1e6).round() / 1e6
    }

    pub fn is_keyframe(&self, i: usize) -> bool {
        self.keyframe_every > 0 && i.is_multiple_of(self.keyframe_every)
    }

    /// World-to-camera pose at `offset` seconds after the start.
    pub fn camera_pose(&self, offset: f64) -> PoseSE3 {
        let p = interpolate(self.camera.iter().map(|w| (w.t, w.position)), offset);
        let [yaw] = interpolate(self.camera.iter().map(|w| (w.t, [w.yaw])), offset);
        let pose_wc = PoseSE3::from_translation(p[0], p[1], p[2]).compose(&PoseSE3::rot_y(yaw));
        pose_wc.inverse()
    }

    /// World box of movable object `i` at `offset` seconds after the start.
    pub fn movable_box(&self, i: usize, offset: f64) -> Box3D {
        let m = &self.movables[i];
        let c = Vector3::from(interpolate(m.path.iter().map(|w| (w.t, w.position)), offset));
        let half = Vector3::from(m.size) / 2.0;
        Box3D::from_corners(c - half, c + half, m.label).with_track_id(Some(i as u64))
    }
}
