//! World-frame prediction of movable objects between keyframes.
//!
//! At a keyframe, movable detections are lifted to world boxes and each box
//! is projected onto the three world planes, where an independent plane
//! tracker follows it. Every frame (keyframe or not) the plane tracks are
//! fused back into world boxes and mapped into the current camera frame.

mod cull;
mod fuse;

pub use cull::{cull_keypoints, cull_regions, pixel_hull, CullResult};
pub use fuse::{fuse_planes, primary_plane, FusedBoxes, LatestInfo};

use thiserror::Error;

use crate::geometry::{
    lift_detection_with, project_to_plane, transform_box, Box3D, CameraIntrinsics, DepthExtent,
    Detection2D, Plane, PoseSE3,
};
use crate::labels::MovableClasses;
use crate::tracker::{PlaneBox, PlaneDetection, PlaneTracker, TrackerConfig, TrackerError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FusionError {
    #[error("frame time {t} precedes the last processed time {last}")]
    TimeWentBackwards { t: f64, last: f64 },
    #[error(transparent)]
    Tracker(#[from] TrackerError),
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct FusionConfig {
    pub tracker: TrackerConfig,
    pub movable: MovableClasses,
    pub depth_extent: DepthExtent,
}

/// Predicted movable boxes for one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionResult {
    pub timestamp: f64,
    pub boxes_world: Vec<Box3D>,
    /// `transform_box(pose_cw, boxes_world[i])` for every `i`.
    pub boxes_camera: Vec<Box3D>,
    /// Boxes lost in fusion because no coordinate source was available.
    pub dropped: usize,
}

impl PredictionResult {
    pub fn new(timestamp: f64, boxes_world: Vec<Box3D>, pose_cw: &PoseSE3) -> Self {
        let boxes_camera = boxes_world.iter().map(|b| transform_box(pose_cw, b)).collect();
        Self {
            timestamp,
            boxes_world,
            boxes_camera,
            dropped: 0,
        }
    }

    pub fn empty(timestamp: f64) -> Self {
        Self::new(timestamp, Vec::new(), &PoseSE3::identity())
    }

    pub fn is_empty(&self) -> bool {
        self.boxes_world.is_empty()
    }
}

/// Result of feeding one keyframe's detections to the engine.
#[derive(Debug, Clone, PartialEq)]
pub struct KeyframeOutcome {
    pub prediction: PredictionResult,
    /// World boxes lifted from this keyframe's movable detections.
    pub lifted: Vec<Box3D>,
    /// Detections skipped for non-positive or non-finite center depth.
    pub invalid_depth: usize,
    /// Detections of classes outside the movable set.
    pub not_movable: usize,
}

/// Tracks movable objects on the three world planes.
///
/// Single writer: both [`ingest_keyframe`](Self::ingest_keyframe) and
/// [`predict_frame`](Self::predict_frame) advance the trackers.
#[derive(Debug, Clone)]
pub struct FusionEngine {
    cfg: FusionConfig,
    trackers: [PlaneTracker; 3],
    latest: LatestInfo,
    keyframe_pose: Option<PoseSE3>,
    last_time: Option<f64>,
}

impl FusionEngine {
    pub fn new(cfg: FusionConfig) -> Result<Self, FusionError> {
        let tracker = PlaneTracker::new(cfg.tracker)?;
        Ok(Self {
            trackers: [tracker.clone(), tracker.clone(), tracker],
            cfg,
            latest: LatestInfo::default(),
            keyframe_pose: None,
            last_time: None,
        })
    }

    pub fn config(&self) -> &FusionConfig {
        &self.cfg
    }

    pub fn tracker(&self, plane: Plane) -> &PlaneTracker {
        &self.trackers[plane.index()]
    }

    pub fn latest(&self) -> &LatestInfo {
        &self.latest
    }

    /// Pose of the most recent keyframe.
    pub fn keyframe_pose(&self) -> Option<&PoseSE3> {
        self.keyframe_pose.as_ref()
    }

    pub fn active_tracks(&self) -> usize {
        self.trackers.iter().map(|t| t.tracks().len()).max().unwrap_or(0)
    }

    fn advance_clock(&mut self, t: f64) -> Result<f64, FusionError> {
        let dt = match self.last_time {
            None => 0.0,
            Some(last) if t < last => return Err(FusionError::TimeWentBackwards { t, last }),
            Some(last) => t - last,
        };
        self.last_time = Some(t);
        Ok(dt)
    }

    fn finish(&self, emitted: [Vec<PlaneBox>; 3], pose_cw: &PoseSE3, t: f64) -> PredictionResult {
        let fused = fuse_planes(&emitted, &self.latest);
        let mut pred = PredictionResult::new(t, fused.boxes, pose_cw);
        pred.dropped = fused.dropped;
        debug_assert!(pred
            .boxes_world
            .iter()
            .zip(&pred.boxes_camera)
            .all(|(w, c)| transform_box(pose_cw, w) == *c));
        pred
    }

    /// Keyframe branch: lift, track with detections, fuse.
    pub fn ingest_keyframe(
        &mut self,
        detections: &[Detection2D],
        pose_cw: &PoseSE3,
        k: &CameraIntrinsics,
        t: f64,
    ) -> Result<KeyframeOutcome, FusionError> {
        let mut lifted = Vec::new();
        let mut invalid_depth = 0;
        let mut not_movable = 0;
        for d in detections {
            if !self.cfg.movable.contains(d.label) {
                not_movable += 1;
                continue;
            }
            match lift_detection_with(d, pose_cw, k, self.cfg.depth_extent) {
                Ok(b) => lifted.push(b),
                Err(_) => invalid_depth += 1,
            }
        }

        let dt = self.advance_clock(t)?;
        let mut emitted: [Vec<PlaneBox>; 3] = Default::default();
        for plane in Plane::ALL {
            let dets: Vec<PlaneDetection> = lifted
                .iter()
                .map(|b| PlaneDetection {
                    rect: project_to_plane(b, plane),
                    label: b.label,
                })
                .collect();
            let tracker = &mut self.trackers[plane.index()];
            let outcome = tracker.step(Some(&dets), dt)?;
            let links = &mut self.latest.per_track[plane.index()];
            for (track_id, det) in outcome.associations {
                links.insert(track_id, lifted[det]);
            }
            links.retain(|id, _| tracker.track(*id).is_some());
            emitted[plane.index()] = outcome.emitted;
        }
        self.latest.boxes = lifted.clone();
        self.keyframe_pose = Some(*pose_cw);

        Ok(KeyframeOutcome {
            prediction: self.finish(emitted, pose_cw, t),
            lifted,
            invalid_depth,
            not_movable,
        })
    }

    /// Non-keyframe branch: coast every plane track to `t` and fuse.
    ///
    /// Returns an empty result before the first keyframe.
    pub fn predict_frame(&mut self, pose_cw: &PoseSE3, t: f64) -> Result<PredictionResult, FusionError> {
        if self.keyframe_pose.is_none() {
            return Ok(PredictionResult::empty(t));
        }
        let dt = self.advance_clock(t)?;
        let mut emitted: [Vec<PlaneBox>; 3] = Default::default();
        for plane in Plane::ALL {
            emitted[plane.index()] = self.trackers[plane.index()].step(None, dt)?.emitted;
        }
        Ok(self.finish(emitted, pose_cw, t))
    }
}
