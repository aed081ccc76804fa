//! SORT-style multi-object tracking on one coordinate plane.

mod hungarian;
mod kalman;

pub use hungarian::{assignment_cost, hungarian_assign};
pub use kalman::{KalmanBoxState, NoiseModel, StateCovariance, StateVector, MIN_AREA};

use nalgebra::DMatrix;
use thiserror::Error;

use crate::geometry::Box2D;
use crate::labels::ClassId;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TrackerError {
    #[error("observation has no area (width {width}, height {height})")]
    DegenerateObservation { width: f64, height: f64 },
    #[error("innovation covariance is singular")]
    SingularInnovation,
    #[error("time step must be non-negative and finite, got {0}")]
    NegativeTimeStep(f64),
    #[error("invalid tracker configuration: {0}")]
    InvalidConfig(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackerConfig {
    /// Minimum IOU for an assignment to count as a match.
    pub iou_gate: f64,
    /// Keyframes without a match before a track is deleted.
    pub max_age: u32,
    /// Matches required before a track is emitted.
    pub min_hits: u32,
    pub process_noise: f64,
    pub measurement_noise: f64,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        Self {
            iou_gate: 0.3,
            max_age: 3,
            min_hits: 1,
            process_noise: 1e-3,
            measurement_noise: 1e-4,
        }
    }
}

impl TrackerConfig {
    pub fn validate(&self) -> Result<(), TrackerError> {
        if !(0.0..=1.0).contains(&self.iou_gate) {
            return Err(TrackerError::InvalidConfig("iou_gate must lie in [0, 1]"));
        }
        if self.max_age < 1 {
            return Err(TrackerError::InvalidConfig("max_age must be at least 1"));
        }
        if self.min_hits < 1 {
            return Err(TrackerError::InvalidConfig("min_hits must be at least 1"));
        }
        if !(self.process_noise >= 0.0 && self.measurement_noise > 0.0) {
            return Err(TrackerError::InvalidConfig(
                "noise scales must be finite, measurement noise positive",
            ));
        }
        Ok(())
    }

    pub fn noise(&self) -> NoiseModel {
        NoiseModel {
            process: self.process_noise,
            measurement: self.measurement_noise,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlaneTrack {
    pub track_id: u64,
    pub kalman: KalmanBoxState,
    pub hits: u32,
    pub age_since_update: u32,
    pub label: ClassId,
}

impl PlaneTrack {
    pub fn rect(&self) -> Box2D {
        self.kalman.to_box()
    }
}

/// A detection projected onto the tracker's plane.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlaneDetection {
    pub rect: Box2D,
    pub label: ClassId,
}

/// A box emitted by a tracker step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlaneBox {
    pub track_id: u64,
    pub label: ClassId,
    pub rect: Box2D,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct StepOutcome {
    /// Boxes of tracks with enough hits, ordered by track id.
    pub emitted: Vec<PlaneBox>,
    /// `(track_id, detection index)` for every updated or newly spawned track.
    pub associations: Vec<(u64, usize)>,
    /// Detections ignored because they had no area.
    pub skipped_degenerate: usize,
    /// Tracks removed for exceeding `max_age`.
    pub deleted: usize,
}

/// Tracks on one plane. Single writer: `step` takes `&mut self`.
#[derive(Debug, Clone)]
pub struct PlaneTracker {
    cfg: TrackerConfig,
    tracks: Vec<PlaneTrack>,
    next_id: u64,
}

impl PlaneTracker {
    pub fn new(cfg: TrackerConfig) -> Result<Self, TrackerError> {
        cfg.validate()?;
        Ok(Self {
            cfg,
            tracks: Vec::new(),
            next_id: 0,
        })
    }

    pub fn config(&self) -> &TrackerConfig {
        &self.cfg
    }

    pub fn tracks(&self) -> &[PlaneTrack] {
        &self.tracks
    }

    pub fn track(&self, id: u64) -> Option<&PlaneTrack> {
        self.tracks.iter().find(|t| t.track_id == id)
    }

    /// Advances every track by `dt` seconds and, when `detections` is
    /// `Some`, associates and updates.
    ///
    /// `None` means no detector ran for this frame: tracks coast without any
    /// lifecycle change. `Some(&[])` is a keyframe with nothing detected, and
    /// ages every track.
    pub fn step(
        &mut self,
        detections: Option<&[PlaneDetection]>,
        dt: f64,
    ) -> Result<StepOutcome, TrackerError> {
        if !dt.is_finite() || dt < 0.0 {
            return Err(TrackerError::NegativeTimeStep(dt));
        }
        let noise = self.cfg.noise();
        for t in &mut self.tracks {
            t.kalman = t.kalman.predict(dt, &noise);
        }

        let mut outcome = StepOutcome::default();
        if let Some(dets) = detections {
            let valid: Vec<usize> = (0..dets.len())
                .filter(|&i| dets[i].rect.width() > 0.0 && dets[i].rect.height() > 0.0)
                .collect();
            outcome.skipped_degenerate = dets.len() - valid.len();

            let predicted: Vec<Box2D> = self.tracks.iter().map(PlaneTrack::rect).collect();
            let iou = DMatrix::from_fn(predicted.len(), valid.len(), |i, j| {
                predicted[i].iou(&dets[valid[j]].rect)
            });
            let cost = iou.map(|v| 1.0 - v);
            let mut track_matched = vec![false; self.tracks.len()];
            let mut det_matched = vec![false; valid.len()];
            for (ti, dj) in hungarian_assign(&cost) {
                if iou[(ti, dj)] < self.cfg.iou_gate {
                    continue;
                }
                let det = &dets[valid[dj]];
                let track = &mut self.tracks[ti];
                track.kalman = track.kalman.update(&det.rect, &noise)?;
                track.hits += 1;
                track.age_since_update = 0;
                track_matched[ti] = true;
                det_matched[dj] = true;
                outcome.associations.push((track.track_id, valid[dj]));
            }
            for (track, matched) in self.tracks.iter_mut().zip(&track_matched) {
                if !matched {
                    track.age_since_update += 1;
                }
            }
            for (dj, matched) in det_matched.iter().enumerate() {
                if *matched {
                    continue;
                }
                let det = &dets[valid[dj]];
                let id = self.next_id;
                self.next_id += 1;
                self.tracks.push(PlaneTrack {
                    track_id: id,
                    kalman: KalmanBoxState::from_box(&det.rect, &noise)?,
                    hits: 1,
                    age_since_update: 0,
                    label: det.label,
                });
                outcome.associations.push((id, valid[dj]));
            }
            let before = self.tracks.len();
            let max_age = self.cfg.max_age;
            self.tracks.retain(|t| t.age_since_update <= max_age);
            outcome.deleted = before - self.tracks.len();
            outcome.associations.sort_unstable();
        }

        outcome.emitted = self
            .tracks
            .iter()
            .filter(|t| t.hits >= self.cfg.min_hits)
            .map(|t| PlaneBox {
                track_id: t.track_id,
                label: t.label,
                rect: t.rect(),
            })
            .collect();
        outcome.emitted.sort_by_key(|b| b.track_id);
        Ok(outcome)
    }
}
