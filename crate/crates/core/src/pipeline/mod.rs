//! End-to-end orchestration over a TUM-layout sequence.
//!
//! Frames are processed in timestamp order. Keyframes feed their detections
//! to the fusion engine and insert a labeled point cloud into the map; every
//! other frame gets a prediction. Every processed frame culls a grid of
//! keypoints against its predicted boxes.

mod report;

pub use report::{RunReport, StageTimes};

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::mpsc;
use std::thread;
use std::time::Instant;

use nalgebra::Vector2;
use thiserror::Error;

use crate::dataset::{
    load_camera, load_detections, load_trajectory, load_tum_sequence, DatasetError, FrameRecord,
};
use crate::fusion::{cull_keypoints, FusionConfig, FusionEngine, FusionError, PredictionResult};
use crate::geometry::{lift_detection_with, CameraIntrinsics, Detection2D, PoseSE3};
use crate::octree::{
    cloud_from_depth, export_map, DepthImage, ExportFormat, InsertStats, LabeledPoint, MapConfig, MapError,
    OccupancyOctree, SemanticBox,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KeyframePolicy {
    /// Frames carrying detections are keyframes.
    FromDetections,
    /// Every n-th frame, starting with the first. Detections attached to
    /// other frames are ignored.
    EveryN(usize),
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct OutputPaths {
    pub map: Option<PathBuf>,
    pub boxes: Option<PathBuf>,
    /// Per-frame `timestamp kept removed` keypoint counts.
    pub points: Option<PathBuf>,
    pub metrics: Option<PathBuf>,
    pub ply: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub sequence_dir: PathBuf,
    pub detections: Option<PathBuf>,
    /// Poses to use instead of the sequence's `groundtruth.txt`.
    pub trajectory: Option<PathBuf>,
    /// Defaults to `camera.txt` in the sequence, then the TUM defaults.
    pub camera: Option<CameraIntrinsics>,
    pub keyframe_policy: KeyframePolicy,
    pub fusion: FusionConfig,
    pub map: MapConfig,
    /// Depth-image pixel stride for map insertion.
    pub stride: u32,
    /// Pixel margin around predicted boxes when culling keypoints.
    pub margin: f64,
    /// Meters added around semantic boxes before labeling points.
    pub box_margin: f64,
    /// Label map points from detections and predictions. When off, every
    /// point is inserted as static.
    pub semantic: bool,
    /// Spacing of the keypoint grid sampled on each frame, pixels.
    pub keypoint_spacing: u32,
    /// Append camera-frame corners to each box line.
    pub camera_frame_boxes: bool,
    /// Insert into the map on the calling thread. When off, insertion runs
    /// on a worker fed through a bounded queue.
    pub deterministic: bool,
    pub outputs: OutputPaths,
}

impl RunConfig {
    pub fn new(sequence_dir: impl Into<PathBuf>, keyframe_policy: KeyframePolicy) -> Self {
        Self {
            sequence_dir: sequence_dir.into(),
            detections: None,
            trajectory: None,
            camera: None,
            keyframe_policy,
            fusion: FusionConfig::default(),
            map: MapConfig::default(),
            stride: 2,
            margin: 0.0,
            box_margin: 0.02,
            semantic: true,
            keypoint_spacing: 8,
            camera_frame_boxes: false,
            deterministic: true,
            outputs: OutputPaths::default(),
        }
    }
}

#[derive(Debug, Error)]
pub enum FrameError {
    #[error(transparent)]
    Fusion(#[from] FusionError),
    #[error("{path}: {source}")]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },
    #[error(transparent)]
    Map(#[from] MapError),
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Map(#[from] MapError),
    #[error(transparent)]
    Fusion(#[from] FusionError),
    #[error("frame {timestamp:.6}: {source}")]
    Frame {
        timestamp: f64,
        #[source]
        source: FrameError,
    },
    #[error("{path}: {source}")]
    Output {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// What happened at one processed frame.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameOutput {
    pub timestamp: f64,
    pub keyframe: bool,
    pub prediction: PredictionResult,
    pub kept: usize,
    pub removed: usize,
}

#[derive(Debug)]
pub struct RunOutput {
    pub report: RunReport,
    pub map: OccupancyOctree,
    pub frames: Vec<FrameOutput>,
}

/// Keypoints on a regular grid, offset by half a cell from the image corner.
pub fn keypoint_grid(width: u32, height: u32, spacing: u32) -> Vec<Vector2<f64>> {
    let s = spacing.max(1);
    let half = s / 2;
    (half..height)
        .step_by(s as usize)
        .flat_map(|v| (half..width).step_by(s as usize).map(move |u| Vector2::new(u as f64, v as f64)))
        .collect()
}

/// Boxes that label a keyframe's points: every lifted detection (movable or
/// not) plus the fused movable prediction, all inflated by `margin`.
pub fn semantic_boxes(
    detections: &[Detection2D],
    prediction: &PredictionResult,
    pose_cw: &PoseSE3,
    k: &CameraIntrinsics,
    fusion: &FusionConfig,
    margin: f64,
) -> Vec<SemanticBox> {
    let lifted = detections.iter().filter_map(|d| {
        lift_detection_with(d, pose_cw, k, fusion.depth_extent)
            .ok()
            .map(|b| SemanticBox {
                bbox: b.inflate(margin),
                movable: fusion.movable.contains(d.label),
            })
    });
    let predicted = prediction.boxes_world.iter().map(|b| SemanticBox {
        bbox: b.inflate(margin),
        movable: true,
    });
    lifted.chain(predicted).collect()
}

fn load_keyframe_cloud(
    frame: &FrameRecord,
    pose_cw: &PoseSE3,
    k: &CameraIntrinsics,
    stride: u32,
) -> Result<Vec<LabeledPoint>, FrameError> {
    let open = |p: &Path| {
        image::open(p).map_err(|source| FrameError::Image {
            path: p.to_path_buf(),
            source,
        })
    };
    let rgb = open(&frame.rgb_path)?.into_rgb8();
    let depth: DepthImage = open(&frame.depth_path)?.into_luma16();
    Ok(cloud_from_depth(&rgb, &depth, pose_cw, k, stride)?)
}

type Batch = (Vec<LabeledPoint>, Vec<SemanticBox>);

/// Map insertion, either inline or on a worker thread.
enum Mapper {
    Inline(OccupancyOctree, InsertStats),
    Worker {
        tx: mpsc::SyncSender<Batch>,
        handle: thread::JoinHandle<(OccupancyOctree, InsertStats)>,
    },
}

impl Mapper {
    fn new(map: OccupancyOctree, pipelined: bool) -> Self {
        if !pipelined {
            return Mapper::Inline(map, InsertStats::default());
        }
        let (tx, rx) = mpsc::sync_channel::<Batch>(2);
        let handle = thread::spawn(move || {
            let mut map = map;
            let mut stats = InsertStats::default();
            for (points, boxes) in rx {
                stats += map.insert_labeled_cloud(&points, &boxes);
            }
            (map, stats)
        });
        Mapper::Worker { tx, handle }
    }

    fn insert(&mut self, batch: Batch) {
        match self {
            Mapper::Inline(map, stats) => *stats += map.insert_labeled_cloud(&batch.0, &batch.1),
            Mapper::Worker { tx, .. } => tx.send(batch).expect("map worker alive"),
        }
    }

    fn finish(self) -> (OccupancyOctree, InsertStats) {
        match self {
            Mapper::Inline(map, stats) => (map, stats),
            Mapper::Worker { tx, handle } => {
                drop(tx);
                handle.join().expect("map worker panicked")
            }
        }
    }
}

fn write_output(path: &Path, text: &str) -> Result<(), PipelineError> {
    std::fs::write(path, text).map_err(|source| PipelineError::Output {
        path: path.to_path_buf(),
        source,
    })
}

fn push_boxes(out: &mut String, pred: &PredictionResult, camera_columns: bool) {
    for (w, c) in pred.boxes_world.iter().zip(&pred.boxes_camera) {
        let id = w.track_id.map_or(-1, |i| i as i64);
        let _ = write!(
            out,
            "{:.6} {id} {} {:.6} {:.6} {:.6} {:.6} {:.6} {:.6}",
            pred.timestamp, w.label, w.p1.x, w.p1.y, w.p1.z, w.p2.x, w.p2.y, w.p2.z
        );
        if camera_columns {
            let _ = write!(
                out,
                " {:.6} {:.6} {:.6} {:.6} {:.6} {:.6}",
                c.p1.x, c.p1.y, c.p1.z, c.p2.x, c.p2.y, c.p2.z
            );
        }
        out.push('\n');
    }
}

/// Runs the whole pipeline and writes every configured output.
pub fn run_pipeline(cfg: &RunConfig) -> Result<RunOutput, PipelineError> {
    cfg.map.validate()?;
    if cfg.stride == 0 {
        return Err(PipelineError::Config("stride must be positive".into()));
    }
    if [cfg.margin, cfg.box_margin].iter().any(|m| m.is_nan() || *m < 0.0) {
        return Err(PipelineError::Config("margins must be non-negative".into()));
    }
    match cfg.keyframe_policy {
        KeyframePolicy::EveryN(0) => return Err(PipelineError::Config("keyframe interval must be positive".into())),
        KeyframePolicy::FromDetections if cfg.detections.is_none() => {
            return Err(PipelineError::Config(
                "keyframes from detections need a detections file".into(),
            ))
        }
        _ => {}
    }

    let mut seq = load_tum_sequence(&cfg.sequence_dir)?;
    if let Some(p) = &cfg.trajectory {
        seq.set_poses(&load_trajectory(p)?);
    }
    let k = match cfg.camera {
        Some(k) => k,
        None => {
            let p = cfg.sequence_dir.join("camera.txt");
            if p.exists() {
                load_camera(&p)?
            } else {
                CameraIntrinsics::tum_default()
            }
        }
    };
    let mut report = RunReport {
        frames: seq.frames.len(),
        unmatched_rgb: seq.unmatched,
        ..Default::default()
    };
    if let Some(p) = &cfg.detections {
        report.unmatched_detection_times = seq.attach_detections(&load_detections(p)?);
    }
    if let KeyframePolicy::EveryN(n) = cfg.keyframe_policy {
        seq.mark_every(n);
    }

    let keypoints = match seq.frames.first() {
        Some(f) => {
            let (w, h) = image::image_dimensions(&f.rgb_path).map_err(|source| PipelineError::Frame {
                timestamp: f.timestamp,
                source: FrameError::Image {
                    path: f.rgb_path.clone(),
                    source,
                },
            })?;
            keypoint_grid(w, h, cfg.keypoint_spacing)
        }
        None => Vec::new(),
    };

    let mut engine = FusionEngine::new(cfg.fusion.clone())?;
    let mut mapper = Mapper::new(OccupancyOctree::new(cfg.map)?, !cfg.deterministic);
    let mut frames = Vec::with_capacity(seq.frames.len());
    let mut boxes_text = String::from("# timestamp track_id label x1 y1 z1 x2 y2 z2");
    if cfg.camera_frame_boxes {
        boxes_text.push_str(" cx1 cy1 cz1 cx2 cy2 cz2");
    }
    boxes_text.push('\n');
    let mut points_text = String::from("# timestamp kept removed\n");

    for frame in &seq.frames {
        let t = frame.timestamp;
        let stamp = |source: FrameError| PipelineError::Frame { timestamp: t, source };
        let Some(pose) = frame.pose_cw else {
            report.frames_without_pose += 1;
            continue;
        };
        report.frames_processed += 1;

        let (prediction, cull) = if frame.is_keyframe {
            report.keyframes += 1;
            let start = Instant::now();
            let outcome = engine
                .ingest_keyframe(&frame.detections, &pose, &k, t)
                .map_err(|e| stamp(e.into()))?;
            report.keyframe.push(start.elapsed());
            report.invalid_depth_detections += outcome.invalid_depth;
            report.non_movable_detections += outcome.not_movable;

            let start = Instant::now();
            let cloud = load_keyframe_cloud(frame, &pose, &k, cfg.stride).map_err(stamp)?;
            let boxes = if cfg.semantic {
                semantic_boxes(&frame.detections, &outcome.prediction, &pose, &k, &cfg.fusion, cfg.box_margin)
            } else {
                Vec::new()
            };
            mapper.insert((cloud, boxes));
            report.mapping.push(start.elapsed());

            let cull = cull_keypoints(&keypoints, &outcome.prediction, &k, cfg.margin);
            (outcome.prediction, cull)
        } else {
            let start = Instant::now();
            let prediction = engine.predict_frame(&pose, t).map_err(|e| stamp(e.into()))?;
            let cull = cull_keypoints(&keypoints, &prediction, &k, cfg.margin);
            report.prediction.push(start.elapsed());
            (prediction, cull)
        };

        report.boxes_emitted += prediction.boxes_world.len();
        report.fused_dropped += prediction.dropped;
        report.max_active_tracks = report.max_active_tracks.max(engine.active_tracks());
        report.keypoints += keypoints.len();
        report.keypoints_removed += cull.removed.len();
        push_boxes(&mut boxes_text, &prediction, cfg.camera_frame_boxes);
        let _ = writeln!(points_text, "{t:.6} {} {}", cull.kept.len(), cull.removed.len());
        frames.push(FrameOutput {
            timestamp: t,
            keyframe: frame.is_keyframe,
            prediction,
            kept: cull.kept.len(),
            removed: cull.removed.len(),
        });
    }

    let (map, stats) = mapper.finish();
    report.final_active_tracks = engine.active_tracks();
    report.points_inserted = stats.inserted;
    report.points_movable = stats.movable;
    report.points_labeled = stats.labeled;
    report.points_rejected = stats.rejected;
    report.map_leaves = map.leaf_count();
    report.map_occupied = map.occupied_leaves().count();

    let outs = &cfg.outputs;
    if let Some(p) = &outs.boxes {
        write_output(p, &boxes_text)?;
    }
    if let Some(p) = &outs.points {
        write_output(p, &points_text)?;
    }
    if let Some(p) = &outs.map {
        export_map(&map, ExportFormat::Native, p)?;
    }
    if let Some(p) = &outs.ply {
        export_map(&map, ExportFormat::Ply, p)?;
    }
    if let Some(p) = &outs.metrics {
        write_output(p, &report.to_string())?;
    }
    Ok(RunOutput { report, map, frames })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Box2D;
    use crate::labels::ClassId;

    #[test]
    fn grid_is_centered_in_cells() {
        let g = keypoint_grid(16, 8, 8);
        assert_eq!(g, vec![Vector2::new(4.0, 4.0), Vector2::new(12.0, 4.0)]);
        assert_eq!(keypoint_grid(10, 10, 1).len(), 100);
        assert!(keypoint_grid(0, 10, 4).is_empty());
    }

    #[test]
    fn semantic_boxes_mark_movable_classes() {
        let k = CameraIntrinsics::tum_default();
        let pose = PoseSE3::identity();
        let det = |label| Detection2D {
            label,
            score: 1.0,
            bbox: Box2D::new(300.0, 200.0, 340.0, 260.0),
            center_depth: 2.0,
        };
        let bad = Detection2D {
            center_depth: 0.0,
            ..det(ClassId::PERSON)
        };
        let pred = PredictionResult::empty(0.0);
        let fusion = FusionConfig::default();
        let boxes = semantic_boxes(&[det(ClassId::PERSON), det(ClassId::CHAIR), bad], &pred, &pose, &k, &fusion, 0.1);
        assert_eq!(boxes.len(), 2);
        assert!(boxes[0].movable);
        assert!(!boxes[1].movable);
        let plain = lift_detection_with(&det(ClassId::CHAIR), &pose, &k, fusion.depth_extent).unwrap();
        assert!((boxes[1].bbox.p1 - plain.p1).amax() - 0.1 < 1e-12);
        assert!(boxes[1].bbox.contains(&(plain.p1 - nalgebra::Vector3::repeat(0.05))));
    }

    #[test]
    fn rejects_bad_configs() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = RunConfig::new(dir.path(), KeyframePolicy::FromDetections);
        assert!(matches!(run_pipeline(&cfg), Err(PipelineError::Config(_))));
        let cfg = RunConfig::new(dir.path(), KeyframePolicy::EveryN(0));
        assert!(matches!(run_pipeline(&cfg), Err(PipelineError::Config(_))));
        let mut cfg = RunConfig::new(dir.path(), KeyframePolicy::EveryN(1));
        cfg.stride = 0;
        assert!(matches!(run_pipeline(&cfg), Err(PipelineError::Config(_))));
        let cfg = RunConfig::new(dir.path(), KeyframePolicy::EveryN(1));
        assert!(matches!(run_pipeline(&cfg), Err(PipelineError::Dataset(_))));
    }
}
