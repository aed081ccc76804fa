//! TUM RGB-D sequences, trajectories and detection files.
//!
//! Poses are stored world-to-camera (`pose_cw`) everywhere in this crate. TUM
//! files hold camera-to-world poses, so readers invert exactly once on load
//! and writers invert once on save.

mod detections;
mod trajectory;

pub use detections::{load_detections, parse_detections, DetectionSet};
pub use trajectory::{
    ate_rmse, load_trajectory, parse_trajectory, write_trajectory, AteReport, Trajectory,
};

use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::geometry::{CameraIntrinsics, Detection2D, GeometryError, PoseSE3};
use crate::labels::UnknownLabel;

/// Default timestamp association tolerance, seconds.
pub const ASSOCIATION_TOLERANCE: f64 = 0.02;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {msg}")]
    Parse { path: PathBuf, line: usize, msg: String },
    #[error("{path}:{line}: {source}")]
    Label {
        path: PathBuf,
        line: usize,
        #[source]
        source: UnknownLabel,
    },
    #[error("{path}:{line}: {source}")]
    Geometry {
        path: PathBuf,
        line: usize,
        #[source]
        source: GeometryError,
    },
    #[error("only {0} pose pair(s) associated; at least 2 are required")]
    TooFewAssociations(usize),
}

pub(crate) fn read_file(path: &Path) -> Result<String, DatasetError> {
    std::fs::read_to_string(path).map_err(|source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Non-empty, non-comment lines with their 1-based line numbers.
pub(crate) fn data_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
}

pub(crate) fn parse_f64(tok: &str, what: &str, path: &Path, line: usize) -> Result<f64, DatasetError> {
    tok.parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| DatasetError::Parse {
            path: path.to_path_buf(),
            line,
            msg: format!("bad {what} `{tok}`"),
        })
}

/// Parses a TUM `timestamp filename` index.
pub fn parse_index(text: &str, path: &Path) -> Result<Vec<(f64, String)>, DatasetError> {
    let mut out = Vec::new();
    for (line, l) in data_lines(text) {
        let mut it = l.split_whitespace();
        let (Some(t), Some(file), None) = (it.next(), it.next(), it.next()) else {
            return Err(DatasetError::Parse {
                path: path.to_path_buf(),
                line,
                msg: "expected `timestamp filename`".into(),
            });
        };
        out.push((parse_f64(t, "timestamp", path, line)?, file.to_string()));
    }
    Ok(out)
}

/// For each query time, the index of the nearest reference time within
/// `tol`. `reference` must be sorted ascending.
pub fn associate(queries: &[f64], reference: &[f64], tol: f64) -> Vec<Option<usize>> {
    queries
        .iter()
        .map(|&q| {
            let i = reference.partition_point(|&r| r < q);
            [i.checked_sub(1), (i < reference.len()).then_some(i)]
                .into_iter()
                .flatten()
                .min_by(|&a, &b| (reference[a] - q).abs().total_cmp(&(reference[b] - q).abs()))
                .filter(|&j| (reference[j] - q).abs() <= tol)
        })
        .collect()
}

/// Writes intrinsics as a single `fx fy cx cy depth_scale` line.
pub fn write_camera(k: &CameraIntrinsics, path: &Path) -> Result<(), DatasetError> {
    let text = format!(
        "# fx fy cx cy depth_scale\n{} {} {} {} {}\n",
        k.fx, k.fy, k.cx, k.cy, k.depth_scale
    );
    std::fs::write(path, text).map_err(|source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn load_camera(path: &Path) -> Result<CameraIntrinsics, DatasetError> {
    let text = read_file(path)?;
    let Some((line, l)) = data_lines(&text).next() else {
        return Err(DatasetError::Parse {
            path: path.to_path_buf(),
            line: 1,
            msg: "no intrinsics line".into(),
        });
    };
    let v: Vec<f64> = l
        .split_whitespace()
        .map(|t| parse_f64(t, "intrinsic", path, line))
        .collect::<Result<_, _>>()?;
    let [fx, fy, cx, cy, scale] = v[..] else {
        return Err(DatasetError::Parse {
            path: path.to_path_buf(),
            line,
            msg: "expected `fx fy cx cy depth_scale`".into(),
        });
    };
    CameraIntrinsics::new(fx, fy, cx, cy, scale).map_err(|source| DatasetError::Geometry {
        path: path.to_path_buf(),
        line,
        source,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameRecord {
    pub timestamp: f64,
    pub rgb_path: PathBuf,
    pub depth_path: PathBuf,
    pub pose_cw: Option<PoseSE3>,
    pub is_keyframe: bool,
    pub detections: Vec<Detection2D>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Sequence {
    /// Frames in strictly increasing timestamp order.
    pub frames: Vec<FrameRecord>,
    /// RGB frames dropped for lack of a depth image within tolerance.
    pub unmatched: usize,
}

/// Loads `rgb.txt` and `depth.txt` from `dir`, pairs them by nearest
/// timestamp, and attaches poses from `groundtruth.txt` when present.
pub fn load_tum_sequence(dir: &Path) -> Result<Sequence, DatasetError> {
    let rgb_path = dir.join("rgb.txt");
    let depth_path = dir.join("depth.txt");
    let mut rgb = parse_index(&read_file(&rgb_path)?, &rgb_path)?;
    let mut depth = parse_index(&read_file(&depth_path)?, &depth_path)?;
    rgb.sort_by(|a, b| a.0.total_cmp(&b.0));
    rgb.dedup_by(|a, b| a.0 == b.0);
    depth.sort_by(|a, b| a.0.total_cmp(&b.0));

    let depth_times: Vec<f64> = depth.iter().map(|d| d.0).collect();
    let rgb_times: Vec<f64> = rgb.iter().map(|r| r.0).collect();
    let matches = associate(&rgb_times, &depth_times, ASSOCIATION_TOLERANCE);

    let gt_path = dir.join("groundtruth.txt");
    let gt = if gt_path.exists() {
        Some(load_trajectory(&gt_path)?)
    } else {
        None
    };

    let mut seq = Sequence::default();
    for ((t, file), m) in rgb.iter().zip(matches) {
        let Some(j) = m else {
            seq.unmatched += 1;
            continue;
        };
        seq.frames.push(FrameRecord {
            timestamp: *t,
            rgb_path: dir.join(file),
            depth_path: dir.join(&depth[j].1),
            pose_cw: gt.as_ref().and_then(|g| g.pose_at(*t, ASSOCIATION_TOLERANCE)),
            is_keyframe: false,
            detections: Vec::new(),
        });
    }
    Ok(seq)
}

impl Sequence {
    /// Replaces every frame pose with the trajectory's pose nearest in time.
    pub fn set_poses(&mut self, traj: &Trajectory) {
        for f in &mut self.frames {
            f.pose_cw = traj.pose_at(f.timestamp, ASSOCIATION_TOLERANCE);
        }
    }

    /// Attaches each detection timestamp to the nearest frame and marks that
    /// frame as a keyframe. Returns the number of detection timestamps with
    /// no frame within tolerance.
    pub fn attach_detections(&mut self, dets: &DetectionSet) -> usize {
        let times: Vec<f64> = self.frames.iter().map(|f| f.timestamp).collect();
        let keys: Vec<f64> = dets.keyframes.iter().map(|(t, _)| *t).collect();
        let mut missing = 0;
        for ((_, list), m) in dets.keyframes.iter().zip(associate(&keys, &times, ASSOCIATION_TOLERANCE)) {
            match m {
                Some(i) => {
                    self.frames[i].is_keyframe = true;
                    self.frames[i].detections.extend_from_slice(list);
                }
                None => missing += 1,
            }
        }
        missing
    }

    /// Marks every `n`-th frame (starting with the first) as a keyframe.
    pub fn mark_every(&mut self, n: usize) {
        for (i, f) in self.frames.iter_mut().enumerate() {
            f.is_keyframe = n > 0 && i.is_multiple_of(n);
        }
    }
}
