use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{Matrix3, Vector3};

use super::{associate, data_lines, parse_f64, read_file, DatasetError, ASSOCIATION_TOLERANCE};
use crate::geometry::PoseSE3;

/// Timestamped world-to-camera poses, strictly increasing in time.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Trajectory {
    pub poses: Vec<(f64, PoseSE3)>,
}

impl Trajectory {
    /// Sorts by timestamp and keeps the first pose of any repeated timestamp.
    pub fn new(mut poses: Vec<(f64, PoseSE3)>) -> Self {
        poses.sort_by(|a, b| a.0.total_cmp(&b.0));
        poses.dedup_by(|a, b| a.0 == b.0);
        Self { poses }
    }

    pub fn len(&self) -> usize {
        self.poses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.poses.is_empty()
    }

    pub fn timestamps(&self) -> Vec<f64> {
        self.poses.iter().map(|p| p.0).collect()
    }

    /// The pose nearest to `t`, if within `tol` seconds.
    pub fn pose_at(&self, t: f64, tol: f64) -> Option<PoseSE3> {
        let i = self.poses.partition_point(|p| p.0 < t);
        [i.checked_sub(1), (i < self.poses.len()).then_some(i)]
            .into_iter()
            .flatten()
            .map(|j| &self.poses[j])
            .min_by(|a, b| (a.0 - t).abs().total_cmp(&(b.0 - t).abs()))
            .filter(|p| (p.0 - t).abs() <= tol)
            .map(|p| p.1)
    }
}

pub fn load_trajectory(path: &Path) -> Result<Trajectory, DatasetError> {
    parse_trajectory(&read_file(path)?, path)
}

/// Parses TUM `timestamp tx ty tz qx qy qz qw` lines (camera-to-world).
pub fn parse_trajectory(text: &str, path: &Path) -> Result<Trajectory, DatasetError> {
    let mut poses = Vec::new();
    for (line, l) in data_lines(text) {
        let tok: Vec<&str> = l.split_whitespace().collect();
        if tok.len() != 8 {
            return Err(DatasetError::Parse {
                path: path.to_path_buf(),
                line,
                msg: format!("expected 8 fields `timestamp tx ty tz qx qy qz qw`, found {}", tok.len()),
            });
        }
        let mut v = [0.0; 8];
        for (slot, t) in v.iter_mut().zip(&tok) {
            *slot = parse_f64(t, "number", path, line)?;
        }
        let pose_wc = PoseSE3::from_quaternion(Vector3::new(v[1], v[2], v[3]), v[4], v[5], v[6], v[7])
            .map_err(|source| DatasetError::Geometry {
                path: path.to_path_buf(),
                line,
                source,
            })?;
        poses.push((v[0], pose_wc.inverse()));
    }
    Ok(Trajectory::new(poses))
}

/// Writes TUM 8-column lines holding the camera-to-world pose.
pub fn write_trajectory(traj: &Trajectory, path: &Path) -> Result<(), DatasetError> {
    let mut out = String::new();
    for (t, pose_cw) in &traj.poses {
        let wc = pose_cw.inverse();
        let p = wc.translation();
        let [qx, qy, qz, qw] = wc.quaternion();
        let _ = write!(out, "{t:.6}");
        for v in [p.x, p.y, p.z, qx, qy, qz, qw] {
            let s = format!("{v:.9}");
            // avoid printing "-0.000000000"
            let s = if s.trim_start_matches('-').bytes().all(|b| b == b'0' || b == b'.') {
                s.trim_start_matches('-').to_string()
            } else {
                s
            };
            let _ = write!(out, " {s}");
        }
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AteReport {
    pub rmse: f64,
    pub pairs: usize,
}

/// Absolute trajectory error over camera positions.
///
/// Poses are associated by nearest timestamp within 20 ms. With `align`, the
/// estimated positions are first mapped onto the ground truth by the least
/// squares rigid transform (no scale).
pub fn ate_rmse(estimated: &Trajectory, ground_truth: &Trajectory, align: bool) -> Result<AteReport, DatasetError> {
    let gt_times = ground_truth.timestamps();
    let mut est = Vec::new();
    let mut gt = Vec::new();
    for ((_, pose), m) in estimated
        .poses
        .iter()
        .zip(associate(&estimated.timestamps(), &gt_times, ASSOCIATION_TOLERANCE))
    {
        if let Some(j) = m {
            est.push(camera_center(pose));
            gt.push(camera_center(&ground_truth.poses[j].1));
        }
    }
    if est.len() < 2 {
        return Err(DatasetError::TooFewAssociations(est.len()));
    }
    let (r, t) = if align {
        rigid_alignment(&est, &gt)
    } else {
        (Matrix3::identity(), Vector3::zeros())
    };
    let sq: f64 = est
        .iter()
        .zip(&gt)
        .map(|(e, g)| (r * e + t - g).norm_squared())
        .sum();
    Ok(AteReport {
        rmse: (sq / est.len() as f64).sqrt(),
        pairs: est.len(),
    })
}

fn camera_center(pose_cw: &PoseSE3) -> Vector3<f64> {
    *pose_cw.inverse().translation()
}

/// Rotation `r` and translation `t` minimizing `sum |r * a_i + t - b_i|^2`.
fn rigid_alignment(a: &[Vector3<f64>], b: &[Vector3<f64>]) -> (Matrix3<f64>, Vector3<f64>) {
    let n = a.len() as f64;
    let ca = a.iter().sum::<Vector3<f64>>() / n;
    let cb = b.iter().sum::<Vector3<f64>>() / n;
    let mut h = Matrix3::zeros();
    for (p, q) in a.iter().zip(b) {
        h += (q - cb) * (p - ca).transpose();
    }
    let svd = h.svd(true, true);
    let (u, v_t) = (svd.u.unwrap(), svd.v_t.unwrap());
    let mut d = Matrix3::identity();
    if (u * v_t).determinant() < 0.0 {
        d[(2, 2)] = -1.0;
    }
    let r = u * d * v_t;
    (r, cb - r * ca)
}
