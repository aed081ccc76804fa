use std::fmt::{self, Write as _};
use std::time::Duration;

/// Wall-clock samples of one pipeline stage.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct StageTimes {
    samples_ms: Vec<f64>,
}

impl StageTimes {
    pub fn push(&mut self, d: Duration) {
        self.samples_ms.push(d.as_secs_f64() * 1e3);
    }

    pub fn count(&self) -> usize {
        self.samples_ms.len()
    }

    pub fn mean_ms(&self) -> f64 {
        if self.samples_ms.is_empty() {
            return 0.0;
        }
        self.samples_ms.iter().sum::<f64>() / self.samples_ms.len() as f64
    }

    /// Nearest-rank percentile, `p` in (0, 100].
    pub fn percentile_ms(&self, p: f64) -> f64 {
        if self.samples_ms.is_empty() {
            return 0.0;
        }
        let mut s = self.samples_ms.clone();
        s.sort_by(f64::total_cmp);
        let rank = ((p / 100.0) * s.len() as f64).ceil() as usize;
        s[rank.clamp(1, s.len()) - 1]
    }

    fn write(&self, out: &mut String, name: &str) {
        let _ = writeln!(out, "{name}_count={}", self.count());
        let _ = writeln!(out, "{name}_mean_ms={:.4}", self.mean_ms());
        for p in [50.0, 90.0, 99.0, 100.0] {
            let key = if p == 100.0 { "max".to_string() } else { format!("p{p}") };
            let _ = writeln!(out, "{name}_{key}_ms={:.4}", self.percentile_ms(p));
        }
    }
}

/// Counters and timings of one run.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunReport {
    pub frames: usize,
    pub frames_processed: usize,
    pub frames_without_pose: usize,
    pub unmatched_rgb: usize,
    pub keyframes: usize,
    pub unmatched_detection_times: usize,
    pub boxes_emitted: usize,
    pub max_active_tracks: usize,
    pub final_active_tracks: usize,
    pub fused_dropped: usize,
    pub invalid_depth_detections: usize,
    pub non_movable_detections: usize,
    pub keypoints: usize,
    pub keypoints_removed: usize,
    pub points_inserted: usize,
    pub points_movable: usize,
    pub points_labeled: usize,
    pub points_rejected: usize,
    pub map_leaves: usize,
    pub map_occupied: usize,
    /// `predict_frame` plus keypoint culling on non-keyframes.
    pub prediction: StageTimes,
    /// `ingest_keyframe` on keyframes.
    pub keyframe: StageTimes,
    /// Image decoding, back-projection and map insertion on keyframes.
    pub mapping: StageTimes,
}

impl RunReport {
    /// Every section except `[timing]`, which varies between runs.
    pub fn counters(&self) -> String {
        let sections: [(&str, &[(&str, usize)]); 4] = [
            (
                "run",
                &[
                    ("frames", self.frames),
                    ("frames_processed", self.frames_processed),
                    ("frames_without_pose", self.frames_without_pose),
                    ("unmatched_rgb", self.unmatched_rgb),
                    ("keyframes", self.keyframes),
                    ("unmatched_detection_times", self.unmatched_detection_times),
                ],
            ),
            (
                "tracking",
                &[
                    ("boxes_emitted", self.boxes_emitted),
                    ("max_active_tracks", self.max_active_tracks),
                    ("final_active_tracks", self.final_active_tracks),
                    ("fused_dropped", self.fused_dropped),
                    ("invalid_depth_detections", self.invalid_depth_detections),
                    ("non_movable_detections", self.non_movable_detections),
                ],
            ),
            (
                "culling",
                &[
                    ("keypoints", self.keypoints),
                    ("keypoints_removed", self.keypoints_removed),
                ],
            ),
            (
                "map",
                &[
                    ("points_inserted", self.points_inserted),
                    ("points_movable", self.points_movable),
                    ("points_labeled", self.points_labeled),
                    ("points_rejected", self.points_rejected),
                    ("leaves", self.map_leaves),
                    ("occupied_voxels", self.map_occupied),
                ],
            ),
        ];
        let mut s = String::new();
        for (i, (name, entries)) in sections.iter().enumerate() {
            if i > 0 {
                s.push('\n');
            }
            let _ = writeln!(s, "[{name}]");
            for (k, v) in entries.iter() {
                let _ = writeln!(s, "{k}={v}");
            }
        }
        s
    }
}

impl fmt::Display for RunReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut t = String::new();
        self.prediction.write(&mut t, "prediction");
        self.keyframe.write(&mut t, "keyframe");
        self.mapping.write(&mut t, "mapping");
        write!(f, "{}\n[timing]\n{t}", self.counters())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn percentiles() {
        let mut t = StageTimes::default();
        assert_eq!(t.percentile_ms(50.0), 0.0);
        for ms in [5, 1, 4, 2, 3] {
            t.push(Duration::from_millis(ms));
        }
        assert!((t.mean_ms() - 3.0).abs() < 1e-12);
        assert!((t.percentile_ms(50.0) - 3.0).abs() < 1e-12);
        assert!((t.percentile_ms(90.0) - 5.0).abs() < 1e-12);
        assert!((t.percentile_ms(20.0) - 1.0).abs() < 1e-12);
        assert!((t.percentile_ms(100.0) - 5.0).abs() < 1e-12);
    }

    #[test]
    fn report_layout() {
        let r = RunReport {
            frames: 3,
            keyframes: 1,
            ..Default::default()
        };
        let text = r.to_string();
        assert!(text.starts_with("[run]\nframes=3\n"));
        for section in ["[tracking]", "[culling]", "[map]", "[timing]"] {
            assert!(text.contains(&format!("\n{section}\n")), "{section}");
        }
        assert!(text.contains("prediction_p99_ms="));
        assert!(!r.counters().contains("timing"));
    }
}
