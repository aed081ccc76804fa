use std::path::Path;

use super::{data_lines, parse_f64, read_file, DatasetError};
use crate::geometry::{Box2D, Detection2D};
use crate::labels::ClassId;

/// Detections grouped by timestamp. Each timestamp marks a keyframe.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct DetectionSet {
    /// Ascending by timestamp; detections keep file order.
    pub keyframes: Vec<(f64, Vec<Detection2D>)>,
}

impl DetectionSet {
    pub fn is_empty(&self) -> bool {
        self.keyframes.is_empty()
    }

    pub fn get(&self, t: f64) -> Option<&[Detection2D]> {
        self.keyframes
            .iter()
            .find(|(k, _)| *k == t)
            .map(|(_, d)| d.as_slice())
    }

    pub fn detection_count(&self) -> usize {
        self.keyframes.iter().map(|(_, d)| d.len()).sum()
    }
}

pub fn load_detections(path: &Path) -> Result<DetectionSet, DatasetError> {
    parse_detections(&read_file(path)?, path)
}

/// Parses lines of `timestamp label score xmin ymin xmax ymax center_depth`.
/// `path` is only used in error messages.
pub fn parse_detections(text: &str, path: &Path) -> Result<DetectionSet, DatasetError> {
    let bad = |line: usize, msg: String| DatasetError::Parse {
        path: path.to_path_buf(),
        line,
        msg,
    };
    let mut rows: Vec<(f64, Detection2D)> = Vec::new();
    for (line, l) in data_lines(text) {
        let tok: Vec<&str> = l.split_whitespace().collect();
        if tok.len() != 8 {
            return Err(bad(
                line,
                format!(
                    "expected 8 fields `timestamp label score xmin ymin xmax ymax center_depth`, found {}",
                    tok.len()
                ),
            ));
        }
        let t = parse_f64(tok[0], "timestamp", path, line)?;
        let label: ClassId = tok[1].parse().map_err(|source| DatasetError::Label {
            path: path.to_path_buf(),
            line,
            source,
        })?;
        let score = parse_f64(tok[2], "score", path, line)?;
        if !(0.0..=1.0).contains(&score) {
            return Err(bad(line, format!("score {score} outside [0, 1]")));
        }
        let mut v = [0.0; 5];
        for (slot, (tok, what)) in v.iter_mut().zip(tok[3..].iter().zip(["xmin", "ymin", "xmax", "ymax", "center_depth"])) {
            *slot = parse_f64(tok, what, path, line)?;
        }
        let [x0, y0, x1, y1, depth] = v;
        if x0 > x1 || y0 > y1 {
            return Err(bad(line, "box corners are not ordered min then max".into()));
        }
        rows.push((
            t,
            Detection2D {
                label,
                score,
                bbox: Box2D::new(x0, y0, x1, y1),
                center_depth: depth,
            },
        ));
    }
    rows.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut set = DetectionSet::default();
    for (t, d) in rows {
        match set.keyframes.last_mut() {
            Some((last, list)) if *last == t => list.push(d),
            _ => set.keyframes.push((t, vec![d])),
        }
    }
    Ok(set)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<DetectionSet, DatasetError> {
        parse_detections(text, Path::new("dets.txt"))
    }

    #[test]
    fn empty_file() {
        assert!(parse("").unwrap().is_empty());
        assert!(parse("# only a comment\n\n").unwrap().is_empty());
    }

    #[test]
    fn single_line() {
        let set = parse("1341846313.592 person 0.98 100 80 220 400 1.83").unwrap();
        assert_eq!(set.keyframes.len(), 1);
        let (t, dets) = &set.keyframes[0];
        assert_eq!(*t, 1341846313.592);
        assert_eq!(
            dets[..],
            [Detection2D {
                label: ClassId::PERSON,
                score: 0.98,
                bbox: Box2D::new(100.0, 80.0, 220.0, 400.0),
                center_depth: 1.83,
            }]
        );
    }

    #[test]
    fn shared_timestamp_groups() {
        let set = parse("2.0 car 0.5 0 0 1 1 3\n1.0 person 0.9 0 0 1 1 2\n2.0 person 0.7 5 5 6 6 4\n").unwrap();
        assert_eq!(set.keyframes.len(), 2);
        assert_eq!(set.keyframes[0].0, 1.0);
        let second = set.get(2.0).unwrap();
        assert_eq!(second.len(), 2);
        assert_eq!(second[0].label, ClassId::CAR);
        assert_eq!(set.detection_count(), 3);
    }

    #[test]
    fn errors_carry_line_numbers() {
        let err = parse("# header\n1.0 person 0.9 0 0 1 1\n").unwrap_err();
        assert!(matches!(err, DatasetError::Parse { line: 2, .. }), "{err}");
        let err = parse("1.0 person 0.9 0 0 1 1 2\n1.0 unicorn 0.9 0 0 1 1 2\n").unwrap_err();
        assert!(matches!(err, DatasetError::Label { line: 2, .. }));
        let msg = err.to_string();
        assert!(msg.contains("unicorn") && msg.contains("tvmonitor") && msg.contains("person"), "{msg}");
        let err = parse("1.0 person 1.5 0 0 1 1 2\n").unwrap_err();
        assert!(err.to_string().contains("dets.txt:1"));
        assert!(parse("1.0 person 0.5 3 0 1 1 2\n").is_err());
        assert!(parse("1.0 person 0.5 0 0 1 nan 2\n").is_err());
    }
}
