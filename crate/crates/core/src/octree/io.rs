//! Map files.
//!
//! The native format is line-oriented UTF-8 text:
//!
//! ```text
//! dynscene-map 1
//! voxel_size 0.05
//! clamp -2 3.5
//! tau 0.85 -0.41
//! threshold 0.5
//! leaves 2
//! 12 -3 40 0.85 120 64 30 1 0 0
//! 12 -2 40 -0.82 0 0 0 0 2 1 person 2
//! ```
//!
//! Each leaf record is `x y z log_odds r g b color_weight movable_hits
//! n_labels` followed by `n_labels` pairs of `label count`. Floats are
//! written in shortest round-trip form, so loading a saved map restores every
//! leaf bit for bit. Every leaf is written, occupied or not.
//!
//! The PLY export is ASCII with one vertex per occupied voxel center,
//! `uchar` display color and a `uchar label` property holding the majority
//! class index, or 255 when the voxel carries no label.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use super::{MapConfig, MapError, OccupancyOctree, VoxelKey, VoxelNode};
use crate::labels::ClassId;

pub const MAP_FORMAT_VERSION: u32 = 1;
const MAGIC: &str = "dynscene-map";
const NO_LABEL: u8 = 255;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExportFormat {
    Native,
    Ply,
}

pub fn export_map(map: &OccupancyOctree, format: ExportFormat, path: &Path) -> Result<(), MapError> {
    let mut w = BufWriter::new(File::create(path)?);
    match format {
        ExportFormat::Native => write_native(map, &mut w)?,
        ExportFormat::Ply => write_ply(map, &mut w)?,
    }
    w.flush()?;
    Ok(())
}

pub fn save_native(map: &OccupancyOctree, path: &Path) -> Result<(), MapError> {
    export_map(map, ExportFormat::Native, path)
}

fn write_native(map: &OccupancyOctree, w: &mut impl Write) -> std::io::Result<()> {
    let c = map.config();
    writeln!(w, "{MAGIC} {MAP_FORMAT_VERSION}")?;
    writeln!(w, "voxel_size {}", c.voxel_size)?;
    writeln!(w, "clamp {} {}", c.clamp_min, c.clamp_max)?;
    writeln!(w, "tau {} {}", c.tau_static, c.tau_movable)?;
    writeln!(w, "threshold {}", c.occupancy_threshold)?;
    writeln!(w, "leaves {}", map.leaf_count())?;
    for v in map.leaves() {
        let [r, g, b] = v.color;
        write!(
            w,
            "{} {} {} {} {r} {g} {b} {} {} {}",
            v.key.x,
            v.key.y,
            v.key.z,
            v.log_odds,
            v.color_weight,
            v.movable_hits,
            v.labels.len()
        )?;
        for (label, n) in &v.labels {
            write!(w, " {label} {n}")?;
        }
        writeln!(w)?;
    }
    Ok(())
}

fn write_ply(map: &OccupancyOctree, w: &mut impl Write) -> std::io::Result<()> {
    let occupied: Vec<&VoxelNode> = map.occupied_leaves().collect();
    writeln!(w, "ply")?;
    writeln!(w, "format ascii 1.0")?;
    writeln!(w, "comment voxel_size {}", map.config().voxel_size)?;
    writeln!(w, "element vertex {}", occupied.len())?;
    for p in ["x", "y", "z"] {
        writeln!(w, "property float {p}")?;
    }
    for p in ["red", "green", "blue", "label"] {
        writeln!(w, "property uchar {p}")?;
    }
    writeln!(w, "end_header")?;
    for v in occupied {
        let c = map.voxel_center(v.key);
        let [r, g, b] = v.display_color();
        let label = v.majority_label().map_or(NO_LABEL, |l| l.index() as u8);
        writeln!(w, "{} {} {} {r} {g} {b} {label}", c.x as f32, c.y as f32, c.z as f32)?;
    }
    Ok(())
}

struct Lines<R> {
    inner: std::io::Lines<R>,
    line: usize,
}

impl<R: BufRead> Lines<R> {
    fn next_line(&mut self) -> Result<String, MapError> {
        self.line += 1;
        match self.inner.next() {
            Some(l) => Ok(l?),
            None => Err(self.err("unexpected end of file")),
        }
    }

    fn err(&self, msg: impl Into<String>) -> MapError {
        MapError::Parse {
            line: self.line,
            msg: msg.into(),
        }
    }

    /// Reads `key v1 v2 ...` and returns the values.
    fn header<T: std::str::FromStr>(&mut self, key: &str, n: usize) -> Result<Vec<T>, MapError> {
        let l = self.next_line()?;
        let mut it = l.split_whitespace();
        if it.next() != Some(key) {
            return Err(self.err(format!("expected `{key}`")));
        }
        let vals: Vec<T> = it
            .map(|t| t.parse().map_err(|_| self.err(format!("bad value `{t}` for `{key}`"))))
            .collect::<Result<_, _>>()?;
        if vals.len() != n {
            return Err(self.err(format!("`{key}` takes {n} value(s)")));
        }
        Ok(vals)
    }
}

fn field<T: std::str::FromStr>(tok: Option<&str>, what: &str, line: usize) -> Result<T, MapError> {
    let tok = tok.ok_or_else(|| MapError::Parse {
        line,
        msg: format!("missing {what}"),
    })?;
    tok.parse().map_err(|_| MapError::Parse {
        line,
        msg: format!("bad {what} `{tok}`"),
    })
}

/// Reads a native map file.
pub fn load_map(path: &Path) -> Result<OccupancyOctree, MapError> {
    let mut r = Lines {
        inner: BufReader::new(File::open(path)?).lines(),
        line: 0,
    };
    let magic = r.next_line()?;
    let version = magic
        .strip_prefix(MAGIC)
        .and_then(|v| v.trim().parse::<u32>().ok())
        .ok_or_else(|| r.err("not a dynscene map file"))?;
    if version != MAP_FORMAT_VERSION {
        return Err(r.err(format!("unsupported map version {version}")));
    }
    let voxel_size = r.header::<f64>("voxel_size", 1)?[0];
    let clamp = r.header::<f64>("clamp", 2)?;
    let tau = r.header::<f64>("tau", 2)?;
    let threshold = r.header::<f64>("threshold", 1)?[0];
    let n = r.header::<usize>("leaves", 1)?[0];
    let cfg = MapConfig {
        voxel_size,
        tau_static: tau[0],
        tau_movable: tau[1],
        occupancy_threshold: threshold,
        clamp_min: clamp[0],
        clamp_max: clamp[1],
    };
    let mut map = OccupancyOctree::new(cfg)?;
    for _ in 0..n {
        let l = r.next_line()?;
        let line = r.line;
        let mut it = l.split_whitespace();
        let key = VoxelKey::new(
            field(it.next(), "key x", line)?,
            field(it.next(), "key y", line)?,
            field(it.next(), "key z", line)?,
        );
        if !key.in_bounds() {
            return Err(r.err("voxel key out of range"));
        }
        let mut v = VoxelNode::new(key);
        v.log_odds = field(it.next(), "log-odds", line)?;
        if !(cfg.clamp_min..=cfg.clamp_max).contains(&v.log_odds) {
            return Err(r.err("log-odds outside the clamp bounds"));
        }
        for c in &mut v.color {
            *c = field(it.next(), "color", line)?;
        }
        v.color_weight = field(it.next(), "color weight", line)?;
        v.movable_hits = field(it.next(), "movable hits", line)?;
        let n_labels: usize = field(it.next(), "label count", line)?;
        for _ in 0..n_labels {
            let label: ClassId = field(it.next(), "label", line)?;
            let count: u32 = field(it.next(), "label histogram count", line)?;
            v.labels.insert(label, count);
        }
        if it.next().is_some() {
            return Err(r.err("trailing fields"));
        }
        if map.leaf(key).is_some() {
            return Err(r.err("duplicate voxel"));
        }
        map.put_leaf(v);
    }
    Ok(map)
}
