use std::collections::BTreeMap;

use nalgebra::Vector3;

use super::{MapConfig, MapError, TREE_DEPTH};
use crate::labels::ClassId;

/// Offset that maps signed voxel indices onto `[0, 2^TREE_DEPTH)`.
const KEY_OFFSET: i64 = 1 << (TREE_DEPTH - 1);

/// Integer voxel coordinates: `floor(p / voxel_size)` per axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct VoxelKey {
    pub x: i32,
    pub y: i32,
    pub z: i32,
}

impl VoxelKey {
    pub fn new(x: i32, y: i32, z: i32) -> Self {
        Self { x, y, z }
    }

    pub fn from_point(p: &Vector3<f64>, voxel_size: f64) -> Result<Self, MapError> {
        let mut idx = [0i32; 3];
        for (i, v) in p.iter().enumerate() {
            let f = (v / voxel_size).floor();
            if !f.is_finite() {
                return Err(MapError::NonFinitePoint { x: p.x, y: p.y, z: p.z });
            }
            if f < -(KEY_OFFSET as f64) || f >= KEY_OFFSET as f64 {
                return Err(MapError::OutOfBounds { x: p.x, y: p.y, z: p.z });
            }
            idx[i] = f as i32;
        }
        Ok(Self::new(idx[0], idx[1], idx[2]))
    }

    pub fn in_bounds(&self) -> bool {
        [self.x, self.y, self.z]
            .iter()
            .all(|&v| (-KEY_OFFSET..KEY_OFFSET).contains(&(v as i64)))
    }

    pub fn center(&self, voxel_size: f64) -> Vector3<f64> {
        Vector3::new(
            (self.x as f64 + 0.5) * voxel_size,
            (self.y as f64 + 0.5) * voxel_size,
            (self.z as f64 + 0.5) * voxel_size,
        )
    }

    /// Child slot taken at `level` (0 = root) on the way down to this key.
    pub(crate) fn child_index(&self, level: u32) -> usize {
        let bit = TREE_DEPTH - 1 - level;
        let b = |v: i32| (((v as i64 + KEY_OFFSET) >> bit) & 1) as usize;
        b(self.x) | (b(self.y) << 1) | (b(self.z) << 2)
    }
}

/// One observation for the map.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LabeledPoint {
    pub position: Vector3<f64>,
    pub color: [u8; 3],
    pub label: Option<ClassId>,
    pub movable: bool,
}

impl LabeledPoint {
    pub fn unlabeled(position: Vector3<f64>, color: [u8; 3]) -> Self {
        Self {
            position,
            color,
            label: None,
            movable: false,
        }
    }
}

/// A leaf voxel.
#[derive(Debug, Clone, PartialEq)]
pub struct VoxelNode {
    pub key: VoxelKey,
    pub log_odds: f64,
    /// Running mean of the sensor colors of unlabeled points.
    pub color: [u8; 3],
    pub color_weight: u32,
    pub labels: BTreeMap<ClassId, u32>,
    pub movable_hits: u32,
}

impl VoxelNode {
    pub fn new(key: VoxelKey) -> Self {
        Self {
            key,
            log_odds: 0.0,
            color: [0; 3],
            color_weight: 0,
            labels: BTreeMap::new(),
            movable_hits: 0,
        }
    }

    pub(crate) fn observe(&mut self, pt: &LabeledPoint, cfg: &MapConfig) {
        let tau = if pt.movable { cfg.tau_movable } else { cfg.tau_static };
        self.log_odds = cfg.clamp(self.log_odds + tau);
        if let Some(label) = pt.label {
            *self.labels.entry(label).or_insert(0) += 1;
        } else {
            let w = self.color_weight as f64;
            for (c, s) in self.color.iter_mut().zip(pt.color) {
                *c = ((*c as f64 * w + s as f64) / (w + 1.0)).round() as u8;
            }
            self.color_weight = self.color_weight.saturating_add(1);
        }
        if pt.movable {
            self.movable_hits += 1;
        }
    }

    /// Most frequent label; ties go to the lowest class id.
    pub fn majority_label(&self) -> Option<ClassId> {
        let mut best: Option<(ClassId, u32)> = None;
        for (&c, &n) in &self.labels {
            if n > 0 && best.is_none_or(|(_, m)| n > m) {
                best = Some((c, n));
            }
        }
        best.map(|(c, _)| c)
    }

    /// Palette color of the majority label, else the averaged sensor color.
    pub fn display_color(&self) -> [u8; 3] {
        self.majority_label().map_or(self.color, ClassId::color)
    }
}
