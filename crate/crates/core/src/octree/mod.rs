//! Semantic occupancy octree.
//!
//! Each leaf voxel holds an occupancy log-odds value that grows by
//! `tau_static` for every static point inserted into it and shrinks by
//! `tau_movable` (negative) for every point on a movable object. A voxel is
//! occupied when its log-odds exceeds `logit(occupancy_threshold)`.
//! Unobserved space has no leaf and is never occupied.

mod cloud;
mod io;
mod voxel;

pub use cloud::{cloud_from_depth, DepthImage};
pub use io::{export_map, load_map, save_native, ExportFormat, MAP_FORMAT_VERSION};
pub use voxel::{LabeledPoint, VoxelKey, VoxelNode};

use nalgebra::Vector3;
use thiserror::Error;

use crate::geometry::Box3D;

#[derive(Debug, Error)]
pub enum MapError {
    #[error("probability {0} outside (0, 1)")]
    ProbabilityDomain(f64),
    #[error("invalid map configuration: {0}")]
    InvalidConfig(&'static str),
    #[error("point ({x}, {y}, {z}) has a non-finite coordinate")]
    NonFinitePoint { x: f64, y: f64, z: f64 },
    #[error("point ({x}, {y}, {z}) lies outside the addressable map volume")]
    OutOfBounds { x: f64, y: f64, z: f64 },
    #[error("rgb image is {rgb:?} but depth image is {depth:?}")]
    ResolutionMismatch { rgb: (u32, u32), depth: (u32, u32) },
    #[error("stride must be at least 1")]
    ZeroStride,
    #[error("map file line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// `ln(p / (1 - p))`.
pub fn logit(p: f64) -> Result<f64, MapError> {
    if !(p > 0.0 && p < 1.0) {
        return Err(MapError::ProbabilityDomain(p));
    }
    Ok((p / (1.0 - p)).ln())
}

pub fn inverse_logit(l: f64) -> f64 {
    1.0 / (1.0 + (-l).exp())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MapConfig {
    /// Leaf edge length, meters.
    pub voxel_size: f64,
    /// Log-odds added per static point.
    pub tau_static: f64,
    /// Log-odds added per movable point.
    pub tau_movable: f64,
    /// Occupancy probability threshold.
    pub occupancy_threshold: f64,
    pub clamp_min: f64,
    pub clamp_max: f64,
}

impl Default for MapConfig {
    fn default() -> Self {
        Self {
            voxel_size: 0.05,
            tau_static: 0.85,
            tau_movable: -0.41,
            occupancy_threshold: 0.5,
            clamp_min: -2.0,
            clamp_max: 3.5,
        }
    }
}

impl MapConfig {
    pub fn validate(&self) -> Result<(), MapError> {
        if !self.voxel_size.is_finite() || self.voxel_size <= 0.0 {
            return Err(MapError::InvalidConfig("voxel_size must be positive"));
        }
        if !(self.occupancy_threshold > 0.0 && self.occupancy_threshold < 1.0) {
            return Err(MapError::InvalidConfig("occupancy threshold must lie in (0, 1)"));
        }
        if !(self.clamp_min < 0.0 && self.clamp_max > 0.0) {
            return Err(MapError::InvalidConfig("clamp bounds must straddle zero"));
        }
        if !self.tau_static.is_finite() || !self.tau_movable.is_finite() {
            return Err(MapError::InvalidConfig("tau values must be finite"));
        }
        Ok(())
    }

    /// Occupancy threshold in log-odds.
    pub fn threshold_log_odds(&self) -> f64 {
        (self.occupancy_threshold / (1.0 - self.occupancy_threshold)).ln()
    }

    pub fn clamp(&self, l: f64) -> f64 {
        l.clamp(self.clamp_min, self.clamp_max)
    }
}

/// A box used to label points during insertion.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SemanticBox {
    pub bbox: Box3D,
    pub movable: bool,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct InsertStats {
    pub inserted: usize,
    pub movable: usize,
    pub labeled: usize,
    /// Points dropped for non-finite or out-of-range coordinates.
    pub rejected: usize,
}

impl std::ops::AddAssign for InsertStats {
    fn add_assign(&mut self, rhs: Self) {
        self.inserted += rhs.inserted;
        self.movable += rhs.movable;
        self.labeled += rhs.labeled;
        self.rejected += rhs.rejected;
    }
}

/// Levels below the root; leaves sit at this depth.
pub const TREE_DEPTH: u32 = 16;
const NO_CHILD: u32 = u32::MAX;

#[derive(Debug, Clone)]
enum Node {
    /// Inner node; caches the largest log-odds among its descendants.
    Inner { children: [u32; 8], max_log_odds: f64 },
    Leaf(VoxelNode),
}

impl Node {
    fn value(&self) -> f64 {
        match self {
            Node::Inner { max_log_odds, .. } => *max_log_odds,
            Node::Leaf(v) => v.log_odds,
        }
    }

    fn empty_inner() -> Self {
        Node::Inner {
            children: [NO_CHILD; 8],
            max_log_odds: f64::NEG_INFINITY,
        }
    }
}

/// Octree with `2^TREE_DEPTH` voxels per axis, centered on the origin.
///
/// Concurrent reads are safe through `&self`; insertion needs `&mut self`.
#[derive(Debug, Clone)]
pub struct OccupancyOctree {
    cfg: MapConfig,
    threshold: f64,
    nodes: Vec<Node>,
    leaf_count: usize,
}

impl OccupancyOctree {
    pub fn new(cfg: MapConfig) -> Result<Self, MapError> {
        cfg.validate()?;
        Ok(Self {
            threshold: cfg.threshold_log_odds(),
            cfg,
            nodes: vec![Node::empty_inner()],
            leaf_count: 0,
        })
    }

    pub fn config(&self) -> &MapConfig {
        &self.cfg
    }

    pub fn leaf_count(&self) -> usize {
        self.leaf_count
    }

    pub fn key_for(&self, p: &Vector3<f64>) -> Result<VoxelKey, MapError> {
        VoxelKey::from_point(p, self.cfg.voxel_size)
    }

    pub fn voxel_center(&self, key: VoxelKey) -> Vector3<f64> {
        key.center(self.cfg.voxel_size)
    }

    fn find_leaf_index(&self, key: VoxelKey) -> Option<usize> {
        let mut idx = 0usize;
        for level in 0..TREE_DEPTH {
            let Node::Inner { children, .. } = &self.nodes[idx] else {
                unreachable!("leaf above leaf depth");
            };
            let c = children[key.child_index(level)];
            if c == NO_CHILD {
                return None;
            }
            idx = c as usize;
        }
        Some(idx)
    }

    pub fn leaf(&self, key: VoxelKey) -> Option<&VoxelNode> {
        self.find_leaf_index(key).map(|i| match &self.nodes[i] {
            Node::Leaf(v) => v,
            Node::Inner { .. } => unreachable!("inner node at leaf depth"),
        })
    }

    pub fn leaf_at(&self, p: &Vector3<f64>) -> Option<&VoxelNode> {
        self.key_for(p).ok().and_then(|k| self.leaf(k))
    }

    pub fn is_leaf_occupied(&self, v: &VoxelNode) -> bool {
        v.log_odds > self.threshold
    }

    /// True iff a leaf exists at `p` and its log-odds exceeds the threshold.
    pub fn is_occupied(&self, p: &Vector3<f64>) -> bool {
        self.leaf_at(p).is_some_and(|v| self.is_leaf_occupied(v))
    }

    pub fn is_key_occupied(&self, key: VoxelKey) -> bool {
        self.leaf(key).is_some_and(|v| self.is_leaf_occupied(v))
    }

    /// Largest log-odds anywhere in the map, read from the root cache.
    pub fn max_log_odds(&self) -> Option<f64> {
        (self.leaf_count > 0).then(|| self.nodes[0].value())
    }

    /// Applies `f` to the leaf at `key`, creating the path if needed, then
    /// refreshes the cached maxima along the path.
    fn with_leaf<R>(&mut self, key: VoxelKey, f: impl FnOnce(&mut VoxelNode) -> R) -> R {
        let mut path = [0u32; TREE_DEPTH as usize + 1];
        let mut idx = 0usize;
        for level in 0..TREE_DEPTH {
            let slot = key.child_index(level);
            let next_len = self.nodes.len() as u32;
            let Node::Inner { children, .. } = &mut self.nodes[idx] else {
                unreachable!("leaf above leaf depth");
            };
            let child = children[slot];
            let child = if child == NO_CHILD {
                children[slot] = next_len;
                let node = if level + 1 == TREE_DEPTH {
                    self.leaf_count += 1;
                    Node::Leaf(VoxelNode::new(key))
                } else {
                    Node::empty_inner()
                };
                self.nodes.push(node);
                next_len
            } else {
                child
            };
            idx = child as usize;
            path[level as usize + 1] = child;
        }
        let out = match &mut self.nodes[idx] {
            Node::Leaf(v) => f(v),
            Node::Inner { .. } => unreachable!("inner node at leaf depth"),
        };
        for level in (0..TREE_DEPTH as usize).rev() {
            let i = path[level] as usize;
            let Node::Inner { children, .. } = &self.nodes[i] else {
                unreachable!();
            };
            let m = children
                .iter()
                .filter(|&&c| c != NO_CHILD)
                .map(|&c| self.nodes[c as usize].value())
                .fold(f64::NEG_INFINITY, f64::max);
            if let Node::Inner { max_log_odds, .. } = &mut self.nodes[i] {
                *max_log_odds = m;
            }
        }
        out
    }

    /// Adds one observation to the voxel containing `pt`.
    pub fn insert_point(&mut self, pt: &LabeledPoint) -> Result<&VoxelNode, MapError> {
        let p = &pt.position;
        if !p.iter().all(|v| v.is_finite()) {
            return Err(MapError::NonFinitePoint { x: p.x, y: p.y, z: p.z });
        }
        let key = self.key_for(p)?;
        let cfg = self.cfg;
        self.with_leaf(key, |v| v.observe(pt, &cfg));
        Ok(self.leaf(key).expect("leaf was just created"))
    }

    /// Replaces (or creates) a leaf wholesale. Used when loading a map.
    pub(crate) fn put_leaf(&mut self, node: VoxelNode) {
        let key = node.key;
        self.with_leaf(key, |v| *v = node);
    }

    /// Labels each point from the boxes containing it, then inserts it.
    ///
    /// A point inside any movable box is marked movable and takes that box's
    /// label; otherwise a point inside a static box takes its label. Bounds
    /// are inclusive. Earlier boxes win among boxes of the same kind.
    pub fn insert_labeled_cloud(&mut self, points: &[LabeledPoint], boxes: &[SemanticBox]) -> InsertStats {
        let mut stats = InsertStats::default();
        for pt in points {
            let mut pt = *pt;
            if let Some(b) = boxes.iter().find(|b| b.movable && b.bbox.contains(&pt.position)) {
                pt.movable = true;
                pt.label = Some(b.bbox.label);
            } else if let Some(b) = boxes.iter().find(|b| !b.movable && b.bbox.contains(&pt.position)) {
                pt.label = Some(b.bbox.label);
            }
            match self.insert_point(&pt) {
                Ok(_) => {
                    stats.inserted += 1;
                    stats.movable += usize::from(pt.movable);
                    stats.labeled += usize::from(pt.label.is_some());
                }
                Err(_) => stats.rejected += 1,
            }
        }
        stats
    }

    /// Every leaf in depth-first child order (deterministic).
    pub fn leaves(&self) -> impl Iterator<Item = &VoxelNode> + '_ {
        let mut stack = vec![0usize];
        std::iter::from_fn(move || {
            while let Some(i) = stack.pop() {
                match &self.nodes[i] {
                    Node::Leaf(v) => return Some(v),
                    Node::Inner { children, .. } => {
                        stack.extend(children.iter().rev().filter(|&&c| c != NO_CHILD).map(|&c| c as usize));
                    }
                }
            }
            None
        })
    }

    pub fn occupied_leaves(&self) -> impl Iterator<Item = &VoxelNode> + '_ {
        self.leaves().filter(|v| self.is_leaf_occupied(v))
    }
}
