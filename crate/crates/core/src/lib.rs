//! Dynamic-scene machinery for a keyframe-gated RGB-D SLAM front-end.
//!
//! Detections arriving at keyframes are lifted into world-frame boxes,
//! tracked as projections on the three axis-aligned world planes, fused back
//! into 3D and predicted for every intermediate frame. Predictions cull
//! feature points on movable objects, and labeled point clouds are fused into
//! a semantic occupancy octree in which movable objects never become
//! occupied.

pub mod dataset;
pub mod geometry;
pub mod labels;
pub mod octree;
pub mod pipeline;
pub mod synthetic;
pub mod fusion;
pub mod tracker;
