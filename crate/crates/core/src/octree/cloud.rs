use image::{ImageBuffer, Luma, RgbImage};

use super::{LabeledPoint, MapError};
use crate::geometry::{CameraIntrinsics, PoseSE3};

/// 16-bit depth image in raw sensor units.
pub type DepthImage = ImageBuffer<Luma<u16>, Vec<u16>>;

/// Backprojects every `stride`-th pixel (in both directions) with non-zero
/// depth into the world frame, carrying the pixel color.
pub fn cloud_from_depth(
    rgb: &RgbImage,
    depth: &DepthImage,
    pose_cw: &PoseSE3,
    k: &CameraIntrinsics,
    stride: u32,
) -> Result<Vec<LabeledPoint>, MapError> {
    if rgb.dimensions() != depth.dimensions() {
        return Err(MapError::ResolutionMismatch {
            rgb: rgb.dimensions(),
            depth: depth.dimensions(),
        });
    }
    if stride == 0 {
        return Err(MapError::ZeroStride);
    }
    let pose_wc = pose_cw.inverse();
    let (w, h) = depth.dimensions();
    let mut out = Vec::new();
    for v in (0..h).step_by(stride as usize) {
        for u in (0..w).step_by(stride as usize) {
            let raw = depth.get_pixel(u, v).0[0];
            let Ok(pc) = k.backproject(u as f64, v as f64, raw as f64) else {
                continue;
            };
            out.push(LabeledPoint::unlabeled(
                pose_wc.transform_point(&pc),
                rgb.get_pixel(u, v).0,
            ));
        }
    }
    Ok(out)
}
