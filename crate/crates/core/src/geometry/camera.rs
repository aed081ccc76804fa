use nalgebra::{Vector2, Vector3};
use serde::{Deserialize, Serialize};

use super::GeometryError;

/// Pinhole intrinsics plus the raw-depth-units-per-meter divisor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub depth_scale: f64,
}

impl CameraIntrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, depth_scale: f64) -> Result<Self, GeometryError> {
        let k = Self {
            fx,
            fy,
            cx,
            cy,
            depth_scale,
        };
        k.validate()?;
        Ok(k)
    }

    /// Default intrinsics published with the TUM RGB-D benchmark (640x480).
    pub fn tum_default() -> Self {
        Self {
            fx: 525.0,
            fy: 525.0,
            cx: 319.5,
            cy: 239.5,
            depth_scale: 5000.0,
        }
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        let finite = [self.fx, self.fy, self.cx, self.cy, self.depth_scale]
            .iter()
            .all(|v| v.is_finite());
        if !finite || self.fx <= 0.0 || self.fy <= 0.0 || self.depth_scale <= 0.0 {
            return Err(GeometryError::InvalidIntrinsics);
        }
        Ok(())
    }

    /// Lifts pixel `(u, v)` with raw depth `depth_raw` into the camera frame.
    pub fn backproject(&self, u: f64, v: f64, depth_raw: f64) -> Result<Vector3<f64>, GeometryError> {
        if !depth_raw.is_finite() || depth_raw <= 0.0 {
            return Err(GeometryError::InvalidDepth(depth_raw));
        }
        Ok(self.backproject_metric(u, v, depth_raw / self.depth_scale))
    }

    /// Same as [`backproject`](Self::backproject) with depth already in meters.
    /// The caller guarantees `z > 0`.
    pub(crate) fn backproject_metric(&self, u: f64, v: f64, z: f64) -> Vector3<f64> {
        Vector3::new((u - self.cx) * z / self.fx, (v - self.cy) * z / self.fy, z)
    }

    /// Forward pinhole projection. Returns `None` for points at or behind the
    /// image plane.
    pub fn project(&self, p: &Vector3<f64>) -> Option<Vector2<f64>> {
        if p.z <= 0.0 {
            return None;
        }
        Some(Vector2::new(
            self.fx * p.x / p.z + self.cx,
            self.fy * p.y / p.z + self.cy,
        ))
    }
}

/// Image resolution in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageSize {
    pub width: u32,
    pub height: u32,
}

impl ImageSize {
    pub const TUM: ImageSize = ImageSize {
        width: 640,
        height: 480,
    };
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn principal_point_lifts_onto_axis() {
        let k = CameraIntrinsics::tum_default();
        let p = k.backproject(k.cx, k.cy, k.depth_scale * 2.0).unwrap();
        assert_eq!(p, Vector3::new(0.0, 0.0, 2.0));
    }

    #[test]
    fn unit_tangent() {
        let k = CameraIntrinsics::tum_default();
        let p = k.backproject(k.cx + k.fx, k.cy, k.depth_scale).unwrap();
        assert!((p - Vector3::new(1.0, 0.0, 1.0)).norm() < 1e-15);
    }

    #[test]
    fn tum_defaults_example() {
        let k = CameraIntrinsics::tum_default();
        let p = k.backproject(419.5, 239.5, 5000.0).unwrap();
        assert!((p.x - 100.0 / 525.0).abs() < 1e-15);
        assert!((p.x - 0.1905).abs() < 1e-4);
        assert_eq!(p.y, 0.0);
        assert_eq!(p.z, 1.0);
    }

    #[test]
    fn non_positive_depth_is_rejected() {
        let k = CameraIntrinsics::tum_default();
        assert!(matches!(
            k.backproject(1.0, 1.0, 0.0),
            Err(GeometryError::InvalidDepth(_))
        ));
        assert!(k.backproject(1.0, 1.0, -3.0).is_err());
        assert!(k.backproject(1.0, 1.0, f64::NAN).is_err());
    }

    #[test]
    fn intrinsics_validation() {
        assert!(CameraIntrinsics::new(0.0, 1.0, 0.0, 0.0, 1.0).is_err());
        assert!(CameraIntrinsics::new(1.0, 1.0, 0.0, 0.0, 0.0).is_err());
        assert!(CameraIntrinsics::new(1.0, 1.0, 0.0, 0.0, 1.0).is_ok());
    }

    proptest! {
        #[test]
        fn backproject_then_project(u in -100.0f64..800.0, v in -100.0f64..600.0, d in 1.0f64..60000.0) {
            let k = CameraIntrinsics::tum_default();
            let p = k.backproject(u, v, d).unwrap();
            let px = k.project(&p).unwrap();
            prop_assert!((px.x - u).abs() < 1e-6);
            prop_assert!((px.y - v).abs() < 1e-6);
        }
    }
}
