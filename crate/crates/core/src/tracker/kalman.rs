//! Constant-velocity Kalman filter over a planar box.
//!
//! State is `[ca, cb, s, r, v_ca, v_cb, v_s]`: box center, area, aspect ratio
//! (width / height) and the rates of the first three. The aspect ratio has no
//! rate term. The measurement is `[ca, cb, s, r]`.

use nalgebra::{SMatrix, SVector, Vector2};

use super::TrackerError;
use crate::geometry::Box2D;

pub type StateVector = SVector<f64, 7>;
pub type StateCovariance = SMatrix<f64, 7, 7>;
type Measurement = SVector<f64, 4>;
type MeasurementMatrix = SMatrix<f64, 4, 7>;

/// Smallest area a prediction may reach.
pub const MIN_AREA: f64 = 1e-9;

/// Noise scales shared by all tracks of a tracker.
///
/// The shapes follow common SORT practice: measurement noise
/// `diag(1, 1, 10, 10) * measurement`, process noise
/// `diag(1, 1, 1, 1, 0.01, 0.01, 1e-4) * process` per second, and initial
/// covariance `diag(10, 10, 10, 10, 1e4, 1e4, 1e4) * measurement`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseModel {
    pub process: f64,
    pub measurement: f64,
}

impl NoiseModel {
    fn process_diag(&self) -> StateVector {
        StateVector::from_column_slice(&[1.0, 1.0, 1.0, 1.0, 0.01, 0.01, 1e-4]) * self.process
    }

    fn measurement_cov(&self) -> SMatrix<f64, 4, 4> {
        SMatrix::<f64, 4, 4>::from_diagonal(&SVector::<f64, 4>::new(1.0, 1.0, 10.0, 10.0))
            * self.measurement
    }

    fn initial_cov(&self) -> StateCovariance {
        StateCovariance::from_diagonal(&StateVector::from_column_slice(&[
            10.0, 10.0, 10.0, 10.0, 1e4, 1e4, 1e4,
        ])) * self.measurement
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KalmanBoxState {
    pub x: StateVector,
    pub p: StateCovariance,
}

fn measurement_matrix() -> MeasurementMatrix {
    let mut h = MeasurementMatrix::zeros();
    for i in 0..4 {
        h[(i, i)] = 1.0;
    }
    h
}

pub(crate) fn box_to_measurement(b: &Box2D) -> Result<Measurement, TrackerError> {
    let (w, h) = (b.width(), b.height());
    if !(w > 0.0 && h > 0.0) || !b.area().is_finite() {
        return Err(TrackerError::DegenerateObservation { width: w, height: h });
    }
    let c = b.center();
    Ok(Measurement::new(c.x, c.y, w * h, w / h))
}

impl KalmanBoxState {
    /// Starts a track at an observed box with zero rates.
    pub fn from_box(b: &Box2D, noise: &NoiseModel) -> Result<Self, TrackerError> {
        let z = box_to_measurement(b)?;
        let mut x = StateVector::zeros();
        x.fixed_rows_mut::<4>(0).copy_from(&z);
        Ok(Self {
            x,
            p: noise.initial_cov(),
        })
    }

    pub fn center(&self) -> Vector2<f64> {
        Vector2::new(self.x[0], self.x[1])
    }

    pub fn velocity(&self) -> Vector2<f64> {
        Vector2::new(self.x[4], self.x[5])
    }

    pub fn area(&self) -> f64 {
        self.x[2]
    }

    pub fn aspect_ratio(&self) -> f64 {
        self.x[3]
    }

    pub fn to_box(&self) -> Box2D {
        let s = self.x[2].max(0.0);
        let r = self.x[3].max(0.0);
        let w = (s * r).sqrt();
        let h = if r > 0.0 { (s / r).sqrt() } else { 0.0 };
        let c = self.center();
        Box2D {
            min: Vector2::new(c.x - w / 2.0, c.y - h / 2.0),
            max: Vector2::new(c.x + w / 2.0, c.y + h / 2.0),
        }
    }

    /// Advances the state by `dt` seconds under constant velocity.
    pub fn predict(&self, dt: f64, noise: &NoiseModel) -> Self {
        let mut f = StateCovariance::identity();
        f[(0, 4)] = dt;
        f[(1, 5)] = dt;
        f[(2, 6)] = dt;
        let mut x = f * self.x;
        if x[2] < MIN_AREA {
            x[2] = MIN_AREA;
        }
        let q = StateCovariance::from_diagonal(&(noise.process_diag() * dt));
        let p = f * self.p * f.transpose() + q;
        Self {
            x,
            p: symmetrize(p),
        }
    }

    /// Standard Kalman correction with a box observation.
    pub fn update(&self, observed: &Box2D, noise: &NoiseModel) -> Result<Self, TrackerError> {
        let z = box_to_measurement(observed)?;
        let h = measurement_matrix();
        let r = noise.measurement_cov();
        let s = h * self.p * h.transpose() + r;
        let s_inv = s
            .try_inverse()
            .ok_or(TrackerError::SingularInnovation)?;
        let k = self.p * h.transpose() * s_inv;
        let innovation = z - h * self.x;
        let x = self.x + k * innovation;
        // Joseph form keeps the covariance symmetric positive semidefinite.
        let i_kh = StateCovariance::identity() - k * h;
        let p = i_kh * self.p * i_kh.transpose() + k * r * k.transpose();
        Ok(Self {
            x,
            p: symmetrize(p),
        })
    }
}

fn symmetrize(p: StateCovariance) -> StateCovariance {
    (p + p.transpose()) * 0.5
}

#[cfg(test)]
mod tests {
    use super::*;

    fn noise() -> NoiseModel {
        NoiseModel {
            process: 1e-3,
            measurement: 1e-4,
        }
    }

    fn unit_box(cx: f64) -> Box2D {
        Box2D::new(cx - 0.5, -0.5, cx + 0.5, 0.5)
    }

    #[test]
    fn measurement_round_trip() {
        let b = Box2D::new(1.0, 2.0, 4.0, 3.0);
        let st = KalmanBoxState::from_box(&b, &noise()).unwrap();
        assert_eq!(st.area(), 3.0);
        assert_eq!(st.aspect_ratio(), 3.0);
        let back = st.to_box();
        assert!((back.min - b.min).norm() < 1e-12);
        assert!((back.max - b.max).norm() < 1e-12);
    }

    #[test]
    fn zero_velocity_predict_changes_only_covariance() {
        let st = KalmanBoxState::from_box(&unit_box(0.0), &noise()).unwrap();
        let next = st.predict(2.5, &noise());
        assert_eq!(next.x, st.x);
        assert!(next.p.trace() > st.p.trace());
        let same = st.predict(0.0, &noise());
        assert_eq!(same, st);
    }

    #[test]
    fn linear_motion() {
        let mut st = KalmanBoxState::from_box(&unit_box(0.0), &noise()).unwrap();
        st.x[4] = 1.0;
        let next = st.predict(0.5, &noise());
        assert!((next.x[0] - 0.5).abs() < 1e-15);
        assert_eq!(next.x[3], st.x[3]);
    }

    #[test]
    fn area_is_floored() {
        let mut st = KalmanBoxState::from_box(&unit_box(0.0), &noise()).unwrap();
        st.x[6] = -10.0;
        let next = st.predict(1.0, &noise());
        assert_eq!(next.area(), MIN_AREA);
    }

    #[test]
    fn noiseless_constant_velocity_fit() {
        let tiny = NoiseModel {
            process: 1e-12,
            measurement: 1e-12,
        };
        let dt = 1.0;
        let mut st = KalmanBoxState::from_box(&unit_box(0.0), &tiny).unwrap();
        // diffuse prior: the filter then reproduces the exact two-point fit
        st.p *= 1e8;
        for k in 1..3 {
            st = st.predict(dt, &tiny).update(&unit_box(0.1 * k as f64), &tiny).unwrap();
        }
        let next = st.predict(dt, &tiny);
        assert!((next.x[0] - 0.3).abs() < 1e-6, "center {}", next.x[0]);
        assert!(next.x[1].abs() < 1e-9);
    }

    #[test]
    fn exact_prediction_update_is_stationary() {
        let tiny = NoiseModel {
            process: 1e-3,
            measurement: 1e-12,
        };
        let st = KalmanBoxState::from_box(&unit_box(0.3), &tiny).unwrap();
        let upd = st.update(&st.to_box(), &tiny).unwrap();
        assert!((upd.x - st.x).abs().max() < 1e-12);
    }

    #[test]
    fn huge_prior_posterior_equals_observation() {
        let mut st = KalmanBoxState::from_box(&unit_box(0.0), &noise()).unwrap();
        st.p *= 1e12;
        let obs = Box2D::new(2.0, 1.0, 3.0, 3.0);
        let upd = st.update(&obs, &noise()).unwrap();
        let z = box_to_measurement(&obs).unwrap();
        for i in 0..4 {
            assert!((upd.x[i] - z[i]).abs() < 1e-6, "component {i}");
        }
    }

    #[test]
    fn update_contracts_observed_covariance() {
        let st = KalmanBoxState::from_box(&unit_box(0.0), &noise())
            .unwrap()
            .predict(0.2, &noise());
        let upd = st.update(&unit_box(0.05), &noise()).unwrap();
        let tr = |p: &StateCovariance| (0..4).map(|i| p[(i, i)]).sum::<f64>();
        assert!(tr(&upd.p) <= tr(&st.p));
        assert!((upd.p - upd.p.transpose()).abs().max() < 1e-9);
        assert!((0..7).all(|i| upd.p[(i, i)] >= 0.0));
    }

    #[test]
    fn degenerate_observation_rejected() {
        let st = KalmanBoxState::from_box(&unit_box(0.0), &noise()).unwrap();
        let flat = Box2D::new(0.0, 0.0, 1.0, 0.0);
        assert!(matches!(
            st.update(&flat, &noise()),
            Err(TrackerError::DegenerateObservation { .. })
        ));
        assert!(KalmanBoxState::from_box(&flat, &noise()).is_err());
    }

    /// Scalar Kalman filter for a random-walk state with no rate term.
    struct ScalarKf {
        x: f64,
        p: f64,
    }

    impl ScalarKf {
        fn predict(&mut self, q: f64) {
            self.p += q;
        }
        fn update(&mut self, z: f64, r: f64) {
            let k = self.p / (self.p + r);
            self.x += k * (z - self.x);
            self.p *= 1.0 - k;
        }
    }

    #[test]
    fn aspect_ratio_matches_scalar_oracle() {
        // The aspect ratio row is decoupled from every other state, so its
        // estimate must follow a plain scalar filter.
        let n = noise();
        let heights = [1.0, 1.1, 0.95, 1.3, 1.2, 0.9];
        let dts = [0.1, 0.3, 0.05, 0.2, 0.5];
        let make = |h: f64| Box2D::new(0.0, 0.0, 1.0, h);
        let mut st = KalmanBoxState::from_box(&make(heights[0]), &n).unwrap();
        let mut oracle = ScalarKf {
            x: 1.0 / heights[0],
            p: 10.0 * n.measurement,
        };
        for (h, dt) in heights[1..].iter().zip(dts) {
            st = st.predict(dt, &n).update(&make(*h), &n).unwrap();
            oracle.predict(n.process * dt);
            oracle.update(1.0 / h, 10.0 * n.measurement);
            assert!((st.x[3] - oracle.x).abs() < 1e-12);
            assert!((st.p[(3, 3)] - oracle.p).abs() < 1e-15);
        }
    }

    #[test]
    fn estimate_converges_on_noiseless_track() {
        let n = noise();
        let dt = 1.0 / 6.0;
        let speed = 0.3;
        let mut st = KalmanBoxState::from_box(&unit_box(0.0), &n).unwrap();
        let mut errors = Vec::new();
        for k in 1..=8 {
            let truth = speed * dt * k as f64;
            st = st.predict(dt, &n);
            errors.push((st.x[0] - truth).abs());
            st = st.update(&unit_box(truth), &n).unwrap();
        }
        // prediction error after 5+ updates beats the one after 2
        assert!(errors[5] < errors[1], "{errors:?}");
        assert!(errors[7] < errors[1], "{errors:?}");
    }
}
