//! Constant-velocity Kalman filter over (cx, cy, aspect, h).

use nalgebra::{SMatrix, SVector};

pub type State = SVector<f64, 8>;
pub type Covariance = SMatrix<f64, 8, 8>;
type Measurement = SVector<f64, 4>;

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct KalmanNoise {
    /// Position noise per unit of box height.
    pub position_weight: f64,
    /// Velocity noise per unit of box height.
    pub velocity_weight: f64,
}

impl Default for KalmanNoise {
    fn default() -> Self {
        KalmanNoise { position_weight: 1.0 / 20.0, velocity_weight: 1.0 / 160.0 }
    }
}

#[derive(Debug, Clone)]
pub struct KalmanBoxFilter {
    pub mean: State,
    pub covariance: Covariance,
    noise: KalmanNoise,
}

fn transition() -> SMatrix<f64, 8, 8> {
    let mut f = SMatrix::<f64, 8, 8>::identity();
    for i in 0..4 {
        f[(i, i + 4)] = 1.0;
    }
    f
}

fn observation() -> SMatrix<f64, 4, 8> {
    let mut h = SMatrix::<f64, 4, 8>::zeros();
    for i in 0..4 {
        h[(i, i)] = 1.0;
    }
    h
}

impl KalmanBoxFilter {
    /// `xyah` = (cx, cy, w/h, h).
    pub fn new(xyah: [f64; 4], noise: KalmanNoise) -> Self {
        let h = xyah[3];
        let p = noise.position_weight;
        let v = noise.velocity_weight;
        let std = [
            2.0 * p * h,
            2.0 * p * h,
            1e-2,
            2.0 * p * h,
            10.0 * v * h,
            10.0 * v * h,
            1e-5,
            10.0 * v * h,
        ];
        let mut mean = State::zeros();
        for i in 0..4 {
            mean[i] = xyah[i];
        }
        let covariance = Covariance::from_diagonal(&SVector::from_iterator(std.iter().map(|s| s * s)));
        KalmanBoxFilter { mean, covariance, noise }
    }

    pub fn predict(&mut self) {
        let h = self.mean[3].max(1e-6);
        let p = self.noise.position_weight;
        let v = self.noise.velocity_weight;
        let std = [p * h, p * h, 1e-2, p * h, v * h, v * h, 1e-5, v * h];
        let q = Covariance::from_diagonal(&SVector::from_iterator(std.iter().map(|s| s * s)));
        let f = transition();
        self.mean = f * self.mean;
        self.covariance = f * self.covariance * f.transpose() + q;
    }

    pub fn update(&mut self, xyah: [f64; 4]) {
        let h = self.mean[3].max(1e-6);
        let p = self.noise.position_weight;
        let r_std = [p * h, p * h, 1e-1, p * h];
        let r = SMatrix::<f64, 4, 4>::from_diagonal(&SVector::from_iterator(
            r_std.iter().map(|s| s * s),
        ));
        let hm = observation();
        let s = hm * self.covariance * hm.transpose() + r;
        let Some(s_inv) = s.try_inverse() else {
            return;
        };
        let k = self.covariance * hm.transpose() * s_inv;
        let z = Measurement::from_column_slice(&xyah);
        let innovation = z - hm * self.mean;
        self.mean += k * innovation;
        self.covariance -= k * s * k.transpose();
    }

    pub fn xyah(&self) -> [f64; 4] {
        [self.mean[0], self.mean[1], self.mean[2], self.mean[3]]
    }

    pub fn velocity(&self) -> [f64; 4] {
        [self.mean[4], self.mean[5], self.mean[6], self.mean[7]]
    }

    pub fn uncertainty(&self) -> f64 {
        self.covariance.trace()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_velocity_predict_keeps_box() {
        let mut kf = KalmanBoxFilter::new([10.0, 20.0, 0.5, 100.0], KalmanNoise::default());
        kf.predict();
        assert_eq!(kf.xyah(), [10.0, 20.0, 0.5, 100.0]);
    }

    #[test]
    fn velocity_advances_center() {
        let mut kf = KalmanBoxFilter::new([10.0, 20.0, 0.5, 100.0], KalmanNoise::default());
        kf.mean[4] = 2.0;
        kf.predict();
        assert_eq!(kf.xyah()[0], 12.0);
        assert_eq!(kf.xyah()[1], 20.0);
    }

    #[test]
    fn uncertainty_grows_without_updates() {
        let mut kf = KalmanBoxFilter::new([10.0, 20.0, 0.5, 100.0], KalmanNoise::default());
        let mut last = kf.uncertainty();
        for _ in 0..20 {
            kf.predict();
            let now = kf.uncertainty();
            assert!(now > last);
            last = now;
        }
    }

    #[test]
    fn updates_learn_constant_velocity() {
        let mut kf = KalmanBoxFilter::new([0.0, 0.0, 0.5, 100.0], KalmanNoise::default());
        for t in 1..60 {
            kf.predict();
            kf.update([3.0 * t as f64, 0.0, 0.5, 100.0]);
        }
        assert!((kf.velocity()[0] - 3.0).abs() < 0.05, "vx = {}", kf.velocity()[0]);
    }
}
