//! Constant-velocity filter over `[x, y, a, r, vx, vy, va]`: box center,
//! area and aspect ratio, with rates for all but the aspect ratio.

use crate::config::KalmanNoise;
use crate::error::{Error, Result};
use crate::numerics::linalg::{diag, invert, Mat};
use crate::types::BBox;

pub const STATE_DIM: usize = 7;
pub const OBS_DIM: usize = 4;
const MIN_AREA: f64 = 1e-6;
const MIN_ASPECT: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct MotionState {
    pub s: [f64; STATE_DIM],
    /// Error covariance, `7 x 7`.
    pub e: Mat,
}

impl MotionState {
    /// State at `box` with zero rates and covariance `cov`.
    pub fn from_box(b: &BBox, cov: Mat) -> Result<Self> {
        let z = box_to_obs(b)?;
        if cov.shape() != (STATE_DIM, STATE_DIM) {
            return Err(Error::Shape(format!("covariance must be 7x7, got {:?}", cov.shape())));
        }
        Ok(Self {
            s: [z[0], z[1], z[2], z[3], 0.0, 0.0, 0.0],
            e: cov,
        })
    }

    pub fn observed(&self) -> [f64; OBS_DIM] {
        [self.s[0], self.s[1], self.s[2], self.s[3]]
    }

    pub fn to_box(&self) -> BBox {
        obs_to_box(&self.observed())
    }

    fn enforce_positive(&mut self) {
        self.s[2] = self.s[2].max(MIN_AREA);
        self.s[3] = self.s[3].max(MIN_ASPECT);
    }

    fn symmetrize(&mut self) {
        let t = self.e.transpose();
        self.e = (&self.e + t) * 0.5;
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KalmanParams {
    pub f: Mat,
    pub h: Mat,
    pub q: Mat,
    pub r: Mat,
}

impl KalmanParams {
    /// Transition adds each rate to its quantity; observation reads the
    /// first four components.
    pub fn transition() -> Mat {
        let mut f = Mat::identity(STATE_DIM, STATE_DIM);
        f[(0, 4)] = 1.0;
        f[(1, 5)] = 1.0;
        f[(2, 6)] = 1.0;
        f
    }

    pub fn observation() -> Mat {
        Mat::identity(OBS_DIM, STATE_DIM)
    }

    pub fn new(noise: &KalmanNoise) -> Self {
        Self {
            f: Self::transition(),
            h: Self::observation(),
            q: diag(&noise.process),
            r: diag(&noise.observation),
        }
    }

    pub fn with_noise(q: Mat, r: Mat) -> Result<Self> {
        if q.shape() != (STATE_DIM, STATE_DIM) || r.shape() != (OBS_DIM, OBS_DIM) {
            return Err(Error::Shape("Q must be 7x7 and R 4x4".into()));
        }
        Ok(Self {
            f: Self::transition(),
            h: Self::observation(),
            q,
            r,
        })
    }
}

/// `[cx, cy, w*h, w/h]`.
pub fn box_to_obs(b: &BBox) -> Result<[f64; OBS_DIM]> {
    b.validate()?;
    let (cx, cy) = b.center();
    Ok([cx, cy, b.w * b.h, b.w / b.h])
}

pub fn obs_to_box(z: &[f64; OBS_DIM]) -> BBox {
    let w = (z[2] * z[3]).sqrt();
    let h = (z[2] / z[3]).sqrt();
    BBox::from_center(z[0], z[1], w, h)
}

pub fn kalman_predict(state: &MotionState, p: &KalmanParams) -> MotionState {
    let s = &p.f * nalgebra::DVector::from_column_slice(&state.s);
    let mut next = MotionState {
        s: std::array::from_fn(|i| s[i]),
        e: &p.f * &state.e * p.f.transpose() + &p.q,
    };
    next.enforce_positive();
    next.symmetrize();
    next
}

pub fn kalman_update(state: &MotionState, z: &[f64; OBS_DIM], p: &KalmanParams) -> Result<MotionState> {
    if z.iter().any(|v| !v.is_finite()) || z[2] <= 0.0 || z[3] <= 0.0 {
        return Err(Error::InvalidInput(format!("invalid observation {z:?}")));
    }
    let s = nalgebra::DVector::from_column_slice(&state.s);
    let zv = nalgebra::DVector::from_column_slice(z);
    let ht = p.h.transpose();
    let innovation_cov = &p.h * &state.e * &ht + &p.r;
    let k = &state.e * &ht * invert(&innovation_cov)?;
    let s_post = &s + &k * (zv - &p.h * &s);
    let e_post = (Mat::identity(STATE_DIM, STATE_DIM) - &k * &p.h) * &state.e;
    let mut next = MotionState {
        s: std::array::from_fn(|i| s_post[i]),
        e: e_post,
    };
    next.enforce_positive();
    next.symmetrize();
    Ok(next)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn zero_params() -> KalmanParams {
        KalmanParams::with_noise(Mat::zeros(7, 7), Mat::zeros(4, 4)).unwrap()
    }

    #[test]
    fn predict_reference_state() {
        let st = MotionState {
            s: [10.0, 20.0, 100.0, 1.0, 2.0, 3.0, 0.0],
            e: Mat::zeros(7, 7),
        };
        let next = kalman_predict(&st, &zero_params());
        assert_eq!(next.s, [12.0, 23.0, 100.0, 1.0, 2.0, 3.0, 0.0]);
        assert!(next.e.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn transition_layout() {
        let f = KalmanParams::transition();
        for i in 0..7 {
            for j in 0..7 {
                let expect = i == j || (i, j) == (0, 4) || (i, j) == (1, 5) || (i, j) == (2, 6);
                assert_eq!(f[(i, j)], if expect { 1.0 } else { 0.0 });
            }
        }
        let h = KalmanParams::observation();
        assert_eq!(h.shape(), (4, 7));
        assert_eq!(h.iter().sum::<f64>(), 4.0);
    }

    #[test]
    fn zero_innovation_keeps_state() {
        let params = KalmanParams::new(&KalmanNoise::default());
        let st = MotionState {
            s: [5.0, 6.0, 40.0, 2.5, 1.0, -1.0, 0.5],
            e: diag(&[3.0, 3.0, 5.0, 0.1, 2.0, 2.0, 1.0]),
        };
        let next = kalman_update(&st, &st.observed(), &params).unwrap();
        for (a, b) in next.s.iter().zip(&st.s) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn near_exact_observation_wins() {
        let params = KalmanParams::with_noise(diag(&[1.0; 7]), diag(&[1e-12; 4])).unwrap();
        let st = MotionState {
            s: [5.0, 6.0, 40.0, 2.5, 1.0, -1.0, 0.5],
            e: diag(&[3.0, 3.0, 5.0, 0.1, 2.0, 2.0, 1.0]),
        };
        let z = [9.0, 1.0, 60.0, 1.5];
        let next = kalman_update(&st, &z, &params).unwrap();
        for k in 0..4 {
            assert!((next.s[k] - z[k]).abs() < 1e-6);
        }
    }

    #[test]
    fn singular_innovation_errors() {
        let st = MotionState {
            s: [5.0, 6.0, 40.0, 2.5, 0.0, 0.0, 0.0],
            e: Mat::zeros(7, 7),
        };
        assert!(matches!(
            kalman_update(&st, &[1.0, 1.0, 1.0, 1.0], &zero_params()),
            Err(Error::Singular(_))
        ));
    }

    #[test]
    fn obs_definitions() {
        let z = box_to_obs(&BBox::new(0.0, 0.0, 4.0, 2.0)).unwrap();
        assert_eq!(z, [2.0, 1.0, 8.0, 2.0]);
        assert_eq!(box_to_obs(&BBox::new(3.0, 3.0, 5.0, 5.0)).unwrap()[3], 1.0);
        let b = BBox::new(1.5, -2.0, 7.0, 3.0);
        let back = obs_to_box(&box_to_obs(&b).unwrap());
        for (x, y) in [(back.x, b.x), (back.y, b.y), (back.w, b.w), (back.h, b.h)] {
            assert!((x - y).abs() < 1e-12);
        }
        assert!(box_to_obs(&BBox::new(0.0, 0.0, 0.0, 1.0)).is_err());
    }
}
