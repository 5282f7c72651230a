//! Ground truth and sensor models.

use std::f64::consts::TAU;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::filter::LinearDynamics;
use crate::gaussian::{CanonicalGaussian, VariableKey};

use super::config::{ScenarioConfig, BIAS_DIM, TARGET_DIM};
use super::rng::correlated_normal;

/// Rows of `H` that pick `[n, e]` out of `[n, ṅ, e, ė]`.
pub fn position_selector() -> DMatrix<f64> {
    let mut h = DMatrix::zeros(2, TARGET_DIM);
    h[(0, 0)] = 1.0;
    h[(1, 2)] = 1.0;
    h
}

pub fn lower_cholesky(m: &DMatrix<f64>) -> DMatrix<f64> {
    m.clone().cholesky().expect("covariance is positive definite").l()
}

pub fn cov2(m: &[[f64; 2]; 2]) -> DMatrix<f64> {
    DMatrix::from_row_slice(2, 2, &[m[0][0], m[0][1], m[1][0], m[1][1]])
}

#[derive(Debug, Clone, PartialEq)]
pub struct Truth {
    /// `targets[t-1]` is target `t`'s `[n, ṅ, e, ė]`.
    pub targets: Vec<DVector<f64>>,
    /// `biases[i-1]` is robot `i`'s constant measurement bias `[b_n, b_e]`.
    pub biases: Vec<DVector<f64>>,
}

impl Truth {
    /// Targets start on a square grid with random headings; biases are drawn
    /// from their prior.
    pub fn initial(cfg: &ScenarioConfig, rng: &mut ChaCha8Rng) -> Self {
        let n = cfg.n_targets as usize;
        let cols = (n as f64).sqrt().ceil() as usize;
        let spacing = cfg.truth.grid_spacing_m;
        let targets = (0..n)
            .map(|t| {
                let heading = rng.random::<f64>() * TAU;
                let speed = cfg.truth.speed_mps;
                DVector::from_vec(vec![
                    (t % cols) as f64 * spacing,
                    speed * heading.cos(),
                    (t / cols) as f64 * spacing,
                    speed * heading.sin(),
                ])
            })
            .collect();
        let bias_chol = DMatrix::identity(BIAS_DIM, BIAS_DIM) * cfg.prior.bias_sigma_m;
        let biases = (0..cfg.n_robots)
            .map(|_| {
                if cfg.sensor_bias {
                    correlated_normal(rng, &bias_chol)
                } else {
                    DVector::zeros(BIAS_DIM)
                }
            })
            .collect();
        Truth { targets, biases }
    }

    pub fn target(&self, t: u32) -> &DVector<f64> {
        &self.targets[t as usize - 1]
    }

    pub fn bias(&self, robot: u32) -> &DVector<f64> {
        &self.biases[robot as usize - 1]
    }

    /// Advance every target one step with fresh process noise.
    pub fn propagate(&mut self, model: &LinearDynamics, rng: &mut ChaCha8Rng) {
        let chol = lower_cholesky(model.noise());
        for x in &mut self.targets {
            let w = correlated_normal(rng, &chol);
            *x = step_state(model, x, &w);
        }
    }
}

/// `F x + G u + w`.
pub fn step_state(model: &LinearDynamics, x: &DVector<f64>, w: &DVector<f64>) -> DVector<f64> {
    model.mean_step(x) + w
}

#[derive(Debug, Clone, PartialEq)]
pub struct RobotMeasurements {
    pub robot: u32,
    /// Biased relative position of each tracked target, in task order.
    pub targets: Vec<(u32, DVector<f64>)>,
    /// Direct observation of the robot's bias, if the robot has one.
    pub landmark: Option<DVector<f64>>,
}

#[derive(Debug, Clone)]
pub struct SensorModel {
    pub target_cov: DMatrix<f64>,
    pub landmark_cov: DMatrix<f64>,
    pub with_bias: bool,
    target_chol: DMatrix<f64>,
    landmark_chol: DMatrix<f64>,
}

impl SensorModel {
    pub fn new(cfg: &ScenarioConfig) -> Self {
        let target_cov = cov2(&cfg.measurement.target_cov_m2);
        let landmark_cov = cov2(&cfg.measurement.landmark_cov_m2);
        SensorModel {
            target_chol: lower_cholesky(&target_cov),
            landmark_chol: lower_cholesky(&landmark_cov),
            target_cov,
            landmark_cov,
            with_bias: cfg.sensor_bias,
        }
    }

    /// `y = [n, e] + s + v¹` for each tracked target and `m = s + v²`.
    pub fn measure(
        &self,
        truth: &Truth,
        robot: u32,
        task: &[u32],
        rng: &mut ChaCha8Rng,
    ) -> RobotMeasurements {
        let h = position_selector();
        let bias = truth.bias(robot);
        let targets = task
            .iter()
            .map(|&t| {
                let mut y = &h * truth.target(t) + correlated_normal(rng, &self.target_chol);
                if self.with_bias {
                    y += bias;
                }
                (t, y)
            })
            .collect();
        let landmark = self
            .with_bias
            .then(|| bias + correlated_normal(rng, &self.landmark_chol));
        RobotMeasurements {
            robot,
            targets,
            landmark,
        }
    }

    /// Likelihood of one target measurement as a factor over the target (and
    /// the robot's bias, if any): `Λ = HᵀR⁻¹H`, `ζ = HᵀR⁻¹y`.
    pub fn target_factor(
        &self,
        target: VariableKey,
        bias: Option<VariableKey>,
        y: &DVector<f64>,
    ) -> Result<CanonicalGaussian> {
        let sel = position_selector();
        let (vars, h) = match bias {
            Some(b) => {
                let mut h = DMatrix::zeros(2, TARGET_DIM + BIAS_DIM);
                h.view_mut((0, 0), (2, TARGET_DIM)).copy_from(&sel);
                h.view_mut((0, TARGET_DIM), (2, BIAS_DIM))
                    .copy_from(&DMatrix::identity(2, 2));
                (vec![target, b], h)
            }
            None => (vec![target], sel),
        };
        linear_factor(vars, &h, &self.target_cov, y)
    }

    pub fn landmark_factor(&self, bias: VariableKey, m: &DVector<f64>) -> Result<CanonicalGaussian> {
        linear_factor(vec![bias], &DMatrix::identity(2, 2), &self.landmark_cov, m)
    }
}

/// Canonical likelihood of `y = H x + v`, `v ~ 𝒩(0, R)`, over `vars` stacked in the given order.
pub fn linear_factor(
    vars: Vec<VariableKey>,
    h: &DMatrix<f64>,
    r: &DMatrix<f64>,
    y: &DVector<f64>,
) -> Result<CanonicalGaussian> {
    let r_inv = r.clone().cholesky().expect("measurement covariance is positive definite").inverse();
    let ht_ri = h.transpose() * r_inv;
    CanonicalGaussian::new(vars, &ht_ri * y, &ht_ri * h)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dvector;

    #[test]
    fn zero_noise_propagation() {
        let model = LinearDynamics::constant_velocity(0.1, 0.08).unwrap();
        let x = dvector![0.0, 1.0, 0.0, 1.0];
        let next = step_state(&model, &x, &DVector::zeros(4));
        assert!((next - dvector![0.1, 1.0, 0.1, 1.0]).amax() < 1e-15);
    }

    #[test]
    fn measurement_factor_information() {
        let cfg = ScenarioConfig::four_robot_chain();
        let sensor = SensorModel::new(&cfg);
        let t = VariableKey::target(1, 0, 4);
        let b = VariableKey::bias(1, 2);
        let f = sensor.target_factor(t, Some(b), &dvector![3.0, 4.0]).unwrap();
        let info = f.info_matrix();
        assert_eq!(info[(0, 0)], 1.0);
        assert_eq!(info[(0, 4)], 1.0);
        assert_eq!(info[(2, 5)], 1.0);
        assert_eq!(info[(1, 1)], 0.0);
        assert_eq!(f.info_vector(), &dvector![3.0, 0.0, 4.0, 0.0, 3.0, 4.0]);
    }
}
