//! Synthetic eye-to-hand world: a six-joint DH arm, a fixed camera, a noisy
//! point sensor and an Euler joint integrator.

use std::path::Path;

use nalgebra::{Matrix3, Matrix4, Vector3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::{Jac, Vec6};

/// Step used by [`analytic_jacobian`].
pub const JACOBIAN_STEP: f64 = 1e-6;

/// One row of a standard Denavit-Hartenberg table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DhRow {
    pub a: f64,
    pub d: f64,
    pub alpha: f64,
    pub theta_offset: f64,
}

impl DhRow {
    /// Rz(θ) Tz(d) Tx(a) Rx(α).
    fn transform(&self, q: f64) -> Matrix4<f64> {
        let (st, ct) = (q + self.theta_offset).sin_cos();
        let (sa, ca) = self.alpha.sin_cos();
        Matrix4::new(
            ct, -st * ca, st * sa, self.a * ct,
            st, ct * ca, -ct * sa, self.a * st,
            0.0, sa, ca, self.d,
            0.0, 0.0, 0.0, 1.0,
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RobotModel {
    pub dh_rows: [DhRow; 6],
    pub joint_limits: [(f64, f64); 6],
    pub max_joint_speed: f64,
}

impl RobotModel {
    pub fn new(dh_rows: [DhRow; 6], joint_limits: [(f64, f64); 6], max_joint_speed: f64) -> Result<Self> {
        for (i, row) in dh_rows.iter().enumerate() {
            if ![row.a, row.d, row.alpha, row.theta_offset].iter().all(|v| v.is_finite()) {
                return invalid(format!("DH row {i} has non-finite entries"));
            }
        }
        for (i, &(lo, hi)) in joint_limits.iter().enumerate() {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return invalid(format!("joint {i} limits [{lo}, {hi}] are not well ordered"));
            }
        }
        if !(max_joint_speed.is_finite() && max_joint_speed > 0.0) {
            return invalid(format!("max_joint_speed must be positive, got {max_joint_speed}"));
        }
        Ok(Self { dh_rows, joint_limits, max_joint_speed })
    }

    pub fn lower(&self) -> Vec6 {
        Vec6::from_fn(|i, _| self.joint_limits[i].0)
    }

    pub fn upper(&self) -> Vec6 {
        Vec6::from_fn(|i, _| self.joint_limits[i].1)
    }

    pub fn clamp(&self, r: &Vec6) -> Vec6 {
        Vec6::from_fn(|i, _| r[i].clamp(self.joint_limits[i].0, self.joint_limits[i].1))
    }

    pub fn within_limits(&self, r: &Vec6) -> bool {
        (0..6).all(|i| r[i] >= self.joint_limits[i].0 && r[i] <= self.joint_limits[i].1)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct JointState {
    pub r: Vec6,
    pub r_dot: Vec6,
    pub t: f64,
}

impl JointState {
    pub fn at_rest(r: Vec6) -> Self {
        Self { r, r_dot: Vec6::zeros(), t: 0.0 }
    }
}

/// Camera frame expressed in the world frame: `p_world = rotation * x + translation`.
#[derive(Debug, Clone, PartialEq)]
pub struct CameraPose {
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

impl CameraPose {
    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self> {
        let ortho = (rotation.transpose() * rotation - Matrix3::identity()).abs().max();
        if !(ortho <= 1e-10) {
            return invalid(format!("camera rotation is not orthonormal (deviation {ortho:e})"));
        }
        if (rotation.determinant() - 1.0).abs() > 1e-10 {
            return invalid("camera rotation must have determinant +1");
        }
        if !translation.iter().all(|v| v.is_finite()) {
            return invalid("camera translation has non-finite entries");
        }
        Ok(Self { rotation, translation })
    }

    pub fn identity() -> Self {
        Self { rotation: Matrix3::identity(), translation: Vector3::zeros() }
    }
}

/// End-effector position in the camera frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeaturePoint {
    pub x: Vector3<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensorConfig {
    pub noise_std: f64,
    pub seed: u64,
    pub dt: f64,
}

impl Default for SensorConfig {
    fn default() -> Self {
        Self { noise_std: 0.0, seed: 0, dt: 0.02 }
    }
}

/// A feature sensor owning its own seeded noise stream.
#[derive(Debug, Clone)]
pub struct Sensor {
    cfg: SensorConfig,
    rng: ChaCha8Rng,
    normal: Option<Normal<f64>>,
}

impl Sensor {
    pub fn new(cfg: SensorConfig) -> Result<Self> {
        if !(cfg.noise_std >= 0.0 && cfg.noise_std.is_finite()) {
            return invalid(format!("noise_std must be >= 0, got {}", cfg.noise_std));
        }
        if !(cfg.dt > 0.0 && cfg.dt.is_finite()) {
            return invalid(format!("dt must be > 0, got {}", cfg.dt));
        }
        let normal = if cfg.noise_std > 0.0 {
            Some(Normal::new(0.0, cfg.noise_std).map_err(|e| Error::Invalid(e.to_string()))?)
        } else {
            None
        };
        Ok(Self { cfg, rng: ChaCha8Rng::seed_from_u64(cfg.seed), normal })
    }

    pub fn config(&self) -> &SensorConfig {
        &self.cfg
    }

    pub fn observe(&mut self, pose: &CameraPose, p_world: &Vector3<f64>) -> FeaturePoint {
        let mut fp = camera_observe(pose, p_world);
        if let Some(normal) = &self.normal {
            for v in fp.x.iter_mut() {
                *v += normal.sample(&mut self.rng);
            }
        }
        fp
    }
}

pub fn forward_kinematics(model: &RobotModel, r: &Vec6) -> Result<Vector3<f64>> {
    if !r.iter().all(|v| v.is_finite()) {
        return invalid("joint vector has non-finite entries");
    }
    Ok(fk_unchecked(model, r))
}

fn fk_unchecked(model: &RobotModel, r: &Vec6) -> Vector3<f64> {
    let t = model
        .dh_rows
        .iter()
        .zip(r.iter())
        .fold(Matrix4::identity(), |acc, (row, &q)| acc * row.transform(q));
    Vector3::new(t[(0, 3)], t[(1, 3)], t[(2, 3)])
}

/// Noise-free projection into the camera frame.
pub fn camera_observe(pose: &CameraPose, p_world: &Vector3<f64>) -> FeaturePoint {
    FeaturePoint { x: pose.rotation.transpose() * (p_world - pose.translation) }
}

pub fn analytic_jacobian(model: &RobotModel, pose: &CameraPose, r: &Vec6) -> Result<Jac> {
    jacobian_with_step(model, pose, r, JACOBIAN_STEP)
}

/// Central-difference Jacobian of `camera_observe ∘ forward_kinematics`.
pub fn jacobian_with_step(model: &RobotModel, pose: &CameraPose, r: &Vec6, h: f64) -> Result<Jac> {
    if !r.iter().all(|v| v.is_finite()) {
        return invalid("joint vector has non-finite entries");
    }
    if !(h > 0.0) {
        return invalid("difference step must be positive");
    }
    let mut j = Jac::zeros();
    for i in 0..6 {
        let mut hi = *r;
        let mut lo = *r;
        hi[i] += h;
        lo[i] -= h;
        let xp = camera_observe(pose, &fk_unchecked(model, &hi)).x;
        let xm = camera_observe(pose, &fk_unchecked(model, &lo)).x;
        j.set_column(i, &((xp - xm) / (2.0 * h)));
    }
    Ok(j)
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub state: JointState,
    pub speed_clamped: bool,
    pub limit_clamped: bool,
}

/// Euler step with speed and position saturation. The returned `r_dot` is the
/// rate actually realized after both clamps.
pub fn step(state: &JointState, r_dot_cmd: &Vec6, model: &RobotModel, dt: f64) -> StepOutcome {
    let vmax = model.max_joint_speed;
    let mut speed_clamped = false;
    let rd = r_dot_cmd.map(|v| {
        let c = if v.is_nan() { 0.0 } else { v.clamp(-vmax, vmax) };
        speed_clamped |= c != v;
        c
    });
    let raw = state.r + rd * dt;
    let r = model.clamp(&raw);
    let limit_clamped = r != raw;
    let r_dot = if limit_clamped { (r - state.r) / dt } else { rd };
    StepOutcome {
        state: JointState { r, r_dot, t: state.t + dt },
        speed_clamped,
        limit_clamped,
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct CameraJson {
    rotation: [[f64; 3]; 3],
    translation: [f64; 3],
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct WorldJson {
    dh: [[f64; 4]; 6],
    limits: [[f64; 2]; 6],
    #[serde(default = "default_speed")]
    max_joint_speed: f64,
    camera: CameraJson,
    #[serde(default = "default_scale")]
    feature_scale: f64,
    #[serde(default)]
    home: Option<[f64; 6]>,
}

fn default_speed() -> f64 {
    1.5
}

fn default_scale() -> f64 {
    1.0
}

const UR5_JSON: &str = include_str!("../configs/ur5.json");

/// Robot, camera, feature normalization and a nominal home pose.
///
/// Features handed to estimators and controllers are camera-frame
/// coordinates divided by `feature_scale`.
#[derive(Debug, Clone, PartialEq)]
pub struct World {
    pub model: RobotModel,
    pub camera: CameraPose,
    pub feature_scale: f64,
    pub home: Vec6,
}

impl World {
    /// UR5 with the bundled camera placement.
    pub fn ur5() -> Self {
        Self::from_json_str(UR5_JSON).expect("bundled UR5 config is valid")
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let raw: WorldJson = serde_json::from_str(text)
            .map_err(|source| Error::Json { path: "<world config>".into(), source })?;
        Self::from_raw(raw)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let raw: WorldJson =
            serde_json::from_str(&text).map_err(|source| Error::Json { path: path.into(), source })?;
        Self::from_raw(raw)
    }

    fn from_raw(raw: WorldJson) -> Result<Self> {
        let dh_rows = raw.dh.map(|[a, d, alpha, theta_offset]| DhRow { a, d, alpha, theta_offset });
        let limits = raw.limits.map(|[lo, hi]| (lo, hi));
        let model = RobotModel::new(dh_rows, limits, raw.max_joint_speed)?;
        let rotation = Matrix3::from_fn(|i, j| raw.camera.rotation[i][j]);
        let camera = CameraPose::new(rotation, Vector3::from(raw.camera.translation))?;
        if !(raw.feature_scale > 0.0 && raw.feature_scale.is_finite()) {
            return invalid("feature_scale must be positive");
        }
        let home = match raw.home {
            Some(h) => Vec6::from(h),
            None => (model.lower() + model.upper()) / 2.0,
        };
        if !model.within_limits(&home) {
            return invalid("home pose lies outside the joint limits");
        }
        Ok(Self { model, camera, feature_scale: raw.feature_scale, home })
    }

    pub fn to_json_value(&self) -> serde_json::Value {
        let raw = WorldJson {
            dh: self.model.dh_rows.map(|r| [r.a, r.d, r.alpha, r.theta_offset]),
            limits: self.model.joint_limits.map(|(lo, hi)| [lo, hi]),
            max_joint_speed: self.model.max_joint_speed,
            camera: CameraJson {
                rotation: std::array::from_fn(|i| std::array::from_fn(|j| self.camera.rotation[(i, j)])),
                translation: self.camera.translation.into(),
            },
            feature_scale: self.feature_scale,
            home: Some(self.home.into()),
        };
        serde_json::to_value(raw).expect("world config serializes")
    }

    /// Normalized noise-free feature at joint vector `r`.
    pub fn features(&self, r: &Vec6) -> Vector3<f64> {
        camera_observe(&self.camera, &fk_unchecked(&self.model, r)).x / self.feature_scale
    }

    /// Ground-truth Jacobian in normalized feature units.
    pub fn jacobian(&self, r: &Vec6) -> Jac {
        analytic_jacobian(&self.model, &self.camera, r)
            .map(|j| j / self.feature_scale)
            .unwrap_or_else(|_| Jac::from_element(f64::NAN))
    }

    /// Pose `home + frac ∘ half_span`, with `frac` in [-1, 1] per joint.
    pub fn pose_in_box(&self, frac: &Vec6) -> Vec6 {
        let lo = self.model.lower();
        let hi = self.model.upper();
        Vec6::from_fn(|i, _| {
            let f = frac[i].clamp(-1.0, 1.0);
            if f >= 0.0 {
                self.home[i] + f * (hi[i] - self.home[i])
            } else {
                self.home[i] + f * (self.home[i] - lo[i])
            }
        })
    }
}
