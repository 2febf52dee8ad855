//! Experiment specifications and the resources they refer to.

use std::path::{Path, PathBuf};

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::control::{MfacParams, MpcParams, PidParams};
use crate::error::{invalid, Error, Result};
use crate::estimators::BaselineConfig;
use crate::ftsm::FtsmParams;
use crate::rbf::RbfJacobianEstimator;
use crate::sim::World;
use crate::Vec6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitMode {
    /// Start from Ĵ = 0.
    #[default]
    Zero,
    /// Start from the true Jacobian at the initial pose.
    Analytic,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct BaselineSpec {
    #[serde(default)]
    pub init: InitMode,
    #[serde(flatten)]
    pub config: BaselineConfig,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EstimatorSpec {
    Rbf {
        /// Trained estimator file, relative to the spec file.
        #[serde(default)]
        model: Option<PathBuf>,
        /// Reference weights for the Lyapunov monitor.
        #[serde(default)]
        reference: Option<PathBuf>,
        #[serde(default = "yes")]
        online: bool,
    },
    Lkf(BaselineSpec),
    Ukf(BaselineSpec),
    Rls(BaselineSpec),
    /// The true Jacobian of the world.
    Analytic,
}

impl EstimatorSpec {
    pub fn name(&self) -> &'static str {
        match self {
            EstimatorSpec::Rbf { .. } => "rbf",
            EstimatorSpec::Lkf(_) => "lkf",
            EstimatorSpec::Ukf(_) => "ukf",
            EstimatorSpec::Rls(_) => "rls",
            EstimatorSpec::Analytic => "analytic",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ControllerSpec {
    Ftsm(FtsmParams),
    Pid(PidParams),
    Mfac(MfacParams),
    Mpc(MpcParams),
}

impl ControllerSpec {
    pub fn name(&self) -> &'static str {
        match self {
            ControllerSpec::Ftsm(_) => "ftsm",
            ControllerSpec::Pid(_) => "pid",
            ControllerSpec::Mfac(_) => "mfac",
            ControllerSpec::Mpc(_) => "mpc",
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            ControllerSpec::Ftsm(p) => p.validate(),
            ControllerSpec::Pid(p) => p.validate(),
            ControllerSpec::Mfac(p) => p.validate(),
            ControllerSpec::Mpc(p) => p.validate(),
        }
    }
}

fn default_dt() -> f64 {
    0.02
}

fn default_radius() -> f64 {
    0.01
}

fn default_hold() -> usize {
    25
}

/// One closed-loop servo experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub id: String,
    /// World config file; the bundled UR5 when absent.
    #[serde(default)]
    pub world: Option<PathBuf>,
    pub estimator: EstimatorSpec,
    pub controller: ControllerSpec,
    pub r_initial: [f64; 6],
    #[serde(default)]
    pub x_desired: Option<[f64; 3]>,
    /// Target given as a joint pose; its feature becomes `x_desired`.
    #[serde(default)]
    pub r_desired: Option<[f64; 6]>,
    #[serde(default = "default_dt")]
    pub dt: f64,
    pub duration: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_radius")]
    pub success_radius: f64,
    /// Consecutive steps inside the radius that end the run.
    #[serde(default = "default_hold")]
    pub hold_steps: usize,
    /// Feature noise standard deviation, in normalized units.
    #[serde(default)]
    pub noise_std: f64,
}

impl ExperimentSpec {
    pub fn from_json_str(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Invalid(format!("experiment spec: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|source| Error::Json { path: path.into(), source })
    }

    pub fn steps(&self) -> usize {
        (self.duration / self.dt).round() as usize
    }

    pub fn r_initial(&self) -> Vec6 {
        Vec6::from_column_slice(&self.r_initial)
    }

    /// Target feature, from `x_desired` or the feature of `r_desired`.
    pub fn target(&self, world: &World) -> Vector3<f64> {
        match (self.x_desired, self.r_desired) {
            (Some(x), _) => Vector3::from_column_slice(&x),
            (None, Some(r)) => world.features(&Vec6::from_column_slice(&r)),
            (None, None) => Vector3::zeros(),
        }
    }

    pub fn validate(&self, world: &World) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return invalid(format!("{}: dt must be positive", self.id));
        }
        if !(self.duration > 0.0 && self.duration.is_finite()) || self.steps() < 10 {
            return invalid(format!("{}: duration must cover at least 10 steps", self.id));
        }
        if !(self.success_radius > 0.0) {
            return invalid(format!("{}: success_radius must be positive", self.id));
        }
        if self.hold_steps == 0 {
            return invalid(format!("{}: hold_steps must be >= 1", self.id));
        }
        if !(self.noise_std >= 0.0 && self.noise_std.is_finite()) {
            return invalid(format!("{}: noise_std must be >= 0", self.id));
        }
        let r0 = self.r_initial();
        if r0.iter().any(|v| !v.is_finite()) || !world.model.within_limits(&r0) {
            return invalid(format!("{}: r_initial must lie inside the joint limits", self.id));
        }
        match (self.x_desired, self.r_desired) {
            (Some(_), Some(_)) | (None, None) => {
                return invalid(format!("{}: give exactly one of x_desired and r_desired", self.id));
            }
            (Some(x), None) if x.iter().any(|v| !v.is_finite()) => {
                return invalid(format!("{}: x_desired must be finite", self.id));
            }
            (None, Some(r)) if !world.model.within_limits(&Vec6::from_column_slice(&r)) => {
                return invalid(format!("{}: r_desired must lie inside the joint limits", self.id));
            }
            _ => {}
        }
        let err0 = (world.features(&r0) - self.target(world)).amax();
        if !(err0 < 1.0) {
            return invalid(format!(
                "{}: initial feature error {err0:.3} leaves the normalized range (must be < 1)",
                self.id
            ));
        }
        self.controller.validate()
    }
}

/// Everything a run needs besides the spec itself.
#[derive(Debug, Clone, PartialEq)]
pub struct Resources {
    pub world: World,
    pub rbf: Option<RbfJacobianEstimator>,
    pub w_ref: Option<RbfJacobianEstimator>,
}

impl Resources {
    pub fn new(world: World) -> Self {
        Self { world, rbf: None, w_ref: None }
    }

    pub fn with_rbf(mut self, est: RbfJacobianEstimator) -> Self {
        self.rbf = Some(est);
        self
    }

    pub fn with_reference(mut self, w_ref: RbfJacobianEstimator) -> Self {
        self.w_ref = Some(w_ref);
        self
    }

    /// Loads the files named by `spec`, resolving relative paths against
    /// `base`. An explicit `model` overrides the spec's model path.
    pub fn load(spec: &ExperimentSpec, base: &Path, model: Option<&Path>) -> Result<Self> {
        let resolve = |p: &Path| if p.is_absolute() { p.to_path_buf() } else { base.join(p) };
        let world = match &spec.world {
            Some(p) => World::load(&resolve(p))?,
            None => World::ur5(),
        };
        let mut res = Self::new(world);
        if let EstimatorSpec::Rbf { model: m, reference, .. } = &spec.estimator {
            let path = match (model, m) {
                (Some(p), _) => p.to_path_buf(),
                (None, Some(p)) => resolve(p),
                (None, None) => return invalid(format!("{}: rbf estimator needs a model file", spec.id)),
            };
            res.rbf = Some(RbfJacobianEstimator::load(&path)?);
            if let Some(r) = reference {
                res.w_ref = Some(RbfJacobianEstimator::load(&resolve(r))?);
            }
        }
        Ok(res)
    }
}
