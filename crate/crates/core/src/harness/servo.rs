//! Closed-loop servo runs.

use std::time::Instant;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::control::{mfac_control, mpc_control, pid_control};
use crate::error::{invalid, Result};
use crate::estimators::{lkf_update, rls_update, ukf_update, LinearKfState, RlsState, UkfState};
use crate::ftsm::{
    control_law, lyapunov, predict_convergence, sgpfs_check, sliding_derivative, sliding_surface, Certificate,
    ConvergencePrediction, LyapunovSample,
};
use crate::harness::metrics::MetricSeries;
use crate::harness::spec::{ControllerSpec, EstimatorSpec, ExperimentSpec, InitMode, Resources};
use crate::rbf::{feature_velocity_error, ProposedGains, RbfJacobianEstimator};
use crate::sim::{forward_kinematics, step, JointState, Sensor, SensorConfig, World};
use crate::{Jac, Vec6};

/// One logged control step. Field order matches the exported CSV.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepRow {
    pub t: f64,
    pub r: [f64; 6],
    pub x: [f64; 3],
    pub dx: [f64; 3],
    pub s: [f64; 3],
    pub t1: f64,
    pub t2: f64,
    pub v: f64,
}

impl StepRow {
    pub fn dx(&self) -> Vector3<f64> {
        Vector3::from_column_slice(&self.dx)
    }

    pub fn s(&self) -> Vector3<f64> {
        Vector3::from_column_slice(&self.s)
    }

    pub fn x(&self) -> Vector3<f64> {
        Vector3::from_column_slice(&self.x)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Success,
    Timeout,
    /// A non-finite estimate or command stopped the run.
    Diverged,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RunFlags {
    pub speed_clamped_steps: usize,
    pub limit_clamped_steps: usize,
    /// Position limits were active on more than half of the steps.
    pub workspace_fault: bool,
    /// Baseline updates that needed covariance jitter.
    pub jittered_steps: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JacobianSample {
    pub t: f64,
    /// Row-major 3×6.
    pub j: [[f64; 6]; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMeta {
    pub id: String,
    pub spec: ExperimentSpec,
    pub world: serde_json::Value,
    pub target: [f64; 3],
    pub outcome: Outcome,
    pub flags: RunFlags,
    /// Start of the final stretch inside the success radius.
    pub time_to_success: Option<f64>,
    pub final_error: f64,
    /// Largest commanded joint rate component.
    pub max_command: f64,
    pub certificate: Option<Certificate>,
    /// First time ‖s‖ falls inside the certificate band.
    pub band_entry_time: Option<f64>,
    /// Fraction of steps violating the finite-time inequality.
    pub sgpfs_violation: Option<f64>,
    pub prediction: Option<ConvergencePrediction>,
    pub lyapunov: Vec<LyapunovSample>,
    pub jacobians: Vec<JacobianSample>,
    pub wall_time_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub rows: Vec<StepRow>,
    pub meta: RunMeta,
}

impl RunRecord {
    pub fn times(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.t).collect()
    }

    pub fn errors(&self) -> Vec<Vector3<f64>> {
        self.rows.iter().map(StepRow::dx).collect()
    }
}

/// Jacobian samples are kept every this many steps.
pub const JACOBIAN_STRIDE: usize = 10;

enum Estimator {
    Rbf { net: RbfJacobianEstimator, online: bool },
    Lkf(LinearKfState),
    Ukf(UkfState),
    Rls(RlsState),
    Analytic,
}

impl Estimator {
    fn j_hat(&self, world: &World, r: &Vec6) -> Jac {
        match self {
            Estimator::Rbf { net, .. } => net.estimate_jacobian(r),
            Estimator::Lkf(s) => s.j_hat(),
            Estimator::Ukf(s) => s.j_hat(),
            Estimator::Rls(s) => s.j_hat(),
            Estimator::Analytic => world.jacobian(r),
        }
    }
}

/// Transition data from the previous step.
struct Prev {
    r: Vec6,
    r_dot: Vec6,
    j: Jac,
    x: Vector3<f64>,
}

fn build_estimator(spec: &ExperimentSpec, res: &Resources, r0: &Vec6) -> Result<Estimator> {
    let init = |mode: InitMode| match mode {
        InitMode::Zero => Jac::zeros(),
        InitMode::Analytic => res.world.jacobian(r0),
    };
    Ok(match &spec.estimator {
        EstimatorSpec::Rbf { online, .. } => match &res.rbf {
            Some(net) => Estimator::Rbf { net: net.clone(), online: *online },
            None => return invalid(format!("{}: rbf estimator needs a trained model", spec.id)),
        },
        EstimatorSpec::Lkf(b) => Estimator::Lkf(LinearKfState::new(&init(b.init), &b.config)?),
        EstimatorSpec::Ukf(b) => Estimator::Ukf(UkfState::new(&init(b.init), &b.config)?),
        EstimatorSpec::Rls(b) => Estimator::Rls(RlsState::new(&init(b.init), &b.config)?),
        EstimatorSpec::Analytic => Estimator::Analytic,
    })
}

fn to_rows(j: &Jac) -> [[f64; 6]; 3] {
    std::array::from_fn(|i| std::array::from_fn(|k| j[(i, k)]))
}

/// Runs one experiment to success, timeout or divergence.
///
/// Per step: sense, form Δx and its finite-difference rates, apply the
/// estimator update for the transition just completed, evaluate Ĵ, compute
/// the command, log, then integrate the joints.
pub fn run_servo(spec: &ExperimentSpec, res: &Resources) -> Result<RunRecord> {
    let started = Instant::now();
    let world = &res.world;
    spec.validate(world)?;
    let dt = spec.dt;
    let n = spec.steps();
    let xd = spec.target(world);
    let r0 = spec.r_initial();
    let mut est = build_estimator(spec, res, &r0)?;
    let mut sensor = Sensor::new(SensorConfig {
        noise_std: spec.noise_std * world.feature_scale,
        seed: spec.seed,
        dt,
    })?;
    let mut sense = |r: &Vec6| -> Result<Vector3<f64>> {
        let p = forward_kinematics(&world.model, r)?;
        Ok(sensor.observe(&world.camera, &p).x / world.feature_scale)
    };

    let ftsm = match &spec.controller {
        ControllerSpec::Ftsm(p) => Some(*p),
        _ => None,
    };
    let k4 = ftsm.map_or(1.0, |p| p.k4);
    let monitor_weights = matches!(est, Estimator::Rbf { online: true, .. }) && res.w_ref.is_some();

    let mut state = JointState::at_rest(r0);
    let mut rows = Vec::with_capacity(n + 1);
    let mut lyap = Vec::with_capacity(n + 1);
    let mut jacobians = Vec::new();
    let mut flags = RunFlags::default();
    let mut metrics: Option<MetricSeries> = None;
    let mut prev: Option<Prev> = None;
    let mut dx_prev = Vector3::zeros();
    let mut v_prev = Vector3::zeros();
    let mut streak_start: Option<(usize, f64)> = None;
    let mut outcome = Outcome::Timeout;
    let mut max_command = 0.0f64;
    let mut steps_taken = 0usize;

    for k in 0..=n {
        let t = k as f64 * dt;
        let x = sense(&state.r)?;
        let dx = x - xd;
        let v = if k >= 1 { (dx - dx_prev) / dt } else { Vector3::zeros() };
        let a = if k >= 2 { (v - v_prev) / dt } else { Vector3::zeros() };
        let (s, s_dot) = match &ftsm {
            Some(p) => (sliding_surface(&dx, &v, p), sliding_derivative(&dx, &v, &a, p)),
            None => (dx, v),
        };

        let (mut t1, mut t2) = (0.0, 0.0);
        let mut update_ok = true;
        match (&prev, metrics.as_mut()) {
            (Some(pv), Some(m)) => {
                let dr = state.r - pv.r;
                (t1, t2) = m.record(&x, &pv.j, &dr);
                let jit = match &mut est {
                    Estimator::Rbf { net, online: true } => {
                        let e = feature_velocity_error(&v, &pv.j, &pv.r_dot);
                        match &spec.controller {
                            ControllerSpec::Ftsm(p) => {
                                let g = ProposedGains { n1: p.n1, alpha2: p.alpha2, k3: p.k3 };
                                net.online_update_proposed(&pv.r, &pv.r_dot, &e, &s, g, dt);
                            }
                            ControllerSpec::Pid(p) => net.online_update_pid(&pv.r, &pv.r_dot, &e, &dx, p.n2, p.n3, dt),
                            ControllerSpec::Mfac(_) | ControllerSpec::Mpc(_) => {}
                        }
                        Ok(false)
                    }
                    Estimator::Lkf(st) => lkf_update(st, &dr, &(x - pv.x)).map(|u| u.jittered),
                    Estimator::Ukf(st) => ukf_update(st, &dr, &(x - pv.x)).map(|u| u.jittered),
                    Estimator::Rls(st) => rls_update(st, &dr, &(x - pv.x)).map(|u| u.jittered),
                    _ => Ok(false),
                };
                match jit {
                    Ok(true) => flags.jittered_steps += 1,
                    Ok(false) => {}
                    Err(_) => update_ok = false,
                }
            }
            _ => metrics = Some(MetricSeries::new(x)),
        }

        let j = est.j_hat(world, &state.r);
        let cmd = match &spec.controller {
            ControllerSpec::Ftsm(p) => control_law(&j, &s, &s_dot, &v, p),
            ControllerSpec::Pid(p) => pid_control(&j, &dx, p),
            ControllerSpec::Mfac(p) => (mfac_control(&state.r, &j, &(-dx), p) - state.r) / dt,
            ControllerSpec::Mpc(p) => (mpc_control(&state.r, &j, &(-dx), p) - state.r) / dt,
        };

        let weights = match (&est, &res.w_ref) {
            (Estimator::Rbf { net, .. }, Some(w_ref)) if monitor_weights => Some((w_ref, net)),
            _ => None,
        };
        let ls = lyapunov(&s, weights, k4, t)?;
        rows.push(StepRow {
            t,
            r: state.r.into(),
            x: x.into(),
            dx: dx.into(),
            s: s.into(),
            t1,
            t2,
            v: ls.v,
        });
        lyap.push(ls);
        if k % JACOBIAN_STRIDE == 0 {
            jacobians.push(JacobianSample { t, j: to_rows(&j) });
        }

        let finite = update_ok && j.iter().all(|v| v.is_finite()) && cmd.iter().all(|v| v.is_finite());
        if !finite {
            outcome = Outcome::Diverged;
            break;
        }

        if dx.norm() <= spec.success_radius {
            let start = streak_start.get_or_insert((k, t));
            if k + 1 - start.0 >= spec.hold_steps {
                outcome = Outcome::Success;
                break;
            }
        } else {
            streak_start = None;
        }
        if k == n {
            break;
        }

        max_command = max_command.max(cmd.amax());
        let out = step(&state, &cmd, &world.model, dt);
        steps_taken += 1;
        flags.speed_clamped_steps += out.speed_clamped as usize;
        flags.limit_clamped_steps += out.limit_clamped as usize;
        prev = Some(Prev { r: state.r, r_dot: out.state.r_dot, j, x });
        state = out.state;
        dx_prev = dx;
        v_prev = v;
    }
    flags.workspace_fault = steps_taken > 0 && 2 * flags.limit_clamped_steps > steps_taken;

    let certificate = ftsm.map(|p| match (monitor_weights, &res.w_ref) {
        (true, Some(w_ref)) => Certificate::from_reference(&p, w_ref),
        _ => Certificate::from_band(&p, p.alpha2 * spec.success_radius),
    });
    let mut band_entry_time = None;
    let mut sgpfs_violation = None;
    let mut prediction = None;
    if let (Some(c), Some(p)) = (certificate, ftsm) {
        let band = c.band();
        band_entry_time = rows.iter().find(|r| r.s().norm() <= band).map(|r| r.t);
        if lyap.len() >= 3 {
            sgpfs_violation = Some(sgpfs_check(&lyap, c.k, c.sigma, c.delta, 0.0)?);
        }
        let t_s = c.reach_time(lyap[0].v);
        let idx = ((t_s / dt).round() as usize).min(rows.len() - 1);
        prediction = Some(predict_convergence(t_s, &rows[idx].dx(), &p));
    }

    let last = rows.last().expect("at least one step is logged");
    let meta = RunMeta {
        id: spec.id.clone(),
        spec: spec.clone(),
        world: world.to_json_value(),
        target: xd.into(),
        outcome,
        flags,
        time_to_success: (outcome == Outcome::Success).then(|| streak_start.map(|s| s.1)).flatten(),
        final_error: last.dx().norm(),
        max_command,
        certificate,
        band_entry_time,
        sgpfs_violation,
        prediction,
        lyapunov: lyap,
        jacobians,
        wall_time_s: started.elapsed().as_secs_f64(),
    };
    Ok(RunRecord { rows, meta })
}
