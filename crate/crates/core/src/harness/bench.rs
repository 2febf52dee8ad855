//! Open-loop estimator benchmark on a preset joint trajectory.

use std::f64::consts::TAU;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::estimators::{lkf_update, rls_update, ukf_update, BaselineConfig, LinearKfState, RlsState, UkfState};
use crate::harness::metrics::{mean, MetricSeries};
use crate::rbf::{feature_velocity_error, ProposedGains, RbfJacobianEstimator};
use crate::sim::World;
use crate::{Jac, Vec6};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BenchUpdate {
    /// Drive the weights by the velocity error only.
    #[default]
    ZeroS,
    /// Decay only; the velocity error term is dropped.
    ZeroE,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BenchConfig {
    pub steps: usize,
    pub dt: f64,
    /// Sinusoid amplitude as a fraction of each joint's half range.
    pub amplitude: f64,
    pub freqs: [f64; 6],
    pub phases: [f64; 6],
    pub n1: f64,
    pub alpha2: f64,
    pub k3: f64,
    pub update: BenchUpdate,
    pub baseline: BaselineConfig,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            steps: 500,
            dt: 0.02,
            amplitude: 0.6,
            freqs: [0.07, 0.11, 0.05, 0.13, 0.09, 0.1],
            phases: [0.0, 1.0, 2.0, 3.0, 4.0, 5.0],
            n1: 20.0,
            alpha2: 0.5,
            k3: 0.01,
            update: BenchUpdate::ZeroS,
            baseline: BaselineConfig::default(),
        }
    }
}

impl BenchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.steps < 2 {
            return invalid("bench needs at least 2 steps");
        }
        if !(self.dt > 0.0) {
            return invalid("bench dt must be positive");
        }
        if !(self.amplitude >= 0.0 && self.amplitude <= 1.0) {
            return invalid("bench amplitude must lie in [0, 1]");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorSeries {
    pub name: String,
    pub t1: Vec<f64>,
    pub t2: Vec<f64>,
    /// Step at which the estimate stopped being finite; the series end there.
    pub diverged_at: Option<usize>,
}

impl EstimatorSeries {
    pub fn final_t2(&self) -> f64 {
        self.t2.last().copied().unwrap_or(f64::NAN)
    }

    /// Mean T1 over steps 1..=n.
    pub fn early_t1(&self, n: usize) -> f64 {
        let end = (n + 1).min(self.t1.len());
        mean(&self.t1[1.min(end)..end])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRecord {
    pub t: Vec<f64>,
    pub series: Vec<EstimatorSeries>,
    pub config: BenchConfig,
}

impl BenchRecord {
    pub fn get(&self, name: &str) -> Option<&EstimatorSeries> {
        self.series.iter().find(|s| s.name == name)
    }
}

/// `r(t) = home + A·half_range·sin(2π f t + φ)` and its features.
pub fn preset_trajectory(world: &World, cfg: &BenchConfig) -> (Vec<Vec6>, Vec<Vector3<f64>>) {
    let half = (world.model.upper() - world.model.lower()) / 2.0;
    let rs: Vec<Vec6> = (0..cfg.steps)
        .map(|k| {
            let t = k as f64 * cfg.dt;
            let r = Vec6::from_fn(|i, _| {
                world.home[i] + cfg.amplitude * half[i] * (TAU * cfg.freqs[i] * t + cfg.phases[i]).sin()
            });
            world.model.clamp(&r)
        })
        .collect();
    let xs = rs.iter().map(|r| world.features(r)).collect();
    (rs, xs)
}

pub fn run_estimator_bench(world: &World, rbf: &RbfJacobianEstimator, cfg: &BenchConfig) -> Result<BenchRecord> {
    cfg.validate()?;
    let (rs, xs) = preset_trajectory(world, cfg);
    bench_on_trajectory(&rs, &xs, rbf, cfg)
}

enum Tracked {
    Rbf(RbfJacobianEstimator),
    Lkf(LinearKfState),
    Ukf(UkfState),
    Rls(RlsState),
}

impl Tracked {
    fn j_hat(&self, r: &Vec6) -> Jac {
        match self {
            Tracked::Rbf(n) => n.estimate_jacobian(r),
            Tracked::Lkf(s) => s.j_hat(),
            Tracked::Ukf(s) => s.j_hat(),
            Tracked::Rls(s) => s.j_hat(),
        }
    }
}

/// Feeds the same trajectory to the RBF estimator and the three baselines.
/// T1/T2 use each estimator's a-priori Jacobian for every transition. The
/// baselines start from Ĵ = 0.
pub fn bench_on_trajectory(
    rs: &[Vec6],
    xs: &[Vector3<f64>],
    rbf: &RbfJacobianEstimator,
    cfg: &BenchConfig,
) -> Result<BenchRecord> {
    if rs.len() != xs.len() || rs.len() < 2 {
        return invalid("bench trajectory needs matching poses and features, at least 2");
    }
    let dt = cfg.dt;
    let zero = Jac::zeros();
    let mut tracked = [
        ("rbf", Tracked::Rbf(rbf.clone())),
        ("lkf", Tracked::Lkf(LinearKfState::new(&zero, &cfg.baseline)?)),
        ("ukf", Tracked::Ukf(UkfState::new(&zero, &cfg.baseline)?)),
        ("rls", Tracked::Rls(RlsState::new(&zero, &cfg.baseline)?)),
    ];
    let gains = match cfg.update {
        BenchUpdate::ZeroS => ProposedGains { n1: cfg.n1, alpha2: cfg.alpha2, k3: cfg.k3 },
        BenchUpdate::ZeroE => ProposedGains { n1: 0.0, alpha2: cfg.alpha2, k3: cfg.k3 },
    };
    let mut series = Vec::new();
    for (name, est) in tracked.iter_mut() {
        let mut m = MetricSeries::new(xs[0]);
        let mut diverged_at = None;
        for k in 1..rs.len() {
            let dr = rs[k] - rs[k - 1];
            let dx = xs[k] - xs[k - 1];
            let j_prior = est.j_hat(&rs[k - 1]);
            if j_prior.iter().any(|v| !v.is_finite()) {
                diverged_at = Some(k);
                break;
            }
            m.record(&xs[k], &j_prior, &dr);
            let ok = match est {
                Tracked::Rbf(net) => {
                    let r_dot = dr / dt;
                    let e = feature_velocity_error(&(dx / dt), &j_prior, &r_dot);
                    let s = match cfg.update {
                        BenchUpdate::ZeroS => Vector3::zeros(),
                        BenchUpdate::ZeroE => xs[k] - xs[0],
                    };
                    net.online_update_proposed(&rs[k - 1], &r_dot, &e, &s, gains, dt);
                    true
                }
                Tracked::Lkf(s) => lkf_update(s, &dr, &dx).is_ok(),
                Tracked::Ukf(s) => ukf_update(s, &dr, &dx).is_ok(),
                Tracked::Rls(s) => rls_update(s, &dr, &dx).is_ok(),
            };
            if !ok {
                diverged_at = Some(k);
                break;
            }
        }
        series.push(EstimatorSeries { name: name.to_string(), t1: m.t1, t2: m.t2, diverged_at });
    }
    Ok(BenchRecord {
        t: (0..rs.len()).map(|k| k as f64 * dt).collect(),
        series,
        config: cfg.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rbf::RbfColumnNet;
    use nalgebra::{DMatrix, DVector, Matrix3xX};

    fn flat_estimator(j: &Jac) -> RbfJacobianEstimator {
        // one very wide neuron per column: θ ≈ 1 everywhere
        let nets = (0..6)
            .map(|i| {
                RbfColumnNet::new(
                    DMatrix::zeros(1, 6),
                    DVector::from_element(1, 1e6),
                    Matrix3xX::from_column_slice(j.column(i).as_slice()),
                )
                .unwrap()
            })
            .collect();
        RbfJacobianEstimator::new(nets).unwrap()
    }

    #[test]
    fn preset_stays_in_limits() {
        let w = World::ur5();
        let (rs, xs) = preset_trajectory(&w, &BenchConfig::default());
        assert_eq!(rs.len(), 500);
        assert_eq!(xs.len(), 500);
        assert!(rs.iter().all(|r| w.model.within_limits(r)));
    }

    #[test]
    fn exact_linear_model_has_tiny_errors() {
        let a = Jac::from_fn(|i, k| ((i * 6 + k) as f64 * 0.37).sin());
        let cfg = BenchConfig { k3: 0.0, ..BenchConfig::default() };
        let rs: Vec<Vec6> = (0..200).map(|k| Vec6::from_fn(|i, _| (0.002 * k as f64 + i as f64).sin())).collect();
        let xs: Vec<Vector3<f64>> = rs.iter().map(|r| a * r).collect();
        let rec = bench_on_trajectory(&rs, &xs, &flat_estimator(&a), &cfg).unwrap();
        let rbf = rec.get("rbf").unwrap();
        let worst = rbf.t1.iter().cloned().fold(0.0, f64::max);
        assert!(worst < 1e-9, "{worst} {:?}", &rbf.t1[..5]);
        assert!(rbf.final_t2() < 1e-8);
        for name in ["lkf", "ukf", "rls"] {
            let s = rec.get(name).unwrap();
            assert_eq!(s.t1.len(), 200);
            assert!(s.diverged_at.is_none());
        }
    }

    #[test]
    fn mismatched_inputs_are_rejected() {
        let est = flat_estimator(&Jac::zeros());
        assert!(bench_on_trajectory(&[Vec6::zeros()], &[Vector3::zeros()], &est, &BenchConfig::default()).is_err());
    }
}
