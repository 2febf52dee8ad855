//! Estimation-quality metrics and oscillation statistics.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::{Jac, Vec6};

/// One-step prediction error `‖Δs − Ĵ Δr‖`.
pub fn metric_t1(ds: &Vector3<f64>, j_hat: &Jac, dr: &Vec6) -> f64 {
    (ds - j_hat * dr).norm()
}

/// Running T1/T2 accumulator. `s_hat` integrates `Ĵ_k Δr_k` from the first
/// observed feature, so T2 is the accumulated drift of the estimated model.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricSeries {
    pub t1: Vec<f64>,
    pub t2: Vec<f64>,
    pub s_hat: Vector3<f64>,
    s_prev: Vector3<f64>,
}

impl MetricSeries {
    /// Starts with `T1 = T2 = 0` at the initial feature `s0`.
    pub fn new(s0: Vector3<f64>) -> Self {
        Self { t1: vec![0.0], t2: vec![0.0], s_hat: s0, s_prev: s0 }
    }

    /// Records the transition to `s_k` under the a-priori estimate `j_hat`.
    pub fn record(&mut self, s_k: &Vector3<f64>, j_hat: &Jac, dr: &Vec6) -> (f64, f64) {
        let t1 = metric_t1(&(s_k - self.s_prev), j_hat, dr);
        let t2 = metric_t2(&mut self.s_hat, s_k, j_hat, dr);
        self.s_prev = *s_k;
        self.t1.push(t1);
        self.t2.push(t2);
        (t1, t2)
    }
}

/// Advances `ŝ ← ŝ + Ĵ Δr` and returns `‖s_k − ŝ‖`.
pub fn metric_t2(s_hat: &mut Vector3<f64>, s_k: &Vector3<f64>, j_hat: &Jac, dr: &Vec6) -> f64 {
    *s_hat += j_hat * dr;
    (s_k - *s_hat).norm()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Oscillation {
    /// Sign changes summed over axes, counted after each axis's first zero
    /// crossing.
    pub sign_changes: usize,
    /// Largest |Δx_j| after that axis's first zero crossing.
    pub amplitude: f64,
}

/// Chatter statistics of an error history.
pub fn oscillation(dx: &[Vector3<f64>]) -> Oscillation {
    let mut out = Oscillation { sign_changes: 0, amplitude: 0.0 };
    for j in 0..3 {
        let mut crossed = false;
        let mut last_sign = 0.0;
        for e in dx {
            let sg = if e[j] > 0.0 {
                1.0
            } else if e[j] < 0.0 {
                -1.0
            } else {
                0.0
            };
            if sg != 0.0 && last_sign != 0.0 && sg != last_sign {
                if crossed {
                    out.sign_changes += 1;
                }
                crossed = true;
            }
            if crossed {
                out.amplitude = out.amplitude.max(e[j].abs());
            }
            if sg != 0.0 {
                last_sign = sg;
            }
        }
    }
    out
}

/// First time at which `max_j |Δx_j| ≤ level`, linearly interpolated
/// between the bracketing samples.
pub fn first_time_below(t: &[f64], dx: &[Vector3<f64>], level: f64) -> Option<f64> {
    let k = dx.iter().position(|e| e.amax() <= level)?;
    if k == 0 {
        return Some(t[0]);
    }
    let (m0, m1) = (dx[k - 1].amax(), dx[k].amax());
    let frac = if m0 > m1 { (m0 - level) / (m0 - m1) } else { 1.0 };
    Some(t[k - 1] + frac * (t[k] - t[k - 1]))
}

pub fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    v.iter().sum::<f64>() / v.len() as f64
}

pub fn median(v: &[f64]) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}
