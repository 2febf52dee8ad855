//! Baseline Jacobian estimators: linear Kalman filter, unscented Kalman
//! filter and per-row recursive least squares.
//!
//! The Kalman variants track the row-major stack `j_vec` of Ĵ under identity
//! dynamics with the measurement `Δx = (I₃ ⊗ Δrᵀ) j_vec + v`.

use nalgebra::{Matrix3, SMatrix, SVector, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::{Jac, Vec6};

pub type Vec18 = SVector<f64, 18>;
pub type Mat18 = SMatrix<f64, 18, 18>;
type Mat3x18 = SMatrix<f64, 3, 18>;
type Mat18x3 = SMatrix<f64, 18, 3>;

const JITTER: f64 = 1e-9;

pub fn stack(j: &Jac) -> Vec18 {
    Vec18::from_fn(|k, _| j[(k / 6, k % 6)])
}

pub fn unstack(v: &Vec18) -> Jac {
    Jac::from_fn(|r, c| v[r * 6 + c])
}

fn measurement_matrix(dr: &Vec6) -> Mat3x18 {
    let mut h = Mat3x18::zeros();
    for r in 0..3 {
        for c in 0..6 {
            h[(r, r * 6 + c)] = dr[c];
        }
    }
    h
}

fn symmetrize<const N: usize>(p: &mut SMatrix<f64, N, N>) {
    *p = (*p + p.transpose()) * 0.5;
}

fn check_finite(dr: &Vec6, dx: &Vector3<f64>) -> Result<()> {
    if dr.iter().chain(dx.iter()).all(|v| v.is_finite()) {
        Ok(())
    } else {
        invalid("estimator increments must be finite")
    }
}

/// Shared noise and prior settings for the baselines.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BaselineConfig {
    /// Process noise Q = q·I.
    pub q: f64,
    /// Measurement noise R = r·I.
    pub r: f64,
    /// Kalman prior P0 = p0·I.
    pub p0: f64,
    /// RLS prior P0 = rls_p0·I.
    pub rls_p0: f64,
    pub mu: f64,
    pub alpha: f64,
    pub beta: f64,
    pub kappa: f64,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        Self { q: 1e-6, r: 1e-4, p0: 1.0, rls_p0: 1e4, mu: 0.98, alpha: 1.0, beta: 2.0, kappa: 0.0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Update {
    pub j_hat: Jac,
    /// Set when the innovation covariance needed jitter to factor.
    pub jittered: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearKfState {
    pub j_vec: Vec18,
    pub p: Mat18,
    pub q: Mat18,
    pub r: Matrix3<f64>,
}

impl LinearKfState {
    pub fn new(j0: &Jac, cfg: &BaselineConfig) -> Result<Self> {
        if !(cfg.q >= 0.0 && cfg.r > 0.0 && cfg.p0 > 0.0) {
            return invalid("Kalman settings need q >= 0, r > 0, p0 > 0");
        }
        Ok(Self {
            j_vec: stack(j0),
            p: Mat18::identity() * cfg.p0,
            q: Mat18::identity() * cfg.q,
            r: Matrix3::identity() * cfg.r,
        })
    }

    pub fn j_hat(&self) -> Jac {
        unstack(&self.j_vec)
    }
}

fn spd_inverse3(s: &Matrix3<f64>) -> Result<(Matrix3<f64>, bool)> {
    if let Some(ch) = s.cholesky() {
        return Ok((ch.inverse(), false));
    }
    let damped = s + Matrix3::identity() * JITTER;
    damped
        .cholesky()
        .map(|ch| (ch.inverse(), true))
        .ok_or_else(|| Error::Numerical("innovation covariance is not positive definite".into()))
}

pub fn lkf_update(state: &mut LinearKfState, dr: &Vec6, dx: &Vector3<f64>) -> Result<Update> {
    check_finite(dr, dx)?;
    state.p += state.q;
    let h = measurement_matrix(dr);
    let s = h * state.p * h.transpose() + state.r;
    let (s_inv, jittered) = spd_inverse3(&s)?;
    let k: Mat18x3 = state.p * h.transpose() * s_inv;
    let innov = dx - h * state.j_vec;
    state.j_vec += k * innov;
    let ikh = Mat18::identity() - k * h;
    state.p = ikh * state.p * ikh.transpose() + k * state.r * k.transpose();
    symmetrize(&mut state.p);
    Ok(Update { j_hat: state.j_hat(), jittered })
}

#[derive(Debug, Clone, PartialEq)]
pub struct UkfState {
    pub j_vec: Vec18,
    pub p: Mat18,
    pub q: Mat18,
    pub r: Matrix3<f64>,
    pub alpha: f64,
    pub beta: f64,
    pub kappa: f64,
}

impl UkfState {
    pub fn new(j0: &Jac, cfg: &BaselineConfig) -> Result<Self> {
        if !(cfg.alpha > 0.0 && cfg.alpha <= 1.0) {
            return invalid("UKF alpha must lie in (0, 1]");
        }
        let kf = LinearKfState::new(j0, cfg)?;
        if !(18.0 + cfg.kappa > 0.0) {
            return invalid("UKF kappa must satisfy n + kappa > 0");
        }
        Ok(Self { j_vec: kf.j_vec, p: kf.p, q: kf.q, r: kf.r, alpha: cfg.alpha, beta: cfg.beta, kappa: cfg.kappa })
    }

    pub fn j_hat(&self) -> Jac {
        unstack(&self.j_vec)
    }
}

fn sqrt_factor(p: &Mat18, scale: f64) -> Result<Mat18> {
    let m = p * scale;
    if let Some(ch) = m.cholesky() {
        return Ok(ch.l());
    }
    (m + Mat18::identity() * JITTER)
        .cholesky()
        .map(|ch| ch.l())
        .ok_or_else(|| Error::Numerical("UKF covariance square root failed after jitter".into()))
}

pub fn ukf_update(state: &mut UkfState, dr: &Vec6, dx: &Vector3<f64>) -> Result<Update> {
    check_finite(dr, dx)?;
    const N: usize = 18;
    let n = N as f64;
    let lambda = state.alpha * state.alpha * (n + state.kappa) - n;
    let wm0 = lambda / (n + lambda);
    let wc0 = wm0 + 1.0 - state.alpha * state.alpha + state.beta;
    let wi = 1.0 / (2.0 * (n + lambda));

    state.p += state.q;
    let l = sqrt_factor(&state.p, n + lambda)?;
    let mut sigma = Vec::with_capacity(2 * N + 1);
    sigma.push(state.j_vec);
    for i in 0..N {
        sigma.push(state.j_vec + l.column(i));
    }
    for i in 0..N {
        sigma.push(state.j_vec - l.column(i));
    }
    let h = measurement_matrix(dr);
    let ys: Vec<Vector3<f64>> = sigma.iter().map(|x| h * x).collect();
    let weight_m = |k: usize| if k == 0 { wm0 } else { wi };
    let weight_c = |k: usize| if k == 0 { wc0 } else { wi };

    let x_mean = sigma.iter().enumerate().fold(Vec18::zeros(), |acc, (k, x)| acc + x * weight_m(k));
    let y_mean = ys.iter().enumerate().fold(Vector3::zeros(), |acc, (k, y)| acc + y * weight_m(k));
    let mut pyy = state.r;
    let mut pxy = Mat18x3::zeros();
    for k in 0..sigma.len() {
        let dy = ys[k] - y_mean;
        pyy += dy * dy.transpose() * weight_c(k);
        pxy += (sigma[k] - x_mean) * dy.transpose() * weight_c(k);
    }
    let (pyy_inv, jittered) = spd_inverse3(&pyy)?;
    let k = pxy * pyy_inv;
    state.j_vec = x_mean + k * (dx - y_mean);
    state.p -= k * pyy * k.transpose();
    symmetrize(&mut state.p);
    Ok(Update { j_hat: state.j_hat(), jittered })
}

#[derive(Debug, Clone, PartialEq)]
pub struct RlsState {
    pub theta: [Vec6; 3],
    pub p: [SMatrix<f64, 6, 6>; 3],
    pub mu: f64,
}

impl RlsState {
    pub fn new(j0: &Jac, cfg: &BaselineConfig) -> Result<Self> {
        if !(cfg.mu > 0.0 && cfg.mu <= 1.0) {
            return invalid("RLS forgetting factor must lie in (0, 1]");
        }
        if !(cfg.rls_p0 > 0.0) {
            return invalid("RLS prior must be positive");
        }
        Ok(Self {
            theta: std::array::from_fn(|r| j0.row(r).transpose()),
            p: [SMatrix::<f64, 6, 6>::identity() * cfg.rls_p0; 3],
            mu: cfg.mu,
        })
    }

    pub fn j_hat(&self) -> Jac {
        Jac::from_fn(|r, c| self.theta[r][c])
    }
}

pub fn rls_update(state: &mut RlsState, dr: &Vec6, dx: &Vector3<f64>) -> Result<Update> {
    check_finite(dr, dx)?;
    let mu = state.mu;
    for row in 0..3 {
        let p = &mut state.p[row];
        let pd = *p * dr;
        let gain = pd / (mu + dr.dot(&pd));
        let err = dx[row] - state.theta[row].dot(dr);
        state.theta[row] += gain * err;
        *p = (*p - gain * (dr.transpose() * *p)) / mu;
        symmetrize(p);
    }
    Ok(Update { j_hat: state.j_hat(), jittered: false })
}
