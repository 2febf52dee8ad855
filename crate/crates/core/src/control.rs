//! Comparison controllers: proportional control through the estimated
//! Jacobian, model-free adaptive control and the closed-form predictive
//! update.

use nalgebra::{SMatrix, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::ftsm::pinv;
use crate::{Jac, Vec6};

type Mat6 = SMatrix<f64, 6, 6>;

const PINV_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PidParams {
    pub k: f64,
    pub n2: f64,
    pub n3: f64,
}

impl Default for PidParams {
    fn default() -> Self {
        Self { k: 2.0, n2: 0.5, n3: 0.5 }
    }
}

impl PidParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.k > 0.0 && self.k.is_finite()) {
            return invalid("pid gain k must be positive");
        }
        if !(self.n2 >= 0.0 && self.n3 >= 0.0) {
            return invalid("pid update gains must be >= 0");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MfacParams {
    pub lambda: f64,
}

impl Default for MfacParams {
    fn default() -> Self {
        Self { lambda: 1.0 }
    }
}

impl MfacParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return invalid("mfac lambda must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MpcParams {
    pub horizon: u32,
    pub alpha_star: f64,
    pub rho: f64,
    /// Row-major 6×6 weight.
    pub q: [[f64; 6]; 6],
}

impl Default for MpcParams {
    fn default() -> Self {
        let mut q = [[0.0; 6]; 6];
        for (i, row) in q.iter_mut().enumerate() {
            row[i] = 0.01;
        }
        Self { horizon: 5, alpha_star: 0.9, rho: 0.1, q }
    }
}

impl MpcParams {
    pub fn q_matrix(&self) -> Mat6 {
        Mat6::from_fn(|i, j| self.q[i][j])
    }

    pub fn validate(&self) -> Result<()> {
        if self.horizon < 1 {
            return invalid("mpc horizon must be >= 1");
        }
        if !(self.alpha_star > 0.0 && self.alpha_star <= 1.0) {
            return invalid("mpc alpha_star must lie in (0, 1]");
        }
        if !(self.rho > 0.0 && self.rho.is_finite()) {
            return invalid("mpc rho must be positive");
        }
        let q = self.q_matrix();
        if (q - q.transpose()).abs().max() > 1e-12 || q.cholesky().is_none() {
            return invalid("mpc Q must be symmetric positive definite");
        }
        Ok(())
    }
}

/// `ṙ = −k Ĵ⁺ Δx`.
pub fn pid_control(j_hat: &Jac, dx: &Vector3<f64>, p: &PidParams) -> Vec6 {
    -p.k * (pinv(j_hat, PINV_TOL) * dx)
}

/// `r = r_prev + (λE + ĴᵀĴ)⁻¹ Ĵᵀ e_prev` with `e = x_desired − x`.
pub fn mfac_control(r_prev: &Vec6, j_hat: &Jac, e_prev: &Vector3<f64>, p: &MfacParams) -> Vec6 {
    let m = Mat6::identity() * p.lambda + j_hat.transpose() * j_hat;
    let rhs = j_hat.transpose() * e_prev;
    let step = m.cholesky().map(|ch| ch.solve(&rhs)).unwrap_or_else(Vec6::zeros);
    r_prev + step
}

const SERIES_BAND: f64 = 1e-4;

/// `H² Σ_m (m+1)/(m+2)! u^m` with `u = H ln q`: the expansion of `b` about q = 1.
fn b_series(h: f64, l: f64) -> f64 {
    let u = h * l;
    let mut sum = 0.0;
    let mut pow = 1.0;
    let mut fact = 2.0;
    for m in 0..12 {
        sum += (m as f64 + 1.0) / fact * pow;
        pow *= u;
        fact *= m as f64 + 3.0;
    }
    h * h * sum
}

/// `H³ Σ_{m≥1} u^{m−1} [1/m! − 2(m+1)/(m+2)!]`: the expansion of `a` about q = 1.
fn a_series(h: f64, l: f64) -> f64 {
    let u = h * l;
    let mut sum = 0.0;
    let mut pow = 1.0;
    let mut fm = 1.0;
    let mut fm2 = 6.0;
    for m in 1..13 {
        sum += pow * (1.0 / fm - 2.0 * (m as f64 + 1.0) / fm2);
        pow *= u;
        fm *= m as f64 + 1.0;
        fm2 *= m as f64 + 3.0;
    }
    h * h * h * sum
}

/// `(H q^H ln q − q^H + 1) / ln² q`, the form shared by `b` (q = α*) and
/// `c` (q = α*β).
fn horizon_b(h: f64, q: f64) -> f64 {
    let l = q.ln();
    if l.abs() < SERIES_BAND {
        b_series(h, l)
    } else {
        let qh = q.powf(h);
        (h * qh * l - qh + 1.0) / (l * l)
    }
}

/// `a = (H² α*^H − 2b) / ln α*`.
fn horizon_a(h: f64, q: f64, b: f64) -> f64 {
    let l = q.ln();
    if l.abs() < SERIES_BAND {
        a_series(h, l)
    } else {
        (h * h * q.powf(h) - 2.0 * b) / l
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MpcCoefficients {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

/// Scalars of the predictive update; near `α* = 1` the series limit is used.
pub fn mpc_coefficients(p: &MpcParams) -> MpcCoefficients {
    let h = p.horizon as f64;
    let b = horizon_b(h, p.alpha_star);
    let a = horizon_a(h, p.alpha_star, b);
    let c = horizon_b(h, p.alpha_star * (-p.rho).exp());
    MpcCoefficients { a, b, c }
}

/// `r = r_prev + (a Ĵ + (Ĵᵀ)⁺ Q)⁺ (b − c) e` with `e = x_desired − x`.
pub fn mpc_control(r_prev: &Vec6, j_hat: &Jac, e_k: &Vector3<f64>, p: &MpcParams) -> Vec6 {
    let co = mpc_coefficients(p);
    let jt_pinv: Jac = pinv_6x3(&j_hat.transpose());
    let m: Jac = j_hat * co.a + jt_pinv * p.q_matrix();
    r_prev + pinv(&m, PINV_TOL) * ((co.b - co.c) * e_k)
}

fn pinv_6x3(m: &SMatrix<f64, 6, 3>) -> Jac {
    let svd = m.svd(true, true);
    let smax = svd.singular_values.max();
    if !(smax > 0.0) {
        return Jac::zeros();
    }
    svd.pseudo_inverse(PINV_TOL * smax).unwrap_or_else(|_| Jac::zeros())
}
