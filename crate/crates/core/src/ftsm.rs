//! Adaptive-exponent fast terminal sliding mode control in joint space,
//! together with the Lyapunov monitor and convergence-time predictions.

use nalgebra::{SMatrix, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::rbf::RbfJacobianEstimator;
use crate::{Jac, Vec6};

/// Floor on |Δx_j| inside the singular terms of ṡ.
pub const EPS_SING: f64 = 1e-9;

pub type Pinv = SMatrix<f64, 6, 3>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdaptiveExponent {
    pub lambda1: f64,
    pub lambda2: f64,
    pub lambda3: f64,
    pub delta: f64,
}

impl AdaptiveExponent {
    /// Exponent far from the origin, |Δx_j| ≫ √Δ.
    pub fn far(&self) -> f64 {
        self.lambda1 - self.lambda2
    }

    /// Exponent at the origin.
    pub fn near(&self) -> f64 {
        self.lambda1 - self.lambda2 * (self.lambda3 * -self.delta).tanh()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum ExponentMode {
    Fixed { gamma: [f64; 3] },
    Adaptive(AdaptiveExponent),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FtsmParams {
    pub alpha1: f64,
    pub alpha2: f64,
    pub alpha3: f64,
    pub k1: f64,
    pub k2: f64,
    pub k3: f64,
    pub k4: f64,
    pub sigma: f64,
    pub n1: f64,
    pub exponent: ExponentMode,
    pub varphi: f64,
    pub pinv_tol: f64,
    /// Allows exponents above one.
    pub long_range: bool,
}

impl Default for FtsmParams {
    fn default() -> Self {
        Self {
            alpha1: 0.001,
            alpha2: 0.5,
            alpha3: 0.05,
            k1: 2.0,
            k2: 0.16,
            k3: 0.01,
            k4: 0.3,
            sigma: 0.8,
            n1: 0.5,
            exponent: ExponentMode::Adaptive(AdaptiveExponent {
                lambda1: 0.3,
                lambda2: 0.2,
                lambda3: 100.0,
                delta: 0.01,
            }),
            varphi: 0.5,
            pinv_tol: 1e-6,
            long_range: false,
        }
    }
}

impl FtsmParams {
    pub fn with_fixed_gamma(mut self, gamma: f64) -> Self {
        self.exponent = ExponentMode::Fixed { gamma: [gamma; 3] };
        self
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("alpha1", self.alpha1),
            ("alpha2", self.alpha2),
            ("alpha3", self.alpha3),
            ("k1", self.k1),
            ("k2", self.k2),
            ("k3", self.k3),
            ("k4", self.k4),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return invalid(format!("{name} must be positive, got {v}"));
            }
        }
        if !(self.sigma > 0.0 && self.sigma < 1.0) {
            return invalid("sigma must lie in (0, 1)");
        }
        if !(self.varphi > 0.0 && self.varphi < 1.0) {
            return invalid("varphi must lie in (0, 1)");
        }
        if !(self.n1 >= 0.0 && self.n1.is_finite()) {
            return invalid("n1 must be >= 0");
        }
        if !(self.pinv_tol >= 0.0) {
            return invalid("pinv_tol must be >= 0");
        }
        match self.exponent {
            ExponentMode::Fixed { gamma } => {
                for g in gamma {
                    if !(g > 0.0 && (g <= 1.0 || self.long_range)) {
                        return invalid(format!("fixed exponent {g} outside (0, 1]"));
                    }
                }
            }
            ExponentMode::Adaptive(a) => {
                if !(a.lambda3 > 0.0 && a.delta > 0.0 && a.lambda2 >= 0.0) {
                    return invalid("adaptive exponent needs lambda3 > 0, delta > 0, lambda2 >= 0");
                }
                if !(a.lambda1 - a.lambda2 > 0.0) {
                    return invalid("adaptive exponent needs lambda1 - lambda2 > 0");
                }
                if !(a.lambda1 + a.lambda2 < 1.0 || self.long_range) {
                    return invalid("adaptive exponent needs lambda1 + lambda2 < 1");
                }
            }
        }
        Ok(())
    }

    /// γ_j and dγ_j/dΔx_j for axis `j`.
    fn exponent_at(&self, j: usize, dx_j: f64) -> (f64, f64) {
        match self.exponent {
            ExponentMode::Fixed { gamma } => (gamma[j], 0.0),
            ExponentMode::Adaptive(a) => {
                let th = (a.lambda3 * (dx_j * dx_j - a.delta)).tanh();
                (a.lambda1 - a.lambda2 * th, -a.lambda2 * a.lambda3 * (1.0 - th * th) * 2.0 * dx_j)
            }
        }
    }
}

/// `γ = λ1 − λ2 tanh(λ3 (Δx_j² − Δ))`.
pub fn gamma(dx_j: f64, a: &AdaptiveExponent) -> f64 {
    a.lambda1 - a.lambda2 * (a.lambda3 * (dx_j * dx_j - a.delta)).tanh()
}

fn sgn(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// `s_j = α1 Δẋ_j + α2 Δx_j + α3 |Δx_j|^γ_j sgn(Δx_j)`.
pub fn sliding_surface(dx: &Vector3<f64>, dx_dot: &Vector3<f64>, p: &FtsmParams) -> Vector3<f64> {
    Vector3::from_fn(|j, _| {
        let (g, _) = p.exponent_at(j, dx[j]);
        p.alpha1 * dx_dot[j] + p.alpha2 * dx[j] + p.alpha3 * dx[j].abs().powf(g) * sgn(dx[j])
    })
}

/// Time derivative of [`sliding_surface`], including the γ̇ ln|Δx| term of the
/// adaptive exponent.
pub fn sliding_derivative(
    dx: &Vector3<f64>,
    dx_dot: &Vector3<f64>,
    dx_ddot: &Vector3<f64>,
    p: &FtsmParams,
) -> Vector3<f64> {
    Vector3::from_fn(|j, _| {
        let (g, dg) = p.exponent_at(j, dx[j]);
        let a = dx[j].abs().max(EPS_SING);
        let g_dot = dg * dx_dot[j];
        let terminal = g * a.powf(g - 1.0) * dx_dot[j] + sgn(dx[j]) * a.powf(g) * a.ln() * g_dot;
        p.alpha1 * dx_ddot[j] + p.alpha2 * dx_dot[j] + p.alpha3 * terminal
    })
}

/// SVD pseudo-inverse; singular values below `tol·σ_max` are dropped.
pub fn pinv(j: &Jac, tol: f64) -> Pinv {
    let svd = j.svd(true, true);
    let smax = svd.singular_values.max();
    if !(smax > 0.0) {
        return Pinv::zeros();
    }
    svd.pseudo_inverse(tol * smax).unwrap_or_else(|_| Pinv::zeros())
}

/// `ṙ = (1/α2) Ĵ⁺ [−k1 s − k2 |s|^{2σ−1} sgn(s) − k4 ṡ + α2 Δẋ]`.
pub fn control_law(
    j_hat: &Jac,
    s: &Vector3<f64>,
    s_dot: &Vector3<f64>,
    dx_dot: &Vector3<f64>,
    p: &FtsmParams,
) -> Vec6 {
    let reach = Vector3::from_fn(|j, _| {
        let pow = if s[j] == 0.0 { 0.0 } else { s[j].abs().powf(2.0 * p.sigma - 1.0) * sgn(s[j]) };
        -p.k1 * s[j] - p.k2 * pow - p.k4 * s_dot[j] + p.alpha2 * dx_dot[j]
    });
    pinv(j_hat, p.pinv_tol) * reach / p.alpha2
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LyapunovSample {
    pub v: f64,
    pub v_s: f64,
    pub v_w: f64,
    pub t: f64,
}

/// `V = ½k4 sᵀs + ½ Σ ‖W_ref,i − Ŵ_i‖²_F`; pass `None` when no weights are
/// being adapted.
pub fn lyapunov(
    s: &Vector3<f64>,
    weights: Option<(&RbfJacobianEstimator, &RbfJacobianEstimator)>,
    k4: f64,
    t: f64,
) -> Result<LyapunovSample> {
    let v_s = 0.5 * k4 * s.norm_squared();
    let v_w = match weights {
        Some((w_ref, w_hat)) => 0.5 * w_ref.weight_distance_sq(w_hat)?,
        None => 0.0,
    };
    Ok(LyapunovSample { v: v_s + v_w, v_s, v_w, t })
}

/// Fraction of forward differences violating `V̇ ≤ −k V^σ + δ + tol_margin`.
pub fn sgpfs_check(series: &[LyapunovSample], k: f64, sigma: f64, delta: f64, tol_margin: f64) -> Result<f64> {
    if series.len() < 3 {
        return invalid("SGPFS check needs at least 3 samples");
    }
    let mut bad = 0usize;
    for w in series.windows(2) {
        let dt = w[1].t - w[0].t;
        if !(dt > 0.0) {
            return invalid("Lyapunov samples must have increasing time stamps");
        }
        let v_dot = (w[1].v - w[0].v) / dt;
        if v_dot > -k * w[0].v.max(0.0).powf(sigma) + delta + tol_margin {
            bad += 1;
        }
    }
    Ok(bad as f64 / (series.len() - 1) as f64)
}

/// `t_s = [V0^{1−σ} − (δ/((1−φ)k))^{(1−σ)/σ}] / ((1−σ) φ k)`, floored at 0.
pub fn predict_reach_time(v0: f64, k: f64, sigma: f64, delta: f64, varphi: f64) -> f64 {
    let floor = (delta / ((1.0 - varphi) * k)).powf((1.0 - sigma) / sigma);
    let t = (v0.max(0.0).powf(1.0 - sigma) - floor) / ((1.0 - sigma) * varphi * k);
    if t.is_finite() {
        t.max(0.0)
    } else {
        0.0
    }
}

/// Constants of the practical finite-time inequality `V̇ ≤ −k V^σ + δ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    pub k: f64,
    pub delta: f64,
    pub sigma: f64,
    pub varphi: f64,
}

impl Certificate {
    /// δ from reference weights: `(k3/2)·rows·(1−σ)ι + (k3/2)‖W_ref‖²` with
    /// `ι = σ^{σ/(1−σ)}` and one row per output of each column net.
    pub fn from_reference(p: &FtsmParams, w_ref: &RbfJacobianEstimator) -> Self {
        let rows = 3.0 * w_ref.nets().len() as f64;
        let iota = p.sigma.powf(p.sigma / (1.0 - p.sigma));
        let delta = 0.5 * p.k3 * rows * (1.0 - p.sigma) * iota + 0.5 * p.k3 * w_ref.weight_norm_sq();
        Self { k: (p.k2 / p.k4.powf(p.sigma)).min(p.k3 / 2.0), delta, sigma: p.sigma, varphi: p.varphi }
    }

    /// Weight-free certificate whose floor band on ‖s‖ equals `band`.
    pub fn from_band(p: &FtsmParams, band: f64) -> Self {
        let k = p.k2 / p.k4.powf(p.sigma);
        let delta = (1.0 - p.varphi) * k * band.powf(2.0 * p.sigma);
        Self { k, delta, sigma: p.sigma, varphi: p.varphi }
    }

    /// Floor band on ‖s‖: `(δ/((1−φ)k))^{1/(2σ)}`.
    pub fn band(&self) -> f64 {
        (self.delta / ((1.0 - self.varphi) * self.k)).powf(0.5 / self.sigma)
    }

    pub fn reach_time(&self, v0: f64) -> f64 {
        predict_reach_time(v0, self.k, self.sigma, self.delta, self.varphi)
    }
}

/// Time for `α1 ẋ + α2 x + α3 |x|^γ sgn x = 0` started at `x`, in the printed
/// closed form; `None` when the expression is not a finite non-negative time.
pub fn slide_time(x: f64, gamma: f64, p: &FtsmParams) -> Option<f64> {
    if x == 0.0 {
        return Some(0.0);
    }
    let y = x.abs().powf(gamma - 1.0);
    let arg = y / (y + p.alpha2 / p.alpha3);
    if !(arg > 0.0) {
        return None;
    }
    let t = p.alpha1 * arg.ln() / ((gamma - 1.0) * (p.alpha2 - p.alpha3));
    (t.is_finite() && t >= 0.0).then_some(t)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlideTimes {
    pub t_r1: [Option<f64>; 3],
    pub t_r2: [Option<f64>; 3],
}

/// Per-axis sliding-phase times from the error at the end of the reach phase.
/// A fixed exponent is treated as equal far and near exponents.
pub fn predict_slide_time(dx_ts: &Vector3<f64>, p: &FtsmParams) -> SlideTimes {
    let mut out = SlideTimes { t_r1: [None; 3], t_r2: [None; 3] };
    for j in 0..3 {
        let (far, near, root) = match p.exponent {
            ExponentMode::Adaptive(a) => (a.far(), a.near(), a.delta.sqrt()),
            ExponentMode::Fixed { gamma } => (gamma[j], gamma[j], f64::INFINITY),
        };
        let x = dx_ts[j].abs();
        if x > root {
            out.t_r1[j] = match (slide_time(x, far, p), slide_time(root, far, p)) {
                (Some(a), Some(b)) => Some((a - b).max(0.0)),
                _ => None,
            };
            out.t_r2[j] = slide_time(root, near, p);
        } else {
            out.t_r1[j] = Some(0.0);
            out.t_r2[j] = slide_time(x, near, p);
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConvergencePrediction {
    pub t_s: f64,
    pub t_r1: [Option<f64>; 3],
    pub t_r2: [Option<f64>; 3],
    /// `t_s + max_j (t_r1j + t_r2j)`; `None` if any axis is inapplicable.
    pub total: Option<f64>,
}

pub fn predict_convergence(t_s: f64, dx_ts: &Vector3<f64>, p: &FtsmParams) -> ConvergencePrediction {
    let slide = predict_slide_time(dx_ts, p);
    let mut worst: Option<f64> = Some(0.0);
    for j in 0..3 {
        worst = match (worst, slide.t_r1[j], slide.t_r2[j]) {
            (Some(w), Some(a), Some(b)) => Some(w.max(a + b)),
            _ => None,
        };
    }
    ConvergencePrediction { t_s, t_r1: slide.t_r1, t_r2: slide.t_r2, total: worst.map(|w| t_s + w) }
}
