//! Column-split RBF Jacobian estimator.
//!
//! Column `i` of the Jacobian is produced by its own Gaussian network,
//! `Ĵ_i(r) = W_i θ_i(r)` with `θ_t = exp(-‖r - u_t‖² / δ_t²)`.

use std::path::Path;

use nalgebra::{DMatrix, DVector, Matrix3xX, Vector3};
use rand::seq::index::sample as sample_indices;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::{Jac, Vec6};

/// Frobenius bound applied to each `W_i` after an online step.
pub const WEIGHT_CLIP: f64 = 1e3;

#[derive(Debug, Clone, PartialEq)]
pub struct RbfColumnNet {
    centers: DMatrix<f64>,
    widths: DVector<f64>,
    weights: Matrix3xX<f64>,
}

impl RbfColumnNet {
    /// `centers` is l×6, `widths` has length l and `weights` is 3×l.
    pub fn new(centers: DMatrix<f64>, widths: DVector<f64>, weights: Matrix3xX<f64>) -> Result<Self> {
        let l = centers.nrows();
        if l == 0 {
            return invalid("an RBF net needs at least one neuron");
        }
        if centers.ncols() != 6 {
            return invalid(format!("centers must have 6 columns, got {}", centers.ncols()));
        }
        if widths.len() != l || weights.ncols() != l {
            return invalid(format!(
                "neuron count mismatch: {l} centers, {} widths, {} weight columns",
                widths.len(),
                weights.ncols()
            ));
        }
        if !widths.iter().all(|w| *w > 0.0 && w.is_finite()) {
            return invalid("all widths must be finite and strictly positive");
        }
        if !centers.iter().chain(weights.iter()).all(|v| v.is_finite()) {
            return invalid("centers and weights must be finite");
        }
        Ok(Self { centers, widths, weights })
    }

    pub fn neurons(&self) -> usize {
        self.widths.len()
    }

    pub fn centers(&self) -> &DMatrix<f64> {
        &self.centers
    }

    pub fn widths(&self) -> &DVector<f64> {
        &self.widths
    }

    pub fn weights(&self) -> &Matrix3xX<f64> {
        &self.weights
    }

    pub fn set_weights(&mut self, weights: Matrix3xX<f64>) -> Result<()> {
        if weights.ncols() != self.neurons() {
            return invalid("weight matrix does not match the neuron count");
        }
        if !weights.iter().all(|v| v.is_finite()) {
            return invalid("weights must be finite");
        }
        self.weights = weights;
        Ok(())
    }

    pub fn activations(&self, r: &Vec6) -> DVector<f64> {
        DVector::from_fn(self.neurons(), |t, _| {
            let mut d2 = 0.0;
            for k in 0..6 {
                let d = r[k] - self.centers[(t, k)];
                d2 += d * d;
            }
            let w = self.widths[t];
            (-d2 / (w * w)).exp()
        })
    }

    pub fn column(&self, r: &Vec6) -> Vector3<f64> {
        &self.weights * self.activations(r)
    }

    fn clip(&mut self) {
        let n = self.weights.norm();
        if n > WEIGHT_CLIP {
            self.weights *= WEIGHT_CLIP / n;
        }
    }
}

/// Gains of the sliding-mode coupled update law.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProposedGains {
    pub n1: f64,
    pub alpha2: f64,
    pub k3: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RbfJacobianEstimator {
    nets: Vec<RbfColumnNet>,
}

impl RbfJacobianEstimator {
    pub fn new(nets: Vec<RbfColumnNet>) -> Result<Self> {
        if nets.len() != 6 {
            return invalid(format!("expected 6 column nets, got {}", nets.len()));
        }
        Ok(Self { nets })
    }

    pub fn nets(&self) -> &[RbfColumnNet] {
        &self.nets
    }

    pub fn nets_mut(&mut self) -> &mut [RbfColumnNet] {
        &mut self.nets
    }

    pub fn estimate_jacobian(&self, r: &Vec6) -> Jac {
        let mut j = Jac::zeros();
        for (i, net) in self.nets.iter().enumerate() {
            j.set_column(i, &net.column(r));
        }
        j
    }

    /// Σ_i ‖W_i‖²_F.
    pub fn weight_norm_sq(&self) -> f64 {
        self.nets.iter().map(|n| n.weights.norm_squared()).sum()
    }

    /// Σ_i ‖W_i − other_i‖²_F; both estimators must share neuron counts.
    pub fn weight_distance_sq(&self, other: &Self) -> Result<f64> {
        let mut acc = 0.0;
        for (a, b) in self.nets.iter().zip(&other.nets) {
            if a.neurons() != b.neurons() {
                return invalid("weight sets have different shapes");
            }
            acc += (&a.weights - &b.weights).norm_squared();
        }
        Ok(acc)
    }

    /// Scales every weight matrix by `c`.
    pub fn scaled(&self, c: f64) -> Self {
        let mut out = self.clone();
        for n in &mut out.nets {
            n.weights *= c;
        }
        out
    }

    /// One forward-Euler step of
    /// `dŴ_i/dt = ṙ_i (n1 e − α2 s) θ_i(r)ᵀ − k3 Ŵ_i`.
    pub fn online_update_proposed(
        &mut self,
        r: &Vec6,
        r_dot: &Vec6,
        e: &Vector3<f64>,
        s: &Vector3<f64>,
        g: ProposedGains,
        dt: f64,
    ) {
        let drive = g.n1 * e - g.alpha2 * s;
        for (i, net) in self.nets.iter_mut().enumerate() {
            let theta = net.activations(r);
            let decay = 1.0 - g.k3 * dt;
            net.weights *= decay;
            if r_dot[i] != 0.0 {
                net.weights += (dt * r_dot[i]) * drive * theta.transpose();
            }
            net.clip();
        }
    }

    /// One forward-Euler step of `dŴ_i/dt = ṙ_i (n2 e + n3 s) θ_i(r)ᵀ`.
    #[allow(clippy::too_many_arguments)]
    pub fn online_update_pid(
        &mut self,
        r: &Vec6,
        r_dot: &Vec6,
        e: &Vector3<f64>,
        s: &Vector3<f64>,
        n2: f64,
        n3: f64,
        dt: f64,
    ) {
        let drive = n2 * e + n3 * s;
        for (i, net) in self.nets.iter_mut().enumerate() {
            if r_dot[i] == 0.0 {
                continue;
            }
            let theta = net.activations(r);
            net.weights += (dt * r_dot[i]) * drive * theta.transpose();
            net.clip();
        }
    }

    pub fn to_json(&self) -> String {
        let file = ModelJson {
            nets: self
                .nets
                .iter()
                .map(|n| NetJson {
                    centers: n.centers.row_iter().map(|row| row.iter().copied().collect()).collect(),
                    widths: n.widths.iter().copied().collect(),
                    weights: n.weights.row_iter().map(|row| row.iter().copied().collect()).collect(),
                })
                .collect(),
        };
        serde_json::to_string(&file).expect("estimator serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: ModelJson = serde_json::from_str(text)
            .map_err(|source| Error::Json { path: "<estimator>".into(), source })?;
        Self::from_model_json(file)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let file: ModelJson =
            serde_json::from_str(&text).map_err(|source| Error::Json { path: path.into(), source })?;
        Self::from_model_json(file)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    fn from_model_json(file: ModelJson) -> Result<Self> {
        let mut nets = Vec::with_capacity(file.nets.len());
        for (i, n) in file.nets.into_iter().enumerate() {
            let l = n.widths.len();
            if n.centers.len() != l || n.centers.iter().any(|c| c.len() != 6) {
                return invalid(format!("net {i}: centers must be {l} rows of 6"));
            }
            if n.weights.len() != 3 || n.weights.iter().any(|w| w.len() != l) {
                return invalid(format!("net {i}: weights must be 3 rows of {l}"));
            }
            let centers = DMatrix::from_fn(l, 6, |t, k| n.centers[t][k]);
            let widths = DVector::from_vec(n.widths);
            let weights = Matrix3xX::from_fn(l, |j, t| n.weights[j][t]);
            nets.push(RbfColumnNet::new(centers, widths, weights)?);
        }
        Self::new(nets)
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct NetJson {
    centers: Vec<Vec<f64>>,
    widths: Vec<f64>,
    weights: Vec<Vec<f64>>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ModelJson {
    nets: Vec<NetJson>,
}

/// `e = ẋ − Ĵ ṙ`.
pub fn feature_velocity_error(x_dot: &Vector3<f64>, j_hat: &Jac, r_dot: &Vec6) -> Vector3<f64> {
    x_dot - j_hat * r_dot
}

/// One training triple: joint pose, joint increment and feature increment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sample {
    pub r: Vec6,
    pub dr: Vec6,
    pub dx: Vector3<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub neurons_per_net: [usize; 6],
    pub learning_rates: [f64; 6],
    pub epochs: usize,
    pub batch_size: usize,
    pub holdout_fraction: f64,
    pub seed: u64,
    /// Width multiplier on the median nearest-centre distance.
    pub width_factor: f64,
    pub kmeans_iters: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            neurons_per_net: [64; 6],
            learning_rates: [0.02; 6],
            epochs: 60,
            batch_size: 512,
            holdout_fraction: 0.1,
            seed: 0,
            width_factor: 4.0,
            kmeans_iters: 30,
        }
    }
}

impl TrainConfig {
    fn validate(&self) -> Result<()> {
        if self.neurons_per_net.contains(&0) {
            return invalid("neurons_per_net entries must be positive");
        }
        if !self.learning_rates.iter().all(|&lr| lr > 0.0 && lr.is_finite()) {
            return invalid("learning rates must be positive");
        }
        if self.epochs == 0 || self.batch_size == 0 || self.kmeans_iters == 0 {
            return invalid("epochs, batch_size and kmeans_iters must be positive");
        }
        if !(self.holdout_fraction > 0.0 && self.holdout_fraction < 1.0) {
            return invalid("holdout_fraction must lie in (0, 1)");
        }
        if !(self.width_factor > 0.0 && self.width_factor.is_finite()) {
            return invalid("width_factor must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub n_train: usize,
    pub n_holdout: usize,
    /// Mean ‖Δx − Ĵ(r)Δr‖² over the training split.
    pub train_loss: f64,
    /// Same quantity over the holdout split.
    pub holdout_loss: f64,
}

#[derive(Debug, Clone)]
pub struct Trained {
    pub estimator: RbfJacobianEstimator,
    pub report: TrainReport,
}

/// Fits centres by k-means, widths from centre spacing and weights by
/// mini-batch Adam on the increment residual. The holdout split is the tail
/// of `data`.
pub fn offline_train(data: &[Sample], cfg: &TrainConfig) -> Result<Trained> {
    cfg.validate()?;
    let (train, holdout) = split(data, cfg.holdout_fraction)?;

    let nets: Vec<RbfColumnNet> = (0..6)
        .into_par_iter()
        .map(|i| {
            let l = cfg.neurons_per_net[i];
            let stride = (train.len() / (16 * l)).clamp(1, 4);
            let pts: Vec<Vec6> = train.iter().step_by(stride).map(|s| s.r).collect();
            let centers = kmeans(&pts, l, cfg.kmeans_iters, cfg.seed.wrapping_add(i as u64));
            let width = cfg.width_factor * median_nn_distance(&centers);
            let c = DMatrix::from_fn(centers.len(), 6, |t, k| centers[t][k]);
            RbfColumnNet::new(c, DVector::repeat(centers.len(), width), Matrix3xX::zeros(centers.len()))
        })
        .collect::<Result<_>>()?;
    let mut est = RbfJacobianEstimator::new(nets)?;
    fit_weights(&mut est, train, cfg)?;
    let report = TrainReport {
        n_train: train.len(),
        n_holdout: holdout.len(),
        train_loss: increment_loss(&est, train),
        holdout_loss: increment_loss(&est, holdout),
    };
    Ok(Trained { estimator: est, report })
}

/// Continues weight fitting from `start`, keeping its centres and widths.
pub fn refine_weights(start: &RbfJacobianEstimator, data: &[Sample], cfg: &TrainConfig) -> Result<Trained> {
    cfg.validate()?;
    let (train, holdout) = split(data, cfg.holdout_fraction)?;
    let mut est = start.clone();
    fit_weights(&mut est, train, cfg)?;
    let report = TrainReport {
        n_train: train.len(),
        n_holdout: holdout.len(),
        train_loss: increment_loss(&est, train),
        holdout_loss: increment_loss(&est, holdout),
    };
    Ok(Trained { estimator: est, report })
}

/// Mean ‖Δx − Ĵ(r)Δr‖² over `data` (0 for an empty slice).
pub fn increment_loss(est: &RbfJacobianEstimator, data: &[Sample]) -> f64 {
    if data.is_empty() {
        return 0.0;
    }
    let total: f64 = data
        .par_iter()
        .map(|s| (s.dx - est.estimate_jacobian(&s.r) * s.dr).norm_squared())
        .sum();
    total / data.len() as f64
}

fn split(data: &[Sample], holdout_fraction: f64) -> Result<(&[Sample], &[Sample])> {
    if data.is_empty() {
        return invalid("training dataset is empty");
    }
    if data.iter().all(|s| s.dr.iter().all(|&v| v == 0.0)) {
        return invalid("degenerate dataset: every joint increment is zero");
    }
    if !data.iter().all(|s| s.r.iter().chain(s.dr.iter()).chain(s.dx.iter()).all(|v| v.is_finite())) {
        return invalid("dataset has non-finite entries");
    }
    let n_hold = ((data.len() as f64) * holdout_fraction).round() as usize;
    let n_hold = n_hold.min(data.len() - 1);
    Ok(data.split_at(data.len() - n_hold))
}

fn kmeans(points: &[Vec6], k: usize, iters: usize, seed: u64) -> Vec<Vec6> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let k = k.min(points.len()).max(1);
    let mut centers: Vec<Vec6> = sample_indices(&mut rng, points.len(), k).iter().map(|i| points[i]).collect();
    let mut assign = vec![0usize; points.len()];
    for _ in 0..iters {
        for (p, a) in points.iter().zip(assign.iter_mut()) {
            *a = centers
                .iter()
                .enumerate()
                .map(|(j, c)| (j, (p - c).norm_squared()))
                .min_by(|x, y| x.1.total_cmp(&y.1))
                .map(|(j, _)| j)
                .unwrap_or(0);
        }
        let mut sums = vec![Vec6::zeros(); k];
        let mut counts = vec![0usize; k];
        for (p, &a) in points.iter().zip(&assign) {
            sums[a] += p;
            counts[a] += 1;
        }
        for j in 0..k {
            if counts[j] > 0 {
                centers[j] = sums[j] / counts[j] as f64;
            }
        }
    }
    centers
}

fn median_nn_distance(centers: &[Vec6]) -> f64 {
    if centers.len() < 2 {
        return 1.0;
    }
    let mut nn: Vec<f64> = centers
        .iter()
        .enumerate()
        .map(|(i, c)| {
            centers
                .iter()
                .enumerate()
                .filter(|(j, _)| *j != i)
                .map(|(_, d)| (c - d).norm())
                .fold(f64::INFINITY, f64::min)
        })
        .collect();
    nn.sort_by(f64::total_cmp);
    let m = nn[nn.len() / 2];
    if m > 0.0 {
        m
    } else {
        1.0
    }
}

/// Mini-batch Adam over the flattened weights. The model is linear in the
/// weights: Δx = Σ_i W_i (θ_i(r) Δr_i), so each sample contributes the feature
/// block θ_i(r) Δr_i for every net.
fn fit_weights(est: &mut RbfJacobianEstimator, train: &[Sample], cfg: &TrainConfig) -> Result<()> {
    let sizes: Vec<usize> = est.nets.iter().map(|n| n.neurons()).collect();
    let offsets: Vec<usize> = sizes
        .iter()
        .scan(0, |acc, &l| {
            let o = *acc;
            *acc += l;
            Some(o)
        })
        .collect();
    let f = sizes.iter().sum::<usize>();
    let n = train.len();

    let feats: Vec<f64> = train
        .par_iter()
        .flat_map_iter(|s| {
            let mut row = vec![0.0; f];
            for (i, net) in est.nets.iter().enumerate() {
                let th = net.activations(&s.r);
                for t in 0..sizes[i] {
                    row[offsets[i] + t] = th[t] * s.dr[i];
                }
            }
            row
        })
        .collect();

    // w[j * f + c]: output row j, flattened feature c
    let mut w = vec![0.0; 3 * f];
    for (i, net) in est.nets.iter().enumerate() {
        for j in 0..3 {
            for t in 0..sizes[i] {
                w[j * f + offsets[i] + t] = net.weights[(j, t)];
            }
        }
    }
    let lr_of: Vec<f64> = (0..f)
        .map(|c| {
            let i = offsets.iter().rposition(|&o| o <= c).unwrap_or(0);
            cfg.learning_rates[i]
        })
        .collect();

    let (b1, b2, eps) = (0.9, 0.999, 1e-12);
    let mut m = vec![0.0; 3 * f];
    let mut v = vec![0.0; 3 * f];
    let mut g = vec![0.0; 3 * f];
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed_0ff1_ce00_0001);
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let decay = 1.0 / (1.0 + epoch as f64 / 5.0);
        for batch in order.chunks(cfg.batch_size) {
            g.iter_mut().for_each(|x| *x = 0.0);
            for &idx in batch {
                let row = &feats[idx * f..(idx + 1) * f];
                for j in 0..3 {
                    let wj = &w[j * f..(j + 1) * f];
                    let pred: f64 = row.iter().zip(wj).map(|(a, b)| a * b).sum();
                    let res = pred - train[idx].dx[j];
                    if res != 0.0 {
                        for (gc, a) in g[j * f..(j + 1) * f].iter_mut().zip(row) {
                            *gc += res * a;
                        }
                    }
                }
            }
            let inv = 1.0 / batch.len() as f64;
            for c in 0..3 * f {
                let gc = g[c] * inv;
                m[c] = b1 * m[c] + (1.0 - b1) * gc;
                v[c] = b2 * v[c] + (1.0 - b2) * gc * gc;
                w[c] -= lr_of[c % f] * decay * m[c] / (v[c].sqrt() + eps);
            }
        }
    }
    if !w.iter().all(|x| x.is_finite()) {
        return Err(Error::Numerical("weight fitting produced non-finite weights".into()));
    }
    for (i, net) in est.nets.iter_mut().enumerate() {
        net.weights = Matrix3xX::from_fn(sizes[i], |j, t| w[j * f + offsets[i] + t]);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::Rng;

    fn random_net(rng: &mut ChaCha8Rng, l: usize) -> RbfColumnNet {
        let centers = DMatrix::from_fn(l, 6, |_, _| rng.random_range(-1.0..1.0));
        let widths = DVector::from_fn(l, |_, _| rng.random_range(0.3..2.0));
        let weights = Matrix3xX::from_fn(l, |_, _| rng.random_range(-1.0..1.0));
        RbfColumnNet::new(centers, widths, weights).unwrap()
    }

    fn random_est(seed: u64) -> RbfJacobianEstimator {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        RbfJacobianEstimator::new((0..6).map(|i| random_net(&mut rng, 3 + i)).collect()).unwrap()
    }

    fn rand6(rng: &mut ChaCha8Rng) -> Vec6 {
        Vec6::from_fn(|_, _| rng.random_range(-1.0..1.0))
    }

    #[test]
    fn activation_at_centre_and_unit_distance() {
        let centers = DMatrix::from_row_slice(1, 6, &[0.1, 0.2, 0.3, 0.4, 0.5, 0.6]);
        let net = RbfColumnNet::new(centers, DVector::from_element(1, 0.5), Matrix3xX::zeros(1)).unwrap();
        let u = Vec6::new(0.1, 0.2, 0.3, 0.4, 0.5, 0.6);
        assert_eq!(net.activations(&u)[0], 1.0);
        let mut r = u;
        r[3] += 0.5;
        assert_relative_eq!(net.activations(&r)[0], (-1.0f64).exp(), epsilon = 1e-15);
    }

    #[test]
    fn activations_match_scalar_formula() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let net = random_net(&mut rng, 5);
            let r = rand6(&mut rng);
            let th = net.activations(&r);
            for t in 0..5 {
                let mut d2 = 0.0;
                for k in 0..6 {
                    d2 += (r[k] - net.centers()[(t, k)]).powi(2);
                }
                let expect = (-(d2.sqrt() / net.widths()[t]).powi(2)).exp();
                assert_relative_eq!(th[t], expect, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn construction_guards() {
        assert!(RbfColumnNet::new(DMatrix::zeros(0, 6), DVector::zeros(0), Matrix3xX::zeros(0)).is_err());
        assert!(RbfColumnNet::new(DMatrix::zeros(2, 6), DVector::from_vec(vec![1.0, 0.0]), Matrix3xX::zeros(2)).is_err());
        assert!(RbfColumnNet::new(DMatrix::zeros(2, 5), DVector::repeat(2, 1.0), Matrix3xX::zeros(2)).is_err());
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(RbfJacobianEstimator::new((0..5).map(|_| random_net(&mut rng, 2)).collect()).is_err());
    }

    #[test]
    fn zero_weights_give_zero_jacobian() {
        let est = random_est(1).scaled(0.0);
        assert_eq!(est.estimate_jacobian(&Vec6::repeat(0.2)), Jac::zeros());
    }

    #[test]
    fn single_neuron_at_centre_returns_weight_column() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let u = rand6(&mut rng);
        let nets = (0..6)
            .map(|i| {
                let c = DMatrix::from_fn(1, 6, |_, k| u[k]);
                let w = Matrix3xX::from_fn(1, |j, _| (i * 3 + j) as f64);
                RbfColumnNet::new(c, DVector::repeat(1, 0.7), w).unwrap()
            })
            .collect();
        let est = RbfJacobianEstimator::new(nets).unwrap();
        let j = est.estimate_jacobian(&u);
        for i in 0..6 {
            for r in 0..3 {
                assert_eq!(j[(r, i)], (i * 3 + r) as f64);
            }
        }
    }

    #[test]
    fn jacobian_matches_manual_column_assembly() {
        let est = random_est(5);
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..20 {
            let r = rand6(&mut rng);
            let j = est.estimate_jacobian(&r);
            for (i, net) in est.nets().iter().enumerate() {
                let th = net.activations(&r);
                for row in 0..3 {
                    let manual: f64 = (0..net.neurons()).map(|t| net.weights()[(row, t)] * th[t]).sum();
                    assert_relative_eq!(j[(row, i)], manual, epsilon = 1e-12);
                }
            }
        }
    }

    #[test]
    fn feature_velocity_error_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a = Jac::from_fn(|_, _| rng.random_range(-1.0..1.0));
        let rd = rand6(&mut rng);
        assert_eq!(feature_velocity_error(&(a * rd), &a, &rd), Vector3::zeros());
        let xd = Vector3::new(0.1, -0.2, 0.3);
        assert_eq!(feature_velocity_error(&xd, &a, &Vec6::zeros()), xd);
        let e = feature_velocity_error(&xd, &a, &rd);
        for j in 0..3 {
            let direct = xd[j] - (0..6).map(|i| a[(j, i)] * rd[i]).sum::<f64>();
            assert_relative_eq!(e[j], direct, epsilon = 1e-14);
        }
    }

    fn gains() -> ProposedGains {
        ProposedGains { n1: 0.7, alpha2: 0.5, k3: 0.2 }
    }

    #[test]
    fn proposed_update_pure_decay_cases() {
        let est = random_est(11);
        let r = Vec6::repeat(0.1);
        let e = Vector3::new(0.3, 0.1, -0.2);
        let s = Vector3::new(-0.1, 0.2, 0.05);
        let mut a = est.clone();
        a.online_update_proposed(&r, &Vec6::zeros(), &e, &s, gains(), 0.02);
        let expect = est.scaled(1.0 - 0.2 * 0.02);
        for (x, y) in a.nets().iter().zip(expect.nets()) {
            assert_relative_eq!(x.weights(), y.weights(), epsilon = 1e-15);
        }
        let mut b = est.clone();
        let g = ProposedGains { n1: 0.0, ..gains() };
        b.online_update_proposed(&r, &Vec6::repeat(0.4), &e, &Vector3::zeros(), g, 0.02);
        for (x, y) in b.nets().iter().zip(expect.nets()) {
            assert_relative_eq!(x.weights(), y.weights(), epsilon = 1e-15);
        }
    }

    #[test]
    fn proposed_update_matches_elementwise_law() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for trial in 0..20 {
            let est = random_est(100 + trial);
            let r = rand6(&mut rng);
            let rd = rand6(&mut rng);
            let e = Vector3::from_fn(|_, _| rng.random_range(-1.0..1.0));
            let s = Vector3::from_fn(|_, _| rng.random_range(-1.0..1.0));
            let dt = 0.02;
            let g = gains();
            let mut upd = est.clone();
            upd.online_update_proposed(&r, &rd, &e, &s, g, dt);
            for (i, (old, new)) in est.nets().iter().zip(upd.nets()).enumerate() {
                let th = old.activations(&r);
                for j in 0..3 {
                    for t in 0..old.neurons() {
                        let w = old.weights()[(j, t)];
                        let expect = w + dt * (rd[i] * th[t] * (g.n1 * e[j] - g.alpha2 * s[j]) - g.k3 * w);
                        assert_relative_eq!(new.weights()[(j, t)], expect, epsilon = 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn pid_update_cases() {
        let est = random_est(21);
        let r = Vec6::repeat(-0.2);
        let e = Vector3::new(0.3, 0.1, -0.2);
        let s = Vector3::new(-0.1, 0.2, 0.05);
        let mut a = est.clone();
        a.online_update_pid(&r, &Vec6::zeros(), &e, &s, 0.5, 0.5, 0.02);
        assert_eq!(a, est);
        let mut b = est.clone();
        b.online_update_pid(&r, &Vec6::repeat(0.3), &e, &s, 0.0, 0.0, 0.02);
        assert_eq!(b, est);

        let mut rng = ChaCha8Rng::seed_from_u64(22);
        let rd = rand6(&mut rng);
        let (n2, n3, dt) = (0.8, 0.3, 0.02);
        let mut c = est.clone();
        c.online_update_pid(&r, &rd, &e, &s, n2, n3, dt);
        for (i, (old, new)) in est.nets().iter().zip(c.nets()).enumerate() {
            let th = old.activations(&r);
            for j in 0..3 {
                for t in 0..old.neurons() {
                    let expect = old.weights()[(j, t)] + dt * rd[i] * th[t] * (n2 * e[j] + n3 * s[j]);
                    assert_relative_eq!(new.weights()[(j, t)], expect, epsilon = 1e-12);
                }
            }
        }
    }

    #[test]
    fn frozen_update_leaves_weights_fixed() {
        let est = random_est(31);
        let mut a = est.clone();
        let g = ProposedGains { n1: 0.0, alpha2: 0.5, k3: 0.0 };
        a.online_update_proposed(&Vec6::zeros(), &Vec6::repeat(0.5), &Vector3::new(1.0, 2.0, 3.0), &Vector3::zeros(), g, 0.02);
        assert_eq!(a, est);
    }

    #[test]
    fn weights_are_clipped() {
        let mut est = random_est(41);
        let g = ProposedGains { n1: 1e9, alpha2: 0.0, k3: 0.0 };
        let c = est.nets()[0].centers();
        let r = Vec6::from_fn(|i, _| c[(0, i)]);
        est.online_update_proposed(&r, &Vec6::repeat(1.0), &Vector3::repeat(1.0), &Vector3::zeros(), g, 0.02);
        for net in est.nets() {
            assert!(net.weights().norm() <= WEIGHT_CLIP * (1.0 + 1e-12));
        }
    }

    #[test]
    fn json_round_trip_is_exact() {
        let est = random_est(51);
        let back = RbfJacobianEstimator::from_json(&est.to_json()).unwrap();
        assert_eq!(back, est);
        assert!(RbfJacobianEstimator::from_json(r#"{"nets": []}"#).is_err());
    }

    #[test]
    fn training_rejects_degenerate_data() {
        let s = Sample { r: Vec6::zeros(), dr: Vec6::zeros(), dx: Vector3::zeros() };
        assert!(offline_train(&[s; 10], &TrainConfig::default()).is_err());
        assert!(offline_train(&[], &TrainConfig::default()).is_err());
        let bad = TrainConfig { holdout_fraction: 1.0, ..TrainConfig::default() };
        let s = Sample { r: Vec6::zeros(), dr: Vec6::repeat(0.01), dx: Vector3::zeros() };
        assert!(offline_train(&[s; 10], &bad).is_err());
    }

    #[test]
    fn training_interpolates_a_repeated_sample() {
        let s = Sample {
            r: Vec6::new(0.1, -0.2, 0.3, 0.0, 0.2, -0.1),
            dr: Vec6::new(0.01, -0.02, 0.015, 0.005, -0.01, 0.02),
            dx: Vector3::new(0.004, -0.003, 0.002),
        };
        let cfg = TrainConfig {
            neurons_per_net: [1; 6],
            learning_rates: [0.01; 6],
            epochs: 400,
            batch_size: 8,
            ..TrainConfig::default()
        };
        let out = offline_train(&vec![s; 32], &cfg).unwrap();
        assert!(out.report.train_loss < 1e-12 * (1.0 + s.dx.norm_squared()), "{:?}", out.report);
    }
}
