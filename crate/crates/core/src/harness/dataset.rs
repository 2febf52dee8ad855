//! Random-motion datasets for offline training.

use std::path::Path;

use nalgebra::Vector3;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Uniform};

use crate::error::{invalid, Error, Result};
use crate::rbf::Sample;
use crate::sim::World;
use crate::Vec6;

pub const MIN_SAMPLES: usize = 100;

/// Sampled joint and feature trajectory at a uniform rate.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub dt: f64,
    pub t: Vec<f64>,
    pub r: Vec<Vec6>,
    pub x: Vec<Vector3<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MotionConfig {
    pub dt: f64,
    /// Speed bound per joint (rad/s).
    pub max_speed: f64,
    /// Standard deviation of the random acceleration (rad/s²).
    pub accel_std: f64,
    pub damping: f64,
    /// Pull toward home per unit of normalized offset.
    pub spring: f64,
}

impl Default for MotionConfig {
    fn default() -> Self {
        Self { dt: 0.02, max_speed: 0.6, accel_std: 1.5, damping: 0.5, spring: 2.0 }
    }
}

/// Smooth random joint motion inside the limits, sampled into `n_samples`
/// increments (`n_samples + 1` poses).
pub fn generate_dataset(world: &World, n_samples: usize, seed: u64) -> Result<Trajectory> {
    generate_with(world, n_samples, seed, &MotionConfig::default())
}

pub fn generate_with(world: &World, n_samples: usize, seed: u64, cfg: &MotionConfig) -> Result<Trajectory> {
    if n_samples < MIN_SAMPLES {
        return invalid(format!("dataset needs at least {MIN_SAMPLES} samples, got {n_samples}"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let accel = Normal::new(0.0, cfg.accel_std).map_err(|e| Error::Invalid(e.to_string()))?;
    let start = Uniform::new_inclusive(-0.8, 0.8).map_err(|e| Error::Invalid(e.to_string()))?;
    let lo = world.model.lower();
    let hi = world.model.upper();
    let half = (hi - lo) / 2.0;

    let frac = Vec6::from_fn(|_, _| start.sample(&mut rng));
    let mut r = world.pose_in_box(&frac);
    let mut v = Vec6::zeros();
    let mut out = Trajectory {
        dt: cfg.dt,
        t: Vec::with_capacity(n_samples + 1),
        r: Vec::with_capacity(n_samples + 1),
        x: Vec::with_capacity(n_samples + 1),
    };
    for k in 0..=n_samples {
        out.t.push(k as f64 * cfg.dt);
        out.r.push(r);
        out.x.push(world.features(&r));
        let a = Vec6::from_fn(|i, _| {
            accel.sample(&mut rng) - cfg.damping * v[i] - cfg.spring * (r[i] - world.home[i]) / half[i]
        });
        v = (v + a * cfg.dt).map(|c| c.clamp(-cfg.max_speed, cfg.max_speed));
        r = world.model.clamp(&(r + v * cfg.dt));
    }
    Ok(out)
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    /// Consecutive-row increments `(r_k, r_{k+1} − r_k, x_{k+1} − x_k)`.
    pub fn samples(&self) -> Vec<Sample> {
        self.r
            .windows(2)
            .zip(self.x.windows(2))
            .map(|(r, x)| Sample { r: r[0], dr: r[1] - r[0], dx: x[1] - x[0] })
            .collect()
    }

    /// CSV with header `t,r1..r6,x1..x3`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let csv_err = |source| Error::Csv { path: path.into(), source };
        let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
        let mut header = vec!["t".to_string()];
        header.extend((1..=6).map(|i| format!("r{i}")));
        header.extend((1..=3).map(|i| format!("x{i}")));
        w.write_record(&header).map_err(csv_err)?;
        for k in 0..self.len() {
            let mut rec = vec![self.t[k].to_string()];
            rec.extend(self.r[k].iter().map(|v| v.to_string()));
            rec.extend(self.x[k].iter().map(|v| v.to_string()));
            w.write_record(&rec).map_err(csv_err)?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let csv_err = |source| Error::Csv { path: path.into(), source };
        let mut rd = csv::Reader::from_path(path).map_err(csv_err)?;
        let header: Vec<String> = rd.headers().map_err(csv_err)?.iter().map(str::to_string).collect();
        let expect: Vec<String> = std::iter::once("t".to_string())
            .chain((1..=6).map(|i| format!("r{i}")))
            .chain((1..=3).map(|i| format!("x{i}")))
            .collect();
        if header != expect {
            return invalid(format!("{}: expected header {}", path.display(), expect.join(",")));
        }
        let mut out = Trajectory { dt: 0.0, t: vec![], r: vec![], x: vec![] };
        for rec in rd.records() {
            let rec = rec.map_err(csv_err)?;
            let vals: Vec<f64> = rec
                .iter()
                .map(|f| f.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::Invalid(format!("{}: {e}", path.display())))?;
            out.t.push(vals[0]);
            out.r.push(Vec6::from_fn(|i, _| vals[1 + i]));
            out.x.push(Vector3::new(vals[7], vals[8], vals[9]));
        }
        if out.len() < 2 {
            return invalid(format!("{}: dataset needs at least two rows", path.display()));
        }
        out.dt = out.t[1] - out.t[0];
        if !(out.dt > 0.0) {
            return invalid(format!("{}: time column must increase", path.display()));
        }
        Ok(out)
    }
}
