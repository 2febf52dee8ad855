//! End-to-end acceptance checks. Runs as a plain binary so that every
//! criterion prints one PASS/FAIL line; exits non-zero if any fails.

use std::path::Path;
use std::time::Instant;

use nalgebra::{SMatrix, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use servobench::control::PidParams;
use servobench::estimators::{lkf_update, ukf_update, BaselineConfig, LinearKfState, UkfState};
use servobench::ftsm::{pinv, Certificate, ExponentMode, FtsmParams};
use servobench::harness::bench::{run_estimator_bench, BenchConfig};
use servobench::harness::dataset::generate_dataset;
use servobench::harness::export::{export_run, import_run};
use servobench::harness::metrics::{first_time_below, oscillation};
use servobench::harness::servo::{run_servo, Outcome, RunRecord};
use servobench::harness::spec::{ControllerSpec, EstimatorSpec, ExperimentSpec, Resources};
use servobench::rbf::{offline_train, refine_weights, RbfJacobianEstimator, Sample, TrainConfig};
use servobench::sim::World;
use servobench::{Jac, Vec6};

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict { pass, detail: detail.into() }
}

struct Trained {
    est: RbfJacobianEstimator,
    w_ref: RbfJacobianEstimator,
    holdout: Vec<Sample>,
    train_secs: f64,
}

fn train(world: &World) -> Trained {
    let data = generate_dataset(world, 20_000, 11).expect("dataset").samples();
    let cfg = TrainConfig::default();
    let started = Instant::now();
    let trained = offline_train(&data, &cfg).expect("training");
    let train_secs = started.elapsed().as_secs_f64();
    let n_hold = (data.len() as f64 * cfg.holdout_fraction).round() as usize;
    let holdout = data[data.len() - n_hold..].to_vec();

    let more = generate_dataset(world, 40_000, 12).expect("dataset").samples();
    let ref_cfg = TrainConfig { epochs: 3 * cfg.epochs, holdout_fraction: 0.02, ..cfg };
    let w_ref = refine_weights(&trained.estimator, &more, &ref_cfg).expect("reference weights").estimator;
    Trained { est: trained.estimator, w_ref, holdout, train_secs }
}

fn canned() -> Vec<ExperimentSpec> {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("specs");
    (1..=4).map(|i| ExperimentSpec::load(&dir.join(format!("exp{i}.json"))).expect("canned spec")).collect()
}

fn rbf_resources(world: &World, t: &Trained) -> Resources {
    Resources::new(world.clone()).with_rbf(t.est.clone()).with_reference(t.w_ref.clone())
}

fn c1_estimator_accuracy(world: &World, t: &Trained) -> Verdict {
    let (mut err, mut norm) = (0.0, 0.0);
    for s in &t.holdout {
        let j = world.jacobian(&s.r);
        err += (t.est.estimate_jacobian(&s.r) - j).norm();
        norm += j.norm();
    }
    let rel = err / norm;
    verdict(
        rel <= 0.15 && t.train_secs <= 300.0,
        format!("relative Frobenius error {:.2}% on {} holdout poses, trained in {:.1}s", 100.0 * rel, t.holdout.len(), t.train_secs),
    )
}

fn c2_c3_bench(world: &World, t: &Trained) -> (Verdict, Verdict) {
    let started = Instant::now();
    let rec = run_estimator_bench(world, &t.est, &BenchConfig::default()).expect("bench");
    let secs = started.elapsed().as_secs_f64();
    let get = |n: &str| rec.get(n).expect("series");
    let (p, l, u, r) = (get("rbf"), get("lkf"), get("ukf"), get("rls"));
    let t2 = |s: &servobench::harness::bench::EstimatorSeries| if s.diverged_at.is_some() { f64::INFINITY } else { s.final_t2() };
    let ok2 = t2(p) <= t2(l) && t2(p) <= t2(r) && t2(p) <= 1.25 * t2(u) && secs <= 120.0;
    let v2 = verdict(
        ok2,
        format!("final T2 rbf {:.3e}, lkf {:.3e}, ukf {:.3e}, rls {:.3e} ({secs:.1}s)", t2(p), t2(l), t2(u), t2(r)),
    );
    let (ep, el) = (p.early_t1(20), l.early_t1(20));
    let v3 = verdict(ep < el, format!("mean T1 over first 20 steps rbf {ep:.3e} vs lkf {el:.3e}"));
    (v2, v3)
}

fn c4_certificate(world: &World, t: &Trained) -> Verdict {
    let res = rbf_resources(world, t);
    let runs: Vec<RunRecord> = canned().par_iter().map(|s| run_servo(s, &res).expect("servo")).collect();
    let fr: Vec<f64> = runs.iter().map(|r| r.meta.sgpfs_violation.unwrap_or(1.0)).collect();
    let cert = Certificate::from_reference(&FtsmParams::default(), &t.w_ref);
    verdict(
        fr.iter().all(|f| *f <= 0.05),
        format!(
            "violation fractions {:?} (k {:.4}, delta {:.4})",
            fr.iter().map(|f| format!("{:.3}", f)).collect::<Vec<_>>(),
            cert.k,
            cert.delta
        ),
    )
}

fn c5_finite_time_vs_pid(world: &World, t: &Trained) -> Verdict {
    let res = rbf_resources(world, t);
    let pairs: Vec<(Option<f64>, Option<f64>)> = canned()
        .par_iter()
        .map(|s| {
            let mut pid = s.clone();
            pid.controller = ControllerSpec::Pid(PidParams::default());
            (
                run_servo(s, &res).expect("ftsm").meta.time_to_success,
                run_servo(&pid, &res).expect("pid").meta.time_to_success,
            )
        })
        .collect();
    let wins = pairs
        .iter()
        .filter(|(f, p)| f.unwrap_or(f64::INFINITY) < p.unwrap_or(f64::INFINITY))
        .count();
    let fmt = |v: &Option<f64>| v.map_or("none".to_string(), |x| format!("{x:.2}s"));
    verdict(
        wins >= 3,
        format!(
            "ftsm faster in {wins}/4 (ftsm vs pid: {})",
            pairs.iter().map(|(f, p)| format!("{} vs {}", fmt(f), fmt(p))).collect::<Vec<_>>().join(", ")
        ),
    )
}

fn c6_reach_time(world: &World) -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(606);
    let p = FtsmParams::default().with_fixed_gamma(0.5);
    let specs: Vec<ExperimentSpec> = (0..50)
        .map(|i| {
            let mut frac = || Vec6::from_fn(|_, _| rng.random_range(-0.4..0.4));
            let (a, b) = (frac(), frac());
            ExperimentSpec {
                id: format!("rand{i}"),
                world: None,
                estimator: EstimatorSpec::Analytic,
                controller: ControllerSpec::Ftsm(p),
                r_initial: world.pose_in_box(&a).into(),
                x_desired: None,
                r_desired: Some(world.pose_in_box(&b).into()),
                dt: 0.02,
                duration: 6.0,
                seed: i,
                success_radius: 0.01,
                hold_steps: 25,
                noise_std: 0.0,
            }
        })
        .collect();
    let res = Resources::new(world.clone());
    let ratios: Vec<f64> = specs
        .par_iter()
        .map(|s| {
            let rec = run_servo(s, &res).expect("servo");
            let t_s = rec.meta.prediction.expect("prediction").t_s;
            match rec.meta.band_entry_time {
                Some(0.0) => 0.0,
                Some(t) if t_s > 0.0 => t / t_s,
                _ => f64::INFINITY,
            }
        })
        .collect();
    let ok = ratios.iter().filter(|r| **r <= 1.5).count();
    let worst = ratios.iter().cloned().filter(|r| r.is_finite()).fold(0.0, f64::max);
    verdict(ok * 100 >= 95 * ratios.len(), format!("{ok}/50 within 1.5x of the predicted reach time (largest finite ratio {worst:.2})"))
}

fn long_run(spec: &ExperimentSpec, p: FtsmParams) -> ExperimentSpec {
    let mut s = spec.clone();
    s.estimator = EstimatorSpec::Analytic;
    s.controller = ControllerSpec::Ftsm(p);
    s.hold_steps = s.steps() + 1;
    s
}

fn c7_c8_exponents(world: &World) -> (Verdict, Verdict) {
    let res = Resources::new(world.clone());
    let adaptive = FtsmParams::default();
    let ExponentMode::Adaptive(a) = adaptive.exponent else { unreachable!() };
    let root = a.delta.sqrt();
    let results: Vec<_> = canned()
        .par_iter()
        .map(|s| {
            let run = |p: FtsmParams| run_servo(&long_run(s, p), &res).expect("servo");
            let ad = run(adaptive);
            let g01 = run(adaptive.with_fixed_gamma(0.1));
            let g02 = run(adaptive.with_fixed_gamma(0.2));
            let g05 = run(adaptive.with_fixed_gamma(0.5));
            let t_of = |r: &RunRecord| first_time_below(&r.times(), &r.errors(), root);
            let osc = |r: &RunRecord| oscillation(&r.errors());
            (s.id.clone(), t_of(&ad), t_of(&g01), osc(&ad), osc(&g01), osc(&g02), osc(&g05))
        })
        .collect();

    let mut ok7 = true;
    let mut ok8 = true;
    let mut d7 = Vec::new();
    let mut d8 = Vec::new();
    for (id, ta, t1, oa, o1, o2, o5) in &results {
        let timing = match (ta, t1) {
            (Some(a), Some(b)) => (a - b).abs() <= 0.1 * b,
            _ => false,
        };
        ok7 &= timing && oa.amplitude <= o1.amplitude;
        ok8 &= o2.sign_changes > o5.sign_changes;
        let f = |v: &Option<f64>| v.map_or("none".into(), |x| format!("{x:.3}"));
        d7.push(format!("{id}: t {}/{}s amp {:.1e}/{:.1e}", f(ta), f(t1), oa.amplitude, o1.amplitude));
        d8.push(format!("{id}: {} vs {}", o2.sign_changes, o5.sign_changes));
    }
    (
        verdict(ok7, format!("adaptive/fixed-0.1 {}", d7.join("; "))),
        verdict(ok8, format!("sign changes gamma 0.2 vs 0.5 {}", d8.join("; "))),
    )
}

fn c9_properties(world: &World, t: &Trained) -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(909);
    let mut failures = Vec::new();

    // Moore-Penrose conditions
    let mut mp = 0.0f64;
    for _ in 0..1000 {
        let j = Jac::from_fn(|_, _| rng.random_range(-1.0..1.0));
        let p = pinv(&j, 1e-12);
        let jp: SMatrix<f64, 3, 3> = j * p;
        let pj: SMatrix<f64, 6, 6> = p * j;
        mp = mp
            .max((j * p * j - j).amax())
            .max((p * j * p - p).amax())
            .max((jp - jp.transpose()).amax())
            .max((pj - pj.transpose()).amax());
    }
    if mp > 1e-9 {
        failures.push(format!("pseudo-inverse residual {mp:.1e}"));
    }

    // weighted Young inequality
    let mut young = 0;
    for _ in 0..1000 {
        let psi: f64 = rng.random_range(-5.0..5.0);
        let xi: f64 = rng.random_range(-5.0..5.0);
        let iota: f64 = rng.random_range(0.05..5.0);
        let u: f64 = rng.random_range(0.05..3.0);
        let r: f64 = rng.random_range(0.05..3.0);
        let lhs = psi.abs().powf(u) * xi.abs().powf(r);
        let rhs = u / (u + r) * iota * psi.abs().powf(u + r) + r / (u + r) * iota.powf(-u / r) * xi.abs().powf(u + r);
        if lhs > rhs * (1.0 + 1e-12) + 1e-300 {
            young += 1;
        }
    }
    // power-sum bounds
    let mut power = 0;
    for _ in 0..1000 {
        let n = rng.random_range(1..10usize);
        let z: Vec<f64> = (0..n).map(|_| rng.random_range(-10.0..10.0)).collect();
        let p: f64 = rng.random_range(0.01..=1.0);
        let sum: f64 = z.iter().map(|v| v.abs()).sum();
        let mid: f64 = z.iter().map(|v| v.abs().powf(p)).sum();
        let tol = 1e-12 * (1.0 + mid);
        if sum.powf(p) > mid + tol || mid > (n as f64).powf(1.0 - p) * sum.powf(p) + tol {
            power += 1;
        }
    }
    // weight-product bound
    let mut quad = 0;
    for _ in 0..1000 {
        let w = Vector3::from_fn(|_, _| rng.random_range(-3.0..3.0));
        let w_hat = Vector3::from_fn(|_, _| rng.random_range(-3.0..3.0));
        let d = w - w_hat;
        if d.dot(&w_hat) > -0.5 * d.dot(&d) + 0.5 * w.dot(&w) + 1e-12 {
            quad += 1;
        }
    }
    if young + power + quad > 0 {
        failures.push(format!("inequality violations young {young} power {power} weight {quad}"));
    }

    // T2 telescoping on a closed-loop record
    let spec = &canned()[0];
    let res = rbf_resources(world, t);
    let rec = run_servo(spec, &res).expect("servo");
    let mut tel = 0.0f64;
    {
        // T2_k must equal the norm of the running sum of one-step residuals;
        // the a-priori Jacobians come from replaying the online update.
        let mut net = t.est.clone();
        let p = FtsmParams::default();
        let g = servobench::rbf::ProposedGains { n1: p.n1, alpha2: p.alpha2, k3: p.k3 };
        let mut acc = Vector3::zeros();
        let dt = spec.dt;
        let mut j_prev = net.estimate_jacobian(&Vec6::from_column_slice(&rec.rows[0].r));
        for k in 1..rec.rows.len() {
            let (a, b) = (&rec.rows[k - 1], &rec.rows[k]);
            let r_prev = Vec6::from_column_slice(&a.r);
            let dr = Vec6::from_column_slice(&b.r) - r_prev;
            let ds = b.x() - a.x();
            acc += ds - j_prev * dr;
            tel = tel.max((acc.norm() - b.t2).abs());
            let v = (b.dx() - a.dx()) / dt;
            let e = v - j_prev * (dr / dt);
            net.online_update_proposed(&r_prev, &(dr / dt), &e, &b.s(), g, dt);
            j_prev = net.estimate_jacobian(&Vec6::from_column_slice(&b.r));
        }
    }
    if tel > 1e-10 {
        failures.push(format!("telescoping residual {tel:.1e}"));
    }

    // UKF and LKF agree on a linear measurement
    let cfg = BaselineConfig::default();
    let j0 = Jac::from_fn(|_, _| rng.random_range(-0.5..0.5));
    let mut lkf = LinearKfState::new(&j0, &cfg).unwrap();
    let mut ukf = UkfState::new(&j0, &cfg).unwrap();
    let a = Jac::from_fn(|_, _| rng.random_range(-1.0..1.0));
    let mut gap = 0.0f64;
    for _ in 0..100 {
        let dr = Vec6::from_fn(|_, _| rng.random_range(-0.05..0.05));
        let dx = a * dr;
        let l = lkf_update(&mut lkf, &dr, &dx).unwrap();
        let u = ukf_update(&mut ukf, &dr, &dx).unwrap();
        gap = gap.max((l.j_hat - u.j_hat).amax());
    }
    if gap > 1e-8 {
        failures.push(format!("ukf/lkf gap {gap:.1e}"));
    }

    // determinism and export round trip
    let again = run_servo(spec, &res).expect("servo");
    if again.rows != rec.rows || again.meta.lyapunov != rec.meta.lyapunov {
        failures.push("repeated run differs".into());
    }
    let dir = tempfile::tempdir().expect("tempdir");
    let (csv, json) = export_run(&rec, dir.path()).expect("export");
    let back = import_run(&csv, &json).expect("import");
    let mut rt = 0.0f64;
    for (x, y) in back.rows.iter().zip(&rec.rows) {
        let fx = [x.t, x.t1, x.t2, x.v].into_iter().chain(x.r).chain(x.x).chain(x.dx).chain(x.s);
        let fy = [y.t, y.t1, y.t2, y.v].into_iter().chain(y.r).chain(y.x).chain(y.dx).chain(y.s);
        rt = fx.zip(fy).map(|(a, b)| (a - b).abs()).fold(rt, f64::max);
    }
    if back.rows.len() != rec.rows.len() || rt > 1e-12 {
        failures.push(format!("round trip gap {rt:.1e}"));
    }

    verdict(
        failures.is_empty(),
        if failures.is_empty() {
            format!("pinv {mp:.1e}, telescoping {tel:.1e}, ukf/lkf {gap:.1e}, round trip {rt:.1e}")
        } else {
            failures.join("; ")
        },
    )
}

fn c10_guards(world: &World) -> Verdict {
    let res = Resources::new(world.clone());
    let mut spec = canned()[0].clone();
    spec.estimator = EstimatorSpec::Analytic;
    let mut still = spec.clone();
    still.r_desired = Some(still.r_initial);
    let rec = run_servo(&still, &res).expect("servo");
    let immediate = rec.meta.outcome == Outcome::Success
        && rec.meta.time_to_success == Some(0.0)
        && rec.meta.max_command == 0.0
        && rec.rows.iter().all(|r| r.r == still.r_initial);

    // one axis of the target equals the start, so that error starts at and
    // crosses exactly zero
    let x0 = world.features(&spec.r_initial());
    let mut xd = spec.target(world);
    xd[0] = x0[0];
    let mut crossing = spec.clone();
    crossing.r_desired = None;
    crossing.x_desired = Some(xd.into());
    let mut finite = true;
    for p in [FtsmParams::default(), FtsmParams::default().with_fixed_gamma(0.2)] {
        crossing.controller = ControllerSpec::Ftsm(p);
        let rec = run_servo(&crossing, &res).expect("servo");
        finite &= rec.meta.outcome != Outcome::Diverged && rec.meta.max_command.is_finite();
        finite &= rec.rows.iter().all(|r| r.s.iter().chain(&r.r).all(|v| v.is_finite()));
    }
    verdict(
        immediate && finite,
        format!("zero-error start held still: {immediate}; commands finite through exact zero error: {finite}"),
    )
}

fn main() {
    let world = World::ur5();
    let started = Instant::now();
    let trained = train(&world);
    let (c2, c3) = c2_c3_bench(&world, &trained);
    let (c7, c8) = c7_c8_exponents(&world);
    let results = [
        ("1 estimator accuracy", c1_estimator_accuracy(&world, &trained)),
        ("2 estimator benchmark ordering", c2),
        ("3 initial accuracy ordering", c3),
        ("4 finite-time certificate", c4_certificate(&world, &trained)),
        ("5 finite-time vs pid", c5_finite_time_vs_pid(&world, &trained)),
        ("6 reach-time bound", c6_reach_time(&world)),
        ("7 adaptive exponent", c7),
        ("8 small-exponent chatter", c8),
        ("9 property suites", c9_properties(&world, &trained)),
        ("10 guards", c10_guards(&world)),
    ];
    let mut failed = 0;
    for (name, v) in &results {
        println!("[{}] {name}: {}", if v.pass { "PASS" } else { "FAIL" }, v.detail);
        failed += (!v.pass) as usize;
    }
    println!("acceptance: {}/{} passed in {:.1}s", results.len() - failed, results.len(), started.elapsed().as_secs_f64());
    if failed > 0 {
        std::process::exit(1);
    }
}
