//! `servobench` command-line front end.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use servobench::harness::bench::{run_estimator_bench, BenchConfig};
use servobench::harness::compare::{compare, summarize};
use servobench::harness::dataset::{generate_dataset, Trajectory};
use servobench::harness::export::{export_bench, export_run, import_dir, read_json, write_json};
use servobench::harness::plot::emit_plots;
use servobench::harness::servo::{run_servo, Outcome};
use servobench::harness::spec::{ExperimentSpec, Resources};
use servobench::rbf::{offline_train, RbfJacobianEstimator, TrainConfig};
use servobench::sim::World;
use servobench::Error;

#[derive(Parser)]
#[command(name = "servobench", version, about = "Uncalibrated visual servoing simulation bench")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample random joint motion into a training CSV.
    GenData {
        /// World config JSON.
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit the six column networks offline.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 64)]
        neurons: usize,
        #[arg(long, default_value_t = 60)]
        epochs: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Run the open-loop estimator benchmark.
    BenchEst {
        /// World config JSON.
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        model: PathBuf,
        /// Benchmark settings JSON; defaults when absent.
        #[arg(long)]
        bench: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run one closed-loop experiment.
    Servo {
        #[arg(long)]
        spec: PathBuf,
        /// Trained estimator, overriding the spec's model path.
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run every spec in a directory and rank them.
    Compare {
        #[arg(long)]
        specs: PathBuf,
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Also export each run here.
        #[arg(long)]
        runs: Option<PathBuf>,
    },
    /// Render plots for exported runs.
    Report {
        #[arg(long)]
        runs: PathBuf,
        #[arg(long)]
        plots: PathBuf,
    },
}

/// Failure classes mapped to exit codes.
enum Failure {
    Validation(String),
    Runtime(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        if e.is_validation() {
            Failure::Validation(e.to_string())
        } else {
            Failure::Runtime(e.to_string())
        }
    }
}

fn spec_dir(path: &Path) -> PathBuf {
    path.parent().map(Path::to_path_buf).unwrap_or_default()
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::GenData { config, n, seed, out } => {
            let world = World::load(&config)?;
            let traj = generate_dataset(&world, n, seed)?;
            traj.write_csv(&out)?;
            println!("wrote {} rows to {}", traj.len(), out.display());
        }
        Command::Train { data, out, neurons, epochs, seed } => {
            if neurons == 0 || epochs == 0 {
                return Err(Failure::Validation("neurons and epochs must be positive".into()));
            }
            let samples = Trajectory::read_csv(&data)?.samples();
            let cfg = TrainConfig { neurons_per_net: [neurons; 6], epochs, seed, ..TrainConfig::default() };
            let trained = offline_train(&samples, &cfg)?;
            trained.estimator.save(&out)?;
            let r = &trained.report;
            println!(
                "trained on {} samples, holdout {}: train loss {:.4e}, holdout loss {:.4e}",
                r.n_train, r.n_holdout, r.train_loss, r.holdout_loss
            );
        }
        Command::BenchEst { config, model, bench, out } => {
            let world = World::load(&config)?;
            let est = RbfJacobianEstimator::load(&model)?;
            let cfg: BenchConfig = match bench {
                Some(p) => read_json(&p)?,
                None => BenchConfig::default(),
            };
            let rec = run_estimator_bench(&world, &est, &cfg)?;
            let (csv, _) = export_bench(&rec, &out)?;
            for s in &rec.series {
                println!("{:>4}: final T2 {:.4e}, mean T1 (first 20) {:.4e}", s.name, s.final_t2(), s.early_t1(20));
            }
            if let Some(s) = rec.series.iter().find(|s| s.diverged_at.is_some()) {
                return Err(Failure::Runtime(format!("{} diverged at step {:?}", s.name, s.diverged_at)));
            }
            println!("wrote {}", csv.display());
        }
        Command::Servo { spec, model, out } => {
            let s = ExperimentSpec::load(&spec)?;
            let res = Resources::load(&s, &spec_dir(&spec), model.as_deref())?;
            let rec = run_servo(&s, &res)?;
            let (csv, _) = export_run(&rec, &out)?;
            let m = &rec.meta;
            println!(
                "{}: {:?}, time to success {}, final error {:.3e}, wrote {}",
                m.id,
                m.outcome,
                m.time_to_success.map_or("none".into(), |t| format!("{t:.2}s")),
                m.final_error,
                csv.display()
            );
            if m.outcome == Outcome::Diverged {
                return Err(Failure::Runtime(format!("{}: estimate or command became non-finite", m.id)));
            }
        }
        Command::Compare { specs, model, out, runs } => {
            let mut files: Vec<PathBuf> = std::fs::read_dir(&specs)
                .map_err(|e| Failure::Runtime(format!("{}: {e}", specs.display())))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.extension().is_some_and(|x| x == "json"))
                .collect();
            files.sort();
            let mut jobs = Vec::new();
            for f in &files {
                let s = ExperimentSpec::load(f)?;
                let res = Resources::load(&s, &spec_dir(f), model.as_deref())?;
                jobs.push((s, res));
            }
            let (report, records) = compare(&jobs)?;
            write_json(&out, &report)?;
            if let Some(dir) = runs {
                for r in &records {
                    export_run(r, &dir)?;
                }
            }
            for id in &report.ranking {
                let r = report.runs.iter().find(|r| &r.id == id).expect("ranked run exists");
                println!(
                    "{:<16} {:>5}/{:<8} {:?} {}",
                    r.id,
                    r.controller,
                    r.estimator,
                    r.outcome,
                    r.time_to_success.map_or("-".into(), |t| format!("{t:.2}s"))
                );
            }
            if records.iter().any(|r| r.meta.outcome == Outcome::Diverged) {
                return Err(Failure::Runtime("at least one run diverged".into()));
            }
        }
        Command::Report { runs, plots } => {
            let records = import_dir(&runs)?;
            if records.is_empty() {
                return Err(Failure::Validation(format!("{}: no exported runs found", runs.display())));
            }
            let mut n = 0;
            for r in &records {
                n += emit_plots(r, &plots)?.len();
            }
            write_json(&plots.join("summary.json"), &summarize(&records))?;
            println!("wrote {n} plots for {} runs to {}", records.len(), plots.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Validation(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(3)
        }
    }
}
