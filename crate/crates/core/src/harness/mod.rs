//! Data generation, closed-loop runs, benchmarks, comparison and export.

pub mod bench;
pub mod compare;
pub mod dataset;
pub mod export;
pub mod metrics;
pub mod plot;
pub mod servo;
pub mod spec;

pub use bench::{run_estimator_bench, BenchConfig, BenchRecord, BenchUpdate};
pub use compare::{compare, Report, RunSummary};
pub use dataset::{generate_dataset, Trajectory};
pub use export::{export_run, import_run};
pub use metrics::{metric_t1, metric_t2, MetricSeries};
pub use plot::emit_plots;
pub use servo::{run_servo, Outcome, RunRecord};
pub use spec::{ControllerSpec, EstimatorSpec, ExperimentSpec, Resources};
