//! Batch runs and ranking across controller/estimator pairs.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::harness::metrics::{mean, median, oscillation};
use crate::harness::servo::{run_servo, Outcome, RunRecord};
use crate::harness::spec::{ExperimentSpec, Resources};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub id: String,
    pub estimator: String,
    pub controller: String,
    pub outcome: Outcome,
    pub time_to_success: Option<f64>,
    pub final_error: f64,
    /// Largest error after the first zero crossing.
    pub overshoot: f64,
    pub sign_changes: usize,
    pub mean_t1: f64,
    pub final_t2: f64,
    pub sgpfs_violation: Option<f64>,
    pub workspace_fault: bool,
    pub steps: usize,
    pub wall_time_s: f64,
}

impl RunSummary {
    pub fn of(rec: &RunRecord) -> Self {
        let osc = oscillation(&rec.errors());
        let t1: Vec<f64> = rec.rows.iter().skip(1).map(|r| r.t1).collect();
        Self {
            id: rec.meta.id.clone(),
            estimator: rec.meta.spec.estimator.name().into(),
            controller: rec.meta.spec.controller.name().into(),
            outcome: rec.meta.outcome,
            time_to_success: rec.meta.time_to_success,
            final_error: rec.meta.final_error,
            overshoot: osc.amplitude,
            sign_changes: osc.sign_changes,
            mean_t1: if t1.is_empty() { 0.0 } else { mean(&t1) },
            final_t2: rec.rows.last().map_or(0.0, |r| r.t2),
            sgpfs_violation: rec.meta.sgpfs_violation,
            workspace_fault: rec.meta.flags.workspace_fault,
            steps: rec.rows.len(),
            wall_time_s: rec.meta.wall_time_s,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupStats {
    pub controller: String,
    pub estimator: String,
    pub runs: usize,
    pub successes: usize,
    pub mean_time_to_success: Option<f64>,
    pub median_time_to_success: Option<f64>,
    pub mean_final_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub runs: Vec<RunSummary>,
    pub groups: Vec<GroupStats>,
    /// Run ids, fastest success first; failures last by final error.
    pub ranking: Vec<String>,
}

/// Runs every spec in parallel and summarizes. Records come back in input
/// order.
pub fn compare(jobs: &[(ExperimentSpec, Resources)]) -> Result<(Report, Vec<RunRecord>)> {
    if jobs.is_empty() {
        return invalid("compare needs at least one experiment");
    }
    let records: Vec<RunRecord> =
        jobs.par_iter().map(|(spec, res)| run_servo(spec, res)).collect::<Result<Vec<_>>>()?;
    Ok((summarize(&records), records))
}

pub fn summarize(records: &[RunRecord]) -> Report {
    let runs: Vec<RunSummary> = records.iter().map(RunSummary::of).collect();

    let mut keys: Vec<(String, String)> = Vec::new();
    for r in &runs {
        let key = (r.controller.clone(), r.estimator.clone());
        if !keys.contains(&key) {
            keys.push(key);
        }
    }
    let groups = keys
        .into_iter()
        .map(|(controller, estimator)| {
            let members: Vec<&RunSummary> =
                runs.iter().filter(|r| r.controller == controller && r.estimator == estimator).collect();
            let times: Vec<f64> = members.iter().filter_map(|r| r.time_to_success).collect();
            let errs: Vec<f64> = members.iter().map(|r| r.final_error).collect();
            GroupStats {
                runs: members.len(),
                successes: times.len(),
                mean_time_to_success: (!times.is_empty()).then(|| mean(&times)),
                median_time_to_success: (!times.is_empty()).then(|| median(&times)),
                mean_final_error: mean(&errs),
                controller,
                estimator,
            }
        })
        .collect();

    let mut order: Vec<&RunSummary> = runs.iter().collect();
    order.sort_by(|a, b| match (a.time_to_success, b.time_to_success) {
        (Some(x), Some(y)) => x.total_cmp(&y),
        (Some(_), None) => std::cmp::Ordering::Less,
        (None, Some(_)) => std::cmp::Ordering::Greater,
        (None, None) => a.final_error.total_cmp(&b.final_error),
    });
    let ranking = order.into_iter().map(|r| r.id.clone()).collect();
    Report { runs, groups, ranking }
}
