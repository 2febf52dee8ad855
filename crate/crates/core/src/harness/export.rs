//! CSV/JSON run files.

use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::harness::bench::BenchRecord;
use crate::harness::servo::{RunMeta, RunRecord, StepRow};

pub const RUN_HEADER: [&str; 19] = [
    "t", "r1", "r2", "r3", "r4", "r5", "r6", "x1", "x2", "x3", "dx1", "dx2", "dx3", "s1", "s2", "s3", "T1", "T2", "V",
];

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|source| Error::Json { path: path.into(), source })?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|source| Error::Json { path: path.into(), source })
}

fn row_values(r: &StepRow) -> Vec<f64> {
    let mut v = Vec::with_capacity(RUN_HEADER.len());
    v.push(r.t);
    v.extend(r.r);
    v.extend(r.x);
    v.extend(r.dx);
    v.extend(r.s);
    v.extend([r.t1, r.t2, r.v]);
    v
}

pub fn write_run_csv(path: &Path, rows: &[StepRow]) -> Result<()> {
    let csv_err = |source| Error::Csv { path: path.into(), source };
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(RUN_HEADER).map_err(csv_err)?;
    for r in rows {
        w.write_record(row_values(r).iter().map(|v| v.to_string())).map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_run_csv(path: &Path) -> Result<Vec<StepRow>> {
    let csv_err = |source| Error::Csv { path: path.into(), source };
    let mut rd = csv::Reader::from_path(path).map_err(csv_err)?;
    let header: Vec<String> = rd.headers().map_err(csv_err)?.iter().map(str::to_string).collect();
    if header != RUN_HEADER {
        return invalid(format!("{}: unexpected run header", path.display()));
    }
    let mut rows = Vec::new();
    for rec in rd.records() {
        let rec = rec.map_err(csv_err)?;
        let v: Vec<f64> = rec
            .iter()
            .map(str::parse::<f64>)
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Invalid(format!("{}: {e}", path.display())))?;
        rows.push(StepRow {
            t: v[0],
            r: std::array::from_fn(|i| v[1 + i]),
            x: std::array::from_fn(|i| v[7 + i]),
            dx: std::array::from_fn(|i| v[10 + i]),
            s: std::array::from_fn(|i| v[13 + i]),
            t1: v[16],
            t2: v[17],
            v: v[18],
        });
    }
    Ok(rows)
}

/// Writes `<dir>/<id>.csv` and `<dir>/<id>.json`.
pub fn export_run(record: &RunRecord, dir: &Path) -> Result<(PathBuf, PathBuf)> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let csv = dir.join(format!("{}.csv", record.meta.id));
    let json = dir.join(format!("{}.json", record.meta.id));
    write_run_csv(&csv, &record.rows)?;
    write_json(&json, &record.meta)?;
    Ok((csv, json))
}

pub fn import_run(csv: &Path, json: &Path) -> Result<RunRecord> {
    let meta: RunMeta = read_json(json)?;
    let rows = read_run_csv(csv)?;
    Ok(RunRecord { rows, meta })
}

/// Every `<id>.json` in `dir` with a sibling `<id>.csv`, sorted by name.
pub fn import_dir(dir: &Path) -> Result<Vec<RunRecord>> {
    let mut out = Vec::new();
    let mut entries: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    entries.sort();
    for json in entries {
        let csv = json.with_extension("csv");
        if csv.exists() {
            out.push(import_run(&csv, &json)?);
        }
    }
    Ok(out)
}

/// Writes the per-step T1/T2 series as `bench.csv` and the full record as
/// `bench.json`.
pub fn export_bench(record: &BenchRecord, dir: &Path) -> Result<(PathBuf, PathBuf)> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let csv = dir.join("bench.csv");
    let json = dir.join("bench.json");
    let csv_err = |source| Error::Csv { path: csv.clone(), source };
    let mut w = csv::Writer::from_path(&csv).map_err(csv_err)?;
    let mut header = vec!["t".to_string()];
    for s in &record.series {
        header.push(format!("T1_{}", s.name));
        header.push(format!("T2_{}", s.name));
    }
    w.write_record(&header).map_err(csv_err)?;
    for (k, t) in record.t.iter().enumerate() {
        let mut rec = vec![t.to_string()];
        for s in &record.series {
            rec.push(s.t1.get(k).map_or(String::new(), f64::to_string));
            rec.push(s.t2.get(k).map_or(String::new(), f64::to_string));
        }
        w.write_record(&rec).map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::io(&csv, e))?;
    write_json(&json, record)?;
    Ok((csv, json))
}
