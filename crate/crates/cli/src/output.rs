//! CSV and JSON writers. Column orders are fixed by the row structs, so
//! repeated runs of the same config and seed produce byte-identical files.

use std::fs::File;
use std::io::Write as _;
use std::path::Path;

use serde::Serialize;

use lpsim_core::refine::RefineResult;
use lpsim_core::SimStats;

use crate::commands::CliError;

pub fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir)?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut file = File::create(path)?;
    serde_json::to_writer_pretty(&mut file, value)?;
    file.write_all(b"\n")?;
    Ok(())
}

#[derive(Debug, Serialize)]
struct PerJobRow {
    replication: u64,
    job_id: u64,
    latency: f64,
    ttft: f64,
}

/// One row per completed job per replication, in (replication, id) order.
pub fn write_per_job(path: &Path, stats: &[SimStats]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path)?;
    for (rep, s) in stats.iter().enumerate() {
        for record in &s.per_job {
            w.serialize(PerJobRow {
                replication: rep as u64,
                job_id: record.id,
                latency: record.latency,
                ttft: record.ttft,
            })?;
        }
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Serialize)]
pub struct SweepRow {
    pub lambda: Option<f64>,
    pub c: Option<f64>,
    pub unstable: bool,
    pub replications: usize,
    pub mean_latency: f64,
    pub latency_ci: f64,
    pub median_latency: f64,
    pub mean_ttft: f64,
    pub ttft_ci: f64,
    pub median_ttft: f64,
    pub peak_memory: f64,
    pub peak_memory_ci: f64,
    pub preemptions: f64,
}

pub fn write_sweep(path: &Path, rows: &[SweepRow]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path)?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Serialize)]
pub struct ValidateRow {
    pub lambda: f64,
    pub c: f64,
    pub sim_mean: f64,
    pub sim_ci: f64,
    pub analytic: f64,
    pub gap: f64,
    pub within_tolerance: bool,
}

pub fn write_validate(path: &Path, rows: &[ValidateRow]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path)?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Serialize)]
struct RefineRow {
    trajectory: u64,
    t: u64,
    true_remaining: f64,
    raw_estimate: f64,
    refined_estimate: f64,
}

pub fn write_refine(path: &Path, results: &[RefineResult]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path)?;
    for (i, result) in results.iter().enumerate() {
        for step in &result.steps {
            w.serialize(RefineRow {
                trajectory: i as u64,
                t: step.t,
                true_remaining: step.true_remaining,
                raw_estimate: step.raw_estimate,
                refined_estimate: step.refined_estimate,
            })?;
        }
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Serialize)]
pub struct AnalyzeRow {
    pub lambda: f64,
    pub c: f64,
    pub mean_response: f64,
}

pub fn write_analyze(path: &Path, rows: &[AnalyzeRow]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path)?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Serialize)]
pub struct CurveRow {
    pub lambda: f64,
    pub c: f64,
    pub x: f64,
    pub mean_response: f64,
}

pub fn write_curve(path: &Path, rows: &[CurveRow]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path)?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}
