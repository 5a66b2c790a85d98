//! Workload export/import as CSV for replay.
//!
//! Columns: `id,arrival,size,prediction`. For trajectory-based workloads
//! the prediction field holds the per-unit refined predictions joined with
//! `;`; otherwise it is the scalar initial prediction. Belief-based
//! workloads have no flat representation and are rejected.

use std::path::Path;

use serde::{Deserialize, Serialize};

use lpsim_core::domain::{Job, PredictionSpec};

use crate::commands::CliError;

#[derive(Debug, Serialize, Deserialize)]
struct WorkloadRow {
    id: u64,
    arrival: f64,
    size: f64,
    prediction: String,
}

pub fn export(path: &Path, jobs: &[Job]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path)?;
    for job in jobs {
        if job.prediction.bin_belief.is_some() {
            return Err(CliError::Runtime(
                "belief-based workloads have no flat CSV representation".into(),
            ));
        }
        let prediction = match &job.prediction.trajectory {
            Some(t) => t
                .iter()
                .map(|v| format!("{v}"))
                .collect::<Vec<_>>()
                .join(";"),
            None => format!("{}", job.prediction.initial),
        };
        w.serialize(WorkloadRow {
            id: job.id,
            arrival: job.arrival_time,
            size: job.size,
            prediction,
        })?;
    }
    w.flush()?;
    Ok(())
}

/// Read a workload back. `integer_sizes` rounds sizes up to whole tokens
/// (batch mode), matching the generator's convention.
pub fn import(path: &Path, integer_sizes: bool) -> Result<Vec<Job>, CliError> {
    let mut r = csv::Reader::from_path(path)
        .map_err(|e| CliError::Config(format!("cannot read workload {}: {e}", path.display())))?;
    let mut jobs = Vec::new();
    let mut last_arrival = f64::NEG_INFINITY;
    for (line, row) in r.deserialize::<WorkloadRow>().enumerate() {
        let row = row.map_err(|e| {
            CliError::Config(format!("workload {} row {}: {e}", path.display(), line + 1))
        })?;
        let bad = |msg: String| CliError::Config(format!("workload row {}: {msg}", line + 1));
        if !(row.size > 0.0) {
            return Err(bad(format!("size must be positive, got {}", row.size)));
        }
        if row.arrival < last_arrival {
            return Err(bad("rows must be sorted by arrival time".into()));
        }
        last_arrival = row.arrival;
        let mut size = row.size;
        if integer_sizes {
            size = size.ceil().max(1.0);
        }
        let prediction = if row.prediction.contains(';') {
            let trajectory: Vec<f64> = row
                .prediction
                .split(';')
                .map(|v| v.trim().parse::<f64>())
                .collect::<Result<_, _>>()
                .map_err(|e| bad(format!("bad trajectory entry: {e}")))?;
            if trajectory.is_empty() {
                return Err(bad("empty trajectory".into()));
            }
            PredictionSpec {
                initial: trajectory[0],
                trajectory: Some(trajectory),
                bin_belief: None,
            }
        } else {
            let r: f64 = row
                .prediction
                .trim()
                .parse()
                .map_err(|e| bad(format!("bad prediction: {e}")))?;
            PredictionSpec::fixed(r)
        };
        jobs.push(Job::new(row.id, row.arrival, size, prediction));
    }
    Ok(jobs)
}
