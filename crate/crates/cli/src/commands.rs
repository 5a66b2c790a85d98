//! Subcommand implementations. Each command reads the experiment config,
//! runs the corresponding core routine, and writes CSV tables plus one JSON
//! summary into the output directory.

use std::fmt;
use std::path::Path;

use serde::Serialize;

use lpsim_core::analytic::{mean_response_aggregate, AnalyticError, RecycledLimit};
use lpsim_core::policy::PolicyKind;
use lpsim_core::refine::{build_transition, refine_trajectory, RefineResult};
use lpsim_core::simulate::{
    generate_jobs, mean_ci, run_replication, run_replication_jobs, SimError, SweepPoint,
};
use lpsim_core::workload::{exp_sample, SeedStreams, Stream};
use lpsim_core::{ArrivalSpec, SimConfig, SimStats};

use crate::config::{ConfigError, ExperimentConfig, Overrides};
use crate::output;

#[derive(Debug)]
pub enum CliError {
    /// Exit code 1: the configuration could not be parsed or validated.
    Config(String),
    /// Exit code 2: a validation gap exceeded the configured tolerance.
    Tolerance(String),
    /// Exit code 3: the run itself failed.
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 1,
            CliError::Tolerance(_) => 2,
            CliError::Runtime(_) => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "config error: {m}"),
            CliError::Tolerance(m) => write!(f, "tolerance failure: {m}"),
            CliError::Runtime(m) => write!(f, "runtime error: {m}"),
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Config(e.0)
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        CliError::Runtime(e.to_string())
    }
}

impl From<AnalyticError> for CliError {
    fn from(e: AnalyticError) -> Self {
        CliError::Runtime(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

impl From<lpsim_core::refine::RefineError> for CliError {
    fn from(e: lpsim_core::refine::RefineError) -> Self {
        CliError::Runtime(e.to_string())
    }
}

fn warn_if_unstable(cfg: &SimConfig) {
    if cfg.is_unstable() {
        eprintln!(
            "warning: offered load {:.3} >= 1; no steady state exists, \
             statistics describe the finite run only",
            cfg.offered_load().unwrap_or(f64::NAN)
        );
    }
}

/// Run every replication, spreading them across threads. Results come back
/// in replication order, so output is independent of scheduling.
fn run_replications(cfg: &SimConfig) -> Result<Vec<SimStats>, CliError> {
    let reps = cfg.replications.max(1);
    if reps == 1 {
        return Ok(vec![run_replication(cfg, 0)?]);
    }
    let threads = std::thread::available_parallelism().map_or(1, |n| n.get());
    let results: Vec<Result<SimStats, SimError>> = std::thread::scope(|scope| {
        let mut handles = Vec::with_capacity(reps as usize);
        for chunk in (0..reps).collect::<Vec<_>>().chunks(reps.div_ceil(threads as u64) as usize)
        {
            let chunk = chunk.to_vec();
            handles.push(scope.spawn(move || {
                chunk.iter().map(|&rep| run_replication(cfg, rep)).collect::<Vec<_>>()
            }));
        }
        handles.into_iter().flat_map(|h| h.join().expect("replication thread panicked")).collect()
    });
    results.into_iter().map(|r| r.map_err(CliError::from)).collect()
}

/// Aggregate replication statistics with 95% confidence half-widths.
#[derive(Debug, Serialize)]
struct Aggregate {
    replications: usize,
    mean_latency: f64,
    latency_ci: f64,
    median_latency: f64,
    mean_ttft: f64,
    ttft_ci: f64,
    median_ttft: f64,
    peak_memory: f64,
    peak_memory_ci: f64,
    preemptions: f64,
    completed: u64,
}

fn aggregate(stats: &[SimStats]) -> Aggregate {
    let pick = |f: fn(&SimStats) -> f64| stats.iter().map(f).collect::<Vec<_>>();
    let (mean_latency, latency_ci) = mean_ci(&pick(|s| s.mean_latency));
    let (median_latency, _) = mean_ci(&pick(|s| s.median_latency));
    let (mean_ttft, ttft_ci) = mean_ci(&pick(|s| s.mean_ttft));
    let (median_ttft, _) = mean_ci(&pick(|s| s.median_ttft));
    let (peak_memory, peak_memory_ci) = mean_ci(&pick(|s| s.peak_memory));
    let (preemptions, _) = mean_ci(&pick(|s| s.preemptions as f64));
    Aggregate {
        replications: stats.len(),
        mean_latency,
        latency_ci,
        median_latency,
        mean_ttft,
        ttft_ci,
        median_ttft,
        peak_memory,
        peak_memory_ci,
        preemptions,
        completed: stats.iter().map(|s| s.completed).sum(),
    }
}

#[derive(Debug, Serialize)]
struct SimulateSummary {
    command: &'static str,
    seed: u64,
    aggregate: Aggregate,
}

pub fn cmd_simulate(
    path: &Path,
    ov: &Overrides,
    workload: Option<&Path>,
    export_workload: Option<&Path>,
) -> Result<(), CliError> {
    let exp = ExperimentConfig::load(path, ov)?;
    let cfg = exp.sim_config()?;
    warn_if_unstable(&cfg);
    // a replayed workload is fixed across replications; only in-service
    // observation noise varies with the replication index
    let replay = match workload {
        Some(p) => Some(crate::workload_io::import(p, cfg.mode == lpsim_core::SimMode::Batch)?),
        None => None,
    };
    if let Some(out) = export_workload {
        let jobs = match &replay {
            Some(jobs) => jobs.clone(),
            None => generate_jobs(&cfg, 0)?,
        };
        crate::workload_io::export(out, &jobs)?;
    }
    let stats = match replay {
        Some(jobs) => {
            let reps = cfg.replications.max(1);
            (0..reps)
                .map(|rep| run_replication_jobs(&cfg, jobs.clone(), rep))
                .collect::<Result<Vec<_>, _>>()?
        }
        None => run_replications(&cfg)?,
    };

    let dir = exp.output_dir();
    output::ensure_dir(&dir)?;
    output::write_per_job(&dir.join("per_job.csv"), &stats)?;
    let agg = aggregate(&stats);
    println!(
        "{:>12} {:>12} {:>12} {:>12} {:>12} {:>12}",
        "completed", "mean_lat", "median_lat", "mean_ttft", "peak_mem", "preempt"
    );
    println!(
        "{:>12} {:>12.4} {:>12.4} {:>12.4} {:>12.4} {:>12.1}",
        agg.completed, agg.mean_latency, agg.median_latency, agg.mean_ttft, agg.peak_memory,
        agg.preemptions
    );
    let summary = SimulateSummary { command: "simulate", seed: cfg.seed, aggregate: agg };
    output::write_json(&dir.join("summary.json"), &summary)?;
    Ok(())
}

#[derive(Debug, Serialize)]
struct SweepSummary {
    command: &'static str,
    seed: u64,
    points: usize,
}

pub fn cmd_sweep(path: &Path, ov: &Overrides) -> Result<(), CliError> {
    let exp = ExperimentConfig::load(path, ov)?;
    let base = exp.sim_config()?;
    let section = exp.sweep.clone().unwrap_or(crate::config::SweepSection {
        lambdas: Vec::new(),
        cs: Vec::new(),
    });

    let mut points: Vec<SweepPoint> = Vec::new();
    for cfg in sweep_grid(&base, &section.lambdas, &section.cs) {
        warn_if_unstable(&cfg.config);
        let stats = run_replications(&cfg.config)?;
        points.push(SweepPoint {
            lambda: cfg.lambda,
            c: cfg.c,
            unstable: cfg.config.is_unstable(),
            stats,
        });
    }

    let dir = exp.output_dir();
    output::ensure_dir(&dir)?;
    let rows: Vec<output::SweepRow> = points
        .iter()
        .map(|p| {
            let agg = aggregate(&p.stats);
            output::SweepRow {
                lambda: p.lambda,
                c: p.c,
                unstable: p.unstable,
                replications: agg.replications,
                mean_latency: agg.mean_latency,
                latency_ci: agg.latency_ci,
                median_latency: agg.median_latency,
                mean_ttft: agg.mean_ttft,
                ttft_ci: agg.ttft_ci,
                median_ttft: agg.median_ttft,
                peak_memory: agg.peak_memory,
                peak_memory_ci: agg.peak_memory_ci,
                preemptions: agg.preemptions,
            }
        })
        .collect();
    output::write_sweep(&dir.join("sweep.csv"), &rows)?;
    let axis = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |v| format!("{v:.3}"));
    for row in &rows {
        println!(
            "lambda={} c={} unstable={} mean_lat={:.4}±{:.4} mean_ttft={:.4} peak_mem={:.4}",
            axis(row.lambda),
            axis(row.c),
            row.unstable,
            row.mean_latency,
            row.latency_ci,
            row.mean_ttft,
            row.peak_memory
        );
    }
    let summary = SweepSummary { command: "sweep", seed: base.seed, points: rows.len() };
    output::write_json(&dir.join("summary.json"), &summary)?;
    Ok(())
}

struct GridConfig {
    lambda: Option<f64>,
    c: Option<f64>,
    config: SimConfig,
}

/// Expand the (lambda, c) grid over a base config. Empty axes keep the base
/// value; lambda applies to Poisson arrivals, c to the limited-preemption
/// policy.
fn sweep_grid(base: &SimConfig, lambdas: &[f64], cs: &[f64]) -> Vec<GridConfig> {
    let lambda_axis: Vec<Option<f64>> = if lambdas.is_empty() {
        vec![None]
    } else {
        lambdas.iter().copied().map(Some).collect()
    };
    let c_axis: Vec<Option<f64>> =
        if cs.is_empty() { vec![None] } else { cs.iter().copied().map(Some).collect() };
    let mut out = Vec::with_capacity(lambda_axis.len() * c_axis.len());
    for &lambda in &lambda_axis {
        for &c in &c_axis {
            let mut cfg = base.clone();
            if let (Some(l), ArrivalSpec::Poisson { rate, .. }) = (lambda, &mut cfg.arrival) {
                *rate = l;
            }
            if let (Some(c), PolicyKind::SprptLp { c: ref mut pc }) = (c, &mut cfg.policy.kind) {
                *pc = c;
            }
            out.push(GridConfig { lambda, c, config: cfg });
        }
    }
    out
}

#[derive(Debug, Serialize)]
struct ValidateSummary {
    command: &'static str,
    seed: u64,
    tolerance: f64,
    worst_gap: f64,
    passed: bool,
}

pub fn cmd_validate(path: &Path, ov: &Overrides) -> Result<(), CliError> {
    let exp = ExperimentConfig::load(path, ov)?;
    let base = exp.sim_config()?;
    let section = exp.validate.clone().unwrap_or_default();
    let pair = exp.density_pair(section.analytic_predictor)?;
    let quad = exp.quadrature();
    let limit: RecycledLimit = section.recycled_limit.into();

    let base_c = exp.policy_c()?;
    let lambdas = if section.lambdas.is_empty() {
        match &base.arrival {
            ArrivalSpec::Poisson { rate, .. } => vec![*rate],
            ArrivalSpec::Burst { .. } => {
                return Err(CliError::Config(
                    "validation compares steady-state means; use poisson arrivals".into(),
                ))
            }
        }
    } else {
        section.lambdas.clone()
    };
    let cs = if section.cs.is_empty() { vec![base_c] } else { section.cs.clone() };

    let mut rows: Vec<output::ValidateRow> = Vec::new();
    for cfg in sweep_grid(&base, &lambdas, &cs) {
        let lambda = cfg.lambda.expect("lambda axis is always populated here");
        let c = cfg.c.unwrap_or(base_c);
        let mut sim_cfg = cfg.config;
        // the grid only rewrites c for the sprpt_lp policy; pin it for the
        // fixed members of the family too
        sim_cfg.policy.kind = match sim_cfg.policy.kind {
            PolicyKind::SprptLp { .. } => PolicyKind::SprptLp { c },
            other => other,
        };
        warn_if_unstable(&sim_cfg);
        let stats = run_replications(&sim_cfg)?;
        let (sim_mean, sim_ci) = mean_ci(&stats.iter().map(|s| s.mean_latency).collect::<Vec<_>>());
        let analytic = mean_response_aggregate(c, lambda, &pair, &quad, limit)?.mean;
        let gap = (sim_mean - analytic).abs() / analytic;
        rows.push(output::ValidateRow {
            lambda,
            c,
            sim_mean,
            sim_ci,
            analytic,
            gap,
            within_tolerance: gap <= section.tolerance,
        });
    }

    let dir = exp.output_dir();
    output::ensure_dir(&dir)?;
    output::write_validate(&dir.join("validate.csv"), &rows)?;
    println!(
        "{:>8} {:>6} {:>12} {:>10} {:>12} {:>8} {:>6}",
        "lambda", "c", "sim_mean", "ci", "analytic", "gap", "ok"
    );
    for row in &rows {
        println!(
            "{:>8.3} {:>6.3} {:>12.4} {:>10.4} {:>12.4} {:>7.2}% {:>6}",
            row.lambda,
            row.c,
            row.sim_mean,
            row.sim_ci,
            row.analytic,
            100.0 * row.gap,
            row.within_tolerance
        );
    }
    let worst_gap = rows.iter().map(|r| r.gap).fold(0.0, f64::max);
    let passed = rows.iter().all(|r| r.within_tolerance);
    let summary = ValidateSummary {
        command: "validate",
        seed: base.seed,
        tolerance: section.tolerance,
        worst_gap,
        passed,
    };
    output::write_json(&dir.join("summary.json"), &summary)?;
    if !passed {
        let offending: Vec<String> = rows
            .iter()
            .filter(|r| !r.within_tolerance)
            .map(|r| {
                format!(
                    "lambda={} c={} sim={:.4} analytic={:.4} gap={:.2}%",
                    r.lambda, r.c, r.sim_mean, r.analytic, 100.0 * r.gap
                )
            })
            .collect();
        return Err(CliError::Tolerance(format!(
            "{} of {} grid points exceed tolerance {}: {}",
            offending.len(),
            rows.len(),
            section.tolerance,
            offending.join("; ")
        )));
    }
    Ok(())
}

#[derive(Debug, Serialize)]
struct RefineSummary {
    command: &'static str,
    seed: u64,
    ensemble_size: u64,
    raw_mae: f64,
    refined_mae: f64,
    improvement: f64,
}

pub fn cmd_refine(path: &Path, ov: &Overrides) -> Result<(), CliError> {
    let exp = ExperimentConfig::load(path, ov)?;
    let section = exp.refine.clone().unwrap_or_default();
    let bins = exp
        .bins()?
        .ok_or_else(|| ConfigError("refine needs a [bins] section".into()))?;
    let model = exp
        .observation_model()?
        .ok_or_else(|| ConfigError("refine needs an [observation] section".into()))?;
    let transition = build_transition(&bins).map_err(|e| CliError::Runtime(e.to_string()))?;

    let streams = SeedStreams::new(exp.simulation.seed);
    let mut size_rng = streams.rng(Stream::Sizes, 0);
    let lo = section.clip_lo.max(1) as f64;
    let hi = section.clip_hi as f64;
    let sizes: Vec<u64> = (0..section.ensemble_size)
        .map(|_| (exp_sample(1.0, &mut size_rng) * section.size_mean).clamp(lo, hi) as u64)
        .collect();

    let mut obs_rng = streams.rng(Stream::Observations, 0);
    let mut results: Vec<RefineResult> = Vec::with_capacity(sizes.len());
    for &size in &sizes {
        results.push(refine_trajectory(size, &bins, &transition, &model, &mut obs_rng)?);
    }
    let n = results.len().max(1) as f64;
    let raw_mae = results.iter().map(|r| r.raw_mae).sum::<f64>() / n;
    let refined_mae = results.iter().map(|r| r.refined_mae).sum::<f64>() / n;

    let dir = exp.output_dir();
    output::ensure_dir(&dir)?;
    output::write_refine(
        &dir.join("refine.csv"),
        &results[..results.len().min(section.emit_trajectories as usize)],
    )?;
    println!(
        "ensemble={} raw_mae={:.4} refined_mae={:.4}",
        sizes.len(),
        raw_mae,
        refined_mae
    );
    let summary = RefineSummary {
        command: "refine",
        seed: exp.simulation.seed,
        ensemble_size: section.ensemble_size,
        raw_mae,
        refined_mae,
        improvement: if refined_mae > 0.0 { raw_mae / refined_mae } else { f64::INFINITY },
    };
    output::write_json(&dir.join("summary.json"), &summary)?;
    Ok(())
}

#[derive(Debug, Serialize)]
struct AnalyzeSummary {
    command: &'static str,
    points: usize,
    curve: bool,
}

pub fn cmd_analyze(path: &Path, ov: &Overrides) -> Result<(), CliError> {
    let exp = ExperimentConfig::load(path, ov)?;
    let section = exp.analyze.clone().unwrap_or(crate::config::AnalyzeSection {
        lambdas: Vec::new(),
        cs: Vec::new(),
        curve: false,
        recycled_limit: Default::default(),
    });
    let pair = exp.density_pair(None)?;
    let quad = exp.quadrature();
    let limit: RecycledLimit = section.recycled_limit.into();

    let base_lambda = match exp.arrival_spec()? {
        ArrivalSpec::Poisson { rate, .. } => rate,
        ArrivalSpec::Burst { .. } => {
            return Err(CliError::Config(
                "the closed form needs a poisson arrival rate".into(),
            ))
        }
    };
    let base_c = exp.policy_c()?;
    let lambdas =
        if section.lambdas.is_empty() { vec![base_lambda] } else { section.lambdas.clone() };
    let cs = if section.cs.is_empty() { vec![base_c] } else { section.cs.clone() };

    let mut rows: Vec<output::AnalyzeRow> = Vec::new();
    let mut curve_rows: Vec<output::CurveRow> = Vec::new();
    for &lambda in &lambdas {
        for &c in &cs {
            let curve = mean_response_aggregate(c, lambda, &pair, &quad, limit)?;
            rows.push(output::AnalyzeRow { lambda, c, mean_response: curve.mean });
            if section.curve {
                for &(x, et) in &curve.points {
                    curve_rows.push(output::CurveRow { lambda, c, x, mean_response: et });
                }
            }
        }
    }

    let dir = exp.output_dir();
    output::ensure_dir(&dir)?;
    output::write_analyze(&dir.join("analyze.csv"), &rows)?;
    if section.curve {
        output::write_curve(&dir.join("analyze_curve.csv"), &curve_rows)?;
    }
    for row in &rows {
        println!("lambda={:.3} c={:.3} mean_response={:.6}", row.lambda, row.c, row.mean_response);
    }
    let summary = AnalyzeSummary { command: "analyze", points: rows.len(), curve: section.curve };
    output::write_json(&dir.join("summary.json"), &summary)?;
    Ok(())
}
