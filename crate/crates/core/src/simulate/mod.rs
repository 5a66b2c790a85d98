//! Discrete-event engines: a continuous preemptive M/G/1 and an
//! iteration-level token-batch model with a memory budget.
//!
//! Both engines are deterministic given a configuration and master seed.
//! Memory is modeled as proportional to job age: the amount of service each
//! started, uncompleted job has received.

use alloc::vec::Vec;
use core::fmt;

use crate::domain::{DomainError, Job, PredictionSpec, SimStats};
use crate::math;
use crate::policy::RankPolicy;
use crate::refine::{ObservationModel, RefineError};
use crate::workload::{
    gen_arrivals, sample_prediction, sample_service, ArrivalSpec, PredictorModel, SeedStreams,
    ServiceDist, Stream, WorkloadError,
};
use crate::domain::Bins;

mod batch;
mod continuous;

pub use batch::{run_batch, run_batch_jobs, run_batch_traced};
pub use continuous::{run_continuous, run_continuous_jobs, run_continuous_traced};

/// Memory samples taken at every engine event.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct MemoryTrace {
    /// `(time, total memory)` at each event, in time order.
    pub samples: Vec<(f64, f64)>,
    pub peak: f64,
}

impl MemoryTrace {
    pub fn record(&mut self, t: f64, memory: f64) {
        self.samples.push((t, memory));
        if memory > self.peak {
            self.peak = memory;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SimMode {
    /// Real-valued service, single server, preemption at event boundaries.
    Continuous,
    /// Integer token sizes, one token per scheduled job per iteration,
    /// memory-budgeted batch.
    Batch,
}

/// What happens to an evicted job's memory in batch mode.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PreemptionCost {
    /// Evicted jobs keep their memory resident.
    Hold,
    /// Evicted jobs free their memory and must rebuild it at
    /// `recompute_rate` service units per iteration before producing again.
    Discard { recompute_rate: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub mode: SimMode,
    pub arrival: ArrivalSpec,
    pub service: ServiceDist,
    pub predictor: PredictorModel,
    pub policy: RankPolicy,
    /// Batch-mode memory budget in token-age units.
    pub memory_budget: f64,
    pub preemption_cost: PreemptionCost,
    /// Fraction of earliest completions excluded from steady-state
    /// statistics.
    pub warmup_fraction: f64,
    pub seed: u64,
    pub replications: u64,
    /// Required when predictions are belief-based.
    pub bins: Option<Bins>,
    /// Observation model for in-service belief refinement.
    pub observation: Option<ObservationModel>,
}

impl SimConfig {
    pub fn new(
        mode: SimMode,
        arrival: ArrivalSpec,
        service: ServiceDist,
        predictor: PredictorModel,
        policy: RankPolicy,
        seed: u64,
    ) -> Self {
        SimConfig {
            mode,
            arrival,
            service,
            predictor,
            policy,
            memory_budget: f64::INFINITY,
            preemption_cost: PreemptionCost::Hold,
            warmup_fraction: 0.2,
            seed,
            replications: 1,
            bins: None,
            observation: None,
        }
    }

    /// Offered load `lambda * E[X]`; at or above one the steady state does
    /// not exist. Burst workloads have no long-run rate.
    pub fn offered_load(&self) -> Option<f64> {
        match &self.arrival {
            ArrivalSpec::Poisson { rate, .. } => Some(rate * self.service.mean()),
            ArrivalSpec::Burst { .. } => None,
        }
    }

    pub fn is_unstable(&self) -> bool {
        self.offered_load().map_or(false, |rho| rho >= 1.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SimError {
    Workload(WorkloadError),
    Domain(DomainError),
    Refine(RefineError),
    /// A job can never fit in the batch-mode memory budget.
    Unschedulable { id: u64, size: f64, budget: f64 },
    MissingBins,
    MissingObservationModel,
    BadWarmupFraction(f64),
    BadBudget(f64),
    BadRecomputeRate(f64),
}

impl fmt::Display for SimError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SimError::Workload(e) => write!(f, "{e}"),
            SimError::Domain(e) => write!(f, "{e}"),
            SimError::Refine(e) => write!(f, "{e}"),
            SimError::Unschedulable { id, size, budget } => {
                write!(f, "job {id} of size {size} can never fit memory budget {budget}")
            }
            SimError::MissingBins => write!(f, "belief predictions require a bin layout"),
            SimError::MissingObservationModel => {
                write!(f, "belief refinement requires an observation model")
            }
            SimError::BadWarmupFraction(w) => write!(f, "warmup fraction must be in [0, 1), got {w}"),
            SimError::BadBudget(b) => write!(f, "memory budget must be positive, got {b}"),
            SimError::BadRecomputeRate(r) => write!(f, "recompute rate must be positive, got {r}"),
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for SimError {}

impl From<WorkloadError> for SimError {
    fn from(e: WorkloadError) -> Self {
        SimError::Workload(e)
    }
}

impl From<DomainError> for SimError {
    fn from(e: DomainError) -> Self {
        SimError::Domain(e)
    }
}

impl From<RefineError> for SimError {
    fn from(e: RefineError) -> Self {
        SimError::Refine(e)
    }
}

/// Generate the full job list for one replication. Batch mode rounds sizes
/// up to whole tokens (minimum one).
pub fn generate_jobs(cfg: &SimConfig, rep: u64) -> Result<Vec<Job>, SimError> {
    cfg.service.validate()?;
    if !(0.0..1.0).contains(&cfg.warmup_fraction) {
        return Err(SimError::BadWarmupFraction(cfg.warmup_fraction));
    }
    let streams = SeedStreams::new(cfg.seed);
    let arrivals = gen_arrivals(&cfg.arrival, &mut streams.rng(Stream::Arrivals, rep))?;
    let mut size_rng = streams.rng(Stream::Sizes, rep);
    let mut pred_rng = streams.rng(Stream::Predictions, rep);
    let mut jobs = Vec::with_capacity(arrivals.len());
    for (id, arrival) in arrivals.into_iter().enumerate() {
        let mut size = sample_service(&cfg.service, &mut size_rng);
        if cfg.mode == SimMode::Batch {
            size = math::ceil(size).max(1.0);
        }
        let pred = sample_prediction(&cfg.predictor, size, &mut pred_rng);
        let prediction = PredictionSpec {
            initial: pred.initial,
            trajectory: pred.trajectory,
            bin_belief: pred.bin_belief,
        };
        jobs.push(Job::new(id as u64, arrival, size, prediction));
    }
    Ok(jobs)
}

/// Run one replication of the configured engine.
pub fn run_replication(cfg: &SimConfig, rep: u64) -> Result<SimStats, SimError> {
    match cfg.mode {
        SimMode::Continuous => run_continuous(cfg, rep),
        SimMode::Batch => run_batch(cfg, rep),
    }
}

/// Run the configured engine over an externally supplied job list, e.g. a
/// workload imported for replay.
pub fn run_replication_jobs(
    cfg: &SimConfig,
    jobs: Vec<Job>,
    rep: u64,
) -> Result<SimStats, SimError> {
    match cfg.mode {
        SimMode::Continuous => run_continuous_jobs(cfg, jobs, rep).map(|(s, _)| s),
        SimMode::Batch => run_batch_jobs(cfg, jobs, rep).map(|(s, _)| s),
    }
}

/// Run all configured replications.
pub fn run(cfg: &SimConfig) -> Result<Vec<SimStats>, SimError> {
    let reps = cfg.replications.max(1);
    (0..reps).map(|rep| run_replication(cfg, rep)).collect()
}

/// One grid point of a parameter sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub lambda: Option<f64>,
    pub c: Option<f64>,
    pub unstable: bool,
    pub stats: Vec<SimStats>,
}

/// Sweep arrival rate and preemption constant over a grid, running every
/// replication at each point. `lambdas` applies to Poisson arrivals only;
/// `cs` applies to the limited-preemption policy only. Pass an empty grid
/// axis to keep the base value.
pub fn sweep(
    base: &SimConfig,
    lambdas: &[f64],
    cs: &[f64],
) -> Result<Vec<SweepPoint>, SimError> {
    let lambda_axis: Vec<Option<f64>> = if lambdas.is_empty() {
        alloc::vec![None]
    } else {
        lambdas.iter().map(|l| Some(*l)).collect()
    };
    let c_axis: Vec<Option<f64>> = if cs.is_empty() {
        alloc::vec![None]
    } else {
        cs.iter().map(|c| Some(*c)).collect()
    };
    let mut out = Vec::with_capacity(lambda_axis.len() * c_axis.len());
    for lambda in &lambda_axis {
        for c in &c_axis {
            let mut cfg = base.clone();
            if let (Some(l), ArrivalSpec::Poisson { rate, .. }) = (lambda, &mut cfg.arrival) {
                *rate = *l;
            }
            if let (Some(c), crate::policy::PolicyKind::SprptLp { c: ref mut pc }) =
                (c, &mut cfg.policy.kind)
            {
                *pc = *c;
            }
            let stats = run(&cfg)?;
            out.push(SweepPoint {
                lambda: *lambda,
                c: *c,
                unstable: cfg.is_unstable(),
                stats,
            });
        }
    }
    Ok(out)
}

/// Sample mean and normal-approximation 95% confidence half-width.
pub fn mean_ci(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (0.0, 0.0);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n as f64 - 1.0);
    (mean, 1.96 * math::sqrt(var / n as f64))
}

/// Build post-warmup aggregate stats from records in completion order.
/// `per_job` keeps every job (sorted by id); summary statistics exclude the
/// first `warmup_fraction` of completions.
pub(crate) fn finalize_stats(
    mut completion_order: Vec<crate::domain::JobRecord>,
    warmup_fraction: f64,
    peak_memory: f64,
    preemptions: u64,
) -> SimStats {
    let total = completion_order.len();
    let skip = (warmup_fraction * total as f64) as usize;
    let measured: Vec<crate::domain::JobRecord> =
        completion_order.iter().skip(skip).cloned().collect();
    let mut stats = SimStats::from_records(measured, peak_memory, preemptions);
    stats.completed = total as u64;
    completion_order.sort_by_key(|r| r.id);
    stats.per_job = completion_order;
    stats
}
