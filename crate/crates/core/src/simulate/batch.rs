//! Iteration-level token-batch engine.
//!
//! Time advances in whole iterations. Every scheduled job emits one token
//! per iteration, and each resident token of context costs one unit of
//! memory, so a job's footprint equals the service it has accumulated.
//!
//! Admission reserves a job's full eventual footprint: a started job's
//! memory only ever grows until completion, so admitting on current usage
//! alone could wedge the system with every resident job stalled just under
//! the budget. Under reservation, memory never exceeds the budget and some
//! admitted job always makes progress. The batch is filled greedily by
//! rank; under discard-mode preemption a better-ranked candidate can take
//! over a preemptable job's reservation, which evicts that job's context
//! and forces it to rebuild at the recompute rate before producing again.
//! Under hold-mode eviction would free nothing, so admitted jobs simply run
//! to completion.

use alloc::vec;
use alloc::vec::Vec;

use crate::domain::{Job, JobRecord, SimStats};
use crate::policy::{preemptable, rank, scheduling_prediction, JobView, PredictionSource};
use crate::refine::{bayes_update, build_transition, synth_observation, RefineError};
use crate::workload::{SeedStreams, Stream};

use super::{finalize_stats, generate_jobs, MemoryTrace, PreemptionCost, SimConfig, SimError};

pub fn run_batch(cfg: &SimConfig, rep: u64) -> Result<SimStats, SimError> {
    run_batch_traced(cfg, rep).map(|(stats, _)| stats)
}

/// Like [`run_batch`], also returning the per-iteration memory samples.
pub fn run_batch_traced(
    cfg: &SimConfig,
    rep: u64,
) -> Result<(SimStats, MemoryTrace), SimError> {
    let jobs = generate_jobs(cfg, rep)?;
    run_batch_jobs(cfg, jobs, rep)
}

/// Run the engine over an externally supplied job list (e.g. a replayed
/// workload). Sizes must be whole token counts; `rep` selects the
/// observation RNG stream.
pub fn run_batch_jobs(
    cfg: &SimConfig,
    mut jobs: Vec<Job>,
    rep: u64,
) -> Result<(SimStats, MemoryTrace), SimError> {
    let budget = cfg.memory_budget;
    if !(budget > 0.0) {
        return Err(SimError::BadBudget(budget));
    }
    let recompute_rate = match cfg.preemption_cost {
        PreemptionCost::Hold => None,
        PreemptionCost::Discard { recompute_rate } => {
            if !(recompute_rate > 0.0) {
                return Err(SimError::BadRecomputeRate(recompute_rate));
            }
            Some(recompute_rate)
        }
    };

    for job in &jobs {
        if job.size > budget {
            return Err(SimError::Unschedulable { id: job.id, size: job.size, budget });
        }
    }

    let kind = cfg.policy.kind;
    let source = cfg.policy.source;
    let estimate = cfg.policy.belief_estimate;
    if source == PredictionSource::Belief && cfg.bins.is_none() {
        return Err(SimError::MissingBins);
    }
    let bins = cfg.bins.clone();
    let transition = match (&bins, cfg.observation.as_ref()) {
        (Some(b), Some(_)) => Some(build_transition(b)?),
        _ => None,
    };
    let mut obs_rng = SeedStreams::new(cfg.seed).rng(Stream::Observations, rep);

    let n = jobs.len();
    // resident context per job; equals age except after a discard eviction
    let mut resident = vec![0.0_f64; n];
    // whether the job currently holds a footprint reservation
    let mut admitted = vec![false; n];
    let mut in_prev_batch = vec![false; n];
    let mut records: Vec<JobRecord> = Vec::with_capacity(n);
    let mut trace = MemoryTrace::default();
    let mut preemptions = 0u64;
    let mut remaining_jobs = n;
    let mut iter = 0u64;

    while remaining_jobs > 0 {
        let now = iter as f64;
        let candidates: Vec<usize> = (0..n)
            .filter(|&j| !jobs[j].is_complete() && jobs[j].arrival_time <= now)
            .collect();
        if candidates.is_empty() {
            // idle: jump to the first iteration with an available job
            let next = jobs
                .iter()
                .filter(|j| !j.is_complete())
                .map(|j| j.arrival_time)
                .fold(f64::INFINITY, f64::min);
            iter = crate::math::ceil(next) as u64;
            continue;
        }

        // rank every candidate; reservation-holding non-preemptable jobs
        // come first and can never lose their slot
        let mut views = Vec::with_capacity(candidates.len());
        for &j in &candidates {
            let r = scheduling_prediction(&jobs[j], source, estimate, bins.as_ref())?;
            views.push(JobView::of(&jobs[j], r));
        }
        let mandatory: Vec<bool> = views
            .iter()
            .enumerate()
            .map(|(pos, v)| admitted[candidates[pos]] && !preemptable(kind, v, true))
            .collect();
        let mut order: Vec<usize> = (0..candidates.len()).collect();
        order.sort_by(|&a, &b| {
            mandatory[b]
                .cmp(&mandatory[a])
                .then_with(|| rank(kind, &views[a], true).cmp(&rank(kind, &views[b], true)))
        });

        // greedy fill under footprint reservation
        let mut included = vec![false; candidates.len()];
        let mut reserved = 0.0;
        if recompute_rate.is_none() {
            // hold mode: reservations are permanent, so admitted jobs
            // always run; only new admissions compete for the remainder
            for (pos, &j) in candidates.iter().enumerate() {
                if admitted[j] {
                    included[pos] = true;
                    reserved += jobs[j].size;
                }
            }
            for &pos in &order {
                let j = candidates[pos];
                if included[pos] {
                    continue;
                }
                if reserved + jobs[j].size <= budget {
                    included[pos] = true;
                    reserved += jobs[j].size;
                }
            }
        } else {
            // discard mode: preemptable reservations are up for grabs in
            // rank order; losing one evicts the job's context
            for &pos in &order {
                let j = candidates[pos];
                if mandatory[pos] {
                    included[pos] = true;
                    reserved += jobs[j].size;
                } else if reserved + jobs[j].size <= budget {
                    included[pos] = true;
                    reserved += jobs[j].size;
                }
            }
        }

        for (pos, &j) in candidates.iter().enumerate() {
            if included[pos] {
                continue;
            }
            if in_prev_batch[j] {
                jobs[j].preemption_count += 1;
                preemptions += 1;
            }
            in_prev_batch[j] = false;
            if admitted[j] {
                // only reachable in discard mode; hold keeps every
                // admitted job in the batch
                admitted[j] = false;
                resident[j] = 0.0;
            }
        }

        // advance the batch by one iteration
        let mut released = 0.0;
        for (pos, &j) in candidates.iter().enumerate() {
            if !included[pos] {
                continue;
            }
            in_prev_batch[j] = true;
            admitted[j] = true;
            let job = &mut jobs[j];
            if resident[j] < job.age {
                // rebuilding discarded context; no token this iteration
                resident[j] = (resident[j] + recompute_rate.unwrap_or(1.0)).min(job.age);
                continue;
            }
            if job.first_service_time.is_none() {
                job.first_service_time = Some(now);
            }
            job.age += 1.0;
            resident[j] += 1.0;
            if job.age >= job.size {
                job.completion_time = Some(now + 1.0);
                let first = job.first_service_time.unwrap();
                records.push(JobRecord {
                    id: job.id,
                    latency: now + 1.0 - job.arrival_time,
                    ttft: first - job.arrival_time,
                });
                remaining_jobs -= 1;
                in_prev_batch[j] = false;
                admitted[j] = false;
                released += resident[j];
                resident[j] = 0.0;
            } else if source == PredictionSource::Belief {
                if let (Some(b), Some(model), Some(tm)) =
                    (bins.as_ref(), cfg.observation.as_ref(), transition.as_ref())
                {
                    if let Some(belief) = job.prediction.bin_belief.clone() {
                        let remaining = job.remaining().max(b.lower()).min(b.upper());
                        let obs = synth_observation(remaining, b, model, &mut obs_rng)?;
                        match bayes_update(&belief, &obs, tm) {
                            Ok(next) => job.prediction.bin_belief = Some(next),
                            Err(RefineError::ZeroDenominator) => {
                                job.prediction.bin_belief =
                                    Some(crate::domain::BeliefState::new(obs.p.clone())?);
                            }
                            Err(e) => return Err(e.into()),
                        }
                    }
                }
            }
        }

        // memory sample at the iteration boundary, counting footprints
        // released by this iteration's completions at their peak
        let held: f64 = resident.iter().sum();
        trace.record(now + 1.0, held + released);

        iter += 1;
    }

    let stats = finalize_stats(records, cfg.warmup_fraction, trace.peak, preemptions);
    Ok((stats, trace))
}
