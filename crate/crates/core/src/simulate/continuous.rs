//! Continuous-time single-server engine.
//!
//! With a static prediction, a running job's rank only decreases while the
//! ranks of waiting jobs are frozen, so scheduling decisions are needed only
//! at arrivals and completions. Refined predictions (trajectory or belief)
//! change the running job's rank at unit-age boundaries, so those boundaries
//! become events too.

use alloc::collections::BinaryHeap;
use alloc::vec::Vec;
use core::cmp::Reverse;

use crate::domain::{Bins, Job, JobRecord, SimStats};
use crate::math;
use crate::policy::{preemptable, rank, scheduling_prediction, JobView, PredictionSource};
use crate::refine::{bayes_update, build_transition, synth_observation};
use crate::workload::{SeedStreams, Stream};

use super::{finalize_stats, generate_jobs, MemoryTrace, SimConfig, SimError};

/// Which of the three candidate events fires next. Completion wins time
/// ties so a finished job is retired before the same-instant decision.
#[derive(Clone, Copy, PartialEq)]
enum Event {
    Completion,
    Boundary,
    Arrival,
}

pub fn run_continuous(cfg: &SimConfig, rep: u64) -> Result<SimStats, SimError> {
    run_continuous_traced(cfg, rep).map(|(stats, _)| stats)
}

/// Like [`run_continuous`], also returning the per-event memory samples.
pub fn run_continuous_traced(
    cfg: &SimConfig,
    rep: u64,
) -> Result<(SimStats, MemoryTrace), SimError> {
    let jobs = generate_jobs(cfg, rep)?;
    run_continuous_jobs(cfg, jobs, rep)
}

/// Run the engine over an externally supplied job list (e.g. a replayed
/// workload). Jobs must be sorted by arrival time; `rep` selects the
/// observation RNG stream.
pub fn run_continuous_jobs(
    cfg: &SimConfig,
    mut jobs: Vec<Job>,
    rep: u64,
) -> Result<(SimStats, MemoryTrace), SimError> {
    let kind = cfg.policy.kind;
    let source = cfg.policy.source;
    let estimate = cfg.policy.belief_estimate;
    let dynamic = matches!(source, PredictionSource::Trajectory | PredictionSource::Belief);
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
    let mut waiting: BinaryHeap<Reverse<crate::domain::RankValue>> = BinaryHeap::new();
    let mut records: Vec<JobRecord> = Vec::with_capacity(n);
    let mut t = 0.0_f64;
    let mut next_arrival = 0usize;
    // memory bookkeeping: stored job ages are stale for the running job by
    // `t - run_start`, so current memory is `mem_frozen + (t - run_start)`
    let mut mem_frozen = 0.0_f64;
    let mut trace = MemoryTrace::default();
    let mut preemptions = 0u64;

    let mut running: Option<usize> = None;
    let mut run_start = 0.0_f64;
    let mut running_r = 0.0_f64;
    let mut next_boundary_age = 0.0_f64;

    let pred = |job: &Job, bins: &Option<Bins>| -> Result<f64, SimError> {
        Ok(scheduling_prediction(job, source, estimate, bins.as_ref())?)
    };

    loop {
        let Some(run_idx) = running else {
            if let Some(Reverse(top)) = waiting.pop() {
                let idx = top.id as usize;
                let job = &mut jobs[idx];
                if job.first_service_time.is_none() {
                    job.first_service_time = Some(t);
                }
                running_r = pred(job, &bins)?;
                next_boundary_age = math::floor(job.age) + 1.0;
                run_start = t;
                running = Some(idx);
            } else if next_arrival < n {
                // idle server: admit the whole group of simultaneous
                // arrivals before picking one to serve
                t = jobs[next_arrival].arrival_time;
                while next_arrival < n && jobs[next_arrival].arrival_time == t {
                    let job = &jobs[next_arrival];
                    let r = pred(job, &bins)?;
                    waiting.push(Reverse(rank(kind, &JobView::of(job, r), false)));
                    next_arrival += 1;
                }
            } else {
                break;
            }
            continue;
        };

        let t_complete = run_start + jobs[run_idx].remaining();
        let t_arrival =
            if next_arrival < n { jobs[next_arrival].arrival_time } else { f64::INFINITY };
        let t_boundary = if dynamic && next_boundary_age < jobs[run_idx].size {
            run_start + (next_boundary_age - jobs[run_idx].age)
        } else {
            f64::INFINITY
        };

        let (event, t_next) = if t_complete <= t_boundary && t_complete <= t_arrival {
            (Event::Completion, t_complete)
        } else if t_boundary <= t_arrival {
            (Event::Boundary, t_boundary)
        } else {
            (Event::Arrival, t_arrival)
        };
        t = t_next;
        trace.record(t, mem_frozen + (t - run_start));

        match event {
            Event::Completion => {
                let job = &mut jobs[run_idx];
                mem_frozen -= job.age;
                job.age = job.size;
                job.completion_time = Some(t);
                let first = job.first_service_time.unwrap_or(job.arrival_time);
                records.push(JobRecord {
                    id: job.id,
                    latency: t - job.arrival_time,
                    ttft: first - job.arrival_time,
                });
                running = None;
            }
            Event::Boundary => {
                // advance the running job to the unit-age boundary, refine
                // its prediction, and let a waiting job take over if it now
                // ranks better
                let accrued = t - run_start;
                let job = &mut jobs[run_idx];
                job.age = next_boundary_age;
                mem_frozen += accrued;
                run_start = t;
                next_boundary_age += 1.0;

                if let (Some(b), Some(model), Some(tm)) =
                    (bins.as_ref(), cfg.observation.as_ref(), transition.as_ref())
                {
                    if source == PredictionSource::Belief {
                        if let Some(belief) = job.prediction.bin_belief.clone() {
                            let remaining =
                                job.remaining().max(b.lower()).min(b.upper());
                            let obs = synth_observation(remaining, b, model, &mut obs_rng)?;
                            match bayes_update(&belief, &obs, tm) {
                                Ok(next) => job.prediction.bin_belief = Some(next),
                                // disjoint support: fall back to the raw
                                // observation, mirroring the refinement loop
                                Err(crate::refine::RefineError::ZeroDenominator) => {
                                    job.prediction.bin_belief =
                                        Some(crate::domain::BeliefState::new(obs.p.clone())?);
                                }
                                Err(e) => return Err(e.into()),
                            }
                        }
                    }
                }
                running_r = pred(&jobs[run_idx], &bins)?;

                let job = &jobs[run_idx];
                let run_view = JobView::of(job, running_r);
                let run_rank = rank(kind, &run_view, false);
                if let Some(Reverse(top)) = waiting.peek() {
                    if *top < run_rank && preemptable(kind, &run_view, false) {
                        let Reverse(top) = waiting.pop().unwrap();
                        jobs[run_idx].preemption_count += 1;
                        preemptions += 1;
                        waiting.push(Reverse(run_rank));
                        let idx = top.id as usize;
                        let job = &mut jobs[idx];
                        if job.first_service_time.is_none() {
                            job.first_service_time = Some(t);
                        }
                        running_r = pred(job, &bins)?;
                        next_boundary_age = math::floor(job.age) + 1.0;
                        run_start = t;
                        running = Some(idx);
                    }
                }
            }
            Event::Arrival => {
                // admit every job arriving at this instant before deciding
                // on preemption, so simultaneous arrivals (bursts) are
                // scheduled as one group
                while next_arrival < n && jobs[next_arrival].arrival_time == t {
                    let idx = next_arrival;
                    next_arrival += 1;
                    let new_r = pred(&jobs[idx], &bins)?;
                    waiting.push(Reverse(rank(kind, &JobView::of(&jobs[idx], new_r), false)));
                }

                let cur_age = jobs[run_idx].age + (t - run_start);
                let run_view = JobView {
                    id: jobs[run_idx].id,
                    arrival: jobs[run_idx].arrival_time,
                    age: cur_age,
                    started: true,
                    r: running_r,
                };
                let run_rank = rank(kind, &run_view, false);
                let challenger_wins =
                    waiting.peek().is_some_and(|Reverse(top)| *top < run_rank);
                if challenger_wins && preemptable(kind, &run_view, false) {
                    let accrued = t - run_start;
                    let job = &mut jobs[run_idx];
                    job.age += accrued;
                    mem_frozen += accrued;
                    job.preemption_count += 1;
                    preemptions += 1;
                    let frozen = rank(kind, &JobView::of(job, running_r), false);
                    waiting.push(Reverse(frozen));

                    let Reverse(top) = waiting.pop().unwrap();
                    let idx = top.id as usize;
                    let job = &mut jobs[idx];
                    if job.first_service_time.is_none() {
                        job.first_service_time = Some(t);
                    }
                    running_r = pred(&jobs[idx], &bins)?;
                    next_boundary_age = math::floor(jobs[idx].age) + 1.0;
                    run_start = t;
                    running = Some(idx);
                }
            }
        }
    }

    let stats = finalize_stats(records, cfg.warmup_fraction, trace.peak, preemptions);
    Ok((stats, trace))
}
