//! Rank functions and preemption gates for the scheduling policies.
//!
//! All policies are expressed as rank functions over (job descriptor, age):
//! the lowest rank is served. Limited preemption turns a job's rank to
//! negative infinity once its age reaches `a0 = C * r`, making it
//! non-preemptable for the rest of its service.

use crate::domain::{bin_midpoint, Bins, DomainError, Job, Rank, RankValue};
use crate::math;
use crate::refine::expected_length;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PolicyKind {
    Fcfs,
    Spjf,
    Sprpt,
    /// SPRPT with limited preemption; `c` in `[0, 1]`.
    SprptLp { c: f64 },
}

impl PolicyKind {
    /// Preemption-age threshold for a job with scheduling prediction `r`.
    /// Continuous mode uses `C * r`; batch mode counts whole iterations,
    /// `floor(C * r)`.
    pub fn age_threshold(&self, r: f64, batch_mode: bool) -> f64 {
        match self {
            PolicyKind::SprptLp { c } => {
                let a0 = c * r;
                if batch_mode {
                    math::floor(a0)
                } else {
                    a0
                }
            }
            PolicyKind::Sprpt => f64::INFINITY,
            // FCFS and SPJF run non-preemptively
            PolicyKind::Fcfs | PolicyKind::Spjf => 0.0,
        }
    }
}

/// Where the scheduling prediction for a job comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PredictionSource {
    /// The initial prediction, never updated.
    Static,
    /// The per-unit refined prediction at the job's current age.
    Trajectory,
    /// A belief vector over bins, collapsed to a scalar per
    /// [`BeliefEstimate`].
    Belief,
}

/// How a belief vector is collapsed to a scalar prediction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BeliefEstimate {
    /// Midpoint of the highest-probability bin (ties to the smaller index).
    #[default]
    ArgmaxMidpoint,
    /// Probability-weighted mean of bin midpoints.
    Expected,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankPolicy {
    pub kind: PolicyKind,
    pub source: PredictionSource,
    pub belief_estimate: BeliefEstimate,
}

impl RankPolicy {
    pub fn new(kind: PolicyKind) -> Self {
        RankPolicy { kind, source: PredictionSource::Static, belief_estimate: BeliefEstimate::default() }
    }

    pub fn with_source(kind: PolicyKind, source: PredictionSource) -> Self {
        RankPolicy { kind, source, belief_estimate: BeliefEstimate::default() }
    }
}

/// Minimal job state a rank function depends on.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JobView {
    pub id: u64,
    pub arrival: f64,
    pub age: f64,
    /// Whether the job has received any service.
    pub started: bool,
    /// Current scheduling prediction (see [`scheduling_prediction`]).
    pub r: f64,
}

impl JobView {
    pub fn of(job: &Job, r: f64) -> Self {
        JobView {
            id: job.id,
            arrival: job.arrival_time,
            age: job.age,
            started: job.first_service_time.is_some(),
            r,
        }
    }
}

/// Rank of a job under a policy. Smaller ranks are served first; negative
/// infinity marks a non-preemptable running job.
pub fn rank(kind: PolicyKind, job: &JobView, batch_mode: bool) -> RankValue {
    let r = match kind {
        PolicyKind::Fcfs => {
            if job.started {
                Rank::NegInf
            } else {
                Rank::Finite(job.arrival)
            }
        }
        PolicyKind::Spjf => {
            if job.started {
                Rank::NegInf
            } else {
                Rank::Finite(job.r)
            }
        }
        PolicyKind::Sprpt => Rank::Finite(job.r - job.age),
        PolicyKind::SprptLp { .. } => {
            let a0 = kind.age_threshold(job.r, batch_mode);
            if job.started && job.age >= a0 {
                Rank::NegInf
            } else {
                Rank::Finite(job.r - job.age)
            }
        }
    };
    RankValue::new(r, job.arrival, job.id)
}

/// Whether the job may still be preempted once running.
pub fn preemptable(kind: PolicyKind, job: &JobView, batch_mode: bool) -> bool {
    match kind {
        PolicyKind::Fcfs | PolicyKind::Spjf => !job.started,
        PolicyKind::Sprpt => true,
        PolicyKind::SprptLp { .. } => {
            !job.started || job.age < kind.age_threshold(job.r, batch_mode)
        }
    }
}

/// Worst future rank for a static prediction: the rank is monotone
/// decreasing while finite, so the worst future rank at age `a` is the
/// current one.
pub fn worst_future_rank_static(r: f64, a: f64, a0: f64) -> Rank {
    if a == 0.0 || a < a0 {
        Rank::Finite(r - a)
    } else {
        Rank::NegInf
    }
}

/// Worst future rank under per-unit refined predictions: the maximum of
/// `r[b] - b` over remaining ages `b >= a`.
pub fn worst_future_rank_trajectory(trajectory: &[f64], a: usize) -> Rank {
    let mut worst = f64::NEG_INFINITY;
    for (b, r) in trajectory.iter().enumerate().skip(a) {
        let v = r - b as f64;
        if v > worst {
            worst = v;
        }
    }
    if worst == f64::NEG_INFINITY {
        Rank::NegInf
    } else {
        Rank::Finite(worst)
    }
}

/// Scalar prediction used for ranking, given the configured source.
pub fn scheduling_prediction(
    job: &Job,
    source: PredictionSource,
    estimate: BeliefEstimate,
    bins: Option<&Bins>,
) -> Result<f64, DomainError> {
    match source {
        PredictionSource::Static => Ok(job.prediction.initial),
        PredictionSource::Trajectory => match &job.prediction.trajectory {
            Some(traj) if !traj.is_empty() => {
                let idx = (math::floor(job.age).max(0.0) as usize).min(traj.len() - 1);
                Ok(traj[idx])
            }
            _ => Ok(job.prediction.initial),
        },
        PredictionSource::Belief => match &job.prediction.bin_belief {
            Some(belief) => {
                let bins = bins.ok_or(DomainError::BadBoundaries)?;
                match estimate {
                    BeliefEstimate::ArgmaxMidpoint => bin_midpoint(belief.argmax(), bins),
                    BeliefEstimate::Expected => expected_length(belief, bins),
                }
            }
            None => Ok(job.prediction.initial),
        },
    }
}
