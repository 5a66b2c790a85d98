//! Core library for studying size-based scheduling with limited preemption
//! in single-server queues with predicted job sizes.
//!
//! The crate provides:
//!
//! - [`domain`]: shared value types (jobs, length bins, belief vectors, ranks).
//! - [`workload`]: seeded generators for arrival processes, service times and
//!   size predictions.
//! - [`refine`]: iterative Bayesian refinement of binned length predictions.
//! - [`policy`]: rank functions for FCFS / SPJF / SPRPT and the
//!   limited-preemption SPRPT variant.
//! - [`simulate`]: two deterministic discrete-event engines, a continuous
//!   preemptive M/G/1 and an iteration-level token-batch model with a memory
//!   budget.
//! - [`analytic`]: numerical evaluation of the closed-form mean response time
//!   for SPRPT with limited preemption, plus the generic rank-based
//!   mean-response assembly it specializes.
//!
//! The crate is `no_std`-compatible (with `alloc`); all IO lives in the
//! companion CLI crate.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod analytic;
pub mod domain;
pub mod math;
pub mod policy;
pub mod refine;
pub mod simulate;
pub mod workload;

pub use domain::{BeliefState, Bins, Job, PredictionSpec, RankValue, SimStats, TransitionMatrix};
pub use policy::{PolicyKind, PredictionSource, RankPolicy};
pub use simulate::{MemoryTrace, PreemptionCost, SimConfig, SimMode};
pub use workload::{ArrivalSpec, PredictorModel, SeedStreams, ServiceDist};
