//! Shared value types: jobs, length bins, belief vectors over bins, the
//! bin-transition matrix, scheduling ranks and run statistics.
//!
//! Bin indices are 1-based everywhere in the public API.

use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;
use core::fmt;

/// Absolute tolerance for the belief-vector simplex invariant.
pub const SIMPLEX_TOL: f64 = 1e-12;

pub type JobId = u64;
pub type Time = f64;

#[derive(Debug, Clone, PartialEq)]
pub enum DomainError {
    /// A length fell outside the binned range.
    OutOfRange { value: f64, lo: f64, hi: f64 },
    /// A 1-based bin index outside `[1, k]`.
    BadBinIndex { index: usize, k: usize },
    /// Bin boundaries not strictly increasing or fewer than two.
    BadBoundaries,
    /// A bin narrower than one service unit; transition probabilities would
    /// exceed one.
    BinTooNarrow { index: usize, width: f64 },
    /// A probability vector that is not on the simplex.
    NotASimplex,
    /// Vector/matrix dimension mismatch.
    DimensionMismatch { expected: usize, got: usize },
}

impl fmt::Display for DomainError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DomainError::OutOfRange { value, lo, hi } => {
                write!(f, "length {value} outside binned range [{lo}, {hi}]")
            }
            DomainError::BadBinIndex { index, k } => {
                write!(f, "bin index {index} outside [1, {k}]")
            }
            DomainError::BadBoundaries => {
                write!(f, "bin boundaries must be strictly increasing with at least two entries")
            }
            DomainError::BinTooNarrow { index, width } => {
                write!(f, "bin {index} has width {width} < 1")
            }
            DomainError::NotASimplex => write!(f, "probability vector is not on the simplex"),
            DomainError::DimensionMismatch { expected, got } => {
                write!(f, "expected dimension {expected}, got {got}")
            }
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for DomainError {}

/// Length bins `[b_i, b_{i+1})`; the final bin is closed on the right.
#[derive(Debug, Clone, PartialEq)]
pub struct Bins {
    boundaries: Vec<f64>,
}

impl Bins {
    pub fn new(boundaries: Vec<f64>) -> Result<Self, DomainError> {
        if boundaries.len() < 2 || boundaries.windows(2).any(|w| w[0] >= w[1]) {
            return Err(DomainError::BadBoundaries);
        }
        Ok(Bins { boundaries })
    }

    /// The ten equal-width bins over `[0, 512]` used throughout for token
    /// lengths (width 51.2).
    pub fn token_default() -> Self {
        let boundaries = (0..=10).map(|i| 51.2 * i as f64).collect();
        Bins::new(boundaries).expect("static boundaries are valid")
    }

    pub fn k(&self) -> usize {
        self.boundaries.len() - 1
    }

    pub fn lower(&self) -> f64 {
        self.boundaries[0]
    }

    pub fn upper(&self) -> f64 {
        *self.boundaries.last().unwrap()
    }

    pub fn boundaries(&self) -> &[f64] {
        &self.boundaries
    }

    /// Width `b_{i+1} - b_i` of bin `i` (1-based).
    pub fn width(&self, i: usize) -> Result<f64, DomainError> {
        self.check_index(i)?;
        Ok(self.boundaries[i] - self.boundaries[i - 1])
    }

    /// 1-based index of the bin covering `length`. Bins are right-open except
    /// the last, which includes its upper boundary.
    pub fn index_of(&self, length: f64) -> Result<usize, DomainError> {
        let lo = self.lower();
        let hi = self.upper();
        if !(length >= lo && length <= hi) {
            return Err(DomainError::OutOfRange { value: length, lo, hi });
        }
        if length == hi {
            return Ok(self.k());
        }
        // boundaries are sorted; partition_point gives the first b > length
        let pos = self.boundaries.partition_point(|b| *b <= length);
        Ok(pos)
    }

    /// Midpoint `(b_i + b_{i+1}) / 2` of bin `i` (1-based).
    pub fn midpoint(&self, i: usize) -> Result<f64, DomainError> {
        self.check_index(i)?;
        Ok((self.boundaries[i - 1] + self.boundaries[i]) / 2.0)
    }

    fn check_index(&self, i: usize) -> Result<(), DomainError> {
        if i >= 1 && i <= self.k() {
            Ok(())
        } else {
            Err(DomainError::BadBinIndex { index: i, k: self.k() })
        }
    }
}

/// 1-based index of the bin covering `length`.
pub fn bin_index(length: f64, bins: &Bins) -> Result<usize, DomainError> {
    bins.index_of(length)
}

/// Midpoint of bin `i` (1-based).
pub fn bin_midpoint(i: usize, bins: &Bins) -> Result<f64, DomainError> {
    bins.midpoint(i)
}

/// Probability vector over length bins.
#[derive(Debug, Clone, PartialEq)]
pub struct BeliefState {
    q: Vec<f64>,
}

impl BeliefState {
    pub fn new(q: Vec<f64>) -> Result<Self, DomainError> {
        if q.is_empty() || q.iter().any(|p| *p < 0.0 || !p.is_finite()) {
            return Err(DomainError::NotASimplex);
        }
        let sum: f64 = q.iter().sum();
        if crate::math::abs(sum - 1.0) > SIMPLEX_TOL {
            return Err(DomainError::NotASimplex);
        }
        Ok(BeliefState { q })
    }

    pub fn uniform(k: usize) -> Self {
        BeliefState { q: vec![1.0 / k as f64; k] }
    }

    /// All mass on bin `i` (1-based).
    pub fn one_hot(i: usize, k: usize) -> Result<Self, DomainError> {
        if i < 1 || i > k {
            return Err(DomainError::BadBinIndex { index: i, k });
        }
        let mut q = vec![0.0; k];
        q[i - 1] = 1.0;
        Ok(BeliefState { q })
    }

    pub fn k(&self) -> usize {
        self.q.len()
    }

    pub fn probs(&self) -> &[f64] {
        &self.q
    }

    /// 1-based index of the highest-probability bin; ties break to the
    /// smaller index.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, p) in self.q.iter().enumerate() {
            if *p > self.q[best] {
                best = i;
            }
        }
        best + 1
    }
}

/// Bin-transition structure for one service unit of progress: probability
/// mass stays in its bin with probability `1 - 1/width` or moves to the
/// adjacent lower-remaining-length bin with probability `1/width`.
///
/// Mass in the lowest bin has no lower neighbor and leaks; the Bayesian
/// update's normalization restores the simplex.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionMatrix {
    /// `stay[j]`: diagonal entry for bin `j+1`, `1 - 1/width_j`.
    stay: Vec<f64>,
    /// `leave[j]`: mass leaving bin `j+1` toward bin `j`, `1/width_j`.
    leave: Vec<f64>,
}

impl TransitionMatrix {
    pub fn from_bins(bins: &Bins) -> Result<Self, DomainError> {
        let k = bins.k();
        let mut stay = Vec::with_capacity(k);
        let mut leave = Vec::with_capacity(k);
        for i in 1..=k {
            let w = bins.width(i)?;
            if w < 1.0 {
                return Err(DomainError::BinTooNarrow { index: i, width: w });
            }
            stay.push(1.0 - 1.0 / w);
            leave.push(1.0 / w);
        }
        Ok(TransitionMatrix { stay, leave })
    }

    pub fn identity(k: usize) -> Self {
        TransitionMatrix { stay: vec![1.0; k], leave: vec![0.0; k] }
    }

    pub fn k(&self) -> usize {
        self.stay.len()
    }

    /// Matrix entry `T[i][j]` (1-based): probability that mass in bin `j`
    /// ends up in bin `i` after one unit.
    pub fn entry(&self, i: usize, j: usize) -> f64 {
        if i == j {
            self.stay[j - 1]
        } else if j >= 2 && i == j - 1 {
            self.leave[j - 1]
        } else {
            0.0
        }
    }

    /// `T · q`. Output may sum to less than one (lowest-bin leakage).
    pub fn apply(&self, q: &[f64]) -> Result<Vec<f64>, DomainError> {
        let k = self.k();
        if q.len() != k {
            return Err(DomainError::DimensionMismatch { expected: k, got: q.len() });
        }
        let mut out = Vec::with_capacity(k);
        for i in 0..k {
            let mut v = self.stay[i] * q[i];
            if i + 1 < k {
                v += self.leave[i + 1] * q[i + 1];
            }
            out.push(v);
        }
        Ok(out)
    }
}

/// Per-unit prediction information attached to a job.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionSpec {
    /// Initial predicted size `r > 0`.
    pub initial: f64,
    /// Refined prediction after each processed unit; length `ceil(size)`
    /// when present.
    pub trajectory: Option<Vec<f64>>,
    /// Belief over length bins, updated while the job is served.
    pub bin_belief: Option<BeliefState>,
}

impl PredictionSpec {
    pub fn fixed(r: f64) -> Self {
        PredictionSpec { initial: r, trajectory: None, bin_belief: None }
    }
}

/// One request. `size` is abstract service demand: tokens in batch mode,
/// real-valued in continuous mode.
#[derive(Debug, Clone, PartialEq)]
pub struct Job {
    pub id: JobId,
    pub arrival_time: Time,
    pub size: f64,
    pub prediction: PredictionSpec,
    /// Service received so far, `0 <= age <= size`.
    pub age: f64,
    pub first_service_time: Option<Time>,
    pub completion_time: Option<Time>,
    pub preemption_count: u32,
}

impl Job {
    pub fn new(id: JobId, arrival_time: Time, size: f64, prediction: PredictionSpec) -> Self {
        Job {
            id,
            arrival_time,
            size,
            prediction,
            age: 0.0,
            first_service_time: None,
            completion_time: None,
            preemption_count: 0,
        }
    }

    pub fn remaining(&self) -> f64 {
        self.size - self.age
    }

    pub fn is_complete(&self) -> bool {
        self.completion_time.is_some()
    }
}

/// A scheduling rank: smaller is served first. `NegInf` marks a
/// non-preemptable running job, which outranks everything finite. Ties break
/// by earlier arrival, then smaller id.
#[derive(Debug, Clone, Copy)]
pub struct RankValue {
    pub rank: Rank,
    pub arrival: Time,
    pub id: JobId,
}

#[derive(Debug, Clone, Copy)]
pub enum Rank {
    NegInf,
    Finite(f64),
}

impl Rank {
    pub fn is_finite(&self) -> bool {
        matches!(self, Rank::Finite(_))
    }
}

impl RankValue {
    pub fn new(rank: Rank, arrival: Time, id: JobId) -> Self {
        RankValue { rank, arrival, id }
    }
}

impl PartialEq for RankValue {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for RankValue {}

impl PartialOrd for RankValue {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for RankValue {
    fn cmp(&self, other: &Self) -> Ordering {
        let prim = match (&self.rank, &other.rank) {
            (Rank::NegInf, Rank::NegInf) => Ordering::Equal,
            (Rank::NegInf, Rank::Finite(_)) => Ordering::Less,
            (Rank::Finite(_), Rank::NegInf) => Ordering::Greater,
            (Rank::Finite(a), Rank::Finite(b)) => a.total_cmp(b),
        };
        prim.then_with(|| self.arrival.total_cmp(&other.arrival)).then_with(|| self.id.cmp(&other.id))
    }
}

/// Per-job outcome record.
#[derive(Debug, Clone, PartialEq)]
pub struct JobRecord {
    pub id: JobId,
    pub latency: Time,
    pub ttft: Time,
}

/// Aggregate statistics for one simulation run.
#[derive(Debug, Clone, PartialEq)]
pub struct SimStats {
    pub mean_latency: f64,
    pub median_latency: f64,
    pub mean_ttft: f64,
    pub median_ttft: f64,
    pub peak_memory: f64,
    pub preemptions: u64,
    pub completed: u64,
    pub per_job: Vec<JobRecord>,
}

impl SimStats {
    pub fn empty() -> Self {
        SimStats {
            mean_latency: 0.0,
            median_latency: 0.0,
            mean_ttft: 0.0,
            median_ttft: 0.0,
            peak_memory: 0.0,
            preemptions: 0,
            completed: 0,
            per_job: Vec::new(),
        }
    }

    /// Build the aggregate from measured records. `peak_memory` and
    /// `preemptions` come from the engine; `completed` counts all records.
    pub fn from_records(records: Vec<JobRecord>, peak_memory: f64, preemptions: u64) -> Self {
        let completed = records.len() as u64;
        let mut lat: Vec<f64> = records.iter().map(|r| r.latency).collect();
        let mut ttft: Vec<f64> = records.iter().map(|r| r.ttft).collect();
        SimStats {
            mean_latency: mean(&lat),
            median_latency: median(&mut lat),
            mean_ttft: mean(&ttft),
            median_ttft: median(&mut ttft),
            peak_memory,
            preemptions,
            completed,
            per_job: records,
        }
    }
}

fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        0.0
    } else {
        xs.iter().sum::<f64>() / xs.len() as f64
    }
}

fn median(xs: &mut [f64]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        (xs[n / 2 - 1] + xs[n / 2]) / 2.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bin_index_boundaries() {
        let bins = Bins::token_default();
        assert_eq!(bins.k(), 10);
        assert_eq!(bin_index(0.0, &bins).unwrap(), 1);
        // the final bin is closed on the right
        assert_eq!(bin_index(512.0, &bins).unwrap(), 10);
        // right-open rule at an interior boundary
        assert_eq!(bin_index(51.2, &bins).unwrap(), 2);
        assert!(matches!(bin_index(-0.1, &bins), Err(DomainError::OutOfRange { .. })));
        assert!(matches!(bin_index(513.0, &bins), Err(DomainError::OutOfRange { .. })));
    }

    #[test]
    fn bin_midpoints_token_bins() {
        let bins = Bins::token_default();
        // 128(2i+1)/5 with 0-based i: 25.6 at i=0, 486.4 at i=9
        assert!((bin_midpoint(1, &bins).unwrap() - 25.6).abs() < 1e-12);
        assert!((bin_midpoint(10, &bins).unwrap() - 486.4).abs() < 1e-12);
        assert!(bin_midpoint(0, &bins).is_err());
        assert!(bin_midpoint(11, &bins).is_err());
    }

    #[test]
    fn bin_midpoints_symmetric() {
        let bins = Bins::new(alloc::vec![0.0, 2.0, 4.0]).unwrap();
        assert_eq!(bin_midpoint(1, &bins).unwrap(), 1.0);
        assert_eq!(bin_midpoint(2, &bins).unwrap(), 3.0);
    }

    #[test]
    fn midpoint_round_trips_through_index() {
        let bins = Bins::token_default();
        for i in 1..=bins.k() {
            let m = bin_midpoint(i, &bins).unwrap();
            assert_eq!(bin_index(m, &bins).unwrap(), i);
        }
    }

    #[test]
    fn transition_entries_token_bins() {
        let bins = Bins::token_default();
        let t = TransitionMatrix::from_bins(&bins).unwrap();
        assert!((t.entry(3, 3) - (1.0 - 1.0 / 51.2)).abs() < 1e-15);
        assert!((t.entry(2, 3) - 1.0 / 51.2).abs() < 1e-15);
        assert_eq!(t.entry(4, 3), 0.0);
        assert_eq!(t.entry(3, 2), 0.0);
    }

    #[test]
    fn transition_rejects_narrow_bins() {
        let bins = Bins::new(alloc::vec![0.0, 0.5, 1.0]).unwrap();
        assert!(matches!(
            TransitionMatrix::from_bins(&bins),
            Err(DomainError::BinTooNarrow { .. })
        ));
    }

    #[test]
    fn rank_ordering() {
        let neg = RankValue::new(Rank::NegInf, 5.0, 9);
        let low = RankValue::new(Rank::Finite(1.0), 0.0, 1);
        let high = RankValue::new(Rank::Finite(2.0), 0.0, 0);
        assert!(neg < low);
        assert!(low < high);
        // ties: earlier arrival first, then smaller id
        let a = RankValue::new(Rank::Finite(1.0), 0.0, 2);
        let b = RankValue::new(Rank::Finite(1.0), 1.0, 1);
        assert!(a < b);
        let c = RankValue::new(Rank::Finite(1.0), 0.0, 3);
        assert!(a < c);
    }

    #[test]
    fn belief_simplex_validation() {
        assert!(BeliefState::new(alloc::vec![0.5, 0.5]).is_ok());
        assert!(BeliefState::new(alloc::vec![0.6, 0.5]).is_err());
        assert!(BeliefState::new(alloc::vec![-0.1, 1.1]).is_err());
        let b = BeliefState::new(alloc::vec![0.5, 0.5, 0.0]).unwrap();
        assert_eq!(b.argmax(), 1); // tie breaks to the smaller index
    }
}
