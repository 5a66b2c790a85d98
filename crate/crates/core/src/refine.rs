//! Iterative Bayesian refinement of binned length predictions.
//!
//! Each service unit produces a classifier-style observation `p^(t)` over
//! remaining-length bins. The belief is advanced by the bin-transition
//! matrix (remaining length shrinks by one unit per iteration) and then
//! conditioned on the observation. A synthetic observation model stands in
//! for a trained classifier.

use alloc::vec::Vec;
use core::fmt;

use rand::Rng;

use crate::domain::{BeliefState, Bins, DomainError, TransitionMatrix, SIMPLEX_TOL};
use crate::math;

/// Per-iteration classifier output over remaining-length bins.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub p: Vec<f64>,
}

impl Observation {
    pub fn new(p: Vec<f64>) -> Result<Self, DomainError> {
        let sum: f64 = p.iter().sum();
        if p.is_empty() || p.iter().any(|v| *v < 0.0) || math::abs(sum - 1.0) > SIMPLEX_TOL {
            return Err(DomainError::NotASimplex);
        }
        Ok(Observation { p })
    }

    pub fn one_hot(i: usize, k: usize) -> Result<Self, DomainError> {
        Ok(Observation { p: BeliefState::one_hot(i, k)?.probs().to_vec() })
    }
}

/// Synthetic stand-in for a trained remaining-length classifier.
///
/// Scores decay with the distance between a bin midpoint and the true
/// remaining length; `concentration` sets the sharpness (infinite means
/// one-hot). With probability `mislabel_rate` the peak shifts one bin.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationModel {
    pub concentration: f64,
    pub mislabel_rate: f64,
}

impl ObservationModel {
    pub fn new(concentration: f64, mislabel_rate: f64) -> Result<Self, RefineError> {
        if !(concentration > 0.0) {
            return Err(RefineError::BadConcentration(concentration));
        }
        if !(0.0..1.0).contains(&mislabel_rate) {
            return Err(RefineError::BadMislabelRate(mislabel_rate));
        }
        Ok(ObservationModel { concentration, mislabel_rate })
    }

    /// Noise-free limit: one-hot observations at the true bin.
    pub fn noiseless() -> Self {
        ObservationModel { concentration: f64::INFINITY, mislabel_rate: 0.0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum RefineError {
    BadConcentration(f64),
    BadMislabelRate(f64),
    /// Prior and observation have disjoint support; the caller should fall
    /// back to the raw observation.
    ZeroDenominator,
    Domain(DomainError),
}

impl fmt::Display for RefineError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RefineError::BadConcentration(c) => write!(f, "concentration must be > 0, got {c}"),
            RefineError::BadMislabelRate(m) => write!(f, "mislabel rate must be in [0, 1), got {m}"),
            RefineError::ZeroDenominator => {
                write!(f, "prior and observation have disjoint support")
            }
            RefineError::Domain(e) => write!(f, "{e}"),
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for RefineError {}

impl From<DomainError> for RefineError {
    fn from(e: DomainError) -> Self {
        RefineError::Domain(e)
    }
}

/// Transition matrix for one unit of progress, built once per bin layout.
pub fn build_transition(bins: &Bins) -> Result<TransitionMatrix, DomainError> {
    TransitionMatrix::from_bins(bins)
}

/// One Bayesian step: advance the belief by the transition matrix, condition
/// on the observation, renormalize.
pub fn bayes_update(
    q_prev: &BeliefState,
    p_t: &Observation,
    t: &TransitionMatrix,
) -> Result<BeliefState, RefineError> {
    let k = q_prev.k();
    if p_t.p.len() != k {
        return Err(DomainError::DimensionMismatch { expected: k, got: p_t.p.len() }.into());
    }
    let prior = t.apply(q_prev.probs())?;
    let mut post: Vec<f64> = prior.iter().zip(&p_t.p).map(|(a, b)| a * b).collect();
    let denom: f64 = post.iter().sum();
    if denom <= 0.0 {
        return Err(RefineError::ZeroDenominator);
    }
    for v in &mut post {
        *v /= denom;
    }
    // guard against accumulated rounding before re-validating the simplex
    let sum: f64 = post.iter().sum();
    for v in &mut post {
        *v /= sum;
    }
    Ok(BeliefState::new(post)?)
}

/// Expected length under a belief: sum of bin midpoints weighted by `q`.
pub fn expected_length(q: &BeliefState, bins: &Bins) -> Result<f64, DomainError> {
    if q.k() != bins.k() {
        return Err(DomainError::DimensionMismatch { expected: bins.k(), got: q.k() });
    }
    let mut sum = 0.0;
    for (i, p) in q.probs().iter().enumerate() {
        sum += p * bins.midpoint(i + 1)?;
    }
    Ok(sum)
}

/// Synthetic observation for a known true remaining length.
///
/// Softmax of `-concentration * |m_i - true_remaining| / width_i`; with
/// probability `mislabel_rate` the decay is centered on a neighboring bin
/// (the lower neighbor when one exists).
pub fn synth_observation<R: Rng>(
    true_remaining: f64,
    bins: &Bins,
    model: &ObservationModel,
    rng: &mut R,
) -> Result<Observation, DomainError> {
    let true_bin = bins.index_of(true_remaining)?;
    let k = bins.k();
    // draw unconditionally so the stream advances the same way per call
    let mislabel_draw: f64 = rng.gen();
    let center_bin = if mislabel_draw < model.mislabel_rate {
        if true_bin > 1 {
            true_bin - 1
        } else if k > 1 {
            true_bin + 1
        } else {
            true_bin
        }
    } else {
        true_bin
    };
    let center = if center_bin == true_bin { true_remaining } else { bins.midpoint(center_bin)? };

    if model.concentration.is_infinite() {
        return Ok(Observation { p: BeliefState::one_hot(center_bin, k)?.probs().to_vec() });
    }

    let mut scores = Vec::with_capacity(k);
    let mut max_score = f64::NEG_INFINITY;
    for i in 1..=k {
        let s = -model.concentration * math::abs(bins.midpoint(i)? - center) / bins.width(i)?;
        if s > max_score {
            max_score = s;
        }
        scores.push(s);
    }
    let mut p: Vec<f64> = scores.iter().map(|s| math::exp(s - max_score)).collect();
    let sum: f64 = p.iter().sum();
    for v in &mut p {
        *v /= sum;
    }
    Ok(Observation { p })
}

/// Per-iteration record produced by [`refine_trajectory`].
#[derive(Debug, Clone, PartialEq)]
pub struct RefineStep {
    pub t: u64,
    pub true_remaining: f64,
    /// Estimate from the raw observation alone.
    pub raw_estimate: f64,
    /// Estimate from the refined belief.
    pub refined_estimate: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RefineResult {
    pub steps: Vec<RefineStep>,
    pub raw_mae: f64,
    pub refined_mae: f64,
}

/// Run the full refinement loop for a job of integer size, observing the
/// true remaining length at each service unit.
///
/// The belief is initialized to the first observation; on a disjoint-support
/// update the belief falls back to the current observation.
pub fn refine_trajectory<R: Rng>(
    true_size: u64,
    bins: &Bins,
    t: &TransitionMatrix,
    model: &ObservationModel,
    rng: &mut R,
) -> Result<RefineResult, RefineError> {
    if true_size == 0 {
        return Ok(RefineResult { steps: Vec::new(), raw_mae: 0.0, refined_mae: 0.0 });
    }
    let mut steps = Vec::with_capacity(true_size as usize);
    let mut raw_err = 0.0;
    let mut refined_err = 0.0;
    let mut belief: Option<BeliefState> = None;
    for step in 0..true_size {
        let true_remaining = (true_size - step) as f64;
        let obs = synth_observation(true_remaining, bins, model, rng)?;
        let next = match belief {
            None => BeliefState::new(obs.p.clone())?,
            Some(ref q) => match bayes_update(q, &obs, t) {
                Ok(q_new) => q_new,
                Err(RefineError::ZeroDenominator) => BeliefState::new(obs.p.clone())?,
                Err(e) => return Err(e),
            },
        };
        let raw_estimate = expected_length(&BeliefState::new(obs.p.clone())?, bins)?;
        let refined_estimate = expected_length(&next, bins)?;
        raw_err += math::abs(raw_estimate - true_remaining);
        refined_err += math::abs(refined_estimate - true_remaining);
        steps.push(RefineStep { t: step, true_remaining, raw_estimate, refined_estimate });
        belief = Some(next);
    }
    let n = true_size as f64;
    Ok(RefineResult { steps, raw_mae: raw_err / n, refined_mae: refined_err / n })
}

/// Mean raw and refined MAE over an ensemble of job sizes, one refinement
/// trajectory each. Returns `(raw_mae, refined_mae)`.
pub fn ensemble_mae<R: Rng>(
    sizes: &[u64],
    bins: &Bins,
    t: &TransitionMatrix,
    model: &ObservationModel,
    rng: &mut R,
) -> Result<(f64, f64), RefineError> {
    let mut raw_sum = 0.0;
    let mut refined_sum = 0.0;
    let mut n = 0u64;
    for &size in sizes {
        let res = refine_trajectory(size, bins, t, model, rng)?;
        raw_sum += res.raw_mae;
        refined_sum += res.refined_mae;
        n += 1;
    }
    if n == 0 {
        return Ok((0.0, 0.0));
    }
    Ok((raw_sum / n as f64, refined_sum / n as f64))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::workload::{SeedStreams, Stream};
    use alloc::vec;

    #[test]
    fn transition_from_token_bins() {
        let bins = Bins::token_default();
        let t = build_transition(&bins).unwrap();
        assert!((t.entry(1, 1) - 0.98046875).abs() < 1e-15);
        assert!((t.entry(1, 2) - 0.01953125).abs() < 1e-15);
    }

    #[test]
    fn transition_binsize_two() {
        let bins = Bins::new(vec![0.0, 2.0, 4.0, 6.0]).unwrap();
        let t = build_transition(&bins).unwrap();
        assert_eq!(t.entry(2, 2), 0.5);
        assert_eq!(t.entry(1, 2), 0.5);
    }

    #[test]
    fn transition_single_bin() {
        let bins = Bins::new(vec![0.0, 4.0]).unwrap();
        let t = build_transition(&bins).unwrap();
        assert_eq!(t.k(), 1);
        assert_eq!(t.entry(1, 1), 0.75);
    }

    #[test]
    fn bayes_identity_one_hot() {
        let k = 5;
        let q = BeliefState::one_hot(3, k).unwrap();
        let p = Observation::one_hot(3, k).unwrap();
        let t = TransitionMatrix::identity(k);
        let out = bayes_update(&q, &p, &t).unwrap();
        assert_eq!(out, BeliefState::one_hot(3, k).unwrap());
    }

    #[test]
    fn bayes_uniform_prior_returns_observation() {
        let k = 4;
        let q = BeliefState::uniform(k);
        let p = Observation::new(vec![0.1, 0.2, 0.3, 0.4]).unwrap();
        let t = TransitionMatrix::identity(k);
        let out = bayes_update(&q, &p, &t).unwrap();
        for (a, b) in out.probs().iter().zip(&p.p) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn bayes_three_bin_hand_computed() {
        // binsize 2: T diag 0.5, lower-neighbor 0.5
        let bins = Bins::new(vec![0.0, 2.0, 4.0, 6.0]).unwrap();
        let t = build_transition(&bins).unwrap();
        let q = BeliefState::new(vec![0.0, 0.0, 1.0]).unwrap();
        let p = Observation::new(vec![0.2, 0.5, 0.3]).unwrap();
        // prior = [0, 0.5, 0.5]; posterior = [0, 0.25, 0.15] / 0.40
        let out = bayes_update(&q, &p, &t).unwrap();
        assert!((out.probs()[0] - 0.0).abs() < 1e-12);
        assert!((out.probs()[1] - 0.625).abs() < 1e-12);
        assert!((out.probs()[2] - 0.375).abs() < 1e-12);
    }

    #[test]
    fn bayes_disjoint_support_signaled() {
        let k = 2;
        let q = BeliefState::one_hot(1, k).unwrap();
        let p = Observation::one_hot(2, k).unwrap();
        let t = TransitionMatrix::identity(k);
        assert!(matches!(bayes_update(&q, &p, &t), Err(RefineError::ZeroDenominator)));
    }

    #[test]
    fn expected_length_cases() {
        let bins = Bins::token_default();
        for i in 1..=10 {
            let q = BeliefState::one_hot(i, 10).unwrap();
            assert!((expected_length(&q, &bins).unwrap() - bins.midpoint(i).unwrap()).abs() < 1e-12);
        }
        let uniform = BeliefState::uniform(10);
        assert!((expected_length(&uniform, &bins).unwrap() - 256.0).abs() < 1e-12);
        let half = BeliefState::new(vec![0.5, 0.5, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]).unwrap();
        assert!((expected_length(&half, &bins).unwrap() - 51.2).abs() < 1e-12);
    }

    #[test]
    fn synth_observation_noiseless_limit() {
        let bins = Bins::token_default();
        let model = ObservationModel::noiseless();
        let mut rng = SeedStreams::new(1).rng(Stream::Observations, 0);
        // 170.0 lies in bin 4 ([153.6, 204.8))
        let obs = synth_observation(170.0, &bins, &model, &mut rng).unwrap();
        assert_eq!(obs.p, BeliefState::one_hot(4, 10).unwrap().probs());
    }

    #[test]
    fn synth_observation_deterministic() {
        let bins = Bins::token_default();
        let model = ObservationModel::new(2.0, 0.1).unwrap();
        let streams = SeedStreams::new(11);
        let a = synth_observation(100.0, &bins, &model, &mut streams.rng(Stream::Observations, 0));
        let b = synth_observation(100.0, &bins, &model, &mut streams.rng(Stream::Observations, 0));
        assert_eq!(a.unwrap(), b.unwrap());
    }

    #[test]
    fn synth_observation_mislabel_rate() {
        let bins = Bins::token_default();
        let model = ObservationModel::new(8.0, 0.1).unwrap();
        let mut rng = SeedStreams::new(5).rng(Stream::Observations, 0);
        let n = 100_000;
        let mut correct = 0u64;
        for _ in 0..n {
            let obs = synth_observation(170.0, &bins, &model, &mut rng).unwrap();
            let mode = 1 + obs
                .p
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.total_cmp(b.1))
                .unwrap()
                .0;
            if mode == 4 {
                correct += 1;
            }
        }
        let rate = correct as f64 / n as f64;
        let sigma = math::sqrt(0.9 * 0.1 / n as f64);
        assert!((rate - 0.9).abs() < 3.0 * sigma, "mode correctness {rate}");
    }

    #[test]
    fn refine_noiseless_matches_raw() {
        let bins = Bins::token_default();
        let t = build_transition(&bins).unwrap();
        let model = ObservationModel::noiseless();
        let mut rng = SeedStreams::new(2).rng(Stream::Observations, 0);
        let res = refine_trajectory(300, &bins, &t, &model, &mut rng).unwrap();
        assert!((res.refined_mae - res.raw_mae).abs() < 1e-12);
        for s in &res.steps {
            assert_eq!(s.raw_estimate, s.refined_estimate);
            // both equal the quantization error: estimate is the bin midpoint
            let bin = bins.index_of(s.true_remaining).unwrap();
            assert_eq!(s.raw_estimate, bins.midpoint(bin).unwrap());
        }
    }

    #[test]
    fn refine_single_step_equals_first_observation() {
        let bins = Bins::token_default();
        let t = build_transition(&bins).unwrap();
        let model = ObservationModel::new(2.0, 0.0).unwrap();
        let streams = SeedStreams::new(3);
        let res =
            refine_trajectory(1, &bins, &t, &model, &mut streams.rng(Stream::Observations, 0))
                .unwrap();
        let obs =
            synth_observation(1.0, &bins, &model, &mut streams.rng(Stream::Observations, 0))
                .unwrap();
        let raw = expected_length(&BeliefState::new(obs.p).unwrap(), &bins).unwrap();
        assert_eq!(res.steps.len(), 1);
        assert_eq!(res.steps[0].refined_estimate, raw);
    }

    /// Seeded 1000-trajectory ensemble: refinement must not hurt on average.
    #[test]
    fn refine_ensemble_improves_mae() {
        let (refined, raw) = ensemble_maes(0xBEEF);
        assert!(
            refined < raw,
            "mean refined MAE {refined} should beat raw MAE {raw}"
        );
    }

    /// 1000 sizes Exp(1)*100 clipped to [1, 512], concentration 2.0.
    fn ensemble_maes(seed: u64) -> (f64, f64) {
        let bins = Bins::token_default();
        let t = build_transition(&bins).unwrap();
        let model = ObservationModel::new(2.0, 0.0).unwrap();
        let streams = SeedStreams::new(seed);
        let mut size_rng = streams.rng(Stream::Sizes, 0);
        let sizes: alloc::vec::Vec<u64> = (0..1000)
            .map(|_| (crate::workload::exp_sample(1.0, &mut size_rng) * 100.0).clamp(1.0, 512.0) as u64)
            .collect();
        let (raw, refined) =
            ensemble_mae(&sizes, &bins, &t, &model, &mut streams.rng(Stream::Observations, 0))
                .unwrap();
        (refined, raw)
    }

    proptest::proptest! {
        /// Every belief produced by an update stays on the simplex.
        #[test]
        fn updates_stay_on_simplex(
            raw_q in proptest::collection::vec(0.01f64..1.0, 10),
            raw_p in proptest::collection::vec(0.01f64..1.0, 10),
        ) {
            let bins = Bins::token_default();
            let t = build_transition(&bins).unwrap();
            let norm = |v: alloc::vec::Vec<f64>| {
                let s: f64 = v.iter().sum();
                v.into_iter().map(|x| x / s).collect::<alloc::vec::Vec<_>>()
            };
            let q = BeliefState::new(norm(raw_q)).unwrap();
            let p = Observation::new(norm(raw_p)).unwrap();
            // BeliefState::new re-validates the simplex invariant
            let out = bayes_update(&q, &p, &t).unwrap();
            proptest::prop_assert_eq!(out.k(), 10);
        }
    }
}
