//! Seeded workload generation: arrival processes, service-time draws and
//! size predictions.
//!
//! One master seed is split into independent named streams so that changing
//! one generator (say, the predictor) does not perturb the others.

use alloc::vec::Vec;
use core::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

use crate::domain::{BeliefState, Bins};
use crate::math;
use crate::refine::{synth_observation, ObservationModel};

#[derive(Debug, Clone, PartialEq)]
pub enum WorkloadError {
    NonPositiveRate(f64),
    NonPositiveMean(f64),
    BadPareto,
}

impl fmt::Display for WorkloadError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            WorkloadError::NonPositiveRate(r) => write!(f, "arrival rate must be positive, got {r}"),
            WorkloadError::NonPositiveMean(m) => write!(f, "service mean must be positive, got {m}"),
            WorkloadError::BadPareto => write!(f, "bounded Pareto needs shape > 0 and 0 < lo < hi"),
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for WorkloadError {}

/// Service-time distribution; houses the density `f(x)`.
#[derive(Debug, Clone, PartialEq)]
pub enum ServiceDist {
    Exponential { mean: f64 },
    Deterministic { value: f64 },
    BoundedPareto { shape: f64, lo: f64, hi: f64 },
}

impl ServiceDist {
    pub fn validate(&self) -> Result<(), WorkloadError> {
        match self {
            ServiceDist::Exponential { mean } | ServiceDist::Deterministic { value: mean } => {
                if *mean > 0.0 {
                    Ok(())
                } else {
                    Err(WorkloadError::NonPositiveMean(*mean))
                }
            }
            ServiceDist::BoundedPareto { shape, lo, hi } => {
                if *shape > 0.0 && *lo > 0.0 && lo < hi {
                    Ok(())
                } else {
                    Err(WorkloadError::BadPareto)
                }
            }
        }
    }

    pub fn mean(&self) -> f64 {
        match self {
            ServiceDist::Exponential { mean } => *mean,
            ServiceDist::Deterministic { value } => *value,
            ServiceDist::BoundedPareto { shape, lo, hi } => {
                let a = *shape;
                if (a - 1.0).abs() < 1e-12 {
                    let denom = 1.0 - lo / hi;
                    lo * math::ln(hi / lo) / denom
                } else {
                    let num = math::powf(*lo, a) * a / (a - 1.0)
                        * (math::powf(*lo, 1.0 - a) - math::powf(*hi, 1.0 - a));
                    num / (1.0 - math::powf(lo / hi, a))
                }
            }
        }
    }
}

/// Size-prediction model; `perfect` always returns the true size.
#[derive(Debug, Clone, PartialEq)]
pub enum PredictorModel {
    Perfect,
    /// Prediction drawn Exp(mean `x`) for a job of true size `x`.
    ExponentialNoise,
    /// Synthetic belief vector concentrated near the true bin.
    BinnedSynthetic { model: ObservationModel, bins: Bins },
    /// Per-unit refined predictions with Markov step noise around the true
    /// remaining length.
    MarkovTrajectory { step_noise: f64 },
}

/// Arrival process.
#[derive(Debug, Clone, PartialEq)]
pub enum ArrivalSpec {
    Poisson { rate: f64, stop: PoissonStop },
    Burst { n: u64, at: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub enum PoissonStop {
    Count(u64),
    Horizon(f64),
}

/// Named RNG streams derived from one master seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Arrivals,
    Sizes,
    Predictions,
    Observations,
}

impl Stream {
    fn id(self) -> u64 {
        match self {
            Stream::Arrivals => 1,
            Stream::Sizes => 2,
            Stream::Predictions => 3,
            Stream::Observations => 4,
        }
    }
}

/// Splits a master seed into independent per-stream, per-replication RNGs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SeedStreams {
    master: u64,
}

impl SeedStreams {
    pub fn new(master: u64) -> Self {
        SeedStreams { master }
    }

    pub fn master(&self) -> u64 {
        self.master
    }

    /// RNG for `stream` in replication `rep`. Streams are independent ChaCha
    /// streams of a cipher keyed by (master, rep).
    pub fn rng(&self, stream: Stream, rep: u64) -> ChaCha12Rng {
        let mut rng = ChaCha12Rng::seed_from_u64(splitmix(self.master ^ splitmix(rep)));
        rng.set_stream(stream.id());
        rng
    }
}

fn splitmix(seed: u64) -> u64 {
    let mut z = seed.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Draw Exp(mean) by inversion. Uses `1 - u` so the argument to `ln` is
/// never zero.
pub fn exp_sample<R: Rng>(mean: f64, rng: &mut R) -> f64 {
    let u: f64 = rng.gen::<f64>();
    -mean * math::ln(1.0 - u)
}

/// Ordered arrival times for the given spec.
pub fn gen_arrivals<R: Rng>(spec: &ArrivalSpec, rng: &mut R) -> Result<Vec<f64>, WorkloadError> {
    match spec {
        ArrivalSpec::Poisson { rate, stop } => {
            if *rate <= 0.0 {
                return Err(WorkloadError::NonPositiveRate(*rate));
            }
            let mut times = Vec::new();
            let mut t = 0.0;
            match stop {
                PoissonStop::Count(n) => {
                    for _ in 0..*n {
                        t += exp_sample(1.0 / rate, rng);
                        times.push(t);
                    }
                }
                PoissonStop::Horizon(h) => loop {
                    t += exp_sample(1.0 / rate, rng);
                    if t > *h {
                        break;
                    }
                    times.push(t);
                },
            }
            Ok(times)
        }
        ArrivalSpec::Burst { n, at } => Ok(alloc::vec![*at; *n as usize]),
    }
}

/// One service-time draw.
pub fn sample_service<R: Rng>(dist: &ServiceDist, rng: &mut R) -> f64 {
    match dist {
        ServiceDist::Exponential { mean } => exp_sample(*mean, rng),
        ServiceDist::Deterministic { value } => *value,
        ServiceDist::BoundedPareto { shape, lo, hi } => {
            // inverse CDF of the truncated Pareto
            let a = *shape;
            let u: f64 = rng.gen();
            let la = math::powf(*lo, -a);
            let ha = math::powf(*hi, -a);
            math::powf(la - u * (la - ha), -1.0 / a)
        }
    }
}

/// Prediction output: either a scalar initial prediction, a full per-unit
/// trajectory, or an initial belief over bins.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub initial: f64,
    pub trajectory: Option<Vec<f64>>,
    pub bin_belief: Option<BeliefState>,
}

/// Sample a prediction for a job of true size `x`.
///
/// - `perfect`: the true size.
/// - `exponential-noise`: Exp(mean `x`).
/// - `binned-synthetic`: a belief vector concentrated near the true bin; the
///   scalar prediction is the midpoint of its peak bin.
/// - `markov-trajectory`: remaining-length estimates after each unit, each
///   step perturbed by centered Gaussian noise of the configured scale. With
///   zero noise the trajectory is exactly `[x, x-1, ..., 1]`.
pub fn sample_prediction<R: Rng>(model: &PredictorModel, x: f64, rng: &mut R) -> Prediction {
    match model {
        PredictorModel::Perfect => Prediction { initial: x, trajectory: None, bin_belief: None },
        PredictorModel::ExponentialNoise => {
            Prediction { initial: exp_sample(x, rng), trajectory: None, bin_belief: None }
        }
        PredictorModel::BinnedSynthetic { model, bins } => {
            let clipped = x.clamp(bins.lower(), bins.upper());
            let obs = synth_observation(clipped, bins, model, rng)
                .expect("clipped size is inside the binned range");
            let belief = BeliefState::new(obs.p.clone()).expect("observation is a simplex");
            let initial = bins.midpoint(belief.argmax()).expect("argmax bin exists");
            Prediction { initial, trajectory: None, bin_belief: Some(belief) }
        }
        PredictorModel::MarkovTrajectory { step_noise } => {
            let units = math::ceil(x).max(1.0) as usize;
            let mut traj = Vec::with_capacity(units);
            let mut prev = x;
            for t in 0..units {
                let drift = if t == 0 { 0.0 } else { 1.0 };
                let noise =
                    if *step_noise > 0.0 { gaussian(rng) * *step_noise } else { 0.0 };
                let y = (prev - drift + noise).max(0.0);
                traj.push(y);
                prev = y;
            }
            Prediction { initial: traj[0], trajectory: Some(traj), bin_belief: None }
        }
    }
}

/// Standard normal via Box-Muller.
fn gaussian<R: Rng>(rng: &mut R) -> f64 {
    let u1: f64 = rng.gen::<f64>();
    let u2: f64 = rng.gen::<f64>();
    math::sqrt(-2.0 * math::ln(1.0 - u1)) * libm::cos(2.0 * core::f64::consts::PI * u2)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn burst_arrivals() {
        let mut rng = SeedStreams::new(1).rng(Stream::Arrivals, 0);
        let spec = ArrivalSpec::Burst { n: 5, at: 0.0 };
        assert_eq!(gen_arrivals(&spec, &mut rng).unwrap(), alloc::vec![0.0; 5]);
    }

    #[test]
    fn poisson_mean_interarrival() {
        let mut rng = SeedStreams::new(42).rng(Stream::Arrivals, 0);
        let n = 1_000_000u64;
        let spec = ArrivalSpec::Poisson { rate: 0.5, stop: PoissonStop::Count(n) };
        let times = gen_arrivals(&spec, &mut rng).unwrap();
        assert_eq!(times.len(), n as usize);
        assert!(times.windows(2).all(|w| w[0] <= w[1]));
        // mean inter-arrival = last / n; the asserted [1.99, 2.01] band is
        // wider than the 3-sigma band around 2.0, [1.994, 2.006]
        let mean = times.last().unwrap() / n as f64;
        assert!(mean > 1.99 && mean < 2.01, "mean inter-arrival {mean}");
    }

    #[test]
    fn poisson_deterministic_per_seed() {
        let streams = SeedStreams::new(7);
        let spec = ArrivalSpec::Poisson { rate: 0.5, stop: PoissonStop::Count(3) };
        let a = gen_arrivals(&spec, &mut streams.rng(Stream::Arrivals, 0)).unwrap();
        let b = gen_arrivals(&spec, &mut streams.rng(Stream::Arrivals, 0)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn rejects_bad_specs() {
        let mut rng = SeedStreams::new(1).rng(Stream::Arrivals, 0);
        assert!(gen_arrivals(
            &ArrivalSpec::Poisson { rate: 0.0, stop: PoissonStop::Count(1) },
            &mut rng
        )
        .is_err());
        // an empty workload is allowed and yields an empty list
        assert!(gen_arrivals(&ArrivalSpec::Burst { n: 0, at: 0.0 }, &mut rng).unwrap().is_empty());
    }

    #[test]
    fn deterministic_service() {
        let mut rng = SeedStreams::new(1).rng(Stream::Sizes, 0);
        let d = ServiceDist::Deterministic { value: 3.5 };
        assert_eq!(sample_service(&d, &mut rng), 3.5);
    }

    #[test]
    fn exponential_service_moments() {
        let mut rng = SeedStreams::new(9).rng(Stream::Sizes, 0);
        let d = ServiceDist::Exponential { mean: 1.0 };
        let n = 1_000_000;
        let mut sum = 0.0;
        let mut tail = 0u64;
        for _ in 0..n {
            let x = sample_service(&d, &mut rng);
            sum += x;
            if x > 2.0 {
                tail += 1;
            }
        }
        let mean = sum / n as f64;
        assert!(mean > 0.997 && mean < 1.003, "sample mean {mean}");
        // P(X > 2) = e^{-2}; 3-sigma band of the Bernoulli estimator
        let p = tail as f64 / n as f64;
        let p0 = math::exp(-2.0);
        let sigma = math::sqrt(p0 * (1.0 - p0) / n as f64);
        assert!((p - p0).abs() < 3.0 * sigma, "tail estimate {p} vs {p0}");
    }

    #[test]
    fn perfect_prediction_is_exact() {
        let mut rng = SeedStreams::new(1).rng(Stream::Predictions, 0);
        let p = sample_prediction(&PredictorModel::Perfect, 7.0, &mut rng);
        assert_eq!(p.initial, 7.0);
    }

    #[test]
    fn exponential_noise_mean() {
        let mut rng = SeedStreams::new(3).rng(Stream::Predictions, 0);
        let n = 1_000_000;
        let mut sum = 0.0;
        for _ in 0..n {
            sum += sample_prediction(&PredictorModel::ExponentialNoise, 2.0, &mut rng).initial;
        }
        let mean = sum / n as f64;
        // Exp(mean 2): sd of the sample mean is 2/sqrt(n)
        let sigma = 2.0 / math::sqrt(n as f64);
        assert!((mean - 2.0).abs() < 3.0 * sigma, "sample mean {mean}");
    }

    #[test]
    fn noiseless_trajectory_counts_down() {
        let mut rng = SeedStreams::new(1).rng(Stream::Predictions, 0);
        let p = sample_prediction(&PredictorModel::MarkovTrajectory { step_noise: 0.0 }, 5.0, &mut rng);
        assert_eq!(p.trajectory.unwrap(), alloc::vec![5.0, 4.0, 3.0, 2.0, 1.0]);
    }

    #[test]
    fn seeded_workloads_are_identical() {
        let streams = SeedStreams::new(123);
        for stream in [Stream::Sizes, Stream::Predictions] {
            let mut a = streams.rng(stream, 5);
            let mut b = streams.rng(stream, 5);
            for _ in 0..100 {
                assert_eq!(a.gen::<u64>(), b.gen::<u64>());
            }
        }
        // distinct streams diverge
        let mut a = streams.rng(Stream::Sizes, 0);
        let mut b = streams.rng(Stream::Predictions, 0);
        assert_ne!(a.gen::<u64>(), b.gen::<u64>());
    }
}
