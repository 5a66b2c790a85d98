//! Experiment configuration: a versioned TOML document mapped onto the core
//! library's types. Unknown keys are rejected so typos fail loudly, and every
//! scalar can be overridden from the command line (flag > file > default).

use std::fmt;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use lpsim_core::analytic::{DensityPair, QuadratureSpec, RecycledLimit, ServiceModel};
use lpsim_core::policy::{BeliefEstimate, PolicyKind, PredictionSource, RankPolicy};
use lpsim_core::refine::ObservationModel;
use lpsim_core::workload::PoissonStop;
use lpsim_core::{
    ArrivalSpec, Bins, PreemptionCost, PredictorModel, ServiceDist, SimConfig, SimMode,
};

pub const SCHEMA_VERSION: u32 = 1;

/// Environment variable naming the default output directory.
pub const OUTPUT_DIR_ENV: &str = "LPSIM_OUTPUT_DIR";

#[derive(Debug)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl std::error::Error for ConfigError {}

fn err<T>(msg: impl Into<String>) -> Result<T, ConfigError> {
    Err(ConfigError(msg.into()))
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub simulation: SimulationSection,
    pub arrival: ArrivalSection,
    pub service: ServiceSection,
    #[serde(default)]
    pub predictor: PredictorSection,
    pub policy: PolicySection,
    #[serde(default)]
    pub bins: Option<BinsSection>,
    #[serde(default)]
    pub observation: Option<ObservationSection>,
    #[serde(default)]
    pub quadrature: QuadratureSection,
    #[serde(default)]
    pub sweep: Option<SweepSection>,
    #[serde(default)]
    pub validate: Option<ValidateSection>,
    #[serde(default)]
    pub refine: Option<RefineSection>,
    #[serde(default)]
    pub analyze: Option<AnalyzeSection>,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationSection {
    pub mode: ModeName,
    pub seed: u64,
    #[serde(default = "default_replications")]
    pub replications: u64,
    #[serde(default = "default_warmup")]
    pub warmup_fraction: f64,
    /// Batch-mode memory budget; omitted means unlimited.
    #[serde(default)]
    pub memory_budget: Option<f64>,
    #[serde(default)]
    pub preemption_cost: PreemptionCostName,
    #[serde(default = "default_recompute_rate")]
    pub recompute_rate: f64,
}

fn default_replications() -> u64 {
    1
}

fn default_warmup() -> f64 {
    0.2
}

fn default_recompute_rate() -> f64 {
    8.0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModeName {
    Continuous,
    Batch,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum PreemptionCostName {
    #[default]
    Hold,
    Discard,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ArrivalSection {
    /// Poisson arrivals; exactly one of `count` / `horizon` must be set.
    Poisson {
        rate: f64,
        #[serde(default)]
        count: Option<u64>,
        #[serde(default)]
        horizon: Option<f64>,
    },
    /// `n` simultaneous arrivals at time `at`.
    Burst {
        n: u64,
        #[serde(default)]
        at: f64,
    },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ServiceSection {
    Exponential { mean: f64 },
    Deterministic { value: f64 },
    BoundedPareto { shape: f64, lo: f64, hi: f64 },
}

#[derive(Debug, Clone, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PredictorSection {
    #[default]
    Perfect,
    ExponentialNoise,
    /// Synthetic belief vectors over the `[bins]` layout.
    BinnedSynthetic {
        concentration: f64,
        #[serde(default)]
        mislabel_rate: f64,
    },
    MarkovTrajectory {
        step_noise: f64,
    },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicySection {
    pub kind: PolicyName,
    /// Preemption constant for `sprpt_lp`.
    #[serde(default)]
    pub c: Option<f64>,
    #[serde(default)]
    pub source: SourceName,
    #[serde(default)]
    pub belief_estimate: BeliefEstimateName,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyName {
    Fcfs,
    Spjf,
    Sprpt,
    SprptLp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SourceName {
    #[default]
    Static,
    Trajectory,
    Belief,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum BeliefEstimateName {
    #[default]
    ArgmaxMidpoint,
    Expected,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BinsSection {
    /// Use the built-in token bin layout instead of explicit boundaries.
    #[serde(default)]
    pub token_default: bool,
    #[serde(default)]
    pub boundaries: Vec<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObservationSection {
    pub concentration: f64,
    #[serde(default)]
    pub mislabel_rate: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuadratureSection {
    #[serde(default = "default_rel_tol")]
    pub rel_tol: f64,
    #[serde(default = "default_abs_tol")]
    pub abs_tol: f64,
    #[serde(default = "default_tail_eps")]
    pub tail_eps: f64,
}

fn default_rel_tol() -> f64 {
    QuadratureSpec::default().rel_tol
}

fn default_abs_tol() -> f64 {
    QuadratureSpec::default().abs_tol
}

fn default_tail_eps() -> f64 {
    QuadratureSpec::default().tail_eps
}

impl Default for QuadratureSection {
    fn default() -> Self {
        QuadratureSection {
            rel_tol: default_rel_tol(),
            abs_tol: default_abs_tol(),
            tail_eps: default_tail_eps(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    /// Arrival-rate axis; empty keeps the base rate.
    #[serde(default)]
    pub lambdas: Vec<f64>,
    /// Preemption-constant axis; empty keeps the base policy.
    #[serde(default)]
    pub cs: Vec<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ValidateSection {
    #[serde(default)]
    pub lambdas: Vec<f64>,
    #[serde(default)]
    pub cs: Vec<f64>,
    /// Maximum tolerated relative gap between the simulated and analytic
    /// mean response time.
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
    /// Density pair used on the analytic side; defaults to the pair implied
    /// by `[predictor]`. Setting this to something else is a deliberate
    /// mismatch (negative control).
    #[serde(default)]
    pub analytic_predictor: Option<AnalyticPredictorName>,
    #[serde(default)]
    pub recycled_limit: RecycledLimitName,
}

fn default_tolerance() -> f64 {
    0.1
}

impl Default for ValidateSection {
    fn default() -> Self {
        ValidateSection {
            lambdas: Vec::new(),
            cs: Vec::new(),
            tolerance: default_tolerance(),
            analytic_predictor: None,
            recycled_limit: RecycledLimitName::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnalyticPredictorName {
    Perfect,
    ExponentialNoise,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum RecycledLimitName {
    /// Recycled-job weight limited by the job's own preemption threshold.
    #[default]
    OwnThreshold,
    /// Recycled-job weight limited by the tagged job's threshold.
    TaggedThreshold,
}

impl From<RecycledLimitName> for RecycledLimit {
    fn from(name: RecycledLimitName) -> Self {
        match name {
            RecycledLimitName::OwnThreshold => RecycledLimit::OwnThreshold,
            RecycledLimitName::TaggedThreshold => RecycledLimit::TaggedThreshold,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RefineSection {
    #[serde(default = "default_ensemble_size")]
    pub ensemble_size: u64,
    /// Mean of the exponential size law the ensemble is drawn from.
    #[serde(default = "default_size_mean")]
    pub size_mean: f64,
    #[serde(default = "default_clip_lo")]
    pub clip_lo: u64,
    #[serde(default = "default_clip_hi")]
    pub clip_hi: u64,
    /// Cap on how many trajectories are written to the per-iteration CSV;
    /// the MAE summary always covers the whole ensemble.
    #[serde(default = "default_emit_trajectories")]
    pub emit_trajectories: u64,
}

fn default_ensemble_size() -> u64 {
    1000
}

fn default_size_mean() -> f64 {
    100.0
}

fn default_clip_lo() -> u64 {
    1
}

fn default_clip_hi() -> u64 {
    512
}

fn default_emit_trajectories() -> u64 {
    10
}

impl Default for RefineSection {
    fn default() -> Self {
        RefineSection {
            ensemble_size: default_ensemble_size(),
            size_mean: default_size_mean(),
            clip_lo: default_clip_lo(),
            clip_hi: default_clip_hi(),
            emit_trajectories: default_emit_trajectories(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalyzeSection {
    #[serde(default)]
    pub lambdas: Vec<f64>,
    #[serde(default)]
    pub cs: Vec<f64>,
    /// Also emit the per-size response-time curve at each grid point.
    #[serde(default)]
    pub curve: bool,
    #[serde(default)]
    pub recycled_limit: RecycledLimitName,
}

#[derive(Debug, Clone, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    /// Output directory; falls back to `LPSIM_OUTPUT_DIR`, then `.`.
    #[serde(default)]
    pub dir: Option<PathBuf>,
}

/// Command-line overrides for scalar config fields.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub rate: Option<f64>,
    pub c: Option<f64>,
    pub replications: Option<u64>,
    pub warmup_fraction: Option<f64>,
    pub out_dir: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn load(path: &Path, overrides: &Overrides) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg: ExperimentConfig = toml::from_str(&text)
            .map_err(|e| ConfigError(format!("{}: {e}", path.display())))?;
        if cfg.schema_version != SCHEMA_VERSION {
            return err(format!(
                "unsupported schema_version {} (expected {SCHEMA_VERSION})",
                cfg.schema_version
            ));
        }
        cfg.apply(overrides);
        Ok(cfg)
    }

    fn apply(&mut self, ov: &Overrides) {
        if let Some(seed) = ov.seed {
            self.simulation.seed = seed;
        }
        if let Some(reps) = ov.replications {
            self.simulation.replications = reps;
        }
        if let Some(w) = ov.warmup_fraction {
            self.simulation.warmup_fraction = w;
        }
        if let Some(rate) = ov.rate {
            if let ArrivalSection::Poisson { rate: r, .. } = &mut self.arrival {
                *r = rate;
            }
        }
        if let Some(c) = ov.c {
            self.policy.c = Some(c);
        }
        if let Some(dir) = &ov.out_dir {
            self.output.dir = Some(dir.clone());
        }
    }

    /// Resolve the output directory: flag/file, then environment, then `.`.
    pub fn output_dir(&self) -> PathBuf {
        if let Some(dir) = &self.output.dir {
            return dir.clone();
        }
        if let Ok(dir) = std::env::var(OUTPUT_DIR_ENV) {
            if !dir.is_empty() {
                return PathBuf::from(dir);
            }
        }
        PathBuf::from(".")
    }

    pub fn arrival_spec(&self) -> Result<ArrivalSpec, ConfigError> {
        match &self.arrival {
            ArrivalSection::Poisson { rate, count, horizon } => {
                if *rate <= 0.0 {
                    return err(format!("arrival.rate must be positive, got {rate}"));
                }
                let stop = match (count, horizon) {
                    (Some(n), None) => PoissonStop::Count(*n),
                    (None, Some(h)) => PoissonStop::Horizon(*h),
                    (None, None) => {
                        return err("poisson arrivals need arrival.count or arrival.horizon")
                    }
                    (Some(_), Some(_)) => {
                        return err("arrival.count and arrival.horizon are mutually exclusive")
                    }
                };
                Ok(ArrivalSpec::Poisson { rate: *rate, stop })
            }
            ArrivalSection::Burst { n, at } => Ok(ArrivalSpec::Burst { n: *n, at: *at }),
        }
    }

    pub fn service_dist(&self) -> Result<ServiceDist, ConfigError> {
        let dist = match &self.service {
            ServiceSection::Exponential { mean } => ServiceDist::Exponential { mean: *mean },
            ServiceSection::Deterministic { value } => {
                ServiceDist::Deterministic { value: *value }
            }
            ServiceSection::BoundedPareto { shape, lo, hi } => {
                ServiceDist::BoundedPareto { shape: *shape, lo: *lo, hi: *hi }
            }
        };
        dist.validate().map_err(|e| ConfigError(format!("service: {e}")))?;
        Ok(dist)
    }

    pub fn bins(&self) -> Result<Option<Bins>, ConfigError> {
        let Some(section) = &self.bins else { return Ok(None) };
        if section.token_default {
            if !section.boundaries.is_empty() {
                return err("bins.token_default and bins.boundaries are mutually exclusive");
            }
            return Ok(Some(Bins::token_default()));
        }
        Bins::new(section.boundaries.clone())
            .map(Some)
            .map_err(|e| ConfigError(format!("bins.boundaries: {e}")))
    }

    pub fn observation_model(&self) -> Result<Option<ObservationModel>, ConfigError> {
        let Some(section) = &self.observation else { return Ok(None) };
        ObservationModel::new(section.concentration, section.mislabel_rate)
            .map(Some)
            .map_err(|e| ConfigError(format!("observation: {e}")))
    }

    pub fn predictor_model(&self) -> Result<PredictorModel, ConfigError> {
        match &self.predictor {
            PredictorSection::Perfect => Ok(PredictorModel::Perfect),
            PredictorSection::ExponentialNoise => Ok(PredictorModel::ExponentialNoise),
            PredictorSection::BinnedSynthetic { concentration, mislabel_rate } => {
                let bins = self
                    .bins()?
                    .ok_or_else(|| ConfigError("binned_synthetic predictor needs [bins]".into()))?;
                let model = ObservationModel::new(*concentration, *mislabel_rate)
                    .map_err(|e| ConfigError(format!("predictor: {e}")))?;
                Ok(PredictorModel::BinnedSynthetic { model, bins })
            }
            PredictorSection::MarkovTrajectory { step_noise } => {
                Ok(PredictorModel::MarkovTrajectory { step_noise: *step_noise })
            }
        }
    }

    pub fn policy(&self) -> Result<RankPolicy, ConfigError> {
        let kind = match self.policy.kind {
            PolicyName::Fcfs => PolicyKind::Fcfs,
            PolicyName::Spjf => PolicyKind::Spjf,
            PolicyName::Sprpt => PolicyKind::Sprpt,
            PolicyName::SprptLp => {
                let c = self
                    .policy
                    .c
                    .ok_or_else(|| ConfigError("policy.c is required for sprpt_lp".into()))?;
                if !(0.0..=1.0).contains(&c) {
                    return err(format!("policy.c must be in [0, 1], got {c}"));
                }
                PolicyKind::SprptLp { c }
            }
        };
        let source = match self.policy.source {
            SourceName::Static => PredictionSource::Static,
            SourceName::Trajectory => PredictionSource::Trajectory,
            SourceName::Belief => PredictionSource::Belief,
        };
        let mut policy = RankPolicy::with_source(kind, source);
        policy.belief_estimate = match self.policy.belief_estimate {
            BeliefEstimateName::ArgmaxMidpoint => BeliefEstimate::ArgmaxMidpoint,
            BeliefEstimateName::Expected => BeliefEstimate::Expected,
        };
        Ok(policy)
    }

    pub fn sim_config(&self) -> Result<SimConfig, ConfigError> {
        let mode = match self.simulation.mode {
            ModeName::Continuous => SimMode::Continuous,
            ModeName::Batch => SimMode::Batch,
        };
        let mut cfg = SimConfig::new(
            mode,
            self.arrival_spec()?,
            self.service_dist()?,
            self.predictor_model()?,
            self.policy()?,
            self.simulation.seed,
        );
        cfg.replications = self.simulation.replications.max(1);
        if !(0.0..1.0).contains(&self.simulation.warmup_fraction) {
            return err(format!(
                "simulation.warmup_fraction must be in [0, 1), got {}",
                self.simulation.warmup_fraction
            ));
        }
        cfg.warmup_fraction = self.simulation.warmup_fraction;
        if let Some(budget) = self.simulation.memory_budget {
            if budget <= 0.0 {
                return err(format!(
                    "simulation.memory_budget must be positive, got {budget}"
                ));
            }
            cfg.memory_budget = budget;
        }
        cfg.preemption_cost = match self.simulation.preemption_cost {
            PreemptionCostName::Hold => PreemptionCost::Hold,
            PreemptionCostName::Discard => {
                if self.simulation.recompute_rate <= 0.0 {
                    return err(format!(
                        "simulation.recompute_rate must be positive, got {}",
                        self.simulation.recompute_rate
                    ));
                }
                PreemptionCost::Discard { recompute_rate: self.simulation.recompute_rate }
            }
        };
        cfg.bins = self.bins()?;
        cfg.observation = self.observation_model()?;
        Ok(cfg)
    }

    pub fn quadrature(&self) -> QuadratureSpec {
        let mut spec = QuadratureSpec::default();
        spec.rel_tol = self.quadrature.rel_tol;
        spec.abs_tol = self.quadrature.abs_tol;
        spec.tail_eps = self.quadrature.tail_eps;
        spec
    }

    /// Density pair for the analytic side. Only exponential service has a
    /// closed-form implementation; `override_pred` (from `[validate]`)
    /// replaces the pair implied by `[predictor]`.
    pub fn density_pair(
        &self,
        override_pred: Option<AnalyticPredictorName>,
    ) -> Result<DensityPair, ConfigError> {
        let f = match &self.service {
            ServiceSection::Exponential { mean } => ServiceModel::Exponential { mean: *mean },
            other => {
                return err(format!(
                    "analytic evaluation supports exponential service only, got {other:?}"
                ))
            }
        };
        let name = match override_pred {
            Some(name) => name,
            None => match &self.predictor {
                PredictorSection::Perfect => AnalyticPredictorName::Perfect,
                PredictorSection::ExponentialNoise => AnalyticPredictorName::ExponentialNoise,
                other => {
                    return err(format!(
                        "analytic evaluation needs a perfect or exponential_noise predictor, \
                         got {other:?}"
                    ))
                }
            },
        };
        Ok(match name {
            AnalyticPredictorName::Perfect => DensityPair::Perfect { f },
            AnalyticPredictorName::ExponentialNoise => DensityPair::ExponentialPredictor { f },
        })
    }

    /// Preemption constant the configured policy corresponds to in the
    /// closed form: SPJF pins it at 0, SPRPT at 1.
    pub fn policy_c(&self) -> Result<f64, ConfigError> {
        match self.policy.kind {
            PolicyName::Spjf => Ok(0.0),
            PolicyName::Sprpt => Ok(1.0),
            PolicyName::SprptLp => self
                .policy
                .c
                .ok_or_else(|| ConfigError("policy.c is required for sprpt_lp".into())),
            PolicyName::Fcfs => {
                err("the closed form covers the predicted-size policy family, not fcfs")
            }
        }
    }
}
