//! Joint size/prediction densities used by the closed-form evaluation.
//!
//! The perfect predictor concentrates all mass on the line `y = x`, which
//! generic quadrature cannot see, so every integral against it is reduced
//! analytically to a one-dimensional integral against the service density.

use crate::math;

/// Service-time density. The closed forms are evaluated for exponential
/// service; other distributions go through the simulator instead.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ServiceModel {
    Exponential { mean: f64 },
}

impl ServiceModel {
    pub fn mean(&self) -> f64 {
        match self {
            ServiceModel::Exponential { mean } => *mean,
        }
    }

    pub fn pdf(&self, x: f64) -> f64 {
        match self {
            ServiceModel::Exponential { mean } => {
                if x < 0.0 {
                    0.0
                } else {
                    math::exp(-x / mean) / mean
                }
            }
        }
    }

    /// P(X > x)
    pub fn tail(&self, x: f64) -> f64 {
        match self {
            ServiceModel::Exponential { mean } => {
                if x <= 0.0 {
                    1.0
                } else {
                    math::exp(-x / mean)
                }
            }
        }
    }

    /// Smallest `u` with `P(X > u) <= eps`.
    pub fn quantile_tail(&self, eps: f64) -> f64 {
        match self {
            ServiceModel::Exponential { mean } => -mean * math::ln(eps),
        }
    }
}

/// Joint density `g(x, y)` of true size `x` and prediction `y`, with
/// marginal `f(x)` over sizes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DensityPair {
    /// `g(x, y) = f(x) δ(y - x)`: the prediction equals the size.
    Perfect { f: ServiceModel },
    /// `y | x ~ Exp(mean x)`: `g(x, y) = f(x) e^{-y/x} / x`.
    ExponentialPredictor { f: ServiceModel },
}

impl DensityPair {
    pub fn service(&self) -> &ServiceModel {
        match self {
            DensityPair::Perfect { f } | DensityPair::ExponentialPredictor { f } => f,
        }
    }

    pub fn is_degenerate(&self) -> bool {
        matches!(self, DensityPair::Perfect { .. })
    }

    /// Joint density at `(x, y)`. Undefined (returns 0) for the degenerate
    /// pair, whose integrals use the 1-D reductions instead.
    pub fn g(&self, x: f64, y: f64) -> f64 {
        match self {
            DensityPair::Perfect { .. } => 0.0,
            DensityPair::ExponentialPredictor { f } => {
                if x <= 0.0 || y < 0.0 {
                    0.0
                } else {
                    f.pdf(x) * math::exp(-y / x) / x
                }
            }
        }
    }

    /// Conditional tail `P(Y > y | X = x)`.
    pub fn pred_tail_given(&self, x: f64, y: f64) -> f64 {
        match self {
            DensityPair::Perfect { .. } => {
                if y < x {
                    1.0
                } else {
                    0.0
                }
            }
            DensityPair::ExponentialPredictor { .. } => {
                if y <= 0.0 {
                    1.0
                } else if x <= 0.0 {
                    0.0
                } else {
                    math::exp(-y / x)
                }
            }
        }
    }

    /// Truncation point for the size axis.
    pub fn u_x(&self, eps: f64) -> f64 {
        self.service().quantile_tail(eps)
    }

    /// Truncation point for the prediction axis. The exponential
    /// predictor's marginal tail is heavier than the service tail
    /// (`P(Y > y) ~ e^{-2 sqrt(y/m)}`), so its cutoff is larger.
    pub fn u_y(&self, eps: f64) -> f64 {
        match self {
            DensityPair::Perfect { f } => f.quantile_tail(eps),
            DensityPair::ExponentialPredictor { f } => {
                let l = math::ln(eps);
                f.mean() * 0.25 * l * l
            }
        }
    }
}
