//! Numerical evaluation of the closed-form mean response time for
//! rank-based M/G/1 scheduling with limited preemption, plus the generic
//! rank-interval machinery it specializes.

use core::fmt;

pub mod density;
pub mod intervals;
pub mod lemma;
pub mod quad;
pub mod soap;

pub use density::{DensityPair, ServiceModel};
pub use intervals::{intervals, Interval};
pub use lemma::{
    mean_response, mean_response_aggregate, moment_new, moment_old0_sq, moment_old1_sq,
    moment_old1_sq_own, rho_prime, EtCurve, LemmaTables, RecycledLimit,
};
pub use quad::{QuadratureSpec, Scheme};
pub use soap::soap_mean_response;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AnalyticError {
    /// A formula denominator vanished: offered load at or above one.
    Unstable { rho: f64 },
}

impl fmt::Display for AnalyticError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AnalyticError::Unstable { rho } => {
                write!(f, "system unstable: effective load {rho} >= 1")
            }
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for AnalyticError {}
