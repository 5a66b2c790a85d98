//! Generic rank-policy mean response assembly.
//!
//! A tagged job of size `x` waits for old work (jobs present at arrival)
//! and is delayed by new arrivals that outrank it at each age. Given the
//! moment ingredients of a concrete policy, the mean response time is
//!
//! ```text
//! E[T(x)] = lambda * sum_i E[(X_i^old)^2]
//!           / (2 (1 - lambda E[X_0^old]) (1 - lambda E[X^new(0)]))
//!         + integral_0^x da / (1 - lambda E[X^new(a)])
//! ```
//!
//! The limited-preemption closed form is this assembly with its specific
//! moments; first-come-first-served reduces it to the classical
//! Pollaczek-Khinchine waiting time.

use super::quad::{integrate, QuadratureSpec};
use super::AnalyticError;

/// Assemble the mean response time from policy moments.
///
/// `old_sq_sum` is the summed second moment of old-job contributions,
/// `old0_mean` the mean old-job contribution at the tagged job's worst
/// rank, and `new_mean(a)` the expected size of a delaying new arrival
/// when the tagged job has age `a`.
pub fn soap_mean_response(
    old_sq_sum: f64,
    old0_mean: f64,
    new_mean: impl Fn(f64) -> f64,
    lambda: f64,
    x: f64,
    quad: &QuadratureSpec,
) -> Result<f64, AnalyticError> {
    let d0 = 1.0 - lambda * old0_mean;
    let d1 = 1.0 - lambda * new_mean(0.0);
    if d0 <= 0.0 || d1 <= 0.0 {
        return Err(AnalyticError::Unstable { rho: 1.0 - d0.min(d1) });
    }
    let wait = lambda * old_sq_sum / (2.0 * d0 * d1);
    let residence = integrate(
        |a| {
            let d = 1.0 - lambda * new_mean(a);
            1.0 / d
        },
        0.0,
        x,
        quad,
    );
    Ok(wait + residence)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analytic::density::{DensityPair, ServiceModel};
    use crate::analytic::lemma::{
        mean_response, moment_old0_sq, moment_old1_sq_own, rho_prime, RecycledLimit,
    };

    #[test]
    fn zero_moments_pass_through() {
        let q = QuadratureSpec::default();
        for x in [0.1, 1.0, 7.5] {
            let v = soap_mean_response(0.0, 0.0, |_| 0.0, 0.5, x, &q).unwrap();
            assert!((v - x).abs() < 1e-9);
        }
    }

    #[test]
    fn fcfs_reduces_to_pollaczek_khinchine() {
        // ranked by arrival time: every old job contributes fully, no new
        // arrival ever outranks the tagged job
        let q = QuadratureSpec::default();
        let lambda = 0.5;
        let (ex, ex2) = (1.0, 2.0); // Exp(1)
        let x = 1.3;
        let v = soap_mean_response(ex2, ex, |_| 0.0, lambda, x, &q).unwrap();
        let pk_wait = lambda * ex2 / (2.0 * (1.0 - lambda * ex));
        assert!((v - (pk_wait + x)).abs() < 1e-9);
        // mean over x: E[T] = W + E[X] = 1 + 1 = 2 at lambda = 0.5
        assert!((pk_wait + ex - 2.0).abs() < 1e-12);
    }

    #[test]
    fn limited_preemption_specialization_matches() {
        let pair = DensityPair::Perfect { f: ServiceModel::Exponential { mean: 1.0 } };
        let q = QuadratureSpec::default();
        // five pinned pseudo-random tuples
        let cases = [
            (0.7, 0.9, 0.3, 0.5),
            (1.8, 1.2, 0.8, 0.6),
            (0.4, 0.4, 1.0, 0.7),
            (2.5, 2.0, 0.0, 0.4),
            (1.1, 1.6, 0.5, 0.55),
        ];
        for (x, r, c, lambda) in cases {
            let a0 = c * r;
            let old_sq =
                moment_old0_sq(r, &pair, &q) + moment_old1_sq_own(r, c, &pair, &q);
            let old0_mean = rho_prime(r, &pair, lambda, &q) / lambda;
            // at age 0 the job is still queued, so arrivals predicted
            // below r always delay it; once in service only ages below the
            // preemption threshold can be interrupted
            let new_mean = |a: f64| {
                if a <= 0.0 || a < a0 {
                    rho_prime((r - a).max(0.0), &pair, lambda, &q) / lambda
                } else {
                    0.0
                }
            };
            let via_soap = soap_mean_response(old_sq, old0_mean, new_mean, lambda, x, &q).unwrap();
            let direct =
                mean_response(x, r, c, lambda, &pair, &q, RecycledLimit::OwnThreshold).unwrap();
            assert!(
                (via_soap - direct).abs() / direct < 1e-5,
                "x={x} r={r} c={c} lambda={lambda}: {via_soap} vs {direct}"
            );
        }
    }

    #[test]
    fn vanishing_denominator_flagged() {
        let q = QuadratureSpec::default();
        let err = soap_mean_response(2.0, 2.0, |_| 0.0, 0.5, 1.0, &q);
        assert!(matches!(err, Err(AnalyticError::Unstable { .. })));
    }
}
