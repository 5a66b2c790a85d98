//! Mean response time of limited-preemption scheduling in the M/G/1 queue.
//!
//! For a tagged job of true size `x` and prediction `r` under preemption
//! constant `C` (preemption threshold `a0 = C * r`):
//!
//! ```text
//! E[T(x, r)] = lambda * (E[(X0_old[r])^2] + E[(X1_old[r])^2]) / (2 (1 - rho'_r)^2)
//!            + integral_0^min(a0, x) da / (1 - rho'_{(r - a)+})
//!            + max(0, x - a0)
//! ```
//!
//! where `rho'_r` is the load contributed by jobs predicted below `r`. The
//! `min`/`max` guards extend the printed form to jobs that finish while
//! still preemptable.
//!
//! The recycled second moment `E[(X1_old[r])^2]` is offered in two
//! conventions, because the printed integration limit does not reduce to
//! the classical preemptive (`C = 1`) and non-preemptive (`C = 0`)
//! formulas; see [`RecycledLimit`].

use alloc::vec::Vec;

use crate::math;

use super::density::DensityPair;
use super::quad::{gauss_nodes, integrate, QuadratureSpec};
use super::AnalyticError;

/// Load contributed by jobs with prediction below `r`:
/// `lambda * integral_0^r integral_0^inf x g(x, y) dx dy`.
pub fn rho_prime(r: f64, pair: &DensityPair, lambda: f64, quad: &QuadratureSpec) -> f64 {
    if r <= 0.0 {
        return 0.0;
    }
    match pair {
        DensityPair::Perfect { f } => {
            let u = f.quantile_tail(quad.tail_eps);
            lambda * integrate(|x| x * f.pdf(x), 0.0, r.min(u), quad)
        }
        _ => {
            let ux = pair.u_x(quad.tail_eps);
            lambda
                * integrate(
                    |y| integrate(|x| x * pair.g(x, y), 0.0, ux, quad),
                    0.0,
                    r,
                    quad,
                )
        }
    }
}

/// Expected size of a fresh arrival that outranks the tagged job at age
/// `a`: `rho'_{r-a} / lambda`. Zero once the range collapses.
pub fn moment_new(
    r: f64,
    a: f64,
    pair: &DensityPair,
    lambda: f64,
    quad: &QuadratureSpec,
) -> f64 {
    if a >= r {
        return 0.0;
    }
    rho_prime(r - a, pair, lambda, quad) / lambda
}

/// Second moment of jobs whose prediction keeps them below rank `r` for
/// their whole service: `integral_0^r integral x^2 g(x, y) dx dy`.
pub fn moment_old0_sq(r: f64, pair: &DensityPair, quad: &QuadratureSpec) -> f64 {
    if r <= 0.0 {
        return 0.0;
    }
    match pair {
        DensityPair::Perfect { f } => {
            let u = f.quantile_tail(quad.tail_eps);
            integrate(|x| x * x * f.pdf(x), 0.0, r.min(u), quad)
        }
        _ => {
            let ux = pair.u_x(quad.tail_eps);
            integrate(
                |y| integrate(|x| x * x * pair.g(x, y), 0.0, ux, quad),
                0.0,
                r,
                quad,
            )
        }
    }
}

/// Recycled second moment with the printed integration limit: predictions
/// from `r + a0` up, residual weight `(x - (y - r))^2`.
///
/// Perfect predictor reduction: the line mass forces `x = y`, leaving
/// `r^2 * P(X > r + a0)`.
pub fn moment_old1_sq(r: f64, a0: f64, pair: &DensityPair, quad: &QuadratureSpec) -> f64 {
    match pair {
        DensityPair::Perfect { f } => r * r * f.tail(r + a0),
        _ => {
            let ux = pair.u_x(quad.tail_eps);
            let uy = pair.u_y(quad.tail_eps);
            integrate(
                |y| {
                    let s = y - r;
                    integrate(|x| pair.g(x, y) * (x - s) * (x - s), s, s + ux, quad)
                },
                r + a0,
                uy,
                quad,
            )
        }
    }
}

/// Recycled second moment with the limit driven by the old job's own
/// preemption threshold: an old job with prediction `y >= r` drops below
/// rank `r` for good after `b1 = min(y - r, C * y)` units of service, and
/// its residual `(x - b1)+` is what the tagged job waits for.
///
/// At `C = 1` this reduces to the classical preemptive
/// remaining-size-ordering moment, and at `C = 0` to the full tail second
/// moment of the non-preemptive formula.
pub fn moment_old1_sq_own(r: f64, c: f64, pair: &DensityPair, quad: &QuadratureSpec) -> f64 {
    match pair {
        DensityPair::Perfect { f } => {
            // x = y = t >= r; residual max(r, (1 - C) t)
            let u = f.quantile_tail(quad.tail_eps);
            integrate(
                |t| {
                    let w = r.max((1.0 - c) * t);
                    f.pdf(t) * w * w
                },
                r,
                u,
                quad,
            )
        }
        _ => {
            let ux = pair.u_x(quad.tail_eps);
            let uy = pair.u_y(quad.tail_eps);
            let inner = |y: f64, quad: &QuadratureSpec| {
                let b1 = (y - r).min(c * y);
                integrate(|x| pair.g(x, y) * (x - b1) * (x - b1), b1, b1 + ux, quad)
            };
            // kink where y - r crosses C * y; split the outer range there
            let knee = if c < 1.0 { r / (1.0 - c) } else { f64::INFINITY };
            if knee < uy {
                integrate(|y| inner(y, quad), r, knee, quad)
                    + integrate(|y| inner(y, quad), knee, uy, quad)
            } else {
                integrate(|y| inner(y, quad), r, uy, quad)
            }
        }
    }
}

/// Which integration limit the recycled moment uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RecycledLimit {
    /// The printed limit `y >= r + a0` with weight `(x - (y - r))^2`.
    TaggedThreshold,
    /// Each old job's own threshold `b1 = min(y - r, C * y)`. Default,
    /// because it reduces to the classical formulas at `C = 0` and `C = 1`
    /// and matches simulation.
    #[default]
    OwnThreshold,
}

fn recycled_moment(
    r: f64,
    c: f64,
    pair: &DensityPair,
    quad: &QuadratureSpec,
    limit: RecycledLimit,
) -> f64 {
    match limit {
        RecycledLimit::TaggedThreshold => moment_old1_sq(r, c * r, pair, quad),
        RecycledLimit::OwnThreshold => moment_old1_sq_own(r, c, pair, quad),
    }
}

/// Expected response time of a tagged job of size `x` and prediction `r`.
pub fn mean_response(
    x: f64,
    r: f64,
    c: f64,
    lambda: f64,
    pair: &DensityPair,
    quad: &QuadratureSpec,
    limit: RecycledLimit,
) -> Result<f64, AnalyticError> {
    let rho_r = rho_prime(r, pair, lambda, quad);
    if rho_r >= 1.0 {
        return Err(AnalyticError::Unstable { rho: rho_r });
    }
    let a0 = c * r;
    let num = moment_old0_sq(r, pair, quad) + recycled_moment(r, c, pair, quad, limit);
    let wait = lambda * num / (2.0 * (1.0 - rho_r) * (1.0 - rho_r));
    let res_end = a0.min(x);
    let residence = integrate(
        |a| 1.0 / (1.0 - rho_prime((r - a).max(0.0), pair, lambda, quad)),
        0.0,
        res_end,
        quad,
    );
    Ok(wait + residence + (x - a0).max(0.0))
}

/// Precomputed tables over a prediction grid, so that the aggregate double
/// integral does not re-run nested quadrature per evaluation point.
pub struct LemmaTables {
    c: f64,
    lambda: f64,
    ys: Vec<f64>,
    /// `rho'_y`
    rho: Vec<f64>,
    /// cumulative `integral_0^y ds / (1 - rho'_s)`
    w: Vec<f64>,
    /// cumulative below-`y` second moment
    m0sq: Vec<f64>,
    /// recycled moment at prediction `y` (with `a0 = C * y`)
    m1sq: Vec<f64>,
}

impl LemmaTables {
    pub fn build(
        c: f64,
        lambda: f64,
        pair: &DensityPair,
        quad: &QuadratureSpec,
        limit: RecycledLimit,
        grid: usize,
    ) -> Result<Self, AnalyticError> {
        let n = grid.max(64);
        let uy = pair.u_y(quad.tail_eps);
        let ux = pair.u_x(quad.tail_eps);
        let step = uy / n as f64;
        let ys: Vec<f64> = (0..=n).map(|j| j as f64 * step).collect();

        // per-grid-point integrand values for the two cumulative tables
        let (h1, h2): (Vec<f64>, Vec<f64>) = match pair {
            DensityPair::Perfect { f } => ys
                .iter()
                .map(|&y| (y * f.pdf(y), y * y * f.pdf(y)))
                .unzip(),
            _ => {
                let nodes = gauss_nodes(64);
                ys.iter()
                    .map(|&y| {
                        let half = 0.5 * ux;
                        let mut a = 0.0;
                        let mut b = 0.0;
                        for (t, wgt) in &nodes {
                            let x = half * (1.0 + t);
                            let g = pair.g(x, y);
                            a += wgt * x * g;
                            b += wgt * x * x * g;
                        }
                        (a * half, b * half)
                    })
                    .unzip()
            }
        };

        let mut rho = Vec::with_capacity(ys.len());
        let mut acc = 0.0;
        rho.push(0.0);
        for j in 1..ys.len() {
            acc += 0.5 * (h1[j - 1] + h1[j]) * step;
            rho.push(lambda * acc);
        }
        let rho_max = *rho.last().unwrap();
        if rho_max >= 1.0 {
            return Err(AnalyticError::Unstable { rho: rho_max });
        }

        let mut w = Vec::with_capacity(ys.len());
        w.push(0.0);
        let mut acc = 0.0;
        for j in 1..ys.len() {
            acc += 0.5 * (1.0 / (1.0 - rho[j - 1]) + 1.0 / (1.0 - rho[j])) * step;
            w.push(acc);
        }

        let mut m0sq = Vec::with_capacity(ys.len());
        m0sq.push(0.0);
        let mut acc = 0.0;
        for j in 1..ys.len() {
            acc += 0.5 * (h2[j - 1] + h2[j]) * step;
            m0sq.push(acc);
        }

        // the recycled moment is not cumulative in y; a coarser quadrature
        // per grid point keeps the build fast
        let fast = QuadratureSpec { rel_tol: quad.rel_tol.max(1e-5), ..*quad };
        let m1sq: Vec<f64> =
            ys.iter().map(|&y| recycled_moment(y, c, pair, &fast, limit)).collect();

        Ok(LemmaTables { c, lambda, ys, rho, w, m0sq, m1sq })
    }

    fn interp(&self, table: &[f64], y: f64) -> f64 {
        let n = self.ys.len();
        let step = self.ys[1];
        if y <= 0.0 {
            return table[0];
        }
        let pos = y / step;
        let j = pos as usize;
        if j + 1 >= n {
            return table[n - 1];
        }
        let frac = pos - j as f64;
        table[j] * (1.0 - frac) + table[j + 1] * frac
    }

    pub fn rho_at(&self, r: f64) -> f64 {
        self.interp(&self.rho, r)
    }

    /// Cumulative residence integrand, extended linearly past the grid
    /// where `rho'` has saturated.
    fn w_at(&self, y: f64) -> f64 {
        let top = *self.ys.last().unwrap();
        if y <= top {
            self.interp(&self.w, y)
        } else {
            let rho_max = *self.rho.last().unwrap();
            *self.w.last().unwrap() + (y - top) / (1.0 - rho_max)
        }
    }

    /// Table-driven `E[T(x, r)]`.
    pub fn mean_response(&self, x: f64, r: f64) -> Result<f64, AnalyticError> {
        let rho_r = self.interp(&self.rho, r);
        if rho_r >= 1.0 {
            return Err(AnalyticError::Unstable { rho: rho_r });
        }
        let a0 = self.c * r;
        let num = self.interp(&self.m0sq, r) + self.interp(&self.m1sq, r);
        let wait = self.lambda * num / (2.0 * (1.0 - rho_r) * (1.0 - rho_r));
        let res_end = a0.min(x);
        let residence = self.w_at(r) - self.w_at((r - res_end).max(0.0));
        Ok(wait + residence + (x - a0).max(0.0))
    }
}

/// The aggregate response-time curve and its overall mean.
#[derive(Debug, Clone, PartialEq)]
pub struct EtCurve {
    /// `(x, E[T(x)])` samples.
    pub points: Vec<(f64, f64)>,
    /// `E[T]`, the double integral of `g(x, y) E[T(x, y)]`.
    pub mean: f64,
}

/// Aggregate `E[T(x)]` and `E[T]` over the joint density.
pub fn mean_response_aggregate(
    c: f64,
    lambda: f64,
    pair: &DensityPair,
    quad: &QuadratureSpec,
    limit: RecycledLimit,
) -> Result<EtCurve, AnalyticError> {
    let tables = LemmaTables::build(c, lambda, pair, quad, limit, 1024)?;
    let ux = pair.u_x(quad.tail_eps);
    let f = *pair.service();

    // E[T(x)] = E[T(x, Y) | X = x] under the conditional prediction law
    let cond_mean = |x: f64| -> Result<f64, AnalyticError> {
        match pair {
            DensityPair::Perfect { .. } => tables.mean_response(x, x),
            DensityPair::ExponentialPredictor { .. } => {
                // y = u * x with u ~ Exp(1)
                let nodes = gauss_nodes(64);
                let umax = -math::ln(quad.tail_eps);
                let half = 0.5 * umax;
                let mut acc = 0.0;
                for (t, wgt) in &nodes {
                    let u = half * (1.0 + t);
                    acc += wgt * math::exp(-u) * tables.mean_response(x, u * x)?;
                }
                Ok(acc * half)
            }
        }
    };

    let nodes = gauss_nodes(96);
    let half = 0.5 * ux;
    let mut mean = 0.0;
    for (t, wgt) in &nodes {
        let x = half * (1.0 + t);
        mean += wgt * f.pdf(x) * cond_mean(x)?;
    }
    mean *= half;

    let curve_n = 100;
    let mut points = Vec::with_capacity(curve_n);
    for i in 1..=curve_n {
        let x = ux * i as f64 / curve_n as f64;
        points.push((x, cond_mean(x)?));
    }

    Ok(EtCurve { points, mean })
}
