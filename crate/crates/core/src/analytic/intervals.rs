//! Rank-trajectory intervals.
//!
//! Given a per-unit prediction trajectory, the rank at age `a` is
//! `r[a] - a`. Relative to a competing rank threshold `r_max`, the ages
//! split into alternating runs below and at-or-above the threshold. Each
//! below-threshold run is an interval during which the job's service counts
//! as delay for the competitor.

use alloc::vec::Vec;

/// One below-threshold run `[b, c)` of the rank trajectory and the work the
/// job performs inside it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub b: usize,
    pub c: usize,
    pub work: f64,
}

/// Decompose the rank trajectory of a job of true size `size` against a
/// competitor whose worst rank is `r_max`.
///
/// The work in interval `i` is zero when the job finishes before `b_i`,
/// `size - b_i` when it finishes inside the interval, and `c_i - b_i` when
/// it outlives it.
pub fn intervals(trajectory: &[f64], r_max: f64, size: f64) -> Vec<Interval> {
    let n = trajectory.len();
    let below = |a: usize| trajectory[a] - (a as f64) < r_max;
    let mut out = Vec::new();
    let mut a = 0;
    while a < n {
        if !below(a) {
            a += 1;
            continue;
        }
        let b = a;
        while a < n && below(a) {
            a += 1;
        }
        let c = a;
        let work = if size <= b as f64 {
            0.0
        } else if size <= c as f64 {
            size - b as f64
        } else {
            (c - b) as f64
        };
        out.push(Interval { b, c, work });
    }
    out
}
