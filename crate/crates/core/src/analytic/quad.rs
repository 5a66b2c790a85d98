//! One-dimensional numerical integration: adaptive Simpson and
//! Gauss-Legendre. Two-dimensional integrals elsewhere in the crate nest
//! these routines.

use alloc::vec::Vec;

use crate::math;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Scheme {
    AdaptiveSimpson,
    /// Fixed-order Gauss-Legendre with `n` nodes.
    GaussLegendre(usize),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureSpec {
    pub scheme: Scheme,
    pub rel_tol: f64,
    pub abs_tol: f64,
    /// Mass allowed beyond the truncation point of an infinite upper limit.
    pub tail_eps: f64,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        QuadratureSpec {
            scheme: Scheme::AdaptiveSimpson,
            rel_tol: 1e-6,
            abs_tol: 1e-10,
            tail_eps: 1e-8,
        }
    }
}

impl QuadratureSpec {
    pub fn gauss(n: usize) -> Self {
        QuadratureSpec { scheme: Scheme::GaussLegendre(n), ..Self::default() }
    }
}

/// Integrate `f` over `[a, b]` under the given spec.
pub fn integrate<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, spec: &QuadratureSpec) -> f64 {
    if !(b > a) {
        return 0.0;
    }
    match spec.scheme {
        Scheme::AdaptiveSimpson => adaptive_simpson(&mut f, a, b, spec),
        Scheme::GaussLegendre(n) => gauss_legendre(&mut f, a, b, n.max(2)),
    }
}

const MAX_DEPTH: u32 = 48;

fn adaptive_simpson<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64, spec: &QuadratureSpec) -> f64 {
    let fa = f(a);
    let fb = f(b);
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = simpson(a, b, fa, fm, fb);
    recurse(f, a, b, fa, fm, fb, whole, spec, MAX_DEPTH)
}

fn simpson(a: f64, b: f64, fa: f64, fm: f64, fb: f64) -> f64 {
    (b - a) / 6.0 * (fa + 4.0 * fm + fb)
}

#[allow(clippy::too_many_arguments)]
fn recurse<F: FnMut(f64) -> f64>(
    f: &mut F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    spec: &QuadratureSpec,
    depth: u32,
) -> f64 {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = simpson(a, m, fa, flm, fm);
    let right = simpson(m, b, fm, frm, fb);
    let delta = left + right - whole;
    let tol = spec.abs_tol.max(spec.rel_tol * math::abs(left + right));
    if depth == 0 || math::abs(delta) <= 15.0 * tol {
        // Richardson extrapolation of the two refinement levels
        left + right + delta / 15.0
    } else {
        recurse(f, a, m, fa, flm, fm, left, spec, depth - 1)
            + recurse(f, m, b, fm, frm, fb, right, spec, depth - 1)
    }
}

/// Gauss-Legendre nodes and weights on `[-1, 1]`, by Newton iteration on
/// the Legendre recurrence.
pub fn gauss_nodes(n: usize) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(n);
    let nf = n as f64;
    for i in 0..n {
        let mut x = math::cos(core::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5));
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre(n, x);
            dp = d;
            let step = p / d;
            x -= step;
            if math::abs(step) < 1e-15 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        out.push((x, w));
    }
    out
}

/// Legendre polynomial P_n and its derivative at `x`.
fn legendre(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

fn gauss_legendre<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64, n: usize) -> f64 {
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    gauss_nodes(n).iter().map(|(x, w)| w * f(mid + half * x)).sum::<f64>() * half
}
