//! Adaptive Simpson quadrature on bounded intervals.
//!
//! Every expectation in this crate is written as an integral over the
//! probability scale `u ∈ (0,1)`, so only finite intervals are needed.
//! Integrands with jumps are integrated piecewise via [`integrate_pieces`].

use crate::error::{EcfError, Result};

/// Default absolute tolerance.
pub const ABS_TOL: f64 = 1e-9;
/// Hard recursion cap per piece.
pub const MAX_DEPTH: u32 = 60;
/// Integrand evaluations allowed per call to [`integrate`].
pub const MAX_EVALS: usize = 1 << 20;
/// Probability-scale truncation used for integrands whose quantile diverges at 0 or 1.
pub const U_EDGE: f64 = 1e-12;

/// Result of one adaptive integration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quad {
    pub value: f64,
    /// Sum of the local Richardson error estimates.
    pub error: f64,
    /// `false` when at least one subinterval stopped at the depth cap or
    /// the evaluation budget without meeting its local tolerance.
    pub converged: bool,
}

impl Quad {
    /// Converts an unconverged result into an error when the estimated
    /// error is above `tolerance`.
    pub fn checked(self, tolerance: f64) -> Result<f64> {
        if !self.value.is_finite() {
            return Err(EcfError::Quadrature {
                achieved: f64::INFINITY,
                tolerance,
            });
        }
        if self.converged || self.error <= tolerance {
            Ok(self.value)
        } else {
            Err(EcfError::Quadrature {
                achieved: self.error,
                tolerance,
            })
        }
    }
}

struct Acc {
    error: f64,
    converged: bool,
    evals_left: usize,
}

/// Integrates `f` over `[a, b]` to absolute tolerance `tol`.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> Quad {
    if a == b {
        return Quad {
            value: 0.0,
            error: 0.0,
            converged: true,
        };
    }
    let (lo, hi, sign) = if a < b { (a, b, 1.0) } else { (b, a, -1.0) };
    let fa = f(lo);
    let fb = f(hi);
    let m = 0.5 * (lo + hi);
    let fm = f(m);
    let whole = simpson(lo, hi, fa, fm, fb);
    let mut acc = Acc {
        error: 0.0,
        converged: true,
        evals_left: MAX_EVALS - 3,
    };
    let value = recurse(&f, lo, hi, fa, fm, fb, whole, tol, MAX_DEPTH, &mut acc);
    Quad {
        value: sign * value,
        error: acc.error,
        converged: acc.converged,
    }
}

/// Integrates over consecutive pieces `breaks[0]..breaks[1]..…`, sharing
/// the tolerance evenly. `f` receives the point and the index of the piece,
/// so a discontinuous integrand can choose its branch per piece instead of
/// by comparing against the break location.
pub fn integrate_pieces<F: Fn(f64, usize) -> f64>(f: F, breaks: &[f64], tol: f64) -> Quad {
    let pieces = breaks.len().saturating_sub(1).max(1);
    let piece_tol = tol / pieces as f64;
    let mut total = Quad {
        value: 0.0,
        error: 0.0,
        converged: true,
    };
    for (idx, w) in breaks.windows(2).enumerate() {
        if w[1] <= w[0] {
            continue;
        }
        let q = integrate(|u| f(u, idx), w[0], w[1], piece_tol);
        total.value += q.value;
        total.error += q.error;
        total.converged &= q.converged;
    }
    total
}

fn simpson(a: f64, b: f64, fa: f64, fm: f64, fb: f64) -> f64 {
    (b - a) / 6.0 * (fa + 4.0 * fm + fb)
}

#[allow(clippy::too_many_arguments)]
fn recurse<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
    acc: &mut Acc,
) -> f64 {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    acc.evals_left = acc.evals_left.saturating_sub(2);
    let left = simpson(a, m, fa, flm, fm);
    let right = simpson(m, b, fm, frm, fb);
    let delta = left + right - whole;
    // Stop once the tolerance is below what the local sum can resolve.
    let floor = 4.0 * f64::EPSILON * (left.abs() + right.abs());
    if delta.abs() <= 15.0 * tol.max(floor) {
        acc.error += delta.abs() / 15.0;
        return left + right + delta / 15.0;
    }
    if depth == 0 || m <= a || m >= b || acc.evals_left < 2 || !delta.is_finite() {
        acc.error += delta.abs() / 15.0;
        acc.converged = false;
        return left + right + delta / 15.0;
    }
    recurse(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1, acc)
        + recurse(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1, acc)
}
