//! Influence function of the ECF and the covariance of its Gaussian limit.
//!
//! With `q = F⁻¹(p)` and `I = 1{w ≤ q}`,
//!
//! ```text
//! θ_p(w) = I·(w − q)/p + (1 − I)·(w − q)/(1 − p) + 2I/f(q)
//! ```
//!
//! and `√n(G_n(p) − G(p))` is asymptotically normal with variance
//! `Var θ_p`; across levels the limit process has covariance
//! `Cov(θ_p, θ_r)`. The centered form `Z = ξ + τ − 2κ` differs from `θ_p`
//! by the constant `G(p) + 2p/f(q)`.
//!
//! Expectations are integrals over `u ∈ (0,1)` of `θ_p(F⁻¹(u))`, split at
//! each level where an indicator jumps.

use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::distmodel::DistributionModel;
use crate::ecf::{bucket_index, ecf_eval, SortedSample};
use crate::error::{EcfError, Result};
use crate::numfmt::fmt_g;
use crate::quadrature::{integrate_pieces, ABS_TOL, U_EDGE};

/// Accept a quadrature result whose error estimate stays below this.
const QUAD_ACCEPT: f64 = 1e-7;
/// Eigenvalue floor for the positive semi-definiteness check, for a model
/// of unit scale; the check uses `PSD_FLOOR · scale²`.
pub const PSD_FLOOR: f64 = -1e-8;

/// Components of the influence function at one observation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct InfluenceDecomposition {
    /// Centered lower trimmed-mean part.
    pub xi: f64,
    /// Centered upper trimmed-mean part.
    pub tau: f64,
    /// Bahadur term for the sample quantile.
    pub kappa: f64,
    /// `θ_p(w)` as used for the limit variance.
    pub theta: f64,
    /// `θ_p − (ξ + τ − 2κ) = G(p) + 2p/f(q)`.
    pub offset: f64,
}

impl InfluenceDecomposition {
    /// The mean-zero summand `Z = ξ + τ − 2κ`.
    pub fn z(&self) -> f64 {
        self.xi + self.tau - 2.0 * self.kappa
    }
}

/// Everything `θ_p` needs, evaluated once per level.
#[derive(Debug, Clone, Copy)]
struct Influence {
    p: f64,
    q: f64,
    density: f64,
    mu_lower: f64,
    mu_upper: f64,
}

impl Influence {
    fn new(model: &DistributionModel, p: f64) -> Result<Self> {
        let (q, density) = model.density_at_quantile(p)?;
        Ok(Self {
            p,
            q,
            density,
            mu_lower: model.mu_lower(p)?,
            mu_upper: model.mu_upper(p)?,
        })
    }

    fn theta(&self, w: f64, below: bool) -> f64 {
        if below {
            (w - self.q) / self.p + 2.0 / self.density
        } else {
            (w - self.q) / (1.0 - self.p)
        }
    }

    fn decompose(&self, w: f64) -> InfluenceDecomposition {
        let below = w <= self.q;
        let ind = if below { 1.0 } else { 0.0 };
        let xi = ind * (w - self.q) / self.p - (self.mu_lower - self.q);
        let tau = (1.0 - ind) * (w - self.q) / (1.0 - self.p) - (self.mu_upper - self.q);
        let kappa = (self.p - ind) / self.density;
        let g = self.mu_lower + self.mu_upper - 2.0 * self.q;
        InfluenceDecomposition {
            xi,
            tau,
            kappa,
            theta: self.theta(w, below),
            offset: g + 2.0 * self.p / self.density,
        }
    }
}

/// `θ_p(w)` with its ξ, τ, κ parts.
pub fn theta_eval(model: &DistributionModel, p: f64, w: f64) -> Result<InfluenceDecomposition> {
    Ok(Influence::new(model, p)?.decompose(w))
}

/// Probability-scale break points for the levels in `levels`, deduplicated.
fn breaks_for(levels: &[f64]) -> Vec<f64> {
    let mut b = vec![U_EDGE];
    let mut sorted: Vec<f64> = levels.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted.dedup();
    b.extend(sorted);
    b.push(1.0 - U_EDGE);
    b
}

/// For each piece between consecutive breaks, whether `u ≤ level`.
fn below_flags(breaks: &[f64], level: f64) -> Vec<bool> {
    breaks.windows(2).map(|w| 0.5 * (w[0] + w[1]) <= level).collect()
}

/// `E θ_p` by quadrature.
pub fn expected_theta(model: &DistributionModel, p: f64) -> Result<f64> {
    let inf = Influence::new(model, p)?;
    mean_by_quadrature(model, &inf)
}

fn mean_by_quadrature(model: &DistributionModel, inf: &Influence) -> Result<f64> {
    let breaks = breaks_for(&[inf.p]);
    let flags = below_flags(&breaks, inf.p);
    let s = model.scale();
    integrate_pieces(|u, piece| inf.theta(model.quantile_raw(u), flags[piece]), &breaks, ABS_TOL * s)
        .checked(QUAD_ACCEPT * s)
}

fn covariance_by_quadrature(
    model: &DistributionModel,
    a: &Influence,
    mean_a: f64,
    b: &Influence,
    mean_b: f64,
) -> Result<f64> {
    let s2 = model.scale().powi(2);
    let breaks = breaks_for(&[a.p, b.p]);
    let flags_a = below_flags(&breaks, a.p);
    let flags_b = below_flags(&breaks, b.p);
    integrate_pieces(
        |u, piece| {
            let w = model.quantile_raw(u);
            (a.theta(w, flags_a[piece]) - mean_a) * (b.theta(w, flags_b[piece]) - mean_b)
        },
        &breaks,
        ABS_TOL * s2,
    )
    .checked(QUAD_ACCEPT * s2)
}

/// `Cov(θ_p, θ_r)` under the model.
pub fn cov_theta(model: &DistributionModel, p: f64, r: f64) -> Result<f64> {
    let a = Influence::new(model, p)?;
    let b = Influence::new(model, r)?;
    let mean_a = mean_by_quadrature(model, &a)?;
    let mean_b = if p == r { mean_a } else { mean_by_quadrature(model, &b)? };
    covariance_by_quadrature(model, &a, mean_a, &b, mean_b)
}

/// Limit variance `σ = Var θ_p` of `√n(G_n(p) − G(p))`.
pub fn sigma_var(model: &DistributionModel, p: f64) -> Result<f64> {
    cov_theta(model, p, p)
}

/// Covariance of the limit process on a grid of levels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovSpec {
    pub grid: Vec<f64>,
    /// Row-major, `matrix[i][j] = Cov(θ_{p_i}, θ_{p_j})`.
    pub matrix: Vec<Vec<f64>>,
}

impl CovSpec {
    pub fn min_eigenvalue(&self) -> f64 {
        min_eigenvalue(&self.matrix)
    }

    /// Header row of grid points, then one row per grid point.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        let header: Vec<String> = self.grid.iter().map(|&p| fmt_g(p)).collect();
        out.push_str(&header.join(","));
        out.push('\n');
        for row in &self.matrix {
            let cells: Vec<String> = row.iter().map(|&v| fmt_g(v)).collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("CovSpec serializes")
    }
}

pub fn min_eigenvalue(matrix: &[Vec<f64>]) -> f64 {
    let k = matrix.len();
    if k == 0 {
        return f64::INFINITY;
    }
    let m = DMatrix::from_fn(k, k, |i, j| matrix[i][j]);
    SymmetricEigen::new(m)
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

pub(crate) fn validate_grid(grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(EcfError::Config("grid must contain at least one level".into()));
    }
    if let Some(&bad) = grid.iter().find(|&&p| !(p > 0.0 && p < 1.0)) {
        return Err(EcfError::Domain(bad));
    }
    if grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(EcfError::Config("grid must be strictly ascending".into()));
    }
    Ok(())
}

/// Fills `Cov(θ_{p_i}, θ_{p_j})` for every pair and checks it is PSD.
pub fn cov_grid_theoretical(model: &DistributionModel, grid: &[f64]) -> Result<CovSpec> {
    validate_grid(grid)?;
    let k = grid.len();
    let at = |i: usize, e: EcfError| EcfError::CovEntry {
        i,
        j: i,
        source: Box::new(e),
    };
    let influences = grid
        .iter()
        .enumerate()
        .map(|(i, &p)| Influence::new(model, p).map_err(|e| at(i, e)))
        .collect::<Result<Vec<_>>>()?;
    let means = influences
        .par_iter()
        .enumerate()
        .map(|(i, inf)| mean_by_quadrature(model, inf).map_err(|e| at(i, e)))
        .collect::<Result<Vec<_>>>()?;

    let pairs: Vec<(usize, usize)> = (0..k).flat_map(|i| (i..k).map(move |j| (i, j))).collect();
    let entries = pairs
        .par_iter()
        .map(|&(i, j)| {
            covariance_by_quadrature(model, &influences[i], means[i], &influences[j], means[j])
                .map_err(|e| EcfError::CovEntry {
                    i,
                    j,
                    source: Box::new(e),
                })
        })
        .collect::<Result<Vec<_>>>()?;

    let mut matrix = vec![vec![0.0; k]; k];
    for (&(i, j), &v) in pairs.iter().zip(&entries) {
        matrix[i][j] = v;
        matrix[j][i] = v;
    }
    let spec = CovSpec {
        grid: grid.to_vec(),
        matrix,
    };
    let min_eig = spec.min_eigenvalue();
    if min_eig < PSD_FLOOR * model.scale().powi(2) {
        return Err(EcfError::NotPsd(min_eig));
    }
    Ok(spec)
}

/// Empirical quantile `W_(clamp(⌈nt⌉, 1, n))`.
fn empirical_quantile(sample: &SortedSample, t: f64) -> f64 {
    let n = sample.len();
    let k = ((n as f64 * t).ceil() as usize).clamp(1, n);
    sample.order_stat(k)
}

/// Plug-in estimate of `σ = Var θ_p` from data alone.
///
/// The density at the quantile is estimated from the quantile spacing
/// `f̂ = 2h / (Q_n(p+h) − Q_n(p−h))`; `bandwidth = None` uses `h = n^{-1/5}`.
pub fn empirical_sigma(sample: &SortedSample, p: f64, bandwidth: Option<f64>) -> Result<f64> {
    let n = sample.len();
    if n < 20 {
        return Err(EcfError::SampleTooSmall { needed: 20, got: n });
    }
    if !(p > 0.0 && p < 1.0) {
        return Err(EcfError::Domain(p));
    }
    let h = bandwidth.unwrap_or_else(|| (n as f64).powf(-0.2));
    if h.is_nan() || h <= 0.0 || p - h <= 0.0 || p + h >= 1.0 {
        return Err(EcfError::Bandwidth { p, bandwidth: h });
    }
    let spacing = empirical_quantile(sample, p + h) - empirical_quantile(sample, p - h);
    if spacing.is_nan() || spacing <= 0.0 {
        return Err(EcfError::DensityEstimate);
    }
    let k = bucket_index(n, p);
    let inf = Influence {
        p,
        q: sample.order_stat(k),
        density: 2.0 * h / spacing,
        mu_lower: sample.lower_mean(k),
        mu_upper: sample.upper_mean(k),
    };
    let thetas: Vec<f64> = sample
        .values()
        .iter()
        .map(|&w| inf.theta(w, w <= inf.q))
        .collect();
    Ok(sample_variance(&thetas))
}

/// Unbiased sample variance (divisor `len − 1`), two-pass.
pub fn sample_variance(values: &[f64]) -> f64 {
    let m = values.len();
    if m < 2 {
        return 0.0;
    }
    let mean = values.iter().sum::<f64>() / m as f64;
    values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (m - 1) as f64
}

/// One-step approximation of the empirical split point,
/// `p0 − G_n(p0)/G'(p0)`, with `p0` the model's split point in `(0.01, 0.99)`.
pub fn newton_split_approx(model: &DistributionModel, sample: &SortedSample) -> Result<f64> {
    let split = model.find_split_point(0.01, 0.99)?;
    let slope = model.g_prime(split.p0)?;
    if slope == 0.0 || !slope.is_finite() {
        return Err(EcfError::DegenerateDerivative(split.p0));
    }
    Ok(split.p0 - ecf_eval(sample, split.p0)? / slope)
}
