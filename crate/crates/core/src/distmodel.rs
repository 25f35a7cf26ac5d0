//! Parametric laws and the population functionals built on them: the lower
//! and upper cluster means, the split function `B`, the cross-over
//! function `G`, its derivative, and the split point.
//!
//! A model needs only an invertible quantile and a positive density on
//! `(0,1)`. The three built-in families carry closed forms; user models
//! fall back to quadrature of the quantile over the probability scale.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{EcfError, Result};
use crate::normal;
use crate::numfmt::fmt_exact;
use crate::quadrature::{integrate, ABS_TOL, U_EDGE};

type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// A user-supplied law given by its quantile function and density.
#[derive(Clone)]
pub struct CustomModel {
    pub name: String,
    quantile: ScalarFn,
    pdf: ScalarFn,
}

impl fmt::Debug for CustomModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CustomModel").field("name", &self.name).finish()
    }
}

#[derive(Debug, Clone)]
pub enum DistributionModel {
    Normal { mean: f64, sd: f64 },
    Exponential { rate: f64 },
    Uniform { lo: f64, hi: f64 },
    Custom(CustomModel),
}

/// Result of the split-point search.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SplitDiagnostics {
    pub p0: f64,
    /// `F⁻¹(p0)`.
    pub split_value: f64,
    pub b_at_p0: f64,
    /// `|(μ_u − μ_l)·G(p0)|`.
    pub derivative_residual: f64,
    /// Final bisection bracket around `p0`.
    pub bracket: (f64, f64),
    /// Every root located on the scan grid, ascending.
    pub roots: Vec<f64>,
}

/// Grid resolution of [`DistributionModel::find_split_point`].
pub const SPLIT_GRID: usize = 1024;
/// Bisection stops once the bracket is this narrow.
pub const SPLIT_TOL: f64 = 1e-10;

fn check_open(p: f64) -> Result<()> {
    if p > 0.0 && p < 1.0 {
        Ok(())
    } else {
        Err(EcfError::Domain(p))
    }
}

fn check_closed(p: f64) -> Result<()> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(EcfError::Domain(p))
    }
}

impl DistributionModel {
    pub fn normal(mean: f64, sd: f64) -> Result<Self> {
        if !mean.is_finite() || !(sd.is_finite() && sd > 0.0) {
            return Err(EcfError::InvalidModel(format!(
                "normal needs finite mean and sd > 0, got ({mean}, {sd})"
            )));
        }
        Ok(Self::Normal { mean, sd })
    }

    pub fn exponential(rate: f64) -> Result<Self> {
        if !(rate.is_finite() && rate > 0.0) {
            return Err(EcfError::InvalidModel(format!(
                "exponential needs rate > 0, got {rate}"
            )));
        }
        Ok(Self::Exponential { rate })
    }

    pub fn uniform(lo: f64, hi: f64) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite() && hi > lo) {
            return Err(EcfError::InvalidModel(format!(
                "uniform needs lo < hi, got ({lo}, {hi})"
            )));
        }
        Ok(Self::Uniform { lo, hi })
    }

    /// Builds a model from a quantile function and a density.
    ///
    /// The quantile must be nondecreasing on `(0,1)` and the density
    /// positive at every interior quantile; neither is checked here.
    pub fn custom<Q, D>(name: impl Into<String>, quantile: Q, pdf: D) -> Self
    where
        Q: Fn(f64) -> f64 + Send + Sync + 'static,
        D: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        Self::Custom(CustomModel {
            name: name.into(),
            quantile: Arc::new(quantile),
            pdf: Arc::new(pdf),
        })
    }

    /// `F⁻¹(p)`.
    pub fn quantile(&self, p: f64) -> Result<f64> {
        check_open(p)?;
        Ok(self.quantile_raw(p))
    }

    /// Quantile without the domain check; callers guarantee `p ∈ (0,1)`.
    pub(crate) fn quantile_raw(&self, p: f64) -> f64 {
        match self {
            Self::Normal { mean, sd } => mean + sd * normal::quantile(p),
            Self::Exponential { rate } => -(-p).ln_1p() / rate,
            Self::Uniform { lo, hi } => lo + (hi - lo) * p,
            Self::Custom(c) => (c.quantile)(p),
        }
    }

    pub fn pdf(&self, x: f64) -> f64 {
        match self {
            Self::Normal { mean, sd } => normal::pdf((x - mean) / sd) / sd,
            Self::Exponential { rate } => {
                if x < 0.0 {
                    0.0
                } else {
                    rate * (-rate * x).exp()
                }
            }
            Self::Uniform { lo, hi } => {
                if x < *lo || x > *hi {
                    0.0
                } else {
                    1.0 / (hi - lo)
                }
            }
            Self::Custom(c) => (c.pdf)(x),
        }
    }

    pub fn cdf(&self, x: f64) -> f64 {
        match self {
            Self::Normal { mean, sd } => normal::cdf((x - mean) / sd),
            Self::Exponential { rate } => {
                if x <= 0.0 {
                    0.0
                } else {
                    -(-rate * x).exp_m1()
                }
            }
            Self::Uniform { lo, hi } => ((x - lo) / (hi - lo)).clamp(0.0, 1.0),
            Self::Custom(c) => {
                // Invert the quantile by bisection on the probability scale.
                let (mut a, mut b) = (0.0_f64, 1.0_f64);
                for _ in 0..200 {
                    let m = 0.5 * (a + b);
                    if m <= a || m >= b {
                        break;
                    }
                    if (c.quantile)(m) <= x {
                        a = m;
                    } else {
                        b = m;
                    }
                }
                0.5 * (a + b)
            }
        }
    }

    /// Population mean, `∫₀¹ F⁻¹(q) dq`.
    pub fn mean(&self) -> f64 {
        match self {
            Self::Normal { mean, .. } => *mean,
            Self::Exponential { rate } => 1.0 / rate,
            Self::Uniform { lo, hi } => 0.5 * (lo + hi),
            Self::Custom(_) => self.quantile_integral(U_EDGE, 1.0 - U_EDGE),
        }
    }

    /// Spread used to scale absolute quadrature tolerances: the sd, mean,
    /// width, or interquartile range of a custom model.
    pub(crate) fn scale(&self) -> f64 {
        let s = match self {
            Self::Normal { sd, .. } => *sd,
            Self::Exponential { rate } => 1.0 / rate,
            Self::Uniform { lo, hi } => hi - lo,
            Self::Custom(_) => self.quantile_raw(0.75) - self.quantile_raw(0.25),
        };
        if s.is_finite() && s > 0.0 {
            s
        } else {
            1.0
        }
    }

    fn quantile_integral(&self, a: f64, b: f64) -> f64 {
        integrate(|u| self.quantile_raw(u), a, b, ABS_TOL * self.scale()).value
    }

    /// `M(p) = ∫₀ᵖ F⁻¹(q) dq`.
    pub fn partial_mean(&self, p: f64) -> Result<f64> {
        check_closed(p)?;
        if p == 0.0 {
            return Ok(0.0);
        }
        if p == 1.0 {
            return Ok(self.mean());
        }
        Ok(match self {
            Self::Normal { mean, sd } => mean * p - sd * normal::pdf(normal::quantile(p)),
            Self::Exponential { rate } => (p + (1.0 - p) * (-p).ln_1p()) / rate,
            Self::Uniform { lo, hi } => lo * p + 0.5 * (hi - lo) * p * p,
            Self::Custom(_) => self.quantile_integral(U_EDGE, p),
        })
    }

    /// `∫ₚ¹ F⁻¹(q) dq`, computed directly to avoid cancellation near `p = 1`.
    pub fn upper_partial_mean(&self, p: f64) -> Result<f64> {
        check_closed(p)?;
        if p == 1.0 {
            return Ok(0.0);
        }
        if p == 0.0 {
            return Ok(self.mean());
        }
        Ok(match self {
            Self::Normal { mean, sd } => mean * (1.0 - p) + sd * normal::pdf(normal::quantile(p)),
            Self::Exponential { rate } => (1.0 - p) * (1.0 - (-p).ln_1p()) / rate,
            Self::Uniform { lo, hi } => lo * (1.0 - p) + 0.5 * (hi - lo) * (1.0 - p * p),
            Self::Custom(_) => self.quantile_integral(p, 1.0 - U_EDGE),
        })
    }

    /// Mean of the lower cluster, `μ_l = M(p)/p`.
    pub fn mu_lower(&self, p: f64) -> Result<f64> {
        check_open(p)?;
        Ok(self.partial_mean(p)? / p)
    }

    /// Mean of the upper cluster, `μ_u = (M(1) − M(p))/(1 − p)`.
    pub fn mu_upper(&self, p: f64) -> Result<f64> {
        check_open(p)?;
        Ok(self.upper_partial_mean(p)? / (1.0 - p))
    }

    /// Cross-over function `G(p) = μ_l + μ_u − 2F⁻¹(p)`.
    pub fn crossover_g(&self, p: f64) -> Result<f64> {
        check_open(p)?;
        Ok(self.mu_lower(p)? + self.mu_upper(p)? - 2.0 * self.quantile_raw(p))
    }

    /// Between-cluster sum of squares `B(F⁻¹, p)`.
    ///
    /// Evaluated as `p(1−p)(μ_u − μ_l)²`, which equals
    /// `pμ_l² + (1−p)μ_u² − mean²` and cannot round below zero.
    pub fn split_b(&self, p: f64) -> Result<f64> {
        check_open(p)?;
        let gap = self.mu_upper(p)? - self.mu_lower(p)?;
        Ok(p * (1.0 - p) * gap * gap)
    }

    /// `dB/dp = (μ_u − μ_l)·G(p)`.
    pub fn split_derivative(&self, p: f64) -> Result<f64> {
        check_open(p)?;
        let lower = self.mu_lower(p)?;
        let upper = self.mu_upper(p)?;
        let g = lower + upper - 2.0 * self.quantile_raw(p);
        Ok((upper - lower) * g)
    }

    /// Density at the quantile, rejecting zero.
    pub(crate) fn density_at_quantile(&self, p: f64) -> Result<(f64, f64)> {
        let q = self.quantile(p)?;
        let f = self.pdf(q);
        if f > 0.0 && (2.0 / f).is_finite() {
            Ok((q, f))
        } else {
            Err(EcfError::Singularity { p, quantile: q })
        }
    }

    /// `G'(p) = (q − μ_l)/p + (μ_u − q)/(1 − p) − 2/f(q)` with `q = F⁻¹(p)`.
    pub fn g_prime(&self, p: f64) -> Result<f64> {
        let (q, f) = self.density_at_quantile(p)?;
        let lower = self.mu_lower(p)?;
        let upper = self.mu_upper(p)?;
        Ok((q - lower) / p + (upper - q) / (1.0 - p) - 2.0 / f)
    }

    /// Locates zeros of `G` on `[a, b]` and returns the one maximizing `B`.
    ///
    /// The bracket is scanned on a uniform grid of [`SPLIT_GRID`] points;
    /// each sign change is refined by bisection to width [`SPLIT_TOL`].
    pub fn find_split_point(&self, a: f64, b: f64) -> Result<SplitDiagnostics> {
        if !(a > 0.0 && a < b && b < 1.0) {
            return Err(EcfError::Config(format!(
                "split bracket must satisfy 0 < a < b < 1, got [{a}, {b}]"
            )));
        }
        let step = (b - a) / (SPLIT_GRID - 1) as f64;
        let grid: Vec<f64> = (0..SPLIT_GRID)
            .map(|i| if i + 1 == SPLIT_GRID { b } else { a + step * i as f64 })
            .collect();
        let values = grid
            .iter()
            .map(|&p| self.crossover_g(p))
            .collect::<Result<Vec<_>>>()?;

        let mut brackets: Vec<(f64, f64)> = Vec::new();
        for i in 0..SPLIT_GRID {
            if values[i] == 0.0 {
                brackets.push((grid[i], grid[i]));
            } else if i + 1 < SPLIT_GRID && values[i + 1] != 0.0 && (values[i] > 0.0) != (values[i + 1] > 0.0) {
                brackets.push(self.bisect(grid[i], grid[i + 1], values[i])?);
            }
        }
        if brackets.is_empty() {
            return Err(EcfError::NoCrossing(a, b));
        }

        let mut best: Option<(f64, (f64, f64), f64)> = None;
        let mut roots = Vec::with_capacity(brackets.len());
        for (lo, hi) in brackets {
            let root = 0.5 * (lo + hi);
            roots.push(root);
            let score = self.split_b(root)?;
            if best.is_none_or(|(_, _, s)| score > s) {
                best = Some((root, (lo, hi), score));
            }
        }
        let (p0, bracket, b_at_p0) = best.expect("at least one root");
        Ok(SplitDiagnostics {
            p0,
            split_value: self.quantile_raw(p0),
            b_at_p0,
            derivative_residual: self.split_derivative(p0)?.abs(),
            bracket,
            roots,
        })
    }

    fn bisect(&self, mut lo: f64, mut hi: f64, g_lo: f64) -> Result<(f64, f64)> {
        let lo_positive = g_lo > 0.0;
        while hi - lo > SPLIT_TOL {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            let g = self.crossover_g(mid)?;
            if g == 0.0 {
                return Ok((mid, mid));
            }
            if (g > 0.0) == lo_positive {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok((lo, hi))
    }
}

impl fmt::Display for DistributionModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Normal { mean, sd } => write!(f, "normal:{},{}", fmt_exact(*mean), fmt_exact(*sd)),
            Self::Exponential { rate } => write!(f, "exp:{}", fmt_exact(*rate)),
            Self::Uniform { lo, hi } => write!(f, "uniform:{},{}", fmt_exact(*lo), fmt_exact(*hi)),
            Self::Custom(c) => write!(f, "custom:{}", c.name),
        }
    }
}

impl FromStr for DistributionModel {
    type Err = EcfError;

    /// Parses `normal:MEAN,SD`, `exp:RATE` or `uniform:LO,HI`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || EcfError::ModelSpec(s.to_string());
        let (family, params) = s.trim().split_once(':').ok_or_else(bad)?;
        let params = params
            .split(',')
            .map(|t| t.trim().parse::<f64>().map_err(|_| bad()))
            .collect::<Result<Vec<_>>>()?;
        match (family.trim().to_ascii_lowercase().as_str(), params.as_slice()) {
            ("normal" | "norm" | "gaussian", [mean, sd]) => Self::normal(*mean, *sd),
            ("exp" | "exponential", [rate]) => Self::exponential(*rate),
            ("uniform" | "unif", [lo, hi]) => Self::uniform(*lo, *hi),
            _ => Err(bad()),
        }
    }
}

impl Serialize for DistributionModel {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for DistributionModel {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}
