//! The empirical cross-over function on a sorted sample.
//!
//! For bucket `k ∈ {1,…,n−1}`
//!
//! ```text
//! G_n = (1/k)·Σ_{j≤k} W_(j) − W_(k) + (1/(n−k))·Σ_{j>k} W_(j) − W_(k+1)
//! ```
//!
//! and a probability `p ∈ (0,1)` maps to `k = clamp(⌈np⌉, 1, n−1)`.
//! All buckets come out of one prefix-sum pass.

use std::io::BufRead;

use serde::{Deserialize, Serialize};

use crate::error::{EcfError, Result};

/// Ascending data with prefix sums.
///
/// Prefix sums are taken over `W_(j) − W_(1)`; the offset cancels in every
/// bucket, which keeps the curve exactly invariant under exact shifts.
#[derive(Debug, Clone, PartialEq)]
pub struct SortedSample {
    values: Vec<f64>,
    /// `prefix[k] = Σ_{j≤k} (W_(j) − W_(1))`, `prefix[0] = 0`.
    prefix: Vec<f64>,
}

impl SortedSample {
    /// Sorts `values` (stable) and builds the prefix sums.
    pub fn new(mut values: Vec<f64>) -> Result<Self> {
        check_finite(&values)?;
        values.sort_by(f64::total_cmp);
        Self::build(values)
    }

    /// Skips the sort; fails if `values` is not nondecreasing.
    pub fn from_sorted(values: Vec<f64>) -> Result<Self> {
        check_finite(&values)?;
        if let Some(i) = values.windows(2).position(|w| w[1] < w[0]) {
            return Err(EcfError::Unsorted(i + 1));
        }
        Self::build(values)
    }

    fn build(values: Vec<f64>) -> Result<Self> {
        if values.len() < 2 {
            return Err(EcfError::SampleTooSmall {
                needed: 2,
                got: values.len(),
            });
        }
        let base = values[0];
        let mut prefix = Vec::with_capacity(values.len() + 1);
        prefix.push(0.0);
        let mut acc = 0.0;
        for &v in &values {
            acc += v - base;
            prefix.push(acc);
        }
        Ok(Self { values, prefix })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// The `i`-th order statistic, 1-based.
    pub fn order_stat(&self, i: usize) -> f64 {
        self.values[i - 1]
    }

    /// `Σ_{j≤k} W_(j)`.
    pub fn lower_sum(&self, k: usize) -> f64 {
        self.prefix[k] + k as f64 * self.values[0]
    }

    /// Sample total.
    pub fn total(&self) -> f64 {
        self.lower_sum(self.len())
    }

    /// Mean of the `k` smallest values.
    pub fn lower_mean(&self, k: usize) -> f64 {
        self.prefix[k] / k as f64 + self.values[0]
    }

    /// Mean of the `n − k` largest values.
    pub fn upper_mean(&self, k: usize) -> f64 {
        let n = self.len();
        (self.prefix[n] - self.prefix[k]) / (n - k) as f64 + self.values[0]
    }

    /// `G_n` at bucket `k ∈ {1,…,n−1}`.
    pub fn bucket_value(&self, k: usize) -> f64 {
        let n = self.len();
        debug_assert!(k >= 1 && k < n);
        let base = self.values[0];
        let lower = self.prefix[k] / k as f64 - (self.values[k - 1] - base);
        let upper = (self.prefix[n] - self.prefix[k]) / (n - k) as f64 - (self.values[k] - base);
        lower + upper
    }
}

fn check_finite(values: &[f64]) -> Result<()> {
    match values.iter().position(|v| !v.is_finite()) {
        Some(i) => Err(EcfError::NonFinite(i)),
        None => Ok(()),
    }
}

/// `k = clamp(⌈np⌉, 1, n−1)`.
pub fn bucket_index(n: usize, p: f64) -> usize {
    debug_assert!(n >= 2);
    let k = (n as f64 * p).ceil();
    if k.is_nan() || k < 1.0 {
        1
    } else if k > (n - 1) as f64 {
        n - 1
    } else {
        k as usize
    }
}

/// `G_n(p)` in O(1).
pub fn ecf_eval(sample: &SortedSample, p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(EcfError::Domain(p));
    }
    Ok(sample.bucket_value(bucket_index(sample.len(), p)))
}

/// The whole step function `k ↦ G_n` and its first non-positive bucket.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EcfCurve {
    pub n: usize,
    /// `g[k−1]` holds the value at bucket `k`.
    pub g: Vec<f64>,
    pub crossing_k: usize,
    pub p_hat: f64,
}

impl EcfCurve {
    /// Value at bucket `k`, 1-based.
    pub fn at(&self, k: usize) -> f64 {
        self.g[k - 1]
    }
}

pub fn ecf_curve(sample: &SortedSample) -> EcfCurve {
    let n = sample.len();
    let g: Vec<f64> = (1..n).map(|k| sample.bucket_value(k)).collect();
    // g[n−1] ≤ 0 always holds, so the fallback only guards against NaN.
    let crossing_k = g.iter().position(|&v| v <= 0.0).map_or(n - 1, |i| i + 1);
    EcfCurve {
        n,
        g,
        crossing_k,
        p_hat: crossing_k as f64 / n as f64,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitPoint {
    pub k_star: usize,
    pub p_n: f64,
}

/// First bucket at which `G_n` is non-positive.
pub fn empirical_split_point(sample: &SortedSample) -> SplitPoint {
    let curve = ecf_curve(sample);
    SplitPoint {
        k_star: curve.crossing_k,
        p_n: curve.p_hat,
    }
}

/// Two contiguous clusters of the sorted sample.
#[derive(Debug, Clone, PartialEq)]
pub struct TwoClusterSplit<'a> {
    pub k_star: usize,
    pub left: &'a [f64],
    pub right: &'a [f64],
    /// `W_(k*)`, the largest value of the left cluster.
    pub split_value: f64,
}

pub fn two_cluster_split(sample: &SortedSample) -> TwoClusterSplit<'_> {
    let SplitPoint { k_star, .. } = empirical_split_point(sample);
    let (left, right) = sample.values().split_at(k_star);
    TwoClusterSplit {
        k_star,
        left,
        right,
        split_value: sample.order_stat(k_star),
    }
}

/// `Σ_i W_i·1{W_i ≤ q}` over unsorted data.
pub fn truncated_sum(values: &[f64], threshold: f64) -> f64 {
    values.iter().filter(|&&w| w <= threshold).sum()
}

/// Number of observations at or below `threshold`.
pub fn count_below(sample: &SortedSample, threshold: f64) -> usize {
    sample.values().partition_point(|&w| w <= threshold)
}

/// Reads one number per line. Blank lines and `#` comments are skipped;
/// non-numeric or non-finite entries fail with their 1-based line number.
pub fn read_values<R: BufRead>(reader: R) -> Result<Vec<f64>> {
    let mut out = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|e| EcfError::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        let content = line.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let v: f64 = content.parse().map_err(|_| EcfError::Parse {
            line: line_no,
            message: format!("not a number: `{content}`"),
        })?;
        if !v.is_finite() {
            return Err(EcfError::Parse {
                line: line_no,
                message: format!("non-finite value `{content}`"),
            });
        }
        out.push(v);
    }
    Ok(out)
}
