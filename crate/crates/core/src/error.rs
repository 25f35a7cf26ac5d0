use thiserror::Error;

use crate::numfmt::fmt_exact;

/// Errors raised by the ECF library.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum EcfError {
    #[error("probability {} outside the admissible domain", fmt_exact(*.0))]
    Domain(f64),

    #[error("invalid model parameters: {0}")]
    InvalidModel(String),

    #[error("cannot parse model spec `{0}` (expected normal:MEAN,SD | exp:RATE | uniform:LO,HI)")]
    ModelSpec(String),

    #[error("density vanishes at quantile {} (p = {})", fmt_exact(*.quantile), fmt_exact(*.p))]
    Singularity { p: f64, quantile: f64 },

    #[error("quadrature did not converge: estimated error {achieved:e} exceeds tolerance {tolerance:e}")]
    Quadrature { achieved: f64, tolerance: f64 },

    #[error("no crossing of G in bracket [{}, {}]", fmt_exact(*.0), fmt_exact(*.1))]
    NoCrossing(f64, f64),

    #[error("sample too small: need at least {needed} values, got {got}")]
    SampleTooSmall { needed: usize, got: usize },

    #[error("sample not sorted at position {0}")]
    Unsorted(usize),

    #[error("non-finite value in sample at position {0}")]
    NonFinite(usize),

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("bandwidth {} puts p \u{b1} h outside (0,1) at p = {}", fmt_exact(*.bandwidth), fmt_exact(*.p))]
    Bandwidth { p: f64, bandwidth: f64 },

    #[error("zero quantile spacing; density estimate undefined")]
    DensityEstimate,

    #[error("derivative of G vanishes at p0 = {}", fmt_exact(*.0))]
    DegenerateDerivative(f64),

    #[error("covariance entry ({i}, {j}): {source}")]
    CovEntry {
        i: usize,
        j: usize,
        #[source]
        source: Box<EcfError>,
    },

    #[error("covariance matrix not positive semi-definite (min eigenvalue {0:e})")]
    NotPsd(f64),

    #[error("invalid configuration: {0}")]
    Config(String),
}

impl EcfError {
    /// Failures of the numerics on valid input, as opposed to bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Self::Singularity { .. }
                | Self::Quadrature { .. }
                | Self::NoCrossing(..)
                | Self::DensityEstimate
                | Self::DegenerateDerivative(_)
                | Self::CovEntry { .. }
                | Self::NotPsd(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, EcfError>;
