//! Empirical cross-over function (ECF) of a univariate sample.
//!
//! The ECF is an L-statistic built from two heavily trimmed means and the
//! two order statistics at the trimming boundary. Its zero crossing splits
//! a sorted sample into two clusters; its population counterpart `G(p)`
//! vanishes at the split point of the between-cluster sum of squares.
//!
//! * [`distmodel`]: parametric laws and population functionals (`G`, `B`, `p0`).
//! * [`ecf`]: the statistic on data, the full curve, and the two-cluster split.
//! * [`asymptotics`]: influence function, limit variance and covariance.
//! * [`simlab`]: seeded Monte Carlo verification and the KS test.
//! * [`cli`]: the `ecf` command line.

pub mod asymptotics;
pub mod cli;
pub mod distmodel;
pub mod ecf;
pub mod error;
pub mod normal;
pub mod numfmt;
pub mod quadrature;
pub mod rng;
pub mod simlab;

pub use asymptotics::{
    cov_grid_theoretical, cov_theta, empirical_sigma, expected_theta, newton_split_approx, sigma_var, theta_eval,
    CovSpec, InfluenceDecomposition,
};
pub use distmodel::{DistributionModel, SplitDiagnostics};
pub use ecf::{
    bucket_index, ecf_curve, ecf_eval, empirical_split_point, two_cluster_split, EcfCurve, SortedSample, SplitPoint,
    TwoClusterSplit,
};
pub use error::{EcfError, Result};
pub use rng::{sample_iid, StreamRng};
pub use simlab::{
    kolmogorov_pvalue, ks_test, simulate_cov_grid, simulate_tn, CovGridReport, Experiment, KsResult, SimConfig,
    SimReport,
};
