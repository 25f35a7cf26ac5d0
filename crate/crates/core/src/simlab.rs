//! Monte Carlo checks of the limit theory.
//!
//! Replicate `r` of every experiment draws from stream `r` of the
//! configured seed. Replicates run in parallel, results are collected in
//! replicate order and reduced sequentially, so reports are bit-identical
//! regardless of thread count.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::asymptotics::{cov_grid_theoretical, sample_variance, sigma_var, validate_grid, CovSpec};
use crate::distmodel::DistributionModel;
use crate::ecf::ecf_eval;
use crate::error::{EcfError, Result};
use crate::normal;
use crate::numfmt::fmt_g;
use crate::rng::{sample_iid, StreamRng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Experiment {
    /// Mean and variance of `T_n = √n(G_n(p) − G(p))`.
    TnSummary,
    /// KS test of the `T_n` replicates against `N(0, σ)`.
    KsNormality,
    /// Empirical vs limit covariance of `U_n` on a grid of levels.
    CovGrid(Vec<f64>),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimConfig {
    pub model: DistributionModel,
    #[serde(default = "default_p")]
    pub p: f64,
    pub n: usize,
    pub replicates: usize,
    #[serde(default)]
    pub seed: u64,
    pub experiment: Experiment,
}

fn default_p() -> f64 {
    0.5
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n < 10 {
            return Err(EcfError::Config(format!("n must be at least 10, got {}", self.n)));
        }
        if self.replicates < 10 {
            return Err(EcfError::Config(format!(
                "replicates must be at least 10, got {}",
                self.replicates
            )));
        }
        match &self.experiment {
            Experiment::CovGrid(grid) => {
                validate_grid(grid)?;
                if let Some(&bad) = grid.iter().find(|&&p| !(0.05..=0.95).contains(&p)) {
                    return Err(EcfError::Config(format!(
                        "grid levels must lie in [0.05, 0.95], got {bad}"
                    )));
                }
                if self.replicates < 100 {
                    return Err(EcfError::Config(format!(
                        "covariance grid needs at least 100 replicates, got {}",
                        self.replicates
                    )));
                }
            }
            _ => {
                if !(self.p > 0.0 && self.p < 1.0) {
                    return Err(EcfError::Domain(self.p));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimReport {
    pub model: String,
    pub p: f64,
    pub n: usize,
    pub replicates: usize,
    pub seed: u64,
    pub tn_values: Vec<f64>,
    pub mean: f64,
    /// Divisor `R − 1`.
    pub variance: f64,
    pub theoretical_sigma: f64,
    pub ks_statistic: Option<f64>,
    pub ks_pvalue: Option<f64>,
    /// Seconds; excluded from determinism guarantees.
    pub wall_time: f64,
}

impl SimReport {
    /// The report with its timing zeroed, for reproducibility comparisons.
    pub fn without_timing(mut self) -> Self {
        self.wall_time = 0.0;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KsResult {
    pub statistic: f64,
    pub pvalue: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovGridReport {
    pub model: String,
    pub n: usize,
    pub replicates: usize,
    pub seed: u64,
    pub grid: Vec<f64>,
    pub empirical: Vec<Vec<f64>>,
    pub theoretical: CovSpec,
    pub max_abs_error: f64,
    pub wall_time: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ExperimentReport {
    Tn(SimReport),
    CovGrid(CovGridReport),
}

pub fn run_experiment(config: &SimConfig) -> Result<ExperimentReport> {
    match config.experiment {
        Experiment::CovGrid(_) => simulate_cov_grid(config).map(ExperimentReport::CovGrid),
        _ => simulate_tn(config).map(ExperimentReport::Tn),
    }
}

/// Replicates of `T_n = √n(G_n(p) − G(p))` with their summary.
pub fn simulate_tn(config: &SimConfig) -> Result<SimReport> {
    config.validate()?;
    let start = Instant::now();
    let model = &config.model;
    let p = config.p;
    let g = model.crossover_g(p)?;
    let theoretical_sigma = sigma_var(model, p)?;
    let root_n = (config.n as f64).sqrt();

    let tn_values = (0..config.replicates)
        .into_par_iter()
        .map(|r| {
            let mut rng = StreamRng::new(config.seed, r as u64);
            let sample = sample_iid(model, config.n, &mut rng)?;
            Ok(root_n * (ecf_eval(&sample, p)? - g))
        })
        .collect::<Result<Vec<f64>>>()?;

    let mean = tn_values.iter().sum::<f64>() / tn_values.len() as f64;
    let variance = sample_variance(&tn_values);
    let (ks_statistic, ks_pvalue) = if config.experiment == Experiment::KsNormality {
        let ks = ks_test(&tn_values, theoretical_sigma)?;
        (Some(ks.statistic), Some(ks.pvalue))
    } else {
        (None, None)
    };

    Ok(SimReport {
        model: model.to_string(),
        p,
        n: config.n,
        replicates: config.replicates,
        seed: config.seed,
        tn_values,
        mean,
        variance,
        theoretical_sigma,
        ks_statistic,
        ks_pvalue,
        wall_time: start.elapsed().as_secs_f64(),
    })
}

/// One-sample KS test against the fully specified `N(0, variance)`.
pub fn ks_test(values: &[f64], variance: f64) -> Result<KsResult> {
    if values.is_empty() {
        return Err(EcfError::SampleTooSmall { needed: 1, got: 0 });
    }
    if !(variance > 0.0 && variance.is_finite()) {
        return Err(EcfError::InvalidModel(format!(
            "null variance must be positive, got {variance}"
        )));
    }
    let sd = variance.sqrt();
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let m = sorted.len() as f64;
    let statistic = sorted
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = normal::cdf(x / sd);
            let above = (i + 1) as f64 / m - f;
            let below = f - i as f64 / m;
            above.max(below)
        })
        .fold(0.0, f64::max);
    Ok(KsResult {
        statistic,
        pvalue: kolmogorov_pvalue(m.sqrt() * statistic),
    })
}

/// Survival function of the Kolmogorov distribution,
/// `P(K > x) = 2 Σ_{k≥1} (−1)^{k−1} exp(−2k²x²)`.
///
/// Below `x = 1` the alternating series converges slowly, so the
/// equivalent theta-function form of the distribution function is summed
/// instead. Both sums stop once terms drop below 1e-12.
pub fn kolmogorov_pvalue(x: f64) -> f64 {
    const TERM_TOL: f64 = 1e-12;
    if x.is_nan() || x <= 0.0 {
        return 1.0;
    }
    if x.is_infinite() {
        return 0.0;
    }
    let p = if x < 1.0 {
        let pi2 = std::f64::consts::PI * std::f64::consts::PI;
        let mut cdf = 0.0;
        for k in 1..=1000u32 {
            let odd = f64::from(2 * k - 1);
            let term = (-odd * odd * pi2 / (8.0 * x * x)).exp();
            cdf += term;
            if term < TERM_TOL {
                break;
            }
        }
        1.0 - (2.0 * std::f64::consts::PI).sqrt() / x * cdf
    } else {
        let mut sum = 0.0;
        for k in 1..=1000u32 {
            let kf = f64::from(k);
            let term = (-2.0 * kf * kf * x * x).exp();
            sum += if k % 2 == 1 { term } else { -term };
            if term < TERM_TOL {
                break;
            }
        }
        2.0 * sum
    };
    p.clamp(0.0, 1.0)
}

/// Covariance of `U_n(p) = √n(G_n(p) − G(p))` across a grid, next to the
/// limit covariance `Cov(θ_p, θ_r)`.
pub fn simulate_cov_grid(config: &SimConfig) -> Result<CovGridReport> {
    config.validate()?;
    let Experiment::CovGrid(grid) = &config.experiment else {
        return Err(EcfError::Config("simulate_cov_grid needs a cov_grid experiment".into()));
    };
    let start = Instant::now();
    let model = &config.model;
    let k = grid.len();
    let g = grid
        .iter()
        .map(|&p| model.crossover_g(p))
        .collect::<Result<Vec<_>>>()?;
    let root_n = (config.n as f64).sqrt();

    let rows = (0..config.replicates)
        .into_par_iter()
        .map(|r| {
            let mut rng = StreamRng::new(config.seed, r as u64);
            let sample = sample_iid(model, config.n, &mut rng)?;
            grid.iter()
                .zip(&g)
                .map(|(&p, &gp)| Ok(root_n * (ecf_eval(&sample, p)? - gp)))
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<Vec<Vec<f64>>>>()?;

    let r = rows.len() as f64;
    let means: Vec<f64> = (0..k)
        .map(|i| rows.iter().map(|row| row[i]).sum::<f64>() / r)
        .collect();
    let mut empirical = vec![vec![0.0; k]; k];
    for i in 0..k {
        for j in i..k {
            let c = rows
                .iter()
                .map(|row| (row[i] - means[i]) * (row[j] - means[j]))
                .sum::<f64>()
                / (r - 1.0);
            empirical[i][j] = c;
            empirical[j][i] = c;
        }
    }

    let theoretical = cov_grid_theoretical(model, grid)?;
    let max_abs_error = empirical
        .iter()
        .flatten()
        .zip(theoretical.matrix.iter().flatten())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);

    Ok(CovGridReport {
        model: model.to_string(),
        n: config.n,
        replicates: config.replicates,
        seed: config.seed,
        grid: grid.clone(),
        empirical,
        theoretical,
        max_abs_error,
        wall_time: start.elapsed().as_secs_f64(),
    })
}

/// Mean/variance table: one row per sample size.
pub fn tn_table_csv(reports: &[SimReport]) -> String {
    let mut out = String::from("model,p,n,replicates,mean,variance,theoretical_sigma\n");
    for r in reports {
        out.push_str(&format!(
            "\"{}\",{},{},{},{},{},{}\n",
            r.model,
            fmt_g(r.p),
            r.n,
            r.replicates,
            fmt_g(r.mean),
            fmt_g(r.variance),
            fmt_g(r.theoretical_sigma)
        ));
    }
    out
}

/// KS table: one row per sample size.
pub fn ks_table_csv(reports: &[SimReport]) -> String {
    let mut out = String::from("model,p,n,replicates,ks_statistic,ks_pvalue\n");
    for r in reports {
        out.push_str(&format!(
            "\"{}\",{},{},{},{},{}\n",
            r.model,
            fmt_g(r.p),
            r.n,
            r.replicates,
            r.ks_statistic.map(fmt_g).unwrap_or_default(),
            r.ks_pvalue.map(fmt_g).unwrap_or_default()
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config(model: &str, experiment: Experiment) -> SimConfig {
        SimConfig {
            model: model.parse().unwrap(),
            p: 0.5,
            n: 200,
            replicates: 100,
            seed: 99,
            experiment,
        }
    }

    #[test]
    fn kolmogorov_values() {
        assert_eq!(kolmogorov_pvalue(0.0), 1.0);
        assert_eq!(kolmogorov_pvalue(f64::INFINITY), 0.0);
        assert!(kolmogorov_pvalue(10.0) < 1e-80);
        // scipy.special.kolmogorov
        assert!((kolmogorov_pvalue(1.36) - 0.049_485_876_755_377_876).abs() < 1e-10);
        assert!((kolmogorov_pvalue(0.5) - 0.963_945_243_664_875_1).abs() < 1e-10);
        assert_eq!(kolmogorov_pvalue(0.1), 1.0);
        // the two series agree where they meet
        let a = kolmogorov_pvalue(1.0 - 1e-12);
        let b = kolmogorov_pvalue(1.0);
        assert!((a - b).abs() < 1e-10);
        let mut prev = 1.0;
        for i in 0..=400 {
            let v = kolmogorov_pvalue(i as f64 * 0.01);
            assert!(v <= prev + 1e-15 && (0.0..=1.0).contains(&v));
            prev = v;
        }
    }

    #[test]
    fn ks_examples() {
        let r = ks_test(&[0.0], 1.0).unwrap();
        assert!((r.statistic - 0.5).abs() < 1e-15);
        let m = 50;
        let vals: Vec<f64> = (1..=m).map(|i| normal::quantile((i as f64 - 0.5) / m as f64)).collect();
        let r = ks_test(&vals, 1.0).unwrap();
        assert!((r.statistic - 1.0 / (2.0 * m as f64)).abs() < 1e-12);
        assert!(ks_test(&[], 1.0).is_err());
        assert!(ks_test(&[1.0], 0.0).is_err());
        assert!(ks_test(&[1.0], -2.0).is_err());
    }

    #[test]
    fn ks_uses_variance_scale() {
        let vals: Vec<f64> = (1..=40).map(|i| 3.0 * normal::quantile((i as f64 - 0.5) / 40.0)).collect();
        let r = ks_test(&vals, 9.0).unwrap();
        assert!((r.statistic - 1.0 / 80.0).abs() < 1e-12);
    }

    #[test]
    fn config_validation() {
        let mut c = config("normal:0,1", Experiment::TnSummary);
        assert!(c.validate().is_ok());
        c.n = 5;
        assert!(c.validate().is_err());
        let mut c = config("normal:0,1", Experiment::TnSummary);
        c.replicates = 3;
        assert!(c.validate().is_err());
        let mut c = config("normal:0,1", Experiment::TnSummary);
        c.p = 1.0;
        assert!(c.validate().is_err());
        let c = config("normal:0,1", Experiment::CovGrid(vec![0.01, 0.5]));
        assert!(c.validate().is_err());
        let mut c = config("normal:0,1", Experiment::CovGrid(vec![0.3, 0.5]));
        assert!(c.validate().is_ok());
        c.replicates = 50;
        assert!(c.validate().is_err());
    }

    #[test]
    fn config_json() {
        let text = r#"{"model":"exp:1","p":0.5,"n":100,"replicates":20,"seed":3,"experiment":"ks_normality"}"#;
        let c: SimConfig = serde_json::from_str(text).unwrap();
        assert_eq!(c.experiment, Experiment::KsNormality);
        let text = r#"{"model":"uniform:0,1","n":100,"replicates":200,"experiment":{"cov_grid":[0.3,0.7]}}"#;
        let c: SimConfig = serde_json::from_str(text).unwrap();
        assert_eq!(c.experiment, Experiment::CovGrid(vec![0.3, 0.7]));
        assert_eq!(c.p, 0.5);
    }

    #[test]
    fn tn_is_deterministic() {
        let c = config("exp:1", Experiment::KsNormality);
        let a = simulate_tn(&c).unwrap();
        let b = simulate_tn(&c).unwrap();
        assert_eq!(a.clone().without_timing(), b.without_timing());
        assert!(a.variance >= 0.0);
        assert_eq!(a.tn_values.len(), 100);
        assert!(a.ks_pvalue.is_some());
        let serial = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let s = serial.install(|| simulate_tn(&c)).unwrap();
        assert_eq!(s.tn_values, a.tn_values);
        let summary = simulate_tn(&config("exp:1", Experiment::TnSummary)).unwrap();
        assert!(summary.ks_statistic.is_none());
        assert_eq!(summary.tn_values, a.tn_values);
    }

    #[test]
    fn tn_replicate_matches_manual() {
        let c = config("normal:0,1", Experiment::TnSummary);
        let rep = simulate_tn(&c).unwrap();
        let mut rng = StreamRng::new(99, 7);
        let s = sample_iid(&c.model, 200, &mut rng).unwrap();
        let expected = (200f64).sqrt() * (ecf_eval(&s, 0.5).unwrap() - 0.0);
        assert_eq!(rep.tn_values[7], expected);
    }

    #[test]
    fn cov_grid_small_run() {
        let mut c = config("uniform:0,1", Experiment::CovGrid(vec![0.3, 0.5, 0.7]));
        c.replicates = 200;
        let rep = simulate_cov_grid(&c).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(rep.empirical[i][j], rep.empirical[j][i]);
            }
        }
        assert!(rep.max_abs_error.is_finite());
        let again = simulate_cov_grid(&c).unwrap();
        assert_eq!(rep.empirical, again.empirical);
        assert!(simulate_cov_grid(&config("uniform:0,1", Experiment::TnSummary)).is_err());
    }

    #[test]
    fn table_layouts() {
        let c = config("normal:0,1", Experiment::KsNormality);
        let rep = simulate_tn(&c).unwrap();
        let t1 = tn_table_csv(std::slice::from_ref(&rep));
        assert!(t1.starts_with("model,p,n,replicates,mean,variance,theoretical_sigma\n\"normal:0,1\",0.5,200,100,"));
        let t2 = ks_table_csv(&[rep]);
        assert_eq!(t2.lines().count(), 2);
    }
}
