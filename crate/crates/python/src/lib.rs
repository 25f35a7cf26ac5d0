//! Python bindings for the `ecf` crate, built as the `pyecf` extension module.

use ecf::asymptotics;
use ecf::{DistributionModel, EcfCurve, EcfError, Experiment, SimConfig, SortedSample, StreamRng};
use pyo3::create_exception;
use pyo3::exceptions::{PyArithmeticError, PyIndexError, PyValueError};
use pyo3::prelude::*;
use serde::Serialize;

create_exception!(pyecf, NumericalError, PyArithmeticError);

fn to_py(e: EcfError) -> PyErr {
    if e.is_numerical() {
        NumericalError::new_err(e.to_string())
    } else {
        PyValueError::new_err(e.to_string())
    }
}

/// Serializable report to a plain Python dict.
fn to_dict<'py, T: Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyValueError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

/// A parametric law: `Model("normal:0,1")`, `Model("exp:1")`, `Model("uniform:0,1")`.
#[pyclass(name = "Model", module = "pyecf", frozen)]
#[derive(Clone)]
struct PyModel {
    inner: DistributionModel,
}

#[pymethods]
impl PyModel {
    #[new]
    fn new(spec: &str) -> PyResult<Self> {
        Ok(Self {
            inner: spec.parse().map_err(to_py)?,
        })
    }

    #[staticmethod]
    #[pyo3(signature = (mean=0.0, sd=1.0))]
    fn normal(mean: f64, sd: f64) -> PyResult<Self> {
        Ok(Self {
            inner: DistributionModel::normal(mean, sd).map_err(to_py)?,
        })
    }

    #[staticmethod]
    #[pyo3(signature = (rate=1.0))]
    fn exponential(rate: f64) -> PyResult<Self> {
        Ok(Self {
            inner: DistributionModel::exponential(rate).map_err(to_py)?,
        })
    }

    #[staticmethod]
    #[pyo3(signature = (lo=0.0, hi=1.0))]
    fn uniform(lo: f64, hi: f64) -> PyResult<Self> {
        Ok(Self {
            inner: DistributionModel::uniform(lo, hi).map_err(to_py)?,
        })
    }

    fn quantile(&self, p: f64) -> PyResult<f64> {
        self.inner.quantile(p).map_err(to_py)
    }

    fn pdf(&self, x: f64) -> f64 {
        self.inner.pdf(x)
    }

    fn cdf(&self, x: f64) -> f64 {
        self.inner.cdf(x)
    }

    fn mean(&self) -> f64 {
        self.inner.mean()
    }

    fn partial_mean(&self, p: f64) -> PyResult<f64> {
        self.inner.partial_mean(p).map_err(to_py)
    }

    fn mu_lower(&self, p: f64) -> PyResult<f64> {
        self.inner.mu_lower(p).map_err(to_py)
    }

    fn mu_upper(&self, p: f64) -> PyResult<f64> {
        self.inner.mu_upper(p).map_err(to_py)
    }

    /// Population cross-over function `G(p)`.
    fn crossover_g(&self, p: f64) -> PyResult<f64> {
        self.inner.crossover_g(p).map_err(to_py)
    }

    /// Between-cluster split function `B(p)`.
    fn split_b(&self, p: f64) -> PyResult<f64> {
        self.inner.split_b(p).map_err(to_py)
    }

    fn g_prime(&self, p: f64) -> PyResult<f64> {
        self.inner.g_prime(p).map_err(to_py)
    }

    /// Split point `p0` maximizing `B` on `[a, b]`, as a dict.
    #[pyo3(signature = (a=0.01, b=0.99))]
    fn find_split_point<'py>(&self, py: Python<'py>, a: f64, b: f64) -> PyResult<Bound<'py, PyAny>> {
        to_dict(py, &self.inner.find_split_point(a, b).map_err(to_py)?)
    }

    /// Limit variance of `sqrt(n)(G_n(p) − G(p))`.
    fn sigma_var(&self, py: Python<'_>, p: f64) -> PyResult<f64> {
        py.allow_threads(|| asymptotics::sigma_var(&self.inner, p)).map_err(to_py)
    }

    fn cov_theta(&self, py: Python<'_>, p: f64, r: f64) -> PyResult<f64> {
        py.allow_threads(|| asymptotics::cov_theta(&self.inner, p, r)).map_err(to_py)
    }

    /// Limit covariance matrix on `grid`, as a list of rows.
    fn cov_grid(&self, py: Python<'_>, grid: Vec<f64>) -> PyResult<Vec<Vec<f64>>> {
        py.allow_threads(|| asymptotics::cov_grid_theoretical(&self.inner, &grid))
            .map(|spec| spec.matrix)
            .map_err(to_py)
    }

    /// `(xi, tau, kappa, theta)` of the influence function at `w`.
    fn theta(&self, p: f64, w: f64) -> PyResult<(f64, f64, f64, f64)> {
        let d = asymptotics::theta_eval(&self.inner, p, w).map_err(to_py)?;
        Ok((d.xi, d.tau, d.kappa, d.theta))
    }

    /// Sorted i.i.d. sample of size `n` from stream `stream` of `seed`.
    #[pyo3(signature = (n, seed=0, stream=0))]
    fn sample(&self, n: usize, seed: u64, stream: u64) -> PyResult<PySample> {
        let inner = ecf::sample_iid(&self.inner, n, &mut StreamRng::new(seed, stream)).map_err(to_py)?;
        Ok(PySample { inner })
    }

    fn __str__(&self) -> String {
        self.inner.to_string()
    }

    fn __repr__(&self) -> String {
        format!("Model('{}')", self.inner)
    }
}

/// Sorted data with prefix sums.
#[pyclass(name = "Sample", module = "pyecf", frozen)]
struct PySample {
    inner: SortedSample,
}

#[pymethods]
impl PySample {
    /// Sorts `values` unless `presorted`, in which case order is checked.
    #[new]
    #[pyo3(signature = (values, presorted=false))]
    fn new(values: Vec<f64>, presorted: bool) -> PyResult<Self> {
        let inner = if presorted {
            SortedSample::from_sorted(values)
        } else {
            SortedSample::new(values)
        };
        Ok(Self {
            inner: inner.map_err(to_py)?,
        })
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    #[getter]
    fn values(&self) -> Vec<f64> {
        self.inner.values().to_vec()
    }

    /// `G_n(p)`.
    fn ecf(&self, p: f64) -> PyResult<f64> {
        ecf::ecf_eval(&self.inner, p).map_err(to_py)
    }

    fn curve(&self) -> PyResult<PyCurve> {
        check_len(&self.inner)?;
        Ok(PyCurve {
            inner: ecf::ecf_curve(&self.inner),
        })
    }

    /// `(k_star, p_n)`.
    fn split_point(&self) -> PyResult<(usize, f64)> {
        check_len(&self.inner)?;
        let sp = ecf::empirical_split_point(&self.inner);
        Ok((sp.k_star, sp.p_n))
    }

    /// `(left, right, split_value)`.
    fn two_cluster_split(&self) -> PyResult<(Vec<f64>, Vec<f64>, f64)> {
        check_len(&self.inner)?;
        let s = ecf::two_cluster_split(&self.inner);
        Ok((s.left.to_vec(), s.right.to_vec(), s.split_value))
    }

    /// Plug-in estimate of the limit variance at `p`.
    #[pyo3(signature = (p, bandwidth=None))]
    fn empirical_sigma(&self, p: f64, bandwidth: Option<f64>) -> PyResult<f64> {
        asymptotics::empirical_sigma(&self.inner, p, bandwidth).map_err(to_py)
    }

    /// One Newton step from the model's split point, using this sample's ECF.
    fn newton_split_approx(&self, model: &PyModel) -> PyResult<f64> {
        asymptotics::newton_split_approx(&model.inner, &self.inner).map_err(to_py)
    }

    fn __repr__(&self) -> String {
        format!("Sample(n={})", self.inner.len())
    }
}

fn check_len(sample: &SortedSample) -> PyResult<()> {
    if sample.len() < 2 {
        Err(to_py(EcfError::SampleTooSmall {
            needed: 2,
            got: sample.len(),
        }))
    } else {
        Ok(())
    }
}

/// The ECF at every bucket `k = 1..n−1`.
#[pyclass(name = "Curve", module = "pyecf", frozen)]
struct PyCurve {
    inner: EcfCurve,
}

#[pymethods]
impl PyCurve {
    #[getter]
    fn n(&self) -> usize {
        self.inner.n
    }

    #[getter]
    fn g(&self) -> Vec<f64> {
        self.inner.g.clone()
    }

    #[getter]
    fn crossing_k(&self) -> usize {
        self.inner.crossing_k
    }

    #[getter]
    fn p_hat(&self) -> f64 {
        self.inner.p_hat
    }

    /// Value at bucket `k`, 1-based.
    fn at(&self, k: usize) -> PyResult<f64> {
        if k == 0 || k >= self.inner.n {
            return Err(PyIndexError::new_err(format!("bucket {k} outside 1..{}", self.inner.n - 1)));
        }
        Ok(self.inner.at(k))
    }

    fn __len__(&self) -> usize {
        self.inner.g.len()
    }

    fn __repr__(&self) -> String {
        format!("Curve(n={}, crossing_k={})", self.inner.n, self.inner.crossing_k)
    }
}

/// Mean, variance and optional KS test of `T_n` over `replicates` runs.
#[pyfunction]
#[pyo3(signature = (model, n, replicates, p=0.5, seed=0, ks=false))]
fn simulate_tn<'py>(
    py: Python<'py>,
    model: &PyModel,
    n: usize,
    replicates: usize,
    p: f64,
    seed: u64,
    ks: bool,
) -> PyResult<Bound<'py, PyAny>> {
    let config = SimConfig {
        model: model.inner.clone(),
        p,
        n,
        replicates,
        seed,
        experiment: if ks { Experiment::KsNormality } else { Experiment::TnSummary },
    };
    let report = py.allow_threads(|| ecf::simulate_tn(&config)).map_err(to_py)?;
    to_dict(py, &report)
}

/// Empirical vs limit covariance of `U_n` on `grid`.
#[pyfunction]
#[pyo3(signature = (model, grid, n, replicates, seed=0))]
fn simulate_cov_grid<'py>(
    py: Python<'py>,
    model: &PyModel,
    grid: Vec<f64>,
    n: usize,
    replicates: usize,
    seed: u64,
) -> PyResult<Bound<'py, PyAny>> {
    let config = SimConfig {
        model: model.inner.clone(),
        p: 0.5,
        n,
        replicates,
        seed,
        experiment: Experiment::CovGrid(grid),
    };
    let report = py.allow_threads(|| ecf::simulate_cov_grid(&config)).map_err(to_py)?;
    to_dict(py, &report)
}

/// One-sample KS test against `N(0, variance)`: `(statistic, pvalue)`.
#[pyfunction]
fn ks_test(values: Vec<f64>, variance: f64) -> PyResult<(f64, f64)> {
    let r = ecf::ks_test(&values, variance).map_err(to_py)?;
    Ok((r.statistic, r.pvalue))
}

/// Asymptotic Kolmogorov tail probability `P(K > x)`.
#[pyfunction]
fn kolmogorov_pvalue(x: f64) -> f64 {
    ecf::kolmogorov_pvalue(x)
}

/// `G_n(p)` of raw, unsorted values.
#[pyfunction]
fn ecf_eval(values: Vec<f64>, p: f64) -> PyResult<f64> {
    let s = SortedSample::new(values).map_err(to_py)?;
    ecf::ecf_eval(&s, p).map_err(to_py)
}

#[pymodule]
fn pyecf(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyModel>()?;
    m.add_class::<PySample>()?;
    m.add_class::<PyCurve>()?;
    m.add_function(wrap_pyfunction!(simulate_tn, m)?)?;
    m.add_function(wrap_pyfunction!(simulate_cov_grid, m)?)?;
    m.add_function(wrap_pyfunction!(ks_test, m)?)?;
    m.add_function(wrap_pyfunction!(kolmogorov_pvalue, m)?)?;
    m.add_function(wrap_pyfunction!(ecf_eval, m)?)?;
    m.add("NumericalError", m.py().get_type::<NumericalError>())?;
    Ok(())
}
