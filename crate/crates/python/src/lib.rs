//! Python bindings: model specs, datasets, local fits, aggregation, the
//! compatibility check, payload encoding and the simulation harness.

use pyo3::create_exception;
use pyo3::exceptions::PyException;
use pyo3::prelude::*;

use bfi_core::federation::{decode_payload, encode_payload, read_csv, InferencePayload};
use bfi_core::sim::{run_experiment as run_experiment_core, ExperimentConfig};
use bfi_core::{
    aggregate as aggregate_core, aggregate_nuisance, compatibility_check as compat_core, credible_intervals,
    fit_map as fit_map_core, BfiError, BlockSplit, BlockedFitResult, Family, FitConfig, GaussianPrior,
    LocalFitResult,
};

create_exception!(pybfi, BfiException, PyException);
create_exception!(pybfi, DataError, BfiException);
create_exception!(pybfi, NumericalError, BfiException);

fn to_py(e: BfiError) -> PyErr {
    if e.is_numerical() {
        NumericalError::new_err(e.to_string())
    } else {
        DataError::new_err(e.to_string())
    }
}

fn ridge(dim: usize, lam: f64) -> PyResult<GaussianPrior> {
    GaussianPrior::ridge(dim, lam).map_err(to_py)
}

#[pyclass(module = "pybfi", frozen, skip_from_py_object)]
#[derive(Clone)]
struct ModelSpec {
    inner: bfi_core::ModelSpec,
}

#[pymethods]
impl ModelSpec {
    /// `family` is "logistic" or "linear"; the latter needs `noise_variance`.
    #[new]
    #[pyo3(signature = (covariates, family = "logistic", noise_variance = None, has_intercept = true))]
    fn new(covariates: Vec<String>, family: &str, noise_variance: Option<f64>, has_intercept: bool) -> PyResult<Self> {
        let family = match (family, noise_variance) {
            ("logistic", None) => Family::Logistic,
            ("linear", Some(v)) => Family::linear_gaussian(v),
            ("linear", None) => return Err(DataError::new_err("linear family needs noise_variance")),
            (other, _) => return Err(DataError::new_err(format!("unknown family {other:?}"))),
        };
        let inner = bfi_core::ModelSpec::new(family, covariates, has_intercept).map_err(to_py)?;
        Ok(ModelSpec { inner })
    }

    #[getter]
    fn covariates(&self) -> Vec<String> {
        self.inner.covariates.clone()
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn column_names(&self) -> Vec<String> {
        self.inner.column_names()
    }

    fn __repr__(&self) -> String {
        format!("ModelSpec({:?})", self.inner.column_names())
    }
}

#[pyclass(module = "pybfi", frozen)]
struct Dataset {
    inner: bfi_core::Dataset,
}

#[pymethods]
impl Dataset {
    /// `rows` holds raw covariate values in spec order.
    #[new]
    #[pyo3(signature = (spec, rows, y, outcome = "y"))]
    fn new(spec: &ModelSpec, rows: Vec<Vec<f64>>, y: Vec<f64>, outcome: &str) -> PyResult<Self> {
        let inner = bfi_core::Dataset::from_covariates(&spec.inner, &rows, y, outcome, None).map_err(to_py)?;
        Ok(Dataset { inner })
    }

    #[staticmethod]
    #[pyo3(signature = (path, spec, outcome = "y"))]
    fn from_csv(path: &str, spec: &ModelSpec, outcome: &str) -> PyResult<Self> {
        let inner = read_csv(std::path::Path::new(path), &spec.inner, outcome).map_err(to_py)?;
        Ok(Dataset { inner })
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.n()
    }

    fn column_names(&self) -> Vec<String> {
        self.inner.column_names().to_vec()
    }

    fn __len__(&self) -> usize {
        self.inner.n()
    }
}

/// MAP estimate of one center.
#[pyclass(module = "pybfi", frozen, skip_from_py_object)]
#[derive(Clone)]
struct LocalFit {
    inner: LocalFitResult,
}

#[pymethods]
impl LocalFit {
    #[getter]
    fn theta_hat(&self) -> Vec<f64> {
        self.inner.theta_hat.clone()
    }

    #[getter]
    fn curvature(&self) -> Vec<Vec<f64>> {
        self.inner.curvature.to_rows()
    }

    #[getter]
    fn prior_precision(&self) -> Vec<Vec<f64>> {
        self.inner.prior_precision.to_rows()
    }

    #[getter]
    fn n_obs(&self) -> usize {
        self.inner.n_obs
    }

    #[getter]
    fn converged(&self) -> bool {
        self.inner.converged
    }

    #[getter]
    fn iterations(&self) -> usize {
        self.inner.iterations_used
    }

    #[getter]
    fn names(&self) -> Vec<String> {
        self.inner.covariate_names.clone()
    }

    fn std_devs(&self) -> PyResult<Vec<f64>> {
        self.inner.std_devs().map_err(to_py)
    }

    fn __repr__(&self) -> String {
        format!("LocalFit(theta_hat={:?}, n_obs={})", self.inner.theta_hat, self.inner.n_obs)
    }
}

#[pyclass(module = "pybfi", frozen)]
struct BfiResult {
    inner: bfi_core::BfiResult,
}

#[pymethods]
impl BfiResult {
    #[getter]
    fn theta_hat(&self) -> Vec<f64> {
        self.inner.theta_hat.clone()
    }

    #[getter]
    fn std_devs(&self) -> Vec<f64> {
        self.inner.std_devs.clone()
    }

    #[getter]
    fn curvature(&self) -> Vec<Vec<f64>> {
        self.inner.curvature.to_rows()
    }

    #[getter]
    fn names(&self) -> Vec<String> {
        self.inner.covariate_names.clone()
    }

    #[getter]
    fn n_obs(&self) -> usize {
        self.inner.n_obs
    }

    #[pyo3(signature = (alpha = 0.05))]
    fn credible_intervals(&self, alpha: f64) -> PyResult<Vec<(f64, f64)>> {
        credible_intervals(&self.inner, alpha).map_err(to_py)
    }

    fn __repr__(&self) -> String {
        format!("BfiResult(theta_hat={:?})", self.inner.theta_hat)
    }
}

#[pyfunction]
#[pyo3(signature = (spec, data, lam, max_iterations = 100))]
fn fit_map(spec: &ModelSpec, data: &Dataset, lam: f64, max_iterations: usize) -> PyResult<LocalFit> {
    let cfg = FitConfig {
        max_iterations,
        ..FitConfig::default()
    };
    let inner = fit_map_core(&spec.inner, &data.inner, &ridge(spec.inner.dim(), lam)?, &cfg).map_err(to_py)?;
    Ok(LocalFit { inner })
}

fn unwrap_fits(fits: &[Bound<'_, LocalFit>]) -> Vec<LocalFitResult> {
    fits.iter().map(|f| f.get().inner.clone()).collect()
}

/// Combines local fits under a ridge prior with precision `lam`.
#[pyfunction]
fn aggregate(fits: Vec<Bound<'_, LocalFit>>, lam: f64) -> PyResult<BfiResult> {
    let locals = unwrap_fits(&fits);
    let d = locals.first().map_or(0, LocalFitResult::dim);
    let inner = aggregate_core(&locals, &ridge(d, lam)?).map_err(to_py)?;
    Ok(BfiResult { inner })
}

/// Aggregation with one intercept per center. Returns
/// `(names, theta, std_devs)` with the intercepts first.
#[pyfunction]
fn aggregate_intercepts(fits: Vec<Bound<'_, LocalFit>>, lam: f64) -> PyResult<(Vec<String>, Vec<f64>, Vec<f64>)> {
    let locals = unwrap_fits(&fits);
    let d = locals.first().map_or(0, LocalFitResult::dim);
    let split = BlockSplit::intercept(d).map_err(to_py)?;
    let blocked = locals
        .into_iter()
        .map(|f| BlockedFitResult::from_local(f, split.clone()))
        .collect::<Result<Vec<_>, _>>()
        .map_err(to_py)?;
    let res = aggregate_nuisance(&blocked, &ridge(d - 1, lam)?, Some(&ridge(1, lam)?)).map_err(to_py)?;
    Ok((res.full_names(), res.full_theta(), res.full_std_devs().map_err(to_py)?))
}

/// Leave-one-center-out intervals as `[center][component] -> (difference, lower, upper)`.
#[pyfunction]
fn compatibility_check(fits: Vec<Bound<'_, LocalFit>>, lam: f64, alpha: f64) -> PyResult<Vec<Vec<(f64, f64, f64)>>> {
    let locals = unwrap_fits(&fits);
    let d = locals.first().map_or(0, LocalFitResult::dim);
    let report = compat_core(&locals, &ridge(d, lam)?, alpha).map_err(to_py)?;
    Ok(report
        .intervals
        .iter()
        .map(|row| row.iter().map(|iv| (iv.center, iv.lower(), iv.upper())).collect())
        .collect())
}

#[pyfunction]
fn encode(label: &str, spec: &ModelSpec, fit: &LocalFit) -> PyResult<String> {
    let p = InferencePayload::new(label, spec.inner.clone(), fit.inner.clone(), None).map_err(to_py)?;
    let bytes = encode_payload(&p).map_err(to_py)?;
    Ok(String::from_utf8(bytes).expect("payloads are UTF-8"))
}

/// Returns `(center_label, spec, fit)`.
#[pyfunction]
fn decode(text: &str) -> PyResult<(String, ModelSpec, LocalFit)> {
    let p = decode_payload(text.as_bytes()).map_err(to_py)?;
    Ok((p.center_label, ModelSpec { inner: p.model_spec }, LocalFit { inner: p.local_fit }))
}

/// Runs a study from a JSON config and returns the JSON report.
#[pyfunction]
fn run_experiment(py: Python<'_>, config_json: &str) -> PyResult<String> {
    let cfg: ExperimentConfig = serde_json::from_str(config_json).map_err(|e| DataError::new_err(e.to_string()))?;
    let report = py.detach(|| run_experiment_core(&cfg)).map_err(to_py)?;
    report.to_json().map_err(to_py)
}

#[pyfunction]
fn normal_quantile(p: f64) -> f64 {
    bfi_core::normal_quantile(p)
}

#[pymodule]
fn pybfi(m: &Bound<'_, PyModule>) -> PyResult<()> {
    let py = m.py();
    m.add("BfiException", py.get_type::<BfiException>())?;
    m.add("DataError", py.get_type::<DataError>())?;
    m.add("NumericalError", py.get_type::<NumericalError>())?;
    m.add_class::<ModelSpec>()?;
    m.add_class::<Dataset>()?;
    m.add_class::<LocalFit>()?;
    m.add_class::<BfiResult>()?;
    m.add_function(wrap_pyfunction!(fit_map, m)?)?;
    m.add_function(wrap_pyfunction!(aggregate, m)?)?;
    m.add_function(wrap_pyfunction!(aggregate_intercepts, m)?)?;
    m.add_function(wrap_pyfunction!(compatibility_check, m)?)?;
    m.add_function(wrap_pyfunction!(encode, m)?)?;
    m.add_function(wrap_pyfunction!(decode, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    m.add_function(wrap_pyfunction!(normal_quantile, m)?)?;
    Ok(())
}
