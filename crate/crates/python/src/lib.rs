//! Python bindings: families, models, objectives, the criterion checker and
//! the EM trainers. Structured results come back as plain dicts.

use efgen::criterion::{check_criterion, CriterionGrid, DEFAULT_THRESHOLD};
use efgen::family::{Family, NaturalParams, StandardParams};
use efgen::harness::config::ModelSpec;
use efgen::harness::HarnessError;
use efgen::learning::{self, TrainingConfig};
use efgen::model::GenerativeModel;
use efgen::objective::{self, VariationalState};
use pyo3::exceptions::{PyKeyError, PyValueError};
use pyo3::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::Serialize;

fn value_error(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn harness_error(e: HarnessError) -> PyErr {
    PyValueError::new_err(e.message().to_string())
}

/// Converts any serializable value to Python objects through `json`.
fn to_py<'py, T: Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(value_error)?;
    py.import("json")?.call_method1("loads", (text,))
}

#[pyclass(name = "Family", module = "efgen", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyFamily {
    inner: Family,
}

#[pymethods]
impl PyFamily {
    /// `Family("gaussian_diag_cov", dim=2)`, `Family("categorical", states=4)`,
    /// `Family("gamma")`.
    #[new]
    #[pyo3(signature = (name, dim=None, states=None))]
    fn new(name: &str, dim: Option<usize>, states: Option<usize>) -> PyResult<Self> {
        let mut spec = serde_json::json!({ "name": name });
        if let Some(d) = dim {
            spec["dim"] = d.into();
        }
        if let Some(s) = states {
            spec["states"] = s.into();
        }
        let inner: Family = serde_json::from_value(spec).map_err(value_error)?;
        inner.validate().map_err(value_error)?;
        Ok(PyFamily { inner })
    }

    #[getter]
    fn name(&self) -> &'static str {
        self.inner.name()
    }

    #[getter]
    fn natural_dim(&self) -> usize {
        self.inner.natural_dim()
    }

    #[getter]
    fn data_dim(&self) -> usize {
        self.inner.data_dim()
    }

    fn to_natural(&self, standard: Vec<f64>) -> PyResult<Vec<f64>> {
        Ok(self.inner.to_natural(&StandardParams(standard)).map_err(value_error)?.0)
    }

    fn from_natural(&self, natural: Vec<f64>) -> PyResult<Vec<f64>> {
        Ok(self.inner.from_natural(&NaturalParams(natural)).map_err(value_error)?.0)
    }

    fn log_partition(&self, natural: Vec<f64>) -> PyResult<f64> {
        self.inner.log_partition(&NaturalParams(natural)).map_err(value_error)
    }

    fn grad_log_partition(&self, natural: Vec<f64>) -> PyResult<Vec<f64>> {
        self.inner.grad_log_partition(&NaturalParams(natural)).map_err(value_error)
    }

    fn entropy(&self, standard: Vec<f64>) -> PyResult<f64> {
        self.inner.entropy(&StandardParams(standard)).map_err(value_error)
    }

    fn pseudo_entropy(&self, natural: Vec<f64>) -> PyResult<f64> {
        self.inner.pseudo_entropy(&NaturalParams(natural)).map_err(value_error)
    }

    fn log_density(&self, natural: Vec<f64>, x: Vec<f64>) -> PyResult<f64> {
        self.inner.log_density(&NaturalParams(natural), &x).map_err(value_error)
    }

    #[pyo3(signature = (standard, n, seed=0))]
    fn sample(&self, standard: Vec<f64>, n: usize, seed: u64) -> PyResult<Vec<Vec<f64>>> {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        self.inner
            .sample(&StandardParams(standard), &mut rng, n)
            .map_err(value_error)
    }

    fn __repr__(&self) -> String {
        format!("Family({:?})", self.inner)
    }
}

#[pyclass(name = "Posterior", module = "efgen", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyPosterior {
    inner: VariationalState,
}

#[pymethods]
impl PyPosterior {
    #[getter]
    fn kind(&self) -> &'static str {
        self.inner.kind_name()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn to_dict<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.inner)
    }
}

#[pyclass(name = "Model", module = "efgen", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyModel {
    inner: GenerativeModel,
}

fn from_spec(spec: ModelSpec) -> PyResult<PyModel> {
    Ok(PyModel {
        inner: spec.build().map_err(harness_error)?,
    })
}

#[pymethods]
impl PyModel {
    #[staticmethod]
    fn ef_mixture(family: &PyFamily, weights: Vec<f64>, params: Vec<Vec<f64>>) -> PyResult<Self> {
        from_spec(ModelSpec::EfMixture {
            family: family.inner,
            weights,
            params,
        })
    }

    /// `weights` is a list of D rows of length H.
    #[staticmethod]
    #[pyo3(signature = (weights, mean, noise_var, prior_var=1.0))]
    fn ppca(weights: Vec<Vec<f64>>, mean: Vec<f64>, noise_var: f64, prior_var: f64) -> PyResult<Self> {
        from_spec(ModelSpec::Ppca {
            weights,
            mean,
            noise_var,
            prior_var,
        })
    }

    #[staticmethod]
    #[pyo3(signature = (weights, noise_vars, prior_var=1.0))]
    fn simple_fa(weights: Vec<Vec<f64>>, noise_vars: Vec<f64>, prior_var: f64) -> PyResult<Self> {
        from_spec(ModelSpec::SimpleFa {
            weights,
            noise_vars,
            prior_var,
        })
    }

    #[staticmethod]
    #[pyo3(signature = (priors, weights, offsets=None))]
    fn sbn(priors: Vec<f64>, weights: Vec<Vec<f64>>, offsets: Option<Vec<f64>>) -> PyResult<Self> {
        from_spec(ModelSpec::Sbn {
            priors,
            weights,
            offsets,
        })
    }

    #[staticmethod]
    fn simple_sbn(prior: f64, v: f64, w: f64) -> PyResult<Self> {
        from_spec(ModelSpec::Sbn {
            priors: vec![prior],
            weights: vec![vec![v], vec![w]],
            offsets: None,
        })
    }

    #[staticmethod]
    fn rigid_sbn(prior: f64, v: f64) -> PyResult<Self> {
        from_spec(ModelSpec::RigidSbn { prior, v })
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        from_spec(serde_json::from_str(text).map_err(value_error)?)
    }

    fn to_json(&self) -> PyResult<String> {
        let spec = ModelSpec::from_model(&self.inner).ok_or_else(|| value_error("model is not serializable"))?;
        serde_json::to_string(&spec).map_err(value_error)
    }

    #[getter]
    fn kind<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.inner.kind())
    }

    #[getter]
    fn psi(&self) -> Vec<f64> {
        self.inner.psi().to_vec()
    }

    #[getter]
    fn theta(&self) -> Vec<f64> {
        self.inner.theta().to_vec()
    }

    fn with_params(&self, psi: Vec<f64>, theta: Vec<f64>) -> PyResult<Self> {
        Ok(PyModel {
            inner: self.inner.with_params(psi, theta).map_err(value_error)?,
        })
    }

    /// `(latents, observations)` from a seeded ChaCha20 stream.
    #[pyo3(signature = (n, seed=0))]
    fn sample(&self, n: usize, seed: u64) -> PyResult<(Vec<Vec<f64>>, Vec<Vec<f64>>)> {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let s = self.inner.sample_joint(&mut rng, n).map_err(value_error)?;
        Ok((s.latents, s.observations))
    }

    fn exact_posterior(&self, py: Python<'_>, data: Vec<Vec<f64>>) -> PyResult<PyPosterior> {
        let inner = py
            .detach(|| objective::exact_posterior(&self.inner, &data))
            .map_err(value_error)?;
        Ok(PyPosterior { inner })
    }

    /// ELBO terms and the entropy sum; the exact posterior when `q` is None.
    #[pyo3(signature = (data, q=None, pseudo=false))]
    fn elbo<'py>(
        &self,
        py: Python<'py>,
        data: Vec<Vec<f64>>,
        q: Option<&PyPosterior>,
        pseudo: bool,
    ) -> PyResult<Bound<'py, PyAny>> {
        let report = py
            .detach(|| {
                let q = match q {
                    Some(q) => q.inner.clone(),
                    None => objective::exact_posterior(&self.inner, &data)?,
                };
                if pseudo {
                    objective::pseudo_elbo_terms(&self.inner, &data, &q)
                } else {
                    objective::elbo_terms(&self.inner, &data, &q)
                }
            })
            .map_err(value_error)?;
        to_py(py, &report)
    }

    fn log_marginal_likelihood(&self, py: Python<'_>, data: Vec<Vec<f64>>) -> PyResult<f64> {
        py.detach(|| objective::log_marginal_likelihood(&self.inner, &data))
            .map_err(value_error)
    }

    /// Gradient norm of the ELBO over all parameters at the exact posterior.
    fn grad_norm(&self, py: Python<'_>, data: Vec<Vec<f64>>) -> PyResult<f64> {
        py.detach(|| {
            let q = objective::exact_posterior(&self.inner, &data)?;
            learning::grad_norm_all_params(&self.inner, &data, &q)
        })
        .map_err(value_error)
    }

    #[pyo3(signature = (seed=0, threshold=DEFAULT_THRESHOLD))]
    fn check_criterion<'py>(&self, py: Python<'py>, seed: u64, threshold: f64) -> PyResult<Bound<'py, PyAny>> {
        let grid = CriterionGrid::default_for(&self.inner, seed);
        let report = check_criterion(&self.inner, &grid.psi, &grid.theta, &grid.z, threshold).map_err(value_error)?;
        to_py(py, &report)
    }

    fn __repr__(&self) -> String {
        format!("Model(kind={:?}, psi={:?}, theta={:?})", self.inner.kind(), self.inner.psi(), self.inner.theta())
    }
}

#[pyclass(name = "Fit", module = "efgen", frozen, skip_from_py_object)]
struct PyFit {
    #[pyo3(get)]
    model: Py<PyModel>,
    #[pyo3(get)]
    posterior: Py<PyPosterior>,
    trace: learning::TrainingTrace,
}

#[pymethods]
impl PyFit {
    #[getter]
    fn converged(&self) -> bool {
        self.trace.converged
    }

    #[getter]
    fn iterations(&self) -> usize {
        self.trace.iterations
    }

    #[getter]
    fn trace<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.trace)
    }
}

fn wrap_fit(py: Python<'_>, fit: learning::Fit) -> PyResult<PyFit> {
    Ok(PyFit {
        model: Py::new(py, PyModel { inner: fit.model })?,
        posterior: Py::new(py, PyPosterior { inner: fit.posterior })?,
        trace: fit.trace,
    })
}

fn training_config(options: Option<&Bound<'_, pyo3::types::PyDict>>) -> PyResult<TrainingConfig> {
    let mut config = TrainingConfig::default();
    if let Some(options) = options {
        for (key, value) in options.iter() {
            let key: String = key.extract()?;
            match key.as_str() {
                "max_iters" => config.max_iters = value.extract()?,
                "elbo_rel_tol" => config.elbo_rel_tol = value.extract()?,
                "grad_norm_tol" => config.grad_norm_tol = value.extract()?,
                "seed" => config.seed = value.extract()?,
                "record_every" => config.record_every = value.extract()?,
                other => return Err(PyKeyError::new_err(format!("unknown training option '{other}'"))),
            }
        }
    }
    config.validate().map_err(value_error)?;
    Ok(config)
}

/// EM for an EF mixture; `from_model=True` starts at the model's parameters
/// instead of k-means++.
#[pyfunction]
#[pyo3(signature = (model, data, from_model=false, **options))]
fn em_mixture(
    py: Python<'_>,
    model: &PyModel,
    data: Vec<Vec<f64>>,
    from_model: bool,
    options: Option<&Bound<'_, pyo3::types::PyDict>>,
) -> PyResult<PyFit> {
    let config = training_config(options)?;
    let fit = py
        .detach(|| {
            if from_model {
                learning::em_mixture_from(&model.inner, &data, &config)
            } else {
                learning::em_mixture(&model.inner, &data, &config)
            }
        })
        .map_err(value_error)?;
    wrap_fit(py, fit)
}

/// Exact EM for a sigmoid belief net of the given shape.
#[pyfunction]
#[pyo3(signature = (model, data, from_model=false, **options))]
fn fit_sbn(
    py: Python<'_>,
    model: &PyModel,
    data: Vec<Vec<f64>>,
    from_model: bool,
    options: Option<&Bound<'_, pyo3::types::PyDict>>,
) -> PyResult<PyFit> {
    let config = training_config(options)?;
    let fit = py
        .detach(|| {
            if from_model {
                learning::fit_sbn_from(&model.inner, &data, &config)
            } else {
                learning::fit_sbn(&model.inner, &data, &config)
            }
        })
        .map_err(value_error)?;
    wrap_fit(py, fit)
}

/// p-PCA: returns `(eigen_model, em_fit)`.
#[pyfunction]
#[pyo3(signature = (data, latent_dim, **options))]
fn fit_ppca(
    py: Python<'_>,
    data: Vec<Vec<f64>>,
    latent_dim: usize,
    options: Option<&Bound<'_, pyo3::types::PyDict>>,
) -> PyResult<(PyModel, PyFit)> {
    let config = training_config(options)?;
    let fit = py
        .detach(|| learning::fit_ppca(&data, latent_dim, &config))
        .map_err(value_error)?;
    Ok((PyModel { inner: fit.eigen_model }, wrap_fit(py, fit.em)?))
}

#[pyfunction]
fn ppca_stationary_loglik(weights: Vec<Vec<f64>>, noise_var: f64) -> PyResult<f64> {
    let cols = weights.first().map_or(0, Vec::len);
    if weights.iter().any(|r| r.len() != cols) {
        return Err(value_error("weights must be rectangular"));
    }
    let w = nalgebra::DMatrix::from_fn(weights.len(), cols, |i, j| weights[i][j]);
    learning::ppca_stationary_loglik(&w, noise_var).map_err(value_error)
}

#[pyfunction]
fn digamma(x: f64) -> PyResult<f64> {
    efgen::special::digamma(x).map_err(value_error)
}

#[pyfunction]
fn log_gamma(x: f64) -> PyResult<f64> {
    efgen::special::log_gamma(x).map_err(value_error)
}

#[pymodule]
#[pyo3(name = "efgen")]
fn efgen_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_class::<PyFamily>()?;
    m.add_class::<PyModel>()?;
    m.add_class::<PyPosterior>()?;
    m.add_class::<PyFit>()?;
    m.add_function(wrap_pyfunction!(em_mixture, m)?)?;
    m.add_function(wrap_pyfunction!(fit_sbn, m)?)?;
    m.add_function(wrap_pyfunction!(fit_ppca, m)?)?;
    m.add_function(wrap_pyfunction!(ppca_stationary_loglik, m)?)?;
    m.add_function(wrap_pyfunction!(digamma, m)?)?;
    m.add_function(wrap_pyfunction!(log_gamma, m)?)?;
    Ok(())
}
