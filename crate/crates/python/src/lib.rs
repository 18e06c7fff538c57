//! Python bindings for `rkhs_kit`.
//!
//! Samples cross the boundary as lists of points (`list[list[float]]`); matrices come
//! back as lists of rows.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use rkhs_kit::adaptive::{KlmsState, KrlsState, OnlineFilter};
use rkhs_kit::conditional::{markov_cond_test, CondTestConfig};
use rkhs_kit::embeddings::{deflection_detector, mean_embed, mmd_sq as core_mmd_sq};
use rkhs_kit::experiments::{compute_experiment, run_experiment as core_run, Experiment, ExperimentConfig};
use rkhs_kit::faer::Mat;
use rkhs_kit::independence::{hsic_batch, independence_perm_test, sparse_hsic as core_sparse_hsic};
use rkhs_kit::kbr::{KbrModel, KbrState, PreimageOptions};
use rkhs_kit::kernels::gram_matrix;
use rkhs_kit::{Error, KernelFamily, KernelSpec};

fn to_py(e: Error) -> PyErr {
    match e.exit_code() {
        2 => PyValueError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn rows(m: &Mat<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect()).collect()
}

fn matrix(rows: &[Vec<f64>]) -> PyResult<Mat<f64>> {
    let cols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != cols) {
        return Err(PyValueError::new_err("matrix rows must have equal length"));
    }
    Ok(Mat::from_fn(rows.len(), cols, |i, j| rows[i][j]))
}

/// A kernel function on ℝᵈ.
#[pyclass(name = "Kernel", frozen, from_py_object)]
#[derive(Clone, Copy)]
struct PyKernel {
    spec: KernelSpec,
}

#[pymethods]
impl PyKernel {
    /// `exp(−‖x − y‖² / (2·bandwidth_sq))`.
    #[staticmethod]
    fn gaussian(input_dim: usize, bandwidth_sq: f64) -> PyResult<Self> {
        KernelSpec::gaussian(input_dim, bandwidth_sq).map(|spec| Self { spec }).map_err(to_py)
    }

    #[staticmethod]
    fn linear(input_dim: usize) -> PyResult<Self> {
        KernelSpec::linear(input_dim).map(|spec| Self { spec }).map_err(to_py)
    }

    #[staticmethod]
    fn polynomial(input_dim: usize, degree: u32) -> PyResult<Self> {
        KernelSpec::polynomial(input_dim, degree).map(|spec| Self { spec }).map_err(to_py)
    }

    /// `min(s, t)` on `[0, ∞)`.
    #[staticmethod]
    fn min() -> Self {
        Self { spec: KernelSpec::min() }
    }

    #[getter]
    fn input_dim(&self) -> usize {
        self.spec.input_dim()
    }

    fn __call__(&self, x: Vec<f64>, y: Vec<f64>) -> PyResult<f64> {
        self.spec.eval(&x, &y).map_err(to_py)
    }

    fn gram(&self, points: Vec<Vec<f64>>) -> PyResult<Vec<Vec<f64>>> {
        gram_matrix(&self.spec, &points).map(|g| rows(&g)).map_err(to_py)
    }

    fn __repr__(&self) -> String {
        match self.spec.family() {
            KernelFamily::Gaussian { bandwidth_sq } => {
                format!("Kernel.gaussian({}, {bandwidth_sq})", self.spec.input_dim())
            }
            other => format!("Kernel({other:?}, input_dim={})", self.spec.input_dim()),
        }
    }
}

/// Biased HSIC `(1/n²) Tr(K̃ L̃)` of two samples.
#[pyfunction]
fn hsic(xs: Vec<Vec<f64>>, ys: Vec<Vec<f64>>, kernel_x: PyKernel, kernel_y: PyKernel) -> PyResult<f64> {
    let kx = gram_matrix(&kernel_x.spec, &xs).map_err(to_py)?;
    let ky = gram_matrix(&kernel_y.spec, &ys).map_err(to_py)?;
    hsic_batch(kx.as_ref(), ky.as_ref()).map_err(to_py)
}

/// Sparse recursive HSIC; returns `(estimate, dictionary size)`.
#[pyfunction]
fn sparse_hsic(
    xs: Vec<Vec<f64>>,
    ys: Vec<Vec<f64>>,
    kernel_x: PyKernel,
    kernel_y: PyKernel,
    mu: f64,
) -> PyResult<(f64, usize)> {
    let d = core_sparse_hsic(&kernel_x.spec, &kernel_y.spec, &xs, &ys, mu).map_err(to_py)?;
    Ok((d.hsic(), d.len()))
}

/// Permutation test of independence; returns `(statistic, threshold, reject)`.
#[pyfunction]
#[pyo3(signature = (xs, ys, kernel_x, kernel_y, num_perms=100, level=0.05, seed=0))]
#[allow(clippy::too_many_arguments)]
fn independence_test(
    py: Python<'_>,
    xs: Vec<Vec<f64>>,
    ys: Vec<Vec<f64>>,
    kernel_x: PyKernel,
    kernel_y: PyKernel,
    num_perms: usize,
    level: f64,
    seed: u64,
) -> PyResult<(f64, f64, bool)> {
    let t = py
        .detach(|| independence_perm_test(&xs, &ys, &kernel_x.spec, &kernel_y.spec, num_perms, level, seed))
        .map_err(to_py)?;
    Ok((t.statistic, t.threshold, t.reject))
}

/// Tests `a ⊥ b | c`; returns `(statistic, threshold, reject)`.
#[pyfunction]
#[pyo3(signature = (a, b, c, kernel_a, kernel_b, kernel_c, reg_lambda=None, num_domains=8, num_perms=100, level=0.05, seed=0))]
#[allow(clippy::too_many_arguments)]
fn conditional_test(
    py: Python<'_>,
    a: Vec<Vec<f64>>,
    b: Vec<Vec<f64>>,
    c: Vec<Vec<f64>>,
    kernel_a: PyKernel,
    kernel_b: PyKernel,
    kernel_c: PyKernel,
    reg_lambda: Option<f64>,
    num_domains: usize,
    num_perms: usize,
    level: f64,
    seed: u64,
) -> PyResult<(f64, f64, bool)> {
    let defaults = CondTestConfig::default();
    let config = CondTestConfig {
        reg_lambda: reg_lambda.unwrap_or(defaults.reg_lambda),
        num_domains,
        num_perms,
        level,
        ..defaults
    };
    let t = py
        .detach(|| markov_cond_test(&a, &b, &c, &kernel_a.spec, &kernel_b.spec, &kernel_c.spec, &config, seed))
        .map_err(to_py)?;
    Ok((t.statistic, t.threshold, t.reject))
}

/// Biased squared MMD between two samples.
#[pyfunction]
fn mmd_sq(p: Vec<Vec<f64>>, q: Vec<Vec<f64>>, kernel: PyKernel) -> PyResult<f64> {
    core_mmd_sq(&kernel.spec, &p, &q).map_err(to_py)
}

/// Empirical mean embedding evaluated at `queries`.
#[pyfunction]
fn mean_embedding(samples: Vec<Vec<f64>>, kernel: PyKernel, queries: Vec<Vec<f64>>) -> PyResult<Vec<f64>> {
    let emb = mean_embed(&kernel.spec, &samples).map_err(to_py)?;
    queries.iter().map(|q| emb.eval(q).map_err(to_py)).collect()
}

/// Maximum-deflection linear detector; returns `(direction, max deflection)`.
#[pyfunction]
#[pyo3(signature = (mu0, mu1, sigma0, reg_lambda=0.0))]
fn deflection(mu0: Vec<f64>, mu1: Vec<f64>, sigma0: Vec<Vec<f64>>, reg_lambda: f64) -> PyResult<(Vec<f64>, f64)> {
    let s = matrix(&sigma0)?;
    let d = deflection_detector(&mu0, &mu1, s.as_ref(), reg_lambda).map_err(to_py)?;
    Ok((d.direction, d.max_deflection))
}

/// Kernel recursive least squares.
#[pyclass(name = "Krls")]
struct PyKrls {
    state: KrlsState,
}

#[pymethods]
impl PyKrls {
    #[new]
    fn new(kernel: PyKernel, ald_threshold: f64, x1: Vec<f64>, y1: f64) -> PyResult<Self> {
        KrlsState::new(kernel.spec, ald_threshold, &x1, y1).map(|state| Self { state }).map_err(to_py)
    }

    fn predict(&self, x: Vec<f64>) -> PyResult<f64> {
        self.state.predict(&x).map_err(to_py)
    }

    /// Returns the prediction made before absorbing `(x, y)`.
    fn update(&mut self, x: Vec<f64>, y: f64) -> PyResult<f64> {
        self.state.update(&x, y).map_err(to_py)
    }

    #[getter]
    fn dictionary(&self) -> Vec<Vec<f64>> {
        self.state.dictionary().to_vec()
    }

    fn __len__(&self) -> usize {
        self.state.dictionary_len()
    }
}

/// Normalized kernel LMS with coherence sparsification.
#[pyclass(name = "Klms")]
struct PyKlms {
    state: KlmsState,
}

#[pymethods]
impl PyKlms {
    #[new]
    fn new(
        kernel: PyKernel,
        coherence_threshold: f64,
        step_size: f64,
        stabilizer: f64,
        x1: Vec<f64>,
        y1: f64,
    ) -> PyResult<Self> {
        KlmsState::new(kernel.spec, coherence_threshold, step_size, stabilizer, &x1, y1)
            .map(|state| Self { state })
            .map_err(to_py)
    }

    fn predict(&self, x: Vec<f64>) -> PyResult<f64> {
        self.state.predict(&x).map_err(to_py)
    }

    fn update(&mut self, x: Vec<f64>, y: f64) -> PyResult<f64> {
        self.state.update(&x, y).map_err(to_py)
    }

    #[getter]
    fn dictionary(&self) -> Vec<Vec<f64>> {
        self.state.dictionary().to_vec()
    }

    fn __len__(&self) -> usize {
        self.state.dictionary_len()
    }
}

/// Kernel Bayes filter trained on consecutive state/observation pairs.
#[pyclass(name = "KbrFilter")]
struct PyKbrFilter {
    model: KbrModel,
    state: Option<KbrState>,
}

#[pymethods]
impl PyKbrFilter {
    #[new]
    #[pyo3(signature = (states, observations, kernel_x, kernel_y, reg_lambda=1e-4, reg_epsilon=1e-4))]
    fn new(
        states: Vec<Vec<f64>>,
        observations: Vec<Vec<f64>>,
        kernel_x: PyKernel,
        kernel_y: PyKernel,
        reg_lambda: f64,
        reg_epsilon: f64,
    ) -> PyResult<Self> {
        let model = KbrModel::new(kernel_x.spec, kernel_y.spec, states, observations, reg_lambda, reg_epsilon)
            .map_err(to_py)?;
        Ok(Self { model, state: None })
    }

    /// Starts (or restarts) filtering from the first observation.
    fn init(&mut self, y: Vec<f64>) -> PyResult<()> {
        self.state = Some(self.model.init(&y).map_err(to_py)?);
        Ok(())
    }

    /// Absorbs one observation.
    fn step(&mut self, y: Vec<f64>) -> PyResult<()> {
        let state = self.state.as_ref().ok_or_else(|| PyRuntimeError::new_err("call init() first"))?;
        self.state = Some(self.model.step(state, &y).map_err(to_py)?);
        Ok(())
    }

    /// Posterior weights over the training states.
    #[getter]
    fn weights(&self) -> Option<Vec<f64>> {
        self.state.as_ref().map(|s| s.alpha.clone())
    }

    /// Pre-image of the current posterior embedding.
    #[pyo3(signature = (num_restarts=3, seed=0))]
    fn decode(&self, num_restarts: usize, seed: u64) -> PyResult<Vec<f64>> {
        let state = self.state.as_ref().ok_or_else(|| PyRuntimeError::new_err("call init() first"))?;
        let opts = PreimageOptions { num_restarts, seed, ..Default::default() };
        self.model.decode(state, &opts).map(|p| p.point).map_err(to_py)
    }
}

/// Runs a named experiment with its defaults, overriding `n`, `seed` and the output
/// path. Returns `(summary, header, rows)`; the CSV is written only when `out` is given.
#[pyfunction]
#[pyo3(signature = (name, n=None, seed=0, out=None))]
fn run_experiment(
    py: Python<'_>,
    name: &str,
    n: Option<usize>,
    seed: u64,
    out: Option<String>,
) -> PyResult<(String, Vec<String>, Vec<Vec<String>>)> {
    let experiment: Experiment = name.parse().map_err(to_py)?;
    let mut config = ExperimentConfig::new(experiment);
    config.seed = seed;
    if let Some(n) = n {
        config.n_samples = n;
    }
    let output = match out {
        Some(path) => {
            config.output_path = path.into();
            py.detach(|| core_run(&config))
        }
        None => py.detach(|| compute_experiment(&config)),
    }
    .map_err(to_py)?;
    let header = output.header.iter().map(|h| h.to_string()).collect();
    let body = output.rows.iter().map(|r| r.iter().map(|c| c.to_string()).collect()).collect();
    Ok((output.summary, header, body))
}

#[pymodule]
fn pyrkhs(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyKernel>()?;
    m.add_class::<PyKrls>()?;
    m.add_class::<PyKlms>()?;
    m.add_class::<PyKbrFilter>()?;
    m.add_function(wrap_pyfunction!(hsic, m)?)?;
    m.add_function(wrap_pyfunction!(sparse_hsic, m)?)?;
    m.add_function(wrap_pyfunction!(independence_test, m)?)?;
    m.add_function(wrap_pyfunction!(conditional_test, m)?)?;
    m.add_function(wrap_pyfunction!(mmd_sq, m)?)?;
    m.add_function(wrap_pyfunction!(mean_embedding, m)?)?;
    m.add_function(wrap_pyfunction!(deflection, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    Ok(())
}
