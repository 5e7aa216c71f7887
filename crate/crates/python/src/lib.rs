//! Python bindings for the `pointsaga` crate.

use std::sync::Arc;

use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use pointsaga::baselines::{PegasosState, SagaState};
use pointsaga::data::{load_libsvm, parse_libsvm_str, subsample};
use pointsaga::diagnostics::{run_suite, solve_reference, SuiteSize};
use pointsaga::engine::{drive, IncrementalSolver, PointSaga, StateConfig, Trace};
use pointsaga::harness::{run_experiments as run_plan, write_outputs, ExperimentPlan};
use pointsaga::rng::IndexSampler;
use pointsaga::{
    Backend, Dataset, Error, InitMode, LabelMap, LossKind, ProblemSpec, SolverState, SparseVec,
    StepSizePlan, TableStorage,
};

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Io(e) => PyIOError::new_err(e.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

fn parse_init(s: &str) -> PyResult<InitMode> {
    match s {
        "zero" => Ok(InitMode::Zero),
        "subgradient" => Ok(InitMode::Subgradient),
        _ => Err(PyValueError::new_err(format!(
            "init must be 'zero' or 'subgradient', got '{s}'"
        ))),
    }
}

fn parse_storage(s: &str) -> PyResult<TableStorage> {
    match s {
        "dense" => Ok(TableStorage::Dense),
        "scalar" => Ok(TableStorage::Scalar),
        _ => Err(PyValueError::new_err(format!(
            "storage must be 'dense' or 'scalar', got '{s}'"
        ))),
    }
}

fn parse_backend(s: &str) -> PyResult<Backend> {
    match s {
        "dense" => Ok(Backend::Dense),
        "lazy" => Ok(Backend::Lazy),
        _ => Err(PyValueError::new_err(format!(
            "backend must be 'dense' or 'lazy', got '{s}'"
        ))),
    }
}

/// Rows, labels and a feature count.
#[pyclass(name = "Dataset", module = "pointsaga", frozen)]
struct PyDataset {
    inner: Arc<Dataset>,
}

#[pymethods]
impl PyDataset {
    /// Reads a LIBSVM file (gzip when the name ends in `.gz`).
    #[staticmethod]
    #[pyo3(signature = (path, label_map = "pm1"))]
    fn load(path: &str, label_map: &str) -> PyResult<Self> {
        let labels = LabelMap::parse(label_map).map_err(to_py)?;
        let ds = load_libsvm(path, &labels).map_err(to_py)?;
        Ok(Self {
            inner: Arc::new(ds),
        })
    }

    #[staticmethod]
    #[pyo3(signature = (text, label_map = "pm1"))]
    fn parse(text: &str, label_map: &str) -> PyResult<Self> {
        let labels = LabelMap::parse(label_map).map_err(to_py)?;
        let ds = parse_libsvm_str(text, &labels).map_err(to_py)?;
        Ok(Self {
            inner: Arc::new(ds),
        })
    }

    /// From dense rows; zeros are dropped.
    #[staticmethod]
    fn from_rows(rows: Vec<Vec<f64>>, labels: Vec<f64>) -> PyResult<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != dim) {
            return Err(PyValueError::new_err("rows must all have the same length"));
        }
        let rows = rows
            .iter()
            .map(|r| SparseVec::from_dense(r))
            .collect::<Result<Vec<_>, _>>()
            .map_err(to_py)?;
        let ds = Dataset::new(rows, labels, dim).map_err(to_py)?;
        Ok(Self {
            inner: Arc::new(ds),
        })
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.n()
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    #[getter]
    fn nnz(&self) -> usize {
        self.inner.nnz()
    }

    #[getter]
    fn labels(&self) -> Vec<f64> {
        self.inner.labels().to_vec()
    }

    fn row(&self, i: usize) -> PyResult<Vec<f64>> {
        if i >= self.inner.n() {
            return Err(PyValueError::new_err(format!("row {i} out of range")));
        }
        Ok(self.inner.row(i).to_dense(self.inner.dim()))
    }

    fn subsample(&self, fraction: f64, seed: u64) -> PyResult<Self> {
        let ds = subsample(&self.inner, fraction, seed).map_err(to_py)?;
        Ok(Self {
            inner: Arc::new(ds),
        })
    }

    fn to_libsvm(&self) -> String {
        self.inner.to_libsvm()
    }

    fn __len__(&self) -> usize {
        self.inner.n()
    }

    fn __repr__(&self) -> String {
        format!(
            "Dataset(n={}, dim={}, nnz={})",
            self.inner.n(),
            self.inner.dim(),
            self.inner.nnz()
        )
    }
}

/// A dataset with a loss and L2 constant μ.
#[pyclass(name = "Problem", module = "pointsaga", frozen)]
struct PyProblem {
    inner: ProblemSpec,
}

#[pymethods]
impl PyProblem {
    #[new]
    fn new(dataset: &PyDataset, loss: &str, mu: f64) -> PyResult<Self> {
        let loss: LossKind = loss.parse().map_err(to_py)?;
        let inner = ProblemSpec::new(dataset.inner.clone(), loss, mu).map_err(to_py)?;
        Ok(Self { inner })
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.n()
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    #[getter]
    fn mu(&self) -> f64 {
        self.inner.mu()
    }

    #[getter]
    fn loss(&self) -> String {
        self.inner.loss().to_string()
    }

    /// Smoothness constant of each term, or None for hinge.
    #[getter]
    fn lipschitz(&self) -> Option<f64> {
        self.inner.lipschitz()
    }

    fn objective(&self, x: Vec<f64>) -> PyResult<f64> {
        if x.len() != self.inner.dim() {
            return Err(PyValueError::new_err(format!(
                "x has length {}, expected {}",
                x.len(),
                self.inner.dim()
            )));
        }
        Ok(self.inner.objective(&x))
    }

    fn theoretical_step(&self) -> PyResult<f64> {
        StepSizePlan::theoretical(&self.inner)
            .map(|p| p.gamma)
            .map_err(to_py)
    }

    /// High-accuracy minimizer: dict with `x`, `fstar`, `residual`.
    #[pyo3(signature = (tol = 1e-12))]
    fn reference<'py>(&self, py: Python<'py>, tol: f64) -> PyResult<Bound<'py, PyDict>> {
        let spec = self.inner.clone();
        let r = py
            .detach(move || solve_reference(&spec, tol))
            .map_err(to_py)?;
        let d = PyDict::new(py);
        d.set_item("x", r.x)?;
        d.set_item("fstar", r.fstar)?;
        d.set_item("residual", r.residual)?;
        Ok(d)
    }

    fn __repr__(&self) -> String {
        format!(
            "Problem(n={}, dim={}, loss={}, mu={})",
            self.inner.n(),
            self.inner.dim(),
            self.inner.loss(),
            self.inner.mu()
        )
    }
}

/// A Point-SAGA run that can be stepped from Python.
#[pyclass(name = "PointSaga", module = "pointsaga")]
struct PyPointSaga {
    spec: ProblemSpec,
    solver: PointSaga,
    sampler: IndexSampler,
}

#[pymethods]
impl PyPointSaga {
    #[new]
    #[pyo3(signature = (problem, gamma = None, seed = 0, init = "zero", storage = "dense", backend = "dense", average = false, x0 = None))]
    #[allow(clippy::too_many_arguments)]
    fn new(
        problem: &PyProblem,
        gamma: Option<f64>,
        seed: u64,
        init: &str,
        storage: &str,
        backend: &str,
        average: bool,
        x0: Option<Vec<f64>>,
    ) -> PyResult<Self> {
        let spec = problem.inner.clone();
        let gamma = match gamma {
            Some(g) => StepSizePlan::user(g),
            None => StepSizePlan::theoretical(&spec),
        }
        .map_err(to_py)?
        .gamma;
        let config = StateConfig {
            init: parse_init(init)?,
            storage: parse_storage(storage)?,
            backend: parse_backend(backend)?,
            track_average: average,
        };
        let x0 = x0.unwrap_or_else(|| vec![0.0; spec.dim()]);
        let state = SolverState::new(&spec, &x0, config).map_err(to_py)?;
        Ok(Self {
            spec,
            solver: PointSaga { state, gamma },
            sampler: IndexSampler::new(seed),
        })
    }

    #[getter]
    fn gamma(&self) -> f64 {
        self.solver.gamma
    }

    /// One step on example `j`.
    fn step(&mut self, j: usize) -> PyResult<()> {
        IncrementalSolver::step(&mut self.solver, &self.spec, j).map_err(to_py)
    }

    /// Runs whole epochs with uniformly sampled indices; returns the
    /// objective after each.
    fn run_epochs(&mut self, py: Python<'_>, epochs: usize) -> PyResult<Vec<f64>> {
        let Self {
            spec,
            solver,
            sampler,
        } = self;
        py.detach(|| {
            let n = spec.n();
            let mut out = Vec::with_capacity(epochs);
            for _ in 0..epochs {
                for _ in 0..n {
                    IncrementalSolver::step(solver, spec, sampler.next_index(n))?;
                }
                out.push(spec.objective(solver.iterate(spec)));
            }
            Ok(out)
        })
        .map_err(to_py)
    }

    #[getter]
    fn x(&mut self) -> Vec<f64> {
        self.solver.iterate(&self.spec).to_vec()
    }

    #[getter]
    fn averaged(&self) -> Option<Vec<f64>> {
        self.solver.averaged_iterate().map(<[f64]>::to_vec)
    }

    #[getter]
    fn steps(&self) -> u64 {
        self.solver.state.steps()
    }

    #[getter]
    fn table_mean(&self) -> Vec<f64> {
        self.solver.state.table().mean().to_vec()
    }
}

fn trace_dict<'py>(py: Python<'py>, trace: Trace) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item(
        "objectives",
        trace
            .records
            .iter()
            .map(|r| r.objective)
            .collect::<Vec<_>>(),
    )?;
    let averaged: Option<Vec<f64>> = trace.records.iter().map(|r| r.averaged_objective).collect();
    d.set_item("averaged_objectives", averaged)?;
    d.set_item("x", trace.final_iterate)?;
    d.set_item("averaged_x", trace.averaged_iterate)?;
    d.set_item("diverged", trace.diverged)?;
    Ok(d)
}

/// Scalar prox of a loss: returns `(c, nu, iterations)`.
#[pyfunction]
fn prox(loss: &str, a: f64, y: f64, gamma_p: f64) -> PyResult<(f64, f64, u32)> {
    let loss: LossKind = loss.parse().map_err(to_py)?;
    let r = loss.prox(a, y, gamma_p).map_err(to_py)?;
    Ok((r.c, r.nu, r.iterations))
}

/// Theoretical Point-SAGA step size.
#[pyfunction]
fn step_size(n: usize, lipschitz: f64, mu: f64) -> PyResult<f64> {
    pointsaga::step_size_default(n, lipschitz, mu).map_err(to_py)
}

/// Point-SAGA from zero for `epochs` epochs.
#[pyfunction]
#[pyo3(signature = (problem, epochs, gamma = None, seed = 0, init = "zero", average = false))]
fn run<'py>(
    py: Python<'py>,
    problem: &PyProblem,
    epochs: usize,
    gamma: Option<f64>,
    seed: u64,
    init: &str,
    average: bool,
) -> PyResult<Bound<'py, PyDict>> {
    let spec = problem.inner.clone();
    let plan = match gamma {
        Some(g) => StepSizePlan::user(g),
        None => StepSizePlan::theoretical(&spec),
    }
    .map_err(to_py)?;
    let config = pointsaga::engine::RunConfig::new(epochs, plan)
        .seed(seed)
        .init(parse_init(init)?)
        .track_average(average);
    let trace = py
        .detach(move || pointsaga::engine::run(&spec, &config, |_, _| {}))
        .map_err(to_py)?;
    let d = trace_dict(py, trace)?;
    d.set_item("gamma", plan.gamma)?;
    Ok(d)
}

/// SAGA from zero with a dense gradient table.
#[pyfunction]
#[pyo3(signature = (problem, gamma, epochs, seed = 0))]
fn saga<'py>(
    py: Python<'py>,
    problem: &PyProblem,
    gamma: f64,
    epochs: usize,
    seed: u64,
) -> PyResult<Bound<'py, PyDict>> {
    let spec = problem.inner.clone();
    let trace = py
        .detach(move || {
            let mut s = SagaState::new(&spec, &vec![0.0; spec.dim()], gamma, TableStorage::Dense)?;
            drive(&spec, &mut s, epochs, seed, |_, _| {})
        })
        .map_err(to_py)?;
    trace_dict(py, trace)
}

/// Projection-free Pegasos from zero.
#[pyfunction]
#[pyo3(signature = (problem, epochs, seed = 0, t0 = 1.0))]
fn pegasos<'py>(
    py: Python<'py>,
    problem: &PyProblem,
    epochs: usize,
    seed: u64,
    t0: f64,
) -> PyResult<Bound<'py, PyDict>> {
    let spec = problem.inner.clone();
    let trace = py
        .detach(move || {
            let mut s = PegasosState::new(&spec, &vec![0.0; spec.dim()], t0)?;
            drive(&spec, &mut s, epochs, seed, |_, _| {})
        })
        .map_err(to_py)?;
    trace_dict(py, trace)
}

/// Diagnostics suite; a list of `{name, passed, metrics}` dicts.
#[pyfunction]
#[pyo3(signature = (quick = true, seed = 1))]
fn check<'py>(py: Python<'py>, quick: bool, seed: u64) -> PyResult<Vec<Bound<'py, PyDict>>> {
    let size = if quick {
        SuiteSize::quick()
    } else {
        SuiteSize::full()
    };
    let reports = py.detach(move || run_suite(size, seed)).map_err(to_py)?;
    reports
        .into_iter()
        .map(|r| {
            let d = PyDict::new(py);
            d.set_item("name", r.name)?;
            d.set_item("passed", r.passed)?;
            let metrics = PyDict::new(py);
            for (k, v) in r.metrics {
                metrics.set_item(k, v)?;
            }
            d.set_item("metrics", metrics)?;
            Ok(d)
        })
        .collect()
}

/// Runs a JSON experiment plan. Returns the CSV rows as dicts and the
/// metadata as a JSON string; with `write=True` also writes both files.
#[pyfunction]
#[pyo3(signature = (plan_json, write = false))]
fn run_experiments<'py>(
    py: Python<'py>,
    plan_json: &str,
    write: bool,
) -> PyResult<(Vec<Bound<'py, PyDict>>, String)> {
    let plan = ExperimentPlan::from_json(plan_json).map_err(to_py)?;
    let output = py
        .detach(|| {
            let output = run_plan(&plan)?;
            if write {
                write_outputs(&output, &plan.out)?;
            }
            Ok(output)
        })
        .map_err(to_py)?;
    let meta = serde_json::to_string(&output.metadata)
        .map_err(|e| PyValueError::new_err(e.to_string()))?;
    let rows = output
        .records
        .iter()
        .map(|r| {
            let d = PyDict::new(py);
            d.set_item("method", r.method.name())?;
            d.set_item("dataset", &r.dataset)?;
            d.set_item("fraction", r.fraction)?;
            d.set_item("seed", r.seed)?;
            d.set_item("gamma", r.gamma)?;
            d.set_item("epoch", r.epoch)?;
            d.set_item("wall_seconds", r.wall_seconds)?;
            d.set_item("objective", r.objective)?;
            d.set_item("suboptimality", r.suboptimality)?;
            d.set_item(
                "iterate_kind",
                if r.iterate_kind == pointsaga::harness::IterateKind::Last {
                    "last"
                } else {
                    "averaged"
                },
            )?;
            Ok(d)
        })
        .collect::<PyResult<Vec<_>>>()?;
    Ok((rows, meta))
}

#[pymodule(name = "pointsaga")]
fn pointsaga_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyDataset>()?;
    m.add_class::<PyProblem>()?;
    m.add_class::<PyPointSaga>()?;
    m.add_function(wrap_pyfunction!(prox, m)?)?;
    m.add_function(wrap_pyfunction!(step_size, m)?)?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    m.add_function(wrap_pyfunction!(saga, m)?)?;
    m.add_function(wrap_pyfunction!(pegasos, m)?)?;
    m.add_function(wrap_pyfunction!(check, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiments, m)?)?;
    m.add("RNG_ALGORITHM", pointsaga::rng::RNG_ALGORITHM)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
