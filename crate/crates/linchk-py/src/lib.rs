//! Python bindings for the linchk toolkit: explore object models into
//! labelled transition systems, minimize them, and run the linearizability
//! and lock-freedom checks from Python. Results cross the boundary as
//! plain dictionaries and lists; the only stateful handle is `Lts`.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use linchk::bench;
use linchk::bisim::{self, EquivalenceKind};
use linchk::explorer::{self, ClientConfig, ExploreError};
use linchk::lts;
use linchk::modelir::parse_model;
use linchk::progress::{self, ProgressCheckRequest};
use linchk::refine::{self, Counterexample, RefineError, Verdict};

// ---------------------------------------------------------------------------
// Error and argument conversion
// ---------------------------------------------------------------------------

/// Resource ceilings surface as RuntimeError; everything else is a problem
/// with the input and surfaces as ValueError.
fn explore_err(e: ExploreError) -> PyErr {
    match e {
        ExploreError::StateCeiling { .. } | ExploreError::TransitionCeiling { .. } => {
            PyRuntimeError::new_err(e.to_string())
        }
        other => PyValueError::new_err(other.to_string()),
    }
}

fn refine_err(e: RefineError) -> PyErr {
    match e {
        RefineError::Explore(inner) => explore_err(inner),
        RefineError::OracleBound { .. }
        | RefineError::TooManyOperations { .. }
        | RefineError::DfaCeiling { .. }
        | RefineError::ProductCeiling { .. } => PyRuntimeError::new_err(e.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

fn parse_eq(eq: &str) -> PyResult<EquivalenceKind> {
    match eq {
        "strong" => Ok(EquivalenceKind::Strong),
        "branching" => Ok(EquivalenceKind::Branching),
        "branching-div" => Ok(EquivalenceKind::BranchingDiv),
        "weak" => Ok(EquivalenceKind::Weak),
        other => Err(PyValueError::new_err(format!(
            "unknown equivalence {other:?}; use strong, branching, branching-div, or weak"
        ))),
    }
}

fn client_config(
    threads: u32,
    ops: u32,
    values: Option<usize>,
    max_states: Option<usize>,
) -> ClientConfig {
    let mut config = ClientConfig {
        threads,
        max_ops_per_thread: ops,
        value_limit: values,
        ..ClientConfig::default()
    };
    if let Some(limit) = max_states {
        config.max_states = limit;
    }
    config
}

// ---------------------------------------------------------------------------
// Result conversion
// ---------------------------------------------------------------------------

fn verdict_dict(py: Python<'_>, v: &Verdict) -> PyResult<Py<PyDict>> {
    let out = PyDict::new(py);
    out.set_item("pass", v.pass)?;
    match &v.counterexample {
        None => out.set_item("counterexample", py.None())?,
        Some(Counterexample::History(h)) => {
            out.set_item("counterexample", h.render_lines())?;
        }
        Some(Counterexample::Lasso(l)) => {
            let lasso = PyDict::new(py);
            lasso.set_item("start", l.start)?;
            let step = |s: &bisim::LassoStep| {
                (s.src, s.dst, s.origin.as_ref().map(|o| o.to_string()))
            };
            lasso.set_item("stem", l.stem.iter().map(step).collect::<Vec<_>>())?;
            lasso.set_item("cycle", l.cycle.iter().map(step).collect::<Vec<_>>())?;
            out.set_item("counterexample", lasso)?;
        }
    }
    let stats = PyDict::new(py);
    for s in &v.stats {
        stats.set_item(s.stage, (s.states, s.transitions))?;
    }
    out.set_item("stats", stats)?;
    Ok(out.into())
}

// ---------------------------------------------------------------------------
// The Lts handle
// ---------------------------------------------------------------------------

/// A finite labelled transition system held by the native library.
#[pyclass(frozen, name = "Lts")]
struct PyLts {
    inner: lts::Lts,
}

#[pymethods]
impl PyLts {
    /// Parse the Aldebaran text format.
    #[staticmethod]
    fn from_aut(text: &str) -> PyResult<PyLts> {
        let inner = lts::Lts::load_aut(text).map_err(|e| PyValueError::new_err(e.to_string()))?;
        Ok(PyLts { inner })
    }

    fn state_count(&self) -> usize {
        self.inner.state_count()
    }

    fn transition_count(&self) -> usize {
        self.inner.transition_count()
    }

    /// Render in the Aldebaran text format.
    fn to_aut(&self) -> String {
        self.inner.store_aut()
    }

    /// Quotient by the given equivalence.
    #[pyo3(signature = (eq = "branching"))]
    fn minimize(&self, eq: &str) -> PyResult<PyLts> {
        let kind = parse_eq(eq)?;
        let p = bisim::partition(&self.inner, kind);
        Ok(PyLts { inner: bisim::quotient(&self.inner, &p) })
    }

    /// Visible traces of length at most `depth`, τ-steps elided.
    fn traces_up_to(&self, depth: usize) -> Vec<Vec<String>> {
        self.inner.traces_up_to(depth).into_iter().collect()
    }

    fn __repr__(&self) -> String {
        format!(
            "Lts(states={}, transitions={})",
            self.inner.state_count(),
            self.inner.transition_count()
        )
    }
}

// ---------------------------------------------------------------------------
// Module functions
// ---------------------------------------------------------------------------

/// Explore an object model source into its bounded-client LTS; with
/// `spec=True`, explore the atomic-block specification instead.
#[pyfunction]
#[pyo3(signature = (source, *, threads = 2, ops = 2, values = None, max_states = None, spec = false))]
fn explore(
    source: &str,
    threads: u32,
    ops: u32,
    values: Option<usize>,
    max_states: Option<usize>,
    spec: bool,
) -> PyResult<PyLts> {
    let model = parse_model(source).map_err(|e| PyValueError::new_err(e.to_string()))?;
    let config = client_config(threads, ops, values, max_states);
    let inner = if spec {
        explorer::explore_spec(&model, &config).map_err(explore_err)?
    } else {
        explorer::explore(&model, &config).map_err(explore_err)?
    };
    Ok(PyLts { inner })
}

/// Model diagnostics at the given client bounds; an empty list means clean.
#[pyfunction]
#[pyo3(signature = (source, *, threads = 2, ops = 2, values = None))]
fn validate(source: &str, threads: u32, ops: u32, values: Option<usize>) -> PyResult<Vec<String>> {
    let model = parse_model(source).map_err(|e| PyValueError::new_err(e.to_string()))?;
    let config = client_config(threads, ops, values, None);
    explorer::validate(&model, &config).map_err(explore_err)
}

/// Whether two systems are equivalent under the given notion.
#[pyfunction]
#[pyo3(signature = (a, b, eq = "branching"))]
fn bisimilar(a: &PyLts, b: &PyLts, eq: &str) -> PyResult<bool> {
    Ok(bisim::bisimilar(&a.inner, &b.inner, parse_eq(eq)?).equivalent)
}

/// Full linearizability check of a model source. Returns a dict with
/// `pass`, `counterexample` (history lines or None), and per-stage sizes.
#[pyfunction]
#[pyo3(signature = (source, *, threads = 2, ops = 2, values = None, max_states = None))]
fn check_linearizability(
    py: Python<'_>,
    source: &str,
    threads: u32,
    ops: u32,
    values: Option<usize>,
    max_states: Option<usize>,
) -> PyResult<Py<PyDict>> {
    let model = parse_model(source).map_err(|e| PyValueError::new_err(e.to_string()))?;
    let config = client_config(threads, ops, values, max_states);
    let v = refine::check_linearizability(&model, &config).map_err(refine_err)?;
    verdict_dict(py, &v)
}

/// Lock-freedom check of a concrete model source, against an explicit
/// abstract model or (by default) its own atomic-block specification.
#[pyfunction]
#[pyo3(signature = (source, *, abstract_source = None, threads = 2, ops = 2, values = None, max_states = None))]
fn check_lockfree(
    py: Python<'_>,
    source: &str,
    abstract_source: Option<&str>,
    threads: u32,
    ops: u32,
    values: Option<usize>,
    max_states: Option<usize>,
) -> PyResult<Py<PyDict>> {
    let concrete = parse_model(source).map_err(|e| PyValueError::new_err(e.to_string()))?;
    let abstract_model = abstract_source
        .map(|s| parse_model(s).map_err(|e| PyValueError::new_err(e.to_string())))
        .transpose()?;
    let req = ProgressCheckRequest {
        concrete,
        abstract_model,
        config: client_config(threads, ops, values, max_states),
    };
    let v = progress::check_lockfree(&req).map_err(refine_err)?;
    verdict_dict(py, &v)
}

/// Names and expectations of the bundled benchmark models.
#[pyfunction]
fn list_benchmarks(py: Python<'_>) -> PyResult<Vec<Py<PyDict>>> {
    bench::list_benchmarks()
        .iter()
        .map(|b| {
            let d = PyDict::new(py);
            d.set_item("name", b.name)?;
            d.set_item("expected_linearizable", b.expected_linearizable)?;
            d.set_item("expected_lockfree", b.expected_lockfree)?;
            Ok(d.into())
        })
        .collect()
}

/// Run one bundled benchmark at its default configuration.
#[pyfunction]
fn run_benchmark(py: Python<'_>, name: &str) -> PyResult<Py<PyDict>> {
    let report = bench::run_benchmark(name, None).map_err(|e| match e {
        bench::BenchError::UnknownBenchmark(_) => PyValueError::new_err(e.to_string()),
        bench::BenchError::Check(inner) => refine_err(inner),
    })?;
    let d = PyDict::new(py);
    d.set_item("name", report.name)?;
    d.set_item("linearizable", report.lin.pass)?;
    d.set_item("lockfree", report.lockfree.as_ref().map(|v| v.pass))?;
    d.set_item("states", report.states_before)?;
    d.set_item("quotient_states", report.states_after)?;
    d.set_item("reduction_factor", report.reduction_factor)?;
    d.set_item("wall_ms", report.wall_ms)?;
    d.set_item("as_expected", report.as_expected)?;
    Ok(d.into())
}

#[pymodule]
#[pyo3(name = "_native")]
fn linchk_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyLts>()?;
    m.add_function(wrap_pyfunction!(explore, m)?)?;
    m.add_function(wrap_pyfunction!(validate, m)?)?;
    m.add_function(wrap_pyfunction!(bisimilar, m)?)?;
    m.add_function(wrap_pyfunction!(check_linearizability, m)?)?;
    m.add_function(wrap_pyfunction!(check_lockfree, m)?)?;
    m.add_function(wrap_pyfunction!(list_benchmarks, m)?)?;
    m.add_function(wrap_pyfunction!(run_benchmark, m)?)?;
    Ok(())
}
