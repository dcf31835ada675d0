//! Python bindings for `fairgraph_core`.
//!
//! Structured results (counts, records, reports) cross the boundary as JSON
//! and are decoded with Python's `json` module, so they arrive as plain
//! dicts and lists.

use std::path::PathBuf;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use serde::Serialize;

use fairgraph_core::augment::{compute_na, AugmentConfig};
use fairgraph_core::experiment::{
    self, emit_report, load_graph, predictions_of, train_seeded, DatasetConfig, ExperimentBundle, ExperimentConfig,
    GraphConfig, Method, MetricNodes, ReportFormat,
};
use fairgraph_core::feature_edit::compute_nc;
use fairgraph_core::gcn::TrainConfig;
use fairgraph_core::graph::{group_counts, CreditGraph};
use fairgraph_core::io::{self, Provenance};
use fairgraph_core::knn::Metric;

fn err(e: fairgraph_core::Error) -> PyErr {
    match e {
        fairgraph_core::Error::Io { .. } => PyRuntimeError::new_err(e.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

fn to_py<'py, T: Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

fn parse_method(name: &str) -> PyResult<Method> {
    name.parse().map_err(err)
}

/// An attributed credit graph.
#[pyclass(name = "Graph", module = "fairgraph", frozen)]
struct PyGraph {
    inner: CreditGraph,
}

#[pymethods]
impl PyGraph {
    /// Load a graph from the node and edge files written by `write`.
    #[staticmethod]
    fn read(nodes: PathBuf, edges: PathBuf) -> PyResult<Self> {
        let (inner, _) = io::read_graph(&nodes, &edges).map_err(err)?;
        Ok(PyGraph { inner })
    }

    #[pyo3(signature = (nodes, edges, seed = 0))]
    fn write(&self, nodes: PathBuf, edges: PathBuf, seed: u64) -> PyResult<()> {
        let prov = Provenance {
            config_hash: String::new(),
            seed,
        };
        io::write_graph(&nodes, &edges, &self.inner, &prov).map_err(err)
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    #[getter]
    fn num_edges(&self) -> usize {
        self.inner.edges().len()
    }

    #[getter]
    fn feature_dim(&self) -> usize {
        self.inner.features().ncols()
    }

    /// Group x label counts as a dict.
    fn counts<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &group_counts(&self.inner))
    }

    /// Relabels needed to balance the groups by reassigning the attribute.
    fn nc(&self) -> PyResult<usize> {
        compute_nc(&group_counts(&self.inner)).map_err(err)
    }

    /// Synthetic minority nodes needed to match the majority.
    fn na(&self) -> PyResult<usize> {
        compute_na(&group_counts(&self.inner)).map_err(err)
    }

    /// Apply a mitigation method; returns the new graph and its record.
    #[pyo3(signature = (method, seed = 0, gmm_k = None, latent = None))]
    fn prepare<'py>(
        &self,
        py: Python<'py>,
        method: &str,
        seed: u64,
        gmm_k: Option<usize>,
        latent: Option<usize>,
    ) -> PyResult<(PyGraph, Bound<'py, PyAny>)> {
        let method = parse_method(method)?;
        let mut config = AugmentConfig::default();
        if let Some(k) = gmm_k {
            config.gmm.components = k;
        }
        if let Some(d) = latent {
            config.autoencoder.latent = d;
        }
        let prepared = py
            .detach(|| experiment::prepare(&self.inner, method, seed, &config))
            .map_err(err)?;
        let record = to_py(py, &prepared.record)?;
        Ok((PyGraph { inner: prepared.graph }, record))
    }

    /// Train the GCN and return per-node predictions.
    #[pyo3(signature = (seed = 0, epochs = None, learning_rate = None, train_fraction = None))]
    fn train(
        &self,
        py: Python<'_>,
        seed: u64,
        epochs: Option<usize>,
        learning_rate: Option<f64>,
        train_fraction: Option<f64>,
    ) -> PyResult<PyPredictions> {
        let mut config = TrainConfig::default();
        config.epochs = epochs.unwrap_or(config.epochs);
        config.learning_rate = learning_rate.unwrap_or(config.learning_rate);
        config.train_fraction = train_fraction.unwrap_or(config.train_fraction);
        let inner = py.detach(|| {
            let trained = train_seeded(&self.inner, &config, seed)?;
            Ok(predictions_of(&self.inner, &trained))
        });
        Ok(PyPredictions { inner: inner.map_err(err)? })
    }

    fn __repr__(&self) -> String {
        let c = group_counts(&self.inner);
        format!(
            "Graph(nodes={}, edges={}, {}={}, {}={})",
            self.inner.len(),
            self.inner.edges().len(),
            self.inner.group_names().majority,
            c.majority,
            self.inner.group_names().minority,
            c.minority
        )
    }
}

/// Per-node predictions from a trained model.
#[pyclass(name = "Predictions", module = "fairgraph", frozen)]
struct PyPredictions {
    inner: io::Predictions,
}

#[pymethods]
impl PyPredictions {
    #[staticmethod]
    fn read(path: PathBuf) -> PyResult<Self> {
        let (inner, _) = io::read_predictions(&path).map_err(err)?;
        Ok(PyPredictions { inner })
    }

    #[pyo3(signature = (path, seed = 0))]
    fn write(&self, path: PathBuf, seed: u64) -> PyResult<()> {
        let prov = Provenance {
            config_hash: String::new(),
            seed,
        };
        io::write_predictions(&path, &self.inner, &prov).map_err(err)
    }

    fn __len__(&self) -> usize {
        self.inner.rows.len()
    }

    /// Rows as a list of dicts.
    fn rows<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.inner.rows)
    }

    /// Fairness report over the test split, or every node.
    #[pyo3(signature = (all_nodes = false))]
    fn evaluate<'py>(&self, py: Python<'py>, all_nodes: bool) -> PyResult<Bound<'py, PyAny>> {
        let on = if all_nodes { MetricNodes::All } else { MetricNodes::Test };
        let report = experiment::evaluate(&self.inner, on).map_err(err)?;
        to_py(py, &report)
    }
}

/// Encode a dataset with its schema and build the kNN graph.
#[pyfunction]
#[pyo3(signature = (data, schema, k = 10, metric = "euclidean"))]
fn ingest(py: Python<'_>, data: PathBuf, schema: PathBuf, k: usize, metric: &str) -> PyResult<PyGraph> {
    let metric = match metric {
        "euclidean" => Metric::Euclidean,
        "cosine" => Metric::Cosine,
        other => return Err(PyValueError::new_err(format!("unknown metric `{other}`"))),
    };
    let dataset = DatasetConfig { path: data, schema };
    let graph = GraphConfig { k, metric };
    let inner = py.detach(|| load_graph(&dataset, &graph)).map_err(err)?;
    Ok(PyGraph { inner })
}

/// Run the method x repeat grid from a config file; returns the bundle.
#[pyfunction]
#[pyo3(signature = (config, out_dir = None, repeats = None, seed = None))]
fn run_experiment<'py>(
    py: Python<'py>,
    config: PathBuf,
    out_dir: Option<PathBuf>,
    repeats: Option<usize>,
    seed: Option<u64>,
) -> PyResult<Bound<'py, PyAny>> {
    let mut config = ExperimentConfig::load(&config).map_err(err)?;
    if let Some(dir) = out_dir {
        config.out_dir = dir;
    }
    if let Some(r) = repeats {
        config.repeats = r;
    }
    if let Some(s) = seed {
        config.base_seed = s;
    }
    config.validate().map_err(err)?;
    let bundle = py.detach(|| experiment::run_experiment(&config)).map_err(err)?;
    to_py(py, &bundle)
}

/// Render `records`, `table` or `plot-data` from a saved bundle.
#[pyfunction]
#[pyo3(signature = (bundle, format = "records"))]
fn report(bundle: PathBuf, format: &str) -> PyResult<String> {
    let bundle = ExperimentBundle::load(&bundle).map_err(err)?;
    let format: ReportFormat = format.parse().map_err(err)?;
    emit_report(&bundle, format).map_err(err)
}

/// Method names in table order.
#[pyfunction]
fn methods() -> Vec<&'static str> {
    Method::ALL.iter().map(|m| m.name()).collect()
}

#[pymodule]
fn fairgraph(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyGraph>()?;
    m.add_class::<PyPredictions>()?;
    m.add_function(wrap_pyfunction!(ingest, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    m.add_function(wrap_pyfunction!(report, m)?)?;
    m.add_function(wrap_pyfunction!(methods, m)?)?;
    Ok(())
}
