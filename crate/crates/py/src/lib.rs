//! Python bindings: graphs, DSBM generation, federated training, evaluation,
//! label metrics and update compression.

use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyBytes, PyDict};

use ftgc::cli::{evaluate_graph, EvalSettings, EVAL_FEATURE_STREAM};
use ftgc::compression::{
    compress_tensor, decode_update, decompress_tensor, encode_update, CompressedUpdate,
    CompressionConfig,
};
use ftgc::data::{bucket_snapshots, generate_dsbm, infer_n_nodes, load_edge_list, load_labels, partition_random, DsbmConfig};
use ftgc::embedding::{decode_params, default_features, encode_params, forward_all, Activation, AggregationMode, ModelParams};
use ftgc::federation::{run_training, FedConfig};
use ftgc::graph::{build_snapshot, LaplacianKind, TemporalGraph};
use ftgc::rng::derive_seed;

fn py_err(e: ftgc::Error) -> PyErr {
    match e {
        ftgc::Error::Io(io) => PyIOError::new_err(io.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

fn parse_mode(s: &str) -> PyResult<AggregationMode> {
    match s {
        "sum" => Ok(AggregationMode::Sum),
        "attention" => Ok(AggregationMode::Attention),
        _ => Err(PyValueError::new_err(format!("unknown mode {s:?} (sum, attention)"))),
    }
}

fn parse_activation(s: &str) -> PyResult<Activation> {
    match s {
        "relu" => Ok(Activation::Relu),
        "tanh" => Ok(Activation::Tanh),
        "identity" => Ok(Activation::Identity),
        _ => Err(PyValueError::new_err(format!(
            "unknown activation {s:?} (relu, tanh, identity)"
        ))),
    }
}

fn mode_name(m: AggregationMode) -> &'static str {
    match m {
        AggregationMode::Sum => "sum",
        AggregationMode::Attention => "attention",
    }
}

fn activation_name(a: Activation) -> &'static str {
    match a {
        Activation::Relu => "relu",
        Activation::Tanh => "tanh",
        Activation::Identity => "identity",
    }
}

/// A node set with a sequence of weighted undirected snapshots.
#[pyclass(name = "TemporalGraph", frozen)]
struct PyTemporalGraph {
    inner: TemporalGraph,
}

#[pymethods]
impl PyTemporalGraph {
    /// `snapshots` is a list of `(src, dst, weight)` edge lists, one per time step.
    #[new]
    #[pyo3(signature = (n_nodes, snapshots, labels=None))]
    fn new(
        n_nodes: usize,
        snapshots: Vec<Vec<(usize, usize, f64)>>,
        labels: Option<Vec<usize>>,
    ) -> PyResult<Self> {
        let snaps = snapshots
            .iter()
            .map(|e| build_snapshot(e, n_nodes))
            .collect::<ftgc::Result<Vec<_>>>()
            .map_err(py_err)?;
        let inner = TemporalGraph::new(n_nodes, snaps, labels).map_err(py_err)?;
        Ok(Self { inner })
    }

    /// Reads a `src dst timestamp` edge list and buckets it into equal-width
    /// time bins.
    #[staticmethod]
    #[pyo3(signature = (path, snapshots, n_nodes=None, labels_path=None))]
    fn from_edge_list(
        path: &str,
        snapshots: usize,
        n_nodes: Option<usize>,
        labels_path: Option<&str>,
    ) -> PyResult<Self> {
        let events = load_edge_list(path).map_err(py_err)?;
        let n = n_nodes.unwrap_or_else(|| infer_n_nodes(&events));
        let g = bucket_snapshots(&events, n, snapshots).map_err(py_err)?;
        let labels = labels_path
            .map(|p| load_labels(p, Some(n)))
            .transpose()
            .map_err(py_err)?;
        Ok(Self {
            inner: g.with_labels(labels).map_err(py_err)?,
        })
    }

    #[getter]
    fn n_nodes(&self) -> usize {
        self.inner.n_nodes()
    }

    #[getter]
    fn n_snapshots(&self) -> usize {
        self.inner.len()
    }

    #[getter]
    fn labels(&self) -> Option<Vec<usize>> {
        self.inner.labels().map(<[usize]>::to_vec)
    }

    fn edge_counts(&self) -> Vec<usize> {
        self.inner.snapshots().iter().map(|s| s.edge_count()).collect()
    }

    /// Edges of snapshot `t` as `(i, j, weight)` with `i < j`.
    fn edges(&self, t: usize) -> PyResult<Vec<(usize, usize, f64)>> {
        if t >= self.inner.len() {
            return Err(PyValueError::new_err(format!("snapshot {t} out of range")));
        }
        Ok(self.inner.snapshot(t).edges().collect())
    }

    fn __repr__(&self) -> String {
        format!(
            "TemporalGraph(n_nodes={}, snapshots={}, labeled={})",
            self.inner.n_nodes(),
            self.inner.len(),
            self.inner.labels().is_some()
        )
    }
}

/// Encoder weights.
#[pyclass(name = "ModelParams", frozen)]
struct PyModelParams {
    inner: ModelParams,
}

#[pymethods]
impl PyModelParams {
    #[staticmethod]
    #[pyo3(signature = (d_in, d_out, window=1, seed=0))]
    fn init(d_in: usize, d_out: usize, window: usize, seed: u64) -> Self {
        Self {
            inner: ftgc::embedding::init_params(d_in, d_out, window, seed),
        }
    }

    #[staticmethod]
    fn from_bytes(data: &[u8]) -> PyResult<Self> {
        Ok(Self {
            inner: decode_params(data).map_err(py_err)?,
        })
    }

    fn to_bytes<'py>(&self, py: Python<'py>) -> Bound<'py, PyBytes> {
        PyBytes::new(py, &encode_params(&self.inner))
    }

    #[getter]
    fn d_in(&self) -> usize {
        self.inner.d_in()
    }

    #[getter]
    fn d_out(&self) -> usize {
        self.inner.d_out()
    }

    #[getter]
    fn window(&self) -> usize {
        self.inner.window()
    }

    #[getter]
    fn mode(&self) -> &'static str {
        mode_name(self.inner.mode)
    }

    #[getter]
    fn activation(&self) -> &'static str {
        activation_name(self.inner.activation)
    }

    /// Flattened tensors: `w1`, past weights, future weights, attention logits.
    fn tensors(&self) -> Vec<Vec<f64>> {
        self.inner.tensors().into_iter().map(<[f64]>::to_vec).collect()
    }

    fn __eq__(&self, other: &Self) -> bool {
        self.inner == other.inner
    }

    fn __repr__(&self) -> String {
        format!(
            "ModelParams(d_in={}, d_out={}, window={}, mode={:?}, activation={:?})",
            self.inner.d_in(),
            self.inner.d_out(),
            self.inner.window(),
            mode_name(self.inner.mode),
            activation_name(self.inner.activation)
        )
    }
}

/// Federated training settings. `s=None` disables update compression.
#[pyclass(name = "FedConfig", get_all, set_all, skip_from_py_object)]
#[derive(Clone)]
struct PyFedConfig {
    clients: usize,
    rounds: usize,
    local_steps: usize,
    lr: f64,
    alpha: f64,
    seed: u64,
    mode: String,
    activation: String,
    window: usize,
    d_in: usize,
    d_out: usize,
    s: Option<f64>,
    bits: u8,
    weighted_aggregation: bool,
}

#[pymethods]
impl PyFedConfig {
    #[new]
    #[pyo3(signature = (
        clients=None, rounds=None, local_steps=None, lr=None, alpha=None, seed=0,
        mode=None, activation=None, window=None, d_in=None, d_out=None,
        s=None, bits=8, weighted_aggregation=false
    ))]
    #[allow(clippy::too_many_arguments)]
    fn new(
        clients: Option<usize>,
        rounds: Option<usize>,
        local_steps: Option<usize>,
        lr: Option<f64>,
        alpha: Option<f64>,
        seed: u64,
        mode: Option<String>,
        activation: Option<String>,
        window: Option<usize>,
        d_in: Option<usize>,
        d_out: Option<usize>,
        s: Option<f64>,
        bits: u8,
        weighted_aggregation: bool,
    ) -> Self {
        let d = FedConfig::default();
        Self {
            clients: clients.unwrap_or(d.clients),
            rounds: rounds.unwrap_or(d.rounds),
            local_steps: local_steps.unwrap_or(d.local_steps),
            lr: lr.unwrap_or(d.lr),
            alpha: alpha.unwrap_or(d.alpha),
            seed,
            mode: mode.unwrap_or_else(|| mode_name(d.mode).into()),
            activation: activation.unwrap_or_else(|| activation_name(d.activation).into()),
            window: window.unwrap_or(d.window),
            d_in: d_in.unwrap_or(d.d_in),
            d_out: d_out.unwrap_or(d.d_out),
            s,
            bits,
            weighted_aggregation,
        }
    }

    fn __repr__(&self) -> String {
        format!(
            "FedConfig(clients={}, rounds={}, local_steps={}, lr={}, alpha={}, seed={}, mode={:?}, activation={:?})",
            self.clients, self.rounds, self.local_steps, self.lr, self.alpha, self.seed, self.mode, self.activation
        )
    }
}

impl PyFedConfig {
    fn to_core(&self) -> PyResult<FedConfig> {
        Ok(FedConfig {
            clients: self.clients,
            rounds: self.rounds,
            local_steps: self.local_steps,
            lr: self.lr,
            alpha: self.alpha,
            compression: self.s.map(|s| CompressionConfig {
                s,
                bits: self.bits,
                enabled: true,
            }),
            seed: self.seed,
            mode: parse_mode(&self.mode)?,
            activation: parse_activation(&self.activation)?,
            window: self.window,
            d_in: self.d_in,
            d_out: self.d_out,
            laplacian: LaplacianKind::Combinatorial,
            weighted_aggregation: self.weighted_aggregation,
        })
    }
}

/// Samples a planted-partition DSBM graph (labels are the majority block).
#[pyfunction]
#[pyo3(signature = (n_nodes, n_blocks, snapshots, p_in, p_out, seed=0, persistence=1.0))]
fn generate_dsbm_graph(
    n_nodes: usize,
    n_blocks: usize,
    snapshots: usize,
    p_in: f64,
    p_out: f64,
    seed: u64,
    persistence: f64,
) -> PyResult<PyTemporalGraph> {
    let mut cfg = DsbmConfig::planted(n_nodes, n_blocks, snapshots, p_in, p_out, seed);
    cfg.persistence = persistence;
    let (g, _) = generate_dsbm(&cfg).map_err(py_err)?;
    Ok(PyTemporalGraph { inner: g })
}

/// Random node split into clients, then federated training. Returns the final
/// params and one dict per round.
#[pyfunction]
fn train<'py>(
    py: Python<'py>,
    graph: &PyTemporalGraph,
    config: &PyFedConfig,
) -> PyResult<(PyModelParams, Vec<Bound<'py, PyDict>>)> {
    let cfg = config.to_core()?;
    let g = &graph.inner;
    let (params, history) = py
        .detach(|| {
            let split = partition_random(g, cfg.clients, cfg.seed)?;
            run_training(&split, &cfg)
        })
        .map_err(py_err)?;
    let rounds = history
        .rounds
        .iter()
        .map(|r| {
            let d = PyDict::new(py);
            d.set_item("round", r.round)?;
            d.set_item("global_loss", r.global_loss)?;
            d.set_item("client_losses", r.client_losses.clone())?;
            d.set_item("bytes_raw", r.bytes_raw)?;
            d.set_item("bytes_compressed", r.bytes_compressed)?;
            Ok(d)
        })
        .collect::<PyResult<Vec<_>>>()?;
    Ok((PyModelParams { inner: params }, rounds))
}

/// Per-snapshot embeddings (`T` lists of `n` rows) using the evaluation features.
#[pyfunction]
#[pyo3(signature = (graph, params, seed=0))]
fn embed(graph: &PyTemporalGraph, params: &PyModelParams, seed: u64) -> PyResult<Vec<Vec<Vec<f64>>>> {
    let p = &params.inner;
    let x = default_features(&graph.inner, p.d_in(), derive_seed(seed, EVAL_FEATURE_STREAM))
        .map_err(py_err)?;
    let h = forward_all(&graph.inner, &x, p).map_err(py_err)?;
    Ok(h.h
        .iter()
        .map(|m| m.rows().into_iter().map(|r| r.to_vec()).collect())
        .collect())
}

/// Embed, cluster, refine and score. The dict holds the metrics plus
/// `consensus` (refined labels) and `per_snapshot` labels.
#[pyfunction]
#[pyo3(signature = (graph, params, k_clusters, seed=0, beta=0.5, refine_passes=10, external=None))]
#[allow(clippy::too_many_arguments)]
fn evaluate<'py>(
    py: Python<'py>,
    graph: &PyTemporalGraph,
    params: &PyModelParams,
    k_clusters: usize,
    seed: u64,
    beta: f64,
    refine_passes: usize,
    external: Option<bool>,
) -> PyResult<Bound<'py, PyDict>> {
    let settings = EvalSettings {
        k_clusters,
        seed,
        beta,
        refine_passes,
        external: external.unwrap_or(graph.inner.labels().is_some()),
    };
    let (report, assignment, _) =
        evaluate_graph(&graph.inner, &params.inner, &settings).map_err(py_err)?;
    let d = PyDict::new(py);
    for (key, v) in [
        ("acc", report.acc),
        ("nmi", report.nmi),
        ("ari", report.ari),
        ("f1", report.f1),
    ] {
        if let Some(v) = v {
            d.set_item(key, v)?;
        }
    }
    d.set_item("modularity", report.modularity)?;
    d.set_item("ncut", report.ncut)?;
    d.set_item("temporal_modularity", report.temporal_modularity)?;
    d.set_item("consensus", assignment.consensus().to_vec())?;
    d.set_item("per_snapshot", assignment.per_snapshot().to_vec())?;
    Ok(d)
}

#[pyfunction]
fn accuracy(pred: Vec<usize>, truth: Vec<usize>) -> PyResult<f64> {
    ftgc::metrics::accuracy(&pred, &truth).map_err(py_err)
}

#[pyfunction]
fn nmi(pred: Vec<usize>, truth: Vec<usize>) -> PyResult<f64> {
    ftgc::metrics::nmi(&pred, &truth).map_err(py_err)
}

#[pyfunction]
fn ari(pred: Vec<usize>, truth: Vec<usize>) -> PyResult<f64> {
    ftgc::metrics::ari(&pred, &truth).map_err(py_err)
}

#[pyfunction]
fn f1(pred: Vec<usize>, truth: Vec<usize>) -> PyResult<f64> {
    ftgc::metrics::f1(&pred, &truth).map_err(py_err)
}

/// Sparsifies and quantizes one flat tensor into the update wire format.
#[pyfunction]
#[pyo3(signature = (values, s=10.0, bits=8))]
fn compress<'py>(py: Python<'py>, values: Vec<f64>, s: f64, bits: u8) -> PyResult<Bound<'py, PyBytes>> {
    let cfg = CompressionConfig { s, bits, enabled: true };
    let t = compress_tensor(0, &[values.len()], &values, &cfg).map_err(py_err)?;
    let update = CompressedUpdate { bits, tensors: vec![t] };
    Ok(PyBytes::new(py, &encode_update(&update)))
}

/// Decodes an update and returns each tensor densely (dropped entries are 0).
#[pyfunction]
fn decompress(data: &[u8]) -> PyResult<Vec<Vec<f64>>> {
    let u = decode_update(data).map_err(py_err)?;
    Ok(u.tensors.iter().map(|t| decompress_tensor(t, u.bits)).collect())
}

#[pymodule]
fn pyftgc(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyTemporalGraph>()?;
    m.add_class::<PyModelParams>()?;
    m.add_class::<PyFedConfig>()?;
    m.add_function(wrap_pyfunction!(generate_dsbm_graph, m)?)?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    m.add_function(wrap_pyfunction!(embed, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add_function(wrap_pyfunction!(accuracy, m)?)?;
    m.add_function(wrap_pyfunction!(nmi, m)?)?;
    m.add_function(wrap_pyfunction!(ari, m)?)?;
    m.add_function(wrap_pyfunction!(f1, m)?)?;
    m.add_function(wrap_pyfunction!(compress, m)?)?;
    m.add_function(wrap_pyfunction!(decompress, m)?)?;
    Ok(())
}
