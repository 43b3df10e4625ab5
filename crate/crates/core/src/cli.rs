//! Experiment configuration and the `generate`, `partition`, `train` and
//! `eval` commands.
//!
//! An experiment is one TOML file. Relative data paths are resolved against
//! the file's directory when it is loaded, and every command that produces
//! results echoes the resolved configuration next to them, so a run can be
//! repeated from its output directory alone.
//!
//! ```toml
//! seed = 7
//! snapshots = 5
//! out_dir = "runs/dsbm"
//!
//! [dsbm]
//! n_nodes = 60
//! n_blocks = 2
//! p_in = 0.8
//! p_out = 0.05
//!
//! [train]
//! clients = 4
//! rounds = 30
//!
//! [eval]
//! k_clusters = 2
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::clustering::{consensus_labels, refine_assignments, ClusterAssignment};
use crate::compression::CompressionConfig;
use crate::data::{
    bucket_snapshots, format_edge_list, format_labels, generate_dsbm, graph_events, infer_n_nodes,
    load_edge_list, load_labels, partition_random, DsbmConfig, FederationSplit,
};
use crate::embedding::{
    decode_params, default_features, encode_params, format_embeddings, forward_all, Activation,
    AggregationMode, EmbeddingSequence, ModelParams,
};
use crate::error::{input, Error, Result};
use crate::federation::{run_training, FedConfig, TrainHistory};
use crate::graph::{LaplacianKind, TemporalGraph};
use crate::metrics::{
    accuracy, ari, f1, modularity, nmi, normalized_cut, temporal_modularity, MetricReport,
};
use crate::rng::derive_seed;

pub const EDGES_FILE: &str = "edges.txt";
pub const LABELS_FILE: &str = "labels.txt";
pub const PARTITION_FILE: &str = "partition.txt";
pub const PARAMS_FILE: &str = "params.bin";
pub const HISTORY_FILE: &str = "history.csv";
pub const CONFIG_ECHO_FILE: &str = "config.toml";
pub const METRICS_FILE: &str = "metrics.json";
pub const EMBEDDINGS_FILE: &str = "embeddings.txt";

/// Seed stream for the features used at evaluation time.
pub const EVAL_FEATURE_STREAM: u64 = u64::MAX - 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub seed: u64,
    /// Number of snapshots `T`.
    pub snapshots: usize,
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data: Option<DataSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dsbm: Option<DsbmSection>,
    #[serde(default)]
    pub model: ModelSection,
    #[serde(default)]
    pub train: TrainSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub compression: Option<CompressionSection>,
    #[serde(default)]
    pub eval: EvalSection,
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("out")
}

/// Temporal edge list on disk (`src dst timestamp` per line).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    pub edges: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<PathBuf>,
    /// Defaults to one more than the largest node id in the edge list.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_nodes: Option<usize>,
}

/// Synthetic DSBM source. Give either `pi` or both `p_in` and `p_out`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DsbmSection {
    pub n_nodes: usize,
    pub n_blocks: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p_in: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p_out: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pi: Option<Vec<Vec<f64>>>,
    #[serde(default = "one")]
    pub persistence: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub d_in: usize,
    pub d_out: usize,
    pub window: usize,
    pub mode: AggregationMode,
    pub activation: Activation,
    pub laplacian: LaplacianKind,
}

impl Default for ModelSection {
    fn default() -> Self {
        let f = FedConfig::default();
        Self {
            d_in: f.d_in,
            d_out: f.d_out,
            window: f.window,
            mode: f.mode,
            activation: f.activation,
            laplacian: f.laplacian,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub clients: usize,
    pub rounds: usize,
    pub local_steps: usize,
    pub lr: f64,
    pub alpha: f64,
    pub weighted_aggregation: bool,
}

impl Default for TrainSection {
    fn default() -> Self {
        let f = FedConfig::default();
        Self {
            clients: f.clients,
            rounds: f.rounds,
            local_steps: f.local_steps,
            lr: f.lr,
            alpha: f.alpha,
            weighted_aggregation: f.weighted_aggregation,
        }
    }
}

/// Presence of the section turns compression on unless `enabled = false`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CompressionSection {
    /// Percentage of entries kept.
    pub s: f64,
    pub bits: u8,
    pub enabled: bool,
}

impl Default for CompressionSection {
    fn default() -> Self {
        let c = CompressionConfig::default();
        Self {
            s: c.s,
            bits: c.bits,
            enabled: c.enabled,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MetricSet {
    /// External indices (needs labels) plus structural ones.
    #[default]
    All,
    /// Modularity, normalized cut and temporal modularity only.
    Structural,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    /// Defaults to the DSBM block count, else the number of distinct labels.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k_clusters: Option<usize>,
    pub beta: f64,
    pub refine_passes: usize,
    pub metrics: MetricSet,
}

impl Default for EvalSection {
    fn default() -> Self {
        Self {
            k_clusters: None,
            beta: 0.5,
            refine_passes: 10,
            metrics: MetricSet::All,
        }
    }
}

/// Command-line values that replace config fields.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub clients: Option<usize>,
    pub rounds: Option<usize>,
    pub out_dir: Option<PathBuf>,
    pub lr: Option<f64>,
    pub local_steps: Option<usize>,
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
    pub k_clusters: Option<usize>,
}

impl ExperimentConfig {
    /// Parses TOML text. Relative data paths are resolved against `base`.
    pub fn from_toml(text: &str, base: Option<&Path>) -> Result<Self> {
        let mut cfg: ExperimentConfig =
            toml::from_str(text).map_err(|e| Error::Input(format!("config: {e}")))?;
        if let (Some(base), Some(data)) = (base, cfg.data.as_mut()) {
            data.edges = base.join(&data.edges);
            if let Some(l) = data.labels.as_mut() {
                *l = base.join(&*l);
            }
        }
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path)?;
        let dir = match path.parent() {
            Some(p) if !p.as_os_str().is_empty() => p,
            _ => Path::new("."),
        };
        Self::from_toml(&text, Some(&std::path::absolute(dir)?))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(v) = o.seed {
            self.seed = v;
        }
        if let Some(v) = o.clients {
            self.train.clients = v;
        }
        if let Some(v) = o.rounds {
            self.train.rounds = v;
        }
        if let Some(v) = &o.out_dir {
            self.out_dir = v.clone();
        }
        if let Some(v) = o.lr {
            self.train.lr = v;
        }
        if let Some(v) = o.local_steps {
            self.train.local_steps = v;
        }
        if let Some(v) = o.alpha {
            self.train.alpha = v;
        }
        if let Some(v) = o.beta {
            self.eval.beta = v;
        }
        if let Some(v) = o.k_clusters {
            self.eval.k_clusters = Some(v);
        }
    }

    pub fn validate(&self) -> Result<()> {
        match (&self.data, &self.dsbm) {
            (Some(_), Some(_)) => return input("config: give either [data] or [dsbm], not both"),
            (None, None) => return input("config: one of [data] or [dsbm] is required"),
            _ => {}
        }
        if self.snapshots == 0 {
            return input("config: snapshots must be at least 1");
        }
        if self.dsbm.is_some() {
            self.dsbm_config()?.validate()?;
        }
        self.fed_config().validate()?;
        if !(self.eval.beta.is_finite() && self.eval.beta >= 0.0) {
            return input(format!("config: beta {} must be nonnegative", self.eval.beta));
        }
        if self.eval.k_clusters == Some(0) {
            return input("config: k_clusters must be at least 1");
        }
        Ok(())
    }

    pub fn dsbm_config(&self) -> Result<DsbmConfig> {
        let Some(d) = &self.dsbm else {
            return input("config: no [dsbm] section");
        };
        let mut cfg = match (&d.pi, d.p_in, d.p_out) {
            (Some(pi), None, None) => DsbmConfig {
                n_nodes: d.n_nodes,
                n_blocks: d.n_blocks,
                snapshots: self.snapshots,
                pi: pi.clone(),
                persistence: 1.0,
                seed: self.seed,
            },
            (None, Some(p_in), Some(p_out)) => {
                DsbmConfig::planted(d.n_nodes, d.n_blocks, self.snapshots, p_in, p_out, self.seed)
            }
            _ => return input("config: [dsbm] needs either `pi` or both `p_in` and `p_out`"),
        };
        cfg.persistence = d.persistence;
        Ok(cfg)
    }

    pub fn fed_config(&self) -> FedConfig {
        FedConfig {
            clients: self.train.clients,
            rounds: self.train.rounds,
            local_steps: self.train.local_steps,
            lr: self.train.lr,
            alpha: self.train.alpha,
            compression: self.compression.as_ref().map(|c| CompressionConfig {
                s: c.s,
                bits: c.bits,
                enabled: c.enabled,
            }),
            seed: self.seed,
            mode: self.model.mode,
            activation: self.model.activation,
            window: self.model.window,
            d_in: self.model.d_in,
            d_out: self.model.d_out,
            laplacian: self.model.laplacian,
            weighted_aggregation: self.train.weighted_aggregation,
        }
    }

    /// Builds the temporal graph from whichever source is configured.
    pub fn load_graph(&self) -> Result<TemporalGraph> {
        if self.dsbm.is_some() {
            return Ok(generate_dsbm(&self.dsbm_config()?)?.0);
        }
        let Some(d) = &self.data else {
            return input("config: no data source");
        };
        let events = load_edge_list(&d.edges)?;
        let n = d.n_nodes.unwrap_or_else(|| infer_n_nodes(&events));
        let g = bucket_snapshots(&events, n, self.snapshots)?;
        let labels = d
            .labels
            .as_ref()
            .map(|p| load_labels(p, Some(n)))
            .transpose()?;
        g.with_labels(labels)
    }

    fn cluster_count(&self, g: &TemporalGraph) -> Result<usize> {
        if let Some(k) = self.eval.k_clusters {
            return Ok(k);
        }
        if let Some(d) = &self.dsbm {
            return Ok(d.n_blocks);
        }
        match g.labels() {
            Some(l) => {
                let mut distinct = l.to_vec();
                distinct.sort_unstable();
                distinct.dedup();
                Ok(distinct.len())
            }
            None => input("config: eval.k_clusters is required when no labels are given"),
        }
    }
}

/// Files written by one command. Unless [`Outputs::commit`] is called, every
/// file written so far is removed when the value drops.
struct Outputs {
    dir: PathBuf,
    written: Vec<PathBuf>,
    committed: bool,
}

impl Outputs {
    fn new(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir)?;
        Ok(Self {
            dir: dir.to_path_buf(),
            written: Vec::new(),
            committed: false,
        })
    }

    fn write(&mut self, name: &str, bytes: impl AsRef<[u8]>) -> Result<PathBuf> {
        let path = self.dir.join(name);
        self.written.push(path.clone());
        fs::write(&path, bytes)?;
        Ok(path)
    }

    fn commit(mut self) -> Vec<PathBuf> {
        self.committed = true;
        std::mem::take(&mut self.written)
    }
}

impl Drop for Outputs {
    fn drop(&mut self) {
        if !self.committed {
            for p in &self.written {
                let _ = fs::remove_file(p);
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenerateSummary {
    pub n_nodes: usize,
    pub edges_per_snapshot: Vec<usize>,
    pub files: Vec<PathBuf>,
}

/// Samples the configured DSBM and writes its edge list and labels.
pub fn cmd_generate(cfg: &ExperimentConfig) -> Result<GenerateSummary> {
    let dsbm = cfg.dsbm_config()?;
    dsbm.validate()?;
    let (g, _) = generate_dsbm(&dsbm)?;
    let labels = g.labels().expect("dsbm graphs carry labels");
    let mut out = Outputs::new(&cfg.out_dir)?;
    out.write(EDGES_FILE, format_edge_list(&graph_events(&g)))?;
    out.write(LABELS_FILE, format_labels(labels))?;
    Ok(GenerateSummary {
        n_nodes: g.n_nodes(),
        edges_per_snapshot: g.snapshots().iter().map(|s| s.edge_count()).collect(),
        files: out.commit(),
    })
}

#[derive(Debug, Clone)]
pub struct PartitionSummary {
    pub split: FederationSplit,
    pub files: Vec<PathBuf>,
}

/// Writes the random client split as `node client` lines in node order.
pub fn cmd_partition(cfg: &ExperimentConfig) -> Result<PartitionSummary> {
    cfg.validate()?;
    let g = cfg.load_graph()?;
    let split = partition_random(&g, cfg.train.clients, cfg.seed)?;
    let mut owner = vec![0usize; g.n_nodes()];
    for (c, nodes) in split.client_node_sets.iter().enumerate() {
        for &v in nodes {
            owner[v] = c;
        }
    }
    let text: String = owner
        .iter()
        .enumerate()
        .map(|(v, c)| format!("{v} {c}\n"))
        .collect();
    let mut out = Outputs::new(&cfg.out_dir)?;
    out.write(PARTITION_FILE, text)?;
    Ok(PartitionSummary {
        split,
        files: out.commit(),
    })
}

#[derive(Debug, Clone)]
pub struct TrainSummary {
    pub params: ModelParams,
    pub history: TrainHistory,
    pub files: Vec<PathBuf>,
}

/// Partitions, trains, and writes params, history and the config echo.
pub fn cmd_train(cfg: &ExperimentConfig) -> Result<TrainSummary> {
    cfg.validate()?;
    let g = cfg.load_graph()?;
    let fed = cfg.fed_config();
    let split = partition_random(&g, fed.clients, cfg.seed)?;
    let (params, history) = run_training(&split, &fed)?;
    let mut out = Outputs::new(&cfg.out_dir)?;
    out.write(PARAMS_FILE, encode_params(&params))?;
    out.write(HISTORY_FILE, history.to_records())?;
    out.write(CONFIG_ECHO_FILE, cfg.to_toml())?;
    Ok(TrainSummary {
        params,
        history,
        files: out.commit(),
    })
}

fn check_params_match(p: &ModelParams, cfg: &ExperimentConfig) -> Result<()> {
    let m = &cfg.model;
    let got = (p.d_in(), p.d_out(), p.window(), p.mode, p.activation);
    let want = (m.d_in, m.d_out, m.window, m.mode, m.activation);
    if got != want {
        return Err(Error::Shape(format!(
            "params file has (d_in, d_out, window, mode, activation) = {got:?} but the config expects {want:?}"
        )));
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct EvalSummary {
    pub report: MetricReport,
    pub assignment: ClusterAssignment,
    pub files: Vec<PathBuf>,
}

/// Settings of the evaluation pipeline.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalSettings {
    pub k_clusters: usize,
    pub seed: u64,
    pub beta: f64,
    pub refine_passes: usize,
    /// Compute ACC/NMI/ARI/F1 (the graph must carry labels).
    pub external: bool,
}

/// Embeds with the given params, clusters, refines and scores.
///
/// Features are the default features of the full graph, seeded from
/// `settings.seed` and [`EVAL_FEATURE_STREAM`]. Consensus labels come from
/// k-means on the time-averaged embedding and are refined per snapshot
/// against the clustering objective. External indices compare the refined
/// consensus with the labels. Modularity and normalized cut are taken on the
/// union graph with the refined consensus, temporal modularity on the refined
/// per-snapshot labels.
pub fn evaluate_graph(
    g: &TemporalGraph,
    params: &ModelParams,
    settings: &EvalSettings,
) -> Result<(MetricReport, ClusterAssignment, EmbeddingSequence)> {
    let k = settings.k_clusters;
    let x = default_features(g, params.d_in(), derive_seed(settings.seed, EVAL_FEATURE_STREAM))?;
    let h = forward_all(g, &x, params)?;
    let consensus = consensus_labels(&h, k, settings.seed)?;
    let start = ClusterAssignment::constant(consensus, g.len(), k)?;
    let refined = refine_assignments(g, &start, settings.beta, settings.refine_passes)?;

    let pred = refined.consensus();
    let truth = if settings.external {
        Some(g.labels().ok_or_else(|| {
            Error::Input(
                "external metrics need labels; add a labels file or set eval.metrics = \"structural\""
                    .into(),
            )
        })?)
    } else {
        None
    };
    let external = |f: fn(&[usize], &[usize]) -> Result<f64>| truth.map(|t| f(pred, t)).transpose();
    let union = g.union_snapshot();
    let report = MetricReport {
        acc: external(accuracy)?,
        nmi: external(nmi)?,
        ari: external(ari)?,
        f1: external(f1)?,
        modularity: modularity(&union, pred)?,
        ncut: normalized_cut(&union, pred)?,
        temporal_modularity: temporal_modularity(g, refined.per_snapshot(), settings.beta)?,
    };
    Ok((report, refined, h))
}

/// [`evaluate_graph`] with settings taken from the config, after checking
/// that the params match the configured model.
pub fn evaluate(
    cfg: &ExperimentConfig,
    g: &TemporalGraph,
    params: &ModelParams,
) -> Result<(MetricReport, ClusterAssignment, EmbeddingSequence)> {
    check_params_match(params, cfg)?;
    let settings = EvalSettings {
        k_clusters: cfg.cluster_count(g)?,
        seed: cfg.seed,
        beta: cfg.eval.beta,
        refine_passes: cfg.eval.refine_passes,
        external: cfg.eval.metrics == MetricSet::All,
    };
    evaluate_graph(g, params, &settings)
}

/// Loads params, evaluates, and writes the metrics JSON and embeddings.
pub fn cmd_eval(cfg: &ExperimentConfig, params_path: &Path) -> Result<EvalSummary> {
    cfg.validate()?;
    let params = decode_params(&fs::read(params_path)?)?;
    let g = cfg.load_graph()?;
    let (report, assignment, h) = evaluate(cfg, &g, &params)?;
    let mut out = Outputs::new(&cfg.out_dir)?;
    out.write(METRICS_FILE, report.to_json() + "\n")?;
    out.write(EMBEDDINGS_FILE, format_embeddings(&h))?;
    Ok(EvalSummary {
        report,
        assignment,
        files: out.commit(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dsbm_config(dir: &Path) -> ExperimentConfig {
        let text = format!(
            r#"
seed = 3
snapshots = 3
out_dir = "{}"

[dsbm]
n_nodes = 12
n_blocks = 2
p_in = 1.0
p_out = 0.0

[train]
clients = 2
rounds = 2
"#,
            dir.display()
        );
        ExperimentConfig::from_toml(&text, None).unwrap()
    }

    #[test]
    fn toml_round_trip_keeps_config() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = dsbm_config(dir.path());
        let back = ExperimentConfig::from_toml(&cfg.to_toml(), None).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(cfg.model, ModelSection::default());
    }

    #[test]
    fn exactly_one_source() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = dsbm_config(dir.path());
        cfg.data = Some(DataSection {
            edges: "e.txt".into(),
            labels: None,
            n_nodes: None,
        });
        assert!(cfg.validate().is_err());
        cfg.data = None;
        cfg.dsbm = None;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn unknown_keys_rejected() {
        let err = ExperimentConfig::from_toml("snapshots = 2\nbogus = 1\n", None);
        assert!(err.is_err());
    }

    #[test]
    fn relative_paths_follow_config_dir() {
        let text = "snapshots = 2\n[data]\nedges = \"e.txt\"\nlabels = \"l.txt\"\n";
        let cfg = ExperimentConfig::from_toml(text, Some(Path::new("/data/x"))).unwrap();
        let d = cfg.data.unwrap();
        assert_eq!(d.edges, PathBuf::from("/data/x/e.txt"));
        assert_eq!(d.labels, Some(PathBuf::from("/data/x/l.txt")));
    }

    #[test]
    fn overrides_apply() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = dsbm_config(dir.path());
        cfg.apply(&Overrides {
            seed: Some(11),
            rounds: Some(9),
            lr: Some(0.5),
            k_clusters: Some(3),
            ..Default::default()
        });
        assert_eq!(cfg.seed, 11);
        assert_eq!(cfg.train.rounds, 9);
        assert_eq!(cfg.train.lr, 0.5);
        assert_eq!(cfg.eval.k_clusters, Some(3));
        assert_eq!(cfg.fed_config().seed, 11);
    }

    #[test]
    fn invalid_probability_writes_nothing() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("gen");
        let mut cfg = dsbm_config(&out);
        cfg.dsbm.as_mut().unwrap().p_in = Some(1.5);
        assert!(cmd_generate(&cfg).is_err());
        assert!(!out.join(EDGES_FILE).exists());
        assert!(!out.join(LABELS_FILE).exists());
    }

    #[test]
    fn failed_command_removes_partial_outputs() {
        let dir = tempfile::tempdir().unwrap();
        {
            let mut out = Outputs::new(dir.path()).unwrap();
            out.write("a.txt", "x").unwrap();
            assert!(dir.path().join("a.txt").exists());
        }
        assert!(!dir.path().join("a.txt").exists());
    }

    #[test]
    fn separable_fixture_scores_perfectly() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = dsbm_config(dir.path());
        let g = cfg.load_graph().unwrap();
        let (report, _, _) = evaluate(&cfg, &g, &cfg.fed_config().initial_params()).unwrap();
        assert_eq!(report.acc, Some(1.0));
        assert_eq!(report.ari, Some(1.0));
    }

    #[test]
    fn shape_mismatch_is_descriptive() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = dsbm_config(dir.path());
        let g = cfg.load_graph().unwrap();
        let p = crate::embedding::init_params(3, 2, 1, 0);
        let err = evaluate(&cfg, &g, &p).unwrap_err();
        assert!(matches!(err, Error::Shape(_)));
        assert!(err.to_string().contains("d_in"));
    }
}
