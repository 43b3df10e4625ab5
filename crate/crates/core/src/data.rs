//! Dataset ingestion, snapshot bucketing, synthetic DSBM generation and
//! random client partitioning.
//!
//! Edge lists are UTF-8 text with one `src dst timestamp` event per line,
//! whitespace separated; `#` starts a comment and blank lines are ignored.
//! Label files hold one `node label` pair per line.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng as _;

use crate::error::{input, Error, Result};
use crate::graph::{build_snapshot, restrict_subgraph, TemporalGraph};
use crate::rng::seeded;

/// One timestamped interaction between two nodes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EdgeEvent {
    pub src: usize,
    pub dst: usize,
    pub timestamp: f64,
}

fn strip_comment(line: &str) -> &str {
    match line.find('#') {
        Some(pos) => &line[..pos],
        None => line,
    }
}

fn parse_node_id(tok: &str, line: usize) -> Result<usize> {
    match tok.parse::<i64>() {
        Ok(v) if v < 0 => input(format!("line {line}: negative node id {v}")),
        Ok(v) => Ok(v as usize),
        Err(_) => Err(Error::Parse {
            line,
            msg: format!("expected an integer node id, found {tok:?}"),
        }),
    }
}

/// Parses edge-list text. Events keep file order.
pub fn parse_edge_list(text: &str) -> Result<Vec<EdgeEvent>> {
    let mut events = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = strip_comment(raw).trim();
        if line.is_empty() {
            continue;
        }
        let toks: Vec<&str> = line.split_whitespace().collect();
        if toks.len() != 3 {
            return Err(Error::Parse {
                line: line_no,
                msg: format!("expected `src dst timestamp`, found {} fields", toks.len()),
            });
        }
        let src = parse_node_id(toks[0], line_no)?;
        let dst = parse_node_id(toks[1], line_no)?;
        let timestamp: f64 = toks[2].parse().map_err(|_| Error::Parse {
            line: line_no,
            msg: format!("expected a numeric timestamp, found {:?}", toks[2]),
        })?;
        if !timestamp.is_finite() {
            return Err(Error::Parse {
                line: line_no,
                msg: "timestamp is not finite".into(),
            });
        }
        events.push(EdgeEvent {
            src,
            dst,
            timestamp,
        });
    }
    Ok(events)
}

pub fn load_edge_list(path: impl AsRef<Path>) -> Result<Vec<EdgeEvent>> {
    parse_edge_list(&fs::read_to_string(path)?)
}

/// Smallest node universe covering every event: `max id + 1`.
pub fn infer_n_nodes(events: &[EdgeEvent]) -> usize {
    events
        .iter()
        .map(|e| e.src.max(e.dst) + 1)
        .max()
        .unwrap_or(0)
}

/// Parses a label file and remaps class ids to `0..C` in order of first
/// appearance (by line). When `n_nodes` is `None` it is inferred as
/// `max node + 1`; every node in `[0, n)` must appear exactly once.
pub fn parse_labels(text: &str, n_nodes: Option<usize>) -> Result<Vec<usize>> {
    let mut pairs = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = strip_comment(raw).trim();
        if line.is_empty() {
            continue;
        }
        let toks: Vec<&str> = line.split_whitespace().collect();
        if toks.len() != 2 {
            return Err(Error::Parse {
                line: line_no,
                msg: format!("expected `node label`, found {} fields", toks.len()),
            });
        }
        let node = parse_node_id(toks[0], line_no)?;
        let label: i64 = toks[1].parse().map_err(|_| Error::Parse {
            line: line_no,
            msg: format!("expected an integer label, found {:?}", toks[1]),
        })?;
        if label < 0 {
            return input(format!("line {line_no}: negative label {label}"));
        }
        pairs.push((node, label));
    }

    let n = n_nodes.unwrap_or_else(|| pairs.iter().map(|&(v, _)| v + 1).max().unwrap_or(0));
    let mut raw_labels: Vec<Option<i64>> = vec![None; n];
    for &(node, label) in &pairs {
        if node >= n {
            return input(format!("label for node {node} outside [0, {n})"));
        }
        if raw_labels[node].replace(label).is_some() {
            return input(format!("duplicate label for node {node}"));
        }
    }

    let mut remap: Vec<i64> = Vec::new();
    for &(_, label) in &pairs {
        if !remap.contains(&label) {
            remap.push(label);
        }
    }
    raw_labels
        .iter()
        .enumerate()
        .map(|(node, l)| match l {
            Some(l) => Ok(remap.iter().position(|r| r == l).expect("seen label")),
            None => input(format!("missing label for node {node}")),
        })
        .collect()
}

pub fn load_labels(path: impl AsRef<Path>, n_nodes: Option<usize>) -> Result<Vec<usize>> {
    parse_labels(&fs::read_to_string(path)?, n_nodes)
}

/// Splits `[min_ts, max_ts]` into `t_count` equal-width bins (half-open,
/// last bin closed) and builds one snapshot per bin. Every event has unit
/// weight. A zero-width range puts everything in the final bin.
pub fn bucket_snapshots(
    events: &[EdgeEvent],
    n_nodes: usize,
    t_count: usize,
) -> Result<TemporalGraph> {
    if t_count == 0 {
        return input("snapshot count must be at least 1");
    }
    if events.is_empty() {
        return input("cannot bucket an empty event list");
    }
    let lo = events.iter().map(|e| e.timestamp).fold(f64::INFINITY, f64::min);
    let hi = events
        .iter()
        .map(|e| e.timestamp)
        .fold(f64::NEG_INFINITY, f64::max);
    let width = (hi - lo) / t_count as f64;

    let mut bins: Vec<Vec<(usize, usize, f64)>> = vec![Vec::new(); t_count];
    for e in events {
        let bin = if width > 0.0 {
            (((e.timestamp - lo) / width).floor() as usize).min(t_count - 1)
        } else {
            t_count - 1
        };
        bins[bin].push((e.src, e.dst, 1.0));
    }

    let snapshots = bins
        .iter()
        .enumerate()
        .map(|(t, edges)| {
            let start = lo + width * t as f64;
            Ok(build_snapshot(edges, n_nodes)?.with_time_range(start, start + width))
        })
        .collect::<Result<Vec<_>>>()?;
    TemporalGraph::new(n_nodes, snapshots, None)
}

/// Parameters of a dynamic stochastic block model.
#[derive(Debug, Clone, PartialEq)]
pub struct DsbmConfig {
    pub n_nodes: usize,
    pub n_blocks: usize,
    pub snapshots: usize,
    /// Symmetric `n_blocks x n_blocks` edge probabilities.
    pub pi: Vec<Vec<f64>>,
    /// Probability that a node keeps its block from one step to the next.
    pub persistence: f64,
    pub seed: u64,
}

impl DsbmConfig {
    /// Planted partition: `p_in` on the diagonal of `pi`, `p_out` elsewhere.
    pub fn planted(
        n_nodes: usize,
        n_blocks: usize,
        snapshots: usize,
        p_in: f64,
        p_out: f64,
        seed: u64,
    ) -> Self {
        let pi = (0..n_blocks)
            .map(|a| {
                (0..n_blocks)
                    .map(|b| if a == b { p_in } else { p_out })
                    .collect()
            })
            .collect();
        Self {
            n_nodes,
            n_blocks,
            snapshots,
            pi,
            persistence: 1.0,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_nodes == 0 || self.n_blocks == 0 || self.snapshots == 0 {
            return input("dsbm: n_nodes, n_blocks and snapshots must be positive");
        }
        if self.n_blocks > self.n_nodes {
            return input("dsbm: more blocks than nodes");
        }
        if self.pi.len() != self.n_blocks || self.pi.iter().any(|r| r.len() != self.n_blocks) {
            return input(format!(
                "dsbm: pi must be {0}x{0}",
                self.n_blocks
            ));
        }
        for a in 0..self.n_blocks {
            for b in 0..self.n_blocks {
                let p = self.pi[a][b];
                if !(0.0..=1.0).contains(&p) {
                    return input(format!("dsbm: pi[{a}][{b}] = {p} is not a probability"));
                }
                if p != self.pi[b][a] {
                    return input(format!("dsbm: pi is not symmetric at ({a}, {b})"));
                }
            }
        }
        if !(0.0..=1.0).contains(&self.persistence) {
            return input(format!(
                "dsbm: persistence {} is not a probability",
                self.persistence
            ));
        }
        Ok(())
    }
}

/// Samples a DSBM graph.
///
/// Initial memberships are a balanced random assignment (shuffled nodes dealt
/// round-robin into blocks). At each later step a node keeps its block with
/// probability `persistence`, otherwise it draws a block uniformly. Each
/// unordered pair is then an edge independently with probability
/// `pi[g_i][g_j]`.
///
/// Returns the graph, whose static labels are each node's most frequent block
/// (ties to the lowest block), and the membership vector of every snapshot.
pub fn generate_dsbm(cfg: &DsbmConfig) -> Result<(TemporalGraph, Vec<Vec<usize>>)> {
    cfg.validate()?;
    let n = cfg.n_nodes;
    let mut rng = seeded(cfg.seed);

    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let mut current = vec![0usize; n];
    for (pos, &node) in order.iter().enumerate() {
        current[node] = pos % cfg.n_blocks;
    }

    let mut memberships = Vec::with_capacity(cfg.snapshots);
    let mut snapshots = Vec::with_capacity(cfg.snapshots);
    for t in 0..cfg.snapshots {
        if t > 0 {
            for g in current.iter_mut() {
                if !rng.random_bool(cfg.persistence) {
                    *g = rng.random_range(0..cfg.n_blocks);
                }
            }
        }
        let mut edges = Vec::new();
        for i in 0..n {
            for j in (i + 1)..n {
                if rng.random_bool(cfg.pi[current[i]][current[j]]) {
                    edges.push((i, j, 1.0));
                }
            }
        }
        snapshots.push(build_snapshot(&edges, n)?.with_time_range(t as f64, t as f64 + 1.0));
        memberships.push(current.clone());
    }

    let labels = (0..n)
        .map(|i| {
            let mut counts = vec![0usize; cfg.n_blocks];
            for m in &memberships {
                counts[m[i]] += 1;
            }
            // first maximum wins
            counts
                .iter()
                .enumerate()
                .fold((0, 0), |best, (b, &c)| if c > best.1 { (b, c) } else { best })
                .0
        })
        .collect();
    let graph = TemporalGraph::new(n, snapshots, Some(labels))?;
    Ok((graph, memberships))
}

/// Edge events of a graph, one per unit of weight, timestamped by snapshot index.
pub fn graph_events(g: &TemporalGraph) -> Vec<EdgeEvent> {
    let mut events = Vec::new();
    for (t, s) in g.snapshots().iter().enumerate() {
        for (i, j, w) in s.edges() {
            let copies = (w.round() as usize).max(1);
            for _ in 0..copies {
                events.push(EdgeEvent {
                    src: i,
                    dst: j,
                    timestamp: t as f64,
                });
            }
        }
    }
    events
}

pub fn format_edge_list(events: &[EdgeEvent]) -> String {
    let mut out = String::from("# src dst timestamp\n");
    for e in events {
        let _ = writeln!(out, "{} {} {}", e.src, e.dst, e.timestamp);
    }
    out
}

pub fn format_labels(labels: &[usize]) -> String {
    let mut out = String::new();
    for (node, l) in labels.iter().enumerate() {
        let _ = writeln!(out, "{node} {l}");
    }
    out
}

/// Disjoint client node sets and the induced client subgraphs.
#[derive(Debug, Clone, PartialEq)]
pub struct FederationSplit {
    /// Global node ids owned by each client, ascending.
    pub client_node_sets: Vec<Vec<usize>>,
    pub client_graphs: Vec<TemporalGraph>,
}

impl FederationSplit {
    /// Builds a split from explicit node sets, which must partition the graph.
    pub fn from_node_sets(g: &TemporalGraph, mut sets: Vec<Vec<usize>>) -> Result<Self> {
        let mut owner = vec![false; g.n_nodes()];
        for set in sets.iter_mut() {
            set.sort_unstable();
            for &v in set.iter() {
                if v >= g.n_nodes() {
                    return input(format!("node {v} outside [0, {})", g.n_nodes()));
                }
                if std::mem::replace(&mut owner[v], true) {
                    return input(format!("node {v} assigned to more than one client"));
                }
            }
        }
        if let Some(v) = owner.iter().position(|&o| !o) {
            return input(format!("node {v} is not assigned to any client"));
        }
        let client_graphs = sets
            .iter()
            .map(|s| restrict_subgraph(g, s))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            client_node_sets: sets,
            client_graphs,
        })
    }

    pub fn n_clients(&self) -> usize {
        self.client_node_sets.len()
    }
}

/// Seeded random node partition into `k` near-equal chunks (sizes differ by
/// at most one, larger chunks first). Cross-client edges are dropped.
pub fn partition_random(g: &TemporalGraph, k: usize, seed: u64) -> Result<FederationSplit> {
    let n = g.n_nodes();
    if k == 0 || k > n {
        return input(format!("client count {k} must be in [1, {n}]"));
    }
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut seeded(seed));

    let base = n / k;
    let extra = n % k;
    let mut sets = Vec::with_capacity(k);
    let mut start = 0;
    for c in 0..k {
        let size = base + usize::from(c < extra);
        sets.push(perm[start..start + size].to_vec());
        start += size;
    }
    FederationSplit::from_node_sets(g, sets)
}
