//! Temporal graph data model.
//!
//! A [`TemporalGraph`] is a fixed node universe with `T` snapshots. Each
//! [`Snapshot`] stores a symmetric, nonnegative weighted adjacency with a zero
//! diagonal as sorted per-node neighbor lists. Nodes that do not appear in a
//! snapshot are simply isolated there, so every per-snapshot matrix has the
//! same `n x n` shape.

use std::collections::BTreeMap;

use ndarray::{Array2, ArrayView2};

use crate::error::{input, Result};

/// Which graph Laplacian to build.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LaplacianKind {
    /// `L = D - A`.
    #[default]
    Combinatorial,
    /// `I - D^{-1/2} A D^{-1/2}`, with isolated nodes given an all-zero row.
    Normalized,
}

/// One time bin of a temporal graph.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    neighbors: Vec<Vec<(usize, f64)>>,
    degrees: Vec<f64>,
    edge_count: usize,
    time_range: (f64, f64),
}

impl Snapshot {
    /// Snapshot with `n_nodes` isolated nodes.
    pub fn empty(n_nodes: usize) -> Self {
        Self {
            neighbors: vec![Vec::new(); n_nodes],
            degrees: vec![0.0; n_nodes],
            edge_count: 0,
            time_range: (0.0, 0.0),
        }
    }

    pub fn n_nodes(&self) -> usize {
        self.neighbors.len()
    }

    /// Number of unordered pairs with positive weight.
    pub fn edge_count(&self) -> usize {
        self.edge_count
    }

    /// Half-open interval `[lo, hi)` of dataset time covered by this snapshot.
    pub fn time_range(&self) -> (f64, f64) {
        self.time_range
    }

    pub fn with_time_range(mut self, lo: f64, hi: f64) -> Self {
        self.time_range = (lo, hi);
        self
    }

    /// Neighbors of `node` with their weights, ascending by neighbor id.
    pub fn neighbors(&self, node: usize) -> &[(usize, f64)] {
        &self.neighbors[node]
    }

    pub fn degree(&self, node: usize) -> f64 {
        self.degrees[node]
    }

    pub fn degrees(&self) -> &[f64] {
        &self.degrees
    }

    /// Weight of the pair `(i, j)`, zero when absent.
    pub fn weight(&self, i: usize, j: usize) -> f64 {
        let row = &self.neighbors[i];
        match row.binary_search_by_key(&j, |&(n, _)| n) {
            Ok(pos) => row[pos].1,
            Err(_) => 0.0,
        }
    }

    /// Total edge weight, `sum_{i<j} A_ij`.
    pub fn total_weight(&self) -> f64 {
        self.edges().map(|(_, _, w)| w).sum()
    }

    /// Iterates unordered edges `(i, j, w)` with `i < j`, in ascending order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.neighbors.iter().enumerate().flat_map(|(i, row)| {
            row.iter()
                .filter(move |&&(j, _)| j > i)
                .map(move |&(j, w)| (i, j, w))
        })
    }

    /// Dense adjacency matrix.
    pub fn adjacency(&self) -> Array2<f64> {
        let n = self.n_nodes();
        let mut a = Array2::zeros((n, n));
        for (i, row) in self.neighbors.iter().enumerate() {
            for &(j, w) in row {
                a[[i, j]] = w;
            }
        }
        a
    }

    /// Sparse product `A * M`, rows summed in ascending neighbor order.
    pub fn adjacency_mul(&self, m: ArrayView2<'_, f64>) -> Array2<f64> {
        assert_eq!(m.nrows(), self.n_nodes(), "adjacency_mul: row count");
        let mut out = Array2::zeros((m.nrows(), m.ncols()));
        for (i, row) in self.neighbors.iter().enumerate() {
            let mut acc = out.row_mut(i);
            for &(j, w) in row {
                acc.scaled_add(w, &m.row(j));
            }
        }
        out
    }

    /// Sparse product `L * M` for the requested Laplacian.
    pub fn laplacian_mul(&self, m: ArrayView2<'_, f64>, kind: LaplacianKind) -> Array2<f64> {
        assert_eq!(m.nrows(), self.n_nodes(), "laplacian_mul: row count");
        let mut out = Array2::zeros((m.nrows(), m.ncols()));
        for (i, row) in self.neighbors.iter().enumerate() {
            let di = self.degrees[i];
            if di == 0.0 {
                continue;
            }
            let mut acc = out.row_mut(i);
            match kind {
                LaplacianKind::Combinatorial => {
                    acc.scaled_add(di, &m.row(i));
                    for &(j, w) in row {
                        acc.scaled_add(-w, &m.row(j));
                    }
                }
                LaplacianKind::Normalized => {
                    acc.scaled_add(1.0, &m.row(i));
                    for &(j, w) in row {
                        acc.scaled_add(-w / (di * self.degrees[j]).sqrt(), &m.row(j));
                    }
                }
            }
        }
        out
    }
}

/// A fixed node set observed over `T >= 1` snapshots.
#[derive(Debug, Clone, PartialEq)]
pub struct TemporalGraph {
    n_nodes: usize,
    snapshots: Vec<Snapshot>,
    labels: Option<Vec<usize>>,
}

impl TemporalGraph {
    pub fn new(
        n_nodes: usize,
        snapshots: Vec<Snapshot>,
        labels: Option<Vec<usize>>,
    ) -> Result<Self> {
        if snapshots.is_empty() {
            return input("a temporal graph needs at least one snapshot");
        }
        if let Some(bad) = snapshots.iter().position(|s| s.n_nodes() != n_nodes) {
            return input(format!(
                "snapshot {bad} has {} nodes, expected {n_nodes}",
                snapshots[bad].n_nodes()
            ));
        }
        if let Some(l) = &labels {
            if l.len() != n_nodes {
                return input(format!("{} labels for {n_nodes} nodes", l.len()));
            }
        }
        Ok(Self {
            n_nodes,
            snapshots,
            labels,
        })
    }

    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    /// Number of snapshots `T`.
    pub fn len(&self) -> usize {
        self.snapshots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.snapshots.is_empty()
    }

    pub fn snapshots(&self) -> &[Snapshot] {
        &self.snapshots
    }

    pub fn snapshot(&self, t: usize) -> &Snapshot {
        &self.snapshots[t]
    }

    pub fn labels(&self) -> Option<&[usize]> {
        self.labels.as_deref()
    }

    pub fn with_labels(mut self, labels: Option<Vec<usize>>) -> Result<Self> {
        if let Some(l) = &labels {
            if l.len() != self.n_nodes {
                return input(format!("{} labels for {} nodes", l.len(), self.n_nodes));
            }
        }
        self.labels = labels;
        Ok(self)
    }

    /// Sum of all snapshot adjacencies as one static snapshot.
    pub fn union_snapshot(&self) -> Snapshot {
        let edges: Vec<_> = self.snapshots.iter().flat_map(|s| s.edges()).collect();
        build_snapshot(&edges, self.n_nodes).expect("edges come from valid snapshots")
    }
}

/// Builds a symmetric snapshot from an undirected weighted edge list.
///
/// Parallel edges and both orientations of a pair accumulate. Self-loops are
/// dropped. Weights of a pair are summed in sorted order so the result does
/// not depend on the order of `edges`.
pub fn build_snapshot(edges: &[(usize, usize, f64)], n_nodes: usize) -> Result<Snapshot> {
    let mut pairs: BTreeMap<(usize, usize), Vec<f64>> = BTreeMap::new();
    for &(src, dst, w) in edges {
        if src >= n_nodes || dst >= n_nodes {
            return input(format!(
                "edge ({src}, {dst}) references a node outside [0, {n_nodes})"
            ));
        }
        if !(w.is_finite() && w > 0.0) {
            return input(format!("edge ({src}, {dst}) has non-positive weight {w}"));
        }
        if src == dst {
            continue;
        }
        pairs
            .entry((src.min(dst), src.max(dst)))
            .or_default()
            .push(w);
    }

    let mut snap = Snapshot::empty(n_nodes);
    for ((i, j), mut ws) in pairs {
        ws.sort_by(f64::total_cmp);
        let w: f64 = ws.iter().sum();
        snap.neighbors[i].push((j, w));
        snap.neighbors[j].push((i, w));
        snap.edge_count += 1;
    }
    for (row, deg) in snap.neighbors.iter_mut().zip(snap.degrees.iter_mut()) {
        row.sort_by_key(|&(j, _)| j);
        *deg = row.iter().map(|&(_, w)| w).sum();
    }
    Ok(snap)
}

/// Dense Laplacian of a snapshot.
pub fn laplacian(s: &Snapshot, kind: LaplacianKind) -> Array2<f64> {
    let n = s.n_nodes();
    let mut l = Array2::zeros((n, n));
    for i in 0..n {
        let di = s.degree(i);
        if di == 0.0 {
            continue;
        }
        match kind {
            LaplacianKind::Combinatorial => {
                l[[i, i]] = di;
                for &(j, w) in s.neighbors(i) {
                    l[[i, j]] = -w;
                }
            }
            LaplacianKind::Normalized => {
                l[[i, i]] = 1.0;
                for &(j, w) in s.neighbors(i) {
                    l[[i, j]] = -w / (di * s.degree(j)).sqrt();
                }
            }
        }
    }
    l
}

/// Induced subgraph on `nodes`, relabeled to `0..nodes.len()` by ascending
/// original id. Edges leaving the set are dropped; labels are sliced.
pub fn restrict_subgraph(g: &TemporalGraph, nodes: &[usize]) -> Result<TemporalGraph> {
    if nodes.is_empty() {
        return input("cannot restrict to an empty node set");
    }
    let mut kept: Vec<usize> = nodes.to_vec();
    kept.sort_unstable();
    kept.dedup();
    if let Some(&bad) = kept.iter().find(|&&v| v >= g.n_nodes()) {
        return input(format!("node {bad} outside [0, {})", g.n_nodes()));
    }
    let mut new_id = vec![usize::MAX; g.n_nodes()];
    for (new, &old) in kept.iter().enumerate() {
        new_id[old] = new;
    }

    let m = kept.len();
    let snapshots = g
        .snapshots()
        .iter()
        .map(|s| {
            let mut sub = Snapshot::empty(m);
            for (new_i, &old_i) in kept.iter().enumerate() {
                let row: Vec<(usize, f64)> = s
                    .neighbors(old_i)
                    .iter()
                    .filter(|&&(j, _)| new_id[j] != usize::MAX)
                    .map(|&(j, w)| (new_id[j], w))
                    .collect();
                sub.degrees[new_i] = row.iter().map(|&(_, w)| w).sum();
                sub.edge_count += row.iter().filter(|&&(j, _)| j > new_i).count();
                sub.neighbors[new_i] = row;
            }
            sub.time_range = s.time_range;
            sub
        })
        .collect();
    let labels = g
        .labels()
        .map(|l| kept.iter().map(|&v| l[v]).collect::<Vec<_>>());
    TemporalGraph::new(m, snapshots, labels)
}
