//! Clustering quality against ground truth (ACC, NMI, ARI, F1) and against
//! graph structure (modularity, normalized cut, temporal modularity).

use std::fmt::Write as _;

use crate::error::{input, Result};
use crate::graph::{Snapshot, TemporalGraph};

fn check_lengths(pred: &[usize], truth: &[usize]) -> Result<()> {
    if pred.len() != truth.len() {
        return input(format!(
            "label length mismatch: predicted {}, truth {}",
            pred.len(),
            truth.len()
        ));
    }
    if pred.is_empty() {
        return input("label vectors are empty");
    }
    Ok(())
}

/// Compacts arbitrary label ids to `0..C` by first appearance.
fn compact(labels: &[usize]) -> (Vec<usize>, usize) {
    let mut seen: Vec<usize> = Vec::new();
    let out = labels
        .iter()
        .map(|l| match seen.iter().position(|s| s == l) {
            Some(p) => p,
            None => {
                seen.push(*l);
                seen.len() - 1
            }
        })
        .collect();
    (out, seen.len())
}

/// `table[p][c]` counts points with predicted cluster `p` and class `c`.
struct Contingency {
    table: Vec<Vec<usize>>,
    n: usize,
}

impl Contingency {
    fn new(pred: &[usize], truth: &[usize]) -> Self {
        let (p, np) = compact(pred);
        let (t, nt) = compact(truth);
        let mut table = vec![vec![0usize; nt]; np];
        for (&a, &b) in p.iter().zip(&t) {
            table[a][b] += 1;
        }
        Self {
            table,
            n: pred.len(),
        }
    }

    fn row_sums(&self) -> Vec<usize> {
        self.table.iter().map(|r| r.iter().sum()).collect()
    }

    fn col_sums(&self) -> Vec<usize> {
        let nt = self.table.first().map_or(0, Vec::len);
        (0..nt)
            .map(|c| self.table.iter().map(|r| r[c]).sum())
            .collect()
    }

    /// Optimal cluster -> class mapping (None for clusters left unmatched).
    ///
    /// Maximizes matched points. Among mappings that tie on that count, the
    /// one with the largest macro F1 is chosen, which makes [`f1`] well defined.
    fn best_mapping(&self) -> Vec<Option<usize>> {
        let np = self.table.len();
        let nt = self.table.first().map_or(0, Vec::len);
        let rows = self.row_sums();
        let cols = self.col_sums();
        let size = np.max(nt);
        // per-pair F1 terms sum to at most nt, below one unit of the count
        let scale = (nt + 1) as f64;
        let weight = |i: usize, j: usize| -> f64 {
            if i < np && j < nt {
                let n = self.table[i][j] as f64;
                n * scale + 2.0 * n / (rows[i] + cols[j]) as f64
            } else {
                0.0
            }
        };
        let assignment = max_weight_assignment(size, weight);
        (0..np)
            .map(|i| Some(assignment[i]).filter(|&j| j < nt))
            .collect()
    }
}

/// Hungarian algorithm on a square `size x size` matrix, maximizing total
/// weight. Returns the column matched to each row.
fn max_weight_assignment(size: usize, weight: impl Fn(usize, usize) -> f64) -> Vec<usize> {
    // Minimizing negated weights with potentials (1-based internal indices).
    let cost = |i: usize, j: usize| -weight(i - 1, j - 1);
    let mut u = vec![0.0; size + 1];
    let mut v = vec![0.0; size + 1];
    let mut p = vec![0usize; size + 1];
    let mut way = vec![0usize; size + 1];
    for i in 1..=size {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; size + 1];
        let mut used = vec![false; size + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=size {
                if !used[j] {
                    let cur = cost(i0, j) - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=size {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut row_to_col = vec![0usize; size];
    for j in 1..=size {
        if p[j] > 0 {
            row_to_col[p[j] - 1] = j - 1;
        }
    }
    row_to_col
}

/// Fraction of points whose cluster maps to their class under the optimal
/// one-to-one cluster/class matching.
pub fn accuracy(pred: &[usize], truth: &[usize]) -> Result<f64> {
    check_lengths(pred, truth)?;
    let ct = Contingency::new(pred, truth);
    let matched: usize = ct
        .best_mapping()
        .iter()
        .enumerate()
        .filter_map(|(p, m)| m.map(|c| ct.table[p][c]))
        .sum();
    Ok(matched as f64 / ct.n as f64)
}

fn entropy(counts: &[usize], n: f64) -> f64 {
    counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.ln()
        })
        .sum()
}

/// Mutual information normalized by the arithmetic mean of the entropies.
pub fn nmi(pred: &[usize], truth: &[usize]) -> Result<f64> {
    check_lengths(pred, truth)?;
    let ct = Contingency::new(pred, truth);
    let n = ct.n as f64;
    let rows = ct.row_sums();
    let cols = ct.col_sums();
    let hu = entropy(&rows, n);
    let hv = entropy(&cols, n);
    if hu == 0.0 && hv == 0.0 {
        return Ok(1.0);
    }
    if hu == 0.0 || hv == 0.0 {
        return Ok(0.0);
    }
    let mut mi = 0.0;
    for (i, row) in ct.table.iter().enumerate() {
        for (j, &nij) in row.iter().enumerate() {
            if nij > 0 {
                let nij = nij as f64;
                mi += nij / n * (n * nij / (rows[i] as f64 * cols[j] as f64)).ln();
            }
        }
    }
    Ok((mi / ((hu + hv) / 2.0)).clamp(0.0, 1.0))
}

fn comb2(x: usize) -> f64 {
    let x = x as f64;
    x * (x - 1.0) / 2.0
}

/// Adjusted Rand index from pair counts.
pub fn ari(pred: &[usize], truth: &[usize]) -> Result<f64> {
    check_lengths(pred, truth)?;
    if pred.len() < 2 {
        return input("ARI needs at least two points");
    }
    let ct = Contingency::new(pred, truth);
    let index: f64 = ct.table.iter().flatten().map(|&c| comb2(c)).sum();
    let a: f64 = ct.row_sums().into_iter().map(comb2).sum();
    let b: f64 = ct.col_sums().into_iter().map(comb2).sum();
    let total = comb2(ct.n);
    let expected = a * b / total;
    let max_index = (a + b) / 2.0;
    let denom = max_index - expected;
    if denom == 0.0 {
        // both partitions trivial and identical
        return Ok(1.0);
    }
    Ok((index - expected) / denom)
}

/// Macro F1 over true classes after the optimal cluster/class matching
/// (largest F1 among count-optimal matchings). Classes without a matched
/// cluster score 0.
pub fn f1(pred: &[usize], truth: &[usize]) -> Result<f64> {
    check_lengths(pred, truth)?;
    let ct = Contingency::new(pred, truth);
    let mapping = ct.best_mapping();
    let cols = ct.col_sums();
    let rows = ct.row_sums();
    let nt = cols.len();
    let mut tp = vec![0usize; nt];
    let mut predicted = vec![0usize; nt];
    for (p, m) in mapping.iter().enumerate() {
        if let Some(c) = *m {
            tp[c] += ct.table[p][c];
            predicted[c] += rows[p];
        }
    }
    let total: f64 = (0..nt)
        .map(|c| {
            if tp[c] == 0 {
                return 0.0;
            }
            let precision = tp[c] as f64 / predicted[c] as f64;
            let recall = tp[c] as f64 / cols[c] as f64;
            2.0 * precision * recall / (precision + recall)
        })
        .sum();
    Ok(total / nt as f64)
}

fn check_labels(s: &Snapshot, labels: &[usize]) -> Result<()> {
    if labels.len() != s.n_nodes() {
        return input(format!(
            "{} labels for a snapshot with {} nodes",
            labels.len(),
            s.n_nodes()
        ));
    }
    Ok(())
}

/// `Q = 1/(2m) sum_{i,j} (A_ij - d_i d_j / 2m) [c_i = c_j]` over all ordered
/// pairs, with `2m` the total degree. Zero for an edgeless snapshot.
pub fn modularity(s: &Snapshot, labels: &[usize]) -> Result<f64> {
    check_labels(s, labels)?;
    let two_m: f64 = s.degrees().iter().sum();
    if two_m == 0.0 {
        return Ok(0.0);
    }
    let k = labels.iter().max().map_or(0, |&m| m + 1);
    let mut internal = 0.0;
    for (i, j, w) in s.edges() {
        if labels[i] == labels[j] {
            internal += 2.0 * w;
        }
    }
    let mut vol = vec![0.0; k];
    for (i, &d) in s.degrees().iter().enumerate() {
        vol[labels[i]] += d;
    }
    let expected: f64 = vol.iter().map(|v| v * v).sum::<f64>() / two_m;
    Ok((internal - expected) / two_m)
}

/// `sum_C cut(C, rest) / vol(C)`; clusters with zero volume contribute 0.
pub fn normalized_cut(s: &Snapshot, labels: &[usize]) -> Result<f64> {
    check_labels(s, labels)?;
    let k = labels.iter().max().map_or(0, |&m| m + 1);
    let mut cut = vec![0.0; k];
    let mut vol = vec![0.0; k];
    for (i, &d) in s.degrees().iter().enumerate() {
        vol[labels[i]] += d;
    }
    for (i, j, w) in s.edges() {
        if labels[i] != labels[j] {
            cut[labels[i]] += w;
            cut[labels[j]] += w;
        }
    }
    Ok(cut
        .iter()
        .zip(&vol)
        .map(|(c, v)| if *v > 0.0 { c / v } else { 0.0 })
        .sum())
}

/// Mean per-snapshot modularity plus `beta` times the fraction of
/// `(node, t)` pairs, `t < T`, whose cluster is unchanged at `t + 1`.
pub fn temporal_modularity(g: &TemporalGraph, labels_per_t: &[Vec<usize>], beta: f64) -> Result<f64> {
    if labels_per_t.len() != g.len() {
        return input(format!(
            "{} label vectors for {} snapshots",
            labels_per_t.len(),
            g.len()
        ));
    }
    let mut q = 0.0;
    for (s, l) in g.snapshots().iter().zip(labels_per_t) {
        q += modularity(s, l)?;
    }
    q /= g.len() as f64;
    if g.len() < 2 {
        return Ok(q);
    }
    let kept: usize = labels_per_t
        .windows(2)
        .map(|w| w[0].iter().zip(&w[1]).filter(|(a, b)| a == b).count())
        .sum();
    let pairs = g.n_nodes() * (g.len() - 1);
    Ok(q + beta * kept as f64 / pairs as f64)
}

/// Evaluation summary. External indices are absent when no ground truth exists.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricReport {
    pub acc: Option<f64>,
    pub nmi: Option<f64>,
    pub ari: Option<f64>,
    pub f1: Option<f64>,
    pub modularity: f64,
    pub ncut: f64,
    pub temporal_modularity: f64,
}

impl MetricReport {
    /// Single-line JSON object, fixed key order, six decimals.
    pub fn to_json(&self) -> String {
        let mut fields = Vec::new();
        for (key, v) in [
            ("acc", self.acc),
            ("nmi", self.nmi),
            ("ari", self.ari),
            ("f1", self.f1),
        ] {
            if let Some(v) = v {
                fields.push((key, v));
            }
        }
        fields.push(("modularity", self.modularity));
        fields.push(("ncut", self.ncut));
        fields.push(("temporal_modularity", self.temporal_modularity));
        let mut out = String::from("{");
        for (i, (key, v)) in fields.iter().enumerate() {
            if i > 0 {
                out.push_str(", ");
            }
            // -0.000000 would be valid JSON but looks odd
            let v = if v.abs() < 5e-7 { 0.0 } else { *v };
            let _ = write!(out, "\"{key}\": {v:.6}");
        }
        out.push('}');
        out
    }
}
