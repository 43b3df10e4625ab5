//! From embeddings to cluster assignments.

use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::{Array2, ArrayView2};
use rand::Rng as _;

use crate::embedding::EmbeddingSequence;
use crate::error::{input, Error, Result};
use crate::graph::{laplacian, LaplacianKind, Snapshot, TemporalGraph};
use crate::objective::clustering_objective;
use crate::rng::seeded;

/// Per-snapshot hard assignments plus one static label per node.
///
/// Each `F_t` is stored as a label vector; [`ClusterAssignment::indicator`]
/// materializes the one-hot matrix.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClusterAssignment {
    per_snapshot: Vec<Vec<usize>>,
    consensus: Vec<usize>,
    k: usize,
}

impl ClusterAssignment {
    /// Consensus defaults to each node's most frequent label (lowest on ties).
    pub fn from_labels(per_snapshot: Vec<Vec<usize>>, k: usize) -> Result<Self> {
        let Some(first) = per_snapshot.first() else {
            return input("assignment needs at least one snapshot");
        };
        let n = first.len();
        if per_snapshot.iter().any(|l| l.len() != n) {
            return Err(Error::Shape("snapshot label vectors differ in length".into()));
        }
        if let Some(bad) = per_snapshot.iter().flatten().find(|&&l| l >= k) {
            return input(format!("label {bad} outside [0, {k})"));
        }
        let consensus = majority(&per_snapshot, k, None);
        Ok(Self {
            per_snapshot,
            consensus,
            k,
        })
    }

    /// Same labels at every snapshot.
    pub fn constant(labels: Vec<usize>, t_count: usize, k: usize) -> Result<Self> {
        Self::from_labels(vec![labels; t_count], k)
    }

    /// Builds an assignment from `n x k` matrices; every row must be one-hot.
    pub fn from_matrices(mats: &[Array2<f64>]) -> Result<Self> {
        let Some(first) = mats.first() else {
            return input("assignment needs at least one snapshot");
        };
        let k = first.ncols();
        let mut per_snapshot = Vec::with_capacity(mats.len());
        for (t, m) in mats.iter().enumerate() {
            if m.dim() != first.dim() {
                return Err(Error::Shape(format!("F_{t} has shape {:?}", m.dim())));
            }
            let mut labels = Vec::with_capacity(m.nrows());
            for (i, row) in m.rows().into_iter().enumerate() {
                let ones: Vec<usize> = (0..k).filter(|&c| row[c] == 1.0).collect();
                let zeros = row.iter().filter(|&&v| v == 0.0).count();
                if ones.len() != 1 || zeros != k - 1 {
                    return input(format!("row {i} of F_{t} is not one-hot"));
                }
                labels.push(ones[0]);
            }
            per_snapshot.push(labels);
        }
        Self::from_labels(per_snapshot, k)
    }

    pub fn with_consensus(mut self, consensus: Vec<usize>) -> Result<Self> {
        if consensus.len() != self.n_nodes() || consensus.iter().any(|&l| l >= self.k) {
            return input("consensus labels do not match the assignment");
        }
        self.consensus = consensus;
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.per_snapshot.len()
    }

    pub fn is_empty(&self) -> bool {
        self.per_snapshot.is_empty()
    }

    pub fn n_nodes(&self) -> usize {
        self.per_snapshot[0].len()
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn labels_at(&self, t: usize) -> &[usize] {
        &self.per_snapshot[t]
    }

    pub fn per_snapshot(&self) -> &[Vec<usize>] {
        &self.per_snapshot
    }

    pub fn consensus(&self) -> &[usize] {
        &self.consensus
    }

    /// One-hot `n x k` matrix `F_t`.
    pub fn indicator(&self, t: usize) -> Array2<f64> {
        let mut f = Array2::zeros((self.n_nodes(), self.k));
        for (i, &l) in self.per_snapshot[t].iter().enumerate() {
            f[[i, l]] = 1.0;
        }
        f
    }
}

/// Most frequent label per node. On ties, `prefer` wins if it is among the
/// maxima, otherwise the lowest label.
fn majority(per_snapshot: &[Vec<usize>], k: usize, prefer: Option<&[usize]>) -> Vec<usize> {
    let n = per_snapshot[0].len();
    (0..n)
        .map(|i| {
            let mut counts = vec![0usize; k];
            for labels in per_snapshot {
                counts[labels[i]] += 1;
            }
            let best = *counts.iter().max().expect("k >= 1");
            match prefer {
                Some(p) if counts[p[i]] == best => p[i],
                _ => counts.iter().position(|&c| c == best).expect("max exists"),
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansResult {
    pub labels: Vec<usize>,
    /// `k x d`.
    pub centroids: Array2<f64>,
    /// Sum of squared distances to assigned centroids.
    pub inertia: f64,
    /// Number of assignment steps performed.
    pub iterations: usize,
    /// Inertia after each centroid update.
    pub inertia_history: Vec<f64>,
}

fn sq_dist(a: ndarray::ArrayView1<'_, f64>, b: ndarray::ArrayView1<'_, f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y).powi(2)).sum()
}

fn nearest(point: ndarray::ArrayView1<'_, f64>, centroids: &Array2<f64>) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, row) in centroids.rows().into_iter().enumerate() {
        let d = sq_dist(point, row);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

fn inertia_of(points: ArrayView2<'_, f64>, labels: &[usize], centroids: &Array2<f64>) -> f64 {
    labels
        .iter()
        .enumerate()
        .map(|(i, &l)| sq_dist(points.row(i), centroids.row(l)))
        .sum()
}

fn plus_plus_seeds(points: ArrayView2<'_, f64>, k: usize, rng: &mut crate::rng::Rng) -> Vec<usize> {
    let n = points.nrows();
    let mut chosen = vec![rng.random_range(0..n)];
    let mut d2: Vec<f64> = (0..n)
        .map(|i| sq_dist(points.row(i), points.row(chosen[0])))
        .collect();
    while chosen.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut pick = None;
            for (i, &w) in d2.iter().enumerate() {
                if w == 0.0 {
                    continue;
                }
                acc += w;
                pick = Some(i);
                if acc > target {
                    break;
                }
            }
            pick.expect("positive total weight")
        } else {
            // every remaining point coincides with a chosen one
            (0..n).find(|i| !chosen.contains(i)).expect("k <= n")
        };
        chosen.push(next);
        for (i, d) in d2.iter_mut().enumerate() {
            *d = d.min(sq_dist(points.row(i), points.row(next)));
        }
    }
    chosen
}

/// k-means++ seeding followed by Lloyd iterations.
///
/// Stops at an assignment fixpoint or after `max_iter` assignment steps.
/// Nearest-centroid ties go to the lowest centroid index. A cluster left
/// empty by an update is re-seeded at the point farthest from its centroid.
pub fn kmeans(points: ArrayView2<'_, f64>, k: usize, seed: u64, max_iter: usize) -> Result<KMeansResult> {
    let (n, d) = points.dim();
    if k == 0 || k > n {
        return input(format!("k = {k} must be in [1, {n}]"));
    }
    if max_iter == 0 {
        return input("max_iter must be at least 1");
    }
    let mut rng = seeded(seed);
    let seeds = plus_plus_seeds(points, k, &mut rng);
    let mut centroids = points.select(ndarray::Axis(0), &seeds);

    let mut labels: Vec<usize> = Vec::new();
    let mut history = Vec::new();
    let mut iterations = 0;
    while iterations < max_iter {
        let assigned: Vec<usize> = (0..n).map(|i| nearest(points.row(i), &centroids).0).collect();
        iterations += 1;
        if assigned == labels {
            break;
        }
        labels = assigned;

        let mut sums = Array2::<f64>::zeros((k, d));
        let mut counts = vec![0usize; k];
        for (i, &l) in labels.iter().enumerate() {
            sums.row_mut(l).scaled_add(1.0, &points.row(i));
            counts[l] += 1;
        }
        for c in 0..k {
            if counts[c] > 0 {
                let mean = sums.row(c).mapv(|v| v / counts[c] as f64);
                centroids.row_mut(c).assign(&mean);
            }
        }
        for c in 0..k {
            if counts[c] > 0 {
                continue;
            }
            let far = (0..n)
                .filter(|&i| counts[labels[i]] > 1)
                .map(|i| (i, sq_dist(points.row(i), centroids.row(labels[i]))))
                .fold(None, |best: Option<(usize, f64)>, cur| match best {
                    Some(b) if b.1 >= cur.1 => Some(b),
                    _ => Some(cur),
                });
            if let Some((i, _)) = far {
                counts[labels[i]] -= 1;
                labels[i] = c;
                counts[c] = 1;
                centroids.row_mut(c).assign(&points.row(i));
            }
        }
        history.push(inertia_of(points, &labels, &centroids));
    }
    let inertia = inertia_of(points, &labels, &centroids);
    Ok(KMeansResult {
        labels,
        centroids,
        inertia,
        iterations,
        inertia_history: history,
    })
}

pub const CONSENSUS_MAX_ITER: usize = 300;

/// k-means on the time-averaged embedding.
pub fn consensus_labels(h: &EmbeddingSequence, k: usize, seed: u64) -> Result<Vec<usize>> {
    if h.is_empty() {
        return input("embedding sequence is empty");
    }
    let avg = h.time_average();
    Ok(kmeans(avg.view(), k, seed, CONSENSUS_MAX_ITER)?.labels)
}

/// The `k` smallest eigenpairs of a snapshot Laplacian, ascending, with each
/// eigenvector's first nonzero entry made positive. Dense; meant for small graphs.
pub fn spectral_decomposition(s: &Snapshot, k: usize, kind: LaplacianKind) -> (Vec<f64>, Array2<f64>) {
    let n = s.n_nodes();
    let k = k.min(n);
    let l = laplacian(s, kind);
    let dense = DMatrix::from_fn(n, n, |i, j| l[[i, j]]);
    let eig = SymmetricEigen::new(dense);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]).then(a.cmp(&b)));

    let mut values = Vec::with_capacity(k);
    let mut vectors = Array2::zeros((n, k));
    for (col, &idx) in order.iter().take(k).enumerate() {
        values.push(eig.eigenvalues[idx]);
        let v = eig.eigenvectors.column(idx);
        let sign = v
            .iter()
            .find(|x| x.abs() > 1e-12)
            .map_or(1.0, |&x| x.signum());
        for i in 0..n {
            vectors[[i, col]] = sign * v[i];
        }
    }
    (values, vectors)
}

/// Eigenvectors of the `k` smallest Laplacian eigenvalues as columns.
pub fn spectral_embed(s: &Snapshot, k: usize, kind: LaplacianKind) -> Array2<f64> {
    spectral_decomposition(s, k, kind).1
}

/// Greedy single-node relocation against the clustering objective.
///
/// Each pass visits `(t, node)` in ascending order and moves the node at
/// time `t` to the cluster with the largest strict decrease in the objective
/// (lowest cluster index on ties). Stops after a pass with no move or after
/// `max_passes`. The consensus is recomputed as each node's majority label,
/// keeping the previous consensus on ties.
pub fn refine_assignments(
    g: &TemporalGraph,
    f: &ClusterAssignment,
    beta: f64,
    max_passes: usize,
) -> Result<ClusterAssignment> {
    // validates shapes
    clustering_objective(g, f, beta)?;
    let k = f.k();
    let t_count = f.len();
    let mut labels = f.per_snapshot().to_vec();
    let mut moved_any = false;

    for _ in 0..max_passes {
        let mut moved = false;
        for t in 0..t_count {
            let s = g.snapshot(t);
            for i in 0..g.n_nodes() {
                let current = labels[t][i];
                let mut link = vec![0.0; k];
                for &(j, w) in s.neighbors(i) {
                    link[labels[t][j]] += w;
                }
                let churn = |c: usize| -> f64 {
                    let mut n = 0.0;
                    if t > 0 && labels[t - 1][i] != c {
                        n += 1.0;
                    }
                    if t + 1 < t_count && labels[t + 1][i] != c {
                        n += 1.0;
                    }
                    n
                };
                let cost = |c: usize| 2.0 * (s.degree(i) - link[c]) + 2.0 * beta * churn(c);
                let base = cost(current);
                let mut best = (current, 0.0);
                for c in 0..k {
                    let delta = cost(c) - base;
                    if delta < best.1 - 1e-12 {
                        best = (c, delta);
                    }
                }
                if best.0 != current {
                    labels[t][i] = best.0;
                    moved = true;
                }
            }
        }
        if !moved {
            break;
        }
        moved_any = true;
    }

    if !moved_any {
        return Ok(f.clone());
    }
    let consensus = majority(&labels, k, Some(f.consensus()));
    ClusterAssignment::from_labels(labels, k)?.with_consensus(consensus)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::build_snapshot;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn four_points() -> Array2<f64> {
        ndarray::arr2(&[[0.0, 0.0], [0.0, 1.0], [10.0, 0.0], [10.0, 1.0]])
    }

    /// Minimum within-cluster sum of squares over every 2-partition.
    fn brute_two_partition(points: &Array2<f64>) -> (f64, Vec<usize>) {
        let n = points.nrows();
        let mut best = (f64::INFINITY, vec![]);
        for mask in 1..(1u32 << n) - 1 {
            let labels: Vec<usize> = (0..n).map(|i| ((mask >> i) & 1) as usize).collect();
            let mut cost = 0.0;
            for c in 0..2 {
                let members: Vec<usize> = (0..n).filter(|&i| labels[i] == c).collect();
                let mean = points.select(ndarray::Axis(0), &members).mean_axis(ndarray::Axis(0)).unwrap();
                for &i in &members {
                    cost += sq_dist(points.row(i), mean.view());
                }
            }
            if cost < best.0 {
                best = (cost, labels);
            }
        }
        best
    }

    #[test]
    fn kmeans_two_clusters_matches_brute_force() {
        let pts = four_points();
        let (best_cost, best_labels) = brute_two_partition(&pts);
        assert_eq!(best_cost, 1.0);
        for seed in 0..10 {
            let r = kmeans(pts.view(), 2, seed, 50).unwrap();
            assert!((r.inertia - best_cost).abs() < 1e-12);
            for i in 0..4 {
                for j in 0..4 {
                    assert_eq!(r.labels[i] == r.labels[j], best_labels[i] == best_labels[j]);
                }
            }
        }
    }

    #[test]
    fn kmeans_k_equals_n() {
        let r = kmeans(four_points().view(), 4, 3, 10).unwrap();
        assert_eq!(r.inertia, 0.0);
        let mut l = r.labels.clone();
        l.sort_unstable();
        assert_eq!(l, vec![0, 1, 2, 3]);
    }

    #[test]
    fn kmeans_k_one_is_total_variance() {
        let pts = four_points();
        let r = kmeans(pts.view(), 1, 0, 10).unwrap();
        // mean (5, 0.5): each point is 25 + 0.25 away
        assert!((r.inertia - 101.0).abs() < 1e-12);
    }

    #[test]
    fn kmeans_rejects_k_above_n() {
        assert!(kmeans(four_points().view(), 5, 0, 10).is_err());
    }

    #[test]
    fn kmeans_inertia_monotone_and_bit_stable() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for seed in 0..20 {
            let pts = Array2::from_shape_simple_fn((40, 3), || rng.random_range(-5.0..5.0));
            let a = kmeans(pts.view(), 4, seed, 100).unwrap();
            for w in a.inertia_history.windows(2) {
                assert!(w[1] <= w[0] + 1e-9);
            }
            assert_eq!(a, kmeans(pts.view(), 4, seed, 100).unwrap());
            let recomputed = inertia_of(pts.view(), &a.labels, &a.centroids);
            assert_eq!(a.inertia, recomputed);
        }
    }

    #[test]
    fn consensus_identities() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let h1 = Array2::from_shape_simple_fn((12, 2), || rng.random_range(-1.0..1.0));
        let direct = kmeans(h1.view(), 3, 5, CONSENSUS_MAX_ITER).unwrap().labels;
        let one = EmbeddingSequence { h: vec![h1.clone()] };
        assert_eq!(consensus_labels(&one, 3, 5).unwrap(), direct);
        let many = EmbeddingSequence { h: vec![h1; 4] };
        assert_eq!(consensus_labels(&many, 3, 5).unwrap(), direct);
    }

    fn two_components() -> Snapshot {
        build_snapshot(&[(0, 1, 1.0), (1, 2, 1.0), (3, 4, 1.0), (4, 5, 2.0), (3, 5, 1.0)], 6).unwrap()
    }

    #[test]
    fn connected_graph_first_eigenvector_constant() {
        let s = build_snapshot(&[(0, 1, 1.0), (1, 2, 1.0), (2, 3, 1.0), (0, 3, 0.5)], 4).unwrap();
        let (vals, vecs) = spectral_decomposition(&s, 2, LaplacianKind::Combinatorial);
        assert!(vals[0].abs() < 1e-12);
        let c = vecs[[0, 0]];
        assert!(c > 0.0);
        assert!(vecs.column(0).iter().all(|v| (v - c).abs() < 1e-12));
    }

    #[test]
    fn two_components_span_indicators() {
        let s = two_components();
        let v = spectral_embed(&s, 2, LaplacianKind::Combinatorial);
        let l = laplacian(&s, LaplacianKind::Combinatorial);
        let tr = v.t().dot(&l).dot(&v).diag().sum();
        assert!(tr.abs() < 1e-10);
    }

    #[test]
    fn eigen_residual_and_orthonormality() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let n = rng.random_range(2..=10);
            let mut edges = vec![];
            for i in 0..n {
                for j in (i + 1)..n {
                    if rng.random_bool(0.4) {
                        edges.push((i, j, rng.random_range(0.1..2.0)));
                    }
                }
            }
            let s = build_snapshot(&edges, n).unwrap();
            for kind in [LaplacianKind::Combinatorial, LaplacianKind::Normalized] {
                let (vals, v) = spectral_decomposition(&s, n, kind);
                let l = laplacian(&s, kind);
                for c in 0..n {
                    let col = v.column(c);
                    let r = l.dot(&col) - &col.mapv(|x| x * vals[c]);
                    assert!(r.iter().all(|x| x.abs() < 1e-8));
                }
                let gram = v.t().dot(&v);
                for i in 0..n {
                    for j in 0..n {
                        let e = if i == j { 1.0 } else { 0.0 };
                        assert!((gram[[i, j]] - e).abs() < 1e-10);
                    }
                }
                assert!(vals.windows(2).all(|w| w[0] <= w[1]));
            }
        }
    }

    #[test]
    fn refine_fixpoint_unchanged() {
        let s = two_components();
        let g = TemporalGraph::new(6, vec![s.clone(), s], None).unwrap();
        let f = ClusterAssignment::constant(vec![0, 0, 0, 1, 1, 1], 2, 2).unwrap();
        assert_eq!(refine_assignments(&g, &f, 1.0, 10).unwrap(), f);
    }

    #[test]
    fn refine_fixes_misassigned_node() {
        let s = build_snapshot(&[(0, 1, 1.0), (2, 3, 1.0)], 4).unwrap();
        let g = TemporalGraph::new(4, vec![s], None).unwrap();
        let f = ClusterAssignment::constant(vec![0, 1, 1, 1], 1, 2).unwrap();
        let r = refine_assignments(&g, &f, 0.5, 10).unwrap();
        assert_eq!(clustering_objective(&g, &r, 0.5).unwrap(), 0.0);
    }

    #[test]
    fn non_one_hot_matrix_rejected() {
        let m = ndarray::arr2(&[[1.0, 0.0], [1.0, 1.0]]);
        assert!(ClusterAssignment::from_matrices(&[m]).is_err());
        let ok = ndarray::arr2(&[[1.0, 0.0], [0.0, 1.0]]);
        let f = ClusterAssignment::from_matrices(&[ok.clone()]).unwrap();
        assert_eq!(f.indicator(0), ok);
    }
}
