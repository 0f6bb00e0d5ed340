//! Visual-similarity clustering of image embeddings.
//!
//! Images of one class arrive as precomputed feature vectors. A k-nearest-
//! neighbor affinity graph with a Gaussian kernel connects each image to its
//! closest peers, and power iteration clustering (PIC) splits the graph into
//! groups: an affinity matrix is iterated on a vector until the vector's
//! entries level out per dense region, then each node points an edge at the
//! neighbor with the steepest weighted ascent and the weakly connected
//! components of those edges become the clusters. The number of clusters is
//! not chosen up front; it falls out of the component structure.

use std::collections::HashMap;
use std::fmt::Write as _;

use thiserror::Error;

/// Default neighbor count for the affinity graph.
pub const DEFAULT_K: usize = 10;
/// Default Gaussian-kernel bandwidth.
pub const DEFAULT_SIGMA: f64 = 0.5;
/// Default regularization weight on the affinity term of the PIC update.
pub const DEFAULT_ALPHA: f64 = 0.001;
/// Default convergence threshold on the max-abs change of the PIC vector.
pub const DEFAULT_TOL: f64 = 1e-8;
/// Default iteration cap for PIC.
pub const DEFAULT_MAX_ITERS: usize = 1000;

#[derive(Debug, Error, PartialEq)]
pub enum ClusterError {
    #[error("degenerate class: {n} image(s); at least 2 are needed to build a neighbor graph")]
    DegenerateClass { n: usize },
    #[error("kernel bandwidth must be positive, got {0}")]
    InvalidSigma(f64),
    #[error("embedding set is empty")]
    EmptySet,
    #[error("embedding for {id:?} has {found} dimensions, expected {expected}")]
    DimensionMismatch {
        id: String,
        expected: usize,
        found: usize,
    },
    #[error("duplicate image id {0:?}")]
    DuplicateId(String),
    #[error("missing embeddings for: {}", .0.join(", "))]
    MissingEmbeddings(Vec<String>),
    #[error("malformed embedding file at line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("malformed assignment file at line {line}: {reason}")]
    ParseAssignment { line: usize, reason: String },
}

/// Feature vectors for the images of a single class.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSet {
    class: String,
    ids: Vec<String>,
    vectors: Vec<Vec<f64>>,
    dim: usize,
}

impl EmbeddingSet {
    pub fn new(
        class: impl Into<String>,
        ids: Vec<String>,
        vectors: Vec<Vec<f64>>,
    ) -> Result<Self, ClusterError> {
        if ids.is_empty() || vectors.is_empty() {
            return Err(ClusterError::EmptySet);
        }
        assert_eq!(ids.len(), vectors.len(), "one vector per image id");
        let dim = vectors[0].len();
        if dim == 0 {
            return Err(ClusterError::DimensionMismatch {
                id: ids[0].clone(),
                expected: 1,
                found: 0,
            });
        }
        let mut seen = HashMap::new();
        for (id, vector) in ids.iter().zip(&vectors) {
            if vector.len() != dim {
                return Err(ClusterError::DimensionMismatch {
                    id: id.clone(),
                    expected: dim,
                    found: vector.len(),
                });
            }
            if seen.insert(id.clone(), ()).is_some() {
                return Err(ClusterError::DuplicateId(id.clone()));
            }
        }
        Ok(Self {
            class: class.into(),
            ids,
            vectors,
            dim,
        })
    }

    pub fn class(&self) -> &str {
        &self.class
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn vector(&self, i: usize) -> &[f64] {
        &self.vectors[i]
    }

    pub fn position_of(&self, id: &str) -> Option<usize> {
        self.ids.iter().position(|x| x == id)
    }

    /// Subset in the order of `ids`; unknown ids are reported together.
    pub fn select(&self, ids: &[String]) -> Result<EmbeddingSet, ClusterError> {
        let index: HashMap<&str, usize> = self
            .ids
            .iter()
            .enumerate()
            .map(|(i, id)| (id.as_str(), i))
            .collect();
        let missing: Vec<String> = ids
            .iter()
            .filter(|id| !index.contains_key(id.as_str()))
            .cloned()
            .collect();
        if !missing.is_empty() {
            return Err(ClusterError::MissingEmbeddings(missing));
        }
        let vectors = ids
            .iter()
            .map(|id| self.vectors[index[id.as_str()]].clone());
        EmbeddingSet::new(self.class.clone(), ids.to_vec(), vectors.collect())
    }

    /// Text table: header `id dim <d>`, then one line per image with the id
    /// followed by `d` space-separated floats.
    pub fn to_text(&self) -> String {
        let mut out = format!("id dim {}\n", self.dim);
        for (id, vector) in self.ids.iter().zip(&self.vectors) {
            out.push_str(id);
            for v in vector {
                let _ = write!(out, " {v}");
            }
            out.push('\n');
        }
        out
    }
}

/// Parse the text table produced by [`EmbeddingSet::to_text`]. The class is
/// supplied by the caller (usually the file stem).
pub fn parse_embeddings(
    text: &str,
    class: impl Into<String>,
) -> Result<EmbeddingSet, ClusterError> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or(ClusterError::EmptySet)?;
    let parts: Vec<&str> = header.split_whitespace().collect();
    let dim: usize = match parts.as_slice() {
        ["id", "dim", d] => d.parse().map_err(|_| ClusterError::Parse {
            line: 1,
            reason: format!("dimension {d:?} is not a number"),
        })?,
        _ => {
            return Err(ClusterError::Parse {
                line: 1,
                reason: "expected header `id dim <d>`".into(),
            })
        }
    };
    let mut ids = Vec::new();
    let mut vectors = Vec::new();
    for (number, line) in lines {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let mut fields = line.split_whitespace();
        let id = fields.next().expect("non-empty line has a first field");
        let values: Result<Vec<f64>, _> = fields.map(|f| f.parse::<f64>()).collect();
        let values = values.map_err(|e| ClusterError::Parse {
            line: number + 1,
            reason: e.to_string(),
        })?;
        if values.len() != dim {
            return Err(ClusterError::Parse {
                line: number + 1,
                reason: format!("expected {dim} values, found {}", values.len()),
            });
        }
        ids.push(id.to_string());
        vectors.push(values);
    }
    EmbeddingSet::new(class, ids, vectors)
}

/// Directed k-NN affinity graph with Gaussian-kernel weights.
#[derive(Debug, Clone, PartialEq)]
pub struct NeighborGraph {
    n: usize,
    k: usize,
    /// Out-neighbors of each node as `(target, weight)`, ascending target.
    adjacency: Vec<Vec<(usize, f64)>>,
}

impl NeighborGraph {
    /// Graph with no edges; lets a single node flow through PIC unchanged.
    pub fn edgeless(n: usize) -> Self {
        Self {
            n,
            k: 0,
            adjacency: vec![Vec::new(); n],
        }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn neighbors(&self, i: usize) -> &[(usize, f64)] {
        &self.adjacency[i]
    }

    pub fn weight(&self, i: usize, j: usize) -> f64 {
        self.adjacency[i]
            .iter()
            .find(|&&(t, _)| t == j)
            .map_or(0.0, |&(_, w)| w)
    }

    /// `G + G^T` as adjacency lists, ascending neighbor index.
    pub fn symmetrized(&self) -> Vec<Vec<(usize, f64)>> {
        let mut maps: Vec<HashMap<usize, f64>> = vec![HashMap::new(); self.n];
        for (i, row) in self.adjacency.iter().enumerate() {
            for &(j, w) in row {
                *maps[i].entry(j).or_insert(0.0) += w;
                *maps[j].entry(i).or_insert(0.0) += w;
            }
        }
        maps.into_iter()
            .map(|m| {
                let mut row: Vec<(usize, f64)> = m.into_iter().collect();
                row.sort_by_key(|&(j, _)| j);
                row
            })
            .collect()
    }
}

/// Connect every point to its `k` nearest neighbors (Euclidean, ties broken
/// by lower index) with weight `exp(-d^2 / sigma^2)`. With fewer than `k`
/// other points, all of them become neighbors.
pub fn build_knn_graph(
    emb: &EmbeddingSet,
    k: usize,
    sigma: f64,
) -> Result<NeighborGraph, ClusterError> {
    let n = emb.len();
    if n < 2 {
        return Err(ClusterError::DegenerateClass { n });
    }
    if sigma <= 0.0 {
        return Err(ClusterError::InvalidSigma(sigma));
    }
    let k = k.min(n - 1);
    let sigma_sq = sigma * sigma;
    let mut adjacency = Vec::with_capacity(n);
    for i in 0..n {
        let mut by_distance: Vec<(f64, usize)> = (0..n)
            .filter(|&j| j != i)
            .map(|j| (squared_distance(emb.vector(i), emb.vector(j)), j))
            .collect();
        by_distance.sort_by(|a, b| a.partial_cmp(b).expect("finite distances"));
        let mut row: Vec<(usize, f64)> = by_distance[..k]
            .iter()
            .map(|&(d_sq, j)| (j, (-d_sq / sigma_sq).exp()))
            .collect();
        row.sort_by_key(|&(j, _)| j);
        adjacency.push(row);
    }
    Ok(NeighborGraph { n, k, adjacency })
}

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Converged PIC vector plus convergence diagnostics.
#[derive(Debug, Clone)]
pub struct PicEmbedding {
    /// Per-node score after the final iteration.
    pub s: Vec<f64>,
    /// Iterations actually run.
    pub iterations: usize,
    /// L1 norm of `s` after each iteration (should all be 1).
    pub l1_norms: Vec<f64>,
}

/// Iterate `s <- normalize(alpha * (G + G^T) s + (1 - alpha) s)` from the
/// uniform vector until the max-abs change drops below `tol` or `max_iters`
/// is reached. Deterministic: there is no randomness anywhere in PIC.
pub fn pic_embedding(
    graph: &NeighborGraph,
    alpha: f64,
    max_iters: usize,
    tol: f64,
) -> PicEmbedding {
    let n = graph.len();
    if n == 0 {
        return PicEmbedding {
            s: Vec::new(),
            iterations: 0,
            l1_norms: Vec::new(),
        };
    }
    let sym = graph.symmetrized();
    let mut s = vec![1.0 / n as f64; n];
    let mut l1_norms = Vec::new();
    let mut iterations = 0;
    for _ in 0..max_iters {
        let mut next = vec![0.0; n];
        for (i, row) in sym.iter().enumerate() {
            let mut acc = 0.0;
            for &(j, w) in row {
                acc += w * s[j];
            }
            next[i] = alpha * acc + (1.0 - alpha) * s[i];
        }
        let total: f64 = next.iter().map(|v| v.abs()).sum();
        for v in &mut next {
            *v /= total;
        }
        let l1: f64 = next.iter().map(|v| v.abs()).sum();
        l1_norms.push(l1);
        let change = next
            .iter()
            .zip(&s)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        s = next;
        iterations += 1;
        if change < tol {
            break;
        }
    }
    PicEmbedding {
        s,
        iterations,
        l1_norms,
    }
}

/// Cluster labels for one class's images.
///
/// Labels are renumbered by descending cluster size (ties: the cluster whose
/// lowest member index is smaller comes first), so index 0 is always the
/// largest cluster and nearby indices have comparable prominence — the
/// Gaussian preference model downstream relies on that ordering.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClusterAssignment {
    labels: Vec<usize>,
    n_clusters: usize,
}

impl ClusterAssignment {
    /// Renumber arbitrary component ids into size-ordered labels.
    pub fn from_components(components: Vec<usize>) -> Self {
        let mut sizes: HashMap<usize, (usize, usize)> = HashMap::new();
        for (i, &c) in components.iter().enumerate() {
            let entry = sizes.entry(c).or_insert((0, i));
            entry.0 += 1;
        }
        let mut order: Vec<(usize, usize, usize)> = sizes
            .into_iter()
            .map(|(c, (size, first))| (size, first, c))
            .collect();
        order.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
        let relabel: HashMap<usize, usize> = order
            .iter()
            .enumerate()
            .map(|(new, &(_, _, old))| (old, new))
            .collect();
        let labels: Vec<usize> = components.iter().map(|c| relabel[c]).collect();
        Self {
            n_clusters: order.len(),
            labels,
        }
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn n_clusters(&self) -> usize {
        self.n_clusters
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Point indices of one cluster, ascending.
    pub fn members(&self, cluster: usize) -> Vec<usize> {
        self.labels
            .iter()
            .enumerate()
            .filter(|&(_, &l)| l == cluster)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn cluster_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.n_clusters];
        for &l in &self.labels {
            sizes[l] += 1;
        }
        sizes
    }
}

/// Run PIC on an affinity graph and cut it into clusters.
///
/// After the vector converges, each node gets at most one outgoing edge, to
/// the symmetrized neighbor `j` maximizing `w_ij * (s_j - s_i)` when that
/// maximum is positive; a node whose score beats all its neighbors keeps no
/// edge. Weakly connected components of those edges are the clusters.
pub fn pic_cluster(
    graph: &NeighborGraph,
    alpha: f64,
    max_iters: usize,
    tol: f64,
) -> ClusterAssignment {
    let embedding = pic_embedding(graph, alpha, max_iters, tol);
    cut_components(graph, &embedding.s)
}

fn cut_components(graph: &NeighborGraph, s: &[f64]) -> ClusterAssignment {
    let n = graph.len();
    let sym = graph.symmetrized();
    let mut union = UnionFind::new(n);
    for (i, row) in sym.iter().enumerate() {
        let mut best: Option<(usize, f64)> = None;
        // Ascending neighbor order plus strict improvement makes ties land
        // on the lowest index.
        for &(j, w) in row {
            let score = w * (s[j] - s[i]);
            if best.is_none_or(|(_, b)| score > b) {
                best = Some((j, score));
            }
        }
        if let Some((j, score)) = best {
            if score > 0.0 {
                union.join(i, j);
            }
        }
    }
    let components: Vec<usize> = (0..n).map(|i| union.root(i)).collect();
    ClusterAssignment::from_components(components)
}

struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
        }
    }

    fn root(&mut self, mut i: usize) -> usize {
        while self.parent[i] != i {
            self.parent[i] = self.parent[self.parent[i]];
            i = self.parent[i];
        }
        i
    }

    fn join(&mut self, a: usize, b: usize) {
        let ra = self.root(a);
        let rb = self.root(b);
        if ra != rb {
            self.parent[ra.max(rb)] = ra.min(rb);
        }
    }
}

/// Cluster assignment for a named class, keyed by image id.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassClusters {
    pub class: String,
    pub ids: Vec<String>,
    pub assignment: ClusterAssignment,
}

impl ClassClusters {
    pub fn cluster_of(&self, id: &str) -> Option<usize> {
        let i = self.ids.iter().position(|x| x == id)?;
        Some(self.assignment.labels()[i])
    }

    /// Image ids of one cluster, in input order.
    pub fn cluster_members(&self, cluster: usize) -> Vec<&str> {
        self.assignment
            .members(cluster)
            .into_iter()
            .map(|i| self.ids[i].as_str())
            .collect()
    }

    /// CSV rows `image_id,class,cluster` under a header line.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("image_id,class,cluster\n");
        for (id, &label) in self.ids.iter().zip(self.assignment.labels()) {
            let _ = writeln!(out, "{id},{},{label}", self.class);
        }
        out
    }
}

/// Cluster one class end to end: select the listed embeddings, build the
/// affinity graph and run PIC. A single-image class becomes one singleton
/// cluster without graph construction.
pub fn cluster_class(
    class: impl Into<String>,
    image_ids: &[String],
    embeddings: &EmbeddingSet,
) -> Result<ClassClusters, ClusterError> {
    let class = class.into();
    let subset = embeddings.select(image_ids)?;
    let assignment = if subset.len() == 1 {
        ClusterAssignment::from_components(vec![0])
    } else {
        let graph = build_knn_graph(&subset, DEFAULT_K, DEFAULT_SIGMA)?;
        pic_cluster(&graph, DEFAULT_ALPHA, DEFAULT_MAX_ITERS, DEFAULT_TOL)
    };
    Ok(ClassClusters {
        class,
        ids: image_ids.to_vec(),
        assignment,
    })
}

/// Parse an assignment CSV (as written by [`ClassClusters::to_csv`],
/// possibly concatenated over classes) back into per-class assignments,
/// in order of first appearance.
pub fn parse_assignments(text: &str) -> Result<Vec<ClassClusters>, ClusterError> {
    let mut by_class: Vec<(String, Vec<String>, Vec<usize>)> = Vec::new();
    for (number, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line == "image_id,class,cluster" {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 3 {
            return Err(ClusterError::ParseAssignment {
                line: number + 1,
                reason: format!("expected 3 comma-separated fields, found {}", fields.len()),
            });
        }
        let cluster: usize = fields[2]
            .parse()
            .map_err(|_| ClusterError::ParseAssignment {
                line: number + 1,
                reason: format!("cluster index {:?} is not a number", fields[2]),
            })?;
        let class = fields[1];
        let slot = match by_class.iter_mut().find(|(c, _, _)| c == class) {
            Some(slot) => slot,
            None => {
                by_class.push((class.to_string(), Vec::new(), Vec::new()));
                by_class.last_mut().expect("just pushed")
            }
        };
        slot.1.push(fields[0].to_string());
        slot.2.push(cluster);
    }
    if by_class.is_empty() {
        return Err(ClusterError::EmptySet);
    }
    by_class
        .into_iter()
        .map(|(class, ids, labels)| {
            let n_clusters = labels.iter().copied().max().map_or(0, |m| m + 1);
            let mut sizes = vec![0usize; n_clusters];
            for &l in &labels {
                sizes[l] += 1;
            }
            if let Some(empty) = sizes.iter().position(|&s| s == 0) {
                return Err(ClusterError::ParseAssignment {
                    line: 0,
                    reason: format!("class {class:?} has no member in cluster {empty}"),
                });
            }
            Ok(ClassClusters {
                class,
                ids,
                assignment: ClusterAssignment { labels, n_clusters },
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RandomSource;
    use crate::synthetic::blob_embeddings;
    use proptest::prelude::*;

    fn tiny_set(vectors: Vec<Vec<f64>>) -> EmbeddingSet {
        let ids = (0..vectors.len()).map(|i| format!("img_{i:03}")).collect();
        EmbeddingSet::new("test_class", ids, vectors).unwrap()
    }

    // --- embeddings ---

    #[test]
    fn embedding_set_rejects_ragged_vectors() {
        let err = EmbeddingSet::new(
            "c",
            vec!["a".into(), "b".into()],
            vec![vec![1.0, 2.0], vec![1.0]],
        )
        .unwrap_err();
        assert_eq!(
            err,
            ClusterError::DimensionMismatch {
                id: "b".into(),
                expected: 2,
                found: 1
            }
        );
    }

    #[test]
    fn embedding_set_rejects_duplicate_ids() {
        let err = EmbeddingSet::new(
            "c",
            vec!["a".into(), "a".into()],
            vec![vec![1.0], vec![2.0]],
        )
        .unwrap_err();
        assert_eq!(err, ClusterError::DuplicateId("a".into()));
    }

    #[test]
    fn embedding_text_round_trips() {
        let set = tiny_set(vec![vec![0.25, -1.5], vec![3.0, 0.0]]);
        let text = set.to_text();
        assert!(text.starts_with("id dim 2\n"));
        let parsed = parse_embeddings(&text, "test_class").unwrap();
        assert_eq!(parsed, set);
    }

    #[test]
    fn embedding_parse_reports_bad_lines() {
        let err = parse_embeddings("id dim 2\nimg 1.0 oops\n", "c").unwrap_err();
        assert!(matches!(err, ClusterError::Parse { line: 2, .. }));
        let err = parse_embeddings("wrong header\n", "c").unwrap_err();
        assert!(matches!(err, ClusterError::Parse { line: 1, .. }));
    }

    // --- k-NN graph ---

    #[test]
    fn coincident_points_get_weight_one() {
        let set = tiny_set(vec![vec![1.0, 1.0], vec![1.0, 1.0], vec![5.0, 5.0]]);
        let graph = build_knn_graph(&set, 1, 0.5).unwrap();
        assert_eq!(graph.weight(0, 1), 1.0);
        assert_eq!(graph.weight(1, 0), 1.0);
    }

    #[test]
    fn kernel_weight_matches_hand_value() {
        // Distance 0.5 with sigma 0.5: exp(-0.25 / 0.25) = exp(-1).
        let set = tiny_set(vec![vec![0.0], vec![0.5]]);
        let graph = build_knn_graph(&set, 10, 0.5).unwrap();
        assert!((graph.weight(0, 1) - (-1.0f64).exp()).abs() < 1e-12);
    }

    #[test]
    fn neighbor_count_clamps_to_population() {
        let set = tiny_set(vec![vec![0.0], vec![1.0], vec![2.0], vec![3.0], vec![4.0]]);
        let graph = build_knn_graph(&set, 10, 0.5).unwrap();
        for i in 0..5 {
            assert_eq!(graph.neighbors(i).len(), 4);
            assert_eq!(graph.weight(i, i), 0.0, "diagonal must stay zero");
        }
    }

    #[test]
    fn nearest_neighbors_win() {
        let set = tiny_set(vec![vec![0.0], vec![0.1], vec![0.2], vec![9.0]]);
        let graph = build_knn_graph(&set, 2, 0.5).unwrap();
        let targets: Vec<usize> = graph.neighbors(0).iter().map(|&(j, _)| j).collect();
        assert_eq!(targets, vec![1, 2]);
    }

    #[test]
    fn distance_ties_break_by_lower_index() {
        // Points 1 and 2 are equidistant from point 0.
        let set = tiny_set(vec![vec![0.0, 0.0], vec![1.0, 0.0], vec![-1.0, 0.0]]);
        let graph = build_knn_graph(&set, 1, 0.5).unwrap();
        let targets: Vec<usize> = graph.neighbors(0).iter().map(|&(j, _)| j).collect();
        assert_eq!(targets, vec![1]);
    }

    #[test]
    fn graph_needs_two_points() {
        let set = tiny_set(vec![vec![1.0]]);
        assert_eq!(
            build_knn_graph(&set, 10, 0.5).unwrap_err(),
            ClusterError::DegenerateClass { n: 1 }
        );
    }

    #[test]
    fn symmetrization_sums_both_directions() {
        // 0 and 1 pick each other; the far point 2 picks 1 but nobody picks
        // it back at k=1.
        let set = tiny_set(vec![vec![0.0], vec![0.1], vec![0.5]]);
        let graph = build_knn_graph(&set, 1, 0.5).unwrap();
        let sym = graph.symmetrized();
        let w01 = graph.weight(0, 1);
        let entry = sym[0].iter().find(|&&(j, _)| j == 1).unwrap().1;
        assert!((entry - 2.0 * w01).abs() < 1e-15, "mutual edge doubles");
        let w21 = graph.weight(2, 1);
        let entry = sym[1].iter().find(|&&(j, _)| j == 2).unwrap().1;
        assert!((entry - w21).abs() < 1e-15, "one-way edge carries over");
    }

    // --- PIC ---

    #[test]
    fn pic_preserves_l1_norm_every_iteration() {
        let mut rng = RandomSource::new(5);
        let set = blob_embeddings("c", 3, 20, 16, 0.1, &mut rng).0;
        let graph = build_knn_graph(&set, DEFAULT_K, DEFAULT_SIGMA).unwrap();
        let embedding = pic_embedding(&graph, DEFAULT_ALPHA, DEFAULT_MAX_ITERS, DEFAULT_TOL);
        assert!(embedding.iterations >= 1);
        for (i, &l1) in embedding.l1_norms.iter().enumerate() {
            assert!((l1 - 1.0).abs() <= 1e-9, "iteration {i}: |s|_1 = {l1}");
        }
    }

    #[test]
    fn pic_single_node_is_one_singleton() {
        let graph = NeighborGraph::edgeless(1);
        let assignment = pic_cluster(&graph, DEFAULT_ALPHA, DEFAULT_MAX_ITERS, DEFAULT_TOL);
        assert_eq!(assignment.n_clusters(), 1);
        assert_eq!(assignment.labels(), &[0]);
    }

    #[test]
    fn pic_recovers_separated_blobs() {
        for c in 1..=3usize {
            let mut rng = RandomSource::new(41);
            let (set, truth) = blob_embeddings("c", c, 20, 16, 0.1, &mut rng);
            let graph = build_knn_graph(&set, DEFAULT_K, DEFAULT_SIGMA).unwrap();
            let assignment = pic_cluster(&graph, DEFAULT_ALPHA, DEFAULT_MAX_ITERS, DEFAULT_TOL);
            assert_eq!(assignment.n_clusters(), c, "blob count {c}");
            // Equal-size blobs generated blob-major keep their generation
            // order under the size-then-first-member relabeling.
            assert_eq!(assignment.labels(), &truth[..], "blob count {c}");
        }
    }

    #[test]
    fn pic_is_deterministic() {
        let mut rng = RandomSource::new(77);
        let set = blob_embeddings("c", 2, 20, 16, 0.1, &mut rng).0;
        let graph = build_knn_graph(&set, DEFAULT_K, DEFAULT_SIGMA).unwrap();
        let a = pic_cluster(&graph, DEFAULT_ALPHA, DEFAULT_MAX_ITERS, DEFAULT_TOL);
        let b = pic_cluster(&graph, DEFAULT_ALPHA, DEFAULT_MAX_ITERS, DEFAULT_TOL);
        assert_eq!(a, b);
    }

    #[test]
    fn labels_are_ordered_by_cluster_size() {
        // Component ids 7 (3 members), 2 (1 member), 4 (2 members).
        let assignment = ClusterAssignment::from_components(vec![7, 7, 2, 4, 7, 4]);
        assert_eq!(assignment.n_clusters(), 3);
        assert_eq!(assignment.labels(), &[0, 0, 2, 1, 0, 1]);
        assert_eq!(assignment.cluster_sizes(), vec![3, 2, 1]);
    }

    // --- cluster_class and persistence ---

    #[test]
    fn single_image_class_is_one_cluster() {
        let set = tiny_set(vec![vec![1.0], vec![2.0]]);
        let clusters = cluster_class("test_class", &["img_000".into()], &set).unwrap();
        assert_eq!(clusters.assignment.n_clusters(), 1);
        assert_eq!(clusters.cluster_of("img_000"), Some(0));
    }

    #[test]
    fn missing_embeddings_are_listed() {
        let set = tiny_set(vec![vec![1.0], vec![2.0]]);
        let err = cluster_class(
            "test_class",
            &["img_000".into(), "ghost_1".into(), "ghost_2".into()],
            &set,
        )
        .unwrap_err();
        assert_eq!(
            err,
            ClusterError::MissingEmbeddings(vec!["ghost_1".into(), "ghost_2".into()])
        );
    }

    #[test]
    fn well_separated_groups_split() {
        let mut rng = RandomSource::new(9);
        let (set, _) = blob_embeddings("test_class", 3, 20, 16, 0.1, &mut rng);
        let clusters = cluster_class("test_class", set.ids(), &set).unwrap();
        assert!(clusters.assignment.n_clusters() >= 2);
    }

    #[test]
    fn assignment_csv_round_trips() {
        let mut rng = RandomSource::new(13);
        let (set, _) = blob_embeddings("ramen", 2, 20, 8, 0.1, &mut rng);
        let clusters = cluster_class("ramen", set.ids(), &set).unwrap();
        let csv = clusters.to_csv();
        assert!(csv.starts_with("image_id,class,cluster\n"));
        let parsed = parse_assignments(&csv).unwrap();
        assert_eq!(parsed.len(), 1);
        assert_eq!(parsed[0], clusters);
    }

    #[test]
    fn assignment_parse_rejects_bad_rows() {
        let err = parse_assignments("image_id,class,cluster\na,b\n").unwrap_err();
        assert!(matches!(err, ClusterError::ParseAssignment { line: 2, .. }));
        let err = parse_assignments("a,b,x\n").unwrap_err();
        assert!(matches!(err, ClusterError::ParseAssignment { line: 1, .. }));
    }

    // --- properties ---

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn pic_labels_are_always_valid(
            seed in 0u64..1000,
            n in 2usize..40,
            dim in 1usize..6,
        ) {
            let mut rng = RandomSource::new(seed);
            let ids: Vec<String> = (0..n).map(|i| format!("p{i}")).collect();
            let vectors: Vec<Vec<f64>> = (0..n)
                .map(|_| (0..dim).map(|_| rng.range(-2.0..2.0)).collect())
                .collect();
            let set = EmbeddingSet::new("c", ids, vectors).unwrap();
            let graph = build_knn_graph(&set, DEFAULT_K, DEFAULT_SIGMA).unwrap();
            let assignment = pic_cluster(&graph, DEFAULT_ALPHA, DEFAULT_MAX_ITERS, DEFAULT_TOL);
            prop_assert_eq!(assignment.len(), n);
            prop_assert!(assignment.n_clusters() >= 1);
            let sizes = assignment.cluster_sizes();
            prop_assert!(sizes.iter().all(|&s| s > 0), "clusters must be non-empty");
            // Size ordering is part of the labeling contract.
            prop_assert!(sizes.windows(2).all(|w| w[0] >= w[1]));
            for &l in assignment.labels() {
                prop_assert!(l < assignment.n_clusters());
            }
        }

        #[test]
        fn knn_rows_are_bounded_and_clean(
            seed in 0u64..1000,
            n in 2usize..30,
            k in 1usize..15,
        ) {
            let mut rng = RandomSource::new(seed);
            let ids: Vec<String> = (0..n).map(|i| format!("p{i}")).collect();
            let vectors: Vec<Vec<f64>> = (0..n)
                .map(|_| vec![rng.range(-1.0..1.0), rng.range(-1.0..1.0)])
                .collect();
            let set = EmbeddingSet::new("c", ids, vectors).unwrap();
            let graph = build_knn_graph(&set, k, DEFAULT_SIGMA).unwrap();
            for i in 0..n {
                let row = graph.neighbors(i);
                prop_assert!(row.len() <= k);
                prop_assert_eq!(row.len(), k.min(n - 1));
                for &(j, w) in row {
                    prop_assert!(j != i, "diagonal must stay empty");
                    prop_assert!(w > 0.0 && w <= 1.0, "weight {} out of (0,1]", w);
                }
            }
        }
    }
}
