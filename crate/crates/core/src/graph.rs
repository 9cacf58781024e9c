//! Shortest paths on dense weighted graphs.
//!
//! Graphs are stored as dense `D x D` weight arrays; an absent edge is kept as
//! `+inf` internally and never escapes into a distance matrix. Dijkstra is the
//! array-scan `O(D^2)` variant, which is optimal on the complete graphs the
//! projector builds.

use std::collections::VecDeque;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrices::{DissimilarityMatrix, Matrix, MetricMatrix, DEFAULT_METRIC_TOL};

/// Largest graph [`enumerate_simple_paths`] will accept.
pub const ENUMERATION_LIMIT: usize = 10;

const ABSENT: f64 = f64::INFINITY;

/// Symmetric graph with strictly positive edge weights.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedGraph {
    dim: usize,
    weights: Vec<f64>,
}

impl WeightedGraph {
    /// Complete graph using the off-diagonal entries of `w` as weights.
    pub fn complete(w: &Matrix) -> Result<Self> {
        let dim = w.dim();
        let mut weights = vec![ABSENT; dim * dim];
        for i in 0..dim {
            for j in 0..dim {
                if i != j {
                    weights[i * dim + j] = w.get(i, j);
                }
            }
        }
        Self::validated(dim, weights)
    }

    /// Graph whose edges are the `true` entries of `mask`, weighted by `w`.
    pub fn masked(mask: &AdjacencyMask, w: &Matrix) -> Result<Self> {
        if mask.dim() != w.dim() {
            return Err(Error::Dimension(format!(
                "mask is {}x{} but weights are {}x{}",
                mask.dim(),
                mask.dim(),
                w.dim(),
                w.dim()
            )));
        }
        let dim = w.dim();
        let mut weights = vec![ABSENT; dim * dim];
        for i in 0..dim {
            for j in 0..dim {
                if mask.has_edge(i, j) {
                    weights[i * dim + j] = w.get(i, j);
                }
            }
        }
        Self::validated(dim, weights)
    }

    /// Mask edges with unit weight (hop-count distances).
    pub fn unit(mask: &AdjacencyMask) -> Self {
        let dim = mask.dim();
        let weights = (0..dim * dim)
            .map(|idx| if mask.has_edge(idx / dim, idx % dim) { 1.0 } else { ABSENT })
            .collect();
        WeightedGraph { dim, weights }
    }

    fn validated(dim: usize, weights: Vec<f64>) -> Result<Self> {
        for i in 0..dim {
            for j in 0..dim {
                let w = weights[i * dim + j];
                if w != weights[j * dim + i] {
                    return Err(Error::InvalidGraph(format!(
                        "weights ({i},{j}) and ({j},{i}) differ"
                    )));
                }
                if w == ABSENT {
                    continue;
                }
                if !(w > 0.0) || !w.is_finite() {
                    return Err(Error::InvalidGraph(format!(
                        "edge ({i},{j}) has non-positive or non-finite weight {w}"
                    )));
                }
            }
        }
        Ok(WeightedGraph { dim, weights })
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Weight of edge `(i, j)`, or `None` when absent.
    #[inline]
    pub fn weight(&self, i: usize, j: usize) -> Option<f64> {
        let w = self.weights[i * self.dim + j];
        (w != ABSENT).then_some(w)
    }

    #[inline]
    fn raw_weight(&self, i: usize, j: usize) -> f64 {
        self.weights[i * self.dim + j]
    }

    fn check_node(&self, n: usize) -> Result<()> {
        if n >= self.dim {
            Err(Error::Argument(format!("node {n} out of range for {} nodes", self.dim)))
        } else {
            Ok(())
        }
    }
}

/// A simple path stored as its node sequence.
///
/// The edge-indicator vector γ (indexed by `D * a + b` for a directed edge
/// `a -> b`) is a derived view, see [`PathTrace::gamma`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathTrace {
    pub nodes: Vec<usize>,
    pub length: f64,
}

impl PathTrace {
    pub fn source(&self) -> usize {
        self.nodes[0]
    }

    pub fn target(&self) -> usize {
        *self.nodes.last().expect("path has at least one node")
    }

    /// Consecutive `(a, b)` pairs along the path.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.nodes.windows(2).map(|w| (w[0], w[1]))
    }

    pub fn hops(&self) -> usize {
        self.nodes.len().saturating_sub(1)
    }

    /// `γᵀ vec(m)`: the sum of `m` over the path edges, in path order.
    pub fn dot(&self, m: &Matrix) -> f64 {
        self.edges().map(|(a, b)| m.get(a, b)).sum()
    }

    /// Dense directed edge indicator of length `dim * dim`.
    pub fn gamma(&self, dim: usize) -> Vec<f64> {
        let mut g = vec![0.0; dim * dim];
        for (a, b) in self.edges() {
            g[a * dim + b] = 1.0;
        }
        g
    }

    /// Same path walked backwards; the length is kept as is.
    pub fn reversed(&self) -> PathTrace {
        let mut nodes = self.nodes.clone();
        nodes.reverse();
        PathTrace {
            nodes,
            length: self.length,
        }
    }
}

/// Symmetric boolean adjacency with no self-loops.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AdjacencyMask {
    dim: usize,
    mask: Vec<bool>,
}

impl AdjacencyMask {
    pub fn empty(dim: usize) -> Self {
        AdjacencyMask {
            dim,
            mask: vec![false; dim * dim],
        }
    }

    pub fn complete(dim: usize) -> Self {
        let mut m = Self::empty(dim);
        for i in 0..dim {
            for j in (i + 1)..dim {
                m.add_edge(i, j);
            }
        }
        m
    }

    /// Parses a dense 0/1 matrix, requiring symmetry and an empty diagonal.
    pub fn from_matrix(m: &Matrix) -> Result<Self> {
        let dim = m.dim();
        let mut mask = Self::empty(dim);
        for i in 0..dim {
            for j in 0..dim {
                let v = m.get(i, j);
                if v != 0.0 && v != 1.0 {
                    return Err(Error::InvalidGraph(format!("entry ({i},{j}) = {v} is not 0 or 1")));
                }
                if v != m.get(j, i) {
                    return Err(Error::InvalidGraph(format!("mask is asymmetric at ({i},{j})")));
                }
                if v == 1.0 {
                    if i == j {
                        return Err(Error::InvalidGraph(format!("self-loop at node {i}")));
                    }
                    mask.mask[i * dim + j] = true;
                }
            }
        }
        Ok(mask)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.mask[i * self.dim + j]
    }

    /// Adds the undirected edge `{i, j}`; self-loops are ignored.
    pub fn add_edge(&mut self, i: usize, j: usize) {
        if i != j {
            self.mask[i * self.dim + j] = true;
            self.mask[j * self.dim + i] = true;
        }
    }

    pub fn edge_count(&self) -> usize {
        self.mask.iter().filter(|&&b| b).count() / 2
    }

    pub fn neighbors(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        (0..self.dim).filter(move |&j| self.has_edge(i, j))
    }

    pub fn to_matrix(&self) -> Matrix {
        Matrix::from_fn(self.dim, |i, j| if self.has_edge(i, j) { 1.0 } else { 0.0 })
    }

    /// Restriction to the listed nodes, in the given order.
    pub fn induced(&self, nodes: &[usize]) -> AdjacencyMask {
        let mut out = AdjacencyMask::empty(nodes.len());
        for (a, &i) in nodes.iter().enumerate() {
            for (b, &j) in nodes.iter().enumerate() {
                if self.has_edge(i, j) {
                    out.mask[a * nodes.len() + b] = true;
                }
            }
        }
        out
    }

    /// Connected components as sorted node lists, ordered by smallest member.
    pub fn components(&self) -> Vec<Vec<usize>> {
        let mut seen = vec![false; self.dim];
        let mut comps = Vec::new();
        for start in 0..self.dim {
            if seen[start] {
                continue;
            }
            let mut comp = vec![start];
            seen[start] = true;
            let mut queue = VecDeque::from([start]);
            while let Some(u) = queue.pop_front() {
                for v in self.neighbors(u) {
                    if !seen[v] {
                        seen[v] = true;
                        comp.push(v);
                        queue.push_back(v);
                    }
                }
            }
            comp.sort_unstable();
            comps.push(comp);
        }
        comps
    }
}

/// Breadth-first reachability from node 0. Graphs with at most one node are connected.
pub fn is_connected(mask: &AdjacencyMask) -> bool {
    if mask.dim() <= 1 {
        return true;
    }
    let mut seen = vec![false; mask.dim()];
    seen[0] = true;
    let mut count = 1;
    let mut queue = VecDeque::from([0]);
    while let Some(u) = queue.pop_front() {
        for v in mask.neighbors(u) {
            if !seen[v] {
                seen[v] = true;
                count += 1;
                queue.push_back(v);
            }
        }
    }
    count == mask.dim()
}

/// Edges `{i, j}` with `m[i][j] < xi`.
pub fn threshold_graph(m: &Matrix, xi: f64) -> AdjacencyMask {
    assert!(xi > 0.0, "threshold must be positive");
    let mut mask = AdjacencyMask::empty(m.dim());
    for i in 0..m.dim() {
        for j in (i + 1)..m.dim() {
            if m.get(i, j) < xi {
                mask.add_edge(i, j);
            }
        }
    }
    mask
}

/// Dijkstra state for one source: tentative distances and predecessors.
struct ShortestPathTree {
    dist: Vec<f64>,
    pred: Vec<usize>,
}

const NO_PRED: usize = usize::MAX;

/// Array-scan Dijkstra from `source`, stopping once `stop_at` is settled.
///
/// The next node settled is the unsettled one with the smallest distance,
/// smaller index first. A relaxation replaces the current label when
/// `(dist, pred)` is lexicographically smaller, so among equal-length paths
/// the predecessor with the smaller index wins.
fn dijkstra(g: &WeightedGraph, source: usize, stop_at: Option<usize>) -> ShortestPathTree {
    let d = g.dim;
    let mut dist = vec![ABSENT; d];
    let mut pred = vec![NO_PRED; d];
    let mut settled = vec![false; d];
    dist[source] = 0.0;
    for _ in 0..d {
        let mut u = NO_PRED;
        let mut best = ABSENT;
        for v in 0..d {
            if !settled[v] && dist[v] < best {
                best = dist[v];
                u = v;
            }
        }
        if u == NO_PRED {
            break;
        }
        settled[u] = true;
        if Some(u) == stop_at {
            break;
        }
        let row = &g.weights[u * d..(u + 1) * d];
        for v in 0..d {
            if settled[v] || row[v] == ABSENT {
                continue;
            }
            let candidate = best + row[v];
            if candidate < dist[v] || (candidate == dist[v] && u < pred[v]) {
                dist[v] = candidate;
                pred[v] = u;
            }
        }
    }
    ShortestPathTree { dist, pred }
}

impl ShortestPathTree {
    fn trace(&self, g: &WeightedGraph, source: usize, target: usize) -> Result<PathTrace> {
        if !self.dist[target].is_finite() {
            return Err(Error::Unreachable {
                i: source,
                j: target,
            });
        }
        let mut nodes = vec![target];
        let mut cur = target;
        while cur != source {
            cur = self.pred[cur];
            nodes.push(cur);
        }
        nodes.reverse();
        let length = nodes.windows(2).map(|w| g.raw_weight(w[0], w[1])).sum();
        Ok(PathTrace { nodes, length })
    }
}

/// Minimum-length path from `i` to `j` with the deterministic tie-break of
/// the internal Dijkstra (smaller predecessor index wins).
pub fn shortest_path_pair(g: &WeightedGraph, i: usize, j: usize) -> Result<PathTrace> {
    g.check_node(i)?;
    g.check_node(j)?;
    if i == j {
        return Err(Error::Argument(format!("source and target are both node {i}")));
    }
    dijkstra(g, i, Some(j)).trace(g, i, j)
}

/// Canonical trace for the unordered pair: computed from the smaller index and
/// reversed when `i > j`, so both orientations share one path.
pub(crate) fn canonical_pair(g: &WeightedGraph, i: usize, j: usize) -> Result<PathTrace> {
    if i < j {
        shortest_path_pair(g, i, j)
    } else {
        shortest_path_pair(g, j, i).map(|p| p.reversed())
    }
}

/// Canonical shortest paths from `source` to every `t > source`.
pub(crate) fn forward_traces(g: &WeightedGraph, source: usize) -> Result<Vec<PathTrace>> {
    let tree = dijkstra(g, source, None);
    ((source + 1)..g.dim)
        .map(|t| tree.trace(g, source, t))
        .collect()
}

/// All-pairs shortest paths, one Dijkstra run per source.
///
/// Entry `(i, j)` for `i < j` comes from the run rooted at `i` and is mirrored,
/// so the result is exactly symmetric.
pub fn all_pairs_traces(g: &WeightedGraph) -> Result<Vec<Vec<PathTrace>>> {
    (0..g.dim)
        .into_par_iter()
        .map(|s| forward_traces(g, s))
        .collect::<Result<Vec<_>>>()
        .map_err(|e| match e {
            Error::Unreachable { i, j } => Error::Disconnected { i, j },
            other => other,
        })
}

/// Intrinsic (shortest-path) metric of a connected graph.
pub fn path_length_metric(g: &WeightedGraph) -> Result<MetricMatrix> {
    let traces = all_pairs_traces(g)?;
    let metric = metric_from_forward_traces(g.dim, &traces);
    promote_path_metric(metric)
}

pub(crate) fn metric_from_forward_traces(dim: usize, traces: &[Vec<PathTrace>]) -> Matrix {
    let mut m = Matrix::zeros(dim);
    for (i, row) in traces.iter().enumerate() {
        for t in row {
            let j = t.target();
            m.set(i, j, t.length);
            m.set(j, i, t.length);
        }
    }
    m
}

/// Promotion of a shortest-path closure. Path sums accumulate rounding in
/// proportion to their magnitude, so the absolute tolerance is scaled by the
/// largest entry when that exceeds one.
pub(crate) fn promote_path_metric(m: Matrix) -> Result<MetricMatrix> {
    let tol = DEFAULT_METRIC_TOL * m.max_abs().max(1.0);
    let diss = DissimilarityMatrix::new(m)?;
    MetricMatrix::try_from_dissimilarity(diss, tol)
}

/// Every simple path from `i` to `j`, in depth-first order over increasing
/// neighbor index. Only for graphs with at most [`ENUMERATION_LIMIT`] nodes.
pub fn enumerate_simple_paths(g: &WeightedGraph, i: usize, j: usize) -> Result<Vec<PathTrace>> {
    if g.dim > ENUMERATION_LIMIT {
        return Err(Error::SizeGuard {
            dim: g.dim,
            limit: ENUMERATION_LIMIT,
        });
    }
    g.check_node(i)?;
    g.check_node(j)?;
    if i == j {
        return Err(Error::Argument(format!("source and target are both node {i}")));
    }
    let mut out = Vec::new();
    let mut on_path = vec![false; g.dim];
    let mut stack = vec![i];
    on_path[i] = true;
    extend_paths(g, j, &mut stack, &mut on_path, &mut out);
    Ok(out)
}

fn extend_paths(
    g: &WeightedGraph,
    target: usize,
    stack: &mut Vec<usize>,
    on_path: &mut [bool],
    out: &mut Vec<PathTrace>,
) {
    let u = *stack.last().unwrap();
    for v in 0..g.dim {
        if on_path[v] || g.weight(u, v).is_none() {
            continue;
        }
        stack.push(v);
        if v == target {
            let length = stack.windows(2).map(|w| g.raw_weight(w[0], w[1])).sum();
            out.push(PathTrace {
                nodes: stack.clone(),
                length,
            });
        } else {
            on_path[v] = true;
            extend_paths(g, target, stack, on_path, out);
            on_path[v] = false;
        }
        stack.pop();
    }
}
