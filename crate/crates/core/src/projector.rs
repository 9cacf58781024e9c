//! The intrinsic-metric projector.
//!
//! `project(X)` symmetrizes `X`, applies softplus to obtain strictly positive
//! edge weights on the complete graph, and returns its shortest-path metric
//! together with the canonical path behind every entry. The diagonal is zero
//! by construction.

use crate::error::{Error, Result};
use crate::graph::{self, PathTrace, WeightedGraph};
use crate::matrices::{softplus, symmetrize, Matrix, MetricMatrix, RawSymmetricMatrix};

/// Projected metric plus the canonical shortest path of every ordered pair.
#[derive(Debug, Clone)]
pub struct ProjectionResult {
    pub metric: MetricMatrix,
    traces: Vec<Vec<PathTrace>>,
}

impl ProjectionResult {
    /// Canonical path from `i` to `j`, `None` on the diagonal.
    pub fn trace(&self, i: usize, j: usize) -> Option<PathTrace> {
        match i.cmp(&j) {
            std::cmp::Ordering::Equal => None,
            std::cmp::Ordering::Less => Some(self.traces[i][j - i - 1].clone()),
            std::cmp::Ordering::Greater => Some(self.traces[j][i - j - 1].reversed()),
        }
    }

    /// Canonical paths for `i < j`, without cloning.
    pub fn forward_traces(&self) -> impl Iterator<Item = &PathTrace> {
        self.traces.iter().flatten()
    }

    pub fn dim(&self) -> usize {
        self.metric.dim()
    }
}

/// Edge weights `softplus(X)` of the complete graph behind the projection.
///
/// Weights are floored at the smallest positive normal float so that very
/// negative inputs (`x < -745`, where `e^x` underflows) still give a valid graph.
pub fn softplus_weights(x: &RawSymmetricMatrix) -> WeightedGraph {
    let w = Matrix::from_fn(x.dim(), |i, j| {
        if i == j {
            0.0
        } else {
            softplus(x.get(i, j)).max(f64::MIN_POSITIVE)
        }
    });
    WeightedGraph::complete(&w).expect("softplus weights are positive and symmetric")
}

/// Projects an arbitrary square matrix after symmetrizing it.
pub fn project_any(x: &Matrix) -> ProjectionResult {
    project(&symmetrize(x))
}

/// Full projection: one Dijkstra run per source node.
pub fn project(x: &RawSymmetricMatrix) -> ProjectionResult {
    let g = softplus_weights(x);
    let traces = graph::all_pairs_traces(&g).expect("complete graphs are connected");
    let metric = graph::metric_from_forward_traces(g.dim(), &traces);
    let metric = graph::promote_path_metric(metric)
        .expect("shortest-path closure of positive weights satisfies the metric axioms");
    ProjectionResult { metric, traces }
}

/// Single-pair projection: one early-stopping Dijkstra run, `O(D^2)`.
///
/// Returns the same path as `project(x).trace(i, j)`.
pub fn project_pair(x: &RawSymmetricMatrix, i: usize, j: usize) -> Result<PathTrace> {
    if i == j {
        return Err(Error::Argument(format!("projected pair needs distinct nodes, got {i} twice")));
    }
    let g = softplus_weights(x);
    graph::canonical_pair(&g, i, j)
}

/// Soft-min `-T⁻¹ log Σ_γ exp(-T γᵀ softplus(x))` over every simple `i -> j`
/// path, evaluated with a log-sum-exp shift. Enumerates paths, so only for
/// matrices up to [`graph::ENUMERATION_LIMIT`] nodes.
pub fn soft_min_length(x: &RawSymmetricMatrix, i: usize, j: usize, temperature: f64) -> Result<f64> {
    if !(temperature > 0.0) {
        return Err(Error::Argument(format!("temperature must be positive, got {temperature}")));
    }
    if x.dim() > graph::ENUMERATION_LIMIT {
        return Err(Error::SizeGuard {
            dim: x.dim(),
            limit: graph::ENUMERATION_LIMIT,
        });
    }
    let g = softplus_weights(x);
    let lengths: Vec<f64> = graph::enumerate_simple_paths(&g, i, j)?
        .into_iter()
        .map(|p| p.length)
        .collect();
    Ok(soft_min(&lengths, temperature))
}

/// `-T⁻¹ log Σ exp(-T l)` for a nonempty slice of lengths.
pub fn soft_min(lengths: &[f64], temperature: f64) -> f64 {
    let min = lengths.iter().copied().fold(f64::INFINITY, f64::min);
    let tail: f64 = lengths.iter().map(|&l| (-temperature * (l - min)).exp()).sum();
    min - tail.ln() / temperature
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrices::check_metric;
    use approx::assert_relative_eq;

    fn raw(rows: &[Vec<f64>]) -> RawSymmetricMatrix {
        RawSymmetricMatrix::new(Matrix::from_rows(rows).unwrap()).unwrap()
    }

    fn example3() -> RawSymmetricMatrix {
        raw(&[
            vec![0.0, -2.0, 5.0],
            vec![-2.0, 0.0, -2.0],
            vec![5.0, -2.0, 0.0],
        ])
    }

    #[test]
    fn single_edge_projects_to_softplus() {
        let p = project(&raw(&[vec![0.0, 0.0], vec![0.0, 0.0]]));
        assert_relative_eq!(p.metric.get(0, 1), std::f64::consts::LN_2, epsilon = 1e-15);
        assert_eq!(p.metric.get(0, 0), 0.0);
    }

    #[test]
    fn detour_beats_expensive_edge() {
        let p = project(&example3());
        // 2 softplus(-2) = 0.25385602208594499
        assert_relative_eq!(p.metric.get(0, 2), 0.253_856_022_085_945, epsilon = 1e-14);
        assert_eq!(p.trace(0, 2).unwrap().nodes, vec![0, 1, 2]);
        assert_eq!(p.trace(2, 0).unwrap().nodes, vec![2, 1, 0]);
        assert!(check_metric(&p.metric, 1e-9).is_empty());
    }

    #[test]
    fn pair_matches_full_projection() {
        let x = example3();
        let full = project(&x);
        for i in 0..3 {
            for j in 0..3 {
                if i != j {
                    assert_eq!(project_pair(&x, i, j).unwrap(), full.trace(i, j).unwrap());
                }
            }
        }
        assert!(matches!(project_pair(&x, 1, 1), Err(Error::Argument(_))));
    }

    #[test]
    fn asymmetric_input_is_symmetrized() {
        let x = Matrix::from_rows(&[vec![0.0, -1.0], vec![3.0, 0.0]]).unwrap();
        let p = project_any(&x);
        assert_relative_eq!(p.metric.get(0, 1), softplus(1.0), epsilon = 1e-15);
    }

    #[test]
    fn extreme_negative_inputs_stay_metric() {
        let x = raw(&[
            vec![0.0, -1e4, -800.0],
            vec![-1e4, 0.0, -1e4],
            vec![-800.0, -1e4, 0.0],
        ]);
        let p = project(&x);
        assert!(p.metric.get(0, 1) > 0.0);
    }

    #[test]
    fn soft_min_on_single_path_is_exact() {
        let x = raw(&[vec![0.0, 0.3], vec![0.3, 0.0]]);
        for t in [0.1, 1.0, 1e3] {
            assert_relative_eq!(soft_min_length(&x, 0, 1, t).unwrap(), softplus(0.3), epsilon = 1e-14);
        }
    }

    #[test]
    fn soft_min_close_at_high_temperature() {
        let s = soft_min_length(&example3(), 0, 2, 1000.0).unwrap();
        assert!((s - 0.253_856_022_085_945).abs() <= 1e-3);
        assert!(matches!(soft_min_length(&example3(), 0, 2, 0.0), Err(Error::Argument(_))));
    }
}
