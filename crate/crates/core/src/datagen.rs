//! Synthetic inputs: labelled feature clouds, planted-partition graphs,
//! normalized feature metrics and threshold-graph path metrics.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{is_connected, path_length_metric, threshold_graph, AdjacencyMask, WeightedGraph};
use crate::matrices::{DissimilarityMatrix, Matrix, MetricMatrix};
use crate::mixture::MetricBundle;
use crate::rng::{stream_rng, Stream};

/// Norm of the class means produced by [`synthetic_blobs`].
pub const BLOB_RADIUS: f64 = 4.0;

/// Smallest coordinate after the positivity shift in [`synthetic_blobs`].
pub const BLOB_FLOOR: f64 = 0.1;

/// Labelled points in `R^{d_x}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureDataset {
    pub points: Vec<Vec<f64>>,
    /// Class labels, `1..=n_classes`.
    pub labels: Vec<usize>,
}

impl FeatureDataset {
    pub fn new(points: Vec<Vec<f64>>, labels: Vec<usize>) -> Result<Self> {
        if points.len() != labels.len() {
            return Err(Error::Dimension(format!(
                "{} points but {} labels",
                points.len(),
                labels.len()
            )));
        }
        if let Some(first) = points.first() {
            if let Some(i) = points.iter().position(|p| p.len() != first.len()) {
                return Err(Error::Dimension(format!(
                    "point {i} has {} features, point 0 has {}",
                    points[i].len(),
                    first.len()
                )));
            }
        }
        Ok(FeatureDataset { points, labels })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn feature_dim(&self) -> usize {
        self.points.first().map_or(0, Vec::len)
    }

    /// Rows `indices`, in order.
    pub fn select(&self, indices: &[usize]) -> FeatureDataset {
        FeatureDataset {
            points: indices.iter().map(|&i| self.points[i].clone()).collect(),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
        }
    }

    /// Concatenation of `self` and `other`.
    pub fn concat(&self, other: &FeatureDataset) -> FeatureDataset {
        FeatureDataset {
            points: self.points.iter().chain(&other.points).cloned().collect(),
            labels: self.labels.iter().chain(&other.labels).copied().collect(),
        }
    }
}

fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    squared_euclidean(a, b).sqrt()
}

fn squared_euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// `‖x_i - x_j‖ / sqrt(‖x_i‖ ‖x_j‖)`.
pub fn normalized_euclidean_metric(ds: &FeatureDataset) -> Result<DissimilarityMatrix> {
    let norms: Vec<f64> = ds.points.iter().map(|p| p.iter().map(|x| x * x).sum::<f64>().sqrt()).collect();
    if let Some(i) = norms.iter().position(|&n| n == 0.0) {
        return Err(Error::Normalization(format!("feature vector {i} has zero norm")));
    }
    let d = ds.len();
    let mut m = Matrix::zeros(d);
    for i in 0..d {
        for j in (i + 1)..d {
            let v = euclidean(&ds.points[i], &ds.points[j]) / (norms[i] * norms[j]).sqrt();
            m.set(i, j, v);
            m.set(j, i, v);
        }
    }
    DissimilarityMatrix::new(m)
}

/// `‖x_i - x_j‖²`.
pub fn squared_euclidean_metric(ds: &FeatureDataset) -> DissimilarityMatrix {
    let d = ds.len();
    let mut m = Matrix::zeros(d);
    for i in 0..d {
        for j in (i + 1)..d {
            let v = squared_euclidean(&ds.points[i], &ds.points[j]);
            m.set(i, j, v);
            m.set(j, i, v);
        }
    }
    DissimilarityMatrix::from_valid_unchecked(m)
}

/// Threshold levels `ξ_r = ā (1/4 + (r-1) 6/(4R))`, `r = 1..R`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct XiSchedule {
    pub r: usize,
    /// Mean over all `D²` entries, diagonal included.
    pub a_bar: f64,
    pub xi: Vec<f64>,
}

pub fn xi_schedule(m_true: &Matrix, r: usize) -> Result<XiSchedule> {
    if r == 0 {
        return Err(Error::Argument("the schedule needs at least one level".into()));
    }
    let d = m_true.dim();
    let a_bar = m_true.as_slice().iter().sum::<f64>() / (d * d) as f64;
    let xi = (1..=r)
        .map(|k| a_bar * (0.25 + (k - 1) as f64 * 6.0 / (4.0 * r as f64)))
        .collect();
    Ok(XiSchedule { r, a_bar, xi })
}

/// Smallest threshold at or above `xi` whose graph is connected.
///
/// Candidates are the midpoints between consecutive distinct off-diagonal
/// entries (and one step past the largest), searched by bisection.
pub fn connected_threshold(m: &Matrix, xi: f64) -> Result<f64> {
    if is_connected(&threshold_graph(m, xi)) {
        return Ok(xi);
    }
    let d = m.dim();
    let mut values: Vec<f64> = (0..d)
        .flat_map(|i| ((i + 1)..d).map(move |j| (i, j)))
        .map(|(i, j)| m.get(i, j))
        .collect();
    values.sort_by(f64::total_cmp);
    values.dedup();
    let top = *values.last().expect("at least two points");
    let candidates: Vec<f64> = values
        .windows(2)
        .map(|w| 0.5 * (w[0] + w[1]))
        .chain(std::iter::once(top + top.abs().max(1.0) * 1e-6))
        .filter(|&c| c > xi)
        .collect();
    let connected = |c: f64| is_connected(&threshold_graph(m, c));
    let last = *candidates.last().expect("top candidate exceeds xi");
    if !connected(last) {
        let comps = threshold_graph(m, last).components();
        return Err(Error::Disconnected {
            i: comps[0][0],
            j: comps[1][0],
        });
    }
    let (mut lo, mut hi) = (0, candidates.len() - 1);
    while lo < hi {
        let mid = (lo + hi) / 2;
        if connected(candidates[mid]) {
            hi = mid;
        } else {
            lo = mid + 1;
        }
    }
    Ok(candidates[lo])
}

/// One threshold level of a bundle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct XiLevel {
    /// Scheduled threshold.
    pub nominal: f64,
    /// Threshold actually used after any connectivity lift.
    pub used: f64,
    pub lifted: bool,
    /// Frobenius norm of the path metric before rescaling.
    pub raw_norm: f64,
    /// Factor applied so the member's norm matches the target norm.
    pub scale: f64,
}

/// Path metric of the threshold graph at `xi` (lifted if needed), with
/// `m` as edge weights or unit weights.
pub fn threshold_path_metric(m: &Matrix, xi: f64, unit_weights: bool) -> Result<(MetricMatrix, f64)> {
    let used = connected_threshold(m, xi)?;
    let mask = threshold_graph(m, used);
    let g = if unit_weights {
        WeightedGraph::unit(&mask)
    } else {
        WeightedGraph::masked(&mask, m)?
    };
    Ok((path_length_metric(&g)?, used))
}

/// Threshold path metrics for every level of the schedule, rescaled to the
/// Frobenius norm of `m_true`.
#[derive(Debug, Clone)]
pub struct ThresholdBundle {
    pub bundle: MetricBundle,
    pub schedule: XiSchedule,
    pub levels: Vec<XiLevel>,
    pub target_norm: f64,
    pub unit_weights: bool,
}

pub fn threshold_path_metrics(m_true: &DissimilarityMatrix, r: usize, unit_weights: bool) -> Result<ThresholdBundle> {
    let schedule = xi_schedule(m_true, r)?;
    let target_norm = m_true.frobenius_norm();
    let mut metrics = Vec::with_capacity(r);
    let mut levels = Vec::with_capacity(r);
    for &xi in &schedule.xi {
        let (metric, used) = threshold_path_metric(m_true, xi, unit_weights)?;
        let raw_norm = metric.frobenius_norm();
        let scale = target_norm / raw_norm;
        metrics.push(DissimilarityMatrix::from(metric).scaled(scale));
        levels.push(XiLevel {
            nominal: xi,
            used,
            lifted: used != xi,
            raw_norm,
            scale,
        });
    }
    Ok(ThresholdBundle {
        bundle: MetricBundle::new(metrics, None)?,
        schedule,
        levels,
        target_norm,
        unit_weights,
    })
}

/// Labelled Gaussian clouds around class means on the positive-orthant shell
/// of radius [`BLOB_RADIUS`], shifted so every coordinate is at least
/// [`BLOB_FLOOR`]. Labels cycle `1, 2, ..., n_classes, 1, ...`.
pub fn synthetic_blobs(d: usize, n_classes: usize, d_x: usize, spread: f64, seed: u64) -> Result<FeatureDataset> {
    if n_classes < 2 || d < n_classes {
        return Err(Error::Argument(format!(
            "need at least two classes and one point per class, got {d} points and {n_classes} classes"
        )));
    }
    if d_x == 0 || !(spread >= 0.0) {
        return Err(Error::Argument("feature dimension must be positive and spread nonnegative".into()));
    }
    let mut rng = stream_rng(seed, Stream::Data);
    let means: Vec<Vec<f64>> = (0..n_classes)
        .map(|_| {
            let g: Vec<f64> = (0..d_x).map(|_| rng.sample::<f64, _>(StandardNormal).abs()).collect();
            let norm = g.iter().map(|x| x * x).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
            g.into_iter().map(|x| BLOB_RADIUS * x / norm).collect()
        })
        .collect();
    let labels: Vec<usize> = (0..d).map(|i| i % n_classes + 1).collect();
    let mut points: Vec<Vec<f64>> = labels
        .iter()
        .map(|&l| {
            means[l - 1]
                .iter()
                .map(|&m| m + spread * rng.sample::<f64, _>(StandardNormal))
                .collect()
        })
        .collect();
    let min = points.iter().flatten().copied().fold(f64::INFINITY, f64::min);
    let shift = BLOB_FLOOR - min.min(BLOB_FLOOR);
    if shift > 0.0 {
        for x in points.iter_mut().flatten() {
            *x += shift;
        }
    }
    FeatureDataset::new(points, labels)
}

/// Planted-partition graph: each pair is linked with probability `intra_p`
/// inside a class and `inter_p` across classes. Remaining components are then
/// bridged, each to the union of the earlier ones, through its closest pair
/// of points in feature space.
pub fn synthetic_citation_graph(ds: &FeatureDataset, intra_p: f64, inter_p: f64, seed: u64) -> Result<AdjacencyMask> {
    for p in [intra_p, inter_p] {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::Argument(format!("edge probability {p} outside [0, 1]")));
        }
    }
    if intra_p < inter_p {
        return Err(Error::Argument("intra-class probability must be at least the inter-class one".into()));
    }
    let d = ds.len();
    let mut rng = stream_rng(seed, Stream::Graph);
    let mut mask = AdjacencyMask::empty(d);
    for i in 0..d {
        for j in (i + 1)..d {
            let p = if ds.labels[i] == ds.labels[j] { intra_p } else { inter_p };
            if rng.random::<f64>() < p {
                mask.add_edge(i, j);
            }
        }
    }
    bridge_components(&mut mask, ds);
    Ok(mask)
}

/// Links each component after the first to the union of the previous ones.
/// Returns the number of bridges added.
pub fn bridge_components(mask: &mut AdjacencyMask, ds: &FeatureDataset) -> usize {
    let comps = mask.components();
    let mut joined: Vec<usize> = comps[0].clone();
    let mut added = 0;
    for comp in comps.iter().skip(1) {
        let mut best = (f64::INFINITY, 0, 0);
        for &a in &joined {
            for &b in comp {
                let dist = squared_euclidean(&ds.points[a], &ds.points[b]);
                if dist < best.0 {
                    best = (dist, a, b);
                }
            }
        }
        mask.add_edge(best.1, best.2);
        added += 1;
        joined.extend_from_slice(comp);
    }
    added
}

/// Ratio of the average same-label squared distance to the average
/// different-label squared distance, over unordered pairs.
pub fn separation_score(ds: &FeatureDataset) -> Result<f64> {
    separation_ratio(ds, false)
}

/// Ratio of the summed (rather than averaged) squared distances.
pub fn separation_score_sums(ds: &FeatureDataset) -> Result<f64> {
    separation_ratio(ds, true)
}

fn separation_ratio(ds: &FeatureDataset, sums: bool) -> Result<f64> {
    let (mut same, mut diff) = (0.0, 0.0);
    let (mut n_same, mut n_diff) = (0usize, 0usize);
    for i in 0..ds.len() {
        for j in (i + 1)..ds.len() {
            let v = squared_euclidean(&ds.points[i], &ds.points[j]);
            if ds.labels[i] == ds.labels[j] {
                same += v;
                n_same += 1;
            } else {
                diff += v;
                n_diff += 1;
            }
        }
    }
    if n_same == 0 || n_diff == 0 {
        return Err(Error::UndefinedScore(format!(
            "{n_same} same-label and {n_diff} different-label pairs"
        )));
    }
    if diff == 0.0 {
        return Err(Error::UndefinedScore("all different-label pairs coincide".into()));
    }
    Ok(if sums {
        same / diff
    } else {
        (same / n_same as f64) / (diff / n_diff as f64)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn normalized_metric_examples() {
        let ds = FeatureDataset::new(vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![1.0, 0.0]], vec![1, 2, 1]).unwrap();
        let m = normalized_euclidean_metric(&ds).unwrap();
        assert_relative_eq!(m.get(0, 1), 2f64.sqrt(), epsilon = 1e-15);
        assert_eq!(m.get(0, 2), 0.0);
        let zero = FeatureDataset::new(vec![vec![0.0, 0.0], vec![1.0, 1.0]], vec![1, 2]).unwrap();
        assert!(matches!(normalized_euclidean_metric(&zero), Err(Error::Normalization(_))));
    }

    #[test]
    fn schedule_endpoints() {
        let m = Matrix::from_fn(4, |i, j| if i == j { 0.0 } else { 2.0 });
        let s = xi_schedule(&m, 8).unwrap();
        let a = 24.0 / 16.0;
        assert_eq!(s.a_bar, a);
        assert_relative_eq!(s.xi[0], 0.25 * a, epsilon = 1e-15);
        assert_relative_eq!(s.xi[7], 1.5625 * a, epsilon = 1e-15);
        assert!(s.xi.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(xi_schedule(&m, 1).unwrap().xi, vec![a / 4.0]);
    }

    #[test]
    fn lift_finds_minimal_connecting_threshold() {
        // path 0-1-2 with weights 1 and 2, long edge 0-2 of 5
        let m = Matrix::from_rows(&[vec![0.0, 1.0, 5.0], vec![1.0, 0.0, 2.0], vec![5.0, 2.0, 0.0]]).unwrap();
        let used = connected_threshold(&m, 0.5).unwrap();
        assert!(used > 2.0 && used <= 5.0);
        assert_eq!(threshold_graph(&m, used).edge_count(), 2);
        assert_eq!(connected_threshold(&m, 10.0).unwrap(), 10.0);
    }

    #[test]
    fn blob_basics() {
        let ds = synthetic_blobs(12, 3, 5, 0.4, 9).unwrap();
        assert_eq!(ds.len(), 12);
        assert!(ds.points.iter().flatten().all(|&x| x >= BLOB_FLOOR - 1e-15));
        assert_eq!(ds.labels.iter().filter(|&&l| l == 2).count(), 4);
        assert_eq!(ds, synthetic_blobs(12, 3, 5, 0.4, 9).unwrap());
        assert!(synthetic_blobs(2, 3, 5, 0.4, 9).is_err());
    }

    #[test]
    fn zero_spread_blobs_have_zero_within_class_distance() {
        let ds = synthetic_blobs(9, 3, 4, 0.0, 2).unwrap();
        let m = normalized_euclidean_metric(&ds).unwrap();
        for i in 0..9 {
            for j in 0..9 {
                if ds.labels[i] == ds.labels[j] {
                    assert_eq!(m.get(i, j), 0.0);
                } else {
                    assert!(m.get(i, j) > 0.0);
                }
            }
        }
        assert_eq!(separation_score(&ds).unwrap(), 0.0);
    }

    #[test]
    fn disjoint_cliques_need_one_bridge_per_extra_class() {
        let ds = synthetic_blobs(12, 4, 3, 0.5, 1).unwrap();
        let g = synthetic_citation_graph(&ds, 1.0, 0.0, 5).unwrap();
        assert!(is_connected(&g));
        // four cliques of three nodes plus three bridges
        assert_eq!(g.edge_count(), 4 * 3 + 3);
    }

    #[test]
    fn separation_requires_both_pair_types() {
        let ds = FeatureDataset::new(vec![vec![1.0], vec![2.0]], vec![1, 2]).unwrap();
        assert!(matches!(separation_score(&ds), Err(Error::UndefinedScore(_))));
    }

    #[test]
    fn separation_sum_variant() {
        let ds = FeatureDataset::new(vec![vec![0.0], vec![1.0], vec![3.0]], vec![1, 1, 2]).unwrap();
        // same: (0,1) -> 1 ; different: (0,2) -> 9, (1,2) -> 4
        assert_relative_eq!(separation_score(&ds).unwrap(), 1.0 / 6.5, epsilon = 1e-15);
        assert_relative_eq!(separation_score_sums(&ds).unwrap(), 1.0 / 13.0, epsilon = 1e-15);
    }
}
