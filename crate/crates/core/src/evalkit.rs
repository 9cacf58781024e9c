//! 1-nearest-neighbour evaluation of learned and reference metrics.
//!
//! Each test point is appended to the training set, the model's metric is
//! rebuilt on the augmented `D + 1` points, and the test point takes the
//! label of its closest training point (smallest index on ties).

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::datagen::{normalized_euclidean_metric, squared_euclidean_metric, threshold_path_metric, FeatureDataset};
use crate::error::{Error, Result};
use crate::graph::{path_length_metric, AdjacencyMask, WeightedGraph};
use crate::matrices::{DissimilarityMatrix, Matrix};
use crate::mixture::{linear_loss, mixture_matrix, MetricBundle, Weights};
use crate::projector::project;

/// Training and test points, optionally with a graph over all of them
/// (training nodes first, then test nodes).
#[derive(Debug, Clone)]
pub struct EvalSplit {
    pub train: FeatureDataset,
    pub test: FeatureDataset,
    pub graph: Option<AdjacencyMask>,
    pub seed: u64,
}

impl EvalSplit {
    pub fn new(train: FeatureDataset, test: FeatureDataset, graph: Option<AdjacencyMask>, seed: u64) -> Result<Self> {
        if train.is_empty() || test.is_empty() {
            return Err(Error::Argument("train and test sets must be nonempty".into()));
        }
        if train.feature_dim() != test.feature_dim() {
            return Err(Error::Dimension(format!(
                "train has {} features, test has {}",
                train.feature_dim(),
                test.feature_dim()
            )));
        }
        if let Some(g) = &graph {
            if g.dim() != train.len() + test.len() {
                return Err(Error::Dimension(format!(
                    "graph has {} nodes for {} points",
                    g.dim(),
                    train.len() + test.len()
                )));
            }
        }
        Ok(EvalSplit {
            train,
            test,
            graph,
            seed,
        })
    }

    /// First `d_train` points train, the rest test.
    pub fn from_pool(pool: &FeatureDataset, d_train: usize, graph: Option<AdjacencyMask>, seed: u64) -> Result<Self> {
        let train: Vec<usize> = (0..d_train).collect();
        let test: Vec<usize> = (d_train..pool.len()).collect();
        EvalSplit::new(pool.select(&train), pool.select(&test), graph, seed)
    }

    fn augmented_points(&self, test_index: usize) -> FeatureDataset {
        let mut ds = self.train.clone();
        ds.points.push(self.test.points[test_index].clone());
        ds.labels.push(self.test.labels[test_index]);
        ds
    }

    /// Node ids of the training points and of test point `test_index` in the graph.
    fn augmented_nodes(&self, test_index: usize) -> Vec<usize> {
        let mut nodes: Vec<usize> = (0..self.train.len()).collect();
        nodes.push(self.train.len() + test_index);
        nodes
    }
}

/// How a model's metric is built on a point set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum MetricRecipe {
    /// `‖x_i - x_j‖ / sqrt(‖x_i‖ ‖x_j‖)`.
    NormalizedEuclidean,
    /// `scale ‖x_i - x_j‖²`.
    SquaredEuclidean { scale: f64 },
    /// Path metric of the threshold graph of the normalized Euclidean metric at
    /// `xi` (lifted if disconnected), times `scale`.
    Threshold { xi: f64, scale: f64, unit_weights: bool },
    /// Hop distance on the split's graph over all points, times `scale`.
    GraphPath { scale: f64 },
    /// `P(softplus(Σ_r α_r M_r))` over the component recipes.
    Mixture { components: Vec<MetricRecipe>, alpha: Weights },
}

/// Metric of `recipe` on the training points plus test point `test_index`;
/// the test point is the last row.
pub fn augmented_metric(split: &EvalSplit, test_index: usize, recipe: &MetricRecipe) -> Result<DissimilarityMatrix> {
    if test_index >= split.test.len() {
        return Err(Error::Argument(format!(
            "test index {test_index} out of range for {} test points",
            split.test.len()
        )));
    }
    match recipe {
        MetricRecipe::NormalizedEuclidean => normalized_euclidean_metric(&split.augmented_points(test_index)),
        MetricRecipe::SquaredEuclidean { scale } => {
            Ok(squared_euclidean_metric(&split.augmented_points(test_index)).scaled(*scale))
        }
        MetricRecipe::Threshold { xi, scale, unit_weights } => {
            let base = normalized_euclidean_metric(&split.augmented_points(test_index))?;
            let (m, _) = threshold_path_metric(&base, *xi, *unit_weights)?;
            Ok(DissimilarityMatrix::from(m).scaled(*scale))
        }
        MetricRecipe::GraphPath { scale } => {
            let full = graph_metric(split)?;
            Ok(full.submatrix(&split.augmented_nodes(test_index)).scaled(*scale))
        }
        MetricRecipe::Mixture { components, alpha } => {
            let parts = components
                .iter()
                .map(|c| augmented_metric(split, test_index, c))
                .collect::<Result<Vec<_>>>()?;
            let bundle = MetricBundle::new(parts, None)?;
            let p = project(&mixture_matrix(alpha, &bundle)?);
            Ok(p.metric.as_dissimilarity())
        }
    }
}

/// Hop-count path metric of the split's graph over all train and test nodes.
pub fn graph_metric(split: &EvalSplit) -> Result<DissimilarityMatrix> {
    let g = split
        .graph
        .as_ref()
        .ok_or_else(|| Error::Configuration("graph recipe needs a split with a graph".into()))?;
    Ok(path_length_metric(&WeightedGraph::unit(g))?.into())
}

/// Index of the training point closest to the last point of `aug`,
/// smallest index on ties.
pub fn nearest_training_index(aug: &Matrix) -> usize {
    let test = aug.dim() - 1;
    let mut best = 0;
    for i in 1..test {
        if aug.get(test, i) < aug.get(test, best) {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelTag {
    Mixture,
    Best,
    Full,
    Graph,
    Feature,
}

impl ModelTag {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelTag::Mixture => "mixture",
            ModelTag::Best => "best",
            ModelTag::Full => "full",
            ModelTag::Graph => "graph",
            ModelTag::Feature => "feature",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub model_tag: ModelTag,
    pub d: usize,
    pub accuracy: f64,
    /// `(true label, predicted label)` per test point.
    pub per_test_prediction: Vec<(usize, usize)>,
    pub seeds: Vec<u64>,
}

/// 1-NN predictions for every test point under `recipe`.
pub fn knn1_predict(split: &EvalSplit, recipe: &MetricRecipe, model_tag: ModelTag) -> Result<EvalReport> {
    let per_test_prediction = (0..split.test.len())
        .into_par_iter()
        .map(|t| {
            let aug = augmented_metric(split, t, recipe)?;
            Ok((split.test.labels[t], split.train.labels[nearest_training_index(&aug)]))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(report(model_tag, split, per_test_prediction))
}

fn report(model_tag: ModelTag, split: &EvalSplit, per_test_prediction: Vec<(usize, usize)>) -> EvalReport {
    let correct = per_test_prediction.iter().filter(|(y, p)| y == p).count();
    EvalReport {
        model_tag,
        d: split.train.len(),
        accuracy: correct as f64 / per_test_prediction.len() as f64,
        per_test_prediction,
        seeds: vec![split.seed],
    }
}

/// `argmin_r linear_loss(e_r)`, smallest `r` on ties.
pub fn best_single_metric(bundle: &MetricBundle, rho: f64) -> Result<usize> {
    let losses = (0..bundle.len())
        .map(|r| linear_loss(&Weights::basis(bundle.len(), r), bundle, rho))
        .collect::<Result<Vec<_>>>()?;
    let mut best = 0;
    for (r, &l) in losses.iter().enumerate() {
        if l < losses[best] {
            best = r;
        }
    }
    Ok(best)
}
