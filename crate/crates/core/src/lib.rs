//! Optimization over metric matrices through the intrinsic (shortest-path)
//! metric of a softplus-weighted complete graph.
//!
//! The crate is organised bottom-up:
//!
//! * [`matrices`]: dense matrix types, softplus/sigmoid, metric validation.
//! * [`graph`]: Dijkstra, path enumeration, threshold graphs.
//! * [`projector`]: the projector `X ↦ P(softplus(X))` and its soft-min.
//! * [`mixture`]: metric mixtures, losses, path gradients, SGD loops.
//! * [`baseline`]: explicit triangle-constraint system and barrier QP solver.
//! * [`datagen`]: synthetic datasets and threshold-graph bundles.
//! * [`evalkit`]: 1-nearest-neighbour evaluation of learned metrics.
//! * [`experiments`]: end-to-end drivers for the three experiment families.
//! * [`io`]: CSV matrices and JSON manifests.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baseline;
pub mod datagen;
pub mod error;
pub mod evalkit;
pub mod experiments;
pub mod graph;
pub mod io;
pub mod matrices;
pub mod mixture;
pub mod projector;
pub mod rng;

pub use error::{Error, ErrorCategory, Result};
pub use graph::{AdjacencyMask, PathTrace, WeightedGraph};
pub use matrices::{DissimilarityMatrix, Matrix, MetricMatrix, RawSymmetricMatrix};
pub use mixture::{MetricBundle, TrainConfig, TrainReport, Weights};
pub use projector::ProjectionResult;
