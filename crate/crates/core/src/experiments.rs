//! Experiment grids: the runtime study (exp1), the feature-space
//! approximation study (exp2) and the graph plus feature study (exp3).
//!
//! Cells `(D, seed)` are independent and run on a bounded worker pool;
//! results come back in grid order regardless of scheduling.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baseline::{build_constraints, random_baseline, solve_qp, DEFAULT_EPS, DEFAULT_ROW_CAP};
use crate::datagen::{
    normalized_euclidean_metric, squared_euclidean_metric, synthetic_blobs, synthetic_citation_graph,
    threshold_path_metrics, FeatureDataset,
};
use crate::error::{Error, Result};
use crate::evalkit::{best_single_metric, graph_metric, knn1_predict, EvalReport, EvalSplit, MetricRecipe, ModelTag};
use crate::io::{csv_table, format_f64};
use crate::mixture::{lsq_loss, sgd_linear, sgd_lsq, MetricBundle, TrainConfig, Weights};

/// Synthetic feature clouds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BlobParams {
    pub n_classes: usize,
    pub d_x: usize,
    pub spread: f64,
}

impl Default for BlobParams {
    fn default() -> Self {
        BlobParams {
            n_classes: 3,
            d_x: 10,
            spread: 1.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Init {
    /// Unit-norm Gaussian draw from the init stream.
    RandomUnit,
    /// `1/R` in every slot.
    Uniform,
}

/// Training settings shared by the experiment drivers; the seed comes from the cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainParams {
    pub eta: f64,
    pub k_max: usize,
    pub rho: f64,
    pub eval_every: Option<usize>,
    pub improvement_tol: Option<f64>,
    pub init: Init,
}

impl Default for TrainParams {
    fn default() -> Self {
        TrainParams {
            eta: 1.0,
            k_max: 500,
            rho: 0.01,
            eval_every: None,
            improvement_tol: None,
            init: Init::RandomUnit,
        }
    }
}

impl TrainParams {
    /// Step size and budget used by the experiment grids. The per-pair
    /// gradient carries a `D⁻²` factor, so `η = 1` moves `α` by about 0.1
    /// over 500 iterations at `D = 40`.
    pub fn tuned() -> Self {
        TrainParams {
            eta: 50.0,
            k_max: 5000,
            ..TrainParams::default()
        }
    }

    pub fn config(&self, r: usize, seed: u64) -> Result<TrainConfig> {
        let alpha0 = match self.init {
            Init::RandomUnit => Weights::random_unit(r, seed)?,
            Init::Uniform => Weights::uniform(r),
        };
        Ok(TrainConfig {
            eta: self.eta,
            k_max: self.k_max,
            rho: self.rho,
            seed,
            alpha0,
            eval_every: self.eval_every,
            improvement_tol: self.improvement_tol,
        })
    }
}

/// Runs `f` over the cells on `workers` threads (0 means all cores).
fn run_cells<C, T, F>(cells: &[C], workers: usize, f: F) -> Result<Vec<T>>
where
    C: Sync,
    T: Send,
    F: Fn(&C) -> Result<T> + Sync + Send,
{
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Configuration(format!("cannot start worker pool: {e}")))?;
    pool.install(|| cells.par_iter().map(&f).collect())
}

fn grid(d_grid: &[usize], seeds: &[u64]) -> Result<Vec<(usize, u64)>> {
    if d_grid.is_empty() || seeds.is_empty() {
        return Err(Error::Configuration("D grid and seed list must be nonempty".into()));
    }
    Ok(d_grid
        .iter()
        .flat_map(|&d| seeds.iter().map(move |&s| (d, s)))
        .collect())
}

// ---------------------------------------------------------------- exp1

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Exp1Config {
    pub d_grid: Vec<usize>,
    pub seeds: Vec<u64>,
    pub r: usize,
    pub blobs: BlobParams,
    pub path: TrainParams,
    pub qp_rho: f64,
    pub eps: f64,
    pub row_cap: usize,
    pub unit_weights: bool,
    pub workers: usize,
}

impl Default for Exp1Config {
    fn default() -> Self {
        Exp1Config {
            d_grid: vec![40, 50, 60, 70, 80, 100],
            seeds: vec![0, 1, 2],
            r: 8,
            blobs: BlobParams::default(),
            path: TrainParams {
                eval_every: Some(250),
                improvement_tol: Some(1e-4),
                ..TrainParams::tuned()
            },
            qp_rho: 0.01,
            eps: DEFAULT_EPS,
            row_cap: DEFAULT_ROW_CAP,
            unit_weights: false,
            workers: 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Exp1Method {
    Path,
    Qp,
    Rand,
}

impl Exp1Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Exp1Method::Path => "path",
            Exp1Method::Qp => "qp",
            Exp1Method::Rand => "rand",
        }
    }
}

/// One method on one cell. `objective` is `None` when the method could not
/// run (row cap exceeded).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exp1Row {
    pub d: usize,
    pub method: Exp1Method,
    pub seed: u64,
    /// Mean squared error to the target, without the regularizer.
    pub objective: Option<f64>,
    pub opt_seconds: f64,
    /// Constraint construction time for the QP.
    pub extra_seconds: f64,
    pub iterations: usize,
    /// Mean time of one path update step.
    pub step_seconds: f64,
}

pub fn run_experiment1(cfg: &Exp1Config) -> Result<Vec<Exp1Row>> {
    let cells = grid(&cfg.d_grid, &cfg.seeds)?;
    let per_cell = run_cells(&cells, cfg.workers, |&(d, seed)| exp1_cell(cfg, d, seed))?;
    Ok(per_cell.into_iter().flatten().collect())
}

fn exp1_cell(cfg: &Exp1Config, d: usize, seed: u64) -> Result<Vec<Exp1Row>> {
    let ds = synthetic_blobs(d, cfg.blobs.n_classes, cfg.blobs.d_x, cfg.blobs.spread, seed)?;
    let target = normalized_euclidean_metric(&ds)?;
    let tb = threshold_path_metrics(&target, cfg.r, cfg.unit_weights)?;
    let bundle = tb.bundle;

    let report = sgd_lsq(&bundle, &target, &cfg.path.config(cfg.r, seed)?)?;
    let path = Exp1Row {
        d,
        method: Exp1Method::Path,
        seed,
        objective: Some(lsq_loss(&report.alpha_star, &bundle, &target)?),
        opt_seconds: report.wall_time,
        extra_seconds: 0.0,
        iterations: report.iterations_run,
        step_seconds: report.step_seconds / report.iterations_run.max(1) as f64,
    };

    let qp = match build_constraints(&bundle, cfg.eps, Some(cfg.row_cap)) {
        Ok(cs) => {
            let sol = solve_qp(&bundle, &target, &cs, cfg.qp_rho)?;
            Exp1Row {
                d,
                method: Exp1Method::Qp,
                seed,
                objective: Some(sol.mse),
                opt_seconds: sol.solve_seconds,
                extra_seconds: cs.build_seconds,
                iterations: sol.newton_steps,
                step_seconds: 0.0,
            }
        }
        Err(Error::Capacity { .. }) => Exp1Row {
            d,
            method: Exp1Method::Qp,
            seed,
            objective: None,
            opt_seconds: 0.0,
            extra_seconds: 0.0,
            iterations: 0,
            step_seconds: 0.0,
        },
        Err(e) => return Err(e),
    };

    let alpha_rand = random_baseline(cfg.r, seed)?;
    let rand = Exp1Row {
        d,
        method: Exp1Method::Rand,
        seed,
        objective: Some(lsq_loss(&alpha_rand, &bundle, &target)?),
        opt_seconds: 0.0,
        extra_seconds: 0.0,
        iterations: 0,
        step_seconds: 0.0,
    };
    Ok(vec![path, qp, rand])
}

/// Results table; timing columns are left out when `timing` is false so that
/// reruns compare byte for byte.
pub fn exp1_csv(rows: &[Exp1Row], timing: bool) -> String {
    let mut header = vec!["D", "method", "seed", "objective"];
    if timing {
        header.extend(["opt_seconds", "extra_seconds", "step_seconds"]);
    }
    header.push("iterations");
    let body: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            let mut row = vec![
                r.d.to_string(),
                r.method.as_str().to_string(),
                r.seed.to_string(),
                r.objective.map(format_f64).unwrap_or_default(),
            ];
            if timing {
                row.extend([
                    format_f64(r.opt_seconds),
                    format_f64(r.extra_seconds),
                    format_f64(r.step_seconds),
                ]);
            }
            row.push(r.iterations.to_string());
            row
        })
        .collect();
    csv_table(&header, &body)
}

// ---------------------------------------------------------------- exp2

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Exp2Config {
    pub d_grid: Vec<usize>,
    pub seeds: Vec<u64>,
    pub d_test: usize,
    pub r: usize,
    pub blobs: BlobParams,
    pub train: TrainParams,
    pub unit_weights: bool,
    pub workers: usize,
}

impl Default for Exp2Config {
    fn default() -> Self {
        Exp2Config {
            d_grid: vec![20, 40, 60, 80],
            seeds: vec![0, 1, 2, 3, 4],
            d_test: 20,
            r: 8,
            blobs: BlobParams::default(),
            train: TrainParams::tuned(),
            unit_weights: false,
            workers: 0,
        }
    }
}

/// Reports for the mixture, best single metric and full Euclidean models,
/// three per cell in grid order.
pub fn run_experiment2(cfg: &Exp2Config) -> Result<Vec<EvalReport>> {
    let cells = grid(&cfg.d_grid, &cfg.seeds)?;
    let per_cell = run_cells(&cells, cfg.workers, |&(d, seed)| exp2_cell(cfg, d, seed))?;
    Ok(per_cell.into_iter().flatten().collect())
}

fn blob_split(blobs: &BlobParams, d: usize, d_test: usize, seed: u64) -> Result<(FeatureDataset, EvalSplit)> {
    if d_test == 0 {
        return Err(Error::Configuration("d_test must be positive".into()));
    }
    let pool = synthetic_blobs(d + d_test, blobs.n_classes, blobs.d_x, blobs.spread, seed)?;
    let split = EvalSplit::from_pool(&pool, d, None, seed)?;
    Ok((pool, split))
}

fn exp2_cell(cfg: &Exp2Config, d: usize, seed: u64) -> Result<Vec<EvalReport>> {
    let (_, split) = blob_split(&cfg.blobs, d, cfg.d_test, seed)?;
    let m_true = normalized_euclidean_metric(&split.train)?;
    let tb = threshold_path_metrics(&m_true, cfg.r, cfg.unit_weights)?;
    let bundle = tb.bundle.with_labels(split.train.labels.clone())?;

    let train_cfg = cfg.train.config(cfg.r, seed)?;
    let report = sgd_linear(&bundle, &train_cfg)?;
    let r_best = best_single_metric(&bundle, cfg.train.rho)?;

    let components: Vec<MetricRecipe> = tb
        .levels
        .iter()
        .map(|l| MetricRecipe::Threshold {
            xi: l.used,
            scale: l.scale,
            unit_weights: cfg.unit_weights,
        })
        .collect();
    let best = components[r_best].clone();
    let mixture = MetricRecipe::Mixture {
        components,
        alpha: report.alpha_star,
    };
    Ok(vec![
        knn1_predict(&split, &mixture, ModelTag::Mixture)?,
        knn1_predict(&split, &best, ModelTag::Best)?,
        knn1_predict(&split, &MetricRecipe::NormalizedEuclidean, ModelTag::Full)?,
    ])
}

// ---------------------------------------------------------------- exp3

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Exp3Config {
    pub d_grid: Vec<usize>,
    pub seeds: Vec<u64>,
    pub d_test: usize,
    pub blobs: BlobParams,
    pub intra_p: f64,
    pub inter_p: f64,
    pub train: TrainParams,
    pub workers: usize,
}

impl Default for Exp3Config {
    fn default() -> Self {
        Exp3Config {
            d_grid: vec![20, 40, 60],
            seeds: vec![0, 1, 2, 3, 4],
            d_test: 20,
            blobs: BlobParams {
                spread: 1.0,
                ..BlobParams::default()
            },
            intra_p: 0.1,
            inter_p: 0.02,
            train: TrainParams::tuned(),
            workers: 0,
        }
    }
}

/// Reports for the graph-only, feature-only and mixture models, three per
/// cell in grid order.
pub fn run_experiment3(cfg: &Exp3Config) -> Result<Vec<EvalReport>> {
    let cells = grid(&cfg.d_grid, &cfg.seeds)?;
    let per_cell = run_cells(&cells, cfg.workers, |&(d, seed)| exp3_cell(cfg, d, seed))?;
    Ok(per_cell.into_iter().flatten().collect())
}

/// Factor bringing the root-mean-square entry of `m` to 1.
fn rms_scale(m: &crate::matrices::Matrix) -> f64 {
    let norm = m.frobenius_norm();
    if norm > 0.0 {
        m.dim() as f64 / norm
    } else {
        1.0
    }
}

fn exp3_cell(cfg: &Exp3Config, d: usize, seed: u64) -> Result<Vec<EvalReport>> {
    let (pool, mut split) = blob_split(&cfg.blobs, d, cfg.d_test, seed)?;
    split.graph = Some(synthetic_citation_graph(&pool, cfg.intra_p, cfg.inter_p, seed)?);
    let train_nodes: Vec<usize> = (0..d).collect();

    let graph_train = graph_metric(&split)?.submatrix(&train_nodes);
    let feature_train = squared_euclidean_metric(&split.train);
    let graph_scale = rms_scale(&graph_train);
    let feature_scale = rms_scale(&feature_train);
    let bundle = MetricBundle::new(
        vec![graph_train.scaled(graph_scale), feature_train.scaled(feature_scale)],
        Some(split.train.labels.clone()),
    )?;

    let report = sgd_linear(&bundle, &cfg.train.config(2, seed)?)?;
    let graph = MetricRecipe::GraphPath { scale: graph_scale };
    let feature = MetricRecipe::SquaredEuclidean { scale: feature_scale };
    let mixture = MetricRecipe::Mixture {
        components: vec![graph.clone(), feature.clone()],
        alpha: report.alpha_star,
    };
    Ok(vec![
        knn1_predict(&split, &graph, ModelTag::Graph)?,
        knn1_predict(&split, &feature, ModelTag::Feature)?,
        knn1_predict(&split, &mixture, ModelTag::Mixture)?,
    ])
}

// ---------------------------------------------------------------- summaries

/// Mean and sample standard deviation of one model's accuracy at one `D`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracySummary {
    pub d: usize,
    pub model: ModelTag,
    pub mean: f64,
    pub std: f64,
    pub n: usize,
}

/// Groups reports by `(D, model)` in order of first appearance.
pub fn summarize(reports: &[EvalReport]) -> Vec<AccuracySummary> {
    let mut keys: Vec<(usize, ModelTag)> = Vec::new();
    for r in reports {
        if !keys.contains(&(r.d, r.model_tag)) {
            keys.push((r.d, r.model_tag));
        }
    }
    keys.into_iter()
        .map(|(d, model)| {
            let acc: Vec<f64> = reports
                .iter()
                .filter(|r| r.d == d && r.model_tag == model)
                .map(|r| r.accuracy)
                .collect();
            let (mean, std) = mean_std(&acc);
            AccuracySummary {
                d,
                model,
                mean,
                std,
                n: acc.len(),
            }
        })
        .collect()
}

/// Mean and sample standard deviation (0 for a single value).
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

pub fn summary_csv(rows: &[AccuracySummary]) -> String {
    let body: Vec<Vec<String>> = rows
        .iter()
        .map(|s| {
            vec![
                s.d.to_string(),
                s.model.as_str().to_string(),
                format_f64(s.mean),
                format_f64(s.std),
                s.n.to_string(),
            ]
        })
        .collect();
    csv_table(&["D", "model", "mean_accuracy", "std", "n"], &body)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mean_std_matches_hand_values() {
        let (m, s) = mean_std(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m, 2.5);
        assert!((s - (5.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert_eq!(mean_std(&[0.7]), (0.7, 0.0));
    }

    #[test]
    fn exp1_smoke_has_all_methods() {
        let cfg = Exp1Config {
            d_grid: vec![12, 16],
            seeds: vec![3],
            path: TrainParams {
                k_max: 40,
                ..TrainParams::default()
            },
            ..Exp1Config::default()
        };
        let rows = run_experiment1(&cfg).unwrap();
        assert_eq!(rows.len(), 6);
        assert!(rows.iter().all(|r| r.objective.is_some()));
        let csv = exp1_csv(&rows, false);
        assert_eq!(csv.lines().count(), 7);
    }

    #[test]
    fn exp1_row_cap_leaves_missing_cell() {
        let cfg = Exp1Config {
            d_grid: vec![10],
            seeds: vec![0],
            row_cap: 10,
            path: TrainParams {
                k_max: 10,
                ..TrainParams::default()
            },
            ..Exp1Config::default()
        };
        let rows = run_experiment1(&cfg).unwrap();
        let qp = rows.iter().find(|r| r.method == Exp1Method::Qp).unwrap();
        assert_eq!(qp.objective, None);
    }

    #[test]
    fn summaries_group_by_cell() {
        let mk = |d, model, accuracy| EvalReport {
            model_tag: model,
            d,
            accuracy,
            per_test_prediction: vec![],
            seeds: vec![0],
        };
        let rows = summarize(&[
            mk(20, ModelTag::Full, 0.5),
            mk(20, ModelTag::Best, 0.25),
            mk(20, ModelTag::Full, 1.0),
        ]);
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0].mean, 0.75);
        assert_eq!(rows[0].n, 2);
    }
}
