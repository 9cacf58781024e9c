//! Metric mixtures `M_α = Σ_r α_r M_r`, their projected objectives, exact
//! path gradients and the stochastic sub-gradient training loops.
//!
//! Every gradient is read off one canonical shortest path: component `r` of
//! the gradient of `P(M_α)[i][j]` is `Σ_(a,b) σ(M_α[a][b]) M_r[a][b]` over
//! the path edges. At points where the shortest path is not unique the
//! tie-broken path gives one valid sub-gradient.

use std::time::Instant;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::PathTrace;
use crate::matrices::{sigmoid, DissimilarityMatrix, Matrix, RawSymmetricMatrix};
use crate::projector::{project, project_pair};
use crate::rng::{stream_rng, Stream};

/// Any `|α_r|` above this aborts training.
pub const DIVERGENCE_BOUND: f64 = 1e8;

/// Mixture weights; entries may be negative.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Weights(Vec<f64>);

impl Weights {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Argument("weights need at least one component".into()));
        }
        if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::Argument(format!("non-finite weight {bad}")));
        }
        Ok(Weights(values))
    }

    pub fn zeros(r: usize) -> Self {
        Weights(vec![0.0; r])
    }

    pub fn uniform(r: usize) -> Self {
        Weights(vec![1.0 / r as f64; r])
    }

    /// Unit basis vector `e_index`.
    pub fn basis(r: usize, index: usize) -> Self {
        let mut v = vec![0.0; r];
        v[index] = 1.0;
        Weights(v)
    }

    /// Standard normal draw scaled to unit norm, from the init stream of `seed`.
    pub fn random_unit(r: usize, seed: u64) -> Result<Self> {
        if r == 0 {
            return Err(Error::Argument("need at least one weight".into()));
        }
        let mut rng = stream_rng(seed, Stream::Init);
        loop {
            let x: Vec<f64> = (0..r).map(|_| rng.sample(StandardNormal)).collect();
            let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm > 0.0 {
                return Ok(Weights(x.into_iter().map(|v| v / norm).collect()));
            }
        }
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn norm_squared(&self) -> f64 {
        self.0.iter().map(|a| a * a).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_squared().sqrt()
    }
}

impl std::ops::Index<usize> for Weights {
    type Output = f64;
    fn index(&self, r: usize) -> &f64 {
        &self.0[r]
    }
}

/// Ordered input dissimilarities of equal size, with optional class labels.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricBundle {
    metrics: Vec<DissimilarityMatrix>,
    labels: Option<Vec<usize>>,
}

impl MetricBundle {
    pub fn new(metrics: Vec<DissimilarityMatrix>, labels: Option<Vec<usize>>) -> Result<Self> {
        let first = metrics
            .first()
            .ok_or_else(|| Error::Argument("a bundle needs at least one matrix".into()))?;
        let dim = first.dim();
        if let Some(r) = metrics.iter().position(|m| m.dim() != dim) {
            return Err(Error::Dimension(format!(
                "matrix {r} is {0}x{0} but matrix 0 is {dim}x{dim}",
                metrics[r].dim()
            )));
        }
        if let Some(l) = &labels {
            if l.len() != dim {
                return Err(Error::Dimension(format!(
                    "{} labels for {dim} points",
                    l.len()
                )));
            }
        }
        Ok(MetricBundle { metrics, labels })
    }

    pub fn with_labels(self, labels: Vec<usize>) -> Result<Self> {
        MetricBundle::new(self.metrics, Some(labels))
    }

    pub fn dim(&self) -> usize {
        self.metrics[0].dim()
    }

    /// Number of input matrices `R`.
    pub fn len(&self) -> usize {
        self.metrics.len()
    }

    pub fn is_empty(&self) -> bool {
        self.metrics.is_empty()
    }

    pub fn metrics(&self) -> &[DissimilarityMatrix] {
        &self.metrics
    }

    pub fn labels(&self) -> Option<&[usize]> {
        self.labels.as_deref()
    }

    pub fn require_labels(&self) -> Result<&[usize]> {
        self.labels()
            .ok_or_else(|| Error::Configuration("this operation needs class labels".into()))
    }

    fn check_weights(&self, alpha: &Weights) -> Result<()> {
        if alpha.len() != self.len() {
            return Err(Error::Dimension(format!(
                "{} weights for {} matrices",
                alpha.len(),
                self.len()
            )));
        }
        Ok(())
    }

    fn check_target(&self, target: &DissimilarityMatrix) -> Result<()> {
        if target.dim() != self.dim() {
            return Err(Error::Dimension(format!(
                "target is {0}x{0} but the bundle is {1}x{1}",
                target.dim(),
                self.dim()
            )));
        }
        Ok(())
    }
}

/// `Σ_r α_r M_r`.
pub fn mixture_matrix(alpha: &Weights, bundle: &MetricBundle) -> Result<RawSymmetricMatrix> {
    bundle.check_weights(alpha)?;
    let d = bundle.dim();
    let mut data = vec![0.0; d * d];
    for (a, m) in alpha.as_slice().iter().zip(bundle.metrics()) {
        for (acc, x) in data.iter_mut().zip(m.as_slice()) {
            *acc += a * x;
        }
    }
    Ok(RawSymmetricMatrix::from_symmetric_unchecked(Matrix::from_vec(d, data)?))
}

#[inline]
fn label_sign(labels: &[usize], i: usize, j: usize) -> f64 {
    if labels[i] == labels[j] {
        1.0
    } else {
        -1.0
    }
}

/// `D⁻² Σ_{i≠j} s_ij P(M_α)[i][j] + ρ‖α‖²` with `s_ij = +1` for equal labels
/// and `-1` otherwise.
pub fn linear_loss(alpha: &Weights, bundle: &MetricBundle, rho: f64) -> Result<f64> {
    let labels = bundle.require_labels()?;
    let m = mixture_matrix(alpha, bundle)?;
    let p = project(&m);
    let d = bundle.dim();
    let mut sum = 0.0;
    for i in 0..d {
        for j in 0..d {
            if i != j {
                sum += label_sign(labels, i, j) * p.metric.get(i, j);
            }
        }
    }
    Ok(sum / (d * d) as f64 + rho * alpha.norm_squared())
}

/// `D⁻² Σ_ij (target[i][j] - P(M_α)[i][j])²`.
pub fn lsq_loss(alpha: &Weights, bundle: &MetricBundle, target: &DissimilarityMatrix) -> Result<f64> {
    bundle.check_target(target)?;
    let p = project(&mixture_matrix(alpha, bundle)?);
    Ok(squared_error(target, &p.metric) / (bundle.dim() * bundle.dim()) as f64)
}

fn squared_error(a: &Matrix, b: &Matrix) -> f64 {
    a.as_slice()
        .iter()
        .zip(b.as_slice())
        .map(|(x, y)| (x - y) * (x - y))
        .sum()
}

/// Gradient of the path length `γᵀ softplus(m_α)` in α along a fixed path.
pub fn path_gradient(path: &PathTrace, m_alpha: &Matrix, bundle: &MetricBundle) -> Vec<f64> {
    let mut g = vec![0.0; bundle.len()];
    for (a, b) in path.edges() {
        let s = sigmoid(m_alpha.get(a, b));
        for (gr, m) in g.iter_mut().zip(bundle.metrics()) {
            *gr += s * m.get(a, b);
        }
    }
    g
}

/// Gradient in α of `P(M_α)[i][j]` along the canonical shortest path.
pub fn pair_gradient(alpha: &Weights, bundle: &MetricBundle, i: usize, j: usize) -> Result<Vec<f64>> {
    let m = mixture_matrix(alpha, bundle)?;
    let path = project_pair(&m, i, j)?;
    Ok(path_gradient(&path, &m, bundle))
}

/// One stochastic estimate of the data term of the linear-loss gradient:
/// `D⁻² s_ij ∇ P(M_α)[i][j]`. Summed over all ordered pairs it reproduces
/// [`full_subgradient_linear`] with `rho = 0` bit for bit.
pub fn pair_estimate_linear(alpha: &Weights, bundle: &MetricBundle, i: usize, j: usize) -> Result<Vec<f64>> {
    let labels = bundle.require_labels()?;
    let scale = pair_scale(labels, i, j, bundle.dim());
    Ok(pair_gradient(alpha, bundle, i, j)?
        .into_iter()
        .map(|g| scale * g)
        .collect())
}

fn pair_scale(labels: &[usize], i: usize, j: usize, d: usize) -> f64 {
    label_sign(labels, i, j) / (d * d) as f64
}

/// `D⁻² Σ_{i≠j} s_ij ∇ P(M_α)[i][j] + 2ρα`, from a single full projection.
pub fn full_subgradient_linear(alpha: &Weights, bundle: &MetricBundle, rho: f64) -> Result<Vec<f64>> {
    let labels = bundle.require_labels()?;
    let m = mixture_matrix(alpha, bundle)?;
    let p = project(&m);
    let d = bundle.dim();
    let mut acc = vec![0.0; bundle.len()];
    for i in 0..d {
        for j in 0..d {
            if i == j {
                continue;
            }
            let scale = pair_scale(labels, i, j, d);
            let g = path_gradient(&p.trace(i, j).expect("off-diagonal"), &m, bundle);
            for (a, gr) in acc.iter_mut().zip(g) {
                *a += scale * gr;
            }
        }
    }
    for (a, w) in acc.iter_mut().zip(alpha.as_slice()) {
        *a += 2.0 * rho * w;
    }
    Ok(acc)
}

/// Settings for [`sgd_linear`] and [`sgd_lsq`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub eta: f64,
    pub k_max: usize,
    pub rho: f64,
    pub seed: u64,
    pub alpha0: Weights,
    /// Iterations between full-objective checkpoints; `None` means `max(1, k_max / 50)`.
    #[serde(default)]
    pub eval_every: Option<usize>,
    /// Stop once a checkpoint improves on the previous one by less than this
    /// fraction of its value. `None` always runs `k_max` iterations.
    #[serde(default)]
    pub improvement_tol: Option<f64>,
}

impl TrainConfig {
    /// Reference step size, iteration budget and regularization.
    pub fn with_defaults(alpha0: Weights, seed: u64) -> Self {
        TrainConfig {
            eta: 1.0,
            k_max: 500,
            rho: 0.01,
            seed,
            alpha0,
            eval_every: None,
            improvement_tol: None,
        }
    }

    pub fn eval_interval(&self) -> usize {
        self.eval_every.unwrap_or((self.k_max / 50).max(1)).max(1)
    }

    pub fn validate(&self, bundle: &MetricBundle) -> Result<()> {
        if !(self.eta > 0.0) {
            return Err(Error::Configuration(format!("eta must be positive, got {}", self.eta)));
        }
        if !(self.rho >= 0.0) {
            return Err(Error::Configuration(format!("rho must be nonnegative, got {}", self.rho)));
        }
        if self.eval_every == Some(0) {
            return Err(Error::Configuration("eval_every must be at least 1".into()));
        }
        if let Some(t) = self.improvement_tol {
            if !(t >= 0.0) {
                return Err(Error::Configuration(format!("improvement_tol must be nonnegative, got {t}")));
            }
        }
        if bundle.dim() < 2 {
            return Err(Error::Configuration("training needs at least two points".into()));
        }
        bundle.check_weights(&self.alpha0)
    }
}

/// Outcome of a training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub alpha_star: Weights,
    /// `(iteration, objective)` checkpoints, starting with iteration 0.
    pub objective_trace: Vec<(usize, f64)>,
    pub wall_time: f64,
    pub iterations_run: usize,
    pub stopped_early: bool,
    /// Time spent in update steps, excluding objective checkpoints.
    #[serde(default)]
    pub step_seconds: f64,
}

impl TrainReport {
    pub fn initial_objective(&self) -> f64 {
        self.objective_trace[0].1
    }

    pub fn final_objective(&self) -> f64 {
        self.objective_trace.last().expect("trace is never empty").1
    }
}

/// Uniform ordered pair `i != j`.
fn sample_pair(rng: &mut impl Rng, d: usize) -> (usize, usize) {
    let i = rng.random_range(0..d);
    let j = rng.random_range(0..d - 1);
    (i, if j >= i { j + 1 } else { j })
}

struct Loop<'a> {
    bundle: &'a MetricBundle,
    cfg: &'a TrainConfig,
}

impl Loop<'_> {
    /// Runs unchecked updates `α ← α - η (grad + 2 D⁻² ρ α)` where `grad`
    /// comes from `pair_grad` on a uniformly sampled pair.
    fn run(
        &self,
        objective: impl Fn(&Weights) -> Result<f64>,
        pair_grad: impl Fn(&RawSymmetricMatrix, &PathTrace, usize, usize) -> f64,
    ) -> Result<TrainReport> {
        let start = Instant::now();
        let (bundle, cfg) = (self.bundle, self.cfg);
        cfg.validate(bundle)?;
        let d = bundle.dim();
        let d2 = (d * d) as f64;
        let every = cfg.eval_interval();
        let mut rng = stream_rng(cfg.seed, Stream::Sampling);
        let mut alpha = cfg.alpha0.0.clone();

        let first = objective(&cfg.alpha0)?;
        check_finite(first, 0)?;
        let mut trace = vec![(0, first)];
        let mut stopped_early = false;
        let mut k = 0;
        let mut step_seconds = 0.0;
        while k < cfg.k_max {
            let step_start = Instant::now();
            let (i, j) = sample_pair(&mut rng, d);
            let w = Weights(alpha.clone());
            let m = mixture_matrix(&w, bundle)?;
            let path = project_pair(&m, i, j)?;
            let coeff = pair_grad(&m, &path, i, j);
            let g = path_gradient(&path, &m, bundle);
            for (a, gr) in alpha.iter_mut().zip(g) {
                *a -= cfg.eta * (coeff * gr + 2.0 * cfg.rho * *a / d2);
            }
            k += 1;
            step_seconds += step_start.elapsed().as_secs_f64();
            if let Some(bad) = alpha.iter().find(|a| !a.is_finite() || a.abs() > DIVERGENCE_BOUND) {
                return Err(Error::Divergence {
                    iteration: k,
                    reason: format!("weight reached {bad}"),
                });
            }
            if k % every == 0 || k == cfg.k_max {
                let obj = objective(&Weights(alpha.clone()))?;
                check_finite(obj, k)?;
                let prev = trace.last().unwrap().1;
                trace.push((k, obj));
                if let Some(tol) = cfg.improvement_tol {
                    if prev - obj < tol * prev.abs() {
                        stopped_early = k < cfg.k_max;
                        break;
                    }
                }
            }
        }
        Ok(TrainReport {
            alpha_star: Weights(alpha),
            objective_trace: trace,
            wall_time: start.elapsed().as_secs_f64(),
            iterations_run: k,
            stopped_early,
            step_seconds,
        })
    }
}

fn check_finite(obj: f64, iteration: usize) -> Result<()> {
    if obj.is_finite() {
        Ok(())
    } else {
        Err(Error::Divergence {
            iteration,
            reason: format!("objective became {obj}"),
        })
    }
}

/// Stochastic sub-gradient descent on [`linear_loss`]: one single-pair shortest
/// path per iteration, objective logged every `eval_every` iterations.
pub fn sgd_linear(bundle: &MetricBundle, cfg: &TrainConfig) -> Result<TrainReport> {
    let labels = bundle.require_labels()?.to_vec();
    let d = bundle.dim();
    Loop { bundle, cfg }.run(
        |a| linear_loss(a, bundle, cfg.rho),
        |_, _, i, j| pair_scale(&labels, i, j, d),
    )
}

/// Stochastic sub-gradient descent on `lsq_loss + ρ‖α‖²`.
///
/// The per-pair gradient is `2 D⁻² (P(M_α)[i][j] - target[i][j]) ∇ P(M_α)[i][j]`.
pub fn sgd_lsq(bundle: &MetricBundle, target: &DissimilarityMatrix, cfg: &TrainConfig) -> Result<TrainReport> {
    bundle.check_target(target)?;
    let d2 = (bundle.dim() * bundle.dim()) as f64;
    Loop { bundle, cfg }.run(
        |a| Ok(lsq_loss(a, bundle, target)? + cfg.rho * a.norm_squared()),
        |_, path, i, j| 2.0 * (path.length - target.get(i, j)) / d2,
    )
}

/// Deterministic full-gradient descent on [`linear_loss`] for `steps` steps.
/// Each step costs a full projection; intended for small problems.
pub fn gd_linear_full(bundle: &MetricBundle, alpha0: &Weights, eta: f64, rho: f64, steps: usize) -> Result<Weights> {
    let mut alpha = alpha0.clone();
    for _ in 0..steps {
        let g = full_subgradient_linear(&alpha, bundle, rho)?;
        for (a, gr) in alpha.0.iter_mut().zip(g) {
            *a -= eta * gr;
        }
    }
    Ok(alpha)
}
