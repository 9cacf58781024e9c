//! Independent oracles shared by the integration tests. Nothing here calls
//! into the library's shortest-path or loss code.

#![allow(dead_code)]

use pathmetric::{AdjacencyMask, Matrix, MetricBundle, RawSymmetricMatrix};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Symmetric matrix with zero diagonal and off-diagonal entries in `[lo, hi)`.
pub fn random_symmetric(rng: &mut ChaCha8Rng, d: usize, lo: f64, hi: f64) -> Matrix {
    let mut m = Matrix::zeros(d);
    for i in 0..d {
        for j in (i + 1)..d {
            let v = rng.random_range(lo..hi);
            m.set(i, j, v);
            m.set(j, i, v);
        }
    }
    m
}

pub fn random_raw(rng: &mut ChaCha8Rng, d: usize, scale: f64) -> RawSymmetricMatrix {
    RawSymmetricMatrix::new(random_symmetric(rng, d, -scale, scale)).unwrap()
}

/// Random mask over `d` nodes containing a random spanning path, so it is
/// always connected, plus each other edge with probability `p`.
pub fn random_connected_mask(rng: &mut ChaCha8Rng, d: usize, p: f64) -> AdjacencyMask {
    let mut order: Vec<usize> = (0..d).collect();
    for k in (1..d).rev() {
        order.swap(k, rng.random_range(0..=k));
    }
    let mut mask = AdjacencyMask::empty(d);
    for w in order.windows(2) {
        mask.add_edge(w[0], w[1]);
    }
    for i in 0..d {
        for j in (i + 1)..d {
            if rng.random::<f64>() < p {
                mask.add_edge(i, j);
            }
        }
    }
    mask
}

/// Floyd-Warshall closure; `f64::INFINITY` marks absent edges.
pub fn floyd_warshall(w: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let d = w.len();
    let mut dist = w.to_vec();
    for (i, row) in dist.iter_mut().enumerate() {
        row[i] = 0.0;
    }
    for k in 0..d {
        for i in 0..d {
            for j in 0..d {
                let via = dist[i][k] + dist[k][j];
                if via < dist[i][j] {
                    dist[i][j] = via;
                }
            }
        }
    }
    dist
}

/// Edge weights of a masked graph as nested vectors, infinity off the mask.
pub fn masked_weights(mask: &AdjacencyMask, w: &Matrix) -> Vec<Vec<f64>> {
    let d = mask.dim();
    (0..d)
        .map(|i| {
            (0..d)
                .map(|j| if i != j && mask.has_edge(i, j) { w.get(i, j) } else { f64::INFINITY })
                .collect()
        })
        .collect()
}

/// Lengths of every simple path from `i` to `j`, each summed edge by edge
/// from `i`.
pub fn all_simple_path_lengths(w: &[Vec<f64>], i: usize, j: usize) -> Vec<f64> {
    fn walk(w: &[Vec<f64>], at: usize, target: usize, len: f64, seen: &mut Vec<bool>, out: &mut Vec<f64>) {
        if at == target {
            out.push(len);
            return;
        }
        for next in 0..w.len() {
            if !seen[next] && w[at][next].is_finite() {
                seen[next] = true;
                walk(w, next, target, len + w[at][next], seen, out);
                seen[next] = false;
            }
        }
    }
    let mut seen = vec![false; w.len()];
    seen[i] = true;
    let mut out = Vec::new();
    walk(w, i, j, 0.0, &mut seen, &mut out);
    out
}

pub fn brute_force_shortest(w: &[Vec<f64>], i: usize, j: usize) -> f64 {
    all_simple_path_lengths(w, i, j)
        .into_iter()
        .fold(f64::INFINITY, f64::min)
}

/// `ln(1 + e^x)` evaluated directly; accurate for moderate `x`.
pub fn softplus_naive(x: f64) -> f64 {
    (1.0 + x.exp()).ln()
}

pub fn sigmoid_naive(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Softplus weights of `x` as nested vectors.
pub fn softplus_weight_table(x: &Matrix) -> Vec<Vec<f64>> {
    let d = x.dim();
    (0..d)
        .map(|i| (0..d).map(|j| if i == j { 0.0 } else { softplus_naive(x.get(i, j)) }).collect())
        .collect()
}

/// `Σ_r α_r M_r` computed entry by entry.
pub fn mixture_naive(alpha: &[f64], bundle: &MetricBundle) -> Matrix {
    Matrix::from_fn(bundle.dim(), |i, j| {
        alpha
            .iter()
            .zip(bundle.metrics())
            .map(|(a, m)| a * m.get(i, j))
            .sum()
    })
}

/// Central finite-difference gradient of `f` at `x` with step `h`.
pub fn central_difference(f: impl Fn(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    (0..x.len())
        .map(|k| {
            let mut up = x.to_vec();
            let mut dn = x.to_vec();
            up[k] += h;
            dn[k] -= h;
            (f(&up) - f(&dn)) / (2.0 * h)
        })
        .collect()
}

pub fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    norm(&diff) / norm(b).max(1e-300)
}

/// Smallest gap between the best and second-best simple path over all
/// pairs of the softplus graph of `x`; infinity when every pair has a
/// single path.
pub fn min_path_gap(x: &Matrix) -> f64 {
    let w = softplus_weight_table(x);
    let d = x.dim();
    let mut gap = f64::INFINITY;
    for i in 0..d {
        for j in (i + 1)..d {
            let mut lengths = all_simple_path_lengths(&w, i, j);
            lengths.sort_by(f64::total_cmp);
            if lengths.len() > 1 {
                gap = gap.min(lengths[1] - lengths[0]);
            }
        }
    }
    gap
}
