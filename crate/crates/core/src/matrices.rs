//! Dense square matrices, elementwise nonlinearities and metric validation.
//!
//! Three validated wrappers sit on top of the plain [`Matrix`] storage:
//!
//! * [`RawSymmetricMatrix`]: symmetric, any sign (the projector input and `M_α`).
//! * [`DissimilarityMatrix`]: symmetric, nonnegative, zero diagonal.
//! * [`MetricMatrix`]: a dissimilarity that also passes [`check_metric`].
//!
//! All storage is row-major `f64`.

use std::fmt;
use std::ops::Deref;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default absolute tolerance for triangle-inequality validation.
pub const DEFAULT_METRIC_TOL: f64 = 1e-9;

/// `log(1 + e^x)` without overflow.
#[inline]
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// Logistic function `1 / (1 + e^-x)`; the derivative of [`softplus`].
#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Dense row-major square matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    dim: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(dim: usize) -> Self {
        Matrix {
            dim,
            data: vec![0.0; dim * dim],
        }
    }

    pub fn from_fn(dim: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(dim * dim);
        for i in 0..dim {
            for j in 0..dim {
                data.push(f(i, j));
            }
        }
        Matrix { dim, data }
    }

    /// Builds a matrix from row-major data of length `dim * dim`.
    pub fn from_vec(dim: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != dim * dim {
            return Err(Error::Dimension(format!(
                "expected {} entries for a {dim}x{dim} matrix, got {}",
                dim * dim,
                data.len()
            )));
        }
        Ok(Matrix { dim, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.len();
        let mut data = Vec::with_capacity(dim * dim);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != dim {
                return Err(Error::Dimension(format!(
                    "row {i} has {} entries but the matrix has {dim} rows",
                    row.len()
                )));
            }
            data.extend_from_slice(row);
        }
        Ok(Matrix { dim, data })
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.dim + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, value: f64) {
        self.data[i * self.dim + j] = value;
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.data.chunks(self.dim.max(1)).map(<[f64]>::to_vec).collect()
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Matrix {
        Matrix {
            dim: self.dim,
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    pub fn transpose(&self) -> Matrix {
        Matrix::from_fn(self.dim, |i, j| self.get(j, i))
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, x| m.max(x.abs()))
    }
}

/// Symmetric real matrix of unconstrained sign.
#[derive(Debug, Clone, PartialEq)]
pub struct RawSymmetricMatrix(Matrix);

impl RawSymmetricMatrix {
    /// Wraps `m` after checking exact symmetry.
    pub fn new(m: Matrix) -> Result<Self> {
        for i in 0..m.dim() {
            for j in (i + 1)..m.dim() {
                if m.get(i, j) != m.get(j, i) {
                    return Err(Error::Validation(vec![ViolationReport {
                        kind: ViolationKind::Asymmetry,
                        indices: Indices::Pair(i, j),
                        magnitude: (m.get(i, j) - m.get(j, i)).abs(),
                    }]));
                }
            }
        }
        Ok(RawSymmetricMatrix(m))
    }

    /// Entrywise softplus.
    pub fn softplus(&self) -> RawSymmetricMatrix {
        RawSymmetricMatrix(self.0.map(softplus))
    }

    /// Entrywise logistic function.
    pub fn sigmoid(&self) -> RawSymmetricMatrix {
        RawSymmetricMatrix(self.0.map(sigmoid))
    }

    pub fn into_inner(self) -> Matrix {
        self.0
    }

    pub(crate) fn from_symmetric_unchecked(m: Matrix) -> Self {
        debug_assert!((0..m.dim()).all(|i| (0..m.dim()).all(|j| m.get(i, j) == m.get(j, i))));
        RawSymmetricMatrix(m)
    }
}

impl Deref for RawSymmetricMatrix {
    type Target = Matrix;
    fn deref(&self) -> &Matrix {
        &self.0
    }
}

impl From<DissimilarityMatrix> for RawSymmetricMatrix {
    fn from(m: DissimilarityMatrix) -> Self {
        RawSymmetricMatrix(m.0)
    }
}

/// `(X + Xᵀ) / 2`.
pub fn symmetrize(x: &Matrix) -> RawSymmetricMatrix {
    RawSymmetricMatrix(Matrix::from_fn(x.dim(), |i, j| {
        // identical operand order for (i,j) and (j,i) keeps the result exactly symmetric
        let (a, b) = if i <= j {
            (x.get(i, j), x.get(j, i))
        } else {
            (x.get(j, i), x.get(i, j))
        };
        (a + b) / 2.0
    }))
}

/// Symmetric, nonnegative matrix with zero diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct DissimilarityMatrix(Matrix);

impl DissimilarityMatrix {
    /// Validates symmetry, zero diagonal and nonnegativity exactly.
    pub fn new(m: Matrix) -> Result<Self> {
        let reports: Vec<_> = check_metric(&m, 0.0)
            .into_iter()
            .filter(|r| {
                matches!(
                    r.kind,
                    ViolationKind::Asymmetry | ViolationKind::NonzeroDiagonal | ViolationKind::Negativity
                )
            })
            .collect();
        if reports.is_empty() {
            Ok(DissimilarityMatrix(m))
        } else {
            Err(Error::Validation(reports))
        }
    }

    pub fn zeros(dim: usize) -> Self {
        DissimilarityMatrix(Matrix::zeros(dim))
    }

    /// Multiplies every entry by `factor >= 0`.
    pub fn scaled(&self, factor: f64) -> DissimilarityMatrix {
        assert!(factor >= 0.0, "dissimilarities can only be scaled by nonnegative factors");
        DissimilarityMatrix(self.0.map(|x| x * factor))
    }

    /// Top-left or arbitrary principal sub-block selected by `indices`.
    pub fn submatrix(&self, indices: &[usize]) -> DissimilarityMatrix {
        DissimilarityMatrix(Matrix::from_fn(indices.len(), |a, b| {
            self.0.get(indices[a], indices[b])
        }))
    }

    pub fn into_inner(self) -> Matrix {
        self.0
    }

    pub(crate) fn from_valid_unchecked(m: Matrix) -> Self {
        DissimilarityMatrix(m)
    }
}

impl Deref for DissimilarityMatrix {
    type Target = Matrix;
    fn deref(&self) -> &Matrix {
        &self.0
    }
}

impl From<MetricMatrix> for DissimilarityMatrix {
    fn from(m: MetricMatrix) -> Self {
        DissimilarityMatrix(m.0)
    }
}

/// A dissimilarity that satisfies every triangle inequality and is strictly
/// positive off the diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricMatrix(Matrix);

impl MetricMatrix {
    /// Promotes `m` if [`check_metric`] reports nothing at `tol`.
    pub fn try_from_dissimilarity(m: DissimilarityMatrix, tol: f64) -> Result<Self> {
        let reports = check_metric(&m, tol);
        if reports.is_empty() {
            Ok(MetricMatrix(m.0))
        } else {
            Err(Error::Validation(reports))
        }
    }

    pub fn as_dissimilarity(&self) -> DissimilarityMatrix {
        DissimilarityMatrix(self.0.clone())
    }

    pub fn into_inner(self) -> Matrix {
        self.0
    }
}

impl Deref for MetricMatrix {
    type Target = Matrix;
    fn deref(&self) -> &Matrix {
        &self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ViolationKind {
    Asymmetry,
    NonzeroDiagonal,
    Negativity,
    /// Zero distance between distinct points.
    Positivity,
    Triangle,
}

/// Zero-based indices of an offending entry or triangle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Indices {
    Single(usize),
    Pair(usize, usize),
    /// `(i, j, k)`: `M[i][j] > M[i][k] + M[k][j]`.
    Triple(usize, usize, usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViolationReport {
    pub kind: ViolationKind,
    pub indices: Indices,
    /// Size of the violation. For [`ViolationKind::Positivity`] there is no
    /// natural gap, so the magnitude is the indicator value 1.
    pub magnitude: f64,
}

impl fmt::Display for ViolationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?} at {:?} (magnitude {:e})", self.kind, self.indices, self.magnitude)
    }
}

/// Lists every violated metric property of `m`.
///
/// Asymmetry, positivity and triangle violations are reported once per
/// unordered pair `i < j`; the triangle scan covers every apex `k`.
/// An empty result means `m` may be promoted to a [`MetricMatrix`].
pub fn check_metric(m: &Matrix, tol: f64) -> Vec<ViolationReport> {
    assert!(tol >= 0.0, "tolerance must be nonnegative");
    let d = m.dim();
    let mut out = Vec::new();
    for i in 0..d {
        let v = m.get(i, i);
        if v != 0.0 {
            out.push(ViolationReport {
                kind: ViolationKind::NonzeroDiagonal,
                indices: Indices::Single(i),
                magnitude: v.abs(),
            });
        }
    }
    for i in 0..d {
        for j in (i + 1)..d {
            let (a, b) = (m.get(i, j), m.get(j, i));
            if a != b {
                out.push(ViolationReport {
                    kind: ViolationKind::Asymmetry,
                    indices: Indices::Pair(i, j),
                    magnitude: (a - b).abs(),
                });
            }
            for (p, q, v) in [(i, j, a), (j, i, b)] {
                if v < 0.0 && (p < q || a != b) {
                    out.push(ViolationReport {
                        kind: ViolationKind::Negativity,
                        indices: Indices::Pair(p, q),
                        magnitude: -v,
                    });
                }
            }
            if a == 0.0 {
                out.push(ViolationReport {
                    kind: ViolationKind::Positivity,
                    indices: Indices::Pair(i, j),
                    magnitude: 1.0,
                });
            }
        }
    }
    for i in 0..d {
        for j in (i + 1)..d {
            let direct = m.get(i, j);
            for k in 0..d {
                if k == i || k == j {
                    continue;
                }
                let gap = direct - (m.get(i, k) + m.get(k, j));
                if gap > tol {
                    out.push(ViolationReport {
                        kind: ViolationKind::Triangle,
                        indices: Indices::Triple(i, j, k),
                        magnitude: gap,
                    });
                }
            }
        }
    }
    out
}

/// Square root of the sum of squared entries.
pub fn frobenius_norm(m: &Matrix) -> f64 {
    m.frobenius_norm()
}
