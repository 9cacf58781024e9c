//! Plain-text persistence: dense CSV matrices, label files and bundle manifests.
//!
//! A matrix file holds `D` lines of `D` comma-separated decimals with no
//! header. Values are written with 17 significant digits, which round-trips
//! every `f64` exactly.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::datagen::XiLevel;
use crate::error::{Error, Result};
use crate::graph::AdjacencyMask;
use crate::matrices::{symmetrize, DissimilarityMatrix, Matrix};
use crate::mixture::MetricBundle;

/// Formats a value with 17 significant digits.
pub fn format_f64(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn matrix_to_csv(m: &Matrix) -> String {
    let mut out = String::with_capacity(m.dim() * m.dim() * 24);
    for i in 0..m.dim() {
        let row: Vec<String> = m.row(i).iter().map(|&x| format_f64(x)).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

/// Parses a dense square CSV matrix; errors carry 1-based line and column.
pub fn parse_matrix_csv(text: &str, path: &Path) -> Result<Matrix> {
    let parse_err = |line: usize, column: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        column,
        message,
    };
    let mut rows = Vec::new();
    for (ln, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let mut row = Vec::new();
        let mut col = 1;
        for field in line.split(',') {
            let value: f64 = field
                .trim()
                .parse()
                .map_err(|e| parse_err(ln + 1, col, format!("cannot parse {:?}: {e}", field.trim())))?;
            row.push(value);
            col += field.len() + 1;
        }
        rows.push((ln + 1, row));
    }
    let dim = rows.len();
    for (ln, row) in &rows {
        if row.len() != dim {
            return Err(parse_err(
                *ln,
                1,
                format!("expected {dim} values on this line, found {}", row.len()),
            ));
        }
    }
    let rows: Vec<Vec<f64>> = rows.into_iter().map(|(_, r)| r).collect();
    Matrix::from_rows(&rows)
}

pub fn read_matrix(path: &Path) -> Result<Matrix> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_matrix_csv(&text, path)
}

/// Reads a matrix, symmetrizes it and validates it as a dissimilarity.
pub fn read_dissimilarity(path: &Path) -> Result<DissimilarityMatrix> {
    DissimilarityMatrix::new(symmetrize(&read_matrix(path)?).into_inner())
}

pub fn write_matrix(path: &Path, m: &Matrix) -> Result<()> {
    write_text(path, &matrix_to_csv(m))
}

pub fn write_mask(path: &Path, mask: &AdjacencyMask) -> Result<()> {
    let mut out = String::new();
    for i in 0..mask.dim() {
        let row: Vec<&str> = (0..mask.dim())
            .map(|j| if mask.has_edge(i, j) { "1" } else { "0" })
            .collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    write_text(path, &out)
}

pub fn read_mask(path: &Path) -> Result<AdjacencyMask> {
    AdjacencyMask::from_matrix(&read_matrix(path)?)
}

/// One integer label per line.
pub fn read_labels(path: &Path) -> Result<Vec<usize>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(ln, l)| {
            l.trim().parse().map_err(|e| Error::Parse {
                path: path.to_path_buf(),
                line: ln + 1,
                column: 1,
                message: format!("cannot parse label {:?}: {e}", l.trim()),
            })
        })
        .collect()
}

pub fn write_labels(path: &Path, labels: &[usize]) -> Result<()> {
    let mut out = String::new();
    for l in labels {
        out.push_str(&l.to_string());
        out.push('\n');
    }
    write_text(path, &out)
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).expect("result types serialize");
    text.push('\n');
    write_text(path, &text)
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })
}

/// Description of a bundle on disk. Relative paths resolve against the
/// manifest's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BundleManifest {
    /// Declared number of matrices.
    pub r: usize,
    pub matrix_paths: Vec<PathBuf>,
    #[serde(default)]
    pub labels_path: Option<PathBuf>,
    #[serde(default)]
    pub target_path: Option<PathBuf>,
    /// Threshold levels, including any connectivity lifts.
    #[serde(default)]
    pub xi_values: Option<Vec<XiLevel>>,
    /// Frobenius norm of each matrix as written.
    #[serde(default)]
    pub norms: Vec<f64>,
    #[serde(default)]
    pub seed: u64,
}

impl BundleManifest {
    pub fn validate(&self) -> Result<()> {
        let n = self.matrix_paths.len();
        if n != self.r {
            return Err(Error::Configuration(format!(
                "manifest declares {} matrices but lists {n} paths",
                self.r
            )));
        }
        if n == 0 {
            return Err(Error::Configuration("manifest lists no matrices".into()));
        }
        if !self.norms.is_empty() && self.norms.len() != n {
            return Err(Error::Configuration(format!("{} norms for {n} matrices", self.norms.len())));
        }
        if let Some(xi) = &self.xi_values {
            if xi.len() != n {
                return Err(Error::Configuration(format!("{} threshold levels for {n} matrices", xi.len())));
            }
        }
        Ok(())
    }
}

/// A bundle with its optional target, as loaded from a manifest.
#[derive(Debug, Clone)]
pub struct LoadedBundle {
    pub bundle: MetricBundle,
    pub target: Option<DissimilarityMatrix>,
    pub manifest: BundleManifest,
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

pub fn load_bundle(manifest_path: &Path) -> Result<LoadedBundle> {
    let manifest: BundleManifest = read_json(manifest_path)?;
    manifest.validate()?;
    let base = manifest_path.parent().unwrap_or(Path::new("."));
    let check_exists = |p: &Path| -> Result<PathBuf> {
        let full = resolve(base, p);
        if full.exists() {
            Ok(full)
        } else {
            Err(Error::Configuration(format!("listed file {} does not exist", full.display())))
        }
    };
    let metrics = manifest
        .matrix_paths
        .iter()
        .map(|p| read_dissimilarity(&check_exists(p)?))
        .collect::<Result<Vec<_>>>()?;
    let labels = manifest
        .labels_path
        .as_ref()
        .map(|p| read_labels(&check_exists(p)?))
        .transpose()?;
    let target = manifest
        .target_path
        .as_ref()
        .map(|p| read_dissimilarity(&check_exists(p)?))
        .transpose()?;
    let bundle = MetricBundle::new(metrics, labels)?;
    Ok(LoadedBundle {
        bundle,
        target,
        manifest,
    })
}

/// Writes `m_1.csv ... m_R.csv`, optional labels and target, and
/// `manifest.json` into `dir`. Returns the manifest path.
pub fn save_bundle(
    dir: &Path,
    bundle: &MetricBundle,
    target: Option<&DissimilarityMatrix>,
    xi_values: Option<Vec<XiLevel>>,
    seed: u64,
) -> Result<PathBuf> {
    let mut matrix_paths = Vec::new();
    for (r, m) in bundle.metrics().iter().enumerate() {
        let name = PathBuf::from(format!("m_{}.csv", r + 1));
        write_matrix(&dir.join(&name), m)?;
        matrix_paths.push(name);
    }
    let labels_path = match bundle.labels() {
        Some(l) => {
            let name = PathBuf::from("labels.csv");
            write_labels(&dir.join(&name), l)?;
            Some(name)
        }
        None => None,
    };
    let target_path = match target {
        Some(t) => {
            let name = PathBuf::from("target.csv");
            write_matrix(&dir.join(&name), t)?;
            Some(name)
        }
        None => None,
    };
    let manifest = BundleManifest {
        r: bundle.len(),
        matrix_paths,
        labels_path,
        target_path,
        xi_values,
        norms: bundle.metrics().iter().map(|m| m.frobenius_norm()).collect(),
        seed,
    };
    let path = dir.join("manifest.json");
    write_json(&path, &manifest)?;
    Ok(path)
}

/// Renders rows of already-formatted fields as CSV with a header line.
pub fn csv_table(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut out = header.join(",");
    out.push('\n');
    for row in rows {
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}
