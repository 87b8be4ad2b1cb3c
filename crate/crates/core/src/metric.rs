//! Mahalanobis affinities, the joint feature map and projections onto the
//! admissible metric sets.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use nalgebra::{DMatrix, SymmetricEigen};

use crate::alignment::{AffinityMatrix, AlignmentPath};
use crate::error::{Error, Result};
use crate::textio;

/// Eigenvalues above this (negative) threshold count as zero.
pub const PSD_TOLERANCE: f64 = 1e-8;
/// Allowed asymmetry of a stored PSD metric.
pub const SYMMETRY_TOLERANCE: f64 = 1e-10;

/// Which set the metric is constrained to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Structure {
    /// Symmetric positive semi-definite.
    Psd,
    /// Diagonal with non-negative entries: a per-feature weighting.
    DiagonalNonneg,
    Unconstrained,
}

impl Structure {
    pub fn as_str(self) -> &'static str {
        match self {
            Structure::Psd => "psd",
            Structure::DiagonalNonneg => "diagonal_nonneg",
            Structure::Unconstrained => "unconstrained",
        }
    }
}

impl fmt::Display for Structure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Structure {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "psd" => Ok(Structure::Psd),
            "diagonal_nonneg" | "diag" => Ok(Structure::DiagonalNonneg),
            "unconstrained" | "free" => Ok(Structure::Unconstrained),
            other => Err(Error::BadSpec(format!(
                "unknown metric structure {other:?}"
            ))),
        }
    }
}

/// The learned parameter `W`.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricMatrix {
    values: DMatrix<f64>,
    structure: Structure,
}

impl MetricMatrix {
    /// Wraps `values`, checking the invariants of `structure`.
    pub fn new(values: DMatrix<f64>, structure: Structure) -> Result<Self> {
        if !values.is_square() {
            return Err(Error::dims(format!(
                "metric must be square, got {:?}",
                values.shape()
            )));
        }
        check_finite(&values)?;
        match structure {
            Structure::Psd => {
                let asym = (&values - values.transpose()).amax();
                if asym > SYMMETRY_TOLERANCE {
                    return Err(Error::OutOfRange(format!("metric asymmetry {asym:e}")));
                }
                let min = min_eigenvalue(&values)?;
                if min < -PSD_TOLERANCE {
                    return Err(Error::OutOfRange(format!("metric has eigenvalue {min:e}")));
                }
            }
            Structure::DiagonalNonneg => {
                let p = values.nrows();
                for i in 0..p {
                    for j in 0..p {
                        let v = values[(i, j)];
                        if (i != j && v != 0.0) || (i == j && v < 0.0) {
                            return Err(Error::OutOfRange(format!(
                                "entry ({}, {}) = {v} violates the diagonal non-negative structure",
                                i + 1,
                                j + 1
                            )));
                        }
                    }
                }
            }
            Structure::Unconstrained => {}
        }
        Ok(MetricMatrix { values, structure })
    }

    pub fn identity(p: usize, structure: Structure) -> Self {
        MetricMatrix {
            values: DMatrix::identity(p, p),
            structure,
        }
    }

    /// `e_k e_k^T`: the metric that looks only at feature `k` (0-based).
    pub fn single_feature(p: usize, k: usize) -> Self {
        let mut values = DMatrix::zeros(p, p);
        values[(k, k)] = 1.0;
        MetricMatrix {
            values,
            structure: Structure::DiagonalNonneg,
        }
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn structure(&self) -> Structure {
        self.structure
    }

    pub fn dim(&self) -> usize {
        self.values.nrows()
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.values
    }

    pub fn to_text(&self) -> String {
        let p = self.dim();
        let mut out = format!("{p} {}\n", self.structure);
        for i in 0..p {
            let row: Vec<String> = (0..p)
                .map(|j| textio::fmt_f64(self.values[(i, j)]))
                .collect();
            out.push_str(&row.join(" "));
            out.push('\n');
        }
        out
    }

    /// Parses the model file format: a `p structure` header line followed by
    /// `p` rows of `p` whitespace-separated numbers.
    pub fn from_text(text: &str, path: &Path) -> Result<Self> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(k, l)| (k + 1, l))
            .filter(|(_, l)| !l.trim().is_empty());
        let (hline, header) = lines
            .next()
            .ok_or_else(|| textio::parse_error(path, 1, 1, "missing header line"))?;
        let head = textio::fields(header, None);
        if head.len() != 2 {
            return Err(textio::parse_error(
                path,
                hline,
                1,
                "header must be `p structure`",
            ));
        }
        let p = textio::parse_usize(path, hline, head[0].0, head[0].1)?;
        let structure: Structure = head[1]
            .1
            .parse()
            .map_err(|e: Error| textio::parse_error(path, hline, head[1].0, e.to_string()))?;
        let mut values = DMatrix::zeros(p, p);
        for i in 0..p {
            let (lno, line) = lines.next().ok_or_else(|| Error::InconsistentDims {
                path: path.to_path_buf(),
                message: format!("expected {p} rows, found {i}"),
            })?;
            let row = textio::fields(line, None);
            if row.len() != p {
                return Err(Error::InconsistentDims {
                    path: path.to_path_buf(),
                    message: format!("line {lno} has {} values, expected {p}", row.len()),
                });
            }
            for (j, (col, tok)) in row.into_iter().enumerate() {
                values[(i, j)] = textio::parse_f64(path, lno, col, tok)?;
            }
        }
        if let Some((lno, _)) = lines.next() {
            return Err(textio::parse_error(
                path,
                lno,
                1,
                "trailing data after metric rows",
            ));
        }
        MetricMatrix::new(values, structure)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        textio::write_string(path, &self.to_text())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_text(&textio::read_to_string(path)?, path)
    }
}

fn check_finite(m: &DMatrix<f64>) -> Result<()> {
    let rows = m.nrows();
    match m.iter().position(|v| !v.is_finite()) {
        Some(k) => Err(Error::NonFinite {
            row: k % rows + 1,
            col: k / rows + 1,
        }),
        None => Ok(()),
    }
}

fn symmetric_part(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

fn eigen(m: DMatrix<f64>) -> Result<SymmetricEigen<f64, nalgebra::Dyn>> {
    SymmetricEigen::try_new(m, f64::EPSILON, 100_000).ok_or(Error::EigenFailure)
}

fn min_eigenvalue(m: &DMatrix<f64>) -> Result<f64> {
    if m.nrows() == 0 {
        return Ok(0.0);
    }
    Ok(eigen(symmetric_part(m))?.eigenvalues.min())
}

/// Frobenius-nearest point of the structure set.
///
/// For [`Structure::Psd`] the input is symmetrized first and negative
/// eigenvalues are clamped to zero.
pub fn project(m: &DMatrix<f64>, structure: Structure) -> Result<MetricMatrix> {
    if !m.is_square() {
        return Err(Error::dims(format!(
            "metric must be square, got {:?}",
            m.shape()
        )));
    }
    check_finite(m)?;
    let values = match structure {
        Structure::Unconstrained => m.clone(),
        Structure::DiagonalNonneg => DMatrix::from_diagonal(&m.diagonal().map(|v| v.max(0.0))),
        Structure::Psd => {
            let eig = eigen(symmetric_part(m))?;
            let clamped = eig.eigenvalues.map(|v| v.max(0.0));
            let v = &eig.eigenvectors;
            let rebuilt = v * DMatrix::from_diagonal(&clamped) * v.transpose();
            symmetric_part(&rebuilt)
        }
    };
    Ok(MetricMatrix { values, structure })
}

/// Rows of `a` as a row-major buffer.
fn rows_of(a: &DMatrix<f64>) -> Vec<f64> {
    a.transpose().as_slice().to_vec()
}

/// `C[i, j] = -(a_i - b_j)^T W (a_i - b_j)`.
///
/// Only the symmetric part of `W` enters the quadratic form.
pub fn affinity(a: &DMatrix<f64>, b: &DMatrix<f64>, w: &MetricMatrix) -> Result<AffinityMatrix> {
    let p = a.ncols();
    if b.ncols() != p || w.dim() != p {
        return Err(Error::dims(format!(
            "A has {} features, B has {}, W is {}x{}",
            p,
            b.ncols(),
            w.dim(),
            w.dim()
        )));
    }
    let (ta, tb) = (a.nrows(), b.nrows());
    let ws = symmetric_part(w.values());
    let diagonal_only = (0..p).all(|i| (0..p).all(|j| i == j || ws[(i, j)] == 0.0));
    let wrows = rows_of(&ws);
    let diag: Vec<f64> = ws.diagonal().iter().copied().collect();
    let ar = rows_of(a);
    let br = rows_of(b);
    let mut out = DMatrix::zeros(ta, tb);
    let mut d = vec![0.0; p];
    for j in 0..tb {
        let bj = &br[j * p..(j + 1) * p];
        for i in 0..ta {
            let ai = &ar[i * p..(i + 1) * p];
            for k in 0..p {
                d[k] = ai[k] - bj[k];
            }
            let q = if diagonal_only {
                d.iter().zip(&diag).map(|(x, w)| w * x * x).sum::<f64>()
            } else {
                let mut q = 0.0;
                for k in 0..p {
                    let row = &wrows[k * p..(k + 1) * p];
                    let wd: f64 = row.iter().zip(&d).map(|(w, x)| w * x).sum();
                    q += d[k] * wd;
                }
                q
            };
            out[(i, j)] = -q;
        }
    }
    AffinityMatrix::new(out)
}

/// A non-negative weighting of grid cells: an alignment path, or a point of
/// its convex hull.
pub trait Coupling {
    fn shape(&self) -> (usize, usize);

    /// Calls `f(i, j, weight)` for every cell with non-zero weight (0-based).
    fn for_each_weight(&self, f: &mut dyn FnMut(usize, usize, f64));
}

impl Coupling for AlignmentPath {
    fn shape(&self) -> (usize, usize) {
        self.dims()
    }

    fn for_each_weight(&self, f: &mut dyn FnMut(usize, usize, f64)) {
        for (i, j) in self.cells() {
            f(i, j, 1.0);
        }
    }
}

impl Coupling for DMatrix<f64> {
    fn shape(&self) -> (usize, usize) {
        DMatrix::shape(self)
    }

    fn for_each_weight(&self, f: &mut dyn FnMut(usize, usize, f64)) {
        for j in 0..self.ncols() {
            for i in 0..self.nrows() {
                let v = self[(i, j)];
                if v != 0.0 {
                    f(i, j, v);
                }
            }
        }
    }
}

fn check_coupling(a: &DMatrix<f64>, b: &DMatrix<f64>, shape: (usize, usize)) -> Result<()> {
    if a.ncols() != b.ncols() {
        return Err(Error::dims(format!(
            "A has {} features, B has {}",
            a.ncols(),
            b.ncols()
        )));
    }
    if shape != (a.nrows(), b.nrows()) {
        return Err(Error::dims(format!(
            "coupling is {:?}, series lengths are ({}, {})",
            shape,
            a.nrows(),
            b.nrows()
        )));
    }
    Ok(())
}

/// Joint feature map `phi = -sum_ij Z[i, j] (a_i - b_j)(a_i - b_j)^T`.
///
/// Expands the sum into row/column-weighted Gram matrices and one cross
/// moment, costing `O((T_A + T_B) p^2 + nnz(Z) p)`.
pub fn feature_map<Z: Coupling + ?Sized>(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    z: &Z,
) -> Result<DMatrix<f64>> {
    check_coupling(a, b, z.shape())?;
    let (ta, tb) = (a.nrows(), b.nrows());
    let p = a.ncols();
    let br = rows_of(b);
    let mut row_w = vec![0.0; ta];
    let mut col_w = vec![0.0; tb];
    // weighted_b[i] = sum_j Z[i, j] b_j
    let mut weighted_b = DMatrix::<f64>::zeros(ta, p);
    z.for_each_weight(&mut |i, j, w| {
        row_w[i] += w;
        col_w[j] += w;
        for k in 0..p {
            weighted_b[(i, k)] += w * br[j * p + k];
        }
    });
    let mut gram = DMatrix::<f64>::zeros(p, p);
    for (i, &w) in row_w.iter().enumerate() {
        if w != 0.0 {
            let ai = a.row(i);
            gram += ai.transpose() * ai * w;
        }
    }
    for (j, &w) in col_w.iter().enumerate() {
        if w != 0.0 {
            let bj = b.row(j);
            gram += bj.transpose() * bj * w;
        }
    }
    let cross = a.transpose() * weighted_b;
    gram -= &cross;
    gram -= cross.transpose();
    Ok(-symmetric_part(&gram))
}

/// Reference triple loop for [`feature_map`], `O(T_A T_B p^2)`.
pub fn feature_map_naive<Z: Coupling + ?Sized>(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    z: &Z,
) -> Result<DMatrix<f64>> {
    check_coupling(a, b, z.shape())?;
    let p = a.ncols();
    let mut out = DMatrix::zeros(p, p);
    z.for_each_weight(&mut |i, j, w| {
        let d = (a.row(i) - b.row(j)).transpose();
        out -= &d * d.transpose() * w;
    });
    Ok(out)
}

/// `psi = phi(truth) - phi(Z)`, the feature difference between the ground
/// truth and a competing (possibly fractional) alignment.
pub fn psi<Z: Coupling + ?Sized>(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    truth: &AlignmentPath,
    z: &Z,
) -> Result<DMatrix<f64>> {
    Ok(feature_map(a, b, truth)? - feature_map(a, b, z)?)
}
