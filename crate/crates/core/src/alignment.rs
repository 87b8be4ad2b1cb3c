//! Alignment paths, DTW decoding and path enumeration.
//!
//! A path is a sequence of 1-based cell indices `(i, j)` on a `rows x cols`
//! grid that starts at `(1, 1)`, ends at `(rows, cols)` and moves by one of
//! `(1, 0)`, `(0, 1)` or `(1, 1)` at every step. Its binary-matrix view has a
//! one at each visited cell.

use nalgebra::DMatrix;
use num_bigint::BigUint;
use num_traits::{One, ToPrimitive, Zero};

use crate::error::{Error, Result};

/// Upper bound on the number of paths [`enumerate_paths`] will materialize.
pub const ENUMERATION_LIMIT: u64 = 1_000_000;

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct AlignmentPath {
    steps: Vec<(usize, usize)>,
    rows: usize,
    cols: usize,
}

/// Checks the path constraints and builds an [`AlignmentPath`].
///
/// Reports the first violating step (1-based).
pub fn validate(steps: Vec<(usize, usize)>, rows: usize, cols: usize) -> Result<AlignmentPath> {
    if steps.is_empty() {
        return Err(Error::EmptyPath);
    }
    if rows == 0 || cols == 0 {
        return Err(Error::dims(format!("empty grid {rows}x{cols}")));
    }
    if steps[0] != (1, 1) {
        return Err(Error::BadEndpoint {
            index: 1,
            detail: format!("path starts at {:?}, expected (1, 1)", steps[0]),
        });
    }
    for (k, pair) in steps.windows(2).enumerate() {
        let (from, to) = (pair[0], pair[1]);
        let ok = matches!(
            (to.0.checked_sub(from.0), to.1.checked_sub(from.1)),
            (Some(1), Some(0)) | (Some(0), Some(1)) | (Some(1), Some(1))
        );
        if !ok {
            return Err(Error::BadMove {
                index: k + 2,
                from,
                to,
            });
        }
        if to.0 > rows || to.1 > cols {
            return Err(Error::OutOfGrid {
                index: k + 2,
                cell: to,
                rows,
                cols,
            });
        }
    }
    let last = *steps.last().unwrap();
    if last != (rows, cols) {
        return Err(Error::BadEndpoint {
            index: steps.len(),
            detail: format!("path ends at {last:?}, expected ({rows}, {cols})"),
        });
    }
    Ok(AlignmentPath { steps, rows, cols })
}

impl AlignmentPath {
    pub fn new(steps: Vec<(usize, usize)>, rows: usize, cols: usize) -> Result<Self> {
        validate(steps, rows, cols)
    }

    /// Builds a path from 0-based cells that are already known to be valid.
    pub(crate) fn from_zero_based(
        cells: impl IntoIterator<Item = (usize, usize)>,
        rows: usize,
        cols: usize,
    ) -> Self {
        let steps: Vec<_> = cells.into_iter().map(|(i, j)| (i + 1, j + 1)).collect();
        debug_assert!(validate(steps.clone(), rows, cols).is_ok());
        AlignmentPath { steps, rows, cols }
    }

    /// The pure-diagonal path of a square grid, or the staircase that hugs the
    /// diagonal of a rectangular one.
    pub fn diagonal(rows: usize, cols: usize) -> Self {
        let len = rows.max(cols);
        let along = |k: usize, side: usize| {
            if len == 1 {
                0
            } else {
                (k * (side - 1) + (len - 1) / 2) / (len - 1)
            }
        };
        let cells = (0..len).map(|k| (along(k, rows), along(k, cols)));
        AlignmentPath::from_zero_based(cells, rows, cols)
    }

    /// 1-based steps.
    pub fn steps(&self) -> &[(usize, usize)] {
        &self.steps
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// 0-based cells, for indexing into matrices.
    pub fn cells(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.steps.iter().map(|&(i, j)| (i - 1, j - 1))
    }

    pub fn to_matrix(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.rows, self.cols);
        for (i, j) in self.cells() {
            m[(i, j)] = 1.0;
        }
        m
    }

    /// Inverse of [`to_matrix`](Self::to_matrix). Rejects matrices that are not
    /// the indicator of a valid path.
    pub fn from_matrix(m: &DMatrix<f64>) -> Result<Self> {
        let (rows, cols) = m.shape();
        if rows == 0 || cols == 0 {
            return Err(Error::dims("empty matrix"));
        }
        let mut ones = 0usize;
        for (k, &v) in m.iter().enumerate() {
            if v == 1.0 {
                ones += 1;
            } else if v != 0.0 {
                let (i, j) = (k % rows, k / rows);
                return Err(Error::OutOfRange(format!(
                    "entry ({}, {}) = {v} is not binary",
                    i + 1,
                    j + 1
                )));
            }
        }
        if m[(0, 0)] != 1.0 {
            return Err(Error::BadEndpoint {
                index: 1,
                detail: "cell (1, 1) is not set".into(),
            });
        }
        let mut cells = vec![(0usize, 0usize)];
        let (mut i, mut j) = (0usize, 0usize);
        while (i, j) != (rows - 1, cols - 1) {
            let set = |a: usize, b: usize| a < rows && b < cols && m[(a, b)] == 1.0;
            // A set vertical or horizontal neighbour can only be reached from
            // here, so it takes precedence over the diagonal.
            if set(i + 1, j) {
                i += 1;
            } else if set(i, j + 1) {
                j += 1;
            } else if set(i + 1, j + 1) {
                i += 1;
                j += 1;
            } else {
                return Err(Error::BadEndpoint {
                    index: cells.len(),
                    detail: format!("path stops at ({}, {})", i + 1, j + 1),
                });
            }
            cells.push((i, j));
        }
        if cells.len() != ones {
            return Err(Error::OutOfRange(format!(
                "{} set cells but the path from (1, 1) visits {}",
                ones,
                cells.len()
            )));
        }
        Ok(AlignmentPath::from_zero_based(cells, rows, cols))
    }

    /// Sum of `values` over the visited cells.
    pub fn score(&self, values: &DMatrix<f64>) -> f64 {
        self.cells().map(|c| values[c]).sum()
    }

    /// For every column, the smallest and largest 1-based row visited.
    pub fn column_row_ranges(&self) -> Vec<(usize, usize)> {
        let mut ranges = vec![(usize::MAX, 0usize); self.cols];
        for &(i, j) in &self.steps {
            let r = &mut ranges[j - 1];
            r.0 = r.0.min(i);
            r.1 = r.1.max(i);
        }
        ranges
    }
}

/// A finite affinity matrix; larger entries mean more similar frames.
#[derive(Clone, Debug, PartialEq)]
pub struct AffinityMatrix(DMatrix<f64>);

impl AffinityMatrix {
    pub fn new(values: DMatrix<f64>) -> Result<Self> {
        let rows = values.nrows();
        if rows == 0 || values.ncols() == 0 {
            return Err(Error::dims("affinity matrix has an empty side"));
        }
        if let Some(k) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                row: k % rows + 1,
                col: k / rows + 1,
            });
        }
        Ok(AffinityMatrix(values))
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.0
    }

    pub fn shape(&self) -> (usize, usize) {
        self.0.shape()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Decoded {
    pub path: AlignmentPath,
    pub score: f64,
}

#[derive(Clone, Copy)]
#[repr(u8)]
enum Move {
    Start,
    Diagonal,
    Vertical,
    Horizontal,
}

/// Maximizes the summed affinity over all alignment paths.
///
/// Exact ties in backtracking prefer the diagonal move, then the vertical
/// move `(i-1, j)`, then the horizontal move `(i, j-1)`.
pub fn dtw_decode(c: &AffinityMatrix) -> Decoded {
    decode_inner(c.values(), None).expect("unbanded decoding always has a feasible path")
}

/// [`dtw_decode`] restricted to cells within `band` frames of the grid
/// diagonal (measured along the longer side).
pub fn dtw_decode_banded(c: &AffinityMatrix, band: Option<usize>) -> Result<Decoded> {
    decode_inner(c.values(), band)
}

fn in_band(i: usize, j: usize, rows: usize, cols: usize, band: usize) -> bool {
    let lhs = (i * (cols - 1)) as i128 - (j * (rows - 1)) as i128;
    let scale = (rows - 1).max(cols - 1).max(1) as i128;
    lhs.abs() <= band as i128 * scale
}

fn decode_inner(c: &DMatrix<f64>, band: Option<usize>) -> Result<Decoded> {
    let (rows, cols) = c.shape();
    // Padded cumulative table; row/column 0 hold -inf.
    let width = cols + 1;
    let mut acc = vec![f64::NEG_INFINITY; (rows + 1) * width];
    let mut moves = vec![Move::Start; rows * cols];
    for i in 1..=rows {
        for j in 1..=cols {
            if let Some(w) = band {
                if !in_band(i - 1, j - 1, rows, cols, w) {
                    continue;
                }
            }
            let here = c[(i - 1, j - 1)];
            if i == 1 && j == 1 {
                acc[width + 1] = here;
                continue;
            }
            let diag = acc[(i - 1) * width + j - 1];
            let up = acc[(i - 1) * width + j];
            let left = acc[i * width + j - 1];
            let (best, mv) = if diag >= up && diag >= left {
                (diag, Move::Diagonal)
            } else if up >= left {
                (up, Move::Vertical)
            } else {
                (left, Move::Horizontal)
            };
            if best == f64::NEG_INFINITY {
                continue;
            }
            acc[i * width + j] = here + best;
            moves[(i - 1) * cols + j - 1] = mv;
        }
    }
    let score = acc[rows * width + cols];
    if score == f64::NEG_INFINITY {
        return Err(Error::NoFeasiblePath {
            band: band.unwrap_or(0),
        });
    }
    let mut cells = Vec::with_capacity(rows + cols - 1);
    let (mut i, mut j) = (rows - 1, cols - 1);
    cells.push((i, j));
    while (i, j) != (0, 0) {
        match moves[i * cols + j] {
            Move::Diagonal => {
                i -= 1;
                j -= 1;
            }
            Move::Vertical => i -= 1,
            Move::Horizontal => j -= 1,
            Move::Start => unreachable!("backtracking reached an unset cell"),
        }
        cells.push((i, j));
    }
    cells.reverse();
    Ok(Decoded {
        path: AlignmentPath::from_zero_based(cells, rows, cols),
        score,
    })
}

/// Number of alignment paths on a `rows x cols` grid, i.e. the Delannoy
/// number `D(rows - 1, cols - 1)`.
pub fn delannoy_count(rows: usize, cols: usize) -> BigUint {
    assert!(rows >= 1 && cols >= 1, "grid sides must be positive");
    let mut prev: Vec<BigUint> = vec![BigUint::one(); cols];
    for _ in 1..rows {
        let mut cur: Vec<BigUint> = vec![BigUint::zero(); cols];
        cur[0] = BigUint::one();
        for j in 1..cols {
            cur[j] = &prev[j] + &cur[j - 1] + &prev[j - 1];
        }
        prev = cur;
    }
    prev.pop().unwrap()
}

/// Every alignment path of the grid, in lexicographic move order
/// (diagonal, vertical, horizontal). Refuses grids with more than
/// [`ENUMERATION_LIMIT`] paths.
pub fn enumerate_paths(rows: usize, cols: usize) -> Result<Vec<AlignmentPath>> {
    if rows == 0 || cols == 0 {
        return Err(Error::dims(format!("empty grid {rows}x{cols}")));
    }
    let count = delannoy_count(rows, cols);
    let n = match count.to_u64() {
        Some(n) if n <= ENUMERATION_LIMIT => n as usize,
        _ => {
            return Err(Error::TooLarge {
                count: count.to_string(),
                limit: ENUMERATION_LIMIT,
            })
        }
    };
    let mut out = Vec::with_capacity(n);
    let mut stack = vec![(0usize, 0usize)];
    extend_paths(&mut stack, rows, cols, &mut out);
    debug_assert_eq!(out.len(), n);
    Ok(out)
}

fn extend_paths(
    stack: &mut Vec<(usize, usize)>,
    rows: usize,
    cols: usize,
    out: &mut Vec<AlignmentPath>,
) {
    let (i, j) = *stack.last().unwrap();
    if (i, j) == (rows - 1, cols - 1) {
        out.push(AlignmentPath::from_zero_based(
            stack.iter().copied(),
            rows,
            cols,
        ));
        return;
    }
    for (di, dj) in [(1, 1), (1, 0), (0, 1)] {
        let (ni, nj) = (i + di, j + dj);
        if ni < rows && nj < cols {
            stack.push((ni, nj));
            extend_paths(stack, rows, cols, out);
            stack.pop();
        }
    }
}
