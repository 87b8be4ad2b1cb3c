//! Losses between alignments.
//!
//! Matrix-valued losses take the binary indicator matrices of the two
//! alignments (or, for the concave extension, a fractional matrix); the
//! evaluation losses [`delta_abs`] and [`delta_max`] work on paths directly.
//!
//! `L` denotes the lower-triangular all-ones matrix. It is never formed:
//! `L M` is a running sum down each column and `M L` a running sum along each
//! row taken from the right.

use nalgebra::DMatrix;

use crate::alignment::AlignmentPath;
use crate::error::{Error, Result};

pub const POWER_ITERATION_TOL: f64 = 1e-12;
pub const POWER_ITERATION_MAX: usize = 100_000;

/// Slack allowed on the `[0, 1]` range of fractional alignments.
const RANGE_SLACK: f64 = 1e-9;

/// Largest eigenvalue of `L^T L` for the `size x size` lower-triangular
/// all-ones `L`, by power iteration.
pub fn lambda_max_ltl(size: usize) -> Result<f64> {
    if size == 0 {
        return Err(Error::OutOfRange("operator size must be positive".into()));
    }
    let mut v = vec![1.0 / (size as f64).sqrt(); size];
    let mut estimate = 0.0;
    for _ in 0..POWER_ITERATION_MAX {
        // w = L^T L v
        let mut w = v.clone();
        prefix_sum(&mut w);
        suffix_sum(&mut w);
        let rayleigh: f64 = v.iter().zip(&w).map(|(a, b)| a * b).sum();
        let norm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
        for (vi, wi) in v.iter_mut().zip(&w) {
            *vi = wi / norm;
        }
        if (rayleigh - estimate).abs() <= POWER_ITERATION_TOL * rayleigh {
            return Ok(rayleigh);
        }
        estimate = rayleigh;
    }
    Err(Error::NoConvergence {
        iterations: POWER_ITERATION_MAX,
    })
}

fn prefix_sum(v: &mut [f64]) {
    for k in 1..v.len() {
        v[k] += v[k - 1];
    }
}

fn suffix_sum(v: &mut [f64]) {
    for k in (0..v.len().saturating_sub(1)).rev() {
        v[k] += v[k + 1];
    }
}

/// Implicit lower-triangular all-ones matrix with its cached `λ_max(L^T L)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TriangularOperator {
    size: usize,
    lambda_max: f64,
}

impl TriangularOperator {
    pub fn new(size: usize) -> Result<Self> {
        Ok(TriangularOperator {
            size,
            lambda_max: lambda_max_ltl(size)?,
        })
    }

    pub fn size(&self) -> usize {
        self.size
    }

    /// `λ_max(L^T L)`, which also equals `λ_max(L L^T)`.
    pub fn lambda_max(&self) -> f64 {
        self.lambda_max
    }

    /// `L M`: running sums down each column.
    pub fn left(&self, m: &DMatrix<f64>) -> DMatrix<f64> {
        debug_assert_eq!(m.nrows(), self.size);
        lower_left(m)
    }

    /// `L^T M`: running sums up each column.
    pub fn left_transpose(&self, m: &DMatrix<f64>) -> DMatrix<f64> {
        debug_assert_eq!(m.nrows(), self.size);
        let mut out = m.clone();
        for mut col in out.column_iter_mut() {
            suffix_sum(col.as_mut_slice());
        }
        out
    }

    /// `M L`: entry `(i, j)` sums row `i` from column `j` to the end.
    pub fn right(&self, m: &DMatrix<f64>) -> DMatrix<f64> {
        debug_assert_eq!(m.ncols(), self.size);
        lower_right(m)
    }

    /// `M L^T`: entry `(i, j)` sums row `i` from the start to column `j`.
    pub fn right_transpose(&self, m: &DMatrix<f64>) -> DMatrix<f64> {
        debug_assert_eq!(m.ncols(), self.size);
        let mut out = m.clone();
        for j in 1..m.ncols() {
            let prev = out.column(j - 1).clone_owned();
            let mut col = out.column_mut(j);
            col += prev;
        }
        out
    }
}

fn lower_left(m: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = m.clone();
    for mut col in out.column_iter_mut() {
        prefix_sum(col.as_mut_slice());
    }
    out
}

fn lower_right(m: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = m.clone();
    for j in (0..m.ncols().saturating_sub(1)).rev() {
        let next = out.column(j + 1).clone_owned();
        let mut col = out.column_mut(j);
        col += next;
    }
    out
}

fn same_shape(y1: &DMatrix<f64>, y2: &DMatrix<f64>) -> Result<()> {
    if y1.shape() != y2.shape() {
        return Err(Error::dims(format!(
            "alignment matrices are {:?} and {:?}",
            y1.shape(),
            y2.shape()
        )));
    }
    Ok(())
}

/// `‖Y1 - Y2‖_F^2`: the number of cells visited by exactly one path.
pub fn hamming(y1: &DMatrix<f64>, y2: &DMatrix<f64>) -> Result<f64> {
    same_shape(y1, y2)?;
    Ok((y1 - y2).norm_squared())
}

/// Linear form of [`hamming`] for binary matrices:
/// `|Y1| + |Y2| - 2 Tr(Y1^T Y2)`.
pub fn hamming_linear(y1: &DMatrix<f64>, y2: &DMatrix<f64>) -> Result<f64> {
    same_shape(y1, y2)?;
    Ok(y1.sum() + y2.sum() - 2.0 * y1.dot(y2))
}

/// Hamming loss between two paths without forming their matrices.
pub fn hamming_paths(p1: &AlignmentPath, p2: &AlignmentPath) -> Result<f64> {
    same_dims(p1, p2)?;
    let shared = count_shared(p1.steps(), p2.steps());
    Ok((p1.len() + p2.len() - 2 * shared) as f64)
}

fn count_shared(a: &[(usize, usize)], b: &[(usize, usize)]) -> usize {
    // Both step lists are strictly increasing in (i, j) lexicographic order.
    let (mut x, mut y, mut n) = (0, 0, 0);
    while x < a.len() && y < b.len() {
        match a[x].cmp(&b[y]) {
            std::cmp::Ordering::Less => x += 1,
            std::cmp::Ordering::Greater => y += 1,
            std::cmp::Ordering::Equal => {
                n += 1;
                x += 1;
                y += 1;
            }
        }
    }
    n
}

fn same_dims(p1: &AlignmentPath, p2: &AlignmentPath) -> Result<()> {
    if p1.dims() != p2.dims() {
        return Err(Error::dims(format!(
            "paths live on {:?} and {:?} grids",
            p1.dims(),
            p2.dims()
        )));
    }
    Ok(())
}

/// Per-column deviation `δ_t` between two paths, for every column `t` of the
/// grid: the gap between the row ranges each path occupies in that column,
/// `min(|lo1 - hi2|, |hi1 - lo2|)`, and zero when the ranges overlap.
pub fn column_deviations(p1: &AlignmentPath, p2: &AlignmentPath) -> Result<Vec<f64>> {
    same_dims(p1, p2)?;
    let r1 = p1.column_row_ranges();
    let r2 = p2.column_row_ranges();
    Ok(r1
        .iter()
        .zip(&r2)
        .map(|(&(lo1, hi1), &(lo2, hi2))| {
            if lo1 <= hi2 && lo2 <= hi1 {
                0.0
            } else {
                lo1.abs_diff(hi2).min(hi1.abs_diff(lo2)) as f64
            }
        })
        .collect())
}

/// Mean of the per-column deviations, in frames.
pub fn delta_abs(p1: &AlignmentPath, p2: &AlignmentPath) -> Result<f64> {
    let d = column_deviations(p1, p2)?;
    Ok(d.iter().sum::<f64>() / d.len() as f64)
}

/// Largest per-column deviation, in frames.
pub fn delta_max(p1: &AlignmentPath, p2: &AlignmentPath) -> Result<f64> {
    Ok(column_deviations(p1, p2)?.into_iter().fold(0.0, f64::max))
}

/// `‖L (Y1 - Y2)‖_F^2`, the area loss indexed on the rows of the grid.
pub fn area_loss_reference(y1: &DMatrix<f64>, y2: &DMatrix<f64>) -> Result<f64> {
    same_shape(y1, y2)?;
    Ok(lower_left(&(y1 - y2)).norm_squared())
}

/// `½ (‖L (Y1 - Y2)‖_F^2 + ‖(Y1 - Y2) L1‖_F^2)`.
pub fn sym_area_loss(y1: &DMatrix<f64>, y2: &DMatrix<f64>) -> Result<f64> {
    same_shape(y1, y2)?;
    let diff = y1 - y2;
    Ok(0.5 * (lower_left(&diff).norm_squared() + lower_right(&diff).norm_squared()))
}

/// Concave extension of the symmetrized area loss to fractional alignments,
/// for one grid size.
///
/// With `D = λ_max(L^T L) I` and `D1 = λ_max(L1 L1^T) I` the quadratic parts
/// `Tr(Z^T (L^T L - D) Z)` and `Tr(Z (L1 L1^T - D1) Z^T)` are concave, and the
/// linear terms `Tr(D Z U)` replace `Tr(Z^T D Z)` exactly on binary `Z`.
#[derive(Clone, Copy, Debug)]
pub struct ConcaveSal {
    rows: TriangularOperator,
    cols: TriangularOperator,
}

impl ConcaveSal {
    pub fn new(rows: usize, cols: usize) -> Result<Self> {
        Ok(ConcaveSal {
            rows: TriangularOperator::new(rows)?,
            cols: TriangularOperator::new(cols)?,
        })
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows.size, self.cols.size)
    }

    /// `D` and `D1` scalars.
    pub fn diagonal_shifts(&self) -> (f64, f64) {
        (self.rows.lambda_max, self.cols.lambda_max)
    }

    fn check(&self, truth: &DMatrix<f64>, z: &DMatrix<f64>) -> Result<()> {
        if truth.shape() != self.shape() || z.shape() != self.shape() {
            return Err(Error::dims(format!(
                "loss built for {:?}, got truth {:?} and Z {:?}",
                self.shape(),
                truth.shape(),
                z.shape()
            )));
        }
        if let Some(v) = z
            .iter()
            .find(|&&v| !(-RANGE_SLACK..=1.0 + RANGE_SLACK).contains(&v))
        {
            return Err(Error::OutOfRange(format!(
                "fractional alignment entry {v} outside [0, 1]"
            )));
        }
        Ok(())
    }

    pub fn value(&self, truth: &DMatrix<f64>, z: &DMatrix<f64>) -> Result<f64> {
        self.check(truth, z)?;
        let (d, d1) = self.diagonal_shifts();
        let lz = self.rows.left(z);
        let ly = self.rows.left(truth);
        let zl = self.cols.right(z);
        let yl = self.cols.right(truth);
        let z_sq = z.norm_squared();
        let z_sum = z.sum();
        let terms = [
            lz.norm_squared() - d * z_sq,  // Tr(Z^T (L^T L - D) Z)
            d * z_sum,                     // Tr(D Z U)
            -2.0 * lz.dot(&ly),            // -2 Tr(Z^T L^T L Y)
            ly.norm_squared(),             // Tr(Y^T L^T L Y)
            zl.norm_squared() - d1 * z_sq, // Tr(Z (L1 L1^T - D1) Z^T)
            d1 * z_sum,                    // Tr(U D1 Z)
            -2.0 * zl.dot(&yl),            // -2 Tr(Z L1 L1^T Y^T)
            yl.norm_squared(),             // Tr(Y L1 L1^T Y^T)
        ];
        Ok(0.5 * terms.iter().sum::<f64>())
    }

    /// Gradient of [`value`](Self::value) with respect to `z`:
    /// `L^T L (Z - Y) + (Z - Y) L1 L1^T - (d + d1) Z + ½ (d + d1) U`.
    pub fn gradient(&self, truth: &DMatrix<f64>, z: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        self.check(truth, z)?;
        let (d, d1) = self.diagonal_shifts();
        let diff = z - truth;
        let mut g = self.rows.left_transpose(&self.rows.left(&diff));
        g += self.cols.right_transpose(&self.cols.right(&diff));
        g -= z * (d + d1);
        g.add_scalar_mut(0.5 * (d + d1));
        Ok(g)
    }

    /// Coefficients `(quadratic, linear)` of `γ ↦ value(Z + γ Δ)` minus its
    /// value at `γ = 0`.
    pub fn segment_coefficients(
        &self,
        truth: &DMatrix<f64>,
        z: &DMatrix<f64>,
        delta: &DMatrix<f64>,
    ) -> (f64, f64) {
        let (d, d1) = self.diagonal_shifts();
        let shift = d + d1;
        let diff = z - truth;
        let l_delta = self.rows.left(delta);
        let delta_l = self.cols.right(delta);
        let quad = 0.5 * (l_delta.norm_squared() + delta_l.norm_squared())
            - 0.5 * shift * delta.norm_squared();
        let lin = self.rows.left(&diff).dot(&l_delta)
            + self.cols.right(&diff).dot(&delta_l)
            + 0.5 * shift * (delta.sum() - 2.0 * z.dot(delta));
        (quad, lin)
    }
}

/// Concave extension of [`sym_area_loss`] evaluated at a fractional `z`.
pub fn sal_concave(truth: &AlignmentPath, z: &DMatrix<f64>) -> Result<f64> {
    let (r, c) = truth.dims();
    ConcaveSal::new(r, c)?.value(&truth.to_matrix(), z)
}

pub fn sal_concave_gradient(truth: &AlignmentPath, z: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let (r, c) = truth.dims();
    ConcaveSal::new(r, c)?.gradient(&truth.to_matrix(), z)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::alignment::{enumerate_paths, validate};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn path(steps: &[(usize, usize)], rows: usize, cols: usize) -> AlignmentPath {
        validate(steps.to_vec(), rows, cols).unwrap()
    }

    fn lower_ones(t: usize) -> DMatrix<f64> {
        DMatrix::from_fn(t, t, |r, s| if r >= s { 1.0 } else { 0.0 })
    }

    fn random_path(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> AlignmentPath {
        let all = enumerate_paths(rows, cols).unwrap();
        all[rng.gen_range(0..all.len())].clone()
    }

    #[test]
    fn operators_match_dense_products() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let m = DMatrix::from_fn(4, 6, |_, _| rng.gen_range(-1.0..1.0));
        let (l, l1) = (lower_ones(4), lower_ones(6));
        let ol = TriangularOperator::new(4).unwrap();
        let ol1 = TriangularOperator::new(6).unwrap();
        assert!((ol.left(&m) - &l * &m).amax() < 1e-12);
        assert!((ol.left_transpose(&m) - l.transpose() * &m).amax() < 1e-12);
        assert!((ol1.right(&m) - &m * &l1).amax() < 1e-12);
        assert!((ol1.right_transpose(&m) - &m * l1.transpose()).amax() < 1e-12);
    }

    #[test]
    fn lambda_max_values() {
        assert_eq!(lambda_max_ltl(1).unwrap(), 1.0);
        let golden = (3.0 + 5f64.sqrt()) / 2.0;
        assert!((lambda_max_ltl(2).unwrap() - golden).abs() < 1e-10);
        let l = lower_ones(10);
        let dense = nalgebra::SymmetricEigen::new(l.transpose() * &l)
            .eigenvalues
            .max();
        let power = lambda_max_ltl(10).unwrap();
        assert!(((power - dense) / dense).abs() < 1e-9);
        assert!(lambda_max_ltl(0).is_err());
    }

    #[test]
    fn lambda_max_bounds_and_closed_form() {
        for t in 1..=100usize {
            let lm = lambda_max_ltl(t).unwrap();
            let tf = t as f64;
            assert!(lm >= tf - 1e-9 && lm <= tf * tf + 1e-9, "t={t} lm={lm}");
            // Eigenvalues of L^T L are 1 / (4 sin^2((2k-1)π / (4t+2))).
            let s = (std::f64::consts::PI / (4.0 * tf + 2.0)).sin();
            let closed = 1.0 / (4.0 * s * s);
            assert!(((lm - closed) / closed).abs() < 1e-9);
        }
    }

    #[test]
    fn hamming_cases() {
        let y = path(&[(1, 1), (2, 2)], 2, 2).to_matrix();
        assert_eq!(hamming(&y, &y).unwrap(), 0.0);
        let elbow = path(&[(1, 1), (1, 2), (2, 2)], 2, 2).to_matrix();
        assert_eq!(hamming(&y, &elbow).unwrap(), 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..20 {
            let a = random_path(&mut rng, 5, 5);
            let b = random_path(&mut rng, 5, 5);
            let (ma, mb) = (a.to_matrix(), b.to_matrix());
            let frob = hamming(&ma, &mb).unwrap();
            assert_eq!(frob, hamming_linear(&ma, &mb).unwrap());
            assert_eq!(frob, hamming_paths(&a, &b).unwrap());
            assert_eq!(frob, frob.round());
        }
        assert!(hamming(&DMatrix::zeros(2, 2), &DMatrix::zeros(2, 3)).is_err());
    }

    #[test]
    fn delta_hand_cases() {
        let diag = path(&[(1, 1), (2, 2), (3, 3)], 3, 3);
        let other = path(&[(1, 1), (1, 2), (2, 3), (3, 3)], 3, 3);
        assert_eq!(
            column_deviations(&diag, &other).unwrap(),
            vec![0.0, 1.0, 0.0]
        );
        assert!((delta_abs(&diag, &other).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(delta_max(&diag, &other).unwrap(), 1.0);
        assert_eq!(delta_abs(&diag, &diag).unwrap(), 0.0);
        assert_eq!(delta_max(&other, &other).unwrap(), 0.0);
    }

    #[test]
    fn delta_max_of_opposite_corners() {
        for t in 3..9 {
            let down_then_right: Vec<_> = (1..=t)
                .map(|i| (i, 1))
                .chain((2..=t).map(|j| (t, j)))
                .collect();
            let right_then_down: Vec<_> = (1..=t)
                .map(|j| (1, j))
                .chain((2..=t).map(|i| (i, t)))
                .collect();
            let a = path(&down_then_right, t, t);
            let b = path(&right_then_down, t, t);
            assert_eq!(delta_max(&a, &b).unwrap(), (t - 1) as f64);
        }
    }

    #[test]
    fn area_reference_cases() {
        let y1 = path(&[(1, 1), (1, 2), (2, 2)], 2, 2).to_matrix();
        let y2 = path(&[(1, 1), (2, 1), (2, 2)], 2, 2).to_matrix();
        let direct = (lower_ones(2) * (&y1 - &y2)).norm_squared();
        assert_eq!(area_loss_reference(&y1, &y2).unwrap(), direct);
        // L (Y1 - Y2) = [[0, 1], [-1, 1]]
        assert_eq!(direct, 3.0);
        assert_eq!(area_loss_reference(&y1, &y1).unwrap(), 0.0);
    }

    #[test]
    fn sym_area_two_ways() {
        let y1 = path(&[(1, 1), (1, 2), (2, 2)], 2, 2).to_matrix();
        let y2 = path(&[(1, 1), (2, 1), (2, 2)], 2, 2).to_matrix();
        let (l, l1) = (lower_ones(2), lower_ones(2));
        let definition =
            0.5 * ((&l * (&y1 - &y2)).norm_squared() + ((&y1 - &y2) * &l1).norm_squared());
        let ltl = l.transpose() * &l;
        let l1l1t = &l1 * l1.transpose();
        let tr = |m: DMatrix<f64>| m.trace();
        let expansion = 0.5
            * (tr(y1.transpose() * &ltl * &y1) + tr(y2.transpose() * &ltl * &y2)
                - 2.0 * tr(y2.transpose() * &ltl * &y1)
                + tr(&y1 * &l1l1t * y1.transpose())
                + tr(&y2 * &l1l1t * y2.transpose())
                - 2.0 * tr(&y2 * &l1l1t * y1.transpose()));
        let got = sym_area_loss(&y1, &y2).unwrap();
        assert_eq!(got, definition);
        assert!((got - expansion).abs() < 1e-12);
        assert_eq!(sym_area_loss(&y1, &y1).unwrap(), 0.0);
    }

    /// Reflection across the anti-diagonal: `(i, j) -> (cols - 1 - j, rows - 1 - i)`.
    /// It maps paths to paths and swaps the roles of `L` and `L1`.
    fn anti_transpose(m: &DMatrix<f64>) -> DMatrix<f64> {
        let (r, c) = m.shape();
        DMatrix::from_fn(c, r, |i, j| m[(r - 1 - j, c - 1 - i)])
    }

    #[test]
    fn transposed_term_mirrors_reference_area() {
        // For paths without vertical moves the L1 term of the transposed pair
        // measures the same area as the L term of the original pair.
        for (r, c) in [(3, 4), (4, 6), (5, 6)] {
            let flat: Vec<_> = enumerate_paths(r, c)
                .unwrap()
                .into_iter()
                .filter(|p| p.len() == c)
                .map(|p| p.to_matrix())
                .collect();
            for a in &flat {
                for b in &flat {
                    let reference = area_loss_reference(a, b).unwrap();
                    let mirrored = lower_right(&(a.transpose() - b.transpose())).norm_squared();
                    assert_eq!(reference, mirrored);
                    // Both directions agree on pairs that are anti-diagonal mirrors.
                    let (ma, mb) = (anti_transpose(a), anti_transpose(b));
                    assert_eq!(
                        sym_area_loss(a, b).unwrap(),
                        sym_area_loss(&ma, &mb).unwrap()
                    );
                }
            }
        }
    }

    #[test]
    fn losses_are_symmetric_and_vanish_on_equal_paths() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let all = enumerate_paths(4, 5).unwrap();
        for _ in 0..40 {
            let a = &all[rng.gen_range(0..all.len())];
            let b = &all[rng.gen_range(0..all.len())];
            let (ma, mb) = (a.to_matrix(), b.to_matrix());
            for f in [hamming, sym_area_loss] {
                let ab = f(&ma, &mb).unwrap();
                assert_eq!(ab, f(&mb, &ma).unwrap());
                assert!(ab >= 0.0);
                assert_eq!(ab == 0.0, a == b);
            }
            for f in [delta_abs, delta_max] {
                // δ can vanish on distinct paths whose column ranges overlap.
                let ab = f(a, b).unwrap();
                assert_eq!(ab, f(b, a).unwrap());
                assert!(ab >= 0.0);
                assert_eq!(f(a, a).unwrap(), 0.0);
            }
        }
    }

    #[test]
    fn concave_extension_matches_compact_form() {
        // value = ℓ_S(Y, Z) + ½ (d + d1) Σ Z(1 - Z)
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let truth = random_path(&mut rng, 4, 6);
        let sal = ConcaveSal::new(4, 6).unwrap();
        let (d, d1) = sal.diagonal_shifts();
        for _ in 0..10 {
            let z = DMatrix::from_fn(4, 6, |_, _| rng.gen_range(0.0..1.0));
            let y = truth.to_matrix();
            let compact =
                sym_area_loss(&y, &z).unwrap() + 0.5 * (d + d1) * z.map(|v| v * (1.0 - v)).sum();
            let got = sal.value(&y, &z).unwrap();
            assert!((got - compact).abs() < 1e-10 * compact.abs().max(1.0));
        }
    }

    #[test]
    fn concave_extension_coincides_on_integral_points() {
        for (r, c) in [(1, 1), (2, 3), (3, 3), (4, 4)] {
            let all = enumerate_paths(r, c).unwrap();
            let sal = ConcaveSal::new(r, c).unwrap();
            for truth in all.iter().step_by(3) {
                let y = truth.to_matrix();
                for z in &all {
                    let zm = z.to_matrix();
                    let got = sal.value(&y, &zm).unwrap();
                    let want = sym_area_loss(&y, &zm).unwrap();
                    assert!((got - want).abs() <= 1e-10, "{got} vs {want}");
                }
            }
        }
    }

    #[test]
    fn concave_extension_is_concave_on_segments() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let all = enumerate_paths(4, 4).unwrap();
        let truth = &all[17];
        for _ in 0..50 {
            let z1 = all[rng.gen_range(0..all.len())].to_matrix();
            let z2 = all[rng.gen_range(0..all.len())].to_matrix();
            let mid = (&z1 + &z2) * 0.5;
            let f = |z: &DMatrix<f64>| sal_concave(truth, z).unwrap();
            assert!(f(&mid) >= 0.5 * f(&z1) + 0.5 * f(&z2) - 1e-10);
            // Second difference along the segment.
            let h = 0.25;
            let a = &z1 * (0.5 - h) + &z2 * (0.5 + h);
            let b = &z1 * (0.5 + h) + &z2 * (0.5 - h);
            assert!(f(&a) + f(&b) - 2.0 * f(&mid) <= 1e-10);
        }
    }

    #[test]
    fn concave_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let truth = random_path(&mut rng, 4, 4);
        for _ in 0..10 {
            let z = DMatrix::from_fn(4, 4, |_, _| rng.gen_range(0.1..0.9));
            let g = sal_concave_gradient(&truth, &z).unwrap();
            let h = 1e-5;
            for i in 0..4 {
                for j in 0..4 {
                    let mut zp = z.clone();
                    zp[(i, j)] += h;
                    let mut zm = z.clone();
                    zm[(i, j)] -= h;
                    let fd = (sal_concave(&truth, &zp).unwrap()
                        - sal_concave(&truth, &zm).unwrap())
                        / (2.0 * h);
                    let rel = (fd - g[(i, j)]).abs() / g[(i, j)].abs().max(1.0);
                    assert!(rel <= 1e-5, "({i},{j}) fd={fd} g={}", g[(i, j)]);
                }
            }
        }
    }

    #[test]
    fn gradient_follows_anti_diagonal_reflection() {
        // Reflecting the grid swaps L with L1; value and gradient follow.
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let truth = random_path(&mut rng, 3, 5);
        let z = DMatrix::from_fn(3, 5, |_, _| rng.gen_range(0.0..1.0));
        let g = sal_concave_gradient(&truth, &z).unwrap();
        let tt = AlignmentPath::from_matrix(&anti_transpose(&truth.to_matrix())).unwrap();
        let zt = anti_transpose(&z);
        let gt = sal_concave_gradient(&tt, &zt).unwrap();
        assert!((anti_transpose(&g) - gt).amax() < 1e-12);
        assert!((sal_concave(&truth, &z).unwrap() - sal_concave(&tt, &zt).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn second_order_taylor_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let all = enumerate_paths(4, 4).unwrap();
        let truth = &all[5];
        let sal = ConcaveSal::new(4, 4).unwrap();
        let y = truth.to_matrix();
        let (y1, y2) = (all[20].to_matrix(), all[40].to_matrix());
        let z = (&y1 + &y2) * 0.5;
        let delta = &y1 - &y2;
        let (quad, lin) = sal.segment_coefficients(&y, &z, &delta);
        let g = sal.gradient(&y, &z).unwrap();
        assert!((lin - g.dot(&delta)).abs() < 1e-10);
        for _ in 0..5 {
            let c = rng.gen_range(-0.5..0.5);
            let moved = sal.value(&y, &(&z + &delta * c)).unwrap();
            let taylor = sal.value(&y, &z).unwrap() + lin * c + quad * c * c;
            assert!((moved - taylor).abs() < 1e-10);
        }
        assert!(quad <= 1e-12);
    }

    #[test]
    fn out_of_range_fraction_rejected() {
        let truth = path(&[(1, 1), (2, 2)], 2, 2);
        let z = DMatrix::from_row_slice(2, 2, &[1.5, 0.0, 0.0, 1.0]);
        assert!(matches!(sal_concave(&truth, &z), Err(Error::OutOfRange(_))));
        assert!(matches!(
            sal_concave(&truth, &DMatrix::zeros(3, 2)),
            Err(Error::DimensionMismatch(_))
        ));
    }

    #[test]
    fn area_is_geometric_without_vertical_moves() {
        // For paths with one cell per column, ‖L(Y1 - Y2)‖² = Σ_t |k1_t - k2_t|.
        for (r, c) in [(2, 3), (3, 5), (4, 6), (5, 6)] {
            let flat: Vec<_> = enumerate_paths(r, c)
                .unwrap()
                .into_iter()
                .filter(|p| p.len() == c)
                .collect();
            for a in &flat {
                for b in &flat {
                    let rows_a: Vec<usize> = a.steps().iter().map(|s| s.0).collect();
                    let rows_b: Vec<usize> = b.steps().iter().map(|s| s.0).collect();
                    let area: usize = rows_a
                        .iter()
                        .zip(&rows_b)
                        .map(|(x, y)| x.abs_diff(*y))
                        .sum();
                    let got = area_loss_reference(&a.to_matrix(), &b.to_matrix()).unwrap();
                    assert_eq!(got, area as f64);
                }
            }
        }
    }
}
