//! C ABI over the warpmetric library.
//!
//! Every function returns a [`WmStatus`]; on failure a message is available
//! from [`wm_last_error`] on the same thread. Matrices cross the boundary as
//! row-major `double` arrays. Paths are arrays of 1-based `(row, col)` pairs,
//! flattened, so a path of `n` steps occupies `2n` entries.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use nalgebra::DMatrix;
use warpmetric::dataset::{load_manifest, SequencePair};
use warpmetric::eval::evaluate;
use warpmetric::losses::hamming_paths;
use warpmetric::train::{train_hamming, train_sal, TrainConfig};
use warpmetric::{
    affinity, delta_abs, delta_max, dtw_decode_banded, sym_area_loss, AffinityMatrix,
    AlignmentPath, Error, MetricMatrix, Structure,
};

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum WmStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    DimensionMismatch = 3,
    /// Unreadable or malformed input data.
    Data = 4,
    Numerical = 5,
    BufferTooSmall = 6,
    /// A Rust panic was caught at the boundary.
    Panic = 7,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum WmStructure {
    Psd = 0,
    DiagonalNonneg = 1,
    Unconstrained = 2,
}

impl From<WmStructure> for Structure {
    fn from(s: WmStructure) -> Self {
        match s {
            WmStructure::Psd => Structure::Psd,
            WmStructure::DiagonalNonneg => Structure::DiagonalNonneg,
            WmStructure::Unconstrained => Structure::Unconstrained,
        }
    }
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum WmLoss {
    Hamming = 0,
    Sal = 1,
}

/// Training options. Fill with [`wm_train_config_default`] first.
#[repr(C)]
#[derive(Clone, Copy, Debug)]
pub struct WmTrainConfig {
    pub loss: WmLoss,
    pub structure: WmStructure,
    pub lambda: f64,
    pub epochs: usize,
    /// Step budget; 0 means `epochs` passes over the data.
    pub steps: usize,
    pub seed: u64,
    pub eval_every: usize,
    pub gap_tolerance: f64,
    /// Decoding band; negative for none.
    pub band: i64,
}

/// Losses between two paths on the same grid.
#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct WmLosses {
    pub hamming: f64,
    pub delta_abs: f64,
    pub delta_max: f64,
    pub sym_area: f64,
}

/// Opaque metric handle.
pub struct WmMetric(MetricMatrix);

/// Opaque handle to a list of sequence pairs.
pub struct WmDataset(Vec<SequencePair>);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

struct Failure(WmStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match &e {
            _ if e.is_numerical() => WmStatus::Numerical,
            Error::DimensionMismatch(_) | Error::InconsistentDims { .. } => {
                WmStatus::DimensionMismatch
            }
            Error::Io { .. }
            | Error::Parse { .. }
            | Error::EmptyDataset
            | Error::MissingTruth { .. }
            | Error::NoFeasiblePath { .. }
            | Error::TooLarge { .. } => WmStatus::Data,
            _ => WmStatus::InvalidArgument,
        };
        Failure(status, e.to_string())
    }
}

type Outcome = Result<(), Failure>;

fn guard(f: impl FnOnce() -> Outcome) -> WmStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => WmStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_last_error(msg);
            status
        }
        Err(_) => {
            set_last_error("internal panic".into());
            WmStatus::Panic
        }
    }
}

fn null(what: &str) -> Failure {
    Failure(WmStatus::NullPointer, format!("{what} is null"))
}

unsafe fn slice<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn object<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn write_out<T>(out: *mut T, value: T, what: &str) -> Outcome {
    if out.is_null() {
        return Err(null(what));
    }
    out.write(value);
    Ok(())
}

unsafe fn matrix(
    p: *const f64,
    rows: usize,
    cols: usize,
    what: &str,
) -> Result<DMatrix<f64>, Failure> {
    let n = rows
        .checked_mul(cols)
        .ok_or_else(|| Failure(WmStatus::InvalidArgument, format!("{what} size overflows")))?;
    Ok(DMatrix::from_row_slice(rows, cols, slice(p, n, what)?))
}

unsafe fn path_arg(
    steps: *const usize,
    len: usize,
    rows: usize,
    cols: usize,
    what: &str,
) -> Result<AlignmentPath, Failure> {
    let flat = slice(steps, len.saturating_mul(2), what)?;
    let pairs = flat.chunks_exact(2).map(|c| (c[0], c[1])).collect();
    Ok(AlignmentPath::new(pairs, rows, cols)?)
}

unsafe fn path_string(p: *const c_char) -> Result<PathBuf, Failure> {
    if p.is_null() {
        return Err(null("path"));
    }
    let s = CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure(WmStatus::InvalidArgument, "path is not UTF-8".into()))?;
    Ok(PathBuf::from(s))
}

fn band(b: i64) -> Option<usize> {
    usize::try_from(b).ok()
}

/// Message for the last failure on this thread, or null. The pointer stays
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn wm_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Builds a metric from `p * p` row-major values; `values` must already
/// satisfy `structure`.
///
/// # Safety
/// `values` must point to `p * p` doubles and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn wm_metric_new(
    values: *const f64,
    p: usize,
    structure: WmStructure,
    out: *mut *mut WmMetric,
) -> WmStatus {
    guard(|| {
        let m = MetricMatrix::new(matrix(values, p, p, "values")?, structure.into())?;
        write_out(out, Box::into_raw(Box::new(WmMetric(m))), "out")
    })
}

/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn wm_metric_identity(
    p: usize,
    structure: WmStructure,
    out: *mut *mut WmMetric,
) -> WmStatus {
    guard(|| {
        if p == 0 {
            return Err(Failure(
                WmStatus::InvalidArgument,
                "dimension must be positive".into(),
            ));
        }
        let m = MetricMatrix::identity(p, structure.into());
        write_out(out, Box::into_raw(Box::new(WmMetric(m))), "out")
    })
}

/// # Safety
/// `path` must be a NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn wm_metric_load(path: *const c_char, out: *mut *mut WmMetric) -> WmStatus {
    guard(|| {
        let m = MetricMatrix::load(&path_string(path)?)?;
        write_out(out, Box::into_raw(Box::new(WmMetric(m))), "out")
    })
}

/// # Safety
/// `metric` must come from this library and `path` be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn wm_metric_save(metric: *const WmMetric, path: *const c_char) -> WmStatus {
    guard(|| {
        let m = object(metric, "metric")?;
        Ok(m.0.save(&path_string(path)?)?)
    })
}

/// Dimension `p` of the metric, or 0 for a null handle.
///
/// # Safety
/// `metric` must be null or come from this library.
#[no_mangle]
pub unsafe extern "C" fn wm_metric_dim(metric: *const WmMetric) -> usize {
    metric.as_ref().map_or(0, |m| m.0.dim())
}

/// Copies the `p * p` values, row-major, into `out`.
///
/// # Safety
/// `out` must have room for `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn wm_metric_values(
    metric: *const WmMetric,
    out: *mut f64,
    len: usize,
) -> WmStatus {
    guard(|| {
        let m = object(metric, "metric")?;
        let p = m.0.dim();
        if len < p * p {
            return Err(Failure(
                WmStatus::BufferTooSmall,
                format!("need {} values, buffer holds {len}", p * p),
            ));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        let v = m.0.values();
        for i in 0..p {
            for j in 0..p {
                out.add(i * p + j).write(v[(i, j)]);
            }
        }
        Ok(())
    })
}

/// # Safety
/// `metric` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn wm_metric_free(metric: *mut WmMetric) {
    if !metric.is_null() {
        drop(Box::from_raw(metric));
    }
}

/// Affinity matrix between `a` (`ta x p`) and `b` (`tb x p`), written
/// row-major into `out` (`ta * tb` doubles).
///
/// # Safety
/// All pointers must reference buffers of the stated sizes.
#[no_mangle]
pub unsafe extern "C" fn wm_affinity(
    a: *const f64,
    ta: usize,
    b: *const f64,
    tb: usize,
    p: usize,
    metric: *const WmMetric,
    out: *mut f64,
    out_len: usize,
) -> WmStatus {
    guard(|| {
        let w = object(metric, "metric")?;
        let c = affinity(&matrix(a, ta, p, "a")?, &matrix(b, tb, p, "b")?, &w.0)?;
        if out_len < ta * tb {
            return Err(Failure(
                WmStatus::BufferTooSmall,
                format!("need {} values, buffer holds {out_len}", ta * tb),
            ));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        let v = c.values();
        for i in 0..ta {
            for j in 0..tb {
                out.add(i * tb + j).write(v[(i, j)]);
            }
        }
        Ok(())
    })
}

/// Highest-scoring path through the `rows x cols` row-major affinity `c`.
/// `steps_out` receives up to `capacity` steps (`2 * capacity` entries);
/// `rows + cols - 1` steps always suffice.
///
/// # Safety
/// `c` must hold `rows * cols` doubles, `steps_out` `2 * capacity` entries,
/// and `len_out` and `score_out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn wm_decode(
    c: *const f64,
    rows: usize,
    cols: usize,
    band_width: i64,
    steps_out: *mut usize,
    capacity: usize,
    len_out: *mut usize,
    score_out: *mut f64,
) -> WmStatus {
    guard(|| {
        let aff = AffinityMatrix::new(matrix(c, rows, cols, "c")?)?;
        let d = dtw_decode_banded(&aff, band(band_width))?;
        let steps = d.path.steps();
        write_out(len_out, steps.len(), "len_out")?;
        if capacity < steps.len() {
            return Err(Failure(
                WmStatus::BufferTooSmall,
                format!("path has {} steps, buffer holds {capacity}", steps.len()),
            ));
        }
        if steps_out.is_null() {
            return Err(null("steps_out"));
        }
        for (k, &(i, j)) in steps.iter().enumerate() {
            steps_out.add(2 * k).write(i);
            steps_out.add(2 * k + 1).write(j);
        }
        write_out(score_out, d.score, "score_out")
    })
}

/// Losses between two paths on a `rows x cols` grid.
///
/// # Safety
/// Each steps array must hold `2 * len` entries; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn wm_losses(
    steps1: *const usize,
    len1: usize,
    steps2: *const usize,
    len2: usize,
    rows: usize,
    cols: usize,
    out: *mut WmLosses,
) -> WmStatus {
    guard(|| {
        let p1 = path_arg(steps1, len1, rows, cols, "steps1")?;
        let p2 = path_arg(steps2, len2, rows, cols, "steps2")?;
        let losses = WmLosses {
            hamming: hamming_paths(&p1, &p2)?,
            delta_abs: delta_abs(&p1, &p2)?,
            delta_max: delta_max(&p1, &p2)?,
            sym_area: sym_area_loss(&p1.to_matrix(), &p2.to_matrix())?,
        };
        write_out(out, losses, "out")
    })
}

/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn wm_dataset_new(out: *mut *mut WmDataset) -> WmStatus {
    guard(|| write_out(out, Box::into_raw(Box::new(WmDataset(Vec::new()))), "out"))
}

/// # Safety
/// `path` must be NUL-terminated and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn wm_dataset_load_manifest(
    path: *const c_char,
    out: *mut *mut WmDataset,
) -> WmStatus {
    guard(|| {
        let pairs = load_manifest(&path_string(path)?)?;
        write_out(out, Box::into_raw(Box::new(WmDataset(pairs))), "out")
    })
}

/// Appends a pair with its ground-truth path (`truth_len` steps).
///
/// # Safety
/// `a` and `b` must hold `ta * p` and `tb * p` doubles, `truth` `2 *
/// truth_len` entries, and `dataset` must come from this library.
#[no_mangle]
pub unsafe extern "C" fn wm_dataset_add_pair(
    dataset: *mut WmDataset,
    a: *const f64,
    ta: usize,
    b: *const f64,
    tb: usize,
    p: usize,
    truth: *const usize,
    truth_len: usize,
) -> WmStatus {
    guard(|| {
        let ds = dataset.as_mut().ok_or_else(|| null("dataset"))?;
        let truth = path_arg(truth, truth_len, ta, tb, "truth")?;
        let id = format!("pair{:03}", ds.0.len());
        let pair = SequencePair::new(
            id,
            matrix(a, ta, p, "a")?,
            matrix(b, tb, p, "b")?,
            Some(truth),
        )?;
        ds.0.push(pair);
        Ok(())
    })
}

/// Number of pairs, or 0 for a null handle.
///
/// # Safety
/// `dataset` must be null or come from this library.
#[no_mangle]
pub unsafe extern "C" fn wm_dataset_len(dataset: *const WmDataset) -> usize {
    dataset.as_ref().map_or(0, |d| d.0.len())
}

/// # Safety
/// `dataset` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn wm_dataset_free(dataset: *mut WmDataset) {
    if !dataset.is_null() {
        drop(Box::from_raw(dataset));
    }
}

/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn wm_train_config_default(out: *mut WmTrainConfig) -> WmStatus {
    guard(|| {
        let d = TrainConfig::default();
        let config = WmTrainConfig {
            loss: WmLoss::Sal,
            structure: WmStructure::Psd,
            lambda: d.lambda,
            epochs: d.epochs,
            steps: 0,
            seed: d.seed,
            eval_every: d.eval_every,
            gap_tolerance: d.gap_tolerance,
            band: -1,
        };
        write_out(out, config, "out")
    })
}

/// Trains a metric on every pair of `dataset`.
///
/// # Safety
/// Handles must come from this library; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn wm_train(
    dataset: *const WmDataset,
    config: *const WmTrainConfig,
    out: *mut *mut WmMetric,
) -> WmStatus {
    guard(|| {
        let ds = object(dataset, "dataset")?;
        let c = object(config, "config")?;
        let config = TrainConfig {
            lambda: c.lambda,
            epochs: c.epochs,
            steps: (c.steps > 0).then_some(c.steps),
            seed: c.seed,
            structure: c.structure.into(),
            eval_every: c.eval_every,
            gap_tolerance: c.gap_tolerance,
            band: band(c.band),
            ..TrainConfig::default()
        };
        let (w, _) = match c.loss {
            WmLoss::Hamming => train_hamming(&ds.0, &config)?,
            WmLoss::Sal => train_sal(&ds.0, &config)?,
        };
        write_out(out, Box::into_raw(Box::new(WmMetric(w))), "out")
    })
}

/// Aligns every pair with `metric` and writes the mean losses against the
/// ground truth into `out` (`sym_area` is left at 0).
///
/// # Safety
/// Handles must come from this library; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn wm_evaluate(
    dataset: *const WmDataset,
    metric: *const WmMetric,
    band_width: i64,
    out: *mut WmLosses,
) -> WmStatus {
    guard(|| {
        let ds = object(dataset, "dataset")?;
        let w = object(metric, "metric")?;
        let s = evaluate(&ds.0, &w.0, band(band_width), "model")?;
        let losses = WmLosses {
            hamming: s.hamming.mean,
            delta_abs: s.delta_abs.mean,
            delta_max: s.delta_max.mean,
            sym_area: 0.0,
        };
        write_out(out, losses, "out")
    })
}
