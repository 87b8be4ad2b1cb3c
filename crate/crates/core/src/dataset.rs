//! Sequence pairs, their on-disk formats, feature normalization and a
//! synthetic generator of warped pairs with known alignment.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::alignment::{validate, AlignmentPath};
use crate::error::{Error, Result};
use crate::textio::{
    fields, fmt_f64, parse_error, parse_f64, parse_usize, read_to_string, write_string,
};

/// Columns whose spread falls below this are only centered.
pub const SCALE_FLOOR: f64 = 1e-12;

/// Two series (frames in rows, features in columns) and optionally their
/// ground-truth alignment.
#[derive(Clone, Debug, PartialEq)]
pub struct SequencePair {
    pub id: String,
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub truth: Option<AlignmentPath>,
}

impl SequencePair {
    pub fn new(
        id: impl Into<String>,
        a: DMatrix<f64>,
        b: DMatrix<f64>,
        truth: Option<AlignmentPath>,
    ) -> Result<Self> {
        let id = id.into();
        if a.ncols() != b.ncols() {
            return Err(Error::dims(format!(
                "pair {id:?}: A has {} features, B has {}",
                a.ncols(),
                b.ncols()
            )));
        }
        if a.nrows() == 0 || b.nrows() == 0 {
            return Err(Error::dims(format!("pair {id:?}: empty series")));
        }
        if let Some(t) = &truth {
            if t.dims() != (a.nrows(), b.nrows()) {
                return Err(Error::dims(format!(
                    "pair {id:?}: truth is for a {:?} grid, series are ({}, {})",
                    t.dims(),
                    a.nrows(),
                    b.nrows()
                )));
            }
        }
        Ok(SequencePair { id, a, b, truth })
    }

    pub fn features(&self) -> usize {
        self.a.ncols()
    }

    pub fn grid(&self) -> (usize, usize) {
        (self.a.nrows(), self.b.nrows())
    }

    /// The ground truth, or [`Error::MissingTruth`].
    pub fn truth(&self) -> Result<&AlignmentPath> {
        self.truth.as_ref().ok_or_else(|| Error::MissingTruth {
            id: self.id.clone(),
        })
    }
}

/// Checks that a training set is non-empty, has truths and a single feature
/// dimension, which it returns.
pub fn check_training_set(pairs: &[SequencePair]) -> Result<usize> {
    let first = pairs.first().ok_or(Error::EmptyDataset)?;
    let p = first.features();
    for pair in pairs {
        pair.truth()?;
        if pair.features() != p {
            return Err(Error::dims(format!(
                "pair {:?} has {} features, expected {p}",
                pair.id,
                pair.features()
            )));
        }
    }
    Ok(p)
}

// ---------------------------------------------------------------------------
// normalization

/// Spread estimate used by [`normalize`].
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Spread {
    /// Root-mean-square deviation about the median.
    #[default]
    RmsAboutMedian,
    /// Median absolute deviation about the median.
    Mad,
}

impl FromStr for Spread {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rms_about_median" | "rms" => Ok(Spread::RmsAboutMedian),
            "mad" => Ok(Spread::Mad),
            other => Err(Error::BadSpec(format!("unknown spread {other:?}"))),
        }
    }
}

/// Median with the midpoint convention for even lengths.
fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Per column: subtract the median, divide by the spread about it.
pub fn normalize(series: &DMatrix<f64>, spread: Spread) -> DMatrix<f64> {
    let mut out = series.clone();
    for mut col in out.column_iter_mut() {
        let mut buf: Vec<f64> = col.iter().copied().collect();
        if buf.is_empty() {
            continue;
        }
        let m = median(&mut buf);
        let s = match spread {
            Spread::RmsAboutMedian => {
                (col.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / col.len() as f64).sqrt()
            }
            Spread::Mad => {
                let mut dev: Vec<f64> = col.iter().map(|x| (x - m).abs()).collect();
                median(&mut dev)
            }
        };
        let s = if s < SCALE_FLOOR { 1.0 } else { s };
        col.apply(|x| *x = (*x - m) / s);
    }
    out
}

impl SequencePair {
    /// Normalizes both series column-wise.
    pub fn normalized(&self, spread: Spread) -> SequencePair {
        SequencePair {
            id: self.id.clone(),
            a: normalize(&self.a, spread),
            b: normalize(&self.b, spread),
            truth: self.truth.clone(),
        }
    }
}

// ---------------------------------------------------------------------------
// synthetic generation

/// Recipe for one synthetic pair. `B` is `A`'s clean signal replayed along a
/// piecewise-linear tempo curve.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WarpSpec {
    pub base_length: usize,
    /// `(position, tempo)` knots; positions strictly increase from 0 to 1.
    /// A tempo of 2 spends two frames of `B` per frame of `A`.
    pub warp_knots: Vec<(f64, f64)>,
    pub noise_sigma: f64,
    pub informative_dims: usize,
    pub noise_dims: usize,
    /// Amplitude of the smooth distractor signal in the noise dimensions.
    #[serde(default = "one")]
    pub noise_dim_scale: f64,
    pub seed: u64,
}

fn one() -> f64 {
    1.0
}

impl WarpSpec {
    pub fn check(&self) -> Result<()> {
        let bad = |m: String| Err(Error::BadSpec(m));
        if self.base_length == 0 {
            return bad("base_length must be positive".into());
        }
        if self.informative_dims + self.noise_dims == 0 {
            return bad("at least one feature dimension is required".into());
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return bad(format!(
                "noise_sigma must be finite and non-negative, got {}",
                self.noise_sigma
            ));
        }
        if !(self.noise_dim_scale >= 0.0 && self.noise_dim_scale.is_finite()) {
            return bad(format!(
                "noise_dim_scale must be finite and non-negative, got {}",
                self.noise_dim_scale
            ));
        }
        let k = &self.warp_knots;
        if k.len() < 2 || k[0].0 != 0.0 || k[k.len() - 1].0 != 1.0 {
            return bad("warp knots must start at position 0 and end at position 1".into());
        }
        if k.windows(2).any(|w| !(w[1].0 > w[0].0)) {
            return bad("warp knot positions must strictly increase".into());
        }
        if k.iter().any(|&(_, t)| !(t > 0.0 && t.is_finite())) {
            return bad("tempo multipliers must be positive".into());
        }
        Ok(())
    }

    fn tempo(&self, u: f64) -> f64 {
        let k = &self.warp_knots;
        let idx = k
            .partition_point(|&(pos, _)| pos <= u)
            .clamp(1, k.len() - 1);
        let (p0, t0) = k[idx - 1];
        let (p1, t1) = k[idx];
        let s = ((u - p0) / (p1 - p0)).clamp(0.0, 1.0);
        t0 + s * (t1 - t0)
    }

    /// `source[j]`: the frame of `A` that frame `j` of `B` replays.
    pub fn warp_map(&self) -> Vec<usize> {
        let n = self.base_length;
        let mut ends = Vec::with_capacity(n);
        let mut acc = 0.0;
        for i in 0..n {
            acc += self.tempo((i as f64 + 0.5) / n as f64);
            ends.push(acc);
        }
        let tb = (acc.round() as usize).max(1);
        let scale = acc / tb as f64;
        let mut source = Vec::with_capacity(tb);
        let mut i = 0;
        for j in 0..tb {
            let centre = (j as f64 + 0.5) * scale;
            while i + 1 < n && ends[i] <= centre {
                i += 1;
            }
            source.push(i);
        }
        source[0] = 0;
        source[tb - 1] = n - 1;
        source
    }
}

/// The alignment induced by a monotone frame map: column `j` covers the rows
/// `source[j-1] + 1 ..= source[j]`, or just `source[j]` when it repeats.
pub fn path_from_warp(source: &[usize], rows: usize) -> Result<AlignmentPath> {
    let mut steps = Vec::with_capacity(rows + source.len());
    let mut prev: Option<usize> = None;
    for (j, &r) in source.iter().enumerate() {
        let start = match prev {
            Some(p) if r > p => p + 1,
            _ => r,
        };
        for i in start..=r {
            steps.push((i + 1, j + 1));
        }
        prev = Some(r);
    }
    validate(steps, rows, source.len())
}

struct Sinusoid {
    freq: f64,
    phase: f64,
    amp: f64,
}

/// A smooth random signal: a few sinusoids with 1 to 6 cycles per `period`
/// frames.
fn smooth_signal(rng: &mut ChaCha8Rng, frames: usize, period: f64) -> Vec<f64> {
    let parts: Vec<Sinusoid> = (0..3)
        .map(|_| Sinusoid {
            freq: rng.gen_range(1.0..6.0) / period,
            phase: rng.gen_range(0.0..2.0 * PI),
            amp: rng.gen_range(0.5..1.0),
        })
        .collect();
    (0..frames)
        .map(|t| {
            parts
                .iter()
                .map(|s| s.amp * (2.0 * PI * s.freq * t as f64 + s.phase).sin())
                .sum()
        })
        .collect()
}

fn noise(rng: &mut ChaCha8Rng, sigma: f64) -> f64 {
    if sigma == 0.0 {
        0.0
    } else {
        Normal::new(0.0, sigma).expect("sigma checked").sample(rng)
    }
}

/// Draws one warped pair. Informative columns come first, noise columns last.
pub fn generate_pair(spec: &WarpSpec, id: impl Into<String>) -> Result<SequencePair> {
    spec.check()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let ta = spec.base_length;
    let source = spec.warp_map();
    let tb = source.len();
    let (pi, pn) = (spec.informative_dims, spec.noise_dims);
    let p = pi + pn;
    let period = ta as f64;

    let mut a = DMatrix::zeros(ta, p);
    let mut b = DMatrix::zeros(tb, p);
    for k in 0..pi {
        let base = smooth_signal(&mut rng, ta, period);
        for i in 0..ta {
            a[(i, k)] = base[i] + noise(&mut rng, spec.noise_sigma);
        }
        for j in 0..tb {
            b[(j, k)] = base[source[j]] + noise(&mut rng, spec.noise_sigma);
        }
    }
    // Distractors: unrelated smooth signals in A and in B.
    for k in pi..p {
        let sa = smooth_signal(&mut rng, ta, period);
        let sb = smooth_signal(&mut rng, tb, tb as f64);
        for i in 0..ta {
            a[(i, k)] = spec.noise_dim_scale * sa[i] + noise(&mut rng, spec.noise_sigma);
        }
        for j in 0..tb {
            b[(j, k)] = spec.noise_dim_scale * sb[j] + noise(&mut rng, spec.noise_sigma);
        }
    }
    let truth = path_from_warp(&source, ta)?;
    SequencePair::new(id, a, b, Some(truth))
}

/// Recipe for a whole synthetic dataset; each pair gets its own length, tempo
/// curve and seed drawn from `seed`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthSpec {
    pub pairs: usize,
    pub min_length: usize,
    pub max_length: usize,
    /// Interior knots per tempo curve (the end points are always present).
    #[serde(default = "default_knots")]
    pub interior_knots: usize,
    pub min_tempo: f64,
    pub max_tempo: f64,
    pub noise_sigma: f64,
    pub informative_dims: usize,
    pub noise_dims: usize,
    #[serde(default = "one")]
    pub noise_dim_scale: f64,
    pub seed: u64,
    #[serde(default = "default_prefix")]
    pub id_prefix: String,
}

fn default_knots() -> usize {
    3
}

fn default_prefix() -> String {
    "pair".into()
}

impl SynthSpec {
    pub fn from_json(text: &str, path: &Path) -> Result<Self> {
        serde_json::from_str(text)
            .map_err(|e| parse_error(path, e.line(), e.column(), e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&read_to_string(path)?, path)
    }

    /// The per-pair recipes, in order.
    pub fn warp_specs(&self) -> Result<Vec<WarpSpec>> {
        if self.min_length == 0 || self.min_length > self.max_length {
            return Err(Error::BadSpec(format!(
                "length range [{}, {}] is empty",
                self.min_length, self.max_length
            )));
        }
        if !(self.min_tempo > 0.0 && self.min_tempo <= self.max_tempo && self.max_tempo.is_finite())
        {
            return Err(Error::BadSpec(format!(
                "tempo range [{}, {}] must be positive and non-empty",
                self.min_tempo, self.max_tempo
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let mut out = Vec::with_capacity(self.pairs);
        for _ in 0..self.pairs {
            let base_length = rng.gen_range(self.min_length..=self.max_length);
            let mut positions: Vec<f64> = (0..self.interior_knots)
                .map(|_| rng.gen_range(0.05..0.95))
                .collect();
            positions.sort_by(f64::total_cmp);
            positions.dedup();
            let mut warp_knots = vec![(0.0, 0.0)];
            warp_knots.extend(positions.into_iter().map(|x| (x, 0.0)));
            warp_knots.push((1.0, 0.0));
            for k in &mut warp_knots {
                k.1 = if self.min_tempo == self.max_tempo {
                    self.min_tempo
                } else {
                    rng.gen_range(self.min_tempo..=self.max_tempo)
                };
            }
            out.push(WarpSpec {
                base_length,
                warp_knots,
                noise_sigma: self.noise_sigma,
                informative_dims: self.informative_dims,
                noise_dims: self.noise_dims,
                noise_dim_scale: self.noise_dim_scale,
                seed: rng.gen(),
            });
        }
        Ok(out)
    }

    pub fn generate(&self) -> Result<Vec<SequencePair>> {
        self.warp_specs()?
            .iter()
            .enumerate()
            .map(|(k, spec)| generate_pair(spec, format!("{}{:03}", self.id_prefix, k)))
            .collect()
    }
}

// ---------------------------------------------------------------------------
// files

/// Writes a matrix as header-less CSV, one frame per row.
pub fn matrix_to_csv(m: &DMatrix<f64>) -> String {
    let mut s = String::new();
    for row in m.row_iter() {
        let line: Vec<String> = row.iter().map(|&v| fmt_f64(v)).collect();
        s.push_str(&line.join(","));
        s.push('\n');
    }
    s
}

pub fn matrix_from_csv(text: &str, path: &Path) -> Result<DMatrix<f64>> {
    let mut data = Vec::new();
    let mut width = None;
    let mut rows = 0;
    for (n, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let f = fields(line, Some(','));
        match width {
            None => width = Some(f.len()),
            Some(w) if w != f.len() => {
                return Err(Error::InconsistentDims {
                    path: path.to_path_buf(),
                    message: format!("line {} has {} values, expected {w}", n + 1, f.len()),
                })
            }
            _ => {}
        }
        for (col, field) in f {
            data.push(parse_f64(path, n + 1, col, field)?);
        }
        rows += 1;
    }
    let cols = width.unwrap_or(0);
    Ok(DMatrix::from_row_slice(rows, cols, &data))
}

pub fn path_to_csv(p: &AlignmentPath) -> String {
    p.steps()
        .iter()
        .map(|(i, j)| format!("{i},{j}\n"))
        .collect()
}

/// Reads `i,j` rows and checks them against the `rows x cols` grid.
pub fn path_from_csv(text: &str, path: &Path, rows: usize, cols: usize) -> Result<AlignmentPath> {
    let mut steps = Vec::new();
    for (n, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let f = fields(line, Some(','));
        if f.len() != 2 {
            return Err(parse_error(
                path,
                n + 1,
                1,
                format!("expected \"i,j\", found {line:?}"),
            ));
        }
        let i = parse_usize(path, n + 1, f[0].0, f[0].1)?;
        let j = parse_usize(path, n + 1, f[1].0, f[1].1)?;
        steps.push((i, j));
    }
    validate(steps, rows, cols).map_err(|e| Error::InconsistentDims {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

pub fn load_matrix(path: &Path) -> Result<DMatrix<f64>> {
    matrix_from_csv(&read_to_string(path)?, path)
}

pub fn save_matrix(m: &DMatrix<f64>, path: &Path) -> Result<()> {
    write_string(path, &matrix_to_csv(m))
}

pub fn load_path(path: &Path, rows: usize, cols: usize) -> Result<AlignmentPath> {
    path_from_csv(&read_to_string(path)?, path, rows, cols)
}

pub fn save_path(p: &AlignmentPath, path: &Path) -> Result<()> {
    write_string(path, &path_to_csv(p))
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ManifestEntry {
    id: String,
    #[serde(rename = "file_A")]
    file_a: String,
    #[serde(rename = "file_B")]
    file_b: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    file_truth: Option<String>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Manifest {
    pairs: Vec<ManifestEntry>,
}

fn check_id(id: &str) -> Result<()> {
    let ok = !id.is_empty()
        && id
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || "_-.".contains(c));
    if ok && id != "." && id != ".." {
        Ok(())
    } else {
        Err(Error::BadSpec(format!(
            "pair id {id:?} must be non-empty and use only letters, digits, '_', '-' and '.'"
        )))
    }
}

/// Reads a JSON manifest; file names inside it are relative to its directory.
pub fn load_manifest(path: &Path) -> Result<Vec<SequencePair>> {
    let text = read_to_string(path)?;
    let manifest: Manifest = serde_json::from_str(&text)
        .map_err(|e| parse_error(path, e.line(), e.column(), e.to_string()))?;
    let dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let resolve = |f: &str| -> PathBuf { dir.join(f) };
    let mut out = Vec::with_capacity(manifest.pairs.len());
    for e in manifest.pairs {
        let (fa, fb) = (resolve(&e.file_a), resolve(&e.file_b));
        let a = load_matrix(&fa)?;
        let b = load_matrix(&fb)?;
        if a.ncols() != b.ncols() || a.nrows() == 0 || b.nrows() == 0 {
            return Err(Error::InconsistentDims {
                path: fb,
                message: format!(
                    "pair {:?}: A is {}x{}, B is {}x{}",
                    e.id,
                    a.nrows(),
                    a.ncols(),
                    b.nrows(),
                    b.ncols()
                ),
            });
        }
        let truth = match &e.file_truth {
            Some(f) => Some(load_path(&resolve(f), a.nrows(), b.nrows())?),
            None => None,
        };
        out.push(SequencePair::new(e.id, a, b, truth)?);
    }
    Ok(out)
}

/// Writes every pair next to `path` as `<id>_A.csv`, `<id>_B.csv` and
/// `<id>_truth.csv`, then the manifest itself.
pub fn save_manifest(pairs: &[SequencePair], path: &Path) -> Result<()> {
    let dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
    if !dir.as_os_str().is_empty() {
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    }
    let mut manifest = Manifest::default();
    for pair in pairs {
        check_id(&pair.id)?;
        let entry = ManifestEntry {
            id: pair.id.clone(),
            file_a: format!("{}_A.csv", pair.id),
            file_b: format!("{}_B.csv", pair.id),
            file_truth: pair
                .truth
                .as_ref()
                .map(|_| format!("{}_truth.csv", pair.id)),
        };
        save_matrix(&pair.a, &dir.join(&entry.file_a))?;
        save_matrix(&pair.b, &dir.join(&entry.file_b))?;
        if let (Some(t), Some(f)) = (&pair.truth, &entry.file_truth) {
            save_path(t, &dir.join(f))?;
        }
        manifest.pairs.push(entry);
    }
    let mut json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    json.push('\n');
    write_string(path, &json)
}
