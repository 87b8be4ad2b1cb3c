//! Block-coordinate Frank-Wolfe on the dual of the margin-rescaled problem
//! with the concave symmetrized area loss.
//!
//! Each training pair owns a block `Z_i`, a point in the convex hull of its
//! alignments. With `psi_i(Z) = phi(Y_i) - phi(Z)` the dual reads
//!
//! ```text
//! g(Z) = ||Σ_i psi_i(Z_i)||² / (2 λ n²) - (1/n) Σ_i sal_i(Z_i)
//! ```
//!
//! and the primal metric is `W = Σ_i psi_i(Z_i) / (λ n)`.

use std::collections::HashMap;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::alignment::{dtw_decode_banded, AffinityMatrix, AlignmentPath};
use crate::dataset::{check_training_set, SequencePair};
use crate::error::{Error, Result};
use crate::eval::evaluate;
use crate::losses::ConcaveSal;
use crate::metric::{affinity, feature_map, project, Coupling, MetricMatrix, Structure};

use super::{
    is_checkpoint, BlockSampling, Checkpoint, Clock, FwStep, LossKind, TrainConfig, TrainReport,
};

/// Tolerance of the consistency audits.
pub const AUDIT_TOLERANCE: f64 = 1e-10;
/// Steps between audits during training.
pub const AUDIT_EVERY: usize = 100;

/// A convex combination of alignment paths, kept both as a dense matrix and
/// as its list of weighted vertices.
#[derive(Clone, Debug, PartialEq)]
pub struct FractionalAlignment {
    z: DMatrix<f64>,
    active: Vec<(AlignmentPath, f64)>,
    index: HashMap<AlignmentPath, usize>,
}

impl FractionalAlignment {
    pub fn vertex(path: &AlignmentPath) -> Self {
        let mut index = HashMap::new();
        index.insert(path.clone(), 0);
        FractionalAlignment {
            z: path.to_matrix(),
            active: vec![(path.clone(), 1.0)],
            index,
        }
    }

    /// `Σ w_k Y_k`; weights must be positive and sum to one.
    pub fn from_combination(parts: &[(AlignmentPath, f64)]) -> Result<Self> {
        let (first, _) = parts.first().ok_or(Error::EmptyPath)?;
        let total: f64 = parts.iter().map(|p| p.1).sum();
        if parts.iter().any(|p| !(p.1 > 0.0)) || (total - 1.0).abs() > AUDIT_TOLERANCE {
            return Err(Error::OutOfRange(format!(
                "convex weights must be positive and sum to 1, got sum {total}"
            )));
        }
        let (r, c) = first.dims();
        let mut out = FractionalAlignment {
            z: DMatrix::zeros(r, c),
            active: Vec::new(),
            index: HashMap::new(),
        };
        for (path, w) in parts {
            if path.dims() != (r, c) {
                return Err(Error::dims(format!(
                    "paths for {:?} and {:?} grids",
                    (r, c),
                    path.dims()
                )));
            }
            for (i, j) in path.cells() {
                out.z[(i, j)] += w;
            }
            out.add_weight(path, *w);
        }
        Ok(out)
    }

    fn add_weight(&mut self, path: &AlignmentPath, w: f64) {
        match self.index.get(path) {
            Some(&k) => self.active[k].1 += w,
            None => {
                self.index.insert(path.clone(), self.active.len());
                self.active.push((path.clone(), w));
            }
        }
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.z
    }

    pub fn active_set(&self) -> &[(AlignmentPath, f64)] {
        &self.active
    }

    /// `Z <- (1 - γ) Z + γ S`, merging `S` into the active set.
    pub fn step_towards(&mut self, s: &AlignmentPath, gamma: f64) {
        if gamma <= 0.0 {
            return;
        }
        if gamma >= 1.0 {
            *self = FractionalAlignment::vertex(s);
            return;
        }
        self.z *= 1.0 - gamma;
        for (i, j) in s.cells() {
            self.z[(i, j)] += gamma;
        }
        for entry in &mut self.active {
            entry.1 *= 1.0 - gamma;
        }
        self.add_weight(s, gamma);
    }

    /// Largest entry-wise gap between `Z` and the recombined active set.
    pub fn audit(&self) -> Result<f64> {
        let total: f64 = self.active.iter().map(|a| a.1).sum();
        if self.active.iter().any(|a| !(a.1 > 0.0)) || (total - 1.0).abs() > AUDIT_TOLERANCE {
            return Err(Error::OutOfRange(format!(
                "active-set weights must be positive and sum to 1, got sum {total}"
            )));
        }
        let mut rebuilt = DMatrix::zeros(self.z.nrows(), self.z.ncols());
        for (path, w) in &self.active {
            for (i, j) in path.cells() {
                rebuilt[(i, j)] += w;
            }
        }
        let dev = (rebuilt - &self.z).amax();
        if dev > AUDIT_TOLERANCE {
            return Err(Error::OutOfRange(format!(
                "active set is {dev:e} away from Z"
            )));
        }
        Ok(dev)
    }
}

impl Coupling for FractionalAlignment {
    fn shape(&self) -> (usize, usize) {
        self.z.shape()
    }

    fn for_each_weight(&self, f: &mut dyn FnMut(usize, usize, f64)) {
        self.z.for_each_weight(f)
    }
}

/// Which dual is solved.
///
/// `Full` is the dual of the problem over all square `W`. `Diagonal` is the
/// dual of the problem over diagonal `W`, in which every `psi` is replaced by
/// its diagonal and the representer gives a diagonal `W` directly.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DualForm {
    Full,
    Diagonal,
}

impl DualForm {
    /// `Diagonal` for diagonal metrics, `Full` otherwise (other structures
    /// are reached by projecting the unconstrained solution).
    pub fn for_structure(structure: Structure) -> Self {
        match structure {
            Structure::DiagonalNonneg => DualForm::Diagonal,
            Structure::Psd | Structure::Unconstrained => DualForm::Full,
        }
    }

    fn restrict(self, m: DMatrix<f64>) -> DMatrix<f64> {
        match self {
            DualForm::Full => m,
            DualForm::Diagonal => DMatrix::from_diagonal(&m.diagonal()),
        }
    }
}

fn check_blocks(pairs: &[SequencePair], blocks: &[DMatrix<f64>]) -> Result<()> {
    check_training_set(pairs)?;
    if blocks.len() != pairs.len() {
        return Err(Error::dims(format!(
            "{} blocks for {} pairs",
            blocks.len(),
            pairs.len()
        )));
    }
    Ok(())
}

fn psi_total(
    pairs: &[SequencePair],
    blocks: &[DMatrix<f64>],
    form: DualForm,
) -> Result<DMatrix<f64>> {
    let p = pairs[0].features();
    let mut sum = DMatrix::zeros(p, p);
    for (pair, z) in pairs.iter().zip(blocks) {
        sum += feature_map(&pair.a, &pair.b, pair.truth()?)?;
        sum -= feature_map(&pair.a, &pair.b, z)?;
    }
    Ok(form.restrict(sum))
}

/// `W = Σ_i psi_i(Z_i) / (λ n)`, projected onto `structure`.
pub fn representer(
    pairs: &[SequencePair],
    blocks: &[DMatrix<f64>],
    lambda: f64,
    structure: Structure,
) -> Result<MetricMatrix> {
    check_blocks(pairs, blocks)?;
    let n = pairs.len() as f64;
    let form = DualForm::for_structure(structure);
    project(&(psi_total(pairs, blocks, form)? / (lambda * n)), structure)
}

/// The dual objective at the given blocks.
pub fn dual_objective(
    pairs: &[SequencePair],
    blocks: &[DMatrix<f64>],
    lambda: f64,
    form: DualForm,
) -> Result<f64> {
    check_blocks(pairs, blocks)?;
    let n = pairs.len() as f64;
    let quad = psi_total(pairs, blocks, form)?.norm_squared() / (2.0 * lambda * n * n);
    let mut loss = 0.0;
    for (pair, z) in pairs.iter().zip(blocks) {
        let truth = pair.truth()?;
        let (r, c) = truth.dims();
        loss += ConcaveSal::new(r, c)?.value(&truth.to_matrix(), z)?;
    }
    Ok(quad - loss / n)
}

/// The vertex minimizing `<gradient, Y>`.
pub fn fw_linear_oracle(gradient: &DMatrix<f64>, band: Option<usize>) -> Result<AlignmentPath> {
    Ok(dtw_decode_banded(&AffinityMatrix::new(-gradient)?, band)?.path)
}

/// Minimizer over `[0, 1]` of `a γ² + b γ` with `a >= 0`.
pub fn fw_step_size(a: f64, b: f64) -> f64 {
    if b >= 0.0 {
        0.0
    } else if a <= 0.0 {
        1.0
    } else {
        (-b / (2.0 * a)).clamp(0.0, 1.0)
    }
}

/// `<gradient, Z - S>`, non-negative when `S` is the oracle's answer.
pub fn fw_gap(gradient: &DMatrix<f64>, z: &DMatrix<f64>, s: &AlignmentPath) -> f64 {
    let at_z = gradient.dot(z);
    let at_s: f64 = s.cells().map(|(i, j)| gradient[(i, j)]).sum();
    at_z - at_s
}

/// Quantities from one oracle call per block at the current point.
#[derive(Clone, Debug, PartialEq)]
pub struct Sweep {
    /// Sum of the block gaps; equals `primal_bound + dual`.
    pub gap: f64,
    /// Upper bound on the primal objective at the current `W`, from the
    /// tangent planes of the concave loss.
    pub primal_bound: f64,
    pub dual: f64,
}

/// Result of one Frank-Wolfe step on one block.
#[derive(Clone, Debug, PartialEq)]
pub struct FwMove {
    pub block: usize,
    pub gamma: f64,
    pub gap: f64,
    /// Predicted change of the dual objective, `a γ² + b γ`.
    pub change: f64,
}

/// Blocks, per-block caches and the running sum `Σ psi_i(Z_i)`.
pub struct DualState<'a> {
    pairs: &'a [SequencePair],
    lambda: f64,
    band: Option<usize>,
    form: DualForm,
    loss_weight: f64,
    blocks: Vec<FractionalAlignment>,
    losses: Vec<ConcaveSal>,
    truths: Vec<DMatrix<f64>>,
    phi_blocks: Vec<DMatrix<f64>>,
    psi_sum: DMatrix<f64>,
    iteration: usize,
}

impl<'a> DualState<'a> {
    /// Starts from `Z_i = Y_i`, where `W = 0`.
    pub fn new(
        pairs: &'a [SequencePair],
        lambda: f64,
        band: Option<usize>,
        form: DualForm,
    ) -> Result<Self> {
        check_training_set(pairs)?;
        let blocks = pairs
            .iter()
            .map(|p| Ok(FractionalAlignment::vertex(p.truth()?)))
            .collect::<Result<Vec<_>>>()?;
        Self::with_blocks(pairs, lambda, band, form, blocks)
    }

    pub fn with_blocks(
        pairs: &'a [SequencePair],
        lambda: f64,
        band: Option<usize>,
        form: DualForm,
        blocks: Vec<FractionalAlignment>,
    ) -> Result<Self> {
        let p = check_training_set(pairs)?;
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::BadSpec(format!(
                "lambda must be positive, got {lambda}"
            )));
        }
        if blocks.len() != pairs.len() {
            return Err(Error::dims(format!(
                "{} blocks for {} pairs",
                blocks.len(),
                pairs.len()
            )));
        }
        let mut losses = Vec::with_capacity(pairs.len());
        let mut truths = Vec::with_capacity(pairs.len());
        let mut phi_blocks = Vec::with_capacity(pairs.len());
        let mut psi_sum = DMatrix::zeros(p, p);
        for (pair, block) in pairs.iter().zip(&blocks) {
            let truth = pair.truth()?;
            let (r, c) = truth.dims();
            if block.shape() != (r, c) {
                return Err(Error::dims(format!(
                    "block for pair {:?} is {:?}, grid is {:?}",
                    pair.id,
                    block.shape(),
                    (r, c)
                )));
            }
            losses.push(ConcaveSal::new(r, c)?);
            truths.push(truth.to_matrix());
            let ft = form.restrict(feature_map(&pair.a, &pair.b, truth)?);
            let fz = form.restrict(feature_map(&pair.a, &pair.b, block)?);
            psi_sum += ft - &fz;
            phi_blocks.push(fz);
        }
        Ok(DualState {
            pairs,
            lambda,
            band,
            form,
            loss_weight: 1.0,
            blocks,
            losses,
            truths,
            phi_blocks,
            psi_sum,
            iteration: 0,
        })
    }

    /// Drops the loss term, leaving only the quadratic part of the dual.
    pub fn without_loss(mut self) -> Self {
        self.loss_weight = 0.0;
        self
    }

    pub fn n(&self) -> usize {
        self.pairs.len()
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    pub fn blocks(&self) -> &[FractionalAlignment] {
        &self.blocks
    }

    pub fn block_matrices(&self) -> Vec<DMatrix<f64>> {
        self.blocks.iter().map(|b| b.matrix().clone()).collect()
    }

    /// The unprojected primal point `Σ psi_i / (λ n)`.
    pub fn weight(&self) -> DMatrix<f64> {
        &self.psi_sum / (self.lambda * self.n() as f64)
    }

    fn metric(&self) -> Result<MetricMatrix> {
        MetricMatrix::new(self.weight(), Structure::Unconstrained)
    }

    pub fn representer(&self, structure: Structure) -> Result<MetricMatrix> {
        project(&self.weight(), structure)
    }

    pub fn dual_objective(&self) -> Result<f64> {
        let n = self.n() as f64;
        let quad = self.psi_sum.norm_squared() / (2.0 * self.lambda * n * n);
        let mut loss = 0.0;
        for k in 0..self.n() {
            loss += self.losses[k].value(&self.truths[k], self.blocks[k].matrix())?;
        }
        Ok(quad - self.loss_weight * loss / n)
    }

    fn block_affinity(&self, i: usize, w: &MetricMatrix) -> Result<AffinityMatrix> {
        affinity(&self.pairs[i].a, &self.pairs[i].b, w)
    }

    fn gradient_with(&self, i: usize, c: &AffinityMatrix) -> Result<DMatrix<f64>> {
        let n = self.n() as f64;
        let g_loss = self.losses[i].gradient(&self.truths[i], self.blocks[i].matrix())?;
        Ok(-(c.values() + g_loss * self.loss_weight) / n)
    }

    /// `∂g / ∂Z_i = -(C(X_i; W) + ∇sal_i(Z_i)) / n`.
    pub fn block_gradient(&self, i: usize) -> Result<DMatrix<f64>> {
        self.check_block(i)?;
        let c = self.block_affinity(i, &self.metric()?)?;
        self.gradient_with(i, &c)
    }

    fn check_block(&self, i: usize) -> Result<()> {
        if i >= self.n() {
            return Err(Error::OutOfRange(format!("block {i} of {}", self.n())));
        }
        Ok(())
    }

    /// Coefficients `(a, b)` of `g(Z_i + γ (S - Z_i)) - g(Z_i) = a γ² + b γ`,
    /// along with `phi(S)`.
    pub fn segment(
        &self,
        i: usize,
        s: &AlignmentPath,
        gradient: &DMatrix<f64>,
    ) -> Result<(f64, f64, DMatrix<f64>)> {
        self.check_block(i)?;
        let n = self.n() as f64;
        let pair = &self.pairs[i];
        let phi_s = self.form.restrict(feature_map(&pair.a, &pair.b, s)?);
        let e = &self.phi_blocks[i] - &phi_s;
        let z = self.blocks[i].matrix();
        let mut delta = -z;
        for (r, c) in s.cells() {
            delta[(r, c)] += 1.0;
        }
        let (quad, _) = self.losses[i].segment_coefficients(&self.truths[i], z, &delta);
        let a = e.norm_squared() / (2.0 * self.lambda * n * n) - self.loss_weight * quad / n;
        let b = gradient.dot(&delta);
        Ok((a, b, phi_s))
    }

    /// Moves block `i` a fraction `gamma` of the way to `s`.
    pub fn apply(&mut self, i: usize, s: &AlignmentPath, gamma: f64, phi_s: &DMatrix<f64>) {
        if gamma <= 0.0 {
            return;
        }
        // psi_i changes by γ (psi_i(S) - psi_i(Z_i)) = γ (phi(Z_i) - phi(S)).
        let step = (&self.phi_blocks[i] - phi_s) * gamma;
        self.psi_sum += step;
        self.phi_blocks[i] = &self.phi_blocks[i] * (1.0 - gamma) + phi_s * gamma;
        self.blocks[i].step_towards(s, gamma);
    }

    /// One Frank-Wolfe step on block `i`; `gamma` overrides the line search.
    pub fn step(&mut self, i: usize, gamma: Option<f64>) -> Result<FwMove> {
        let gradient = self.block_gradient(i)?;
        let s = fw_linear_oracle(&gradient, self.band)?;
        let gap = fw_gap(&gradient, self.blocks[i].matrix(), &s);
        let (a, b, phi_s) = self.segment(i, &s, &gradient)?;
        let gamma = gamma.unwrap_or_else(|| fw_step_size(a, b));
        self.apply(i, &s, gamma, &phi_s);
        self.iteration += 1;
        Ok(FwMove {
            block: i,
            gamma,
            gap,
            change: a * gamma * gamma + b * gamma,
        })
    }

    /// Calls the oracle on every block at the current point.
    pub fn sweep(&self) -> Result<Sweep> {
        let n = self.n() as f64;
        let w = self.metric()?;
        let per_block = (0..self.n())
            .into_par_iter()
            .map(|i| -> Result<(f64, f64)> {
                let c = self.block_affinity(i, &w)?;
                let gradient = self.gradient_with(i, &c)?;
                let s = fw_linear_oracle(&gradient, self.band)?;
                let z = self.blocks[i].matrix();
                let gap = fw_gap(&gradient, z, &s);
                // Tangent bound on max_Z [sal(Z) - <W, psi_i(Z)>], attained at S.
                let loss = &self.losses[i];
                let g_loss = loss.gradient(&self.truths[i], z)?;
                let at_s: f64 = s.cells().map(|(r, k)| g_loss[(r, k)]).sum();
                let tangent = loss.value(&self.truths[i], z)? + at_s - g_loss.dot(z);
                let truth = self.pairs[i].truth()?;
                let w_psi = truth.score(c.values()) - s.score(c.values());
                Ok((gap, self.loss_weight * tangent - w_psi))
            })
            .collect::<Result<Vec<_>>>()?;
        let gap = per_block.iter().map(|b| b.0).sum();
        let hinge = per_block.iter().map(|b| b.1).sum::<f64>() / n;
        let regularizer = 0.5 * self.lambda * self.weight().norm_squared();
        Ok(Sweep {
            gap,
            primal_bound: regularizer + hinge,
            dual: self.dual_objective()?,
        })
    }

    /// Checks every active set against its matrix and the running `Σ psi`
    /// against a recomputation; returns the larger relative deviation.
    pub fn audit(&self) -> Result<f64> {
        let mut worst: f64 = 0.0;
        for b in &self.blocks {
            worst = worst.max(b.audit()?);
        }
        let fresh = psi_total(self.pairs, &self.block_matrices(), self.form)?;
        let scale = fresh.norm().max(1.0);
        let dev = (&fresh - &self.psi_sum).norm() / scale;
        if dev > AUDIT_TOLERANCE {
            return Err(Error::OutOfRange(format!(
                "running psi sum drifted by {dev:e}"
            )));
        }
        Ok(worst.max(dev))
    }
}

/// Gradient of the dual with respect to block `i`.
pub fn fw_block_gradient(state: &DualState<'_>, i: usize) -> Result<DMatrix<f64>> {
    state.block_gradient(i)
}

struct BlockSampler {
    rng: ChaCha8Rng,
    mode: BlockSampling,
    queue: Vec<usize>,
    n: usize,
}

impl BlockSampler {
    fn next(&mut self) -> usize {
        match self.mode {
            BlockSampling::Uniform => self.rng.gen_range(0..self.n),
            BlockSampling::Cyclic => {
                if self.queue.is_empty() {
                    self.queue = (0..self.n).collect();
                    self.queue.shuffle(&mut self.rng);
                }
                self.queue.pop().expect("refilled above")
            }
        }
    }
}

/// Trains `W` with block-coordinate Frank-Wolfe on the dual, starting from
/// the ground truths. Stops after the step budget or once a checkpoint's
/// full-sweep gap falls below the tolerance.
pub fn train_sal(
    pairs: &[SequencePair],
    config: &TrainConfig,
) -> Result<(MetricMatrix, TrainReport)> {
    config.check()?;
    check_training_set(pairs)?;
    let n = pairs.len();
    let total = config.total_steps(n);
    let form = DualForm::for_structure(config.structure);
    let mut state = DualState::new(pairs, config.lambda, config.band, form)?;
    let mut sampler = BlockSampler {
        rng: ChaCha8Rng::seed_from_u64(config.seed),
        mode: config.block_sampling,
        queue: Vec::new(),
        n,
    };
    let clock = Clock::new(config.record_timing);
    let mut report = TrainReport::new(LossKind::Sal, config);
    match config.structure {
        Structure::Psd => report.notes.push(
            "Frank-Wolfe runs on the unconstrained dual; the returned W is its PSD projection, \
             so objective and gap describe the unprojected W"
                .into(),
        ),
        Structure::DiagonalNonneg => report.notes.push(
            "Frank-Wolfe runs on the dual over diagonal W; negative weights are clamped to zero \
             on output, so objective and gap describe the unclamped W"
                .into(),
        ),
        Structure::Unconstrained => {}
    }

    let checkpoint = |t: usize, state: &DualState<'_>, report: &mut TrainReport| -> Result<f64> {
        let sweep = state.sweep()?;
        let model = state.representer(config.structure)?;
        let summary = evaluate(pairs, &model, config.band, "train")?;
        report.checkpoints.push(Checkpoint {
            iter: t,
            objective: sweep.primal_bound,
            train_delta_abs: summary.delta_abs.mean,
            train_hamming: summary.hamming.mean,
            seconds: clock.seconds(),
            dual_objective: Some(sweep.dual),
            fw_gap: Some(sweep.gap),
        });
        Ok(sweep.gap)
    };
    let mut gap = checkpoint(0, &state, &mut report)?;

    let mut t = 0;
    while t < total && gap >= config.gap_tolerance {
        t += 1;
        let i = sampler.next();
        let gamma = match config.fw_step {
            FwStep::LineSearch => None,
            FwStep::Classic => Some(2.0 * n as f64 / ((t - 1) as f64 + 2.0 * n as f64)),
        };
        state.step(i, gamma)?;
        if t % AUDIT_EVERY == 0 {
            state.audit()?;
        }
        if is_checkpoint(t, total, config.eval_every) {
            gap = checkpoint(t, &state, &mut report)?;
        }
    }
    if report.last().map(|c| c.iter) != Some(t) {
        checkpoint(t, &state, &mut report)?;
    }
    Ok((state.representer(config.structure)?, report))
}
