//! Projected stochastic subgradient descent with the Hamming loss.

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::alignment::{dtw_decode_banded, AffinityMatrix, AlignmentPath};
use crate::dataset::{check_training_set, SequencePair};
use crate::error::Result;
use crate::eval::evaluate;
use crate::metric::{affinity, feature_map, project, MetricMatrix, Structure};

use super::{is_checkpoint, Checkpoint, Clock, LossKind, StepRule, TrainConfig, TrainReport};

/// Most violated alignment for the Hamming loss.
///
/// Maximizes `ℓ_H(Y, truth) + Tr(C^T Y)` by decoding `C + U - 2 Y_truth`. The
/// returned score is that maximum minus `|truth|`.
pub fn loss_augmented_decode_hamming(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    truth: &AlignmentPath,
    w: &MetricMatrix,
    band: Option<usize>,
) -> Result<(AlignmentPath, f64)> {
    let c = affinity(a, b, w)?;
    augmented_decode(&c, truth, band)
}

fn augmented_decode(
    c: &AffinityMatrix,
    truth: &AlignmentPath,
    band: Option<usize>,
) -> Result<(AlignmentPath, f64)> {
    let mut m = c.values().add_scalar(1.0);
    if truth.dims() != c.shape() {
        return Err(crate::Error::dims(format!(
            "truth is for a {:?} grid, affinity is {:?}",
            truth.dims(),
            c.shape()
        )));
    }
    for (i, j) in truth.cells() {
        m[(i, j)] -= 2.0;
    }
    let d = dtw_decode_banded(&AffinityMatrix::new(m)?, band)?;
    Ok((d.path, d.score))
}

/// Margin violation `max_Y [ℓ_H(Y, Y_i) - <W, phi(Y_i) - phi(Y)>]` and its
/// maximizer.
fn hinge(
    pair: &SequencePair,
    w: &MetricMatrix,
    band: Option<usize>,
) -> Result<(f64, AlignmentPath)> {
    let truth = pair.truth()?;
    let c = affinity(&pair.a, &pair.b, w)?;
    let (y, score) = augmented_decode(&c, truth, band)?;
    Ok((score + truth.len() as f64 - truth.score(c.values()), y))
}

/// `(λ/2) ||W||² + (1/n) Σ_i hinge_i(W)`, each hinge by exact decoding.
pub fn primal_objective(
    pairs: &[SequencePair],
    w: &MetricMatrix,
    lambda: f64,
    band: Option<usize>,
) -> Result<f64> {
    check_training_set(pairs)?;
    let hinges = pairs
        .par_iter()
        .map(|pair| hinge(pair, w, band).map(|h| h.0))
        .collect::<Result<Vec<_>>>()?;
    let mean = hinges.iter().sum::<f64>() / pairs.len() as f64;
    Ok(0.5 * lambda * w.values().norm_squared() + mean)
}

fn step_size(rule: StepRule, lambda: f64, t: usize) -> f64 {
    match rule {
        StepRule::Pegasos => 1.0 / (lambda * t as f64),
        StepRule::Constant(c) => c,
    }
}

/// Starting point: the identity scaled to unit trace.
pub(crate) fn initial_metric(p: usize, structure: Structure) -> Result<MetricMatrix> {
    project(&(DMatrix::identity(p, p) / p as f64), structure)
}

/// Trains `W` by projected subgradient steps on one pair at a time, visiting
/// pairs in a fresh seeded order every epoch. Returns the projected average
/// of the second half of the iterates.
pub fn train_hamming(
    pairs: &[SequencePair],
    config: &TrainConfig,
) -> Result<(MetricMatrix, TrainReport)> {
    config.check()?;
    let p = check_training_set(pairs)?;
    let n = pairs.len();
    let total = config.total_steps(n);
    let structure = config.structure;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let phi_truth = pairs
        .iter()
        .map(|pair| feature_map(&pair.a, &pair.b, pair.truth()?))
        .collect::<Result<Vec<_>>>()?;

    let clock = Clock::new(config.record_timing);
    let mut report = TrainReport::new(LossKind::Hamming, config);
    let mut w = initial_metric(p, structure)?;
    let tail_start = total / 2;
    let mut tail_sum = DMatrix::<f64>::zeros(p, p);
    let mut tail_count = 0usize;

    let checkpoint = |t: usize, w: &MetricMatrix, report: &mut TrainReport| -> Result<()> {
        let summary = evaluate(pairs, w, config.band, "train")?;
        report.checkpoints.push(Checkpoint {
            iter: t,
            objective: primal_objective(pairs, w, config.lambda, config.band)?,
            train_delta_abs: summary.delta_abs.mean,
            train_hamming: summary.hamming.mean,
            seconds: clock.seconds(),
            dual_objective: None,
            fw_gap: None,
        });
        Ok(())
    };
    checkpoint(0, &w, &mut report)?;

    let mut order: Vec<usize> = (0..n).collect();
    let mut t = 0;
    while t < total {
        order.shuffle(&mut rng);
        for &i in &order {
            if t == total {
                break;
            }
            t += 1;
            let pair = &pairs[i];
            let (_, y_hat) = hinge(pair, &w, config.band)?;
            let phi_hat = feature_map(&pair.a, &pair.b, &y_hat)?;
            let g = w.values() * config.lambda - (&phi_truth[i] - phi_hat);
            let eta = step_size(config.step_rule, config.lambda, t);
            w = project(&(w.values() - g * eta), structure)?;
            if t > tail_start {
                tail_sum += w.values();
                tail_count += 1;
            }
            if t != 0 && is_checkpoint(t, total, config.eval_every) {
                checkpoint(t, &w, &mut report)?;
            }
        }
    }
    let model = if tail_count == 0 {
        w
    } else {
        project(&(tail_sum / tail_count as f64), structure)?
    };
    Ok((model, report))
}
