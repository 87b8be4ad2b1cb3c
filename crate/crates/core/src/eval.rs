//! Aligning pairs with a metric and scoring the result against ground truth.

use rayon::prelude::*;

use crate::alignment::{dtw_decode_banded, AlignmentPath};
use crate::dataset::SequencePair;
use crate::error::Result;
use crate::losses::{delta_abs, delta_max, hamming_paths};
use crate::metric::{affinity, MetricMatrix, Structure};
use crate::textio::fmt_f64;

/// The highest-scoring alignment of `pair` under `w`.
pub fn align(pair: &SequencePair, w: &MetricMatrix, band: Option<usize>) -> Result<AlignmentPath> {
    let c = affinity(&pair.a, &pair.b, w)?;
    Ok(dtw_decode_banded(&c, band)?.path)
}

#[derive(Clone, Debug, PartialEq)]
pub struct PairScore {
    pub id: String,
    pub delta_abs: f64,
    pub delta_max: f64,
    pub hamming: f64,
}

impl PairScore {
    pub fn compare(id: &str, predicted: &AlignmentPath, truth: &AlignmentPath) -> Result<Self> {
        Ok(PairScore {
            id: id.to_string(),
            delta_abs: delta_abs(predicted, truth)?,
            delta_max: delta_max(predicted, truth)?,
            hamming: hamming_paths(predicted, truth)?,
        })
    }
}

/// Mean, largest and smallest value of one score over the pairs.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Aggregate {
    pub mean: f64,
    pub max: f64,
    pub min: f64,
}

impl Aggregate {
    fn of(values: impl Iterator<Item = f64>) -> Self {
        let mut n = 0usize;
        let mut sum = 0.0;
        let mut max = f64::NEG_INFINITY;
        let mut min = f64::INFINITY;
        for v in values {
            n += 1;
            sum += v;
            max = max.max(v);
            min = min.min(v);
        }
        if n == 0 {
            return Aggregate {
                mean: f64::NAN,
                max: f64::NAN,
                min: f64::NAN,
            };
        }
        Aggregate {
            mean: sum / n as f64,
            max,
            min,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalSummary {
    /// What was evaluated, e.g. `model`, `identity` or `feature3`.
    pub kind: String,
    pub pairs: Vec<PairScore>,
    pub delta_abs: Aggregate,
    pub delta_max: Aggregate,
    pub hamming: Aggregate,
    /// Diagonal of `W` when it is diagonal.
    pub weights: Option<Vec<f64>>,
}

impl EvalSummary {
    pub fn from_scores(
        kind: impl Into<String>,
        pairs: Vec<PairScore>,
        weights: Option<Vec<f64>>,
    ) -> Self {
        EvalSummary {
            kind: kind.into(),
            delta_abs: Aggregate::of(pairs.iter().map(|p| p.delta_abs)),
            delta_max: Aggregate::of(pairs.iter().map(|p| p.delta_max)),
            hamming: Aggregate::of(pairs.iter().map(|p| p.hamming)),
            pairs,
            weights,
        }
    }

    pub fn csv_header() -> &'static str {
        "kind,id,delta_abs,delta_max,hamming\n"
    }

    /// Per-pair rows followed by `@mean`, `@max` and `@min` rows.
    pub fn csv_rows(&self) -> String {
        let mut s = String::new();
        for p in &self.pairs {
            s.push_str(&format!(
                "{},{},{},{},{}\n",
                self.kind,
                p.id,
                fmt_f64(p.delta_abs),
                fmt_f64(p.delta_max),
                fmt_f64(p.hamming)
            ));
        }
        type Pick = (&'static str, fn(&Aggregate) -> f64);
        let pick: [Pick; 3] = [
            ("@mean", |a| a.mean),
            ("@max", |a| a.max),
            ("@min", |a| a.min),
        ];
        for (label, f) in pick {
            s.push_str(&format!(
                "{},{label},{},{},{}\n",
                self.kind,
                fmt_f64(f(&self.delta_abs)),
                fmt_f64(f(&self.delta_max)),
                fmt_f64(f(&self.hamming))
            ));
        }
        s
    }

    pub fn text(&self) -> String {
        let mut s = format!(
            "{}: {} pairs\n  delta_abs mean {:.4} (min {:.4}, max {:.4})\n  delta_max mean {:.4} (min {:.4}, max {:.4})\n  hamming   mean {:.4} (min {:.4}, max {:.4})\n",
            self.kind,
            self.pairs.len(),
            self.delta_abs.mean,
            self.delta_abs.min,
            self.delta_abs.max,
            self.delta_max.mean,
            self.delta_max.min,
            self.delta_max.max,
            self.hamming.mean,
            self.hamming.min,
            self.hamming.max,
        );
        if let Some(w) = &self.weights {
            let cells: Vec<String> = w.iter().map(|v| format!("{v:.6}")).collect();
            s.push_str(&format!("  weights [{}]\n", cells.join(", ")));
        }
        s
    }
}

pub fn summaries_to_csv(summaries: &[EvalSummary]) -> String {
    let mut s = EvalSummary::csv_header().to_string();
    for summary in summaries {
        s.push_str(&summary.csv_rows());
    }
    s
}

fn diagonal_weights(w: &MetricMatrix) -> Option<Vec<f64>> {
    (w.structure() == Structure::DiagonalNonneg)
        .then(|| w.values().diagonal().iter().copied().collect())
}

/// Aligns every pair with `w` and scores it against its truth. Pairs are
/// processed in parallel; results keep the input order.
pub fn evaluate(
    pairs: &[SequencePair],
    w: &MetricMatrix,
    band: Option<usize>,
    kind: &str,
) -> Result<EvalSummary> {
    let scores = pairs
        .par_iter()
        .map(|pair| {
            let truth = pair.truth()?;
            let predicted = align(pair, w, band)?;
            PairScore::compare(&pair.id, &predicted, truth)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(EvalSummary::from_scores(kind, scores, diagonal_weights(w)))
}

/// The identity metric, then one single-feature metric per feature.
pub fn baseline(pairs: &[SequencePair], band: Option<usize>) -> Result<Vec<EvalSummary>> {
    let p = crate::dataset::check_training_set(pairs)?;
    let mut out = vec![evaluate(
        pairs,
        &MetricMatrix::identity(p, Structure::Psd),
        band,
        "identity",
    )?];
    for k in 0..p {
        out.push(evaluate(
            pairs,
            &MetricMatrix::single_feature(p, k),
            band,
            &format!("feature{}", k + 1),
        )?);
    }
    Ok(out)
}
