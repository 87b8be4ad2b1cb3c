//! Learning `W` from pairs with known alignments.
//!
//! [`hamming`] runs projected stochastic subgradient descent on the
//! margin-rescaled objective with the Hamming loss. [`sal`] runs
//! block-coordinate Frank-Wolfe on the dual of the same objective with the
//! concave symmetrized area loss.

pub mod hamming;
pub mod sal;

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use crate::error::{Error, Result};
use crate::metric::Structure;
use crate::textio::fmt_f64;

pub use hamming::{loss_augmented_decode_hamming, primal_objective, train_hamming};
pub use sal::{
    dual_objective, fw_block_gradient, fw_gap, fw_linear_oracle, fw_step_size, representer,
    train_sal, DualForm, DualState, FractionalAlignment, Sweep,
};

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum StepRule {
    /// `η_t = 1 / (λ t)`.
    Pegasos,
    Constant(f64),
}

impl fmt::Display for StepRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StepRule::Pegasos => f.write_str("pegasos"),
            StepRule::Constant(c) => write!(f, "constant:{c}"),
        }
    }
}

impl FromStr for StepRule {
    type Err = Error;

    /// `pegasos` or `constant:<c>`.
    fn from_str(s: &str) -> Result<Self> {
        if s == "pegasos" {
            return Ok(StepRule::Pegasos);
        }
        if let Some(c) = s.strip_prefix("constant:") {
            if let Ok(c) = c.parse::<f64>() {
                if c > 0.0 && c.is_finite() {
                    return Ok(StepRule::Constant(c));
                }
            }
        }
        Err(Error::BadSpec(format!(
            "step rule must be \"pegasos\" or \"constant:<positive number>\", got {s:?}"
        )))
    }
}

/// How Frank-Wolfe picks the next block.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum BlockSampling {
    /// Uniformly at random, with replacement.
    #[default]
    Uniform,
    /// A fresh random permutation every `n` steps.
    Cyclic,
}

impl fmt::Display for BlockSampling {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BlockSampling::Uniform => "uniform",
            BlockSampling::Cyclic => "cyclic",
        })
    }
}

impl FromStr for BlockSampling {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uniform" => Ok(BlockSampling::Uniform),
            "cyclic" => Ok(BlockSampling::Cyclic),
            other => Err(Error::BadSpec(format!("unknown block sampling {other:?}"))),
        }
    }
}

/// Frank-Wolfe step size rule.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum FwStep {
    /// Exact minimization of the quadratic along the segment.
    #[default]
    LineSearch,
    /// `2n / (k + 2n)` at global step `k`, ignoring the objective.
    Classic,
}

impl fmt::Display for FwStep {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FwStep::LineSearch => "line_search",
            FwStep::Classic => "classic",
        })
    }
}

impl FromStr for FwStep {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "line_search" => Ok(FwStep::LineSearch),
            "classic" => Ok(FwStep::Classic),
            other => Err(Error::BadSpec(format!(
                "unknown Frank-Wolfe step rule {other:?}"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub lambda: f64,
    /// Passes over the data; the step budget is `epochs * n` unless `steps`
    /// is set.
    pub epochs: usize,
    pub steps: Option<usize>,
    pub seed: u64,
    pub structure: Structure,
    pub step_rule: StepRule,
    /// Steps between checkpoints.
    pub eval_every: usize,
    pub block_sampling: BlockSampling,
    pub fw_step: FwStep,
    /// Frank-Wolfe stops once a full-sweep duality gap falls below this.
    pub gap_tolerance: f64,
    /// Optional Sakoe-Chiba style band for every decoding.
    pub band: Option<usize>,
    /// Record wall-clock seconds in checkpoints. Off by default so that
    /// reports are byte-reproducible.
    pub record_timing: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lambda: 1e-2,
            epochs: 50,
            steps: None,
            seed: 0,
            structure: Structure::Psd,
            step_rule: StepRule::Pegasos,
            eval_every: 100,
            block_sampling: BlockSampling::Uniform,
            fw_step: FwStep::LineSearch,
            gap_tolerance: 1e-4,
            band: None,
            record_timing: false,
        }
    }
}

impl TrainConfig {
    pub fn check(&self) -> Result<()> {
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(Error::BadSpec(format!(
                "lambda must be positive, got {}",
                self.lambda
            )));
        }
        if self.epochs == 0 && self.steps.is_none() {
            return Err(Error::BadSpec("epochs must be positive".into()));
        }
        if self.eval_every == 0 {
            return Err(Error::BadSpec("eval_every must be positive".into()));
        }
        if !(self.gap_tolerance >= 0.0) {
            return Err(Error::BadSpec(format!(
                "gap tolerance must be non-negative, got {}",
                self.gap_tolerance
            )));
        }
        Ok(())
    }

    pub fn total_steps(&self, n: usize) -> usize {
        self.steps.unwrap_or(self.epochs * n)
    }

    fn describe(&self) -> String {
        format!(
            "lambda={} epochs={} steps={} seed={} structure={} step_rule={} eval_every={} block_sampling={} fw_step={} gap_tolerance={} band={}",
            self.lambda,
            self.epochs,
            self.steps.map_or("auto".to_string(), |s| s.to_string()),
            self.seed,
            self.structure,
            self.step_rule,
            self.eval_every,
            self.block_sampling,
            self.fw_step,
            self.gap_tolerance,
            self.band.map_or("none".to_string(), |b| b.to_string()),
        )
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LossKind {
    Hamming,
    Sal,
}

impl fmt::Display for LossKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LossKind::Hamming => "hamming",
            LossKind::Sal => "sal",
        })
    }
}

impl FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "hamming" => Ok(LossKind::Hamming),
            "sal" => Ok(LossKind::Sal),
            other => Err(Error::BadSpec(format!("unknown loss {other:?}"))),
        }
    }
}

/// One row of a training log.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub iter: usize,
    /// Primal objective; for Frank-Wolfe the upper bound from the last sweep.
    pub objective: f64,
    pub train_delta_abs: f64,
    pub train_hamming: f64,
    pub seconds: Option<f64>,
    pub dual_objective: Option<f64>,
    pub fw_gap: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainReport {
    pub loss: LossKind,
    pub config: TrainConfig,
    pub checkpoints: Vec<Checkpoint>,
    pub notes: Vec<String>,
}

impl TrainReport {
    fn new(loss: LossKind, config: &TrainConfig) -> Self {
        TrainReport {
            loss,
            config: config.clone(),
            checkpoints: Vec::new(),
            notes: Vec::new(),
        }
    }

    /// CSV with `#` comment lines echoing the configuration first.
    pub fn to_csv(&self) -> String {
        let mut s = format!("# loss={} {}\n", self.loss, self.config.describe());
        for n in &self.notes {
            s.push_str(&format!("# note: {n}\n"));
        }
        s.push_str("iter,objective,train_delta_abs,train_hamming,seconds");
        if self.loss == LossKind::Sal {
            s.push_str(",dual_objective,fw_gap");
        }
        s.push('\n');
        let opt = |v: Option<f64>| v.map_or_else(|| "0".to_string(), fmt_f64);
        for c in &self.checkpoints {
            s.push_str(&format!(
                "{},{},{},{},{}",
                c.iter,
                fmt_f64(c.objective),
                fmt_f64(c.train_delta_abs),
                fmt_f64(c.train_hamming),
                opt(c.seconds)
            ));
            if self.loss == LossKind::Sal {
                s.push_str(&format!(",{},{}", opt(c.dual_objective), opt(c.fw_gap)));
            }
            s.push('\n');
        }
        s
    }

    pub fn last(&self) -> Option<&Checkpoint> {
        self.checkpoints.last()
    }
}

struct Clock {
    start: Option<Instant>,
}

impl Clock {
    fn new(enabled: bool) -> Self {
        Clock {
            start: enabled.then(Instant::now),
        }
    }

    fn seconds(&self) -> Option<f64> {
        self.start.map(|s| s.elapsed().as_secs_f64())
    }
}

/// Whether step `t` of `total` is a checkpoint.
fn is_checkpoint(t: usize, total: usize, every: usize) -> bool {
    t == 0 || t == total || t.is_multiple_of(every)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn step_rules_parse() {
        assert_eq!("pegasos".parse::<StepRule>().unwrap(), StepRule::Pegasos);
        assert_eq!(
            "constant:0.5".parse::<StepRule>().unwrap(),
            StepRule::Constant(0.5)
        );
        assert!("constant:-1".parse::<StepRule>().is_err());
        assert!("fast".parse::<StepRule>().is_err());
    }

    #[test]
    fn config_checks() {
        assert!(TrainConfig::default().check().is_ok());
        let bad = TrainConfig {
            lambda: 0.0,
            ..TrainConfig::default()
        };
        assert!(matches!(bad.check(), Err(Error::BadSpec(_))));
    }
}
