use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use warpmetric::dataset::{self, normalize, SequencePair, Spread, SynthSpec};
use warpmetric::eval::{self, summaries_to_csv, EvalSummary};
use warpmetric::train::{
    train_hamming, train_sal, BlockSampling, FwStep, LossKind, StepRule, TrainConfig,
};
use warpmetric::{Error, MetricMatrix, Structure};

const EXIT_USAGE: u8 = 1;
const EXIT_DATA: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;

/// Learn and apply Mahalanobis metrics for aligning multivariate time series.
#[derive(Debug, Parser)]
#[command(name = "warpmetric", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic dataset with known alignments.
    Synth {
        /// JSON dataset specification.
        #[arg(long)]
        spec: PathBuf,
        /// Output directory; receives manifest.json and one CSV per series.
        #[arg(long)]
        out: PathBuf,
    },
    /// Learn a metric from the pairs of a manifest.
    Train(TrainArgs),
    /// Align two series with a model and write the path as CSV.
    Align {
        #[arg(long)]
        model: PathBuf,
        /// First series, one frame per line.
        #[arg(long)]
        a: PathBuf,
        /// Second series, one frame per line.
        #[arg(long)]
        b: PathBuf,
        /// Path CSV; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Score a model against the ground truth of every pair in a manifest.
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        /// Evaluation CSV; stdout when absent, otherwise the text summary
        /// goes to stdout.
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Score the identity metric and every single-feature metric.
    Baseline {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        common: CommonArgs,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Normalize {
    None,
    Rms,
    Mad,
}

impl Normalize {
    fn spread(self) -> Option<Spread> {
        match self {
            Normalize::None => None,
            Normalize::Rms => Some(Spread::RmsAboutMedian),
            Normalize::Mad => Some(Spread::Mad),
        }
    }

    fn name(self) -> &'static str {
        match self {
            Normalize::None => "none",
            Normalize::Rms => "rms",
            Normalize::Mad => "mad",
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum StructureArg {
    Psd,
    Diag,
    Free,
}

impl From<StructureArg> for Structure {
    fn from(s: StructureArg) -> Self {
        match s {
            StructureArg::Psd => Structure::Psd,
            StructureArg::Diag => Structure::DiagonalNonneg,
            StructureArg::Free => Structure::Unconstrained,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum LossArg {
    Hamming,
    Sal,
}

#[derive(Debug, Args)]
struct CommonArgs {
    /// Restrict decoding to |i - j| <= BAND around the rescaled diagonal.
    #[arg(long)]
    band: Option<usize>,
    /// Per-feature normalization applied to every series after loading.
    #[arg(long, value_enum, default_value = "none")]
    normalize: Normalize,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[arg(long)]
    manifest: PathBuf,
    /// Where to write the learned model.
    #[arg(long)]
    out: PathBuf,
    /// Training log CSV; defaults to the model path with `.report.csv`.
    #[arg(long)]
    report: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "sal")]
    loss: LossArg,
    #[arg(long, value_enum, default_value = "psd")]
    structure: StructureArg,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1e-2)]
    lambda: f64,
    /// Passes over the data; ignored when --steps is given.
    #[arg(long, default_value_t = 50)]
    epochs: usize,
    #[arg(long)]
    steps: Option<usize>,
    /// Subgradient step size: `pegasos` or `constant:<c>`.
    #[arg(long, default_value = "pegasos")]
    step_rule: String,
    #[arg(long, default_value_t = 100)]
    eval_every: usize,
    /// Frank-Wolfe block order: `uniform` or `cyclic`.
    #[arg(long, default_value = "uniform")]
    block_sampling: String,
    /// Frank-Wolfe step: `line_search` or `classic`.
    #[arg(long, default_value = "line_search")]
    fw_step: String,
    /// Frank-Wolfe stops once the duality gap is below this.
    #[arg(long, default_value_t = 1e-4)]
    gap_tolerance: f64,
    /// Record wall-clock seconds in the report (breaks byte reproducibility).
    #[arg(long)]
    timing: bool,
    #[command(flatten)]
    common: CommonArgs,
}

impl TrainArgs {
    fn config(&self) -> Result<TrainConfig, Error> {
        let config = TrainConfig {
            lambda: self.lambda,
            epochs: self.epochs,
            steps: self.steps,
            seed: self.seed,
            structure: self.structure.into(),
            step_rule: self.step_rule.parse::<StepRule>()?,
            eval_every: self.eval_every,
            block_sampling: self.block_sampling.parse::<BlockSampling>()?,
            fw_step: self.fw_step.parse::<FwStep>()?,
            gap_tolerance: self.gap_tolerance,
            band: self.common.band,
            record_timing: self.timing,
        };
        config.check()?;
        Ok(config)
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("warpmetric: {e}");
            ExitCode::from(if e.is_numerical() {
                EXIT_NUMERICAL
            } else {
                EXIT_DATA
            })
        }
    }
}

fn run(command: Command) -> Result<(), Error> {
    match command {
        Command::Synth { spec, out } => cmd_synth(&spec, &out),
        Command::Train(args) => cmd_train(&args),
        Command::Align {
            model,
            a,
            b,
            out,
            common,
        } => cmd_align(&model, &a, &b, out.as_deref(), &common),
        Command::Eval {
            model,
            manifest,
            out,
            common,
        } => cmd_eval(&model, &manifest, out.as_deref(), &common),
        Command::Baseline {
            manifest,
            out,
            common,
        } => cmd_baseline(&manifest, out.as_deref(), &common),
    }
}

fn write_file(path: &Path, text: &str) -> Result<(), Error> {
    std::fs::write(path, text).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn load_pairs(manifest: &Path, common: &CommonArgs) -> Result<Vec<SequencePair>, Error> {
    let pairs = dataset::load_manifest(manifest)?;
    Ok(match common.normalize.spread() {
        Some(s) => pairs.iter().map(|p| p.normalized(s)).collect(),
        None => pairs,
    })
}

fn provenance(command: &str, fields: &[(&str, String)], common: &CommonArgs) -> String {
    let mut s = format!("# command={command}");
    for (k, v) in fields {
        s.push_str(&format!(" {k}={v}"));
    }
    s.push_str(&format!(
        " band={} normalize={}\n",
        common.band.map_or("none".to_string(), |b| b.to_string()),
        common.normalize.name()
    ));
    s
}

fn cmd_synth(spec: &Path, out: &Path) -> Result<(), Error> {
    let spec = SynthSpec::load(spec)?;
    let pairs = spec.generate()?;
    let manifest = out.join("manifest.json");
    dataset::save_manifest(&pairs, &manifest)?;
    println!("wrote {} pairs to {}", pairs.len(), manifest.display());
    Ok(())
}

fn cmd_train(args: &TrainArgs) -> Result<(), Error> {
    let config = args.config()?;
    let pairs = load_pairs(&args.manifest, &args.common)?;
    let (loss, (w, report)) = match args.loss {
        LossArg::Hamming => (LossKind::Hamming, train_hamming(&pairs, &config)?),
        LossArg::Sal => (LossKind::Sal, train_sal(&pairs, &config)?),
    };
    w.save(&args.out)?;
    let report_path = args.report.clone().unwrap_or_else(|| {
        let mut s = args.out.clone().into_os_string();
        s.push(".report.csv");
        PathBuf::from(s)
    });
    let mut csv = provenance(
        "train",
        &[("manifest", args.manifest.display().to_string())],
        &args.common,
    );
    csv.push_str(&report.to_csv());
    write_file(&report_path, &csv)?;

    println!(
        "loss {loss}, {} pairs, structure {}",
        pairs.len(),
        w.structure()
    );
    if let Some(c) = report.last() {
        println!(
            "final step {}: objective {:.6}, train delta_abs {:.4}, train hamming {:.4}",
            c.iter, c.objective, c.train_delta_abs, c.train_hamming
        );
        if let (Some(d), Some(g)) = (c.dual_objective, c.fw_gap) {
            println!("dual objective {d:.6}, duality gap {g:.3e}");
        }
    }
    for n in &report.notes {
        println!("note: {n}");
    }
    println!("model written to {}", args.out.display());
    Ok(())
}

fn cmd_align(
    model: &Path,
    a: &Path,
    b: &Path,
    out: Option<&Path>,
    common: &CommonArgs,
) -> Result<(), Error> {
    let w = MetricMatrix::load(model)?;
    let (mut xa, mut xb) = (dataset::load_matrix(a)?, dataset::load_matrix(b)?);
    if let Some(s) = common.normalize.spread() {
        xa = normalize(&xa, s);
        xb = normalize(&xb, s);
    }
    let pair = SequencePair::new("pair", xa, xb, None)?;
    let path = eval::align(&pair, &w, common.band)?;
    let csv = dataset::path_to_csv(&path);
    match out {
        Some(o) => write_file(o, &csv),
        None => {
            print!("{csv}");
            Ok(())
        }
    }
}

fn emit(header: String, summaries: &[EvalSummary], out: Option<&Path>) -> Result<(), Error> {
    let csv = header + &summaries_to_csv(summaries);
    match out {
        Some(o) => {
            write_file(o, &csv)?;
            for s in summaries {
                print!("{}", s.text());
            }
        }
        None => print!("{csv}"),
    }
    Ok(())
}

fn cmd_eval(
    model: &Path,
    manifest: &Path,
    out: Option<&Path>,
    common: &CommonArgs,
) -> Result<(), Error> {
    let w = MetricMatrix::load(model)?;
    let pairs = load_pairs(manifest, common)?;
    let summary = eval::evaluate(&pairs, &w, common.band, "model")?;
    let header = provenance(
        "eval",
        &[
            ("model", model.display().to_string()),
            ("manifest", manifest.display().to_string()),
        ],
        common,
    );
    emit(header, &[summary], out)
}

fn cmd_baseline(manifest: &Path, out: Option<&Path>, common: &CommonArgs) -> Result<(), Error> {
    let pairs = load_pairs(manifest, common)?;
    let summaries = eval::baseline(&pairs, common.band)?;
    let header = provenance(
        "baseline",
        &[("manifest", manifest.display().to_string())],
        common,
    );
    emit(header, &summaries, out)
}
