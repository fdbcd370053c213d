use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use flowseg::damath::{rcs_distribution, ClassFrequencies};
use flowseg::io::Split;
use flowseg::metrics::SCHEMA_VERSION;
use flowseg::pipeline::{
    frame_distance_sweep, run_consis_job, run_eval_job, run_refine_job, sweep_csv, write_report, ConsisMetric,
    JobConfig,
};
use flowseg::refine::Strategy;
use flowseg::synth::{emit_dataset, WorldSpec};

/// Flow-based pseudo-label refinement and temporal segmentation metrics.
#[derive(Parser)]
#[command(name = "flowseg", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Refine predictions with a neighbouring frame and write label PNGs.
    Refine(RefineArgs),
    /// Score predictions against manifest labels.
    Eval(EvalArgs),
    /// Temporal consistency of predictions at one frame distance.
    Consis(ConsisArgs),
    /// Warped and consistency metrics over several frame distances.
    Sweep(SweepArgs),
    /// Rare-class sampling probabilities.
    Rcs(RcsArgs),
    /// Generate a synthetic dataset.
    Synth(SynthArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Clone, Copy, ValueEnum)]
enum SplitArg {
    Train,
    Val,
}

impl From<SplitArg> for Split {
    fn from(s: SplitArg) -> Split {
        match s {
            SplitArg::Train => Split::Train,
            SplitArg::Val => Split::Val,
        }
    }
}

/// Flags shared by every manifest-driven job. Each overrides the matching
/// key of `--config`.
#[derive(Args)]
struct JobArgs {
    /// JSON job config; flags take precedence over its keys.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    manifest: Option<PathBuf>,
    #[arg(long)]
    pred_dir: Option<PathBuf>,
    #[arg(long)]
    num_classes: Option<u8>,
    /// Comma-separated class IDs to score.
    #[arg(long, value_delimiter = ',')]
    classes: Option<Vec<u8>>,
    #[arg(long, value_enum)]
    split: Option<SplitArg>,
    /// Worker threads; defaults to the number of logical cores.
    #[arg(long)]
    workers: Option<usize>,
    /// Seed for every random draw; defaults to 1.
    #[arg(long)]
    seed: Option<u64>,
}

impl JobArgs {
    fn resolve(&self) -> Result<JobConfig, Usage> {
        let mut cfg = match &self.config {
            Some(p) => JobConfig::read(p).map_err(usage)?,
            None => JobConfig::default(),
        };
        if let Some(v) = &self.manifest {
            cfg.manifest = v.clone();
        }
        if let Some(v) = &self.pred_dir {
            cfg.pred_dir = v.clone();
        }
        if let Some(v) = self.num_classes {
            cfg.num_classes = v;
        }
        if let Some(v) = &self.classes {
            cfg.classes = Some(v.clone());
        }
        if let Some(v) = self.split {
            cfg.split = Some(v.into());
        }
        if let Some(v) = self.workers {
            cfg.workers = v;
        }
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        Ok(cfg)
    }
}

#[derive(Args)]
struct RefineArgs {
    #[command(flatten)]
    job: JobArgs,
    #[arg(long)]
    conf_dir: Option<PathBuf>,
    #[arg(long)]
    strategy: Option<Strategy>,
    #[arg(long, allow_negative_numbers = true)]
    frame_distance: Option<i32>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    #[command(flatten)]
    job: JobArgs,
    /// Also write the report here.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "csv")]
    format: Format,
}

#[derive(Args)]
struct ConsisArgs {
    #[command(flatten)]
    job: JobArgs,
    #[arg(long, allow_negative_numbers = true)]
    frame_distance: Option<i32>,
    #[arg(long, default_value = "predconsis")]
    metric: ConsisMetric,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "csv")]
    format: Format,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    job: JobArgs,
    /// Comma-separated signed frame distances.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true, default_value = "1,3,6,10")]
    ks: Vec<i32>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "csv")]
    format: Format,
}

#[derive(Args)]
struct RcsArgs {
    /// JSON file with `freqs` and `temperature`; flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Comma-separated per-class pixel frequencies in [0, 1].
    #[arg(long, value_delimiter = ',')]
    freqs: Option<Vec<f64>>,
    #[arg(long)]
    temperature: Option<f64>,
}

#[derive(Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RcsConfig {
    freqs: Option<Vec<f64>>,
    temperature: Option<f64>,
}

#[derive(Serialize)]
struct RcsReport {
    schema_version: u32,
    temperature: f64,
    probabilities: Vec<f64>,
}

#[derive(Args)]
struct SynthArgs {
    /// WorldSpec JSON file.
    #[arg(long)]
    spec: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Overrides the seed in the spec.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Serialize)]
struct SynthReport {
    schema_version: u32,
    manifest: PathBuf,
    clips: usize,
    records: usize,
}

/// A failure the user can fix by changing the invocation.
#[derive(Debug)]
struct Usage(anyhow::Error);

impl std::fmt::Display for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{:#}", self.0)
    }
}

impl std::error::Error for Usage {}

fn usage(e: impl Into<anyhow::Error>) -> Usage {
    Usage(e.into())
}

fn emit(text: &str, out: Option<&Path>) -> Result<()> {
    if let Some(path) = out {
        write_report(path, text)?;
    }
    print!("{text}");
    Ok(())
}

fn pretty(value: &impl Serialize) -> Result<String> {
    Ok(serde_json::to_string_pretty(value)? + "\n")
}

fn refine(args: RefineArgs) -> Result<()> {
    let mut cfg = args.job.resolve()?;
    if let Some(v) = args.conf_dir {
        cfg.conf_dir = Some(v);
    }
    if let Some(v) = args.strategy {
        cfg.strategy = v;
    }
    if let Some(v) = args.frame_distance {
        cfg.frame_distance = v;
    }
    if let Some(v) = args.out_dir {
        cfg.out_dir = Some(v);
    }
    cfg.validate_refine().map_err(usage)?;
    let report = run_refine_job(&cfg)?;
    emit(&report.to_json()?, None)
}

fn eval(args: EvalArgs) -> Result<()> {
    let cfg = args.job.resolve()?;
    cfg.validate().map_err(usage)?;
    let report = run_eval_job(&cfg)?;
    let text = match args.format {
        Format::Csv => report.to_csv()?,
        Format::Json => report.to_json()?,
    };
    emit(&text, args.out.as_deref())
}

fn consis(args: ConsisArgs) -> Result<()> {
    let mut cfg = args.job.resolve()?;
    if let Some(v) = args.frame_distance {
        cfg.frame_distance = v;
    }
    cfg.validate().map_err(usage)?;
    if cfg.frame_distance == 0 {
        return Err(usage(anyhow::anyhow!("frame distance must be nonzero")).into());
    }
    let report = run_consis_job(&cfg, args.metric)?;
    let text = match args.format {
        Format::Csv => report.to_csv()?,
        Format::Json => report.to_json()?,
    };
    emit(&text, args.out.as_deref())
}

fn sweep(args: SweepArgs) -> Result<()> {
    let cfg = args.job.resolve()?;
    cfg.validate().map_err(usage)?;
    if args.ks.contains(&0) {
        return Err(usage(anyhow::anyhow!("frame distances must be nonzero")).into());
    }
    let rows = frame_distance_sweep(&cfg, &args.ks)?;
    let text = match args.format {
        Format::Csv => sweep_csv(&rows)?,
        Format::Json => pretty(&rows)?,
    };
    emit(&text, args.out.as_deref())
}

fn rcs(args: RcsArgs) -> Result<()> {
    let file: RcsConfig = match &args.config {
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            serde_json::from_str(&text).map_err(usage)?
        }
        None => RcsConfig::default(),
    };
    let freqs = args
        .freqs
        .or(file.freqs)
        .ok_or_else(|| usage(anyhow::anyhow!("no class frequencies given (--freqs)")))?;
    let temperature = args
        .temperature
        .or(file.temperature)
        .ok_or_else(|| usage(anyhow::anyhow!("no temperature given (--temperature)")))?;
    let probabilities = rcs_distribution(&ClassFrequencies { freqs, temperature }).map_err(usage)?;
    emit(
        &pretty(&RcsReport {
            schema_version: SCHEMA_VERSION,
            temperature,
            probabilities,
        })?,
        None,
    )
}

fn synth(args: SynthArgs) -> Result<()> {
    let text = std::fs::read_to_string(&args.spec).with_context(|| format!("reading {}", args.spec.display()))?;
    let mut spec: WorldSpec = serde_json::from_str(&text).map_err(usage)?;
    if let Some(seed) = args.seed {
        spec.seed = seed;
    }
    spec.validate().map_err(usage)?;
    let manifest = emit_dataset(&spec, &args.out)?;
    emit(
        &pretty(&SynthReport {
            schema_version: SCHEMA_VERSION,
            manifest: args.out.join("manifest.jsonl"),
            clips: manifest.clip_index().len(),
            records: manifest.len(),
        })?,
        None,
    )
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Refine(a) => refine(a),
        Command::Eval(a) => eval(a),
        Command::Consis(a) => consis(a),
        Command::Sweep(a) => sweep(a),
        Command::Rcs(a) => rcs(a),
        Command::Synth(a) => synth(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.is::<Usage>() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
