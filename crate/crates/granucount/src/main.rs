//! Batch front-end: generate, validate, stats, and eval over a dataset root.
//!
//! All heavy lifting lives in the library; this binary only parses flags,
//! sizes the worker pool, and prints reports.

use clap::{Args, Parser, Subcommand};
use granucount::eval::MissingPolicy;
use granucount::levels::LevelTag;
use granucount::pipeline::{
    benchmark_shape_counts, cmd_eval, cmd_generate, cmd_stats, cmd_validate, Baseline,
    GenerationJob, LevelCounts, PredictionSource,
};
use granucount::profiles::load_profile;
use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "granucount", version, about = "Multi-grained counting dataset toolkit")]
struct Cli {
    /// Worker threads (0 = all cores). Env var GRANUCOUNT_JOBS overrides.
    #[arg(long, global = true, default_value_t = 0)]
    jobs: usize,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a dataset under --out.
    Generate(GenerateArgs),
    /// Re-check every invariant of a generated dataset.
    Validate {
        /// Dataset root containing manifest.json.
        root: PathBuf,
    },
    /// Print scene, count, and balance statistics.
    Stats {
        root: PathBuf,
    },
    /// Score predictions (or a built-in baseline) against the queries.
    Eval(EvalArgs),
}

#[derive(Args)]
struct GenerateArgs {
    /// Output dataset root.
    #[arg(long)]
    out: PathBuf,

    /// Global seed; everything else derives from it.
    #[arg(long, default_value_t = 0)]
    seed: u64,

    /// Comma-separated subset of levels (L1,L2Size,L2Color,L3,L4,L5).
    #[arg(long)]
    levels: Option<String>,

    /// Per-level scene counts as trainNormal,trainDense,testA,testB.
    /// Defaults to the stock benchmark shape at 1/100 scale.
    #[arg(long)]
    counts: Option<String>,

    /// Path to a sampling profile JSON; defaults to the built-in profile.
    #[arg(long)]
    profile: Option<PathBuf>,

    /// Square image size in pixels, or WxH.
    #[arg(long, default_value = "256")]
    image_size: String,

    /// Normal:dense training mix, e.g. 4 means 4:1. Only used with --counts
    /// given as a single total train figure; ignored otherwise.
    #[arg(long, default_value_t = 4.0)]
    dense_ratio: f64,
}

#[derive(Args)]
struct EvalArgs {
    root: PathBuf,

    /// JSONL file of {"query_id": ..., "count": ...} lines.
    #[arg(long, conflicts_with = "baseline")]
    predictions: Option<PathBuf>,

    /// Built-in predictor: naive or oracle.
    #[arg(long)]
    baseline: Option<String>,

    /// How to score queries without predictions: error or count-zero.
    #[arg(long, default_value = "error")]
    missing_policy: String,
}

fn parse_image_size(s: &str) -> Result<(u32, u32), String> {
    let parse = |t: &str| t.parse::<u32>().map_err(|e| format!("bad image size '{s}': {e}"));
    match s.split_once(['x', 'X']) {
        Some((w, h)) => Ok((parse(w)?, parse(h)?)),
        None => {
            let side = parse(s)?;
            Ok((side, side))
        }
    }
}

fn parse_counts(s: &str, dense_ratio: f64) -> Result<LevelCounts, String> {
    let parts: Vec<&str> = s.split(',').collect();
    let num = |t: &str| t.trim().parse::<usize>().map_err(|e| format!("bad count '{t}': {e}"));
    match parts.as_slice() {
        [tn, td, ta, tb] => Ok(LevelCounts {
            train_normal: num(tn)?,
            train_dense: num(td)?,
            test_a: num(ta)?,
            test_b: num(tb)?,
        }),
        [train, test] => {
            // split a train total by the dense ratio
            let train = num(train)?;
            let test = num(test)?;
            if dense_ratio <= 0.0 {
                return Err(format!("dense ratio {dense_ratio} must be positive"));
            }
            let dense = (train as f64 / (dense_ratio + 1.0)).round() as usize;
            Ok(LevelCounts {
                train_normal: train - dense,
                train_dense: dense,
                test_a: test,
                test_b: test,
            })
        }
        _ => Err(format!(
            "counts '{s}' must be trainNormal,trainDense,testA,testB or train,test"
        )),
    }
}

fn build_job(args: &GenerateArgs) -> Result<GenerationJob, String> {
    let mut job = GenerationJob::new(args.seed);
    job.image_size = parse_image_size(&args.image_size)?;
    if let Some(path) = &args.profile {
        let text = std::fs::read_to_string(path)
            .map_err(|e| format!("cannot read profile {}: {e}", path.display()))?;
        job.profile = load_profile(&text).map_err(|e| e.to_string())?;
    }
    let levels: Vec<LevelTag> = match &args.levels {
        None => LevelTag::ALL.to_vec(),
        Some(spec) => spec
            .split(',')
            .map(|t| LevelTag::parse(t.trim()).map_err(|e| e.to_string()))
            .collect::<Result<_, _>>()?,
    };
    let stock = benchmark_shape_counts();
    let per_level = args
        .counts
        .as_deref()
        .map(|s| parse_counts(s, args.dense_ratio))
        .transpose()?;
    job.counts = levels
        .into_iter()
        .map(|l| (l, per_level.unwrap_or(stock[&l])))
        .collect::<BTreeMap<_, _>>();
    Ok(job)
}

fn run() -> Result<(), String> {
    let cli = Cli::parse();
    let jobs = std::env::var("GRANUCOUNT_JOBS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .unwrap_or(cli.jobs);
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build_global()
        .map_err(|e| format!("worker pool: {e}"))?;

    match &cli.command {
        Command::Generate(args) => {
            let job = build_job(args)?;
            let manifest = cmd_generate(&job, &args.out).map_err(|e| e.to_string())?;
            println!(
                "generated {} scenes, {} queries, {} failures",
                manifest.scenes.len(),
                manifest.query_count,
                manifest.failures.len()
            );
            println!("manifest hash {}", manifest.content_hash);
            Ok(())
        }
        Command::Validate { root } => {
            let report = cmd_validate(root).map_err(|e| e.to_string())?;
            println!(
                "checked {} scenes, {} queries",
                report.scenes_checked, report.queries_checked
            );
            if report.ok() {
                println!("no violations");
                Ok(())
            } else {
                for v in &report.violations {
                    eprintln!("violation: {v}");
                }
                Err(format!("{} violations", report.violations.len()))
            }
        }
        Command::Stats { root } => {
            let stats = cmd_stats(root).map_err(|e| e.to_string())?;
            println!("{}", serde_json::to_string_pretty(&stats).map_err(|e| e.to_string())?);
            Ok(())
        }
        Command::Eval(args) => {
            let source = match (&args.predictions, &args.baseline) {
                (Some(path), None) => PredictionSource::File(path),
                (None, Some(name)) => PredictionSource::Baseline(
                    Baseline::parse(name).map_err(|e| e.to_string())?,
                ),
                (None, None) => {
                    return Err("give either --predictions or --baseline".into())
                }
                (Some(_), Some(_)) => unreachable!("clap conflicts_with"),
            };
            let policy = match args.missing_policy.to_ascii_lowercase().as_str() {
                "error" => MissingPolicy::Error,
                "count-zero" | "countzero" | "zero" => MissingPolicy::CountZero,
                other => return Err(format!("unknown missing policy '{other}'")),
            };
            let report = cmd_eval(&args.root, source, policy).map_err(|e| e.to_string())?;
            println!("{}", serde_json::to_string_pretty(&report).map_err(|e| e.to_string())?);
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::FAILURE
        }
    }
}
