use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use tubelet_eval::dataset::{generate_synthetic, CorruptionParams, SyntheticParams};
use tubelet_eval::{evaluate_files, render_report, BucketDimension, Error, EvalConfig, EvalOptions, Format};

/// Evaluate described-object tubelet predictions against ground truth.
#[derive(Parser)]
#[command(name = "tubelet-eval", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Match predictions to ground truth and report metrics.
    Evaluate(EvaluateArgs),
    /// Write a seeded synthetic ground truth with perfect and corrupted predictions.
    Generate(GenerateArgs),
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    gt: PathBuf,
    #[arg(long)]
    pred: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "0.3,0.5")]
    viou_thresholds: Vec<f64>,
    #[arg(long, default_value_t = 0.5)]
    frame_ap_threshold: f64,
    #[arg(long, default_value_t = 0.25)]
    video_ap_threshold: f64,
    #[arg(long, value_delimiter = ',', default_value = "object-count,length,entities")]
    buckets: Vec<BucketDimension>,
    #[arg(long, default_value = "json")]
    format: Format,
    /// Write the report here instead of standard output.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads; the report is identical for any value.
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u16).range(1..))]
    jobs: u16,
    /// Cross-check every assignment on instances with at most 7 tubelets
    /// against exhaustive search.
    #[arg(long)]
    check_oracle: bool,
}

#[derive(Args)]
struct GenerateArgs {
    /// Directory that receives gt.json, perfect.json and corrupted.json.
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 100)]
    instances: usize,
    #[arg(long, default_value_t = 20)]
    videos: usize,
    #[arg(long, default_value_t = 4)]
    max_tubelets: usize,
    #[arg(long, default_value_t = 24)]
    frames: u32,
    #[arg(long, default_value_t = 0.3)]
    jitter: f64,
    #[arg(long, default_value_t = 0.2)]
    clip_fraction: f64,
    #[arg(long, default_value_t = 0.6)]
    min_confidence: f64,
    #[arg(long, default_value_t = 1)]
    decoys: usize,
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Validation(_) | Error::InvalidInput(_) => 1,
        Error::Parse(_) | Error::Io(_) => 2,
        Error::OracleMismatch { .. } => 3,
    }
}

fn report_error(err: &Error) {
    eprintln!("error: {err}");
    if let Error::Validation(diags) = err {
        eprint!("{diags}");
    }
}

fn write_output(out: Option<&Path>, text: &str) -> Result<(), Error> {
    match out {
        Some(path) => std::fs::write(path, text)?,
        None => print!("{text}"),
    }
    Ok(())
}

fn run_evaluate(args: EvaluateArgs) -> Result<(), Error> {
    let config = EvalConfig {
        viou_thresholds: args.viou_thresholds,
        frame_ap_threshold: args.frame_ap_threshold,
        video_ap_threshold: args.video_ap_threshold,
        ..EvalConfig::default()
    };
    let options = EvalOptions {
        config,
        buckets: args.buckets,
        jobs: usize::from(args.jobs),
        check_oracle: args.check_oracle,
    };
    let report = evaluate_files(&args.gt, &args.pred, &options)?;
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    write_output(args.out.as_deref(), &render_report(&report, args.format))
}

fn run_generate(args: GenerateArgs) -> Result<(), Error> {
    let params = SyntheticParams {
        videos: args.videos,
        instances: args.instances,
        max_tubelets: args.max_tubelets,
        frames_per_video: args.frames,
        num_slots: EvalConfig::default().num_slots,
    };
    let corruption = CorruptionParams {
        jitter: args.jitter,
        clip_fraction: args.clip_fraction,
        min_confidence: args.min_confidence,
        decoys: args.decoys,
    };
    let set = generate_synthetic(args.seed, &params, &corruption)?;
    std::fs::create_dir_all(&args.out_dir)?;
    std::fs::write(args.out_dir.join("gt.json"), set.ground_truth.to_json())?;
    std::fs::write(args.out_dir.join("perfect.json"), set.perfect.to_json())?;
    std::fs::write(args.out_dir.join("corrupted.json"), set.corrupted.to_json())?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Evaluate(args) => run_evaluate(args),
        Command::Generate(args) => run_generate(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            report_error(&err);
            ExitCode::from(exit_code(&err))
        }
    }
}
