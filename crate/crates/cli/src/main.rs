use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use listenkit::audio::Split;
use listenkit::pipeline::{
    evaluate, extract, infer, synthesize, train, ExperimentConfig, SynthConfig, TaskKind,
};
use listenkit::{Error, Result};

#[derive(Parser, Debug)]
#[command(
    name = "listenkit",
    version,
    about = "Log-mel CNN baselines for tagging, detection and localisation"
)]
struct Cli {
    /// Experiment configuration (TOML). Defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for extraction and inference.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a class-separable synthetic dataset.
    Synth(SynthArgs),
    /// Compute log-mel features and training-split statistics.
    Extract {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        vocabulary: PathBuf,
        /// Strong-label sidecar for frame-level tasks.
        #[arg(long)]
        events: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train on the train split of a feature directory.
    Train {
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Write clip or frame predictions for a feature directory.
    Infer {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Restrict to one split (train, validate, evaluate).
        #[arg(long)]
        split: Option<String>,
    },
    /// Score predictions against the reference labels and emit a JSON report.
    Evaluate {
        #[arg(long)]
        predictions: PathBuf,
        #[arg(long)]
        features: PathBuf,
        /// Report path; printed to stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args, Debug)]
struct SynthArgs {
    #[arg(long)]
    out: PathBuf,
    /// Task layout; defaults to the configured task.
    #[arg(long)]
    task: Option<String>,
    #[arg(long, default_value_t = 8)]
    clips: usize,
    #[arg(long, default_value_t = 0)]
    eval_clips: usize,
    #[arg(long, default_value_t = 10.0)]
    seconds: f64,
    #[arg(long, default_value_t = 3)]
    classes: usize,
    /// Snap event boundaries to multiples of this many seconds.
    #[arg(long)]
    event_grid: Option<f64>,
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) => 2,
        Error::Numeric(_) => 4,
        _ => 3,
    }
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig> {
    let mut cfg = match &cli.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Error::Config("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Config(e.to_string()))?;
    }
    let cfg = load_config(&cli)?;
    match cli.command {
        Command::Synth(a) => {
            let task = match &a.task {
                Some(t) => t.parse::<TaskKind>()?,
                None => cfg.task,
            };
            let synth = SynthConfig {
                task,
                clips: a.clips,
                eval_clips: a.eval_clips,
                seconds: a.seconds,
                classes: a.classes,
                sample_rate: cfg.stft.sample_rate,
                seed: cfg.seed,
                event_grid: a.event_grid,
            };
            let ds = synthesize(&synth, &a.out)?;
            println!("{}", ds.manifest.display());
        }
        Command::Extract {
            manifest,
            vocabulary,
            events,
            out,
        } => {
            let index = extract(&manifest, &vocabulary, events.as_deref(), &out, &cfg)?;
            println!("{} clips", index.clips.len());
        }
        Command::Train {
            features,
            checkpoint,
        } => {
            let summary = train(&cfg, &features, &checkpoint)?;
            println!(
                "{} steps, final loss {}",
                summary.steps(),
                summary.final_loss()
            );
        }
        Command::Infer {
            checkpoint,
            features,
            out,
            split,
        } => {
            let split = split
                .map(|s| s.parse::<Split>())
                .transpose()
                .map_err(|e| Error::Config(e.to_string()))?;
            let n = infer(&checkpoint, &features, &out, split)?;
            println!("{n} clips");
        }
        Command::Evaluate {
            predictions,
            features,
            out,
        } => {
            let report = evaluate(&predictions, &features)?;
            match out {
                Some(p) => report.write(Path::new(&p))?,
                None => println!("{}", serde_json::to_string_pretty(&report)?),
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
