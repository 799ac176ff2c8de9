use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use setr::config::{ExperimentConfig, KeyValues};
use setr::error::{Result, SetrError};
use setr::formats::{read_checkpoint, read_dataset, read_flow, read_video, write_features, write_flow};
use setr::pipeline::{extract_flow, featurize};
use setr::report::{metrics_csv, regenerate, MetricRow};
use setr::runner::{load_dataset, manifest_model, run_experiment, RunOptions};
use setr_core::flow::TvL1Params;
use setr_core::harness::{evaluate, Arm, Fraction};

/// Privacy-preserving early seizure detection: optical flow, SETR and
/// progressive knowledge distillation.
#[derive(Parser)]
#[command(name = "setr", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Configuration file (`key = value`).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the configured seeds with a single seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; 1 runs serially and deterministically.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// Output file or directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// TV-L1 optical flow for every consecutive frame pair of a video file.
    ExtractFlow {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        input: PathBuf,
        /// Displacements are clipped to ±clip pixels before quantization.
        #[arg(long, default_value_t = 16.0)]
        clip: f64,
    },
    /// Histogram-of-flow features of a flow file.
    Featurize {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        sample_id: String,
        #[arg(long)]
        patient_id: String,
        #[arg(long)]
        label: usize,
        /// Sample duration in seconds; defaults to one second per flow frame.
        #[arg(long)]
        duration: Option<f64>,
    },
    /// Writes a synthetic cohort as feature files.
    GenSynthetic {
        #[command(flatten)]
        common: Common,
    },
    /// Plain supervised training and evaluation of the full-sample model.
    Train {
        #[command(flatten)]
        common: Common,
    },
    /// Progressive or direct distillation experiment.
    Distill {
        #[command(flatten)]
        common: Common,
        /// `pkd` or `direct`; defaults to the configured mode.
        #[arg(long)]
        mode: Option<Arm>,
    },
    /// Evaluates a checkpoint on a feature directory at several fractions.
    Evaluate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Checkpoint manifest; defaults to the checkpoint path with a
        /// `.manifest` extension.
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 4)]
        k: usize,
        #[arg(long, value_delimiter = ',', default_value = "1/4,1/2,3/4,1")]
        fractions: Vec<Fraction>,
    },
    /// Regenerates summary and plot files from `metrics.csv` in `--out`.
    Report {
        #[command(flatten)]
        common: Common,
    },
}

fn experiment_config(common: &Common) -> Result<ExperimentConfig> {
    let mut cfg = match &common.config {
        Some(p) => ExperimentConfig::read(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.seeds = vec![seed];
    }
    Ok(cfg)
}

fn tvl1_params(path: Option<&Path>) -> Result<TvL1Params> {
    let mut p = TvL1Params::default();
    let Some(path) = path else {
        return Ok(p);
    };
    let kv = KeyValues::read(path)?;
    for key in kv.keys() {
        match key {
            "lambda" | "theta" | "tau" | "warps" | "iterations" | "levels" | "scale" | "epsilon"
            | "median-filter" => {}
            other => return Err(SetrError::Config(format!("unknown flow key {other}"))),
        }
    }
    p.lambda = kv.get("lambda")?.unwrap_or(p.lambda);
    p.theta = kv.get("theta")?.unwrap_or(p.theta);
    p.tau = kv.get("tau")?.unwrap_or(p.tau);
    p.warps = kv.get("warps")?.unwrap_or(p.warps);
    p.iterations = kv.get("iterations")?.unwrap_or(p.iterations);
    p.levels = kv.get("levels")?.unwrap_or(p.levels);
    p.scale = kv.get("scale")?.unwrap_or(p.scale);
    p.epsilon = kv.get("epsilon")?.unwrap_or(p.epsilon);
    p.median_filter = kv.get("median-filter")?.unwrap_or(p.median_filter);
    p.validate().map_err(|e| SetrError::Config(e.to_string()))?;
    Ok(p)
}

fn experiment(common: &Common, cfg: ExperimentConfig) -> Result<ExitCode> {
    let report = run_experiment(
        &cfg,
        &RunOptions {
            out: common.out.clone(),
            jobs: common.jobs,
            quiet: false,
        },
    )?;
    println!(
        "{} metric rows written to {}",
        report.rows.len(),
        common.out.join("metrics.csv").display()
    );
    if report.failures.is_empty() {
        Ok(ExitCode::SUCCESS)
    } else {
        eprintln!("{} fold(s) failed; see failures.txt", report.failures.len());
        Ok(ExitCode::from(2))
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::ExtractFlow { common, input, clip } => {
            let params = tvl1_params(common.config.as_deref())?;
            let video = read_video(&input)?;
            let flow = extract_flow(&video, &params, clip)?;
            write_flow(&common.out, &flow)?;
            println!("{} flow frames written to {}", flow.pairs.len(), common.out.display());
        }
        Command::Featurize {
            common,
            input,
            sample_id,
            patient_id,
            label,
            duration,
        } => {
            let flow = read_flow(&input)?;
            let duration = duration.unwrap_or(flow.pairs.len() as f64);
            let record = featurize(&flow, &sample_id, &patient_id, label, duration)?;
            write_features(&common.out, &record)?;
            println!("{} frames written to {}", record.frames(), common.out.display());
        }
        Command::GenSynthetic { common } => {
            let cfg = experiment_config(&common)?;
            let seed = cfg.seeds[0];
            let data = load_dataset(&cfg, seed)?;
            for r in &data {
                write_features(&common.out.join(format!("{}.feat", r.sample_id)), r)?;
            }
            println!("{} samples written to {}", data.len(), common.out.display());
        }
        Command::Train { common } => {
            let mut cfg = experiment_config(&common)?;
            cfg.arms = vec![Arm::Plain];
            return experiment(&common, cfg);
        }
        Command::Distill { common, mode } => {
            let mut cfg = experiment_config(&common)?;
            if let Some(arm) = mode {
                if arm == Arm::Plain {
                    return Err(SetrError::Config("distill mode must be pkd or direct".into()));
                }
                cfg.arms = vec![arm];
            }
            return experiment(&common, cfg);
        }
        Command::Evaluate {
            common,
            checkpoint,
            manifest,
            data,
            k,
            fractions,
        } => {
            let manifest = manifest.unwrap_or_else(|| checkpoint.with_extension("manifest"));
            let model = manifest_model(&manifest)?;
            let params = read_checkpoint(&checkpoint, &model)?;
            let records = read_dataset(&data)?;
            let refs: Vec<_> = records.iter().collect();
            let metrics = evaluate(&params, &model, &refs, k, &fractions)
                .map_err(|e| SetrError::Config(e.to_string()))?;
            let rows: Vec<MetricRow> = metrics
                .into_iter()
                .map(|(fraction, metrics)| MetricRow {
                    arm: Arm::Plain,
                    seed: common.seed.unwrap_or(0),
                    fold: 0,
                    fraction,
                    metrics,
                })
                .collect();
            setr::codec::write_file(&common.out, metrics_csv(&rows).as_bytes())?;
            print!("{}", metrics_csv(&rows));
        }
        Command::Report { common } => {
            let rows = regenerate(&common.out)?;
            println!("summary regenerated from {} rows", rows.len());
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
