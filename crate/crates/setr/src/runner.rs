//! Experiment runner: folds and seeds fan out over a bounded worker pool,
//! results are written in a fixed order so output files do not depend on
//! the number of workers.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use setr_core::distill::StageResult;
use setr_core::features::SampleRecord;
use setr_core::harness::{generate_synthetic_dataset, kfold_split, run_fold, Arm, FoldOutcome, FoldPlan, SyntheticSpec};

use crate::codec::write_file;
use crate::config::{DataSource, ExperimentConfig, KeyValues};
use crate::error::{Result, SetrError};
use crate::formats::{read_dataset, write_checkpoint};
use crate::report::{write_reports, MetricRow};

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub out: PathBuf,
    /// Worker threads; 1 gives the serial mode.
    pub jobs: usize,
    pub quiet: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentReport {
    pub rows: Vec<MetricRow>,
    pub outcomes: Vec<FoldOutcome>,
    /// `seed, fold, error` for every fold that failed.
    pub failures: Vec<(u64, usize, String)>,
}

/// Samples for one run seed.
pub fn load_dataset(cfg: &ExperimentConfig, seed: u64) -> Result<Vec<SampleRecord>> {
    match &cfg.data {
        DataSource::Directory(dir) => read_dataset(dir),
        DataSource::Synthetic { spec, fixed_seed } => Ok(generate_synthetic_dataset(&SyntheticSpec {
            seed: fixed_seed.unwrap_or(seed),
            ..spec.clone()
        })?),
    }
}

fn stage_dir(out: &Path, seed: u64, fold: usize, arm: Arm) -> PathBuf {
    out.join(format!("seed-{seed}")).join(format!("fold-{fold}")).join(arm.name())
}

/// Per-epoch training log: `stage,epoch,ce,kl,mse,total,val_accuracy`.
pub fn stage_log_csv(stage: &StageResult) -> String {
    let mut s = String::from("stage,epoch,ce,kl,mse,total,val_accuracy\n");
    for e in &stage.log {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{}",
            e.level, e.epoch, e.train.ce, e.train.kl, e.train.mse, e.train.total, e.val_accuracy
        );
    }
    s
}

/// Manifest stored next to each checkpoint.
pub fn stage_manifest(cfg: &ExperimentConfig, arm: Arm, seed: u64, fold: usize, stage: &StageResult) -> String {
    let m = &cfg.model;
    let spec = stage.model.spec;
    let mut s = String::new();
    let mut kv = |k: &str, v: String| {
        let _ = writeln!(s, "{k} = {v}");
    };
    kv("format", "SETRCKPT 1".into());
    kv("arm", arm.name().into());
    kv("seed", seed.to_string());
    kv("fold", fold.to_string());
    kv("k", spec.k.to_string());
    kv("level", spec.level.to_string());
    kv("fraction", format!("{}/{}", spec.level + 1, spec.k));
    kv("best-epoch", stage.best_epoch.to_string());
    kv("tokens", m.tokens.to_string());
    kv("hidden", m.hidden.to_string());
    kv("heads", m.heads.to_string());
    kv("layers", m.layers.to_string());
    kv("mlp-hidden", m.mlp_hidden.to_string());
    kv("dropout", m.dropout.to_string());
    kv("classes", m.classes.to_string());
    kv("feature-dim", m.feature_dim.to_string());
    kv("literal-attention", m.literal_attention.to_string());
    s
}

/// Model configuration recorded in a checkpoint manifest.
pub fn manifest_model(path: &Path) -> Result<setr_core::model::SetrConfig> {
    let kv = KeyValues::read(path)?;
    let mut m = setr_core::model::SetrConfig::default();
    let need = |k: &str| -> Result<usize> {
        kv.get(k)?
            .ok_or_else(|| SetrError::Config(format!("{}: missing {k}", path.display())))
    };
    m.tokens = need("tokens")?;
    m.hidden = need("hidden")?;
    m.heads = need("heads")?;
    m.layers = need("layers")?;
    m.mlp_hidden = need("mlp-hidden")?;
    m.classes = need("classes")?;
    m.feature_dim = need("feature-dim")?;
    m.dropout = kv.get("dropout")?.unwrap_or(m.dropout);
    m.literal_attention = kv.raw("literal-attention") == Some("true");
    m.validate().map_err(|e| SetrError::Config(e.to_string()))?;
    Ok(m)
}

fn split_csv(plan: &FoldPlan) -> String {
    let mut s = String::from("patient,fold\n");
    for (p, f) in &plan.assignments {
        let _ = writeln!(s, "{p},{f}");
    }
    s
}

fn membership_csv(o: &FoldOutcome) -> String {
    let mut s = String::from("role,sample\n");
    for (role, ids) in [("train", &o.train_ids), ("val", &o.val_ids), ("test", &o.test_ids)] {
        for id in ids {
            let _ = writeln!(s, "{role},{id}");
        }
    }
    s
}

fn write_outcome(cfg: &ExperimentConfig, out: &Path, o: &FoldOutcome) -> Result<()> {
    write_file(
        &out.join("splits").join(format!("seed-{}-fold-{}.csv", o.seed, o.fold)),
        membership_csv(o).as_bytes(),
    )?;
    for a in &o.arms {
        for (level, stage) in &a.stages {
            let ck = stage_dir(&out.join("checkpoints"), o.seed, o.fold, a.arm);
            write_checkpoint(&ck.join(format!("level-{level}.ckpt")), &stage.model.params)?;
            write_file(
                &ck.join(format!("level-{level}.manifest")),
                stage_manifest(cfg, a.arm, o.seed, o.fold, stage).as_bytes(),
            )?;
            let logs = stage_dir(&out.join("logs"), o.seed, o.fold, a.arm);
            write_file(&logs.join(format!("level-{level}.csv")), stage_log_csv(stage).as_bytes())?;
        }
    }
    Ok(())
}

/// Runs every arm over every seed and fold, writing checkpoints, logs,
/// splits, `metrics.csv`, `summary.csv` and plot data under `opts.out`.
/// Failed folds are recorded and the rest continue.
pub fn run_experiment(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<ExperimentReport> {
    cfg.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.jobs.max(1))
        .build()
        .map_err(|e| SetrError::Config(format!("cannot start {} workers: {e}", opts.jobs)))?;
    write_file(&opts.out.join("config.txt"), cfg.to_text().as_bytes())?;

    let mut datasets = Vec::with_capacity(cfg.seeds.len());
    for &seed in &cfg.seeds {
        let data = load_dataset(cfg, seed)?;
        let plan = kfold_split(&data, cfg.folds, cfg.stratified, seed)?;
        write_file(
            &opts.out.join("splits").join(format!("seed-{seed}.csv")),
            split_csv(&plan).as_bytes(),
        )?;
        datasets.push((seed, data, plan));
    }

    let jobs: Vec<(usize, usize)> = (0..datasets.len())
        .flat_map(|i| (0..cfg.folds).map(move |f| (i, f)))
        .collect();
    let results: Vec<std::result::Result<FoldOutcome, String>> = pool.install(|| {
        jobs.par_iter()
            .map(|&(i, fold)| {
                let (seed, data, plan) = &datasets[i];
                let r = run_fold(
                    data,
                    plan,
                    fold,
                    &cfg.arms,
                    cfg.k,
                    &cfg.fractions,
                    &cfg.model,
                    &cfg.distill,
                    cfg.val_share,
                    *seed,
                );
                if !opts.quiet {
                    match &r {
                        Ok(_) => eprintln!("seed {seed} fold {fold}: done"),
                        Err(e) => eprintln!("seed {seed} fold {fold}: FAILED: {e}"),
                    }
                }
                r.map_err(|e| e.to_string())
            })
            .collect()
    });

    let mut rows = Vec::new();
    let mut outcomes = Vec::new();
    let mut failures = Vec::new();
    for (&(i, fold), r) in jobs.iter().zip(results) {
        let seed = datasets[i].0;
        match r {
            Ok(o) => {
                write_outcome(cfg, &opts.out.join(""), &o)?;
                for a in &o.arms {
                    for (fraction, m) in &a.metrics {
                        rows.push(MetricRow {
                            arm: a.arm,
                            seed,
                            fold,
                            fraction: *fraction,
                            metrics: *m,
                        });
                    }
                }
                outcomes.push(o);
            }
            Err(e) => failures.push((seed, fold, e)),
        }
    }
    write_reports(&opts.out, &rows)?;
    let failures_path = opts.out.join("failures.txt");
    if failures.is_empty() {
        if failures_path.exists() {
            std::fs::remove_file(&failures_path).map_err(|e| SetrError::io(&failures_path, e))?;
        }
    } else {
        let mut s = String::new();
        for (seed, fold, e) in &failures {
            let _ = writeln!(s, "seed {seed} fold {fold}: {e}");
        }
        write_file(&failures_path, s.as_bytes())?;
    }
    Ok(ExperimentReport {
        rows,
        outcomes,
        failures,
    })
}
