//! Metric tables and plot data.
//!
//! `metrics.csv` holds one row per arm, seed, fold and fraction.
//! `summary.csv` and the plot files are derived from it alone, so the
//! `report` command regenerates them byte for byte.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use setr_core::harness::{Arm, Confusion, Fraction, MeanStd, Metrics};

use crate::codec::{read_file, write_file};
use crate::error::{Result, SetrError};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricRow {
    pub arm: Arm,
    pub seed: u64,
    pub fold: usize,
    pub fraction: Fraction,
    pub metrics: Metrics,
}

const METRICS_HEADER: &str = "arm,seed,fold,fraction,precision,recall,f1,accuracy,tp,fp,fn,tn";

pub fn metrics_csv(rows: &[MetricRow]) -> String {
    let mut s = String::from(METRICS_HEADER);
    s.push('\n');
    for r in rows {
        let m = &r.metrics;
        let c = &m.confusion;
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            r.arm.name(),
            r.seed,
            r.fold,
            r.fraction,
            m.precision,
            m.recall,
            m.f1,
            m.accuracy,
            c.tp,
            c.fp,
            c.fn_,
            c.tn
        );
    }
    s
}

pub fn parse_metrics_csv(text: &str, path: &Path) -> Result<Vec<MetricRow>> {
    let bad = |line: usize, why: &str| SetrError::Format {
        path: path.to_path_buf(),
        reason: format!("line {line}: {why}"),
    };
    let mut lines = text.lines();
    if lines.next() != Some(METRICS_HEADER) {
        return Err(bad(1, "unexpected header"));
    }
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        let n = i + 2;
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 12 {
            return Err(bad(n, "expected 12 fields"));
        }
        let num = |j: usize| f[j].parse::<usize>().map_err(|_| bad(n, "bad count"));
        let confusion = Confusion {
            tp: num(8)?,
            fp: num(9)?,
            fn_: num(10)?,
            tn: num(11)?,
        };
        rows.push(MetricRow {
            arm: f[0].parse().map_err(|_| bad(n, "bad arm"))?,
            seed: f[1].parse().map_err(|_| bad(n, "bad seed"))?,
            fold: num(2)?,
            fraction: f[3].parse().map_err(|_| bad(n, "bad fraction"))?,
            metrics: Metrics::from_confusion(confusion),
        });
    }
    Ok(rows)
}

type Groups = BTreeMap<(Arm, Fraction), BTreeMap<u64, Vec<Metrics>>>;

fn group(rows: &[MetricRow]) -> Groups {
    let mut g: Groups = BTreeMap::new();
    for r in rows {
        g.entry((r.arm, r.fraction))
            .or_default()
            .entry(r.seed)
            .or_default()
            .push(r.metrics);
    }
    g
}

/// Fold mean and spread per arm, fraction and seed, plus an `all` row per
/// arm and fraction holding the mean and spread of the per-seed means.
pub fn summary_csv(rows: &[MetricRow]) -> String {
    let mut s = String::from(
        "arm,fraction,seed,folds,precision_mean,precision_std,recall_mean,recall_std,f1_mean,f1_std,accuracy_mean,accuracy_std\n",
    );
    let push = |s: &mut String, arm: Arm, f: Fraction, seed: &str, n: usize, stats: &[MeanStd; 4]| {
        let _ = write!(s, "{},{},{},{}", arm.name(), f, seed, n);
        for st in stats {
            let _ = write!(s, ",{},{}", st.mean, st.std);
        }
        s.push('\n');
    };
    for ((arm, f), seeds) in group(rows) {
        let mut per_seed: [Vec<f64>; 4] = Default::default();
        let mut total = 0;
        for (seed, ms) in &seeds {
            let stats = MeanStd::across(ms);
            push(&mut s, arm, f, &seed.to_string(), ms.len(), &stats);
            for (acc, st) in per_seed.iter_mut().zip(&stats) {
                acc.push(st.mean);
            }
            total += ms.len();
        }
        let all = [
            MeanStd::of(&per_seed[0]),
            MeanStd::of(&per_seed[1]),
            MeanStd::of(&per_seed[2]),
            MeanStd::of(&per_seed[3]),
        ];
        push(&mut s, arm, f, "all", total, &all);
    }
    s
}

/// Seed-mean of the fold-mean accuracy per fraction, for one arm.
pub fn plot_csv(rows: &[MetricRow], arm: Arm) -> String {
    let mut s = String::from("fraction,accuracy\n");
    for ((a, f), seeds) in group(rows) {
        if a != arm {
            continue;
        }
        let means: Vec<f64> = seeds
            .values()
            .map(|ms| MeanStd::of(&ms.iter().map(|m| m.accuracy).collect::<Vec<_>>()).mean)
            .collect();
        let _ = writeln!(s, "{},{}", f.value(), MeanStd::of(&means).mean);
    }
    s
}

/// Seed-mean F1 per arm and fraction.
pub fn seed_mean_f1(rows: &[MetricRow]) -> BTreeMap<(Arm, Fraction), f64> {
    group(rows)
        .into_iter()
        .map(|(key, seeds)| {
            let means: Vec<f64> = seeds
                .values()
                .map(|ms| MeanStd::of(&ms.iter().map(|m| m.f1).collect::<Vec<_>>()).mean)
                .collect();
            (key, MeanStd::of(&means).mean)
        })
        .collect()
}

pub fn write_reports(out: &Path, rows: &[MetricRow]) -> Result<()> {
    write_file(&out.join("metrics.csv"), metrics_csv(rows).as_bytes())?;
    write_derived(out, rows)
}

fn write_derived(out: &Path, rows: &[MetricRow]) -> Result<()> {
    write_file(&out.join("summary.csv"), summary_csv(rows).as_bytes())?;
    let mut arms: Vec<Arm> = rows.iter().map(|r| r.arm).collect();
    arms.sort();
    arms.dedup();
    for arm in arms {
        write_file(&out.join(format!("plot-{}.csv", arm.name())), plot_csv(rows, arm).as_bytes())?;
    }
    Ok(())
}

/// Regenerates the summary and plot files from `dir/metrics.csv`.
pub fn regenerate(dir: &Path) -> Result<Vec<MetricRow>> {
    let path = dir.join("metrics.csv");
    let text = String::from_utf8(read_file(&path)?).map_err(|_| SetrError::Format {
        path: path.clone(),
        reason: "not UTF-8".into(),
    })?;
    let rows = parse_metrics_csv(&text, &path)?;
    write_derived(dir, &rows)?;
    Ok(rows)
}
