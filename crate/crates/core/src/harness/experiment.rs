use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::folds::FoldPlan;
use super::metrics::{Confusion, Metrics};
use crate::distill::{split_prefix, stage_seed, train_stage, DistillConfig, SegmentSpec, StageData, StageResult};
use crate::error::{Error, Result};
use crate::features::SampleRecord;
use crate::model::{infer, predict, SetrConfig, SetrParams};

/// A prefix fraction `num/den` of a sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Fraction {
    pub num: usize,
    pub den: usize,
}

impl Fraction {
    pub fn new(num: usize, den: usize) -> Result<Self> {
        if den == 0 || num == 0 || num > den {
            return Err(Error::InvalidConfig(format!("fraction {num}/{den} is not in (0, 1]")));
        }
        Ok(Fraction { num, den })
    }

    pub fn value(&self) -> f64 {
        self.num as f64 / self.den as f64
    }

    /// The segment level whose prefix is exactly this fraction.
    pub fn level(&self, k: usize) -> Result<SegmentSpec> {
        if !(self.num * k).is_multiple_of(self.den) {
            return Err(Error::InvalidConfig(format!("fraction {self} is not a multiple of 1/{k}")));
        }
        SegmentSpec::new(k, self.num * k / self.den - 1)
    }

    /// `1/4, 1/2, 3/4, 1`.
    pub fn quarters() -> Vec<Fraction> {
        [(1, 4), (1, 2), (3, 4), (1, 1)]
            .iter()
            .map(|&(n, d)| Fraction { num: n, den: d })
            .collect()
    }
}

impl fmt::Display for Fraction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.num == self.den {
            write!(f, "1")
        } else {
            write!(f, "{}/{}", self.num, self.den)
        }
    }
}

impl FromStr for Fraction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s == "1" || s.eq_ignore_ascii_case("full") {
            return Fraction::new(1, 1);
        }
        let bad = || Error::InvalidConfig(format!("cannot parse fraction {s:?}"));
        let (n, d) = s.split_once('/').ok_or_else(bad)?;
        let n = n.trim().parse().map_err(|_| bad())?;
        let d = d.trim().parse().map_err(|_| bad())?;
        Fraction::new(n, d)
    }
}

/// Confusion-based metrics of `model` on `test`, truncated to each fraction.
pub fn evaluate(
    model: &SetrParams,
    cfg: &SetrConfig,
    test: &[&SampleRecord],
    k: usize,
    fractions: &[Fraction],
) -> Result<Vec<(Fraction, Metrics)>> {
    fractions
        .iter()
        .map(|f| Ok((*f, evaluate_level(model, cfg, test, f.level(k)?)?)))
        .collect()
}

fn evaluate_level(model: &SetrParams, cfg: &SetrConfig, test: &[&SampleRecord], spec: SegmentSpec) -> Result<Metrics> {
    let mut c = Confusion::default();
    for r in test {
        let x = split_prefix(r, spec)?.sampled_features(cfg.tokens);
        let out = infer(model, cfg, &x)?;
        c.record(r.label, predict(&out.logits));
    }
    Ok(Metrics::from_confusion(c))
}

/// Training regimes compared by the harness.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Arm {
    /// The full-sample model applied to every prefix.
    Plain,
    /// The progressive chain; the level-`j` model handles fraction `(j+1)/k`.
    Pkd,
    /// One-hop distillation from the full-sample model to each level.
    Direct,
}

impl Arm {
    pub fn name(&self) -> &'static str {
        match self {
            Arm::Plain => "plain",
            Arm::Pkd => "pkd",
            Arm::Direct => "direct",
        }
    }
}

impl FromStr for Arm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "plain" => Ok(Arm::Plain),
            "pkd" => Ok(Arm::Pkd),
            "direct" => Ok(Arm::Direct),
            other => Err(Error::InvalidConfig(format!("unknown mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ArmOutcome {
    pub arm: Arm,
    /// Stages that produced this arm's models, keyed by level.
    pub stages: BTreeMap<usize, StageResult>,
    pub metrics: Vec<(Fraction, Metrics)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FoldOutcome {
    pub fold: usize,
    pub seed: u64,
    pub train_ids: BTreeSet<String>,
    pub val_ids: BTreeSet<String>,
    pub test_ids: BTreeSet<String>,
    pub arms: Vec<ArmOutcome>,
}

/// Splits the training patients of a fold into training and validation
/// samples; `val_share` of the patients (rounded up, at least one when
/// positive) go to validation.
fn carve_validation(train: &[&SampleRecord], val_share: f64, seed: u64) -> StageData {
    let mut patients: Vec<&str> = train.iter().map(|r| r.patient_id.as_str()).collect();
    patients.sort_unstable();
    patients.dedup();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    patients.shuffle(&mut rng);
    let n_val = if val_share > 0.0 {
        (libm::ceil(val_share * patients.len() as f64) as usize).clamp(1, patients.len().saturating_sub(1))
    } else {
        0
    };
    let val: BTreeSet<&str> = patients[..n_val].iter().copied().collect();
    let mut data = StageData::default();
    for r in train {
        if val.contains(r.patient_id.as_str()) {
            data.val.push((*r).clone());
        } else {
            data.train.push((*r).clone());
        }
    }
    data
}

/// Trains and evaluates the requested arms on one fold. The full-sample
/// model is trained once and shared; all stages use [`stage_seed`] so
/// equal levels start from equal initializations in every arm.
#[allow(clippy::too_many_arguments)]
pub fn run_fold(
    dataset: &[SampleRecord],
    plan: &FoldPlan,
    fold: usize,
    arms: &[Arm],
    k: usize,
    fractions: &[Fraction],
    model: &SetrConfig,
    cfg: &DistillConfig,
    val_share: f64,
    seed: u64,
) -> Result<FoldOutcome> {
    if fold >= plan.folds {
        return Err(Error::InvalidConfig(format!("fold {fold} out of range for {} folds", plan.folds)));
    }
    let levels: Vec<SegmentSpec> = fractions.iter().map(|f| f.level(k)).collect::<Result<_>>()?;
    let (train, test) = plan.split(dataset, fold);
    if test.is_empty() {
        return Err(Error::InvalidInput(format!("fold {fold} has no test samples")));
    }
    let data = carve_validation(&train, val_share, stage_seed(seed, usize::MAX));
    let test_ids: BTreeSet<String> = test.iter().map(|r| r.sample_id.clone()).collect();

    let top = SegmentSpec::full(k)?;
    let teacher = train_stage(None, top, &data, model, cfg, stage_seed(seed, top.level))?;

    let mut pkd: BTreeMap<usize, StageResult> = BTreeMap::new();
    let needs_chain = arms.contains(&Arm::Pkd);
    if needs_chain {
        pkd.insert(top.level, teacher.clone());
        for level in (0..top.level).rev() {
            let spec = SegmentSpec::new(k, level)?;
            let t = &pkd[&(level + 1)].model;
            let stage = train_stage(Some(t), spec, &data, model, cfg, stage_seed(seed, level))?;
            pkd.insert(level, stage);
        }
    }

    let mut outcomes = Vec::with_capacity(arms.len());
    for &arm in arms {
        let mut stages: BTreeMap<usize, StageResult> = BTreeMap::new();
        stages.insert(top.level, teacher.clone());
        match arm {
            Arm::Plain => {}
            Arm::Pkd => stages = pkd.clone(),
            Arm::Direct => {
                for spec in &levels {
                    if spec.is_full() || stages.contains_key(&spec.level) {
                        continue;
                    }
                    // the hop to k−2 is the first progressive stage
                    let stage = match pkd.get(&spec.level) {
                        Some(s) if spec.level + 2 == k => s.clone(),
                        _ => train_stage(Some(&teacher.model), *spec, &data, model, cfg, stage_seed(seed, spec.level))?,
                    };
                    stages.insert(spec.level, stage);
                }
            }
        }
        for s in stages.values() {
            if let Some(id) = s.seen_ids.intersection(&test_ids).next() {
                return Err(Error::InvalidInput(format!(
                    "test sample {id} reached training of level {} in fold {fold}",
                    s.model.spec.level
                )));
            }
        }
        let mut metrics = Vec::with_capacity(fractions.len());
        for (f, spec) in fractions.iter().zip(&levels) {
            let params = match arm {
                Arm::Plain => &teacher.model.params,
                _ => &stages[&spec.level].model.params,
            };
            metrics.push((*f, evaluate_level(params, model, &test, *spec)?));
        }
        outcomes.push(ArmOutcome { arm, stages, metrics });
    }

    Ok(FoldOutcome {
        fold,
        seed,
        train_ids: data.train.iter().map(|r| r.sample_id.clone()).collect(),
        val_ids: data.val.iter().map(|r| r.sample_id.clone()).collect(),
        test_ids,
        arms: outcomes,
    })
}
