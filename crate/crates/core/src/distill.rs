//! Segment prefixes, the three-term distillation objective and the
//! progressive / direct distillation chains.
//!
//! A sample of `F` frames and duration `T` is cut into `k` segments; the
//! model at level `j` sees the first `(j+1)/k` of it. The full-sample
//! teacher sits at level `k−1`. Every student is trained on
//!
//! ```text
//! L_total = L_CE + α·L_KL + β·L_MSE
//! L_KL    = τ² Σ_j qᵀ_j log(qᵀ_j / qˢ_j),   q = softmax(z/τ)
//! L_MSE   = (1/N) Σ_i ‖pᵀ_i − pˢ_i‖²        over the N patch tokens
//! ```

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{adamw_step, softmax_with_temperature, AdamWConfig, OptState, Tape, Value};
use crate::error::{Error, Result};
use crate::features::SampleRecord;
use crate::model::{
    collect_grads, infer, params_to_tape, predict, setr_forward, ForwardVars, Mode, SetrConfig, SetrOutput,
    SetrParams,
};
use crate::tensor::Tensor;

/// Level `level` of a `k`-segment split; it covers the fraction `(level+1)/k`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SegmentSpec {
    pub k: usize,
    pub level: usize,
}

impl SegmentSpec {
    pub fn new(k: usize, level: usize) -> Result<Self> {
        if k == 0 || level >= k {
            return Err(Error::InvalidConfig(format!("segment level {level} is not in [0, {k})")));
        }
        Ok(SegmentSpec { k, level })
    }

    /// The full-sample level `k−1`.
    pub fn full(k: usize) -> Result<Self> {
        SegmentSpec::new(k, k.saturating_sub(1))
    }

    pub fn fraction(&self) -> f64 {
        (self.level + 1) as f64 / self.k as f64
    }

    pub fn is_full(&self) -> bool {
        self.level + 1 == self.k
    }

    /// Frames kept from a sample of `frames` frames: `round((j+1)/k · F)`,
    /// halves rounded up.
    pub fn prefix_frames(&self, frames: usize) -> usize {
        let num = (self.level + 1) * frames;
        (2 * num + self.k) / (2 * self.k)
    }

    /// Duration of the prefix: `(j+1) · T / k`.
    pub fn prefix_duration(&self, duration: f64) -> f64 {
        (self.level + 1) as f64 * duration / self.k as f64
    }
}

/// Truncates a sample to the prefix seen at `spec`'s level.
pub fn split_prefix(record: &SampleRecord, spec: SegmentSpec) -> Result<SampleRecord> {
    if record.frames() < spec.k {
        return Err(Error::InvalidInput(format!(
            "sample {} has {} frames, fewer than k = {}",
            record.sample_id,
            record.frames(),
            spec.k
        )));
    }
    if spec.is_full() {
        return Ok(record.clone());
    }
    Ok(record.truncated(spec.prefix_frames(record.frames()), spec.prefix_duration(record.duration)))
}

#[derive(Debug, Clone, PartialEq)]
pub struct DistillConfig {
    pub tau: f64,
    pub alpha: f64,
    pub beta: f64,
    /// Epochs per stage.
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub weight_decay: f64,
    /// Start each student from its teacher's weights instead of a fresh
    /// initialization.
    pub warm_start: bool,
}

impl Default for DistillConfig {
    fn default() -> Self {
        DistillConfig {
            tau: 10.0,
            alpha: 0.2,
            beta: 0.5,
            epochs: 50,
            batch_size: 16,
            lr: 1e-3,
            weight_decay: 1e-4,
            warm_start: false,
        }
    }
}

impl DistillConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(Error::InvalidConfig("tau must be positive".into()));
        }
        if !(self.alpha >= 0.0 && self.beta >= 0.0) {
            return Err(Error::InvalidConfig("alpha and beta must be non-negative".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidConfig("batch-size must be positive".into()));
        }
        if !(self.lr >= 0.0 && self.weight_decay >= 0.0) {
            return Err(Error::InvalidConfig("lr and weight-decay must be non-negative".into()));
        }
        Ok(())
    }

    fn adamw(&self) -> AdamWConfig {
        AdamWConfig {
            lr: self.lr,
            weight_decay: self.weight_decay,
            ..AdamWConfig::default()
        }
    }
}

/// The three loss terms and their weighted sum.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossBreakdown {
    pub ce: f64,
    pub kl: f64,
    pub mse: f64,
    pub total: f64,
}

impl LossBreakdown {
    fn accumulate(&mut self, other: &LossBreakdown) {
        self.ce += other.ce;
        self.kl += other.kl;
        self.mse += other.mse;
        self.total += other.total;
    }

    fn scaled(&self, s: f64) -> LossBreakdown {
        LossBreakdown {
            ce: self.ce * s,
            kl: self.kl * s,
            mse: self.mse * s,
            total: self.total * s,
        }
    }
}

/// Detached teacher signal for one sample.
#[derive(Debug, Clone, PartialEq)]
pub struct TeacherTarget {
    /// `softmax(zᵀ/τ)`.
    pub probs: Vec<f64>,
    /// Teacher patch tokens, `N×D`.
    pub patch_tokens: Tensor,
}

impl TeacherTarget {
    pub fn from_output(out: &SetrOutput, tau: f64) -> Self {
        TeacherTarget {
            probs: softmax_with_temperature(&out.logits, tau),
            patch_tokens: out.patch_tokens.clone(),
        }
    }
}

/// Records the objective for one sample on the tape and returns the
/// total-loss node with its value breakdown.
pub fn kd_loss_on_tape(
    tape: &mut Tape,
    student: &ForwardVars,
    teacher: Option<&TeacherTarget>,
    label: usize,
    cfg: &DistillConfig,
) -> Result<(Value, LossBreakdown)> {
    let ce = tape.cross_entropy(student.logits, label, 1.0)?;
    let Some(t) = teacher else {
        let v = tape.scalar_value(ce);
        return Ok((
            ce,
            LossBreakdown {
                ce: v,
                kl: 0.0,
                mse: 0.0,
                total: v,
            },
        ));
    };
    let kl = tape.kl_to_target(student.logits, &t.probs, cfg.tau)?;
    let mse = tape.mse_to_target(student.patch_tokens, &t.patch_tokens)?;
    let akl = tape.scale(kl, cfg.alpha);
    let partial = tape.add(ce, akl)?;
    let bmse = tape.scale(mse, cfg.beta);
    let total = tape.add(partial, bmse)?;
    let parts = LossBreakdown {
        ce: tape.scalar_value(ce),
        kl: tape.scalar_value(kl),
        mse: tape.scalar_value(mse),
        total: tape.scalar_value(total),
    };
    if parts.kl < -1e-12 {
        return Err(Error::InvalidInput(format!("negative KL {}", parts.kl)));
    }
    Ok((total, parts))
}

/// Objective between detached outputs.
pub fn kd_losses(teacher: &SetrOutput, student: &SetrOutput, label: usize, cfg: &DistillConfig) -> Result<LossBreakdown> {
    if teacher.logits.len() != student.logits.len() {
        return Err(Error::ShapeMismatch {
            op: "kd_losses",
            left: alloc::vec![teacher.logits.len()],
            right: alloc::vec![student.logits.len()],
        });
    }
    if teacher.patch_tokens.shape() != student.patch_tokens.shape() {
        return Err(Error::ShapeMismatch {
            op: "kd_losses",
            left: teacher.patch_tokens.shape().to_vec(),
            right: student.patch_tokens.shape().to_vec(),
        });
    }
    let mut tape = Tape::new();
    let vars = ForwardVars {
        logits: tape.leaf(Tensor::vector(student.logits.clone())),
        class_token: tape.leaf(Tensor::vector(student.class_token.clone())),
        patch_tokens: tape.leaf(student.patch_tokens.clone()),
        attention: Vec::new(),
    };
    let target = TeacherTarget::from_output(teacher, cfg.tau);
    Ok(kd_loss_on_tape(&mut tape, &vars, Some(&target), label, cfg)?.1)
}

/// Training and validation samples of one fold.
#[derive(Debug, Clone, Default)]
pub struct StageData {
    pub train: Vec<SampleRecord>,
    pub val: Vec<SampleRecord>,
}

/// A trained model and the level it was trained for.
#[derive(Debug, Clone, PartialEq)]
pub struct StageModel {
    pub spec: SegmentSpec,
    pub params: SetrParams,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochLog {
    pub level: usize,
    pub epoch: usize,
    /// Mean training losses over the epoch's samples.
    pub train: LossBreakdown,
    pub val: LossBreakdown,
    pub val_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StageResult {
    /// Parameters of the epoch with the lowest validation total loss.
    pub model: StageModel,
    pub best_epoch: usize,
    /// Validation losses of the freshly initialized student.
    pub initial_val: LossBreakdown,
    pub log: Vec<EpochLog>,
    /// Per batch `(ce, kl, mse, total)` as computed during training.
    pub batch_losses: Vec<LossBreakdown>,
    /// Ids of every sample that contributed to this stage, including the
    /// teacher's inputs.
    pub seen_ids: BTreeSet<String>,
}

struct Prepared {
    inputs: Vec<Tensor>,
    labels: Vec<usize>,
    targets: Vec<Option<TeacherTarget>>,
}

fn prepare(
    records: &[SampleRecord],
    spec: SegmentSpec,
    teacher: Option<&StageModel>,
    model: &SetrConfig,
    cfg: &DistillConfig,
    seen: &mut BTreeSet<String>,
) -> Result<Prepared> {
    let mut out = Prepared {
        inputs: Vec::with_capacity(records.len()),
        labels: Vec::with_capacity(records.len()),
        targets: Vec::with_capacity(records.len()),
    };
    for r in records {
        if r.label >= model.classes {
            return Err(Error::LabelOutOfRange {
                label: r.label,
                classes: model.classes,
            });
        }
        seen.insert(r.sample_id.clone());
        out.inputs.push(split_prefix(r, spec)?.sampled_features(model.tokens));
        out.labels.push(r.label);
        out.targets.push(match teacher {
            Some(t) => {
                let x = split_prefix(r, t.spec)?.sampled_features(model.tokens);
                Some(TeacherTarget::from_output(&infer(&t.params, model, &x)?, cfg.tau))
            }
            None => None,
        });
    }
    Ok(out)
}

fn sample_loss(
    params: &SetrParams,
    model: &SetrConfig,
    cfg: &DistillConfig,
    input: &Tensor,
    label: usize,
    target: Option<&TeacherTarget>,
    mode: Mode,
) -> Result<(Tape, crate::model::SetrWeights<Value>, Value, LossBreakdown, usize)> {
    let mut tape = Tape::new();
    let vars = params_to_tape(&mut tape, params);
    let x = tape.leaf(input.clone());
    let out = setr_forward(&mut tape, &vars, x, model, mode)?;
    let (root, parts) = kd_loss_on_tape(&mut tape, &out, target, label, cfg)?;
    let pred = predict(tape.value(out.logits).data());
    Ok((tape, vars, root, parts, pred))
}

fn validate_losses(
    params: &SetrParams,
    model: &SetrConfig,
    cfg: &DistillConfig,
    data: &Prepared,
) -> Result<(LossBreakdown, f64)> {
    let mut sum = LossBreakdown::default();
    let mut correct = 0usize;
    for i in 0..data.inputs.len() {
        let (_, _, _, parts, pred) =
            sample_loss(params, model, cfg, &data.inputs[i], data.labels[i], data.targets[i].as_ref(), Mode::Eval)?;
        sum.accumulate(&parts);
        correct += usize::from(pred == data.labels[i]);
    }
    let n = data.inputs.len().max(1) as f64;
    Ok((sum.scaled(1.0 / n), correct as f64 / n))
}

/// Trains the model for `spec`'s level, distilling from `teacher` when
/// given and using cross-entropy alone otherwise.
pub fn train_stage(
    teacher: Option<&StageModel>,
    spec: SegmentSpec,
    data: &StageData,
    model: &SetrConfig,
    cfg: &DistillConfig,
    seed: u64,
) -> Result<StageResult> {
    model.validate()?;
    cfg.validate()?;
    if let Some(t) = teacher {
        if t.spec.k != spec.k || t.spec.level <= spec.level {
            return Err(Error::InvalidConfig(format!(
                "teacher level {}/{} must be above student level {}/{}",
                t.spec.level, t.spec.k, spec.level, spec.k
            )));
        }
    }
    if data.train.is_empty() {
        return Err(Error::InvalidInput("no training samples".into()));
    }

    let mut seen = BTreeSet::new();
    let train = prepare(&data.train, spec, teacher, model, cfg, &mut seen)?;
    let val = prepare(&data.val, spec, teacher, model, cfg, &mut seen)?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = match teacher {
        Some(t) if cfg.warm_start => t.params.clone(),
        _ => SetrParams::init(model, &mut rng),
    };
    let mut opt = OptState::new(cfg.adamw(), &params.iter().collect::<Vec<_>>());

    let (initial_val, _) = validate_losses(&params, model, cfg, &val)?;
    let mut best = (f64::INFINITY, 0usize, params.clone());
    let mut log = Vec::with_capacity(cfg.epochs);
    let mut batch_losses = Vec::new();
    let mut order: Vec<usize> = (0..train.inputs.len()).collect();

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut batches: Vec<Vec<usize>> = order.chunks(cfg.batch_size).map(|c| c.to_vec()).collect();
        if order.len() < cfg.batch_size {
            batches[0] = (0..cfg.batch_size).map(|i| order[i % order.len()]).collect();
        }
        let mut epoch_sum = LossBreakdown::default();
        let mut epoch_count = 0usize;
        for batch in &batches {
            let mut grad_sum = params.zeros_like();
            let mut batch_sum = LossBreakdown::default();
            for &i in batch {
                let mode = Mode::Train { seed: rng.next_u64() };
                let (mut tape, vars, root, parts, _) =
                    sample_loss(&params, model, cfg, &train.inputs[i], train.labels[i], train.targets[i].as_ref(), mode)?;
                if !parts.total.is_finite() {
                    return Err(Error::Diverged {
                        level: spec.level,
                        epoch,
                        detail: format!(
                            "sample {}: ce {} kl {} mse {} total {}",
                            data.train[i].sample_id, parts.ce, parts.kl, parts.mse, parts.total
                        ),
                    });
                }
                tape.backward(root)?;
                let g = collect_grads(&tape, &vars);
                for (acc, gi) in grad_sum.iter_mut().zip(g.iter()) {
                    for (a, b) in acc.data_mut().iter_mut().zip(gi.data()) {
                        *a += b;
                    }
                }
                batch_sum.accumulate(&parts);
            }
            let inv = 1.0 / batch.len() as f64;
            for t in grad_sum.iter_mut() {
                for v in t.data_mut() {
                    *v *= inv;
                }
            }
            batch_losses.push(batch_sum.scaled(inv));
            epoch_sum.accumulate(&batch_sum);
            epoch_count += batch.len();

            let grads: Vec<&[f64]> = grad_sum.iter().map(|t| t.data()).collect();
            let mut refs: Vec<&mut Tensor> = params.iter_mut().collect();
            adamw_step(&mut refs, &grads, &mut opt).map_err(|e| Error::Diverged {
                level: spec.level,
                epoch,
                detail: format!("{e}"),
            })?;
        }

        let (val_loss, val_accuracy) = validate_losses(&params, model, cfg, &val)?;
        let score = if val.inputs.is_empty() {
            epoch_sum.total / epoch_count as f64
        } else {
            val_loss.total
        };
        if !score.is_finite() {
            return Err(Error::Diverged {
                level: spec.level,
                epoch,
                detail: format!("selection loss {score}"),
            });
        }
        if score < best.0 {
            best = (score, epoch, params.clone());
        }
        log.push(EpochLog {
            level: spec.level,
            epoch,
            train: epoch_sum.scaled(1.0 / epoch_count as f64),
            val: val_loss,
            val_accuracy,
        });
    }

    Ok(StageResult {
        model: StageModel {
            spec,
            params: best.2,
        },
        best_epoch: best.1,
        initial_val,
        log,
        batch_losses,
        seen_ids: seen,
    })
}

/// Seed for the stage at `level`, shared by all arms so that equal levels
/// start from equal initializations.
pub fn stage_seed(seed: u64, level: usize) -> u64 {
    let mut z = seed ^ (level as u64).wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Progressive chain: level `k−1` on labels alone, then each level `j`
/// distilled from level `j+1`. Results are ordered from `k−1` down to 0.
pub fn run_pkd_chain(
    data: &StageData,
    k: usize,
    model: &SetrConfig,
    cfg: &DistillConfig,
    seed: u64,
) -> Result<Vec<StageResult>> {
    let top = SegmentSpec::full(k)?;
    let mut out: Vec<StageResult> = Vec::with_capacity(k);
    out.push(train_stage(None, top, data, model, cfg, stage_seed(seed, top.level))?);
    for level in (0..k - 1).rev() {
        let spec = SegmentSpec::new(k, level)?;
        let teacher = &out.last().expect("previous stage").model;
        let stage = train_stage(Some(teacher), spec, data, model, cfg, stage_seed(seed, level))?;
        out.push(stage);
    }
    Ok(out)
}

/// One-hop distillation from the full-sample teacher to `target`.
/// Returns `(teacher, student)`.
pub fn run_direct_kd(
    data: &StageData,
    k: usize,
    target: usize,
    model: &SetrConfig,
    cfg: &DistillConfig,
    seed: u64,
) -> Result<(StageResult, StageResult)> {
    if target + 1 >= k {
        return Err(Error::InvalidConfig(format!("direct target level {target} must be below {}", k - 1)));
    }
    let top = SegmentSpec::full(k)?;
    let teacher = train_stage(None, top, data, model, cfg, stage_seed(seed, top.level))?;
    let spec = SegmentSpec::new(k, target)?;
    let student = train_stage(Some(&teacher.model), spec, data, model, cfg, stage_seed(seed, target))?;
    Ok((teacher, student))
}
