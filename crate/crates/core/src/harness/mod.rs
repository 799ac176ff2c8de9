//! Evaluation harness: synthetic cohorts, patient-level folds, fraction
//! based evaluation and the per-fold experiment arms.

mod experiment;
mod folds;
mod metrics;
mod synthetic;

pub use experiment::{evaluate, run_fold, Arm, ArmOutcome, Fraction, FoldOutcome};
pub use folds::{kfold_split, FoldPlan};
pub use metrics::{Confusion, MeanStd, Metrics};
pub use synthetic::{
    generate_synthetic_dataset, synthetic_flow_sequence, MotionArchetype, Representation, SyntheticSpec,
};

#[cfg(test)]
mod tests;
