use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::features::SampleRecord;

/// Patient-level fold assignment.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldPlan {
    pub folds: usize,
    pub stratified: bool,
    pub assignments: BTreeMap<String, usize>,
}

impl FoldPlan {
    pub fn fold_of(&self, patient: &str) -> Option<usize> {
        self.assignments.get(patient).copied()
    }

    /// Patients of one fold, sorted.
    pub fn patients_in(&self, fold: usize) -> Vec<&str> {
        self.assignments
            .iter()
            .filter(|(_, f)| **f == fold)
            .map(|(p, _)| p.as_str())
            .collect()
    }

    /// `(train, test)` for held-out fold `fold`.
    pub fn split<'a>(&self, dataset: &'a [SampleRecord], fold: usize) -> (Vec<&'a SampleRecord>, Vec<&'a SampleRecord>) {
        dataset
            .iter()
            .partition(|r| self.fold_of(&r.patient_id) != Some(fold))
    }
}

/// Deals patients round-robin into `folds` folds after a seeded shuffle.
/// With `stratified`, patients are grouped by the sorted labels of their
/// samples and each group is dealt in turn, continuing the rotation, so
/// every fold receives a near-equal share of each group.
pub fn kfold_split(dataset: &[SampleRecord], folds: usize, stratified: bool, seed: u64) -> Result<FoldPlan> {
    let mut labels: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for r in dataset {
        labels.entry(r.patient_id.as_str()).or_default().push(r.label);
    }
    if folds == 0 {
        return Err(Error::InvalidConfig("folds must be positive".into()));
    }
    if folds > labels.len() {
        return Err(Error::InvalidConfig(format!(
            "{folds} folds requested for {} patients",
            labels.len()
        )));
    }
    let mut groups: BTreeMap<Vec<usize>, Vec<&str>> = BTreeMap::new();
    for (patient, mut ls) in labels {
        ls.sort_unstable();
        let key = if stratified { ls } else { Vec::new() };
        groups.entry(key).or_default().push(patient);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut assignments = BTreeMap::new();
    let mut next = 0usize;
    for (_, mut patients) in groups {
        patients.shuffle(&mut rng);
        for p in patients {
            assignments.insert(String::from(p), next % folds);
            next += 1;
        }
    }
    Ok(FoldPlan {
        folds,
        stratified,
        assignments,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::FEATURE_DIM;
    use alloc::vec;
    use proptest::prelude::*;

    fn cohort(patients: usize, per_patient: usize, label_of: impl Fn(usize, usize) -> usize) -> Vec<SampleRecord> {
        let mut out = Vec::new();
        for p in 0..patients {
            for s in 0..per_patient {
                out.push(
                    SampleRecord::new(
                        format!("p{p}-s{s}"),
                        format!("p{p}"),
                        label_of(p, s),
                        1.0,
                        vec![0.0; FEATURE_DIM],
                    )
                    .unwrap(),
                );
            }
        }
        out
    }

    #[test]
    fn forty_patients_five_folds() {
        let data = cohort(40, 2, |_, s| s);
        let plan = kfold_split(&data, 5, true, 3).unwrap();
        for f in 0..5 {
            assert_eq!(plan.patients_in(f).len(), 8);
            let (train, test) = plan.split(&data, f);
            assert_eq!(test.len(), 16);
            assert_eq!(train.len(), 64);
        }
    }

    #[test]
    fn single_fold_and_too_many_folds() {
        let data = cohort(6, 1, |p, _| p % 2);
        let plan = kfold_split(&data, 1, false, 0).unwrap();
        assert!(plan.assignments.values().all(|f| *f == 0));
        assert!(kfold_split(&data, 7, false, 0).is_err());
        assert!(kfold_split(&data, 0, false, 0).is_err());
    }

    proptest! {
        #[test]
        fn partition_and_stratification(
            patients in 5usize..60,
            folds in 2usize..11,
            seed in any::<u64>(),
            stratified in any::<bool>(),
        ) {
            prop_assume!(folds <= patients);
            let data = cohort(patients, 1, |p, _| usize::from(p % 3 == 0));
            let plan = kfold_split(&data, folds, stratified, seed).unwrap();
            prop_assert_eq!(plan.assignments.len(), patients);
            let mut seen = 0;
            for f in 0..folds {
                let (train, test) = plan.split(&data, f);
                prop_assert!(test.iter().all(|t| train.iter().all(|r| r.patient_id != t.patient_id)));
                seen += test.len();
                let size = plan.patients_in(f).len();
                prop_assert!(size * folds + folds > patients && size * folds < patients + folds);
                if stratified {
                    let pos = test.iter().filter(|r| r.label == 1).count() as f64;
                    let global = data.iter().filter(|r| r.label == 1).count() as f64 / patients as f64;
                    prop_assert!((pos - global * test.len() as f64).abs() <= 1.0 + 1e-9);
                }
            }
            prop_assert_eq!(seen, data.len());
        }
    }
}
