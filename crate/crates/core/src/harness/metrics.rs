use alloc::vec::Vec;

/// Binary confusion counts with class 1 as the positive class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub tn: usize,
}

impl Confusion {
    pub fn from_pairs(pairs: impl IntoIterator<Item = (usize, usize)>) -> Self {
        let mut c = Confusion::default();
        for (truth, pred) in pairs {
            c.record(truth, pred);
        }
        c
    }

    pub fn record(&mut self, truth: usize, pred: usize) {
        match (truth == 1, pred == 1) {
            (true, true) => self.tp += 1,
            (false, true) => self.fp += 1,
            (true, false) => self.fn_ += 1,
            (false, false) => self.tn += 1,
        }
    }

    pub fn total(&self) -> usize {
        self.tp + self.fp + self.fn_ + self.tn
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Metrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub accuracy: f64,
    pub confusion: Confusion,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

impl Metrics {
    pub fn from_confusion(c: Confusion) -> Self {
        let precision = ratio(c.tp, c.tp + c.fp);
        let recall = ratio(c.tp, c.tp + c.fn_);
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        Metrics {
            precision,
            recall,
            f1,
            accuracy: ratio(c.tp + c.tn, c.total()),
            confusion: c,
        }
    }
}

/// Arithmetic mean and population standard deviation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

impl MeanStd {
    pub fn of(values: &[f64]) -> Self {
        if values.is_empty() {
            return MeanStd { mean: 0.0, std: 0.0 };
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        MeanStd {
            mean,
            std: libm::sqrt(var),
        }
    }

    /// Mean and spread of each metric across folds, as
    /// `[precision, recall, f1, accuracy]`.
    pub fn across(metrics: &[Metrics]) -> [MeanStd; 4] {
        let pick = |f: fn(&Metrics) -> f64| MeanStd::of(&metrics.iter().map(f).collect::<Vec<_>>());
        [
            pick(|m| m.precision),
            pick(|m| m.recall),
            pick(|m| m.f1),
            pick(|m| m.accuracy),
        ]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn worked_example() {
        let c = Confusion {
            tp: 3,
            fp: 1,
            fn_: 1,
            tn: 3,
        };
        let m = Metrics::from_confusion(c);
        assert_eq!((m.precision, m.recall, m.f1, m.accuracy), (0.75, 0.75, 0.75, 0.75));
    }

    #[test]
    fn perfect_and_majority_predictors() {
        let truth = [0, 1, 0, 1, 1, 0];
        let m = Metrics::from_confusion(Confusion::from_pairs(truth.iter().map(|&t| (t, t))));
        assert_eq!((m.precision, m.recall, m.f1, m.accuracy), (1.0, 1.0, 1.0, 1.0));

        let all_neg = Metrics::from_confusion(Confusion::from_pairs(truth.iter().map(|&t| (t, 0))));
        assert_eq!(all_neg.accuracy, 0.5);
        assert_eq!(all_neg.recall, 0.0);
        assert_eq!(all_neg.f1, 0.0);
        let all_pos = Metrics::from_confusion(Confusion::from_pairs(truth.iter().map(|&t| (t, 1))));
        assert_eq!(all_pos.accuracy, 0.5);
        assert_eq!(all_pos.recall, 1.0);
    }

    #[test]
    fn mean_std() {
        let s = MeanStd::of(&[1.0, 3.0]);
        assert_eq!((s.mean, s.std), (2.0, 1.0));
        assert_eq!(MeanStd::of(&[]).mean, 0.0);
    }

    proptest! {
        #[test]
        fn definitions_hold(pairs in prop::collection::vec((0usize..2, 0usize..2), 0..60)) {
            let c = Confusion::from_pairs(pairs.iter().copied());
            prop_assert_eq!(c.total(), pairs.len());
            let m = Metrics::from_confusion(c);
            if m.precision + m.recall > 0.0 {
                prop_assert_eq!(m.f1, 2.0 * m.precision * m.recall / (m.precision + m.recall));
            } else {
                prop_assert_eq!(m.f1, 0.0);
            }
            for v in [m.precision, m.recall, m.f1, m.accuracy] {
                prop_assert!((0.0..=1.0).contains(&v));
            }
        }
    }
}
