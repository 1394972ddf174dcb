//! Confusion-matrix accumulation and the two F1 scores the harness reports.
//!
//! Per-class precision and recall use the 0/0 -> 0 convention. The standard
//! scores are bounded by 1; `F1Variant::Literal` doubles them (the naive
//! reading of a leading factor of 2 applied on top of per-class f1) and is
//! exposed for comparison only.

use serde::{Deserialize, Serialize};

use crate::error::{HarError, Result};

/// Which reading of the score formulas to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum F1Variant {
    /// Class-mean (or class-weighted) of f1_c = 2pr/(p+r); bounded by 1.
    #[default]
    Standard,
    /// An extra leading factor of 2 on top of per-class f1.
    Literal,
}

/// Square confusion matrix; rows are true classes, columns predictions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    n_classes: usize,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn new(n_classes: usize) -> Self {
        assert!(n_classes > 0, "need at least one class");
        ConfusionMatrix {
            n_classes,
            counts: vec![0; n_classes * n_classes],
        }
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn accumulate(&mut self, true_label: usize, predicted: usize) -> Result<()> {
        if true_label >= self.n_classes || predicted >= self.n_classes {
            return Err(HarError::RejectedInput(format!(
                "labels ({true_label}, {predicted}) out of range for {} classes",
                self.n_classes
            )));
        }
        self.counts[true_label * self.n_classes + predicted] += 1;
        Ok(())
    }

    pub fn count(&self, true_label: usize, predicted: usize) -> u64 {
        self.counts[true_label * self.n_classes + predicted]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Element-wise sum, for merging matrices scored in parallel.
    pub fn merge(&mut self, other: &ConfusionMatrix) {
        assert_eq!(self.n_classes, other.n_classes);
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
    }

    /// Number of items whose true class is `c`.
    pub fn support(&self, c: usize) -> u64 {
        (0..self.n_classes).map(|j| self.count(c, j)).sum()
    }

    pub fn precision(&self, c: usize) -> f64 {
        let tp = self.count(c, c) as f64;
        let pred: u64 = (0..self.n_classes).map(|i| self.count(i, c)).sum();
        if pred == 0 {
            0.0
        } else {
            tp / pred as f64
        }
    }

    pub fn recall(&self, c: usize) -> f64 {
        let tp = self.count(c, c) as f64;
        let sup = self.support(c);
        if sup == 0 {
            0.0
        } else {
            tp / sup as f64
        }
    }

    pub fn f1(&self, c: usize) -> f64 {
        let p = self.precision(c);
        let r = self.recall(c);
        if p + r == 0.0 {
            0.0
        } else {
            2.0 * p * r / (p + r)
        }
    }

    fn check_scored(&self) -> Result<()> {
        if self.total() == 0 {
            return Err(HarError::UndefinedMetric(
                "confusion matrix holds no scored items".into(),
            ));
        }
        Ok(())
    }
}

/// Mean (macro) F1 over all classes.
pub fn mean_f1(cm: &ConfusionMatrix) -> Result<f64> {
    mean_f1_with(cm, F1Variant::Standard, None)
}

/// Class-size-weighted F1 over all classes.
pub fn weighted_f1(cm: &ConfusionMatrix) -> Result<f64> {
    weighted_f1_with(cm, F1Variant::Standard, None)
}

/// Mean F1 with an optional class to exclude from the average (the
/// background class on datasets that have one).
pub fn mean_f1_with(
    cm: &ConfusionMatrix,
    variant: F1Variant,
    exclude_class: Option<usize>,
) -> Result<f64> {
    cm.check_scored()?;
    let classes: Vec<usize> = (0..cm.n_classes())
        .filter(|&c| Some(c) != exclude_class)
        .collect();
    if classes.is_empty() {
        return Err(HarError::UndefinedMetric("no classes left to score".into()));
    }
    let sum: f64 = classes.iter().map(|&c| cm.f1(c)).sum();
    let base = sum / classes.len() as f64;
    Ok(match variant {
        F1Variant::Standard => base,
        F1Variant::Literal => 2.0 * base,
    })
}

pub fn weighted_f1_with(
    cm: &ConfusionMatrix,
    variant: F1Variant,
    exclude_class: Option<usize>,
) -> Result<f64> {
    cm.check_scored()?;
    let classes: Vec<usize> = (0..cm.n_classes())
        .filter(|&c| Some(c) != exclude_class)
        .collect();
    let total: u64 = classes.iter().map(|&c| cm.support(c)).sum();
    if total == 0 {
        return Err(HarError::UndefinedMetric(
            "no scored items in the included classes".into(),
        ));
    }
    let sum: f64 = classes
        .iter()
        .map(|&c| cm.support(c) as f64 / total as f64 * cm.f1(c))
        .sum();
    Ok(match variant {
        F1Variant::Standard => sum,
        F1Variant::Literal => 2.0 * sum,
    })
}

/// Score a stream of (true, predicted) pairs.
pub fn confusion_from_pairs(
    n_classes: usize,
    pairs: impl IntoIterator<Item = (usize, usize)>,
) -> Result<ConfusionMatrix> {
    let mut cm = ConfusionMatrix::new(n_classes);
    for (t, p) in pairs {
        cm.accumulate(t, p)?;
    }
    Ok(cm)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn empty_matrix_totals_zero_and_rejects_scoring() {
        let cm = ConfusionMatrix::new(3);
        assert_eq!(cm.total(), 0);
        assert!(mean_f1(&cm).is_err());
        assert!(weighted_f1(&cm).is_err());
    }

    #[test]
    fn accumulation_counts_and_rejects_out_of_range() {
        let mut cm = ConfusionMatrix::new(2);
        for _ in 0..5 {
            cm.accumulate(0, 1).unwrap();
        }
        assert_eq!(cm.total(), 5);
        assert!(cm.accumulate(2, 0).is_err());
    }

    #[test]
    fn perfect_predictions_score_one() {
        for classes in [2usize, 5, 9] {
            let mut cm = ConfusionMatrix::new(classes);
            for c in 0..classes {
                for _ in 0..(c + 1) {
                    cm.accumulate(c, c).unwrap();
                }
            }
            assert_abs_diff_eq!(mean_f1(&cm).unwrap(), 1.0, epsilon = 1e-12);
            assert_abs_diff_eq!(weighted_f1(&cm).unwrap(), 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn worked_example() {
        // labels [0,0,1,1], preds [0,1,1,1] -> f1_0 = 2/3, f1_1 = 0.8
        let cm = confusion_from_pairs(2, [(0, 0), (0, 1), (1, 1), (1, 1)]).unwrap();
        assert_abs_diff_eq!(cm.f1(0), 2.0 / 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(cm.f1(1), 0.8, epsilon = 1e-12);
        assert_abs_diff_eq!(mean_f1(&cm).unwrap(), 0.7333, epsilon = 1e-4);
        // equal class sizes: weighted == mean
        assert_abs_diff_eq!(
            weighted_f1(&cm).unwrap(),
            mean_f1(&cm).unwrap(),
            epsilon = 1e-12
        );
    }

    #[test]
    fn all_one_class_predictions_on_balanced_truth() {
        // predictions all class 1, balanced 2-class truth -> F_m = 1/3
        let cm = confusion_from_pairs(2, [(0, 1), (0, 1), (1, 1), (1, 1)]).unwrap();
        assert_abs_diff_eq!(mean_f1(&cm).unwrap(), 1.0 / 3.0, epsilon = 1e-12);
    }

    #[test]
    fn weighted_hand_example() {
        // class sizes (3,1) with f1 = (1, 0) -> F_w = 3/4. Class 1 is sent
        // entirely to class 2 so class 0 stays clean.
        let cm = confusion_from_pairs(3, [(0, 0), (0, 0), (0, 0), (1, 2)]).unwrap();
        assert_abs_diff_eq!(cm.f1(0), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(cm.f1(1), 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(weighted_f1(&cm).unwrap(), 0.75, epsilon = 1e-12);
    }

    #[test]
    fn literal_variant_doubles() {
        let cm = confusion_from_pairs(2, [(0, 0), (1, 1)]).unwrap();
        assert_abs_diff_eq!(
            mean_f1_with(&cm, F1Variant::Literal, None).unwrap(),
            2.0,
            epsilon = 1e-12
        );
    }

    #[test]
    fn excluding_a_class_changes_the_average() {
        let cm = confusion_from_pairs(3, [(0, 1), (0, 1), (1, 1), (2, 2)]).unwrap();
        let with_null = mean_f1(&cm).unwrap();
        let without = mean_f1_with(&cm, F1Variant::Standard, Some(0)).unwrap();
        assert!(without > with_null);
    }

    #[test]
    fn merge_is_elementwise_sum() {
        let a = confusion_from_pairs(2, [(0, 0), (1, 0)]).unwrap();
        let b = confusion_from_pairs(2, [(1, 1), (0, 1)]).unwrap();
        let mut merged = a.clone();
        merged.merge(&b);
        assert_eq!(merged.total(), 4);
        assert_eq!(merged.count(1, 0), 1);
        assert_eq!(merged.count(0, 1), 1);
    }

    proptest! {
        #[test]
        fn scores_are_bounded_and_permutation_invariant(
            pairs in proptest::collection::vec((0usize..4, 0usize..4), 1..200),
            perm_seed in 0u64..1000,
        ) {
            let cm = confusion_from_pairs(4, pairs.iter().cloned()).unwrap();
            let fm = mean_f1(&cm).unwrap();
            let fw = weighted_f1(&cm).unwrap();
            prop_assert!((0.0..=1.0).contains(&fm));
            prop_assert!((0.0..=1.0).contains(&fw));

            // permute class indices: mean F1 is unchanged
            let mut perm: Vec<usize> = (0..4).collect();
            let mut s = perm_seed;
            for i in (1..4).rev() {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                let j = (s >> 33) as usize % (i + 1);
                perm.swap(i, j);
            }
            let permuted = confusion_from_pairs(
                4,
                pairs.iter().map(|&(t, p)| (perm[t], perm[p])),
            ).unwrap();
            let fm_p = mean_f1(&permuted).unwrap();
            prop_assert!((fm - fm_p).abs() < 1e-12);
        }

        #[test]
        fn diagonal_iff_perfect(pairs in proptest::collection::vec((0usize..3, 0usize..3), 1..100)) {
            let cm = confusion_from_pairs(3, pairs.iter().cloned()).unwrap();
            let diagonal = pairs.iter().all(|&(t, p)| t == p);
            let seen: std::collections::HashSet<usize> = pairs.iter().map(|&(t, _)| t).collect();
            let fm = mean_f1(&cm).unwrap();
            if diagonal && seen.len() == 3 {
                prop_assert!((fm - 1.0).abs() < 1e-12);
            }
            if (fm - 1.0).abs() < 1e-12 {
                prop_assert!(diagonal);
            }
        }
    }
}
