//! Confusion counts, per-class precision/recall/F1 and their aggregation.
//!
//! Accuracy is intentionally absent: with a rare positive class it rewards
//! always predicting the majority class.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::folding::ClassLabel;

/// 2×2 counts indexed `[true class][predicted class]`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: [[u64; 2]; 2],
}

impl ConfusionMatrix {
    pub fn record(&mut self, truth: ClassLabel, predicted: ClassLabel) {
        self.counts[truth.index()][predicted.index()] += 1;
    }

    pub fn from_pairs(pairs: impl IntoIterator<Item = (ClassLabel, ClassLabel)>) -> Self {
        let mut cm = Self::default();
        for (t, p) in pairs {
            cm.record(t, p);
        }
        cm
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn true_positives(&self, class: ClassLabel) -> u64 {
        let c = class.index();
        self.counts[c][c]
    }

    /// Items predicted as `class` that belong to the other class.
    pub fn false_positives(&self, class: ClassLabel) -> u64 {
        let c = class.index();
        self.counts[1 - c][c]
    }

    /// Items of `class` predicted as the other class.
    pub fn false_negatives(&self, class: ClassLabel) -> u64 {
        let c = class.index();
        self.counts[c][1 - c]
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl ClassMetrics {
    /// Builds metrics from precision and recall; F1 is their harmonic mean,
    /// or 0 when both are 0.
    pub fn from_precision_recall(precision: f64, recall: f64) -> Self {
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        Self {
            precision,
            recall,
            f1,
        }
    }
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Per-class metrics, indexed by [`ClassLabel::index`]. Zero denominators
/// yield 0 rather than NaN.
pub fn class_metrics(cm: &ConfusionMatrix) -> [ClassMetrics; 2] {
    ClassLabel::ALL.map(|c| {
        let tp = cm.true_positives(c);
        ClassMetrics::from_precision_recall(
            ratio(tp, tp + cm.false_positives(c)),
            ratio(tp, tp + cm.false_negatives(c)),
        )
    })
}

/// Unweighted mean of each metric over the two classes. The macro F1 is the
/// mean of the per-class F1 values, not the F1 of the mean precision/recall.
pub fn macro_average(per_class: &[ClassMetrics; 2]) -> ClassMetrics {
    let [a, b] = per_class;
    ClassMetrics {
        precision: (a.precision + b.precision) / 2.0,
        recall: (a.recall + b.recall) / 2.0,
        f1: (a.f1 + b.f1) / 2.0,
    }
}

/// Tukey five-number summary.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FiveNumber {
    pub min: f64,
    pub lower_hinge: f64,
    pub median: f64,
    pub upper_hinge: f64,
    pub max: f64,
}

fn median_sorted(v: &[f64]) -> f64 {
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

/// Minimum, hinges, median and maximum. The hinges are the medians of the
/// lower and upper halves, each including the median for odd counts.
pub fn boxplot_stats(values: &[f64]) -> Result<FiveNumber> {
    if values.is_empty() {
        return Err(Error::Empty("boxplot of no values".into()));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("boxplot input".into()));
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    let half = n.div_ceil(2);
    Ok(FiveNumber {
        min: v[0],
        lower_hinge: median_sorted(&v[..half]),
        median: median_sorted(&v),
        upper_hinge: median_sorted(&v[n - half..]),
        max: v[n - 1],
    })
}
