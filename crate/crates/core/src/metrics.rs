//! One-vs-rest confusion counts and macro-averaged precision, recall and
//! F-measure.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassCounts {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub tn: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub per_class: Vec<ClassCounts>,
    pub total: usize,
}

impl ConfusionCounts {
    pub fn correct(&self) -> usize {
        self.per_class.iter().map(|c| c.tp).sum()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f_measure: f64,
}

/// Labels are class indices in `0..n_classes`.
pub fn confusion(truth: &[usize], predicted: &[usize], n_classes: usize) -> Result<ConfusionCounts> {
    if truth.len() != predicted.len() {
        return Err(Error::LengthMismatch {
            expected: truth.len(),
            actual: predicted.len(),
        });
    }
    let mut per_class = vec![ClassCounts::default(); n_classes];
    for (&t, &p) in truth.iter().zip(predicted) {
        for l in [t, p] {
            if l >= n_classes {
                return Err(Error::UnknownLabel(l));
            }
        }
        if t == p {
            per_class[t].tp += 1;
        } else {
            per_class[p].fp += 1;
            per_class[t].fn_ += 1;
        }
    }
    let total = truth.len();
    for c in &mut per_class {
        c.tn = total - c.tp - c.fp - c.fn_;
    }
    Ok(ConfusionCounts { per_class, total })
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Per-class ratios averaged over classes; a zero denominator contributes 0.
pub fn precision_recall_f(counts: &ConfusionCounts) -> Prf {
    let n = counts.per_class.len().max(1) as f64;
    let precision = counts
        .per_class
        .iter()
        .map(|c| ratio(c.tp, c.tp + c.fp))
        .sum::<f64>()
        / n;
    let recall = counts
        .per_class
        .iter()
        .map(|c| ratio(c.tp, c.tp + c.fn_))
        .sum::<f64>()
        / n;
    let f_measure = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    Prf {
        precision,
        recall,
        f_measure,
    }
}

pub fn accuracy(truth: &[usize], predicted: &[usize]) -> Result<f64> {
    if truth.is_empty() {
        return Err(invalid("accuracy", "no predictions"));
    }
    if truth.len() != predicted.len() {
        return Err(Error::LengthMismatch {
            expected: truth.len(),
            actual: predicted.len(),
        });
    }
    let correct = truth.iter().zip(predicted).filter(|(t, p)| t == p).count();
    Ok(correct as f64 / truth.len() as f64)
}
