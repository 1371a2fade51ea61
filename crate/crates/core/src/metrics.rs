//! Confusion-matrix metrics and top-k accuracy.

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::heads::IGNORE_INDEX;

/// `counts[i * k + j]` is the number of samples of true class `i` predicted
/// as class `j`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub k: usize,
    pub counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn new(k: usize) -> Self {
        Self { k, counts: vec![0; k * k] }
    }

    pub fn get(&self, truth: usize, pred: usize) -> u64 {
        self.counts[truth * self.k + pred]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Adds `(pred, label)` pairs. Labels equal to 255 are skipped.
    pub fn accumulate(&mut self, preds: &[usize], labels: &[usize]) -> Result<()> {
        if preds.len() != labels.len() {
            return Err(CoreError::data(format!("{} predictions for {} labels", preds.len(), labels.len())));
        }
        for (&p, &y) in preds.iter().zip(labels) {
            if y == IGNORE_INDEX {
                continue;
            }
            if y >= self.k || p >= self.k {
                return Err(CoreError::data(format!(
                    "pair (pred {p}, label {y}) out of range for {} classes",
                    self.k
                )));
            }
            self.counts[y * self.k + p] += 1;
        }
        Ok(())
    }

    /// Sums another matrix of the same size into this one.
    pub fn merge(&mut self, other: &ConfusionMatrix) -> Result<()> {
        if other.k != self.k {
            return Err(CoreError::data(format!("cannot merge {}-class into {}-class matrix", other.k, self.k)));
        }
        self.counts.iter_mut().zip(&other.counts).for_each(|(a, b)| *a += b);
        Ok(())
    }

    fn row_sum(&self, i: usize) -> u64 {
        (0..self.k).map(|j| self.get(i, j)).sum()
    }

    fn col_sum(&self, j: usize) -> u64 {
        (0..self.k).map(|i| self.get(i, j)).sum()
    }
}

/// Per-class IoU and their mean. Classes that never occur in either the
/// labels or the predictions have no IoU and are left out of the mean.
pub fn miou(cm: &ConfusionMatrix) -> (Vec<Option<f64>>, f64) {
    let per_class: Vec<Option<f64>> = (0..cm.k)
        .map(|i| {
            let tp = cm.get(i, i);
            let union = cm.row_sum(i) + cm.col_sum(i) - tp;
            (union > 0).then(|| tp as f64 / union as f64)
        })
        .collect();
    (per_class.clone(), nan_mean(&per_class))
}

/// Mean per-class recall over classes present in the labels, and overall
/// accuracy.
pub fn macc_aacc(cm: &ConfusionMatrix) -> (f64, f64) {
    let recalls: Vec<Option<f64>> = (0..cm.k)
        .map(|i| {
            let n = cm.row_sum(i);
            (n > 0).then(|| cm.get(i, i) as f64 / n as f64)
        })
        .collect();
    let total = cm.total();
    let trace: u64 = (0..cm.k).map(|i| cm.get(i, i)).sum();
    let aacc = if total > 0 { trace as f64 / total as f64 } else { f64::NAN };
    (nan_mean(&recalls), aacc)
}

fn nan_mean(values: &[Option<f64>]) -> f64 {
    let present: Vec<f64> = values.iter().flatten().copied().collect();
    if present.is_empty() {
        f64::NAN
    } else {
        present.iter().sum::<f64>() / present.len() as f64
    }
}

/// Position of `label` when the classes of `row` are sorted by decreasing
/// score, ties going to the lower class index.
pub fn rank_of(row: &[f64], label: usize) -> usize {
    let target = row[label];
    row.iter()
        .enumerate()
        .filter(|&(c, &p)| p > target || (p == target && c < label))
        .count()
}

/// Fraction of rows of the row-major `[N, M]` score matrix whose label ranks
/// among the top `k`. `k` is clamped to `M`.
pub fn top_k_accuracy(scores: &[f64], num_classes: usize, labels: &[usize], k: usize) -> Result<f64> {
    if k == 0 || num_classes == 0 {
        return Err(CoreError::Usage("top-k needs k >= 1 and at least one class".into()));
    }
    if scores.len() != labels.len() * num_classes {
        return Err(CoreError::data(format!(
            "{} scores do not form {} rows of {num_classes}",
            scores.len(),
            labels.len()
        )));
    }
    if labels.is_empty() {
        return Err(CoreError::data("top-k accuracy of an empty set"));
    }
    let k = k.min(num_classes);
    let mut hits = 0usize;
    for (row, &y) in scores.chunks(num_classes).zip(labels) {
        if y >= num_classes {
            return Err(CoreError::data(format!("label {y} out of range for {num_classes} classes")));
        }
        if rank_of(row, y) < k {
            hits += 1;
        }
    }
    Ok(hits as f64 / labels.len() as f64)
}

/// Index of the highest score in each row, ties going to the lower index.
pub fn argmax_rows(scores: &[f64], num_classes: usize) -> Vec<usize> {
    scores
        .chunks(num_classes)
        .map(|row| {
            row.iter()
                .enumerate()
                .fold(0, |best, (c, &p)| if p > row[best] { c } else { best })
        })
        .collect()
}

/// Evaluation summary. Undefined values (such as accuracy of a task that has
/// no top-k) serialize as `null`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub top1: Option<f64>,
    pub top5: Option<f64>,
    pub per_class_iou: Vec<Option<f64>>,
    pub miou: Option<f64>,
    pub macc: Option<f64>,
    pub aacc: Option<f64>,
    pub params: u64,
    pub flops: u64,
}

impl MetricsReport {
    pub fn from_confusion(cm: &ConfusionMatrix, params: u64, flops: u64) -> Self {
        let (per_class_iou, m) = miou(cm);
        let (macc, aacc) = macc_aacc(cm);
        let finite = |v: f64| v.is_finite().then_some(v);
        Self {
            top1: None,
            top5: None,
            per_class_iou,
            miou: finite(m),
            macc: finite(macc),
            aacc: finite(aacc),
            params,
            flops,
        }
    }
}
