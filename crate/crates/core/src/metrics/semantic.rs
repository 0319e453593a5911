//! Per-pixel confusion matrix and the metrics derived from it.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::MetricsError;

/// Pixel tallies keyed by (ground truth, prediction). Rows are ground truth.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ConfusionMatrix {
    tally: BTreeMap<(u32, u32), u64>,
    pub ignored: u64,
}

impl ConfusionMatrix {
    /// Adds one image. Pixels whose ground truth equals `ignore_label` are
    /// counted in `ignored` only. `merge` relabels both maps before tallying.
    pub fn accumulate(
        &mut self,
        gt: &[u32],
        pred: &[u32],
        ignore_label: Option<u32>,
        merge: Option<&BTreeMap<u32, u32>>,
    ) -> Result<(), MetricsError> {
        if gt.len() != pred.len() {
            return Err(MetricsError::DimensionMismatch(format!(
                "ground truth has {} pixels, prediction {}",
                gt.len(),
                pred.len()
            )));
        }
        let remap = |l: u32| merge.and_then(|m| m.get(&l).copied()).unwrap_or(l);
        let mut local: BTreeMap<(u32, u32), u64> = BTreeMap::new();
        for (&g, &p) in gt.iter().zip(pred) {
            if Some(g) == ignore_label {
                self.ignored += 1;
                continue;
            }
            *local.entry((remap(g), remap(p))).or_default() += 1;
        }
        for (k, v) in local {
            *self.tally.entry(k).or_default() += v;
        }
        Ok(())
    }

    pub fn merge_from(&mut self, other: &ConfusionMatrix) {
        for (&k, &v) in &other.tally {
            *self.tally.entry(k).or_default() += v;
        }
        self.ignored += other.ignored;
    }

    pub fn count(&self, gt: u32, pred: u32) -> u64 {
        self.tally.get(&(gt, pred)).copied().unwrap_or(0)
    }

    /// Every label seen as ground truth or prediction, ascending.
    pub fn labels(&self) -> Vec<u32> {
        let set: BTreeSet<u32> = self.tally.keys().flat_map(|&(g, p)| [g, p]).collect();
        set.into_iter().collect()
    }

    /// Dense grid over `labels()`.
    pub fn grid(&self) -> (Vec<u32>, Vec<Vec<u64>>) {
        let labels = self.labels();
        let idx: BTreeMap<u32, usize> = labels.iter().enumerate().map(|(i, &l)| (l, i)).collect();
        let mut grid = vec![vec![0; labels.len()]; labels.len()];
        for (&(g, p), &v) in &self.tally {
            grid[idx[&g]][idx[&p]] += v;
        }
        (labels, grid)
    }

    /// Pixels counted in the matrix.
    pub fn total(&self) -> u64 {
        self.tally.values().sum()
    }

    pub fn is_empty(&self) -> bool {
        self.tally.is_empty()
    }
}

pub fn semantic_confusion(
    gt: &[u32],
    pred: &[u32],
    ignore_label: Option<u32>,
    merge: Option<&BTreeMap<u32, u32>>,
) -> Result<ConfusionMatrix, MetricsError> {
    let mut cm = ConfusionMatrix::default();
    cm.accumulate(gt, pred, ignore_label, merge)?;
    Ok(cm)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassSemantic {
    pub label: u32,
    pub iou: Option<f64>,
    pub acc: Option<f64>,
    pub gt_pixels: u64,
    pub pred_pixels: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SemanticMetrics {
    pub pacc: Option<f64>,
    /// Unweighted mean of per-class recall.
    pub macc: Option<f64>,
    /// Frequency-weighted mean of per-class recall.
    pub macc_weighted: Option<f64>,
    pub miou: Option<f64>,
    pub fwiou: Option<f64>,
    pub per_class: Vec<ClassSemantic>,
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

/// Classes are every label with ground-truth or predicted pixels, except
/// `ignore_label`. mIoU averages over those classes, mAcc over classes with
/// ground truth.
pub fn semantic_metrics(cm: &ConfusionMatrix, ignore_label: Option<u32>) -> SemanticMetrics {
    let mut rows: BTreeMap<u32, u64> = BTreeMap::new();
    let mut cols: BTreeMap<u32, u64> = BTreeMap::new();
    let mut diag: BTreeMap<u32, u64> = BTreeMap::new();
    for (&(g, p), &v) in &cm.tally {
        *rows.entry(g).or_default() += v;
        *cols.entry(p).or_default() += v;
        if g == p {
            *diag.entry(g).or_default() += v;
        }
    }
    let total = cm.total();
    let per_class: Vec<ClassSemantic> = cm
        .labels()
        .into_iter()
        .filter(|&l| Some(l) != ignore_label)
        .map(|label| {
            let tp = diag.get(&label).copied().unwrap_or(0);
            let gt_pixels = rows.get(&label).copied().unwrap_or(0);
            let pred_pixels = cols.get(&label).copied().unwrap_or(0);
            let union = gt_pixels + pred_pixels - tp;
            ClassSemantic {
                label,
                iou: (union > 0).then(|| tp as f64 / union as f64),
                acc: (gt_pixels > 0).then(|| tp as f64 / gt_pixels as f64),
                gt_pixels,
                pred_pixels,
            }
        })
        .collect();

    let trace: u64 = diag.values().sum();
    let freq = |c: &ClassSemantic| c.gt_pixels as f64 / total as f64;
    let has_total = total > 0;
    SemanticMetrics {
        pacc: has_total.then(|| trace as f64 / total as f64),
        macc: mean(per_class.iter().filter_map(|c| c.acc)),
        macc_weighted: has_total.then(|| {
            per_class
                .iter()
                .map(|c| freq(c) * c.acc.unwrap_or(0.0))
                .sum()
        }),
        miou: mean(per_class.iter().filter_map(|c| c.iou)),
        fwiou: has_total.then(|| {
            per_class
                .iter()
                .map(|c| freq(c) * c.iou.unwrap_or(0.0))
                .sum()
        }),
        per_class,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn direct_tally() {
        let cm = semantic_confusion(&[1, 1, 2, 2], &[1, 2, 2, 2], Some(0), None).unwrap();
        assert_eq!(cm.count(1, 1), 1);
        assert_eq!(cm.count(1, 2), 1);
        assert_eq!(cm.count(2, 2), 2);
        assert_eq!(cm.total(), 4);
        let m = semantic_metrics(&cm, Some(0));
        assert_eq!(m.per_class[0].iou, Some(0.5));
        assert!((m.per_class[1].iou.unwrap() - 2.0 / 3.0).abs() < 1e-12);
        assert!((m.miou.unwrap() - 7.0 / 12.0).abs() < 1e-12);
        assert_eq!(m.pacc, Some(0.75));
        assert_eq!(m.macc, Some(0.75));
    }

    #[test]
    fn perfect_prediction() {
        let gt = vec![1u32; 100];
        let cm = semantic_confusion(&gt, &gt, Some(0), None).unwrap();
        assert_eq!(cm.count(1, 1), 100);
        let m = semantic_metrics(&cm, Some(0));
        for v in [m.pacc, m.macc, m.miou, m.fwiou, m.macc_weighted] {
            assert_eq!(v, Some(1.0));
        }
    }

    #[test]
    fn all_ignored() {
        let cm = semantic_confusion(&[0; 5], &[1; 5], Some(0), None).unwrap();
        assert!(cm.is_empty());
        assert_eq!(cm.ignored, 5);
        let m = semantic_metrics(&cm, Some(0));
        assert_eq!(m.miou, None);
        assert_eq!(m.pacc, None);
    }

    #[test]
    fn predicted_only_class_enters_miou() {
        let cm = semantic_confusion(&[1, 1], &[1, 3], None, None).unwrap();
        let m = semantic_metrics(&cm, None);
        let c3 = m.per_class.iter().find(|c| c.label == 3).unwrap();
        assert_eq!(c3.iou, Some(0.0));
        assert_eq!(c3.acc, None);
        assert!((m.miou.unwrap() - 0.25).abs() < 1e-12);
    }

    #[test]
    fn merge_map_relabels() {
        let merge = BTreeMap::from([(4, 4), (5, 4), (6, 4)]);
        let cm = semantic_confusion(&[5, 6, 1], &[6, 4, 1], Some(0), Some(&merge)).unwrap();
        assert_eq!(cm.count(4, 4), 2);
        assert_eq!(cm.labels(), vec![1, 4]);
    }

    #[test]
    fn dimension_mismatch() {
        assert!(semantic_confusion(&[1], &[1, 2], None, None).is_err());
    }
}
