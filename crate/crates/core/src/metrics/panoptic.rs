//! Panoptic quality: segment matching at IoU > 0.5 and PQ = SQ * RQ.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::MetricsError;

/// Segment-id map of one image plus the category of every segment id. Id 0 is void.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PanopticFrame {
    pub image_id: u32,
    pub width: u32,
    pub height: u32,
    pub ids: Vec<u32>,
    pub categories: BTreeMap<u32, u32>,
}

impl PanopticFrame {
    /// Pixel count per segment id, checking that map and segment list agree.
    fn areas(&self, which: &str) -> Result<BTreeMap<u32, u64>, MetricsError> {
        if self.ids.len() != self.width as usize * self.height as usize {
            return Err(MetricsError::DimensionMismatch(format!(
                "{which} image {}: {} ids for {}x{}",
                self.image_id,
                self.ids.len(),
                self.width,
                self.height
            )));
        }
        let mut areas: BTreeMap<u32, u64> = BTreeMap::new();
        for &id in &self.ids {
            if id != 0 {
                *areas.entry(id).or_default() += 1;
            }
        }
        let listed: BTreeSet<u32> = self.categories.keys().copied().collect();
        let present: BTreeSet<u32> = areas.keys().copied().collect();
        if listed.contains(&0) || listed != present {
            let extra: Vec<_> = present.difference(&listed).collect();
            let missing: Vec<_> = listed.difference(&present).collect();
            return Err(MetricsError::MalformedSegments(format!(
                "{which} image {}: ids only in PNG {extra:?}, only in segment list {missing:?}",
                self.image_id
            )));
        }
        Ok(areas)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TpPair {
    pub image_id: u32,
    pub gt_id: u32,
    pub pred_id: u32,
    pub iou: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CategoryMatches {
    pub tp: Vec<TpPair>,
    /// `(image_id, pred_id)`.
    pub fp: Vec<(u32, u32)>,
    /// `(image_id, gt_id)`.
    pub fn_: Vec<(u32, u32)>,
}

impl CategoryMatches {
    pub fn iou_sum(&self) -> f64 {
        self.tp.iter().fold(0.0, |s, t| s + t.iou)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PanopticMatchSet {
    pub per_category: BTreeMap<u32, CategoryMatches>,
}

impl PanopticMatchSet {
    pub fn merge_from(&mut self, other: PanopticMatchSet) {
        for (cat, m) in other.per_category {
            let e = self.per_category.entry(cat).or_default();
            e.tp.extend(m.tp);
            e.fp.extend(m.fp);
            e.fn_.extend(m.fn_);
        }
    }
}

/// IoU of a ground-truth and a predicted segment leaves out predicted pixels
/// that fall on ground-truth void. Same-category pairs above 0.5 are true
/// positives. Unmatched predictions lying more than half on void are dropped.
pub fn pq_match(
    gt: &PanopticFrame,
    pred: &PanopticFrame,
) -> Result<PanopticMatchSet, MetricsError> {
    if (gt.width, gt.height) != (pred.width, pred.height) {
        return Err(MetricsError::DimensionMismatch(format!(
            "image {}: ground truth {}x{}, prediction {}x{}",
            gt.image_id, gt.width, gt.height, pred.width, pred.height
        )));
    }
    let gt_area = gt.areas("ground truth")?;
    let pred_area = pred.areas("prediction")?;
    let mut inter: BTreeMap<(u32, u32), u64> = BTreeMap::new();
    for (&g, &p) in gt.ids.iter().zip(&pred.ids) {
        if p != 0 {
            *inter.entry((g, p)).or_default() += 1;
        }
    }
    let void_of = |p: u32| inter.get(&(0, p)).copied().unwrap_or(0);

    let mut set = PanopticMatchSet::default();
    let mut gt_done = BTreeSet::new();
    let mut pred_done = BTreeSet::new();
    for (&(g, p), &i) in &inter {
        if g == 0 || gt.categories[&g] != pred.categories[&p] {
            continue;
        }
        let union = gt_area[&g] + pred_area[&p] - i - void_of(p);
        let iou = i as f64 / union as f64;
        if iou > 0.5 {
            gt_done.insert(g);
            pred_done.insert(p);
            set.per_category
                .entry(gt.categories[&g])
                .or_default()
                .tp
                .push(TpPair {
                    image_id: gt.image_id,
                    gt_id: g,
                    pred_id: p,
                    iou,
                });
        }
    }
    for (&g, &cat) in &gt.categories {
        if !gt_done.contains(&g) {
            set.per_category
                .entry(cat)
                .or_default()
                .fn_
                .push((gt.image_id, g));
        }
    }
    for (&p, &cat) in &pred.categories {
        if pred_done.contains(&p) || 2 * void_of(p) > pred_area[&p] {
            continue;
        }
        set.per_category
            .entry(cat)
            .or_default()
            .fp
            .push((pred.image_id, p));
    }
    Ok(set)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassPq {
    pub category_id: u32,
    pub isthing: bool,
    pub pq: Option<f64>,
    pub sq: Option<f64>,
    pub rq: Option<f64>,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupPq {
    pub pq: Option<f64>,
    pub sq: Option<f64>,
    pub rq: Option<f64>,
    /// Classes averaged.
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PanopticMetrics {
    pub all: GroupPq,
    pub things: GroupPq,
    pub stuff: GroupPq,
    pub per_class: Vec<ClassPq>,
}

/// Per-class quality for `(tp, fp, fn, Σ IoU)`; `None` when all counts are zero.
pub fn class_quality(tp: usize, fp: usize, fn_: usize, iou_sum: f64) -> Option<(f64, f64, f64)> {
    if tp + fp + fn_ == 0 {
        return None;
    }
    let denom = tp as f64 + 0.5 * fp as f64 + 0.5 * fn_ as f64;
    let sq = if tp > 0 { iou_sum / tp as f64 } else { 0.0 };
    Some((iou_sum / denom, sq, tp as f64 / denom))
}

/// Aggregates are unweighted means over classes with ground truth.
pub fn pq_metrics(matches: &PanopticMatchSet, categories: &[(u32, bool)]) -> PanopticMetrics {
    let empty = CategoryMatches::default();
    let per_class: Vec<ClassPq> = categories
        .iter()
        .map(|&(id, isthing)| {
            let m = matches.per_category.get(&id).unwrap_or(&empty);
            let q = class_quality(m.tp.len(), m.fp.len(), m.fn_.len(), m.iou_sum());
            ClassPq {
                category_id: id,
                isthing,
                pq: q.map(|q| q.0),
                sq: q.map(|q| q.1),
                rq: q.map(|q| q.2),
                tp: m.tp.len(),
                fp: m.fp.len(),
                fn_: m.fn_.len(),
            }
        })
        .collect();
    let group = |keep: &dyn Fn(&ClassPq) -> bool| {
        let rows: Vec<&ClassPq> = per_class
            .iter()
            .filter(|c| c.tp + c.fn_ > 0 && keep(c))
            .collect();
        let n = rows.len();
        let avg = |f: fn(&ClassPq) -> Option<f64>| {
            (n > 0).then(|| rows.iter().map(|c| f(c).unwrap_or(0.0)).sum::<f64>() / n as f64)
        };
        GroupPq {
            pq: avg(|c| c.pq),
            sq: avg(|c| c.sq),
            rq: avg(|c| c.rq),
            n,
        }
    };
    PanopticMetrics {
        all: group(&|_| true),
        things: group(&|c| c.isthing),
        stuff: group(&|c| !c.isthing),
        per_class,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn frame(w: u32, h: u32, ids: Vec<u32>, cats: &[(u32, u32)]) -> PanopticFrame {
        PanopticFrame {
            image_id: 1,
            width: w,
            height: h,
            ids,
            categories: cats.iter().copied().collect(),
        }
    }

    #[test]
    fn identical_frames_match_fully() {
        let f = frame(3, 1, vec![1, 2, 2], &[(1, 1), (2, 6)]);
        let m = pq_match(&f, &f).unwrap();
        assert_eq!(m.per_category[&1].tp[0].iou, 1.0);
        assert_eq!(m.per_category[&6].tp[0].iou, 1.0);
        let pq = pq_metrics(&m, &[(1, false), (6, true)]);
        for g in [&pq.all, &pq.things, &pq.stuff] {
            assert_eq!((g.pq, g.sq, g.rq), (Some(1.0), Some(1.0), Some(1.0)));
        }
    }

    #[test]
    fn partial_overlap_is_six_tenths() {
        // GT segment: 8 px in cells 0..8; prediction covers 6 of them plus 2 outside.
        let mut gt_ids = vec![0u32; 12];
        gt_ids[..8].fill(1);
        let mut pred_ids = vec![0u32; 12];
        pred_ids[2..10].fill(1);
        let gt = frame(12, 1, gt_ids, &[(1, 6)]);
        let pred = frame(12, 1, pred_ids, &[(1, 6)]);
        // Treat the 2 outside pixels as labelled background so they are not void.
        let mut gt2 = gt.clone();
        gt2.ids[8..].fill(2);
        gt2.categories.insert(2, 1);
        let m = pq_match(&gt2, &pred).unwrap();
        assert!((m.per_category[&6].tp[0].iou - 0.6).abs() < 1e-15);

        // Over void, the 2 outside pixels do not count in the union.
        let m = pq_match(&gt, &pred).unwrap();
        assert!((m.per_category[&6].tp[0].iou - 0.75).abs() < 1e-15);

        let other = frame(12, 1, pred.ids.clone(), &[(1, 7)]);
        let m = pq_match(&gt2, &other).unwrap();
        assert_eq!(m.per_category[&6].fn_.len(), 1);
        assert_eq!(m.per_category[&7].fp.len(), 1);
    }

    #[test]
    fn mostly_void_prediction_discarded() {
        let gt = frame(4, 1, vec![1, 0, 0, 0], &[(1, 6)]);
        let pred = frame(4, 1, vec![0, 5, 5, 5], &[(5, 6)]);
        let m = pq_match(&gt, &pred).unwrap();
        assert!(m.per_category[&6].fp.is_empty());
        assert_eq!(m.per_category[&6].fn_.len(), 1);
    }

    #[test]
    fn hand_fixture_point_four() {
        let q = class_quality(1, 1, 0, 0.6).unwrap();
        assert!((q.0 - 0.4).abs() < 1e-12);
        assert!((q.1 - 0.6).abs() < 1e-12);
        assert!((q.2 - 1.0 / 1.5).abs() < 1e-12);
    }

    #[test]
    fn absent_class_excluded() {
        let f = frame(2, 1, vec![1, 1], &[(1, 6)]);
        let m = pq_match(&f, &f).unwrap();
        let pq = pq_metrics(&m, &[(1, false), (6, true)]);
        assert_eq!(pq.per_class[0].pq, None);
        assert_eq!(pq.all.n, 1);
        assert_eq!(pq.stuff.pq, None);
    }

    #[test]
    fn malformed_segments() {
        let gt = frame(2, 1, vec![1, 3], &[(1, 6)]);
        assert!(matches!(
            pq_match(&gt, &gt),
            Err(MetricsError::MalformedSegments(_))
        ));
    }
}
