//! Box and mask average precision in the COCO style: greedy score-ordered
//! matching per image and category, 101-point max-interpolated AP, ten IoU
//! thresholds and three object-size ranges.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::MetricsError;
use crate::boundary::{rasterize_rings, unflatten};

/// Column-major run lengths, alternating background and foreground, starting
/// with background. `size` is `[height, width]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UncompressedRle {
    pub size: [u32; 2],
    pub counts: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Segmentation {
    Polygons(Vec<Vec<f64>>),
    Rle(UncompressedRle),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub image_id: u32,
    pub category_id: u32,
    pub score: f64,
    pub bbox: [f64; 4],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub segmentation: Option<Segmentation>,
}

impl Detection {
    pub fn validate(&self) -> Result<(), MetricsError> {
        if !self.score.is_finite() {
            return Err(MetricsError::InvalidDetection(format!(
                "image {} category {}: score {} is not finite",
                self.image_id, self.category_id, self.score
            )));
        }
        if !(self.bbox[2] > 0.0 && self.bbox[3] > 0.0) || self.bbox.iter().any(|v| !v.is_finite()) {
            return Err(MetricsError::InvalidDetection(format!(
                "image {} category {}: bbox {:?} needs positive finite size",
                self.image_id, self.category_id, self.bbox
            )));
        }
        Ok(())
    }
}

/// Binary mask over an image canvas, one bit per pixel, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BitMask {
    width: u32,
    height: u32,
    words: Vec<u64>,
}

impl BitMask {
    pub fn empty(width: u32, height: u32) -> Self {
        let n = width as usize * height as usize;
        Self {
            width,
            height,
            words: vec![0; n.div_ceil(64)],
        }
    }

    pub fn from_bools(width: u32, height: u32, bits: &[bool]) -> Self {
        let mut m = Self::empty(width, height);
        for (i, _) in bits.iter().enumerate().filter(|(_, &b)| b) {
            m.words[i / 64] |= 1 << (i % 64);
        }
        m
    }

    /// From row-major pixel indices.
    pub fn from_indices(width: u32, height: u32, indices: &[u32]) -> Self {
        let mut m = Self::empty(width, height);
        for &i in indices {
            let i = i as usize;
            m.words[i / 64] |= 1 << (i % 64);
        }
        m
    }

    /// Fills flattened polygon rings by pixel-centre sampling.
    pub fn from_polygons(width: u32, height: u32, rings: &[Vec<f64>]) -> Self {
        let rings: Vec<Vec<(f64, f64)>> = rings.iter().map(|r| unflatten(r)).collect();
        Self::from_bools(width, height, &rasterize_rings(&rings, width, height))
    }

    pub fn from_rle(rle: &UncompressedRle) -> Result<Self, MetricsError> {
        let [h, w] = rle.size;
        let n = w as u64 * h as u64;
        let total: u64 = rle.counts.iter().map(|&c| c as u64).sum();
        if total != n {
            return Err(MetricsError::InvalidDetection(format!(
                "run lengths sum to {total}, mask has {n} pixels"
            )));
        }
        let mut m = Self::empty(w, h);
        let mut pos = 0u64;
        for (k, &c) in rle.counts.iter().enumerate() {
            if k % 2 == 1 {
                for j in pos..pos + c as u64 {
                    // Column-major position to row-major index.
                    let (col, row) = (j / h as u64, j % h as u64);
                    let i = (row * w as u64 + col) as usize;
                    m.words[i / 64] |= 1 << (i % 64);
                }
            }
            pos += c as u64;
        }
        Ok(m)
    }

    pub fn from_segmentation(
        seg: &Segmentation,
        width: u32,
        height: u32,
    ) -> Result<Self, MetricsError> {
        match seg {
            Segmentation::Polygons(rings) => Ok(Self::from_polygons(width, height, rings)),
            Segmentation::Rle(rle) => {
                if rle.size != [height, width] {
                    return Err(MetricsError::DimensionMismatch(format!(
                        "mask size {:?}, image is {height}x{width}",
                        rle.size
                    )));
                }
                Self::from_rle(rle)
            }
        }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn get(&self, col: u32, row: u32) -> bool {
        let i = row as usize * self.width as usize + col as usize;
        self.words[i / 64] >> (i % 64) & 1 == 1
    }

    pub fn count(&self) -> u64 {
        self.words.iter().map(|w| w.count_ones() as u64).sum()
    }

    pub fn intersection(&self, other: &BitMask) -> u64 {
        self.words
            .iter()
            .zip(&other.words)
            .map(|(a, b)| (a & b).count_ones() as u64)
            .sum()
    }

    /// Tight `[x, y, w, h]` box, or `None` for an empty mask.
    pub fn bbox(&self) -> Option<[f64; 4]> {
        let (mut x0, mut y0, mut x1, mut y1) = (u32::MAX, u32::MAX, 0, 0);
        for row in 0..self.height {
            for col in 0..self.width {
                if self.get(col, row) {
                    x0 = x0.min(col);
                    y0 = y0.min(row);
                    x1 = x1.max(col);
                    y1 = y1.max(row);
                }
            }
        }
        (x0 != u32::MAX).then(|| {
            [
                x0 as f64,
                y0 as f64,
                (x1 - x0 + 1) as f64,
                (y1 - y0 + 1) as f64,
            ]
        })
    }
}

pub fn iou_box(a: [f64; 4], b: [f64; 4]) -> Result<f64, MetricsError> {
    let overlap =
        |a0: f64, al: f64, b0: f64, bl: f64| ((a0 + al).min(b0 + bl) - a0.max(b0)).max(0.0);
    let inter = overlap(a[0], a[2], b[0], b[2]) * overlap(a[1], a[3], b[1], b[3]);
    let union = a[2] * a[3] + b[2] * b[3] - inter;
    if union <= 0.0 {
        return Err(MetricsError::EmptyUnion);
    }
    Ok(inter / union)
}

pub fn iou_mask(a: &BitMask, b: &BitMask) -> Result<f64, MetricsError> {
    if (a.width, a.height) != (b.width, b.height) {
        return Err(MetricsError::DimensionMismatch(format!(
            "masks are {}x{} and {}x{}",
            a.width, a.height, b.width, b.height
        )));
    }
    let inter = a.intersection(b);
    let union = a.count() + b.count() - inter;
    if union == 0 {
        return Err(MetricsError::EmptyUnion);
    }
    Ok(inter as f64 / union as f64)
}

/// A ground-truth object for detection scoring.
#[derive(Debug, Clone)]
pub struct GtObject {
    pub image_id: u32,
    pub category_id: u32,
    pub bbox: [f64; 4],
    /// Pixel area; decides the size range.
    pub area: f64,
    pub mask: Option<BitMask>,
}

/// A detection prepared for scoring: mask rasterized on its image canvas.
#[derive(Debug, Clone)]
pub struct ScoredDetection {
    pub detection: Detection,
    pub mask: Option<BitMask>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IouKind {
    Box,
    Mask,
}

/// Object size ranges by pixel area: small below 32², large above 96².
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AreaRange {
    All,
    Small,
    Medium,
    Large,
}

impl AreaRange {
    pub const SMALL_MAX: f64 = 32.0 * 32.0;
    pub const LARGE_MIN: f64 = 96.0 * 96.0;

    pub fn contains(self, area: f64) -> bool {
        match self {
            AreaRange::All => true,
            AreaRange::Small => area < Self::SMALL_MAX,
            AreaRange::Medium => (Self::SMALL_MAX..=Self::LARGE_MIN).contains(&area),
            AreaRange::Large => area > Self::LARGE_MIN,
        }
    }
}

/// IoU thresholds 0.50, 0.55, ..., 0.95.
pub fn iou_thresholds() -> [f64; 10] {
    std::array::from_fn(|i| (50 + 5 * i) as f64 / 100.0)
}

fn pair_iou(g: &GtObject, d: &ScoredDetection, kind: IouKind) -> Result<f64, MetricsError> {
    match kind {
        IouKind::Box => Ok(iou_box(g.bbox, d.detection.bbox).unwrap_or(0.0)),
        IouKind::Mask => {
            let (Some(gm), Some(dm)) = (&g.mask, &d.mask) else {
                return Err(MetricsError::MissingMask(format!(
                    "image {} category {}",
                    g.image_id, g.category_id
                )));
            };
            match iou_mask(gm, dm) {
                Err(MetricsError::EmptyUnion) => Ok(0.0),
                other => other,
            }
        }
    }
}

/// Greedy matching of score-ordered detections against ground truth.
/// `ious[d][g]`; detections must already be in score order. Ground truth
/// flagged `ignore` is only used once no regular match is available.
/// Returns the matched ground-truth index per detection.
pub fn greedy_match(ious: &[Vec<f64>], gt_ignore: &[bool], threshold: f64) -> Vec<Option<usize>> {
    let mut order: Vec<usize> = (0..gt_ignore.len()).collect();
    order.sort_by_key(|&g| gt_ignore[g]);
    let mut taken = vec![false; gt_ignore.len()];
    ious.iter()
        .map(|row| {
            let mut best: Option<(usize, f64)> = None;
            for &g in &order {
                if taken[g] {
                    continue;
                }
                if let Some((b, _)) = best {
                    if !gt_ignore[b] && gt_ignore[g] {
                        break;
                    }
                }
                let iou = row[g];
                let better = match best {
                    None => iou >= threshold,
                    Some((_, bi)) => iou > bi,
                };
                if better {
                    best = Some((g, iou));
                }
            }
            best.map(|(g, _)| {
                taken[g] = true;
                g
            })
        })
        .collect()
}

/// Match flags for one IoU threshold, in input order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MatchFlags {
    pub detection_gt: Vec<Option<usize>>,
    pub gt_matched: Vec<bool>,
}

impl MatchFlags {
    pub fn true_positives(&self) -> usize {
        self.detection_gt.iter().flatten().count()
    }
}

fn score_order(dets: &[&Detection]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..dets.len()).collect();
    order.sort_by(|&a, &b| dets[b].score.total_cmp(&dets[a].score));
    order
}

/// Matches within each (image, category) at one threshold. Indices refer to
/// the input slices.
pub fn match_detections(
    gts: &[GtObject],
    dets: &[ScoredDetection],
    threshold: f64,
    kind: IouKind,
) -> Result<MatchFlags, MetricsError> {
    let mut flags = MatchFlags {
        detection_gt: vec![None; dets.len()],
        gt_matched: vec![false; gts.len()],
    };
    for (_, (g_idx, d_idx)) in group(gts, dets) {
        let d_refs: Vec<&Detection> = d_idx.iter().map(|&i| &dets[i].detection).collect();
        let order: Vec<usize> = score_order(&d_refs).into_iter().map(|k| d_idx[k]).collect();
        let ious = order
            .iter()
            .map(|&d| {
                g_idx
                    .iter()
                    .map(|&g| pair_iou(&gts[g], &dets[d], kind))
                    .collect()
            })
            .collect::<Result<Vec<Vec<f64>>, _>>()?;
        let m = greedy_match(&ious, &vec![false; g_idx.len()], threshold);
        for (k, g) in m.into_iter().enumerate() {
            if let Some(g) = g {
                flags.detection_gt[order[k]] = Some(g_idx[g]);
                flags.gt_matched[g_idx[g]] = true;
            }
        }
    }
    Ok(flags)
}

type GroupKey = (u32, u32);

fn group(
    gts: &[GtObject],
    dets: &[ScoredDetection],
) -> BTreeMap<GroupKey, (Vec<usize>, Vec<usize>)> {
    let mut groups: BTreeMap<GroupKey, (Vec<usize>, Vec<usize>)> = BTreeMap::new();
    for (i, g) in gts.iter().enumerate() {
        groups
            .entry((g.image_id, g.category_id))
            .or_default()
            .0
            .push(i);
    }
    for (i, d) in dets.iter().enumerate() {
        groups
            .entry((d.detection.image_id, d.detection.category_id))
            .or_default()
            .1
            .push(i);
    }
    groups
}

/// 101-point max-interpolated AP of a detection stream `(score, is_tp)`.
/// The stream is ordered by descending score; equal scores keep input order.
/// `None` when there is no ground truth.
pub fn average_precision(stream: &[(f64, bool)], n_gt: usize) -> Option<f64> {
    if n_gt == 0 {
        return None;
    }
    let mut order: Vec<usize> = (0..stream.len()).collect();
    order.sort_by(|&a, &b| stream[b].0.total_cmp(&stream[a].0));
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut recall = Vec::with_capacity(order.len());
    let mut precision = Vec::with_capacity(order.len());
    for &i in &order {
        if stream[i].1 {
            tp += 1;
        } else {
            fp += 1;
        }
        recall.push(tp as f64 / n_gt as f64);
        precision.push(tp as f64 / (tp + fp) as f64);
    }
    for i in (1..precision.len()).rev() {
        precision[i - 1] = precision[i - 1].max(precision[i]);
    }
    let sum: f64 = (0..=100)
        .map(|r| {
            let r = r as f64 / 100.0;
            let idx = recall.partition_point(|&rc| rc < r);
            precision.get(idx).copied().unwrap_or(0.0)
        })
        .sum();
    Some(sum / 101.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassAp {
    pub category_id: u32,
    pub ap: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionMetrics {
    pub ap: Option<f64>,
    pub ap50: Option<f64>,
    pub ap75: Option<f64>,
    pub aps: Option<f64>,
    pub apm: Option<f64>,
    pub apl: Option<f64>,
    pub per_class: Vec<ClassAp>,
}

struct PreparedGroup {
    gts: Vec<usize>,
    /// Detection indices in score order.
    dets: Vec<usize>,
    ious: Vec<Vec<f64>>,
}

/// Scores `dets` against `gts` and fills every AP variant. `categories` fixes
/// the per-class rows; classes without ground truth have `ap = None` and are
/// left out of the means.
pub fn coco_ap_suite(
    gts: &[GtObject],
    dets: &[ScoredDetection],
    categories: &[u32],
    kind: IouKind,
) -> Result<DetectionMetrics, MetricsError> {
    for d in dets {
        d.detection.validate()?;
    }
    let mut prepared: Vec<((u32, u32), PreparedGroup)> = Vec::new();
    for (key, (g_idx, d_idx)) in group(gts, dets) {
        let d_refs: Vec<&Detection> = d_idx.iter().map(|&i| &dets[i].detection).collect();
        let order: Vec<usize> = score_order(&d_refs).into_iter().map(|k| d_idx[k]).collect();
        let ious = order
            .iter()
            .map(|&d| {
                g_idx
                    .iter()
                    .map(|&g| pair_iou(&gts[g], &dets[d], kind))
                    .collect()
            })
            .collect::<Result<Vec<Vec<f64>>, _>>()?;
        prepared.push((
            key,
            PreparedGroup {
                gts: g_idx,
                dets: order,
                ious,
            },
        ));
    }

    let det_area = |d: &ScoredDetection| match (kind, &d.mask) {
        (IouKind::Mask, Some(m)) => m.count() as f64,
        _ => d.detection.bbox[2] * d.detection.bbox[3],
    };

    // AP per category at one threshold and range.
    let ap_at = |threshold: f64, range: AreaRange| -> BTreeMap<u32, Option<f64>> {
        let mut streams: BTreeMap<u32, (Vec<(f64, bool)>, usize)> = BTreeMap::new();
        for &((_, cat), ref g) in &prepared {
            let gt_ignore: Vec<bool> = g
                .gts
                .iter()
                .map(|&i| !range.contains(gts[i].area))
                .collect();
            let matches = greedy_match(&g.ious, &gt_ignore, threshold);
            let entry = streams.entry(cat).or_default();
            entry.1 += gt_ignore.iter().filter(|&&ig| !ig).count();
            for (k, m) in matches.into_iter().enumerate() {
                let d = &dets[g.dets[k]];
                let ignored = match m {
                    Some(gi) => gt_ignore[gi],
                    None => !range.contains(det_area(d)),
                };
                if !ignored {
                    entry.0.push((d.detection.score, m.is_some()));
                }
            }
        }
        categories
            .iter()
            .map(|&c| {
                let ap = streams.get(&c).and_then(|(s, n)| average_precision(s, *n));
                (c, ap)
            })
            .collect()
    };
    let mean = |v: &mut dyn Iterator<Item = f64>| {
        let (s, n) = v.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
        (n > 0).then(|| s / n as f64)
    };

    let thresholds = iou_thresholds();
    let per_threshold: Vec<BTreeMap<u32, Option<f64>>> = thresholds
        .iter()
        .map(|&t| ap_at(t, AreaRange::All))
        .collect();
    let per_class: Vec<ClassAp> = categories
        .iter()
        .map(|&c| ClassAp {
            category_id: c,
            ap: mean(&mut per_threshold.iter().filter_map(|m| m[&c])),
        })
        .collect();
    let ranged = |range: AreaRange| {
        let maps: Vec<_> = thresholds.iter().map(|&t| ap_at(t, range)).collect();
        mean(&mut maps.iter().flat_map(|m| m.values().flatten().copied()))
    };
    Ok(DetectionMetrics {
        ap: mean(&mut per_class.iter().filter_map(|c| c.ap)),
        ap50: mean(&mut per_threshold[0].values().flatten().copied()),
        ap75: mean(&mut per_threshold[5].values().flatten().copied()),
        aps: ranged(AreaRange::Small),
        apm: ranged(AreaRange::Medium),
        apl: ranged(AreaRange::Large),
        per_class,
    })
}
