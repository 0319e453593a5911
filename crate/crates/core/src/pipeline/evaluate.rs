use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::PipelineError;
use crate::annotate::decode_panoptic_raster;
use crate::dataset::{
    read_json, read_png, read_split, set_folder, InstanceDocument, SplitDocuments,
};
use crate::geo::Role;
use crate::metrics::report::{DetectionSection, SemanticSection};
use crate::metrics::{
    coco_ap_suite, pq_match, pq_metrics, semantic_metrics, BitMask, ConfusionMatrix, Detection,
    GtObject, IouKind, MetricsReport, PanopticFrame, PanopticMatchSet, ReportCategory,
    ScoredDetection, Segmentation,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EvalTask {
    Semantic,
    Instance,
    Panoptic,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EvalOptions {
    pub task: EvalTask,
    pub set: Role,
    /// Semantic: directory of label PNGs named like the ground truth.
    /// Instance: detection results JSON (a list), or a COCO instance document.
    /// Panoptic: panoptic JSON whose PNGs sit in `pred_png_dir`.
    pub prediction: PathBuf,
    /// Panoptic PNG directory; defaults to the prediction JSON path without extension.
    pub pred_png_dir: Option<PathBuf>,
    /// Score all thing classes as one merged class (semantic only).
    pub merge_things: bool,
    /// Ground-truth label left out of semantic scoring; defaults to the void label.
    pub ignore_label: Option<u32>,
    /// Row label of the summary tables.
    pub name: String,
}

fn input(context: impl Into<String>, message: impl Into<String>) -> PipelineError {
    PipelineError::Input {
        context: context.into(),
        message: message.into(),
    }
}

/// Ground truth served as its own prediction, score 1.
pub fn instances_as_detections(doc: &InstanceDocument) -> Vec<Detection> {
    doc.annotations
        .iter()
        .map(|a| Detection {
            image_id: a.image_id,
            category_id: a.category_id,
            score: 1.0,
            bbox: a.bbox,
            segmentation: Some(Segmentation::Polygons(a.segmentation.clone())),
        })
        .collect()
}

fn one() -> f64 {
    1.0
}

#[derive(Deserialize)]
struct DocumentAnnotation {
    image_id: u32,
    category_id: u32,
    #[serde(default = "one")]
    score: f64,
    bbox: [f64; 4],
    #[serde(default)]
    segmentation: Option<Segmentation>,
}

/// Reads detections from a results list, or from a COCO instance document
/// (annotations without a score get 1).
pub fn load_detections(path: &Path) -> Result<Vec<Detection>, PipelineError> {
    let value: serde_json::Value = read_json(path)?;
    let ctx = path.display().to_string();
    let parse_err = |e: serde_json::Error| input(&ctx, e.to_string());
    match value {
        serde_json::Value::Array(_) => serde_json::from_value(value).map_err(parse_err),
        serde_json::Value::Object(mut map) => {
            let anns = map
                .remove("annotations")
                .ok_or_else(|| input(&ctx, "expected a list or an object with \"annotations\""))?;
            let anns: Vec<DocumentAnnotation> = serde_json::from_value(anns).map_err(parse_err)?;
            Ok(anns
                .into_iter()
                .map(|a| Detection {
                    image_id: a.image_id,
                    category_id: a.category_id,
                    score: a.score,
                    bbox: a.bbox,
                    segmentation: a.segmentation,
                })
                .collect())
        }
        _ => Err(input(ctx, "expected a JSON list or object")),
    }
}

fn report_categories(docs: &SplitDocuments) -> Vec<ReportCategory> {
    docs.panoptic
        .categories
        .iter()
        .map(|c| ReportCategory {
            id: c.id,
            name: c.name.clone(),
            isthing: c.isthing == 1,
        })
        .collect()
}

/// Scores predictions against one split of a written dataset.
pub fn evaluate(gt_root: &Path, opts: &EvalOptions) -> Result<MetricsReport, PipelineError> {
    let docs = read_split(gt_root, opts.set)?;
    let mut report = MetricsReport {
        name: opts.name.clone(),
        categories: report_categories(&docs),
        semantic: None,
        detection: None,
        panoptic: None,
    };
    match opts.task {
        EvalTask::Semantic => report.semantic = Some(eval_semantic(gt_root, &docs, opts)?),
        EvalTask::Instance => report.detection = Some(eval_instance(&docs, opts)?),
        EvalTask::Panoptic => {
            let matches = eval_panoptic(gt_root, &docs, opts)?;
            let cats: Vec<(u32, bool)> = report
                .categories
                .iter()
                .map(|c| (c.id, c.isthing))
                .collect();
            report.panoptic = Some(pq_metrics(&matches, &cats));
        }
    }
    Ok(report)
}

fn eval_semantic(
    gt_root: &Path,
    docs: &SplitDocuments,
    opts: &EvalOptions,
) -> Result<SemanticSection, PipelineError> {
    let index = &docs.semantic;
    let merged_label = index
        .categories
        .iter()
        .filter(|c| c.isthing == 0)
        .map(|c| c.id)
        .max()
        .map_or(1, |m| m + 1);
    let merge: Option<BTreeMap<u32, u32>> = opts.merge_things.then(|| {
        index
            .categories
            .iter()
            .filter(|c| c.isthing == 1)
            .map(|c| (c.id, merged_label))
            .collect()
    });
    let ignore = opts.ignore_label.or(Some(index.void_label));
    let gt_dir = gt_root.join(set_folder("semantic", opts.set));
    let partial: Vec<ConfusionMatrix> = index
        .annotations
        .par_iter()
        .map(|a| -> Result<_, PipelineError> {
            let gt = read_png(&gt_dir.join(&a.file_name))?;
            let pred = read_png(&opts.prediction.join(&a.file_name))?;
            let ctx = format!("image {} ({})", a.image_id, a.file_name);
            if (gt.width(), gt.height()) != (pred.width(), pred.height()) {
                return Err(input(
                    ctx,
                    format!(
                        "prediction is {}x{}, ground truth {}x{}",
                        pred.width(),
                        pred.height(),
                        gt.width(),
                        gt.height()
                    ),
                ));
            }
            let g = gt.labels().map_err(|e| PipelineError::geo(&ctx, e))?;
            let p = pred.labels().map_err(|e| PipelineError::geo(&ctx, e))?;
            let mut cm = ConfusionMatrix::default();
            cm.accumulate(&g, &p, ignore, merge.as_ref())
                .map_err(|e| PipelineError::metrics(&ctx, e))?;
            Ok(cm)
        })
        .collect::<Result<_, _>>()?;
    let mut cm = ConfusionMatrix::default();
    for p in &partial {
        cm.merge_from(p);
    }
    Ok(SemanticSection {
        metrics: semantic_metrics(&cm, ignore),
        merged_things_label: opts.merge_things.then_some(merged_label),
    })
}

fn eval_instance(
    docs: &SplitDocuments,
    opts: &EvalOptions,
) -> Result<DetectionSection, PipelineError> {
    let doc = &docs.instances;
    let images: BTreeMap<u32, (u32, u32)> = doc
        .images
        .iter()
        .map(|i| (i.id, (i.width, i.height)))
        .collect();
    let gts: Vec<GtObject> = doc
        .annotations
        .par_iter()
        .map(|a| {
            let (w, h) = images.get(&a.image_id).copied().unwrap_or((0, 0));
            GtObject {
                image_id: a.image_id,
                category_id: a.category_id,
                bbox: a.bbox,
                area: a.area as f64,
                mask: Some(BitMask::from_polygons(w, h, &a.segmentation)),
            }
        })
        .collect();
    let detections = load_detections(&opts.prediction)?;
    let with_masks = detections.iter().all(|d| d.segmentation.is_some());
    let dets: Vec<ScoredDetection> = detections
        .into_par_iter()
        .enumerate()
        .map(|(k, d)| -> Result<_, PipelineError> {
            let ctx = format!("{} detection {k}", opts.prediction.display());
            d.validate().map_err(|e| PipelineError::metrics(&ctx, e))?;
            let &(w, h) = images
                .get(&d.image_id)
                .ok_or_else(|| input(&ctx, format!("unknown image_id {}", d.image_id)))?;
            let mask = match (&d.segmentation, with_masks) {
                (Some(seg), true) => Some(
                    BitMask::from_segmentation(seg, w, h)
                        .map_err(|e| PipelineError::metrics(&ctx, e))?,
                ),
                _ => None,
            };
            Ok(ScoredDetection { detection: d, mask })
        })
        .collect::<Result<_, _>>()?;
    let categories: Vec<u32> = doc.categories.iter().map(|c| c.id).collect();
    let ctx = opts.prediction.display().to_string();
    let bbox = coco_ap_suite(&gts, &dets, &categories, IouKind::Box)
        .map_err(|e| PipelineError::metrics(&ctx, e))?;
    let mask = if with_masks {
        Some(
            coco_ap_suite(&gts, &dets, &categories, IouKind::Mask)
                .map_err(|e| PipelineError::metrics(&ctx, e))?,
        )
    } else {
        log::info!("detections without masks: box AP only");
        None
    };
    Ok(DetectionSection {
        bbox: Some(bbox),
        mask,
    })
}

#[derive(Deserialize)]
struct PredSegment {
    id: u32,
    category_id: u32,
}

#[derive(Deserialize)]
struct PredAnnotation {
    image_id: u32,
    file_name: String,
    segments_info: Vec<PredSegment>,
}

#[derive(Deserialize)]
struct PredDocument {
    annotations: Vec<PredAnnotation>,
}

fn load_frame(
    path: &Path,
    image_id: u32,
    categories: BTreeMap<u32, u32>,
) -> Result<PanopticFrame, PipelineError> {
    let r = read_png(path)?;
    let ids =
        decode_panoptic_raster(&r).map_err(|e| input(path.display().to_string(), e.to_string()))?;
    Ok(PanopticFrame {
        image_id,
        width: r.width(),
        height: r.height(),
        ids,
        categories,
    })
}

fn eval_panoptic(
    gt_root: &Path,
    docs: &SplitDocuments,
    opts: &EvalOptions,
) -> Result<PanopticMatchSet, PipelineError> {
    let pred_doc: PredDocument = read_json(&opts.prediction)?;
    let pred_dir = opts
        .pred_png_dir
        .clone()
        .unwrap_or_else(|| opts.prediction.with_extension(""));
    let known: std::collections::BTreeSet<u32> =
        docs.panoptic.categories.iter().map(|c| c.id).collect();
    let mut preds: BTreeMap<u32, &PredAnnotation> = BTreeMap::new();
    for a in &pred_doc.annotations {
        if preds.insert(a.image_id, a).is_some() {
            return Err(input(
                opts.prediction.display().to_string(),
                format!("image {} predicted twice", a.image_id),
            ));
        }
        if let Some(s) = a
            .segments_info
            .iter()
            .find(|s| !known.contains(&s.category_id))
        {
            return Err(input(
                format!("{} image {}", opts.prediction.display(), a.image_id),
                format!("segment {} has unknown category {}", s.id, s.category_id),
            ));
        }
    }
    let gt_dir = gt_root.join(set_folder("panoptic", opts.set));
    let sets: Vec<PanopticMatchSet> = docs
        .panoptic
        .annotations
        .par_iter()
        .map(|g| -> Result<_, PipelineError> {
            let ctx = format!("image {}", g.image_id);
            let p = preds
                .get(&g.image_id)
                .ok_or_else(|| input(&ctx, "no prediction for this image"))?;
            let gt_frame = load_frame(
                &gt_dir.join(&g.file_name),
                g.image_id,
                g.segments_info
                    .iter()
                    .map(|s| (s.id, s.category_id))
                    .collect(),
            )?;
            let pred_frame = load_frame(
                &pred_dir.join(&p.file_name),
                g.image_id,
                p.segments_info
                    .iter()
                    .map(|s| (s.id, s.category_id))
                    .collect(),
            )?;
            pq_match(&gt_frame, &pred_frame).map_err(|e| PipelineError::metrics(&ctx, e))
        })
        .collect::<Result<_, _>>()?;
    let mut all = PanopticMatchSet::default();
    for s in sets {
        all.merge_from(s);
    }
    Ok(all)
}
