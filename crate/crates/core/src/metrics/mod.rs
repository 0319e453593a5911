//! Semantic, detection and panoptic evaluation.

pub mod detection;
pub mod panoptic;
pub mod report;
pub mod semantic;

use thiserror::Error;

pub use detection::{
    average_precision, coco_ap_suite, greedy_match, iou_box, iou_mask, iou_thresholds,
    match_detections, AreaRange, BitMask, ClassAp, Detection, DetectionMetrics, GtObject, IouKind,
    MatchFlags, ScoredDetection, Segmentation, UncompressedRle,
};
pub use panoptic::{
    class_quality, pq_match, pq_metrics, CategoryMatches, ClassPq, GroupPq, PanopticFrame,
    PanopticMatchSet, PanopticMetrics, TpPair,
};
pub use report::{MetricsReport, ReportCategory};
pub use semantic::{
    semantic_confusion, semantic_metrics, ClassSemantic, ConfusionMatrix, SemanticMetrics,
};

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("union of both regions is empty")]
    EmptyUnion,
    #[error("invalid detection: {0}")]
    InvalidDetection(String),
    #[error("mask IoU needs masks on both sides ({0})")]
    MissingMask(String),
    #[error("malformed segments: {0}")]
    MalformedSegments(String),
}
