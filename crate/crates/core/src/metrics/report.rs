//! Evaluation report: a JSON document with values in [0, 1] and aligned text
//! tables with values x100 at three decimals. Undefined values print as `-`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::detection::DetectionMetrics;
use super::panoptic::{GroupPq, PanopticMetrics};
use super::semantic::SemanticMetrics;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReportCategory {
    pub id: u32,
    pub name: String,
    pub isthing: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SemanticSection {
    pub metrics: SemanticMetrics,
    /// Set when all thing classes were merged into this label before scoring.
    pub merged_things_label: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionSection {
    #[serde(rename = "box")]
    pub bbox: Option<DetectionMetrics>,
    pub mask: Option<DetectionMetrics>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    /// Row label of the summary tables, usually the model name.
    pub name: String,
    pub categories: Vec<ReportCategory>,
    pub semantic: Option<SemanticSection>,
    pub detection: Option<DetectionSection>,
    pub panoptic: Option<PanopticMetrics>,
}

pub fn pct(v: Option<f64>) -> String {
    // Adding +0.0 turns a negative zero into +0.0 so it never prints as "-0.000".
    v.map_or_else(|| "-".to_string(), |x| format!("{:.3}", x * 100.0 + 0.0))
}

/// First column left-aligned, the rest right-aligned, two spaces between.
pub fn render_table(header: &[&str], rows: &[Vec<String>]) -> String {
    let cols = header.len();
    let mut widths: Vec<usize> = header.iter().map(|h| h.chars().count()).collect();
    for r in rows {
        for (w, cell) in widths.iter_mut().zip(r) {
            *w = (*w).max(cell.chars().count());
        }
    }
    let line = |cells: &mut dyn Iterator<Item = &str>| {
        let parts: Vec<String> = cells
            .enumerate()
            .map(|(i, c)| {
                if i == 0 {
                    format!("{c:<w$}", w = widths[0])
                } else {
                    format!("{c:>w$}", w = widths[i])
                }
            })
            .collect();
        parts.join("  ").trim_end().to_string()
    };
    let mut out = line(&mut header.iter().copied());
    out.push('\n');
    let rule: usize = widths.iter().sum::<usize>() + 2 * (cols.saturating_sub(1));
    out.push_str(&"-".repeat(rule));
    out.push('\n');
    for r in rows {
        out.push_str(&line(&mut r.iter().map(String::as_str)));
        out.push('\n');
    }
    out
}

impl MetricsReport {
    pub fn to_json(&self) -> String {
        let v = serde_json::to_value(self).expect("report serializes");
        serde_json::to_string_pretty(&v).expect("report serializes")
    }

    fn names(&self) -> BTreeMap<u32, &str> {
        self.categories
            .iter()
            .map(|c| (c.id, c.name.as_str()))
            .collect()
    }

    fn name_of(&self, id: u32) -> String {
        self.names()
            .get(&id)
            .map_or_else(|| format!("class {id}"), |n| n.to_string())
    }

    /// Overall semantic scores: mIoU, fwIoU, mAcc, pAcc.
    pub fn semantic_summary_table(&self) -> Option<String> {
        let s = &self.semantic.as_ref()?.metrics;
        Some(render_table(
            &["Model", "mIoU", "fwIoU", "mAcc", "pAcc"],
            &[vec![
                self.name.clone(),
                pct(s.miou),
                pct(s.fwiou),
                pct(s.macc),
                pct(s.pacc),
            ]],
        ))
    }

    /// Per-class IoU and accuracy; the merged things class comes first as "All things".
    pub fn semantic_class_table(&self) -> Option<String> {
        let sec = self.semantic.as_ref()?;
        let mut classes: Vec<_> = sec.metrics.per_class.iter().collect();
        classes.sort_by_key(|c| (Some(c.label) != sec.merged_things_label, c.label));
        let rows: Vec<Vec<String>> = classes
            .iter()
            .map(|c| {
                let name = if Some(c.label) == sec.merged_things_label {
                    "All things".to_string()
                } else {
                    self.name_of(c.label)
                };
                vec![name, pct(c.iou), pct(c.acc)]
            })
            .collect();
        Some(render_table(&["Category", "IoU", "Acc"], &rows))
    }

    /// AP, AP50, AP75, APs, APm, APl for boxes and masks; the model name heads the block.
    pub fn detection_summary_table(&self) -> Option<String> {
        let d = self.detection.as_ref()?;
        let row = |kind: &str, m: &DetectionMetrics| {
            vec![
                String::new(),
                kind.to_string(),
                pct(m.ap),
                pct(m.ap50),
                pct(m.ap75),
                pct(m.aps),
                pct(m.apm),
                pct(m.apl),
            ]
        };
        let mut rows = Vec::new();
        if let Some(b) = &d.bbox {
            rows.push(row("Box", b));
        }
        if let Some(m) = &d.mask {
            rows.push(row("Mask", m));
        }
        if let Some(first) = rows.first_mut() {
            first[0] = self.name.clone();
        }
        Some(render_table(
            &["Model", "Type", "AP", "AP50", "AP75", "APs", "APm", "APl"],
            &rows,
        ))
    }

    /// Per-category box and mask AP.
    pub fn detection_class_table(&self) -> Option<String> {
        let d = self.detection.as_ref()?;
        let lookup = |m: &Option<DetectionMetrics>| -> BTreeMap<u32, Option<f64>> {
            m.iter()
                .flat_map(|m| m.per_class.iter().map(|c| (c.category_id, c.ap)))
                .collect()
        };
        let (b, m) = (lookup(&d.bbox), lookup(&d.mask));
        let ids: Vec<u32> = b
            .keys()
            .chain(m.keys())
            .copied()
            .collect::<std::collections::BTreeSet<_>>()
            .into_iter()
            .collect();
        let rows: Vec<Vec<String>> = ids
            .iter()
            .map(|&id| {
                vec![
                    self.name_of(id),
                    pct(b.get(&id).copied().flatten()),
                    pct(m.get(&id).copied().flatten()),
                ]
            })
            .collect();
        Some(render_table(&["Category", "Box AP", "Mask AP"], &rows))
    }

    /// PQ, SQ, RQ for all, thing and stuff classes; the model name heads the block.
    pub fn panoptic_summary_table(&self) -> Option<String> {
        let p = self.panoptic.as_ref()?;
        let row = |model: &str, kind: &str, g: &GroupPq| {
            vec![
                model.to_string(),
                kind.to_string(),
                pct(g.pq),
                pct(g.sq),
                pct(g.rq),
            ]
        };
        Some(render_table(
            &["Model", "Type", "PQ", "SQ", "RQ"],
            &[
                row(&self.name, "All", &p.all),
                row("", "Things", &p.things),
                row("", "Stuff", &p.stuff),
            ],
        ))
    }

    pub fn panoptic_class_table(&self) -> Option<String> {
        let p = self.panoptic.as_ref()?;
        let rows: Vec<Vec<String>> = p
            .per_class
            .iter()
            .map(|c| {
                vec![
                    self.name_of(c.category_id),
                    if c.isthing { "Thing" } else { "Stuff" }.to_string(),
                    pct(c.pq),
                    pct(c.sq),
                    pct(c.rq),
                ]
            })
            .collect();
        Some(render_table(&["Category", "Kind", "PQ", "SQ", "RQ"], &rows))
    }

    /// Every table that applies, separated by blank lines.
    pub fn to_text(&self) -> String {
        [
            self.semantic_summary_table(),
            self.semantic_class_table(),
            self.detection_summary_table(),
            self.detection_class_table(),
            self.panoptic_summary_table(),
            self.panoptic_class_table(),
        ]
        .into_iter()
        .flatten()
        .collect::<Vec<_>>()
        .join("\n")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_alignment() {
        let t = render_table(
            &["Type", "PQ"],
            &[
                vec!["All".into(), "100.000".into()],
                vec!["Things".into(), "5.000".into()],
            ],
        );
        assert_eq!(
            t,
            "Type         PQ\n---------------\nAll     100.000\nThings    5.000\n"
        );
    }

    #[test]
    fn percent_format() {
        assert_eq!(pct(Some(0.938651)), "93.865");
        assert_eq!(pct(None), "-");
        assert_eq!(pct(Some(1.0)), "100.000");
    }
}
