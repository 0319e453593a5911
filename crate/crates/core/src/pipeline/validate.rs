use std::path::Path;

use serde::{Deserialize, Serialize};

use super::PipelineError;
use crate::dataset::{
    read_manifest, read_png, read_split, set_folder, sha256_hex, validate_cross,
    validate_instances, validate_panoptic, DatasetError, Violation, ViolationKind,
};
use crate::geo::Role;
use crate::tiler::{audit_overlaps, OverlapPolicy, OverlapReport};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidateReport {
    pub violations: Vec<Violation>,
    pub overlap: OverlapReport,
}

impl ValidateReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for v in &self.violations {
            out.push_str(&v.to_string());
            out.push('\n');
        }
        out.push_str(&format!(
            "{} violation(s); {} overlapping tile pair(s)\n",
            self.violations.len(),
            self.overlap.pairs.len()
        ));
        out
    }
}

fn missing(context: String, e: DatasetError) -> Violation {
    Violation {
        kind: ViolationKind::MissingFile,
        context,
        message: e.to_string(),
    }
}

/// Re-checks a written dataset: file digests, document invariants, PNG
/// consistency, and the overlap audit over the stored tile windows.
pub fn validate(root: &Path, policy: OverlapPolicy) -> Result<ValidateReport, PipelineError> {
    let manifest = read_manifest(root)?;
    let mut violations = Vec::new();
    for f in &manifest.files {
        let path = root.join(&f.path);
        match std::fs::read(&path) {
            Ok(bytes) if sha256_hex(&bytes) != f.sha256 => violations.push(Violation {
                kind: ViolationKind::Digest,
                context: f.path.clone(),
                message: "content differs from manifest digest".into(),
            }),
            Ok(_) => {}
            Err(_) => violations.push(Violation {
                kind: ViolationKind::MissingFile,
                context: f.path.clone(),
                message: "listed in manifest but missing".into(),
            }),
        }
    }

    for role in Role::ALL {
        let ctx = role.as_str().to_string();
        let docs = match read_split(root, role) {
            Ok(d) => d,
            Err(e @ DatasetError::MissingFile(_)) => {
                violations.push(missing(ctx, e));
                continue;
            }
            Err(e) => return Err(e.into()),
        };
        violations.extend(validate_instances(&docs.instances, &ctx));
        violations.extend(validate_panoptic(
            &docs.panoptic,
            &root.join(set_folder("panoptic", role)),
            &ctx,
        ));
        violations.extend(validate_cross(&docs.instances, &docs.panoptic, &ctx));
        let images: std::collections::BTreeMap<u32, (u32, u32)> = docs
            .semantic
            .images
            .iter()
            .map(|i| (i.id, (i.width, i.height)))
            .collect();
        for ann in &docs.semantic.annotations {
            let path = root.join(set_folder("semantic", role)).join(&ann.file_name);
            let c = format!("{ctx} semantic image {}", ann.image_id);
            match read_png(&path) {
                Ok(r) => {
                    if images.get(&ann.image_id) != Some(&(r.width(), r.height()))
                        || r.channels() != 1
                    {
                        violations.push(Violation {
                            kind: ViolationKind::DanglingReference,
                            context: c,
                            message: "semantic PNG does not match its image entry".into(),
                        });
                    }
                }
                Err(e @ DatasetError::MissingFile(_)) => violations.push(missing(c, e)),
                Err(e) => violations.push(Violation {
                    kind: ViolationKind::MissingFile,
                    context: c,
                    message: e.to_string(),
                }),
            }
        }
    }

    let windows: Vec<_> = manifest.tiles.iter().map(|t| t.window).collect();
    let overlap = audit_overlaps(&windows, policy);
    for v in overlap.violations() {
        violations.push(Violation {
            kind: ViolationKind::Overlap,
            context: format!(
                "{} point {} / {} point {}",
                v.a.role, v.a.source_point_index, v.b.role, v.b.source_point_index
            ),
            message: format!("windows share {} px", v.intersection_area),
        });
    }
    Ok(ValidateReport {
        violations,
        overlap,
    })
}
