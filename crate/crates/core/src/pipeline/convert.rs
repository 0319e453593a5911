use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{with_workers, JobConfig, PipelineError};
use crate::annotate::{build_segments, AnnotateOptions};
use crate::dataset::{write_dataset, SplitTiles, TileOutput, WriteOptions};
use crate::geo::{read_point_shapefile, read_raster_checked, Raster, Role, GEO_REL_TOL};
use crate::metrics::report::render_table;
use crate::tiler::{
    audit_overlaps, extract_tile, tile_window, OverlapPolicy, OverlapReport, TileError, TileWindow,
};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SetSummary {
    pub role: Role,
    pub points: usize,
    pub tiles: usize,
    pub skipped_points: usize,
    pub instances: usize,
    pub segments: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvertSummary {
    pub sets: Vec<SetSummary>,
    pub overlap: OverlapReport,
    pub files_written: usize,
    pub annotate_warnings: usize,
}

impl ConvertSummary {
    pub fn total_tiles(&self) -> usize {
        self.sets.iter().map(|s| s.tiles).sum()
    }

    /// Tiles and instances per set.
    pub fn to_text(&self) -> String {
        let rows: Vec<Vec<String>> = self
            .sets
            .iter()
            .map(|s| {
                vec![
                    set_title(s.role).to_string(),
                    s.tiles.to_string(),
                    s.instances.to_string(),
                ]
            })
            .collect();
        render_table(&["Set", "Number of tiles", "Number of instances"], &rows)
    }
}

pub(crate) fn set_title(role: Role) -> &'static str {
    match role {
        Role::Train => "Training",
        Role::Valid => "Validation",
        Role::Test => "Testing",
    }
}

fn read(path: &std::path::Path, what: &str) -> Result<Raster, PipelineError> {
    let (r, warnings) = read_raster_checked(path)
        .map_err(|e| PipelineError::geo(format!("{what} raster {}", path.display()), e))?;
    for w in warnings {
        log::warn!("{}: {w}", path.display());
    }
    Ok(r)
}

fn check_coregistered(original: &Raster, other: &Raster, what: &str) -> Result<(), PipelineError> {
    let dims = |r: &Raster| (r.width(), r.height());
    if dims(original) != dims(other) {
        return Err(PipelineError::CoRegistration(format!(
            "{what} raster is {:?}, original is {:?}",
            dims(other),
            dims(original)
        )));
    }
    match (&original.geotransform, &other.geotransform) {
        (Some(a), Some(b)) if !a.approx_eq(b, GEO_REL_TOL) => Err(PipelineError::CoRegistration(
            format!("{what} geotransform {b:?} differs from original {a:?}"),
        )),
        (Some(_), None) => {
            log::warn!("{what} raster has no georeferencing; assuming it matches the original");
            Ok(())
        }
        _ => Ok(()),
    }
}

/// Reads the inputs, cuts tiles around every point, annotates them and writes
/// the dataset. Output bytes do not depend on `workers`.
pub fn convert(cfg: &JobConfig) -> Result<ConvertSummary, PipelineError> {
    cfg.validate()?;
    let registry = cfg.load_registry()?;

    let original = read(&cfg.original, "original")?;
    let semantic = read(&cfg.semantic, "semantic")?;
    let sequential = read(&cfg.sequential, "sequential")?;
    for (r, what) in [(&semantic, "semantic"), (&sequential, "sequential")] {
        if r.channels() != 1 {
            return Err(PipelineError::Input {
                context: format!("{what} raster"),
                message: format!("expected one band, found {}", r.channels()),
            });
        }
        check_coregistered(&original, r, what)?;
    }
    let gt = original
        .geotransform
        .or(semantic.geotransform)
        .or(sequential.geotransform)
        .ok_or_else(|| PipelineError::Input {
            context: cfg.original.display().to_string(),
            message: "no georeferencing (world file or GeoTIFF tags) found".into(),
        })?;
    let image = match &cfg.channels {
        Some(ch) => original
            .select_channels(ch)
            .map_err(|e| PipelineError::geo("channel selection", e))?,
        None => original,
    };
    let dims = (image.width(), image.height());

    let mut windows: Vec<(Role, Vec<TileWindow>)> = Vec::new();
    let mut summaries = Vec::new();
    for role in Role::ALL {
        let Some(path) = cfg.points.get(role) else {
            windows.push((role, Vec::new()));
            summaries.push(SetSummary {
                role,
                points: 0,
                tiles: 0,
                skipped_points: 0,
                instances: 0,
                segments: 0,
            });
            continue;
        };
        let points = read_point_shapefile(path, role)
            .map_err(|e| PipelineError::geo(format!("{role} points {}", path.display()), e))?;
        let mut ws = Vec::new();
        let mut skipped = 0;
        for (i, &p) in points.points.iter().enumerate() {
            match tile_window(&gt, dims, p, cfg.tile_size, i, role) {
                Ok(w) => ws.push(w),
                Err(e @ TileError::OutOfBounds { .. }) => {
                    log::warn!("skipping point: {e}");
                    skipped += 1;
                }
                Err(e) => return Err(e.into()),
            }
        }
        summaries.push(SetSummary {
            role,
            points: points.len(),
            tiles: ws.len(),
            skipped_points: skipped,
            instances: 0,
            segments: 0,
        });
        windows.push((role, ws));
    }

    let all: Vec<TileWindow> = windows
        .iter()
        .flat_map(|(_, w)| w.iter().copied())
        .collect();
    let overlap = audit_overlaps(
        &all,
        OverlapPolicy {
            train_may_overlap: cfg.train_may_overlap,
        },
    );
    if overlap.violation_count() > 0 {
        if cfg.fail_on_overlap {
            return Err(PipelineError::OverlapViolation(overlap));
        }
        for v in overlap.violations() {
            log::warn!(
                "overlap: {} point {} and {} point {} share {} px",
                v.a.role,
                v.a.source_point_index,
                v.b.role,
                v.b.source_point_index,
                v.intersection_area
            );
        }
    }

    let options = AnnotateOptions {
        stuff_sequential_values: cfg.stuff_sequential_values.clone(),
    };
    let write_options = WriteOptions {
        force: cfg.force,
        merged_semantic: cfg.merged_semantic,
    };
    let (splits, warnings, manifest) =
        with_workers(cfg.workers, || -> Result<_, PipelineError> {
            let mut splits = Vec::new();
            let mut warning_count = 0;
            for (role, ws) in &windows {
                let built: Vec<(TileOutput, usize)> = ws
                    .par_iter()
                    .enumerate()
                    .map(|(k, w)| -> Result<_, PipelineError> {
                        let image_id = k as u32 + 1;
                        let context =
                            format!("{role} point {} (image {image_id})", w.source_point_index);
                        let seq = extract_tile(&sequential, w)?;
                        let sem = extract_tile(&semantic, w)?;
                        let segs =
                            build_segments(&seq, &sem, &registry, &options).map_err(|e| {
                                PipelineError::Annotate {
                                    context: context.clone(),
                                    source: e,
                                }
                            })?;
                        for warn in &segs.warnings {
                            log::warn!("{context}: {warn}");
                        }
                        Ok((
                            TileOutput {
                                image_id,
                                window: *w,
                                image: extract_tile(&image, w)?,
                                semantic: sem,
                                segments: segs.segments,
                            },
                            segs.warnings.len(),
                        ))
                    })
                    .collect::<Result<_, _>>()?;
                warning_count += built.iter().map(|b| b.1).sum::<usize>();
                splits.push(SplitTiles {
                    role: *role,
                    tiles: built.into_iter().map(|b| b.0).collect(),
                });
            }
            let manifest = write_dataset(&cfg.output, &splits, &registry, write_options)?;
            Ok((splits, warning_count, manifest))
        })??;

    for (s, split) in summaries.iter_mut().zip(&splits) {
        s.instances = split
            .tiles
            .iter()
            .map(|t| t.segments.iter().filter(|g| g.isthing).count())
            .sum();
        s.segments = split.tiles.iter().map(|t| t.segments.len()).sum();
    }
    Ok(ConvertSummary {
        sets: summaries,
        overlap,
        files_written: manifest.files.len() + 1,
        annotate_warnings: warnings,
    })
}
