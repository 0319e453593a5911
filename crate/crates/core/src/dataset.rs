//! COCO-style dataset assembly: instance and panoptic JSON, ID-encoded panoptic
//! PNGs, semantic PNGs, the on-disk folder layout and its manifest.
//!
//! Layout under the output root:
//!
//! ```text
//! annotations/{instances,panoptic,semantic}_{set}.json
//! images_{set}/{set}_{id:06}.tif
//! panoptic_{set}/{set}_{id:06}.png
//! semantic_{set}/{set}_{id:06}.png
//! semantic_merged_{set}/{set}_{id:06}.png   (optional)
//! manifest.json
//! ```
//!
//! with `{set}` one of `train`, `valid`, `test`: ten folders in the default layout.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::annotate::{decode_panoptic_raster, paint_panoptic, AnnotateError, BBox, SegmentRecord};
use crate::geo::{encode_raster, BitDepth, GeoError, Raster, RasterFormat, Role};
use crate::registry::CategoryRegistry;
use crate::tiler::TileWindow;

pub const ANNOTATIONS_DIR: &str = "annotations";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const SET_FOLDERS: [&str; 3] = ["images", "panoptic", "semantic"];
pub const MERGED_FOLDER: &str = "semantic_merged";

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{0} is not empty; use force to overwrite")]
    NonEmptyTarget(PathBuf),
    #[error("semantic label {0} does not fit in an 8-bit PNG")]
    LabelOverflow(u32),
    #[error("missing file {0}")]
    MissingFile(PathBuf),
    #[error("{path}: {message}")]
    Json { path: PathBuf, message: String },
    #[error(transparent)]
    Annotate(#[from] AnnotateError),
    #[error(transparent)]
    Geo(#[from] GeoError),
}

fn io_err(path: &Path, source: std::io::Error) -> DatasetError {
    DatasetError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageEntry {
    pub id: u32,
    pub file_name: String,
    pub width: u32,
    pub height: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceAnnotation {
    pub id: u64,
    pub image_id: u32,
    pub category_id: u32,
    pub segmentation: Vec<Vec<f64>>,
    pub area: u64,
    pub bbox: [f64; 4],
    pub iscrowd: u8,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InstanceCategory {
    pub id: u32,
    pub name: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceDocument {
    pub images: Vec<ImageEntry>,
    pub annotations: Vec<InstanceAnnotation>,
    pub categories: Vec<InstanceCategory>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentInfo {
    pub id: u32,
    pub category_id: u32,
    pub area: u64,
    pub bbox: [f64; 4],
    pub iscrowd: u8,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PanopticAnnotation {
    pub image_id: u32,
    pub file_name: String,
    pub segments_info: Vec<SegmentInfo>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PanopticCategory {
    pub id: u32,
    pub name: String,
    pub isthing: u8,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PanopticDocument {
    pub images: Vec<ImageEntry>,
    pub annotations: Vec<PanopticAnnotation>,
    pub categories: Vec<PanopticCategory>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SemanticAnnotation {
    pub image_id: u32,
    pub file_name: String,
}

/// Index of the semantic PNGs of one split.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SemanticIndex {
    pub images: Vec<ImageEntry>,
    pub annotations: Vec<SemanticAnnotation>,
    pub categories: Vec<PanopticCategory>,
    pub void_label: u32,
    pub merged_things_label: Option<u32>,
}

/// Everything produced for one tile.
#[derive(Debug, Clone)]
pub struct TileOutput {
    pub image_id: u32,
    pub window: TileWindow,
    /// Tile of the original image, restricted to the selected channels.
    pub image: Raster,
    /// Single-channel semantic tile.
    pub semantic: Raster,
    pub segments: Vec<SegmentRecord>,
}

impl TileOutput {
    pub fn width(&self) -> u32 {
        self.semantic.width()
    }

    pub fn height(&self) -> u32 {
        self.semantic.height()
    }
}

#[derive(Debug, Clone)]
pub struct SplitTiles {
    pub role: Role,
    pub tiles: Vec<TileOutput>,
}

/// `{set}_{image_id:06}`.
pub fn file_stem(role: Role, image_id: u32) -> String {
    format!("{}_{image_id:06}", role.as_str())
}

pub fn image_file_name(role: Role, image_id: u32) -> String {
    format!("{}.tif", file_stem(role, image_id))
}

pub fn png_file_name(role: Role, image_id: u32) -> String {
    format!("{}.png", file_stem(role, image_id))
}

pub fn annotation_file_name(kind: &str, role: Role) -> String {
    format!("{kind}_{}.json", role.as_str())
}

/// Folder of one split for `kind` in `images`, `panoptic`, `semantic`, `semantic_merged`.
pub fn set_folder(kind: &str, role: Role) -> String {
    format!("{kind}_{}", role.as_str())
}

/// Compact JSON with object keys sorted; floats use shortest round-trip form.
pub fn canonical_json<T: Serialize>(value: &T) -> Vec<u8> {
    let v = serde_json::to_value(value).expect("dataset types serialize to JSON");
    serde_json::to_vec(&v).expect("JSON value serializes")
}

fn image_entries(role: Role, tiles: &[TileOutput]) -> Vec<ImageEntry> {
    tiles
        .iter()
        .map(|t| ImageEntry {
            id: t.image_id,
            file_name: image_file_name(role, t.image_id),
            width: t.width(),
            height: t.height(),
        })
        .collect()
}

fn panoptic_categories(registry: &CategoryRegistry) -> Vec<PanopticCategory> {
    registry
        .categories
        .iter()
        .map(|c| PanopticCategory {
            id: c.label,
            name: c.name.clone(),
            isthing: u8::from(c.isthing),
        })
        .collect()
}

/// Thing segments become annotations; ids run 1.. over (image, segment) order.
pub fn build_instance_document(
    role: Role,
    tiles: &[TileOutput],
    registry: &CategoryRegistry,
) -> InstanceDocument {
    let mut annotations = Vec::new();
    for t in tiles {
        for s in t.segments.iter().filter(|s| s.isthing) {
            annotations.push(InstanceAnnotation {
                id: annotations.len() as u64 + 1,
                image_id: t.image_id,
                category_id: s.category,
                segmentation: s
                    .polygons
                    .iter()
                    .map(|ring| {
                        ring.iter()
                            .flat_map(|&(x, y)| [x as f64, y as f64])
                            .collect()
                    })
                    .collect(),
                area: s.area,
                bbox: s.bbox.to_array(),
                iscrowd: s.iscrowd,
            });
        }
    }
    if annotations.is_empty() {
        log::warn!("{role} set has no thing annotations");
    }
    InstanceDocument {
        images: image_entries(role, tiles),
        annotations,
        categories: registry
            .things()
            .map(|c| InstanceCategory {
                id: c.label,
                name: c.name.clone(),
            })
            .collect(),
    }
}

/// Panoptic JSON plus one ID-encoded RGB raster per tile.
pub fn build_panoptic_outputs(
    role: Role,
    tiles: &[TileOutput],
    registry: &CategoryRegistry,
) -> Result<(PanopticDocument, Vec<Raster>), DatasetError> {
    let rasters = tiles
        .par_iter()
        .map(|t| paint_panoptic(&t.segments, t.width(), t.height()))
        .collect::<Result<Vec<_>, _>>()?;
    let annotations = tiles
        .iter()
        .map(|t| PanopticAnnotation {
            image_id: t.image_id,
            file_name: png_file_name(role, t.image_id),
            segments_info: t
                .segments
                .iter()
                .map(|s| SegmentInfo {
                    id: s.segment_id,
                    category_id: s.category,
                    area: s.area,
                    bbox: s.bbox.to_array(),
                    iscrowd: s.iscrowd,
                })
                .collect(),
        })
        .collect();
    Ok((
        PanopticDocument {
            images: image_entries(role, tiles),
            annotations,
            categories: panoptic_categories(registry),
        },
        rasters,
    ))
}

fn to_label8(semantic: &Raster, map: impl Fn(u32) -> u32) -> Result<Raster, DatasetError> {
    let labels = semantic.labels()?;
    let samples = labels
        .into_iter()
        .map(|l| {
            let v = map(l);
            if v > 255 {
                Err(DatasetError::LabelOverflow(v))
            } else {
                Ok(v as u16)
            }
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Raster::new(
        semantic.width(),
        semantic.height(),
        1,
        BitDepth::Eight,
        samples,
    )?)
}

/// Semantic labels copied to an 8-bit raster.
pub fn semantic_png_raster(semantic: &Raster) -> Result<Raster, DatasetError> {
    to_label8(semantic, |l| l)
}

/// Same, with every thing label replaced by the merged things label.
pub fn merged_semantic_raster(
    semantic: &Raster,
    registry: &CategoryRegistry,
) -> Result<Raster, DatasetError> {
    let merged = registry.merged_things_label();
    to_label8(semantic, |l| if registry.is_thing(l) { merged } else { l })
}

pub fn build_semantic_index(
    role: Role,
    tiles: &[TileOutput],
    registry: &CategoryRegistry,
    merged: bool,
) -> SemanticIndex {
    SemanticIndex {
        images: image_entries(role, tiles),
        annotations: tiles
            .iter()
            .map(|t| SemanticAnnotation {
                image_id: t.image_id,
                file_name: png_file_name(role, t.image_id),
            })
            .collect(),
        categories: panoptic_categories(registry),
        void_label: registry.void_label,
        merged_things_label: merged.then(|| registry.merged_things_label()),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestFile {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestTile {
    pub image_id: u32,
    pub file_name: String,
    pub window: TileWindow,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub files: Vec<ManifestFile>,
    pub tiles: Vec<ManifestTile>,
    pub registry: CategoryRegistry,
    pub merged_semantic: bool,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct WriteOptions {
    pub force: bool,
    pub merged_semantic: bool,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Writes through a temporary sibling and a rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), DatasetError> {
    let name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    let tmp = path.with_file_name(format!(".{name}.tmp"));
    std::fs::write(&tmp, bytes).map_err(|e| io_err(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| io_err(path, e))
}

fn dataset_entries() -> Vec<String> {
    let mut v = vec![ANNOTATIONS_DIR.to_string(), MANIFEST_FILE.to_string()];
    for role in Role::ALL {
        for kind in SET_FOLDERS.iter().chain([&MERGED_FOLDER]) {
            v.push(set_folder(kind, role));
        }
    }
    v
}

fn prepare_root(root: &Path, force: bool) -> Result<(), DatasetError> {
    if root.exists() {
        let mut entries = std::fs::read_dir(root).map_err(|e| io_err(root, e))?;
        if entries.next().is_some() {
            if !force {
                return Err(DatasetError::NonEmptyTarget(root.to_path_buf()));
            }
            for name in dataset_entries() {
                let p = root.join(&name);
                if p.is_dir() {
                    std::fs::remove_dir_all(&p).map_err(|e| io_err(&p, e))?;
                } else if p.exists() {
                    std::fs::remove_file(&p).map_err(|e| io_err(&p, e))?;
                }
            }
        }
    }
    let mut dirs = vec![root.join(ANNOTATIONS_DIR)];
    for role in Role::ALL {
        for kind in SET_FOLDERS {
            dirs.push(root.join(set_folder(kind, role)));
        }
    }
    for d in dirs {
        std::fs::create_dir_all(&d).map_err(|e| io_err(&d, e))?;
    }
    Ok(())
}

/// Encodes every document and raster, writes the layout and returns the manifest.
/// Splits missing from `splits` are written empty. Output bytes depend only on
/// the inputs, not on thread count.
pub fn write_dataset(
    root: &Path,
    splits: &[SplitTiles],
    registry: &CategoryRegistry,
    options: WriteOptions,
) -> Result<Manifest, DatasetError> {
    registry
        .validate_panoptic()
        .map_err(|e| DatasetError::Json {
            path: root.to_path_buf(),
            message: e.to_string(),
        })?;
    prepare_root(root, options.force)?;

    let empty = Vec::new();
    let mut files: Vec<(String, Vec<u8>)> = Vec::new();
    let mut tiles_meta = Vec::new();
    for role in Role::ALL {
        let tiles = splits
            .iter()
            .find(|s| s.role == role)
            .map_or(&empty, |s| &s.tiles);
        let ann = |kind: &str| format!("{ANNOTATIONS_DIR}/{}", annotation_file_name(kind, role));

        let instances = build_instance_document(role, tiles, registry);
        files.push((ann("instances"), canonical_json(&instances)));
        let (panoptic, pan_rasters) = build_panoptic_outputs(role, tiles, registry)?;
        files.push((ann("panoptic"), canonical_json(&panoptic)));
        let index = build_semantic_index(role, tiles, registry, options.merged_semantic);
        files.push((ann("semantic"), canonical_json(&index)));

        let encoded: Vec<Vec<(String, Vec<u8>)>> = tiles
            .par_iter()
            .zip(pan_rasters.par_iter())
            .map(|(t, pan)| -> Result<_, DatasetError> {
                let png = png_file_name(role, t.image_id);
                let mut out = vec![
                    (
                        format!(
                            "{}/{}",
                            set_folder("images", role),
                            image_file_name(role, t.image_id)
                        ),
                        encode_raster(&t.image, RasterFormat::Tiff)?,
                    ),
                    (
                        format!("{}/{png}", set_folder("panoptic", role)),
                        encode_raster(pan, RasterFormat::Png8)?,
                    ),
                    (
                        format!("{}/{png}", set_folder("semantic", role)),
                        encode_raster(&semantic_png_raster(&t.semantic)?, RasterFormat::Png8)?,
                    ),
                ];
                if options.merged_semantic {
                    let merged = merged_semantic_raster(&t.semantic, registry)?;
                    out.push((
                        format!("{}/{png}", set_folder(MERGED_FOLDER, role)),
                        encode_raster(&merged, RasterFormat::Png8)?,
                    ));
                }
                Ok(out)
            })
            .collect::<Result<_, _>>()?;
        files.extend(encoded.into_iter().flatten());
        tiles_meta.extend(tiles.iter().map(|t| ManifestTile {
            image_id: t.image_id,
            file_name: image_file_name(role, t.image_id),
            window: t.window,
        }));
    }
    if options.merged_semantic {
        for role in Role::ALL {
            let d = root.join(set_folder(MERGED_FOLDER, role));
            std::fs::create_dir_all(&d).map_err(|e| io_err(&d, e))?;
        }
    }

    files.sort_by(|a, b| a.0.cmp(&b.0));
    files
        .par_iter()
        .map(|(rel, bytes)| write_atomic(&root.join(rel), bytes))
        .collect::<Result<Vec<_>, _>>()?;

    let manifest = Manifest {
        files: files
            .iter()
            .map(|(rel, bytes)| ManifestFile {
                path: rel.clone(),
                sha256: sha256_hex(bytes),
                bytes: bytes.len() as u64,
            })
            .collect(),
        tiles: tiles_meta,
        registry: registry.clone(),
        merged_semantic: options.merged_semantic,
    };
    write_atomic(&root.join(MANIFEST_FILE), &canonical_json(&manifest))?;
    Ok(manifest)
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, DatasetError> {
    if !path.is_file() {
        return Err(DatasetError::MissingFile(path.to_path_buf()));
    }
    let text = std::fs::read(path).map_err(|e| io_err(path, e))?;
    serde_json::from_slice(&text).map_err(|e| DatasetError::Json {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

pub fn read_manifest(root: &Path) -> Result<Manifest, DatasetError> {
    read_json(&root.join(MANIFEST_FILE))
}

/// Documents of one split as stored on disk.
#[derive(Debug, Clone)]
pub struct SplitDocuments {
    pub role: Role,
    pub instances: InstanceDocument,
    pub panoptic: PanopticDocument,
    pub semantic: SemanticIndex,
}

pub fn read_split(root: &Path, role: Role) -> Result<SplitDocuments, DatasetError> {
    let ann = root.join(ANNOTATIONS_DIR);
    Ok(SplitDocuments {
        role,
        instances: read_json(&ann.join(annotation_file_name("instances", role)))?,
        panoptic: read_json(&ann.join(annotation_file_name("panoptic", role)))?,
        semantic: read_json(&ann.join(annotation_file_name("semantic", role)))?,
    })
}

/// Reads a PNG and returns the raster; a missing file is `MissingFile`.
pub fn read_png(path: &Path) -> Result<Raster, DatasetError> {
    if !path.is_file() {
        return Err(DatasetError::MissingFile(path.to_path_buf()));
    }
    Ok(crate::geo::read_raster(path)?)
}

/// Decoded panoptic segment-id map of one image.
pub fn read_panoptic_ids(path: &Path) -> Result<(u32, u32, Vec<u32>), DatasetError> {
    let r = read_png(path)?;
    Ok((r.width(), r.height(), decode_panoptic_raster(&r)?))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ViolationKind {
    IdSequence,
    DanglingReference,
    DuplicateId,
    Bijection,
    AreaMismatch,
    BboxMismatch,
    IsThing,
    CrossDocument,
    MissingFile,
    Digest,
    Overlap,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub kind: ViolationKind,
    pub context: String,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{:?}] {}: {}", self.kind, self.context, self.message)
    }
}

fn violation(
    kind: ViolationKind,
    context: impl Into<String>,
    message: impl Into<String>,
) -> Violation {
    Violation {
        kind,
        context: context.into(),
        message: message.into(),
    }
}

fn bbox_array_eq(a: [f64; 4], b: BBox) -> bool {
    a == b.to_array()
}

/// Checks the instance document's internal invariants.
pub fn validate_instances(doc: &InstanceDocument, context: &str) -> Vec<Violation> {
    use ViolationKind::*;
    let mut out = Vec::new();
    let images: BTreeMap<u32, &ImageEntry> = doc.images.iter().map(|i| (i.id, i)).collect();
    let categories: BTreeSet<u32> = doc.categories.iter().map(|c| c.id).collect();
    if images.len() != doc.images.len() {
        out.push(violation(DuplicateId, context, "duplicate image ids"));
    }
    for (i, a) in doc.annotations.iter().enumerate() {
        let ctx = format!("{context} annotation {}", a.id);
        if a.id != i as u64 + 1 {
            out.push(violation(
                IdSequence,
                &ctx,
                format!("expected id {}", i + 1),
            ));
        }
        if !categories.contains(&a.category_id) {
            out.push(violation(
                DanglingReference,
                &ctx,
                format!("unknown category {}", a.category_id),
            ));
        }
        let Some(img) = images.get(&a.image_id) else {
            out.push(violation(
                DanglingReference,
                &ctx,
                format!("unknown image {}", a.image_id),
            ));
            continue;
        };
        let verts: Vec<(f64, f64)> = a
            .segmentation
            .iter()
            .flat_map(|r| r.chunks_exact(2).map(|p| (p[0], p[1])))
            .collect();
        if verts.is_empty()
            || a.segmentation
                .iter()
                .any(|r| r.len() % 2 != 0 || r.len() < 6)
        {
            out.push(violation(BboxMismatch, &ctx, "malformed segmentation"));
            continue;
        }
        let fold = |f: fn(f64, f64) -> f64, init: f64, pick: fn(&(f64, f64)) -> f64| {
            verts.iter().map(pick).fold(init, f)
        };
        let x0 = fold(f64::min, f64::INFINITY, |p| p.0);
        let x1 = fold(f64::max, f64::NEG_INFINITY, |p| p.0);
        let y0 = fold(f64::min, f64::INFINITY, |p| p.1);
        let y1 = fold(f64::max, f64::NEG_INFINITY, |p| p.1);
        if a.bbox != [x0, y0, x1 - x0, y1 - y0] {
            out.push(violation(
                BboxMismatch,
                &ctx,
                format!(
                    "bbox {:?} vs polygon extent {:?}",
                    a.bbox,
                    [x0, y0, x1 - x0, y1 - y0]
                ),
            ));
        }
        if x0 < 0.0 || y0 < 0.0 || x1 > img.width as f64 || y1 > img.height as f64 {
            out.push(violation(BboxMismatch, &ctx, "polygon leaves the image"));
        }
        let box_area = (a.bbox[2] * a.bbox[3]).max(0.0) as u64;
        if a.area == 0 || a.area > box_area {
            out.push(violation(
                AreaMismatch,
                &ctx,
                format!("area {} inconsistent with bbox area {box_area}", a.area),
            ));
        }
    }
    out
}

/// Checks a panoptic document, including the PNG/segments_info bijection and
/// area and box consistency against the decoded PNGs in `png_dir`.
pub fn validate_panoptic(doc: &PanopticDocument, png_dir: &Path, context: &str) -> Vec<Violation> {
    use ViolationKind::*;
    let mut out = Vec::new();
    let images: BTreeMap<u32, &ImageEntry> = doc.images.iter().map(|i| (i.id, i)).collect();
    let categories: BTreeMap<u32, &PanopticCategory> =
        doc.categories.iter().map(|c| (c.id, c)).collect();
    for c in &doc.categories {
        if c.isthing > 1 {
            out.push(violation(
                IsThing,
                context,
                format!("category {} has isthing {}", c.id, c.isthing),
            ));
        }
    }
    let mut seen_images = BTreeSet::new();
    for ann in &doc.annotations {
        let ctx = format!("{context} image {}", ann.image_id);
        if !seen_images.insert(ann.image_id) {
            out.push(violation(DuplicateId, &ctx, "image annotated twice"));
        }
        let Some(img) = images.get(&ann.image_id) else {
            out.push(violation(DanglingReference, &ctx, "unknown image"));
            continue;
        };
        let mut infos: BTreeMap<u32, &SegmentInfo> = BTreeMap::new();
        for s in &ann.segments_info {
            if s.id == 0 || infos.insert(s.id, s).is_some() {
                out.push(violation(
                    DuplicateId,
                    &ctx,
                    format!("segment id {} repeated or zero", s.id),
                ));
            }
            if !categories.contains_key(&s.category_id) {
                out.push(violation(
                    DanglingReference,
                    &ctx,
                    format!("segment {} has unknown category {}", s.id, s.category_id),
                ));
            }
        }
        let path = png_dir.join(&ann.file_name);
        let (w, h, ids) = match read_panoptic_ids(&path) {
            Ok(v) => v,
            Err(DatasetError::MissingFile(p)) => {
                out.push(violation(MissingFile, &ctx, p.display().to_string()));
                continue;
            }
            Err(e) => {
                out.push(violation(Bijection, &ctx, e.to_string()));
                continue;
            }
        };
        if (w, h) != (img.width, img.height) {
            out.push(violation(
                Bijection,
                &ctx,
                format!("PNG is {w}x{h}, image entry {}x{}", img.width, img.height),
            ));
            continue;
        }
        let mut pixels: BTreeMap<u32, Vec<u32>> = BTreeMap::new();
        for (i, &id) in ids.iter().enumerate() {
            if id != 0 {
                pixels.entry(id).or_default().push(i as u32);
            }
        }
        for id in pixels.keys().filter(|id| !infos.contains_key(id)) {
            out.push(violation(
                Bijection,
                &ctx,
                format!("PNG id {id} missing from segments_info"),
            ));
        }
        for (id, info) in &infos {
            let Some(px) = pixels.get(id) else {
                out.push(violation(
                    Bijection,
                    &ctx,
                    format!("segment {id} absent from PNG"),
                ));
                continue;
            };
            if px.len() as u64 != info.area {
                out.push(violation(
                    AreaMismatch,
                    &ctx,
                    format!(
                        "segment {id} area {} but {} PNG pixels",
                        info.area,
                        px.len()
                    ),
                ));
            }
            let bb = BBox::of_pixels(px, w).expect("nonempty");
            if !bbox_array_eq(info.bbox, bb) {
                out.push(violation(
                    BboxMismatch,
                    &ctx,
                    format!(
                        "segment {id} bbox {:?} but PNG gives {:?}",
                        info.bbox,
                        bb.to_array()
                    ),
                ));
            }
        }
    }
    out
}

/// Thing annotations of the instance document must mirror the thing segments
/// of the panoptic document, image by image and in order.
pub fn validate_cross(
    instances: &InstanceDocument,
    panoptic: &PanopticDocument,
    context: &str,
) -> Vec<Violation> {
    let things: BTreeSet<u32> = panoptic
        .categories
        .iter()
        .filter(|c| c.isthing == 1)
        .map(|c| c.id)
        .collect();
    let key = |c: u32, area: u64, bbox: [f64; 4]| (c, area, bbox.map(f64::to_bits));
    let mut from_inst: BTreeMap<u32, Vec<_>> = BTreeMap::new();
    for a in &instances.annotations {
        from_inst
            .entry(a.image_id)
            .or_default()
            .push(key(a.category_id, a.area, a.bbox));
    }
    let mut from_pan: BTreeMap<u32, Vec<_>> = BTreeMap::new();
    for ann in &panoptic.annotations {
        let v: Vec<_> = ann
            .segments_info
            .iter()
            .filter(|s| things.contains(&s.category_id))
            .map(|s| key(s.category_id, s.area, s.bbox))
            .collect();
        if !v.is_empty() {
            from_pan.insert(ann.image_id, v);
        }
    }
    let mut out = Vec::new();
    let ids: BTreeSet<u32> = from_inst.keys().chain(from_pan.keys()).copied().collect();
    for id in ids {
        if from_inst.get(&id) != from_pan.get(&id) {
            out.push(violation(
                ViolationKind::CrossDocument,
                format!("{context} image {id}"),
                "instance annotations disagree with panoptic thing segments",
            ));
        }
    }
    let a: Vec<u32> = instances.images.iter().map(|i| i.id).collect();
    let b: Vec<u32> = panoptic.images.iter().map(|i| i.id).collect();
    if a != b {
        out.push(violation(
            ViolationKind::CrossDocument,
            context,
            "image lists differ",
        ));
    }
    out
}
