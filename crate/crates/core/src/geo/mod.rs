//! Readers and writers for the external file formats: a TIFF subset with
//! GeoTIFF tie-point/scale tags, world-file sidecars, ESRI point shapefiles
//! and 8-bit PNG.

mod pngio;
mod raster;
mod shapefile;
mod tiff;
mod worldfile;

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use raster::{BitDepth, GeoTransform, Raster};
pub use shapefile::{read_point_shapefile, write_point_shapefile, PointSet, ShapeType};
pub use tiff::{encode_tiff, TiffCompression, TiffLayout, TiffOptions};
pub use worldfile::{parse_world_file, read_world_file, world_file_text, write_world_file};

/// Relative tolerance used when comparing two geotransforms.
pub const GEO_REL_TOL: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum GeoError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("unsupported format: {0}")]
    UnsupportedFormat(String),
    #[error("corrupt file: {0}")]
    CorruptFile(String),
    #[error("rotated geotransforms are not supported (rotation terms {0}, {1})")]
    RotationUnsupported(f64, f64),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("expected a point shapefile, found shape type {0}")]
    WrongShapeType(i32),
    #[error("unsupported combination: {0}")]
    UnsupportedCombination(String),
    #[error("invalid raster: {0}")]
    InvalidRaster(String),
    #[error("invalid geotransform: {0}")]
    InvalidGeoTransform(String),
}

impl GeoError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        GeoError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

/// Non-fatal findings produced while reading a raster.
#[derive(Debug, Clone, PartialEq)]
pub enum GeoWarning {
    /// World file and embedded tags disagree; the world file was used.
    ConflictingGeo {
        world_file: GeoTransform,
        tags: GeoTransform,
    },
}

impl fmt::Display for GeoWarning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GeoWarning::ConflictingGeo { world_file, tags } => write!(
                f,
                "world file {world_file:?} disagrees with embedded tags {tags:?}; using world file"
            ),
        }
    }
}

/// Dataset split a point file or tile belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Train,
    Valid,
    Test,
}

impl Role {
    pub const ALL: [Role; 3] = [Role::Train, Role::Valid, Role::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Role::Train => "train",
            Role::Valid => "valid",
            Role::Test => "test",
        }
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Role {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "train" | "training" => Ok(Role::Train),
            "valid" | "val" | "validation" => Ok(Role::Valid),
            "test" | "testing" => Ok(Role::Test),
            other => Err(format!("unknown set `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RasterFormat {
    Tiff,
    Png8,
}

pub fn read_raster(path: &Path) -> Result<Raster, GeoError> {
    let (raster, warnings) = read_raster_checked(path)?;
    for w in warnings {
        log::warn!("{}: {w}", path.display());
    }
    Ok(raster)
}

/// Reads a TIFF or PNG raster and resolves its georeferencing. A world-file
/// sidecar takes precedence over embedded GeoTIFF tags.
pub fn read_raster_checked(path: &Path) -> Result<(Raster, Vec<GeoWarning>), GeoError> {
    let bytes = std::fs::read(path).map_err(|e| GeoError::io(path, e))?;
    let (mut raster, tag_gt) = if bytes.starts_with(pngio::PNG_SIGNATURE) {
        (pngio::decode_png(&bytes)?, None)
    } else {
        let decoded = tiff::decode_tiff(&bytes)?;
        (decoded.raster, decoded.geotransform)
    };

    let mut warnings = Vec::new();
    let world = match find_world_file(path) {
        Some(wf) => Some(read_world_file(&wf)?),
        None => None,
    };
    raster.geotransform = match (world, tag_gt) {
        (Some(w), Some(t)) => {
            if !w.approx_eq(&t, GEO_REL_TOL) {
                warnings.push(GeoWarning::ConflictingGeo {
                    world_file: w,
                    tags: t,
                });
            }
            Some(w)
        }
        (Some(w), None) => Some(w),
        (None, t) => t,
    };
    Ok((raster, warnings))
}

/// Candidate sidecar names: `.tfw`-style (first + last extension letter + `w`),
/// `<ext>w`, and `.wld`, in that order.
pub fn world_file_candidates(path: &Path) -> Vec<PathBuf> {
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .unwrap_or_default()
        .to_string();
    let mut out = Vec::new();
    if ext.len() >= 2 {
        let mut chars = ext.chars();
        let first = chars.next().unwrap();
        let last = ext.chars().last().unwrap();
        out.push(path.with_extension(format!("{first}{last}w")));
    }
    if !ext.is_empty() {
        out.push(path.with_extension(format!("{ext}w")));
    }
    out.push(path.with_extension("wld"));
    out
}

fn find_world_file(path: &Path) -> Option<PathBuf> {
    world_file_candidates(path)
        .into_iter()
        .find(|p| p.is_file())
}

/// Encodes a raster in the given format. Output is deterministic.
pub fn encode_raster(raster: &Raster, format: RasterFormat) -> Result<Vec<u8>, GeoError> {
    match format {
        RasterFormat::Tiff => encode_tiff(raster, &TiffOptions::default()),
        RasterFormat::Png8 => pngio::encode_png(raster),
    }
}

pub fn write_raster(raster: &Raster, path: &Path, format: RasterFormat) -> Result<(), GeoError> {
    let bytes = encode_raster(raster, format)?;
    std::fs::write(path, bytes).map_err(|e| GeoError::io(path, e))
}
