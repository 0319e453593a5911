//! ESRI shapefile main files (`.shp`) holding point geometry.
//!
//! The 100-byte header stores the file code and length (in 16-bit words) big-endian,
//! and the version, shape type and bounding box little-endian. Each record has a
//! big-endian 8-byte header followed by little-endian geometry.

use std::path::Path;

use super::{GeoError, Role};

const FILE_CODE: i32 = 9994;
const VERSION: i32 = 1000;
const HEADER_LEN: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ShapeType {
    Point,
    PointM,
    PointZ,
}

impl ShapeType {
    fn from_code(code: i32) -> Result<Self, GeoError> {
        match code {
            1 => Ok(ShapeType::Point),
            21 => Ok(ShapeType::PointM),
            11 => Ok(ShapeType::PointZ),
            other => Err(GeoError::WrongShapeType(other)),
        }
    }

    fn code(self) -> i32 {
        match self {
            ShapeType::Point => 1,
            ShapeType::PointM => 21,
            ShapeType::PointZ => 11,
        }
    }

    /// Minimum record content length in bytes (PointZ's M value is optional).
    fn min_content_len(self) -> usize {
        match self {
            ShapeType::Point => 20,
            ShapeType::PointM => 28,
            ShapeType::PointZ => 28,
        }
    }
}

/// Point locations of one split, in file record order.
#[derive(Debug, Clone, PartialEq)]
pub struct PointSet {
    pub role: Role,
    pub points: Vec<(f64, f64)>,
}

impl PointSet {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

fn be_i32(b: &[u8], at: usize) -> i32 {
    i32::from_be_bytes(b[at..at + 4].try_into().unwrap())
}

fn le_i32(b: &[u8], at: usize) -> i32 {
    i32::from_le_bytes(b[at..at + 4].try_into().unwrap())
}

fn le_f64(b: &[u8], at: usize) -> f64 {
    f64::from_le_bytes(b[at..at + 8].try_into().unwrap())
}

pub fn read_point_shapefile(path: &Path, role: Role) -> Result<PointSet, GeoError> {
    let bytes = std::fs::read(path).map_err(|e| GeoError::io(path, e))?;
    let points = parse_points(&bytes).map_err(|e| match e {
        GeoError::CorruptFile(msg) => GeoError::CorruptFile(format!("{}: {msg}", path.display())),
        other => other,
    })?;
    Ok(PointSet { role, points })
}

fn parse_points(bytes: &[u8]) -> Result<Vec<(f64, f64)>, GeoError> {
    if bytes.len() < HEADER_LEN {
        return Err(GeoError::CorruptFile(format!(
            "{} bytes is shorter than the shapefile header",
            bytes.len()
        )));
    }
    if be_i32(bytes, 0) != FILE_CODE {
        return Err(GeoError::CorruptFile(format!(
            "bad file code {}",
            be_i32(bytes, 0)
        )));
    }
    let declared = be_i32(bytes, 24);
    if declared < 0 || declared as usize * 2 != bytes.len() {
        return Err(GeoError::CorruptFile(format!(
            "header declares {} bytes, file has {}",
            declared as i64 * 2,
            bytes.len()
        )));
    }
    if le_i32(bytes, 28) != VERSION {
        return Err(GeoError::CorruptFile(format!(
            "unsupported version {}",
            le_i32(bytes, 28)
        )));
    }
    let shape_type = ShapeType::from_code(le_i32(bytes, 32))?;

    let mut points = Vec::new();
    let mut at = HEADER_LEN;
    let mut expected_number = 1;
    while at < bytes.len() {
        if at + 8 > bytes.len() {
            return Err(GeoError::CorruptFile(format!(
                "truncated record header at byte {at}"
            )));
        }
        let number = be_i32(bytes, at);
        let content_words = be_i32(bytes, at + 4);
        if number != expected_number {
            log::warn!("shapefile record {number} found where {expected_number} was expected");
        }
        expected_number = number.saturating_add(1);
        if content_words < 2 {
            return Err(GeoError::CorruptFile(format!(
                "record {number} has content length {content_words}"
            )));
        }
        let content_len = content_words as usize * 2;
        let start = at + 8;
        let end = start + content_len;
        if end > bytes.len() {
            return Err(GeoError::CorruptFile(format!(
                "record {number} runs past end of file"
            )));
        }
        let rec_type = le_i32(bytes, start);
        if rec_type == 0 {
            log::warn!("skipping null shape record {number}");
        } else if rec_type != shape_type.code() {
            return Err(GeoError::CorruptFile(format!(
                "record {number} has shape type {rec_type} in a type-{} file",
                shape_type.code()
            )));
        } else {
            if content_len < shape_type.min_content_len() {
                return Err(GeoError::CorruptFile(format!(
                    "record {number} too short for its shape type"
                )));
            }
            points.push((le_f64(bytes, start + 4), le_f64(bytes, start + 12)));
        }
        at = end;
    }
    Ok(points)
}

/// Writes a `.shp` file of 2D point records. Output is deterministic.
pub fn write_point_shapefile(path: &Path, points: &[(f64, f64)]) -> Result<(), GeoError> {
    std::fs::write(path, encode_points(points, ShapeType::Point)).map_err(|e| GeoError::io(path, e))
}

pub(crate) fn encode_points(points: &[(f64, f64)], shape_type: ShapeType) -> Vec<u8> {
    let content_len = match shape_type {
        ShapeType::Point => 20,
        ShapeType::PointM => 28,
        ShapeType::PointZ => 36,
    };
    let total = HEADER_LEN + points.len() * (8 + content_len);
    let mut out = Vec::with_capacity(total);
    out.extend_from_slice(&FILE_CODE.to_be_bytes());
    out.extend_from_slice(&[0u8; 20]);
    out.extend_from_slice(&((total / 2) as i32).to_be_bytes());
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&shape_type.code().to_le_bytes());

    let (mut xmin, mut ymin, mut xmax, mut ymax) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    if let Some(&(x0, y0)) = points.first() {
        (xmin, ymin, xmax, ymax) = (x0, y0, x0, y0);
        for &(x, y) in points {
            xmin = xmin.min(x);
            ymin = ymin.min(y);
            xmax = xmax.max(x);
            ymax = ymax.max(y);
        }
    }
    for v in [xmin, ymin, xmax, ymax, 0.0, 0.0, 0.0, 0.0] {
        out.extend_from_slice(&v.to_le_bytes());
    }

    for (i, &(x, y)) in points.iter().enumerate() {
        out.extend_from_slice(&(i as i32 + 1).to_be_bytes());
        out.extend_from_slice(&((content_len / 2) as i32).to_be_bytes());
        out.extend_from_slice(&shape_type.code().to_le_bytes());
        out.extend_from_slice(&x.to_le_bytes());
        out.extend_from_slice(&y.to_le_bytes());
        match shape_type {
            ShapeType::Point => {}
            ShapeType::PointM => out.extend_from_slice(&0.0f64.to_le_bytes()),
            ShapeType::PointZ => {
                out.extend_from_slice(&(x + y).to_le_bytes());
                out.extend_from_slice(&0.0f64.to_le_bytes());
            }
        }
    }
    debug_assert_eq!(out.len(), total);
    out
}
