//! Six-line ASCII world files (`.tfw`, `.pgw`, `.wld`).
//!
//! Line order is A, D, B, E, C, F where (C, F) is the *center* of pixel (0, 0).
//! Internally the origin is the pixel corner, so half a pixel is subtracted.

use std::path::Path;

use super::{GeoError, GeoTransform};

pub fn read_world_file(path: &Path) -> Result<GeoTransform, GeoError> {
    let text = std::fs::read_to_string(path).map_err(|e| GeoError::io(path, e))?;
    parse_world_file(&text).map_err(|e| match e {
        GeoError::Parse(msg) => GeoError::Parse(format!("{}: {msg}", path.display())),
        other => other,
    })
}

pub fn parse_world_file(text: &str) -> Result<GeoTransform, GeoError> {
    let values = text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(|l| {
            l.parse::<f64>()
                .map_err(|_| GeoError::Parse(format!("not a number: `{l}`")))
        })
        .collect::<Result<Vec<_>, _>>()?;
    if values.len() != 6 {
        return Err(GeoError::Parse(format!(
            "world file needs 6 values, found {}",
            values.len()
        )));
    }
    let [a, d, b, e, c, f] = [
        values[0], values[1], values[2], values[3], values[4], values[5],
    ];
    if d != 0.0 || b != 0.0 {
        return Err(GeoError::RotationUnsupported(d, b));
    }
    GeoTransform::new(c - 0.5 * a, f - 0.5 * e, a, e)
}

pub fn world_file_text(gt: &GeoTransform) -> String {
    let cx = gt.origin_x + 0.5 * gt.pixel_width;
    let cy = gt.origin_y + 0.5 * gt.pixel_height;
    format!(
        "{}\n0\n0\n{}\n{}\n{}\n",
        gt.pixel_width, gt.pixel_height, cx, cy
    )
}

pub fn write_world_file(path: &Path, gt: &GeoTransform) -> Result<(), GeoError> {
    std::fs::write(path, world_file_text(gt)).map_err(|e| GeoError::io(path, e))
}
