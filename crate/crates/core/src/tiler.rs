//! Point-centred tile windows, tile extraction, and the overlap audit between
//! dataset splits.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geo::{GeoTransform, Raster, Role};

#[derive(Debug, Error, PartialEq)]
pub enum TileError {
    #[error("tile size {0} must be even and at least 2")]
    BadTileSize(u32),
    #[error("{role} point {point_index} gives window at ({col0}, {row0}) size {size}, outside the {width}x{height} raster")]
    OutOfBounds {
        role: Role,
        point_index: usize,
        col0: i64,
        row0: i64,
        size: u32,
        width: u32,
        height: u32,
    },
    #[error("window ({col0}, {row0}) size {size} does not fit a {width}x{height} raster")]
    DimensionMismatch {
        col0: u32,
        row0: u32,
        size: u32,
        width: u32,
        height: u32,
    },
}

/// Square pixel window inside a source raster, tied to the point that produced it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TileWindow {
    pub col0: u32,
    pub row0: u32,
    pub size: u32,
    pub source_point_index: usize,
    pub role: Role,
}

impl TileWindow {
    /// Area in pixels shared by two windows; zero for edge-touching windows.
    pub fn intersection_area(&self, other: &TileWindow) -> u64 {
        let span = |a0: u32, a_len: u32, b0: u32, b_len: u32| -> u64 {
            let lo = a0.max(b0) as u64;
            let hi = (a0 as u64 + a_len as u64).min(b0 as u64 + b_len as u64);
            hi.saturating_sub(lo)
        };
        span(self.col0, self.size, other.col0, other.size)
            * span(self.row0, self.size, other.row0, other.size)
    }
}

/// `floor(x + 0.5)`: halves always round toward +infinity.
pub fn round_half_up(x: f64) -> i64 {
    (x + 0.5).floor() as i64
}

/// Window of `size` pixels centred on a world point: the continuous pixel
/// position is rounded half-up and `size / 2` is subtracted on each axis.
pub fn tile_window(
    gt: &GeoTransform,
    raster_dims: (u32, u32),
    point: (f64, f64),
    size: u32,
    point_index: usize,
    role: Role,
) -> Result<TileWindow, TileError> {
    if size < 2 || !size.is_multiple_of(2) {
        return Err(TileError::BadTileSize(size));
    }
    let (width, height) = raster_dims;
    let (c, r) = gt.world_to_pixel(point.0, point.1);
    let half = (size / 2) as i64;
    let col0 = round_half_up(c) - half;
    let row0 = round_half_up(r) - half;
    let fits = |start: i64, extent: u32| start >= 0 && start + size as i64 <= extent as i64;
    if !c.is_finite() || !r.is_finite() || !fits(col0, width) || !fits(row0, height) {
        return Err(TileError::OutOfBounds {
            role,
            point_index,
            col0,
            row0,
            size,
            width,
            height,
        });
    }
    Ok(TileWindow {
        col0: col0 as u32,
        row0: row0 as u32,
        size,
        source_point_index: point_index,
        role,
    })
}

/// Copies the window out of `raster`; the geotransform is shifted to the window origin.
pub fn extract_tile(raster: &Raster, window: &TileWindow) -> Result<Raster, TileError> {
    let (w, h) = (raster.width(), raster.height());
    if window.col0 as u64 + window.size as u64 > w as u64
        || window.row0 as u64 + window.size as u64 > h as u64
    {
        return Err(TileError::DimensionMismatch {
            col0: window.col0,
            row0: window.row0,
            size: window.size,
            width: w,
            height: h,
        });
    }
    let ch = raster.channels() as usize;
    let size = window.size as usize;
    let row_len = size * ch;
    let src = raster.samples();
    let mut samples = Vec::with_capacity(size * row_len);
    for i in 0..size {
        let start = ((window.row0 as usize + i) * w as usize + window.col0 as usize) * ch;
        samples.extend_from_slice(&src[start..start + row_len]);
    }
    let mut tile = Raster::new(
        window.size,
        window.size,
        raster.channels(),
        raster.bit_depth(),
        samples,
    )
    .expect("slice of a valid raster is valid");
    tile.geotransform = raster
        .geotransform
        .map(|gt| gt.translated(window.col0 as i64, window.row0 as i64));
    tile.crs_keys = raster.crs_keys.clone();
    Ok(tile)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct OverlapPolicy {
    pub train_may_overlap: bool,
}

impl Default for OverlapPolicy {
    fn default() -> Self {
        Self {
            train_may_overlap: true,
        }
    }
}

impl OverlapPolicy {
    fn is_violation(&self, a: &TileWindow, b: &TileWindow) -> bool {
        let both_train = a.role == Role::Train && b.role == Role::Train;
        !both_train || !self.train_may_overlap
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OverlapPair {
    pub a: TileWindow,
    pub b: TileWindow,
    pub intersection_area: u64,
    pub violation: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OverlapReport {
    pub pairs: Vec<OverlapPair>,
}

impl OverlapReport {
    pub fn violations(&self) -> impl Iterator<Item = &OverlapPair> {
        self.pairs.iter().filter(|p| p.violation)
    }

    pub fn violation_count(&self) -> usize {
        self.violations().count()
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{} overlapping pair(s), {} violation(s)",
            self.pairs.len(),
            self.violation_count()
        );
        for p in &self.pairs {
            let _ = writeln!(
                out,
                "{} {}#{} ({}, {}) x {}#{} ({}, {}): {} px",
                if p.violation {
                    "VIOLATION"
                } else {
                    "allowed  "
                },
                p.a.role,
                p.a.source_point_index,
                p.a.col0,
                p.a.row0,
                p.b.role,
                p.b.source_point_index,
                p.b.col0,
                p.b.row0,
                p.intersection_area
            );
        }
        out
    }
}

/// Lists every pair of windows with a positive-area intersection. Pairs touching
/// the validation or test split are violations; train/train pairs are only
/// violations when the policy forbids training overlap.
///
/// Pairs come out ordered by input position `(i, j)` with `i < j`.
pub fn audit_overlaps(windows: &[TileWindow], policy: OverlapPolicy) -> OverlapReport {
    // Sweep along columns: sort by col0 and stop scanning once windows start
    // to the right of the current one's extent.
    let mut order: Vec<usize> = (0..windows.len()).collect();
    order.sort_by_key(|&i| (windows[i].col0, i));
    let mut found = Vec::new();
    for (k, &i) in order.iter().enumerate() {
        let a = &windows[i];
        let right = a.col0 as u64 + a.size as u64;
        for &j in &order[k + 1..] {
            let b = &windows[j];
            if b.col0 as u64 >= right {
                break;
            }
            let area = a.intersection_area(b);
            if area > 0 {
                found.push((i.min(j), i.max(j), area));
            }
        }
    }
    found.sort_unstable();
    OverlapReport {
        pairs: found
            .into_iter()
            .map(|(i, j, area)| OverlapPair {
                a: windows[i],
                b: windows[j],
                intersection_area: area,
                violation: policy.is_violation(&windows[i], &windows[j]),
            })
            .collect(),
    }
}
