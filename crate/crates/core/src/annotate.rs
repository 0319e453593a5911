//! Turns a co-registered (sequential, semantic) tile pair into segment records:
//! thing regions grouped by sequential value, one stuff segment per stuff class,
//! outer polygons, tight boxes, exact pixel areas and per-image segment ids.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::boundary::{rings_bbox, trace_outer_boundaries, Ring};
use crate::geo::{GeoError, Raster};
use crate::registry::CategoryRegistry;

/// Largest id representable in an RGB panoptic PNG.
pub const MAX_PANOPTIC_ID: u32 = (1 << 24) - 1;

#[derive(Debug, Error)]
pub enum AnnotateError {
    #[error("tiles differ in size: sequential {seq:?}, semantic {sem:?}")]
    DimensionMismatch { seq: (u32, u32), sem: (u32, u32) },
    #[error("panoptic id {0} does not fit in 24 bits")]
    IdOverflow(u64),
    #[error("region {value} lies entirely over void semantic pixels")]
    AllVoid { value: u32 },
    #[error(transparent)]
    Raster(#[from] GeoError),
}

/// Non-fatal findings; the affected segment is dropped.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum AnnotateWarning {
    AllVoid { value: u32 },
    NotAThing { value: u32, label: u32 },
    UnknownLabel { label: u32, pixels: u64 },
}

impl fmt::Display for AnnotateWarning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AnnotateWarning::AllVoid { value } => {
                write!(f, "sequential value {value} covers only void semantic pixels; dropped")
            }
            AnnotateWarning::NotAThing { value, label } => write!(
                f,
                "sequential value {value} votes for label {label}, which is not a thing class; dropped"
            ),
            AnnotateWarning::UnknownLabel { label, pixels } => write!(
                f,
                "semantic label {label} ({pixels} px) is not in the registry; treated as void"
            ),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BBox {
    pub x: u32,
    pub y: u32,
    pub width: u32,
    pub height: u32,
}

impl BBox {
    pub fn to_array(self) -> [f64; 4] {
        [
            self.x as f64,
            self.y as f64,
            self.width as f64,
            self.height as f64,
        ]
    }

    /// Tight box around linear pixel indices of a `width`-wide grid.
    pub fn of_pixels(pixels: &[u32], width: u32) -> Option<BBox> {
        let first = *pixels.first()?;
        let (mut x0, mut y0) = (first % width, first / width);
        let (mut x1, mut y1) = (x0, y0);
        for &p in pixels {
            let (x, y) = (p % width, p / width);
            x0 = x0.min(x);
            x1 = x1.max(x);
            y0 = y0.min(y);
            y1 = y1.max(y);
        }
        Some(BBox {
            x: x0,
            y: y0,
            width: x1 - x0 + 1,
            height: y1 - y0 + 1,
        })
    }
}

/// One annotated segment of a tile.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SegmentRecord {
    /// Per-image id, starting at 1.
    pub segment_id: u32,
    pub category: u32,
    pub isthing: bool,
    pub polygons: Vec<Ring>,
    pub bbox: BBox,
    pub area: u64,
    pub iscrowd: u8,
    /// Sequential raster value for things; `None` for stuff.
    pub source_value: Option<u32>,
    /// Sorted row-major pixel indices within the tile.
    pub pixels: Vec<u32>,
}

/// Options controlling how the sequential raster is read.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotateOptions {
    /// Sequential values that mark grouped stuff rather than thing polygons.
    #[serde(default)]
    pub stuff_sequential_values: BTreeSet<u32>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TileSegments {
    pub segments: Vec<SegmentRecord>,
    pub warnings: Vec<AnnotateWarning>,
}

/// Groups pixels of a single-channel sequential tile by value. Zero and the
/// `reserved` values are skipped. Disconnected pixels with equal value form one
/// region. Pixels are `(col, row)` in row-major order.
pub fn extract_regions(
    seq_tile: &Raster,
    reserved: &BTreeSet<u32>,
) -> Result<BTreeMap<u32, Vec<(u32, u32)>>, AnnotateError> {
    let labels = seq_tile.labels()?;
    let w = seq_tile.width();
    let mut regions: BTreeMap<u32, Vec<(u32, u32)>> = BTreeMap::new();
    for (i, &v) in labels.iter().enumerate() {
        if v != 0 && !reserved.contains(&v) {
            regions
                .entry(v)
                .or_default()
                .push((i as u32 % w, i as u32 / w));
        }
    }
    Ok(regions)
}

/// Majority semantic label over the region, ignoring `void_label`; ties go to
/// the smallest label.
pub fn assign_category(
    pixels: &[(u32, u32)],
    semantic_tile: &Raster,
    void_label: u32,
    region_value: u32,
) -> Result<u32, AnnotateError> {
    let mut votes: BTreeMap<u32, u64> = BTreeMap::new();
    for &(c, r) in pixels {
        let label = semantic_tile.get(c, r, 0) as u32;
        if label != void_label {
            *votes.entry(label).or_default() += 1;
        }
    }
    // BTreeMap iterates labels ascending, so max_by keeps the first (smallest) on ties.
    votes
        .into_iter()
        .max_by(|a, b| a.1.cmp(&b.1).then(b.0.cmp(&a.0)))
        .map(|(label, _)| label)
        .ok_or(AnnotateError::AllVoid {
            value: region_value,
        })
}

fn record(
    pixels: Vec<u32>,
    width: u32,
    category: u32,
    isthing: bool,
    source_value: Option<u32>,
) -> SegmentRecord {
    let coords: Vec<(u32, u32)> = pixels.iter().map(|&p| (p % width, p / width)).collect();
    let polygons = trace_outer_boundaries(&coords);
    let (x, y, bw, bh) = rings_bbox(&polygons).expect("nonempty region has a ring");
    SegmentRecord {
        segment_id: 0,
        category,
        isthing,
        polygons,
        bbox: BBox {
            x,
            y,
            width: bw,
            height: bh,
        },
        area: pixels.len() as u64,
        iscrowd: 0,
        source_value,
        pixels,
    }
}

/// Builds every segment of one tile. Stuff segments get ids first (ascending
/// label), then things (ascending sequential value). A pixel claimed by a thing
/// is never part of a stuff segment, so the segments partition the non-void area.
pub fn build_segments(
    seq_tile: &Raster,
    sem_tile: &Raster,
    registry: &CategoryRegistry,
    options: &AnnotateOptions,
) -> Result<TileSegments, AnnotateError> {
    let dims = |r: &Raster| (r.width(), r.height());
    if dims(seq_tile) != dims(sem_tile) {
        return Err(AnnotateError::DimensionMismatch {
            seq: dims(seq_tile),
            sem: dims(sem_tile),
        });
    }
    let width = sem_tile.width();
    let sem = sem_tile.labels()?;
    let mut warnings = Vec::new();

    let mut things = Vec::new();
    let mut claimed = vec![false; sem.len()];
    for (value, coords) in extract_regions(seq_tile, &options.stuff_sequential_values)? {
        let label = match assign_category(&coords, sem_tile, registry.void_label, value) {
            Ok(l) => l,
            Err(AnnotateError::AllVoid { value }) => {
                warnings.push(AnnotateWarning::AllVoid { value });
                continue;
            }
            Err(e) => return Err(e),
        };
        if !registry.is_thing(label) {
            warnings.push(AnnotateWarning::NotAThing { value, label });
            continue;
        }
        let pixels: Vec<u32> = coords.iter().map(|&(c, r)| r * width + c).collect();
        for &p in &pixels {
            claimed[p as usize] = true;
        }
        things.push(record(pixels, width, label, true, Some(value)));
    }

    let mut stuff_pixels: BTreeMap<u32, Vec<u32>> = BTreeMap::new();
    let mut unknown: BTreeMap<u32, u64> = BTreeMap::new();
    for (i, &label) in sem.iter().enumerate() {
        if claimed[i] || label == registry.void_label {
            continue;
        }
        if registry.is_stuff(label) {
            stuff_pixels.entry(label).or_default().push(i as u32);
        } else if registry.get(label).is_none() {
            *unknown.entry(label).or_default() += 1;
        }
    }
    warnings.extend(
        unknown
            .into_iter()
            .map(|(label, pixels)| AnnotateWarning::UnknownLabel { label, pixels }),
    );

    let mut segments: Vec<SegmentRecord> = stuff_pixels
        .into_iter()
        .map(|(label, pixels)| record(pixels, width, label, false, None))
        .collect();
    segments.extend(things);
    for (i, s) in segments.iter_mut().enumerate() {
        s.segment_id = i as u32 + 1;
    }
    Ok(TileSegments { segments, warnings })
}

/// `id = R + 256 G + 256^2 B`.
pub fn encode_panoptic_id(id: u32) -> Result<[u8; 3], AnnotateError> {
    if id > MAX_PANOPTIC_ID {
        return Err(AnnotateError::IdOverflow(id as u64));
    }
    Ok([id as u8, (id >> 8) as u8, (id >> 16) as u8])
}

pub fn decode_panoptic_id(rgb: [u8; 3]) -> u32 {
    rgb[0] as u32 | (rgb[1] as u32) << 8 | (rgb[2] as u32) << 16
}

/// Paints segments onto a 3-channel 8-bit panoptic id raster. Void stays (0,0,0).
pub fn paint_panoptic(
    segments: &[SegmentRecord],
    width: u32,
    height: u32,
) -> Result<Raster, AnnotateError> {
    let mut samples = vec![0u16; width as usize * height as usize * 3];
    // Stuff first, then things, in id order.
    let mut order: Vec<&SegmentRecord> = segments.iter().collect();
    order.sort_by_key(|s| (s.isthing, s.segment_id));
    for s in order {
        let rgb = encode_panoptic_id(s.segment_id)?;
        for &p in &s.pixels {
            let at = p as usize * 3;
            samples[at] = rgb[0] as u16;
            samples[at + 1] = rgb[1] as u16;
            samples[at + 2] = rgb[2] as u16;
        }
    }
    Ok(Raster::new(
        width,
        height,
        3,
        crate::geo::BitDepth::Eight,
        samples,
    )?)
}

/// Decodes every pixel of a 3-channel panoptic raster into segment ids.
pub fn decode_panoptic_raster(raster: &Raster) -> Result<Vec<u32>, AnnotateError> {
    if raster.channels() != 3 {
        return Err(GeoError::InvalidRaster(format!(
            "panoptic raster needs 3 channels, found {}",
            raster.channels()
        ))
        .into());
    }
    Ok(raster
        .samples()
        .chunks_exact(3)
        .map(|c| decode_panoptic_id([c[0] as u8, c[1] as u8, c[2] as u8]))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::boundary::{rasterize_rings, ring_to_f64};
    use crate::geo::BitDepth;
    use crate::registry::tests::bsb;

    fn tile(w: u32, h: u32, values: &[u16]) -> Raster {
        Raster::new(w, h, 1, BitDepth::Sixteen, values.to_vec()).unwrap()
    }

    #[test]
    fn regions_group_by_value() {
        let mut v = vec![0u16; 16];
        v[0] = 7;
        v[4] = 7;
        let r = extract_regions(&tile(4, 4, &v), &BTreeSet::new()).unwrap();
        assert_eq!(r.len(), 1);
        assert_eq!(r[&7], vec![(0, 0), (0, 1)]);
    }

    #[test]
    fn disconnected_value_is_one_region() {
        let mut v = vec![0u16; 16];
        v[0] = 9;
        v[15] = 9;
        let r = extract_regions(&tile(4, 4, &v), &BTreeSet::new()).unwrap();
        assert_eq!(r[&9].len(), 2);
        assert!(extract_regions(&tile(4, 4, &[0; 16]), &BTreeSet::new())
            .unwrap()
            .is_empty());
    }

    #[test]
    fn reserved_values_skipped() {
        let r = extract_regions(&tile(2, 1, &[1, 5]), &BTreeSet::from([1])).unwrap();
        assert_eq!(r.keys().copied().collect::<Vec<_>>(), vec![5]);
    }

    #[test]
    fn majority_vote() {
        let sem = tile(10, 1, &[6; 10]);
        let px: Vec<_> = (0..10).map(|c| (c, 0)).collect();
        assert_eq!(assign_category(&px, &sem, 0, 1).unwrap(), 6);

        let mixed = tile(10, 1, &[13, 6, 13, 6, 6, 13, 6, 6, 6, 6]);
        // Brute-force tally: 7 x label 6, 3 x label 13.
        let sixes = mixed.samples().iter().filter(|&&v| v == 6).count();
        assert_eq!(sixes, 7);
        assert_eq!(assign_category(&px, &mixed, 0, 1).unwrap(), 6);

        let tie = tile(4, 1, &[9, 5, 9, 5]);
        let px4: Vec<_> = (0..4).map(|c| (c, 0)).collect();
        assert_eq!(assign_category(&px4, &tie, 0, 1).unwrap(), 5);

        let void = tile(10, 1, &[0; 10]);
        assert!(matches!(
            assign_category(&px, &void, 0, 4),
            Err(AnnotateError::AllVoid { value: 4 })
        ));
    }

    #[test]
    fn stuff_then_things_ids() {
        // Row 0: stuff 1, row 1: stuff 2, three single-pixel things labelled 6.
        let (w, h) = (4, 3);
        let sem = tile(w, h, &[1, 1, 1, 1, 2, 2, 2, 2, 6, 0, 6, 6]);
        let seq = tile(w, h, &[0, 0, 0, 0, 0, 0, 0, 0, 11, 0, 12, 13]);
        let out = build_segments(&seq, &sem, &bsb(), &AnnotateOptions::default()).unwrap();
        let ids: Vec<_> = out.segments.iter().map(|s| s.segment_id).collect();
        assert_eq!(ids, vec![1, 2, 3, 4, 5]);
        assert_eq!(out.segments[0].category, 1);
        assert_eq!(out.segments[1].category, 2);
        assert_eq!(
            out.segments[2..]
                .iter()
                .map(|s| s.source_value)
                .collect::<Vec<_>>(),
            vec![Some(11), Some(12), Some(13)]
        );
        assert!(out.warnings.is_empty());
    }

    #[test]
    fn empty_tiles_give_no_records() {
        let z = tile(4, 4, &[0; 16]);
        let out = build_segments(&z, &z, &bsb(), &AnnotateOptions::default()).unwrap();
        assert!(out.segments.is_empty());
    }

    #[test]
    fn single_thing_pixel() {
        let mut sem = vec![0u16; 16];
        let mut seq = vec![0u16; 16];
        sem[2 * 4 + 1] = 6;
        seq[2 * 4 + 1] = 3;
        let out = build_segments(
            &tile(4, 4, &seq),
            &tile(4, 4, &sem),
            &bsb(),
            &Default::default(),
        )
        .unwrap();
        assert_eq!(out.segments.len(), 1);
        let s = &out.segments[0];
        assert_eq!(s.area, 1);
        assert_eq!(
            s.bbox,
            BBox {
                x: 1,
                y: 2,
                width: 1,
                height: 1
            }
        );
        assert_eq!(s.polygons, vec![vec![(1, 2), (1, 3), (2, 3), (2, 2)]]);
        assert_eq!(s.category, 6);
        assert_eq!(s.iscrowd, 0);
    }

    #[test]
    fn thing_over_stuff_label_dropped_with_warning() {
        let sem = tile(2, 1, &[1, 1]);
        let seq = tile(2, 1, &[4, 0]);
        let out = build_segments(&seq, &sem, &bsb(), &Default::default()).unwrap();
        assert_eq!(
            out.warnings,
            vec![AnnotateWarning::NotAThing { value: 4, label: 1 }]
        );
        assert_eq!(out.segments.len(), 1);
        assert_eq!(out.segments[0].area, 2);
    }

    #[test]
    fn stuff_excludes_thing_pixels() {
        // A thing pixel whose semantic label disagrees is not double counted.
        let sem = tile(4, 1, &[1, 6, 6, 1]);
        let seq = tile(4, 1, &[5, 5, 5, 0]);
        let out = build_segments(&seq, &sem, &bsb(), &Default::default()).unwrap();
        let total: u64 = out.segments.iter().map(|s| s.area).sum();
        assert_eq!(total, 4);
        assert_eq!(out.segments[0].pixels, vec![3]);
        assert_eq!(out.segments[1].area, 3);
    }

    #[test]
    fn panoptic_ids() {
        assert_eq!(encode_panoptic_id(0).unwrap(), [0, 0, 0]);
        assert_eq!(encode_panoptic_id(66051).unwrap(), [3, 2, 1]);
        for id in [1, 255, 256, 65535, 16777215] {
            assert_eq!(decode_panoptic_id(encode_panoptic_id(id).unwrap()), id);
        }
        assert!(matches!(
            encode_panoptic_id(1 << 24),
            Err(AnnotateError::IdOverflow(_))
        ));
    }

    proptest::proptest! {
        #[test]
        fn segments_partition_and_invert(
            seq_vals in proptest::collection::vec(0u16..5, 36),
            sem_vals in proptest::collection::vec(0u16..8, 36),
        ) {
            // Thing pixels carry label 4 + value, stuff labels 1..3, 0 void.
            let sem: Vec<u16> = seq_vals.iter().zip(&sem_vals)
                .map(|(&q, &s)| if q > 0 { 3 + q } else { s % 4 }).collect();
            let seq_t = tile(6, 6, &seq_vals);
            let sem_t = tile(6, 6, &sem);
            let out = build_segments(&seq_t, &sem_t, &bsb(), &Default::default()).unwrap();

            let thing_area: u64 = out.segments.iter().filter(|s| s.isthing).map(|s| s.area).sum();
            let nonzero = seq_vals.iter().filter(|&&v| v > 0).count() as u64;
            proptest::prop_assert_eq!(thing_area, nonzero);

            let pan = paint_panoptic(&out.segments, 6, 6).unwrap();
            let ids = decode_panoptic_raster(&pan).unwrap();
            for (i, &id) in ids.iter().enumerate() {
                let owners = out.segments.iter().filter(|s| s.pixels.binary_search(&(i as u32)).is_ok()).count();
                proptest::prop_assert_eq!(owners, usize::from(id != 0));
                proptest::prop_assert_eq!(id == 0, sem[i] == 0 && seq_vals[i] == 0);
            }

            for s in &out.segments {
                let (x0, y0) = (s.bbox.x, s.bbox.y);
                let (x1, y1) = (x0 + s.bbox.width, y0 + s.bbox.height);
                let vs: Vec<_> = s.polygons.iter().flatten().collect();
                proptest::prop_assert!(vs.iter().all(|v| v.0 >= x0 && v.0 <= x1 && v.1 >= y0 && v.1 <= y1));
                proptest::prop_assert!(vs.iter().any(|v| v.0 == x0) && vs.iter().any(|v| v.0 == x1));
                proptest::prop_assert!(vs.iter().any(|v| v.1 == y0) && vs.iter().any(|v| v.1 == y1));
                let filled = rasterize_rings(&s.polygons.iter().map(ring_to_f64).collect::<Vec<_>>(), 6, 6);
                proptest::prop_assert!(s.pixels.iter().all(|&p| filled[p as usize]));
            }
        }
    }
}
