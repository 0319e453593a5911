//! Baseline TIFF subset: 8/16-bit unsigned samples, chunky planar configuration,
//! stripped or tiled layout, no compression or deflate. Either byte order is
//! accepted on read; files are written little-endian.
//!
//! GeoTIFF `ModelPixelScale` + `ModelTiepoint` (or an unrotated
//! `ModelTransformation`) are read as georeferencing and written back when the
//! raster carries a geotransform.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use flate2::read::ZlibDecoder;
use flate2::write::ZlibEncoder;

use super::{BitDepth, GeoError, GeoTransform, Raster};

const TAG_IMAGE_WIDTH: u16 = 256;
const TAG_IMAGE_LENGTH: u16 = 257;
const TAG_BITS_PER_SAMPLE: u16 = 258;
const TAG_COMPRESSION: u16 = 259;
const TAG_PHOTOMETRIC: u16 = 262;
const TAG_STRIP_OFFSETS: u16 = 273;
const TAG_SAMPLES_PER_PIXEL: u16 = 277;
const TAG_ROWS_PER_STRIP: u16 = 278;
const TAG_STRIP_BYTE_COUNTS: u16 = 279;
const TAG_PLANAR_CONFIG: u16 = 284;
const TAG_PREDICTOR: u16 = 317;
const TAG_TILE_WIDTH: u16 = 322;
const TAG_TILE_LENGTH: u16 = 323;
const TAG_TILE_OFFSETS: u16 = 324;
const TAG_TILE_BYTE_COUNTS: u16 = 325;
const TAG_EXTRA_SAMPLES: u16 = 338;
const TAG_SAMPLE_FORMAT: u16 = 339;
const TAG_MODEL_PIXEL_SCALE: u16 = 33550;
const TAG_MODEL_TIEPOINT: u16 = 33922;
const TAG_MODEL_TRANSFORMATION: u16 = 34264;
const TAG_GEO_KEY_DIRECTORY: u16 = 34735;

const TYPE_SHORT: u16 = 3;
const TYPE_LONG: u16 = 4;
const TYPE_DOUBLE: u16 = 12;

const GT_RASTER_TYPE_KEY: u16 = 1025;
const RASTER_PIXEL_IS_POINT: u16 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TiffCompression {
    #[default]
    None,
    Deflate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TiffLayout {
    /// `None` picks roughly 8 KiB per strip.
    Stripped { rows_per_strip: Option<u32> },
    /// Tile dimensions must be multiples of 16.
    Tiled { tile_width: u32, tile_height: u32 },
}

impl Default for TiffLayout {
    fn default() -> Self {
        TiffLayout::Stripped {
            rows_per_strip: None,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct TiffOptions {
    pub layout: TiffLayout,
    pub compression: TiffCompression,
}

pub(crate) struct DecodedTiff {
    pub raster: Raster,
    pub geotransform: Option<GeoTransform>,
}

struct Entry {
    typ: u16,
    count: u32,
    /// Absolute byte offset of the value array.
    at: usize,
}

struct Reader<'a> {
    b: &'a [u8],
    le: bool,
}

fn corrupt(msg: impl Into<String>) -> GeoError {
    GeoError::CorruptFile(msg.into())
}

fn type_size(typ: u16) -> Option<usize> {
    Some(match typ {
        1 | 2 | 6 | 7 => 1,
        3 | 8 => 2,
        4 | 9 | 11 => 4,
        5 | 10 | 12 => 8,
        16..=18 => 8,
        _ => return None,
    })
}

impl<'a> Reader<'a> {
    fn slice(&self, at: usize, len: usize) -> Result<&'a [u8], GeoError> {
        at.checked_add(len)
            .and_then(|end| self.b.get(at..end))
            .ok_or_else(|| corrupt(format!("read of {len} bytes at {at} past end of file")))
    }

    fn u16(&self, at: usize) -> Result<u16, GeoError> {
        let s: [u8; 2] = self.slice(at, 2)?.try_into().unwrap();
        Ok(if self.le {
            u16::from_le_bytes(s)
        } else {
            u16::from_be_bytes(s)
        })
    }

    fn u32(&self, at: usize) -> Result<u32, GeoError> {
        let s: [u8; 4] = self.slice(at, 4)?.try_into().unwrap();
        Ok(if self.le {
            u32::from_le_bytes(s)
        } else {
            u32::from_be_bytes(s)
        })
    }

    fn f64(&self, at: usize) -> Result<f64, GeoError> {
        let s: [u8; 8] = self.slice(at, 8)?.try_into().unwrap();
        Ok(if self.le {
            f64::from_le_bytes(s)
        } else {
            f64::from_be_bytes(s)
        })
    }

    fn f32(&self, at: usize) -> Result<f32, GeoError> {
        Ok(f32::from_bits(self.u32(at)?))
    }

    fn uints(&self, e: &Entry) -> Result<Vec<u64>, GeoError> {
        let size = match e.typ {
            1 | 7 => 1,
            3 => 2,
            4 => 4,
            t => {
                return Err(corrupt(format!(
                    "expected an integer field, found type {t}"
                )))
            }
        };
        (0..e.count as usize)
            .map(|i| {
                let at = e.at + i * size;
                Ok(match size {
                    1 => self.slice(at, 1)?[0] as u64,
                    2 => self.u16(at)? as u64,
                    _ => self.u32(at)? as u64,
                })
            })
            .collect()
    }

    fn floats(&self, e: &Entry) -> Result<Vec<f64>, GeoError> {
        (0..e.count as usize)
            .map(|i| match e.typ {
                TYPE_DOUBLE => self.f64(e.at + i * 8),
                11 => Ok(self.f32(e.at + i * 4)? as f64),
                t => Err(corrupt(format!(
                    "expected a floating-point field, found type {t}"
                ))),
            })
            .collect()
    }
}

pub(crate) fn decode_tiff(bytes: &[u8]) -> Result<DecodedTiff, GeoError> {
    if bytes.len() < 8 {
        return Err(corrupt("file shorter than a TIFF header"));
    }
    let le = match &bytes[0..2] {
        b"II" => true,
        b"MM" => false,
        _ => return Err(GeoError::UnsupportedFormat("not a TIFF or PNG file".into())),
    };
    let r = Reader { b: bytes, le };
    match r.u16(2)? {
        42 => {}
        43 => return Err(GeoError::UnsupportedFormat("BigTIFF".into())),
        m => return Err(corrupt(format!("bad TIFF magic {m}"))),
    }
    let ifd = r.u32(4)? as usize;
    let n = r.u16(ifd)? as usize;
    let mut tags = BTreeMap::new();
    for i in 0..n {
        let at = ifd + 2 + i * 12;
        let tag = r.u16(at)?;
        let typ = r.u16(at + 2)?;
        let count = r.u32(at + 4)?;
        let Some(size) = type_size(typ) else {
            // Unknown field types are skipped, as baseline readers must.
            continue;
        };
        let total = size
            .checked_mul(count as usize)
            .ok_or_else(|| corrupt(format!("tag {tag} count overflows")))?;
        let value_at = if total <= 4 {
            at + 8
        } else {
            r.u32(at + 8)? as usize
        };
        r.slice(value_at, total)?;
        tags.insert(
            tag,
            Entry {
                typ,
                count,
                at: value_at,
            },
        );
    }

    let uint = |tag: u16| -> Result<Option<Vec<u64>>, GeoError> {
        tags.get(&tag).map(|e| r.uints(e)).transpose()
    };
    let scalar = |tag: u16, default: Option<u64>| -> Result<u64, GeoError> {
        match uint(tag)? {
            Some(v) if !v.is_empty() => Ok(v[0]),
            _ => default.ok_or_else(|| corrupt(format!("missing required tag {tag}"))),
        }
    };

    let width = scalar(TAG_IMAGE_WIDTH, None)?;
    let height = scalar(TAG_IMAGE_LENGTH, None)?;
    if width > u32::MAX as u64 || height > u32::MAX as u64 {
        return Err(corrupt("image dimensions out of range"));
    }
    let spp = scalar(TAG_SAMPLES_PER_PIXEL, Some(1))?;
    if spp == 0 || spp > u16::MAX as u64 {
        return Err(corrupt(format!("samples per pixel {spp}")));
    }
    let bps = uint(TAG_BITS_PER_SAMPLE)?.unwrap_or_else(|| vec![1]);
    let bits = bps[0];
    if bps.iter().any(|&b| b != bits) {
        return Err(GeoError::UnsupportedFormat(format!(
            "mixed bits per sample {bps:?}"
        )));
    }
    let bit_depth = BitDepth::from_bits(bits as u16)
        .filter(|_| bits <= 16)
        .ok_or_else(|| GeoError::UnsupportedFormat(format!("{bits}-bit samples")))?;

    match scalar(TAG_COMPRESSION, Some(1))? {
        1 | 8 | 32946 => {}
        6 | 7 => return Err(GeoError::UnsupportedFormat("JPEG compression".into())),
        c => {
            return Err(GeoError::UnsupportedFormat(format!(
                "compression scheme {c}"
            )))
        }
    }
    let deflate = scalar(TAG_COMPRESSION, Some(1))? != 1;
    if scalar(TAG_PHOTOMETRIC, Some(1))? == 3 {
        return Err(GeoError::UnsupportedFormat("paletted image".into()));
    }
    if scalar(TAG_PLANAR_CONFIG, Some(1))? != 1 {
        return Err(GeoError::UnsupportedFormat(
            "planar (band-sequential) configuration".into(),
        ));
    }
    let predictor = scalar(TAG_PREDICTOR, Some(1))?;
    if predictor != 1 {
        return Err(GeoError::UnsupportedFormat(format!(
            "predictor {predictor}"
        )));
    }
    if let Some(fmt) = uint(TAG_SAMPLE_FORMAT)? {
        if fmt.iter().any(|&f| f != 1) {
            return Err(GeoError::UnsupportedFormat(format!(
                "sample format {fmt:?}"
            )));
        }
    }

    let width = width as u32;
    let height = height as u32;
    let spp = spp as u16;
    let bytes_per_sample = bit_depth.bytes();
    let pixel_bytes = spp as usize * bytes_per_sample;
    let mut samples = vec![0u16; width as usize * height as usize * spp as usize];

    let decode_samples = |raw: &[u8], out: &mut [u16]| match bit_depth {
        BitDepth::Eight => out.iter_mut().zip(raw).for_each(|(o, &b)| *o = b as u16),
        BitDepth::Sixteen => out.iter_mut().zip(raw.chunks_exact(2)).for_each(|(o, c)| {
            let c = [c[0], c[1]];
            *o = if le {
                u16::from_le_bytes(c)
            } else {
                u16::from_be_bytes(c)
            };
        }),
    };

    let read_chunk = |offset: u64, count: u64, expected: usize| -> Result<Vec<u8>, GeoError> {
        let raw = r.slice(offset as usize, count as usize)?;
        let data = if deflate {
            let mut out = Vec::with_capacity(expected);
            ZlibDecoder::new(raw)
                .take(expected as u64)
                .read_to_end(&mut out)
                .map_err(|e| corrupt(format!("deflate stream: {e}")))?;
            out
        } else {
            raw.to_vec()
        };
        if data.len() < expected {
            return Err(corrupt(format!(
                "chunk holds {} bytes, {expected} expected",
                data.len()
            )));
        }
        Ok(data)
    };

    if tags.contains_key(&TAG_TILE_WIDTH) {
        let tw = scalar(TAG_TILE_WIDTH, None)? as usize;
        let th = scalar(TAG_TILE_LENGTH, None)? as usize;
        if tw == 0 || th == 0 {
            return Err(corrupt("zero tile size"));
        }
        let offsets = uint(TAG_TILE_OFFSETS)?.ok_or_else(|| corrupt("missing tile offsets"))?;
        let counts =
            uint(TAG_TILE_BYTE_COUNTS)?.ok_or_else(|| corrupt("missing tile byte counts"))?;
        let across = (width as usize).div_ceil(tw);
        let down = (height as usize).div_ceil(th);
        if offsets.len() != across * down || counts.len() != offsets.len() {
            return Err(corrupt(format!(
                "{} tile offsets for a {across}x{down} tile grid",
                offsets.len()
            )));
        }
        let tile_row_bytes = tw * pixel_bytes;
        let mut row_buf = vec![0u16; tw * spp as usize];
        for ty in 0..down {
            for tx in 0..across {
                let k = ty * across + tx;
                let data = read_chunk(offsets[k], counts[k], tile_row_bytes * th)?;
                let x0 = tx * tw;
                let cols = tw.min(width as usize - x0);
                for dy in 0..th {
                    let y = ty * th + dy;
                    if y >= height as usize {
                        break;
                    }
                    let raw = &data[dy * tile_row_bytes..dy * tile_row_bytes + cols * pixel_bytes];
                    let n = cols * spp as usize;
                    decode_samples(raw, &mut row_buf[..n]);
                    let dst = (y * width as usize + x0) * spp as usize;
                    samples[dst..dst + n].copy_from_slice(&row_buf[..n]);
                }
            }
        }
    } else {
        let rps = scalar(TAG_ROWS_PER_STRIP, Some(u32::MAX as u64))?.clamp(1, height.max(1) as u64)
            as usize;
        let offsets = uint(TAG_STRIP_OFFSETS)?.ok_or_else(|| corrupt("missing strip offsets"))?;
        let strips = (height as usize).div_ceil(rps);
        let row_bytes = width as usize * pixel_bytes;
        let counts = match uint(TAG_STRIP_BYTE_COUNTS)? {
            Some(c) => c,
            None if !deflate => (0..strips)
                .map(|s| ((height as usize - s * rps).min(rps) * row_bytes) as u64)
                .collect(),
            None => return Err(corrupt("missing strip byte counts")),
        };
        if offsets.len() < strips || counts.len() < strips {
            return Err(corrupt(format!(
                "{} strip offsets for {strips} strips",
                offsets.len()
            )));
        }
        for s in 0..strips {
            let rows = (height as usize - s * rps).min(rps);
            let data = read_chunk(offsets[s], counts[s], rows * row_bytes)?;
            let dst = s * rps * width as usize * spp as usize;
            let n = rows * width as usize * spp as usize;
            decode_samples(&data[..rows * row_bytes], &mut samples[dst..dst + n]);
        }
    }

    let crs_keys =
        uint(TAG_GEO_KEY_DIRECTORY)?.map(|v| v.into_iter().map(|k| k as u16).collect::<Vec<u16>>());
    let pixel_is_point = crs_keys
        .as_deref()
        .map(|keys| {
            keys.get(4..)
                .unwrap_or_default()
                .chunks_exact(4)
                .any(|k| k[0] == GT_RASTER_TYPE_KEY && k[1] == 0 && k[3] == RASTER_PIXEL_IS_POINT)
        })
        .unwrap_or(false);

    let geotransform = read_geo_tags(&r, &tags, pixel_is_point)?;
    let mut raster = Raster::new(width, height, spp, bit_depth, samples)?;
    raster.crs_keys = crs_keys;
    Ok(DecodedTiff {
        raster,
        geotransform,
    })
}

fn read_geo_tags(
    r: &Reader<'_>,
    tags: &BTreeMap<u16, Entry>,
    pixel_is_point: bool,
) -> Result<Option<GeoTransform>, GeoError> {
    let floats = |tag| tags.get(&tag).map(|e| r.floats(e)).transpose();
    let shift = if pixel_is_point { 0.5 } else { 0.0 };
    if let (Some(scale), Some(tie)) = (floats(TAG_MODEL_PIXEL_SCALE)?, floats(TAG_MODEL_TIEPOINT)?)
    {
        if scale.len() < 2 || tie.len() < 6 {
            return Err(corrupt("short GeoTIFF scale or tiepoint tag"));
        }
        let (i, j, x, y) = (tie[0] + shift, tie[1] + shift, tie[3], tie[4]);
        let (sx, sy) = (scale[0], scale[1]);
        return GeoTransform::new(x - i * sx, y + j * sy, sx, -sy).map(Some);
    }
    if let Some(m) = floats(TAG_MODEL_TRANSFORMATION)? {
        if m.len() < 16 {
            return Err(corrupt("short ModelTransformation tag"));
        }
        if m[1] != 0.0 || m[4] != 0.0 {
            return Err(GeoError::RotationUnsupported(m[4], m[1]));
        }
        let (ox, oy) = (m[3] + shift * m[0], m[7] + shift * m[5]);
        return GeoTransform::new(ox, oy, m[0], m[5]).map(Some);
    }
    Ok(None)
}

struct OutEntry {
    tag: u16,
    typ: u16,
    count: u32,
    payload: Vec<u8>,
}

fn shorts(tag: u16, values: &[u16]) -> OutEntry {
    OutEntry {
        tag,
        typ: TYPE_SHORT,
        count: values.len() as u32,
        payload: values.iter().flat_map(|v| v.to_le_bytes()).collect(),
    }
}

fn longs(tag: u16, values: &[u32]) -> OutEntry {
    OutEntry {
        tag,
        typ: TYPE_LONG,
        count: values.len() as u32,
        payload: values.iter().flat_map(|v| v.to_le_bytes()).collect(),
    }
}

fn doubles(tag: u16, values: &[f64]) -> OutEntry {
    OutEntry {
        tag,
        typ: TYPE_DOUBLE,
        count: values.len() as u32,
        payload: values.iter().flat_map(|v| v.to_le_bytes()).collect(),
    }
}

fn sample_bytes(raster: &Raster, samples: impl Iterator<Item = u16>, out: &mut Vec<u8>) {
    match raster.bit_depth() {
        BitDepth::Eight => out.extend(samples.map(|v| v as u8)),
        BitDepth::Sixteen => out.extend(samples.flat_map(|v| v.to_le_bytes())),
    }
}

fn compress(data: Vec<u8>, compression: TiffCompression) -> Result<Vec<u8>, GeoError> {
    match compression {
        TiffCompression::None => Ok(data),
        TiffCompression::Deflate => {
            let mut enc = ZlibEncoder::new(Vec::new(), flate2::Compression::default());
            enc.write_all(&data)
                .and_then(|_| enc.finish())
                .map_err(|e| corrupt(format!("deflate: {e}")))
        }
    }
}

/// Encodes a raster as a little-endian TIFF. Identical input gives identical bytes.
pub fn encode_tiff(raster: &Raster, options: &TiffOptions) -> Result<Vec<u8>, GeoError> {
    let (w, h) = (raster.width() as usize, raster.height() as usize);
    if w == 0 || h == 0 {
        return Err(GeoError::UnsupportedCombination(
            "tiff cannot hold an empty image".into(),
        ));
    }
    let spp = raster.channels() as usize;
    let samples = raster.samples();

    let mut chunks = Vec::new();
    let mut layout_entries = Vec::new();
    match options.layout {
        TiffLayout::Stripped { rows_per_strip } => {
            let row_bytes = w * spp * raster.bit_depth().bytes();
            let rps = rows_per_strip
                .map(|r| r as usize)
                .unwrap_or((8192 / row_bytes).max(1))
                .clamp(1, h);
            for rows in (0..h).collect::<Vec<_>>().chunks(rps) {
                let start = rows[0] * w * spp;
                let end = (rows[rows.len() - 1] + 1) * w * spp;
                let mut data = Vec::new();
                sample_bytes(raster, samples[start..end].iter().copied(), &mut data);
                chunks.push(compress(data, options.compression)?);
            }
            layout_entries.push(longs(TAG_ROWS_PER_STRIP, &[rps as u32]));
        }
        TiffLayout::Tiled {
            tile_width,
            tile_height,
        } => {
            let (tw, th) = (tile_width as usize, tile_height as usize);
            if tw == 0 || th == 0 || tw % 16 != 0 || th % 16 != 0 {
                return Err(GeoError::UnsupportedCombination(format!(
                    "tile size {tw}x{th} must be a nonzero multiple of 16"
                )));
            }
            for ty in 0..h.div_ceil(th) {
                for tx in 0..w.div_ceil(tw) {
                    let mut data = Vec::new();
                    for dy in 0..th {
                        let y = ty * th + dy;
                        let row = (0..tw).flat_map(|dx| {
                            let x = tx * tw + dx;
                            (0..spp).map(move |c| {
                                if x < w && y < h {
                                    samples[(y * w + x) * spp + c]
                                } else {
                                    0
                                }
                            })
                        });
                        sample_bytes(raster, row, &mut data);
                    }
                    chunks.push(compress(data, options.compression)?);
                }
            }
            layout_entries.push(longs(TAG_TILE_WIDTH, &[tw as u32]));
            layout_entries.push(longs(TAG_TILE_LENGTH, &[th as u32]));
        }
    }
    let tiled = matches!(options.layout, TiffLayout::Tiled { .. });
    let (offsets_tag, counts_tag) = if tiled {
        (TAG_TILE_OFFSETS, TAG_TILE_BYTE_COUNTS)
    } else {
        (TAG_STRIP_OFFSETS, TAG_STRIP_BYTE_COUNTS)
    };

    let bits = raster.bit_depth().bits();
    let (photometric, extra) = if spp >= 3 { (2, spp - 3) } else { (1, spp - 1) };
    let mut entries = vec![
        longs(TAG_IMAGE_WIDTH, &[w as u32]),
        longs(TAG_IMAGE_LENGTH, &[h as u32]),
        shorts(TAG_BITS_PER_SAMPLE, &vec![bits; spp]),
        shorts(
            TAG_COMPRESSION,
            &[match options.compression {
                TiffCompression::None => 1,
                TiffCompression::Deflate => 8,
            }],
        ),
        shorts(TAG_PHOTOMETRIC, &[photometric]),
        // Placeholder; patched once chunk positions are known.
        longs(offsets_tag, &vec![0; chunks.len()]),
        shorts(TAG_SAMPLES_PER_PIXEL, &[spp as u16]),
        longs(
            counts_tag,
            &chunks.iter().map(|c| c.len() as u32).collect::<Vec<_>>(),
        ),
        shorts(TAG_PLANAR_CONFIG, &[1]),
        shorts(TAG_SAMPLE_FORMAT, &vec![1; spp]),
    ];
    entries.extend(layout_entries);
    if extra > 0 {
        entries.push(shorts(TAG_EXTRA_SAMPLES, &vec![0; extra]));
    }
    if let Some(gt) = raster.geotransform {
        entries.push(doubles(
            TAG_MODEL_PIXEL_SCALE,
            &[gt.pixel_width, -gt.pixel_height, 0.0],
        ));
        entries.push(doubles(
            TAG_MODEL_TIEPOINT,
            &[0.0, 0.0, 0.0, gt.origin_x, gt.origin_y, 0.0],
        ));
    }
    entries.sort_by_key(|e| e.tag);

    let ifd_len = 2 + entries.len() * 12 + 4;
    let mut extra_at = 8 + ifd_len;
    let mut value_pos = Vec::with_capacity(entries.len());
    for e in &entries {
        if e.payload.len() > 4 {
            value_pos.push(Some(extra_at));
            extra_at += e.payload.len() + (e.payload.len() & 1);
        } else {
            value_pos.push(None);
        }
    }
    let mut chunk_at = extra_at;
    let mut chunk_offsets = Vec::with_capacity(chunks.len());
    for c in &chunks {
        chunk_offsets.push(chunk_at as u32);
        chunk_at += c.len();
    }
    if chunk_at > u32::MAX as usize {
        return Err(GeoError::UnsupportedCombination(
            "image too large for classic TIFF".into(),
        ));
    }
    for e in entries.iter_mut().filter(|e| e.tag == offsets_tag) {
        e.payload = chunk_offsets.iter().flat_map(|v| v.to_le_bytes()).collect();
    }

    let mut out = Vec::with_capacity(chunk_at);
    out.extend_from_slice(b"II");
    out.extend_from_slice(&42u16.to_le_bytes());
    out.extend_from_slice(&8u32.to_le_bytes());
    out.extend_from_slice(&(entries.len() as u16).to_le_bytes());
    for (e, pos) in entries.iter().zip(&value_pos) {
        out.extend_from_slice(&e.tag.to_le_bytes());
        out.extend_from_slice(&e.typ.to_le_bytes());
        out.extend_from_slice(&e.count.to_le_bytes());
        match pos {
            Some(p) => out.extend_from_slice(&(*p as u32).to_le_bytes()),
            None => {
                let mut inline = [0u8; 4];
                inline[..e.payload.len()].copy_from_slice(&e.payload);
                out.extend_from_slice(&inline);
            }
        }
    }
    out.extend_from_slice(&0u32.to_le_bytes());
    for e in entries.iter().filter(|e| e.payload.len() > 4) {
        out.extend_from_slice(&e.payload);
        if e.payload.len() & 1 == 1 {
            out.push(0);
        }
    }
    for c in &chunks {
        out.extend_from_slice(c);
    }
    debug_assert_eq!(out.len(), chunk_at);
    Ok(out)
}
