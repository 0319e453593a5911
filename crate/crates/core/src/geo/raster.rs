use serde::{Deserialize, Serialize};

use super::GeoError;

/// Sample bit depth. Samples are always held as `u16` in memory.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BitDepth {
    Eight,
    Sixteen,
}

impl BitDepth {
    pub fn bits(self) -> u16 {
        match self {
            BitDepth::Eight => 8,
            BitDepth::Sixteen => 16,
        }
    }

    pub fn from_bits(bits: u16) -> Option<Self> {
        match bits {
            8 => Some(BitDepth::Eight),
            16 => Some(BitDepth::Sixteen),
            _ => None,
        }
    }

    pub fn max_value(self) -> u16 {
        match self {
            BitDepth::Eight => u8::MAX as u16,
            BitDepth::Sixteen => u16::MAX,
        }
    }

    pub(crate) fn bytes(self) -> usize {
        self.bits() as usize / 8
    }
}

/// Axis-aligned affine mapping from pixel-corner coordinates to world coordinates.
///
/// `origin_x`/`origin_y` locate the top-left corner of pixel (0, 0). Rotation
/// terms are not representable; rotated inputs are rejected at read time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoTransform {
    pub origin_x: f64,
    pub origin_y: f64,
    pub pixel_width: f64,
    pub pixel_height: f64,
}

impl GeoTransform {
    pub fn new(
        origin_x: f64,
        origin_y: f64,
        pixel_width: f64,
        pixel_height: f64,
    ) -> Result<Self, GeoError> {
        let all_finite = [origin_x, origin_y, pixel_width, pixel_height]
            .iter()
            .all(|v| v.is_finite());
        if !all_finite || pixel_width == 0.0 || pixel_height == 0.0 {
            return Err(GeoError::InvalidGeoTransform(format!(
                "origin ({origin_x}, {origin_y}), pixel size ({pixel_width}, {pixel_height})"
            )));
        }
        Ok(Self {
            origin_x,
            origin_y,
            pixel_width,
            pixel_height,
        })
    }

    /// Identity mapping with north-up orientation: world y decreases as rows increase.
    pub fn north_up_unit() -> Self {
        Self {
            origin_x: 0.0,
            origin_y: 0.0,
            pixel_width: 1.0,
            pixel_height: -1.0,
        }
    }

    /// Continuous pixel coordinates `(col, row)` of a world point.
    pub fn world_to_pixel(&self, x: f64, y: f64) -> (f64, f64) {
        (
            (x - self.origin_x) / self.pixel_width,
            (y - self.origin_y) / self.pixel_height,
        )
    }

    pub fn pixel_to_world(&self, col: f64, row: f64) -> (f64, f64) {
        (
            self.origin_x + col * self.pixel_width,
            self.origin_y + row * self.pixel_height,
        )
    }

    /// Transform of a sub-window whose top-left pixel is `(col0, row0)`.
    pub fn translated(&self, col0: i64, row0: i64) -> Self {
        let (origin_x, origin_y) = self.pixel_to_world(col0 as f64, row0 as f64);
        Self {
            origin_x,
            origin_y,
            ..*self
        }
    }

    /// True when every parameter agrees within `rel_tol`, measured relative to the
    /// larger magnitude of the pair (origins also relative to the pixel size).
    pub fn approx_eq(&self, other: &GeoTransform, rel_tol: f64) -> bool {
        let close = |a: f64, b: f64, floor: f64| {
            let scale = a.abs().max(b.abs()).max(floor);
            (a - b).abs() <= rel_tol * scale
        };
        let px = self.pixel_width.abs().max(other.pixel_width.abs());
        let py = self.pixel_height.abs().max(other.pixel_height.abs());
        close(self.pixel_width, other.pixel_width, 0.0)
            && close(self.pixel_height, other.pixel_height, 0.0)
            && close(self.origin_x, other.origin_x, px)
            && close(self.origin_y, other.origin_y, py)
    }
}

/// Multi-channel sample grid, row-major and band-interleaved by pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct Raster {
    width: u32,
    height: u32,
    channels: u16,
    bit_depth: BitDepth,
    samples: Vec<u16>,
    pub geotransform: Option<GeoTransform>,
    /// Raw GeoKeyDirectory contents, kept only to compare coordinate systems across inputs.
    pub crs_keys: Option<Vec<u16>>,
}

impl Raster {
    pub fn new(
        width: u32,
        height: u32,
        channels: u16,
        bit_depth: BitDepth,
        samples: Vec<u16>,
    ) -> Result<Self, GeoError> {
        if channels == 0 {
            return Err(GeoError::InvalidRaster("zero channels".into()));
        }
        let expected = width as usize * height as usize * channels as usize;
        if samples.len() != expected {
            return Err(GeoError::InvalidRaster(format!(
                "{} samples for {width}x{height}x{channels}",
                samples.len()
            )));
        }
        let max = bit_depth.max_value();
        if let Some(v) = samples.iter().find(|&&v| v > max) {
            return Err(GeoError::InvalidRaster(format!(
                "sample {v} exceeds {}-bit range",
                bit_depth.bits()
            )));
        }
        Ok(Self {
            width,
            height,
            channels,
            bit_depth,
            samples,
            geotransform: None,
            crs_keys: None,
        })
    }

    pub fn zeros(width: u32, height: u32, channels: u16, bit_depth: BitDepth) -> Self {
        Self {
            width,
            height,
            channels: channels.max(1),
            bit_depth,
            samples: vec![0; width as usize * height as usize * channels.max(1) as usize],
            geotransform: None,
            crs_keys: None,
        }
    }

    pub fn with_geotransform(mut self, gt: Option<GeoTransform>) -> Self {
        self.geotransform = gt;
        self
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn channels(&self) -> u16 {
        self.channels
    }

    pub fn bit_depth(&self) -> BitDepth {
        self.bit_depth
    }

    pub fn samples(&self) -> &[u16] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<u16> {
        self.samples
    }

    pub fn pixel_count(&self) -> usize {
        self.width as usize * self.height as usize
    }

    #[inline]
    pub fn get(&self, col: u32, row: u32, channel: u16) -> u16 {
        self.samples[self.index(col, row, channel)]
    }

    /// Panics if the value exceeds the raster's bit depth.
    #[inline]
    pub fn set(&mut self, col: u32, row: u32, channel: u16, value: u16) {
        assert!(value <= self.bit_depth.max_value());
        let idx = self.index(col, row, channel);
        self.samples[idx] = value;
    }

    #[inline]
    fn index(&self, col: u32, row: u32, channel: u16) -> usize {
        debug_assert!(col < self.width && row < self.height && channel < self.channels);
        (row as usize * self.width as usize + col as usize) * self.channels as usize
            + channel as usize
    }

    /// Keeps only the listed channels, in the listed order.
    pub fn select_channels(&self, channels: &[u16]) -> Result<Raster, GeoError> {
        if channels.is_empty() {
            return Err(GeoError::InvalidRaster("empty channel selection".into()));
        }
        if let Some(&bad) = channels.iter().find(|&&c| c >= self.channels) {
            return Err(GeoError::InvalidRaster(format!(
                "channel {bad} out of range for {}-channel raster",
                self.channels
            )));
        }
        let n = self.channels as usize;
        let mut samples = Vec::with_capacity(self.pixel_count() * channels.len());
        for px in self.samples.chunks_exact(n) {
            samples.extend(channels.iter().map(|&c| px[c as usize]));
        }
        Ok(Raster {
            channels: channels.len() as u16,
            samples,
            ..self.clone()
        })
    }

    /// Single-channel label values as `u32`, row-major.
    pub fn labels(&self) -> Result<Vec<u32>, GeoError> {
        if self.channels != 1 {
            return Err(GeoError::InvalidRaster(format!(
                "expected a single-channel label raster, found {} channels",
                self.channels
            )));
        }
        Ok(self.samples.iter().map(|&v| v as u32).collect())
    }
}
