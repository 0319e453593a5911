use std::io::Cursor;

use super::{BitDepth, GeoError, Raster};

pub(crate) const PNG_SIGNATURE: &[u8] = &[0x89, b'P', b'N', b'G', b'\r', b'\n', 0x1a, b'\n'];

/// 8-bit grayscale or truecolor, non-interlaced.
pub(crate) fn encode_png(raster: &Raster) -> Result<Vec<u8>, GeoError> {
    if raster.bit_depth() != BitDepth::Eight {
        return Err(GeoError::UnsupportedCombination(format!(
            "png8 needs 8-bit samples, raster is {}-bit",
            raster.bit_depth().bits()
        )));
    }
    let color = match raster.channels() {
        1 => png::ColorType::Grayscale,
        3 => png::ColorType::Rgb,
        n => {
            return Err(GeoError::UnsupportedCombination(format!(
                "png8 needs 1 or 3 channels, raster has {n}"
            )))
        }
    };
    if raster.width() == 0 || raster.height() == 0 {
        return Err(GeoError::UnsupportedCombination(
            "png cannot hold an empty image".into(),
        ));
    }
    let data: Vec<u8> = raster.samples().iter().map(|&v| v as u8).collect();
    let mut out = Vec::new();
    {
        let mut encoder = png::Encoder::new(&mut out, raster.width(), raster.height());
        encoder.set_color(color);
        encoder.set_depth(png::BitDepth::Eight);
        let mut writer = encoder
            .write_header()
            .map_err(|e| GeoError::CorruptFile(format!("png encode: {e}")))?;
        writer
            .write_image_data(&data)
            .map_err(|e| GeoError::CorruptFile(format!("png encode: {e}")))?;
    }
    Ok(out)
}

pub(crate) fn decode_png(bytes: &[u8]) -> Result<Raster, GeoError> {
    let decoder = png::Decoder::new(Cursor::new(bytes));
    let mut reader = decoder
        .read_info()
        .map_err(|e| GeoError::CorruptFile(format!("png: {e}")))?;
    let (color, depth) = reader.output_color_type();
    let channels: u16 = match color {
        png::ColorType::Grayscale => 1,
        png::ColorType::GrayscaleAlpha => 2,
        png::ColorType::Rgb => 3,
        png::ColorType::Rgba => 4,
        png::ColorType::Indexed => return Err(GeoError::UnsupportedFormat("paletted png".into())),
    };
    let bit_depth = match depth {
        png::BitDepth::Eight => BitDepth::Eight,
        png::BitDepth::Sixteen => BitDepth::Sixteen,
        other => {
            return Err(GeoError::UnsupportedFormat(format!(
                "png bit depth {other:?}"
            )))
        }
    };
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| GeoError::CorruptFile("png too large".into()))?;
    let mut buf = vec![0u8; size];
    let info = reader
        .next_frame(&mut buf)
        .map_err(|e| GeoError::CorruptFile(format!("png: {e}")))?;
    buf.truncate(info.buffer_size());
    let samples: Vec<u16> = match bit_depth {
        BitDepth::Eight => buf.iter().map(|&b| b as u16).collect(),
        BitDepth::Sixteen => buf
            .chunks_exact(2)
            .map(|c| u16::from_be_bytes([c[0], c[1]]))
            .collect(),
    };
    Raster::new(info.width, info.height, channels, bit_depth, samples)
}
