//! PNG raster I/O.
//!
//! Images are single-channel 8- or 16-bit PNGs normalized to [0, 1] on load
//! (value / max-representable) and written as 16-bit grayscale. Masks are
//! 8-bit grayscale PNGs whose pixel values are the labels verbatim.
//! Difference renders are 8-bit RGB.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use png::{BitDepth, ColorType, Decoder, Encoder};
use ribreg_core::grid::{Image, LabelMask, LabelSemantics};

use crate::error::{CliError, Result};

fn format_err(path: &Path, message: impl Into<String>) -> CliError {
    CliError::Format {
        path: path.to_path_buf(),
        message: message.into(),
    }
}

struct Frame {
    width: usize,
    height: usize,
    depth: BitDepth,
    data: Vec<u8>,
}

fn read_gray_frame(path: &Path) -> Result<Frame> {
    let file = File::open(path).map_err(|source| CliError::Read {
        path: path.to_path_buf(),
        source,
    })?;
    let decoder = Decoder::new(BufReader::new(file));
    let mut reader = decoder
        .read_info()
        .map_err(|e| format_err(path, e.to_string()))?;
    let mut buf = vec![0u8; reader.output_buffer_size().unwrap_or(0)];
    let info = reader
        .next_frame(&mut buf)
        .map_err(|e| format_err(path, e.to_string()))?;
    if info.color_type != ColorType::Grayscale {
        return Err(format_err(path, "expected a single-channel grayscale PNG"));
    }
    buf.truncate(info.buffer_size());
    Ok(Frame {
        width: info.width as usize,
        height: info.height as usize,
        depth: info.bit_depth,
        data: buf,
    })
}

/// Loads an 8- or 16-bit grayscale PNG as an intensity image in [0, 1].
pub fn load_image(path: &Path) -> Result<Image> {
    let frame = read_gray_frame(path)?;
    let n = frame.width * frame.height;
    let data: Vec<f64> = match frame.depth {
        BitDepth::Eight => frame.data.iter().map(|&v| v as f64 / 255.0).collect(),
        BitDepth::Sixteen => {
            if frame.data.len() != 2 * n {
                return Err(format_err(path, "truncated 16-bit PNG payload"));
            }
            frame
                .data
                .chunks_exact(2)
                .map(|c| u16::from_be_bytes([c[0], c[1]]) as f64 / 65535.0)
                .collect()
        }
        other => {
            return Err(format_err(
                path,
                format!("unsupported bit depth {other:?} (need 8 or 16)"),
            ))
        }
    };
    Image::new(frame.width, frame.height, data).map_err(|e| format_err(path, e.to_string()))
}

/// Writes an intensity image as a 16-bit grayscale PNG
/// (sample = round(value * 65535)).
pub fn save_image(path: &Path, img: &Image) -> Result<()> {
    let mut bytes = Vec::with_capacity(img.data().len() * 2);
    for &v in img.data() {
        let q = (v * 65535.0).round() as u16;
        bytes.extend_from_slice(&q.to_be_bytes());
    }
    write_png(
        path,
        img.width() as u32,
        img.height() as u32,
        ColorType::Grayscale,
        BitDepth::Sixteen,
        &bytes,
    )
}

/// Loads an 8-bit grayscale PNG as a label mask; pixel values are labels.
pub fn load_mask(path: &Path, semantics: LabelSemantics) -> Result<LabelMask> {
    let frame = read_gray_frame(path)?;
    if frame.depth != BitDepth::Eight {
        return Err(format_err(path, "masks must be 8-bit grayscale PNGs"));
    }
    LabelMask::new(frame.width, frame.height, frame.data, semantics)
        .map_err(|e| format_err(path, e.to_string()))
}

/// Writes a label mask as an 8-bit grayscale PNG; pixel values are labels.
pub fn save_mask(path: &Path, mask: &LabelMask) -> Result<()> {
    write_png(
        path,
        mask.width() as u32,
        mask.height() as u32,
        ColorType::Grayscale,
        BitDepth::Eight,
        mask.labels(),
    )
}

/// Writes an 8-bit RGB PNG.
pub fn save_rgb(path: &Path, width: usize, height: usize, pixels: &[[u8; 3]]) -> Result<()> {
    let mut bytes = Vec::with_capacity(pixels.len() * 3);
    for p in pixels {
        bytes.extend_from_slice(p);
    }
    write_png(
        path,
        width as u32,
        height as u32,
        ColorType::Rgb,
        BitDepth::Eight,
        &bytes,
    )
}

/// Writes raw u16 samples as a 16-bit grayscale PNG (used for the affine
/// signed-difference encoding).
pub fn save_gray16(path: &Path, width: usize, height: usize, samples: &[u16]) -> Result<()> {
    let mut bytes = Vec::with_capacity(samples.len() * 2);
    for &s in samples {
        bytes.extend_from_slice(&s.to_be_bytes());
    }
    write_png(
        path,
        width as u32,
        height as u32,
        ColorType::Grayscale,
        BitDepth::Sixteen,
        &bytes,
    )
}

fn write_png(
    path: &Path,
    width: u32,
    height: u32,
    color: ColorType,
    depth: BitDepth,
    bytes: &[u8],
) -> Result<()> {
    let file = File::create(path).map_err(|source| CliError::Write {
        path: path.to_path_buf(),
        source,
    })?;
    let mut encoder = Encoder::new(BufWriter::new(file), width, height);
    encoder.set_color(color);
    encoder.set_depth(depth);
    let mut writer = encoder
        .write_header()
        .map_err(|e| format_err(path, e.to_string()))?;
    writer
        .write_image_data(bytes)
        .map_err(|e| format_err(path, e.to_string()))?;
    Ok(())
}
