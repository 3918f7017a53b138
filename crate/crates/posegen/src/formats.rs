//! Depth-map files, PNG images and the JSON interchange files for pose,
//! shape and camera.
//!
//! Depth `.bin`: `u32` width, `u32` height (little-endian), then
//! `width * height` little-endian `f32` values, row-major.
//!
//! Depth `.png`: 16-bit grayscale, `round(d * 65535 / d_max)`; an
//! all-background map is stored as zeros.

use std::io::Cursor;
use std::path::Path;

use posegen_core::DepthMap;
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::gateway::ImageBuffer;
use crate::{Error, Result};

pub fn depth_to_bin(d: &DepthMap) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + 4 * d.data.len());
    out.extend_from_slice(&d.width.to_le_bytes());
    out.extend_from_slice(&d.height.to_le_bytes());
    for v in &d.data {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn depth_from_bin(bytes: &[u8]) -> Result<DepthMap> {
    if bytes.len() < 8 {
        return Err(Error::Format("depth file shorter than its 8-byte header".into()));
    }
    let w = u32::from_le_bytes(bytes[0..4].try_into().unwrap());
    let h = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    let n = w as usize * h as usize;
    if bytes.len() != 8 + 4 * n {
        return Err(Error::Format(format!(
            "depth file declares {w}x{h} ({} bytes of data) but has {}",
            4 * n,
            bytes.len() - 8
        )));
    }
    let data = bytes[8..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok(DepthMap::new(w, h, data)?)
}

pub fn write_depth_bin(d: &DepthMap, path: &Path) -> Result<()> {
    std::fs::write(path, depth_to_bin(d)).map_err(|e| Error::io(path, e))
}

pub fn read_depth_bin(path: &Path) -> Result<DepthMap> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    depth_from_bin(&bytes).map_err(|e| e.context(path))
}

/// 16-bit samples `round(d * 65535 / d_max)`.
pub fn depth_png_samples(d: &DepthMap) -> Vec<u16> {
    let max = d.max_depth() as f64;
    d.data
        .iter()
        .map(|&v| if max > 0.0 { (v as f64 * 65535.0 / max).round() as u16 } else { 0 })
        .collect()
}

pub fn depth_to_png(d: &DepthMap) -> Result<Vec<u8>> {
    let bytes: Vec<u8> = depth_png_samples(d).iter().flat_map(|s| s.to_be_bytes()).collect();
    encode_png(d.width, d.height, png::ColorType::Grayscale, png::BitDepth::Sixteen, &bytes)
}

pub fn write_depth_png(d: &DepthMap, path: &Path) -> Result<()> {
    std::fs::write(path, depth_to_png(d)?).map_err(|e| Error::io(path, e))
}

/// Writes `.png` as the 16-bit visualisation and anything else as `.bin`.
pub fn write_depth(d: &DepthMap, path: &Path) -> Result<()> {
    match path.extension().and_then(|e| e.to_str()) {
        Some(ext) if ext.eq_ignore_ascii_case("png") => write_depth_png(d, path),
        _ => write_depth_bin(d, path),
    }
}

fn encode_png(width: u32, height: u32, color: png::ColorType, depth: png::BitDepth, data: &[u8]) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    {
        let mut enc = png::Encoder::new(&mut out, width, height);
        enc.set_color(color);
        enc.set_depth(depth);
        let mut writer = enc.write_header().map_err(|e| Error::Format(format!("png: {e}")))?;
        writer
            .write_image_data(data)
            .map_err(|e| Error::Format(format!("png: {e}")))?;
    }
    Ok(out)
}

pub fn image_to_png(img: &ImageBuffer) -> Result<Vec<u8>> {
    encode_png(img.width, img.height, png::ColorType::Rgb, png::BitDepth::Eight, &img.data)
}

/// Decodes any 8- or 16-bit PNG into RGB8; alpha is dropped, gray is
/// replicated.
pub fn image_from_png(bytes: &[u8]) -> Result<ImageBuffer> {
    let mut dec = png::Decoder::new(Cursor::new(bytes));
    dec.set_transformations(png::Transformations::EXPAND | png::Transformations::STRIP_16);
    let mut reader = dec.read_info().map_err(|e| Error::Format(format!("png: {e}")))?;
    let mut buf = vec![0; reader.output_buffer_size()];
    let info = reader.next_frame(&mut buf).map_err(|e| Error::Format(format!("png: {e}")))?;
    let buf = &buf[..info.buffer_size()];
    let (w, h) = (info.width, info.height);
    let data: Vec<u8> = match info.color_type {
        png::ColorType::Rgb => buf.to_vec(),
        png::ColorType::Rgba => buf.chunks_exact(4).flat_map(|p| [p[0], p[1], p[2]]).collect(),
        png::ColorType::Grayscale => buf.iter().flat_map(|&g| [g, g, g]).collect(),
        png::ColorType::GrayscaleAlpha => buf.chunks_exact(2).flat_map(|p| [p[0], p[0], p[0]]).collect(),
        png::ColorType::Indexed => return Err(Error::Format("png: unexpanded palette image".into())),
    };
    ImageBuffer::new(w, h, data).map_err(Error::from)
}

pub fn read_image(path: &Path) -> Result<ImageBuffer> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    image_from_png(&bytes).map_err(|e| e.context(path))
}

pub fn write_image(img: &ImageBuffer, path: &Path) -> Result<()> {
    std::fs::write(path, image_to_png(img)?).map_err(|e| Error::io(path, e))
}

/// Reads a JSON document, naming the file in errors.
pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::from(e).context(path))
}

pub fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}
