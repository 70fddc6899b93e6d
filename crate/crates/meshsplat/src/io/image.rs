//! 8-bit sRGB PNG in and out of linear [0,1] f64 planes.

use crate::error::{Error, Result};
use std::path::Path;

/// sRGB electro-optical transfer: code value in [0,1] to linear.
pub fn srgb_to_linear(s: f64) -> f64 {
    if s <= 0.04045 {
        s / 12.92
    } else {
        ((s + 0.055) / 1.055).powf(2.4)
    }
}

/// Inverse transfer: linear [0,1] to sRGB code value.
pub fn linear_to_srgb(l: f64) -> f64 {
    if l <= 0.003_130_8 {
        12.92 * l
    } else {
        1.055 * l.powf(1.0 / 2.4) - 0.055
    }
}

pub fn srgb_u8_to_linear(v: u8) -> f64 {
    srgb_to_linear(v as f64 / 255.0)
}

/// Clamps out-of-range linear values before encoding.
pub fn linear_to_srgb_u8(l: f64) -> u8 {
    (linear_to_srgb(l.clamp(0.0, 1.0)) * 255.0).round() as u8
}

/// Decodes a PNG to interleaved linear RGB.
pub fn load_png_linear(path: &Path) -> Result<(u32, u32, Vec<f64>)> {
    let img = image::open(path)
        .map_err(|e| Error::format(path, format!("png decode: {e}")))?
        .to_rgb8();
    let (w, h) = img.dimensions();
    let rgb = img.as_raw().iter().map(|&v| srgb_u8_to_linear(v)).collect();
    Ok((w, h, rgb))
}

/// Encodes interleaved linear RGB to an 8-bit sRGB PNG.
pub fn save_png_linear(path: &Path, rgb: &[f64], width: u32, height: u32) -> Result<()> {
    if rgb.len() != 3 * (width * height) as usize {
        return Err(Error::Invalid(format!(
            "image buffer length {} does not match {width}x{height}",
            rgb.len()
        )));
    }
    let bytes: Vec<u8> = rgb.iter().map(|&v| linear_to_srgb_u8(v)).collect();
    let img = image::RgbImage::from_raw(width, height, bytes).expect("sized buffer");
    img.save(path).map_err(|e| Error::format(path, format!("png encode: {e}")))
}
