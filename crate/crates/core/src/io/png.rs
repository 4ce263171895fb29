//! Thin PNG helpers over the `image` crate for 8-bit LDR data and masks.

use std::path::Path;

use super::CodecError;
use crate::img::LdrImage;
use crate::mask::Mask;

pub fn write_gray8(path: &Path, width: usize, height: usize, data: &[u8]) -> Result<(), CodecError> {
    image::save_buffer(
        path,
        data,
        width as u32,
        height as u32,
        image::ExtendedColorType::L8,
    )
    .map_err(|e| CodecError::EightBit(e.to_string()))
}

pub fn write_rgb8(path: &Path, width: usize, height: usize, data: &[u8]) -> Result<(), CodecError> {
    image::save_buffer(
        path,
        data,
        width as u32,
        height as u32,
        image::ExtendedColorType::Rgb8,
    )
    .map_err(|e| CodecError::EightBit(e.to_string()))
}

/// Write an LDR image as lossless 8-bit RGB PNG.
pub fn write_ldr_png(path: &Path, img: &LdrImage) -> Result<(), CodecError> {
    write_rgb8(path, img.width(), img.height(), &img.to_rgb8())
}

/// Load an 8-bit LDR image (PNG or JPEG); values land on the 8-bit lattice.
pub fn read_ldr(path: &Path) -> Result<LdrImage, CodecError> {
    let img = image::open(path)
        .map_err(|e| CodecError::EightBit(e.to_string()))?
        .to_rgb8();
    Ok(LdrImage::from_rgb8(
        img.width() as usize,
        img.height() as usize,
        img.as_raw(),
    )?)
}

/// Export a mask as 8-bit grayscale for inspection.
pub fn write_mask_png(path: &Path, mask: &Mask) -> Result<(), CodecError> {
    let bytes: Vec<u8> = mask
        .values()
        .iter()
        .map(|&v| (v * 255.0 + 0.5).floor().clamp(0.0, 255.0) as u8)
        .collect();
    write_gray8(path, mask.width(), mask.height(), &bytes)
}
