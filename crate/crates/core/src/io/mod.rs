//! File codecs and preview rendering: Radiance RGBE, PFM, 8-bit PNG, the
//! Drago log tone mapper and exposure-stack previews.

pub mod pfm;
pub mod png;
pub mod preview;
pub mod rgbe;

use std::path::Path;

use thiserror::Error;

use crate::img::{HdrImage, ImageError};

#[derive(Debug, Error)]
pub enum CodecError {
    #[error("{format} at byte {offset}: {reason}")]
    Malformed {
        format: &'static str,
        offset: u64,
        reason: String,
    },
    #[error("unsupported {format} feature: {reason}")]
    Unsupported {
        format: &'static str,
        reason: String,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Image(#[from] ImageError),
    #[error("png/jpeg codec: {0}")]
    EightBit(String),
}

impl CodecError {
    pub(crate) fn malformed(format: &'static str, offset: u64, reason: impl Into<String>) -> Self {
        CodecError::Malformed {
            format,
            offset,
            reason: reason.into(),
        }
    }
}

/// Read an HDR image by extension: `.hdr`/`.pic` as RGBE, `.pfm` as PFM.
pub fn read_hdr_auto(path: &Path) -> Result<HdrImage, CodecError> {
    match path
        .extension()
        .and_then(|e| e.to_str())
        .map(|e| e.to_ascii_lowercase())
        .as_deref()
    {
        Some("pfm") => pfm::read_pfm(path),
        _ => rgbe::read_hdr(path),
    }
}

/// Write an HDR image by extension, defaulting to RGBE.
pub fn write_hdr_auto(path: &Path, img: &HdrImage) -> Result<(), CodecError> {
    match path
        .extension()
        .and_then(|e| e.to_str())
        .map(|e| e.to_ascii_lowercase())
        .as_deref()
    {
        Some("pfm") => pfm::write_pfm(path, img),
        _ => rgbe::write_hdr(path, img),
    }
}
