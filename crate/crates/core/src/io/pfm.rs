//! PFM (portable float map) reader/writer.
//!
//! Color maps use the `PF` header; grayscale `Pf` files are accepted on
//! read and expanded to three channels. The scale line's sign encodes
//! endianness (negative = little-endian). Scanlines are stored bottom-up.

use std::io::{Read, Write};
use std::path::Path;

use super::CodecError;
use crate::img::HdrImage;

const FORMAT: &str = "pfm";

pub fn write_pfm(path: &Path, img: &HdrImage) -> Result<(), CodecError> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    write!(out, "PF\n{} {}\n-1.0\n", img.width(), img.height())?;
    let (w, h) = (img.width(), img.height());
    let mut row = Vec::with_capacity(w * 12);
    for y in (0..h).rev() {
        row.clear();
        for x in 0..w {
            for v in img.pixel(x, y) {
                row.extend_from_slice(&v.to_le_bytes());
            }
        }
        out.write_all(&row)?;
    }
    Ok(())
}

struct HeaderScan<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl HeaderScan<'_> {
    fn token(&mut self, what: &str) -> Result<String, CodecError> {
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        let start = self.pos;
        while self.pos < self.bytes.len() && !self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(CodecError::malformed(
                FORMAT,
                start as u64,
                format!("missing {what}"),
            ));
        }
        Ok(String::from_utf8_lossy(&self.bytes[start..self.pos]).into_owned())
    }
}

pub fn read_pfm(path: &Path) -> Result<HdrImage, CodecError> {
    let bytes = std::fs::read(path)?;
    let mut scan = HeaderScan {
        bytes: &bytes,
        pos: 0,
    };

    let magic = scan.token("magic")?;
    let channels = match magic.as_str() {
        "PF" => 3usize,
        "Pf" => 1,
        other => {
            return Err(CodecError::malformed(
                FORMAT,
                0,
                format!("bad magic '{other}', expected PF or Pf"),
            ))
        }
    };
    let w: usize = scan
        .token("width")?
        .parse()
        .map_err(|e| CodecError::malformed(FORMAT, scan.pos as u64, format!("width: {e}")))?;
    let h: usize = scan
        .token("height")?
        .parse()
        .map_err(|e| CodecError::malformed(FORMAT, scan.pos as u64, format!("height: {e}")))?;
    let scale: f32 = scan
        .token("scale")?
        .parse()
        .map_err(|e| CodecError::malformed(FORMAT, scan.pos as u64, format!("scale: {e}")))?;
    if scale == 0.0 || !scale.is_finite() {
        return Err(CodecError::malformed(
            FORMAT,
            scan.pos as u64,
            "scale must be nonzero",
        ));
    }
    let little_endian = scale < 0.0;
    let mut pos = scan.pos;
    // exactly one whitespace byte separates header and payload
    if pos >= bytes.len() {
        return Err(CodecError::malformed(FORMAT, pos as u64, "truncated header"));
    }
    pos += 1;

    let expected = w * h * channels * 4;
    if bytes.len() - pos < expected {
        return Err(CodecError::malformed(
            FORMAT,
            pos as u64,
            format!(
                "payload too short: need {expected} bytes, have {}",
                bytes.len() - pos
            ),
        ));
    }
    let payload = &bytes[pos..pos + expected];
    let mut reader = payload;
    let mut read_f32 = || -> f32 {
        let mut buf = [0u8; 4];
        reader.read_exact(&mut buf).expect("length checked");
        if little_endian {
            f32::from_le_bytes(buf)
        } else {
            f32::from_be_bytes(buf)
        }
    };

    let plane = w * h;
    let mut data = vec![0.0f32; plane * 3];
    for y_up in 0..h {
        let y = h - 1 - y_up; // bottom-up storage
        for x in 0..w {
            if channels == 3 {
                for (c, item) in (0..3).enumerate() {
                    let _ = item;
                    data[c * plane + y * w + x] = read_f32();
                }
            } else {
                let v = read_f32();
                for c in 0..3 {
                    data[c * plane + y * w + x] = v;
                }
            }
        }
    }
    // the absolute scale factor rescales samples; 1.0 is the common case
    let s = scale.abs();
    if (s - 1.0).abs() > 1e-9 {
        for v in &mut data {
            *v *= s;
        }
    }
    for v in &mut data {
        if !v.is_finite() || *v < 0.0 {
            *v = v.max(0.0);
            if !v.is_finite() {
                *v = 0.0;
            }
        }
    }
    Ok(HdrImage::new(w, h, data)?)
}
