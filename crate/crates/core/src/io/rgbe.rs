//! Radiance RGBE (.hdr) codec: shared-exponent pixels with new-style RLE
//! scanlines. The reader also understands flat scanlines and the old
//! (1,1,1,count) repeat markers; the writer emits new-style RLE whenever
//! the width allows it (8..32767), flat otherwise.

use std::io::Write;
use std::path::Path;

use super::CodecError;
use crate::img::HdrImage;

const FORMAT: &str = "rgbe";
const MIN_RUN: usize = 4;

/// Shared-exponent encoding: the largest channel picks the exponent, all
/// mantissas are floor-quantized against it.
pub fn encode_rgbe(rgb: [f32; 3]) -> [u8; 4] {
    let max = rgb[0].max(rgb[1]).max(rgb[2]);
    if max < 1e-32 {
        return [0, 0, 0, 0];
    }
    // frexp: max = m * 2^e with m in [0.5, 1)
    let mut e = ((max.to_bits() >> 23) & 0xFF) as i32 - 126;
    if e < -127 {
        return [0, 0, 0, 0];
    }
    if e > 127 {
        e = 127;
    }
    let scale = (2.0f32).powi(-e) * 256.0;
    let q = |v: f32| ((v * scale) as u32).min(255) as u8;
    [q(rgb[0]), q(rgb[1]), q(rgb[2]), (e + 128) as u8]
}

/// Decode at the quantization bin center, which makes re-encoding
/// byte-stable for canonical pixels.
pub fn decode_rgbe(p: [u8; 4]) -> [f32; 3] {
    if p[3] == 0 {
        return [0.0; 3];
    }
    let f = (2.0f32).powi(p[3] as i32 - 128) / 256.0;
    [
        (p[0] as f32 + 0.5) * f,
        (p[1] as f32 + 0.5) * f,
        (p[2] as f32 + 0.5) * f,
    ]
}

pub fn write_hdr(path: &Path, img: &HdrImage) -> Result<(), CodecError> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    write!(
        out,
        "#?RADIANCE\nFORMAT=32-bit_rle_rgbe\n\n-Y {} +X {}\n",
        img.height(),
        img.width()
    )?;
    let w = img.width();
    let rle = (8..32768).contains(&w);
    let mut row = vec![[0u8; 4]; w];
    for y in 0..img.height() {
        for (x, px) in row.iter_mut().enumerate() {
            *px = encode_rgbe(img.pixel(x, y));
        }
        if rle {
            out.write_all(&[2, 2, (w >> 8) as u8, (w & 0xFF) as u8])?;
            let mut comp = vec![0u8; w];
            for c in 0..4 {
                for (x, px) in row.iter().enumerate() {
                    comp[x] = px[c];
                }
                write_rle_component(&mut out, &comp)?;
            }
        } else {
            for px in &row {
                out.write_all(px)?;
            }
        }
    }
    Ok(())
}

fn write_rle_component(out: &mut impl Write, data: &[u8]) -> std::io::Result<()> {
    let len = data.len();
    let mut j = 0;
    while j < len {
        let mut run = 1;
        while run < 127 && j + run < len && data[j + run] == data[j] {
            run += 1;
        }
        if run >= MIN_RUN {
            out.write_all(&[128 + run as u8, data[j]])?;
            j += run;
            continue;
        }
        // literal segment until the next worthwhile run (or 128 bytes)
        let start = j;
        let mut k = j + 1;
        while k < len && k - start < 128 {
            let mut r = 1;
            while r < MIN_RUN && k + r < len && data[k + r] == data[k] {
                r += 1;
            }
            if r >= MIN_RUN {
                break;
            }
            k += 1;
        }
        out.write_all(&[(k - start) as u8])?;
        out.write_all(&data[start..k])?;
        j = k;
    }
    Ok(())
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn byte(&mut self) -> Result<u8, CodecError> {
        let b = *self.bytes.get(self.pos).ok_or_else(|| {
            CodecError::malformed(FORMAT, self.pos as u64, "unexpected end of file")
        })?;
        self.pos += 1;
        Ok(b)
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], CodecError> {
        if self.pos + n > self.bytes.len() {
            return Err(CodecError::malformed(
                FORMAT,
                self.pos as u64,
                format!("need {n} more bytes"),
            ));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn line(&mut self) -> Result<String, CodecError> {
        let start = self.pos;
        while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
            self.pos += 1;
        }
        if self.pos >= self.bytes.len() {
            return Err(CodecError::malformed(
                FORMAT,
                start as u64,
                "unterminated header line",
            ));
        }
        let s = String::from_utf8_lossy(&self.bytes[start..self.pos]).into_owned();
        self.pos += 1;
        Ok(s)
    }
}

pub fn read_hdr(path: &Path) -> Result<HdrImage, CodecError> {
    let bytes = std::fs::read(path)?;
    let mut cur = Cursor {
        bytes: &bytes,
        pos: 0,
    };

    let first = cur.line()?;
    if !first.starts_with("#?") {
        return Err(CodecError::malformed(
            FORMAT,
            0,
            format!("missing #? signature, got '{first}'"),
        ));
    }
    loop {
        let line_pos = cur.pos;
        let line = cur.line()?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            break;
        }
        if let Some(fmt) = trimmed.strip_prefix("FORMAT=") {
            if fmt != "32-bit_rle_rgbe" {
                return Err(CodecError::Unsupported {
                    format: FORMAT,
                    reason: format!("pixel format '{fmt}' at byte {line_pos}"),
                });
            }
        }
        // comments, EXPOSURE=, etc. are ignored
    }
    let res_pos = cur.pos;
    let res = cur.line()?;
    let parts: Vec<&str> = res.split_whitespace().collect();
    let (h, w) = match parts.as_slice() {
        ["-Y", h, "+X", w] => (
            h.parse::<usize>().map_err(|e| {
                CodecError::malformed(FORMAT, res_pos as u64, format!("height: {e}"))
            })?,
            w.parse::<usize>().map_err(|e| {
                CodecError::malformed(FORMAT, res_pos as u64, format!("width: {e}"))
            })?,
        ),
        _ => {
            return Err(CodecError::Unsupported {
                format: FORMAT,
                reason: format!("resolution '{res}' (only '-Y h +X w' is supported)"),
            })
        }
    };
    if w == 0 || h == 0 {
        return Err(CodecError::malformed(
            FORMAT,
            res_pos as u64,
            "zero image dimension",
        ));
    }

    let plane = w * h;
    let mut data = vec![0.0f32; plane * 3];
    let mut row = vec![[0u8; 4]; w];
    for y in 0..h {
        read_scanline(&mut cur, &mut row)?;
        for (x, px) in row.iter().enumerate() {
            let rgb = decode_rgbe(*px);
            data[y * w + x] = rgb[0];
            data[plane + y * w + x] = rgb[1];
            data[2 * plane + y * w + x] = rgb[2];
        }
    }
    Ok(HdrImage::new(w, h, data)?)
}

fn read_scanline(cur: &mut Cursor, row: &mut [[u8; 4]]) -> Result<(), CodecError> {
    let w = row.len();
    let start = cur.pos;
    let head: [u8; 4] = cur.take(4)?.try_into().unwrap();
    let is_new_rle =
        head[0] == 2 && head[1] == 2 && ((head[2] as usize) << 8 | head[3] as usize) == w;
    if is_new_rle && (8..32768).contains(&w) {
        for c in 0..4 {
            let mut x = 0usize;
            while x < w {
                let count = cur.byte()?;
                if count > 128 {
                    let run = (count - 128) as usize;
                    if x + run > w {
                        return Err(CodecError::malformed(
                            FORMAT,
                            (cur.pos - 1) as u64,
                            format!("RLE run overflows scanline ({x}+{run} > {w})"),
                        ));
                    }
                    let v = cur.byte()?;
                    for px in row.iter_mut().skip(x).take(run) {
                        px[c] = v;
                    }
                    x += run;
                } else {
                    if count == 0 {
                        return Err(CodecError::malformed(
                            FORMAT,
                            (cur.pos - 1) as u64,
                            "zero RLE literal count",
                        ));
                    }
                    let lit = count as usize;
                    if x + lit > w {
                        return Err(CodecError::malformed(
                            FORMAT,
                            (cur.pos - 1) as u64,
                            format!("RLE literal overflows scanline ({x}+{lit} > {w})"),
                        ));
                    }
                    let vals = cur.take(lit)?;
                    for (i, &v) in vals.iter().enumerate() {
                        row[x + i][c] = v;
                    }
                    x += lit;
                }
            }
        }
        return Ok(());
    }

    // flat pixels, possibly with old-style (1,1,1,count) repeat markers
    cur.pos = start;
    let mut x = 0usize;
    let mut shift = 0u32;
    while x < w {
        let px: [u8; 4] = cur.take(4)?.try_into().unwrap();
        if px[0] == 1 && px[1] == 1 && px[2] == 1 {
            if x == 0 {
                return Err(CodecError::malformed(
                    FORMAT,
                    (cur.pos - 4) as u64,
                    "repeat marker with no previous pixel",
                ));
            }
            let count = (px[3] as usize) << shift;
            if x + count > w {
                return Err(CodecError::malformed(
                    FORMAT,
                    (cur.pos - 4) as u64,
                    format!("repeat overflows scanline ({x}+{count} > {w})"),
                ));
            }
            let prev = row[x - 1];
            for px in row.iter_mut().skip(x).take(count) {
                *px = prev;
            }
            x += count;
            shift += 8;
        } else {
            row[x] = px;
            x += 1;
            shift = 0;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn unit_white_encodes_to_canonical_bytes() {
        // (1,1,1): exponent is 1 (0.5 * 2^1), so the byte is 129 and each
        // mantissa floor(1 * 256 / 2) = 128.
        assert_eq!(encode_rgbe([1.0, 1.0, 1.0]), [128, 128, 128, 129]);
    }

    #[test]
    fn zero_round_trips_exactly() {
        assert_eq!(encode_rgbe([0.0, 0.0, 0.0]), [0, 0, 0, 0]);
        assert_eq!(decode_rgbe([0, 0, 0, 0]), [0.0, 0.0, 0.0]);
    }

    #[test]
    fn relative_precision_within_one_256th() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(21);
        for _ in 0..2000 {
            let rgb = [
                rng.gen_range(1e-6..100.0f32),
                rng.gen_range(1e-6..100.0f32),
                rng.gen_range(1e-6..100.0f32),
            ];
            let dec = decode_rgbe(encode_rgbe(rgb));
            let max = rgb[0].max(rgb[1]).max(rgb[2]);
            for c in 0..3 {
                assert!(
                    (dec[c] - rgb[c]).abs() <= max / 256.0,
                    "{rgb:?} -> {dec:?}"
                );
            }
        }
    }

    fn random_image(seed: u64, w: usize, h: usize) -> HdrImage {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let data = (0..w * h * 3)
            .map(|_| {
                if rng.gen_bool(0.2) {
                    0.0
                } else {
                    rng.gen_range(0.0..8.0)
                }
            })
            .collect();
        HdrImage::new(w, h, data).unwrap()
    }

    #[test]
    fn write_read_write_is_byte_identical() {
        let dir = tempfile::tempdir().unwrap();
        let p1 = dir.path().join("a.hdr");
        let p2 = dir.path().join("b.hdr");
        let img = random_image(3, 33, 9);
        write_hdr(&p1, &img).unwrap();
        let back = read_hdr(&p1).unwrap();
        write_hdr(&p2, &back).unwrap();
        assert_eq!(std::fs::read(&p1).unwrap(), std::fs::read(&p2).unwrap());
    }

    #[test]
    fn rle_handles_constant_rows() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("flat.hdr");
        let img = HdrImage::new(300, 4, vec![0.25; 300 * 4 * 3]).unwrap();
        write_hdr(&path, &img).unwrap();
        let back = read_hdr(&path).unwrap();
        let max = 0.25f32;
        for (a, b) in back.data().iter().zip(img.data()) {
            assert!((a - b).abs() <= max / 256.0);
        }
        // long runs must compress far below flat encoding
        let size = std::fs::read(&path).unwrap().len();
        assert!(size < 300 * 4 * 4 / 2, "no compression: {size} bytes");
    }

    #[test]
    fn narrow_images_use_flat_scanlines() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("narrow.hdr");
        let img = random_image(9, 4, 5);
        write_hdr(&path, &img).unwrap();
        let back = read_hdr(&path).unwrap();
        assert_eq!((back.width(), back.height()), (4, 5));
    }

    #[test]
    fn old_style_repeat_marker() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("old.hdr");
        let mut bytes = b"#?RADIANCE\n\n-Y 1 +X 6\n".to_vec();
        bytes.extend_from_slice(&[128, 64, 32, 129]); // one pixel
        bytes.extend_from_slice(&[1, 1, 1, 5]); // repeat it 5 times
        std::fs::write(&path, bytes).unwrap();
        let img = read_hdr(&path).unwrap();
        let first = img.pixel(0, 0);
        for x in 1..6 {
            assert_eq!(img.pixel(x, 0), first);
        }
    }

    #[test]
    fn malformed_inputs_are_rejected_with_offsets() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.hdr");

        std::fs::write(&path, b"JUNK\n").unwrap();
        let err = read_hdr(&path).unwrap_err();
        assert!(err.to_string().contains("byte 0"), "{err}");

        std::fs::write(&path, b"#?RADIANCE\n\n-Y 2 +X 10\n\x02\x02\x00\x0a\xff").unwrap();
        let err = read_hdr(&path).unwrap_err();
        assert!(err.to_string().contains("byte"), "{err}");

        std::fs::write(&path, b"#?RADIANCE\n\n-X 2 +Y 2\n").unwrap();
        let err = read_hdr(&path).unwrap_err();
        assert!(err.to_string().contains("resolution"), "{err}");
    }
}
