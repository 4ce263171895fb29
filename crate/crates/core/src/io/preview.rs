//! Display previews: the Drago adaptive logarithmic tone mapper and
//! multi-exposure LDR stacks rendered through the imaging pipeline.

use std::path::{Path, PathBuf};

use super::CodecError;
use crate::crf::ResponseCurve;
use crate::img::{HdrImage, LdrImage};
use crate::pipeline::{apply_crf, clip_dynamic_range, quantize8};

/// Exposure set used for the default preview stack.
pub const DEFAULT_PREVIEW_EXPOSURES: [f32; 5] = [0.01, 0.1, 1.0, 4.0, 8.0];

/// Drago logarithmic tone mapping on luminance with color ratios preserved.
/// `bias` steers the log base interpolation; 0.85 is the usual default.
/// The maximum-luminance pixel maps exactly to the display maximum.
pub fn drago_tonemap(h: &HdrImage, bias: f32) -> LdrImage {
    let bias = bias.clamp(1e-4, 0.9999);
    let lum = h.luminance();
    let l_max = lum.iter().copied().fold(0.0f32, f32::max);
    let (w, ht) = (h.width(), h.height());
    if l_max <= 0.0 {
        return LdrImage::new_unchecked(w, ht, vec![0.0; w * ht * 3], false);
    }
    let plane = w * ht;
    let prefactor = 1.0 / (l_max + 1.0).log10();
    let bias_exp = bias.ln() / 0.5f32.ln();
    let mut data = vec![0.0f32; plane * 3];
    for i in 0..plane {
        let lw = lum[i];
        if lw <= 0.0 {
            continue;
        }
        let denom = (2.0 + 8.0 * (lw / l_max).powf(bias_exp)).ln();
        let ld = prefactor * (lw + 1.0).ln() / denom;
        let ratio = ld / lw;
        for c in 0..3 {
            data[c * plane + i] = (h.data()[c * plane + i] * ratio).clamp(0.0, 1.0);
        }
    }
    LdrImage::new_unchecked(w, ht, data, false)
}

/// Render `Q(F(C(H * t)))` for each exposure and write 8-bit PNGs.
/// Returns the written paths in exposure order.
pub fn exposure_stack_preview(
    h: &HdrImage,
    exposures: &[f32],
    curve: &ResponseCurve,
    out_dir: &Path,
) -> Result<Vec<PathBuf>, CodecError> {
    std::fs::create_dir_all(out_dir)?;
    let mut paths = Vec::with_capacity(exposures.len());
    for (i, &t) in exposures.iter().enumerate() {
        let ldr = quantize8(&apply_crf(&clip_dynamic_range(&h.scaled(t)), curve));
        let path = out_dir.join(format!("exposure_{i:02}_t{t}.png"));
        super::png::write_ldr_png(&path, &ldr)?;
        paths.push(path);
    }
    Ok(paths)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn drago_output_in_unit_range() {
        let img = HdrImage::new(2, 2, (0..12).map(|i| i as f32 * 2.0).collect()).unwrap();
        let out = drago_tonemap(&img, 0.85);
        assert!(out.data().iter().all(|&v| (0.0..=1.0).contains(&v)));
    }

    #[test]
    fn drago_peak_maps_to_display_max() {
        // At L_w = L_wmax the two logs cancel: ln(L+1)/ln(10) / log10(L+1) = 1.
        let mut data = vec![1.0f32; 4 * 3];
        data[0] = 50.0;
        data[4] = 50.0;
        data[8] = 50.0; // pixel 0 is gray with luminance 50
        let img = HdrImage::new(2, 2, data).unwrap();
        let out = drago_tonemap(&img, 0.85);
        let peak = out.pixel(0, 0);
        assert!((peak[0] - 1.0).abs() < 1e-5, "{peak:?}");
    }

    #[test]
    fn drago_monotone_in_luminance() {
        let levels: Vec<f32> = (1..=64).map(|i| i as f32 * 0.5).collect();
        let n = levels.len();
        let mut data = Vec::new();
        for _ in 0..3 {
            data.extend_from_slice(&levels);
        }
        let img = HdrImage::new(n, 1, data).unwrap();
        let out = drago_tonemap(&img, 0.85);
        for x in 1..n {
            assert!(out.pixel(x, 0)[0] >= out.pixel(x - 1, 0)[0]);
        }
    }

    #[test]
    fn drago_zero_image_stays_zero() {
        let img = HdrImage::zeros(3, 3);
        let out = drago_tonemap(&img, 0.85);
        assert!(out.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn stack_is_monotone_in_exposure() {
        let dir = tempfile::tempdir().unwrap();
        let img = HdrImage::new(4, 4, (0..48).map(|i| i as f32 / 12.0).collect()).unwrap();
        let curve = ResponseCurve::gamma(2.2);
        let paths =
            exposure_stack_preview(&img, &DEFAULT_PREVIEW_EXPOSURES, &curve, dir.path()).unwrap();
        assert_eq!(paths.len(), 5);
        let mut prev: Option<LdrImage> = None;
        for p in &paths {
            let ldr = super::super::png::read_ldr(p).unwrap();
            if let Some(prev) = &prev {
                for (a, b) in prev.data().iter().zip(ldr.data()) {
                    assert!(b >= a, "stack not monotone");
                }
            }
            prev = Some(ldr);
        }
    }

    #[test]
    fn small_exposure_avoids_saturation() {
        let img = HdrImage::new(2, 2, vec![10.0; 12]).unwrap();
        let t = 0.01;
        let ldr = quantize8(&apply_crf(
            &clip_dynamic_range(&img.scaled(t)),
            &ResponseCurve::identity(),
        ));
        assert!(ldr.data().iter().all(|&v| v < 1.0));
    }
}
