//! Forward LDR imaging simulator.
//!
//! Converts a linear radiance map into a display-referred 8-bit image the
//! way a camera would: exposure scaling, dynamic range clipping, camera
//! response, sensor noise, quantization and an optional JPEG round trip.
//! The same stages also expose the supervision targets for training: the
//! clipped "dim" part and the nonnegative "bright" residual above the
//! saturation ceiling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

use crate::crf::{CrfError, CrfSource, ResponseCurve};
use crate::img::{HdrImage, ImageError, LdrImage};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Image(#[from] ImageError),
    #[error(transparent)]
    Crf(#[from] CrfError),
    #[error("noise sigma out of range: sigma_s={sigma_s} (max 0.013), sigma_c={sigma_c} (max 0.005)")]
    NoiseRange { sigma_s: f32, sigma_c: f32 },
    #[error("add_noise expects an unquantized image")]
    NoiseAfterQuantization,
    #[error("JPEG quality {0} outside [85, 100]")]
    BadJpegQuality(u8),
    #[error("exposure count {0} must be >= 2")]
    TooFewExposures(usize),
    #[error("JPEG codec failed: {0}")]
    JpegCodec(String),
}

/// Heteroscedastic sensor noise: variance `I*sigma_s^2 + sigma_c^2`.
#[derive(Debug, Clone, Copy, serde::Serialize, serde::Deserialize)]
pub struct NoiseParams {
    pub sigma_s: f32,
    pub sigma_c: f32,
    pub seed: u64,
}

impl NoiseParams {
    pub const MAX_SIGMA_S: f32 = 0.013;
    pub const MAX_SIGMA_C: f32 = 0.005;

    pub fn new(sigma_s: f32, sigma_c: f32, seed: u64) -> Result<Self, PipelineError> {
        if !(0.0..=Self::MAX_SIGMA_S).contains(&sigma_s)
            || !(0.0..=Self::MAX_SIGMA_C).contains(&sigma_c)
        {
            return Err(PipelineError::NoiseRange { sigma_s, sigma_c });
        }
        Ok(NoiseParams {
            sigma_s,
            sigma_c,
            seed,
        })
    }

    pub fn none() -> Self {
        NoiseParams {
            sigma_s: 0.0,
            sigma_c: 0.0,
            seed: 0,
        }
    }
}

/// Everything the pair synthesizer needs, serializable as the config echo.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    /// Number of exposures sampled uniformly in log2 space.
    pub exposure_count: usize,
    pub exposure_lo_log2: f32,
    pub exposure_hi_log2: f32,
    pub crf_source: CrfSource,
    /// How many leading curves of the source form the training split.
    pub crf_train_count: Option<usize>,
    pub sigma_s_max: f32,
    pub sigma_c_max: f32,
    pub jpeg_enabled: bool,
    pub jpeg_quality_lo: u8,
    pub jpeg_quality_hi: u8,
    pub master_seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            exposure_count: 60,
            exposure_lo_log2: -3.0,
            exposure_hi_log2: 3.0,
            crf_source: CrfSource::GammaFamily { count: 8, seed: 17 },
            crf_train_count: None,
            sigma_s_max: NoiseParams::MAX_SIGMA_S,
            sigma_c_max: NoiseParams::MAX_SIGMA_C,
            jpeg_enabled: false,
            jpeg_quality_lo: 85,
            jpeg_quality_hi: 100,
            master_seed: 0,
        }
    }
}

/// Saturate radiance above the exposure ceiling: `min(H, 1)` per value.
pub fn clip_dynamic_range(h: &HdrImage) -> LdrImage {
    let data = h.data().iter().map(|&v| v.min(1.0)).collect();
    LdrImage::new_unchecked(h.width(), h.height(), data, false)
}

/// The bright remainder `H - min(H, 1)`; zero wherever H <= 1.
pub fn bright_residual(h: &HdrImage) -> HdrImage {
    let data = h.data().iter().map(|&v| (v - 1.0).max(0.0)).collect();
    HdrImage::new(h.width(), h.height(), data).expect("residual of valid map is valid")
}

/// Map linear values through a response curve.
pub fn apply_crf(img: &LdrImage, curve: &ResponseCurve) -> LdrImage {
    let data = img.data().iter().map(|&v| curve.eval(v)).collect();
    LdrImage::new_unchecked(img.width(), img.height(), data, false)
}

/// Round-half-up quantization to the 8-bit lattice: `floor(v*255 + 0.5)/255`.
pub fn quantize8(img: &LdrImage) -> LdrImage {
    let data = img
        .data()
        .iter()
        .map(|&v| (v * 255.0 + 0.5).floor() / 255.0)
        .collect();
    LdrImage::new_unchecked(img.width(), img.height(), data, true)
}

/// Additive heteroscedastic Gaussian noise, clamped back to [0,1].
/// Deterministic for a given seed.
pub fn add_noise(img: &LdrImage, np: &NoiseParams) -> Result<LdrImage, PipelineError> {
    if img.is_quantized() {
        return Err(PipelineError::NoiseAfterQuantization);
    }
    if np.sigma_s == 0.0 && np.sigma_c == 0.0 {
        return Ok(img.clone());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(np.seed);
    let normal = Normal::<f32>::new(0.0, 1.0).expect("unit normal");
    let var_s = np.sigma_s * np.sigma_s;
    let var_c = np.sigma_c * np.sigma_c;
    let data = img
        .data()
        .iter()
        .map(|&v| {
            let sigma = (v * var_s + var_c).sqrt();
            if sigma == 0.0 {
                v
            } else {
                (v + sigma * normal.sample(&mut rng)).clamp(0.0, 1.0)
            }
        })
        .collect();
    Ok(LdrImage::new_unchecked(
        img.width(),
        img.height(),
        data,
        false,
    ))
}

/// Lossy JPEG encode/decode at the given quality. The input must already be
/// on the 8-bit lattice; the output is too.
pub fn jpeg_round_trip(img: &LdrImage, quality: u8) -> Result<LdrImage, PipelineError> {
    if !(85..=100).contains(&quality) {
        return Err(PipelineError::BadJpegQuality(quality));
    }
    let rgb = img.to_rgb8();
    let mut encoded = Vec::new();
    let encoder =
        image::codecs::jpeg::JpegEncoder::new_with_quality(std::io::Cursor::new(&mut encoded), quality);
    image::ImageEncoder::write_image(
        encoder,
        &rgb,
        img.width() as u32,
        img.height() as u32,
        image::ExtendedColorType::Rgb8,
    )
    .map_err(|e| PipelineError::JpegCodec(e.to_string()))?;
    let decoded = image::load_from_memory_with_format(&encoded, image::ImageFormat::Jpeg)
        .map_err(|e| PipelineError::JpegCodec(e.to_string()))?
        .to_rgb8();
    Ok(LdrImage::from_rgb8(
        decoded.width() as usize,
        decoded.height() as usize,
        decoded.as_raw(),
    )?)
}

/// `count` exposures uniform in log2 space over [lo, hi], in linear units.
pub fn sample_exposures(count: usize, lo_log2: f32, hi_log2: f32) -> Result<Vec<f32>, PipelineError> {
    if count < 2 {
        return Err(PipelineError::TooFewExposures(count));
    }
    let step = (hi_log2 - lo_log2) / (count - 1) as f32;
    Ok((0..count)
        .map(|i| (lo_log2 + i as f32 * step).exp2())
        .collect())
}

/// Synthesized training pair: the LDR observation plus supervision targets.
#[derive(Debug, Clone)]
pub struct SynthesizedPair {
    pub ldr: LdrImage,
    /// `C(H*t)`: the clipped exposure, target for the dim part.
    pub dim_target: LdrImage,
    /// `H*t - C(H*t)`: nonnegative residual, target for the bright part.
    pub bright_target: HdrImage,
    /// `F(C(H*t))`: the nonlinear unquantized image, target for variant
    /// training that inverts one pipeline stage at a time.
    pub nonlinear_target: LdrImage,
}

/// Run the full pipeline `jpeg . Q . noise . F . C` on `H*t`.
pub fn synthesize_pair(
    hdr: &HdrImage,
    exposure: f32,
    curve: &ResponseCurve,
    noise: &NoiseParams,
    jpeg_quality: Option<u8>,
) -> Result<SynthesizedPair, PipelineError> {
    let exposed = hdr.scaled(exposure);
    let clipped = clip_dynamic_range(&exposed);
    let bright = bright_residual(&exposed);
    let nonlinear = apply_crf(&clipped, curve);
    let noisy = add_noise(&nonlinear, noise)?;
    let quantized = quantize8(&noisy);
    let ldr = match jpeg_quality {
        Some(q) => jpeg_round_trip(&quantized, q)?,
        None => quantized,
    };
    Ok(SynthesizedPair {
        ldr,
        dim_target: clipped,
        bright_target: bright,
        nonlinear_target: nonlinear,
    })
}

/// Fixed gamma-expansion baseline: `x^2` per pixel.
pub fn naive_expand(ldr: &LdrImage) -> HdrImage {
    let data = ldr.data().iter().map(|&v| v * v).collect();
    HdrImage::new(ldr.width(), ldr.height(), data).expect("square of [0,1] is valid")
}

/// Derive the per-pair RNG stream from the master seed and pair index, so
/// parallel synthesis order cannot change results.
pub fn derive_seed(master: u64, index: u64) -> u64 {
    // splitmix64 step over the combined value
    let mut z = master ^ index.wrapping_mul(0x9E3779B97F4A7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
    z ^ (z >> 31)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn const_hdr(v: f32, w: usize, h: usize) -> HdrImage {
        HdrImage::new(w, h, vec![v; w * h * 3]).unwrap()
    }

    #[test]
    fn clip_clamps_above_one_only() {
        let img = HdrImage::new(1, 1, vec![2.5, 0.3, 1.0]).unwrap();
        let clipped = clip_dynamic_range(&img);
        assert_eq!(clipped.data(), &[1.0, 0.3, 1.0]);
    }

    #[test]
    fn decomposition_identity() {
        let img = HdrImage::new(1, 2, vec![2.5, 0.3, 1.0, 4.0, 0.0, 0.7]).unwrap();
        let clipped = clip_dynamic_range(&img);
        let bright = bright_residual(&img);
        for i in 0..img.data().len() {
            assert_eq!(clipped.data()[i] + bright.data()[i], img.data()[i]);
            if img.data()[i] <= 1.0 {
                assert_eq!(bright.data()[i], 0.0);
            }
        }
    }

    #[test]
    fn quantize_half_rounds_up() {
        let img = LdrImage::new(1, 1, vec![0.0, 0.5, 1.0], false).unwrap();
        let q = quantize8(&img);
        assert_eq!(q.data()[0], 0.0);
        assert!((q.data()[1] - 128.0 / 255.0).abs() < 1e-7);
        assert_eq!(q.data()[2], 1.0);
        assert!(q.is_quantized());
    }

    #[test]
    fn quantize_is_idempotent() {
        let img = LdrImage::new(1, 2, vec![0.123, 0.5, 0.9999, 0.0, 1.0, 0.777], false).unwrap();
        let q1 = quantize8(&img);
        let q2 = quantize8(&q1);
        assert_eq!(q1.data(), q2.data());
    }

    #[test]
    fn quantization_error_bound() {
        for i in 0..=1000 {
            let v = i as f32 / 1000.0;
            let img = LdrImage::new(1, 1, vec![v; 3], false).unwrap();
            let q = quantize8(&img);
            assert!((q.data()[0] - v).abs() <= 1.0 / 510.0 + 1e-7);
        }
    }

    #[test]
    fn zero_noise_is_identity() {
        let img = LdrImage::new(2, 2, vec![0.25; 12], false).unwrap();
        let out = add_noise(&img, &NoiseParams::none()).unwrap();
        assert_eq!(out.data(), img.data());
    }

    #[test]
    fn dark_pixels_untouched_without_constant_noise() {
        // sigma_c = 0 means the variance vanishes where I = 0
        let img = LdrImage::new(1, 2, vec![0.0, 0.5, 0.0, 0.0, 0.5, 0.0], false).unwrap();
        let np = NoiseParams::new(0.013, 0.0, 42).unwrap();
        let out = add_noise(&img, &np).unwrap();
        assert_eq!(out.data()[0], 0.0);
        assert_eq!(out.data()[2], 0.0);
        assert_ne!(out.data()[1], 0.5);
    }

    #[test]
    fn noise_is_seed_deterministic() {
        let img = LdrImage::new(4, 4, vec![0.5; 48], false).unwrap();
        let np = NoiseParams::new(0.01, 0.004, 7).unwrap();
        let a = add_noise(&img, &np).unwrap();
        let b = add_noise(&img, &np).unwrap();
        assert_eq!(a.data(), b.data());
    }

    #[test]
    fn noise_variance_matches_model() {
        // sample-statistics oracle over ~1e6 values at I = 0.5
        let n = 578 * 578; // * 3 channels ~ 1.0e6
        let img = LdrImage::new(578, 578, vec![0.5; n * 3], false).unwrap();
        let np = NoiseParams::new(0.013, 0.005, 99).unwrap();
        let out = add_noise(&img, &np).unwrap();
        let mean: f64 = out.data().iter().map(|&v| v as f64).sum::<f64>() / (n * 3) as f64;
        let var: f64 = out
            .data()
            .iter()
            .map(|&v| (v as f64 - mean).powi(2))
            .sum::<f64>()
            / (n * 3 - 1) as f64;
        let expected = 0.5 * 0.013f64.powi(2) + 0.005f64.powi(2);
        assert!(
            (var - expected).abs() / expected < 0.05,
            "var {var} vs expected {expected}"
        );
    }

    #[test]
    fn exposure_grid_matches_log2_schedule() {
        let e = sample_exposures(60, -3.0, 3.0).unwrap();
        assert_eq!(e.len(), 60);
        assert!((e[0] - 0.125).abs() < 1e-6);
        assert!((e[59] - 8.0).abs() < 1e-5);

        let degenerate = sample_exposures(2, 0.0, 0.0).unwrap();
        assert_eq!(degenerate, vec![1.0, 1.0]);

        let three = sample_exposures(3, -1.0, 1.0).unwrap();
        assert!((three[0] - 0.5).abs() < 1e-6);
        assert!((three[1] - 1.0).abs() < 1e-6);
        assert!((three[2] - 2.0).abs() < 1e-6);

        assert!(sample_exposures(1, 0.0, 1.0).is_err());
    }

    #[test]
    fn synthesize_without_clipping_is_pure_quantization() {
        let hdr = const_hdr(0.4, 2, 2);
        let pair = synthesize_pair(
            &hdr,
            1.0,
            &ResponseCurve::identity(),
            &NoiseParams::none(),
            None,
        )
        .unwrap();
        let expected = quantize8(&clip_dynamic_range(&hdr));
        assert_eq!(pair.ldr.data(), expected.data());
        assert!(pair.bright_target.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn synthesize_saturated_constant() {
        let hdr = const_hdr(4.0, 2, 2);
        let pair = synthesize_pair(
            &hdr,
            1.0,
            &ResponseCurve::identity(),
            &NoiseParams::none(),
            None,
        )
        .unwrap();
        assert!(pair.ldr.data().iter().all(|&v| v == 1.0));
        assert!(pair.bright_target.data().iter().all(|&v| v == 3.0));
    }

    #[test]
    fn synthesize_is_deterministic() {
        let hdr = const_hdr(0.8, 3, 3);
        let np = NoiseParams::new(0.011, 0.003, 123).unwrap();
        let curve = ResponseCurve::gamma(2.2);
        let a = synthesize_pair(&hdr, 2.0, &curve, &np, None).unwrap();
        let b = synthesize_pair(&hdr, 2.0, &curve, &np, None).unwrap();
        assert_eq!(a.ldr.data(), b.ldr.data());
    }

    #[test]
    fn jpeg_round_trip_stays_near_uniform_input() {
        let img = quantize8(&LdrImage::new(16, 16, vec![0.5; 16 * 16 * 3], false).unwrap());
        let out = jpeg_round_trip(&img, 100).unwrap();
        assert!(out.is_quantized());
        for (a, b) in out.data().iter().zip(img.data()) {
            assert!((a - b).abs() <= 1.0 / 255.0 + 1e-7);
        }
        assert!(jpeg_round_trip(&img, 50).is_err());
    }

    #[test]
    fn naive_expand_squares() {
        let img = LdrImage::new(1, 1, vec![0.0, 0.5, 1.0], true).unwrap();
        let out = naive_expand(&img);
        assert_eq!(out.data(), &[0.0, 0.25, 1.0]);
    }

    #[test]
    fn crf_application_is_monotone() {
        let curve = ResponseCurve::gamma(2.0);
        let img = LdrImage::new(1, 2, vec![0.1, 0.2, 0.5, 0.6, 0.8, 0.9], false).unwrap();
        let out = apply_crf(&img, &curve);
        for i in 0..5 {
            assert!(out.data()[i] <= out.data()[i + 1]);
        }
    }
}
