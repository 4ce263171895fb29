//! Perceptually-uniform evaluation.
//!
//! Predictions and references are anchored to a display model (the
//! reference's 99.9th luminance percentile maps to 1000 cd/m^2), clamped to
//! [0.005, 1e4] cd/m^2, and passed through a fixed tabulated log-domain
//! curve normalized so the clamp bounds hit 0 and 1. PSNR, SSIM and
//! MS-SSIM are then ordinary unit-range metrics on the encoded values.

use std::collections::BTreeSet;
use std::io::Write;
use std::path::Path;

use thiserror::Error;

use crate::img::HdrImage;
use crate::{sc, Scalar};

#[derive(Debug, Error)]
pub enum MetricError {
    #[error("anchor image is entirely zero; display anchoring is undefined")]
    ZeroAnchor,
    #[error("shape mismatch: {0}x{1} vs {2}x{3}")]
    ShapeMismatch(usize, usize, usize, usize),
    #[error("image {w}x{h} smaller than the {win}x{win} analysis window")]
    TooSmall { w: usize, h: usize, win: usize },
    #[error("no filename overlap between prediction and reference directories")]
    NoPairs,
    #[error(transparent)]
    Codec(#[from] crate::io::CodecError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Luminance clamp bounds of the encoding, in cd/m^2.
pub const PU_MIN_LUMINANCE: f64 = 0.005;
pub const PU_MAX_LUMINANCE: f64 = 1e4;
/// Display anchoring: this percentile of the reference maps to ANCHOR_NITS.
pub const ANCHOR_PERCENTILE: f64 = 99.9;
pub const ANCHOR_NITS: f64 = 1000.0;
/// PSNR reported for identical images instead of infinity.
pub const PSNR_CAP_DB: f64 = 99.0;

const PU_TABLE_SIZE: usize = 1024;
const SSIM_WINDOW: usize = 11;
const SSIM_SIGMA: f64 = 1.5;
const SSIM_K1: f64 = 0.01;
const SSIM_K2: f64 = 0.03;
const MS_WEIGHTS: [f64; 5] = [0.0448, 0.2856, 0.3001, 0.2363, 0.1333];

/// Fixed tabulated log-domain curve over the clamped luminance range,
/// strictly monotone, with the clamp bounds mapping to 0 and 1.
struct PuCurve {
    table: [f64; PU_TABLE_SIZE],
}

impl PuCurve {
    fn new() -> Self {
        let lo = PU_MIN_LUMINANCE.log10();
        let hi = PU_MAX_LUMINANCE.log10();
        let mut table = [0.0; PU_TABLE_SIZE];
        for (i, slot) in table.iter_mut().enumerate() {
            let logl = lo + (hi - lo) * i as f64 / (PU_TABLE_SIZE - 1) as f64;
            *slot = (logl - lo) / (hi - lo);
        }
        PuCurve { table }
    }

    fn eval(&self, luminance: f64) -> f64 {
        let l = luminance.clamp(PU_MIN_LUMINANCE, PU_MAX_LUMINANCE);
        let lo = PU_MIN_LUMINANCE.log10();
        let hi = PU_MAX_LUMINANCE.log10();
        let pos = (l.log10() - lo) / (hi - lo) * (PU_TABLE_SIZE - 1) as f64;
        let i = (pos as usize).min(PU_TABLE_SIZE - 2);
        let frac = pos - i as f64;
        self.table[i] + frac * (self.table[i + 1] - self.table[i])
    }
}

/// PU-encoded image with its display anchoring record.
#[derive(Debug, Clone)]
pub struct PuImage {
    width: usize,
    height: usize,
    /// Planar 3-channel values in [0,1].
    data: Vec<f64>,
    /// cd/m^2 per radiance unit applied before encoding.
    pub scale: f64,
    /// Anchor luminance after scaling (cd/m^2).
    pub peak_nits: f64,
}

impl PuImage {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// Wrap unit-range values directly (for tests and synthetic inputs).
    pub fn from_unit(width: usize, height: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), width * height * 3);
        PuImage {
            width,
            height,
            data,
            scale: 1.0,
            peak_nits: ANCHOR_NITS,
        }
    }
}

/// Nearest-rank percentile of the positive luminances.
fn percentile(values: &[f64], pct: f64) -> Option<f64> {
    let mut positive: Vec<f64> = values.iter().copied().filter(|&v| v > 0.0).collect();
    if positive.is_empty() {
        return None;
    }
    positive.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let rank = ((pct / 100.0) * (positive.len() - 1) as f64).round() as usize;
    Some(positive[rank.min(positive.len() - 1)])
}

/// The cd/m^2-per-unit display scale implied by the anchor image.
pub fn anchor_scale(anchor: &HdrImage) -> Result<f64, MetricError> {
    let lum: Vec<f64> = anchor.luminance().iter().map(|&v| v as f64).collect();
    let p = percentile(&lum, ANCHOR_PERCENTILE).ok_or(MetricError::ZeroAnchor)?;
    Ok(ANCHOR_NITS / p)
}

/// Encode `image` under the display anchoring derived from `anchor`.
pub fn pu_encode(image: &HdrImage, anchor: &HdrImage) -> Result<PuImage, MetricError> {
    let scale = anchor_scale(anchor)?;
    let curve = PuCurve::new();
    let data = image
        .data()
        .iter()
        .map(|&v| curve.eval(v as f64 * scale))
        .collect();
    Ok(PuImage {
        width: image.width(),
        height: image.height(),
        data,
        scale,
        peak_nits: ANCHOR_NITS,
    })
}

fn check_shapes(a: &PuImage, b: &PuImage) -> Result<(), MetricError> {
    if a.width != b.width || a.height != b.height {
        return Err(MetricError::ShapeMismatch(
            a.width, a.height, b.width, b.height,
        ));
    }
    Ok(())
}

/// Peak signal-to-noise ratio over the unit-range encoded values, capped.
pub fn psnr(a: &PuImage, b: &PuImage) -> Result<f64, MetricError> {
    check_shapes(a, b)?;
    let mse: f64 = a
        .data
        .iter()
        .zip(&b.data)
        .map(|(&x, &y)| (x - y) * (x - y))
        .sum::<f64>()
        / a.data.len() as f64;
    if mse <= 0.0 {
        return Ok(PSNR_CAP_DB);
    }
    Ok((10.0 * (1.0 / mse).log10()).min(PSNR_CAP_DB))
}

/// Separable Gaussian blur of one plane (valid region only).
fn gaussian_valid<T: Scalar>(plane: &[T], w: usize, h: usize, kernel: &[T]) -> (Vec<T>, usize, usize) {
    let k = kernel.len();
    let ow = w - k + 1;
    let oh = h - k + 1;
    // horizontal
    let mut tmp = vec![T::zero(); ow * h];
    for y in 0..h {
        for x in 0..ow {
            let mut acc = T::zero();
            for (i, &kv) in kernel.iter().enumerate() {
                acc = acc + kv * plane[y * w + x + i];
            }
            tmp[y * ow + x] = acc;
        }
    }
    // vertical
    let mut out = vec![T::zero(); ow * oh];
    for y in 0..oh {
        for x in 0..ow {
            let mut acc = T::zero();
            for (i, &kv) in kernel.iter().enumerate() {
                acc = acc + kv * tmp[(y + i) * ow + x];
            }
            out[y * oh_stride(ow) + x] = acc;
        }
    }
    (out, ow, oh)
}

#[inline]
fn oh_stride(ow: usize) -> usize {
    ow
}

fn gaussian_kernel<T: Scalar>() -> Vec<T> {
    let mut k = Vec::with_capacity(SSIM_WINDOW);
    let c = (SSIM_WINDOW / 2) as f64;
    let mut sum = 0.0;
    let mut raw = [0.0f64; SSIM_WINDOW];
    for (i, slot) in raw.iter_mut().enumerate() {
        let d = i as f64 - c;
        *slot = (-d * d / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
        sum += *slot;
    }
    for v in raw {
        k.push(sc::<T>(v / sum));
    }
    k
}

/// Windowed SSIM statistics of one channel pair: (mean ssim, mean cs).
fn ssim_plane<T: Scalar>(a: &[T], b: &[T], w: usize, h: usize) -> (T, T) {
    let kernel = gaussian_kernel::<T>();
    let c1 = sc::<T>(SSIM_K1 * SSIM_K1);
    let c2 = sc::<T>(SSIM_K2 * SSIM_K2);
    let (mu_a, ow, oh) = gaussian_valid(a, w, h, &kernel);
    let (mu_b, _, _) = gaussian_valid(b, w, h, &kernel);
    let sq_a: Vec<T> = a.iter().map(|&v| v * v).collect();
    let sq_b: Vec<T> = b.iter().map(|&v| v * v).collect();
    let ab: Vec<T> = a.iter().zip(b).map(|(&x, &y)| x * y).collect();
    let (m_aa, _, _) = gaussian_valid(&sq_a, w, h, &kernel);
    let (m_bb, _, _) = gaussian_valid(&sq_b, w, h, &kernel);
    let (m_ab, _, _) = gaussian_valid(&ab, w, h, &kernel);

    let mut ssim_sum = T::zero();
    let mut cs_sum = T::zero();
    let n = ow * oh;
    for i in 0..n {
        let (ma, mb) = (mu_a[i], mu_b[i]);
        let var_a = m_aa[i] - ma * ma;
        let var_b = m_bb[i] - mb * mb;
        let cov = m_ab[i] - ma * mb;
        let cs = (sc::<T>(2.0) * cov + c2) / (var_a + var_b + c2);
        let lum = (sc::<T>(2.0) * ma * mb + c1) / (ma * ma + mb * mb + c1);
        ssim_sum = ssim_sum + lum * cs;
        cs_sum = cs_sum + cs;
    }
    let inv = T::one() / sc::<T>(n as f64);
    (ssim_sum * inv, cs_sum * inv)
}

fn per_channel_mean<T: Scalar>(
    a: &PuImage,
    b: &PuImage,
    w: usize,
    h: usize,
    f: impl Fn(&[T], &[T], usize, usize) -> T,
) -> T {
    let plane = w * h;
    let mut acc = T::zero();
    for c in 0..3 {
        let pa: Vec<T> = a.data[c * plane..(c + 1) * plane]
            .iter()
            .map(|&v| sc::<T>(v))
            .collect();
        let pb: Vec<T> = b.data[c * plane..(c + 1) * plane]
            .iter()
            .map(|&v| sc::<T>(v))
            .collect();
        acc = acc + f(&pa, &pb, w, h);
    }
    acc / sc::<T>(3.0)
}

/// Mean SSIM over channels (Gaussian 11x11 window, K1=0.01, K2=0.03, L=1).
pub fn ssim(a: &PuImage, b: &PuImage) -> Result<f64, MetricError> {
    check_shapes(a, b)?;
    if a.width < SSIM_WINDOW || a.height < SSIM_WINDOW {
        return Err(MetricError::TooSmall {
            w: a.width,
            h: a.height,
            win: SSIM_WINDOW,
        });
    }
    let v: f64 = per_channel_mean::<f64>(a, b, a.width, a.height, |x, y, w, h| {
        ssim_plane(x, y, w, h).0
    });
    Ok(v)
}

fn downsample2(plane: &[f64], w: usize, h: usize) -> (Vec<f64>, usize, usize) {
    let ow = w / 2;
    let oh = h / 2;
    let mut out = vec![0.0; ow * oh];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = 0.25
                * (plane[2 * y * w + 2 * x]
                    + plane[2 * y * w + 2 * x + 1]
                    + plane[(2 * y + 1) * w + 2 * x]
                    + plane[(2 * y + 1) * w + 2 * x + 1]);
        }
    }
    (out, ow, oh)
}

/// Multi-scale SSIM with the standard five scale weights; images too small
/// for five scales use fewer scales with renormalized weights.
pub fn ms_ssim(a: &PuImage, b: &PuImage) -> Result<f64, MetricError> {
    check_shapes(a, b)?;
    let min_dim = a.width.min(a.height);
    if min_dim < SSIM_WINDOW {
        return Err(MetricError::TooSmall {
            w: a.width,
            h: a.height,
            win: SSIM_WINDOW,
        });
    }
    // deepest scale must still fit the window
    let mut scales = 1;
    while scales < MS_WEIGHTS.len() && (min_dim >> scales) >= SSIM_WINDOW {
        scales += 1;
    }
    let weight_sum: f64 = MS_WEIGHTS[..scales].iter().sum();

    let plane = a.width * a.height;
    let mut result = 1.0;
    for c in 0..3 {
        let mut pa = a.data[c * plane..(c + 1) * plane].to_vec();
        let mut pb = b.data[c * plane..(c + 1) * plane].to_vec();
        let (mut w, mut h) = (a.width, a.height);
        let mut channel = 1.0;
        for (level, &wt) in MS_WEIGHTS[..scales].iter().enumerate() {
            let (s, cs) = ssim_plane(&pa, &pb, w, h);
            let factor = if level + 1 == scales { s } else { cs };
            // negative structure terms cannot enter a fractional power
            channel *= factor.max(0.0).powf(wt / weight_sum);
            if level + 1 < scales {
                let (na, nw, nh) = downsample2(&pa, w, h);
                let (nb, _, _) = downsample2(&pb, w, h);
                pa = na;
                pb = nb;
                w = nw;
                h = nh;
            }
        }
        result *= channel;
    }
    Ok(result.powf(1.0 / 3.0))
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct MetricRow {
    pub filename: String,
    pub pu_psnr_db: f64,
    pub pu_ssim: f64,
    pub pu_ms_ssim: f64,
}

#[derive(Debug, serde::Serialize)]
pub struct MetricReport {
    pub rows: Vec<MetricRow>,
    pub mean_psnr_db: f64,
    pub mean_ssim: f64,
    pub mean_ms_ssim: f64,
    /// Files present on one side only.
    pub missing: Vec<String>,
}

/// Config echo written next to every metrics CSV.
#[derive(Debug, serde::Serialize)]
struct MetricsConfigEcho {
    anchor_percentile: f64,
    anchor_nits: f64,
    pu_min_luminance: f64,
    pu_max_luminance: f64,
    ssim_window: usize,
    ssim_sigma: f64,
    psnr_cap_db: f64,
}

/// Score every filename common to both directories; write CSV plus a JSON
/// config sidecar. Missing counterparts are listed and skipped.
pub fn evaluate(pred_dir: &Path, ref_dir: &Path, out_csv: &Path) -> Result<MetricReport, MetricError> {
    let list = |dir: &Path| -> Result<BTreeSet<String>, MetricError> {
        Ok(crate::dataset::list_hdr_files(dir)
            .map_err(MetricError::Io)?
            .into_iter()
            .filter_map(|p| p.file_name().map(|n| n.to_string_lossy().into_owned()))
            .collect())
    };
    let preds = list(pred_dir)?;
    let refs = list(ref_dir)?;
    let common: Vec<String> = preds.intersection(&refs).cloned().collect();
    let mut missing: Vec<String> = preds
        .symmetric_difference(&refs)
        .cloned()
        .collect();
    missing.sort();
    if common.is_empty() {
        return Err(MetricError::NoPairs);
    }

    let mut rows = Vec::with_capacity(common.len());
    for name in &common {
        let pred = crate::io::read_hdr_auto(&pred_dir.join(name))?;
        let reference = crate::io::read_hdr_auto(&ref_dir.join(name))?;
        let anchor = &reference;
        let p = pu_encode(&pred, anchor)?;
        let r = pu_encode(&reference, anchor)?;
        rows.push(MetricRow {
            filename: name.clone(),
            pu_psnr_db: psnr(&p, &r)?,
            pu_ssim: ssim(&p, &r)?,
            pu_ms_ssim: ms_ssim(&p, &r)?,
        });
    }
    let n = rows.len() as f64;
    let report = MetricReport {
        mean_psnr_db: rows.iter().map(|r| r.pu_psnr_db).sum::<f64>() / n,
        mean_ssim: rows.iter().map(|r| r.pu_ssim).sum::<f64>() / n,
        mean_ms_ssim: rows.iter().map(|r| r.pu_ms_ssim).sum::<f64>() / n,
        rows,
        missing,
    };

    let mut out = std::io::BufWriter::new(std::fs::File::create(out_csv)?);
    writeln!(out, "filename,pu_psnr_db,pu_ssim,pu_ms_ssim")?;
    for row in &report.rows {
        writeln!(
            out,
            "{},{},{},{}",
            row.filename, row.pu_psnr_db, row.pu_ssim, row.pu_ms_ssim
        )?;
    }
    writeln!(
        out,
        "mean,{},{},{}",
        report.mean_psnr_db, report.mean_ssim, report.mean_ms_ssim
    )?;
    drop(out);

    let echo = MetricsConfigEcho {
        anchor_percentile: ANCHOR_PERCENTILE,
        anchor_nits: ANCHOR_NITS,
        pu_min_luminance: PU_MIN_LUMINANCE,
        pu_max_luminance: PU_MAX_LUMINANCE,
        ssim_window: SSIM_WINDOW,
        ssim_sigma: SSIM_SIGMA,
        psnr_cap_db: PSNR_CAP_DB,
    };
    let sidecar = out_csv.with_extension("csv.json");
    std::fs::write(sidecar, serde_json::to_string_pretty(&echo).unwrap())?;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn textured(seed: u64, w: usize, h: usize, scale: f32) -> HdrImage {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let data = (0..w * h * 3)
            .map(|i| {
                let base = ((i % w) as f32 / w as f32) * scale;
                base + rng.gen_range(0.0..0.3 * scale)
            })
            .collect();
        HdrImage::new(w, h, data).unwrap()
    }

    #[test]
    fn identical_inputs_encode_identically() {
        let img = textured(1, 16, 16, 2.0);
        let a = pu_encode(&img, &img).unwrap();
        let b = pu_encode(&img, &img).unwrap();
        assert_eq!(a.data(), b.data());
    }

    #[test]
    fn encoding_is_monotone() {
        let anchor = textured(2, 16, 16, 2.0);
        let scale = anchor_scale(&anchor).unwrap();
        let curve = PuCurve::new();
        let mut prev = -1.0;
        for i in 0..200 {
            let v = i as f64 * 0.05;
            let p = curve.eval(v * scale);
            assert!(p >= prev);
            if v * scale > PU_MIN_LUMINANCE && v * scale < PU_MAX_LUMINANCE && i > 0 {
                assert!(p > prev, "not strict at {v}");
            }
            prev = p;
        }
        assert_eq!(curve.eval(PU_MIN_LUMINANCE), 0.0);
        assert!((curve.eval(PU_MAX_LUMINANCE) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn anchor_percentile_maps_to_anchor_nits() {
        // 1000 gray pixels with luminances 1..=1000: the 99.9th percentile
        // (nearest rank) is 999, so the scale is 1000/999.
        let n = 1000;
        let mut data = vec![0.0f32; n * 3];
        for i in 0..n {
            for c in 0..3 {
                data[c * n + i] = (i + 1) as f32;
            }
        }
        let anchor = HdrImage::new(n, 1, data).unwrap();
        let s = anchor_scale(&anchor).unwrap();
        assert!((s * 999.0 - ANCHOR_NITS).abs() < 1e-6);
    }

    #[test]
    fn zero_anchor_rejected() {
        let img = HdrImage::zeros(4, 4);
        assert!(matches!(
            pu_encode(&img, &img),
            Err(MetricError::ZeroAnchor)
        ));
    }

    #[test]
    fn psnr_cap_and_hand_value() {
        let a = PuImage::from_unit(4, 4, vec![0.5; 48]);
        assert_eq!(psnr(&a, &a).unwrap(), PSNR_CAP_DB);
        // constant offset 0.1 -> mse 0.01 -> 20 dB
        let b = PuImage::from_unit(4, 4, vec![0.6; 48]);
        assert!((psnr(&a, &b).unwrap() - 20.0).abs() < 1e-9);
    }

    #[test]
    fn ssim_self_is_one_and_inversion_is_worse() {
        let img = textured(5, 32, 32, 1.0);
        let a = pu_encode(&img, &img).unwrap();
        assert!((ssim(&a, &a).unwrap() - 1.0).abs() < 1e-6);
        let inverted = PuImage::from_unit(
            32,
            32,
            a.data().iter().map(|&v| 1.0 - v).collect(),
        );
        assert!(ssim(&a, &inverted).unwrap() < 1.0 - 1e-3);
    }

    #[test]
    fn ms_ssim_decreases_with_noise() {
        let img = textured(6, 64, 64, 1.0);
        let reference = pu_encode(&img, &img).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(8);
        let mut scores = Vec::new();
        for sigma in [0.01, 0.05, 0.1] {
            let noisy = PuImage::from_unit(
                64,
                64,
                reference
                    .data()
                    .iter()
                    .map(|&v| (v + rng.gen_range(-1.0..1.0) * sigma * 1.7).clamp(0.0, 1.0))
                    .collect(),
            );
            scores.push(ms_ssim(&reference, &noisy).unwrap());
        }
        assert!(scores[0] > scores[1] && scores[1] > scores[2], "{scores:?}");
    }

    #[test]
    fn metric_symmetry_under_joint_anchoring() {
        let x = textured(7, 32, 32, 2.0);
        let y = textured(8, 32, 32, 2.0);
        let a = pu_encode(&x, &x).unwrap();
        let b = pu_encode(&y, &x).unwrap();
        assert!((psnr(&a, &b).unwrap() - psnr(&b, &a).unwrap()).abs() < 1e-12);
        assert!((ssim(&a, &b).unwrap() - ssim(&b, &a).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn joint_rescaling_is_invisible() {
        let x = textured(9, 32, 32, 1.0);
        let y = textured(10, 32, 32, 1.0);
        let scale = 37.5f32;
        let xs = HdrImage::new(32, 32, x.data().iter().map(|&v| v * scale).collect()).unwrap();
        let ys = HdrImage::new(32, 32, y.data().iter().map(|&v| v * scale).collect()).unwrap();
        let p1 = psnr(
            &pu_encode(&y, &x).unwrap(),
            &pu_encode(&x, &x).unwrap(),
        )
        .unwrap();
        let p2 = psnr(
            &pu_encode(&ys, &xs).unwrap(),
            &pu_encode(&xs, &xs).unwrap(),
        )
        .unwrap();
        assert!((p1 - p2).abs() < 1e-6, "{p1} vs {p2}");
    }

    #[test]
    fn small_image_rejected() {
        let a = PuImage::from_unit(8, 8, vec![0.5; 192]);
        assert!(matches!(ssim(&a, &a), Err(MetricError::TooSmall { .. })));
    }

    #[test]
    fn evaluate_directories() {
        let dir = tempfile::tempdir().unwrap();
        let pred = dir.path().join("pred");
        let refs = dir.path().join("ref");
        std::fs::create_dir_all(&pred).unwrap();
        std::fs::create_dir_all(&refs).unwrap();
        for i in 0..2 {
            let img = textured(20 + i, 32, 32, 2.0);
            crate::io::pfm::write_pfm(&pred.join(format!("img{i}.pfm")), &img).unwrap();
            crate::io::pfm::write_pfm(&refs.join(format!("img{i}.pfm")), &img).unwrap();
        }
        // one unmatched file on the reference side
        crate::io::pfm::write_pfm(&refs.join("only_ref.pfm"), &textured(30, 32, 32, 1.0)).unwrap();

        let csv = dir.path().join("report.csv");
        let report = evaluate(&pred, &refs, &csv).unwrap();
        assert_eq!(report.rows.len(), 2);
        assert_eq!(report.missing, vec!["only_ref.pfm".to_string()]);
        assert_eq!(report.mean_psnr_db, PSNR_CAP_DB);
        assert!((report.mean_ssim - 1.0).abs() < 1e-6);
        let text = std::fs::read_to_string(&csv).unwrap();
        assert!(text.starts_with("filename,pu_psnr_db,pu_ssim,pu_ms_ssim"));
        assert!(text.trim_end().lines().last().unwrap().starts_with("mean,"));
        assert!(csv.with_extension("csv.json").exists());

        // empty intersection
        let empty = dir.path().join("empty");
        std::fs::create_dir_all(&empty).unwrap();
        assert!(matches!(
            evaluate(&empty, &refs, &dir.path().join("x.csv")),
            Err(MetricError::NoPairs)
        ));
    }

    #[test]
    fn naive_expand_scores_below_self() {
        // baseline sanity: a naive x^2 expansion of the LDR must score
        // strictly below the ground truth scored against itself
        let hdr = textured(40, 32, 32, 3.0);
        let pair = crate::pipeline::synthesize_pair(
            &hdr,
            1.0,
            &crate::crf::ResponseCurve::gamma(2.2),
            &crate::pipeline::NoiseParams::none(),
            None,
        )
        .unwrap();
        let naive = crate::pipeline::naive_expand(&pair.ldr);
        let p_naive = pu_encode(&naive, &hdr).unwrap();
        let p_ref = pu_encode(&hdr, &hdr).unwrap();
        assert!(psnr(&p_naive, &p_ref).unwrap() < PSNR_CAP_DB);
        assert!(ssim(&p_naive, &p_ref).unwrap() < 1.0 - 1e-4);
    }
}
