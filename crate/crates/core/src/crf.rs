//! Camera response curves: monotone [0,1] -> [0,1] lookups with inverses,
//! a text-database reader, and a parametric gamma fallback family.

use std::fmt;
use std::path::Path;

use rand::Rng;
use thiserror::Error;

pub const CURVE_SAMPLES: usize = 1024;

#[derive(Debug, Error)]
pub enum CrfError {
    #[error("curve '{name}': {reason}")]
    InvalidCurve { name: String, reason: String },
    #[error("curve database '{path}': {reason}")]
    BadDatabase { path: String, reason: String },
    #[error("reading curve database: {0}")]
    Io(#[from] std::io::Error),
}

/// A camera response function sampled at 1024 uniform points in [0,1],
/// normalized so samples run from exactly 0 to exactly 1, non-decreasing.
#[derive(Clone, PartialEq)]
pub struct ResponseCurve {
    name: String,
    samples: Vec<f32>,
}

impl fmt::Debug for ResponseCurve {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ResponseCurve({}, {} samples)", self.name, self.samples.len())
    }
}

impl ResponseCurve {
    /// Validate, resample to 1024 points and normalize endpoints to 0 and 1.
    ///
    /// `irradiance` supplies the sample positions (may be any monotone grid
    /// over [0,1]); when `None` the brightness samples are taken as uniform.
    pub fn from_samples(
        name: impl Into<String>,
        irradiance: Option<&[f32]>,
        brightness: &[f32],
    ) -> Result<Self, CrfError> {
        let name = name.into();
        let fail = |reason: String| CrfError::InvalidCurve {
            name: name.clone(),
            reason,
        };
        if brightness.len() < 2 {
            return Err(fail("fewer than two samples".into()));
        }
        for pair in brightness.windows(2) {
            if pair[1] < pair[0] - 1e-6 {
                return Err(fail(format!(
                    "not monotone: {} followed by {}",
                    pair[0], pair[1]
                )));
            }
        }
        let lo = brightness[0];
        let hi = *brightness.last().unwrap();
        if !lo.is_finite() || !hi.is_finite() || hi <= lo {
            return Err(fail("degenerate sample range".into()));
        }
        if lo < -1e-3 || hi > 1.0 + 1e-3 {
            return Err(fail(format!("samples outside [0,1]: [{lo}, {hi}]")));
        }

        // resample onto the uniform 1024-point grid with linear interpolation
        let positions: Vec<f32> = match irradiance {
            Some(irr) => {
                if irr.len() != brightness.len() {
                    return Err(fail(format!(
                        "irradiance sample count {} != brightness count {}",
                        irr.len(),
                        brightness.len()
                    )));
                }
                irr.to_vec()
            }
            None => (0..brightness.len())
                .map(|i| i as f32 / (brightness.len() - 1) as f32)
                .collect(),
        };
        let mut samples = Vec::with_capacity(CURVE_SAMPLES);
        for i in 0..CURVE_SAMPLES {
            let x = i as f32 / (CURVE_SAMPLES - 1) as f32;
            samples.push(interp(&positions, brightness, x));
        }
        // enforce monotone non-decreasing after resampling, then normalize
        for i in 1..samples.len() {
            if samples[i] < samples[i - 1] {
                samples[i] = samples[i - 1];
            }
        }
        let (lo, hi) = (samples[0], samples[CURVE_SAMPLES - 1]);
        let span = hi - lo;
        for s in &mut samples {
            *s = ((*s - lo) / span).clamp(0.0, 1.0);
        }
        samples[0] = 0.0;
        samples[CURVE_SAMPLES - 1] = 1.0;
        Ok(ResponseCurve { name, samples })
    }

    pub fn identity() -> Self {
        let samples = (0..CURVE_SAMPLES)
            .map(|i| i as f32 / (CURVE_SAMPLES - 1) as f32)
            .collect();
        ResponseCurve {
            name: "identity".into(),
            samples,
        }
    }

    /// Power-law curve `x^(1/gamma)`.
    pub fn gamma(gamma: f32) -> Self {
        let samples = (0..CURVE_SAMPLES)
            .map(|i| {
                let x = i as f32 / (CURVE_SAMPLES - 1) as f32;
                x.powf(1.0 / gamma)
            })
            .collect();
        ResponseCurve {
            name: format!("gamma-{gamma:.3}"),
            samples,
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn samples(&self) -> &[f32] {
        &self.samples
    }

    /// Linear interpolation of the curve at `x` in [0,1].
    #[inline]
    pub fn eval(&self, x: f32) -> f32 {
        let x = x.clamp(0.0, 1.0);
        let pos = x * (CURVE_SAMPLES - 1) as f32;
        let i = (pos as usize).min(CURVE_SAMPLES - 2);
        let frac = pos - i as f32;
        self.samples[i] + frac * (self.samples[i + 1] - self.samples[i])
    }

    /// Inverse curve, built by swapping the roles of input and output and
    /// resampling. Flat spans invert to the left edge of the span.
    pub fn inverse(&self) -> ResponseCurve {
        let positions = self.samples.clone();
        let values: Vec<f32> = (0..CURVE_SAMPLES)
            .map(|i| i as f32 / (CURVE_SAMPLES - 1) as f32)
            .collect();
        let mut samples = Vec::with_capacity(CURVE_SAMPLES);
        for i in 0..CURVE_SAMPLES {
            let y = i as f32 / (CURVE_SAMPLES - 1) as f32;
            samples.push(interp(&positions, &values, y));
        }
        ResponseCurve {
            name: format!("{}-inverse", self.name),
            samples,
        }
    }
}

/// Piecewise-linear interpolation of `(xs, ys)` at `x`; xs non-decreasing.
fn interp(xs: &[f32], ys: &[f32], x: f32) -> f32 {
    if x <= xs[0] {
        return ys[0];
    }
    if x >= xs[xs.len() - 1] {
        return ys[ys.len() - 1];
    }
    // binary search for the bracketing interval
    let mut lo = 0;
    let mut hi = xs.len() - 1;
    while hi - lo > 1 {
        let mid = (lo + hi) / 2;
        if xs[mid] <= x {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let span = xs[hi] - xs[lo];
    if span <= 0.0 {
        return ys[lo];
    }
    ys[lo] + (x - xs[lo]) / span * (ys[hi] - ys[lo])
}

/// Where response curves come from.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CrfSource {
    /// Text database file: per curve a name line, an irradiance sample line
    /// and a brightness sample line (optionally prefixed `I =` / `B =`).
    File { path: String },
    /// Parametric fallback: `count` gamma curves with gamma drawn uniformly
    /// from [1.8, 2.6] using the given seed.
    GammaFamily { count: usize, seed: u64 },
}

/// Load and validate curves from a [`CrfSource`].
pub fn load_response_curves(source: &CrfSource) -> Result<Vec<ResponseCurve>, CrfError> {
    match source {
        CrfSource::File { path } => parse_curve_database(Path::new(path)),
        CrfSource::GammaFamily { count, seed } => Ok(gamma_family(*count, *seed)),
    }
}

/// Uniformly sampled gamma curves over [1.8, 2.6].
pub fn gamma_family(count: usize, seed: u64) -> Vec<ResponseCurve> {
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| ResponseCurve::gamma(rng.gen_range(1.8..=2.6)))
        .collect()
}

/// Parse a curve database file. Blank lines separate nothing in particular;
/// each curve is three meaningful lines: name, irradiance samples,
/// brightness samples.
pub fn parse_curve_database(path: &Path) -> Result<Vec<ResponseCurve>, CrfError> {
    let text = std::fs::read_to_string(path)?;
    parse_curve_text(&text).map_err(|reason| CrfError::BadDatabase {
        path: path.display().to_string(),
        reason,
    })
}

fn parse_curve_text(text: &str) -> Result<Vec<ResponseCurve>, String> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty()).peekable();
    let mut curves = Vec::new();
    while let Some(name_line) = lines.next() {
        let name = name_line.trim().to_string();
        let irr_line = lines
            .next()
            .ok_or_else(|| format!("curve '{name}': missing irradiance line"))?;
        let bright_line = lines
            .next()
            .ok_or_else(|| format!("curve '{name}': missing brightness line"))?;
        let irr = parse_sample_line(irr_line)
            .map_err(|e| format!("curve '{name}': irradiance line: {e}"))?;
        let bright = parse_sample_line(bright_line)
            .map_err(|e| format!("curve '{name}': brightness line: {e}"))?;
        let curve = ResponseCurve::from_samples(&name, Some(&irr), &bright)
            .map_err(|e| e.to_string())?;
        curves.push(curve);
    }
    if curves.is_empty() {
        return Err("no curves found".into());
    }
    Ok(curves)
}

fn parse_sample_line(line: &str) -> Result<Vec<f32>, String> {
    let body = line
        .trim()
        .trim_start_matches("I =")
        .trim_start_matches("B =")
        .trim();
    let values: Result<Vec<f32>, _> = body.split_whitespace().map(|t| t.parse::<f32>()).collect();
    let values = values.map_err(|e| e.to_string())?;
    if values.len() < 2 {
        return Err(format!("only {} samples", values.len()));
    }
    Ok(values)
}

/// Deterministic train/eval split: the first `train_count` curves train.
pub fn training_split(
    curves: &[ResponseCurve],
    train_count: usize,
) -> (Vec<ResponseCurve>, Vec<ResponseCurve>) {
    let n = train_count.min(curves.len());
    (curves[..n].to_vec(), curves[n..].to_vec())
}
