//! Synthesized pair datasets on disk: LDR observations as PNG, supervision
//! targets as PFM, and a JSON manifest recording provenance so every pair
//! can be regenerated bit-for-bit from its seed.

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::crf::{load_response_curves, training_split, CrfError, ResponseCurve};
use crate::img::{HdrImage, LdrImage};
use crate::io::{self, CodecError};
use crate::pipeline::{
    derive_seed, sample_exposures, synthesize_pair, NoiseParams, PipelineConfig, PipelineError,
};

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error(transparent)]
    Crf(#[from] CrfError),
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error("manifest {path}: {reason}")]
    BadManifest { path: String, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("no HDR sources given")]
    EmptySources,
}

/// Provenance and file locations of one synthesized pair.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct PairRecord {
    pub index: usize,
    pub source: String,
    pub exposure: f32,
    pub crf: String,
    pub sigma_s: f32,
    pub sigma_c: f32,
    pub jpeg_quality: Option<u8>,
    pub seed: u64,
    pub ldr: String,
    pub dim: String,
    pub bright: String,
    pub nonlinear: String,
}

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct DatasetManifest {
    pub schema_version: u32,
    pub master_seed: u64,
    pub config: PipelineConfig,
    pub pairs: Vec<PairRecord>,
}

pub const MANIFEST_NAME: &str = "manifest.json";

/// One loaded pair, full resolution.
#[derive(Debug, Clone)]
pub struct SourcePair {
    pub ldr: LdrImage,
    pub dim: LdrImage,
    pub bright: HdrImage,
    pub nonlinear: LdrImage,
    pub record: PairRecord,
}

/// Synthesize the cartesian product sources x exposures x curves, writing
/// pair files and the manifest into `out_dir`.
pub fn synthesize_dataset(
    sources: &[(String, HdrImage)],
    cfg: &PipelineConfig,
    out_dir: &Path,
) -> Result<DatasetManifest, DatasetError> {
    if sources.is_empty() {
        return Err(DatasetError::EmptySources);
    }
    std::fs::create_dir_all(out_dir)?;
    let curves = load_response_curves(&cfg.crf_source)?;
    let curves: Vec<ResponseCurve> = match cfg.crf_train_count {
        Some(n) => training_split(&curves, n).0,
        None => curves,
    };
    let exposures = sample_exposures(cfg.exposure_count, cfg.exposure_lo_log2, cfg.exposure_hi_log2)?;

    let mut pairs = Vec::new();
    let mut index = 0usize;
    for (name, hdr) in sources {
        for &t in &exposures {
            for curve in &curves {
                let seed = derive_seed(cfg.master_seed, index as u64);
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let sigma_s = rng.gen_range(0.0..=cfg.sigma_s_max);
                let sigma_c = rng.gen_range(0.0..=cfg.sigma_c_max);
                let quality = cfg
                    .jpeg_enabled
                    .then(|| rng.gen_range(cfg.jpeg_quality_lo..=cfg.jpeg_quality_hi));
                let noise = NoiseParams::new(sigma_s, sigma_c, rng.gen())?;
                let pair = synthesize_pair(hdr, t, curve, &noise, quality)?;

                let stem = format!("pair_{index:06}");
                let record = PairRecord {
                    index,
                    source: name.clone(),
                    exposure: t,
                    crf: curve.name().to_string(),
                    sigma_s,
                    sigma_c,
                    jpeg_quality: quality,
                    seed,
                    ldr: format!("{stem}_ldr.png"),
                    dim: format!("{stem}_dim.pfm"),
                    bright: format!("{stem}_bright.pfm"),
                    nonlinear: format!("{stem}_nonlinear.pfm"),
                };
                io::png::write_ldr_png(&out_dir.join(&record.ldr), &pair.ldr)?;
                io::pfm::write_pfm(&out_dir.join(&record.dim), &ldr_as_hdr(&pair.dim_target))?;
                io::pfm::write_pfm(&out_dir.join(&record.bright), &pair.bright_target)?;
                io::pfm::write_pfm(
                    &out_dir.join(&record.nonlinear),
                    &ldr_as_hdr(&pair.nonlinear_target),
                )?;
                pairs.push(record);
                index += 1;
            }
        }
    }

    let manifest = DatasetManifest {
        schema_version: 1,
        master_seed: cfg.master_seed,
        config: cfg.clone(),
        pairs,
    };
    write_manifest(&out_dir.join(MANIFEST_NAME), &manifest)?;
    Ok(manifest)
}

fn ldr_as_hdr(ldr: &LdrImage) -> HdrImage {
    HdrImage::new(ldr.width(), ldr.height(), ldr.data().to_vec()).expect("[0,1] data is valid")
}

fn hdr_as_ldr(hdr: &HdrImage, quantized: bool) -> LdrImage {
    LdrImage::new_unchecked(
        hdr.width(),
        hdr.height(),
        hdr.data().iter().map(|&v| v.clamp(0.0, 1.0)).collect(),
        quantized,
    )
}

pub fn write_manifest(path: &Path, manifest: &DatasetManifest) -> Result<(), DatasetError> {
    let json = serde_json::to_string_pretty(manifest).map_err(|e| DatasetError::BadManifest {
        path: path.display().to_string(),
        reason: e.to_string(),
    })?;
    std::fs::write(path, json)?;
    Ok(())
}

pub fn read_manifest(path: &Path) -> Result<DatasetManifest, DatasetError> {
    let text = std::fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| DatasetError::BadManifest {
        path: path.display().to_string(),
        reason: e.to_string(),
    })
}

/// Load every pair referenced by a manifest back into memory.
pub fn load_dataset(manifest_path: &Path) -> Result<Vec<SourcePair>, DatasetError> {
    let manifest = read_manifest(manifest_path)?;
    let dir = manifest_path.parent().unwrap_or(Path::new("."));
    let mut out = Vec::with_capacity(manifest.pairs.len());
    for record in manifest.pairs {
        let ldr = io::png::read_ldr(&dir.join(&record.ldr))?;
        let dim = hdr_as_ldr(&io::pfm::read_pfm(&dir.join(&record.dim))?, false);
        let bright = io::pfm::read_pfm(&dir.join(&record.bright))?;
        let nonlinear = hdr_as_ldr(&io::pfm::read_pfm(&dir.join(&record.nonlinear))?, false);
        out.push(SourcePair {
            ldr,
            dim,
            bright,
            nonlinear,
            record,
        });
    }
    Ok(out)
}

/// List HDR files (`.hdr`, `.pic`, `.pfm`) in a directory, sorted by name.
pub fn list_hdr_files(dir: &Path) -> Result<Vec<PathBuf>, std::io::Error> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| {
            matches!(
                p.extension().and_then(|e| e.to_str()).map(|e| e.to_ascii_lowercase()).as_deref(),
                Some("hdr") | Some("pic") | Some("pfm")
            )
        })
        .collect();
    files.sort();
    Ok(files)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crf::CrfSource;

    fn toy_sources() -> Vec<(String, HdrImage)> {
        let mut data = vec![0.2f32; 8 * 8 * 3];
        data[10] = 3.0;
        vec![
            ("a".into(), HdrImage::new(8, 8, data).unwrap()),
            ("b".into(), HdrImage::new(8, 8, vec![0.5; 8 * 8 * 3]).unwrap()),
        ]
    }

    fn toy_cfg() -> PipelineConfig {
        PipelineConfig {
            exposure_count: 3,
            exposure_lo_log2: -1.0,
            exposure_hi_log2: 1.0,
            crf_source: CrfSource::GammaFamily { count: 2, seed: 4 },
            jpeg_enabled: false,
            master_seed: 11,
            ..Default::default()
        }
    }

    #[test]
    fn cartesian_pair_count() {
        let dir = tempfile::tempdir().unwrap();
        let manifest = synthesize_dataset(&toy_sources(), &toy_cfg(), dir.path()).unwrap();
        assert_eq!(manifest.pairs.len(), 2 * 3 * 2);
    }

    #[test]
    fn manifest_bytes_are_seed_deterministic() {
        let d1 = tempfile::tempdir().unwrap();
        let d2 = tempfile::tempdir().unwrap();
        synthesize_dataset(&toy_sources(), &toy_cfg(), d1.path()).unwrap();
        synthesize_dataset(&toy_sources(), &toy_cfg(), d2.path()).unwrap();
        let a = std::fs::read(d1.path().join(MANIFEST_NAME)).unwrap();
        let b = std::fs::read(d2.path().join(MANIFEST_NAME)).unwrap();
        assert_eq!(a, b);
        // pair payloads too
        let la = std::fs::read(d1.path().join("pair_000000_ldr.png")).unwrap();
        let lb = std::fs::read(d2.path().join("pair_000000_ldr.png")).unwrap();
        assert_eq!(la, lb);
    }

    #[test]
    fn round_trips_through_loader() {
        let dir = tempfile::tempdir().unwrap();
        synthesize_dataset(&toy_sources(), &toy_cfg(), dir.path()).unwrap();
        let pairs = load_dataset(&dir.path().join(MANIFEST_NAME)).unwrap();
        assert_eq!(pairs.len(), 12);
        for p in &pairs {
            assert_eq!(p.ldr.width(), 8);
            // decomposition identity survives the files: dim + bright == H*t
            for i in 0..p.dim.data().len() {
                if p.dim.data()[i] < 1.0 {
                    assert_eq!(p.bright.data()[i], 0.0);
                }
            }
        }
    }

    #[test]
    fn empty_sources_rejected() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(
            synthesize_dataset(&[], &toy_cfg(), dir.path()),
            Err(DatasetError::EmptySources)
        ));
    }
}
