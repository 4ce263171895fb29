//! Loss, optimizer schedule, batching and the training driver.
//!
//! The loss compares the dim head against the clipped target directly and
//! the bright head against the residual target in a compressive log domain:
//! `rms(H1 - C) + lambda * rms(T(H2) - T(B))` with
//! `T(x) = ln(1 + mu*x)/ln(1 + mu)`. Variant B has no decomposition heads,
//! so its direct output is split as `min(H,1)` / `max(H-1,0)` and scored by
//! the same metric; variant A supervises its three stage-inversion heads.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::dataset::SourcePair;
use crate::hisn::{ForwardOptions, ForwardVars, HisnError, Network, Variant};
use crate::img::{HdrImage, LdrImage};
use crate::mask::{compute_mask, Mask, MaskError};
use crate::tensor::{adam_step, AdamParams, AdamState, Tape, Tensor, TensorError, Var};
use crate::{sc, Scalar};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error(transparent)]
    Network(#[from] HisnError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Mask(#[from] MaskError),
    #[error("non-finite loss in {term} term at iteration {iteration}")]
    NonFiniteLoss {
        term: &'static str,
        iteration: u64,
    },
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("crop size {crop} exceeds image {w}x{h}")]
    CropTooLarge { crop: usize, w: usize, h: usize },
    #[error("bright target has {value} at index {index} where the dim target is unsaturated")]
    BrightLeak { index: usize, value: f32 },
    #[error("variant {0:?} needs a nonlinear intermediate target")]
    MissingIntermediate(Variant),
    #[error("writing loss log: {0}")]
    Io(#[from] std::io::Error),
}

/// Mask overrides for the ablation studies: a near-delta threshold, an
/// all-zero mask, or an all-one mask.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaskVariant {
    Default,
    ConfigC,
    ConfigD,
    ConfigE,
}

pub const CONFIG_C_TAU: f64 = 1.0 - 1e-10;

/// Apply a mask-variant override.
pub fn apply_mask_variant(mask: &Mask, variant: MaskVariant) -> Result<Mask, MaskError> {
    match variant {
        MaskVariant::Default => Ok(mask.clone()),
        MaskVariant::ConfigC => mask.with_tau(CONFIG_C_TAU),
        MaskVariant::ConfigD => Ok(mask.constant(0.0)),
        MaskVariant::ConfigE => Ok(mask.constant(1.0)),
    }
}

#[derive(Debug, Clone, Copy, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    /// Weight of the bright (log-domain) loss term.
    pub loss_lambda: f64,
    /// Log-map compression parameter.
    pub log_mu: f64,
    pub batch_size: usize,
    pub max_iterations: u64,
    pub initial_lr: f64,
    /// Multiplier applied to the learning rate every `lr_decay_interval`.
    pub lr_decay: f64,
    pub lr_decay_interval: u64,
    pub crop_size: usize,
    /// Saturation threshold for the mask.
    pub tau: f64,
    pub seed: u64,
    pub mask_variant: MaskVariant,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            loss_lambda: 1.0,
            log_mu: 5000.0,
            batch_size: 16,
            max_iterations: 20000,
            initial_lr: 1e-4,
            lr_decay: 0.9,
            lr_decay_interval: 5000,
            crop_size: 256,
            tau: 0.95,
            seed: 0,
            mask_variant: MaskVariant::Default,
        }
    }
}

impl TrainConfig {
    /// Desk-scale preset matching the toy network.
    pub fn toy() -> Self {
        TrainConfig {
            batch_size: 4,
            max_iterations: 2000,
            crop_size: 64,
            ..Default::default()
        }
    }

    /// Exact schedule: `lr0 * decay^floor(iter / interval)`.
    pub fn lr_at(&self, iteration: u64) -> f64 {
        self.initial_lr
            * self
                .lr_decay
                .powi((iteration / self.lr_decay_interval) as i32)
    }
}

/// One training crop with validated targets.
#[derive(Debug, Clone)]
pub struct TrainingSample {
    pub ldr: LdrImage,
    pub dim: LdrImage,
    pub bright: HdrImage,
    pub nonlinear: LdrImage,
    /// Index of the source pair this crop came from.
    pub source_index: usize,
}

impl TrainingSample {
    pub fn new(
        ldr: LdrImage,
        dim: LdrImage,
        bright: HdrImage,
        nonlinear: LdrImage,
        source_index: usize,
    ) -> Result<Self, TrainError> {
        for (index, (&b, &d)) in bright.data().iter().zip(dim.data()).enumerate() {
            if b < 0.0 || (d < 1.0 - 1e-6 && b > 1e-6) {
                return Err(TrainError::BrightLeak { index, value: b });
            }
        }
        Ok(TrainingSample {
            ldr,
            dim,
            bright,
            nonlinear,
            source_index,
        })
    }
}

/// Standalone compressive log map `ln(1 + mu*x)/ln(1 + mu)` on a tensor.
pub fn log_map<T: Scalar>(x: &Tensor<T>, mu: T) -> Result<Tensor<T>, TensorError> {
    let mut tape = Tape::new();
    let v = tape.input(x.clone(), false);
    let y = tape.log_map(v, mu)?;
    Ok(tape.value(y).clone())
}

/// Scalar handles to the loss and its two terms on the tape.
pub struct LossVars {
    pub total: Var,
    pub dim_term: Var,
    pub bright_term: Var,
}

/// Targets already loaded on the tape.
pub struct TargetVars {
    pub dim: Var,
    pub bright: Var,
    pub nonlinear: Option<Var>,
}

/// Build the training loss for any network variant.
pub fn loss_on_tape<T: Scalar>(
    tape: &mut Tape<T>,
    fwd: &ForwardVars,
    targets: &TargetVars,
    variant: Variant,
    lambda: T,
    mu: T,
) -> Result<LossVars, TrainError> {
    let rms_diff = |tape: &mut Tape<T>, a: Var, b: Var| -> Result<Var, TensorError> {
        let d = tape.sub(a, b)?;
        Ok(tape.rms(d))
    };
    let log_rms = |tape: &mut Tape<T>, a: Var, b: Var| -> Result<Var, TensorError> {
        let la = tape.log_map(a, mu)?;
        let lb = tape.log_map(b, mu)?;
        rms_diff(tape, la, lb)
    };

    let (dim_term, bright_term) = match variant {
        Variant::Default => {
            let h1 = fwd.h1.expect("default variant exposes h1");
            let h2 = fwd.h2.expect("default variant exposes h2");
            (
                rms_diff(tape, h1, targets.dim)?,
                log_rms(tape, h2, targets.bright)?,
            )
        }
        Variant::ConfigB => {
            // impose the clip decomposition on the direct output:
            // dim part min(H,1) = H - relu(H-1), bright part relu(H-1)
            let shifted = tape.shift(fwd.h, -T::one());
            let over = tape.relu(shifted);
            let dim_part = tape.sub(fwd.h, over)?;
            (
                rms_diff(tape, dim_part, targets.dim)?,
                log_rms(tape, over, targets.bright)?,
            )
        }
        Variant::ConfigA => {
            let [h1p, h2p, h3p] = fwd.a_heads.expect("variant A exposes three heads");
            let nonlinear = targets
                .nonlinear
                .ok_or(TrainError::MissingIntermediate(Variant::ConfigA))?;
            // h1' inverts quantization -> nonlinear image; h2' inverts the
            // response curve -> clipped linear image; h3' inverts clipping
            // -> the full radiance map.
            let t1 = rms_diff(tape, h1p, nonlinear)?;
            let t2 = rms_diff(tape, h2p, targets.dim)?;
            let dim_sum = tape.add(t1, t2)?;
            let full = tape.add(targets.dim, targets.bright)?;
            (dim_sum, log_rms(tape, h3p, full)?)
        }
    };

    let weighted = tape.scale(bright_term, lambda);
    let total = tape.add(dim_term, weighted)?;
    Ok(LossVars {
        total,
        dim_term,
        bright_term,
    })
}

#[derive(Debug, Clone, Copy)]
pub struct LossRow {
    pub iteration: u64,
    pub lr: f64,
    pub term1: f64,
    pub term2: f64,
    pub total: f64,
}

#[derive(Debug)]
pub struct TrainOutcome<T: Scalar> {
    pub state: AdamState<T>,
    pub log: Vec<LossRow>,
    /// Set when training aborted on divergence; parameters are rolled back
    /// to the last finite step.
    pub aborted: Option<String>,
}

impl<T: Scalar> TrainOutcome<T> {
    /// Mean total loss over the final (up to) `window` iterations.
    pub fn terminal_loss(&self, window: usize) -> f64 {
        let n = self.log.len().min(window.max(1));
        if n == 0 {
            return f64::NAN;
        }
        self.log[self.log.len() - n..]
            .iter()
            .map(|r| r.total)
            .sum::<f64>()
            / n as f64
    }
}

/// Assemble a batch of crops into network input/mask/target tensors.
struct Batch<T: Scalar> {
    input: Tensor<T>,
    mask: Tensor<T>,
    dim: Tensor<T>,
    bright: Tensor<T>,
    nonlinear: Tensor<T>,
}

fn stack<T: Scalar>(parts: Vec<Tensor<T>>) -> Tensor<T> {
    let inner = parts[0].shape()[1..].to_vec();
    let mut shape = vec![parts.len()];
    shape.extend_from_slice(&inner);
    let mut data = Vec::with_capacity(parts.iter().map(|t| t.numel()).sum());
    for p in &parts {
        data.extend_from_slice(p.data());
    }
    Tensor::new(shape, data)
}

fn sample_batch<T: Scalar>(
    dataset: &[SourcePair],
    cfg: &TrainConfig,
    rng: &mut ChaCha8Rng,
) -> Result<Batch<T>, TrainError> {
    let batch = cfg.batch_size.min(dataset.len()).max(1);
    let mut inputs = Vec::with_capacity(batch);
    let mut masks = Vec::with_capacity(batch);
    let mut dims = Vec::with_capacity(batch);
    let mut brights = Vec::with_capacity(batch);
    let mut nonlinears = Vec::with_capacity(batch);

    // without replacement when the dataset is small enough
    let indices: Vec<usize> = if batch == dataset.len() {
        (0..batch).collect()
    } else {
        (0..batch).map(|_| rng.gen_range(0..dataset.len())).collect()
    };

    for &idx in &indices {
        let pair = &dataset[idx];
        let (w, h) = (pair.ldr.width(), pair.ldr.height());
        if cfg.crop_size > w || cfg.crop_size > h {
            return Err(TrainError::CropTooLarge {
                crop: cfg.crop_size,
                w,
                h,
            });
        }
        let x0 = rng.gen_range(0..=w - cfg.crop_size);
        let y0 = rng.gen_range(0..=h - cfg.crop_size);
        let sample = TrainingSample::new(
            pair.ldr.crop(x0, y0, cfg.crop_size, cfg.crop_size),
            pair.dim.crop(x0, y0, cfg.crop_size, cfg.crop_size),
            pair.bright.crop(x0, y0, cfg.crop_size, cfg.crop_size),
            pair.nonlinear.crop(x0, y0, cfg.crop_size, cfg.crop_size),
            idx,
        )?;
        let mask = apply_mask_variant(&compute_mask(&sample.ldr, cfg.tau)?, cfg.mask_variant)?;
        inputs.push(sample.ldr.to_tensor());
        masks.push(mask.to_tensor());
        dims.push(sample.dim.to_tensor());
        brights.push(sample.bright.to_tensor());
        nonlinears.push(sample.nonlinear.to_tensor());
        let _ = sample;
    }
    Ok(Batch {
        input: stack(inputs),
        mask: stack(masks),
        dim: stack(dims),
        bright: stack(brights),
        nonlinear: stack(nonlinears),
    })
}

/// Train the network in place. Fully reproducible from `(configs, seed)`.
pub fn train<T: Scalar>(
    dataset: &[SourcePair],
    net: &mut Network<T>,
    cfg: &TrainConfig,
) -> Result<TrainOutcome<T>, TrainError> {
    if dataset.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut state = AdamState::new(&net.store, AdamParams::default());
    let mut log = Vec::with_capacity(cfg.max_iterations as usize);
    let lambda: T = sc(cfg.loss_lambda);
    let mu: T = sc(cfg.log_mu);
    let mut last_good = net.store.clone();

    for iteration in 0..cfg.max_iterations {
        let batch = sample_batch::<T>(dataset, cfg, &mut rng)?;
        let mut tape = Tape::new();
        let input = tape.input(batch.input, false);
        let mask = tape.input(batch.mask, false);
        let targets = TargetVars {
            dim: tape.input(batch.dim, false),
            bright: tape.input(batch.bright, false),
            nonlinear: Some(tape.input(batch.nonlinear, false)),
        };
        let pvars = net.load_params(&mut tape, true);
        let fwd = net.forward_on_tape(&mut tape, input, mask, &pvars, ForwardOptions::default())?;
        let loss = loss_on_tape(&mut tape, &fwd, &targets, net.cfg.variant, lambda, mu)?;

        let term1 = tape.value(loss.dim_term).item().to_f64().unwrap_or(f64::NAN);
        let term2 = tape
            .value(loss.bright_term)
            .item()
            .to_f64()
            .unwrap_or(f64::NAN);
        let total = tape.value(loss.total).item().to_f64().unwrap_or(f64::NAN);
        let lr = cfg.lr_at(iteration);
        if !total.is_finite() {
            // roll back to the last finite parameters and stop
            let term = if !term1.is_finite() { "dim" } else { "bright" };
            net.store = last_good;
            return Ok(TrainOutcome {
                state,
                log,
                aborted: Some(
                    TrainError::NonFiniteLoss { term, iteration }.to_string(),
                ),
            });
        }
        log.push(LossRow {
            iteration,
            lr,
            term1,
            term2,
            total,
        });

        let grads_all = tape.backward(loss.total)?;
        let grads: Vec<Tensor<T>> = pvars.iter().map(|&v| grads_all.wrt_or_zeros(v)).collect();
        last_good = net.store.clone();
        adam_step(&mut net.store, &grads, &mut state, sc(lr))?;
    }

    Ok(TrainOutcome {
        state,
        log,
        aborted: None,
    })
}

/// CSV schema: iteration, lr, term1, term2, total.
pub fn write_loss_csv(path: &Path, log: &[LossRow]) -> Result<(), std::io::Error> {
    use std::io::Write;
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "iteration,lr,term1,term2,total")?;
    for row in log {
        writeln!(
            out,
            "{},{},{},{},{}",
            row.iteration, row.lr, row.term1, row.term2, row.total
        )?;
    }
    Ok(())
}

/// The six comparative settings: the proposed design, the two alternative
/// synthesis layouts, and the three mask overrides.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AblationVariant {
    Default,
    A,
    B,
    C,
    D,
    E,
}

impl AblationVariant {
    pub fn all() -> [AblationVariant; 6] {
        [
            AblationVariant::Default,
            AblationVariant::A,
            AblationVariant::B,
            AblationVariant::C,
            AblationVariant::D,
            AblationVariant::E,
        ]
    }

    pub fn name(&self) -> &'static str {
        match self {
            AblationVariant::Default => "default",
            AblationVariant::A => "config_a",
            AblationVariant::B => "config_b",
            AblationVariant::C => "config_c",
            AblationVariant::D => "config_d",
            AblationVariant::E => "config_e",
        }
    }

    pub fn network_variant(&self) -> Variant {
        match self {
            AblationVariant::A => Variant::ConfigA,
            AblationVariant::B => Variant::ConfigB,
            _ => Variant::Default,
        }
    }

    pub fn mask_variant(&self) -> MaskVariant {
        match self {
            AblationVariant::C => MaskVariant::ConfigC,
            AblationVariant::D => MaskVariant::ConfigD,
            AblationVariant::E => MaskVariant::ConfigE,
            _ => MaskVariant::Default,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::PairRecord;
    use crate::hisn::{build_network, HisnConfig};

    fn record(i: usize) -> PairRecord {
        PairRecord {
            index: i,
            source: "test".into(),
            exposure: 1.0,
            crf: "identity".into(),
            sigma_s: 0.0,
            sigma_c: 0.0,
            jpeg_quality: None,
            seed: 0,
            ldr: String::new(),
            dim: String::new(),
            bright: String::new(),
            nonlinear: String::new(),
        }
    }

    fn tiny_pair(extent: usize, peak: f32) -> SourcePair {
        // gradient image with a bright blob in one corner
        let plane = extent * extent;
        let mut h = vec![0.0f32; plane * 3];
        for c in 0..3 {
            for i in 0..plane {
                h[c * plane + i] = 0.3 * (i as f32 / plane as f32);
            }
            for y in 0..extent / 2 {
                for x in 0..extent / 2 {
                    h[c * plane + y * extent + x] = peak;
                }
            }
        }
        let hdr = HdrImage::new(extent, extent, h).unwrap();
        let pair = crate::pipeline::synthesize_pair(
            &hdr,
            1.0,
            &crate::crf::ResponseCurve::identity(),
            &crate::pipeline::NoiseParams::none(),
            None,
        )
        .unwrap();
        SourcePair {
            ldr: pair.ldr,
            dim: pair.dim_target,
            bright: HdrImage::new(extent, extent, pair.bright_target.data().to_vec()).unwrap(),
            nonlinear: pair.nonlinear_target,
            record: record(0),
        }
    }

    #[test]
    fn log_map_values() {
        let x = Tensor::<f64>::from_f64_slice(vec![3], &[0.0, 0.1, 1.0]);
        let y = log_map(&x, 5000.0).unwrap();
        assert!(y.data()[0].abs() < 1e-12);
        assert!((y.data()[1] - 0.7299).abs() < 1e-4);
        assert!((y.data()[2] - 1.0).abs() < 1e-12);
        // strictly monotone on [0,1]
        let xs: Vec<f64> = (0..=100).map(|i| i as f64 / 100.0).collect();
        let ys = log_map(&Tensor::from_f64_slice(vec![101], &xs), 5000.0).unwrap();
        for w in ys.data().windows(2) {
            assert!(w[1] > w[0]);
        }
        let neg = Tensor::<f64>::from_f64_slice(vec![1], &[-0.1]);
        assert!(log_map(&neg, 5000.0).is_err());
    }

    #[test]
    fn lr_schedule_exact() {
        let cfg = TrainConfig::default();
        assert_eq!(cfg.lr_at(0), 1e-4);
        assert_eq!(cfg.lr_at(4999), 1e-4);
        assert_eq!(cfg.lr_at(5000), 1e-4 * 0.9);
        assert_eq!(cfg.lr_at(10000), 1e-4 * 0.9 * 0.9);
    }

    #[test]
    fn perfect_prediction_has_zero_loss() {
        let mut tape = Tape::<f64>::new();
        let target_dim = Tensor::from_f64_slice(vec![1, 1, 2, 2], &[0.1, 0.4, 1.0, 1.0]);
        let target_bright = Tensor::from_f64_slice(vec![1, 1, 2, 2], &[0.0, 0.0, 0.5, 2.0]);
        let h1 = tape.input(target_dim.clone(), false);
        let h2 = tape.input(target_bright.clone(), false);
        let h = tape.add(h1, h2).unwrap();
        let fwd = ForwardVars {
            h,
            h1: Some(h1),
            h2: Some(h2),
            a_heads: None,
            stages: vec![],
        };
        let targets = TargetVars {
            dim: tape.input(target_dim, false),
            bright: tape.input(target_bright, false),
            nonlinear: None,
        };
        let loss =
            loss_on_tape(&mut tape, &fwd, &targets, Variant::Default, 1.0, 5000.0).unwrap();
        assert_eq!(tape.value(loss.total).item(), 0.0);
    }

    #[test]
    fn lambda_scales_only_the_bright_term() {
        let build = |lambda: f64| {
            let mut tape = Tape::<f64>::new();
            let h1 = tape.input(Tensor::full(vec![1, 1, 2, 2], 0.5), false);
            let h2 = tape.input(Tensor::full(vec![1, 1, 2, 2], 0.3), false);
            let h = tape.add(h1, h2).unwrap();
            let fwd = ForwardVars {
                h,
                h1: Some(h1),
                h2: Some(h2),
                a_heads: None,
                stages: vec![],
            };
            let targets = TargetVars {
                dim: tape.input(Tensor::full(vec![1, 1, 2, 2], 0.4), false),
                bright: tape.input(Tensor::zeros(vec![1, 1, 2, 2]), false),
                nonlinear: None,
            };
            let loss =
                loss_on_tape(&mut tape, &fwd, &targets, Variant::Default, lambda, 5000.0).unwrap();
            (
                tape.value(loss.total).item(),
                tape.value(loss.bright_term).item(),
            )
        };
        let (l1, term2) = build(1.0);
        let (l2, _) = build(2.0);
        assert!((l2 - l1 - term2).abs() < 1e-12);
    }

    #[test]
    fn rms_hand_example() {
        // H1 off by 0.1 everywhere on a 2x2 single-channel map, H2 exact:
        // loss = sqrt(mean(0.1^2)) = 0.1
        let mut tape = Tape::<f64>::new();
        let h1 = tape.input(Tensor::full(vec![1, 1, 2, 2], 0.6), false);
        let h2 = tape.input(Tensor::zeros(vec![1, 1, 2, 2]), false);
        let h = tape.add(h1, h2).unwrap();
        let fwd = ForwardVars {
            h,
            h1: Some(h1),
            h2: Some(h2),
            a_heads: None,
            stages: vec![],
        };
        let targets = TargetVars {
            dim: tape.input(Tensor::full(vec![1, 1, 2, 2], 0.5), false),
            bright: tape.input(Tensor::zeros(vec![1, 1, 2, 2]), false),
            nonlinear: None,
        };
        let loss =
            loss_on_tape(&mut tape, &fwd, &targets, Variant::Default, 1.0, 5000.0).unwrap();
        assert!((tape.value(loss.total).item() - 0.1).abs() < 1e-12);
    }

    #[test]
    fn mask_variant_overrides() {
        let ldr = LdrImage::new(2, 1, vec![1.0, 0.97, 1.0, 0.97, 1.0, 0.97], false).unwrap();
        let mask = compute_mask(&ldr, 0.95).unwrap();
        let c = apply_mask_variant(&mask, MaskVariant::ConfigC).unwrap();
        // only exactly-saturated pixels survive the near-delta threshold
        assert_eq!(c.values()[0], 1.0);
        assert_eq!(c.values()[1], 0.0);
        let d = apply_mask_variant(&mask, MaskVariant::ConfigD).unwrap();
        assert!(d.values().iter().all(|&v| v == 0.0));
        let e = apply_mask_variant(&mask, MaskVariant::ConfigE).unwrap();
        assert!(e.values().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn training_sample_rejects_bright_leak() {
        let ldr = LdrImage::new(1, 1, vec![0.5; 3], false).unwrap();
        let dim = LdrImage::new(1, 1, vec![0.5; 3], false).unwrap();
        let bright = HdrImage::new(1, 1, vec![0.5; 3]).unwrap();
        let nl = ldr.clone();
        assert!(matches!(
            TrainingSample::new(ldr, dim, bright, nl, 0),
            Err(TrainError::BrightLeak { .. })
        ));
    }

    #[test]
    fn same_seed_same_loss_log() {
        let dataset = vec![tiny_pair(8, 2.0)];
        let net_cfg = HisnConfig {
            fusion_width: 4,
            fusion_blocks: 1,
            bright_blocks: 1,
            local_depth: 1,
            dilation_depth: 1,
            global_depth: 1,
            variant: Variant::Default,
            seed: 3,
        };
        let cfg = TrainConfig {
            batch_size: 1,
            max_iterations: 5,
            crop_size: 8,
            seed: 9,
            ..TrainConfig::toy()
        };
        let run = || {
            let mut net = build_network::<f32>(net_cfg);
            train(&dataset, &mut net, &cfg).unwrap()
        };
        let (a, b) = (run(), run());
        assert_eq!(a.log.len(), b.log.len());
        for (ra, rb) in a.log.iter().zip(&b.log) {
            assert_eq!(ra.total, rb.total);
            assert_eq!(ra.term1, rb.term1);
        }
    }

    #[test]
    fn loss_decreases_on_tiny_overfit() {
        let dataset = vec![tiny_pair(8, 3.0)];
        let net_cfg = HisnConfig {
            fusion_width: 8,
            fusion_blocks: 2,
            bright_blocks: 2,
            local_depth: 1,
            dilation_depth: 1,
            global_depth: 1,
            variant: Variant::Default,
            seed: 5,
        };
        let cfg = TrainConfig {
            batch_size: 1,
            max_iterations: 60,
            crop_size: 8,
            seed: 2,
            initial_lr: 1e-3,
            ..TrainConfig::toy()
        };
        let mut net = build_network::<f32>(net_cfg);
        let outcome = train(&dataset, &mut net, &cfg).unwrap();
        assert!(outcome.aborted.is_none());
        let first = outcome.log[0].total;
        let last = outcome.terminal_loss(5);
        assert!(last < first, "no progress: {first} -> {last}");
    }
}
