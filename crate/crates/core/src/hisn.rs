//! Hierarchical synthesis network.
//!
//! Three feature-extraction branches (local detail, dilated mid-level
//! context, a strided global descriptor tiled back to full resolution) are
//! concatenated and fused by a conv trunk. The dim part H1 in [0,1] comes
//! off the trunk through a sigmoid head; the bright residual H2 >= 0 is
//! produced by further conv blocks whose activations are modulated by the
//! lightness-adaptive chains, then a ReLU head. The reconstruction is
//! H = H1 + H2. Ablation variants replace the two-part decomposition with
//! three stage-inverting heads (A) or one direct head (B).

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

use crate::img::{HdrImage, ImageError, LdrImage};
use crate::lamn::{self, ConvLayer, LamnError, LamnParams, ModulationStage};
use crate::mask::Mask;
use crate::tensor::{ConvSpec, ParamStore, Tape, Tensor, TensorError, Var};
use crate::{sc, Scalar};

#[derive(Debug, Error)]
pub enum HisnError {
    #[error(
        "input {h}x{w} incompatible with global branch depth {depth}: \
         the network needs square {need}x{need} inputs (admissible extents are 4*2^g: 4, 8, 16, 32, 64, 128, 256, ...)"
    )]
    BadResolution {
        h: usize,
        w: usize,
        depth: usize,
        need: usize,
    },
    #[error("mask {mh}x{mw} does not match input {h}x{w}")]
    MaskMismatch {
        mh: usize,
        mw: usize,
        h: usize,
        w: usize,
    },
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Modulation(#[from] LamnError),
    #[error(transparent)]
    Image(#[from] ImageError),
    #[error(transparent)]
    Codec(#[from] crate::io::CodecError),
    #[error("writing activation dump: {0}")]
    Io(#[from] std::io::Error),
}

/// Which synthesis head arrangement to build.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// Dim part + modulated bright residual, composed as H1 + H2.
    Default,
    /// Three sequential heads inverting quantization, response curve and
    /// clipping one at a time.
    ConfigA,
    /// No decomposition: one direct ReLU head.
    ConfigB,
}

#[derive(Debug, Clone, Copy, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HisnConfig {
    /// Channel width C of the fused trunk (each branch also emits C).
    pub fusion_width: usize,
    /// Number of fusion blocks before the dim head (m).
    pub fusion_blocks: usize,
    /// Number of modulated bright blocks (n).
    pub bright_blocks: usize,
    pub local_depth: usize,
    pub dilation_depth: usize,
    /// Stride-2 convs in the global branch; fixes the input extent at 4*2^g.
    pub global_depth: usize,
    pub variant: Variant,
    pub seed: u64,
}

impl Default for HisnConfig {
    fn default() -> Self {
        HisnConfig {
            fusion_width: 64,
            fusion_blocks: 5,
            bright_blocks: 6,
            local_depth: 2,
            dilation_depth: 4,
            global_depth: 6,
            variant: Variant::Default,
            seed: 0,
        }
    }
}

impl HisnConfig {
    /// Desk-scale preset: C=16 on 64x64 inputs.
    pub fn toy() -> Self {
        HisnConfig {
            fusion_width: 16,
            global_depth: 4,
            ..Default::default()
        }
    }

    /// The single square input extent this configuration accepts.
    pub fn input_extent(&self) -> usize {
        4usize << self.global_depth
    }

    /// Pick the global depth to accept `extent` x `extent` inputs.
    pub fn for_input_extent(mut self, extent: usize) -> Result<Self, HisnError> {
        let mut e = extent;
        let mut depth = 0;
        while e > 4 && e % 2 == 0 {
            e /= 2;
            depth += 1;
        }
        if e != 4 {
            return Err(HisnError::BadResolution {
                h: extent,
                w: extent,
                depth: self.global_depth,
                need: self.input_extent(),
            });
        }
        self.global_depth = depth;
        Ok(self)
    }
}

/// Full parameter set plus the layer descriptors that index into it.
#[derive(Debug, Clone)]
pub struct Network<T: Scalar> {
    pub cfg: HisnConfig,
    pub store: ParamStore<T>,
    local: Vec<ConvLayer>,
    dilation: Vec<ConvLayer>,
    global: Vec<ConvLayer>,
    fusion: Vec<ConvLayer>,
    bright: Vec<ConvLayer>,
    h1_head: Option<ConvLayer>,
    h2_head: Option<ConvLayer>,
    direct_head: Option<ConvLayer>,
    a_heads: Option<[ConvLayer; 3]>,
    pub lamn: LamnParams,
}

struct Builder<T: Scalar> {
    store: ParamStore<T>,
    rng: ChaCha8Rng,
}

impl<T: Scalar> Builder<T> {
    /// He-initialized conv weights, zero biases.
    fn conv(&mut self, name: &str, spec: ConvSpec) -> ConvLayer {
        let fan_in = (spec.in_channels * spec.kernel * spec.kernel) as f64;
        let std = (2.0 / fan_in).sqrt();
        let normal = Normal::new(0.0, std).expect("valid std");
        let wlen: usize = spec.weight_shape().iter().product();
        let wdata: Vec<T> = (0..wlen)
            .map(|_| sc(normal.sample(&mut self.rng)))
            .collect();
        let weight = self
            .store
            .insert(format!("{name}.weight"), Tensor::new(spec.weight_shape(), wdata));
        let bias = self
            .store
            .insert(format!("{name}.bias"), Tensor::zeros(vec![spec.out_channels]));
        ConvLayer { weight, bias, spec }
    }
}

/// Construct the network deterministically from the config and its seed.
pub fn build_network<T: Scalar>(cfg: HisnConfig) -> Network<T> {
    let mut b = Builder::<T> {
        store: ParamStore::new(),
        rng: ChaCha8Rng::seed_from_u64(cfg.seed),
    };
    let c = cfg.fusion_width;

    let mut local = Vec::new();
    for i in 0..cfg.local_depth {
        let cin = if i == 0 { 3 } else { c };
        local.push(b.conv(&format!("local.{i}"), ConvSpec::k3s1p1d1(cin, c)));
    }

    let mut dilation = Vec::new();
    for i in 0..cfg.dilation_depth {
        let cin = if i == 0 { 3 } else { c };
        dilation.push(b.conv(&format!("dilation.{i}"), ConvSpec::k3s1p2d2(cin, c)));
    }

    let mut global = Vec::new();
    for i in 0..cfg.global_depth {
        let cin = if i == 0 { 3 } else { c };
        global.push(b.conv(&format!("global.{i}"), ConvSpec::k3s2p1d1(cin, c)));
    }
    let g_in = if cfg.global_depth == 0 { 3 } else { c };
    global.push(b.conv("global.collapse", ConvSpec::k4s1p0d1(g_in, c)));

    let mut fusion = Vec::new();
    for i in 0..cfg.fusion_blocks {
        let cin = if i == 0 { 3 * c } else { c };
        fusion.push(b.conv(&format!("fusion.{i}"), ConvSpec::k3s1p1d1(cin, c)));
    }

    let mut bright = Vec::new();
    for i in 0..cfg.bright_blocks {
        bright.push(b.conv(&format!("bright.{i}"), ConvSpec::k3s1p1d1(c, c)));
    }

    let head_spec = ConvSpec::k3s1p1d1(c, 3);
    let (h1_head, h2_head, direct_head, a_heads) = match cfg.variant {
        Variant::Default => (
            Some(b.conv("h1_head", head_spec)),
            Some(b.conv("h2_head", head_spec)),
            None,
            None,
        ),
        Variant::ConfigB => (None, None, Some(b.conv("direct_head", head_spec)), None),
        Variant::ConfigA => (
            None,
            None,
            None,
            Some([
                b.conv("head_a.0", head_spec),
                b.conv("head_a.1", head_spec),
                b.conv("head_a.2", head_spec),
            ]),
        ),
    };

    let mut lamn = LamnParams::default();
    for i in 0..cfg.bright_blocks {
        let cin = if i == 0 { 1 } else { c };
        lamn.gamma
            .push(b.conv(&format!("lamn.gamma.{i}"), ConvSpec::k3s1p1d1(cin, c)));
    }
    for i in 0..cfg.bright_blocks {
        let cin = if i == 0 { 1 } else { c };
        lamn.beta
            .push(b.conv(&format!("lamn.beta.{i}"), ConvSpec::k3s1p1d1(cin, c)));
    }

    Network {
        cfg,
        store: b.store,
        local,
        dilation,
        global,
        fusion,
        bright,
        h1_head,
        h2_head,
        direct_head,
        a_heads,
        lamn,
    }
}

/// Handles to the synthesis outputs on a tape.
pub struct ForwardVars {
    /// Final HDR estimate (always present).
    pub h: Var,
    /// Dim part in [0,1] (default variant only).
    pub h1: Option<Var>,
    /// Bright residual >= 0 (default variant only).
    pub h2: Option<Var>,
    /// Stage-inversion heads h1', h2', h3' (variant A only).
    pub a_heads: Option<[Var; 3]>,
    /// Modulation fields per bright block (empty when bypassed).
    pub stages: Vec<ModulationStage>,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ForwardOptions {
    /// Skip modulation entirely, leaving the bright pathway unmodulated.
    pub bypass_modulation: bool,
}

/// Inference result; the composition H = H1 + H2 holds exactly.
#[derive(Debug, Clone)]
pub struct HdrPrediction {
    pub h: HdrImage,
    pub h1: Option<LdrImage>,
    pub h2: Option<HdrImage>,
    /// Variant A intermediates (h1', h2' in [0,1]; h3' is `h`).
    pub intermediate: Option<(LdrImage, LdrImage)>,
}

impl<T: Scalar> Network<T> {
    pub fn validate_input(&self, h: usize, w: usize) -> Result<(), HisnError> {
        let need = self.cfg.input_extent();
        if h != need || w != need {
            return Err(HisnError::BadResolution {
                h,
                w,
                depth: self.cfg.global_depth,
                need,
            });
        }
        Ok(())
    }

    /// Load every parameter tensor onto the tape, in store order.
    pub fn load_params(&self, tape: &mut Tape<T>, trainable: bool) -> Vec<Var> {
        self.store
            .iter()
            .map(|(_, t)| tape.input(t.clone(), trainable))
            .collect()
    }

    fn conv_relu(
        &self,
        tape: &mut Tape<T>,
        x: Var,
        layer: &ConvLayer,
        pvars: &[Var],
    ) -> Result<Var, TensorError> {
        let y = tape.conv2d(x, pvars[layer.weight], pvars[layer.bias], layer.spec)?;
        Ok(tape.relu(y))
    }

    fn head(
        &self,
        tape: &mut Tape<T>,
        x: Var,
        layer: &ConvLayer,
        pvars: &[Var],
        sigmoid: bool,
    ) -> Result<Var, TensorError> {
        let y = tape.conv2d(x, pvars[layer.weight], pvars[layer.bias], layer.spec)?;
        Ok(if sigmoid {
            tape.sigmoid(y)
        } else {
            tape.relu(y)
        })
    }

    /// Run the network over `(N,3,H,W)` input and `(N,1,H,W)` mask vars.
    pub fn forward_on_tape(
        &self,
        tape: &mut Tape<T>,
        input: Var,
        mask: Var,
        pvars: &[Var],
        opts: ForwardOptions,
    ) -> Result<ForwardVars, HisnError> {
        let shape = tape.value(input).shape().to_vec();
        if shape.len() != 4 || shape[1] != 3 {
            return Err(TensorError::RankMismatch {
                context: "network input (N,3,H,W)",
                expected: 4,
                got: shape,
            }
            .into());
        }
        let (h, w) = (shape[2], shape[3]);
        self.validate_input(h, w)?;
        let mshape = tape.value(mask).shape();
        if mshape.len() != 4 || mshape[1] != 1 || mshape[2] != h || mshape[3] != w {
            return Err(HisnError::MaskMismatch {
                mh: mshape.get(2).copied().unwrap_or(0),
                mw: mshape.get(3).copied().unwrap_or(0),
                h,
                w,
            });
        }

        // feature extraction branches
        let mut local = input;
        for layer in &self.local {
            local = self.conv_relu(tape, local, layer, pvars)?;
        }
        let mut dil = input;
        for layer in &self.dilation {
            dil = self.conv_relu(tape, dil, layer, pvars)?;
        }
        let mut glob = input;
        for layer in &self.global {
            glob = self.conv_relu(tape, glob, layer, pvars)?;
        }
        let glob = tape.tile_spatial(glob, h, w)?;
        let features = tape.concat(&[local, dil, glob])?;

        // fusion trunk
        let mut trunk = features;
        for layer in &self.fusion {
            trunk = self.conv_relu(tape, trunk, layer, pvars)?;
        }

        // modulation fields
        let stages = if opts.bypass_modulation {
            Vec::new()
        } else {
            lamn::lamn_forward(tape, mask, &self.lamn, pvars)?
        };
        let modulated = |tape: &mut Tape<T>, x: Var, i: usize| -> Result<Var, HisnError> {
            if opts.bypass_modulation {
                return Ok(x);
            }
            lamn::modulate(tape, x, stages[i])
                .map_err(|source| LamnError::Stage { stage: i + 1, source }.into())
        };

        match self.cfg.variant {
            Variant::Default => {
                let h1 = self.head(tape, trunk, self.h1_head.as_ref().unwrap(), pvars, true)?;
                let mut x = trunk;
                for (i, layer) in self.bright.iter().enumerate() {
                    x = self.conv_relu(tape, x, layer, pvars)?;
                    x = modulated(tape, x, i)?;
                }
                let h2 = self.head(tape, x, self.h2_head.as_ref().unwrap(), pvars, false)?;
                let hsum = tape.add(h1, h2)?;
                Ok(ForwardVars {
                    h: hsum,
                    h1: Some(h1),
                    h2: Some(h2),
                    a_heads: None,
                    stages,
                })
            }
            Variant::ConfigB => {
                let mut x = trunk;
                for (i, layer) in self.bright.iter().enumerate() {
                    x = self.conv_relu(tape, x, layer, pvars)?;
                    x = modulated(tape, x, i)?;
                }
                let hv = self.head(tape, x, self.direct_head.as_ref().unwrap(), pvars, false)?;
                Ok(ForwardVars {
                    h: hv,
                    h1: None,
                    h2: None,
                    a_heads: None,
                    stages,
                })
            }
            Variant::ConfigA => {
                let heads = self.a_heads.as_ref().unwrap();
                let h1p = self.head(tape, trunk, &heads[0], pvars, true)?;
                let mid = self.bright.len().div_ceil(2);
                let mut x = trunk;
                for (i, layer) in self.bright.iter().enumerate().take(mid) {
                    x = self.conv_relu(tape, x, layer, pvars)?;
                    x = modulated(tape, x, i)?;
                }
                let h2p = self.head(tape, x, &heads[1], pvars, true)?;
                for (i, layer) in self.bright.iter().enumerate().skip(mid) {
                    x = self.conv_relu(tape, x, layer, pvars)?;
                    x = modulated(tape, x, i)?;
                }
                let h3p = self.head(tape, x, &heads[2], pvars, false)?;
                Ok(ForwardVars {
                    h: h3p,
                    h1: None,
                    h2: None,
                    a_heads: Some([h1p, h2p, h3p]),
                    stages,
                })
            }
        }
    }

    /// Single-image inference.
    pub fn infer(&self, ldr: &LdrImage, mask: &Mask) -> Result<HdrPrediction, HisnError> {
        let mut tape = Tape::new();
        let input = tape.input(ldr.to_tensor(), false);
        let mvar = tape.input(mask.to_tensor(), false);
        let pvars = self.load_params(&mut tape, false);
        let out = self.forward_on_tape(&mut tape, input, mvar, &pvars, ForwardOptions::default())?;

        let to_hdr = |v: Var| HdrImage::from_tensor(tape.value(v));
        let to_ldr = |v: Var| {
            let t = tape.value(v);
            LdrImage::new(
                t.shape()[3],
                t.shape()[2],
                t.data()
                    .iter()
                    .map(|x| (x.to_f64().unwrap_or(0.0) as f32).clamp(0.0, 1.0))
                    .collect(),
                false,
            )
        };

        Ok(HdrPrediction {
            h: to_hdr(out.h)?,
            h1: match out.h1 {
                Some(v) => Some(to_ldr(v)?),
                None => None,
            },
            h2: match out.h2 {
                Some(v) => Some(to_hdr(v)?),
                None => None,
            },
            intermediate: match out.a_heads {
                Some([h1p, h2p, _]) => Some((to_ldr(h1p)?, to_ldr(h2p)?)),
                None => None,
            },
        })
    }
}

/// What `dump_activations` wrote.
#[derive(Debug, Default)]
pub struct DumpSummary {
    pub gray_files: usize,
    pub product_files: usize,
    /// Channels that were constant (max == min) and were written as black.
    pub constant_channels: Vec<String>,
}

/// Write every modulation field as a min-max normalized grayscale PNG, plus
/// each gamma channel multiplied into the LDR input as an RGB PNG.
pub fn dump_activations<T: Scalar>(
    net: &Network<T>,
    ldr: &LdrImage,
    mask: &Mask,
    out_dir: &Path,
    max_channels: Option<usize>,
) -> Result<DumpSummary, HisnError> {
    std::fs::create_dir_all(out_dir)?;
    let mut tape = Tape::new();
    let input = tape.input(ldr.to_tensor(), false);
    let mvar = tape.input(mask.to_tensor(), false);
    let pvars = net.load_params(&mut tape, false);
    let out = net.forward_on_tape(&mut tape, input, mvar, &pvars, ForwardOptions::default())?;

    let mut summary = DumpSummary::default();
    let (w, h) = (ldr.width(), ldr.height());
    let plane = w * h;

    for (i, stage) in out.stages.iter().enumerate() {
        for (kind, var) in [("gamma", stage.gamma), ("beta", stage.beta)] {
            let t = tape.value(var);
            let channels = t.shape()[1].min(max_channels.unwrap_or(usize::MAX));
            for c in 0..channels {
                let chan: Vec<f64> = t.data()[c * plane..(c + 1) * plane]
                    .iter()
                    .map(|v| v.to_f64().unwrap_or(0.0))
                    .collect();
                let name = format!("{kind}_s{}_c{c}.png", i + 1);
                let (bytes, constant) = normalize_to_bytes(&chan);
                if constant {
                    summary.constant_channels.push(name.clone());
                }
                crate::io::png::write_gray8(&out_dir.join(&name), w, h, &bytes)?;
                summary.gray_files += 1;

                if kind == "gamma" {
                    // channel-wise product with the LDR input, shown as RGB
                    let mut rgb = vec![0.0f64; plane * 3];
                    for ch in 0..3 {
                        let lchan = ldr.channel(ch);
                        for p in 0..plane {
                            rgb[ch * plane + p] = chan[p] * lchan[p] as f64;
                        }
                    }
                    let (bytes, constant) = normalize_to_bytes(&rgb);
                    let name = format!("gamma_times_l_s{}_c{c}.png", i + 1);
                    if constant {
                        summary.constant_channels.push(name.clone());
                    }
                    let mut interleaved = vec![0u8; plane * 3];
                    for p in 0..plane {
                        for ch in 0..3 {
                            interleaved[p * 3 + ch] = bytes[ch * plane + p];
                        }
                    }
                    crate::io::png::write_rgb8(&out_dir.join(&name), w, h, &interleaved)?;
                    summary.product_files += 1;
                }
            }
        }
    }
    Ok(summary)
}

/// Min-max normalize to u8; constant inputs map to all zeros.
fn normalize_to_bytes(values: &[f64]) -> (Vec<u8>, bool) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for &v in values {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if !(hi > lo) {
        return (vec![0u8; values.len()], true);
    }
    let scale = 255.0 / (hi - lo);
    (
        values
            .iter()
            .map(|&v| ((v - lo) * scale + 0.5).floor().clamp(0.0, 255.0) as u8)
            .collect(),
        false,
    )
}
