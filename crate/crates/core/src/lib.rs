//! Inverse tone mapping toolkit.
//!
//! This crate bundles everything needed to train and evaluate a
//! hierarchical-synthesis HDR reconstruction network at desk scale:
//!
//! - [`tensor`]: a minimal deterministic reverse-mode autodiff engine with
//!   exactly the primitives the network needs (conv, relu, sigmoid, average
//!   pooling, concat, elementwise arithmetic, log-domain mapping, RMS
//!   reduction) plus ADAM and a finite-difference gradient oracle.
//! - [`pipeline`]: the forward LDR imaging simulator (clip, camera response,
//!   quantization, sensor noise, optional JPEG round trip) used to synthesize
//!   supervised LDR/HDR pairs.
//! - [`mask`] / [`lamn`]: the lightness-adaptive saturation mask and the
//!   modulation-parameter chains that scale and bias network activations.
//! - [`hisn`]: the hierarchical synthesis network itself (three-branch
//!   feature extraction, dim-part and bright-part heads, ablation variants).
//! - [`train`]: loss, optimizer schedule, batching and the training driver.
//! - [`metrics`]: perceptually-uniform PSNR/SSIM/MS-SSIM evaluation.
//! - [`io`]: Radiance RGBE and PFM codecs, PNG helpers, Drago tone-mapped
//!   previews and exposure stacks.
//!
//! All core math is generic over the scalar type via [`Scalar`]: training
//! runs in `f32`, gradient checking in `f64`. Concrete aliases for the
//! common instantiations live at the crate root.

use std::fmt::{Debug, Display};
use std::ops::{AddAssign, MulAssign, SubAssign};

pub mod checkpoint;
pub mod crf;
pub mod dataset;
pub mod hisn;
pub mod img;
pub mod io;
pub mod lamn;
pub mod mask;
pub mod metrics;
pub mod pipeline;
pub mod tensor;
pub mod train;
pub mod verify;

/// Floating-point scalar the numeric core is generic over.
///
/// `f32` is the training/inference type; `f64` is used by the gradient
/// checker so the finite-difference oracle stays tight.
pub trait Scalar:
    num_traits::Float
    + num_traits::FromPrimitive
    + num_traits::ToPrimitive
    + AddAssign
    + SubAssign
    + MulAssign
    + Debug
    + Display
    + Default
    + Send
    + Sync
    + 'static
{
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Cast a finite `f64` constant into the generic scalar type.
#[inline]
pub fn sc<T: Scalar>(v: f64) -> T {
    T::from_f64(v).expect("constant representable in scalar type")
}

pub type Tensor32 = tensor::Tensor<f32>;
pub type Tensor64 = tensor::Tensor<f64>;
pub type Tape32 = tensor::Tape<f32>;
pub type Tape64 = tensor::Tape<f64>;
pub type Network32 = hisn::Network<f32>;
pub type Network64 = hisn::Network<f64>;




