//! Lightness-adaptive saturation mask.
//!
//! Marks saturated pixels and their near-saturated surroundings with a ramp
//! `max(0, lightness - tau) / (1 - tau)`, so that fully saturated pixels get
//! 1, pixels at or below the threshold get 0, and everything between ramps
//! linearly.

use thiserror::Error;

use crate::img::LdrImage;
use crate::tensor::Tensor;
use crate::Scalar;

#[derive(Debug, Error)]
pub enum MaskError {
    #[error("threshold tau must lie strictly inside (0,1), got {0}")]
    BadTau(f64),
}

/// Single-channel saturation mask with the lightness plane it came from.
#[derive(Debug, Clone, PartialEq)]
pub struct Mask {
    width: usize,
    height: usize,
    values: Vec<f32>,
    lightness: Vec<f32>,
    tau: f64,
}

impl Mask {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    /// Rebuild the ramp from the stored lightness under a different threshold.
    pub fn with_tau(&self, tau: f64) -> Result<Mask, MaskError> {
        if !(0.0 < tau && tau < 1.0) {
            return Err(MaskError::BadTau(tau));
        }
        let values = ramp(&self.lightness, tau);
        Ok(Mask {
            width: self.width,
            height: self.height,
            values,
            lightness: self.lightness.clone(),
            tau,
        })
    }

    /// Constant-valued override (used by the all-zero / all-one ablations).
    pub fn constant(&self, value: f32) -> Mask {
        Mask {
            width: self.width,
            height: self.height,
            values: vec![value; self.values.len()],
            lightness: self.lightness.clone(),
            tau: self.tau,
        }
    }

    /// (1,1,H,W) tensor for the modulation network.
    pub fn to_tensor<T: Scalar>(&self) -> Tensor<T> {
        Tensor::new(
            vec![1, 1, self.height, self.width],
            self.values.iter().map(|&v| crate::sc(v as f64)).collect(),
        )
    }
}

fn ramp(lightness: &[f32], tau: f64) -> Vec<f32> {
    // f64 arithmetic so near-one thresholds like 1 - 1e-10 stay distinct
    let inv = 1.0 / (1.0 - tau);
    lightness
        .iter()
        .map(|&l| (((l as f64 - tau).max(0.0) * inv).clamp(0.0, 1.0)) as f32)
        .collect()
}

/// Build the mask of an LDR image: lightness is the per-pixel max over RGB,
/// then the threshold ramp is applied.
pub fn compute_mask(ldr: &LdrImage, tau: f64) -> Result<Mask, MaskError> {
    if !(0.0 < tau && tau < 1.0) {
        return Err(MaskError::BadTau(tau));
    }
    let lightness = ldr.lightness();
    let values = ramp(&lightness, tau);
    Ok(Mask {
        width: ldr.width(),
        height: ldr.height(),
        values,
        lightness,
        tau,
    })
}
