//! Central finite-difference gradient oracle.
//!
//! Independent of the tape: it only calls the supplied forward closure, so
//! it can verify any reverse-mode gradient the engine produces.

use super::Tensor;
use crate::{sc, Scalar};

/// Full central-difference gradient of `f` at `x`:
/// `(f(x + eps*e_i) - f(x - eps*e_i)) / (2*eps)` per coordinate.
pub fn finite_diff_grad<T: Scalar>(
    f: impl Fn(&Tensor<T>) -> T,
    x: &Tensor<T>,
    eps: T,
) -> Tensor<T> {
    let mut grad = Tensor::zeros(x.shape().to_vec());
    let mut probe = x.clone();
    for i in 0..x.numel() {
        let orig = probe.data()[i];
        probe.data_mut()[i] = orig + eps;
        let plus = f(&probe);
        probe.data_mut()[i] = orig - eps;
        let minus = f(&probe);
        probe.data_mut()[i] = orig;
        grad.data_mut()[i] = (plus - minus) / (sc::<T>(2.0) * eps);
    }
    grad
}

/// Central difference for a single coordinate; used to spot-check large
/// parameter tensors without 2N full forward passes.
pub fn finite_diff_at<T: Scalar>(
    f: impl Fn(&Tensor<T>) -> T,
    x: &Tensor<T>,
    index: usize,
    eps: T,
) -> T {
    let mut probe = x.clone();
    let orig = probe.data()[index];
    probe.data_mut()[index] = orig + eps;
    let plus = f(&probe);
    probe.data_mut()[index] = orig - eps;
    let minus = f(&probe);
    (plus - minus) / (sc::<T>(2.0) * eps)
}

/// Relative error between an analytic and a reference gradient value,
/// with a floor so near-zero pairs compare absolutely.
pub fn relative_error<T: Scalar>(analytic: T, reference: T) -> T {
    let denom = analytic.abs().max(reference.abs()).max(sc::<T>(1e-6));
    (analytic - reference).abs() / denom
}

/// Worst relative error across two gradient tensors.
pub fn max_relative_error<T: Scalar>(analytic: &Tensor<T>, reference: &Tensor<T>) -> T {
    assert_eq!(analytic.shape(), reference.shape());
    let mut worst = T::zero();
    for (&a, &r) in analytic.data().iter().zip(reference.data()) {
        worst = worst.max(relative_error(a, r));
    }
    worst
}

/// One row of a gradient-check report.
#[derive(Debug, Clone)]
pub struct CheckRow {
    pub name: String,
    pub max_rel_err: f64,
    pub tolerance: f64,
    pub coords_checked: usize,
}

impl CheckRow {
    pub fn passed(&self) -> bool {
        self.max_rel_err < self.tolerance
    }
}
