//! ADAM with bias correction over a [`ParamStore`].

use super::{ParamStore, Tensor, TensorError};
use crate::{sc, Scalar};

/// Optimizer hyperparameters. Defaults are the usual β1=0.9, β2=0.999, ε=1e-8.
#[derive(Debug, Clone, Copy, serde::Serialize, serde::Deserialize)]
pub struct AdamParams {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamParams {
    fn default() -> Self {
        AdamParams {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Per-parameter first/second moments plus the step counter.
#[derive(Debug, Clone)]
pub struct AdamState<T: Scalar> {
    pub hyper: AdamParams,
    pub m: Vec<Tensor<T>>,
    pub v: Vec<Tensor<T>>,
    pub t: u64,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(params: &ParamStore<T>, hyper: AdamParams) -> Self {
        let zeros: Vec<Tensor<T>> = params
            .iter()
            .map(|(_, t)| Tensor::zeros(t.shape().to_vec()))
            .collect();
        AdamState {
            hyper,
            m: zeros.clone(),
            v: zeros,
            t: 0,
        }
    }

    pub fn cast<U: Scalar>(&self) -> AdamState<U> {
        AdamState {
            hyper: self.hyper,
            m: self.m.iter().map(|t| t.cast()).collect(),
            v: self.v.iter().map(|t| t.cast()).collect(),
            t: self.t,
        }
    }
}

/// One bias-corrected ADAM update. `grads` must align with `params` order.
/// A non-finite gradient aborts the step before any state is touched.
pub fn adam_step<T: Scalar>(
    params: &mut ParamStore<T>,
    grads: &[Tensor<T>],
    state: &mut AdamState<T>,
    lr: T,
) -> Result<(), TensorError> {
    assert_eq!(grads.len(), params.len(), "gradient/parameter count mismatch");
    for g in grads {
        if !g.is_finite() {
            return Err(TensorError::NonFinite("gradients"));
        }
    }

    state.t += 1;
    let b1 = sc::<T>(state.hyper.beta1);
    let b2 = sc::<T>(state.hyper.beta2);
    let eps = sc::<T>(state.hyper.epsilon);
    let t = state.t as i32;
    let corr1 = T::one() - b1.powi(t);
    let corr2 = T::one() - b2.powi(t);

    for (idx, g) in grads.iter().enumerate() {
        let m = state.m[idx].data_mut();
        let v = state.v[idx].data_mut();
        let p = params.get_mut(idx).data_mut();
        for i in 0..g.numel() {
            let gi = g.data()[i];
            m[i] = b1 * m[i] + (T::one() - b1) * gi;
            v[i] = b2 * v[i] + (T::one() - b2) * gi * gi;
            let m_hat = m[i] / corr1;
            let v_hat = v[i] / corr2;
            p[i] = p[i] - lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single_param(value: f64) -> ParamStore<f64> {
        let mut store = ParamStore::new();
        store.insert("w", Tensor::scalar(value));
        store
    }

    #[test]
    fn zero_gradient_leaves_params_unchanged() {
        let mut params = single_param(1.5);
        let mut state = AdamState::new(&params, AdamParams::default());
        adam_step(&mut params, &[Tensor::scalar(0.0)], &mut state, 1e-4).unwrap();
        assert_eq!(params.get(0).item(), 1.5);
        assert_eq!(state.t, 1);
    }

    #[test]
    fn first_step_magnitude_is_lr() {
        // At t=1 the bias-corrected update is lr * g/(|g| + eps') ~ lr * sign(g).
        let mut params = single_param(0.0);
        let mut state = AdamState::new(&params, AdamParams::default());
        adam_step(&mut params, &[Tensor::scalar(10.0)], &mut state, 1e-4).unwrap();
        let delta = params.get(0).item();
        assert!((delta.abs() - 1e-4).abs() < 1e-8, "delta = {delta}");
        assert!(delta < 0.0);
    }

    #[test]
    fn two_steps_match_hand_recurrence() {
        // Independent oracle: the ADAM recurrence on f(w) = w^2, unrolled by
        // hand in this test with g = 2w.
        let (b1, b2, eps, lr) = (0.9f64, 0.999, 1e-8, 0.1);
        let mut w_ref = 1.0f64;
        let (mut m, mut v) = (0.0f64, 0.0f64);
        for t in 1..=2 {
            let g = 2.0 * w_ref;
            m = b1 * m + (1.0 - b1) * g;
            v = b2 * v + (1.0 - b2) * g * g;
            let m_hat = m / (1.0 - b1.powi(t));
            let v_hat = v / (1.0 - b2.powi(t));
            w_ref -= lr * m_hat / (v_hat.sqrt() + eps);
        }

        let mut params = single_param(1.0);
        let mut state = AdamState::new(&params, AdamParams::default());
        for _ in 0..2 {
            let g = 2.0 * params.get(0).item();
            adam_step(&mut params, &[Tensor::scalar(g)], &mut state, lr).unwrap();
        }
        assert!((params.get(0).item() - w_ref).abs() < 1e-10);
    }

    #[test]
    fn nan_gradient_aborts_without_touching_state() {
        let mut params = single_param(1.0);
        let mut state = AdamState::new(&params, AdamParams::default());
        let err = adam_step(&mut params, &[Tensor::scalar(f64::NAN)], &mut state, 0.1);
        assert!(err.is_err());
        assert_eq!(state.t, 0);
        assert_eq!(params.get(0).item(), 1.0);
    }

    #[test]
    fn gradient_scale_invariance_at_step_one() {
        // Scaling gradients by a positive constant keeps the first-step
        // update direction and (for |g| >> eps) magnitude ~ lr.
        for &scale in &[1.0, 3.0, 250.0] {
            let mut params = single_param(0.0);
            let mut state = AdamState::new(&params, AdamParams::default());
            adam_step(&mut params, &[Tensor::scalar(0.5 * scale)], &mut state, 1e-3).unwrap();
            let delta = params.get(0).item();
            assert!(delta < 0.0);
            assert!((delta.abs() - 1e-3).abs() < 1e-6, "scale {scale}: {delta}");
        }
    }
}
