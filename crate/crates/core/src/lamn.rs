//! Lightness-adaptive modulation: convolutional parameter chains driven by
//! the saturation mask, producing per-stage scale and bias fields that are
//! applied to network activations as `x * (1 + gamma) + beta`.
//!
//! Both chains start from the mask and stay nonnegative because every link
//! is ReLU(Conv(.)), so the scale term (1 + gamma) never reduces contrast.

use thiserror::Error;

use crate::tensor::{ConvSpec, Tape, TensorError, Var};
use crate::Scalar;

#[derive(Debug, Error)]
pub enum LamnError {
    #[error("modulation stage {stage}: {source}")]
    Stage {
        stage: usize,
        source: TensorError,
    },
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

/// One conv layer's parameter slots in the network store.
#[derive(Debug, Clone, Copy)]
pub struct ConvLayer {
    pub weight: usize,
    pub bias: usize,
    pub spec: ConvSpec,
}

/// Parameter layout of the modulation network: one gamma chain and one
/// beta chain, structurally identical.
#[derive(Debug, Clone, Default)]
pub struct LamnParams {
    pub gamma: Vec<ConvLayer>,
    pub beta: Vec<ConvLayer>,
}

impl LamnParams {
    pub fn stages(&self) -> usize {
        self.gamma.len()
    }
}

/// Per-stage modulation fields.
#[derive(Debug, Clone, Copy)]
pub struct ModulationStage {
    pub gamma: Var,
    pub beta: Var,
}

fn chain_forward<T: Scalar>(
    tape: &mut Tape<T>,
    mask: Var,
    layers: &[ConvLayer],
    param_vars: &[Var],
) -> Result<Vec<Var>, LamnError> {
    let mut outputs = Vec::with_capacity(layers.len());
    let mut cur = mask;
    for (stage, layer) in layers.iter().enumerate() {
        let conv = tape
            .conv2d(cur, param_vars[layer.weight], param_vars[layer.bias], layer.spec)
            .map_err(|source| LamnError::Stage { stage: stage + 1, source })?;
        cur = tape.relu(conv);
        outputs.push(cur);
    }
    Ok(outputs)
}

/// Run both chains from the mask: stage 1 lifts the mask into the feature
/// width, later stages transform the previous stage's output.
pub fn lamn_forward<T: Scalar>(
    tape: &mut Tape<T>,
    mask: Var,
    params: &LamnParams,
    param_vars: &[Var],
) -> Result<Vec<ModulationStage>, LamnError> {
    let gammas = chain_forward(tape, mask, &params.gamma, param_vars)?;
    let betas = chain_forward(tape, mask, &params.beta, param_vars)?;
    Ok(gammas
        .into_iter()
        .zip(betas)
        .map(|(gamma, beta)| ModulationStage { gamma, beta })
        .collect())
}

/// Scale-and-bias modulation `x * (1 + gamma) + beta`, differentiable in
/// all three inputs. All tensors must share one shape.
pub fn modulate<T: Scalar>(
    tape: &mut Tape<T>,
    x: Var,
    stage: ModulationStage,
) -> Result<Var, TensorError> {
    let scaled = tape.mul(x, stage.gamma)?;
    let with_scale = tape.add(x, scaled)?;
    tape.add(with_scale, stage.beta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;

    #[test]
    fn modulate_hand_value() {
        // 1.0 * (1 + 0.5) + 0.1 = 1.6
        let mut tape = Tape::<f64>::new();
        let x = tape.input(Tensor::full(vec![1, 1, 1, 1], 1.0), false);
        let gamma = tape.input(Tensor::full(vec![1, 1, 1, 1], 0.5), false);
        let beta = tape.input(Tensor::full(vec![1, 1, 1, 1], 0.1), false);
        let y = modulate(&mut tape, x, ModulationStage { gamma, beta }).unwrap();
        assert!((tape.value(y).item() - 1.6).abs() < 1e-12);
    }

    #[test]
    fn zero_fields_are_identity() {
        let mut tape = Tape::<f64>::new();
        let x = tape.input(
            Tensor::from_f64_slice(vec![1, 2, 1, 2], &[0.3, -0.4, 1.5, 0.0]),
            false,
        );
        let gamma = tape.input(Tensor::zeros(vec![1, 2, 1, 2]), false);
        let beta = tape.input(Tensor::zeros(vec![1, 2, 1, 2]), false);
        let y = modulate(&mut tape, x, ModulationStage { gamma, beta }).unwrap();
        assert_eq!(tape.value(y).data(), tape.value(x).data());
    }

    #[test]
    fn shape_mismatch_rejected() {
        let mut tape = Tape::<f64>::new();
        let x = tape.input(Tensor::zeros(vec![1, 2, 2, 2]), false);
        let gamma = tape.input(Tensor::zeros(vec![1, 2, 2, 3]), false);
        let beta = tape.input(Tensor::zeros(vec![1, 2, 2, 2]), false);
        assert!(modulate(&mut tape, x, ModulationStage { gamma, beta }).is_err());
    }

    #[test]
    fn modulate_gradients_match_finite_differences() {
        use crate::tensor::gradcheck::{finite_diff_grad, max_relative_error};
        let base_x = Tensor::from_f64_slice(vec![1, 1, 2, 2], &[0.2, -0.1, 0.4, 0.05]);
        let base_g = Tensor::from_f64_slice(vec![1, 1, 2, 2], &[0.3, 0.0, 0.7, 0.2]);
        let base_b = Tensor::from_f64_slice(vec![1, 1, 2, 2], &[0.1, 0.2, 0.0, -0.3]);

        let run = |x: &Tensor<f64>, g: &Tensor<f64>, b: &Tensor<f64>| -> (f64, [Tensor<f64>; 3]) {
            let mut tape = Tape::<f64>::new();
            let xv = tape.input(x.clone(), true);
            let gv = tape.input(g.clone(), true);
            let bv = tape.input(b.clone(), true);
            let y = modulate(&mut tape, xv, ModulationStage { gamma: gv, beta: bv }).unwrap();
            let sq = tape.mul(y, y).unwrap();
            let loss = tape.sum(sq);
            let grads = tape.backward(loss).unwrap();
            (
                tape.value(loss).item(),
                [
                    grads.wrt_or_zeros(xv),
                    grads.wrt_or_zeros(gv),
                    grads.wrt_or_zeros(bv),
                ],
            )
        };
        let (_, analytic) = run(&base_x, &base_g, &base_b);
        let eps = 1e-6;
        let fd_x = finite_diff_grad(|t| run(t, &base_g, &base_b).0, &base_x, eps);
        let fd_g = finite_diff_grad(|t| run(&base_x, t, &base_b).0, &base_g, eps);
        let fd_b = finite_diff_grad(|t| run(&base_x, &base_g, t).0, &base_b, eps);
        for (a, fd) in analytic.iter().zip([fd_x, fd_g, fd_b]) {
            assert!(max_relative_error(a, &fd) < 1e-4);
        }
    }
}
