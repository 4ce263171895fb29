//! Minimal deterministic differentiable tensor engine.
//!
//! Provides exactly the primitives the synthesis network needs: dense
//! row-major tensors, 2-D convolution with stride/padding/dilation,
//! activations, average pooling, channel concatenation, elementwise
//! arithmetic with channel-axis broadcast, a log-domain compressive map,
//! RMS reduction, reverse-mode gradients over a define-by-run tape, ADAM,
//! and a central finite-difference oracle for gradient verification.

mod adam;
mod conv;
pub mod gradcheck;
mod tape;

pub use adam::{adam_step, AdamParams, AdamState};
pub use conv::{conv2d_forward, conv_output_extent};
pub use tape::{Gradients, Op, Tape, Var};

use thiserror::Error;

use crate::Scalar;

#[derive(Debug, Error)]
pub enum TensorError {
    #[error("shape mismatch for {context}: dimension {dim} is {got}, expected {expected}")]
    ShapeMismatch {
        context: &'static str,
        dim: usize,
        got: usize,
        expected: usize,
    },
    #[error("{context}: expected rank {expected}, got shape {got:?}")]
    RankMismatch {
        context: &'static str,
        expected: usize,
        got: Vec<usize>,
    },
    #[error("convolution produces empty output: input {h}x{w} with k={k} s={s} p={p} d={d}")]
    EmptyConvOutput {
        h: usize,
        w: usize,
        k: usize,
        s: usize,
        p: usize,
        d: usize,
    },
    #[error("invalid convolution spec: {0}")]
    InvalidConvSpec(String),
    #[error("broadcast between {lhs:?} and {rhs:?} is only supported over the channel axis")]
    BadBroadcast { lhs: Vec<usize>, rhs: Vec<usize> },
    #[error("backward requires a scalar output, got shape {0:?}")]
    NonScalarBackward(Vec<usize>),
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("negative input to {0}")]
    NegativeInput(&'static str),
    #[error("average pooling window {k}x{k} exceeds input {h}x{w}")]
    PoolTooLarge { k: usize, h: usize, w: usize },
    #[error("{op} expects {expected} input(s), got {got}")]
    ArityMismatch {
        op: &'static str,
        expected: usize,
        got: usize,
    },
}

/// Dense row-major N-dimensional array. Feature maps use NCHW order.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T: Scalar> {
    shape: Vec<usize>,
    data: Vec<T>,
}

impl<T: Scalar> Tensor<T> {
    pub fn new(shape: Vec<usize>, data: Vec<T>) -> Self {
        let numel: usize = shape.iter().product();
        assert_eq!(
            numel,
            data.len(),
            "shape {shape:?} does not match data length {}",
            data.len()
        );
        Tensor { shape, data }
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let numel = shape.iter().product();
        Tensor {
            shape,
            data: vec![T::zero(); numel],
        }
    }

    pub fn full(shape: Vec<usize>, value: T) -> Self {
        let numel = shape.iter().product();
        Tensor {
            shape,
            data: vec![value; numel],
        }
    }

    pub fn scalar(value: T) -> Self {
        Tensor {
            shape: vec![1],
            data: vec![value],
        }
    }

    pub fn from_f64_slice(shape: Vec<usize>, values: &[f64]) -> Self {
        let data = values.iter().map(|&v| crate::sc(v)).collect();
        Tensor::new(shape, data)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    /// Sole element of a rank-0/1 scalar tensor.
    pub fn item(&self) -> T {
        assert_eq!(self.numel(), 1, "item() on non-scalar tensor");
        self.data[0]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Convert element-wise into another scalar type (via f64).
    pub fn cast<U: Scalar>(&self) -> Tensor<U> {
        Tensor {
            shape: self.shape.clone(),
            data: self
                .data
                .iter()
                .map(|v| crate::sc(v.to_f64().expect("finite")))
                .collect(),
        }
    }
}

/// Convolution hyperparameters plus channel extents.
///
/// The compact names follow the usual kKsSpPdD notation, e.g. `k3s1p1d1`
/// is kernel 3, stride 1, padding 1, dilation 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct ConvSpec {
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
    pub dilation: usize,
    pub in_channels: usize,
    pub out_channels: usize,
}

impl ConvSpec {
    pub fn new(
        kernel: usize,
        stride: usize,
        padding: usize,
        dilation: usize,
        in_channels: usize,
        out_channels: usize,
    ) -> Result<Self, TensorError> {
        if kernel < 1 || stride < 1 || dilation < 1 {
            return Err(TensorError::InvalidConvSpec(format!(
                "k={kernel} s={stride} d={dilation}: kernel, stride and dilation must be >= 1"
            )));
        }
        if in_channels < 1 || out_channels < 1 {
            return Err(TensorError::InvalidConvSpec(format!(
                "in={in_channels} out={out_channels}: channel counts must be >= 1"
            )));
        }
        Ok(ConvSpec {
            kernel,
            stride,
            padding,
            dilation,
            in_channels,
            out_channels,
        })
    }

    pub fn k3s1p1d1(cin: usize, cout: usize) -> Self {
        ConvSpec::new(3, 1, 1, 1, cin, cout).unwrap()
    }

    pub fn k3s1p2d2(cin: usize, cout: usize) -> Self {
        ConvSpec::new(3, 1, 2, 2, cin, cout).unwrap()
    }

    pub fn k3s2p1d1(cin: usize, cout: usize) -> Self {
        ConvSpec::new(3, 2, 1, 1, cin, cout).unwrap()
    }

    pub fn k4s1p0d1(cin: usize, cout: usize) -> Self {
        ConvSpec::new(4, 1, 0, 1, cin, cout).unwrap()
    }

    pub fn weight_shape(&self) -> Vec<usize> {
        vec![self.out_channels, self.in_channels, self.kernel, self.kernel]
    }

    pub fn param_count(&self) -> usize {
        self.out_channels * (self.in_channels * self.kernel * self.kernel + 1)
    }
}

/// One primitive layer, dispatchable through [`Tape::apply_primitive`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LayerSpec {
    Conv(ConvSpec),
    Relu,
    AvgPool { kernel: usize, stride: usize },
    Concat,
    Add,
    Mul,
    Sigmoid,
}

/// Named, ordered collection of parameter tensors.
///
/// Order is the checkpoint and optimizer-state order, so it must stay
/// stable for a given network configuration.
#[derive(Debug, Clone)]
pub struct ParamStore<T: Scalar> {
    names: Vec<String>,
    tensors: Vec<Tensor<T>>,
}

impl<T: Scalar> ParamStore<T> {
    pub fn new() -> Self {
        ParamStore {
            names: Vec::new(),
            tensors: Vec::new(),
        }
    }

    /// Register a tensor; returns its stable index.
    pub fn insert(&mut self, name: impl Into<String>, tensor: Tensor<T>) -> usize {
        let name = name.into();
        assert!(
            !self.names.contains(&name),
            "duplicate parameter name {name}"
        );
        self.names.push(name);
        self.tensors.push(tensor);
        self.tensors.len() - 1
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn name(&self, idx: usize) -> &str {
        &self.names[idx]
    }

    pub fn get(&self, idx: usize) -> &Tensor<T> {
        &self.tensors[idx]
    }

    pub fn get_mut(&mut self, idx: usize) -> &mut Tensor<T> {
        &mut self.tensors[idx]
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<T>)> {
        self.names
            .iter()
            .map(|n| n.as_str())
            .zip(self.tensors.iter())
    }

    pub fn total_params(&self) -> usize {
        self.tensors.iter().map(|t| t.numel()).sum()
    }

    pub fn cast<U: Scalar>(&self) -> ParamStore<U> {
        ParamStore {
            names: self.names.clone(),
            tensors: self.tensors.iter().map(|t| t.cast()).collect(),
        }
    }
}

impl<T: Scalar> Default for ParamStore<T> {
    fn default() -> Self {
        Self::new()
    }
}
