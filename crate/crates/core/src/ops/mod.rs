//! Layer primitives as plain forward/backward kernels over flat slices.
//!
//! The [`crate::autodiff::Tape`] records these; the tensor-level helpers
//! below are forward-only conveniences.

pub mod conv;
pub mod dense;
pub mod pool;

pub use conv::{ConvGeometry, Padding};
pub use pool::{PoolGeometry, PoolParams};

use crate::error::{Error, Result};
use crate::tensor::{Element, Tensor};

/// Kernels (`outMaps×inMaps×kT×kF`), bias (`outMaps`) and per-side padding.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvParams<T = f32> {
    pub kernels: Tensor<T>,
    pub bias: Tensor<T>,
    pub pad: Padding,
}

impl<T: Element> ConvParams<T> {
    pub fn new(kernels: Tensor<T>, bias: Tensor<T>, pad: Padding) -> Result<Self> {
        let shape = kernels.shape();
        if shape.len() != 4 {
            return Err(Error::dim("kernel rank", 4, shape.len()));
        }
        if bias.shape() != [shape[0]] {
            return Err(Error::dim("conv bias", shape[0], bias.numel()));
        }
        Ok(Self { kernels, bias, pad })
    }
}

pub fn conv2d<T: Element>(input: &Tensor<T>, params: &ConvParams<T>) -> Result<Tensor<T>> {
    let g = ConvGeometry::new(input.shape(), params.kernels.shape(), params.pad)?;
    Tensor::new(
        g.output_shape(),
        conv::forward(&g, input.data(), params.kernels.data(), params.bias.data()),
    )
}

/// Same result as [`conv2d`] computed by the direct loop nest.
pub fn conv2d_reference<T: Element>(input: &Tensor<T>, params: &ConvParams<T>) -> Result<Tensor<T>> {
    let g = ConvGeometry::new(input.shape(), params.kernels.shape(), params.pad)?;
    Tensor::new(
        g.output_shape(),
        conv::forward_direct(&g, input.data(), params.kernels.data(), params.bias.data()),
    )
}

pub fn maxpool2d<T: Element>(input: &Tensor<T>, params: PoolParams) -> Result<Tensor<T>> {
    let g = PoolGeometry::new(input.shape(), params)?;
    Tensor::new(g.output_shape(), pool::forward(&g, input.data()).0)
}

pub fn relu<T: Element>(input: &Tensor<T>) -> Tensor<T> {
    Tensor::new(input.shape().to_vec(), dense::relu_forward(input.data())).expect("same shape")
}

pub fn affine<T: Element>(input: &Tensor<T>, weight: &Tensor<T>, bias: &Tensor<T>) -> Result<Tensor<T>> {
    let g = dense::AffineGeometry::new(input.shape(), weight.shape(), bias.shape())?;
    Tensor::new(
        [g.rows, g.outputs],
        dense::affine_forward(&g, input.data(), weight.data(), bias.data()),
    )
}

/// Mean cross-entropy and row-softmax probabilities of `N×K` logits.
pub fn softmax_xent<T: Element>(logits: &Tensor<T>, targets: &[usize]) -> Result<(T, Tensor<T>)> {
    let (_, classes) = crate::tensor::dims2(logits.shape(), "logits")?;
    let (loss, probs) = dense::softmax_xent_forward(logits.data(), classes, targets)?;
    Ok((loss, Tensor::new(logits.shape().to_vec(), probs)?))
}
