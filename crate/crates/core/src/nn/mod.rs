//! Minimal layer toolkit with analytic gradients: 2-D convolution, max and
//! average pooling, dense layers, ReLU/sigmoid and an L2 weight penalty.
//!
//! Every layer's `forward` returns its output together with a [`Cache`];
//! `backward` consumes that cache plus the upstream gradient and returns the
//! input gradient and the parameter gradients.

mod activation;
mod conv;
mod dense;
mod penalty;
mod pool;
mod tensor;

use thiserror::Error;

pub use activation::Activation;
pub use conv::{ConvGeometry, ConvGrads, ConvLayer, Padding};
pub use dense::{DenseGrads, DenseLayer};
pub use penalty::l2_penalty;
pub use pool::{PoolKind, PoolSpec};
pub use tensor::{concat_channels, split_channels, Tensor};

#[derive(Debug, Error, PartialEq)]
pub enum NnError {
    #[error("invalid tensor shape {0:?}")]
    InvalidShape(Vec<usize>),
    #[error("shape {shape:?} needs {} values, got {len}", shape.iter().product::<usize>())]
    DataLength { shape: Vec<usize>, len: usize },
    #[error("tensor contains non-finite values")]
    NonFinite,
    #[error("{op}: expected shape {expected:?}, got {got:?}")]
    ShapeMismatch { op: &'static str, expected: Vec<usize>, got: Vec<usize> },
    #[error("input has {got} channels, layer expects {expected}")]
    ChannelMismatch { expected: usize, got: usize },
    #[error("{what} {window:?} exceeds input extent {input:?}")]
    WindowTooLarge { what: &'static str, window: (usize, usize), input: (usize, usize) },
    #[error("backward for {expected} was given a cache from {got}")]
    CacheMismatch { expected: &'static str, got: &'static str },
}

/// Forward state needed by `backward`.
#[derive(Debug, Clone)]
pub enum Cache<T> {
    Conv {
        input: Tensor<T>,
        output: Tensor<T>,
    },
    Pool {
        input_shape: Vec<usize>,
        /// Flat input index of each output's maximum (max pooling only).
        argmax: Option<Vec<usize>>,
    },
    Dense {
        input: Vec<T>,
        output: Vec<T>,
    },
}

impl<T> Cache<T> {
    pub fn kind(&self) -> &'static str {
        match self {
            Cache::Conv { .. } => "conv2d",
            Cache::Pool { .. } => "pool2d",
            Cache::Dense { .. } => "dense",
        }
    }
}
