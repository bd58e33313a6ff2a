use crate::Scalar;

use super::{Activation, Cache, NnError, Tensor};

#[derive(Debug, Clone, PartialEq)]
pub struct DenseGrads<T> {
    pub weights: Tensor<T>,
    pub biases: Tensor<T>,
}

/// Fully connected layer computing `activation(W^T x + b)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer<T> {
    /// Shape `[in, out]`.
    pub weights: Tensor<T>,
    /// Shape `[out]`.
    pub biases: Tensor<T>,
    pub activation: Activation,
}

impl<T: Scalar> DenseLayer<T> {
    pub fn new(weights: Tensor<T>, biases: Tensor<T>, activation: Activation) -> Result<Self, NnError> {
        let out = match weights.shape() {
            &[_, o] => o,
            other => return Err(NnError::InvalidShape(other.to_vec())),
        };
        if biases.shape() != [out] {
            return Err(NnError::ShapeMismatch { op: "dense bias", expected: vec![out], got: biases.shape().to_vec() });
        }
        Ok(Self { weights, biases, activation })
    }

    pub fn inputs(&self) -> usize {
        self.weights.shape()[0]
    }

    pub fn outputs(&self) -> usize {
        self.weights.shape()[1]
    }

    pub fn infer(&self, x: &[T]) -> Result<Vec<T>, NnError> {
        if x.len() != self.inputs() {
            return Err(NnError::ShapeMismatch { op: "dense", expected: vec![self.inputs()], got: vec![x.len()] });
        }
        let n_out = self.outputs();
        let mut z = self.biases.data().to_vec();
        for (row, &xv) in self.weights.data().chunks_exact(n_out).zip(x) {
            for (zj, &w) in z.iter_mut().zip(row) {
                *zj += xv * w;
            }
        }
        self.activation.apply_in_place(&mut z);
        Ok(z)
    }

    pub fn forward(&self, x: &[T]) -> Result<(Vec<T>, Cache<T>), NnError> {
        let out = self.infer(x)?;
        let cache = Cache::Dense { input: x.to_vec(), output: out.clone() };
        Ok((out, cache))
    }

    pub fn backward(&self, cache: &Cache<T>, upstream: &[T]) -> Result<(Vec<T>, DenseGrads<T>), NnError> {
        let Cache::Dense { input, output } = cache else {
            return Err(NnError::CacheMismatch { expected: "dense", got: cache.kind() });
        };
        if upstream.len() != output.len() {
            return Err(NnError::ShapeMismatch {
                op: "dense backward",
                expected: vec![output.len()],
                got: vec![upstream.len()],
            });
        }
        let n_out = self.outputs();
        let g = self.activation.backward(output, upstream);
        let mut dw = Vec::with_capacity(self.weights.len());
        let mut dx = Vec::with_capacity(input.len());
        for (row, &xv) in self.weights.data().chunks_exact(n_out).zip(input) {
            dw.extend(g.iter().map(|&gj| xv * gj));
            dx.push(row.iter().zip(&g).map(|(&w, &gj)| w * gj).sum());
        }
        let grads = DenseGrads {
            weights: Tensor::from_parts(self.weights.shape().to_vec(), dw),
            biases: Tensor::from_parts(vec![n_out], g),
        };
        Ok((dx, grads))
    }
}
