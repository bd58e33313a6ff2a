use crate::Scalar;

use super::NnError;

/// Dense row-major array; rank-3 tensors are laid out height x width x channels.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T> {
    shape: Vec<usize>,
    data: Vec<T>,
}

impl<T: Scalar> Tensor<T> {
    pub fn new(shape: Vec<usize>, data: Vec<T>) -> Result<Self, NnError> {
        if shape.is_empty() || shape.len() > 4 || shape.contains(&0) {
            return Err(NnError::InvalidShape(shape));
        }
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(NnError::DataLength { shape, len: data.len() });
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(NnError::NonFinite);
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::filled(shape, T::zero())
    }

    pub fn filled(shape: &[usize], value: T) -> Self {
        let n = shape.iter().product();
        Self { shape: shape.to_vec(), data: vec![value; n] }
    }

    pub fn from_fn(shape: &[usize], f: impl FnMut(usize) -> T) -> Self {
        let n = shape.iter().product();
        Self { shape: shape.to_vec(), data: (0..n).map(f).collect() }
    }

    /// Builds a tensor without validation; `data.len()` must equal the
    /// shape's product.
    pub(crate) fn from_parts(shape: Vec<usize>, data: Vec<T>) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        Self { shape, data }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
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

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// (height, width, channels) of a rank-3 tensor.
    pub fn dims3(&self) -> Result<(usize, usize, usize), NnError> {
        match self.shape[..] {
            [h, w, c] => Ok((h, w, c)),
            _ => Err(NnError::InvalidShape(self.shape.clone())),
        }
    }

    pub fn reshape(mut self, shape: &[usize]) -> Result<Self, NnError> {
        if shape.iter().product::<usize>() != self.data.len() {
            return Err(NnError::DataLength { shape: shape.to_vec(), len: self.data.len() });
        }
        self.shape = shape.to_vec();
        Ok(self)
    }

    pub fn cast<U: Scalar>(&self) -> Tensor<U> {
        Tensor { shape: self.shape.clone(), data: self.data.iter().map(|v| U::of(v.as_f64())).collect() }
    }

    pub fn sum_of_squares(&self) -> T {
        self.data.iter().map(|&v| v * v).sum()
    }

    pub fn max_abs(&self) -> T {
        self.data.iter().fold(T::zero(), |m, v| m.max(v.abs()))
    }

    pub fn add_assign(&mut self, other: &Tensor<T>) {
        debug_assert_eq!(self.shape, other.shape);
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn scale(&mut self, factor: T) {
        for v in &mut self.data {
            *v *= factor;
        }
    }
}

/// Concatenates rank-3 tensors of equal height and width along channels.
pub fn concat_channels<T: Scalar>(parts: &[Tensor<T>]) -> Result<Tensor<T>, NnError> {
    let (h, w, _) = parts.first().ok_or_else(|| NnError::InvalidShape(vec![]))?.dims3()?;
    let mut channels = Vec::with_capacity(parts.len());
    for p in parts {
        let (ph, pw, pc) = p.dims3()?;
        if (ph, pw) != (h, w) {
            return Err(NnError::ShapeMismatch {
                op: "concat_channels",
                expected: vec![h, w, pc],
                got: p.shape.clone(),
            });
        }
        channels.push(pc);
    }
    let total: usize = channels.iter().sum();
    let mut data = Vec::with_capacity(h * w * total);
    for pos in 0..h * w {
        for (p, &c) in parts.iter().zip(&channels) {
            data.extend_from_slice(&p.data[pos * c..(pos + 1) * c]);
        }
    }
    Ok(Tensor::from_parts(vec![h, w, total], data))
}

/// Inverse of [`concat_channels`]: splits a gradient into per-part tensors.
pub fn split_channels<T: Scalar>(t: &Tensor<T>, channels: &[usize]) -> Result<Vec<Tensor<T>>, NnError> {
    let (h, w, c) = t.dims3()?;
    if channels.iter().sum::<usize>() != c {
        return Err(NnError::ShapeMismatch {
            op: "split_channels",
            expected: vec![h, w, channels.iter().sum()],
            got: t.shape.clone(),
        });
    }
    let mut parts: Vec<Vec<T>> = channels.iter().map(|&pc| Vec::with_capacity(h * w * pc)).collect();
    for pos in 0..h * w {
        let mut offset = pos * c;
        for (part, &pc) in parts.iter_mut().zip(channels) {
            part.extend_from_slice(&t.data[offset..offset + pc]);
            offset += pc;
        }
    }
    Ok(parts.into_iter().zip(channels).map(|(d, &pc)| Tensor::from_parts(vec![h, w, pc], d)).collect())
}
