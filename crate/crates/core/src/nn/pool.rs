use crate::Scalar;

use super::{Cache, NnError, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PoolKind {
    Max,
    Avg,
}

/// Per-channel pooling with `valid` padding.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PoolSpec {
    pub kind: PoolKind,
    pub window: (usize, usize),
    pub stride: (usize, usize),
}

impl PoolSpec {
    pub fn max(window: (usize, usize), stride: (usize, usize)) -> Self {
        Self { kind: PoolKind::Max, window, stride }
    }

    pub fn avg(window: (usize, usize), stride: (usize, usize)) -> Self {
        Self { kind: PoolKind::Avg, window, stride }
    }

    pub fn output_dims(&self, h: usize, w: usize) -> Result<(usize, usize), NnError> {
        let (wh, ww) = self.window;
        if wh == 0 || ww == 0 || wh > h || ww > w || self.stride.0 == 0 || self.stride.1 == 0 {
            return Err(NnError::WindowTooLarge { what: "pool window", window: self.window, input: (h, w) });
        }
        Ok(((h - wh) / self.stride.0 + 1, (w - ww) / self.stride.1 + 1))
    }

    pub fn forward<T: Scalar>(&self, x: &Tensor<T>) -> Result<(Tensor<T>, Cache<T>), NnError> {
        let (h, w, c) = x.dims3()?;
        let (oh, ow) = self.output_dims(h, w)?;
        let (wh, ww) = self.window;
        let xd = x.data();
        let mut out = Vec::with_capacity(oh * ow * c);
        let mut argmax = match self.kind {
            PoolKind::Max => Some(Vec::with_capacity(oh * ow * c)),
            PoolKind::Avg => None,
        };
        let inv_n = T::one() / T::of((wh * ww) as f64);
        for oy in 0..oh {
            for ox in 0..ow {
                let (y0, x0) = (oy * self.stride.0, ox * self.stride.1);
                for ch in 0..c {
                    match argmax.as_mut() {
                        Some(idx) => {
                            // Row-major scan with strict comparison keeps the first maximum.
                            let mut best = (y0 * w + x0) * c + ch;
                            for iy in y0..y0 + wh {
                                for ix in x0..x0 + ww {
                                    let i = (iy * w + ix) * c + ch;
                                    if xd[i] > xd[best] {
                                        best = i;
                                    }
                                }
                            }
                            out.push(xd[best]);
                            idx.push(best);
                        }
                        None => {
                            let mut acc = T::zero();
                            for iy in y0..y0 + wh {
                                for ix in x0..x0 + ww {
                                    acc += xd[(iy * w + ix) * c + ch];
                                }
                            }
                            out.push(acc * inv_n);
                        }
                    }
                }
            }
        }
        let cache = Cache::Pool { input_shape: x.shape().to_vec(), argmax };
        Ok((Tensor::from_parts(vec![oh, ow, c], out), cache))
    }

    pub fn backward<T: Scalar>(&self, cache: &Cache<T>, upstream: &Tensor<T>) -> Result<Tensor<T>, NnError> {
        let Cache::Pool { input_shape, argmax } = cache else {
            return Err(NnError::CacheMismatch { expected: "pool2d", got: cache.kind() });
        };
        let (h, w, c) = match input_shape[..] {
            [h, w, c] => (h, w, c),
            _ => return Err(NnError::InvalidShape(input_shape.clone())),
        };
        let (oh, ow) = self.output_dims(h, w)?;
        if upstream.shape() != [oh, ow, c] {
            return Err(NnError::ShapeMismatch {
                op: "pool2d backward",
                expected: vec![oh, ow, c],
                got: upstream.shape().to_vec(),
            });
        }
        let mut dx = vec![T::zero(); h * w * c];
        let g = upstream.data();
        match (self.kind, argmax) {
            (PoolKind::Max, Some(idx)) => {
                for (&i, &gv) in idx.iter().zip(g) {
                    dx[i] += gv;
                }
            }
            (PoolKind::Avg, None) => {
                let (wh, ww) = self.window;
                let inv_n = T::one() / T::of((wh * ww) as f64);
                for oy in 0..oh {
                    for ox in 0..ow {
                        let (y0, x0) = (oy * self.stride.0, ox * self.stride.1);
                        for ch in 0..c {
                            let share = g[(oy * ow + ox) * c + ch] * inv_n;
                            for iy in y0..y0 + wh {
                                for ix in x0..x0 + ww {
                                    dx[(iy * w + ix) * c + ch] += share;
                                }
                            }
                        }
                    }
                }
            }
            _ => {
                return Err(NnError::CacheMismatch {
                    expected: if self.kind == PoolKind::Max { "max pool" } else { "avg pool" },
                    got: if argmax.is_some() { "max pool" } else { "avg pool" },
                })
            }
        }
        Ok(Tensor::from_parts(input_shape.clone(), dx))
    }
}
