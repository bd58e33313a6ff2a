use crate::Scalar;

use super::{Activation, Cache, NnError, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Padding {
    /// Output extent `ceil(in / stride)`; the total padding
    /// `max((out - 1) * stride + k - in, 0)` is split with the smaller half
    /// before and the remainder after.
    Same,
    /// No padding; output extent `floor((in - k) / stride) + 1`.
    Valid,
}

/// Output extents and leading padding of a convolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvGeometry {
    pub out_h: usize,
    pub out_w: usize,
    pub pad_top: usize,
    pub pad_left: usize,
}

impl ConvGeometry {
    pub fn new(
        input: (usize, usize),
        kernel: (usize, usize),
        stride: (usize, usize),
        padding: Padding,
    ) -> Result<Self, NnError> {
        let axis = |n: usize, k: usize, s: usize| -> Option<(usize, usize)> {
            match padding {
                Padding::Same => {
                    let out = n.div_ceil(s);
                    let total = ((out - 1) * s + k).saturating_sub(n);
                    Some((out, total / 2))
                }
                Padding::Valid => (k <= n).then(|| ((n - k) / s + 1, 0)),
            }
        };
        match (axis(input.0, kernel.0, stride.0), axis(input.1, kernel.1, stride.1)) {
            (Some((out_h, pad_top)), Some((out_w, pad_left))) => Ok(Self { out_h, out_w, pad_top, pad_left }),
            _ => Err(NnError::WindowTooLarge { what: "kernel", window: kernel, input }),
        }
    }
}

/// Parameter gradients of a [`ConvLayer`].
#[derive(Debug, Clone, PartialEq)]
pub struct ConvGrads<T> {
    pub kernels: Tensor<T>,
    pub biases: Tensor<T>,
}

/// 2-D convolution (cross-correlation) over height x width x channels input.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvLayer<T> {
    /// Shape `[k_h, k_w, in_ch, out_ch]`.
    pub kernels: Tensor<T>,
    /// Shape `[out_ch]`.
    pub biases: Tensor<T>,
    pub stride: (usize, usize),
    pub padding: Padding,
    pub activation: Activation,
}

impl<T: Scalar> ConvLayer<T> {
    pub fn new(
        kernels: Tensor<T>,
        biases: Tensor<T>,
        stride: (usize, usize),
        padding: Padding,
        activation: Activation,
    ) -> Result<Self, NnError> {
        let out_ch = match kernels.shape() {
            &[_, _, _, o] => o,
            other => return Err(NnError::InvalidShape(other.to_vec())),
        };
        if biases.shape() != [out_ch] {
            return Err(NnError::ShapeMismatch {
                op: "conv2d bias",
                expected: vec![out_ch],
                got: biases.shape().to_vec(),
            });
        }
        if stride.0 == 0 || stride.1 == 0 {
            return Err(NnError::InvalidShape(vec![stride.0, stride.1]));
        }
        Ok(Self { kernels, biases, stride, padding, activation })
    }

    /// `(k_h, k_w, in_ch, out_ch)`
    pub fn dims(&self) -> (usize, usize, usize, usize) {
        let s = self.kernels.shape();
        (s[0], s[1], s[2], s[3])
    }

    fn plan(&self, x: &Tensor<T>) -> Result<Plan, NnError> {
        let (h, w, c) = x.dims3()?;
        let (kh, kw, cin, cout) = self.dims();
        if c != cin {
            return Err(NnError::ChannelMismatch { expected: cin, got: c });
        }
        let geo = ConvGeometry::new((h, w), (kh, kw), self.stride, self.padding)?;
        Ok(Plan { h, w, kh, kw, cin, cout, sh: self.stride.0, sw: self.stride.1, geo })
    }

    pub fn forward(&self, x: &Tensor<T>) -> Result<(Tensor<T>, Cache<T>), NnError> {
        let out = self.infer(x)?;
        let cache = Cache::Conv { input: x.clone(), output: out.clone() };
        Ok((out, cache))
    }

    /// Forward pass without keeping a cache.
    pub fn infer(&self, x: &Tensor<T>) -> Result<Tensor<T>, NnError> {
        let p = self.plan(x)?;
        let (oh, ow) = (p.geo.out_h, p.geo.out_w);
        let k = self.kernels.data();
        let xd = x.data();
        let mut out = Vec::with_capacity(oh * ow * p.cout);
        for _ in 0..oh * ow {
            out.extend_from_slice(self.biases.data());
        }
        if p.planar() {
            // One contiguous plane per output channel, interleaved at the end.
            let plane = oh * ow;
            let mut planes = vec![T::zero(); plane * p.cout];
            for oy in 0..oh {
                for ky in 0..p.kh {
                    let Some(iy) = p.input_row(oy, ky) else { continue };
                    for kx in 0..p.kw {
                        let (lo, hi) = p.col_range(kx);
                        let xs = &xd[iy * p.w + lo + kx - p.geo.pad_left..][..hi - lo];
                        let kbase = (ky * p.kw + kx) * p.cout;
                        for co in 0..p.cout {
                            let kv = k[kbase + co];
                            let os = &mut planes[co * plane + oy * ow + lo..co * plane + oy * ow + hi];
                            for (o, &xv) in os.iter_mut().zip(xs) {
                                *o += kv * xv;
                            }
                        }
                    }
                }
            }
            for (pos, o) in out.chunks_exact_mut(p.cout).enumerate() {
                for (co, v) in o.iter_mut().enumerate() {
                    *v += planes[co * plane + pos];
                }
            }
        } else {
            for oy in 0..oh {
                for ky in 0..p.kh {
                    let Some(iy) = p.input_row(oy, ky) else { continue };
                    for kx in 0..p.kw {
                        let (lo, hi) = p.col_range(kx);
                        let kbase = (ky * p.kw + kx) * p.cin * p.cout;
                        let krow = &k[kbase..kbase + p.cin * p.cout];
                        for ox in lo..hi {
                            let ix = ox * p.sw + kx - p.geo.pad_left;
                            let xs = &xd[(iy * p.w + ix) * p.cin..][..p.cin];
                            let os = &mut out[(oy * ow + ox) * p.cout..][..p.cout];
                            for (ci, &xv) in xs.iter().enumerate() {
                                for (o, &kv) in os.iter_mut().zip(&krow[ci * p.cout..(ci + 1) * p.cout]) {
                                    *o += xv * kv;
                                }
                            }
                        }
                    }
                }
            }
        }
        self.activation.apply_in_place(&mut out);
        Ok(Tensor::from_parts(vec![oh, ow, p.cout], out))
    }

    pub fn backward(&self, cache: &Cache<T>, upstream: &Tensor<T>) -> Result<(Tensor<T>, ConvGrads<T>), NnError> {
        let (dx, grads) = self.backward_impl(cache, upstream, true)?;
        Ok((dx.expect("input gradient requested"), grads))
    }

    /// Parameter gradients only; skips the input gradient.
    pub fn backward_params(&self, cache: &Cache<T>, upstream: &Tensor<T>) -> Result<ConvGrads<T>, NnError> {
        Ok(self.backward_impl(cache, upstream, false)?.1)
    }

    fn backward_impl(
        &self,
        cache: &Cache<T>,
        upstream: &Tensor<T>,
        want_input: bool,
    ) -> Result<(Option<Tensor<T>>, ConvGrads<T>), NnError> {
        let Cache::Conv { input, output } = cache else {
            return Err(NnError::CacheMismatch { expected: "conv2d", got: cache.kind() });
        };
        if upstream.shape() != output.shape() {
            return Err(NnError::ShapeMismatch {
                op: "conv2d backward",
                expected: output.shape().to_vec(),
                got: upstream.shape().to_vec(),
            });
        }
        let p = self.plan(input)?;
        let (oh, ow) = (p.geo.out_h, p.geo.out_w);
        let mut g = upstream.data().to_vec();
        self.activation.mask_in_place(output.data(), &mut g);

        let mut db = vec![T::zero(); p.cout];
        for pos in g.chunks_exact(p.cout) {
            for (b, &v) in db.iter_mut().zip(pos) {
                *b += v;
            }
        }

        let k = self.kernels.data();
        let xd = input.data();
        let mut dk = vec![T::zero(); k.len()];
        let mut dx = if want_input { vec![T::zero(); xd.len()] } else { Vec::new() };
        if p.planar() {
            let plane = oh * ow;
            let mut planes = vec![T::zero(); plane * p.cout];
            for (pos, gv) in g.chunks_exact(p.cout).enumerate() {
                for (co, &v) in gv.iter().enumerate() {
                    planes[co * plane + pos] = v;
                }
            }
            for oy in 0..oh {
                for ky in 0..p.kh {
                    let Some(iy) = p.input_row(oy, ky) else { continue };
                    for kx in 0..p.kw {
                        let (lo, hi) = p.col_range(kx);
                        let start = iy * p.w + lo + kx - p.geo.pad_left;
                        let xs = &xd[start..start + hi - lo];
                        let kbase = (ky * p.kw + kx) * p.cout;
                        for co in 0..p.cout {
                            let gs = &planes[co * plane + oy * ow + lo..co * plane + oy * ow + hi];
                            dk[kbase + co] += xs.iter().zip(gs).map(|(&a, &b)| a * b).sum::<T>();
                            if want_input {
                                let kv = k[kbase + co];
                                for (d, &gv) in dx[start..start + hi - lo].iter_mut().zip(gs) {
                                    *d += kv * gv;
                                }
                            }
                        }
                    }
                }
            }
        } else {
            for oy in 0..oh {
                for ky in 0..p.kh {
                    let Some(iy) = p.input_row(oy, ky) else { continue };
                    for kx in 0..p.kw {
                        let (lo, hi) = p.col_range(kx);
                        let kbase = (ky * p.kw + kx) * p.cin * p.cout;
                        for ox in lo..hi {
                            let ix = ox * p.sw + kx - p.geo.pad_left;
                            let xoff = (iy * p.w + ix) * p.cin;
                            let gs = &g[(oy * ow + ox) * p.cout..][..p.cout];
                            for ci in 0..p.cin {
                                let xv = xd[xoff + ci];
                                let koff = kbase + ci * p.cout;
                                let mut acc = T::zero();
                                for co in 0..p.cout {
                                    dk[koff + co] += xv * gs[co];
                                    acc += k[koff + co] * gs[co];
                                }
                                if want_input {
                                    dx[xoff + ci] += acc;
                                }
                            }
                        }
                    }
                }
            }
        }
        let grads = ConvGrads {
            kernels: Tensor::from_parts(self.kernels.shape().to_vec(), dk),
            biases: Tensor::from_parts(vec![p.cout], db),
        };
        let dx = want_input.then(|| Tensor::from_parts(input.shape().to_vec(), dx));
        Ok((dx, grads))
    }
}

struct Plan {
    h: usize,
    w: usize,
    kh: usize,
    kw: usize,
    cin: usize,
    cout: usize,
    sh: usize,
    sw: usize,
    geo: ConvGeometry,
}

impl Plan {
    /// Single input channel with unit column stride: rows are contiguous runs.
    fn planar(&self) -> bool {
        self.cin == 1 && self.sw == 1
    }

    /// Input row touched by kernel row `ky` at output row `oy`, if inside the input.
    #[inline]
    fn input_row(&self, oy: usize, ky: usize) -> Option<usize> {
        let iy = (oy * self.sh + ky).checked_sub(self.geo.pad_top)?;
        (iy < self.h).then_some(iy)
    }

    /// Output columns `[lo, hi)` for which kernel column `kx` lands inside the input.
    #[inline]
    fn col_range(&self, kx: usize) -> (usize, usize) {
        let pad = self.geo.pad_left;
        let lo = pad.saturating_sub(kx).div_ceil(self.sw);
        let hi = (self.w + pad).saturating_sub(kx).div_ceil(self.sw).min(self.geo.out_w);
        (lo, hi.max(lo))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn layer(
        kh: usize,
        kw: usize,
        cin: usize,
        cout: usize,
        stride: (usize, usize),
        padding: Padding,
    ) -> ConvLayer<f64> {
        ConvLayer::new(
            Tensor::from_fn(&[kh, kw, cin, cout], |i| ((i * 37 % 11) as f64 - 5.0) / 7.0),
            Tensor::from_fn(&[cout], |i| 0.1 * i as f64),
            stride,
            padding,
            Activation::Linear,
        )
        .unwrap()
    }

    /// Direct definition of the padded cross-correlation.
    fn brute_force(layer: &ConvLayer<f64>, x: &Tensor<f64>) -> Tensor<f64> {
        let (h, w, cin) = x.dims3().unwrap();
        let (kh, kw, _, cout) = layer.dims();
        let geo = ConvGeometry::new((h, w), (kh, kw), layer.stride, layer.padding).unwrap();
        let mut out = vec![0.0; geo.out_h * geo.out_w * cout];
        for oy in 0..geo.out_h {
            for ox in 0..geo.out_w {
                for co in 0..cout {
                    let mut acc = layer.biases.data()[co];
                    for ky in 0..kh {
                        for kx in 0..kw {
                            let iy = (oy * layer.stride.0 + ky) as i64 - geo.pad_top as i64;
                            let ix = (ox * layer.stride.1 + kx) as i64 - geo.pad_left as i64;
                            if iy < 0 || ix < 0 || iy >= h as i64 || ix >= w as i64 {
                                continue;
                            }
                            for ci in 0..cin {
                                let xv = x.data()[(iy as usize * w + ix as usize) * cin + ci];
                                let kv = layer.kernels.data()[((ky * kw + kx) * cin + ci) * cout + co];
                                acc += xv * kv;
                            }
                        }
                    }
                    out[(oy * geo.out_w + ox) * cout + co] = acc;
                }
            }
        }
        Tensor::new(vec![geo.out_h, geo.out_w, cout], out).unwrap()
    }

    #[test]
    fn identity_kernel_adds_bias() {
        let l = ConvLayer::new(
            Tensor::filled(&[1, 1, 1, 1], 1.0),
            Tensor::filled(&[1], 0.25),
            (1, 1),
            Padding::Same,
            Activation::Linear,
        )
        .unwrap();
        let x = Tensor::from_fn(&[4, 5, 1], |i| i as f64);
        let y = l.infer(&x).unwrap();
        assert_eq!(y.shape(), x.shape());
        for (a, b) in y.data().iter().zip(x.data()) {
            assert_eq!(*a, b + 0.25);
        }
    }

    #[test]
    fn same_padding_shapes_from_the_architecture() {
        let geo = ConvGeometry::new((140, 23), (10, 32), (1, 1), Padding::Same).unwrap();
        assert_eq!((geo.out_h, geo.out_w, geo.pad_top, geo.pad_left), (140, 23, 4, 15));
        let geo = ConvGeometry::new((23, 11), (5, 11), (1, 11), Padding::Same).unwrap();
        assert_eq!((geo.out_h, geo.out_w, geo.pad_top, geo.pad_left), (23, 1, 2, 0));
        let l = layer(10, 32, 1, 2, (1, 1), Padding::Same);
        let y = l.infer(&Tensor::filled(&[140, 23, 1], 0.5)).unwrap();
        assert_eq!(y.shape(), &[140, 23, 2]);
    }

    #[test]
    fn ones_kernel_on_constant_input() {
        let l = ConvLayer::new(
            Tensor::filled(&[3, 3, 1, 1], 1.0),
            Tensor::zeros(&[1]),
            (1, 1),
            Padding::Same,
            Activation::Linear,
        )
        .unwrap();
        let y = l.infer(&Tensor::filled(&[5, 5, 1], 1.0)).unwrap();
        assert_eq!(y.data()[2 * 5 + 2], 9.0);
        assert_eq!(y.data()[0], 4.0);
    }

    #[test]
    fn matches_brute_force_on_many_geometries() {
        let cases = [
            ((7, 9, 1), (3, 1), 1, 1, (1, 1), Padding::Same),
            ((7, 9, 2), (3, 4), 2, 3, (1, 1), Padding::Same),
            ((8, 11, 3), (5, 11), 3, 2, (1, 11), Padding::Same),
            ((8, 11, 1), (2, 3), 1, 2, (2, 2), Padding::Valid),
            ((6, 6, 2), (6, 6), 2, 1, (1, 1), Padding::Valid),
            ((5, 4, 1), (4, 9), 1, 2, (3, 2), Padding::Same),
            ((10, 3, 1), (3, 1), 1, 1, (2, 1), Padding::Same),
        ];
        for (shape, (kh, kw), cin, cout, stride, padding) in cases {
            let x = Tensor::from_fn(&[shape.0, shape.1, shape.2], |i| ((i * 13 % 17) as f64 - 8.0) / 5.0);
            let l = layer(kh, kw, cin, cout, stride, padding);
            let fast = l.infer(&x).unwrap();
            let slow = brute_force(&l, &x);
            assert_eq!(fast.shape(), slow.shape());
            for (a, b) in fast.data().iter().zip(slow.data()) {
                assert!((a - b).abs() < 1e-12, "{shape:?} k={kh}x{kw} s={stride:?}");
            }
        }
    }

    #[test]
    fn rejects_channel_mismatch_and_oversized_valid_kernel() {
        let l = layer(3, 3, 2, 1, (1, 1), Padding::Valid);
        assert!(matches!(l.infer(&Tensor::zeros(&[5, 5, 1])), Err(NnError::ChannelMismatch { expected: 2, got: 1 })));
        assert!(matches!(l.infer(&Tensor::zeros(&[2, 5, 2])), Err(NnError::WindowTooLarge { .. })));
    }

    #[test]
    fn backward_rejects_foreign_cache() {
        let l = layer(1, 1, 1, 1, (1, 1), Padding::Same);
        let cache = Cache::Pool { input_shape: vec![1, 1, 1], argmax: None };
        assert!(matches!(
            l.backward(&cache, &Tensor::zeros(&[1, 1, 1])),
            Err(NnError::CacheMismatch { expected: "conv2d", got: "pool2d" })
        ));
    }
}
