//! The two-path grade classifier.
//!
//! ```text
//! input 420x117x1
//!   └─ smoothing: 4 Gaussian-initialised convs, heights 3/11/21/31, width 1
//!        ├─ path 1 (per scale): max pool 3x5 → conv 2@10x32 relu → max pool 6x2
//!        │     concat scales → 23x11x8 → conv 2@5x11 stride 1x11 relu → 23x1x2
//!        └─ path 2 (per scale): global max, global mean → 8 → dense 2 relu
//!   join 46 + 2 = 48 → dense 3 relu → dense 10 relu → dense 4 sigmoid
//! ```
//!
//! Path 2's `max - mean` pair is a peak-prominence measure over the smoothed
//! cepstrogram.

mod checkpoint;

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::features::{Cepstrogram, COLS, ROWS};
use crate::grade::Grade;
use crate::nn::{
    concat_channels, l2_penalty, split_channels, Activation, Cache, ConvLayer, DenseLayer, NnError, Padding, PoolKind,
    PoolSpec, Tensor,
};
use crate::Scalar;

pub use checkpoint::{load_checkpoint, save_checkpoint, CheckpointMeta};

pub const SMOOTHING_HEIGHTS: [usize; 4] = [3, 11, 21, 31];
pub const SCALES: usize = SMOOTHING_HEIGHTS.len();
pub const PATH1_KERNEL: (usize, usize) = (10, 32);
pub const PATH1_CHANNELS: usize = 2;
pub const MERGE_KERNEL: (usize, usize) = (5, 11);
pub const MERGE_STRIDE: (usize, usize) = (1, 11);
pub const JOINED_LEN: usize = 48;
pub const BOTTLENECK: usize = 3;
pub const HIDDEN: usize = 10;
pub const OUTPUTS: usize = 4;

/// Trainable scalars in the architecture.
pub const PARAM_COUNT: usize = 3769;

/// Activation clamp applied inside the cross-entropy.
pub const BCE_CLAMP: f64 = 1e-7;

const ENTRY_POOL: PoolSpec = PoolSpec { kind: PoolKind::Max, window: (3, 5), stride: (3, 5) };
const EXIT_POOL: PoolSpec = PoolSpec { kind: PoolKind::Max, window: (6, 2), stride: (6, 2) };
const GLOBAL_MAX: PoolSpec = PoolSpec { kind: PoolKind::Max, window: (ROWS, COLS), stride: (ROWS, COLS) };
const GLOBAL_AVG: PoolSpec = PoolSpec { kind: PoolKind::Avg, window: (ROWS, COLS), stride: (ROWS, COLS) };

#[derive(Debug, Error)]
pub enum NetError {
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error("target must be a one-hot vector of length 4, got {0:?}")]
    MalformedTarget(Vec<f64>),
    #[error("expected {expected} activations, got {got}")]
    ActivationCount { expected: usize, got: usize },
    #[error("checkpoint {path}: {reason}")]
    Checkpoint { path: String, reason: String },
}

/// Gaussian smoothing kernel of height `n`: `exp(-(i - (n-1)/2)^2 / (2 sigma^2))`
/// with `sigma = n / 6`, normalised to unit sum.
pub fn gaussian_kernel(n: usize) -> Vec<f64> {
    let sigma = n as f64 / 6.0;
    let centre = (n as f64 - 1.0) / 2.0;
    let raw: Vec<f64> = (0..n).map(|i| (-(i as f64 - centre).powi(2) / (2.0 * sigma * sigma)).exp()).collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|g| g / total).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct GrbasNet<T> {
    pub smoothing: Vec<ConvLayer<T>>,
    pub path1_conv: Vec<ConvLayer<T>>,
    pub path1_merge: ConvLayer<T>,
    pub path2_dense: DenseLayer<T>,
    pub bottleneck: DenseLayer<T>,
    pub hidden: DenseLayer<T>,
    pub output: DenseLayer<T>,
}

/// Every intermediate value of one forward pass, plus the layer caches
/// needed by [`GrbasNet::backward`].
#[derive(Debug, Clone)]
pub struct ForwardPass<T> {
    pub smoothed: Vec<Tensor<T>>,
    pub entry_pooled: Vec<Tensor<T>>,
    pub path1_conv: Vec<Tensor<T>>,
    pub exit_pooled: Vec<Tensor<T>>,
    pub merged_input: Tensor<T>,
    pub path1_out: Tensor<T>,
    /// Global maximum of each smoothed map.
    pub peak: Vec<T>,
    /// Global mean of each smoothed map.
    pub mean: Vec<T>,
    /// `[peak_0, mean_0, peak_1, mean_1, ...]`
    pub path2_in: Vec<T>,
    pub path2_out: Vec<T>,
    pub joined: Vec<T>,
    pub bottleneck: Vec<T>,
    pub hidden: Vec<T>,
    pub output: Vec<T>,
    caches: Caches<T>,
}

#[derive(Debug, Clone)]
struct Caches<T> {
    smoothing: Vec<Cache<T>>,
    entry_pool: Vec<Cache<T>>,
    path1_conv: Vec<Cache<T>>,
    exit_pool: Vec<Cache<T>>,
    global_max: Vec<Cache<T>>,
    global_avg: Vec<Cache<T>>,
    merge: Cache<T>,
    path2: Cache<T>,
    bottleneck: Cache<T>,
    hidden: Cache<T>,
    output: Cache<T>,
}

impl<T: Scalar> GrbasNet<T> {
    /// Gaussian smoothing kernels, Glorot-uniform weights elsewhere, zero biases.
    pub fn init(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let smoothing = SMOOTHING_HEIGHTS
            .iter()
            .map(|&n| {
                let k = gaussian_kernel(n);
                conv(Tensor::from_fn(&[n, 1, 1, 1], |i| T::of(k[i])), (1, 1), Activation::Linear)
            })
            .collect();
        let path1_conv = (0..SCALES)
            .map(|_| {
                conv(glorot(&mut rng, &[PATH1_KERNEL.0, PATH1_KERNEL.1, 1, PATH1_CHANNELS]), (1, 1), Activation::Relu)
            })
            .collect();
        let path1_merge = conv(
            glorot(&mut rng, &[MERGE_KERNEL.0, MERGE_KERNEL.1, SCALES * PATH1_CHANNELS, PATH1_CHANNELS]),
            MERGE_STRIDE,
            Activation::Relu,
        );
        let path2_dense = dense(glorot(&mut rng, &[2 * SCALES, 2]), Activation::Relu);
        let bottleneck = dense(glorot(&mut rng, &[JOINED_LEN, BOTTLENECK]), Activation::Relu);
        let hidden = dense(glorot(&mut rng, &[BOTTLENECK, HIDDEN]), Activation::Relu);
        let output = dense(glorot(&mut rng, &[HIDDEN, OUTPUTS]), Activation::Sigmoid);
        let net = Self { smoothing, path1_conv, path1_merge, path2_dense, bottleneck, hidden, output };
        assert_eq!(net.param_count(), PARAM_COUNT);
        net
    }

    /// Same architecture with every parameter set to zero (gradient accumulator).
    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        for p in z.params_mut() {
            p.data_mut().iter_mut().for_each(|v| *v = T::zero());
        }
        z
    }

    pub fn param_count(&self) -> usize {
        self.named_params().iter().map(|(_, t)| t.len()).sum()
    }

    /// Parameters in a fixed order with stable names.
    pub fn named_params(&self) -> Vec<(String, &Tensor<T>)> {
        let mut out = Vec::with_capacity(26);
        for (i, l) in self.smoothing.iter().enumerate() {
            out.push((format!("smoothing.{i}.kernel"), &l.kernels));
            out.push((format!("smoothing.{i}.bias"), &l.biases));
        }
        for (i, l) in self.path1_conv.iter().enumerate() {
            out.push((format!("path1.conv.{i}.kernel"), &l.kernels));
            out.push((format!("path1.conv.{i}.bias"), &l.biases));
        }
        out.push(("path1.merge.kernel".into(), &self.path1_merge.kernels));
        out.push(("path1.merge.bias".into(), &self.path1_merge.biases));
        for (name, l) in [
            ("path2.dense", &self.path2_dense),
            ("head.bottleneck", &self.bottleneck),
            ("head.hidden", &self.hidden),
            ("head.output", &self.output),
        ] {
            out.push((format!("{name}.weight"), &l.weights));
            out.push((format!("{name}.bias"), &l.biases));
        }
        out
    }

    /// Mutable parameters in the same order as [`Self::named_params`].
    pub fn params_mut(&mut self) -> Vec<&mut Tensor<T>> {
        let mut out = Vec::with_capacity(26);
        for l in self.smoothing.iter_mut().chain(self.path1_conv.iter_mut()) {
            out.push(&mut l.kernels);
            out.push(&mut l.biases);
        }
        out.push(&mut self.path1_merge.kernels);
        out.push(&mut self.path1_merge.biases);
        for l in [&mut self.path2_dense, &mut self.bottleneck, &mut self.hidden, &mut self.output] {
            out.push(&mut l.weights);
            out.push(&mut l.biases);
        }
        out
    }

    /// Kernels that carry the L2 penalty: the path-1 convolutions and the merge conv.
    pub fn regularized(&self) -> Vec<&Tensor<T>> {
        let mut out: Vec<&Tensor<T>> = self.path1_conv.iter().map(|l| &l.kernels).collect();
        out.push(&self.path1_merge.kernels);
        out
    }

    pub fn regularized_mut(&mut self) -> Vec<&mut Tensor<T>> {
        let mut out: Vec<&mut Tensor<T>> = self.path1_conv.iter_mut().map(|l| &mut l.kernels).collect();
        out.push(&mut self.path1_merge.kernels);
        out
    }

    pub fn is_regularized(name: &str) -> bool {
        name.starts_with("path1.") && name.ends_with(".kernel")
    }

    pub fn cast<U: Scalar>(&self) -> GrbasNet<U> {
        let c = |l: &ConvLayer<T>| ConvLayer {
            kernels: l.kernels.cast(),
            biases: l.biases.cast(),
            stride: l.stride,
            padding: l.padding,
            activation: l.activation,
        };
        let d = |l: &DenseLayer<T>| DenseLayer {
            weights: l.weights.cast(),
            biases: l.biases.cast(),
            activation: l.activation,
        };
        GrbasNet {
            smoothing: self.smoothing.iter().map(c).collect(),
            path1_conv: self.path1_conv.iter().map(c).collect(),
            path1_merge: c(&self.path1_merge),
            path2_dense: d(&self.path2_dense),
            bottleneck: d(&self.bottleneck),
            hidden: d(&self.hidden),
            output: d(&self.output),
        }
    }

    /// Full forward pass over a 420 x 117 x 1 input.
    pub fn forward(&self, x: &Tensor<T>) -> Result<ForwardPass<T>, NetError> {
        if x.shape() != [ROWS, COLS, 1] {
            return Err(NnError::ShapeMismatch {
                op: "network input",
                expected: vec![ROWS, COLS, 1],
                got: x.shape().to_vec(),
            }
            .into());
        }
        let mut smoothed = Vec::with_capacity(SCALES);
        let mut entry_pooled = Vec::with_capacity(SCALES);
        let mut path1_conv = Vec::with_capacity(SCALES);
        let mut exit_pooled = Vec::with_capacity(SCALES);
        let mut peak = Vec::with_capacity(SCALES);
        let mut mean = Vec::with_capacity(SCALES);
        let mut path2_in = Vec::with_capacity(2 * SCALES);
        let mut caches_s = Vec::with_capacity(SCALES);
        let mut caches_e = Vec::with_capacity(SCALES);
        let mut caches_c = Vec::with_capacity(SCALES);
        let mut caches_x = Vec::with_capacity(SCALES);
        let mut caches_gm = Vec::with_capacity(SCALES);
        let mut caches_ga = Vec::with_capacity(SCALES);

        for i in 0..SCALES {
            let (s, cs) = self.smoothing[i].forward(x)?;
            let (e, ce) = ENTRY_POOL.forward(&s)?;
            let (c, cc) = self.path1_conv[i].forward(&e)?;
            let (p, cx) = EXIT_POOL.forward(&c)?;
            let (gm, cgm) = GLOBAL_MAX.forward(&s)?;
            let (ga, cga) = GLOBAL_AVG.forward(&s)?;
            peak.push(gm.data()[0]);
            mean.push(ga.data()[0]);
            path2_in.push(gm.data()[0]);
            path2_in.push(ga.data()[0]);
            smoothed.push(s);
            entry_pooled.push(e);
            path1_conv.push(c);
            exit_pooled.push(p);
            caches_s.push(cs);
            caches_e.push(ce);
            caches_c.push(cc);
            caches_x.push(cx);
            caches_gm.push(cgm);
            caches_ga.push(cga);
        }

        let merged_input = concat_channels(&exit_pooled)?;
        let (path1_out, c_merge) = self.path1_merge.forward(&merged_input)?;
        let (path2_out, c_p2) = self.path2_dense.forward(&path2_in)?;
        let joined: Vec<T> = path1_out.data().iter().chain(&path2_out).copied().collect();
        let (bottleneck, c_b) = self.bottleneck.forward(&joined)?;
        let (hidden, c_h) = self.hidden.forward(&bottleneck)?;
        let (output, c_o) = self.output.forward(&hidden)?;

        Ok(ForwardPass {
            smoothed,
            entry_pooled,
            path1_conv,
            exit_pooled,
            merged_input,
            path1_out,
            peak,
            mean,
            path2_in,
            path2_out,
            joined,
            bottleneck,
            hidden,
            output,
            caches: Caches {
                smoothing: caches_s,
                entry_pool: caches_e,
                path1_conv: caches_c,
                exit_pool: caches_x,
                global_max: caches_gm,
                global_avg: caches_ga,
                merge: c_merge,
                path2: c_p2,
                bottleneck: c_b,
                hidden: c_h,
                output: c_o,
            },
        })
    }

    pub fn forward_cepstrogram(&self, c: &Cepstrogram<T>) -> Result<ForwardPass<T>, NetError> {
        self.forward(&to_input(c))
    }

    /// Output activations only.
    pub fn infer(&self, x: &Tensor<T>) -> Result<Vec<T>, NetError> {
        Ok(self.forward(x)?.output)
    }

    /// Gradients of a scalar loss with respect to every parameter, given the
    /// loss gradient with respect to the four output activations.
    pub fn backward(&self, pass: &ForwardPass<T>, d_output: &[T]) -> Result<GrbasNet<T>, NetError> {
        if d_output.len() != OUTPUTS {
            return Err(NetError::ActivationCount { expected: OUTPUTS, got: d_output.len() });
        }
        let c = &pass.caches;
        let mut grads = self.zeros_like();

        let (d_hidden, g) = self.output.backward(&c.output, d_output)?;
        grads.output.weights = g.weights;
        grads.output.biases = g.biases;
        let (d_bottleneck, g) = self.hidden.backward(&c.hidden, &d_hidden)?;
        grads.hidden.weights = g.weights;
        grads.hidden.biases = g.biases;
        let (d_joined, g) = self.bottleneck.backward(&c.bottleneck, &d_bottleneck)?;
        grads.bottleneck.weights = g.weights;
        grads.bottleneck.biases = g.biases;

        let n1 = pass.path1_out.len();
        let d_path1 = Tensor::from_parts(pass.path1_out.shape().to_vec(), d_joined[..n1].to_vec());
        let (d_path2_in, g) = self.path2_dense.backward(&c.path2, &d_joined[n1..])?;
        grads.path2_dense.weights = g.weights;
        grads.path2_dense.biases = g.biases;

        let (d_merged, g) = self.path1_merge.backward(&c.merge, &d_path1)?;
        grads.path1_merge.kernels = g.kernels;
        grads.path1_merge.biases = g.biases;
        let d_exit = split_channels(&d_merged, &[PATH1_CHANNELS; SCALES])?;

        for i in 0..SCALES {
            let d_conv = EXIT_POOL.backward(&c.exit_pool[i], &d_exit[i])?;
            let (d_entry, g) = self.path1_conv[i].backward(&c.path1_conv[i], &d_conv)?;
            grads.path1_conv[i].kernels = g.kernels;
            grads.path1_conv[i].biases = g.biases;
            let mut d_smoothed = ENTRY_POOL.backward(&c.entry_pool[i], &d_entry)?;
            let unit = [1, 1, 1];
            let d_peak = Tensor::from_parts(unit.to_vec(), vec![d_path2_in[2 * i]]);
            let d_mean = Tensor::from_parts(unit.to_vec(), vec![d_path2_in[2 * i + 1]]);
            d_smoothed.add_assign(&GLOBAL_MAX.backward(&c.global_max[i], &d_peak)?);
            d_smoothed.add_assign(&GLOBAL_AVG.backward(&c.global_avg[i], &d_mean)?);
            let g = self.smoothing[i].backward_params(&c.smoothing[i], &d_smoothed)?;
            grads.smoothing[i].kernels = g.kernels;
            grads.smoothing[i].biases = g.biases;
        }
        Ok(grads)
    }

    /// Summed binary cross-entropy plus the L2 penalty on the regularised kernels.
    pub fn loss(&self, activations: &[T], target: &[T], lambda: T) -> Result<T, NetError> {
        let data = bce(activations, target)?;
        let (penalty, _) = l2_penalty(&self.regularized(), lambda);
        Ok(data + penalty)
    }

    /// Cross-entropy loss and its parameter gradient for one example
    /// (no L2 term; see [`Self::add_l2`]).
    pub fn example_gradients(&self, x: &Tensor<T>, target: &[T]) -> Result<(T, Vec<T>, GrbasNet<T>), NetError> {
        let pass = self.forward(x)?;
        let loss = bce(&pass.output, target)?;
        let d_out = bce_grad(&pass.output, target)?;
        let grads = self.backward(&pass, &d_out)?;
        Ok((loss, pass.output, grads))
    }

    /// Adds `2 lambda w` for every regularised kernel into `grads`, returning the penalty.
    pub fn add_l2(&self, grads: &mut GrbasNet<T>, lambda: T) -> T {
        let (penalty, l2) = l2_penalty(&self.regularized(), lambda);
        for (g, d) in grads.regularized_mut().into_iter().zip(&l2) {
            g.add_assign(d);
        }
        penalty
    }

    /// Every parameter, by name.
    pub fn dump_weights(&self) -> BTreeMap<String, Tensor<T>> {
        self.named_params().into_iter().map(|(name, t)| (name, t.clone())).collect()
    }

    /// Every intermediate output of a forward pass, by name.
    pub fn dump_activations(&self, x: &Tensor<T>) -> Result<BTreeMap<String, Tensor<T>>, NetError> {
        let p = self.forward(x)?;
        let mut out = BTreeMap::new();
        let vector = |v: &[T]| Tensor::from_parts(vec![v.len()], v.to_vec());
        let unit = |v: T| Tensor::from_parts(vec![1, 1, 1], vec![v]);
        for i in 0..SCALES {
            out.insert(format!("smoothing.{i}"), p.smoothed[i].clone());
            out.insert(format!("path1.entry_pool.{i}"), p.entry_pooled[i].clone());
            out.insert(format!("path1.conv.{i}"), p.path1_conv[i].clone());
            out.insert(format!("path1.exit_pool.{i}"), p.exit_pooled[i].clone());
            out.insert(format!("path2.peak.{i}"), unit(p.peak[i]));
            out.insert(format!("path2.mean.{i}"), unit(p.mean[i]));
        }
        out.insert("path1.concat".into(), p.merged_input.clone());
        out.insert("path1.merge".into(), p.path1_out.clone());
        out.insert("path2.features".into(), vector(&p.path2_in));
        out.insert("path2.dense".into(), vector(&p.path2_out));
        out.insert("head.joined".into(), vector(&p.joined));
        out.insert("head.bottleneck".into(), vector(&p.bottleneck));
        out.insert("head.hidden".into(), vector(&p.hidden));
        out.insert("head.output".into(), vector(&p.output));
        Ok(out)
    }
}

/// Network input tensor from a cepstrogram.
pub fn to_input<T: Scalar>(c: &Cepstrogram<T>) -> Tensor<T> {
    Tensor::from_parts(vec![ROWS, COLS, 1], c.values().to_vec())
}

/// Index of the largest activation; ties go to the lower grade.
pub fn predict<T: Scalar>(activations: &[T]) -> Grade {
    let best = activations
        .iter()
        .enumerate()
        .take(OUTPUTS)
        .fold(0, |best, (i, &a)| if a > activations[best] { i } else { best });
    Grade::new(best as u8).expect("four outputs")
}

fn check_target<T: Scalar>(activations: &[T], target: &[T]) -> Result<(), NetError> {
    if activations.len() != OUTPUTS {
        return Err(NetError::ActivationCount { expected: OUTPUTS, got: activations.len() });
    }
    let ones = target.iter().filter(|&&t| t == T::one()).count();
    let zeros = target.iter().filter(|&&t| t == T::zero()).count();
    if target.len() != OUTPUTS || ones != 1 || zeros != OUTPUTS - 1 {
        return Err(NetError::MalformedTarget(target.iter().map(|t| t.as_f64()).collect()));
    }
    Ok(())
}

/// `sum_k -[t_k log a_k + (1 - t_k) log(1 - a_k)]` with `a` clamped to `[1e-7, 1 - 1e-7]`.
pub fn bce<T: Scalar>(activations: &[T], target: &[T]) -> Result<T, NetError> {
    check_target(activations, target)?;
    let lo = T::of(BCE_CLAMP);
    let hi = T::one() - lo;
    Ok(activations
        .iter()
        .zip(target)
        .map(|(&a, &t)| {
            let a = a.max(lo).min(hi);
            -(t * a.ln() + (T::one() - t) * (T::one() - a).ln())
        })
        .sum())
}

/// Gradient of [`bce`] with respect to the (unclamped) activations; zero
/// where the clamp is active.
pub fn bce_grad<T: Scalar>(activations: &[T], target: &[T]) -> Result<Vec<T>, NetError> {
    check_target(activations, target)?;
    let lo = T::of(BCE_CLAMP);
    let hi = T::one() - lo;
    Ok(activations
        .iter()
        .zip(target)
        .map(|(&a, &t)| if a < lo || a > hi { T::zero() } else { -t / a + (T::one() - t) / (T::one() - a) })
        .collect())
}

fn conv<T: Scalar>(kernels: Tensor<T>, stride: (usize, usize), activation: Activation) -> ConvLayer<T> {
    let out = kernels.shape()[3];
    ConvLayer::new(kernels, Tensor::zeros(&[out]), stride, Padding::Same, activation)
        .expect("architecture shapes are consistent")
}

fn dense<T: Scalar>(weights: Tensor<T>, activation: Activation) -> DenseLayer<T> {
    let out = weights.shape()[1];
    DenseLayer::new(weights, Tensor::zeros(&[out]), activation).expect("architecture shapes are consistent")
}

/// Glorot-uniform: `U(-l, l)`, `l = sqrt(6 / (fan_in + fan_out))`, with the
/// receptive field counted into both fans for convolution kernels.
fn glorot<T: Scalar>(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor<T> {
    let (fan_in, fan_out) = match shape {
        [i, o] => (*i, *o),
        [kh, kw, i, o] => (kh * kw * i, kh * kw * o),
        _ => unreachable!("weights are rank 2 or 4"),
    };
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    Tensor::from_fn(shape, |_| T::of(rng.random_range(-limit..limit)))
}
