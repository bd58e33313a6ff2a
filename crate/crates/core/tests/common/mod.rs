#![allow(dead_code)]

use grbas::net::{bce, GrbasNet};
use grbas::nn::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Central-difference step.
pub const FD_STEP: f64 = 1e-5;
/// Largest accepted relative error between analytic and numeric gradients.
pub const FD_TOLERANCE: f64 = 1e-4;
/// Denominator floor so that gradients at float-noise level compare absolutely.
pub const FD_FLOOR: f64 = 1e-6;

pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(FD_FLOOR)
}

/// Largest departure from the smooth-case halving of the one-sided gap,
/// relative to the gradient. Equal to the acceptance tolerance.
pub const KINK_TOLERANCE: f64 = FD_TOLERANCE;

pub fn central_difference(mut f: impl FnMut(f64) -> f64, x0: f64) -> f64 {
    (f(x0 + FD_STEP) - f(x0 - FD_STEP)) / (2.0 * FD_STEP)
}

/// Steps tried in turn by [`smooth_difference`]; a switch is less likely to
/// fall within a smaller step.
pub const FD_STEPS: [f64; 3] = [FD_STEP, FD_STEP / 10.0, FD_STEP / 100.0];

/// Central difference at the largest step in [`FD_STEPS`] with no max-pool or
/// ReLU switch inside it, or `None` if every step has one. On a smooth
/// function the gap between forward and backward differences is proportional
/// to the step, so halving the step halves it; a switch breaks that ratio.
pub fn smooth_difference(mut f: impl FnMut(f64) -> f64, x0: f64) -> Option<f64> {
    let f0 = f(x0);
    let mut gap = |h: f64| {
        let (fp, fm) = (f(x0 + h), f(x0 - h));
        ((fp - f0) / h - (f0 - fm) / h, (fp - fm) / (2.0 * h))
    };
    FD_STEPS.into_iter().find_map(|h| {
        let (g1, central) = gap(h);
        let (g2, _) = gap(h / 2.0);
        ((g1 - 2.0 * g2).abs() < KINK_TOLERANCE * central.abs().max(FD_FLOOR)).then_some(central)
    })
}

pub fn random_tensor(shape: &[usize], seed: u64) -> Tensor<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Tensor::from_fn(shape, |_| rng.random_range(-1.0..1.0))
}

/// Smooth input: a mixture of random 2-D sinusoids, so pooling windows
/// have well-separated maxima.
pub fn structured_input(seed: u64) -> Tensor<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let waves: Vec<[f64; 4]> = (0..3)
        .map(|_| {
            [
                rng.random_range(0.02..0.2),
                rng.random_range(0.05..0.4),
                rng.random_range(0.0..std::f64::consts::TAU),
                rng.random_range(0.3..1.0),
            ]
        })
        .collect();
    Tensor::from_fn(&[420, 117, 1], |i| {
        let (r, c) = ((i / 117) as f64, (i % 117) as f64);
        waves.iter().map(|[fr, fc, ph, a]| a * (fr * r + fc * c + ph).sin()).sum()
    })
}

/// Network with small positive biases so that every ReLU stage passes gradient.
pub fn live_net(seed: u64) -> GrbasNet<f64> {
    let mut net = GrbasNet::<f64>::init(seed);
    let names: Vec<String> = net.named_params().into_iter().map(|(n, _)| n).collect();
    for (name, p) in names.iter().zip(net.params_mut()) {
        if name.ends_with(".bias") && !name.starts_with("smoothing") && !name.starts_with("head.output") {
            p.data_mut().iter_mut().for_each(|v| *v = 0.05);
        }
    }
    net
}

pub struct NetworkChecks {
    pub checks: Vec<Check>,
    /// Sampled coordinates rejected because the step crossed a kink.
    pub kinks: usize,
}

pub struct Check {
    pub param: String,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
}

impl Check {
    pub fn rel(&self) -> f64 {
        rel_err(self.analytic, self.numeric)
    }
}

/// Compares analytic and central-difference gradients of the full loss
/// (cross-entropy plus L2) at `per_param` random coordinates of every parameter tensor.
pub fn check_network(
    net: &GrbasNet<f64>,
    x: &Tensor<f64>,
    target: &[f64],
    lambda: f64,
    per_param: usize,
    seed: u64,
) -> NetworkChecks {
    let (_, _, mut grads) = net.example_gradients(x, target).unwrap();
    net.add_l2(&mut grads, lambda);
    let analytic: Vec<(String, Tensor<f64>)> = grads.named_params().into_iter().map(|(n, t)| (n, t.clone())).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = NetworkChecks { checks: Vec::new(), kinks: 0 };
    for (pi, (name, g)) in analytic.iter().enumerate() {
        let wanted = per_param.min(g.len());
        let mut found = 0;
        let mut attempts = 0;
        while found < wanted && attempts < 10 * wanted {
            attempts += 1;
            let index = rng.random_range(0..g.len());
            let mut probe = net.clone();
            let x0 = probe.params_mut()[pi].data()[index];
            let numeric = smooth_difference(
                |v| {
                    probe.params_mut()[pi].data_mut()[index] = v;
                    let a = probe.infer(x).unwrap();
                    probe.loss(&a, target, lambda).unwrap()
                },
                x0,
            );
            match numeric {
                Some(numeric) => {
                    found += 1;
                    out.checks.push(Check { param: name.clone(), index, analytic: g.data()[index], numeric });
                }
                None => out.kinks += 1,
            }
        }
    }
    out
}

pub fn cross_entropy(a: &[f64], t: &[f64]) -> f64 {
    bce(a, t).unwrap()
}
