mod common;

use common::*;
use grbas::nn::{l2_penalty, Activation, ConvLayer, DenseLayer, Padding, PoolSpec};
use grbas::Grade;

/// Projects a layer output onto fixed random weights to get a scalar loss.
fn project(y: &[f64], r: &[f64]) -> f64 {
    y.iter().zip(r).map(|(a, b)| a * b).sum()
}

fn conv_case(input: [usize; 3], kernel: (usize, usize), cout: usize, stride: (usize, usize), padding: Padding) {
    let cin = input[2];
    let mut layer = ConvLayer::new(
        random_tensor(&[kernel.0, kernel.1, cin, cout], 1),
        random_tensor(&[cout], 2),
        stride,
        padding,
        Activation::Relu,
    )
    .unwrap();
    let x = random_tensor(&input, 3);
    let (y, cache) = layer.forward(&x).unwrap();
    let r = random_tensor(y.shape(), 4);
    let (dx, grads) = layer.backward(&cache, &r).unwrap();

    let mut worst = 0.0f64;
    for i in (0..x.len()).step_by(x.len() / 17 + 1) {
        let mut xp = x.clone();
        let n = central_difference(
            |v| {
                xp.data_mut()[i] = v;
                project(layer.infer(&xp).unwrap().data(), r.data())
            },
            x.data()[i],
        );
        worst = worst.max(rel_err(dx.data()[i], n));
    }
    for i in (0..layer.kernels.len()).step_by(layer.kernels.len() / 13 + 1) {
        let k0 = layer.kernels.data()[i];
        let n = central_difference(
            |v| {
                layer.kernels.data_mut()[i] = v;
                project(layer.infer(&x).unwrap().data(), r.data())
            },
            k0,
        );
        layer.kernels.data_mut()[i] = k0;
        worst = worst.max(rel_err(grads.kernels.data()[i], n));
    }
    for i in 0..cout {
        let b0 = layer.biases.data()[i];
        let n = central_difference(
            |v| {
                layer.biases.data_mut()[i] = v;
                project(layer.infer(&x).unwrap().data(), r.data())
            },
            b0,
        );
        layer.biases.data_mut()[i] = b0;
        worst = worst.max(rel_err(grads.biases.data()[i], n));
    }
    assert!(worst < FD_TOLERANCE, "{input:?} {kernel:?} {stride:?}: {worst}");
}

#[test]
fn conv_gradients_match_finite_differences() {
    conv_case([9, 8, 1], (3, 1), 1, (1, 1), Padding::Same);
    conv_case([12, 10, 1], (4, 5), 2, (1, 1), Padding::Same);
    conv_case([11, 22, 3], (5, 11), 2, (1, 11), Padding::Same);
    conv_case([10, 9, 2], (3, 3), 2, (2, 2), Padding::Valid);
    conv_case([20, 40, 1], (10, 32), 2, (1, 1), Padding::Same);
}

#[test]
fn dense_gradients_match_finite_differences() {
    for act in [Activation::Linear, Activation::Relu, Activation::Sigmoid] {
        let mut layer = DenseLayer::new(random_tensor(&[6, 4], 10), random_tensor(&[4], 11), act).unwrap();
        let x = random_tensor(&[6], 12);
        let (y, cache) = layer.forward(x.data()).unwrap();
        let r = random_tensor(&[y.len()], 13);
        let (dx, grads) = layer.backward(&cache, r.data()).unwrap();
        for i in 0..6 {
            let mut xp = x.data().to_vec();
            let n = central_difference(
                |v| {
                    xp[i] = v;
                    project(&layer.infer(&xp).unwrap(), r.data())
                },
                x.data()[i],
            );
            assert!(rel_err(dx[i], n) < FD_TOLERANCE, "{act:?} input {i}");
        }
        for i in 0..layer.weights.len() {
            let w0 = layer.weights.data()[i];
            let n = central_difference(
                |v| {
                    layer.weights.data_mut()[i] = v;
                    project(&layer.infer(x.data()).unwrap(), r.data())
                },
                w0,
            );
            layer.weights.data_mut()[i] = w0;
            assert!(rel_err(grads.weights.data()[i], n) < FD_TOLERANCE, "{act:?} weight {i}");
        }
    }
}

#[test]
fn pool_gradients_match_finite_differences() {
    for spec in [PoolSpec::max((3, 5), (3, 5)), PoolSpec::max((2, 2), (1, 1)), PoolSpec::avg((4, 3), (2, 3))] {
        let x = random_tensor(&[12, 15, 2], 20);
        let (y, cache) = spec.forward(&x).unwrap();
        let r = random_tensor(y.shape(), 21);
        let dx = spec.backward(&cache, &r).unwrap();
        for i in 0..x.len() {
            let mut xp = x.clone();
            let n = central_difference(
                |v| {
                    xp.data_mut()[i] = v;
                    project(spec.forward(&xp).unwrap().0.data(), r.data())
                },
                x.data()[i],
            );
            assert!(rel_err(dx.data()[i], n) < FD_TOLERANCE, "{spec:?} at {i}");
        }
    }
}

#[test]
fn l2_gradient_matches_finite_differences() {
    let w = random_tensor(&[5, 3], 30);
    let (_, g) = l2_penalty(&[&w], 0.001);
    for i in 0..w.len() {
        let mut wp = w.clone();
        let n = central_difference(
            |v| {
                wp.data_mut()[i] = v;
                l2_penalty(&[&wp], 0.001).0
            },
            w.data()[i],
        );
        assert!(rel_err(g[0].data()[i], n) < FD_TOLERANCE);
    }
}

#[test]
fn bce_gradient_matches_finite_differences() {
    let t = Grade::new(1).unwrap().one_hot::<f64>();
    let a = [0.2, 0.6, 0.9, 0.4];
    let g = grbas::net::bce_grad(&a, &t).unwrap();
    for i in 0..4 {
        let mut ap = a;
        let n = central_difference(
            |v| {
                ap[i] = v;
                cross_entropy(&ap, &t)
            },
            a[i],
        );
        assert!(rel_err(g[i], n) < FD_TOLERANCE);
    }
}

#[test]
fn network_gradients_match_finite_differences() {
    let net = live_net(11);
    let x = structured_input(12);
    let t = Grade::new(2).unwrap().one_hot::<f64>();
    let result = check_network(&net, &x, &t, 0.001, 2, 13);
    let checks = &result.checks;
    assert!(checks.len() >= 45, "{} checks", checks.len());
    let nonzero = checks.iter().filter(|c| c.analytic.abs() > 1e-9).count();
    assert!(nonzero >= 30, "only {nonzero} informative checks");
    for c in checks {
        assert!(c.rel() < FD_TOLERANCE, "{}[{}]: {} vs {}", c.param, c.index, c.analytic, c.numeric);
    }
}
