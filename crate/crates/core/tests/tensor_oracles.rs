//! Convolution against a naive-loop reference and every layer's reverse
//! pass against central finite differences (h = 1e-5, 64-bit).

mod common;

use common::*;
use rand::Rng;
use scalechan::tensor::*;

const H: f64 = 1e-5;
const TOL: f64 = 1e-4;
const SEEDS: u64 = 20;

#[test]
fn conv_matches_naive_loops() {
    let cases = [
        // (batch, cin, h, w, cout, k, stride, pad)
        (2, 3, 8, 8, 4, 3, 2, 1),
        (1, 1, 5, 5, 1, 3, 1, 0),
        (3, 2, 7, 9, 5, 3, 1, 1),
        (2, 4, 11, 10, 3, 5, 2, 2),
        (1, 2, 6, 6, 2, 1, 1, 0),
        (2, 3, 9, 9, 2, 3, 2, 0),
        (1, 1, 28, 28, 16, 3, 1, 0),
    ];
    for (seed, &(b, cin, h, w, cout, k, s, p)) in cases.iter().enumerate() {
        let mut r = rng(seed as u64);
        let x = random_tensor(&[b, cin, h, w], &mut r);
        let wt = random_tensor(&[cout, cin, k, k], &mut r);
        let bias = random_tensor(&[cout], &mut r);
        let fast = conv2d_forward(&x, &wt, &bias, s, p).unwrap();
        let slow = naive_conv(&x, &wt, &bias, s, p);
        assert_eq!(fast.shape(), slow.shape());
        let err = fast.max_abs_diff(&slow);
        assert!(err < 1e-12, "case {seed}: {err}");
    }
}

#[test]
fn conv_gradients() {
    for seed in 0..SEEDS {
        let mut r = rng(100 + seed);
        let (stride, pad) = if seed % 2 == 0 { (1, 1) } else { (2, 0) };
        let x = random_tensor(&[2, 2, 6, 5], &mut r);
        let w = random_tensor(&[3, 2, 3, 3], &mut r);
        let b = random_tensor(&[3], &mut r);
        let y = conv2d_forward(&x, &w, &b, stride, pad).unwrap();
        let probe = random_tensor(y.shape(), &mut r);
        let (gx, gw, gb) = conv2d_backward(&probe, Some(&x), &w, stride, pad).unwrap();
        let loss = |x: &Tensor<f64>, w: &Tensor<f64>, b: &Tensor<f64>| {
            dot(conv2d_forward(x, w, b, stride, pad).unwrap().data(), probe.data())
        };
        let nx = numeric_grad(&x, H, |v| loss(v, &w, &b));
        let nw = numeric_grad(&w, H, |v| loss(&x, v, &b));
        let nb = numeric_grad(&b, H, |v| loss(&x, &w, v));
        for (name, a, n) in [
            ("input", gx.data(), &nx),
            ("weight", gw.data(), &nw),
            ("bias", gb.data(), &nb),
        ] {
            let e = max_rel_error(a, n);
            assert!(e < TOL, "seed {seed} {name}: {e}");
        }
    }
}

#[test]
fn dense_gradients() {
    for seed in 0..SEEDS {
        let mut r = rng(200 + seed);
        let x = random_tensor(&[3, 2, 2, 2], &mut r);
        let w = random_tensor(&[4, 8], &mut r);
        let b = random_tensor(&[4], &mut r);
        let probe = random_tensor(&[3, 4], &mut r);
        let (gx, gw, gb) = dense_backward(&probe, Some(&x), &w).unwrap();
        let loss = |x: &Tensor<f64>, w: &Tensor<f64>, b: &Tensor<f64>| {
            dot(dense_forward(x, w, b).unwrap().data(), probe.data())
        };
        assert!(max_rel_error(gx.data(), &numeric_grad(&x, H, |v| loss(v, &w, &b))) < TOL);
        assert!(max_rel_error(gw.data(), &numeric_grad(&w, H, |v| loss(&x, v, &b))) < TOL);
        assert!(max_rel_error(gb.data(), &numeric_grad(&b, H, |v| loss(&x, &w, v))) < TOL);
    }
}

#[test]
fn batchnorm_gradients_train_and_eval() {
    for seed in 0..SEEDS {
        let mut r = rng(300 + seed);
        let x = random_tensor(&[3, 2, 3, 3], &mut r);
        let gamma = random_tensor(&[2], &mut r);
        let beta = random_tensor(&[2], &mut r);
        let probe = random_tensor(x.shape(), &mut r);
        for mode in [Mode::Train, Mode::Eval] {
            let run = |x: &Tensor<f64>, g: &Tensor<f64>, b: &Tensor<f64>| {
                let (mut rm, mut rv) = (vec![0.3, -0.2], vec![1.5, 0.7]);
                let (y, cache) = batchnorm2d_forward(x, g, b, &mut rm, &mut rv, mode, 0.1, 1e-5).unwrap();
                (y, cache)
            };
            let (_, cache) = run(&x, &gamma, &beta);
            let (gx, gg, gb) = batchnorm2d_backward(&probe, Some(&cache), &gamma).unwrap();
            let loss = |x: &Tensor<f64>, g: &Tensor<f64>, b: &Tensor<f64>| dot(run(x, g, b).0.data(), probe.data());
            let ex = max_rel_error(gx.data(), &numeric_grad(&x, H, |v| loss(v, &gamma, &beta)));
            let eg = max_rel_error(&gg, &numeric_grad(&gamma, H, |v| loss(&x, v, &beta)));
            let eb = max_rel_error(&gb, &numeric_grad(&beta, H, |v| loss(&x, &gamma, v)));
            assert!(ex < TOL && eg < TOL && eb < TOL, "seed {seed} {mode:?}: {ex} {eg} {eb}");
        }
    }
}

#[test]
fn relu_gradients() {
    for seed in 0..SEEDS {
        let mut r = rng(400 + seed);
        // keep samples away from the kink so the finite difference is valid
        let data = (0..24)
            .map(|_| {
                let v: f64 = r.random::<f64>() * 2.0 - 1.0;
                if v.abs() < 1e-2 {
                    v + 0.05
                } else {
                    v
                }
            })
            .collect();
        let x = Tensor::from_vec(&[2, 3, 2, 2], data).unwrap();
        let probe = random_tensor(x.shape(), &mut r);
        let g = relu_backward(&probe, Some(&x)).unwrap();
        let n = numeric_grad(&x, H, |v| dot(relu_forward(v).data(), probe.data()));
        assert!(max_rel_error(g.data(), &n) < TOL);
    }
}

#[test]
fn dropout_gradient_with_fixed_mask() {
    for seed in 0..SEEDS {
        let mut r = rng(500 + seed);
        let x = random_tensor(&[4, 6], &mut r);
        let probe = random_tensor(x.shape(), &mut r);
        let (_, mask) = dropout_forward(&x, 0.3, Mode::Train, &mut rng(seed)).unwrap();
        let g = dropout_backward(&probe, mask.as_deref()).unwrap();
        let n = numeric_grad(&x, H, |v| {
            let (y, _) = dropout_forward(v, 0.3, Mode::Train, &mut rng(seed)).unwrap();
            dot(y.data(), probe.data())
        });
        assert!(max_rel_error(g.data(), &n) < TOL);
    }
}

#[test]
fn softmax_and_cross_entropy_gradients() {
    for seed in 0..SEEDS {
        let mut r = rng(600 + seed);
        let logits = random_tensor(&[3, 10], &mut r);
        let labels: Vec<usize> = (0..3).map(|_| r.random_range(0..10)).collect();
        let (loss, g) = cross_entropy_with_logits(&logits, &labels).unwrap();
        assert!(loss >= 0.0);
        let n = numeric_grad(&logits, H, |v| cross_entropy_with_logits(v, &labels).unwrap().0);
        let e = max_rel_error(g.data(), &n);
        assert!(e < TOL, "seed {seed} ce: {e}");

        let probe = random_tensor(&[3, 10], &mut r);
        let p = softmax_rows(&logits).unwrap();
        for row in p.data().chunks(10) {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-6);
        }
        let gs = softmax_backward(&p, &probe).unwrap();
        let ns = numeric_grad(&logits, H, |v| dot(softmax_rows(v).unwrap().data(), probe.data()));
        assert!(max_rel_error(gs.data(), &ns) < TOL);
    }
}

#[test]
fn sequential_end_to_end_gradient() {
    let plan = [
        LayerSpec::conv(3, 3, 1, 1),
        LayerSpec::batchnorm(),
        LayerSpec::relu(),
        LayerSpec::conv(2, 3, 2, 0),
        LayerSpec::relu(),
        LayerSpec::dense(4),
    ];
    for seed in 0..SEEDS {
        let mut r = rng(700 + seed);
        let mut net = Sequential::<f64>::build(&plan, [1, 7, 7], &mut r).unwrap();
        let x = random_tensor(&[2, 1, 7, 7], &mut r);
        let probe = random_tensor(&[2, 4], &mut r);
        let (_, tape) = net.forward(&x, Mode::Train, &mut r).unwrap();
        let gx = net.backward(tape, probe.clone()).unwrap();
        let mut clone = net.clone();
        let n = numeric_grad(&x, H, |v| {
            let (y, _) = clone.forward(v, Mode::Train, &mut rng(0)).unwrap();
            dot(y.data(), probe.data())
        });
        let e = max_rel_error(gx.data(), &n);
        assert!(e < TOL, "seed {seed}: {e}");
    }
}

#[test]
fn fixed_seed_training_is_bit_reproducible() {
    let plan = [
        LayerSpec::conv(2, 3, 1, 0),
        LayerSpec::batchnorm(),
        LayerSpec::relu(),
        LayerSpec::dropout(0.2),
        LayerSpec::dense(3),
    ];
    let run = || {
        let mut r = rng(42);
        let mut net = Sequential::<f32>::build(&plan, [1, 5, 5], &mut r).unwrap();
        let mut adam = Adam::new(AdamConfig::default());
        let x = random_tensor(&[4, 1, 5, 5], &mut r).cast::<f32>();
        for _ in 0..5 {
            net.zero_grad();
            let (y, tape) = net.forward(&x, Mode::Train, &mut r).unwrap();
            let (_, g) = cross_entropy_with_logits(&y, &[0, 1, 2, 1]).unwrap();
            net.backward(tape, g).unwrap();
            adam.step(&mut net.parameters_mut(), 1e-2).unwrap();
        }
        net.parameters()
            .iter()
            .flat_map(|(_, p)| p.data().iter().map(|v| v.to_bits()))
            .collect::<Vec<_>>()
    };
    assert_eq!(run(), run());
}
