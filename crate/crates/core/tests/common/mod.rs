//! Central finite-difference oracle for the network layers.

#![allow(dead_code)]

use lam_msc::nn::{Activation, LayerKind, LayerParams, Network, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const EPS: f32 = 1e-3;
pub const TOLERANCE: f64 = 1e-2;
pub const CASES: usize = 20;
/// Denominator floor for single-coordinate comparisons.
pub const FLOOR: f64 = 1e-3;
/// Step for whole-generator probes. Rounding noise of the f32 forward pass
/// scales as 1/step (about 2e-5 absolute at `EPS`), truncation as step²
/// (below 5e-4 relative here), so the deep network uses a wider step.
pub const GENERATOR_EPS: f32 = 1e-2;
/// Smallest generator gradient checked; the rounding noise at
/// `GENERATOR_EPS` is about 2e-6 absolute.
pub const RESOLUTION: f64 = 1e-3;

/// `‖a − n‖ / max(‖a‖, ‖n‖)` over a whole gradient block.
pub fn block_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let diff: Vec<f64> = analytic.iter().zip(numeric).map(|(a, n)| a - n).collect();
    let scale = norm(analytic).max(norm(numeric));
    if scale == 0.0 {
        0.0
    } else {
        norm(&diff) / scale
    }
}

pub fn coordinate_error(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(FLOOR)
}

/// Linear region of every piecewise-linear unit in a forward pass.
pub fn regions(net: &Network, x: &Tensor) -> Vec<f32> {
    let (_, trace) = net.forward_traced(x).expect("forward");
    net.layers
        .iter()
        .zip(trace.pre_activations())
        .filter(|(l, _)| matches!(l.activation, Activation::Relu | Activation::LeakyRelu { .. }))
        .flat_map(|(l, pre)| pre.data().iter().map(|&v| l.activation.derivative(v)).collect::<Vec<_>>())
        .collect()
}

/// `Σ probe · net(x)` accumulated in f64, or `None` when the evaluation
/// left the linear regions of the base point (a central difference across a
/// kink does not estimate the derivative).
pub fn probe_loss(net: &Network, x: &Tensor, probe: &[f32], base: &[f32]) -> Option<f64> {
    if regions(net, x) != base {
        return None;
    }
    let out = net.forward(x).expect("forward");
    Some(out.data().iter().zip(probe).map(|(&o, &p)| f64::from(o) * f64::from(p)).sum())
}

fn central<F: FnMut(f32) -> f64>(base: f32, mut loss: F) -> f64 {
    (loss(base + EPS) - loss(base - EPS)) / (2.0 * f64::from(EPS))
}

fn central_opt<F: FnMut(f32) -> Option<f64>>(base: f32, eps: f32, mut loss: F) -> Option<f64> {
    Some((loss(base + eps)? - loss(base - eps)?) / (2.0 * f64::from(eps)))
}


/// Worst block error of weights, bias and input gradients for one layer.
pub struct LayerCheck {
    pub weights: f64,
    pub bias: f64,
    pub input: f64,
}

impl LayerCheck {
    pub fn worst(&self) -> f64 {
        self.weights.max(self.bias).max(self.input)
    }
}

pub fn random_activation(rng: &mut ChaCha8Rng) -> Activation {
    match rng.random_range(0..4) {
        0 => Activation::leaky_relu(0.2),
        1 => Activation::Relu,
        2 => Activation::Sigmoid,
        _ => Activation::Linear,
    }
}

/// A small random layer of `kind` and a matching input.
pub fn random_layer(kind: LayerKind, rng: &mut ChaCha8Rng) -> (LayerParams, Tensor) {
    let act = random_activation(rng);
    let cin = rng.random_range(1..4);
    let cout = rng.random_range(1..4);
    match kind {
        LayerKind::Conv => {
            let k = rng.random_range(1..5);
            let s = rng.random_range(1..3);
            let p = rng.random_range(0..k.min(2));
            let side = rng.random_range(k.max(3)..8);
            let layer = LayerParams::conv(cin, cout, k, s, p, act, rng);
            (layer, Tensor::uniform(&[cin, side, side], 1.0, rng))
        }
        LayerKind::Deconv => {
            let k = rng.random_range(2..5);
            let s = rng.random_range(1..3);
            let p = rng.random_range(0..k.min(2));
            let side = rng.random_range(2..6);
            let layer = LayerParams::deconv(cin, cout, k, s, p, act, rng);
            (layer, Tensor::uniform(&[cin, side, side], 1.0, rng))
        }
        LayerKind::Dense => {
            let n = rng.random_range(1..16);
            let m = rng.random_range(1..8);
            let layer = LayerParams::dense(n, m, act, rng);
            (layer, Tensor::uniform(&[n], 1.0, rng))
        }
    }
}

/// Compares back-propagated gradients of `Σ probe · net(x)` with central
/// differences over every weight, bias and input entry. `None` when some
/// difference straddles a kink.
pub fn check_network(net: &Network, x: &Tensor, rng: &mut ChaCha8Rng) -> Option<LayerCheck> {
    let base = regions(net, x);
    let (out, trace) = net.forward_traced(x).expect("forward");
    let probe: Vec<f32> = (0..out.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
    let grad_out = Tensor::new(out.shape().to_vec(), probe.clone()).unwrap();
    let (grads, grad_x) = net.backward(&trace, &grad_out).expect("backward");

    let mut weights = (Vec::new(), Vec::new());
    let mut bias = (Vec::new(), Vec::new());
    for (li, layer_grad) in grads.layers.iter().enumerate() {
        for (which, analytic, acc) in [
            (0, layer_grad.weights.data(), &mut weights),
            (1, layer_grad.bias.data(), &mut bias),
        ] {
            for (i, &a) in analytic.iter().enumerate() {
                let mut probe_net = net.clone();
                let value = if which == 0 {
                    probe_net.layers[li].weights.data()[i]
                } else {
                    probe_net.layers[li].bias.data()[i]
                };
                let n = central_opt(value, EPS, |v| {
                    let target = if which == 0 {
                        &mut probe_net.layers[li].weights
                    } else {
                        &mut probe_net.layers[li].bias
                    };
                    target.data_mut()[i] = v;
                    probe_loss(&probe_net, x, &probe, &base)
                })?;
                acc.0.push(f64::from(a));
                acc.1.push(n);
            }
        }
    }
    let mut input = (Vec::new(), Vec::new());
    let mut xp = x.clone();
    for (i, &a) in grad_x.data().iter().enumerate() {
        let n = central_opt(x.data()[i], EPS, |v| {
            xp.data_mut()[i] = v;
            probe_loss(net, &xp, &probe, &base)
        })?;
        xp.data_mut()[i] = x.data()[i];
        input.0.push(f64::from(a));
        input.1.push(n);
    }
    Some(LayerCheck {
        weights: block_error(&weights.0, &weights.1),
        bias: block_error(&bias.0, &bias.1),
        input: block_error(&input.0, &input.1),
    })
}

/// Worst error over `CASES` random single-layer networks of `kind`; cases
/// whose differences straddle a kink are redrawn.
pub fn layer_suite(kind: LayerKind, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    let mut accepted = 0;
    while accepted < CASES {
        let (layer, x) = random_layer(kind, &mut rng);
        if let Some(check) = check_network(&Network::new(vec![layer]), &x, &mut rng) {
            worst = worst.max(check.worst());
            accepted += 1;
        }
    }
    worst
}

/// Worst single-coordinate error over ten random generator weights whose
/// gradient is above the f32 difference resolution and whose differences
/// stay within one linear region.
pub fn generator_check(seed: u64) -> f64 {
    let net = lam_msc::cge::build_generator(8, 8, seed).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xA5A5);
    let x = Tensor::uniform(&[4, 8, 8], 1.0, &mut rng);
    let base = regions(&net, &x);
    let (out, trace) = net.forward_traced(&x).unwrap();
    let probe: Vec<f32> = (0..out.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
    let grad_out = Tensor::new(out.shape().to_vec(), probe.clone()).unwrap();
    let (grads, _) = net.backward(&trace, &grad_out).unwrap();
    let mut worst = 0.0f64;
    let mut accepted = 0;
    while accepted < 10 {
        let li = rng.random_range(0..net.layers.len());
        let i = rng.random_range(0..net.layers[li].weights.len());
        let analytic = f64::from(grads.layers[li].weights.data()[i]);
        if analytic.abs() < RESOLUTION {
            continue;
        }
        let mut probe_net = net.clone();
        let numeric = central_opt(net.layers[li].weights.data()[i], GENERATOR_EPS, |v| {
            probe_net.layers[li].weights.data_mut()[i] = v;
            probe_loss(&probe_net, &x, &probe, &base)
        });
        if let Some(numeric) = numeric {
            worst = worst.max(coordinate_error(analytic, numeric));
            accepted += 1;
        }
    }
    worst
}

/// Worst error over `CASES` random inputs of one element-wise activation.
pub fn activation_suite(act: Activation, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..CASES {
        let n = rng.random_range(1..32);
        // stay clear of the kink at zero, where the derivative is one-sided
        let x: Vec<f32> = (0..n)
            .map(|_| {
                let v: f32 = rng.random_range(0.01..3.0);
                if rng.random_bool(0.5) {
                    v
                } else {
                    -v
                }
            })
            .collect();
        let (analytic, numeric): (Vec<f64>, Vec<f64>) = x
            .iter()
            .map(|&v| {
                let n = central(v, |u| f64::from(act.apply_scalar(u)));
                (f64::from(act.derivative(v)), n)
            })
            .unzip();
        worst = worst.max(block_error(&analytic, &numeric));
    }
    worst
}

/// Worst error of the L1 subgradient against central differences.
pub fn l1_suite(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..CASES {
        let n = rng.random_range(1..32);
        let a = Tensor::uniform(&[n], 1.0, &mut rng);
        let b = Tensor::uniform(&[n], 1.0, &mut rng);
        if a.data().iter().zip(b.data()).any(|(x, y)| (x - y).abs() < 2.0 * EPS) {
            continue;
        }
        let g = lam_msc::nn::l1_grad(&a, &b, 1.0).unwrap();
        let mut ap = a.clone();
        let (analytic, numeric): (Vec<f64>, Vec<f64>) = (0..n)
            .map(|i| {
                let num = central(a.data()[i], |v| {
                    ap.data_mut()[i] = v;
                    lam_msc::nn::l1_loss(&ap, &b).unwrap()
                });
                ap.data_mut()[i] = a.data()[i];
                (f64::from(g.data()[i]), num)
            })
            .unzip();
        worst = worst.max(block_error(&analytic, &numeric));
    }
    worst
}
