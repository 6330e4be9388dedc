//! Small dense/convolutional layer engine with hand-written backward passes.
//!
//! Networks here are fixed feed-forward chains, so gradients are recorded by
//! caching each layer's input and pre-activation during
//! [`Network::forward_traced`] rather than through a general tape.

mod adam;
mod layer;
mod loss;
mod network;
mod tensor;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use layer::{activation, conv2d, deconv2d, dense, sigmoid, Activation, LayerGrad, LayerKind, LayerParams};
pub use loss::{bce_loss, l1_grad, l1_loss, BCE_CLAMP};
pub use network::{Gradients, Network, Trace};
pub use tensor::Tensor;

#[derive(Debug, thiserror::Error)]
pub enum NnError {
    #[error("{op}: shape mismatch, expected {expected}, found {found}")]
    ShapeMismatch {
        op: &'static str,
        expected: String,
        found: String,
    },
    #[error("{op}: layer kind {found:?} where {expected:?} was required")]
    KindMismatch {
        op: &'static str,
        expected: LayerKind,
        found: LayerKind,
    },
    #[error("backward called without a recorded forward pass")]
    NoForwardPass,
    #[error("non-finite value in {what}")]
    NonFinite { what: String },
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    fn random(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
        Tensor::uniform(shape, 1.0, rng)
    }

    fn fixed_conv(weights: Tensor, stride: usize, padding: usize) -> LayerParams {
        let oc = weights.shape()[0];
        LayerParams {
            kind: LayerKind::Conv,
            weights,
            bias: Tensor::zeros(&[oc]),
            stride,
            padding,
            activation: Activation::Linear,
        }
    }

    #[test]
    fn conv_of_ones_sums_window() {
        let x = Tensor::full(&[1, 3, 3], 1.0);
        let layer = fixed_conv(Tensor::full(&[1, 1, 2, 2], 1.0), 1, 0);
        let y = conv2d(&layer, &x).unwrap();
        assert_eq!(y.shape(), &[1, 2, 2]);
        assert!(y.data().iter().all(|&v| v == 4.0));
    }

    #[test]
    fn selector_kernel_crops() {
        let mut r = rng(1);
        let x = random(&[1, 3, 3], &mut r);
        let w = Tensor::new(vec![1, 1, 2, 2], vec![1.0, 0.0, 0.0, 0.0]).unwrap();
        let y = conv2d(&fixed_conv(w, 1, 0), &x).unwrap();
        let d = x.data();
        assert_eq!(y.data(), &[d[0], d[1], d[3], d[4]]);
    }

    #[test]
    fn conv_output_extents() {
        let mut r = rng(2);
        let layer = LayerParams::conv(4, 32, 4, 2, 1, Activation::Linear, &mut r);
        let y = conv2d(&layer, &random(&[4, 32, 32], &mut r)).unwrap();
        assert_eq!(y.shape(), &[32, 16, 16]);
    }

    #[test]
    fn conv_rejects_channel_mismatch() {
        let mut r = rng(3);
        let layer = LayerParams::conv(4, 8, 3, 1, 1, Activation::Linear, &mut r);
        let err = conv2d(&layer, &random(&[3, 8, 8], &mut r)).unwrap_err();
        assert!(err.to_string().contains("input channels"), "{err}");
    }

    #[test]
    fn conv_rejects_wrong_kind() {
        let mut r = rng(3);
        let layer = LayerParams::deconv(4, 8, 3, 1, 1, Activation::Linear, &mut r);
        assert!(matches!(
            conv2d(&layer, &random(&[4, 8, 8], &mut r)),
            Err(NnError::KindMismatch { .. })
        ));
    }

    #[test]
    fn deconv_broadcasts_single_value() {
        let x = Tensor::full(&[1, 1, 1], 1.0);
        let layer = LayerParams {
            kind: LayerKind::Deconv,
            weights: Tensor::full(&[1, 1, 2, 2], 1.0),
            bias: Tensor::zeros(&[1]),
            stride: 2,
            padding: 0,
            activation: Activation::Linear,
        };
        let y = deconv2d(&layer, &x).unwrap();
        assert_eq!(y.shape(), &[1, 2, 2]);
        assert!(y.data().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn deconv_output_extents() {
        let mut r = rng(4);
        let layer = LayerParams::deconv(128, 64, 4, 2, 1, Activation::Linear, &mut r);
        let y = deconv2d(&layer, &random(&[128, 4, 4], &mut r)).unwrap();
        assert_eq!(y.shape(), &[64, 8, 8]);
    }

    #[test]
    fn deconv_is_adjoint_of_conv() {
        let mut r = rng(5);
        for &(k, s, p) in &[(3, 1, 1), (4, 2, 1), (3, 2, 0), (4, 1, 0)] {
            let conv = fixed_conv(random(&[3, 2, k, k], &mut r), s, p);
            let mut deconv = conv.clone();
            deconv.kind = LayerKind::Deconv;
            let x = random(&[2, 4, 4], &mut r);
            let cx = conv2d(&conv, &x).unwrap();
            let y = random(cx.shape(), &mut r);
            let lhs = cx.dot(&y).unwrap();
            let dy = deconv2d(&deconv, &y).unwrap();
            // the deconv of a conv-sized map can be smaller than x when the
            // conv discarded trailing rows; compare over the common window
            let mut rhs = 0.0f64;
            let (_, dh, dw) = dy.dims3().unwrap();
            for c in 0..2 {
                for i in 0..dh.min(4) {
                    for j in 0..dw.min(4) {
                        rhs += x.data()[(c * 4 + i) * 4 + j] as f64 * dy.data()[(c * dh + i) * dw + j] as f64;
                    }
                }
            }
            let rel = (lhs - rhs).abs() / lhs.abs().max(rhs.abs()).max(1e-12);
            assert!(rel < 1e-5, "k{k} s{s} p{p}: {lhs} vs {rhs}");
        }
    }

    #[test]
    fn size_formulas_hold_on_lattice() {
        let mut r = rng(6);
        for k in [3usize, 4] {
            for s in [1usize, 2] {
                for p in [0usize, 1] {
                    for n in [6usize, 7, 8] {
                        let conv = LayerParams::conv(2, 3, k, s, p, Activation::Linear, &mut r);
                        let y = conv2d(&conv, &random(&[2, n, n + 1], &mut r)).unwrap();
                        let f = |m: usize| (m + 2 * p - k) / s + 1;
                        assert_eq!(y.shape(), &[3, f(n), f(n + 1)]);

                        let de = LayerParams::deconv(2, 3, k, s, p, Activation::Linear, &mut r);
                        let y = deconv2d(&de, &random(&[2, n, n + 1], &mut r)).unwrap();
                        let g = |m: usize| (m - 1) * s + k - 2 * p;
                        assert_eq!(y.shape(), &[3, g(n), g(n + 1)]);
                    }
                }
            }
        }
    }

    #[test]
    fn activation_examples() {
        let x = Tensor::new(vec![3], vec![-1.0, 3.0, 0.0]).unwrap();
        let y = activation(Activation::leaky_relu(0.2), &x);
        assert_eq!(y.data(), &[-0.2, 3.0, 0.0]);
        assert_eq!(activation(Activation::Sigmoid, &x).data()[2], 0.5);
        assert_eq!(activation(Activation::Relu, &x).data(), &[0.0, 3.0, 0.0]);
    }

    #[test]
    fn dense_identity_and_constant() {
        let x = Tensor::new(vec![3], vec![1.5, -2.0, 0.25]).unwrap();
        let mut eye = vec![0.0; 9];
        for i in 0..3 {
            eye[i * 4] = 1.0;
        }
        let mut layer = LayerParams {
            kind: LayerKind::Dense,
            weights: Tensor::new(vec![3, 3], eye).unwrap(),
            bias: Tensor::zeros(&[3]),
            stride: 1,
            padding: 0,
            activation: Activation::Linear,
        };
        assert_eq!(dense(&layer, &x).unwrap(), x);
        layer.weights = Tensor::zeros(&[3, 3]);
        layer.bias = Tensor::full(&[3], 0.7);
        assert!(dense(&layer, &x).unwrap().data().iter().all(|&v| v == 0.7));
    }

    #[test]
    fn dense_matches_dot_product() {
        let mut r = rng(7);
        let layer = LayerParams::dense(8, 1, Activation::Linear, &mut r);
        let x = random(&[8], &mut r);
        let y = dense(&layer, &x).unwrap().data()[0] as f64;
        let mut oracle = layer.bias.data()[0] as f64;
        for i in 0..8 {
            oracle += layer.weights.data()[i] as f64 * x.data()[i] as f64;
        }
        assert!((y - oracle).abs() / oracle.abs().max(1e-12) < 1e-6);
    }

    #[test]
    fn dense_rejects_wrong_length() {
        let mut r = rng(8);
        let layer = LayerParams::dense(8, 2, Activation::Linear, &mut r);
        assert!(dense(&layer, &random(&[7], &mut r)).is_err());
    }

    #[test]
    fn backward_without_forward_is_rejected() {
        let mut r = rng(9);
        let net = Network::new(vec![LayerParams::dense(4, 2, Activation::Relu, &mut r)]);
        let err = net.backward(&Trace::default(), &Tensor::zeros(&[2])).unwrap_err();
        assert!(matches!(err, NnError::NoForwardPass));
    }

    #[test]
    fn constant_loss_gives_zero_gradients() {
        let mut r = rng(10);
        let net = Network::new(vec![
            LayerParams::conv(2, 4, 3, 1, 1, Activation::leaky_relu(0.2), &mut r),
            LayerParams::deconv(4, 2, 4, 2, 1, Activation::Linear, &mut r),
        ]);
        let x = random(&[2, 6, 6], &mut r);
        let (y, trace) = net.forward_traced(&x).unwrap();
        let (grads, dx) = net.backward(&trace, &Tensor::zeros(y.shape())).unwrap();
        for g in &grads.layers {
            assert!(g.weights.data().iter().all(|&v| v == 0.0));
            assert!(g.bias.data().iter().all(|&v| v == 0.0));
        }
        assert!(dx.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn dense_squared_error_gradient_is_closed_form() {
        let mut r = rng(11);
        let layer = LayerParams::dense(5, 3, Activation::Linear, &mut r);
        let net = Network::new(vec![layer.clone()]);
        let x = random(&[5], &mut r);
        let target = random(&[3], &mut r);
        let (y, trace) = net.forward_traced(&x).unwrap();
        let residual: Vec<f32> = y.data().iter().zip(target.data()).map(|(a, b)| 2.0 * (a - b)).collect();
        let (grads, _) = net.backward(&trace, &Tensor::new(vec![3], residual.clone()).unwrap()).unwrap();
        for o in 0..3 {
            for i in 0..5 {
                let expected = residual[o] * x.data()[i];
                let got = grads.layers[0].weights.data()[o * 5 + i];
                assert!((expected - got).abs() < 1e-6);
            }
            assert!((grads.layers[0].bias.data()[o] - residual[o]).abs() < 1e-6);
        }
    }

    #[test]
    fn forward_is_bit_reproducible() {
        let mut r = rng(12);
        let net = Network::new(vec![LayerParams::conv(3, 5, 4, 2, 1, Activation::leaky_relu(0.2), &mut r)]);
        let x = random(&[3, 8, 8], &mut r);
        let a = net.forward(&x).unwrap();
        let b = net.forward(&x).unwrap();
        assert_eq!(a.data(), b.data());
        let (c, _) = net.forward_traced(&x).unwrap();
        assert_eq!(a.data(), c.data());
    }

    #[test]
    fn adam_zero_gradient_leaves_parameters() {
        let mut r = rng(13);
        let mut net = Network::new(vec![LayerParams::dense(4, 3, Activation::Linear, &mut r)]);
        let before = net.clone();
        let mut state = AdamState::new(&net, AdamConfig::default());
        let zero = Gradients::zeros_like(&net);
        adam_step(&mut net, &zero, &mut state).unwrap();
        assert_eq!(net, before);
        assert_eq!(state.step, 1);
    }

    #[test]
    fn adam_first_step_moves_by_lr() {
        let mut r = rng(14);
        let mut net = Network::new(vec![LayerParams::dense(4, 3, Activation::Linear, &mut r)]);
        let before = net.clone();
        let mut grads = Gradients::zeros_like(&net);
        for v in grads.layers[0].weights.data_mut() {
            *v = r.random_range(0.5..2.0) * if r.random_bool(0.5) { 1.0 } else { -1.0 };
        }
        let cfg = AdamConfig::default();
        let mut state = AdamState::new(&net, cfg);
        adam_step(&mut net, &grads, &mut state).unwrap();
        for ((a, b), g) in net.layers[0]
            .weights
            .data()
            .iter()
            .zip(before.layers[0].weights.data())
            .zip(grads.layers[0].weights.data())
        {
            let delta = b - a;
            assert!((delta.abs() - cfg.lr).abs() < 1e-6 * cfg.lr.max(1.0));
            assert_eq!(delta.signum(), g.signum());
        }
    }

    #[test]
    fn adam_is_deterministic() {
        let run = || {
            let mut r = rng(15);
            let mut net = Network::new(vec![LayerParams::dense(6, 2, Activation::Relu, &mut r)]);
            let mut state = AdamState::new(&net, AdamConfig::default());
            let mut grads = Gradients::zeros_like(&net);
            for v in grads.layers[0].weights.data_mut() {
                *v = r.random_range(-1.0..1.0);
            }
            adam_step(&mut net, &grads, &mut state).unwrap();
            adam_step(&mut net, &grads, &mut state).unwrap();
            net
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn adam_rejects_non_finite_gradient() {
        let mut r = rng(16);
        let mut net = Network::new(vec![LayerParams::dense(2, 2, Activation::Linear, &mut r)]);
        let mut state = AdamState::new(&net, AdamConfig::default());
        let mut grads = Gradients::zeros_like(&net);
        grads.layers[0].bias.data_mut()[1] = f32::NAN;
        let err = adam_step(&mut net, &grads, &mut state).unwrap_err();
        assert!(err.to_string().contains("layer 0 bias"), "{err}");
        assert_eq!(state.step, 0);
    }
}
