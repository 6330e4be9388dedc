use serde::{Deserialize, Serialize};

use super::{Gradients, Network, NnError, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f32,
    pub beta1: f32,
    pub beta2: f32,
    pub epsilon: f32,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 2e-4,
            beta1: 0.5,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// First/second moment accumulators for every parameter tensor of a network.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    pub step: u64,
    first: Vec<(Tensor, Tensor)>,
    second: Vec<(Tensor, Tensor)>,
}

impl AdamState {
    pub fn new(net: &Network, config: AdamConfig) -> Self {
        let zeros = |net: &Network| {
            net.layers
                .iter()
                .map(|l| (Tensor::zeros(l.weights.shape()), Tensor::zeros(l.bias.shape())))
                .collect::<Vec<_>>()
        };
        AdamState {
            config,
            step: 0,
            first: zeros(net),
            second: zeros(net),
        }
    }
}

/// One bias-corrected Adam update of `net` in place.
pub fn adam_step(net: &mut Network, grads: &Gradients, state: &mut AdamState) -> Result<(), NnError> {
    if grads.layers.len() != net.layers.len() || state.first.len() != net.layers.len() {
        return Err(NnError::ShapeMismatch {
            op: "adam_step",
            expected: format!("{} layers", net.layers.len()),
            found: format!("{} gradient layers, {} state layers", grads.layers.len(), state.first.len()),
        });
    }
    if let Some((layer, part)) = grads.first_non_finite() {
        return Err(NnError::NonFinite {
            what: format!("gradient of layer {} {} at optimizer step {}", layer, part, state.step + 1),
        });
    }
    state.step += 1;
    let AdamConfig {
        lr,
        beta1,
        beta2,
        epsilon,
    } = state.config;
    let t = state.step as i32;
    let c1 = 1.0 - (beta1 as f64).powi(t);
    let c2 = 1.0 - (beta2 as f64).powi(t);
    let step_size = (lr as f64 / c1) as f32;
    let c2_sqrt = c2.sqrt() as f32;

    for (idx, layer) in net.layers.iter_mut().enumerate() {
        let g = &grads.layers[idx];
        g.weights.check_same_shape(&layer.weights, "adam_step")?;
        g.bias.check_same_shape(&layer.bias, "adam_step")?;
        let (m_w, m_b) = &mut state.first[idx];
        let (v_w, v_b) = &mut state.second[idx];
        for (p, g, m, v) in [
            (&mut layer.weights, &g.weights, m_w, v_w),
            (&mut layer.bias, &g.bias, m_b, v_b),
        ] {
            for (((p, &g), m), v) in p
                .data_mut()
                .iter_mut()
                .zip(g.data())
                .zip(m.data_mut())
                .zip(v.data_mut())
            {
                *m = beta1 * *m + (1.0 - beta1) * g;
                *v = beta2 * *v + (1.0 - beta2) * g * g;
                // p -= lr·m̂ / (√v̂ + ε) with m̂ = m/c1, v̂ = v/c2
                *p -= step_size * *m / (v.sqrt() / c2_sqrt + epsilon);
            }
        }
    }
    Ok(())
}
