use super::layer::{linear_backward, LayerGrad};
use super::{Activation, LayerParams, NnError, Tensor};

/// A feed-forward chain of layers.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    pub layers: Vec<LayerParams>,
}

/// Per-layer inputs and pre-activations recorded by a forward pass.
#[derive(Debug, Clone, Default)]
pub struct Trace {
    inputs: Vec<Tensor>,
    pre_activations: Vec<Tensor>,
}

impl Trace {
    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    /// Affine outputs of each layer, before its activation.
    pub fn pre_activations(&self) -> &[Tensor] {
        &self.pre_activations
    }
}

/// One gradient pair per layer, aligned with [`Network::layers`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<LayerGrad>,
}

impl Gradients {
    pub fn zeros_like(net: &Network) -> Self {
        Gradients {
            layers: net.layers.iter().map(LayerGrad::zeros_like).collect(),
        }
    }

    pub fn add_assign(&mut self, other: &Gradients) -> Result<(), NnError> {
        if self.layers.len() != other.layers.len() {
            return Err(NnError::ShapeMismatch {
                op: "gradients",
                expected: format!("{} layers", self.layers.len()),
                found: format!("{} layers", other.layers.len()),
            });
        }
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            a.weights.add_assign(&b.weights)?;
            a.bias.add_assign(&b.bias)?;
        }
        Ok(())
    }

    pub fn scale(&mut self, factor: f32) {
        for g in &mut self.layers {
            g.weights.scale(factor);
            g.bias.scale(factor);
        }
    }

    /// Location of the first non-finite entry as `(layer, "weights" | "bias")`.
    pub fn first_non_finite(&self) -> Option<(usize, &'static str)> {
        self.layers.iter().enumerate().find_map(|(i, g)| {
            if !g.weights.is_finite() {
                Some((i, "weights"))
            } else if !g.bias.is_finite() {
                Some((i, "bias"))
            } else {
                None
            }
        })
    }
}

impl Network {
    pub fn new(layers: Vec<LayerParams>) -> Self {
        Network { layers }
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(LayerParams::param_count).sum()
    }

    /// Shapes after each layer, starting from `input`.
    pub fn shape_chain(&self, input: &[usize]) -> Result<Vec<Vec<usize>>, NnError> {
        let mut shapes = Vec::with_capacity(self.layers.len());
        let mut current = input.to_vec();
        for layer in &self.layers {
            current = layer.output_shape(&current)?;
            shapes.push(current.clone());
        }
        Ok(shapes)
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor, NnError> {
        let mut current = x.clone();
        for layer in &self.layers {
            current = layer.forward(&current)?;
        }
        Ok(current)
    }

    /// Forward pass that records what [`Network::backward`] needs.
    pub fn forward_traced(&self, x: &Tensor) -> Result<(Tensor, Trace), NnError> {
        let mut trace = Trace {
            inputs: Vec::with_capacity(self.layers.len()),
            pre_activations: Vec::with_capacity(self.layers.len()),
        };
        let mut current = x.clone();
        for layer in &self.layers {
            let pre = layer.forward_linear(&current)?;
            let mut out = pre.clone();
            if layer.activation != Activation::Linear {
                for v in out.data_mut() {
                    *v = layer.activation.apply_scalar(*v);
                }
            }
            trace.inputs.push(std::mem::replace(&mut current, out));
            trace.pre_activations.push(pre);
        }
        Ok((current, trace))
    }

    /// Back-propagates `grad_out` (gradient of the loss with respect to the
    /// network output) through the recorded pass. Returns parameter
    /// gradients and the gradient with respect to the network input.
    pub fn backward(&self, trace: &Trace, grad_out: &Tensor) -> Result<(Gradients, Tensor), NnError> {
        if trace.is_empty() {
            return Err(NnError::NoForwardPass);
        }
        if trace.inputs.len() != self.layers.len() {
            return Err(NnError::ShapeMismatch {
                op: "backward",
                expected: format!("trace of {} layers", self.layers.len()),
                found: format!("trace of {} layers", trace.inputs.len()),
            });
        }
        let mut grads = Gradients::zeros_like(self);
        let mut delta = grad_out.clone();
        for (idx, layer) in self.layers.iter().enumerate().rev() {
            let pre = &trace.pre_activations[idx];
            pre.check_same_shape(&delta, "backward")?;
            if layer.activation != Activation::Linear {
                for (d, &p) in delta.data_mut().iter_mut().zip(pre.data()) {
                    *d *= layer.activation.derivative(p);
                }
            }
            delta = linear_backward(layer, &trace.inputs[idx], &delta, &mut grads.layers[idx])?;
        }
        Ok((grads, delta))
    }
}
