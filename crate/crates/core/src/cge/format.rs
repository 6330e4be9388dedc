//! `CGE1` model files.
//!
//! Layout: `b"CGE1"`, one version byte, a little-endian `u32` header length,
//! a JSON header describing geometry, pilots, hyper-parameters, history and
//! every layer, then each layer's weights followed by its bias as
//! little-endian `f32`, generator layers first.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{CganHyper, CganModel, CgeError, PilotLayout, TrainingHistory};
use crate::nn::{Activation, LayerKind, LayerParams, Network, Tensor};

pub const MODEL_MAGIC: &[u8; 4] = b"CGE1";
pub const MODEL_VERSION: u8 = 1;

#[derive(Serialize, Deserialize)]
struct LayerHeader {
    kind: LayerKind,
    weight_shape: Vec<usize>,
    bias_len: usize,
    stride: usize,
    padding: usize,
    activation: Activation,
}

#[derive(Serialize, Deserialize)]
struct Header {
    rows: usize,
    cols: usize,
    pilots: PilotLayout,
    hyper: CganHyper,
    history: TrainingHistory,
    generator: Vec<LayerHeader>,
    discriminator: Vec<LayerHeader>,
}

fn describe(net: &Network) -> Vec<LayerHeader> {
    net.layers
        .iter()
        .map(|l| LayerHeader {
            kind: l.kind,
            weight_shape: l.weights.shape().to_vec(),
            bias_len: l.bias.len(),
            stride: l.stride,
            padding: l.padding,
            activation: l.activation,
        })
        .collect()
}

pub fn model_to_bytes(model: &CganModel) -> Result<Vec<u8>, CgeError> {
    let header = Header {
        rows: model.rows,
        cols: model.cols,
        pilots: model.pilots,
        hyper: model.hyper,
        history: model.history.clone(),
        generator: describe(&model.generator),
        discriminator: describe(&model.discriminator),
    };
    let json = serde_json::to_vec(&header).map_err(|e| CgeError::Format(e.to_string()))?;
    let params = model.generator.param_count() + model.discriminator.param_count();
    let mut out = Vec::with_capacity(9 + json.len() + 4 * params);
    out.extend_from_slice(MODEL_MAGIC);
    out.push(MODEL_VERSION);
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    for layer in model.generator.layers.iter().chain(&model.discriminator.layers) {
        for v in layer.weights.data().iter().chain(layer.bias.data()) {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

struct Reader<'a> {
    bytes: &'a [u8],
}

impl Reader<'_> {
    fn floats(&mut self, n: usize) -> Result<Vec<f32>, CgeError> {
        if self.bytes.len() < 4 * n {
            return Err(CgeError::Format("weight section truncated".into()));
        }
        let (head, rest) = self.bytes.split_at(4 * n);
        self.bytes = rest;
        Ok(head
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }

    fn network(&mut self, layers: &[LayerHeader]) -> Result<Network, CgeError> {
        let mut out = Vec::with_capacity(layers.len());
        for l in layers {
            let n: usize = l.weight_shape.iter().product();
            let weights = Tensor::new(l.weight_shape.clone(), self.floats(n)?)?;
            let bias = Tensor::new(vec![l.bias_len], self.floats(l.bias_len)?)?;
            out.push(LayerParams {
                kind: l.kind,
                weights,
                bias,
                stride: l.stride,
                padding: l.padding,
                activation: l.activation,
            });
        }
        Ok(Network::new(out))
    }
}

pub fn model_from_bytes(bytes: &[u8]) -> Result<CganModel, CgeError> {
    if bytes.len() < 9 || &bytes[..4] != MODEL_MAGIC {
        return Err(CgeError::Format("missing CGE1 magic".into()));
    }
    if bytes[4] != MODEL_VERSION {
        return Err(CgeError::Version {
            found: bytes[4],
            expected: MODEL_VERSION,
        });
    }
    let header_len = u32::from_le_bytes(bytes[5..9].try_into().unwrap()) as usize;
    let body = &bytes[9..];
    if body.len() < header_len {
        return Err(CgeError::Format("header truncated".into()));
    }
    let header: Header = serde_json::from_slice(&body[..header_len]).map_err(|e| CgeError::Format(e.to_string()))?;
    let mut reader = Reader {
        bytes: &body[header_len..],
    };
    let generator = reader.network(&header.generator)?;
    let discriminator = reader.network(&header.discriminator)?;
    if !reader.bytes.is_empty() {
        return Err(CgeError::Format(format!("{} trailing bytes", reader.bytes.len())));
    }
    generator.shape_chain(&[super::CONDITION_CHANNELS, header.rows, header.cols])?;
    Ok(CganModel {
        rows: header.rows,
        cols: header.cols,
        pilots: header.pilots,
        hyper: header.hyper,
        generator,
        discriminator,
        history: header.history,
    })
}

pub fn save_model(model: &CganModel, path: &Path) -> Result<(), CgeError> {
    std::fs::write(path, model_to_bytes(model)?).map_err(|source| CgeError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn load_model(path: &Path) -> Result<CganModel, CgeError> {
    let bytes = std::fs::read(path).map_err(|source| CgeError::Io {
        path: path.display().to_string(),
        source,
    })?;
    model_from_bytes(&bytes)
}
