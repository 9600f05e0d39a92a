//! Network checkpoints as JSON.
//!
//! ```text
//! {
//!   "format": "affinity-net/1",
//!   "layer_count": 4,
//!   "widths": [784, 128, 128, 20, 10],
//!   "activations": ["relu", "relu", "relu", "softmax"],
//!   "representation_index": 2,
//!   "layers": [{ "weights": [...row-major in x out...], "bias": [...] }, ...]
//! }
//! ```
//!
//! Floats are written in shortest round-trip form, so loading a checkpoint
//! reproduces the network bit for bit.

use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use super::layer::{Activation, DenseLayer};
use super::network::Network;
use crate::{Error, Result};

pub const CHECKPOINT_FORMAT: &str = "affinity-net/1";

#[derive(Debug, Serialize, Deserialize)]
struct Checkpoint {
    format: String,
    layer_count: usize,
    widths: Vec<usize>,
    activations: Vec<Activation>,
    representation_index: usize,
    layers: Vec<LayerParams>,
}

#[derive(Debug, Serialize, Deserialize)]
struct LayerParams {
    weights: Vec<f64>,
    bias: Vec<f64>,
}

pub fn to_json(net: &Network) -> Result<String> {
    let mut widths = vec![net.input_width()];
    widths.extend(net.layers().iter().map(DenseLayer::out_width));
    let ckpt = Checkpoint {
        format: CHECKPOINT_FORMAT.to_string(),
        layer_count: net.layers().len(),
        widths,
        activations: net.layers().iter().map(|l| l.activation).collect(),
        representation_index: net.representation_index(),
        layers: net
            .layers()
            .iter()
            .map(|l| LayerParams {
                weights: l.weights.iter().copied().collect(),
                bias: l.bias.to_vec(),
            })
            .collect(),
    };
    Ok(serde_json::to_string(&ckpt)?)
}

pub fn from_json(text: &str) -> Result<Network> {
    let ckpt: Checkpoint = serde_json::from_str(text)?;
    if ckpt.format != CHECKPOINT_FORMAT {
        return Err(Error::Config(format!(
            "unsupported checkpoint format {:?}",
            ckpt.format
        )));
    }
    if ckpt.layers.len() != ckpt.layer_count
        || ckpt.activations.len() != ckpt.layer_count
        || ckpt.widths.len() != ckpt.layer_count + 1
    {
        return Err(Error::Config("checkpoint layer count is inconsistent".into()));
    }
    let layers = ckpt
        .layers
        .into_iter()
        .enumerate()
        .map(|(i, params)| {
            let shape = (ckpt.widths[i], ckpt.widths[i + 1]);
            let weights = Array2::from_shape_vec(shape, params.weights).map_err(|_| {
                Error::Config(format!("checkpoint layer {i}: weight count does not match {shape:?}"))
            })?;
            Ok(DenseLayer::new(
                weights,
                Array1::from(params.bias),
                ckpt.activations[i],
            ))
        })
        .collect::<Result<Vec<_>>>()?;
    Network::new(layers, ckpt.representation_index)
}

pub fn save(net: &Network, path: &Path) -> Result<()> {
    fs::write(path, to_json(net)?).map_err(|e| Error::io(path, e))
}

pub fn load(path: &Path) -> Result<Network> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    from_json(&text)
}
