use ndarray::{Array1, Array2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::layer::{Activation, DenseLayer};
use crate::{Error, Result, Tensor2};

/// Layer widths and activations for [`init_network`].
///
/// `widths[0]` is the input width; layer `i` maps `widths[i] -> widths[i + 1]`
/// with `activations[i]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchitectureSpec {
    pub widths: Vec<usize>,
    pub activations: Vec<Activation>,
    pub representation_index: usize,
}

impl ArchitectureSpec {
    /// Relu hidden stack with a softmax head; the last hidden layer is the
    /// representation.
    pub fn relu_classifier(input: usize, hidden: &[usize], classes: usize) -> Self {
        let mut widths = vec![input];
        widths.extend_from_slice(hidden);
        widths.push(classes);
        let mut activations = vec![Activation::Relu; hidden.len()];
        activations.push(Activation::Softmax);
        Self {
            widths,
            activations,
            representation_index: hidden.len().saturating_sub(1),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    layers: Vec<DenseLayer>,
    representation_index: usize,
}

/// Every intermediate of one forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTrace {
    pub input: Tensor2,
    pub pre_activations: Vec<Tensor2>,
    pub activations: Vec<Tensor2>,
    representation_index: usize,
}

impl ForwardTrace {
    pub fn output(&self) -> &Tensor2 {
        self.activations.last().expect("trace has at least one layer")
    }

    /// Pre-activation of the output layer.
    pub fn logits(&self) -> &Tensor2 {
        self.pre_activations.last().expect("trace has at least one layer")
    }

    pub fn representation(&self) -> &Tensor2 {
        &self.activations[self.representation_index]
    }
}

/// Per-layer parameter gradients, shaped like the owning network.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientSet {
    pub weights: Vec<Array2<f64>>,
    pub biases: Vec<Array1<f64>>,
}

impl GradientSet {
    pub fn zeros_like(net: &Network) -> Self {
        Self::zeros_for(&net.layers)
    }

    pub fn zeros_for(layers: &[DenseLayer]) -> Self {
        Self {
            weights: layers
                .iter()
                .map(|l| Array2::zeros(l.weights.raw_dim()))
                .collect(),
            biases: layers.iter().map(|l| Array1::zeros(l.bias.raw_dim())).collect(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.weights.iter().all(|w| w.iter().all(|v| v.is_finite()))
            && self.biases.iter().all(|b| b.iter().all(|v| v.is_finite()))
    }

    pub fn is_zero(&self) -> bool {
        self.weights.iter().all(|w| w.iter().all(|&v| v == 0.0))
            && self.biases.iter().all(|b| b.iter().all(|&v| v == 0.0))
    }

    pub fn add_assign(&mut self, other: &GradientSet) {
        for (a, b) in self.weights.iter_mut().zip(&other.weights) {
            *a += b;
        }
        for (a, b) in self.biases.iter_mut().zip(&other.biases) {
            *a += b;
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for w in &mut self.weights {
            w.mapv_inplace(|v| v * factor);
        }
        for b in &mut self.biases {
            b.mapv_inplace(|v| v * factor);
        }
    }

    pub(crate) fn congruent_with(&self, net: &Network) -> Result<()> {
        if self.weights.len() != net.layers.len() || self.biases.len() != net.layers.len() {
            return Err(Error::Config(format!(
                "gradient set has {} layers, network has {}",
                self.weights.len(),
                net.layers.len()
            )));
        }
        for (i, layer) in net.layers.iter().enumerate() {
            if self.weights[i].dim() != layer.weights.dim()
                || self.biases[i].len() != layer.bias.len()
            {
                return Err(Error::Shape {
                    layer: i,
                    expected: layer.weights.dim(),
                    actual: self.weights[i].dim(),
                });
            }
        }
        Ok(())
    }
}

impl Network {
    pub fn new(layers: Vec<DenseLayer>, representation_index: usize) -> Result<Self> {
        if layers.len() < 2 {
            return Err(Error::Config(
                "a network needs a representation layer and an output layer".into(),
            ));
        }
        if representation_index >= layers.len() - 1 {
            return Err(Error::Config(format!(
                "representation index {representation_index} must precede the output layer {}",
                layers.len() - 1
            )));
        }
        for (i, layer) in layers.iter().enumerate() {
            if layer.bias.len() != layer.out_width() {
                return Err(Error::Shape {
                    layer: i,
                    expected: (1, layer.out_width()),
                    actual: (1, layer.bias.len()),
                });
            }
            if layer.in_width() == 0 || layer.out_width() == 0 {
                return Err(Error::Config(format!("layer {i} has zero width")));
            }
            if layer.activation == Activation::Softmax && i + 1 != layers.len() {
                return Err(Error::Config(format!(
                    "layer {i}: softmax is only allowed on the output layer"
                )));
            }
            if i > 0 && layers[i - 1].out_width() != layer.in_width() {
                return Err(Error::Shape {
                    layer: i,
                    expected: (layers[i - 1].out_width(), layer.out_width()),
                    actual: layer.weights.dim(),
                });
            }
        }
        Ok(Self {
            layers,
            representation_index,
        })
    }

    pub fn layers(&self) -> &[DenseLayer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [DenseLayer] {
        &mut self.layers
    }

    pub fn representation_index(&self) -> usize {
        self.representation_index
    }

    pub fn input_width(&self) -> usize {
        self.layers[0].in_width()
    }

    pub fn output_width(&self) -> usize {
        self.layers[self.layers.len() - 1].out_width()
    }

    pub fn representation_width(&self) -> usize {
        self.layers[self.representation_index].out_width()
    }

    pub fn parameter_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.len() + l.bias.len())
            .sum()
    }

    pub fn forward(&self, batch: &Tensor2) -> Result<ForwardTrace> {
        if batch.ncols() != self.input_width() {
            return Err(Error::Shape {
                layer: 0,
                expected: (batch.nrows(), self.input_width()),
                actual: batch.dim(),
            });
        }
        let mut pre_activations = Vec::with_capacity(self.layers.len());
        let mut activations: Vec<Tensor2> = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let input = activations.last().unwrap_or(batch);
            let z = layer.pre_activation(input);
            let a = layer.activation.apply(&z);
            pre_activations.push(z);
            activations.push(a);
        }
        Ok(ForwardTrace {
            input: batch.clone(),
            pre_activations,
            activations,
            representation_index: self.representation_index,
        })
    }

    /// Output of the representation layer only; skips the layers above it.
    pub fn represent(&self, batch: &Tensor2) -> Result<Tensor2> {
        if batch.ncols() != self.input_width() {
            return Err(Error::Shape {
                layer: 0,
                expected: (batch.nrows(), self.input_width()),
                actual: batch.dim(),
            });
        }
        let mut current = self.layers[0].forward(batch);
        for layer in &self.layers[1..=self.representation_index] {
            current = layer.forward(&current);
        }
        Ok(current)
    }

    pub fn predict(&self, batch: &Tensor2) -> Result<Tensor2> {
        let mut trace = self.forward(batch)?;
        Ok(trace.activations.pop().expect("network has layers"))
    }

    /// Gradients of a scalar loss given its gradient at the output.
    ///
    /// For a softmax output layer `loss_grad` is taken w.r.t. the logits
    /// (fused softmax cross-entropy, see [`super::loss`]); otherwise it is
    /// w.r.t. the output activation.
    pub fn backward(&self, trace: &ForwardTrace, loss_grad: &Tensor2) -> Result<GradientSet> {
        self.backward_with(trace, Some(loss_grad), None)
    }

    /// Gradients of a scalar whose gradient w.r.t. the representation layer
    /// output is `rep_grad`. Layers above the representation get zeros.
    pub fn backward_from_representation(
        &self,
        trace: &ForwardTrace,
        rep_grad: &Tensor2,
    ) -> Result<GradientSet> {
        self.backward_with(trace, None, Some(rep_grad))
    }

    /// One reverse pass accumulating an output gradient and/or a gradient
    /// injected at the representation layer.
    pub fn backward_with(
        &self,
        trace: &ForwardTrace,
        output_grad: Option<&Tensor2>,
        rep_grad: Option<&Tensor2>,
    ) -> Result<GradientSet> {
        let n_layers = self.layers.len();
        if trace.activations.len() != n_layers || trace.pre_activations.len() != n_layers {
            return Err(Error::Config(format!(
                "trace has {} layers, network has {n_layers}",
                trace.activations.len()
            )));
        }
        for (i, (a, layer)) in trace.activations.iter().zip(&self.layers).enumerate() {
            if a.ncols() != layer.out_width() {
                return Err(Error::Shape {
                    layer: i,
                    expected: (a.nrows(), layer.out_width()),
                    actual: a.dim(),
                });
            }
        }
        let output = n_layers - 1;
        if let Some(g) = output_grad {
            check_shape(output, &trace.activations[output], g)?;
        }
        if let Some(g) = rep_grad {
            check_shape(self.representation_index, &trace.activations[self.representation_index], g)?;
        }

        let mut grads = GradientSet::zeros_like(self);
        // Gradient w.r.t. the activation of the layer currently visited.
        let mut upstream: Option<Tensor2> = output_grad.cloned();
        for l in (0..n_layers).rev() {
            if l == self.representation_index {
                if let Some(g) = rep_grad {
                    upstream = Some(match upstream {
                        Some(u) => u + g,
                        None => g.clone(),
                    });
                }
            }
            let Some(mut delta) = upstream.take() else {
                continue;
            };
            let layer = &self.layers[l];
            layer
                .activation
                .chain(&mut delta, &trace.pre_activations[l], &trace.activations[l]);
            let layer_input = if l == 0 {
                &trace.input
            } else {
                &trace.activations[l - 1]
            };
            grads.weights[l] = layer_input.t().dot(&delta);
            grads.biases[l] = delta.sum_axis(Axis(0));
            if l > 0 {
                upstream = Some(delta.dot(&layer.weights.t()));
            }
        }
        Ok(grads)
    }
}

fn check_shape(layer: usize, activation: &Tensor2, grad: &Tensor2) -> Result<()> {
    if activation.dim() != grad.dim() {
        return Err(Error::Shape {
            layer,
            expected: activation.dim(),
            actual: grad.dim(),
        });
    }
    Ok(())
}

/// Builds a network with He-scaled normal weights for relu layers,
/// Glorot-scaled normal weights otherwise, and zero biases.
pub fn init_network(spec: &ArchitectureSpec, seed: u64) -> Result<Network> {
    if spec.widths.len() < 3 {
        return Err(Error::Config(
            "need an input width and at least two layers".into(),
        ));
    }
    if spec.activations.len() + 1 != spec.widths.len() {
        return Err(Error::Config(format!(
            "{} widths need {} activations, got {}",
            spec.widths.len(),
            spec.widths.len() - 1,
            spec.activations.len()
        )));
    }
    if let Some(i) = spec.widths.iter().position(|&w| w == 0) {
        return Err(Error::Config(format!("width {i} is zero")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let layers = spec
        .widths
        .windows(2)
        .zip(&spec.activations)
        .map(|(pair, &activation)| {
            let (fan_in, fan_out) = (pair[0], pair[1]);
            let std = match activation {
                Activation::Relu => (2.0 / fan_in as f64).sqrt(),
                _ => (2.0 / (fan_in + fan_out) as f64).sqrt(),
            };
            let normal = Normal::new(0.0, std).expect("positive std");
            let weights = Array2::from_shape_fn((fan_in, fan_out), |_| normal.sample(&mut rng));
            DenseLayer::new(weights, Array1::zeros(fan_out), activation)
        })
        .collect();
    Network::new(layers, spec.representation_index)
}
