use ndarray::{Array1, Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::Tensor2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Sigmoid,
    Linear,
    /// Row-wise softmax. Only valid on the output layer.
    Softmax,
}

impl Activation {
    pub fn tag(self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::Sigmoid => "sigmoid",
            Activation::Linear => "linear",
            Activation::Softmax => "softmax",
        }
    }

    pub fn parse(tag: &str) -> Option<Self> {
        match tag {
            "relu" => Some(Activation::Relu),
            "sigmoid" => Some(Activation::Sigmoid),
            "linear" => Some(Activation::Linear),
            "softmax" => Some(Activation::Softmax),
            _ => None,
        }
    }

    pub(crate) fn apply(self, pre: &Tensor2) -> Tensor2 {
        match self {
            Activation::Relu => pre.mapv(|v| v.max(0.0)),
            Activation::Sigmoid => pre.mapv(sigmoid),
            Activation::Linear => pre.clone(),
            Activation::Softmax => softmax_rows(pre),
        }
    }

    /// Multiplies `grad` (w.r.t. the activation output) by the elementwise
    /// derivative. Softmax is handled by the fused cross-entropy path and is
    /// passed through unchanged.
    pub(crate) fn chain(self, grad: &mut Tensor2, pre: &Tensor2, out: &Tensor2) {
        match self {
            Activation::Relu => grad.zip_mut_with(pre, |g, &z| {
                if z <= 0.0 {
                    *g = 0.0;
                }
            }),
            Activation::Sigmoid => grad.zip_mut_with(out, |g, &a| *g *= a * (1.0 - a)),
            Activation::Linear | Activation::Softmax => {}
        }
    }
}

pub fn sigmoid(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

pub fn softmax_rows(logits: &Tensor2) -> Tensor2 {
    let mut out = logits.clone();
    for mut row in out.axis_iter_mut(Axis(0)) {
        let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row.mapv_inplace(|v| v / sum);
    }
    out
}

/// Affine map `x W + b` followed by an activation. `weights` is
/// `in_width x out_width`, so a batch of row vectors multiplies from the left.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
    pub activation: Activation,
}

impl DenseLayer {
    pub fn new(weights: Array2<f64>, bias: Array1<f64>, activation: Activation) -> Self {
        Self {
            weights,
            bias,
            activation,
        }
    }

    pub fn zeros(in_width: usize, out_width: usize, activation: Activation) -> Self {
        Self::new(
            Array2::zeros((in_width, out_width)),
            Array1::zeros(out_width),
            activation,
        )
    }

    pub fn in_width(&self) -> usize {
        self.weights.nrows()
    }

    pub fn out_width(&self) -> usize {
        self.weights.ncols()
    }

    pub fn pre_activation(&self, input: &Tensor2) -> Tensor2 {
        let mut z = input.dot(&self.weights);
        z += &self.bias;
        z
    }

    pub fn forward(&self, input: &Tensor2) -> Tensor2 {
        self.activation.apply(&self.pre_activation(input))
    }
}
