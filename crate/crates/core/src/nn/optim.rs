use serde::{Deserialize, Serialize};

use super::layer::DenseLayer;
use super::network::{GradientSet, Network};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Sgd,
    Adam,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimizerSettings {
    pub kind: OptimizerKind,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for OptimizerSettings {
    fn default() -> Self {
        Self {
            kind: OptimizerKind::Adam,
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

impl OptimizerSettings {
    pub fn sgd(learning_rate: f64) -> Self {
        Self {
            kind: OptimizerKind::Sgd,
            learning_rate,
            ..Self::default()
        }
    }

    pub fn adam(learning_rate: f64) -> Self {
        Self {
            learning_rate,
            ..Self::default()
        }
    }
}

/// Optimizer plus its per-parameter state. Adam moments are allocated on the
/// first step.
#[derive(Debug, Clone)]
pub struct Optimizer {
    settings: OptimizerSettings,
    step: usize,
    moments: Option<(GradientSet, GradientSet)>,
}

impl Optimizer {
    pub fn new(settings: OptimizerSettings) -> Result<Self> {
        if !(settings.learning_rate > 0.0 && settings.learning_rate.is_finite()) {
            return Err(Error::Config(format!(
                "learning rate must be positive, got {}",
                settings.learning_rate
            )));
        }
        if settings.kind == OptimizerKind::Adam
            && !((0.0..1.0).contains(&settings.beta1)
                && (0.0..1.0).contains(&settings.beta2)
                && settings.epsilon > 0.0)
        {
            return Err(Error::Config("adam needs beta1, beta2 in [0,1) and epsilon > 0".into()));
        }
        Ok(Self {
            settings,
            step: 0,
            moments: None,
        })
    }

    pub fn settings(&self) -> &OptimizerSettings {
        &self.settings
    }

    /// Number of updates applied so far.
    pub fn step(&self) -> usize {
        self.step
    }

    pub fn apply_update(&mut self, net: &mut Network, grads: &GradientSet) -> Result<()> {
        grads.congruent_with(net)?;
        self.apply_update_layers(net.layers_mut(), grads)
    }

    /// Same update on a bare layer stack, e.g. a head trained on frozen
    /// features.
    pub fn apply_update_layers(&mut self, layers: &mut [DenseLayer], grads: &GradientSet) -> Result<()> {
        if grads.weights.len() != layers.len()
            || layers
                .iter()
                .zip(grads.weights.iter().zip(&grads.biases))
                .any(|(l, (w, b))| l.weights.dim() != w.dim() || l.bias.len() != b.len())
        {
            return Err(Error::Config("gradient shapes do not match the layers".into()));
        }
        if !grads.is_finite() {
            return Err(Error::Training {
                step: self.step,
                message: "non-finite gradient".into(),
            });
        }
        let lr = self.settings.learning_rate;
        match self.settings.kind {
            OptimizerKind::Sgd => {
                for (layer, (gw, gb)) in layers
                    .iter_mut()
                    .zip(grads.weights.iter().zip(&grads.biases))
                {
                    layer.weights.scaled_add(-lr, gw);
                    layer.bias.scaled_add(-lr, gb);
                }
            }
            OptimizerKind::Adam => {
                let OptimizerSettings {
                    beta1,
                    beta2,
                    epsilon,
                    ..
                } = self.settings;
                let (m, v) = self
                    .moments
                    .get_or_insert_with(|| (GradientSet::zeros_for(layers), GradientSet::zeros_for(layers)));
                let t = (self.step + 1) as i32;
                let c1 = 1.0 - beta1.powi(t);
                let c2 = 1.0 - beta2.powi(t);
                for (l, layer) in layers.iter_mut().enumerate() {
                    adam_step(&mut layer.weights, &grads.weights[l], &mut m.weights[l], &mut v.weights[l], lr, beta1, beta2, epsilon, c1, c2);
                    adam_step(&mut layer.bias, &grads.biases[l], &mut m.biases[l], &mut v.biases[l], lr, beta1, beta2, epsilon, c1, c2);
                }
            }
        }
        self.step += 1;
        Ok(())
    }
}

#[allow(clippy::too_many_arguments)]
fn adam_step<D: ndarray::Dimension>(
    param: &mut ndarray::Array<f64, D>,
    grad: &ndarray::Array<f64, D>,
    m: &mut ndarray::Array<f64, D>,
    v: &mut ndarray::Array<f64, D>,
    lr: f64,
    beta1: f64,
    beta2: f64,
    epsilon: f64,
    c1: f64,
    c2: f64,
) {
    ndarray::Zip::from(param)
        .and(grad)
        .and(m)
        .and(v)
        .for_each(|p, &g, m, v| {
            *m = beta1 * *m + (1.0 - beta1) * g;
            *v = beta2 * *v + (1.0 - beta2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *p -= lr * m_hat / (v_hat.sqrt() + epsilon);
        });
}
