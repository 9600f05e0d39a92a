//! Auditing a trained representation: retrained probes, the reattached
//! sensitive attribute, weight read-outs and per-group histograms of the
//! one-dimensional summary `r`.
//!
//! Nothing here mutates the network; every head trains on representations
//! computed once from the frozen layers.

use ndarray::{Array1, Array2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::data::{BatchPolicy, BatchSampler, Dataset};
use crate::metrics::{fairness_report, EvalRecordSet, FairnessReport};
use crate::nn::{
    cross_entropy_from_logits, predicted_classes, sigmoid, Activation, DenseLayer, GradientSet,
    Network, Optimizer, OptimizerSettings,
};
use crate::{Error, Result, Tensor2};

/// Budget for heads fitted on frozen features.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HeadTraining {
    pub epochs: usize,
    pub batch_size: usize,
    pub optimizer: OptimizerSettings,
    pub seed: u64,
}

impl Default for HeadTraining {
    fn default() -> Self {
        Self {
            epochs: 30,
            batch_size: 128,
            optimizer: OptimizerSettings::default(),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProbeObjective {
    PredictTarget,
    PredictSensitive,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeOutcome {
    pub objective: ProbeObjective,
    /// Accuracy on the evaluation data.
    pub accuracy: f64,
    pub head: DenseLayer,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeResult {
    pub target_accuracy: f64,
    pub sensitive_accuracy: f64,
    pub target_head: DenseLayer,
    pub sensitive_head: DenseLayer,
}

/// Representation-layer activations for every row of `data`.
pub fn representations(net: &Network, data: &Dataset) -> Result<Tensor2> {
    net.represent(&data.features)
}

fn probe_labels(data: &Dataset, objective: ProbeObjective) -> (Vec<usize>, usize) {
    match objective {
        ProbeObjective::PredictTarget => (data.targets.clone(), data.n_classes),
        ProbeObjective::PredictSensitive => (data.groups.iter().map(|&g| usize::from(g)).collect(), 2),
    }
}

fn require_two_classes(labels: &[usize], what: &str) -> Result<()> {
    match labels.first() {
        None => Err(Error::Input(format!("no rows to fit the {what} head"))),
        Some(&first) if labels.iter().all(|&l| l == first) => Err(Error::Input(format!(
            "{what} labels are all {first}; a head needs at least two classes"
        ))),
        Some(_) => Ok(()),
    }
}

fn glorot(fan_in: usize, fan_out: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    let normal = Normal::new(0.0, (2.0 / (fan_in + fan_out) as f64).sqrt()).expect("positive std");
    Array2::from_shape_fn((fan_in, fan_out), |_| normal.sample(rng))
}

fn batches(n: usize, cfg: &HeadTraining, epoch: usize) -> Result<Vec<Vec<usize>>> {
    let size = cfg.batch_size.clamp(2, n.max(2));
    if n < 2 {
        return Err(Error::Input("a head needs at least two training rows".into()));
    }
    BatchSampler::new(size, BatchPolicy::Shuffled, cfg.seed)?.epoch(&vec![0; n], epoch)
}

/// Per-column mean and standard deviation (1 for constant columns).
fn column_scaling(features: &Tensor2) -> (Array1<f64>, Array1<f64>) {
    let mean = features.mean_axis(Axis(0)).expect("non-empty");
    let std = features
        .std_axis(Axis(0), 0.0)
        .mapv(|s| if s > 1e-12 { s } else { 1.0 });
    (mean, std)
}

/// Softmax head fitted on fixed features with cross-entropy.
///
/// Training runs on standardized columns; the scaling is folded back into
/// the returned head, which therefore applies to the raw features.
fn fit_softmax_head(raw: &Tensor2, labels: &[usize], classes: usize, cfg: &HeadTraining) -> Result<DenseLayer> {
    let (mean, std) = column_scaling(raw);
    let features = (raw - &mean) / &std;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut head = [DenseLayer::new(
        glorot(features.ncols(), classes, &mut rng),
        Array1::zeros(classes),
        Activation::Softmax,
    )];
    let mut optimizer = Optimizer::new(cfg.optimizer)?;
    for epoch in 0..cfg.epochs {
        for idx in batches(features.nrows(), cfg, epoch)? {
            let x = features.select(Axis(0), &idx);
            let y: Vec<usize> = idx.iter().map(|&i| labels[i]).collect();
            let (_, g) = cross_entropy_from_logits(&head[0].pre_activation(&x), &y)?;
            let grads = GradientSet {
                weights: vec![x.t().dot(&g)],
                biases: vec![g.sum_axis(Axis(0))],
            };
            optimizer.apply_update_layers(&mut head, &grads)?;
        }
    }
    let [mut head] = head;
    head.weights /= &std.view().insert_axis(Axis(1));
    head.bias -= &mean.dot(&head.weights);
    Ok(head)
}

fn accuracy_of(predictions: &[usize], truths: &[usize]) -> f64 {
    let hits = predictions.iter().zip(truths).filter(|(p, t)| p == t).count();
    hits as f64 / truths.len().max(1) as f64
}

/// Trains a fresh output head on the frozen representation of `train` and
/// reports its accuracy on `eval`.
pub fn probe(
    frozen: &Network,
    train: &Dataset,
    eval: &Dataset,
    objective: ProbeObjective,
    cfg: &HeadTraining,
) -> Result<ProbeOutcome> {
    let (labels, classes) = probe_labels(train, objective);
    require_two_classes(&labels, "probe")?;
    if eval.is_empty() {
        return Err(Error::Input("empty evaluation data".into()));
    }
    let head = fit_softmax_head(&representations(frozen, train)?, &labels, classes, cfg)?;
    let (eval_labels, _) = probe_labels(eval, objective);
    let predictions = predicted_classes(&head.pre_activation(&representations(frozen, eval)?));
    Ok(ProbeOutcome {
        objective,
        accuracy: accuracy_of(&predictions, &eval_labels),
        head,
    })
}

pub fn probe_both(frozen: &Network, train: &Dataset, eval: &Dataset, cfg: &HeadTraining) -> Result<ProbeResult> {
    let target = probe(frozen, train, eval, ProbeObjective::PredictTarget, cfg)?;
    let sensitive = probe(frozen, train, eval, ProbeObjective::PredictSensitive, cfg)?;
    Ok(ProbeResult {
        target_accuracy: target.accuracy,
        sensitive_accuracy: sensitive.accuracy,
        target_head: target.head,
        sensitive_head: sensitive.head,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Transfer {
    /// Squared error on `s`, predicting 1 when `s >= 0.5`.
    Linear,
    /// Logistic loss, predicting 1 when `s >= 0`.
    #[default]
    Sigmoid,
}

/// `y_hat = f(w_r * r + w_z * z + b)` with `r = u . g(x)` over the frozen
/// representation `g`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReattachedHead {
    pub r_projector: Vec<f64>,
    pub w_r: f64,
    pub w_z: f64,
    pub b: f64,
    pub transfer: Transfer,
    pub include_z: bool,
}

impl ReattachedHead {
    pub fn r_values(&self, frozen: &Network, data: &Dataset) -> Result<Vec<f64>> {
        if self.r_projector.len() != frozen.representation_width() {
            return Err(Error::Input(format!(
                "projector has width {}, representation has {}",
                self.r_projector.len(),
                frozen.representation_width()
            )));
        }
        let u = Array1::from(self.r_projector.clone());
        Ok(representations(frozen, data)?.dot(&u).to_vec())
    }

    pub fn score(&self, r: f64, z: u8) -> f64 {
        let z = if self.include_z { f64::from(z) } else { 0.0 };
        self.w_r * r + self.w_z * z + self.b
    }

    pub fn output(&self, r: f64, z: u8) -> f64 {
        match self.transfer {
            Transfer::Linear => self.score(r, z),
            Transfer::Sigmoid => sigmoid(self.score(r, z)),
        }
    }

    pub fn predict(&self, frozen: &Network, data: &Dataset) -> Result<Vec<usize>> {
        Ok(self
            .r_values(frozen, data)?
            .iter()
            .zip(&data.groups)
            .map(|(&r, &z)| usize::from(self.output(r, z) >= 0.5))
            .collect())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReattachOutcome {
    pub head: ReattachedHead,
    /// Metrics of the head's predictions on the evaluation data.
    pub report: FairnessReport,
    /// Set when `r` visibly depends on `z` on the training data.
    pub independence_warning: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct ReattachConfig {
    pub transfer: Transfer,
    pub training: HeadTraining,
}

/// Group-conditional means of `r` differing by at least this many pooled
/// standard deviations trigger the independence warning.
pub const INDEPENDENCE_TOLERANCE: f64 = 0.1;

/// Fits the projector `u` and the weights `w_r`, `w_z`, `b` jointly on the
/// frozen representation of `train`; `w_z` stays 0 unless `include_z`.
pub fn fit_reattached_head(
    frozen: &Network,
    train: &Dataset,
    eval: &Dataset,
    include_z: bool,
    cfg: &ReattachConfig,
) -> Result<ReattachOutcome> {
    if train.n_classes != 2 || train.targets.iter().any(|&t| t > 1) {
        return Err(Error::Input("reattachment needs a binary target".into()));
    }
    require_two_classes(&train.targets, "reattachment")?;
    if eval.is_empty() {
        return Err(Error::Input("empty evaluation data".into()));
    }
    let features = representations(frozen, train)?;
    let width = features.ncols();
    let training = &cfg.training;
    let mut rng = ChaCha8Rng::seed_from_u64(training.seed);
    // Layer 0 is the projector (its bias is pinned to 0), layer 1 maps
    // [r, z] to the score.
    let mut w_out = glorot(2, 1, &mut rng);
    w_out[[1, 0]] = 0.0;
    let mut layers = [
        DenseLayer::new(glorot(width, 1, &mut rng), Array1::zeros(1), Activation::Linear),
        DenseLayer::new(w_out, Array1::zeros(1), Activation::Linear),
    ];
    let z_all: Vec<f64> = train.groups.iter().map(|&g| f64::from(g)).collect();
    let y_all: Vec<f64> = train.targets.iter().map(|&t| t as f64).collect();
    let mut optimizer = Optimizer::new(training.optimizer)?;
    for epoch in 0..training.epochs {
        for idx in batches(train.len(), training, epoch)? {
            let g = features.select(Axis(0), &idx);
            let u = layers[0].weights.column(0);
            let (w_r, w_z, b) = (layers[1].weights[[0, 0]], layers[1].weights[[1, 0]], layers[1].bias[0]);
            let r = g.dot(&u);
            let n = idx.len() as f64;
            let ds: Array1<f64> = idx
                .iter()
                .zip(&r)
                .map(|(&i, &ri)| {
                    let s = w_r * ri + w_z * z_all[i] + b;
                    let out = match cfg.transfer {
                        Transfer::Linear => s,
                        Transfer::Sigmoid => sigmoid(s),
                    };
                    (out - y_all[i]) / n
                })
                .collect();
            let grad_u = g.t().dot(&ds) * w_r;
            let grad_wr = r.dot(&ds);
            let grad_wz = if include_z {
                idx.iter().zip(&ds).map(|(&i, &d)| z_all[i] * d).sum()
            } else {
                0.0
            };
            let grads = GradientSet {
                weights: vec![
                    grad_u.insert_axis(Axis(1)),
                    Array2::from_shape_vec((2, 1), vec![grad_wr, grad_wz]).expect("2x1"),
                ],
                biases: vec![Array1::zeros(1), Array1::from_elem(1, ds.sum())],
            };
            optimizer.apply_update_layers(&mut layers, &grads)?;
        }
    }
    let head = ReattachedHead {
        r_projector: layers[0].weights.column(0).to_vec(),
        w_r: layers[1].weights[[0, 0]],
        w_z: layers[1].weights[[1, 0]],
        b: layers[1].bias[0],
        transfer: cfg.transfer,
        include_z,
    };
    let train_r = features.dot(&layers[0].weights.column(0)).to_vec();
    let independence_warning = independence_check(&train_r, &train.groups);
    if let Some(w) = &independence_warning {
        log::warn!("{w}");
    }
    let records = EvalRecordSet::new(head.predict(frozen, eval)?, eval.targets.clone(), eval.groups.clone())?;
    Ok(ReattachOutcome {
        head,
        report: fairness_report(&records)?,
        independence_warning,
    })
}

/// Flags `r` whose group means differ by [`INDEPENDENCE_TOLERANCE`] pooled
/// standard deviations or more.
pub fn independence_check(r: &[f64], groups: &[u8]) -> Option<String> {
    let mut stats = [(0usize, 0.0f64, 0.0f64); 2];
    for (&v, &g) in r.iter().zip(groups) {
        let s = &mut stats[usize::from(g > 0)];
        s.0 += 1;
        s.1 += v;
        s.2 += v * v;
    }
    if stats.iter().any(|s| s.0 < 2) {
        return None;
    }
    let mean = |s: &(usize, f64, f64)| s.1 / s.0 as f64;
    let ss = |s: &(usize, f64, f64)| s.2 - s.1 * s.1 / s.0 as f64;
    let pooled = ((ss(&stats[0]) + ss(&stats[1])).max(0.0) / (stats[0].0 + stats[1].0 - 2) as f64).sqrt();
    let diff = (mean(&stats[0]) - mean(&stats[1])).abs();
    if diff >= INDEPENDENCE_TOLERANCE * pooled && diff > 0.0 {
        Some(format!(
            "r is not independent of z: group means differ by {:.3} pooled std",
            if pooled > 0.0 { diff / pooled } else { f64::INFINITY }
        ))
    } else {
        None
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Influence {
    pub w_r: f64,
    pub w_z: f64,
    /// `|w_z| / |w_r|`; 0 when `w_z` is 0.
    pub ratio: f64,
}

pub fn influence_report(head: &ReattachedHead) -> Influence {
    let ratio = if head.w_z == 0.0 {
        0.0
    } else {
        head.w_z.abs() / head.w_r.abs()
    };
    Influence {
        w_r: head.w_r,
        w_z: head.w_z,
        ratio,
    }
}

pub const DEFAULT_BINS: usize = 30;

/// Per-group counts over shared bin edges.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramPair {
    pub edges: Vec<f64>,
    pub counts: [Vec<usize>; 2],
}

impl HistogramPair {
    /// Sum over bins of the smaller of the two normalized frequencies.
    pub fn overlap(&self) -> f64 {
        let totals = [
            self.counts[0].iter().sum::<usize>() as f64,
            self.counts[1].iter().sum::<usize>() as f64,
        ];
        self.counts[0]
            .iter()
            .zip(&self.counts[1])
            .map(|(&a, &b)| (a as f64 / totals[0]).min(b as f64 / totals[1]))
            .sum()
    }
}

pub fn histogram_of_values(values: &[f64], groups: &[u8], bins: usize) -> Result<HistogramPair> {
    if bins < 2 {
        return Err(Error::Input(format!("need at least 2 bins, got {bins}")));
    }
    if values.len() != groups.len() {
        return Err(Error::Input(format!("{} values for {} groups", values.len(), groups.len())));
    }
    for g in 0..2u8 {
        if !groups.contains(&g) {
            return Err(Error::Input(format!("group {g} has no samples")));
        }
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Input("non-finite r value".into()));
    }
    let mut lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let mut hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if lo == hi {
        lo -= 0.5;
        hi += 0.5;
    }
    let width = (hi - lo) / bins as f64;
    let edges = (0..=bins).map(|i| lo + width * i as f64).collect();
    let mut counts = [vec![0; bins], vec![0; bins]];
    for (&v, &g) in values.iter().zip(groups) {
        let bin = (((v - lo) / width) as usize).min(bins - 1);
        counts[usize::from(g > 0)][bin] += 1;
    }
    Ok(HistogramPair { edges, counts })
}

pub fn histogram_of_r(head: &ReattachedHead, frozen: &Network, data: &Dataset, bins: usize) -> Result<HistogramPair> {
    histogram_of_values(&head.r_values(frozen, data)?, &data.groups, bins)
}
