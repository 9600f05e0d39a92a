use std::time::Instant;

use ndarray::Axis;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::recipes::{prepare, Augmentation, PreparedData};
use super::report::{ProbeSummary, ReattachSummary, RunReport};
use crate::affinity::{affinity_loss, AffinityConfig, GroupedBatch};
use crate::data::{rotate_image, BatchSampler, Dataset, FeatureSchema};
use crate::interpret::{
    fit_reattached_head, histogram_of_r, influence_report, probe_both, HeadTraining, ReattachConfig, DEFAULT_BINS,
};
use crate::metrics::{accuracy, fairness_report, per_group_accuracy, EvalRecordSet, FairnessReport};
use crate::nn::{cross_entropy_from_logits, init_network, predicted_classes, ArchitectureSpec, Network, Optimizer};
use crate::{Error, Result};

/// Mean per-batch losses of one epoch. `total_loss` is
/// `target_loss + lambda * affinity_loss`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub target_loss: f64,
    pub affinity_loss: f64,
    pub total_loss: f64,
}

/// Everything the optimization loop needs, detached from dataset loading.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainSettings {
    pub architecture: ArchitectureSpec,
    pub optimizer: crate::nn::OptimizerSettings,
    pub affinity: AffinityConfig,
    pub sampler: BatchSampler,
    pub epochs: usize,
    pub init_seed: u64,
}

impl TrainSettings {
    pub fn from_config(cfg: &ExperimentConfig, train: &Dataset, seed: u64) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            architecture: cfg.architecture.resolve(train.width(), train.n_classes)?,
            optimizer: cfg.optimizer,
            affinity: cfg.effective_affinity(),
            sampler: BatchSampler::new(cfg.batch.size, cfg.batch.policy, seed ^ 0x9e37_79b9_7f4a_7c15)?,
            epochs: cfg.epochs,
            init_seed: seed,
        })
    }
}

fn diverged(step: usize, what: &str, value: f64) -> Error {
    Error::Training {
        step,
        message: format!("{what} is {value}"),
    }
}

fn rerotate(features: &mut crate::Tensor2, source: &Dataset, aug: &Augmentation, seed: u64, epoch: usize) -> Result<()> {
    let FeatureSchema::Image { height, width } = source.schema else {
        return Err(Error::Input("augmentation needs image features".into()));
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(epoch as u64);
    let range = aug.range_degrees.abs();
    for &row in &aug.rows {
        let angle = if range > 0.0 { rng.random_range(-range..=range) } else { 0.0 };
        let original = source.features.row(row);
        let rotated = rotate_image(original.as_slice().expect("standard layout"), height, width, angle);
        features.row_mut(row).assign(&ndarray::ArrayView1::from(&rotated));
    }
    Ok(())
}

/// Minimizes `l_target + lambda * l_affinity` with mini-batches. The
/// affinity term is not computed at all when `lambda == 0`.
pub fn fit(train: &Dataset, settings: &TrainSettings, augmentation: Option<&Augmentation>) -> Result<(Network, Vec<EpochLog>)> {
    let mut net = init_network(&settings.architecture, settings.init_seed)?;
    let mut optimizer = Optimizer::new(settings.optimizer)?;
    let lambda = settings.affinity.lambda;
    let mut features = train.features.clone();
    let mut log = Vec::with_capacity(settings.epochs);
    let mut step = 0;
    for epoch in 0..settings.epochs {
        if let Some(aug) = augmentation {
            rerotate(&mut features, train, aug, settings.init_seed ^ 0xa0_9e_0c, epoch)?;
        }
        let batches = settings.sampler.epoch(&train.groups, epoch)?;
        let (mut target_sum, mut affinity_sum) = (0.0, 0.0);
        for idx in &batches {
            let x = features.select(Axis(0), idx);
            let labels: Vec<usize> = idx.iter().map(|&i| train.targets[i]).collect();
            let trace = net.forward(&x)?;
            let (target, output_grad) = cross_entropy_from_logits(trace.logits(), &labels)?;
            if !target.is_finite() {
                return Err(diverged(step, "target loss", target));
            }
            let mut rep_grad = None;
            if lambda > 0.0 {
                let groups: Vec<u8> = idx.iter().map(|&i| train.groups[i]).collect();
                let batch = GroupedBatch::new(trace.representation(), &labels, &groups)?;
                let result = affinity_loss(&batch, &settings.affinity)?;
                if !result.loss.is_finite() {
                    return Err(diverged(step, "affinity loss", result.loss));
                }
                affinity_sum += result.loss;
                rep_grad = Some(result.grad_at_representation * lambda);
            }
            target_sum += target;
            let grads = net.backward_with(&trace, Some(&output_grad), rep_grad.as_ref())?;
            optimizer.apply_update(&mut net, &grads).map_err(|e| match e {
                Error::Training { message, .. } => Error::Training { step, message },
                other => other,
            })?;
            step += 1;
        }
        let n = batches.len() as f64;
        let (target_loss, affinity_loss) = (target_sum / n, affinity_sum / n);
        let entry = EpochLog {
            epoch,
            target_loss,
            affinity_loss,
            total_loss: target_loss + lambda * affinity_loss,
        };
        log::debug!("epoch {epoch}: {entry:?}");
        log.push(entry);
    }
    Ok((net, log))
}

/// Test-split metrics plus probes retrained on `train`.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub accuracy: f64,
    pub per_group_accuracy: Option<[f64; 2]>,
    /// Present for binary targets with both groups in the evaluation data.
    pub fairness: Option<FairnessReport>,
    /// Present when both training data and evaluation data contain both
    /// groups.
    pub probe: Option<ProbeSummary>,
}

fn has_both_groups(ds: &Dataset) -> bool {
    let [a, b] = ds.group_counts();
    a > 0 && b > 0
}

pub fn evaluate(net: &Network, train: &Dataset, eval: &Dataset, probe_cfg: &HeadTraining) -> Result<Evaluation> {
    let predictions = predicted_classes(&net.predict(&eval.features)?);
    let records = EvalRecordSet::new(predictions, eval.targets.clone(), eval.groups.clone())?;
    let both = has_both_groups(eval);
    let fairness = if both && records.is_binary() {
        Some(fairness_report(&records)?)
    } else {
        None
    };
    let probe = if both && has_both_groups(train) {
        let p = probe_both(net, train, eval, probe_cfg)?;
        Some(ProbeSummary {
            target_accuracy: p.target_accuracy,
            sensitive_accuracy: p.sensitive_accuracy,
        })
    } else {
        None
    };
    Ok(Evaluation {
        accuracy: accuracy(&records)?,
        per_group_accuracy: if both { Some(per_group_accuracy(&records)?) } else { None },
        fairness,
        probe,
    })
}

/// One seed of an experiment: load, train, evaluate, audit.
pub fn train(cfg: &ExperimentConfig, seed: u64) -> Result<(Network, RunReport)> {
    let started = Instant::now();
    let data = prepare(cfg, seed)?;
    let (net, report) = train_prepared(cfg, &data, seed, started)?;
    if let Some(dir) = &cfg.out_dir {
        report.write(&dir.join(&cfg.name).join(format!("seed-{seed}")), Some(&net))?;
    }
    Ok((net, report))
}

pub fn train_prepared(cfg: &ExperimentConfig, data: &PreparedData, seed: u64, started: Instant) -> Result<(Network, RunReport)> {
    let settings = TrainSettings::from_config(cfg, &data.train, seed)?;
    let (net, epochs) = fit(&data.train, &settings, data.augmentation.as_ref())?;
    let probe_cfg = HeadTraining { seed, ..cfg.probe };
    let evaluation = evaluate(&net, &data.train, &data.eval, &probe_cfg)?;
    let reattached = if cfg.reattach && data.train.n_classes == 2 && has_both_groups(&data.eval) {
        let reattach_cfg = ReattachConfig {
            training: probe_cfg,
            ..ReattachConfig::default()
        };
        let with_z = fit_reattached_head(&net, &data.train, &data.eval, true, &reattach_cfg)?;
        let without_z = fit_reattached_head(&net, &data.train, &data.eval, false, &reattach_cfg)?;
        let histogram = histogram_of_r(&with_z.head, &net, &data.eval, DEFAULT_BINS)?;
        Some(ReattachSummary {
            with_z: with_z.report,
            without_z: without_z.report,
            influence: influence_report(&with_z.head),
            head: with_z.head,
            overlap: histogram.overlap(),
            histogram,
            independence_warning: with_z.independence_warning,
        })
    } else {
        None
    };
    let mut notes = data.notes.clone();
    if let Some(sum) = &data.schema_checksum {
        notes.push(format!("schema sha256 {sum}"));
    }
    let report = RunReport {
        name: cfg.name.clone(),
        recipe: cfg.recipe.id().to_string(),
        seed,
        lambda: cfg.effective_affinity().lambda,
        config_snapshot: cfg.to_toml_string()?,
        epochs,
        accuracy: evaluation.accuracy,
        per_group_accuracy: evaluation.per_group_accuracy,
        fairness: evaluation.fairness,
        probe: evaluation.probe,
        reattached,
        notes,
        wall_clock_secs: started.elapsed().as_secs_f64(),
    };
    Ok((net, report))
}

/// Every seed of the config, in order.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Vec<RunReport>> {
    cfg.seeds.iter().map(|&seed| train(cfg, seed).map(|(_, r)| r)).collect()
}
