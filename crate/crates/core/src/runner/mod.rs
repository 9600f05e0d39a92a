//! Experiment orchestration: configs, the training loop, evaluation,
//! sweeps, domain adaptation and report files.

mod config;
mod embeddings;
mod recipes;
mod report;
mod sweep;
mod train;

use std::time::Instant;

pub use config::{
    adapt_mode_tag, AdaptMode, Architecture, BatchSettings, ExperimentConfig, Recipe, DATA_ROOT_ENV,
};
pub use embeddings::dump_embeddings;
pub use recipes::{class_balanced_sample, load_mnist, prepare, Augmentation, PreparedData};
pub use report::{aggregate, histogram_csv, mean_std, ProbeSummary, ReattachSummary, RunReport};
pub use sweep::{apply_axis, axis_tag, sweep, sweep_csv, SweepAxis, SweepCell};
pub use train::{evaluate, fit, run_experiment, train, train_prepared, EpochLog, Evaluation, TrainSettings};

use crate::{Error, Result};

/// Trains a domain-adaptation recipe with the given mode and labeled-target
/// count and evaluates on the full rotated test split.
pub fn run_domain_adaptation(
    template: &ExperimentConfig,
    mode: AdaptMode,
    n_target_labeled: usize,
    seed: u64,
) -> Result<RunReport> {
    let mut cfg = template.clone();
    match &mut cfg.recipe {
        Recipe::DomainAdaptation {
            mode: m,
            n_target_labeled: n,
            ..
        } => {
            *m = mode;
            *n = n_target_labeled;
        }
        other => {
            return Err(Error::Config(format!(
                "run_domain_adaptation needs a domain_adaptation recipe, got {}",
                other.id()
            )))
        }
    }
    cfg.name = format!("{}_{}_{}", template.name, adapt_mode_tag(mode), n_target_labeled);
    let started = Instant::now();
    let data = prepare(&cfg, seed)?;
    let (net, report) = train_prepared(&cfg, &data, seed, started)?;
    if let Some(dir) = &cfg.out_dir {
        report.write(&dir.join(&cfg.name).join(format!("seed-{seed}")), Some(&net))?;
    }
    Ok(report)
}
