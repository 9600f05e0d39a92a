use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::{AdaptMode, ExperimentConfig, Recipe};
use crate::data::{
    apply_transform, load_adult, load_idx_images, make_synthetic, merge_as_groups, AdultConfig, Dataset, Split,
    SyntheticSpec, TransformSpec,
};
use crate::{Error, Result};

/// Rows of the training set that are re-rotated at random every epoch.
#[derive(Debug, Clone, PartialEq)]
pub struct Augmentation {
    pub rows: Vec<usize>,
    pub range_degrees: f64,
}

#[derive(Debug, Clone)]
pub struct PreparedData {
    pub train: Dataset,
    pub eval: Dataset,
    pub augmentation: Option<Augmentation>,
    /// Checksum of the fitted preprocessing, when there is one.
    pub schema_checksum: Option<String>,
    pub notes: Vec<String>,
}

fn idx_file(dir: &Path, stem: &str) -> PathBuf {
    let plain = dir.join(stem);
    if plain.exists() {
        return plain;
    }
    let gz = dir.join(format!("{stem}.gz"));
    if gz.exists() {
        gz
    } else {
        plain
    }
}

/// `(train, test)` digits from `<root>/mnist`.
pub fn load_mnist(root: &Path) -> Result<(Dataset, Dataset)> {
    let dir = root.join("mnist");
    let train = load_idx_images(
        &idx_file(&dir, "train-images-idx3-ubyte"),
        &idx_file(&dir, "train-labels-idx1-ubyte"),
        Split::Train,
    )?;
    let test = load_idx_images(
        &idx_file(&dir, "t10k-images-idx3-ubyte"),
        &idx_file(&dir, "t10k-labels-idx1-ubyte"),
        Split::Test,
    )?;
    Ok((train, test))
}

fn with_inverted(ds: &Dataset) -> Result<Dataset> {
    merge_as_groups(ds, &apply_transform(ds, &TransformSpec::Invert)?)
}

/// `k` random rows of every class.
pub fn class_balanced_sample(ds: &Dataset, per_class: usize, seed: u64) -> Result<Vec<usize>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked = Vec::with_capacity(per_class * ds.n_classes);
    for class in 0..ds.n_classes {
        let mut rows: Vec<usize> = (0..ds.len()).filter(|&i| ds.targets[i] == class).collect();
        if rows.len() < per_class {
            return Err(Error::Input(format!(
                "class {class} has {} rows, {per_class} requested",
                rows.len()
            )));
        }
        rows.shuffle(&mut rng);
        picked.extend_from_slice(&rows[..per_class]);
    }
    picked.sort_unstable();
    Ok(picked)
}

/// Labeled target rows: class-balanced when the count divides evenly,
/// uniformly random otherwise.
fn sample_target_rows(ds: &Dataset, n: usize, seed: u64) -> Result<Vec<usize>> {
    if n > ds.len() {
        return Err(Error::Input(format!(
            "{n} labeled target rows requested, only {} available",
            ds.len()
        )));
    }
    if n % ds.n_classes == 0 {
        return class_balanced_sample(ds, n / ds.n_classes, seed);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows: Vec<usize> = (0..ds.len()).collect();
    rows.shuffle(&mut rng);
    rows.truncate(n);
    rows.sort_unstable();
    Ok(rows)
}

pub fn prepare(cfg: &ExperimentConfig, seed: u64) -> Result<PreparedData> {
    let root = cfg.data_root();
    let mut notes = Vec::new();
    let image_eval_split = || -> Result<()> {
        if cfg.eval_split == Split::Test {
            Ok(())
        } else {
            Err(Error::Config(format!(
                "recipe {} only has a test split for evaluation",
                cfg.recipe.id()
            )))
        }
    };
    match &cfg.recipe {
        Recipe::MnistInverted { train_digits } => {
            image_eval_split()?;
            let (mut train, test) = load_mnist(&root)?;
            if let Some(n) = train_digits {
                train = train.take(*n);
            }
            Ok(PreparedData {
                train: with_inverted(&train)?,
                eval: with_inverted(&test)?,
                augmentation: None,
                schema_checksum: None,
                notes,
            })
        }
        Recipe::Adult {
            exclude_sensitive,
            missing,
            validation_seed,
        } => {
            let dir = root.join("adult");
            let splits = load_adult(
                &dir.join("adult.data"),
                &dir.join("adult.test"),
                &AdultConfig {
                    exclude_sensitive: *exclude_sensitive,
                    missing: *missing,
                    split_seed: *validation_seed,
                    ..AdultConfig::default()
                },
            )?;
            notes.push(format!(
                "adult rows train={} validation={} test={}",
                splits.train.len(),
                splits.validation.len(),
                splits.test.len()
            ));
            let eval = match cfg.eval_split {
                Split::Test => splits.test,
                Split::Validation => splits.validation,
                Split::Train => splits.train.clone(),
            };
            Ok(PreparedData {
                train: splits.train,
                eval,
                augmentation: None,
                schema_checksum: Some(splits.schema.checksum()),
                notes,
            })
        }
        Recipe::Synthetic { spec, eval_n } => {
            image_eval_split()?;
            let train = make_synthetic(spec)?;
            let eval = make_synthetic(&SyntheticSpec {
                n: *eval_n,
                seed: spec.seed.wrapping_add(0x5eed),
                ..*spec
            })?
            .with_split(Split::Test);
            Ok(PreparedData {
                train,
                eval,
                augmentation: None,
                schema_checksum: None,
                notes,
            })
        }
        Recipe::DomainAdaptation {
            mode,
            n_target_labeled,
            angle,
            augment_range,
            n_source,
        } => {
            image_eval_split()?;
            let (digits, test) = load_mnist(&root)?;
            let rotate = TransformSpec::Rotate { degrees: *angle };
            let target_rows = sample_target_rows(&digits, *n_target_labeled, seed)?;
            let source_rows: Vec<usize> = (0..digits.len())
                .filter(|i| target_rows.binary_search(i).is_err())
                .take(n_source.unwrap_or(usize::MAX))
                .collect();
            let source = digits.subset(&source_rows).with_group(1);
            let target = apply_transform(&digits.subset(&target_rows), &rotate)?.with_group(0);
            let eval = apply_transform(&test, &rotate)?.with_group(0);
            notes.push(format!(
                "source rows={} labeled target rows={}",
                source.len(),
                target.len()
            ));
            let (train, augmentation) = match mode {
                AdaptMode::SourceOnly => (source, None),
                _ if target.is_empty() => {
                    let note = "no labeled target rows: only the source group is present, training reduces to source only";
                    log::warn!("{note}");
                    notes.push(note.into());
                    (source, None)
                }
                AdaptMode::AugmentationBaseline => {
                    let n_source = source.len();
                    let rows = (n_source..n_source + target.len()).collect();
                    (
                        source.concat(&target)?,
                        Some(Augmentation {
                            rows,
                            range_degrees: *augment_range,
                        }),
                    )
                }
                AdaptMode::Affinity => (source.concat(&target)?, None),
            };
            Ok(PreparedData {
                train,
                eval,
                augmentation,
                schema_checksum: None,
                notes,
            })
        }
    }
}
