use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::affinity::{AffinityConfig, Direction, Normalization};
use crate::data::{BatchPolicy, MissingPolicy, Split, SyntheticSpec};
use crate::interpret::HeadTraining;
use crate::nn::{Activation, ArchitectureSpec, OptimizerSettings};
use crate::{Error, Result};

/// Environment variable that overrides the dataset root directory.
pub const DATA_ROOT_ENV: &str = "AFFINITY_DATA_ROOT";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AdaptMode {
    SourceOnly,
    /// Source plus the labeled target rows, re-rotated at random every epoch.
    AugmentationBaseline,
    /// Source plus the labeled target rows with the affinity loss coupling
    /// the two domains.
    Affinity,
}

/// Dataset recipe. Image recipes read IDX files from `<data root>/mnist`,
/// Adult reads `<data root>/adult/adult.{data,test}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Recipe {
    /// Digits (group 0) merged with their inverted copies (group 1).
    MnistInverted {
        /// Use only the first `n` training digits before doubling.
        #[serde(default)]
        train_digits: Option<usize>,
    },
    Adult {
        #[serde(default = "yes")]
        exclude_sensitive: bool,
        #[serde(default)]
        missing: MissingPolicy,
        #[serde(default)]
        validation_seed: u64,
    },
    Synthetic {
        #[serde(flatten)]
        spec: SyntheticSpec,
        /// Size of the independently generated evaluation set.
        #[serde(default = "default_synthetic_eval")]
        eval_n: usize,
    },
    /// Upright digits as source (group 1), digits rotated by `angle` as the
    /// target domain (group 0).
    DomainAdaptation {
        mode: AdaptMode,
        #[serde(default = "default_target_labeled")]
        n_target_labeled: usize,
        #[serde(default = "default_angle")]
        angle: f64,
        #[serde(default = "default_angle")]
        augment_range: f64,
        #[serde(default)]
        n_source: Option<usize>,
    },
}

fn yes() -> bool {
    true
}

fn default_synthetic_eval() -> usize {
    2000
}

fn default_target_labeled() -> usize {
    200
}

fn default_angle() -> f64 {
    30.0
}

impl Recipe {
    pub fn id(&self) -> &'static str {
        match self {
            Recipe::MnistInverted { .. } => "mnist_inverted",
            Recipe::Adult { .. } => "adult",
            Recipe::Synthetic { .. } => "synthetic",
            Recipe::DomainAdaptation { .. } => "domain_adaptation",
        }
    }
}

/// Hidden part of the network; input and output widths come from the data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Architecture {
    pub hidden: Vec<usize>,
    #[serde(default)]
    pub activations: Option<Vec<Activation>>,
    /// Index into `hidden` of the representation layer.
    pub representation_index: usize,
}

impl Architecture {
    pub fn relu(hidden: &[usize]) -> Self {
        Self {
            hidden: hidden.to_vec(),
            activations: None,
            representation_index: hidden.len().saturating_sub(1),
        }
    }

    pub fn resolve(&self, input: usize, classes: usize) -> Result<ArchitectureSpec> {
        if self.hidden.is_empty() {
            return Err(Error::Config("at least one hidden layer is required".into()));
        }
        if self.representation_index >= self.hidden.len() {
            return Err(Error::Config(format!(
                "representation index {} is not a hidden layer (have {})",
                self.representation_index,
                self.hidden.len()
            )));
        }
        let mut activations = match &self.activations {
            Some(a) if a.len() != self.hidden.len() => {
                return Err(Error::Config(format!(
                    "{} hidden widths but {} activations",
                    self.hidden.len(),
                    a.len()
                )))
            }
            Some(a) => a.clone(),
            None => vec![Activation::Relu; self.hidden.len()],
        };
        activations.push(Activation::Softmax);
        let mut widths = vec![input];
        widths.extend_from_slice(&self.hidden);
        widths.push(classes);
        Ok(ArchitectureSpec {
            widths,
            activations,
            representation_index: self.representation_index,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BatchSettings {
    pub size: usize,
    #[serde(default)]
    pub policy: BatchPolicy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub name: String,
    pub recipe: Recipe,
    /// Defaults to `$AFFINITY_DATA_ROOT`, then `./data`.
    #[serde(default)]
    pub data_root: Option<PathBuf>,
    pub architecture: Architecture,
    #[serde(default)]
    pub optimizer: OptimizerSettings,
    #[serde(default)]
    pub affinity: AffinityConfig,
    pub batch: BatchSettings,
    pub epochs: usize,
    pub seeds: Vec<u64>,
    #[serde(default = "default_eval_split")]
    pub eval_split: Split,
    #[serde(default)]
    pub probe: HeadTraining,
    /// Fit the reattached head (binary targets only).
    #[serde(default)]
    pub reattach: bool,
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
}

fn default_eval_split() -> Split {
    Split::Test
}

impl ExperimentConfig {
    /// Digits vs inverted digits, 784-128-128-20-10 with a linear 20-unit
    /// representation layer.
    pub fn mnist_inverted() -> Self {
        Self {
            name: "mnist_inverted".into(),
            recipe: Recipe::MnistInverted { train_digits: None },
            data_root: None,
            architecture: Architecture {
                activations: Some(vec![Activation::Relu, Activation::Relu, Activation::Linear]),
                ..Architecture::relu(&[128, 128, 20])
            },
            optimizer: OptimizerSettings::default(),
            affinity: AffinityConfig {
                normalization: Normalization::Classes,
                ..AffinityConfig::with_lambda(0.01)
            },
            batch: BatchSettings {
                size: 128,
                policy: BatchPolicy::GroupStratified,
            },
            epochs: 10,
            seeds: vec![0, 1, 2, 3, 4],
            eval_split: Split::Test,
            probe: HeadTraining::default(),
            reattach: false,
            out_dir: None,
        }
    }

    /// Adult income with gender as the group, input-128-20-2 with a linear
    /// representation layer.
    pub fn adult() -> Self {
        Self {
            name: "adult".into(),
            recipe: Recipe::Adult {
                exclude_sensitive: true,
                missing: MissingPolicy::AsCategory,
                validation_seed: 0,
            },
            architecture: Architecture {
                activations: Some(vec![Activation::Relu, Activation::Linear]),
                ..Architecture::relu(&[128, 20])
            },
            batch: BatchSettings {
                size: 512,
                policy: BatchPolicy::GroupStratified,
            },
            epochs: 30,
            probe: HeadTraining {
                batch_size: 512,
                ..HeadTraining::default()
            },
            reattach: true,
            affinity: AffinityConfig {
                direction: Direction::SymmetricMean,
                normalization: Normalization::Classes,
                ..AffinityConfig::with_lambda(0.028)
            },
            ..Self::mnist_inverted()
        }
    }

    pub fn synthetic(spec: SyntheticSpec) -> Self {
        Self {
            name: "synthetic".into(),
            recipe: Recipe::Synthetic {
                spec,
                eval_n: default_synthetic_eval(),
            },
            architecture: Architecture::relu(&[32, 8]),
            batch: BatchSettings {
                size: 128,
                policy: BatchPolicy::GroupStratified,
            },
            epochs: 30,
            seeds: vec![0],
            affinity: AffinityConfig {
                direction: Direction::SymmetricMean,
                normalization: Normalization::Classes,
                ..AffinityConfig::with_lambda(0.028)
            },
            ..Self::mnist_inverted()
        }
    }

    pub fn domain_adaptation(mode: AdaptMode) -> Self {
        Self {
            name: format!("adapt_{}", adapt_mode_tag(mode)),
            recipe: Recipe::DomainAdaptation {
                mode,
                n_target_labeled: default_target_labeled(),
                angle: default_angle(),
                augment_range: default_angle(),
                n_source: None,
            },
            ..Self::mnist_inverted()
        }
    }

    /// The affinity settings training actually uses: the two non-affinity
    /// adaptation modes always train with `lambda = 0`.
    pub fn effective_affinity(&self) -> AffinityConfig {
        match self.recipe {
            Recipe::DomainAdaptation { mode, .. } if mode != AdaptMode::Affinity => AffinityConfig {
                lambda: 0.0,
                ..self.affinity
            },
            _ => self.affinity,
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(format!("cannot serialize config: {e}")))
    }

    pub fn validate(&self) -> Result<()> {
        self.affinity.validate()?;
        if self.seeds.is_empty() {
            return Err(Error::Config("seed list is empty".into()));
        }
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be positive".into()));
        }
        if self.batch.size < 2 {
            return Err(Error::Config(format!("batch size must be at least 2, got {}", self.batch.size)));
        }
        // Widths are checked against a placeholder input; the real one comes
        // from the data.
        self.architecture.resolve(1, 2)?;
        if let Recipe::DomainAdaptation { angle, augment_range, .. } = self.recipe {
            if !angle.is_finite() || !augment_range.is_finite() {
                return Err(Error::Config("rotation angles must be finite".into()));
            }
        }
        Ok(())
    }

    pub fn data_root(&self) -> PathBuf {
        std::env::var_os(DATA_ROOT_ENV)
            .map(PathBuf::from)
            .or_else(|| self.data_root.clone())
            .unwrap_or_else(|| PathBuf::from("data"))
    }
}

pub fn adapt_mode_tag(mode: AdaptMode) -> &'static str {
    match mode {
        AdaptMode::SourceOnly => "source_only",
        AdaptMode::AugmentationBaseline => "augmentation_baseline",
        AdaptMode::Affinity => "affinity",
    }
}
