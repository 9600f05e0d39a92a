//! Datasets, loaders, transforms and group-aware batching.

mod adult;
pub mod idx;
mod sampler;
mod synthetic;
mod transform;

use std::collections::BTreeMap;

use ndarray::Axis;
use serde::{Deserialize, Serialize};

use crate::{Error, Result, Tensor2};

pub use adult::{
    load_adult, load_adult_csv, read_records as read_adult_records, AdultConfig, AdultRecord,
    AdultSchema, AdultSplits, MissingPolicy,
};
pub use idx::load_idx_images;
pub use sampler::{sample_batches, BatchPolicy, BatchSampler};
pub use synthetic::{make_synthetic, make_synthetic_two_group, SyntheticSpec};
pub use transform::{apply_transform, merge_as_groups, rotate_image, TransformSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Validation,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Validation => "validation",
            Split::Test => "test",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum FeatureColumn {
    Continuous { name: String },
    OneHot { attribute: String, category: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum FeatureSchema {
    /// Row-major grayscale pixels in `[0, 1]`.
    Image { height: usize, width: usize },
    Tabular(Vec<FeatureColumn>),
    Dense { width: usize },
}

impl FeatureSchema {
    pub fn width(&self) -> usize {
        match self {
            FeatureSchema::Image { height, width } => height * width,
            FeatureSchema::Tabular(cols) => cols.len(),
            FeatureSchema::Dense { width } => *width,
        }
    }
}

/// Feature rows with target labels and binary group ids.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub features: Tensor2,
    pub targets: Vec<usize>,
    pub groups: Vec<u8>,
    pub n_classes: usize,
    pub split: Split,
    pub schema: FeatureSchema,
}

impl Dataset {
    pub fn new(
        features: Tensor2,
        targets: Vec<usize>,
        groups: Vec<u8>,
        n_classes: usize,
        split: Split,
        schema: FeatureSchema,
    ) -> Result<Self> {
        let n = features.nrows();
        if targets.len() != n || groups.len() != n {
            return Err(Error::Input(format!(
                "{n} feature rows, {} targets, {} groups",
                targets.len(),
                groups.len()
            )));
        }
        if schema.width() != features.ncols() {
            return Err(Error::Input(format!(
                "schema describes {} columns, features have {}",
                schema.width(),
                features.ncols()
            )));
        }
        if let Some(g) = groups.iter().find(|&&g| g > 1) {
            return Err(Error::Input(format!("group id {g} is not binary")));
        }
        if let Some(t) = targets.iter().find(|&&t| t >= n_classes) {
            return Err(Error::Input(format!("target {t} out of range for {n_classes} classes")));
        }
        if features.iter().any(|v| !v.is_finite()) {
            return Err(Error::Input("features contain non-finite values".into()));
        }
        Ok(Self {
            features,
            targets,
            groups,
            n_classes,
            split,
            schema,
        })
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn width(&self) -> usize {
        self.features.ncols()
    }

    /// Copy of the given rows, in the given order.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            features: self.features.select(Axis(0), indices),
            targets: indices.iter().map(|&i| self.targets[i]).collect(),
            groups: indices.iter().map(|&i| self.groups[i]).collect(),
            n_classes: self.n_classes,
            split: self.split,
            schema: self.schema.clone(),
        }
    }

    pub fn rows(&self, indices: &[usize]) -> Tensor2 {
        self.features.select(Axis(0), indices)
    }

    pub fn with_split(mut self, split: Split) -> Self {
        self.split = split;
        self
    }

    pub fn with_group(mut self, group: u8) -> Self {
        self.groups = vec![group; self.len()];
        self
    }

    pub fn group_counts(&self) -> [usize; 2] {
        let ones = self.groups.iter().filter(|&&g| g == 1).count();
        [self.len() - ones, ones]
    }

    pub fn class_histogram(&self) -> BTreeMap<usize, usize> {
        let mut hist = BTreeMap::new();
        for &t in &self.targets {
            *hist.entry(t).or_insert(0) += 1;
        }
        hist
    }

    /// First `n` rows (all rows when `n >= len`).
    pub fn take(&self, n: usize) -> Dataset {
        let idx: Vec<usize> = (0..n.min(self.len())).collect();
        self.subset(&idx)
    }

    /// Concatenates rows; schemas and label spaces must agree.
    pub fn concat(&self, other: &Dataset) -> Result<Dataset> {
        if self.schema != other.schema || self.n_classes != other.n_classes {
            return Err(Error::Input(
                "cannot concatenate datasets with different schemas or label spaces".into(),
            ));
        }
        let features = ndarray::concatenate(Axis(0), &[self.features.view(), other.features.view()])
            .expect("widths agree");
        Ok(Dataset {
            features,
            targets: [self.targets.as_slice(), &other.targets].concat(),
            groups: [self.groups.as_slice(), &other.groups].concat(),
            n_classes: self.n_classes,
            split: self.split,
            schema: self.schema.clone(),
        })
    }
}
