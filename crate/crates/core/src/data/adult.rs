//! UCI Adult census income.
//!
//! Continuous attributes are standardized with train-split statistics,
//! categorical attributes are one-hot encoded with an extra `unknown` column
//! for categories never seen in training. `sex` becomes the group id
//! (female = 0, male = 1) and is left out of the features unless
//! `exclude_sensitive` is off. The target is income `>50K`.

use std::fs;
use std::path::Path;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{Dataset, FeatureColumn, FeatureSchema, Split};
use crate::{Error, Result};

const COLUMNS: [&str; 15] = [
    "age",
    "workclass",
    "fnlwgt",
    "education",
    "education-num",
    "marital-status",
    "occupation",
    "relationship",
    "race",
    "sex",
    "capital-gain",
    "capital-loss",
    "hours-per-week",
    "native-country",
    "income",
];
const CONTINUOUS: [usize; 6] = [0, 2, 4, 10, 11, 12];
const CATEGORICAL: [usize; 7] = [1, 3, 5, 6, 7, 8, 13];
const SEX: usize = 9;
const INCOME: usize = 14;
const UNKNOWN: &str = "unknown";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum MissingPolicy {
    /// `?` is kept as its own category.
    #[default]
    AsCategory,
    DropRow,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdultConfig {
    pub exclude_sensitive: bool,
    pub missing: MissingPolicy,
    /// Fraction of the training file held out for validation.
    pub validation_fraction: f64,
    pub split_seed: u64,
}

impl Default for AdultConfig {
    fn default() -> Self {
        Self {
            exclude_sensitive: true,
            missing: MissingPolicy::AsCategory,
            validation_fraction: 0.2,
            split_seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ContinuousStats {
    column: usize,
    mean: f64,
    std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct CategoryList {
    column: usize,
    categories: Vec<String>,
}

/// Preprocessing fitted on the training split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdultSchema {
    version: u32,
    exclude_sensitive: bool,
    continuous: Vec<ContinuousStats>,
    categorical: Vec<CategoryList>,
}

#[derive(Debug, Clone)]
pub struct AdultRecord {
    fields: Vec<String>,
    line: usize,
}

#[derive(Debug, Clone)]
pub struct AdultSplits {
    pub train: Dataset,
    pub validation: Dataset,
    pub test: Dataset,
    pub schema: AdultSchema,
}

pub fn read_records(path: &Path, missing: MissingPolicy) -> Result<Vec<AdultRecord>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut records = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        // adult.test starts with a "|1x3 Cross validator" banner.
        if line.is_empty() || line.starts_with('|') {
            continue;
        }
        let fields: Vec<String> = line.split(',').map(|f| f.trim().to_string()).collect();
        if fields.len() != COLUMNS.len() {
            return Err(Error::Csv {
                path: path.to_path_buf(),
                line: i + 1,
                message: format!("expected {} fields, found {}", COLUMNS.len(), fields.len()),
            });
        }
        if missing == MissingPolicy::DropRow && fields.iter().any(|f| f == "?") {
            continue;
        }
        let record = AdultRecord { fields, line: i + 1 };
        record.validate(path)?;
        records.push(record);
    }
    Ok(records)
}

impl AdultRecord {
    fn validate(&self, path: &Path) -> Result<()> {
        let err = |message: String| Error::Csv {
            path: path.to_path_buf(),
            line: self.line,
            message,
        };
        for &c in &CONTINUOUS {
            if self.fields[c].parse::<f64>().is_err() {
                return Err(err(format!("{}: {:?} is not a number", COLUMNS[c], self.fields[c])));
            }
        }
        self.income().map_err(err)?;
        self.sex().map_err(err)?;
        Ok(())
    }

    fn number(&self, column: usize) -> f64 {
        self.fields[column].parse().expect("validated")
    }

    fn income(&self) -> std::result::Result<usize, String> {
        match self.fields[INCOME].trim_end_matches('.') {
            ">50K" => Ok(1),
            "<=50K" => Ok(0),
            other => Err(format!("unknown income label {other:?}")),
        }
    }

    fn sex(&self) -> std::result::Result<u8, String> {
        match self.fields[SEX].as_str() {
            "Female" => Ok(0),
            "Male" => Ok(1),
            other => Err(format!("unknown sex {other:?}")),
        }
    }
}

impl AdultSchema {
    pub fn fit(records: &[AdultRecord], exclude_sensitive: bool) -> Result<Self> {
        if records.is_empty() {
            return Err(Error::Input("cannot fit a schema on zero records".into()));
        }
        let n = records.len() as f64;
        let continuous = CONTINUOUS
            .iter()
            .map(|&column| {
                let mean = records.iter().map(|r| r.number(column)).sum::<f64>() / n;
                let var = records
                    .iter()
                    .map(|r| (r.number(column) - mean).powi(2))
                    .sum::<f64>()
                    / n;
                ContinuousStats {
                    column,
                    mean,
                    std: var.sqrt(),
                }
            })
            .collect();
        let mut cat_columns = CATEGORICAL.to_vec();
        if !exclude_sensitive {
            cat_columns.push(SEX);
        }
        let categorical = cat_columns
            .into_iter()
            .map(|column| {
                let mut categories: Vec<String> =
                    records.iter().map(|r| r.fields[column].clone()).collect();
                categories.sort();
                categories.dedup();
                CategoryList { column, categories }
            })
            .collect();
        Ok(Self {
            version: 1,
            exclude_sensitive,
            continuous,
            categorical,
        })
    }

    pub fn columns(&self) -> Vec<FeatureColumn> {
        let mut cols: Vec<FeatureColumn> = self
            .continuous
            .iter()
            .map(|c| FeatureColumn::Continuous {
                name: COLUMNS[c.column].to_string(),
            })
            .collect();
        for cat in &self.categorical {
            for value in cat.categories.iter().map(String::as_str).chain([UNKNOWN]) {
                cols.push(FeatureColumn::OneHot {
                    attribute: COLUMNS[cat.column].to_string(),
                    category: value.to_string(),
                });
            }
        }
        cols
    }

    pub fn width(&self) -> usize {
        self.continuous.len()
            + self
                .categorical
                .iter()
                .map(|c| c.categories.len() + 1)
                .sum::<usize>()
    }

    pub fn encode(&self, records: &[AdultRecord], split: Split) -> Result<Dataset> {
        let width = self.width();
        let mut features = Array2::zeros((records.len(), width));
        for (i, r) in records.iter().enumerate() {
            let mut col = 0;
            for c in &self.continuous {
                let scale = if c.std > 0.0 { c.std } else { 1.0 };
                features[[i, col]] = (r.number(c.column) - c.mean) / scale;
                col += 1;
            }
            for cat in &self.categorical {
                let slot = cat
                    .categories
                    .binary_search(&r.fields[cat.column])
                    .unwrap_or(cat.categories.len());
                features[[i, col + slot]] = 1.0;
                col += cat.categories.len() + 1;
            }
        }
        let targets = records.iter().map(|r| r.income().expect("validated")).collect();
        let groups = records.iter().map(|r| r.sex().expect("validated")).collect();
        Dataset::new(
            features,
            targets,
            groups,
            2,
            split,
            FeatureSchema::Tabular(self.columns()),
        )
    }

    /// SHA-256 over the serialized schema, hex encoded.
    pub fn checksum(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("schema serializes");
        Sha256::digest(&bytes)
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}

/// Loads one Adult file with a schema fitted on that same file.
pub fn load_adult_csv(path: &Path, cfg: &AdultConfig, split: Split) -> Result<(Dataset, AdultSchema)> {
    let records = read_records(path, cfg.missing)?;
    let schema = AdultSchema::fit(&records, cfg.exclude_sensitive)?;
    Ok((schema.encode(&records, split)?, schema))
}

/// Loads `adult.data` and `adult.test`, holds out a seeded validation
/// fraction of the former, and fits the schema on the remaining train rows.
pub fn load_adult(train_file: &Path, test_file: &Path, cfg: &AdultConfig) -> Result<AdultSplits> {
    if !(0.0..1.0).contains(&cfg.validation_fraction) {
        return Err(Error::Config(format!(
            "validation fraction {} outside [0, 1)",
            cfg.validation_fraction
        )));
    }
    let mut pool = read_records(train_file, cfg.missing)?;
    let test_records = read_records(test_file, cfg.missing)?;
    pool.shuffle(&mut ChaCha8Rng::seed_from_u64(cfg.split_seed));
    let n_train = (pool.len() as f64 * (1.0 - cfg.validation_fraction)).ceil() as usize;
    let validation_records = pool.split_off(n_train);
    let schema = AdultSchema::fit(&pool, cfg.exclude_sensitive)?;
    Ok(AdultSplits {
        train: schema.encode(&pool, Split::Train)?,
        validation: schema.encode(&validation_records, Split::Validation)?,
        test: schema.encode(&test_records, Split::Test)?,
        schema,
    })
}
