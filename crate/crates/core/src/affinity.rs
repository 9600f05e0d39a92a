//! Cross-group nearest-neighbor affinity regularizer.
//!
//! For anchor group `X1`, other group `X2` and the classes `Y` present among
//! the anchors of a mini-batch:
//!
//! ```text
//! l_affinity = 1 / (|Y| |X1|) * sum_y sum_{x1 in X1, y1 = y} min_{x2 in X2, y2 = y} |g(x1) - g(x2)|_1
//! ```
//!
//! The loss is zero exactly when every anchor representation coincides with
//! a same-class representation from the other group. Training minimizes
//! `l_target + lambda * l_affinity`.

use std::collections::BTreeSet;

use ndarray::{Array2, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::{Error, Result, Tensor2};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Distance {
    #[default]
    L1,
}

/// Which group anchors the (asymmetric) sum.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    /// Group 0 is `X1`.
    #[default]
    AnchorGroup0,
    /// Mean of the group-0-anchored and group-1-anchored losses.
    SymmetricMean,
}

/// Where the subgradient of each matched distance flows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum NeighborGradient {
    /// Anchor and matched neighbor are both pulled together.
    #[default]
    BothSides,
    /// Only the anchor moves; the neighbor is treated as a constant.
    AnchorOnly,
}

/// Divisor applied to the summed nearest-neighbor distances. `Y` is the set
/// of classes present among the anchors, `X1` the anchors and `X1y` the
/// anchors of class `y`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    /// `|Y| * |X1|`, the form written in the loss definition.
    #[default]
    ClassesTimesAnchors,
    /// `|X1|`: mean distance per anchor.
    Anchors,
    /// `|Y| * |X1y|` per class: mean over classes of per-class means.
    ClassMean,
    /// `|Y|` only.
    Classes,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AffinityConfig {
    pub lambda: f64,
    pub distance: Distance,
    pub class_conditional: bool,
    pub direction: Direction,
    pub neighbor_gradient: NeighborGradient,
    pub normalization: Normalization,
}

impl Default for AffinityConfig {
    fn default() -> Self {
        Self {
            lambda: 0.01,
            distance: Distance::L1,
            class_conditional: true,
            direction: Direction::AnchorGroup0,
            neighbor_gradient: NeighborGradient::BothSides,
            normalization: Normalization::ClassesTimesAnchors,
        }
    }
}

impl AffinityConfig {
    pub fn with_lambda(lambda: f64) -> Self {
        Self {
            lambda,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::Config(format!(
                "lambda must be a finite non-negative number, got {}",
                self.lambda
            )));
        }
        Ok(())
    }
}

/// Representations of one mini-batch with their labels and group ids.
#[derive(Debug, Clone, Copy)]
pub struct GroupedBatch<'a> {
    pub representations: ArrayView2<'a, f64>,
    pub labels: &'a [usize],
    pub groups: &'a [u8],
}

impl<'a> GroupedBatch<'a> {
    pub fn new(representations: &'a Tensor2, labels: &'a [usize], groups: &'a [u8]) -> Result<Self> {
        let n = representations.nrows();
        if labels.len() != n || groups.len() != n {
            return Err(Error::Input(format!(
                "batch has {n} representations, {} labels, {} groups",
                labels.len(),
                groups.len()
            )));
        }
        if n == 0 {
            return Err(Error::Input("empty batch".into()));
        }
        if representations.ncols() == 0 {
            return Err(Error::Input("representation width is zero".into()));
        }
        if let Some(row) = groups.iter().position(|&g| g > 1) {
            return Err(Error::Input(format!(
                "group id {} at row {row} is not binary",
                groups[row]
            )));
        }
        Ok(Self {
            representations: representations.view(),
            labels,
            groups,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MatchedPair {
    pub anchor: usize,
    pub neighbor: usize,
    pub distance: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AffinityResult {
    pub loss: f64,
    /// Gradient of `l_affinity` (not yet scaled by lambda).
    pub grad_at_representation: Tensor2,
    pub matched_pairs: Vec<MatchedPair>,
    pub skipped_classes: Vec<usize>,
    /// Set when one group is missing from the batch; the loss is then 0.
    pub group_absent: bool,
}

pub fn l1_distance(a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y).abs()).sum()
}

/// Row of `candidates` closest to `query` in L1; ties go to the lowest row.
pub fn nearest_neighbor_l1(query: ArrayView1<f64>, candidates: ArrayView2<f64>) -> Result<(usize, f64)> {
    if candidates.nrows() == 0 {
        return Err(Error::Input("no candidates for nearest-neighbor search".into()));
    }
    if candidates.ncols() != query.len() {
        return Err(Error::Input(format!(
            "query width {} does not match candidate width {}",
            query.len(),
            candidates.ncols()
        )));
    }
    let rows: Vec<usize> = (0..candidates.nrows()).collect();
    Ok(nearest_among(query, candidates, &rows).expect("non-empty"))
}

/// Nearest row among `rows` (ascending), returned as a row of `reps`.
fn nearest_among(query: ArrayView1<f64>, reps: ArrayView2<f64>, rows: &[usize]) -> Option<(usize, f64)> {
    let mut best: Option<(usize, f64)> = None;
    for &r in rows {
        let d = l1_distance(query, reps.row(r));
        if best.is_none_or(|(_, bd)| d < bd) {
            best = Some((r, d));
        }
    }
    best
}

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

pub fn affinity_loss(batch: &GroupedBatch<'_>, cfg: &AffinityConfig) -> Result<AffinityResult> {
    cfg.validate()?;
    if batch.is_empty() {
        return Err(Error::Input("empty batch".into()));
    }
    let reps = batch.representations;
    let mut grad = Array2::zeros(reps.raw_dim());
    let group_rows = |g: u8| -> Vec<usize> {
        (0..batch.len()).filter(|&i| batch.groups[i] == g).collect()
    };
    let rows = [group_rows(0), group_rows(1)];
    if rows[0].is_empty() || rows[1].is_empty() {
        return Ok(AffinityResult {
            loss: 0.0,
            grad_at_representation: grad,
            matched_pairs: Vec::new(),
            skipped_classes: Vec::new(),
            group_absent: true,
        });
    }

    let passes: &[(usize, f64)] = match cfg.direction {
        Direction::AnchorGroup0 => &[(0, 1.0)],
        Direction::SymmetricMean => &[(0, 0.5), (1, 0.5)],
    };
    let mut loss = 0.0;
    let mut pairs = Vec::new();
    let mut skipped = BTreeSet::new();
    for &(anchor_group, weight) in passes {
        let anchors = &rows[anchor_group];
        let others = &rows[1 - anchor_group];
        let classes: BTreeSet<usize> = anchors.iter().map(|&i| batch.labels[i]).collect();
        for &class in &classes {
            let in_class = anchors.iter().filter(|&&i| batch.labels[i] == class).count();
            let divisor = match cfg.normalization {
                Normalization::ClassesTimesAnchors => classes.len() * anchors.len(),
                Normalization::Anchors => anchors.len(),
                Normalization::ClassMean => classes.len() * in_class,
                Normalization::Classes => classes.len(),
            };
            let norm = weight / divisor as f64;
            let candidates: Vec<usize> = if cfg.class_conditional {
                others
                    .iter()
                    .copied()
                    .filter(|&i| batch.labels[i] == class)
                    .collect()
            } else {
                others.clone()
            };
            if candidates.is_empty() {
                skipped.insert(class);
                continue;
            }
            for &a in anchors.iter().filter(|&&i| batch.labels[i] == class) {
                let (n, d) = nearest_among(reps.row(a), reps, &candidates).expect("non-empty");
                loss += norm * d;
                for k in 0..reps.ncols() {
                    let s = norm * sign(reps[[a, k]] - reps[[n, k]]);
                    grad[[a, k]] += s;
                    if cfg.neighbor_gradient == NeighborGradient::BothSides {
                        grad[[n, k]] -= s;
                    }
                }
                pairs.push(MatchedPair {
                    anchor: a,
                    neighbor: n,
                    distance: d,
                });
            }
        }
    }
    Ok(AffinityResult {
        loss,
        grad_at_representation: grad,
        matched_pairs: pairs,
        skipped_classes: skipped.into_iter().collect(),
        group_absent: false,
    })
}

/// `l_target + lambda * l_affinity`.
pub fn combined_loss(target_loss: f64, affinity: &AffinityResult, lambda: f64) -> f64 {
    debug_assert!(lambda >= 0.0);
    target_loss + lambda * affinity.loss
}
