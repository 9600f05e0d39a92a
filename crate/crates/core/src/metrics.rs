//! Accuracy and group-fairness gaps over binary group ids.
//!
//! Gaps are absolute differences between group 0 and group 1. A stratum with
//! no records makes a gap undefined and is reported as an error.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EvalRecordSet {
    pub predictions: Vec<usize>,
    pub truths: Vec<usize>,
    pub groups: Vec<u8>,
}

impl EvalRecordSet {
    pub fn new(predictions: Vec<usize>, truths: Vec<usize>, groups: Vec<u8>) -> Result<Self> {
        if predictions.len() != truths.len() || truths.len() != groups.len() {
            return Err(Error::Input(format!(
                "{} predictions, {} truths, {} groups",
                predictions.len(),
                truths.len(),
                groups.len()
            )));
        }
        if let Some(g) = groups.iter().find(|&&g| g > 1) {
            return Err(Error::Input(format!("group id {g} is not binary")));
        }
        Ok(Self {
            predictions,
            truths,
            groups,
        })
    }

    pub fn len(&self) -> usize {
        self.truths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.truths.is_empty()
    }

    pub fn is_binary(&self) -> bool {
        self.predictions.iter().chain(&self.truths).all(|&v| v <= 1)
    }

    fn require_binary(&self) -> Result<()> {
        if self.is_binary() {
            Ok(())
        } else {
            Err(Error::Input(
                "fairness gaps need binary predictions and truths".into(),
            ))
        }
    }

    fn records(&self) -> impl Iterator<Item = (usize, usize, u8)> + '_ {
        self.predictions
            .iter()
            .zip(&self.truths)
            .zip(&self.groups)
            .map(|((&p, &t), &g)| (p, t, g))
    }

    /// `P(pred = 1 | group, truth = condition)`; `truth = None` conditions on
    /// the group only.
    fn positive_rate(&self, group: u8, truth: Option<usize>, stratum: &str) -> Result<f64> {
        let (hits, total) = self
            .records()
            .filter(|&(_, t, g)| g == group && truth.is_none_or(|c| t == c))
            .fold((0usize, 0usize), |(h, n), (p, _, _)| (h + (p == 1) as usize, n + 1));
        if total == 0 {
            return Err(Error::UndefinedMetric(format!(
                "group {group} has no {stratum}"
            )));
        }
        Ok(hits as f64 / total as f64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FairnessReport {
    pub accuracy: f64,
    pub parity_gap: f64,
    pub equality_gap_tpr: f64,
    pub equality_gap_tnr: f64,
    pub per_group_accuracy: [f64; 2],
    pub per_group_positive_rate: [f64; 2],
}

pub fn accuracy(records: &EvalRecordSet) -> Result<f64> {
    if records.is_empty() {
        return Err(Error::UndefinedMetric("no records".into()));
    }
    let correct = records.records().filter(|&(p, t, _)| p == t).count();
    Ok(correct as f64 / records.len() as f64)
}

/// `|TPR(z=0) - TPR(z=1)|`.
pub fn equality_gap(records: &EvalRecordSet) -> Result<f64> {
    records.require_binary()?;
    let a = records.positive_rate(0, Some(1), "positive truths")?;
    let b = records.positive_rate(1, Some(1), "positive truths")?;
    Ok((a - b).abs())
}

/// `|TNR(z=0) - TNR(z=1)|`.
pub fn tnr_gap(records: &EvalRecordSet) -> Result<f64> {
    records.require_binary()?;
    // TNR = 1 - FPR, so the gap equals the false-positive-rate gap.
    let a = records.positive_rate(0, Some(0), "negative truths")?;
    let b = records.positive_rate(1, Some(0), "negative truths")?;
    Ok((a - b).abs())
}

/// `|P(pred=1 | z=0) - P(pred=1 | z=1)|`.
pub fn parity_gap(records: &EvalRecordSet) -> Result<f64> {
    records.require_binary()?;
    let a = records.positive_rate(0, None, "records")?;
    let b = records.positive_rate(1, None, "records")?;
    Ok((a - b).abs())
}

pub fn per_group_accuracy(records: &EvalRecordSet) -> Result<[f64; 2]> {
    let mut out = [0.0; 2];
    for (group, slot) in out.iter_mut().enumerate() {
        let (correct, total) = records
            .records()
            .filter(|&(_, _, g)| g as usize == group)
            .fold((0usize, 0usize), |(c, n), (p, t, _)| (c + (p == t) as usize, n + 1));
        if total == 0 {
            return Err(Error::UndefinedMetric(format!("group {group} has no records")));
        }
        *slot = correct as f64 / total as f64;
    }
    Ok(out)
}

pub fn fairness_report(records: &EvalRecordSet) -> Result<FairnessReport> {
    Ok(FairnessReport {
        accuracy: accuracy(records)?,
        parity_gap: parity_gap(records)?,
        equality_gap_tpr: equality_gap(records)?,
        equality_gap_tnr: tnr_gap(records)?,
        per_group_accuracy: per_group_accuracy(records)?,
        per_group_positive_rate: [
            records.positive_rate(0, None, "records")?,
            records.positive_rate(1, None, "records")?,
        ],
    })
}
