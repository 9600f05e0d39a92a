use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::recipes::prepare;
use super::report::{aggregate, RunReport};
use super::train::train_prepared;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    Lambda,
    /// Width of the representation layer.
    RepWidth,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepCell {
    pub value: f64,
    pub reports: Vec<RunReport>,
    /// `(seed, message)` for runs that failed.
    pub errors: Vec<(u64, String)>,
    pub summary: BTreeMap<String, (f64, f64)>,
}

pub fn apply_axis(template: &ExperimentConfig, axis: SweepAxis, value: f64) -> Result<ExperimentConfig> {
    let mut cfg = template.clone();
    match axis {
        SweepAxis::Lambda => cfg.affinity.lambda = value,
        SweepAxis::RepWidth => {
            if value < 1.0 || value.fract() != 0.0 {
                return Err(Error::Config(format!("representation width {value} is not a positive integer")));
            }
            let i = cfg.architecture.representation_index;
            let slot = cfg
                .architecture
                .hidden
                .get_mut(i)
                .ok_or_else(|| Error::Config(format!("representation index {i} is not a hidden layer")))?;
            *slot = value as usize;
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

/// One multi-seed run per value. Failed runs are recorded in their cell and
/// the sweep moves on. Data are loaded once per seed and shared by all cells.
pub fn sweep(template: &ExperimentConfig, axis: SweepAxis, values: &[f64]) -> Result<Vec<SweepCell>> {
    if values.is_empty() {
        return Err(Error::Config("sweep needs at least one value".into()));
    }
    let configs = values
        .iter()
        .map(|&v| apply_axis(template, axis, v))
        .collect::<Result<Vec<_>>>()?;
    let mut cells: Vec<SweepCell> = values
        .iter()
        .map(|&value| SweepCell {
            value,
            reports: Vec::new(),
            errors: Vec::new(),
            summary: BTreeMap::new(),
        })
        .collect();
    for &seed in &template.seeds {
        let data = match prepare(template, seed) {
            Ok(d) => d,
            Err(e) => {
                for cell in &mut cells {
                    cell.errors.push((seed, e.to_string()));
                }
                continue;
            }
        };
        for (cell, cfg) in cells.iter_mut().zip(&configs) {
            match train_prepared(cfg, &data, seed, Instant::now()) {
                Ok((net, report)) => {
                    if let Some(dir) = &cfg.out_dir {
                        let run_dir = dir
                            .join(&cfg.name)
                            .join(format!("{}-{}", axis_tag(axis), cell.value))
                            .join(format!("seed-{seed}"));
                        report.write(&run_dir, Some(&net))?;
                    }
                    cell.reports.push(report);
                }
                Err(e) => {
                    log::warn!("sweep value {} seed {seed} failed: {e}", cell.value);
                    cell.errors.push((seed, e.to_string()));
                }
            }
        }
    }
    for cell in &mut cells {
        cell.summary = aggregate(&cell.reports);
    }
    if let Some(dir) = &template.out_dir {
        let path = dir.join(&template.name).join("sweep.csv");
        fs::create_dir_all(path.parent().expect("has parent")).map_err(|e| Error::io(dir, e))?;
        fs::write(&path, sweep_csv(axis, &cells)).map_err(|e| Error::io(&path, e))?;
    }
    Ok(cells)
}

pub fn axis_tag(axis: SweepAxis) -> &'static str {
    match axis {
        SweepAxis::Lambda => "lambda",
        SweepAxis::RepWidth => "rep_width",
    }
}

/// `axis value, metric, mean, std, runs, failures` rows.
pub fn sweep_csv(axis: SweepAxis, cells: &[SweepCell]) -> String {
    let mut s = format!("{},metric,mean,std,runs,failures\n", axis_tag(axis));
    for cell in cells {
        for (metric, (mean, std)) in &cell.summary {
            let _ = writeln!(
                s,
                "{},{metric},{mean},{std},{},{}",
                cell.value,
                cell.reports.len(),
                cell.errors.len()
            );
        }
        if cell.summary.is_empty() {
            let _ = writeln!(s, "{},none,,,0,{}", cell.value, cell.errors.len());
        }
    }
    s
}
