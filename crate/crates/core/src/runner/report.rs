//! Run reports as flat `key=value` text plus CSV tables.
//!
//! A run directory holds `report.txt`, `epochs.csv`, `config.toml`, and when
//! present `histogram_r.csv` and `network.json`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::train::EpochLog;
use crate::interpret::{HistogramPair, Influence, ReattachedHead};
use crate::metrics::FairnessReport;
use crate::nn::{checkpoint, Network};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbeSummary {
    pub target_accuracy: f64,
    pub sensitive_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReattachSummary {
    pub with_z: FairnessReport,
    pub without_z: FairnessReport,
    pub influence: Influence,
    pub head: ReattachedHead,
    pub histogram: HistogramPair,
    pub overlap: f64,
    pub independence_warning: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub name: String,
    pub recipe: String,
    pub seed: u64,
    pub lambda: f64,
    pub config_snapshot: String,
    pub epochs: Vec<EpochLog>,
    pub accuracy: f64,
    pub per_group_accuracy: Option<[f64; 2]>,
    pub fairness: Option<FairnessReport>,
    pub probe: Option<ProbeSummary>,
    pub reattached: Option<ReattachSummary>,
    pub notes: Vec<String>,
    pub wall_clock_secs: f64,
}

fn put_fairness(out: &mut BTreeMap<String, f64>, prefix: &str, f: &FairnessReport) {
    out.insert(format!("{prefix}accuracy"), f.accuracy);
    out.insert(format!("{prefix}parity_gap"), f.parity_gap);
    out.insert(format!("{prefix}equality_gap"), f.equality_gap_tpr);
    out.insert(format!("{prefix}equality_gap_tnr"), f.equality_gap_tnr);
    for g in 0..2 {
        out.insert(format!("{prefix}accuracy_group{g}"), f.per_group_accuracy[g]);
        out.insert(format!("{prefix}positive_rate_group{g}"), f.per_group_positive_rate[g]);
    }
}

impl RunReport {
    /// Every reported number except wall-clock time.
    pub fn core_metrics(&self) -> BTreeMap<String, f64> {
        let mut out = BTreeMap::new();
        out.insert("accuracy".into(), self.accuracy);
        out.insert("lambda".into(), self.lambda);
        if let Some([a, b]) = self.per_group_accuracy {
            out.insert("accuracy_group0".into(), a);
            out.insert("accuracy_group1".into(), b);
        }
        if let Some(f) = &self.fairness {
            put_fairness(&mut out, "", f);
        }
        if let Some(p) = &self.probe {
            out.insert("probe_target_accuracy".into(), p.target_accuracy);
            out.insert("probe_sensitive_accuracy".into(), p.sensitive_accuracy);
        }
        if let Some(r) = &self.reattached {
            put_fairness(&mut out, "reattached_", &r.with_z);
            put_fairness(&mut out, "head_without_z_", &r.without_z);
            out.insert("influence_w_r".into(), r.influence.w_r);
            out.insert("influence_w_z".into(), r.influence.w_z);
            out.insert("influence_ratio".into(), r.influence.ratio);
            out.insert("histogram_overlap".into(), r.overlap);
        }
        if let Some(last) = self.epochs.last() {
            out.insert("final_target_loss".into(), last.target_loss);
            out.insert("final_affinity_loss".into(), last.affinity_loss);
            out.insert("final_total_loss".into(), last.total_loss);
        }
        out
    }

    pub fn to_key_values(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "name={}", self.name);
        let _ = writeln!(s, "recipe={}", self.recipe);
        let _ = writeln!(s, "seed={}", self.seed);
        let _ = writeln!(s, "epochs={}", self.epochs.len());
        let _ = writeln!(s, "eval_split=test");
        for (k, v) in self.core_metrics() {
            let _ = writeln!(s, "{k}={v}");
        }
        if let Some(w) = self.reattached.as_ref().and_then(|r| r.independence_warning.as_ref()) {
            let _ = writeln!(s, "warning={w}");
        }
        for note in &self.notes {
            let _ = writeln!(s, "note={note}");
        }
        let _ = writeln!(s, "wall_clock_secs={:.3}", self.wall_clock_secs);
        s
    }

    pub fn epochs_csv(&self) -> String {
        let mut s = String::from("epoch,target_loss,affinity_loss,total_loss\n");
        for e in &self.epochs {
            let _ = writeln!(s, "{},{},{},{}", e.epoch, e.target_loss, e.affinity_loss, e.total_loss);
        }
        s
    }

    pub fn write(&self, dir: &Path, net: Option<&Network>) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let put = |name: &str, text: &str| {
            let path = dir.join(name);
            fs::write(&path, text).map_err(|e| Error::io(&path, e))
        };
        put("report.txt", &self.to_key_values())?;
        put("epochs.csv", &self.epochs_csv())?;
        put("config.toml", &self.config_snapshot)?;
        if let Some(r) = &self.reattached {
            put("histogram_r.csv", &histogram_csv(&r.histogram))?;
            put("reattached_head.json", &serde_json::to_string_pretty(&r.head)?)?;
        }
        if let Some(net) = net {
            checkpoint::save(net, &dir.join("network.json"))?;
        }
        Ok(())
    }
}

pub fn histogram_csv(h: &HistogramPair) -> String {
    let mut s = String::from("bin_low,bin_high,count_group0,count_group1\n");
    for (i, pair) in h.edges.windows(2).enumerate() {
        let _ = writeln!(s, "{},{},{},{}", pair[0], pair[1], h.counts[0][i], h.counts[1][i]);
    }
    s
}

/// Mean and sample standard deviation (0 for a single value).
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Per-metric mean and standard deviation across runs.
pub fn aggregate(reports: &[RunReport]) -> BTreeMap<String, (f64, f64)> {
    let mut columns: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for r in reports {
        for (k, v) in r.core_metrics() {
            columns.entry(k).or_default().push(v);
        }
    }
    columns.into_iter().map(|(k, v)| (k, mean_std(&v))).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mean_std_of_known_values() {
        let (m, s) = mean_std(&[2.0, 4.0, 4.0, 4.0, 5.0, 5.0, 7.0, 9.0]);
        assert_eq!(m, 5.0);
        assert!((s - (32.0f64 / 7.0).sqrt()).abs() < 1e-12);
        assert_eq!(mean_std(&[3.0]), (3.0, 0.0));
    }

    #[test]
    fn histogram_csv_has_one_line_per_bin() {
        let h = HistogramPair {
            edges: vec![0.0, 1.0, 2.0],
            counts: [vec![1, 2], vec![3, 0]],
        };
        let csv = histogram_csv(&h);
        assert_eq!(csv.lines().count(), 3);
        assert!(csv.ends_with("1,2,2,0\n"));
    }
}
