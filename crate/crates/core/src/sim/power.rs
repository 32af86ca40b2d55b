//! Rejection rates of the full test across graph sizes and alternatives.

use std::fs;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::svg::{Chart, Mark, Series};
use super::{prepare_dir, read_csv, write_csv, write_manifest, ExperimentOutput, ExperimentSpec};
use crate::hypothesis::{run_test, trial_seeds};
use crate::models::LatentConfig;
use crate::Result;

pub const NULL_LABEL: &str = "null";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerRecord {
    pub setting: String,
    pub n: usize,
    pub trial: usize,
    pub seed: u64,
    pub statistic: f64,
    pub p_value: f64,
    pub reject: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerSummary {
    pub setting: String,
    pub n: usize,
    pub trials: usize,
    pub rejections: usize,
    pub rate: f64,
    /// Binomial standard error of `rate`.
    pub se: f64,
}

/// Every (setting, n, trial) test. The first graph always comes from the
/// null model and the second from the setting's model; the null row uses
/// the null model for both.
pub fn power_records(spec: &ExperimentSpec) -> Result<Vec<PowerRecord>> {
    let mut settings: Vec<(String, LatentConfig)> = vec![(NULL_LABEL.to_string(), spec.null.clone())];
    for alt in &spec.alternatives {
        settings.push((alt.label.clone(), alt.resolve(&spec.null)?));
    }
    let sig = spec.signature()?;
    let jobs: Vec<(usize, usize, usize)> = (0..settings.len())
        .flat_map(|s| spec.n_grid.iter().flat_map(move |&n| (0..spec.trials).map(move |t| (s, n, t))))
        .collect();
    jobs.par_iter()
        .map(|&(s, n, t)| {
            let (label, model) = &settings[s];
            let (s1, s2, s3) = trial_seeds(spec.seed, n, t);
            let (_, g1) = spec.null.sample(n, s1)?;
            let (_, g2) = model.sample(n, s2)?;
            let res = run_test(&g1, &g2, &spec.test.config(sig, s3))?;
            Ok(PowerRecord {
                setting: label.clone(),
                n,
                trial: t,
                seed: s3,
                statistic: res.statistic,
                p_value: res.p_value,
                reject: res.reject,
            })
        })
        .collect()
}

/// Rejection rate per (setting, n), in order of first appearance.
pub fn power_summary(records: &[PowerRecord]) -> Vec<PowerSummary> {
    let mut keys: Vec<(String, usize)> = Vec::new();
    for r in records {
        if !keys.iter().any(|(s, n)| *s == r.setting && *n == r.n) {
            keys.push((r.setting.clone(), r.n));
        }
    }
    keys.into_iter()
        .map(|(setting, n)| {
            let rows: Vec<&PowerRecord> = records.iter().filter(|r| r.setting == setting && r.n == n).collect();
            let trials = rows.len();
            let rejections = rows.iter().filter(|r| r.reject).count();
            let rate = rejections as f64 / trials as f64;
            PowerSummary {
                setting,
                n,
                trials,
                rejections,
                rate,
                se: (rate * (1.0 - rate) / trials as f64).sqrt(),
            }
        })
        .collect()
}

fn power_chart(spec: &ExperimentSpec, summary: &[PowerSummary]) -> Chart {
    let mut labels: Vec<&str> = Vec::new();
    for s in summary {
        if !labels.contains(&s.setting.as_str()) {
            labels.push(&s.setting);
        }
    }
    let series = labels
        .iter()
        .enumerate()
        .map(|(i, label)| Series {
            label: label.to_string(),
            points: summary.iter().filter(|s| s.setting == *label).map(|s| (s.n as f64, s.rate)).collect(),
            mark: Mark::Line,
            color: i,
        })
        .collect();
    Chart {
        title: format!("{}: rejection rate at level {}", spec.name, spec.test.alpha_level),
        x_label: "n".into(),
        y_label: "rejection rate".into(),
        series,
        vlines: Vec::new(),
        y_range: Some((0.0, 1.0)),
    }
}

pub fn experiment_power(spec: &ExperimentSpec) -> Result<ExperimentOutput> {
    let records = power_records(spec)?;
    let dir = prepare_dir(spec)?;
    let records_path = dir.join("records.csv");
    write_csv(&records_path, &records)?;

    let records: Vec<PowerRecord> = read_csv(&records_path)?;
    let summary = power_summary(&records);
    let summary_path = dir.join("summary.csv");
    write_csv(&summary_path, &summary)?;
    let plot = dir.join("power.svg");
    fs::write(&plot, power_chart(spec, &summary).render())?;
    Ok(ExperimentOutput {
        manifest: write_manifest(spec, &dir)?,
        dir,
        records: records_path,
        summary: summary_path,
        plots: vec![plot],
    })
}
