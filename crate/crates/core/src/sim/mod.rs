//! Simulation experiments driven by a TOML spec file.
//!
//! ```toml
//! name = "signflip-sbm"
//! experiment = "signflip_vs_rotation"   # or "overlay", "power"
//! seed = 7
//! trials = 100
//! n_grid = [300]
//! output_dir = "results/signflip-sbm"
//!
//! [test]                  # optional, every field has a default
//! permutations = 500
//!
//! [null]
//! kind = "sbm"
//! b = [[0.5, 0.8, 0.8], [0.8, 0.5, 0.8], [0.8, 0.8, 0.5]]
//!
//! # power studies only: one curve per entry, plus the null row
//! [[alternatives]]
//! label = "eps=0.2"
//! diagonal_shift = 0.2
//!
//! [[alternatives]]
//! label = "beta=0.3"
//! [alternatives.model]
//! kind = "dcsbm"
//! b = [[0.5, 0.8, 0.8], [0.8, 0.5, 0.8], [0.8, 0.8, 0.5]]
//! theta = { law = "affine_uniform", scale = 0.3, offset = 0.7 }
//! ```
//!
//! Every trial draws its seeds from `(seed, n, trial)` alone, so trials can
//! run in any order and a spec file always reproduces the same CSVs.

mod overlay;
mod power;
mod signflip;
pub mod svg;

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::hypothesis::{
    default_alpha, default_eps_scale, default_max_outer, default_permutations, default_restarts, NullScheme,
    TestConfig,
};
use crate::mmd::KernelSpec;
use crate::models::{LatentConfig, Signature};
use crate::{Error, Result};

pub use overlay::{experiment_overlay, overlay_trial, OverlayMethod, OverlayPoint, OverlaySummary, OverlayTrial};
pub use power::{experiment_power, power_records, power_summary, PowerRecord, PowerSummary};
pub use signflip::{
    compare_alignments, comparison_records, experiment_signflip_vs_rotation, signflip_summary, signflip_trial,
    ComparisonRecord, SignflipSummary,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    SignflipVsRotation,
    Overlay,
    Power,
}

/// Test settings shared by every trial; the signature comes from the null
/// model and the seed from the trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TestOptions {
    #[serde(default)]
    pub kernel: KernelSpec,
    #[serde(default = "default_permutations")]
    pub permutations: usize,
    #[serde(default = "default_eps_scale")]
    pub eps_scale: f64,
    #[serde(default = "default_restarts")]
    pub restarts: usize,
    #[serde(default = "default_max_outer")]
    pub max_outer: usize,
    #[serde(default = "default_alpha")]
    pub alpha_level: f64,
    #[serde(default)]
    pub null: NullScheme,
}

impl Default for TestOptions {
    fn default() -> Self {
        Self {
            kernel: KernelSpec::default(),
            permutations: default_permutations(),
            eps_scale: default_eps_scale(),
            restarts: default_restarts(),
            max_outer: default_max_outer(),
            alpha_level: default_alpha(),
            null: NullScheme::Permutation,
        }
    }
}

impl TestOptions {
    pub fn config(&self, signature: Signature, seed: u64) -> TestConfig {
        TestConfig {
            kernel: self.kernel,
            signature,
            permutations: self.permutations,
            eps_scale: self.eps_scale,
            restarts: self.restarts,
            max_outer: self.max_outer,
            alpha_level: self.alpha_level,
            seed,
            null: self.null,
        }
    }
}

/// A labelled alternative: either the null model with `diagonal_shift`
/// added to its block matrix, or a model of its own.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Alternative {
    pub label: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diagonal_shift: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<LatentConfig>,
}

impl Alternative {
    pub fn resolve(&self, null: &LatentConfig) -> Result<LatentConfig> {
        match (self.diagonal_shift, &self.model) {
            (Some(delta), None) => null.with_diagonal_shift(delta),
            (None, Some(model)) => {
                model.validate()?;
                Ok(model.clone())
            }
            _ => Err(Error::Config(format!(
                "alternative `{}` needs exactly one of `diagonal_shift` and `model`",
                self.label
            ))),
        }
    }
}

fn default_trials() -> usize {
    100
}
fn default_n_grid() -> Vec<usize> {
    vec![300]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub name: String,
    pub experiment: ExperimentKind,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default = "default_n_grid")]
    pub n_grid: Vec<usize>,
    pub output_dir: PathBuf,
    #[serde(default)]
    pub test: TestOptions,
    pub null: LatentConfig,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub alternatives: Vec<Alternative>,
}

impl ExperimentSpec {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let spec: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    /// Load a spec; a relative `output_dir` is taken relative to the spec
    /// file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let mut spec = Self::from_toml_str(&fs::read_to_string(path)?)?;
        if spec.output_dir.is_relative() {
            if let Some(parent) = path.parent() {
                spec.output_dir = parent.join(&spec.output_dir);
            }
        }
        Ok(spec)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::Config("trials must be at least 1".into()));
        }
        if self.n_grid.is_empty() || self.n_grid.contains(&0) {
            return Err(Error::Config("n_grid must list positive graph sizes".into()));
        }
        self.null.validate()?;
        self.test.config(self.null.signature()?, self.seed).validate()?;
        for alt in &self.alternatives {
            alt.resolve(&self.null)?;
        }
        Ok(())
    }

    pub fn signature(&self) -> Result<Signature> {
        self.null.signature()
    }
}

/// Files written by one experiment run.
#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub dir: PathBuf,
    pub records: PathBuf,
    pub summary: PathBuf,
    pub plots: Vec<PathBuf>,
    pub manifest: PathBuf,
}

/// Run the experiment named in `spec` and write its output directory.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentOutput> {
    spec.validate()?;
    match spec.experiment {
        ExperimentKind::SignflipVsRotation => experiment_signflip_vs_rotation(spec),
        ExperimentKind::Overlay => experiment_overlay(spec),
        ExperimentKind::Power => experiment_power(spec),
    }
}

#[derive(Serialize)]
struct Manifest<'a> {
    name: &'a str,
    library_version: &'a str,
    seed: u64,
    spec: &'a ExperimentSpec,
    trials: Vec<TrialSeeds>,
}

#[derive(Serialize)]
struct TrialSeeds {
    n: usize,
    trial: usize,
    graph1: u64,
    graph2: u64,
    test: u64,
}

fn prepare_dir(spec: &ExperimentSpec) -> Result<PathBuf> {
    let dir = spec.output_dir.clone();
    fs::create_dir_all(&dir)?;
    Ok(dir)
}

fn write_manifest(spec: &ExperimentSpec, dir: &Path) -> Result<PathBuf> {
    let trials = spec
        .n_grid
        .iter()
        .flat_map(|&n| {
            (0..spec.trials).map(move |t| {
                let (graph1, graph2, test) = crate::hypothesis::trial_seeds(spec.seed, n, t);
                TrialSeeds { n, trial: t, graph1, graph2, test }
            })
        })
        .collect();
    let manifest = Manifest {
        name: &spec.name,
        library_version: env!("CARGO_PKG_VERSION"),
        seed: spec.seed,
        spec,
        trials,
    };
    let path = dir.join("manifest.toml");
    fs::write(&path, toml::to_string(&manifest).map_err(|e| Error::Config(e.to_string()))?)?;
    Ok(path)
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

fn read_csv<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    const SPEC: &str = r#"
name = "power"
experiment = "power"
trials = 3
n_grid = [40, 60]
output_dir = "out"

[test]
permutations = 20

[null]
kind = "sbm"
b = [[0.5, 0.8, 0.8], [0.8, 0.5, 0.8], [0.8, 0.8, 0.5]]

[[alternatives]]
label = "eps=0.2"
diagonal_shift = 0.2

[[alternatives]]
label = "beta=0.3"
[alternatives.model]
kind = "dcsbm"
b = [[0.5, 0.8, 0.8], [0.8, 0.5, 0.8], [0.8, 0.8, 0.5]]
theta = { law = "affine_uniform", scale = 0.3, offset = 0.7 }
"#;

    #[test]
    fn spec_round_trips() {
        let spec = ExperimentSpec::from_toml_str(SPEC).unwrap();
        assert_eq!(spec.experiment, ExperimentKind::Power);
        assert_eq!(spec.test.permutations, 20);
        assert_eq!(spec.test.restarts, 8);
        assert_eq!(spec.alternatives.len(), 2);
        let back = ExperimentSpec::from_toml_str(&spec.to_toml_string().unwrap()).unwrap();
        assert_eq!(back, spec);
    }

    #[test]
    fn spec_validation() {
        assert!(ExperimentSpec::from_toml_str(&SPEC.replace("trials = 3", "trials = 0")).is_err());
        assert!(ExperimentSpec::from_toml_str(&SPEC.replace("n_grid = [40, 60]", "n_grid = []")).is_err());
        assert!(ExperimentSpec::from_toml_str(&SPEC.replace("permutations = 20", "permutation = 20")).is_err());
        let both = SPEC.replace("label = \"beta=0.3\"", "label = \"beta=0.3\"\ndiagonal_shift = 0.1");
        assert!(ExperimentSpec::from_toml_str(&both).is_err());
    }
}
