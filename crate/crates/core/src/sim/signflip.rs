//! Best sign flip against full block-orthogonal alignment.

use std::fs;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::svg::{density, Chart, Mark, Series};
use super::{prepare_dir, read_csv, write_csv, write_manifest, ExperimentOutput, ExperimentSpec, TestOptions};
use crate::hypothesis::{embed_pair, trial_seeds};
use crate::linalg::median_in_place;
use crate::mmd::{u_statistic, KernelSpec};
use crate::models::{LatentConfig, Signature};
use crate::ot::{align, best_sign_flip, AlignmentResult};
use crate::rng::derive_seed;
use crate::stats::wilcoxon_signed_rank;
use crate::Result;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRecord {
    pub n: usize,
    pub trial: usize,
    pub seed: u64,
    pub u_signflip: f64,
    pub u_rotation: f64,
    /// `u_signflip - u_rotation`.
    pub difference: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SignflipSummary {
    pub n: usize,
    pub trials: usize,
    pub median_difference: f64,
    pub positive_fraction: f64,
    pub wilcoxon_w_plus: f64,
    pub wilcoxon_z: f64,
    pub wilcoxon_p: f64,
}

/// `(U_signflip, U_rotation)` for an already computed alignment of `y` to
/// `x`. Both are scored with the same kernel, fixed on the pooled unaligned
/// sample with the seed the alignment used.
pub fn compare_alignments(
    x: &DMatrix<f64>,
    y: &DMatrix<f64>,
    sig: Signature,
    alignment: &AlignmentResult,
    spec: &KernelSpec,
    align_seed: u64,
) -> Result<(f64, f64)> {
    let (_, kernel, flip) = best_sign_flip(x, y, sig, spec, align_seed)?;
    let rotated = u_statistic(&kernel, x, &alignment.w.apply(y))?;
    Ok((flip.u_stat, rotated.u_stat))
}

/// One trial: two independent graphs from `model`, embedded, then scored
/// under the best sign flip and under the full alignment.
pub fn signflip_trial(
    model: &LatentConfig,
    n: usize,
    master_seed: u64,
    trial: usize,
    opts: &TestOptions,
) -> Result<ComparisonRecord> {
    let (s1, s2, s3) = trial_seeds(master_seed, n, trial);
    let sig = model.signature()?;
    let (_, g1) = model.sample(n, s1)?;
    let (_, g2) = model.sample(n, s2)?;
    let (x, y, _) = embed_pair(&g1, &g2, sig, None)?;
    // same seed derivation as the full test, so trials line up with it
    let align_seed = derive_seed(s3, &[0]);
    let alignment = align(&x, &y, sig, &opts.config(sig, s3).align_params(), align_seed)?;
    let (u_signflip, u_rotation) = compare_alignments(&x, &y, sig, &alignment, &opts.kernel, align_seed)?;
    Ok(ComparisonRecord {
        n,
        trial,
        seed: s3,
        u_signflip,
        u_rotation,
        difference: u_signflip - u_rotation,
    })
}

pub fn comparison_records(spec: &ExperimentSpec) -> Result<Vec<ComparisonRecord>> {
    let jobs: Vec<(usize, usize)> = spec.n_grid.iter().flat_map(|&n| (0..spec.trials).map(move |t| (n, t))).collect();
    jobs.par_iter()
        .map(|&(n, t)| signflip_trial(&spec.null, n, spec.seed, t, &spec.test))
        .collect()
}

/// Per-`n` Wilcoxon summary of the differences, in `n` order of first
/// appearance.
pub fn signflip_summary(records: &[ComparisonRecord]) -> Result<Vec<SignflipSummary>> {
    let mut sizes: Vec<usize> = Vec::new();
    for r in records {
        if !sizes.contains(&r.n) {
            sizes.push(r.n);
        }
    }
    sizes
        .into_iter()
        .map(|n| {
            let mut diffs: Vec<f64> = records.iter().filter(|r| r.n == n).map(|r| r.difference).collect();
            let w = wilcoxon_signed_rank(&diffs)?;
            let positive = diffs.iter().filter(|&&d| d > 0.0).count();
            let trials = diffs.len();
            Ok(SignflipSummary {
                n,
                trials,
                median_difference: median_in_place(&mut diffs).unwrap_or(f64::NAN),
                positive_fraction: positive as f64 / trials as f64,
                wilcoxon_w_plus: w.w_plus,
                wilcoxon_z: w.z,
                wilcoxon_p: w.p_value,
            })
        })
        .collect()
}

fn density_chart(spec: &ExperimentSpec, records: &[ComparisonRecord]) -> Chart {
    let mut sizes: Vec<usize> = records.iter().map(|r| r.n).collect();
    sizes.dedup();
    let series = sizes
        .iter()
        .enumerate()
        .map(|(i, &n)| {
            let diffs: Vec<f64> = records.iter().filter(|r| r.n == n).map(|r| r.difference).collect();
            Series {
                label: format!("n = {n}"),
                points: density(&diffs, 200),
                mark: Mark::Line,
                color: i,
            }
        })
        .collect();
    Chart {
        title: format!("{}: U(sign flip) - U(rotation)", spec.name),
        x_label: "difference".into(),
        y_label: "density".into(),
        series,
        vlines: vec![0.0],
        y_range: None,
    }
}

pub fn experiment_signflip_vs_rotation(spec: &ExperimentSpec) -> Result<ExperimentOutput> {
    let records = comparison_records(spec)?;
    let dir = prepare_dir(spec)?;
    let records_path = dir.join("records.csv");
    write_csv(&records_path, &records)?;

    // plots and summaries are computed from the file, not the in-memory rows
    let records: Vec<ComparisonRecord> = read_csv(&records_path)?;
    let summary_path = dir.join("summary.csv");
    write_csv(&summary_path, &signflip_summary(&records)?)?;
    let plot = dir.join("differences.svg");
    fs::write(&plot, density_chart(spec, &records).render())?;

    Ok(ExperimentOutput {
        manifest: write_manifest(spec, &dir)?,
        dir,
        records: records_path,
        summary: summary_path,
        plots: vec![plot],
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hypothesis::{run_test, TestConfig};
    use crate::mmd::Kernel;

    fn sbm() -> LatentConfig {
        LatentConfig::sbm(
            &DMatrix::from_row_slice(3, 3, &[0.5, 0.8, 0.8, 0.8, 0.5, 0.8, 0.8, 0.8, 0.5]),
            None,
        )
    }

    fn quick() -> TestOptions {
        TestOptions {
            permutations: 20,
            restarts: 2,
            ..TestOptions::default()
        }
    }

    #[test]
    fn same_graph_twice_never_favours_the_sign_flip() {
        let model = sbm();
        let sig = model.signature().unwrap();
        let (_, g) = model.sample(90, 5).unwrap();
        let (x, y, _) = embed_pair(&g, &g, sig, None).unwrap();
        let opts = quick();
        let alignment = align(&x, &y, sig, &opts.config(sig, 1).align_params(), 3).unwrap();
        let (flip, rot) = compare_alignments(&x, &y, sig, &alignment, &opts.kernel, 3).unwrap();
        assert!(flip - rot >= -1e-9, "{flip} {rot}");
    }

    #[test]
    fn trial_matches_full_test_alignment() {
        let model = sbm();
        let opts = quick();
        let rec = signflip_trial(&model, 60, 11, 2, &opts).unwrap();
        assert_eq!(rec.difference, rec.u_signflip - rec.u_rotation);

        let (s1, s2, s3) = trial_seeds(11, 60, 2);
        let (_, g1) = model.sample(60, s1).unwrap();
        let (_, g2) = model.sample(60, s2).unwrap();
        let cfg: TestConfig = opts.config(model.signature().unwrap(), s3);
        let res = run_test(&g1, &g2, &cfg).unwrap();
        // the test re-resolves its bandwidth on the aligned sample, the
        // comparison keeps the alignment's selection kernel
        let Kernel { sigma, .. } = res.alignment.kernel;
        assert!(sigma > 0.0);
        assert_eq!(res.alignment.statistic.u_stat, rec.u_rotation);
        assert_eq!(rec, signflip_trial(&model, 60, 11, 2, &opts).unwrap());
    }

    #[test]
    fn summary_groups_by_size() {
        let rec = |n, d: f64| ComparisonRecord {
            n,
            trial: 0,
            seed: 0,
            u_signflip: d,
            u_rotation: 0.0,
            difference: d,
        };
        let records = vec![rec(10, 1.0), rec(10, 2.0), rec(10, -0.5), rec(20, 3.0)];
        let s = signflip_summary(&records).unwrap();
        assert_eq!(s.len(), 2);
        assert_eq!((s[0].n, s[0].trials, s[0].median_difference), (10, 3, 1.0));
        assert!((s[0].positive_fraction - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(s[1].wilcoxon_p, 0.5);
    }
}
