//! Overlay of the two embeddings (coordinates 2 and 3) under the best sign
//! flip and under the full alignment.

use std::fs;

use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::svg::{Chart, Mark, Series};
use super::{prepare_dir, read_csv, write_csv, write_manifest, ExperimentOutput, ExperimentSpec, TestOptions};
use crate::hypothesis::{embed_pair, trial_seeds};
use crate::models::{Graph, Signature};
use crate::ot::{align, best_sign_flip};
use crate::rng::derive_seed;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OverlayMethod {
    Signflip,
    Aligned,
}

/// One plotted vertex.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OverlayPoint {
    pub trial: usize,
    pub method: OverlayMethod,
    pub graph: u8,
    pub vertex: usize,
    pub cluster: usize,
    pub dim2: f64,
    pub dim3: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OverlaySummary {
    pub trial: usize,
    pub seed: u64,
    /// Mean over clusters of the distance between the two graphs' cluster
    /// centroids in coordinates 2-3.
    pub centroid_signflip: f64,
    pub centroid_aligned: f64,
    /// Smallest per-cluster ratio of the top two principal variances of the
    /// pooled aligned points.
    pub min_elongation: f64,
}

#[derive(Debug, Clone)]
pub struct OverlayTrial {
    pub points: Vec<OverlayPoint>,
    pub summary: OverlaySummary,
}

/// Largest number of clusters for which labels are matched across graphs by
/// enumerating permutations.
const MAX_MATCHED_CLUSTERS: usize = 8;

fn centroids(m: &DMatrix<f64>, labels: &[usize], k: usize) -> Vec<Option<[f64; 2]>> {
    (0..k)
        .map(|c| {
            let rows: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == c).collect();
            if rows.is_empty() {
                return None;
            }
            let s = rows.iter().fold([0.0, 0.0], |a, &i| [a[0] + m[(i, 1)], a[1] + m[(i, 2)]]);
            Some([s[0] / rows.len() as f64, s[1] / rows.len() as f64])
        })
        .collect()
}

fn permutations(k: usize) -> Vec<Vec<usize>> {
    if k == 0 {
        return vec![Vec::new()];
    }
    let mut out = Vec::new();
    for p in permutations(k - 1) {
        for pos in 0..=p.len() {
            let mut q = p.clone();
            q.insert(pos, k - 1);
            out.push(q);
        }
    }
    out
}

/// Mean distance, in coordinates 2-3, between matching cluster centroids of
/// the two graphs. Community labels of independently sampled graphs are
/// only defined up to a relabeling that the model may not distinguish, so
/// clusters are matched by the permutation that minimizes the mean.
fn centroid_distance(x: &DMatrix<f64>, lx: &[usize], y: &DMatrix<f64>, ly: &[usize]) -> f64 {
    let k = lx.iter().chain(ly).max().map_or(0, |m| m + 1);
    let (cx, cy) = (centroids(x, lx, k), centroids(y, ly, k));
    let matchings = if k <= MAX_MATCHED_CLUSTERS {
        permutations(k)
    } else {
        vec![(0..k).collect()]
    };
    matchings
        .iter()
        .filter_map(|perm| {
            let pairs: Vec<f64> = (0..k)
                .filter_map(|c| match (cx[c], cy[perm[c]]) {
                    (Some(a), Some(b)) => Some(((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()),
                    _ => None,
                })
                .collect();
            (!pairs.is_empty()).then(|| pairs.iter().sum::<f64>() / pairs.len() as f64)
        })
        .fold(f64::NAN, f64::min)
}

fn min_elongation(x: &DMatrix<f64>, lx: &[usize], y: &DMatrix<f64>, ly: &[usize]) -> f64 {
    let d = x.ncols();
    let k = lx.iter().chain(ly).max().map_or(0, |m| m + 1);
    let mut worst = f64::INFINITY;
    for c in 0..k {
        let rows: Vec<_> = (0..lx.len())
            .filter(|&i| lx[i] == c)
            .map(|i| x.row(i))
            .chain((0..ly.len()).filter(|&i| ly[i] == c).map(|i| y.row(i)))
            .collect();
        if rows.len() < 2 {
            continue;
        }
        let n = rows.len() as f64;
        let mean = rows.iter().fold(nalgebra::RowDVector::zeros(d), |a, r| a + r) / n;
        let mut cov = DMatrix::<f64>::zeros(d, d);
        for r in &rows {
            let c = *r - &mean;
            cov += c.transpose() * &c;
        }
        let mut ev: Vec<f64> = SymmetricEigen::new(cov / (n - 1.0)).eigenvalues.iter().copied().collect();
        ev.sort_by(|a, b| b.total_cmp(a));
        let ratio = if ev.len() < 2 || ev[1] <= 0.0 { f64::INFINITY } else { ev[0] / ev[1] };
        worst = worst.min(ratio);
    }
    worst
}

fn labels_or_zero(labels: Option<&Vec<usize>>, n: usize) -> Vec<usize> {
    labels.cloned().unwrap_or_else(|| vec![0; n])
}

/// Overlay data for one graph pair with known community labels.
#[allow(clippy::too_many_arguments)]
pub fn overlay_trial(
    g1: &Graph,
    labels1: &[usize],
    g2: &Graph,
    labels2: &[usize],
    sig: Signature,
    opts: &TestOptions,
    trial: usize,
    seed: u64,
) -> Result<OverlayTrial> {
    if sig.d() < 3 {
        return Err(Error::InvalidParameter(format!(
            "overlay plots coordinates 2 and 3 and needs d >= 3, got d = {}",
            sig.d()
        )));
    }
    if labels1.len() != g1.n() || labels2.len() != g2.n() {
        return Err(Error::DimensionMismatch("one label per vertex required".into()));
    }
    let (x, y, _) = embed_pair(g1, g2, sig, None)?;
    let align_seed = derive_seed(seed, &[0]);
    let (flip, _, _) = best_sign_flip(&x, &y, sig, &opts.kernel, align_seed)?;
    let alignment = align(&x, &y, sig, &opts.config(sig, seed).align_params(), align_seed)?;
    let y_flip = flip.apply(&y);
    let y_aligned = alignment.w.apply(&y);

    let mut points = Vec::with_capacity(2 * (x.nrows() + y.nrows()));
    for (method, yy) in [(OverlayMethod::Signflip, &y_flip), (OverlayMethod::Aligned, &y_aligned)] {
        for (graph, m, labels) in [(1u8, &x, labels1), (2u8, yy, labels2)] {
            points.extend((0..m.nrows()).map(|i| OverlayPoint {
                trial,
                method,
                graph,
                vertex: i,
                cluster: labels[i],
                dim2: m[(i, 1)],
                dim3: m[(i, 2)],
            }));
        }
    }
    Ok(OverlayTrial {
        points,
        summary: OverlaySummary {
            trial,
            seed,
            centroid_signflip: centroid_distance(&x, labels1, &y_flip, labels2),
            centroid_aligned: centroid_distance(&x, labels1, &y_aligned, labels2),
            min_elongation: min_elongation(&x, labels1, &y_aligned, labels2),
        },
    })
}

fn run_trials(spec: &ExperimentSpec) -> Result<Vec<OverlayTrial>> {
    let n = spec.n_grid[0];
    let sig = spec.signature()?;
    (0..spec.trials)
        .into_par_iter()
        .map(|t| {
            let (s1, s2, s3) = trial_seeds(spec.seed, n, t);
            let (l1, g1) = spec.null.sample(n, s1)?;
            let (l2, g2) = spec.null.sample(n, s2)?;
            let lab1 = labels_or_zero(l1.labels.as_ref(), n);
            let lab2 = labels_or_zero(l2.labels.as_ref(), n);
            overlay_trial(&g1, &lab1, &g2, &lab2, sig, &spec.test, t, s3)
        })
        .collect()
}

fn scatter(spec: &ExperimentSpec, points: &[OverlayPoint], method: OverlayMethod) -> Chart {
    let mut clusters: Vec<usize> = points.iter().map(|p| p.cluster).collect();
    clusters.sort_unstable();
    clusters.dedup();
    let mut series = Vec::new();
    for &c in &clusters {
        for (graph, mark) in [(1u8, Mark::Circle), (2u8, Mark::Cross)] {
            series.push(Series {
                label: format!("graph {graph}, block {}", c + 1),
                points: points
                    .iter()
                    .filter(|p| p.trial == 0 && p.method == method && p.graph == graph && p.cluster == c)
                    .map(|p| (p.dim2, p.dim3))
                    .collect(),
                mark,
                color: c,
            });
        }
    }
    let title = match method {
        OverlayMethod::Signflip => "sign flip",
        OverlayMethod::Aligned => "aligned",
    };
    Chart {
        title: format!("{}: {title}", spec.name),
        x_label: "coordinate 2".into(),
        y_label: "coordinate 3".into(),
        series,
        vlines: Vec::new(),
        y_range: None,
    }
}

/// Scatter data for every trial at the first grid size; the plots show
/// trial 0.
pub fn experiment_overlay(spec: &ExperimentSpec) -> Result<ExperimentOutput> {
    let trials = run_trials(spec)?;
    let dir = prepare_dir(spec)?;
    let records = dir.join("records.csv");
    let points: Vec<OverlayPoint> = trials.iter().flat_map(|t| t.points.iter().copied()).collect();
    write_csv(&records, &points)?;
    let summary = dir.join("summary.csv");
    write_csv(&summary, &trials.iter().map(|t| t.summary).collect::<Vec<_>>())?;

    let points: Vec<OverlayPoint> = read_csv(&records)?;
    let mut plots = Vec::new();
    for (method, file) in [(OverlayMethod::Signflip, "overlay_signflip.svg"), (OverlayMethod::Aligned, "overlay_aligned.svg")] {
        let path = dir.join(file);
        fs::write(&path, scatter(spec, &points, method).render())?;
        plots.push(path);
    }
    Ok(ExperimentOutput {
        manifest: write_manifest(spec, &dir)?,
        dir,
        records,
        summary,
        plots,
    })
}
