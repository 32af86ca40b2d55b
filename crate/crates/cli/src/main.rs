use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

use graphmmd::embed::{ase, estimate_sparsity, read_embedding_csv, scaled_embedding, write_embedding_csv, EmbeddingMeta};
use graphmmd::hypothesis::{run_test, NullScheme, TestConfig, TestResult};
use graphmmd::mmd::{Bandwidth, KernelFamily, KernelSpec};
use graphmmd::models::{Graph, LatentConfig, Signature};
use graphmmd::ot::{align, AlignParams};
use graphmmd::sim::{run_experiment, ExperimentSpec};

#[derive(Parser)]
#[command(name = "graphmmd", version, about = "Two-sample testing for random dot product graphs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum GraphFormat {
    Edges,
    Dense,
}

#[derive(clap::Args)]
struct KernelArgs {
    /// Kernel family.
    #[arg(long, default_value = "gaussian")]
    kernel: KernelFamily,
    /// Bandwidth: a positive number or `median` for the median heuristic.
    #[arg(long, default_value = "median")]
    bandwidth: Bandwidth,
}

#[derive(clap::Args)]
struct AlignArgs {
    /// Entropic regularization as a fraction of the median cost.
    #[arg(long, default_value_t = 0.05)]
    eps_scale: f64,
    /// Random block-orthogonal initializations on top of the sign matrices.
    #[arg(long, default_value_t = 8)]
    restarts: usize,
    #[arg(long, default_value_t = 30)]
    max_outer: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Subcommand)]
enum Command {
    /// Sample a graph from a latent-position model file.
    Generate {
        /// Model configuration (TOML).
        model: PathBuf,
        #[arg(short, long)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(short, long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value = "edges")]
        format: GraphFormat,
        /// Also write the latent positions as CSV.
        #[arg(long)]
        latent: Option<PathBuf>,
    },
    /// Adjacency spectral embedding of a graph.
    Embed {
        graph: PathBuf,
        /// Signature `p,q`.
        #[arg(short, long)]
        signature: Signature,
        /// Embedding CSV; the metadata sidecar goes next to it as `.toml`.
        #[arg(short, long)]
        out: PathBuf,
        /// Divide by the square root of the estimated sparsity.
        #[arg(long)]
        rescale: bool,
    },
    /// Align a second embedding to a first over block-orthogonal matrices.
    Align {
        x: PathBuf,
        y: PathBuf,
        #[arg(short, long)]
        signature: Signature,
        #[command(flatten)]
        params: AlignArgs,
        #[command(flatten)]
        kernel: KernelArgs,
        /// Directory for `w.csv` and `alignment.toml`.
        #[arg(short, long)]
        out_dir: PathBuf,
        /// Also write the full coupling matrix.
        #[arg(long)]
        coupling: bool,
    },
    /// Test whether two graphs share a latent-position distribution.
    Test {
        g1: PathBuf,
        g2: PathBuf,
        #[arg(short, long)]
        signature: Signature,
        #[command(flatten)]
        kernel: KernelArgs,
        #[arg(long, default_value_t = 500)]
        permutations: usize,
        #[arg(long, default_value_t = 0.05)]
        alpha: f64,
        #[arg(long, default_value = "permutation")]
        null: NullScheme,
        #[command(flatten)]
        params: AlignArgs,
        /// Write the result here instead of standard output.
        #[arg(short, long)]
        out: Option<PathBuf>,
        /// Write the null replicates as CSV.
        #[arg(long)]
        null_csv: Option<PathBuf>,
    },
    /// Run a simulation experiment described by a spec file.
    Simulate {
        spec: PathBuf,
        /// Override the spec's output directory.
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
}

fn write_matrix_csv(path: &Path, m: &nalgebra::DMatrix<f64>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?);
    for row in m.row_iter() {
        let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        writeln!(w, "{}", cells.join(","))?;
    }
    w.flush()?;
    Ok(())
}

fn read_embedding(path: &Path) -> Result<nalgebra::DMatrix<f64>> {
    let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    Ok(read_embedding_csv(BufReader::new(f)).with_context(|| format!("reading {}", path.display()))?)
}

fn load_graph(path: &Path) -> Result<Graph> {
    Graph::load(path).with_context(|| format!("reading graph {}", path.display()))
}

fn to_toml<T: Serialize>(value: &T) -> Result<String> {
    Ok(toml::to_string(value)?)
}

fn generate(model: &Path, n: usize, seed: u64, out: &Path, format: GraphFormat, latent: Option<&Path>) -> Result<()> {
    let cfg = LatentConfig::load(model).with_context(|| format!("loading model {}", model.display()))?;
    let (sample, graph) = cfg.sample(n, seed)?;
    let w = BufWriter::new(File::create(out).with_context(|| format!("creating {}", out.display()))?);
    match format {
        GraphFormat::Edges => graph.write_edge_list(w)?,
        GraphFormat::Dense => graph.write_dense(w)?,
    }
    if let Some(path) = latent {
        write_embedding_csv(&sample.x, BufWriter::new(File::create(path)?))?;
    }
    eprintln!("{} vertices, {} edges, signature {}", graph.n(), graph.edge_count(), sample.signature);
    Ok(())
}

fn embed(graph: &Path, sig: Signature, out: &Path, rescale: bool) -> Result<()> {
    let g = load_graph(graph)?;
    let mut emb = ase(&g, sig)?;
    emb.sparsity_estimate = Some(estimate_sparsity(&g)?);
    let x = if rescale {
        scaled_embedding(&emb, emb.sparsity_estimate.unwrap_or(1.0))?
    } else {
        emb.x.clone()
    };
    write_embedding_csv(&x, BufWriter::new(File::create(out).with_context(|| format!("creating {}", out.display()))?))?;
    fs::write(out.with_extension("toml"), EmbeddingMeta::of(&emb).to_toml_string()?)?;
    Ok(())
}

fn align_params(a: &AlignArgs, k: &KernelArgs) -> AlignParams {
    AlignParams {
        eps_scale: a.eps_scale,
        restarts: a.restarts,
        max_outer: a.max_outer,
        kernel: KernelSpec {
            family: k.kernel,
            bandwidth: k.bandwidth,
        },
        ..AlignParams::default()
    }
}

#[derive(Serialize)]
struct AlignmentReport {
    transport_cost: f64,
    eps: f64,
    iterations: usize,
    converged: bool,
    restarts_tried: usize,
    statistic: f64,
    bandwidth: f64,
    row_marginal_error: f64,
    col_marginal_error: f64,
    coupling_max: f64,
    coupling_entropy: f64,
}

fn run_align(x: &Path, y: &Path, sig: Signature, a: &AlignArgs, k: &KernelArgs, out_dir: &Path, full: bool) -> Result<()> {
    let x = read_embedding(x)?;
    let y = read_embedding(y)?;
    let res = align(&x, &y, sig, &align_params(a, k), a.seed)?;
    fs::create_dir_all(out_dir)?;
    write_matrix_csv(&out_dir.join("w.csv"), res.w.matrix())?;
    if full {
        write_matrix_csv(&out_dir.join("coupling.csv"), &res.coupling.pi)?;
    }
    let (row_err, col_err) = res.coupling.marginal_errors();
    let pi = &res.coupling.pi;
    let report = AlignmentReport {
        transport_cost: res.transport_cost,
        eps: res.eps,
        iterations: res.iterations,
        converged: res.converged,
        restarts_tried: res.restarts_tried,
        statistic: res.statistic.u_stat,
        bandwidth: res.kernel.sigma,
        row_marginal_error: row_err,
        col_marginal_error: col_err,
        coupling_max: pi.max(),
        coupling_entropy: -pi.iter().filter(|&&v| v > 0.0).map(|v| v * v.ln()).sum::<f64>(),
    };
    fs::write(out_dir.join("alignment.toml"), to_toml(&report)?)?;
    println!("{}", res.transport_cost);
    Ok(())
}

#[derive(Serialize)]
struct TestReport {
    statistic: f64,
    v_statistic: f64,
    n: usize,
    m: usize,
    p_value: f64,
    reject: bool,
    alpha_level: f64,
    permutations: usize,
    null: NullScheme,
    kernel: KernelFamily,
    bandwidth: f64,
    sparsity: [f64; 2],
    alignment: AlignmentSummary,
}

#[derive(Serialize)]
struct AlignmentSummary {
    w: Vec<Vec<f64>>,
    transport_cost: f64,
    eps: f64,
    iterations: usize,
    converged: bool,
    restarts_tried: usize,
}

fn report(res: &TestResult, cfg: &TestConfig) -> TestReport {
    let w = res.alignment.w.matrix();
    TestReport {
        statistic: res.statistic,
        v_statistic: res.value.v_stat,
        n: res.value.n,
        m: res.value.m,
        p_value: res.p_value,
        reject: res.reject,
        alpha_level: cfg.alpha_level,
        permutations: cfg.permutations,
        null: cfg.null,
        kernel: res.kernel.family,
        bandwidth: res.kernel.sigma,
        sparsity: [res.sparsity.0, res.sparsity.1],
        alignment: AlignmentSummary {
            w: w.row_iter().map(|r| r.iter().copied().collect()).collect(),
            transport_cost: res.alignment.transport_cost,
            eps: res.alignment.eps,
            iterations: res.alignment.iterations,
            converged: res.alignment.converged,
            restarts_tried: res.alignment.restarts_tried,
        },
    }
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Generate {
            model,
            n,
            seed,
            out,
            format,
            latent,
        } => generate(&model, n, seed, &out, format, latent.as_deref()),
        Command::Embed {
            graph,
            signature,
            out,
            rescale,
        } => embed(&graph, signature, &out, rescale),
        Command::Align {
            x,
            y,
            signature,
            params,
            kernel,
            out_dir,
            coupling,
        } => run_align(&x, &y, signature, &params, &kernel, &out_dir, coupling),
        Command::Test {
            g1,
            g2,
            signature,
            kernel,
            permutations,
            alpha,
            null,
            params,
            out,
            null_csv,
        } => {
            let cfg = TestConfig {
                kernel: KernelSpec {
                    family: kernel.kernel,
                    bandwidth: kernel.bandwidth,
                },
                permutations,
                eps_scale: params.eps_scale,
                restarts: params.restarts,
                max_outer: params.max_outer,
                alpha_level: alpha,
                seed: params.seed,
                null,
                ..TestConfig::new(signature)
            };
            let res = run_test(&load_graph(&g1)?, &load_graph(&g2)?, &cfg)?;
            let text = to_toml(&report(&res, &cfg))?;
            match out {
                Some(path) => fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?,
                None => print!("{text}"),
            }
            if let Some(path) = null_csv {
                let mut w = BufWriter::new(File::create(&path)?);
                writeln!(w, "replicate,u_stat")?;
                for (b, u) in res.null_samples.iter().enumerate() {
                    writeln!(w, "{b},{u}")?;
                }
                w.flush()?;
            }
            Ok(())
        }
        Command::Simulate { spec, out_dir } => {
            let mut spec = ExperimentSpec::load(&spec).with_context(|| format!("loading {}", spec.display()))?;
            if let Some(dir) = out_dir {
                spec.output_dir = dir;
            }
            let out = run_experiment(&spec)?;
            println!("{}", out.dir.display());
            Ok(())
        }
    }
}
