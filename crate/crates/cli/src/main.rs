//! `mfcn` command-line driver.

mod config;
mod plot;

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use log::{info, warn};
use nalgebra::DMatrix;
use serde::Serialize;
use serde_json::json;

use mfcn::graph::{BuiltGraph, GraphConfig, GraphSidecar};
use mfcn::harness::{degree_two_pairs, run_bernstein_check, run_experiments, ExperimentKind};
use mfcn::mfcn::{network_forward, weight_norms};
use mfcn::pointcloud::{load_points, sample_sphere, PointCloud, SignalMatrix};
use mfcn::spectral::{
    apply_filter_chebyshev, apply_filter_exact, default_domain, eigensolve_with, ChebyshevApprox, EigenOptions,
    SpectralBasis, SpectralFilter, DEFAULT_KAPPA,
};

use config::UsageError;

#[derive(Parser, Debug)]
#[command(name = "mfcn", version, about = "Manifold filter-combine networks on point clouds")]
struct Cli {
    /// Seed for every random draw the command makes.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for parallel trials (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Log more (repeat for debug output).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Sample a point cloud.
    Sample(SampleArgs),
    /// Build a graph and dump its edge list.
    Graph(GraphCmd),
    /// Compute the smallest Laplacian eigenpairs.
    Eigen(EigenCmd),
    /// Apply one spectral filter to every signal channel.
    Filter(FilterCmd),
    /// Run a network forward pass.
    Forward(ForwardCmd),
    /// Run sphere convergence experiments.
    Converge(ConvergeCmd),
    /// Check concentration of sampled inner products.
    Bernstein(BernsteinCmd),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Shape {
    Sphere,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum ModeArg {
    Eps,
    Knn,
}

#[derive(Clone, Copy, Debug, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
enum FilterMethod {
    Exact,
    Chebyshev,
}

#[derive(Args, Debug)]
struct SampleArgs {
    #[arg(long, value_enum, default_value = "sphere")]
    shape: Shape,
    #[arg(long)]
    n: usize,
    /// Output CSV (standard output when omitted).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
struct GraphArgs {
    /// Headerless CSV of points, one row per point.
    #[arg(long)]
    points: PathBuf,
    /// Intrinsic dimension of the sampled manifold [default: 2].
    #[arg(long)]
    dim: Option<usize>,
    /// Graph JSON file; flags below override it.
    #[arg(long)]
    graph_config: Option<PathBuf>,
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
    /// Multiplier of the default eps or k schedule.
    #[arg(long)]
    scale: Option<f64>,
    /// Fixed radius (eps mode).
    #[arg(long)]
    eps: Option<f64>,
    /// Fixed neighbour count (knn mode).
    #[arg(long)]
    k: Option<usize>,
}

#[derive(Args, Debug)]
struct GraphCmd {
    #[command(flatten)]
    graph: GraphArgs,
    /// Edge list output, one "i j" pair per line.
    #[arg(long)]
    out: PathBuf,
    /// Metadata JSON (default: `<out>.json`).
    #[arg(long)]
    sidecar: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct EigenCmd {
    #[command(flatten)]
    graph: GraphArgs,
    #[arg(long, default_value_t = DEFAULT_KAPPA)]
    kappa: usize,
    /// Basis JSON: eigenvalues, residual and graph metadata.
    #[arg(long)]
    out: PathBuf,
    /// Eigenvector CSV, one row per point.
    #[arg(long)]
    vectors: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct FilterCmd {
    #[command(flatten)]
    graph: GraphArgs,
    /// Signal CSV with an optional header of channel names.
    #[arg(long)]
    signals: PathBuf,
    /// `heat`, `wavelet:J`, `constant:C` or `poly_in_heat:a,b,...`.
    #[arg(long, default_value = "heat")]
    filter: SpectralFilter,
    #[arg(long, value_enum, default_value = "exact")]
    method: FilterMethod,
    #[arg(long, default_value_t = DEFAULT_KAPPA)]
    kappa: usize,
    /// Uniform tolerance of the Chebyshev fit.
    #[arg(long, default_value_t = 1e-10)]
    tol: f64,
    #[arg(long)]
    out: PathBuf,
    /// Metadata JSON (default: `<out>.json`).
    #[arg(long)]
    sidecar: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ForwardCmd {
    #[command(flatten)]
    graph: GraphArgs,
    #[arg(long)]
    signals: PathBuf,
    /// Network JSON.
    #[arg(long)]
    net: PathBuf,
    #[arg(long, default_value_t = DEFAULT_KAPPA)]
    kappa: usize,
    #[arg(long)]
    out: PathBuf,
    /// Metadata JSON (default: `<out>.json`).
    #[arg(long)]
    sidecar: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ConvergeCmd {
    /// Experiment JSON; flags below override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Raw per-trial table.
    #[arg(long)]
    csv: Option<PathBuf>,
    /// Log-log plot of median error against n.
    #[arg(long)]
    svg: Option<PathBuf>,
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
    #[arg(long, value_delimiter = ',')]
    n_grid: Option<Vec<usize>>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    kappa: Option<usize>,
    /// Comma-separated list of `filter`, `eigenvalue`, `multilayer`.
    #[arg(long, value_delimiter = ',')]
    experiments: Option<Vec<String>>,
}

#[derive(Args, Debug)]
struct BernsteinCmd {
    #[arg(long, value_delimiter = ',', default_value = "1024,4096")]
    n_grid: Vec<usize>,
    #[arg(long, default_value_t = 100)]
    trials: usize,
    #[arg(long)]
    out: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    env_logger::Builder::new().filter_level(level).format_timestamp(None).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(config::exit_code(&e))
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            return Err(UsageError("--jobs must be at least 1".into()).into());
        }
        rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global()?;
    }
    match cli.command {
        Command::Sample(a) => cmd_sample(a, cli.seed.unwrap_or(0)),
        Command::Graph(a) => cmd_graph(a),
        Command::Eigen(a) => cmd_eigen(a, cli.seed),
        Command::Filter(a) => cmd_filter(a, cli.seed),
        Command::Forward(a) => cmd_forward(a, cli.seed),
        Command::Converge(a) => cmd_converge(a, cli.seed),
        Command::Bernstein(a) => cmd_bernstein(a, cli.seed.unwrap_or(0)),
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    let f = File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
    Ok(BufWriter::new(f))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

fn sidecar_path(out: &Path, explicit: Option<PathBuf>) -> PathBuf {
    explicit.unwrap_or_else(|| {
        let mut s = out.as_os_str().to_owned();
        s.push(".json");
        PathBuf::from(s)
    })
}

fn cmd_sample(a: SampleArgs, seed: u64) -> Result<()> {
    if a.n == 0 {
        return Err(UsageError("--n must be at least 1".into()).into());
    }
    let Shape::Sphere = a.shape;
    let cloud = sample_sphere(a.n, seed)?;
    info!("sampled {} points on the unit sphere with seed {seed}", a.n);
    match a.out {
        Some(path) => {
            let mut w = create(&path)?;
            cloud.write_csv(&mut w)?;
            w.flush()?;
        }
        None => cloud.write_csv(io::stdout().lock())?,
    }
    Ok(())
}

/// Defaults, then the graph JSON file, then flags.
fn resolve_graph(a: &GraphArgs) -> Result<GraphConfig> {
    let mut cfg = match &a.graph_config {
        Some(path) => config::load_graph_config(path)?,
        None => GraphConfig::epsilon(a.dim.unwrap_or(2)),
    };
    if let Some(mode) = a.mode {
        let fresh = match mode {
            ModeArg::Eps => GraphConfig::epsilon(cfg.intrinsic_dim),
            ModeArg::Knn => GraphConfig::knn(cfg.intrinsic_dim),
        };
        if fresh.mode != cfg.mode {
            cfg = fresh;
        }
    }
    if let Some(d) = a.dim {
        cfg.intrinsic_dim = d;
    }
    if let Some(c) = a.scale {
        cfg.scale_c = Some(c);
    }
    if let Some(eps) = a.eps {
        cfg.explicit_eps = Some(eps);
    }
    if let Some(k) = a.k {
        cfg.explicit_k = Some(k);
    }
    cfg.validate().map_err(|e| UsageError(e.to_string()))?;
    Ok(cfg)
}

struct Prepared {
    cloud: PointCloud,
    cfg: GraphConfig,
    built: BuiltGraph,
}

fn prepare_graph(a: &GraphArgs) -> Result<Prepared> {
    let cfg = resolve_graph(a)?;
    info!("graph config: {}", serde_json::to_string(&cfg)?);
    let cloud = load_points(&a.points, cfg.intrinsic_dim).with_context(|| format!("reading {}", a.points.display()))?;
    let built = BuiltGraph::build(&cloud, &cfg)?;
    if !built.connectivity.connected {
        warn!(
            "graph on {} points is disconnected ({} components)",
            cloud.len(),
            built.connectivity.component_count
        );
    }
    Ok(Prepared { cloud, cfg, built })
}

fn basis_for(p: &Prepared, kappa: usize, seed: Option<u64>) -> Result<SpectralBasis> {
    if kappa == 0 || kappa > p.built.laplacian.n() {
        return Err(UsageError(format!("--kappa must lie in 1..={}", p.built.laplacian.n())).into());
    }
    let opts = EigenOptions {
        start_seed: seed,
        ..Default::default()
    };
    Ok(eigensolve_with(&p.built.laplacian, kappa, &opts)?)
}

fn cmd_graph(a: GraphCmd) -> Result<()> {
    let p = prepare_graph(&a.graph)?;
    let mut w = create(&a.out)?;
    p.built.graph.write_edge_list(&mut w)?;
    w.flush()?;
    write_json(
        &sidecar_path(&a.out, a.sidecar),
        &json!({ "config": p.cfg, "graph": p.built.sidecar() }),
    )
}

fn cmd_eigen(a: EigenCmd, seed: Option<u64>) -> Result<()> {
    let p = prepare_graph(&a.graph)?;
    let basis = basis_for(&p, a.kappa, seed)?;
    info!(
        "{} eigenpairs via {:?} in {} mat-vecs, residual {:.2e}",
        basis.kappa(),
        basis.method(),
        basis.matvecs(),
        basis.residual_max()
    );
    let summary = basis.summary();
    write_json(
        &a.out,
        &json!({
            "config": { "graph": p.cfg, "kappa": a.kappa, "seed": seed },
            "graph": p.built.sidecar(),
            "eigenvalues": summary.eigenvalues,
            "kappa": summary.kappa,
            "residual_max": summary.residual_max,
            "method": basis.method(),
            "matvecs": basis.matvecs(),
        }),
    )?;
    if let Some(path) = a.vectors {
        let mut w = create(&path)?;
        basis.write_eigenvectors_csv(&mut w)?;
        w.flush()?;
    }
    Ok(())
}

fn load_signals(path: &Path, p: &Prepared) -> Result<SignalMatrix> {
    SignalMatrix::load_csv(path, &p.cloud).with_context(|| format!("reading {}", path.display()))
}

fn write_signals(path: &Path, s: &SignalMatrix) -> Result<()> {
    let mut w = create(path)?;
    s.write_csv(&mut w)?;
    w.flush()?;
    Ok(())
}

fn cmd_filter(a: FilterCmd, seed: Option<u64>) -> Result<()> {
    a.filter.validate().map_err(|e| UsageError(e.to_string()))?;
    let p = prepare_graph(&a.graph)?;
    let x = load_signals(&a.signals, &p)?;
    let mut meta = json!({
        "config": {
            "graph": p.cfg,
            "filter": a.filter,
            "method": a.method,
            "kappa": a.kappa,
            "tol": a.tol,
            "seed": seed,
        },
        "graph": p.built.sidecar(),
    });
    let columns = match a.method {
        FilterMethod::Exact => {
            let basis = basis_for(&p, a.kappa, seed)?;
            meta["residual_max"] = json!(basis.residual_max());
            (0..x.channels())
                .map(|k| apply_filter_exact(&a.filter, &basis, &x.column(k)))
                .collect::<mfcn::Result<Vec<_>>>()?
        }
        FilterMethod::Chebyshev => {
            let lap = &p.built.laplacian;
            let approx = ChebyshevApprox::fit_to_tolerance(&a.filter, default_domain(lap), a.tol, 5000)?;
            meta["chebyshev_degree"] = json!(approx.degree());
            meta["chebyshev_sup_error"] = json!(approx.sup_error);
            (0..x.channels())
                .map(|k| apply_filter_chebyshev(&approx, lap, &x.column(k)))
                .collect::<mfcn::Result<Vec<_>>>()?
        }
    };
    let y = SignalMatrix::new(DMatrix::from_columns(&columns), x.channel_names().to_vec(), true)?;
    write_signals(&a.out, &y)?;
    write_json(&sidecar_path(&a.out, a.sidecar), &meta)
}

fn cmd_forward(a: ForwardCmd, seed: Option<u64>) -> Result<()> {
    let net = config::load_network(&a.net)?;
    let p = prepare_graph(&a.graph)?;
    let x = load_signals(&a.signals, &p)?;
    if let Some(c) = net.input_channels() {
        if c != x.channels() {
            return Err(UsageError(format!(
                "network expects {c} input channels but {} has {}",
                a.signals.display(),
                x.channels()
            ))
            .into());
        }
    }
    let basis = basis_for(&p, a.kappa, seed)?;
    let y = network_forward(&net, &basis, &x)?;
    write_signals(&a.out, &y)?;
    let sidecar: GraphSidecar = p.built.sidecar();
    let network: serde_json::Value = serde_json::from_str(&net.to_json()?)?;
    write_json(
        &sidecar_path(&a.out, a.sidecar),
        &json!({
            "config": { "graph": p.cfg, "kappa": a.kappa, "seed": seed, "network": network },
            "graph": sidecar,
            "connected": sidecar.connected,
            "residual_max": basis.residual_max(),
            "weight_norms": weight_norms(&net),
            "output_channels": y.channel_names(),
        }),
    )
}

fn cmd_converge(a: ConvergeCmd, seed: Option<u64>) -> Result<()> {
    let mut cfg = match &a.config {
        Some(path) => config::load_experiment_config(path)?,
        None => Default::default(),
    };
    if let Some(mode) = a.mode {
        let d = cfg.graph.intrinsic_dim;
        cfg.graph = match mode {
            ModeArg::Eps => GraphConfig::epsilon(d),
            ModeArg::Knn => GraphConfig::knn(d),
        };
    }
    if let Some(g) = a.n_grid {
        cfg.n_grid = g;
    }
    if let Some(t) = a.trials {
        cfg.trials = t;
    }
    if let Some(k) = a.kappa {
        cfg.kappa = k;
    }
    if let Some(list) = a.experiments {
        cfg.experiments = list
            .iter()
            .map(|s| serde_json::from_value::<ExperimentKind>(json!(s)))
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| UsageError(format!("--experiments: {e}")))?;
    }
    if let Some(s) = seed {
        cfg.base_seed = s;
    }
    cfg.validate().map_err(|e| UsageError(e.to_string()))?;
    info!("experiment config: {}", serde_json::to_string(&cfg)?);

    let reports = run_experiments(&cfg)?;
    for r in &reports {
        for s in &r.summary {
            if let Some(q) = s.error {
                info!("{:?} n={}: median {:.4e} (ok {}, skipped {}, failed {})", r.experiment, s.n, q.median, s.ok, s.skipped, s.failed);
            }
        }
    }
    write_json(&a.out, &json!({ "config": cfg, "reports": reports }))?;
    if let Some(path) = a.csv {
        let mut w = create(&path)?;
        reports[0].write_csv(&mut w)?;
        w.flush()?;
    }
    if let Some(path) = a.svg {
        let mut w = create(&path)?;
        w.write_all(plot::convergence_svg(&reports).as_bytes())?;
        w.flush()?;
    }
    Ok(())
}

fn cmd_bernstein(a: BernsteinCmd, seed: u64) -> Result<()> {
    if a.trials == 0 || a.n_grid.is_empty() {
        bail!(UsageError("need at least one n and one trial".into()));
    }
    let pairs = degree_two_pairs();
    let report = run_bernstein_check(&a.n_grid, &pairs, a.trials, seed)?;
    info!("worst violation frequency {:.3}", report.worst_frequency());
    write_json(
        &a.out,
        &json!({
            "config": { "n_grid": a.n_grid, "trials": a.trials, "seed": seed },
            "worst_frequency": report.worst_frequency(),
            "report": report,
        }),
    )
}
