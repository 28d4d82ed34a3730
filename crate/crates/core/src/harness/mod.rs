//! Convergence experiments on uniform sphere samples.
//!
//! Every `(n, trial)` pair samples its own cloud from a seed derived from
//! `(base_seed, n, trial)`, builds a graph, computes `kappa` eigenpairs and
//! compares discrete quantities with the continuum oracle. Trials run in
//! parallel and are sorted by `(n, trial)` before anything is written.

mod bernstein;

use std::collections::BTreeMap;
use std::io::Write;
use std::time::Instant;

use log::{info, warn};
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use bernstein::{degree_two_pairs, run_bernstein_check, BernsteinReport, BernsteinRow, HarmonicPair};

use crate::error::{Error, Result};
use crate::graph::{BuiltGraph, GraphConfig, GraphMode};
use crate::mfcn::{layer_norms, network_trace, Activation, LayerSpec, NetworkSpec};
use crate::pointcloud::{sample_sphere, SignalMatrix};
use crate::rng::trial_seed;
use crate::spectral::{apply_filter_exact, eigensolve, SpectralFilter, DEFAULT_KAPPA};
use crate::sphere::{continuum_filter, continuum_network_trace, continuum_spectrum, Expansion, LimitKind};
use crate::stats::quantile;

pub const SCHEMA_VERSION: u32 = 1;

/// Frozen acceptance gates, echoed into every report.
pub mod gates {
    /// Relative tolerance on the median of eigenvalues 2-4 at the largest n.
    pub const EIGEN_RELATIVE_TOLERANCE: f64 = 0.20;
    /// Required decrease of the median filter error from the smallest to the
    /// largest n.
    pub const FILTER_DECAY_FACTOR: f64 = 2.0;
    /// Upper bound on the median error(3)/error(1) ratio.
    pub const DEPTH_RATIO_MAX: f64 = 3.5;
    /// Largest tolerated fraction of skipped or failed trials per n.
    pub const MAX_NON_OK_FRACTION: f64 = 0.5;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    Filter,
    Eigenvalue,
    Multilayer,
}

fn default_trials() -> usize {
    10
}
fn default_graph() -> GraphConfig {
    GraphConfig::epsilon(2)
}
fn default_kappa() -> usize {
    DEFAULT_KAPPA
}
fn default_filter() -> SpectralFilter {
    SpectralFilter::Heat
}
fn default_eigentrack() -> usize {
    8
}
fn default_experiments() -> Vec<ExperimentKind> {
    vec![ExperimentKind::Filter, ExperimentKind::Eigenvalue]
}
fn default_depth() -> usize {
    3
}
fn default_n_grid() -> Vec<usize> {
    vec![512, 1024, 2048, 4096]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_n_grid")]
    pub n_grid: Vec<usize>,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default = "default_graph")]
    pub graph: GraphConfig,
    #[serde(default = "default_kappa")]
    pub kappa: usize,
    #[serde(default = "default_filter")]
    pub filter: SpectralFilter,
    #[serde(default = "Expansion::default_signal")]
    pub signal: Expansion,
    #[serde(default)]
    pub base_seed: u64,
    #[serde(default = "default_eigentrack")]
    pub eigentrack_count: usize,
    /// Reports produced by [`run_experiments`].
    #[serde(default = "default_experiments")]
    pub experiments: Vec<ExperimentKind>,
    /// Depth of the linear heat network used by the multilayer experiment.
    #[serde(default = "default_depth")]
    pub depth: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("defaults deserialize")
    }
}

/// Keys accepted in experiment JSON, for diagnostics.
pub const EXPERIMENT_KEYS: &[&str] = &[
    "n_grid",
    "trials",
    "graph",
    "kappa",
    "filter",
    "signal",
    "base_seed",
    "eigentrack_count",
    "experiments",
    "depth",
];

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_grid.is_empty() {
            return Err(Error::Config("n_grid must not be empty".into()));
        }
        if self.n_grid.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config("n_grid must be strictly increasing".into()));
        }
        if self.n_grid[0] < 2 {
            return Err(Error::Config("every n must be at least 2".into()));
        }
        if self.trials == 0 {
            return Err(Error::Config("trials must be at least 1".into()));
        }
        if self.graph.intrinsic_dim != 2 {
            return Err(Error::Config("sphere experiments need intrinsic_dim = 2".into()));
        }
        self.graph.validate()?;
        self.filter.validate()?;
        if self.kappa == 0 {
            return Err(Error::Config("kappa must be positive".into()));
        }
        if self.eigentrack_count + 1 > self.kappa {
            return Err(Error::Config(format!(
                "eigentrack_count {} needs kappa >= {}",
                self.eigentrack_count,
                self.eigentrack_count + 1
            )));
        }
        if self.experiments.contains(&ExperimentKind::Multilayer) && self.depth == 0 {
            return Err(Error::Config("depth must be at least 1".into()));
        }
        Ok(())
    }

    pub fn limit_kind(&self) -> LimitKind {
        self.graph.mode.into()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrialStatus {
    Ok,
    /// Disconnected graph.
    Skipped,
    /// Eigensolver or other runtime failure.
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub n: usize,
    pub trial: usize,
    pub seed: u64,
    pub mode: GraphMode,
    pub eps_or_k: f64,
    pub connected: bool,
    pub component_count: usize,
    pub status: TrialStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub message: Option<String>,
    pub filter_error: Option<f64>,
    /// `lambda_1 .. lambda_{m+1}`: the trivial eigenvalue followed by the
    /// tracked nonzero ones.
    pub eigenvalues: Vec<f64>,
    pub lambda_kappa: Option<f64>,
    pub residual_max: Option<f64>,
    /// `error(l)` for depths `1..=D` (multilayer experiment only).
    pub depth_errors: Vec<f64>,
    pub seconds: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quantiles {
    pub q25: f64,
    pub median: f64,
    pub q75: f64,
}

impl Quantiles {
    pub fn of(values: &[f64]) -> Option<Self> {
        (!values.is_empty()).then(|| Self {
            q25: quantile(values, 0.25),
            median: quantile(values, 0.5),
            q75: quantile(values, 0.75),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SizeSummary {
    pub n: usize,
    pub ok: usize,
    pub skipped: usize,
    pub failed: usize,
    /// The headline metric of the report at this n.
    pub error: Option<Quantiles>,
    /// Per tracked index (`lambda_2 ..`), across trials.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub eigenvalue_medians: Vec<f64>,
    /// Median of `lambda_2 .. lambda_4` pooled over trials.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub first_cluster_median: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub depth_errors: Vec<Quantiles>,
    /// `error(l) / error(1)` per depth.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub depth_ratios: Vec<Quantiles>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub schema_version: u32,
    pub code_version: String,
    pub experiment: ExperimentKind,
    /// What `error` measures in the per-n summaries.
    pub metric: String,
    pub config: ExperimentConfig,
    pub gates: BTreeMap<String, f64>,
    /// Continuum values the tracked eigenvalues are compared against.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub continuum_eigenvalues: Vec<f64>,
    pub summary: Vec<SizeSummary>,
    pub trials: Vec<TrialRecord>,
}

impl ConvergenceReport {
    pub fn medians(&self) -> Vec<Option<f64>> {
        self.summary.iter().map(|s| s.error.map(|q| q.median)).collect()
    }

    pub fn summary_for(&self, n: usize) -> Option<&SizeSummary> {
        self.summary.iter().find(|s| s.n == n)
    }

    /// Raw trial table. Wall time is left out so identical configs give
    /// byte-identical files.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        write_trials_csv(&self.trials, self.config.eigentrack_count, out)
    }
}

pub fn write_trials_csv<W: Write>(trials: &[TrialRecord], tracked: usize, out: W) -> Result<()> {
    let depth = trials.iter().map(|t| t.depth_errors.len()).max().unwrap_or(0);
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<String> = ["n", "trial", "seed", "mode", "eps_or_k", "connected", "status", "filter_error"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    header.extend((1..=tracked + 1).map(|i| format!("lambda_{i}")));
    header.extend((1..=depth).map(|l| format!("depth_error_{l}")));
    w.write_record(&header).map_err(std::io::Error::from)?;
    let fmt = |v: Option<f64>| v.map(|x| format!("{x:?}")).unwrap_or_default();
    for t in trials {
        let mut row = vec![
            t.n.to_string(),
            t.trial.to_string(),
            t.seed.to_string(),
            t.mode.to_string(),
            format!("{:?}", t.eps_or_k),
            t.connected.to_string(),
            format!("{:?}", t.status).to_lowercase(),
            fmt(t.filter_error),
        ];
        row.extend((0..=tracked).map(|i| fmt(t.eigenvalues.get(i).copied())));
        row.extend((0..depth).map(|l| fmt(t.depth_errors.get(l).copied())));
        w.write_record(&row).map_err(std::io::Error::from)?;
    }
    w.flush()?;
    Ok(())
}

/// `depth` identical linear heat layers on one channel.
pub fn linear_heat_network(depth: usize) -> NetworkSpec {
    let layer = LayerSpec::shared_bank(&[SpectralFilter::Heat], 1, Activation::Identity);
    NetworkSpec::new(vec![layer; depth], None).expect("heat chain is consistent")
}

fn check_multilayer_network(net: &NetworkSpec) -> Result<()> {
    if net.layers.is_empty() {
        return Err(Error::Config("multilayer experiment needs at least one layer".into()));
    }
    if !net.is_linear() {
        return Err(Error::UnsupportedOracle(
            "multilayer convergence needs identity activations in every layer".into(),
        ));
    }
    for (l, layer) in net.layers.iter().enumerate() {
        let (a1, a2) = layer_norms(layer);
        if (a1 * a2 - 1.0).abs() > 1e-12 {
            return Err(Error::Normalization {
                layer: l,
                reason: format!("A1 * A2 = {} (normalize the weights first)", a1 * a2),
            });
        }
    }
    Ok(())
}

fn run_trial(cfg: &ExperimentConfig, net: Option<&NetworkSpec>, n: usize, trial: usize) -> TrialRecord {
    let start = Instant::now();
    let seed = trial_seed(cfg.base_seed, n, trial);
    let mut record = TrialRecord {
        n,
        trial,
        seed,
        mode: cfg.graph.mode,
        eps_or_k: f64::NAN,
        connected: false,
        component_count: 0,
        status: TrialStatus::Failed,
        message: None,
        filter_error: None,
        eigenvalues: Vec::new(),
        lambda_kappa: None,
        residual_max: None,
        depth_errors: Vec::new(),
        seconds: 0.0,
    };
    if let Err(e) = fill_trial(cfg, net, &mut record) {
        record.status = TrialStatus::Failed;
        record.message = Some(e.to_string());
        warn!("n={n} trial={trial}: {e}");
    }
    record.seconds = start.elapsed().as_secs_f64();
    record
}

fn fill_trial(cfg: &ExperimentConfig, net: Option<&NetworkSpec>, record: &mut TrialRecord) -> Result<()> {
    let n = record.n;
    let cloud = sample_sphere(n, record.seed)?;
    let built = BuiltGraph::build(&cloud, &cfg.graph)?;
    record.eps_or_k = built.param.as_f64();
    record.connected = built.connectivity.connected;
    record.component_count = built.connectivity.component_count;
    if !record.connected {
        record.status = TrialStatus::Skipped;
        record.message = Some(format!("graph has {} components", record.component_count));
        return Ok(());
    }
    let kind = cfg.limit_kind();
    let basis = eigensolve(&built.laplacian, cfg.kappa.min(n))?;
    let tracked = (cfg.eigentrack_count + 1).min(basis.kappa());
    record.eigenvalues = basis.eigenvalues()[..tracked].to_vec();
    record.lambda_kappa = basis.eigenvalues().last().copied();
    record.residual_max = Some(basis.residual_max());

    let x = cfg.signal.project(&cloud)?;
    let discrete = apply_filter_exact(&cfg.filter, &basis, &x)?;
    let truth = continuum_filter(&cfg.filter, &cfg.signal, kind).project(&cloud)?;
    record.filter_error = Some((discrete - truth).norm());

    if let Some(net) = net {
        let channels = net.input_channels().unwrap_or(1);
        let input = SignalMatrix::from_projected(DMatrix::from_fn(n, channels, |i, _| x[i]));
        let discrete = network_trace(net, &basis, &input)?;
        let continuum = continuum_network_trace(net, &vec![cfg.signal.clone(); channels], kind)?;
        record.depth_errors = discrete
            .iter()
            .zip(&continuum)
            .map(|(d, c)| -> Result<f64> {
                let mut worst = 0.0f64;
                for (k, f) in c.iter().enumerate() {
                    let projected: DVector<f64> = f.project(&cloud)?;
                    worst = worst.max((d.column(k) - projected).norm());
                }
                Ok(worst)
            })
            .collect::<Result<_>>()?;
    }
    record.status = TrialStatus::Ok;
    Ok(())
}

/// Runs every `(n, trial)` once and returns the rows sorted by `(n, trial)`.
pub fn run_trials(cfg: &ExperimentConfig, net: Option<&NetworkSpec>) -> Result<Vec<TrialRecord>> {
    cfg.validate()?;
    if let Some(net) = net {
        check_multilayer_network(net)?;
    }
    let tasks: Vec<(usize, usize)> = cfg.n_grid.iter().flat_map(|&n| (0..cfg.trials).map(move |t| (n, t))).collect();
    info!("running {} trials ({} mode)", tasks.len(), cfg.graph.mode);
    let mut rows: Vec<TrialRecord> = tasks.par_iter().map(|&(n, t)| run_trial(cfg, net, n, t)).collect();
    rows.sort_by_key(|r| (r.n, r.trial));
    for &n in &cfg.n_grid {
        let non_ok = rows.iter().filter(|r| r.n == n && r.status != TrialStatus::Ok).count();
        if non_ok as f64 > gates::MAX_NON_OK_FRACTION * cfg.trials as f64 {
            let first = rows
                .iter()
                .find(|r| r.n == n && r.status != TrialStatus::Ok)
                .and_then(|r| r.message.clone())
                .unwrap_or_default();
            return Err(Error::Experiment(format!(
                "{non_ok} of {} trials at n={n} were skipped or failed (first: {first})",
                cfg.trials
            )));
        }
    }
    Ok(rows)
}

fn gate_map(kind: ExperimentKind) -> BTreeMap<String, f64> {
    let mut m = BTreeMap::new();
    m.insert("max_non_ok_fraction".into(), gates::MAX_NON_OK_FRACTION);
    match kind {
        ExperimentKind::Filter => m.insert("filter_decay_factor".into(), gates::FILTER_DECAY_FACTOR),
        ExperimentKind::Eigenvalue => m.insert("eigen_relative_tolerance".into(), gates::EIGEN_RELATIVE_TOLERANCE),
        ExperimentKind::Multilayer => m.insert("depth_ratio_max".into(), gates::DEPTH_RATIO_MAX),
    };
    m
}

fn base_summary(rows: &[&TrialRecord], n: usize) -> SizeSummary {
    let count = |s| rows.iter().filter(|r| r.status == s).count();
    SizeSummary {
        n,
        ok: count(TrialStatus::Ok),
        skipped: count(TrialStatus::Skipped),
        failed: count(TrialStatus::Failed),
        error: None,
        eigenvalue_medians: Vec::new(),
        first_cluster_median: None,
        depth_errors: Vec::new(),
        depth_ratios: Vec::new(),
    }
}

/// Builds the report for `kind` from a finished trial table.
pub fn build_report(cfg: &ExperimentConfig, kind: ExperimentKind, trials: Vec<TrialRecord>) -> ConvergenceReport {
    let spectrum = continuum_spectrum(cfg.eigentrack_count + 1, cfg.limit_kind());
    let summary = cfg
        .n_grid
        .iter()
        .map(|&n| {
            let rows: Vec<&TrialRecord> = trials.iter().filter(|r| r.n == n).collect();
            let ok: Vec<&TrialRecord> = rows.iter().copied().filter(|r| r.status == TrialStatus::Ok).collect();
            let mut s = base_summary(&rows, n);
            match kind {
                ExperimentKind::Filter => {
                    let errs: Vec<f64> = ok.iter().filter_map(|r| r.filter_error).collect();
                    s.error = Quantiles::of(&errs);
                }
                ExperimentKind::Eigenvalue => {
                    let pooled: Vec<f64> = ok
                        .iter()
                        .flat_map(|r| r.eigenvalues.iter().zip(&spectrum).skip(1).map(|(v, t)| (v - t).abs()))
                        .collect();
                    s.error = Quantiles::of(&pooled);
                    s.eigenvalue_medians = (1..spectrum.len())
                        .map(|i| {
                            let v: Vec<f64> = ok.iter().filter_map(|r| r.eigenvalues.get(i).copied()).collect();
                            quantile(&v, 0.5)
                        })
                        .collect();
                    let cluster: Vec<f64> = ok.iter().flat_map(|r| r.eigenvalues.iter().skip(1).take(3).copied()).collect();
                    s.first_cluster_median = Quantiles::of(&cluster).map(|q| q.median);
                }
                ExperimentKind::Multilayer => {
                    let depth = ok.iter().map(|r| r.depth_errors.len()).max().unwrap_or(0);
                    s.depth_errors = (0..depth)
                        .filter_map(|l| Quantiles::of(&ok.iter().filter_map(|r| r.depth_errors.get(l).copied()).collect::<Vec<_>>()))
                        .collect();
                    s.depth_ratios = (0..depth)
                        .filter_map(|l| {
                            let ratios: Vec<f64> = ok
                                .iter()
                                .filter(|r| r.depth_errors.len() > l && r.depth_errors[0] > 0.0)
                                .map(|r| r.depth_errors[l] / r.depth_errors[0])
                                .collect();
                            Quantiles::of(&ratios)
                        })
                        .collect();
                    s.error = s.depth_errors.last().copied();
                }
            }
            s
        })
        .collect();
    let metric = match kind {
        ExperimentKind::Filter => "l2 norm of w(L_n) P_n f - P_n w(L) f",
        ExperimentKind::Eigenvalue => "|lambda_i - continuum lambda_i| pooled over tracked nonzero indices",
        ExperimentKind::Multilayer => "max over channels of |x^(D) - P_n f^(D)| at the deepest layer",
    };
    ConvergenceReport {
        schema_version: SCHEMA_VERSION,
        code_version: env!("CARGO_PKG_VERSION").into(),
        experiment: kind,
        metric: metric.into(),
        config: cfg.clone(),
        gates: gate_map(kind),
        continuum_eigenvalues: if kind == ExperimentKind::Eigenvalue { spectrum } else { Vec::new() },
        summary,
        trials,
    }
}

pub fn run_filter_convergence(cfg: &ExperimentConfig) -> Result<ConvergenceReport> {
    Ok(build_report(cfg, ExperimentKind::Filter, run_trials(cfg, None)?))
}

pub fn run_eigenvalue_convergence(cfg: &ExperimentConfig) -> Result<ConvergenceReport> {
    Ok(build_report(cfg, ExperimentKind::Eigenvalue, run_trials(cfg, None)?))
}

/// `net` must be linear with `A1 * A2 = 1` in every layer.
pub fn run_multilayer_convergence(cfg: &ExperimentConfig, net: &NetworkSpec) -> Result<ConvergenceReport> {
    Ok(build_report(cfg, ExperimentKind::Multilayer, run_trials(cfg, Some(net))?))
}

/// Runs one shared trial pass and builds a report for each requested
/// experiment. The multilayer report uses [`linear_heat_network`] of depth
/// `cfg.depth`.
pub fn run_experiments(cfg: &ExperimentConfig) -> Result<Vec<ConvergenceReport>> {
    let mut kinds = cfg.experiments.clone();
    kinds.sort();
    kinds.dedup();
    if kinds.is_empty() {
        return Err(Error::Config("no experiments requested".into()));
    }
    let net = kinds.contains(&ExperimentKind::Multilayer).then(|| linear_heat_network(cfg.depth));
    let trials = run_trials(cfg, net.as_ref())?;
    Ok(kinds.into_iter().map(|k| build_report(cfg, k, trials.clone())).collect())
}
