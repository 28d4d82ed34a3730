use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

use mfcn::graph::{BuiltGraph, GraphConfig};
use mfcn::mfcn::{network_forward, NetworkSpec};
use mfcn::pointcloud::{load_points, SignalMatrix};
use mfcn::spectral::eigensolve;

fn mfcn(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mfcn")).args(args).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn ok(args: &[&str]) -> Output {
    let o = mfcn(args);
    assert_eq!(code(&o), 0, "{args:?} failed: {}", stderr(&o));
    o
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn read_json(p: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(p).unwrap()).unwrap()
}

fn read_csv(p: &Path) -> (Vec<String>, Vec<Vec<f64>>) {
    let text = fs::read_to_string(p).unwrap();
    let mut lines = text.lines();
    let header = lines.next().unwrap().split(',').map(str::to_string).collect();
    let rows = lines.map(|l| l.split(',').map(|v| v.parse().unwrap()).collect()).collect();
    (header, rows)
}

struct Workspace {
    dir: TempDir,
}

impl Workspace {
    fn new() -> Self {
        Self { dir: TempDir::new().unwrap() }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn sample(&self, n: usize, seed: u64) -> PathBuf {
        let p = self.path("points.csv");
        ok(&["sample", "--n", &n.to_string(), "--seed", &seed.to_string(), "--out", path_str(&p)]);
        p
    }

    /// Two raw channels built from the point coordinates.
    fn signals(&self, points: &Path) -> PathBuf {
        let text = fs::read_to_string(points).unwrap();
        let mut out = String::from("a,b\n");
        for line in text.lines() {
            let c: Vec<f64> = line.split(',').map(|v| v.parse().unwrap()).collect();
            out += &format!("{:?},{:?}\n", c[2], c[0] * c[1] - 0.1);
        }
        let p = self.path("signals.csv");
        fs::write(&p, out).unwrap();
        p
    }

    fn write(&self, name: &str, text: &str) -> PathBuf {
        let p = self.path(name);
        fs::write(&p, text).unwrap();
        p
    }
}

#[test]
fn sample_is_reproducible_and_validated() {
    let ws = Workspace::new();
    let a = ws.sample(100, 1);
    let first = fs::read_to_string(&a).unwrap();
    assert_eq!(first.lines().count(), 100);
    let b = ws.sample(100, 1);
    assert_eq!(fs::read_to_string(b).unwrap(), first);

    let stdout = ok(&["sample", "--n", "100", "--seed", "1"]).stdout;
    assert_eq!(String::from_utf8(stdout).unwrap(), first);

    let zero = mfcn(&["sample", "--n", "0"]);
    assert_eq!(code(&zero), 2);
    assert!(stderr(&zero).contains("--n"));
    assert_eq!(code(&mfcn(&["sample", "--n", "ten"])), 2);
    assert_eq!(code(&mfcn(&["sample", "--n", "5", "--jobs", "0"])), 2);
}

#[test]
fn graph_writes_edges_and_sidecar() {
    let ws = Workspace::new();
    let pts = ws.sample(400, 2);
    let edges = ws.path("edges.txt");
    ok(&["graph", "--points", path_str(&pts), "--mode", "knn", "--k", "6", "--out", path_str(&edges)]);
    let meta = read_json(&ws.path("edges.txt.json"));
    assert_eq!(meta["graph"]["n"], 400);
    assert_eq!(meta["graph"]["mode"], "knn");
    assert_eq!(meta["graph"]["eps_or_k"], 6.0);
    assert_eq!(meta["config"]["explicit_k"], 6);
    let lines: Vec<(usize, usize)> = fs::read_to_string(&edges)
        .unwrap()
        .lines()
        .map(|l| {
            let mut it = l.split_whitespace().map(|v| v.parse().unwrap());
            (it.next().unwrap(), it.next().unwrap())
        })
        .collect();
    assert_eq!(lines.len() as u64, meta["graph"]["edges"].as_u64().unwrap());
    assert!(lines.iter().all(|&(i, j)| i < j && j < 400));
    assert!(lines.len() >= 400 * 6 / 2);

    let graph_cfg = ws.write("graph.json", r#"{"mode": "epsilon", "intrinsic_dim": 2, "scale_c": 2.5}"#);
    ok(&["graph", "--points", path_str(&pts), "--graph-config", path_str(&graph_cfg), "--scale", "2.0", "--out", path_str(&edges)]);
    assert_eq!(read_json(&ws.path("edges.txt.json"))["config"]["scale_c"], 2.0);

    let bad = ws.write("bad_graph.json", r#"{"mode": "epsilon", "intrinsic_dim": 2, "radius": 1}"#);
    let o = mfcn(&["graph", "--points", path_str(&pts), "--graph-config", path_str(&bad), "--out", path_str(&edges)]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("radius"));
    assert_eq!(code(&mfcn(&["graph", "--points", path_str(&pts), "--eps", "-1", "--out", path_str(&edges)])), 2);
    let missing = ws.path("missing.csv");
    assert_eq!(code(&mfcn(&["graph", "--points", path_str(&missing), "--out", path_str(&edges)])), 1);
}

#[test]
fn eigen_writes_basis() {
    let ws = Workspace::new();
    let pts = ws.sample(500, 3);
    let out = ws.path("basis.json");
    let vecs = ws.path("vecs.csv");
    ok(&["eigen", "--points", path_str(&pts), "--kappa", "9", "--out", path_str(&out), "--vectors", path_str(&vecs)]);
    let basis = read_json(&out);
    let values: Vec<f64> = basis["eigenvalues"].as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).collect();
    assert_eq!(values.len(), 9);
    assert!(values[0].abs() < 1e-8);
    assert!(values.windows(2).all(|w| w[0] <= w[1]));
    assert_eq!(basis["config"]["kappa"], 9);
    let text = fs::read_to_string(vecs).unwrap();
    assert_eq!(text.lines().count(), 500);
    assert!(text.lines().all(|l| l.split(',').count() == 9));

    assert_eq!(code(&mfcn(&["eigen", "--points", path_str(&pts), "--kappa", "501", "--out", path_str(&out)])), 2);
}

#[test]
fn filter_routes_agree() {
    let ws = Workspace::new();
    let pts = ws.sample(300, 4);
    let sig = ws.signals(&pts);
    let exact = ws.path("exact.csv");
    let cheb = ws.path("cheb.csv");
    let common = ["filter", "--points", path_str(&pts), "--signals", path_str(&sig), "--filter", "wavelet:2"];
    ok(&[&common[..], &["--kappa", "300", "--out", path_str(&exact)]].concat());
    ok(&[&common[..], &["--method", "chebyshev", "--out", path_str(&cheb)]].concat());
    let (h1, a) = read_csv(&exact);
    let (h2, b) = read_csv(&cheb);
    assert_eq!(h1, vec!["a", "b"]);
    assert_eq!(h1, h2);
    let diff = a.iter().flatten().zip(b.iter().flatten()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    assert!(diff < 1e-8, "{diff}");
    assert!(read_json(&ws.path("cheb.csv.json"))["chebyshev_degree"].as_u64().unwrap() > 0);

    let bad = mfcn(&[&common[..4], &["--filter", "gaussian", "--out", path_str(&exact)]].concat());
    assert_eq!(code(&bad), 2);
}

const IDENTITY_NET: &str = r#"{"layers": [{"J": 1, "C_in": 2, "C_mid": 2, "J_out": 1,
    "filters": ["constant:1", "constant:1"],
    "theta": [[[1, 0], [0, 1]]], "alpha": [[[1]], [[1]]], "activation": "relu"}]}"#;

const MCN_NET: &str = r#"{"layers": [{"J": 1, "C_in": 2, "C_mid": 2, "J_out": 1,
    "filters": ["heat", "heat"],
    "theta": [[[1, 0], [0, 1]]], "alpha": [[[1]], [[1]]], "activation": "relu"}], "preset": "mcn"}"#;

#[test]
fn forward_identity_network_is_activation() {
    let ws = Workspace::new();
    let pts = ws.sample(200, 5);
    let sig = ws.signals(&pts);
    let net = ws.write("net.json", IDENTITY_NET);
    let out = ws.path("out.csv");
    ok(&["forward", "--points", path_str(&pts), "--signals", path_str(&sig), "--net", path_str(&net), "--kappa", "200", "--out", path_str(&out)]);
    let (_, raw) = read_csv(&sig);
    let (_, y) = read_csv(&out);
    let scale = 1.0 / 200f64.sqrt();
    for (r, o) in raw.iter().zip(&y) {
        for (x, v) in r.iter().zip(o) {
            assert!((v - (x * scale).max(0.0)).abs() < 1e-12);
        }
    }
    let meta = read_json(&ws.path("out.csv.json"));
    assert_eq!(meta["weight_norms"]["a1"][0], 1.0);
    assert_eq!(meta["weight_norms"]["a2"][0], 1.0);
    assert_eq!(meta["connected"], true);
    assert_eq!(meta["config"]["kappa"], 200);
}

#[test]
fn forward_mcn_equals_filter_then_relu() {
    let ws = Workspace::new();
    let pts = ws.sample(250, 6);
    let sig = ws.signals(&pts);
    let net = ws.write("net.json", MCN_NET);
    let fwd = ws.path("fwd.csv");
    let filt = ws.path("filt.csv");
    let graph = ["--points", path_str(&pts), "--signals", path_str(&sig), "--kappa", "32"];
    ok(&[&["forward"][..], &graph, &["--net", path_str(&net), "--out", path_str(&fwd)]].concat());
    ok(&[&["filter"][..], &graph, &["--filter", "heat", "--out", path_str(&filt)]].concat());
    let (_, y) = read_csv(&fwd);
    let (_, f) = read_csv(&filt);
    let diff = y.iter().flatten().zip(f.iter().flatten()).map(|(a, b)| (a - b.max(0.0)).abs()).fold(0.0, f64::max);
    assert!(diff < 1e-13, "{diff}");
}

#[test]
fn forward_matches_library_bit_for_bit() {
    let ws = Workspace::new();
    let pts = ws.sample(300, 7);
    let sig = ws.signals(&pts);
    let net_path = ws.write("net.json", MCN_NET);
    let out = ws.path("out.csv");
    ok(&["forward", "--points", path_str(&pts), "--signals", path_str(&sig), "--net", path_str(&net_path), "--mode", "knn", "--kappa", "20", "--out", path_str(&out)]);

    let cloud = load_points(&pts, 2).unwrap();
    let built = BuiltGraph::build(&cloud, &GraphConfig::knn(2)).unwrap();
    let basis = eigensolve(&built.laplacian, 20).unwrap();
    let x = SignalMatrix::load_csv(&sig, &cloud).unwrap();
    let net = NetworkSpec::from_json(MCN_NET).unwrap();
    let mut expected = Vec::new();
    network_forward(&net, &basis, &x).unwrap().write_csv(&mut expected).unwrap();
    assert_eq!(fs::read(&out).unwrap(), expected);
}

#[test]
fn forward_reports_problems() {
    let ws = Workspace::new();
    let pts = ws.sample(200, 8);
    let sig = ws.signals(&pts);
    let net = ws.write("net.json", IDENTITY_NET);
    let out = ws.path("out.csv");

    let o = ok(&["forward", "--points", path_str(&pts), "--signals", path_str(&sig), "--net", path_str(&net), "--eps", "0.05", "--kappa", "8", "--out", path_str(&out)]);
    assert!(stderr(&o).contains("disconnected"));
    assert_eq!(read_json(&ws.path("out.csv.json"))["graph"]["connected"], false);

    let one = ws.write("one.csv", &"1.0\n".repeat(200));
    let o = mfcn(&["forward", "--points", path_str(&pts), "--signals", path_str(&one), "--net", path_str(&net), "--out", path_str(&out)]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("input channels"));

    let short = ws.write("short.csv", "1.0,2.0\n3.0,4.0\n");
    let o = mfcn(&["forward", "--points", path_str(&pts), "--signals", path_str(&short), "--net", path_str(&net), "--out", path_str(&out)]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("signal rows"));

    let extra = ws.write("extra.json", &IDENTITY_NET.replace("\"J\": 1,", "\"J\": 1, \"gain\": 2,"));
    let o = mfcn(&["forward", "--points", path_str(&pts), "--signals", path_str(&sig), "--net", path_str(&extra), "--out", path_str(&out)]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("layers[0].gain"));

    let broken = ws.write("broken.json", "{\"layers\": [");
    let o = mfcn(&["forward", "--points", path_str(&pts), "--signals", path_str(&sig), "--net", path_str(&broken), "--out", path_str(&out)]);
    assert_eq!(code(&o), 2);
}

#[test]
fn converge_default_sphere_config() {
    let ws = Workspace::new();
    let report = ws.path("report.json");
    let csv = ws.path("raw.csv");
    let svg = ws.path("plot.svg");
    ok(&["converge", "--out", path_str(&report), "--csv", path_str(&csv), "--svg", path_str(&svg)]);

    let r = read_json(&report);
    assert_eq!(r["config"]["trials"], 10);
    let reports = r["reports"].as_array().unwrap();
    assert_eq!(reports.len(), 2);
    for rep in reports {
        let medians: Vec<f64> = rep["summary"]
            .as_array()
            .unwrap()
            .iter()
            .map(|s| s["error"]["median"].as_f64().unwrap())
            .collect();
        assert_eq!(medians.len(), 4);
        assert!(medians.windows(2).all(|w| w[1] < w[0]), "{}: {medians:?}", rep["experiment"]);
    }

    let table = fs::read_to_string(&csv).unwrap();
    assert_eq!(table.lines().count(), 1 + 4 * 10);
    assert!(table.starts_with("n,trial,seed,mode,eps_or_k,connected,status,filter_error,lambda_1"));

    let plot = fs::read_to_string(&svg).unwrap();
    assert_eq!(plot.matches("<polyline").count(), 2);
    assert_eq!(plot.matches("<polygon").count(), 2);
    assert!(plot.contains("data-experiment=\"filter\"") && plot.contains("data-experiment=\"eigenvalue\""));
}

#[test]
fn converge_overrides_and_errors() {
    let ws = Workspace::new();
    let cfg = ws.write("conv.json", r#"{"n_grid": [200, 400], "trials": 2, "kappa": 12, "base_seed": 3}"#);
    let a = ws.path("a.csv");
    let b = ws.path("b.csv");
    let report = ws.path("r.json");
    let args = |csv: &Path, jobs: &str| {
        ok(&["converge", "--config", path_str(&cfg), "--mode", "knn", "--trials", "3", "--experiments", "eigenvalue,multilayer", "--jobs", jobs, "--out", path_str(&report), "--csv", path_str(csv)]);
    };
    args(&a, "1");
    let r = read_json(&report);
    assert_eq!(r["config"]["trials"], 3);
    assert_eq!(r["config"]["kappa"], 12);
    assert_eq!(r["config"]["graph"]["mode"], "knn");
    assert_eq!(r["config"]["base_seed"], 3);
    assert_eq!(r["reports"].as_array().unwrap().len(), 2);
    args(&b, "2");
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());

    let unknown = ws.write("unknown.json", r#"{"trials": 2, "samples": 5, "graph": {"mode": "knn", "intrinsic_dim": 2, "k": 3}}"#);
    let o = mfcn(&["converge", "--config", path_str(&unknown), "--out", path_str(&report)]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("samples") && stderr(&o).contains("graph.k"), "{}", stderr(&o));

    let malformed = ws.write("malformed.json", "{\"trials\": ");
    assert_eq!(code(&mfcn(&["converge", "--config", path_str(&malformed), "--out", path_str(&report)])), 2);
    assert_eq!(code(&mfcn(&["converge", "--trials", "0", "--out", path_str(&report)])), 2);
    assert_eq!(code(&mfcn(&["converge", "--experiments", "speed", "--out", path_str(&report)])), 2);
}

#[test]
fn bernstein_report() {
    let ws = Workspace::new();
    let out = ws.path("b.json");
    ok(&["bernstein", "--n-grid", "256,512", "--trials", "5", "--seed", "2", "--out", path_str(&out)]);
    let r = read_json(&out);
    assert_eq!(r["report"]["rows"].as_array().unwrap().len(), 2 * 45);
    assert!(r["worst_frequency"].as_f64().unwrap() <= 0.2);
    assert_eq!(r["config"]["seed"], 2);
    assert_eq!(code(&mfcn(&["bernstein", "--trials", "0", "--out", path_str(&out)])), 2);
}
