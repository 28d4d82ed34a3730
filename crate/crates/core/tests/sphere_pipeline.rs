use std::f64::consts::PI;

use mfcn::graph::{BuiltGraph, GraphConfig};
use mfcn::harness::{linear_heat_network, run_filter_convergence, run_multilayer_convergence, ExperimentConfig, ExperimentKind};
use mfcn::pointcloud::sample_sphere;
use mfcn::spectral::{eigensolve, SpectralFilter};
use mfcn::sphere::Expansion;

#[test]
fn eps_graph_spectrum_clusters_at_continuum_values() {
    let cloud = sample_sphere(4096, 11).unwrap();
    let built = BuiltGraph::build(&cloud, &GraphConfig::epsilon(2)).unwrap();
    assert!(built.connectivity.connected);
    let basis = eigensolve(&built.laplacian, 9).unwrap();
    let lam = basis.eigenvalues();
    assert!(lam[0].abs() <= 1e-8 * lam[8]);
    for &v in &lam[1..4] {
        let target = 1.0 / (4.0 * PI);
        assert!((v - target).abs() / target < 0.2, "{lam:?}");
    }
    for &v in &lam[4..9] {
        let target = 6.0 / (8.0 * PI);
        assert!((v - target).abs() / target < 0.2, "{lam:?}");
    }
    // the two clusters stay separated
    assert!(lam[4] / lam[3] > 2.0);
}

fn small_config(filter: SpectralFilter, signal: Expansion) -> ExperimentConfig {
    ExperimentConfig {
        n_grid: vec![512, 1024, 2048],
        trials: 5,
        filter,
        signal,
        base_seed: 2,
        experiments: vec![ExperimentKind::Filter],
        ..Default::default()
    }
}

#[test]
fn all_pass_filter_error_is_projection_residual() {
    let y21 = Expansion::single(2, 1).unwrap();
    let pass = run_filter_convergence(&small_config(SpectralFilter::Constant(1.0), y21)).unwrap();
    let heat = run_filter_convergence(&small_config(SpectralFilter::Heat, Expansion::default_signal())).unwrap();
    let pass_medians: Vec<f64> = pass.medians().into_iter().map(Option::unwrap).collect();
    assert!(pass_medians.windows(2).all(|w| w[1] < w[0]), "{pass_medians:?}");
    let heat_worst = heat.trials.iter().filter_map(|t| t.filter_error).fold(0.0, f64::max);
    let pass_worst = pass.trials.iter().filter_map(|t| t.filter_error).fold(0.0, f64::max);
    assert!(pass_worst < heat_worst, "{pass_worst} vs {heat_worst}");

    let t = &pass.trials[0];
    let cloud = sample_sphere(t.n, t.seed).unwrap();
    let built = BuiltGraph::build(&cloud, &pass.config.graph).unwrap();
    let basis = eigensolve(&built.laplacian, pass.config.kappa).unwrap();
    let f = Expansion::single(2, 1).unwrap().project(&cloud).unwrap();
    let phi = basis.eigenvectors();
    let residual = (&f - phi * (phi.transpose() * &f)).norm();
    assert!((residual - t.filter_error.unwrap()).abs() < 1e-10, "{residual} vs {:?}", t.filter_error);
}

#[test]
fn depth_one_network_reproduces_filter_errors() {
    let cfg = ExperimentConfig {
        n_grid: vec![300, 600],
        trials: 3,
        kappa: 24,
        experiments: vec![ExperimentKind::Filter],
        ..Default::default()
    };
    let filter = run_filter_convergence(&cfg).unwrap();
    let depth = run_multilayer_convergence(&cfg, &linear_heat_network(1)).unwrap();
    for (f, d) in filter.trials.iter().zip(&depth.trials) {
        assert_eq!((f.n, f.trial, f.seed), (d.n, d.trial, d.seed));
        let fe = f.filter_error.unwrap();
        assert!((d.depth_errors[0] - fe).abs() <= 1e-12 * fe.max(1.0), "{} vs {fe}", d.depth_errors[0]);
    }
}

#[test]
fn zero_signal_has_zero_error_at_every_depth() {
    let cfg = ExperimentConfig {
        n_grid: vec![300],
        trials: 2,
        kappa: 16,
        signal: Expansion::zero(),
        ..Default::default()
    };
    let r = run_multilayer_convergence(&cfg, &linear_heat_network(3)).unwrap();
    for t in &r.trials {
        assert_eq!(t.depth_errors, vec![0.0; 3]);
    }
}
