//! Smallest eigenpairs of a sparse symmetric matrix.
//!
//! Small problems go to a dense symmetric solver. Larger ones use a
//! thick-restart Lanczos iteration (symmetric Krylov-Schur form) with full
//! two-pass reorthogonalization: the basis is expanded to `m` vectors, the
//! projected matrix is diagonalized, the `keep` smallest Ritz vectors are
//! retained together with the residual direction, and expansion resumes.

use log::{debug, warn};
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::CsrMatrix;
use crate::rng;

/// Problems with at most this many rows are solved densely.
pub const DENSE_MAX_N: usize = 600;

#[derive(Debug, Clone, PartialEq)]
pub struct EigenOptions {
    /// Seeds the Krylov start vector; `None` derives it from the matrix.
    pub start_seed: Option<u64>,
    /// Relative residual target of the iterative solver.
    pub tol: f64,
    /// Mat-vec budget; `None` means `10 kappa + 200`.
    pub max_matvecs: Option<usize>,
    /// Force the dense or the iterative path.
    pub method: Option<EigenMethod>,
}

impl Default for EigenOptions {
    fn default() -> Self {
        Self {
            start_seed: None,
            tol: 1e-8,
            max_matvecs: None,
            method: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EigenMethod {
    Dense,
    Lanczos,
}

/// Ascending eigenvalues and matching orthonormal columns.
#[derive(Debug, Clone)]
pub struct EigenPairs {
    pub values: Vec<f64>,
    pub vectors: DMatrix<f64>,
    pub matvecs: usize,
    pub method: EigenMethod,
}

/// Residual tolerance a returned pair must meet: `1e-6 max(1, lambda_max)`.
pub fn acceptance_tolerance(largest: f64) -> f64 {
    1e-6 * largest.abs().max(1.0)
}

pub fn smallest_eigenpairs(a: &CsrMatrix, kappa: usize, fingerprint: u64, opts: &EigenOptions) -> Result<EigenPairs> {
    let n = a.n();
    if kappa == 0 || kappa > n {
        return Err(Error::InvalidArgument(format!("kappa must lie in 1..={n}, got {kappa}")));
    }
    let subspace = lanczos_subspace(n, kappa);
    let method = opts.method.unwrap_or(if n <= DENSE_MAX_N || subspace.is_none() {
        EigenMethod::Dense
    } else {
        EigenMethod::Lanczos
    });
    let mut pairs = match (method, subspace) {
        (EigenMethod::Lanczos, Some(m)) => {
            let seed = opts.start_seed.unwrap_or(fingerprint);
            let budget = opts.max_matvecs.unwrap_or(10 * kappa + 200);
            thick_restart_lanczos(a, kappa, m, seed, opts.tol, budget)?
        }
        _ => dense_smallest(a, kappa),
    };
    fix_signs(&mut pairs.vectors);
    Ok(pairs)
}

/// Krylov dimension for `kappa` wanted pairs, or `None` when the problem is
/// too small for restarting to pay off.
fn lanczos_subspace(n: usize, kappa: usize) -> Option<usize> {
    let m = (2 * kappa + 32).min(n);
    (m >= kappa + 16).then_some(m)
}

fn dense_smallest(a: &CsrMatrix, kappa: usize) -> EigenPairs {
    let eig = SymmetricEigen::new(a.to_dense());
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    order.truncate(kappa);
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let cols: Vec<DVector<f64>> = order.iter().map(|&i| eig.eigenvectors.column(i).into_owned()).collect();
    EigenPairs {
        values,
        vectors: DMatrix::from_columns(&cols),
        matvecs: 0,
        method: EigenMethod::Dense,
    }
}

/// Makes the first entry of each column that is not negligible positive.
pub(crate) fn fix_signs(vectors: &mut DMatrix<f64>) {
    for mut col in vectors.column_iter_mut() {
        let scale = col.amax();
        if scale == 0.0 {
            continue;
        }
        if let Some(&first) = col.iter().find(|v| v.abs() > 1e-10 * scale) {
            if first < 0.0 {
                col.neg_mut();
            }
        }
    }
}

/// Sorted eigen-decomposition of a small symmetric matrix.
fn sorted_eigen(h: DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let eig = SymmetricEigen::new(h);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let cols: Vec<DVector<f64>> = order.iter().map(|&i| eig.eigenvectors.column(i).into_owned()).collect();
    (values, DMatrix::from_columns(&cols))
}

/// Orthogonalizes `w` against the first `len` columns of `basis` (two
/// classical Gram-Schmidt passes). Returns the accumulated coefficients.
fn orthogonalize(basis: &DMatrix<f64>, len: usize, w: &mut DVector<f64>) -> DVector<f64> {
    let v = basis.columns(0, len);
    let mut h = v.tr_mul(w);
    w.gemv(-1.0, &v, &h, 1.0);
    let h2 = v.tr_mul(w);
    w.gemv(-1.0, &v, &h2, 1.0);
    h += h2;
    h
}

fn random_unit(n: usize, seed: u64) -> DVector<f64> {
    let mut rng = rng::stream(seed, rng::tag::LANCZOS_START);
    let v = DVector::from_fn(n, |_, _| StandardNormal.sample(&mut rng));
    v.normalize()
}

fn thick_restart_lanczos(a: &CsrMatrix, kappa: usize, m: usize, seed: u64, tol: f64, budget: usize) -> Result<EigenPairs> {
    let n = a.n();
    let keep = (kappa + (m - kappa) / 2).min(m - 1);
    let mut basis = DMatrix::<f64>::zeros(n, m + 1);
    let mut proj = DMatrix::<f64>::zeros(m, m);
    basis.set_column(0, &random_unit(n, seed));

    let mut start = 0;
    let mut matvecs = 0;
    let mut restarts = 0u64;
    let mut w = DVector::<f64>::zeros(n);
    loop {
        let mut beta = 0.0;
        for j in start..m {
            a.mul_vec_into(basis.column(j).as_slice(), w.as_mut_slice());
            matvecs += 1;
            let h = orthogonalize(&basis, j + 1, &mut w);
            for i in 0..=j {
                proj[(i, j)] = h[i];
                proj[(j, i)] = h[i];
            }
            beta = w.norm();
            let scale = proj[(j, j)].abs().max(h.amax()).max(f64::MIN_POSITIVE);
            if beta <= 1e-12 * scale {
                // invariant subspace: continue from a fresh direction
                restarts += 1;
                w = random_unit(n, seed ^ rng::mix64(restarts));
                orthogonalize(&basis, j + 1, &mut w);
                beta = 0.0;
                w.normalize_mut();
                basis.set_column(j + 1, &w);
            } else {
                basis.set_column(j + 1, &(&w / beta));
            }
            if j + 1 < m {
                proj[(j + 1, j)] = beta;
                proj[(j, j + 1)] = beta;
            }
        }

        let (theta, u) = sorted_eigen(proj.clone());
        let residual = |i: usize| (beta * u[(m - 1, i)]).abs();
        let target = tol * theta[kappa - 1].abs().max(1.0);
        let worst = (0..kappa).map(residual).fold(0.0, f64::max);
        let converged = worst <= target;
        if converged || matvecs >= budget {
            let values = theta[..kappa].to_vec();
            let mut vectors = basis.columns(0, m) * u.columns(0, kappa);
            for mut col in vectors.column_iter_mut() {
                col.normalize_mut();
            }
            debug!("lanczos: n={n} kappa={kappa} m={m} matvecs={matvecs} ritz residual={worst:.3e}");
            if !converged {
                let explicit = max_residual(a, &values, &vectors);
                let accept = acceptance_tolerance(values[kappa - 1]);
                if explicit > accept {
                    return Err(Error::Solver {
                        iterations: matvecs,
                        max_residual: explicit,
                        tolerance: accept,
                    });
                }
                warn!("lanczos stopped at budget {budget} with residual {explicit:.3e} (target {target:.3e})");
            }
            return Ok(EigenPairs {
                values,
                vectors,
                matvecs,
                method: EigenMethod::Lanczos,
            });
        }

        // thick restart on the `keep` smallest Ritz pairs
        let ritz = basis.columns(0, m) * u.columns(0, keep);
        let residual_dir = basis.column(m).into_owned();
        basis.columns_mut(0, keep).copy_from(&ritz);
        basis.set_column(keep, &residual_dir);
        proj.fill(0.0);
        for i in 0..keep {
            proj[(i, i)] = theta[i];
            let b = beta * u[(m - 1, i)];
            proj[(i, keep)] = b;
            proj[(keep, i)] = b;
        }
        start = keep;
    }
}

/// `max_i |A v_i - lambda_i v_i|_2`.
pub fn max_residual(a: &CsrMatrix, values: &[f64], vectors: &DMatrix<f64>) -> f64 {
    let mut y = vec![0.0; a.n()];
    values
        .iter()
        .enumerate()
        .map(|(i, &lambda)| {
            let v = vectors.column(i);
            a.mul_vec_into(v.as_slice(), &mut y);
            y.iter().zip(v.iter()).map(|(av, vi)| (av - lambda * vi).powi(2)).sum::<f64>().sqrt()
        })
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{BuiltGraph, GraphConfig};
    use crate::pointcloud::sample_sphere;

    fn path_laplacian(n: usize) -> CsrMatrix {
        let rows = (0..n)
            .map(|i| {
                let mut row = Vec::new();
                let mut deg = 0.0;
                if i > 0 {
                    row.push((i - 1, -1.0));
                    deg += 1.0;
                }
                if i + 1 < n {
                    row.push((i + 1, -1.0));
                    deg += 1.0;
                }
                row.push((i, deg));
                row
            })
            .collect();
        CsrMatrix::from_rows(rows)
    }

    #[test]
    fn lanczos_matches_closed_form_path_spectrum() {
        // path graph eigenvalues: 2 - 2 cos(pi k / n)
        let n = 700;
        let a = path_laplacian(n);
        let pairs = smallest_eigenpairs(&a, 10, 1, &EigenOptions {
            method: Some(EigenMethod::Lanczos),
            max_matvecs: Some(20_000),
            ..Default::default()
        })
        .unwrap();
        for (k, &v) in pairs.values.iter().enumerate() {
            let exact = 2.0 - 2.0 * (std::f64::consts::PI * k as f64 / n as f64).cos();
            assert!((v - exact).abs() < 1e-9, "k={k} {v} vs {exact}");
        }
        assert!(max_residual(&a, &pairs.values, &pairs.vectors) < 1e-6);
    }

    #[test]
    fn lanczos_agrees_with_dense_on_sphere_graph() {
        let cloud = sample_sphere(800, 5).unwrap();
        let built = BuiltGraph::build(&cloud, &GraphConfig::epsilon(2)).unwrap();
        let a = built.laplacian.matrix();
        let dense = smallest_eigenpairs(a, 64, 0, &EigenOptions {
            method: Some(EigenMethod::Dense),
            ..Default::default()
        })
        .unwrap();
        let krylov = smallest_eigenpairs(a, 64, 0, &EigenOptions::default()).unwrap();
        assert_eq!(krylov.method, EigenMethod::Lanczos);
        assert!(krylov.matvecs <= 10 * 64 + 200);
        for (d, k) in dense.values.iter().zip(&krylov.values) {
            assert!((d - k).abs() < 1e-9, "{d} vs {k}");
        }
        let ortho = krylov.vectors.tr_mul(&krylov.vectors) - DMatrix::identity(64, 64);
        assert!(ortho.amax() < 1e-8);
    }

    #[test]
    fn budget_exhaustion_is_reported() {
        let a = path_laplacian(2000);
        let err = smallest_eigenpairs(&a, 40, 3, &EigenOptions {
            method: Some(EigenMethod::Lanczos),
            max_matvecs: Some(120),
            ..Default::default()
        });
        assert!(matches!(err, Err(Error::Solver { .. })));
    }

    #[test]
    fn sign_convention() {
        let mut v = DMatrix::from_column_slice(3, 2, &[0.0, -1.0, 2.0, 1e-14, 3.0, -1.0]);
        fix_signs(&mut v);
        assert_eq!(v.column(0).as_slice(), &[0.0, 1.0, -2.0]);
        assert_eq!(v.column(1).as_slice(), &[1e-14, 3.0, -1.0]);
    }
}
