//! Truncated eigenbases, the graph Fourier transform and spectral filters.

mod chebyshev;
mod eigen;
mod filter;

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

pub use chebyshev::{
    apply_filter_chebyshev, default_domain, estimate_spectral_radius, gershgorin_bound, ChebyshevApprox, DOMAIN_SAFETY,
};
pub use eigen::{acceptance_tolerance, max_residual, smallest_eigenpairs, EigenMethod, EigenOptions, EigenPairs, DENSE_MAX_N};
pub use filter::SpectralFilter;

use crate::error::{check_dim, Error, Result};
use crate::graph::GraphLaplacian;
use crate::pointcloud::SignalMatrix;

pub const DEFAULT_KAPPA: usize = 64;

/// The `kappa` smallest eigenpairs of a graph Laplacian.
#[derive(Debug, Clone)]
pub struct SpectralBasis {
    eigenvalues: Vec<f64>,
    eigenvectors: DMatrix<f64>,
    fingerprint: u64,
    residual_max: f64,
    matvecs: usize,
    method: EigenMethod,
}

/// JSON form of a basis without its eigenvectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BasisSummary {
    pub eigenvalues: Vec<f64>,
    pub kappa: usize,
    pub residual_max: f64,
}

pub fn eigensolve(laplacian: &GraphLaplacian, kappa: usize) -> Result<SpectralBasis> {
    eigensolve_with(laplacian, kappa, &EigenOptions::default())
}

pub fn eigensolve_with(laplacian: &GraphLaplacian, kappa: usize, opts: &EigenOptions) -> Result<SpectralBasis> {
    let fingerprint = laplacian.fingerprint();
    let pairs = smallest_eigenpairs(laplacian.matrix(), kappa, fingerprint, opts)?;
    let residual_max = max_residual(laplacian.matrix(), &pairs.values, &pairs.vectors);
    Ok(SpectralBasis {
        eigenvalues: pairs.values,
        eigenvectors: pairs.vectors,
        fingerprint,
        residual_max,
        matvecs: pairs.matvecs,
        method: pairs.method,
    })
}

impl SpectralBasis {
    /// Wraps precomputed eigenpairs (ascending values, orthonormal columns).
    pub fn from_parts(eigenvalues: Vec<f64>, eigenvectors: DMatrix<f64>, fingerprint: u64) -> Result<Self> {
        check_dim("eigenvector columns", eigenvalues.len(), eigenvectors.ncols())?;
        if eigenvalues.is_empty() {
            return Err(Error::InvalidArgument("a basis needs at least one eigenpair".into()));
        }
        if eigenvalues.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::InvalidArgument("eigenvalues must be ascending".into()));
        }
        Ok(Self {
            eigenvalues,
            eigenvectors,
            fingerprint,
            residual_max: f64::NAN,
            matvecs: 0,
            method: EigenMethod::Dense,
        })
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn eigenvectors(&self) -> &DMatrix<f64> {
        &self.eigenvectors
    }

    pub fn eigenvector(&self, i: usize) -> DVector<f64> {
        self.eigenvectors.column(i).into_owned()
    }

    pub fn kappa(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn n(&self) -> usize {
        self.eigenvectors.nrows()
    }

    pub fn fingerprint(&self) -> u64 {
        self.fingerprint
    }

    pub fn residual_max(&self) -> f64 {
        self.residual_max
    }

    pub fn matvecs(&self) -> usize {
        self.matvecs
    }

    pub fn method(&self) -> EigenMethod {
        self.method
    }

    pub fn summary(&self) -> BasisSummary {
        BasisSummary {
            eigenvalues: self.eigenvalues.clone(),
            kappa: self.kappa(),
            residual_max: self.residual_max,
        }
    }

    /// Writes the eigenvectors as CSV, one row per vertex.
    pub fn write_eigenvectors_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for row in self.eigenvectors.row_iter() {
            w.write_record(row.iter().map(|v| format!("{v:e}"))).map_err(std::io::Error::from)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Orthonormality, residual and (for connected graphs) kernel checks.
    pub fn check_invariants(&self, laplacian: &GraphLaplacian, connected: bool) -> Result<()> {
        check_dim("basis rows", laplacian.n(), self.n())?;
        let k = self.kappa();
        let ortho = (self.eigenvectors.tr_mul(&self.eigenvectors) - DMatrix::identity(k, k)).amax();
        if ortho > 1e-8 {
            return Err(Error::InvalidArgument(format!("eigenvectors are not orthonormal: {ortho:e}")));
        }
        let lambda_k = self.eigenvalues[k - 1];
        let residual = max_residual(laplacian.matrix(), &self.eigenvalues, &self.eigenvectors);
        let tolerance = acceptance_tolerance(lambda_k);
        if residual > tolerance {
            return Err(Error::Solver {
                iterations: self.matvecs,
                max_residual: residual,
                tolerance,
            });
        }
        if connected && k > 1 && self.eigenvalues[0] > 1e-8 * lambda_k {
            return Err(Error::InvalidArgument(format!(
                "smallest eigenvalue {:e} of a connected graph is not numerically zero",
                self.eigenvalues[0]
            )));
        }
        Ok(())
    }
}

/// `<x, phi_i>` for each basis vector.
pub fn fourier_coeffs(x: &DVector<f64>, basis: &SpectralBasis) -> Result<DVector<f64>> {
    check_dim("signal length", basis.n(), x.len())?;
    Ok(basis.eigenvectors.tr_mul(x))
}

/// `sum_i w(lambda_i) <x, phi_i> phi_i` over the basis.
pub fn apply_filter_exact(w: &SpectralFilter, basis: &SpectralBasis, x: &DVector<f64>) -> Result<DVector<f64>> {
    let mut coeffs = fourier_coeffs(x, basis)?;
    for (c, &lambda) in coeffs.iter_mut().zip(&basis.eigenvalues) {
        *c *= w.response(lambda);
    }
    Ok(&basis.eigenvectors * coeffs)
}

/// Filter outputs indexed by filter `j` and channel `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct FilteredChannels {
    /// `outputs[j]` is `n x C`; column `k` holds `w_j(L) x_k`.
    pub outputs: Vec<DMatrix<f64>>,
}

impl FilteredChannels {
    pub fn filters(&self) -> usize {
        self.outputs.len()
    }

    pub fn get(&self, j: usize, k: usize) -> DVector<f64> {
        self.outputs[j].column(k).into_owned()
    }
}

/// Applies every filter of `bank` to every channel of `x`.
pub fn filter_bank_apply(bank: &[SpectralFilter], basis: &SpectralBasis, x: &SignalMatrix) -> Result<FilteredChannels> {
    let c = x.channels();
    let grid: Vec<SpectralFilter> = bank.iter().flat_map(|w| std::iter::repeat_n(w.clone(), c)).collect();
    filter_grid_apply(&grid, bank.len(), basis, x.values())
}

/// Applies `w_{j,k}` to channel `k`; `grid` is row-major with `J` rows of
/// `C` filters each.
pub fn filter_grid_apply(grid: &[SpectralFilter], j_count: usize, basis: &SpectralBasis, x: &DMatrix<f64>) -> Result<FilteredChannels> {
    check_dim("signal rows", basis.n(), x.nrows())?;
    let c = x.ncols();
    check_dim("filter grid entries", j_count * c, grid.len())?;
    let coeffs = basis.eigenvectors.tr_mul(x);
    let outputs = (0..j_count)
        .map(|j| {
            let mut scaled = coeffs.clone();
            for (k, mut col) in scaled.column_iter_mut().enumerate() {
                let w = &grid[j * c + k];
                for (v, &lambda) in col.iter_mut().zip(&basis.eigenvalues) {
                    *v *= w.response(lambda);
                }
            }
            &basis.eigenvectors * scaled
        })
        .collect();
    Ok(FilteredChannels { outputs })
}
