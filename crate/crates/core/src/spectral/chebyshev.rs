//! Polynomial filtering without an eigendecomposition.
//!
//! A response on `[0, domain_max]` is expanded in Chebyshev polynomials of
//! the rescaled variable `t = 2 lambda / domain_max - 1` and applied to a
//! vector with the three-term (Clenshaw) recurrence, one mat-vec per degree.

use nalgebra::DVector;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::SpectralFilter;
use crate::error::{check_dim, Error, Result};
use crate::graph::GraphLaplacian;
use crate::rng;

/// Safety factor applied to the power-iteration spectral radius.
pub const DOMAIN_SAFETY: f64 = 1.05;
const POWER_ITERATIONS: usize = 300;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChebyshevApprox {
    /// `f(lambda) ~ sum_k coeffs[k] T_k(t)`.
    pub coeffs: Vec<f64>,
    pub domain_max: f64,
    /// Bound on `sup |f - approx|` over `[0, domain_max]`: the coefficient
    /// tail of a high-order expansion plus that expansion's sampled error.
    pub sup_error: f64,
}

fn chebyshev_coefficients<F: Fn(f64) -> f64>(f: F, domain_max: f64, nodes: usize) -> Vec<f64> {
    let values: Vec<f64> = (0..nodes)
        .map(|i| {
            let t = (std::f64::consts::PI * (i as f64 + 0.5) / nodes as f64).cos();
            f(0.5 * domain_max * (t + 1.0))
        })
        .collect();
    (0..nodes)
        .map(|k| {
            let s: f64 = values
                .iter()
                .enumerate()
                .map(|(i, v)| v * (std::f64::consts::PI * k as f64 * (i as f64 + 0.5) / nodes as f64).cos())
                .sum();
            let c = 2.0 * s / nodes as f64;
            if k == 0 {
                c / 2.0
            } else {
                c
            }
        })
        .collect()
}

fn clenshaw_scalar(coeffs: &[f64], t: f64) -> f64 {
    let (mut b1, mut b2) = (0.0, 0.0);
    for &c in coeffs.iter().skip(1).rev() {
        let b0 = c + 2.0 * t * b1 - b2;
        b2 = b1;
        b1 = b0;
    }
    coeffs[0] + t * b1 - b2
}

impl ChebyshevApprox {
    /// Degree-`degree` expansion of `filter` on `[0, domain_max]`.
    pub fn fit(filter: &SpectralFilter, domain_max: f64, degree: usize) -> Result<Self> {
        filter.validate()?;
        if !(domain_max > 0.0 && domain_max.is_finite()) {
            return Err(Error::InvalidArgument(format!("domain_max must be positive, got {domain_max}")));
        }
        if let SpectralFilter::Constant(c) = filter {
            let mut coeffs = vec![0.0; degree + 1];
            coeffs[0] = *c;
            return Ok(Self {
                coeffs,
                domain_max,
                sup_error: 0.0,
            });
        }
        let nodes = (4 * (degree + 1)).max(256);
        let full = chebyshev_coefficients(|l| filter.response(l), domain_max, nodes);
        let tail: f64 = full[degree + 1..].iter().map(|c| c.abs()).sum();
        let grid = 4 * nodes;
        let aliasing = (0..=grid)
            .map(|i| {
                let t = -1.0 + 2.0 * i as f64 / grid as f64;
                (filter.response(0.5 * domain_max * (t + 1.0)) - clenshaw_scalar(&full, t)).abs()
            })
            .fold(0.0, f64::max);
        Ok(Self {
            coeffs: full[..=degree].to_vec(),
            domain_max,
            sup_error: tail + aliasing,
        })
    }

    /// Lowest degree up to `max_degree` whose error bound is within `tol`.
    pub fn fit_to_tolerance(filter: &SpectralFilter, domain_max: f64, tol: f64, max_degree: usize) -> Result<Self> {
        let mut degree = 0;
        loop {
            let approx = Self::fit(filter, domain_max, degree)?;
            if approx.sup_error <= tol {
                return Ok(approx);
            }
            if degree >= max_degree {
                return Err(Error::InvalidArgument(format!(
                    "no Chebyshev expansion up to degree {max_degree} reaches {tol:e} (best {:e})",
                    approx.sup_error
                )));
            }
            degree = (degree * 2).max(degree + 4).min(max_degree);
        }
    }

    /// Fits on the domain `[0, 1.05 * power-iteration estimate]`, capped by
    /// the Gershgorin bound of `laplacian`.
    pub fn for_laplacian(filter: &SpectralFilter, laplacian: &GraphLaplacian, degree: usize) -> Result<Self> {
        Self::fit(filter, default_domain(laplacian), degree)
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn eval(&self, lambda: f64) -> f64 {
        clenshaw_scalar(&self.coeffs, 2.0 * lambda / self.domain_max - 1.0)
    }

    /// Clenshaw recurrence with the operator `T = (2/domain_max) L - I`.
    /// Does not check the domain.
    pub fn apply_unchecked(&self, laplacian: &GraphLaplacian, x: &DVector<f64>) -> Result<DVector<f64>> {
        let n = laplacian.n();
        check_dim("Chebyshev filter input", n, x.len())?;
        let a = laplacian.matrix();
        let scale = 2.0 / self.domain_max;
        let mut tmp = vec![0.0; n];
        // t_apply(v) = scale * L v - v
        let mut t_apply = |v: &DVector<f64>| -> DVector<f64> {
            a.mul_vec_into(v.as_slice(), &mut tmp);
            DVector::from_iterator(n, tmp.iter().zip(v.iter()).map(|(lv, vi)| scale * lv - vi))
        };
        let mut b1 = DVector::zeros(n);
        let mut b2 = DVector::zeros(n);
        for &c in self.coeffs.iter().skip(1).rev() {
            let mut b0 = t_apply(&b1) * 2.0 - &b2;
            b0.axpy(c, x, 1.0);
            b2 = std::mem::replace(&mut b1, b0);
        }
        if self.coeffs.len() == 1 {
            return Ok(x * self.coeffs[0]);
        }
        let mut out = t_apply(&b1) - b2;
        out.axpy(self.coeffs[0], x, 1.0);
        Ok(out)
    }
}

/// Power-iteration estimate of the largest eigenvalue (a lower bound).
pub fn estimate_spectral_radius(laplacian: &GraphLaplacian) -> f64 {
    let n = laplacian.n();
    let mut rng = rng::stream(laplacian.fingerprint(), rng::tag::POWER_ITER);
    let mut v = DVector::from_fn(n, |_, _| StandardNormal.sample(&mut rng));
    v.normalize_mut();
    let a = laplacian.matrix();
    let mut av = vec![0.0; n];
    let mut estimate = 0.0;
    for _ in 0..POWER_ITERATIONS {
        a.mul_vec_into(v.as_slice(), &mut av);
        let next = DVector::from_column_slice(&av);
        estimate = v.dot(&next);
        let norm = next.norm();
        if norm == 0.0 {
            return 0.0;
        }
        v = next / norm;
    }
    estimate
}

/// Largest absolute row sum, an upper bound on the spectral radius.
pub fn gershgorin_bound(laplacian: &GraphLaplacian) -> f64 {
    laplacian.matrix().norm_inf()
}

pub fn default_domain(laplacian: &GraphLaplacian) -> f64 {
    let cap = gershgorin_bound(laplacian);
    let domain = (DOMAIN_SAFETY * estimate_spectral_radius(laplacian)).min(cap);
    if domain > 0.0 {
        domain
    } else {
        1.0
    }
}

/// Applies a fitted expansion after checking the spectral radius estimate
/// against its domain.
pub fn apply_filter_chebyshev(approx: &ChebyshevApprox, laplacian: &GraphLaplacian, x: &DVector<f64>) -> Result<DVector<f64>> {
    let estimate = estimate_spectral_radius(laplacian);
    if estimate > approx.domain_max {
        return Err(Error::Domain {
            estimate,
            domain_max: approx.domain_max,
        });
    }
    approx.apply_unchecked(laplacian, x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::SparseGraph;

    /// `e^(-6) I_0(6)` from the Bessel series, independent of any quadrature.
    fn heat_mean_on_0_12() -> f64 {
        let mut term = 1.0;
        let mut sum = 1.0;
        for k in 1..80 {
            term *= 9.0 / (k as f64 * k as f64);
            sum += term;
        }
        (-6.0f64).exp() * sum
    }

    #[test]
    fn degree_zero_heat_is_chebyshev_mean() {
        let approx = ChebyshevApprox::fit(&SpectralFilter::Heat, 12.0, 0).unwrap();
        assert!((approx.coeffs[0] - heat_mean_on_0_12()).abs() < 1e-14);
        let g = SparseGraph::from_edges(3, &[(0, 1), (1, 2)]).unwrap();
        let l = GraphLaplacian::with_scale(&g, 1.0).unwrap();
        let x = DVector::from_column_slice(&[1.0, -2.0, 0.5]);
        let y = approx.apply_unchecked(&l, &x).unwrap();
        assert!((y - &x * heat_mean_on_0_12()).amax() < 1e-14);
    }

    #[test]
    fn constant_response_is_exact() {
        let approx = ChebyshevApprox::fit(&SpectralFilter::Constant(0.7), 5.0, 6).unwrap();
        assert_eq!(approx.sup_error, 0.0);
        let g = SparseGraph::from_edges(3, &[(0, 1), (1, 2)]).unwrap();
        let l = GraphLaplacian::with_scale(&g, 1.0).unwrap();
        let x = DVector::from_column_slice(&[1.0, -2.0, 0.5]);
        let y = apply_filter_chebyshev(&approx, &l, &x).unwrap();
        assert!((y - &x * 0.7).amax() < 1e-15);
    }

    #[test]
    fn heat_degree_30_error_bound() {
        let approx = ChebyshevApprox::fit(&SpectralFilter::Heat, 12.0, 30).unwrap();
        assert!(approx.sup_error < 1e-10, "{}", approx.sup_error);
        for i in 0..=100 {
            let l = 0.12 * i as f64;
            assert!((approx.eval(l) - (-l).exp()).abs() <= approx.sup_error.max(1e-15));
        }
    }

    #[test]
    fn tolerance_search() {
        let approx = ChebyshevApprox::fit_to_tolerance(&SpectralFilter::Wavelet(2), 10.0, 1e-9, 200).unwrap();
        assert!(approx.sup_error <= 1e-9);
        assert!(ChebyshevApprox::fit_to_tolerance(&SpectralFilter::Heat, 100.0, 1e-14, 4).is_err());
    }

    #[test]
    fn domain_violation() {
        let g = SparseGraph::from_edges(4, &[(0, 1), (1, 2), (2, 3), (3, 0)]).unwrap();
        let l = GraphLaplacian::with_scale(&g, 1.0).unwrap();
        // spectrum of the 4-cycle is {0, 2, 2, 4}
        let r = estimate_spectral_radius(&l);
        assert!((r - 4.0).abs() < 1e-6, "{r}");
        let approx = ChebyshevApprox::fit(&SpectralFilter::Heat, 3.0, 10).unwrap();
        let x = DVector::from_element(4, 1.0);
        assert!(matches!(apply_filter_chebyshev(&approx, &l, &x), Err(Error::Domain { .. })));
        let domain = default_domain(&l);
        assert!(domain >= 4.0 && domain <= gershgorin_bound(&l));
    }
}
