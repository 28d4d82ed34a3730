//! Analytic ground truth on the unit sphere in R^3.
//!
//! Real spherical harmonics are normalized against the uniform probability
//! measure, so `Y_0^0 = 1` and `Y_1^0 = sqrt(3) cos(theta)`. Orders `m > 0`
//! use `cos(m phi)`, orders `m < 0` use `sin(|m| phi)`; there is no
//! Condon-Shortley sign.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::GraphMode;
use crate::mfcn::{Activation, NetworkSpec};
use crate::pointcloud::{project_signal, PointCloud};
use crate::spectral::SpectralFilter;

/// Highest supported harmonic degree.
pub const MAX_DEGREE: u32 = 40;
const UNIT_TOLERANCE: f64 = 1e-9;

/// Which continuum operator a graph Laplacian approximates under uniform
/// sampling: `-Delta / (8 pi)` for epsilon graphs, `-2 pi Delta` for k-NN.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LimitKind {
    EpsLimit,
    KnnLimit,
}

impl From<GraphMode> for LimitKind {
    fn from(mode: GraphMode) -> Self {
        match mode {
            GraphMode::Epsilon => LimitKind::EpsLimit,
            GraphMode::Knn => LimitKind::KnnLimit,
        }
    }
}

pub fn continuum_eigenvalue(l: u32, kind: LimitKind) -> f64 {
    let ll = (l * (l + 1)) as f64;
    match kind {
        LimitKind::EpsLimit => ll / (8.0 * PI),
        LimitKind::KnnLimit => 2.0 * PI * ll,
    }
}

/// The smallest `count` continuum eigenvalues with multiplicity
/// (`2l + 1` copies of degree `l`), ascending.
pub fn continuum_spectrum(count: usize, kind: LimitKind) -> Vec<f64> {
    let mut out = Vec::with_capacity(count);
    let mut l = 0;
    while out.len() < count {
        let v = continuum_eigenvalue(l, kind);
        out.extend(std::iter::repeat_n(v, (2 * l + 1) as usize));
        l += 1;
    }
    out.truncate(count);
    out
}

fn check_index(l: u32, m: i32) -> Result<()> {
    if l > MAX_DEGREE || m.unsigned_abs() > l {
        return Err(Error::InvalidArgument(format!(
            "harmonic (l={l}, m={m}) needs |m| <= l <= {MAX_DEGREE}"
        )));
    }
    Ok(())
}

fn check_unit(point: &[f64]) -> Result<()> {
    if point.len() != 3 {
        return Err(Error::InvalidArgument(format!("expected a point in R^3, got {} coordinates", point.len())));
    }
    let norm = point.iter().map(|v| v * v).sum::<f64>().sqrt();
    if (norm - 1.0).abs() > UNIT_TOLERANCE {
        return Err(Error::InvalidArgument(format!("point is off the unit sphere (norm {norm})")));
    }
    Ok(())
}

/// `P_l^m(x)` for `m >= 0` without the Condon-Shortley phase.
fn assoc_legendre(l: u32, m: u32, x: f64) -> f64 {
    let s = (1.0 - x * x).max(0.0).sqrt();
    let mut pmm = 1.0;
    for i in 1..=m {
        pmm *= (2 * i - 1) as f64 * s;
    }
    if l == m {
        return pmm;
    }
    let mut prev = pmm;
    let mut cur = x * (2 * m + 1) as f64 * pmm;
    for ll in (m + 2)..=l {
        let next = ((2 * ll - 1) as f64 * x * cur - (ll + m - 1) as f64 * prev) / (ll - m) as f64;
        prev = cur;
        cur = next;
    }
    cur
}

/// `sqrt((2l + 1) (2 - delta_m0) (l - |m|)! / (l + |m|)!)`
fn normalization(l: u32, m: u32) -> f64 {
    let ratio: f64 = ((l - m + 1)..=(l + m)).map(|v| 1.0 / v as f64).product();
    let factor = if m == 0 { 1.0 } else { 2.0 };
    ((2 * l + 1) as f64 * factor * ratio).sqrt()
}

fn harmonic_unchecked(l: u32, m: i32, p: &[f64]) -> f64 {
    let am = m.unsigned_abs();
    let z = p[2].clamp(-1.0, 1.0);
    let value = normalization(l, am) * assoc_legendre(l, am, z);
    if m == 0 {
        return value;
    }
    let phi = p[1].atan2(p[0]);
    if m > 0 {
        value * (am as f64 * phi).cos()
    } else {
        value * (am as f64 * phi).sin()
    }
}

/// Real harmonic `Y_l^m` at a unit vector.
pub fn eval_harmonic(l: u32, m: i32, point: &[f64]) -> Result<f64> {
    check_index(l, m)?;
    check_unit(point)?;
    Ok(harmonic_unchecked(l, m, point))
}

/// One term `coeff * Y_l^m` of a bandlimited expansion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HarmonicTerm {
    pub l: u32,
    pub m: i32,
    pub coeff: f64,
}

/// A finite harmonic expansion, serialized as `[{l, m, coeff}, ...]`.
/// Terms are kept merged and sorted by `(l, m)`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<HarmonicTerm>", into = "Vec<HarmonicTerm>")]
pub struct Expansion {
    terms: BTreeMap<(u32, i32), f64>,
}

impl TryFrom<Vec<HarmonicTerm>> for Expansion {
    type Error = Error;

    fn try_from(terms: Vec<HarmonicTerm>) -> Result<Self> {
        Expansion::from_terms(&terms)
    }
}

impl From<Expansion> for Vec<HarmonicTerm> {
    fn from(e: Expansion) -> Self {
        e.terms().collect()
    }
}

impl Expansion {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn from_terms(terms: &[HarmonicTerm]) -> Result<Self> {
        let mut e = Self::zero();
        for t in terms {
            check_index(t.l, t.m)?;
            if !t.coeff.is_finite() {
                return Err(Error::InvalidArgument(format!("coefficient of (l={}, m={}) is not finite", t.l, t.m)));
            }
            *e.terms.entry((t.l, t.m)).or_insert(0.0) += t.coeff;
        }
        Ok(e)
    }

    pub fn single(l: u32, m: i32) -> Result<Self> {
        Self::from_terms(&[HarmonicTerm { l, m, coeff: 1.0 }])
    }

    /// `Y_1^0 + Y_2^0`.
    pub fn default_signal() -> Self {
        let mut e = Self::zero();
        e.terms.insert((1, 0), 1.0);
        e.terms.insert((2, 0), 1.0);
        e
    }

    pub fn terms(&self) -> impl Iterator<Item = HarmonicTerm> + '_ {
        self.terms.iter().map(|(&(l, m), &coeff)| HarmonicTerm { l, m, coeff })
    }

    pub fn coeff(&self, l: u32, m: i32) -> f64 {
        self.terms.get(&(l, m)).copied().unwrap_or(0.0)
    }

    pub fn max_degree(&self) -> u32 {
        self.terms.keys().map(|&(l, _)| l).max().unwrap_or(0)
    }

    pub fn is_zero(&self) -> bool {
        self.terms.values().all(|&c| c == 0.0)
    }

    pub fn scaled(&self, a: f64) -> Self {
        Self {
            terms: self.terms.iter().map(|(&k, &c)| (k, a * c)).collect(),
        }
    }

    /// `self += a * other`
    pub fn add_scaled(&mut self, a: f64, other: &Expansion) {
        for (&k, &c) in &other.terms {
            *self.terms.entry(k).or_insert(0.0) += a * c;
        }
    }

    /// Value at a unit vector.
    pub fn eval(&self, point: &[f64]) -> Result<f64> {
        check_unit(point)?;
        Ok(self.eval_unchecked(point))
    }

    fn eval_unchecked(&self, point: &[f64]) -> f64 {
        self.terms.iter().map(|(&(l, m), &c)| c * harmonic_unchecked(l, m, point)).sum()
    }

    /// `P_n f` on a sphere sample.
    pub fn project(&self, cloud: &PointCloud) -> Result<DVector<f64>> {
        if cloud.ambient_dim() != 3 {
            return Err(Error::InvalidArgument("harmonic expansions need points in R^3".into()));
        }
        for p in cloud.points() {
            check_unit(p)?;
        }
        project_signal(cloud, |p| self.eval_unchecked(p))
    }

    /// `<f, g>` in `L^2` of the uniform probability measure.
    pub fn inner(&self, other: &Expansion) -> f64 {
        self.terms.iter().map(|(k, &c)| c * other.terms.get(k).copied().unwrap_or(0.0)).sum()
    }

    pub fn l2_norm(&self) -> f64 {
        self.inner(self).sqrt()
    }

    /// `(E |f|^4)^(1/4)` under the uniform probability measure, by a product
    /// rule (Gauss-Legendre in `cos(theta)`, trapezoid in `phi`) that is exact
    /// for polynomials of the degree of `f^4`.
    pub fn l4_norm(&self) -> f64 {
        let degree = 4 * self.max_degree() as usize;
        let n_theta = degree / 2 + 2;
        let n_phi = degree + 2;
        let (nodes, weights) = gauss_legendre(n_theta);
        let mut total = 0.0;
        for (&z, &w) in nodes.iter().zip(&weights) {
            let s = (1.0 - z * z).sqrt();
            let ring: f64 = (0..n_phi)
                .map(|i| {
                    let phi = 2.0 * PI * i as f64 / n_phi as f64;
                    self.eval_unchecked(&[s * phi.cos(), s * phi.sin(), z]).powi(4)
                })
                .sum();
            total += w * ring / n_phi as f64;
        }
        (total / 2.0).powf(0.25)
    }
}

/// Nodes and weights of the `n`-point Gauss-Legendre rule on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        nodes[i] = x;
        nodes[n - 1 - i] = -x;
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

/// `w(L) f`: scales degree `l` by `w(lambda_l)`.
pub fn continuum_filter(w: &SpectralFilter, f: &Expansion, kind: LimitKind) -> Expansion {
    Expansion {
        terms: f
            .terms
            .iter()
            .map(|(&(l, m), &c)| ((l, m), c * w.response(continuum_eigenvalue(l, kind))))
            .collect(),
    }
}

/// Continuum outputs of every layer of a linear network.
pub fn continuum_network_trace(net: &NetworkSpec, inputs: &[Expansion], kind: LimitKind) -> Result<Vec<Vec<Expansion>>> {
    if let Some(l) = net.layers.iter().position(|l| l.activation != Activation::Identity) {
        return Err(Error::UnsupportedOracle(format!(
            "layer {l} has a nonlinear activation; continuum outputs are only available for linear networks"
        )));
    }
    net.validate()?;
    let mut current = inputs.to_vec();
    let mut trace = Vec::with_capacity(net.layers.len());
    for layer in &net.layers {
        if current.len() != layer.c_in {
            return Err(Error::DimensionMismatch {
                context: "continuum layer input channels".into(),
                expected: layer.c_in,
                actual: current.len(),
            });
        }
        let filtered: Vec<Vec<Expansion>> = (0..layer.j)
            .map(|j| (0..layer.c_in).map(|k| continuum_filter(layer.filter(j, k), &current[k], kind)).collect())
            .collect();
        let mut combined = vec![vec![Expansion::zero(); layer.c_mid]; layer.j];
        for j in 0..layer.j {
            for k in 0..layer.c_mid {
                for i in 0..layer.c_in {
                    combined[j][k].add_scaled(layer.theta[j][(i, k)], &filtered[j][i]);
                }
            }
        }
        let mut out = vec![Expansion::zero(); layer.c_out()];
        for k in 0..layer.c_mid {
            for jo in 0..layer.j_out {
                for i in 0..layer.j {
                    out[jo * layer.c_mid + k].add_scaled(layer.alpha[k][(jo, i)], &combined[i][k]);
                }
            }
        }
        trace.push(out.clone());
        current = out;
    }
    Ok(trace)
}

pub fn continuum_network_forward(net: &NetworkSpec, inputs: &[Expansion], kind: LimitKind) -> Result<Vec<Expansion>> {
    Ok(continuum_network_trace(net, inputs, kind)?.pop().unwrap_or_else(|| inputs.to_vec()))
}
