use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A spectral response `w: [0, inf) -> R` from a closed-form family.
///
/// Serialized as `{"kind": ..., "params": ...}`; `FromStr` accepts the
/// compact forms `heat`, `wavelet:J`, `poly_in_heat:c0,c1,...` and
/// `constant:C`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "params", rename_all = "snake_case")]
pub enum SpectralFilter {
    /// `e^(-lambda)`
    Heat,
    /// `e^(-2^(j-1) lambda) - e^(-2^j lambda)`, `j >= 1`
    Wavelet(u32),
    /// `p(e^(-lambda))` with `p(w) = sum_i c_i w^i`
    PolyInHeat(Vec<f64>),
    Constant(f64),
}

const MAX_WAVELET_SCALE: u32 = 60;

impl SpectralFilter {
    pub fn validate(&self) -> Result<()> {
        match self {
            SpectralFilter::Heat => Ok(()),
            SpectralFilter::Wavelet(j) if (1..=MAX_WAVELET_SCALE).contains(j) => Ok(()),
            SpectralFilter::Wavelet(j) => Err(Error::Config(format!(
                "wavelet scale must lie in 1..={MAX_WAVELET_SCALE}, got {j}"
            ))),
            SpectralFilter::PolyInHeat(c) if c.is_empty() => {
                Err(Error::Config("polynomial filter needs at least one coefficient".into()))
            }
            SpectralFilter::PolyInHeat(c) if c.iter().any(|v| !v.is_finite()) => {
                Err(Error::Config("polynomial filter has a non-finite coefficient".into()))
            }
            SpectralFilter::PolyInHeat(_) => Ok(()),
            SpectralFilter::Constant(c) if c.is_finite() => Ok(()),
            SpectralFilter::Constant(_) => Err(Error::Config("constant filter must be finite".into())),
        }
    }

    pub fn response(&self, lambda: f64) -> f64 {
        match self {
            SpectralFilter::Heat => (-lambda).exp(),
            SpectralFilter::Wavelet(j) => {
                let a = 2f64.powi(*j as i32 - 1);
                (-a * lambda).exp() - (-2.0 * a * lambda).exp()
            }
            SpectralFilter::PolyInHeat(c) => {
                let w = (-lambda).exp();
                c.iter().rev().fold(0.0, |acc, &ci| acc * w + ci)
            }
            SpectralFilter::Constant(c) => *c,
        }
    }

    /// Upper bound on `sup |w|` over `[0, inf)`.
    pub fn sup_bound(&self) -> f64 {
        match self {
            SpectralFilter::Heat => 1.0,
            // u - u^2 on (0, 1] peaks at u = 1/2
            SpectralFilter::Wavelet(_) => 0.25,
            SpectralFilter::PolyInHeat(c) => c.iter().map(|v| v.abs()).sum(),
            SpectralFilter::Constant(c) => c.abs(),
        }
    }

    /// Upper bound on the Lipschitz constant over `[0, inf)`.
    pub fn lip_bound(&self) -> f64 {
        match self {
            SpectralFilter::Heat => 1.0,
            // derivative a u (2u - 1), u = e^(-a lambda), largest at u = 1
            SpectralFilter::Wavelet(j) => 2f64.powi(*j as i32 - 1),
            SpectralFilter::PolyInHeat(c) => c.iter().enumerate().map(|(i, v)| i as f64 * v.abs()).sum(),
            SpectralFilter::Constant(_) => 0.0,
        }
    }

    /// The dyadic wavelet bank `w_1, ..., w_J`.
    pub fn wavelet_bank(scales: u32) -> Vec<SpectralFilter> {
        (1..=scales).map(SpectralFilter::Wavelet).collect()
    }
}

impl fmt::Display for SpectralFilter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SpectralFilter::Heat => write!(f, "heat"),
            SpectralFilter::Wavelet(j) => write!(f, "wavelet:{j}"),
            SpectralFilter::PolyInHeat(c) => {
                let parts: Vec<String> = c.iter().map(|v| v.to_string()).collect();
                write!(f, "poly_in_heat:{}", parts.join(","))
            }
            SpectralFilter::Constant(c) => write!(f, "constant:{c}"),
        }
    }
}

impl FromStr for SpectralFilter {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (kind, params) = match s.split_once(':') {
            Some((k, p)) => (k.trim(), Some(p.trim())),
            None => (s.trim(), None),
        };
        let bad = |what: &str| Error::Config(format!("bad filter {s:?}: {what}"));
        let filter = match (kind, params) {
            ("heat", None) => SpectralFilter::Heat,
            ("wavelet", Some(p)) => SpectralFilter::Wavelet(p.parse().map_err(|_| bad("scale is not an integer"))?),
            ("constant", Some(p)) => SpectralFilter::Constant(p.parse().map_err(|_| bad("value is not a number"))?),
            ("poly_in_heat", Some(p)) => SpectralFilter::PolyInHeat(
                p.split(',')
                    .map(|c| c.trim().parse::<f64>())
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|_| bad("coefficients must be numbers"))?,
            ),
            _ => return Err(bad("expected heat, wavelet:J, poly_in_heat:c0,c1,... or constant:C")),
        };
        filter.validate()?;
        Ok(filter)
    }
}
