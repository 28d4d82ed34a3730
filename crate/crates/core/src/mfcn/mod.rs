//! Filter-combine network layers.
//!
//! A layer maps `C_in` channels to `J_out * C_mid` channels in five steps:
//!
//! 1. filter: `xt[j][k] = w[j][k](L) x[k]`
//! 2. combine: `y[j][k] = sum_i xt[j][i] theta[j][i, k]`
//! 3. cross-filter: `yt[j][k] = sum_i alpha[k][j, i] y[i][k]`
//! 4. activation: `z = sigma(yt)` pointwise
//! 5. reshape: `z[j][k]` becomes output column `j * C_mid + k`

mod presets;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

pub use presets::{
    preset_cheb, preset_mcn, preset_scattering, scattering_direct, scattering_path_labels, scattering_paths,
};

use crate::error::{check_dim, Error, Result};
use crate::pointcloud::SignalMatrix;
use crate::spectral::{filter_grid_apply, SpectralBasis, SpectralFilter};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Identity,
    Relu,
    Abs,
    Tanh,
}

impl Activation {
    pub fn apply(self, v: f64) -> f64 {
        match self {
            Activation::Identity => v,
            Activation::Relu => v.max(0.0),
            Activation::Abs => v.abs(),
            Activation::Tanh => v.tanh(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PresetTag {
    Mcn,
    Cheb,
    Scattering,
    Custom,
}

/// One layer. `filters` is row-major over `(j, k)`, `theta[j]` is
/// `C_in x C_mid` and `alpha[k]` is `J_out x J`.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerSpec {
    pub j: usize,
    pub c_in: usize,
    pub c_mid: usize,
    pub j_out: usize,
    pub filters: Vec<SpectralFilter>,
    pub theta: Vec<DMatrix<f64>>,
    pub alpha: Vec<DMatrix<f64>>,
    pub activation: Activation,
}

impl LayerSpec {
    /// Layer with one filter per `j` shared by all channels and identity
    /// combine and cross-filter weights.
    pub fn shared_bank(bank: &[SpectralFilter], c_in: usize, activation: Activation) -> Self {
        let j = bank.len();
        Self {
            j,
            c_in,
            c_mid: c_in,
            j_out: j,
            filters: bank.iter().flat_map(|w| std::iter::repeat_n(w.clone(), c_in)).collect(),
            theta: vec![DMatrix::identity(c_in, c_in); j],
            alpha: vec![DMatrix::identity(j, j); c_in],
            activation,
        }
    }

    pub fn c_out(&self) -> usize {
        self.j_out * self.c_mid
    }

    pub fn filter(&self, j: usize, k: usize) -> &SpectralFilter {
        &self.filters[j * self.c_in + k]
    }

    pub fn validate(&self) -> Result<()> {
        if self.j == 0 || self.c_in == 0 || self.c_mid == 0 || self.j_out == 0 {
            return Err(Error::Config("layer sizes J, C_in, C_mid and J_out must be positive".into()));
        }
        check_dim("filter grid (J * C_in)", self.j * self.c_in, self.filters.len())?;
        for w in &self.filters {
            w.validate()?;
        }
        check_dim("combine matrices (J)", self.j, self.theta.len())?;
        for t in &self.theta {
            check_dim("combine rows (C_in)", self.c_in, t.nrows())?;
            check_dim("combine columns (C_mid)", self.c_mid, t.ncols())?;
        }
        check_dim("cross-filter matrices (C_mid)", self.c_mid, self.alpha.len())?;
        for a in &self.alpha {
            check_dim("cross-filter rows (J_out)", self.j_out, a.nrows())?;
            check_dim("cross-filter columns (J)", self.j, a.ncols())?;
        }
        if self.theta.iter().chain(&self.alpha).any(|m| m.iter().any(|v| !v.is_finite())) {
            return Err(Error::Config("layer weights must be finite".into()));
        }
        Ok(())
    }

    /// Largest `sup |w|` bound over the layer's filters.
    pub fn sup_bound(&self) -> f64 {
        self.filters.iter().map(SpectralFilter::sup_bound).fold(0.0, f64::max)
    }

    fn is_pass_through(&self) -> bool {
        self.c_mid == self.c_in
            && self.j_out == self.j
            && self.theta.iter().all(|t| *t == DMatrix::identity(self.c_in, self.c_in))
            && self.alpha.iter().all(|a| *a == DMatrix::identity(self.j, self.j))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkSpec {
    pub layers: Vec<LayerSpec>,
    pub preset: Option<PresetTag>,
}

impl NetworkSpec {
    pub fn new(layers: Vec<LayerSpec>, preset: Option<PresetTag>) -> Result<Self> {
        let net = Self { layers, preset };
        net.validate()?;
        Ok(net)
    }

    pub fn validate(&self) -> Result<()> {
        for (l, layer) in self.layers.iter().enumerate() {
            layer.validate().map_err(|e| wrap(l, e))?;
            if l > 0 {
                let prev = &self.layers[l - 1];
                check_dim("channel chain (previous C_out vs C_in)", prev.c_out(), layer.c_in).map_err(|e| wrap(l, e))?;
            }
        }
        Ok(())
    }

    pub fn input_channels(&self) -> Option<usize> {
        self.layers.first().map(|l| l.c_in)
    }

    pub fn output_channels(&self) -> Option<usize> {
        self.layers.last().map(LayerSpec::c_out)
    }

    pub fn is_linear(&self) -> bool {
        self.layers.iter().all(|l| l.activation == Activation::Identity)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let raw: NetworkJson = serde_json::from_str(text)?;
        raw.try_into()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&NetworkJson::from(self))?)
    }
}

fn wrap(layer: usize, e: Error) -> Error {
    Error::Layer {
        layer,
        source: Box::new(e),
    }
}

/// Runs one layer on `x` using the exact filters of `basis`.
pub fn layer_forward(layer: &LayerSpec, basis: &SpectralBasis, x: &SignalMatrix) -> Result<SignalMatrix> {
    layer.validate()?;
    check_dim("layer input channels (C_in)", layer.c_in, x.channels())?;
    let filtered = filter_grid_apply(&layer.filters, layer.j, basis, x.values())?;
    let combined: Vec<DMatrix<f64>> = filtered.outputs.iter().zip(&layer.theta).map(|(xt, theta)| xt * theta).collect();
    let n = x.n();
    let mut out = DMatrix::zeros(n, layer.c_out());
    for k in 0..layer.c_mid {
        let alpha = &layer.alpha[k];
        for jo in 0..layer.j_out {
            let mut col = out.column_mut(jo * layer.c_mid + k);
            for (i, y) in combined.iter().enumerate() {
                let a = alpha[(jo, i)];
                if a != 0.0 {
                    col.axpy(a, &y.column(k), 1.0);
                }
            }
            col.apply(|v| *v = layer.activation.apply(*v));
        }
    }
    let names = output_names(layer, x.channel_names());
    SignalMatrix::new(out, names, x.is_normalized())
}

fn output_names(layer: &LayerSpec, input: &[String]) -> Vec<String> {
    let pass = layer.is_pass_through();
    (0..layer.j_out)
        .flat_map(|j| {
            (0..layer.c_mid).map(move |k| {
                if pass {
                    format!("{}/{}", input[k], j + 1)
                } else {
                    format!("h{}_{}", j + 1, k + 1)
                }
            })
        })
        .collect()
}

/// Output of every layer in order; the last entry is the network output.
pub fn network_trace(net: &NetworkSpec, basis: &SpectralBasis, x: &SignalMatrix) -> Result<Vec<SignalMatrix>> {
    let mut outputs = Vec::with_capacity(net.layers.len());
    let mut current = x.clone();
    for (l, layer) in net.layers.iter().enumerate() {
        current = layer_forward(layer, basis, &current).map_err(|e| wrap(l, e))?;
        outputs.push(current.clone());
    }
    Ok(outputs)
}

pub fn network_forward(net: &NetworkSpec, basis: &SpectralBasis, x: &SignalMatrix) -> Result<SignalMatrix> {
    Ok(network_trace(net, basis, x)?.pop().unwrap_or_else(|| x.clone()))
}

/// Per-layer weight sums: `a1` is the largest column abs-sum over the
/// combine matrices, `a2` the largest row abs-sum over the cross-filter
/// matrices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightNorms {
    pub a1: Vec<f64>,
    pub a2: Vec<f64>,
}

fn max_column_abs_sum(m: &DMatrix<f64>) -> f64 {
    m.column_iter().map(|c| c.iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max)
}

fn max_row_abs_sum(m: &DMatrix<f64>) -> f64 {
    m.row_iter().map(|r| r.iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max)
}

pub fn layer_norms(layer: &LayerSpec) -> (f64, f64) {
    let a1 = layer.theta.iter().map(max_column_abs_sum).fold(0.0, f64::max);
    let a2 = layer.alpha.iter().map(max_row_abs_sum).fold(0.0, f64::max);
    (a1, a2)
}

pub fn weight_norms(net: &NetworkSpec) -> WeightNorms {
    let (a1, a2) = net.layers.iter().map(layer_norms).unzip();
    WeightNorms { a1, a2 }
}

/// Rescales each layer so that `A1 = A2 = 1`.
pub fn normalize_to_a1(net: &NetworkSpec) -> Result<NetworkSpec> {
    let mut out = net.clone();
    for (l, layer) in out.layers.iter_mut().enumerate() {
        let (a1, a2) = layer_norms(layer);
        if a1 == 0.0 {
            return Err(Error::Normalization {
                layer: l,
                reason: "all combine weights are zero".into(),
            });
        }
        if a2 == 0.0 {
            return Err(Error::Normalization {
                layer: l,
                reason: "all cross-filter weights are zero".into(),
            });
        }
        layer.theta.iter_mut().for_each(|t| *t /= a1);
        layer.alpha.iter_mut().for_each(|a| *a /= a2);
    }
    Ok(out)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LayerJson {
    #[serde(rename = "J")]
    j: usize,
    #[serde(rename = "C_in")]
    c_in: usize,
    #[serde(rename = "C_mid")]
    c_mid: usize,
    #[serde(rename = "J_out")]
    j_out: usize,
    filters: Vec<FilterJson>,
    theta: Vec<Vec<Vec<f64>>>,
    alpha: Vec<Vec<Vec<f64>>>,
    activation: Activation,
}

/// Filters may be given as `{"kind", "params"}` objects or compact strings
/// such as `"wavelet:2"`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
enum FilterJson {
    Tagged(SpectralFilter),
    Compact(String),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NetworkJson {
    layers: Vec<LayerJson>,
    #[serde(default)]
    preset: Option<PresetTag>,
}

/// Field names accepted in network JSON, for diagnostics.
pub const NETWORK_KEYS: &[&str] = &["layers", "preset"];
pub const LAYER_KEYS: &[&str] = &["J", "C_in", "C_mid", "J_out", "filters", "theta", "alpha", "activation"];

fn matrix_from_rows(rows: &[Vec<f64>], context: &str) -> Result<DMatrix<f64>> {
    let r = rows.len();
    let c = rows.first().map(Vec::len).unwrap_or(0);
    for row in rows {
        check_dim(context, c, row.len())?;
    }
    Ok(DMatrix::from_fn(r, c, |i, j| rows[i][j]))
}

fn matrix_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

impl TryFrom<NetworkJson> for NetworkSpec {
    type Error = Error;

    fn try_from(raw: NetworkJson) -> Result<Self> {
        let layers = raw
            .layers
            .into_iter()
            .enumerate()
            .map(|(l, layer)| -> Result<LayerSpec> {
                let inner = || -> Result<LayerSpec> {
                    let filters = layer
                        .filters
                        .into_iter()
                        .map(|f| match f {
                            FilterJson::Tagged(w) => Ok(w),
                            FilterJson::Compact(s) => s.parse(),
                        })
                        .collect::<Result<Vec<_>>>()?;
                    let theta = layer
                        .theta
                        .iter()
                        .map(|m| matrix_from_rows(m, "combine matrix row length"))
                        .collect::<Result<Vec<_>>>()?;
                    let alpha = layer
                        .alpha
                        .iter()
                        .map(|m| matrix_from_rows(m, "cross-filter matrix row length"))
                        .collect::<Result<Vec<_>>>()?;
                    Ok(LayerSpec {
                        j: layer.j,
                        c_in: layer.c_in,
                        c_mid: layer.c_mid,
                        j_out: layer.j_out,
                        filters,
                        theta,
                        alpha,
                        activation: layer.activation,
                    })
                };
                inner().map_err(|e| wrap(l, e))
            })
            .collect::<Result<Vec<_>>>()?;
        NetworkSpec::new(layers, raw.preset)
    }
}

impl From<&NetworkSpec> for NetworkJson {
    fn from(net: &NetworkSpec) -> Self {
        NetworkJson {
            layers: net
                .layers
                .iter()
                .map(|l| LayerJson {
                    j: l.j,
                    c_in: l.c_in,
                    c_mid: l.c_mid,
                    j_out: l.j_out,
                    filters: l.filters.iter().cloned().map(FilterJson::Tagged).collect(),
                    theta: l.theta.iter().map(matrix_rows).collect(),
                    alpha: l.alpha.iter().map(matrix_rows).collect(),
                    activation: l.activation,
                })
                .collect(),
            preset: net.preset,
        }
    }
}
