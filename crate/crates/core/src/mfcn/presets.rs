use nalgebra::{DMatrix, DVector};

use super::{Activation, LayerSpec, NetworkSpec, PresetTag};
use crate::error::{check_dim, Error, Result};
use crate::pointcloud::SignalMatrix;
use crate::spectral::{apply_filter_exact, SpectralBasis, SpectralFilter};

/// `F <- relu(e^(-L) F Theta)` per layer. `widths` lists the channel count
/// before each layer and after the last; `thetas[l]` is
/// `widths[l] x widths[l + 1]`.
pub fn preset_mcn(n_layers: usize, widths: &[usize], thetas: &[DMatrix<f64>]) -> Result<NetworkSpec> {
    check_dim("MCN channel widths (layers + 1)", n_layers + 1, widths.len())?;
    check_dim("MCN weight matrices", n_layers, thetas.len())?;
    let layers = thetas
        .iter()
        .enumerate()
        .map(|(l, theta)| {
            check_dim("MCN weight rows", widths[l], theta.nrows())?;
            check_dim("MCN weight columns", widths[l + 1], theta.ncols())?;
            Ok(LayerSpec {
                j: 1,
                c_in: widths[l],
                c_mid: widths[l + 1],
                j_out: 1,
                filters: vec![SpectralFilter::Heat; widths[l]],
                theta: vec![theta.clone()],
                alpha: vec![DMatrix::identity(1, 1); widths[l + 1]],
                activation: Activation::Relu,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    NetworkSpec::new(layers, Some(PresetTag::Mcn))
}

/// One layer with `w[j][k](lambda) = p[j][k](e^(-lambda))`, where
/// `grid[j][k]` holds the coefficients of `p[j][k]` in ascending order.
pub fn preset_cheb(grid: &[Vec<Vec<f64>>]) -> Result<NetworkSpec> {
    let j = grid.len();
    let c = grid.first().map(Vec::len).unwrap_or(0);
    if j == 0 || c == 0 {
        return Err(Error::Config("polynomial grid must have at least one row and column".into()));
    }
    let mut filters = Vec::with_capacity(j * c);
    for row in grid {
        check_dim("polynomial grid row length", c, row.len())?;
        for coeffs in row {
            let w = SpectralFilter::PolyInHeat(coeffs.clone());
            w.validate()?;
            filters.push(w);
        }
    }
    let layer = LayerSpec {
        j,
        c_in: c,
        c_mid: c,
        j_out: j,
        filters,
        theta: vec![DMatrix::identity(c, c); j],
        alpha: vec![DMatrix::identity(j, j); c],
        activation: Activation::Relu,
    };
    NetworkSpec::new(vec![layer], Some(PresetTag::Cheb))
}

/// `order` layers of the dyadic wavelet bank `w_1..w_J` with identity
/// combine and cross-filter weights and modulus activation.
pub fn preset_scattering(scales: u32, order: usize, channels: usize) -> Result<NetworkSpec> {
    if scales == 0 || order == 0 || channels == 0 {
        return Err(Error::Config("scattering needs J >= 1, order >= 1 and at least one channel".into()));
    }
    let bank = SpectralFilter::wavelet_bank(scales);
    let mut c = channels;
    let mut layers = Vec::with_capacity(order);
    for _ in 0..order {
        layers.push(LayerSpec::shared_bank(&bank, c, Activation::Abs));
        c *= bank.len();
    }
    NetworkSpec::new(layers, Some(PresetTag::Scattering))
}

/// Scale paths `(j_1, ..., j_order)` (1-based) in output-column order for a
/// single input channel. Column `j_order * J^(order-1) + ... + j_1` (0-based
/// scales) holds the path, so `j_1` varies fastest.
pub fn scattering_paths(scales: u32, order: usize) -> Vec<Vec<u32>> {
    let j = scales as usize;
    let count = j.pow(order as u32);
    (0..count)
        .map(|mut col| {
            let mut path = vec![0; order];
            for slot in path.iter_mut() {
                *slot = (col % j) as u32 + 1;
                col /= j;
            }
            path
        })
        .collect()
}

/// Channel labels `name/j_1/.../j_order`, input channel fastest.
pub fn scattering_path_labels(scales: u32, order: usize, inputs: &[String]) -> Vec<String> {
    scattering_paths(scales, order)
        .iter()
        .flat_map(|path| {
            inputs.iter().map(move |name| {
                path.iter().fold(name.clone(), |acc, j| format!("{acc}/{j}"))
            })
        })
        .collect()
}

/// Scattering coefficients `|w_{j_m}(L) ... |w_{j_1}(L) x_k| ...|` computed
/// path by path, in the column order of [`preset_scattering`].
pub fn scattering_direct(scales: u32, order: usize, basis: &SpectralBasis, x: &SignalMatrix) -> Result<SignalMatrix> {
    let mut columns = Vec::new();
    for path in scattering_paths(scales, order) {
        for k in 0..x.channels() {
            let mut u: DVector<f64> = x.column(k);
            for &j in &path {
                u = apply_filter_exact(&SpectralFilter::Wavelet(j), basis, &u)?.abs();
            }
            columns.push(u);
        }
    }
    let names = scattering_path_labels(scales, order, x.channel_names());
    SignalMatrix::new(DMatrix::from_columns(&columns), names, x.is_normalized())
}
