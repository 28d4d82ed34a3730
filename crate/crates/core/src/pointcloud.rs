//! Point clouds, the sphere sampler, the sampling projection `P_n` and CSV
//! ingestion.

use std::fmt;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::rng;

/// Where a cloud came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum Provenance {
    Sampler { shape: SamplerShape, seed: u64 },
    File { path: PathBuf },
    InMemory,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplerShape {
    UnitSphereUniform,
    FromFile,
}

/// A request for a sampled cloud.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplerSpec {
    pub shape: SamplerShape,
    pub seed: u64,
    pub n: usize,
}

/// `n` samples in `R^D`, stored row-major, with a declared intrinsic
/// dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    coords: Vec<f64>,
    n: usize,
    ambient_dim: usize,
    intrinsic_dim: usize,
    provenance: Provenance,
}

impl PointCloud {
    /// Builds a cloud from row-major coordinates.
    pub fn new(
        coords: Vec<f64>,
        ambient_dim: usize,
        intrinsic_dim: usize,
        provenance: Provenance,
    ) -> Result<Self> {
        if ambient_dim == 0 {
            return Err(Error::InvalidArgument("ambient dimension must be positive".into()));
        }
        if coords.is_empty() || coords.len() % ambient_dim != 0 {
            return Err(Error::InvalidArgument(format!(
                "{} coordinates do not form rows of width {}",
                coords.len(),
                ambient_dim
            )));
        }
        if intrinsic_dim == 0 || intrinsic_dim > ambient_dim {
            return Err(Error::InvalidArgument(format!(
                "intrinsic dimension {intrinsic_dim} must lie in 1..={ambient_dim}"
            )));
        }
        if let Some(pos) = coords.iter().position(|c| !c.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "non-finite coordinate in point {}",
                pos / ambient_dim
            )));
        }
        let n = coords.len() / ambient_dim;
        Ok(Self {
            coords,
            n,
            ambient_dim,
            intrinsic_dim,
            provenance,
        })
    }

    pub fn from_rows(rows: &[Vec<f64>], intrinsic_dim: usize) -> Result<Self> {
        let dim = rows.first().map(Vec::len).unwrap_or(0);
        if rows.iter().any(|r| r.len() != dim) {
            return Err(Error::InvalidArgument("rows have different widths".into()));
        }
        Self::new(rows.concat(), dim, intrinsic_dim, Provenance::InMemory)
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn ambient_dim(&self) -> usize {
        self.ambient_dim
    }

    pub fn intrinsic_dim(&self) -> usize {
        self.intrinsic_dim
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.coords[i * self.ambient_dim..(i + 1) * self.ambient_dim]
    }

    pub fn points(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.coords.chunks_exact(self.ambient_dim)
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    /// Writes one comma-separated row per point.
    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut writer = csv::WriterBuilder::new().has_headers(false).from_writer(out);
        for p in self.points() {
            writer
                .write_record(p.iter().map(|v| format!("{v:?}")))
                .map_err(csv_io)?;
        }
        writer.flush()?;
        Ok(())
    }
}

fn csv_io(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}

/// Samples `n` points i.i.d. uniform on the unit 2-sphere in R^3 by
/// normalizing standard Gaussian triples.
pub fn sample_sphere(n: usize, seed: u64) -> Result<PointCloud> {
    if n == 0 {
        return Err(Error::InvalidArgument("sample count must be at least 1".into()));
    }
    let mut rng = rng::stream(seed, rng::tag::SPHERE);
    let mut coords = Vec::with_capacity(3 * n);
    while coords.len() < 3 * n {
        let g: [f64; 3] = [
            StandardNormal.sample(&mut rng),
            StandardNormal.sample(&mut rng),
            StandardNormal.sample(&mut rng),
        ];
        let norm = (g[0] * g[0] + g[1] * g[1] + g[2] * g[2]).sqrt();
        // a zero draw has probability zero but would produce NaNs
        if norm < 1e-300 {
            continue;
        }
        coords.extend(g.iter().map(|v| v / norm));
    }
    PointCloud::new(
        coords,
        3,
        2,
        Provenance::Sampler {
            shape: SamplerShape::UnitSphereUniform,
            seed,
        },
    )
}

/// Reads a headerless CSV of points, one row per point.
pub fn load_points(path: &Path, intrinsic_dim: usize) -> Result<PointCloud> {
    let text = std::fs::read_to_string(path)?;
    let (header, rows) = parse_numeric_csv(&text, false)?;
    debug_assert!(header.is_none());
    let width = rows[0].len();
    let coords = rows.concat();
    PointCloud::new(
        coords,
        width,
        intrinsic_dim,
        Provenance::File {
            path: path.to_path_buf(),
        },
    )
}

/// Parses numeric CSV text. When `allow_header` is set, a first row
/// containing any non-numeric cell is returned as a header.
fn parse_numeric_csv(text: &str, allow_header: bool) -> Result<(Option<Vec<String>>, Vec<Vec<f64>>)> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut header = None;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (idx, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::Parse {
            line: e.position().map(|p| p.line() as usize).unwrap_or(idx + 1),
            message: e.to_string(),
        })?;
        let line = record.position().map(|p| p.line() as usize).unwrap_or(idx + 1);
        if record.len() == 1 && record[0].is_empty() {
            continue;
        }
        let parsed: std::result::Result<Vec<f64>, _> =
            record.iter().map(|c| c.parse::<f64>()).collect();
        match parsed {
            Ok(values) => {
                if let Some(bad) = values.iter().position(|v| !v.is_finite()) {
                    return Err(Error::Parse {
                        line,
                        message: format!("non-finite value in column {}", bad + 1),
                    });
                }
                if let Some(first) = rows.first() {
                    if first.len() != values.len() {
                        return Err(Error::Parse {
                            line,
                            message: format!("expected {} columns, found {}", first.len(), values.len()),
                        });
                    }
                } else if let Some(h) = &header {
                    let h: &Vec<String> = h;
                    if h.len() != values.len() {
                        return Err(Error::Parse {
                            line,
                            message: format!("header has {} columns, row has {}", h.len(), values.len()),
                        });
                    }
                }
                rows.push(values);
            }
            Err(_) if allow_header && header.is_none() && rows.is_empty() => {
                header = Some(record.iter().map(str::to_string).collect());
            }
            Err(_) => {
                let cell = record
                    .iter()
                    .find(|c| c.parse::<f64>().is_err())
                    .unwrap_or_default();
                return Err(Error::Parse {
                    line,
                    message: format!("non-numeric cell {cell:?}"),
                });
            }
        }
    }
    if rows.is_empty() {
        return Err(Error::Parse {
            line: 1,
            message: "no data rows".into(),
        });
    }
    Ok((header, rows))
}

/// An `n x C` matrix of discretized channels.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalMatrix {
    values: DMatrix<f64>,
    channel_names: Vec<String>,
    normalized: bool,
}

impl SignalMatrix {
    pub fn new(values: DMatrix<f64>, channel_names: Vec<String>, normalized: bool) -> Result<Self> {
        check_dim("signal channel names", values.ncols(), channel_names.len())?;
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Evaluation {
                index: pos % values.nrows().max(1),
            });
        }
        Ok(Self {
            values,
            channel_names,
            normalized,
        })
    }

    /// Wraps already-projected vectors with generated channel names.
    pub fn from_projected(values: DMatrix<f64>) -> Self {
        let names = (0..values.ncols()).map(|k| format!("ch{k}")).collect();
        Self {
            values,
            channel_names: names,
            normalized: true,
        }
    }

    pub fn from_columns(columns: &[DVector<f64>]) -> Result<Self> {
        let n = columns.first().map(|c| c.len()).unwrap_or(0);
        for c in columns {
            check_dim("signal columns", n, c.len())?;
        }
        Ok(Self::from_projected(DMatrix::from_columns(columns)))
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn into_values(self) -> DMatrix<f64> {
        self.values
    }

    pub fn channel_names(&self) -> &[String] {
        &self.channel_names
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn n(&self) -> usize {
        self.values.nrows()
    }

    pub fn channels(&self) -> usize {
        self.values.ncols()
    }

    pub fn column(&self, k: usize) -> DVector<f64> {
        self.values.column(k).into_owned()
    }

    /// Applies the `1/sqrt(n)` projection scaling. A second call is a no-op.
    pub fn normalize(mut self) -> Self {
        if !self.normalized {
            let scale = 1.0 / (self.values.nrows() as f64).sqrt();
            self.values *= scale;
            self.normalized = true;
        }
        self
    }

    /// Reads raw function values (optional header row of channel names) and
    /// applies the projection scaling.
    pub fn load_csv(path: &Path, cloud: &PointCloud) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let (header, rows) = parse_numeric_csv(&text, true)?;
        check_dim("signal rows vs points", cloud.len(), rows.len())?;
        let c = rows[0].len();
        let names = header.unwrap_or_else(|| (0..c).map(|k| format!("ch{k}")).collect());
        let values = DMatrix::from_fn(rows.len(), c, |i, k| rows[i][k]);
        Ok(Self::new(values, names, false)?.normalize())
    }

    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut writer = csv::WriterBuilder::new().has_headers(false).from_writer(out);
        writer.write_record(&self.channel_names).map_err(csv_io)?;
        for i in 0..self.values.nrows() {
            writer
                .write_record(self.values.row(i).iter().map(|v| format!("{v:?}")))
                .map_err(csv_io)?;
        }
        writer.flush()?;
        Ok(())
    }
}

impl fmt::Display for SignalMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "SignalMatrix({}x{})", self.n(), self.channels())
    }
}

/// `P_n f`: entry `i` is `f(x_i)/sqrt(n)`.
pub fn project_signal<F>(cloud: &PointCloud, f: F) -> Result<DVector<f64>>
where
    F: Fn(&[f64]) -> f64,
{
    let scale = 1.0 / (cloud.len() as f64).sqrt();
    let mut out = DVector::zeros(cloud.len());
    for (i, p) in cloud.points().enumerate() {
        let v = f(p);
        if !v.is_finite() {
            return Err(Error::Evaluation { index: i });
        }
        out[i] = v * scale;
    }
    Ok(out)
}

/// Projects one named channel into a single-column signal matrix.
pub fn project_channel<F>(cloud: &PointCloud, name: &str, f: F) -> Result<SignalMatrix>
where
    F: Fn(&[f64]) -> f64,
{
    let col = project_signal(cloud, f)?;
    let len = col.len();
    SignalMatrix::new(DMatrix::from_column_slice(len, 1, col.as_slice()), vec![name.into()], true)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    #[test]
    fn single_sphere_point_has_unit_norm() {
        let c = sample_sphere(1, 0).unwrap();
        let p = c.point(0);
        let norm = p.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!((norm - 1.0).abs() <= 1e-12);
        assert_eq!((c.ambient_dim(), c.intrinsic_dim()), (3, 2));
    }

    #[test]
    fn sphere_sampling_is_deterministic() {
        let a = sample_sphere(5, 3).unwrap();
        let b = sample_sphere(5, 3).unwrap();
        assert_eq!(a.coords(), b.coords());
        assert_ne!(a.coords(), sample_sphere(5, 4).unwrap().coords());
    }

    #[test]
    fn all_sphere_points_are_on_the_sphere() {
        let c = sample_sphere(2000, 11).unwrap();
        for p in c.points() {
            let norm = p.iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!((norm - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn zero_points_rejected() {
        assert!(matches!(sample_sphere(0, 0), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn constant_projection() {
        let c = PointCloud::from_rows(&[vec![0.0], vec![1.0], vec![2.0], vec![3.0]], 1).unwrap();
        let x = project_signal(&c, |_| 1.0).unwrap();
        assert_eq!(x.as_slice(), &[0.5, 0.5, 0.5, 0.5]);
        let c = sample_sphere(37, 1).unwrap();
        let x = project_signal(&c, |_| 1.0).unwrap();
        assert!((x.norm() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn non_finite_signal_names_index() {
        let c = PointCloud::from_rows(&[vec![0.0], vec![1.0], vec![2.0]], 1).unwrap();
        let err = project_signal(&c, |p| if p[0] == 2.0 { f64::NAN } else { 1.0 }).unwrap_err();
        assert!(matches!(err, Error::Evaluation { index: 2 }));
    }

    #[test]
    fn normalization_applies_once() {
        let m = SignalMatrix::new(DMatrix::from_element(4, 2, 2.0), vec!["a".into(), "b".into()], false).unwrap();
        let m = m.normalize();
        assert!(m.is_normalized());
        assert_eq!(m.values()[(0, 0)], 1.0);
        let m = m.normalize();
        assert_eq!(m.values()[(3, 1)], 1.0);
    }

    fn temp_csv(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    #[test]
    fn load_three_points() {
        let f = temp_csv("0,0,1\n0,1,0\n1,0,0\n");
        let c = load_points(f.path(), 2).unwrap();
        assert_eq!((c.len(), c.ambient_dim()), (3, 3));
        assert_eq!(c.point(2), &[1.0, 0.0, 0.0]);
        assert!(matches!(c.provenance(), Provenance::File { .. }));
    }

    #[test]
    fn load_errors() {
        let f = temp_csv("");
        assert!(matches!(load_points(f.path(), 1), Err(Error::Parse { .. })));
        let f = temp_csv("a,b,c\n");
        assert!(matches!(load_points(f.path(), 1), Err(Error::Parse { line: 1, .. })));
        let f = temp_csv("0,0,1\n0,1\n");
        assert!(matches!(load_points(f.path(), 1), Err(Error::Parse { line: 2, .. })));
        let f = temp_csv("0,0,1\n");
        assert!(matches!(load_points(f.path(), 4), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn signals_with_header() {
        let cloud = PointCloud::from_rows(&[vec![0.0], vec![1.0], vec![2.0], vec![3.0]], 1).unwrap();
        let f = temp_csv("u,v\n2,4\n2,4\n2,4\n2,4\n");
        let s = SignalMatrix::load_csv(f.path(), &cloud).unwrap();
        assert_eq!(s.channel_names(), &["u".to_string(), "v".to_string()]);
        assert!(s.is_normalized());
        assert_eq!(s.values()[(1, 1)], 2.0);
        let f = temp_csv("1\n2\n");
        assert!(matches!(
            SignalMatrix::load_csv(f.path(), &cloud),
            Err(Error::DimensionMismatch { .. })
        ));
    }
}
