//! Random instances, dataset files and the scaling conventions of the
//! experiments.
//!
//! Random instances are drawn from `ChaCha8Rng` seeded with `RandomLassoSpec::seed`.
//! Each ingredient uses its own stream of that generator: stream 0 for the
//! matrix, 1 for the planted solution and 2 for the noise. Changing the
//! sparsity therefore never changes the matrix.

use std::fs::File;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use ndarray::{Array1, Array2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::linalg::norm;
use crate::problems::{LassoInstance, LogRegInstance};
use crate::Scalar;

const MATRIX_STREAM: u64 = 0;
const SOLUTION_STREAM: u64 = 1;
const NOISE_STREAM: u64 = 2;

/// Seeded random LASSO instance: `d = C x + noise_scale y`.
#[derive(Debug, Clone, PartialEq)]
pub struct RandomLassoSpec {
    pub m: usize,
    pub n: usize,
    pub seed: u64,
    /// Number of nonzeros in the planted `x`.
    pub sparsity: usize,
    pub noise_scale: f64,
}

impl RandomLassoSpec {
    /// Defaults: `min(100, n)` planted nonzeros and noise scale `√0.001`.
    pub fn new(m: usize, n: usize, seed: u64) -> Self {
        Self {
            m,
            n,
            seed,
            sparsity: n.min(100),
            noise_scale: 0.001f64.sqrt(),
        }
    }

    pub fn with_sparsity(mut self, sparsity: usize) -> Self {
        self.sparsity = sparsity;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.m == 0 || self.n == 0 {
            return Err(Error::Domain(format!("dimensions must be positive, got {}x{}", self.m, self.n)));
        }
        if self.sparsity > self.n {
            return Err(Error::Domain(format!("sparsity {} exceeds n = {}", self.sparsity, self.n)));
        }
        if !(self.noise_scale >= 0.0 && self.noise_scale.is_finite()) {
            return Err(Error::Domain(format!("invalid noise scale {}", self.noise_scale)));
        }
        Ok(())
    }

    fn stream(&self, stream: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(stream);
        rng
    }

    /// Standard-normal matrix with unit-norm columns.
    fn matrix<T: Scalar>(&self) -> Array2<T> {
        let mut rng = self.stream(MATRIX_STREAM);
        // Row-major fill so the draw order does not depend on the layout.
        let mut c = Array2::from_shape_simple_fn((self.m, self.n), || {
            T::lit(StandardNormal.sample(&mut rng))
        });
        for mut col in c.columns_mut() {
            let s = norm(col.view());
            if s > T::zero() {
                col.mapv_inplace(|e| e / s);
            }
        }
        c
    }

    /// The planted sparse solution.
    pub fn planted<T: Scalar>(&self) -> Result<Array1<T>> {
        self.validate()?;
        let mut rng = self.stream(SOLUTION_STREAM);
        let mut x = Array1::zeros(self.n);
        let mut support = rand::seq::index::sample(&mut rng, self.n, self.sparsity).into_vec();
        support.sort_unstable();
        for i in support {
            x[i] = T::lit(StandardNormal.sample(&mut rng));
        }
        Ok(x)
    }

    fn observations<T: Scalar>(&self, c: &Array2<T>) -> Result<Array1<T>> {
        let x = self.planted::<T>()?;
        let mut rng = self.stream(NOISE_STREAM);
        let s = T::lit(self.noise_scale);
        let mut d = c.dot(&x);
        for e in d.iter_mut() {
            *e += s * T::lit(StandardNormal.sample(&mut rng));
        }
        Ok(d)
    }
}

/// Draws the instance described by `spec`; `delta` follows the LASSO rule.
pub fn gen_random_lasso<T: Scalar>(spec: &RandomLassoSpec) -> Result<LassoInstance<T>> {
    spec.validate()?;
    let c = spec.matrix::<T>();
    let d = spec.observations(&c)?;
    LassoInstance::with_default_delta(c, d)
}

/// Logistic instance on the same design: labels are the signs of the LASSO
/// observations (zero counts as positive).
pub fn gen_random_logreg<T: Scalar>(spec: &RandomLassoSpec) -> Result<LogRegInstance<T>> {
    spec.validate()?;
    let c = spec.matrix::<T>();
    let d = spec
        .observations(&c)?
        .mapv(|e| if e < T::zero() { -T::one() } else { T::one() });
    LogRegInstance::with_default_delta(c, d)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DatasetFormat {
    Csv,
    /// `label idx:val ...` per line with 1-based indices.
    Sparse,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LabelColumn {
    None,
    Index(usize),
    /// Requires a header row.
    Name(String),
    Last,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LoadOptions {
    pub format: DatasetFormat,
    /// Ignored by the sparse format, where the label always leads the line.
    pub label_column: LabelColumn,
    pub has_header: bool,
}

impl LoadOptions {
    pub fn csv(label_column: LabelColumn, has_header: bool) -> Self {
        Self {
            format: DatasetFormat::Csv,
            label_column,
            has_header,
        }
    }

    pub fn sparse() -> Self {
        Self {
            format: DatasetFormat::Sparse,
            label_column: LabelColumn::Index(0),
            has_header: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScalingMode {
    Columns,
    Rows,
    /// Columns when `n >= m`, rows otherwise.
    Auto,
}

/// A feature matrix with optional labels in `{-1, +1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset<T> {
    pub features: Array2<T>,
    pub labels: Option<Array1<T>>,
    pub name: String,
    /// The resolved mode once scaling has been applied.
    pub scaling_applied: Option<ScalingMode>,
    /// Zero rows or columns that scaling left untouched.
    pub zero_lines: Vec<usize>,
}

impl<T: Scalar> Dataset<T> {
    pub fn new(features: Array2<T>, labels: Option<Array1<T>>, name: impl Into<String>) -> Result<Self> {
        if let Some(l) = &labels {
            crate::error::check_len("labels", features.nrows(), l.len())?;
        }
        Ok(Self {
            features,
            labels,
            name: name.into(),
            scaling_applied: None,
            zero_lines: Vec::new(),
        })
    }

    pub fn m(&self) -> usize {
        self.features.nrows()
    }

    pub fn n(&self) -> usize {
        self.features.ncols()
    }
}

fn parse_value<T: Scalar>(token: &str, line: usize) -> Result<T> {
    let value: T = token.trim().parse().map_err(|_| Error::Parse {
        line,
        message: format!("cannot parse {token:?} as a number"),
    })?;
    if !value.is_finite() {
        return Err(Error::Parse {
            line,
            message: format!("non-finite entry {token:?}"),
        });
    }
    Ok(value)
}

fn parse_label<T: Scalar>(token: &str, line: usize) -> Result<T> {
    let value: T = parse_value(token, line)?;
    if value == T::one() {
        Ok(T::one())
    } else if value == -T::one() || value == T::zero() {
        Ok(-T::one())
    } else {
        Err(Error::Parse {
            line,
            message: format!("label {token:?} is not one of -1, 0, 1"),
        })
    }
}

/// Loads a dataset from `path`; the name is the file stem.
pub fn load_dataset<T: Scalar>(path: impl AsRef<Path>, options: &LoadOptions) -> Result<Dataset<T>> {
    let path = path.as_ref();
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let file = File::open(path)?;
    match options.format {
        DatasetFormat::Csv => read_csv(file, options, name),
        DatasetFormat::Sparse => read_sparse(BufReader::new(file), name),
    }
}

pub fn read_csv<T: Scalar, R: Read>(reader: R, options: &LoadOptions, name: impl Into<String>) -> Result<Dataset<T>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(options.has_header)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);

    let named_index = match &options.label_column {
        LabelColumn::Name(label) => {
            if !options.has_header {
                return Err(Error::Parse {
                    line: 1,
                    message: format!("label column {label:?} given by name but the file has no header"),
                });
            }
            let headers = rdr.headers()?;
            let idx = headers.iter().position(|h| h == label).ok_or_else(|| Error::Parse {
                line: 1,
                message: format!("no column named {label:?}"),
            })?;
            Some(idx)
        }
        _ => None,
    };

    let mut width = None;
    let mut values = Vec::new();
    let mut labels = Vec::new();
    let mut rows = 0;
    for record in rdr.records() {
        let record = record?;
        let line = record.position().map_or(rows + 1, |p| p.line() as usize);
        if record.len() == 1 && record[0].is_empty() {
            continue;
        }
        match width {
            None => width = Some(record.len()),
            Some(w) if w != record.len() => {
                return Err(Error::Parse {
                    line,
                    message: format!("expected {w} fields, found {}", record.len()),
                })
            }
            _ => {}
        }
        let label_idx = match options.label_column {
            LabelColumn::None => None,
            LabelColumn::Index(i) => {
                if i >= record.len() {
                    return Err(Error::Parse {
                        line,
                        message: format!("label column {i} out of range for {} fields", record.len()),
                    });
                }
                Some(i)
            }
            LabelColumn::Name(_) => named_index,
            LabelColumn::Last => Some(record.len() - 1),
        };
        for (j, field) in record.iter().enumerate() {
            if Some(j) == label_idx {
                labels.push(parse_label(field, line)?);
            } else {
                values.push(parse_value(field, line)?);
            }
        }
        rows += 1;
    }

    let cols = width.unwrap_or(0) - usize::from(!matches!(options.label_column, LabelColumn::None) && width.is_some());
    let features = Array2::from_shape_vec((rows, cols), values).expect("row widths checked");
    let labels = (!matches!(options.label_column, LabelColumn::None)).then(|| Array1::from(labels));
    Dataset::new(features, labels, name)
}

pub fn read_sparse<T: Scalar, R: BufRead>(reader: R, name: impl Into<String>) -> Result<Dataset<T>> {
    let mut labels = Vec::new();
    let mut entries: Vec<Vec<(usize, T)>> = Vec::new();
    let mut n = 0;
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        let mut tokens = line.split_whitespace();
        let Some(label) = tokens.next() else {
            continue;
        };
        labels.push(parse_label(label, line_no)?);
        let mut row = Vec::new();
        for token in tokens {
            let (idx, val) = token.split_once(':').ok_or_else(|| Error::Parse {
                line: line_no,
                message: format!("expected idx:val, found {token:?}"),
            })?;
            let idx: usize = idx.parse().ok().filter(|&k| k >= 1).ok_or_else(|| Error::Parse {
                line: line_no,
                message: format!("invalid 1-based index {idx:?}"),
            })?;
            n = n.max(idx);
            row.push((idx - 1, parse_value(val, line_no)?));
        }
        entries.push(row);
    }
    let mut features = Array2::zeros((entries.len(), n));
    for (i, row) in entries.into_iter().enumerate() {
        for (j, v) in row {
            features[[i, j]] = v;
        }
    }
    Dataset::new(features, Some(Array1::from(labels)), name)
}

/// Writes labels (if any) in the first column followed by the features, with
/// no header. Numbers use the shortest representation that parses back to
/// the same value, so `read_csv` with `LabelColumn::Index(0)` (or
/// `LabelColumn::None` without labels) restores the dataset bit for bit.
pub fn write_csv<T: Scalar, W: Write>(ds: &Dataset<T>, writer: W) -> Result<()> {
    let mut wtr = csv::WriterBuilder::new().has_headers(false).from_writer(writer);
    for (i, row) in ds.features.rows().into_iter().enumerate() {
        let mut record: Vec<String> = Vec::with_capacity(row.len() + 1);
        if let Some(l) = &ds.labels {
            record.push(l[i].to_string());
        }
        record.extend(row.iter().map(|v| v.to_string()));
        wtr.write_record(&record)?;
    }
    wtr.flush()?;
    Ok(())
}

/// Scales the columns or rows of the features to unit 2-norm.
pub fn apply_scaling<T: Scalar>(mut ds: Dataset<T>, mode: ScalingMode) -> Result<Dataset<T>> {
    if ds.scaling_applied.is_some() {
        return Err(Error::AlreadyScaled);
    }
    let resolved = match mode {
        ScalingMode::Auto if ds.n() >= ds.m() => ScalingMode::Columns,
        ScalingMode::Auto => ScalingMode::Rows,
        other => other,
    };
    let axis = match resolved {
        ScalingMode::Columns => Axis(1),
        _ => Axis(0),
    };
    let mut zero_lines = Vec::new();
    for (i, mut lane) in ds.features.axis_iter_mut(axis).enumerate() {
        let s = norm(lane.view());
        if s > T::zero() {
            lane.mapv_inplace(|e| e / s);
        } else {
            zero_lines.push(i);
        }
    }
    ds.scaling_applied = Some(resolved);
    ds.zero_lines = zero_lines;
    Ok(ds)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn column_scaling_hand_example() {
        let ds = Dataset::new(array![[3.0, 0.0], [4.0, 0.0]], None, "t").unwrap();
        let out = apply_scaling(ds, ScalingMode::Columns).unwrap();
        assert!((out.features[[0, 0]] - 0.6f64).abs() < 1e-15);
        assert!((out.features[[1, 0]] - 0.8f64).abs() < 1e-15);
        assert_eq!(out.features.column(1).to_vec(), vec![0.0, 0.0]);
        assert_eq!(out.zero_lines, vec![1]);
        assert!(matches!(apply_scaling(out, ScalingMode::Rows), Err(Error::AlreadyScaled)));
    }

    #[test]
    fn auto_scaling_picks_columns_for_wide_data() {
        let ds = Dataset::new(Array2::<f64>::ones((62, 2000)), None, "colon").unwrap();
        let out = apply_scaling(ds, ScalingMode::Auto).unwrap();
        assert_eq!(out.scaling_applied, Some(ScalingMode::Columns));
        let ds = Dataset::new(Array2::<f64>::ones((5, 2)), None, "tall").unwrap();
        assert_eq!(apply_scaling(ds, ScalingMode::Auto).unwrap().scaling_applied, Some(ScalingMode::Rows));
    }

    #[test]
    fn spec_rejects_bad_sparsity() {
        assert!(RandomLassoSpec::new(3, 4, 0).with_sparsity(5).validate().is_err());
        assert!(RandomLassoSpec::new(0, 4, 0).validate().is_err());
        assert_eq!(RandomLassoSpec::new(3, 4, 0).sparsity, 4);
    }

    #[test]
    fn planted_has_requested_support() {
        let spec = RandomLassoSpec::new(10, 50, 9).with_sparsity(7);
        let x = spec.planted::<f64>().unwrap();
        assert_eq!(x.iter().filter(|v| **v != 0.0).count(), 7);
    }

    #[test]
    fn sparse_format_parses() {
        let text = "1 1:0.5 3:2\n0 2:-1\n";
        let ds: Dataset<f64> = read_sparse(text.as_bytes(), "s").unwrap();
        assert_eq!(ds.features, array![[0.5, 0.0, 2.0], [0.0, -1.0, 0.0]]);
        assert_eq!(ds.labels.unwrap(), array![1.0, -1.0]);
        let bad: Result<Dataset<f64>> = read_sparse("1 0:1\n".as_bytes(), "s");
        assert!(matches!(bad, Err(Error::Parse { line: 1, .. })));
    }
}
