//! Labeled datasets: the population every model in the pipeline draws from.

use std::collections::HashSet;
use std::io::Write;
use std::path::Path;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::seed;

/// `N` points of dimension `D` with labels in `[0, C)`.
///
/// Points are stored row-major. `point_ids` survive subsetting so a model's
/// training split can always be traced back to the population.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    points: Vec<f64>,
    labels: Vec<usize>,
    point_ids: Vec<usize>,
    dim: usize,
    class_count: usize,
}

impl LabeledDataset {
    /// Builds a dataset with point ids `0..N`.
    pub fn new(points: Vec<f64>, labels: Vec<usize>, dim: usize, class_count: usize) -> Result<Self> {
        let ids = (0..labels.len()).collect();
        Self::with_ids(points, labels, ids, dim, class_count)
    }

    pub fn with_ids(
        points: Vec<f64>,
        labels: Vec<usize>,
        point_ids: Vec<usize>,
        dim: usize,
        class_count: usize,
    ) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("dimension must be at least 1"));
        }
        if class_count == 0 {
            return Err(Error::invalid("class_count must be at least 1"));
        }
        if points.len() != labels.len() * dim {
            return Err(Error::invalid(format!(
                "{} feature values do not form {} rows of dimension {dim}",
                points.len(),
                labels.len()
            )));
        }
        if point_ids.len() != labels.len() {
            return Err(Error::invalid("point_ids and labels differ in length"));
        }
        if let Some(bad) = labels.iter().find(|&&l| l >= class_count) {
            return Err(Error::invalid(format!("label {bad} outside [0, {class_count})")));
        }
        let mut seen = HashSet::with_capacity(point_ids.len());
        if let Some(dup) = point_ids.iter().find(|id| !seen.insert(**id)) {
            return Err(Error::invalid(format!("duplicate point id {dup}")));
        }
        Ok(Self {
            points,
            labels,
            point_ids,
            dim,
            class_count,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn point_ids(&self) -> &[usize] {
        &self.point_ids
    }

    /// Flat row-major feature matrix.
    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.points.chunks_exact(self.dim)
    }

    /// Rows at `indices`, in the given order, keeping their original ids.
    ///
    /// `class_count` is carried over unchanged even if a class is absent.
    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        let mut seen = vec![false; self.len()];
        let mut points = Vec::with_capacity(indices.len() * self.dim);
        let mut labels = Vec::with_capacity(indices.len());
        let mut point_ids = Vec::with_capacity(indices.len());
        for &i in indices {
            if i >= self.len() {
                return Err(Error::invalid(format!(
                    "index {i} out of range for dataset of {} points",
                    self.len()
                )));
            }
            if std::mem::replace(&mut seen[i], true) {
                return Err(Error::invalid(format!("duplicate index {i}")));
            }
            points.extend_from_slice(self.point(i));
            labels.push(self.labels[i]);
            point_ids.push(self.point_ids[i]);
        }
        Ok(Self {
            points,
            labels,
            point_ids,
            dim: self.dim,
            class_count: self.class_count,
        })
    }

    /// Writes the dataset as headerless CSV, features first and the label last,
    /// with 9 significant digits per feature.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        for (row, label) in self.rows().zip(&self.labels) {
            for x in row {
                write!(out, "{x:.8e},")?;
            }
            writeln!(out, "{label}")?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Options for [`load_csv`].
#[derive(Debug, Clone, Copy, Default)]
pub struct CsvOptions {
    /// Zero-based column holding the integer label.
    pub label_column: usize,
    /// Skip the first line.
    pub skip_header: bool,
}

/// Loads a comma-separated file of real features and one integer label column.
///
/// Rows keep file order and get point ids `0..N`; `class_count` is the largest
/// label plus one. Error rows and columns are 1-based line and field numbers.
pub fn load_csv(path: impl AsRef<Path>, options: CsvOptions) -> Result<LabeledDataset> {
    let path = path.as_ref();
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(options.skip_header)
        .flexible(true)
        .from_path(path)
        .map_err(csv_error)?;

    let mut points = Vec::new();
    let mut labels = Vec::new();
    let mut width = None;
    for record in reader.records() {
        let record = record.map_err(csv_error)?;
        let row = record.position().map_or(labels.len() + 1, |p| p.line() as usize);
        let expected = *width.get_or_insert(record.len());
        if record.len() != expected {
            return Err(Error::RaggedRow {
                row,
                expected,
                found: record.len(),
            });
        }
        if options.label_column >= expected {
            return Err(Error::invalid(format!(
                "label column {} out of range for {expected} columns",
                options.label_column
            )));
        }
        for (column, cell) in record.iter().enumerate() {
            let cell = cell.trim();
            if column == options.label_column {
                let label = cell.parse::<usize>().map_err(|_| Error::InvalidLabel {
                    row,
                    column: column + 1,
                    value: cell.to_owned(),
                })?;
                labels.push(label);
            } else {
                let value = cell.parse::<f64>().map_err(|_| Error::NonNumeric {
                    row,
                    column: column + 1,
                    value: cell.to_owned(),
                })?;
                points.push(value);
            }
        }
    }

    let width = match width {
        Some(w) if !labels.is_empty() => w,
        _ => return Err(Error::EmptyFile(path.to_path_buf())),
    };
    let dim = width - 1;
    if dim == 0 {
        return Err(Error::invalid("CSV has a label column but no feature columns"));
    }
    let class_count = labels.iter().max().map_or(0, |m| m + 1);
    LabeledDataset::new(points, labels, dim, class_count)
}

fn csv_error(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Corrupt(format!("{other:?}")),
    }
}

/// Parameters of a Gaussian-mixture population.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct MixtureParams {
    pub class_count: usize,
    pub per_class: usize,
    pub dim: usize,
    pub separation: f64,
    pub seed: u64,
}

/// Draws `per_class` unit-variance Gaussian points around each class center.
///
/// Centers are seeded random unit directions scaled by `separation`. Points
/// are emitted class by class, so labels are exactly uniform.
pub fn synth_gaussian_mixture(params: MixtureParams) -> Result<LabeledDataset> {
    let MixtureParams {
        class_count,
        per_class,
        dim,
        separation,
        seed,
    } = params;
    if class_count < 2 {
        return Err(Error::invalid("class_count must be at least 2"));
    }
    if per_class < 1 || dim < 1 {
        return Err(Error::invalid("per_class and dim must be at least 1"));
    }
    if !(separation >= 0.0 && separation.is_finite()) {
        return Err(Error::invalid("separation must be finite and non-negative"));
    }

    let mut points = Vec::with_capacity(class_count * per_class * dim);
    let mut labels = Vec::with_capacity(class_count * per_class);
    for class in 0..class_count {
        let mut rng = seed::stream_rng(seed, class as u64);
        let mut center: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        let norm = center.iter().map(|x| x * x).sum::<f64>().sqrt();
        let scale = if norm > 0.0 { separation / norm } else { 0.0 };
        center.iter_mut().for_each(|x| *x *= scale);
        for _ in 0..per_class {
            points.extend(center.iter().map(|c| c + rng.sample::<f64, _>(StandardNormal)));
            labels.push(class);
        }
    }
    LabeledDataset::new(points, labels, dim, class_count)
}
