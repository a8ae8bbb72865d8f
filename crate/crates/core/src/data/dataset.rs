use std::fs::File;
use std::path::Path;

use crate::error::{Error, Result};
use crate::numerics::{Matrix, Rng};

/// Feature rows with integer class labels.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledDataset {
    features: Matrix,
    labels: Vec<usize>,
    classes: usize,
}

impl LabeledDataset {
    pub fn new(features: Matrix, labels: Vec<usize>, classes: usize) -> Result<Self> {
        if labels.len() != features.rows() {
            return Err(Error::ShapeMismatch {
                op: "LabeledDataset::new",
                left: features.shape(),
                right: (labels.len(), 1),
            });
        }
        if let Some(&label) = labels.iter().find(|&&l| l >= classes) {
            return Err(Error::LabelOutOfRange { label, classes });
        }
        Ok(Self {
            features,
            labels,
            classes,
        })
    }

    pub fn features(&self) -> &Matrix {
        &self.features
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.cols()
    }

    /// Features and labels of the listed rows.
    pub fn batch(&self, indices: &[usize]) -> (Matrix, Vec<usize>) {
        (
            self.features.select_rows(indices),
            indices.iter().map(|&i| self.labels[i]).collect(),
        )
    }

    /// Indices of every sample, grouped by class.
    pub fn indices_by_class(&self) -> Vec<Vec<usize>> {
        let mut by_class = vec![Vec::new(); self.classes];
        for (i, &l) in self.labels.iter().enumerate() {
            by_class[l].push(i);
        }
        by_class
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.classes];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }

    /// Per-feature standardisation to zero mean and unit variance. Constant
    /// features are only centred.
    pub fn standardize(&mut self) {
        let (n, d) = self.features.shape();
        if n == 0 {
            return;
        }
        let data = self.features.as_mut_slice();
        for j in 0..d {
            let mean = (0..n).map(|i| data[i * d + j]).sum::<f64>() / n as f64;
            let var = (0..n)
                .map(|i| (data[i * d + j] - mean).powi(2))
                .sum::<f64>()
                / n as f64;
            let sd = var.sqrt();
            for i in 0..n {
                let v = data[i * d + j] - mean;
                data[i * d + j] = if sd > 0.0 { v / sd } else { v };
            }
        }
    }

    /// Reads the `f0,...,f{D-1},label` CSV layout. When `classes` is given,
    /// labels at or above it are rejected; otherwise the class count is
    /// `max(label) + 1` (and at least 2).
    pub fn load_csv(path: &Path, classes: Option<usize>) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_reader(file);
        let parse_err = |line: usize, message: String| Error::Parse {
            path: path.to_path_buf(),
            line,
            message,
        };

        let header = reader
            .headers()
            .map_err(|e| parse_err(1, e.to_string()))?
            .clone();
        let width = header.len();
        if width < 2 {
            return Err(parse_err(
                1,
                "need at least one feature column and a label".into(),
            ));
        }
        for (j, name) in header.iter().enumerate() {
            let expected = if j + 1 == width {
                "label".to_string()
            } else {
                format!("f{j}")
            };
            if name != expected {
                return Err(parse_err(
                    1,
                    format!("column {j} is `{name}`, expected `{expected}`"),
                ));
            }
        }

        let dim = width - 1;
        let mut data = Vec::new();
        let mut labels = Vec::new();
        for (i, record) in reader.records().enumerate() {
            let fallback_line = i + 2;
            let record = record.map_err(|e| {
                let line = e.position().map_or(fallback_line, |p| p.line() as usize);
                parse_err(line, e.to_string())
            })?;
            let line = record
                .position()
                .map_or(fallback_line, |p| p.line() as usize);
            if record.len() != width {
                return Err(parse_err(
                    line,
                    format!("expected {width} fields, found {}", record.len()),
                ));
            }
            for (j, field) in record.iter().take(dim).enumerate() {
                let v: f64 = field
                    .parse()
                    .map_err(|_| parse_err(line, format!("f{j}: `{field}` is not a number")))?;
                if !v.is_finite() {
                    return Err(parse_err(line, format!("f{j}: non-finite value")));
                }
                data.push(v);
            }
            let raw = &record[dim];
            let label: usize = raw
                .parse()
                .map_err(|_| parse_err(line, format!("label `{raw}` is not a class index")))?;
            if let Some(l) = classes {
                if label >= l {
                    return Err(parse_err(
                        line,
                        format!("label {label} >= declared classes {l}"),
                    ));
                }
            }
            labels.push(label);
        }
        let classes = classes.unwrap_or_else(|| labels.iter().max().map_or(2, |m| (m + 1).max(2)));
        let features = Matrix::new(labels.len(), dim, data)?;
        Self::new(features, labels, classes)
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut writer = csv::Writer::from_writer(file);
        let to_io = |e: csv::Error| Error::io(path, std::io::Error::other(e));
        let mut header: Vec<String> = (0..self.dim()).map(|j| format!("f{j}")).collect();
        header.push("label".into());
        writer.write_record(&header).map_err(to_io)?;
        for i in 0..self.len() {
            let mut row: Vec<String> = self.features.row(i).iter().map(|v| v.to_string()).collect();
            row.push(self.labels[i].to_string());
            writer.write_record(&row).map_err(to_io)?;
        }
        writer.flush().map_err(|e| Error::io(path, e))
    }
}

/// Gaussian blobs: one seeded mean per class (entries ~ N(0, 1)) and samples
/// `mean + spread * N(0, I)`. Samples are laid out class by class.
pub fn gen_synthetic(
    classes: usize,
    dim: usize,
    per_class: usize,
    spread: f64,
    rng: &mut Rng,
) -> Result<LabeledDataset> {
    if classes < 2 {
        return Err(Error::config("synthetic data needs at least 2 classes"));
    }
    if per_class == 0 || dim == 0 {
        return Err(Error::config(
            "synthetic data needs per_class >= 1 and dim >= 1",
        ));
    }
    if !(spread >= 0.0 && spread.is_finite()) {
        return Err(Error::config(format!(
            "spread {spread} must be finite and >= 0"
        )));
    }
    let means: Vec<Vec<f64>> = (0..classes)
        .map(|_| (0..dim).map(|_| rng.normal()).collect())
        .collect();
    let mut data = Vec::with_capacity(classes * per_class * dim);
    let mut labels = Vec::with_capacity(classes * per_class);
    for (c, mean) in means.iter().enumerate() {
        for _ in 0..per_class {
            data.extend(mean.iter().map(|m| m + spread * rng.normal()));
            labels.push(c);
        }
    }
    LabeledDataset::new(
        Matrix::new(classes * per_class, dim, data)?,
        labels,
        classes,
    )
}
