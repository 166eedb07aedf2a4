use std::ops::Range;
use std::path::Path;

use rand_distr::{Distribution, Normal, Uniform};

use crate::error::{Error, Result};
use crate::nn::Matrix;
use crate::rng::rng_from;
use crate::scalar::Real;

/// Labeled samples. Rows of `features` align with `labels`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset<T = f64> {
    pub features: Matrix<T>,
    pub labels: Vec<usize>,
    pub num_classes: usize,
    pub name: String,
}

impl<T: Real> Dataset<T> {
    pub fn new(features: Matrix<T>, labels: Vec<usize>, num_classes: usize, name: impl Into<String>) -> Result<Self> {
        if features.rows() == 0 || features.cols() == 0 {
            return Err(Error::Config("dataset needs at least one sample and one feature".into()));
        }
        if labels.len() != features.rows() {
            return Err(Error::dim("dataset labels", features.rows(), labels.len()));
        }
        if let Some((row, &label)) = labels.iter().enumerate().find(|(_, &l)| l >= num_classes) {
            return Err(Error::Label {
                row,
                label,
                num_classes,
            });
        }
        Ok(Self {
            features,
            labels,
            num_classes,
            name: name.into(),
        })
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

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_classes];
        for &y in &self.labels {
            counts[y] += 1;
        }
        counts
    }

    /// Appends `other`, returning the combined set and the index range the
    /// rows of `other` occupy in it.
    pub fn concat(&self, other: &Self) -> Result<(Self, Range<usize>)> {
        if self.dim() != other.dim() {
            return Err(Error::dim("dataset concat", self.dim(), other.dim()));
        }
        let features = self.features.vstack(&other.features)?;
        let mut labels = self.labels.clone();
        labels.extend_from_slice(&other.labels);
        let range = self.len()..self.len() + other.len();
        let ds = Self::new(features, labels, self.num_classes.max(other.num_classes), self.name.clone())?;
        Ok((ds, range))
    }

    /// Loads a comma separated file whose last column is an integer label.
    pub fn from_csv(path: impl AsRef<Path>, has_header: bool) -> Result<Self> {
        let path = path.as_ref();
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(has_header)
            .flexible(true)
            .trim(csv::Trim::All)
            .from_path(path)
            .map_err(|e| csv_error(path, e))?;
        let mut width = None;
        let mut values = Vec::new();
        let mut labels = Vec::new();
        for record in reader.records() {
            let record = record.map_err(|e| csv_error(path, e))?;
            let line = record.position().map_or(0, |p| p.line());
            let w = *width.get_or_insert(record.len());
            if record.len() != w {
                return Err(Error::Parse {
                    path: path.into(),
                    line,
                    msg: format!("expected {w} fields, found {}", record.len()),
                });
            }
            if w < 2 {
                return Err(Error::Parse {
                    path: path.into(),
                    line,
                    msg: "need at least one feature column and a label column".into(),
                });
            }
            for (col, cell) in record.iter().take(w - 1).enumerate() {
                let v: f64 = cell.parse().map_err(|_| Error::Parse {
                    path: path.into(),
                    line,
                    msg: format!("column {}: '{cell}' is not a number", col + 1),
                })?;
                if !v.is_finite() {
                    return Err(Error::Parse {
                        path: path.into(),
                        line,
                        msg: format!("column {}: non-finite value", col + 1),
                    });
                }
                values.push(T::lit(v));
            }
            let cell = &record[w - 1];
            let label: usize = cell.parse().map_err(|_| Error::Parse {
                path: path.into(),
                line,
                msg: format!("label '{cell}' is not a non-negative integer"),
            })?;
            labels.push(label);
        }
        let width = width.ok_or_else(|| Error::Format {
            path: path.into(),
            msg: "no data rows".into(),
        })?;
        let num_classes = labels.iter().max().map_or(0, |&m| m + 1);
        let features = Matrix::from_vec(labels.len(), width - 1, values)?;
        let name = path
            .file_stem()
            .map_or_else(|| "csv".to_string(), |s| s.to_string_lossy().into_owned());
        Self::new(features, labels, num_classes, name)
    }
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line());
    match e.into_kind() {
        csv::ErrorKind::Io(source) => Error::io(path, source),
        other => Error::Parse {
            path: path.into(),
            line,
            msg: format!("{other:?}"),
        },
    }
}

/// Parameters of [`make_blobs`].
#[derive(Debug, Clone, PartialEq)]
pub struct BlobSpec {
    pub num_classes: usize,
    pub per_class_counts: Vec<usize>,
    pub dim: usize,
    pub centers_seed: u64,
    pub noise_sigma: f64,
    pub sample_seed: u64,
}

/// Isotropic Gaussian clusters around centers drawn uniformly from
/// `[-1, 1]^dim`. Rows are grouped by class.
pub fn make_blobs<T: Real>(spec: &BlobSpec) -> Result<Dataset<T>> {
    if spec.dim < 2 {
        return Err(Error::Config(format!("blobs need dim >= 2, got {}", spec.dim)));
    }
    if spec.per_class_counts.len() != spec.num_classes {
        return Err(Error::dim("per_class_counts", spec.num_classes, spec.per_class_counts.len()));
    }
    if !(spec.noise_sigma >= 0.0 && spec.noise_sigma.is_finite()) {
        return Err(Error::Config(format!("noise_sigma must be finite and >= 0, got {}", spec.noise_sigma)));
    }
    let mut crng = rng_from(spec.centers_seed);
    let unit = Uniform::new_inclusive(-1.0, 1.0).expect("valid range");
    let centers: Vec<Vec<f64>> = (0..spec.num_classes)
        .map(|_| (0..spec.dim).map(|_| unit.sample(&mut crng)).collect())
        .collect();

    let mut srng = rng_from(spec.sample_seed);
    let noise = Normal::new(0.0, spec.noise_sigma).expect("sigma checked above");
    let n: usize = spec.per_class_counts.iter().sum();
    let mut values = Vec::with_capacity(n * spec.dim);
    let mut labels = Vec::with_capacity(n);
    for (c, &count) in spec.per_class_counts.iter().enumerate() {
        for _ in 0..count {
            for &mu in &centers[c] {
                let e = if spec.noise_sigma > 0.0 { noise.sample(&mut srng) } else { 0.0 };
                values.push(T::lit(mu + e));
            }
            labels.push(c);
        }
    }
    let features = Matrix::from_vec(n, spec.dim, values)?;
    Dataset::new(features, labels, spec.num_classes, "blobs")
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn blobs(counts: Vec<usize>, sigma: f64) -> BlobSpec {
        BlobSpec {
            num_classes: counts.len(),
            per_class_counts: counts,
            dim: 4,
            centers_seed: 1,
            noise_sigma: sigma,
            sample_seed: 2,
        }
    }

    #[test]
    fn zero_noise_blobs_sit_on_centers() {
        let ds: Dataset<f64> = make_blobs(&blobs(vec![3, 3], 0.0)).unwrap();
        assert_eq!(ds.features.row(0), ds.features.row(2));
        assert_ne!(ds.features.row(0), ds.features.row(3));
    }

    #[test]
    fn blob_counts_and_determinism() {
        let spec = blobs(vec![100, 10], 0.3);
        let a: Dataset<f64> = make_blobs(&spec).unwrap();
        assert_eq!(a.len(), 110);
        assert_eq!(a.class_counts(), vec![100, 10]);
        let b: Dataset<f64> = make_blobs(&spec).unwrap();
        assert!(a.features.bitwise_eq(&b.features));
        assert_eq!(a.labels, b.labels);
        let mut one_dim = spec.clone();
        one_dim.dim = 1;
        assert!(make_blobs::<f64>(&one_dim).is_err());
    }

    fn write_tmp(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    #[test]
    fn csv_basic_and_header() {
        let f = write_tmp("a,b,label\n0.5,1.0,0\n1.5,-2,1\n3,4,1\n");
        let ds = Dataset::<f64>::from_csv(f.path(), true).unwrap();
        assert_eq!((ds.len(), ds.dim(), ds.num_classes), (3, 2, 2));
        assert_eq!(ds.features.row(1), &[1.5, -2.0]);
        assert!(Dataset::<f64>::from_csv(f.path(), false).is_err());
    }

    #[test]
    fn csv_ragged_row_reports_line() {
        let f = write_tmp("0.5,1.0,0\n1.5,1\n");
        match Dataset::<f64>::from_csv(f.path(), false) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn csv_non_numeric_cell() {
        let f = write_tmp("0.5,x,0\n");
        assert!(matches!(Dataset::<f64>::from_csv(f.path(), false), Err(Error::Parse { line: 1, .. })));
    }

    #[test]
    fn concat_reports_range() {
        let a: Dataset<f64> = make_blobs(&blobs(vec![2, 2], 0.1)).unwrap();
        let (c, r) = a.concat(&a).unwrap();
        assert_eq!(c.len(), 8);
        assert_eq!(r, 4..8);
    }
}
