//! The labeled observation matrix shared by every module, plus its CSV form.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use ndarray::{Array2, ArrayView1, ArrayView2, Axis};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("{rows} rows but {labels} labels")]
    LengthMismatch { rows: usize, labels: usize },
    #[error("label {0} is outside 1..=J")]
    BadLabel(usize),
    #[error("dataset has no rows")]
    Empty,
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: u64,
        column: usize,
        message: String,
    },
    #[error("label column `{0}` not found in header")]
    LabelMissing(String),
    #[error("need at least two classes, found {0}")]
    TooFewClasses(usize),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct DatasetMeta {
    pub example_id: Option<String>,
    pub seed: Option<u64>,
    /// Original label strings, indexed by `label - 1`.
    pub class_names: Vec<String>,
    pub feature_names: Vec<String>,
}

/// Row-major observations with class labels in `1..=J`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    rows: Array2<f64>,
    labels: Vec<usize>,
    n_classes: usize,
    pub meta: DatasetMeta,
}

impl Dataset {
    pub fn new(rows: Array2<f64>, labels: Vec<usize>) -> Result<Self, DatasetError> {
        if rows.nrows() != labels.len() {
            return Err(DatasetError::LengthMismatch {
                rows: rows.nrows(),
                labels: labels.len(),
            });
        }
        if let Some(&bad) = labels.iter().find(|&&l| l == 0) {
            return Err(DatasetError::BadLabel(bad));
        }
        let n_classes = labels.iter().copied().max().unwrap_or(0);
        Ok(Self {
            rows,
            labels,
            n_classes,
            meta: DatasetMeta::default(),
        })
    }

    /// Same as [`Dataset::new`] but with a fixed class count, so that a subset
    /// missing the top class still reports the full `J`.
    pub fn with_classes(
        rows: Array2<f64>,
        labels: Vec<usize>,
        n_classes: usize,
    ) -> Result<Self, DatasetError> {
        let mut ds = Self::new(rows, labels)?;
        if let Some(&bad) = ds.labels.iter().find(|&&l| l > n_classes) {
            return Err(DatasetError::BadLabel(bad));
        }
        ds.n_classes = n_classes;
        Ok(ds)
    }

    pub fn rows(&self) -> ArrayView2<'_, f64> {
        self.rows.view()
    }

    pub fn row(&self, i: usize) -> ArrayView1<'_, f64> {
        self.rows.row(i)
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn n(&self) -> usize {
        self.rows.nrows()
    }

    pub fn d(&self) -> usize {
        self.rows.ncols()
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    /// Row indices belonging to class `label` (1-based).
    pub fn class_indices(&self, label: usize) -> Vec<usize> {
        self.labels
            .iter()
            .enumerate()
            .filter(|(_, &l)| l == label)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn class_rows(&self, label: usize) -> Array2<f64> {
        self.rows.select(Axis(0), &self.class_indices(label))
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.n_classes];
        for &l in &self.labels {
            counts[l - 1] += 1;
        }
        counts
    }

    pub fn proportions(&self) -> Vec<f64> {
        let n = self.n() as f64;
        self.class_counts().iter().map(|&c| c as f64 / n).collect()
    }

    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            rows: self.rows.select(Axis(0), indices),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            n_classes: self.n_classes,
            meta: self.meta.clone(),
        }
    }

    /// Writes `x1..xd,label` with a header row.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), DatasetError> {
        let mut w = csv::Writer::from_writer(out);
        let mut header: Vec<String> = (1..=self.d()).map(|k| format!("x{k}")).collect();
        header.push("label".to_string());
        w.write_record(&header)?;
        for (row, label) in self.rows.outer_iter().zip(&self.labels) {
            let mut rec: Vec<String> = row.iter().map(|v| format!("{v:e}")).collect();
            rec.push(label.to_string());
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<(), DatasetError> {
        let f = std::fs::File::create(path)?;
        self.write_csv(std::io::BufWriter::new(f))
    }
}

/// Options for reading a delimited file into a [`Dataset`].
#[derive(Debug, Clone)]
pub struct CsvOptions {
    pub label_column: String,
    pub drop_columns: Vec<String>,
}

impl Default for CsvOptions {
    fn default() -> Self {
        Self {
            label_column: "label".to_string(),
            drop_columns: Vec::new(),
        }
    }
}

/// Maps raw label strings to `1..=J`. Integer-valued labels sort numerically,
/// anything else lexicographically.
pub fn label_map(raw: &[String]) -> BTreeMap<String, usize> {
    let mut distinct: Vec<&String> = raw.iter().collect();
    distinct.sort();
    distinct.dedup();
    if distinct.iter().all(|s| s.parse::<i64>().is_ok()) {
        distinct.sort_by_key(|s| s.parse::<i64>().unwrap());
    }
    distinct
        .into_iter()
        .enumerate()
        .map(|(i, s)| (s.clone(), i + 1))
        .collect()
}

struct RawTable {
    features: Vec<Vec<f64>>,
    labels: Option<Vec<String>>,
    feature_names: Vec<String>,
}

fn read_table<R: Read>(
    input: R,
    label_column: Option<&str>,
    drop: &[String],
) -> Result<RawTable, DatasetError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let header = rdr.headers()?.clone();
    let label_idx = match label_column {
        Some(name) => Some(
            header
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| DatasetError::LabelMissing(name.to_string()))?,
        ),
        None => None,
    };
    let keep: Vec<usize> = (0..header.len())
        .filter(|&i| Some(i) != label_idx && !drop.iter().any(|d| d == &header[i]))
        .collect();
    let feature_names = keep.iter().map(|&i| header[i].to_string()).collect();
    let mut features = Vec::new();
    let mut labels = label_idx.map(|_| Vec::new());
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let mut row = Vec::with_capacity(keep.len());
        for &i in &keep {
            let field = rec.get(i).ok_or_else(|| DatasetError::Parse {
                line,
                column: i + 1,
                message: "missing field".to_string(),
            })?;
            let v: f64 = field.parse().map_err(|_| DatasetError::Parse {
                line,
                column: i + 1,
                message: format!("`{field}` is not a number"),
            })?;
            row.push(v);
        }
        if let (Some(idx), Some(labels)) = (label_idx, labels.as_mut()) {
            let field = rec.get(idx).ok_or_else(|| DatasetError::Parse {
                line,
                column: idx + 1,
                message: "missing label".to_string(),
            })?;
            labels.push(field.to_string());
        }
        features.push(row);
    }
    Ok(RawTable {
        features,
        labels,
        feature_names,
    })
}

fn to_matrix(rows: &[Vec<f64>]) -> Result<Array2<f64>, DatasetError> {
    let n = rows.len();
    if n == 0 {
        return Err(DatasetError::Empty);
    }
    let d = rows[0].len();
    let flat: Vec<f64> = rows.iter().flatten().copied().collect();
    Array2::from_shape_vec((n, d), flat).map_err(|e| DatasetError::Parse {
        line: 0,
        column: 0,
        message: e.to_string(),
    })
}

/// Reads a labeled CSV. Label strings are mapped with [`label_map`] unless an
/// explicit mapping is supplied (used to align a test file with its training file).
pub fn read_labeled_csv<R: Read>(
    input: R,
    opts: &CsvOptions,
    mapping: Option<&BTreeMap<String, usize>>,
) -> Result<Dataset, DatasetError> {
    let table = read_table(input, Some(&opts.label_column), &opts.drop_columns)?;
    let raw = table.labels.unwrap_or_default();
    let owned;
    let map = match mapping {
        Some(m) => m,
        None => {
            owned = label_map(&raw);
            &owned
        }
    };
    let mut labels = Vec::with_capacity(raw.len());
    for (i, s) in raw.iter().enumerate() {
        match map.get(s) {
            Some(&l) => labels.push(l),
            None => {
                return Err(DatasetError::Parse {
                    line: i as u64 + 2,
                    column: 0,
                    message: format!("unknown label `{s}`"),
                })
            }
        }
    }
    let mut class_names = vec![String::new(); map.len()];
    for (name, &l) in map {
        class_names[l - 1] = name.clone();
    }
    let mut ds = Dataset::with_classes(to_matrix(&table.features)?, labels, map.len())?;
    ds.meta.class_names = class_names;
    ds.meta.feature_names = table.feature_names;
    Ok(ds)
}

pub fn load_labeled_csv(path: &Path, opts: &CsvOptions) -> Result<Dataset, DatasetError> {
    read_labeled_csv(std::fs::File::open(path)?, opts, None)
}

/// Reads an unlabeled feature matrix; a column named `skip_column` (if present)
/// is ignored, so labeled files can be fed to prediction directly.
pub fn read_features_csv<R: Read>(
    input: R,
    skip_column: &str,
) -> Result<Array2<f64>, DatasetError> {
    let mut buf = String::new();
    let mut input = input;
    input.read_to_string(&mut buf)?;
    let has_label = buf
        .lines()
        .next()
        .map(|h| h.split(',').any(|c| c.trim() == skip_column))
        .unwrap_or(false);
    let table = if has_label {
        read_table(buf.as_bytes(), Some(skip_column), &[])?
    } else {
        read_table(buf.as_bytes(), None, &[])?
    };
    to_matrix(&table.features)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn rejects_zero_label_and_length_mismatch() {
        assert!(matches!(
            Dataset::new(array![[1.0], [2.0]], vec![1, 0]),
            Err(DatasetError::BadLabel(0))
        ));
        assert!(matches!(
            Dataset::new(array![[1.0], [2.0]], vec![1]),
            Err(DatasetError::LengthMismatch { .. })
        ));
    }

    #[test]
    fn csv_round_trip_keeps_values_and_labels() {
        let ds = Dataset::new(array![[0.1, -2.5], [3.25, 1e-17]], vec![2, 1]).unwrap();
        let mut buf = Vec::new();
        ds.write_csv(&mut buf).unwrap();
        let back = read_labeled_csv(buf.as_slice(), &CsvOptions::default(), None).unwrap();
        assert_eq!(back.rows(), ds.rows());
        assert_eq!(back.labels(), ds.labels());
    }

    #[test]
    fn categorical_labels_and_dropped_columns() {
        let text = "a,kind,b,junk\n1,dog,2,9\n3,cat,4,9\n5,dog,6,9\n";
        let opts = CsvOptions {
            label_column: "kind".into(),
            drop_columns: vec!["junk".into()],
        };
        let ds = read_labeled_csv(text.as_bytes(), &opts, None).unwrap();
        assert_eq!(ds.d(), 2);
        assert_eq!(ds.labels(), &[2, 1, 2]);
        assert_eq!(ds.meta.class_names, vec!["cat", "dog"]);
    }

    #[test]
    fn parse_error_reports_position() {
        let text = "x1,label\n1.0,1\nabc,2\n";
        let err = read_labeled_csv(text.as_bytes(), &CsvOptions::default(), None).unwrap_err();
        match err {
            DatasetError::Parse { line, column, .. } => {
                assert_eq!(line, 3);
                assert_eq!(column, 1);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn missing_label_column() {
        let err = read_labeled_csv("x,y\n1,2\n".as_bytes(), &CsvOptions::default(), None)
            .unwrap_err();
        assert!(matches!(err, DatasetError::LabelMissing(_)));
    }
}
