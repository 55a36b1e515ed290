//! Labeled tabular data: ingestion, linear scaling, column projection and
//! stratified fold planning.

use std::collections::BTreeSet;
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use ndarray::{Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Default scaling range for features.
pub const DEFAULT_BOUNDS: (f64, f64) = (-1.0, 1.0);

/// Binary feature selector; bit `j` set means column `j` is kept.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct FeatureMask {
    bits: Vec<bool>,
}

impl FeatureMask {
    pub fn new(bits: Vec<bool>) -> Self {
        Self { bits }
    }

    pub fn zeros(len: usize) -> Self {
        Self {
            bits: vec![false; len],
        }
    }

    pub fn ones(len: usize) -> Self {
        Self {
            bits: vec![true; len],
        }
    }

    /// Builds a mask of length `len` from 0-based indices. Out-of-range
    /// indices are rejected.
    pub fn from_indices(len: usize, indices: &[usize]) -> Result<Self> {
        let mut bits = vec![false; len];
        for &i in indices {
            if i >= len {
                return Err(invalid(
                    "mask",
                    format!("feature index {} exceeds feature count {len}", i + 1),
                ));
            }
            bits[i] = true;
        }
        Ok(Self { bits })
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn get(&self, j: usize) -> bool {
        self.bits[j]
    }

    pub fn set(&mut self, j: usize, value: bool) {
        self.bits[j] = value;
    }

    pub fn flip(&mut self, j: usize) {
        self.bits[j] = !self.bits[j];
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn count_ones(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn none(&self) -> bool {
        !self.bits.iter().any(|&b| b)
    }

    /// 0-based indices of the set bits, ascending.
    pub fn indices(&self) -> Vec<usize> {
        self.bits
            .iter()
            .enumerate()
            .filter_map(|(i, &b)| b.then_some(i))
            .collect()
    }

    pub fn hamming(&self, other: &FeatureMask) -> usize {
        self.bits
            .iter()
            .zip(&other.bits)
            .filter(|(a, b)| a != b)
            .count()
    }

    pub fn complement(&self) -> FeatureMask {
        FeatureMask {
            bits: self.bits.iter().map(|b| !b).collect(),
        }
    }

    pub fn and(&self, other: &FeatureMask) -> FeatureMask {
        FeatureMask {
            bits: self
                .bits
                .iter()
                .zip(&other.bits)
                .map(|(a, b)| *a && *b)
                .collect(),
        }
    }
}

impl fmt::Display for FeatureMask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for &b in &self.bits {
            f.write_str(if b { "1" } else { "0" })?;
        }
        Ok(())
    }
}

/// Selects the label column of a delimited file.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum LabelColumn {
    Index(usize),
    Name(String),
}

impl Default for LabelColumn {
    fn default() -> Self {
        LabelColumn::Name("class".into())
    }
}

impl fmt::Display for LabelColumn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LabelColumn::Index(i) => write!(f, "#{i}"),
            LabelColumn::Name(n) => write!(f, "{n:?}"),
        }
    }
}

/// Labeled samples with named real-valued features. Rows are patterns,
/// columns are features; labels are indices into `classes`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub name: String,
    pub features: Vec<String>,
    pub samples: Array2<f64>,
    pub labels: Vec<usize>,
    pub classes: Vec<String>,
}

impl Dataset {
    pub fn new(
        name: impl Into<String>,
        features: Vec<String>,
        samples: Array2<f64>,
        labels: Vec<usize>,
        classes: Vec<String>,
    ) -> Result<Self> {
        let (rows, cols) = samples.dim();
        if rows == 0 || cols == 0 {
            return Err(Error::EmptyDataset);
        }
        if features.len() != cols {
            return Err(Error::LengthMismatch {
                expected: cols,
                actual: features.len(),
            });
        }
        if labels.len() != rows {
            return Err(Error::LengthMismatch {
                expected: rows,
                actual: labels.len(),
            });
        }
        let mut seen = vec![false; classes.len()];
        for &l in &labels {
            *seen.get_mut(l).ok_or(Error::UnknownLabel(l))? = true;
        }
        if classes.len() < 2 {
            return Err(Error::SingleClass);
        }
        if let Some(c) = seen.iter().position(|s| !s) {
            return Err(invalid(
                "labels",
                format!("class {:?} has no samples", classes[c]),
            ));
        }
        Ok(Self {
            name: name.into(),
            features,
            samples,
            labels,
            classes,
        })
    }

    /// Builds a dataset from row vectors with integer labels `0..n_classes`
    /// and generated feature/class names. Handy for synthetic data.
    pub fn from_rows(name: &str, rows: &[Vec<f64>], labels: &[usize]) -> Result<Self> {
        let n_features = rows.first().map_or(0, Vec::len);
        let mut flat = Vec::with_capacity(rows.len() * n_features);
        for (i, r) in rows.iter().enumerate() {
            if r.len() != n_features {
                return Err(Error::Cell {
                    row: i + 1,
                    column: "*".into(),
                    reason: format!("expected {n_features} values, found {}", r.len()),
                });
            }
            flat.extend_from_slice(r);
        }
        let samples = Array2::from_shape_vec((rows.len(), n_features), flat)
            .map_err(|e| invalid("rows", e.to_string()))?;
        let n_classes = labels.iter().max().map_or(0, |m| m + 1);
        Self::new(
            name,
            (1..=n_features).map(|j| format!("f{j}")).collect(),
            samples,
            labels.to_vec(),
            (0..n_classes).map(|c| c.to_string()).collect(),
        )
    }

    pub fn n_features(&self) -> usize {
        self.samples.ncols()
    }

    pub fn n_samples(&self) -> usize {
        self.samples.nrows()
    }

    pub fn n_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.n_classes()];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }

    pub fn full_mask(&self) -> FeatureMask {
        FeatureMask::ones(self.n_features())
    }
}

fn detect_delimiter(first_line: &str) -> u8 {
    let tabs = first_line.matches('\t').count();
    let commas = first_line.matches(',').count();
    if tabs > commas {
        b'\t'
    } else {
        b','
    }
}

/// Reads a delimited text file (comma or tab, detected from the header)
/// with one header row. Every non-label column must be numeric; empty cells
/// and `?` are rejected as missing values.
pub fn load_dataset(path: impl AsRef<Path>, label: &LabelColumn) -> Result<Dataset> {
    let path = path.as_ref();
    let io_err = |source| Error::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut first = String::new();
    BufReader::new(File::open(path).map_err(io_err)?)
        .read_line(&mut first)
        .map_err(io_err)?;
    let delimiter = detect_delimiter(&first);

    let mut reader = csv::ReaderBuilder::new()
        .delimiter(delimiter)
        .trim(csv::Trim::All)
        .from_path(path)?;
    let header: Vec<String> = reader.headers()?.iter().map(str::to_owned).collect();
    let label_idx = match label {
        LabelColumn::Index(i) if *i < header.len() => *i,
        LabelColumn::Name(n) => header
            .iter()
            .position(|h| h == n)
            .ok_or_else(|| Error::MissingLabelColumn(label.to_string()))?,
        _ => return Err(Error::MissingLabelColumn(label.to_string())),
    };
    let features: Vec<String> = header
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != label_idx)
        .map(|(_, h)| h.clone())
        .collect();

    let mut values = Vec::new();
    let mut raw_labels = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        let row = i + 1;
        if record.len() != header.len() {
            return Err(Error::Cell {
                row,
                column: "*".into(),
                reason: format!("expected {} fields, found {}", header.len(), record.len()),
            });
        }
        for (j, cell) in record.iter().enumerate() {
            if cell.is_empty() || cell == "?" {
                return Err(Error::Cell {
                    row,
                    column: header[j].clone(),
                    reason: "missing value".into(),
                });
            }
            if j == label_idx {
                raw_labels.push(cell.to_owned());
                continue;
            }
            let v: f64 = cell.parse().map_err(|_| Error::Cell {
                row,
                column: header[j].clone(),
                reason: format!("non-numeric value {cell:?}"),
            })?;
            if !v.is_finite() {
                return Err(Error::Cell {
                    row,
                    column: header[j].clone(),
                    reason: format!("non-finite value {cell:?}"),
                });
            }
            values.push(v);
        }
    }
    if raw_labels.is_empty() {
        return Err(Error::EmptyDataset);
    }

    let classes: Vec<String> = raw_labels
        .iter()
        .cloned()
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    if classes.len() < 2 {
        return Err(Error::SingleClass);
    }
    let labels = raw_labels
        .iter()
        .map(|l| classes.binary_search(l).expect("label drawn from class set"))
        .collect();
    let samples = Array2::from_shape_vec((raw_labels.len(), features.len()), values)
        .map_err(|_| Error::EmptyDataset)?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    Dataset::new(name, features, samples, labels, classes)
}

/// Per-feature extrema used by the linear scaling rule.
#[derive(Clone, Debug, PartialEq)]
pub struct MinMax {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl MinMax {
    /// Extrema over the given rows (all rows when `rows` is `None`).
    pub fn fit(samples: ArrayView2<'_, f64>, rows: Option<&[usize]>) -> Self {
        let cols = samples.ncols();
        let mut min = vec![f64::INFINITY; cols];
        let mut max = vec![f64::NEG_INFINITY; cols];
        let mut visit = |row: ndarray::ArrayView1<'_, f64>| {
            for (j, &v) in row.iter().enumerate() {
                min[j] = min[j].min(v);
                max[j] = max[j].max(v);
            }
        };
        match rows {
            Some(rows) => rows.iter().for_each(|&r| visit(samples.row(r))),
            None => samples.axis_iter(Axis(0)).for_each(visit),
        }
        Self { min, max }
    }

    /// Maps `value` of feature `j` into `[lower, upper]`. Constant features
    /// map to `lower`. Values outside the fitted range extrapolate.
    pub fn scale(&self, j: usize, value: f64, lower: f64, upper: f64) -> f64 {
        let span = self.max[j] - self.min[j];
        if span > 0.0 {
            lower + (upper - lower) * ((value - self.min[j]) / span)
        } else {
            lower
        }
    }

    pub fn transform(&self, samples: ArrayView2<'_, f64>, lower: f64, upper: f64) -> Array2<f64> {
        let mut out = samples.to_owned();
        for mut row in out.axis_iter_mut(Axis(0)) {
            for (j, v) in row.iter_mut().enumerate() {
                *v = self.scale(j, *v, lower, upper);
            }
        }
        out
    }
}

/// Linearly rescales every feature into `[lower, upper]` using the
/// full-dataset minimum and maximum. Labels are untouched.
pub fn normalize(d: &Dataset, lower: f64, upper: f64) -> Result<Dataset> {
    if !(upper > lower) || !lower.is_finite() || !upper.is_finite() {
        return Err(invalid(
            "normalization bounds",
            format!("upper ({upper}) must exceed lower ({lower})"),
        ));
    }
    let stats = MinMax::fit(d.samples.view(), None);
    Ok(Dataset {
        samples: stats.transform(d.samples.view(), lower, upper),
        ..d.clone()
    })
}

/// Keeps only the masked columns, preserving their relative order.
pub fn project(d: &Dataset, mask: &FeatureMask) -> Result<Dataset> {
    if mask.len() != d.n_features() {
        return Err(Error::LengthMismatch {
            expected: d.n_features(),
            actual: mask.len(),
        });
    }
    let cols = mask.indices();
    if cols.is_empty() {
        return Err(Error::EmptyMask);
    }
    Ok(Dataset {
        name: d.name.clone(),
        features: cols.iter().map(|&j| d.features[j].clone()).collect(),
        samples: d.samples.select(Axis(1), &cols),
        labels: d.labels.clone(),
        classes: d.classes.clone(),
    })
}

/// Assignment of every row to one of `k` cross-validation folds.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub k: usize,
    pub assignment: Vec<usize>,
}

impl FoldPlan {
    pub fn test_rows(&self, fold: usize) -> Vec<usize> {
        (0..self.assignment.len())
            .filter(|&r| self.assignment[r] == fold)
            .collect()
    }

    pub fn train_rows(&self, fold: usize) -> Vec<usize> {
        (0..self.assignment.len())
            .filter(|&r| self.assignment[r] != fold)
            .collect()
    }

    pub fn fold_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &f in &self.assignment {
            sizes[f] += 1;
        }
        sizes
    }
}

/// Stratified k-fold plan. Rows of each class are shuffled and the classes
/// are laid end to end; position `p` of that sequence goes to fold
/// `p mod k`, which keeps both per-class and total fold sizes within one.
pub fn stratified_kfold(d: &Dataset, k: usize, seed: u64) -> Result<FoldPlan> {
    if k < 2 {
        return Err(invalid("cv.folds", format!("need at least 2 folds, got {k}")));
    }
    if k > d.n_samples() {
        return Err(invalid(
            "cv.folds",
            format!("{k} folds exceed {} samples", d.n_samples()),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); d.n_classes()];
    for (row, &l) in d.labels.iter().enumerate() {
        by_class[l].push(row);
    }
    let mut assignment = vec![0; d.n_samples()];
    let mut position = 0;
    for rows in &mut by_class {
        rows.shuffle(&mut rng);
        for &r in rows.iter() {
            assignment[r] = position % k;
            position += 1;
        }
    }
    Ok(FoldPlan { k, assignment })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_tmp(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    fn label() -> LabelColumn {
        LabelColumn::Name("class".into())
    }

    #[test]
    fn loads_comma_and_tab() {
        let f = write_tmp("a,b,class\n1,2,x\n3,4,y\n");
        let d = load_dataset(f.path(), &label()).unwrap();
        assert_eq!((d.n_features(), d.n_samples(), d.n_classes()), (2, 2, 2));

        let f = write_tmp("a\tclass\tb\n1\tx\t2\n3\ty\t4\n");
        let d = load_dataset(f.path(), &LabelColumn::Index(1)).unwrap();
        assert_eq!(d.features, vec!["a", "b"]);
        assert_eq!(d.samples[[1, 1]], 4.0);
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(matches!(
            load_dataset("/nonexistent/file.csv", &label()),
            Err(Error::Io { .. })
        ));

        let f = write_tmp("a,class\n1,x\nfoo,y\n");
        match load_dataset(f.path(), &label()) {
            Err(Error::Cell { row, column, .. }) => assert_eq!((row, column.as_str()), (2, "a")),
            other => panic!("unexpected {other:?}"),
        }

        let f = write_tmp("a,class\n1,x\n,y\n");
        match load_dataset(f.path(), &label()) {
            Err(Error::Cell { row, reason, .. }) => {
                assert_eq!(row, 2);
                assert!(reason.contains("missing"));
            }
            other => panic!("unexpected {other:?}"),
        }

        let f = write_tmp("a,class\n");
        assert!(matches!(load_dataset(f.path(), &label()), Err(Error::EmptyDataset)));

        let f = write_tmp("a,class\n1,x\n2,x\n");
        assert!(matches!(load_dataset(f.path(), &label()), Err(Error::SingleClass)));

        let f = write_tmp("a,b\n1,x\n2,y\n");
        assert!(matches!(
            load_dataset(f.path(), &label()),
            Err(Error::MissingLabelColumn(_))
        ));
    }

    #[test]
    fn one_row_per_class_is_valid() {
        let f = write_tmp("a,class\n0.5,p\n1.5,q\n");
        let d = load_dataset(f.path(), &label()).unwrap();
        assert_eq!(d.n_samples(), 2);
    }

    #[test]
    fn normalization_goldens() {
        let d = Dataset::from_rows("n", &[vec![0.0], vec![5.0], vec![10.0]], &[0, 1, 1]).unwrap();
        let n = normalize(&d, -1.0, 1.0).unwrap();
        assert_eq!(n.samples[[0, 0]], -1.0);
        assert_eq!(n.samples[[1, 0]], 0.0);
        assert_eq!(n.samples[[2, 0]], 1.0);
        assert_eq!(n.labels, d.labels);
        assert!(normalize(&d, 1.0, 1.0).is_err());
    }

    #[test]
    fn constant_feature_maps_to_lower() {
        let d = Dataset::from_rows("c", &[vec![3.0, 1.0], vec![3.0, 2.0]], &[0, 1]).unwrap();
        let n = normalize(&d, 0.0, 1.0).unwrap();
        assert_eq!(n.samples.column(0).to_vec(), vec![0.0, 0.0]);
    }

    #[test]
    fn projection_examples() {
        let d = Dataset::from_rows(
            "p",
            &[vec![1.0, 2.0, 3.0, 4.0], vec![5.0, 6.0, 7.0, 8.0]],
            &[0, 1],
        )
        .unwrap();
        assert_eq!(project(&d, &d.full_mask()).unwrap(), d);
        let p = project(&d, &FeatureMask::from_indices(4, &[2, 3]).unwrap()).unwrap();
        assert_eq!(p.features, vec!["f3", "f4"]);
        assert_eq!(p.samples.row(1).to_vec(), vec![7.0, 8.0]);
        let one = project(&d, &FeatureMask::from_indices(4, &[1]).unwrap()).unwrap();
        assert_eq!(one.n_features(), 1);
        assert!(matches!(project(&d, &FeatureMask::zeros(4)), Err(Error::EmptyMask)));
    }

    #[test]
    fn kfold_balanced_counts() {
        let rows: Vec<Vec<f64>> = (0..150).map(|i| vec![i as f64]).collect();
        let labels: Vec<usize> = (0..150).map(|i| i / 50).collect();
        let d = Dataset::from_rows("b", &rows, &labels).unwrap();
        let plan = stratified_kfold(&d, 10, 7).unwrap();
        for f in 0..10 {
            let test = plan.test_rows(f);
            assert_eq!(test.len(), 15);
            for c in 0..3 {
                assert_eq!(test.iter().filter(|&&r| labels[r] == c).count(), 5);
            }
        }
        assert_eq!(plan, stratified_kfold(&d, 10, 7).unwrap());
    }

    #[test]
    fn kfold_leave_one_out_and_errors() {
        let rows: Vec<Vec<f64>> = (0..7).map(|i| vec![i as f64]).collect();
        let labels = vec![0, 1, 0, 1, 0, 1, 1];
        let d = Dataset::from_rows("l", &rows, &labels).unwrap();
        let plan = stratified_kfold(&d, 7, 1).unwrap();
        assert!(plan.fold_sizes().iter().all(|&s| s == 1));
        assert!(stratified_kfold(&d, 8, 1).is_err());
        assert!(stratified_kfold(&d, 1, 1).is_err());
    }
}
