//! Per-subject adjacency matrices and cohort-level feature matrices: loading,
//! vectorization, and the trait-table transformations (zero-variance removal,
//! sparse-trait dropping, mean imputation, standardization).

use std::collections::HashSet;

use nalgebra::DMatrix;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConnectomeError {
    #[error("{context}: cannot read CSV: {source}")]
    Csv { context: String, source: csv::Error },
    #[error("adjacency matrix is not square: {rows} rows for {p} columns")]
    NotSquare { rows: usize, p: usize },
    #[error("row {row} has {got} entries, expected {expected}")]
    RaggedRow { row: usize, got: usize, expected: usize },
    #[error("entry ({i},{j}) is not a nonnegative integer: `{value}`")]
    BadEntry { i: usize, j: usize, value: String },
    #[error("asymmetric counts: entry ({i},{j})={a} but ({j},{i})={b}")]
    Asymmetric { i: usize, j: usize, a: u64, b: u64 },
    #[error("subjects have mixed ROI counts: {a} vs {b}")]
    MixedDimensions { a: usize, b: usize },
    #[error("empty cohort")]
    EmptyCohort,
    #[error("need at least 2 subjects, got {0}")]
    TooFewSubjects(usize),
    #[error("column `{0}` has zero variance")]
    ZeroVariance(String),
    #[error("column `{0}` contains missing values; impute before standardizing")]
    UnexpectedMissing(String),
    #[error("column `{0}` has no observed values")]
    FullyMissing(String),
    #[error("trait table has no `subject_id` column")]
    MissingSubjectColumn,
    #[error("duplicate column label `{0}`")]
    DuplicateLabel(String),
    #[error("threshold must lie in (0,1), got {0}")]
    BadThreshold(f64),
    #[error("cell ({row},{col}): expected a number, empty, or NA, got `{value}`")]
    BadTraitValue { row: usize, col: usize, value: String },
}

/// Symmetric nonnegative integer fiber-count matrix for one subject.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AdjacencyMatrix {
    subject_id: String,
    p: usize,
    counts: Vec<u64>,
    roi_names: Vec<String>,
}

impl AdjacencyMatrix {
    /// Build from a dense row-major buffer, validating symmetry.
    pub fn from_counts(
        subject_id: impl Into<String>,
        p: usize,
        counts: Vec<u64>,
        roi_names: Vec<String>,
    ) -> Result<Self, ConnectomeError> {
        assert_eq!(counts.len(), p * p, "counts buffer must be p*p");
        for i in 0..p {
            for j in (i + 1)..p {
                let a = counts[i * p + j];
                let b = counts[j * p + i];
                if a != b {
                    return Err(ConnectomeError::Asymmetric { i, j, a, b });
                }
            }
        }
        Ok(Self {
            subject_id: subject_id.into(),
            p,
            counts,
            roi_names,
        })
    }

    /// Parse the adjacency CSV format: one header row of `p` ROI names, then
    /// `p` rows of `p` nonnegative integers. Symmetry is checked exactly.
    pub fn load(text: &str, subject_id: impl Into<String>) -> Result<Self, ConnectomeError> {
        let mut reader = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .trim(csv::Trim::All)
            .flexible(true)
            .from_reader(text.as_bytes());
        let roi_names: Vec<String> = reader
            .headers()
            .map_err(|e| ConnectomeError::Csv {
                context: "adjacency header".into(),
                source: e,
            })?
            .iter()
            .map(str::to_string)
            .collect();
        let p = roi_names.len();

        let mut counts = Vec::with_capacity(p * p);
        let mut rows = 0usize;
        for record in reader.records() {
            let record = record.map_err(|e| ConnectomeError::Csv {
                context: "adjacency row".into(),
                source: e,
            })?;
            if record.len() != p {
                return Err(ConnectomeError::RaggedRow {
                    row: rows,
                    got: record.len(),
                    expected: p,
                });
            }
            for (j, field) in record.iter().enumerate() {
                let value = field.parse::<u64>().map_err(|_| ConnectomeError::BadEntry {
                    i: rows,
                    j,
                    value: field.to_string(),
                })?;
                counts.push(value);
            }
            rows += 1;
        }
        if rows != p {
            return Err(ConnectomeError::NotSquare { rows, p });
        }
        Self::from_counts(subject_id, p, counts, roi_names)
    }

    pub fn subject_id(&self) -> &str {
        &self.subject_id
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn roi_names(&self) -> &[String] {
        &self.roi_names
    }

    pub fn get(&self, i: usize, j: usize) -> u64 {
        self.counts[i * self.p + j]
    }

    pub fn trace(&self) -> u64 {
        (0..self.p).map(|i| self.get(i, i)).sum()
    }

    /// Sum of the strict upper triangle.
    pub fn upper_triangle_sum(&self) -> u64 {
        let mut total = 0;
        for i in 0..self.p {
            for j in (i + 1)..self.p {
                total += self.get(i, j);
            }
        }
        total
    }

    pub fn to_csv(&self) -> String {
        let mut out = self.roi_names.join(",");
        out.push('\n');
        for i in 0..self.p {
            let row: Vec<String> = (0..self.p).map(|j| self.get(i, j).to_string()).collect();
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }
}

/// Cohort-level feature matrix. Missing cells are stored as NaN; `column_mask`
/// tracks which columns of the original feature space each column came from.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    values: DMatrix<f64>,
    column_labels: Vec<String>,
    column_mask: Vec<usize>,
    subject_ids: Vec<String>,
}

impl FeatureMatrix {
    pub fn new(
        values: DMatrix<f64>,
        column_labels: Vec<String>,
        column_mask: Vec<usize>,
        subject_ids: Vec<String>,
    ) -> Result<Self, ConnectomeError> {
        assert_eq!(values.ncols(), column_labels.len());
        assert_eq!(values.ncols(), column_mask.len());
        assert_eq!(values.nrows(), subject_ids.len());
        let mut seen = HashSet::new();
        for label in &column_labels {
            if !seen.insert(label.as_str()) {
                return Err(ConnectomeError::DuplicateLabel(label.clone()));
            }
        }
        Ok(Self {
            values,
            column_labels,
            column_mask,
            subject_ids,
        })
    }

    pub fn n(&self) -> usize {
        self.values.nrows()
    }

    pub fn d(&self) -> usize {
        self.values.ncols()
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn column_labels(&self) -> &[String] {
        &self.column_labels
    }

    pub fn column_mask(&self) -> &[usize] {
        &self.column_mask
    }

    pub fn subject_ids(&self) -> &[String] {
        &self.subject_ids
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.values.column(j).iter().copied().collect()
    }

    pub fn has_missing(&self) -> bool {
        self.values.iter().any(|v| v.is_nan())
    }

    /// Keep the given columns (indices into this matrix), composing the mask.
    fn select_columns(&self, keep: &[usize]) -> Self {
        let values = DMatrix::from_fn(self.n(), keep.len(), |i, k| self.values[(i, keep[k])]);
        Self {
            values,
            column_labels: keep.iter().map(|&j| self.column_labels[j].clone()).collect(),
            column_mask: keep.iter().map(|&j| self.column_mask[j]).collect(),
            subject_ids: self.subject_ids.clone(),
        }
    }

    /// Serialize as CSV with a `subject_id` column; missing cells are empty.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("subject_id");
        for label in &self.column_labels {
            out.push(',');
            out.push_str(label);
        }
        out.push('\n');
        for i in 0..self.n() {
            out.push_str(&self.subject_ids[i]);
            for j in 0..self.d() {
                out.push(',');
                let v = self.values[(i, j)];
                if !v.is_nan() {
                    out.push_str(&format!("{v}"));
                }
            }
            out.push('\n');
        }
        out
    }
}

/// Parse a trait table: header `subject_id,<trait names...>`, one row per
/// subject; missing values are empty cells or `NA`.
pub fn load_traits(text: &str) -> Result<FeatureMatrix, ConnectomeError> {
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers: Vec<String> = reader
        .headers()
        .map_err(|e| ConnectomeError::Csv {
            context: "trait header".into(),
            source: e,
        })?
        .iter()
        .map(str::to_string)
        .collect();
    if headers.first().map(String::as_str) != Some("subject_id") {
        return Err(ConnectomeError::MissingSubjectColumn);
    }
    let labels: Vec<String> = headers[1..].to_vec();

    let mut subject_ids = Vec::new();
    let mut data: Vec<f64> = Vec::new();
    for (row, record) in reader.records().enumerate() {
        let record = record.map_err(|e| ConnectomeError::Csv {
            context: "trait row".into(),
            source: e,
        })?;
        subject_ids.push(record.get(0).unwrap_or("").to_string());
        for col in 0..labels.len() {
            let field = record.get(col + 1).unwrap_or("");
            let value = match field {
                "" | "NA" => f64::NAN,
                s => s.parse::<f64>().map_err(|_| ConnectomeError::BadTraitValue {
                    row,
                    col,
                    value: s.to_string(),
                })?,
            };
            data.push(value);
        }
    }
    let n = subject_ids.len();
    let values = DMatrix::from_row_slice(n, labels.len(), &data);
    let mask = (0..labels.len()).collect();
    FeatureMatrix::new(values, labels, mask, subject_ids)
}

/// Parse a cohort manifest: CSV `subject_id,adjacency_path`.
pub fn load_manifest(text: &str) -> Result<Vec<(String, String)>, ConnectomeError> {
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut entries = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| ConnectomeError::Csv {
            context: "cohort manifest".into(),
            source: e,
        })?;
        entries.push((
            record.get(0).unwrap_or("").to_string(),
            record.get(1).unwrap_or("").to_string(),
        ));
    }
    Ok(entries)
}

/// Vectorize the strict upper triangle of each subject's matrix, row-major
/// over pairs `i < j`, giving a `p(p-1)/2`-column feature matrix with labels
/// `ROI_i–ROI_j`.
pub fn vectorize_upper(cohort: &[AdjacencyMatrix]) -> Result<FeatureMatrix, ConnectomeError> {
    let first = cohort.first().ok_or(ConnectomeError::EmptyCohort)?;
    let p = first.p();
    for m in cohort {
        if m.p() != p {
            return Err(ConnectomeError::MixedDimensions { a: p, b: m.p() });
        }
    }
    let d = p * (p - 1) / 2;
    let mut labels = Vec::with_capacity(d);
    for i in 0..p {
        for j in (i + 1)..p {
            labels.push(format!("ROI_{i}\u{2013}ROI_{j}"));
        }
    }
    let mut values = DMatrix::zeros(cohort.len(), d);
    for (s, m) in cohort.iter().enumerate() {
        let mut k = 0;
        for i in 0..p {
            for j in (i + 1)..p {
                values[(s, k)] = m.get(i, j) as f64;
                k += 1;
            }
        }
    }
    let subject_ids = cohort.iter().map(|m| m.subject_id().to_string()).collect();
    FeatureMatrix::new(values, labels, (0..d).collect(), subject_ids)
}

/// Drop columns whose values are all equal. Equality is exact, not
/// epsilon-based: fiber counts are integers and "no variability" means
/// literally constant.
pub fn filter_zero_variance(x: &FeatureMatrix) -> Result<FeatureMatrix, ConnectomeError> {
    if x.n() < 2 {
        return Err(ConnectomeError::TooFewSubjects(x.n()));
    }
    let keep: Vec<usize> = (0..x.d())
        .filter(|&j| {
            let col = x.values.column(j);
            let first = col[0];
            !col.iter().all(|&v| v == first || (v.is_nan() && first.is_nan()))
        })
        .collect();
    Ok(x.select_columns(&keep))
}

/// Standardize every column to sample mean 0 and sample standard deviation 1
/// (denominator n-1).
pub fn standardize(x: &FeatureMatrix) -> Result<FeatureMatrix, ConnectomeError> {
    let n = x.n();
    let mut values = x.values.clone();
    for j in 0..x.d() {
        let mut col = values.column_mut(j);
        if col.iter().any(|v| v.is_nan()) {
            return Err(ConnectomeError::UnexpectedMissing(x.column_labels[j].clone()));
        }
        let mean = col.iter().sum::<f64>() / n as f64;
        let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0);
        if var == 0.0 {
            return Err(ConnectomeError::ZeroVariance(x.column_labels[j].clone()));
        }
        let sd = var.sqrt();
        for v in col.iter_mut() {
            *v = (*v - mean) / sd;
        }
    }
    Ok(FeatureMatrix {
        values,
        column_labels: x.column_labels.clone(),
        column_mask: x.column_mask.clone(),
        subject_ids: x.subject_ids.clone(),
    })
}

/// Replace missing cells by the column mean of the observed cells; observed
/// column means are unchanged.
pub fn impute_mean(y: &FeatureMatrix) -> Result<FeatureMatrix, ConnectomeError> {
    let mut values = y.values.clone();
    for j in 0..y.d() {
        let mut col = values.column_mut(j);
        let observed: Vec<f64> = col.iter().copied().filter(|v| !v.is_nan()).collect();
        if observed.is_empty() {
            return Err(ConnectomeError::FullyMissing(y.column_labels[j].clone()));
        }
        let mean = observed.iter().sum::<f64>() / observed.len() as f64;
        for v in col.iter_mut() {
            if v.is_nan() {
                *v = mean;
            }
        }
    }
    Ok(FeatureMatrix {
        values,
        column_labels: y.column_labels.clone(),
        column_mask: y.column_mask.clone(),
        subject_ids: y.subject_ids.clone(),
    })
}

/// Remove columns whose missing fraction exceeds `threshold` (default 0.10).
pub fn drop_sparse_traits(
    y: &FeatureMatrix,
    threshold: f64,
) -> Result<FeatureMatrix, ConnectomeError> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(ConnectomeError::BadThreshold(threshold));
    }
    let n = y.n() as f64;
    let keep: Vec<usize> = (0..y.d())
        .filter(|&j| {
            let missing = y.values.column(j).iter().filter(|v| v.is_nan()).count() as f64;
            missing / n <= threshold
        })
        .collect();
    Ok(y.select_columns(&keep))
}
