//! Datasets for one domain, source/target pairs and CSV ingestion.
//!
//! A [`Dataset`] is immutable once built. Every constructor validates the
//! invariants (matching row counts, binary treatment, finite values) so
//! downstream code never re-checks them.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use ndarray::{Array1, Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Result, TclError};

/// Covariates, binary treatment and real outcome for one domain.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    covariates: Array2<f64>,
    treatment: Array1<f64>,
    outcome: Array1<f64>,
    covariate_names: Vec<String>,
    treatment_name: String,
    outcome_name: String,
}

/// Treated and control row counts, always derived from a treatment vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupCounts {
    pub n_treated: usize,
    pub n_control: usize,
}

impl GroupCounts {
    pub fn total(&self) -> usize {
        self.n_treated + self.n_control
    }

    pub fn of_arm(&self, arm: Arm) -> usize {
        match arm {
            Arm::Treated => self.n_treated,
            Arm::Control => self.n_control,
        }
    }
}

/// A treatment arm.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Arm {
    Treated,
    Control,
}

impl Arm {
    pub fn indicator(self) -> f64 {
        match self {
            Arm::Treated => 1.0,
            Arm::Control => 0.0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Arm::Treated => "treated",
            Arm::Control => "control",
        }
    }
}

impl Dataset {
    /// Builds a dataset with default column names `x1..xd`, `z`, `y`.
    pub fn new(covariates: Array2<f64>, treatment: Array1<f64>, outcome: Array1<f64>) -> Result<Self> {
        let names = (1..=covariates.ncols()).map(|j| format!("x{j}")).collect();
        Self::with_names(covariates, treatment, outcome, names, "z".into(), "y".into())
    }

    pub fn with_names(
        covariates: Array2<f64>,
        treatment: Array1<f64>,
        outcome: Array1<f64>,
        covariate_names: Vec<String>,
        treatment_name: String,
        outcome_name: String,
    ) -> Result<Self> {
        let n = covariates.nrows();
        if n == 0 {
            return Err(TclError::Shape("dataset has no rows".into()));
        }
        if covariates.ncols() == 0 {
            return Err(TclError::Shape("dataset has no covariates".into()));
        }
        if treatment.len() != n || outcome.len() != n {
            return Err(TclError::Shape(format!(
                "covariates have {n} rows but treatment has {} and outcome has {}",
                treatment.len(),
                outcome.len()
            )));
        }
        if covariate_names.len() != covariates.ncols() {
            return Err(TclError::Shape(format!(
                "{} covariate names for {} columns",
                covariate_names.len(),
                covariates.ncols()
            )));
        }
        for (i, &z) in treatment.iter().enumerate() {
            if z != 0.0 && z != 1.0 {
                return Err(TclError::TreatmentNotBinary { row: i + 1, value: z });
            }
        }
        for ((i, j), v) in covariates.indexed_iter() {
            if !v.is_finite() {
                return Err(TclError::NonFinite {
                    row: i + 1,
                    column: covariate_names[j].clone(),
                });
            }
        }
        for (i, v) in outcome.iter().enumerate() {
            if !v.is_finite() {
                return Err(TclError::NonFinite {
                    row: i + 1,
                    column: outcome_name.clone(),
                });
            }
        }
        Ok(Self {
            covariates,
            treatment,
            outcome,
            covariate_names,
            treatment_name,
            outcome_name,
        })
    }

    pub fn n(&self) -> usize {
        self.covariates.nrows()
    }

    pub fn d(&self) -> usize {
        self.covariates.ncols()
    }

    pub fn covariates(&self) -> &Array2<f64> {
        &self.covariates
    }

    pub fn treatment(&self) -> &Array1<f64> {
        &self.treatment
    }

    pub fn outcome(&self) -> &Array1<f64> {
        &self.outcome
    }

    pub fn covariate_names(&self) -> &[String] {
        &self.covariate_names
    }

    pub fn treatment_name(&self) -> &str {
        &self.treatment_name
    }

    pub fn outcome_name(&self) -> &str {
        &self.outcome_name
    }

    pub fn is_treated(&self, row: usize) -> bool {
        self.treatment[row] == 1.0
    }

    pub fn group_counts(&self) -> GroupCounts {
        let n_treated = self.treatment.iter().filter(|&&z| z == 1.0).count();
        GroupCounts {
            n_treated,
            n_control: self.n() - n_treated,
        }
    }

    /// Row indices belonging to one arm, in order.
    pub fn arm_rows(&self, arm: Arm) -> Vec<usize> {
        let z = arm.indicator();
        (0..self.n()).filter(|&i| self.treatment[i] == z).collect()
    }

    /// New dataset made of the given rows (repeats allowed), in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> Result<Self> {
        if let Some(&bad) = rows.iter().find(|&&r| r >= self.n()) {
            return Err(TclError::Shape(format!("row index {bad} out of range {}", self.n())));
        }
        Self::with_names(
            self.covariates.select(Axis(0), rows),
            self.treatment.select(Axis(0), rows),
            self.outcome.select(Axis(0), rows),
            self.covariate_names.clone(),
            self.treatment_name.clone(),
            self.outcome_name.clone(),
        )
    }

    /// Rows of one arm; errors when the arm is empty.
    pub fn arm(&self, arm: Arm, domain: &str) -> Result<Self> {
        let rows = self.arm_rows(arm);
        if rows.is_empty() {
            return Err(TclError::EmptyArm {
                arm: arm.name().into(),
                domain: domain.into(),
            });
        }
        self.select_rows(&rows)
    }

    /// Row-wise concatenation; `other` rows follow `self` rows.
    pub fn concat(&self, other: &Dataset) -> Result<Self> {
        if self.d() != other.d() {
            return Err(TclError::Shape(format!(
                "cannot concatenate datasets with d={} and d={}",
                self.d(),
                other.d()
            )));
        }
        let cov = ndarray::concatenate(Axis(0), &[self.covariates.view(), other.covariates.view()])
            .map_err(|e| TclError::Shape(e.to_string()))?;
        let z = ndarray::concatenate(Axis(0), &[self.treatment.view(), other.treatment.view()])
            .map_err(|e| TclError::Shape(e.to_string()))?;
        let y = ndarray::concatenate(Axis(0), &[self.outcome.view(), other.outcome.view()])
            .map_err(|e| TclError::Shape(e.to_string()))?;
        Self::with_names(
            cov,
            z,
            y,
            self.covariate_names.clone(),
            self.treatment_name.clone(),
            self.outcome_name.clone(),
        )
    }

    /// Prepends a constant-one column named `intercept`.
    pub fn with_intercept(&self) -> Self {
        let n = self.n();
        let mut cov = Array2::<f64>::ones((n, self.d() + 1));
        cov.slice_mut(ndarray::s![.., 1..]).assign(&self.covariates);
        let mut names = Vec::with_capacity(self.d() + 1);
        names.push("intercept".to_string());
        names.extend(self.covariate_names.iter().cloned());
        Self {
            covariates: cov,
            treatment: self.treatment.clone(),
            outcome: self.outcome.clone(),
            covariate_names: names,
            treatment_name: self.treatment_name.clone(),
            outcome_name: self.outcome_name.clone(),
        }
    }

    /// Same rows with a replaced outcome vector.
    pub fn with_outcome(&self, outcome: Array1<f64>) -> Result<Self> {
        Self::with_names(
            self.covariates.clone(),
            self.treatment.clone(),
            outcome,
            self.covariate_names.clone(),
            self.treatment_name.clone(),
            self.outcome_name.clone(),
        )
    }

    /// Same rows with a replaced treatment vector.
    pub fn with_treatment(&self, treatment: Array1<f64>) -> Result<Self> {
        Self::with_names(
            self.covariates.clone(),
            treatment,
            self.outcome.clone(),
            self.covariate_names.clone(),
            self.treatment_name.clone(),
            self.outcome_name.clone(),
        )
    }

    /// Same rows with replaced covariates (names kept).
    pub fn with_covariates(&self, covariates: Array2<f64>) -> Result<Self> {
        Self::with_names(
            covariates,
            self.treatment.clone(),
            self.outcome.clone(),
            self.covariate_names.clone(),
            self.treatment_name.clone(),
            self.outcome_name.clone(),
        )
    }

    /// Maximum absolute covariate entry.
    pub fn max_abs_covariate(&self) -> f64 {
        self.covariates.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    /// Writes the dataset as CSV: covariates, then treatment, then outcome.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header: Vec<&str> = self.covariate_names.iter().map(String::as_str).collect();
        header.push(&self.treatment_name);
        header.push(&self.outcome_name);
        w.write_record(&header)?;
        let mut record = Vec::with_capacity(self.d() + 2);
        for i in 0..self.n() {
            record.clear();
            record.extend(self.covariates.row(i).iter().map(|v| v.to_string()));
            record.push(if self.is_treated(i) { "1".into() } else { "0".into() });
            record.push(self.outcome[i].to_string());
            w.write_record(&record)?;
        }
        w.flush().map_err(|e| TclError::Csv(e.into()))?;
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|source| TclError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        self.write_csv(file)
    }
}

/// Reads a dataset from a CSV file. All columns other than the treatment and
/// outcome columns are covariates, in file order.
pub fn load_csv(path: &Path, treatment_col: &str, outcome_col: &str) -> Result<Dataset> {
    let file = File::open(path).map_err(|source| TclError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    read_csv(file, treatment_col, outcome_col).map_err(|e| match e {
        TclError::EmptyFile(_) => TclError::EmptyFile(path.to_path_buf()),
        other => other,
    })
}

pub fn read_csv<R: Read>(reader: R, treatment_col: &str, outcome_col: &str) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers = rdr.headers()?.clone();
    if headers.is_empty() || (headers.len() == 1 && headers[0].is_empty()) {
        return Err(TclError::EmptyFile("<input>".into()));
    }
    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| TclError::MissingColumn(name.to_string()))
    };
    let zi = find(treatment_col)?;
    let yi = find(outcome_col)?;
    let cov_cols: Vec<usize> = (0..headers.len()).filter(|&c| c != zi && c != yi).collect();
    if cov_cols.is_empty() {
        return Err(TclError::Shape("no covariate columns".into()));
    }
    let names: Vec<String> = cov_cols.iter().map(|&c| headers[c].trim().to_string()).collect();

    let mut cov = Vec::new();
    let mut z = Vec::new();
    let mut y = Vec::new();
    for (r, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row = r + 1;
        let parse = |c: usize| -> Result<f64> {
            let raw = rec.get(c).unwrap_or("").trim();
            let v: f64 = raw.parse().map_err(|_| TclError::NonNumeric {
                row,
                column: headers[c].to_string(),
                value: raw.to_string(),
            })?;
            if !v.is_finite() {
                return Err(TclError::NonFinite {
                    row,
                    column: headers[c].to_string(),
                });
            }
            Ok(v)
        };
        for &c in &cov_cols {
            cov.push(parse(c)?);
        }
        let zv = parse(zi)?;
        if zv != 0.0 && zv != 1.0 {
            return Err(TclError::TreatmentNotBinary { row, value: zv });
        }
        z.push(zv);
        y.push(parse(yi)?);
    }
    if z.is_empty() {
        return Err(TclError::EmptyFile("<input>".into()));
    }
    let n = z.len();
    let covariates = Array2::from_shape_vec((n, cov_cols.len()), cov)
        .map_err(|e| TclError::Shape(e.to_string()))?;
    Dataset::with_names(
        covariates,
        Array1::from(z),
        Array1::from(y),
        names,
        headers[zi].trim().to_string(),
        headers[yi].trim().to_string(),
    )
}

/// Target and source datasets over the same covariate space.
#[derive(Debug, Clone, PartialEq)]
pub struct DomainPair {
    pub target: Dataset,
    pub source: Dataset,
}

impl DomainPair {
    pub fn new(target: Dataset, source: Dataset) -> Result<Self> {
        if target.d() != source.d() {
            return Err(TclError::Shape(format!(
                "target has d={} but source has d={}",
                target.d(),
                source.d()
            )));
        }
        Ok(Self { target, source })
    }

    pub fn d(&self) -> usize {
        self.target.d()
    }

    /// Target rows followed by source rows.
    pub fn merged(&self) -> Result<Dataset> {
        self.target.concat(&self.source)
    }

    pub fn with_intercept(&self) -> Self {
        Self {
            target: self.target.with_intercept(),
            source: self.source.with_intercept(),
        }
    }
}

/// Partitions one dataset into target (rows whose `col_index` value equals
/// `target_label`) and source (all other rows). The partitioning column is
/// kept unless `drop_column` is set.
pub fn split_by_covariate(
    data: &Dataset,
    col_index: usize,
    target_label: f64,
    drop_column: bool,
) -> Result<DomainPair> {
    if col_index >= data.d() {
        return Err(TclError::Shape(format!(
            "column index {col_index} out of range for d={}",
            data.d()
        )));
    }
    let column = data.covariates().column(col_index);
    let mut distinct: Vec<f64> = Vec::new();
    for &v in column.iter() {
        if !distinct.contains(&v) {
            distinct.push(v);
            if distinct.len() > 2 {
                break;
            }
        }
    }
    if distinct.len() != 2 {
        return Err(TclError::DegeneratePartition(format!(
            "column `{}` takes {} distinct value(s), expected exactly 2",
            data.covariate_names()[col_index],
            if distinct.len() > 2 { "more than 2".to_string() } else { distinct.len().to_string() }
        )));
    }
    if !distinct.contains(&target_label) {
        return Err(TclError::DegeneratePartition(format!(
            "target label {target_label} does not occur in column `{}`",
            data.covariate_names()[col_index]
        )));
    }
    let (t_rows, s_rows): (Vec<usize>, Vec<usize>) =
        (0..data.n()).partition(|&i| column[i] == target_label);

    let data = if drop_column {
        if data.d() == 1 {
            return Err(TclError::DegeneratePartition(
                "dropping the only covariate leaves no columns".into(),
            ));
        }
        let keep: Vec<usize> = (0..data.d()).filter(|&j| j != col_index).collect();
        let names = keep.iter().map(|&j| data.covariate_names()[j].clone()).collect();
        Dataset::with_names(
            data.covariates().select(Axis(1), &keep),
            data.treatment().clone(),
            data.outcome().clone(),
            names,
            data.treatment_name().to_string(),
            data.outcome_name().to_string(),
        )?
    } else {
        data.clone()
    };
    DomainPair::new(data.select_rows(&t_rows)?, data.select_rows(&s_rows)?)
}

/// Per-column scale factors for optional covariate standardization.
///
/// Columns are divided by their target-domain standard deviation without
/// centering, so the no-intercept index `x'b` stays exactly representable:
/// a coefficient `b'` fitted on scaled columns maps back to `b'_j / s_j`.
/// Zero-variance columns (e.g. an intercept) keep scale 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnScaling {
    pub scales: Vec<f64>,
}

impl ColumnScaling {
    pub fn from_dataset(data: &Dataset) -> Self {
        let n = data.n() as f64;
        let scales = data
            .covariates()
            .columns()
            .into_iter()
            .map(|col| {
                let mean = col.sum() / n;
                let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
                if var > 0.0 {
                    var.sqrt()
                } else {
                    1.0
                }
            })
            .collect();
        Self { scales }
    }

    pub fn apply(&self, data: &Dataset) -> Result<Dataset> {
        if self.scales.len() != data.d() {
            return Err(TclError::Shape("scaling dimension mismatch".into()));
        }
        let mut cov = data.covariates().clone();
        for (mut col, &s) in cov.columns_mut().into_iter().zip(&self.scales) {
            col.mapv_inplace(|v| v / s);
        }
        data.with_covariates(cov)
    }

    pub fn apply_pair(&self, pair: &DomainPair) -> Result<DomainPair> {
        DomainPair::new(self.apply(&pair.target)?, self.apply(&pair.source)?)
    }

    /// Maps coefficients fitted on scaled covariates back to the raw scale.
    pub fn unscale_coefficients(&self, coefficients: &Array1<f64>) -> Array1<f64> {
        coefficients
            .iter()
            .zip(&self.scales)
            .map(|(b, s)| b / s)
            .collect()
    }
}
