//! CSV ingestion with schema checks.
//!
//! Covariates and the outcome are looked up by header name, so column order
//! in the file does not matter. Empty covariate cells become missing values.
//! Specs with center-specific intercepts need a `center` column holding
//! 1-based center labels.

use std::io::Read;
use std::path::Path;

use crate::error::{BfiError, Result};
use crate::glm::{Dataset, Family, ModelSpec};

/// Column holding the 1-based center label for center-specific intercepts.
pub const CENTER_COLUMN: &str = "center";

struct Table {
    headers: Vec<String>,
    records: Vec<csv::StringRecord>,
}

fn load<R: Read>(reader: R) -> Result<Table> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
    let headers: Vec<String> = rdr
        .headers()
        .map_err(csv_error)?
        .iter()
        .map(str::to_string)
        .collect();
    let records = rdr.records().collect::<std::result::Result<Vec<_>, _>>().map_err(csv_error)?;
    if headers.is_empty() || records.is_empty() {
        return Err(BfiError::EmptyFile);
    }
    Ok(Table { headers, records })
}

fn csv_error(e: csv::Error) -> BfiError {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => BfiError::Io(io),
        csv::ErrorKind::UnequalLengths { pos, expected_len, len } => BfiError::UnparseableCell {
            row: pos.map_or(0, |p| p.line() as usize),
            col: String::new(),
            reason: format!("record has {len} fields, header has {expected_len}"),
        },
        other => BfiError::InvalidInput(format!("{other:?}")),
    }
}

impl Table {
    fn index(&self, name: &str) -> Result<usize> {
        self.headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| BfiError::MissingColumn(name.to_string()))
    }

    /// Parses column `j`; empty cells give NaN when `allow_missing`.
    /// Row numbers in errors are 1-based data rows.
    fn numeric(&self, j: usize, allow_missing: bool) -> Result<Vec<f64>> {
        let name = &self.headers[j];
        self.records
            .iter()
            .enumerate()
            .map(|(i, rec)| {
                let cell = rec.get(j).unwrap_or("");
                if cell.is_empty() || cell.eq_ignore_ascii_case("na") {
                    return if allow_missing {
                        Ok(f64::NAN)
                    } else {
                        Err(BfiError::UnparseableCell {
                            row: i + 1,
                            col: name.clone(),
                            reason: "empty cell".into(),
                        })
                    };
                }
                match cell.parse::<f64>() {
                    Ok(v) if v.is_finite() => Ok(v),
                    _ => Err(BfiError::UnparseableCell {
                        row: i + 1,
                        col: name.clone(),
                        reason: format!("{cell:?} is not a finite number"),
                    }),
                }
            })
            .collect()
    }

    fn covariate_rows(&self, spec: &ModelSpec) -> Result<Vec<Vec<f64>>> {
        let cols = spec
            .covariates
            .iter()
            .map(|c| self.index(c).and_then(|j| self.numeric(j, true)))
            .collect::<Result<Vec<_>>>()?;
        Ok((0..self.records.len()).map(|i| cols.iter().map(|c| c[i]).collect()).collect())
    }

    /// 0-based center indices when the model spec asks for them.
    fn centers(&self, spec: &ModelSpec) -> Result<Option<Vec<usize>>> {
        let Some(l) = spec.center_specific_intercepts else {
            return Ok(None);
        };
        let j = self.index(CENTER_COLUMN)?;
        let raw = self.numeric(j, false)?;
        raw.iter()
            .enumerate()
            .map(|(i, &v)| {
                if v.fract() == 0.0 && v >= 1.0 && v <= l as f64 {
                    Ok(v as usize - 1)
                } else {
                    Err(BfiError::UnparseableCell {
                        row: i + 1,
                        col: CENTER_COLUMN.into(),
                        reason: format!("center label must be an integer in 1..={l}"),
                    })
                }
            })
            .collect::<Result<Vec<_>>>()
            .map(Some)
    }
}

pub fn read_csv(path: &Path, spec: &ModelSpec, outcome: &str) -> Result<Dataset> {
    read_csv_from(std::fs::File::open(path)?, spec, outcome)
}

/// Dataset with rows in file order. Missing covariate cells are kept as
/// NaN; the outcome must be present in every row.
pub fn read_csv_from<R: Read>(reader: R, spec: &ModelSpec, outcome: &str) -> Result<Dataset> {
    spec.validate()?;
    let table = load(reader)?;
    let rows = table.covariate_rows(spec)?;
    let yj = table.index(outcome)?;
    let y = table.numeric(yj, false)?;
    if spec.family == Family::Logistic {
        if let Some(i) = y.iter().position(|&v| v != 0.0 && v != 1.0) {
            return Err(BfiError::UnparseableCell {
                row: i + 1,
                col: outcome.to_string(),
                reason: format!("logistic outcome must be 0 or 1, found {}", y[i]),
            });
        }
    }
    let centers = table.centers(spec)?;
    Dataset::from_covariates(spec, &rows, y, outcome, centers.as_deref())
}

pub fn read_design(path: &Path, spec: &ModelSpec) -> Result<Vec<Vec<f64>>> {
    read_design_from(std::fs::File::open(path)?, spec)
}

/// Design rows (intercept columns included) for prediction; the outcome
/// column is not needed and missing predictors are an error.
pub fn read_design_from<R: Read>(reader: R, spec: &ModelSpec) -> Result<Vec<Vec<f64>>> {
    let table = load(reader)?;
    let rows = table.covariate_rows(spec)?;
    let centers = table.centers(spec)?;
    rows.iter()
        .enumerate()
        .map(|(i, raw)| {
            if let Some(k) = raw.iter().position(|v| v.is_nan()) {
                return Err(BfiError::PredictorMissing {
                    predictor: spec.covariates[k].clone(),
                    row: i + 1,
                });
            }
            spec.design_row(raw, centers.as_ref().map(|c| c[i]))
        })
        .collect()
}

pub fn read_columns(path: &Path, names: &[String]) -> Result<Vec<Vec<f64>>> {
    read_columns_from(std::fs::File::open(path)?, names)
}

/// Raw numeric columns by name; missing cells are rejected.
pub fn read_columns_from<R: Read>(reader: R, names: &[String]) -> Result<Vec<Vec<f64>>> {
    let table = load(reader)?;
    names
        .iter()
        .map(|n| table.index(n).and_then(|j| table.numeric(j, false)))
        .collect()
}

pub fn read_grouped_csv(
    path: &Path,
    spec: &ModelSpec,
    outcome: &str,
    group_column: &str,
    order: Option<&[String]>,
) -> Result<Vec<Dataset>> {
    read_grouped_csv_from(std::fs::File::open(path)?, spec, outcome, group_column, order)
}

/// Splits the rows by the label in `group_column`, one dataset per label.
/// Labels follow `order` when given, otherwise their sorted order.
pub fn read_grouped_csv_from<R: Read>(
    reader: R,
    spec: &ModelSpec,
    outcome: &str,
    group_column: &str,
    order: Option<&[String]>,
) -> Result<Vec<Dataset>> {
    let mut text = String::new();
    let mut reader = reader;
    reader.read_to_string(&mut text)?;
    let table = load(text.as_bytes())?;
    let g = table.index(group_column)?;
    let labels: Vec<String> = table.records.iter().map(|r| r.get(g).unwrap_or("").to_string()).collect();
    let order: Vec<String> = match order {
        Some(o) => o.to_vec(),
        None => {
            let mut u = labels.clone();
            u.sort();
            u.dedup();
            u
        }
    };
    if let Some((i, l)) = labels.iter().enumerate().find(|(_, l)| !order.contains(l)) {
        return Err(BfiError::UnparseableCell {
            row: i + 1,
            col: group_column.to_string(),
            reason: format!("label {l:?} is not in the center order"),
        });
    }
    let all = read_csv_from(text.as_bytes(), spec, outcome)?;
    order
        .iter()
        .map(|label| {
            let idx: Vec<usize> = (0..labels.len()).filter(|&i| &labels[i] == label).collect();
            if idx.is_empty() {
                return Err(BfiError::InvalidInput(format!("center {label:?} has no rows")));
            }
            Ok(all.subset(&idx)?.with_center_id(label.clone()))
        })
        .collect()
}

/// Header names of a CSV file.
pub fn read_headers(path: &Path) -> Result<Vec<String>> {
    Ok(load(std::fs::File::open(path)?)?.headers)
}
