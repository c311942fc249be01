//! Federated standardization from per-center first and second moments.

use serde::{Deserialize, Serialize};

use crate::error::{BfiError, Result};
use crate::glm::{Dataset, INTERCEPT};

/// Count, sums and sums of squares of each covariate at one center.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MomentSummary {
    pub n: usize,
    pub sums: Vec<f64>,
    pub sums_sq: Vec<f64>,
}

impl MomentSummary {
    /// Moments of the named columns of `data`.
    pub fn from_dataset(data: &Dataset, covariates: &[String]) -> Result<Self> {
        let idx = covariates
            .iter()
            .map(|c| data.column_index(c).ok_or_else(|| BfiError::MissingColumn(c.clone())))
            .collect::<Result<Vec<_>>>()?;
        let columns: Vec<Vec<f64>> = idx.iter().map(|&j| data.column(j)).collect();
        Self::from_columns(&columns)
    }

    /// Moments of raw columns; NaN cells are not allowed.
    pub fn from_columns(columns: &[Vec<f64>]) -> Result<Self> {
        let n = columns.first().map_or(0, Vec::len);
        if n == 0 {
            return Err(BfiError::EmptyFile);
        }
        let mut sums = Vec::with_capacity(columns.len());
        let mut sums_sq = Vec::with_capacity(columns.len());
        for col in columns {
            if col.len() != n {
                return Err(BfiError::DimensionMismatch {
                    expected: n,
                    found: col.len(),
                });
            }
            if col.iter().any(|v| !v.is_finite()) {
                return Err(BfiError::MissingValues);
            }
            sums.push(col.iter().sum());
            sums_sq.push(col.iter().map(|v| v * v).sum());
        }
        Ok(MomentSummary { n, sums, sums_sq })
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(BfiError::InvalidInput("moment summary with n = 0".into()));
        }
        if self.sums.len() != self.sums_sq.len() {
            return Err(BfiError::DimensionInconsistency("sums and sums_sq differ in length".into()));
        }
        let n = self.n as f64;
        for (k, (s, q)) in self.sums.iter().zip(&self.sums_sq).enumerate() {
            if !s.is_finite() || !q.is_finite() {
                return Err(BfiError::InvalidInput(format!("moment {k} is not finite")));
            }
            if *q < s * s / n - 1e-9 * q.abs().max(1.0) {
                return Err(BfiError::InvalidInput(format!(
                    "moment {k}: sum of squares below sum²/n"
                )));
            }
        }
        Ok(())
    }
}

/// Pooled mean and standard deviation for each covariate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StandardizationRule {
    pub covariates: Vec<String>,
    pub means: Vec<f64>,
    pub std_devs: Vec<f64>,
    /// Covariates left untouched by [`apply_standardization`].
    #[serde(default)]
    pub exempt: Vec<String>,
}

impl StandardizationRule {
    pub fn with_exempt(mut self, name: impl Into<String>) -> Self {
        self.exempt.push(name.into());
        self
    }
}

/// Combines per-center moments into pooled means and sample standard
/// deviations (divisor n − 1).
pub fn pool_moments(summaries: &[MomentSummary], covariates: &[String]) -> Result<StandardizationRule> {
    if summaries.is_empty() {
        return Err(BfiError::InvalidInput("no moment summaries".into()));
    }
    let k = covariates.len();
    let mut n = 0usize;
    let mut sums = vec![0.0; k];
    let mut sums_sq = vec![0.0; k];
    for s in summaries {
        s.validate()?;
        if s.sums.len() != k {
            return Err(BfiError::SchemaMismatch(format!(
                "moment summary has {} covariates, expected {k}",
                s.sums.len()
            )));
        }
        n += s.n;
        for j in 0..k {
            sums[j] += s.sums[j];
            sums_sq[j] += s.sums_sq[j];
        }
    }
    if n < 2 {
        return Err(BfiError::InvalidInput("at least two observations are needed".into()));
    }
    let nf = n as f64;
    let mut means = Vec::with_capacity(k);
    let mut sds = Vec::with_capacity(k);
    for j in 0..k {
        let mean = sums[j] / nf;
        let ss = sums_sq[j] - sums[j] * mean;
        if ss <= 1e-12 * sums_sq[j].abs() || ss <= 0.0 {
            return Err(BfiError::ZeroVariance(covariates[j].clone()));
        }
        means.push(mean);
        sds.push((ss / (nf - 1.0)).sqrt());
    }
    Ok(StandardizationRule {
        covariates: covariates.to_vec(),
        means,
        std_devs: sds,
        exempt: Vec::new(),
    })
}

pub(crate) fn is_intercept_column(name: &str) -> bool {
    name == INTERCEPT || name.starts_with("(intercept)[")
}

/// `(x − mean)/sd` on every non-intercept, non-exempt column. Missing
/// cells stay missing.
pub fn apply_standardization(rule: &StandardizationRule, data: &Dataset) -> Result<Dataset> {
    let cols: Vec<&String> = data.column_names().iter().filter(|c| !is_intercept_column(c)).collect();
    if cols.len() != rule.covariates.len() || cols.iter().zip(&rule.covariates).any(|(a, b)| *a != b) {
        return Err(BfiError::SchemaMismatch(format!(
            "standardization rule covers {:?}, dataset has {:?}",
            rule.covariates, cols
        )));
    }
    let mut out = data.clone();
    for (k, name) in rule.covariates.iter().enumerate() {
        if rule.exempt.contains(name) {
            continue;
        }
        let j = data.column_index(name).expect("checked above");
        let (m, s) = (rule.means[k], rule.std_devs[k]);
        let design = out.design_mut();
        for i in 0..data.n() {
            let v = design.get(i, j);
            design.set(i, j, (v - m) / s);
        }
    }
    Ok(out)
}
