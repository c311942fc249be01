//! Generalized linear model families, datasets and Gaussian priors.
//!
//! Two families are supported: logistic regression (logit link, binary
//! outcome) and linear regression with Gaussian noise of known variance.
//! Both expose the log-likelihood together with its exact gradient and
//! Hessian in the regression coefficients.

use serde::{Deserialize, Serialize};

use crate::error::{BfiError, Result};
use crate::linalg::{chol_factor, dot, RectMatrix, SymMatrix};

/// Name of the shared intercept column.
pub const INTERCEPT: &str = "(intercept)";

/// Name of the intercept indicator column for center `k` (1-based).
pub fn center_intercept_name(k: usize) -> String {
    format!("(intercept)[{k}]")
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Logistic,
    LinearGaussian { noise_variance: f64 },
}

impl Family {
    pub fn linear_gaussian(noise_variance: f64) -> Self {
        Family::LinearGaussian { noise_variance }
    }
}

/// One inference problem: outcome family plus the ordered covariate schema.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub family: Family,
    pub covariates: Vec<String>,
    pub has_intercept: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub center_specific_intercepts: Option<usize>,
}

impl ModelSpec {
    pub fn new(family: Family, covariates: Vec<String>, has_intercept: bool) -> Result<Self> {
        let spec = ModelSpec {
            family,
            covariates,
            has_intercept,
            center_specific_intercepts: None,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn logistic<S: Into<String>>(covariates: impl IntoIterator<Item = S>) -> Result<Self> {
        Self::new(
            Family::Logistic,
            covariates.into_iter().map(Into::into).collect(),
            true,
        )
    }

    /// Replaces the shared intercept by `centers` indicator columns.
    pub fn with_center_intercepts(mut self, centers: usize) -> Result<Self> {
        self.has_intercept = false;
        self.center_specific_intercepts = Some(centers);
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if self.covariates.is_empty() {
            return Err(BfiError::InvalidInput("covariate list is empty".into()));
        }
        for (i, name) in self.covariates.iter().enumerate() {
            if name.is_empty() {
                return Err(BfiError::InvalidInput("empty covariate name".into()));
            }
            if self.covariates[..i].contains(name) {
                return Err(BfiError::InvalidInput(format!("duplicate covariate {name:?}")));
            }
        }
        if let Some(l) = self.center_specific_intercepts {
            if self.has_intercept {
                return Err(BfiError::InvalidInput(
                    "has_intercept and center_specific_intercepts are mutually exclusive".into(),
                ));
            }
            if l == 0 {
                return Err(BfiError::InvalidInput("center_specific_intercepts must be at least 1".into()));
            }
        }
        if let Family::LinearGaussian { noise_variance } = self.family {
            if !(noise_variance > 0.0) || !noise_variance.is_finite() {
                return Err(BfiError::InvalidInput(format!(
                    "noise variance must be positive, got {noise_variance}"
                )));
            }
        }
        Ok(())
    }

    /// Number of leading constant/indicator columns.
    pub fn intercept_columns(&self) -> usize {
        match (self.has_intercept, self.center_specific_intercepts) {
            (_, Some(l)) => l,
            (true, None) => 1,
            (false, None) => 0,
        }
    }

    /// Number of regression coefficients.
    pub fn dim(&self) -> usize {
        self.intercept_columns() + self.covariates.len()
    }

    /// Names of the design columns, intercept column(s) first.
    pub fn column_names(&self) -> Vec<String> {
        let mut names = Vec::with_capacity(self.dim());
        match (self.has_intercept, self.center_specific_intercepts) {
            (_, Some(l)) => names.extend((1..=l).map(center_intercept_name)),
            (true, None) => names.push(INTERCEPT.to_string()),
            (false, None) => {}
        }
        names.extend(self.covariates.iter().cloned());
        names
    }

    /// Design row for raw covariate values; `center` is the 0-based center
    /// index and is only consulted for center-specific intercepts.
    pub fn design_row(&self, covariates: &[f64], center: Option<usize>) -> Result<Vec<f64>> {
        if covariates.len() != self.covariates.len() {
            return Err(BfiError::DimensionMismatch {
                expected: self.covariates.len(),
                found: covariates.len(),
            });
        }
        let mut row = Vec::with_capacity(self.dim());
        match (self.has_intercept, self.center_specific_intercepts) {
            (_, Some(l)) => {
                let c = center.ok_or_else(|| {
                    BfiError::InvalidInput("center index required for center-specific intercepts".into())
                })?;
                if c >= l {
                    return Err(BfiError::InvalidInput(format!("center index {c} out of range 0..{l}")));
                }
                row.extend((0..l).map(|k| if k == c { 1.0 } else { 0.0 }));
            }
            (true, None) => row.push(1.0),
            (false, None) => {}
        }
        row.extend_from_slice(covariates);
        Ok(row)
    }
}

/// Observations for one center (or the pooled set).
///
/// Missing covariate cells are stored as NaN and only permitted through
/// [`Dataset::with_missing`]; fitting rejects such datasets.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    column_names: Vec<String>,
    design: RectMatrix,
    outcome: Vec<f64>,
    outcome_name: String,
    center_id: Option<String>,
    has_missing: bool,
}

impl Dataset {
    pub fn new(
        column_names: Vec<String>,
        design: RectMatrix,
        outcome: Vec<f64>,
        outcome_name: impl Into<String>,
    ) -> Result<Self> {
        let ds = Self::with_missing(column_names, design, outcome, outcome_name)?;
        if ds.has_missing {
            return Err(BfiError::MissingValues);
        }
        Ok(ds)
    }

    /// Like [`Dataset::new`] but tolerates NaN covariate cells.
    pub fn with_missing(
        column_names: Vec<String>,
        design: RectMatrix,
        outcome: Vec<f64>,
        outcome_name: impl Into<String>,
    ) -> Result<Self> {
        if column_names.len() != design.cols() {
            return Err(BfiError::DimensionMismatch {
                expected: design.cols(),
                found: column_names.len(),
            });
        }
        if outcome.len() != design.rows() {
            return Err(BfiError::DimensionMismatch {
                expected: design.rows(),
                found: outcome.len(),
            });
        }
        if outcome.iter().any(|y| !y.is_finite()) {
            return Err(BfiError::InvalidInput("outcome contains non-finite values".into()));
        }
        if design.as_slice().iter().any(|v| v.is_infinite()) {
            return Err(BfiError::InvalidInput("design contains infinite values".into()));
        }
        let has_missing = design.as_slice().iter().any(|v| v.is_nan());
        Ok(Dataset {
            column_names,
            design,
            outcome,
            outcome_name: outcome_name.into(),
            center_id: None,
            has_missing,
        })
    }

    /// Builds the design from raw covariate rows according to `spec`.
    /// `centers` carries 0-based center indices when the model spec has
    /// center-specific intercepts.
    pub fn from_covariates(
        spec: &ModelSpec,
        covariate_rows: &[Vec<f64>],
        outcome: Vec<f64>,
        outcome_name: impl Into<String>,
        centers: Option<&[usize]>,
    ) -> Result<Self> {
        if covariate_rows.is_empty() {
            return Err(BfiError::EmptyFile);
        }
        let d = spec.dim();
        let mut data = Vec::with_capacity(covariate_rows.len() * d);
        for (i, raw) in covariate_rows.iter().enumerate() {
            let c = centers.map(|cs| cs[i]);
            data.extend(spec.design_row(raw, c)?);
        }
        let design = RectMatrix::new(covariate_rows.len(), d, data)?;
        let ds = Self::with_missing(spec.column_names(), design, outcome, outcome_name)?;
        ds.check_outcome(spec)?;
        Ok(ds)
    }

    pub fn with_center_id(mut self, id: impl Into<String>) -> Self {
        self.center_id = Some(id.into());
        self
    }

    pub fn n(&self) -> usize {
        self.design.rows()
    }

    pub fn dim(&self) -> usize {
        self.design.cols()
    }

    pub fn design(&self) -> &RectMatrix {
        &self.design
    }

    pub fn outcome(&self) -> &[f64] {
        &self.outcome
    }

    pub fn outcome_name(&self) -> &str {
        &self.outcome_name
    }

    pub fn column_names(&self) -> &[String] {
        &self.column_names
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.column_names.iter().position(|c| c == name)
    }

    pub fn center_id(&self) -> Option<&str> {
        self.center_id.as_deref()
    }

    pub fn has_missing(&self) -> bool {
        self.has_missing
    }

    pub fn row(&self, i: usize) -> &[f64] {
        self.design.row(i)
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.n()).map(|i| self.design.get(i, j)).collect()
    }

    /// Rows selected by `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> Result<Dataset> {
        if indices.is_empty() {
            return Err(BfiError::InvalidInput("subset must contain at least one row".into()));
        }
        let design = self.design.select_rows(indices);
        let outcome = indices.iter().map(|&i| self.outcome[i]).collect();
        let mut ds = Self::with_missing(self.column_names.clone(), design, outcome, self.outcome_name.clone())?;
        ds.center_id = self.center_id.clone();
        Ok(ds)
    }

    /// Concatenates datasets with identical columns.
    pub fn concat(parts: &[Dataset]) -> Result<Dataset> {
        let first = parts.first().ok_or_else(|| BfiError::InvalidInput("nothing to concatenate".into()))?;
        let mut rows = Vec::new();
        let mut outcome = Vec::new();
        for p in parts {
            if p.column_names != first.column_names {
                return Err(BfiError::SchemaMismatch("datasets have different columns".into()));
            }
            rows.extend_from_slice(p.design.as_slice());
            outcome.extend_from_slice(&p.outcome);
        }
        let design = RectMatrix::new(outcome.len(), first.dim(), rows)?;
        Self::with_missing(first.column_names.clone(), design, outcome, first.outcome_name.clone())
    }

    /// Stacks per-center datasets that share a leading `(intercept)` column
    /// into one dataset with one intercept indicator per center.
    pub fn stack_with_center_intercepts(parts: &[Dataset]) -> Result<Dataset> {
        let first = parts.first().ok_or_else(|| BfiError::InvalidInput("nothing to stack".into()))?;
        if first.column_names.first().map(String::as_str) != Some(INTERCEPT) {
            return Err(BfiError::SchemaMismatch("datasets need a leading intercept column".into()));
        }
        let l = parts.len();
        let tail = &first.column_names[1..];
        let mut names: Vec<String> = (1..=l).map(center_intercept_name).collect();
        names.extend(tail.iter().cloned());
        let width = names.len();
        let mut data = Vec::new();
        let mut outcome = Vec::new();
        for (c, p) in parts.iter().enumerate() {
            if p.column_names != first.column_names {
                return Err(BfiError::SchemaMismatch("datasets have different columns".into()));
            }
            for i in 0..p.n() {
                data.extend((0..l).map(|k| if k == c { 1.0 } else { 0.0 }));
                data.extend_from_slice(&p.row(i)[1..]);
            }
            outcome.extend_from_slice(&p.outcome);
        }
        let design = RectMatrix::new(outcome.len(), width, data)?;
        Self::with_missing(names, design, outcome, first.outcome_name.clone())
    }

    /// Checks the outcome domain and column layout against `spec`.
    pub fn check_against(&self, spec: &ModelSpec) -> Result<()> {
        if self.column_names != spec.column_names() {
            return Err(BfiError::SchemaMismatch(format!(
                "dataset columns {:?} do not match model columns {:?}",
                self.column_names,
                spec.column_names()
            )));
        }
        self.check_outcome(spec)
    }

    fn check_outcome(&self, spec: &ModelSpec) -> Result<()> {
        if spec.family == Family::Logistic {
            if let Some(i) = self.outcome.iter().position(|&y| y != 0.0 && y != 1.0) {
                return Err(BfiError::InvalidInput(format!(
                    "logistic outcome must be 0 or 1, row {i} has {}",
                    self.outcome[i]
                )));
            }
        }
        Ok(())
    }

    pub(crate) fn design_mut(&mut self) -> &mut RectMatrix {
        &mut self.design
    }

    pub(crate) fn refresh_missing_flag(&mut self) {
        self.has_missing = self.design.as_slice().iter().any(|v| v.is_nan());
    }
}

/// Zero-mean Gaussian prior given by its precision matrix Λ.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianPrior {
    precision: SymMatrix,
}

impl GaussianPrior {
    /// Accepts any positive semi-definite precision; Λ = 0 is a flat prior.
    pub fn new(precision: SymMatrix) -> Result<Self> {
        if !is_positive_semidefinite(&precision) {
            return Err(BfiError::InvalidInput("prior precision must be positive semi-definite".into()));
        }
        Ok(GaussianPrior { precision })
    }

    /// Λ = λ·I.
    pub fn ridge(dim: usize, lambda: f64) -> Result<Self> {
        if !(lambda >= 0.0) || !lambda.is_finite() {
            return Err(BfiError::InvalidInput(format!("lambda must be non-negative, got {lambda}")));
        }
        Ok(GaussianPrior {
            precision: SymMatrix::scaled_identity(dim, lambda),
        })
    }

    pub fn flat(dim: usize) -> Self {
        GaussianPrior {
            precision: SymMatrix::zeros(dim),
        }
    }

    pub fn from_diagonal(diag: &[f64]) -> Result<Self> {
        Self::new(SymMatrix::from_diagonal(diag))
    }

    pub fn precision(&self) -> &SymMatrix {
        &self.precision
    }

    pub fn dim(&self) -> usize {
        self.precision.dim()
    }

    pub fn into_precision(self) -> SymMatrix {
        self.precision
    }
}

/// Semi-definiteness test: diagonal matrices are checked entrywise, others
/// by factoring with a tiny relative jitter.
pub(crate) fn is_positive_semidefinite(m: &SymMatrix) -> bool {
    if m.is_diagonal() {
        return m.diagonal().iter().all(|&v| v >= 0.0);
    }
    let jitter = 1e-12 * (1.0 + m.max_abs());
    let shifted = m
        .add(&SymMatrix::scaled_identity(m.dim(), jitter))
        .expect("same dimension");
    chol_factor(&shifted).is_ok()
}

/// Logistic function, stable for large |z|.
#[inline]
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + e^z)` without overflow.
#[inline]
pub fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

fn check_beta(data: &Dataset, beta: &[f64]) -> Result<()> {
    if beta.len() != data.dim() {
        return Err(BfiError::DimensionMismatch {
            expected: data.dim(),
            found: beta.len(),
        });
    }
    Ok(())
}

/// Σᵢ log p(yᵢ | xᵢ, β).
pub fn log_likelihood(spec: &ModelSpec, data: &Dataset, beta: &[f64]) -> Result<f64> {
    check_beta(data, beta)?;
    let y = data.outcome();
    let total = match spec.family {
        Family::Logistic => (0..data.n())
            .map(|i| {
                let z = dot(data.row(i), beta);
                y[i] * z - softplus(z)
            })
            .sum(),
        Family::LinearGaussian { noise_variance } => {
            let norm = -0.5 * (2.0 * std::f64::consts::PI * noise_variance).ln();
            (0..data.n())
                .map(|i| {
                    let r = y[i] - dot(data.row(i), beta);
                    norm - 0.5 * r * r / noise_variance
                })
                .sum()
        }
    };
    Ok(total)
}

/// Score vector ∂/∂β of the log-likelihood.
pub fn log_lik_gradient(spec: &ModelSpec, data: &Dataset, beta: &[f64]) -> Result<Vec<f64>> {
    check_beta(data, beta)?;
    let y = data.outcome();
    let mut grad = vec![0.0; beta.len()];
    for i in 0..data.n() {
        let x = data.row(i);
        let z = dot(x, beta);
        let resid = match spec.family {
            Family::Logistic => y[i] - sigmoid(z),
            Family::LinearGaussian { noise_variance } => (y[i] - z) / noise_variance,
        };
        for (g, &xj) in grad.iter_mut().zip(x) {
            *g += resid * xj;
        }
    }
    Ok(grad)
}

/// Hessian of the log-likelihood (negative semi-definite).
pub fn log_lik_hessian(spec: &ModelSpec, data: &Dataset, beta: &[f64]) -> Result<SymMatrix> {
    Ok(information_matrix(spec, data, beta)?.scale(-1.0))
}

/// Minus the Hessian, accumulated directly (the form the fitter needs).
pub(crate) fn information_matrix(spec: &ModelSpec, data: &Dataset, beta: &[f64]) -> Result<SymMatrix> {
    check_beta(data, beta)?;
    let mut info = SymMatrix::zeros(beta.len());
    for i in 0..data.n() {
        let x = data.row(i);
        let w = match spec.family {
            Family::Logistic => {
                let p = sigmoid(dot(x, beta));
                p * (1.0 - p)
            }
            Family::LinearGaussian { noise_variance } => 1.0 / noise_variance,
        };
        info.add_outer(x, w);
    }
    Ok(info)
}

/// P(Y = 1 | x, β) under the logistic model.
pub fn predict_probability(spec: &ModelSpec, beta: &[f64], x: &[f64]) -> Result<f64> {
    if spec.family != Family::Logistic {
        return Err(BfiError::InvalidInput("probability prediction requires the logistic family".into()));
    }
    if beta.len() != x.len() {
        return Err(BfiError::DimensionMismatch {
            expected: beta.len(),
            found: x.len(),
        });
    }
    Ok(sigmoid(dot(beta, x)))
}

/// E(Y | x, β): a probability for the logistic family, the linear
/// predictor for the Gaussian one.
pub fn predict_mean(family: Family, beta: &[f64], x: &[f64]) -> Result<f64> {
    if beta.len() != x.len() {
        return Err(BfiError::DimensionMismatch {
            expected: beta.len(),
            found: x.len(),
        });
    }
    let z = dot(beta, x);
    Ok(match family {
        Family::Logistic => sigmoid(z),
        Family::LinearGaussian { .. } => z,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn one_obs(x: Vec<f64>, y: f64) -> Dataset {
        let names: Vec<String> = (0..x.len()).map(|i| format!("x{i}")).collect();
        let design = RectMatrix::new(1, x.len(), x).unwrap();
        Dataset::new(names, design, vec![y], "y").unwrap()
    }

    fn raw_spec(family: Family, d: usize) -> ModelSpec {
        ModelSpec::new(family, (0..d).map(|i| format!("x{i}")).collect(), false).unwrap()
    }

    #[test]
    fn log_likelihood_examples() {
        let spec = raw_spec(Family::Logistic, 3);
        let ds = one_obs(vec![0.0, 0.0, 0.0], 1.0);
        let ll = log_likelihood(&spec, &ds, &[0.3, -7.0, 2.0]).unwrap();
        assert!((ll - 0.5f64.ln()).abs() < 1e-15);

        let spec = raw_spec(Family::Logistic, 1);
        let ds = one_obs(vec![1.0], 1.0);
        let ll = log_likelihood(&spec, &ds, &[2.0]).unwrap();
        let want = -(1.0 + (-2.0f64).exp()).ln();
        assert!((ll - want).abs() < 1e-15);
        assert!((ll + 0.126928).abs() < 1e-6);

        let spec = raw_spec(Family::linear_gaussian(1.0), 1);
        let ds = one_obs(vec![1.0], 0.0);
        let ll = log_likelihood(&spec, &ds, &[0.0]).unwrap();
        assert!((ll + 0.5 * (2.0 * std::f64::consts::PI).ln()).abs() < 1e-15);
    }

    #[test]
    fn gradient_examples() {
        let spec = raw_spec(Family::Logistic, 2);
        let ds = one_obs(vec![0.0, 0.0], 1.0);
        assert_eq!(log_lik_gradient(&spec, &ds, &[1.0, 2.0]).unwrap(), vec![0.0, 0.0]);

        let spec = raw_spec(Family::linear_gaussian(2.0), 2);
        let ds = one_obs(vec![1.0, 3.0], 7.0);
        assert_eq!(log_lik_gradient(&spec, &ds, &[1.0, 2.0]).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn hessian_examples() {
        let spec = raw_spec(Family::linear_gaussian(1.0), 2);
        let x = RectMatrix::from_rows(&[vec![1.0, 2.0], vec![0.5, -1.0], vec![3.0, 0.0]]).unwrap();
        let ds = Dataset::new(spec.column_names(), x, vec![0.0, 1.0, 2.0], "y").unwrap();
        let xtx = [[1.0 + 0.25 + 9.0, 2.0 - 0.5], [2.0 - 0.5, 4.0 + 1.0]];
        for beta in [[0.0, 0.0], [5.0, -3.0]] {
            let h = log_lik_hessian(&spec, &ds, &beta).unwrap();
            for i in 0..2 {
                for j in 0..2 {
                    assert!((h.get(i, j) + xtx[i][j]).abs() < 1e-14);
                }
            }
        }

        let spec = raw_spec(Family::Logistic, 1);
        let ds = one_obs(vec![1.0], 1.0);
        let h = log_lik_hessian(&spec, &ds, &[800.0]).unwrap();
        assert_eq!(h.get(0, 0), 0.0);
        let h = log_lik_hessian(&spec, &ds, &[-800.0]).unwrap();
        assert_eq!(h.get(0, 0), 0.0);
    }

    #[test]
    fn stable_at_extreme_predictors() {
        let spec = raw_spec(Family::Logistic, 1);
        for (y, z) in [(1.0, 500.0), (0.0, -500.0), (1.0, -500.0), (0.0, 500.0)] {
            let ds = one_obs(vec![1.0], y);
            let ll = log_likelihood(&spec, &ds, &[z]).unwrap();
            assert!(ll.is_finite(), "y={y} z={z}");
            let g = log_lik_gradient(&spec, &ds, &[z]).unwrap();
            assert!(g[0].is_finite());
        }
        assert!((softplus(-500.0)).abs() < 1e-200);
        assert_eq!(softplus(500.0), 500.0);
    }

    #[test]
    fn prediction_examples() {
        let spec = raw_spec(Family::Logistic, 2);
        assert_eq!(predict_probability(&spec, &[1.0, -1.0], &[1.0, 1.0]).unwrap(), 0.5);
        let p = predict_probability(&spec, &[2.0, 0.0], &[1.0, 5.0]).unwrap();
        assert!((p - 0.880797).abs() < 1e-6);
        let q = predict_probability(&spec, &[-2.0, 0.0], &[1.0, 5.0]).unwrap();
        assert!((q - 0.119203).abs() < 1e-6);
        assert!((p + q - 1.0).abs() < 1e-15);
        let gauss = raw_spec(Family::linear_gaussian(1.0), 2);
        assert!(predict_probability(&gauss, &[0.0, 0.0], &[1.0, 1.0]).is_err());
    }

    #[test]
    fn spec_validation() {
        assert!(ModelSpec::new(Family::Logistic, vec![], true).is_err());
        assert!(ModelSpec::new(Family::Logistic, vec!["a".into(), "a".into()], true).is_err());
        let mut s = ModelSpec::logistic(["age", "sex"]).unwrap();
        s.center_specific_intercepts = Some(3);
        assert!(s.validate().is_err());
        let s = ModelSpec::logistic(["age", "sex"]).unwrap().with_center_intercepts(3).unwrap();
        assert_eq!(s.dim(), 5);
        assert_eq!(s.column_names()[0], "(intercept)[1]");
        assert_eq!(s.design_row(&[30.0, 1.0], Some(1)).unwrap(), vec![0.0, 1.0, 0.0, 30.0, 1.0]);
        assert!(ModelSpec::new(Family::linear_gaussian(0.0), vec!["a".into()], true).is_err());
    }

    #[test]
    fn logistic_outcome_domain_is_enforced() {
        let spec = ModelSpec::logistic(["a"]).unwrap();
        let err = Dataset::from_covariates(&spec, &[vec![1.0]], vec![2.0], "y", None);
        assert!(err.is_err());
    }

    #[test]
    fn prior_semidefiniteness() {
        assert!(GaussianPrior::ridge(3, 0.0).is_ok());
        assert!(GaussianPrior::ridge(3, -1.0).is_err());
        assert!(GaussianPrior::new(SymMatrix::new(2, vec![1.0, 2.0, 2.0, 1.0]).unwrap()).is_err());
        assert!(GaussianPrior::new(SymMatrix::new(2, vec![1.0, 1.0, 1.0, 1.0]).unwrap()).is_ok());
    }

    // ---- finite-difference oracle -------------------------------------

    const H: f64 = 1e-5;

    fn fd_gradient(spec: &ModelSpec, ds: &Dataset, beta: &[f64]) -> Vec<f64> {
        (0..beta.len())
            .map(|k| {
                let mut up = beta.to_vec();
                let mut dn = beta.to_vec();
                up[k] += H;
                dn[k] -= H;
                (log_likelihood(spec, ds, &up).unwrap() - log_likelihood(spec, ds, &dn).unwrap()) / (2.0 * H)
            })
            .collect()
    }

    fn fd_hessian(spec: &ModelSpec, ds: &Dataset, beta: &[f64]) -> Vec<Vec<f64>> {
        (0..beta.len())
            .map(|k| {
                let mut up = beta.to_vec();
                let mut dn = beta.to_vec();
                up[k] += H;
                dn[k] -= H;
                let gu = log_lik_gradient(spec, ds, &up).unwrap();
                let gd = log_lik_gradient(spec, ds, &dn).unwrap();
                gu.iter().zip(&gd).map(|(a, b)| (a - b) / (2.0 * H)).collect()
            })
            .collect()
    }

    fn rel_err(a: f64, b: f64) -> f64 {
        (a - b).abs() / a.abs().max(b.abs()).max(1.0)
    }

    fn instance() -> impl Strategy<Value = (bool, Vec<Vec<f64>>, Vec<f64>, Vec<f64>)> {
        (1usize..=6, 1usize..=40, any::<bool>()).prop_flat_map(|(d, n, logistic)| {
            (
                Just(logistic),
                proptest::collection::vec(proptest::collection::vec(-2.0f64..2.0, d), n),
                proptest::collection::vec(0.0f64..1.0, n),
                proptest::collection::vec(-1.5f64..1.5, d),
            )
        })
    }

    fn build(logistic: bool, rows: &[Vec<f64>], u: &[f64]) -> (ModelSpec, Dataset) {
        let d = rows[0].len();
        let family = if logistic { Family::Logistic } else { Family::linear_gaussian(0.7) };
        let spec = raw_spec(family, d);
        let y: Vec<f64> = u
            .iter()
            .map(|&v| if logistic { (v < 0.4) as u8 as f64 } else { 4.0 * v - 2.0 })
            .collect();
        let ds = Dataset::from_covariates(&spec, rows, y, "y", None).unwrap();
        (spec, ds)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]

        #[test]
        fn derivatives_match_finite_differences((logistic, rows, u, beta) in instance()) {
            let (spec, ds) = build(logistic, &rows, &u);
            let g = log_lik_gradient(&spec, &ds, &beta).unwrap();
            for (a, b) in g.iter().zip(fd_gradient(&spec, &ds, &beta)) {
                prop_assert!(rel_err(*a, b) <= 1e-5, "grad {} vs {}", a, b);
            }
            let h = log_lik_hessian(&spec, &ds, &beta).unwrap();
            let fd = fd_hessian(&spec, &ds, &beta);
            for i in 0..beta.len() {
                for j in 0..beta.len() {
                    prop_assert!(rel_err(h.get(i, j), fd[i][j]) <= 1e-5);
                }
            }
        }

        #[test]
        fn logistic_hessian_is_negative_semidefinite((_l, rows, u, beta) in instance(), probe in proptest::collection::vec(-1.0f64..1.0, 6)) {
            let (spec, ds) = build(true, &rows, &u);
            let h = log_lik_hessian(&spec, &ds, &beta).unwrap();
            let v = &probe[..beta.len()];
            prop_assert!(crate::linalg::quad_form(&h, v).unwrap() <= 1e-12);
        }

        #[test]
        fn label_flip_symmetry((_l, rows, u, beta) in instance()) {
            let (spec, ds) = build(true, &rows, &u);
            let flipped_y: Vec<f64> = ds.outcome().iter().map(|y| 1.0 - y).collect();
            let flipped = Dataset::from_covariates(&spec, &rows, flipped_y, "y", None).unwrap();
            let neg: Vec<f64> = beta.iter().map(|b| -b).collect();
            let a = log_likelihood(&spec, &ds, &beta).unwrap();
            let b = log_likelihood(&spec, &flipped, &neg).unwrap();
            prop_assert!((a - b).abs() <= 1e-12 * (1.0 + a.abs()));
        }
    }
}
