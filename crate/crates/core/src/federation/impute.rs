//! Single regression imputation of a covariate that some centers do not
//! record, using a model fitted at the centers that do and combined by
//! [`aggregate`].

use crate::aggregate::{aggregate, BfiResult};
use crate::error::{BfiError, Result};
use crate::fit::{fit_map, FitConfig};
use crate::glm::{predict_mean, Dataset, Family, GaussianPrior, ModelSpec};

use super::moments::is_intercept_column;

/// Regression of the target covariate on the remaining covariates and the
/// outcome, aggregated across the observing centers.
#[derive(Debug, Clone, PartialEq)]
pub struct ImputationModel {
    pub target: String,
    pub spec: ModelSpec,
    pub fit: BfiResult,
}

/// Predictor names for imputing `target` in `data`: the other covariates in
/// column order, then the outcome.
pub fn imputation_predictors(data: &Dataset, target: &str) -> Result<Vec<String>> {
    if data.column_index(target).is_none() {
        return Err(BfiError::MissingColumn(target.to_string()));
    }
    let mut out: Vec<String> = data
        .column_names()
        .iter()
        .filter(|c| !is_intercept_column(c) && *c != target)
        .cloned()
        .collect();
    out.push(data.outcome_name().to_string());
    Ok(out)
}

/// Complete-case training data for the imputation regression, or `None`
/// when the target is never observed together with all predictors.
pub fn imputation_dataset(data: &Dataset, target: &str, family: Family) -> Result<Option<(ModelSpec, Dataset)>> {
    let predictors = imputation_predictors(data, target)?;
    let spec = ModelSpec::new(family, predictors.clone(), true)?;
    let t = data.column_index(target).expect("checked");
    let pred_idx: Vec<Option<usize>> = predictors.iter().map(|p| data.column_index(p)).collect();
    let mut rows = Vec::new();
    let mut y = Vec::new();
    for i in 0..data.n() {
        let row = data.row(i);
        let x: Vec<f64> = pred_idx
            .iter()
            .map(|j| j.map_or(data.outcome()[i], |j| row[j]))
            .collect();
        if row[t].is_nan() || x.iter().any(|v| v.is_nan()) {
            continue;
        }
        rows.push(x);
        y.push(row[t]);
    }
    if rows.is_empty() {
        return Ok(None);
    }
    let ds = Dataset::from_covariates(&spec, &rows, y, target, None)?;
    Ok(Some((spec, ds)))
}

/// Fits the imputation regression at every center that observes `target`
/// and aggregates the fits with the combined prior `λ_combined·I`.
pub fn fit_imputation_model(
    target: &str,
    centers: &[Dataset],
    family: Family,
    lambda_local: f64,
    lambda_combined: f64,
    cfg: &FitConfig,
) -> Result<ImputationModel> {
    let mut spec = None;
    let mut fits = Vec::new();
    for data in centers {
        if let Some((s, ds)) = imputation_dataset(data, target, family)? {
            let prior = GaussianPrior::ridge(s.dim(), lambda_local)?;
            fits.push(fit_map(&s, &ds, &prior, cfg)?);
            spec = Some(s);
        }
    }
    let spec = spec.ok_or_else(|| BfiError::InvalidInput(format!("no center observes {target:?}")))?;
    let fit = aggregate(&fits, &GaussianPrior::ridge(spec.dim(), lambda_combined)?)?;
    Ok(ImputationModel {
        target: target.to_string(),
        spec,
        fit,
    })
}

/// Replaces missing cells of `target` by the model's expected value.
pub fn impute_missing_covariate(target: &str, model: &ImputationModel, data: &Dataset) -> Result<Dataset> {
    let t = data
        .column_index(target)
        .ok_or_else(|| BfiError::MissingColumn(target.to_string()))?;
    if model.target != target {
        return Err(BfiError::ModelSchemaMismatch(format!(
            "model imputes {:?}, asked for {target:?}",
            model.target
        )));
    }
    let predictors = imputation_predictors(data, target)?;
    if model.spec.covariates != predictors || model.fit.covariate_names != model.spec.column_names() {
        return Err(BfiError::ModelSchemaMismatch(format!(
            "model predictors {:?}, dataset provides {:?}",
            model.spec.covariates, predictors
        )));
    }
    if (0..data.n()).all(|i| !data.row(i)[t].is_nan()) {
        return Ok(data.clone());
    }
    let pred_idx: Vec<Option<usize>> = predictors.iter().map(|p| data.column_index(p)).collect();
    let mut out = data.clone();
    for i in 0..data.n() {
        let row = data.row(i);
        if !row[t].is_nan() {
            continue;
        }
        let mut x = Vec::with_capacity(predictors.len());
        for (p, j) in predictors.iter().zip(&pred_idx) {
            let v = j.map_or(data.outcome()[i], |j| row[j]);
            if v.is_nan() {
                return Err(BfiError::PredictorMissing {
                    predictor: p.clone(),
                    row: i + 1,
                });
            }
            x.push(v);
        }
        let design = model.spec.design_row(&x, None)?;
        let value = predict_mean(model.spec.family, &model.fit.theta_hat, &design)?;
        out.design_mut().set(i, t, value);
    }
    out.refresh_missing_flag();
    Ok(out)
}
