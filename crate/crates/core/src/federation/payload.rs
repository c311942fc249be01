//! Versioned JSON payload a center sends to the aggregator.

use serde::{Deserialize, Serialize};

use super::moments::MomentSummary;
use crate::error::{BfiError, Result};
use crate::fit::LocalFitResult;
use crate::glm::ModelSpec;
use crate::linalg::SymMatrix;

pub const FORMAT_VERSION: &str = "bfi-payload/1";

/// Everything a center shares: the model schema, its local fit and
/// optionally first/second moments of its covariates. No row-level data.
#[derive(Debug, Clone, PartialEq)]
pub struct InferencePayload {
    pub format_version: String,
    pub center_label: String,
    pub model_spec: ModelSpec,
    pub local_fit: LocalFitResult,
    pub moments: Option<MomentSummary>,
}

impl InferencePayload {
    pub fn new(
        center_label: impl Into<String>,
        model_spec: ModelSpec,
        local_fit: LocalFitResult,
        moments: Option<MomentSummary>,
    ) -> Result<Self> {
        let p = InferencePayload {
            format_version: FORMAT_VERSION.to_string(),
            center_label: center_label.into(),
            model_spec,
            local_fit,
            moments,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.format_version != FORMAT_VERSION {
            return Err(BfiError::UnknownVersion(self.format_version.clone()));
        }
        self.model_spec.validate().map_err(|e| BfiError::MalformedField {
            path: "model_spec".into(),
            reason: e.to_string(),
        })?;
        let d = self.model_spec.dim();
        let fit = &self.local_fit;
        let dims = [
            ("fit.theta_hat", fit.theta_hat.len()),
            ("fit.curvature", fit.curvature.dim()),
            ("fit.prior_precision", fit.prior_precision.dim()),
        ];
        for (path, found) in dims {
            if found != d {
                return Err(BfiError::DimensionInconsistency(format!(
                    "{path} has dimension {found}, model has {d} parameters"
                )));
            }
        }
        if fit.covariate_names != self.model_spec.column_names() {
            return Err(BfiError::DimensionInconsistency(
                "fit column names differ from the model spec".into(),
            ));
        }
        if let Some(m) = &self.moments {
            if m.sums.len() != self.model_spec.covariates.len() || m.sums_sq.len() != m.sums.len() {
                return Err(BfiError::DimensionInconsistency(format!(
                    "moments cover {} covariates, model has {}",
                    m.sums.len(),
                    self.model_spec.covariates.len()
                )));
            }
        }
        Ok(())
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct WirePayload {
    format_version: String,
    center_label: String,
    model_spec: ModelSpec,
    fit: WireFit,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    moments: Option<MomentSummary>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct WireFit {
    theta_hat: Vec<f64>,
    curvature: Vec<Vec<f64>>,
    prior_precision: Vec<Vec<f64>>,
    n_obs: usize,
    converged: bool,
    iterations: usize,
    grad_norm: f64,
}

/// Pretty-printed UTF-8 JSON. Reals are written in shortest round-trip form.
pub fn encode_payload(p: &InferencePayload) -> Result<Vec<u8>> {
    p.validate()?;
    let fit = &p.local_fit;
    let wire = WirePayload {
        format_version: p.format_version.clone(),
        center_label: p.center_label.clone(),
        model_spec: p.model_spec.clone(),
        fit: WireFit {
            theta_hat: fit.theta_hat.clone(),
            curvature: fit.curvature.to_rows(),
            prior_precision: fit.prior_precision.to_rows(),
            n_obs: fit.n_obs,
            converged: fit.converged,
            iterations: fit.iterations_used,
            grad_norm: fit.final_gradient_norm,
        },
        moments: p.moments.clone(),
    };
    if !fit.final_gradient_norm.is_finite() || fit.theta_hat.iter().any(|v| !v.is_finite()) {
        return Err(BfiError::MalformedField {
            path: "fit".into(),
            reason: "non-finite value".into(),
        });
    }
    let mut out = serde_json::to_vec_pretty(&wire).map_err(|e| BfiError::MalformedField {
        path: String::new(),
        reason: e.to_string(),
    })?;
    out.push(b'\n');
    Ok(out)
}

pub fn decode_payload(bytes: &[u8]) -> Result<InferencePayload> {
    let value: serde_json::Value = serde_json::from_slice(bytes).map_err(|e| BfiError::MalformedField {
        path: String::new(),
        reason: e.to_string(),
    })?;
    match value.get("format_version") {
        Some(serde_json::Value::String(v)) if v == FORMAT_VERSION => {}
        Some(serde_json::Value::String(v)) => return Err(BfiError::UnknownVersion(v.clone())),
        _ => {
            return Err(BfiError::MalformedField {
                path: "format_version".into(),
                reason: "missing or not a string".into(),
            })
        }
    }
    let wire: WirePayload = serde_path_to_error::deserialize(value).map_err(|e| BfiError::MalformedField {
        path: e.path().to_string(),
        reason: e.inner().to_string(),
    })?;

    let d = wire.fit.theta_hat.len();
    let curvature = square(&wire.fit.curvature, d, "fit.curvature")?;
    let prior_precision = square(&wire.fit.prior_precision, d, "fit.prior_precision")?;
    let local_fit = LocalFitResult {
        theta_hat: wire.fit.theta_hat,
        curvature,
        prior_precision,
        n_obs: wire.fit.n_obs,
        covariate_names: wire.model_spec.column_names(),
        converged: wire.fit.converged,
        iterations_used: wire.fit.iterations,
        final_gradient_norm: wire.fit.grad_norm,
    };
    let p = InferencePayload {
        format_version: wire.format_version,
        center_label: wire.center_label,
        model_spec: wire.model_spec,
        local_fit,
        moments: wire.moments,
    };
    p.validate()?;
    if let Some(m) = &p.moments {
        m.validate().map_err(|e| BfiError::MalformedField {
            path: "moments".into(),
            reason: e.to_string(),
        })?;
    }
    Ok(p)
}

fn square(rows: &[Vec<f64>], d: usize, path: &str) -> Result<SymMatrix> {
    if rows.len() != d || rows.iter().any(|r| r.len() != d) {
        return Err(BfiError::DimensionInconsistency(format!(
            "{path} is not {d}×{d}, matching theta_hat"
        )));
    }
    SymMatrix::from_rows(rows).map_err(|e| BfiError::MalformedField {
        path: path.to_string(),
        reason: e.to_string(),
    })
}

pub fn write_payload(path: &std::path::Path, p: &InferencePayload) -> Result<()> {
    std::fs::write(path, encode_payload(p)?)?;
    Ok(())
}

pub fn read_payload(path: &std::path::Path) -> Result<InferencePayload> {
    decode_payload(&std::fs::read(path)?)
}
