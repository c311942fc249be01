//! Aggregated model file written by the coordinator and read for prediction.

use serde::{Deserialize, Serialize};

use crate::aggregate::{BfiResult, NuisanceBfiResult};
use crate::error::{BfiError, Result};
use crate::glm::{predict_mean, ModelSpec};

pub const MODEL_FORMAT_VERSION: &str = "bfi-model/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AggregateModel {
    pub format_version: String,
    /// Spec of the combined model. With center-specific intercepts the
    /// intercept columns come first, one per center in `center_labels` order.
    pub model_spec: ModelSpec,
    pub center_labels: Vec<String>,
    pub covariate_names: Vec<String>,
    pub theta_hat: Vec<f64>,
    pub std_devs: Vec<f64>,
    pub curvature: Vec<Vec<f64>>,
    pub n_obs: usize,
}

impl AggregateModel {
    pub fn from_bfi(spec: ModelSpec, center_labels: Vec<String>, res: &BfiResult) -> Result<Self> {
        let m = AggregateModel {
            format_version: MODEL_FORMAT_VERSION.into(),
            model_spec: spec,
            center_labels,
            covariate_names: res.covariate_names.clone(),
            theta_hat: res.theta_hat.clone(),
            std_devs: res.std_devs.clone(),
            curvature: res.curvature.to_rows(),
            n_obs: res.n_obs,
        };
        m.validate()?;
        Ok(m)
    }

    /// `spec` is the shared-intercept spec the centers fitted; the stored
    /// spec replaces its intercept by one per center.
    pub fn from_nuisance(
        spec: &ModelSpec,
        center_labels: Vec<String>,
        res: &NuisanceBfiResult,
        n_obs: usize,
    ) -> Result<Self> {
        let combined = spec.clone().with_center_intercepts(center_labels.len())?;
        let m = AggregateModel {
            format_version: MODEL_FORMAT_VERSION.into(),
            covariate_names: combined.column_names(),
            model_spec: combined,
            center_labels,
            theta_hat: res.full_theta(),
            std_devs: res.full_std_devs()?,
            curvature: res.full_curvature().to_rows(),
            n_obs,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        if self.format_version != MODEL_FORMAT_VERSION {
            return Err(BfiError::UnknownVersion(self.format_version.clone()));
        }
        self.model_spec.validate()?;
        let d = self.model_spec.dim();
        let lens = [
            self.theta_hat.len(),
            self.std_devs.len(),
            self.curvature.len(),
            self.covariate_names.len(),
        ];
        if lens.iter().any(|&n| n != d) || self.curvature.iter().any(|r| r.len() != d) {
            return Err(BfiError::DimensionInconsistency(format!(
                "model arrays do not all have dimension {d}"
            )));
        }
        if let Some(l) = self.model_spec.center_specific_intercepts {
            if l != self.center_labels.len() {
                return Err(BfiError::DimensionInconsistency(format!(
                    "{l} center intercepts but {} center labels",
                    self.center_labels.len()
                )));
            }
        }
        Ok(())
    }

    /// Predicted mean for each design row.
    pub fn predict(&self, rows: &[Vec<f64>]) -> Result<Vec<f64>> {
        rows.iter()
            .map(|x| predict_mean(self.model_spec.family, &self.theta_hat, x))
            .collect()
    }

    pub fn encode(&self) -> Result<Vec<u8>> {
        let mut out = serde_json::to_vec_pretty(self).map_err(|e| BfiError::InvalidInput(e.to_string()))?;
        out.push(b'\n');
        Ok(out)
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_slice(bytes);
        let m: AggregateModel = serde_path_to_error::deserialize(de).map_err(|e| BfiError::MalformedField {
            path: e.path().to_string(),
            reason: e.inner().to_string(),
        })?;
        m.validate()?;
        Ok(m)
    }
}
