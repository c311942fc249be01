use std::io::Write;

use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use crate::error::{BfiError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PredictionPair {
    pub cycle: usize,
    /// 1-based subset index.
    pub center: usize,
    pub p_bfi: f64,
    pub p_combined: f64,
}

/// Outcome of a study. `bfi_estimate` and `bfi_std_devs` are averages over
/// cycles (a single value in non-randomizing modes).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub config: ExperimentConfig,
    pub seed: u64,
    pub covariate_names: Vec<String>,
    pub combined_estimate: Vec<f64>,
    pub combined_std_devs: Vec<f64>,
    pub bfi_estimate: Vec<f64>,
    pub bfi_std_devs: Vec<f64>,
    pub mse_beta: Vec<f64>,
    pub mse_a: Vec<f64>,
    pub mse_p: f64,
    pub r_squared: f64,
    pub holdout_per_cycle: usize,
    pub pairs: Vec<PredictionPair>,
}

impl ExperimentReport {
    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| BfiError::InvalidInput(e.to_string()))
    }

    /// `cycle,center,p_bfi,p_combined` rows.
    pub fn write_pairs_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["cycle", "center", "p_bfi", "p_combined"])
            .map_err(|e| BfiError::InvalidInput(e.to_string()))?;
        for p in &self.pairs {
            w.write_record([
                p.cycle.to_string(),
                p.center.to_string(),
                p.p_bfi.to_string(),
                p.p_combined.to_string(),
            ])
            .map_err(|e| BfiError::InvalidInput(e.to_string()))?;
        }
        w.flush()?;
        Ok(())
    }
}
