use serde::{Deserialize, Serialize};

use crate::error::{BfiError, Result};
use crate::glm::Family;

use super::synthetic::SyntheticPopulation;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StudyMode {
    /// Patients are reshuffled over subsets of fixed sizes in every cycle.
    HomogeneousRandomize,
    /// Subsets kept as given; only the prediction holdout is random.
    HeterogeneousAsis,
    /// Same as `HomogeneousRandomize`, named for many small subsets.
    SmallSubsets,
    /// Subsets as given, with one intercept per subset.
    CenterIntercepts,
}

impl StudyMode {
    pub fn randomizes(self) -> bool {
        matches!(self, StudyMode::HomogeneousRandomize | StudyMode::SmallSubsets)
    }
}

/// Prior precision at the centers: one value for all, or one per center.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum LocalLambda {
    Scalar(f64),
    PerCenter(Vec<f64>),
}

impl LocalLambda {
    pub fn for_center(&self, l: usize) -> f64 {
        match self {
            LocalLambda::Scalar(v) => *v,
            LocalLambda::PerCenter(v) => v[l],
        }
    }
}

/// Where the study data come from when driven from a config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataSource {
    /// Synthetic trauma-like population; `seed` defaults to the study seed.
    Synthetic {
        #[serde(default)]
        population: Option<SyntheticPopulation>,
        #[serde(default)]
        seed: Option<u64>,
    },
    /// A CSV file with one row per patient and a column naming the subset.
    Csv {
        path: String,
        covariates: Vec<String>,
        outcome: String,
        center_column: String,
        /// Subset labels in the order they should be numbered; defaults to
        /// the sorted distinct labels.
        #[serde(default)]
        center_order: Option<Vec<String>>,
    },
}

impl Default for DataSource {
    fn default() -> Self {
        DataSource::Synthetic {
            population: None,
            seed: None,
        }
    }
}

fn default_cycles() -> usize {
    1000
}

fn default_holdout() -> f64 {
    0.10
}

fn default_true() -> bool {
    true
}

fn default_family() -> Family {
    Family::Logistic
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_cycles")]
    pub n_cycles: usize,
    /// Subset sizes for the randomizing modes; ignored otherwise.
    #[serde(default)]
    pub subset_sizes: Vec<usize>,
    pub lambda_local: LocalLambda,
    pub lambda_combined: f64,
    #[serde(default = "default_holdout")]
    pub holdout_fraction: f64,
    #[serde(default)]
    pub rng_seed: u64,
    pub mode: StudyMode,
    #[serde(default = "default_family")]
    pub family: Family,
    /// Standardize covariates with pooled moments before the study.
    #[serde(default = "default_true")]
    pub standardize: bool,
    #[serde(default)]
    pub source: DataSource,
}

impl ExperimentConfig {
    pub fn new(mode: StudyMode, lambda: f64) -> Self {
        ExperimentConfig {
            n_cycles: default_cycles(),
            subset_sizes: Vec::new(),
            lambda_local: LocalLambda::Scalar(lambda),
            lambda_combined: lambda,
            holdout_fraction: default_holdout(),
            rng_seed: 0,
            mode,
            family: Family::Logistic,
            standardize: true,
            source: DataSource::default(),
        }
    }

    /// Checks against the number of subsets `l` and the total sample size.
    pub fn validate(&self, l: usize, n_total: usize) -> Result<()> {
        if self.n_cycles == 0 {
            return Err(BfiError::InvalidInput("n_cycles must be at least 1".into()));
        }
        if !(self.holdout_fraction > 0.0 && self.holdout_fraction < 1.0) {
            return Err(BfiError::InvalidInput(format!(
                "holdout_fraction must lie in (0, 1), got {}",
                self.holdout_fraction
            )));
        }
        if !(self.lambda_combined >= 0.0) || !self.lambda_combined.is_finite() {
            return Err(BfiError::InvalidInput("lambda_combined must be non-negative".into()));
        }
        match &self.lambda_local {
            LocalLambda::Scalar(v) if !(*v >= 0.0) || !v.is_finite() => {
                return Err(BfiError::InvalidInput("lambda_local must be non-negative".into()));
            }
            LocalLambda::PerCenter(v) if v.len() != l => {
                return Err(BfiError::InvalidInput(format!(
                    "lambda_local lists {} values for {l} subsets",
                    v.len()
                )));
            }
            LocalLambda::PerCenter(v) if v.iter().any(|x| !(*x >= 0.0) || !x.is_finite()) => {
                return Err(BfiError::InvalidInput("lambda_local must be non-negative".into()));
            }
            _ => {}
        }
        if self.mode.randomizes() {
            if self.subset_sizes.is_empty() || self.subset_sizes.contains(&0) {
                return Err(BfiError::InvalidInput("subset_sizes must be non-empty and positive".into()));
            }
            let total: usize = self.subset_sizes.iter().sum();
            if total != n_total {
                return Err(BfiError::InvalidInput(format!(
                    "subset sizes sum to {total}, source has {n_total} rows"
                )));
            }
        }
        Ok(())
    }

    /// Number of subsets the study works with.
    pub fn subset_count(&self, given: usize) -> usize {
        if self.mode.randomizes() {
            self.subset_sizes.len()
        } else {
            given
        }
    }
}

/// Held-out rows per subset: ⌊n·fraction⌋, at least one.
pub fn holdout_count(n: usize, fraction: f64) -> usize {
    ((n as f64 * fraction).floor() as usize).max(1)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_minimal_config() {
        let cfg: ExperimentConfig = serde_json::from_str(
            r#"{"subset_sizes":[49,106,216],"lambda_local":0.1,"lambda_combined":0.1,"mode":"homogeneous-randomize","rng_seed":7}"#,
        )
        .unwrap();
        assert_eq!(cfg.n_cycles, 1000);
        assert_eq!(cfg.holdout_fraction, 0.1);
        assert!(cfg.standardize);
        assert_eq!(cfg.family, Family::Logistic);
        cfg.validate(3, 371).unwrap();
        assert!(cfg.validate(3, 370).is_err());

        let mixed: ExperimentConfig = serde_json::from_str(
            r#"{"lambda_local":[1,0.1,0.01],"lambda_combined":0.01,"mode":"heterogeneous-asis"}"#,
        )
        .unwrap();
        assert_eq!(mixed.lambda_local.for_center(2), 0.01);
        mixed.validate(3, 371).unwrap();
        assert!(mixed.validate(2, 371).is_err());
    }

    #[test]
    fn holdout_rule() {
        assert_eq!(holdout_count(49, 0.1), 4);
        assert_eq!(holdout_count(106, 0.1), 10);
        assert_eq!(holdout_count(216, 0.1), 21);
        assert_eq!(holdout_count(5, 0.1), 1);
    }
}
