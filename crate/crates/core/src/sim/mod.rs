//! Simulation harness: repeated-split studies comparing BFI estimates and
//! predictions with those from the combined data.

pub mod config;
pub mod report;
pub mod study;
pub mod synthetic;

use std::path::Path;

pub use config::{holdout_count, DataSource, ExperimentConfig, LocalLambda, StudyMode};
pub use report::{ExperimentReport, PredictionPair};
pub use study::{fixed_plan, randomization_plan, run_heterogeneous_study, run_randomization_study, CyclePlan};
pub use synthetic::{generate_synthetic, SyntheticPopulation};

use crate::error::{BfiError, Result};
use crate::federation::{apply_standardization, pool_moments, read_grouped_csv, MomentSummary};
use crate::glm::{Dataset, Family, ModelSpec};

/// Model spec and per-center datasets named by `cfg.source`.
pub fn load_study_data(cfg: &ExperimentConfig) -> Result<(ModelSpec, Vec<Dataset>)> {
    match &cfg.source {
        DataSource::Synthetic { population, seed } => {
            if cfg.family != Family::Logistic {
                return Err(BfiError::InvalidInput("the synthetic population has a binary outcome".into()));
            }
            let pop = population.clone().unwrap_or_else(SyntheticPopulation::trauma);
            let parts = generate_synthetic(&pop, &[], seed.unwrap_or(cfg.rng_seed))?;
            Ok((SyntheticPopulation::spec(), parts))
        }
        DataSource::Csv {
            path,
            covariates,
            outcome,
            center_column,
            center_order,
        } => {
            let spec = ModelSpec::new(cfg.family, covariates.clone(), true)?;
            let parts = read_grouped_csv(Path::new(path), &spec, outcome, center_column, center_order.as_deref())?;
            Ok((spec, parts))
        }
    }
}

/// Standardizes every subset with moments pooled over all of them.
pub fn standardize_subsets(parts: &[Dataset], spec: &ModelSpec) -> Result<Vec<Dataset>> {
    let summaries = parts
        .iter()
        .map(|ds| MomentSummary::from_dataset(ds, &spec.covariates))
        .collect::<Result<Vec<_>>>()?;
    let rule = pool_moments(&summaries, &spec.covariates)?;
    parts.iter().map(|ds| apply_standardization(&rule, ds)).collect()
}

/// Runs the study selected by `cfg.mode` on the given subsets. Randomizing
/// modes pool the subsets into one source first.
pub fn run_study(parts: &[Dataset], spec: &ModelSpec, cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    let parts = if cfg.standardize {
        standardize_subsets(parts, spec)?
    } else {
        parts.to_vec()
    };
    if cfg.mode.randomizes() {
        let source = Dataset::concat(&parts)?;
        run_randomization_study(&source, spec, cfg)
    } else {
        run_heterogeneous_study(&parts, spec, cfg)
    }
}

/// Loads the configured data and runs the study.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    let (spec, parts) = load_study_data(cfg)?;
    run_study(&parts, &spec, cfg)
}
