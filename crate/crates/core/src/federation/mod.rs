//! Data crossing center boundaries: payload files, federated
//! standardization, CSV ingestion and covariate imputation.

pub mod csv_io;
pub mod impute;
pub mod model;
pub mod moments;
pub mod payload;

pub use csv_io::{read_columns, read_csv, read_csv_from, read_design, read_grouped_csv, read_headers, read_grouped_csv_from, CENTER_COLUMN};
pub use impute::{fit_imputation_model, impute_missing_covariate, imputation_dataset, ImputationModel};
pub use model::{AggregateModel, MODEL_FORMAT_VERSION};
pub use moments::{apply_standardization, pool_moments, MomentSummary, StandardizationRule};
pub use payload::{decode_payload, encode_payload, read_payload, write_payload, InferencePayload, FORMAT_VERSION};
