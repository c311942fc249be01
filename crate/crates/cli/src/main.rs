use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use bfi_core::federation::{
    read_columns, read_csv, read_design, read_headers, read_payload, write_payload, AggregateModel, InferencePayload,
    MomentSummary, CENTER_COLUMN,
};
use bfi_core::sim::{run_experiment, ExperimentConfig};
use bfi_core::{
    aggregate, aggregate_nuisance, compatibility_check, credible_intervals, fit_map, BfiError, BlockSplit,
    BlockedFitResult, FitConfig, GaussianPrior, LocalFitResult, ModelSpec,
};

#[derive(Parser)]
#[command(name = "bfi", version, about = "One-shot Bayesian federated inference for GLMs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum NuisanceBlock {
    Intercept,
}

#[derive(Subcommand)]
enum Command {
    /// Fit the local MAP estimate and write an inference payload.
    LocalFit {
        csv: PathBuf,
        /// JSON model spec (family, covariates, has_intercept).
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        lambda: f64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "y")]
        outcome: String,
        /// Center label stored in the payload; defaults to the file stem.
        #[arg(long)]
        label: Option<String>,
        /// Also ship first and second moments of the covariates.
        #[arg(long)]
        with_moments: bool,
    },
    /// Combine payloads into one model.
    Aggregate {
        #[arg(required = true)]
        payloads: Vec<PathBuf>,
        #[arg(long)]
        lambda: f64,
        /// Let this block differ between centers.
        #[arg(long, value_enum)]
        nuisance_block: Option<NuisanceBlock>,
        #[arg(long)]
        out: PathBuf,
        /// Two-sided level of the printed credible intervals.
        #[arg(long, default_value_t = 0.05)]
        alpha: f64,
    },
    /// Predicted means for the rows of a CSV file.
    Predict {
        model: PathBuf,
        csv: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a randomization or heterogeneous-subset study.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Write prediction pairs as CSV.
        #[arg(long)]
        pairs: Option<PathBuf>,
    },
    /// Per-covariate count, sums and sums of squares.
    Moments {
        csv: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Comma-separated columns; defaults to every column except the
        /// outcome and the center column.
        #[arg(long, value_delimiter = ',')]
        covariates: Option<Vec<String>>,
        #[arg(long, default_value = "y")]
        outcome: String,
    },
    /// Leave-one-center-out compatibility intervals.
    CheckCompat {
        #[arg(required = true)]
        payloads: Vec<PathBuf>,
        #[arg(long)]
        alpha: f64,
        /// Combined prior precision; defaults to the first center's prior.
        #[arg(long)]
        lambda: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

enum Failure {
    Usage(String),
    Core(BfiError),
}

impl From<BfiError> for Failure {
    fn from(e: BfiError) -> Self {
        Failure::Core(e)
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Core(BfiError::Io(e))
    }
}

type CliResult<T> = Result<T, Failure>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Core(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_numerical() { 3 } else { 2 })
        }
    }
}

fn run(cmd: Command) -> CliResult<()> {
    match cmd {
        Command::LocalFit {
            csv,
            spec,
            lambda,
            out,
            outcome,
            label,
            with_moments,
        } => local_fit(&csv, &spec, lambda, &out, &outcome, label, with_moments),
        Command::Aggregate {
            payloads,
            lambda,
            nuisance_block,
            out,
            alpha,
        } => aggregate_cmd(&payloads, lambda, nuisance_block, &out, alpha),
        Command::Predict { model, csv, out } => predict(&model, &csv, &out),
        Command::Simulate { config, out, pairs } => simulate(&config, &out, pairs.as_deref()),
        Command::Moments {
            csv,
            out,
            covariates,
            outcome,
        } => moments(&csv, &out, covariates, &outcome),
        Command::CheckCompat {
            payloads,
            alpha,
            lambda,
            out,
        } => check_compat(&payloads, alpha, lambda, out.as_deref()),
    }
}

fn check_lambda(lambda: f64) -> CliResult<()> {
    if lambda >= 0.0 && lambda.is_finite() {
        Ok(())
    } else {
        Err(Failure::Usage(format!("--lambda must be a non-negative number, got {lambda}")))
    }
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> CliResult<T> {
    let bytes = fs::read(path)?;
    serde_json::from_slice(&bytes)
        .map_err(|e| BfiError::InvalidInput(format!("{}: {e}", path.display())).into())
}

fn write_bytes(path: &Path, bytes: &[u8]) -> CliResult<()> {
    fs::write(path, bytes)?;
    Ok(())
}

fn local_fit(
    csv: &Path,
    spec_path: &Path,
    lambda: f64,
    out: &Path,
    outcome: &str,
    label: Option<String>,
    with_moments: bool,
) -> CliResult<()> {
    check_lambda(lambda)?;
    let spec: ModelSpec = read_json(spec_path)?;
    spec.validate()?;
    let data = read_csv(csv, &spec, outcome)?;
    let fit = fit_map(&spec, &data, &GaussianPrior::ridge(spec.dim(), lambda)?, &FitConfig::default())?;
    if !fit.converged {
        return Err(BfiError::CenterNotConverged(0).into());
    }
    let label = label.unwrap_or_else(|| {
        csv.file_stem()
            .map_or_else(|| "center".into(), |s| s.to_string_lossy().into_owned())
    });
    let moments = if with_moments {
        Some(MomentSummary::from_dataset(&data, &spec.covariates)?)
    } else {
        None
    };
    let payload = InferencePayload::new(label, spec, fit, moments)?;
    write_payload(out, &payload)?;
    eprintln!(
        "{}: n = {}, {} iterations",
        payload.center_label, payload.local_fit.n_obs, payload.local_fit.iterations_used
    );
    Ok(())
}

fn load_payloads(paths: &[PathBuf]) -> CliResult<Vec<InferencePayload>> {
    let payloads = paths.iter().map(|p| read_payload(p)).collect::<Result<Vec<_>, _>>()?;
    let first = &payloads[0].model_spec;
    for (p, path) in payloads.iter().zip(paths).skip(1) {
        if p.model_spec != *first {
            return Err(BfiError::SchemaMismatch(format!(
                "{} has model spec {:?}, expected {:?}",
                path.display(),
                p.model_spec,
                first
            ))
            .into());
        }
    }
    Ok(payloads)
}

fn local_fits(payloads: &[InferencePayload]) -> Vec<LocalFitResult> {
    payloads.iter().map(|p| p.local_fit.clone()).collect()
}

fn aggregate_cmd(
    paths: &[PathBuf],
    lambda: f64,
    nuisance: Option<NuisanceBlock>,
    out: &Path,
    alpha: f64,
) -> CliResult<()> {
    check_lambda(lambda)?;
    let payloads = load_payloads(paths)?;
    let spec = payloads[0].model_spec.clone();
    let labels: Vec<String> = payloads.iter().map(|p| p.center_label.clone()).collect();
    let fits = local_fits(&payloads);
    let model = match nuisance {
        None => {
            let res = aggregate(&fits, &GaussianPrior::ridge(spec.dim(), lambda)?)?;
            let ci = credible_intervals(&res, alpha)?;
            print_estimates(&res.covariate_names, &res.theta_hat, &res.std_devs, Some(&ci));
            AggregateModel::from_bfi(spec, labels, &res)?
        }
        Some(NuisanceBlock::Intercept) => {
            if !spec.has_intercept || spec.center_specific_intercepts.is_some() {
                return Err(BfiError::InvalidInput("--nuisance-block intercept needs a shared intercept".into()).into());
            }
            let split = BlockSplit::intercept(spec.dim())?;
            let blocked = fits
                .into_iter()
                .map(|f| BlockedFitResult::from_local(f, split.clone()))
                .collect::<Result<Vec<_>, _>>()?;
            let n_obs = blocked.iter().map(|b| b.fit.n_obs).sum();
            let res = aggregate_nuisance(
                &blocked,
                &GaussianPrior::ridge(spec.dim() - 1, lambda)?,
                Some(&GaussianPrior::ridge(1, lambda)?),
            )?;
            let model = AggregateModel::from_nuisance(&spec, labels, &res, n_obs)?;
            print_estimates(&model.covariate_names, &model.theta_hat, &model.std_devs, None);
            model
        }
    };
    write_bytes(out, &model.encode()?)
}

fn print_estimates(names: &[String], theta: &[f64], sds: &[f64], ci: Option<&[(f64, f64)]>) {
    let width = names.iter().map(String::len).max().unwrap_or(0);
    for (k, name) in names.iter().enumerate() {
        match ci {
            Some(ci) => eprintln!(
                "{name:<width$}  {:>9.4}  ({:.4})  [{:.4}, {:.4}]",
                theta[k], sds[k], ci[k].0, ci[k].1
            ),
            None => eprintln!("{name:<width$}  {:>9.4}  ({:.4})", theta[k], sds[k]),
        }
    }
}

fn predict(model_path: &Path, csv: &Path, out: &Path) -> CliResult<()> {
    let model = AggregateModel::decode(&fs::read(model_path)?)?;
    let rows = read_design(csv, &model.model_spec)?;
    let preds = model.predict(&rows)?;
    let mut text = String::from("prediction\n");
    for p in preds {
        text.push_str(&format!("{p}\n"));
    }
    write_bytes(out, text.as_bytes())
}

fn simulate(config: &Path, out: &Path, pairs: Option<&Path>) -> CliResult<()> {
    let mut cfg: ExperimentConfig = read_json(config)?;
    if let Ok(seed) = std::env::var("BFI_SEED") {
        cfg.rng_seed = seed
            .trim()
            .parse()
            .map_err(|_| Failure::Usage(format!("BFI_SEED must be an unsigned integer, got {seed:?}")))?;
    }
    let report = run_experiment(&cfg)?;
    let mut json = report.to_json()?;
    json.push('\n');
    write_bytes(out, json.as_bytes())?;
    if let Some(path) = pairs {
        report.write_pairs_csv(fs::File::create(path)?)?;
    }
    eprintln!("mse_p = {:.4e}, r^2 = {:.4}", report.mse_p, report.r_squared);
    Ok(())
}

#[derive(serde::Serialize)]
struct MomentFragment {
    covariates: Vec<String>,
    moments: MomentSummary,
}

fn moments(csv: &Path, out: &Path, covariates: Option<Vec<String>>, outcome: &str) -> CliResult<()> {
    let names = match covariates {
        Some(c) => c,
        None => read_headers(csv)?
            .into_iter()
            .filter(|h| h != outcome && h != CENTER_COLUMN)
            .collect(),
    };
    if names.is_empty() {
        return Err(Failure::Usage("no covariate columns selected".into()));
    }
    let columns = read_columns(csv, &names)?;
    let frag = MomentFragment {
        covariates: names,
        moments: MomentSummary::from_columns(&columns)?,
    };
    let mut bytes = serde_json::to_vec_pretty(&frag).map_err(|e| BfiError::InvalidInput(e.to_string()))?;
    bytes.push(b'\n');
    write_bytes(out, &bytes)
}

fn check_compat(paths: &[PathBuf], alpha: f64, lambda: Option<f64>, out: Option<&Path>) -> CliResult<()> {
    let payloads = load_payloads(paths)?;
    let fits = local_fits(&payloads);
    let prior = match lambda {
        Some(l) => {
            check_lambda(l)?;
            GaussianPrior::ridge(fits[0].dim(), l)?
        }
        None => GaussianPrior::new(fits[0].prior_precision.clone())?,
    };
    let report = compatibility_check(&fits, &prior, alpha)?;
    let mut text = String::from("center,covariate,difference,lower,upper,contains_zero\n");
    for (p, row) in payloads.iter().zip(&report.intervals) {
        for (name, iv) in report.covariate_names.iter().zip(row) {
            text.push_str(&format!(
                "{},{},{},{},{},{}\n",
                p.center_label,
                name,
                iv.center,
                iv.lower(),
                iv.upper(),
                iv.contains_zero()
            ));
        }
    }
    match out {
        Some(path) => write_bytes(path, text.as_bytes())?,
        None => std::io::stdout().write_all(text.as_bytes())?,
    }
    for l in report.flagged_centers() {
        eprintln!("center {} may be incompatible with the others", payloads[l].center_label);
    }
    Ok(())
}
