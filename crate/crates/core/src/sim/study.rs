//! Randomization and heterogeneous-subset studies comparing BFI with
//! regression on the combined data.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;

use super::config::{holdout_count, ExperimentConfig, StudyMode};
use super::report::{ExperimentReport, PredictionPair};
use crate::aggregate::{aggregate, aggregate_nuisance};
use crate::error::{BfiError, Result};
use crate::fit::{fit_map, fit_map_blocked, BlockSplit, FitConfig, LocalFitResult};
use crate::glm::{predict_mean, Dataset, GaussianPrior, ModelSpec};

/// Row indices used in one cycle. `subsets` index the source (randomizing
/// modes) or are the identity (fixed subsets); `train` and `holdout` index
/// into the corresponding subset.
#[derive(Debug, Clone, PartialEq)]
pub struct CyclePlan {
    pub subsets: Vec<Vec<usize>>,
    pub train: Vec<Vec<usize>>,
    pub holdout: Vec<Vec<usize>>,
}

fn cycle_rng(seed: u64, cycle: usize) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(cycle as u64);
    rng
}

fn split_holdout(rng: &mut ChaCha20Rng, n: usize, fraction: f64) -> (Vec<usize>, Vec<usize>) {
    let h = holdout_count(n, fraction).min(n.saturating_sub(1));
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(rng);
    let mut hold = idx[..h].to_vec();
    let mut train = idx[h..].to_vec();
    hold.sort_unstable();
    train.sort_unstable();
    (train, hold)
}

/// Partition for cycle `cycle`: a fresh random assignment of the `n` source
/// rows to subsets of the given sizes, then a random holdout per subset.
pub fn randomization_plan(n: usize, sizes: &[usize], fraction: f64, seed: u64, cycle: usize) -> CyclePlan {
    let mut rng = cycle_rng(seed, cycle);
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut rng);
    let mut subsets = Vec::with_capacity(sizes.len());
    let mut start = 0;
    for &s in sizes {
        subsets.push(perm[start..start + s].to_vec());
        start += s;
    }
    let (train, holdout) = sizes.iter().map(|&s| split_holdout(&mut rng, s, fraction)).unzip();
    CyclePlan {
        subsets,
        train,
        holdout,
    }
}

/// Partition for fixed subsets of the given sizes: only the holdout varies.
pub fn fixed_plan(sizes: &[usize], fraction: f64, seed: u64, cycle: usize) -> CyclePlan {
    let mut rng = cycle_rng(seed, cycle);
    let subsets = sizes.iter().map(|&s| (0..s).collect()).collect();
    let (train, holdout) = sizes.iter().map(|&s| split_holdout(&mut rng, s, fraction)).unzip();
    CyclePlan {
        subsets,
        train,
        holdout,
    }
}

/// Estimates and standard deviations for one route (BFI or combined).
#[derive(Debug, Clone, PartialEq)]
struct Estimate {
    theta: Vec<f64>,
    sds: Vec<f64>,
}

/// Predictor for held-out rows of center `l`.
trait Predictor {
    fn predict(&self, l: usize, row: &[f64]) -> Result<f64>;
}

struct Study<'a> {
    spec: &'a ModelSpec,
    cfg: &'a ExperimentConfig,
    fit_cfg: FitConfig,
}

fn require_converged(fit: LocalFitResult, center: Option<usize>) -> Result<LocalFitResult> {
    if fit.converged {
        Ok(fit)
    } else {
        Err(match center {
            Some(l) => BfiError::CenterNotConverged(l),
            None => BfiError::PooledNotConverged,
        })
    }
}

struct SharedModel {
    family: crate::glm::Family,
    theta: Vec<f64>,
}

impl Predictor for SharedModel {
    fn predict(&self, _l: usize, row: &[f64]) -> Result<f64> {
        predict_mean(self.family, &self.theta, row)
    }
}

/// Center-specific intercepts: `intercepts[l] + core · row[1..]`.
struct InterceptModel {
    family: crate::glm::Family,
    intercepts: Vec<f64>,
    core: Vec<f64>,
}

impl Predictor for InterceptModel {
    fn predict(&self, l: usize, row: &[f64]) -> Result<f64> {
        let mut theta = Vec::with_capacity(row.len());
        theta.push(self.intercepts[l]);
        theta.extend_from_slice(&self.core);
        predict_mean(self.family, &theta, row)
    }
}

impl Study<'_> {
    fn local_prior(&self, l: usize) -> Result<GaussianPrior> {
        GaussianPrior::ridge(self.spec.dim(), self.cfg.lambda_local.for_center(l))
    }

    fn combined_prior(&self, dim: usize) -> Result<GaussianPrior> {
        GaussianPrior::ridge(dim, self.cfg.lambda_combined)
    }

    fn bfi(&self, parts: &[Dataset]) -> Result<Estimate> {
        let fits = parts
            .iter()
            .enumerate()
            .map(|(l, ds)| require_converged(fit_map(self.spec, ds, &self.local_prior(l)?, &self.fit_cfg)?, Some(l)))
            .collect::<Result<Vec<_>>>()?;
        let res = aggregate(&fits, &self.combined_prior(self.spec.dim())?)?;
        Ok(Estimate {
            theta: res.theta_hat,
            sds: res.std_devs,
        })
    }

    fn pooled(&self, parts: &[Dataset]) -> Result<Estimate> {
        let all = Dataset::concat(parts)?;
        let fit = require_converged(
            fit_map(self.spec, &all, &self.combined_prior(self.spec.dim())?, &self.fit_cfg)?,
            None,
        )?;
        let sds = fit.std_devs()?;
        Ok(Estimate {
            theta: fit.theta_hat,
            sds,
        })
    }

    /// Stacked `[intercept_1 … intercept_L, core]` estimate.
    fn bfi_intercepts(&self, parts: &[Dataset]) -> Result<Estimate> {
        let split = BlockSplit::intercept(self.spec.dim())?;
        let da = self.spec.dim() - 1;
        let locals = parts
            .iter()
            .enumerate()
            .map(|(l, ds)| {
                let lam = self.cfg.lambda_local.for_center(l);
                let b = fit_map_blocked(
                    self.spec,
                    ds,
                    &GaussianPrior::ridge(da, lam)?,
                    Some(&GaussianPrior::ridge(1, lam)?),
                    &split,
                    &self.fit_cfg,
                )?;
                if !b.fit.converged {
                    return Err(BfiError::CenterNotConverged(l));
                }
                Ok(b)
            })
            .collect::<Result<Vec<_>>>()?;
        let res = aggregate_nuisance(&locals, &self.combined_prior(da)?, Some(&self.combined_prior(1)?))?;
        Ok(Estimate {
            theta: res.full_theta(),
            sds: res.full_std_devs()?,
        })
    }

    fn pooled_intercepts(&self, parts: &[Dataset]) -> Result<Estimate> {
        let spec = self.spec.clone().with_center_intercepts(parts.len())?;
        let all = Dataset::stack_with_center_intercepts(parts)?;
        let fit = require_converged(
            fit_map(&spec, &all, &self.combined_prior(spec.dim())?, &self.fit_cfg)?,
            None,
        )?;
        let sds = fit.std_devs()?;
        Ok(Estimate {
            theta: fit.theta_hat,
            sds,
        })
    }

    fn estimate_pair(&self, parts: &[Dataset]) -> Result<(Estimate, Estimate)> {
        if self.cfg.mode == StudyMode::CenterIntercepts {
            Ok((self.bfi_intercepts(parts)?, self.pooled_intercepts(parts)?))
        } else {
            Ok((self.bfi(parts)?, self.pooled(parts)?))
        }
    }

    fn predictor(&self, est: &Estimate, l_count: usize) -> Box<dyn Predictor + Send + Sync> {
        if self.cfg.mode == StudyMode::CenterIntercepts {
            Box::new(InterceptModel {
                family: self.spec.family,
                intercepts: est.theta[..l_count].to_vec(),
                core: est.theta[l_count..].to_vec(),
            })
        } else {
            Box::new(SharedModel {
                family: self.spec.family,
                theta: est.theta.clone(),
            })
        }
    }

    /// Fits both routes on the training rows and predicts the held-out rows.
    fn predictions(&self, parts: &[Dataset], plan: &CyclePlan, cycle: usize) -> Result<Vec<PredictionPair>> {
        let train = parts
            .iter()
            .zip(&plan.train)
            .map(|(ds, idx)| ds.subset(idx))
            .collect::<Result<Vec<_>>>()?;
        let (b, c) = self.estimate_pair(&train)?;
        let (pb, pc) = (self.predictor(&b, parts.len()), self.predictor(&c, parts.len()));
        let mut pairs = Vec::new();
        for (l, (ds, hold)) in parts.iter().zip(&plan.holdout).enumerate() {
            for &i in hold {
                pairs.push(PredictionPair {
                    cycle,
                    center: l + 1,
                    p_bfi: pb.predict(l, ds.row(i))?,
                    p_combined: pc.predict(l, ds.row(i))?,
                });
            }
        }
        Ok(pairs)
    }
}

struct CycleOutcome {
    estimate: Estimate,
    pairs: Vec<PredictionPair>,
}

fn summarize(
    cfg: &ExperimentConfig,
    names: Vec<String>,
    combined: Estimate,
    cycles: Vec<CycleOutcome>,
    holdout_per_cycle: usize,
) -> ExperimentReport {
    let d = combined.theta.len();
    let m = cycles.len() as f64;
    let mut mse_beta = vec![0.0; d];
    let mut mse_a = vec![0.0; d];
    let mut mean_theta = vec![0.0; d];
    let mut mean_sd = vec![0.0; d];
    for c in &cycles {
        for k in 0..d {
            mse_beta[k] += (c.estimate.theta[k] - combined.theta[k]).powi(2);
            mse_a[k] += (c.estimate.sds[k] - combined.sds[k]).powi(2);
            mean_theta[k] += c.estimate.theta[k];
            mean_sd[k] += c.estimate.sds[k];
        }
    }
    for v in mse_beta.iter_mut().chain(&mut mse_a).chain(&mut mean_theta).chain(&mut mean_sd) {
        *v /= m;
    }
    let pairs: Vec<PredictionPair> = cycles.into_iter().flat_map(|c| c.pairs).collect();
    let sq: f64 = pairs.iter().map(|p| (p.p_bfi - p.p_combined).powi(2)).sum();
    let mse_p = sq / (holdout_per_cycle as f64 * m);
    ExperimentReport {
        config: cfg.clone(),
        seed: cfg.rng_seed,
        covariate_names: names,
        combined_estimate: combined.theta,
        combined_std_devs: combined.sds,
        bfi_estimate: mean_theta,
        bfi_std_devs: mean_sd,
        mse_beta,
        mse_a,
        mse_p,
        r_squared: r_squared(&pairs),
        holdout_per_cycle,
        pairs,
    }
}

/// Squared Pearson correlation between BFI and combined predictions.
pub fn r_squared(pairs: &[PredictionPair]) -> f64 {
    let n = pairs.len() as f64;
    if pairs.len() < 2 {
        return f64::NAN;
    }
    let mx = pairs.iter().map(|p| p.p_combined).sum::<f64>() / n;
    let my = pairs.iter().map(|p| p.p_bfi).sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for p in pairs {
        let (dx, dy) = (p.p_combined - mx, p.p_bfi - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    sxy * sxy / (sxx * syy)
}

/// Homogeneous study: every cycle reshuffles the source over subsets of
/// `cfg.subset_sizes`. Parameter agreement is measured on the full subsets
/// against the fixed combined-data fit; prediction agreement on held-out
/// rows with both routes refitted on the remaining rows.
pub fn run_randomization_study(source: &Dataset, spec: &ModelSpec, cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    if !cfg.mode.randomizes() {
        return Err(BfiError::InvalidInput(format!("{:?} is not a randomization mode", cfg.mode)));
    }
    source.check_against(spec)?;
    if source.has_missing() {
        return Err(BfiError::MissingValues);
    }
    cfg.validate(cfg.subset_sizes.len(), source.n())?;
    let study = Study {
        spec,
        cfg,
        fit_cfg: FitConfig::default(),
    };
    let combined = study.pooled(std::slice::from_ref(source))?;
    let holdout_per_cycle = cfg
        .subset_sizes
        .iter()
        .map(|&s| holdout_count(s, cfg.holdout_fraction).min(s - 1))
        .sum();

    let cycles = (0..cfg.n_cycles)
        .into_par_iter()
        .map(|m| {
            let plan = randomization_plan(source.n(), &cfg.subset_sizes, cfg.holdout_fraction, cfg.rng_seed, m);
            let run = || -> Result<CycleOutcome> {
                let parts = plan
                    .subsets
                    .iter()
                    .map(|idx| source.subset(idx))
                    .collect::<Result<Vec<_>>>()?;
                let estimate = study.bfi(&parts)?;
                let pairs = study.predictions(&parts, &plan, m)?;
                Ok(CycleOutcome { estimate, pairs })
            };
            run().map_err(|e| e.in_cycle(m))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(summarize(cfg, spec.column_names(), combined, cycles, holdout_per_cycle))
}

/// Subsets kept as given. Parameters are compared once; predictions over
/// `n_cycles` random holdouts. In center-intercepts mode each subset gets
/// its own intercept on both routes.
pub fn run_heterogeneous_study(subsets: &[Dataset], spec: &ModelSpec, cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    if cfg.mode.randomizes() {
        return Err(BfiError::InvalidInput(format!("{:?} is a randomization mode", cfg.mode)));
    }
    if subsets.is_empty() {
        return Err(BfiError::InvalidInput("no subsets".into()));
    }
    for ds in subsets {
        ds.check_against(spec)?;
        if ds.has_missing() {
            return Err(BfiError::MissingValues);
        }
    }
    if cfg.mode == StudyMode::CenterIntercepts && !spec.has_intercept {
        return Err(BfiError::InvalidInput("center-intercepts mode needs a model with an intercept".into()));
    }
    let n_total = subsets.iter().map(Dataset::n).sum();
    cfg.validate(subsets.len(), n_total)?;
    let study = Study {
        spec,
        cfg,
        fit_cfg: FitConfig::default(),
    };
    let (bfi, combined) = study.estimate_pair(subsets)?;
    let names = if cfg.mode == StudyMode::CenterIntercepts {
        spec.clone().with_center_intercepts(subsets.len())?.column_names()
    } else {
        spec.column_names()
    };
    let sizes: Vec<usize> = subsets.iter().map(Dataset::n).collect();
    if sizes.contains(&1) {
        return Err(BfiError::InvalidInput("every subset needs at least two rows".into()));
    }
    let holdout_per_cycle = sizes
        .iter()
        .map(|&s| holdout_count(s, cfg.holdout_fraction).min(s - 1))
        .sum();
    let pair_sets = (0..cfg.n_cycles)
        .into_par_iter()
        .map(|m| {
            let plan = fixed_plan(&sizes, cfg.holdout_fraction, cfg.rng_seed, m);
            study.predictions(subsets, &plan, m).map_err(|e| e.in_cycle(m))
        })
        .collect::<Result<Vec<_>>>()?;
    // the parameter comparison does not depend on the cycle
    let cycles = pair_sets
        .into_iter()
        .map(|pairs| CycleOutcome {
            estimate: bfi.clone(),
            pairs,
        })
        .collect();
    Ok(summarize(cfg, names, combined, cycles, holdout_per_cycle))
}
