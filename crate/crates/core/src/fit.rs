//! Local MAP estimation with a Gaussian prior.
//!
//! Newton's method on the log-posterior with step halving. The curvature
//! returned with the estimate is `Λ − ∇² log L` at the optimum, i.e. minus
//! the Hessian of the log-posterior, which is exactly what a center has to
//! export for aggregation.

use crate::error::{BfiError, Result};
use crate::glm::{information_matrix, log_lik_gradient, log_likelihood, Dataset, GaussianPrior, ModelSpec};
use crate::linalg::{chol_factor, dot, max_abs, quad_form, RectMatrix, SymMatrix};

/// Newton steps must shrink below this (relative to |β|∞ + 1) before a
/// small gradient is accepted as convergence. Rules out the flat tails of a
/// separated logistic likelihood, where the gradient vanishes but the
/// optimum sits at infinity.
const STEP_TOLERANCE: f64 = 1e-6;

/// Relative precision to which the log-posterior can be evaluated.
const ROUNDING_RESOLUTION: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct FitConfig {
    pub max_iterations: usize,
    /// Bound on the ∞-norm of the log-posterior gradient.
    pub gradient_tolerance: f64,
    pub step_halvings_max: usize,
    /// Starting point; `None` means the zero vector (the prior mean).
    pub initial_beta: Option<Vec<f64>>,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            max_iterations: 100,
            gradient_tolerance: 1e-8,
            step_halvings_max: 30,
            initial_beta: None,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iterations == 0 {
            return Err(BfiError::InvalidInput("max_iterations must be at least 1".into()));
        }
        if !(self.gradient_tolerance > 0.0) {
            return Err(BfiError::InvalidInput("gradient_tolerance must be positive".into()));
        }
        Ok(())
    }
}

/// Everything a center exports after fitting: the MAP estimate, the
/// curvature at the MAP, the local prior and bookkeeping.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalFitResult {
    pub theta_hat: Vec<f64>,
    pub curvature: SymMatrix,
    pub prior_precision: SymMatrix,
    pub n_obs: usize,
    pub covariate_names: Vec<String>,
    pub converged: bool,
    pub iterations_used: usize,
    pub final_gradient_norm: f64,
}

impl LocalFitResult {
    pub fn dim(&self) -> usize {
        self.theta_hat.len()
    }

    /// `√((Â⁻¹)ₖₖ)` for each component.
    pub fn std_devs(&self) -> Result<Vec<f64>> {
        let f = chol_factor(&self.curvature)?;
        Ok(f.inverse_diagonal().into_iter().map(f64::sqrt).collect())
    }

    /// Dimension and positive-definiteness checks.
    pub fn validate(&self) -> Result<()> {
        let d = self.theta_hat.len();
        if d == 0 {
            return Err(BfiError::DimensionInconsistency("empty parameter vector".into()));
        }
        if self.curvature.dim() != d {
            return Err(BfiError::DimensionInconsistency(format!(
                "curvature has dimension {}, theta_hat has {d}",
                self.curvature.dim()
            )));
        }
        if self.prior_precision.dim() != d {
            return Err(BfiError::DimensionInconsistency(format!(
                "prior precision has dimension {}, theta_hat has {d}",
                self.prior_precision.dim()
            )));
        }
        if self.covariate_names.len() != d {
            return Err(BfiError::DimensionInconsistency(format!(
                "{} covariate names for {d} parameters",
                self.covariate_names.len()
            )));
        }
        if self.converged {
            chol_factor(&self.curvature)?;
        }
        Ok(())
    }
}

/// log p(β | D) up to the normalizing constant: log L(β) − ½ βᵗΛβ.
pub fn log_posterior(spec: &ModelSpec, data: &Dataset, prior: &GaussianPrior, beta: &[f64]) -> Result<f64> {
    Ok(log_likelihood(spec, data, beta)? - 0.5 * quad_form(prior.precision(), beta)?)
}

fn posterior_gradient(spec: &ModelSpec, data: &Dataset, prior: &GaussianPrior, beta: &[f64]) -> Result<Vec<f64>> {
    let mut g = log_lik_gradient(spec, data, beta)?;
    let pb = prior.precision().mul_vec(beta)?;
    for (gi, p) in g.iter_mut().zip(pb) {
        *gi -= p;
    }
    Ok(g)
}

/// `Λ − ∇² log L(β)`.
fn posterior_curvature(spec: &ModelSpec, data: &Dataset, prior: &GaussianPrior, beta: &[f64]) -> Result<SymMatrix> {
    let mut a = information_matrix(spec, data, beta)?;
    a.add_assign(prior.precision());
    Ok(a)
}

/// MAP estimate and curvature for one dataset.
pub fn fit_map(spec: &ModelSpec, data: &Dataset, prior: &GaussianPrior, cfg: &FitConfig) -> Result<LocalFitResult> {
    fit_map_traced(spec, data, prior, cfg).map(|(fit, _)| fit)
}

/// [`fit_map`] that also returns the log-posterior after every accepted
/// Newton step (first entry is the starting point).
pub fn fit_map_traced(
    spec: &ModelSpec,
    data: &Dataset,
    prior: &GaussianPrior,
    cfg: &FitConfig,
) -> Result<(LocalFitResult, Vec<f64>)> {
    spec.validate()?;
    cfg.validate()?;
    if data.has_missing() {
        return Err(BfiError::MissingValues);
    }
    data.check_against(spec)?;
    let d = spec.dim();
    if prior.dim() != d {
        return Err(BfiError::DimensionMismatch {
            expected: d,
            found: prior.dim(),
        });
    }

    let mut beta = match &cfg.initial_beta {
        Some(b) if b.len() != d => {
            return Err(BfiError::DimensionMismatch {
                expected: d,
                found: b.len(),
            })
        }
        Some(b) => b.clone(),
        None => vec![0.0; d],
    };
    let mut lp = log_posterior(spec, data, prior, &beta)?;
    if !lp.is_finite() {
        return Err(BfiError::NonFiniteLogPosterior);
    }
    let mut trace = vec![lp];
    let mut converged = false;
    let mut iterations = 0;

    while iterations < cfg.max_iterations {
        let grad = posterior_gradient(spec, data, prior, &beta)?;
        let curvature = posterior_curvature(spec, data, prior, &beta)?;
        let factor = chol_factor(&curvature)?;
        let step = factor.solve(&grad)?;

        if max_abs(&grad) <= cfg.gradient_tolerance && max_abs(&step) <= STEP_TOLERANCE * (1.0 + max_abs(&beta)) {
            converged = true;
            break;
        }

        let mut t = 1.0;
        let mut accepted = None;
        // Predicted ascent ½ gᵗA⁻¹g below the resolution of the log-posterior:
        // comparing values is meaningless there, so judge by the gradient.
        if 0.5 * dot(&grad, &step) <= ROUNDING_RESOLUTION * (1.0 + lp.abs()) {
            let candidate: Vec<f64> = beta.iter().zip(&step).map(|(b, s)| b + s).collect();
            let cand_grad = posterior_gradient(spec, data, prior, &candidate)?;
            if max_abs(&cand_grad) < max_abs(&grad) {
                let cand_lp = log_posterior(spec, data, prior, &candidate)?;
                accepted = Some((candidate, cand_lp));
            }
            t = 0.0;
        }
        for _ in 0..=cfg.step_halvings_max {
            if accepted.is_some() || t == 0.0 {
                break;
            }
            let candidate: Vec<f64> = beta.iter().zip(&step).map(|(b, s)| b + t * s).collect();
            let cand_lp = log_posterior(spec, data, prior, &candidate)?;
            if cand_lp.is_finite() && cand_lp >= lp {
                accepted = Some((candidate, cand_lp));
                break;
            }
            t *= 0.5;
        }
        iterations += 1;
        match accepted {
            Some((b, l)) => {
                beta = b;
                lp = l;
                trace.push(lp);
            }
            // no ascent along the Newton direction: stationary up to rounding
            None => break,
        }
    }

    let grad = posterior_gradient(spec, data, prior, &beta)?;
    let grad_norm = max_abs(&grad);
    let curvature = posterior_curvature(spec, data, prior, &beta)?;
    if !converged && grad_norm <= cfg.gradient_tolerance {
        // budget or line search ran out right at the optimum
        if let Ok(f) = chol_factor(&curvature) {
            let step = f.solve(&grad)?;
            converged = max_abs(&step) <= STEP_TOLERANCE * (1.0 + max_abs(&beta));
        }
    }

    Ok((
        LocalFitResult {
            theta_hat: beta,
            curvature,
            prior_precision: prior.precision().clone(),
            n_obs: data.n(),
            covariate_names: spec.column_names(),
            converged,
            iterations_used: iterations,
            final_gradient_norm: grad_norm,
        },
        trace,
    ))
}

/// Partition of parameter indices into shared core parameters (a) and
/// center-specific nuisance parameters (b).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockSplit {
    core: Vec<usize>,
    nuisance: Vec<usize>,
}

impl BlockSplit {
    pub fn new(dim: usize, nuisance: Vec<usize>) -> Result<Self> {
        let mut seen = vec![false; dim];
        for &i in &nuisance {
            if i >= dim || seen[i] {
                return Err(BfiError::InvalidInput(format!("invalid nuisance index {i} for dimension {dim}")));
            }
            seen[i] = true;
        }
        let core: Vec<usize> = (0..dim).filter(|&i| !seen[i]).collect();
        if core.is_empty() {
            return Err(BfiError::InvalidInput("core block is empty".into()));
        }
        Ok(BlockSplit { core, nuisance })
    }

    /// Nuisance block = the leading intercept column.
    pub fn intercept(dim: usize) -> Result<Self> {
        Self::new(dim, vec![0])
    }

    pub fn core(&self) -> &[usize] {
        &self.core
    }

    pub fn nuisance(&self) -> &[usize] {
        &self.nuisance
    }

    pub fn dim(&self) -> usize {
        self.core.len() + self.nuisance.len()
    }

    /// Places block priors into a full-dimension precision matrix.
    pub fn assemble_prior(&self, prior_a: &GaussianPrior, prior_b: Option<&GaussianPrior>) -> Result<GaussianPrior> {
        if prior_a.dim() != self.core.len() {
            return Err(BfiError::DimensionMismatch {
                expected: self.core.len(),
                found: prior_a.dim(),
            });
        }
        let d = self.dim();
        let mut data = vec![0.0; d * d];
        let mut place = |idx: &[usize], m: &SymMatrix| {
            for (r, &i) in idx.iter().enumerate() {
                for (c, &j) in idx.iter().enumerate() {
                    data[i * d + j] = m.get(r, c);
                }
            }
        };
        place(&self.core, prior_a.precision());
        match prior_b {
            Some(pb) if pb.dim() != self.nuisance.len() => {
                return Err(BfiError::DimensionMismatch {
                    expected: self.nuisance.len(),
                    found: pb.dim(),
                })
            }
            Some(pb) => place(&self.nuisance, pb.precision()),
            None if !self.nuisance.is_empty() => {
                return Err(BfiError::InvalidInput("nuisance prior required".into()));
            }
            None => {}
        }
        GaussianPrior::new(SymMatrix::from_symmetric_unchecked(d, data))
    }
}

/// Nuisance-side blocks of one center's fit.
#[derive(Debug, Clone, PartialEq)]
pub struct NuisanceBlocks {
    /// θ̂_{b,ℓ}
    pub theta_b: Vec<f64>,
    /// Â_{b,ℓ}
    pub curvature_b: SymMatrix,
    /// Â_{ab,ℓ}, core rows × nuisance columns.
    pub cross_ab: RectMatrix,
    /// Λ_{b,ℓ}
    pub prior_b: SymMatrix,
}

/// A local fit viewed through a core/nuisance partition.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockedFitResult {
    pub fit: LocalFitResult,
    pub split: BlockSplit,
    /// θ̂_{a,ℓ}
    pub theta_a: Vec<f64>,
    /// Â_{a,ℓ}
    pub curvature_a: SymMatrix,
    /// Λ_{a,ℓ}
    pub prior_a: SymMatrix,
    /// `None` when the nuisance block is empty.
    pub nuisance: Option<NuisanceBlocks>,
}

impl BlockedFitResult {
    /// Slices an ordinary fit. The local prior must not couple the blocks.
    pub fn from_local(fit: LocalFitResult, split: BlockSplit) -> Result<Self> {
        if split.dim() != fit.dim() {
            return Err(BfiError::DimensionMismatch {
                expected: fit.dim(),
                found: split.dim(),
            });
        }
        let (a, b) = (split.core(), split.nuisance());
        let theta_a = a.iter().map(|&i| fit.theta_hat[i]).collect();
        let curvature_a = fit.curvature.submatrix(a);
        let prior_a = fit.prior_precision.submatrix(a);
        let nuisance = if b.is_empty() {
            None
        } else {
            let prior_cross = fit.prior_precision.cross_block(a, b);
            if prior_cross.as_slice().iter().any(|&v| v != 0.0) {
                return Err(BfiError::InvalidInput(
                    "local prior couples core and nuisance parameters".into(),
                ));
            }
            Some(NuisanceBlocks {
                theta_b: b.iter().map(|&i| fit.theta_hat[i]).collect(),
                curvature_b: fit.curvature.submatrix(b),
                cross_ab: fit.curvature.cross_block(a, b),
                prior_b: fit.prior_precision.submatrix(b),
            })
        };
        Ok(BlockedFitResult {
            fit,
            split,
            theta_a,
            curvature_a,
            prior_a,
            nuisance,
        })
    }
}

/// [`fit_map`] with a block-structured prior, returning the curvature
/// blocks for nuisance-aware aggregation.
pub fn fit_map_blocked(
    spec: &ModelSpec,
    data: &Dataset,
    prior_a: &GaussianPrior,
    prior_b: Option<&GaussianPrior>,
    split: &BlockSplit,
    cfg: &FitConfig,
) -> Result<BlockedFitResult> {
    let prior = split.assemble_prior(prior_a, prior_b)?;
    let fit = fit_map(spec, data, &prior, cfg)?;
    BlockedFitResult::from_local(fit, split.clone())
}
