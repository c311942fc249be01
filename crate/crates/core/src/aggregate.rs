//! Recombination of local fits into a combined-data posterior approximation.

use crate::error::{BfiError, Result};
use crate::fit::{BlockSplit, BlockedFitResult, LocalFitResult};
use crate::glm::{is_positive_semidefinite, GaussianPrior};
use crate::linalg::{chol_factor, dot, psd_floor, CholeskyFactor, RectMatrix, SymMatrix};
use crate::normal::upper_quantile;

/// Approximate posterior for the fictive combined dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct BfiResult {
    pub theta_hat: Vec<f64>,
    pub curvature: SymMatrix,
    pub prior_precision: SymMatrix,
    pub std_devs: Vec<f64>,
    pub covariate_names: Vec<String>,
    /// Total number of observations behind the estimate.
    pub n_obs: usize,
}

impl BfiResult {
    pub fn dim(&self) -> usize {
        self.theta_hat.len()
    }

    /// The aggregate viewed as a fit of its own, e.g. to merge it with
    /// further centers. The prior is the combined prior used to build it.
    pub fn as_local_fit(&self) -> LocalFitResult {
        LocalFitResult {
            theta_hat: self.theta_hat.clone(),
            curvature: self.curvature.clone(),
            prior_precision: self.prior_precision.clone(),
            n_obs: self.n_obs,
            covariate_names: self.covariate_names.clone(),
            converged: true,
            iterations_used: 0,
            final_gradient_norm: 0.0,
        }
    }
}

fn check_locals(locals: &[LocalFitResult]) -> Result<()> {
    let first = locals
        .first()
        .ok_or_else(|| BfiError::InvalidInput("no local fits to aggregate".into()))?;
    for (l, fit) in locals.iter().enumerate() {
        if !fit.converged {
            return Err(BfiError::CenterNotConverged(l));
        }
        if fit.covariate_names != first.covariate_names {
            return Err(BfiError::SchemaMismatch(format!(
                "center {l} has columns {:?}, center 0 has {:?}",
                fit.covariate_names, first.covariate_names
            )));
        }
        fit.validate()?;
    }
    Ok(())
}

fn check_prior_dim(prior: &GaussianPrior, dim: usize) -> Result<()> {
    if prior.dim() != dim {
        return Err(BfiError::DimensionMismatch {
            expected: dim,
            found: prior.dim(),
        });
    }
    Ok(())
}

/// `Σ Âℓ + Λ − Σ Λℓ` and `(that)⁻¹ Σ Âℓ θ̂ℓ`.
pub fn aggregate(locals: &[LocalFitResult], combined_prior: &GaussianPrior) -> Result<BfiResult> {
    check_locals(locals)?;
    let d = locals[0].dim();
    check_prior_dim(combined_prior, d)?;

    // prior correction first, so that equal priors cancel exactly
    let mut curvature = combined_prior.precision().clone();
    for fit in locals {
        curvature.sub_assign(&fit.prior_precision);
    }
    let mut weighted = vec![0.0; d];
    for fit in locals {
        curvature.add_assign(&fit.curvature);
        for (w, v) in weighted.iter_mut().zip(fit.curvature.mul_vec(&fit.theta_hat)?) {
            *w += v;
        }
    }
    let factor = chol_factor(&curvature).map_err(|e| match e {
        BfiError::NotPositiveDefinite { pivot } => BfiError::AggregateNotPositiveDefinite { pivot },
        other => other,
    })?;
    let theta_hat = factor.solve(&weighted)?;
    let std_devs = factor.inverse_diagonal().into_iter().map(f64::sqrt).collect();
    Ok(BfiResult {
        theta_hat,
        curvature,
        prior_precision: combined_prior.precision().clone(),
        std_devs,
        covariate_names: locals[0].covariate_names.clone(),
        n_obs: locals.iter().map(|f| f.n_obs).sum(),
    })
}

/// Credible interval `θ̂ₖ ± ξ_α·sdₖ` for every component.
pub fn credible_intervals(result: &BfiResult, alpha: f64) -> Result<Vec<(f64, f64)>> {
    let xi = quantile_for(alpha)?;
    Ok(result
        .theta_hat
        .iter()
        .zip(&result.std_devs)
        .map(|(t, s)| (t - xi * s, t + xi * s))
        .collect())
}

fn quantile_for(alpha: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 0.5) {
        return Err(BfiError::InvalidAlpha(alpha));
    }
    Ok(upper_quantile(alpha))
}

/// Aggregate in which some parameters (θ_b) are specific to each center and
/// the rest (θ_a) are shared.
#[derive(Debug, Clone, PartialEq)]
pub struct NuisanceBfiResult {
    pub split: BlockSplit,
    pub covariate_names: Vec<String>,
    pub theta_a_hat: Vec<f64>,
    pub curvature_a: SymMatrix,
    pub theta_b_tilde: Vec<Vec<f64>>,
    pub curvature_b_tilde: Vec<SymMatrix>,
    pub cross_blocks: Vec<RectMatrix>,
}

impl NuisanceBfiResult {
    /// Stacked estimate `[θ̃_b1, …, θ̃_bL, θ̂_a]`.
    pub fn full_theta(&self) -> Vec<f64> {
        let mut out: Vec<f64> = self.theta_b_tilde.iter().flatten().copied().collect();
        out.extend_from_slice(&self.theta_a_hat);
        out
    }

    /// Names matching [`Self::full_theta`]; nuisance names get a `[ℓ]` suffix.
    pub fn full_names(&self) -> Vec<String> {
        let mut out = Vec::new();
        for l in 1..=self.theta_b_tilde.len() {
            for &i in self.split.nuisance() {
                out.push(format!("{}[{l}]", self.covariate_names[i]));
            }
        }
        out.extend(self.split.core().iter().map(|&i| self.covariate_names[i].clone()));
        out
    }

    /// Curvature of the stacked parameter: nuisance blocks on the diagonal,
    /// shared block last, coupled through the cross blocks.
    pub fn full_curvature(&self) -> SymMatrix {
        let db = self.split.nuisance().len();
        let da = self.theta_a_hat.len();
        let nb = db * self.theta_b_tilde.len();
        let d = nb + da;
        let mut data = vec![0.0; d * d];
        for (l, (cb, cross)) in self.curvature_b_tilde.iter().zip(&self.cross_blocks).enumerate() {
            let off = l * db;
            for r in 0..db {
                for c in 0..db {
                    data[(off + r) * d + off + c] = cb.get(r, c);
                }
            }
            for a in 0..da {
                for b in 0..db {
                    let v = cross.get(a, b);
                    data[(nb + a) * d + off + b] = v;
                    data[(off + b) * d + nb + a] = v;
                }
            }
        }
        for r in 0..da {
            for c in 0..da {
                data[(nb + r) * d + nb + c] = self.curvature_a.get(r, c);
            }
        }
        SymMatrix::from_symmetric_unchecked(d, data)
    }

    /// Posterior standard deviations of [`Self::full_theta`].
    pub fn full_std_devs(&self) -> Result<Vec<f64>> {
        let f = chol_factor(&self.full_curvature()).map_err(|e| match e {
            BfiError::NotPositiveDefinite { pivot } => BfiError::AggregateNotPositiveDefinite { pivot },
            other => other,
        })?;
        Ok(f.inverse_diagonal().into_iter().map(f64::sqrt).collect())
    }
}

/// `m − Σ rows · Ã⁻¹ · rowsᵗ` accumulated in place, with `Ã⁻¹ rowsᵗ` returned
/// as one solved vector per row.
fn solve_rows(factor: &CholeskyFactor, cross: &RectMatrix) -> Result<Vec<Vec<f64>>> {
    (0..cross.rows()).map(|r| factor.solve(cross.row(r))).collect()
}

/// Core-parameter aggregate with center-specific nuisance parameters.
///
/// With an empty nuisance block this is [`aggregate`] on the whole vector.
pub fn aggregate_nuisance(
    locals: &[BlockedFitResult],
    combined_prior_a: &GaussianPrior,
    combined_prior_b: Option<&GaussianPrior>,
) -> Result<NuisanceBfiResult> {
    let first = locals
        .first()
        .ok_or_else(|| BfiError::InvalidInput("no local fits to aggregate".into()))?;
    for (l, b) in locals.iter().enumerate() {
        if b.split != first.split {
            return Err(BfiError::SchemaMismatch(format!("center {l} uses a different parameter partition")));
        }
    }
    let fits: Vec<LocalFitResult> = locals.iter().map(|b| b.fit.clone()).collect();
    check_locals(&fits)?;
    let split = first.split.clone();
    let names = first.fit.covariate_names.clone();

    if split.nuisance().is_empty() {
        let res = aggregate(&fits, combined_prior_a)?;
        return Ok(NuisanceBfiResult {
            split,
            covariate_names: names,
            theta_a_hat: res.theta_hat,
            curvature_a: res.curvature,
            theta_b_tilde: Vec::new(),
            curvature_b_tilde: Vec::new(),
            cross_blocks: Vec::new(),
        });
    }

    let da = split.core().len();
    let db = split.nuisance().len();
    check_prior_dim(combined_prior_a, da)?;
    let prior_b = combined_prior_b.ok_or_else(|| BfiError::InvalidInput("combined nuisance prior required".into()))?;
    check_prior_dim(prior_b, db)?;

    // Â_a = Σ Â_aℓ + Λ_a − Σ Λ_aℓ
    let mut curvature_a = combined_prior_a.precision().clone();
    for b in locals {
        curvature_a.add_assign(&b.curvature_a);
        curvature_a.sub_assign(&b.prior_a);
    }

    let mut schur = curvature_a.clone();
    let mut rhs = vec![0.0; da];
    let mut tilde_b = Vec::with_capacity(locals.len());
    let mut factors = Vec::with_capacity(locals.len());
    for (l, b) in locals.iter().enumerate() {
        let nb = b.nuisance.as_ref().expect("non-empty nuisance block");
        // Ã_bℓ = Â_bℓ + Λ_b − Λ_bℓ
        let mut t = nb.curvature_b.clone();
        t.add_assign(prior_b.precision());
        t.sub_assign(&nb.prior_b);
        let factor = chol_factor(&t).map_err(|_| BfiError::BlockNotPositiveDefinite(l))?;

        // rows of Â_abℓ solved against Ã_bℓ
        let solved = solve_rows(&factor, &nb.cross_ab)?;
        // Â_abℓ Ã_bℓ⁻¹ Â_abℓᵗ
        let mut coupling = vec![0.0; da * da];
        for i in 0..da {
            for j in 0..da {
                coupling[i * da + j] = dot(nb.cross_ab.row(i), &solved[j]);
            }
        }
        let coupling = SymMatrix::from_symmetric_unchecked(da, coupling);
        schur.sub_assign(&coupling);

        // (Â_aℓ − coupling) θ̂_aℓ
        let local_a = b.curvature_a.sub(&coupling)?;
        for (r, v) in rhs.iter_mut().zip(local_a.mul_vec(&b.theta_a)?) {
            *r += v;
        }
        // Â_abℓ (I − Ã_bℓ⁻¹ Â_bℓ) θ̂_bℓ
        let ab_theta = nb.curvature_b.mul_vec(&nb.theta_b)?;
        let shrunk = factor.solve(&ab_theta)?;
        let resid: Vec<f64> = nb.theta_b.iter().zip(&shrunk).map(|(t, s)| t - s).collect();
        for (r, v) in rhs.iter_mut().zip(nb.cross_ab.mul_vec(&resid)?) {
            *r += v;
        }
        tilde_b.push(t);
        factors.push(factor);
    }

    let schur_factor = chol_factor(&schur).map_err(|e| match e {
        BfiError::NotPositiveDefinite { pivot } => BfiError::AggregateNotPositiveDefinite { pivot },
        other => other,
    })?;
    let theta_a_hat = schur_factor.solve(&rhs)?;

    // θ̃_bℓ = Ã_bℓ⁻¹ (Â_bℓ θ̂_bℓ + Â_abℓᵗ (θ̂_aℓ − θ̂_a))
    let mut theta_b_tilde = Vec::with_capacity(locals.len());
    let mut cross_blocks = Vec::with_capacity(locals.len());
    for (b, factor) in locals.iter().zip(&factors) {
        let nb = b.nuisance.as_ref().expect("non-empty nuisance block");
        let diff: Vec<f64> = b.theta_a.iter().zip(&theta_a_hat).map(|(l, g)| l - g).collect();
        let mut v = nb.curvature_b.mul_vec(&nb.theta_b)?;
        for (vi, c) in v.iter_mut().zip(nb.cross_ab.transpose_mul_vec(&diff)?) {
            *vi += c;
        }
        theta_b_tilde.push(factor.solve(&v)?);
        cross_blocks.push(nb.cross_ab.clone());
    }

    Ok(NuisanceBfiResult {
        split,
        covariate_names: names,
        theta_a_hat,
        curvature_a,
        theta_b_tilde,
        curvature_b_tilde: tilde_b,
        cross_blocks,
    })
}

/// One leave-one-center-out interval for `(θ̂₋ℓ − θ̂ℓ)ₖ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CompatibilityInterval {
    pub center: f64,
    pub half_width: f64,
}

impl CompatibilityInterval {
    pub fn lower(&self) -> f64 {
        self.center - self.half_width
    }

    pub fn upper(&self) -> f64 {
        self.center + self.half_width
    }

    pub fn contains_zero(&self) -> bool {
        self.lower() <= 0.0 && 0.0 <= self.upper()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompatibilityReport {
    pub alpha: f64,
    pub covariate_names: Vec<String>,
    /// `intervals[ℓ][k]`
    pub intervals: Vec<Vec<CompatibilityInterval>>,
}

impl CompatibilityReport {
    /// Indices of centers with at least one interval excluding zero.
    pub fn flagged_centers(&self) -> Vec<usize> {
        self.intervals
            .iter()
            .enumerate()
            .filter(|(_, row)| row.iter().any(|iv| !iv.contains_zero()))
            .map(|(l, _)| l)
            .collect()
    }
}

/// Prior used when center ℓ is left out: `Λ − Λℓ`, projected onto the
/// positive semi-definite cone when the difference is indefinite.
pub fn leave_one_out_prior(combined_prior: &GaussianPrior, left_out: &LocalFitResult) -> Result<GaussianPrior> {
    let diff = combined_prior.precision().sub(&left_out.prior_precision)?;
    if is_positive_semidefinite(&diff) {
        GaussianPrior::new(diff)
    } else {
        GaussianPrior::new(psd_floor(&diff))
    }
}

/// Leave-one-center-out intervals
/// `(θ̂₋ℓ − θ̂ℓ)ₖ ± ξ_α √((Â₋ℓ⁻¹ + Âℓ⁻¹)ₖₖ)`.
pub fn compatibility_check(
    locals: &[LocalFitResult],
    combined_prior: &GaussianPrior,
    alpha: f64,
) -> Result<CompatibilityReport> {
    if locals.len() < 2 {
        return Err(BfiError::InsufficientCenters(locals.len()));
    }
    let xi = quantile_for(alpha)?;
    check_locals(locals)?;
    check_prior_dim(combined_prior, locals[0].dim())?;

    let mut intervals = Vec::with_capacity(locals.len());
    for (l, fit) in locals.iter().enumerate() {
        let others: Vec<LocalFitResult> = locals
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != l)
            .map(|(_, f)| f.clone())
            .collect();
        let prior = leave_one_out_prior(combined_prior, fit)?;
        let rest = aggregate(&others, &prior)?;
        let local_var = chol_factor(&fit.curvature)?.inverse_diagonal();
        let row = rest
            .theta_hat
            .iter()
            .zip(&fit.theta_hat)
            .zip(rest.std_devs.iter().zip(&local_var))
            .map(|((r, t), (s, v))| CompatibilityInterval {
                center: r - t,
                half_width: xi * (s * s + v).sqrt(),
            })
            .collect();
        intervals.push(row);
    }
    Ok(CompatibilityReport {
        alpha,
        covariate_names: locals[0].covariate_names.clone(),
        intervals,
    })
}
