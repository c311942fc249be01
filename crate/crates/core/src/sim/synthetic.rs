//! Synthetic trauma-like cohorts.
//!
//! Each center draws sex, age, injury severity score (ISS) and Glasgow coma
//! scale (GCS) from marginals matched to a target table of medians and
//! proportions. ISS and GCS share a latent severity factor, so severe
//! injuries come with low GCS. Mortality follows a logistic model on the
//! standardized covariates with a center-specific intercept chosen so that
//! the expected mortality rate matches the center's target.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Bernoulli, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{BfiError, Result};
use crate::glm::{sigmoid, Dataset, ModelSpec};

pub const COVARIATES: [&str; 4] = ["sex", "age", "iss", "gcs"];
pub const OUTCOME: &str = "mortality";

const CALIBRATION_DRAWS: usize = 20_000;
const CALIBRATION_SEED: u64 = 0x5eed_ca1b;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CenterProfile {
    pub size: usize,
    /// Target proportion of deaths.
    pub mortality: f64,
    pub age_median: f64,
    pub female_fraction: f64,
    pub iss_median: f64,
    pub gcs_median: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticPopulation {
    pub centers: Vec<CenterProfile>,
    /// Effects of standardized sex, age, ISS and GCS.
    pub beta: Vec<f64>,
    /// Log-scale spread of age.
    pub age_log_sd: f64,
    /// Log-scale spread of ISS.
    pub iss_log_sd: f64,
    /// Spread of GCS before rounding and clipping.
    pub gcs_sd: f64,
    /// Share of ISS/GCS variation driven by the common severity factor.
    pub severity_loading: f64,
}

impl SyntheticPopulation {
    /// Three hospital types with the characteristics of the trauma cohort.
    pub fn trauma() -> Self {
        let center = |size, mortality, age_median, female_fraction, iss_median, gcs_median| CenterProfile {
            size,
            mortality,
            age_median,
            female_fraction,
            iss_median,
            gcs_median,
        };
        SyntheticPopulation {
            centers: vec![
                center(49, 0.43, 30.0, 0.22, 41.0, 10.0),
                center(106, 0.40, 29.0, 0.24, 33.0, 10.0),
                center(216, 0.22, 31.0, 0.30, 29.0, 14.0),
            ],
            beta: vec![-0.15, 1.36, 0.55, -1.98],
            age_log_sd: 0.55,
            iss_log_sd: 0.45,
            gcs_sd: 4.0,
            severity_loading: 0.6,
        }
    }

    /// Logistic model with shared intercept over the raw covariates.
    pub fn spec() -> ModelSpec {
        ModelSpec::logistic(COVARIATES).expect("static covariate list")
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.centers.iter().map(|c| c.size).collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.centers.is_empty() {
            return Err(BfiError::InvalidInput("population has no centers".into()));
        }
        if self.beta.len() != COVARIATES.len() {
            return Err(BfiError::DimensionMismatch {
                expected: COVARIATES.len(),
                found: self.beta.len(),
            });
        }
        for c in &self.centers {
            let ok = c.mortality > 0.0
                && c.mortality < 1.0
                && c.female_fraction >= 0.0
                && c.female_fraction <= 1.0
                && c.age_median > 0.0
                && c.iss_median > 0.0
                && (3.0..=15.0).contains(&c.gcs_median);
            if !ok {
                return Err(BfiError::InvalidInput(format!("invalid center profile {c:?}")));
            }
        }
        let spreads = [self.age_log_sd, self.iss_log_sd, self.gcs_sd];
        if spreads.iter().any(|s| !(*s > 0.0)) || !(0.0..1.0).contains(&self.severity_loading) {
            return Err(BfiError::InvalidInput("invalid spread parameters".into()));
        }
        Ok(())
    }

    fn draw_patient<R: Rng>(&self, c: &CenterProfile, rng: &mut R) -> [f64; 4] {
        let severity: f64 = rng.sample(StandardNormal);
        let e_age: f64 = rng.sample(StandardNormal);
        let e_iss: f64 = rng.sample(StandardNormal);
        let e_gcs: f64 = rng.sample(StandardNormal);
        let female = Bernoulli::new(c.female_fraction).expect("validated").sample(rng);
        let a = self.severity_loading;
        let b = (1.0 - a * a).sqrt();
        let age = (c.age_median * (self.age_log_sd * e_age).exp()).round().clamp(1.0, 95.0);
        let iss = (c.iss_median * (self.iss_log_sd * (a * severity + b * e_iss)).exp())
            .round()
            .clamp(1.0, 75.0);
        let gcs = (c.gcs_median - self.gcs_sd * (a * severity + b * e_gcs)).round().clamp(3.0, 15.0);
        [female as u8 as f64, age, iss, gcs]
    }

    /// Reference moments for the linear predictor and calibrated intercepts,
    /// computed from a fixed auxiliary sample.
    pub fn calibrate(&self) -> Result<Calibration> {
        self.validate()?;
        let draws: Vec<Vec<[f64; 4]>> = self
            .centers
            .iter()
            .enumerate()
            .map(|(l, c)| {
                let mut rng = ChaCha20Rng::seed_from_u64(CALIBRATION_SEED);
                rng.set_stream(l as u64);
                (0..CALIBRATION_DRAWS).map(|_| self.draw_patient(c, &mut rng)).collect()
            })
            .collect();

        let total: f64 = self.centers.iter().map(|c| c.size as f64).sum();
        let mut means = [0.0; 4];
        let mut second = [0.0; 4];
        for (c, d) in self.centers.iter().zip(&draws) {
            let w = c.size as f64 / total / d.len() as f64;
            for x in d {
                for k in 0..4 {
                    means[k] += w * x[k];
                    second[k] += w * x[k] * x[k];
                }
            }
        }
        let sds: Vec<f64> = (0..4).map(|k| (second[k] - means[k] * means[k]).max(1e-12).sqrt()).collect();
        let means = means.to_vec();

        let intercepts = self
            .centers
            .iter()
            .zip(&draws)
            .map(|(c, d)| {
                let eta: Vec<f64> = d.iter().map(|x| linear_part(&self.beta, &means, &sds, x)).collect();
                let rate = |b: f64| eta.iter().map(|e| sigmoid(b + e)).sum::<f64>() / eta.len() as f64;
                let (mut lo, mut hi) = (-30.0, 30.0);
                for _ in 0..100 {
                    let mid = 0.5 * (lo + hi);
                    if rate(mid) < c.mortality {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                0.5 * (lo + hi)
            })
            .collect();
        Ok(Calibration {
            means,
            sds,
            intercepts,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Calibration {
    pub means: Vec<f64>,
    pub sds: Vec<f64>,
    pub intercepts: Vec<f64>,
}

fn linear_part(beta: &[f64], means: &[f64], sds: &[f64], x: &[f64; 4]) -> f64 {
    (0..4).map(|k| beta[k] * (x[k] - means[k]) / sds[k]).sum()
}

/// One dataset per center with the given sizes (defaults to the profile
/// sizes when `sizes` is empty).
pub fn generate_synthetic(pop: &SyntheticPopulation, sizes: &[usize], seed: u64) -> Result<Vec<Dataset>> {
    let sizes = if sizes.is_empty() { pop.sizes() } else { sizes.to_vec() };
    if sizes.len() != pop.centers.len() {
        return Err(BfiError::DimensionMismatch {
            expected: pop.centers.len(),
            found: sizes.len(),
        });
    }
    if sizes.contains(&0) {
        return Err(BfiError::InvalidInput("center sizes must be positive".into()));
    }
    let cal = pop.calibrate()?;
    let spec = SyntheticPopulation::spec();
    pop.centers
        .iter()
        .zip(&sizes)
        .enumerate()
        .map(|(l, (c, &n))| {
            let mut rng = ChaCha20Rng::seed_from_u64(seed);
            rng.set_stream(l as u64);
            let mut rows = Vec::with_capacity(n);
            let mut y = Vec::with_capacity(n);
            for _ in 0..n {
                let x = pop.draw_patient(c, &mut rng);
                let p = sigmoid(cal.intercepts[l] + linear_part(&pop.beta, &cal.means, &cal.sds, &x));
                y.push((rng.random::<f64>() < p) as u8 as f64);
                rows.push(x.to_vec());
            }
            Ok(Dataset::from_covariates(&spec, &rows, y, OUTCOME, None)?.with_center_id(format!("{}", l + 1)))
        })
        .collect()
}
