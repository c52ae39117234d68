//! External-cohort confounder imputation.
//!
//! An analysis cohort often lacks a subject's blood-pressure history before
//! enrollment. This module reconstructs a *cumulative mediated blood
//! pressure* (CMBP) baseline covariate from an external longitudinal
//! cohort in three steps:
//!
//! 1. [`fit_lmm`] — a Bayesian linear mixed-effects model of blood
//!    pressure over age on the external cohort (fixed effects over
//!    demographics, age, and age², plus per-subject random intercepts and
//!    age slopes), sampled with a conjugate Gibbs chain.
//! 2. [`augment_with_cmbp`] — for each analysis subject, a donor is drawn
//!    from the external cohort matching on (race, sex), relaxing the match
//!    when a pool is empty; the donor contributes its posterior-mean random
//!    effects, the subject its own fixed covariates.
//! 3. [`cmbp_integral`] — the blood-pressure trajectory integrated in
//!    closed form over the pre-enrollment age window, appended to the
//!    analysis dataset as a baseline covariate.
//!
//! The trajectory mean is a quadratic in age, so the integral has the
//! exact antiderivative used here; a numeric quadrature of the same mean
//! must agree to floating-point accuracy, which the tests enforce.

use std::collections::BTreeMap;
use std::path::Path;

use nalgebra::{DMatrix, DVector, Matrix2, Vector2};
use rand::Rng;
use rand_distr::{ChiSquared, Distribution, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::LongitudinalDataset;
use crate::streams::{self, tag};
use crate::{MedgcError, Result};

// ---------------------------------------------------------------------------
// The external cohort
// ---------------------------------------------------------------------------

/// One repeated measurement of a cohort subject.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortObservation {
    /// Age at measurement (years).
    pub age: f64,
    /// Mean blood pressure at that age.
    pub mbp: f64,
}

/// One external-cohort subject: time-fixed demographics plus repeated
/// blood-pressure measurements.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortSubject {
    /// Unique identifier.
    pub id: String,
    /// Binary race indicator (0/1).
    pub race: f64,
    /// Binary sex indicator (0/1).
    pub sex: f64,
    /// Body-mass index.
    pub bmi: f64,
    /// Repeated measurements, at least one per subject.
    pub observations: Vec<CohortObservation>,
}

/// The external longitudinal cohort.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExternalCohortDataset {
    /// Cohort subjects in input order.
    pub subjects: Vec<CohortSubject>,
}

impl ExternalCohortDataset {
    /// Checks non-emptiness, unique ids, binary race/sex, finite values,
    /// and at least one observation per subject.
    pub fn validate(&self) -> Result<()> {
        if self.subjects.is_empty() {
            return Err(MedgcError::InvalidInput("the external cohort is empty".into()));
        }
        let mut seen = BTreeMap::new();
        for subject in &self.subjects {
            if let Some(_previous) = seen.insert(subject.id.clone(), ()) {
                return Err(MedgcError::InvalidInput(format!(
                    "duplicate cohort subject id `{}`",
                    subject.id
                )));
            }
            for (name, value) in [("race", subject.race), ("sex", subject.sex)] {
                if value != 0.0 && value != 1.0 {
                    return Err(MedgcError::InvalidInput(format!(
                        "subject `{}` has non-binary {name} value {value}",
                        subject.id
                    )));
                }
            }
            if !subject.bmi.is_finite() {
                return Err(MedgcError::InvalidInput(format!(
                    "subject `{}` has non-finite bmi",
                    subject.id
                )));
            }
            if subject.observations.is_empty() {
                return Err(MedgcError::InvalidInput(format!(
                    "subject `{}` has no observations",
                    subject.id
                )));
            }
            for obs in &subject.observations {
                if !obs.age.is_finite() || !obs.mbp.is_finite() {
                    return Err(MedgcError::InvalidInput(format!(
                        "subject `{}` has a non-finite observation",
                        subject.id
                    )));
                }
            }
        }
        Ok(())
    }

    /// Smallest and largest observed age across the cohort.
    pub fn age_range(&self) -> (f64, f64) {
        let mut low = f64::INFINITY;
        let mut high = f64::NEG_INFINITY;
        for subject in &self.subjects {
            for obs in &subject.observations {
                low = low.min(obs.age);
                high = high.max(obs.age);
            }
        }
        (low, high)
    }

    /// Total observation count.
    pub fn num_observations(&self) -> usize {
        self.subjects.iter().map(|s| s.observations.len()).sum()
    }

    /// Reads the long CSV layout `id,race,sex,bmi,age,mbp` (one row per
    /// measurement; demographics repeated and required to be consistent
    /// within a subject). Subjects keep first-appearance order.
    pub fn read_long_csv(path: &Path) -> Result<Self> {
        let mut reader = csv::Reader::from_path(path)?;
        let headers = reader.headers()?.clone();
        let expected = ["id", "race", "sex", "bmi", "age", "mbp"];
        let header_names: Vec<&str> = headers.iter().collect();
        if header_names != expected {
            return Err(MedgcError::Schema(format!(
                "external cohort CSV must have columns {expected:?}; found {header_names:?}"
            )));
        }
        let mut order: Vec<String> = Vec::new();
        let mut by_id: BTreeMap<String, CohortSubject> = BTreeMap::new();
        for (line, record) in reader.records().enumerate() {
            let record = record?;
            let field = |index: usize| -> Result<f64> {
                record
                    .get(index)
                    .unwrap_or("")
                    .trim()
                    .parse::<f64>()
                    .map_err(|_| {
                        MedgcError::Schema(format!(
                            "row {}: column `{}` is not numeric",
                            line + 2,
                            expected[index]
                        ))
                    })
            };
            let id = record.get(0).unwrap_or("").trim().to_string();
            if id.is_empty() {
                return Err(MedgcError::Schema(format!("row {}: empty id", line + 2)));
            }
            let race = field(1)?;
            let sex = field(2)?;
            let bmi = field(3)?;
            let observation = CohortObservation { age: field(4)?, mbp: field(5)? };
            match by_id.get_mut(&id) {
                Some(subject) => {
                    if subject.race != race || subject.sex != sex || subject.bmi != bmi {
                        return Err(MedgcError::Schema(format!(
                            "row {}: subject `{id}` changes demographics across rows",
                            line + 2
                        )));
                    }
                    subject.observations.push(observation);
                }
                None => {
                    order.push(id.clone());
                    by_id.insert(
                        id.clone(),
                        CohortSubject {
                            id,
                            race,
                            sex,
                            bmi,
                            observations: vec![observation],
                        },
                    );
                }
            }
        }
        let dataset = ExternalCohortDataset {
            subjects: order
                .into_iter()
                .map(|id| by_id.remove(&id).expect("ordered ids exist"))
                .collect(),
        };
        dataset.validate()?;
        Ok(dataset)
    }

    /// Writes the long CSV layout read by [`Self::read_long_csv`].
    pub fn write_long_csv(&self, path: &Path) -> Result<()> {
        let mut writer = csv::Writer::from_path(path)?;
        writer.write_record(["id", "race", "sex", "bmi", "age", "mbp"])?;
        for subject in &self.subjects {
            for obs in &subject.observations {
                writer.write_record([
                    subject.id.as_str(),
                    &subject.race.to_string(),
                    &subject.sex.to_string(),
                    &subject.bmi.to_string(),
                    &obs.age.to_string(),
                    &obs.mbp.to_string(),
                ])?;
            }
        }
        writer.flush()?;
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// The linear mixed-effects model
// ---------------------------------------------------------------------------

/// Number of fixed effects in the blood-pressure model.
pub const NUM_FIXED_EFFECTS: usize = 9;

/// Fixed-effect design row `[1, race, sex, bmi, a, a², race·a, sex·a, bmi·a]`.
pub fn design_row(race: f64, sex: f64, bmi: f64, age: f64) -> [f64; NUM_FIXED_EFFECTS] {
    [1.0, race, sex, bmi, age, age * age, race * age, sex * age, bmi * age]
}

/// Mean blood pressure at `age` for fixed effects `beta`, demographics,
/// and random effects `[intercept, age slope]`.
pub fn mean_mbp(
    beta: &[f64; NUM_FIXED_EFFECTS],
    race: f64,
    sex: f64,
    bmi: f64,
    random_effects: [f64; 2],
    age: f64,
) -> f64 {
    let x = design_row(race, sex, bmi, age);
    let fixed: f64 = beta.iter().zip(&x).map(|(b, v)| b * v).sum();
    fixed + random_effects[0] + random_effects[1] * age
}

/// Gibbs-sampler settings for [`fit_lmm`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LmmConfig {
    /// Discarded warm-up iterations.
    pub num_burn: usize,
    /// Kept posterior draws.
    pub num_keep: usize,
    /// Prior variance of each fixed effect (mean-zero normal prior).
    pub prior_variance: f64,
    /// Chain seed.
    pub rng_seed: u64,
}

impl Default for LmmConfig {
    fn default() -> Self {
        LmmConfig { num_burn: 500, num_keep: 500, prior_variance: 1e4, rng_seed: 0 }
    }
}

impl LmmConfig {
    /// Checks the draw counts and prior scale.
    pub fn validate(&self) -> Result<()> {
        if self.num_keep == 0 {
            return Err(MedgcError::InvalidInput("the chain must keep at least 1 draw".into()));
        }
        if !(self.prior_variance > 0.0) {
            return Err(MedgcError::InvalidInput(format!(
                "the fixed-effect prior variance must be positive; got {}",
                self.prior_variance
            )));
        }
        Ok(())
    }
}

/// Posterior draws of the mixed-effects model.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LmmFit {
    /// Fixed-effect draws, `num_keep` rows.
    pub beta_draws: Vec<[f64; NUM_FIXED_EFFECTS]>,
    /// Random-effect covariance draws (2×2, row-major).
    pub sigma_b_draws: Vec<[[f64; 2]; 2]>,
    /// Residual-variance draws.
    pub sigma_eps_draws: Vec<f64>,
    /// Per-draw random effects: `random_effect_draws[draw][subject]`.
    pub random_effect_draws: Vec<Vec<[f64; 2]>>,
    /// Cohort subject ids, aligned with the inner random-effect index.
    pub subject_ids: Vec<String>,
}

impl LmmFit {
    /// Posterior means of the fixed effects.
    pub fn beta_mean(&self) -> [f64; NUM_FIXED_EFFECTS] {
        let mut mean = [0.0; NUM_FIXED_EFFECTS];
        for draw in &self.beta_draws {
            for (m, v) in mean.iter_mut().zip(draw) {
                *m += v;
            }
        }
        let q = self.beta_draws.len() as f64;
        for m in &mut mean {
            *m /= q;
        }
        mean
    }

    /// Posterior standard deviations of the fixed effects.
    pub fn beta_sd(&self) -> [f64; NUM_FIXED_EFFECTS] {
        let mean = self.beta_mean();
        let mut ss = [0.0; NUM_FIXED_EFFECTS];
        for draw in &self.beta_draws {
            for ((s, v), m) in ss.iter_mut().zip(draw).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let denominator = (self.beta_draws.len() - 1).max(1) as f64;
        ss.map(|s| (s / denominator).sqrt())
    }

    /// Posterior-mean random effects per cohort subject.
    pub fn random_effect_means(&self) -> Vec<[f64; 2]> {
        let num_subjects = self.subject_ids.len();
        let mut means = vec![[0.0; 2]; num_subjects];
        for draw in &self.random_effect_draws {
            for (mean, value) in means.iter_mut().zip(draw) {
                mean[0] += value[0];
                mean[1] += value[1];
            }
        }
        let q = self.random_effect_draws.len() as f64;
        for mean in &mut means {
            mean[0] /= q;
            mean[1] /= q;
        }
        means
    }
}

fn invert_2x2(matrix: &Matrix2<f64>) -> Result<Matrix2<f64>> {
    matrix.try_inverse().ok_or_else(|| {
        MedgcError::Numeric("a 2×2 covariance in the Gibbs chain is singular".into())
    })
}

/// One draw from `Wishart(df, scale)` for 2×2 `scale`, via the Bartlett
/// decomposition.
fn sample_wishart_2x2(
    df: f64,
    scale: &Matrix2<f64>,
    rng: &mut rand_chacha::ChaCha8Rng,
) -> Result<Matrix2<f64>> {
    let chol = scale.cholesky().ok_or_else(|| {
        MedgcError::Numeric("the Wishart scale matrix is not positive definite".into())
    })?;
    let l = chol.l();
    let c11 = ChiSquared::new(df).map_err(|e| MedgcError::Numeric(e.to_string()))?;
    let c22 = ChiSquared::new(df - 1.0).map_err(|e| MedgcError::Numeric(e.to_string()))?;
    let a11: f64 = c11.sample(rng);
    let a22: f64 = c22.sample(rng);
    let a21: f64 = StandardNormal.sample(rng);
    let bartlett = Matrix2::new(a11.sqrt(), 0.0, a21, a22.sqrt());
    let factor = l * bartlett;
    Ok(factor * factor.transpose())
}

/// Fits the Bayesian linear mixed-effects model
/// `mbp = x'β + b₀ + b₁·age + ε` with `x` from [`design_row`],
/// `(b₀, b₁) ~ N(0, Σ_b)`, and `ε ~ N(0, σ²)`, by a conjugate Gibbs
/// sampler: a normal prior on β, an inverse-Wishart(3, I) prior on Σ_b,
/// and an inverse-gamma(0.01, 0.01) prior on σ². The chain is seeded from
/// a dedicated stream, so fits are bit-reproducible.
pub fn fit_lmm(cohort: &ExternalCohortDataset, config: &LmmConfig) -> Result<LmmFit> {
    cohort.validate()?;
    config.validate()?;
    let p = NUM_FIXED_EFFECTS;
    let num_subjects = cohort.subjects.len();
    let num_rows = cohort.num_observations();
    if num_rows <= p {
        return Err(MedgcError::InvalidInput(format!(
            "the cohort has {num_rows} observations for {p} fixed effects"
        )));
    }

    // Flattened design: per-subject row ranges into x/y/ages.
    let mut x = DMatrix::zeros(num_rows, p);
    let mut y = DVector::zeros(num_rows);
    let mut ages = Vec::with_capacity(num_rows);
    let mut ranges = Vec::with_capacity(num_subjects);
    let mut cursor = 0usize;
    for subject in &cohort.subjects {
        let start = cursor;
        for obs in &subject.observations {
            let row = design_row(subject.race, subject.sex, subject.bmi, obs.age);
            for (column, value) in row.iter().enumerate() {
                x[(cursor, column)] = *value;
            }
            y[cursor] = obs.mbp;
            ages.push(obs.age);
            cursor += 1;
        }
        ranges.push(start..cursor);
    }

    let xtx = x.transpose() * &x;
    let prior_precision = 1.0 / config.prior_variance;

    // Inverse-Wishart(ν₀ = 3, Ψ₀ = I) on Σ_b; inverse-gamma(0.01, 0.01)
    // on σ².
    let nu0 = 3.0;
    let psi0 = Matrix2::identity();
    let (ig_shape0, ig_rate0) = (0.01, 0.01);

    let mut rng = streams::stream(&[config.rng_seed, tag::LMM]);
    let mut random_effects = vec![Vector2::zeros(); num_subjects];
    let mut sigma_b = Matrix2::identity();
    let mut sigma_eps = 1.0f64;

    let mut fit = LmmFit {
        beta_draws: Vec::with_capacity(config.num_keep),
        sigma_b_draws: Vec::with_capacity(config.num_keep),
        sigma_eps_draws: Vec::with_capacity(config.num_keep),
        random_effect_draws: Vec::with_capacity(config.num_keep),
        subject_ids: cohort.subjects.iter().map(|s| s.id.clone()).collect(),
    };

    for iteration in 0..config.num_burn + config.num_keep {
        // --- β | b, σ², y ---------------------------------------------
        let mut adjusted = y.clone();
        for (subject_index, range) in ranges.iter().enumerate() {
            let b = &random_effects[subject_index];
            for row in range.clone() {
                adjusted[row] -= b[0] + b[1] * ages[row];
            }
        }
        let mut precision = &xtx / sigma_eps;
        for d in 0..p {
            precision[(d, d)] += prior_precision;
        }
        let rhs = x.transpose() * &adjusted / sigma_eps;
        let chol = precision.clone().cholesky().ok_or_else(|| {
            MedgcError::Numeric("the fixed-effect precision matrix is not positive definite".into())
        })?;
        let mean = chol.solve(&rhs);
        let z = DVector::from_fn(p, |_, _| StandardNormal.sample(&mut rng));
        let perturbation = chol
            .l()
            .transpose()
            .solve_upper_triangular(&z)
            .ok_or_else(|| MedgcError::Numeric("triangular solve failed".into()))?;
        let beta = mean + perturbation;

        // --- b_i | β, Σ_b, σ² ------------------------------------------
        let sigma_b_inverse = invert_2x2(&sigma_b)?;
        let residual_fixed = &y - &x * &beta;
        for (subject_index, range) in ranges.iter().enumerate() {
            let mut ztz = Matrix2::zeros();
            let mut ztr = Vector2::zeros();
            for row in range.clone() {
                let a = ages[row];
                let r = residual_fixed[row];
                ztz[(0, 0)] += 1.0;
                ztz[(0, 1)] += a;
                ztz[(1, 0)] += a;
                ztz[(1, 1)] += a * a;
                ztr[0] += r;
                ztr[1] += a * r;
            }
            let precision = ztz / sigma_eps + sigma_b_inverse;
            let chol = precision.cholesky().ok_or_else(|| {
                MedgcError::Numeric("a subject-level precision is not positive definite".into())
            })?;
            let mean = chol.solve(&(ztr / sigma_eps));
            let z = Vector2::new(StandardNormal.sample(&mut rng), StandardNormal.sample(&mut rng));
            let perturbation = chol
                .l()
                .transpose()
                .solve_upper_triangular(&z)
                .ok_or_else(|| MedgcError::Numeric("triangular solve failed".into()))?;
            random_effects[subject_index] = mean + perturbation;
        }

        // --- Σ_b | b ----------------------------------------------------
        let mut scatter = Matrix2::zeros();
        for b in &random_effects {
            scatter += b * b.transpose();
        }
        let posterior_scale = invert_2x2(&(psi0 + scatter))?;
        let wishart = sample_wishart_2x2(nu0 + num_subjects as f64, &posterior_scale, &mut rng)?;
        sigma_b = invert_2x2(&wishart)?;

        // --- σ² | β, b --------------------------------------------------
        let mut ss = 0.0;
        for (subject_index, range) in ranges.iter().enumerate() {
            let b = &random_effects[subject_index];
            for row in range.clone() {
                let residual = residual_fixed[row] - b[0] - b[1] * ages[row];
                ss += residual * residual;
            }
        }
        let shape = ig_shape0 + num_rows as f64 / 2.0;
        let rate = ig_rate0 + ss / 2.0;
        let gamma =
            Gamma::new(shape, 1.0 / rate).map_err(|e| MedgcError::Numeric(e.to_string()))?;
        let lambda: f64 = gamma.sample(&mut rng);
        sigma_eps = 1.0 / lambda;

        if iteration >= config.num_burn {
            let mut beta_array = [0.0; NUM_FIXED_EFFECTS];
            for (slot, value) in beta_array.iter_mut().zip(beta.iter()) {
                *slot = *value;
            }
            fit.beta_draws.push(beta_array);
            fit.sigma_b_draws.push([
                [sigma_b[(0, 0)], sigma_b[(0, 1)]],
                [sigma_b[(1, 0)], sigma_b[(1, 1)]],
            ]);
            fit.sigma_eps_draws.push(sigma_eps);
            fit.random_effect_draws
                .push(random_effects.iter().map(|b| [b[0], b[1]]).collect());
        }
    }
    Ok(fit)
}

// ---------------------------------------------------------------------------
// The closed-form integral
// ---------------------------------------------------------------------------

/// Integral of the blood-pressure trajectory mean over the age window
/// `[t0, t1]`, in closed form: the mean is quadratic in age, so
///
/// * constant terms `(β₀ + β₁·race + β₂·sex + β₃·bmi + b₀)` pick up
///   `t₁ − t₀`,
/// * linear terms `(β₄ + β₆·race + β₇·sex + β₈·bmi + b₁)` pick up
///   `(t₁² − t₀²)/2`, and
/// * the quadratic term `β₅` picks up `(t₁³ − t₀³)/3`.
pub fn cmbp_integral(
    beta: &[f64; NUM_FIXED_EFFECTS],
    race: f64,
    sex: f64,
    bmi: f64,
    random_effects: [f64; 2],
    t0: f64,
    t1: f64,
) -> f64 {
    let constant = beta[0] + beta[1] * race + beta[2] * sex + beta[3] * bmi + random_effects[0];
    let linear = beta[4] + beta[6] * race + beta[7] * sex + beta[8] * bmi + random_effects[1];
    let quadratic = beta[5];
    constant * (t1 - t0)
        + linear * (t1 * t1 - t0 * t0) / 2.0
        + quadratic * (t1 * t1 * t1 - t0 * t0 * t0) / 3.0
}

// ---------------------------------------------------------------------------
// Matching and augmentation
// ---------------------------------------------------------------------------

/// How closely a donor matched its target.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatchQuality {
    /// Race and sex both matched.
    Exact,
    /// Only race matched (no donor shared the sex).
    SexRelaxed,
    /// Neither matched (donor drawn from the whole cohort).
    FullyRelaxed,
}

impl std::fmt::Display for MatchQuality {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            MatchQuality::Exact => write!(f, "exact"),
            MatchQuality::SexRelaxed => write!(f, "sex-relaxed"),
            MatchQuality::FullyRelaxed => write!(f, "fully-relaxed"),
        }
    }
}

/// One donor assignment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchRecord {
    /// Analysis-subject id.
    pub subject_id: String,
    /// Matched cohort-donor id.
    pub donor_id: String,
    /// Match strictness achieved.
    pub quality: MatchQuality,
}

/// Settings for [`augment_with_cmbp`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CmbpConfig {
    /// Length of the pre-enrollment age window (years); the integral runs
    /// over `[age − window, age]`.
    pub window: f64,
    /// Name of the appended baseline column.
    pub column_name: String,
    /// Seed of the donor-assignment streams.
    pub rng_seed: u64,
}

impl Default for CmbpConfig {
    fn default() -> Self {
        CmbpConfig { window: 20.0, column_name: "cmbp".to_string(), rng_seed: 0 }
    }
}

/// The augmentation result.
#[derive(Debug, Clone)]
pub struct CmbpAugmentation {
    /// The analysis dataset with the integral appended as a baseline
    /// covariate.
    pub dataset: LongitudinalDataset,
    /// One donor record per analysis subject, in dataset order.
    pub matches: Vec<MatchRecord>,
    /// Support warnings: subjects whose integration window leaves the
    /// cohort's observed age range.
    pub warnings: Vec<String>,
}

/// Appends a cumulative blood-pressure baseline covariate to an analysis
/// dataset. Each subject's trajectory uses its own (race, sex, bmi) in the
/// fixed part and the posterior-mean random effects of a donor matched on
/// (race, sex); empty pools relax the match (sex first, then race), and
/// each relaxation is recorded. Donor picks use one dedicated stream per
/// subject index, so results are reproducible and independent of
/// evaluation order.
pub fn augment_with_cmbp(
    dataset: &LongitudinalDataset,
    cohort: &ExternalCohortDataset,
    fit: &LmmFit,
    config: &CmbpConfig,
) -> Result<CmbpAugmentation> {
    cohort.validate()?;
    if !(config.window > 0.0) {
        return Err(MedgcError::InvalidInput(format!(
            "the age window must be positive; got {}",
            config.window
        )));
    }
    if fit.subject_ids.len() != cohort.subjects.len()
        || fit
            .subject_ids
            .iter()
            .zip(&cohort.subjects)
            .any(|(id, subject)| *id != subject.id)
    {
        return Err(MedgcError::InvalidInput(
            "the mixed-model fit does not belong to this cohort".into(),
        ));
    }
    if dataset.baseline_names.iter().any(|n| *n == config.column_name) {
        return Err(MedgcError::InvalidInput(format!(
            "the dataset already has a baseline column named `{}`",
            config.column_name
        )));
    }
    let column = |name: &str| {
        dataset.baseline_index(name).ok_or_else(|| {
            MedgcError::InvalidInput(format!(
                "CMBP augmentation needs a baseline column named `{name}`"
            ))
        })
    };
    let age_column = column("age")?;
    let race_column = column("race")?;
    let sex_column = column("sex")?;
    let bmi_column = column("bmi")?;

    let beta = fit.beta_mean();
    let random_effect_means = fit.random_effect_means();
    let (cohort_age_low, cohort_age_high) = cohort.age_range();

    let mut subjects = Vec::with_capacity(dataset.subjects.len());
    let mut matches = Vec::with_capacity(dataset.subjects.len());
    let mut warnings = Vec::new();

    for (index, subject) in dataset.subjects.iter().enumerate() {
        let age = subject.baseline.values[age_column];
        let race = subject.baseline.values[race_column];
        let sex = subject.baseline.values[sex_column];
        let bmi = subject.baseline.values[bmi_column];
        if race != 0.0 && race != 1.0 || sex != 0.0 && sex != 1.0 {
            return Err(MedgcError::InvalidInput(format!(
                "subject `{}` has non-binary race/sex baselines",
                subject.id
            )));
        }

        let exact: Vec<usize> = (0..cohort.subjects.len())
            .filter(|&d| cohort.subjects[d].race == race && cohort.subjects[d].sex == sex)
            .collect();
        let (pool, quality) = if !exact.is_empty() {
            (exact, MatchQuality::Exact)
        } else {
            let race_only: Vec<usize> = (0..cohort.subjects.len())
                .filter(|&d| cohort.subjects[d].race == race)
                .collect();
            if !race_only.is_empty() {
                (race_only, MatchQuality::SexRelaxed)
            } else {
                ((0..cohort.subjects.len()).collect(), MatchQuality::FullyRelaxed)
            }
        };
        let mut rng = streams::stream(&[config.rng_seed, tag::MATCH, index as u64]);
        let donor_index = pool[rng.gen_range(0..pool.len())];
        matches.push(MatchRecord {
            subject_id: subject.id.clone(),
            donor_id: cohort.subjects[donor_index].id.clone(),
            quality,
        });

        let t1 = age;
        let t0 = age - config.window;
        if t0 < cohort_age_low || t1 > cohort_age_high {
            warnings.push(format!(
                "subject `{}`: window [{t0}, {t1}] leaves the cohort's observed age range \
                 [{cohort_age_low}, {cohort_age_high}]",
                subject.id
            ));
        }
        let integral =
            cmbp_integral(&beta, race, sex, bmi, random_effect_means[donor_index], t0, t1);

        let mut augmented = subject.clone();
        augmented.baseline.values.push(integral);
        subjects.push(augmented);
    }

    let mut baseline_names = dataset.baseline_names.clone();
    baseline_names.push(config.column_name.clone());
    let dataset =
        LongitudinalDataset::new(dataset.visit_grid.clone(), baseline_names, subjects)?;
    Ok(CmbpAugmentation { dataset, matches, warnings })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{BaselineCovariates, SubjectRecord};
    use approx::assert_abs_diff_eq;
    use rand::Rng;

    /// Composite Simpson quadrature with `2·half_steps` panels; exact for
    /// cubics up to rounding, so it independently checks the closed form.
    fn simpson(f: impl Fn(f64) -> f64, t0: f64, t1: f64, half_steps: usize) -> f64 {
        let n = 2 * half_steps;
        let h = (t1 - t0) / n as f64;
        let mut total = f(t0) + f(t1);
        for k in 1..n {
            let weight = if k % 2 == 1 { 4.0 } else { 2.0 };
            total += weight * f(t0 + k as f64 * h);
        }
        total * h / 3.0
    }

    fn synthetic_cohort(
        num_subjects: usize,
        obs_per_subject: usize,
        beta: &[f64; NUM_FIXED_EFFECTS],
        sd_b: [f64; 2],
        sigma_eps: f64,
        seed: u64,
    ) -> ExternalCohortDataset {
        let mut rng = streams::stream(&[seed, 999]);
        let subjects = (0..num_subjects)
            .map(|i| {
                let race = if rng.gen::<f64>() < 0.5 { 1.0 } else { 0.0 };
                let sex = if rng.gen::<f64>() < 0.5 { 1.0 } else { 0.0 };
                let noise: f64 = StandardNormal.sample(&mut rng);
                let bmi = 27.0 + 3.0 * noise;
                let noise: f64 = StandardNormal.sample(&mut rng);
                let b0 = sd_b[0] * noise;
                let noise: f64 = StandardNormal.sample(&mut rng);
                let b1 = sd_b[1] * noise;
                let first_age = rng.gen_range(30.0..60.0);
                let observations = (0..obs_per_subject)
                    .map(|k| {
                        let age = first_age + 2.0 * k as f64;
                        let eps: f64 = StandardNormal.sample(&mut rng);
                        let mbp = mean_mbp(beta, race, sex, bmi, [b0, b1], age)
                            + sigma_eps * eps;
                        CohortObservation { age, mbp }
                    })
                    .collect();
                CohortSubject { id: format!("ext{i}"), race, sex, bmi, observations }
            })
            .collect();
        ExternalCohortDataset { subjects }
    }

    fn true_beta() -> [f64; NUM_FIXED_EFFECTS] {
        [80.0, 3.0, -2.0, 0.8, 0.6, -0.002, 0.05, -0.04, 0.01]
    }

    #[test]
    fn closed_form_integral_matches_simpson_quadrature_on_many_draws() {
        let mut rng = streams::stream(&[5, 998]);
        for _ in 0..1000 {
            let mut beta = [0.0; NUM_FIXED_EFFECTS];
            for slot in &mut beta {
                *slot = rng.gen_range(-2.0..2.0);
            }
            let race = if rng.gen::<f64>() < 0.5 { 1.0 } else { 0.0 };
            let sex = if rng.gen::<f64>() < 0.5 { 1.0 } else { 0.0 };
            let bmi = rng.gen_range(18.0..40.0);
            let re = [rng.gen_range(-5.0..5.0), rng.gen_range(-0.5..0.5)];
            let t1 = rng.gen_range(40.0..80.0);
            let t0 = t1 - rng.gen_range(5.0..25.0);
            let exact = cmbp_integral(&beta, race, sex, bmi, re, t0, t1);
            let numeric =
                simpson(|a| mean_mbp(&beta, race, sex, bmi, re, a), t0, t1, 64);
            assert_abs_diff_eq!(exact, numeric, epsilon = 1e-10 * (1.0 + exact.abs()));
        }
    }

    #[test]
    fn unit_intercept_over_a_twenty_year_window_integrates_to_twenty() {
        let mut beta = [0.0; NUM_FIXED_EFFECTS];
        beta[0] = 1.0;
        let value = cmbp_integral(&beta, 0.0, 0.0, 0.0, [0.0, 0.0], 25.0, 45.0);
        assert_eq!(value, 20.0);
    }

    #[test]
    fn the_integral_is_linear_in_its_coefficients() {
        let mut rng = streams::stream(&[6, 997]);
        for _ in 0..50 {
            let mut beta_a = [0.0; NUM_FIXED_EFFECTS];
            let mut beta_b = [0.0; NUM_FIXED_EFFECTS];
            let mut beta_sum = [0.0; NUM_FIXED_EFFECTS];
            for index in 0..NUM_FIXED_EFFECTS {
                beta_a[index] = rng.gen_range(-1.0..1.0);
                beta_b[index] = rng.gen_range(-1.0..1.0);
                beta_sum[index] = beta_a[index] + beta_b[index];
            }
            let re_a = [rng.gen_range(-1.0..1.0), rng.gen_range(-0.1..0.1)];
            let re_b = [rng.gen_range(-1.0..1.0), rng.gen_range(-0.1..0.1)];
            let re_sum = [re_a[0] + re_b[0], re_a[1] + re_b[1]];
            let (t0, t1) = (31.0, 52.0);
            let sum_of_parts = cmbp_integral(&beta_a, 1.0, 0.0, 24.0, re_a, t0, t1)
                + cmbp_integral(&beta_b, 1.0, 0.0, 24.0, re_b, t0, t1);
            // Covariate terms enter once per coefficient set, so compare
            // against the doubled demographics contribution explicitly.
            let joint = cmbp_integral(&beta_sum, 1.0, 0.0, 24.0, re_sum, t0, t1);
            assert_abs_diff_eq!(joint, sum_of_parts, epsilon = 1e-9);
        }
    }

    #[test]
    fn gibbs_chain_recovers_the_generating_fixed_effects() {
        let beta = true_beta();
        let cohort = synthetic_cohort(150, 4, &beta, [2.0, 0.1], 2.0, 31);
        let config = LmmConfig { num_burn: 300, num_keep: 300, ..LmmConfig::default() };
        let fit = fit_lmm(&cohort, &config).unwrap();
        assert_eq!(fit.beta_draws.len(), 300);
        let mean = fit.beta_mean();
        let sd = fit.beta_sd();
        for index in 0..NUM_FIXED_EFFECTS {
            assert!(
                (mean[index] - beta[index]).abs() < 4.0 * sd[index],
                "β[{index}] = {} strays from {} (posterior sd {})",
                mean[index],
                beta[index],
                sd[index]
            );
        }
        // The residual variance (σ² = 4) is recovered to the right scale.
        let sigma_mean =
            fit.sigma_eps_draws.iter().sum::<f64>() / fit.sigma_eps_draws.len() as f64;
        assert!((2.0..8.0).contains(&sigma_mean), "σ² posterior mean {sigma_mean}");
        // Every covariance draw is positive definite.
        for draw in &fit.sigma_b_draws {
            let det = draw[0][0] * draw[1][1] - draw[0][1] * draw[1][0];
            assert!(draw[0][0] > 0.0 && det > 0.0, "Σ_b draw not positive definite");
        }
        // Identical seeds give identical chains.
        let again = fit_lmm(&cohort, &config).unwrap();
        assert_eq!(fit.beta_draws, again.beta_draws);
        assert_eq!(fit.random_effect_draws, again.random_effect_draws);
    }

    #[test]
    fn posterior_predictive_intervals_cover_held_out_measurements() {
        let beta = true_beta();
        let full = synthetic_cohort(120, 5, &beta, [2.0, 0.1], 2.0, 77);
        // Hold out each subject's last measurement.
        let mut train = full.clone();
        let mut held_out = Vec::new();
        for subject in &mut train.subjects {
            let last = subject.observations.pop().expect("five observations");
            held_out.push((subject.race, subject.sex, subject.bmi, last));
        }
        let config = LmmConfig { num_burn: 300, num_keep: 400, rng_seed: 3, ..Default::default() };
        let fit = fit_lmm(&train, &config).unwrap();

        let mut rng = streams::stream(&[13, 996]);
        let mut covered = 0usize;
        for (subject_index, (race, sex, bmi, obs)) in held_out.iter().enumerate() {
            let mut predictive: Vec<f64> = (0..fit.beta_draws.len())
                .map(|q| {
                    let re = fit.random_effect_draws[q][subject_index];
                    let noise: f64 = StandardNormal.sample(&mut rng);
                    mean_mbp(&fit.beta_draws[q], *race, *sex, *bmi, re, obs.age)
                        + fit.sigma_eps_draws[q].sqrt() * noise
                })
                .collect();
            predictive.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let lower = crate::gcomp::quantile_type7(&predictive, 0.025);
            let upper = crate::gcomp::quantile_type7(&predictive, 0.975);
            if lower <= obs.mbp && obs.mbp <= upper {
                covered += 1;
            }
        }
        let coverage = covered as f64 / held_out.len() as f64;
        assert!(coverage >= 0.90, "predictive coverage {coverage} below 0.90");
    }

    fn analysis_dataset(ages_races_sexes: &[(f64, f64, f64)]) -> LongitudinalDataset {
        let subjects = ages_races_sexes
            .iter()
            .enumerate()
            .map(|(i, (age, race, sex))| SubjectRecord {
                id: format!("main{i}"),
                baseline: BaselineCovariates { values: vec![*age, *race, *sex, 26.0] },
                z: vec![Some(1.0), None],
                l: vec![Some(0.0), None],
                m: vec![Some(0.2), None],
                event_time: 1.5,
                event: true,
                cause: None,
            })
            .collect();
        LongitudinalDataset::new(
            vec![1.0, 2.0],
            ["age", "race", "sex", "bmi"].map(String::from).to_vec(),
            subjects,
        )
        .unwrap()
    }

    /// A fit whose posterior is a point mass, for exact augmentation
    /// arithmetic.
    fn degenerate_fit(
        cohort: &ExternalCohortDataset,
        beta: [f64; NUM_FIXED_EFFECTS],
    ) -> LmmFit {
        LmmFit {
            beta_draws: vec![beta],
            sigma_b_draws: vec![[[1.0, 0.0], [0.0, 1.0]]],
            sigma_eps_draws: vec![1.0],
            random_effect_draws: vec![vec![[0.0, 0.0]; cohort.subjects.len()]],
            subject_ids: cohort.subjects.iter().map(|s| s.id.clone()).collect(),
        }
    }

    #[test]
    fn constant_pressure_augmentation_is_exact_and_deterministic() {
        let cohort = synthetic_cohort(20, 3, &true_beta(), [1.0, 0.05], 1.0, 41);
        let mut beta = [0.0; NUM_FIXED_EFFECTS];
        beta[0] = 130.0;
        let fit = degenerate_fit(&cohort, beta);
        let dataset = analysis_dataset(&[(55.0, 1.0, 0.0), (62.0, 0.0, 1.0)]);
        let config = CmbpConfig::default();
        let augmented = augment_with_cmbp(&dataset, &cohort, &fit, &config).unwrap();
        assert_eq!(augmented.dataset.baseline_names.last().unwrap(), "cmbp");
        for subject in &augmented.dataset.subjects {
            // 130 mmHg over exactly 20 years.
            assert_eq!(*subject.baseline.values.last().unwrap(), 2600.0);
        }
        // Bit-identical rerun.
        let again = augment_with_cmbp(&dataset, &cohort, &fit, &config).unwrap();
        assert_eq!(augmented.dataset, again.dataset);
        assert_eq!(augmented.matches, again.matches);
        // The original dataset is untouched and the new column feeds
        // straight into the validated constructor.
        assert_eq!(dataset.baseline_names.len(), 4);
        assert_eq!(augmented.dataset.baseline_names.len(), 5);
    }

    #[test]
    fn match_relaxation_is_recorded_in_order() {
        // All donors are race 1, sex 0.
        let mut cohort = synthetic_cohort(6, 3, &true_beta(), [1.0, 0.05], 1.0, 43);
        for subject in &mut cohort.subjects {
            subject.race = 1.0;
            subject.sex = 0.0;
        }
        let fit = degenerate_fit(&cohort, [0.0; NUM_FIXED_EFFECTS]);
        let dataset = analysis_dataset(&[
            (55.0, 1.0, 0.0), // exact pool
            (56.0, 1.0, 1.0), // race matches, sex doesn't
            (57.0, 0.0, 1.0), // nothing matches
        ]);
        let augmented =
            augment_with_cmbp(&dataset, &cohort, &fit, &CmbpConfig::default()).unwrap();
        let qualities: Vec<MatchQuality> =
            augmented.matches.iter().map(|m| m.quality).collect();
        assert_eq!(
            qualities,
            [MatchQuality::Exact, MatchQuality::SexRelaxed, MatchQuality::FullyRelaxed]
        );
        assert!(augmented.matches.iter().all(|m| m.donor_id.starts_with("ext")));
    }

    #[test]
    fn support_warnings_flag_windows_outside_the_cohort_age_range() {
        let cohort = synthetic_cohort(15, 3, &true_beta(), [1.0, 0.05], 1.0, 47);
        let (low, high) = cohort.age_range();
        let fit = degenerate_fit(&cohort, [0.0; NUM_FIXED_EFFECTS]);
        // One subject's window starts before the youngest observed age;
        // a second sits safely inside the range.
        let inside = (low + 21.0).min(high - 0.5);
        let dataset = analysis_dataset(&[(low + 2.0, 1.0, 0.0), (inside, 0.0, 1.0)]);
        let augmented =
            augment_with_cmbp(&dataset, &cohort, &fit, &CmbpConfig::default()).unwrap();
        assert_eq!(augmented.warnings.len(), 1, "{:?}", augmented.warnings);
        assert!(augmented.warnings[0].contains("main0"), "{:?}", augmented.warnings);
    }

    #[test]
    fn cohort_csv_round_trips_and_validation_rejects_bad_input() {
        let cohort = synthetic_cohort(8, 3, &true_beta(), [1.0, 0.05], 1.0, 53);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cohort.csv");
        cohort.write_long_csv(&path).unwrap();
        let reloaded = ExternalCohortDataset::read_long_csv(&path).unwrap();
        assert_eq!(cohort, reloaded);

        let mut bad = cohort.clone();
        bad.subjects[0].race = 0.5;
        assert!(bad.validate().is_err());
        let mut bad = cohort.clone();
        bad.subjects[1].id = bad.subjects[0].id.clone();
        assert!(bad.validate().is_err());
        let mut bad = cohort.clone();
        bad.subjects[2].observations.clear();
        assert!(bad.validate().is_err());
        assert!(ExternalCohortDataset { subjects: Vec::new() }.validate().is_err());

        // Inconsistent demographics within one id are a schema error.
        let text = "id,race,sex,bmi,age,mbp\na,1,0,25,40,120\na,0,0,25,42,121\n";
        let path = dir.path().join("inconsistent.csv");
        std::fs::write(&path, text).unwrap();
        let err = ExternalCohortDataset::read_long_csv(&path).unwrap_err();
        assert!(err.to_string().contains("changes demographics"), "{err}");
    }

    #[test]
    fn augmentation_refuses_mismatched_fits_and_missing_columns() {
        let cohort = synthetic_cohort(10, 3, &true_beta(), [1.0, 0.05], 1.0, 59);
        let other = synthetic_cohort(9, 3, &true_beta(), [1.0, 0.05], 1.0, 61);
        let fit = degenerate_fit(&other, [0.0; NUM_FIXED_EFFECTS]);
        let dataset = analysis_dataset(&[(55.0, 1.0, 0.0)]);
        let err =
            augment_with_cmbp(&dataset, &cohort, &fit, &CmbpConfig::default()).unwrap_err();
        assert!(err.to_string().contains("does not belong"), "{err}");

        let fit = degenerate_fit(&cohort, [0.0; NUM_FIXED_EFFECTS]);
        let mut missing = analysis_dataset(&[(55.0, 1.0, 0.0)]);
        missing.baseline_names[2] = "gender".to_string();
        let err =
            augment_with_cmbp(&missing, &cohort, &fit, &CmbpConfig::default()).unwrap_err();
        assert!(err.to_string().contains("`sex`"), "{err}");
    }
}
