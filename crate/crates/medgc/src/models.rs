//! Sequential conditional models and the posterior model bank.
//!
//! Effect estimation needs one conditional model per (role, visit): the
//! time-varying confounder and mediator at each visit, and the discrete-time
//! hazard(s). [`fit_bank`] expands a dataset into person-visit tables and
//! fits a BART model to each, yielding a [`PosteriorModelBank`] whose members
//! share a common posterior-draw count so that G-computation can walk draw
//! `q` through every model coherently.
//!
//! Fitting is deterministic: each model's sampler seed is derived from the
//! bank seed and the model's identity (never from table contents or subject
//! order), and the person-visit tables themselves are canonically ordered.
//! Refitting the same data under any subject permutation or worker count
//! reproduces the bank bit for bit.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::sync::Arc;

use bart::{BartConfig, DesignMatrix, FittedBart, ModelKind};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{
    self, LongitudinalDataset, Mode, PersonVisitTable, RoleKind,
};
use crate::streams::{self, tag};
use crate::{MedgcError, Result};

/// Identity of one conditional model: its family and 1-based visit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelRole {
    /// Confounder model `L^{t_j} | history`.
    Confounder(usize),
    /// Mediator model `M^{t_j} | history`.
    Mediator(usize),
    /// Single-event hazard at visit `j`.
    Hazard(usize),
    /// Main-event hazard at visit `j` (competing mode).
    HazardMain(usize),
    /// Competing-event hazard at visit `j`, conditional on no main event.
    HazardCompeting(usize),
}

impl ModelRole {
    /// The model family.
    pub fn kind(&self) -> RoleKind {
        match self {
            ModelRole::Confounder(_) => RoleKind::Confounder,
            ModelRole::Mediator(_) => RoleKind::Mediator,
            ModelRole::Hazard(_) => RoleKind::Hazard,
            ModelRole::HazardMain(_) => RoleKind::HazardMain,
            ModelRole::HazardCompeting(_) => RoleKind::HazardCompeting,
        }
    }

    /// The 1-based visit index.
    pub fn visit(&self) -> usize {
        match self {
            ModelRole::Confounder(j)
            | ModelRole::Mediator(j)
            | ModelRole::Hazard(j)
            | ModelRole::HazardMain(j)
            | ModelRole::HazardCompeting(j) => *j,
        }
    }

    /// Stable numeric tag for RNG key derivation.
    fn stream_tag(&self) -> u64 {
        match self {
            ModelRole::Confounder(_) => 1,
            ModelRole::Mediator(_) => 2,
            ModelRole::Hazard(_) => 3,
            ModelRole::HazardMain(_) => 4,
            ModelRole::HazardCompeting(_) => 5,
        }
    }

    /// File stem used when the bank is saved to disk.
    fn file_stem(&self) -> String {
        format!("{}_{}", self.kind().to_string().replace('-', "_"), self.visit())
    }

    fn is_hazard(&self) -> bool {
        matches!(
            self,
            ModelRole::Hazard(_) | ModelRole::HazardMain(_) | ModelRole::HazardCompeting(_)
        )
    }
}

impl fmt::Display for ModelRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} model at visit {}", self.kind(), self.visit())
    }
}

/// Response type of a conditional model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResponseKind {
    /// 0/1 response; [`ConditionalModel::probability`] is defined.
    Binary,
    /// Real response; draws add residual noise around the posterior mean.
    Continuous,
}

/// One conditional distribution indexed by posterior draw.
///
/// Implementations must be deterministic functions of `(q, covariates)`
/// apart from the explicit `rng` passed to [`draw_value`]: given the same
/// draw index, covariates, and RNG state, every call reproduces the same
/// value.
///
/// [`draw_value`]: ConditionalModel::draw_value
pub trait ConditionalModel: Send + Sync {
    /// Number of posterior draws Q.
    fn num_draws(&self) -> usize;

    /// Whether the response is binary or continuous.
    fn response_kind(&self) -> ResponseKind;

    /// Samples one response value from posterior draw `q` at `covariates`.
    fn draw_value(&self, q: usize, covariates: &[f64], rng: &mut ChaCha8Rng) -> Result<f64>;

    /// Event/success probability under draw `q` at `covariates`. Fitted
    /// models keep the value strictly inside (0, 1); exactly specified
    /// models may return the boundary. Errors for continuous responses.
    fn probability(&self, q: usize, covariates: &[f64]) -> Result<f64>;

    /// Access to the underlying BART fit, when there is one (used for
    /// serialization).
    fn as_bart(&self) -> Option<&BartConditional> {
        None
    }
}

fn check_draw_index(q: usize, num_draws: usize) -> Result<()> {
    if q >= num_draws {
        return Err(MedgcError::InvalidInput(format!(
            "posterior draw index {q} out of range (Q = {num_draws})"
        )));
    }
    Ok(())
}

/// A fitted BART model acting as a conditional distribution.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BartConditional {
    fit: FittedBart,
}

impl BartConditional {
    /// Wraps a fitted BART model.
    pub fn new(fit: FittedBart) -> Self {
        BartConditional { fit }
    }

    /// The wrapped fit.
    pub fn fit(&self) -> &FittedBart {
        &self.fit
    }
}

impl ConditionalModel for BartConditional {
    fn num_draws(&self) -> usize {
        self.fit.num_draws()
    }

    fn response_kind(&self) -> ResponseKind {
        match self.fit.kind {
            ModelKind::Probit => ResponseKind::Binary,
            ModelKind::Continuous => ResponseKind::Continuous,
        }
    }

    fn draw_value(&self, q: usize, covariates: &[f64], rng: &mut ChaCha8Rng) -> Result<f64> {
        match self.fit.kind {
            ModelKind::Probit => {
                let p = self.fit.predict(q, covariates)?;
                Ok(if rng.gen::<f64>() < p { 1.0 } else { 0.0 })
            }
            ModelKind::Continuous => {
                let mean = self.fit.predict(q, covariates)?;
                let sigma = self.fit.draws[q].sigma.ok_or_else(|| {
                    MedgcError::Numeric("continuous fit without a residual-scale draw".into())
                })?;
                let standard_normal: f64 = rand_distr::StandardNormal.sample_with(rng);
                Ok(mean + sigma * standard_normal)
            }
        }
    }

    fn probability(&self, q: usize, covariates: &[f64]) -> Result<f64> {
        match self.fit.kind {
            ModelKind::Probit => Ok(self.fit.predict(q, covariates)?),
            ModelKind::Continuous => Err(MedgcError::InvalidInput(
                "probability is undefined for a continuous-response model".into(),
            )),
        }
    }

    fn as_bart(&self) -> Option<&BartConditional> {
        Some(self)
    }
}

trait SampleWith {
    fn sample_with(self, rng: &mut ChaCha8Rng) -> f64;
}

impl SampleWith for rand_distr::StandardNormal {
    fn sample_with(self, rng: &mut ChaCha8Rng) -> f64 {
        rand_distr::Distribution::sample(&self, rng)
    }
}

/// An exactly specified conditional distribution (no posterior
/// uncertainty): every draw index returns the same law. Used to inject
/// known data-generating mechanisms into G-computation.
#[derive(Clone)]
pub struct ExactConditional {
    kind: ResponseKind,
    num_draws: usize,
    /// Binary: event probability at the covariates. Continuous: mean.
    function: Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>,
    /// Residual standard deviation for continuous responses.
    sigma: f64,
}

impl fmt::Debug for ExactConditional {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ExactConditional")
            .field("kind", &self.kind)
            .field("num_draws", &self.num_draws)
            .field("sigma", &self.sigma)
            .finish_non_exhaustive()
    }
}

impl ExactConditional {
    /// An exact binary conditional: `probability` maps covariates to the
    /// event probability, which must stay inside (0, 1).
    pub fn binary(
        num_draws: usize,
        probability: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
    ) -> Self {
        ExactConditional {
            kind: ResponseKind::Binary,
            num_draws,
            function: Arc::new(probability),
            sigma: 0.0,
        }
    }

    /// An exact Gaussian conditional with the given mean function and
    /// residual standard deviation.
    pub fn continuous(
        num_draws: usize,
        mean: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
        sigma: f64,
    ) -> Self {
        ExactConditional {
            kind: ResponseKind::Continuous,
            num_draws,
            function: Arc::new(mean),
            sigma,
        }
    }
}

impl ConditionalModel for ExactConditional {
    fn num_draws(&self) -> usize {
        self.num_draws
    }

    fn response_kind(&self) -> ResponseKind {
        self.kind
    }

    fn draw_value(&self, q: usize, covariates: &[f64], rng: &mut ChaCha8Rng) -> Result<f64> {
        check_draw_index(q, self.num_draws)?;
        match self.kind {
            ResponseKind::Binary => {
                let p = (self.function)(covariates);
                Ok(if rng.gen::<f64>() < p { 1.0 } else { 0.0 })
            }
            ResponseKind::Continuous => {
                let standard_normal: f64 = rand_distr::StandardNormal.sample_with(rng);
                Ok((self.function)(covariates) + self.sigma * standard_normal)
            }
        }
    }

    fn probability(&self, q: usize, covariates: &[f64]) -> Result<f64> {
        check_draw_index(q, self.num_draws)?;
        match self.kind {
            ResponseKind::Binary => {
                let p = (self.function)(covariates);
                if !(0.0..=1.0).contains(&p) {
                    return Err(MedgcError::Numeric(format!(
                        "exact conditional produced probability {p} outside [0, 1]"
                    )));
                }
                Ok(p)
            }
            ResponseKind::Continuous => Err(MedgcError::InvalidInput(
                "probability is undefined for a continuous-response model".into(),
            )),
        }
    }
}

/// Adapter giving one visit-pooled hazard fit the per-visit covariate
/// interface: incoming visit-`j` covariates are zero-padded to the pooled
/// width before prediction.
struct PooledHazardAdapter {
    inner: Arc<dyn ConditionalModel>,
    num_visits: usize,
    num_baseline: usize,
}

impl PooledHazardAdapter {
    fn pad(&self, covariates: &[f64]) -> Result<Vec<f64>> {
        let len = covariates.len();
        if len < 1 + self.num_baseline || (len - 1 - self.num_baseline) % 3 != 0 {
            return Err(MedgcError::InvalidInput(format!(
                "hazard covariate vector of length {len} does not decompose into (t, histories, {} baseline values)",
                self.num_baseline
            )));
        }
        let h = (len - 1 - self.num_baseline) / 3;
        if h > self.num_visits - 1 {
            return Err(MedgcError::InvalidInput(format!(
                "hazard covariates carry a {h}-visit history but the grid has {} visits",
                self.num_visits
            )));
        }
        Ok(data::pooled_hazard_covariates(
            covariates[0],
            &covariates[1..1 + h],
            &covariates[1 + h..1 + 2 * h],
            &covariates[1 + 2 * h..1 + 3 * h],
            &covariates[1 + 3 * h..],
            self.num_visits,
        ))
    }
}

impl ConditionalModel for PooledHazardAdapter {
    fn num_draws(&self) -> usize {
        self.inner.num_draws()
    }

    fn response_kind(&self) -> ResponseKind {
        self.inner.response_kind()
    }

    fn draw_value(&self, q: usize, covariates: &[f64], rng: &mut ChaCha8Rng) -> Result<f64> {
        self.inner.draw_value(q, &self.pad(covariates)?, rng)
    }

    fn probability(&self, q: usize, covariates: &[f64]) -> Result<f64> {
        self.inner.probability(q, &self.pad(covariates)?)
    }

    fn as_bart(&self) -> Option<&BartConditional> {
        self.inner.as_bart()
    }
}

/// How hazard models are indexed over visits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HazardPooling {
    /// One hazard model per visit (default): each visit's model sees that
    /// visit's exact history width.
    PerVisit,
    /// A single hazard model across visits, with zero-padded histories and
    /// the visit time as a covariate.
    Pooled,
}

/// Configuration for [`fit_bank`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BankConfig {
    /// Sampler settings for continuous-response models.
    pub continuous: BartConfig,
    /// Sampler settings for binary-response models.
    pub probit: BartConfig,
    /// Master seed; per-model seeds are derived from it and the model
    /// identity.
    pub rng_seed: u64,
    /// Hazard model indexing.
    pub hazard_pooling: HazardPooling,
    /// Response-kind overrides per series (`"l"` or `"m"`), replacing the
    /// observed-value auto-detection.
    #[serde(default)]
    pub response_overrides: BTreeMap<String, ResponseKind>,
}

impl Default for BankConfig {
    fn default() -> Self {
        let mut continuous = BartConfig::default_continuous();
        continuous.num_burn = 1000;
        continuous.num_keep = 1000;
        continuous.thinning = 1;
        let mut probit = BartConfig::default_probit();
        probit.num_burn = 1000;
        probit.num_keep = 1000;
        probit.thinning = 1;
        BankConfig {
            continuous,
            probit,
            rng_seed: 0,
            hazard_pooling: HazardPooling::PerVisit,
            response_overrides: BTreeMap::new(),
        }
    }
}

impl BankConfig {
    /// Validates the sampler settings and the draw-count agreement between
    /// the continuous and probit templates.
    pub fn validate(&self) -> Result<()> {
        self.continuous.validate().map_err(MedgcError::Bart)?;
        self.probit.validate().map_err(MedgcError::Bart)?;
        if self.continuous.num_keep != self.probit.num_keep {
            return Err(MedgcError::InvalidInput(format!(
                "continuous and probit templates must keep the same number of draws; got {} and {}",
                self.continuous.num_keep, self.probit.num_keep
            )));
        }
        Ok(())
    }

    /// Number of posterior draws Q every bank member will carry.
    pub fn num_draws(&self) -> usize {
        self.continuous.num_keep
    }
}

/// The complete set of fitted conditional models for one dataset: every
/// (role, visit) needed by G-computation, all sharing the same posterior
/// draw count.
pub struct PosteriorModelBank {
    /// Analysis mode the bank was fitted under.
    pub mode: Mode,
    /// Visit grid of the source dataset.
    pub visit_grid: Vec<f64>,
    /// Baseline covariate names of the source dataset.
    pub baseline_names: Vec<String>,
    /// Shared posterior draw count Q.
    pub num_draws: usize,
    /// Hazard model indexing used at fit time.
    pub hazard_pooling: HazardPooling,
    models: BTreeMap<ModelRole, Arc<dyn ConditionalModel>>,
}

impl fmt::Debug for PosteriorModelBank {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PosteriorModelBank")
            .field("mode", &self.mode)
            .field("visit_grid", &self.visit_grid)
            .field("num_draws", &self.num_draws)
            .field("hazard_pooling", &self.hazard_pooling)
            .field("roles", &self.models.keys().collect::<Vec<_>>())
            .finish()
    }
}

/// The roles a bank must hold for `mode` on a `num_visits`-visit grid;
/// confounder and mediator at every visit, plus the mode's hazard(s).
pub fn required_roles(mode: Mode, num_visits: usize) -> Vec<ModelRole> {
    let mut roles = Vec::new();
    for j in 1..=num_visits {
        roles.push(ModelRole::Confounder(j));
        roles.push(ModelRole::Mediator(j));
        match mode {
            Mode::Single => roles.push(ModelRole::Hazard(j)),
            Mode::Competing => {
                roles.push(ModelRole::HazardMain(j));
                roles.push(ModelRole::HazardCompeting(j));
            }
        }
    }
    roles
}

impl PosteriorModelBank {
    /// Assembles a bank, enforcing draw-count agreement and mode
    /// consistency of the supplied roles.
    pub fn new(
        mode: Mode,
        visit_grid: Vec<f64>,
        baseline_names: Vec<String>,
        hazard_pooling: HazardPooling,
        models: BTreeMap<ModelRole, Arc<dyn ConditionalModel>>,
    ) -> Result<Self> {
        let mut num_draws = None;
        for (role, model) in &models {
            let mode_consistent = match role {
                ModelRole::Hazard(_) => mode == Mode::Single,
                ModelRole::HazardMain(_) | ModelRole::HazardCompeting(_) => mode == Mode::Competing,
                _ => true,
            };
            if !mode_consistent {
                return Err(MedgcError::InvalidInput(format!(
                    "{role} does not belong in a {mode} bank"
                )));
            }
            if role.visit() == 0 || role.visit() > visit_grid.len() {
                return Err(MedgcError::InvalidInput(format!(
                    "{role} lies outside the {}-visit grid",
                    visit_grid.len()
                )));
            }
            match num_draws {
                None => num_draws = Some(model.num_draws()),
                Some(q) if q != model.num_draws() => {
                    return Err(MedgcError::InvalidInput(format!(
                        "bank members disagree on the draw count: {} has {}, expected {q}",
                        role,
                        model.num_draws()
                    )))
                }
                _ => {}
            }
        }
        let num_draws = num_draws
            .ok_or_else(|| MedgcError::InvalidInput("a model bank cannot be empty".into()))?;
        Ok(PosteriorModelBank {
            mode,
            visit_grid,
            baseline_names,
            num_draws,
            hazard_pooling,
            models,
        })
    }

    /// Number of grid visits J.
    pub fn num_visits(&self) -> usize {
        self.visit_grid.len()
    }

    /// The model for `role`, or an error naming the missing role.
    pub fn model(&self, role: &ModelRole) -> Result<&Arc<dyn ConditionalModel>> {
        self.models
            .get(role)
            .ok_or_else(|| MedgcError::InvalidInput(format!("bank has no {role}")))
    }

    /// All (role, model) pairs in canonical role order.
    pub fn iter(&self) -> impl Iterator<Item = (&ModelRole, &Arc<dyn ConditionalModel>)> {
        self.models.iter()
    }

    /// Number of models held.
    pub fn len(&self) -> usize {
        self.models.len()
    }

    /// True when the bank holds no models.
    pub fn is_empty(&self) -> bool {
        self.models.is_empty()
    }

    /// Verifies that every role required for `mode` is present.
    pub fn check_complete(&self) -> Result<()> {
        for role in required_roles(self.mode, self.num_visits()) {
            self.model(&role)?;
        }
        Ok(())
    }
}

fn detect_response_kind(role: &ModelRole, responses: &[f64], config: &BankConfig) -> ResponseKind {
    if role.is_hazard() {
        return ResponseKind::Binary;
    }
    let series = match role.kind() {
        RoleKind::Confounder => "l",
        RoleKind::Mediator => "m",
        _ => unreachable!("hazards handled above"),
    };
    if let Some(kind) = config.response_overrides.get(series) {
        return *kind;
    }
    if responses.iter().all(|v| *v == 0.0 || *v == 1.0) {
        ResponseKind::Binary
    } else {
        ResponseKind::Continuous
    }
}

fn fit_one(
    role: &ModelRole,
    x: DesignMatrix,
    responses: Vec<f64>,
    kind: ResponseKind,
    names: Vec<String>,
    config: &BankConfig,
) -> Result<FittedBart> {
    if x.num_rows() == 0 {
        return Err(MedgcError::EmptyTable { role: *role });
    }
    let seed = streams::derive_seed(&[
        config.rng_seed,
        tag::MODEL_FIT,
        role.stream_tag(),
        role.visit() as u64,
    ]);
    let mut fit = match kind {
        ResponseKind::Binary => {
            let bart_config = config.probit.clone().with_seed(seed);
            bart::fit_probit(&x, &responses, &bart_config)?
        }
        ResponseKind::Continuous => {
            let bart_config = config.continuous.clone().with_seed(seed);
            bart::fit_continuous(&x, &responses, &bart_config)?
        }
    };
    fit.covariate_names = names;
    Ok(fit)
}

/// Fits the full model bank for `mode`: one confounder and one mediator
/// model per visit, plus per-visit (or pooled) hazard models. Errors when
/// any required table has no rows, naming the role. See the module
/// documentation for the determinism contract.
pub fn fit_bank(
    dataset: &LongitudinalDataset,
    mode: Mode,
    config: &BankConfig,
) -> Result<PosteriorModelBank> {
    fit_bank_filtered(dataset, mode, config, |_| true)
}

/// As [`fit_bank`], fitting only the roles `keep` accepts. Skipped roles
/// are simply absent from the bank; querying them errors. Intended for
/// callers that provably never query certain roles (for example,
/// G-computation never queries covariate models at the final visit).
pub fn fit_bank_filtered(
    dataset: &LongitudinalDataset,
    mode: Mode,
    config: &BankConfig,
    keep: impl Fn(&ModelRole) -> bool,
) -> Result<PosteriorModelBank> {
    config.validate()?;
    let num_visits = dataset.num_visits();
    let covariate_tables = data::build_covariate_tables(dataset)?;
    let hazard_tables: Vec<PersonVisitTable> = match mode {
        Mode::Single => vec![data::build_hazard_table(dataset)?],
        Mode::Competing => {
            let (main, competing) = data::build_competing_tables(dataset)?;
            vec![main, competing]
        }
    };

    // Assemble every (role, design, responses, kind, names) job first, so
    // fitting order cannot influence results.
    struct Job {
        role: ModelRole,
        x: DesignMatrix,
        responses: Vec<f64>,
        kind: ResponseKind,
        names: Vec<String>,
    }
    let mut jobs: Vec<Job> = Vec::new();
    let mut pooled_jobs: Vec<Job> = Vec::new();
    let baseline_names = &dataset.baseline_names;

    for role in required_roles(mode, num_visits) {
        if !keep(&role) {
            continue;
        }
        let j = role.visit();
        match role.kind() {
            RoleKind::Confounder | RoleKind::Mediator => {
                let table = data::covariate_table(&covariate_tables, &role)
                    .expect("built for every visit");
                let (x, responses) = table.design_for_visit(j)?;
                if x.num_rows() == 0 {
                    return Err(MedgcError::EmptyTable { role });
                }
                let kind = detect_response_kind(&role, &responses, config);
                let names = match role.kind() {
                    RoleKind::Confounder => data::confounder_covariate_names(baseline_names, j),
                    _ => data::mediator_covariate_names(baseline_names, j),
                };
                jobs.push(Job { role, x, responses, kind, names });
            }
            RoleKind::Hazard | RoleKind::HazardMain | RoleKind::HazardCompeting => {
                let table = hazard_tables
                    .iter()
                    .find(|t| t.role_kind == role.kind())
                    .expect("built for the mode");
                match config.hazard_pooling {
                    HazardPooling::PerVisit => {
                        let (x, responses) = table.design_for_visit(j)?;
                        if x.num_rows() == 0 {
                            return Err(MedgcError::EmptyTable { role });
                        }
                        jobs.push(Job {
                            role,
                            x,
                            responses,
                            kind: ResponseKind::Binary,
                            names: data::hazard_covariate_names(baseline_names, j),
                        });
                    }
                    HazardPooling::Pooled => {
                        // One fit per hazard family, keyed at visit 1.
                        if j == 1 {
                            let (x, responses) = table.pooled_design(dataset)?;
                            if x.num_rows() == 0 {
                                return Err(MedgcError::EmptyTable { role });
                            }
                            pooled_jobs.push(Job {
                                role,
                                x,
                                responses,
                                kind: ResponseKind::Binary,
                                names: data::pooled_hazard_covariate_names(
                                    baseline_names,
                                    num_visits,
                                ),
                            });
                        }
                    }
                }
            }
        }
    }

    let fit_jobs = |jobs: Vec<Job>| -> Result<Vec<(ModelRole, Arc<dyn ConditionalModel>)>> {
        jobs.into_par_iter()
            .map(|job| {
                let fit = fit_one(&job.role, job.x, job.responses, job.kind, job.names, config)?;
                let model: Arc<dyn ConditionalModel> = Arc::new(BartConditional::new(fit));
                Ok((job.role, model))
            })
            .collect()
    };

    let mut models: BTreeMap<ModelRole, Arc<dyn ConditionalModel>> =
        fit_jobs(jobs)?.into_iter().collect();
    for (role, fitted) in fit_jobs(pooled_jobs)? {
        // Register the shared fit under every visit of its hazard family.
        let adapter: Arc<dyn ConditionalModel> = Arc::new(PooledHazardAdapter {
            inner: fitted,
            num_visits,
            num_baseline: baseline_names.len(),
        });
        for j in 1..=num_visits {
            let visit_role = match role {
                ModelRole::Hazard(_) => ModelRole::Hazard(j),
                ModelRole::HazardMain(_) => ModelRole::HazardMain(j),
                ModelRole::HazardCompeting(_) => ModelRole::HazardCompeting(j),
                _ => unreachable!("pooled jobs are hazards"),
            };
            if keep(&visit_role) {
                models.insert(visit_role, Arc::clone(&adapter));
            }
        }
    }

    PosteriorModelBank::new(
        mode,
        dataset.visit_grid.clone(),
        dataset.baseline_names.clone(),
        config.hazard_pooling,
        models,
    )
}

// ---------------------------------------------------------------------------
// Persistence
// ---------------------------------------------------------------------------

/// Manifest entry describing one saved model.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct ManifestModel {
    role: ModelRole,
    response: ResponseKind,
    /// File holding the fit, relative to the bank directory. Pooled hazard
    /// visits share a file.
    file: String,
}

/// On-disk description of a saved bank.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct BankManifest {
    format_version: u32,
    mode: Mode,
    visit_grid: Vec<f64>,
    baseline_names: Vec<String>,
    num_draws: usize,
    hazard_pooling: HazardPooling,
    models: Vec<ManifestModel>,
}

const BANK_FORMAT_VERSION: u32 = 1;
const MANIFEST_FILE: &str = "bank.json";

/// Saves a bank of BART fits to `dir` as a manifest plus one JSON file per
/// distinct fit (pooled hazard visits share their file). Errors when a
/// member is not a BART fit — exact and plug-in models have no posterior to
/// serialize.
pub fn save_bank(bank: &PosteriorModelBank, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut manifest_models = Vec::with_capacity(bank.len());
    let mut written: BTreeMap<usize, String> = BTreeMap::new(); // fit address → file
    for (role, model) in bank.iter() {
        let bart_model = model.as_bart().ok_or_else(|| {
            MedgcError::InvalidInput(format!("{role} is not a BART fit and cannot be saved"))
        })?;
        let address = bart_model as *const BartConditional as usize;
        let file = match written.get(&address) {
            Some(file) => file.clone(),
            None => {
                let file = format!("{}.json", role.file_stem());
                bart_model.fit().save(&dir.join(&file))?;
                written.insert(address, file.clone());
                file
            }
        };
        manifest_models.push(ManifestModel {
            role: *role,
            response: model.response_kind(),
            file,
        });
    }
    let manifest = BankManifest {
        format_version: BANK_FORMAT_VERSION,
        mode: bank.mode,
        visit_grid: bank.visit_grid.clone(),
        baseline_names: bank.baseline_names.clone(),
        num_draws: bank.num_draws,
        hazard_pooling: bank.hazard_pooling,
        models: manifest_models,
    };
    let json = serde_json::to_string_pretty(&manifest)?;
    std::fs::write(dir.join(MANIFEST_FILE), json)?;
    Ok(())
}

/// Loads a bank saved by [`save_bank`]. The loaded bank reproduces the
/// saved one exactly: fits round-trip losslessly.
pub fn load_bank(dir: &Path) -> Result<PosteriorModelBank> {
    let manifest_path = dir.join(MANIFEST_FILE);
    let json = std::fs::read_to_string(&manifest_path).map_err(|e| {
        MedgcError::Schema(format!("cannot read {}: {e}", manifest_path.display()))
    })?;
    let manifest: BankManifest = serde_json::from_str(&json)?;
    if manifest.format_version != BANK_FORMAT_VERSION {
        return Err(MedgcError::Schema(format!(
            "bank format version {} is not supported (expected {BANK_FORMAT_VERSION})",
            manifest.format_version
        )));
    }
    let mut loaded: BTreeMap<String, Arc<dyn ConditionalModel>> = BTreeMap::new();
    let mut models: BTreeMap<ModelRole, Arc<dyn ConditionalModel>> = BTreeMap::new();
    let num_visits = manifest.visit_grid.len();
    for entry in &manifest.models {
        let model = match loaded.get(&entry.file) {
            Some(model) => Arc::clone(model),
            None => {
                let fit = FittedBart::load(&dir.join(&entry.file))?;
                let base: Arc<dyn ConditionalModel> = Arc::new(BartConditional::new(fit));
                let model: Arc<dyn ConditionalModel> = if entry.role.is_hazard()
                    && manifest.hazard_pooling == HazardPooling::Pooled
                {
                    Arc::new(PooledHazardAdapter {
                        inner: base,
                        num_visits,
                        num_baseline: manifest.baseline_names.len(),
                    })
                } else {
                    base
                };
                loaded.insert(entry.file.clone(), Arc::clone(&model));
                model
            }
        };
        models.insert(entry.role, model);
    }
    let bank = PosteriorModelBank::new(
        manifest.mode,
        manifest.visit_grid,
        manifest.baseline_names,
        manifest.hazard_pooling,
        models,
    )?;
    if bank.num_draws != manifest.num_draws {
        return Err(MedgcError::Schema(format!(
            "manifest declares {} draws but the fits carry {}",
            manifest.num_draws, bank.num_draws
        )));
    }
    Ok(bank)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{BaselineCovariates, SubjectRecord};
    use crate::streams::stream;

    /// Tiny sampler settings so bank fits stay fast in tests.
    fn tiny_config(seed: u64) -> BankConfig {
        let mut config = BankConfig::default();
        for template in [&mut config.continuous, &mut config.probit] {
            template.num_trees = 10;
            template.num_burn = 20;
            template.num_keep = 8;
            template.num_cutpoints = 20;
        }
        config.rng_seed = seed;
        config
    }

    fn toy_subject(id: usize, event_time: f64, event: bool, cause: Option<u8>) -> SubjectRecord {
        let grid = [1.0, 2.0, 3.0];
        let bit = |k: usize| ((id >> k) & 1) as f64;
        SubjectRecord {
            id: format!("s{id:03}"),
            baseline: BaselineCovariates { values: vec![40.0 + id as f64] },
            z: grid.iter().enumerate().map(|(k, &t)| (t < event_time).then(|| bit(k))).collect(),
            l: grid
                .iter()
                .enumerate()
                .map(|(k, &t)| (t < event_time).then(|| 0.3 * id as f64 + k as f64))
                .collect(),
            m: grid
                .iter()
                .enumerate()
                .map(|(k, &t)| (t < event_time).then(|| 0.1 * id as f64 - 0.5 * k as f64))
                .collect(),
            event_time,
            event,
            cause,
        }
    }

    fn toy_dataset(num_subjects: usize, competing: bool) -> LongitudinalDataset {
        let subjects = (0..num_subjects)
            .map(|id| {
                // Deterministic mix of exits: most survive past the grid,
                // some die in interval 2 or 3, some are censored.
                match id % 5 {
                    0 => toy_subject(id, 1.5, true, competing.then_some(1)),
                    1 => toy_subject(id, 2.5, true, competing.then_some(2)),
                    2 => toy_subject(id, 2.8, false, None),
                    _ => toy_subject(id, 3.5, false, None),
                }
            })
            .collect();
        LongitudinalDataset::new(vec![1.0, 2.0, 3.0], vec!["age".to_string()], subjects).unwrap()
    }

    #[test]
    fn single_mode_bank_holds_nine_models_for_three_visits() {
        let data = toy_dataset(20, false);
        let bank = fit_bank(&data, Mode::Single, &tiny_config(7)).unwrap();
        assert_eq!(bank.len(), 9);
        bank.check_complete().unwrap();
        assert_eq!(bank.num_draws, 8);
        for j in 1..=3 {
            assert_eq!(
                bank.model(&ModelRole::Hazard(j)).unwrap().response_kind(),
                ResponseKind::Binary
            );
            // l and m are continuous in the toy data.
            assert_eq!(
                bank.model(&ModelRole::Confounder(j)).unwrap().response_kind(),
                ResponseKind::Continuous
            );
        }
    }

    #[test]
    fn competing_mode_bank_holds_twelve_models_for_three_visits() {
        let data = toy_dataset(20, true);
        let bank = fit_bank(&data, Mode::Competing, &tiny_config(7)).unwrap();
        assert_eq!(bank.len(), 12);
        bank.check_complete().unwrap();
        assert!(bank.model(&ModelRole::Hazard(1)).is_err());
    }

    #[test]
    fn empty_covariate_table_error_names_the_role() {
        // Every subject exits in the first interval: no one is under
        // observation at visit 2.
        let subjects = (0..6).map(|id| toy_subject(id, 0.5, true, None)).collect();
        let data =
            LongitudinalDataset::new(vec![1.0, 2.0, 3.0], vec!["age".to_string()], subjects)
                .unwrap();
        let err = fit_bank(&data, Mode::Single, &tiny_config(7)).unwrap_err();
        match err {
            MedgcError::EmptyTable { role } => assert_eq!(role, ModelRole::Confounder(1)),
            other => panic!("expected an empty-table error, got {other}"),
        }
    }

    #[test]
    fn refitting_reordered_subjects_reproduces_the_bank_bit_for_bit() {
        let data = toy_dataset(15, false);
        let mut reversed_subjects = data.subjects.clone();
        reversed_subjects.reverse();
        let reversed = LongitudinalDataset::new(
            data.visit_grid.clone(),
            data.baseline_names.clone(),
            reversed_subjects,
        )
        .unwrap();

        let config = tiny_config(11);
        let bank_a = fit_bank(&data, Mode::Single, &config).unwrap();
        let bank_b = fit_bank(&reversed, Mode::Single, &config).unwrap();
        for (role, model) in bank_a.iter() {
            let fit_a = model.as_bart().unwrap().fit().to_json().unwrap();
            let fit_b = bank_b.model(role).unwrap().as_bart().unwrap().fit().to_json().unwrap();
            assert_eq!(fit_a, fit_b, "{role} differs across subject orderings");
        }
    }

    #[test]
    fn exact_models_ignore_the_draw_index() {
        let model = ExactConditional::binary(1000, |covs| 0.25 + 0.125 * covs[0]);
        let x = [1.0, 3.0];
        let p_first = model.probability(0, &x).unwrap();
        let p_last = model.probability(999, &x).unwrap();
        assert_eq!(p_first, p_last);
        assert_eq!(p_first, 0.375);
        assert!(model.probability(1000, &x).is_err());
    }

    #[test]
    fn exact_continuous_model_rejects_probability_queries() {
        let model = ExactConditional::continuous(5, |_| 1.0, 0.5);
        assert!(model.probability(0, &[0.0]).is_err());
        let mut rng = stream(&[1]);
        let draw = model.draw_value(0, &[0.0], &mut rng).unwrap();
        assert!(draw.is_finite());
    }

    #[test]
    fn draws_are_deterministic_given_the_rng_state() {
        let data = toy_dataset(15, false);
        let bank = fit_bank(&data, Mode::Single, &tiny_config(3)).unwrap();
        let model = bank.model(&ModelRole::Mediator(2)).unwrap();
        let covs_len = 2 + 2 + 1 + 1; // z1,z2 + l1,l2 + m1 + baseline
        let covs = vec![0.5; covs_len];
        let a = model.draw_value(3, &covs, &mut stream(&[42, 7])).unwrap();
        let b = model.draw_value(3, &covs, &mut stream(&[42, 7])).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn pooled_hazards_share_one_fit_across_visits() {
        let data = toy_dataset(20, false);
        let mut config = tiny_config(5);
        config.hazard_pooling = HazardPooling::Pooled;
        let bank = fit_bank(&data, Mode::Single, &config).unwrap();
        assert_eq!(bank.len(), 9);
        let h1 = bank.model(&ModelRole::Hazard(1)).unwrap();
        let h3 = bank.model(&ModelRole::Hazard(3)).unwrap();
        assert!(Arc::ptr_eq(h1, h3), "pooled visits must share the fit");
        // The adapter accepts each visit's natural covariate width.
        let p1 = h1.probability(0, &[1.0, 41.0]).unwrap();
        let p3 = h3
            .probability(0, &[3.0, 1.0, 0.0, 0.5, 1.5, -0.2, 0.3, 41.0])
            .unwrap();
        assert!(p1 > 0.0 && p1 < 1.0);
        assert!(p3 > 0.0 && p3 < 1.0);
    }

    #[test]
    fn saved_bank_reloads_with_identical_predictions() {
        let data = toy_dataset(15, false);
        let bank = fit_bank(&data, Mode::Single, &tiny_config(13)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        save_bank(&bank, dir.path()).unwrap();
        let reloaded = load_bank(dir.path()).unwrap();
        assert_eq!(reloaded.mode, bank.mode);
        assert_eq!(reloaded.num_draws, bank.num_draws);
        assert_eq!(reloaded.len(), bank.len());
        let covs = [2.0, 1.0, 0.7, -0.1, 42.0];
        for role in [ModelRole::Hazard(2)] {
            let before = bank.model(&role).unwrap().probability(3, &covs).unwrap();
            let after = reloaded.model(&role).unwrap().probability(3, &covs).unwrap();
            assert_eq!(before, after);
        }
    }

    #[test]
    fn saved_pooled_bank_writes_one_hazard_file() {
        let data = toy_dataset(20, false);
        let mut config = tiny_config(5);
        config.hazard_pooling = HazardPooling::Pooled;
        let bank = fit_bank(&data, Mode::Single, &config).unwrap();
        let dir = tempfile::tempdir().unwrap();
        save_bank(&bank, dir.path()).unwrap();
        let hazard_files: Vec<String> = std::fs::read_dir(dir.path())
            .unwrap()
            .filter_map(|e| e.ok())
            .map(|e| e.file_name().to_string_lossy().into_owned())
            .filter(|name| name.starts_with("hazard"))
            .collect();
        assert_eq!(hazard_files, vec!["hazard_1.json".to_string()]);
        let reloaded = load_bank(dir.path()).unwrap();
        let h1 = reloaded.model(&ModelRole::Hazard(1)).unwrap();
        let h2 = reloaded.model(&ModelRole::Hazard(2)).unwrap();
        assert!(Arc::ptr_eq(h1, h2));
    }

    #[test]
    fn response_override_forces_the_declared_kind() {
        let mut data = toy_dataset(20, false);
        // Make every observed l binary so auto-detection would say Binary.
        for s in &mut data.subjects {
            for v in s.l.iter_mut().flatten() {
                *v = if *v > 1.0 { 1.0 } else { 0.0 };
            }
        }
        let mut config = tiny_config(9);
        config.response_overrides.insert("l".into(), ResponseKind::Continuous);
        let bank = fit_bank(&data, Mode::Single, &config).unwrap();
        assert_eq!(
            bank.model(&ModelRole::Confounder(1)).unwrap().response_kind(),
            ResponseKind::Continuous
        );
        // Without the override the same data auto-detects as binary.
        let auto = fit_bank(&data, Mode::Single, &tiny_config(9)).unwrap();
        assert_eq!(
            auto.model(&ModelRole::Confounder(1)).unwrap().response_kind(),
            ResponseKind::Binary
        );
    }
}
