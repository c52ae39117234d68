//! Posterior G-computation of interventional direct and indirect effects.
//!
//! For a regime pair (z, z*) the engine simulates, per posterior draw `q`,
//! three counterfactual arms indexed by which regime drives the
//! outcome/confounder path and which drives the mediator path:
//!
//! | arm | confounders and hazard | mediator |
//! |-----|------------------------|----------|
//! | 0   | z                      | z        |
//! | 1   | z                      | z*       |
//! | 2   | z*                     | z*       |
//!
//! Each arm evolves `C*` trajectories: at visit `j` the discrete-time
//! hazard is evaluated for every surviving trajectory (its mean over the
//! at-risk set is the Rao-Blackwellized hazard estimate), survival is
//! simulated, and survivors draw the next confounder and mediator values
//! from their posterior conditionals. Survival curves and, in competing
//! mode, cause-specific cumulative incidence curves follow by the discrete
//! product/sum formulas. [`effects`] turns the three arms into posterior
//! samples of the interventional direct (IDE), indirect (IIE), and total
//! (TE) effects with `TE = IDE + IIE` holding exactly per sample.
//!
//! # Determinism and common random numbers
//!
//! Every random quantity comes from a counter-style stream keyed by
//! `(seed, purpose, q, trajectory, visit)` — never by arm or worker. The
//! three arms clone each stream, so coincident regimes produce bitwise
//! identical trajectories (effects exactly zero), and results are
//! bit-reproducible at any thread count. Floating-point reductions fold
//! fixed-size trajectory chunks in index order with compensated summation.

use std::sync::Arc;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::Distribution;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{self, BaselineCovariates, LongitudinalDataset, Mode};
use crate::models::{ConditionalModel, ModelRole, PosteriorModelBank};
use crate::streams::{self, tag};
use crate::{MedgcError, Result};

/// The pair of static exposure regimes being contrasted. Entries are per
/// visit (0 or 1) and cover visits `1..J − 1`: the hazard at visit `j`
/// conditions on exposures through visit `j − 1`, so the final visit's
/// exposure never enters the estimands.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegimePair {
    /// Exposure path z (drives the confounder and outcome models in arms
    /// 0–1 and the mediator model in arm 0).
    pub z: Vec<f64>,
    /// Exposure path z* (drives the mediator model in arms 1–2 and
    /// everything in arm 2).
    pub z_star: Vec<f64>,
}

impl RegimePair {
    /// Builds a regime pair, checking equal lengths and 0/1 entries.
    pub fn new(z: Vec<f64>, z_star: Vec<f64>) -> Result<Self> {
        if z.len() != z_star.len() {
            return Err(MedgcError::InvalidInput(format!(
                "regimes must have equal lengths; got {} and {}",
                z.len(),
                z_star.len()
            )));
        }
        for (name, regime) in [("z", &z), ("z*", &z_star)] {
            if regime.iter().any(|v| *v != 0.0 && *v != 1.0) {
                return Err(MedgcError::InvalidInput(format!(
                    "regime {name} has entries outside {{0, 1}}: {regime:?}"
                )));
            }
        }
        Ok(RegimePair { z, z_star })
    }

    /// The constant contrast "always exposed vs never exposed" over
    /// `num_visits` grid visits.
    pub fn always_versus_never(num_visits: usize) -> Self {
        let horizon = num_visits.saturating_sub(1);
        RegimePair { z: vec![1.0; horizon], z_star: vec![0.0; horizon] }
    }

    /// Number of exposure visits covered (J − 1).
    pub fn horizon(&self) -> usize {
        self.z.len()
    }
}

/// How baseline covariate vectors are drawn for simulated trajectories.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineSampling {
    /// Bayesian bootstrap: per posterior draw, Dirichlet(1, …, 1) weights
    /// over the observed baselines, then weighted picks — propagating
    /// uncertainty in the baseline distribution.
    DirichletBootstrap,
    /// Uniform picks from the observed baselines (no weight uncertainty);
    /// targets the empirical baseline law exactly, which is what
    /// ground-truth computations need.
    EmpiricalUniform,
}

/// One age stratum `[lower, upper)` on baseline age.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgeStratum {
    /// Inclusive lower bound.
    pub lower: f64,
    /// Exclusive upper bound.
    pub upper: f64,
}

impl std::fmt::Display for AgeStratum {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "[{}, {})", self.lower, self.upper)
    }
}

/// G-computation settings.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GcompConfig {
    /// Number of simulated trajectories per posterior draw and arm (C*).
    pub num_trajectories: usize,
    /// Credible-interval level for effect summaries (e.g. 0.95).
    pub level: f64,
    /// Baseline sampling scheme.
    pub baseline_sampling: BaselineSampling,
    /// Optional age strata for [`run_age_stratified`].
    #[serde(default)]
    pub age_strata: Option<Vec<AgeStratum>>,
    /// Master seed for the simulation streams.
    pub rng_seed: u64,
}

impl Default for GcompConfig {
    fn default() -> Self {
        GcompConfig {
            num_trajectories: 1000,
            level: 0.95,
            baseline_sampling: BaselineSampling::DirichletBootstrap,
            age_strata: None,
            rng_seed: 0,
        }
    }
}

impl GcompConfig {
    /// Validates the trajectory count and interval level.
    pub fn validate(&self) -> Result<()> {
        if self.num_trajectories == 0 {
            return Err(MedgcError::InvalidInput(
                "the trajectory count C* must be at least 1".into(),
            ));
        }
        if !(self.level > 0.0 && self.level < 1.0) {
            return Err(MedgcError::InvalidInput(format!(
                "interval level must lie in (0, 1); got {}",
                self.level
            )));
        }
        Ok(())
    }
}

const NUM_ARMS: usize = 3;
const CHUNK_SIZE: usize = 1024;

/// Human-readable arm labels, in arm order.
pub const ARM_LABELS: [&str; NUM_ARMS] = ["z,z", "z,z*", "z*,z*"];

/// Posterior curves of one counterfactual arm; outer index is the
/// posterior draw `q`, inner index the visit (0-based, visit `j = index + 1`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmCurves {
    /// Discrete-time hazard 𝒫(t_j) (single mode) or main-event hazard
    /// 𝒫⁽¹⁾(t_j) (competing mode).
    pub hazard_main: Vec<Vec<f64>>,
    /// Competing-event hazard 𝒫⁽²⁾(t_j); competing mode only.
    pub hazard_competing: Option<Vec<Vec<f64>>>,
    /// Survival S(t_j), or overall event-free survival S̃(t_j) in
    /// competing mode.
    pub survival: Vec<Vec<f64>>,
    /// Main-event cumulative incidence F⁽¹⁾(t_j); competing mode only.
    pub cif_main: Option<Vec<Vec<f64>>>,
    /// Competing-event cumulative incidence F⁽²⁾(t_j); competing mode only.
    pub cif_competing: Option<Vec<Vec<f64>>>,
}

/// Full posterior output of one G-computation run: three arms of curves
/// over the visit grid, `num_draws` posterior samples each.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GcompPosterior {
    /// Analysis mode.
    pub mode: Mode,
    /// Visit grid `t_1 … t_J`.
    pub visit_grid: Vec<f64>,
    /// The contrasted regimes.
    pub regimes: RegimePair,
    /// Posterior draw count Q.
    pub num_draws: usize,
    /// Arm curves in the order of [`ARM_LABELS`]: (z,z), (z,z*), (z*,z*).
    pub arms: Vec<ArmCurves>,
}

// ---------------------------------------------------------------------------
// Bayesian bootstrap
// ---------------------------------------------------------------------------

/// Neumaier-compensated accumulator: keeps reduction error at O(ε)
/// independent of the number of terms.
#[derive(Debug, Clone, Copy, Default)]
struct Compensated {
    sum: f64,
    correction: f64,
}

impl Compensated {
    fn add(&mut self, value: f64) {
        let t = self.sum + value;
        if self.sum.abs() >= value.abs() {
            self.correction += (self.sum - t) + value;
        } else {
            self.correction += (value - t) + self.sum;
        }
        self.sum = t;
    }

    fn merge(&mut self, other: Compensated) {
        self.add(other.sum);
        self.add(other.correction);
    }

    fn total(self) -> f64 {
        self.sum + self.correction
    }
}

/// Cumulative Dirichlet(1, …, 1) weights via normalized Exp(1) gaps; the
/// final entry is exactly 1.
fn dirichlet_cumulative(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let gaps: Vec<f64> = (0..n).map(|_| rand_distr::Exp1.sample(rng)).collect();
    let total: f64 = gaps.iter().sum();
    let mut cumulative = Vec::with_capacity(n);
    let mut running = 0.0;
    for gap in &gaps {
        running += gap;
        cumulative.push(running / total);
    }
    if let Some(last) = cumulative.last_mut() {
        *last = 1.0;
    }
    cumulative
}

fn uniform_cumulative(n: usize) -> Vec<f64> {
    (1..=n).map(|i| i as f64 / n as f64).collect()
}

/// Index of the weight cell containing `u ∈ [0, 1)`.
fn pick_index(cumulative: &[f64], u: f64) -> usize {
    cumulative.partition_point(|&edge| edge <= u).min(cumulative.len() - 1)
}

/// Bayesian-bootstrap resampling of `num_baselines` items: draws one
/// Dirichlet(1, …, 1) weight vector from `rng`, then `num_picks` weighted
/// picks. With a single item every pick is index 0 exactly (the Dirichlet
/// weight is the constant 1).
pub fn bayesian_bootstrap(
    num_baselines: usize,
    num_picks: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<usize>> {
    if num_baselines == 0 {
        return Err(MedgcError::InvalidInput("cannot bootstrap zero baselines".into()));
    }
    let cumulative = dirichlet_cumulative(num_baselines, rng);
    Ok((0..num_picks).map(|_| pick_index(&cumulative, rng.gen::<f64>())).collect())
}

// ---------------------------------------------------------------------------
// The simulation engine
// ---------------------------------------------------------------------------

/// Models resolved per visit so the hot loop never touches the role map.
struct Engine<'a> {
    mode: Mode,
    visit_grid: &'a [f64],
    baselines: &'a [BaselineCovariates],
    /// Arm k = (outcome/confounder regime, mediator regime).
    arms: [(&'a [f64], &'a [f64]); NUM_ARMS],
    hazard_main: Vec<Arc<dyn ConditionalModel>>,
    hazard_competing: Vec<Arc<dyn ConditionalModel>>,
    confounder: Vec<Arc<dyn ConditionalModel>>,
    mediator: Vec<Arc<dyn ConditionalModel>>,
    num_draws: usize,
    config: &'a GcompConfig,
}

/// Per-arm hazard curves of one posterior draw, visit-indexed.
struct DrawCurves {
    /// `[arm][visit]`.
    p_main: [Vec<f64>; NUM_ARMS],
    p_competing: [Vec<f64>; NUM_ARMS],
}

/// Chunk-level accumulator; indices flatten `(arm, visit)` as
/// `arm * num_visits + visit_index`.
struct ChunkSums {
    p_main: Vec<Compensated>,
    p_competing: Vec<Compensated>,
    at_risk: Vec<u64>,
}

impl ChunkSums {
    fn new(cells: usize) -> Self {
        ChunkSums {
            p_main: vec![Compensated::default(); cells],
            p_competing: vec![Compensated::default(); cells],
            at_risk: vec![0; cells],
        }
    }

    fn merge(&mut self, other: &ChunkSums) {
        for (a, b) in self.p_main.iter_mut().zip(&other.p_main) {
            a.merge(*b);
        }
        for (a, b) in self.p_competing.iter_mut().zip(&other.p_competing) {
            a.merge(*b);
        }
        for (a, b) in self.at_risk.iter_mut().zip(&other.at_risk) {
            *a += b;
        }
    }
}

struct ArmState {
    alive: bool,
    l: Vec<f64>,
    m: Vec<f64>,
}

impl<'a> Engine<'a> {
    fn new(
        bank: &'a PosteriorModelBank,
        baselines: &'a [BaselineCovariates],
        regimes: &'a RegimePair,
        config: &'a GcompConfig,
    ) -> Result<Self> {
        config.validate()?;
        let num_visits = bank.num_visits();
        if regimes.horizon() != num_visits - 1 {
            return Err(MedgcError::InvalidInput(format!(
                "regimes cover {} visits but the bank's grid needs {} (J − 1)",
                regimes.horizon(),
                num_visits - 1
            )));
        }
        if baselines.is_empty() {
            return Err(MedgcError::InvalidInput(
                "no baseline covariate vectors to simulate from".into(),
            ));
        }
        let width = bank.baseline_names.len();
        if baselines.iter().any(|b| b.values.len() != width) {
            return Err(MedgcError::InvalidInput(format!(
                "baseline vectors must all have the bank's width {width}"
            )));
        }

        let mut hazard_main = Vec::with_capacity(num_visits);
        let mut hazard_competing = Vec::with_capacity(num_visits);
        for j in 1..=num_visits {
            match bank.mode {
                Mode::Single => hazard_main.push(Arc::clone(bank.model(&ModelRole::Hazard(j))?)),
                Mode::Competing => {
                    hazard_main.push(Arc::clone(bank.model(&ModelRole::HazardMain(j))?));
                    hazard_competing.push(Arc::clone(bank.model(&ModelRole::HazardCompeting(j))?));
                }
            }
        }
        let mut confounder = Vec::with_capacity(num_visits.saturating_sub(1));
        let mut mediator = Vec::with_capacity(num_visits.saturating_sub(1));
        for j in 1..num_visits {
            confounder.push(Arc::clone(bank.model(&ModelRole::Confounder(j))?));
            mediator.push(Arc::clone(bank.model(&ModelRole::Mediator(j))?));
        }

        Ok(Engine {
            mode: bank.mode,
            visit_grid: &bank.visit_grid,
            baselines,
            arms: [
                (regimes.z.as_slice(), regimes.z.as_slice()),
                (regimes.z.as_slice(), regimes.z_star.as_slice()),
                (regimes.z_star.as_slice(), regimes.z_star.as_slice()),
            ],
            hazard_main,
            hazard_competing,
            confounder,
            mediator,
            num_draws: bank.num_draws,
            config,
        })
    }

    fn num_visits(&self) -> usize {
        self.visit_grid.len()
    }

    fn cell(&self, arm: usize, visit_index: usize) -> usize {
        arm * self.num_visits() + visit_index
    }

    /// Simulates the trajectories `chunk_start..chunk_end` of draw `q` for
    /// all three arms, against the cumulative baseline weights.
    fn simulate_chunk(
        &self,
        q: usize,
        chunk_start: usize,
        chunk_end: usize,
        cumulative_weights: &[f64],
    ) -> Result<ChunkSums> {
        let num_visits = self.num_visits();
        let seed = self.config.rng_seed;
        let competing = self.mode == Mode::Competing;
        let mut sums = ChunkSums::new(NUM_ARMS * num_visits);

        for c in chunk_start..chunk_end {
            let qc = [q as u64, c as u64];
            let pick_u = streams::stream(&[seed, tag::BASELINE_PICK, qc[0], qc[1]]).gen::<f64>();
            let baseline = &self.baselines[pick_index(cumulative_weights, pick_u)].values;

            let mut states: [ArmState; NUM_ARMS] = std::array::from_fn(|_| ArmState {
                alive: true,
                l: Vec::with_capacity(num_visits - 1),
                m: Vec::with_capacity(num_visits - 1),
            });

            for j in 1..=num_visits {
                let h = j - 1;
                let t_j = self.visit_grid[h];

                // Hazard stage: evaluate for every at-risk arm trajectory
                // (Rao-Blackwellized mean), then simulate survival. The
                // event streams are keyed by (q, c, j) and cloned per arm
                // so coincident arms share the same uniforms.
                let event_main = streams::stream(&[seed, tag::EVENT_MAIN, qc[0], qc[1], j as u64]);
                let event_competing = competing
                    .then(|| streams::stream(&[seed, tag::EVENT_COMPETING, qc[0], qc[1], j as u64]));
                for (arm, state) in states.iter_mut().enumerate() {
                    if !state.alive {
                        continue;
                    }
                    let (z_outcome, _) = self.arms[arm];
                    let covariates = data::hazard_covariates(
                        t_j,
                        &z_outcome[..h],
                        &state.l,
                        &state.m,
                        baseline,
                    );
                    let p_main = self.hazard_main[h].probability(q, &covariates)?;
                    let cell = self.cell(arm, h);
                    sums.p_main[cell].add(p_main);
                    sums.at_risk[cell] += 1;
                    let u_main = event_main.clone().gen::<f64>();
                    if competing {
                        let p2 = self.hazard_competing[h].probability(q, &covariates)?;
                        sums.p_competing[cell].add(p2 * (1.0 - p_main));
                        if u_main < p_main {
                            state.alive = false;
                        } else {
                            let u2 = event_competing
                                .as_ref()
                                .expect("competing stream exists in competing mode")
                                .clone()
                                .gen::<f64>();
                            if u2 < p2 {
                                state.alive = false;
                            }
                        }
                    } else if u_main < p_main {
                        state.alive = false;
                    }
                }

                // Covariate stage: survivors draw L_j then M_j. Values at
                // the final visit never feed any model, so stop at J − 1.
                if j < num_visits {
                    let l_rng = streams::stream(&[seed, tag::CONFOUNDER, qc[0], qc[1], j as u64]);
                    let m_rng = streams::stream(&[seed, tag::MEDIATOR, qc[0], qc[1], j as u64]);
                    for (arm, state) in states.iter_mut().enumerate() {
                        if !state.alive {
                            continue;
                        }
                        let (z_outcome, z_mediator) = self.arms[arm];
                        let covariates = data::confounder_covariates(
                            &z_outcome[..j],
                            &state.l,
                            &state.m,
                            baseline,
                        );
                        let l_value =
                            self.confounder[h].draw_value(q, &covariates, &mut l_rng.clone())?;
                        state.l.push(l_value);
                        let covariates = data::mediator_covariates(
                            &z_mediator[..j],
                            &state.l,
                            &state.m,
                            baseline,
                        );
                        let m_value =
                            self.mediator[h].draw_value(q, &covariates, &mut m_rng.clone())?;
                        state.m.push(m_value);
                    }
                }
            }
        }
        Ok(sums)
    }

    /// Runs all trajectories of posterior draw `q` and reduces them into
    /// per-arm hazard curves.
    fn simulate_draw(&self, q: usize) -> Result<DrawCurves> {
        let num_visits = self.num_visits();
        let n = self.baselines.len();
        let cumulative = match self.config.baseline_sampling {
            BaselineSampling::DirichletBootstrap => {
                let mut rng = streams::stream(&[self.config.rng_seed, tag::BOOTSTRAP_WEIGHTS, q as u64]);
                dirichlet_cumulative(n, &mut rng)
            }
            BaselineSampling::EmpiricalUniform => uniform_cumulative(n),
        };

        let num_trajectories = self.config.num_trajectories;
        let num_chunks = num_trajectories.div_ceil(CHUNK_SIZE);
        let chunk_sums: Vec<ChunkSums> = (0..num_chunks)
            .into_par_iter()
            .map(|chunk| {
                let start = chunk * CHUNK_SIZE;
                let end = (start + CHUNK_SIZE).min(num_trajectories);
                self.simulate_chunk(q, start, end, &cumulative)
            })
            .collect::<Result<_>>()?;
        let mut totals = ChunkSums::new(NUM_ARMS * num_visits);
        for chunk in &chunk_sums {
            totals.merge(chunk);
        }

        let mut curves = DrawCurves {
            p_main: std::array::from_fn(|_| vec![0.0; num_visits]),
            p_competing: std::array::from_fn(|_| vec![0.0; num_visits]),
        };
        for arm in 0..NUM_ARMS {
            for h in 0..num_visits {
                let cell = self.cell(arm, h);
                let at_risk = totals.at_risk[cell];
                if at_risk > 0 {
                    let n = at_risk as f64;
                    curves.p_main[arm][h] = totals.p_main[cell].total() / n;
                    curves.p_competing[arm][h] = totals.p_competing[cell].total() / n;
                }
            }
        }
        Ok(curves)
    }
}

fn assemble_posterior(
    engine: &Engine<'_>,
    regimes: &RegimePair,
    per_draw: Vec<DrawCurves>,
) -> GcompPosterior {
    let num_visits = engine.num_visits();
    let competing = engine.mode == Mode::Competing;
    let arms = (0..NUM_ARMS)
        .map(|arm| {
            let mut hazard_main = Vec::with_capacity(per_draw.len());
            let mut hazard_competing = Vec::with_capacity(per_draw.len());
            let mut survival = Vec::with_capacity(per_draw.len());
            let mut cif_main = Vec::with_capacity(per_draw.len());
            let mut cif_competing = Vec::with_capacity(per_draw.len());
            for draw in &per_draw {
                let p1 = &draw.p_main[arm];
                let p2 = &draw.p_competing[arm];
                let mut s = Vec::with_capacity(num_visits);
                let mut f1 = Vec::with_capacity(num_visits);
                let mut f2 = Vec::with_capacity(num_visits);
                let mut s_running = 1.0;
                let mut f1_running = 0.0;
                let mut f2_running = 0.0;
                for h in 0..num_visits {
                    // s_running currently holds S(t_{h}) = S(t_{j−1}).
                    f1_running += s_running * p1[h];
                    f2_running += s_running * p2[h];
                    s_running *= 1.0 - p1[h];
                    if competing {
                        s_running *= 1.0 - p2[h];
                    }
                    s.push(s_running);
                    f1.push(f1_running);
                    f2.push(f2_running);
                }
                hazard_main.push(p1.clone());
                hazard_competing.push(p2.clone());
                survival.push(s);
                cif_main.push(f1);
                cif_competing.push(f2);
            }
            ArmCurves {
                hazard_main,
                hazard_competing: competing.then_some(hazard_competing),
                survival,
                cif_main: competing.then_some(cif_main),
                cif_competing: competing.then_some(cif_competing),
            }
        })
        .collect();
    GcompPosterior {
        mode: engine.mode,
        visit_grid: engine.visit_grid.to_vec(),
        regimes: regimes.clone(),
        num_draws: engine.num_draws,
        arms,
    }
}

fn run_impl(
    bank: &PosteriorModelBank,
    baselines: &[BaselineCovariates],
    regimes: &RegimePair,
    config: &GcompConfig,
) -> Result<GcompPosterior> {
    let engine = Engine::new(bank, baselines, regimes, config)?;
    let per_draw: Vec<DrawCurves> = (0..bank.num_draws)
        .into_par_iter()
        .map(|q| engine.simulate_draw(q))
        .collect::<Result<_>>()?;
    Ok(assemble_posterior(&engine, regimes, per_draw))
}

/// Runs single-event G-computation: posterior survival curves for the
/// three regime arms. Errors unless the bank was fitted in single mode.
pub fn run_single(
    bank: &PosteriorModelBank,
    baselines: &[BaselineCovariates],
    regimes: &RegimePair,
    config: &GcompConfig,
) -> Result<GcompPosterior> {
    if bank.mode != Mode::Single {
        return Err(MedgcError::ModeMismatch { expected: Mode::Single, found: bank.mode });
    }
    run_impl(bank, baselines, regimes, config)
}

/// Runs competing-risk G-computation: posterior event-free survival and
/// cause-specific cumulative incidence curves for the three regime arms.
/// Errors unless the bank was fitted in competing mode.
pub fn run_competing(
    bank: &PosteriorModelBank,
    baselines: &[BaselineCovariates],
    regimes: &RegimePair,
    config: &GcompConfig,
) -> Result<GcompPosterior> {
    if bank.mode != Mode::Competing {
        return Err(MedgcError::ModeMismatch { expected: Mode::Competing, found: bank.mode });
    }
    run_impl(bank, baselines, regimes, config)
}

/// Runs G-computation in whichever mode the bank was fitted.
pub fn run(
    bank: &PosteriorModelBank,
    baselines: &[BaselineCovariates],
    regimes: &RegimePair,
    config: &GcompConfig,
) -> Result<GcompPosterior> {
    match bank.mode {
        Mode::Single => run_single(bank, baselines, regimes, config),
        Mode::Competing => run_competing(bank, baselines, regimes, config),
    }
}

/// Result of one age stratum's G-computation.
#[derive(Debug, Clone)]
pub struct StratumResult {
    /// The age band.
    pub stratum: AgeStratum,
    /// Subjects whose baseline age fell in the band.
    pub num_subjects: usize,
    /// The stratum's posterior curves.
    pub posterior: GcompPosterior,
}

/// Runs G-computation separately within each age stratum of
/// `config.age_strata`, bootstrapping baselines within the band only.
/// Subjects are assigned by baseline age, `lower ≤ age < upper`; an empty
/// band is an error. A single all-covering stratum reproduces the
/// unstratified run exactly (same seed, same baseline order).
pub fn run_age_stratified(
    bank: &PosteriorModelBank,
    dataset: &LongitudinalDataset,
    regimes: &RegimePair,
    config: &GcompConfig,
) -> Result<Vec<StratumResult>> {
    let strata = config
        .age_strata
        .as_ref()
        .filter(|s| !s.is_empty())
        .ok_or_else(|| {
            MedgcError::InvalidInput("age-stratified runs need at least one age stratum".into())
        })?;
    let age_index = dataset
        .baseline_index("age")
        .ok_or_else(|| MedgcError::InvalidInput("dataset has no `age` baseline column".into()))?;

    let mut results = Vec::with_capacity(strata.len());
    for stratum in strata {
        if !(stratum.lower < stratum.upper) {
            return Err(MedgcError::InvalidInput(format!(
                "age stratum {stratum} is empty by construction"
            )));
        }
        let baselines: Vec<BaselineCovariates> = dataset
            .subjects
            .iter()
            .filter(|s| {
                let age = s.baseline.values[age_index];
                stratum.lower <= age && age < stratum.upper
            })
            .map(|s| s.baseline.clone())
            .collect();
        if baselines.is_empty() {
            return Err(MedgcError::InvalidInput(format!(
                "no subjects fall in age stratum {stratum}"
            )));
        }
        let num_subjects = baselines.len();
        let posterior = run(bank, &baselines, regimes, config)?;
        results.push(StratumResult { stratum: *stratum, num_subjects, posterior });
    }
    Ok(results)
}

// ---------------------------------------------------------------------------
// Effects
// ---------------------------------------------------------------------------

/// The three interventional estimands.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Estimand {
    /// Interventional direct effect: (z,z*) arm minus (z*,z*) arm.
    DirectEffect,
    /// Interventional indirect effect: (z,z) arm minus (z,z*) arm.
    IndirectEffect,
    /// Total effect: the per-sample sum IDE + IIE.
    TotalEffect,
}

impl std::fmt::Display for Estimand {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Estimand::DirectEffect => write!(f, "IDE"),
            Estimand::IndirectEffect => write!(f, "IIE"),
            Estimand::TotalEffect => write!(f, "TE"),
        }
    }
}

/// Posterior summary of one estimand at one visit (and event, in competing
/// mode).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectRow {
    /// 1-based visit index.
    pub visit: usize,
    /// Visit time t_j.
    pub time: f64,
    /// Event the effect refers to: `None` for single-event survival,
    /// `Some(1)`/`Some(2)` for competing cumulative incidence.
    pub event: Option<u8>,
    /// Which estimand.
    pub estimand: Estimand,
    /// Posterior mean.
    pub mean: f64,
    /// Equal-tailed interval bounds at the summary's level.
    pub lower: f64,
    /// Upper interval bound.
    pub upper: f64,
    /// The raw posterior samples (length Q).
    pub samples: Vec<f64>,
}

impl EffectRow {
    /// Human-readable `point(lower, upper)` rendering at two significant
    /// figures, e.g. `-0.0053(-0.068, 0.045)`.
    pub fn format(&self) -> String {
        format_effect(self.mean, self.lower, self.upper)
    }
}

/// All effect summaries of one G-computation run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectSummary {
    /// Analysis mode.
    pub mode: Mode,
    /// Interval level used.
    pub level: f64,
    /// Rows ordered by (visit, event, estimand); visits start at 2 — at
    /// the first visit no exposure has acted yet, so every effect is
    /// identically zero.
    pub rows: Vec<EffectRow>,
}

impl EffectSummary {
    /// The row for (visit, event, estimand), if present.
    pub fn row(&self, visit: usize, event: Option<u8>, estimand: Estimand) -> Option<&EffectRow> {
        self.rows
            .iter()
            .find(|r| r.visit == visit && r.event == event && r.estimand == estimand)
    }
}

/// Type-7 sample quantile (linear interpolation between order statistics)
/// of already-sorted values.
pub fn quantile_type7(sorted: &[f64], p: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    if sorted.len() == 1 {
        return sorted[0];
    }
    let h = (sorted.len() - 1) as f64 * p.clamp(0.0, 1.0);
    let low = h.floor() as usize;
    let high = (low + 1).min(sorted.len() - 1);
    let fraction = h - low as f64;
    sorted[low] + fraction * (sorted[high] - sorted[low])
}

/// Equal-tailed interval of `samples` at `level` (type-7 quantiles).
pub fn equal_tailed_interval(samples: &[f64], level: f64) -> (f64, f64) {
    let mut sorted = samples.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("effect samples are finite"));
    let alpha = 1.0 - level;
    (quantile_type7(&sorted, alpha / 2.0), quantile_type7(&sorted, 1.0 - alpha / 2.0))
}

/// Renders a value to two significant figures.
fn two_significant_figures(value: f64) -> String {
    if value == 0.0 {
        return "0.0".to_string();
    }
    if !value.is_finite() {
        return value.to_string();
    }
    let decimals = (1 - value.abs().log10().floor() as i64).max(0) as usize;
    format!("{value:.decimals$}")
}

/// Formats an effect as `point(lower, upper)` at two significant figures.
pub fn format_effect(mean: f64, lower: f64, upper: f64) -> String {
    format!(
        "{}({}, {})",
        two_significant_figures(mean),
        two_significant_figures(lower),
        two_significant_figures(upper)
    )
}

fn effect_rows_for_curves(
    curves: [&Vec<Vec<f64>>; NUM_ARMS],
    visit_grid: &[f64],
    event: Option<u8>,
    level: f64,
    num_draws: usize,
    rows: &mut Vec<EffectRow>,
) {
    for h in 1..visit_grid.len() {
        let mut ide = Vec::with_capacity(num_draws);
        let mut iie = Vec::with_capacity(num_draws);
        let mut te = Vec::with_capacity(num_draws);
        for q in 0..num_draws {
            let ide_q = curves[1][q][h] - curves[2][q][h];
            let iie_q = curves[0][q][h] - curves[1][q][h];
            ide.push(ide_q);
            iie.push(iie_q);
            // The total effect is the per-sample sum, so additivity holds
            // bit for bit.
            te.push(ide_q + iie_q);
        }
        for (estimand, samples) in [
            (Estimand::DirectEffect, ide),
            (Estimand::IndirectEffect, iie),
            (Estimand::TotalEffect, te),
        ] {
            let mean = samples.iter().sum::<f64>() / samples.len() as f64;
            let (lower, upper) = equal_tailed_interval(&samples, level);
            rows.push(EffectRow {
                visit: h + 1,
                time: visit_grid[h],
                event,
                estimand,
                mean,
                lower,
                upper,
                samples,
            });
        }
    }
}

/// Summarizes a G-computation posterior into IDE/IIE/TE rows: survival
/// contrasts in single mode, cause-specific cumulative-incidence contrasts
/// (events 1 and 2) in competing mode. `TE = IDE + IIE` holds exactly for
/// every posterior sample.
pub fn effects(posterior: &GcompPosterior, level: f64) -> Result<EffectSummary> {
    if !(level > 0.0 && level < 1.0) {
        return Err(MedgcError::InvalidInput(format!(
            "interval level must lie in (0, 1); got {level}"
        )));
    }
    let mut rows = Vec::new();
    match posterior.mode {
        Mode::Single => {
            let curves = [
                &posterior.arms[0].survival,
                &posterior.arms[1].survival,
                &posterior.arms[2].survival,
            ];
            effect_rows_for_curves(
                curves,
                &posterior.visit_grid,
                None,
                level,
                posterior.num_draws,
                &mut rows,
            );
        }
        Mode::Competing => {
            let picks: [(u8, fn(&ArmCurves) -> Option<&Vec<Vec<f64>>>); 2] = [
                (1, |arm| arm.cif_main.as_ref()),
                (2, |arm| arm.cif_competing.as_ref()),
            ];
            for (event, pick) in picks {
                let curves = [
                    pick(&posterior.arms[0]).expect("competing posterior carries CIF curves"),
                    pick(&posterior.arms[1]).expect("competing posterior carries CIF curves"),
                    pick(&posterior.arms[2]).expect("competing posterior carries CIF curves"),
                ];
                effect_rows_for_curves(
                    curves,
                    &posterior.visit_grid,
                    Some(event),
                    level,
                    posterior.num_draws,
                    &mut rows,
                );
            }
        }
    }
    rows.sort_by(|a, b| a.visit.cmp(&b.visit).then(a.event.cmp(&b.event)));
    Ok(EffectSummary { mode: posterior.mode, level, rows })
}
