//! Brute-force evaluation of the identified hazards for fully discrete
//! data-generating processes.
//!
//! For a process with binary confounders and mediators and exactly known
//! conditional probabilities, every functional the G-computation engine
//! estimates by simulation can be computed exactly by summing over all
//! `4^(j−1)` binary history paths: the at-risk mass of each path is the
//! product of its survival factors and covariate probabilities, and the
//! identified hazard at visit `j` is the at-risk-weighted mean of the
//! per-path hazard values. This module performs that enumeration — a
//! completely independent computation path from the simulation engine —
//! together with the exact delta-method Monte Carlo standard error of the
//! engine's ratio estimator at a given trajectory budget, so tests can
//! assert agreement within a known number of standard errors.

use std::sync::Arc;

use crate::data::{self, BaselineCovariates, Mode};
use crate::gcomp::RegimePair;
use crate::models::{
    ConditionalModel, ExactConditional, HazardPooling, ModelRole, PosteriorModelBank,
};
use crate::{MedgcError, Result};

/// An exactly known conditional probability, as a function of the same
/// covariate vectors the fitted models see.
pub type ProbabilityFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// A fully discrete data-generating process: binary confounders and
/// mediators with hand-chosen conditional probabilities.
#[derive(Clone)]
pub struct DiscreteDgp {
    /// Visit grid `t_1 … t_J`.
    pub visit_grid: Vec<f64>,
    /// Baseline covariate vectors, mixed with equal weight.
    pub baselines: Vec<BaselineCovariates>,
    /// Names matching the baseline vector entries.
    pub baseline_names: Vec<String>,
    /// Main-event hazard `p⁽¹⁾` on hazard covariates.
    pub hazard_main: ProbabilityFn,
    /// Competing-event hazard `p̃⁽²⁾` (given no main event at the visit);
    /// `None` for single-event processes.
    pub hazard_competing: Option<ProbabilityFn>,
    /// `P(L_j = 1)` on confounder covariates.
    pub confounder: ProbabilityFn,
    /// `P(M_j = 1)` on mediator covariates.
    pub mediator: ProbabilityFn,
}

impl DiscreteDgp {
    /// The process's mode, inferred from the presence of a competing
    /// hazard.
    pub fn mode(&self) -> Mode {
        if self.hazard_competing.is_some() {
            Mode::Competing
        } else {
            Mode::Single
        }
    }

    fn validate(&self) -> Result<()> {
        if self.visit_grid.is_empty() {
            return Err(MedgcError::InvalidInput("the visit grid is empty".into()));
        }
        if self.baselines.is_empty() {
            return Err(MedgcError::InvalidInput("the process has no baselines".into()));
        }
        let width = self.baseline_names.len();
        if self.baselines.iter().any(|b| b.values.len() != width) {
            return Err(MedgcError::InvalidInput(
                "baseline vectors disagree with the baseline names in width".into(),
            ));
        }
        Ok(())
    }
}

/// Exact curves of one counterfactual arm, plus the Monte Carlo standard
/// errors the simulation engine's estimator has at a given trajectory
/// budget.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleCurves {
    /// Identified main-event hazard 𝒫⁽¹⁾(t_j), visit-indexed.
    pub hazard_main: Vec<f64>,
    /// Identified competing hazard 𝒫⁽²⁾(t_j); zeros in single mode.
    pub hazard_competing: Vec<f64>,
    /// Exact survival (event-free survival in competing mode).
    pub survival: Vec<f64>,
    /// Exact main-event cumulative incidence (competing mode semantics).
    pub cif_main: Vec<f64>,
    /// Exact competing-event cumulative incidence.
    pub cif_competing: Vec<f64>,
    /// Delta-method standard error of the engine's 𝒫⁽¹⁾ estimate over
    /// `num_trajectories` independent trajectories.
    pub se_main: Vec<f64>,
    /// Same for 𝒫⁽²⁾.
    pub se_competing: Vec<f64>,
}

/// One enumerated at-risk history: its probability mass and the hazard
/// values it contributes.
struct PathTerm {
    weight: f64,
    g_main: f64,
    g_competing: f64,
}

/// A live history path during enumeration.
struct Path {
    weight: f64,
    l: Vec<f64>,
    m: Vec<f64>,
    baseline: usize,
}

fn checked_probability(value: f64, what: &str) -> Result<f64> {
    if !(0.0..=1.0).contains(&value) {
        return Err(MedgcError::Numeric(format!(
            "{what} returned {value}, outside [0, 1]"
        )));
    }
    Ok(value)
}

/// Exhaustively evaluates the identified hazards of the arm whose
/// outcome/confounder models follow `z_outcome` and whose mediator model
/// follows `z_mediator`, by summing over every binary (L, M) history path
/// weighted by its at-risk probability mass. `num_trajectories` scales the
/// reported Monte Carlo standard errors (it does not affect the exact
/// values); the error formula assumes trajectories draw baselines
/// uniformly, which holds for uniform sampling and for a single baseline
/// under any scheme.
pub fn enumerate_arm(
    dgp: &DiscreteDgp,
    z_outcome: &[f64],
    z_mediator: &[f64],
    num_trajectories: usize,
) -> Result<OracleCurves> {
    dgp.validate()?;
    let num_visits = dgp.visit_grid.len();
    if z_outcome.len() != num_visits - 1 || z_mediator.len() != num_visits - 1 {
        return Err(MedgcError::InvalidInput(format!(
            "regimes must cover {} visits (J − 1)",
            num_visits - 1
        )));
    }
    if num_trajectories == 0 {
        return Err(MedgcError::InvalidInput(
            "the trajectory budget must be at least 1".into(),
        ));
    }
    let competing = dgp.hazard_competing.as_ref();

    let baseline_weight = 1.0 / dgp.baselines.len() as f64;
    let mut frontier: Vec<Path> = (0..dgp.baselines.len())
        .map(|baseline| Path { weight: baseline_weight, l: Vec::new(), m: Vec::new(), baseline })
        .collect();

    // Per visit: every at-risk path's (weight, hazard values).
    let mut terms: Vec<Vec<PathTerm>> = Vec::with_capacity(num_visits);

    for j in 1..=num_visits {
        let h = j - 1;
        let t_j = dgp.visit_grid[h];

        let mut visit_terms = Vec::with_capacity(frontier.len());
        for path in &frontier {
            let baseline = &dgp.baselines[path.baseline].values;
            let covariates =
                data::hazard_covariates(t_j, &z_outcome[..h], &path.l, &path.m, baseline);
            let p1 = checked_probability((dgp.hazard_main)(&covariates), "the main hazard")?;
            let g_competing = match competing {
                Some(p2_fn) => {
                    let p2 = checked_probability(p2_fn(&covariates), "the competing hazard")?;
                    (1.0 - p1) * p2
                }
                None => 0.0,
            };
            visit_terms.push(PathTerm { weight: path.weight, g_main: p1, g_competing });
        }
        terms.push(visit_terms);

        // Expand survivors into the four (l_{j}, m_{j}) continuations.
        if j < num_visits {
            let mut next = Vec::with_capacity(frontier.len() * 4);
            for path in frontier {
                let baseline = &dgp.baselines[path.baseline].values;
                let covariates =
                    data::hazard_covariates(t_j, &z_outcome[..h], &path.l, &path.m, baseline);
                let p1 = (dgp.hazard_main)(&covariates);
                let survive = match competing {
                    Some(p2_fn) => (1.0 - p1) * (1.0 - p2_fn(&covariates)),
                    None => 1.0 - p1,
                };
                if survive == 0.0 {
                    continue;
                }
                let l_covariates =
                    data::confounder_covariates(&z_outcome[..j], &path.l, &path.m, baseline);
                let p_l =
                    checked_probability((dgp.confounder)(&l_covariates), "the confounder law")?;
                for l_value in [0.0, 1.0] {
                    let l_mass = if l_value == 1.0 { p_l } else { 1.0 - p_l };
                    if l_mass == 0.0 {
                        continue;
                    }
                    let mut l_path = path.l.clone();
                    l_path.push(l_value);
                    let m_covariates = data::mediator_covariates(
                        &z_mediator[..j],
                        &l_path,
                        &path.m,
                        baseline,
                    );
                    let p_m =
                        checked_probability((dgp.mediator)(&m_covariates), "the mediator law")?;
                    for m_value in [0.0, 1.0] {
                        let m_mass = if m_value == 1.0 { p_m } else { 1.0 - p_m };
                        if m_mass == 0.0 {
                            continue;
                        }
                        let mut m_path = path.m.clone();
                        m_path.push(m_value);
                        next.push(Path {
                            weight: path.weight * survive * l_mass * m_mass,
                            l: l_path.clone(),
                            m: m_path,
                            baseline: path.baseline,
                        });
                    }
                }
            }
            frontier = next;
        }
    }

    // Reduce the per-visit terms into hazards and their standard errors.
    let mut hazard_main = Vec::with_capacity(num_visits);
    let mut hazard_competing = Vec::with_capacity(num_visits);
    let mut se_main = Vec::with_capacity(num_visits);
    let mut se_competing = Vec::with_capacity(num_visits);
    for visit_terms in &terms {
        let at_risk: f64 = visit_terms.iter().map(|t| t.weight).sum();
        if at_risk <= 0.0 {
            hazard_main.push(0.0);
            hazard_competing.push(0.0);
            se_main.push(0.0);
            se_competing.push(0.0);
            continue;
        }
        let p1: f64 = visit_terms.iter().map(|t| t.weight * t.g_main).sum::<f64>() / at_risk;
        let p2: f64 =
            visit_terms.iter().map(|t| t.weight * t.g_competing).sum::<f64>() / at_risk;
        hazard_main.push(p1);
        hazard_competing.push(p2);
        // Ratio-estimator variance: Var ≈ E[I·(g − 𝒫)²] / (C*·E[I]²),
        // with I the at-risk indicator — exact moments from the path sum.
        let spread = |pick: fn(&PathTerm) -> f64, center: f64| {
            let second_moment: f64 = visit_terms
                .iter()
                .map(|t| t.weight * (pick(t) - center).powi(2))
                .sum();
            (second_moment / (num_trajectories as f64 * at_risk * at_risk)).sqrt()
        };
        se_main.push(spread(|t| t.g_main, p1));
        se_competing.push(spread(|t| t.g_competing, p2));
    }

    // Exact curves from the exact hazards.
    let competing_mode = competing.is_some();
    let mut survival = Vec::with_capacity(num_visits);
    let mut cif_main = Vec::with_capacity(num_visits);
    let mut cif_competing = Vec::with_capacity(num_visits);
    let mut s_running = 1.0;
    let mut f1_running = 0.0;
    let mut f2_running = 0.0;
    for h in 0..num_visits {
        f1_running += s_running * hazard_main[h];
        f2_running += s_running * hazard_competing[h];
        s_running *= 1.0 - hazard_main[h];
        if competing_mode {
            s_running *= 1.0 - hazard_competing[h];
        }
        survival.push(s_running);
        cif_main.push(f1_running);
        cif_competing.push(f2_running);
    }

    Ok(OracleCurves {
        hazard_main,
        hazard_competing,
        survival,
        cif_main,
        cif_competing,
        se_main,
        se_competing,
    })
}

/// Enumerates all three arms of a regime pair in the engine's arm order:
/// (z,z), (z,z*), (z*,z*).
pub fn enumerate_arms(
    dgp: &DiscreteDgp,
    regimes: &RegimePair,
    num_trajectories: usize,
) -> Result<[OracleCurves; 3]> {
    Ok([
        enumerate_arm(dgp, &regimes.z, &regimes.z, num_trajectories)?,
        enumerate_arm(dgp, &regimes.z, &regimes.z_star, num_trajectories)?,
        enumerate_arm(dgp, &regimes.z_star, &regimes.z_star, num_trajectories)?,
    ])
}

/// Wraps the process's exact conditionals into a model bank, so the
/// simulation engine consumes the very same probability functions the
/// enumeration does.
pub fn exact_bank_from_dgp(dgp: &DiscreteDgp, num_draws: usize) -> Result<PosteriorModelBank> {
    use std::collections::BTreeMap;
    dgp.validate()?;
    let mut models: BTreeMap<ModelRole, Arc<dyn ConditionalModel>> = BTreeMap::new();
    let num_visits = dgp.visit_grid.len();
    let wrap = |f: &ProbabilityFn| {
        let f = Arc::clone(f);
        move |covariates: &[f64]| f(covariates)
    };
    for j in 1..=num_visits {
        match &dgp.hazard_competing {
            None => {
                models.insert(
                    ModelRole::Hazard(j),
                    Arc::new(ExactConditional::binary(num_draws, wrap(&dgp.hazard_main))),
                );
            }
            Some(p2) => {
                models.insert(
                    ModelRole::HazardMain(j),
                    Arc::new(ExactConditional::binary(num_draws, wrap(&dgp.hazard_main))),
                );
                models.insert(
                    ModelRole::HazardCompeting(j),
                    Arc::new(ExactConditional::binary(num_draws, wrap(p2))),
                );
            }
        }
        if j < num_visits {
            models.insert(
                ModelRole::Confounder(j),
                Arc::new(ExactConditional::binary(num_draws, wrap(&dgp.confounder))),
            );
            models.insert(
                ModelRole::Mediator(j),
                Arc::new(ExactConditional::binary(num_draws, wrap(&dgp.mediator))),
            );
        }
    }
    PosteriorModelBank::new(
        dgp.mode(),
        dgp.visit_grid.clone(),
        dgp.baseline_names.clone(),
        HazardPooling::PerVisit,
        models,
    )
}
