//! Longitudinal survival data: validation and person-visit expansion.
//!
//! Subjects are observed on a shared visit grid `t_1 < … < t_J` (with
//! `t_0 = 0` implicit). Time is divided into half-open intervals
//! `(t_{j−1}, t_j]`; a subject whose event/censoring time `T` falls in
//! interval `j` contributes at-risk rows for intervals `1..=j`. Within an
//! interval the temporal order is: survival status first, then exposure,
//! confounder, and mediator measured at the visit — which fixes the
//! conditioning sets assembled by the [`hazard_covariates`],
//! [`confounder_covariates`], and [`mediator_covariates`] helpers.
//!
//! [`validate`] reports substantive violations without modifying or
//! rejecting the data; the table builders ([`build_hazard_table`],
//! [`build_competing_tables`], [`build_covariate_tables`]) error only when a
//! row they must emit cannot be assembled.

use std::collections::BTreeSet;
use std::fmt;
use std::path::Path;

use bart::DesignMatrix;

use crate::models::ModelRole;
use crate::{MedgcError, Result};

/// Analysis mode: one terminal event, or a main event plus a competing
/// event that precludes it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Single terminal event.
    Single,
    /// Main event (cause 1) with a competing event (cause 2).
    Competing,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Mode::Single => write!(f, "single"),
            Mode::Competing => write!(f, "competing"),
        }
    }
}

/// The kind of conditional model a person-visit table feeds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RoleKind {
    /// Time-varying confounder L at a visit.
    Confounder,
    /// Time-varying mediator M at a visit.
    Mediator,
    /// Single-event discrete-time hazard.
    Hazard,
    /// Main-event hazard in competing mode.
    HazardMain,
    /// Competing-event hazard, conditional on no main event in the interval.
    HazardCompeting,
}

impl fmt::Display for RoleKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            RoleKind::Confounder => "confounder",
            RoleKind::Mediator => "mediator",
            RoleKind::Hazard => "hazard",
            RoleKind::HazardMain => "hazard-main",
            RoleKind::HazardCompeting => "hazard-competing",
        };
        write!(f, "{name}")
    }
}

/// Baseline covariate vector of one subject. Values align with
/// [`LongitudinalDataset::baseline_names`]; binary covariates are encoded
/// 0.0/1.0.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct BaselineCovariates {
    /// Covariate values in dataset column order.
    pub values: Vec<f64>,
}

/// One subject's longitudinal record.
///
/// The per-visit vectors have one entry per grid visit; `None` encodes a
/// value not observed (after death, censoring, or dropout). Missingness is
/// expected to be monotone: once a series goes missing it stays missing.
#[derive(Debug, Clone, PartialEq)]
pub struct SubjectRecord {
    /// Unique subject identifier.
    pub id: String,
    /// Baseline covariates (measured before the first interval).
    pub baseline: BaselineCovariates,
    /// Binary exposure per visit, while under observation.
    pub z: Vec<Option<f64>>,
    /// Time-varying confounder per visit.
    pub l: Vec<Option<f64>>,
    /// Time-varying mediator per visit.
    pub m: Vec<Option<f64>>,
    /// Observed event or censoring time `T > 0`.
    pub event_time: f64,
    /// Event indicator δ: `true` when `event_time` is an event, `false`
    /// when it is a censoring time.
    pub event: bool,
    /// Event cause (1 = main, 2 = competing); present only for events in
    /// competing mode.
    pub cause: Option<u8>,
}

/// A validated-shape longitudinal dataset: shared visit grid, shared
/// baseline covariate names, and per-subject records.
#[derive(Debug, Clone, PartialEq)]
pub struct LongitudinalDataset {
    /// Visit times `t_1 < … < t_J`, all positive (`t_0 = 0` is implicit).
    pub visit_grid: Vec<f64>,
    /// Names of the baseline covariate columns (without any file-format
    /// prefix); must include `age`.
    pub baseline_names: Vec<String>,
    /// Subject records, in input order.
    pub subjects: Vec<SubjectRecord>,
}

impl LongitudinalDataset {
    /// Assembles a dataset, enforcing structural invariants: a strictly
    /// increasing positive visit grid, unique subject ids, and per-subject
    /// vector lengths matching the grid and the baseline name list.
    pub fn new(
        visit_grid: Vec<f64>,
        baseline_names: Vec<String>,
        subjects: Vec<SubjectRecord>,
    ) -> Result<Self> {
        if visit_grid.is_empty() {
            return Err(MedgcError::InvalidInput("visit grid is empty".into()));
        }
        let mut prev = 0.0;
        for &t in &visit_grid {
            if !t.is_finite() || t <= prev {
                return Err(MedgcError::InvalidInput(format!(
                    "visit grid must be strictly increasing and positive; got {visit_grid:?}"
                )));
            }
            prev = t;
        }
        let num_visits = visit_grid.len();
        let mut seen = BTreeSet::new();
        for s in &subjects {
            if !seen.insert(s.id.clone()) {
                return Err(MedgcError::InvalidInput(format!("duplicate subject id {:?}", s.id)));
            }
            if s.baseline.values.len() != baseline_names.len() {
                return Err(MedgcError::InvalidInput(format!(
                    "subject {:?} has {} baseline values, expected {}",
                    s.id,
                    s.baseline.values.len(),
                    baseline_names.len()
                )));
            }
            for (series, name) in [(&s.z, "z"), (&s.l, "l"), (&s.m, "m")] {
                if series.len() != num_visits {
                    return Err(MedgcError::InvalidInput(format!(
                        "subject {:?} has {} {name} entries, expected {num_visits}",
                        s.id,
                        series.len()
                    )));
                }
            }
        }
        Ok(LongitudinalDataset { visit_grid, baseline_names, subjects })
    }

    /// Number of grid visits J.
    pub fn num_visits(&self) -> usize {
        self.visit_grid.len()
    }

    /// Index of a baseline covariate column by name.
    pub fn baseline_index(&self, name: &str) -> Option<usize> {
        self.baseline_names.iter().position(|n| n == name)
    }

    /// 1-based index of the half-open interval `(t_{j−1}, t_j]` containing
    /// `t`, or `J + 1` when `t` lies beyond the final visit.
    pub fn interval_of(&self, t: f64) -> usize {
        for (idx, &tj) in self.visit_grid.iter().enumerate() {
            if t <= tj {
                return idx + 1;
            }
        }
        self.visit_grid.len() + 1
    }

    /// Baseline vectors of all subjects, in dataset order.
    pub fn baselines(&self) -> Vec<BaselineCovariates> {
        self.subjects.iter().map(|s| s.baseline.clone()).collect()
    }
}

// ---------------------------------------------------------------------------
// Validation (report-only)
// ---------------------------------------------------------------------------

/// One substantive problem found in a dataset.
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    /// A series value is present at a visit although absent at an earlier
    /// visit: the missingness pattern is not monotone.
    NonMonotoneMissingness {
        /// Subject id.
        id: String,
        /// Series name (`z`, `l`, or `m`).
        variable: &'static str,
        /// First visit at which the series resumes after a gap.
        visit: usize,
    },
    /// A series value required while the subject is under observation
    /// (visit time before `event_time`) is absent.
    MissingWhileAtRisk {
        /// Subject id.
        id: String,
        /// Series name.
        variable: &'static str,
        /// Visit with the missing value.
        visit: usize,
    },
    /// A series value is recorded at or after the subject's event or
    /// censoring time.
    ValueAfterExit {
        /// Subject id.
        id: String,
        /// Series name.
        variable: &'static str,
        /// Offending visit.
        visit: usize,
    },
    /// `event_time` does not fall after the time origin `t_0 = 0`.
    EventBeforeGrid {
        /// Subject id.
        id: String,
        /// The recorded event/censoring time.
        event_time: f64,
    },
    /// An event lacks a cause label in competing mode.
    MissingCause {
        /// Subject id.
        id: String,
    },
    /// A cause label is present where none is expected (censored subject,
    /// or single-event mode), or lies outside {1, 2}.
    UnexpectedCause {
        /// Subject id.
        id: String,
        /// The offending label, if any.
        cause: Option<u8>,
    },
    /// An exposure value is not 0/1.
    NonBinaryExposure {
        /// Subject id.
        id: String,
        /// Offending visit.
        visit: usize,
    },
    /// A non-finite number appears in the record.
    NonFiniteValue {
        /// Subject id.
        id: String,
        /// Field or series name.
        variable: String,
    },
    /// The dataset has no `age` baseline column, or a subject's baseline
    /// age is not positive.
    InvalidBaselineAge {
        /// Subject id; `None` when the column itself is missing.
        id: Option<String>,
    },
    /// Within one series, some subjects' observed values all lie in {0, 1}
    /// while other subjects' do not — usually a sign of mixed encodings.
    TypeInconsistency {
        /// Series name.
        variable: &'static str,
        /// Subjects with only 0/1 values observed.
        binary_subjects: usize,
        /// Subjects with at least one other value observed.
        continuous_subjects: usize,
    },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::NonMonotoneMissingness { id, variable, visit } => write!(
                f,
                "subject {id}: non-monotone missingness in {variable} (present at visit {visit} after a gap)"
            ),
            Violation::MissingWhileAtRisk { id, variable, visit } => write!(
                f,
                "subject {id}: {variable} missing at visit {visit} although under observation"
            ),
            Violation::ValueAfterExit { id, variable, visit } => write!(
                f,
                "subject {id}: {variable} recorded at visit {visit}, at/after the event or censoring time"
            ),
            Violation::EventBeforeGrid { id, event_time } => {
                write!(f, "subject {id}: event time {event_time} does not fall after the time origin")
            }
            Violation::MissingCause { id } => {
                write!(f, "subject {id}: event without a cause label in competing mode")
            }
            Violation::UnexpectedCause { id, cause: Some(c) } => {
                write!(f, "subject {id}: unexpected cause label {c}")
            }
            Violation::UnexpectedCause { id, cause: None } => {
                write!(f, "subject {id}: unexpected cause label")
            }
            Violation::NonBinaryExposure { id, visit } => {
                write!(f, "subject {id}: exposure at visit {visit} is not 0/1")
            }
            Violation::NonFiniteValue { id, variable } => {
                write!(f, "subject {id}: non-finite value in {variable}")
            }
            Violation::InvalidBaselineAge { id: Some(id) } => {
                write!(f, "subject {id}: baseline age is not positive")
            }
            Violation::InvalidBaselineAge { id: None } => {
                write!(f, "dataset has no `age` baseline column")
            }
            Violation::TypeInconsistency { variable, binary_subjects, continuous_subjects } => write!(
                f,
                "series {variable}: {binary_subjects} subject(s) look binary while {continuous_subjects} do not; encodings may be mixed"
            ),
        }
    }
}

/// Outcome of [`validate`]: the list of violations found. The dataset
/// itself is never modified or rejected.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    /// All violations, in subject order.
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    /// True when no violations were found.
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }

    /// Multi-line human-readable rendering (one violation per line).
    pub fn render(&self) -> String {
        if self.is_clean() {
            return "no violations".to_string();
        }
        self.violations.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("\n")
    }
}

/// Checks a dataset against the record invariants and reports every
/// violation found: non-monotone missingness, values misaligned with the
/// event time, events dated before the time origin, cause-label problems
/// for `mode`, non-binary exposures, non-finite numbers, and series whose
/// value encodings disagree across subjects.
pub fn validate(dataset: &LongitudinalDataset, mode: Mode) -> ValidationReport {
    let mut violations = Vec::new();
    let age_idx = dataset.baseline_index("age");
    if age_idx.is_none() {
        violations.push(Violation::InvalidBaselineAge { id: None });
    }

    // Per-series encoding census for the type-consistency check.
    let mut census = [(0usize, 0usize); 2]; // (binary-looking, other) for l, m

    for s in &dataset.subjects {
        if !s.event_time.is_finite() {
            violations.push(Violation::NonFiniteValue { id: s.id.clone(), variable: "event_time".into() });
        } else if s.event_time <= 0.0 {
            violations.push(Violation::EventBeforeGrid { id: s.id.clone(), event_time: s.event_time });
        }
        for (idx, v) in s.baseline.values.iter().enumerate() {
            if !v.is_finite() {
                let name = dataset
                    .baseline_names
                    .get(idx)
                    .map(|n| format!("baseline {n}"))
                    .unwrap_or_else(|| "baseline".into());
                violations.push(Violation::NonFiniteValue { id: s.id.clone(), variable: name });
            }
        }
        if let Some(idx) = age_idx {
            if !(s.baseline.values[idx] > 0.0) {
                violations.push(Violation::InvalidBaselineAge { id: Some(s.id.clone()) });
            }
        }

        match (mode, s.event, s.cause) {
            (Mode::Competing, true, None) => violations.push(Violation::MissingCause { id: s.id.clone() }),
            (Mode::Competing, true, Some(c)) if c != 1 && c != 2 => {
                violations.push(Violation::UnexpectedCause { id: s.id.clone(), cause: Some(c) })
            }
            (_, false, Some(c)) | (Mode::Single, true, Some(c)) => {
                violations.push(Violation::UnexpectedCause { id: s.id.clone(), cause: Some(c) })
            }
            _ => {}
        }

        for (series, variable) in [(&s.z, "z"), (&s.l, "l"), (&s.m, "m")] {
            // Missingness pattern and alignment with the event time.
            let mut gap_seen = false;
            for (idx, value) in series.iter().enumerate() {
                let visit = idx + 1;
                let under_observation = dataset.visit_grid[idx] < s.event_time;
                match value {
                    Some(v) => {
                        if gap_seen {
                            violations.push(Violation::NonMonotoneMissingness {
                                id: s.id.clone(),
                                variable,
                                visit,
                            });
                            gap_seen = false; // report each resumption once
                        }
                        if !v.is_finite() {
                            violations.push(Violation::NonFiniteValue {
                                id: s.id.clone(),
                                variable: format!("{variable} at visit {visit}"),
                            });
                        } else {
                            if !under_observation {
                                violations.push(Violation::ValueAfterExit {
                                    id: s.id.clone(),
                                    variable,
                                    visit,
                                });
                            }
                            if variable == "z" && *v != 0.0 && *v != 1.0 {
                                violations.push(Violation::NonBinaryExposure { id: s.id.clone(), visit });
                            }
                        }
                    }
                    None => {
                        if under_observation {
                            violations.push(Violation::MissingWhileAtRisk {
                                id: s.id.clone(),
                                variable,
                                visit,
                            });
                        }
                        gap_seen = true;
                    }
                }
            }

            // Encoding census (l and m only; z is checked directly above).
            if variable != "z" {
                let observed: Vec<f64> = series.iter().flatten().copied().collect();
                if !observed.is_empty() {
                    let slot = if variable == "l" { 0 } else { 1 };
                    if observed.iter().all(|v| *v == 0.0 || *v == 1.0) {
                        census[slot].0 += 1;
                    } else {
                        census[slot].1 += 1;
                    }
                }
            }
        }
    }

    for (slot, variable) in [(0, "l"), (1, "m")] {
        let (binary, other) = census[slot];
        if binary > 0 && other > 0 {
            violations.push(Violation::TypeInconsistency {
                variable,
                binary_subjects: binary,
                continuous_subjects: other,
            });
        }
    }

    ValidationReport { violations }
}

// ---------------------------------------------------------------------------
// Covariate assembly (shared between table building and G-computation)
// ---------------------------------------------------------------------------

/// Conditioning vector of a hazard model at visit `j`:
/// `(t_j, z₁..z_{j−1}, l₁..l_{j−1}, m₁..m_{j−1}, baseline…)`.
/// The history slices must each hold exactly `j − 1` values.
pub fn hazard_covariates(t_j: f64, z: &[f64], l: &[f64], m: &[f64], baseline: &[f64]) -> Vec<f64> {
    debug_assert!(z.len() == l.len() && l.len() == m.len());
    let mut out = Vec::with_capacity(1 + z.len() + l.len() + m.len() + baseline.len());
    out.push(t_j);
    out.extend_from_slice(z);
    out.extend_from_slice(l);
    out.extend_from_slice(m);
    out.extend_from_slice(baseline);
    out
}

/// As [`hazard_covariates`] but zero-padded to the fixed width a
/// visit-pooled hazard model requires: each history block is extended with
/// zeros to length `num_visits − 1`.
pub fn pooled_hazard_covariates(
    t_j: f64,
    z: &[f64],
    l: &[f64],
    m: &[f64],
    baseline: &[f64],
    num_visits: usize,
) -> Vec<f64> {
    let width = num_visits.saturating_sub(1);
    debug_assert!(z.len() <= width && z.len() == l.len() && l.len() == m.len());
    let mut out = Vec::with_capacity(1 + 3 * width + baseline.len());
    out.push(t_j);
    for block in [z, l, m] {
        out.extend_from_slice(block);
        out.extend(std::iter::repeat(0.0).take(width - block.len()));
    }
    out.extend_from_slice(baseline);
    out
}

/// Conditioning vector of the confounder model at visit `j`:
/// `(z₁..z_j, l₁..l_{j−1}, m₁..m_{j−1}, baseline…)`.
pub fn confounder_covariates(z: &[f64], l: &[f64], m: &[f64], baseline: &[f64]) -> Vec<f64> {
    debug_assert!(z.len() == l.len() + 1 && l.len() == m.len());
    let mut out = Vec::with_capacity(z.len() + l.len() + m.len() + baseline.len());
    out.extend_from_slice(z);
    out.extend_from_slice(l);
    out.extend_from_slice(m);
    out.extend_from_slice(baseline);
    out
}

/// Conditioning vector of the mediator model at visit `j`:
/// `(z₁..z_j, l₁..l_j, m₁..m_{j−1}, baseline…)` — the current-visit
/// confounder is included, the current-visit mediator is the response.
pub fn mediator_covariates(z: &[f64], l: &[f64], m: &[f64], baseline: &[f64]) -> Vec<f64> {
    debug_assert!(z.len() == l.len() && z.len() == m.len() + 1);
    let mut out = Vec::with_capacity(z.len() + l.len() + m.len() + baseline.len());
    out.extend_from_slice(z);
    out.extend_from_slice(l);
    out.extend_from_slice(m);
    out.extend_from_slice(baseline);
    out
}

fn history_names(prefix: &str, upto: usize) -> impl Iterator<Item = String> + '_ {
    (1..=upto).map(move |j| format!("{prefix}{j}"))
}

/// Column labels matching [`hazard_covariates`] at visit `j`.
pub fn hazard_covariate_names(baseline_names: &[String], j: usize) -> Vec<String> {
    let mut names = vec!["t".to_string()];
    names.extend(history_names("z", j - 1));
    names.extend(history_names("l", j - 1));
    names.extend(history_names("m", j - 1));
    names.extend(baseline_names.iter().cloned());
    names
}

/// Column labels matching [`pooled_hazard_covariates`].
pub fn pooled_hazard_covariate_names(baseline_names: &[String], num_visits: usize) -> Vec<String> {
    hazard_covariate_names(baseline_names, num_visits)
}

/// Column labels matching [`confounder_covariates`] at visit `j`.
pub fn confounder_covariate_names(baseline_names: &[String], j: usize) -> Vec<String> {
    let mut names: Vec<String> = history_names("z", j).collect();
    names.extend(history_names("l", j - 1));
    names.extend(history_names("m", j - 1));
    names.extend(baseline_names.iter().cloned());
    names
}

/// Column labels matching [`mediator_covariates`] at visit `j`.
pub fn mediator_covariate_names(baseline_names: &[String], j: usize) -> Vec<String> {
    let mut names: Vec<String> = history_names("z", j).collect();
    names.extend(history_names("l", j));
    names.extend(history_names("m", j - 1));
    names.extend(baseline_names.iter().cloned());
    names
}

// ---------------------------------------------------------------------------
// Person-visit tables
// ---------------------------------------------------------------------------

/// One model-fitting row: a subject at one at-risk visit.
#[derive(Debug, Clone, PartialEq)]
pub struct PersonVisitRow {
    /// Subject the row belongs to.
    pub subject_id: String,
    /// 1-based visit index j.
    pub visit: usize,
    /// Response: the binary event indicator for hazard tables, the observed
    /// confounder/mediator value for covariate tables.
    pub response: f64,
    /// Conditioning vector for (role, visit), in canonical order.
    pub covariates: Vec<f64>,
}

/// Rows feeding the conditional models of one role, canonically ordered by
/// (subject id, visit). Hazard tables span all visits (the covariate width
/// grows with the visit); confounder/mediator tables are per-visit.
#[derive(Debug, Clone, PartialEq)]
pub struct PersonVisitTable {
    /// Which model family the rows feed.
    pub role_kind: RoleKind,
    /// The single visit covered, or `None` for cross-visit hazard tables.
    pub visit: Option<usize>,
    /// Rows sorted by (subject id, visit).
    pub rows: Vec<PersonVisitRow>,
}

impl PersonVisitTable {
    /// Rows belonging to visit `j`.
    pub fn rows_for_visit(&self, j: usize) -> impl Iterator<Item = &PersonVisitRow> {
        self.rows.iter().filter(move |r| r.visit == j)
    }

    /// Design matrix and response vector for the visit-`j` slice, with the
    /// exact visit-`j` covariate width. The matrix may have zero rows.
    pub fn design_for_visit(&self, j: usize) -> Result<(DesignMatrix, Vec<f64>)> {
        let rows: Vec<&PersonVisitRow> = self.rows_for_visit(j).collect();
        let width = rows.first().map(|r| r.covariates.len()).unwrap_or(0);
        let mut values = Vec::with_capacity(rows.len() * width);
        let mut responses = Vec::with_capacity(rows.len());
        for row in &rows {
            values.extend_from_slice(&row.covariates);
            responses.push(row.response);
        }
        let x = DesignMatrix::new(values, rows.len(), width)?;
        Ok((x, responses))
    }

    /// Design matrix and response vector pooling all visits, with each
    /// row's history blocks zero-padded to the full width (hazard tables
    /// only; see [`pooled_hazard_covariates`]).
    pub fn pooled_design(&self, dataset: &LongitudinalDataset) -> Result<(DesignMatrix, Vec<f64>)> {
        if !matches!(
            self.role_kind,
            RoleKind::Hazard | RoleKind::HazardMain | RoleKind::HazardCompeting
        ) {
            return Err(MedgcError::InvalidInput(format!(
                "pooled designs are defined for hazard tables, not {}",
                self.role_kind
            )));
        }
        let num_visits = dataset.num_visits();
        let num_baseline = dataset.baseline_names.len();
        let width = 1 + 3 * (num_visits - 1) + num_baseline;
        let mut values = Vec::with_capacity(self.rows.len() * width);
        let mut responses = Vec::with_capacity(self.rows.len());
        for row in &self.rows {
            let h = row.visit - 1;
            let t_j = row.covariates[0];
            let z = &row.covariates[1..1 + h];
            let l = &row.covariates[1 + h..1 + 2 * h];
            let m = &row.covariates[1 + 2 * h..1 + 3 * h];
            let baseline = &row.covariates[1 + 3 * h..];
            values.extend(pooled_hazard_covariates(t_j, z, l, m, baseline, num_visits));
            responses.push(row.response);
        }
        let x = DesignMatrix::new(values, self.rows.len(), width)?;
        Ok((x, responses))
    }
}

/// Subjects in canonical (id) order; table builders iterate this so row
/// order never depends on input order.
fn ordered_subjects(dataset: &LongitudinalDataset) -> Vec<&SubjectRecord> {
    let mut subjects: Vec<&SubjectRecord> = dataset.subjects.iter().collect();
    subjects.sort_by(|a, b| a.id.cmp(&b.id));
    subjects
}

fn require_value(series: &[Option<f64>], id: &str, variable: &str, visit: usize) -> Result<f64> {
    series[visit - 1].ok_or_else(|| {
        MedgcError::InvalidInput(format!(
            "subject {id:?}: {variable} required at visit {visit} but missing"
        ))
    })
}

/// History `(z₁..z_h, l₁..l_h, m₁..m_h)` of one subject through visit `h`.
fn observed_history(s: &SubjectRecord, h: usize) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>)> {
    let mut z = Vec::with_capacity(h);
    let mut l = Vec::with_capacity(h);
    let mut m = Vec::with_capacity(h);
    for visit in 1..=h {
        z.push(require_value(&s.z, &s.id, "z", visit)?);
        l.push(require_value(&s.l, &s.id, "l", visit)?);
        m.push(require_value(&s.m, &s.id, "m", visit)?);
    }
    Ok((z, l, m))
}

/// Number of hazard rows a subject contributes: `min(J, interval of T)`.
/// Subjects observed beyond `t_J` are administratively censored at `t_J`.
fn num_hazard_rows(dataset: &LongitudinalDataset, s: &SubjectRecord) -> Result<usize> {
    if !(s.event_time > 0.0) {
        return Err(MedgcError::InvalidInput(format!(
            "subject {:?}: event time {} does not fall after the time origin",
            s.id, s.event_time
        )));
    }
    Ok(dataset.interval_of(s.event_time).min(dataset.num_visits()))
}

/// True when the subject's event lands inside the grid (an event beyond
/// `t_J` is administratively censored and contributes no event row).
fn event_on_grid(dataset: &LongitudinalDataset, s: &SubjectRecord) -> bool {
    s.event && dataset.interval_of(s.event_time) <= dataset.num_visits()
}

fn hazard_rows_for_subject(
    dataset: &LongitudinalDataset,
    s: &SubjectRecord,
    response: impl Fn(usize) -> f64,
) -> Result<Vec<PersonVisitRow>> {
    let last = num_hazard_rows(dataset, s)?;
    let (z, l, m) = observed_history(s, last - 1)?;
    let mut rows = Vec::with_capacity(last);
    for j in 1..=last {
        let h = j - 1;
        rows.push(PersonVisitRow {
            subject_id: s.id.clone(),
            visit: j,
            response: response(j),
            covariates: hazard_covariates(
                dataset.visit_grid[j - 1],
                &z[..h],
                &l[..h],
                &m[..h],
                &s.baseline.values,
            ),
        });
    }
    Ok(rows)
}

/// Expands a single-event dataset into its hazard table: subject `i`
/// contributes one row per interval up to and including the interval of
/// `T_i` (capped at J), with response 1 only on the event interval.
pub fn build_hazard_table(dataset: &LongitudinalDataset) -> Result<PersonVisitTable> {
    let mut rows = Vec::new();
    for s in ordered_subjects(dataset) {
        let last = num_hazard_rows(dataset, s)?;
        let event_row = if event_on_grid(dataset, s) { Some(last) } else { None };
        rows.extend(hazard_rows_for_subject(dataset, s, |j| {
            if Some(j) == event_row {
                1.0
            } else {
                0.0
            }
        })?);
    }
    Ok(PersonVisitTable { role_kind: RoleKind::Hazard, visit: None, rows })
}

/// Expands a competing-risk dataset into its two hazard tables. The main
/// table follows the single-event row rule with response `y⁽¹⁾` (cause-1
/// event); the competing table keeps only rows with `y⁽¹⁾ = 0` — per the
/// likelihood factorization, the competing hazard is conditional on no
/// main event in the interval — with response `y⁽²⁾`.
pub fn build_competing_tables(
    dataset: &LongitudinalDataset,
) -> Result<(PersonVisitTable, PersonVisitTable)> {
    let mut main_rows = Vec::new();
    let mut competing_rows = Vec::new();
    for s in ordered_subjects(dataset) {
        let last = num_hazard_rows(dataset, s)?;
        let cause = if event_on_grid(dataset, s) {
            match s.cause {
                Some(c @ (1 | 2)) => Some(c),
                Some(c) => {
                    return Err(MedgcError::InvalidInput(format!(
                        "subject {:?}: cause {c} outside {{1, 2}}",
                        s.id
                    )))
                }
                None => {
                    return Err(MedgcError::InvalidInput(format!(
                        "subject {:?}: event without a cause label in competing mode",
                        s.id
                    )))
                }
            }
        } else {
            None
        };
        let rows = hazard_rows_for_subject(dataset, s, |_| 0.0)?;
        for mut row in rows {
            let is_event_interval = row.visit == last && cause.is_some();
            let main_event = is_event_interval && cause == Some(1);
            let competing_event = is_event_interval && cause == Some(2);
            if !main_event {
                // Main event absent in this interval: the row is at risk for
                // the competing event.
                let mut competing_row = row.clone();
                competing_row.response = if competing_event { 1.0 } else { 0.0 };
                competing_rows.push(competing_row);
            }
            row.response = if main_event { 1.0 } else { 0.0 };
            main_rows.push(row);
        }
    }
    Ok((
        PersonVisitTable { role_kind: RoleKind::HazardMain, visit: None, rows: main_rows },
        PersonVisitTable { role_kind: RoleKind::HazardCompeting, visit: None, rows: competing_rows },
    ))
}

/// Builds the 2·J per-visit covariate tables: for each visit `j`, the
/// confounder table (response `L^{t_j}`) and the mediator table (response
/// `M^{t_j}`), each restricted to subjects still under observation at `t_j`
/// (event/censoring time strictly beyond `t_j`).
pub fn build_covariate_tables(dataset: &LongitudinalDataset) -> Result<Vec<PersonVisitTable>> {
    let num_visits = dataset.num_visits();
    let mut tables = Vec::with_capacity(2 * num_visits);
    let subjects = ordered_subjects(dataset);
    for j in 1..=num_visits {
        let mut confounder_rows = Vec::new();
        let mut mediator_rows = Vec::new();
        for s in &subjects {
            if !(s.event_time > dataset.visit_grid[j - 1]) {
                continue;
            }
            let (z, l, m) = observed_history(s, j)?;
            confounder_rows.push(PersonVisitRow {
                subject_id: s.id.clone(),
                visit: j,
                response: l[j - 1],
                covariates: confounder_covariates(&z[..j], &l[..j - 1], &m[..j - 1], &s.baseline.values),
            });
            mediator_rows.push(PersonVisitRow {
                subject_id: s.id.clone(),
                visit: j,
                response: m[j - 1],
                covariates: mediator_covariates(&z[..j], &l[..j], &m[..j - 1], &s.baseline.values),
            });
        }
        tables.push(PersonVisitTable {
            role_kind: RoleKind::Confounder,
            visit: Some(j),
            rows: confounder_rows,
        });
        tables.push(PersonVisitTable {
            role_kind: RoleKind::Mediator,
            visit: Some(j),
            rows: mediator_rows,
        });
    }
    Ok(tables)
}

/// Looks up the table for `role` in the output of
/// [`build_covariate_tables`].
pub fn covariate_table<'a>(
    tables: &'a [PersonVisitTable],
    role: &ModelRole,
) -> Option<&'a PersonVisitTable> {
    tables
        .iter()
        .find(|t| t.role_kind == role.kind() && t.visit == Some(role.visit()))
}

// ---------------------------------------------------------------------------
// CSV input/output
// ---------------------------------------------------------------------------

fn parse_cell(field: &str, context: &str) -> Result<Option<f64>> {
    let trimmed = field.trim();
    if trimmed.is_empty() {
        return Ok(None);
    }
    trimmed
        .parse::<f64>()
        .map(Some)
        .map_err(|_| MedgcError::Schema(format!("{context}: cannot parse {trimmed:?} as a number")))
}

fn require_cell(field: &str, context: &str) -> Result<f64> {
    parse_cell(field, context)?
        .ok_or_else(|| MedgcError::Schema(format!("{context}: required value is empty")))
}

fn parse_delta(field: &str, context: &str) -> Result<bool> {
    match require_cell(field, context)? {
        v if v == 0.0 => Ok(false),
        v if v == 1.0 => Ok(true),
        v => Err(MedgcError::Schema(format!("{context}: delta must be 0 or 1, got {v}"))),
    }
}

fn parse_cause(field: &str, context: &str) -> Result<Option<u8>> {
    match parse_cell(field, context)? {
        None => Ok(None),
        Some(v) if v == 1.0 => Ok(Some(1)),
        Some(v) if v == 2.0 => Ok(Some(2)),
        Some(v) => Err(MedgcError::Schema(format!("{context}: cause must be 1, 2, or empty, got {v}"))),
    }
}

/// Default visit grid when none is configured: `t_j = j`.
fn default_grid(num_visits: usize) -> Vec<f64> {
    (1..=num_visits).map(|j| j as f64).collect()
}

fn series_columns(headers: &[String], prefix: char) -> Result<Vec<usize>> {
    let mut indexed: Vec<(usize, usize)> = Vec::new();
    for (idx, h) in headers.iter().enumerate() {
        if let Some(rest) = h.strip_prefix(prefix) {
            if let Some(num) = rest.strip_prefix('_') {
                let visit: usize = num.parse().map_err(|_| {
                    MedgcError::Schema(format!("column {h:?}: visit suffix is not a number"))
                })?;
                indexed.push((visit, idx));
            }
        }
    }
    indexed.sort_unstable();
    for (pos, (visit, _)) in indexed.iter().enumerate() {
        if *visit != pos + 1 {
            return Err(MedgcError::Schema(format!(
                "{prefix}_* columns must be numbered contiguously from 1; found {prefix}_{visit}"
            )));
        }
    }
    Ok(indexed.into_iter().map(|(_, idx)| idx).collect())
}

/// Reads the wide CSV format: one row per subject with columns
/// `id, baseline_*, z_1..z_J, l_1..l_J, m_1..m_J, time, delta, cause`
/// (`cause` optional; empty cells encode missing values). `visit_grid`
/// overrides the default grid `t_j = j` and must have length J.
pub fn read_wide_csv<R: std::io::Read>(
    reader: R,
    visit_grid: Option<Vec<f64>>,
) -> Result<LongitudinalDataset> {
    let mut csv_reader = csv::ReaderBuilder::new().flexible(false).from_reader(reader);
    let headers: Vec<String> = csv_reader
        .headers()?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();

    let find = |name: &str| headers.iter().position(|h| h == name);
    let id_idx = find("id").ok_or_else(|| MedgcError::Schema("missing `id` column".into()))?;
    let time_idx = find("time").ok_or_else(|| MedgcError::Schema("missing `time` column".into()))?;
    let delta_idx = find("delta").ok_or_else(|| MedgcError::Schema("missing `delta` column".into()))?;
    let cause_idx = find("cause");

    let z_cols = series_columns(&headers, 'z')?;
    let l_cols = series_columns(&headers, 'l')?;
    let m_cols = series_columns(&headers, 'm')?;
    let num_visits = z_cols.len();
    if num_visits == 0 {
        return Err(MedgcError::Schema("no z_* exposure columns found".into()));
    }
    if l_cols.len() != num_visits || m_cols.len() != num_visits {
        return Err(MedgcError::Schema(format!(
            "column counts disagree: {} z_*, {} l_*, {} m_*",
            num_visits,
            l_cols.len(),
            m_cols.len()
        )));
    }

    let baseline_cols: Vec<(String, usize)> = headers
        .iter()
        .enumerate()
        .filter_map(|(idx, h)| h.strip_prefix("baseline_").map(|name| (name.to_string(), idx)))
        .collect();

    let grid = match visit_grid {
        Some(grid) => {
            if grid.len() != num_visits {
                return Err(MedgcError::Schema(format!(
                    "visit grid has {} entries but the file has {} visits",
                    grid.len(),
                    num_visits
                )));
            }
            grid
        }
        None => default_grid(num_visits),
    };

    let mut subjects = Vec::new();
    for (line, record) in csv_reader.records().enumerate() {
        let record = record?;
        let row = line + 2; // 1-based, after the header
        let id = record.get(id_idx).unwrap_or("").trim().to_string();
        if id.is_empty() {
            return Err(MedgcError::Schema(format!("row {row}: empty subject id")));
        }
        let context = |col: &str| format!("row {row} ({id}), column {col}");

        let mut baseline = Vec::with_capacity(baseline_cols.len());
        for (name, idx) in &baseline_cols {
            baseline.push(require_cell(
                record.get(*idx).unwrap_or(""),
                &context(&format!("baseline_{name}")),
            )?);
        }
        let read_series = |cols: &[usize], prefix: &str| -> Result<Vec<Option<f64>>> {
            cols.iter()
                .enumerate()
                .map(|(k, idx)| {
                    parse_cell(record.get(*idx).unwrap_or(""), &context(&format!("{prefix}_{}", k + 1)))
                })
                .collect()
        };

        subjects.push(SubjectRecord {
            id: id.clone(),
            baseline: BaselineCovariates { values: baseline },
            z: read_series(&z_cols, "z")?,
            l: read_series(&l_cols, "l")?,
            m: read_series(&m_cols, "m")?,
            event_time: require_cell(record.get(time_idx).unwrap_or(""), &context("time"))?,
            event: parse_delta(record.get(delta_idx).unwrap_or(""), &context("delta"))?,
            cause: match cause_idx {
                Some(idx) => parse_cause(record.get(idx).unwrap_or(""), &context("cause"))?,
                None => None,
            },
        });
    }

    LongitudinalDataset::new(
        grid,
        baseline_cols.into_iter().map(|(name, _)| name).collect(),
        subjects,
    )
}

/// Reads a wide CSV file from disk. See [`read_wide_csv`].
pub fn read_wide_csv_path(path: &Path, visit_grid: Option<Vec<f64>>) -> Result<LongitudinalDataset> {
    let file = std::fs::File::open(path).map_err(|e| {
        MedgcError::Schema(format!("cannot open {}: {e}", path.display()))
    })?;
    read_wide_csv(std::io::BufReader::new(file), visit_grid)
}

/// Writes the wide CSV format (the inverse of [`read_wide_csv`]); missing
/// values become empty cells, the `cause` column is always present.
pub fn write_wide_csv<W: std::io::Write>(dataset: &LongitudinalDataset, writer: W) -> Result<()> {
    let mut csv_writer = csv::Writer::from_writer(writer);
    let num_visits = dataset.num_visits();
    let mut header = vec!["id".to_string()];
    header.extend(dataset.baseline_names.iter().map(|n| format!("baseline_{n}")));
    for prefix in ["z", "l", "m"] {
        header.extend((1..=num_visits).map(|j| format!("{prefix}_{j}")));
    }
    header.extend(["time".to_string(), "delta".to_string(), "cause".to_string()]);
    csv_writer.write_record(&header)?;

    let fmt_opt = |v: &Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for s in &dataset.subjects {
        let mut record = vec![s.id.clone()];
        record.extend(s.baseline.values.iter().map(|v| v.to_string()));
        for series in [&s.z, &s.l, &s.m] {
            record.extend(series.iter().map(fmt_opt));
        }
        record.push(s.event_time.to_string());
        record.push(if s.event { "1" } else { "0" }.to_string());
        record.push(s.cause.map(|c| c.to_string()).unwrap_or_default());
        csv_writer.write_record(&record)?;
    }
    csv_writer.flush()?;
    Ok(())
}

/// Writes a wide CSV file to disk. See [`write_wide_csv`].
pub fn write_wide_csv_path(dataset: &LongitudinalDataset, path: &Path) -> Result<()> {
    let file = std::fs::File::create(path)?;
    write_wide_csv(dataset, std::io::BufWriter::new(file))
}

/// Reads the long CSV format with columns `id, visit, variable, value`:
/// per-visit rows carry `variable` ∈ {`z`, `l`, `m`} with visits 1..J;
/// visit-0 rows carry `time`, `delta`, `cause`, and `baseline_<name>`
/// variables. Absent (id, visit, variable) combinations encode missing
/// values. Subject order follows first appearance.
pub fn read_long_csv<R: std::io::Read>(
    reader: R,
    visit_grid: Option<Vec<f64>>,
) -> Result<LongitudinalDataset> {
    let mut csv_reader = csv::ReaderBuilder::new().flexible(false).from_reader(reader);
    let headers: Vec<String> = csv_reader.headers()?.iter().map(|h| h.trim().to_string()).collect();
    for (pos, expected) in ["id", "visit", "variable", "value"].iter().enumerate() {
        if headers.get(pos).map(String::as_str) != Some(*expected) {
            return Err(MedgcError::Schema(format!(
                "long format requires columns `id, visit, variable, value`; found {headers:?}"
            )));
        }
    }

    struct Partial {
        z: Vec<(usize, f64)>,
        l: Vec<(usize, f64)>,
        m: Vec<(usize, f64)>,
        baseline: Vec<(String, f64)>,
        time: Option<f64>,
        delta: Option<bool>,
        cause: Option<u8>,
    }
    let mut order: Vec<String> = Vec::new();
    let mut partials: std::collections::HashMap<String, Partial> = std::collections::HashMap::new();
    let mut baseline_names: Vec<String> = Vec::new();
    let mut max_visit = 0usize;

    for (line, record) in csv_reader.records().enumerate() {
        let record = record?;
        let row = line + 2;
        let id = record.get(0).unwrap_or("").trim().to_string();
        if id.is_empty() {
            return Err(MedgcError::Schema(format!("row {row}: empty subject id")));
        }
        let visit: usize = record
            .get(1)
            .unwrap_or("")
            .trim()
            .parse()
            .map_err(|_| MedgcError::Schema(format!("row {row}: visit is not an integer")))?;
        let variable = record.get(2).unwrap_or("").trim().to_string();
        let value_field = record.get(3).unwrap_or("");
        let context = format!("row {row} ({id}), variable {variable}");

        let entry = partials.entry(id.clone()).or_insert_with(|| {
            order.push(id.clone());
            Partial { z: vec![], l: vec![], m: vec![], baseline: vec![], time: None, delta: None, cause: None }
        });

        match variable.as_str() {
            "z" | "l" | "m" => {
                if visit == 0 {
                    return Err(MedgcError::Schema(format!("{context}: series rows need visit ≥ 1")));
                }
                max_visit = max_visit.max(visit);
                let value = require_cell(value_field, &context)?;
                match variable.as_str() {
                    "z" => entry.z.push((visit, value)),
                    "l" => entry.l.push((visit, value)),
                    _ => entry.m.push((visit, value)),
                }
            }
            "time" => entry.time = Some(require_cell(value_field, &context)?),
            "delta" => entry.delta = Some(parse_delta(value_field, &context)?),
            "cause" => entry.cause = parse_cause(value_field, &context)?,
            other => {
                if let Some(name) = other.strip_prefix("baseline_") {
                    if !baseline_names.iter().any(|n| n == name) {
                        baseline_names.push(name.to_string());
                    }
                    entry.baseline.push((name.to_string(), require_cell(value_field, &context)?));
                } else {
                    return Err(MedgcError::Schema(format!("{context}: unknown variable")));
                }
            }
        }
    }

    let grid = match visit_grid {
        Some(grid) => {
            if grid.len() < max_visit {
                return Err(MedgcError::Schema(format!(
                    "visit grid has {} entries but the file references visit {max_visit}",
                    grid.len()
                )));
            }
            grid
        }
        None => {
            if max_visit == 0 {
                return Err(MedgcError::Schema("no z/l/m rows found".into()));
            }
            default_grid(max_visit)
        }
    };
    let num_visits = grid.len();

    let mut subjects = Vec::with_capacity(order.len());
    for id in order {
        let partial = partials.remove(&id).expect("id was inserted");
        let time = partial
            .time
            .ok_or_else(|| MedgcError::Schema(format!("subject {id:?}: no `time` row")))?;
        let delta = partial
            .delta
            .ok_or_else(|| MedgcError::Schema(format!("subject {id:?}: no `delta` row")))?;
        let mut baseline = vec![None; baseline_names.len()];
        for (name, value) in partial.baseline {
            let idx = baseline_names.iter().position(|n| *n == name).expect("name registered");
            baseline[idx] = Some(value);
        }
        let baseline: Vec<f64> = baseline
            .into_iter()
            .enumerate()
            .map(|(idx, v)| {
                v.ok_or_else(|| {
                    MedgcError::Schema(format!(
                        "subject {id:?}: no `baseline_{}` row",
                        baseline_names[idx]
                    ))
                })
            })
            .collect::<Result<_>>()?;
        let expand = |pairs: Vec<(usize, f64)>| -> Result<Vec<Option<f64>>> {
            let mut series = vec![None; num_visits];
            for (visit, value) in pairs {
                if visit > num_visits {
                    return Err(MedgcError::Schema(format!(
                        "subject {id:?}: visit {visit} beyond the {num_visits}-visit grid"
                    )));
                }
                series[visit - 1] = Some(value);
            }
            Ok(series)
        };
        subjects.push(SubjectRecord {
            id: id.clone(),
            baseline: BaselineCovariates { values: baseline },
            z: expand(partial.z)?,
            l: expand(partial.l)?,
            m: expand(partial.m)?,
            event_time: time,
            event: delta,
            cause: partial.cause,
        });
    }

    LongitudinalDataset::new(grid, baseline_names, subjects)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// A subject on the (3, 6, 9) grid with fully observed values derived
    /// from its id, truncated to the observation window of `event_time`.
    fn subject(id: &str, event_time: f64, event: bool, cause: Option<u8>) -> SubjectRecord {
        let grid = [3.0, 6.0, 9.0];
        let fill = |offset: f64| -> Vec<Option<f64>> {
            grid.iter()
                .enumerate()
                .map(|(idx, &t)| (t < event_time).then(|| offset + idx as f64))
                .collect()
        };
        SubjectRecord {
            id: id.to_string(),
            baseline: BaselineCovariates { values: vec![50.0, 1.0] },
            z: grid.iter().map(|&t| (t < event_time).then_some(1.0)).collect(),
            l: fill(10.0),
            m: fill(20.0),
            event_time,
            event,
            cause,
        }
    }

    fn dataset(subjects: Vec<SubjectRecord>) -> LongitudinalDataset {
        LongitudinalDataset::new(
            vec![3.0, 6.0, 9.0],
            vec!["age".to_string(), "sex".to_string()],
            subjects,
        )
        .unwrap()
    }

    #[test]
    fn event_in_second_interval_yields_two_rows_with_terminal_event() {
        let data = dataset(vec![subject("a", 5.2, true, None)]);
        let table = build_hazard_table(&data).unwrap();
        let shape: Vec<(usize, f64)> = table.rows.iter().map(|r| (r.visit, r.response)).collect();
        assert_eq!(shape, vec![(1, 0.0), (2, 1.0)]);
    }

    #[test]
    fn censored_subject_contributes_zero_rows_through_its_interval() {
        let data = dataset(vec![subject("a", 7.0, false, None)]);
        let table = build_hazard_table(&data).unwrap();
        let shape: Vec<(usize, f64)> = table.rows.iter().map(|r| (r.visit, r.response)).collect();
        assert_eq!(shape, vec![(1, 0.0), (2, 0.0), (3, 0.0)]);
    }

    #[test]
    fn event_exactly_at_a_visit_lands_in_the_closed_interval_end() {
        let data = dataset(vec![subject("a", 6.0, true, None)]);
        let table = build_hazard_table(&data).unwrap();
        let shape: Vec<(usize, f64)> = table.rows.iter().map(|r| (r.visit, r.response)).collect();
        assert_eq!(shape, vec![(1, 0.0), (2, 1.0)]);
    }

    #[test]
    fn observation_beyond_the_grid_is_administratively_censored() {
        let data = dataset(vec![subject("a", 12.5, true, None)]);
        let table = build_hazard_table(&data).unwrap();
        let shape: Vec<(usize, f64)> = table.rows.iter().map(|r| (r.visit, r.response)).collect();
        assert_eq!(shape, vec![(1, 0.0), (2, 0.0), (3, 0.0)]);
    }

    #[test]
    fn event_time_at_origin_is_rejected_by_the_builder() {
        let mut s = subject("a", 5.2, true, None);
        s.event_time = 0.0;
        let err = build_hazard_table(&dataset(vec![s])).unwrap_err();
        assert!(err.to_string().contains("time origin"), "{err}");
    }

    #[test]
    fn hazard_row_covariates_carry_visit_time_history_and_baseline() {
        let data = dataset(vec![subject("a", 7.0, false, None)]);
        let table = build_hazard_table(&data).unwrap();
        // Visit 1: no history, only (t_1, baseline).
        assert_eq!(table.rows[0].covariates, vec![3.0, 50.0, 1.0]);
        // Visit 3: (t_3, z1, z2, l1, l2, m1, m2, baseline).
        assert_eq!(
            table.rows[2].covariates,
            vec![9.0, 1.0, 1.0, 10.0, 11.0, 20.0, 21.0, 50.0, 1.0]
        );
        assert_eq!(
            hazard_covariate_names(&data.baseline_names, 3),
            vec!["t", "z1", "z2", "l1", "l2", "m1", "m2", "age", "sex"]
        );
    }

    #[test]
    fn competing_event_of_cause_two_keeps_the_competing_row() {
        let data = dataset(vec![subject("a", 5.2, true, Some(2))]);
        let (main, competing) = build_competing_tables(&data).unwrap();
        let main_shape: Vec<(usize, f64)> = main.rows.iter().map(|r| (r.visit, r.response)).collect();
        let comp_shape: Vec<(usize, f64)> =
            competing.rows.iter().map(|r| (r.visit, r.response)).collect();
        assert_eq!(main_shape, vec![(1, 0.0), (2, 0.0)]);
        assert_eq!(comp_shape, vec![(1, 0.0), (2, 1.0)]);
    }

    #[test]
    fn main_event_excludes_the_interval_from_the_competing_table() {
        let data = dataset(vec![subject("a", 5.2, true, Some(1))]);
        let (main, competing) = build_competing_tables(&data).unwrap();
        let main_shape: Vec<(usize, f64)> = main.rows.iter().map(|r| (r.visit, r.response)).collect();
        let comp_shape: Vec<(usize, f64)> =
            competing.rows.iter().map(|r| (r.visit, r.response)).collect();
        assert_eq!(main_shape, vec![(1, 0.0), (2, 1.0)]);
        assert_eq!(comp_shape, vec![(1, 0.0)]);
    }

    #[test]
    fn censored_subject_appears_fully_in_both_competing_tables() {
        let data = dataset(vec![subject("a", 9.5, false, None)]);
        let (main, competing) = build_competing_tables(&data).unwrap();
        assert_eq!(main.rows.len(), 3);
        assert_eq!(competing.rows.len(), 3);
        assert!(main.rows.iter().chain(&competing.rows).all(|r| r.response == 0.0));
    }

    #[test]
    fn competing_row_count_equals_main_rows_minus_main_events() {
        let data = dataset(vec![
            subject("a", 5.2, true, Some(1)),
            subject("b", 5.2, true, Some(2)),
            subject("c", 7.0, false, None),
            subject("d", 2.0, true, Some(1)),
            subject("e", 11.0, false, None),
        ]);
        let (main, competing) = build_competing_tables(&data).unwrap();
        let main_events = main.rows.iter().filter(|r| r.response == 1.0).count();
        assert_eq!(main_events, 2);
        assert_eq!(competing.rows.len(), main.rows.len() - main_events);
    }

    #[test]
    fn hazard_row_count_matches_the_interval_sum() {
        let subjects = vec![
            subject("a", 5.2, true, None),  // 2 rows
            subject("b", 7.0, false, None), // 3 rows
            subject("c", 1.0, true, None),  // 1 row
            subject("d", 42.0, false, None), // 3 rows (beyond grid)
        ];
        let data = dataset(subjects);
        let table = build_hazard_table(&data).unwrap();
        let expected: usize = data
            .subjects
            .iter()
            .map(|s| data.interval_of(s.event_time).min(data.num_visits()))
            .sum();
        assert_eq!(table.rows.len(), expected);
        assert_eq!(expected, 9);
        let events_per_subject = |id: &str| {
            table
                .rows
                .iter()
                .filter(|r| r.subject_id == id && r.response == 1.0)
                .count()
        };
        for s in &data.subjects {
            assert!(events_per_subject(&s.id) <= 1);
        }
    }

    #[test]
    fn tables_are_independent_of_subject_order() {
        let mut subjects = vec![
            subject("s2", 5.2, true, None),
            subject("s10", 7.0, false, None),
            subject("s1", 11.0, false, None),
        ];
        let forward = dataset(subjects.clone());
        subjects.reverse();
        let backward = dataset(subjects);
        assert_eq!(build_hazard_table(&forward).unwrap(), build_hazard_table(&backward).unwrap());
        assert_eq!(
            build_covariate_tables(&forward).unwrap(),
            build_covariate_tables(&backward).unwrap()
        );
    }

    #[test]
    fn covariate_tables_cover_both_roles_at_every_visit() {
        let data = dataset(vec![subject("a", 11.0, false, None), subject("b", 5.2, true, None)]);
        let tables = build_covariate_tables(&data).unwrap();
        assert_eq!(tables.len(), 6);
        // Subject b dies in (3, 6]: present in visit-1 tables only.
        let confounder_1 = covariate_table(&tables, &ModelRole::Confounder(1)).unwrap();
        let confounder_2 = covariate_table(&tables, &ModelRole::Confounder(2)).unwrap();
        assert_eq!(confounder_1.rows.len(), 2);
        assert_eq!(confounder_2.rows.len(), 1);
        assert_eq!(confounder_2.rows[0].subject_id, "a");
        // Mediator table at visit 2 conditions on the current confounder;
        // the confounder table at the same visit does not.
        let mediator_2 = covariate_table(&tables, &ModelRole::Mediator(2)).unwrap();
        assert_eq!(
            mediator_covariate_names(&data.baseline_names, 2),
            vec!["z1", "z2", "l1", "l2", "m1", "age", "sex"]
        );
        assert_eq!(
            confounder_covariate_names(&data.baseline_names, 2),
            vec!["z1", "z2", "l1", "m1", "age", "sex"]
        );
        assert_eq!(mediator_2.rows[0].covariates.len(), 7);
        assert_eq!(confounder_2.rows[0].covariates.len(), 6);
        // Responses are the current-visit values.
        assert_eq!(confounder_2.rows[0].response, 11.0);
        assert_eq!(mediator_2.rows[0].response, 21.0);
    }

    #[test]
    fn validation_flags_the_documented_violations() {
        let mut healthy = subject("ok", 7.0, false, None);
        healthy.cause = None;

        // m present at visit 3 but absent at visit 2.
        let mut gap = subject("gap", 11.0, false, None);
        gap.m[1] = None;

        // Event without a cause label (competing mode).
        let causeless = subject("causeless", 5.2, true, None);

        let data = dataset(vec![healthy, gap, causeless]);
        let report = validate(&data, Mode::Competing);
        assert!(report.violations.contains(&Violation::NonMonotoneMissingness {
            id: "gap".into(),
            variable: "m",
            visit: 3,
        }));
        assert!(report
            .violations
            .contains(&Violation::MissingCause { id: "causeless".into() }));
        // The gap is also a missing-at-risk value.
        assert!(report.violations.contains(&Violation::MissingWhileAtRisk {
            id: "gap".into(),
            variable: "m",
            visit: 2,
        }));
    }

    #[test]
    fn well_formed_dataset_validates_cleanly() {
        let data = dataset(vec![
            subject("a", 5.2, true, None),
            subject("b", 7.0, false, None),
            subject("c", 11.0, false, None),
        ]);
        let report = validate(&data, Mode::Single);
        assert!(report.is_clean(), "{}", report.render());
        assert_eq!(report.render(), "no violations");
    }

    #[test]
    fn validation_reports_without_rejecting() {
        let mut bad = subject("bad", -1.0, true, Some(7));
        bad.z[0] = Some(0.5);
        let data = dataset(vec![bad]);
        let before = data.clone();
        let report = validate(&data, Mode::Single);
        assert_eq!(data, before);
        assert!(report.violations.iter().any(|v| matches!(v, Violation::EventBeforeGrid { .. })));
        assert!(report.violations.iter().any(|v| matches!(v, Violation::UnexpectedCause { .. })));
        assert!(report
            .violations
            .iter()
            .any(|v| matches!(v, Violation::NonBinaryExposure { visit: 1, .. })));
    }

    #[test]
    fn mixed_encodings_within_a_series_are_flagged() {
        let mut binary_l = subject("bin", 11.0, false, None);
        binary_l.l = vec![Some(0.0), Some(1.0), Some(0.0)];
        let continuous_l = subject("cont", 11.0, false, None);
        let data = dataset(vec![binary_l, continuous_l]);
        let report = validate(&data, Mode::Single);
        assert!(report.violations.contains(&Violation::TypeInconsistency {
            variable: "l",
            binary_subjects: 1,
            continuous_subjects: 1,
        }));
    }

    #[test]
    fn wide_csv_round_trips_losslessly() {
        let data = dataset(vec![
            subject("a", 5.2, true, None),
            subject("b", 7.0, false, None),
        ]);
        let mut buffer = Vec::new();
        write_wide_csv(&data, &mut buffer).unwrap();
        let restored = read_wide_csv(buffer.as_slice(), Some(vec![3.0, 6.0, 9.0])).unwrap();
        assert_eq!(data, restored);
    }

    #[test]
    fn wide_csv_reader_wants_contiguous_series_columns() {
        let text = "id,baseline_age,z_1,z_3,l_1,l_3,m_1,m_3,time,delta\n a,50,1,1,0,0,2,2,9,0\n";
        let err = read_wide_csv(text.as_bytes(), None).unwrap_err();
        assert!(err.to_string().contains("contiguously"), "{err}");
    }

    #[test]
    fn long_csv_matches_the_wide_reader() {
        let wide = "id,baseline_age,z_1,z_2,l_1,l_2,m_1,m_2,time,delta,cause\n\
                    a,50,1,0,0.5,0.7,2,3,1.7,1,2\n\
                    b,61,0,,1.5,,4,,0.9,0,\n";
        let long = "id,visit,variable,value\n\
                    a,0,baseline_age,50\n\
                    a,1,z,1\na,2,z,0\n\
                    a,1,l,0.5\na,2,l,0.7\n\
                    a,1,m,2\na,2,m,3\n\
                    a,0,time,1.7\na,0,delta,1\na,0,cause,2\n\
                    b,0,baseline_age,61\n\
                    b,1,z,0\nb,1,l,1.5\nb,1,m,4\n\
                    b,0,time,0.9\nb,0,delta,0\n";
        let from_wide = read_wide_csv(wide.as_bytes(), None).unwrap();
        let from_long = read_long_csv(long.as_bytes(), None).unwrap();
        assert_eq!(from_wide, from_long);
    }

    #[test]
    fn pooled_design_pads_histories_to_fixed_width() {
        let data = dataset(vec![subject("a", 7.0, false, None)]);
        let table = build_hazard_table(&data).unwrap();
        let (x, y) = table.pooled_design(&data).unwrap();
        assert_eq!(x.num_rows(), 3);
        // Width: t + 3 blocks of (J-1) + 2 baseline columns.
        assert_eq!(x.num_cols(), 1 + 3 * 2 + 2);
        assert_eq!(y, vec![0.0, 0.0, 0.0]);
        // Visit-1 row: history blocks are all padding.
        assert_eq!(x.row(0), &[3.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 50.0, 1.0]);
        // Visit-2 row: one real entry per block, then padding.
        assert_eq!(x.row(1), &[6.0, 1.0, 0.0, 10.0, 0.0, 20.0, 0.0, 50.0, 1.0]);
    }
}
