//! Estimation of interventional direct, indirect, and total effects of a
//! time-varying binary exposure on a discrete-time survival outcome
//! (optionally with a competing event), mediated by time-varying mediators.
//!
//! The pipeline has five stages, one module each:
//!
//! 1. [`data`] — validate longitudinal input and expand it into person-visit
//!    tables (one row per subject per at-risk interval) for model fitting.
//! 2. [`models`] — fit one conditional model per (variable role, visit):
//!    BART ensembles for confounders, mediators, and hazards, behind a
//!    uniform [`models::ConditionalModel`] interface that also admits exact
//!    closed-form models for oracle testing.
//! 3. [`gcomp`] — posterior G-computation: Bayesian-bootstrap the baseline
//!    distribution, simulate trajectories under paired exposure regimes, and
//!    assemble hazards into survival curves, cumulative incidence functions,
//!    and IDE/IIE/TE posteriors.
//! 4. [`sim`] — a simulation harness that generates replicated datasets from
//!    known generalized linear models, computes ground-truth effects, and
//!    scores estimators by bias, MSE, and interval coverage.
//! 5. [`impute`] — external-cohort confounder imputation: a linear
//!    mixed-effects model of blood pressure over age, transported by
//!    covariate matching, yielding a closed-form cumulative exposure
//!    integral added as a baseline covariate.
//!
//! [`oracle`] holds brute-force reference implementations (exhaustive path
//! enumeration over discrete data-generating processes) used to verify the
//! Monte Carlo machinery, and [`report`] renders effect summaries and
//! simulation reports as CSV/JSON artifacts.
//!
//! Everything downstream of a seed is deterministic: random numbers come
//! from counter-based streams keyed by (seed, posterior draw, trajectory,
//! visit, role), so results are bit-identical at any worker count.

pub mod data;
pub mod gcomp;
pub mod glm;
pub mod impute;
pub mod models;
pub mod oracle;
pub mod report;
pub mod sim;
pub mod streams;

use thiserror::Error;

/// Unified error type for the estimation pipeline.
#[derive(Debug, Error)]
pub enum MedgcError {
    /// Arguments violate a documented precondition (dimension mismatch,
    /// empty required input, out-of-range index, ...).
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// Input files do not match the documented column schema.
    #[error("schema error: {0}")]
    Schema(String),

    /// A model-fitting table has no rows, so the named role cannot be fit.
    #[error("no rows available to fit {role}")]
    EmptyTable {
        /// The conditional model that could not be fit.
        role: models::ModelRole,
    },

    /// An operation required one analysis mode but the inputs carry another.
    #[error("mode mismatch: expected {expected}, found {found}")]
    ModeMismatch {
        /// Mode required by the caller.
        expected: data::Mode,
        /// Mode recorded in the input.
        found: data::Mode,
    },

    /// A numeric procedure failed (non-finite values, singular system, ...).
    #[error("numeric failure: {0}")]
    Numeric(String),

    /// Error propagated from the tree-ensemble engine.
    #[error(transparent)]
    Bart(#[from] bart::BartError),

    /// Filesystem error.
    #[error(transparent)]
    Io(#[from] std::io::Error),

    /// CSV read/write error.
    #[error(transparent)]
    Csv(#[from] csv::Error),

    /// JSON serialization error.
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, MedgcError>;
