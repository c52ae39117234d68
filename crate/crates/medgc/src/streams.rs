//! Keyed random-number streams.
//!
//! Every stochastic step in the pipeline draws from a dedicated stream
//! derived from a structured integer key rather than from one shared,
//! sequentially consumed generator. Keys follow the pattern
//! `(seed, context...)` — e.g. `(seed, draw, trajectory, visit, role)` inside
//! G-computation — so that:
//!
//! * results are bit-identical no matter how work is scheduled across
//!   threads (criterion: same output at any worker count), and
//! * paired simulations can share randomness by reusing a key (common
//!   random numbers across exposure regimes).
//!
//! The derivation is [`bart::rng::stream`], which mixes the key words into a
//! ChaCha8 seed; distinct keys yield statistically independent streams.

use rand::RngCore;
use rand_chacha::ChaCha8Rng;

/// Role tags used as the trailing words of stream keys. Each constant marks
/// one kind of stochastic step; two steps of different kinds can never
/// collide on a key.
pub mod tag {
    /// Dirichlet weights of one Bayesian-bootstrap replicate.
    pub const BOOTSTRAP_WEIGHTS: u64 = 1;
    /// Baseline-row selection for one simulated trajectory.
    pub const BASELINE_PICK: u64 = 2;
    /// Main-event survival indicator at one (trajectory, visit).
    pub const EVENT_MAIN: u64 = 3;
    /// Competing-event indicator at one (trajectory, visit).
    pub const EVENT_COMPETING: u64 = 4;
    /// Confounder draw at one (trajectory, visit).
    pub const CONFOUNDER: u64 = 5;
    /// Mediator draw at one (trajectory, visit).
    pub const MEDIATOR: u64 = 6;
    /// Dataset generation for one simulation replicate.
    pub const REPLICATE: u64 = 7;
    /// Donor selection for one imputation target.
    pub const MATCH: u64 = 8;
    /// One bootstrap resample of the plug-in comparator.
    pub const ESTIMATOR_BOOTSTRAP: u64 = 9;
    /// The mixed-model Gibbs chain.
    pub const LMM: u64 = 10;
    /// Seed derivation for one conditional-model fit.
    pub const MODEL_FIT: u64 = 11;
    /// One independent block of the true-effect computation.
    pub const TRUTH_BLOCK: u64 = 12;
    /// Seed derivation for a G-computation run nested inside an estimator.
    pub const GCOMP_RUN: u64 = 13;
    /// Synthetic baseline-covariate generation.
    pub const SYNTHETIC_BASELINES: u64 = 14;
}

/// A fresh deterministic stream for `key`.
pub fn stream(key: &[u64]) -> ChaCha8Rng {
    bart::rng::stream(key)
}

/// A single 64-bit seed derived from `key`, for components that take a
/// scalar seed (for example per-model fit configurations).
pub fn derive_seed(key: &[u64]) -> u64 {
    bart::rng::stream(key).next_u64()
}
