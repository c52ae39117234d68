//! Sampler configuration and prior hyperparameters.

use serde::{Deserialize, Serialize};

use crate::{BartError, Result};

/// Hyperparameters and chain controls for a BART fit.
///
/// The defaults follow the reference conventions: `alpha = 0.95`,
/// `beta = 2.0` for the depth prior P(node at depth d splits) =
/// `alpha * (1 + d)^(-beta)`; leaf-value prior scale governed by `k = 2`;
/// residual-variance prior ν = 3 with λ calibrated so that
/// P(σ < σ̂) = `q = 0.90` where σ̂ is the response standard deviation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BartConfig {
    /// Number of trees R in the ensemble.
    pub num_trees: usize,
    /// Depth-prior base probability, in (0, 1).
    pub alpha: f64,
    /// Depth-prior decay exponent, > 0.
    pub beta: f64,
    /// Leaf-prior tightness: larger k shrinks leaf values harder.
    pub k: f64,
    /// Residual-variance prior degrees of freedom (continuous variant).
    pub nu: f64,
    /// Calibration quantile for the residual-variance prior scale λ.
    pub q: f64,
    /// Burn-in sweeps B discarded before retention begins.
    pub num_burn: usize,
    /// Retained posterior draws Q.
    pub num_keep: usize,
    /// Keep every `thinning`-th sweep after burn-in (1 = keep all).
    pub thinning: usize,
    /// Number of equally spaced interior cutpoints per continuous covariate.
    pub num_cutpoints: usize,
    /// Seed for the fit's single deterministic random stream.
    pub rng_seed: u64,
    /// Optional override of the leaf-value prior standard deviation.
    ///
    /// `None` selects the response-range rule used by the continuous variant;
    /// the probit fit installs its latent-scale value here internally.
    #[serde(default)]
    pub leaf_sd_override: Option<f64>,
}

impl BartConfig {
    /// Default configuration for continuous responses (R = 200 trees).
    pub fn default_continuous() -> Self {
        Self {
            num_trees: 200,
            alpha: 0.95,
            beta: 2.0,
            k: 2.0,
            nu: 3.0,
            q: 0.90,
            num_burn: 1000,
            num_keep: 1000,
            thinning: 1,
            num_cutpoints: 100,
            rng_seed: 0,
            leaf_sd_override: None,
        }
    }

    /// Default configuration for probit (binary) responses (R = 50 trees).
    pub fn default_probit() -> Self {
        Self { num_trees: 50, ..Self::default_continuous() }
    }

    /// Returns a copy with the given rng seed (builder-style convenience).
    pub fn with_seed(self, rng_seed: u64) -> Self {
        Self { rng_seed, ..self }
    }

    /// Leaf-value prior standard deviation on the standardized response scale.
    ///
    /// Continuous fits standardize y to [-0.5, 0.5], so the range rule
    /// `(y_max - y_min) / (2 k sqrt(R))` reduces to `0.5 / (k sqrt(R))`.
    pub fn leaf_prior_sd(&self) -> f64 {
        self.leaf_sd_override
            .unwrap_or_else(|| 0.5 / (self.k * (self.num_trees as f64).sqrt()))
    }

    /// Probability that a node at `depth` splits under the tree prior.
    pub fn split_probability(&self, depth: usize) -> f64 {
        self.alpha * (1.0 + depth as f64).powf(-self.beta)
    }

    /// Checks invariants: R ≥ 1, Q ≥ 1, alpha ∈ (0,1), etc.
    pub fn validate(&self) -> Result<()> {
        if self.num_trees == 0 {
            return Err(BartError::InvalidConfig("num_trees must be >= 1".into()));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(BartError::InvalidConfig(format!(
                "alpha must be in (0,1), got {}",
                self.alpha
            )));
        }
        if !(self.beta > 0.0) {
            return Err(BartError::InvalidConfig(format!("beta must be > 0, got {}", self.beta)));
        }
        if !(self.k > 0.0) {
            return Err(BartError::InvalidConfig(format!("k must be > 0, got {}", self.k)));
        }
        if !(self.nu > 0.0) {
            return Err(BartError::InvalidConfig(format!("nu must be > 0, got {}", self.nu)));
        }
        if !(self.q > 0.0 && self.q < 1.0) {
            return Err(BartError::InvalidConfig(format!("q must be in (0,1), got {}", self.q)));
        }
        if self.num_keep == 0 {
            return Err(BartError::InvalidConfig("num_keep must be >= 1".into()));
        }
        if self.thinning == 0 {
            return Err(BartError::InvalidConfig("thinning must be >= 1".into()));
        }
        if self.num_cutpoints == 0 {
            return Err(BartError::InvalidConfig("num_cutpoints must be >= 1".into()));
        }
        if let Some(sd) = self.leaf_sd_override {
            if !(sd > 0.0) || !sd.is_finite() {
                return Err(BartError::InvalidConfig(format!(
                    "leaf_sd_override must be finite and > 0, got {sd}"
                )));
            }
        }
        Ok(())
    }
}

impl Default for BartConfig {
    fn default() -> Self {
        Self::default_continuous()
    }
}
