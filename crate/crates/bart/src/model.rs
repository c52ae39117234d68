//! Fitted-model container: posterior draws, prediction, serialization.
//!
//! A [`FittedBart`] holds everything needed to reproduce predictions without
//! the training data: the model kind, the configuration it was fitted with,
//! and the kept posterior draws. Each draw carries its own response transform
//! (`response_offset`, `response_scale`) so a single draw is a self-contained
//! prediction rule. Serialization is JSON with an explicit format-version tag;
//! floating-point values survive the round trip bit-for-bit (the writer emits
//! shortest-round-trip decimals).

use serde::{Deserialize, Serialize};

use crate::config::BartConfig;
use crate::tree::DecisionTree;
use crate::{phi_clamped, BartError, Result};

/// Serialization format version; bumped on any incompatible layout change.
pub const FORMAT_VERSION: u32 = 1;

/// Which likelihood the ensemble was fitted under.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ModelKind {
    /// Gaussian response, identity link.
    Continuous,
    /// Bernoulli response, probit link via latent-normal augmentation.
    Probit,
}

/// One kept posterior draw: a tree ensemble, its error scale, and the response
/// standardization that de-standardizes the tree sum at prediction time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleDraw {
    /// The sum-of-trees components; node vectors are stored in preorder.
    pub trees: Vec<DecisionTree>,
    /// Error standard deviation on the original response scale; absent for
    /// probit fits, where the latent scale is fixed at 1.
    pub sigma: Option<f64>,
    /// Additive offset applied to the tree sum (continuous: response
    /// mid-range; probit: latent intercept anchored at the response mean).
    pub response_offset: f64,
    /// Multiplier applied to the tree sum (continuous: response range;
    /// probit: 1).
    pub response_scale: f64,
}

impl EnsembleDraw {
    /// De-standardized ensemble score at `x` (before any link function).
    fn score(&self, x: &[f64]) -> f64 {
        let sum: f64 = self.trees.iter().map(|t| t.predict_row(x)).sum();
        self.response_offset + self.response_scale * sum
    }
}

/// A fitted sum-of-trees model: posterior draws plus identifying metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedBart {
    /// Serialization format tag; checked on load.
    pub format_version: u32,
    /// Likelihood variant.
    pub kind: ModelKind,
    /// Configuration the model was fitted with (echoed for provenance).
    pub config: BartConfig,
    /// Number of covariate columns expected by `predict`.
    pub num_covariates: usize,
    /// Column labels, aligned with the design matrix the model was fitted on.
    pub covariate_names: Vec<String>,
    /// Kept posterior draws, in chain order.
    pub draws: Vec<EnsembleDraw>,
}

impl FittedBart {
    /// Assembles a model from parts (used by the samplers and by tests that
    /// construct ensembles by hand). Default column labels `x0..x{p-1}` are
    /// generated; callers may overwrite `covariate_names` afterwards.
    pub fn from_parts(
        kind: ModelKind,
        config: BartConfig,
        num_covariates: usize,
        draws: Vec<EnsembleDraw>,
    ) -> Self {
        let covariate_names = (0..num_covariates).map(|j| format!("x{j}")).collect();
        FittedBart { format_version: FORMAT_VERSION, kind, config, num_covariates, covariate_names, draws }
    }

    /// Number of kept posterior draws.
    pub fn num_draws(&self) -> usize {
        self.draws.len()
    }

    /// Prediction from draw `draw_index` at covariate row `x`.
    ///
    /// Continuous models return the conditional-mean sample
    /// `offset + scale · Σ_r tree_r(x)`; probit models return the event
    /// probability `Φ(offset + Σ_r tree_r(x))` clamped away from 0 and 1.
    /// Pure: identical inputs give bit-identical outputs.
    pub fn predict(&self, draw_index: usize, x: &[f64]) -> Result<f64> {
        if draw_index >= self.draws.len() {
            return Err(BartError::InvalidInput(format!(
                "draw index {draw_index} out of range (have {} draws)",
                self.draws.len()
            )));
        }
        if x.len() != self.num_covariates {
            return Err(BartError::InvalidInput(format!(
                "covariate row has {} entries, model expects {}",
                x.len(),
                self.num_covariates
            )));
        }
        Ok(self.predict_unchecked(draw_index, x))
    }

    /// Prediction without argument validation; callers must guarantee
    /// `draw_index < num_draws()` and `x.len() == num_covariates`.
    #[inline]
    pub fn predict_unchecked(&self, draw_index: usize, x: &[f64]) -> f64 {
        let score = self.draws[draw_index].score(x);
        match self.kind {
            ModelKind::Continuous => score,
            ModelKind::Probit => phi_clamped(score),
        }
    }

    /// Posterior mean prediction at `x` (average of `predict` over all draws).
    pub fn predict_mean(&self, x: &[f64]) -> Result<f64> {
        if self.draws.is_empty() {
            return Err(BartError::InvalidInput("model has no draws".into()));
        }
        // Validate once, then take the unchecked path per draw.
        let first = self.predict(0, x)?;
        let rest: f64 = (1..self.draws.len()).map(|q| self.predict_unchecked(q, x)).sum();
        Ok((first + rest) / self.draws.len() as f64)
    }

    /// Serializes to JSON.
    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string(self).map_err(|e| BartError::Serialization(e.to_string()))
    }

    /// Deserializes from JSON, rejecting unknown format versions.
    pub fn from_json(json: &str) -> Result<Self> {
        let model: FittedBart =
            serde_json::from_str(json).map_err(|e| BartError::Serialization(e.to_string()))?;
        if model.format_version != FORMAT_VERSION {
            return Err(BartError::Serialization(format!(
                "unsupported format version {} (expected {})",
                model.format_version, FORMAT_VERSION
            )));
        }
        Ok(model)
    }

    /// Writes the JSON form to a file.
    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        let json = self.to_json()?;
        std::fs::write(path, json).map_err(|e| BartError::Serialization(e.to_string()))
    }

    /// Reads a model back from a file written by [`FittedBart::save`].
    pub fn load(path: &std::path::Path) -> Result<Self> {
        let json =
            std::fs::read_to_string(path).map_err(|e| BartError::Serialization(e.to_string()))?;
        Self::from_json(&json)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tree::{DecisionTree, TreeNode};

    fn split_tree(var: usize, cut: f64, left_value: f64, right_value: f64) -> DecisionTree {
        let mut tree = DecisionTree::stump(0.0);
        tree.grow(0, var, cut);
        if let TreeNode::Leaf { value } = &mut tree.nodes[1] {
            *value = left_value;
        }
        if let TreeNode::Leaf { value } = &mut tree.nodes[2] {
            *value = right_value;
        }
        tree
    }

    fn two_tree_model(kind: ModelKind) -> FittedBart {
        let tree = split_tree(0, 0.5, -1.0, 1.0);
        let draw = EnsembleDraw {
            trees: vec![tree.clone(), tree],
            sigma: Some(1.0),
            response_offset: 0.0,
            response_scale: 1.0,
        };
        FittedBart::from_parts(kind, BartConfig::default_continuous(), 1, vec![draw])
    }

    #[test]
    fn two_identical_trees_sum_their_leaves() {
        let model = two_tree_model(ModelKind::Continuous);
        assert_eq!(model.predict(0, &[0.3]).unwrap(), -2.0);
        assert_eq!(model.predict(0, &[0.9]).unwrap(), 2.0);
    }

    #[test]
    fn boundary_row_routes_left() {
        let model = two_tree_model(ModelKind::Continuous);
        assert_eq!(model.predict(0, &[0.5]).unwrap(), -2.0);
    }

    #[test]
    fn probit_all_zero_leaves_predicts_half() {
        let draw = EnsembleDraw {
            trees: vec![DecisionTree::stump(0.0); 3],
            sigma: None,
            response_offset: 0.0,
            response_scale: 1.0,
        };
        let model =
            FittedBart::from_parts(ModelKind::Probit, BartConfig::default_probit(), 2, vec![draw]);
        assert_eq!(model.predict(0, &[0.1, 0.7]).unwrap(), 0.5);
    }

    #[test]
    fn prediction_applies_offset_and_scale() {
        let tree = split_tree(0, 0.5, -0.25, 0.25);
        let draw = EnsembleDraw {
            trees: vec![tree],
            sigma: Some(0.3),
            response_offset: 10.0,
            response_scale: 4.0,
        };
        let model = FittedBart::from_parts(
            ModelKind::Continuous,
            BartConfig::default_continuous(),
            1,
            vec![draw],
        );
        assert_eq!(model.predict(0, &[0.0]).unwrap(), 10.0 - 1.0);
        assert_eq!(model.predict(0, &[1.0]).unwrap(), 10.0 + 1.0);
    }

    #[test]
    fn out_of_range_draw_and_wrong_width_are_errors() {
        let model = two_tree_model(ModelKind::Continuous);
        assert!(model.predict(1, &[0.3]).is_err());
        assert!(model.predict(0, &[0.3, 0.4]).is_err());
    }

    #[test]
    fn json_round_trip_is_lossless() {
        let mut model = two_tree_model(ModelKind::Continuous);
        model.draws[0].response_offset = 0.1 + 0.2; // non-representable decimal
        model.draws[0].response_scale = std::f64::consts::PI;
        model.draws[0].sigma = Some(1.0 / 3.0);
        let json = model.to_json().unwrap();
        let restored = FittedBart::from_json(&json).unwrap();
        assert_eq!(model, restored);
        let (a, b) = (&model.draws[0], &restored.draws[0]);
        assert_eq!(a.response_offset.to_bits(), b.response_offset.to_bits());
        assert_eq!(a.sigma.unwrap().to_bits(), b.sigma.unwrap().to_bits());
    }

    #[test]
    fn unknown_format_version_is_rejected() {
        let mut model = two_tree_model(ModelKind::Continuous);
        model.format_version = 999;
        let json = serde_json::to_string(&model).unwrap();
        let err = FittedBart::from_json(&json).unwrap_err();
        assert!(err.to_string().contains("format version"));
    }
}
