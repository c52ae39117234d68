//! Parametric working models: logistic and linear regression.
//!
//! These serve two purposes. The simulation harness generates data from
//! known coefficient vectors and fits maximum-likelihood comparators; and
//! the plug-in G-computation estimator wraps the fits as
//! [`ConditionalModel`]s with a single "draw" (the MLE — no posterior).
//!
//! Logistic fits use iteratively reweighted least squares. When the solve
//! is singular or the iteration fails to converge (separation inflates the
//! coefficients without bound), the fit restarts with a small ridge penalty
//! and reports that on the result.

use std::fmt;
use std::sync::Arc;

use bart::DesignMatrix;
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::Distribution;

use crate::models::{ConditionalModel, ResponseKind};
use crate::{MedgcError, Result};

/// Distribution family of a generalized linear model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GlmFamily {
    /// Bernoulli response with a logit link.
    Logistic,
    /// Gaussian response with an identity link and residual scale `sigma`.
    Gaussian {
        /// Residual standard deviation.
        sigma: f64,
    },
}

/// A fitted generalized linear model. Coefficients start with the
/// intercept, followed by one slope per design-matrix column.
#[derive(Debug, Clone, PartialEq)]
pub struct GlmFit {
    /// Intercept-first coefficient vector (length `p + 1`).
    pub coefficients: Vec<f64>,
    /// Response family.
    pub family: GlmFamily,
    /// True when the fit fell back to a ridge-penalized solve (singular
    /// information matrix or non-convergent iteration, e.g. separation).
    pub ridged: bool,
}

impl GlmFit {
    /// Linear predictor `β₀ + Σ βₖ xₖ`.
    pub fn linear_predictor(&self, covariates: &[f64]) -> Result<f64> {
        if covariates.len() + 1 != self.coefficients.len() {
            return Err(MedgcError::InvalidInput(format!(
                "expected {} covariates, got {}",
                self.coefficients.len() - 1,
                covariates.len()
            )));
        }
        let mut eta = self.coefficients[0];
        for (beta, x) in self.coefficients[1..].iter().zip(covariates) {
            eta += beta * x;
        }
        Ok(eta)
    }
}

/// Logistic sigmoid clamped strictly inside (0, 1).
pub fn sigmoid(eta: f64) -> f64 {
    let p = 1.0 / (1.0 + (-eta).exp());
    p.clamp(bart::PROBABILITY_CLAMP, 1.0 - bart::PROBABILITY_CLAMP)
}

const MAX_IRLS_ITERATIONS: usize = 50;
const IRLS_TOLERANCE: f64 = 1e-10;
const RIDGE_PENALTY: f64 = 1e-4;
const WEIGHT_FLOOR: f64 = 1e-10;

fn design_with_intercept(x: &DesignMatrix) -> DMatrix<f64> {
    let n = x.num_rows();
    let p = x.num_cols();
    DMatrix::from_fn(n, p + 1, |r, c| if c == 0 { 1.0 } else { x.get(r, c - 1) })
}

fn check_inputs(x: &DesignMatrix, y: &[f64]) -> Result<()> {
    if x.num_rows() != y.len() {
        return Err(MedgcError::InvalidInput(format!(
            "design has {} rows but the response has {}",
            x.num_rows(),
            y.len()
        )));
    }
    if x.num_rows() == 0 {
        return Err(MedgcError::InvalidInput("cannot fit a model to zero rows".into()));
    }
    Ok(())
}

/// One IRLS run; `Ok(None)` signals a singular solve or non-convergence.
fn irls(
    design: &DMatrix<f64>,
    y: &DVector<f64>,
    ridge: f64,
    max_iterations: usize,
) -> Option<DVector<f64>> {
    let p = design.ncols();
    let mut beta = DVector::zeros(p);
    for _ in 0..max_iterations {
        let eta = design * &beta;
        let mu = eta.map(sigmoid);
        let weights = mu.map(|m| (m * (1.0 - m)).max(WEIGHT_FLOOR));
        // Newton step on the (optionally ridge-penalized) log-likelihood:
        // information XᵀWX + λI, score Xᵀ(y − μ) − λβ. With λ > 0 the
        // stationary point exists and is unique even under separation.
        let weighted = DMatrix::from_fn(design.nrows(), p, |r, c| design[(r, c)] * weights[r]);
        let mut information = design.transpose() * weighted;
        for d in 0..p {
            information[(d, d)] += ridge;
        }
        let score = design.transpose() * (y - &mu) - ridge * &beta;
        let step = information.lu().solve(&score)?;
        if step.iter().any(|v| !v.is_finite()) {
            return None;
        }
        let done = step.amax() < IRLS_TOLERANCE;
        beta += step;
        if done {
            return Some(beta);
        }
    }
    None
}

/// Fits a logistic regression of `y` (0/1) on `x` by maximum likelihood.
/// An intercept is always included. Falls back to a ridge-penalized fit,
/// flagged on the result, when the plain fit is singular or does not
/// converge.
pub fn fit_logistic(x: &DesignMatrix, y: &[f64]) -> Result<GlmFit> {
    check_inputs(x, y)?;
    if y.iter().any(|v| *v != 0.0 && *v != 1.0) {
        return Err(MedgcError::InvalidInput("logistic response must be 0/1".into()));
    }
    let design = design_with_intercept(x);
    let response = DVector::from_column_slice(y);
    let (beta, ridged) = match irls(&design, &response, 0.0, MAX_IRLS_ITERATIONS) {
        Some(beta) => (beta, false),
        None => {
            let beta = irls(&design, &response, RIDGE_PENALTY, 4 * MAX_IRLS_ITERATIONS)
                .ok_or_else(|| {
                    MedgcError::Numeric("logistic fit failed even with a ridge penalty".into())
                })?;
            (beta, true)
        }
    };
    Ok(GlmFit {
        coefficients: beta.iter().copied().collect(),
        family: GlmFamily::Logistic,
        ridged,
    })
}

/// Fits a linear regression of `y` on `x` by least squares, with an
/// intercept. The residual scale uses the degrees-of-freedom-corrected
/// variance. Falls back to a ridge-penalized solve, flagged on the result,
/// when the normal equations are singular.
pub fn fit_linear(x: &DesignMatrix, y: &[f64]) -> Result<GlmFit> {
    check_inputs(x, y)?;
    let design = design_with_intercept(x);
    let response = DVector::from_column_slice(y);
    let gram = design.transpose() * &design;
    let moment = design.transpose() * &response;
    let (beta, ridged) = match gram.clone().lu().solve(&moment) {
        Some(beta) if beta.iter().all(|v| v.is_finite()) => (beta, false),
        _ => {
            let mut penalized = gram;
            for d in 0..penalized.ncols() {
                penalized[(d, d)] += RIDGE_PENALTY;
            }
            let beta = penalized.lu().solve(&moment).ok_or_else(|| {
                MedgcError::Numeric("linear fit failed even with a ridge penalty".into())
            })?;
            (beta, true)
        }
    };
    let residuals = &response - design * &beta;
    let rss: f64 = residuals.iter().map(|r| r * r).sum();
    let df = y.len().saturating_sub(beta.len());
    let variance = if df > 0 { rss / df as f64 } else { rss / y.len() as f64 };
    Ok(GlmFit {
        coefficients: beta.iter().copied().collect(),
        family: GlmFamily::Gaussian { sigma: variance.sqrt() },
        ridged,
    })
}

/// A fitted GLM acting as a single-draw conditional distribution, with an
/// optional feature map applied to the covariates before the linear
/// predictor (identity when absent).
#[derive(Clone)]
pub struct GlmConditional {
    fit: GlmFit,
    feature_map: Option<Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>>,
}

impl fmt::Debug for GlmConditional {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("GlmConditional")
            .field("fit", &self.fit)
            .field("has_feature_map", &self.feature_map.is_some())
            .finish()
    }
}

impl GlmConditional {
    /// Wraps a fit whose features are the raw covariates.
    pub fn new(fit: GlmFit) -> Self {
        GlmConditional { fit, feature_map: None }
    }

    /// Wraps a fit whose features are `feature_map(covariates)`.
    pub fn with_feature_map(
        fit: GlmFit,
        feature_map: impl Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static,
    ) -> Self {
        GlmConditional { fit, feature_map: Some(Arc::new(feature_map)) }
    }

    /// The wrapped fit.
    pub fn fit(&self) -> &GlmFit {
        &self.fit
    }

    fn eta(&self, covariates: &[f64]) -> Result<f64> {
        match &self.feature_map {
            Some(map) => self.fit.linear_predictor(&map(covariates)),
            None => self.fit.linear_predictor(covariates),
        }
    }
}

impl ConditionalModel for GlmConditional {
    fn num_draws(&self) -> usize {
        1
    }

    fn response_kind(&self) -> ResponseKind {
        match self.fit.family {
            GlmFamily::Logistic => ResponseKind::Binary,
            GlmFamily::Gaussian { .. } => ResponseKind::Continuous,
        }
    }

    fn draw_value(&self, q: usize, covariates: &[f64], rng: &mut ChaCha8Rng) -> Result<f64> {
        if q != 0 {
            return Err(MedgcError::InvalidInput(format!(
                "a maximum-likelihood fit has a single draw; got index {q}"
            )));
        }
        let eta = self.eta(covariates)?;
        match self.fit.family {
            GlmFamily::Logistic => {
                Ok(if rng.gen::<f64>() < sigmoid(eta) { 1.0 } else { 0.0 })
            }
            GlmFamily::Gaussian { sigma } => {
                let standard_normal: f64 = rand_distr::StandardNormal.sample(rng);
                Ok(eta + sigma * standard_normal)
            }
        }
    }

    fn probability(&self, q: usize, covariates: &[f64]) -> Result<f64> {
        if q != 0 {
            return Err(MedgcError::InvalidInput(format!(
                "a maximum-likelihood fit has a single draw; got index {q}"
            )));
        }
        match self.fit.family {
            GlmFamily::Logistic => Ok(sigmoid(self.eta(covariates)?)),
            GlmFamily::Gaussian { .. } => Err(MedgcError::InvalidInput(
                "probability is undefined for a continuous-response model".into(),
            )),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::streams::stream;
    use approx::assert_abs_diff_eq;
    use rand::Rng;

    fn design(rows: Vec<Vec<f64>>) -> DesignMatrix {
        DesignMatrix::from_rows(&rows).unwrap()
    }

    #[test]
    fn linear_fit_recovers_exact_coefficients_on_noiseless_data() {
        let rows: Vec<Vec<f64>> = (0..40)
            .map(|i| vec![i as f64 / 10.0, ((i * 7) % 13) as f64])
            .collect();
        let y: Vec<f64> = rows.iter().map(|r| 2.0 - 1.5 * r[0] + 0.25 * r[1]).collect();
        let fit = fit_linear(&design(rows), &y).unwrap();
        assert!(!fit.ridged);
        assert_abs_diff_eq!(fit.coefficients[0], 2.0, epsilon = 1e-9);
        assert_abs_diff_eq!(fit.coefficients[1], -1.5, epsilon = 1e-9);
        assert_abs_diff_eq!(fit.coefficients[2], 0.25, epsilon = 1e-9);
        match fit.family {
            GlmFamily::Gaussian { sigma } => assert!(sigma < 1e-8),
            other => panic!("unexpected family {other:?}"),
        }
    }

    #[test]
    fn logistic_fit_recovers_known_coefficients_at_large_n() {
        let mut rng = stream(&[2024]);
        let n = 20_000;
        let mut rows = Vec::with_capacity(n);
        let mut y = Vec::with_capacity(n);
        for _ in 0..n {
            let x1 = rng.gen::<f64>() * 2.0 - 1.0;
            let x2 = rng.gen::<f64>();
            let p = sigmoid(-0.5 + 1.2 * x1 - 0.8 * x2);
            y.push(if rng.gen::<f64>() < p { 1.0 } else { 0.0 });
            rows.push(vec![x1, x2]);
        }
        let fit = fit_logistic(&design(rows), &y).unwrap();
        assert!(!fit.ridged);
        // Roughly 3 standard errors at this sample size.
        assert_abs_diff_eq!(fit.coefficients[0], -0.5, epsilon = 0.15);
        assert_abs_diff_eq!(fit.coefficients[1], 1.2, epsilon = 0.15);
        assert_abs_diff_eq!(fit.coefficients[2], -0.8, epsilon = 0.20);
    }

    #[test]
    fn separated_data_falls_back_to_a_flagged_ridge_fit() {
        // Perfectly separated: y = 1 exactly when x > 0.
        let rows: Vec<Vec<f64>> = (-10..10).map(|i| vec![i as f64 + 0.5]).collect();
        let y: Vec<f64> = rows.iter().map(|r| if r[0] > 0.0 { 1.0 } else { 0.0 }).collect();
        let fit = fit_logistic(&design(rows), &y).unwrap();
        assert!(fit.ridged, "separation must trigger the ridge fallback");
        assert!(fit.coefficients.iter().all(|c| c.is_finite()));
        assert!(fit.coefficients[1] > 0.0);
    }

    #[test]
    fn collinear_design_falls_back_for_the_linear_fit() {
        // Second column is an exact copy of the first.
        let rows: Vec<Vec<f64>> = (0..20).map(|i| vec![i as f64, i as f64]).collect();
        let y: Vec<f64> = rows.iter().map(|r| 1.0 + r[0]).collect();
        let fit = fit_linear(&design(rows), &y).unwrap();
        assert!(fit.ridged);
        // The fitted surface still predicts well despite the ambiguity.
        let eta = fit.linear_predictor(&[4.0, 4.0]).unwrap();
        assert_abs_diff_eq!(eta, 5.0, epsilon = 1e-3);
    }

    #[test]
    fn conditional_wrapper_exposes_the_single_draw_interface() {
        let fit = GlmFit {
            coefficients: vec![0.0, 1.0],
            family: GlmFamily::Logistic,
            ridged: false,
        };
        let model = GlmConditional::new(fit);
        assert_eq!(model.num_draws(), 1);
        assert_eq!(model.response_kind(), ResponseKind::Binary);
        assert_abs_diff_eq!(model.probability(0, &[0.0]).unwrap(), 0.5, epsilon = 1e-12);
        assert!(model.probability(1, &[0.0]).is_err());
    }

    #[test]
    fn feature_map_transforms_covariates_before_the_linear_predictor() {
        let fit = GlmFit {
            coefficients: vec![0.0, 1.0, 2.0],
            family: GlmFamily::Gaussian { sigma: 0.0 },
            ridged: false,
        };
        let model = GlmConditional::with_feature_map(fit, |covs| vec![covs[0], covs[0] * covs[0]]);
        let mut rng = stream(&[9]);
        let value = model.draw_value(0, &[3.0], &mut rng).unwrap();
        assert_abs_diff_eq!(value, 3.0 + 2.0 * 9.0, epsilon = 1e-12);
    }
}
