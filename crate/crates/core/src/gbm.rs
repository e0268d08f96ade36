//! Least-squares gradient boosting over shallow regression trees.

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, check_finite, Error, Result};
use crate::trees::{RegressionTree, TreeBuilder, TreeParams};
use crate::types::Regressor;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GbmParams {
    pub n_stages: usize,
    pub learning_rate: f64,
    pub max_depth: usize,
    pub min_samples_leaf: usize,
}

impl Default for GbmParams {
    fn default() -> Self {
        Self {
            n_stages: 100,
            learning_rate: 0.1,
            max_depth: 3,
            min_samples_leaf: 5,
        }
    }
}

impl GbmParams {
    pub fn validate(&self) -> Result<()> {
        if self.n_stages == 0 {
            return Err(Error::InvalidArgument("gbm needs at least one stage".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "gbm learning rate must lie in (0, 1], got {}",
                self.learning_rate
            )));
        }
        if self.min_samples_leaf == 0 {
            return Err(Error::InvalidArgument("min_samples_leaf must be >= 1".into()));
        }
        Ok(())
    }

    fn tree_params(&self) -> TreeParams {
        TreeParams {
            max_depth: self.max_depth,
            min_samples_leaf: self.min_samples_leaf,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbmEnsemble {
    pub n_features: usize,
    pub initial_prediction: f64,
    pub learning_rate: f64,
    pub trees: Vec<RegressionTree>,
}

/// Normalised importance vector; `degenerate` is set when no split was ever
/// made and the uniform vector was substituted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureImportance {
    pub values: Vec<f64>,
    pub degenerate: bool,
}

pub fn fit_gbm(x: &[Vec<f64>], y: &[f64], params: &GbmParams) -> Result<GbmEnsemble> {
    params.validate()?;
    check_dim(x.len(), y.len())?;
    if y.len() < 2 {
        return Err(Error::InvalidArgument("gbm needs at least 2 rows".into()));
    }
    check_finite(y, "gbm targets")?;
    let builder = TreeBuilder::new(x)?;
    fit_gbm_with_builder(&builder, x, y, params)
}

/// Boosting on a pre-indexed feature matrix. `x` must be the rows the
/// builder was created from.
pub fn fit_gbm_with_builder(
    builder: &TreeBuilder,
    x: &[Vec<f64>],
    y: &[f64],
    params: &GbmParams,
) -> Result<GbmEnsemble> {
    params.validate()?;
    check_dim(builder.n_rows(), y.len())?;
    check_dim(builder.n_rows(), x.len())?;
    let initial_prediction = y.iter().sum::<f64>() / y.len() as f64;
    let mut residual: Vec<f64> = y.iter().map(|v| v - initial_prediction).collect();
    let mut trees = Vec::with_capacity(params.n_stages);
    for _ in 0..params.n_stages {
        let tree = builder.fit(&residual, params.tree_params())?;
        for (r, row) in residual.iter_mut().zip(x) {
            *r -= params.learning_rate * tree.predict_unchecked(row);
        }
        trees.push(tree);
    }
    Ok(GbmEnsemble {
        n_features: builder.n_features(),
        initial_prediction,
        learning_rate: params.learning_rate,
        trees,
    })
}

impl GbmEnsemble {
    pub fn n_stages(&self) -> usize {
        self.trees.len()
    }

    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        check_dim(self.n_features, x.len())?;
        Ok(self.predict_unchecked(x))
    }

    #[inline]
    pub(crate) fn predict_unchecked(&self, x: &[f64]) -> f64 {
        let boost: f64 = self.trees.iter().map(|t| t.predict_unchecked(x)).sum();
        self.initial_prediction + self.learning_rate * boost
    }

    /// Prediction using only the first `stages` trees.
    pub fn predict_staged(&self, x: &[f64], stages: usize) -> Result<f64> {
        check_dim(self.n_features, x.len())?;
        let boost: f64 = self
            .trees
            .iter()
            .take(stages)
            .map(|t| t.predict_unchecked(x))
            .sum();
        Ok(self.initial_prediction + self.learning_rate * boost)
    }

    /// Shrunken contribution of every stage at `x`.
    pub fn stage_contributions(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.n_features, x.len())?;
        Ok(self
            .trees
            .iter()
            .map(|t| self.learning_rate * t.predict_unchecked(x))
            .collect())
    }

    /// Mean split gain across trees, normalised to sum to one.
    pub fn feature_importance(&self) -> FeatureImportance {
        let d = self.n_features;
        let mut values = vec![0.0; d];
        for tree in &self.trees {
            for (v, g) in values.iter_mut().zip(tree.split_gains()) {
                *v += g;
            }
        }
        if !self.trees.is_empty() {
            for v in &mut values {
                *v /= self.trees.len() as f64;
            }
        }
        let total: f64 = values.iter().sum();
        if total > 0.0 {
            for v in &mut values {
                *v /= total;
            }
            FeatureImportance {
                values,
                degenerate: false,
            }
        } else {
            log::warn!("gbm importance: no splits in ensemble; reporting uniform importance");
            FeatureImportance {
                values: vec![1.0 / d as f64; d],
                degenerate: true,
            }
        }
    }
}

impl Regressor for GbmEnsemble {
    fn n_features(&self) -> usize {
        self.n_features
    }

    fn predict_row(&self, x: &[f64]) -> Result<f64> {
        self.predict(x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_stage() -> GbmEnsemble {
        let params = GbmParams {
            n_stages: 1,
            learning_rate: 1.0,
            max_depth: 1,
            min_samples_leaf: 1,
        };
        fit_gbm(&[vec![0.0], vec![1.0]], &[0.0, 1.0], &params).unwrap()
    }

    #[test]
    fn single_stage_hand_computed() {
        // F0 = 0.5, residuals -0.5/+0.5, stump leaves -0.5/+0.5, nu = 1.
        let m = one_stage();
        assert_eq!(m.initial_prediction, 0.5);
        assert_eq!(m.predict(&[0.0]).unwrap(), 0.0);
        assert_eq!(m.predict(&[1.0]).unwrap(), 1.0);
        assert!(m.predict(&[0.0, 0.0]).is_err());
    }

    #[test]
    fn constant_target_predicts_constant() {
        let x: Vec<Vec<f64>> = (0..30).map(|i| vec![i as f64, (i % 4) as f64]).collect();
        let y = vec![2.5; 30];
        let m = fit_gbm(&x, &y, &GbmParams::default()).unwrap();
        for row in &x {
            assert_eq!(m.predict(row).unwrap(), 2.5);
        }
        let imp = m.feature_importance();
        assert!(imp.degenerate);
        assert_eq!(imp.values, vec![0.5, 0.5]);
    }

    #[test]
    fn prediction_is_sum_of_stages() {
        let x: Vec<Vec<f64>> = (0..60)
            .map(|i| vec![(i as f64 * 0.37).sin(), (i % 7) as f64])
            .collect();
        let y: Vec<f64> = x.iter().map(|r| r[0] * 2.0 + r[1] * r[1] * 0.1).collect();
        let m = fit_gbm(&x, &y, &GbmParams { n_stages: 20, ..GbmParams::default() }).unwrap();
        for row in &x {
            let staged: f64 = m.stage_contributions(row).unwrap().iter().sum();
            assert!((m.predict(row).unwrap() - (m.initial_prediction + staged)).abs() < 1e-12);
        }
    }

    #[test]
    fn importance_one_hot_when_single_feature_used() {
        let x: Vec<Vec<f64>> = (0..40).map(|i| vec![i as f64, 3.0]).collect();
        let y: Vec<f64> = (0..40).map(|i| (i / 10) as f64).collect();
        let m = fit_gbm(&x, &y, &GbmParams::default()).unwrap();
        let imp = m.feature_importance();
        assert_eq!(imp.values, vec![1.0, 0.0]);
        assert!(!imp.degenerate);
    }

    #[test]
    fn training_mse_never_increases_with_stages() {
        let x: Vec<Vec<f64>> = (0..80)
            .map(|i| vec![(i as f64 * 0.11).cos(), (i as f64 * 0.7).sin()])
            .collect();
        let y: Vec<f64> = x.iter().map(|r| r[0] * r[1] + r[0]).collect();
        let m = fit_gbm(&x, &y, &GbmParams { n_stages: 40, ..GbmParams::default() }).unwrap();
        let mut prev = f64::INFINITY;
        for k in 0..=40 {
            let mse: f64 = x
                .iter()
                .zip(&y)
                .map(|(r, t)| (m.predict_staged(r, k).unwrap() - t).powi(2))
                .sum::<f64>()
                / 80.0;
            assert!(mse <= prev + 1e-12);
            prev = mse;
        }
    }

    #[test]
    fn rejects_bad_params_and_inputs() {
        let x = vec![vec![0.0], vec![1.0]];
        let bad = GbmParams { learning_rate: 0.0, ..GbmParams::default() };
        assert!(fit_gbm(&x, &[0.0, 1.0], &bad).is_err());
        assert!(fit_gbm(&x, &[0.0, f64::NAN], &GbmParams::default()).is_err());
        assert!(fit_gbm(&[vec![f64::INFINITY], vec![1.0]], &[0.0, 1.0], &GbmParams::default()).is_err());
        assert!(fit_gbm(&x[..1], &[0.0], &GbmParams::default()).is_err());
    }
}
