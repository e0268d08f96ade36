//! Distilled policies: one scalar regressor per action dimension.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::ebm::{fit_ebm, EbmModel, EbmParams};
use crate::error::{check_dim, Error, Result};
use crate::gbm::{fit_gbm_with_builder, GbmEnsemble, GbmParams};
use crate::symreg::{evolve, select_policy_expression, ArchiveEntry, GpParams, SymbolicExpression};
use crate::trees::TreeBuilder;
use crate::types::{derive_seed, Action, Observation, Policy, PolicyFamily, Regressor};

/// Hyperparameters of every learnable family.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LearnerParams {
    pub gbm: GbmParams,
    pub ebm: EbmParams,
    pub symbolic: GpParams,
}

impl LearnerParams {
    pub fn validate(&self) -> Result<()> {
        self.gbm.validate()?;
        self.ebm.validate()?;
        self.symbolic.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredExpression {
    pub complexity: usize,
    pub train_loss: f64,
    pub validation_loss: f64,
    pub expression: SymbolicExpression,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SymbolicOutput {
    pub expression: SymbolicExpression,
    /// Final Pareto archive, kept for warm starts and reporting.
    pub archive: Vec<ScoredExpression>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", content = "outputs", rename_all = "lowercase")]
pub enum PolicyModel {
    Gbm(Vec<GbmEnsemble>),
    Ebm(Vec<EbmModel>),
    Symbolic(Vec<SymbolicOutput>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistilledPolicy {
    pub feature_names: Vec<String>,
    pub action_names: Vec<String>,
    pub model: PolicyModel,
}

impl DistilledPolicy {
    pub fn n_outputs(&self) -> usize {
        self.action_names.len()
    }

    /// Raw per-output prediction, before actuator clamping.
    pub fn predict_raw(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.feature_names.len(), x.len())?;
        match &self.model {
            PolicyModel::Gbm(m) => m.iter().map(|e| e.predict(x)).collect(),
            PolicyModel::Ebm(m) => m.iter().map(|e| e.predict(x)).collect(),
            PolicyModel::Symbolic(m) => m.iter().map(|e| e.expression.evaluate(x)).collect(),
        }
    }

    /// Scalar regressor for one output.
    pub fn output(&self, index: usize) -> Result<&dyn Regressor> {
        let out: Option<&dyn Regressor> = match &self.model {
            PolicyModel::Gbm(m) => m.get(index).map(|e| e as &dyn Regressor),
            PolicyModel::Ebm(m) => m.get(index).map(|e| e as &dyn Regressor),
            PolicyModel::Symbolic(m) => m.get(index).map(|e| &e.expression as &dyn Regressor),
        };
        out.ok_or_else(|| Error::InvalidArgument(format!("no output {index}")))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let policy: Self = serde_json::from_str(text)?;
        let outputs = match &policy.model {
            PolicyModel::Gbm(m) => m.len(),
            PolicyModel::Ebm(m) => m.len(),
            PolicyModel::Symbolic(m) => m.len(),
        };
        check_dim(policy.action_names.len(), outputs)?;
        Ok(policy)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()? + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

impl Policy for DistilledPolicy {
    /// Predictions are clamped to the actuator range; a non-finite output
    /// (possible only from an extreme symbolic expression) becomes 0.
    fn act(&self, observation: &Observation) -> Result<Action> {
        let raw = self.predict_raw(observation.as_slice())?;
        Action::new(
            raw.into_iter()
                .map(|v| if v.is_finite() { v.clamp(-1.0, 1.0) } else { 0.0 })
                .collect(),
        )
    }

    fn family(&self) -> PolicyFamily {
        match self.model {
            PolicyModel::Gbm(_) => PolicyFamily::Gbm,
            PolicyModel::Ebm(_) => PolicyFamily::Ebm,
            PolicyModel::Symbolic(_) => PolicyFamily::Symbolic,
        }
    }

    fn input_dim(&self) -> usize {
        self.feature_names.len()
    }

    fn output_dim(&self) -> usize {
        self.action_names.len()
    }
}

fn mse(expr: &SymbolicExpression, x: &[Vec<f64>], y: &[f64]) -> Result<f64> {
    let mut total = 0.0;
    for (row, t) in x.iter().zip(y) {
        total += (expr.evaluate(row)? - t).powi(2);
    }
    let m = total / y.len() as f64;
    Ok(if m.is_finite() { m } else { f64::INFINITY })
}

/// Fits one model per column of `labels` (rows × outputs). Symbolic fits
/// reuse the matching output's archive from `warm_start` when given and
/// select their expression by mean squared error over all of `x`.
pub fn train_policy(
    family: PolicyFamily,
    x: &[Vec<f64>],
    labels: &[Vec<f64>],
    feature_names: &[String],
    action_names: &[String],
    params: &LearnerParams,
    seed: u64,
    warm_start: Option<&DistilledPolicy>,
) -> Result<DistilledPolicy> {
    check_dim(x.len(), labels.len())?;
    if x.is_empty() {
        return Err(Error::Empty("training rows"));
    }
    let m = action_names.len();
    for row in labels {
        check_dim(m, row.len())?;
    }
    for row in x {
        check_dim(feature_names.len(), row.len())?;
    }
    let column = |k: usize| -> Vec<f64> { labels.iter().map(|r| r[k]).collect() };
    let model = match family {
        PolicyFamily::Gbm => {
            let builder = TreeBuilder::new(x)?;
            let outputs = (0..m)
                .map(|k| fit_gbm_with_builder(&builder, x, &column(k), &params.gbm))
                .collect::<Result<_>>()?;
            PolicyModel::Gbm(outputs)
        }
        PolicyFamily::Ebm => {
            let outputs = (0..m)
                .map(|k| fit_ebm(x, &column(k), feature_names, &params.ebm))
                .collect::<Result<_>>()?;
            PolicyModel::Ebm(outputs)
        }
        PolicyFamily::Symbolic => {
            let previous = match warm_start.map(|p| &p.model) {
                Some(PolicyModel::Symbolic(o)) if o.len() == m => Some(o),
                _ => None,
            };
            let mut outputs = Vec::with_capacity(m);
            for k in 0..m {
                let y = column(k);
                let warm: Vec<SymbolicExpression> = previous
                    .map(|p| p[k].archive.iter().map(|e| e.expression.clone()).collect())
                    .unwrap_or_default();
                let result = evolve(x, &y, &params.symbolic, derive_seed(seed, 0x5e, k as u64), &warm)?;
                let chosen = select_policy_expression(&result.archive, x, &y)?;
                let archive = result
                    .archive
                    .iter()
                    .map(|e: &ArchiveEntry| {
                        Ok(ScoredExpression {
                            complexity: e.complexity,
                            train_loss: e.loss,
                            validation_loss: mse(&e.expression, x, &y)?,
                            expression: e.expression.clone(),
                        })
                    })
                    .collect::<Result<_>>()?;
                outputs.push(SymbolicOutput {
                    expression: chosen.expression.clone(),
                    archive,
                });
            }
            PolicyModel::Symbolic(outputs)
        }
        other => {
            return Err(Error::Unsupported(format!("cannot train a {other} policy")));
        }
    };
    Ok(DistilledPolicy {
        feature_names: feature_names.to_vec(),
        action_names: action_names.to_vec(),
        model,
    })
}
