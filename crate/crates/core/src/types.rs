//! Domain types shared by every stage of the pipeline: observation and
//! action vectors, the feature schema that names observation axes, and the
//! policy / environment capabilities.

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{check_finite, Error, Result};

/// A finite observation vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Observation(Vec<f64>);

impl Observation {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        check_finite(&values, "observation")?;
        Ok(Self(values))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

/// A finite action vector (actuator setpoints).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Action(Vec<f64>);

impl Action {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        check_finite(&values, "action")?;
        Ok(Self(values))
    }

    pub fn zeros(dim: usize) -> Self {
        Self(vec![0.0; dim])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

/// Names, units and group tags of the observation axes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureSchema {
    names: Vec<String>,
    units: Vec<String>,
    groups: Vec<String>,
}

impl FeatureSchema {
    pub fn new(names: Vec<String>, units: Vec<String>, groups: Vec<String>) -> Result<Self> {
        if names.is_empty() {
            return Err(Error::Empty("feature schema"));
        }
        if units.len() != names.len() || groups.len() != names.len() {
            return Err(Error::InvalidArgument(
                "schema names, units and groups must have equal length".into(),
            ));
        }
        let mut seen = HashSet::new();
        for name in &names {
            if !seen.insert(name.as_str()) {
                return Err(Error::InvalidArgument(format!(
                    "duplicate feature name `{name}`"
                )));
            }
        }
        Ok(Self {
            names,
            units,
            groups,
        })
    }

    /// Schema with generated names `x0..x{d-1}` and empty unit/group tags.
    pub fn anonymous(dim: usize) -> Result<Self> {
        Self::new(
            (0..dim).map(|i| format!("x{i}")).collect(),
            vec![String::new(); dim],
            vec![String::new(); dim],
        )
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn units(&self) -> &[String] {
        &self.units
    }

    pub fn groups(&self) -> &[String] {
        &self.groups
    }

    pub fn name(&self, index: usize) -> &str {
        &self.names[index]
    }

    /// Returns a copy of the schema with one extra feature appended.
    pub fn with_feature(&self, name: &str, unit: &str, group: &str) -> Result<Self> {
        let mut names = self.names.clone();
        let mut units = self.units.clone();
        let mut groups = self.groups.clone();
        names.push(name.to_string());
        units.push(unit.to_string());
        groups.push(group.to_string());
        Self::new(names, units, groups)
    }
}

/// Which policy produced an executed action.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Actor {
    Expert,
    Distilled,
}

impl Actor {
    pub fn as_str(self) -> &'static str {
        match self {
            Actor::Expert => "expert",
            Actor::Distilled => "distilled",
        }
    }
}

impl FromStr for Actor {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "expert" => Ok(Actor::Expert),
            "distilled" => Ok(Actor::Distilled),
            other => Err(Error::Parse(format!("unknown actor `{other}`"))),
        }
    }
}

/// Family tag of a policy implementation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PolicyFamily {
    Expert,
    Gbm,
    Ebm,
    Symbolic,
    Zero,
}

impl PolicyFamily {
    pub const LEARNED: [PolicyFamily; 3] =
        [PolicyFamily::Gbm, PolicyFamily::Ebm, PolicyFamily::Symbolic];

    pub fn as_str(self) -> &'static str {
        match self {
            PolicyFamily::Expert => "expert",
            PolicyFamily::Gbm => "gbm",
            PolicyFamily::Ebm => "ebm",
            PolicyFamily::Symbolic => "symbolic",
            PolicyFamily::Zero => "zero",
        }
    }
}

impl fmt::Display for PolicyFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PolicyFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "expert" => Ok(PolicyFamily::Expert),
            "gbm" => Ok(PolicyFamily::Gbm),
            "ebm" => Ok(PolicyFamily::Ebm),
            "symbolic" => Ok(PolicyFamily::Symbolic),
            "zero" => Ok(PolicyFamily::Zero),
            other => Err(Error::Parse(format!(
                "unknown family `{other}` (expected gbm, ebm or symbolic)"
            ))),
        }
    }
}

/// Deterministic mapping from observations to actions.
pub trait Policy {
    fn act(&self, observation: &Observation) -> Result<Action>;

    fn family(&self) -> PolicyFamily;

    fn input_dim(&self) -> usize;

    fn output_dim(&self) -> usize;
}

impl<P: Policy + ?Sized> Policy for &P {
    fn act(&self, observation: &Observation) -> Result<Action> {
        (**self).act(observation)
    }

    fn family(&self) -> PolicyFamily {
        (**self).family()
    }

    fn input_dim(&self) -> usize {
        (**self).input_dim()
    }

    fn output_dim(&self) -> usize {
        (**self).output_dim()
    }
}

/// Policy that always emits the zero action. Used before the first
/// supervised fit exists.
#[derive(Debug, Clone, Copy)]
pub struct ZeroPolicy {
    pub input_dim: usize,
    pub output_dim: usize,
}

impl Policy for ZeroPolicy {
    fn act(&self, observation: &Observation) -> Result<Action> {
        crate::error::check_dim(self.input_dim, observation.len())?;
        Ok(Action::zeros(self.output_dim))
    }

    fn family(&self) -> PolicyFamily {
        PolicyFamily::Zero
    }

    fn input_dim(&self) -> usize {
        self.input_dim
    }

    fn output_dim(&self) -> usize {
        self.output_dim
    }
}

/// Result of a single environment transition.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub observation: Observation,
    pub reward: f64,
    pub done: bool,
}

/// A deterministic episodic environment.
pub trait Environment {
    fn observation_dim(&self) -> usize;

    fn action_dim(&self) -> usize;

    fn episode_length(&self) -> usize;

    fn schema(&self) -> &FeatureSchema;

    fn action_names(&self) -> Vec<String>;

    /// Command applied from the next `reset` on.
    fn set_command(&mut self, command: f64);

    fn reset(&mut self, seed: u64) -> Observation;

    fn step(&mut self, action: &Action) -> Result<Transition>;
}

/// Scalar regressor over a fixed-width feature row.
pub trait Regressor {
    fn n_features(&self) -> usize;

    fn predict_row(&self, x: &[f64]) -> Result<f64>;

    fn predict_rows(&self, rows: &[Vec<f64>]) -> Result<Vec<f64>> {
        rows.iter().map(|r| self.predict_row(r)).collect()
    }
}

/// splitmix64 finaliser; derives independent stream seeds from a base seed.
pub fn derive_seed(base: u64, stream: u64, index: u64) -> u64 {
    let mut z = base
        .wrapping_add(stream.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(index.wrapping_mul(0xD1B5_4A32_D192_ED03));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
