//! DAgger with an episode-dependent expert/learner alternation curriculum.
//!
//! In episode `e` (1-based) the alternation denominator is
//! `n = max(1, ceil(e / n_f))` and the expert acts on step `t` (0-based) iff
//! `t mod n == 0`. Every visited state is labelled with the expert's action,
//! whoever acted, and the learner is refit on the aggregate after each
//! episode.

use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dataset::{AggregatedDataset, TransitionRecord};
use crate::envs::{EnvParams, ExpertGains, Gait};
use crate::error::{check_dim, Error, Result};
use crate::metrics::r2_score;
use crate::model::{train_policy, DistilledPolicy, LearnerParams};
use crate::types::{derive_seed, Action, Actor, Environment, Policy, PolicyFamily};

// Seed streams.
const RESET_STREAM: u64 = 1;
const SPLIT_STREAM: u64 = 2;
const TRAIN_STREAM: u64 = 3;
const EVAL_STREAM: u64 = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AlternationSchedule {
    pub n_f: usize,
    pub max_episodes: usize,
}

impl AlternationSchedule {
    pub fn new(n_f: usize, max_episodes: usize) -> Result<Self> {
        if n_f == 0 || max_episodes == 0 {
            return Err(Error::Config("n_f and max_episodes must be >= 1".into()));
        }
        Ok(Self { n_f, max_episodes })
    }

    /// Alternation denominator for a 1-based episode index.
    pub fn n(&self, episode: usize) -> usize {
        episode.div_ceil(self.n_f).max(1)
    }

    pub fn sequence(&self) -> Vec<usize> {
        (1..=self.max_episodes).map(|e| self.n(e)).collect()
    }

    /// Expert share of the final episode, as `(1, n)`.
    pub fn final_ratio(&self) -> (usize, usize) {
        (1, self.n(self.max_episodes))
    }
}

pub fn actor_for_step(n: usize, step: usize) -> Actor {
    if step % n.max(1) == 0 {
        Actor::Expert
    } else {
        Actor::Distilled
    }
}

/// Fraction of steps on which the expert acts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Ratio {
    Zero,
    /// `1/k`; `Inverse(1)` is pure expert.
    Inverse(usize),
}

impl Ratio {
    pub const ONE: Ratio = Ratio::Inverse(1);

    /// The default sweep grid.
    pub fn default_grid() -> Vec<Ratio> {
        vec![
            Ratio::Zero,
            Ratio::Inverse(8),
            Ratio::Inverse(6),
            Ratio::Inverse(4),
            Ratio::Inverse(2),
            Ratio::ONE,
        ]
    }

    pub fn value(self) -> f64 {
        match self {
            Ratio::Zero => 0.0,
            Ratio::Inverse(k) => 1.0 / k as f64,
        }
    }

    pub fn actor(self, step: usize) -> Actor {
        match self {
            Ratio::Zero => Actor::Distilled,
            Ratio::Inverse(k) => actor_for_step(k, step),
        }
    }
}

impl fmt::Display for Ratio {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Ratio::Zero => f.write_str("0"),
            Ratio::Inverse(1) => f.write_str("1"),
            Ratio::Inverse(k) => write!(f, "1/{k}"),
        }
    }
}

impl FromStr for Ratio {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let bad = || Error::Parse(format!("ratio '{s}' is not 0, 1 or 1/k"));
        match s {
            "0" => Ok(Ratio::Zero),
            "1" => Ok(Ratio::ONE),
            _ => {
                let k = s.strip_prefix("1/").ok_or_else(bad)?;
                match k.trim().parse::<usize>() {
                    Ok(k) if k >= 1 => Ok(Ratio::Inverse(k)),
                    _ => Err(bad()),
                }
            }
        }
    }
}

pub fn parse_ratios(text: &str) -> Result<Vec<Ratio>> {
    let ratios: Vec<Ratio> = text
        .split(',')
        .filter(|s| !s.trim().is_empty())
        .map(str::parse)
        .collect::<Result<_>>()?;
    if ratios.is_empty() {
        return Err(Error::Parse("empty ratio list".into()));
    }
    Ok(ratios)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DistillationConfig {
    pub gait: Gait,
    pub family: PolicyFamily,
    pub seed: u64,
    pub n_f: usize,
    pub max_episodes: usize,
    pub episode_length: usize,
    /// Commands applied round-robin, one per episode.
    pub commands: Vec<f64>,
    /// Refit the learner after every `retrain_every` episodes (and always
    /// after the last).
    pub retrain_every: usize,
    pub test_fraction: f64,
    pub env: EnvParams,
    pub expert: ExpertGains,
    pub learners: LearnerParams,
}

impl Default for DistillationConfig {
    fn default() -> Self {
        Self {
            gait: Gait::Walk,
            family: PolicyFamily::Gbm,
            seed: 0,
            n_f: 4,
            max_episodes: 30,
            episode_length: 1000,
            commands: vec![0.0, 0.25, 0.5, 0.75],
            retrain_every: 1,
            test_fraction: 0.2,
            env: EnvParams::default(),
            expert: ExpertGains::default(),
            learners: LearnerParams::default(),
        }
    }
}

impl DistillationConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let config: Self = toml::from_str(text).map_err(|e| Error::Config(e.message().to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn schedule(&self) -> Result<AlternationSchedule> {
        AlternationSchedule::new(self.n_f, self.max_episodes)
    }

    /// Environment parameters with the run's episode length applied.
    pub fn env_params(&self) -> EnvParams {
        EnvParams {
            episode_length: self.episode_length,
            ..self.env
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.schedule()?;
        if self.episode_length == 0 || self.retrain_every == 0 {
            return Err(Error::Config("episode_length and retrain_every must be >= 1".into()));
        }
        if self.commands.is_empty() || self.commands.iter().any(|c| !c.is_finite()) {
            return Err(Error::Config("commands must be a non-empty list of finite values".into()));
        }
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return Err(Error::Config("test_fraction must lie in (0, 1)".into()));
        }
        if !PolicyFamily::LEARNED.contains(&self.family) {
            return Err(Error::Config(format!("family must be one of gbm, ebm, symbolic, not {}", self.family)));
        }
        self.env_params().validate()?;
        self.learners.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeLog {
    pub episode: usize,
    pub n: usize,
    pub expert_fraction: f64,
    pub command: f64,
    pub reward: f64,
    pub dataset_size: usize,
    /// Absent when the learner was not refit after this episode.
    pub train_r2: Option<f64>,
    pub test_r2: Option<f64>,
}

pub const EPISODE_LOG_HEADER: [&str; 8] = [
    "episode",
    "n",
    "expert_fraction",
    "command",
    "reward",
    "dataset_size",
    "train_r2",
    "test_r2",
];

pub fn write_episode_log<W: Write>(logs: &[EpisodeLog], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(EPISODE_LOG_HEADER)?;
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for l in logs {
        w.write_record([
            l.episode.to_string(),
            l.n.to_string(),
            l.expert_fraction.to_string(),
            l.command.to_string(),
            l.reward.to_string(),
            l.dataset_size.to_string(),
            opt(l.train_r2),
            opt(l.test_r2),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<episode log>", e))
}

pub fn read_episode_log<R: std::io::Read>(reader: R) -> Result<Vec<EpisodeLog>> {
    let mut r = csv::Reader::from_reader(reader);
    let mut out = Vec::new();
    let parse = |s: &str| -> Result<f64> { s.parse().map_err(|_| Error::Parse(format!("bad number '{s}'"))) };
    let parse_u = |s: &str| -> Result<usize> { s.parse().map_err(|_| Error::Parse(format!("bad integer '{s}'"))) };
    for rec in r.records() {
        let rec = rec?;
        if rec.len() != EPISODE_LOG_HEADER.len() {
            return Err(Error::Parse("episode log row has the wrong width".into()));
        }
        let opt = |s: &str| if s.is_empty() { Ok(None) } else { parse(s).map(Some) };
        out.push(EpisodeLog {
            episode: parse_u(&rec[0])?,
            n: parse_u(&rec[1])?,
            expert_fraction: parse(&rec[2])?,
            command: parse(&rec[3])?,
            reward: parse(&rec[4])?,
            dataset_size: parse_u(&rec[5])?,
            train_r2: opt(&rec[6])?,
            test_r2: opt(&rec[7])?,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct DistillationOutcome {
    pub policy: DistilledPolicy,
    pub dataset: AggregatedDataset,
    pub log: Vec<EpisodeLog>,
}

fn r2_of(policy: &DistilledPolicy, dataset: &AggregatedDataset, idx: &[usize]) -> Option<f64> {
    let preds: Result<Vec<Vec<f64>>> = idx
        .iter()
        .map(|&i| {
            Ok(policy.act(&dataset.records()[i].state)?.into_inner())
        })
        .collect();
    let targets = dataset.labels(idx);
    match preds.and_then(|p| r2_score(&p, &targets)) {
        Ok(s) => Some(s.score),
        Err(e) => {
            log::warn!("r2 unavailable: {e}");
            None
        }
    }
}

/// Seed of the split used by the last refit, i.e. the partition the final
/// policy's held-out R² refers to.
pub fn final_split_seed(config: &DistillationConfig) -> u64 {
    derive_seed(config.seed, SPLIT_STREAM, config.max_episodes as u64)
}

/// Runs the alternation curriculum and returns the final learner, the
/// aggregated dataset (partitioned by the final split) and a per-episode log.
pub fn run_distillation(
    env: &mut dyn Environment,
    expert: &dyn Policy,
    config: &DistillationConfig,
) -> Result<DistillationOutcome> {
    config.validate()?;
    check_dim(env.observation_dim(), expert.input_dim())?;
    check_dim(env.action_dim(), expert.output_dim())?;
    let schedule = config.schedule()?;
    let feature_names = env.schema().names().to_vec();
    let action_names = env.action_names();
    let mut dataset = AggregatedDataset::new(env.schema().clone(), action_names.clone())?;
    let mut policy: Option<DistilledPolicy> = None;
    let mut log: Vec<EpisodeLog> = Vec::with_capacity(config.max_episodes);

    for episode in 1..=config.max_episodes {
        let n = schedule.n(episode);
        let command = config.commands[(episode - 1) % config.commands.len()];
        env.set_command(command);
        let mut obs = env.reset(derive_seed(config.seed, RESET_STREAM, episode as u64));
        let (mut reward, mut expert_steps, mut steps) = (0.0, 0usize, 0usize);
        for t in 0..env.episode_length() {
            let label = expert.act(&obs)?;
            let actor = actor_for_step(n, t);
            let executed = match (actor, &policy) {
                (Actor::Expert, _) => label.clone(),
                (Actor::Distilled, Some(p)) => p.act(&obs).map_err(|e| abort(episode, t, e, &log))?,
                // Zero-action fallback before the first fit; with n = 1 in
                // episode 1 it is never sampled.
                (Actor::Distilled, None) => Action::zeros(env.action_dim()),
            };
            let transition = env.step(&executed).map_err(|e| abort(episode, t, e, &log))?;
            dataset.push(TransitionRecord {
                state: obs,
                executed_action: executed,
                expert_label: label,
                reward: transition.reward,
                step_index: t,
                episode_index: episode,
                actor,
            })?;
            reward += transition.reward;
            expert_steps += usize::from(actor == Actor::Expert);
            steps += 1;
            obs = transition.observation;
            if transition.done {
                break;
            }
        }

        let refit = episode % config.retrain_every == 0 || episode == config.max_episodes;
        let (mut train_r2, mut test_r2) = (None, None);
        if refit {
            dataset.split_train_test(config.test_fraction, derive_seed(config.seed, SPLIT_STREAM, episode as u64))?;
            let train = dataset.train_indices();
            let test = dataset.test_indices();
            let fitted = train_policy(
                config.family,
                &dataset.features(&train),
                &dataset.labels(&train),
                &feature_names,
                &action_names,
                &config.learners,
                derive_seed(config.seed, TRAIN_STREAM, episode as u64),
                policy.as_ref(),
            )?;
            train_r2 = r2_of(&fitted, &dataset, &train);
            test_r2 = r2_of(&fitted, &dataset, &test);
            policy = Some(fitted);
        }
        let entry = EpisodeLog {
            episode,
            n,
            expert_fraction: expert_steps as f64 / steps.max(1) as f64,
            command,
            reward,
            dataset_size: dataset.len(),
            train_r2,
            test_r2,
        };
        log::info!(
            "episode {episode}: n={n} reward={reward:.3} |D|={} test_r2={:?}",
            entry.dataset_size,
            entry.test_r2
        );
        log.push(entry);
    }

    Ok(DistillationOutcome {
        policy: policy.expect("at least one episode refits"),
        dataset,
        log,
    })
}

fn abort(episode: usize, step: usize, source: Error, log: &[EpisodeLog]) -> Error {
    Error::Aborted {
        episode,
        step,
        source: Box::new(source),
        partial_log: log.to_vec(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RolloutSummary {
    pub mean_reward: f64,
    pub episode_rewards: Vec<f64>,
}

/// Mean summed reward over `episodes` episodes with the expert acting on the
/// steps selected by `ratio` and `distilled` on the rest. Episode `i` uses
/// `commands[i % len]` and a reset seed derived from `seed`.
pub fn rollout_with_ratio(
    env: &mut dyn Environment,
    expert: &dyn Policy,
    distilled: &dyn Policy,
    ratio: Ratio,
    episodes: usize,
    commands: &[f64],
    seed: u64,
) -> Result<RolloutSummary> {
    if episodes == 0 || commands.is_empty() {
        return Err(Error::InvalidArgument("need at least one episode and one command".into()));
    }
    check_dim(env.observation_dim(), distilled.input_dim())?;
    check_dim(env.action_dim(), distilled.output_dim())?;
    let mut episode_rewards = Vec::with_capacity(episodes);
    for i in 0..episodes {
        env.set_command(commands[i % commands.len()]);
        let mut obs = env.reset(derive_seed(seed, EVAL_STREAM, i as u64));
        let mut total = 0.0;
        for t in 0..env.episode_length() {
            let action = match ratio.actor(t) {
                Actor::Expert => expert.act(&obs)?,
                Actor::Distilled => distilled.act(&obs)?,
            };
            let tr = env.step(&action)?;
            total += tr.reward;
            obs = tr.observation;
            if tr.done {
                break;
            }
        }
        episode_rewards.push(total);
    }
    let mean_reward = episode_rewards.iter().sum::<f64>() / episodes as f64;
    Ok(RolloutSummary {
        mean_reward,
        episode_rewards,
    })
}
