//! Phase-driven four-leg gait environment and its analytic expert.
//!
//! Each leg is a unit-mass second-order plant pulled toward the commanded
//! setpoint by a PD force law and integrated with semi-implicit Euler. A
//! phase oscillator advances a fixed number of ticks per gait cycle; the
//! observation exposes it only through a four-state one-hot and an
//! in-state tick counter, mirroring reward-machine style inputs.

use std::f64::consts::PI;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::types::{Action, Environment, FeatureSchema, Observation, Policy, PolicyFamily, Transition};

pub const N_LEGS: usize = 4;
pub const N_PHASES: usize = 4;
pub const OBSERVATION_DIM: usize = 18;
pub const LEG_NAMES: [&str; N_LEGS] = ["FL", "FR", "RL", "RR"];

// Observation layout offsets.
const Q: usize = 0;
const V: usize = 4;
const PREV: usize = 8;
const PHASE: usize = 12;
const COUNTER: usize = 16;
const COMMAND: usize = 17;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Gait {
    Walk,
    Trot,
    Pace,
    Bound,
}

impl Gait {
    pub const ALL: [Gait; 4] = [Gait::Walk, Gait::Trot, Gait::Pace, Gait::Bound];

    /// Phase offset of each leg in FL, FR, RL, RR order.
    pub fn offsets(self) -> [f64; N_LEGS] {
        match self {
            Gait::Walk => [0.0, PI, 1.5 * PI, 0.5 * PI],
            Gait::Trot => [0.0, PI, PI, 0.0],
            Gait::Pace => [0.0, PI, 0.0, PI],
            Gait::Bound => [0.0, 0.0, PI, PI],
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Gait::Walk => "walk",
            Gait::Trot => "trot",
            Gait::Pace => "pace",
            Gait::Bound => "bound",
        }
    }
}

impl fmt::Display for Gait {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Gait {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "walk" => Ok(Gait::Walk),
            "trot" => Ok(Gait::Trot),
            "pace" => Ok(Gait::Pace),
            "bound" => Ok(Gait::Bound),
            _ => Err(Error::Parse(format!("unknown gait '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnvParams {
    pub dt: f64,
    pub kp: f64,
    pub kd: f64,
    /// Oscillator ticks per gait cycle; must be a multiple of four.
    pub ticks_per_cycle: usize,
    /// Set by the run configuration, not read from config files.
    #[serde(skip)]
    pub episode_length: usize,
    /// Half-width of the uniform initial joint-position draw.
    pub init_spread: f64,
    /// Reference amplitude per unit of |command|.
    pub amplitude_gain: f64,
    /// Squashing of the reference profile, `tanh(k sin u) / tanh(k)`; 0
    /// gives a pure sine. Larger values flatten stance and shorten swing.
    pub profile_sharpness: f64,
    pub smoothness_weight: f64,
}

impl Default for EnvParams {
    fn default() -> Self {
        Self {
            dt: 0.02,
            kp: 100.0,
            kd: 20.0,
            ticks_per_cycle: 40,
            episode_length: 1000,
            init_spread: 0.05,
            amplitude_gain: 0.6,
            profile_sharpness: 1.0,
            smoothness_weight: 0.01,
        }
    }
}

impl EnvParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [self.dt, self.kp, self.kd];
        if positive.iter().any(|v| !v.is_finite() || *v <= 0.0) {
            return Err(Error::Config("dt, kp and kd must be positive".into()));
        }
        if self.ticks_per_cycle == 0 || self.ticks_per_cycle % N_PHASES != 0 {
            return Err(Error::Config("ticks_per_cycle must be a positive multiple of 4".into()));
        }
        if self.episode_length == 0 {
            return Err(Error::Config("episode_length must be >= 1".into()));
        }
        if [self.init_spread, self.amplitude_gain, self.profile_sharpness, self.smoothness_weight]
            .iter()
            .any(|v| !(*v >= 0.0 && v.is_finite()))
        {
            return Err(Error::Config("spread, amplitude, sharpness and smoothness weight must be finite and >= 0".into()));
        }
        Ok(())
    }

    pub fn omega(&self) -> f64 {
        2.0 * PI / (self.ticks_per_cycle as f64 * self.dt)
    }

    pub fn ticks_per_phase(&self) -> usize {
        self.ticks_per_cycle / N_PHASES
    }

    /// Oscillator angle after `tick` ticks, recomputed from the tick count so
    /// no rounding accumulates.
    pub fn theta(&self, tick: usize) -> f64 {
        2.0 * PI * (tick % self.ticks_per_cycle) as f64 / self.ticks_per_cycle as f64
    }

    /// Angle encoded by a phase-state index and in-state counter.
    pub fn theta_from_phase(&self, phase: usize, counter: usize) -> f64 {
        self.theta(phase * self.ticks_per_phase() + counter)
    }

    pub fn amplitude(&self, command: f64) -> f64 {
        self.amplitude_gain * command.abs()
    }
}

/// Unit gait profile and its first two derivatives at angle `u`.
fn profile(sharpness: f64, u: f64) -> (f64, f64, f64) {
    let (s, c) = u.sin_cos();
    if sharpness == 0.0 {
        return (s, c, -s);
    }
    let k = sharpness;
    let norm = k.tanh();
    let t = (k * s).tanh();
    let sech2 = 1.0 - t * t;
    (t / norm, k * c * sech2 / norm, k * sech2 * (-s - 2.0 * k * t * c * c) / norm)
}

/// Reference position, velocity and acceleration of one leg.
fn reference(params: &EnvParams, gait: Gait, command: f64, theta: f64, leg: usize) -> (f64, f64, f64) {
    let a = params.amplitude(command);
    let w = params.omega();
    let (g, dg, ddg) = profile(params.profile_sharpness, theta + gait.offsets()[leg]);
    (a * g, a * w * dg, a * w * w * ddg)
}

pub fn feature_schema() -> FeatureSchema {
    let mut names = Vec::with_capacity(OBSERVATION_DIM);
    let mut units = Vec::with_capacity(OBSERVATION_DIM);
    let mut groups = Vec::with_capacity(OBSERVATION_DIM);
    let mut add = |n: String, u: &str, g: &str| {
        names.push(n);
        units.push(u.to_string());
        groups.push(g.to_string());
    };
    for leg in LEG_NAMES {
        add(format!("dof_pos_{leg}"), "rad", "DoF Pos");
    }
    for leg in LEG_NAMES {
        add(format!("dof_vel_{leg}"), "rad/s", "DoF Vel");
    }
    for leg in LEG_NAMES {
        add(format!("prev_action_{leg}"), "rad", "Prev Action");
    }
    for p in 0..N_PHASES {
        add(format!("rm_state_{p}"), "", "RM State");
    }
    add("rm_iters".into(), "ticks", "RM Iters");
    add("command_x".into(), "m/s", "Command X");
    FeatureSchema::new(names, units, groups).expect("static schema is valid")
}

pub fn action_names() -> Vec<String> {
    LEG_NAMES.iter().map(|l| format!("target_{l}")).collect()
}

#[derive(Debug, Clone)]
pub struct PhaseGaitEnv {
    params: EnvParams,
    gait: Gait,
    schema: FeatureSchema,
    command: f64,
    q: [f64; N_LEGS],
    v: [f64; N_LEGS],
    prev_action: [f64; N_LEGS],
    tick: usize,
    steps: usize,
    done: bool,
}

impl PhaseGaitEnv {
    pub fn new(gait: Gait, params: EnvParams) -> Result<Self> {
        params.validate()?;
        Ok(Self {
            params,
            gait,
            schema: feature_schema(),
            command: 0.0,
            q: [0.0; N_LEGS],
            v: [0.0; N_LEGS],
            prev_action: [0.0; N_LEGS],
            tick: 0,
            steps: 0,
            done: false,
        })
    }

    pub fn gait(&self) -> Gait {
        self.gait
    }

    pub fn params(&self) -> &EnvParams {
        &self.params
    }

    pub fn command(&self) -> f64 {
        self.command
    }

    pub fn theta(&self) -> f64 {
        self.params.theta(self.tick)
    }

    pub fn phase_state(&self) -> usize {
        (self.tick % self.params.ticks_per_cycle) / self.params.ticks_per_phase()
    }

    pub fn phase_counter(&self) -> usize {
        self.tick % self.params.ticks_per_phase()
    }

    pub fn joint_positions(&self) -> [f64; N_LEGS] {
        self.q
    }

    pub fn joint_velocities(&self) -> [f64; N_LEGS] {
        self.v
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    /// Reference joint positions at the current tick.
    pub fn reference_positions(&self) -> [f64; N_LEGS] {
        let theta = self.theta();
        std::array::from_fn(|i| reference(&self.params, self.gait, self.command, theta, i).0)
    }

    fn observation(&self) -> Observation {
        let mut o = vec![0.0; OBSERVATION_DIM];
        o[Q..Q + N_LEGS].copy_from_slice(&self.q);
        o[V..V + N_LEGS].copy_from_slice(&self.v);
        o[PREV..PREV + N_LEGS].copy_from_slice(&self.prev_action);
        o[PHASE + self.phase_state()] = 1.0;
        o[COUNTER] = self.phase_counter() as f64;
        o[COMMAND] = self.command;
        Observation::new(o).expect("state stays finite")
    }
}

impl Environment for PhaseGaitEnv {
    fn observation_dim(&self) -> usize {
        OBSERVATION_DIM
    }

    fn action_dim(&self) -> usize {
        N_LEGS
    }

    fn episode_length(&self) -> usize {
        self.params.episode_length
    }

    fn schema(&self) -> &FeatureSchema {
        &self.schema
    }

    fn action_names(&self) -> Vec<String> {
        action_names()
    }

    fn set_command(&mut self, command: f64) {
        self.command = if command.is_finite() { command } else { 0.0 };
    }

    fn reset(&mut self, seed: u64) -> Observation {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = self.params.init_spread;
        for q in &mut self.q {
            *q = if s > 0.0 { rng.gen_range(-s..=s) } else { 0.0 };
        }
        self.v = [0.0; N_LEGS];
        self.prev_action = [0.0; N_LEGS];
        self.tick = 0;
        self.steps = 0;
        self.done = false;
        self.observation()
    }

    fn step(&mut self, action: &Action) -> Result<Transition> {
        if self.done {
            return Err(Error::StepAfterDone);
        }
        check_dim(N_LEGS, action.len())?;
        let p = &self.params;
        let mut a = [0.0; N_LEGS];
        for (dst, &src) in a.iter_mut().zip(action.as_slice()) {
            if !src.is_finite() {
                return Err(Error::NonFinite("action"));
            }
            *dst = src.clamp(-1.0, 1.0);
        }
        for i in 0..N_LEGS {
            let force = p.kp * (a[i] - self.q[i]) - p.kd * self.v[i];
            self.v[i] += p.dt * force;
            self.q[i] += p.dt * self.v[i];
        }
        self.tick += 1;
        self.steps += 1;

        let reference = self.reference_positions();
        let mut tracking = 0.0;
        let mut jerk = 0.0;
        for i in 0..N_LEGS {
            tracking += (self.q[i] - reference[i]).powi(2);
            jerk += (a[i] - self.prev_action[i]).powi(2);
        }
        let reward = (-tracking).exp() - p.smoothness_weight * jerk;
        self.prev_action = a;
        self.done = self.steps >= p.episode_length;
        if self.q.iter().chain(&self.v).any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("environment state"));
        }
        Ok(Transition {
            observation: self.observation(),
            reward,
            done: self.done,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExpertGains {
    pub position: f64,
    pub velocity: f64,
}

impl Default for ExpertGains {
    fn default() -> Self {
        Self {
            position: 0.5,
            velocity: 0.05,
        }
    }
}

/// Stateless tracking controller: plant-inverting feedforward toward the
/// next tick's reference plus PD feedback on the current tracking error.
#[derive(Debug, Clone, PartialEq)]
pub struct GaitExpert {
    gait: Gait,
    params: EnvParams,
    gains: ExpertGains,
}

impl GaitExpert {
    pub fn new(gait: Gait, params: EnvParams) -> Self {
        Self::with_gains(gait, params, ExpertGains::default())
    }

    pub fn with_gains(gait: Gait, params: EnvParams, gains: ExpertGains) -> Self {
        Self { gait, params, gains }
    }

    pub fn gait(&self) -> Gait {
        self.gait
    }

    pub fn act_slice(&self, o: &[f64]) -> Result<[f64; N_LEGS]> {
        check_dim(OBSERVATION_DIM, o.len())?;
        let phase = o[PHASE..PHASE + N_PHASES]
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |best, (i, &v)| if v > best.1 { (i, v) } else { best })
            .0;
        let counter = o[COUNTER].round().max(0.0) as usize;
        let command = o[COMMAND];
        let p = &self.params;
        let now = p.theta_from_phase(phase, counter);
        let next = now + p.omega() * p.dt;
        Ok(std::array::from_fn(|i| {
            let (r, rd, rdd) = reference(p, self.gait, command, next, i);
            let feedforward = r + (rdd + p.kd * rd) / p.kp;
            let (r0, rd0, _) = reference(p, self.gait, command, now, i);
            let feedback = self.gains.position * (r0 - o[Q + i]) + self.gains.velocity * (rd0 - o[V + i]);
            (feedforward + feedback).clamp(-1.0, 1.0)
        }))
    }
}

impl Policy for GaitExpert {
    fn act(&self, observation: &Observation) -> Result<Action> {
        Action::new(self.act_slice(observation.as_slice())?.to_vec())
    }

    fn family(&self) -> PolicyFamily {
        PolicyFamily::Expert
    }

    fn input_dim(&self) -> usize {
        OBSERVATION_DIM
    }

    fn output_dim(&self) -> usize {
        N_LEGS
    }
}

/// One environment step for plotting gait sequences.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRow {
    pub step: usize,
    pub theta: f64,
    pub phase_state: usize,
    pub joint_positions: [f64; N_LEGS],
    pub action: [f64; N_LEGS],
    pub reward: f64,
}

/// Rolls out `policy` for one episode and records every step.
pub fn record_trajectory(
    env: &mut PhaseGaitEnv,
    policy: &dyn Policy,
    command: f64,
    seed: u64,
) -> Result<Vec<TrajectoryRow>> {
    env.set_command(command);
    let mut obs = env.reset(seed);
    let mut rows = Vec::with_capacity(env.episode_length());
    loop {
        let (theta, phase_state) = (env.theta(), env.phase_state());
        let action = policy.act(&obs)?;
        let t = env.step(&action)?;
        let a = action.as_slice();
        rows.push(TrajectoryRow {
            step: rows.len(),
            theta,
            phase_state,
            joint_positions: env.joint_positions(),
            action: std::array::from_fn(|i| a[i].clamp(-1.0, 1.0)),
            reward: t.reward,
        });
        obs = t.observation;
        if t.done {
            return Ok(rows);
        }
    }
}

pub fn write_trajectory_csv(rows: &[TrajectoryRow], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Parse(format!("{other:?}")),
    })?;
    let mut header = vec!["step".to_string(), "theta".into(), "phase_state".into()];
    header.extend(LEG_NAMES.iter().map(|l| format!("q_{l}")));
    header.extend(LEG_NAMES.iter().map(|l| format!("action_{l}")));
    header.push("reward".into());
    w.write_record(&header)?;
    for r in rows {
        let mut rec = vec![r.step.to_string(), r.theta.to_string(), r.phase_state.to_string()];
        rec.extend(r.joint_positions.iter().map(f64::to_string));
        rec.extend(r.action.iter().map(f64::to_string));
        rec.push(r.reward.to_string());
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
