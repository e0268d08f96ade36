//! C ABI over `policy_distill`: load a distilled policy and query it, drive
//! the phase-gait environment and its expert, and evaluate the alternation
//! schedule.
//!
//! Conventions: every fallible function returns a [`PdStatus`]; outputs go
//! through caller-provided pointers. On failure the message is kept per
//! thread and can be read with [`pd_last_error_message`]. Handles are
//! opaque and must be released with their `*_free` function. Panics never
//! cross the boundary; they surface as [`PdStatus::Panic`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use policy_distill::distill::AlternationSchedule;
use policy_distill::envs::{EnvParams, Gait, GaitExpert, PhaseGaitEnv};
use policy_distill::model::DistilledPolicy;
use policy_distill::types::{Action, Environment, Observation, Policy};
use policy_distill::Error;

/// Status code returned by every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PdStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    DimensionMismatch = 3,
    NonFinite = 4,
    Io = 5,
    Parse = 6,
    EpisodeDone = 7,
    Unsupported = 8,
    Internal = 9,
    Panic = 10,
}

/// Opaque distilled policy.
pub struct PdModel(DistilledPolicy);

/// Opaque phase-gait environment together with its expert.
pub struct PdEnv {
    env: PhaseGaitEnv,
    expert: GaitExpert,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: impl Into<String>) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg.into());
}

fn status_of(e: &Error) -> PdStatus {
    match e {
        Error::DimensionMismatch { .. } => PdStatus::DimensionMismatch,
        Error::NonFinite(_) => PdStatus::NonFinite,
        Error::InvalidArgument(_) | Error::Empty(_) | Error::Config(_) => PdStatus::InvalidArgument,
        Error::StepAfterDone => PdStatus::EpisodeDone,
        Error::Unsupported(_) => PdStatus::Unsupported,
        Error::Io { .. } => PdStatus::Io,
        Error::Csv(_) | Error::Json(_) | Error::Parse(_) => PdStatus::Parse,
        Error::Aborted { .. } => PdStatus::Internal,
    }
}

enum Failure {
    Status(PdStatus, String),
    Core(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Core(e)
    }
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> PdStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            PdStatus::Ok
        }
        Ok(Err(Failure::Status(s, msg))) => {
            set_error(msg);
            s
        }
        Ok(Err(Failure::Core(e))) => {
            set_error(e.to_string());
            status_of(&e)
        }
        Err(_) => {
            set_error("internal panic");
            PdStatus::Panic
        }
    }
}

fn null(what: &str) -> Failure {
    Failure::Status(PdStatus::NullPointer, format!("{what} is null"))
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure::Status(PdStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

unsafe fn slice_arg<'a>(p: *const f64, len: usize, what: &str) -> Result<&'a [f64], Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn out_slice<'a>(p: *mut f64, len: usize, expected: usize, what: &str) -> Result<&'a mut [f64], Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    if len != expected {
        return Err(Error::DimensionMismatch { expected, actual: len }.into());
    }
    Ok(std::slice::from_raw_parts_mut(p, len))
}

unsafe fn write_out<T>(p: *mut T, v: T, what: &str) -> Result<(), Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    p.write(v);
    Ok(())
}

/// Copies the calling thread's last error message into `buf` (NUL
/// terminated, truncated to `len`). Returns the full message length in bytes
/// excluding the terminator, so a caller can size its buffer.
///
/// # Safety
/// `buf` must be null or point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn pd_last_error_message(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && len > 0 {
            let n = msg.len().min(len - 1);
            std::ptr::copy_nonoverlapping(msg.as_ptr(), buf as *mut u8, n);
            *buf.add(n) = 0;
        }
        msg.len()
    })
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn pd_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Loads a `model.json` written by the distill command.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pd_model_load(path: *const c_char, out: *mut *mut PdModel) -> PdStatus {
    guard(|| {
        let path = str_arg(path, "path")?;
        let model = DistilledPolicy::load(Path::new(path))?;
        write_out(out, Box::into_raw(Box::new(PdModel(model))), "out")
    })
}

/// Parses a model from its JSON text.
///
/// # Safety
/// `json` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pd_model_from_json(json: *const c_char, out: *mut *mut PdModel) -> PdStatus {
    guard(|| {
        let model = DistilledPolicy::from_json(str_arg(json, "json")?)?;
        write_out(out, Box::into_raw(Box::new(PdModel(model))), "out")
    })
}

/// # Safety
/// `model` must come from a `pd_model_*` constructor (or be null); it must
/// not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn pd_model_free(model: *mut PdModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Writes the observation and action dimensions.
///
/// # Safety
/// `model` must be a live handle; output pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn pd_model_dims(model: *const PdModel, input_dim: *mut usize, output_dim: *mut usize) -> PdStatus {
    guard(|| {
        let m = model.as_ref().ok_or_else(|| null("model"))?;
        write_out(input_dim, m.0.input_dim(), "input_dim")?;
        write_out(output_dim, m.0.output_dim(), "output_dim")
    })
}

/// Acts on one observation; actions are clamped to [-1, 1].
///
/// # Safety
/// `obs` must hold `obs_len` values and `action` `action_len` writable values.
#[no_mangle]
pub unsafe extern "C" fn pd_model_predict(
    model: *const PdModel,
    obs: *const f64,
    obs_len: usize,
    action: *mut f64,
    action_len: usize,
) -> PdStatus {
    guard(|| {
        let m = model.as_ref().ok_or_else(|| null("model"))?;
        let x = Observation::new(slice_arg(obs, obs_len, "obs")?.to_vec())?;
        let dst = out_slice(action, action_len, m.0.output_dim(), "action")?;
        let a = m.0.act(&x)?;
        dst.copy_from_slice(a.as_slice());
        Ok(())
    })
}

/// Creates an environment for `gait` ("walk", "trot", "pace" or "bound")
/// with default physics and the given episode length.
///
/// # Safety
/// `gait` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pd_env_new(gait: *const c_char, episode_length: usize, out: *mut *mut PdEnv) -> PdStatus {
    guard(|| {
        let gait: Gait = str_arg(gait, "gait")?.parse()?;
        let params = EnvParams {
            episode_length,
            ..EnvParams::default()
        };
        let env = PhaseGaitEnv::new(gait, params)?;
        let expert = GaitExpert::new(gait, params);
        write_out(out, Box::into_raw(Box::new(PdEnv { env, expert })), "out")
    })
}

/// # Safety
/// `env` must come from `pd_env_new` (or be null); it must not be used
/// afterwards.
#[no_mangle]
pub unsafe extern "C" fn pd_env_free(env: *mut PdEnv) {
    if !env.is_null() {
        drop(Box::from_raw(env));
    }
}

/// Observation and action dimensions of the environment.
///
/// # Safety
/// `env` must be a live handle; output pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn pd_env_dims(env: *const PdEnv, obs_dim: *mut usize, action_dim: *mut usize) -> PdStatus {
    guard(|| {
        let e = env.as_ref().ok_or_else(|| null("env"))?;
        write_out(obs_dim, e.env.observation_dim(), "obs_dim")?;
        write_out(action_dim, e.env.action_dim(), "action_dim")
    })
}

/// Sets the velocity command used from the next step on.
///
/// # Safety
/// `env` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn pd_env_set_command(env: *mut PdEnv, command: f64) -> PdStatus {
    guard(|| {
        let e = env.as_mut().ok_or_else(|| null("env"))?;
        e.env.set_command(command);
        Ok(())
    })
}

/// Starts an episode and writes the initial observation.
///
/// # Safety
/// `env` must be a live handle; `obs` must hold `obs_len` writable values.
#[no_mangle]
pub unsafe extern "C" fn pd_env_reset(env: *mut PdEnv, seed: u64, obs: *mut f64, obs_len: usize) -> PdStatus {
    guard(|| {
        let e = env.as_mut().ok_or_else(|| null("env"))?;
        let dst = out_slice(obs, obs_len, e.env.observation_dim(), "obs")?;
        dst.copy_from_slice(e.env.reset(seed).as_slice());
        Ok(())
    })
}

/// Advances one tick. Writes the next observation, the reward and whether
/// the episode ended. Stepping after the end returns `EpisodeDone`.
///
/// # Safety
/// `env` must be a live handle; buffers must have the stated lengths.
#[no_mangle]
pub unsafe extern "C" fn pd_env_step(
    env: *mut PdEnv,
    action: *const f64,
    action_len: usize,
    obs: *mut f64,
    obs_len: usize,
    reward: *mut f64,
    done: *mut bool,
) -> PdStatus {
    guard(|| {
        let e = env.as_mut().ok_or_else(|| null("env"))?;
        let a = Action::new(slice_arg(action, action_len, "action")?.to_vec())?;
        let dst = out_slice(obs, obs_len, e.env.observation_dim(), "obs")?;
        if reward.is_null() || done.is_null() {
            return Err(null("reward/done"));
        }
        let t = e.env.step(&a)?;
        dst.copy_from_slice(t.observation.as_slice());
        *reward = t.reward;
        *done = t.done;
        Ok(())
    })
}

/// The environment's expert action for an observation.
///
/// # Safety
/// `env` must be a live handle; buffers must have the stated lengths.
#[no_mangle]
pub unsafe extern "C" fn pd_expert_act(
    env: *const PdEnv,
    obs: *const f64,
    obs_len: usize,
    action: *mut f64,
    action_len: usize,
) -> PdStatus {
    guard(|| {
        let e = env.as_ref().ok_or_else(|| null("env"))?;
        let x = Observation::new(slice_arg(obs, obs_len, "obs")?.to_vec())?;
        let dst = out_slice(action, action_len, e.expert.output_dim(), "action")?;
        dst.copy_from_slice(e.expert.act(&x)?.as_slice());
        Ok(())
    })
}

/// Alternation period for `episode` (numbered from 1): the expert acts on
/// every `n`-th step.
///
/// # Safety
/// `n` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pd_schedule_n(n_f: usize, max_episodes: usize, episode: usize, n: *mut usize) -> PdStatus {
    guard(|| {
        let s = AlternationSchedule::new(n_f, max_episodes)?;
        if episode == 0 || episode > max_episodes {
            return Err(Failure::Status(
                PdStatus::InvalidArgument,
                format!("episode must be in 1..={max_episodes}"),
            ));
        }
        write_out(n, s.n(episode), "n")
    })
}
