//! C ABI over `objnav`.
//!
//! Every function returns an [`ObjnavStatus`]; on failure a description is
//! available from [`objnav_last_error`] on the same thread. Handles are opaque
//! and must be released with their `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use objnav::config::{Config, Setup};
use objnav::eval::{self, evaluate, EpisodeResult, EvalConfig, ModelAgent, OracleAgent, RandomAgent, TerminationMode};
use objnav::gradcheck::run_suite;
use objnav::trainer::{train, Checkpoint, TrainOutput};
use objnav::Error;

/// Result code of every call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ObjnavStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Config = 3,
    Io = 4,
    Checkpoint = 5,
    Runtime = 6,
    Panic = 7,
}

/// Built world, knowledge graph and task data for one configuration.
pub struct ObjnavSetup {
    inner: Setup,
}

/// Trained (or loaded) policy parameters.
pub struct ObjnavModel {
    checkpoint: Checkpoint,
}

/// Which agent [`objnav_evaluate`] runs.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ObjnavAgent {
    Model = 0,
    Random = 1,
    Oracle = 2,
}

/// Overall SR and SPL with and without the short-path filters.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ObjnavScores {
    pub episodes: usize,
    pub sr: f64,
    pub spl: f64,
    pub sr_l5: f64,
    pub spl_l5: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn status_of(e: &Error) -> ObjnavStatus {
    match e {
        Error::Config(_) | Error::Parse { .. } => ObjnavStatus::Config,
        Error::Io(_) | Error::Csv(_) | Error::Json(_) => ObjnavStatus::Io,
        Error::Checkpoint { .. } => ObjnavStatus::Checkpoint,
        _ => ObjnavStatus::Runtime,
    }
}

struct Fail(ObjnavStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> ObjnavStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            ObjnavStatus::Ok
        }
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("panic: {msg}"));
            ObjnavStatus::Panic
        }
    }
}

fn null(what: &str) -> Fail {
    Fail(ObjnavStatus::NullPointer, format!("{what} is null"))
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Fail(ObjnavStatus::InvalidArgument, format!("{what} is not valid UTF-8")))
}

unsafe fn opt_str_arg<'a>(p: *const c_char, what: &str) -> Result<Option<&'a str>, Fail> {
    if p.is_null() {
        Ok(None)
    } else {
        str_arg(p, what).map(Some)
    }
}

fn mode_of(code: u32) -> Result<TerminationMode, Fail> {
    match code {
        0 => Ok(TerminationMode::SampledDone),
        1 => Ok(TerminationMode::SampledOrEnv),
        _ => Err(Fail(ObjnavStatus::InvalidArgument, format!("unknown termination mode {code}"))),
    }
}

/// Message of the last failed call on this thread, or null. The pointer stays
/// valid until the next call into this library from the same thread.
#[no_mangle]
pub extern "C" fn objnav_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn objnav_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Builds a setup from TOML text (null for defaults). `seed` overrides the
/// config's seed.
///
/// # Safety
/// `config_toml` must be null or a NUL-terminated string; `out` must be valid
/// for a pointer write.
#[no_mangle]
pub unsafe extern "C" fn objnav_setup_new(config_toml: *const c_char, seed: u64, out: *mut *mut ObjnavSetup) -> ObjnavStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let mut cfg = match opt_str_arg(config_toml, "config_toml")? {
            Some(text) => Config::parse(text)?,
            None => Config::default(),
        };
        cfg.seed = seed;
        let inner = Setup::build(&cfg)?;
        *out = Box::into_raw(Box::new(ObjnavSetup { inner }));
        Ok(())
    })
}

/// # Safety
/// `setup` must be null or a handle from [`objnav_setup_new`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn objnav_setup_free(setup: *mut ObjnavSetup) {
    if !setup.is_null() {
        drop(Box::from_raw(setup));
    }
}

/// Number of object classes (graph nodes) in the setup.
///
/// # Safety
/// `setup` must be a live handle; `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn objnav_setup_num_classes(setup: *const ObjnavSetup, out: *mut usize) -> ObjnavStatus {
    guard(|| {
        let s = setup.as_ref().ok_or_else(|| null("setup"))?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        *out = s.inner.ctx.nodes();
        Ok(())
    })
}

/// Trains with the setup's configuration. When `out_dir` is non-null, metrics
/// and the checkpoint are written there.
///
/// # Safety
/// `setup` must be a live handle; `out_dir` null or NUL-terminated; `out`
/// valid for a pointer write.
#[no_mangle]
pub unsafe extern "C" fn objnav_train(setup: *const ObjnavSetup, out_dir: *const c_char, out: *mut *mut ObjnavModel) -> ObjnavStatus {
    guard(|| {
        let s = &setup.as_ref().ok_or_else(|| null("setup"))?.inner;
        if out.is_null() {
            return Err(null("out"));
        }
        let output = opt_str_arg(out_dir, "out_dir")?.map(|d| TrainOutput { dir: PathBuf::from(d) });
        if let Some(o) = &output {
            std::fs::create_dir_all(&o.dir).map_err(Error::from)?;
        }
        let outcome = train(&s.config.train_config(), &s.ctx, &s.world, s.dims, None, output.as_ref())?;
        *out = Box::into_raw(Box::new(ObjnavModel {
            checkpoint: outcome.checkpoint,
        }));
        Ok(())
    })
}

/// Loads a checkpoint file.
///
/// # Safety
/// `path` must be NUL-terminated; `out` valid for a pointer write.
#[no_mangle]
pub unsafe extern "C" fn objnav_model_load(path: *const c_char, out: *mut *mut ObjnavModel) -> ObjnavStatus {
    guard(|| {
        let path = str_arg(path, "path")?;
        if out.is_null() {
            return Err(null("out"));
        }
        let checkpoint = Checkpoint::load(path.as_ref())?;
        *out = Box::into_raw(Box::new(ObjnavModel { checkpoint }));
        Ok(())
    })
}

/// Writes the model as a checkpoint file.
///
/// # Safety
/// `model` must be a live handle; `path` NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn objnav_model_save(model: *const ObjnavModel, path: *const c_char) -> ObjnavStatus {
    guard(|| {
        let m = model.as_ref().ok_or_else(|| null("model"))?;
        let path = str_arg(path, "path")?;
        m.checkpoint.save(path.as_ref())?;
        Ok(())
    })
}

/// Number of trainable parameters.
///
/// # Safety
/// `model` must be a live handle; `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn objnav_model_num_params(model: *const ObjnavModel, out: *mut usize) -> ObjnavStatus {
    guard(|| {
        let m = model.as_ref().ok_or_else(|| null("model"))?;
        *out.as_mut().ok_or_else(|| null("out"))? = m.checkpoint.params.len();
        Ok(())
    })
}

/// # Safety
/// `model` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn objnav_model_free(model: *mut ObjnavModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Evaluates an agent on the setup's test floorplans. `mode` is 0 for
/// sampled-Done termination, 1 to also stop when the target becomes visible.
/// `model` is required for [`ObjnavAgent::Model`] and ignored otherwise.
///
/// # Safety
/// `setup` must be a live handle, `model` null or live, `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn objnav_evaluate(
    setup: *const ObjnavSetup,
    agent: ObjnavAgent,
    model: *const ObjnavModel,
    mode: u32,
    episodes_per_room: usize,
    seed: u64,
    out: *mut ObjnavScores,
) -> ObjnavStatus {
    guard(|| {
        let s = &setup.as_ref().ok_or_else(|| null("setup"))?.inner;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        let cfg = EvalConfig {
            episodes_per_room,
            mode: mode_of(mode)?,
        };
        let report = match agent {
            ObjnavAgent::Random => evaluate(&mut RandomAgent, &s.ctx, &s.world, &cfg, seed)?,
            ObjnavAgent::Oracle => evaluate(&mut OracleAgent::default(), &s.ctx, &s.world, &cfg, seed)?,
            ObjnavAgent::Model => {
                let m = model.as_ref().ok_or_else(|| null("model"))?;
                let mut a = ModelAgent::new("model", m.checkpoint.model()?, &s.ctx)?;
                evaluate(&mut a, &s.ctx, &s.world, &cfg, seed)?
            }
        };
        let all = report.summary(0, None);
        let l5 = report.summary(5, None);
        *out = ObjnavScores {
            episodes: all.episodes,
            sr: all.sr,
            spl: all.spl,
            sr_l5: l5.sr,
            spl_l5: l5.spl,
        };
        Ok(())
    })
}

unsafe fn results_from(
    success: *const u8,
    optimal: *const usize,
    actions: *const usize,
    n: usize,
) -> Result<Vec<EpisodeResult>, Fail> {
    if n == 0 {
        return Err(Fail(ObjnavStatus::InvalidArgument, "no episodes".into()));
    }
    if success.is_null() || optimal.is_null() || actions.is_null() {
        return Err(null("result array"));
    }
    let (s, l, e) = (
        std::slice::from_raw_parts(success, n),
        std::slice::from_raw_parts(optimal, n),
        std::slice::from_raw_parts(actions, n),
    );
    Ok((0..n)
        .map(|i| EpisodeResult {
            success: s[i] != 0,
            optimal: l[i],
            actions: e[i],
            room: objnav::catalog::RoomType::Kitchen,
            target: 0,
        })
        .collect())
}

/// Success rate of `n` episodes given as parallel arrays.
///
/// # Safety
/// Each array must hold `n` readable elements; `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn objnav_sr(
    success: *const u8,
    optimal: *const usize,
    actions: *const usize,
    n: usize,
    out: *mut f64,
) -> ObjnavStatus {
    guard(|| {
        let r = results_from(success, optimal, actions, n)?;
        *out.as_mut().ok_or_else(|| null("out"))? = eval::sr(&r)?;
        Ok(())
    })
}

/// Success weighted by path length; `actions` excludes the final stop.
///
/// # Safety
/// Each array must hold `n` readable elements; `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn objnav_spl(
    success: *const u8,
    optimal: *const usize,
    actions: *const usize,
    n: usize,
    out: *mut f64,
) -> ObjnavStatus {
    guard(|| {
        let r = results_from(success, optimal, actions, n)?;
        *out.as_mut().ok_or_else(|| null("out"))? = eval::spl(&r)?;
        Ok(())
    })
}

/// Finite-difference gradient check over `seeds` seeds; writes the worst
/// relative error across all parameter blocks.
///
/// # Safety
/// `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn objnav_gradcheck(seed: u64, seeds: u64, out: *mut f64) -> ObjnavStatus {
    guard(|| {
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        if seeds == 0 {
            return Err(Fail(ObjnavStatus::InvalidArgument, "seeds must be positive".into()));
        }
        *out = run_suite(seed, seeds)?.iter().map(|b| b.max_rel_err).fold(0.0, f64::max);
        Ok(())
    })
}
