//! C ABI over the `moffle` library.
//!
//! Objects cross the boundary as opaque pointers created by a `*_new`,
//! `*_load` or `*_generate` call and released with the matching `*_free`.
//! Every fallible function returns a [`MoffleStatus`]; on failure the
//! message is available from [`moffle_last_error`] on the same thread.
//! Strings returned by the library are owned by the caller and must be
//! released with [`moffle_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use moffle::harness::{generate_env, ExperimentConfig, Pipeline, RunReport, Stage};
use moffle::mdp::LatentLowRankMDP;
use moffle::rng::RngStream;
use moffle::Error;

/// Status codes returned by every fallible function.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MoffleStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    InvalidConfig = 3,
    InvalidArgument = 4,
    Io = 5,
    Parse = 6,
    GenerationFailed = 7,
    Numerical = 8,
    Panic = 9,
}

/// Experiment configuration.
pub struct MoffleConfig(ExperimentConfig);

/// A generated or loaded environment.
pub struct MoffleEnv(LatentLowRankMDP);

/// The report of a pipeline run.
pub struct MoffleReport(RunReport);

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).expect("nul bytes removed"));
}

fn status_of(err: &Error) -> MoffleStatus {
    match err {
        Error::InvalidConfig(_) => MoffleStatus::InvalidConfig,
        Error::InvalidArgument(_) => MoffleStatus::InvalidArgument,
        Error::Io(_) => MoffleStatus::Io,
        Error::Parse(_) | Error::Json(_) | Error::Csv(_) => MoffleStatus::Parse,
        Error::GenerationFailed { .. } => MoffleStatus::GenerationFailed,
        Error::Stage { source, .. } => status_of(source),
        _ => MoffleStatus::Numerical,
    }
}

struct Fail(MoffleStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

/// Runs `f`, converting errors and panics into status codes.
fn guard<F: FnOnce() -> Result<(), Fail>>(f: F) -> MoffleStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => MoffleStatus::Ok,
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("panic: {msg}"));
            MoffleStatus::Panic
        }
    }
}

fn null(name: &str) -> Fail {
    Fail(MoffleStatus::NullPointer, format!("{name} is null"))
}

unsafe fn str_arg<'a>(p: *const c_char, name: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(null(name));
    }
    CStr::from_ptr(p).to_str().map_err(|_| {
        Fail(
            MoffleStatus::InvalidUtf8,
            format!("{name} is not valid UTF-8"),
        )
    })
}

unsafe fn ref_arg<'a, T>(p: *const T, name: &str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or_else(|| null(name))
}

unsafe fn put<T>(out: *mut *mut T, value: T, name: &str) -> Result<(), Fail> {
    if out.is_null() {
        return Err(null(name));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

fn into_c_string(s: String) -> *mut c_char {
    CString::new(s.replace('\0', " "))
        .expect("nul bytes removed")
        .into_raw()
}

/// Message of the last failure on this thread; empty if none. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn moffle_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn moffle_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Releases a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn moffle_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Default configuration.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn moffle_config_new(out: *mut *mut MoffleConfig) -> MoffleStatus {
    guard(|| put(out, MoffleConfig(ExperimentConfig::default()), "out"))
}

/// Defaults overlaid with a `key = value` file.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn moffle_config_load(
    path: *const c_char,
    out: *mut *mut MoffleConfig,
) -> MoffleStatus {
    guard(|| {
        let path = str_arg(path, "path")?;
        let cfg = ExperimentConfig::load(Some(Path::new(path)), &[])?;
        put(out, MoffleConfig(cfg), "out")
    })
}

/// Sets one configuration key, with the same syntax as the config file.
///
/// # Safety
/// `cfg` must be a live configuration; `key` and `value` NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn moffle_config_set(
    cfg: *mut MoffleConfig,
    key: *const c_char,
    value: *const c_char,
) -> MoffleStatus {
    guard(|| {
        let cfg = cfg.as_mut().ok_or_else(|| null("cfg"))?;
        let key = str_arg(key, "key")?;
        let value = str_arg(value, "value")?;
        let mut next = cfg.0.clone();
        next.set(key, value)?;
        next.validate()?;
        cfg.0 = next;
        Ok(())
    })
}

/// The effective configuration as `key = value` text.
///
/// # Safety
/// `cfg` must be a live configuration and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn moffle_config_to_text(
    cfg: *const MoffleConfig,
    out: *mut *mut c_char,
) -> MoffleStatus {
    guard(|| {
        let cfg = ref_arg(cfg, "cfg")?;
        if out.is_null() {
            return Err(null("out"));
        }
        *out = into_c_string(cfg.0.to_text());
        Ok(())
    })
}

/// # Safety
/// `cfg` must come from this library and not have been freed. Null is
/// ignored.
#[no_mangle]
pub unsafe extern "C" fn moffle_config_free(cfg: *mut MoffleConfig) {
    if !cfg.is_null() {
        drop(Box::from_raw(cfg));
    }
}

/// Generates the environment described by `cfg` from its seed.
///
/// # Safety
/// `cfg` must be a live configuration and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn moffle_env_generate(
    cfg: *const MoffleConfig,
    out: *mut *mut MoffleEnv,
) -> MoffleStatus {
    guard(|| {
        let cfg = &ref_arg(cfg, "cfg")?.0;
        let mdp = generate_env(&cfg.env, &RngStream::new(cfg.seed).derive(1))?;
        put(out, MoffleEnv(mdp), "out")
    })
}

/// Parses an environment from its JSON form.
///
/// # Safety
/// `json` must be NUL-terminated and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn moffle_env_from_json(
    json: *const c_char,
    out: *mut *mut MoffleEnv,
) -> MoffleStatus {
    guard(|| {
        let mdp = LatentLowRankMDP::from_json(str_arg(json, "json")?)?;
        put(out, MoffleEnv(mdp), "out")
    })
}

/// JSON form of an environment.
///
/// # Safety
/// `env` must be a live environment and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn moffle_env_to_json(
    env: *const MoffleEnv,
    out: *mut *mut c_char,
) -> MoffleStatus {
    guard(|| {
        let env = ref_arg(env, "env")?;
        if out.is_null() {
            return Err(null("out"));
        }
        *out = into_c_string(env.0.to_json()?);
        Ok(())
    })
}

/// Horizon, number of actions and latent dimension. Any output pointer
/// may be null.
///
/// # Safety
/// `env` must be a live environment; non-null outputs must be valid.
#[no_mangle]
pub unsafe extern "C" fn moffle_env_shape(
    env: *const MoffleEnv,
    horizon: *mut usize,
    actions: *mut usize,
    dim: *mut usize,
) -> MoffleStatus {
    guard(|| {
        let env = &ref_arg(env, "env")?.0;
        for (p, v) in [
            (horizon, env.horizon()),
            (actions, env.num_actions()),
            (dim, env.dim()),
        ] {
            if !p.is_null() {
                *p = v;
            }
        }
        Ok(())
    })
}

/// Smallest reachable latent probability under any policy.
///
/// # Safety
/// `env` must be a live environment and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn moffle_env_eta_min(env: *const MoffleEnv, out: *mut f64) -> MoffleStatus {
    guard(|| {
        let env = ref_arg(env, "env")?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        *out = env.0.eta_min();
        Ok(())
    })
}

/// # Safety
/// `env` must come from this library and not have been freed. Null is
/// ignored.
#[no_mangle]
pub unsafe extern "C" fn moffle_env_free(env: *mut MoffleEnv) {
    if !env.is_null() {
        drop(Box::from_raw(env));
    }
}

/// Runs the pipeline up to `stage` (`gen-env`, ..., `eval`, `verify` or
/// `e2e`). With a null `out_dir` everything stays in memory; otherwise
/// artifacts are written there exactly as by the command-line tool.
///
/// # Safety
/// `cfg` must be a live configuration, `stage` NUL-terminated, `out_dir`
/// null or NUL-terminated, and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn moffle_run(
    cfg: *const MoffleConfig,
    stage: *const c_char,
    out_dir: *const c_char,
    out: *mut *mut MoffleReport,
) -> MoffleStatus {
    guard(|| {
        let cfg = ref_arg(cfg, "cfg")?.0.clone();
        let stage: Stage = str_arg(stage, "stage")?.parse()?;
        let pipeline = if out_dir.is_null() {
            Pipeline::new(cfg, None, Stage::GenEnv)
        } else {
            Pipeline::for_stage(cfg, Path::new(str_arg(out_dir, "out_dir")?), stage)
        };
        let report = pipeline.run(stage)?;
        put(out, MoffleReport(report), "out")
    })
}

/// Whether every verification check in the report passed (vacuously true
/// for stages that run none).
///
/// # Safety
/// `report` must be a live report and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn moffle_report_passed(
    report: *const MoffleReport,
    out: *mut bool,
) -> MoffleStatus {
    guard(|| {
        let report = ref_arg(report, "report")?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        *out = report.0.passed();
        Ok(())
    })
}

/// The report as JSON.
///
/// # Safety
/// `report` must be a live report and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn moffle_report_to_json(
    report: *const MoffleReport,
    out: *mut *mut c_char,
) -> MoffleStatus {
    guard(|| {
        let report = ref_arg(report, "report")?;
        if out.is_null() {
            return Err(null("out"));
        }
        let json = serde_json::to_string_pretty(&report.0).map_err(Error::from)?;
        *out = into_c_string(json);
        Ok(())
    })
}

/// The report's `phase,index,metric,value` CSV.
///
/// # Safety
/// `report` must be a live report and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn moffle_report_metrics_csv(
    report: *const MoffleReport,
    out: *mut *mut c_char,
) -> MoffleStatus {
    guard(|| {
        let report = ref_arg(report, "report")?;
        if out.is_null() {
            return Err(null("out"));
        }
        *out = into_c_string(report.0.metrics().to_csv_string());
        Ok(())
    })
}

/// # Safety
/// `report` must come from this library and not have been freed. Null is
/// ignored.
#[no_mangle]
pub unsafe extern "C" fn moffle_report_free(report: *mut MoffleReport) {
    if !report.is_null() {
        drop(Box::from_raw(report));
    }
}
