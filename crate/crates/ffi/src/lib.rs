//! C ABI over `cgflow-core`.
//!
//! Every fallible function returns a status code (`CGFLOW_OK` on success)
//! and writes results through out-pointers. On failure the message is kept
//! in a thread-local slot readable with [`cgflow_last_error`]. Strings
//! returned through `char **` are owned by the caller and released with
//! [`cgflow_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, c_int, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use cgflow_core::cli::{commands, Ctx, RunConfig};
use cgflow_core::oracle;
use cgflow_core::schedule::{IntegratorMode, Schedule};
use cgflow_core::Error;

pub const CGFLOW_OK: c_int = 0;
pub const CGFLOW_ERR_CONFIG: c_int = 2;
pub const CGFLOW_ERR_IO: c_int = 3;
pub const CGFLOW_ERR_FORMAT: c_int = 4;
pub const CGFLOW_ERR_NON_FINITE: c_int = 5;
pub const CGFLOW_ERR_DOMAIN: c_int = 6;
pub const CGFLOW_ERR_DATA_PIPELINE: c_int = 7;
pub const CGFLOW_ERR_INVARIANT: c_int = 8;
pub const CGFLOW_ERR_SHAPE: c_int = 9;
pub const CGFLOW_ERR_NULL_POINTER: c_int = 10;
pub const CGFLOW_ERR_INVALID_ARGUMENT: c_int = 11;
pub const CGFLOW_ERR_PANIC: c_int = 12;

pub const CGFLOW_INTEGRATOR_PAPER: c_int = 0;
pub const CGFLOW_INTEGRATOR_RECTIFIED: c_int = 1;

/// Opaque time schedule.
pub struct CgflowSchedule(Schedule);

/// Opaque run: a validated configuration plus a worker-thread count.
pub struct CgflowRun(Ctx);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

struct Failure(c_int, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(e.code(), format!("{}: {e}", e.kind()))
    }
}

fn set_last_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("interior NULs removed");
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(c));
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> c_int {
    LAST_ERROR.with(|slot| *slot.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => CGFLOW_OK,
        Ok(Err(Failure(code, msg))) => {
            set_last_error(msg);
            code
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_last_error(format!("panic: {msg}"));
            CGFLOW_ERR_PANIC
        }
    }
}

fn null(what: &str) -> Failure {
    Failure(CGFLOW_ERR_NULL_POINTER, format!("{what} is NULL"))
}

unsafe fn deref<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn out<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or_else(|| null(what))
}

unsafe fn read_str<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure(CGFLOW_ERR_INVALID_ARGUMENT, format!("{what} is not valid UTF-8")))
}

fn to_c_string(s: String) -> *mut c_char {
    CString::new(s.replace('\0', " ")).expect("interior NULs removed").into_raw()
}

/// Last error message on the calling thread, or NULL. The pointer stays
/// valid until the next cgflow call on this thread.
#[no_mangle]
pub extern "C" fn cgflow_last_error() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ref().map_or(std::ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn cgflow_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Releases a string returned by this library. NULL is ignored.
///
/// # Safety
/// `s` must come from a cgflow function and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn cgflow_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Builds a schedule. `mode` is one of the `CGFLOW_INTEGRATOR_*` values.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn cgflow_schedule_new(
    lambda: f64,
    t_window: f64,
    n_steps: u32,
    max_components: usize,
    mode: c_int,
    out: *mut *mut CgflowSchedule,
) -> c_int {
    guard(|| {
        let out = self::out(out, "out")?;
        let mode = match mode {
            CGFLOW_INTEGRATOR_PAPER => IntegratorMode::Paper,
            CGFLOW_INTEGRATOR_RECTIFIED => IntegratorMode::Rectified,
            m => return Err(Failure(CGFLOW_ERR_INVALID_ARGUMENT, format!("unknown integrator mode {m}"))),
        };
        let s = Schedule::new(lambda, t_window, n_steps, max_components, mode)?;
        *out = Box::into_raw(Box::new(CgflowSchedule(s)));
        Ok(())
    })
}

/// # Safety
/// `s` must come from [`cgflow_schedule_new`] and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn cgflow_schedule_free(s: *mut CgflowSchedule) {
    if !s.is_null() {
        drop(Box::from_raw(s));
    }
}

/// Grid steps between consecutive actions.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn cgflow_schedule_lambda_steps(s: *const CgflowSchedule, out: *mut u32) -> c_int {
    guard(|| {
        *self::out(out, "out")? = deref(s, "schedule")?.0.lambda_steps();
        Ok(())
    })
}

/// Number of components present at grid step `step` of a trajectory with
/// `n` components.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn cgflow_schedule_k_of_t(
    s: *const CgflowSchedule,
    step: u32,
    n: usize,
    out: *mut usize,
) -> c_int {
    guard(|| {
        let s = &deref(s, "schedule")?.0;
        let out = self::out(out, "out")?;
        *out = s.k_of_t(s.time(step)?, n);
        Ok(())
    })
}

/// Local time at grid step `step` of the component inserted `index`-th
/// (1-based).
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn cgflow_schedule_t_local(
    s: *const CgflowSchedule,
    step: u32,
    index: usize,
    out: *mut f64,
) -> c_int {
    guard(|| {
        let s = &deref(s, "schedule")?.0;
        let out = self::out(out, "out")?;
        *out = s.t_local(s.time(step)?, s.t_gen(index)?);
        Ok(())
    })
}

/// Copies the action steps into `buf` (capacity `cap`) and stores the full
/// count in `len`. Returns `CGFLOW_ERR_SHAPE` when `cap` is too small; `len`
/// is still written.
///
/// # Safety
/// `buf` must hold `cap` elements (it may be NULL when `cap` is 0).
#[no_mangle]
pub unsafe extern "C" fn cgflow_schedule_action_steps(
    s: *const CgflowSchedule,
    buf: *mut u32,
    cap: usize,
    len: *mut usize,
) -> c_int {
    guard(|| {
        let steps = deref(s, "schedule")?.0.action_steps();
        *self::out(len, "len")? = steps.len();
        if steps.len() > cap {
            return Err(Failure(CGFLOW_ERR_SHAPE, format!("buffer holds {cap}, need {}", steps.len())));
        }
        if !steps.is_empty() {
            if buf.is_null() {
                return Err(null("buf"));
            }
            std::slice::from_raw_parts_mut(buf, steps.len()).copy_from_slice(&steps);
        }
        Ok(())
    })
}

/// Total-variation distance between two distributions of length `len`.
///
/// # Safety
/// `p` and `q` must hold `len` elements.
#[no_mangle]
pub unsafe extern "C" fn cgflow_tv_distance(p: *const f64, q: *const f64, len: usize, out: *mut f64) -> c_int {
    guard(|| {
        let out = self::out(out, "out")?;
        if len > 0 && (p.is_null() || q.is_null()) {
            return Err(null("distribution"));
        }
        let (p, q) = if len == 0 {
            (&[][..], &[][..])
        } else {
            (std::slice::from_raw_parts(p, len), std::slice::from_raw_parts(q, len))
        };
        *out = oracle::tv_distance(p, q)?;
        Ok(())
    })
}

/// Creates a run from a JSON configuration (NULL for built-in defaults).
///
/// # Safety
/// `config_json` must be NULL or NUL-terminated; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn cgflow_run_new(config_json: *const c_char, threads: usize, out: *mut *mut CgflowRun) -> c_int {
    guard(|| {
        let out = self::out(out, "out")?;
        let cfg = if config_json.is_null() {
            RunConfig::default()
        } else {
            RunConfig::from_json(read_str(config_json, "config_json")?)?
        };
        *out = Box::into_raw(Box::new(CgflowRun(Ctx::new(cfg, threads)?)));
        Ok(())
    })
}

/// Creates a run from a configuration file.
///
/// # Safety
/// `path` must be NUL-terminated; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn cgflow_run_load(path: *const c_char, threads: usize, out: *mut *mut CgflowRun) -> c_int {
    guard(|| {
        let out = self::out(out, "out")?;
        let cfg = RunConfig::load(read_str(path, "path")?.as_ref())?;
        *out = Box::into_raw(Box::new(CgflowRun(Ctx::new(cfg, threads)?)));
        Ok(())
    })
}

/// # Safety
/// `run` must come from a cgflow constructor and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn cgflow_run_free(run: *mut CgflowRun) {
    if !run.is_null() {
        drop(Box::from_raw(run));
    }
}

/// The run's configuration as pretty-printed JSON.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn cgflow_run_config_json(run: *const CgflowRun, out: *mut *mut c_char) -> c_int {
    guard(|| {
        let ctx = &deref(run, "run")?.0;
        *self::out(out, "out")? = to_c_string(ctx.cfg.to_json());
        Ok(())
    })
}

fn write_summary(out: *mut *mut c_char, value: serde_json::Value) {
    if !out.is_null() {
        unsafe { *out = to_c_string(value.to_string()) };
    }
}

/// Runs a pipeline step by its command-line name: `gen-data`,
/// `train-stateflow`, `train-policy`, `oracle`, `evaluate` or `gradcheck`.
/// Artifacts go to the configured paths. When `summary` is not NULL it
/// receives the JSON summary.
///
/// # Safety
/// `run` and `command` must be valid; `summary` may be NULL.
#[no_mangle]
pub unsafe extern "C" fn cgflow_run_command(
    run: *const CgflowRun,
    command: *const c_char,
    summary: *mut *mut c_char,
) -> c_int {
    guard(|| {
        let ctx = &deref(run, "run")?.0;
        let value = match read_str(command, "command")? {
            "gen-data" => commands::gen_data(ctx)?,
            "train-stateflow" => commands::train_stateflow(ctx)?,
            "train-policy" => commands::train_policy(ctx)?,
            "oracle" => commands::oracle(ctx, false)?,
            "evaluate" => commands::evaluate(ctx, None, None)?,
            "gradcheck" => commands::gradcheck_all(ctx)?,
            other => return Err(Failure(CGFLOW_ERR_INVALID_ARGUMENT, format!("unknown command `{other}`"))),
        };
        write_summary(summary, value);
        Ok(())
    })
}

/// Samples `n` trajectories into the configured samples file, from the
/// trained policy or, when `uniform` is true, the uniform policy.
///
/// # Safety
/// `run` must be valid; `summary` may be NULL.
#[no_mangle]
pub unsafe extern "C" fn cgflow_run_sample(
    run: *const CgflowRun,
    n: usize,
    uniform: bool,
    summary: *mut *mut c_char,
) -> c_int {
    guard(|| {
        let value = commands::sample(&deref(run, "run")?.0, n, uniform)?;
        write_summary(summary, value);
        Ok(())
    })
}

/// Runs the `cgflow` command line with `argc` arguments (`argv[0]` is the
/// program name) and returns its exit status.
///
/// # Safety
/// `argv` must hold `argc` NUL-terminated strings.
#[no_mangle]
pub unsafe extern "C" fn cgflow_main(argc: c_int, argv: *const *const c_char) -> c_int {
    let mut args = Vec::new();
    let code = guard(|| {
        if argc < 0 || (argc > 0 && argv.is_null()) {
            return Err(null("argv"));
        }
        for i in 0..argc as usize {
            args.push(read_str(*argv.add(i), "argv entry")?.to_string());
        }
        Ok(())
    });
    if code != CGFLOW_OK {
        return code;
    }
    match catch_unwind(|| cgflow_core::cli::main_with_args(args)) {
        Ok(c) => c,
        Err(_) => {
            set_last_error("panic in cgflow_main".into());
            CGFLOW_ERR_PANIC
        }
    }
}
