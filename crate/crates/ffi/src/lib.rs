//! C ABI over the seqopt experiment runner.
//!
//! Every entry point returns a status code (`SEQOPT_OK` on success) and
//! writes results through out-pointers. On failure a message is stored per
//! thread and can be read with [`seqopt_last_error_message`]. Panics never
//! cross the boundary; they are reported as `SEQOPT_ERR_PANIC`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use seqopt::bound::BoundModel;
use seqopt::config::ExperimentConfig;
use seqopt::domain::ConvexityConstants;
use seqopt::experiment::{run_experiment, summary_json, write_results, ExperimentResult};
use seqopt::planner::{phi_loss, PhiKind};
use seqopt::scenarios::roc_auc;

pub const SEQOPT_OK: i32 = 0;
pub const SEQOPT_ERR_NULL_POINTER: i32 = 1;
pub const SEQOPT_ERR_INVALID_UTF8: i32 = 2;
pub const SEQOPT_ERR_CONFIG: i32 = 3;
pub const SEQOPT_ERR_RUNTIME: i32 = 4;
pub const SEQOPT_ERR_OUT_OF_RANGE: i32 = 5;
pub const SEQOPT_ERR_PANIC: i32 = 6;

pub const SEQOPT_PHI_MEAN: i32 = 0;
pub const SEQOPT_PHI_MAX: i32 = 1;
pub const SEQOPT_PHI_MAX_INCREASING_RUN: i32 = 2;

/// A validated experiment configuration.
pub struct SeqoptExperiment {
    config: ExperimentConfig,
}

/// Results of one experiment: per-arm, per-run step records.
pub struct SeqoptResults {
    result: ExperimentResult,
    names: Vec<CString>,
}

/// One step of one run. Quantities that are not available for the scenario
/// or step are NaN.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeqoptRecord {
    pub n: u64,
    pub k: u64,
    pub rho_hat: f64,
    pub slack: f64,
    pub eps_hat: f64,
    pub xi: f64,
    pub excess_exact: f64,
    pub test_loss: f64,
    pub auc: f64,
    pub cum_cost: f64,
}

struct Failure {
    code: i32,
    message: String,
}

impl Failure {
    fn new(code: i32, message: impl Into<String>) -> Self {
        Self {
            code,
            message: message.into(),
        }
    }
}

impl From<seqopt::Error> for Failure {
    fn from(e: seqopt::Error) -> Self {
        let code = if e.is_config() {
            SEQOPT_ERR_CONFIG
        } else {
            SEQOPT_ERR_RUNTIME
        };
        Failure::new(code, e.to_string())
    }
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(message: &str) {
    let c = CString::new(message.replace('\0', " ")).expect("interior NULs removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> i32 {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            SEQOPT_OK
        }
        Ok(Err(fail)) => {
            set_last_error(&fail.message);
            fail.code
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_last_error(&format!("panic: {msg}"));
            SEQOPT_ERR_PANIC
        }
    }
}

fn null(what: &str) -> Failure {
    Failure::new(SEQOPT_ERR_NULL_POINTER, format!("`{what}` is null"))
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|e| Failure::new(SEQOPT_ERR_INVALID_UTF8, format!("`{what}`: {e}")))
}

unsafe fn ref_arg<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn out_arg<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or_else(|| null(what))
}

unsafe fn slice_arg<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

fn out_of_range(what: &str, index: usize, len: usize) -> Failure {
    Failure::new(SEQOPT_ERR_OUT_OF_RANGE, format!("{what} {index} out of range (have {len})"))
}

/// Last error message on this thread, or NULL after a successful call. The
/// pointer stays valid until the next seqopt call on the same thread.
#[no_mangle]
pub extern "C" fn seqopt_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

fn boxed_experiment(config: ExperimentConfig, out: &mut *mut SeqoptExperiment) {
    *out = Box::into_raw(Box::new(SeqoptExperiment { config }));
}

/// Parses and validates a TOML experiment config. Relative CSV paths are
/// resolved against the working directory.
///
/// # Safety
/// `toml` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn seqopt_experiment_from_toml(
    toml: *const c_char,
    out: *mut *mut SeqoptExperiment,
) -> i32 {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        let cfg = ExperimentConfig::from_toml_str(str_arg(toml, "toml")?)?;
        boxed_experiment(cfg, out);
        Ok(())
    })
}

/// Loads a built-in preset by name.
///
/// # Safety
/// `name` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn seqopt_experiment_from_preset(
    name: *const c_char,
    out: *mut *mut SeqoptExperiment,
) -> i32 {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        let cfg = ExperimentConfig::preset(str_arg(name, "name")?)?;
        boxed_experiment(cfg, out);
        Ok(())
    })
}

/// Overrides the base seed.
///
/// # Safety
/// `exp` must come from `seqopt_experiment_from_*` and not be freed.
#[no_mangle]
pub unsafe extern "C" fn seqopt_experiment_set_seed(exp: *mut SeqoptExperiment, seed: u64) -> i32 {
    guard(|| {
        out_arg(exp, "exp")?.config.run.seed = seed;
        Ok(())
    })
}

/// Overrides the number of runs (at least one).
///
/// # Safety
/// `exp` must come from `seqopt_experiment_from_*` and not be freed.
#[no_mangle]
pub unsafe extern "C" fn seqopt_experiment_set_runs(exp: *mut SeqoptExperiment, runs: usize) -> i32 {
    guard(|| {
        let exp = out_arg(exp, "exp")?;
        if runs == 0 {
            return Err(Failure::new(SEQOPT_ERR_CONFIG, "runs must be >= 1"));
        }
        exp.config.run.runs = runs;
        Ok(())
    })
}

/// Runs every configured arm.
///
/// # Safety
/// `exp` must be a live experiment handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn seqopt_experiment_run(
    exp: *const SeqoptExperiment,
    out: *mut *mut SeqoptResults,
) -> i32 {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        let result = run_experiment(&ref_arg(exp, "exp")?.config)?;
        let names = result
            .arms
            .iter()
            .map(|a| CString::new(a.name.clone()).expect("arm names have no NULs"))
            .collect();
        *out = Box::into_raw(Box::new(SeqoptResults { result, names }));
        Ok(())
    })
}

/// # Safety
/// `exp` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn seqopt_experiment_free(exp: *mut SeqoptExperiment) {
    if !exp.is_null() {
        drop(Box::from_raw(exp));
    }
}

/// # Safety
/// `res` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn seqopt_results_free(res: *mut SeqoptResults) {
    if !res.is_null() {
        drop(Box::from_raw(res));
    }
}

/// # Safety
/// `res` must be a live results handle; `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn seqopt_results_arm_count(res: *const SeqoptResults, out: *mut usize) -> i32 {
    guard(|| {
        *out_arg(out, "out")? = ref_arg(res, "res")?.result.arms.len();
        Ok(())
    })
}

/// Name of an arm. The string is owned by `res`.
///
/// # Safety
/// `res` must be a live results handle; `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn seqopt_results_arm_name(
    res: *const SeqoptResults,
    arm: usize,
    out: *mut *const c_char,
) -> i32 {
    guard(|| {
        let res = ref_arg(res, "res")?;
        let out = out_arg(out, "out")?;
        let name = res.names.get(arm).ok_or_else(|| out_of_range("arm", arm, res.names.len()))?;
        *out = name.as_ptr();
        Ok(())
    })
}

/// # Safety
/// `res` must be a live results handle; `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn seqopt_results_run_count(
    res: *const SeqoptResults,
    arm: usize,
    out: *mut usize,
) -> i32 {
    guard(|| {
        let arms = &ref_arg(res, "res")?.result.arms;
        let a = arms.get(arm).ok_or_else(|| out_of_range("arm", arm, arms.len()))?;
        *out_arg(out, "out")? = a.runs.len();
        Ok(())
    })
}

/// # Safety
/// `res` must be a live results handle; `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn seqopt_results_step_count(
    res: *const SeqoptResults,
    arm: usize,
    run: usize,
    out: *mut usize,
) -> i32 {
    guard(|| {
        let arms = &ref_arg(res, "res")?.result.arms;
        let a = arms.get(arm).ok_or_else(|| out_of_range("arm", arm, arms.len()))?;
        let r = a.runs.get(run).ok_or_else(|| out_of_range("run", run, a.runs.len()))?;
        *out_arg(out, "out")? = r.steps.len();
        Ok(())
    })
}

/// Copies the record of step index `step` (0-based) into `out`.
///
/// # Safety
/// `res` must be a live results handle; `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn seqopt_results_record(
    res: *const SeqoptResults,
    arm: usize,
    run: usize,
    step: usize,
    out: *mut SeqoptRecord,
) -> i32 {
    guard(|| {
        let arms = &ref_arg(res, "res")?.result.arms;
        let a = arms.get(arm).ok_or_else(|| out_of_range("arm", arm, arms.len()))?;
        let r = a.runs.get(run).ok_or_else(|| out_of_range("run", run, a.runs.len()))?;
        let s = r.steps.get(step).ok_or_else(|| out_of_range("step", step, r.steps.len()))?;
        let nan = |v: Option<f64>| v.unwrap_or(f64::NAN);
        *out_arg(out, "out")? = SeqoptRecord {
            n: s.n as u64,
            k: s.k,
            rho_hat: nan(s.rho_hat),
            slack: nan(s.slack),
            eps_hat: s.eps_hat,
            xi: s.xi,
            excess_exact: nan(s.excess_exact),
            test_loss: s.test_loss,
            auc: nan(s.auc),
            cum_cost: nan(s.cum_cost),
        };
        Ok(())
    })
}

/// Writes the per-run CSVs, aggregates and summary into `dir`. A non-empty
/// directory is refused unless `force` is true.
///
/// # Safety
/// `res` must be a live results handle; `dir` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn seqopt_results_write(res: *const SeqoptResults, dir: *const c_char, force: bool) -> i32 {
    guard(|| {
        let res = ref_arg(res, "res")?;
        write_results(&res.result, Path::new(str_arg(dir, "dir")?), force)?;
        Ok(())
    })
}

/// Summary JSON as a new string; release it with [`seqopt_string_free`].
///
/// # Safety
/// `res` must be a live results handle; `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn seqopt_results_summary_json(res: *const SeqoptResults, out: *mut *mut c_char) -> i32 {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        let text = summary_json(&ref_arg(res, "res")?.result).to_string();
        *out = CString::new(text).expect("JSON has no NULs").into_raw();
        Ok(())
    })
}

/// # Safety
/// `s` must be NULL or a string returned by this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn seqopt_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Smallest `K` with `b(d0, K) <= eps`. `saturated` is set when even the
/// cap `k_cap` misses the target.
///
/// # Safety
/// `k_out` must be valid; `saturated` may be NULL.
#[no_mangle]
pub unsafe extern "C" fn seqopt_bound_invert(
    c_alpha: f64,
    c_beta: f64,
    m: f64,
    big_m: f64,
    k_cap: u64,
    d0: f64,
    eps: f64,
    k_out: *mut u64,
    saturated: *mut bool,
) -> i32 {
    guard(|| {
        let k_out = out_arg(k_out, "k_out")?;
        let bm = BoundModel::new(c_alpha, c_beta, ConvexityConstants::new(m, big_m)?, k_cap)?;
        let inv = bm.invert(d0, eps)?;
        *k_out = inv.k;
        if let Some(s) = saturated.as_mut() {
            *s = inv.saturated;
        }
        Ok(())
    })
}

/// ROC AUC of `scores` against `labels` (non-zero is positive).
///
/// # Safety
/// `scores` and `labels` must each point to `len` elements; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn seqopt_roc_auc(
    scores: *const f64,
    labels: *const u8,
    len: usize,
    out: *mut f64,
) -> i32 {
    guard(|| {
        let out = out_arg(out, "out")?;
        let s = slice_arg(scores, len, "scores")?;
        let l = slice_arg(labels, len, "labels")?;
        let pairs: Vec<(f64, bool)> = s.iter().zip(l).map(|(&v, &y)| (v, y != 0)).collect();
        *out = roc_auc(&pairs)?;
        Ok(())
    })
}

/// Aggregate loss of excess-risk gaps; `kind` is one of the `SEQOPT_PHI_*`
/// constants.
///
/// # Safety
/// `xi` must point to `len` elements; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn seqopt_phi_loss(kind: i32, xi: *const f64, len: usize, out: *mut f64) -> i32 {
    guard(|| {
        let out = out_arg(out, "out")?;
        let kind = match kind {
            SEQOPT_PHI_MEAN => PhiKind::Mean,
            SEQOPT_PHI_MAX => PhiKind::Max,
            SEQOPT_PHI_MAX_INCREASING_RUN => PhiKind::MaxIncreasingRun,
            other => return Err(Failure::new(SEQOPT_ERR_OUT_OF_RANGE, format!("unknown phi kind {other}"))),
        };
        let xi = slice_arg(xi, len, "xi")?;
        if xi.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Failure::new(SEQOPT_ERR_OUT_OF_RANGE, "gaps must be finite and >= 0"));
        }
        *out = phi_loss(kind, xi);
        Ok(())
    })
}
