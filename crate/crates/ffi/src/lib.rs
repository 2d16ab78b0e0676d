//! C interface to the `owp` solver.
//!
//! Problems and results are opaque handles. Every fallible call returns an
//! [`OwpStatusCode`]; on failure a message is kept per thread and can be read
//! with [`owp_last_error_message`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::time::Instant;

use owp::driver::{run_owp, OwpOptions, OwpResult, OwpStatus};
use owp::io::{parse_problem, serialize_problem, ResultReport};
use owp::oracle::{sample_wp, LspOptions};
use owp::representation::{RepChoice, RepKind};
use owp::MopProblem;

/// Return codes of the fallible entry points.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OwpStatusCode {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Parse = 3,
    Solver = 4,
    OutOfRange = 5,
    Panic = 6,
}

/// Representation requested by [`OwpSolveOptions::rep`].
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OwpRep {
    Auto = 0,
    Xw = 1,
    Xlambda = 2,
    Xonly = 3,
}

/// Outcome of a solve.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OwpOutcome {
    Solved = 0,
    InfeasibleNoWpp = 1,
    OrderLimitReached = 2,
}

#[repr(C)]
#[derive(Clone, Copy, Debug)]
pub struct OwpSolveOptions {
    pub rep: OwpRep,
    /// Highest relaxation order; 0 picks the default.
    pub k_max: u32,
    pub rank_tol: f64,
    pub sdp_tol: f64,
    pub inverse_degree: u32,
}

/// Opaque problem handle.
pub struct OwpProblem(MopProblem);

/// Opaque result handle.
pub struct OwpResultHandle {
    result: OwpResult,
    seconds: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let s = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(s).ok());
}

fn clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

/// Runs `f`, recording its error message and converting panics.
fn guard(f: impl FnOnce() -> Result<(), (OwpStatusCode, String)>) -> OwpStatusCode {
    clear_error();
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => OwpStatusCode::Ok,
        Ok(Err((code, msg))) => {
            set_error(msg);
            code
        }
        Err(_) => {
            set_error("internal panic");
            OwpStatusCode::Panic
        }
    }
}

unsafe fn read_str<'a>(s: *const c_char) -> Result<&'a str, (OwpStatusCode, String)> {
    if s.is_null() {
        return Err((OwpStatusCode::NullPointer, "null string".into()));
    }
    CStr::from_ptr(s)
        .to_str()
        .map_err(|e| (OwpStatusCode::InvalidUtf8, e.to_string()))
}

unsafe fn deref<'a, T>(p: *const T, what: &str) -> Result<&'a T, (OwpStatusCode, String)> {
    p.as_ref()
        .ok_or_else(|| (OwpStatusCode::NullPointer, format!("null {what}")))
}

fn into_c_string(s: String) -> *mut c_char {
    CString::new(s).map_or(ptr::null_mut(), CString::into_raw)
}

/// Defaults matching the command-line tool.
#[no_mangle]
pub extern "C" fn owp_solve_options_default() -> OwpSolveOptions {
    let d = OwpOptions::default();
    OwpSolveOptions {
        rep: OwpRep::Auto,
        k_max: 0,
        rank_tol: d.rank_tol,
        sdp_tol: d.sdp.feas_tol,
        inverse_degree: d.inverse_degree,
    }
}

/// Message of the last failed call on this thread, or NULL. The pointer is
/// valid until the next call into this library from the same thread.
#[no_mangle]
pub extern "C" fn owp_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version, statically allocated.
#[no_mangle]
pub extern "C" fn owp_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Parses a problem document.
///
/// # Safety
/// `json` must be a NUL-terminated string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn owp_problem_from_json(
    json: *const c_char,
    out: *mut *mut OwpProblem,
) -> OwpStatusCode {
    guard(|| {
        if out.is_null() {
            return Err((OwpStatusCode::NullPointer, "null output pointer".into()));
        }
        *out = ptr::null_mut();
        let text = read_str(json)?;
        let prob = parse_problem(text).map_err(|e| (OwpStatusCode::Parse, e.to_string()))?;
        *out = Box::into_raw(Box::new(OwpProblem(prob)));
        Ok(())
    })
}

/// Serializes a problem; free the string with [`owp_string_free`].
///
/// # Safety
/// `problem` must be a live handle or NULL.
#[no_mangle]
pub unsafe extern "C" fn owp_problem_to_json(problem: *const OwpProblem) -> *mut c_char {
    match problem.as_ref() {
        Some(p) => into_c_string(serialize_problem(&p.0)),
        None => {
            set_error("null problem");
            ptr::null_mut()
        }
    }
}

/// Number of decision variables, or 0 for NULL.
///
/// # Safety
/// `problem` must be a live handle or NULL.
#[no_mangle]
pub unsafe extern "C" fn owp_problem_nvars(problem: *const OwpProblem) -> usize {
    problem.as_ref().map_or(0, |p| p.0.n)
}

/// Number of objectives, or 0 for NULL.
///
/// # Safety
/// `problem` must be a live handle or NULL.
#[no_mangle]
pub unsafe extern "C" fn owp_problem_num_objectives(problem: *const OwpProblem) -> usize {
    problem.as_ref().map_or(0, |p| p.0.m())
}

/// # Safety
/// `problem` must come from [`owp_problem_from_json`] and not be used again.
#[no_mangle]
pub unsafe extern "C" fn owp_problem_free(problem: *mut OwpProblem) {
    if !problem.is_null() {
        drop(Box::from_raw(problem));
    }
}

/// Runs the full hierarchy. `options` may be NULL for defaults.
///
/// # Safety
/// `problem` must be a live handle, `options` NULL or valid, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn owp_solve(
    problem: *const OwpProblem,
    options: *const OwpSolveOptions,
    out: *mut *mut OwpResultHandle,
) -> OwpStatusCode {
    guard(|| {
        if out.is_null() {
            return Err((OwpStatusCode::NullPointer, "null output pointer".into()));
        }
        *out = ptr::null_mut();
        let prob = deref(problem, "problem")?;
        let o = options.as_ref().copied().unwrap_or_else(|| owp_solve_options_default());
        let mut opts = OwpOptions {
            rep: match o.rep {
                OwpRep::Auto => RepChoice::Auto,
                OwpRep::Xw => RepChoice::Fixed(RepKind::XW),
                OwpRep::Xlambda => RepChoice::Fixed(RepKind::XLambda),
                OwpRep::Xonly => RepChoice::Fixed(RepKind::XOnly),
            },
            k_max: (o.k_max > 0).then_some(o.k_max),
            rank_tol: o.rank_tol,
            inverse_degree: o.inverse_degree,
            ..Default::default()
        };
        opts.sdp.feas_tol = o.sdp_tol;
        opts.sdp.gap_tol = o.sdp_tol;
        let started = Instant::now();
        let result = run_owp(&prob.0, &opts).map_err(|e| (OwpStatusCode::Solver, e.to_string()))?;
        *out = Box::into_raw(Box::new(OwpResultHandle {
            result,
            seconds: started.elapsed().as_secs_f64(),
        }));
        Ok(())
    })
}

/// # Safety
/// `result` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn owp_result_outcome(
    result: *const OwpResultHandle,
    out: *mut OwpOutcome,
) -> OwpStatusCode {
    guard(|| {
        let r = deref(result, "result")?;
        if out.is_null() {
            return Err((OwpStatusCode::NullPointer, "null output pointer".into()));
        }
        *out = match r.result.status {
            OwpStatus::Solved => OwpOutcome::Solved,
            OwpStatus::InfeasibleNoWPP => OwpOutcome::InfeasibleNoWpp,
            OwpStatus::OrderLimitReached => OwpOutcome::OrderLimitReached,
        };
        Ok(())
    })
}

/// Optimal value; infinity when the weakly Pareto set is empty, NaN for NULL.
///
/// # Safety
/// `result` must be a live handle or NULL.
#[no_mangle]
pub unsafe extern "C" fn owp_result_fmin(result: *const OwpResultHandle) -> f64 {
    result.as_ref().map_or(f64::NAN, |r| r.result.fmin)
}

/// Relaxation order at which the run stopped.
///
/// # Safety
/// `result` must be a live handle or NULL.
#[no_mangle]
pub unsafe extern "C" fn owp_result_order(result: *const OwpResultHandle) -> u32 {
    result.as_ref().map_or(0, |r| r.result.order_used)
}

/// # Safety
/// `result` must be a live handle or NULL.
#[no_mangle]
pub unsafe extern "C" fn owp_result_num_minimizers(result: *const OwpResultHandle) -> usize {
    result.as_ref().map_or(0, |r| r.result.minimizers.len())
}

/// Which vector of a minimizer to copy.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OwpField {
    X = 0,
    W = 1,
    Lambda = 2,
}

/// Copies one vector of minimizer `index` into `buf`. `*len` holds the buffer
/// capacity on entry and the vector length on return; with a NULL `buf` only
/// the length is reported.
///
/// # Safety
/// `result` must be a live handle, `len` writable, and `buf` NULL or valid for
/// `*len` writes.
#[no_mangle]
pub unsafe extern "C" fn owp_result_minimizer(
    result: *const OwpResultHandle,
    index: usize,
    field: OwpField,
    buf: *mut f64,
    len: *mut usize,
) -> OwpStatusCode {
    guard(|| {
        let r = deref(result, "result")?;
        if len.is_null() {
            return Err((OwpStatusCode::NullPointer, "null length pointer".into()));
        }
        let m = r.result.minimizers.get(index).ok_or_else(|| {
            (
                OwpStatusCode::OutOfRange,
                format!("minimizer {index} of {}", r.result.minimizers.len()),
            )
        })?;
        let v = match field {
            OwpField::X => &m.x,
            OwpField::W => &m.w,
            OwpField::Lambda => &m.lambda,
        };
        let cap = *len;
        *len = v.len();
        if buf.is_null() {
            return Ok(());
        }
        if cap < v.len() {
            return Err((
                OwpStatusCode::OutOfRange,
                format!("buffer holds {cap} values, need {}", v.len()),
            ));
        }
        ptr::copy_nonoverlapping(v.as_ptr(), buf, v.len());
        Ok(())
    })
}

/// Full JSON report; free with [`owp_string_free`].
///
/// # Safety
/// `result` must be a live handle or NULL.
#[no_mangle]
pub unsafe extern "C" fn owp_result_to_json(result: *const OwpResultHandle) -> *mut c_char {
    match result.as_ref() {
        Some(r) => into_c_string(ResultReport::new(&r.result, r.seconds).to_json()),
        None => {
            set_error("null result");
            ptr::null_mut()
        }
    }
}

/// # Safety
/// `result` must come from [`owp_solve`] and not be used again.
#[no_mangle]
pub unsafe extern "C" fn owp_result_free(result: *mut OwpResultHandle) {
    if !result.is_null() {
        drop(Box::from_raw(result));
    }
}

/// Smallest preference value over a weight grid of the given resolution.
///
/// # Safety
/// `problem` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn owp_oracle_upper_bound(
    problem: *const OwpProblem,
    resolution: usize,
    out: *mut f64,
) -> OwpStatusCode {
    guard(|| {
        let prob = deref(problem, "problem")?;
        if out.is_null() {
            return Err((OwpStatusCode::NullPointer, "null output pointer".into()));
        }
        let report = sample_wp(&prob.0, resolution, &LspOptions::default());
        *out = report.upper_bound.ok_or_else(|| {
            (
                OwpStatusCode::Solver,
                "no scalarization converged".to_string(),
            )
        })?;
        Ok(())
    })
}

/// # Safety
/// `s` must come from this library and not be used again.
#[no_mangle]
pub unsafe extern "C" fn owp_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
