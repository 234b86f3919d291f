//! C interface to the refsafe simulator and SOCP filter.
//!
//! Fallible functions return a `RefsafeStatus`. On failure the message is
//! available from `refsafe_last_error` on the same thread until the next
//! failing call. Handles are opaque and must be released with their `_free`
//! function; passing null to a `_free` function is a no-op.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use nalgebra::DVector;
use refsafe::cli::write_trace_csv;
use refsafe::sim::{metrics, run_scenario, FilterKind, ScenarioConfig, SimTrace};
use refsafe::solvers::{SocpOptions, SocpProblem, SocpSolver, SocpStatus};
use refsafe::Error;

/// Result codes shared by every entry point.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RefsafeStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Config = 3,
    Infeasible = 4,
    MaxIters = 5,
    Numerical = 6,
    Io = 7,
    Panic = 8,
}

/// Filter selector for `refsafe_scenario_set_filter`.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RefsafeFilter {
    PlantQp = 0,
    ReferenceQp = 1,
    RobustSocp = 2,
    Unfiltered = 3,
}

/// Scenario configuration handle.
pub struct RefsafeScenario {
    cfg: ScenarioConfig,
}

/// Simulation result handle.
pub struct RefsafeTrace {
    trace: SimTrace,
}

/// SOCP filter handle.
pub struct RefsafeSolver {
    solver: SocpSolver,
}

/// Summary metrics of a trace.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct RefsafeMetrics {
    pub min_h_plant: f64,
    pub min_h_ref: f64,
    pub terminal_goal_distance: f64,
    pub terminal_tracking_error: f64,
    pub control_effort: f64,
    pub smoothness: f64,
    pub fault_count: usize,
    pub budget_violation_count: usize,
}

/// One sample of a quadrotor trace, in world coordinates.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct RefsafeSample {
    pub t: f64,
    pub x_p: [f64; 6],
    pub x_m: [f64; 6],
    pub r_star: [f64; 3],
    pub r: [f64; 3],
    pub u: [f64; 3],
    pub h_plant: f64,
    pub h_ref: f64,
    pub delta: f64,
    /// Nonzero when the step carries a fault flag.
    pub fault: i32,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).expect("interior nul removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> RefsafeStatus {
    match e {
        Error::Config { .. } => RefsafeStatus::Config,
        Error::Infeasible(_) => RefsafeStatus::Infeasible,
        Error::MaxIters(_) => RefsafeStatus::MaxIters,
        Error::Io(_) => RefsafeStatus::Io,
        Error::Dimension { .. } => RefsafeStatus::InvalidArgument,
        _ => RefsafeStatus::Numerical,
    }
}

fn fail(status: RefsafeStatus, msg: &str) -> RefsafeStatus {
    set_error(msg);
    status
}

fn from_err(e: Error) -> RefsafeStatus {
    fail(status_of(&e), &e.to_string())
}

/// Runs `f`, turning a panic into `Panic`.
fn guard(f: impl FnOnce() -> RefsafeStatus) -> RefsafeStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => s,
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".to_string());
            fail(RefsafeStatus::Panic, &msg)
        }
    }
}

unsafe fn c_str<'a>(p: *const c_char, what: &str) -> Result<&'a str, RefsafeStatus> {
    if p.is_null() {
        return Err(fail(RefsafeStatus::NullPointer, &format!("{what} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| fail(RefsafeStatus::InvalidArgument, &format!("{what} is not UTF-8")))
}

/// Message of the last failure on this thread, or null. Valid until the next
/// failing call on the same thread.
#[no_mangle]
pub extern "C" fn refsafe_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static nul-terminated string.
#[no_mangle]
pub extern "C" fn refsafe_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Scenario with the built-in benchmark defaults.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn refsafe_scenario_default(out: *mut *mut RefsafeScenario) -> RefsafeStatus {
    guard(|| {
        if out.is_null() {
            return fail(RefsafeStatus::NullPointer, "out is null");
        }
        *out = Box::into_raw(Box::new(RefsafeScenario {
            cfg: ScenarioConfig::default(),
        }));
        RefsafeStatus::Ok
    })
}

/// Parses and validates a TOML scenario.
///
/// # Safety
/// `toml` must be a nul-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn refsafe_scenario_from_toml(
    toml: *const c_char,
    out: *mut *mut RefsafeScenario,
) -> RefsafeStatus {
    guard(|| {
        if out.is_null() {
            return fail(RefsafeStatus::NullPointer, "out is null");
        }
        let text = match c_str(toml, "toml") {
            Ok(t) => t,
            Err(s) => return s,
        };
        match ScenarioConfig::from_toml_str(text).and_then(|c| c.validate().map(|_| c)) {
            Ok(cfg) => {
                *out = Box::into_raw(Box::new(RefsafeScenario { cfg }));
                RefsafeStatus::Ok
            }
            Err(e) => from_err(e),
        }
    })
}

/// # Safety
/// `scenario` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn refsafe_scenario_free(scenario: *mut RefsafeScenario) {
    if !scenario.is_null() {
        drop(Box::from_raw(scenario));
    }
}

/// # Safety
/// `scenario` must be a valid handle.
#[no_mangle]
pub unsafe extern "C" fn refsafe_scenario_set_filter(
    scenario: *mut RefsafeScenario,
    filter: RefsafeFilter,
) -> RefsafeStatus {
    guard(|| {
        let Some(s) = scenario.as_mut() else {
            return fail(RefsafeStatus::NullPointer, "scenario is null");
        };
        s.cfg.filter.kind = match filter {
            RefsafeFilter::PlantQp => FilterKind::PlantQp,
            RefsafeFilter::ReferenceQp => FilterKind::ReferenceQp,
            RefsafeFilter::RobustSocp => FilterKind::RobustSocp,
            RefsafeFilter::Unfiltered => FilterKind::None,
        };
        RefsafeStatus::Ok
    })
}

/// Sets the integration step and horizon in seconds.
///
/// # Safety
/// `scenario` must be a valid handle.
#[no_mangle]
pub unsafe extern "C" fn refsafe_scenario_set_time(
    scenario: *mut RefsafeScenario,
    dt: f64,
    horizon: f64,
) -> RefsafeStatus {
    guard(|| {
        let Some(s) = scenario.as_mut() else {
            return fail(RefsafeStatus::NullPointer, "scenario is null");
        };
        let mut cfg = s.cfg.clone();
        cfg.time.dt = dt;
        cfg.time.horizon = horizon;
        match cfg.validate() {
            Ok(()) => {
                s.cfg = cfg;
                RefsafeStatus::Ok
            }
            Err(e) => from_err(e),
        }
    })
}

/// Runs the scenario with its configured filter.
///
/// # Safety
/// `scenario` must be a valid handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn refsafe_scenario_run(
    scenario: *const RefsafeScenario,
    out: *mut *mut RefsafeTrace,
) -> RefsafeStatus {
    guard(|| {
        let Some(s) = scenario.as_ref() else {
            return fail(RefsafeStatus::NullPointer, "scenario is null");
        };
        if out.is_null() {
            return fail(RefsafeStatus::NullPointer, "out is null");
        }
        match run_scenario(&s.cfg) {
            Ok(trace) => {
                *out = Box::into_raw(Box::new(RefsafeTrace { trace }));
                RefsafeStatus::Ok
            }
            Err(e) => from_err(e),
        }
    })
}

/// # Safety
/// `trace` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn refsafe_trace_free(trace: *mut RefsafeTrace) {
    if !trace.is_null() {
        drop(Box::from_raw(trace));
    }
}

/// Number of samples, or 0 for a null handle.
///
/// # Safety
/// `trace` must be null or a valid handle.
#[no_mangle]
pub unsafe extern "C" fn refsafe_trace_len(trace: *const RefsafeTrace) -> usize {
    trace.as_ref().map_or(0, |t| t.trace.rows.len())
}

/// # Safety
/// `trace` must be a valid handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn refsafe_trace_metrics(trace: *const RefsafeTrace, out: *mut RefsafeMetrics) -> RefsafeStatus {
    guard(|| {
        let (Some(t), Some(out)) = (trace.as_ref(), out.as_mut()) else {
            return fail(RefsafeStatus::NullPointer, "trace or out is null");
        };
        let m = metrics(&t.trace);
        *out = RefsafeMetrics {
            min_h_plant: m.min_h_plant,
            min_h_ref: m.min_h_ref,
            terminal_goal_distance: m.terminal_goal_distance,
            terminal_tracking_error: m.terminal_tracking_error,
            control_effort: m.control_effort,
            smoothness: m.smoothness,
            fault_count: m.fault_count,
            budget_violation_count: m.budget_violation_count,
        };
        RefsafeStatus::Ok
    })
}

fn copy_into<const N: usize>(src: &[f64]) -> [f64; N] {
    let mut out = [0.0; N];
    out.copy_from_slice(src);
    out
}

/// Copies sample `index` into `out`.
///
/// # Safety
/// `trace` must be a valid handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn refsafe_trace_sample(
    trace: *const RefsafeTrace,
    index: usize,
    out: *mut RefsafeSample,
) -> RefsafeStatus {
    guard(|| {
        let (Some(t), Some(out)) = (trace.as_ref(), out.as_mut()) else {
            return fail(RefsafeStatus::NullPointer, "trace or out is null");
        };
        let Some(row) = t.trace.rows.get(index) else {
            return fail(
                RefsafeStatus::InvalidArgument,
                &format!("index {index} out of range for {} samples", t.trace.rows.len()),
            );
        };
        *out = RefsafeSample {
            t: row.t,
            x_p: copy_into(&row.x_p),
            x_m: copy_into(&row.x_m),
            r_star: copy_into(&row.r_star),
            r: copy_into(&row.r),
            u: copy_into(&row.u),
            h_plant: row.h_plant,
            h_ref: row.h_ref,
            delta: row.delta,
            fault: row.fault as i32,
        };
        RefsafeStatus::Ok
    })
}

/// Writes the trace in the CLI's `trace.csv` layout.
///
/// # Safety
/// `trace` must be a valid handle and `path` a nul-terminated string.
#[no_mangle]
pub unsafe extern "C" fn refsafe_trace_write_csv(trace: *const RefsafeTrace, path: *const c_char) -> RefsafeStatus {
    guard(|| {
        let Some(t) = trace.as_ref() else {
            return fail(RefsafeStatus::NullPointer, "trace is null");
        };
        let path = match c_str(path, "path") {
            Ok(p) => p,
            Err(s) => return s,
        };
        match write_trace_csv(&t.trace, Path::new(path)) {
            Ok(()) => RefsafeStatus::Ok,
            Err(e) => from_err(e),
        }
    })
}

/// SOCP filter with tolerance `tol` and iteration cap `max_iters`; zero for
/// either selects the default.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn refsafe_solver_new(tol: f64, max_iters: usize, out: *mut *mut RefsafeSolver) -> RefsafeStatus {
    guard(|| {
        if out.is_null() {
            return fail(RefsafeStatus::NullPointer, "out is null");
        }
        let mut opts = SocpOptions::default();
        if tol != 0.0 {
            if !(tol.is_finite() && tol > 0.0) {
                return fail(RefsafeStatus::InvalidArgument, "tol must be positive");
            }
            opts.tol = tol;
        }
        if max_iters != 0 {
            opts.max_iters = max_iters;
        }
        *out = Box::into_raw(Box::new(RefsafeSolver {
            solver: SocpSolver::new(opts),
        }));
        RefsafeStatus::Ok
    })
}

/// # Safety
/// `solver` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn refsafe_solver_free(solver: *mut RefsafeSolver) {
    if !solver.is_null() {
        drop(Box::from_raw(solver));
    }
}

/// Solves `min ‖r − r*‖ + ρ‖r‖  s.t.  aᵀr − c‖r‖ ≥ β` for `r` of length `p`.
///
/// # Safety
/// `r_star`, `a` and `r_out` must each point to `p` doubles; `eta_out` may be null.
#[no_mangle]
#[allow(clippy::too_many_arguments)]
pub unsafe extern "C" fn refsafe_solver_solve(
    solver: *const RefsafeSolver,
    p: usize,
    r_star: *const f64,
    a: *const f64,
    c: f64,
    beta: f64,
    rho: f64,
    r_out: *mut f64,
    eta_out: *mut f64,
) -> RefsafeStatus {
    guard(|| {
        let Some(s) = solver.as_ref() else {
            return fail(RefsafeStatus::NullPointer, "solver is null");
        };
        if r_star.is_null() || a.is_null() || r_out.is_null() {
            return fail(RefsafeStatus::NullPointer, "vector argument is null");
        }
        if p == 0 {
            return fail(RefsafeStatus::InvalidArgument, "p must be positive");
        }
        let rs = DVector::from_column_slice(std::slice::from_raw_parts(r_star, p));
        let av = DVector::from_column_slice(std::slice::from_raw_parts(a, p));
        let prob = match SocpProblem::new(rs, rho, av, c, beta) {
            Ok(p) => p,
            Err(e) => return fail(RefsafeStatus::InvalidArgument, &e.to_string()),
        };
        let sol = s.solver.solve(&prob);
        match sol.status {
            SocpStatus::Optimal => {
                std::slice::from_raw_parts_mut(r_out, p).copy_from_slice(sol.r.as_slice());
                if let Some(eta) = eta_out.as_mut() {
                    *eta = sol.eta;
                }
                RefsafeStatus::Ok
            }
            SocpStatus::Infeasible => fail(RefsafeStatus::Infeasible, "constraint cannot be satisfied"),
            SocpStatus::MaxIters => fail(RefsafeStatus::MaxIters, "iteration limit reached"),
        }
    })
}
