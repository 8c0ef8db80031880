//! C ABI over the `evcfl` crate.
//!
//! Instances and solutions cross the boundary as opaque handles. Instances
//! come from `evcfl_instance_from_json`, `_generate` or `_worstcase`;
//! solutions from `evcfl_solve` or `evcfl_solution_from_json`. Each is
//! released with the matching `_free`. Every fallible call returns an [`EvcflStatus`]; on
//! failure [`evcfl_last_error`] holds a message for the calling thread.
//! Strings handed out by the library are released with [`evcfl_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use evcfl::domain::{validate_instance, Instance, ModelKind};
use evcfl::evaluator::VacancyRule;
use evcfl::instgen::{build_worstcase_instance, generate_instance, GenParams};
use evcfl::milp::{default_backend, MilpError, SolveOptions, SolveStatus};
use evcfl::solution::{solve_instance, RunError, Solution};

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvcflStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    /// Malformed JSON or a value out of its domain.
    InvalidInput = 3,
    Infeasible = 4,
    /// The solver failed or stopped without an incumbent.
    Backend = 5,
    /// A Rust panic was caught at the boundary.
    Panic = 6,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvcflModel {
    Sp = 0,
    Mp = 1,
}

impl From<EvcflModel> for ModelKind {
    fn from(m: EvcflModel) -> Self {
        match m {
            EvcflModel::Sp => ModelKind::Sp,
            EvcflModel::Mp => ModelKind::Mp,
        }
    }
}

/// Service statistics of an evaluated solution.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct EvcflReport {
    pub stations: u32,
    pub quick: u32,
    pub fast: u32,
    pub reall_pct: f64,
    pub lost_pct: f64,
    pub max_lost_pct: f64,
}

/// Opaque instance handle.
pub struct EvcflInstance(Instance);

/// Opaque solution handle.
pub struct EvcflSolution(Solution);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

struct Failure(EvcflStatus, String);

impl Failure {
    fn input(msg: impl ToString) -> Self {
        Failure(EvcflStatus::InvalidInput, msg.to_string())
    }
}

impl From<RunError> for Failure {
    fn from(e: RunError) -> Self {
        match e {
            RunError::Milp(MilpError::Backend(m)) => Failure(EvcflStatus::Backend, m),
            RunError::Extract(e) => Failure(EvcflStatus::Backend, e.to_string()),
            e => Failure::input(e),
        }
    }
}

/// Runs `f`, maps its outcome to a status and records the error text.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> EvcflStatus {
    clear_error();
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => EvcflStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(panic) => {
            let msg = panic
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| panic.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("internal error: {msg}"));
            EvcflStatus::Panic
        }
    }
}

unsafe fn read_str<'a>(p: *const c_char) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure(EvcflStatus::NullPointer, "null string argument".into()));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|e| Failure(EvcflStatus::InvalidUtf8, e.to_string()))
}

unsafe fn deref<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref()
        .ok_or_else(|| Failure(EvcflStatus::NullPointer, format!("null {what} handle")))
}

unsafe fn put<T>(out: *mut T, value: T) -> Result<(), Failure> {
    if out.is_null() {
        return Err(Failure(EvcflStatus::NullPointer, "null output pointer".into()));
    }
    out.write(value);
    Ok(())
}

fn to_c_string(s: String) -> *mut c_char {
    CString::new(s.replace('\0', " ")).expect("nul bytes removed").into_raw()
}

fn boxed_instance(inst: Instance) -> Result<*mut EvcflInstance, Failure> {
    let report = validate_instance(&inst);
    if !report.is_valid() {
        let msgs: Vec<_> = report.errors().map(|i| i.message.clone()).collect();
        return Err(Failure::input(msgs.join("; ")));
    }
    Ok(Box::into_raw(Box::new(EvcflInstance(inst))))
}

/// Message of the last failed call on this thread, or null.
///
/// The pointer stays valid until the next library call on the same thread.
#[no_mangle]
pub extern "C" fn evcfl_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn evcfl_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// # Safety
/// `s` must be null or a string returned by this library, freed once.
#[no_mangle]
pub unsafe extern "C" fn evcfl_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Parses and validates an instance.
///
/// # Safety
/// `json` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn evcfl_instance_from_json(json: *const c_char, out: *mut *mut EvcflInstance) -> EvcflStatus {
    guard(|| {
        let inst = Instance::from_json(read_str(json)?).map_err(Failure::input)?;
        put(out, boxed_instance(inst)?)
    })
}

/// Generates an instance from a JSON parameter object.
///
/// # Safety
/// `params_json` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn evcfl_instance_generate(
    params_json: *const c_char,
    out: *mut *mut EvcflInstance,
) -> EvcflStatus {
    guard(|| {
        let params: GenParams = serde_json::from_str(read_str(params_json)?).map_err(Failure::input)?;
        let inst = generate_instance(&params).map_err(Failure::input)?;
        put(out, boxed_instance(inst)?)
    })
}

/// Builds the single-peak worst-case instance.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn evcfl_instance_worstcase(
    periods: usize,
    demand_total: u32,
    peak: usize,
    out: *mut *mut EvcflInstance,
) -> EvcflStatus {
    guard(|| {
        let inst = build_worstcase_instance(periods, demand_total, peak).map_err(Failure::input)?;
        put(out, boxed_instance(inst)?)
    })
}

/// # Safety
/// `inst` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn evcfl_instance_to_json(inst: *const EvcflInstance, out: *mut *mut c_char) -> EvcflStatus {
    guard(|| {
        let inst = deref(inst, "instance")?;
        put(out, to_c_string(inst.0.to_json()))
    })
}

/// Writes nodes, candidate stations, charger types and periods.
///
/// # Safety
/// `inst` must be a live handle; each output pointer must be writable.
#[no_mangle]
pub unsafe extern "C" fn evcfl_instance_dims(
    inst: *const EvcflInstance,
    nodes: *mut usize,
    stations: *mut usize,
    types: *mut usize,
    periods: *mut usize,
) -> EvcflStatus {
    guard(|| {
        let inst = &deref(inst, "instance")?.0;
        put(nodes, inst.num_nodes())?;
        put(stations, inst.num_stations())?;
        put(types, inst.num_types())?;
        put(periods, inst.periods)
    })
}

/// # Safety
/// `inst` must be null or a handle from this library, freed once.
#[no_mangle]
pub unsafe extern "C" fn evcfl_instance_free(inst: *mut EvcflInstance) {
    if !inst.is_null() {
        drop(Box::from_raw(inst));
    }
}

/// Solves one model with the backend named by `EVCFL_BACKEND`.
///
/// `time_limit_s <= 0` keeps the default one-hour limit. Returns `Infeasible` when the model
/// has no solution and `Backend` when the solver stopped without one.
///
/// # Safety
/// `inst` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn evcfl_solve(
    inst: *const EvcflInstance,
    model: EvcflModel,
    lambda: f64,
    time_limit_s: f64,
    out: *mut *mut EvcflSolution,
) -> EvcflStatus {
    guard(|| {
        let inst = &deref(inst, "instance")?.0;
        if out.is_null() {
            return Err(Failure(EvcflStatus::NullPointer, "null output pointer".into()));
        }
        let backend = default_backend().map_err(|e| Failure(EvcflStatus::Backend, e.to_string()))?;
        let mut options = SolveOptions::default();
        if time_limit_s > 0.0 {
            options = options.with_time_limit(time_limit_s);
        }
        let run = solve_instance(inst, model.into(), lambda, &options, backend.as_ref())?;
        match (run.solution, run.result.status) {
            (Some(sol), _) => put(out, Box::into_raw(Box::new(EvcflSolution(sol)))),
            (None, SolveStatus::Infeasible) => Err(Failure(EvcflStatus::Infeasible, "model is infeasible".into())),
            (None, status) => Err(Failure(
                EvcflStatus::Backend,
                format!("solver stopped with status {status} and no solution"),
            )),
        }
    })
}

/// # Safety
/// `json` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn evcfl_solution_from_json(json: *const c_char, out: *mut *mut EvcflSolution) -> EvcflStatus {
    guard(|| {
        let sol = Solution::from_json(read_str(json)?).map_err(Failure::input)?;
        put(out, Box::into_raw(Box::new(EvcflSolution(sol))))
    })
}

/// # Safety
/// `sol` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn evcfl_solution_to_json(sol: *const EvcflSolution, out: *mut *mut c_char) -> EvcflStatus {
    guard(|| {
        let sol = deref(sol, "solution")?;
        put(out, to_c_string(sol.0.to_json()))
    })
}

/// Scaled objective value and total installed chargers.
///
/// # Safety
/// `sol` must be a live handle; output pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn evcfl_solution_summary(
    sol: *const EvcflSolution,
    objective: *mut f64,
    chargers: *mut u32,
) -> EvcflStatus {
    guard(|| {
        let sol = &deref(sol, "solution")?.0;
        put(objective, sol.scaled_objective)?;
        put(chargers, sol.deployment.total_chargers())
    })
}

/// Installed chargers of type `k` at station `j`.
///
/// # Safety
/// `sol` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn evcfl_solution_count(
    sol: *const EvcflSolution,
    j: usize,
    k: usize,
    out: *mut u32,
) -> EvcflStatus {
    guard(|| {
        let dep = &deref(sol, "solution")?.0.deployment;
        if j >= dep.num_stations() || k >= dep.num_types() {
            return Err(Failure::input(format!("station {j}, type {k} out of range")));
        }
        put(out, dep.count(j, k))
    })
}

/// # Safety
/// `sol` must be null or a handle from this library, freed once.
#[no_mangle]
pub unsafe extern "C" fn evcfl_solution_free(sol: *mut EvcflSolution) {
    if !sol.is_null() {
        drop(Box::from_raw(sol));
    }
}

/// Replays a solution on its instance.
///
/// SP solutions are reallocated period by period; MP solutions are checked
/// and fail with `InvalidInput` when any constraint is violated.
///
/// # Safety
/// `inst` and `sol` must be live handles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn evcfl_evaluate(
    inst: *const EvcflInstance,
    sol: *const EvcflSolution,
    out: *mut EvcflReport,
) -> EvcflStatus {
    guard(|| {
        let inst = &deref(inst, "instance")?.0;
        let sol = &deref(sol, "solution")?.0;
        sol.check_fits(inst).map_err(Failure::input)?;
        let eval = sol.evaluate(inst, VacancyRule::default()).map_err(Failure::input)?;
        let r = eval.report.ok_or_else(|| {
            Failure::input(format!(
                "solution violates {} constraints",
                eval.feasibility.violations.len()
            ))
        })?;
        put(
            out,
            EvcflReport {
                stations: r.stations as u32,
                quick: r.quick,
                fast: r.fast,
                reall_pct: r.reall_pct,
                lost_pct: r.lost_pct,
                max_lost_pct: r.max_lost_pct,
            },
        )
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn null_arguments_are_reported() {
        let mut out = ptr::null_mut();
        let st = unsafe { evcfl_instance_from_json(ptr::null(), &mut out) };
        assert_eq!(st, EvcflStatus::NullPointer);
        assert!(!evcfl_last_error().is_null());
        assert!(out.is_null());
    }

    #[test]
    fn success_clears_last_error() {
        let mut out = ptr::null_mut();
        unsafe { evcfl_instance_from_json(ptr::null(), &mut out) };
        let st = unsafe { evcfl_instance_worstcase(4, 8, 1, &mut out) };
        assert_eq!(st, EvcflStatus::Ok);
        assert!(evcfl_last_error().is_null());
        unsafe { evcfl_instance_free(out) };
    }

    #[test]
    fn panics_do_not_cross_the_boundary() {
        let st = guard(|| panic!("boom"));
        assert_eq!(st, EvcflStatus::Panic);
        let msg = unsafe { CStr::from_ptr(evcfl_last_error()) }.to_str().unwrap();
        assert!(msg.contains("boom"));
    }
}
