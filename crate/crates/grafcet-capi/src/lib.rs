//! C ABI for the grafcet engine.
//!
//! The surface follows the usual conventions for C bindings to Rust:
//! opaque handles behind pointers, a status code on every fallible call, a
//! thread-local error message, and caller-freed strings. `include/grafcet.h`
//! is generated from this file by cbindgen at build time and committed so C
//! consumers never need the Rust toolchain.
//!
//! Ownership rules, also documented per function in the header:
//!
//! * every `*_free` function accepts the corresponding `*_new`/`*_load`
//!   output exactly once; passing null is a no-op,
//! * an engine keeps its own reference to the model, so the model handle
//!   may be freed while engines created from it live on,
//! * strings returned through `char **out` parameters are released with
//!   [`grafcet_string_free`], never with `free`.

use std::cell::RefCell;
use std::collections::BTreeMap;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::Arc;

use grafcet::analyzer::{analyze, AnalyzedModel};
use grafcet::engine::Engine;
use grafcet::expr::Value;
use grafcet::ids::{StepId, VarId};
use grafcet::model::{VarRole, VarType};
use grafcet::parser::parse_model;
use grafcet::printer::print_model;
use grafcet::state::{Policy, StableReport};

/// Result of every fallible call. Non-zero means the call had no effect
/// beyond recording an error message retrievable via `grafcet_last_error`.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GrafcetStatus {
    /// The call succeeded.
    Ok = 0,
    /// A required pointer argument was null.
    NullArgument = 1,
    /// A string argument was not valid UTF-8.
    InvalidUtf8 = 2,
    /// The source text was rejected; the error message lists the first
    /// diagnostics.
    ParseFailed = 3,
    /// The model parsed but failed static analysis (macro expansion,
    /// hierarchy or validation).
    AnalysisFailed = 4,
    /// An argument was out of contract: unknown variable, wrong role or
    /// type, unknown step.
    InvalidArgument = 5,
    /// The call does not apply to the handle's current state, e.g. reading
    /// a situation before initialization.
    InvalidState = 6,
    /// Evolution failed: unstable cycle, budget exhaustion, or a forcing,
    /// hierarchy or write conflict. The engine must be re-initialized.
    RunFailed = 7,
    /// An internal invariant failed; the handle is left unusable.
    InternalError = 8,
}

/// Interpretation policy for the order of forcing effects.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GrafcetPolicy {
    /// Forcing orders take effect within the evolution that activates them.
    Preemptive = 0,
    /// Forcing orders take effect one evolution after activation.
    TwoPhase = 1,
}

impl GrafcetPolicy {
    fn to_policy(self, max_evolutions: u64) -> Policy {
        let p = match self {
            GrafcetPolicy::Preemptive => Policy::preemptive(),
            GrafcetPolicy::TwoPhase => Policy::two_phase(),
        };
        if max_evolutions == 0 {
            p
        } else {
            p.with_max_evolutions(max_evolutions)
        }
    }
}

/// A parsed and analyzed model. Create with `grafcet_model_load`, release
/// with `grafcet_model_free`.
pub struct GrafcetModelHandle {
    model: Arc<AnalyzedModel>,
}

/// A running interpreter over one model. Create with `grafcet_engine_new`,
/// release with `grafcet_engine_free`.
pub struct GrafcetEngineHandle {
    // Field order matters: `engine` borrows the Arc target held by
    // `_model`, so it must drop first. The target is heap-allocated and
    // never mutated, which keeps the 'static loan sound for the handle's
    // lifetime.
    engine: Engine<'static>,
    staged: BTreeMap<VarId, Value>,
    last_report: Option<StableReport>,
    _model: Arc<AnalyzedModel>,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into();
    let c = CString::new(msg).unwrap_or_else(|_| {
        CString::new("error message contained a NUL byte").expect("literal has no NUL")
    });
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(c));
}

fn fail(status: GrafcetStatus, msg: impl Into<String>) -> GrafcetStatus {
    set_error(msg);
    status
}

/// Calls that can panic (they should not; this is the abort-across-FFI
/// safety net) are wrapped so a bug surfaces as `InternalError` instead of
/// undefined behaviour.
fn guard(f: impl FnOnce() -> GrafcetStatus) -> GrafcetStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(status) => status,
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| (*s).to_owned())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "internal panic".to_owned());
            fail(GrafcetStatus::InternalError, msg)
        }
    }
}

/// # Safety: `p` must be null or a NUL-terminated string valid for the call.
unsafe fn arg_str<'a>(p: *const c_char) -> Result<&'a str, GrafcetStatus> {
    if p.is_null() {
        return Err(fail(GrafcetStatus::NullArgument, "null string argument"));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| fail(GrafcetStatus::InvalidUtf8, "string argument is not valid UTF-8"))
}

/// # Safety: `out` must be a valid location to store the string pointer.
unsafe fn out_string(out: *mut *mut c_char, s: String) -> GrafcetStatus {
    let c = match CString::new(s) {
        Ok(c) => c,
        Err(_) => {
            return fail(GrafcetStatus::InternalError, "produced text contained a NUL byte")
        }
    };
    *out = c.into_raw();
    GrafcetStatus::Ok
}

fn situation_text(report: &StableReport) -> String {
    report
        .situation
        .iter()
        .map(|(pg, steps)| {
            let ids: Vec<&str> = steps.iter().map(|s| s.as_str()).collect();
            format!("{pg}{{{}}}", ids.join(","))
        })
        .collect::<Vec<_>>()
        .join(" ")
}

/// Returns the library version as a static string; never fails.
#[no_mangle]
pub extern "C" fn grafcet_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Returns the message recorded by the most recent failing call on this
/// thread, or null if none failed yet. The pointer stays valid until the
/// next failing call on the same thread.
#[no_mangle]
pub extern "C" fn grafcet_last_error() -> *const c_char {
    LAST_ERROR.with(|slot| match &*slot.borrow() {
        Some(c) => c.as_ptr(),
        None => std::ptr::null(),
    })
}

/// Releases a string returned through a `char **out` parameter. Null is a
/// no-op.
///
/// # Safety
/// `s` must be a pointer previously returned by this library and not freed
/// since.
#[no_mangle]
pub unsafe extern "C" fn grafcet_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Parses and analyzes model source text. `name` labels diagnostics (pass
/// the file name; null means "model.gft"). On success stores a handle in
/// `*out`.
///
/// # Safety
/// `source` must be NUL-terminated; `out` must be a valid location.
#[no_mangle]
pub unsafe extern "C" fn grafcet_model_load(
    name: *const c_char,
    source: *const c_char,
    out: *mut *mut GrafcetModelHandle,
) -> GrafcetStatus {
    guard(|| {
        if out.is_null() {
            return fail(GrafcetStatus::NullArgument, "null output argument");
        }
        let name = if name.is_null() {
            "model.gft"
        } else {
            match arg_str(name) {
                Ok(s) => s,
                Err(status) => return status,
            }
        };
        let source = match arg_str(source) {
            Ok(s) => s,
            Err(status) => return status,
        };
        let model = match parse_model(name, source) {
            Ok(m) => m,
            Err(diags) => {
                let listed: Vec<String> = diags.iter().take(5).map(|d| d.to_string()).collect();
                return fail(GrafcetStatus::ParseFailed, listed.join("\n"));
            }
        };
        match analyze(&model) {
            Ok(analyzed) => {
                *out = Box::into_raw(Box::new(GrafcetModelHandle { model: Arc::new(analyzed) }));
                GrafcetStatus::Ok
            }
            Err(e) => fail(GrafcetStatus::AnalysisFailed, e.to_string()),
        }
    })
}

/// Releases a model handle. Null is a no-op. Engines created from the
/// handle stay valid.
///
/// # Safety
/// `h` must be a pointer from `grafcet_model_load` and not freed since.
#[no_mangle]
pub unsafe extern "C" fn grafcet_model_free(h: *mut GrafcetModelHandle) {
    if !h.is_null() {
        drop(Box::from_raw(h));
    }
}

/// Renders the canonical text of the (macro-expanded) model into `*out`.
///
/// # Safety
/// `h` must be a live model handle; `out` must be a valid location.
#[no_mangle]
pub unsafe extern "C" fn grafcet_model_canonical_text(
    h: *const GrafcetModelHandle,
    out: *mut *mut c_char,
) -> GrafcetStatus {
    guard(|| {
        if h.is_null() || out.is_null() {
            return fail(GrafcetStatus::NullArgument, "null argument");
        }
        out_string(out, print_model(&(*h).model))
    })
}

/// Creates an engine over the model. `max_evolutions` bounds each run to
/// stability; 0 selects the default budget. The engine starts
/// uninitialized: call `grafcet_engine_initialize` before applying events.
///
/// # Safety
/// `h` must be a live model handle; `out` must be a valid location.
#[no_mangle]
pub unsafe extern "C" fn grafcet_engine_new(
    h: *const GrafcetModelHandle,
    policy: GrafcetPolicy,
    max_evolutions: u64,
    out: *mut *mut GrafcetEngineHandle,
) -> GrafcetStatus {
    guard(|| {
        if h.is_null() || out.is_null() {
            return fail(GrafcetStatus::NullArgument, "null argument");
        }
        let model = (*h).model.clone();
        // The Arc target lives on the heap at a stable address, the handle
        // keeps the Arc alive for as long as the engine, and nothing ever
        // mutates the analyzed model, so extending the loan is sound.
        let model_ref: &'static AnalyzedModel = &*Arc::as_ptr(&model);
        let engine = Engine::new(model_ref, policy.to_policy(max_evolutions));
        *out = Box::into_raw(Box::new(GrafcetEngineHandle {
            engine,
            staged: BTreeMap::new(),
            last_report: None,
            _model: model,
        }));
        GrafcetStatus::Ok
    })
}

/// Releases an engine handle. Null is a no-op.
///
/// # Safety
/// `e` must be a pointer from `grafcet_engine_new` and not freed since.
#[no_mangle]
pub unsafe extern "C" fn grafcet_engine_free(e: *mut GrafcetEngineHandle) {
    if !e.is_null() {
        drop(Box::from_raw(e));
    }
}

/// (Re)initializes the engine: activates the initial situation, resets all
/// variables and staged inputs, and runs to stability. May be called again
/// at any point to restart, including after `RunFailed`.
///
/// # Safety
/// `e` must be a live engine handle.
#[no_mangle]
pub unsafe extern "C" fn grafcet_engine_initialize(e: *mut GrafcetEngineHandle) -> GrafcetStatus {
    guard(|| {
        if e.is_null() {
            return fail(GrafcetStatus::NullArgument, "null engine handle");
        }
        let handle = &mut *e;
        handle.staged.clear();
        match handle.engine.initialize() {
            Ok(report) => {
                handle.last_report = Some(report);
                GrafcetStatus::Ok
            }
            Err(err) => {
                handle.last_report = None;
                fail(GrafcetStatus::RunFailed, format!("{}: {}", err.kind, err.detail))
            }
        }
    })
}

unsafe fn stage(
    e: *mut GrafcetEngineHandle,
    name: *const c_char,
    value: Value,
) -> GrafcetStatus {
    if e.is_null() {
        return fail(GrafcetStatus::NullArgument, "null engine handle");
    }
    let handle = &mut *e;
    let name = match arg_str(name) {
        Ok(s) => s,
        Err(status) => return status,
    };
    let var = VarId::new(name);
    let Some(decl) = handle._model.variables.iter().find(|d| d.id == var) else {
        return fail(GrafcetStatus::InvalidArgument, format!("`{name}` is not declared"));
    };
    if decl.role != VarRole::Input {
        return fail(
            GrafcetStatus::InvalidArgument,
            format!("`{name}` is an {} variable, not an input", decl.role),
        );
    }
    let matches_type = matches!(
        (decl.ty, &value),
        (VarType::Bool, Value::Bool(_)) | (VarType::Int, Value::Int(_))
    );
    if !matches_type {
        return fail(
            GrafcetStatus::InvalidArgument,
            format!("`{name}` is {}, the staged value is not", decl.ty),
        );
    }
    handle.staged.insert(var, value);
    GrafcetStatus::Ok
}

/// Stages one boolean input change for the next `grafcet_engine_apply`.
/// Staging the same variable again overwrites the earlier value.
///
/// # Safety
/// `e` must be a live engine handle; `name` must be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn grafcet_engine_stage_bool(
    e: *mut GrafcetEngineHandle,
    name: *const c_char,
    value: bool,
) -> GrafcetStatus {
    guard(|| stage(e, name, Value::Bool(value)))
}

/// Stages one integer input change for the next `grafcet_engine_apply`.
///
/// # Safety
/// `e` must be a live engine handle; `name` must be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn grafcet_engine_stage_int(
    e: *mut GrafcetEngineHandle,
    name: *const c_char,
    value: i64,
) -> GrafcetStatus {
    guard(|| stage(e, name, Value::Int(value)))
}

/// Applies all staged input changes as one simultaneous event and runs to
/// stability. Staged values are consumed whether or not the run succeeds.
/// An empty stage is a valid (trivial) event.
///
/// # Safety
/// `e` must be a live engine handle.
#[no_mangle]
pub unsafe extern "C" fn grafcet_engine_apply(e: *mut GrafcetEngineHandle) -> GrafcetStatus {
    guard(|| {
        if e.is_null() {
            return fail(GrafcetStatus::NullArgument, "null engine handle");
        }
        let handle = &mut *e;
        if handle.last_report.is_none() {
            return fail(
                GrafcetStatus::InvalidState,
                "engine is not at a stable situation; call grafcet_engine_initialize",
            );
        }
        let event = std::mem::take(&mut handle.staged);
        match handle.engine.apply_input_event(&event) {
            Ok(report) => {
                handle.last_report = Some(report);
                GrafcetStatus::Ok
            }
            Err(err) => {
                handle.last_report = None;
                fail(GrafcetStatus::RunFailed, format!("{}: {}", err.kind, err.detail))
            }
        }
    })
}

/// Writes the current stable situation in set notation, e.g.
/// `"G1{1} G2{21,22}"`, into `*out`.
///
/// # Safety
/// `e` must be a live engine handle; `out` must be a valid location.
#[no_mangle]
pub unsafe extern "C" fn grafcet_engine_situation(
    e: *const GrafcetEngineHandle,
    out: *mut *mut c_char,
) -> GrafcetStatus {
    guard(|| {
        if e.is_null() || out.is_null() {
            return fail(GrafcetStatus::NullArgument, "null argument");
        }
        match &(*e).last_report {
            Some(report) => out_string(out, situation_text(report)),
            None => fail(GrafcetStatus::InvalidState, "engine is not at a stable situation"),
        }
    })
}

/// Writes the current stable report (situation and outputs) as one JSON
/// object into `*out`.
///
/// # Safety
/// `e` must be a live engine handle; `out` must be a valid location.
#[no_mangle]
pub unsafe extern "C" fn grafcet_engine_report_json(
    e: *const GrafcetEngineHandle,
    out: *mut *mut c_char,
) -> GrafcetStatus {
    guard(|| {
        if e.is_null() || out.is_null() {
            return fail(GrafcetStatus::NullArgument, "null argument");
        }
        match &(*e).last_report {
            Some(report) => out_string(out, report.to_jsonl()),
            None => fail(GrafcetStatus::InvalidState, "engine is not at a stable situation"),
        }
    })
}

unsafe fn read_var(
    e: *const GrafcetEngineHandle,
    name: *const c_char,
) -> Result<Value, GrafcetStatus> {
    if e.is_null() {
        return Err(fail(GrafcetStatus::NullArgument, "null engine handle"));
    }
    let name = arg_str(name)?;
    let var = VarId::new(name);
    match (*e).engine.state().valuation.get(&var) {
        Some(value) => Ok(*value),
        None => Err(fail(GrafcetStatus::InvalidArgument, format!("`{name}` is not declared"))),
    }
}

/// Reads a boolean variable (any role) from the current valuation.
///
/// # Safety
/// `e` must be a live engine handle; `name` NUL-terminated; `out` valid.
#[no_mangle]
pub unsafe extern "C" fn grafcet_engine_get_bool(
    e: *const GrafcetEngineHandle,
    name: *const c_char,
    out: *mut bool,
) -> GrafcetStatus {
    guard(|| {
        if out.is_null() {
            return fail(GrafcetStatus::NullArgument, "null output argument");
        }
        match read_var(e, name) {
            Ok(Value::Bool(b)) => {
                *out = b;
                GrafcetStatus::Ok
            }
            Ok(Value::Int(_)) => {
                fail(GrafcetStatus::InvalidArgument, "variable is int, not bool")
            }
            Err(status) => status,
        }
    })
}

/// Reads an integer variable (any role) from the current valuation.
///
/// # Safety
/// `e` must be a live engine handle; `name` NUL-terminated; `out` valid.
#[no_mangle]
pub unsafe extern "C" fn grafcet_engine_get_int(
    e: *const GrafcetEngineHandle,
    name: *const c_char,
    out: *mut i64,
) -> GrafcetStatus {
    guard(|| {
        if out.is_null() {
            return fail(GrafcetStatus::NullArgument, "null output argument");
        }
        match read_var(e, name) {
            Ok(Value::Int(n)) => {
                *out = n;
                GrafcetStatus::Ok
            }
            Ok(Value::Bool(_)) => {
                fail(GrafcetStatus::InvalidArgument, "variable is bool, not int")
            }
            Err(status) => status,
        }
    })
}

/// Reports whether the given step is active in the current situation.
///
/// # Safety
/// `e` must be a live engine handle; `step` NUL-terminated; `out` valid.
#[no_mangle]
pub unsafe extern "C" fn grafcet_engine_step_active(
    e: *const GrafcetEngineHandle,
    step: *const c_char,
    out: *mut bool,
) -> GrafcetStatus {
    guard(|| {
        if e.is_null() || out.is_null() {
            return fail(GrafcetStatus::NullArgument, "null argument");
        }
        let step = match arg_str(step) {
            Ok(s) => s,
            Err(status) => return status,
        };
        let id = StepId::new(step);
        if (*e)._model.find_step(&id).is_none() {
            return fail(GrafcetStatus::InvalidArgument, format!("no step named `{step}`"));
        }
        *out = (*e).engine.state().active.contains(&id);
        GrafcetStatus::Ok
    })
}
