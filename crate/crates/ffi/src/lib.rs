//! C interface to `bsdelab`.
//!
//! Every function returns a [`BsdeStatus`]. On failure a message is kept per
//! thread and can be read with [`bsde_last_error`]. Handles are opaque and
//! must be released with the matching `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, c_int, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::sync::Arc;

use bsdelab::bsde::{solve_bsde, SolutionQuadruple};
use bsdelab::config::{ExperimentConfig, ExperimentKind};
use bsdelab::error::Error;
use bsdelab::reflected::solve_reflected;
use bsdelab::runner;
use bsdelab::tree::ScenarioTree;

/// Result codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BsdeStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    InvalidConfig = 3,
    SolverError = 4,
    OutOfRange = 5,
    IoError = 6,
    Panic = 7,
}

/// Which adapted component of a solution to copy out.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BsdeComponent {
    Y = 0,
    M = 1,
    K = 2,
}

/// A validated experiment configuration.
pub struct BsdeConfig {
    inner: ExperimentConfig,
}

/// A solved instance together with its tree.
pub struct BsdeSolution {
    tree: Arc<ScenarioTree>,
    solution: SolutionQuadruple,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

struct Fail(BsdeStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        let status = match e {
            Error::Config(_)
            | Error::Schema(_)
            | Error::Json(_)
            | Error::VersionMismatch { .. }
            | Error::Grid(_)
            | Error::OffGridReveal { .. }
            | Error::NodeCap { .. } => BsdeStatus::InvalidConfig,
            Error::Io(_) | Error::Csv(_) => BsdeStatus::IoError,
            _ => BsdeStatus::SolverError,
        };
        Fail(status, e.to_string())
    }
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> BsdeStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            BsdeStatus::Ok
        }
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("panic: {msg}"));
            BsdeStatus::Panic
        }
    }
}

fn null(what: &str) -> Fail {
    Fail(BsdeStatus::NullPointer, format!("`{what}` is null"))
}

unsafe fn text<'a>(ptr: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if ptr.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(ptr)
        .to_str()
        .map_err(|_| Fail(BsdeStatus::InvalidUtf8, format!("`{what}` is not valid UTF-8")))
}

unsafe fn deref<'a, T>(ptr: *const T, what: &str) -> Result<&'a T, Fail> {
    ptr.as_ref().ok_or_else(|| null(what))
}

unsafe fn put<T>(out: *mut T, value: T, what: &str) -> Result<(), Fail> {
    if out.is_null() {
        return Err(null(what));
    }
    out.write(value);
    Ok(())
}

/// Message of the last failed call on this thread, or null after a
/// successful call. Valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn bsde_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(std::ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn bsde_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Parse and validate a JSON experiment configuration.
///
/// # Safety
/// `json` must be a NUL-terminated string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn bsde_config_from_json(json: *const c_char, out: *mut *mut BsdeConfig) -> BsdeStatus {
    guard(|| {
        let inner = ExperimentConfig::from_json(text(json, "json")?)?;
        put(out, Box::into_raw(Box::new(BsdeConfig { inner })), "out")
    })
}

/// The built-in default configuration.
///
/// # Safety
/// `out` must be a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn bsde_config_default(out: *mut *mut BsdeConfig) -> BsdeStatus {
    guard(|| {
        let inner = ExperimentConfig::default_config();
        put(out, Box::into_raw(Box::new(BsdeConfig { inner })), "out")
    })
}

/// Replace the seed of a configuration.
///
/// # Safety
/// `config` must come from this library and not be freed.
#[no_mangle]
pub unsafe extern "C" fn bsde_config_set_seed(config: *mut BsdeConfig, seed: u64) -> BsdeStatus {
    guard(|| {
        config.as_mut().ok_or_else(|| null("config"))?.inner.seed = seed;
        Ok(())
    })
}

/// Number of instances the configuration describes.
///
/// # Safety
/// `config` must be live and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn bsde_config_instance_count(config: *const BsdeConfig, out: *mut usize) -> BsdeStatus {
    guard(|| {
        let cfg = &deref(config, "config")?.inner;
        let n = runner::instances(cfg, "ffi")?.len();
        put(out, n, "out")
    })
}

/// Release a configuration. Null is ignored.
///
/// # Safety
/// `config` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn bsde_config_free(config: *mut BsdeConfig) {
    if !config.is_null() {
        drop(Box::from_raw(config));
    }
}

/// Solve instance `index` of the configuration, reflected on its obstacle
/// when `reflect` is non-zero.
///
/// # Safety
/// `config` must be live and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn bsde_solve(
    config: *const BsdeConfig,
    index: usize,
    reflect: c_int,
    out: *mut *mut BsdeSolution,
) -> BsdeStatus {
    guard(|| {
        let cfg = &deref(config, "config")?.inner;
        let list = runner::instances(cfg, "ffi")?;
        let count = list.len();
        let (_, inst) = list
            .into_iter()
            .nth(index)
            .ok_or_else(|| Fail(BsdeStatus::OutOfRange, format!("instance {index} of {count}")))?;
        let solution = if reflect != 0 {
            solve_reflected(&inst, cfg.scheme)?
        } else {
            solve_bsde(&inst, cfg.scheme)?
        };
        let handle = BsdeSolution { tree: inst.tree.clone(), solution };
        put(out, Box::into_raw(Box::new(handle)), "out")
    })
}

/// Release a solution. Null is ignored.
///
/// # Safety
/// `solution` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn bsde_solution_free(solution: *mut BsdeSolution) {
    if !solution.is_null() {
        drop(Box::from_raw(solution));
    }
}

/// Number of nodes of the tree, which is the length of each component.
///
/// # Safety
/// `solution` must be live and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn bsde_solution_node_count(solution: *const BsdeSolution, out: *mut usize) -> BsdeStatus {
    guard(|| put(out, deref(solution, "solution")?.tree.node_count(), "out"))
}

/// Number of time steps of the tree.
///
/// # Safety
/// `solution` must be live and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn bsde_solution_n_steps(solution: *const BsdeSolution, out: *mut usize) -> BsdeStatus {
    guard(|| put(out, deref(solution, "solution")?.tree.n_steps(), "out"))
}

/// Value of `Y` at the root.
///
/// # Safety
/// `solution` must be live and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn bsde_solution_y0(solution: *const BsdeSolution, out: *mut f64) -> BsdeStatus {
    guard(|| put(out, deref(solution, "solution")?.solution.y[0], "out"))
}

/// Largest residual of the backward dynamics over all nodes.
///
/// # Safety
/// `solution` must be live and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn bsde_solution_residual(solution: *const BsdeSolution, out: *mut f64) -> BsdeStatus {
    guard(|| {
        let s = deref(solution, "solution")?;
        put(out, s.solution.dynamics_residual(&s.tree), "out")
    })
}

/// Copy one component, indexed by node, into `buf`. `len` must equal the
/// node count.
///
/// # Safety
/// `solution` must be live and `buf` valid for `len` writes.
#[no_mangle]
pub unsafe extern "C" fn bsde_solution_copy(
    solution: *const BsdeSolution,
    component: BsdeComponent,
    buf: *mut f64,
    len: usize,
) -> BsdeStatus {
    guard(|| {
        let s = deref(solution, "solution")?;
        if buf.is_null() {
            return Err(null("buf"));
        }
        let values = match component {
            BsdeComponent::Y => s.solution.y.values(),
            BsdeComponent::M => s.solution.m.values(),
            BsdeComponent::K => s.solution.k.values(),
        };
        if len != values.len() {
            return Err(Fail(
                BsdeStatus::OutOfRange,
                format!("buffer holds {len} values, the tree has {} nodes", values.len()),
            ));
        }
        std::slice::from_raw_parts_mut(buf, len).copy_from_slice(values);
        Ok(())
    })
}

/// Run an experiment. `command` is one of `solve`, `reflect`, `picard`,
/// `verify`, `counterexample` or `snell-check`; `suite` may be null. With a
/// non-null `out_dir` the artifacts and manifest are written there.
/// `passed` receives 1 when every check held, 0 otherwise.
///
/// # Safety
/// String arguments must be NUL-terminated or null where allowed; `passed`
/// must be writable.
#[no_mangle]
pub unsafe extern "C" fn bsde_run(
    config: *const BsdeConfig,
    command: *const c_char,
    suite: *const c_char,
    out_dir: *const c_char,
    passed: *mut c_int,
) -> BsdeStatus {
    guard(|| {
        let cfg = &deref(config, "config")?.inner;
        let name = text(command, "command")?;
        let kind = ExperimentKind::parse(name)
            .ok_or_else(|| Fail(BsdeStatus::InvalidConfig, format!("unknown command `{name}`")))?;
        let suite = if suite.is_null() { None } else { Some(text(suite, "suite")?) };
        let ok = if out_dir.is_null() {
            runner::run(cfg, kind, suite)?.failures.is_empty()
        } else {
            let dir = text(out_dir, "out_dir")?;
            runner::execute(cfg, kind, suite, Path::new(dir))?.passed
        };
        put(passed, c_int::from(ok), "passed")
    })
}
