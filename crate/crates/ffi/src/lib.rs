//! C ABI for poiseuille-lab.
//!
//! Objects cross the boundary as opaque handles owned by the caller and
//! released with the matching `*_free`. Every fallible call returns a
//! [`PlStatus`]; the message of the most recent failure on the calling
//! thread is available through [`pl_last_error`]. Panics are caught and
//! reported as [`PlStatus::Internal`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use poiseuille_lab::channel::ChannelParams;
use poiseuille_lab::config::{parse_config, Command, RunSpec};
use poiseuille_lab::error::LabError;
use poiseuille_lab::run::run;
use poiseuille_lab::scaling::{solve_mode, ForcingProfile, ModeSolution, SolverKind};

/// Result codes.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PlStatus {
    Ok = 0,
    /// A required pointer argument was null.
    NullPointer = 1,
    /// A string argument was not valid UTF-8.
    InvalidUtf8 = 2,
    /// Out-of-range parameter or malformed run document.
    InvalidInput = 3,
    /// A solver failed or a numerical gate did not hold.
    Numerical = 4,
    /// File system failure.
    Io = 5,
    /// An output buffer is shorter than `pl_mode_len`.
    BufferTooSmall = 6,
    /// The named quantity does not exist.
    NotFound = 7,
    Internal = 8,
}

/// Linear solver selector.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PlSolver {
    Slip = 0,
    Clamped = 1,
    Decomposition = 2,
    HighFreq = 3,
}

impl From<PlSolver> for SolverKind {
    fn from(s: PlSolver) -> Self {
        match s {
            PlSolver::Slip => SolverKind::Slip,
            PlSolver::Clamped => SolverKind::Clamped,
            PlSolver::Decomposition => SolverKind::Decomposition,
            PlSolver::HighFreq => SolverKind::HighFreq,
        }
    }
}

/// Opaque run document.
pub struct PlSpec(RunSpec);

/// Opaque solved Fourier mode.
pub struct PlMode(ModeSolution);

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(e: &LabError) -> PlStatus {
    match e {
        LabError::Io { .. } => PlStatus::Io,
        e if e.is_validation() => PlStatus::InvalidInput,
        _ => PlStatus::Numerical,
    }
}

struct Fail(PlStatus, String);

impl From<LabError> for Fail {
    fn from(e: LabError) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> PlStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => PlStatus::Ok,
        Ok(Err(Fail(status, msg))) => {
            set_error(&msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            PlStatus::Internal
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, name: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(Fail(PlStatus::NullPointer, format!("{name} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Fail(PlStatus::InvalidUtf8, format!("{name} is not UTF-8")))
}

fn non_null<T>(p: *const T, name: &str) -> Result<(), Fail> {
    if p.is_null() {
        Err(Fail(PlStatus::NullPointer, format!("{name} is null")))
    } else {
        Ok(())
    }
}

unsafe fn array_arg<T: Copy>(p: *const T, len: usize, name: &str) -> Result<Vec<T>, Fail> {
    if len == 0 {
        return Ok(Vec::new());
    }
    non_null(p, name)?;
    Ok(std::slice::from_raw_parts(p, len).to_vec())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn pl_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failure on this thread. The pointer stays valid
/// until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn pl_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Creates a run document with default settings for `command`
/// (for example `"sweep"`).
///
/// # Safety
/// `command` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn pl_spec_new(command: *const c_char, out: *mut *mut PlSpec) -> PlStatus {
    guard(|| {
        non_null(out, "out")?;
        let name = str_arg(command, "command")?;
        let cmd: Command = name.parse()?;
        *out = Box::into_raw(Box::new(PlSpec(RunSpec::with_command(cmd))));
        Ok(())
    })
}

/// Parses and validates a TOML run document.
///
/// # Safety
/// `text` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn pl_spec_from_toml(text: *const c_char, out: *mut *mut PlSpec) -> PlStatus {
    guard(|| {
        non_null(out, "out")?;
        let spec = parse_config(str_arg(text, "text")?)?;
        *out = Box::into_raw(Box::new(PlSpec(spec)));
        Ok(())
    })
}

/// Replaces the parameter grid. `n` values are streamwise mode numbers.
///
/// # Safety
/// Each array must hold at least its stated number of elements.
#[no_mangle]
pub unsafe extern "C" fn pl_spec_set_grid(
    spec: *mut PlSpec,
    phi: *const f64,
    phi_len: usize,
    l: *const f64,
    l_len: usize,
    n: *const i64,
    n_len: usize,
) -> PlStatus {
    guard(|| {
        non_null(spec, "spec")?;
        let s = &mut (*spec).0;
        s.params.phi = array_arg(phi, phi_len, "phi")?;
        s.params.l = array_arg(l, l_len, "L")?;
        s.params.n = array_arg(n, n_len, "n")?;
        Ok(())
    })
}

/// Sets the linear solver used by the linear commands.
///
/// # Safety
/// `spec` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn pl_spec_set_solver(spec: *mut PlSpec, solver: PlSolver) -> PlStatus {
    guard(|| {
        non_null(spec, "spec")?;
        (*spec).0.solver.kind = solver.into();
        Ok(())
    })
}

/// Checks the document without running it.
///
/// # Safety
/// `spec` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn pl_spec_validate(spec: *const PlSpec) -> PlStatus {
    guard(|| {
        non_null(spec, "spec")?;
        (*spec).0.validate()?;
        Ok(())
    })
}

/// # Safety
/// `spec` must be null or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn pl_spec_free(spec: *mut PlSpec) {
    if !spec.is_null() {
        drop(Box::from_raw(spec));
    }
}

/// Runs a document, writing artifacts and `summary.json` into `out_dir`.
/// `exit_code` receives the command-line exit status (0, 1 or 2). The call
/// returns `PL_STATUS_OK` when the run passed, `PL_STATUS_INVALID_INPUT`
/// for exit code 1 (invalid document or unwritable directory) and
/// `PL_STATUS_NUMERICAL` for exit code 2.
///
/// # Safety
/// `spec` must be a live handle, `out_dir` NUL-terminated, and `exit_code`
/// null or valid.
#[no_mangle]
pub unsafe extern "C" fn pl_run(spec: *const PlSpec, out_dir: *const c_char, exit_code: *mut i32) -> PlStatus {
    guard(|| {
        non_null(spec, "spec")?;
        let dir = str_arg(out_dir, "out_dir")?;
        let outcome = run(&(*spec).0, Path::new(dir));
        if !exit_code.is_null() {
            *exit_code = outcome.exit_code;
        }
        match outcome.exit_code {
            0 => Ok(()),
            1 => Err(Fail(PlStatus::InvalidInput, outcome.error.unwrap_or_default())),
            _ => Err(Fail(
                PlStatus::Numerical,
                outcome.error.unwrap_or_else(|| "a gate did not hold".into()),
            )),
        }
    })
}

/// Solves one Fourier mode of the linearized problem. `forcing` names a
/// profile: `even_rhs`, `odd_rhs`, `streamwise` or `random_<k>`.
///
/// # Safety
/// `forcing` must be NUL-terminated and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn pl_mode_solve(
    phi: f64,
    l: f64,
    n: i64,
    solver: PlSolver,
    forcing: *const c_char,
    seed: u64,
    out: *mut *mut PlMode,
) -> PlStatus {
    guard(|| {
        non_null(out, "out")?;
        let profile = ForcingProfile::by_name(str_arg(forcing, "forcing")?, seed)?;
        let params = ChannelParams::new(phi, l, n)?;
        let sol = solve_mode(solver.into(), &params, &profile)?;
        *out = Box::into_raw(Box::new(PlMode(sol)));
        Ok(())
    })
}

/// Number of collocation nodes of a solved mode.
///
/// # Safety
/// `mode` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn pl_mode_len(mode: *const PlMode) -> usize {
    if mode.is_null() {
        return 0;
    }
    (*mode).0.psi.samples().len()
}

/// Copies nodes `y` and the real and imaginary parts of the stream
/// function into arrays of length `len`, which must equal
/// [`pl_mode_len`]. Any output pointer may be null to skip it.
///
/// # Safety
/// Non-null arrays must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn pl_mode_stream_function(
    mode: *const PlMode,
    y: *mut f64,
    re: *mut f64,
    im: *mut f64,
    len: usize,
) -> PlStatus {
    guard(|| {
        non_null(mode, "mode")?;
        let psi = &(*mode).0.psi;
        let need = psi.samples().len();
        if len < need {
            return Err(Fail(PlStatus::BufferTooSmall, format!("need {need} entries, got {len}")));
        }
        for (j, (node, v)) in psi.grid().nodes().iter().zip(psi.samples()).enumerate() {
            if !y.is_null() {
                *y.add(j) = *node;
            }
            if !re.is_null() {
                *re.add(j) = v.re;
            }
            if !im.is_null() {
                *im.add(j) = v.im;
            }
        }
        Ok(())
    })
}

/// Looks up a measured quantity (for example `energy1`) or a bound ratio
/// (prefixed `ratio_`, for example `ratio_velocity_l2`).
///
/// # Safety
/// `name` must be NUL-terminated and `value` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn pl_mode_quantity(mode: *const PlMode, name: *const c_char, value: *mut f64) -> PlStatus {
    guard(|| {
        non_null(mode, "mode")?;
        non_null(value, "value")?;
        let key = str_arg(name, "name")?;
        let row = &(*mode).0.row;
        let found = match key.strip_prefix("ratio_") {
            Some(r) => row.ratios.get(r),
            None => row.measured.get(key),
        };
        match found {
            Some(v) => {
                *value = *v;
                Ok(())
            }
            None => Err(Fail(PlStatus::NotFound, format!("no quantity `{key}`"))),
        }
    })
}

/// # Safety
/// `mode` must be null or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn pl_mode_free(mode: *mut PlMode) {
    if !mode.is_null() {
        drop(Box::from_raw(mode));
    }
}
