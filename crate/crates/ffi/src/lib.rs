//! C ABI for `netcsd`.
//!
//! Every fallible function returns a [`NetcsdStatus`]. On failure the message
//! is kept per thread and read with [`netcsd_last_error_message`]. Objects are
//! opaque handles released with their matching `_free` function; strings
//! returned by the library are released with [`netcsd_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use nalgebra::DMatrix;
use netcsd::cli_io::{self, Command, RunOptions, Scenario};
use netcsd::detection::{ar1_autocorrelation, theoretical_covariance_trace, TraceValue};
use netcsd::graph::{fiedler_pair, laplacian, Graph};
use netcsd::{Error, ErrorClass};

/// Result code of every fallible call. Values 2 to 4 match the CLI exit codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NetcsdStatus {
    Ok = 0,
    Validation = 2,
    Numeric = 3,
    Io = 4,
    NullPointer = 5,
    BufferTooSmall = 6,
    Panic = 7,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NetcsdCommand {
    Simulate = 0,
    Analyze = 1,
    Detect = 2,
    Sweep = 3,
}

impl From<NetcsdCommand> for Command {
    fn from(c: NetcsdCommand) -> Self {
        match c {
            NetcsdCommand::Simulate => Command::Simulate,
            NetcsdCommand::Analyze => Command::Analyze,
            NetcsdCommand::Detect => Command::Detect,
            NetcsdCommand::Sweep => Command::Sweep,
        }
    }
}

/// Opaque graph handle.
pub struct NetcsdGraph(Graph);

/// Opaque scenario handle.
pub struct NetcsdScenario(Scenario);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: String) {
    let c = CString::new(message.replace('\0', " ")).expect("no interior nul");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

struct Failure(NetcsdStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match e.class() {
            ErrorClass::Validation => NetcsdStatus::Validation,
            ErrorClass::Numeric => NetcsdStatus::Numeric,
            ErrorClass::Io => NetcsdStatus::Io,
        };
        Failure(status, e.to_string())
    }
}

fn null(name: &str) -> Failure {
    Failure(NetcsdStatus::NullPointer, format!("`{name}` is null"))
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> NetcsdStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => NetcsdStatus::Ok,
        Ok(Err(Failure(status, message))) => {
            set_error(message);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            NetcsdStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, name: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(name));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure(NetcsdStatus::Validation, format!("`{name}` is not UTF-8")))
}

unsafe fn out_slice<'a>(p: *mut f64, len: usize, need: usize, name: &str) -> Result<&'a mut [f64], Failure> {
    if p.is_null() {
        return Err(null(name));
    }
    if len < need {
        return Err(Failure(
            NetcsdStatus::BufferTooSmall,
            format!("`{name}` holds {len} values, need {need}"),
        ));
    }
    Ok(std::slice::from_raw_parts_mut(p, need))
}

unsafe fn in_slice<'a>(p: *const f64, len: usize, name: &str) -> Result<&'a [f64], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(name));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

/// Message of the last failed call on this thread, or null. The pointer is
/// valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn netcsd_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Releases a string returned by the library. Null is ignored.
///
/// # Safety
/// `s` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn netcsd_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Parses `{"n": .., "edges": [{"u": .., "v": .., "w": ..}]}` (1-based).
///
/// # Safety
/// `json` must be a nul-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn netcsd_graph_from_json(json: *const c_char, out: *mut *mut NetcsdGraph) -> NetcsdStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let text = str_arg(json, "json")?;
        let graph: Graph = serde_json::from_str(text)
            .map_err(|e| Failure(NetcsdStatus::Validation, format!("graph JSON: {e}")))?;
        *out = Box::into_raw(Box::new(NetcsdGraph(graph)));
        Ok(())
    })
}

/// # Safety
/// `g` must come from [`netcsd_graph_from_json`] and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn netcsd_graph_free(g: *mut NetcsdGraph) {
    if !g.is_null() {
        drop(Box::from_raw(g));
    }
}

/// Number of nodes, or 0 for a null handle.
///
/// # Safety
/// `g` must be null or a live graph handle.
#[no_mangle]
pub unsafe extern "C" fn netcsd_graph_node_count(g: *const NetcsdGraph) -> usize {
    g.as_ref().map_or(0, |g| g.0.node_count())
}

/// Writes the weighted Laplacian, row-major, into `out[0..n*n]`.
///
/// # Safety
/// `g` must be a live handle; `out` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn netcsd_graph_laplacian(g: *const NetcsdGraph, out: *mut f64, len: usize) -> NetcsdStatus {
    guard(|| {
        let g = g.as_ref().ok_or_else(|| null("g"))?;
        let n = g.0.node_count();
        let dst = out_slice(out, len, n * n, "out")?;
        write_row_major(&laplacian(&g.0), dst);
        Ok(())
    })
}

/// Algebraic connectivity and its unit eigenvector (`v2[0..n]`).
///
/// # Safety
/// `g` must be a live handle; `lambda2` writable; `v2` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn netcsd_graph_fiedler(
    g: *const NetcsdGraph,
    lambda2: *mut f64,
    v2: *mut f64,
    len: usize,
) -> NetcsdStatus {
    guard(|| {
        let g = g.as_ref().ok_or_else(|| null("g"))?;
        if lambda2.is_null() {
            return Err(null("lambda2"));
        }
        let dst = out_slice(v2, len, g.0.node_count(), "v2")?;
        let pair = fiedler_pair(&laplacian(&g.0))?;
        *lambda2 = pair.lambda2;
        dst.copy_from_slice(pair.v2.as_slice());
        Ok(())
    })
}

/// Lag-1 autocorrelation of a series of at least 10 samples.
///
/// # Safety
/// `series` must hold `len` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn netcsd_ar1_autocorrelation(series: *const f64, len: usize, out: *mut f64) -> NetcsdStatus {
    guard(|| {
        let s = in_slice(series, len, "series")?;
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ar1_autocorrelation(s)?;
        Ok(())
    })
}

/// Stationary covariance trace of `z <- G z + sigma w` for a symmetric
/// `dim x dim` row-major `G`. Sets `divergent` and leaves `trace` at
/// infinity when an eigenvalue of `G` reaches the unit circle.
///
/// # Safety
/// `gamma_bar` must hold `dim*dim` doubles; `trace` and `divergent` writable.
#[no_mangle]
pub unsafe extern "C" fn netcsd_covariance_trace(
    gamma_bar: *const f64,
    dim: usize,
    sigma: f64,
    trace: *mut f64,
    divergent: *mut bool,
) -> NetcsdStatus {
    guard(|| {
        let m = in_slice(gamma_bar, dim * dim, "gamma_bar")?;
        if trace.is_null() {
            return Err(null("trace"));
        }
        if divergent.is_null() {
            return Err(null("divergent"));
        }
        let g = DMatrix::from_row_slice(dim, dim, m);
        match theoretical_covariance_trace(&g, sigma)? {
            TraceValue::Finite(v) => {
                *trace = v;
                *divergent = false;
            }
            TraceValue::Divergent => {
                *trace = f64::INFINITY;
                *divergent = true;
            }
        }
        Ok(())
    })
}

/// Loads a scenario file, or a bundled preset given as `preset:<name>`.
///
/// # Safety
/// `path` must be a nul-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn netcsd_scenario_load(path: *const c_char, out: *mut *mut NetcsdScenario) -> NetcsdStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let path = PathBuf::from(str_arg(path, "path")?);
        let scn = cli_io::load_scenario(&path)?;
        *out = Box::into_raw(Box::new(NetcsdScenario(scn)));
        Ok(())
    })
}

/// Parses scenario JSON.
///
/// # Safety
/// `json` must be a nul-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn netcsd_scenario_from_json(json: *const c_char, out: *mut *mut NetcsdScenario) -> NetcsdStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let scn = cli_io::parse_scenario(str_arg(json, "json")?, "<ffi>")?;
        *out = Box::into_raw(Box::new(NetcsdScenario(scn)));
        Ok(())
    })
}

/// # Safety
/// `s` must come from a scenario constructor and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn netcsd_scenario_free(s: *mut NetcsdScenario) {
    if !s.is_null() {
        drop(Box::from_raw(s));
    }
}

/// Runs `command` on the scenario. `out_dir` may be null for the default
/// output directory; `seed` overrides the noise seed when non-null. On
/// success `*summary_json` receives a string to release with
/// [`netcsd_string_free`]; `summary_json` itself may be null.
///
/// # Safety
/// `s` must be a live handle; pointer arguments must be null or valid.
#[no_mangle]
pub unsafe extern "C" fn netcsd_scenario_run(
    s: *const NetcsdScenario,
    command: NetcsdCommand,
    out_dir: *const c_char,
    seed: *const u64,
    summary_json: *mut *mut c_char,
) -> NetcsdStatus {
    guard(|| {
        let s = s.as_ref().ok_or_else(|| null("s"))?;
        let opts = RunOptions {
            out: if out_dir.is_null() {
                None
            } else {
                Some(PathBuf::from(str_arg(out_dir, "out_dir")?))
            },
            seed: seed.as_ref().copied(),
            dt: None,
        };
        let summary = cli_io::run(&s.0, command.into(), &opts)?;
        if !summary_json.is_null() {
            let text = serde_json::to_string(&summary).expect("summary serializes");
            *summary_json = CString::new(text).expect("no interior nul").into_raw();
        }
        Ok(())
    })
}

fn write_row_major(m: &DMatrix<f64>, dst: &mut [f64]) {
    let n = m.ncols();
    for i in 0..m.nrows() {
        for j in 0..n {
            dst[i * n + j] = m[(i, j)];
        }
    }
}
