//! C interface to the efflab core.
//!
//! Objects cross the boundary as opaque handles created and freed by this
//! library. Every fallible call returns an [`EfflabStatus`]; on failure the
//! message is kept per thread and read with [`efflab_last_error`]. Strings
//! returned through out-pointers are owned by the caller and released with
//! [`efflab_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use efflab::experiments::{run_experiment, ExperimentConfig, ExperimentOutput};
use efflab::lattice::{
    classify, conjugacy_check, solve_constrained_utility, AgentProblem, MarketLattice, PrimalOutcome,
};
use efflab::LabError;

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EfflabStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    /// A feasibility problem had no solution.
    Infeasible = 3,
    /// A utility problem is unbounded (an arbitrage exists).
    Unbounded = 4,
    NoConvergence = 5,
    Solver = 6,
    Io = 7,
    Parse = 8,
    /// Output buffer too small; the required length is reported.
    BufferTooSmall = 9,
    Internal = 10,
    Panic = 11,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let text = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(text).ok());
}

fn clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

fn status_of(err: &LabError) -> EfflabStatus {
    match err {
        LabError::InvalidArgument(_) | LabError::GridMismatch(_) | LabError::InsufficientData { .. } | LabError::Empty => {
            EfflabStatus::InvalidArgument
        }
        LabError::Infeasible(_) => EfflabStatus::Infeasible,
        LabError::NoConvergence { .. } => EfflabStatus::NoConvergence,
        LabError::Solver(_) => EfflabStatus::Solver,
        LabError::Io(_) => EfflabStatus::Io,
        LabError::Json(_) => EfflabStatus::Parse,
        LabError::ContractViolation(_) => EfflabStatus::Internal,
    }
}

/// Runs `f`, records any error or panic and maps it to a status.
fn guard(f: impl FnOnce() -> Result<(), (EfflabStatus, String)>) -> EfflabStatus {
    clear_error();
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => EfflabStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("panic inside efflab");
            EfflabStatus::Panic
        }
    }
}

fn lab(err: LabError) -> (EfflabStatus, String) {
    (status_of(&err), err.to_string())
}

fn null(what: &str) -> (EfflabStatus, String) {
    (EfflabStatus::NullPointer, format!("{what} is null"))
}

unsafe fn read_str<'a>(p: *const c_char, what: &str) -> Result<&'a str, (EfflabStatus, String)> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p).to_str().map_err(|_| (EfflabStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

unsafe fn write_out<T>(out: *mut T, value: T, what: &str) -> Result<(), (EfflabStatus, String)> {
    if out.is_null() {
        return Err(null(what));
    }
    out.write(value);
    Ok(())
}

fn to_c_string(s: String) -> Result<*mut c_char, (EfflabStatus, String)> {
    CString::new(s).map(CString::into_raw).map_err(|_| (EfflabStatus::Internal, "string holds a NUL byte".into()))
}

/// Message of the last failed call on this thread, or null. Valid until the
/// next call into the library from the same thread.
#[no_mangle]
pub extern "C" fn efflab_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn efflab_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Releases a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must come from this library and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn efflab_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// A finite price tree with a reference measure.
pub struct EfflabLattice(MarketLattice);

/// One-period binomial tree.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn efflab_lattice_binomial(
    s0: f64,
    up: f64,
    down: f64,
    p_up: f64,
    out: *mut *mut EfflabLattice,
) -> EfflabStatus {
    guard(|| {
        let l = MarketLattice::binomial(s0, up, down, p_up).map_err(lab)?;
        write_out(out, Box::into_raw(Box::new(EfflabLattice(l))), "out")
    })
}

/// Lattice from its JSON description (`depth, branching, prices, ref_probs`).
///
/// # Safety
/// `json` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn efflab_lattice_from_json(json: *const c_char, out: *mut *mut EfflabLattice) -> EfflabStatus {
    guard(|| {
        let text = read_str(json, "json")?;
        let l = MarketLattice::from_json(text).map_err(lab)?;
        write_out(out, Box::into_raw(Box::new(EfflabLattice(l))), "out")
    })
}

/// # Safety
/// `lattice` must come from this library and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn efflab_lattice_free(lattice: *mut EfflabLattice) {
    if !lattice.is_null() {
        drop(Box::from_raw(lattice));
    }
}

/// # Safety
/// Both pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn efflab_lattice_n_nodes(lattice: *const EfflabLattice, out: *mut usize) -> EfflabStatus {
    guard(|| {
        let l = lattice.as_ref().ok_or_else(|| null("lattice"))?;
        write_out(out, l.0.n_nodes(), "out")
    })
}

/// Newly allocated JSON description of the lattice.
///
/// # Safety
/// Both pointers must be valid; free the result with `efflab_string_free`.
#[no_mangle]
pub unsafe extern "C" fn efflab_lattice_to_json(lattice: *const EfflabLattice, out: *mut *mut c_char) -> EfflabStatus {
    guard(|| {
        let l = lattice.as_ref().ok_or_else(|| null("lattice"))?;
        let s = l.0.to_json().map_err(lab)?;
        write_out(out, to_c_string(s)?, "out")
    })
}

/// Primal (arbitrage-search) and dual (measure/deflator) verdicts.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct EfflabClassification {
    pub na: bool,
    pub na_c: bool,
    pub nd: bool,
    pub nd_c: bool,
    pub nupbr: bool,
    pub nupbr_c: bool,
    pub m: bool,
    pub m_loc: bool,
    pub m_sup: bool,
    pub d_loc: bool,
    pub d_sup: bool,
    /// All duality equivalences hold between the two sides.
    pub consistent: bool,
}

/// Classifies a lattice; `epsilon` is the strict-positivity floor.
///
/// # Safety
/// Both pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn efflab_lattice_classify(
    lattice: *const EfflabLattice,
    epsilon: f64,
    out: *mut EfflabClassification,
) -> EfflabStatus {
    guard(|| {
        let l = lattice.as_ref().ok_or_else(|| null("lattice"))?;
        let c = classify(&l.0, epsilon).map_err(lab)?;
        let r = EfflabClassification {
            na: c.na,
            na_c: c.na_c,
            nd: c.nd,
            nd_c: c.nd_c,
            nupbr: c.nupbr,
            nupbr_c: c.nupbr_c,
            m: c.m,
            m_loc: c.m_loc,
            m_sup: c.m_sup,
            d_loc: c.d_loc,
            d_sup: c.d_sup,
            consistent: c.consistent(),
        };
        write_out(out, r, "out")
    })
}

/// Utility shape for the lattice agent calls.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EfflabUtility {
    Log = 0,
    /// `x^(1-gamma)/(1-gamma)`, `gamma > 0`, `gamma != 1`.
    Power = 1,
}

/// `kind` arrives as a plain integer: a C caller can pass any value, and
/// an out-of-range enum would be undefined behaviour on this side.
fn agent(kind: u32, gamma: f64, wealth: f64, constrained: bool) -> Result<AgentProblem, (EfflabStatus, String)> {
    if kind == EfflabUtility::Log as u32 {
        Ok(AgentProblem::log(wealth, constrained))
    } else if kind == EfflabUtility::Power as u32 {
        Ok(AgentProblem::power(gamma, wealth, constrained))
    } else {
        Err((EfflabStatus::InvalidArgument, format!("unknown utility kind {kind}")))
    }
}

/// Optimal expected utility and root-node risky fraction; `kind` is an
/// `EfflabUtility` value. Returns
/// `Unbounded` when the agent can make unbounded profit.
///
/// # Safety
/// `lattice` must be valid; `out_value` and `out_root_fraction` may be null.
#[no_mangle]
pub unsafe extern "C" fn efflab_solve_utility(
    lattice: *const EfflabLattice,
    kind: u32,
    gamma: f64,
    wealth: f64,
    constrained: bool,
    out_value: *mut f64,
    out_root_fraction: *mut f64,
) -> EfflabStatus {
    guard(|| {
        let l = lattice.as_ref().ok_or_else(|| null("lattice"))?;
        let a = agent(kind, gamma, wealth, constrained)?;
        match solve_constrained_utility(&l.0, &a).map_err(lab)? {
            PrimalOutcome::Finite(sol) => {
                if !out_value.is_null() {
                    out_value.write(sol.value);
                }
                if !out_root_fraction.is_null() {
                    out_root_fraction.write(sol.fractions[0]);
                }
                Ok(())
            }
            PrimalOutcome::Unbounded { node, .. } => {
                Err((EfflabStatus::Unbounded, format!("utility unbounded: arbitrage at node {node}")))
            }
        }
    })
}

/// `|u(x) - inf_y (v(y) + x y)|` for the given agent.
///
/// # Safety
/// Both pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn efflab_conjugacy_gap(
    lattice: *const EfflabLattice,
    kind: u32,
    gamma: f64,
    wealth: f64,
    constrained: bool,
    out_gap: *mut f64,
) -> EfflabStatus {
    guard(|| {
        let l = lattice.as_ref().ok_or_else(|| null("lattice"))?;
        match conjugacy_check(&l.0, &agent(kind, gamma, wealth, constrained)?).map_err(lab)? {
            Some(c) => write_out(out_gap, c.gap, "out_gap"),
            None => Err((EfflabStatus::Unbounded, "primal value is infinite".into())),
        }
    })
}

/// Outcome of a named experiment.
pub struct EfflabExperiment(ExperimentOutput);

/// Runs an experiment from a JSON config (fields as accepted by the
/// command-line `--config`). Artifacts are kept in memory, not written.
///
/// # Safety
/// `config_json` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn efflab_experiment_run(
    config_json: *const c_char,
    out: *mut *mut EfflabExperiment,
) -> EfflabStatus {
    guard(|| {
        let text = read_str(config_json, "config_json")?;
        let cfg = ExperimentConfig::from_json(text).map_err(lab)?;
        let r = run_experiment(&cfg).map_err(lab)?;
        write_out(out, Box::into_raw(Box::new(EfflabExperiment(r))), "out")
    })
}

/// # Safety
/// `experiment` must come from this library and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn efflab_experiment_free(experiment: *mut EfflabExperiment) {
    if !experiment.is_null() {
        drop(Box::from_raw(experiment));
    }
}

/// Whether every asserted claim held.
///
/// # Safety
/// Both pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn efflab_experiment_passed(experiment: *const EfflabExperiment, out: *mut bool) -> EfflabStatus {
    guard(|| {
        let e = experiment.as_ref().ok_or_else(|| null("experiment"))?;
        write_out(out, e.0.passed(), "out")
    })
}

/// Claims, verdicts and artifacts as one JSON document.
///
/// # Safety
/// Both pointers must be valid; free the result with `efflab_string_free`.
#[no_mangle]
pub unsafe extern "C" fn efflab_experiment_to_json(
    experiment: *const EfflabExperiment,
    out: *mut *mut c_char,
) -> EfflabStatus {
    guard(|| {
        let e = experiment.as_ref().ok_or_else(|| null("experiment"))?;
        let s = serde_json::to_string(&e.0).map_err(|err| lab(err.into()))?;
        write_out(out, to_c_string(s)?, "out")
    })
}

/// Copies artifact `index`'s CSV into `buf` (NUL-terminated). If `buf` is
/// too small, nothing is copied, `BufferTooSmall` is returned and
/// `*required` holds the size needed including the NUL.
///
/// # Safety
/// `experiment` and `required` must be valid; `buf` must hold `len` bytes.
#[no_mangle]
pub unsafe extern "C" fn efflab_experiment_artifact(
    experiment: *const EfflabExperiment,
    index: usize,
    buf: *mut c_char,
    len: usize,
    required: *mut usize,
) -> EfflabStatus {
    guard(|| {
        let e = experiment.as_ref().ok_or_else(|| null("experiment"))?;
        let a = e.0.artifacts.get(index).ok_or_else(|| {
            (EfflabStatus::InvalidArgument, format!("artifact {index} out of range ({})", e.0.artifacts.len()))
        })?;
        let bytes = a.contents.as_bytes();
        write_out(required, bytes.len() + 1, "required")?;
        if buf.is_null() || len < bytes.len() + 1 {
            return Err((EfflabStatus::BufferTooSmall, format!("need {} bytes", bytes.len() + 1)));
        }
        ptr::copy_nonoverlapping(bytes.as_ptr(), buf.cast::<u8>(), bytes.len());
        buf.add(bytes.len()).write(0);
        Ok(())
    })
}
