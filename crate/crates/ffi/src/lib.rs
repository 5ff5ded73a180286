//! C ABI for loading trained surrogates and datasets, stepping and rolling out models,
//! probing Jacobian spectra, and running the reference Burgers solver.
//!
//! Every entry point returns a [`JawsStatus`]. On failure the message is kept per thread
//! and read back with [`jaws_last_error_message`]. Handles are opaque and owned by the
//! caller, who releases them with the matching `*_free`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use jaws_core::container::{load_checkpoint, load_dataset};
use jaws_core::eval::{spectral_radius, weight_maps, RadiusOptions};
use jaws_core::solver::{BurgersSolver, Dataset};
use jaws_core::{Architecture, Field, HeadKind, JawsError, ModelParams};

/// Outcome of an FFI call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum JawsStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    ShapeMismatch = 3,
    Io = 4,
    Format = 5,
    Numerical = 6,
    Unsupported = 7,
    Panic = 8,
}

/// A trained or freshly initialized surrogate.
pub struct JawsModel {
    params: ModelParams,
}

/// A set of solver trajectories read from a dataset container.
pub struct JawsDataset {
    data: Dataset,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(err: &JawsError) -> JawsStatus {
    match err {
        JawsError::ShapeMismatch { .. } => JawsStatus::ShapeMismatch,
        JawsError::Io(_) => JawsStatus::Io,
        JawsError::Format(_) | JawsError::BadMagic | JawsError::ArchMismatch(_) | JawsError::Json(_) => {
            JawsStatus::Format
        }
        JawsError::BlowUp { .. }
        | JawsError::NonFinite { .. }
        | JawsError::DataGeneration { .. }
        | JawsError::TrainingAborted(_) => JawsStatus::Numerical,
        JawsError::Unsupported(_) => JawsStatus::Unsupported,
        _ => JawsStatus::InvalidArgument,
    }
}

struct Fail(JawsStatus, String);

impl From<JawsError> for Fail {
    fn from(e: JawsError) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(JawsStatus::NullPointer, format!("{what} is null"))
}

fn bad(msg: impl Into<String>) -> Fail {
    Fail(JawsStatus::InvalidArgument, msg.into())
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> JawsStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            JawsStatus::Ok
        }
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            JawsStatus::Panic
        }
    }
}

unsafe fn path_arg<'a>(p: *const c_char) -> Result<&'a Path, Fail> {
    if p.is_null() {
        return Err(null("path"));
    }
    CStr::from_ptr(p)
        .to_str()
        .map(Path::new)
        .map_err(|_| bad("path is not valid UTF-8"))
}

unsafe fn slice_arg<'a>(p: *const f64, len: usize, what: &str) -> Result<&'a [f64], Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn out_slice<'a>(p: *mut f64, len: usize, what: &str) -> Result<&'a mut [f64], Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts_mut(p, len))
}

unsafe fn model_ref<'a>(m: *const JawsModel) -> Result<&'a JawsModel, Fail> {
    m.as_ref().ok_or_else(|| null("model"))
}

unsafe fn dataset_ref<'a>(d: *const JawsDataset) -> Result<&'a JawsDataset, Fail> {
    d.as_ref().ok_or_else(|| null("dataset"))
}

fn check_grid(model: &JawsModel, n: usize) -> Result<(), Fail> {
    let grid = model.params.arch.grid;
    if n != grid {
        return Err(JawsError::ShapeMismatch { expected: grid, got: n }.into());
    }
    Ok(())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn jaws_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failed call on this thread, or null after a success.
/// The pointer stays valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn jaws_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Loads a checkpoint container.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn jaws_model_load(path: *const c_char, out: *mut *mut JawsModel) -> JawsStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let (params, _) = load_checkpoint(path_arg(path)?)?;
        *out = Box::into_raw(Box::new(JawsModel { params }));
        Ok(())
    })
}

/// Creates an untrained model without an uncertainty head. Fresh models map every
/// state to itself.
///
/// # Safety
/// `out` must be a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn jaws_model_init(
    grid: usize,
    channels: usize,
    kernel: usize,
    depth: usize,
    seed: u64,
    out: *mut *mut JawsModel,
) -> JawsStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let arch = Architecture {
            grid,
            channels,
            kernel,
            depth,
            head: HeadKind::None,
        };
        let params = ModelParams::init(arch, seed)?;
        *out = Box::into_raw(Box::new(JawsModel { params }));
        Ok(())
    })
}

/// # Safety
/// `model` must come from this library and not be used afterwards. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn jaws_model_free(model: *mut JawsModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// # Safety
/// `model` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn jaws_model_grid_size(model: *const JawsModel, out: *mut usize) -> JawsStatus {
    guard(|| {
        let m = model_ref(model)?;
        if out.is_null() {
            return Err(null("out"));
        }
        *out = m.params.arch.grid;
        Ok(())
    })
}

/// One model step `u -> out`, both of length `n` equal to the model grid.
///
/// # Safety
/// `u` and `out` must hold `n` doubles.
#[no_mangle]
pub unsafe extern "C" fn jaws_model_step(
    model: *const JawsModel,
    u: *const f64,
    out: *mut f64,
    n: usize,
) -> JawsStatus {
    guard(|| {
        let m = model_ref(model)?;
        check_grid(m, n)?;
        let next = m.params.predict(slice_arg(u, n, "u")?)?;
        out_slice(out, n, "out")?.copy_from_slice(&next);
        Ok(())
    })
}

/// Closed-loop rollout of `steps` model steps from `u0`. State `t` (1-based) is written to
/// `out[(t - 1) * n ..]`. A non-finite state stops the rollout with `JAWS_STATUS_NUMERICAL`
/// after the states before it have been written.
///
/// # Safety
/// `u0` must hold `n` doubles and `out` `steps * n`.
#[no_mangle]
pub unsafe extern "C" fn jaws_model_rollout(
    model: *const JawsModel,
    u0: *const f64,
    n: usize,
    steps: usize,
    out: *mut f64,
) -> JawsStatus {
    guard(|| {
        let m = model_ref(model)?;
        check_grid(m, n)?;
        let total = steps.checked_mul(n).ok_or_else(|| bad("steps * n overflows"))?;
        let dst = out_slice(out, total, "out")?;
        let mut u = slice_arg(u0, n, "u0")?.to_vec();
        for (t, row) in dst.chunks_exact_mut(n).enumerate() {
            u = m.params.predict(&u)?;
            if u.iter().any(|v| !v.is_finite()) {
                return Err(JawsError::BlowUp { step: t + 1 }.into());
            }
            row.copy_from_slice(&u);
        }
        Ok(())
    })
}

/// Largest eigenvalue modulus of the one-step Jacobian at `u`.
///
/// # Safety
/// `u` must hold `n` doubles; `radius` and `converged` must be writable.
#[no_mangle]
pub unsafe extern "C" fn jaws_model_spectral_radius(
    model: *const JawsModel,
    u: *const f64,
    n: usize,
    iters: usize,
    seed: u64,
    radius: *mut f64,
    converged: *mut bool,
) -> JawsStatus {
    guard(|| {
        let m = model_ref(model)?;
        check_grid(m, n)?;
        if radius.is_null() || converged.is_null() {
            return Err(null("output"));
        }
        let opts = RadiusOptions {
            iters,
            seed,
            ..RadiusOptions::default()
        };
        let est = spectral_radius(&m.params, slice_arg(u, n, "u")?, &opts)?;
        *radius = est.value;
        *converged = est.converged;
        Ok(())
    })
}

/// Local Jacobian precision `exp(-s2(x))` at `u`. Models without a spatial uncertainty
/// head return `JAWS_STATUS_UNSUPPORTED`.
///
/// # Safety
/// `u` and `out` must hold `n` doubles.
#[no_mangle]
pub unsafe extern "C" fn jaws_model_weight_map(
    model: *const JawsModel,
    u: *const f64,
    n: usize,
    out: *mut f64,
) -> JawsStatus {
    guard(|| {
        let m = model_ref(model)?;
        check_grid(m, n)?;
        let w = weight_maps(&m.params, slice_arg(u, n, "u")?)?;
        out_slice(out, n, "out")?.copy_from_slice(&w.precision_s2);
        Ok(())
    })
}

/// Loads a dataset container.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn jaws_dataset_load(path: *const c_char, out: *mut *mut JawsDataset) -> JawsStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let data = load_dataset(path_arg(path)?)?;
        *out = Box::into_raw(Box::new(JawsDataset { data }));
        Ok(())
    })
}

/// # Safety
/// `dataset` must come from this library and not be used afterwards. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn jaws_dataset_free(dataset: *mut JawsDataset) {
    if !dataset.is_null() {
        drop(Box::from_raw(dataset));
    }
}

/// Trajectory count, states per trajectory and grid size.
///
/// # Safety
/// All output pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn jaws_dataset_shape(
    dataset: *const JawsDataset,
    trajectories: *mut usize,
    states: *mut usize,
    grid: *mut usize,
) -> JawsStatus {
    guard(|| {
        let d = &dataset_ref(dataset)?.data;
        if trajectories.is_null() || states.is_null() || grid.is_null() {
            return Err(null("output"));
        }
        *trajectories = d.trajectories.len();
        *states = d.trajectories[0].states.len();
        *grid = d.grid();
        Ok(())
    })
}

/// Copies state `step` of trajectory `trajectory` into `out` and its viscosity into `nu`
/// when `nu` is not null.
///
/// # Safety
/// `out` must hold `n` doubles.
#[no_mangle]
pub unsafe extern "C" fn jaws_dataset_state(
    dataset: *const JawsDataset,
    trajectory: usize,
    step: usize,
    out: *mut f64,
    n: usize,
    nu: *mut f64,
) -> JawsStatus {
    guard(|| {
        let d = &dataset_ref(dataset)?.data;
        let t = d
            .trajectories
            .get(trajectory)
            .ok_or_else(|| bad(format!("trajectory {trajectory} out of range")))?;
        let s = t
            .states
            .get(step)
            .ok_or_else(|| bad(format!("step {step} out of range")))?;
        if n != s.len() {
            return Err(JawsError::ShapeMismatch { expected: s.len(), got: n }.into());
        }
        out_slice(out, n, "out")?.copy_from_slice(s.values());
        if !nu.is_null() {
            *nu = t.nu;
        }
        Ok(())
    })
}

/// Integrates Burgers from `u0` and writes `steps + 1` states (the first is `u0`) spaced
/// `dt` apart into `out`, each advanced with `substeps` inner steps.
///
/// # Safety
/// `u0` must hold `n` doubles and `out` `(steps + 1) * n`.
#[no_mangle]
pub unsafe extern "C" fn jaws_solver_integrate(
    u0: *const f64,
    n: usize,
    nu: f64,
    dt: f64,
    substeps: usize,
    steps: usize,
    out: *mut f64,
) -> JawsStatus {
    guard(|| {
        let total = steps
            .checked_add(1)
            .and_then(|s| s.checked_mul(n))
            .ok_or_else(|| bad("(steps + 1) * n overflows"))?;
        let field = Field::new(slice_arg(u0, n, "u0")?.to_vec())?;
        let dst = out_slice(out, total, "out")?;
        let traj = BurgersSolver::new(n)?.integrate(&field, nu, dt, steps, substeps)?;
        for (row, s) in dst.chunks_exact_mut(n).zip(&traj.states) {
            row.copy_from_slice(s.values());
        }
        Ok(())
    })
}
