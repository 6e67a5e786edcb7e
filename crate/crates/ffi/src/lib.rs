//! C ABI over the `coagkin` numerical core.
//!
//! Objects cross the boundary as opaque heap handles created by a
//! `coagkin_*_new` / `coagkin_*_solve` call and released with the matching
//! `coagkin_*_free`. Every fallible call returns a [`CoagStatus`]; on failure
//! the message is kept per thread and can be read with
//! [`coagkin_last_error_message`]. Panics are caught at the boundary and
//! reported as [`CoagStatus::Panic`].

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::Arc;

use coagkin::fourier::{alpha_global, LineDensity};
use coagkin::linearized::{assemble_l0, assemble_leps, estimate_gap, GapOptions, OperatorForm};
use coagkin::profiles::{solve_profile, ProfileOptions, ProfileResult};
use coagkin::{make_grid, Error, Grid, GridKind, KernelSpec, NormKind, PerturbationFamily};

/// Status codes returned by every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CoagStatus {
    Ok = 0,
    NullPointer = 1,
    Config = 2,
    Domain = 3,
    GridMismatch = 4,
    NonConvergence = 5,
    BlowUp = 6,
    Fit = 7,
    Unsupported = 8,
    Io = 9,
    /// Output buffer shorter than the data to copy.
    BufferTooSmall = 10,
    Panic = 11,
}

/// Node layout of a grid.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CoagGridKind {
    Uniform = 0,
    LogUniform = 1,
}

/// Perturbation `W` in `K = 2 + eps * W`.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CoagFamily {
    Zero = 0,
    One = 1,
    /// `W = 2xy / (x^2 + y^2)`.
    RatioSym = 2,
    /// `W = min(x, y) / max(x, y)`.
    MinOverMax = 3,
}

/// Opaque grid handle.
pub struct CoagGrid(Arc<Grid>);

/// Opaque kernel handle.
pub struct CoagKernel(KernelSpec);

/// Opaque handle to a solved self-similar profile.
pub struct CoagProfile(ProfileResult);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> CoagStatus {
    match e {
        Error::Config(_) => CoagStatus::Config,
        Error::Domain(_) => CoagStatus::Domain,
        Error::GridMismatch => CoagStatus::GridMismatch,
        Error::NonConvergence { .. } => CoagStatus::NonConvergence,
        Error::BlowUp { .. } => CoagStatus::BlowUp,
        Error::Fit(_) => CoagStatus::Fit,
        Error::Unsupported(_) => CoagStatus::Unsupported,
        Error::Io(_) => CoagStatus::Io,
    }
}

/// Runs `f`, converting errors and panics to a status and recording the message.
fn guard(f: impl FnOnce() -> Result<(), (CoagStatus, String)>) -> CoagStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => CoagStatus::Ok,
        Ok(Err((s, msg))) => {
            set_error(msg);
            s
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("panic: {msg}"));
            CoagStatus::Panic
        }
    }
}

fn core<T>(r: coagkin::Result<T>) -> Result<T, (CoagStatus, String)> {
    r.map_err(|e| (status_of(&e), e.to_string()))
}

fn null(what: &str) -> (CoagStatus, String) {
    (CoagStatus::NullPointer, format!("null pointer: {what}"))
}

/// # Safety
/// `p` must be null or point to a live `T`.
unsafe fn as_ref<'a, T>(p: *const T, what: &str) -> Result<&'a T, (CoagStatus, String)> {
    p.as_ref().ok_or_else(|| null(what))
}

/// # Safety
/// `out` must be null or valid for writes.
unsafe fn write_out<T>(out: *mut T, v: T) -> Result<(), (CoagStatus, String)> {
    if out.is_null() {
        return Err(null("out"));
    }
    out.write(v);
    Ok(())
}

/// # Safety
/// `buf` must be null or valid for `len` writes.
unsafe fn copy_out(src: &[f64], buf: *mut f64, len: usize) -> Result<(), (CoagStatus, String)> {
    if buf.is_null() {
        return Err(null("buf"));
    }
    if len < src.len() {
        return Err((CoagStatus::BufferTooSmall, format!("buffer holds {len} values, need {}", src.len())));
    }
    std::ptr::copy_nonoverlapping(src.as_ptr(), buf, src.len());
    Ok(())
}

/// Copies the last error message of this thread, NUL-terminated and truncated
/// to `len` bytes, into `buf`. Returns the full message length excluding the
/// terminator, or 0 when no error is recorded.
///
/// # Safety
/// `buf` must be null or valid for `len` writes.
#[no_mangle]
pub unsafe extern "C" fn coagkin_last_error_message(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| match e.borrow().as_ref() {
        None => 0,
        Some(msg) => {
            let bytes = msg.as_bytes();
            if !buf.is_null() && len > 0 {
                let n = bytes.len().min(len - 1);
                std::ptr::copy_nonoverlapping(bytes.as_ptr().cast::<c_char>(), buf, n);
                *buf.add(n) = 0;
            }
            bytes.len()
        }
    })
}

/// Creates a grid of `n` nodes on `[xmin, xmax]`.
///
/// # Safety
/// `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn coagkin_grid_new(
    kind: CoagGridKind,
    xmin: f64,
    xmax: f64,
    n: usize,
    out: *mut *mut CoagGrid,
) -> CoagStatus {
    guard(|| {
        let kind = match kind {
            CoagGridKind::Uniform => GridKind::Uniform,
            CoagGridKind::LogUniform => GridKind::LogUniform,
        };
        let g = core(make_grid(kind, xmin, xmax, n))?;
        write_out(out, Box::into_raw(Box::new(CoagGrid(g))))
    })
}

/// Number of grid nodes, or 0 for a null handle.
///
/// # Safety
/// `grid` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn coagkin_grid_len(grid: *const CoagGrid) -> usize {
    grid.as_ref().map_or(0, |g| g.0.len())
}

/// Copies the grid nodes into `buf`.
///
/// # Safety
/// `grid` must be a live handle and `buf` valid for `len` writes.
#[no_mangle]
pub unsafe extern "C" fn coagkin_grid_nodes(grid: *const CoagGrid, buf: *mut f64, len: usize) -> CoagStatus {
    guard(|| copy_out(as_ref(grid, "grid")?.0.nodes(), buf, len))
}

/// # Safety
/// `grid` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn coagkin_grid_free(grid: *mut CoagGrid) {
    if !grid.is_null() {
        drop(Box::from_raw(grid));
    }
}

/// Creates the kernel `K = 2 + epsilon * W`.
///
/// # Safety
/// `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn coagkin_kernel_new(family: CoagFamily, epsilon: f64, out: *mut *mut CoagKernel) -> CoagStatus {
    guard(|| {
        let fam = match family {
            CoagFamily::Zero => PerturbationFamily::Zero,
            CoagFamily::One => PerturbationFamily::One,
            CoagFamily::RatioSym => PerturbationFamily::ratio_sym_default(),
            CoagFamily::MinOverMax => PerturbationFamily::MinOverMax,
        };
        let k = core(KernelSpec::new(epsilon, fam))?;
        write_out(out, Box::into_raw(Box::new(CoagKernel(k))))
    })
}

/// Evaluates `K(x, y)` into `out`.
///
/// # Safety
/// `kernel` must be a live handle and `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn coagkin_kernel_eval(kernel: *const CoagKernel, x: f64, y: f64, out: *mut f64) -> CoagStatus {
    guard(|| {
        let k = as_ref(kernel, "kernel")?;
        let v = core(coagkin::kernels::eval_k(&k.0, x, y))?;
        write_out(out, v)
    })
}

/// # Safety
/// `kernel` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn coagkin_kernel_free(kernel: *mut CoagKernel) {
    if !kernel.is_null() {
        drop(Box::from_raw(kernel));
    }
}

/// Solves the self-similar profile of unit mass to relative residual `tol`
/// (`tol <= 0` selects the default).
///
/// # Safety
/// `kernel` and `grid` must be live handles and `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn coagkin_profile_solve(
    kernel: *const CoagKernel,
    grid: *const CoagGrid,
    tol: f64,
    out: *mut *mut CoagProfile,
) -> CoagStatus {
    guard(|| {
        let k = as_ref(kernel, "kernel")?;
        let g = as_ref(grid, "grid")?;
        let mut opts = ProfileOptions::default();
        if tol > 0.0 {
            opts.tol = tol;
        }
        let p = core(solve_profile(&k.0, &g.0, &opts))?;
        write_out(out, Box::into_raw(Box::new(CoagProfile(p))))
    })
}

/// Number of profile values, or 0 for a null handle.
///
/// # Safety
/// `profile` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn coagkin_profile_len(profile: *const CoagProfile) -> usize {
    profile.as_ref().map_or(0, |p| p.0.g.values().len())
}

/// Copies the profile values at the grid nodes into `buf`.
///
/// # Safety
/// `profile` must be a live handle and `buf` valid for `len` writes.
#[no_mangle]
pub unsafe extern "C" fn coagkin_profile_values(profile: *const CoagProfile, buf: *mut f64, len: usize) -> CoagStatus {
    guard(|| copy_out(as_ref(profile, "profile")?.0.g.values(), buf, len))
}

/// Zeroth moment of the profile.
///
/// # Safety
/// `profile` must be a live handle and `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn coagkin_profile_m0(profile: *const CoagProfile, out: *mut f64) -> CoagStatus {
    guard(|| write_out(out, as_ref(profile, "profile")?.0.m0))
}

/// Final relative residual of the profile solve.
///
/// # Safety
/// `profile` must be a live handle and `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn coagkin_profile_residual(profile: *const CoagProfile, out: *mut f64) -> CoagStatus {
    guard(|| write_out(out, as_ref(profile, "profile")?.0.residual_l1k))
}

/// # Safety
/// `profile` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn coagkin_profile_free(profile: *mut CoagProfile) {
    if !profile.is_null() {
        drop(Box::from_raw(profile));
    }
}

/// Worst observed decay rate in `L1_k` of the linearised operator around
/// `profile` (or of the unperturbed operator when `profile` is null), over
/// `trials` random mass-free seeds.
///
/// # Safety
/// `grid` must be a live handle; `kernel` and `profile` must both be live or
/// both null; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn coagkin_gap_rate_l1k(
    grid: *const CoagGrid,
    kernel: *const CoagKernel,
    profile: *const CoagProfile,
    k: f64,
    trials: usize,
    seed: u64,
    out: *mut f64,
) -> CoagStatus {
    guard(|| {
        let g = as_ref(grid, "grid")?;
        let l = match (kernel.as_ref(), profile.as_ref()) {
            (Some(kn), Some(p)) => core(assemble_leps(&g.0, &p.0.g, &kn.0))?,
            (None, None) => core(assemble_l0(&g.0, OperatorForm::Direct))?,
            _ => return Err(null("kernel and profile must both be given or both be null")),
        };
        let opts = GapOptions { trials, seed, ..GapOptions::default() };
        let est = core(estimate_gap(&l, NormKind::L1k { k }, &opts))?;
        write_out(out, est.worst_rate)
    })
}

/// Global Fourier modulus constant of a density sampled at `n` equispaced
/// points of `[a, b]` (`n` odd, at least 3).
///
/// # Safety
/// `values` must be valid for `n` reads and `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn coagkin_fourier_alpha_global(
    values: *const f64,
    n: usize,
    a: f64,
    b: f64,
    out: *mut f64,
) -> CoagStatus {
    guard(|| {
        if values.is_null() {
            return Err(null("values"));
        }
        let v = std::slice::from_raw_parts(values, n).to_vec();
        let d = core(LineDensity::new(a, b, v))?;
        write_out(out, alpha_global(&d))
    })
}
