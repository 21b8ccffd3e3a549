//! C ABI for `cnmf2d`.
//!
//! Objects cross the boundary as opaque handles created by `*_new`,
//! `*_random`, `*_load`, ... and released with the matching `*_free`.
//! Every fallible call returns a [`Cnmf2dStatus`]; on failure a message is
//! available from [`cnmf2d_last_error_message`] on the same thread. Output
//! pointers are written only on success.
//!
//! Handles are not synchronized. Distinct handles may be used from
//! different threads concurrently.

#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use cnmf2d::io::{load_factors, read_matrix_csv, save_factors, write_matrix_csv};
use cnmf2d::simulation::gen_ground_truth;
use cnmf2d::{
    cost_at, d_beta, divergence, init_random, normalize, reconstruct, solve, Beta, ConvergenceTrace, Error,
    FactorStackH, FactorStackW, Matrix, ModelDims, SolverConfig,
};

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Cnmf2dStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    DimensionMismatch = 3,
    Domain = 4,
    NumericalAbort = 5,
    Parse = 6,
    Io = 7,
    Panic = 8,
}

/// Model sizes. All fields must be at least 1.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Cnmf2dDims {
    pub k: usize,
    pub n: usize,
    pub i: usize,
    pub l: usize,
    pub m: usize,
}

/// Solver settings; start from `cnmf2d_solver_config_default()`.
/// `normalize_every = 0` disables in-loop normalization.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Cnmf2dSolverConfig {
    pub beta: f64,
    pub max_iters: usize,
    pub tol: f64,
    pub floor: f64,
    pub normalize_every: usize,
    pub norm_order: f64,
    pub legacy: bool,
    pub seed: u64,
}

pub struct Cnmf2dMatrix(Matrix);

pub struct Cnmf2dFactors {
    w: FactorStackW,
    h: FactorStackH,
}

pub struct Cnmf2dTrace(ConvergenceTrace);

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

struct Failure(Cnmf2dStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::DimensionMismatch { .. } => Cnmf2dStatus::DimensionMismatch,
            Error::Domain { .. } => Cnmf2dStatus::Domain,
            Error::NumericalAbort { .. } | Error::Ensemble { .. } => Cnmf2dStatus::NumericalAbort,
            Error::Parse { .. } => Cnmf2dStatus::Parse,
            Error::Io { .. } | Error::Json { .. } => Cnmf2dStatus::Io,
            _ => Cnmf2dStatus::InvalidArgument,
        };
        Failure(status, e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(Cnmf2dStatus::NullPointer, format!("{what} is null"))
}

fn set_last_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> Cnmf2dStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_last_error("");
            Cnmf2dStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_last_error(&msg);
            status
        }
        Err(_) => {
            set_last_error("panic inside cnmf2d");
            Cnmf2dStatus::Panic
        }
    }
}

unsafe fn deref<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn deref_mut<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or_else(|| null(what))
}

unsafe fn path_arg(p: *const c_char) -> Result<PathBuf, Failure> {
    if p.is_null() {
        return Err(null("path"));
    }
    let s = CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure(Cnmf2dStatus::InvalidArgument, "path is not valid UTF-8".into()))?;
    Ok(PathBuf::from(s))
}

unsafe fn put<T>(out: *mut *mut T, value: T) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null("output pointer"));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

fn dims_from(d: &Cnmf2dDims) -> Result<ModelDims, Failure> {
    Ok(ModelDims::new(d.k, d.n, d.i, d.l, d.m)?)
}

/// Message for the last failed call on this thread, or an empty string.
/// Valid until the next call into the library on this thread.
#[no_mangle]
pub extern "C" fn cnmf2d_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

#[no_mangle]
pub extern "C" fn cnmf2d_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

// ---------------------------------------------------------------------------
// Matrices
// ---------------------------------------------------------------------------

/// Copies `rows * cols` row-major values from `data`.
#[no_mangle]
pub unsafe extern "C" fn cnmf2d_matrix_new(
    rows: usize,
    cols: usize,
    data: *const f64,
    out: *mut *mut Cnmf2dMatrix,
) -> Cnmf2dStatus {
    guard(|| {
        if data.is_null() {
            return Err(null("data"));
        }
        let len = rows
            .checked_mul(cols)
            .ok_or_else(|| Failure(Cnmf2dStatus::InvalidArgument, "size overflow".into()))?;
        let values = std::slice::from_raw_parts(data, len).to_vec();
        put(out, Cnmf2dMatrix(Matrix::new(rows, cols, values)?))
    })
}

#[no_mangle]
pub unsafe extern "C" fn cnmf2d_matrix_free(m: *mut Cnmf2dMatrix) {
    if !m.is_null() {
        drop(Box::from_raw(m));
    }
}

/// Rows of `m`, or 0 for a null handle.
#[no_mangle]
pub unsafe extern "C" fn cnmf2d_matrix_rows(m: *const Cnmf2dMatrix) -> usize {
    m.as_ref().map_or(0, |m| m.0.rows())
}

#[no_mangle]
pub unsafe extern "C" fn cnmf2d_matrix_cols(m: *const Cnmf2dMatrix) -> usize {
    m.as_ref().map_or(0, |m| m.0.cols())
}

/// Copies the row-major data into `out`, which must hold `len >= rows * cols`
/// values.
#[no_mangle]
pub unsafe extern "C" fn cnmf2d_matrix_copy_data(m: *const Cnmf2dMatrix, out: *mut f64, len: usize) -> Cnmf2dStatus {
    guard(|| {
        let m = deref(m, "matrix")?;
        if out.is_null() {
            return Err(null("output buffer"));
        }
        let src = m.0.as_slice();
        if len < src.len() {
            return Err(Failure(
                Cnmf2dStatus::InvalidArgument,
                format!("buffer holds {len} values, need {}", src.len()),
            ));
        }
        ptr::copy_nonoverlapping(src.as_ptr(), out, src.len());
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn cnmf2d_matrix_read_csv(path: *const c_char, out: *mut *mut Cnmf2dMatrix) -> Cnmf2dStatus {
    guard(|| {
        let path = path_arg(path)?;
        put(out, Cnmf2dMatrix(read_matrix_csv(&path)?))
    })
}

#[no_mangle]
pub unsafe extern "C" fn cnmf2d_matrix_write_csv(m: *const Cnmf2dMatrix, path: *const c_char) -> Cnmf2dStatus {
    guard(|| {
        let m = deref(m, "matrix")?;
        let path = path_arg(path)?;
        Ok(write_matrix_csv(&path, &m.0)?)
    })
}

// ---------------------------------------------------------------------------
// Divergence
// ---------------------------------------------------------------------------

#[no_mangle]
pub unsafe extern "C" fn cnmf2d_d_beta(p: f64, q: f64, beta: f64, out: *mut f64) -> Cnmf2dStatus {
    guard(|| {
        let out = deref_mut(out, "output")?;
        *out = d_beta(p, q, Beta::new(beta)?)?;
        Ok(())
    })
}

/// Entrywise divergence between `v` and `u`, with `u` floored at `floor`.
#[no_mangle]
pub unsafe extern "C" fn cnmf2d_divergence(
    v: *const Cnmf2dMatrix,
    u: *const Cnmf2dMatrix,
    beta: f64,
    floor: f64,
    out: *mut f64,
) -> Cnmf2dStatus {
    guard(|| {
        let (v, u) = (deref(v, "v")?, deref(u, "u")?);
        let out = deref_mut(out, "output")?;
        *out = divergence(&v.0, &u.0, Beta::new(beta)?, floor)?;
        Ok(())
    })
}

// ---------------------------------------------------------------------------
// Factors
// ---------------------------------------------------------------------------

#[no_mangle]
pub unsafe extern "C" fn cnmf2d_factors_random(
    dims: *const Cnmf2dDims,
    seed: u64,
    out: *mut *mut Cnmf2dFactors,
) -> Cnmf2dStatus {
    guard(|| {
        let dims = dims_from(deref(dims, "dims")?)?;
        let (w, h) = init_random(dims, seed)?;
        put(out, Cnmf2dFactors { w, h })
    })
}

/// Builds factors from `m_count` weight slices and `l_count` activation
/// slices. The slices are copied; the caller keeps ownership.
#[no_mangle]
pub unsafe extern "C" fn cnmf2d_factors_from_slices(
    w: *const *const Cnmf2dMatrix,
    m_count: usize,
    h: *const *const Cnmf2dMatrix,
    l_count: usize,
    out: *mut *mut Cnmf2dFactors,
) -> Cnmf2dStatus {
    guard(|| {
        let collect = |arr: *const *const Cnmf2dMatrix, count: usize, what: &str| -> Result<Vec<Matrix>, Failure> {
            if arr.is_null() {
                return Err(null(what));
            }
            std::slice::from_raw_parts(arr, count)
                .iter()
                .map(|&p| deref(p, what).map(|m| m.0.clone()))
                .collect()
        };
        let w = FactorStackW::new(collect(w, m_count, "weight slice")?)?;
        let h = FactorStackH::new(collect(h, l_count, "activation slice")?)?;
        if w.i() != h.i() {
            return Err(Failure(
                Cnmf2dStatus::DimensionMismatch,
                format!("weights have rank {}, activations {}", w.i(), h.i()),
            ));
        }
        put(out, Cnmf2dFactors { w, h })
    })
}

#[no_mangle]
pub unsafe extern "C" fn cnmf2d_factors_free(f: *mut Cnmf2dFactors) {
    if !f.is_null() {
        drop(Box::from_raw(f));
    }
}

#[no_mangle]
pub unsafe extern "C" fn cnmf2d_factors_dims(f: *const Cnmf2dFactors, out: *mut Cnmf2dDims) -> Cnmf2dStatus {
    guard(|| {
        let f = deref(f, "factors")?;
        let out = deref_mut(out, "output")?;
        *out = Cnmf2dDims {
            k: f.w.k(),
            n: f.h.n(),
            i: f.w.i(),
            l: f.h.l(),
            m: f.w.m(),
        };
        Ok(())
    })
}

/// Copy of weight slice `m` as a new matrix handle.
#[no_mangle]
pub unsafe extern "C" fn cnmf2d_factors_w_slice(
    f: *const Cnmf2dFactors,
    m: usize,
    out: *mut *mut Cnmf2dMatrix,
) -> Cnmf2dStatus {
    guard(|| {
        let f = deref(f, "factors")?;
        let slice = f.w.slices().get(m).ok_or_else(|| {
            Failure(Cnmf2dStatus::InvalidArgument, format!("weight slice {m} out of range"))
        })?;
        put(out, Cnmf2dMatrix(slice.clone()))
    })
}

/// Copy of activation slice `l` as a new matrix handle.
#[no_mangle]
pub unsafe extern "C" fn cnmf2d_factors_h_slice(
    f: *const Cnmf2dFactors,
    l: usize,
    out: *mut *mut Cnmf2dMatrix,
) -> Cnmf2dStatus {
    guard(|| {
        let f = deref(f, "factors")?;
        let slice = f.h.slices().get(l).ok_or_else(|| {
            Failure(Cnmf2dStatus::InvalidArgument, format!("activation slice {l} out of range"))
        })?;
        put(out, Cnmf2dMatrix(slice.clone()))
    })
}

#[no_mangle]
pub unsafe extern "C" fn cnmf2d_factors_reconstruct(
    f: *const Cnmf2dFactors,
    out: *mut *mut Cnmf2dMatrix,
) -> Cnmf2dStatus {
    guard(|| {
        let f = deref(f, "factors")?;
        put(out, Cnmf2dMatrix(reconstruct(&f.w, &f.h)?))
    })
}

/// Rescales in place to unit `p`-norm weight components.
#[no_mangle]
pub unsafe extern "C" fn cnmf2d_factors_normalize(f: *mut Cnmf2dFactors, p: f64) -> Cnmf2dStatus {
    guard(|| {
        let f = deref_mut(f, "factors")?;
        let (w, h) = normalize(&f.w, &f.h, p)?;
        f.w = w;
        f.h = h;
        Ok(())
    })
}

/// Writes `W_m*.csv` and `H_l*.csv` into `dir`.
#[no_mangle]
pub unsafe extern "C" fn cnmf2d_factors_save(f: *const Cnmf2dFactors, dir: *const c_char) -> Cnmf2dStatus {
    guard(|| {
        let f = deref(f, "factors")?;
        Ok(save_factors(&path_arg(dir)?, &f.w, &f.h)?)
    })
}

#[no_mangle]
pub unsafe extern "C" fn cnmf2d_factors_load(dir: *const c_char, out: *mut *mut Cnmf2dFactors) -> Cnmf2dStatus {
    guard(|| {
        let (w, h) = load_factors(&path_arg(dir)?)?;
        put(out, Cnmf2dFactors { w, h })
    })
}

/// Synthetic ground truth: chi-squared(2) weights, uniform activations and
/// their reconstruction.
#[no_mangle]
pub unsafe extern "C" fn cnmf2d_generate(
    dims: *const Cnmf2dDims,
    seed: u64,
    out_factors: *mut *mut Cnmf2dFactors,
    out_v: *mut *mut Cnmf2dMatrix,
) -> Cnmf2dStatus {
    guard(|| {
        let dims = dims_from(deref(dims, "dims")?)?;
        if out_factors.is_null() || out_v.is_null() {
            return Err(null("output pointer"));
        }
        let truth = gen_ground_truth(dims, seed)?;
        put(out_v, Cnmf2dMatrix(truth.v))?;
        put(out_factors, Cnmf2dFactors { w: truth.w, h: truth.h })
    })
}

// ---------------------------------------------------------------------------
// Solver
// ---------------------------------------------------------------------------

#[no_mangle]
pub extern "C" fn cnmf2d_solver_config_default() -> Cnmf2dSolverConfig {
    let d = SolverConfig::default();
    Cnmf2dSolverConfig {
        beta: d.beta.value(),
        max_iters: d.max_iters,
        tol: d.tol,
        floor: d.floor,
        normalize_every: d.normalize_every.unwrap_or(0),
        norm_order: d.norm_order,
        legacy: d.legacy,
        seed: d.seed,
    }
}

fn solver_config(c: &Cnmf2dSolverConfig) -> Result<SolverConfig, Failure> {
    Ok(SolverConfig {
        beta: Beta::new(c.beta)?,
        max_iters: c.max_iters,
        tol: c.tol,
        floor: c.floor,
        normalize_every: (c.normalize_every > 0).then_some(c.normalize_every),
        norm_order: c.norm_order,
        legacy: c.legacy,
        seed: c.seed,
    })
}

/// Runs the iteration from the factors in `f`, replacing them with the
/// result. `out_trace` may be null when the trace is not needed.
#[no_mangle]
pub unsafe extern "C" fn cnmf2d_solve(
    v: *const Cnmf2dMatrix,
    f: *mut Cnmf2dFactors,
    config: *const Cnmf2dSolverConfig,
    out_trace: *mut *mut Cnmf2dTrace,
) -> Cnmf2dStatus {
    guard(|| {
        let v = deref(v, "v")?;
        let f = deref_mut(f, "factors")?;
        let cfg = solver_config(deref(config, "config")?)?;
        let out = solve(&v.0, &f.w, &f.h, &cfg)?;
        f.w = out.w;
        f.h = out.h;
        if !out_trace.is_null() {
            put(out_trace, Cnmf2dTrace(out.trace))?;
        }
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn cnmf2d_cost(
    v: *const Cnmf2dMatrix,
    f: *const Cnmf2dFactors,
    beta: f64,
    floor: f64,
    out: *mut f64,
) -> Cnmf2dStatus {
    guard(|| {
        let v = deref(v, "v")?;
        let f = deref(f, "factors")?;
        let out = deref_mut(out, "output")?;
        *out = cost_at(&v.0, &f.w, &f.h, Beta::new(beta)?, floor)?;
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn cnmf2d_trace_len(t: *const Cnmf2dTrace) -> usize {
    t.as_ref().map_or(0, |t| t.0.costs.len())
}

/// Copies up to `len` recorded costs into `out`; returns the count copied.
#[no_mangle]
pub unsafe extern "C" fn cnmf2d_trace_costs(t: *const Cnmf2dTrace, out: *mut f64, len: usize) -> usize {
    match (t.as_ref(), out.is_null()) {
        (Some(t), false) => {
            let n = len.min(t.0.costs.len());
            ptr::copy_nonoverlapping(t.0.costs.as_ptr(), out, n);
            n
        }
        _ => 0,
    }
}

/// Cost of the returned factors, or NaN for a null handle.
#[no_mangle]
pub unsafe extern "C" fn cnmf2d_trace_final_cost(t: *const Cnmf2dTrace) -> f64 {
    t.as_ref().map_or(f64::NAN, |t| t.0.final_cost)
}

#[no_mangle]
pub unsafe extern "C" fn cnmf2d_trace_stopped_early(t: *const Cnmf2dTrace) -> bool {
    t.as_ref().is_some_and(|t| t.0.stopped_early)
}

#[no_mangle]
pub unsafe extern "C" fn cnmf2d_trace_free(t: *mut Cnmf2dTrace) {
    if !t.is_null() {
        drop(Box::from_raw(t));
    }
}
