//! C interface to the reserving engine.
//!
//! Triangles and simulated distributions cross the boundary as opaque
//! handles that the caller frees with the matching `_free` function. Every
//! fallible call returns a [`StackresStatus`]; on failure the message is
//! kept per thread and read back with [`stackres_last_error`]. Panics never
//! unwind into C.

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use stackres::chain_ladder;
use stackres::evaluation::{kupiec_test, pct_rmse};
use stackres::pipeline::{run_pipeline, RunConfig};
use stackres::stochastic::{fit_mack, fit_odp, mack_bootstrap, odp_bootstrap};
use stackres::{Error, LossTriangle, Quantity, ReserveDistribution, TriangleKind};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StackresStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    /// Malformed or incomplete loss data.
    InvalidData = 3,
    /// A model could not be fitted or simulated.
    Estimation = 4,
    /// An error measure or risk ratio is undefined.
    Evaluation = 5,
    Config = 6,
    Io = 7,
    Panic = 8,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StackresQuantity {
    Reserve = 0,
    NextYear = 1,
    Ultimate = 2,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StackresSummary {
    pub mean: f64,
    pub sd: f64,
    pub percentile: f64,
}

/// Cumulative paid triangle.
pub struct StackresTriangle(LossTriangle);

/// Simulated run-off outcomes.
pub struct StackresDistribution(ReserveDistribution);

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: String) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

fn status_of(e: &Error) -> StackresStatus {
    match e {
        Error::Structural(_)
        | Error::Exposure { .. }
        | Error::IncompleteData(_)
        | Error::Schema { .. }
        | Error::Parse { .. }
        | Error::Completeness { .. }
        | Error::OutOfWindow { .. }
        | Error::Conflict { .. }
        | Error::Selection { .. }
        | Error::Support { .. } => StackresStatus::InvalidData,
        Error::DegenerateColumn { .. }
        | Error::FitDegeneracy { .. }
        | Error::Estimation(_)
        | Error::Divergence { .. }
        | Error::Assembly { .. }
        | Error::MomentSupport { .. } => StackresStatus::Estimation,
        Error::Normalization | Error::RatioUndefined { .. } => StackresStatus::Evaluation,
        Error::Argument(_) => StackresStatus::InvalidArgument,
        Error::Config(_) => StackresStatus::Config,
        Error::Io(_) | Error::Csv(_) | Error::Json(_) => StackresStatus::Io,
    }
}

struct Fail(StackresStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(StackresStatus::NullPointer, format!("{what} is null"))
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> StackresStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error(String::new());
            StackresStatus::Ok
        }
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("internal panic: {msg}"));
            StackresStatus::Panic
        }
    }
}

unsafe fn slice<'a>(ptr: *const f64, len: usize, what: &str) -> Result<&'a [f64], Fail> {
    if len == 0 {
        return Ok(&[]);
    }
    if ptr.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(ptr, len))
}

unsafe fn triangle<'a>(t: *const StackresTriangle) -> Result<&'a LossTriangle, Fail> {
    t.as_ref().map(|t| &t.0).ok_or_else(|| null("triangle"))
}

unsafe fn write<T>(out: *mut T, value: T, what: &str) -> Result<(), Fail> {
    if out.is_null() {
        return Err(null(what));
    }
    out.write(value);
    Ok(())
}

/// Copies the last error message of this thread into `buf` (NUL
/// terminated, truncated to `len`) and returns the full message length
/// without the terminator.
///
/// # Safety
/// `buf` must be null or valid for `len` bytes.
#[no_mangle]
pub unsafe extern "C" fn stackres_last_error(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && len > 0 {
            let n = msg.len().min(len - 1);
            std::ptr::copy_nonoverlapping(msg.as_ptr() as *const c_char, buf, n);
            *buf.add(n) = 0;
        }
        msg.len()
    })
}

/// Builds an `n × n` cumulative triangle from row-major `cells`; values
/// below the latest diagonal are ignored.
///
/// # Safety
/// `cells` must be valid for `len` reads and `out` for one write.
#[no_mangle]
pub unsafe extern "C" fn stackres_triangle_new(
    n: usize,
    cells: *const f64,
    len: usize,
    out: *mut *mut StackresTriangle,
) -> StackresStatus {
    guard(|| {
        let cells = slice(cells, len, "cells")?.to_vec();
        let t = LossTriangle::new(n, cells, TriangleKind::Cumulative)?;
        write(out, Box::into_raw(Box::new(StackresTriangle(t))), "out")
    })
}

/// # Safety
/// `t` must be null or a handle from `stackres_triangle_new` not yet freed.
#[no_mangle]
pub unsafe extern "C" fn stackres_triangle_free(t: *mut StackresTriangle) {
    if !t.is_null() {
        drop(Box::from_raw(t));
    }
}

/// Side length, or 0 for a null handle.
///
/// # Safety
/// `t` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn stackres_triangle_size(t: *const StackresTriangle) -> usize {
    t.as_ref().map_or(0, |t| t.0.n())
}

/// Volume-weighted age-to-age factors into `out[0..n]`; `out[0]` is 1.
///
/// # Safety
/// `t` must be a live handle and `out` valid for `len` writes.
#[no_mangle]
pub unsafe extern "C" fn stackres_dev_factors(t: *const StackresTriangle, out: *mut f64, len: usize) -> StackresStatus {
    guard(|| {
        let tri = triangle(t)?;
        if len < tri.n() {
            return Err(Fail(StackresStatus::InvalidArgument, format!("need room for {} factors", tri.n())));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        let f = chain_ladder::dev_factors(tri)?;
        std::ptr::copy_nonoverlapping(f.as_slice().as_ptr(), out, tri.n());
        Ok(())
    })
}

/// Deterministic Chain Ladder reserve.
///
/// # Safety
/// `t` must be a live handle and `out` valid for one write.
#[no_mangle]
pub unsafe extern "C" fn stackres_chain_ladder_reserve(t: *const StackresTriangle, out: *mut f64) -> StackresStatus {
    guard(|| {
        let r = chain_ladder::reserve(triangle(t)?)?;
        write(out, r, "out")
    })
}

/// ODP residual bootstrap with gamma process error.
///
/// # Safety
/// `t` must be a live handle and `out` valid for one write.
#[no_mangle]
pub unsafe extern "C" fn stackres_odp_bootstrap(
    t: *const StackresTriangle,
    n_sims: usize,
    seed: u64,
    out: *mut *mut StackresDistribution,
) -> StackresStatus {
    guard(|| {
        let d = odp_bootstrap(&fit_odp(triangle(t)?)?, n_sims, seed)?;
        write(out, Box::into_raw(Box::new(StackresDistribution(d))), "out")
    })
}

/// Mack residual bootstrap with normal process error.
///
/// # Safety
/// `t` must be a live handle and `out` valid for one write.
#[no_mangle]
pub unsafe extern "C" fn stackres_mack_bootstrap(
    t: *const StackresTriangle,
    n_sims: usize,
    seed: u64,
    out: *mut *mut StackresDistribution,
) -> StackresStatus {
    guard(|| {
        let tri = triangle(t)?;
        let d = mack_bootstrap(&fit_mack(tri)?, tri, n_sims, seed)?;
        write(out, Box::into_raw(Box::new(StackresDistribution(d))), "out")
    })
}

/// # Safety
/// `d` must be null or a handle from a bootstrap call not yet freed.
#[no_mangle]
pub unsafe extern "C" fn stackres_distribution_free(d: *mut StackresDistribution) {
    if !d.is_null() {
        drop(Box::from_raw(d));
    }
}

/// Number of simulated outcomes, or 0 for a null handle.
///
/// # Safety
/// `d` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn stackres_distribution_len(d: *const StackresDistribution) -> usize {
    d.as_ref().map_or(0, |d| d.0.len())
}

/// Mean, standard deviation and `level` percentile of one quantity.
///
/// # Safety
/// `d` must be a live handle and `out` valid for one write.
#[no_mangle]
pub unsafe extern "C" fn stackres_distribution_summary(
    d: *const StackresDistribution,
    quantity: StackresQuantity,
    level: f64,
    out: *mut StackresSummary,
) -> StackresStatus {
    guard(|| {
        let d = d.as_ref().ok_or_else(|| null("distribution"))?;
        if !(0.0..=1.0).contains(&level) {
            return Err(Fail(StackresStatus::InvalidArgument, format!("level {level} outside [0, 1]")));
        }
        let q = match quantity {
            StackresQuantity::Reserve => Quantity::Reserve,
            StackresQuantity::NextYear => Quantity::NextYear,
            StackresQuantity::Ultimate => Quantity::Ultimate,
        };
        let s = d.0.summary(q, level);
        write(
            out,
            StackresSummary {
                mean: s.mean,
                sd: s.sd,
                percentile: s.percentile,
            },
            "out",
        )
    })
}

/// Kupiec proportion-of-failures p-value for `exceedances` out of `k`.
///
/// # Safety
/// `out` must be valid for one write.
#[no_mangle]
pub unsafe extern "C" fn stackres_kupiec_test(exceedances: usize, k: usize, p: f64, out: *mut f64) -> StackresStatus {
    guard(|| {
        if k == 0 || exceedances > k || !(p > 0.0 && p < 1.0) {
            return Err(Fail(StackresStatus::InvalidArgument, "need 0 <= x <= K, K > 0, 0 < p < 1".into()));
        }
        write(out, kupiec_test(exceedances, k, p), "out")
    })
}

/// Percentage RMSE of `k` predictions against `k` actuals.
///
/// # Safety
/// `predictions` and `actuals` must be valid for `k` reads, `out` for one
/// write.
#[no_mangle]
pub unsafe extern "C" fn stackres_pct_rmse(
    predictions: *const f64,
    actuals: *const f64,
    k: usize,
    out: *mut f64,
) -> StackresStatus {
    guard(|| {
        let p = slice(predictions, k, "predictions")?;
        let a = slice(actuals, k, "actuals")?;
        write(out, pct_rmse(p, a)?, "out")
    })
}

/// Runs the full pipeline from a TOML config file and stores the number of
/// companies evaluated.
///
/// # Safety
/// `config_path` must be a NUL-terminated string; `companies` null or valid
/// for one write.
#[no_mangle]
pub unsafe extern "C" fn stackres_run(config_path: *const c_char, companies: *mut usize) -> StackresStatus {
    guard(|| {
        if config_path.is_null() {
            return Err(null("config_path"));
        }
        let path = CStr::from_ptr(config_path)
            .to_str()
            .map_err(|_| Fail(StackresStatus::InvalidArgument, "config path is not UTF-8".into()))?;
        let cfg = RunConfig::from_file(Path::new(path))?;
        let report = run_pipeline(&cfg)?;
        if !companies.is_null() {
            companies.write(report.companies);
        }
        Ok(())
    })
}
