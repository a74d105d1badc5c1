//! C ABI for `svnlearn`.
//!
//! Operators cross the boundary as opaque `SvnOperator` handles created by
//! the library and released with [`svn_operator_free`]. Every fallible call
//! returns an [`SvnStatus`]; on failure a message is available from
//! [`svn_last_error`] on the same thread. Orders are passed as `double`, with
//! `INFINITY` selecting the spectral norm. Dense matrices are row-major.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use svnlearn::complexity::theorem_bounds;
use svnlearn::erm::{fit, SolverOptions, TrainingSet};
use svnlearn::io::{read_operator, write_operator};
use svnlearn::nalgebra::DMatrix;
use svnlearn::{project_lp, project_schatten, Error, HilbertVector, LinearOperator, LpBall, Order, SchattenBall};

/// Result codes.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SvnStatus {
    Ok = 0,
    InvalidArgument = 1,
    UnsupportedOrder = 2,
    Shape = 3,
    NoConvergence = 4,
    Parse = 5,
    Config = 6,
    Io = 7,
    NullPointer = 8,
    BufferTooSmall = 9,
    Panic = 10,
}

/// Opaque operator handle.
pub struct SvnOperator {
    inner: LinearOperator,
}

/// Solver diagnostics returned by [`svn_fit`].
#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct SvnFitReport {
    pub iterations: usize,
    pub final_risk: f64,
    pub converged: bool,
    pub active_constraint: bool,
    pub schatten_norm: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> SvnStatus {
    match e {
        Error::InvalidInput(_) => SvnStatus::InvalidArgument,
        Error::UnsupportedOrder(_) => SvnStatus::UnsupportedOrder,
        Error::Shape(_) => SvnStatus::Shape,
        Error::NoConvergence { .. } => SvnStatus::NoConvergence,
        Error::Parse { .. } => SvnStatus::Parse,
        Error::Config(_) => SvnStatus::Config,
        Error::Io(_) => SvnStatus::Io,
    }
}

struct Fail(SvnStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(SvnStatus::NullPointer, format!("{what} is null"))
}

fn guard(body: impl FnOnce() -> Result<(), Fail>) -> SvnStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => SvnStatus::Ok,
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            SvnStatus::Panic
        }
    }
}

unsafe fn slice<'a>(p: *const f64, len: usize, what: &str) -> Result<&'a [f64], Fail> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn slice_mut<'a>(p: *mut f64, len: usize, what: &str) -> Result<&'a mut [f64], Fail> {
    if len == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts_mut(p, len))
}

unsafe fn handle<'a>(op: *const SvnOperator) -> Result<&'a LinearOperator, Fail> {
    op.as_ref().map(|h| &h.inner).ok_or_else(|| null("operator handle"))
}

unsafe fn path_arg(path: *const c_char) -> Result<String, Fail> {
    if path.is_null() {
        return Err(null("path"));
    }
    CStr::from_ptr(path)
        .to_str()
        .map(str::to_owned)
        .map_err(|_| Fail(SvnStatus::InvalidArgument, "path is not valid UTF-8".into()))
}

unsafe fn emit(out: *mut *mut SvnOperator, op: LinearOperator) -> Result<(), Fail> {
    if out.is_null() {
        return Err(null("output handle"));
    }
    *out = Box::into_raw(Box::new(SvnOperator { inner: op }));
    Ok(())
}

fn checked_len(a: usize, b: usize) -> Result<usize, Fail> {
    a.checked_mul(b).ok_or_else(|| Fail(SvnStatus::InvalidArgument, "size overflow".into()))
}

/// Message for the last failed call on this thread, or null. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn svn_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Creates an operator from a row-major `d_y × d_x` matrix.
///
/// # Safety
/// `data` must point to `d_y * d_x` doubles and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn svn_operator_from_dense(
    data: *const f64,
    d_y: usize,
    d_x: usize,
    out: *mut *mut SvnOperator,
) -> SvnStatus {
    guard(|| {
        let vals = slice(data, checked_len(d_y, d_x)?, "data")?;
        let m = DMatrix::from_row_slice(d_y, d_x, vals);
        emit(out, LinearOperator::dense(m)?)
    })
}

/// Releases a handle. Null is ignored.
///
/// # Safety
/// `op` must be null or a handle returned by this library, freed only once.
#[no_mangle]
pub unsafe extern "C" fn svn_operator_free(op: *mut SvnOperator) {
    if !op.is_null() {
        drop(Box::from_raw(op));
    }
}

/// # Safety
/// `op` must be a valid handle; `d_y`, `d_x` must be writable.
#[no_mangle]
pub unsafe extern "C" fn svn_operator_shape(op: *const SvnOperator, d_y: *mut usize, d_x: *mut usize) -> SvnStatus {
    guard(|| {
        let t = handle(op)?;
        if d_y.is_null() || d_x.is_null() {
            return Err(null("shape output"));
        }
        *d_y = t.d_y();
        *d_x = t.d_x();
        Ok(())
    })
}

/// Copies the operator into a row-major buffer of `d_y * d_x` doubles.
///
/// # Safety
/// `op` must be a valid handle and `buf` must hold `cap` doubles.
#[no_mangle]
pub unsafe extern "C" fn svn_operator_to_dense(op: *const SvnOperator, buf: *mut f64, cap: usize) -> SvnStatus {
    guard(|| {
        let t = handle(op)?;
        let need = t.d_y() * t.d_x();
        if cap < need {
            return Err(Fail(SvnStatus::BufferTooSmall, format!("need {need} doubles, got {cap}")));
        }
        let dst = slice_mut(buf, need, "buffer")?;
        let m = t.materialize();
        for i in 0..t.d_y() {
            for j in 0..t.d_x() {
                dst[i * t.d_x() + j] = m[(i, j)];
            }
        }
        Ok(())
    })
}

/// Schatten norm of order `p` (`INFINITY` for the spectral norm).
///
/// # Safety
/// `op` must be a valid handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn svn_operator_schatten_norm(op: *const SvnOperator, p: f64, out: *mut f64) -> SvnStatus {
    guard(|| {
        let t = handle(op)?;
        let order = Order::new(p)?;
        if out.is_null() {
            return Err(null("output"));
        }
        *out = t.schatten_norm(order);
        Ok(())
    })
}

/// Writes the `min(d_y, d_x)` singular values, in nonincreasing order, to
/// `buf` and their count to `len`. If `cap` is too small only `len` is set.
///
/// # Safety
/// `op` must be a valid handle, `buf` must hold `cap` doubles, `len` writable.
#[no_mangle]
pub unsafe extern "C" fn svn_operator_spectrum(
    op: *const SvnOperator,
    buf: *mut f64,
    cap: usize,
    len: *mut usize,
) -> SvnStatus {
    guard(|| {
        let t = handle(op)?;
        if len.is_null() {
            return Err(null("length output"));
        }
        let spec = svnlearn::svd_spectrum(t);
        *len = spec.len();
        if cap < spec.len() {
            return Err(Fail(SvnStatus::BufferTooSmall, format!("need {} doubles, got {cap}", spec.len())));
        }
        slice_mut(buf, spec.len(), "buffer")?.copy_from_slice(spec.values());
        Ok(())
    })
}

/// `y = T x`.
///
/// # Safety
/// `x` must hold `d_x` doubles and `y` must hold `d_y` doubles.
#[no_mangle]
pub unsafe extern "C" fn svn_operator_apply(
    op: *const SvnOperator,
    x: *const f64,
    d_x: usize,
    y: *mut f64,
    d_y: usize,
) -> SvnStatus {
    guard(|| {
        let t = handle(op)?;
        let v = HilbertVector::new(slice(x, d_x, "x")?.to_vec())?;
        let r = t.apply(&v)?;
        if d_y != r.dim() {
            return Err(Fail(SvnStatus::Shape, format!("output has dimension {}, buffer holds {d_y}", r.dim())));
        }
        slice_mut(y, d_y, "y")?.copy_from_slice(r.coords());
        Ok(())
    })
}

/// Euclidean projection onto the Schatten ball of order `p` and `radius`.
///
/// # Safety
/// `op` must be a valid handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn svn_project_schatten(
    op: *const SvnOperator,
    p: f64,
    radius: f64,
    tol: f64,
    out: *mut *mut SvnOperator,
) -> SvnStatus {
    guard(|| {
        let t = handle(op)?;
        let ball = SchattenBall::new(Order::new(p)?, radius)?;
        emit(out, project_schatten(t, &ball, tol)?)
    })
}

/// Euclidean projection of a vector onto the lp ball; `out` may alias `v`.
///
/// # Safety
/// `v` and `out` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn svn_project_lp(
    v: *const f64,
    len: usize,
    p: f64,
    radius: f64,
    tol: f64,
    out: *mut f64,
) -> SvnStatus {
    guard(|| {
        let input = slice(v, len, "v")?.to_vec();
        let ball = LpBall::new(Order::new(p)?, radius)?;
        let proj = project_lp(&input, &ball, tol)?;
        slice_mut(out, len, "out")?.copy_from_slice(&proj);
        Ok(())
    })
}

/// Fits `min (1/N) Σ ‖y_n − T x_n‖²` over `‖T‖_{S_p} <= radius` with the
/// default solver settings. `x` is `n × d_x` and `y` is `n × d_y`, one sample
/// per row. Hitting the iteration cap is reported through
/// `report->converged`, not the status.
///
/// # Safety
/// `x`, `y` must hold `n * d_x` and `n * d_y` doubles; `out` must be
/// writable; `report` may be null.
#[no_mangle]
pub unsafe extern "C" fn svn_fit(
    x: *const f64,
    y: *const f64,
    n: usize,
    d_x: usize,
    d_y: usize,
    p: f64,
    radius: f64,
    out: *mut *mut SvnOperator,
    report: *mut SvnFitReport,
) -> SvnStatus {
    guard(|| {
        let xs = slice(x, checked_len(n, d_x)?, "x")?;
        let ys = slice(y, checked_len(n, d_y)?, "y")?;
        let xm = DMatrix::from_row_slice(n, d_x, xs).transpose();
        let ym = DMatrix::from_row_slice(n, d_y, ys).transpose();
        let data = TrainingSet::with_observed_bounds(xm, ym)?;
        let ball = SchattenBall::new(Order::new(p)?, radius)?;
        let f = fit(&data, ball, &SolverOptions::default())?;
        if let Some(r) = report.as_mut() {
            *r = SvnFitReport {
                iterations: f.report.iterations,
                final_risk: f.report.final_risk,
                converged: f.report.converged,
                active_constraint: f.report.active_constraint,
                schatten_norm: f.report.schatten_norm,
            };
        }
        emit(out, f.operator)
    })
}

/// Rademacher-complexity and excess-risk bounds for `n` samples.
///
/// # Safety
/// `rademacher` and `excess` must be writable.
#[no_mangle]
pub unsafe extern "C" fn svn_theorem_bounds(
    n: usize,
    p: f64,
    radius: f64,
    c_x: f64,
    c_y: f64,
    delta: f64,
    rademacher: *mut f64,
    excess: *mut f64,
) -> SvnStatus {
    guard(|| {
        if rademacher.is_null() || excess.is_null() {
            return Err(null("bound output"));
        }
        let ball = SchattenBall::new(Order::new(p)?, radius)?;
        let b = theorem_bounds(n, &ball, c_x, c_y, delta)?;
        *rademacher = b.rademacher;
        *excess = b.excess;
        Ok(())
    })
}

/// Reads an operator file.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn svn_operator_read(path: *const c_char, out: *mut *mut SvnOperator) -> SvnStatus {
    guard(|| {
        let path = path_arg(path)?;
        let file = File::open(&path).map_err(Error::from)?;
        emit(out, read_operator(BufReader::new(file))?)
    })
}

/// Writes an operator file.
///
/// # Safety
/// `op` must be a valid handle and `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn svn_operator_write(op: *const SvnOperator, path: *const c_char) -> SvnStatus {
    guard(|| {
        let t = handle(op)?;
        let path = path_arg(path)?;
        let file = File::create(&path).map_err(Error::from)?;
        write_operator(BufWriter::new(file), t)?;
        Ok(())
    })
}
