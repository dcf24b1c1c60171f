//! C ABI over the `bsr` library.
//!
//! Every fallible function returns a [`BsrStatus`]. On failure a message is
//! stored per thread and can be read with [`bsr_last_error_message`].
//! Models and networks are opaque handles released with their `_free`
//! function. Matrices cross the boundary as row-major `double` buffers.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use bsr::blocksparse::{MMVSignal, MeasurementSet};
use bsr::lbista::{self, Mode, NetworkParams};
use bsr::linop::{ConvKernel, DenseModel, LinearModel};
use bsr::{bista, blocksparse, io, metrics, Error};
use ndarray::Array2;

/// Result codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BsrStatus {
    Ok = 0,
    InvalidArgument = 1,
    Dimension = 2,
    Numerical = 3,
    Io = 4,
    Format = 5,
    Config = 6,
    ZeroGroundTruth = 7,
    TooLarge = 8,
    NullPointer = 9,
    Panic = 10,
}

/// Network weight sharing.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BsrMode {
    Tied = 0,
    Untied = 1,
}

/// Opaque linear measurement model.
pub struct BsrModel(LinearModel);

/// Opaque LBISTA network.
pub struct BsrParams(NetworkParams);

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(e: &Error) -> BsrStatus {
    match e {
        Error::Dimension { .. } => BsrStatus::Dimension,
        Error::InvalidArgument(_) => BsrStatus::InvalidArgument,
        Error::TooLarge { .. } => BsrStatus::TooLarge,
        Error::ZeroGroundTruth => BsrStatus::ZeroGroundTruth,
        Error::Numerical { .. } => BsrStatus::Numerical,
        Error::Config(_) => BsrStatus::Config,
        Error::Format { .. } => BsrStatus::Format,
        Error::Io { .. } => BsrStatus::Io,
    }
}

enum Failure {
    Lib(Error),
    Null(&'static str),
    Shape(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

type FfiResult<T> = std::result::Result<T, Failure>;

/// Runs `f`, translating errors and panics into status codes.
fn guard(f: impl FnOnce() -> FfiResult<()>) -> BsrStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            BsrStatus::Ok
        }
        Ok(Err(Failure::Lib(e))) => {
            set_error(&e.to_string());
            status_of(&e)
        }
        Ok(Err(Failure::Null(what))) => {
            set_error(&format!("null pointer: {what}"));
            BsrStatus::NullPointer
        }
        Ok(Err(Failure::Shape(msg))) => {
            set_error(&msg);
            BsrStatus::Dimension
        }
        Err(_) => {
            set_error("internal panic");
            BsrStatus::Panic
        }
    }
}

unsafe fn slice<'a>(p: *const f64, len: usize, what: &'static str) -> FfiResult<&'a [f64]> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(Failure::Null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn slice_mut<'a>(p: *mut f64, len: usize, what: &'static str) -> FfiResult<&'a mut [f64]> {
    if p.is_null() {
        return Err(Failure::Null(what));
    }
    Ok(std::slice::from_raw_parts_mut(p, len))
}

unsafe fn handle<'a, T>(p: *const T, what: &'static str) -> FfiResult<&'a T> {
    p.as_ref().ok_or(Failure::Null(what))
}

unsafe fn path<'a>(p: *const c_char) -> FfiResult<&'a str> {
    if p.is_null() {
        return Err(Failure::Null("path"));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure::Lib(Error::InvalidArgument("path is not valid UTF-8".into())))
}

fn matrix(values: &[f64], shape: (usize, usize)) -> FfiResult<Array2<f64>> {
    if values.len() != shape.0 * shape.1 {
        return Err(Failure::Shape(format!("buffer holds {} values, expected {} x {}", values.len(), shape.0, shape.1)));
    }
    Ok(Array2::from_shape_vec(shape, values.to_vec()).unwrap())
}

fn write_out(out: &mut [f64], values: &Array2<f64>) -> FfiResult<()> {
    if out.len() != values.len() {
        return Err(Failure::Shape(format!("output buffer holds {} values, expected {}", out.len(), values.len())));
    }
    out.iter_mut().zip(values.iter()).for_each(|(o, v)| *o = *v);
    Ok(())
}

unsafe fn store<T>(out: *mut *mut T, value: T) -> FfiResult<()> {
    if out.is_null() {
        return Err(Failure::Null("out"));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

/// Message of the last failed call on this thread; empty after a success.
/// The pointer stays valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn bsr_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn bsr_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Convolution model with `n_taps` (odd) taps acting on `n_r x n_meas` signals.
///
/// # Safety
/// `taps` must point to `n_taps` doubles and `out` to writable storage.
#[no_mangle]
pub unsafe extern "C" fn bsr_model_conv_new(
    taps: *const f64,
    n_taps: usize,
    n_r: usize,
    n_meas: usize,
    out: *mut *mut BsrModel,
) -> BsrStatus {
    guard(|| {
        let taps = slice(taps, n_taps, "taps")?;
        let model = LinearModel::conv(ConvKernel::new(taps.to_vec())?, n_r, n_meas)?;
        store(out, BsrModel(model))
    })
}

/// Dense model from a row-major `n_d x (n_r * n_meas)` matrix.
///
/// # Safety
/// `entries` must point to `n_d * n_r * n_meas` doubles and `out` to
/// writable storage.
#[no_mangle]
pub unsafe extern "C" fn bsr_model_dense_new(
    entries: *const f64,
    n_d: usize,
    n_r: usize,
    n_meas: usize,
    out: *mut *mut BsrModel,
) -> BsrStatus {
    guard(|| {
        let cols = n_r * n_meas;
        let values = slice(entries, n_d * cols, "entries")?;
        let a = matrix(values, (n_d, cols))?;
        store(out, BsrModel(LinearModel::dense(DenseModel::new(a, n_r, n_meas)?)))
    })
}

/// Loads a model from a manifest file or a directory holding `model.json`.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn bsr_model_load(path_: *const c_char, out: *mut *mut BsrModel) -> BsrStatus {
    guard(|| {
        let p = path(path_)?;
        store(out, BsrModel(io::load_model(p)?))
    })
}

/// Releases a model. Null is ignored.
///
/// # Safety
/// `model` must come from a `bsr_model_*` constructor and not be used again.
#[no_mangle]
pub unsafe extern "C" fn bsr_model_free(model: *mut BsrModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Signal `(rows, cols)` and data `(rows, cols)` shapes of a model.
///
/// # Safety
/// All pointers must be valid; `model` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn bsr_model_shapes(
    model: *const BsrModel,
    signal_rows: *mut usize,
    signal_cols: *mut usize,
    data_rows: *mut usize,
    data_cols: *mut usize,
) -> BsrStatus {
    guard(|| {
        let m = &handle(model, "model")?.0;
        if signal_rows.is_null() || signal_cols.is_null() || data_rows.is_null() || data_cols.is_null() {
            return Err(Failure::Null("shape outputs"));
        }
        let (sr, sc) = m.signal_shape();
        let (dr, dc) = m.data_shape();
        *signal_rows = sr;
        *signal_cols = sc;
        *data_rows = dr;
        *data_cols = dc;
        Ok(())
    })
}

/// Upper bound on the squared operator norm.
///
/// # Safety
/// `model` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn bsr_model_lipschitz(model: *const BsrModel, out: *mut f64) -> BsrStatus {
    guard(|| {
        let m = &handle(model, "model")?.0;
        if out.is_null() {
            return Err(Failure::Null("out"));
        }
        *out = m.lipschitz_bound();
        Ok(())
    })
}

/// Runs `iters` Block-ISTA iterations. `gamma <= 0` selects `1/L`.
/// `data` has the model's data shape and `out` its signal shape.
///
/// # Safety
/// Buffers must hold `data_len` and `out_len` doubles.
#[no_mangle]
pub unsafe extern "C" fn bsr_bista_solve(
    model: *const BsrModel,
    data: *const f64,
    data_len: usize,
    lambda: f64,
    gamma: f64,
    iters: usize,
    out: *mut f64,
    out_len: usize,
) -> BsrStatus {
    guard(|| {
        let m = &handle(model, "model")?.0;
        let t = MeasurementSet::new(matrix(slice(data, data_len, "data")?, m.data_shape())?)?;
        let gamma = if gamma > 0.0 { gamma } else { bista::default_gamma(m) };
        let (x, _) = bista::bista_solve(m, &t, lambda, gamma, iters, None)?;
        write_out(slice_mut(out, out_len, "out")?, x.values())
    })
}

/// Untrained network reproducing Block-ISTA with `(lambda0, gamma)`.
///
/// # Safety
/// `model` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn bsr_params_init(
    model: *const BsrModel,
    gamma: f64,
    lambda0: f64,
    layers: usize,
    mode: BsrMode,
    out: *mut *mut BsrParams,
) -> BsrStatus {
    guard(|| {
        let m = &handle(model, "model")?.0;
        let mode = match mode {
            BsrMode::Tied => Mode::Tied,
            BsrMode::Untied => Mode::Untied,
        };
        store(out, BsrParams(lbista::init_params(m, gamma, lambda0, layers, mode)?))
    })
}

/// Loads trained parameters from a directory or `params.json`.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn bsr_params_load(path_: *const c_char, out: *mut *mut BsrParams) -> BsrStatus {
    guard(|| {
        let p = path(path_)?;
        store(out, BsrParams(io::load_params(p)?))
    })
}

/// Writes parameters into a directory.
///
/// # Safety
/// `params` must be a live handle and `path` NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn bsr_params_save(params: *const BsrParams, path_: *const c_char) -> BsrStatus {
    guard(|| {
        let p = &handle(params, "params")?.0;
        io::save_params(path(path_)?, p, serde_json::Value::Null)?;
        Ok(())
    })
}

/// Number of layers of a network, or 0 for a null handle.
///
/// # Safety
/// `params` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn bsr_params_layers(params: *const BsrParams) -> usize {
    params.as_ref().map(|p| p.0.layers()).unwrap_or(0)
}

/// Releases a network. Null is ignored.
///
/// # Safety
/// `params` must come from a `bsr_params_*` constructor and not be used again.
#[no_mangle]
pub unsafe extern "C" fn bsr_params_free(params: *mut BsrParams) {
    if !params.is_null() {
        drop(Box::from_raw(params));
    }
}

/// Network output after `depth` layers; a negative depth applies all layers.
///
/// # Safety
/// Buffers must hold `data_len` and `out_len` doubles.
#[no_mangle]
pub unsafe extern "C" fn bsr_lbista_forward(
    params: *const BsrParams,
    data: *const f64,
    data_len: usize,
    depth: i64,
    out: *mut f64,
    out_len: usize,
) -> BsrStatus {
    guard(|| {
        let p = &handle(params, "params")?.0;
        let y = MeasurementSet::new(matrix(slice(data, data_len, "data")?, p.layout.data_shape())?)?;
        let depth = usize::try_from(depth).ok();
        let x = lbista::forward(p, &y, depth)?;
        write_out(slice_mut(out, out_len, "out")?, x.values())
    })
}

/// Block soft threshold of a row-major `rows x cols` matrix; each row is a block.
///
/// # Safety
/// `values` and `out` must hold `rows * cols` doubles; they may alias.
#[no_mangle]
pub unsafe extern "C" fn bsr_block_soft_threshold(
    values: *const f64,
    rows: usize,
    cols: usize,
    lambda: f64,
    out: *mut f64,
) -> BsrStatus {
    guard(|| {
        let x = MMVSignal::new(matrix(slice(values, rows * cols, "values")?, (rows, cols))?)?;
        let y = blocksparse::block_soft_threshold(&x, lambda);
        write_out(slice_mut(out, rows * cols, "out")?, y.values())
    })
}

/// NMSE in dB of `estimate` against `truth`, both of length `len`.
/// An exact match yields negative infinity.
///
/// # Safety
/// Both buffers must hold `len` doubles and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn bsr_nmse_db(estimate: *const f64, truth: *const f64, len: usize, out: *mut f64) -> BsrStatus {
    guard(|| {
        let e = MMVSignal::new(matrix(slice(estimate, len, "estimate")?, (len, 1))?)?;
        let t = MMVSignal::new(matrix(slice(truth, len, "truth")?, (len, 1))?)?;
        let v = metrics::nmse_db(&e, &t)?;
        if out.is_null() {
            return Err(Failure::Null("out"));
        }
        *out = v;
        Ok(())
    })
}

/// Normalized 1-Wasserstein distance between two nonnegative profiles.
///
/// # Safety
/// Both buffers must hold `len` doubles and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn bsr_wasserstein1(u: *const f64, v: *const f64, len: usize, out: *mut f64) -> BsrStatus {
    guard(|| {
        let d = metrics::wasserstein1(slice(u, len, "u")?, slice(v, len, "v")?)?;
        if out.is_null() {
            return Err(Failure::Null("out"));
        }
        *out = d;
        Ok(())
    })
}
