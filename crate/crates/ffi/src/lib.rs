//! C ABI over `svi-core`.
//!
//! Every fallible function returns an [`SviStatus`]; on failure a message is
//! available from [`svi_last_error`] on the same thread. Objects are opaque
//! handles released with their matching `*_free` function. Strings returned
//! by the library are released with [`svi_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use serde::Deserialize;
use svi_core::data::{load_csv, Provenance, RegressionDataset, TargetColumn};
use svi_core::eval::{posterior_mean_predict, sparsity_summary};
use svi_core::rates::{estimation_rate, variational_error, RateInputs};
use svi_core::rng::seeded;
use svi_core::select::{select_width, WidthCandidate};
use svi_core::teacher::{generate_teacher, synthesize, TeacherNetwork};
use svi_core::train::train_width;
use svi_core::{NetworkShape, PriorConfig, SviError, TrainConfig, VariationalParams};

/// Status codes returned by every fallible call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SviStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Shape = 3,
    Training = 4,
    Selection = 5,
    Parse = 6,
    Io = 7,
    Config = 8,
    Panic = 9,
}

impl From<&SviError> for SviStatus {
    fn from(e: &SviError) -> Self {
        match e {
            SviError::Shape(_) => SviStatus::Shape,
            SviError::Argument(_) => SviStatus::InvalidArgument,
            SviError::Training { .. } => SviStatus::Training,
            SviError::Selection => SviStatus::Selection,
            SviError::Parse { .. } | SviError::MissingColumn(_) | SviError::Csv(_) => {
                SviStatus::Parse
            }
            SviError::Config(_) | SviError::Json(_) => SviStatus::Config,
            SviError::Io { .. } => SviStatus::Io,
        }
    }
}

/// A regression dataset.
pub struct SviDataset(RegressionDataset);

/// A sparse teacher network.
pub struct SviTeacher(TeacherNetwork);

/// A trained variational posterior with its network shape.
pub struct SviModel {
    shape: NetworkShape,
    params: VariationalParams,
    tau: f64,
    report: CString,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

struct Failure(SviStatus, String);

impl From<SviError> for Failure {
    fn from(e: SviError) -> Self {
        Failure(SviStatus::from(&e), e.to_string())
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Failure(SviStatus::Config, e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(SviStatus::NullPointer, format!("{what} is null"))
}

fn invalid(msg: impl Into<String>) -> Failure {
    Failure(SviStatus::InvalidArgument, msg.into())
}

/// Runs `f`, translating errors and panics into a status code.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> SviStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            SviStatus::Ok
        }
        Ok(Err(Failure(code, msg))) => {
            set_error(&msg);
            code
        }
        Err(_) => {
            set_error("internal panic");
            SviStatus::Panic
        }
    }
}

unsafe fn slice<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| invalid(format!("{what} is not valid UTF-8")))
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn put<T>(out: *mut *mut T, value: T) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null("output pointer"));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

/// Message for the most recent failure on this thread, or an empty string.
/// Valid until the next library call on the same thread.
#[no_mangle]
pub extern "C" fn svi_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Releases a string returned by the library.
///
/// # Safety
/// `s` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn svi_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

// ---------------------------------------------------------------- datasets

/// Copies `n_rows` x `n_features` row-major inputs and `n_rows` targets.
///
/// # Safety
/// `x` must hold `n_rows * n_features` values and `y` `n_rows` values.
#[no_mangle]
pub unsafe extern "C" fn svi_dataset_new(
    x: *const f64,
    y: *const f64,
    n_rows: usize,
    n_features: usize,
    out: *mut *mut SviDataset,
) -> SviStatus {
    guard(|| {
        let len = n_rows
            .checked_mul(n_features)
            .ok_or_else(|| invalid("dataset size overflows"))?;
        let x = slice(x, len, "x")?.to_vec();
        let y = slice(y, n_rows, "y")?.to_vec();
        let ds = RegressionDataset::new(n_features, x, y, 1.0, Provenance::Csv)?;
        put(out, SviDataset(ds))
    })
}

/// Loads a numeric CSV with a header. `target` is a column name or an
/// integer index (negative counts from the end); null means the last column.
///
/// # Safety
/// `path` and `target` (if non-null) must be NUL-terminated strings.
#[no_mangle]
pub unsafe extern "C" fn svi_dataset_load_csv(
    path: *const c_char,
    target: *const c_char,
    out: *mut *mut SviDataset,
) -> SviStatus {
    guard(|| {
        let path = str_arg(path, "path")?;
        let target = if target.is_null() {
            TargetColumn::Index(-1)
        } else {
            TargetColumn::parse(str_arg(target, "target")?)
        };
        put(out, SviDataset(load_csv(Path::new(path), &target)?))
    })
}

/// # Safety
/// `ds` must be a live dataset handle or null.
#[no_mangle]
pub unsafe extern "C" fn svi_dataset_rows(ds: *const SviDataset) -> usize {
    ds.as_ref().map_or(0, |d| d.0.len())
}

/// # Safety
/// `ds` must be a live dataset handle or null.
#[no_mangle]
pub unsafe extern "C" fn svi_dataset_features(ds: *const SviDataset) -> usize {
    ds.as_ref().map_or(0, |d| d.0.n_features)
}

/// # Safety
/// `ds` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn svi_dataset_free(ds: *mut SviDataset) {
    if !ds.is_null() {
        drop(Box::from_raw(ds));
    }
}

// ---------------------------------------------------------------- teachers

/// Draws a teacher with weights from `U(weight_low, weight_high)`, each
/// zeroed with probability `zero_rate`.
///
/// # Safety
/// `widths` must hold `n_hidden` values.
#[no_mangle]
pub unsafe extern "C" fn svi_teacher_generate(
    input_dim: usize,
    widths: *const usize,
    n_hidden: usize,
    weight_low: f64,
    weight_high: f64,
    zero_rate: f64,
    seed: u64,
    out: *mut *mut SviTeacher,
) -> SviStatus {
    guard(|| {
        let widths = slice(widths, n_hidden, "widths")?.to_vec();
        let shape = NetworkShape::regression(input_dim, widths)?;
        let t = generate_teacher(&shape, weight_low, weight_high, zero_rate, &mut seeded(seed))?;
        put(out, SviTeacher(t))
    })
}

/// Samples `n` rows from the teacher with Gaussian noise `sigma_eps`.
///
/// # Safety
/// `teacher` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn svi_teacher_synthesize(
    teacher: *const SviTeacher,
    n: usize,
    sigma_eps: f64,
    seed: u64,
    out: *mut *mut SviDataset,
) -> SviStatus {
    guard(|| {
        let t = handle(teacher, "teacher")?;
        put(out, SviDataset(synthesize(&t.0, n, sigma_eps, &mut seeded(seed))?))
    })
}

/// # Safety
/// `teacher` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn svi_teacher_nonzero_count(teacher: *const SviTeacher) -> usize {
    teacher.as_ref().map_or(0, |t| t.0.nonzero_count)
}

/// # Safety
/// `teacher` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn svi_teacher_free(teacher: *mut SviTeacher) {
    if !teacher.is_null() {
        drop(Box::from_raw(teacher));
    }
}

// ---------------------------------------------------------------- models

#[derive(Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct FitConfig {
    prior: PriorConfig,
    train: TrainConfig,
    candidates: Vec<Vec<usize>>,
}

unsafe fn fit_config(json: *const c_char) -> Result<FitConfig, Failure> {
    if json.is_null() {
        return Ok(FitConfig::default());
    }
    Ok(serde_json::from_str(str_arg(json, "config")?)?)
}

/// Trains one architecture. `config_json` may be null or a JSON object with
/// optional `prior` and `train` sections.
///
/// # Safety
/// `data` must be a live handle, `widths` must hold `n_hidden` values and
/// `config_json` must be null or NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn svi_train(
    data: *const SviDataset,
    widths: *const usize,
    n_hidden: usize,
    config_json: *const c_char,
    out: *mut *mut SviModel,
) -> SviStatus {
    guard(|| {
        let data = &handle(data, "data")?.0;
        let widths = slice(widths, n_hidden, "widths")?.to_vec();
        let cfg = fit_config(config_json)?;
        let shape = NetworkShape::regression(data.n_features, widths)?;
        let outcome = train_width(data, &shape, &cfg.prior, &cfg.train)?;
        let report = serde_json::to_string(&outcome.report)?;
        put(
            out,
            SviModel {
                shape,
                params: outcome.params,
                tau: cfg.prior.tau,
                report: CString::new(report).unwrap_or_default(),
            },
        )
    })
}

/// Trains every entry of the config's `candidates` list (hidden widths)
/// and returns the model with the best penalized ELBO. The model's report
/// is the full selection report.
///
/// # Safety
/// As for [`svi_train`].
#[no_mangle]
pub unsafe extern "C" fn svi_select(
    data: *const SviDataset,
    config_json: *const c_char,
    parallel: usize,
    out: *mut *mut SviModel,
) -> SviStatus {
    guard(|| {
        let data = &handle(data, "data")?.0;
        let cfg = fit_config(config_json)?;
        let cands = cfg
            .candidates
            .into_iter()
            .map(WidthCandidate::explicit)
            .collect::<Result<Vec<_>, _>>()?;
        let sel = select_width(data, &cands, &cfg.prior, &cfg.train, None, parallel.max(1))?;
        let report = serde_json::to_string(&sel.report)?;
        put(
            out,
            SviModel {
                shape: sel.shape,
                params: sel.params,
                tau: cfg.prior.tau,
                report: CString::new(report).unwrap_or_default(),
            },
        )
    })
}

/// Posterior-mean predictions averaged over `draws` samples, written to
/// `out_y` (length `n_rows`).
///
/// # Safety
/// `x` must hold `n_rows * input_dim` values and `out_y` room for `n_rows`.
#[no_mangle]
pub unsafe extern "C" fn svi_model_predict(
    model: *const SviModel,
    x: *const f64,
    n_rows: usize,
    draws: usize,
    seed: u64,
    out_y: *mut f64,
) -> SviStatus {
    guard(|| {
        let m = handle(model, "model")?;
        let len = n_rows
            .checked_mul(m.shape.input_dim)
            .ok_or_else(|| invalid("input size overflows"))?;
        let x = slice(x, len, "x")?;
        if n_rows > 0 && out_y.is_null() {
            return Err(null("out_y"));
        }
        let pred = posterior_mean_predict(&m.params, &m.shape, x, draws, m.tau, &mut seeded(seed))?;
        if n_rows > 0 {
            ptr::copy_nonoverlapping(pred.as_ptr(), out_y, n_rows);
        }
        Ok(())
    })
}

/// # Safety
/// `model` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn svi_model_input_dim(model: *const SviModel) -> usize {
    model.as_ref().map_or(0, |m| m.shape.input_dim)
}

/// # Safety
/// `model` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn svi_model_param_count(model: *const SviModel) -> usize {
    model.as_ref().map_or(0, |m| m.params.len())
}

/// Sum of inclusion probabilities; NaN for a null handle.
///
/// # Safety
/// `model` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn svi_model_expected_edges(model: *const SviModel) -> f64 {
    model
        .as_ref()
        .map_or(f64::NAN, |m| sparsity_summary(&m.params).expected_edges)
}

/// Training or selection report as JSON. Borrowed; valid while the model lives.
///
/// # Safety
/// `model` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn svi_model_report(model: *const SviModel) -> *const c_char {
    model.as_ref().map_or(ptr::null(), |m| m.report.as_ptr())
}

/// Shape and variational parameters as a JSON string owned by the caller
/// (release with [`svi_string_free`]); null on failure.
///
/// # Safety
/// `model` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn svi_model_to_json(model: *const SviModel) -> *mut c_char {
    let Some(m) = model.as_ref() else {
        set_error("model is null");
        return ptr::null_mut();
    };
    let value = serde_json::json!({
        "shape": m.shape,
        "mu": m.params.mu,
        "sigma_raw": m.params.sigma_raw,
        "nu_raw": m.params.nu_raw,
        "tau": m.tau,
    });
    CString::new(value.to_string()).map_or(ptr::null_mut(), CString::into_raw)
}

/// # Safety
/// `model` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn svi_model_free(model: *mut SviModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

// ---------------------------------------------------------------- rates

/// Variational error `r_n` and estimation rate `eps_n` (constant 1,
/// log exponent 1) for depth `depth`, width `width`, sparsity `sparsity`,
/// sample size `n`, input dimension `input_dim` and weight bound `bound`.
///
/// # Safety
/// `out_r` and `out_eps` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn svi_rates(
    depth: u32,
    width: f64,
    sparsity: f64,
    n: f64,
    input_dim: u32,
    bound: f64,
    out_r: *mut f64,
    out_eps: *mut f64,
) -> SviStatus {
    guard(|| {
        if out_r.is_null() || out_eps.is_null() {
            return Err(null("output pointer"));
        }
        let inp = RateInputs {
            bound,
            ..RateInputs::new(depth, width, sparsity, n, input_dim)
        };
        let r = variational_error(&inp)?;
        let e = estimation_rate(&inp)?;
        *out_r = r;
        *out_eps = e;
        Ok(())
    })
}
