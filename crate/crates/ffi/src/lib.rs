//! C interface to `m4corr`.
//!
//! Every fallible function returns one of the `M4_*` status codes; on a
//! non-zero code [`m4_last_error`] describes the failure. Datasets are opaque
//! handles owned by the caller and released with [`m4_dataset_free`].
//! Output buffers are caller-allocated.

use std::cell::{OnceCell, RefCell};
use std::collections::HashSet;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use m4corr::correlator::{correlator_forecast, CorrelatorParams, ScanIndex};
use m4corr::dataset::{load_m4_info, load_m4_values};
use m4corr::{ensemble, forecasters, metrics, stats, Dataset, Error, Forecast, Method, TimeSeries};

pub const M4_OK: i32 = 0;
/// The correlator accepted no candidate.
pub const M4_NO_MATCH: i32 = 1;
pub const M4_ERR_NULL: i32 = -1;
pub const M4_ERR_INVALID: i32 = -2;
pub const M4_ERR_IO: i32 = -3;
pub const M4_ERR_PARSE: i32 = -4;
pub const M4_ERR_UNDEFINED: i32 = -5;
pub const M4_ERR_BUFFER: i32 = -6;
pub const M4_ERR_PANIC: i32 = -99;

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

struct Failure(i32, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::Io { .. } => M4_ERR_IO,
            Error::Csv { .. } | Error::Parse { .. } | Error::Json(_) => M4_ERR_PARSE,
            Error::UndefinedCorrelation(_) | Error::UndefinedMetric { .. } => M4_ERR_UNDEFINED,
            _ => M4_ERR_INVALID,
        };
        Failure(code, e.to_string())
    }
}

fn fail(code: i32, msg: impl Into<String>) -> Failure {
    Failure(code, msg.into())
}

fn guard(body: impl FnOnce() -> Result<i32, Failure>) -> i32 {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(code)) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            code
        }
        Ok(Err(Failure(code, msg))) => {
            set_error(msg);
            code
        }
        Err(_) => {
            set_error("internal panic");
            M4_ERR_PANIC
        }
    }
}

unsafe fn slice<'a>(ptr: *const f64, len: usize, name: &str) -> Result<&'a [f64], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if ptr.is_null() {
        return Err(fail(M4_ERR_NULL, format!("{name} is null")));
    }
    Ok(std::slice::from_raw_parts(ptr, len))
}

unsafe fn out_slice<'a>(ptr: *mut f64, len: usize, name: &str) -> Result<&'a mut [f64], Failure> {
    if len == 0 {
        return Ok(&mut []);
    }
    if ptr.is_null() {
        return Err(fail(M4_ERR_NULL, format!("{name} is null")));
    }
    Ok(std::slice::from_raw_parts_mut(ptr, len))
}

unsafe fn string<'a>(ptr: *const c_char, name: &str) -> Result<&'a str, Failure> {
    if ptr.is_null() {
        return Err(fail(M4_ERR_NULL, format!("{name} is null")));
    }
    CStr::from_ptr(ptr)
        .to_str()
        .map_err(|_| fail(M4_ERR_INVALID, format!("{name} is not valid UTF-8")))
}

unsafe fn out_ref<'a, T>(ptr: *mut T, name: &str) -> Result<&'a mut T, Failure> {
    ptr.as_mut()
        .ok_or_else(|| fail(M4_ERR_NULL, format!("{name} is null")))
}

fn copy_into(dst: &mut [f64], src: &[f64]) -> Result<(), Failure> {
    if dst.len() != src.len() {
        return Err(fail(
            M4_ERR_BUFFER,
            format!(
                "output buffer holds {} values, result has {}",
                dst.len(),
                src.len()
            ),
        ));
    }
    dst.copy_from_slice(src);
    Ok(())
}

/// Message for the last failed call on this thread, or NULL. Valid until the
/// next call into the library from the same thread.
#[no_mangle]
pub extern "C" fn m4_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(std::ptr::null(), |s| s.as_ptr()))
}

/// A loaded set of series.
pub struct M4Dataset {
    pending: Vec<TimeSeries>,
    ids: HashSet<String>,
    built: OnceCell<Dataset>,
}

impl M4Dataset {
    fn from_dataset(dataset: Dataset) -> Self {
        let ids = dataset.ids().map(str::to_string).collect();
        M4Dataset {
            pending: Vec::new(),
            ids,
            built: OnceCell::from(dataset),
        }
    }

    fn dataset(&self) -> &Dataset {
        self.built
            .get_or_init(|| Dataset::new(self.pending.clone()).expect("ids are checked on push"))
    }

    fn push(&mut self, series: TimeSeries) -> Result<(), Failure> {
        if self.ids.contains(&series.id) {
            return Err(Error::DuplicateId(series.id).into());
        }
        if let Some(d) = self.built.take() {
            self.pending = d.series().to_vec();
        }
        self.ids.insert(series.id.clone());
        self.pending.push(series);
        Ok(())
    }
}

/// Creates an empty dataset.
#[no_mangle]
pub extern "C" fn m4_dataset_new() -> *mut M4Dataset {
    Box::into_raw(Box::new(M4Dataset::from_dataset(Dataset::default())))
}

/// Loads an M4-format value file; `info_path` may be NULL.
///
/// # Safety
/// `path` and a non-NULL `info_path` must be NUL-terminated strings; `out`
/// must be writable.
#[no_mangle]
pub unsafe extern "C" fn m4_dataset_load(
    path: *const c_char,
    info_path: *const c_char,
    out: *mut *mut M4Dataset,
) -> i32 {
    guard(|| {
        let out = out_ref(out, "out")?;
        let path = string(path, "path")?;
        let mut dataset = load_m4_values(Path::new(path))?;
        if !info_path.is_null() {
            let info = string(info_path, "info_path")?;
            dataset.attach_meta(&load_m4_info(Path::new(info))?);
        }
        *out = Box::into_raw(Box::new(M4Dataset::from_dataset(dataset)));
        Ok(M4_OK)
    })
}

/// Appends a series. Ids must be unique.
///
/// # Safety
/// `ds` must come from this library; `id` must be NUL-terminated; `values`
/// must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn m4_dataset_push(
    ds: *mut M4Dataset,
    id: *const c_char,
    values: *const f64,
    len: usize,
) -> i32 {
    guard(|| {
        let ds = out_ref(ds, "ds")?;
        let id = string(id, "id")?;
        let values = slice(values, len, "values")?;
        if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
            return Err(fail(
                M4_ERR_INVALID,
                format!("series {id} holds non-finite value {bad}"),
            ));
        }
        ds.push(TimeSeries::new(id, values.to_vec()))?;
        Ok(M4_OK)
    })
}

/// Number of series; 0 for NULL.
///
/// # Safety
/// `ds` must be NULL or come from this library.
#[no_mangle]
pub unsafe extern "C" fn m4_dataset_len(ds: *const M4Dataset) -> usize {
    ds.as_ref().map_or(0, |d| d.dataset().len())
}

/// Length of the series at file position `index`.
///
/// # Safety
/// `ds` must come from this library and `out_len` must be writable.
#[no_mangle]
pub unsafe extern "C" fn m4_dataset_series_len(
    ds: *const M4Dataset,
    index: usize,
    out_len: *mut usize,
) -> i32 {
    guard(|| {
        let ds = ds.as_ref().ok_or_else(|| fail(M4_ERR_NULL, "ds is null"))?;
        let out_len = out_ref(out_len, "out_len")?;
        let s = ds
            .dataset()
            .series()
            .get(index)
            .ok_or_else(|| fail(M4_ERR_INVALID, format!("index {index} out of range")))?;
        *out_len = s.len();
        Ok(M4_OK)
    })
}

/// # Safety
/// `ds` must be NULL or come from this library, and is invalid afterwards.
#[no_mangle]
pub unsafe extern "C" fn m4_dataset_free(ds: *mut M4Dataset) {
    if !ds.is_null() {
        drop(Box::from_raw(ds));
    }
}

#[repr(C)]
#[derive(Clone, Copy, Debug)]
pub struct M4CorrelatorParams {
    pub window: usize,
    pub r_threshold: f64,
    /// Values `<= 0` or NaN disable the spread check.
    pub std_ratio: f64,
    pub bug1: bool,
    pub bug2: bool,
    pub past_only: bool,
    pub include_self: bool,
    /// Forecast length; 0 means `window`.
    pub continuation: usize,
}

impl From<&M4CorrelatorParams> for CorrelatorParams {
    fn from(p: &M4CorrelatorParams) -> Self {
        CorrelatorParams {
            window: p.window,
            r_threshold: p.r_threshold,
            std_ratio: (p.std_ratio > 0.0).then_some(p.std_ratio),
            bug1: p.bug1,
            bug2: p.bug2,
            past_only: p.past_only,
            include_self: p.include_self,
            continuation: (p.continuation > 0).then_some(p.continuation),
        }
    }
}

#[no_mangle]
pub extern "C" fn m4_correlator_params_default() -> M4CorrelatorParams {
    let d = CorrelatorParams::default();
    M4CorrelatorParams {
        window: d.window,
        r_threshold: d.r_threshold,
        std_ratio: d.std_ratio.unwrap_or(0.0),
        bug1: d.bug1,
        bug2: d.bug2,
        past_only: d.past_only,
        include_self: d.include_self,
        continuation: 0,
    }
}

#[repr(C)]
#[derive(Clone, Copy, Debug, Default)]
pub struct M4Match {
    /// File position of the source series.
    pub source: usize,
    /// End (exclusive) of the matched window in the source.
    pub tau: usize,
    pub r: f64,
    /// 1 if the source region reaches the target's forecast dates, 0 if not,
    /// -1 when dates are unknown.
    pub used_future: i32,
}

/// Correlator forecast for the series at `target`. Writes `out_len` values
/// (which must equal the continuation length) and returns `M4_OK`, or
/// returns `M4_NO_MATCH` and leaves the outputs untouched.
///
/// # Safety
/// `ds` must come from this library, `params` must be readable, `out` must
/// hold `out_len` doubles and `out_match` may be NULL.
#[no_mangle]
pub unsafe extern "C" fn m4_correlator_forecast(
    ds: *const M4Dataset,
    target: usize,
    params: *const M4CorrelatorParams,
    out: *mut f64,
    out_len: usize,
    out_match: *mut M4Match,
) -> i32 {
    guard(|| {
        let ds = ds.as_ref().ok_or_else(|| fail(M4_ERR_NULL, "ds is null"))?;
        let params: CorrelatorParams = params
            .as_ref()
            .ok_or_else(|| fail(M4_ERR_NULL, "params is null"))?
            .into();
        params.validate()?;
        if target >= ds.dataset().len() {
            return Err(fail(
                M4_ERR_INVALID,
                format!("target {target} out of range"),
            ));
        }
        if out_len != params.continuation_len() {
            return Err(fail(
                M4_ERR_BUFFER,
                format!(
                    "output buffer holds {out_len} values, forecast has {}",
                    params.continuation_len()
                ),
            ));
        }
        let out = out_slice(out, out_len, "out")?;
        let index = ScanIndex::new(ds.dataset(), params.window);
        let Some(m) = correlator_forecast(&index, target, &params) else {
            return Ok(M4_NO_MATCH);
        };
        copy_into(out, &m.forecast)?;
        if let Some(dst) = out_match.as_mut() {
            *dst = M4Match {
                source: m.source,
                tau: m.tau,
                r: m.r,
                used_future: m.used_future.map_or(-1, i32::from),
            };
        }
        Ok(M4_OK)
    })
}

/// Pearson correlation of two length-`n` arrays.
///
/// # Safety
/// `a` and `b` must hold `n` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn m4_pearson(a: *const f64, b: *const f64, n: usize, out: *mut f64) -> i32 {
    guard(|| {
        let r = stats::pearson(slice(a, n, "a")?, slice(b, n, "b")?)?;
        *out_ref(out, "out")? = r;
        Ok(M4_OK)
    })
}

unsafe fn forecast_with(
    values: *const f64,
    n: usize,
    h: usize,
    out: *mut f64,
    f: impl FnOnce(&[f64], usize) -> m4corr::Result<Vec<f64>>,
) -> i32 {
    guard(|| {
        let values = slice(values, n, "values")?;
        let out = out_slice(out, h, "out")?;
        copy_into(out, &f(values, h)?)?;
        Ok(M4_OK)
    })
}

/// Repeats the last value `h` times.
///
/// # Safety
/// `values` must hold `n` doubles and `out` `h` doubles.
#[no_mangle]
pub unsafe extern "C" fn m4_naive_forecast(
    values: *const f64,
    n: usize,
    h: usize,
    out: *mut f64,
) -> i32 {
    forecast_with(values, n, h, out, forecasters::naive_forecast)
}

/// Simple exponential smoothing with the smoothing constant chosen on a
/// grid; the chosen value is written to `out_alpha` unless it is NULL.
///
/// # Safety
/// `values` must hold `n` doubles and `out` `h` doubles.
#[no_mangle]
pub unsafe extern "C" fn m4_ses_forecast(
    values: *const f64,
    n: usize,
    h: usize,
    out: *mut f64,
    out_alpha: *mut f64,
) -> i32 {
    forecast_with(values, n, h, out, |v, h| {
        let (alpha, f) = forecasters::ses_auto(v, h)?;
        if let Some(a) = out_alpha.as_mut() {
            *a = alpha;
        }
        Ok(f)
    })
}

/// Decomposition-based forecast.
///
/// # Safety
/// `values` must hold `n` doubles and `out` `h` doubles.
#[no_mangle]
pub unsafe extern "C" fn m4_custom_forecast(
    values: *const f64,
    n: usize,
    h: usize,
    out: *mut f64,
) -> i32 {
    forecast_with(values, n, h, out, forecasters::custom_forecast)
}

/// Pointwise median of `m` forecasts stored row by row (`m * h` values).
///
/// # Safety
/// `forecasts` must hold `m * h` doubles and `out` `h` doubles.
#[no_mangle]
pub unsafe extern "C" fn m4_median_combine(
    forecasts: *const f64,
    m: usize,
    h: usize,
    out: *mut f64,
) -> i32 {
    guard(|| {
        let total = m
            .checked_mul(h)
            .ok_or_else(|| fail(M4_ERR_INVALID, "m * h overflows"))?;
        let all = slice(forecasts, total, "forecasts")?;
        let rows: Vec<Forecast> = (0..m)
            .map(|i| Forecast::new("", all[i * h..(i + 1) * h].to_vec(), Method::Ensemble))
            .collect();
        let med = ensemble::median_combine(&rows)?;
        copy_into(out_slice(out, h, "out")?, &med.values)?;
        Ok(M4_OK)
    })
}

/// Mean absolute scaled error with seasonal lag `m`.
///
/// # Safety
/// `train` must hold `n_train` doubles, `actual` and `forecast` `h` doubles.
#[no_mangle]
pub unsafe extern "C" fn m4_mase(
    train: *const f64,
    n_train: usize,
    actual: *const f64,
    forecast: *const f64,
    h: usize,
    m: usize,
    out: *mut f64,
) -> i32 {
    guard(|| {
        let v = metrics::mase(
            slice(train, n_train, "train")?,
            slice(actual, h, "actual")?,
            slice(forecast, h, "forecast")?,
            m,
        )?;
        *out_ref(out, "out")? = v;
        Ok(M4_OK)
    })
}

/// Symmetric MAPE in percent.
///
/// # Safety
/// `actual` and `forecast` must hold `h` doubles.
#[no_mangle]
pub unsafe extern "C" fn m4_smape(
    actual: *const f64,
    forecast: *const f64,
    h: usize,
    out: *mut f64,
) -> i32 {
    guard(|| {
        let v = metrics::smape(slice(actual, h, "actual")?, slice(forecast, h, "forecast")?)?;
        *out_ref(out, "out")? = v;
        Ok(M4_OK)
    })
}
