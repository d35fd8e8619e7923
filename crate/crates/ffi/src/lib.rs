//! C ABI over the aisqa library.
//!
//! Every fallible call returns an [`AisqaStatus`] and writes results through
//! out-pointers. On failure the message is kept per thread and can be read
//! with [`aisqa_last_error`]. Panics never cross the boundary.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use aisqa::ais::{AisRecord, Mmsi, RecordStore, TimeWindow};
use aisqa::eval::{judge, JudgeConfig, Verdict};
use aisqa::geo::BoundingBox;
use aisqa::oracle::predict_position;
use aisqa::stats::{normal_cdf, two_proportion_z, wilson_interval};
use aisqa::train::{scaled_frequency, smoothed_ce_loss, RopeScalingConfig, SmoothingConfig};
use aisqa::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AisqaStatus {
    Ok = 0,
    InvalidArgument = 1,
    Data = 2,
    Upstream = 3,
    NullPointer = 4,
    Panic = 5,
}

/// Opaque record store.
pub struct AisqaStore {
    inner: RecordStore,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct AisqaInterval {
    pub point: f64,
    pub center: f64,
    pub low: f64,
    pub high: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct AisqaZTest {
    pub p1: f64,
    pub p2: f64,
    pub p_pool: f64,
    pub z: f64,
    pub p_value: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct AisqaRopeConfig {
    pub base: f64,
    pub scale: f64,
    pub original_context: u64,
    pub target_context: u64,
    pub head_dim: usize,
    pub ramp_low: f64,
    pub ramp_high: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct AisqaBox {
    pub lat_min: f64,
    pub lat_max: f64,
    pub lon_min: f64,
    pub lon_max: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> AisqaStatus {
    match e.exit_code() {
        1 => AisqaStatus::InvalidArgument,
        3 => AisqaStatus::Upstream,
        _ => AisqaStatus::Data,
    }
}

/// Run `f`, recording any error or panic.
fn guard(f: impl FnOnce() -> Result<(), AisqaStatus>) -> AisqaStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => AisqaStatus::Ok,
        Ok(Err(s)) => s,
        Err(_) => {
            set_error("panic inside aisqa".into());
            AisqaStatus::Panic
        }
    }
}

fn fail(e: Error) -> AisqaStatus {
    let s = status_of(&e);
    set_error(e.to_string());
    s
}

fn null(what: &str) -> AisqaStatus {
    set_error(format!("{what} is null"));
    AisqaStatus::NullPointer
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, AisqaStatus> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p).to_str().map_err(|_| {
        set_error(format!("{what} is not UTF-8"));
        AisqaStatus::InvalidArgument
    })
}

unsafe fn out_arg<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, AisqaStatus> {
    p.as_mut().ok_or_else(|| null(what))
}

unsafe fn store_arg<'a>(p: *const AisqaStore) -> Result<&'a AisqaStore, AisqaStatus> {
    p.as_ref().ok_or_else(|| null("store"))
}

/// Message of the last failed call on this thread, or null.
///
/// The pointer stays valid until the next aisqa call on the same thread.
#[no_mangle]
pub extern "C" fn aisqa_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(std::ptr::null(), |c| c.as_ptr()))
}

/// Free a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must come from an aisqa function that documents ownership transfer.
#[no_mangle]
pub unsafe extern "C" fn aisqa_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

#[no_mangle]
pub extern "C" fn aisqa_store_new() -> *mut AisqaStore {
    Box::into_raw(Box::new(AisqaStore {
        inner: RecordStore::new(),
    }))
}

/// Open a store directory written by the ingest stage.
///
/// # Safety
/// `dir` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn aisqa_store_open(dir: *const c_char, out: *mut *mut AisqaStore) -> AisqaStatus {
    guard(|| {
        let dir = str_arg(dir, "dir")?;
        let out = out_arg(out, "out")?;
        let inner = RecordStore::open(Path::new(dir)).map_err(fail)?;
        *out = Box::into_raw(Box::new(AisqaStore { inner }));
        Ok(())
    })
}

/// Ingest one CSV file. Accepted and rejected row counts are optional outputs.
///
/// # Safety
/// `store` must be live; `path` NUL-terminated; the counters null or writable.
#[no_mangle]
pub unsafe extern "C" fn aisqa_store_ingest_csv(
    store: *mut AisqaStore,
    path: *const c_char,
    accepted: *mut u64,
    rejected: *mut u64,
) -> AisqaStatus {
    guard(|| {
        let store = store.as_mut().ok_or_else(|| null("store"))?;
        let path = str_arg(path, "path")?;
        let report = store.inner.ingest_files(&[path]).map_err(fail)?;
        if let Some(a) = accepted.as_mut() {
            *a = report.stats.accepted;
        }
        if let Some(r) = rejected.as_mut() {
            *r = report.stats.rejected;
        }
        Ok(())
    })
}

/// Number of records, or 0 for a null store.
///
/// # Safety
/// `store` must be null or live.
#[no_mangle]
pub unsafe extern "C" fn aisqa_store_len(store: *const AisqaStore) -> u64 {
    store.as_ref().map_or(0, |s| s.inner.len() as u64)
}

/// Records and distinct vessels in `[start, end)` (Unix seconds) inside `bbox`.
///
/// # Safety
/// `store` must be live; the outputs null or writable.
#[no_mangle]
pub unsafe extern "C" fn aisqa_store_count(
    store: *const AisqaStore,
    start_unix: i64,
    end_unix: i64,
    bbox: AisqaBox,
    records: *mut u64,
    vessels: *mut u64,
) -> AisqaStatus {
    guard(|| {
        let store = store_arg(store)?;
        let ts = |t: i64| {
            chrono::DateTime::from_timestamp(t, 0).ok_or_else(|| fail(Error::InvalidArgument(format!("timestamp {t} out of range"))))
        };
        let window = TimeWindow::new(ts(start_unix)?, ts(end_unix)?).map_err(fail)?;
        let b = BoundingBox::new(bbox.lat_min, bbox.lat_max, bbox.lon_min, bbox.lon_max);
        let hits = store.inner.query(&window, &b);
        let distinct: std::collections::BTreeSet<Mmsi> = hits.iter().map(|r| r.mmsi).collect();
        if let Some(r) = records.as_mut() {
            *r = hits.len() as u64;
        }
        if let Some(v) = vessels.as_mut() {
            *v = distinct.len() as u64;
        }
        Ok(())
    })
}

/// # Safety
/// `store` must be null or come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn aisqa_store_free(store: *mut AisqaStore) {
    if !store.is_null() {
        drop(Box::from_raw(store));
    }
}

#[no_mangle]
pub extern "C" fn aisqa_normal_cdf(z: f64) -> f64 {
    normal_cdf(z)
}

/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn aisqa_wilson(successes: u64, n: u64, confidence: f64, out: *mut AisqaInterval) -> AisqaStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let ci = wilson_interval(successes, n, confidence).map_err(fail)?;
        *out = AisqaInterval {
            point: ci.point,
            center: ci.center,
            low: ci.low,
            high: ci.high,
        };
        Ok(())
    })
}

/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn aisqa_ztest(x1: u64, n1: u64, x2: u64, n2: u64, out: *mut AisqaZTest) -> AisqaStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let t = two_proportion_z(x1, n1, x2, n2).map_err(fail)?;
        *out = AisqaZTest {
            p1: t.p1,
            p2: t.p2,
            p_pool: t.p_pool,
            z: t.z,
            p_value: t.p_value,
        };
        Ok(())
    })
}

/// Judge a response against a reference answer with the given tolerances.
///
/// When `detail_json` is non-null it receives the full outcome as JSON;
/// release it with [`aisqa_string_free`].
///
/// # Safety
/// Strings must be NUL-terminated; `correct` writable; `detail_json` null or writable.
#[no_mangle]
pub unsafe extern "C" fn aisqa_judge(
    response: *const c_char,
    reference: *const c_char,
    rel_tol: f64,
    zero_abs_tol: f64,
    correct: *mut bool,
    detail_json: *mut *mut c_char,
) -> AisqaStatus {
    guard(|| {
        let response = str_arg(response, "response")?;
        let reference = str_arg(reference, "reference")?;
        let correct = out_arg(correct, "correct")?;
        if !(rel_tol >= 0.0 && zero_abs_tol >= 0.0) {
            return Err(fail(Error::InvalidArgument("tolerances must be non-negative".into())));
        }
        let cfg = JudgeConfig {
            rel_tol,
            zero_abs_tol,
            ..JudgeConfig::default()
        };
        let outcome = judge(response, reference, &cfg);
        *correct = outcome.verdict == Verdict::Correct;
        if let Some(d) = detail_json.as_mut() {
            let text = serde_json::to_string(&outcome).map_err(|e| fail(e.into()))?;
            *d = CString::new(text).unwrap_or_default().into_raw();
        }
        Ok(())
    })
}

/// YaRN-scaled rotary frequency of pair `d`.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn aisqa_yarn_frequency(cfg: AisqaRopeConfig, d: usize, out: *mut f64) -> AisqaStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let cfg = RopeScalingConfig {
            base: cfg.base,
            scale: cfg.scale,
            original_context: cfg.original_context,
            target_context: cfg.target_context,
            head_dim: cfg.head_dim,
            ramp_low: cfg.ramp_low,
            ramp_high: cfg.ramp_high,
        };
        cfg.validate().map_err(fail)?;
        *out = scaled_frequency(d, &cfg).map_err(fail)?;
        Ok(())
    })
}

/// Label-smoothed cross-entropy of a predicted distribution of `len` entries.
///
/// # Safety
/// `predicted` must point to `len` readable doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn aisqa_smoothed_ce(
    predicted: *const f64,
    len: usize,
    true_index: usize,
    epsilon: f64,
    out: *mut f64,
) -> AisqaStatus {
    guard(|| {
        if predicted.is_null() {
            return Err(null("predicted"));
        }
        let out = out_arg(out, "out")?;
        let p = std::slice::from_raw_parts(predicted, len);
        let cfg = SmoothingConfig { epsilon, vocab_size: len };
        *out = smoothed_ce_loss(p, true_index, &cfg).map_err(fail)?;
        Ok(())
    })
}

/// Dead-reckoned position `delta_t_secs` after a report.
///
/// # Safety
/// `out_lat` and `out_lon` must be writable.
#[no_mangle]
pub unsafe extern "C" fn aisqa_predict_position(
    lat: f64,
    lon: f64,
    sog_kn: f64,
    cog_deg: f64,
    delta_t_secs: f64,
    out_lat: *mut f64,
    out_lon: *mut f64,
) -> AisqaStatus {
    guard(|| {
        let lat_out = out_arg(out_lat, "out_lat")?;
        let lon_out = out_arg(out_lon, "out_lon")?;
        let mmsi = Mmsi::new(100_000_000).expect("valid placeholder");
        let t = chrono::DateTime::from_timestamp(0, 0).expect("epoch");
        let rec = AisRecord::new(mmsi, t, lat, lon).with_kinematics(sog_kn, cog_deg);
        rec.validate().map_err(fail)?;
        let (a, b) = predict_position(&rec, delta_t_secs).map_err(fail)?;
        *lat_out = a;
        *lon_out = b;
        Ok(())
    })
}
