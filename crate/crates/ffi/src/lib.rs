//! C ABI over the simulator.
//!
//! Handles are opaque and owned by the caller once returned; release them
//! with the matching `*_free` function. Every fallible call returns an
//! [`AgsStatus`]; on anything other than `AGS_STATUS_OK` the message is
//! available from [`ags_last_error`] on the same thread.

use std::cell::RefCell;
use std::collections::BTreeMap;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use agrisense::alerting::{build_gateway_request, render, Locale};
use agrisense::{output, Scenario, SeasonRun};

/// Opaque scenario handle.
pub struct AgsScenario(Scenario);

/// Opaque handle to a completed two-arm season.
pub struct AgsSeasonRun(SeasonRun);

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AgsStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    InvalidArgument = 3,
    Scenario = 4,
    Simulation = 5,
    Alerting = 6,
    Io = 7,
    BufferTooSmall = 8,
    Panic = 9,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AgsLocale {
    En = 0,
    Lg = 1,
}

impl From<AgsLocale> for Locale {
    fn from(l: AgsLocale) -> Self {
        match l {
            AgsLocale::En => Locale::En,
            AgsLocale::Lg => Locale::Lg,
        }
    }
}

/// Season totals plus the headline comparisons derived from them.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct AgsTotals {
    pub water_sensor_l_per_acre: f64,
    pub water_baseline_l_per_acre: f64,
    pub yield_sensor_kg_per_acre: f64,
    pub yield_baseline_kg_per_acre: f64,
    pub events_sensor: u64,
    pub events_baseline: u64,
    pub energy_pubsub_mwh: f64,
    pub energy_reqresp_mwh: f64,
    pub energy_efficiency_pct: f64,
    pub delivery_rate: f64,
    pub water_reduction_pct: f64,
    pub yield_improvement_pct: f64,
    pub energy_ratio: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(msg: impl std::fmt::Display) {
    let c = CString::new(msg.to_string().replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn fail(status: AgsStatus, msg: impl std::fmt::Display) -> AgsStatus {
    set_last_error(msg);
    status
}

fn guard(f: impl FnOnce() -> AgsStatus) -> AgsStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => s,
        Err(_) => fail(AgsStatus::Panic, "internal panic"),
    }
}

fn status_of(e: &agrisense::Error) -> AgsStatus {
    match e {
        agrisense::Error::Scenario(_) => AgsStatus::Scenario,
        agrisense::Error::Alerting(_) => AgsStatus::Alerting,
        agrisense::Error::Output(_) => AgsStatus::Io,
        _ => AgsStatus::Simulation,
    }
}

unsafe fn str_arg<'a>(p: *const c_char, name: &str) -> Result<&'a str, AgsStatus> {
    if p.is_null() {
        return Err(fail(AgsStatus::NullPointer, format!("{name} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| fail(AgsStatus::InvalidUtf8, format!("{name} is not valid UTF-8")))
}

unsafe fn put_handle<T>(out: *mut *mut T, value: T) -> AgsStatus {
    *out = Box::into_raw(Box::new(value));
    AgsStatus::Ok
}

unsafe fn put_string(out: *mut *mut c_char, s: String) -> AgsStatus {
    match CString::new(s) {
        Ok(c) => {
            *out = c.into_raw();
            AgsStatus::Ok
        }
        Err(_) => fail(AgsStatus::InvalidArgument, "string contains an interior NUL"),
    }
}

/// Message of the last failed call on this thread, or NULL. The pointer is
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn ags_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Static, NUL-terminated name for a status code.
#[no_mangle]
pub extern "C" fn ags_status_name(status: AgsStatus) -> *const c_char {
    let s: &'static CStr = match status {
        AgsStatus::Ok => c"ok",
        AgsStatus::NullPointer => c"null pointer",
        AgsStatus::InvalidUtf8 => c"invalid utf-8",
        AgsStatus::InvalidArgument => c"invalid argument",
        AgsStatus::Scenario => c"scenario error",
        AgsStatus::Simulation => c"simulation error",
        AgsStatus::Alerting => c"alerting error",
        AgsStatus::Io => c"i/o error",
        AgsStatus::BufferTooSmall => c"buffer too small",
        AgsStatus::Panic => c"internal panic",
    };
    s.as_ptr()
}

/// Bundled default scenario.
///
/// # Safety
/// `out` must be a valid pointer to writable storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn ags_scenario_default(out: *mut *mut AgsScenario) -> AgsStatus {
    guard(|| {
        if out.is_null() {
            return fail(AgsStatus::NullPointer, "out is null");
        }
        put_handle(out, AgsScenario(Scenario::default_scenario()))
    })
}

/// Parse a scenario from TOML text.
///
/// # Safety
/// `toml` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ags_scenario_from_toml(toml: *const c_char, out: *mut *mut AgsScenario) -> AgsStatus {
    guard(|| {
        if out.is_null() {
            return fail(AgsStatus::NullPointer, "out is null");
        }
        let src = match str_arg(toml, "toml") {
            Ok(s) => s,
            Err(st) => return st,
        };
        match Scenario::from_toml_str(src) {
            Ok(s) => put_handle(out, AgsScenario(s)),
            Err(e) => fail(AgsStatus::Scenario, e),
        }
    })
}

/// Load a scenario file.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ags_scenario_load(path: *const c_char, out: *mut *mut AgsScenario) -> AgsStatus {
    guard(|| {
        if out.is_null() {
            return fail(AgsStatus::NullPointer, "out is null");
        }
        let p = match str_arg(path, "path") {
            Ok(s) => s,
            Err(st) => return st,
        };
        match Scenario::load(Path::new(p)) {
            Ok(s) => put_handle(out, AgsScenario(s)),
            Err(e) => fail(AgsStatus::Scenario, e),
        }
    })
}

/// # Safety
/// `scenario` must be a live handle or NULL.
#[no_mangle]
pub unsafe extern "C" fn ags_scenario_seed(scenario: *const AgsScenario) -> u64 {
    scenario.as_ref().map_or(0, |s| s.0.seed)
}

/// # Safety
/// `scenario` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn ags_scenario_set_seed(scenario: *mut AgsScenario, seed: u64) -> AgsStatus {
    match scenario.as_mut() {
        Some(s) => {
            s.0.seed = seed;
            AgsStatus::Ok
        }
        None => fail(AgsStatus::NullPointer, "scenario is null"),
    }
}

/// # Safety
/// `scenario` must be a handle from this library, or NULL. It must not be
/// used afterwards.
#[no_mangle]
pub unsafe extern "C" fn ags_scenario_free(scenario: *mut AgsScenario) {
    if !scenario.is_null() {
        drop(Box::from_raw(scenario));
    }
}

/// Simulate both arms of a season.
///
/// # Safety
/// `scenario` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ags_season_run(scenario: *const AgsScenario, out: *mut *mut AgsSeasonRun) -> AgsStatus {
    guard(|| {
        let Some(s) = scenario.as_ref() else {
            return fail(AgsStatus::NullPointer, "scenario is null");
        };
        if out.is_null() {
            return fail(AgsStatus::NullPointer, "out is null");
        }
        match agrisense::run_season(&s.0) {
            Ok(run) => put_handle(out, AgsSeasonRun(run)),
            Err(e) => fail(status_of(&e), e),
        }
    })
}

/// # Safety
/// `run` must be a live handle; `out` must point to writable storage.
#[no_mangle]
pub unsafe extern "C" fn ags_season_totals(run: *const AgsSeasonRun, out: *mut AgsTotals) -> AgsStatus {
    guard(|| {
        let (Some(r), Some(out)) = (run.as_ref(), out.as_mut()) else {
            return fail(AgsStatus::NullPointer, "run or out is null");
        };
        let t = &r.0.totals;
        let derived = (|| Ok::<_, agrisense::Error>((t.water_reduction_pct()?, t.yield_improvement_pct()?, t.energy_ratio()?)))();
        let (water, yld, ratio) = match derived {
            Ok(v) => v,
            Err(e) => return fail(status_of(&e), e),
        };
        *out = AgsTotals {
            water_sensor_l_per_acre: t.water_sensor_l_per_acre,
            water_baseline_l_per_acre: t.water_baseline_l_per_acre,
            yield_sensor_kg_per_acre: t.yield_sensor_kg_per_acre,
            yield_baseline_kg_per_acre: t.yield_baseline_kg_per_acre,
            events_sensor: t.events_sensor,
            events_baseline: t.events_baseline,
            energy_pubsub_mwh: t.energy_pubsub_mwh,
            energy_reqresp_mwh: t.energy_reqresp_mwh,
            energy_efficiency_pct: t.energy_efficiency_pct,
            delivery_rate: t.delivery_rate,
            water_reduction_pct: water,
            yield_improvement_pct: yld,
            energy_ratio: ratio,
        };
        AgsStatus::Ok
    })
}

/// Write every run artifact and the manifest into `dir`.
///
/// # Safety
/// `run` must be a live handle; `dir` a NUL-terminated path.
#[no_mangle]
pub unsafe extern "C" fn ags_season_write(run: *const AgsSeasonRun, dir: *const c_char) -> AgsStatus {
    guard(|| {
        let Some(r) = run.as_ref() else {
            return fail(AgsStatus::NullPointer, "run is null");
        };
        let d = match str_arg(dir, "dir") {
            Ok(s) => s,
            Err(st) => return st,
        };
        match output::write_run(&r.0, Path::new(d)) {
            Ok(_) => AgsStatus::Ok,
            Err(e) => fail(status_of(&e), e),
        }
    })
}

/// Aligned-text report as an owned string; free with [`ags_string_free`].
///
/// # Safety
/// `run` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ags_season_report_text(run: *const AgsSeasonRun, out: *mut *mut c_char) -> AgsStatus {
    guard(|| {
        let Some(r) = run.as_ref() else {
            return fail(AgsStatus::NullPointer, "run is null");
        };
        if out.is_null() {
            return fail(AgsStatus::NullPointer, "out is null");
        }
        put_string(out, r.0.report.to_text())
    })
}

/// # Safety
/// `run` must be a handle from this library, or NULL.
#[no_mangle]
pub unsafe extern "C" fn ags_season_free(run: *mut AgsSeasonRun) {
    if !run.is_null() {
        drop(Box::from_raw(run));
    }
}

/// Render a message template into `buf`.
///
/// `names` and `values` are parallel arrays of `count` parameters. On
/// success `*written` is the text length without the NUL. When `buf` is
/// too small nothing is copied, `*written` holds the required length and
/// the call returns `AGS_STATUS_BUFFER_TOO_SMALL`.
///
/// # Safety
/// `template_id` must be NUL-terminated; `names` and `values` must each
/// hold `count` entries (or be NULL when `count` is 0); `buf` must hold
/// `buf_len` bytes; `written` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ags_render_message(
    template_id: *const c_char,
    locale: AgsLocale,
    names: *const *const c_char,
    values: *const f64,
    count: usize,
    buf: *mut c_char,
    buf_len: usize,
    written: *mut usize,
) -> AgsStatus {
    guard(|| {
        if written.is_null() {
            return fail(AgsStatus::NullPointer, "written is null");
        }
        let id = match str_arg(template_id, "template_id") {
            Ok(s) => s,
            Err(st) => return st,
        };
        if count > 0 && (names.is_null() || values.is_null()) {
            return fail(AgsStatus::NullPointer, "names or values is null");
        }
        let mut params = BTreeMap::new();
        for i in 0..count {
            let name = match str_arg(*names.add(i), "parameter name") {
                Ok(s) => s,
                Err(st) => return st,
            };
            params.insert(name.to_owned(), *values.add(i));
        }
        let text = match render(id, locale.into(), &params) {
            Ok(t) => t,
            Err(e) => return fail(AgsStatus::Alerting, e),
        };
        copy_out(&text, buf, buf_len, written)
    })
}

unsafe fn copy_out(text: &str, buf: *mut c_char, buf_len: usize, written: *mut usize) -> AgsStatus {
    *written = text.len();
    if buf.is_null() || buf_len <= text.len() {
        return fail(
            AgsStatus::BufferTooSmall,
            format!("need {} bytes, have {buf_len}", text.len() + 1),
        );
    }
    ptr::copy_nonoverlapping(text.as_ptr(), buf.cast::<u8>(), text.len());
    *buf.add(text.len()) = 0;
    AgsStatus::Ok
}

/// Gateway request URL for `text` using the scenario's gateway settings.
/// Free the result with [`ags_string_free`].
///
/// # Safety
/// `scenario` must be a live handle; `text` NUL-terminated; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ags_gateway_request(
    scenario: *const AgsScenario,
    text: *const c_char,
    out: *mut *mut c_char,
) -> AgsStatus {
    guard(|| {
        let Some(s) = scenario.as_ref() else {
            return fail(AgsStatus::NullPointer, "scenario is null");
        };
        if out.is_null() {
            return fail(AgsStatus::NullPointer, "out is null");
        }
        let t = match str_arg(text, "text") {
            Ok(s) => s,
            Err(st) => return st,
        };
        match build_gateway_request(&s.0.alerting.gateway, t) {
            Ok(url) => put_string(out, url),
            Err(e) => fail(AgsStatus::Alerting, e),
        }
    })
}

/// # Safety
/// `s` must be a string returned by this library, or NULL.
#[no_mangle]
pub unsafe extern "C" fn ags_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
