//! C ABI for the refrigeration simulator.
//!
//! The surface follows the usual opaque-handle pattern: configurations and
//! finished runs are heap objects owned by the library, functions return a
//! `refsim_status`, and string outputs are malloc'd C strings released with
//! [`refsim_string_free`]. The last error message of the calling thread is
//! available from [`refsim_last_error_message`].

#![allow(non_camel_case_types)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::path::PathBuf;

use refsim::params::{Config, ControllerKind};
use refsim::scenario::{self, RunResult, ScenarioConfig};

/// Result codes of every fallible call.
#[repr(C)]
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum refsim_status {
    REFSIM_OK = 0,
    /// A required pointer argument was null.
    REFSIM_NULL_ARGUMENT = 1,
    /// The configuration is invalid; details via `refsim_last_error_message`.
    REFSIM_INVALID_CONFIG = 2,
    /// The simulation failed at runtime.
    REFSIM_RUNTIME_ERROR = 3,
    /// A string argument was not valid UTF-8.
    REFSIM_INVALID_UTF8 = 4,
    /// Writing an output file failed.
    REFSIM_IO_ERROR = 5,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(message: impl Into<Vec<u8>>) {
    let text = CString::new(message).unwrap_or_default();
    LAST_ERROR.with(|slot| *slot.borrow_mut() = text);
}

fn classify(e: &refsim::Error) -> refsim_status {
    match e {
        refsim::Error::Config { .. }
        | refsim::Error::PriceSeries(_)
        | refsim::Error::PriceRow { .. } => refsim_status::REFSIM_INVALID_CONFIG,
        refsim::Error::Io(_) => refsim_status::REFSIM_IO_ERROR,
        _ => refsim_status::REFSIM_RUNTIME_ERROR,
    }
}

/// Message of the calling thread's most recent error. The pointer stays valid
/// until the next failing call on the same thread. Never null.
#[no_mangle]
pub extern "C" fn refsim_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ptr())
}

/// Scenario configuration handle.
pub struct refsim_config {
    config: Config,
}

/// A finished closed-loop run.
pub struct refsim_run {
    run: RunResult,
    control_period_s: f64,
}

/// Creates a configuration with the built-in defaults.
///
/// # Safety
/// `out` must be a valid pointer to writable storage for one pointer.
#[no_mangle]
pub unsafe extern "C" fn refsim_config_default(out: *mut *mut refsim_config) -> refsim_status {
    if out.is_null() {
        set_error("out pointer is null");
        return refsim_status::REFSIM_NULL_ARGUMENT;
    }
    let handle = Box::new(refsim_config { config: Config::default() });
    unsafe { *out = Box::into_raw(handle) };
    refsim_status::REFSIM_OK
}

/// Parses a configuration from TOML text.
///
/// # Safety
/// `text` must be a valid NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn refsim_config_from_toml(
    text: *const c_char,
    out: *mut *mut refsim_config,
) -> refsim_status {
    if text.is_null() || out.is_null() {
        set_error("null argument");
        return refsim_status::REFSIM_NULL_ARGUMENT;
    }
    let text = match unsafe { CStr::from_ptr(text) }.to_str() {
        Ok(t) => t,
        Err(_) => {
            set_error("configuration text is not valid UTF-8");
            return refsim_status::REFSIM_INVALID_UTF8;
        }
    };
    match Config::from_toml(text) {
        Ok(config) => {
            unsafe { *out = Box::into_raw(Box::new(refsim_config { config })) };
            refsim_status::REFSIM_OK
        }
        Err(e) => {
            set_error(e.to_string());
            classify(&e)
        }
    }
}

/// Selects the controller: "pi", "linear", "greedy", or "oracle".
///
/// # Safety
/// `config` must be a live handle from this library; `controller` a valid
/// NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn refsim_config_set_controller(
    config: *mut refsim_config,
    controller: *const c_char,
) -> refsim_status {
    if config.is_null() || controller.is_null() {
        set_error("null argument");
        return refsim_status::REFSIM_NULL_ARGUMENT;
    }
    let name = match unsafe { CStr::from_ptr(controller) }.to_str() {
        Ok(t) => t,
        Err(_) => {
            set_error("controller name is not valid UTF-8");
            return refsim_status::REFSIM_INVALID_UTF8;
        }
    };
    match name.parse::<ControllerKind>() {
        Ok(kind) => {
            unsafe { (*config).config.scenario.controller = kind };
            refsim_status::REFSIM_OK
        }
        Err(e) => {
            set_error(e);
            refsim_status::REFSIM_INVALID_CONFIG
        }
    }
}

/// Sets the run duration in seconds.
///
/// # Safety
/// `config` must be a live handle from this library.
#[no_mangle]
pub unsafe extern "C" fn refsim_config_set_duration_s(
    config: *mut refsim_config,
    duration_s: f64,
) -> refsim_status {
    if config.is_null() {
        set_error("config pointer is null");
        return refsim_status::REFSIM_NULL_ARGUMENT;
    }
    unsafe { (*config).config.scenario.duration_s = duration_s };
    refsim_status::REFSIM_OK
}

/// Sets the food-mass perturbation seed.
///
/// # Safety
/// `config` must be a live handle from this library.
#[no_mangle]
pub unsafe extern "C" fn refsim_config_set_seed(
    config: *mut refsim_config,
    seed: u64,
) -> refsim_status {
    if config.is_null() {
        set_error("config pointer is null");
        return refsim_status::REFSIM_NULL_ARGUMENT;
    }
    unsafe { (*config).config.scenario.seed = seed };
    refsim_status::REFSIM_OK
}

/// Releases a configuration handle. Null is ignored.
///
/// # Safety
/// `config` must be null or a live handle; it must not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn refsim_config_free(config: *mut refsim_config) {
    if !config.is_null() {
        drop(unsafe { Box::from_raw(config) });
    }
}

/// Runs the configured closed loop and returns a run handle.
///
/// # Safety
/// `config` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn refsim_run_closed_loop(
    config: *const refsim_config,
    out: *mut *mut refsim_run,
) -> refsim_status {
    if config.is_null() || out.is_null() {
        set_error("null argument");
        return refsim_status::REFSIM_NULL_ARGUMENT;
    }
    let cfg = unsafe { &(*config).config };
    let built = cfg.build().and_then(|(params, topology)| {
        let sc = ScenarioConfig::from_config(cfg);
        scenario::run_closed_loop(&params, &topology, &sc)
    });
    match built {
        Ok(run) => {
            let handle = refsim_run { run, control_period_s: cfg.plant.control_period_s };
            unsafe { *out = Box::into_raw(Box::new(handle)) };
            refsim_status::REFSIM_OK
        }
        Err(e) => {
            set_error(e.to_string());
            classify(&e)
        }
    }
}

/// Average electrical power of the run in watts.
///
/// # Safety
/// `run` must be a live handle from this library.
#[no_mangle]
pub unsafe extern "C" fn refsim_run_average_power_w(run: *const refsim_run) -> f64 {
    if run.is_null() {
        return f64::NAN;
    }
    unsafe { &*run }.run.trajectory.average_power_w()
}

/// Compressor switchings counted at control-period boundaries.
///
/// # Safety
/// `run` must be a live handle from this library.
#[no_mangle]
pub unsafe extern "C" fn refsim_run_switching_count(run: *const refsim_run) -> u32 {
    if run.is_null() {
        return 0;
    }
    unsafe { &*run }.run.metrics.switching_count as u32
}

/// Serializes the run's metrics as a JSON string owned by the caller; release
/// it with `refsim_string_free`.
///
/// # Safety
/// `run` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn refsim_run_metrics_json(
    run: *const refsim_run,
    out: *mut *mut c_char,
) -> refsim_status {
    if run.is_null() || out.is_null() {
        set_error("null argument");
        return refsim_status::REFSIM_NULL_ARGUMENT;
    }
    let json = serde_json::to_string_pretty(&unsafe { &*run }.run.metrics)
        .expect("metrics serialize");
    match CString::new(json) {
        Ok(s) => {
            unsafe { *out = s.into_raw() };
            refsim_status::REFSIM_OK
        }
        Err(_) => {
            set_error("metrics JSON contained an interior NUL");
            refsim_status::REFSIM_RUNTIME_ERROR
        }
    }
}

/// Writes the run's trajectory CSV to `path`. With `every_step` false, one
/// row per control period is written.
///
/// # Safety
/// `run` must be a live handle and `path` a valid NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn refsim_run_write_trajectory_csv(
    run: *const refsim_run,
    path: *const c_char,
    every_step: bool,
) -> refsim_status {
    if run.is_null() || path.is_null() {
        set_error("null argument");
        return refsim_status::REFSIM_NULL_ARGUMENT;
    }
    let path = match unsafe { CStr::from_ptr(path) }.to_str() {
        Ok(p) => PathBuf::from(p),
        Err(_) => {
            set_error("path is not valid UTF-8");
            return refsim_status::REFSIM_INVALID_UTF8;
        }
    };
    let handle = unsafe { &*run };
    let write = std::fs::File::create(&path).map_err(refsim::Error::from).and_then(|file| {
        handle.run.trajectory.write_csv(
            std::io::BufWriter::new(file),
            handle.control_period_s,
            every_step,
        )
    });
    match write {
        Ok(()) => refsim_status::REFSIM_OK,
        Err(e) => {
            set_error(e.to_string());
            refsim_status::REFSIM_IO_ERROR
        }
    }
}

/// Releases a run handle. Null is ignored.
///
/// # Safety
/// `run` must be null or a live handle; it must not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn refsim_run_free(run: *mut refsim_run) {
    if !run.is_null() {
        drop(unsafe { Box::from_raw(run) });
    }
}

/// Releases a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must be null or a string obtained from this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn refsim_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(unsafe { CString::from_raw(s) });
    }
}

fn property(
    out: *mut f64,
    eval: impl FnOnce(&refsim::thermo::RefrigerantModel) -> refsim::Result<f64>,
) -> refsim_status {
    if out.is_null() {
        set_error("out pointer is null");
        return refsim_status::REFSIM_NULL_ARGUMENT;
    }
    match eval(&refsim::thermo::RefrigerantModel::r134a()) {
        Ok(v) => {
            unsafe { *out = v };
            refsim_status::REFSIM_OK
        }
        Err(e) => {
            set_error(e.to_string());
            refsim_status::REFSIM_RUNTIME_ERROR
        }
    }
}

/// Evaporation temperature of R134a in °C at the given suction pressure in bar.
///
/// # Safety
/// `out` must be a valid pointer to writable storage for one double.
#[no_mangle]
pub unsafe extern "C" fn refsim_evaporation_temperature_c(
    p_suc_bar: f64,
    out: *mut f64,
) -> refsim_status {
    property(out, |r| r.evaporation_temperature(p_suc_bar))
}

/// Evaporation enthalpy of R134a [J/kg].
///
/// # Safety
/// `out` must be a valid pointer to writable storage for one double.
#[no_mangle]
pub unsafe extern "C" fn refsim_evaporation_enthalpy_j_per_kg(
    p_suc_bar: f64,
    out: *mut f64,
) -> refsim_status {
    property(out, |r| r.evaporation_enthalpy(p_suc_bar))
}

/// Suction vapor density of R134a [kg/m³].
///
/// # Safety
/// `out` must be a valid pointer to writable storage for one double.
#[no_mangle]
pub unsafe extern "C" fn refsim_suction_density_kg_per_m3(
    p_suc_bar: f64,
    out: *mut f64,
) -> refsim_status {
    property(out, |r| r.suction_density(p_suc_bar))
}

/// Density-pressure gradient of R134a [kg/(m³·bar)].
///
/// # Safety
/// `out` must be a valid pointer to writable storage for one double.
#[no_mangle]
pub unsafe extern "C" fn refsim_density_pressure_gradient(
    p_suc_bar: f64,
    out: *mut f64,
) -> refsim_status {
    property(out, |r| r.density_pressure_gradient(p_suc_bar))
}

/// Compressor specific power of R134a [J/m³].
///
/// # Safety
/// `out` must be a valid pointer to writable storage for one double.
#[no_mangle]
pub unsafe extern "C" fn refsim_compressor_specific_power_j_per_m3(
    p_suc_bar: f64,
    out: *mut f64,
) -> refsim_status {
    property(out, |r| r.compressor_specific_power(p_suc_bar))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::ptr;

    #[test]
    fn property_functions_report_domain_errors() {
        let mut v = 0.0f64;
        unsafe {
            assert_eq!(
                refsim_evaporation_temperature_c(1.4, &mut v),
                refsim_status::REFSIM_OK
            );
            assert!((v - -18.821524).abs() < 1e-6);
            assert_eq!(
                refsim_evaporation_temperature_c(-1.0, &mut v),
                refsim_status::REFSIM_RUNTIME_ERROR
            );
            let msg = CStr::from_ptr(refsim_last_error_message());
            assert!(msg.to_str().unwrap().contains("pressure"));
            assert_eq!(
                refsim_evaporation_temperature_c(1.4, ptr::null_mut()),
                refsim_status::REFSIM_NULL_ARGUMENT
            );
        }
    }

    #[test]
    fn full_run_through_the_c_surface() {
        unsafe {
            let mut cfg: *mut refsim_config = ptr::null_mut();
            assert_eq!(refsim_config_default(&mut cfg), refsim_status::REFSIM_OK);
            assert_eq!(
                refsim_config_set_controller(cfg, c"greedy".as_ptr()),
                refsim_status::REFSIM_OK
            );
            assert_eq!(refsim_config_set_duration_s(cfg, 300.0), refsim_status::REFSIM_OK);
            assert_eq!(refsim_config_set_seed(cfg, 7), refsim_status::REFSIM_OK);
            let mut run: *mut refsim_run = ptr::null_mut();
            assert_eq!(refsim_run_closed_loop(cfg, &mut run), refsim_status::REFSIM_OK);
            let power = refsim_run_average_power_w(run);
            assert!(power.is_finite() && power >= 0.0);
            let mut json: *mut c_char = ptr::null_mut();
            assert_eq!(refsim_run_metrics_json(run, &mut json), refsim_status::REFSIM_OK);
            let text = CStr::from_ptr(json).to_str().unwrap().to_string();
            assert!(text.contains("average_power_kw"));
            refsim_string_free(json);
            let dir = tempfile::tempdir().unwrap();
            let path = CString::new(dir.path().join("traj.csv").to_str().unwrap()).unwrap();
            assert_eq!(
                refsim_run_write_trajectory_csv(run, path.as_ptr(), false),
                refsim_status::REFSIM_OK
            );
            assert!(dir.path().join("traj.csv").exists());
            refsim_run_free(run);
            refsim_config_free(cfg);
        }
    }

    #[test]
    fn invalid_inputs_surface_as_config_errors() {
        unsafe {
            let mut cfg: *mut refsim_config = ptr::null_mut();
            let bad = c"[plant]\ncontrol_period_s = -5.0\n";
            assert_eq!(
                refsim_config_from_toml(bad.as_ptr(), &mut cfg),
                refsim_status::REFSIM_INVALID_CONFIG
            );
            let msg = CStr::from_ptr(refsim_last_error_message()).to_str().unwrap();
            assert!(msg.contains("control_period_s"), "{msg}");
            assert_eq!(refsim_config_default(&mut cfg), refsim_status::REFSIM_OK);
            assert_eq!(
                refsim_config_set_controller(cfg, c"warp-drive".as_ptr()),
                refsim_status::REFSIM_INVALID_CONFIG
            );
            refsim_config_free(cfg);
            refsim_config_free(ptr::null_mut());
            refsim_run_free(ptr::null_mut());
            refsim_string_free(ptr::null_mut());
        }
    }
}
