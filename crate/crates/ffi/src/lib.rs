//! C ABI over `meop-core`.
//!
//! Every fallible function returns a [`MeopStatus`]; on failure a
//! human-readable message is available from [`meop_last_error`] on the same
//! thread. Plants and controllers are opaque handles created by `*_new` and
//! released by `*_free`. Panics never cross the boundary; they surface as
//! `MEOP_STATUS_INTERNAL`.

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use meop_core::controller::ThresholdMode;
use meop_core::metrics::{cycle_energy, features_from_samples, measure};
use meop_core::sim::{CycleRecord, SimConfig};
use meop_core::{
    Controller, ControllerConfig, ControllerState, Error, Event, LoadKind, LoadPresets, Mode, MotorParams, Plant,
    SensorConfig,
};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MeopStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Stall = 3,
    Diverged = 4,
    PlantCannotRun = 5,
    Internal = 99,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MeopLoadKind {
    None = 0,
    Low = 1,
    High = 2,
}

impl From<MeopLoadKind> for LoadKind {
    fn from(k: MeopLoadKind) -> Self {
        match k {
            MeopLoadKind::None => LoadKind::None,
            MeopLoadKind::Low => LoadKind::Low,
            MeopLoadKind::High => LoadKind::High,
        }
    }
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MeopMode {
    PhaseISearch = 0,
    Monitoring = 1,
    DownwardSweep = 2,
    RaiseConverge = 3,
}

impl From<Mode> for MeopMode {
    fn from(m: Mode) -> Self {
        match m {
            Mode::PhaseISearch => MeopMode::PhaseISearch,
            Mode::Monitoring => MeopMode::Monitoring,
            Mode::DownwardSweep => MeopMode::DownwardSweep,
            Mode::RaiseConverge => MeopMode::RaiseConverge,
        }
    }
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MeopThresholdMode {
    Relative = 0,
    Absolute = 1,
}

/// Event bits reported in `MeopCommand.events`.
pub const MEOP_EVENT_SEARCH_STARTED: u32 = 1;
pub const MEOP_EVENT_OPTIMUM_FOUND: u32 = 1 << 1;
pub const MEOP_EVENT_LOAD_INCREASE: u32 = 1 << 2;
pub const MEOP_EVENT_LOAD_DECREASE: u32 = 1 << 3;
pub const MEOP_EVENT_METRIC_CONVERGED: u32 = 1 << 4;
pub const MEOP_EVENT_STALL_RECOVERED: u32 = 1 << 5;

fn event_bit(e: &Event) -> u32 {
    match e {
        Event::SearchStarted => MEOP_EVENT_SEARCH_STARTED,
        Event::OptimumFound { .. } => MEOP_EVENT_OPTIMUM_FOUND,
        Event::LoadIncreaseDetected { .. } => MEOP_EVENT_LOAD_INCREASE,
        Event::LoadDecreaseDetected { .. } => MEOP_EVENT_LOAD_DECREASE,
        Event::MetricConverged => MEOP_EVENT_METRIC_CONVERGED,
        Event::StallRecovered => MEOP_EVENT_STALL_RECOVERED,
    }
}

/// Motor constants, SI units.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeopMotorParams {
    pub resistance: f64,
    pub inductance: f64,
    pub back_emf_const: f64,
    pub torque_const: f64,
    pub inertia: f64,
    pub viscous_drag: f64,
    pub gear_ratio: f64,
}

impl From<MeopMotorParams> for MotorParams {
    fn from(p: MeopMotorParams) -> Self {
        MotorParams {
            resistance: p.resistance,
            inductance: p.inductance,
            back_emf_const: p.back_emf_const,
            torque_const: p.torque_const,
            inertia: p.inertia,
            viscous_drag: p.viscous_drag,
            gear_ratio: p.gear_ratio,
        }
    }
}

/// Output-shaft load presets (N·m, rad).
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeopLoadPresets {
    pub friction: f64,
    pub window_start: f64,
    pub window_end: f64,
    pub low_peak: f64,
    pub high_peak: f64,
}

impl From<MeopLoadPresets> for LoadPresets {
    fn from(p: MeopLoadPresets) -> Self {
        LoadPresets {
            friction: p.friction,
            window_start: p.window_start,
            window_end: p.window_end,
            low_peak: p.low_peak,
            high_peak: p.high_peak,
        }
    }
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeopSensorConfig {
    pub sample_rate: f64,
    pub noise_sigma: f64,
    pub seed: u64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeopControllerConfig {
    pub v_min: f64,
    pub v_max: f64,
    pub v_init: f64,
    pub dv: f64,
    pub n_cycles: usize,
    pub warmup_cycles: usize,
    pub threshold_mode: MeopThresholdMode,
    pub delta_plus: f64,
    pub delta_minus: f64,
    pub eps_load: f64,
    pub metric_floor: f64,
    pub stall_raise_step: f64,
}

impl From<MeopControllerConfig> for ControllerConfig {
    fn from(c: MeopControllerConfig) -> Self {
        ControllerConfig {
            v_min: c.v_min,
            v_max: c.v_max,
            v_init: c.v_init,
            dv: c.dv,
            n_cycles: c.n_cycles,
            warmup_cycles: c.warmup_cycles,
            threshold_mode: match c.threshold_mode {
                MeopThresholdMode::Relative => ThresholdMode::Relative,
                MeopThresholdMode::Absolute => ThresholdMode::Absolute,
            },
            delta_plus: c.delta_plus,
            delta_minus: c.delta_minus,
            eps_load: c.eps_load,
            metric_floor: c.metric_floor,
            stall_raise_step: c.stall_raise_step,
        }
    }
}

/// Waveform features of one cycle.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct MeopFeatures {
    pub peak: f64,
    pub valley: f64,
    pub ac: f64,
    pub dc: f64,
    pub ac_time: f64,
    pub metric: f64,
}

/// Per-cycle measurement produced by [`meop_plant_run_cycle`].
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct MeopCycle {
    pub voltage: f64,
    pub period: f64,
    /// Simulated time at the end of the cycle (s).
    pub t_end: f64,
    pub energy: f64,
    pub power: f64,
    pub features: MeopFeatures,
    pub n_samples: usize,
}

/// Controller reply to one cycle or stall.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeopCommand {
    /// Voltage to apply next (V).
    pub voltage: f64,
    pub mode: MeopMode,
    pub v_star: f64,
    /// True when this cycle completed an averaging batch.
    pub batch_done: bool,
    /// OR of `MEOP_EVENT_*` bits raised by this call.
    pub events: u32,
}

/// Opaque simulated plant.
pub struct MeopPlant {
    plant: Plant,
    presets: LoadPresets,
}

/// Opaque tracking controller with its state.
pub struct MeopController {
    controller: Controller,
    state: ControllerState,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(e: &Error) -> MeopStatus {
    match e {
        Error::Stall { .. } => MeopStatus::Stall,
        Error::Diverged { .. } => MeopStatus::Diverged,
        Error::PlantCannotRun(_) => MeopStatus::PlantCannotRun,
        _ => MeopStatus::InvalidArgument,
    }
}

fn fail(e: Error) -> MeopStatus {
    set_error(&e.to_string());
    status_of(&e)
}

fn null(what: &str) -> MeopStatus {
    set_error(&format!("null pointer: {what}"));
    MeopStatus::NullPointer
}

fn guard(f: impl FnOnce() -> MeopStatus) -> MeopStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => s,
        Err(_) => {
            set_error("internal panic");
            MeopStatus::Internal
        }
    }
}

/// Message of the last failed call on this thread. The pointer stays valid
/// until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn meop_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn meop_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

#[no_mangle]
pub extern "C" fn meop_motor_params_default() -> MeopMotorParams {
    let p = MotorParams::default();
    MeopMotorParams {
        resistance: p.resistance,
        inductance: p.inductance,
        back_emf_const: p.back_emf_const,
        torque_const: p.torque_const,
        inertia: p.inertia,
        viscous_drag: p.viscous_drag,
        gear_ratio: p.gear_ratio,
    }
}

#[no_mangle]
pub extern "C" fn meop_load_presets_default() -> MeopLoadPresets {
    let p = LoadPresets::default();
    MeopLoadPresets {
        friction: p.friction,
        window_start: p.window_start,
        window_end: p.window_end,
        low_peak: p.low_peak,
        high_peak: p.high_peak,
    }
}

#[no_mangle]
pub extern "C" fn meop_sensor_config_default() -> MeopSensorConfig {
    let s = SensorConfig::default();
    MeopSensorConfig { sample_rate: s.sample_rate, noise_sigma: s.noise_sigma, seed: s.seed }
}

#[no_mangle]
pub extern "C" fn meop_controller_config_default() -> MeopControllerConfig {
    let c = ControllerConfig::default();
    MeopControllerConfig {
        v_min: c.v_min,
        v_max: c.v_max,
        v_init: c.v_init,
        dv: c.dv,
        n_cycles: c.n_cycles,
        warmup_cycles: c.warmup_cycles,
        threshold_mode: match c.threshold_mode {
            ThresholdMode::Relative => MeopThresholdMode::Relative,
            ThresholdMode::Absolute => MeopThresholdMode::Absolute,
        },
        delta_plus: c.delta_plus,
        delta_minus: c.delta_minus,
        eps_load: c.eps_load,
        metric_floor: c.metric_floor,
        stall_raise_step: c.stall_raise_step,
    }
}

/// Create a plant at rest under `load`. Null `motor`, `presets` or `sensor`
/// select the defaults.
///
/// # Safety
/// Non-null pointers must point to valid structs; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn meop_plant_new(
    motor: *const MeopMotorParams,
    presets: *const MeopLoadPresets,
    sensor: *const MeopSensorConfig,
    load: MeopLoadKind,
    out: *mut *mut MeopPlant,
) -> MeopStatus {
    guard(|| {
        if out.is_null() {
            return null("out");
        }
        let motor = motor.as_ref().map(|m| MotorParams::from(*m)).unwrap_or_default();
        let presets = presets.as_ref().map(|p| LoadPresets::from(*p)).unwrap_or_default();
        let sensor = sensor
            .as_ref()
            .map(|s| SensorConfig { sample_rate: s.sample_rate, noise_sigma: s.noise_sigma, seed: s.seed })
            .unwrap_or_default();
        if let Err(e) = presets.validate() {
            return fail(e);
        }
        match Plant::new(motor, sensor, SimConfig::default(), presets.condition(load.into())) {
            Ok(plant) => {
                *out = Box::into_raw(Box::new(MeopPlant { plant, presets }));
                MeopStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// # Safety
/// `plant` must come from [`meop_plant_new`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn meop_plant_free(plant: *mut MeopPlant) {
    if !plant.is_null() {
        drop(Box::from_raw(plant));
    }
}

/// Switch the load condition; takes effect from the next cycle.
///
/// # Safety
/// `plant` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn meop_plant_set_load(plant: *mut MeopPlant, load: MeopLoadKind) -> MeopStatus {
    guard(|| match plant.as_mut() {
        Some(p) => {
            let cond = p.presets.condition(load.into());
            p.plant.set_condition(cond);
            MeopStatus::Ok
        }
        None => null("plant"),
    })
}

/// Simulated time of the plant (s), or NaN for a null handle.
///
/// # Safety
/// `plant` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn meop_plant_time(plant: *const MeopPlant) -> f64 {
    plant.as_ref().map_or(f64::NAN, |p| p.plant.time())
}

/// Run one output-shaft revolution at `voltage` and measure it.
///
/// # Safety
/// `plant` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn meop_plant_run_cycle(plant: *mut MeopPlant, voltage: f64, out: *mut MeopCycle) -> MeopStatus {
    guard(|| {
        let Some(p) = plant.as_mut() else { return null("plant") };
        let Some(out) = out.as_mut() else { return null("out") };
        if !voltage.is_finite() || voltage < 0.0 {
            set_error("voltage must be finite and >= 0");
            return MeopStatus::InvalidArgument;
        }
        let rec = match p.plant.run_cycle(voltage) {
            Ok(r) => r,
            Err(e) => return fail(e),
        };
        match measure(&rec) {
            Ok(m) => {
                *out = MeopCycle {
                    voltage: m.voltage,
                    period: m.period,
                    t_end: rec.t_end(),
                    energy: m.energy,
                    power: m.power,
                    features: features(&m.features),
                    n_samples: rec.samples.len(),
                };
                MeopStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

fn features(f: &meop_core::WaveformFeatures) -> MeopFeatures {
    MeopFeatures { peak: f.peak, valley: f.valley, ac: f.ac, dc: f.dc, ac_time: f.ac_time, metric: f.metric }
}

unsafe fn samples<'a>(ptr: *const f64, n: usize) -> Option<&'a [f64]> {
    if n == 0 {
        return Some(&[]);
    }
    (!ptr.is_null()).then(|| std::slice::from_raw_parts(ptr, n))
}

/// Waveform features of `n` current samples taken at `sample_rate` over a
/// cycle of length `period`.
///
/// # Safety
/// `samples_ptr` must point to `n` readable doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn meop_extract_features(
    samples_ptr: *const f64,
    n: usize,
    sample_rate: f64,
    period: f64,
    out: *mut MeopFeatures,
) -> MeopStatus {
    guard(|| {
        let Some(s) = samples(samples_ptr, n) else { return null("samples") };
        let Some(out) = out.as_mut() else { return null("out") };
        if !(sample_rate > 0.0) {
            set_error("sample_rate must be > 0");
            return MeopStatus::InvalidArgument;
        }
        match features_from_samples(s, sample_rate, period) {
            Ok(f) => {
                *out = features(&f);
                MeopStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// Energy per cycle `V · mean(I) · period` (J).
///
/// # Safety
/// `samples_ptr` must point to `n` readable doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn meop_cycle_energy(
    samples_ptr: *const f64,
    n: usize,
    voltage: f64,
    period: f64,
    out: *mut f64,
) -> MeopStatus {
    guard(|| {
        let Some(s) = samples(samples_ptr, n) else { return null("samples") };
        let Some(out) = out.as_mut() else { return null("out") };
        let rec = CycleRecord::from_samples(voltage, s.to_vec(), period, 1.0);
        match cycle_energy(&rec) {
            Ok(e) => {
                *out = e;
                MeopStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

fn command(state: &ControllerState, batch_done: bool, events: &[meop_core::controller::TimedEvent]) -> MeopCommand {
    MeopCommand {
        voltage: state.voltage,
        mode: state.mode.into(),
        v_star: state.v_star,
        batch_done,
        events: events.iter().fold(0, |acc, e| acc | event_bit(&e.event)),
    }
}

/// Create a controller and start Phase I at time 0. `first` (optional)
/// receives the initial command. A null `cfg` selects the defaults.
///
/// # Safety
/// Non-null pointers must be valid; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn meop_controller_new(
    cfg: *const MeopControllerConfig,
    out: *mut *mut MeopController,
    first: *mut MeopCommand,
) -> MeopStatus {
    guard(|| {
        if out.is_null() {
            return null("out");
        }
        let cfg = cfg.as_ref().map(|c| ControllerConfig::from(*c)).unwrap_or_default();
        match Controller::new(cfg) {
            Ok(controller) => {
                let (state, o) = controller.init(0.0);
                if let Some(first) = first.as_mut() {
                    *first = command(&state, false, &o.events);
                }
                *out = Box::into_raw(Box::new(MeopController { controller, state }));
                MeopStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// # Safety
/// `ctrl` must come from [`meop_controller_new`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn meop_controller_free(ctrl: *mut MeopController) {
    if !ctrl.is_null() {
        drop(Box::from_raw(ctrl));
    }
}

/// Feed one measured cycle taken at the currently commanded voltage.
///
/// # Safety
/// `ctrl` must be a live handle; `cycle` readable; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn meop_controller_on_cycle(
    ctrl: *mut MeopController,
    cycle: *const MeopCycle,
    out: *mut MeopCommand,
) -> MeopStatus {
    guard(|| {
        let Some(c) = ctrl.as_mut() else { return null("controller") };
        let Some(cy) = cycle.as_ref() else { return null("cycle") };
        let Some(out) = out.as_mut() else { return null("out") };
        let f = cy.features;
        let m = meop_core::CycleMeasurement {
            energy: cy.energy,
            power: cy.power,
            features: meop_core::WaveformFeatures {
                peak: f.peak,
                valley: f.valley,
                ac: f.ac,
                dc: f.dc,
                ac_time: f.ac_time,
                metric: f.metric,
            },
            period: cy.period,
            voltage: cy.voltage,
        };
        match c.controller.on_cycle(&c.state, m, cy.t_end) {
            Ok((state, reply)) => {
                c.state = state;
                *out = match reply {
                    Some((_, o)) => command(&c.state, true, &o.events),
                    None => command(&c.state, false, &[]),
                };
                MeopStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// Report a stall at the commanded voltage at simulated time `time`.
/// Returns `MEOP_STATUS_PLANT_CANNOT_RUN` if the stall happened at V_max.
///
/// # Safety
/// `ctrl` must be a live handle; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn meop_controller_on_stall(ctrl: *mut MeopController, time: f64, out: *mut MeopCommand) -> MeopStatus {
    guard(|| {
        let Some(c) = ctrl.as_mut() else { return null("controller") };
        let Some(out) = out.as_mut() else { return null("out") };
        match c.controller.on_stall(&c.state, time) {
            Ok((state, o)) => {
                c.state = state;
                *out = command(&c.state, false, &o.events);
                MeopStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// Current command without advancing the controller.
///
/// # Safety
/// `ctrl` must be a live handle; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn meop_controller_state(ctrl: *const MeopController, out: *mut MeopCommand) -> MeopStatus {
    guard(|| {
        let Some(c) = ctrl.as_ref() else { return null("controller") };
        let Some(out) = out.as_mut() else { return null("out") };
        *out = command(&c.state, false, &[]);
        MeopStatus::Ok
    })
}

