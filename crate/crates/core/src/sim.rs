//! Fixed-step plant simulation, cycle segmentation and current sensing.
//!
//! The plant is advanced with classical RK4 at a fixed internal step. A
//! mechanical cycle is one output-shaft revolution, delimited by crossings of
//! multiples of 2π (ideal encoder). The current sensor runs on its own clock
//! and picks the integration step nearest to each sample instant.

use std::f64::consts::TAU;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::load::LoadCondition;
use crate::motor::{derivatives, quasi_static_current, MotorParams, MotorState};

/// Seeded generator used for every stochastic element of a run.
pub type SimRng = ChaCha8Rng;

pub fn seeded_rng(seed: u64) -> SimRng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SensorConfig {
    /// Sampling frequency (Hz).
    pub sample_rate: f64,
    /// Additive current-noise standard deviation (A).
    pub noise_sigma: f64,
    pub seed: u64,
}

impl Default for SensorConfig {
    fn default() -> Self {
        Self { sample_rate: 500.0, noise_sigma: 2.0e-3, seed: 0 }
    }
}

impl SensorConfig {
    pub fn noiseless() -> Self {
        Self { noise_sigma: 0.0, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sample_rate.is_finite() && self.sample_rate > 0.0) {
            return Err(Error::InvalidParams("sample_rate must be > 0".into()));
        }
        if !(self.noise_sigma.is_finite() && self.noise_sigma >= 0.0) {
            return Err(Error::InvalidParams("noise_sigma must be >= 0".into()));
        }
        Ok(())
    }

    pub fn sample_period(&self) -> f64 {
        1.0 / self.sample_rate
    }
}

/// Integrator settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimConfig {
    /// Internal integration step (s).
    pub dt: f64,
    /// Stall watchdog: longest admissible cycle (s).
    pub max_cycle_time: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self { dt: 2.0e-5, max_cycle_time: 10.0 }
    }
}

impl SimConfig {
    pub fn validate(&self, p: &MotorParams) -> Result<()> {
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(Error::InvalidParams("dt must be > 0".into()));
        }
        if self.dt > p.max_stable_dt() {
            return Err(Error::InvalidParams(format!(
                "dt = {} exceeds the stability bound {:.3e} s",
                self.dt,
                p.max_stable_dt()
            )));
        }
        if !(self.max_cycle_time.is_finite() && self.max_cycle_time > 0.0) {
            return Err(Error::InvalidParams("max_cycle_time must be > 0".into()));
        }
        Ok(())
    }
}

/// One sensor reading with the ground truth it was drawn from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub t: f64,
    pub true_current: f64,
    pub theta_out: f64,
}

/// Integrated power flows over a cycle, for the energy-balance check.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PowerAudit {
    /// ∫V·I dt
    pub electrical_input: f64,
    /// ∫I²R dt
    pub copper_loss: f64,
    /// ∫Ke·ω·I dt
    pub back_emf: f64,
    /// Δ(½·L·I²)
    pub magnetic_delta: f64,
    /// ∫Kt·I·ω dt
    pub shaft_input: f64,
    /// Δ(½·J·ω²)
    pub kinetic_delta: f64,
    /// ∫b·ω² dt
    pub drag_loss: f64,
    /// ∫(τ_load/G)·ω dt
    pub load_work: f64,
}

impl PowerAudit {
    /// Relative residual of the electrical balance.
    pub fn electrical_residual(&self) -> f64 {
        let rhs = self.copper_loss + self.back_emf + self.magnetic_delta;
        (self.electrical_input - rhs).abs() / self.electrical_input.abs().max(f64::MIN_POSITIVE)
    }

    /// Relative residual of the mechanical balance.
    pub fn mechanical_residual(&self) -> f64 {
        let rhs = self.kinetic_delta + self.drag_loss + self.load_work;
        (self.shaft_input - rhs).abs() / self.shaft_input.abs().max(f64::MIN_POSITIVE)
    }

    fn accumulate(&mut self, a: &Flows, b: &Flows, h: f64) {
        let trap = |x: f64, y: f64| 0.5 * h * (x + y);
        self.electrical_input += trap(a.electrical, b.electrical);
        self.copper_loss += trap(a.copper, b.copper);
        self.back_emf += trap(a.emf, b.emf);
        self.shaft_input += trap(a.shaft, b.shaft);
        self.drag_loss += trap(a.drag, b.drag);
        self.load_work += trap(a.load, b.load);
    }
}

struct Flows {
    electrical: f64,
    copper: f64,
    emf: f64,
    shaft: f64,
    drag: f64,
    load: f64,
}

impl Flows {
    fn at(s: &MotorState, voltage: f64, cond: &LoadCondition, p: &MotorParams) -> Self {
        let i = s.current;
        let w = s.omega;
        Self {
            electrical: voltage * i,
            copper: i * i * p.resistance,
            emf: p.back_emf_const * w * i,
            shaft: p.torque_const * i * w,
            drag: p.viscous_drag * w * w,
            load: p.reflect_torque(cond.torque_at(s.theta_out(p))) * w,
        }
    }
}

/// One mechanical cycle as seen by the controller.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CycleRecord {
    pub index: u64,
    /// Applied voltage, constant across the cycle (V).
    pub voltage: f64,
    /// Measured current samples (A) at `sample_rate`.
    pub samples: Vec<f64>,
    /// Ground truth at each sample instant, same length as `samples`.
    pub trace: Vec<TracePoint>,
    /// Cycle period (s).
    pub period: f64,
    pub t_start: f64,
    pub sample_rate: f64,
    pub audit: PowerAudit,
}

impl CycleRecord {
    /// Build a record from bare samples; used for synthetic waveforms and by
    /// bindings that feed measured data.
    pub fn from_samples(voltage: f64, samples: Vec<f64>, period: f64, sample_rate: f64) -> Self {
        let dt = 1.0 / sample_rate;
        let trace = samples
            .iter()
            .enumerate()
            .map(|(k, &i)| TracePoint { t: k as f64 * dt, true_current: i, theta_out: TAU * k as f64 * dt / period })
            .collect();
        Self { index: 0, voltage, samples, trace, period, t_start: 0.0, sample_rate, audit: PowerAudit::default() }
    }

    pub fn t_end(&self) -> f64 {
        self.t_start + self.period
    }

    /// Mean output-shaft speed over the cycle (rad/s).
    pub fn mean_speed_out(&self) -> f64 {
        TAU / self.period
    }
}

fn add(s: &MotorState, d: &Deriv3, h: f64) -> MotorState {
    MotorState { theta: s.theta + h * d.0, omega: s.omega + h * d.1, current: s.current + h * d.2, t: s.t + h }
}

struct Deriv3(f64, f64, f64);

fn rhs(s: &MotorState, voltage: f64, cond: &LoadCondition, p: &MotorParams) -> Result<Deriv3> {
    let tau = cond.torque_at(s.theta_out(p));
    let d = derivatives(s, voltage, tau, p)?;
    // the mechanism is not back-drivable: at standstill the load only holds
    let domega = if s.omega <= 0.0 { d.domega.max(0.0) } else { d.domega };
    Ok(Deriv3(d.dtheta, domega, d.dcurrent))
}

/// Advance the plant by one RK4 step of length `dt`.
pub fn step(state: &MotorState, voltage: f64, cond: &LoadCondition, p: &MotorParams, dt: f64) -> Result<MotorState> {
    let mut s0 = *state;
    if p.is_quasi_static() {
        s0.current = quasi_static_current(voltage, s0.omega, p);
    }
    let k1 = rhs(&s0, voltage, cond, p)?;
    let k2 = rhs(&add(&s0, &k1, 0.5 * dt), voltage, cond, p)?;
    let k3 = rhs(&add(&s0, &k2, 0.5 * dt), voltage, cond, p)?;
    let k4 = rhs(&add(&s0, &k3, dt), voltage, cond, p)?;
    let mut next = MotorState {
        theta: s0.theta + dt / 6.0 * (k1.0 + 2.0 * k2.0 + 2.0 * k3.0 + k4.0),
        omega: s0.omega + dt / 6.0 * (k1.1 + 2.0 * k2.1 + 2.0 * k3.1 + k4.1),
        current: s0.current + dt / 6.0 * (k1.2 + 2.0 * k2.2 + 2.0 * k3.2 + k4.2),
        t: s0.t + dt,
    };
    // unidirectional drive: the mechanism cannot be back-driven
    if next.omega < 0.0 {
        next.omega = 0.0;
    }
    if next.theta < s0.theta {
        next.theta = s0.theta;
    }
    if p.is_quasi_static() {
        next.current = quasi_static_current(voltage, next.omega, p);
    }
    if !next.is_finite() {
        return Err(Error::Diverged { t: next.t });
    }
    Ok(next)
}

/// One sensor reading: `true_current` plus zero-mean Gaussian noise.
pub fn sample_sensor<R: Rng + ?Sized>(true_current: f64, sensors: &SensorConfig, rng: &mut R) -> f64 {
    if sensors.noise_sigma == 0.0 {
        return true_current;
    }
    let z: f64 = rng.sample(StandardNormal);
    true_current + sensors.noise_sigma * z
}

/// Integer step index of a state on the fixed grid.
fn step_index(t: f64, dt: f64) -> u64 {
    (t / dt).round().max(0.0) as u64
}

/// Sensor clock: sample `k` is taken at integration step `round(k·spp)`.
struct SampleClock {
    steps_per_sample: f64,
    next_k: u64,
}

impl SampleClock {
    fn starting_at(step: u64, steps_per_sample: f64) -> Self {
        let mut k = (step as f64 / steps_per_sample).floor() as u64;
        while ((k as f64) * steps_per_sample).round() < step as f64 {
            k += 1;
        }
        Self { steps_per_sample, next_k: k }
    }

    fn due(&mut self, step: u64) -> bool {
        let target = ((self.next_k as f64) * self.steps_per_sample).round() as u64;
        if target <= step {
            // skip any samples that map to earlier steps (sample rate above 1/dt)
            while (((self.next_k as f64) * self.steps_per_sample).round() as u64) <= step {
                self.next_k += 1;
            }
            true
        } else {
            false
        }
    }
}

/// Run the plant at constant `voltage` until the output shaft completes the
/// revolution that is in progress, sampling the current along the way.
///
/// The cycle starts at `t_start` (the previous boundary crossing, or the
/// state time for a fresh start) and ends when `theta_out` crosses the next
/// multiple of 2π. The returned state is the first integration step past the
/// crossing; the crossing time itself is interpolated.
#[allow(clippy::too_many_arguments)]
pub fn run_cycle<R: Rng + ?Sized>(
    state: &MotorState,
    t_start: f64,
    index: u64,
    voltage: f64,
    cond: &LoadCondition,
    p: &MotorParams,
    sensors: &SensorConfig,
    sim: &SimConfig,
    rng: &mut R,
) -> Result<(CycleRecord, MotorState)> {
    if !voltage.is_finite() || voltage < 0.0 {
        return Err(Error::InvalidParams(format!("voltage {voltage} out of range")));
    }
    let dt = sim.dt;
    let theta_out0 = state.theta_out(p);
    let boundary_out = ((theta_out0 / TAU).floor() + 1.0) * TAU;
    let boundary = boundary_out * p.gear_ratio;

    let mut s = *state;
    if p.is_quasi_static() {
        s.current = quasi_static_current(voltage, s.omega, p);
    }
    let mut clock = SampleClock::starting_at(step_index(s.t, dt), dt.recip() / sensors.sample_rate);
    let mut samples = Vec::new();
    let mut trace = Vec::new();
    let mut audit = PowerAudit::default();

    let take = |s: &MotorState, samples: &mut Vec<f64>, trace: &mut Vec<TracePoint>, rng: &mut R| {
        samples.push(sample_sensor(s.current, sensors, rng));
        trace.push(TracePoint { t: s.t, true_current: s.current, theta_out: s.theta_out(p) });
    };

    if clock.due(step_index(s.t, dt)) {
        take(&s, &mut samples, &mut trace, rng);
    }
    let start = s;
    let mut flows = Flows::at(&s, voltage, cond, p);
    loop {
        let next = step(&s, voltage, cond, p, dt)?;
        let next_flows = Flows::at(&next, voltage, cond, p);
        if next.theta >= boundary {
            // interpolate the crossing inside this step
            let frac = ((boundary - s.theta) / (next.theta - s.theta)).clamp(0.0, 1.0);
            let h = frac * dt;
            let lerp = |a: f64, b: f64| a + frac * (b - a);
            let cross = MotorState {
                theta: boundary,
                omega: lerp(s.omega, next.omega),
                current: lerp(s.current, next.current),
                t: s.t + h,
            };
            let cross_flows = Flows::at(&cross, voltage, cond, p);
            audit.accumulate(&flows, &cross_flows, h);
            audit.magnetic_delta = 0.5 * p.inductance * (cross.current.powi(2) - start.current.powi(2));
            audit.kinetic_delta = 0.5 * p.inertia * (cross.omega.powi(2) - start.omega.powi(2));
            let record = CycleRecord {
                index,
                voltage,
                samples,
                trace,
                period: cross.t - t_start,
                t_start,
                sample_rate: sensors.sample_rate,
                audit,
            };
            return Ok((record, next));
        }
        audit.accumulate(&flows, &next_flows, dt);
        s = next;
        flows = next_flows;
        if clock.due(step_index(s.t, dt)) {
            take(&s, &mut samples, &mut trace, rng);
        }
        if s.t - t_start > sim.max_cycle_time {
            return Err(Error::Stall { voltage, max_cycle_time: sim.max_cycle_time });
        }
    }
}

/// Stateful wrapper around [`run_cycle`]: owns the plant state, the cycle
/// counter and the noise generator of one simulation run.
#[derive(Debug, Clone)]
pub struct Plant {
    pub params: MotorParams,
    pub sensors: SensorConfig,
    pub sim: SimConfig,
    pub condition: LoadCondition,
    state: MotorState,
    boundary_time: f64,
    cycles: u64,
    rng: SimRng,
}

impl Plant {
    pub fn new(params: MotorParams, sensors: SensorConfig, sim: SimConfig, condition: LoadCondition) -> Result<Self> {
        params.validate()?;
        sensors.validate()?;
        sim.validate(&params)?;
        condition.profile.validate()?;
        Ok(Self {
            params,
            sensors,
            sim,
            condition,
            state: MotorState::at_rest(),
            boundary_time: 0.0,
            cycles: 0,
            rng: seeded_rng(sensors.seed),
        })
    }

    pub fn state(&self) -> &MotorState {
        &self.state
    }

    /// Time of the last cycle boundary (s).
    pub fn time(&self) -> f64 {
        self.boundary_time
    }

    pub fn cycles(&self) -> u64 {
        self.cycles
    }

    pub fn set_condition(&mut self, condition: LoadCondition) {
        self.condition = condition;
    }

    /// Bring the shaft to rest at the current angle, keeping the clock.
    /// Used after a stall so the next command starts from a defined state.
    pub fn halt(&mut self) {
        self.state.omega = 0.0;
        self.state.current = 0.0;
        self.boundary_time = self.state.t;
        // restart the revolution count at the current position
    }

    pub fn run_cycle(&mut self, voltage: f64) -> Result<CycleRecord> {
        let result = run_cycle(
            &self.state,
            self.boundary_time,
            self.cycles,
            voltage,
            &self.condition,
            &self.params,
            &self.sensors,
            &self.sim,
            &mut self.rng,
        );
        match result {
            Ok((record, next)) => {
                self.state = next;
                self.boundary_time = record.t_end();
                self.cycles += 1;
                Ok(record)
            }
            Err(e) => {
                if matches!(e, Error::Stall { .. }) {
                    // the watchdog consumed max_cycle_time of process time
                    self.state.t = self.boundary_time + self.sim.max_cycle_time;
                    self.halt();
                }
                Err(e)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::load::{make_condition, LoadPresets, LoadKind};
    use crate::motor::{steady_state_speed, stall_voltage};

    #[test]
    fn zero_voltage_at_rest_only_advances_time() {
        let p = MotorParams::default();
        let cond = make_condition("none").unwrap();
        let s = step(&MotorState::at_rest(), 0.0, &cond, &p, 2e-5).unwrap();
        assert_eq!(s.theta, 0.0);
        assert_eq!(s.omega, 0.0);
        assert_eq!(s.current, 0.0);
        assert!((s.t - 2e-5).abs() < 1e-18);
    }

    #[test]
    fn sensor_identity_without_noise() {
        let mut rng = seeded_rng(1);
        assert_eq!(sample_sensor(0.123, &SensorConfig::noiseless(), &mut rng), 0.123);
    }

    #[test]
    fn sensor_statistics() {
        let cfg = SensorConfig { noise_sigma: 2e-3, ..SensorConfig::default() };
        let mut rng = seeded_rng(7);
        let n = 100_000;
        let xs: Vec<f64> = (0..n).map(|_| sample_sensor(0.05, &cfg, &mut rng)).collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        assert!((mean - 0.05).abs() < 3.0 * cfg.noise_sigma / (n as f64).sqrt());
        assert!((var / cfg.noise_sigma.powi(2) - 1.0).abs() < 0.05);
    }

    #[test]
    fn stall_below_boundary() {
        let p = MotorParams::default();
        let cond = LoadPresets::default().condition(LoadKind::High);
        let vs = stall_voltage(p.reflect_torque(cond.profile.mean_torque()), &p);
        let sim = SimConfig { max_cycle_time: 2.0, ..SimConfig::default() };
        let mut rng = seeded_rng(0);
        let r = run_cycle(&MotorState::at_rest(), 0.0, 0, 0.9 * vs, &cond, &p, &SensorConfig::noiseless(), &sim, &mut rng);
        assert!(matches!(r, Err(Error::Stall { .. })));
    }

    #[test]
    fn sample_count_matches_period() {
        let p = MotorParams::default();
        let cond = make_condition("low").unwrap();
        let mut plant = Plant::new(p, SensorConfig::default(), SimConfig::default(), cond).unwrap();
        for _ in 0..4 {
            let r = plant.run_cycle(3.0).unwrap();
            let n = r.samples.len() as f64;
            assert!((n - r.period * r.sample_rate).abs() <= 1.0, "n={n} T={}", r.period);
        }
    }

    #[test]
    fn constant_torque_terminal_speed() {
        // a load with zero spring is a constant torque
        let p = MotorParams::default();
        let cond = make_condition("none").unwrap();
        let tau_m = p.reflect_torque(cond.profile.friction);
        let target = steady_state_speed(3.0, tau_m, &p).unwrap();
        let mut s = MotorState::at_rest();
        let steps = (10.0 * p.mechanical_time_constant() / 2e-5).ceil() as usize;
        for _ in 0..steps {
            s = step(&s, 3.0, &cond, &p, 2e-5).unwrap();
        }
        assert!((s.omega / target - 1.0).abs() < 1e-3);
    }
}
