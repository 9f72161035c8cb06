//! Minimum-energy operating-point tracker.
//!
//! The tracker is a pure transition function driven by measurement batches.
//! Each batch is the average of `n_cycles` consecutive cycles measured at
//! the commanded voltage (after `warmup_cycles` settling cycles that follow
//! every voltage change).
//!
//! * `PhaseISearch` / `DownwardSweep`: step the voltage down by `dv` while
//!   the averaged energy does not increase; settle on the best voltage.
//! * `Monitoring`: hold the best voltage and compare the load metric with
//!   the reference taken on arrival. A drop below `delta_minus` starts a
//!   downward sweep from the current optimum; a rise above `delta_plus`
//!   starts `RaiseConverge`.
//! * `RaiseConverge`: step the voltage up until the metric stops changing
//!   (within `eps_load`), then sweep down from there.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{average_batch, CycleMeasurement};

/// Voltages are kept on a 1 nV lattice so repeated `±dv` steps land on the
/// same grid values as a sweep.
const VOLTAGE_QUANTUM: f64 = 1e-9;

fn snap(v: f64) -> f64 {
    (v / VOLTAGE_QUANTUM).round() * VOLTAGE_QUANTUM
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ThresholdMode {
    /// Thresholds are fractions of `max(L_ref, metric_floor)`.
    Relative,
    /// Thresholds are absolute metric values (A·s).
    Absolute,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ControllerConfig {
    pub v_min: f64,
    pub v_max: f64,
    pub v_init: f64,
    pub dv: f64,
    /// Cycles averaged per measurement batch.
    pub n_cycles: usize,
    /// Cycles discarded after each voltage change.
    pub warmup_cycles: usize,
    pub threshold_mode: ThresholdMode,
    pub delta_plus: f64,
    pub delta_minus: f64,
    pub eps_load: f64,
    /// Lower bound on the reference used by relative thresholds (A·s).
    pub metric_floor: f64,
    /// Voltage raise applied on a stall outside a downward search.
    pub stall_raise_step: f64,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        Self {
            v_min: 1.0,
            v_max: 5.0,
            v_init: 5.0,
            dv: 0.2,
            n_cycles: 3,
            warmup_cycles: 2,
            threshold_mode: ThresholdMode::Relative,
            delta_plus: 0.5,
            delta_minus: -0.4,
            eps_load: 0.05,
            metric_floor: 1e-4,
            stall_raise_step: 0.2,
        }
    }
}

impl ControllerConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        let vals = [
            self.v_min,
            self.v_max,
            self.v_init,
            self.dv,
            self.delta_plus,
            self.delta_minus,
            self.eps_load,
            self.metric_floor,
            self.stall_raise_step,
        ];
        if vals.iter().any(|v| !v.is_finite()) {
            return bad("all values must be finite");
        }
        if !(self.v_min < self.v_max) {
            return bad("v_min must be < v_max");
        }
        if !(self.dv > 0.0 && self.dv <= self.v_max - self.v_min) {
            return bad("dv must be in (0, v_max - v_min]");
        }
        if !(self.v_min <= self.v_init && self.v_init <= self.v_max) {
            return bad("v_init must lie in [v_min, v_max]");
        }
        if !(self.delta_minus < 0.0 && 0.0 < self.delta_plus) {
            return bad("need delta_minus < 0 < delta_plus");
        }
        if !(self.eps_load > 0.0) {
            return bad("eps_load must be > 0");
        }
        if self.n_cycles == 0 {
            return bad("n_cycles must be >= 1");
        }
        if !(self.metric_floor > 0.0) {
            return bad("metric_floor must be > 0");
        }
        if !(self.stall_raise_step > 0.0) {
            return bad("stall_raise_step must be > 0");
        }
        Ok(())
    }

    fn scale(&self, l_ref: f64) -> f64 {
        match self.threshold_mode {
            ThresholdMode::Relative => l_ref.max(self.metric_floor),
            ThresholdMode::Absolute => 1.0,
        }
    }

    /// Resolved `(delta_plus, delta_minus, eps_load)` for a reference metric.
    pub fn thresholds(&self, l_ref: f64) -> (f64, f64, f64) {
        let s = self.scale(l_ref);
        (self.delta_plus * s, self.delta_minus * s, self.eps_load * s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Mode {
    PhaseISearch,
    Monitoring,
    DownwardSweep,
    RaiseConverge,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Mode::PhaseISearch => "phase_i_search",
            Mode::Monitoring => "monitoring",
            Mode::DownwardSweep => "downward_sweep",
            Mode::RaiseConverge => "raise_converge",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum Event {
    SearchStarted,
    OptimumFound { v_star: f64, e_min: f64 },
    LoadIncreaseDetected { delta: f64 },
    LoadDecreaseDetected { delta: f64 },
    MetricConverged,
    StallRecovered,
}

impl Event {
    pub fn name(&self) -> &'static str {
        match self {
            Event::SearchStarted => "search_started",
            Event::OptimumFound { .. } => "optimum_found",
            Event::LoadIncreaseDetected { .. } => "load_increase_detected",
            Event::LoadDecreaseDetected { .. } => "load_decrease_detected",
            Event::MetricConverged => "metric_converged",
            Event::StallRecovered => "stall_recovered",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimedEvent {
    pub time: f64,
    pub event: Event,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControllerOutput {
    /// Voltage for the next batch.
    pub command: f64,
    pub events: Vec<TimedEvent>,
}

/// One averaged measurement batch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Batch {
    /// Averaged energy per cycle (J).
    pub energy: f64,
    /// Averaged load metric (A·s).
    pub metric: f64,
    /// Time the batch completed (s).
    pub time: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControllerState {
    pub mode: Mode,
    /// Commanded voltage.
    pub voltage: f64,
    pub v_star: f64,
    /// Best averaged energy of the running search; `None` before its first batch.
    pub e_min: Option<f64>,
    pub l_ref: Option<f64>,
    pub l_prev: Option<f64>,
    pub cycle_buffer: Vec<CycleMeasurement>,
    /// Cycles still to discard before measuring at the commanded voltage.
    pub warmup_left: usize,
}

/// Stateless transition function over [`ControllerState`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Controller {
    cfg: ControllerConfig,
}

impl Controller {
    pub fn new(cfg: ControllerConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self { cfg })
    }

    pub fn config(&self) -> &ControllerConfig {
        &self.cfg
    }

    pub fn init(&self, time: f64) -> (ControllerState, ControllerOutput) {
        let v = snap(self.cfg.v_init);
        let state = ControllerState {
            mode: Mode::PhaseISearch,
            voltage: v,
            v_star: v,
            e_min: None,
            l_ref: None,
            l_prev: None,
            cycle_buffer: Vec::new(),
            warmup_left: self.cfg.warmup_cycles,
        };
        let out = ControllerOutput { command: v, events: vec![TimedEvent { time, event: Event::SearchStarted }] };
        (state, out)
    }

    /// Feed one completed cycle. Returns the batch transition once
    /// `n_cycles` post-warm-up cycles have accumulated.
    pub fn on_cycle(
        &self,
        state: &ControllerState,
        m: CycleMeasurement,
        time: f64,
    ) -> Result<(ControllerState, Option<(Batch, ControllerOutput)>)> {
        let mut next = state.clone();
        if next.warmup_left > 0 {
            next.warmup_left -= 1;
            return Ok((next, None));
        }
        next.cycle_buffer.push(m);
        if next.cycle_buffer.len() < self.cfg.n_cycles {
            return Ok((next, None));
        }
        let avg = average_batch(&next.cycle_buffer, self.cfg.n_cycles)?;
        next.cycle_buffer.clear();
        let batch = Batch { energy: avg.energy, metric: avg.metric, time };
        let (s, out) = self.on_batch(&next, batch);
        Ok((s, Some((batch, out))))
    }

    /// Apply one averaged batch measured at `state.voltage`.
    pub fn on_batch(&self, state: &ControllerState, batch: Batch) -> (ControllerState, ControllerOutput) {
        let mut s = state.clone();
        let mut events = Vec::new();
        let t = batch.time;
        match s.mode {
            Mode::PhaseISearch | Mode::DownwardSweep => {
                let improved = s.e_min.is_none_or(|e| batch.energy <= e);
                if improved {
                    s.e_min = Some(batch.energy);
                    s.v_star = s.voltage;
                    self.step_down_or_finish(&mut s, &mut events, t);
                } else {
                    self.finish_search(&mut s, &mut events, t);
                }
            }
            Mode::Monitoring => match s.l_ref {
                None => s.l_ref = Some(batch.metric),
                Some(l_ref) => {
                    let (d_plus, d_minus, _) = self.cfg.thresholds(l_ref);
                    let delta = batch.metric - l_ref;
                    if delta < d_minus {
                        events.push(TimedEvent { time: t, event: Event::LoadDecreaseDetected { delta } });
                        // the next batch re-measures the energy at V* before stepping down
                        s.mode = Mode::DownwardSweep;
                        s.e_min = None;
                    } else if delta > d_plus {
                        events.push(TimedEvent { time: t, event: Event::LoadIncreaseDetected { delta } });
                        s.mode = Mode::RaiseConverge;
                        s.l_prev = Some(batch.metric);
                        if self.can_raise(s.voltage) {
                            s.voltage = snap(s.voltage + self.cfg.dv);
                        } else {
                            self.converge(&mut s, &mut events, batch);
                        }
                    }
                }
            },
            Mode::RaiseConverge => {
                let l_ref = s.l_ref.unwrap_or(0.0);
                let (_, _, eps) = self.cfg.thresholds(l_ref);
                let settled = s.l_prev.is_some_and(|p| (batch.metric - p).abs() < eps);
                if settled || !self.can_raise(s.voltage) {
                    self.converge(&mut s, &mut events, batch);
                } else {
                    s.l_prev = Some(batch.metric);
                    s.voltage = snap(s.voltage + self.cfg.dv);
                }
            }
        }
        self.emit(s, events, state.voltage)
    }

    /// React to a stall reported at the commanded voltage.
    pub fn on_stall(&self, state: &ControllerState, time: f64) -> Result<(ControllerState, ControllerOutput)> {
        let mut s = state.clone();
        let mut events = vec![TimedEvent { time, event: Event::StallRecovered }];
        s.cycle_buffer.clear();
        match s.mode {
            Mode::PhaseISearch | Mode::DownwardSweep if s.e_min.is_some() => {
                // the last accepted voltage of this search is the answer
                self.finish_search(&mut s, &mut events, time);
            }
            _ => {
                if s.voltage >= self.cfg.v_max - VOLTAGE_QUANTUM {
                    return Err(Error::PlantCannotRun(s.voltage));
                }
                s.voltage = snap((s.voltage + self.cfg.stall_raise_step).min(self.cfg.v_max));
                if s.mode == Mode::Monitoring {
                    s.mode = Mode::RaiseConverge;
                }
                s.l_prev = None;
                if matches!(s.mode, Mode::PhaseISearch | Mode::DownwardSweep) {
                    s.v_star = s.voltage;
                }
            }
        }
        // a stall always disturbs the shaft; settle again even if V is unchanged
        let mut out = self.emit(s, events, f64::NAN);
        out.0.warmup_left = self.cfg.warmup_cycles;
        Ok(out)
    }

    fn can_raise(&self, v: f64) -> bool {
        v + self.cfg.dv <= self.cfg.v_max + VOLTAGE_QUANTUM
    }

    fn can_lower(&self, v: f64) -> bool {
        v - self.cfg.dv >= self.cfg.v_min - VOLTAGE_QUANTUM
    }

    fn step_down_or_finish(&self, s: &mut ControllerState, events: &mut Vec<TimedEvent>, t: f64) {
        if self.can_lower(s.voltage) {
            s.voltage = snap(s.voltage - self.cfg.dv);
        } else {
            self.finish_search(s, events, t);
        }
    }

    fn finish_search(&self, s: &mut ControllerState, events: &mut Vec<TimedEvent>, t: f64) {
        s.mode = Mode::Monitoring;
        s.voltage = s.v_star;
        s.l_ref = None;
        s.l_prev = None;
        let e_min = s.e_min.unwrap_or(f64::NAN);
        events.push(TimedEvent { time: t, event: Event::OptimumFound { v_star: s.v_star, e_min } });
    }

    /// Metric settled during a raise: start a downward sweep seeded with the
    /// batch just measured at the settled voltage.
    fn converge(&self, s: &mut ControllerState, events: &mut Vec<TimedEvent>, batch: Batch) {
        events.push(TimedEvent { time: batch.time, event: Event::MetricConverged });
        s.mode = Mode::DownwardSweep;
        s.l_prev = None;
        s.e_min = Some(batch.energy);
        s.v_star = s.voltage;
        self.step_down_or_finish(s, events, batch.time);
    }

    fn emit(
        &self,
        mut s: ControllerState,
        events: Vec<TimedEvent>,
        previous_command: f64,
    ) -> (ControllerState, ControllerOutput) {
        if s.voltage != previous_command {
            s.warmup_left = self.cfg.warmup_cycles;
            s.cycle_buffer.clear();
        }
        debug_assert!(s.voltage >= self.cfg.v_min - VOLTAGE_QUANTUM && s.voltage <= self.cfg.v_max + VOLTAGE_QUANTUM);
        let out = ControllerOutput { command: s.voltage, events };
        (s, out)
    }
}
