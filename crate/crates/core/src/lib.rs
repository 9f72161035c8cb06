//! Minimum-energy operating-point tracking for brushed DC gearmotors.
//!
//! * [`motor`]: plant ODE and closed-form steady state.
//! * [`load`]: spring-compression load profile and presets.
//! * [`sim`]: fixed-step simulation, cycle segmentation, current sensing.
//! * [`metrics`]: energy per cycle and the current-waveform load metric.
//! * [`controller`]: the two-phase tracking state machine.
//! * [`harness`]: sweeps, transition trials, reports.

pub mod controller;
pub mod error;
pub mod harness;
pub mod load;
pub mod metrics;
pub mod motor;
pub mod sim;
pub mod validate;

pub use controller::{Batch, Controller, ControllerConfig, ControllerOutput, ControllerState, Event, Mode};
pub use error::{Error, Result};
pub use load::{make_condition, LoadCondition, LoadKind, LoadPresets, SpringLoadProfile};
pub use metrics::{CycleMeasurement, WaveformFeatures};
pub use motor::{MotorParams, MotorState};
pub use sim::{CycleRecord, Plant, SensorConfig, SimConfig};
