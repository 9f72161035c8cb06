//! Brushed DC motor with an ideal reduction gearbox.
//!
//! Electrical side: `V = I·R + L·dI/dt + Ke·ω`.
//! Mechanical side: `Kt·I = J·dω/dt + b·ω + τ_load/G`, with the output-shaft
//! load reflected through the gearbox ratio `G`.
//!
//! All quantities are SI and refer to the motor shaft unless the name says
//! `out`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Physical constants of the motor + gearbox plant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MotorParams {
    /// Winding resistance (Ω).
    pub resistance: f64,
    /// Winding inductance (H). Zero selects the quasi-static electrical model.
    pub inductance: f64,
    /// Back-EMF constant (V·s/rad).
    pub back_emf_const: f64,
    /// Torque constant (N·m/A).
    pub torque_const: f64,
    /// Rotor inertia (kg·m²).
    pub inertia: f64,
    /// Viscous drag coefficient (N·m·s/rad).
    pub viscous_drag: f64,
    /// Gearbox reduction ratio (motor turns per output turn).
    pub gear_ratio: f64,
}

impl Default for MotorParams {
    fn default() -> Self {
        Self {
            resistance: 2.4,
            inductance: 1.0e-4,
            back_emf_const: 5.0e-4,
            torque_const: 5.0e-4,
            inertia: 6.25e-10,
            viscous_drag: 8.75e-9,
            gear_ratio: 136.0,
        }
    }
}

impl MotorParams {
    pub fn validate(&self) -> Result<()> {
        let all = [
            self.resistance,
            self.inductance,
            self.back_emf_const,
            self.torque_const,
            self.inertia,
            self.viscous_drag,
            self.gear_ratio,
        ];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParams("motor parameters must be finite".into()));
        }
        let checks = [
            (self.resistance > 0.0, "resistance must be > 0"),
            (self.inductance >= 0.0, "inductance must be >= 0"),
            (self.back_emf_const > 0.0, "back_emf_const must be > 0"),
            (self.torque_const > 0.0, "torque_const must be > 0"),
            (self.inertia > 0.0, "inertia must be > 0"),
            (self.viscous_drag >= 0.0, "viscous_drag must be >= 0"),
            (self.gear_ratio >= 1.0, "gear_ratio must be >= 1"),
        ];
        for (ok, msg) in checks {
            if !ok {
                return Err(Error::InvalidParams(msg.into()));
            }
        }
        Ok(())
    }

    /// True when the winding inductance is zero and current is algebraic.
    pub fn is_quasi_static(&self) -> bool {
        self.inductance == 0.0
    }

    /// Output-shaft torque reflected to the motor shaft.
    pub fn reflect_torque(&self, tau_out: f64) -> f64 {
        tau_out / self.gear_ratio
    }

    /// Electrical time constant L/R (s).
    pub fn electrical_time_constant(&self) -> f64 {
        self.inductance / self.resistance
    }

    /// Mechanical time constant J / (b + Kt·Ke/R) (s).
    pub fn mechanical_time_constant(&self) -> f64 {
        self.inertia / self.effective_damping()
    }

    /// Largest explicit RK4 step that keeps the electrical mode inside the
    /// stability region, with margin (`2.5·L/R`). Infinite for the quasi-static model.
    pub fn max_stable_dt(&self) -> f64 {
        if self.is_quasi_static() {
            // mechanical pole only
            2.5 * self.mechanical_time_constant()
        } else {
            2.5 * self.electrical_time_constant().min(self.mechanical_time_constant())
        }
    }

    fn effective_damping(&self) -> f64 {
        self.viscous_drag + self.torque_const * self.back_emf_const / self.resistance
    }
}

/// Dynamic state of the plant.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MotorState {
    /// Cumulative motor-shaft angle (rad).
    pub theta: f64,
    /// Motor-shaft angular velocity (rad/s), never negative.
    pub omega: f64,
    /// Winding current (A).
    pub current: f64,
    /// Simulation time (s).
    pub t: f64,
}

impl MotorState {
    pub fn at_rest() -> Self {
        Self::default()
    }

    pub fn is_finite(&self) -> bool {
        self.theta.is_finite() && self.omega.is_finite() && self.current.is_finite() && self.t.is_finite()
    }

    /// Output-shaft angle (rad).
    pub fn theta_out(&self, p: &MotorParams) -> f64 {
        self.theta / p.gear_ratio
    }

    /// Output-shaft speed (rad/s).
    pub fn omega_out(&self, p: &MotorParams) -> f64 {
        self.omega / p.gear_ratio
    }
}

/// Time derivatives of `(theta, omega, current)`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Derivatives {
    pub dtheta: f64,
    pub domega: f64,
    pub dcurrent: f64,
}

/// Right-hand side of the plant ODE.
///
/// With zero inductance the current is not a state: `dcurrent` is reported
/// as zero and callers use [`quasi_static_current`] instead.
pub fn derivatives(state: &MotorState, voltage: f64, tau_load_out: f64, p: &MotorParams) -> Result<Derivatives> {
    if !state.is_finite() || !voltage.is_finite() || !tau_load_out.is_finite() {
        return Err(Error::InvalidState);
    }
    let current = if p.is_quasi_static() {
        quasi_static_current(voltage, state.omega, p)
    } else {
        state.current
    };
    let dcurrent = if p.is_quasi_static() {
        0.0
    } else {
        (voltage - current * p.resistance - p.back_emf_const * state.omega) / p.inductance
    };
    let domega =
        (p.torque_const * current - p.viscous_drag * state.omega - p.reflect_torque(tau_load_out)) / p.inertia;
    Ok(Derivatives { dtheta: state.omega, domega, dcurrent })
}

/// Current of the zero-inductance winding at speed `omega`.
pub fn quasi_static_current(voltage: f64, omega: f64, p: &MotorParams) -> f64 {
    (voltage - p.back_emf_const * omega) / p.resistance
}

/// Closed-form steady speed (rad/s, motor shaft) under a constant
/// motor-shaft load torque. Clamped to zero below the stall voltage.
pub fn steady_state_speed(voltage: f64, tau_load_motor: f64, p: &MotorParams) -> Result<f64> {
    if !voltage.is_finite() || !tau_load_motor.is_finite() {
        return Err(Error::InvalidState);
    }
    Ok(steady_state_speed_unclamped(voltage, tau_load_motor, p).max(0.0))
}

/// Same as [`steady_state_speed`] without the stall clamp.
pub fn steady_state_speed_unclamped(voltage: f64, tau_load_motor: f64, p: &MotorParams) -> f64 {
    ((p.torque_const / p.resistance) * voltage - tau_load_motor) / p.effective_damping()
}

/// Steady winding current at speed `omega`. Only the motoring regime
/// (`V >= Ke·ω`) is supported.
pub fn steady_state_current(voltage: f64, omega: f64, p: &MotorParams) -> Result<f64> {
    if !voltage.is_finite() || !omega.is_finite() {
        return Err(Error::InvalidState);
    }
    if voltage < p.back_emf_const * omega {
        return Err(Error::Regenerative);
    }
    Ok(quasi_static_current(voltage, omega, p))
}

/// Voltage below which the closed-form speed is zero for the given
/// motor-shaft load torque.
pub fn stall_voltage(tau_load_motor: f64, p: &MotorParams) -> f64 {
    p.resistance * tau_load_motor / p.torque_const
}
