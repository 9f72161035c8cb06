//! Output-shaft load of the spring-compression mechanism.
//!
//! Per revolution the cam compresses a spring over a fixed angular window:
//! torque rises linearly from the friction baseline to `friction + peak`
//! and drops back instantly when the cam releases at the window end.

use std::f64::consts::TAU;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Periodic output-shaft torque profile (N·m, rad).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpringLoadProfile {
    pub friction: f64,
    pub peak: f64,
    pub window_start: f64,
    pub window_end: f64,
}

impl SpringLoadProfile {
    pub fn new(friction: f64, peak: f64, window_start: f64, window_end: f64) -> Result<Self> {
        let p = Self { friction, peak, window_start, window_end };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.friction, self.peak, self.window_start, self.window_end].iter().all(|v| v.is_finite());
        if !finite
            || self.friction < 0.0
            || self.peak < 0.0
            || self.window_start < 0.0
            || self.window_start >= self.window_end
            || self.window_end > TAU
        {
            return Err(Error::InvalidParams(format!("invalid spring profile {self:?}")));
        }
        Ok(())
    }

    /// Load torque at output-shaft angle `theta_out` (any real; reduced mod 2π).
    pub fn torque_at(&self, theta_out: f64) -> f64 {
        let theta = theta_out.rem_euclid(TAU);
        if theta >= self.window_start && theta < self.window_end {
            let ramp = (theta - self.window_start) / (self.window_end - self.window_start);
            self.friction + self.peak * ramp
        } else {
            self.friction
        }
    }

    /// Fraction of a revolution spent compressing.
    pub fn window_fraction(&self) -> f64 {
        (self.window_end - self.window_start) / TAU
    }

    /// Closed-form mean torque over one revolution.
    pub fn mean_torque(&self) -> f64 {
        self.friction + 0.5 * self.peak * self.window_fraction()
    }

    pub fn max_torque(&self) -> f64 {
        self.friction + self.peak
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LoadKind {
    None,
    Low,
    High,
}

impl LoadKind {
    pub const ALL: [LoadKind; 3] = [LoadKind::None, LoadKind::Low, LoadKind::High];

    pub fn as_str(&self) -> &'static str {
        match self {
            LoadKind::None => "none",
            LoadKind::Low => "low",
            LoadKind::High => "high",
        }
    }
}

impl fmt::Display for LoadKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for LoadKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "none" => Ok(LoadKind::None),
            "low" => Ok(LoadKind::Low),
            "high" => Ok(LoadKind::High),
            other => Err(Error::UnknownLoad(other.to_string())),
        }
    }
}

/// Preset table for the three springs. All torques at the output shaft.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LoadPresets {
    pub friction: f64,
    pub window_start: f64,
    pub window_end: f64,
    pub low_peak: f64,
    pub high_peak: f64,
}

impl Default for LoadPresets {
    fn default() -> Self {
        Self {
            friction: 1.0e-2,
            window_start: std::f64::consts::FRAC_PI_2,
            window_end: 1.5 * std::f64::consts::PI,
            low_peak: 7.5e-3,
            high_peak: 1.5e-2,
        }
    }
}

impl LoadPresets {
    pub fn validate(&self) -> Result<()> {
        for kind in LoadKind::ALL {
            self.profile(kind).validate()?;
        }
        if self.low_peak <= 0.0 || self.low_peak >= self.high_peak {
            return Err(Error::InvalidParams("load presets need 0 < low_peak < high_peak".into()));
        }
        Ok(())
    }

    pub fn profile(&self, kind: LoadKind) -> SpringLoadProfile {
        let peak = match kind {
            LoadKind::None => 0.0,
            LoadKind::Low => self.low_peak,
            LoadKind::High => self.high_peak,
        };
        SpringLoadProfile { friction: self.friction, peak, window_start: self.window_start, window_end: self.window_end }
    }

    pub fn condition(&self, kind: LoadKind) -> LoadCondition {
        LoadCondition { kind, profile: self.profile(kind) }
    }
}

/// A named loading condition.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LoadCondition {
    pub kind: LoadKind,
    pub profile: SpringLoadProfile,
}

impl LoadCondition {
    pub fn torque_at(&self, theta_out: f64) -> f64 {
        self.profile.torque_at(theta_out)
    }
}

/// Default preset for a condition name (`none`, `low`, `high`).
pub fn make_condition(name: &str) -> Result<LoadCondition> {
    let kind: LoadKind = name.parse()?;
    Ok(LoadPresets::default().condition(kind))
}
