//! Scenario files.
//!
//! A scenario is a flat list of `section.key = value` lines (TOML dotted
//! keys). Every section and key is optional and falls back to the built-in
//! default; unknown keys are rejected. See `README.md` for the key list.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::controller::ControllerConfig;
use crate::error::{Error, Result};
use crate::load::{LoadCondition, LoadKind, LoadPresets};
use crate::motor::MotorParams;
use crate::sim::{SensorConfig, SimConfig};

/// Voltage grid of a sweep, from `start` down to `stop` in `step` decrements.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepConfig {
    pub v_start: f64,
    pub v_stop: f64,
    pub v_step: f64,
    pub warmup_cycles: usize,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self { v_start: 5.0, v_stop: 1.0, v_step: 0.2, warmup_cycles: 2 }
    }
}

impl SweepConfig {
    /// Grid voltages in descending order, snapped to 1 nV.
    pub fn grid(&self) -> Vec<f64> {
        let n = ((self.v_start - self.v_stop) / self.v_step + 1e-9).floor() as usize;
        (0..=n).map(|k| ((self.v_start - k as f64 * self.v_step) * 1e9).round() / 1e9).collect()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.v_step > 0.0 && self.v_start >= self.v_stop && self.v_stop >= 0.0) {
            return Err(Error::Scenario("sweep grid needs v_start >= v_stop >= 0 and v_step > 0".into()));
        }
        Ok(())
    }
}

/// A step in the load schedule: from `time` on, the load is `kind`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScheduleEntry {
    pub time: f64,
    pub kind: LoadKind,
}

/// Run-level settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Load schedule as `"t0:kind, t1:kind, ..."`, first time must be 0.
    pub schedule: String,
    /// Simulated time per trial (s).
    pub duration: f64,
    pub trials: usize,
    pub base_seed: u64,
    /// Averaging settings compared by `batch`.
    pub averaging: Vec<usize>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            schedule: "0:low, 60:high".into(),
            duration: 150.0,
            trials: 20,
            base_seed: 1,
            averaging: vec![1, 3, 5],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Scenario {
    pub scenario: RunConfig,
    pub motor: MotorParams,
    pub load: LoadPresets,
    pub sensor: SensorConfig,
    pub sim: SimConfig,
    pub controller: ControllerConfig,
    pub sweep: SweepConfig,
}

impl Scenario {
    pub fn from_str(text: &str) -> Result<Self> {
        let s: Scenario = toml::from_str(text).map_err(|e| Error::Scenario(e.to_string()))?;
        s.validate()?;
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_str(&text).map_err(|e| match e {
            Error::Scenario(m) => Error::Scenario(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn validate(&self) -> Result<()> {
        let wrap = |e: Error| Error::Scenario(e.to_string());
        self.motor.validate().map_err(wrap)?;
        self.load.validate().map_err(wrap)?;
        self.sensor.validate().map_err(wrap)?;
        self.sim.validate(&self.motor).map_err(wrap)?;
        self.controller.validate().map_err(wrap)?;
        self.sweep.validate()?;
        let schedule = self.schedule()?;
        if self.scenario.trials == 0 {
            return Err(Error::Scenario("trials must be >= 1".into()));
        }
        if !(self.scenario.duration > 0.0) {
            return Err(Error::Scenario("duration must be > 0".into()));
        }
        if self.scenario.averaging.is_empty() || self.scenario.averaging.contains(&0) {
            return Err(Error::Scenario("averaging must list positive cycle counts".into()));
        }
        if schedule.last().is_some_and(|e| e.time >= self.scenario.duration) {
            return Err(Error::Scenario("last schedule entry lies beyond the duration".into()));
        }
        Ok(())
    }

    /// Parsed load schedule.
    pub fn schedule(&self) -> Result<Vec<ScheduleEntry>> {
        parse_schedule(&self.scenario.schedule)
    }

    pub fn condition(&self, kind: LoadKind) -> LoadCondition {
        self.load.condition(kind)
    }

    /// Flat `section.key = value` rendering that parses back to `self`.
    pub fn to_flat_string(&self) -> String {
        let value = toml::Value::try_from(self).expect("scenario is always representable");
        let mut out = String::new();
        flatten("", &value, &mut out);
        out
    }
}

fn flatten(prefix: &str, v: &toml::Value, out: &mut String) {
    match v {
        toml::Value::Table(t) => {
            for (k, child) in t {
                let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                flatten(&key, child, out);
            }
        }
        other => {
            let _ = writeln!(out, "{prefix} = {other}");
        }
    }
}

pub fn parse_schedule(text: &str) -> Result<Vec<ScheduleEntry>> {
    let mut entries = Vec::new();
    for part in text.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let (t, kind) = part
            .split_once(':')
            .ok_or_else(|| Error::Scenario(format!("schedule entry `{part}` is not `time:load`")))?;
        let time: f64 =
            t.trim().parse().map_err(|_| Error::Scenario(format!("bad schedule time `{}`", t.trim())))?;
        let kind: LoadKind = kind.parse().map_err(|e: Error| Error::Scenario(e.to_string()))?;
        entries.push(ScheduleEntry { time, kind });
    }
    match entries.first() {
        None => return Err(Error::Scenario("schedule is empty".into())),
        Some(e) if e.time != 0.0 => return Err(Error::Scenario("schedule must start at time 0".into())),
        _ => {}
    }
    if entries.windows(2).any(|w| !(w[1].time > w[0].time)) || entries.iter().any(|e| !e.time.is_finite()) {
        return Err(Error::Scenario("schedule times must be strictly increasing".into()));
    }
    Ok(entries)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_parse_from_empty_file() {
        let s = Scenario::from_str("").unwrap();
        assert_eq!(s, Scenario::default());
        assert_eq!(s.schedule().unwrap().len(), 2);
    }

    #[test]
    fn flat_round_trip() {
        let mut s = Scenario::default();
        s.motor.resistance = 9.5;
        s.scenario.schedule = "0:high, 42.5:low".into();
        s.controller.n_cycles = 5;
        let text = s.to_flat_string();
        assert!(text.contains("motor.resistance = 9.5"));
        assert_eq!(Scenario::from_str(&text).unwrap(), s);
    }

    #[test]
    fn unknown_keys_are_errors() {
        let err = Scenario::from_str("motor.resistence = 3.0").unwrap_err();
        assert!(matches!(err, Error::Scenario(_)));
        assert!(Scenario::from_str("bogus.key = 1").is_err());
    }

    #[test]
    fn schedule_validation() {
        assert!(parse_schedule("0:low,10:high").is_ok());
        assert!(parse_schedule("5:low").is_err());
        assert!(parse_schedule("0:low, 0:high").is_err());
        assert!(parse_schedule("0:medium").is_err());
        assert!(parse_schedule("").is_err());
    }

    #[test]
    fn sweep_grid_default() {
        let g = SweepConfig::default().grid();
        assert_eq!(g.len(), 21);
        assert_eq!(g[0], 5.0);
        assert_eq!(g[20], 1.0);
        assert_eq!(g[15], 2.0);
    }
}
