//! Open-loop voltage sweeps (speed, power, energy and metric versus voltage).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::load::LoadCondition;
use crate::metrics::measure;
use crate::sim::Plant;

use super::scenario::Scenario;

/// One grid voltage of a sweep. Measurement columns are `None` when the
/// plant stalled at that voltage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub voltage: f64,
    /// Output-shaft speed (rad/s).
    pub mean_speed: Option<f64>,
    pub mean_power: Option<f64>,
    /// J per cycle.
    pub mean_energy: Option<f64>,
    /// A·s.
    pub mean_metric: Option<f64>,
    pub n_cycles: usize,
    pub stalled: bool,
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    s / n as f64
}

/// Sweep `grid` (any order; rows come back in descending voltage) and
/// measure `n_cycles` cycles at each voltage after the configured warm-up.
pub fn run_sweep(cond: &LoadCondition, grid: &[f64], n_cycles: usize, scenario: &Scenario) -> Result<Vec<SweepRow>> {
    if n_cycles == 0 {
        return Err(Error::Scenario("n_cycles must be >= 1".into()));
    }
    let mut grid = grid.to_vec();
    grid.sort_by(|a, b| b.total_cmp(a));
    let mut sensors = scenario.sensor;
    sensors.seed = scenario.scenario.base_seed;
    let mut plant = Plant::new(scenario.motor, sensors, scenario.sim, *cond)?;

    let mut rows = Vec::with_capacity(grid.len());
    for &v in &grid {
        let mut measured = Vec::with_capacity(n_cycles);
        let mut stalled = false;
        for k in 0..scenario.sweep.warmup_cycles + n_cycles {
            match plant.run_cycle(v) {
                Ok(rec) => {
                    if k >= scenario.sweep.warmup_cycles {
                        measured.push(measure(&rec)?);
                    }
                }
                Err(Error::Stall { .. }) => {
                    stalled = true;
                    break;
                }
                Err(e) => return Err(e),
            }
        }
        if stalled {
            rows.push(SweepRow {
                voltage: v,
                mean_speed: None,
                mean_power: None,
                mean_energy: None,
                mean_metric: None,
                n_cycles: 0,
                stalled: true,
            });
            continue;
        }
        rows.push(SweepRow {
            voltage: v,
            mean_speed: Some(mean(measured.iter().map(|m| std::f64::consts::TAU / m.period))),
            mean_power: Some(mean(measured.iter().map(|m| m.power))),
            mean_energy: Some(mean(measured.iter().map(|m| m.energy))),
            mean_metric: Some(mean(measured.iter().map(|m| m.features.metric))),
            n_cycles,
            stalled: false,
        });
    }
    if rows.iter().all(|r| r.stalled) {
        return Err(Error::AllStalled);
    }
    Ok(rows)
}

/// Grid voltage with the lowest mean energy, with that energy.
pub fn sweep_argmin(rows: &[SweepRow]) -> Option<(f64, f64)> {
    rows.iter()
        .filter_map(|r| r.mean_energy.map(|e| (r.voltage, e)))
        .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.total_cmp(&b.0)))
}
