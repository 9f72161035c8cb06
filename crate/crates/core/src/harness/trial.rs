//! Closed-loop load-transition trials and their aggregation.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::controller::{Controller, ControllerState, Event, Mode, TimedEvent};
use crate::error::{Error, Result};
use crate::load::LoadKind;
use crate::metrics::measure;
use crate::sim::Plant;

use super::scenario::Scenario;

/// One line of the controller audit trail.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventRecord {
    pub time: f64,
    /// Mode after the transition that produced the event.
    pub mode: Mode,
    /// Commanded voltage after the transition.
    pub voltage: f64,
    pub v_star: f64,
    /// Batch averages that triggered the event (absent for init and stalls).
    pub energy: Option<f64>,
    pub metric: Option<f64>,
    #[serde(flatten)]
    pub event: Event,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub trial: usize,
    pub seed: u64,
    pub n_cycles: usize,
    /// Time the post-transition load was applied (s); `None` without a transition.
    pub transition_time: Option<f64>,
    /// From the load change to the first optimum after it (s).
    pub response_time: Option<f64>,
    /// V* reported by that optimum.
    pub convergence_voltage: Option<f64>,
    /// Averaged energy at that optimum (J/cycle).
    pub energy_at_optimum: Option<f64>,
    /// V* when the trial ended.
    pub final_v_star: f64,
    pub timed_out: bool,
    pub events: Vec<EventRecord>,
}

impl TrialResult {
    pub fn completed(&self) -> bool {
        !self.timed_out && self.response_time.is_some()
    }

    pub fn load_change_events(&self) -> usize {
        self.events
            .iter()
            .filter(|e| matches!(e.event, Event::LoadIncreaseDetected { .. } | Event::LoadDecreaseDetected { .. }))
            .count()
    }
}

fn record(out: &mut Vec<EventRecord>, state: &ControllerState, events: &[TimedEvent], batch: Option<(f64, f64)>) {
    for e in events {
        out.push(EventRecord {
            time: e.time,
            mode: state.mode,
            voltage: state.voltage,
            v_star: state.v_star,
            energy: batch.map(|b| b.0),
            metric: batch.map(|b| b.1),
            event: e.event,
        });
    }
}

/// Response time, V* and E_min of the first optimum at or after `t0`, read
/// from the event log alone.
pub fn first_optimum_after(events: &[EventRecord], t0: f64) -> Option<(f64, f64, f64)> {
    events.iter().find_map(|e| match e.event {
        Event::OptimumFound { v_star, e_min } if e.time >= t0 => Some((e.time - t0, v_star, e_min)),
        _ => None,
    })
}

/// Run one closed-loop trial of `scenario` with averaging `n_cycles`.
///
/// The load starts as the first schedule entry. The second entry (if any)
/// is applied at the first cycle boundary at or after its scheduled time at
/// which the controller is monitoring with a reference metric, so tracking
/// always starts from the optimum of the initial load. Later entries apply
/// at the first boundary at or after their time. The response time is
/// measured from the first load change to the next `OptimumFound`.
pub fn run_transition(scenario: &Scenario, seed: u64, n_cycles: usize) -> Result<TrialResult> {
    let schedule = scenario.schedule()?;
    let mut cfg = scenario.controller;
    cfg.n_cycles = n_cycles;
    let controller = Controller::new(cfg)?;
    let mut sensors = scenario.sensor;
    sensors.seed = seed;
    let mut plant = Plant::new(scenario.motor, sensors, scenario.sim, scenario.condition(schedule[0].kind))?;

    let mut log = Vec::new();
    let (mut state, out) = controller.init(0.0);
    record(&mut log, &state, &out.events, None);

    let mut next_entry = 1;
    let mut transition_time = None;

    while plant.time() < scenario.scenario.duration {
        if let Some(entry) = schedule.get(next_entry) {
            let settled = state.mode == Mode::Monitoring && state.l_ref.is_some();
            if plant.time() >= entry.time && (settled || transition_time.is_some()) {
                plant.set_condition(scenario.condition(entry.kind));
                transition_time.get_or_insert(plant.time());
                next_entry += 1;
            }
        }
        match plant.run_cycle(state.voltage) {
            Ok(rec) => {
                let (next, out) = controller.on_cycle(&state, measure(&rec)?, rec.t_end())?;
                state = next;
                if let Some((batch, out)) = out {
                    record(&mut log, &state, &out.events, Some((batch.energy, batch.metric)));
                }
            }
            Err(Error::Stall { .. }) => {
                let (next, out) = controller.on_stall(&state, plant.time())?;
                state = next;
                record(&mut log, &state, &out.events, None);
            }
            Err(e) => return Err(e),
        }
    }

    let converged = transition_time.and_then(|t0| first_optimum_after(&log, t0));
    let timed_out = schedule.len() > 1 && converged.is_none();
    Ok(TrialResult {
        trial: 0,
        seed,
        n_cycles,
        transition_time,
        response_time: converged.map(|c| c.0),
        convergence_voltage: converged.map(|c| c.1),
        energy_at_optimum: converged.map(|c| c.2),
        final_v_star: state.v_star,
        timed_out,
        events: log,
    })
}

/// Run Phase I alone on a fixed load; returns `(time, V*, E_min)` of the
/// first optimum, or `None` if none is found within the scenario duration.
pub fn run_phase_one(scenario: &Scenario, kind: LoadKind, seed: u64, n_cycles: usize) -> Result<Option<(f64, f64, f64)>> {
    let mut cfg = scenario.controller;
    cfg.n_cycles = n_cycles;
    let controller = Controller::new(cfg)?;
    let mut sensors = scenario.sensor;
    sensors.seed = seed;
    let mut plant = Plant::new(scenario.motor, sensors, scenario.sim, scenario.condition(kind))?;
    let (mut state, _) = controller.init(0.0);
    while plant.time() < scenario.scenario.duration {
        let out = match plant.run_cycle(state.voltage) {
            Ok(rec) => {
                let (next, out) = controller.on_cycle(&state, measure(&rec)?, rec.t_end())?;
                state = next;
                out.map(|o| o.1)
            }
            Err(Error::Stall { .. }) => {
                let (next, out) = controller.on_stall(&state, plant.time())?;
                state = next;
                Some(out)
            }
            Err(e) => return Err(e),
        };
        for e in out.iter().flat_map(|o| o.events.iter()) {
            if let Event::OptimumFound { v_star, e_min } = e.event {
                return Ok(Some((e.time, v_star, e_min)));
            }
        }
    }
    Ok(None)
}

/// Mean and sample standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    pub std: f64,
    pub n: usize,
}

impl Stat {
    pub fn of(xs: &[f64]) -> Option<Stat> {
        if xs.is_empty() {
            return None;
        }
        let n = xs.len();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let std = if n > 1 {
            (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        Some(Stat { mean, std, n })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AveragingSummary {
    pub n_cycles: usize,
    pub trials: usize,
    pub timed_out: usize,
    pub response_time: Option<Stat>,
    pub convergence_voltage: Option<Stat>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchResult {
    /// Per-trial rows sorted by `(n_cycles, trial)`.
    pub trials: Vec<TrialResult>,
    pub summaries: Vec<AveragingSummary>,
}

/// Seeds used by a batch: `base_seed + trial index`.
pub fn trial_seed(scenario: &Scenario, trial: usize) -> u64 {
    scenario.scenario.base_seed.wrapping_add(trial as u64)
}

/// Run `scenario.trials` seeded trials for every averaging setting.
/// Trials run in parallel; results are ordered deterministically.
pub fn run_batch(scenario: &Scenario) -> Result<BatchResult> {
    let jobs: Vec<(usize, usize)> = scenario
        .scenario
        .averaging
        .iter()
        .flat_map(|&nc| (0..scenario.scenario.trials).map(move |i| (nc, i)))
        .collect();
    let mut trials = jobs
        .par_iter()
        .map(|&(nc, i)| {
            run_transition(scenario, trial_seed(scenario, i), nc).map(|mut r| {
                r.trial = i;
                r
            })
        })
        .collect::<Result<Vec<_>>>()?;
    trials.sort_by_key(|r| (r.n_cycles, r.trial));

    let summaries = scenario
        .scenario
        .averaging
        .iter()
        .map(|&nc| summarize(nc, trials.iter().filter(|r| r.n_cycles == nc)))
        .collect();
    Ok(BatchResult { trials, summaries })
}

pub fn summarize<'a>(n_cycles: usize, rows: impl Iterator<Item = &'a TrialResult>) -> AveragingSummary {
    let rows: Vec<&TrialResult> = rows.collect();
    let done: Vec<&&TrialResult> = rows.iter().filter(|r| r.completed()).collect();
    let rt: Vec<f64> = done.iter().filter_map(|r| r.response_time).collect();
    let cv: Vec<f64> = done.iter().filter_map(|r| r.convergence_voltage).collect();
    AveragingSummary {
        n_cycles,
        trials: rows.len(),
        timed_out: rows.len() - done.len(),
        response_time: Stat::of(&rt),
        convergence_voltage: Stat::of(&cv),
    }
}
