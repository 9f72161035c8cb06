//! CSV / JSON output. Every float is written with 9 significant digits so
//! repeated runs are byte-identical.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::load::LoadKind;

use super::scenario::Scenario;
use super::sweep::{sweep_argmin, SweepRow};
use super::trial::{AveragingSummary, BatchResult, TrialResult};

pub const VERSION: &str = concat!("v", env!("CARGO_PKG_VERSION"));

/// `%.9g`-style formatting.
pub fn sig9(x: f64) -> String {
    if !x.is_finite() {
        return x.to_string();
    }
    if x == 0.0 {
        return "0".into();
    }
    let sci = format!("{x:.8e}");
    let (mant, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-5..9).contains(&exp) {
        let mant = trim_zeros(mant);
        return format!("{mant}e{exp}");
    }
    let decimals = (8 - exp).max(0) as usize;
    trim_zeros(&format!("{x:.decimals$}")).to_string()
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

fn opt(x: Option<f64>) -> String {
    x.map(sig9).unwrap_or_default()
}

/// Round every float in a JSON tree to 9 significant digits.
fn round_json(v: &mut serde_json::Value) {
    match v {
        serde_json::Value::Number(n) if n.is_f64() => {
            let x = n.as_f64().unwrap_or(f64::NAN);
            if let Some(r) = sig9(x).parse::<f64>().ok().and_then(serde_json::Number::from_f64) {
                *n = r;
            }
        }
        serde_json::Value::Array(a) => a.iter_mut().for_each(round_json),
        serde_json::Value::Object(o) => o.values_mut().for_each(round_json),
        _ => {}
    }
}

pub fn to_json_rounded<T: Serialize>(value: &T) -> serde_json::Value {
    let mut v = serde_json::to_value(value).expect("report types serialize");
    round_json(&mut v);
    v
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepReport {
    pub load: LoadKind,
    pub n_cycles: usize,
    pub rows: Vec<SweepRow>,
}

/// Everything one CLI invocation produced.
#[derive(Debug, Clone, Default)]
pub struct Results {
    pub sweeps: Vec<SweepReport>,
    pub batch: Option<BatchResult>,
}

pub const SWEEP_HEADER: [&str; 9] =
    ["load", "n_cycles", "voltage", "mean_speed", "mean_power", "mean_energy", "mean_metric", "cycles", "stalled"];

pub const TRIALS_HEADER: [&str; 11] = [
    "n_cycles",
    "trial",
    "seed",
    "transition_time",
    "response_time",
    "convergence_voltage",
    "energy_at_optimum",
    "final_v_star",
    "timed_out",
    "load_change_events",
    "event_log",
];

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_path(path)
        .map_err(|e| Error::Csv { path: path.to_path_buf(), source: e })
}

fn event_log_name(r: &TrialResult) -> String {
    format!("events/nc{}_trial{:03}.jsonl", r.n_cycles, r.trial)
}

fn write_event_log(path: &Path, r: &TrialResult) -> Result<()> {
    let mut buf = Vec::new();
    for e in &r.events {
        let line = serde_json::to_string(&to_json_rounded(e)).expect("event serializes");
        buf.extend_from_slice(line.as_bytes());
        buf.push(b'\n');
    }
    fs::write(path, buf).map_err(|e| Error::io(path, e))
}

#[derive(Serialize)]
struct SweepSummary {
    load: LoadKind,
    n_cycles: usize,
    argmin_voltage: Option<f64>,
    min_energy: Option<f64>,
}

#[derive(Serialize)]
struct Summary<'a> {
    version: &'static str,
    config: &'a Scenario,
    sweeps: Vec<SweepSummary>,
    averaging: Vec<AveragingSummary>,
}

/// Write `sweep.csv`, `trials.csv`, `summary.json` and one JSON-lines event
/// log per trial into `out_dir`. Returns the paths written.
pub fn emit_reports(scenario: &Scenario, results: &Results, out_dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut written = Vec::new();

    let sweep_path = out_dir.join("sweep.csv");
    let mut w = csv_writer(&sweep_path)?;
    let csv_err = |p: &Path| {
        let p = p.to_path_buf();
        move |e: csv::Error| Error::Csv { path: p.clone(), source: e }
    };
    w.write_record(SWEEP_HEADER).map_err(csv_err(&sweep_path))?;
    for s in &results.sweeps {
        for r in &s.rows {
            w.write_record([
                s.load.to_string(),
                s.n_cycles.to_string(),
                sig9(r.voltage),
                opt(r.mean_speed),
                opt(r.mean_power),
                opt(r.mean_energy),
                opt(r.mean_metric),
                r.n_cycles.to_string(),
                r.stalled.to_string(),
            ])
            .map_err(csv_err(&sweep_path))?;
        }
    }
    w.flush().map_err(|e| Error::io(&sweep_path, e))?;
    written.push(sweep_path);

    let trials_path = out_dir.join("trials.csv");
    let mut w = csv_writer(&trials_path)?;
    w.write_record(TRIALS_HEADER).map_err(csv_err(&trials_path))?;
    let trials: &[TrialResult] = results.batch.as_ref().map(|b| b.trials.as_slice()).unwrap_or(&[]);
    if !trials.is_empty() {
        fs::create_dir_all(out_dir.join("events")).map_err(|e| Error::io(out_dir.join("events"), e))?;
    }
    for r in trials {
        let log = event_log_name(r);
        let log_path = out_dir.join(&log);
        write_event_log(&log_path, r)?;
        written.push(log_path);
        w.write_record([
            r.n_cycles.to_string(),
            r.trial.to_string(),
            r.seed.to_string(),
            opt(r.transition_time),
            opt(r.response_time),
            opt(r.convergence_voltage),
            opt(r.energy_at_optimum),
            sig9(r.final_v_star),
            r.timed_out.to_string(),
            r.load_change_events().to_string(),
            log,
        ])
        .map_err(csv_err(&trials_path))?;
    }
    w.flush().map_err(|e| Error::io(&trials_path, e))?;
    written.push(trials_path);

    let summary = Summary {
        version: VERSION,
        config: scenario,
        sweeps: results
            .sweeps
            .iter()
            .map(|s| {
                let best = sweep_argmin(&s.rows);
                SweepSummary {
                    load: s.load,
                    n_cycles: s.n_cycles,
                    argmin_voltage: best.map(|b| b.0),
                    min_energy: best.map(|b| b.1),
                }
            })
            .collect(),
        averaging: results.batch.as_ref().map(|b| b.summaries.clone()).unwrap_or_default(),
    };
    let summary_path = out_dir.join("summary.json");
    let mut text = serde_json::to_string_pretty(&to_json_rounded(&summary)).expect("summary serializes");
    text.push('\n');
    let mut f = fs::File::create(&summary_path).map_err(|e| Error::io(&summary_path, e))?;
    f.write_all(text.as_bytes()).map_err(|e| Error::io(&summary_path, e))?;
    written.push(summary_path);
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sig9_formatting() {
        assert_eq!(sig9(0.0), "0");
        assert_eq!(sig9(1.0), "1");
        assert_eq!(sig9(0.2), "0.2");
        assert_eq!(sig9(2.0000000000000004), "2");
        assert_eq!(sig9(0.0339123456789), "0.0339123457");
        assert_eq!(sig9(123456789.4), "123456789");
        assert_eq!(sig9(1234567894.0), "1.23456789e9");
        assert_eq!(sig9(-1.5e-7), "-1.5e-7");
        assert_eq!(sig9(9.9999999999), "10");
    }
}
