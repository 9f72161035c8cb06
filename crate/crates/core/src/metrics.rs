//! Per-cycle measurements: energy, mean power and the current-waveform
//! load metric.
//!
//! The waveform features split one cycle of current samples into an
//! elevated component (`ac`, mean of samples above 90% of the peak-to-valley
//! span) and a baseline component (`dc`, mean of samples below 10%).
//! `ac_time` is the span from the first to the last supra-threshold sample.
//! The load metric is `(ac - dc) * ac_time`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sim::CycleRecord;

/// Below this peak-to-valley span (A) a waveform is treated as flat.
pub const DEGENERACY_EPS: f64 = 1.0e-4;
pub const AC_FRACTION: f64 = 0.9;
pub const DC_FRACTION: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct WaveformFeatures {
    pub peak: f64,
    pub valley: f64,
    pub ac: f64,
    pub dc: f64,
    /// Duration of the high-current phase (s).
    pub ac_time: f64,
    /// `(ac - dc) * ac_time` (A·s).
    pub metric: f64,
}

impl WaveformFeatures {
    pub fn is_degenerate(&self) -> bool {
        self.peak - self.valley < DEGENERACY_EPS
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CycleMeasurement {
    /// Energy per cycle (J).
    pub energy: f64,
    /// Mean electrical power (W).
    pub power: f64,
    pub features: WaveformFeatures,
    pub period: f64,
    pub voltage: f64,
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Running mean; returns a repeated value bit-exactly.
#[derive(Default)]
struct RunningMean {
    m: f64,
    n: usize,
}

impl RunningMean {
    fn push(&mut self, x: f64) {
        self.n += 1;
        self.m += (x - self.m) / self.n as f64;
    }

    fn get(&self) -> Option<f64> {
        (self.n > 0).then_some(self.m)
    }
}

/// Mean power `V · mean(I)` over the cycle.
pub fn cycle_power(rec: &CycleRecord) -> Result<f64> {
    if rec.samples.is_empty() {
        return Err(Error::EmptyRecord);
    }
    Ok(rec.voltage * mean(&rec.samples))
}

/// Discrete energy per cycle, `(1/N) Σ V·I[k] · T_s`.
pub fn cycle_energy(rec: &CycleRecord) -> Result<f64> {
    if !(rec.period > 0.0) {
        return Err(Error::InvalidParams("cycle period must be > 0".into()));
    }
    Ok(cycle_power(rec)? * rec.period)
}

/// Waveform features of one cycle of samples taken at `sample_rate`.
pub fn features_from_samples(samples: &[f64], sample_rate: f64, period: f64) -> Result<WaveformFeatures> {
    if samples.len() < 2 {
        return Err(Error::EmptyRecord);
    }
    let peak = samples.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let valley = samples.iter().copied().fold(f64::INFINITY, f64::min);
    let span = peak - valley;
    if span < DEGENERACY_EPS {
        let m = mean(samples);
        return Ok(WaveformFeatures { peak, valley, ac: m, dc: m, ac_time: 0.0, metric: 0.0 });
    }
    let ac_thr = valley + AC_FRACTION * span;
    let dc_thr = valley + DC_FRACTION * span;

    let (mut ac, mut dc) = (RunningMean::default(), RunningMean::default());
    let (mut first, mut last) = (None, None);
    for (k, &x) in samples.iter().enumerate() {
        if x > ac_thr {
            ac.push(x);
            first.get_or_insert(k);
            last = Some(k);
        } else if x < dc_thr {
            dc.push(x);
        }
    }
    let ac = ac.get().unwrap_or(peak);
    let dc = dc.get().unwrap_or(valley);
    // each sample stands for one sample period, so a run of n samples lasts n/f
    let ac_time = match (first, last) {
        (Some(a), Some(b)) => ((b - a + 1) as f64 / sample_rate).min(period.max(0.0)),
        _ => 0.0,
    };
    let features = WaveformFeatures { peak, valley, ac, dc, ac_time, metric: 0.0 };
    Ok(WaveformFeatures { metric: load_metric(&features), ..features })
}

pub fn extract_features(rec: &CycleRecord) -> Result<WaveformFeatures> {
    features_from_samples(&rec.samples, rec.sample_rate, rec.period)
}

/// `(ac - dc) · ac_time`, zero for flat waveforms.
pub fn load_metric(f: &WaveformFeatures) -> f64 {
    if f.is_degenerate() {
        return 0.0;
    }
    ((f.ac - f.dc) * f.ac_time).max(0.0)
}

pub fn measure(rec: &CycleRecord) -> Result<CycleMeasurement> {
    let power = cycle_power(rec)?;
    Ok(CycleMeasurement {
        energy: power * rec.period,
        power,
        features: extract_features(rec)?,
        period: rec.period,
        voltage: rec.voltage,
    })
}

/// Arithmetic mean of exactly `n_cycles` per-cycle values.
pub fn average_over_cycles(values: &[f64], n_cycles: usize) -> Result<f64> {
    if n_cycles == 0 || values.len() != n_cycles {
        return Err(Error::LengthMismatch { expected: n_cycles, got: values.len() });
    }
    Ok(mean(values))
}

/// Averages of an `N_c`-cycle batch, as consumed by the controller.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BatchAverage {
    pub energy: f64,
    pub metric: f64,
    pub power: f64,
    pub period: f64,
}

pub fn average_batch(batch: &[CycleMeasurement], n_cycles: usize) -> Result<BatchAverage> {
    let pick = |f: fn(&CycleMeasurement) -> f64| -> Result<f64> {
        let v: Vec<f64> = batch.iter().map(f).collect();
        average_over_cycles(&v, n_cycles)
    };
    Ok(BatchAverage {
        energy: pick(|m| m.energy)?,
        metric: pick(|m| m.features.metric)?,
        power: pick(|m| m.power)?,
        period: pick(|m| m.period)?,
    })
}
