//! Self-check suite behind `meop validate`.

use rand::Rng;

use crate::controller::{Batch, Controller, ControllerConfig, Mode};
use crate::load::{LoadKind, LoadPresets};
use crate::metrics::{features_from_samples, load_metric};
use crate::motor::{steady_state_current, steady_state_speed, MotorParams, MotorState};
use crate::sim::{seeded_rng, step, Plant, SensorConfig, SimConfig};

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn check(name: &'static str, passed: bool, detail: String) -> Check {
    Check { name, passed, detail }
}

pub fn run_all() -> Vec<Check> {
    vec![
        energy_balance(),
        steady_state(),
        step_halving(),
        synthetic_pulse(),
        covariance(),
        threshold_soundness(),
        determinism(),
    ]
}

fn energy_balance() -> Check {
    let p = MotorParams::default();
    let mut worst: f64 = 0.0;
    for kind in LoadKind::ALL {
        let cond = LoadPresets::default().condition(kind);
        let Ok(mut plant) = Plant::new(p, SensorConfig::noiseless(), SimConfig::default(), cond) else {
            return check("energy balance", false, "plant construction failed".into());
        };
        for v in [5.0, 3.0, 2.6] {
            for _ in 0..3 {
                match plant.run_cycle(v) {
                    Ok(r) => worst = worst.max(r.audit.electrical_residual()).max(r.audit.mechanical_residual()),
                    Err(e) => return check("energy balance", false, e.to_string()),
                }
            }
        }
    }
    check("energy balance", worst < 0.005, format!("worst residual {:.2e}", worst))
}

fn steady_state() -> Check {
    let p = MotorParams::default();
    let cond = LoadPresets::default().condition(LoadKind::None);
    let tau = p.reflect_torque(cond.profile.friction);
    let v = 3.0;
    let mut s = MotorState::at_rest();
    let dt = SimConfig::default().dt;
    let (mut w_sum, mut i_sum, mut n) = (0.0, 0.0, 0usize);
    for k in 0..100_000 {
        match step(&s, v, &cond, &p, dt) {
            Ok(next) => s = next,
            Err(e) => return check("steady state", false, e.to_string()),
        }
        if k >= 50_000 {
            w_sum += s.omega;
            i_sum += s.current;
            n += 1;
        }
    }
    let w = steady_state_speed(v, tau, &p).unwrap_or(f64::NAN);
    let i = steady_state_current(v, w, &p).unwrap_or(f64::NAN);
    let ew = (w_sum / n as f64 / w - 1.0).abs();
    let ei = (i_sum / n as f64 / i - 1.0).abs();
    check("steady state", ew < 0.02 && ei < 0.02, format!("speed err {ew:.2e}, current err {ei:.2e}"))
}

fn step_halving() -> Check {
    let p = MotorParams::default();
    let cond = LoadPresets::default().condition(LoadKind::High);
    let run = |dt: f64| -> Option<f64> {
        let mut s = MotorState::at_rest();
        let n = (0.5 / dt).round() as usize;
        for _ in 0..n {
            s = step(&s, 3.0, &cond, &p, dt).ok()?;
        }
        Some(s.omega)
    };
    match (run(2e-5), run(1e-5)) {
        (Some(a), Some(b)) => {
            let rel = (a - b).abs() / b.abs();
            check("step halving", rel < 1e-4, format!("relative change {rel:.2e}"))
        }
        _ => check("step halving", false, "integration failed".into()),
    }
}

fn synthetic_pulse() -> Check {
    let s: Vec<f64> = (0..500).map(|k| if k < 400 { 0.05 } else { 0.15 }).collect();
    match features_from_samples(&s, 500.0, 1.0) {
        Ok(f) => {
            let ok = f.ac == 0.15 && f.dc == 0.05 && f.ac_time == 0.2 && f.metric == (0.15 - 0.05) * 0.2;
            check("synthetic pulse", ok, format!("{f:?}"))
        }
        Err(e) => check("synthetic pulse", false, e.to_string()),
    }
}

fn covariance() -> Check {
    let mut rng = seeded_rng(42);
    for trial in 0..200 {
        let n = rng.random_range(10..300);
        let base: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..0.2)).collect();
        let c = rng.random_range(-0.1..0.1);
        let k = rng.random_range(0.2..5.0);
        let (Ok(f0), Ok(ft), Ok(fs)) = (
            features_from_samples(&base, 500.0, n as f64 / 500.0),
            features_from_samples(&base.iter().map(|x| x + c).collect::<Vec<_>>(), 500.0, n as f64 / 500.0),
            features_from_samples(&base.iter().map(|x| x * k).collect::<Vec<_>>(), 500.0, n as f64 / 500.0),
        ) else {
            return check("metric covariance", false, format!("trial {trial}: extraction failed"));
        };
        let tol = 1e-9;
        let ok = (ft.ac - f0.ac - c).abs() < tol
            && (ft.dc - f0.dc - c).abs() < tol
            && ft.ac_time == f0.ac_time
            && (load_metric(&ft) - load_metric(&f0)).abs() < tol
            && fs.ac_time == f0.ac_time
            && (load_metric(&fs) - k * load_metric(&f0)).abs() < tol;
        if !ok {
            return check("metric covariance", false, format!("trial {trial} violated"));
        }
    }
    check("metric covariance", true, "200 random waveforms".into())
}

fn threshold_soundness() -> Check {
    let Ok(c) = Controller::new(ControllerConfig::default()) else {
        return check("threshold soundness", false, "bad default config".into());
    };
    let (mut s, _) = c.init(0.0);
    let mut t = 0.0;
    let mut e = 1.0;
    while s.mode == Mode::PhaseISearch {
        t += 1.0;
        e *= 0.99;
        s = c.on_batch(&s, Batch { energy: if s.voltage < 2.0 { 2.0 } else { e }, metric: 0.01, time: t }).0;
    }
    for _ in 0..500 {
        t += 1.0;
        let (n, out) = c.on_batch(&s, Batch { energy: e, metric: 0.01, time: t });
        if !out.events.is_empty() {
            return check("threshold soundness", false, format!("unexpected {:?}", out.events));
        }
        s = n;
    }
    check("threshold soundness", s.mode == Mode::Monitoring, "500 constant batches".into())
}

fn determinism() -> Check {
    let cond = LoadPresets::default().condition(LoadKind::Low);
    let run = || -> Option<Vec<u64>> {
        let sensors = SensorConfig { seed: 9, ..SensorConfig::default() };
        let mut plant = Plant::new(MotorParams::default(), sensors, SimConfig::default(), cond).ok()?;
        let mut bits = Vec::new();
        for _ in 0..3 {
            let r = plant.run_cycle(3.0).ok()?;
            bits.extend(r.samples.iter().map(|x| x.to_bits()));
            bits.push(r.period.to_bits());
        }
        Some(bits)
    };
    let ok = matches!((run(), run()), (Some(a), Some(b)) if a == b);
    check("determinism", ok, "two seeded runs".into())
}
