//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Run with `cargo test -p meop-core --test acceptance`. Exits non-zero if
//! any criterion fails.

use std::collections::BTreeMap;
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use rand::Rng;

use meop_core::harness::{run_batch, run_phase_one, run_sweep, sweep_argmin, Scenario, SweepRow, TrialResult};
use meop_core::load::LoadKind;
use meop_core::metrics::{features_from_samples, load_metric};
use meop_core::motor::{steady_state_current, steady_state_speed, MotorState};
use meop_core::sim::{seeded_rng, step, Plant, SensorConfig};

const GRID_TOL: f64 = 1e-9;

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: impl Into<String>) -> Outcome {
    Outcome { passed, detail: detail.into() }
}

fn noiseless() -> Scenario {
    let mut s = Scenario::default();
    s.sensor = SensorConfig { seed: s.sensor.seed, ..SensorConfig::noiseless() };
    s
}

/// Noiseless sweeps over the default grid, shared by criteria 1 to 5.
struct Sweeps {
    rows: BTreeMap<LoadKind, Vec<SweepRow>>,
    n_cycles: usize,
}

impl Sweeps {
    fn run(n_cycles: usize) -> Result<Self, String> {
        let s = noiseless();
        let mut rows = BTreeMap::new();
        for kind in LoadKind::ALL {
            let r = run_sweep(&s.condition(kind), &s.sweep.grid(), n_cycles, &s).map_err(|e| e.to_string())?;
            rows.insert(kind, r);
        }
        Ok(Self { rows, n_cycles })
    }

    fn argmin(&self, kind: LoadKind) -> Option<(f64, f64)> {
        sweep_argmin(&self.rows[&kind])
    }
}

fn criterion_1(sw: &Sweeps) -> Outcome {
    let mut ok = true;
    let mut parts = vec![];
    for kind in LoadKind::ALL {
        let rows = &sw.rows[&kind];
        let (Some((v, e)), Some(first), Some(last)) = (sw.argmin(kind), rows.first(), rows.last()) else {
            return outcome(false, format!("{kind}: empty sweep"));
        };
        let (Some(e_hi), Some(e_lo)) = (first.mean_energy, last.mean_energy) else {
            return outcome(false, format!("{kind}: grid end stalled"));
        };
        let up_hi = e_hi / e - 1.0;
        let up_lo = e_lo / e - 1.0;
        ok &= up_hi >= 0.05 && up_lo >= 0.05;
        parts.push(format!("{kind} min {v:.1} V, ends +{:.1}%/+{:.1}%", up_hi * 100.0, up_lo * 100.0));
    }
    outcome(ok, parts.join("; "))
}

fn criterion_2(sw: &Sweeps, dv: f64) -> Outcome {
    let v = |k| sw.argmin(k).map(|a| a.0).unwrap_or(f64::NAN);
    let (n, l, h) = (v(LoadKind::None), v(LoadKind::Low), v(LoadKind::High));
    let ok = n < l && l < h && h - n >= dv - GRID_TOL;
    outcome(ok, format!("none {n:.1} V < low {l:.1} V < high {h:.1} V"))
}

fn criterion_3(sw: &Sweeps) -> Outcome {
    match sw.argmin(LoadKind::Low) {
        Some((v, e)) => {
            let ok = (1.2 - GRID_TOL..=3.2 + GRID_TOL).contains(&v) && (5e-3..=0.2).contains(&e);
            outcome(ok, format!("low argmin {v:.1} V, {:.1} mJ/cycle", e * 1e3))
        }
        None => outcome(false, "low sweep empty"),
    }
}

fn criterion_4(sw: &Sweeps) -> Outcome {
    let (none, low, high) = (&sw.rows[&LoadKind::None], &sw.rows[&LoadKind::Low], &sw.rows[&LoadKind::High]);
    let mut points = 0;
    for ((a, b), c) in none.iter().zip(low).zip(high) {
        let (Some(mn), Some(ml), Some(mh)) = (a.mean_metric, b.mean_metric, c.mean_metric) else {
            continue;
        };
        if !(mh > ml && ml > mn) {
            return outcome(false, format!("ordering broken at {:.1} V: {mh:.3e} / {ml:.3e} / {mn:.3e}", a.voltage));
        }
        points += 1;
    }
    outcome(points > 0, format!("high > low > none at all {points} common grid points"))
}

fn criterion_5(sw: &Sweeps) -> Outcome {
    let nc = sw.n_cycles;
    let mut s = noiseless();
    s.scenario.duration = 300.0;
    let dv = s.controller.dv;
    let mut parts = vec![];
    let mut ok = true;
    for kind in LoadKind::ALL {
        let oracle = sw.argmin(kind).map(|a| a.0).unwrap_or(f64::NAN);
        match run_phase_one(&s, kind, 0, nc) {
            Ok(Some((_, v, _))) => {
                ok &= (v - oracle).abs() < GRID_TOL;
                parts.push(format!("{kind} noiseless {v:.1}/{oracle:.1} V"));
            }
            other => return outcome(false, format!("{kind}: phase I did not finish: {other:?}")),
        }
    }
    let noisy = Scenario { scenario: s.scenario.clone(), ..Scenario::default() };
    for kind in LoadKind::ALL {
        let oracle = sw.argmin(kind).map(|a| a.0).unwrap_or(f64::NAN);
        let mut hits = 0;
        for trial in 0..50 {
            if let Ok(Some((_, v, _))) = run_phase_one(&noisy, kind, 1000 + trial, 3) {
                hits += usize::from((v - oracle).abs() <= dv + GRID_TOL);
            }
        }
        ok &= hits * 10 >= 50 * 9;
        parts.push(format!("{kind} noisy {hits}/50 within one step"));
    }
    outcome(ok, parts.join("; "))
}

/// Default scenario with one scripted transition and the given averaging.
fn transition_scenario(from: LoadKind, to: LoadKind, averaging: Vec<usize>) -> Scenario {
    let mut s = Scenario::default();
    s.scenario.schedule = format!("0:{from}, 60:{to}");
    s.scenario.trials = 20;
    s.scenario.averaging = averaging;
    s
}

const DIRECTIONS: [(LoadKind, LoadKind); 2] = [(LoadKind::Low, LoadKind::High), (LoadKind::High, LoadKind::Low)];

/// Trials per direction and per averaging setting, shared by criteria 6 and 7.
type TrialSets = BTreeMap<(usize, usize), Vec<TrialResult>>;

fn run_trials(sets: &mut TrialSets, averaging: Vec<usize>) -> Result<(), String> {
    for (d, (from, to)) in DIRECTIONS.iter().enumerate() {
        let batch = run_batch(&transition_scenario(*from, *to, averaging.clone())).map_err(|e| e.to_string())?;
        for t in batch.trials {
            sets.entry((d, t.n_cycles)).or_default().push(t);
        }
    }
    Ok(())
}

fn criterion_6(sw: &Sweeps, sets: &TrialSets, dv: f64) -> Outcome {
    let mut ok = true;
    let mut parts = vec![];
    for (d, (from, to)) in DIRECTIONS.iter().enumerate() {
        let oracle = sw.argmin(*to).map(|a| a.0).unwrap_or(f64::NAN);
        let trials = &sets[&(d, 3)];
        let hits = trials
            .iter()
            .filter(|t| t.convergence_voltage.is_some_and(|v| (v - oracle).abs() <= dv + GRID_TOL))
            .count();
        ok &= hits * 10 >= trials.len() * 9;
        parts.push(format!("{from}->{to} {hits}/{} within one step of {oracle:.1} V", trials.len()));
    }
    outcome(ok, parts.join("; "))
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, var.sqrt())
}

fn criterion_7(sets: &TrialSets) -> Outcome {
    let mut ok = true;
    let mut parts = vec![];
    for (d, (from, to)) in DIRECTIONS.iter().enumerate() {
        let stats = |nc: usize, f: fn(&TrialResult) -> Option<f64>| {
            let xs: Vec<f64> = sets[&(d, nc)].iter().filter_map(f).collect();
            mean_std(&xs)
        };
        let rt: Vec<f64> = [1, 3, 5].iter().map(|&nc| stats(nc, |t| t.response_time).0).collect();
        let sd1 = stats(1, |t| t.convergence_voltage).1;
        let sd5 = stats(5, |t| t.convergence_voltage).1;
        ok &= rt[0] < rt[1] && rt[1] < rt[2] && sd5 <= sd1;
        parts.push(format!(
            "{from}->{to} response {:.1}/{:.1}/{:.1} s, V std {sd1:.3} -> {sd5:.3}",
            rt[0], rt[1], rt[2]
        ));
    }
    outcome(ok, parts.join("; "))
}

fn criterion_8() -> Outcome {
    let s = Scenario::default();
    let p = s.motor;
    let mut worst: f64 = 0.0;
    let mut cycles = 0;
    for kind in LoadKind::ALL {
        let Ok(mut plant) = Plant::new(p, SensorConfig::noiseless(), s.sim, s.condition(kind)) else {
            return outcome(false, "plant construction failed");
        };
        for v in s.sweep.grid() {
            for _ in 0..3 {
                match plant.run_cycle(v) {
                    Ok(r) => {
                        worst = worst.max(r.audit.electrical_residual()).max(r.audit.mechanical_residual());
                        cycles += 1;
                    }
                    Err(e) => return outcome(false, format!("{kind} at {v} V: {e}")),
                }
            }
        }
    }

    let cond = s.condition(LoadKind::None);
    let tau = p.reflect_torque(cond.profile.friction);
    let mut ss_worst: f64 = 0.0;
    for v in [1.5, 3.0, 5.0] {
        let mut st = MotorState::at_rest();
        for _ in 0..(2.0 / s.sim.dt) as usize {
            st = match step(&st, v, &cond, &p, s.sim.dt) {
                Ok(n) => n,
                Err(e) => return outcome(false, e.to_string()),
            };
        }
        let w = steady_state_speed(v, tau, &p).unwrap_or(f64::NAN);
        let i = steady_state_current(v, w, &p).unwrap_or(f64::NAN);
        ss_worst = ss_worst.max((st.omega / w - 1.0).abs()).max((st.current / i - 1.0).abs());
    }

    let high = s.condition(LoadKind::High);
    let run = |dt: f64| -> Option<f64> {
        let mut st = MotorState::at_rest();
        for _ in 0..(0.5 / dt).round() as usize {
            st = step(&st, 3.0, &high, &p, dt).ok()?;
        }
        Some(st.omega)
    };
    let halving = match (run(s.sim.dt), run(s.sim.dt / 2.0)) {
        (Some(a), Some(b)) => (a - b).abs() / b.abs(),
        _ => f64::NAN,
    };

    let ok = worst < 0.005 && ss_worst < 0.02 && halving < 1e-4;
    outcome(
        ok,
        format!("energy residual {worst:.2e} over {cycles} cycles, steady state {ss_worst:.2e}, halving {halving:.2e}"),
    )
}

fn criterion_9() -> Outcome {
    let pulse: Vec<f64> = (0..500).map(|k| if k < 400 { 0.05 } else { 0.15 }).collect();
    let exact = match features_from_samples(&pulse, 500.0, 1.0) {
        Ok(f) => f.ac == 0.15 && f.dc == 0.05 && f.ac_time == 0.2 && f.metric == (0.15 - 0.05) * 0.2,
        Err(_) => false,
    };

    let mut rng = seeded_rng(2024);
    let tol = 1e-9;
    let mut violations = 0;
    for _ in 0..1000 {
        let n = rng.random_range(2..400);
        let base: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..0.3)).collect();
        let c = rng.random_range(-0.2..0.2);
        let k = rng.random_range(0.1..10.0);
        let period = n as f64 / 500.0;
        let shifted: Vec<f64> = base.iter().map(|x| x + c).collect();
        let scaled: Vec<f64> = base.iter().map(|x| x * k).collect();
        let (Ok(f0), Ok(ft), Ok(fs)) = (
            features_from_samples(&base, 500.0, period),
            features_from_samples(&shifted, 500.0, period),
            features_from_samples(&scaled, 500.0, period),
        ) else {
            violations += 1;
            continue;
        };
        let ok = (ft.ac - f0.ac - c).abs() < tol
            && (ft.dc - f0.dc - c).abs() < tol
            && ((ft.ac - ft.dc) - (f0.ac - f0.dc)).abs() < tol
            && ft.ac_time == f0.ac_time
            && (load_metric(&ft) - load_metric(&f0)).abs() < tol
            && (((fs.ac - fs.dc) - k * (f0.ac - f0.dc)).abs() < tol * k)
            && fs.ac_time == f0.ac_time
            && (load_metric(&fs) - k * load_metric(&f0)).abs() < tol * k;
        violations += usize::from(!ok);
    }
    outcome(
        exact && violations == 0,
        format!("synthetic pulse exact: {exact}; covariance violations {violations}/1000"),
    )
}

fn criterion_10() -> Outcome {
    let Ok(dir) = tempfile::tempdir() else {
        return outcome(false, "no temp dir");
    };
    let scenario = dir.path().join("det.toml");
    let text = "scenario.schedule = \"0:low, 30:high\"\nscenario.duration = 60.0\nscenario.trials = 3\nscenario.averaging = [1, 3]\nscenario.base_seed = 77\n";
    if std::fs::write(&scenario, text).is_err() {
        return outcome(false, "cannot write scenario");
    }
    let run = |name: &str| -> Option<BTreeMap<String, Vec<u8>>> {
        let out = dir.path().join(name);
        let status = Command::new(env!("CARGO_BIN_EXE_meop"))
            .args(["batch", "--scenario"])
            .arg(&scenario)
            .arg("--out")
            .arg(&out)
            .output()
            .ok()?;
        if !status.status.success() {
            return None;
        }
        let mut files = BTreeMap::new();
        let mut stack = vec![out.clone()];
        while let Some(d) = stack.pop() {
            for e in std::fs::read_dir(&d).ok()? {
                let path = e.ok()?.path();
                if path.is_dir() {
                    stack.push(path);
                } else {
                    let rel = path.strip_prefix(&out).ok()?.to_string_lossy().into_owned();
                    files.insert(rel, std::fs::read(&path).ok()?);
                }
            }
        }
        Some(files)
    };
    match (run("a"), run("b")) {
        (Some(a), Some(b)) => outcome(a == b && !a.is_empty(), format!("{} files compared", a.len())),
        _ => outcome(false, "batch run failed"),
    }
}

struct Report {
    failed: usize,
}

impl Report {
    /// Runs one criterion. `shared` is time already spent on work the
    /// criterion reuses; it counts against `limit`.
    fn line(&mut self, n: usize, name: &str, limit: Option<Duration>, shared: Duration, f: impl FnOnce() -> Outcome) -> Duration {
        let start = Instant::now();
        let o = f();
        let own = start.elapsed();
        let took = own + shared;
        let in_time = limit.is_none_or(|l| took <= l);
        let passed = o.passed && in_time;
        self.failed += usize::from(!passed);
        let budget = limit.map(|l| format!(", limit {} s", l.as_secs())).unwrap_or_default();
        println!(
            "criterion {n:>2} {} {name}: {} [{:.1} s{budget}]",
            if passed { "PASS" } else { "FAIL" },
            o.detail,
            took.as_secs_f64()
        );
        own
    }
}

fn main() -> ExitCode {
    let mut report = Report { failed: 0 };
    let dv = Scenario::default().controller.dv;
    let secs = Duration::from_secs;

    let start = Instant::now();
    let sweeps = match Sweeps::run(3) {
        Ok(s) => s,
        Err(e) => {
            println!("noiseless sweeps failed: {e}");
            return ExitCode::FAILURE;
        }
    };
    let sw = start.elapsed();
    report.line(1, "non-monotonic energy curve", Some(secs(10)), sw, || criterion_1(&sweeps));
    report.line(2, "load-dependent optimum shift", Some(secs(10)), sw, || criterion_2(&sweeps, dv));
    report.line(3, "calibration band", None, sw, || criterion_3(&sweeps));
    report.line(4, "metric separation", Some(secs(10)), sw, || criterion_4(&sweeps));
    report.line(5, "greedy-oracle equivalence", Some(secs(120)), sw, || criterion_5(&sweeps));

    let mut sets = TrialSets::new();
    let mut nc3_ok = true;
    let c6 = report.line(6, "transition tracking", Some(secs(180)), sw, || match run_trials(&mut sets, vec![3]) {
        Ok(()) => criterion_6(&sweeps, &sets, dv),
        Err(e) => {
            nc3_ok = false;
            outcome(false, e)
        }
    });
    report.line(7, "averaging trade-off", Some(secs(600)), c6, || {
        if !nc3_ok {
            return outcome(false, "N_c = 3 trials failed");
        }
        match run_trials(&mut sets, vec![1, 5]) {
            Ok(()) => criterion_7(&sets),
            Err(e) => outcome(false, e),
        }
    });
    report.line(8, "physics invariants", None, Duration::ZERO, criterion_8);
    report.line(9, "metric unit tests", None, Duration::ZERO, criterion_9);
    report.line(10, "determinism", None, Duration::ZERO, criterion_10);

    println!("acceptance: {} of 10 criteria passed", 10 - report.failed);
    if report.failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
