use proptest::prelude::*;

use meop_core::controller::{Batch, Controller, ControllerConfig, ControllerState, Event, Mode};

fn controller() -> Controller {
    Controller::new(ControllerConfig::default()).unwrap()
}

fn grid(c: &Controller) -> Vec<f64> {
    let cfg = c.config();
    let n = ((cfg.v_init - cfg.v_min) / cfg.dv + 1e-9).floor() as usize;
    (0..=n).map(|k| ((cfg.v_init - k as f64 * cfg.dv) * 1e9).round() / 1e9).collect()
}

/// Feed `energy(V)` batches until Phase I ends; returns the state and the
/// commanded voltages in order.
fn run_phase_one(c: &Controller, energy: impl Fn(f64) -> f64) -> (ControllerState, Vec<f64>) {
    let (mut s, _) = c.init(0.0);
    let mut cmds = vec![s.voltage];
    let mut t = 0.0;
    while s.mode == Mode::PhaseISearch {
        t += 1.0;
        let (n, out) = c.on_batch(&s, Batch { energy: energy(s.voltage), metric: 0.01, time: t });
        cmds.push(out.command);
        s = n;
        assert!(cmds.len() < 100);
    }
    (s, cmds)
}

proptest! {
    #[test]
    fn greedy_equals_global_on_unimodal(argmin_idx in 0usize..21, left in 1e-3f64..1.0, right in 1e-3f64..1.0, base in 0.01f64..1.0) {
        let c = controller();
        let g = grid(&c);
        let target = g[argmin_idx];
        let energy = |v: f64| base + if v >= target { left * (v - target) } else { right * (target - v) };
        let (s, cmds) = run_phase_one(&c, energy);
        prop_assert!((s.v_star - target).abs() < 1e-9);
        prop_assert_eq!(s.mode, Mode::Monitoring);
        // strictly decreasing until the final return to V*
        let search = &cmds[..cmds.len() - 1];
        prop_assert!(search.windows(2).all(|w| w[1] < w[0]));
        prop_assert!(cmds.iter().all(|&v| (c.config().v_min - 1e-9..=c.config().v_max + 1e-9).contains(&v)));
    }

    #[test]
    fn replay_is_deterministic(seq in prop::collection::vec((0.01f64..1.0, 0.0f64..0.02), 1..200)) {
        let c = controller();
        let run = || {
            let (mut s, _) = c.init(0.0);
            let mut trace = Vec::new();
            for (k, &(e, m)) in seq.iter().enumerate() {
                let (n, out) = c.on_batch(&s, Batch { energy: e, metric: m, time: k as f64 });
                trace.push((out.command.to_bits(), out.events.iter().map(|e| e.event.name()).collect::<Vec<_>>()));
                s = n;
            }
            (trace, s)
        };
        let (a, sa) = run();
        let (b, sb) = run();
        prop_assert_eq!(a, b);
        prop_assert_eq!(sa, sb);
    }

    #[test]
    fn commands_stay_in_bounds(seq in prop::collection::vec((0.01f64..1.0, 0.0f64..0.05), 1..300)) {
        let c = controller();
        let (mut s, _) = c.init(0.0);
        let (lo, hi) = (c.config().v_min - 1e-9, c.config().v_max + 1e-9);
        let mut raising: Option<f64> = None;
        for (k, &(e, m)) in seq.iter().enumerate() {
            let (n, out) = c.on_batch(&s, Batch { energy: e, metric: m, time: k as f64 });
            prop_assert!((lo..=hi).contains(&out.command));
            if n.mode == Mode::RaiseConverge {
                if let Some(prev) = raising {
                    prop_assert!(n.voltage > prev);
                }
                raising = Some(n.voltage);
            } else {
                raising = None;
            }
            s = n;
        }
    }
}

#[test]
fn first_decrement_worse_ends_at_v_init() {
    let c = controller();
    let (s, cmds) = run_phase_one(&c, |v| 1.0 + (5.0 - v));
    assert_eq!(s.v_star, 5.0);
    assert_eq!(cmds.len(), 3);
}

#[test]
fn init_and_config_errors() {
    let (s, out) = controller().init(0.0);
    assert_eq!(out.command, 5.0);
    assert_eq!(s.mode, Mode::PhaseISearch);
    assert!(matches!(out.events[0].event, Event::SearchStarted));
    let bad = ControllerConfig { v_init: 6.0, ..ControllerConfig::default() };
    assert!(Controller::new(bad).is_err());
    let bad = ControllerConfig { delta_minus: 0.1, ..ControllerConfig::default() };
    assert!(Controller::new(bad).is_err());
}

fn settled(c: &Controller, l_ref: f64) -> ControllerState {
    let (mut s, _) = run_phase_one(c, |v| 1.0 + (v - 2.0).abs());
    s = c.on_batch(&s, Batch { energy: 1.0, metric: l_ref, time: 100.0 }).0;
    assert_eq!(s.l_ref, Some(l_ref));
    s
}

#[test]
fn constant_metric_never_leaves_monitoring() {
    let c = controller();
    let mut s = settled(&c, 0.004);
    for k in 0..1000 {
        let (n, out) = c.on_batch(&s, Batch { energy: 1.0, metric: 0.004, time: 200.0 + k as f64 });
        assert!(out.events.is_empty());
        s = n;
    }
    assert_eq!(s.mode, Mode::Monitoring);
}

#[test]
fn load_decrease_resweeps_from_v_star() {
    let c = controller();
    let s = settled(&c, 0.004);
    let v_star = s.v_star;
    let (s, out) = c.on_batch(&s, Batch { energy: 0.9, metric: 0.001, time: 300.0 });
    assert!(matches!(out.events[0].event, Event::LoadDecreaseDetected { .. }));
    assert_eq!(s.mode, Mode::DownwardSweep);
    assert_eq!(out.command, v_star);
    let (s, out) = c.on_batch(&s, Batch { energy: 0.8, metric: 0.001, time: 301.0 });
    assert_eq!(s.e_min, Some(0.8));
    assert!(out.command < v_star);
}

#[test]
fn load_increase_raises_until_converged() {
    let c = controller();
    let s = settled(&c, 0.004);
    let v0 = s.voltage;
    let (s, out) = c.on_batch(&s, Batch { energy: 1.2, metric: 0.01, time: 300.0 });
    assert!(matches!(out.events[0].event, Event::LoadIncreaseDetected { .. }));
    assert_eq!(s.mode, Mode::RaiseConverge);
    assert!(s.voltage > v0);
    let (s, _) = c.on_batch(&s, Batch { energy: 1.1, metric: 0.008, time: 301.0 });
    assert_eq!(s.mode, Mode::RaiseConverge);
    let (s, out) = c.on_batch(&s, Batch { energy: 1.1, metric: 0.008, time: 302.0 });
    assert!(out.events.iter().any(|e| matches!(e.event, Event::MetricConverged)));
    assert_eq!(s.mode, Mode::DownwardSweep);
    assert!(out.command < s.v_star + 1e-12);
}

#[test]
fn stall_handling() {
    let c = controller();
    // stall during the search keeps the last good V*
    let (mut s, _) = c.init(0.0);
    for k in 0..3 {
        s = c.on_batch(&s, Batch { energy: 1.0 - 0.1 * k as f64, metric: 0.0, time: k as f64 }).0;
    }
    let v_star = s.v_star;
    let (s2, out) = c.on_stall(&s, 10.0).unwrap();
    assert_eq!(s2.v_star, v_star);
    assert_eq!(s2.mode, Mode::Monitoring);
    assert!(out.events.iter().any(|e| matches!(e.event, Event::StallRecovered)));

    // stall while monitoring is a load increase
    let s = settled(&c, 0.004);
    let (s, _) = c.on_stall(&s, 400.0).unwrap();
    assert_eq!(s.mode, Mode::RaiseConverge);

    // stall at V_max is fatal
    let (s, _) = c.init(0.0);
    assert!(c.on_stall(&s, 1.0).is_err());
}
