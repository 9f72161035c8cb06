use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use meop_core::harness::{self, emit_reports, Results, Scenario, SweepReport};
use meop_core::{Error, LoadKind};

#[derive(Parser)]
#[command(name = "meop", version, about = "Minimum-energy operating-point tracking testbed")]
struct Cli {
    /// Override the scenario's base seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Open-loop voltage sweep for one load condition.
    Sweep {
        #[arg(long, value_parser = ["none", "low", "high"])]
        load: String,
        #[arg(long, default_value_t = 3, value_parser = parse_nc)]
        nc: usize,
        /// Scenario file; built-in defaults when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// One closed-loop trial of the scenario's load schedule.
    Track {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Seeded trials for every averaging setting, with summary statistics.
    Batch {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the built-in invariant checks.
    Validate,
}

fn parse_nc(s: &str) -> Result<usize, String> {
    match s {
        "1" => Ok(1),
        "3" => Ok(3),
        "5" => Ok(5),
        _ => Err(format!("averaging must be 1, 3 or 5, got {s}")),
    }
}

fn load_scenario(path: Option<&PathBuf>, seed: Option<u64>) -> Result<Scenario, Error> {
    let mut s = match path {
        Some(p) => Scenario::load(p)?,
        None => Scenario::default(),
    };
    if let Some(seed) = seed {
        s.scenario.base_seed = seed;
    }
    Ok(s)
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Sweep { load, nc, config, out } => {
            let scenario = load_scenario(config.as_ref(), cli.seed)?;
            let kind: LoadKind = load.parse()?;
            let rows = harness::run_sweep(&scenario.condition(kind), &scenario.sweep.grid(), nc, &scenario)?;
            let results = Results { sweeps: vec![SweepReport { load: kind, n_cycles: nc, rows }], batch: None };
            report(emit_reports(&scenario, &results, &out)?);
        }
        Command::Track { scenario, out } => {
            let scenario = load_scenario(Some(&scenario), cli.seed)?;
            let nc = scenario.controller.n_cycles;
            let trial = harness::run_transition(&scenario, scenario.scenario.base_seed, nc)?;
            let batch = harness::BatchResult {
                summaries: vec![harness::trial::summarize(nc, std::iter::once(&trial))],
                trials: vec![trial],
            };
            let results = Results { sweeps: vec![], batch: Some(batch) };
            report(emit_reports(&scenario, &results, &out)?);
        }
        Command::Batch { scenario, trials, out } => {
            let mut scenario = load_scenario(Some(&scenario), cli.seed)?;
            if let Some(n) = trials {
                if n == 0 {
                    return Err(Error::Scenario("--trials must be >= 1".into()));
                }
                scenario.scenario.trials = n;
            }
            let batch = harness::run_batch(&scenario)?;
            for s in &batch.summaries {
                let fmt = |st: Option<harness::Stat>| {
                    st.map(|s| format!("{:.3} ± {:.3}", s.mean, s.std)).unwrap_or_else(|| "-".into())
                };
                println!(
                    "N_c={} trials={} timed_out={} response_time={} s convergence_voltage={} V",
                    s.n_cycles,
                    s.trials,
                    s.timed_out,
                    fmt(s.response_time),
                    fmt(s.convergence_voltage)
                );
            }
            let results = Results { sweeps: vec![], batch: Some(batch) };
            report(emit_reports(&scenario, &results, &out)?);
        }
        Command::Validate => {
            let checks = meop_core::validate::run_all();
            let mut failed = 0;
            for c in &checks {
                println!("{} {:<22} {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
                failed += usize::from(!c.passed);
            }
            if failed > 0 {
                return Err(Error::InvalidState);
            }
        }
    }
    Ok(())
}

fn report(paths: Vec<PathBuf>) {
    let n_logs = paths.iter().filter(|p| p.extension().is_some_and(|e| e == "jsonl")).count();
    for p in paths.iter().filter(|p| p.extension().is_none_or(|e| e != "jsonl")) {
        println!("wrote {}", p.display());
    }
    if n_logs > 0 {
        println!("wrote {n_logs} event logs");
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_fatal_runtime() || matches!(e, Error::InvalidState) {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
