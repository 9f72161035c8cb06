//! Experiment harness: scenarios, sweeps, transition trials and reports.

pub mod report;
pub mod scenario;
pub mod sweep;
pub mod trial;

pub use report::{emit_reports, Results, SweepReport};
pub use scenario::{parse_schedule, RunConfig, Scenario, ScheduleEntry, SweepConfig};
pub use sweep::{run_sweep, sweep_argmin, SweepRow};
pub use trial::{run_batch, run_phase_one, run_transition, AveragingSummary, BatchResult, EventRecord, Stat, TrialResult};
