//! Trace-driven simulation: event schedules, the machine that applies them
//! and the run loop that accumulates metrics.

mod events;
mod machine;
mod metrics;
mod run;

pub use events::{schedule_events, EventKind, EventSchedule, ScheduleEvent};
pub use machine::{Machine, RotationStats};
pub use metrics::{compare_runs, Overhead, RunIdentity, RunMetrics, ThreadMetrics};
pub use run::{run_trace, Mode, RunConfig};
