//! Scenario harness: configuration, the closed-loop simulation driver,
//! trace recording and file formats, wake-sheet reconstruction, and
//! trace-against-reference comparison.
//!
//! The submodules compose in one direction: [`config`] describes a run,
//! [`scenario`] executes it into a [`trace::RunTrace`], and [`wake`] and
//! [`compare`] post-process recorded traces.

pub mod compare;
pub mod config;
pub mod scenario;
pub mod trace;
pub mod wake;

pub use compare::{compare_traces, ChannelReport, CompareOptions, ComparisonReport};
pub use config::{InitialState, ReferenceSchedule, ScenarioConfig};
pub use scenario::{run_scenario, RunOutcome, RunStatus};
pub use trace::RunTrace;
pub use wake::{export_wake, WakeDataset, WakePoint};
