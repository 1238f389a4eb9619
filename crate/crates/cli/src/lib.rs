//! Command-line entry points and the in-process simulation harness.
//!
//! [`scenario::run_scenario`] boots a service center and n station agents
//! in one process, drives a train from submission to release, and checks
//! the outcome against single-machine oracles, the audit ledger and a
//! canary planted in every station's rows.

pub mod capture;
pub mod cli;
pub mod fixtures;
pub mod oracle;
pub mod report;
pub mod scenario;

pub use report::{ScenarioReport, REPORT_SCHEMA_VERSION};
pub use scenario::{build_fixtures, run_scenario, run_with_fixtures, ScenarioConfig, ScenarioFailure, ScenarioRun};
