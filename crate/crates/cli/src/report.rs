//! The machine-readable scenario report.

use std::collections::BTreeMap;

use padme_core::types::{ResultSummary, TaskKind, Verdict};
use padme_core::RouteStatus;
use serde::{Deserialize, Serialize};

pub const REPORT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioReport {
    pub schema_version: u32,
    pub scenario: String,
    pub seed: u64,
    pub task_kind: TaskKind,
    pub n_stations: usize,
    pub train_id: String,
    pub final_status: RouteStatus,
    pub results_available: bool,
    /// Error code returned by the results endpoint when nothing was released.
    pub results_error: Option<String>,
    pub result_summary: Option<ResultSummary>,
    pub hops: Vec<HopTiming>,
    pub release_checks: Vec<ReleaseCheck>,
    pub approval_gates: Vec<GateCheck>,
    pub ledger: LedgerCheck,
    pub oracle: Option<OracleCheck>,
    pub oracle_equal: Option<bool>,
    pub canary: CanaryScan,
    pub wall_ms: u64,
    pub passed: bool,
    pub failures: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HopTiming {
    pub station_id: String,
    pub hop_index: u32,
    pub verdict: Verdict,
    pub record_count: u64,
    pub exit_control_passed: Option<bool>,
    /// Simulated time since the scenario started.
    pub virtual_ms: u64,
    pub wall_ms: u64,
}

/// A results request made right after a hop was pushed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReleaseCheck {
    pub hops_completed: usize,
    pub status: RouteStatus,
    pub results_available: bool,
    pub error: Option<String>,
}

/// The wait in front of a manually approved hop.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateCheck {
    pub station_id: String,
    pub poll_intervals_waited: u32,
    pub pushed_before_decision: bool,
    pub verdict: Verdict,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LedgerCheck {
    /// `Ok`, or the first violating index.
    pub verdict: String,
    pub entries: usize,
    pub event_counts: BTreeMap<String, usize>,
    pub expected_counts: Option<BTreeMap<String, usize>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleCheck {
    pub oracle: String,
    pub equal: bool,
    pub max_relative_error: f64,
    /// Held-out documents where distributed and oracle predictions agree,
    /// and the number of held-out documents.
    pub held_out_agreement: Option<[usize; 2]>,
    pub held_out_metrics: BTreeMap<String, f64>,
    pub oracle_held_out_metrics: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CanaryScan {
    pub canary: Option<String>,
    pub payloads_decrypted: usize,
    pub bodies_scanned: usize,
    pub log_lines_scanned: usize,
    pub center_files_scanned: usize,
    pub leaks: Vec<String>,
}
