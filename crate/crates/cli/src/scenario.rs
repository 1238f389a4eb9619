//! End-to-end scenarios: one center and n station agents in one process,
//! connected through the in-process loopback transport, driven through
//! submit, approvals, dispatch, hops and release.
//!
//! The harness observes the run only through the public center and station
//! admin APIs. It runs on a paused tokio clock, so poll intervals cost no
//! wall time.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use axum::body::Body;
use axum::http::Request;
use http_body_util::BodyExt;
use padme_center::api::PushHopRequest;
use padme_center::client::{BoxFuture, WireRequest, WireResponse};
use padme_center::{router, AppState, CenterClient, CenterService, ClientError, LoopbackTransport, Transport};
use padme_core::canonical::Timestamp;
use padme_core::crypto::{chain_verify, generate_keypair, open, AuditEntry, AuditEvent, ChainVerdict, KeyPair, KeyRole, PublicKey};
use padme_core::types::{
    AnalysisTask, ApprovalRecord, ExitControlPolicy, Hyperparameters, Party, TaskKind, Verdict,
};
use padme_core::{decode_train_archive, RouteStatus, TrainArchive};
use padme_station::admin_api::PendingList;
use padme_station::{admin_router, ApprovalDesk, DecisionRequest, StationAgent};
use padme_tasks::metrics::auc;
use padme_tasks::runner::training_rows;
use padme_tasks::schema::{AND_PAIRS_SCHEMA_ID, SENTIMENT_SCHEMA_ID, TABULAR_SCHEMA_ID};
use padme_tasks::{nb_predict, sgd_predict, DatasetSchema, LocalDataset, NbState, SgdState};
use rand::Rng;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;
use tower::ServiceExt;

use crate::capture::{Exchange, LogBuffer, RecordingTransport};
use crate::fixtures;
use crate::oracle::{centralized_nb, logistic_probability, max_relative_error, nb_oracle_predict, sequential_sgd};
use crate::report::{
    CanaryScan, GateCheck, HopTiming, LedgerCheck, OracleCheck, ReleaseCheck, ScenarioReport, REPORT_SCHEMA_VERSION,
};

/// SGD parameters may differ from the sequential oracle by at most this
/// relative error.
pub const SGD_ORACLE_TOLERANCE: f64 = 1e-9;

const CLOCK_BASE_UNIX: i64 = 1_700_000_000;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("scenario failed at {stage}: {message}")]
pub struct ScenarioFailure {
    pub stage: String,
    pub message: String,
}

fn fail(stage: &str) -> impl Fn(&dyn std::fmt::Display) -> ScenarioFailure + '_ {
    move |e| ScenarioFailure {
        stage: stage.to_string(),
        message: e.to_string(),
    }
}

fn failure(stage: &str, message: impl Into<String>) -> ScenarioFailure {
    ScenarioFailure {
        stage: stage.to_string(),
        message: message.into(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskSpec {
    pub kind: TaskKind,
    pub hyperparameters: Hyperparameters,
    /// Defaults to the builtin schema of the task kind.
    #[serde(default)]
    pub required_schema_id: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StationSpec {
    /// JSONL dataset; generated from `fixture` when absent.
    #[serde(default)]
    pub dataset: Option<PathBuf>,
    #[serde(default = "yes")]
    pub auto_approve: bool,
    /// The station owner's vote on the manifest.
    #[serde(default = "approve")]
    pub owner_vote: Verdict,
    /// The station admin's decision on the trained hop, when not
    /// auto-approved.
    #[serde(default = "approve")]
    pub admin_decision: Verdict,
    /// Poll intervals the admin lets pass before deciding.
    #[serde(default)]
    pub decision_delay_polls: u32,
}

impl Default for StationSpec {
    fn default() -> Self {
        Self {
            dataset: None,
            auto_approve: true,
            owner_vote: Verdict::Approve,
            admin_decision: Verdict::Approve,
            decision_delay_polls: 0,
        }
    }
}

fn yes() -> bool {
    true
}

fn approve() -> Verdict {
    Verdict::Approve
}

fn default_poll_ms() -> u64 {
    1000
}

/// Generated datasets: one corpus split into `partition` sizes in route
/// order, plus a held-out set from a separate stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "generator", rename_all = "snake_case", deny_unknown_fields)]
pub enum FixtureSpec {
    Sentiment { partition: Vec<usize>, held_out: usize },
    AndPairs { partition: Vec<usize>, held_out: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    pub n_stations: usize,
    pub task: TaskSpec,
    pub exit_policy: ExitControlPolicy,
    pub seed: u64,
    #[serde(default = "approve")]
    pub researcher_vote: Verdict,
    #[serde(default)]
    pub stations: Vec<StationSpec>,
    #[serde(default)]
    pub fixture: Option<FixtureSpec>,
    #[serde(default = "default_poll_ms")]
    pub poll_interval_ms: u64,
    /// Plant a canary string in every station row and scan for it.
    #[serde(default = "yes")]
    pub canary: bool,
}

impl ScenarioConfig {
    pub fn from_json(text: &str) -> Result<Self, ScenarioFailure> {
        let mut config: Self = serde_json::from_str(text).map_err(|e| fail("config")(&e))?;
        if config.stations.is_empty() {
            config.stations = vec![StationSpec::default(); config.n_stations];
        }
        config.validate()?;
        Ok(config)
    }

    /// Loads a config file; relative dataset paths resolve against its
    /// directory.
    pub fn load(path: &Path) -> Result<Self, ScenarioFailure> {
        let text = std::fs::read_to_string(path).map_err(|e| failure("config", format!("{}: {e}", path.display())))?;
        let mut config = Self::from_json(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        for spec in &mut config.stations {
            if let Some(p) = spec.dataset.as_mut().filter(|p| p.is_relative()) {
                *p = base.join(&*p);
            }
        }
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), ScenarioFailure> {
        let bad = |m: String| Err(failure("config", m));
        if self.n_stations == 0 {
            return bad("n_stations must be at least 1".into());
        }
        if self.stations.len() != self.n_stations {
            return bad(format!("{} station entries for n_stations = {}", self.stations.len(), self.n_stations));
        }
        if self.poll_interval_ms == 0 {
            return bad("poll_interval_ms must be positive".into());
        }
        let partition = match &self.fixture {
            Some(FixtureSpec::Sentiment { partition, .. }) => {
                if self.task.kind != TaskKind::NbSentiment {
                    return bad("sentiment fixtures need an NbSentiment task".into());
                }
                Some(partition)
            }
            Some(FixtureSpec::AndPairs { partition, .. }) => {
                if self.task.kind != TaskKind::AndPairwise {
                    return bad("and_pairs fixtures need an AndPairwise task".into());
                }
                Some(partition)
            }
            None => None,
        };
        if let Some(p) = partition {
            if p.len() != self.n_stations {
                return bad(format!("partition has {} parts for {} stations", p.len(), self.n_stations));
            }
        }
        for (i, s) in self.stations.iter().enumerate() {
            if s.dataset.is_none() && self.fixture.is_none() {
                return bad(format!("station {} has no dataset and there is no fixture generator", i + 1));
            }
        }
        self.analysis_task().validate().map_err(|e| fail("config")(&e))
    }

    pub fn schema_id(&self) -> String {
        self.task.required_schema_id.clone().unwrap_or_else(|| {
            match self.task.kind {
                TaskKind::NbSentiment => SENTIMENT_SCHEMA_ID,
                TaskKind::AndPairwise => AND_PAIRS_SCHEMA_ID,
                TaskKind::SgdLogReg => TABULAR_SCHEMA_ID,
            }
            .to_string()
        })
    }

    pub fn analysis_task(&self) -> AnalysisTask {
        AnalysisTask {
            task_id: self.name.clone(),
            kind: self.task.kind,
            hyperparameters: self.task.hyperparameters.clone(),
            required_schema_id: self.schema_id(),
            exit_policy: self.exit_policy.clone(),
        }
    }

    pub fn station_ids(&self) -> Vec<String> {
        (1..=self.n_stations).map(|i| format!("station-{i}")).collect()
    }
}

/// Datasets as seen by each station, after canary planting.
#[derive(Debug, Clone, PartialEq)]
pub struct Fixtures {
    pub stations: Vec<LocalDataset>,
    pub held_out: Option<LocalDataset>,
    pub canary: Option<String>,
}

pub fn build_fixtures(config: &ScenarioConfig) -> Result<Fixtures, ScenarioFailure> {
    let schema_id = config.schema_id();
    let schema = DatasetSchema::builtin(&schema_id)
        .ok_or_else(|| failure("fixtures", format!("no builtin schema `{schema_id}`")))?;
    let (generated, held_out) = match &config.fixture {
        Some(FixtureSpec::Sentiment { partition, held_out }) => {
            let all = fixtures::sentiment_corpus(partition.iter().sum(), config.seed, 1);
            (split(all, partition), Some(fixtures::sentiment_corpus(*held_out, config.seed, 2)))
        }
        Some(FixtureSpec::AndPairs { partition, held_out }) => {
            let all = fixtures::and_pairs(partition.iter().sum(), config.seed, 1);
            (split(all, partition), Some(fixtures::and_pairs(*held_out, config.seed, 2)))
        }
        None => (vec![Vec::new(); config.n_stations], None),
    };
    let canary = config.canary.then(|| fixtures::canary(config.seed));
    let mut stations = Vec::with_capacity(config.n_stations);
    for (spec, rows) in config.stations.iter().zip(generated) {
        let mut rows = match &spec.dataset {
            Some(path) => LocalDataset::load(path, schema.clone()).map_err(|e| fail("fixtures")(&e))?.rows().to_vec(),
            None => rows,
        };
        if let Some(c) = &canary {
            fixtures::plant_canary(&mut rows, c);
        }
        stations.push(LocalDataset::new(schema.clone(), rows).map_err(|e| fail("fixtures")(&e))?);
    }
    let held_out = held_out
        .map(|rows| LocalDataset::new(schema.clone(), rows))
        .transpose()
        .map_err(|e| fail("fixtures")(&e))?;
    Ok(Fixtures {
        stations,
        held_out,
        canary,
    })
}

fn split(mut rows: Vec<Map<String, Value>>, partition: &[usize]) -> Vec<Vec<Map<String, Value>>> {
    let mut out = Vec::with_capacity(partition.len());
    for &n in partition {
        let rest = rows.split_off(n);
        out.push(std::mem::replace(&mut rows, rest));
    }
    out
}

/// Every key taking part in a scenario, derived from the scenario seed.
pub struct ScenarioKeys {
    pub researcher: KeyPair,
    pub stations: Vec<KeyPair>,
    pub admins: Vec<KeyPair>,
}

impl ScenarioKeys {
    pub fn derive(seed: u64, n: usize) -> Self {
        let mut rng = fixtures::rng(seed, 7);
        let mut next = |role| generate_keypair(role, Some(rng.gen()));
        Self {
            researcher: next(KeyRole::Researcher),
            stations: (0..n).map(|_| next(KeyRole::Station)).collect(),
            admins: (0..n).map(|_| next(KeyRole::Station)).collect(),
        }
    }

    pub fn by_id(&self, id: &padme_core::KeyId) -> Option<&KeyPair> {
        std::iter::once(&self.researcher)
            .chain(&self.stations)
            .find(|k| &k.key_id() == id)
    }
}

/// Everything a scenario produced. The report is the serializable part;
/// the rest lets tests check it independently.
pub struct ScenarioRun {
    pub report: ScenarioReport,
    pub fixtures: Fixtures,
    pub keys: ScenarioKeys,
    pub center_key: Option<PublicKey>,
    pub final_archive: Option<TrainArchive>,
    /// Plaintext of every envelope pushed by a station, opened with the
    /// intended recipient's key.
    pub decrypted_payloads: Vec<Vec<u8>>,
    pub exchanges: Vec<Exchange>,
    pub ledger: Vec<AuditEntry>,
    pub log: String,
    pub center_files: Vec<(PathBuf, Vec<u8>)>,
}

pub fn run_scenario(config: &ScenarioConfig) -> Result<ScenarioRun, ScenarioFailure> {
    let fixtures = build_fixtures(config)?;
    run_with_fixtures(config, fixtures)
}

pub fn run_with_fixtures(config: &ScenarioConfig, fixtures: Fixtures) -> Result<ScenarioRun, ScenarioFailure> {
    config.validate()?;
    let wall = std::time::Instant::now();
    let logs = LogBuffer::default();
    let subscriber = tracing_subscriber::fmt()
        .with_writer(logs.clone())
        .with_ansi(false)
        .with_max_level(tracing::Level::DEBUG)
        .finish();
    let runtime = tokio::runtime::Builder::new_current_thread()
        .enable_all()
        .start_paused(true)
        .build()
        .map_err(|e| fail("runtime")(&e))?;
    let data_dir = tempfile::tempdir().map_err(|e| fail("runtime")(&e))?;
    let keys = ScenarioKeys::derive(config.seed, config.n_stations);

    let driven = tracing::subscriber::with_default(subscriber, || {
        runtime.block_on(drive(config, &fixtures, &keys, data_dir.path()))
    })?;
    let center_files = read_tree(data_dir.path()).map_err(|e| fail("teardown")(&e))?;
    drop(runtime);

    let log = logs.contents();
    let oracle = match &driven.final_archive {
        Some(archive) => Some(oracle_check(config, &fixtures, archive)?),
        None => None,
    };
    let canary = canary_scan(fixtures.canary.as_deref(), &driven, &log, &center_files);
    let mut report = ScenarioReport {
        schema_version: REPORT_SCHEMA_VERSION,
        scenario: config.name.clone(),
        seed: config.seed,
        task_kind: config.task.kind,
        n_stations: config.n_stations,
        train_id: driven.train_id.clone(),
        final_status: driven.final_status,
        results_available: driven.final_archive.is_some(),
        results_error: driven.results_error.clone(),
        result_summary: driven.final_archive.as_ref().and_then(|a| a.result_summary.clone()),
        hops: driven.observations.hops.clone(),
        release_checks: driven.observations.release_checks.clone(),
        approval_gates: driven.gates.clone(),
        ledger: ledger_check(&driven.ledger, driven.center_key.as_ref(), driven.final_status, config.n_stations),
        oracle_equal: oracle.as_ref().map(|o| o.equal),
        oracle,
        canary,
        wall_ms: wall.elapsed().as_millis() as u64,
        passed: false,
        failures: Vec::new(),
    };
    report.failures = judge(&report);
    report.passed = report.failures.is_empty();
    Ok(ScenarioRun {
        report,
        fixtures,
        keys,
        center_key: driven.center_key,
        final_archive: driven.final_archive,
        decrypted_payloads: driven.decrypted_payloads,
        exchanges: driven.exchanges,
        ledger: driven.ledger,
        log,
        center_files,
    })
}

#[derive(Default)]
struct Observations {
    hops: Vec<HopTiming>,
    release_checks: Vec<ReleaseCheck>,
}

struct Driven {
    train_id: String,
    final_status: RouteStatus,
    final_archive: Option<TrainArchive>,
    results_error: Option<String>,
    observations: Observations,
    gates: Vec<GateCheck>,
    ledger: Vec<AuditEntry>,
    center_key: Option<PublicKey>,
    exchanges: Vec<Exchange>,
    decrypted_payloads: Vec<Vec<u8>>,
}

/// Wraps a station's transport. After each accepted hop push it records
/// the hop and immediately asks the center for results as the researcher.
struct HopProbe {
    inner: Arc<dyn Transport>,
    researcher: CenterClient,
    observations: Arc<Mutex<Observations>>,
    started: tokio::time::Instant,
    wall: std::time::Instant,
}

impl Transport for HopProbe {
    fn send(&self, request: WireRequest) -> BoxFuture<'_, Result<WireResponse, ClientError>> {
        Box::pin(async move {
            let is_push = request.method == "POST" && request.path.ends_with("/hops");
            let body = request.body.clone();
            let response = self.inner.send(request).await?;
            if is_push && (200..300).contains(&response.status) {
                if let Ok(push) = serde_json::from_slice::<PushHopRequest>(&body) {
                    let report = push.report;
                    let timing = HopTiming {
                        station_id: report.station_id.clone(),
                        hop_index: report.hop_index,
                        verdict: report.verdict,
                        record_count: report.record_count,
                        exit_control_passed: report.exit_control.as_ref().map(|e| e.passed),
                        virtual_ms: self.started.elapsed().as_millis() as u64,
                        wall_ms: self.wall.elapsed().as_millis() as u64,
                    };
                    let check = release_check(&self.researcher, &report.train_id).await;
                    let mut obs = self.observations.lock().expect("observations");
                    obs.hops.push(timing);
                    obs.release_checks.push(check);
                }
            }
            Ok(response)
        })
    }
}

async fn release_check(researcher: &CenterClient, train_id: &str) -> ReleaseCheck {
    let (hops_completed, status) = match researcher.status(train_id).await {
        Ok(s) => (s.hops_completed.len(), s.manifest.route.status()),
        Err(_) => (0, RouteStatus::Pending),
    };
    let (results_available, error) = match researcher.results(train_id).await {
        Ok(_) => (true, None),
        Err(e) => (false, Some(e.api_code().unwrap_or("Transport").to_string())),
    };
    ReleaseCheck {
        hops_completed,
        status,
        results_available,
        error,
    }
}

async fn admin_call(router: &axum::Router, method: &str, uri: &str, body: Option<Vec<u8>>) -> Result<Vec<u8>, String> {
    let request = Request::builder()
        .method(method)
        .uri(uri)
        .header("content-type", "application/json")
        .body(body.map(Body::from).unwrap_or_else(Body::empty))
        .map_err(|e| e.to_string())?;
    let response = router.clone().oneshot(request).await.map_err(|e| e.to_string())?;
    let status = response.status();
    let bytes = response.into_body().collect().await.map_err(|e| e.to_string())?.to_bytes().to_vec();
    if !status.is_success() {
        return Err(format!("{status}: {}", String::from_utf8_lossy(&bytes)));
    }
    Ok(bytes)
}

struct ManualGate {
    index: usize,
    router: axum::Router,
    first_seen: Option<(tokio::time::Instant, usize)>,
    pushed_early: bool,
    done: bool,
}

async fn drive(
    config: &ScenarioConfig,
    fixtures: &Fixtures,
    keys: &ScenarioKeys,
    data_dir: &Path,
) -> Result<Driven, ScenarioFailure> {
    let started = tokio::time::Instant::now();
    let poll = Duration::from_millis(config.poll_interval_ms);
    let service = CenterService::open(data_dir, Duration::from_secs(60)).map_err(|e| fail("center")(&e))?;
    let state = AppState::new(service);
    let recorder = Arc::new(RecordingTransport::new(Arc::new(LoopbackTransport::new(router(state)))));
    let researcher = CenterClient::new(recorder.clone(), keys.researcher.clone());
    let center_key = researcher.center_public_key().await.map_err(|e| fail("center")(&e))?;
    let observations = Arc::new(Mutex::new(Observations::default()));
    let clock: padme_station::Clock = {
        let start = started;
        Arc::new(move || Timestamp::from_unix(CLOCK_BASE_UNIX + start.elapsed().as_secs() as i64))
    };

    let ids = config.station_ids();
    let mut agents = Vec::new();
    let mut gates = Vec::new();
    for (i, id) in ids.iter().enumerate() {
        let spec = &config.stations[i];
        let key = keys.stations[i].clone();
        let desk = ApprovalDesk::new(Arc::new(key.clone()), [keys.admins[i].key_id()], spec.auto_approve);
        let probe = Arc::new(HopProbe {
            inner: recorder.clone(),
            researcher: researcher.clone(),
            observations: observations.clone(),
            started,
            wall: std::time::Instant::now(),
        });
        let client = CenterClient::new(probe, key);
        let agent = StationAgent::new(id, client, Arc::new(fixtures.stations[i].clone()), desk.clone())
            .with_clock(clock.clone());
        agent
            .register(&format!("owner-{}", i + 1), "", &id.to_uppercase())
            .await
            .map_err(|e| fail("register")(&e))?;
        if !spec.auto_approve {
            gates.push(ManualGate {
                index: i,
                router: admin_router(desk),
                first_seen: None,
                pushed_early: false,
                done: false,
            });
        }
        agents.push(agent);
    }

    let submitted = researcher
        .submit_task(config.analysis_task(), ids.clone())
        .await
        .map_err(|e| fail("submit")(&e))?;
    let train_id = submitted.train_id.clone();
    let binding = submitted.manifest.binding_digest().map_err(|e| fail("submit")(&e))?;
    let vote = ApprovalRecord::sign(&train_id, Party::Researcher, config.researcher_vote, &binding, &keys.researcher);
    let status = researcher.approve(&train_id, &vote).await.map_err(|e| fail("approve")(&e))?;
    let owners = if status == RouteStatus::Rejected { 0 } else { ids.len() };
    for (i, id) in ids.iter().enumerate().take(owners) {
        let owner = CenterClient::new(recorder.clone(), keys.stations[i].clone());
        let party = Party::StationOwner(id.clone());
        let vote = ApprovalRecord::sign(&train_id, party, config.stations[i].owner_vote, &binding, &keys.stations[i]);
        let status = owner.approve(&train_id, &vote).await.map_err(|e| fail("approve")(&e))?;
        if status == RouteStatus::Rejected {
            break;
        }
    }
    let status = researcher.status(&train_id).await.map_err(|e| fail("approve")(&e))?.status;
    if status == RouteStatus::Approved {
        researcher.dispatch(&train_id).await.map_err(|e| fail("dispatch")(&e))?;
    }

    let (stop_tx, stop_rx) = tokio::sync::watch::channel(false);
    let handles: Vec<_> = agents
        .into_iter()
        .map(|agent| {
            let mut rx = stop_rx.clone();
            tokio::spawn(agent.run(poll, async move {
                let _ = rx.wait_for(|s| *s).await;
            }))
        })
        .collect();

    let tick = poll / 4;
    let total_delay: u32 = config.stations.iter().map(|s| s.decision_delay_polls).sum();
    let deadline = started + poll * (20 * config.n_stations as u32 + total_delay + 20);
    let mut final_status = status;
    while !final_status.is_terminal() {
        if tokio::time::Instant::now() > deadline {
            let _ = stop_tx.send(true);
            return Err(failure("hops", format!("route still {final_status:?} at the deadline")));
        }
        let view = researcher.status(&train_id).await.map_err(|e| fail("hops")(&e))?;
        final_status = view.status;
        let hops_done = view.hops_completed.len();
        for gate in gates.iter_mut().filter(|g| !g.done) {
            let listed = admin_call(&gate.router, "GET", "/pending", None).await.map_err(|e| failure("approval", e))?;
            let list: PendingList = serde_json::from_slice(&listed).map_err(|e| fail("approval")(&e))?;
            let Some(pending) = list.pending.into_iter().find(|p| p.train_id == train_id) else {
                continue;
            };
            let now = tokio::time::Instant::now();
            let (seen, hops_at_seen) = *gate.first_seen.get_or_insert((now, hops_done));
            if hops_done != hops_at_seen || view.status != RouteStatus::AwaitingApproval {
                gate.pushed_early = true;
            }
            let spec = &config.stations[gate.index];
            if now.duration_since(seen) >= poll * spec.decision_delay_polls {
                let reason = match spec.admin_decision {
                    Verdict::Approve => "reviewed",
                    Verdict::Reject => "declined by station admin",
                };
                let request = DecisionRequest::signed(&pending, spec.admin_decision, reason, &keys.admins[gate.index]);
                let body = serde_json::to_vec(&request).map_err(|e| fail("approval")(&e))?;
                let uri = format!("/pending/{train_id}/decision");
                admin_call(&gate.router, "POST", &uri, Some(body)).await.map_err(|e| failure("approval", e))?;
                gate.done = true;
            }
        }
        if !final_status.is_terminal() {
            tokio::time::sleep(tick).await;
        }
    }
    let _ = stop_tx.send(true);
    for h in handles {
        h.await.map_err(|e| fail("teardown")(&e))?;
    }

    let gates = gates
        .iter()
        .filter(|g| g.first_seen.is_some())
        .map(|g| GateCheck {
            station_id: ids[g.index].clone(),
            poll_intervals_waited: config.stations[g.index].decision_delay_polls,
            pushed_before_decision: g.pushed_early,
            verdict: config.stations[g.index].admin_decision,
        })
        .collect();

    let (final_archive, results_error) = match researcher.results(&train_id).await {
        Ok(bundle) => {
            let digest = bundle.manifest.binding_digest().map_err(|e| fail("results")(&e))?;
            let bytes = open(&bundle.envelope, &keys.researcher, &bundle.sender_public_key, digest.as_bytes())
                .map_err(|e| fail("results")(&e))?;
            (Some(decode_train_archive(&bytes).map_err(|e| fail("results")(&e))?), None)
        }
        Err(e) => (None, Some(e.api_code().unwrap_or("Transport").to_string())),
    };
    let ledger = researcher.ledger(&train_id).await.map_err(|e| fail("ledger")(&e))?;
    let exchanges = recorder.exchanges();
    let decrypted_payloads = decrypt_pushes(&exchanges, keys, &binding).map_err(|e| failure("canary", e))?;
    let observations = std::mem::take(&mut *observations.lock().expect("observations"));
    Ok(Driven {
        train_id,
        final_status,
        final_archive,
        results_error,
        observations,
        gates,
        ledger,
        center_key: Some(center_key),
        exchanges,
        decrypted_payloads,
    })
}

/// Opens every pushed envelope with its intended recipient's key.
fn decrypt_pushes(
    exchanges: &[Exchange],
    keys: &ScenarioKeys,
    binding: &padme_core::Digest,
) -> Result<Vec<Vec<u8>>, String> {
    let mut out = Vec::new();
    for ex in exchanges {
        let accepted = ex.response.as_ref().is_some_and(|r| (200..300).contains(&r.status));
        if ex.request.method != "POST" || !ex.request.path.ends_with("/hops") || !accepted {
            continue;
        }
        let push: PushHopRequest = serde_json::from_slice(&ex.request.body).map_err(|e| e.to_string())?;
        let Some(envelope) = push.envelope else {
            continue;
        };
        let recipient = keys
            .by_id(&envelope.recipient_key_id)
            .ok_or("pushed envelope addressed to an unknown key")?;
        let sender = keys
            .by_id(&envelope.sender_key_id)
            .ok_or("pushed envelope from an unknown key")?;
        let plain = open(&envelope, recipient, sender.public(), binding.as_bytes()).map_err(|e| e.to_string())?;
        out.push(plain);
    }
    Ok(out)
}

fn read_tree(dir: &Path) -> std::io::Result<Vec<(PathBuf, Vec<u8>)>> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d)? {
            let path = entry?.path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let bytes = std::fs::read(&path)?;
                out.push((path.strip_prefix(dir).unwrap_or(&path).to_path_buf(), bytes));
            }
        }
    }
    out.sort();
    Ok(out)
}

fn contains(haystack: &[u8], needle: &[u8]) -> bool {
    !needle.is_empty() && haystack.windows(needle.len()).any(|w| w == needle)
}

fn canary_scan(canary: Option<&str>, driven: &Driven, log: &str, files: &[(PathBuf, Vec<u8>)]) -> CanaryScan {
    let mut scan = CanaryScan {
        canary: canary.map(String::from),
        payloads_decrypted: driven.decrypted_payloads.len(),
        bodies_scanned: 0,
        log_lines_scanned: log.lines().count(),
        center_files_scanned: files.len(),
        leaks: Vec::new(),
    };
    let Some(canary) = canary else {
        return scan;
    };
    let needle = canary.as_bytes();
    for (i, p) in driven.decrypted_payloads.iter().enumerate() {
        if contains(p, needle) {
            scan.leaks.push(format!("pushed payload {i}"));
        }
    }
    for (i, ex) in driven.exchanges.iter().enumerate() {
        scan.bodies_scanned += 1 + usize::from(ex.response.is_some());
        if contains(&ex.request.body, needle) {
            scan.leaks.push(format!("request {i} {} {}", ex.request.method, ex.request.path));
        }
        if ex.response.as_ref().is_some_and(|r| contains(&r.body, needle)) {
            scan.leaks.push(format!("response {i} {} {}", ex.request.method, ex.request.path));
        }
    }
    for (n, line) in log.lines().enumerate() {
        if line.contains(canary) {
            scan.leaks.push(format!("log line {}", n + 1));
        }
    }
    for (path, bytes) in files {
        if contains(bytes, needle) {
            scan.leaks.push(format!("center file {}", path.display()));
        }
    }
    scan
}

pub fn event_name(event: AuditEvent) -> String {
    format!("{event:?}")
}

/// Ledger event counts for a completed route over `n` stations.
pub fn expected_completed_counts(n: usize) -> BTreeMap<String, usize> {
    use AuditEvent::*;
    [
        (TaskSubmitted, 1),
        (Approved, n + 1),
        (Dispatched, 1),
        (HopFetched, n),
        (HopPushed, n),
        (AdminDecision, n),
        (ExitControl, 1),
        (Released, 1),
    ]
    .into_iter()
    .map(|(e, c)| (event_name(e), c))
    .collect()
}

fn ledger_check(ledger: &[AuditEntry], center: Option<&PublicKey>, status: RouteStatus, n: usize) -> LedgerCheck {
    let verdict = match center.map(|k| chain_verify(ledger, k)) {
        Some(ChainVerdict::Ok) => "Ok".to_string(),
        Some(ChainVerdict::FirstViolationIndex(i)) => format!("FirstViolationIndex({i})"),
        None => "Unverified".to_string(),
    };
    let mut event_counts = BTreeMap::new();
    for entry in ledger {
        *event_counts.entry(event_name(entry.event)).or_insert(0) += 1;
    }
    LedgerCheck {
        verdict,
        entries: ledger.len(),
        event_counts,
        expected_counts: (status == RouteStatus::Completed).then(|| expected_completed_counts(n)),
    }
}

fn oracle_check(config: &ScenarioConfig, fixtures: &Fixtures, archive: &TrainArchive) -> Result<OracleCheck, ScenarioFailure> {
    let err = fail("oracle");
    let task = config.analysis_task();
    match task.kind {
        TaskKind::NbSentiment => {
            let schema = fixtures.stations[0].schema();
            let labels = schema.label_values().to_vec();
            let texts: Vec<Vec<(&str, String)>> = fixtures
                .stations
                .iter()
                .map(|d| d.labeled_texts())
                .collect::<Result<_, _>>()
                .map_err(|e| err(&e))?;
            let alpha = task.hyperparameters.alpha.map_or(1.0, |a| a.get());
            let oracle = centralized_nb(
                texts.iter().flatten().map(|(t, l)| (*t, l.as_str())),
                &labels,
                alpha,
                task.exit_policy.min_token_count,
            );
            let distributed = NbState::from_payload(&archive.state.payload).map_err(|e| err(&e))?;
            let mut check = OracleCheck {
                oracle: "centralized_naive_bayes".into(),
                equal: distributed == oracle,
                max_relative_error: if distributed == oracle { 0.0 } else { 1.0 },
                held_out_agreement: None,
                held_out_metrics: BTreeMap::new(),
                oracle_held_out_metrics: BTreeMap::new(),
            };
            if let Some(held) = &fixtures.held_out {
                let docs = held.labeled_texts().map_err(|e| err(&e))?;
                let mut agree = 0;
                let (mut right, mut oracle_right) = (0, 0);
                for (text, label) in &docs {
                    let ours = nb_predict(&distributed, text).map_err(|e| err(&e))?.label;
                    let theirs = nb_oracle_predict(&oracle, text);
                    agree += usize::from(ours == theirs);
                    right += usize::from(&ours == label);
                    oracle_right += usize::from(&theirs == label);
                }
                let n = docs.len();
                check.held_out_agreement = Some([agree, n]);
                if n > 0 {
                    check.held_out_metrics.insert("accuracy".into(), right as f64 / n as f64);
                    check.oracle_held_out_metrics.insert("accuracy".into(), oracle_right as f64 / n as f64);
                }
            }
            Ok(check)
        }
        TaskKind::SgdLogReg | TaskKind::AndPairwise => {
            let partitions: Vec<Vec<(Vec<f64>, f64)>> = fixtures
                .stations
                .iter()
                .map(|d| training_rows(task.kind, d))
                .collect::<Result<_, _>>()
                .map_err(|e| err(&e))?;
            let distributed = SgdState::from_payload(&archive.state.payload).map_err(|e| err(&e))?;
            let lr = task.hyperparameters.learning_rate.map(|r| r.get()).ok_or_else(|| failure("oracle", "no learning rate"))?;
            let epochs = task.hyperparameters.epochs.ok_or_else(|| failure("oracle", "no epoch count"))?;
            let (w, b) = sequential_sgd(&partitions, distributed.dimension(), lr, epochs);
            let mut ours = distributed.weights.clone();
            ours.push(distributed.bias);
            let mut theirs = w.clone();
            theirs.push(b);
            let err_max = max_relative_error(&ours, &theirs);
            let mut check = OracleCheck {
                oracle: "sequential_sgd".into(),
                equal: err_max <= SGD_ORACLE_TOLERANCE,
                max_relative_error: err_max,
                held_out_agreement: None,
                held_out_metrics: BTreeMap::new(),
                oracle_held_out_metrics: BTreeMap::new(),
            };
            if let Some(held) = &fixtures.held_out {
                let rows = training_rows(task.kind, held).map_err(|e| err(&e))?;
                let positive: Vec<bool> = rows.iter().map(|(_, y)| *y == 1.0).collect();
                let scores: Vec<f64> = rows
                    .iter()
                    .map(|(x, _)| sgd_predict(&distributed, x))
                    .collect::<Result<_, _>>()
                    .map_err(|e| err(&e))?;
                let oracle_scores: Vec<f64> = rows.iter().map(|(x, _)| logistic_probability(&w, b, x)).collect();
                if let Some(a) = auc(&scores, &positive) {
                    check.held_out_metrics.insert("auc".into(), a);
                }
                if let Some(a) = auc(&oracle_scores, &positive) {
                    check.oracle_held_out_metrics.insert("auc".into(), a);
                }
            }
            Ok(check)
        }
    }
}

fn judge(report: &ScenarioReport) -> Vec<String> {
    let mut failures = Vec::new();
    if report.ledger.verdict != "Ok" {
        failures.push(format!("ledger verification: {}", report.ledger.verdict));
    }
    if let Some(expected) = &report.ledger.expected_counts {
        if expected != &report.ledger.event_counts {
            failures.push("ledger event counts differ from the expected formula".into());
        }
    }
    if report.oracle_equal == Some(false) {
        failures.push("distributed result differs from the oracle".into());
    }
    for check in &report.release_checks {
        if check.results_available != (check.status == RouteStatus::Completed) {
            failures.push(format!("results available = {} with route {:?}", check.results_available, check.status));
        }
        if check.results_available && check.hops_completed < report.n_stations {
            failures.push(format!("results released after {} hops", check.hops_completed));
        }
    }
    if report.results_available != (report.final_status == RouteStatus::Completed) {
        failures.push("results availability does not match the final route status".into());
    }
    for gate in &report.approval_gates {
        if gate.pushed_before_decision {
            failures.push(format!("{} pushed before its admin decided", gate.station_id));
        }
    }
    if !report.canary.leaks.is_empty() {
        failures.push(format!("canary found in: {}", report.canary.leaks.join(", ")));
    }
    failures
}
