#![allow(dead_code)]

use std::path::Path;
use std::sync::Arc;
use std::time::Duration;

use padme_center::{router, AppState, CenterClient, CenterService, Delivery, LoopbackTransport};
use padme_core::canonical::{Real, Timestamp};
use padme_core::crypto::{generate_keypair, open, seal, EncryptedEnvelope, KeyPair, KeyRole};
use padme_core::types::{
    AnalysisTask, ApprovalRecord, CheckOutcome, ExitControlOutcome, ExitControlPolicy, HopReport, Hyperparameters,
    OutputKind, Party, ResultSummary, StationDescriptor, TaskKind, Verdict,
};
use padme_core::{decode_train_archive, encode_train_archive};
use padme_tasks::runner::{apply_update, release};
use padme_tasks::{DatasetSchema, LocalDataset};
use serde_json::json;

pub struct World {
    pub state: AppState,
    pub researcher: CenterClient,
    pub stations: Vec<(String, CenterClient)>,
}

pub fn open_state(dir: &Path) -> AppState {
    AppState::new(CenterService::open(dir, Duration::from_secs(30)).unwrap())
}

pub fn client(state: &AppState, key: KeyPair) -> CenterClient {
    CenterClient::new(Arc::new(LoopbackTransport::new(router(state.clone()))), key)
}

pub fn descriptor(id: &str, key: &KeyPair, schema: &str) -> StationDescriptor {
    StationDescriptor {
        station_id: id.into(),
        public_key_id: key.key_id(),
        endpoint: format!("http://127.0.0.1/{id}"),
        schema_id: schema.into(),
        display_name: id.to_uppercase(),
    }
}

pub async fn world(dir: &Path, n: usize) -> World {
    let state = open_state(dir);
    let researcher = client(&state, generate_keypair(KeyRole::Researcher, Some(1000)));
    let mut stations = Vec::new();
    for i in 0..n {
        let id = format!("s{i}");
        let c = client(&state, generate_keypair(KeyRole::Station, Some(i as u64 + 1)));
        c.register_station(descriptor(&id, c.key(), "sentiment-v1"), "owner").await.unwrap();
        stations.push((id, c));
    }
    World {
        state,
        researcher,
        stations,
    }
}

pub fn nb_task(min_records: u64) -> AnalysisTask {
    AnalysisTask {
        task_id: "nb".into(),
        kind: TaskKind::NbSentiment,
        hyperparameters: Hyperparameters::naive_bayes(1.0, 7),
        required_schema_id: "sentiment-v1".into(),
        exit_policy: ExitControlPolicy {
            min_records,
            min_token_count: 1,
            allowed_outputs: [OutputKind::ModelParams, OutputKind::AggregateMetrics].into(),
        },
    }
}

impl World {
    pub fn route(&self) -> Vec<String> {
        self.stations.iter().map(|(id, _)| id.clone()).collect()
    }

    /// Submit and collect unanimous approval.
    pub async fn approved_train(&self, task: AnalysisTask) -> String {
        let submitted = self.researcher.submit_task(task, self.route()).await.unwrap();
        let id = submitted.train_id.clone();
        let digest = submitted.manifest.binding_digest().unwrap();
        let vote = ApprovalRecord::sign(&id, Party::Researcher, Verdict::Approve, &digest, self.researcher.key());
        self.researcher.approve(&id, &vote).await.unwrap();
        for (sid, c) in &self.stations {
            let vote = ApprovalRecord::sign(&id, Party::StationOwner(sid.clone()), Verdict::Approve, &digest, c.key());
            c.approve(&id, &vote).await.unwrap();
        }
        id
    }
}

pub fn docs(texts: &[(&str, &str)]) -> LocalDataset {
    let rows = texts
        .iter()
        .map(|(t, l)| json!({"text": t, "label": l}).as_object().unwrap().clone())
        .collect();
    LocalDataset::new(DatasetSchema::sentiment(), rows).unwrap()
}

/// Runs one hop the way a station would, against `docs`, and returns the
/// sealed output and signed report.
pub fn work_hop(
    delivery: &Delivery,
    key: &KeyPair,
    station_id: &str,
    data: &LocalDataset,
) -> (HopReport, Option<EncryptedEnvelope>) {
    let digest = delivery.manifest.binding_digest().unwrap();
    let bytes = open(&delivery.envelope, key, &delivery.sender_public_key, digest.as_bytes()).unwrap();
    let mut archive = decode_train_archive(&bytes).unwrap();
    let before = archive.state.digest();
    let task = &delivery.manifest.task;
    let update = apply_update(task, &archive.state.payload, data).unwrap();
    archive.state.payload = update.payload;
    archive
        .state
        .record_hop(station_id, update.record_count, Timestamp::from_unix(1_700_000_000));
    archive.manifest.route = archive.manifest.route.advance().unwrap();
    let last = delivery.hop_index as usize + 1 == delivery.manifest.route.len();
    let mut exit_control = None;
    if last {
        let r = release(task.kind, &archive.state.payload, task.exit_policy.min_token_count).unwrap();
        let passed = archive.state.records_aggregated >= task.exit_policy.min_records;
        let report = vec![CheckOutcome {
            check: "min_records".into(),
            passed,
            detail: String::new(),
        }];
        archive.result_summary = Some(ResultSummary {
            task_kind: task.kind,
            metrics: [("accuracy".to_string(), Real::from(1.0))].into(),
            released_params: Some(r.params),
            total_records: archive.state.records_aggregated,
            exit_control_report: report.clone(),
        });
        exit_control = Some(ExitControlOutcome { passed, report });
    }
    let blocked = exit_control.as_ref().is_some_and(|e| !e.passed);
    let envelope = (!blocked).then(|| {
        let out = encode_train_archive(&archive).unwrap();
        seal(&out, &delivery.next_recipient_public_key, key, digest.as_bytes()).unwrap()
    });
    let mut report = HopReport {
        train_id: delivery.train_id.clone(),
        station_id: station_id.into(),
        hop_index: delivery.hop_index,
        record_count: update.record_count,
        verdict: Verdict::Approve,
        reason: String::new(),
        exit_control,
        state_digest_before: before,
        state_digest_after: archive.state.digest(),
        envelope_digest: envelope.as_ref().map(|e| e.digest()),
        signature: Vec::new(),
    };
    report.sign(key);
    (report, envelope)
}
