use std::path::Path;
use std::sync::Arc;
use std::time::Duration;

use padme_center::{router, AppState, CenterClient, CenterService, LoopbackTransport};
use padme_core::canonical::Timestamp;
use padme_core::crypto::{chain_verify, generate_keypair, open, ChainVerdict, KeyPair, KeyRole};
use padme_core::types::{
    AnalysisTask, ApprovalRecord, ExitControlPolicy, Hyperparameters, OutputKind, Party, StationDescriptor, TaskKind,
    Verdict,
};
use padme_core::{decode_train_archive, RouteStatus, TrainArchive};
use padme_station::{ApprovalDesk, DecisionRequest, StationAgent};
use padme_tasks::{generate_schema_sample, DatasetSchema, LocalDataset};

fn open_state(dir: &Path) -> AppState {
    AppState::new(CenterService::open(dir, Duration::from_secs(30)).unwrap())
}

fn client(state: &AppState, key: KeyPair) -> CenterClient {
    CenterClient::new(Arc::new(LoopbackTransport::new(router(state.clone()))), key)
}

fn sentiment(n: usize, seed: u64) -> Arc<LocalDataset> {
    let schema = DatasetSchema::sentiment();
    Arc::new(LocalDataset::new(schema.clone(), generate_schema_sample(&schema, n, seed).rows).unwrap())
}

fn nb_task(min_records: u64) -> AnalysisTask {
    AnalysisTask {
        task_id: "nb".into(),
        kind: TaskKind::NbSentiment,
        hyperparameters: Hyperparameters::naive_bayes(1.0, 7),
        required_schema_id: "sentiment-v1".into(),
        exit_policy: ExitControlPolicy {
            min_records,
            min_token_count: 2,
            allowed_outputs: [OutputKind::ModelParams, OutputKind::AggregateMetrics].into(),
        },
    }
}

fn fixed_clock() -> padme_station::Clock {
    Arc::new(|| Timestamp::from_unix(1_700_000_000))
}

struct World {
    researcher: CenterClient,
    agents: Vec<StationAgent>,
}

async fn world(state: &AppState, datasets: Vec<Arc<LocalDataset>>, auto_approve: bool) -> World {
    let researcher = client(state, generate_keypair(KeyRole::Researcher, Some(1000)));
    let mut agents = Vec::new();
    for (i, data) in datasets.into_iter().enumerate() {
        let key = generate_keypair(KeyRole::Station, Some(i as u64 + 1));
        let desk = ApprovalDesk::new(Arc::new(key.clone()), [], auto_approve);
        let agent = StationAgent::new(&format!("s{i}"), client(state, key), data, desk).with_clock(fixed_clock());
        agent.register("owner", "", &format!("S{i}")).await.unwrap();
        agents.push(agent);
    }
    World { researcher, agents }
}

impl World {
    async fn approved_train(&self, task: AnalysisTask) -> String {
        let route = self.agents.iter().map(|a| a.station_id().to_string()).collect();
        let submitted = self.researcher.submit_task(task, route).await.unwrap();
        let id = submitted.train_id;
        let digest = submitted.manifest.binding_digest().unwrap();
        let vote = ApprovalRecord::sign(&id, Party::Researcher, Verdict::Approve, &digest, self.researcher.key());
        self.researcher.approve(&id, &vote).await.unwrap();
        for (i, _) in self.agents.iter().enumerate() {
            let key = generate_keypair(KeyRole::Station, Some(i as u64 + 1));
            let vote = ApprovalRecord::sign(&id, Party::StationOwner(format!("s{i}")), Verdict::Approve, &digest, &key);
            self.researcher.approve(&id, &vote).await.unwrap();
        }
        self.researcher.dispatch(&id).await.unwrap();
        id
    }

    async fn final_archive(&self, id: &str) -> TrainArchive {
        let bundle = self.researcher.results(id).await.unwrap();
        let binding = bundle.manifest.binding_digest().unwrap();
        let bytes = open(&bundle.envelope, self.researcher.key(), &bundle.sender_public_key, binding.as_bytes()).unwrap();
        decode_train_archive(&bytes).unwrap()
    }
}

#[tokio::test]
async fn full_route_with_auto_approval() {
    let dir = tempfile::tempdir().unwrap();
    let state = open_state(dir.path());
    let mut w = world(&state, vec![sentiment(40, 1), sentiment(40, 2), sentiment(40, 3)], true).await;
    let id = w.approved_train(nb_task(100)).await;
    for (i, agent) in w.agents.iter_mut().enumerate() {
        let outcome = agent.poll_once().await.unwrap().expect("delivery");
        assert_eq!(outcome.hop_index, i as u32);
        assert_eq!(outcome.verdict, Verdict::Approve);
    }
    let status = w.researcher.status(&id).await.unwrap();
    assert_eq!(status.status, RouteStatus::Completed);
    let archive = w.final_archive(&id).await;
    let summary = archive.result_summary.expect("summary");
    assert_eq!(summary.total_records, 120);
    assert!(summary.exit_control_passed());
    assert!(summary.metrics.contains_key("accuracy"));
    let tokens = summary.released_params.unwrap().token_totals().into_values().collect::<Vec<_>>();
    assert!(!tokens.is_empty() && tokens.iter().all(|c| *c >= 2));
    let ledger = w.researcher.ledger(&id).await.unwrap();
    let center = w.researcher.center_public_key().await.unwrap();
    assert_eq!(chain_verify(&ledger, &center), ChainVerdict::Ok);
}

#[tokio::test(start_paused = true)]
async fn nothing_moves_without_a_decision() {
    let dir = tempfile::tempdir().unwrap();
    let state = open_state(dir.path());
    let mut w = world(&state, vec![sentiment(30, 1), sentiment(30, 2)], false).await;
    let id = w.approved_train(nb_task(10)).await;
    let second = w.agents.pop().unwrap();
    let first = w.agents.pop().unwrap();
    let desk = first.desk().clone();
    let poll = Duration::from_secs(1);
    let (stop_tx, stop_rx) = tokio::sync::oneshot::channel::<()>();
    let runner = tokio::spawn(first.run(poll, async {
        let _ = stop_rx.await;
    }));

    tokio::time::sleep(poll * 10).await;
    assert_eq!(w.researcher.status(&id).await.unwrap().status, RouteStatus::AwaitingApproval);
    assert_eq!(w.researcher.status(&id).await.unwrap().hops_completed.len(), 0);
    let pending = desk.pending();
    assert_eq!(pending.len(), 1);
    assert_eq!(pending[0].local_summary.record_count, 30);
    assert_ne!(pending[0].local_summary.state_digest_before, pending[0].local_summary.state_digest_after);

    desk.decide(&id, DecisionRequest::unsigned(Verdict::Approve, "looks fine")).unwrap();
    tokio::time::sleep(poll).await;
    let status = w.researcher.status(&id).await.unwrap();
    assert_eq!(status.hops_completed.len(), 1);
    assert_eq!(status.status, RouteStatus::InTransit);
    assert!(desk.pending().is_empty());

    // The second station rejects its hop; the train ends there.
    let desk2 = second.desk().clone();
    let runner2 = tokio::spawn(async move {
        let mut second = second;
        second.poll_once().await
    });
    tokio::time::sleep(poll).await;
    desk2.decide(&id, DecisionRequest::unsigned(Verdict::Reject, "not today")).unwrap();
    let outcome = runner2.await.unwrap().unwrap().unwrap();
    assert_eq!(outcome.verdict, Verdict::Reject);
    assert_eq!(outcome.status, RouteStatus::Rejected);
    assert!(w.researcher.results(&id).await.is_err());
    stop_tx.send(()).unwrap();
    runner.await.unwrap();
}

#[tokio::test]
async fn schema_mismatch_rejects_the_train() {
    let dir = tempfile::tempdir().unwrap();
    let state = open_state(dir.path());
    let researcher = client(&state, generate_keypair(KeyRole::Researcher, Some(1000)));
    // Registered as a sentiment station, but the data on disk is tabular.
    let key = generate_keypair(KeyRole::Station, Some(1));
    let c = client(&state, key.clone());
    let descriptor = StationDescriptor {
        station_id: "s0".into(),
        public_key_id: key.key_id(),
        endpoint: String::new(),
        schema_id: "sentiment-v1".into(),
        display_name: "S0".into(),
    };
    c.register_station(descriptor, "owner").await.unwrap();
    let schema = DatasetSchema::tabular();
    let data = Arc::new(LocalDataset::new(schema.clone(), generate_schema_sample(&schema, 20, 1).rows).unwrap());
    let desk = ApprovalDesk::new(Arc::new(key.clone()), [], true);
    let mut agent = StationAgent::new("s0", c, data, desk);
    let w = World {
        researcher,
        agents: Vec::new(),
    };
    let submitted = w.researcher.submit_task(nb_task(1), vec!["s0".into()]).await.unwrap();
    let id = submitted.train_id;
    let digest = submitted.manifest.binding_digest().unwrap();
    let vote = ApprovalRecord::sign(&id, Party::Researcher, Verdict::Approve, &digest, w.researcher.key());
    w.researcher.approve(&id, &vote).await.unwrap();
    let vote = ApprovalRecord::sign(&id, Party::StationOwner("s0".into()), Verdict::Approve, &digest, &key);
    w.researcher.approve(&id, &vote).await.unwrap();
    w.researcher.dispatch(&id).await.unwrap();

    let outcome = agent.poll_once().await.unwrap().unwrap();
    assert_eq!(outcome.verdict, Verdict::Reject);
    assert!(outcome.reason.contains("tabular-v1"), "{}", outcome.reason);
    assert_eq!(outcome.status, RouteStatus::Rejected);
}

#[tokio::test]
async fn failed_exit_control_blocks_release() {
    let dir = tempfile::tempdir().unwrap();
    let state = open_state(dir.path());
    let mut w = world(&state, vec![sentiment(10, 1), sentiment(10, 2)], true).await;
    let id = w.approved_train(nb_task(25)).await;
    w.agents[0].poll_once().await.unwrap().unwrap();
    let last = w.agents[1].poll_once().await.unwrap().unwrap();
    let ec = last.exit_control.expect("final hop runs exit control");
    assert!(!ec.passed);
    assert_eq!(ec.report[0].check, "min_records");
    assert!(!ec.report[0].passed);
    assert_eq!(last.status, RouteStatus::Blocked);
    let err = w.researcher.results(&id).await.unwrap_err();
    assert!(err.api_code().is_some());
}

#[tokio::test]
async fn same_inputs_give_the_same_model() {
    let mut finals = Vec::new();
    for _ in 0..2 {
        let dir = tempfile::tempdir().unwrap();
        let state = open_state(dir.path());
        let mut w = world(&state, vec![sentiment(25, 4), sentiment(25, 5)], true).await;
        let id = w.approved_train(nb_task(10)).await;
        for agent in w.agents.iter_mut() {
            agent.poll_once().await.unwrap().unwrap();
        }
        let archive = w.final_archive(&id).await;
        finals.push((archive.state.payload, archive.state.records_aggregated));
    }
    assert_eq!(finals[0], finals[1]);
}
