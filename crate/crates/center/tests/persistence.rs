mod common;

use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::Path;

use common::*;
use padme_center::{AppState, CenterClient};
use padme_core::crypto::{chain_verify, generate_keypair, open, KeyPair, KeyRole};
use padme_core::types::{ApprovalRecord, Party, Verdict};
use padme_core::{decode_train_archive, RouteStatus};

/// Every train in a freshly loaded center is structurally valid.
fn check_reloaded(dir: &Path) -> AppState {
    let state = open_state(dir);
    {
        let svc = state.lock();
        let center = svc.public_key().clone();
        let ids: Vec<String> = svc.train_ids().map(String::from).collect();
        for id in ids {
            let train = svc.train_record(&id).unwrap();
            train.manifest.route.validate().unwrap();
            for (i, entry) in train.ledger.iter().enumerate() {
                assert_eq!(entry.index, i as u64);
            }
            assert!(chain_verify(&train.ledger, &center).is_ok());
            if train.final_envelope.is_some() {
                assert_eq!(train.manifest.route.status(), RouteStatus::Completed);
            }
        }
    }
    state
}

struct Keys {
    researcher: KeyPair,
    stations: Vec<(String, KeyPair)>,
}

impl Keys {
    fn new() -> Self {
        Self {
            researcher: generate_keypair(KeyRole::Researcher, Some(1000)),
            stations: (0..2)
                .map(|i| (format!("s{i}"), generate_keypair(KeyRole::Station, Some(i + 1))))
                .collect(),
        }
    }
}

/// A client bound to a center that was just restarted from `dir`.
fn restarted(dir: &Path, key: &KeyPair) -> CenterClient {
    client(&check_reloaded(dir), key.clone())
}

#[tokio::test]
async fn restart_between_every_call() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let keys = Keys::new();
    for (id, key) in &keys.stations {
        restarted(d, key).register_station(descriptor(id, key, "sentiment-v1"), "o").await.unwrap();
    }
    let route: Vec<String> = keys.stations.iter().map(|(id, _)| id.clone()).collect();
    let sub = restarted(d, &keys.researcher).submit_task(nb_task(1), route).await.unwrap();
    let id = sub.train_id.clone();
    let digest = sub.manifest.binding_digest().unwrap();
    let vote = ApprovalRecord::sign(&id, Party::Researcher, Verdict::Approve, &digest, &keys.researcher);
    restarted(d, &keys.researcher).approve(&id, &vote).await.unwrap();
    for (sid, key) in &keys.stations {
        let vote = ApprovalRecord::sign(&id, Party::StationOwner(sid.clone()), Verdict::Approve, &digest, key);
        restarted(d, key).approve(&id, &vote).await.unwrap();
    }
    restarted(d, &keys.researcher).dispatch(&id).await.unwrap();
    let data = docs(&[("alpha beta", "pos"), ("gamma", "neg")]);
    for (sid, key) in &keys.stations {
        let delivery = restarted(d, key).poll(sid).await.unwrap().unwrap();
        let again = restarted(d, key).poll(sid).await.unwrap().unwrap();
        assert_eq!(again.envelope, delivery.envelope);
        let (report, envelope) = work_hop(&delivery, key, sid, &data);
        restarted(d, key).push_hop(&id, report, envelope).await.unwrap();
    }
    let c = restarted(d, &keys.researcher);
    c.results(&id).await.unwrap();
    assert_eq!(c.ledger(&id).await.unwrap().len(), 1 + 3 + 1 + 2 + 2 + 2 + 1 + 1);
}

fn append(path: &Path, bytes: &[u8]) {
    OpenOptions::new().append(true).open(path).unwrap().write_all(bytes).unwrap();
}

#[tokio::test]
async fn interrupted_writes_are_repaired_on_load() {
    let dir = tempfile::tempdir().unwrap();
    let w = world(dir.path(), 2).await;
    let id = w.approved_train(nb_task(1)).await;
    let trains = dir.path().join("trains");
    let ledger_path = trains.join(format!("{id}.ledger.jsonl"));
    let snapshot_path = trains.join(format!("{id}.jsonl"));
    let before = w.state.lock().train_record(&id).unwrap().ledger.len();
    drop(w);

    // Crash after the ledger append but before the snapshot, plus torn
    // tails in both files.
    let text = fs::read_to_string(&ledger_path).unwrap();
    let last_line = text.lines().last().unwrap().to_string();
    append(&ledger_path, format!("{last_line}\n{{\"index\":").as_bytes());
    append(&snapshot_path, b"{\"ledger_len\":99,\"tra");
    append(&dir.path().join("stations.jsonl"), b"{\"descr");

    let state = check_reloaded(dir.path());
    assert_eq!(state.lock().train_record(&id).unwrap().ledger.len(), before);
    assert_eq!(state.lock().train_record(&id).unwrap().manifest.route.status(), RouteStatus::Approved);

    let researcher = client(&state, generate_keypair(KeyRole::Researcher, Some(1000)));
    researcher.dispatch(&id).await.unwrap();
    drop(state);
    let state = check_reloaded(dir.path());
    assert_eq!(state.lock().train_record(&id).unwrap().ledger.len(), before + 1);
    assert_eq!(state.lock().train_record(&id).unwrap().manifest.route.status(), RouteStatus::InTransit);

    // A ledger shorter than its snapshot claims is corruption, not a crash.
    let text = fs::read_to_string(&ledger_path).unwrap();
    let truncated: String = text.lines().take(2).map(|l| format!("{l}\n")).collect();
    fs::write(&ledger_path, truncated).unwrap();
    assert!(padme_center::CenterService::open(dir.path(), std::time::Duration::from_secs(5)).is_err());
}

fn files_containing(dir: &Path, needle: &[u8]) -> Vec<String> {
    let mut hits = Vec::new();
    for entry in fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        if path.is_dir() {
            hits.extend(files_containing(&path, needle));
        } else if fs::read(&path).unwrap().windows(needle.len()).any(|w| w == needle) {
            hits.push(path.display().to_string());
        }
    }
    hits
}

#[tokio::test]
async fn center_never_persists_trained_state() {
    let dir = tempfile::tempdir().unwrap();
    let w = world(dir.path(), 2).await;
    let id = w.approved_train(nb_task(1)).await;
    w.researcher.dispatch(&id).await.unwrap();
    let marker = "qqrelaymarkerqq";
    let data = docs(&[(&format!("{marker} text"), "pos"), ("other", "neg")]);
    for (sid, c) in &w.stations {
        let delivery = c.poll(sid).await.unwrap().unwrap();
        let (report, envelope) = work_hop(&delivery, c.key(), sid, &data);
        c.push_hop(&id, report, envelope).await.unwrap();
    }
    let bundle = w.researcher.results(&id).await.unwrap();
    let digest = bundle.manifest.binding_digest().unwrap();
    let plain = open(&bundle.envelope, w.researcher.key(), &bundle.sender_public_key, digest.as_bytes()).unwrap();
    let archive = decode_train_archive(&plain).unwrap();
    let released = archive.result_summary.unwrap().released_params.unwrap();
    assert!(released.token_totals().contains_key(marker), "the marker did reach the model");
    assert!(plain.windows(marker.len()).any(|w| w == marker.as_bytes()));

    assert_eq!(files_containing(dir.path(), marker.as_bytes()), Vec::<String>::new());
}
