//! Center state machine: registry, approvals, dispatch, relay, result gate
//! and audit ledger. All mutations commit to the [`Store`] before they
//! become visible in memory.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::time::Duration;

use padme_core::canonical::Timestamp;
use padme_core::crypto::{
    chain_append, seal, AuditEntry, AuditEvent, Digest, EncryptedEnvelope, KeyId, KeyPair, PublicKey,
};
use padme_core::types::{
    AnalysisTask, ApprovalRecord, HopReport, ModelState, Party, StationDescriptor, TrainManifest, Verdict,
};
use padme_core::{encode_train_archive, Route, RouteStatus, TrainArchive};
use padme_tasks::runner::initial_payload;
use padme_tasks::DatasetSchema;
use serde::{Deserialize, Serialize};
use tracing::info;

use crate::auth::{ChallengeStore, Credential};
use crate::error::CenterError;
use crate::store::{HopProgress, RegistryRecord, Store, TrainRecord};

/// A signed request as seen by the service.
#[derive(Debug, Clone)]
pub struct SignedRequest<'a> {
    pub credential: Credential,
    pub method: &'a str,
    pub path: &'a str,
    pub body: &'a [u8],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Delivery {
    pub train_id: String,
    pub hop_index: u32,
    pub manifest: TrainManifest,
    #[serde(with = "crate::api::envelope_b64")]
    pub envelope: EncryptedEnvelope,
    /// Key that sealed `envelope`: the center for the first hop, otherwise
    /// the previous station.
    pub sender_public_key: PublicKey,
    /// Key the station must seal its output to: the next station, or the
    /// researcher after the last hop.
    pub next_recipient_public_key: PublicKey,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultsBundle {
    pub train_id: String,
    pub manifest: TrainManifest,
    #[serde(with = "crate::api::envelope_b64")]
    pub envelope: EncryptedEnvelope,
    pub sender_public_key: PublicKey,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VoteView {
    pub party: Party,
    pub verdict: Verdict,
}

/// Route progress as shown to parties. Carries no model parameters and no
/// per-station record counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatusView {
    pub train_id: String,
    pub task_id: String,
    pub status: RouteStatus,
    pub cursor: usize,
    pub stations: Vec<String>,
    pub hops_completed: Vec<HopProgress>,
    pub votes: Vec<VoteView>,
    pub pending_approvals: Vec<Party>,
    pub created_at: Timestamp,
    /// The signed manifest, so owners can review and vote on it.
    pub manifest: TrainManifest,
}

#[derive(Debug)]
pub struct CenterService {
    key: KeyPair,
    store: Store,
    stations: BTreeMap<String, RegistryRecord>,
    trains: BTreeMap<String, TrainRecord>,
    challenges: ChallengeStore,
}

impl CenterService {
    pub fn open(data_dir: &Path, challenge_ttl: Duration) -> Result<Self, CenterError> {
        let (store, key, loaded) = Store::open(data_dir)?;
        info!(
            stations = loaded.stations.len(),
            trains = loaded.trains.len(),
            key_id = %key.key_id(),
            "center state loaded"
        );
        Ok(Self {
            key,
            store,
            stations: loaded.stations,
            trains: loaded.trains,
            challenges: ChallengeStore::new(challenge_ttl),
        })
    }

    pub fn public_key(&self) -> &PublicKey {
        self.key.public()
    }

    pub fn issue_challenge(&mut self) -> String {
        self.challenges.issue()
    }

    pub fn challenge_ttl(&self) -> Duration {
        self.challenges.ttl()
    }

    pub fn train_ids(&self) -> impl Iterator<Item = &str> {
        self.trains.keys().map(String::as_str)
    }

    pub fn station(&self, station_id: &str) -> Option<&RegistryRecord> {
        self.stations.get(station_id)
    }

    /// Consumes the request nonce and checks its signature against `key`.
    fn authenticate(&mut self, req: &SignedRequest<'_>, key: &PublicKey) -> Result<(), CenterError> {
        self.challenges.consume(&req.credential.nonce)?;
        if !req.credential.verify(key, req.method, req.path, req.body) {
            return Err(CenterError::AuthFailed("request signature does not verify".into()));
        }
        Ok(())
    }

    fn train(&self, train_id: &str) -> Result<&TrainRecord, CenterError> {
        self.trains
            .get(train_id)
            .ok_or_else(|| CenterError::UnknownTrain(train_id.to_string()))
    }

    fn station_key(&self, station_id: &str) -> Result<&PublicKey, CenterError> {
        self.stations
            .get(station_id)
            .map(|r| &r.public_key)
            .ok_or_else(|| CenterError::UnknownStation(station_id.to_string()))
    }

    /// Persists a modified copy of a train, appending ledger events, and
    /// then installs it.
    fn commit(
        &mut self,
        mut train: TrainRecord,
        events: &[(AuditEvent, KeyId, Digest)],
    ) -> Result<&TrainRecord, CenterError> {
        let start = train.ledger.len();
        for (event, actor, digest) in events {
            let entry = chain_append(&train.ledger, *event, *actor, *digest, &self.key);
            train.ledger.push(entry);
        }
        self.store.commit_train(&train, &train.ledger[start..])?;
        let id = train.manifest.train_id.clone();
        self.trains.insert(id.clone(), train);
        Ok(&self.trains[&id])
    }

    pub fn register_station(
        &mut self,
        req: &SignedRequest<'_>,
        descriptor: StationDescriptor,
        public_key: PublicKey,
        owner_id: String,
    ) -> Result<String, CenterError> {
        if public_key.key_id() != descriptor.public_key_id {
            return Err(CenterError::BadCredential("key fingerprint does not match the supplied key".into()));
        }
        // Registration is signed by the station key itself.
        self.authenticate(req, &public_key)
            .map_err(|e| CenterError::BadCredential(e.to_string()))?;
        if descriptor.station_id.is_empty() || owner_id.is_empty() {
            return Err(CenterError::Invalid("station_id and owner_id must be non-empty".into()));
        }
        if self.stations.contains_key(&descriptor.station_id) {
            return Err(CenterError::DuplicateStation(descriptor.station_id));
        }
        if self.stations.values().any(|r| r.public_key.key_id() == descriptor.public_key_id) {
            return Err(CenterError::BadCredential("key is already registered to another station".into()));
        }
        let record = RegistryRecord {
            descriptor,
            public_key,
            owner_id,
            registered_at: Timestamp::now(),
        };
        self.store.append_station(&record)?;
        let id = record.descriptor.station_id.clone();
        info!(station = %id, schema = %record.descriptor.schema_id, "station registered");
        self.stations.insert(id.clone(), record);
        Ok(id)
    }

    pub fn submit_task(
        &mut self,
        req: &SignedRequest<'_>,
        task: AnalysisTask,
        route: Vec<String>,
        researcher_key: PublicKey,
    ) -> Result<TrainManifest, CenterError> {
        self.authenticate(req, &researcher_key)?;
        task.validate()?;
        if DatasetSchema::builtin(&task.required_schema_id).is_none() {
            return Err(CenterError::Invalid(format!("unknown schema `{}`", task.required_schema_id)));
        }
        let route = Route::new(route)?;
        let mut station_key_ids = BTreeMap::new();
        for station in route.stations() {
            let record = self
                .stations
                .get(station)
                .ok_or_else(|| CenterError::UnknownStation(station.clone()))?;
            if record.descriptor.schema_id != task.required_schema_id {
                return Err(CenterError::SchemaMismatch {
                    station: station.clone(),
                    required: task.required_schema_id.clone(),
                    found: record.descriptor.schema_id.clone(),
                });
            }
            station_key_ids.insert(station.clone(), record.public_key.key_id());
        }
        if station_key_ids.values().any(|k| *k == researcher_key.key_id()) {
            return Err(CenterError::Invalid("researcher key must differ from station keys".into()));
        }
        let mut manifest = TrainManifest {
            train_id: uuid::Uuid::new_v4().to_string(),
            task,
            route,
            researcher_key_id: researcher_key.key_id(),
            station_key_ids,
            created_at: Timestamp::now(),
            approvals: Vec::new(),
            manifest_signature: Vec::new(),
        };
        manifest.sign(&self.key)?;
        let digest = manifest.binding_digest()?;
        let train = TrainRecord {
            manifest,
            researcher_key: researcher_key.clone(),
            current_envelope: None,
            final_envelope: None,
            hops: Vec::new(),
            records_aggregated: 0,
            ledger: Vec::new(),
        };
        let train = self.commit(train, &[(AuditEvent::TaskSubmitted, researcher_key.key_id(), digest)])?;
        info!(train = %train.manifest.train_id, hops = train.manifest.route.len(), "task submitted");
        Ok(train.manifest.clone())
    }

    /// Records one party's vote. Unanimous approval moves the route to
    /// `Approved`; any rejection ends it.
    pub fn approve_task(&mut self, train_id: &str, record: ApprovalRecord) -> Result<RouteStatus, CenterError> {
        let train = self.train(train_id)?;
        let manifest = &train.manifest;
        let key = match &record.party {
            Party::Researcher if record.approver_key_id == manifest.researcher_key_id => &train.researcher_key,
            Party::StationOwner(s) if manifest.station_key_ids.get(s) == Some(&record.approver_key_id) => {
                self.station_key(s)?
            }
            _ => return Err(CenterError::NotAParty),
        };
        if manifest.approvals.iter().any(|a| a.party == record.party) {
            return Err(CenterError::AlreadyDecided);
        }
        if manifest.route.status() != RouteStatus::Pending {
            return Err(CenterError::IllegalTransition(format!(
                "votes are closed ({:?})",
                manifest.route.status()
            )));
        }
        let digest = manifest.binding_digest()?;
        if !record.verify(train_id, &digest, key) {
            return Err(CenterError::BadSignature);
        }

        let mut next = train.clone();
        let actor = record.approver_key_id;
        let verdict = record.verdict;
        next.manifest.approvals.push(record);
        let event = match verdict {
            Verdict::Approve => {
                if next.manifest.approvals_complete() {
                    next.manifest.route = next.manifest.route.approve()?;
                }
                AuditEvent::Approved
            }
            Verdict::Reject => {
                next.manifest.route = next.manifest.route.reject()?;
                AuditEvent::AdminDecision
            }
        };
        next.manifest.sign(&self.key)?;
        let status = self.commit(next, &[(event, actor, digest)])?.manifest.route.status();
        info!(train = %train_id, ?verdict, ?status, "vote recorded");
        Ok(status)
    }

    /// Seals the initial model state to the first station.
    pub fn dispatch(&mut self, req: &SignedRequest<'_>, train_id: &str) -> Result<RouteStatus, CenterError> {
        let researcher = self.train(train_id)?.researcher_key.clone();
        self.authenticate(req, &researcher)?;
        let train = self.train(train_id)?;
        let route = train.manifest.route.dispatch()?;
        let task = &train.manifest.task;
        let schema = DatasetSchema::builtin(&task.required_schema_id)
            .ok_or_else(|| CenterError::Invalid(format!("unknown schema `{}`", task.required_schema_id)))?;
        let payload = initial_payload(task, &schema).map_err(|e| CenterError::Invalid(e.to_string()))?;
        let mut manifest = train.manifest.clone();
        manifest.route = route.clone();
        let archive = TrainArchive {
            manifest,
            state: ModelState::initial(task.kind, payload),
            result_summary: None,
        };
        let bytes = encode_train_archive(&archive)?;
        let first = self.station_key(&route.stations()[0])?;
        let digest = train.manifest.binding_digest()?;
        let envelope = seal(&bytes, first, &self.key, digest.as_bytes())
            .map_err(|e| CenterError::Invalid(e.to_string()))?;

        let mut next = train.clone();
        next.manifest.route = route;
        let envelope_digest = envelope.digest();
        next.current_envelope = Some(envelope);
        let center = self.key.key_id();
        let status = self
            .commit(next, &[(AuditEvent::Dispatched, center, envelope_digest)])?
            .manifest
            .route
            .status();
        info!(train = %train_id, "train dispatched");
        Ok(status)
    }

    fn sender_and_next(&self, train: &TrainRecord) -> Result<(PublicKey, PublicKey), CenterError> {
        let route = &train.manifest.route;
        let cursor = route.cursor();
        let sender = if cursor == 0 {
            self.key.public().clone()
        } else {
            self.station_key(&route.stations()[cursor - 1])?.clone()
        };
        let next = match route.next_station() {
            Some(s) => self.station_key(s)?.clone(),
            None => train.researcher_key.clone(),
        };
        Ok((sender, next))
    }

    /// The envelope waiting for `station_id`, if any. The first delivery of
    /// a hop is logged; repeats before the push return the same envelope.
    pub fn poll_next(&mut self, req: &SignedRequest<'_>, station_id: &str) -> Result<Option<Delivery>, CenterError> {
        let key = self
            .station_key(station_id)
            .map_err(|_| CenterError::AuthFailed("unknown station".into()))?
            .clone();
        self.authenticate(req, &key)?;
        let mut waiting: Vec<&TrainRecord> = self
            .trains
            .values()
            .filter(|t| {
                matches!(t.manifest.route.status(), RouteStatus::InTransit | RouteStatus::AwaitingApproval)
                    && t.manifest.route.current_station() == Some(station_id)
            })
            .collect();
        waiting.sort_by(|a, b| {
            (a.manifest.created_at, &a.manifest.train_id).cmp(&(b.manifest.created_at, &b.manifest.train_id))
        });
        let Some(train) = waiting.first() else { return Ok(None) };
        let envelope = train
            .current_envelope
            .clone()
            .ok_or_else(|| CenterError::Storage("in-transit train has no envelope".into()))?;
        let (sender_public_key, next_recipient_public_key) = self.sender_and_next(train)?;
        let train_id = train.manifest.train_id.clone();
        let train = if train.manifest.route.status() == RouteStatus::InTransit {
            let mut next = (*train).clone();
            next.manifest.route = next.manifest.route.hold()?;
            let digest = envelope.digest();
            info!(train = %train_id, station = %station_id, "hop fetched");
            self.commit(next, &[(AuditEvent::HopFetched, key.key_id(), digest)])?
        } else {
            self.train(&train_id)?
        };
        Ok(Some(Delivery {
            train_id,
            hop_index: train.manifest.route.cursor() as u32,
            manifest: train.manifest.clone(),
            envelope,
            sender_public_key,
            next_recipient_public_key,
        }))
    }

    pub fn push_hop(
        &mut self,
        req: &SignedRequest<'_>,
        train_id: &str,
        report: HopReport,
        envelope: Option<EncryptedEnvelope>,
    ) -> Result<RouteStatus, CenterError> {
        let train = self.train(train_id)?;
        let route = &train.manifest.route;
        let Some(current) = route.current_station().map(String::from) else {
            return Err(CenterError::IllegalTransition(format!("route is {:?}", route.status())));
        };
        let caller = self
            .stations
            .values()
            .find(|r| r.public_key.key_id() == req.credential.key_id)
            .map(|r| (r.descriptor.station_id.clone(), r.public_key.clone()))
            .ok_or_else(|| CenterError::AuthFailed("unknown key".into()))?;
        self.authenticate(req, &caller.1)?;
        let train = self.train(train_id)?;
        let route = &train.manifest.route;
        if caller.0 != current {
            return Err(CenterError::WrongStation(caller.0));
        }
        if route.status() != RouteStatus::AwaitingApproval {
            return Err(CenterError::IllegalTransition(format!(
                "push requires a fetched hop, route is {:?}",
                route.status()
            )));
        }
        let station_key = caller.1;
        if !report.verify(&station_key) {
            return Err(CenterError::BadSignature);
        }
        if report.train_id != train_id || report.station_id != current || report.hop_index as usize != route.cursor()
        {
            return Err(CenterError::Invalid("hop report does not describe the current hop".into()));
        }
        let actor = station_key.key_id();
        let report_digest = report.digest();
        let mut next = train.clone();
        let mut events = Vec::new();

        match report.verdict {
            Verdict::Reject => {
                if envelope.is_some() {
                    return Err(CenterError::Invalid("a rejected hop carries no envelope".into()));
                }
                next.manifest.route = route.reject()?;
                next.current_envelope = None;
                events.push((AuditEvent::AdminDecision, actor, report_digest));
            }
            Verdict::Approve if route.is_last_hop() && !report.exit_control_passed() => {
                // Results that fail exit control never leave the station.
                if envelope.is_some() || report.envelope_digest.is_some() {
                    return Err(CenterError::Invalid("a hop failing exit control carries no envelope".into()));
                }
                next.hops.push(HopProgress {
                    station_id: current.clone(),
                    at: Timestamp::now(),
                });
                next.records_aggregated += report.record_count;
                next.current_envelope = None;
                next.manifest.route = route.block()?;
                events.push((AuditEvent::HopPushed, actor, report_digest));
                events.push((AuditEvent::AdminDecision, actor, report_digest));
                events.push((AuditEvent::ExitControl, actor, report_digest));
                events.push((AuditEvent::Blocked, self.key.key_id(), report_digest));
            }
            Verdict::Approve => {
                let envelope = envelope.ok_or_else(|| CenterError::Invalid("approved hop needs an envelope".into()))?;
                let (_, expected) = self.sender_and_next(train)?;
                if envelope.recipient_key_id != expected.key_id() {
                    return Err(CenterError::RecipientMismatch);
                }
                if !envelope.verify_sender(&station_key) {
                    return Err(CenterError::BadSignature);
                }
                let envelope_digest = envelope.digest();
                if report.envelope_digest != Some(envelope_digest) {
                    return Err(CenterError::Invalid("hop report names a different envelope".into()));
                }
                events.push((AuditEvent::HopPushed, actor, envelope_digest));
                events.push((AuditEvent::AdminDecision, actor, report_digest));
                next.hops.push(HopProgress {
                    station_id: current.clone(),
                    at: Timestamp::now(),
                });
                next.records_aggregated += report.record_count;
                next.current_envelope = None;
                next.manifest.route = route.release()?.advance()?;
                if route.is_last_hop() {
                    events.push((AuditEvent::ExitControl, actor, report_digest));
                    events.push((AuditEvent::Released, self.key.key_id(), envelope_digest));
                    next.final_envelope = Some(envelope);
                } else {
                    next.current_envelope = Some(envelope);
                }
            }
        }
        let status = self.commit(next, &events)?.manifest.route.status();
        info!(train = %train_id, station = %current, ?status, "hop pushed");
        Ok(status)
    }

    /// The researcher's sealed results; only once every station was visited.
    pub fn fetch_results(&mut self, req: &SignedRequest<'_>, train_id: &str) -> Result<ResultsBundle, CenterError> {
        let researcher = self.train(train_id)?.researcher_key.clone();
        self.authenticate(req, &researcher)?;
        let train = self.train(train_id)?;
        match train.manifest.route.status() {
            RouteStatus::Completed => {}
            RouteStatus::Blocked => return Err(CenterError::BlockedByExitControl),
            RouteStatus::Rejected => return Err(CenterError::TrainRejected),
            _ => return Err(CenterError::NotReady),
        }
        let visited: BTreeSet<&str> = train.hops.iter().map(|h| h.station_id.as_str()).collect();
        let envelope = match &train.final_envelope {
            Some(env) if train.manifest.route.stations().iter().all(|s| visited.contains(s.as_str())) => env.clone(),
            _ => return Err(CenterError::NotReady),
        };
        let last = train.manifest.route.stations().last().expect("route is non-empty");
        Ok(ResultsBundle {
            train_id: train_id.to_string(),
            manifest: train.manifest.clone(),
            envelope,
            sender_public_key: self.station_key(last)?.clone(),
        })
    }

    fn authenticate_party(&mut self, req: &SignedRequest<'_>, train_id: &str) -> Result<(), CenterError> {
        let train = self.train(train_id)?;
        let key = if req.credential.key_id == train.manifest.researcher_key_id {
            train.researcher_key.clone()
        } else {
            let station = train
                .manifest
                .station_key_ids
                .iter()
                .find(|(_, k)| **k == req.credential.key_id)
                .map(|(s, _)| s.clone())
                .ok_or_else(|| CenterError::AuthFailed("requester is not a party to this train".into()))?;
            self.station_key(&station)?.clone()
        };
        self.authenticate(req, &key)
    }

    pub fn route_status(&mut self, req: &SignedRequest<'_>, train_id: &str) -> Result<StatusView, CenterError> {
        self.authenticate_party(req, train_id)?;
        let train = self.train(train_id)?;
        let m = &train.manifest;
        let decided: BTreeSet<&Party> = m.approvals.iter().map(|a| &a.party).collect();
        let pending_approvals = if m.route.status() == RouteStatus::Pending {
            std::iter::once(Party::Researcher)
                .chain(m.route.stations().iter().map(|s| Party::StationOwner(s.clone())))
                .filter(|p| !decided.contains(p))
                .collect()
        } else {
            Vec::new()
        };
        Ok(StatusView {
            train_id: m.train_id.clone(),
            task_id: m.task.task_id.clone(),
            status: m.route.status(),
            cursor: m.route.cursor(),
            stations: m.route.stations().to_vec(),
            hops_completed: train.hops.clone(),
            votes: m
                .approvals
                .iter()
                .map(|a| VoteView {
                    party: a.party.clone(),
                    verdict: a.verdict,
                })
                .collect(),
            pending_approvals,
            created_at: m.created_at,
            manifest: m.clone(),
        })
    }

    pub fn ledger(&mut self, req: &SignedRequest<'_>, train_id: &str) -> Result<Vec<AuditEntry>, CenterError> {
        self.authenticate_party(req, train_id)?;
        Ok(self.train(train_id)?.ledger.clone())
    }

    /// Unauthenticated read of a train record, for in-process inspection.
    pub fn train_record(&self, train_id: &str) -> Option<&TrainRecord> {
        self.trains.get(train_id)
    }
}
