//! The station agent: poll, verify, open, train, wait for approval, run
//! exit control on the last hop, seal to the next recipient and push.

use std::collections::BTreeMap;
use std::future::Future;
use std::sync::Arc;
use std::time::Duration;

use padme_center::{CenterClient, Delivery};
use padme_core::canonical::{Real, Timestamp};
use padme_core::crypto::{open, seal, Digest, KeyPair, PublicKey};
use padme_core::types::{ExitControlOutcome, HopReport, ResultSummary, StationDescriptor, Verdict};
use padme_core::{decode_train_archive, encode_train_archive, RouteStatus, TrainArchive};
use padme_tasks::runner::{evaluate, release};
use padme_tasks::LocalDataset;
use tracing::{info, warn};

use crate::approval::{ApprovalDesk, LocalSummary, PendingApproval};
use crate::error::StationError;
use crate::executor::execute_task;
use crate::exit_control::exit_control_check;

pub type Clock = Arc<dyn Fn() -> Timestamp + Send + Sync>;

/// What happened to one delivery.
#[derive(Debug, Clone, PartialEq)]
pub struct HopOutcome {
    pub train_id: String,
    pub hop_index: u32,
    pub verdict: Verdict,
    pub reason: String,
    pub exit_control: Option<ExitControlOutcome>,
    pub status: RouteStatus,
}

pub struct StationAgent {
    station_id: String,
    client: CenterClient,
    dataset: Arc<LocalDataset>,
    desk: ApprovalDesk,
    clock: Clock,
    center_key: Option<PublicKey>,
}

/// A trained hop that is ready to be sealed once approved.
struct Prepared {
    archive: TrainArchive,
    record_count: u64,
    digest_before: Digest,
    metrics_before: BTreeMap<String, f64>,
    exit_control: Option<ExitControlOutcome>,
}

impl StationAgent {
    pub fn new(station_id: &str, client: CenterClient, dataset: Arc<LocalDataset>, desk: ApprovalDesk) -> Self {
        Self {
            station_id: station_id.to_string(),
            client,
            dataset,
            desk,
            clock: Arc::new(Timestamp::now),
            center_key: None,
        }
    }

    pub fn with_clock(mut self, clock: Clock) -> Self {
        self.clock = clock;
        self
    }

    pub fn station_id(&self) -> &str {
        &self.station_id
    }

    pub fn desk(&self) -> &ApprovalDesk {
        &self.desk
    }

    fn key(&self) -> &KeyPair {
        self.client.key()
    }

    pub fn descriptor(&self, endpoint: &str, display_name: &str) -> StationDescriptor {
        StationDescriptor {
            station_id: self.station_id.clone(),
            public_key_id: self.key().key_id(),
            endpoint: endpoint.to_string(),
            schema_id: self.dataset.schema_id().to_string(),
            display_name: display_name.to_string(),
        }
    }

    /// Registers with the center; an existing registration of this station
    /// is accepted as is.
    pub async fn register(&self, owner_id: &str, endpoint: &str, display_name: &str) -> Result<(), StationError> {
        match self.client.register_station(self.descriptor(endpoint, display_name), owner_id).await {
            Ok(_) => Ok(()),
            Err(e) if e.api_code() == Some("DuplicateStation") => Ok(()),
            Err(e) => Err(e.into()),
        }
    }

    async fn center_key(&mut self) -> Result<PublicKey, StationError> {
        if let Some(key) = &self.center_key {
            return Ok(key.clone());
        }
        let key = self.client.center_public_key().await?;
        self.center_key = Some(key.clone());
        Ok(key)
    }

    /// Polls once and processes the delivery, if any.
    pub async fn poll_once(&mut self) -> Result<Option<HopOutcome>, StationError> {
        let center_key = self.center_key().await?;
        match self.client.poll(&self.station_id).await? {
            Some(delivery) => self.process(&delivery, &center_key).await.map(Some),
            None => Ok(None),
        }
    }

    /// Handles one delivery end to end. Local failures end the train with a
    /// signed rejection instead of leaving it parked.
    pub async fn process(&self, delivery: &Delivery, center_key: &PublicKey) -> Result<HopOutcome, StationError> {
        let prepared = match self.prepare(delivery, center_key) {
            Ok(p) => p,
            Err(e) => {
                warn!(train = %delivery.train_id, error = %e, "hop failed locally");
                return self
                    .push(delivery, Verdict::Reject, &e.to_string(), None, Digest::ZERO, Digest::ZERO, 0, None)
                    .await;
            }
        };
        let digest_after = prepared.archive.state.digest();
        let pending = PendingApproval {
            train_id: delivery.train_id.clone(),
            hop_index: delivery.hop_index,
            local_summary: self.local_summary(delivery, &prepared)?,
            created_at: (self.clock)(),
        };
        info!(train = %delivery.train_id, hop = delivery.hop_index, "awaiting admin approval");
        let decision = self.desk.submit(pending).await.map_err(|_| StationError::ChannelClosed)?;
        let digests = (prepared.digest_before, digest_after);
        if decision.verdict == Verdict::Reject {
            return self
                .push(delivery, Verdict::Reject, &decision.reason, None, digests.0, digests.1, prepared.record_count, None)
                .await;
        }
        let blocked = prepared.exit_control.as_ref().is_some_and(|e| !e.passed);
        let envelope = if blocked {
            None
        } else {
            let bytes = encode_train_archive(&prepared.archive)?;
            let binding = delivery.manifest.binding_digest()?;
            Some(seal(&bytes, &delivery.next_recipient_public_key, self.key(), binding.as_bytes())?)
        };
        self.push(
            delivery,
            Verdict::Approve,
            &decision.reason,
            envelope,
            digests.0,
            digests.1,
            prepared.record_count,
            prepared.exit_control,
        )
        .await
    }

    fn check_delivery(&self, delivery: &Delivery, center_key: &PublicKey) -> Result<(), StationError> {
        let manifest = &delivery.manifest;
        if !manifest.verify_signature(center_key) {
            return Err(StationError::Protocol("manifest signature does not verify".into()));
        }
        let stations = manifest.route.stations();
        let hop = delivery.hop_index as usize;
        if stations.get(hop).map(String::as_str) != Some(self.station_id.as_str()) {
            return Err(StationError::Protocol("delivery is not addressed to this station".into()));
        }
        if manifest.station_key_ids.get(&self.station_id) != Some(&self.key().key_id()) {
            return Err(StationError::Protocol("manifest names a different key for this station".into()));
        }
        let expected_sender = if hop == 0 {
            center_key.key_id()
        } else {
            manifest.station_key_ids[&stations[hop - 1]]
        };
        if delivery.sender_public_key.key_id() != expected_sender {
            return Err(StationError::Protocol("unexpected sender key".into()));
        }
        let expected_next = match stations.get(hop + 1) {
            Some(next) => manifest.station_key_ids[next],
            None => manifest.researcher_key_id,
        };
        if delivery.next_recipient_public_key.key_id() != expected_next {
            return Err(StationError::Protocol("unexpected next recipient key".into()));
        }
        Ok(())
    }

    fn prepare(&self, delivery: &Delivery, center_key: &PublicKey) -> Result<Prepared, StationError> {
        self.check_delivery(delivery, center_key)?;
        let binding = delivery.manifest.binding_digest()?;
        let bytes = open(&delivery.envelope, self.key(), &delivery.sender_public_key, binding.as_bytes())?;
        let mut archive = decode_train_archive(&bytes)?;
        if archive.manifest.binding_digest()? != binding {
            return Err(StationError::Protocol("archive belongs to a different manifest".into()));
        }
        let task = delivery.manifest.task.clone();
        let digest_before = archive.state.digest();
        let before_count = archive.state.records_aggregated;
        let before_payload = archive.state.payload.clone();
        archive.state = execute_task(&task, &archive.state, &self.dataset, &self.station_id, (self.clock)())?;
        let metrics_before = evaluate(task.kind, &before_payload, &self.dataset)?;
        let record_count = archive.state.records_aggregated - before_count;
        archive.manifest.route = archive.manifest.route.advance()?;

        let mut exit_control = None;
        if delivery.hop_index as usize + 1 == delivery.manifest.route.len() {
            let full = release(task.kind, &archive.state.payload, 0)?;
            let pruned = release(task.kind, &archive.state.payload, task.exit_policy.min_token_count)?;
            let metrics = evaluate(task.kind, &pruned.payload, &self.dataset)?
                .into_iter()
                .map(|(k, v)| (k, Real::from(v)))
                .collect();
            let mut summary = ResultSummary {
                task_kind: task.kind,
                metrics,
                released_params: Some(full.params),
                total_records: archive.state.records_aggregated,
                exit_control_report: Vec::new(),
            };
            let outcome = exit_control_check(&mut summary, &task.exit_policy);
            if outcome.passed {
                archive.state.payload = pruned.payload;
                archive.result_summary = Some(summary);
            }
            exit_control = Some(outcome);
        }
        Ok(Prepared {
            archive,
            record_count,
            digest_before,
            metrics_before,
            exit_control,
        })
    }

    fn local_summary(&self, delivery: &Delivery, prepared: &Prepared) -> Result<LocalSummary, StationError> {
        let kind = delivery.manifest.task.kind;
        Ok(LocalSummary {
            task_kind: kind,
            record_count: prepared.record_count,
            metrics_before: prepared.metrics_before.clone(),
            metrics_after: evaluate(kind, &prepared.archive.state.payload, &self.dataset)?,
            state_digest_before: prepared.digest_before,
            state_digest_after: prepared.archive.state.digest(),
        })
    }

    #[allow(clippy::too_many_arguments)]
    async fn push(
        &self,
        delivery: &Delivery,
        verdict: Verdict,
        reason: &str,
        envelope: Option<padme_core::crypto::EncryptedEnvelope>,
        state_digest_before: Digest,
        state_digest_after: Digest,
        record_count: u64,
        exit_control: Option<ExitControlOutcome>,
    ) -> Result<HopOutcome, StationError> {
        let mut report = HopReport {
            train_id: delivery.train_id.clone(),
            station_id: self.station_id.clone(),
            hop_index: delivery.hop_index,
            record_count,
            verdict,
            reason: reason.to_string(),
            exit_control: exit_control.clone(),
            state_digest_before,
            state_digest_after,
            envelope_digest: envelope.as_ref().map(|e| e.digest()),
            signature: Vec::new(),
        };
        report.sign(self.key());
        let status = self.client.push_hop(&delivery.train_id, report, envelope).await?;
        info!(train = %delivery.train_id, hop = delivery.hop_index, ?verdict, ?status, "hop pushed");
        Ok(HopOutcome {
            train_id: delivery.train_id.clone(),
            hop_index: delivery.hop_index,
            verdict,
            reason: reason.to_string(),
            exit_control,
            status,
        })
    }

    /// Polls until `shutdown` resolves. Failures back off exponentially up
    /// to ten poll intervals.
    pub async fn run(mut self, poll_interval: Duration, shutdown: impl Future<Output = ()>) {
        tokio::pin!(shutdown);
        let mut delay = poll_interval;
        loop {
            let outcome = tokio::select! {
                _ = &mut shutdown => return,
                r = self.poll_once() => r,
            };
            delay = match outcome {
                Ok(Some(_)) => Duration::ZERO,
                Ok(None) => poll_interval,
                Err(e) => {
                    warn!(station = %self.station_id, error = %e, "poll failed");
                    (delay.max(poll_interval) * 2).min(poll_interval * 10)
                }
            };
            tokio::select! {
                _ = &mut shutdown => return,
                _ = tokio::time::sleep(delay) => {}
            }
        }
    }
}
