//! The local approval gate.
//!
//! After local training the agent parks the train on the desk and waits.
//! A decision must be signed either by the station key or by one of the
//! configured admin keys; the agent only seals and pushes once a decision
//! for that exact post-training state digest arrives.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::{Arc, Mutex};

use padme_core::canonical::{b64, Timestamp};
use padme_core::crypto::{Digest, KeyId, KeyPair, PublicKey};
use padme_core::types::{signing_message, TaskKind, Verdict};
use serde::{Deserialize, Serialize};
use tokio::sync::oneshot;

use crate::error::StationError;

const DECISION_DOMAIN: &str = "padme/approval-decision/v1";

/// What the station admin sees before releasing a train: counts, metrics
/// and digests only, never rows or model parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalSummary {
    pub task_kind: TaskKind,
    pub record_count: u64,
    pub metrics_before: BTreeMap<String, f64>,
    pub metrics_after: BTreeMap<String, f64>,
    pub state_digest_before: Digest,
    pub state_digest_after: Digest,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PendingApproval {
    pub train_id: String,
    pub hop_index: u32,
    pub local_summary: LocalSummary,
    pub created_at: Timestamp,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApprovalDecision {
    pub verdict: Verdict,
    #[serde(default)]
    pub reason: String,
    pub admin_key_id: KeyId,
    #[serde(with = "b64")]
    pub signature: Vec<u8>,
}

#[derive(Serialize)]
struct DecisionStatement<'a> {
    train_id: &'a str,
    hop_index: u32,
    verdict: Verdict,
    reason: &'a str,
    state_digest: &'a Digest,
}

fn decision_message(pending: &PendingApproval, verdict: Verdict, reason: &str) -> Vec<u8> {
    let statement = DecisionStatement {
        train_id: &pending.train_id,
        hop_index: pending.hop_index,
        verdict,
        reason,
        state_digest: &pending.local_summary.state_digest_after,
    };
    signing_message(DECISION_DOMAIN, &statement).expect("decision statements hold no reals")
}

impl ApprovalDecision {
    pub fn sign(pending: &PendingApproval, verdict: Verdict, reason: &str, key: &KeyPair) -> Self {
        Self {
            verdict,
            reason: reason.to_string(),
            admin_key_id: key.key_id(),
            signature: key.sign(&decision_message(pending, verdict, reason)),
        }
    }

    pub fn verify(&self, pending: &PendingApproval, key: &PublicKey) -> bool {
        key.key_id() == self.admin_key_id
            && key.verify(&decision_message(pending, self.verdict, &self.reason), &self.signature)
    }
}

/// A decision as submitted over the admin API. Unsigned requests are signed
/// with the station key and are only accepted when no admin keys are
/// configured.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionRequest {
    pub verdict: Verdict,
    #[serde(default)]
    pub reason: String,
    #[serde(default)]
    pub admin_public_key: Option<PublicKey>,
    #[serde(default, with = "b64::option")]
    pub signature: Option<Vec<u8>>,
}

struct Slot {
    pending: PendingApproval,
    reply: oneshot::Sender<ApprovalDecision>,
}

/// Shared between the agent loop and the admin API.
#[derive(Clone)]
pub struct ApprovalDesk {
    slots: Arc<Mutex<BTreeMap<String, Slot>>>,
    station_key: Arc<KeyPair>,
    admin_keys: BTreeSet<KeyId>,
    auto_approve: bool,
}

impl ApprovalDesk {
    pub fn new(station_key: Arc<KeyPair>, admin_keys: impl IntoIterator<Item = KeyId>, auto_approve: bool) -> Self {
        Self {
            slots: Arc::default(),
            station_key,
            admin_keys: admin_keys.into_iter().collect(),
            auto_approve,
        }
    }

    /// Parks a train and returns a receiver for its decision. With
    /// auto-approve the station key approves at once.
    pub fn submit(&self, pending: PendingApproval) -> oneshot::Receiver<ApprovalDecision> {
        let (tx, rx) = oneshot::channel();
        if self.auto_approve {
            let decision = ApprovalDecision::sign(&pending, Verdict::Approve, "auto-approve", &self.station_key);
            let _ = tx.send(decision);
            return rx;
        }
        let id = pending.train_id.clone();
        self.slots.lock().expect("desk lock").insert(id, Slot { pending, reply: tx });
        rx
    }

    pub fn pending(&self) -> Vec<PendingApproval> {
        let slots = self.slots.lock().expect("desk lock");
        slots.values().map(|s| s.pending.clone()).collect()
    }

    /// Drops a parked train whose waiter has gone away.
    pub fn withdraw(&self, train_id: &str) {
        self.slots.lock().expect("desk lock").remove(train_id);
    }

    pub fn decide(&self, train_id: &str, request: DecisionRequest) -> Result<ApprovalDecision, StationError> {
        let mut slots = self.slots.lock().expect("desk lock");
        let slot = slots
            .get(train_id)
            .ok_or_else(|| StationError::NoSuchPending(train_id.to_string()))?;
        let decision = match (request.admin_public_key, request.signature) {
            (Some(key), Some(signature)) => {
                let decision = ApprovalDecision {
                    verdict: request.verdict,
                    reason: request.reason,
                    admin_key_id: key.key_id(),
                    signature,
                };
                let authorized =
                    decision.admin_key_id == self.station_key.key_id() || self.admin_keys.contains(&decision.admin_key_id);
                if !authorized || !decision.verify(&slot.pending, &key) {
                    return Err(StationError::UnauthorizedApprover);
                }
                decision
            }
            (None, None) if self.admin_keys.is_empty() => {
                ApprovalDecision::sign(&slot.pending, request.verdict, &request.reason, &self.station_key)
            }
            _ => return Err(StationError::UnauthorizedApprover),
        };
        let slot = slots.remove(train_id).expect("slot checked above");
        slot.reply.send(decision.clone()).map_err(|_| StationError::ChannelClosed)?;
        Ok(decision)
    }
}

impl DecisionRequest {
    /// Builds a request pre-signed by an admin key.
    pub fn signed(pending: &PendingApproval, verdict: Verdict, reason: &str, key: &KeyPair) -> Self {
        let decision = ApprovalDecision::sign(pending, verdict, reason, key);
        Self {
            verdict,
            reason: reason.to_string(),
            admin_public_key: Some(key.public().clone()),
            signature: Some(decision.signature),
        }
    }

    pub fn unsigned(verdict: Verdict, reason: &str) -> Self {
        Self {
            verdict,
            reason: reason.to_string(),
            admin_public_key: None,
            signature: None,
        }
    }
}

#[cfg(test)]
mod tests {
    use padme_core::crypto::{generate_keypair, KeyRole};

    use super::*;

    fn pending(train_id: &str) -> PendingApproval {
        PendingApproval {
            train_id: train_id.into(),
            hop_index: 0,
            local_summary: LocalSummary {
                task_kind: TaskKind::NbSentiment,
                record_count: 10,
                metrics_before: BTreeMap::new(),
                metrics_after: [("accuracy".to_string(), 0.9)].into(),
                state_digest_before: Digest::of(b"before"),
                state_digest_after: Digest::of(b"after"),
            },
            created_at: Timestamp::from_unix(0),
        }
    }

    fn station() -> Arc<KeyPair> {
        Arc::new(generate_keypair(KeyRole::Station, Some(1)))
    }

    #[tokio::test]
    async fn admin_signed_decision_reaches_the_waiter() {
        let admin = generate_keypair(KeyRole::Station, Some(2));
        let desk = ApprovalDesk::new(station(), [admin.key_id()], false);
        let p = pending("t1");
        let rx = desk.submit(p.clone());
        assert_eq!(desk.pending().len(), 1);
        desk.decide("t1", DecisionRequest::signed(&p, Verdict::Approve, "ok", &admin)).unwrap();
        let d = rx.await.unwrap();
        assert!(d.verify(&p, admin.public()));
        assert!(desk.pending().is_empty());
    }

    #[test]
    fn unknown_or_forged_keys_are_refused() {
        let admin = generate_keypair(KeyRole::Station, Some(2));
        let outsider = generate_keypair(KeyRole::Station, Some(3));
        let desk = ApprovalDesk::new(station(), [admin.key_id()], false);
        let p = pending("t1");
        let _rx = desk.submit(p.clone());
        let err = desk.decide("t1", DecisionRequest::signed(&p, Verdict::Approve, "", &outsider));
        assert_eq!(err, Err(StationError::UnauthorizedApprover));
        // Signature over a different verdict.
        let mut forged = DecisionRequest::signed(&p, Verdict::Reject, "", &admin);
        forged.verdict = Verdict::Approve;
        assert_eq!(desk.decide("t1", forged), Err(StationError::UnauthorizedApprover));
        // Unsigned requests need an empty admin list.
        let unsigned = DecisionRequest::unsigned(Verdict::Approve, "");
        assert_eq!(desk.decide("t1", unsigned), Err(StationError::UnauthorizedApprover));
        assert_eq!(desk.pending().len(), 1);
        assert!(matches!(
            desk.decide("t2", DecisionRequest::unsigned(Verdict::Approve, "")),
            Err(StationError::NoSuchPending(_))
        ));
    }

    #[tokio::test]
    async fn unsigned_and_auto_decisions_use_the_station_key() {
        let key = station();
        let desk = ApprovalDesk::new(key.clone(), [], false);
        let p = pending("t1");
        let rx = desk.submit(p.clone());
        desk.decide("t1", DecisionRequest::unsigned(Verdict::Reject, "no")).unwrap();
        let d = rx.await.unwrap();
        assert_eq!(d.verdict, Verdict::Reject);
        assert!(d.verify(&p, key.public()));

        let auto = ApprovalDesk::new(key.clone(), [], true);
        let d = auto.submit(p.clone()).await.unwrap();
        assert_eq!(d.verdict, Verdict::Approve);
        assert!(auto.pending().is_empty());
    }
}
