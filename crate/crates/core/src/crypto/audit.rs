//! Hash-chained, signed audit ledger.

use serde::{Deserialize, Serialize};

use super::{Digest, KeyId, KeyPair, PublicKey};
use crate::canonical::{b64, canonical_serialize, Timestamp};

const SIGN_DOMAIN: &[u8] = b"padme/audit/v1\n";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum AuditEvent {
    TaskSubmitted,
    Approved,
    Dispatched,
    HopFetched,
    HopPushed,
    AdminDecision,
    ExitControl,
    Released,
    Blocked,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuditEntry {
    pub index: u64,
    pub prev_hash: Digest,
    pub event: AuditEvent,
    pub actor_key_id: KeyId,
    pub payload_digest: Digest,
    pub timestamp: Timestamp,
    #[serde(with = "b64")]
    pub signature: Vec<u8>,
}

#[derive(Serialize)]
struct UnsignedEntry<'a> {
    index: u64,
    prev_hash: &'a Digest,
    event: AuditEvent,
    actor_key_id: &'a KeyId,
    payload_digest: &'a Digest,
    timestamp: Timestamp,
}

impl AuditEntry {
    fn signing_bytes(&self) -> Vec<u8> {
        let unsigned = UnsignedEntry {
            index: self.index,
            prev_hash: &self.prev_hash,
            event: self.event,
            actor_key_id: &self.actor_key_id,
            payload_digest: &self.payload_digest,
            timestamp: self.timestamp,
        };
        let mut msg = SIGN_DOMAIN.to_vec();
        msg.extend(canonical_serialize(&unsigned).expect("audit entries hold no reals"));
        msg
    }

    /// Digest of the full entry, signature included; the next entry's
    /// `prev_hash`.
    pub fn hash(&self) -> Digest {
        Digest::of(&canonical_serialize(self).expect("audit entries hold no reals"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ChainVerdict {
    Ok,
    FirstViolationIndex(u64),
}

impl ChainVerdict {
    pub fn is_ok(self) -> bool {
        self == ChainVerdict::Ok
    }
}

pub fn chain_append(
    ledger: &[AuditEntry],
    event: AuditEvent,
    actor_key_id: KeyId,
    payload_digest: Digest,
    signer: &KeyPair,
) -> AuditEntry {
    chain_append_at(ledger, event, actor_key_id, payload_digest, signer, Timestamp::now())
}

pub fn chain_append_at(
    ledger: &[AuditEntry],
    event: AuditEvent,
    actor_key_id: KeyId,
    payload_digest: Digest,
    signer: &KeyPair,
    timestamp: Timestamp,
) -> AuditEntry {
    let prev_hash = ledger.last().map(AuditEntry::hash).unwrap_or(Digest::ZERO);
    let mut entry = AuditEntry {
        index: ledger.len() as u64,
        prev_hash,
        event,
        actor_key_id,
        payload_digest,
        timestamp,
        signature: Vec::new(),
    };
    entry.signature = signer.sign(&entry.signing_bytes());
    entry
}

/// Smallest index whose position, link or signature check fails.
pub fn chain_verify(ledger: &[AuditEntry], signer: &PublicKey) -> ChainVerdict {
    let mut expected_prev = Digest::ZERO;
    for (i, entry) in ledger.iter().enumerate() {
        let valid = entry.index == i as u64
            && entry.prev_hash == expected_prev
            && signer.verify(&entry.signing_bytes(), &entry.signature);
        if !valid {
            return ChainVerdict::FirstViolationIndex(i as u64);
        }
        expected_prev = entry.hash();
    }
    ChainVerdict::Ok
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crypto::{generate_keypair, KeyRole};

    const EVENTS: [AuditEvent; 9] = [
        AuditEvent::TaskSubmitted,
        AuditEvent::Approved,
        AuditEvent::Dispatched,
        AuditEvent::HopFetched,
        AuditEvent::HopPushed,
        AuditEvent::AdminDecision,
        AuditEvent::ExitControl,
        AuditEvent::Released,
        AuditEvent::Blocked,
    ];

    fn ledger(len: usize, signer: &KeyPair) -> Vec<AuditEntry> {
        let mut ledger = Vec::new();
        for i in 0..len {
            let entry = chain_append(
                &ledger,
                EVENTS[i % EVENTS.len()],
                signer.key_id(),
                Digest::of(&(i as u64).to_be_bytes()),
                signer,
            );
            ledger.push(entry);
        }
        ledger
    }

    #[test]
    fn empty_ledger_verifies() {
        let key = generate_keypair(KeyRole::ServiceCenter, Some(1));
        assert_eq!(chain_verify(&[], key.public()), ChainVerdict::Ok);
    }

    #[test]
    fn links_hold() {
        let key = generate_keypair(KeyRole::ServiceCenter, Some(1));
        let ledger = ledger(10, &key);
        assert_eq!(ledger[0].prev_hash, Digest::ZERO);
        for i in 1..ledger.len() {
            assert_eq!(ledger[i].prev_hash, ledger[i - 1].hash());
        }
        assert_eq!(chain_verify(&ledger, key.public()), ChainVerdict::Ok);
    }

    #[test]
    fn mutated_event_is_detected_at_its_index() {
        let key = generate_keypair(KeyRole::ServiceCenter, Some(1));
        let mut ledger = ledger(10, &key);
        ledger[4].event = AuditEvent::Released;
        match chain_verify(&ledger, key.public()) {
            ChainVerdict::FirstViolationIndex(i) => assert!(i == 4 || i == 5, "got {i}"),
            ChainVerdict::Ok => panic!("mutation not detected"),
        }
    }

    #[test]
    fn resigned_mutation_is_caught_by_next_link() {
        let key = generate_keypair(KeyRole::ServiceCenter, Some(1));
        let mut ledger = ledger(10, &key);
        ledger[4].event = AuditEvent::Released;
        ledger[4].signature = key.sign(&ledger[4].signing_bytes());
        assert_eq!(chain_verify(&ledger, key.public()), ChainVerdict::FirstViolationIndex(5));
    }

    #[test]
    fn foreign_signer_is_rejected() {
        let key = generate_keypair(KeyRole::ServiceCenter, Some(1));
        let other = generate_keypair(KeyRole::ServiceCenter, Some(2));
        let ledger = ledger(3, &key);
        assert_eq!(chain_verify(&ledger, other.public()), ChainVerdict::FirstViolationIndex(0));
    }

    #[test]
    fn same_event_twice_gets_distinct_entries() {
        let key = generate_keypair(KeyRole::ServiceCenter, Some(1));
        let mut ledger = Vec::new();
        for _ in 0..2 {
            let e = chain_append(&ledger, AuditEvent::Approved, key.key_id(), Digest::ZERO, &key);
            ledger.push(e);
        }
        assert_ne!(ledger[0].index, ledger[1].index);
        assert_ne!(ledger[0].hash(), ledger[1].hash());
    }

    #[test]
    fn truncation_at_tail_still_verifies_but_reorder_does_not() {
        let key = generate_keypair(KeyRole::ServiceCenter, Some(1));
        let mut ledger = ledger(6, &key);
        assert!(chain_verify(&ledger[..4], key.public()).is_ok());
        ledger.swap(2, 3);
        assert_eq!(chain_verify(&ledger, key.public()), ChainVerdict::FirstViolationIndex(2));
    }
}
