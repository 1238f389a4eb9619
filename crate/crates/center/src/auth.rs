//! Per-request signature-over-nonce authentication.
//!
//! A client first obtains a single-use nonce from `POST /auth/challenge`,
//! then sends the request with three headers: its key id, the nonce, and an
//! Ed25519 signature over
//! `"padme/request/v1\n" method "\n" path "\n" nonce "\n" hex(sha256(body))`.

use std::collections::HashMap;
use std::time::{Duration, Instant};

use padme_core::canonical::b64;
use padme_core::crypto::{Digest, KeyId, KeyPair, PublicKey};
use rand::RngCore;

use crate::error::CenterError;

pub const HEADER_KEY_ID: &str = "x-padme-key-id";
pub const HEADER_NONCE: &str = "x-padme-nonce";
pub const HEADER_SIGNATURE: &str = "x-padme-signature";

const DOMAIN: &str = "padme/request/v1";

pub fn request_message(method: &str, path: &str, nonce: &str, body: &[u8]) -> Vec<u8> {
    let body_hash = Digest::of(body);
    format!("{DOMAIN}\n{method}\n{path}\n{nonce}\n{}", body_hash.to_hex()).into_bytes()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Credential {
    pub key_id: KeyId,
    pub nonce: String,
    pub signature: Vec<u8>,
}

impl Credential {
    pub fn sign(key: &KeyPair, method: &str, path: &str, nonce: &str, body: &[u8]) -> Self {
        Self {
            key_id: key.key_id(),
            nonce: nonce.to_string(),
            signature: key.sign(&request_message(method, path, nonce, body)),
        }
    }

    pub fn verify(&self, key: &PublicKey, method: &str, path: &str, body: &[u8]) -> bool {
        key.key_id() == self.key_id && key.verify(&request_message(method, path, &self.nonce, body), &self.signature)
    }

    pub fn headers(&self) -> [(&'static str, String); 3] {
        [
            (HEADER_KEY_ID, self.key_id.to_hex()),
            (HEADER_NONCE, self.nonce.clone()),
            (HEADER_SIGNATURE, b64::encode(&self.signature)),
        ]
    }

    pub fn from_headers<'a>(get: impl Fn(&str) -> Option<&'a str>) -> Result<Self, CenterError> {
        let missing = |h: &str| CenterError::AuthFailed(format!("missing header {h}"));
        let key_id = get(HEADER_KEY_ID)
            .ok_or_else(|| missing(HEADER_KEY_ID))?
            .parse()
            .map_err(|_| CenterError::AuthFailed("malformed key id".into()))?;
        let nonce = get(HEADER_NONCE).ok_or_else(|| missing(HEADER_NONCE))?.to_string();
        let signature = b64::decode(get(HEADER_SIGNATURE).ok_or_else(|| missing(HEADER_SIGNATURE))?)
            .map_err(|_| CenterError::AuthFailed("malformed signature".into()))?;
        Ok(Self { key_id, nonce, signature })
    }
}

/// Outstanding challenge nonces. Each nonce is accepted once, before its
/// deadline.
#[derive(Debug)]
pub struct ChallengeStore {
    ttl: Duration,
    issued: HashMap<String, Instant>,
}

impl ChallengeStore {
    pub fn new(ttl: Duration) -> Self {
        Self {
            ttl,
            issued: HashMap::new(),
        }
    }

    pub fn ttl(&self) -> Duration {
        self.ttl
    }

    pub fn issue(&mut self) -> String {
        self.issue_at(Instant::now())
    }

    pub fn issue_at(&mut self, now: Instant) -> String {
        self.issued.retain(|_, deadline| *deadline > now);
        let mut bytes = [0u8; 32];
        rand::rngs::OsRng.fill_bytes(&mut bytes);
        let nonce = Digest(bytes).to_hex();
        self.issued.insert(nonce.clone(), now + self.ttl);
        nonce
    }

    pub fn consume(&mut self, nonce: &str) -> Result<(), CenterError> {
        self.consume_at(nonce, Instant::now())
    }

    pub fn consume_at(&mut self, nonce: &str, now: Instant) -> Result<(), CenterError> {
        match self.issued.remove(nonce) {
            Some(deadline) if deadline > now => Ok(()),
            Some(_) => Err(CenterError::AuthFailed("challenge expired".into())),
            None => Err(CenterError::AuthFailed("unknown or reused challenge".into())),
        }
    }
}
