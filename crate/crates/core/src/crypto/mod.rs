//! Keys, hop envelopes and the audit chain.
//!
//! One algorithm suite is supported: X25519 key agreement with HKDF-SHA256 for
//! key encapsulation, ChaCha20-Poly1305 for payload and key wrapping, and
//! Ed25519 signatures. SHA-256 is used for fingerprints and digests.

mod audit;
mod envelope;
mod keys;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest as _, Sha256};
use thiserror::Error;

pub use audit::{chain_append, chain_append_at, chain_verify, AuditEntry, AuditEvent, ChainVerdict};
pub use envelope::{open, seal, seal_with_rng, EncryptedEnvelope, SUITE_X25519_CHACHA20POLY1305_ED25519};
pub use keys::{generate_keypair, generate_keypair_with_rng, KeyFile, KeyPair, KeyRole, PublicKey, SIGNATURE_LEN};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CryptoError {
    #[error("envelope is not addressed to this key")]
    WrongRecipient,
    #[error("authentication of envelope contents failed")]
    TamperDetected,
    #[error("sender signature is invalid")]
    BadSignature,
    #[error("malformed envelope: {0}")]
    Malformed(String),
    #[error("invalid key material: {0}")]
    InvalidKey(String),
}

macro_rules! hex_array_newtype {
    ($name:ident) => {
        #[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
        pub struct $name(pub [u8; 32]);

        impl $name {
            pub fn as_bytes(&self) -> &[u8; 32] {
                &self.0
            }

            pub fn to_hex(&self) -> String {
                hex::encode(self.0)
            }
        }

        impl fmt::Debug for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, "{}({}..)", stringify!($name), &self.to_hex()[..12])
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.to_hex())
            }
        }

        impl FromStr for $name {
            type Err = String;

            fn from_str(s: &str) -> Result<Self, Self::Err> {
                let bytes = hex::decode(s).map_err(|e| e.to_string())?;
                let arr: [u8; 32] = bytes
                    .try_into()
                    .map_err(|_| format!("expected 32 bytes of hex, got `{s}`"))?;
                Ok(Self(arr))
            }
        }

        impl Serialize for $name {
            fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
                serializer.serialize_str(&self.to_hex())
            }
        }

        impl<'de> Deserialize<'de> for $name {
            fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
                let text = String::deserialize(deserializer)?;
                text.parse().map_err(serde::de::Error::custom)
            }
        }
    };
}

hex_array_newtype!(Digest);
hex_array_newtype!(KeyId);

impl Digest {
    pub const ZERO: Digest = Digest([0u8; 32]);

    pub fn of(bytes: &[u8]) -> Digest {
        Digest(sha256(bytes))
    }
}

pub fn sha256(bytes: &[u8]) -> [u8; 32] {
    Sha256::digest(bytes).into()
}
