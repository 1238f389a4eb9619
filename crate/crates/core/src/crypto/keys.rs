use std::fmt;
use std::path::Path;

use ed25519_dalek::{Signature, Signer, SigningKey, VerifyingKey};
use rand::rngs::OsRng;
use rand::{CryptoRng, RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use x25519_dalek::StaticSecret;
use zeroize::Zeroize;

use super::{sha256, CryptoError, KeyId};
use crate::canonical::b64;

pub const SIGNATURE_LEN: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum KeyRole {
    Station,
    Researcher,
    ServiceCenter,
}

/// Public half of a principal's key material: an Ed25519 verifying key
/// followed by an X25519 public key (64 bytes in total).
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct PublicKey {
    signing: [u8; 32],
    agreement: [u8; 32],
}

impl PublicKey {
    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CryptoError> {
        if bytes.len() != 64 {
            return Err(CryptoError::InvalidKey(format!("expected 64 bytes, got {}", bytes.len())));
        }
        let mut signing = [0u8; 32];
        let mut agreement = [0u8; 32];
        signing.copy_from_slice(&bytes[..32]);
        agreement.copy_from_slice(&bytes[32..]);
        VerifyingKey::from_bytes(&signing).map_err(|e| CryptoError::InvalidKey(e.to_string()))?;
        Ok(Self { signing, agreement })
    }

    pub fn to_bytes(&self) -> [u8; 64] {
        let mut out = [0u8; 64];
        out[..32].copy_from_slice(&self.signing);
        out[32..].copy_from_slice(&self.agreement);
        out
    }

    /// Fingerprint: SHA-256 over the 64 public bytes.
    pub fn key_id(&self) -> KeyId {
        KeyId(sha256(&self.to_bytes()))
    }

    pub fn verify(&self, message: &[u8], signature: &[u8]) -> bool {
        let Ok(key) = VerifyingKey::from_bytes(&self.signing) else {
            return false;
        };
        let Ok(sig) = Signature::from_slice(signature) else {
            return false;
        };
        key.verify_strict(message, &sig).is_ok()
    }

    pub(crate) fn agreement_key(&self) -> x25519_dalek::PublicKey {
        x25519_dalek::PublicKey::from(self.agreement)
    }
}

impl fmt::Debug for PublicKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "PublicKey({:?})", self.key_id())
    }
}

impl Serialize for PublicKey {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&b64::encode(&self.to_bytes()))
    }
}

impl<'de> Deserialize<'de> for PublicKey {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let text = String::deserialize(deserializer)?;
        let bytes = b64::decode(&text).map_err(serde::de::Error::custom)?;
        PublicKey::from_bytes(&bytes).map_err(serde::de::Error::custom)
    }
}

pub struct KeyPair {
    role: KeyRole,
    public: PublicKey,
    signing: SigningKey,
    agreement: StaticSecret,
}

impl KeyPair {
    fn from_secret(role: KeyRole, mut secret: [u8; 64]) -> Self {
        let mut sign_seed = [0u8; 32];
        let mut agree_seed = [0u8; 32];
        sign_seed.copy_from_slice(&secret[..32]);
        agree_seed.copy_from_slice(&secret[32..]);
        secret.zeroize();
        let signing = SigningKey::from_bytes(&sign_seed);
        let agreement = StaticSecret::from(agree_seed);
        sign_seed.zeroize();
        agree_seed.zeroize();
        let public = PublicKey {
            signing: signing.verifying_key().to_bytes(),
            agreement: x25519_dalek::PublicKey::from(&agreement).to_bytes(),
        };
        Self {
            role,
            public,
            signing,
            agreement,
        }
    }

    pub fn role(&self) -> KeyRole {
        self.role
    }

    pub fn public(&self) -> &PublicKey {
        &self.public
    }

    pub fn key_id(&self) -> KeyId {
        self.public.key_id()
    }

    pub fn sign(&self, message: &[u8]) -> Vec<u8> {
        self.signing.sign(message).to_bytes().to_vec()
    }

    pub(crate) fn agreement_secret(&self) -> &StaticSecret {
        &self.agreement
    }

    fn secret_bytes(&self) -> [u8; 64] {
        let mut out = [0u8; 64];
        out[..32].copy_from_slice(&self.signing.to_bytes());
        out[32..].copy_from_slice(self.agreement.as_bytes());
        out
    }

    pub fn to_key_file(&self) -> KeyFile {
        let mut secret = self.secret_bytes();
        let file = KeyFile {
            role: self.role,
            key_id: self.key_id(),
            public: self.public.clone(),
            secret: secret.to_vec(),
        };
        secret.zeroize();
        file
    }

    pub fn from_key_file(file: &KeyFile) -> Result<Self, CryptoError> {
        let secret: [u8; 64] = file
            .secret
            .as_slice()
            .try_into()
            .map_err(|_| CryptoError::InvalidKey("secret must be 64 bytes".into()))?;
        let pair = Self::from_secret(file.role, secret);
        if pair.public != file.public || pair.key_id() != file.key_id {
            return Err(CryptoError::InvalidKey("public part does not match secret".into()));
        }
        Ok(pair)
    }

    pub fn save(&self, path: &Path) -> std::io::Result<()> {
        let json = serde_json::to_vec_pretty(&self.to_key_file())?;
        std::fs::write(path, json)
    }

    pub fn load(path: &Path) -> std::io::Result<Self> {
        let bytes = std::fs::read(path)?;
        let file: KeyFile = serde_json::from_slice(&bytes)
            .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))?;
        Self::from_key_file(&file)
            .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))
    }
}

impl Clone for KeyPair {
    fn clone(&self) -> Self {
        Self::from_secret(self.role, self.secret_bytes())
    }
}

impl fmt::Debug for KeyPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("KeyPair")
            .field("role", &self.role)
            .field("key_id", &self.key_id())
            .finish_non_exhaustive()
    }
}

/// On-disk key file (JSON).
#[derive(Clone, Serialize, Deserialize)]
pub struct KeyFile {
    pub role: KeyRole,
    pub key_id: KeyId,
    pub public: PublicKey,
    #[serde(with = "b64")]
    pub secret: Vec<u8>,
}

/// Generate a key pair. A seed makes generation deterministic and is meant
/// for tests and simulations only.
pub fn generate_keypair(role: KeyRole, seed: Option<u64>) -> KeyPair {
    match seed {
        Some(seed) => generate_keypair_with_rng(role, &mut ChaCha20Rng::seed_from_u64(seed)),
        None => generate_keypair_with_rng(role, &mut OsRng),
    }
}

pub fn generate_keypair_with_rng<R: RngCore + CryptoRng>(role: KeyRole, rng: &mut R) -> KeyPair {
    let mut secret = [0u8; 64];
    rng.fill_bytes(&mut secret);
    KeyPair::from_secret(role, secret)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_key_id() {
        let a = generate_keypair(KeyRole::Station, Some(7));
        let b = generate_keypair(KeyRole::Station, Some(7));
        assert_eq!(a.key_id(), b.key_id());
    }

    #[test]
    fn different_seeds_distinct_key_ids() {
        let a = generate_keypair(KeyRole::Station, Some(7));
        let b = generate_keypair(KeyRole::Station, Some(8));
        assert_ne!(a.key_id(), b.key_id());
    }

    #[test]
    fn key_id_is_hash_of_public_part() {
        let pair = generate_keypair(KeyRole::Researcher, None);
        assert_eq!(pair.key_id().0, sha256(&pair.public().to_bytes()));
    }

    #[test]
    fn key_file_round_trip() {
        let pair = generate_keypair(KeyRole::ServiceCenter, Some(1));
        let json = serde_json::to_string(&pair.to_key_file()).unwrap();
        let file: KeyFile = serde_json::from_str(&json).unwrap();
        let back = KeyPair::from_key_file(&file).unwrap();
        assert_eq!(back.key_id(), pair.key_id());
        let sig = back.sign(b"msg");
        assert!(pair.public().verify(b"msg", &sig));
        assert!(!pair.public().verify(b"other", &sig));
    }

    #[test]
    fn tampered_key_file_is_rejected() {
        let pair = generate_keypair(KeyRole::Station, Some(1));
        let mut file = pair.to_key_file();
        file.secret[0] ^= 1;
        assert!(KeyPair::from_key_file(&file).is_err());
    }
}
