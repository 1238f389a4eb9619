//! Hop envelopes: one fresh data key per payload, encapsulated to exactly one
//! recipient and signed by the sender.
//!
//! Key encapsulation: an ephemeral X25519 key agrees with the recipient's
//! static key; HKDF-SHA256 derives a key-encryption key that wraps the data
//! key with ChaCha20-Poly1305. `wrapped_key` is `ephemeral_public(32) || wrap(48)`.
//!
//! The payload is sealed with the data key under a random 96-bit nonce. The
//! associated data binds the suite id, both key ids and the caller's
//! associated bytes (the manifest digest in normal use).

use chacha20poly1305::aead::{Aead, KeyInit, Payload};
use chacha20poly1305::{ChaCha20Poly1305, Key, Nonce};
use hkdf::Hkdf;
use rand::rngs::OsRng;
use rand::{CryptoRng, RngCore};
use serde::{Deserialize, Serialize};
use sha2::Sha256;
use x25519_dalek::{EphemeralSecret, PublicKey as AgreementPublic};
use zeroize::Zeroize;

use super::{CryptoError, Digest, KeyId, KeyPair, PublicKey};
use crate::canonical::b64;

pub const SUITE_X25519_CHACHA20POLY1305_ED25519: u16 = 1;

const SIGN_DOMAIN: &[u8] = b"padme/envelope/v1/signature";
const KEK_INFO: &[u8] = b"padme/envelope/v1/kek";
const NONCE_LEN: usize = 12;
const WRAPPED_KEY_LEN: usize = 32 + 32 + 16;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncryptedEnvelope {
    pub suite: u16,
    pub recipient_key_id: KeyId,
    pub sender_key_id: KeyId,
    #[serde(with = "b64")]
    pub wrapped_key: Vec<u8>,
    #[serde(with = "b64")]
    pub nonce: Vec<u8>,
    #[serde(with = "b64")]
    pub ciphertext: Vec<u8>,
    #[serde(with = "b64")]
    pub signature: Vec<u8>,
}

impl EncryptedEnvelope {
    fn signing_bytes(&self) -> Vec<u8> {
        let mut msg = Vec::with_capacity(
            SIGN_DOMAIN.len() + 2 + 64 + 16 + self.wrapped_key.len() + self.nonce.len() + self.ciphertext.len(),
        );
        msg.extend_from_slice(SIGN_DOMAIN);
        msg.extend_from_slice(&self.suite.to_be_bytes());
        msg.extend_from_slice(self.recipient_key_id.as_bytes());
        msg.extend_from_slice(self.sender_key_id.as_bytes());
        for field in [&self.wrapped_key, &self.nonce, &self.ciphertext] {
            msg.extend_from_slice(&(field.len() as u64).to_be_bytes());
            msg.extend_from_slice(field);
        }
        msg
    }

    /// Wire encoding:
    /// `suite u16 | recipient_key_id [32] | sender_key_id [32] |
    ///  wrapped_key len u16 + bytes | nonce len u8 + bytes |
    ///  ciphertext len u32 + bytes | signature len u16 + bytes`, all big-endian.
    pub fn to_wire(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(
            2 + 64 + 2 + self.wrapped_key.len() + 1 + self.nonce.len() + 4 + self.ciphertext.len() + 2 + self.signature.len(),
        );
        out.extend_from_slice(&self.suite.to_be_bytes());
        out.extend_from_slice(self.recipient_key_id.as_bytes());
        out.extend_from_slice(self.sender_key_id.as_bytes());
        out.extend_from_slice(&(self.wrapped_key.len() as u16).to_be_bytes());
        out.extend_from_slice(&self.wrapped_key);
        out.push(self.nonce.len() as u8);
        out.extend_from_slice(&self.nonce);
        out.extend_from_slice(&(self.ciphertext.len() as u32).to_be_bytes());
        out.extend_from_slice(&self.ciphertext);
        out.extend_from_slice(&(self.signature.len() as u16).to_be_bytes());
        out.extend_from_slice(&self.signature);
        out
    }

    pub fn from_wire(bytes: &[u8]) -> Result<Self, CryptoError> {
        let mut reader = WireReader { bytes, pos: 0 };
        let suite = u16::from_be_bytes(reader.array::<2>()?);
        let recipient_key_id = KeyId(reader.array::<32>()?);
        let sender_key_id = KeyId(reader.array::<32>()?);
        let len = u16::from_be_bytes(reader.array::<2>()?) as usize;
        let wrapped_key = reader.take(len)?.to_vec();
        let len = reader.array::<1>()?[0] as usize;
        let nonce = reader.take(len)?.to_vec();
        let len = u32::from_be_bytes(reader.array::<4>()?) as usize;
        let ciphertext = reader.take(len)?.to_vec();
        let len = u16::from_be_bytes(reader.array::<2>()?) as usize;
        let signature = reader.take(len)?.to_vec();
        if reader.pos != bytes.len() {
            return Err(CryptoError::Malformed(format!(
                "{} trailing bytes",
                bytes.len() - reader.pos
            )));
        }
        Ok(Self {
            suite,
            recipient_key_id,
            sender_key_id,
            wrapped_key,
            nonce,
            ciphertext,
            signature,
        })
    }

    /// SHA-256 over the wire encoding.
    pub fn digest(&self) -> Digest {
        Digest::of(&self.to_wire())
    }

    /// Checks the sender signature without opening the envelope, so a relay
    /// can reject forged pushes while staying blind to the payload.
    pub fn verify_sender(&self, sender: &PublicKey) -> bool {
        self.suite == SUITE_X25519_CHACHA20POLY1305_ED25519
            && self.sender_key_id == sender.key_id()
            && sender.verify(&self.signing_bytes(), &self.signature)
    }
}

struct WireReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> WireReader<'a> {
    fn take(&mut self, len: usize) -> Result<&'a [u8], CryptoError> {
        let end = self
            .pos
            .checked_add(len)
            .filter(|end| *end <= self.bytes.len())
            .ok_or_else(|| CryptoError::Malformed("truncated envelope".into()))?;
        let slice = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(slice)
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N], CryptoError> {
        Ok(self.take(N)?.try_into().expect("length checked"))
    }
}

fn derive_kek(shared: &[u8; 32], ephemeral: &[u8; 32], recipient: &[u8; 32]) -> [u8; 32] {
    let mut salt = [0u8; 64];
    salt[..32].copy_from_slice(ephemeral);
    salt[32..].copy_from_slice(recipient);
    let hk = Hkdf::<Sha256>::new(Some(&salt), shared);
    let mut kek = [0u8; 32];
    hk.expand(KEK_INFO, &mut kek).expect("32 bytes is a valid HKDF length");
    kek
}

fn payload_aad(suite: u16, recipient: &KeyId, sender: &KeyId, associated: &[u8]) -> Vec<u8> {
    let mut aad = Vec::with_capacity(2 + 64 + associated.len());
    aad.extend_from_slice(&suite.to_be_bytes());
    aad.extend_from_slice(recipient.as_bytes());
    aad.extend_from_slice(sender.as_bytes());
    aad.extend_from_slice(associated);
    aad
}

pub fn seal(
    payload: &[u8],
    recipient: &PublicKey,
    sender: &KeyPair,
    associated: &[u8],
) -> Result<EncryptedEnvelope, CryptoError> {
    seal_with_rng(payload, recipient, sender, associated, &mut OsRng)
}

pub fn seal_with_rng<R: RngCore + CryptoRng>(
    payload: &[u8],
    recipient: &PublicKey,
    sender: &KeyPair,
    associated: &[u8],
    rng: &mut R,
) -> Result<EncryptedEnvelope, CryptoError> {
    let suite = SUITE_X25519_CHACHA20POLY1305_ED25519;
    let recipient_key_id = recipient.key_id();
    let sender_key_id = sender.key_id();
    let recipient_agreement = recipient.agreement_key();

    let ephemeral = EphemeralSecret::random_from_rng(&mut *rng);
    let ephemeral_public = AgreementPublic::from(&ephemeral);
    let shared = ephemeral.diffie_hellman(&recipient_agreement);
    if !shared.was_contributory() {
        return Err(CryptoError::InvalidKey("recipient agreement key has low order".into()));
    }
    let mut kek = derive_kek(shared.as_bytes(), ephemeral_public.as_bytes(), recipient_agreement.as_bytes());

    let mut data_key = [0u8; 32];
    rng.fill_bytes(&mut data_key);
    let mut nonce = [0u8; NONCE_LEN];
    rng.fill_bytes(&mut nonce);

    // The KEK is single-use, so a fixed nonce is sound for the wrap.
    let wrap = ChaCha20Poly1305::new(Key::from_slice(&kek))
        .encrypt(
            Nonce::from_slice(&[0u8; NONCE_LEN]),
            Payload {
                msg: &data_key,
                aad: recipient_key_id.as_bytes(),
            },
        )
        .map_err(|_| CryptoError::InvalidKey("key wrap failed".into()))?;
    kek.zeroize();

    let mut wrapped_key = Vec::with_capacity(WRAPPED_KEY_LEN);
    wrapped_key.extend_from_slice(ephemeral_public.as_bytes());
    wrapped_key.extend_from_slice(&wrap);

    let aad = payload_aad(suite, &recipient_key_id, &sender_key_id, associated);
    let ciphertext = ChaCha20Poly1305::new(Key::from_slice(&data_key))
        .encrypt(Nonce::from_slice(&nonce), Payload { msg: payload, aad: &aad })
        .map_err(|_| CryptoError::InvalidKey("payload encryption failed".into()))?;
    data_key.zeroize();

    let mut envelope = EncryptedEnvelope {
        suite,
        recipient_key_id,
        sender_key_id,
        wrapped_key,
        nonce: nonce.to_vec(),
        ciphertext,
        signature: Vec::new(),
    };
    envelope.signature = sender.sign(&envelope.signing_bytes());
    Ok(envelope)
}

/// Open an envelope addressed to `recipient` and sent by `sender`.
///
/// Any envelope that was not addressed to this key fails with
/// `WrongRecipient`; a modified field surfaces as `TamperDetected` (AEAD
/// failure) or `BadSignature`. Plaintext is only returned after the sender
/// signature has been verified as well.
pub fn open(
    env: &EncryptedEnvelope,
    recipient: &KeyPair,
    sender: &PublicKey,
    associated: &[u8],
) -> Result<Vec<u8>, CryptoError> {
    // The suite id is signed; an unknown one cannot carry a valid signature.
    if env.suite != SUITE_X25519_CHACHA20POLY1305_ED25519 {
        return Err(CryptoError::BadSignature);
    }
    if env.sender_key_id != sender.key_id() {
        return Err(CryptoError::BadSignature);
    }
    let signature_ok = || sender.verify(&env.signing_bytes(), &env.signature);

    let my_id = recipient.key_id();
    if env.recipient_key_id != my_id {
        return Err(if signature_ok() {
            CryptoError::WrongRecipient
        } else {
            CryptoError::BadSignature
        });
    }

    if env.wrapped_key.len() != WRAPPED_KEY_LEN || env.nonce.len() != NONCE_LEN {
        return Err(CryptoError::TamperDetected);
    }
    let mut ephemeral = [0u8; 32];
    ephemeral.copy_from_slice(&env.wrapped_key[..32]);
    let ephemeral_public = AgreementPublic::from(ephemeral);
    let shared = recipient.agreement_secret().diffie_hellman(&ephemeral_public);
    if !shared.was_contributory() {
        return Err(CryptoError::TamperDetected);
    }
    let own_agreement = recipient.public().agreement_key();
    let mut kek = derive_kek(shared.as_bytes(), &ephemeral, own_agreement.as_bytes());
    let unwrapped = ChaCha20Poly1305::new(Key::from_slice(&kek)).decrypt(
        Nonce::from_slice(&[0u8; NONCE_LEN]),
        Payload {
            msg: &env.wrapped_key[32..],
            aad: my_id.as_bytes(),
        },
    );
    kek.zeroize();
    let mut data_key = unwrapped.map_err(|_| CryptoError::TamperDetected)?;

    let aad = payload_aad(env.suite, &env.recipient_key_id, &env.sender_key_id, associated);
    let plaintext = ChaCha20Poly1305::new(Key::from_slice(&data_key)).decrypt(
        Nonce::from_slice(&env.nonce),
        Payload {
            msg: &env.ciphertext,
            aad: &aad,
        },
    );
    data_key.zeroize();
    let plaintext = plaintext.map_err(|_| CryptoError::TamperDetected)?;

    if !signature_ok() {
        return Err(CryptoError::BadSignature);
    }
    Ok(plaintext)
}

#[cfg(test)]
mod tests {
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha20Rng;

    use super::*;
    use crate::crypto::{generate_keypair, KeyRole};

    fn parties() -> (KeyPair, KeyPair, KeyPair) {
        (
            generate_keypair(KeyRole::Station, Some(1)),
            generate_keypair(KeyRole::Station, Some(2)),
            generate_keypair(KeyRole::Station, Some(3)),
        )
    }

    #[test]
    fn empty_payload_round_trip() {
        let (sender, recipient, _) = parties();
        let env = seal(b"", recipient.public(), &sender, b"aad").unwrap();
        assert_eq!(open(&env, &recipient, sender.public(), b"aad").unwrap(), b"");
    }

    #[test]
    fn third_party_cannot_open() {
        let (sender, recipient, third) = parties();
        let env = seal(b"state", recipient.public(), &sender, b"aad").unwrap();
        assert_eq!(
            open(&env, &third, sender.public(), b"aad"),
            Err(CryptoError::WrongRecipient)
        );
    }

    #[test]
    fn relabelled_recipient_still_fails() {
        let (sender, recipient, third) = parties();
        let mut env = seal(b"state", recipient.public(), &sender, b"aad").unwrap();
        env.recipient_key_id = third.key_id();
        assert!(open(&env, &third, sender.public(), b"aad").is_err());
    }

    #[test]
    fn associated_data_is_bound() {
        let (sender, recipient, _) = parties();
        let env = seal(b"state", recipient.public(), &sender, b"manifest-a").unwrap();
        assert_eq!(
            open(&env, &recipient, sender.public(), b"manifest-b"),
            Err(CryptoError::TamperDetected)
        );
    }

    #[test]
    fn wrong_sender_key_is_bad_signature() {
        let (sender, recipient, third) = parties();
        let env = seal(b"state", recipient.public(), &sender, b"").unwrap();
        assert_eq!(
            open(&env, &recipient, third.public(), b""),
            Err(CryptoError::BadSignature)
        );
    }

    #[test]
    fn fresh_key_and_nonce_per_seal() {
        let (sender, recipient, _) = parties();
        let a = seal(b"same", recipient.public(), &sender, b"").unwrap();
        let b = seal(b"same", recipient.public(), &sender, b"").unwrap();
        assert_ne!(a.wrapped_key, b.wrapped_key);
        assert_ne!(a.nonce, b.nonce);
        assert_ne!(a.ciphertext, b.ciphertext);
    }

    #[test]
    fn ciphertext_bit_flips_are_detected() {
        let (sender, recipient, _) = parties();
        let payload: Vec<u8> = (0..200u8).collect();
        let env = seal(&payload, recipient.public(), &sender, b"aad").unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(99);
        let mut detected = 0;
        for _ in 0..1000 {
            let mut mutated = env.clone();
            let bit = rng.gen_range(0..mutated.ciphertext.len() * 8);
            mutated.ciphertext[bit / 8] ^= 1 << (bit % 8);
            if open(&mutated, &recipient, sender.public(), b"aad") == Err(CryptoError::TamperDetected) {
                detected += 1;
            }
        }
        assert_eq!(detected, 1000);
    }

    #[test]
    fn wire_round_trip_and_truncation() {
        let (sender, recipient, _) = parties();
        let env = seal(b"payload", recipient.public(), &sender, b"").unwrap();
        let wire = env.to_wire();
        assert_eq!(EncryptedEnvelope::from_wire(&wire).unwrap(), env);
        assert!(EncryptedEnvelope::from_wire(&wire[..wire.len() - 1]).is_err());
        let mut extended = wire.clone();
        extended.push(0);
        assert!(EncryptedEnvelope::from_wire(&extended).is_err());
    }

    #[test]
    fn wire_layout_is_big_endian_with_fixed_key_ids() {
        let (sender, recipient, _) = parties();
        let env = seal(b"xyz", recipient.public(), &sender, b"").unwrap();
        let wire = env.to_wire();
        assert_eq!(&wire[..2], &[0, 1]);
        assert_eq!(&wire[2..34], recipient.key_id().as_bytes());
        assert_eq!(&wire[34..66], sender.key_id().as_bytes());
        assert_eq!(&wire[66..68], &(WRAPPED_KEY_LEN as u16).to_be_bytes());
        assert_eq!(wire[68 + WRAPPED_KEY_LEN], NONCE_LEN as u8);
    }
}
