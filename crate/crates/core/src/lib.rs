//! Core protocol for travelling analysis trains.
//!
//! A train is an analysis task plus its model state that visits an ordered
//! route of data stations. Every hop is sealed for exactly one recipient and
//! signed by its sender; the service center that relays the train only ever
//! holds ciphertext after dispatch.
//!
//! This crate holds everything both sides of the protocol need to agree on:
//!
//! - [`canonical`]: the deterministic encoding used for everything that gets
//!   signed or hashed.
//! - [`types`]: manifests, model states, result summaries, hop reports.
//! - [`route`]: the route state machine.
//! - [`archive`]: the `PDMT` binary train archive.
//! - [`crypto`]: keys, hybrid envelopes and the audit hash chain.

pub mod archive;
pub mod canonical;
pub mod crypto;
pub mod error;
pub mod route;
pub mod types;

pub use archive::{decode_train_archive, encode_train_archive, TrainArchive, ARCHIVE_FORMAT_VERSION};
pub use canonical::{canonical_deserialize, canonical_serialize, Real, Timestamp};
pub use crypto::{Digest, KeyId};
pub use error::ProtocolError;
pub use route::{advance_route, Route, RouteStatus};
