//! `PDMT` train archives.
//!
//! ```text
//! magic "PDMT" | format version u16 BE
//! | manifest length u32 BE | manifest bytes (canonical)
//! | state length u32 BE    | state bytes (canonical)
//! | result length u32 BE (0 if absent) | result bytes (canonical)
//! ```

use serde::{Deserialize, Serialize};

use crate::canonical::{canonical_deserialize, canonical_serialize};
use crate::error::ProtocolError;
use crate::route::RouteStatus;
use crate::types::{ModelState, ResultSummary, TrainManifest, MODEL_STATE_SCHEMA_VERSION};

pub const ARCHIVE_MAGIC: &[u8; 4] = b"PDMT";
pub const ARCHIVE_FORMAT_VERSION: u16 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainArchive {
    pub manifest: TrainManifest,
    pub state: ModelState,
    pub result_summary: Option<ResultSummary>,
}

impl TrainArchive {
    pub fn validate(&self) -> Result<(), ProtocolError> {
        self.manifest.validate()?;
        self.state.validate()?;
        if self.state.task_kind != self.manifest.task.kind {
            return Err(ProtocolError::Invalid(format!(
                "state kind {:?} does not match task kind {:?}",
                self.state.task_kind, self.manifest.task.kind
            )));
        }
        match &self.result_summary {
            Some(_) if self.manifest.route.status() != RouteStatus::Completed => Err(
                ProtocolError::Invalid("result summary present before route completion".into()),
            ),
            Some(summary) => summary.validate(),
            None => Ok(()),
        }
    }
}

pub fn encode_train_archive(archive: &TrainArchive) -> Result<Vec<u8>, ProtocolError> {
    archive.validate()?;
    let manifest = canonical_serialize(&archive.manifest)?;
    let state = canonical_serialize(&archive.state)?;
    let result = match &archive.result_summary {
        Some(summary) => canonical_serialize(summary)?,
        None => Vec::new(),
    };
    let mut out = Vec::with_capacity(4 + 2 + 12 + manifest.len() + state.len() + result.len());
    out.extend_from_slice(ARCHIVE_MAGIC);
    out.extend_from_slice(&ARCHIVE_FORMAT_VERSION.to_be_bytes());
    for region in [&manifest, &state, &result] {
        let len = u32::try_from(region.len())
            .map_err(|_| ProtocolError::UnrepresentableValue("archive region exceeds 4 GiB".into()))?;
        out.extend_from_slice(&len.to_be_bytes());
        out.extend_from_slice(region);
    }
    Ok(out)
}

pub fn decode_train_archive(bytes: &[u8]) -> Result<TrainArchive, ProtocolError> {
    let malformed = |msg: &str| ProtocolError::MalformedArchive(msg.to_string());
    if bytes.len() < 6 || &bytes[..4] != ARCHIVE_MAGIC {
        return Err(malformed("bad magic"));
    }
    let version = u16::from_be_bytes([bytes[4], bytes[5]]);
    if version > ARCHIVE_FORMAT_VERSION {
        return Err(ProtocolError::VersionMismatch {
            found: version,
            supported: ARCHIVE_FORMAT_VERSION,
        });
    }
    if version == 0 {
        return Err(malformed("format version 0"));
    }

    let mut pos = 6;
    let mut region = || -> Result<&[u8], ProtocolError> {
        let header = bytes.get(pos..pos + 4).ok_or_else(|| malformed("truncated length"))?;
        let len = u32::from_be_bytes(header.try_into().expect("4 bytes")) as usize;
        pos += 4;
        let body = bytes.get(pos..pos + len).ok_or_else(|| malformed("truncated region"))?;
        pos += len;
        Ok(body)
    };
    let manifest_bytes = region()?;
    let state_bytes = region()?;
    let result_bytes = region()?;
    if pos != bytes.len() {
        return Err(malformed("trailing bytes"));
    }

    let reject = |e: ProtocolError| ProtocolError::MalformedArchive(e.to_string());
    let manifest: TrainManifest = canonical_deserialize(manifest_bytes).map_err(reject)?;
    let state: ModelState = canonical_deserialize(state_bytes).map_err(reject)?;
    if state.schema_version > MODEL_STATE_SCHEMA_VERSION {
        return Err(ProtocolError::VersionMismatch {
            found: u16::try_from(state.schema_version).unwrap_or(u16::MAX),
            supported: MODEL_STATE_SCHEMA_VERSION as u16,
        });
    }
    let result_summary = if result_bytes.is_empty() {
        None
    } else {
        Some(canonical_deserialize(result_bytes).map_err(reject)?)
    };
    let archive = TrainArchive {
        manifest,
        state,
        result_summary,
    };
    archive.validate().map_err(reject)?;
    Ok(archive)
}
