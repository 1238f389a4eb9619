//! Append-only, single-directory persistence.
//!
//! ```text
//! data_dir/
//!   center.key               center signing key (created on first start)
//!   stations.jsonl           one RegistryRecord per line
//!   trains/<id>.ledger.jsonl audit entries, one per line
//!   trains/<id>.jsonl        train snapshots, one per committed mutation
//! ```
//!
//! A mutation appends its ledger entries first and its snapshot second. Each
//! snapshot records how many ledger entries it covers, so a crash between the
//! two writes is repaired on load by truncating the ledger. A torn final line
//! (no trailing newline) is ignored.

use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use padme_core::canonical::Timestamp;
use padme_core::crypto::{generate_keypair, AuditEntry, EncryptedEnvelope, KeyPair, KeyRole, PublicKey};
use padme_core::types::{StationDescriptor, TrainManifest};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::CenterError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegistryRecord {
    pub descriptor: StationDescriptor,
    pub public_key: PublicKey,
    pub owner_id: String,
    pub registered_at: Timestamp,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HopProgress {
    pub station_id: String,
    pub at: Timestamp,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainRecord {
    pub manifest: TrainManifest,
    pub researcher_key: PublicKey,
    pub current_envelope: Option<EncryptedEnvelope>,
    pub final_envelope: Option<EncryptedEnvelope>,
    pub hops: Vec<HopProgress>,
    pub records_aggregated: u64,
    #[serde(skip)]
    pub ledger: Vec<AuditEntry>,
}

#[derive(Serialize, Deserialize)]
struct Snapshot {
    ledger_len: u64,
    train: TrainRecord,
}

#[derive(Debug, Default)]
pub struct Loaded {
    pub stations: BTreeMap<String, RegistryRecord>,
    pub trains: BTreeMap<String, TrainRecord>,
}

#[derive(Debug)]
pub struct Store {
    dir: PathBuf,
}

fn append_line(path: &Path, value: &impl Serialize) -> Result<(), CenterError> {
    let mut line = serde_json::to_vec(value).map_err(|e| CenterError::Storage(e.to_string()))?;
    line.push(b'\n');
    let mut file = OpenOptions::new().create(true).append(true).open(path)?;
    file.write_all(&line)?;
    file.sync_data()?;
    Ok(())
}

/// Complete lines of a JSON-Lines file; a trailing partial line is dropped.
fn read_lines<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, CenterError> {
    let text = match fs::read_to_string(path) {
        Ok(text) => text,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(e.into()),
    };
    let complete = match text.rfind('\n') {
        Some(end) => &text[..end],
        None => "",
    };
    complete
        .split('\n')
        .filter(|l| !l.is_empty())
        .enumerate()
        .map(|(i, line)| {
            serde_json::from_str(line)
                .map_err(|e| CenterError::Storage(format!("{} line {}: {e}", path.display(), i + 1)))
        })
        .collect()
}

fn rewrite_lines<T: Serialize>(path: &Path, values: &[T]) -> Result<(), CenterError> {
    let tmp = path.with_extension("tmp");
    {
        let mut file = File::create(&tmp)?;
        for v in values {
            let mut line = serde_json::to_vec(v).map_err(|e| CenterError::Storage(e.to_string()))?;
            line.push(b'\n');
            file.write_all(&line)?;
        }
        file.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

impl Store {
    /// Opens (or initializes) `dir` and loads everything in it.
    pub fn open(dir: &Path) -> Result<(Store, KeyPair, Loaded), CenterError> {
        fs::create_dir_all(dir.join("trains"))?;
        let store = Store { dir: dir.to_path_buf() };
        let key_path = dir.join("center.key");
        let key = if key_path.exists() {
            KeyPair::load(&key_path)?
        } else {
            let key = generate_keypair(KeyRole::ServiceCenter, None);
            key.save(&key_path)?;
            key
        };
        let loaded = store.load()?;
        Ok((store, key, loaded))
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn train_path(&self, train_id: &str) -> PathBuf {
        self.dir.join("trains").join(format!("{train_id}.jsonl"))
    }

    fn ledger_path(&self, train_id: &str) -> PathBuf {
        self.dir.join("trains").join(format!("{train_id}.ledger.jsonl"))
    }

    fn load(&self) -> Result<Loaded, CenterError> {
        let mut loaded = Loaded::default();
        drop_torn_tail(&self.dir.join("stations.jsonl"))?;
        for record in read_lines::<RegistryRecord>(&self.dir.join("stations.jsonl"))? {
            loaded.stations.insert(record.descriptor.station_id.clone(), record);
        }
        let mut entries: Vec<PathBuf> = fs::read_dir(self.dir.join("trains"))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .collect();
        entries.sort();
        for path in entries {
            let name = path.file_name().and_then(|n| n.to_str()).unwrap_or_default().to_string();
            if let Some(train_id) = name.strip_suffix(".ledger.jsonl") {
                // A ledger without any snapshot belongs to a submit that never
                // committed.
                if !self.train_path(train_id).exists() {
                    fs::remove_file(&path)?;
                }
                continue;
            }
            let Some(train_id) = name.strip_suffix(".jsonl") else { continue };
            drop_torn_tail(&path)?;
            drop_torn_tail(&self.ledger_path(train_id))?;
            let Some(snapshot) = read_lines::<Snapshot>(&path)?.pop() else { continue };
            let ledger_path = self.ledger_path(train_id);
            let mut ledger: Vec<AuditEntry> = read_lines(&ledger_path)?;
            let want = snapshot.ledger_len as usize;
            if ledger.len() < want {
                return Err(CenterError::Storage(format!(
                    "ledger for train `{train_id}` has {} entries, snapshot expects {want}",
                    ledger.len()
                )));
            }
            if ledger.len() > want {
                ledger.truncate(want);
                rewrite_lines(&ledger_path, &ledger)?;
            }
            let mut train = snapshot.train;
            train.ledger = ledger;
            loaded.trains.insert(train_id.to_string(), train);
        }
        Ok(loaded)
    }

    pub fn append_station(&self, record: &RegistryRecord) -> Result<(), CenterError> {
        append_line(&self.dir.join("stations.jsonl"), record)
    }

    /// Persists `train` after appending `new_entries` (the tail of
    /// `train.ledger`) to its ledger file.
    pub fn commit_train(&self, train: &TrainRecord, new_entries: &[AuditEntry]) -> Result<(), CenterError> {
        let id = &train.manifest.train_id;
        let ledger_path = self.ledger_path(id);
        for entry in new_entries {
            append_line(&ledger_path, entry)?;
        }
        append_line(
            &self.train_path(id),
            &Snapshot {
                ledger_len: train.ledger.len() as u64,
                train: train.clone(),
            },
        )
    }
}

/// Cuts a file back to its last newline so later appends start clean.
fn drop_torn_tail(path: &Path) -> Result<(), CenterError> {
    let bytes = match fs::read(path) {
        Ok(bytes) => bytes,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(()),
        Err(e) => return Err(e.into()),
    };
    let keep = bytes.iter().rposition(|b| *b == b'\n').map_or(0, |i| i + 1);
    if keep < bytes.len() {
        let file = OpenOptions::new().write(true).open(path)?;
        file.set_len(keep as u64)?;
        file.sync_all()?;
    }
    Ok(())
}
