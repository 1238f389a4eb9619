//! Station configuration (TOML).
//!
//! ```toml
//! station_id = "clinic-a"
//! key_path = "keys/clinic-a.json"
//! center_url = "http://127.0.0.1:7400"
//! poll_interval_secs = 5
//! dataset_path = "data/clinic-a.jsonl"
//! schema_id = "sentiment-v1"
//! auto_approve = false
//! admin_listen = "127.0.0.1:7501"
//! ```

use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::time::Duration;

use padme_core::crypto::KeyId;
use serde::{Deserialize, Serialize};

use crate::error::StationError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationConfig {
    pub station_id: String,
    pub key_path: PathBuf,
    pub center_url: String,
    pub poll_interval_secs: u64,
    pub dataset_path: PathBuf,
    pub schema_id: String,
    /// JSON schema file; builtin schemas are used when absent.
    #[serde(default)]
    pub schema_path: Option<PathBuf>,
    #[serde(default)]
    pub auto_approve: bool,
    #[serde(default)]
    pub admin_listen: Option<SocketAddr>,
    /// Keys allowed to sign approval decisions, besides the station key.
    #[serde(default)]
    pub admin_key_ids: Vec<KeyId>,
    #[serde(default)]
    pub owner_id: Option<String>,
    #[serde(default)]
    pub display_name: Option<String>,
}

impl StationConfig {
    pub fn from_toml(text: &str) -> Result<Self, StationError> {
        let config: Self =
            toml::from_str(text).map_err(|e| StationError::FatalConfig(format!("station config: {e}")))?;
        config.validate()?;
        Ok(config)
    }

    /// Loads a config file; relative paths in it resolve against the file's
    /// directory.
    pub fn load(path: &Path) -> Result<Self, StationError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| StationError::FatalConfig(format!("{}: {e}", path.display())))?;
        let mut config = Self::from_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [&mut config.key_path, &mut config.dataset_path] {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        if let Some(p) = config.schema_path.as_mut().filter(|p| p.is_relative()) {
            *p = base.join(&*p);
        }
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), StationError> {
        if self.station_id.is_empty() {
            return Err(StationError::FatalConfig("station_id must be non-empty".into()));
        }
        if self.poll_interval_secs < 1 {
            return Err(StationError::FatalConfig("poll_interval_secs must be at least 1".into()));
        }
        Ok(())
    }

    pub fn poll_interval(&self) -> Duration {
        Duration::from_secs(self.poll_interval_secs)
    }
}
