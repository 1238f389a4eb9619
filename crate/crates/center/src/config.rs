//! Center configuration: a TOML file with environment overrides.
//!
//! ```toml
//! listen = "127.0.0.1:7400"
//! data_dir = "/var/lib/padme/center"
//! challenge_ttl_secs = 60
//! ```
//!
//! `PADME_CENTER_LISTEN`, `PADME_CENTER_DATA_DIR` and
//! `PADME_CENTER_CHALLENGE_TTL` override the file.

use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::CenterError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CenterConfig {
    #[serde(default = "default_listen")]
    pub listen: SocketAddr,
    pub data_dir: PathBuf,
    #[serde(default = "default_ttl")]
    pub challenge_ttl_secs: u64,
}

fn default_listen() -> SocketAddr {
    "127.0.0.1:7400".parse().expect("literal address")
}

fn default_ttl() -> u64 {
    60
}

impl CenterConfig {
    pub fn new(data_dir: impl Into<PathBuf>) -> Self {
        Self {
            listen: default_listen(),
            data_dir: data_dir.into(),
            challenge_ttl_secs: default_ttl(),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self, CenterError> {
        let config: Self = toml::from_str(text).map_err(|e| CenterError::Invalid(format!("center config: {e}")))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, CenterError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CenterError::Invalid(format!("{}: {e}", path.display())))?;
        let mut config = Self::from_toml(&text)?;
        config.apply_overrides(|k| std::env::var(k).ok())?;
        Ok(config)
    }

    pub fn apply_overrides(&mut self, var: impl Fn(&str) -> Option<String>) -> Result<(), CenterError> {
        let bad = |k: &str| CenterError::Invalid(format!("environment variable {k} is malformed"));
        if let Some(v) = var("PADME_CENTER_LISTEN") {
            self.listen = v.parse().map_err(|_| bad("PADME_CENTER_LISTEN"))?;
        }
        if let Some(v) = var("PADME_CENTER_DATA_DIR") {
            self.data_dir = v.into();
        }
        if let Some(v) = var("PADME_CENTER_CHALLENGE_TTL") {
            self.challenge_ttl_secs = v.parse().map_err(|_| bad("PADME_CENTER_CHALLENGE_TTL"))?;
        }
        self.validate()
    }

    pub fn validate(&self) -> Result<(), CenterError> {
        if self.challenge_ttl_secs == 0 {
            return Err(CenterError::Invalid("challenge_ttl_secs must be positive".into()));
        }
        Ok(())
    }
}
