//! Data station agent.
//!
//! A station pulls trains addressed to it from the service center, opens
//! them with its own key, trains on its local dataset, and parks the result
//! until a station admin approves it. Only then is the train sealed to the
//! next recipient and pushed back. On the final hop exit control decides
//! whether any result leaves the station at all.
//!
//! Raw rows never leave this process: the center only ever receives hop
//! reports (counts and digests) and envelopes sealed to someone else.

pub mod admin_api;
pub mod agent;
pub mod approval;
pub mod config;
pub mod error;
pub mod executor;
pub mod exit_control;

use std::future::Future;
use std::sync::Arc;

use padme_center::{CenterClient, ClientError, HttpTransport};
use padme_core::crypto::KeyPair;
use padme_tasks::{DatasetSchema, LocalDataset};
use tokio::net::TcpListener;
use tracing::{info, warn};

pub use admin_api::admin_router;
pub use agent::{Clock, HopOutcome, StationAgent};
pub use approval::{ApprovalDecision, ApprovalDesk, DecisionRequest, LocalSummary, PendingApproval};
pub use config::StationConfig;
pub use error::StationError;
pub use executor::execute_task;
pub use exit_control::exit_control_check;

/// Loads the schema named by the config: the schema file when given,
/// otherwise a builtin schema.
pub fn load_schema(config: &StationConfig) -> Result<DatasetSchema, StationError> {
    let schema = match &config.schema_path {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| StationError::FatalConfig(format!("{}: {e}", path.display())))?;
            DatasetSchema::from_json(&text).map_err(|e| StationError::FatalConfig(e.to_string()))?
        }
        None => DatasetSchema::builtin(&config.schema_id)
            .ok_or_else(|| StationError::FatalConfig(format!("unknown schema `{}`", config.schema_id)))?,
    };
    if schema.schema_id != config.schema_id {
        return Err(StationError::FatalConfig(format!(
            "schema file declares `{}`, config says `{}`",
            schema.schema_id, config.schema_id
        )));
    }
    Ok(schema)
}

/// Runs a station from its config until `shutdown` resolves: registers,
/// serves the admin API when configured, and polls the center.
pub async fn run_station(
    config: StationConfig,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> Result<(), StationError> {
    let key = KeyPair::load(&config.key_path)
        .map_err(|e| StationError::FatalConfig(format!("{}: {e}", config.key_path.display())))?;
    let schema = load_schema(&config)?;
    let dataset = LocalDataset::load(&config.dataset_path, schema).map_err(|e| StationError::FatalConfig(e.to_string()))?;
    let key = Arc::new(key);
    let desk = ApprovalDesk::new(key.clone(), config.admin_key_ids.iter().copied(), config.auto_approve);
    let client = CenterClient::new(Arc::new(HttpTransport::new(&config.center_url)), (*key).clone());
    let agent = StationAgent::new(&config.station_id, client, Arc::new(dataset), desk.clone());

    let (stop_tx, stop_rx) = tokio::sync::watch::channel(false);
    let admin = match config.admin_listen {
        Some(addr) => {
            let listener = TcpListener::bind(addr)
                .await
                .map_err(|e| StationError::FatalConfig(format!("admin listen {addr}: {e}")))?;
            info!(addr = %listener.local_addr().map_err(|e| StationError::FatalConfig(e.to_string()))?, "admin api listening");
            let mut rx = stop_rx.clone();
            Some(tokio::spawn(async move {
                let stop = async move {
                    let _ = rx.wait_for(|s| *s).await;
                };
                axum::serve(listener, admin_router(desk)).with_graceful_shutdown(stop).await
            }))
        }
        None => None,
    };

    let display = config.display_name.clone().unwrap_or_else(|| config.station_id.clone());
    let owner = config.owner_id.clone().unwrap_or_else(|| config.station_id.clone());
    let endpoint = config.admin_listen.map(|a| format!("http://{a}")).unwrap_or_default();
    tokio::pin!(shutdown);
    let mut delay = config.poll_interval();
    loop {
        match agent.register(&owner, &endpoint, &display).await {
            Ok(()) => break,
            Err(StationError::Center(ClientError::Transport(e))) => {
                warn!(error = %e, "center unreachable, retrying registration");
                tokio::select! {
                    _ = &mut shutdown => return Ok(()),
                    _ = tokio::time::sleep(delay) => {}
                }
                delay = (delay * 2).min(config.poll_interval() * 10);
            }
            Err(e) => return Err(e),
        }
    }
    info!(station = %config.station_id, "registered with center");

    agent.run(config.poll_interval(), &mut shutdown).await;
    let _ = stop_tx.send(true);
    if let Some(handle) = admin {
        let _ = handle.await;
    }
    Ok(())
}
