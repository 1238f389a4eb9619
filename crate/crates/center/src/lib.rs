//! The service center.
//!
//! The center keeps the station registry, collects unanimous approval for
//! each train, seals the initial model state to the first station, and then
//! only relays ciphertext between stations. It holds no key that opens a
//! post-hop state. Results become available to the researcher only after the
//! last station on the route has pushed and passed exit control. Every state
//! change is appended to a signed, hash-chained ledger per train.

pub mod api;
pub mod auth;
pub mod client;
pub mod config;
pub mod error;
pub mod service;
pub mod store;

use std::future::Future;
use std::time::Duration;

use tokio::net::TcpListener;
use tracing::info;

pub use api::{router, AppState};
pub use client::{CenterClient, ClientError, HttpTransport, LoopbackTransport, Transport};
pub use config::CenterConfig;
pub use error::CenterError;
pub use service::{CenterService, Delivery, ResultsBundle, StatusView};

/// Opens the data directory and builds the shared application state.
pub fn open_state(config: &CenterConfig) -> Result<AppState, CenterError> {
    let service = CenterService::open(&config.data_dir, Duration::from_secs(config.challenge_ttl_secs))?;
    Ok(AppState::new(service))
}

/// Serves the API on `listener` until `shutdown` resolves.
pub async fn serve(
    listener: TcpListener,
    state: AppState,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    info!(addr = %listener.local_addr()?, "center listening");
    axum::serve(listener, router(state)).with_graceful_shutdown(shutdown).await
}
